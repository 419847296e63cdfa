#pragma once
// Scenario-driven benchmarking: JSON scenario files, reduced-DoF planning over
// a frozen hand posture, planner comparisons with paired trial seeds, live
// replanning latency, flow stall probes, field-visualisation grids, and
// batched-query timing sweeps.

#include <dexplan/cspace.hpp>
#include <dexplan/modulation.hpp>
#include <dexplan/planners.hpp>
#include <dexplan/sliding.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace dexplan {

/// Plans a subset of joints while the rest stay frozen: configurations are
/// embedded into the full hand before querying the base field, so frozen
/// fingers still contribute to the minimum distance (they are obstacles the
/// moving fingers must respect). Gradients are the active rows of the full
/// gradient.
class MaskedField final : public DistanceField {
public:
    MaskedField(const DistanceField& base, Vec frozen_q, std::vector<int> active)
        : base_(&base), frozen_(std::move(frozen_q)), active_(std::move(active)) {
        if (frozen_.size() != base_->dof())
            throw std::invalid_argument("MaskedField: frozen configuration has wrong size");
        if (active_.empty()) throw std::invalid_argument("MaskedField: no active joints");
        std::vector<char> seen(std::size_t(base_->dof()), 0);
        for (int j : active_) {
            if (j < 0 || j >= base_->dof() || seen[std::size_t(j)])
                throw std::invalid_argument("MaskedField: bad or duplicate joint index");
            seen[std::size_t(j)] = 1;
        }
    }

    int dof() const override { return int(active_.size()); }
    const std::vector<int>& active() const { return active_; }
    const DistanceField& base() const { return *base_; }

    Vec embed(const Vec& q) const {
        Vec full = frozen_;
        for (std::size_t i = 0; i < active_.size(); ++i) full[active_[i]] = q[Eigen::Index(i)];
        return full;
    }

    Mat embed_batch(const Mat& Q) const {
        Mat full = frozen_.replicate(1, Q.cols());
        for (std::size_t i = 0; i < active_.size(); ++i) full.row(active_[i]) = Q.row(Eigen::Index(i));
        return full;
    }

    DistQuery query(const Vec& q, const PointSet& X, bool want_grad) const override {
        DistQuery r = base_->query(embed(q), X, want_grad);
        if (want_grad && r.grad_q.size() == base_->dof()) {
            Vec g(dof());
            for (std::size_t i = 0; i < active_.size(); ++i) g[Eigen::Index(i)] = r.grad_q[active_[i]];
            r.grad_q = std::move(g);
        }
        return r;
    }

    Vec query_batch(const Mat& Q, const PointSet& X) const override {
        return base_->query_batch(embed_batch(Q), X);
    }

    void query_batch_grad(const Mat& Q, const PointSet& X, Vec& d, Mat& grads) const override {
        Mat gfull;
        base_->query_batch_grad(embed_batch(Q), X, d, gfull);
        grads.resize(dof(), Q.cols());
        for (std::size_t i = 0; i < active_.size(); ++i) grads.row(Eigen::Index(i)) = gfull.row(active_[i]);
    }

private:
    const DistanceField* base_;
    Vec frozen_;
    std::vector<int> active_;
};

// ---------------------------------------------------------------------------
// deterministic obstacle clouds

/// n points on a sphere via the golden-angle spiral; no RNG, so clouds are
/// bit-identical across runs and platforms.
inline PointSet fibonacci_sphere(const Vec3& center, double radius, int n) {
    if (n < 1 || !(radius > 0)) throw std::invalid_argument("bad sphere sampling");
    PointSet out;
    out.reserve(std::size_t(n));
    const double golden = M_PI * (3.0 - std::sqrt(5.0));
    for (int k = 0; k < n; ++k) {
        const double z = 1.0 - 2.0 * (k + 0.5) / n;
        const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double phi = golden * k;
        out.push_back(center + radius * Vec3(rho * std::cos(phi), rho * std::sin(phi), z));
    }
    return out;
}

/// Points on the lateral surface of a capsule (a stick): `rings` circles along
/// the axis, `per_ring` points each, consecutive rings twisted by the golden
/// angle so lines of points do not align.
inline PointSet capsule_surface(const Vec3& a, const Vec3& b, double radius, int rings,
                                int per_ring) {
    if (rings < 2 || per_ring < 1 || !(radius > 0) || (b - a).norm() < 1e-12)
        throw std::invalid_argument("bad capsule sampling");
    const Vec3 axis = (b - a).normalized();
    int least = 0;
    for (int k = 1; k < 3; ++k)
        if (std::abs(axis[k]) < std::abs(axis[least])) least = k;
    const Vec3 u = axis.cross(Vec3::Unit(least)).normalized();
    const Vec3 v = axis.cross(u);
    PointSet out;
    out.reserve(std::size_t(rings) * std::size_t(per_ring));
    const double golden = M_PI * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < rings; ++i) {
        const Vec3 c = a + (double(i) / (rings - 1)) * (b - a);
        const double twist = golden * i;
        for (int j = 0; j < per_ring; ++j) {
            const double th = twist + 2.0 * M_PI * j / per_ring;
            out.push_back(c + radius * (std::cos(th) * u + std::sin(th) * v));
        }
    }
    return out;
}

/// Obstacle cloud with an optional scripted rigid motion. `at(cycle)` is a
/// pure function of the cycle index, which keeps dynamic scenes reproducible.
struct ObstacleScript {
    PointSet base;
    std::string motion = "none";  ///< none | linear | orbit | oscillate
    Vec3 velocity{0, 0, 0};       ///< linear: metres per cycle
    Vec3 center{0, 0, 0};         ///< orbit: a point on the rotation axis
    Vec3 axis{0, 0, 1};           ///< orbit: rotation axis
    double omega = 0.0;           ///< orbit: radians per cycle
    Vec3 direction{0, 0, 1};      ///< oscillate: displacement direction
    double amplitude = 0.0;       ///< oscillate: metres
    double period = 40.0;         ///< oscillate: cycles per full sine

    bool dynamic() const { return motion != "none"; }

    PointSet at(int cycle) const {
        if (motion == "none" || cycle == 0) return base;
        PointSet out = base;
        if (motion == "linear") {
            const Vec3 dx = double(cycle) * velocity;
            for (auto& p : out) p += dx;
        } else if (motion == "orbit") {
            const Eigen::AngleAxisd rot(omega * cycle, axis.normalized());
            for (auto& p : out) p = center + rot * (p - center);
        } else if (motion == "oscillate") {
            const Vec3 dx = amplitude * std::sin(2.0 * M_PI * cycle / period) * direction;
            for (auto& p : out) p += dx;
        } else {
            throw std::invalid_argument("unknown obstacle motion: " + motion);
        }
        return out;
    }
};

// ---------------------------------------------------------------------------
// scenario specification

/// Compile-time data directory, overridable through the environment so
/// installed binaries can point elsewhere.
inline std::string default_data_dir() {
    if (const char* e = std::getenv("DEXPLAN_DATA_DIR")) return e;
#ifdef DEXPLAN_DATA_DIR
    return DEXPLAN_DATA_DIR;
#else
    return ".";
#endif
}

/// Planner configuration from JSON; every key must name a PlannerConfig field.
inline PlannerConfig planner_config_from_json(const nlohmann::json& j, PlannerConfig cfg = {}) {
    for (const auto& [key, val] : j.items()) {
        if (key == "i_max") cfg.i_max = val.get<int>();
        else if (key == "prm_samples") cfg.prm_samples = val.get<int>();
        else if (key == "expansion_batch") cfg.expansion_batch = val.get<int>();
        else if (key == "alpha2") cfg.alpha2 = val.get<double>();
        else if (key == "dq_lower") cfg.dq_lower = val.get<double>();
        else if (key == "dq_upper") cfg.dq_upper = val.get<double>();
        else if (key == "d_safe") cfg.d_safe = val.get<double>();
        else if (key == "goal_eps") cfg.goal_eps = val.get<double>();
        else if (key == "edge_check_resolution") cfg.edge_check_resolution = val.get<double>();
        else if (key == "ds_steps") cfg.ds_steps = val.get<int>();
        else if (key == "ds_dt") cfg.ds_dt = val.get<double>();
        else if (key == "ds_eps") cfg.ds_eps = val.get<double>();
        else if (key == "ds_check_prob") cfg.ds_check_prob = val.get<double>();
        else if (key == "ds_gain") cfg.ds_gain = val.get<double>();
        else if (key == "ds_speed_cap") cfg.ds_speed_cap = val.get<double>();
        else if (key == "alpha1") cfg.alpha1 = val.get<double>();
        else if (key == "beta1") cfg.beta1 = val.get<double>();
        else if (key == "beta2") cfg.beta2 = val.get<double>();
        else if (key == "adjust_iters") cfg.adjust_iters = val.get<int>();
        else if (key == "adjust_tol") cfg.adjust_tol = val.get<double>();
        else if (key == "rewire_radius") cfg.rewire_radius = val.get<double>();
        else if (key == "goal_bias") cfg.goal_bias = val.get<double>();
        else if (key == "seed") cfg.seed = val.get<std::uint64_t>();
        else if (key == "record_trace") cfg.record_trace = val.get<bool>();
        else throw std::runtime_error("unknown planner config key: " + key);
    }
    cfg.validate();
    return cfg;
}

namespace detail {

inline Vec json_vec(const nlohmann::json& j) {
    Vec v(j.size());
    Eigen::Index i = 0;
    for (const auto& x : j) v[i++] = x.get<double>();
    return v;
}

inline Vec3 json_vec3(const nlohmann::json& j) {
    if (j.size() != 3) throw std::runtime_error("expected a 3-vector");
    return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

inline PointSet obstacles_from_json(const nlohmann::json& j) {
    PointSet out;
    for (const auto& [key, val] : j.items()) {
        if (key == "points") {
            for (const auto& p : val) out.push_back(json_vec3(p));
        } else if (key == "spheres") {
            for (const auto& s : val) {
                const PointSet pts = fibonacci_sphere(
                    json_vec3(s.at("center")), s.at("radius").get<double>(),
                    s.value("samples", 20));
                out.insert(out.end(), pts.begin(), pts.end());
            }
        } else if (key == "segments") {
            for (const auto& s : val) {
                const PointSet pts = capsule_surface(
                    json_vec3(s.at("a")), json_vec3(s.at("b")), s.at("radius").get<double>(),
                    s.value("rings", 12), s.value("per_ring", 6));
                out.insert(out.end(), pts.begin(), pts.end());
            }
        } else {
            throw std::runtime_error("unknown obstacle key: " + key);
        }
    }
    return out;
}

inline ObstacleScript motion_from_json(const nlohmann::json& j, ObstacleScript s) {
    for (const auto& [key, val] : j.items()) {
        if (key == "type") s.motion = val.get<std::string>();
        else if (key == "velocity") s.velocity = json_vec3(val);
        else if (key == "center") s.center = json_vec3(val);
        else if (key == "axis") s.axis = json_vec3(val);
        else if (key == "omega") s.omega = val.get<double>();
        else if (key == "direction") s.direction = json_vec3(val);
        else if (key == "amplitude") s.amplitude = val.get<double>();
        else if (key == "period") s.period = val.get<double>();
        else throw std::runtime_error("unknown motion key: " + key);
    }
    if (s.motion != "none" && s.motion != "linear" && s.motion != "orbit" &&
        s.motion != "oscillate")
        throw std::runtime_error("unknown obstacle motion: " + s.motion);
    return s;
}

}  // namespace detail

/// A complete benchmark scenario: which joints move, where they go, what is in
/// the way, and how the comparison is run.
struct ScenarioSpec {
    std::string name;
    std::string description;
    HandModel hand;
    std::vector<int> active;  ///< planned joint indices, in reduced-coordinate order
    Vec frozen_q;             ///< full-dof posture supplying the frozen joints
    Vec start, goal;          ///< reduced coordinates
    Vec lo, hi;               ///< reduced sampling bounds
    ObstacleScript obstacles;
    std::vector<std::string> planners;
    PlannerConfig config;
    int trials = 20;
    std::uint64_t seed = 0;
    Vec probe_lo, probe_hi;  ///< optional start-sampling box for stall probes
    int probe_count = 20;

    int dof() const { return int(active.size()); }
    bool has_probe() const { return probe_lo.size() == dof() && probe_hi.size() == dof(); }

    MaskedField masked(const DistanceField& full) const {
        if (full.dof() != hand.dof())
            throw std::invalid_argument("field dof does not match the scenario hand");
        return MaskedField(full, frozen_q, active);
    }

    void validate() const {
        const int k = dof();
        if (k < 1) throw std::runtime_error("scenario has no active joints");
        if (start.size() != k || goal.size() != k || lo.size() != k || hi.size() != k)
            throw std::runtime_error("scenario endpoint/bound sizes disagree");
        if (frozen_q.size() != hand.dof()) throw std::runtime_error("frozen_q has wrong size");
        if (trials < 1) throw std::runtime_error("trials must be positive");
        for (const auto& p : planners)
            if (std::find(planner_names().begin(), planner_names().end(), p) ==
                planner_names().end())
                throw std::runtime_error("unknown planner in scenario: " + p);
        config.validate();
    }

    static ScenarioSpec from_json(const nlohmann::json& j, const std::string& data_dir) {
        static const std::vector<std::string> known{
            "name",      "description", "hand",   "active_joints", "frozen_q",
            "start",     "goal",        "lo",     "hi",            "obstacles",
            "motion",    "planners",    "config", "trials",        "seed",
            "probe"};
        for (const auto& [key, val] : j.items()) {
            (void)val;
            if (std::find(known.begin(), known.end(), key) == known.end())
                throw std::runtime_error("unknown scenario key: " + key);
        }
        ScenarioSpec s;
        s.name = j.value("name", "unnamed");
        s.description = j.value("description", "");
        const std::string hand_file = j.value("hand", "allegro_like.json");
        namespace fs = std::filesystem;
        const fs::path hp = fs::exists(hand_file) ? fs::path(hand_file)
                                                  : fs::path(data_dir) / hand_file;
        s.hand = HandModel::load(hp.string());

        if (j.contains("active_joints"))
            for (const auto& a : j.at("active_joints")) s.active.push_back(a.get<int>());
        else
            for (int i = 0; i < s.hand.dof(); ++i) s.active.push_back(i);

        if (j.contains("frozen_q")) {
            if (j.at("frozen_q").is_number())
                s.frozen_q = Vec::Constant(s.hand.dof(), j.at("frozen_q").get<double>());
            else
                s.frozen_q = detail::json_vec(j.at("frozen_q"));
        } else {
            s.frozen_q = Vec::Zero(s.hand.dof());
        }

        s.start = detail::json_vec(j.at("start"));
        s.goal = detail::json_vec(j.at("goal"));
        const Vec full_lo = s.hand.lower_limits(), full_hi = s.hand.upper_limits();
        if (j.contains("lo")) s.lo = detail::json_vec(j.at("lo"));
        else {
            s.lo.resize(Eigen::Index(s.active.size()));
            for (std::size_t i = 0; i < s.active.size(); ++i) s.lo[Eigen::Index(i)] = full_lo[s.active[i]];
        }
        if (j.contains("hi")) s.hi = detail::json_vec(j.at("hi"));
        else {
            s.hi.resize(Eigen::Index(s.active.size()));
            for (std::size_t i = 0; i < s.active.size(); ++i) s.hi[Eigen::Index(i)] = full_hi[s.active[i]];
        }

        if (j.contains("obstacles")) s.obstacles.base = detail::obstacles_from_json(j.at("obstacles"));
        if (j.contains("motion")) s.obstacles = detail::motion_from_json(j.at("motion"), s.obstacles);
        s.planners = j.contains("planners")
                         ? j.at("planners").get<std::vector<std::string>>()
                         : planner_names();
        if (j.contains("config")) s.config = planner_config_from_json(j.at("config"));
        s.trials = j.value("trials", 20);
        s.seed = j.value("seed", std::uint64_t(0));
        if (j.contains("probe")) {
            const auto& p = j.at("probe");
            s.probe_lo = detail::json_vec(p.at("lo"));
            s.probe_hi = detail::json_vec(p.at("hi"));
            s.probe_count = p.value("count", 20);
        }
        s.validate();
        return s;
    }

    /// Accepts either a path to a JSON file or a bare scenario name resolved
    /// against <data_dir>/scenarios/<name>.json.
    static ScenarioSpec load(const std::string& name_or_path,
                             const std::string& data_dir = default_data_dir()) {
        namespace fs = std::filesystem;
        fs::path p(name_or_path);
        if (!fs::exists(p)) p = fs::path(data_dir) / "scenarios" / (name_or_path + ".json");
        if (!fs::exists(p))
            throw std::runtime_error("scenario not found: " + name_or_path);
        return from_json(nlohmann::json::parse(read_text_file(p.string())), data_dir);
    }
};

/// Planning instance over an already-masked field. The returned problem keeps
/// a pointer to `field`; the field must outlive it.
inline PlanProblem make_problem(const ScenarioSpec& spec, const DistanceField& field) {
    PlanProblem p;
    p.field = &field;
    p.start = spec.start;
    p.goal = spec.goal;
    p.lo = spec.lo;
    p.hi = spec.hi;
    p.obstacles = spec.obstacles.at(0);
    if (spec.obstacles.dynamic()) {
        const ObstacleScript script = spec.obstacles;
        p.obstacles_at = [script](int cycle) { return script.at(cycle); };
    }
    p.validate();
    return p;
}

// ---------------------------------------------------------------------------
// planner comparison

struct TrialRecord {
    int trial = 0;
    std::uint64_t seed = 0;
    PlanStatus status = PlanStatus::kNoPath;
    double ms = 0.0;
    double length = 0.0;
    int nodes = 0;
    int iterations = 0;

    bool success() const { return status == PlanStatus::kPathFound; }
};

namespace detail {

inline double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0;
    for (double x : v) s += x;
    return s / double(v.size());
}

inline double stddev_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / double(v.size() - 1));
}

inline std::string fmt(const char* f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

}  // namespace detail

struct PlannerBench {
    std::string planner;
    std::vector<TrialRecord> trials;

    int successes() const {
        return int(std::count_if(trials.begin(), trials.end(),
                                 [](const TrialRecord& t) { return t.success(); }));
    }
    double success_rate() const {
        return trials.empty() ? 0.0 : double(successes()) / double(trials.size());
    }
    std::vector<double> success_values(double TrialRecord::*field) const {
        std::vector<double> v;
        for (const auto& t : trials)
            if (t.success()) v.push_back(t.*field);
        return v;
    }
    double mean_ms() const { return detail::mean_of(success_values(&TrialRecord::ms)); }
    double std_ms() const { return detail::stddev_of(success_values(&TrialRecord::ms)); }
    double mean_length() const { return detail::mean_of(success_values(&TrialRecord::length)); }
    double std_length() const { return detail::stddev_of(success_values(&TrialRecord::length)); }
};

struct BenchReport {
    std::string scenario;
    int trials = 0;
    std::uint64_t seed = 0;
    std::vector<PlannerBench> planners;

    const PlannerBench* row(const std::string& name) const {
        for (const auto& p : planners)
            if (p.planner == name) return &p;
        return nullptr;
    }

    /// One row per (planner, trial).
    void write_trials_csv(std::ostream& os) const {
        os << "scenario,planner,trial,seed,status,time_ms,path_length,nodes,iterations\n";
        for (const auto& p : planners)
            for (const auto& t : p.trials)
                os << scenario << ',' << p.planner << ',' << t.trial << ',' << to_hex(t.seed)
                   << ',' << to_string(t.status) << ',' << detail::fmt("%.3f", t.ms) << ','
                   << detail::fmt("%.17g", t.length) << ',' << t.nodes << ',' << t.iterations
                   << '\n';
    }

    /// One row per planner; statistics over successful trials, blank if none.
    void write_summary_csv(std::ostream& os) const {
        os << "scenario,planner,trials,successes,success_rate,mean_ms,std_ms,mean_length,"
              "std_length\n";
        for (const auto& p : planners) {
            os << scenario << ',' << p.planner << ',' << p.trials.size() << ',' << p.successes()
               << ',' << detail::fmt("%.4f", p.success_rate()) << ',';
            if (p.successes() > 0)
                os << detail::fmt("%.3f", p.mean_ms()) << ',' << detail::fmt("%.3f", p.std_ms())
                   << ',' << detail::fmt("%.6f", p.mean_length()) << ','
                   << detail::fmt("%.6f", p.std_length());
            else
                os << ",,,";
            os << '\n';
        }
    }

    std::string table() const {
        std::ostringstream os;
        char line[160];
        std::snprintf(line, sizeof line, "%-18s %8s %22s %22s %8s\n", "planner", "success",
                      "time ms (mean+-std)", "length rad (mean+-std)", "nodes");
        os << "scenario: " << scenario << "  (" << trials << " trials, seed " << seed << ")\n"
           << line;
        for (const auto& p : planners) {
            std::string tm = "-", ln = "-";
            if (p.successes() > 0) {
                tm = detail::fmt("%.1f", p.mean_ms()) + " +- " + detail::fmt("%.1f", p.std_ms());
                ln = detail::fmt("%.3f", p.mean_length()) + " +- " +
                     detail::fmt("%.3f", p.std_length());
            }
            std::vector<double> nodes;
            for (const auto& t : p.trials) nodes.push_back(double(t.nodes));
            std::snprintf(line, sizeof line, "%-18s %8.2f %22s %22s %8.0f\n", p.planner.c_str(),
                          p.success_rate(), tm.c_str(), ln.c_str(), detail::mean_of(nodes));
            os << line;
        }
        return os.str();
    }
};

/// Runs every planner in the scenario over `trials` independent instances.
/// Trial t uses the same derived seed for every planner, so per-trial
/// comparisons are paired. Obstacles are the cycle-0 snapshot.
inline BenchReport run_benchmark(const ScenarioSpec& spec, const DistanceField& full,
                                 std::ostream* progress = nullptr) {
    spec.validate();
    const MaskedField field = spec.masked(full);
    const PlanProblem prob = make_problem(spec, field);
    BenchReport rep;
    rep.scenario = spec.name;
    rep.trials = spec.trials;
    rep.seed = spec.seed;
    for (const auto& name : spec.planners) {
        PlannerBench pb;
        pb.planner = name;
        for (int t = 0; t < spec.trials; ++t) {
            PlannerConfig cfg = spec.config;
            cfg.seed = derive_seed(spec.seed, std::uint64_t(t));
            const PlanResult r = plan_by_name(name, prob, cfg);
            pb.trials.push_back({t, cfg.seed, r.status, r.compute_ms, r.path_length, r.nodes,
                                 r.iterations});
            if (progress) {
                *progress << (r.status == PlanStatus::kPathFound ? '.' : 'x');
                progress->flush();
            }
        }
        if (progress) *progress << ' ' << name << '\n';
        rep.planners.push_back(std::move(pb));
    }
    return rep;
}

// ---------------------------------------------------------------------------
// live replanning latency

struct ReplanBench {
    std::vector<ReplanStats> cycles;

    double median_ms() const {
        if (cycles.empty()) return 0.0;
        std::vector<double> ms;
        for (const auto& c : cycles) ms.push_back(c.ms);
        std::sort(ms.begin(), ms.end());
        const std::size_t n = ms.size();
        return n % 2 ? ms[n / 2] : 0.5 * (ms[n / 2 - 1] + ms[n / 2]);
    }
    double max_ms() const {
        double m = 0;
        for (const auto& c : cycles) m = std::max(m, c.ms);
        return m;
    }
    int found() const {
        return int(std::count_if(cycles.begin(), cycles.end(),
                                 [](const ReplanStats& c) { return c.path_found; }));
    }

    void write_csv(std::ostream& os) const {
        os << "cycle,ms,path_found,adjusted,path_length\n";
        for (std::size_t i = 0; i < cycles.size(); ++i)
            os << i << ',' << detail::fmt("%.3f", cycles[i].ms) << ','
               << int(cycles[i].path_found) << ',' << cycles[i].adjusted << ','
               << detail::fmt("%.6f", cycles[i].path_length) << '\n';
    }
};

/// Per-cycle replanning latency against the scenario's scripted cloud: one
/// roadmap built up front, then classify + adjust + re-search each cycle. The
/// robot stays at the start so every cycle searches a comparable instance;
/// the moving cloud is what changes the work.
inline ReplanBench run_replan_benchmark(const ScenarioSpec& spec, const DistanceField& full,
                                        int ncycles) {
    spec.validate();
    if (ncycles < 1) throw std::invalid_argument("need at least one replan cycle");
    const MaskedField field = spec.masked(full);
    const PlanProblem prob = make_problem(spec, field);
    PointSet X_prev = prob.obstacles_for(0);
    Roadmap rm = build_roadmap(prob, spec.config, X_prev, true);
    ReplanBench out;
    for (int cycle = 0; cycle < ncycles; ++cycle) {
        const PointSet X = prob.obstacles_for(cycle);
        PointSet shift(X.size(), Vec3::Zero());
        if (X.size() == X_prev.size())
            for (std::size_t i = 0; i < X.size(); ++i) shift[i] = X[i] - X_prev[i];
        out.cycles.push_back(replan_cycle(rm, field, X, spec.config, &shift));
        X_prev = X;
    }
    return out;
}

// ---------------------------------------------------------------------------
// flow stall probe

/// For seeds drawn from the scenario's probe box: does the pure modulated
/// flow reach the goal, and does the flow-guided tree? A pocket scenario is
/// one where some flows stall but the tree still solves every seed.
struct StallProbe {
    std::vector<Vec> seeds;
    std::vector<char> flow_reached;
    std::vector<char> tree_solved;

    int flow_failures() const {
        return int(std::count(flow_reached.begin(), flow_reached.end(), 0));
    }
    int tree_successes() const {
        return int(std::count(tree_solved.begin(), tree_solved.end(), 1));
    }
};

inline StallProbe run_stall_probe(const ScenarioSpec& spec, const DistanceField& full,
                                  int flow_steps = 3000) {
    spec.validate();
    if (!spec.has_probe()) throw std::invalid_argument("scenario has no probe box");
    const MaskedField field = spec.masked(full);
    const PlanProblem base = make_problem(spec, field);
    const PointSet X = base.obstacles_for(0);
    Rng rng(derive_seed(spec.seed, fnv1a64("stall-probe")));
    const LinearDS ds = LinearDS::attractor(spec.goal, spec.config.ds_gain);
    const ModulationParams mp = spec.config.modulation();

    StallProbe out;
    int attempts = 0;
    while (int(out.seeds.size()) < spec.probe_count) {
        if (++attempts > 100 * spec.probe_count)
            throw std::runtime_error("probe box contains almost no free configurations");
        const Vec q0 = rng.uniform_vec(spec.probe_lo, spec.probe_hi);
        if (field.query(q0, X, false).d <= spec.config.d_safe) continue;  // want free seeds
        out.seeds.push_back(q0);
        const Rollout r = integrate(ds, mp, field, q0, X, flow_steps, spec.config.ds_dt,
                                    spec.config.ds_eps, spec.config.ds_speed_cap);
        out.flow_reached.push_back(char(r.reached && r.min_d > 0));
        PlanProblem p = base;
        p.start = q0;
        PlannerConfig cfg = spec.config;
        cfg.seed = derive_seed(spec.seed, 0x517a11ull + out.seeds.size());
        const PlanResult res = plan_ds_guided_rrt_star(p, cfg);
        out.tree_solved.push_back(char(res.status == PlanStatus::kPathFound));
    }
    return out;
}

// ---------------------------------------------------------------------------
// field grids (visualisation / inspection)

/// Distance over a 2-joint grid from two fields side by side (typically the
/// learned model against the exact oracle). CSV columns: grid indices, the
/// two joint values, both distances, and their difference.
inline void emit_isolines(std::ostream& os, const ScenarioSpec& spec, const DistanceField& pred,
                          const DistanceField& ref, int resolution = 81) {
    spec.validate();
    if (spec.dof() != 2) throw std::invalid_argument("isoline grids need a 2-joint scenario");
    if (resolution < 2) throw std::invalid_argument("resolution must be at least 2");
    const MaskedField fp = spec.masked(pred);
    const MaskedField fr = spec.masked(ref);
    const PointSet X = spec.obstacles.at(0);

    Mat Q(2, Eigen::Index(resolution) * resolution);
    for (int i = 0; i < resolution; ++i) {
        const double q0 = spec.lo[0] + (spec.hi[0] - spec.lo[0]) * i / (resolution - 1);
        for (int j = 0; j < resolution; ++j) {
            const double q1 = spec.lo[1] + (spec.hi[1] - spec.lo[1]) * j / (resolution - 1);
            Q.col(Eigen::Index(i) * resolution + j) = Eigen::Vector2d(q0, q1);
        }
    }
    const Vec dp = fp.query_batch(Q, X);
    const Vec dr = fr.query_batch(Q, X);
    os << "i,j,q0,q1,d_pred,d_ref,err\n";
    for (int i = 0; i < resolution; ++i)
        for (int j = 0; j < resolution; ++j) {
            const Eigen::Index k = Eigen::Index(i) * resolution + j;
            os << i << ',' << j << ',' << detail::fmt("%.9g", Q(0, k)) << ','
               << detail::fmt("%.9g", Q(1, k)) << ',' << detail::fmt("%.9g", dp[k]) << ','
               << detail::fmt("%.9g", dr[k]) << ',' << detail::fmt("%.9g", dp[k] - dr[k])
               << '\n';
        }
}

/// Modulated-flow field over a 2-joint grid: the deflected velocity toward the
/// scenario goal in every cell, plus the boundary function. Cells at or inside
/// the safety margin (gamma <= 1) are flagged.
inline void emit_streamlines(std::ostream& os, const ScenarioSpec& spec,
                             const DistanceField& full, int resolution = 41) {
    spec.validate();
    if (spec.dof() != 2) throw std::invalid_argument("streamline grids need a 2-joint scenario");
    if (resolution < 2) throw std::invalid_argument("resolution must be at least 2");
    const MaskedField field = spec.masked(full);
    const PointSet X = spec.obstacles.at(0);
    const LinearDS ds = LinearDS::attractor(spec.goal, spec.config.ds_gain);
    const ModulationParams mp = spec.config.modulation();

    os << "i,j,q0,q1,v0,v1,speed,gamma,d,blocked\n";
    for (int i = 0; i < resolution; ++i) {
        const double q0 = spec.lo[0] + (spec.hi[0] - spec.lo[0]) * i / (resolution - 1);
        for (int j = 0; j < resolution; ++j) {
            const double q1 = spec.lo[1] + (spec.hi[1] - spec.lo[1]) * j / (resolution - 1);
            const ModulationResult m = modulation(ds, mp, field, Eigen::Vector2d(q0, q1), X);
            os << i << ',' << j << ',' << detail::fmt("%.9g", q0) << ','
               << detail::fmt("%.9g", q1) << ',' << detail::fmt("%.9g", m.velocity[0]) << ','
               << detail::fmt("%.9g", m.velocity[1]) << ','
               << detail::fmt("%.9g", m.velocity.norm()) << ',' << detail::fmt("%.9g", m.gamma)
               << ',' << detail::fmt("%.9g", m.d) << ',' << int(m.gamma <= 1.0) << '\n';
        }
    }
}

// ---------------------------------------------------------------------------
// batched-query timing

struct TimingRow {
    Eigen::Index batch = 0;
    double learned_ms = 0.0;
    double oracle_ms = 0.0;
    double check_learned = 0.0;  ///< value sums; also keep the work observable
    double check_oracle = 0.0;
};

/// Wall time of batched value queries at increasing batch sizes, learned field
/// against the exact oracle on identical inputs. Configurations are drawn
/// uniformly in [lo, hi] once and reused as prefixes, so the series is nested.
inline std::vector<TimingRow> timing_comparison(const DistanceField& learned,
                                                const DistanceField& oracle, const Vec& lo,
                                                const Vec& hi, const PointSet& X,
                                                const std::vector<Eigen::Index>& sizes,
                                                std::uint64_t seed) {
    if (sizes.empty()) throw std::invalid_argument("no batch sizes given");
    if (lo.size() != learned.dof() || hi.size() != learned.dof() ||
        oracle.dof() != learned.dof())
        throw std::invalid_argument("timing bounds/fields disagree");
    const Eigen::Index nmax = *std::max_element(sizes.begin(), sizes.end());
    Rng rng(derive_seed(seed, fnv1a64("timing-sweep")));
    Mat Q(lo.size(), nmax);
    for (Eigen::Index c = 0; c < nmax; ++c) Q.col(c) = rng.uniform_vec(lo, hi);

    (void)learned.query_batch(Q.leftCols(std::min<Eigen::Index>(8, nmax)), X);  // warm up
    std::vector<TimingRow> rows;
    for (const Eigen::Index n : sizes) {
        if (n < 1 || n > nmax) throw std::invalid_argument("bad batch size");
        TimingRow row;
        row.batch = n;
        auto t0 = std::chrono::steady_clock::now();
        const Vec dl = learned.query_batch(Q.leftCols(n), X);
        auto t1 = std::chrono::steady_clock::now();
        const Vec dr = oracle.query_batch(Q.leftCols(n), X);
        auto t2 = std::chrono::steady_clock::now();
        row.learned_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        row.oracle_ms = std::chrono::duration<double, std::milli>(t2 - t1).count();
        row.check_learned = dl.sum();
        row.check_oracle = dr.sum();
        rows.push_back(row);
    }
    return rows;
}

inline void write_timing_csv(std::ostream& os, const std::vector<TimingRow>& rows) {
    os << "batch,learned_ms,oracle_ms,learned_us_per_query,oracle_us_per_query\n";
    for (const auto& r : rows)
        os << r.batch << ',' << detail::fmt("%.3f", r.learned_ms) << ','
           << detail::fmt("%.3f", r.oracle_ms) << ','
           << detail::fmt("%.4f", 1e3 * r.learned_ms / double(r.batch)) << ','
           << detail::fmt("%.4f", 1e3 * r.oracle_ms / double(r.batch)) << '\n';
}

// ---------------------------------------------------------------------------
// sliding over a scenario

/// Contact-path generation for a scenario: plan with the scenario's planner
/// budget, then pull the path onto the obstacle boundary.
inline SlidingPlan run_sliding(const ScenarioSpec& spec, const DistanceField& full,
                               SlidingConfig cfg = {}) {
    spec.validate();
    const MaskedField field = spec.masked(full);
    const PlanProblem prob = make_problem(spec, field);
    cfg.plan = spec.config;
    return plan_sliding(prob, cfg);
}

}  // namespace dexplan
