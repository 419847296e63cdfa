#include <catch2/catch_amalgamated.hpp>

#include <dexplan/bench.hpp>
#include <dexplan/cspace.hpp>

#include <cstdlib>
#include <sstream>

using namespace dexplan;

namespace {

const HandModel& test_hand() {
    static HandModel hand = HandModel::load(default_data_dir() + "/allegro_like.json");
    return hand;
}

const ExactOracleField& oracle() {
    static ExactOracleField field(test_hand());
    return field;
}

Vec v2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

int count_lines(const std::string& s) {
    int n = 0;
    for (char c : s) n += c == '\n';
    return n;
}

bool same_points(const PointSet& a, const PointSet& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if ((a[i] - b[i]).norm() != 0.0) return false;
    return true;
}

}  // namespace

TEST_CASE("masked field plans a subset of joints over the full hand") {
    Vec frozen = Vec::Zero(16);
    frozen[0] = 0.9;  // curl the thumb out of the way a bit
    frozen[1] = 0.4;
    const std::vector<int> active{9, 10};
    MaskedField f(oracle(), frozen, active);
    const PointSet X = fibonacci_sphere(Vec3(0.09, 0.0, 0.182), 0.012, 14);

    SECTION("reduced queries agree with hand-embedded full queries") {
        REQUIRE(f.dof() == 2);
        const Vec q = v2(0.7, 0.3);
        Vec full = frozen;
        full[9] = 0.7;
        full[10] = 0.3;
        REQUIRE((f.embed(q) - full).norm() == 0.0);

        const DistQuery masked = f.query(q, X, true);
        const DistQuery direct = oracle().query(full, X, true);
        REQUIRE(masked.d == direct.d);
        REQUIRE(masked.grad_q.size() == 2);
        REQUIRE(masked.grad_q[0] == direct.grad_q[9]);
        REQUIRE(masked.grad_q[1] == direct.grad_q[10]);
        REQUIRE((masked.grad_x - direct.grad_x).norm() == 0.0);
    }

    SECTION("batched queries match singles") {
        Mat Q(2, 5);
        Q << 0.0, 0.3, 0.6, 0.9, 1.2,
             0.2, 0.4, 0.6, 0.8, 1.0;
        const Vec d = f.query_batch(Q, X);
        Vec db;
        Mat G;
        f.query_batch_grad(Q, X, db, G);
        REQUIRE(G.rows() == 2);
        REQUIRE(G.cols() == 5);
        for (int c = 0; c < 5; ++c) {
            const DistQuery single = f.query(Q.col(c), X, true);
            REQUIRE(d[c] == single.d);
            REQUIRE(db[c] == single.d);
            REQUIRE((G.col(c) - single.grad_q).norm() == 0.0);
        }
    }

    SECTION("construction rejects malformed masks") {
        REQUIRE_THROWS_AS(MaskedField(oracle(), Vec::Zero(7), active), std::invalid_argument);
        REQUIRE_THROWS_AS(MaskedField(oracle(), frozen, {}), std::invalid_argument);
        REQUIRE_THROWS_AS(MaskedField(oracle(), frozen, {3, 3}), std::invalid_argument);
        REQUIRE_THROWS_AS(MaskedField(oracle(), frozen, {16}), std::invalid_argument);
        REQUIRE_THROWS_AS(MaskedField(oracle(), frozen, {-1}), std::invalid_argument);
    }
}

TEST_CASE("deterministic obstacle clouds") {
    SECTION("sphere sampling hits the requested radius without RNG") {
        const Vec3 c(0.1, -0.02, 0.15);
        const PointSet a = fibonacci_sphere(c, 0.012, 25);
        REQUIRE(a.size() == 25);
        for (const auto& p : a) REQUIRE((p - c).norm() == Catch::Approx(0.012).epsilon(1e-12));
        REQUIRE(same_points(a, fibonacci_sphere(c, 0.012, 25)));
        REQUIRE_THROWS_AS(fibonacci_sphere(c, 0.012, 0), std::invalid_argument);
        REQUIRE_THROWS_AS(fibonacci_sphere(c, 0.0, 5), std::invalid_argument);
    }

    SECTION("capsule sampling stays on the lateral surface") {
        const Vec3 a(0.09, -0.09, 0.135), b(0.09, 0.115, 0.135);
        const PointSet pts = capsule_surface(a, b, 0.008, 20, 5);
        REQUIRE(pts.size() == 100);
        const Vec3 axis = (b - a).normalized();
        for (const auto& p : pts) {
            const Vec3 r = p - a;
            const double along = r.dot(axis);
            REQUIRE(along >= -1e-12);
            REQUIRE(along <= (b - a).norm() + 1e-12);
            REQUIRE((r - along * axis).norm() == Catch::Approx(0.008).epsilon(1e-12));
        }
        REQUIRE(same_points(pts, capsule_surface(a, b, 0.008, 20, 5)));
        REQUIRE_THROWS_AS(capsule_surface(a, a, 0.008, 20, 5), std::invalid_argument);
        REQUIRE_THROWS_AS(capsule_surface(a, b, 0.008, 1, 5), std::invalid_argument);
    }
}

TEST_CASE("obstacle scripts are pure functions of the cycle index") {
    ObstacleScript s;
    s.base = fibonacci_sphere(Vec3(0.09, 0.0, 0.182), 0.012, 6);

    SECTION("static clouds never move") {
        REQUIRE_FALSE(s.dynamic());
        REQUIRE(same_points(s.at(17), s.base));
    }

    SECTION("linear drift accumulates per cycle") {
        s.motion = "linear";
        s.velocity = Vec3(0.001, 0.0, -0.002);
        REQUIRE(s.dynamic());
        REQUIRE(same_points(s.at(0), s.base));
        const PointSet moved = s.at(3);
        for (std::size_t i = 0; i < moved.size(); ++i)
            REQUIRE((moved[i] - (s.base[i] + 3.0 * s.velocity)).norm() == 0.0);
    }

    SECTION("orbit preserves distance to the axis point") {
        s.motion = "orbit";
        s.center = Vec3(0.09, 0.0, 0.182);
        s.axis = Vec3(0, 1, 0);
        s.omega = 0.1;
        const PointSet moved = s.at(5);
        for (std::size_t i = 0; i < moved.size(); ++i)
            REQUIRE((moved[i] - s.center).norm() ==
                    Catch::Approx((s.base[i] - s.center).norm()).margin(1e-12));
    }

    SECTION("oscillation is sinusoidal and repeatable") {
        s.motion = "oscillate";
        s.direction = Vec3(0, 0, 1);
        s.amplitude = 0.02;
        s.period = 40.0;
        REQUIRE(same_points(s.at(0), s.base));
        const PointSet quarter = s.at(10);
        for (std::size_t i = 0; i < quarter.size(); ++i)
            REQUIRE((quarter[i] - (s.base[i] + Vec3(0, 0, 0.02))).norm() < 1e-12);
        const PointSet half = s.at(20);
        for (std::size_t i = 0; i < half.size(); ++i)
            REQUIRE((half[i] - s.base[i]).norm() < 1e-12);
        REQUIRE(same_points(s.at(7), s.at(7)));
    }

    SECTION("unknown motions are rejected") {
        s.motion = "warp";
        REQUIRE(s.dynamic());
        REQUIRE_THROWS_AS(s.at(1), std::invalid_argument);
    }
}

TEST_CASE("planner configuration from JSON") {
    SECTION("known keys override defaults") {
        const auto j = nlohmann::json::parse(
            R"({"i_max": 50, "goal_bias": 0.2, "seed": 7, "record_trace": true})");
        const PlannerConfig cfg = planner_config_from_json(j);
        REQUIRE(cfg.i_max == 50);
        REQUIRE(cfg.goal_bias == 0.2);
        REQUIRE(cfg.seed == 7);
        REQUIRE(cfg.record_trace);
        REQUIRE(cfg.prm_samples == PlannerConfig{}.prm_samples);
    }

    SECTION("unknown keys and invalid values are rejected") {
        REQUIRE_THROWS_AS(planner_config_from_json(nlohmann::json::parse(R"({"imax": 50})")),
                          std::runtime_error);
        REQUIRE_THROWS_AS(planner_config_from_json(nlohmann::json::parse(R"({"ds_dt": 0.5})")),
                          std::exception);
    }
}

TEST_CASE("canonical scenarios load and validate") {
    const struct {
        const char* name;
        int dof;
        std::size_t cloud;
        bool dynamic;
    } expected[] = {
        {"fig3_2d", 2, 14, false},    {"pocket_2d", 2, 14, false},
        {"fig8_16d", 16, 100, false}, {"regrasp_8d", 8, 100, false},
        {"slide_2d", 2, 14, false},   {"dynamic_2d", 2, 14, true},
        {"dynamic_16d", 16, 100, true},
    };
    for (const auto& e : expected) {
        INFO(e.name);
        const ScenarioSpec spec = ScenarioSpec::load(e.name);
        REQUIRE(spec.name == e.name);
        REQUIRE(spec.dof() == e.dof);
        REQUIRE(spec.obstacles.base.size() == e.cloud);
        REQUIRE(spec.obstacles.dynamic() == e.dynamic);
        REQUIRE_FALSE(spec.planners.empty());
        REQUIRE(spec.trials >= 20);
        for (int i = 0; i < spec.dof(); ++i) {
            REQUIRE(spec.lo[i] < spec.hi[i]);
            REQUIRE(spec.start[i] >= spec.lo[i]);
            REQUIRE(spec.start[i] <= spec.hi[i]);
            REQUIRE(spec.goal[i] >= spec.lo[i]);
            REQUIRE(spec.goal[i] <= spec.hi[i]);
        }
    }

    SECTION("only the pocket scenario carries a stall probe box") {
        REQUIRE(ScenarioSpec::load("pocket_2d").has_probe());
        REQUIRE_FALSE(ScenarioSpec::load("fig3_2d").has_probe());
    }

    SECTION("loading accepts explicit paths and rejects missing names") {
        const std::string path = default_data_dir() + "/scenarios/fig3_2d.json";
        REQUIRE(ScenarioSpec::load(path).name == "fig3_2d");
        REQUIRE_THROWS_AS(ScenarioSpec::load("no_such_scenario"), std::runtime_error);
    }

    SECTION("unknown scenario keys are rejected") {
        auto j = nlohmann::json::parse(R"({
            "name": "x", "active_joints": [9, 10],
            "start": [0.0, 0.0], "goal": [0.5, 0.5], "bogus": 1
        })");
        REQUIRE_THROWS_AS(ScenarioSpec::from_json(j, default_data_dir()), std::runtime_error);
        j.erase("bogus");
        REQUIRE(ScenarioSpec::from_json(j, default_data_dir()).dof() == 2);
    }
}

TEST_CASE("scenario problems wire the scripted cloud") {
    const ScenarioSpec dyn = ScenarioSpec::load("dynamic_2d");
    const MaskedField field = dyn.masked(oracle());
    const PlanProblem prob = make_problem(dyn, field);
    REQUIRE(same_points(prob.obstacles, dyn.obstacles.at(0)));
    REQUIRE(prob.obstacles_at != nullptr);
    REQUIRE(same_points(prob.obstacles_for(10), dyn.obstacles.at(10)));
    REQUIRE_FALSE(same_points(prob.obstacles_for(10), dyn.obstacles.at(0)));

    const ScenarioSpec still = ScenarioSpec::load("fig3_2d");
    const MaskedField sf = still.masked(oracle());
    const PlanProblem sp = make_problem(still, sf);
    REQUIRE(sp.obstacles_at == nullptr);
    REQUIRE(same_points(sp.obstacles_for(5), still.obstacles.base));
}

TEST_CASE("planner comparison pairs trials and reproduces bit-exactly") {
    ScenarioSpec spec = ScenarioSpec::load("fig3_2d");
    spec.trials = 2;
    spec.planners = {"ds_rrt_star", "rrt_star"};
    spec.config.i_max = 300;

    const BenchReport rep = run_benchmark(spec, oracle());
    REQUIRE(rep.scenario == "fig3_2d");
    REQUIRE(rep.planners.size() == 2);
    REQUIRE(rep.row("ds_rrt_star") != nullptr);
    REQUIRE(rep.row("prm_star") == nullptr);

    SECTION("trial seeds are paired across planners") {
        for (int t = 0; t < 2; ++t) {
            REQUIRE(rep.planners[0].trials[t].seed == rep.planners[1].trials[t].seed);
        }
        REQUIRE(rep.planners[0].trials[0].seed != rep.planners[0].trials[1].seed);
    }

    SECTION("records are internally consistent") {
        const double direct = (spec.goal - spec.start).norm();
        for (const auto& pb : rep.planners) {
            REQUIRE(pb.trials.size() == 2);
            for (const auto& t : pb.trials) {
                REQUIRE(t.ms >= 0.0);
                REQUIRE(t.nodes <= spec.config.i_max);
                if (t.success()) REQUIRE(t.length >= direct - 1e-9);
                else REQUIRE(t.length == 0.0);
            }
        }
        REQUIRE(rep.row("ds_rrt_star")->successes() >= 1);
    }

    SECTION("CSV and table outputs cover every planner and trial") {
        std::ostringstream trials, summary;
        rep.write_trials_csv(trials);
        rep.write_summary_csv(summary);
        REQUIRE(count_lines(trials.str()) == 1 + 4);
        REQUIRE(count_lines(summary.str()) == 1 + 2);
        REQUIRE(trials.str().rfind("scenario,planner,trial,seed,status,", 0) == 0);
        REQUIRE(rep.table().find("ds_rrt_star") != std::string::npos);
    }

    SECTION("a rerun reproduces everything except wall-clock times") {
        spec.planners = {"rrt_star"};
        const BenchReport a = run_benchmark(spec, oracle());
        const BenchReport b = run_benchmark(spec, oracle());
        for (int t = 0; t < 2; ++t) {
            const TrialRecord &x = a.planners[0].trials[t], &y = b.planners[0].trials[t];
            REQUIRE(x.seed == y.seed);
            REQUIRE(x.status == y.status);
            REQUIRE(x.length == y.length);
            REQUIRE(x.nodes == y.nodes);
            REQUIRE(x.iterations == y.iterations);
        }
    }
}

TEST_CASE("replan benchmark follows the scripted cloud") {
    ScenarioSpec spec = ScenarioSpec::load("dynamic_2d");
    spec.config.prm_samples = 120;
    const ReplanBench rb = run_replan_benchmark(spec, oracle(), 6);
    REQUIRE(rb.cycles.size() == 6);
    REQUIRE(rb.median_ms() > 0.0);
    REQUIRE(rb.max_ms() >= rb.median_ms());
    REQUIRE(rb.found() >= 5);

    std::ostringstream csv;
    rb.write_csv(csv);
    REQUIRE(count_lines(csv.str()) == 1 + 6);

    REQUIRE_THROWS_AS(run_replan_benchmark(spec, oracle(), 0), std::invalid_argument);
}

TEST_CASE("stall probe separates flow failures from tree failures") {
    ScenarioSpec spec = ScenarioSpec::load("pocket_2d");
    spec.probe_count = 3;
    const StallProbe probe = run_stall_probe(spec, oracle(), /*flow_steps=*/600);
    REQUIRE(probe.seeds.size() == 3);
    REQUIRE(probe.flow_reached.size() == 3);
    REQUIRE(probe.tree_solved.size() == 3);

    const MaskedField field = spec.masked(oracle());
    const PointSet X = spec.obstacles.at(0);
    for (const auto& q : probe.seeds) {
        for (int i = 0; i < spec.dof(); ++i) {
            REQUIRE(q[i] >= spec.probe_lo[i]);
            REQUIRE(q[i] <= spec.probe_hi[i]);
        }
        REQUIRE(field.query(q, X, false).d > spec.config.d_safe);
    }
    // the pocket is built so the pure flow wedges in while the tree gets out
    REQUIRE(probe.flow_failures() == 3);
    REQUIRE(probe.tree_successes() == 3);

    ScenarioSpec no_probe = ScenarioSpec::load("fig3_2d");
    REQUIRE_THROWS_AS(run_stall_probe(no_probe, oracle()), std::invalid_argument);
}

TEST_CASE("field grids export as CSV") {
    const ScenarioSpec spec = ScenarioSpec::load("fig3_2d");

    SECTION("isolines compare two fields cell by cell") {
        std::ostringstream os;
        emit_isolines(os, spec, oracle(), oracle(), 9);
        REQUIRE(count_lines(os.str()) == 1 + 81);
        std::istringstream is(os.str());
        std::string line;
        std::getline(is, line);
        REQUIRE(line == "i,j,q0,q1,d_pred,d_ref,err");
        while (std::getline(is, line)) {
            const auto last = line.rfind(',');
            REQUIRE(std::stod(line.substr(last + 1)) == 0.0);  // pred == ref here
        }
    }

    SECTION("streamlines record the modulated velocity field") {
        std::ostringstream os;
        emit_streamlines(os, spec, oracle(), 7);
        REQUIRE(count_lines(os.str()) == 1 + 49);
        REQUIRE(os.str().rfind("i,j,q0,q1,v0,v1,speed,gamma,d,blocked", 0) == 0);
    }

    SECTION("grids require a two-joint scenario") {
        std::ostringstream os;
        const ScenarioSpec wide = ScenarioSpec::load("fig8_16d");
        REQUIRE_THROWS_AS(emit_isolines(os, wide, oracle(), oracle()), std::invalid_argument);
        REQUIRE_THROWS_AS(emit_streamlines(os, wide, oracle()), std::invalid_argument);
    }
}

TEST_CASE("timing sweep reuses one nested batch") {
    const ScenarioSpec spec = ScenarioSpec::load("fig3_2d");
    const MaskedField field = spec.masked(oracle());
    const PointSet X = spec.obstacles.at(0);
    const std::vector<Eigen::Index> sizes{4, 16};

    const auto rows = timing_comparison(field, field, spec.lo, spec.hi, X, sizes, 3);
    REQUIRE(rows.size() == 2);
    REQUIRE(rows[0].batch == 4);
    REQUIRE(rows[1].batch == 16);
    for (const auto& r : rows) {
        REQUIRE(r.learned_ms >= 0.0);
        REQUIRE(r.check_learned == r.check_oracle);  // identical fields, identical inputs
    }

    std::ostringstream csv;
    write_timing_csv(csv, rows);
    REQUIRE(count_lines(csv.str()) == 1 + 2);

    REQUIRE_THROWS_AS(timing_comparison(field, field, spec.lo, spec.hi, X, {}, 3),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(timing_comparison(field, field, spec.lo, spec.hi, X, {0}, 3),
                      std::invalid_argument);
}

TEST_CASE("scenario sliding pulls the planned path onto the boundary") {
    // slide_2d keeps the whole path inside the film where the object is the
    // nearest obstacle, so every interior waypoint can reach the surface.
    ScenarioSpec spec = ScenarioSpec::load("slide_2d");
    const SlidingPlan sp = run_sliding(spec, oracle());
    REQUIRE(sp.plan.status == PlanStatus::kPathFound);
    REQUIRE(sp.boundary_path.size() == sp.raw_path.size());
    REQUIRE(sp.boundary_path.size() >= 3);

    // endpoints untouched, every interior waypoint on the contact surface
    REQUIRE((sp.boundary_path.front() - spec.start).norm() == 0.0);
    REQUIRE((sp.boundary_path.back() - spec.goal).norm() == 0.0);
    REQUIRE(sp.non_converged == 0);
    for (std::size_t i = 1; i + 1 < sp.boundary_path.size(); ++i) {
        REQUIRE(sp.converged[i] == 1);
        REQUIRE(sp.residuals[i] <= 1e-3);
    }
}
