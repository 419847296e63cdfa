#pragma once

// Sampling-based planners over a distance field: flow-guided RRT*, plain and
// variable-step RRT* baselines, PRM* and a dynamically updating PRM* variant,
// plus the shared utilities they build on (variable step sizing, boundary
// projection, batched edge checking).

#include <dexplan/modulation.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <unordered_map>
#include <utility>
#include <vector>

namespace dexplan {

enum class PlanStatus { kPathFound, kNoPath, kBudgetExhausted };

inline const char* to_string(PlanStatus s) {
    switch (s) {
        case PlanStatus::kPathFound: return "path-found";
        case PlanStatus::kNoPath: return "no-path";
        default: return "budget-exhausted";
    }
}

struct PlannerConfig {
    int i_max = 1000;          ///< node budget for tree planners
    int prm_samples = 200;     ///< roadmap samples (start/goal added on top)
    int expansion_batch = 32;  ///< configurations sampled per tree iteration

    double alpha2 = 0.5;    ///< variable-step distance fraction, in (0, 1)
    double dq_lower = 0.01; ///< extension step bounds, radians
    double dq_upper = 0.5;
    double d_safe = 0.005;  ///< clearance margin, meters
    double goal_eps = 0.05; ///< goal-reach tolerance, radians
    double edge_check_resolution = 0.05; ///< interior sample spacing, radians

    // Rollout of the modulated attractor used as the solution test.
    int ds_steps = 50;
    double ds_dt = 0.01;
    double ds_eps = 0.05;       ///< rollout-reach tolerance, radians
    double ds_check_prob = 0.1; ///< revalidation probability once a path exists
    double ds_gain = 20.0;      ///< attractor gain of the solution-check flow
    double ds_speed_cap = 10.0; ///< rad/s; bounds rollout step length
    double alpha1 = 20.0;       ///< boundary-function slope for modulation

    // Boundary projection (roadmap node adjustment, sliding).
    double beta1 = 0.5; ///< projection damping, in (0, 1]
    double beta2 = 1.5; ///< roadmap safety factor applied to d_safe
    int adjust_iters = 10;
    double adjust_tol = 1e-3;

    double rewire_radius = 0.0; ///< 0 selects a shrinking radius from the volume
    double goal_bias = 0.05;    ///< fraction of tree samples drawn at the goal
    std::uint64_t seed = 0;
    bool record_trace = false;

    void validate() const {
        if (i_max < 1) throw std::invalid_argument("i_max must be positive");
        if (prm_samples < 1) throw std::invalid_argument("prm_samples must be positive");
        if (expansion_batch < 1) throw std::invalid_argument("expansion_batch must be positive");
        if (!(alpha2 > 0 && alpha2 < 1)) throw std::invalid_argument("alpha2 must be in (0,1)");
        if (!(dq_lower > 0 && dq_lower <= dq_upper))
            throw std::invalid_argument("step bounds must satisfy 0 < dq_lower <= dq_upper");
        if (!(goal_eps > 0)) throw std::invalid_argument("goal_eps must be positive");
        if (!(edge_check_resolution > 0))
            throw std::invalid_argument("edge_check_resolution must be positive");
        if (ds_steps < 1) throw std::invalid_argument("ds_steps must be positive");
        if (!(ds_dt > 0 && ds_dt <= 0.01))
            throw std::invalid_argument("ds_dt must be in (0, 0.01]");
        if (!(ds_eps > 0)) throw std::invalid_argument("ds_eps must be positive");
        if (!(ds_check_prob >= 0 && ds_check_prob <= 1))
            throw std::invalid_argument("ds_check_prob must be in [0,1]");
        if (!(ds_gain > 0)) throw std::invalid_argument("ds_gain must be positive");
        if (!(ds_speed_cap > 0)) throw std::invalid_argument("ds_speed_cap must be positive");
        if (!(beta1 > 0 && beta1 <= 1)) throw std::invalid_argument("beta1 must be in (0,1]");
        if (!(beta2 >= 1)) throw std::invalid_argument("beta2 must be >= 1");
        if (adjust_iters < 1) throw std::invalid_argument("adjust_iters must be positive");
        if (!(adjust_tol > 0)) throw std::invalid_argument("adjust_tol must be positive");
        if (rewire_radius < 0) throw std::invalid_argument("rewire_radius must be >= 0");
        if (!(goal_bias >= 0 && goal_bias < 1))
            throw std::invalid_argument("goal_bias must be in [0,1)");
    }

    ModulationParams modulation() const {
        ModulationParams p;
        p.alpha1 = alpha1;
        p.d_safe = d_safe;
        return p;
    }
};

/// A planning instance: field, endpoints, sampling box, and the obstacle
/// cloud (optionally scripted per cycle for dynamic scenes).
struct PlanProblem {
    const DistanceField* field = nullptr;
    Vec start;
    Vec goal;
    Vec lo; ///< per-joint sampling bounds
    Vec hi;
    PointSet obstacles;
    std::function<PointSet(int)> obstacles_at; ///< optional; overrides `obstacles`

    PointSet obstacles_for(int cycle) const {
        return obstacles_at ? obstacles_at(cycle) : obstacles;
    }

    void validate() const {
        if (!field) throw std::invalid_argument("plan problem has no distance field");
        const Eigen::Index d = field->dof();
        if (start.size() != d || goal.size() != d || lo.size() != d || hi.size() != d)
            throw std::invalid_argument("plan problem dimensions disagree with the field");
        for (Eigen::Index i = 0; i < d; ++i)
            if (!(lo[i] < hi[i])) throw std::invalid_argument("sampling bounds must be ordered");
    }
};

struct PlanResult {
    PlanStatus status = PlanStatus::kNoPath;
    std::vector<Vec> waypoints; ///< starts at q_a; ends within goal_eps of q_g on success
    double path_length = 0.0;   ///< sum of joint-space segment norms, radians
    double compute_ms = 0.0;    ///< wall clock until the first feasible path (or give-up)
    int nodes = 0;              ///< final tree/roadmap size
    int iterations = 0;
    std::vector<std::pair<int, int>> trace; ///< (iteration, node count), if recorded
};

inline double path_length(const std::vector<Vec>& wps) {
    double s = 0;
    for (std::size_t i = 1; i < wps.size(); ++i) s += (wps[i] - wps[i - 1]).norm();
    return s;
}

/// Inserts evenly spaced intermediate waypoints so no segment exceeds
/// `spacing`. Original waypoints are preserved bit-identically.
inline std::vector<Vec> densify_path(const std::vector<Vec>& wps, double spacing) {
    if (!(spacing > 0)) throw std::invalid_argument("spacing must be positive");
    std::vector<Vec> out;
    if (wps.empty()) return out;
    out.push_back(wps[0]);
    for (std::size_t i = 1; i < wps.size(); ++i) {
        const Vec& a = wps[i - 1];
        const Vec& b = wps[i];
        const double len = (b - a).norm();
        const int pieces = std::max(1, int(std::ceil(len / spacing)));
        for (int k = 1; k < pieces; ++k) out.push_back(a + (double(k) / pieces) * (b - a));
        out.push_back(b);
    }
    return out;
}

// ---------------------------------------------------------------------------
// step-size and projection primitives

/// Distance-adaptive extension step toward q_rand. Moving up the distance
/// gradient is unconstrained (full step); moving down it, the step is sized so
/// the linear model predicts arrival at alpha2*d above the safety margin:
/// dq = (d_safe - alpha2*d) / <n_q, grad>, clamped to [dq_lower, dq_upper].
inline double variable_step(const Vec& q_nearest, const Vec& q_rand, double d, const Vec& grad,
                            const PlannerConfig& cfg) {
    Vec n_q = q_rand - q_nearest;
    const double len = n_q.norm();
    if (len < 1e-12) return cfg.dq_lower;
    n_q /= len;
    const double slope = n_q.dot(grad);
    // Non-negative slope (including the perpendicular limit) keeps clearance.
    if (slope >= -1e-12) return cfg.dq_upper;
    return std::clamp((cfg.d_safe - cfg.alpha2 * d) / slope, cfg.dq_lower, cfg.dq_upper);
}

/// One damped Newton step of the scalar constraint d(q) = target along the
/// distance gradient (least-norm update). `predicted_shift` is the first-order
/// change of d due to an anticipated obstacle displacement, <grad_x, dx>.
inline Vec boundary_step(const Vec& q, double d, const Vec& grad, double target, double beta1,
                         double predicted_shift = 0.0) {
    const double g2 = grad.squaredNorm();
    if (g2 < 1e-16) return q;
    return q - beta1 * (d - target - predicted_shift) * grad / g2;
}

struct ProjectionResult {
    Vec q;
    double d = 0.0;       ///< field value at the final q
    int iters = 0;        ///< Newton steps taken
    bool converged = false;
    std::vector<double> residuals; ///< |d - target| before each step and at exit
};

/// Iterates boundary_step until |d(q) - target| < tol or the step budget is
/// exhausted. `shift` optionally supplies per-point obstacle displacements;
/// only the attaining point's displacement enters the prediction term.
inline ProjectionResult project_to_distance(const DistanceField& field, const Vec& q0,
                                            const PointSet& X, double target, double beta1,
                                            int max_iters, double tol,
                                            const PointSet* shift = nullptr) {
    ProjectionResult r;
    r.q = q0;
    for (int it = 0; it <= max_iters; ++it) {
        const DistQuery s = field.query(r.q, X, true);
        double predicted = 0.0;
        if (shift && s.argmin_point >= 0 && std::size_t(s.argmin_point) < shift->size())
            predicted = s.grad_x.dot((*shift)[std::size_t(s.argmin_point)]);
        r.d = s.d;
        const double err = s.d - target - predicted;
        r.residuals.push_back(std::abs(err));
        if (std::abs(err) < tol) {
            r.converged = true;
            return r;
        }
        if (it == max_iters || s.grad_q.squaredNorm() < 1e-16) return r;
        r.q = boundary_step(r.q, s.d, s.grad_q, target, beta1, predicted);
        ++r.iters;
    }
    return r;
}

// ---------------------------------------------------------------------------
// batched edge checking

/// Interior samples of segment a->b spaced at most `res` apart (endpoints
/// excluded; they are classified as nodes).
inline int edge_interior_count(const Vec& a, const Vec& b, double res) {
    return std::max(0, int(std::ceil((b - a).norm() / res)) - 1);
}

/// Validates many edges with one batched field query. An edge is free when
/// every interior sample clears `threshold`.
inline std::vector<char> edges_free(const DistanceField& field, const PointSet& X,
                                    const std::vector<std::pair<Vec, Vec>>& edges, double res,
                                    double threshold) {
    std::vector<char> free(edges.size(), 1);
    Eigen::Index total = 0;
    std::vector<int> counts(edges.size());
    for (std::size_t e = 0; e < edges.size(); ++e) {
        counts[e] = edge_interior_count(edges[e].first, edges[e].second, res);
        total += counts[e];
    }
    if (total == 0) return free;
    const Eigen::Index dof = edges[0].first.size();
    Mat S(dof, total);
    Eigen::Index c = 0;
    for (std::size_t e = 0; e < edges.size(); ++e) {
        const Vec& a = edges[e].first;
        const Vec& b = edges[e].second;
        const int pieces = counts[e] + 1;
        for (int k = 1; k <= counts[e]; ++k) S.col(c++) = a + (double(k) / pieces) * (b - a);
    }
    const Vec d = field.query_batch(S, X);
    c = 0;
    for (std::size_t e = 0; e < edges.size(); ++e)
        for (int k = 0; k < counts[e]; ++k)
            if (d[c++] <= threshold) free[e] = 0;
    return free;
}

inline bool edge_free(const DistanceField& field, const PointSet& X, const Vec& a, const Vec& b,
                      double res, double threshold) {
    return edges_free(field, X, {{a, b}}, res, threshold)[0] != 0;
}

// ---------------------------------------------------------------------------
// tree planners

struct TreeNode {
    Vec q;
    int parent = -1; ///< -1: root, kOrphan: detached by an invalidated edge
    double cost = 0.0;
    double d = 0.0; ///< field value at q (last classification)
    Vec grad;       ///< field gradient at q
    bool collided = false;
    bool collided_prev = false;
    std::vector<int> children;
};

class Tree {
public:
    static constexpr int kOrphan = -2;

    explicit Tree(const Vec& root_q) {
        TreeNode n;
        n.q = root_q;
        n.grad = Vec::Zero(root_q.size());
        nodes_.push_back(std::move(n));
    }

    int size() const { return int(nodes_.size()); }
    int root() const { return root_; }
    const TreeNode& node(int i) const { return nodes_[std::size_t(i)]; }
    TreeNode& node(int i) { return nodes_[std::size_t(i)]; }
    const std::vector<TreeNode>& nodes() const { return nodes_; }

    int add(const Vec& q, int parent) {
        TreeNode n;
        n.q = q;
        n.parent = parent;
        n.grad = Vec::Zero(q.size());
        n.cost = nodes_[std::size_t(parent)].cost + (q - nodes_[std::size_t(parent)].q).norm();
        nodes_.push_back(std::move(n));
        const int id = int(nodes_.size()) - 1;
        nodes_[std::size_t(parent)].children.push_back(id);
        return id;
    }

    bool connected(int i) const { return std::isfinite(nodes_[std::size_t(i)].cost); }

    /// Moves `id` under `new_parent` and refreshes subtree costs.
    void reparent(int id, int new_parent) {
        TreeNode& n = nodes_[std::size_t(id)];
        if (n.parent >= 0) {
            auto& sib = nodes_[std::size_t(n.parent)].children;
            sib.erase(std::remove(sib.begin(), sib.end(), id), sib.end());
        }
        n.parent = new_parent;
        nodes_[std::size_t(new_parent)].children.push_back(id);
        refresh_costs(id);
    }

    /// Detaches `id` from its parent; the whole subtree becomes unreachable
    /// (infinite cost) until some node re-attaches it via reparent().
    void orphan(int id) {
        TreeNode& n = nodes_[std::size_t(id)];
        if (n.parent >= 0) {
            auto& sib = nodes_[std::size_t(n.parent)].children;
            sib.erase(std::remove(sib.begin(), sib.end(), id), sib.end());
        }
        n.parent = kOrphan;
        refresh_costs(id);
    }

    /// Recomputes costs of `id` and its descendants from the stored parents.
    void refresh_costs(int id) {
        TreeNode& n = nodes_[std::size_t(id)];
        if (id == root_) {
            n.cost = 0.0;
        } else if (n.parent == kOrphan || !std::isfinite(nodes_[std::size_t(n.parent)].cost)) {
            n.cost = std::numeric_limits<double>::infinity();
        } else {
            n.cost = nodes_[std::size_t(n.parent)].cost + (n.q - nodes_[std::size_t(n.parent)].q).norm();
        }
        for (int c : n.children) refresh_costs(c);
    }

    /// Re-roots the tree at `new_root` (must currently be connected): parent
    /// pointers along the root path are reversed and costs recomputed.
    void reroot(int new_root) {
        if (new_root == root_) return;
        std::vector<int> chain = path_to_root(new_root); // root .. new_root
        for (std::size_t i = chain.size(); i-- > 1;) {
            const int child = chain[i];
            const int parent = chain[i - 1];
            auto& pc = nodes_[std::size_t(parent)].children;
            pc.erase(std::remove(pc.begin(), pc.end(), child), pc.end());
            nodes_[std::size_t(child)].children.push_back(parent);
            nodes_[std::size_t(parent)].parent = child;
        }
        nodes_[std::size_t(new_root)].parent = -1;
        root_ = new_root;
        refresh_costs(root_);
    }

    /// Node ids from the root to `id`, inclusive.
    std::vector<int> path_to_root(int id) const {
        std::vector<int> out;
        for (int cur = id; cur >= 0; cur = nodes_[std::size_t(cur)].parent) out.push_back(cur);
        std::reverse(out.begin(), out.end());
        return out;
    }

    /// Maximum |stored cost - recomputed cost| over connected nodes: the
    /// consistency invariant maintained by every reparent/orphan/reroot.
    double max_cost_defect() const {
        double worst = 0.0;
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            const TreeNode& n = nodes_[i];
            if (!std::isfinite(n.cost)) continue;
            double expect = 0.0;
            if (int(i) != root_) {
                if (n.parent < 0) return std::numeric_limits<double>::infinity();
                const TreeNode& p = nodes_[std::size_t(n.parent)];
                if (!std::isfinite(p.cost)) return std::numeric_limits<double>::infinity();
                expect = p.cost + (n.q - p.q).norm();
            }
            worst = std::max(worst, std::abs(n.cost - expect));
        }
        return worst;
    }

private:
    std::vector<TreeNode> nodes_;
    int root_ = 0;
};

/// Shrinking near-neighbour radius from the sampling volume (with the step
/// bound as a floor so a new node's parent is always inside its near set).
inline double near_radius(const PlannerConfig& cfg, const Vec& lo, const Vec& hi, int n) {
    if (cfg.rewire_radius > 0) return cfg.rewire_radius;
    const int d = int(lo.size());
    const double mu = (hi - lo).prod();
    const double zeta = std::pow(M_PI, d / 2.0) / std::tgamma(d / 2.0 + 1.0);
    const double gamma = 2.0 * std::pow((1.0 + 1.0 / d) * mu / zeta, 1.0 / d);
    const int m = std::max(n, 2);
    return std::max(gamma * std::pow(std::log(double(m)) / double(m), 1.0 / d), cfg.dq_upper);
}

/// Flow-based solution test: rolls the modulated attractor out from every
/// candidate node (previously verified seeds plus new ones) and returns the
/// ids whose rollout reaches the goal without leaving free space.
inline std::vector<int> ds_solution_check(const DistanceField& field, const PointSet& X,
                                          const Tree& tree, const std::vector<int>& candidates,
                                          const Vec& q_goal, const PlannerConfig& cfg) {
    std::vector<int> verified;
    if (candidates.empty()) return verified;
    const LinearDS ds = LinearDS::attractor(q_goal, cfg.ds_gain);
    Mat Q0(q_goal.size(), Eigen::Index(candidates.size()));
    for (std::size_t k = 0; k < candidates.size(); ++k)
        Q0.col(Eigen::Index(k)) = tree.node(candidates[k]).q;
    const BatchRollout roll = integrate_batch(ds, cfg.modulation(), field, Q0, X, cfg.ds_steps,
                                              cfg.ds_dt, cfg.ds_eps, cfg.ds_speed_cap);
    for (std::size_t k = 0; k < candidates.size(); ++k)
        if (roll.reached[k] && roll.min_d[Eigen::Index(k)] > 0) verified.push_back(candidates[k]);
    return verified;
}

/// Next action for the robot given the current tree and verified seeds:
/// stay (no verified seed), take one flow step (best seed is the root), or
/// follow the tree path to the best seed.
struct StepDecision {
    enum class Kind { kStay, kFlowStep, kFollowPath };
    Kind kind = Kind::kStay;
    int target = -1;
    std::vector<int> path; ///< root .. target when following
};

inline StepDecision find_feasible_path(const Tree& tree, const std::vector<int>& verified) {
    StepDecision out;
    double best = std::numeric_limits<double>::infinity();
    for (int id : verified) {
        const TreeNode& n = tree.node(id);
        if (n.collided || !std::isfinite(n.cost)) continue;
        if (n.cost < best) {
            best = n.cost;
            out.target = id;
        }
    }
    if (out.target < 0) return out;
    if (out.target == tree.root()) {
        out.kind = StepDecision::Kind::kFlowStep;
        return out;
    }
    out.kind = StepDecision::Kind::kFollowPath;
    out.path = tree.path_to_root(out.target);
    return out;
}

enum class RrtMode { kFixedStep, kVariableStep, kDsGuided };

/// RRT* engine shared by the baselines and the flow-guided planner. Batch
/// expansion, choose-best-parent, and rewiring are common; the modes differ in
/// step sizing and in how a solution is detected (goal ball vs flow rollout).
class RrtPlanner {
public:
    RrtPlanner(const PlanProblem& prob, const PlannerConfig& cfg, RrtMode mode)
        : prob_(prob),
          cfg_(cfg),
          mode_(mode),
          sample_rng_(derive_seed(cfg.seed, fnv1a64("rrt-sample"))),
          coin_rng_(derive_seed(cfg.seed, fnv1a64("rrt-coin"))),
          tree_(prob.start) {
        prob_.validate();
        cfg_.validate();
    }

    const Tree& tree() const { return tree_; }

    /// Plans against the cycle-0 obstacle set and stops at the first feasible
    /// path (the reported time is time-to-first-solution).
    PlanResult plan() {
        const auto t0 = std::chrono::steady_clock::now();
        PlanResult res;
        const PointSet X = prob_.obstacles_for(0);
        classify_root(X);
        if (tree_.node(0).collided) throw std::invalid_argument("start configuration is not free");
        if (prob_.field->query(prob_.goal, X, false).d <= cfg_.d_safe) {
            res.status = PlanStatus::kNoPath;
            res.nodes = tree_.size();
            res.compute_ms = elapsed_ms(t0);
            res.waypoints = {prob_.start};
            return res;
        }

        std::vector<int> verified; // flow-verified seeds (kDsGuided only)
        while (tree_.size() < cfg_.i_max && res.iterations < cfg_.i_max) {
            ++res.iterations;
            const std::vector<int> fresh = expand(X);
            if (cfg_.record_trace) res.trace.emplace_back(res.iterations, tree_.size());

            if (mode_ == RrtMode::kDsGuided) {
                std::vector<int> candidates = verified;
                candidates.push_back(tree_.root());
                candidates.insert(candidates.end(), fresh.begin(), fresh.end());
                std::sort(candidates.begin(), candidates.end());
                candidates.erase(std::unique(candidates.begin(), candidates.end()),
                                 candidates.end());
                verified = ds_solution_check(*prob_.field, X, tree_, candidates, prob_.goal, cfg_);
                if (finish_with_flow(X, verified, res)) {
                    res.compute_ms = elapsed_ms(t0);
                    res.nodes = tree_.size();
                    return res;
                }
            } else {
                if (finish_in_goal_ball(X, fresh, res)) {
                    res.compute_ms = elapsed_ms(t0);
                    res.nodes = tree_.size();
                    return res;
                }
            }
        }
        res.status = PlanStatus::kNoPath;
        res.nodes = tree_.size();
        res.compute_ms = elapsed_ms(t0);
        res.waypoints = {prob_.start};
        res.path_length = 0.0;
        return res;
    }

    /// Scripted-obstacle mode: replans and steps the robot once per cycle.
    /// The returned waypoints are the executed robot trace.
    PlanResult run_live(int max_cycles) {
        const auto t0 = std::chrono::steady_clock::now();
        PlanResult res;
        Vec q_a = prob_.start;
        std::vector<Vec> trace{q_a};
        std::vector<int> verified;
        const ModulationParams mp = cfg_.modulation();
        const LinearDS ds = LinearDS::attractor(prob_.goal, cfg_.ds_gain);

        for (int cycle = 0; cycle < max_cycles; ++cycle) {
            ++res.iterations;
            const PointSet X = prob_.obstacles_for(cycle);
            if (cycle == 0) {
                classify_root(X);
                if (tree_.node(0).collided)
                    throw std::invalid_argument("start configuration is not free");
            } else {
                reclassify(X);
                revalidate_edges(X);
                rewire_changed(X);
            }

            if ((q_a - prob_.goal).norm() <= cfg_.goal_eps) {
                res.status = PlanStatus::kPathFound;
                break;
            }

            // Expand while nothing is verified; once a path exists, re-check it
            // with the configured probability (the environment may invalidate it).
            std::vector<int> fresh;
            if (verified.empty()) fresh = expand(X);
            const bool recheck = verified.empty() || coin_rng_.uniform() < cfg_.ds_check_prob;
            if (recheck) {
                std::vector<int> candidates = verified;
                candidates.push_back(tree_.root());
                candidates.insert(candidates.end(), fresh.begin(), fresh.end());
                std::sort(candidates.begin(), candidates.end());
                candidates.erase(std::unique(candidates.begin(), candidates.end()),
                                 candidates.end());
                verified = ds_solution_check(*prob_.field, X, tree_, candidates, prob_.goal, cfg_);
            } else {
                // Drop seeds whose nodes were invalidated by the scene update.
                std::vector<int> still;
                for (int id : verified)
                    if (!tree_.node(id).collided && tree_.connected(id)) still.push_back(id);
                verified.swap(still);
            }

            const StepDecision dec = find_feasible_path(tree_, verified);
            switch (dec.kind) {
                case StepDecision::Kind::kStay:
                    break;
                case StepDecision::Kind::kFlowStep: {
                    const ModulationResult m = modulation(ds, mp, *prob_.field, q_a, X);
                    Vec v = m.velocity;
                    const double speed = v.norm();
                    if (speed > cfg_.ds_speed_cap) v *= cfg_.ds_speed_cap / speed;
                    q_a += cfg_.ds_dt * v;
                    tree_.node(tree_.root()).q = q_a;
                    tree_.refresh_costs(tree_.root());
                    trace.push_back(q_a);
                    break;
                }
                case StepDecision::Kind::kFollowPath: {
                    const int next = dec.path[1];
                    const Vec& target = tree_.node(next).q;
                    const double dist = (target - q_a).norm();
                    if (dist <= cfg_.dq_upper) {
                        q_a = target;
                        tree_.reroot(next);
                    } else {
                        q_a += (cfg_.dq_upper / dist) * (target - q_a);
                        tree_.node(tree_.root()).q = q_a;
                        tree_.refresh_costs(tree_.root());
                    }
                    trace.push_back(q_a);
                    break;
                }
            }
        }
        if (res.status != PlanStatus::kPathFound) res.status = PlanStatus::kBudgetExhausted;
        res.waypoints = std::move(trace);
        res.path_length = dexplan::path_length(res.waypoints);
        res.nodes = tree_.size();
        res.compute_ms = elapsed_ms(t0);
        return res;
    }

private:
    static double elapsed_ms(std::chrono::steady_clock::time_point t0) {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    }

    void classify_root(const PointSet& X) {
        const DistQuery r = prob_.field->query(prob_.start, X, true);
        TreeNode& n = tree_.node(0);
        n.d = r.d;
        n.grad = r.grad_q;
        n.collided = r.d <= cfg_.d_safe;
        n.collided_prev = n.collided;
    }

    /// Batch-reclassifies every node against the current obstacle set.
    void reclassify(const PointSet& X) {
        const int n = tree_.size();
        Mat Q(prob_.start.size(), n);
        for (int i = 0; i < n; ++i) Q.col(i) = tree_.node(i).q;
        Vec d;
        Mat grads;
        prob_.field->query_batch_grad(Q, X, d, grads);
        for (int i = 0; i < n; ++i) {
            TreeNode& node = tree_.node(i);
            node.collided_prev = node.collided;
            node.d = d[i];
            node.grad = grads.col(i);
            node.collided = d[i] <= cfg_.d_safe;
        }
    }

    /// Re-checks every tree edge against the current obstacles and orphans
    /// the child of each edge that is no longer free.
    void revalidate_edges(const PointSet& X) {
        std::vector<std::pair<Vec, Vec>> edges;
        std::vector<int> child_of;
        for (int i = 0; i < tree_.size(); ++i) {
            const TreeNode& n = tree_.node(i);
            if (n.parent < 0) continue;
            edges.emplace_back(tree_.node(n.parent).q, n.q);
            child_of.push_back(i);
        }
        const std::vector<char> ok =
            edges_free(*prob_.field, X, edges, cfg_.edge_check_resolution, cfg_.d_safe);
        for (std::size_t e = 0; e < edges.size(); ++e) {
            const int child = child_of[e];
            const TreeNode& n = tree_.node(child);
            if (!ok[e] || n.collided || tree_.node(n.parent).collided) tree_.orphan(child);
        }
    }

    /// Tries to (re-)attach nodes whose collision state changed, plus orphans,
    /// to their best free near-neighbour parent.
    void rewire_changed(const PointSet& X) {
        std::vector<int> pending;
        for (int i = 0; i < tree_.size(); ++i) {
            const TreeNode& n = tree_.node(i);
            if (i == tree_.root()) continue;
            if (n.collided != n.collided_prev || n.parent == Tree::kOrphan) pending.push_back(i);
        }
        for (int id : pending) {
            if (tree_.node(id).collided) continue;
            choose_parent(id, X);
        }
    }

    /// Lowest-cost connected free node within the near radius of `q` whose
    /// edge to `q` is collision-free, or -1. When `moving` is a node id, its
    /// descendants are excluded so reparenting cannot create a cycle.
    int best_free_parent(const Vec& q, const PointSet& X, int moving = -1) const {
        const double r = near_radius(cfg_, prob_.lo, prob_.hi, tree_.size());
        std::vector<std::pair<double, int>> order; // (cost through candidate, id)
        for (int i = 0; i < tree_.size(); ++i) {
            if (i == moving) continue;
            const TreeNode& n = tree_.node(i);
            if (n.collided || !tree_.connected(i)) continue;
            const double dist = (n.q - q).norm();
            if (dist > r) continue;
            order.emplace_back(n.cost + dist, i);
        }
        std::sort(order.begin(), order.end());
        for (const auto& [through, cand] : order) {
            if (moving >= 0 && descends_from(cand, moving)) continue;
            if (edge_free(*prob_.field, X, tree_.node(cand).q, q, cfg_.edge_check_resolution,
                          cfg_.d_safe))
                return cand;
        }
        return -1;
    }

    /// Re-attaches or improves the parent of an existing node.
    void choose_parent(int id, const PointSet& X) {
        const TreeNode& n = tree_.node(id);
        const int cand = best_free_parent(n.q, X, id);
        if (cand < 0) return;
        const double through = tree_.node(cand).cost + (tree_.node(cand).q - n.q).norm();
        if (n.parent == Tree::kOrphan || through < n.cost - 1e-12) tree_.reparent(id, cand);
    }

    bool descends_from(int node, int ancestor) const {
        for (int cur = node; cur >= 0; cur = tree_.node(cur).parent)
            if (cur == ancestor) return true;
        return false;
    }

    /// One expansion round: sample a batch, extend from the nearest free nodes
    /// with the mode's step rule, insert collision-free extensions with their
    /// best parent, then rewire around the insertions.
    std::vector<int> expand(const PointSet& X) {
        const Eigen::Index dof = prob_.start.size();
        const int m = cfg_.expansion_batch;
        Mat fresh_q(dof, m);
        int n_fresh = 0;
        for (int s = 0; s < m; ++s) {
            const bool biased = sample_rng_.uniform() < cfg_.goal_bias;
            const Vec q_rand = biased ? prob_.goal : sample_rng_.uniform_vec(prob_.lo, prob_.hi);
            const int near = nearest_free(q_rand);
            if (near < 0) continue;
            const TreeNode& nn = tree_.node(near);
            double step;
            if (mode_ == RrtMode::kFixedStep) {
                step = std::min(cfg_.dq_upper, (q_rand - nn.q).norm());
            } else {
                step = variable_step(nn.q, q_rand, nn.d, nn.grad, cfg_);
                step = std::min(step, (q_rand - nn.q).norm());
            }
            const double len = (q_rand - nn.q).norm();
            if (len < 1e-12 || step < 1e-12) continue;
            fresh_q.col(n_fresh) = nn.q + (step / len) * (q_rand - nn.q);
            ++n_fresh;
        }
        std::vector<int> inserted;
        if (n_fresh == 0) return inserted;

        Vec d;
        Mat grads;
        prob_.field->query_batch_grad(fresh_q.leftCols(n_fresh), X, d, grads);
        for (int k = 0; k < n_fresh && tree_.size() < cfg_.i_max; ++k) {
            if (d[k] <= cfg_.d_safe) continue;
            const int parent = best_free_parent(fresh_q.col(k), X);
            if (parent < 0) continue;
            const int id = tree_.add(fresh_q.col(k), parent);
            TreeNode& node = tree_.node(id);
            node.d = d[k];
            node.grad = grads.col(k);
            node.collided = false;
            node.collided_prev = false;
            inserted.push_back(id);
        }
        for (int id : inserted) rewire_around(id, X);
        return inserted;
    }

    /// RRT* rewiring: routes near nodes through `id` when that shortens their
    /// path and the connecting edge is free. Candidates are capped to the
    /// closest few and their edges validated in one batched query.
    void rewire_around(int id, const PointSet& X) {
        if (!tree_.connected(id)) return;
        const double r = near_radius(cfg_, prob_.lo, prob_.hi, tree_.size());
        const Vec m_q = tree_.node(id).q;
        const double m_cost = tree_.node(id).cost;
        std::vector<std::pair<double, int>> cand; // (distance, node)
        for (int i = 0; i < tree_.size(); ++i) {
            if (i == id || i == tree_.root()) continue;
            const TreeNode& x = tree_.node(i);
            if (x.collided) continue;
            const double dist = (x.q - m_q).norm();
            if (dist > r) continue;
            if (m_cost + dist >= x.cost - 1e-12) continue;
            if (descends_from(id, i)) continue;
            cand.emplace_back(dist, i);
        }
        constexpr std::size_t kMaxRewire = 32;
        if (cand.size() > kMaxRewire) {
            std::partial_sort(cand.begin(), cand.begin() + kMaxRewire, cand.end());
            cand.resize(kMaxRewire);
        }
        std::vector<std::pair<Vec, Vec>> edges;
        edges.reserve(cand.size());
        for (const auto& [dist, i] : cand) edges.emplace_back(m_q, tree_.node(i).q);
        const std::vector<char> ok =
            edges_free(*prob_.field, X, edges, cfg_.edge_check_resolution, cfg_.d_safe);
        for (std::size_t k = 0; k < cand.size(); ++k) {
            const int i = cand[k].second;
            if (!ok[k]) continue;
            // Re-test: earlier reparents in this loop may have changed costs.
            const double dist = cand[k].first;
            if (m_cost + dist >= tree_.node(i).cost - 1e-12) continue;
            if (descends_from(id, i)) continue;
            tree_.reparent(i, id);
        }
    }

    int nearest_free(const Vec& q) const {
        int best = -1;
        double best_d = std::numeric_limits<double>::infinity();
        for (int i = 0; i < tree_.size(); ++i) {
            const TreeNode& n = tree_.node(i);
            if (n.collided || !tree_.connected(i)) continue;
            const double dist = (n.q - q).norm();
            if (dist < best_d) {
                best_d = dist;
                best = i;
            }
        }
        return best;
    }

    /// Baseline solution test: a fresh node inside the goal ball. The goal
    /// itself is appended when the final hop is free.
    bool finish_in_goal_ball(const PointSet& X, const std::vector<int>& fresh, PlanResult& res) {
        int hit = -1;
        double best = std::numeric_limits<double>::infinity();
        for (int id : fresh) {
            const double dist = (tree_.node(id).q - prob_.goal).norm();
            if (dist <= cfg_.goal_eps && tree_.node(id).cost + dist < best) {
                best = tree_.node(id).cost + dist;
                hit = id;
            }
        }
        if (hit < 0) return false;
        res.waypoints.clear();
        for (int id : tree_.path_to_root(hit)) res.waypoints.push_back(tree_.node(id).q);
        if ((res.waypoints.back() - prob_.goal).norm() > 1e-12 &&
            edge_free(*prob_.field, X, res.waypoints.back(), prob_.goal,
                      cfg_.edge_check_resolution, cfg_.d_safe))
            res.waypoints.push_back(prob_.goal);
        res.path_length = dexplan::path_length(res.waypoints);
        res.status = PlanStatus::kPathFound;
        return true;
    }

    /// Flow-guided solution: tree path to the cheapest verified seed plus the
    /// rollout tail. The tail is densified and collision-checked before the
    /// path is accepted; seeds whose tail fails are discarded.
    bool finish_with_flow(const PointSet& X, std::vector<int>& verified, PlanResult& res) {
        std::vector<std::pair<double, int>> order;
        for (int id : verified) {
            const TreeNode& n = tree_.node(id);
            if (n.collided || !tree_.connected(id)) continue;
            order.emplace_back(n.cost, id);
        }
        std::sort(order.begin(), order.end());
        const LinearDS ds = LinearDS::attractor(prob_.goal, cfg_.ds_gain);
        for (const auto& [cost, id] : order) {
            const Rollout roll = integrate(ds, cfg_.modulation(), *prob_.field, tree_.node(id).q,
                                           X, cfg_.ds_steps, cfg_.ds_dt, cfg_.ds_eps,
                                           cfg_.ds_speed_cap);
            if (!roll.reached || roll.min_d <= 0) {
                drop(verified, id);
                continue;
            }
            std::vector<Vec> tail;
            double acc = 0.0;
            tail.push_back(roll.traj.col(0));
            for (Eigen::Index c = 1; c < roll.traj.cols(); ++c) {
                acc += (roll.traj.col(c) - roll.traj.col(c - 1)).norm();
                if (acc >= cfg_.edge_check_resolution || c + 1 == roll.traj.cols()) {
                    tail.push_back(roll.traj.col(c));
                    acc = 0.0;
                }
            }
            std::vector<std::pair<Vec, Vec>> segs;
            for (std::size_t k = 1; k < tail.size(); ++k) segs.emplace_back(tail[k - 1], tail[k]);
            bool tail_ok = true;
            if (!segs.empty()) {
                // The flow legitimately rides the safety margin, so the tail is
                // held to strict collision-freedom rather than the full margin.
                for (char ok : edges_free(*prob_.field, X, segs, cfg_.edge_check_resolution, 0.0))
                    if (!ok) tail_ok = false;
            }
            if (!tail_ok) {
                drop(verified, id);
                continue;
            }
            res.waypoints.clear();
            for (int nid : tree_.path_to_root(id)) res.waypoints.push_back(tree_.node(nid).q);
            res.waypoints.insert(res.waypoints.end(), tail.begin() + 1, tail.end());
            // The rollout stops within ds_eps of the goal; land exactly on it
            // when the remaining hop is free.
            if ((res.waypoints.back() - prob_.goal).norm() > 1e-12 &&
                edge_free(*prob_.field, X, res.waypoints.back(), prob_.goal,
                          cfg_.edge_check_resolution, 0.0))
                res.waypoints.push_back(prob_.goal);
            res.path_length = dexplan::path_length(res.waypoints);
            res.status = PlanStatus::kPathFound;
            return true;
        }
        return false;
    }

    static void drop(std::vector<int>& v, int id) {
        v.erase(std::remove(v.begin(), v.end(), id), v.end());
    }

    PlanProblem prob_;
    PlannerConfig cfg_;
    RrtMode mode_;
    Rng sample_rng_;
    Rng coin_rng_;
    Tree tree_;
};

// ---------------------------------------------------------------------------
// roadmap planners

struct RoadmapNode {
    Vec q;
    double d = 0.0;
    bool free = false;
};

struct Roadmap {
    std::vector<RoadmapNode> nodes; ///< [0]=start, [1]=goal, then samples
    std::vector<std::vector<int>> adj; ///< symmetric kNN union

    void check_symmetric() const {
        for (std::size_t i = 0; i < adj.size(); ++i)
            for (int j : adj[i]) {
                const auto& back = adj[std::size_t(j)];
                if (std::find(back.begin(), back.end(), int(i)) == back.end())
                    throw std::logic_error("roadmap adjacency is not symmetric");
            }
    }
};

/// Neighbour count for n roadmap nodes (asymptotically optimal kNN rule).
inline int prm_knn_k(int n) {
    return int(std::ceil(2.0 * std::exp(1.0) * std::log(double(std::max(n, 2)))));
}

/// Rebuilds the symmetric kNN adjacency from node positions.
inline void rebuild_adjacency(Roadmap& rm) {
    const int n = int(rm.nodes.size());
    const int k = std::min(prm_knn_k(n), n - 1);
    rm.adj.assign(std::size_t(n), {});
    std::vector<std::pair<double, int>> dist;
    for (int i = 0; i < n; ++i) {
        dist.clear();
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            dist.emplace_back((rm.nodes[std::size_t(i)].q - rm.nodes[std::size_t(j)].q).norm(), j);
        }
        std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
        for (int t = 0; t < k; ++t) rm.adj[std::size_t(i)].push_back(dist[std::size_t(t)].second);
    }
    // symmetrize by union
    for (int i = 0; i < n; ++i)
        for (int j : rm.adj[std::size_t(i)]) {
            auto& back = rm.adj[std::size_t(j)];
            if (std::find(back.begin(), back.end(), i) == back.end()) back.push_back(i);
        }
    for (auto& lst : rm.adj) std::sort(lst.begin(), lst.end());
}

/// Batch-classifies all roadmap nodes against X.
inline void classify_roadmap(Roadmap& rm, const DistanceField& field, const PointSet& X,
                             double d_safe) {
    const int n = int(rm.nodes.size());
    Mat Q(rm.nodes[0].q.size(), n);
    for (int i = 0; i < n; ++i) Q.col(i) = rm.nodes[std::size_t(i)].q;
    const Vec d = field.query_batch(Q, X);
    for (int i = 0; i < n; ++i) {
        rm.nodes[std::size_t(i)].d = d[i];
        rm.nodes[std::size_t(i)].free = d[i] > d_safe;
    }
}

/// Pushes every node below the beta2*d_safe margin back onto that margin with
/// damped Newton steps (start and goal are never moved). `shift` forwards the
/// anticipated obstacle displacement into the projection. Returns the number
/// of adjusted nodes.
inline int adjust_roadmap(Roadmap& rm, const DistanceField& field, const PointSet& X,
                          const PlannerConfig& cfg, const PointSet* shift = nullptr) {
    const double target = cfg.beta2 * cfg.d_safe;
    int moved = 0;
    for (std::size_t i = 2; i < rm.nodes.size(); ++i) {
        RoadmapNode& n = rm.nodes[i];
        if (n.d >= target) continue;
        const ProjectionResult pr = project_to_distance(field, n.q, X, target, cfg.beta1,
                                                        cfg.adjust_iters, cfg.adjust_tol, shift);
        n.q = pr.q;
        n.d = pr.d;
        n.free = pr.d > cfg.d_safe;
        ++moved;
    }
    return moved;
}

/// Samples a fresh roadmap for the problem: start, goal, then prm_samples
/// uniform configurations; classifies nodes and builds the kNN adjacency.
inline Roadmap build_roadmap(const PlanProblem& prob, const PlannerConfig& cfg, const PointSet& X,
                             bool adjust) {
    Roadmap rm;
    Rng rng(derive_seed(cfg.seed, fnv1a64("prm-sample")));
    rm.nodes.push_back({prob.start, 0.0, false});
    rm.nodes.push_back({prob.goal, 0.0, false});
    for (int s = 0; s < cfg.prm_samples; ++s)
        rm.nodes.push_back({rng.uniform_vec(prob.lo, prob.hi), 0.0, false});
    classify_roadmap(rm, *prob.field, X, cfg.d_safe);
    if (adjust) adjust_roadmap(rm, *prob.field, X, cfg);
    rebuild_adjacency(rm);
    return rm;
}

/// Lazily validated A* over the roadmap (start=node 0, goal=node 1): an edge
/// is collision-checked the first time the search relaxes it, so only edges
/// the search actually touches are paid for.
inline PlanResult roadmap_shortest_path(const Roadmap& rm, const DistanceField& field,
                                        const PointSet& X, const PlannerConfig& cfg) {
    PlanResult res;
    const int n = int(rm.nodes.size());
    res.nodes = n;
    if (!rm.nodes[0].free || !rm.nodes[1].free) {
        res.status = PlanStatus::kNoPath;
        res.waypoints = {rm.nodes[0].q};
        return res;
    }
    const Vec& goal_q = rm.nodes[1].q;
    std::vector<double> g(std::size_t(n), std::numeric_limits<double>::infinity());
    std::vector<int> parent(std::size_t(n), -1);
    std::vector<char> settled(std::size_t(n), 0);
    std::unordered_map<std::uint64_t, char> edge_ok;
    auto key = [](int a, int b) {
        if (a > b) std::swap(a, b);
        return (std::uint64_t(std::uint32_t(a)) << 32) | std::uint32_t(b);
    };
    using Item = std::pair<double, int>; // (f, node)
    std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
    g[0] = 0.0;
    open.emplace((rm.nodes[0].q - goal_q).norm(), 0);
    while (!open.empty()) {
        const auto [f, u] = open.top();
        open.pop();
        if (settled[std::size_t(u)]) continue;
        settled[std::size_t(u)] = 1;
        if (u == 1) break;
        for (int v : rm.adj[std::size_t(u)]) {
            if (settled[std::size_t(v)] || !rm.nodes[std::size_t(v)].free) continue;
            const double w = (rm.nodes[std::size_t(u)].q - rm.nodes[std::size_t(v)].q).norm();
            if (g[std::size_t(u)] + w >= g[std::size_t(v)]) continue;
            auto it = edge_ok.find(key(u, v));
            if (it == edge_ok.end()) {
                const bool ok =
                    edge_free(field, X, rm.nodes[std::size_t(u)].q, rm.nodes[std::size_t(v)].q,
                              cfg.edge_check_resolution, cfg.d_safe);
                it = edge_ok.emplace(key(u, v), ok ? 1 : 0).first;
            }
            if (!it->second) continue;
            g[std::size_t(v)] = g[std::size_t(u)] + w;
            parent[std::size_t(v)] = u;
            open.emplace(g[std::size_t(v)] + (rm.nodes[std::size_t(v)].q - goal_q).norm(), v);
        }
    }
    if (!std::isfinite(g[1])) {
        res.status = PlanStatus::kNoPath;
        res.waypoints = {rm.nodes[0].q};
        return res;
    }
    std::vector<int> chain;
    for (int cur = 1; cur >= 0; cur = parent[std::size_t(cur)]) chain.push_back(cur);
    std::reverse(chain.begin(), chain.end());
    for (int id : chain) res.waypoints.push_back(rm.nodes[std::size_t(id)].q);
    res.path_length = dexplan::path_length(res.waypoints);
    res.status = PlanStatus::kPathFound;
    return res;
}

/// One scene-update cycle on an existing roadmap: batch reclassification,
/// margin re-projection of threatened nodes, adjacency rebuild over the moved
/// nodes, and a lazily validated shortest-path query.
struct ReplanStats {
    double ms = 0.0;
    bool path_found = false;
    int adjusted = 0;
    double path_length = 0.0;
};

inline ReplanStats replan_cycle(Roadmap& rm, const DistanceField& field, const PointSet& X,
                                const PlannerConfig& cfg, const PointSet* shift = nullptr) {
    const auto t0 = std::chrono::steady_clock::now();
    ReplanStats st;
    classify_roadmap(rm, field, X, cfg.d_safe);
    st.adjusted = adjust_roadmap(rm, field, X, cfg, shift);
    rebuild_adjacency(rm); // nodes move (robot, adjusted samples): kNN is stale
    rm.check_symmetric();
    const PlanResult res = roadmap_shortest_path(rm, field, X, cfg);
    st.path_found = res.status == PlanStatus::kPathFound;
    st.path_length = res.path_length;
    st.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count();
    return st;
}

// ---------------------------------------------------------------------------
// entry points

inline PlanResult plan_rrt_star(const PlanProblem& prob, const PlannerConfig& cfg) {
    return RrtPlanner(prob, cfg, RrtMode::kFixedStep).plan();
}

inline PlanResult plan_variable_step_rrt_star(const PlanProblem& prob, const PlannerConfig& cfg) {
    return RrtPlanner(prob, cfg, RrtMode::kVariableStep).plan();
}

inline PlanResult plan_ds_guided_rrt_star(const PlanProblem& prob, const PlannerConfig& cfg) {
    return RrtPlanner(prob, cfg, RrtMode::kDsGuided).plan();
}

inline PlanResult plan_roadmap(const PlanProblem& prob, const PlannerConfig& cfg, bool adjust) {
    prob.validate();
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const PointSet X = prob.obstacles_for(0);
    Roadmap rm = build_roadmap(prob, cfg, X, adjust);
    PlanResult res = roadmap_shortest_path(rm, *prob.field, X, cfg);
    res.compute_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    res.iterations = 1;
    return res;
}

inline PlanResult plan_prm_star(const PlanProblem& prob, const PlannerConfig& cfg) {
    return plan_roadmap(prob, cfg, /*adjust=*/false);
}

inline PlanResult plan_dynamic_prm_star(const PlanProblem& prob, const PlannerConfig& cfg) {
    return plan_roadmap(prob, cfg, /*adjust=*/true);
}

/// Scripted-obstacle roadmap execution: replans every cycle while the robot
/// walks the current shortest path. Waypoints are the executed trace.
inline PlanResult run_live_prm(const PlanProblem& prob, const PlannerConfig& cfg, int max_cycles,
                               bool adjust = true) {
    prob.validate();
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    PlanResult res;
    PointSet X_prev = prob.obstacles_for(0);
    Roadmap rm = build_roadmap(prob, cfg, X_prev, adjust);
    Vec q_a = prob.start;
    std::vector<Vec> trace{q_a};
    for (int cycle = 0; cycle < max_cycles; ++cycle) {
        ++res.iterations;
        const PointSet X = prob.obstacles_for(cycle);
        PointSet shift(X.size(), Vec3::Zero());
        if (X.size() == X_prev.size())
            for (std::size_t i = 0; i < X.size(); ++i) shift[i] = X[i] - X_prev[i];
        rm.nodes[0].q = q_a; // the robot is the roadmap's start node
        replan_cycle(rm, *prob.field, X, cfg, &shift);
        const PlanResult step = roadmap_shortest_path(rm, *prob.field, X, cfg);
        X_prev = X;
        if ((q_a - prob.goal).norm() <= cfg.goal_eps) {
            res.status = PlanStatus::kPathFound;
            break;
        }
        if (step.status != PlanStatus::kPathFound || step.waypoints.size() < 2) continue;
        const Vec& target = step.waypoints[1];
        const double dist = (target - q_a).norm();
        q_a = dist <= cfg.dq_upper ? target : Vec(q_a + (cfg.dq_upper / dist) * (target - q_a));
        trace.push_back(q_a);
    }
    if (res.status != PlanStatus::kPathFound) res.status = PlanStatus::kBudgetExhausted;
    res.waypoints = std::move(trace);
    res.path_length = dexplan::path_length(res.waypoints);
    res.nodes = int(rm.nodes.size());
    res.compute_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

/// Name-based dispatch used by the benchmark harness and the CLI.
inline PlanResult plan_by_name(const std::string& name, const PlanProblem& prob,
                               const PlannerConfig& cfg) {
    if (name == "ds_rrt_star") return plan_ds_guided_rrt_star(prob, cfg);
    if (name == "rrt_star") return plan_rrt_star(prob, cfg);
    if (name == "var_rrt_star") return plan_variable_step_rrt_star(prob, cfg);
    if (name == "prm_star") return plan_prm_star(prob, cfg);
    if (name == "dynamic_prm_star") return plan_dynamic_prm_star(prob, cfg);
    throw std::invalid_argument("unknown planner: " + name);
}

inline const std::vector<std::string>& planner_names() {
    static const std::vector<std::string> names{"ds_rrt_star", "rrt_star", "var_rrt_star",
                                                "prm_star", "dynamic_prm_star"};
    return names;
}

}  // namespace dexplan
