#pragma once

// Contact-path generation: plan a collision-free joint path, densify it, then
// pull every interior waypoint onto the obstacle boundary (d = 0) with damped
// Newton steps along the distance gradient. The endpoints are never touched.

#include <dexplan/planners.hpp>

namespace dexplan {

struct SlidingConfig {
    std::string planner = "dynamic_prm_star"; ///< underlying avoidance planner
    double spacing = 0.05;     ///< waypoint spacing after densification, radians
    double contact_tol = 1e-3; ///< |d| accepted as "on the boundary", meters
    int max_iters = 20;        ///< projection step budget per waypoint
    double beta1 = 0.5;        ///< projection damping
    PlannerConfig plan;

    void validate() const {
        plan.validate();
        if (!(spacing > 0)) throw std::invalid_argument("spacing must be positive");
        if (!(contact_tol > 0)) throw std::invalid_argument("contact_tol must be positive");
        if (max_iters < 1) throw std::invalid_argument("max_iters must be positive");
        if (!(beta1 > 0 && beta1 <= 1)) throw std::invalid_argument("beta1 must be in (0,1]");
    }
};

struct SlidingPlan {
    PlanResult plan;                ///< the underlying avoidance plan
    std::vector<Vec> raw_path;      ///< densified collision-free path
    std::vector<Vec> boundary_path; ///< after projection; endpoints = raw endpoints
    std::vector<double> residuals;  ///< |d| at each boundary waypoint
    std::vector<char> converged;    ///< per waypoint; endpoints are trivially 1
    std::vector<std::vector<double>> residual_history; ///< |d| per projection step
    int non_converged = 0;
};

/// Projects the interior of `path` onto the d = 0 level set, waypoint by
/// waypoint (independently; each starts from its raw position). Endpoints are
/// copied through bit-identically.
inline SlidingPlan project_path_to_boundary(const DistanceField& field,
                                            const std::vector<Vec>& path, const PointSet& X,
                                            const SlidingConfig& cfg) {
    SlidingPlan out;
    out.raw_path = path;
    out.boundary_path = path;
    out.residuals.assign(path.size(), 0.0);
    out.converged.assign(path.size(), 1);
    out.residual_history.resize(path.size());
    for (std::size_t i = 0; i < path.size(); ++i) {
        const bool endpoint = i == 0 || i + 1 == path.size();
        if (endpoint) {
            out.residuals[i] = std::abs(field.query(path[i], X, false).d);
            continue;
        }
        const ProjectionResult pr = project_to_distance(field, path[i], X, /*target=*/0.0,
                                                        cfg.beta1, cfg.max_iters, cfg.contact_tol);
        out.boundary_path[i] = pr.q;
        out.residuals[i] = std::abs(pr.d);
        out.converged[i] = pr.converged ? 1 : 0;
        out.residual_history[i] = pr.residuals;
        if (!pr.converged) ++out.non_converged;
    }
    return out;
}

/// Plans from start to goal with the configured planner, densifies the result,
/// and projects the interior onto the contact boundary. Requires an obstacle
/// cloud: without one the boundary is undefined.
inline SlidingPlan plan_sliding(const PlanProblem& prob, const SlidingConfig& cfg) {
    cfg.validate();
    prob.validate();
    if (prob.obstacles_for(0).empty())
        throw std::invalid_argument("sliding requires a non-empty obstacle cloud");

    const PlanResult base = plan_by_name(cfg.planner, prob, cfg.plan);
    if (base.status != PlanStatus::kPathFound) {
        SlidingPlan out;
        out.plan = base;
        return out;
    }
    const std::vector<Vec> dense = densify_path(base.waypoints, cfg.spacing);
    SlidingPlan out = project_path_to_boundary(*prob.field, dense, prob.obstacles_for(0), cfg);
    out.plan = base;
    return out;
}

}  // namespace dexplan
