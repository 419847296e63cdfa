#include <catch2/catch_amalgamated.hpp>

#include <dexplan/sliding.hpp>

#include "synthetic_fields.hpp"

using namespace dexplan;
using testing::PlaneField;
using testing::SphereField;

namespace {

Vec v2(double x, double y) {
    Vec v(2);
    v << x, y;
    return v;
}

PlanProblem around_disc_problem(const DistanceField& field) {
    PlanProblem p;
    p.field = &field;
    p.start = v2(-1.2, 0);
    p.goal = v2(1.2, 0);
    p.lo = Vec::Constant(2, -2.0);
    p.hi = Vec::Constant(2, 2.0);
    p.obstacles = {Vec3(0, 0, 0)}; // synthetic fields ignore the cloud's values
    return p;
}

double monotone_fraction(const SlidingPlan& sp) {
    int total = 0, decreasing = 0;
    for (const auto& hist : sp.residual_history)
        for (std::size_t k = 1; k < hist.size(); ++k) {
            ++total;
            if (hist[k] < hist[k - 1]) ++decreasing;
        }
    REQUIRE(total > 0);
    return double(decreasing) / double(total);
}

} // namespace

TEST_CASE("sliding path hugs a disc boundary") {
    SphereField field(2, {{v2(0, 0), 0.5}});
    PlanProblem prob = around_disc_problem(field);
    SlidingConfig cfg;
    cfg.plan.seed = 23;

    const SlidingPlan sp = plan_sliding(prob, cfg);
    REQUIRE(sp.plan.status == PlanStatus::kPathFound);
    REQUIRE(sp.raw_path.size() == sp.boundary_path.size());
    REQUIRE(sp.raw_path.size() >= 10);

    SECTION("endpoints pass through untouched") {
        REQUIRE((sp.boundary_path.front() - prob.start).norm() == 0.0);
        REQUIRE((sp.boundary_path.back() - prob.goal).norm() == 0.0);
        REQUIRE((sp.raw_path.front() - prob.start).norm() == 0.0);
    }
    SECTION("interior waypoints sit on the circle within tolerance") {
        int converged = 0;
        for (std::size_t i = 1; i + 1 < sp.boundary_path.size(); ++i) {
            if (sp.converged[i]) {
                ++converged;
                REQUIRE(std::abs(sp.boundary_path[i].norm() - 0.5) <= cfg.contact_tol + 1e-12);
                REQUIRE(sp.residuals[i] <= cfg.contact_tol);
            }
        }
        REQUIRE(converged + sp.non_converged == int(sp.boundary_path.size()) - 2);
        // every interior waypoint converges within the 20-step budget here
        REQUIRE(sp.non_converged == 0);
        for (std::size_t i = 1; i + 1 < sp.boundary_path.size(); ++i)
            REQUIRE(int(sp.residual_history[i].size()) <= cfg.max_iters + 1);
    }
    SECTION("projection residuals shrink monotonically") {
        REQUIRE(monotone_fraction(sp) >= 0.95);
    }
    SECTION("projection is idempotent on an already-projected path") {
        const SlidingPlan again =
            project_path_to_boundary(field, sp.boundary_path, prob.obstacles, cfg);
        for (std::size_t i = 0; i < sp.boundary_path.size(); ++i)
            REQUIRE((again.boundary_path[i] - sp.boundary_path[i]).norm() == 0.0);
    }
    SECTION("deterministic end to end") {
        const SlidingPlan again = plan_sliding(prob, cfg);
        REQUIRE(again.boundary_path.size() == sp.boundary_path.size());
        for (std::size_t i = 0; i < sp.boundary_path.size(); ++i)
            REQUIRE((again.boundary_path[i] - sp.boundary_path[i]).norm() == 0.0);
    }
}

TEST_CASE("sliding onto a plane converges fast and exactly") {
    PlaneField field(v2(0, 1), 0.0); // d(q) = q_y
    PlanProblem prob;
    prob.field = &field;
    prob.start = v2(-1.0, 0.5);
    prob.goal = v2(1.0, 0.7);
    prob.lo = Vec::Constant(2, -2.0);
    prob.hi = Vec::Constant(2, 2.0);
    prob.obstacles = {Vec3(0, 0, 0)};
    SlidingConfig cfg;
    cfg.plan.seed = 4;

    const SlidingPlan sp = plan_sliding(prob, cfg);
    REQUIRE(sp.plan.status == PlanStatus::kPathFound);
    REQUIRE(sp.non_converged == 0);
    for (std::size_t i = 1; i + 1 < sp.boundary_path.size(); ++i) {
        REQUIRE(std::abs(sp.boundary_path[i][1]) <= cfg.contact_tol);
        // halving per step from at most ~0.8: well inside the budget
        REQUIRE(int(sp.residual_history[i].size()) <= 12);
    }
    REQUIRE(monotone_fraction(sp) == 1.0);
}

TEST_CASE("sliding error handling") {
    SphereField field(2, {{v2(0, 0), 0.5}});
    SlidingConfig cfg;

    SECTION("an empty obstacle cloud is rejected") {
        PlanProblem prob = around_disc_problem(field);
        prob.obstacles.clear();
        REQUIRE_THROWS_AS(plan_sliding(prob, cfg), std::invalid_argument);
    }
    SECTION("invalid config is rejected") {
        PlanProblem prob = around_disc_problem(field);
        cfg.contact_tol = 0.0;
        REQUIRE_THROWS_AS(plan_sliding(prob, cfg), std::invalid_argument);
    }
    SECTION("a failed underlying plan is reported, not thrown") {
        // goal sealed inside a ring: the planner gives up, sliding passes that on
        std::vector<SphereField::Sphere> ring;
        const Vec goal = v2(0.8, 0);
        for (int k = 0; k < 8; ++k) {
            const double th = 2.0 * M_PI * k / 8;
            ring.push_back({goal + 0.5 * v2(std::cos(th), std::sin(th)), 0.35});
        }
        SphereField sealed(2, ring);
        PlanProblem prob = around_disc_problem(sealed);
        prob.goal = goal;
        cfg.plan.prm_samples = 60;
        const SlidingPlan sp = plan_sliding(prob, cfg);
        REQUIRE(sp.plan.status == PlanStatus::kNoPath);
        REQUIRE(sp.boundary_path.empty());
        REQUIRE(sp.raw_path.empty());
    }
}

TEST_CASE("non-convergent waypoints are reported but the plan survives") {
    // A disc so large relative to the step budget that distant waypoints
    // cannot reach the boundary in max_iters damped steps.
    SphereField field(2, {{v2(0, -30.0), 25.0}}); // boundary far below the corridor
    PlanProblem prob;
    prob.field = &field;
    prob.start = v2(-1.0, 0.0);
    prob.goal = v2(1.0, 0.0);
    prob.lo = Vec::Constant(2, -2.0);
    prob.hi = Vec::Constant(2, 2.0);
    prob.obstacles = {Vec3(0, 0, 0)};
    SlidingConfig cfg;
    cfg.plan.seed = 9;
    cfg.max_iters = 3; // starve the projection on purpose

    const SlidingPlan sp = plan_sliding(prob, cfg);
    REQUIRE(sp.plan.status == PlanStatus::kPathFound);
    REQUIRE(sp.non_converged > 0);
    REQUIRE(sp.boundary_path.size() == sp.raw_path.size());
    int flagged = 0;
    for (std::size_t i = 0; i < sp.converged.size(); ++i)
        if (!sp.converged[i]) {
            ++flagged;
            REQUIRE(sp.residuals[i] > cfg.contact_tol);
        }
    REQUIRE(flagged == sp.non_converged);
}
