#pragma once

// Analytic stand-in distance fields over arbitrary-dimensional configuration
// spaces. They make flow and planner behavior checkable in closed form,
// independent of any learned model or hand geometry.

#include <dexplan/cspace.hpp>

namespace dexplan::testing {

/// Union of spheres: d(q) = min_i (‖q − c_i‖ − r_i), exact gradient of the
/// attaining sphere. Obstacle points are ignored.
class SphereField : public DistanceField {
public:
    struct Sphere {
        Vec c;
        double r;
    };

    SphereField(int dof, std::vector<Sphere> spheres) : dof_(dof), s_(std::move(spheres)) {
        for (const auto& s : s_)
            if (s.c.size() != dof || !(s.r > 0)) throw std::invalid_argument("bad sphere");
    }

    int dof() const override { return dof_; }

    DistQuery query(const Vec& q, const PointSet&, bool want_grad) const override {
        DistQuery out;
        Vec delta_best;
        for (std::size_t i = 0; i < s_.size(); ++i) {
            const Vec delta = q - s_[i].c;
            const double d = delta.norm() - s_[i].r;
            if (d < out.d) {
                out.d = d;
                out.argmin_term = int(i);
                delta_best = delta;
            }
        }
        if (want_grad) {
            out.grad_q = Vec::Zero(dof_);
            const double n = delta_best.size() ? delta_best.norm() : 0.0;
            if (n > 1e-12) out.grad_q = delta_best / n;
        }
        return out;
    }

private:
    int dof_;
    std::vector<Sphere> s_;
};

/// Half-space boundary: d(q) = nᵀq − b with constant unit gradient. Globally
/// linear, so finite differences and modulation algebra are exact.
class PlaneField : public DistanceField {
public:
    PlaneField(Vec n, double b) : n_(n.normalized()), b_(b) {}
    int dof() const override { return int(n_.size()); }
    DistQuery query(const Vec& q, const PointSet&, bool want_grad) const override {
        DistQuery out;
        out.d = n_.dot(q) - b_;
        out.argmin_term = 0;
        if (want_grad) out.grad_q = n_;
        return out;
    }

private:
    Vec n_;
    double b_;
};

/// Obstacle-free field: huge clearance, zero gradient everywhere.
class FreeField : public DistanceField {
public:
    explicit FreeField(int dof) : dof_(dof) {}
    int dof() const override { return dof_; }
    DistQuery query(const Vec&, const PointSet&, bool want_grad) const override {
        DistQuery out;
        out.d = 1e6;
        if (want_grad) out.grad_q = Vec::Zero(dof_);
        return out;
    }

private:
    int dof_;
};

}  // namespace dexplan::testing
