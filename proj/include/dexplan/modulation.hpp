#pragma once

// Joint-space dynamical system control: a linear attractor modulated by the
// distance field so that flow vanishes along the boundary normal and slides
// along the tangent space.

#include <dexplan/cspace.hpp>

namespace dexplan {

/// Nominal first-order DS q_dot = A (q - q_g) with A negative definite.
struct LinearDS {
    Mat A;
    Vec q_g;

    LinearDS(Mat A_, Vec qg) : A(std::move(A_)), q_g(std::move(qg)) {
        if (A.rows() != A.cols() || A.rows() != q_g.size())
            throw std::invalid_argument("LinearDS: A/q_g dimension mismatch");
        const Mat sym = 0.5 * (A + A.transpose());
        const Eigen::SelfAdjointEigenSolver<Mat> es(sym);
        if (es.eigenvalues().maxCoeff() >= 0)
            throw std::invalid_argument("LinearDS: symmetric part of A must be negative definite");
    }

    /// The default attractor A = -k I.
    static LinearDS attractor(const Vec& q_g, double k = 1.0) {
        if (!(k > 0)) throw std::invalid_argument("attractor gain must be positive");
        return LinearDS(-k * Mat::Identity(q_g.size(), q_g.size()), q_g);
    }

    Vec nominal(const Vec& q) const { return A * (q - q_g); }
};

struct ModulationParams {
    double rho = 1.0;          ///< reactivity; larger reacts later but harder
    double alpha1 = 20.0;      ///< boundary-function slope, 1/m
    double d_safe = 0.005;     ///< safety margin, m
    double gamma_floor = 1e-2; ///< clamp for |Gamma| near/below zero

    void validate() const {
        if (!(rho > 0) || !(gamma_floor > 0) || !(alpha1 > 0))
            throw std::invalid_argument("ModulationParams: rho, alpha1, gamma_floor must be > 0");
    }
};

/// Scaled boundary function: Gamma > 1 iff the configuration clears the
/// safety margin.
inline double gamma_of(double d, const ModulationParams& p) {
    return p.alpha1 * (d - p.d_safe) + 1.0;
}

/// Orthonormal basis whose first column is g normalized. The completion is
/// Gram-Schmidt over the standard basis, skipping the axis most aligned with
/// g (that axis would orthogonalize to near-zero).
inline Mat gradient_basis(const Vec& g) {
    const Eigen::Index n = g.size();
    Mat E(n, n);
    E.col(0) = g.normalized();
    Eigen::Index skip = 0;
    E.col(0).cwiseAbs().maxCoeff(&skip);
    Eigen::Index col = 1;
    for (Eigen::Index j = 0; j < n && col < n; ++j) {
        if (j == skip) continue;
        Vec v = Vec::Unit(n, j);
        for (Eigen::Index k = 0; k < col; ++k) v -= E.col(k).dot(v) * E.col(k);
        E.col(col++) = v.normalized();
    }
    return E;
}

/// Deflect a nominal velocity around the boundary: the component along the
/// distance gradient is scaled by 1 - 1/|Gamma|^(1/rho) (zero on the margin,
/// negative inside), tangential components by 1 + 1/|Gamma|^(1/rho). Deep
/// inside (Gamma <= gamma_floor) an explicit repulsion ‖nominal‖·dGamma/dq is
/// added to escape penetration. `grad` is the distance gradient dd/dq.
inline Vec modulate_velocity(const Vec& nominal, const Vec& grad, double gamma_raw,
                             const ModulationParams& p) {
    if (grad.size() != nominal.size() || grad.norm() < 1e-8) return nominal;
    const double g_abs = std::max(std::abs(gamma_raw), p.gamma_floor);
    const double amp = 1.0 / std::pow(g_abs, 1.0 / p.rho);
    const Mat E = gradient_basis(grad);
    Vec c = E.transpose() * nominal;
    c[0] *= 1.0 - amp;
    c.tail(c.size() - 1) *= 1.0 + amp;
    Vec v = E * c;
    if (gamma_raw <= p.gamma_floor) v += nominal.norm() * (p.alpha1 * grad);
    return v;
}

struct ModulationResult {
    Vec velocity;
    double d = 0;
    double gamma = 0;
    Vec grad_q;
    bool modulated = false;  ///< false when the zero-gradient fallback fired
};

/// Full modulation step: query the field, build Gamma, deflect the nominal.
inline ModulationResult modulation(const LinearDS& ds, const ModulationParams& p,
                                   const DistanceField& field, const Vec& q, const PointSet& X) {
    p.validate();
    ModulationResult r;
    const DistQuery dq = field.query(q, X, true);
    r.d = dq.d;
    r.gamma = gamma_of(dq.d, p);
    r.grad_q = dq.grad_q;
    const Vec nominal = ds.nominal(q);
    if (dq.grad_q.size() == 0 || dq.grad_q.norm() < 1e-8) {
        r.velocity = nominal;
        r.modulated = false;
        return r;
    }
    // Gamma is affine in d, so the gradient direction of Gamma equals grad_q
    r.velocity = modulate_velocity(nominal, dq.grad_q, r.gamma, p);
    r.modulated = true;
    return r;
}

// ---------------------------------------------------------------------------
// Euler rollouts

struct Rollout {
    Mat traj;         ///< dof x (steps+1), including the start
    double min_d = std::numeric_limits<double>::infinity();
    bool reached = false;
    int steps = 0;
};

/// Single-seed explicit Euler integration for `steps` steps of size dt.
/// Stops early when within eps_reach of the attractor (if eps_reach > 0).
/// speed_cap limits ‖q̇‖; it bounds the per-step displacement to dt*speed_cap
/// so high-gain attractors cannot tunnel through thin obstacles.
inline Rollout integrate(const LinearDS& ds, const ModulationParams& p, const DistanceField& field,
                         const Vec& q0, const PointSet& X, int steps, double dt,
                         double eps_reach = 0.0,
                         double speed_cap = std::numeric_limits<double>::infinity()) {
    if (!(dt > 0 && dt <= 0.01)) throw std::invalid_argument("integration step must be in (0, 0.01]");
    Rollout r;
    r.traj.resize(q0.size(), steps + 1);
    r.traj.col(0) = q0;
    Vec q = q0;
    int t = 0;
    for (; t < steps; ++t) {
        const ModulationResult m = modulation(ds, p, field, q, X);
        r.min_d = std::min(r.min_d, m.d);
        if (eps_reach > 0 && (q - ds.q_g).norm() <= eps_reach) {
            r.reached = true;
            break;
        }
        Vec v = m.velocity;
        const double speed = v.norm();
        if (speed > speed_cap) v *= speed_cap / speed;
        q += dt * v;
        r.traj.col(t + 1) = q;
    }
    if (eps_reach > 0 && !r.reached && (q - ds.q_g).norm() <= eps_reach) r.reached = true;
    r.steps = t;
    r.traj.conservativeResize(Eigen::NoChange, t + 1);
    return r;
}

struct BatchRollout {
    Mat final_q;               ///< dof x n
    std::vector<char> reached; ///< per seed
    Vec min_d;                 ///< per seed, over the whole rollout
    std::vector<int> steps;
};

/// Lockstep batched rollout: one batched field query per step for all still-
/// active seeds. Semantically identical to per-seed integrate().
inline BatchRollout integrate_batch(const LinearDS& ds, const ModulationParams& p,
                                    const DistanceField& field, const Mat& Q0, const PointSet& X,
                                    int steps, double dt, double eps_reach,
                                    double speed_cap = std::numeric_limits<double>::infinity()) {
    if (!(dt > 0 && dt <= 0.01)) throw std::invalid_argument("integration step must be in (0, 0.01]");
    p.validate();
    const Eigen::Index n = Q0.cols();
    BatchRollout out;
    out.final_q = Q0;
    out.reached.assign(std::size_t(n), 0);
    out.min_d = Vec::Constant(n, std::numeric_limits<double>::infinity());
    out.steps.assign(std::size_t(n), 0);

    std::vector<Eigen::Index> active(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) active[std::size_t(i)] = i;

    Mat Qa;
    Vec d;
    Mat grads;
    for (int t = 0; t < steps && !active.empty(); ++t) {
        Qa.resize(Q0.rows(), Eigen::Index(active.size()));
        for (std::size_t k = 0; k < active.size(); ++k) Qa.col(Eigen::Index(k)) = out.final_q.col(active[k]);
        field.query_batch_grad(Qa, X, d, grads);

        std::vector<Eigen::Index> still;
        for (std::size_t k = 0; k < active.size(); ++k) {
            const Eigen::Index i = active[k];
            out.min_d[i] = std::min(out.min_d[i], d[Eigen::Index(k)]);
            Vec q = Qa.col(Eigen::Index(k));
            if (eps_reach > 0 && (q - ds.q_g).norm() <= eps_reach) {
                out.reached[std::size_t(i)] = 1;
                continue;
            }
            const Vec nominal = ds.nominal(q);
            const Vec g = grads.col(Eigen::Index(k));
            Vec vel = (g.norm() < 1e-8)
                          ? nominal
                          : modulate_velocity(nominal, g, gamma_of(d[Eigen::Index(k)], p), p);
            const double speed = vel.norm();
            if (speed > speed_cap) vel *= speed_cap / speed;
            q += dt * vel;
            out.final_q.col(i) = q;
            out.steps[std::size_t(i)] = t + 1;
            still.push_back(i);
        }
        active.swap(still);
    }
    for (std::size_t k = 0; k < active.size(); ++k) {
        const Eigen::Index i = active[k];
        if (eps_reach > 0 && (out.final_q.col(i) - ds.q_g).norm() <= eps_reach)
            out.reached[std::size_t(i)] = 1;
    }
    return out;
}

}  // namespace dexplan
