#pragma once

// Configuration-space distance fields: the common query interface, the
// learned model assembled from the per-part regressors, and the exact
// geometric oracle used for verification and baselines.

#include <dexplan/mlp.hpp>

#include <filesystem>
#include <memory>

namespace dexplan {

enum class CollisionState { kCollided, kUnsafe, kFree };

inline CollisionState collision_state(double d, double d_safe) {
    if (d <= 0) return CollisionState::kCollided;
    return d <= d_safe ? CollisionState::kUnsafe : CollisionState::kFree;
}

struct DistQuery {
    double d = std::numeric_limits<double>::infinity();
    Vec grad_q;              ///< d(d)/dq, filled when requested
    Vec3 grad_x{0, 0, 0};    ///< d(d)/dx of the attaining obstacle point
    int argmin_point = -1;   ///< index into X, or -1 if a self term attains the min
    int argmin_term = -1;    ///< self: pair index; object: group index (diagnostics)
};

/// Minimum-distance field over hand configurations and point obstacles.
/// Obstacle points are expressed in the hand frame.
class DistanceField {
public:
    virtual ~DistanceField() = default;
    virtual int dof() const = 0;
    virtual DistQuery query(const Vec& q, const PointSet& X, bool want_grad) const = 0;

    /// Values for a batch of configurations (one column of Q per sample).
    virtual Vec query_batch(const Mat& Q, const PointSet& X) const {
        Vec d(Q.cols());
        for (Eigen::Index i = 0; i < Q.cols(); ++i) d[i] = query(Q.col(i), X, false).d;
        return d;
    }

    /// Values and q-gradients for a batch (used by lockstep flow rollouts).
    virtual void query_batch_grad(const Mat& Q, const PointSet& X, Vec& d, Mat& grads) const {
        d.resize(Q.cols());
        grads.resize(Q.rows(), Q.cols());
        for (Eigen::Index i = 0; i < Q.cols(); ++i) {
            const DistQuery r = query(Q.col(i), X, true);
            d[i] = r.d;
            grads.col(i) = r.grad_q;
        }
    }
};

// ---------------------------------------------------------------------------
// model bundle: one self-collision net + three hand-object nets

struct ModelBundle {
    HandModel hand;
    Mlp self_net;    ///< q (dof) -> 10 per-pair distances
    Mlp palm_net;    ///< point (3, hand frame) -> distance to palm
    Mlp finger_net;  ///< [q_f(4); x(3, finger base frame)] -> distance; shared by
                     ///< index/middle/ring, which are identical chains
    Mlp thumb_net;   ///< [q_t(4); x(3, thumb base frame)] -> distance

    void validate() const {
        auto expect = [](const Mlp& m, int in, int out, const char* what) {
            if (m.in_dim() != in || m.out_dim() != out)
                throw std::runtime_error(std::string("bundle net has wrong shape: ") + what);
        };
        expect(self_net, hand.dof(), kNumGroupPairs, "self");
        expect(palm_net, 3, 1, "palm");
        expect(finger_net, 7, 1, "finger");
        expect(thumb_net, 7, 1, "thumb");
        const std::string hh = to_hex(hand.config_hash());
        for (const Mlp* m : {&self_net, &palm_net, &finger_net, &thumb_net})
            if (m->meta.contains("hand_hash") && m->meta["hand_hash"] != hh)
                throw std::runtime_error("bundle net was trained for a different hand model");
    }

    void save(const std::string& dir) const {
        namespace fs = std::filesystem;
        fs::create_directories(dir);
        std::ofstream os(fs::path(dir) / "hand.json");
        os << hand.to_json().dump(2) << "\n";
        self_net.save(fs::path(dir) / "self.dxnn");
        palm_net.save(fs::path(dir) / "palm.dxnn");
        finger_net.save(fs::path(dir) / "finger.dxnn");
        thumb_net.save(fs::path(dir) / "thumb.dxnn");
        nlohmann::json j{{"format", "dexplan-bundle"},
                         {"version", 1},
                         {"hand_hash", to_hex(hand.config_hash())},
                         {"files",
                          {{"hand", "hand.json"},
                           {"self", "self.dxnn"},
                           {"palm", "palm.dxnn"},
                           {"finger", "finger.dxnn"},
                           {"thumb", "thumb.dxnn"}}}};
        std::ofstream ob(fs::path(dir) / "bundle.json");
        ob << j.dump(2) << "\n";
    }

    static ModelBundle load(const std::string& dir) {
        namespace fs = std::filesystem;
        const auto j = nlohmann::json::parse(read_text_file(fs::path(dir) / "bundle.json"));
        if (j.value("format", "") != "dexplan-bundle")
            throw std::runtime_error("not a model bundle: " + dir);
        const auto& f = j.at("files");
        ModelBundle b;
        b.hand = HandModel::load(fs::path(dir) / f.at("hand").get<std::string>());
        b.self_net = Mlp::load(fs::path(dir) / f.at("self").get<std::string>());
        b.palm_net = Mlp::load(fs::path(dir) / f.at("palm").get<std::string>());
        b.finger_net = Mlp::load(fs::path(dir) / f.at("finger").get<std::string>());
        b.thumb_net = Mlp::load(fs::path(dir) / f.at("thumb").get<std::string>());
        if (j.at("hand_hash") != to_hex(b.hand.config_hash()))
            throw std::runtime_error("bundle hand hash mismatch in " + dir);
        b.validate();
        return b;
    }
};

// ---------------------------------------------------------------------------

/// Learned distance field. Values come from the bundle nets (denormalized),
/// gradients by chaining the argmin net's gradient through the frame
/// transforms. Obstacle points far outside a part's swept volume fall back to
/// the distance to the part's bounding box -- a cheap lower bound that keeps
/// far queries sane where the net has never seen data.
class CSpaceModel : public DistanceField {
public:
    explicit CSpaceModel(ModelBundle bundle, double hull_scale = 2.5)
        : b_(std::move(bundle)), hull_scale_(hull_scale) {
        b_.validate();
        for (int g = 0; g < kNumGroups; ++g) {
            boxes_[g] = detail::group_swept_aabb(b_.hand, g);
            const auto& gj = b_.hand.group_joints(g);
            if (!gj.empty()) {
                base_[g] = b_.hand.base_transform(g);
                base_inv_[g] = base_[g].inverse();
            } else {
                base_[g] = base_inv_[g] = Iso3::Identity();
            }
        }
        palm_group_ = b_.hand.group_index("palm");
        thumb_group_ = b_.hand.group_index("thumb");
    }

    int dof() const override { return b_.hand.dof(); }
    const ModelBundle& bundle() const { return b_; }
    const HandModel& hand() const { return b_.hand; }

    DistQuery query(const Vec& q, const PointSet& X, bool want_grad) const override;
    Vec query_batch(const Mat& Q, const PointSet& X) const override;
    void query_batch_grad(const Mat& Q, const PointSet& X, Vec& d, Mat& grads) const override;

    /// Per-pair denormalized self distances (the learned counterpart of
    /// self_distance_vector).
    Vec self_distances(const Vec& q) const {
        Vec y = b_.self_net.forward(q);
        for (Eigen::Index j = 0; j < y.size(); ++j)
            y[j] = denormalize_distance(y[j], b_.self_net.d_up[j], b_.self_net.d_low[j]);
        return y;
    }

private:
    // term bookkeeping for the gradient pass
    struct Term {
        double d;
        int group;  // -1 for self
        int pair;   // self pair index
        int point;  // obstacle point index
        bool via_box;
    };

    const Mlp& group_net(int g) const { return g == thumb_group_ ? b_.thumb_net : b_.finger_net; }

    double denorm_slope(const Mlp& net, int j, double y) const {
        return y >= 0 ? net.d_up[j] : std::abs(net.d_low[j]);
    }

    /// Distance of one obstacle point to one group, choosing net or box
    /// fallback. x_base is the point in the group's base frame.
    double point_group_distance(int g, const Vec& q, const Vec3& x_base, bool* via_box) const {
        const auto& box = boxes_[g];
        const auto sbox = box.scaled(hull_scale_);
        const bool outside = (x_base.array() < sbox.lo.array()).any() ||
                             (x_base.array() > sbox.hi.array()).any();
        if (via_box) *via_box = outside;
        if (outside) return box_distance(box, x_base, nullptr);
        if (g == palm_group_) {
            const Vec y = b_.palm_net.forward(x_base);
            return denormalize_distance(y[0], b_.palm_net.d_up[0], b_.palm_net.d_low[0]);
        }
        const Mlp& net = group_net(g);
        Vec u(7);
        const auto& gj = b_.hand.group_joints(g);
        for (int k = 0; k < 4; ++k) u[k] = q[gj[k]];
        u.segment<3>(4) = x_base;
        const Vec y = net.forward(u);
        return denormalize_distance(y[0], net.d_up[0], net.d_low[0]);
    }

    static double box_distance(const detail::Aabb& box, const Vec3& x, Vec3* grad) {
        const Vec3 c = x.cwiseMax(box.lo).cwiseMin(box.hi);
        const Vec3 delta = x - c;
        const double d = delta.norm();
        if (grad) *grad = d > 1e-12 ? Vec3(delta / d) : Vec3::Zero();
        return d;
    }

    ModelBundle b_;
    double hull_scale_;
    std::array<detail::Aabb, kNumGroups> boxes_;
    std::array<Iso3, kNumGroups> base_, base_inv_;
    int palm_group_ = 4, thumb_group_ = 0;
};

inline DistQuery CSpaceModel::query(const Vec& q, const PointSet& X, bool want_grad) const {
    if (q.size() != dof()) throw std::invalid_argument("configuration has wrong dimension");
    DistQuery out;

    // self term: min over the 10 denormalized outputs
    const Vec ys = b_.self_net.forward(q);
    int best_pair = 0;
    double best_self = std::numeric_limits<double>::infinity();
    for (int j = 0; j < kNumGroupPairs; ++j) {
        const double dj = denormalize_distance(ys[j], b_.self_net.d_up[j], b_.self_net.d_low[j]);
        if (dj < best_self) {
            best_self = dj;
            best_pair = j;
        }
    }
    out.d = best_self;
    out.argmin_term = best_pair;
    out.argmin_point = -1;

    // object terms
    int best_group = -1, best_point = -1;
    bool best_box = false;
    for (int p = 0; p < int(X.size()); ++p) {
        for (int g = 0; g < kNumGroups; ++g) {
            const Vec3 x_base = base_inv_[g] * X[std::size_t(p)];
            bool via_box = false;
            const double dg = point_group_distance(g, q, x_base, &via_box);
            if (dg < out.d) {
                out.d = dg;
                best_group = g;
                best_point = p;
                best_box = via_box;
            }
        }
    }

    if (best_point >= 0) {
        out.argmin_point = best_point;
        out.argmin_term = best_group;
    }
    if (!want_grad) return out;

    out.grad_q = Vec::Zero(dof());
    if (best_point < 0) {
        // self term attained: one backward pass through the self net
        double yv = 0;
        const Vec g = b_.self_net.output_gradient(q, best_pair, &yv);
        out.grad_q = denorm_slope(b_.self_net, best_pair, yv) * g;
        out.grad_x.setZero();
        return out;
    }

    const int g = best_group;
    const Vec3 x_base = base_inv_[g] * X[std::size_t(best_point)];
    if (best_box) {
        Vec3 gb;
        box_distance(boxes_[g], x_base, &gb);
        // box term ignores q; map the point gradient back to the hand frame
        out.grad_x = base_[g].linear() * gb;
        return out;
    }
    if (g == palm_group_) {
        double yv = 0;
        const Vec gx = b_.palm_net.output_gradient(x_base, 0, &yv);
        out.grad_x = denorm_slope(b_.palm_net, 0, yv) * (base_[g].linear() * Vec3(gx));
        return out;
    }
    const Mlp& net = group_net(g);
    const auto& gj = b_.hand.group_joints(g);
    Vec u(7);
    for (int k = 0; k < 4; ++k) u[k] = q[gj[k]];
    u.segment<3>(4) = x_base;
    double yv = 0;
    const Vec gu = net.output_gradient(u, 0, &yv);
    const double slope = denorm_slope(net, 0, yv);
    for (int k = 0; k < 4; ++k) out.grad_q[gj[k]] = slope * gu[k];
    out.grad_x = slope * (base_[g].linear() * Vec3(gu.segment<3>(4)));
    return out;
}

inline Vec CSpaceModel::query_batch(const Mat& Q, const PointSet& X) const {
    const Eigen::Index n = Q.cols();
    if (Q.rows() != dof()) throw std::invalid_argument("batch has wrong dimension");
    Vec dmin(n);

    constexpr Eigen::Index kChunk = 4096;  // fixed: results independent of callers' batching
    // precompute, per obstacle point and group: base-frame coordinates, and
    // q-independent terms (palm net, box fallbacks)
    const int P = int(X.size());
    Mat xbase(3 * kNumGroups, std::max(P, 1));
    std::vector<std::vector<char>> use_net(kNumGroups, std::vector<char>(std::size_t(P), 0));
    Vec const_term = Vec::Constant(std::max(P, 1), std::numeric_limits<double>::infinity());
    for (int p = 0; p < P; ++p) {
        for (int g = 0; g < kNumGroups; ++g) {
            const Vec3 xb = base_inv_[g] * X[std::size_t(p)];
            xbase.block<3, 1>(3 * g, p) = xb;
            const auto sbox = boxes_[g].scaled(hull_scale_);
            const bool outside =
                (xb.array() < sbox.lo.array()).any() || (xb.array() > sbox.hi.array()).any();
            if (outside) {
                const_term[p] = std::min(const_term[p], box_distance(boxes_[g], xb, nullptr));
            } else if (g == palm_group_) {
                const Vec y = b_.palm_net.forward(xb);
                const_term[p] = std::min(
                    const_term[p],
                    denormalize_distance(y[0], b_.palm_net.d_up[0], b_.palm_net.d_low[0]));
            } else {
                use_net[std::size_t(g)][std::size_t(p)] = 1;
            }
        }
    }
    double const_min = std::numeric_limits<double>::infinity();
    for (int p = 0; p < P; ++p) const_min = std::min(const_min, const_term[p]);

    for (Eigen::Index start = 0; start < n; start += kChunk) {
        const Eigen::Index c = std::min(kChunk, n - start);
        const Mat Qc = Q.middleCols(start, c);

        // self nets, all pairs
        const Mat ys = b_.self_net.forward_batch(Qc);
        for (Eigen::Index i = 0; i < c; ++i) {
            double m = std::numeric_limits<double>::infinity();
            for (int j = 0; j < kNumGroupPairs; ++j)
                m = std::min(m, denormalize_distance(ys(j, i), b_.self_net.d_up[j],
                                                     b_.self_net.d_low[j]));
            dmin[start + i] = std::min(m, const_min);
        }

        // object nets: one GEMM per articulated group over (sample, point)
        for (int g = 0; g < kNumGroups; ++g) {
            if (g == palm_group_) continue;
            std::vector<int> pts;
            for (int p = 0; p < P; ++p)
                if (use_net[std::size_t(g)][std::size_t(p)]) pts.push_back(p);
            if (pts.empty()) continue;
            const Mlp& net = group_net(g);
            const auto& gj = b_.hand.group_joints(g);
            Mat U(7, c * Eigen::Index(pts.size()));
            for (Eigen::Index i = 0; i < c; ++i)
                for (std::size_t t = 0; t < pts.size(); ++t) {
                    const Eigen::Index col = i * Eigen::Index(pts.size()) + Eigen::Index(t);
                    for (int k = 0; k < 4; ++k) U(k, col) = Qc(gj[k], i);
                    U.block<3, 1>(4, col) = xbase.block<3, 1>(3 * g, pts[t]);
                }
            const Mat y = net.forward_batch(U);
            for (Eigen::Index i = 0; i < c; ++i)
                for (std::size_t t = 0; t < pts.size(); ++t) {
                    const double dg = denormalize_distance(
                        y(0, i * Eigen::Index(pts.size()) + Eigen::Index(t)), net.d_up[0],
                        net.d_low[0]);
                    dmin[start + i] = std::min(dmin[start + i], dg);
                }
        }
    }
    return dmin;
}

inline void CSpaceModel::query_batch_grad(const Mat& Q, const PointSet& X, Vec& d,
                                          Mat& grads) const {
    // values via the GEMM path, gradients via one backward pass per sample
    d = query_batch(Q, X);
    grads.resize(Q.rows(), Q.cols());
    for (Eigen::Index i = 0; i < Q.cols(); ++i) {
        const DistQuery r = query(Q.col(i), X, true);
        grads.col(i) = r.grad_q;
    }
}

// ---------------------------------------------------------------------------

/// Ground-truth field from the capsule geometry. Values are exact; gradients
/// are central differences. Slow -- used for verification, projection of
/// waypoints in tests, and baseline timing comparisons.
class ExactOracleField : public DistanceField {
public:
    explicit ExactOracleField(HandModel hand, double fd_step = 1e-6)
        : hand_(std::move(hand)), h_(fd_step) {}

    int dof() const override { return hand_.dof(); }
    const HandModel& hand() const { return hand_; }

    DistQuery query(const Vec& q, const PointSet& X, bool want_grad) const override {
        DistQuery out;
        const auto posed = posed_bodies(hand_, q);
        const Vec sd = self_distance_vector(hand_, posed);
        for (int j = 0; j < kNumGroupPairs; ++j)
            if (sd[j] < out.d) {
                out.d = sd[j];
                out.argmin_term = j;
            }
        out.argmin_point = -1;
        for (int p = 0; p < int(X.size()); ++p)
            for (const auto& pc : posed) {
                const double dd = signed_distance(pc, X[std::size_t(p)]);
                if (dd < out.d) {
                    out.d = dd;
                    out.argmin_point = p;
                    out.argmin_term = pc.group;
                }
            }
        if (!want_grad) return out;

        out.grad_q.resize(dof());
        for (int i = 0; i < dof(); ++i) {
            Vec qp = q, qm = q;
            qp[i] += h_;
            qm[i] -= h_;
            out.grad_q[i] =
                (exact_min_distance(hand_, qp, X) - exact_min_distance(hand_, qm, X)) / (2 * h_);
        }
        out.grad_x.setZero();
        if (out.argmin_point >= 0) {
            PointSet Xp = X;
            for (int k = 0; k < 3; ++k) {
                Xp[std::size_t(out.argmin_point)] = X[std::size_t(out.argmin_point)];
                Xp[std::size_t(out.argmin_point)][k] += h_;
                const double dp = exact_min_distance(hand_, q, Xp);
                Xp[std::size_t(out.argmin_point)][k] -= 2 * h_;
                const double dm = exact_min_distance(hand_, q, Xp);
                out.grad_x[k] = (dp - dm) / (2 * h_);
            }
        }
        return out;
    }

private:
    HandModel hand_;
    double h_;
};

}  // namespace dexplan
