#pragma once

// Labeled sample generation for the distance regressors, plus the .dxds
// on-disk format. Generation is a pure function of (hand, options, seed):
// every candidate index gets its own RNG substream, so results do not depend
// on chunking or worker count, and balancing keeps first-come candidates.

#include <dexplan/geometry.hpp>

#include <nlohmann/json.hpp>

#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace dexplan {

// ---------------------------------------------------------------------------
// distance normalization: positive side scaled by d_up, negative side by
// |d_low|, clamped to [-1, 1]. Keeps the sign (and hence the classification
// boundary) of the raw distance.

inline double normalize_distance(double d, double up, double low) {
    const double y = d >= 0 ? d / up : d / std::abs(low);
    return std::clamp(y, -1.0, 1.0);
}

inline double denormalize_distance(double y, double up, double low) {
    return y >= 0 ? y * up : y * std::abs(low);
}

/// Linear-interpolation percentile (p in [0,100]) of an unsorted sample.
inline double percentile(std::vector<double> v, double p) {
    if (v.empty()) throw std::invalid_argument("percentile of empty sample");
    std::sort(v.begin(), v.end());
    const double pos = (p / 100.0) * double(v.size() - 1);
    const std::size_t i = std::size_t(pos);
    if (i + 1 >= v.size()) return v.back();
    const double frac = pos - double(i);
    return v[i] * (1.0 - frac) + v[i + 1] * frac;
}

// ---------------------------------------------------------------------------

struct Dataset {
    nlohmann::json meta;  // kind, seed, hand hash, bounds, provenance of strata
    Mat inputs;           // one sample per row
    Mat targets;          // one sample per row (raw, unnormalized distances)
    Vec d_up, d_low;      // per-output normalization bounds

    Eigen::Index size() const { return inputs.rows(); }
    Eigen::Index in_dim() const { return inputs.cols(); }
    Eigen::Index out_dim() const { return targets.cols(); }

    Mat normalized_targets() const {
        Mat y = targets;
        for (Eigen::Index j = 0; j < y.cols(); ++j)
            for (Eigen::Index i = 0; i < y.rows(); ++i)
                y(i, j) = normalize_distance(targets(i, j), d_up[j], d_low[j]);
        return y;
    }

    void save(const std::string& path) const;
    static Dataset load(const std::string& path);
    void to_csv(std::ostream& os) const;
};

// --- .dxds binary format -----------------------------------------------------
// magic 'DXDS' | u32 version | u64 header length | header JSON (UTF-8)
// | n*in_dim f64 inputs | n*out_dim f64 targets, row-major, little-endian.

inline constexpr std::uint32_t kDxdsMagic = 0x53445844;  // "DXDS"
inline constexpr std::uint32_t kDxdsVersion = 1;

inline void Dataset::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    nlohmann::json h = meta;
    h["n"] = size();
    h["in_dim"] = in_dim();
    h["out_dim"] = out_dim();
    h["d_up"] = std::vector<double>(d_up.data(), d_up.data() + d_up.size());
    h["d_low"] = std::vector<double>(d_low.data(), d_low.data() + d_low.size());
    const std::string hs = h.dump();
    write_u32(os, kDxdsMagic);
    write_u32(os, kDxdsVersion);
    write_u64(os, hs.size());
    os.write(hs.data(), std::streamsize(hs.size()));
    for (Eigen::Index i = 0; i < inputs.rows(); ++i)
        for (Eigen::Index j = 0; j < inputs.cols(); ++j) write_f64(os, inputs(i, j));
    for (Eigen::Index i = 0; i < targets.rows(); ++i)
        for (Eigen::Index j = 0; j < targets.cols(); ++j) write_f64(os, targets(i, j));
    if (!os) throw std::runtime_error("short write: " + path);
}

inline Dataset Dataset::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    if (read_u32(is) != kDxdsMagic) throw std::runtime_error("not a .dxds file: " + path);
    const std::uint32_t ver = read_u32(is);
    if (ver != kDxdsVersion)
        throw std::runtime_error("unsupported .dxds version " + std::to_string(ver));
    const std::uint64_t hlen = read_u64(is);
    std::string hs(hlen, '\0');
    is.read(hs.data(), std::streamsize(hlen));
    Dataset ds;
    ds.meta = nlohmann::json::parse(hs);
    const auto n = ds.meta.at("n").get<Eigen::Index>();
    const auto in_dim = ds.meta.at("in_dim").get<Eigen::Index>();
    const auto out_dim = ds.meta.at("out_dim").get<Eigen::Index>();
    ds.inputs.resize(n, in_dim);
    ds.targets.resize(n, out_dim);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < in_dim; ++j) ds.inputs(i, j) = read_f64(is);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < out_dim; ++j) ds.targets(i, j) = read_f64(is);
    if (!is) throw std::runtime_error("truncated .dxds file: " + path);
    const auto up = ds.meta.at("d_up").get<std::vector<double>>();
    const auto low = ds.meta.at("d_low").get<std::vector<double>>();
    ds.d_up = Eigen::Map<const Vec>(up.data(), Eigen::Index(up.size()));
    ds.d_low = Eigen::Map<const Vec>(low.data(), Eigen::Index(low.size()));
    return ds;
}

inline void Dataset::to_csv(std::ostream& os) const {
    for (Eigen::Index j = 0; j < in_dim(); ++j) os << "in" << j << ",";
    for (Eigen::Index j = 0; j < out_dim(); ++j) os << "d" << j << (j + 1 < out_dim() ? "," : "\n");
    os.precision(12);
    for (Eigen::Index i = 0; i < size(); ++i) {
        for (Eigen::Index j = 0; j < in_dim(); ++j) os << inputs(i, j) << ",";
        for (Eigen::Index j = 0; j < out_dim(); ++j)
            os << targets(i, j) << (j + 1 < out_dim() ? "," : "\n");
    }
}

// ---------------------------------------------------------------------------
// generation

struct GenOptions {
    Eigen::Index n = 200000;  ///< total samples after balancing
    std::uint64_t seed = 0;
    bool balance = true;  ///< 50/50 free vs colliding (by min-distance sign)
    double up_percentile = 99.5;
    double low_percentile = 0.5;
    // strata for obstacle-point sampling: AABB scale factors and their
    // weights. The outermost scale bounds the region the net is trained on;
    // queries beyond it should fall back to a geometric bound.
    std::vector<double> strata_scale{1.05, 1.4, 2.5};
    std::vector<double> strata_weight{0.55, 0.3, 0.15};
};

namespace detail {

/// Normalization bounds from a target sample, one column per output. If an
/// output never goes negative in the sample, a symmetric fallback keeps the
/// negative branch well-defined.
inline void percentile_bounds(const Mat& sample_targets, double up_p, double low_p, Vec& d_up,
                              Vec& d_low) {
    const Eigen::Index m = sample_targets.cols();
    d_up.resize(m);
    d_low.resize(m);
    for (Eigen::Index j = 0; j < m; ++j) {
        std::vector<double> col(sample_targets.rows());
        for (Eigen::Index i = 0; i < sample_targets.rows(); ++i) col[i] = sample_targets(i, j);
        d_up[j] = std::max(percentile(col, up_p), 1e-6);
        const double low = percentile(col, low_p);
        d_low[j] = low < -1e-6 ? low : -d_up[j];
    }
}

struct Aabb {
    Vec3 lo{0, 0, 0}, hi{0, 0, 0};
    Aabb scaled(double s) const {
        const Vec3 c = 0.5 * (lo + hi), h = 0.5 * (hi - lo) * s;
        return {c - h, c + h};
    }
};

/// Pose one group's capsules in the group base frame, given only that group's
/// joint values (in group_joints order). Much cheaper than full-hand FK when
/// labeling millions of candidates.
inline void group_capsules_in_base(const HandModel& hand, int group, const Vec& qg,
                                   std::vector<PosedCapsule>& out) {
    const auto& gj = hand.group_joints(group);
    out.clear();
    if (gj.empty()) {  // palm: bodies live in the hand frame already
        for (int ib : hand.group_bodies(group)) {
            const Body& b = hand.bodies[ib];
            out.push_back({b.cap.a, b.cap.b, b.cap.radius, group});
        }
        return;
    }
    std::vector<Iso3> pose(gj.size());
    const Iso3 base_inv = hand.base_transform(group).inverse();
    for (std::size_t k = 0; k < gj.size(); ++k) {
        const Joint& jt = hand.joints[gj[k]];
        const Iso3 local = jt.origin * Eigen::AngleAxisd(qg[Eigen::Index(k)], jt.axis);
        if (jt.parent < 0) {
            pose[k] = base_inv * local;
        } else {
            std::size_t pk = 0;
            while (gj[pk] != jt.parent) ++pk;
            pose[k] = pose[pk] * local;
        }
    }
    for (int ib : hand.group_bodies(group)) {
        const Body& b = hand.bodies[ib];
        std::size_t k = 0;
        while (gj[k] != b.link) ++k;
        out.push_back({pose[k] * b.cap.a, pose[k] * b.cap.b, b.cap.radius, group});
    }
}

/// Bounding box of one group's bodies over a deterministic sweep of its own
/// joints (other joints pinned at zero), inflated by the capsule radii.
/// Expressed in the group's base frame (identity for the palm).
inline Aabb group_swept_aabb(const HandModel& hand, int group, int draws = 2000) {
    Aabb box;
    box.lo.setConstant(std::numeric_limits<double>::infinity());
    box.hi.setConstant(-std::numeric_limits<double>::infinity());
    Rng rng(fnv1a64("swept-aabb") ^ std::uint64_t(group));
    const Vec lo = hand.lower_limits(), hi = hand.upper_limits();
    const auto& gj = hand.group_joints(group);
    std::vector<PosedCapsule> caps;
    Vec qg(Eigen::Index(gj.size()));
    for (int t = 0; t < draws; ++t) {
        for (std::size_t k = 0; k < gj.size(); ++k) qg[Eigen::Index(k)] = rng.uniform(lo[gj[k]], hi[gj[k]]);
        group_capsules_in_base(hand, group, qg, caps);
        for (const auto& pc : caps) {
            for (const Vec3& p : {pc.a, pc.b}) {
                box.lo = box.lo.cwiseMin(p - Vec3::Constant(pc.radius));
                box.hi = box.hi.cwiseMax(p + Vec3::Constant(pc.radius));
            }
        }
        if (gj.empty()) break;  // static group: one pass suffices
    }
    return box;
}

}  // namespace detail

/// Self-collision dataset: inputs are joint vectors, targets the 10 per-pair
/// distances. Balanced on the sign of the minimum when opts.balance is set.
inline Dataset generate_self_dataset(const HandModel& hand, const GenOptions& opts) {
    const Vec lo = hand.lower_limits(), hi = hand.upper_limits();
    auto candidate = [&](std::uint64_t i) {
        Rng rng(derive_seed(opts.seed, i));
        return rng.uniform_vec(lo, hi);
    };

    Dataset ds;
    ds.inputs.resize(opts.n, hand.dof());
    ds.targets.resize(opts.n, kNumGroupPairs);
    const Eigen::Index half = opts.n / 2;
    Eigen::Index nfree = 0, ncol = 0, row = 0;
    for (std::uint64_t i = 0; row < opts.n; ++i) {
        if (i > std::uint64_t(opts.n) * 1000 + 1000000)
            throw std::runtime_error("self dataset balancing did not converge");
        const Vec q = candidate(i);
        const Vec d = self_distance_vector(hand, q);
        const bool collided = d.minCoeff() <= 0;
        if (opts.balance) {
            if (collided && ncol >= opts.n - half) continue;
            if (!collided && nfree >= half) continue;
        }
        (collided ? ncol : nfree)++;
        ds.inputs.row(row) = q.transpose();
        ds.targets.row(row) = d.transpose();
        ++row;
    }
    // normalization bounds from the balanced sample itself, so the negative
    // branch keeps resolution even when raw draws rarely collide
    detail::percentile_bounds(ds.targets, opts.up_percentile, opts.low_percentile, ds.d_up,
                              ds.d_low);

    ds.meta["kind"] = "self";
    ds.meta["hand"] = hand.name;
    ds.meta["hand_hash"] = to_hex(hand.config_hash());
    ds.meta["seed"] = opts.seed;
    ds.meta["balanced"] = opts.balance;
    ds.meta["n_free"] = nfree;
    ds.meta["n_collided"] = ncol;
    return ds;
}

/// Hand-object dataset for one group. Inputs are [q_g ; x_g]: the group's own
/// joint values followed by an obstacle point in the group's base frame (for
/// the palm there are no joints and x is in the hand frame). Target is the
/// minimum signed distance from the point to the group's bodies.
inline Dataset generate_object_dataset(const HandModel& hand, const std::string& group_name,
                                       const GenOptions& opts) {
    const int group = hand.group_index(group_name);
    const auto& gj = hand.group_joints(group);
    const int nq = int(gj.size());
    const Vec lo = hand.lower_limits(), hi = hand.upper_limits();
    const detail::Aabb box0 = detail::group_swept_aabb(hand, group);

    if (opts.strata_scale.size() != opts.strata_weight.size() || opts.strata_scale.empty())
        throw std::invalid_argument("strata_scale/strata_weight mismatch");
    double wsum = 0;
    for (double w : opts.strata_weight) wsum += w;

    std::vector<detail::Aabb> strata;
    for (double s : opts.strata_scale) strata.push_back(box0.scaled(s));

    // candidate draw: group joints + a point in one stratum box (base frame)
    auto candidate = [&](std::uint64_t i, Vec& qg, Vec3& x) {
        Rng rng(derive_seed(opts.seed ^ fnv1a64(group_name), i));
        qg.resize(nq);
        for (int k = 0; k < nq; ++k) qg[k] = rng.uniform(lo[gj[k]], hi[gj[k]]);
        double u = rng.uniform() * wsum;
        std::size_t s = 0;
        while (s + 1 < strata.size() && u > opts.strata_weight[s]) {
            u -= opts.strata_weight[s];
            ++s;
        }
        for (int k = 0; k < 3; ++k) x[k] = rng.uniform(strata[s].lo[k], strata[s].hi[k]);
    };

    std::vector<PosedCapsule> caps;
    auto label = [&](const Vec& qg, const Vec3& x_base) {
        detail::group_capsules_in_base(hand, group, qg, caps);
        double best = std::numeric_limits<double>::infinity();
        for (const auto& pc : caps) best = std::min(best, signed_distance(pc, x_base));
        return best;
    };

    Dataset ds;
    ds.inputs.resize(opts.n, nq + 3);
    ds.targets.resize(opts.n, 1);
    const Eigen::Index half = opts.n / 2;
    Eigen::Index nfree = 0, ncol = 0, row = 0;
    Vec qg;
    Vec3 x;
    for (std::uint64_t i = 0; row < opts.n; ++i) {
        if (i > std::uint64_t(opts.n) * 1000 + 1000000)
            throw std::runtime_error("object dataset balancing did not converge for " + group_name);
        candidate(i, qg, x);
        const double d = label(qg, x);
        const bool collided = d <= 0;
        if (opts.balance) {
            if (collided && ncol >= opts.n - half) continue;
            if (!collided && nfree >= half) continue;
        }
        (collided ? ncol : nfree)++;
        for (int k = 0; k < nq; ++k) ds.inputs(row, k) = qg[k];
        ds.inputs(row, nq + 0) = x[0];
        ds.inputs(row, nq + 1) = x[1];
        ds.inputs(row, nq + 2) = x[2];
        ds.targets(row, 0) = d;
        ++row;
    }
    detail::percentile_bounds(ds.targets, opts.up_percentile, opts.low_percentile, ds.d_up,
                              ds.d_low);

    ds.meta["kind"] = "object";
    ds.meta["group"] = group_name;
    ds.meta["hand"] = hand.name;
    ds.meta["hand_hash"] = to_hex(hand.config_hash());
    ds.meta["seed"] = opts.seed;
    ds.meta["balanced"] = opts.balance;
    ds.meta["n_free"] = nfree;
    ds.meta["n_collided"] = ncol;
    ds.meta["aabb_lo"] = std::vector<double>{box0.lo[0], box0.lo[1], box0.lo[2]};
    ds.meta["aabb_hi"] = std::vector<double>{box0.hi[0], box0.hi[1], box0.hi[2]};
    ds.meta["strata_scale"] = opts.strata_scale;
    ds.meta["strata_weight"] = opts.strata_weight;
    return ds;
}

/// Deterministic shuffled split; the second part holds ceil(test_fraction*n).
inline std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double test_fraction,
                                                 std::uint64_t seed) {
    if (!(test_fraction >= 0 && test_fraction < 1))
        throw std::invalid_argument("test_fraction must be in [0,1)");
    std::vector<Eigen::Index> idx(std::size_t(ds.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = Eigen::Index(i);
    Rng rng(derive_seed(seed, 0x5704171));
    for (std::size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[rng.uniform_int(i)]);

    const Eigen::Index ntest = Eigen::Index(std::ceil(test_fraction * double(ds.size())));
    Dataset train, test;
    train.meta = ds.meta;
    test.meta = ds.meta;
    train.d_up = test.d_up = ds.d_up;
    train.d_low = test.d_low = ds.d_low;
    train.inputs.resize(ds.size() - ntest, ds.in_dim());
    train.targets.resize(ds.size() - ntest, ds.out_dim());
    test.inputs.resize(ntest, ds.in_dim());
    test.targets.resize(ntest, ds.out_dim());
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
        if (i < ntest) {
            test.inputs.row(i) = ds.inputs.row(idx[std::size_t(i)]);
            test.targets.row(i) = ds.targets.row(idx[std::size_t(i)]);
        } else {
            train.inputs.row(i - ntest) = ds.inputs.row(idx[std::size_t(i)]);
            train.targets.row(i - ntest) = ds.targets.row(idx[std::size_t(i)]);
        }
    }
    train.meta["split"] = "train";
    test.meta["split"] = "test";
    return {std::move(train), std::move(test)};
}

}  // namespace dexplan
