#pragma once

// Articulated hand geometry: capsule/sphere bodies on revolute chains,
// forward kinematics, and the analytic signed-distance queries used as
// ground truth everywhere else in the library.

#include <dexplan/common.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace dexplan {

struct Capsule {
    Vec3 a{0, 0, 0};   ///< first axis endpoint, link frame (m)
    Vec3 b{0, 0, 0};   ///< second axis endpoint; a == b degenerates to a sphere
    double radius = 0;
};

struct Body {
    std::string name;
    int link = -1;  ///< joint index the body is rigidly attached to; -1 = hand frame
    int group = -1;
    Capsule cap;
};

struct Joint {
    std::string name;
    int parent = -1;  ///< parent joint index; -1 = hand frame
    int group = -1;   ///< finger chain this joint belongs to
    Iso3 origin = Iso3::Identity();
    Vec3 axis{0, 0, 1};
    double lo = 0, hi = 0;
};

/// Capsule with endpoints resolved into the hand frame.
struct PosedCapsule {
    Vec3 a, b;
    double radius;
    int group;
};

using PointSet = std::vector<Vec3>;

inline constexpr int kNumGroups = 5;
inline constexpr int kNumGroupPairs = 10;

// ---------------------------------------------------------------------------
// primitive distances

/// Squared distance between segments [p1,q1] and [p2,q2] (Ericson, RTCD 5.1.9).
/// Handles degenerate (point) segments.
inline double seg_seg_sqdist(const Vec3& p1, const Vec3& q1, const Vec3& p2, const Vec3& q2) {
    constexpr double eps = 1e-12;
    const Vec3 d1 = q1 - p1;
    const Vec3 d2 = q2 - p2;
    const Vec3 r = p1 - p2;
    const double a = d1.squaredNorm();
    const double e = d2.squaredNorm();
    const double f = d2.dot(r);

    double s = 0, t = 0;
    if (a <= eps && e <= eps) {
        return r.squaredNorm();
    }
    if (a <= eps) {
        t = std::clamp(f / e, 0.0, 1.0);
    } else {
        const double c = d1.dot(r);
        if (e <= eps) {
            s = std::clamp(-c / a, 0.0, 1.0);
        } else {
            const double b = d1.dot(d2);
            const double denom = a * e - b * b;
            if (denom > eps) {
                s = std::clamp((b * f - c * e) / denom, 0.0, 1.0);
            }
            t = (b * s + f) / e;
            if (t < 0.0) {
                t = 0.0;
                s = std::clamp(-c / a, 0.0, 1.0);
            } else if (t > 1.0) {
                t = 1.0;
                s = std::clamp((b - c) / a, 0.0, 1.0);
            }
        }
    }
    const Vec3 c1 = p1 + d1 * s;
    const Vec3 c2 = p2 + d2 * t;
    return (c1 - c2).squaredNorm();
}

inline double seg_point_sqdist(const Vec3& p, const Vec3& q, const Vec3& x) {
    const Vec3 d = q - p;
    const double nn = d.squaredNorm();
    if (nn <= 1e-12) return (x - p).squaredNorm();
    const double t = std::clamp((x - p).dot(d) / nn, 0.0, 1.0);
    return (x - (p + t * d)).squaredNorm();
}

/// Signed distance between two posed capsules; negative = penetration depth.
inline double signed_distance(const PosedCapsule& u, const PosedCapsule& v) {
    return std::sqrt(seg_seg_sqdist(u.a, u.b, v.a, v.b)) - u.radius - v.radius;
}

/// Signed distance between a posed capsule and a point.
inline double signed_distance(const PosedCapsule& u, const Vec3& x) {
    return std::sqrt(seg_point_sqdist(u.a, u.b, x)) - u.radius;
}

// ---------------------------------------------------------------------------

class HandModel {
public:
    std::string name;
    std::vector<std::string> groups;  // exactly 5, order fixes the pair layout
    std::vector<Joint> joints;        // index == position in the joint vector q
    std::vector<Body> bodies;

    int dof() const { return int(joints.size()); }

    Vec lower_limits() const {
        Vec lo(dof());
        for (int i = 0; i < dof(); ++i) lo[i] = joints[i].lo;
        return lo;
    }
    Vec upper_limits() const {
        Vec hi(dof());
        for (int i = 0; i < dof(); ++i) hi[i] = joints[i].hi;
        return hi;
    }

    int group_index(const std::string& g) const {
        for (int i = 0; i < int(groups.size()); ++i)
            if (groups[i] == g) return i;
        throw std::invalid_argument("unknown group: " + g);
    }

    /// The 10 unordered group pairs, lexicographic in group index. Entry k of a
    /// self-distance vector refers to group_pairs()[k].
    const std::array<std::pair<int, int>, kNumGroupPairs>& group_pairs() const { return pairs_; }

    /// Joint indices of one finger chain, in q order.
    const std::vector<int>& group_joints(int group) const { return group_joints_[group]; }
    /// Body indices belonging to one group.
    const std::vector<int>& group_bodies(int group) const { return group_bodies_[group]; }

    /// Fixed transform of a finger chain's root joint (hand frame -> chain base).
    /// Does not depend on q; the root joint's own rotation is not included.
    Iso3 base_transform(int group) const {
        for (int j : group_joints_[group])
            if (joints[j].parent < 0) return joints[j].origin;
        throw std::logic_error("group has no root joint");
    }

    /// Sum of capsule extents; a generous Lipschitz constant for the minimum
    /// distance as a function of q.
    double link_length_sum() const {
        double s = 0;
        for (const auto& b : bodies) s += (b.cap.a - b.cap.b).norm() + 2.0 * b.cap.radius;
        return s;
    }

    /// Identity of the kinematic/geometric description. Doubles are quantized
    /// to 9 significant digits so that value-preserving round trips (JSON,
    /// rpy extraction) keep the hash stable.
    std::uint64_t config_hash() const {
        std::string s = name;
        char buf[40];
        auto add = [&](double v) {
            if (std::abs(v) < 1e-12) v = 0.0;  // fold numerical dust and -0.0
            std::snprintf(buf, sizeof buf, "|%.9e", v);
            s += buf;
        };
        for (const auto& g : groups) {
            s += '|';
            s += g;
        }
        for (const auto& jt : joints) {
            s += '|';
            s += jt.name;
            s += '|' + std::to_string(jt.parent) + '|' + std::to_string(jt.group);
            const Vec3 xyz = jt.origin.translation();
            const Vec3 rpy = rpy_of(jt.origin.linear());
            for (int i = 0; i < 3; ++i) add(xyz[i]);
            for (int i = 0; i < 3; ++i) add(rpy[i]);
            for (int i = 0; i < 3; ++i) add(jt.axis[i]);
            add(jt.lo);
            add(jt.hi);
        }
        for (const auto& b : bodies) {
            s += '|';
            s += b.name;
            s += '|' + std::to_string(b.link) + '|' + std::to_string(b.group);
            for (int i = 0; i < 3; ++i) add(b.cap.a[i]);
            for (int i = 0; i < 3; ++i) add(b.cap.b[i]);
            add(b.cap.radius);
        }
        return fnv1a64(s);
    }

    // -- construction -------------------------------------------------------

    static HandModel from_json(const nlohmann::json& j) {
        HandModel h;
        h.name = j.at("name").get<std::string>();
        h.groups = j.at("groups").get<std::vector<std::string>>();
        if (h.groups.size() != kNumGroups)
            throw std::invalid_argument("hand model must define exactly 5 groups");

        for (const auto& jj : j.at("joints")) {
            Joint jt;
            jt.name = jj.at("name").get<std::string>();
            jt.parent = jj.at("parent").get<int>();
            jt.group = h.group_index(jj.at("group").get<std::string>());
            const auto xyz = jj.at("origin_xyz").get<std::array<double, 3>>();
            const auto rpy = jj.at("origin_rpy").get<std::array<double, 3>>();
            jt.origin = make_origin(xyz, rpy);
            const auto ax = jj.at("axis").get<std::array<double, 3>>();
            jt.axis = Vec3(ax[0], ax[1], ax[2]).normalized();
            const auto lim = jj.at("limits").get<std::array<double, 2>>();
            jt.lo = lim[0];
            jt.hi = lim[1];
            if (!(jt.lo < jt.hi)) throw std::invalid_argument("joint limits must satisfy lo < hi");
            if (jt.parent >= int(h.joints.size()))
                throw std::invalid_argument("joint parents must precede children");
            h.joints.push_back(jt);
        }

        for (const auto& jb : j.at("bodies")) {
            Body b;
            b.name = jb.at("name").get<std::string>();
            b.link = jb.at("link").get<int>();
            b.group = h.group_index(jb.at("group").get<std::string>());
            const auto a = jb.at("a").get<std::array<double, 3>>();
            const auto bb = jb.at("b").get<std::array<double, 3>>();
            b.cap.a = Vec3(a[0], a[1], a[2]);
            b.cap.b = Vec3(bb[0], bb[1], bb[2]);
            b.cap.radius = jb.at("radius").get<double>();
            if (!(b.cap.radius > 0)) throw std::invalid_argument("capsule radius must be > 0");
            if (!b.cap.a.allFinite() || !b.cap.b.allFinite())
                throw std::invalid_argument("capsule endpoints must be finite");
            if (b.link >= int(h.joints.size()))
                throw std::invalid_argument("body link out of range");
            h.bodies.push_back(b);
        }

        h.finalize();
        return h;
    }

    static HandModel load(const std::string& path) {
        return from_json(nlohmann::json::parse(read_text_file(path)));
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["name"] = name;
        j["groups"] = groups;
        auto arr3 = [](const Vec3& v) { return std::array<double, 3>{v[0], v[1], v[2]}; };
        for (const auto& jt : joints) {
            const Vec3 xyz = jt.origin.translation();
            const Vec3 rpy = rpy_of(jt.origin.linear());
            j["joints"].push_back({{"name", jt.name},
                                   {"parent", jt.parent},
                                   {"group", groups[jt.group]},
                                   {"origin_xyz", arr3(xyz)},
                                   {"origin_rpy", arr3(rpy)},
                                   {"axis", arr3(jt.axis)},
                                   {"limits", std::array<double, 2>{jt.lo, jt.hi}}});
        }
        for (const auto& b : bodies) {
            j["bodies"].push_back({{"name", b.name},
                                   {"link", b.link},
                                   {"group", groups[b.group]},
                                   {"a", arr3(b.cap.a)},
                                   {"b", arr3(b.cap.b)},
                                   {"radius", b.cap.radius}});
        }
        return j;
    }

    void finalize() {
        group_joints_.assign(kNumGroups, {});
        group_bodies_.assign(kNumGroups, {});
        for (int i = 0; i < int(joints.size()); ++i) group_joints_[joints[i].group].push_back(i);
        for (int i = 0; i < int(bodies.size()); ++i) group_bodies_[bodies[i].group].push_back(i);
        int k = 0;
        for (int i = 0; i < kNumGroups; ++i)
            for (int j = i + 1; j < kNumGroups; ++j) pairs_[k++] = {i, j};
    }

    static Iso3 make_origin(const std::array<double, 3>& xyz, const std::array<double, 3>& rpy) {
        Iso3 t = Iso3::Identity();
        t.translation() = Vec3(xyz[0], xyz[1], xyz[2]);
        t.linear() = (Eigen::AngleAxisd(rpy[2], Vec3::UnitZ()) *
                      Eigen::AngleAxisd(rpy[1], Vec3::UnitY()) *
                      Eigen::AngleAxisd(rpy[0], Vec3::UnitX()))
                         .toRotationMatrix();
        return t;
    }

    static Vec3 rpy_of(const Eigen::Matrix3d& r) {
        // inverse of Rz(y)*Ry(p)*Rx(r), URDF convention
        const double pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
        double roll, yaw;
        if (std::abs(std::cos(pitch)) > 1e-9) {
            roll = std::atan2(r(2, 1), r(2, 2));
            yaw = std::atan2(r(1, 0), r(0, 0));
        } else {
            roll = std::atan2(-r(1, 2), r(1, 1));
            yaw = 0;
        }
        return {roll, pitch, yaw};
    }

private:
    std::array<std::pair<int, int>, kNumGroupPairs> pairs_{};
    std::vector<std::vector<int>> group_joints_;
    std::vector<std::vector<int>> group_bodies_;
};

// ---------------------------------------------------------------------------
// forward kinematics

/// Cumulative joint frames for configuration q. pose[j] includes joint j's
/// own rotation. Throws on dimension mismatch.
inline std::vector<Iso3> joint_poses(const HandModel& hand, const Vec& q) {
    if (q.size() != hand.dof())
        throw std::invalid_argument("joint vector size does not match hand DoF");
    std::vector<Iso3> pose(hand.joints.size());
    for (std::size_t j = 0; j < hand.joints.size(); ++j) {
        const Joint& jt = hand.joints[j];
        Iso3 local = jt.origin * Eigen::AngleAxisd(q[Eigen::Index(j)], jt.axis);
        pose[j] = jt.parent < 0 ? local : pose[jt.parent] * local;
    }
    return pose;
}

/// Rigid transforms of all bodies in the hand frame. Palm bodies (link -1)
/// are identity-transformed.
inline std::vector<Iso3> forward_kinematics(const HandModel& hand, const Vec& q) {
    const auto jp = joint_poses(hand, q);
    std::vector<Iso3> out(hand.bodies.size());
    for (std::size_t i = 0; i < hand.bodies.size(); ++i)
        out[i] = hand.bodies[i].link < 0 ? Iso3::Identity() : jp[hand.bodies[i].link];
    return out;
}

/// All body capsules with endpoints resolved into the hand frame.
inline std::vector<PosedCapsule> posed_bodies(const HandModel& hand, const Vec& q) {
    const auto jp = joint_poses(hand, q);
    std::vector<PosedCapsule> out(hand.bodies.size());
    for (std::size_t i = 0; i < hand.bodies.size(); ++i) {
        const Body& b = hand.bodies[i];
        if (b.link < 0) {
            out[i] = {b.cap.a, b.cap.b, b.cap.radius, b.group};
        } else {
            out[i] = {jp[b.link] * b.cap.a, jp[b.link] * b.cap.b, b.cap.radius, b.group};
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// minimum-distance queries

/// Per-group-pair minimum signed distance, length 10. Entry k corresponds to
/// hand.group_pairs()[k].
inline Vec self_distance_vector(const HandModel& hand, const std::vector<PosedCapsule>& posed) {
    Vec d = Vec::Constant(kNumGroupPairs, std::numeric_limits<double>::infinity());
    const auto& pairs = hand.group_pairs();
    for (int k = 0; k < kNumGroupPairs; ++k) {
        const auto [ga, gb] = pairs[k];
        double best = std::numeric_limits<double>::infinity();
        for (int ia : hand.group_bodies(ga))
            for (int ib : hand.group_bodies(gb))
                best = std::min(best, signed_distance(posed[ia], posed[ib]));
        d[k] = best;
    }
    return d;
}

inline Vec self_distance_vector(const HandModel& hand, const Vec& q) {
    return self_distance_vector(hand, posed_bodies(hand, q));
}

/// Per-group minimum signed distance from a point, length 5 in group order.
inline Vec point_distance_vector(const HandModel& hand, const std::vector<PosedCapsule>& posed,
                                 const Vec3& x) {
    Vec d = Vec::Constant(kNumGroups, std::numeric_limits<double>::infinity());
    for (const auto& pc : posed) d[pc.group] = std::min(d[pc.group], signed_distance(pc, x));
    return d;
}

inline Vec point_distance_vector(const HandModel& hand, const Vec& q, const Vec3& x) {
    return point_distance_vector(hand, posed_bodies(hand, q), x);
}

/// Minimum over all self group pairs and all point-group distances. With an
/// empty point set this reduces to the self-collision minimum.
inline double exact_min_distance(const HandModel& hand, const std::vector<PosedCapsule>& posed,
                                 const PointSet& X) {
    double best = self_distance_vector(hand, posed).minCoeff();
    for (const Vec3& x : X)
        for (const auto& pc : posed) best = std::min(best, signed_distance(pc, x));
    return best;
}

inline double exact_min_distance(const HandModel& hand, const Vec& q, const PointSet& X) {
    return exact_min_distance(hand, posed_bodies(hand, q), X);
}

}  // namespace dexplan
