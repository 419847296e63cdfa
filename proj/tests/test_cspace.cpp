#include <catch2/catch_amalgamated.hpp>

#include <dexplan/cspace.hpp>

#include <filesystem>

#include "oracles.hpp"

using namespace dexplan;

namespace {

HandModel test_hand() { return HandModel::load(std::string(DEXPLAN_DATA_DIR) + "/allegro_like.json"); }

// A two-layer ReLU net computing exactly y = A x + c: relu(Ax) - relu(-Ax)
// recovers Ax for every x. With the default unit bounds denormalization is
// the identity, so the assembled field has closed-form values and gradients.
Mlp affine_net(const Mat& A, const Vec& c) {
    const Eigen::Index n = A.cols(), m = A.rows();
    Mlp net = Mlp::create(int(n), int(m), {int(2 * m)}, 1);
    net.W[0].topRows(m) = A;
    net.W[0].bottomRows(m) = -A;
    net.b[0].setZero();
    net.W[1].setZero();
    net.W[1].leftCols(m) = Mat::Identity(m, m);
    net.W[1].rightCols(m) = -Mat::Identity(m, m);
    net.b[1] = c;
    return net;
}

struct AffineParts {
    Mat A_self{10, 16};
    Vec c_self{10};
    Mat A_palm{1, 3};
    Vec c_palm{1};
    Mat A_finger{1, 7};
    Vec c_finger{1};
    Mat A_thumb{1, 7};
    Vec c_thumb{1};
};

ModelBundle affine_bundle(const AffineParts& p) {
    ModelBundle b;
    b.hand = test_hand();
    b.self_net = affine_net(p.A_self, p.c_self);
    b.palm_net = affine_net(p.A_palm, p.c_palm);
    b.finger_net = affine_net(p.A_finger, p.c_finger);
    b.thumb_net = affine_net(p.A_thumb, p.c_thumb);
    return b;
}

AffineParts baseline_parts(Rng& rng) {
    AffineParts p;
    auto fill = [&](Mat& m, double scale) {
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = scale * rng.uniform(-1.0, 1.0);
    };
    fill(p.A_self, 0.01);
    fill(p.A_palm, 0.01);
    fill(p.A_finger, 0.01);
    fill(p.A_thumb, 0.01);
    p.c_self.setConstant(0.4);
    p.c_palm.setConstant(0.5);
    p.c_finger.setConstant(0.5);
    p.c_thumb.setConstant(0.5);
    return p;
}

Vec random_config(const HandModel& hand, Rng& rng) {
    return rng.uniform_vec(hand.lower_limits(), hand.upper_limits());
}

}  // namespace

TEST_CASE("collision state classification uses zero and the safety margin") {
    CHECK(collision_state(-0.01, 0.005) == CollisionState::kCollided);
    CHECK(collision_state(0.0, 0.005) == CollisionState::kCollided);
    CHECK(collision_state(0.003, 0.005) == CollisionState::kUnsafe);
    CHECK(collision_state(0.005, 0.005) == CollisionState::kUnsafe);
    CHECK(collision_state(0.02, 0.005) == CollisionState::kFree);
}

TEST_CASE("self term: value, argmin pair, and exact chain-rule gradient") {
    Rng rng(91);
    AffineParts parts = baseline_parts(rng);
    // distinct offsets so the minimizing pair is unambiguous and switchable
    for (int j = 0; j < 10; ++j) parts.c_self[j] = 0.10 + 0.01 * j;
    CSpaceModel field(affine_bundle(parts));
    const HandModel& hand = field.hand();

    for (int trial = 0; trial < 20; ++trial) {
        const Vec q = random_config(hand, rng);
        const Vec y = parts.A_self * q + parts.c_self;
        Eigen::Index jstar = 0;
        y.minCoeff(&jstar);
        REQUIRE(std::abs(y[jstar] - y.minCoeff()) == 0.0);

        const DistQuery r = field.query(q, {}, true);
        CHECK(r.argmin_point == -1);
        CHECK(r.argmin_term == int(jstar));
        CHECK(r.d == Catch::Approx(y[jstar]).margin(1e-13));
        CHECK((r.grad_q - parts.A_self.row(jstar).transpose()).norm() < 1e-12);
        CHECK(r.grad_x.norm() == 0.0);
    }

    // forcing another pair to the bottom moves the argmin and the gradient row
    AffineParts flipped = parts;
    flipped.c_self[7] = -0.2;
    CSpaceModel field2(affine_bundle(flipped));
    const Vec q = random_config(hand, rng);
    const DistQuery r = field2.query(q, {}, true);
    CHECK(r.argmin_term == 7);
    CHECK((r.grad_q - flipped.A_self.row(7).transpose()).norm() < 1e-12);
}

TEST_CASE("palm term: point gradient in the hand frame, zero config gradient") {
    Rng rng(92);
    AffineParts parts = baseline_parts(rng);
    parts.A_palm << 0.11, -0.23, 0.31;
    parts.c_palm[0] = -0.02;  // palm term attains below everything else
    CSpaceModel field(affine_bundle(parts));
    const HandModel& hand = field.hand();

    const Vec3 x0(0.010, 0.020, 0.040);  // well inside the palm swept volume
    const int palm = hand.group_index("palm");
    {
        const auto box = detail::group_swept_aabb(hand, palm);
        REQUIRE(((x0.array() >= box.lo.array()).all() && (x0.array() <= box.hi.array()).all()));
    }

    const Vec q = random_config(hand, rng);
    const DistQuery r = field.query(q, {x0}, true);
    const double expected = (parts.A_palm * x0)(0) + parts.c_palm[0];
    CHECK(r.d == Catch::Approx(expected).margin(1e-13));
    CHECK(r.argmin_point == 0);
    CHECK(r.argmin_term == palm);
    CHECK(r.grad_q.norm() == 0.0);
    // palm base frame is the hand frame, so the gradient maps through directly
    CHECK((r.grad_x - parts.A_palm.row(0).transpose()).norm() < 1e-12);
}

TEST_CASE("thumb term: joint gradient lands on thumb joints, point gradient rotates") {
    Rng rng(93);
    AffineParts parts = baseline_parts(rng);
    for (int k = 0; k < 7; ++k) parts.A_thumb(0, k) = 0.05 * (k + 1) * (k % 2 ? -1 : 1);
    parts.c_thumb[0] = -0.10;
    CSpaceModel field(affine_bundle(parts));
    const HandModel& hand = field.hand();

    const int thumb = hand.group_index("thumb");
    const Iso3 base = hand.base_transform(thumb);
    const Vec3 x0(0.050, -0.060, 0.030);
    const Vec3 xb = base.inverse() * x0;
    {
        const auto box = detail::group_swept_aabb(hand, thumb).scaled(5.0);
        REQUIRE(((xb.array() >= box.lo.array()).all() && (xb.array() <= box.hi.array()).all()));
    }

    const Vec q = random_config(hand, rng);
    const auto& gj = hand.group_joints(thumb);
    Vec u(7);
    for (int k = 0; k < 4; ++k) u[k] = q[gj[std::size_t(k)]];
    u.segment<3>(4) = xb;
    const double expected = (parts.A_thumb * u)(0) + parts.c_thumb[0];

    const DistQuery r = field.query(q, {x0}, true);
    CHECK(r.d == Catch::Approx(expected).margin(1e-13));
    CHECK(r.argmin_point == 0);
    CHECK(r.argmin_term == thumb);

    Vec grad_q_expected = Vec::Zero(hand.dof());
    for (int k = 0; k < 4; ++k) grad_q_expected[gj[std::size_t(k)]] = parts.A_thumb(0, k);
    CHECK((r.grad_q - grad_q_expected).norm() < 1e-12);
    const Vec3 gx_expected = base.linear() * Vec3(parts.A_thumb.row(0).tail(3).transpose());
    CHECK((r.grad_x - gx_expected).norm() < 1e-12);
    // the thumb mount is genuinely rotated; the frame map must matter
    CHECK((gx_expected - Vec3(parts.A_thumb.row(0).tail(3).transpose())).norm() > 1e-3);
}

TEST_CASE("far points fall back to the swept-box lower bound") {
    Rng rng(94);
    AffineParts parts = baseline_parts(rng);
    for (auto* c : {&parts.c_self, &parts.c_palm, &parts.c_finger, &parts.c_thumb})
        c->setConstant(10.0);  // nets cannot win; only box terms compete
    CSpaceModel field(affine_bundle(parts));
    const HandModel& hand = field.hand();

    const Vec3 x_far(0.8, -0.3, 1.0);
    double expected = std::numeric_limits<double>::infinity();
    int gstar = -1;
    Vec3 grad_expected = Vec3::Zero();
    for (int g = 0; g < kNumGroups; ++g) {
        const Iso3 base = hand.group_joints(g).empty() ? Iso3::Identity() : hand.base_transform(g);
        const Vec3 xb = base.inverse() * x_far;
        const auto box = detail::group_swept_aabb(hand, g);
        const auto sbox = box.scaled(5.0);
        REQUIRE(((xb.array() < sbox.lo.array()).any() || (xb.array() > sbox.hi.array()).any()));
        const Vec3 cl = xb.cwiseMax(box.lo).cwiseMin(box.hi);
        const double d = (xb - cl).norm();
        if (d < expected) {
            expected = d;
            gstar = g;
            grad_expected = base.linear() * Vec3((xb - cl) / d);
        }
    }

    const Vec q = random_config(hand, rng);
    const DistQuery r = field.query(q, {x_far}, true);
    CHECK(r.d == Catch::Approx(expected).margin(1e-13));
    CHECK(r.argmin_term == gstar);
    CHECK(r.grad_q.norm() == 0.0);
    CHECK((r.grad_x - grad_expected).norm() < 1e-12);
    // the bound is conservative: never above the true point clearance
    double exact_pt = std::numeric_limits<double>::infinity();
    for (const auto& pc : posed_bodies(hand, q))
        exact_pt = std::min(exact_pt, signed_distance(pc, x_far));
    CHECK(r.d <= exact_pt + 1e-9);
}

TEST_CASE("batched queries match single queries and are reproducible") {
    const HandModel hand = test_hand();
    ModelBundle b;
    b.hand = hand;
    b.self_net = Mlp::create(16, 10, {32, 16}, 11);
    b.palm_net = Mlp::create(3, 1, {16, 8}, 12);
    b.finger_net = Mlp::create(7, 1, {24, 12}, 13);
    b.thumb_net = Mlp::create(7, 1, {24, 12}, 14);
    CSpaceModel field(std::move(b));

    const PointSet X{{0.01, 0.02, 0.04}, {0.05, -0.06, 0.03}, {0.8, -0.3, 1.0}};
    Rng rng(95);
    const Eigen::Index n = 5000;  // crosses the internal chunk boundary
    Mat Q(hand.dof(), n);
    for (Eigen::Index i = 0; i < n; ++i) Q.col(i) = random_config(hand, rng);

    const Vec d = field.query_batch(Q, X);
    REQUIRE(d.size() == n);
    double max_err = 0;
    for (Eigen::Index i = 0; i < n; i += 37)
        max_err = std::max(max_err, std::abs(d[i] - field.query(Q.col(i), X, false).d));
    CHECK(max_err < 1e-12);

    // bitwise repeatability of the same call
    const Vec d2 = field.query_batch(Q, X);
    CHECK((d - d2).cwiseAbs().maxCoeff() == 0.0);

    // caller-side decomposition changes only last-ulp rounding
    Vec dsplit(n);
    dsplit.head(2500) = field.query_batch(Q.leftCols(2500), X);
    dsplit.tail(n - 2500) = field.query_batch(Q.rightCols(n - 2500), X);
    CHECK((d - dsplit).cwiseAbs().maxCoeff() < 1e-12);

    // gradient batch: values from the batched path, gradients per sample
    Vec dg;
    Mat G;
    field.query_batch_grad(Q.leftCols(64), X, dg, G);
    for (Eigen::Index i = 0; i < 64; ++i) {
        const DistQuery r = field.query(Q.col(i), X, true);
        CHECK(std::abs(dg[i] - r.d) < 1e-12);
        CHECK((G.col(i) - r.grad_q).norm() == 0.0);
    }

    // empty obstacle set still works and reduces to the self term
    const Vec dself = field.query_batch(Q.leftCols(8), {});
    for (Eigen::Index i = 0; i < 8; ++i)
        CHECK(std::abs(dself[i] - field.query(Q.col(i), {}, false).d) < 1e-12);
}

TEST_CASE("model bundle survives a save/load round trip and rejects tampering") {
    namespace fs = std::filesystem;
    const HandModel hand = test_hand();
    ModelBundle b;
    b.hand = hand;
    b.self_net = Mlp::create(16, 10, {24}, 21);
    b.palm_net = Mlp::create(3, 1, {12}, 22);
    b.finger_net = Mlp::create(7, 1, {12}, 23);
    b.thumb_net = Mlp::create(7, 1, {12}, 24);
    for (Mlp* m : {&b.self_net, &b.palm_net, &b.finger_net, &b.thumb_net})
        m->meta["hand_hash"] = to_hex(hand.config_hash());

    const fs::path dir = fs::temp_directory_path() / "dexplan_bundle_test";
    fs::remove_all(dir);
    b.save(dir.string());
    const ModelBundle r = ModelBundle::load(dir.string());
    REQUIRE(r.self_net.W.size() == b.self_net.W.size());
    for (std::size_t l = 0; l < b.self_net.W.size(); ++l) {
        CHECK((r.self_net.W[l] - b.self_net.W[l]).cwiseAbs().maxCoeff() == 0.0);
        CHECK((r.self_net.b[l] - b.self_net.b[l]).cwiseAbs().maxCoeff() == 0.0);
    }
    CHECK(r.hand.config_hash() == hand.config_hash());

    CSpaceModel f1(b), f2(r);
    Rng rng(96);
    const Vec q = rng.uniform_vec(hand.lower_limits(), hand.upper_limits());
    CHECK(f1.query(q, {}, false).d == f2.query(q, {}, false).d);

    // altering the hand geometry behind the bundle's back must be caught
    auto j = nlohmann::json::parse(read_text_file((dir / "hand.json").string()));
    j["bodies"][0]["radius"] = j["bodies"][0]["radius"].get<double>() + 1e-4;
    std::ofstream(dir / "hand.json") << j.dump(2);
    CHECK_THROWS(ModelBundle::load(dir.string()));

    // wrong net shapes are rejected up front
    ModelBundle bad = b;
    bad.palm_net = Mlp::create(4, 1, {8}, 25);
    CHECK_THROWS(bad.validate());
    fs::remove_all(dir);
}

TEST_CASE("exact oracle field: values, unit point gradient, consistent directions") {
    const HandModel hand = test_hand();
    ExactOracleField field(hand);
    REQUIRE(field.dof() == hand.dof());
    Rng rng(97);
    const PointSet X{{0.060, 0.000, 0.160}};

    int checked = 0;
    for (int trial = 0; trial < 40 && checked < 6; ++trial) {
        const Vec q = rng.uniform_vec(hand.lower_limits(), hand.upper_limits());
        // keep away from argmin switches so finite differences are clean
        const auto posed = posed_bodies(hand, q);
        std::vector<double> terms;
        const Vec sd = self_distance_vector(hand, posed);
        for (int j = 0; j < sd.size(); ++j) terms.push_back(sd[j]);
        for (const auto& pc : posed) terms.push_back(signed_distance(pc, X[0]));
        std::sort(terms.begin(), terms.end());
        if (terms[1] - terms[0] < 5e-3) continue;
        ++checked;

        const DistQuery r = field.query(q, X, true);
        CHECK(r.d == Catch::Approx(exact_min_distance(hand, q, X)).margin(1e-12));

        // directional secant at a coarser step agrees with the gradient
        const Vec u = Vec::Random(hand.dof()).normalized();
        const double h = 1e-4;
        const double sec =
            (exact_min_distance(hand, q + h * u, X) - exact_min_distance(hand, q - h * u, X)) /
            (2 * h);
        CHECK(std::abs(sec - r.grad_q.dot(u)) < 2e-3);

        if (r.argmin_point >= 0) CHECK(std::abs(r.grad_x.norm() - 1.0) < 1e-4);
    }
    REQUIRE(checked >= 4);
}

TEST_CASE("a small trained bundle tracks the exact field") {
    const HandModel hand = test_hand();

    GenOptions gs;
    gs.n = 20000;
    gs.seed = 7;
    const Dataset ds_self = generate_self_dataset(hand, gs);

    GenOptions go;
    go.n = 8000;
    go.seed = 8;
    const Dataset ds_palm = generate_object_dataset(hand, "palm", go);
    const Dataset ds_finger = generate_object_dataset(hand, "index", go);
    const Dataset ds_thumb = generate_object_dataset(hand, "thumb", go);

    TrainConfig tc;
    tc.iters = 6000;
    tc.seed = 7;
    tc.log_every = 0;
    ModelBundle b;
    b.hand = hand;
    b.self_net = Mlp::create(16, 10, {64, 32}, tc.seed);
    train_on_dataset(b.self_net, ds_self, tc);
    tc.iters = 1500;
    b.palm_net = Mlp::create(3, 1, {32, 16}, tc.seed);
    train_on_dataset(b.palm_net, ds_palm, tc);
    b.finger_net = Mlp::create(7, 1, {32, 16}, tc.seed);
    train_on_dataset(b.finger_net, ds_finger, tc);
    b.thumb_net = Mlp::create(7, 1, {32, 16}, tc.seed);
    train_on_dataset(b.thumb_net, ds_thumb, tc);
    CSpaceModel field(std::move(b));

    // balanced self-collision probe set
    Rng rng(99);
    int agree = 0, n_free = 0, n_coll = 0;
    double mae = 0;
    int total = 0;
    while (n_free < 200 || n_coll < 200) {
        const Vec q = rng.uniform_vec(hand.lower_limits(), hand.upper_limits());
        const double d = exact_min_distance(hand, q, {});
        if (d > 0 && n_free >= 200) continue;
        if (d <= 0 && n_coll >= 200) continue;
        (d > 0 ? n_free : n_coll)++;
        const double dhat = field.query(q, {}, false).d;
        agree += ((d > 0) == (dhat > 0));
        mae += std::abs(dhat - d);
        ++total;
    }
    mae /= total;
    INFO("sign agreement " << double(agree) / total << ", mae " << mae);
    CHECK(double(agree) / total >= 0.85);
    CHECK(mae < 0.02);
}
