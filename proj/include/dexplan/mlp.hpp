#pragma once

// Small dense ReLU regressors and their trainer. Everything is double
// precision: the planners differentiate these nets and compare values across
// batched/single paths, so float32 noise is not acceptable.

#include <dexplan/dataset.hpp>

#include <functional>

namespace dexplan {

/// Multilayer perceptron with ReLU hidden activations and a linear output
/// layer. Carries the output normalization bounds so a trained model is
/// self-contained: forward() returns normalized values, forward_denorm()
/// metric distances.
class Mlp {
public:
    std::vector<Mat> W;  ///< layer l maps W[l] (rows = fan_out) on top of b[l]
    std::vector<Vec> b;
    Vec d_up, d_low;           ///< per-output denormalization bounds
    nlohmann::json meta;       ///< kind/group/hand hash/training digest

    int in_dim() const { return int(W.front().cols()); }
    int out_dim() const { return int(W.back().rows()); }
    int layers() const { return int(W.size()); }

    std::size_t num_params() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l < W.size(); ++l) n += std::size_t(W[l].size()) + std::size_t(b[l].size());
        return n;
    }

    std::vector<int> widths() const {
        std::vector<int> w;
        for (std::size_t l = 0; l + 1 < W.size(); ++l) w.push_back(int(W[l].rows()));
        return w;
    }

    /// He-initialized network. widths are the hidden layer sizes.
    static Mlp create(int in_dim, int out_dim, const std::vector<int>& widths,
                      std::uint64_t seed) {
        if (in_dim <= 0 || out_dim <= 0) throw std::invalid_argument("bad mlp dimensions");
        Mlp net;
        Rng rng(derive_seed(seed, fnv1a64("mlp-init")));
        int prev = in_dim;
        auto add_layer = [&](int rows) {
            Mat w(rows, prev);
            const double s = std::sqrt(2.0 / double(prev));
            for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = s * rng.normal();
            net.W.push_back(std::move(w));
            net.b.push_back(Vec::Zero(rows));
            prev = rows;
        };
        for (int h : widths) {
            if (h <= 0) throw std::invalid_argument("hidden width must be positive");
            add_layer(h);
        }
        add_layer(out_dim);
        net.d_up = Vec::Ones(out_dim);
        net.d_low = -Vec::Ones(out_dim);
        return net;
    }

    Vec forward(const Vec& x) const {
        Vec h = x;
        for (std::size_t l = 0; l + 1 < W.size(); ++l) h = ((W[l] * h) + b[l]).cwiseMax(0.0);
        return W.back() * h + b.back();
    }

    /// Batched forward. X is in_dim x n (one column per sample); returns
    /// out_dim x n. Single GEMM per layer.
    Mat forward_batch(const Mat& X) const {
        Mat h = X;
        for (std::size_t l = 0; l + 1 < W.size(); ++l)
            h = ((W[l] * h).colwise() + b[l]).cwiseMax(0.0);
        return (W.back() * h).colwise() + b.back();
    }

    Vec forward_denorm(const Vec& x) const {
        Vec y = forward(x);
        for (Eigen::Index j = 0; j < y.size(); ++j)
            y[j] = denormalize_distance(y[j], d_up[j], d_low[j]);
        return y;
    }

    /// Value and full Jacobian (out_dim x in_dim) of the normalized output.
    /// ReLU uses the 0 subgradient at exactly 0.
    Mat jacobian(const Vec& x, Vec* value = nullptr) const {
        const std::size_t L = W.size();
        std::vector<Vec> act(L);  // post-activation of each hidden layer
        Vec h = x;
        for (std::size_t l = 0; l + 1 < L; ++l) {
            h = ((W[l] * h) + b[l]).cwiseMax(0.0);
            act[l] = h;
        }
        if (value) *value = W.back() * h + b.back();
        Mat G = W.back();
        for (std::size_t l = L - 1; l-- > 0;) {
            // zero columns of G where the ReLU was inactive, then push through
            for (Eigen::Index j = 0; j < act[l].size(); ++j)
                if (act[l][j] <= 0.0) G.col(j).setZero();
            G = G * W[l];
        }
        return G;
    }

    /// Gradient of one normalized output w.r.t. the input; 2-3x cheaper than
    /// the full Jacobian when only the argmin output matters.
    Vec output_gradient(const Vec& x, int j, double* value = nullptr) const {
        const std::size_t L = W.size();
        std::vector<Vec> act(L);
        Vec h = x;
        for (std::size_t l = 0; l + 1 < L; ++l) {
            h = ((W[l] * h) + b[l]).cwiseMax(0.0);
            act[l] = h;
        }
        if (value) *value = W.back().row(j).dot(h) + b.back()[j];
        Eigen::RowVectorXd g = W.back().row(j);
        for (std::size_t l = L - 1; l-- > 0;) {
            for (Eigen::Index k = 0; k < act[l].size(); ++k)
                if (act[l][k] <= 0.0) g[k] = 0.0;
            g = g * W[l];
        }
        return g.transpose();
    }

    // -- persistence ---------------------------------------------------------

    void save(const std::string& path) const;
    static Mlp load(const std::string& path);
};

// --- .dxnn binary format -----------------------------------------------------
// magic 'DXNN' | u32 version | u64 header length | header JSON | per layer:
// W row-major f64, then b f64. Little-endian throughout.

inline constexpr std::uint32_t kDxnnMagic = 0x4e4e5844;  // "DXNN"
inline constexpr std::uint32_t kDxnnVersion = 1;

inline void Mlp::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    nlohmann::json h = meta;
    std::vector<Eigen::Index> sizes{W.front().cols()};
    for (const auto& w : W) sizes.push_back(w.rows());
    h["layer_sizes"] = sizes;
    h["d_up"] = std::vector<double>(d_up.data(), d_up.data() + d_up.size());
    h["d_low"] = std::vector<double>(d_low.data(), d_low.data() + d_low.size());
    const std::string hs = h.dump();
    write_u32(os, kDxnnMagic);
    write_u32(os, kDxnnVersion);
    write_u64(os, hs.size());
    os.write(hs.data(), std::streamsize(hs.size()));
    for (std::size_t l = 0; l < W.size(); ++l) {
        for (Eigen::Index i = 0; i < W[l].rows(); ++i)
            for (Eigen::Index j = 0; j < W[l].cols(); ++j) write_f64(os, W[l](i, j));
        for (Eigen::Index i = 0; i < b[l].size(); ++i) write_f64(os, b[l][i]);
    }
    if (!os) throw std::runtime_error("short write: " + path);
}

inline Mlp Mlp::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    if (read_u32(is) != kDxnnMagic) throw std::runtime_error("not a .dxnn file: " + path);
    const std::uint32_t ver = read_u32(is);
    if (ver != kDxnnVersion)
        throw std::runtime_error("unsupported .dxnn version " + std::to_string(ver));
    const std::uint64_t hlen = read_u64(is);
    std::string hs(hlen, '\0');
    is.read(hs.data(), std::streamsize(hlen));
    Mlp net;
    net.meta = nlohmann::json::parse(hs);
    const auto sizes = net.meta.at("layer_sizes").get<std::vector<Eigen::Index>>();
    if (sizes.size() < 2) throw std::runtime_error("invalid layer_sizes in " + path);
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        Mat w(sizes[l + 1], sizes[l]);
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = read_f64(is);
        Vec bb(sizes[l + 1]);
        for (Eigen::Index i = 0; i < bb.size(); ++i) bb[i] = read_f64(is);
        net.W.push_back(std::move(w));
        net.b.push_back(std::move(bb));
    }
    if (!is) throw std::runtime_error("truncated .dxnn file: " + path);
    const auto up = net.meta.at("d_up").get<std::vector<double>>();
    const auto low = net.meta.at("d_low").get<std::vector<double>>();
    net.d_up = Eigen::Map<const Vec>(up.data(), Eigen::Index(up.size()));
    net.d_low = Eigen::Map<const Vec>(low.data(), Eigen::Index(low.size()));
    net.meta.erase("layer_sizes");
    net.meta.erase("d_up");
    net.meta.erase("d_low");
    return net;
}

// ---------------------------------------------------------------------------
// training

struct TrainConfig {
    int iters = 20000;
    int batch = 1024;
    double lr = 1e-3;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    // asymmetric loss weights: confident-and-correct, missed collision
    // (predicted free while colliding), spurious collision
    double w1 = 0.1, w2 = 6.0, w3 = 4.0;
    std::uint64_t seed = 0;
    int log_every = 2000;
};

/// Weight of one residual under the asymmetric scheme; t and p are the
/// normalized target and prediction.
inline double loss_weight(double t, double p, const TrainConfig& cfg) {
    if (t <= 0 && p <= 0) return cfg.w1;   // correctly inside
    if (t > 0.5 && p > 0.5) return cfg.w1; // correctly far outside
    if (t <= 0 && p > 0) return cfg.w2;    // collision predicted free
    if (t > 0 && p <= 0) return cfg.w3;    // free predicted colliding
    return 1.0;
}

using TrainCallback = std::function<void(int iter, double loss)>;

/// Minibatch Adam on the weighted MSE. X is n x in_dim, Y n x out_dim with
/// already-normalized targets. Returns the final smoothed training loss.
inline double train_mlp(Mlp& net, const Mat& X, const Mat& Y, const TrainConfig& cfg,
                        const TrainCallback& log = {}) {
    const Eigen::Index n = X.rows();
    if (n == 0 || Y.rows() != n) throw std::invalid_argument("bad training data shape");
    if (X.cols() != net.in_dim() || Y.cols() != net.out_dim())
        throw std::invalid_argument("data does not match network dimensions");

    const std::size_t L = net.W.size();
    std::vector<Mat> mW(L), vW(L), gW(L);
    std::vector<Vec> mb(L), vb(L), gb(L);
    for (std::size_t l = 0; l < L; ++l) {
        mW[l] = Mat::Zero(net.W[l].rows(), net.W[l].cols());
        vW[l] = mW[l];
        mb[l] = Vec::Zero(net.b[l].size());
        vb[l] = mb[l];
    }

    Rng rng(derive_seed(cfg.seed, fnv1a64("mlp-train")));
    const Eigen::Index B = std::min<Eigen::Index>(cfg.batch, n);
    Mat xb(net.in_dim(), B), yb(net.out_dim(), B);
    std::vector<Mat> act(L);  // post-activations per layer (column per sample)
    double smoothed = -1;

    for (int it = 1; it <= cfg.iters; ++it) {
        for (Eigen::Index k = 0; k < B; ++k) {
            const Eigen::Index i = Eigen::Index(rng.uniform_int(std::uint64_t(n)));
            xb.col(k) = X.row(i).transpose();
            yb.col(k) = Y.row(i).transpose();
        }

        // forward
        const Mat* h = &xb;
        for (std::size_t l = 0; l + 1 < L; ++l) {
            act[l] = ((net.W[l] * (*h)).colwise() + net.b[l]).cwiseMax(0.0);
            h = &act[l];
        }
        act[L - 1] = (net.W[L - 1] * (*h)).colwise() + net.b[L - 1];

        // weighted MSE and output gradient
        Mat delta = act[L - 1] - yb;  // residual, then scaled in place
        double loss = 0;
        for (Eigen::Index c = 0; c < delta.cols(); ++c)
            for (Eigen::Index r = 0; r < delta.rows(); ++r) {
                const double w = loss_weight(yb(r, c), act[L - 1](r, c), cfg);
                loss += w * delta(r, c) * delta(r, c);
                delta(r, c) *= w;
            }
        const double inv = 1.0 / double(B * net.out_dim());
        loss *= inv;
        delta *= 2.0 * inv;
        smoothed = smoothed < 0 ? loss : 0.98 * smoothed + 0.02 * loss;

        // backward
        for (std::size_t l = L; l-- > 0;) {
            const Mat& input = (l == 0) ? xb : act[l - 1];
            gW[l].noalias() = delta * input.transpose();
            gb[l] = delta.rowwise().sum();
            if (l > 0) {
                Mat next = net.W[l].transpose() * delta;
                // ReLU mask: subgradient 0 at 0
                for (Eigen::Index c = 0; c < next.cols(); ++c)
                    for (Eigen::Index r = 0; r < next.rows(); ++r)
                        if (act[l - 1](r, c) <= 0.0) next(r, c) = 0.0;
                delta = std::move(next);
            }
        }

        // Adam step with bias correction
        const double bc1 = 1.0 - std::pow(cfg.beta1, it);
        const double bc2 = 1.0 - std::pow(cfg.beta2, it);
        const double step = cfg.lr * std::sqrt(bc2) / bc1;
        for (std::size_t l = 0; l < L; ++l) {
            mW[l] = cfg.beta1 * mW[l] + (1 - cfg.beta1) * gW[l];
            vW[l] = cfg.beta2 * vW[l] + (1 - cfg.beta2) * gW[l].cwiseProduct(gW[l]);
            net.W[l] -= step * mW[l].cwiseQuotient(vW[l].cwiseSqrt() + Mat::Constant(vW[l].rows(), vW[l].cols(), cfg.eps));
            mb[l] = cfg.beta1 * mb[l] + (1 - cfg.beta1) * gb[l];
            vb[l] = cfg.beta2 * vb[l] + (1 - cfg.beta2) * gb[l].cwiseProduct(gb[l]);
            net.b[l] -= step * mb[l].cwiseQuotient(vb[l].cwiseSqrt() + Vec::Constant(vb[l].size(), cfg.eps));
        }

        if (log && (it % cfg.log_every == 0 || it == cfg.iters)) log(it, smoothed);
    }
    return smoothed;
}

/// Train on a dataset: normalizes targets with the dataset bounds and stamps
/// the model with them plus a provenance digest.
inline double train_on_dataset(Mlp& net, const Dataset& ds, const TrainConfig& cfg,
                               const TrainCallback& log = {}) {
    net.d_up = ds.d_up;
    net.d_low = ds.d_low;
    const double loss = train_mlp(net, ds.inputs, ds.normalized_targets(), cfg, log);
    net.meta["kind"] = ds.meta.value("kind", "unknown");
    if (ds.meta.contains("group")) net.meta["group"] = ds.meta["group"];
    if (ds.meta.contains("hand_hash")) net.meta["hand_hash"] = ds.meta["hand_hash"];
    nlohmann::json t{{"iters", cfg.iters}, {"batch", cfg.batch},     {"lr", cfg.lr},
                     {"w1", cfg.w1},       {"w2", cfg.w2},           {"w3", cfg.w3},
                     {"seed", cfg.seed},   {"data_seed", ds.meta.value("seed", 0ull)},
                     {"n", ds.size()}};
    net.meta["train"] = t;
    net.meta["train_digest"] = to_hex(fnv1a64(t.dump()));
    return loss;
}

// ---------------------------------------------------------------------------
// evaluation

struct EvalMetrics {
    double accuracy = 0;   ///< sign agreement of the minimum distance
    double fp_rate = 0;    ///< colliding samples predicted free (dangerous)
    double fn_rate = 0;    ///< free samples predicted colliding
    double mae = 0;        ///< mean |error| of denormalized distances, all outputs
    double mae_band = 0;   ///< same, restricted to |target| <= band
    double band = 0.02;
    Eigen::Index n = 0;
};

/// Classification and regression quality on a dataset (raw targets).
inline EvalMetrics evaluate_model(const Mlp& net, const Dataset& ds, double band = 0.02,
                                  double safety_margin = 0.0) {
    if (ds.in_dim() != net.in_dim() || ds.out_dim() != net.out_dim())
        throw std::invalid_argument("dataset does not match network dimensions");
    EvalMetrics m;
    m.band = band;
    m.n = ds.size();
    Eigen::Index agree = 0, fp = 0, fn = 0, npos = 0, nneg = 0, nband = 0;
    double abs_sum = 0, band_sum = 0;

    const Eigen::Index chunk = 4096;
    for (Eigen::Index start = 0; start < ds.size(); start += chunk) {
        const Eigen::Index c = std::min(chunk, ds.size() - start);
        const Mat xb = ds.inputs.middleRows(start, c).transpose();
        Mat yb = net.forward_batch(xb);  // normalized, out x c
        for (Eigen::Index k = 0; k < c; ++k) {
            double pred_min = std::numeric_limits<double>::infinity();
            for (Eigen::Index j = 0; j < yb.rows(); ++j) {
                const double pd = denormalize_distance(yb(j, k), net.d_up[j], net.d_low[j]);
                const double td = ds.targets(start + k, j);
                abs_sum += std::abs(pd - td);
                if (std::abs(td) <= band) {
                    band_sum += std::abs(pd - td);
                    ++nband;
                }
                pred_min = std::min(pred_min, pd);
            }
            const double target_min = ds.targets.row(start + k).minCoeff();
            const bool actual_col = target_min <= 0;
            const bool pred_col = pred_min <= safety_margin;
            if (actual_col == pred_col) ++agree;
            if (actual_col) {
                ++nneg;
                if (!pred_col) ++fp;
            } else {
                ++npos;
                if (pred_col) ++fn;
            }
        }
    }
    m.accuracy = double(agree) / double(m.n);
    m.fp_rate = nneg ? double(fp) / double(nneg) : 0.0;
    m.fn_rate = npos ? double(fn) / double(npos) : 0.0;
    m.mae = abs_sum / double(m.n * ds.out_dim());
    m.mae_band = nband ? band_sum / double(nband) : 0.0;
    return m;
}

}  // namespace dexplan
