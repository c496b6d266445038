#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "vsprefill/binio.hpp"
#include "vsprefill/matrix.hpp"
#include "vsprefill/numerics.hpp"
#include "vsprefill/rng.hpp"

namespace vsp {

// How the per-token slash logit maps to a diagonal offset. Reverse scores
// offset o with the logit of token n-1-o, so recent tokens rate the nearby
// diagonals; Identity uses token o directly.
enum class SlashMapping { Reverse, Identity };

enum class KlDirection { Forward, Reverse };

inline std::size_t slash_token_for_offset(std::size_t offset, std::size_t n, SlashMapping m) {
    return m == SlashMapping::Reverse ? n - 1 - offset : offset;
}

// Scoring network: a shared SiLU up-projection feeding two scalar heads.
//   Z = SiLU(X W_U + b_U);  logits_v = Z w_v + b_v;  logits_s = Z w_s + b_s
// X is the per-token feature row (keys-and-values concatenation on the
// product path, in_dim = 2d).
struct IndexerParams {
    Matrix w_u;                 // in_dim x d_h
    std::vector<double> b_u;    // d_h
    std::vector<double> w_v;    // d_h
    double b_v = 0.0;
    std::vector<double> w_s;    // d_h
    double b_s = 0.0;
    std::size_t d_h = 0;

    std::size_t in_dim() const { return w_u.rows; }

    void check_shapes() const {
        require(w_u.cols == d_h && b_u.size() == d_h && w_v.size() == d_h && w_s.size() == d_h,
                "indexer params: inconsistent shapes");
    }
};

// W_U symmetric uniform with fan-in scaling; heads and biases start at zero so
// the initial predictions are exactly uniform.
inline IndexerParams make_indexer_params(std::size_t in_dim, std::size_t d_h, Rng& rng) {
    require(in_dim >= 1 && d_h >= 1, "indexer params: dimensions must be positive");
    IndexerParams p;
    p.d_h = d_h;
    p.w_u = Matrix(in_dim, d_h);
    const double limit = 1.0 / std::sqrt(static_cast<double>(in_dim));
    for (double& w : p.w_u.data) w = limit * (2.0 * rng.next_uniform() - 1.0);
    p.b_u.assign(d_h, 0.0);
    p.w_v.assign(d_h, 0.0);
    p.w_s.assign(d_h, 0.0);
    return p;
}

struct IndexerActivations {
    Matrix x;                       // n x in_dim input features
    Matrix y;                       // pre-activation X W_U + b_U
    Matrix z;                       // SiLU(y)
    std::vector<double> logits_v;   // indexed by column
    std::vector<double> logits_s;   // indexed by offset (mapping applied)
    std::vector<double> pred_v;
    std::vector<double> pred_s;
    SlashMapping mapping = SlashMapping::Reverse;
};

inline IndexerActivations indexer_forward_features(const IndexerParams& p, const Matrix& x,
                                                   SlashMapping mapping = SlashMapping::Reverse) {
    p.check_shapes();
    require(x.cols == p.in_dim(), "indexer_forward: feature width != in_dim");
    require(x.rows >= 1, "indexer_forward: empty input");
    const std::size_t n = x.rows;
    IndexerActivations acts;
    acts.mapping = mapping;
    acts.x = x;
    acts.y = matmul(x, p.w_u);
    for (std::size_t i = 0; i < n; ++i) {
        double* yi = acts.y.row_ptr(i);
        for (std::size_t h = 0; h < p.d_h; ++h) yi[h] += p.b_u[h];
    }
    acts.z = acts.y;
    for (double& v : acts.z.data) v = silu(v);
    acts.logits_v.resize(n);
    std::vector<double> raw_s(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* zi = acts.z.row_ptr(i);
        double lv = p.b_v;
        double ls = p.b_s;
        for (std::size_t h = 0; h < p.d_h; ++h) {
            lv += zi[h] * p.w_v[h];
            ls += zi[h] * p.w_s[h];
        }
        acts.logits_v[i] = lv;
        raw_s[i] = ls;
    }
    acts.logits_s.resize(n);
    for (std::size_t o = 0; o < n; ++o) {
        acts.logits_s[o] = raw_s[slash_token_for_offset(o, n, mapping)];
    }
    acts.pred_v = softmax_vector(acts.logits_v);
    acts.pred_s = softmax_vector(acts.logits_s);
    return acts;
}

// Product-path forward: features are [K | V] per token, K already RoPE-applied.
inline IndexerActivations indexer_forward(const IndexerParams& p, const Matrix& k, const Matrix& v,
                                          SlashMapping mapping = SlashMapping::Reverse) {
    require(k.same_shape(v), "indexer_forward: K/V shape mismatch");
    return indexer_forward_features(p, hconcat(k, v), mapping);
}

// ---------------------------------------------------------------------------
// Losses over (predicted distribution, target distribution)

inline void check_distribution(const std::vector<double>& v, const char* what) {
    double sum = 0.0;
    for (double x : v) {
        if (x < 0.0) throw std::invalid_argument(std::string(what) + " has negative entries");
        sum += x;
    }
    if (std::fabs(sum - 1.0) > 1e-6) {
        throw std::invalid_argument(std::string(what) + " does not sum to 1");
    }
}

// D_KL(pred || target) with eps smoothing inside the log denominator;
// 0 * ln(0/.) contributes 0.
inline double kl_loss(const std::vector<double>& pred, const std::vector<double>& target,
                      double eps = 1e-8) {
    require(pred.size() == target.size(), "kl_loss: length mismatch");
    require(eps > 0.0, "kl_loss: eps must be positive");
    check_distribution(pred, "kl_loss pred");
    check_distribution(target, "kl_loss target");
    double loss = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] > 0.0) loss += pred[i] * (std::log(pred[i]) - std::log(target[i] + eps));
    }
    return loss;
}

// Loss value plus gradient with respect to the predicted distribution.
struct LossGrad {
    double loss = 0.0;
    std::vector<double> dpred;
};

using LossFn = std::function<LossGrad(const std::vector<double>& pred,
                                      const std::vector<double>& target)>;

inline LossGrad kl_loss_grad(const std::vector<double>& pred, const std::vector<double>& target,
                             double eps, KlDirection dir) {
    LossGrad out;
    out.dpred.resize(pred.size());
    if (dir == KlDirection::Forward) {
        out.loss = kl_loss(pred, target, eps);
        for (std::size_t i = 0; i < pred.size(); ++i) {
            // d/dp [ p ln p - p ln(t+eps) ]
            out.dpred[i] = (pred[i] > 0.0 ? std::log(pred[i]) : std::log(1e-300)) + 1.0 -
                           std::log(target[i] + eps);
        }
    } else {
        // D_KL(target || pred) with the same eps guard on the denominator
        require(pred.size() == target.size(), "kl_loss: length mismatch");
        for (std::size_t i = 0; i < pred.size(); ++i) {
            if (target[i] > 0.0) {
                out.loss += target[i] * (std::log(target[i]) - std::log(pred[i] + eps));
            }
            out.dpred[i] = -target[i] / (pred[i] + eps);
        }
    }
    return out;
}

inline LossFn make_kl_loss(double eps = 1e-8, KlDirection dir = KlDirection::Forward) {
    return [eps, dir](const std::vector<double>& p, const std::vector<double>& t) {
        return kl_loss_grad(p, t, eps, dir);
    };
}

// ---------------------------------------------------------------------------
// Backward

struct IndexerGrads {
    Matrix w_u;
    std::vector<double> b_u;
    std::vector<double> w_v;
    double b_v = 0.0;
    std::vector<double> w_s;
    double b_s = 0.0;

    static IndexerGrads zeros_like(const IndexerParams& p) {
        IndexerGrads g;
        g.w_u = Matrix(p.w_u.rows, p.w_u.cols);
        g.b_u.assign(p.d_h, 0.0);
        g.w_v.assign(p.d_h, 0.0);
        g.w_s.assign(p.d_h, 0.0);
        return g;
    }

    void add_scaled(const IndexerGrads& other, double scale) {
        for (std::size_t i = 0; i < w_u.data.size(); ++i) w_u.data[i] += scale * other.w_u.data[i];
        for (std::size_t i = 0; i < b_u.size(); ++i) b_u[i] += scale * other.b_u[i];
        for (std::size_t i = 0; i < w_v.size(); ++i) w_v[i] += scale * other.w_v[i];
        for (std::size_t i = 0; i < w_s.size(); ++i) w_s[i] += scale * other.w_s[i];
        b_v += scale * other.b_v;
        b_s += scale * other.b_s;
    }
};

// Chain rule from per-distribution upstream gradients (dL/dpred_v, dL/dpred_s)
// down to the parameters. K and V are inputs only: nothing propagates to them.
inline IndexerGrads indexer_backward_from_upstream(const IndexerParams& p,
                                                   const IndexerActivations& acts,
                                                   const std::vector<double>& dpred_v,
                                                   const std::vector<double>& dpred_s) {
    const std::size_t n = acts.x.rows;
    require(dpred_v.size() == n && dpred_s.size() == n, "indexer_backward: upstream length mismatch");
    IndexerGrads g = IndexerGrads::zeros_like(p);

    const std::vector<double> dlogit_v = softmax_backward(acts.pred_v, dpred_v);
    const std::vector<double> dlogit_s_off = softmax_backward(acts.pred_s, dpred_s);
    // Undo the offset mapping: logit of token t fed offset slot o(t).
    std::vector<double> dlogit_s(n);
    for (std::size_t o = 0; o < n; ++o) {
        dlogit_s[slash_token_for_offset(o, n, acts.mapping)] = dlogit_s_off[o];
    }

    Matrix dz(n, p.d_h);
    for (std::size_t i = 0; i < n; ++i) {
        const double* zi = acts.z.row_ptr(i);
        double* dzi = dz.row_ptr(i);
        for (std::size_t h = 0; h < p.d_h; ++h) {
            g.w_v[h] += dlogit_v[i] * zi[h];
            g.w_s[h] += dlogit_s[i] * zi[h];
            dzi[h] = dlogit_v[i] * p.w_v[h] + dlogit_s[i] * p.w_s[h];
        }
        g.b_v += dlogit_v[i];
        g.b_s += dlogit_s[i];
    }

    Matrix dy = dz;
    for (std::size_t i = 0; i < dy.data.size(); ++i) {
        dy.data[i] *= silu_derivative(acts.y.data[i]);
    }
    g.w_u = matmul_transpose_a(acts.x, dy);
    for (std::size_t i = 0; i < n; ++i) {
        const double* dyi = dy.row_ptr(i);
        for (std::size_t h = 0; h < p.d_h; ++h) g.b_u[h] += dyi[h];
    }
    return g;
}

inline IndexerGrads indexer_backward_loss(const IndexerParams& p, const IndexerActivations& acts,
                                          const std::vector<double>& target_v,
                                          const std::vector<double>& target_s,
                                          const LossFn& loss, double* loss_out = nullptr) {
    const LossGrad lv = loss(acts.pred_v, target_v);
    const LossGrad ls = loss(acts.pred_s, target_s);
    if (loss_out != nullptr) *loss_out = lv.loss + ls.loss;
    return indexer_backward_from_upstream(p, acts, lv.dpred, ls.dpred);
}

// Product-path backward: summed KL loss over both directions.
inline IndexerGrads indexer_backward(const IndexerParams& p, const IndexerActivations& acts,
                                     const std::vector<double>& target_v,
                                     const std::vector<double>& target_s, double eps = 1e-8,
                                     KlDirection dir = KlDirection::Forward) {
    return indexer_backward_loss(p, acts, target_v, target_s, make_kl_loss(eps, dir));
}

// ---------------------------------------------------------------------------
// Optimizer and training loop

struct TrainConfig {
    std::size_t steps = 2000;
    double lr_peak = 1e-3;
    std::size_t warmup_steps = 100;
    std::size_t accumulation = 1;
    std::uint64_t seed = 1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.01;
    double eps = 1e-8;  // KL smoothing
    KlDirection kl_direction = KlDirection::Forward;
    SlashMapping slash_mapping = SlashMapping::Reverse;

    void check() const {
        require(lr_peak > 0.0, "train config: lr_peak must be positive");
        require(warmup_steps <= steps, "train config: warmup_steps must not exceed steps");
        require(accumulation >= 1, "train config: accumulation must be >= 1");
    }
};

// Linear warmup to lr_peak, then cosine decay to 0 at cfg.steps.
inline double learning_rate(std::size_t step, const TrainConfig& cfg) {
    if (step < cfg.warmup_steps) {
        return cfg.lr_peak * static_cast<double>(step + 1) / static_cast<double>(cfg.warmup_steps);
    }
    const std::size_t span = cfg.steps > cfg.warmup_steps ? cfg.steps - cfg.warmup_steps : 1;
    const double progress = static_cast<double>(step - cfg.warmup_steps) / static_cast<double>(span);
    return cfg.lr_peak * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

struct OptState {
    IndexerGrads m;
    IndexerGrads v;

    static OptState zeros_like(const IndexerParams& p) {
        return {IndexerGrads::zeros_like(p), IndexerGrads::zeros_like(p)};
    }
};

namespace detail {
struct ParamView {
    double* p;
    const double* g;
    double* m;
    double* v;
    std::size_t len;
};

inline std::vector<ParamView> param_views(IndexerParams& p, const IndexerGrads& g, OptState& s) {
    return {
        {p.w_u.data.data(), g.w_u.data.data(), s.m.w_u.data.data(), s.v.w_u.data.data(),
         p.w_u.data.size()},
        {p.b_u.data(), g.b_u.data(), s.m.b_u.data(), s.v.b_u.data(), p.b_u.size()},
        {p.w_v.data(), g.w_v.data(), s.m.w_v.data(), s.v.w_v.data(), p.w_v.size()},
        {&p.b_v, &g.b_v, &s.m.b_v, &s.v.b_v, 1},
        {p.w_s.data(), g.w_s.data(), s.m.w_s.data(), s.v.w_s.data(), p.w_s.size()},
        {&p.b_s, &g.b_s, &s.m.b_s, &s.v.b_s, 1},
    };
}
}  // namespace detail

// One decoupled-weight-decay adaptive-moment update with bias correction.
inline void optimizer_step(IndexerParams& p, const IndexerGrads& grads, OptState& state,
                           std::size_t step_index, const TrainConfig& cfg) {
    const double lr = learning_rate(step_index, cfg);
    const double t = static_cast<double>(step_index + 1);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (auto& view : detail::param_views(p, grads, state)) {
        for (std::size_t i = 0; i < view.len; ++i) {
            view.m[i] = cfg.beta1 * view.m[i] + (1.0 - cfg.beta1) * view.g[i];
            view.v[i] = cfg.beta2 * view.v[i] + (1.0 - cfg.beta2) * view.g[i] * view.g[i];
            const double mhat = view.m[i] / bc1;
            const double vhat = view.v[i] / bc2;
            view.p[i] -= lr * (mhat / (std::sqrt(vhat) + cfg.adam_eps) +
                               cfg.weight_decay * view.p[i]);
        }
    }
}

// ---------------------------------------------------------------------------
// Training

struct TrainSample {
    Matrix k;  // RoPE-applied keys
    Matrix v;
    std::vector<double> target_v;
    std::vector<double> target_s;
    Matrix q;  // carried for the input-ablation harness; the product path ignores it
};

using FeatureFn = std::function<Matrix(const TrainSample&)>;

inline Matrix kv_features(const TrainSample& s) { return hconcat(s.k, s.v); }

struct TrainResult {
    IndexerParams params;
    std::vector<double> losses;  // one entry per optimizer step
};

// Deterministic loop: samples visited round-robin, `accumulation` micro-steps
// averaged into each optimizer step. The recorded loss is the micro-step mean,
// so losses[0] is the loss at initialization.
inline TrainResult train_custom(const std::vector<TrainSample>& dataset, const TrainConfig& cfg,
                                std::size_t d_h, const FeatureFn& features, const LossFn& loss) {
    cfg.check();
    if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
    std::vector<Matrix> feats;
    feats.reserve(dataset.size());
    for (const TrainSample& s : dataset) {
        require(s.k.same_shape(s.v), "train: K/V shape mismatch");
        require(s.target_v.size() == s.k.rows && s.target_s.size() == s.k.rows,
                "train: target length mismatch");
        feats.push_back(features(s));
        require(feats.back().cols == feats.front().cols, "train: samples disagree on feature width");
    }

    Rng rng(cfg.seed);
    TrainResult result;
    result.params = make_indexer_params(feats.front().cols, d_h, rng);
    OptState state = OptState::zeros_like(result.params);
    result.losses.reserve(cfg.steps);

    std::size_t cursor = 0;
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        IndexerGrads accum = IndexerGrads::zeros_like(result.params);
        double step_loss = 0.0;
        for (std::size_t micro = 0; micro < cfg.accumulation; ++micro) {
            const TrainSample& s = dataset[cursor];
            const IndexerActivations acts =
                indexer_forward_features(result.params, feats[cursor], cfg.slash_mapping);
            cursor = (cursor + 1) % dataset.size();
            double sample_loss = 0.0;
            const IndexerGrads g = indexer_backward_loss(result.params, acts, s.target_v,
                                                         s.target_s, loss, &sample_loss);
            accum.add_scaled(g, 1.0 / static_cast<double>(cfg.accumulation));
            step_loss += sample_loss / static_cast<double>(cfg.accumulation);
        }
        result.losses.push_back(step_loss);
        optimizer_step(result.params, accum, state, step, cfg);
    }
    return result;
}

// Product path: KV features distilled with KL.
inline TrainResult train(const std::vector<TrainSample>& dataset, const TrainConfig& cfg,
                         std::size_t d_h) {
    return train_custom(dataset, cfg, d_h, kv_features,
                        make_kl_loss(cfg.eps, cfg.kl_direction));
}

// Mean per-sample loss of fixed params over a dataset (no training).
inline double evaluate_loss(const IndexerParams& p, const std::vector<TrainSample>& dataset,
                            const FeatureFn& features, const LossFn& loss,
                            SlashMapping mapping = SlashMapping::Reverse) {
    require(!dataset.empty(), "evaluate_loss: empty dataset");
    double total = 0.0;
    for (const TrainSample& s : dataset) {
        const IndexerActivations acts = indexer_forward_features(p, features(s), mapping);
        total += loss(acts.pred_v, s.target_v).loss + loss(acts.pred_s, s.target_s).loss;
    }
    return total / static_cast<double>(dataset.size());
}

// ---------------------------------------------------------------------------
// Checkpoints: magic "VSCK", version 1, u32 d, u32 d_h, then W_U, b_U, W_V,
// b_V, W_S, b_S as little-endian f64 row-major blobs.

inline void save_checkpoint(const IndexerParams& p, const std::string& path) {
    p.check_shapes();
    require(p.in_dim() % 2 == 0, "save_checkpoint: in_dim must be 2d");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    os.write("VSCK", 4);
    put_u32_le(os, 1);
    put_u32_le(os, static_cast<std::uint32_t>(p.in_dim() / 2));
    put_u32_le(os, static_cast<std::uint32_t>(p.d_h));
    for (double x : p.w_u.data) put_f64_le(os, x);
    for (double x : p.b_u) put_f64_le(os, x);
    for (double x : p.w_v) put_f64_le(os, x);
    put_f64_le(os, p.b_v);
    for (double x : p.w_s) put_f64_le(os, x);
    put_f64_le(os, p.b_s);
    if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

inline IndexerParams load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[4] = {};
    is.read(magic, 4);
    if (is.gcount() != 4 || std::string(magic, 4) != "VSCK") {
        throw std::runtime_error("not a VSCK checkpoint");
    }
    const std::uint32_t version = get_u32_le(is, "truncated checkpoint header");
    if (version != 1) {
        throw std::runtime_error("unsupported VSCK version " + std::to_string(version));
    }
    const std::uint32_t d = get_u32_le(is, "truncated checkpoint header");
    const std::uint32_t d_h = get_u32_le(is, "truncated checkpoint header");
    IndexerParams p;
    p.d_h = d_h;
    p.w_u = Matrix(2 * static_cast<std::size_t>(d), d_h);
    const char* terr = "truncated checkpoint payload";
    for (double& x : p.w_u.data) x = get_f64_le(is, terr);
    p.b_u.resize(d_h);
    for (double& x : p.b_u) x = get_f64_le(is, terr);
    p.w_v.resize(d_h);
    for (double& x : p.w_v) x = get_f64_le(is, terr);
    p.b_v = get_f64_le(is, terr);
    p.w_s.resize(d_h);
    for (double& x : p.w_s) x = get_f64_le(is, terr);
    p.b_s = get_f64_le(is, terr);
    return p;
}

}  // namespace vsp
