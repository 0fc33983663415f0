#include "nomos/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "nomos/kernels.hpp"

namespace nomos::model {
namespace {

using kernels::gemm_nn;
using kernels::gemm_nt;
using kernels::gemm_tn;

template <class T>
void add_bias(std::vector<T>& y, const Tensor<T>& bias, std::size_t n) {
    const std::size_t w = bias.size();
    for (std::size_t i = 0; i < n; ++i) {
        T* row = y.data() + i * w;
        for (std::size_t j = 0; j < w; ++j) row[j] += bias.data[j];
    }
}

template <class T>
void accumulate_colsum(const T* dy, std::size_t n, std::size_t w, Tensor<T>& db) {
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < w; ++j) db.data[j] += dy[i * w + j];
    }
}

// y = x W + b for x [n, in], W [in, out].
template <class T>
std::vector<T> linear(const std::vector<T>& x, std::size_t n, const Tensor<T>& w,
                      const Tensor<T>& b) {
    const std::size_t in = w.shape[0];
    const std::size_t out = w.shape[1];
    std::vector<T> y(n * out);
    gemm_nn(n, out, in, x.data(), w.ptr(), y.data());
    add_bias(y, b, n);
    return y;
}

// Given dy [n, out]: dW += x^T dy, db += colsum(dy), dx (+)= dy W^T.
template <class T>
void linear_backward(const std::vector<T>& x, const std::vector<T>& dy, std::size_t n,
                     const Tensor<T>& w, Tensor<T>& dw, Tensor<T>& db, std::vector<T>& dx,
                     bool accumulate_dx) {
    const std::size_t in = w.shape[0];
    const std::size_t out = w.shape[1];
    gemm_tn(in, out, n, x.data(), dy.data(), dw.ptr(), true);
    accumulate_colsum(dy.data(), n, out, db);
    if (dx.size() != n * in) dx.assign(n * in, T(0));
    gemm_nt(n, in, out, dy.data(), w.ptr(), dx.data(), accumulate_dx);
}

template <class T>
void layer_norm(std::vector<T>& x, std::size_t n, std::size_t w, const Tensor<T>& g,
                const Tensor<T>& b, T eps, std::vector<T>* xhat_out, std::vector<T>* rstd_out) {
    if (xhat_out) xhat_out->resize(n * w);
    if (rstd_out) rstd_out->resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        T* row = x.data() + i * w;
        T mean = 0;
        for (std::size_t j = 0; j < w; ++j) mean += row[j];
        mean /= static_cast<T>(w);
        T var = 0;
        for (std::size_t j = 0; j < w; ++j) var += (row[j] - mean) * (row[j] - mean);
        var /= static_cast<T>(w);
        const T rstd = T(1) / std::sqrt(var + eps);
        if (rstd_out) (*rstd_out)[i] = rstd;
        for (std::size_t j = 0; j < w; ++j) {
            const T xh = (row[j] - mean) * rstd;
            if (xhat_out) (*xhat_out)[i * w + j] = xh;
            row[j] = g.data[j] * xh + b.data[j];
        }
    }
}

// dy -> dx in place, accumulating dgamma/dbeta.
template <class T>
void layer_norm_backward(std::vector<T>& d, std::size_t n, std::size_t w,
                         const std::vector<T>& xhat, const std::vector<T>& rstd,
                         const Tensor<T>& g, Tensor<T>& dg, Tensor<T>& db) {
    std::vector<T> dxhat(w);
    for (std::size_t i = 0; i < n; ++i) {
        T* row = d.data() + i * w;
        const T* xh = xhat.data() + i * w;
        T sum_d = 0;
        T sum_dx = 0;
        for (std::size_t j = 0; j < w; ++j) {
            dg.data[j] += row[j] * xh[j];
            db.data[j] += row[j];
            dxhat[j] = row[j] * g.data[j];
            sum_d += dxhat[j];
            sum_dx += dxhat[j] * xh[j];
        }
        const T inv_w = T(1) / static_cast<T>(w);
        for (std::size_t j = 0; j < w; ++j) {
            row[j] = rstd[i] * (dxhat[j] - sum_d * inv_w - xh[j] * sum_dx * inv_w);
        }
    }
}

template <class T>
T gelu(T x) {
    return T(0.5) * x * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
}

template <class T>
T gelu_grad(T x) {
    const T cdf = T(0.5) * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
    const T pdf = std::exp(T(-0.5) * x * x) * std::numbers::inv_sqrtpi_v<T> /
                  std::numbers::sqrt2_v<T>;
    return cdf + x * pdf;
}

// Inverted dropout: fills `scales` with 0 or 1/(1-p) and applies them to x.
template <class T>
void dropout(std::vector<T>& x, double p, Mode mode, Rng* rng, std::vector<T>& scales) {
    scales.clear();
    if (mode != Mode::Train || p <= 0.0) return;
    if (rng == nullptr) throw ModelError("train-mode dropout needs an rng");
    scales.resize(x.size());
    const T keep = static_cast<T>(1.0 / (1.0 - p));
    for (std::size_t i = 0; i < x.size(); ++i) {
        scales[i] = rng->uniform() < p ? T(0) : keep;
        x[i] *= scales[i];
    }
}

template <class T>
void apply_scales(std::vector<T>& d, const std::vector<T>& scales) {
    if (scales.empty()) return;
    for (std::size_t i = 0; i < d.size(); ++i) d[i] *= scales[i];
}

void check_batch(const ModelConfig& cfg, const BatchView& b) {
    if (b.ids.size() != b.rows * b.cols || b.attention_mask.size() != b.rows * b.cols) {
        throw ModelError("batch buffers do not match rows x cols");
    }
    if (b.cols > cfg.max_positions) throw ModelError("sequence longer than max_positions");
    for (TokenId id : b.ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size) {
            throw ModelError("token id " + std::to_string(id) + " outside the vocabulary");
        }
    }
}

// Softmax cross-entropy over `count` rows of `logits` [count, width] against
// `targets`; overwrites logits with d(mean loss)/d(logits) when `want_grad`.
template <class T>
T cross_entropy(std::vector<T>& logits, std::size_t width, std::span<const int> targets,
                bool want_grad) {
    const std::size_t count = targets.size();
    double total = 0;
    for (std::size_t r = 0; r < count; ++r) {
        T* row = logits.data() + r * width;
        const T mx = *std::max_element(row, row + width);
        T sum = 0;
        for (std::size_t j = 0; j < width; ++j) sum += std::exp(row[j] - mx);
        const T lse = mx + std::log(sum);
        total += static_cast<double>(lse - row[targets[r]]);
        if (want_grad) {
            const T inv = T(1) / static_cast<T>(count);
            for (std::size_t j = 0; j < width; ++j) row[j] = std::exp(row[j] - lse) * inv;
            row[targets[r]] -= inv;
        }
    }
    return static_cast<T>(total / static_cast<double>(count));
}

template <class T>
void attention_forward(const ModelConfig& cfg, std::size_t rows, std::size_t cols,
                       std::span<const std::uint8_t> mask, LayerCache<T>& c) {
    const std::size_t H = cfg.hidden_dim;
    const std::size_t heads = cfg.num_heads;
    const std::size_t d = cfg.head_dim();
    const T scale = T(1) / std::sqrt(static_cast<T>(d));
    c.probs.assign(rows * heads * cols * cols, T(0));
    c.ctx.assign(rows * cols * H, T(0));
    const auto work = static_cast<std::ptrdiff_t>(rows * heads);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t bh = 0; bh < work; ++bh) {
        const std::size_t b = static_cast<std::size_t>(bh) / heads;
        const std::size_t h = static_cast<std::size_t>(bh) % heads;
        const std::uint8_t* m = mask.data() + b * cols;
        for (std::size_t i = 0; i < cols; ++i) {
            T* p = c.probs.data() + ((b * heads + h) * cols + i) * cols;
            const T* qi = c.q.data() + (b * cols + i) * H + h * d;
            T mx = -std::numeric_limits<T>::infinity();
            for (std::size_t j = 0; j < cols; ++j) {
                if (!m[j]) continue;
                const T* kj = c.k.data() + (b * cols + j) * H + h * d;
                p[j] = kernels::detail::dot(qi, kj, d) * scale;
                mx = std::max(mx, p[j]);
            }
            if (mx == -std::numeric_limits<T>::infinity()) continue;  // no real keys
            T sum = 0;
            for (std::size_t j = 0; j < cols; ++j) {
                if (!m[j]) continue;
                p[j] = std::exp(p[j] - mx);
                sum += p[j];
            }
            T* out = c.ctx.data() + (b * cols + i) * H + h * d;
            for (std::size_t j = 0; j < cols; ++j) {
                if (!m[j]) continue;
                p[j] /= sum;
                kernels::detail::axpy(p[j], c.v.data() + (b * cols + j) * H + h * d, out, d);
            }
        }
    }
}

template <class T>
void attention_backward(const ModelConfig& cfg, std::size_t rows, std::size_t cols,
                        const LayerCache<T>& c, const std::vector<T>& dctx, std::vector<T>& dq,
                        std::vector<T>& dk, std::vector<T>& dv) {
    const std::size_t H = cfg.hidden_dim;
    const std::size_t heads = cfg.num_heads;
    const std::size_t d = cfg.head_dim();
    const T scale = T(1) / std::sqrt(static_cast<T>(d));
    dq.assign(rows * cols * H, T(0));
    dk.assign(rows * cols * H, T(0));
    dv.assign(rows * cols * H, T(0));
    const auto work = static_cast<std::ptrdiff_t>(rows * heads);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t bh = 0; bh < work; ++bh) {
        const std::size_t b = static_cast<std::size_t>(bh) / heads;
        const std::size_t h = static_cast<std::size_t>(bh) % heads;
        std::vector<T> dp(cols);
        for (std::size_t i = 0; i < cols; ++i) {
            const T* p = c.probs.data() + ((b * heads + h) * cols + i) * cols;
            const T* go = dctx.data() + (b * cols + i) * H + h * d;
            T dot_pdp = 0;
            for (std::size_t j = 0; j < cols; ++j) {
                if (p[j] == T(0)) {
                    dp[j] = 0;
                    continue;
                }
                const std::size_t kv = (b * cols + j) * H + h * d;
                kernels::detail::axpy(p[j], go, dv.data() + kv, d);
                dp[j] = kernels::detail::dot(go, c.v.data() + kv, d);
                dot_pdp += p[j] * dp[j];
            }
            T* gq = dq.data() + (b * cols + i) * H + h * d;
            const T* qi = c.q.data() + (b * cols + i) * H + h * d;
            for (std::size_t j = 0; j < cols; ++j) {
                if (p[j] == T(0)) continue;
                const T ds = p[j] * (dp[j] - dot_pdp) * scale;
                const std::size_t kv = (b * cols + j) * H + h * d;
                kernels::detail::axpy(ds, c.k.data() + kv, gq, d);
                kernels::detail::axpy(ds, qi, dk.data() + kv, d);
            }
        }
    }
}

template <class T>
void fill_normal(Tensor<T>& t, Rng rng, double std) {
    for (auto& x : t.data) x = static_cast<T>(rng.normal() * std);
}

}  // namespace

void ModelConfig::validate() const {
    if (num_layers == 0 || hidden_dim == 0 || num_heads == 0 || ffn_dim == 0) {
        throw ModelError("model dimensions must be positive");
    }
    if (hidden_dim % num_heads != 0) {
        throw ModelError("hidden_dim " + std::to_string(hidden_dim) + " is not divisible by " +
                         std::to_string(num_heads) + " heads");
    }
    if (vocab_size < 2) throw ModelError("vocab_size must be set");
    if (max_positions == 0) throw ModelError("max_positions must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ModelError("dropout must be in [0, 1)");
    if (num_tags == 0 || num_labels == 0) throw ModelError("head widths must be positive");
}

template <class T>
ModelParams<T> ModelParams<T>::zeros(const ModelConfig& c) {
    c.validate();
    ModelParams<T> p;
    const std::size_t H = c.hidden_dim;
    const std::size_t F = c.ffn_dim;
    p.tok_emb = Tensor<T>({c.vocab_size, H});
    p.pos_emb = Tensor<T>({c.max_positions, H});
    p.emb_ln_g = Tensor<T>({H});
    p.emb_ln_b = Tensor<T>({H});
    p.layers.resize(c.num_layers);
    for (auto& L : p.layers) {
        L.wq = Tensor<T>({H, H});
        L.bq = Tensor<T>({H});
        L.wk = Tensor<T>({H, H});
        L.bk = Tensor<T>({H});
        L.wv = Tensor<T>({H, H});
        L.bv = Tensor<T>({H});
        L.wo = Tensor<T>({H, H});
        L.bo = Tensor<T>({H});
        L.ln1_g = Tensor<T>({H});
        L.ln1_b = Tensor<T>({H});
        L.w1 = Tensor<T>({H, F});
        L.b1 = Tensor<T>({F});
        L.w2 = Tensor<T>({F, H});
        L.b2 = Tensor<T>({H});
        L.ln2_g = Tensor<T>({H});
        L.ln2_b = Tensor<T>({H});
    }
    p.mlm_bias = Tensor<T>({c.vocab_size});
    p.tok_cls_w = Tensor<T>({H, c.num_tags});
    p.tok_cls_b = Tensor<T>({c.num_tags});
    p.seq_cls_w = Tensor<T>({H, c.num_labels});
    p.seq_cls_b = Tensor<T>({c.num_labels});
    return p;
}

template <class T>
std::size_t ModelParams<T>::parameter_count() const {
    std::size_t n = 0;
    for_each([&n](const std::string&, const Tensor<T>& t) { n += t.size(); });
    return n;
}

template <class T>
Model<T> init(const ModelConfig& config, std::uint64_t seed) {
    Model<T> m{config, ModelParams<T>::zeros(config)};
    std::uint64_t index = 0;
    m.params.for_each([&](const std::string& name, Tensor<T>& t) {
        const Rng rng = Rng::derive(seed, 0x696e6974ULL, index++);  // "init"
        if (name.ends_with(".gamma")) {
            std::fill(t.data.begin(), t.data.end(), T(1));
        } else if (t.shape.size() == 2) {
            fill_normal(t, rng, config.init_std);
        }
        // biases and beta stay zero
    });
    return m;
}

template <class T>
std::vector<T> encode(const Model<T>& model, const BatchView& batch, Mode mode, Rng* dropout_rng,
                      EncoderCache<T>* cache) {
    const ModelConfig& cfg = model.config;
    const ModelParams<T>& P = model.params;
    check_batch(cfg, batch);
    const std::size_t N = batch.rows * batch.cols;
    const std::size_t H = cfg.hidden_dim;
    const T eps = static_cast<T>(cfg.layer_norm_eps);

    EncoderCache<T> local;
    EncoderCache<T>& c = cache ? *cache : local;
    c.rows = batch.rows;
    c.cols = batch.cols;
    c.ids.assign(batch.ids.begin(), batch.ids.end());
    c.attention_mask.assign(batch.attention_mask.begin(), batch.attention_mask.end());
    c.layers.resize(cfg.num_layers);

    std::vector<T> x(N * H);
    for (std::size_t r = 0; r < batch.rows; ++r) {
        for (std::size_t j = 0; j < batch.cols; ++j) {
            const std::size_t n = r * batch.cols + j;
            const T* te = P.tok_emb.ptr() + static_cast<std::size_t>(batch.ids[n]) * H;
            const T* pe = P.pos_emb.ptr() + j * H;
            for (std::size_t h = 0; h < H; ++h) x[n * H + h] = te[h] + pe[h];
        }
    }
    layer_norm(x, N, H, P.emb_ln_g, P.emb_ln_b, eps, &c.emb_xhat, &c.emb_rstd);
    dropout(x, cfg.dropout, mode, dropout_rng, c.emb_drop);

    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
        const LayerParams<T>& L = P.layers[l];
        LayerCache<T>& lc = c.layers[l];
        lc.x_in = x;
        lc.q = linear(x, N, L.wq, L.bq);
        lc.k = linear(x, N, L.wk, L.bk);
        lc.v = linear(x, N, L.wv, L.bv);
        attention_forward(cfg, batch.rows, batch.cols, batch.attention_mask, lc);
        std::vector<T> a = linear(lc.ctx, N, L.wo, L.bo);
        dropout(a, cfg.dropout, mode, dropout_rng, lc.attn_drop);
        for (std::size_t i = 0; i < N * H; ++i) a[i] += x[i];
        layer_norm(a, N, H, L.ln1_g, L.ln1_b, eps, &lc.ln1_xhat, &lc.ln1_rstd);
        lc.x1 = a;
        lc.ffn_pre = linear(lc.x1, N, L.w1, L.b1);
        lc.ffn_act.resize(lc.ffn_pre.size());
        for (std::size_t i = 0; i < lc.ffn_pre.size(); ++i) lc.ffn_act[i] = gelu(lc.ffn_pre[i]);
        std::vector<T> f = linear(lc.ffn_act, N, L.w2, L.b2);
        dropout(f, cfg.dropout, mode, dropout_rng, lc.ffn_drop);
        for (std::size_t i = 0; i < N * H; ++i) f[i] += lc.x1[i];
        layer_norm(f, N, H, L.ln2_g, L.ln2_b, eps, &lc.ln2_xhat, &lc.ln2_rstd);
        x = std::move(f);
    }
    return x;
}

template <class T>
void encode_backward(const Model<T>& model, const EncoderCache<T>& c, std::span<const T> d_hidden,
                     ModelParams<T>& grads) {
    const ModelConfig& cfg = model.config;
    const ModelParams<T>& P = model.params;
    const std::size_t N = c.rows * c.cols;
    const std::size_t H = cfg.hidden_dim;
    const std::size_t F = cfg.ffn_dim;

    std::vector<T> d(d_hidden.begin(), d_hidden.end());
    std::vector<T> tmp;
    std::vector<T> dq, dk, dv;
    for (std::size_t li = cfg.num_layers; li-- > 0;) {
        const LayerParams<T>& L = P.layers[li];
        LayerParams<T>& G = grads.layers[li];
        const LayerCache<T>& lc = c.layers[li];

        layer_norm_backward(d, N, H, lc.ln2_xhat, lc.ln2_rstd, L.ln2_g, G.ln2_g, G.ln2_b);
        // d now holds d(x1 + drop(ffn)); the residual passes it to x1 unchanged.
        std::vector<T> dffn = d;
        apply_scales(dffn, lc.ffn_drop);
        std::vector<T> dact;
        linear_backward(lc.ffn_act, dffn, N, L.w2, G.w2, G.b2, dact, false);
        for (std::size_t i = 0; i < N * F; ++i) dact[i] *= gelu_grad(lc.ffn_pre[i]);
        linear_backward(lc.x1, dact, N, L.w1, G.w1, G.b1, d, true);

        layer_norm_backward(d, N, H, lc.ln1_xhat, lc.ln1_rstd, L.ln1_g, G.ln1_g, G.ln1_b);
        std::vector<T> dattn = d;
        apply_scales(dattn, lc.attn_drop);
        std::vector<T> dctx;
        linear_backward(lc.ctx, dattn, N, L.wo, G.wo, G.bo, dctx, false);
        attention_backward(cfg, c.rows, c.cols, lc, dctx, dq, dk, dv);
        linear_backward(lc.x_in, dq, N, L.wq, G.wq, G.bq, d, true);
        linear_backward(lc.x_in, dk, N, L.wk, G.wk, G.bk, d, true);
        linear_backward(lc.x_in, dv, N, L.wv, G.wv, G.bv, d, true);
    }
    apply_scales(d, c.emb_drop);
    layer_norm_backward(d, N, H, c.emb_xhat, c.emb_rstd, P.emb_ln_g, grads.emb_ln_g,
                        grads.emb_ln_b);
    for (std::size_t r = 0; r < c.rows; ++r) {
        for (std::size_t j = 0; j < c.cols; ++j) {
            const std::size_t n = r * c.cols + j;
            T* gt = grads.tok_emb.ptr() + static_cast<std::size_t>(c.ids[n]) * H;
            T* gp = grads.pos_emb.ptr() + j * H;
            for (std::size_t h = 0; h < H; ++h) {
                gt[h] += d[n * H + h];
                gp[h] += d[n * H + h];
            }
        }
    }
}

template <class T>
LossResult<T> mlm_loss(const Model<T>& model, const BatchView& batch,
                       std::span<const TokenId> labels, ModelParams<T>* grads, Mode mode,
                       Rng* dropout_rng) {
    const ModelConfig& cfg = model.config;
    if (labels.size() != batch.rows * batch.cols) throw ModelError("label shape mismatch");
    std::vector<std::size_t> positions;
    std::vector<int> targets;
    for (std::size_t n = 0; n < labels.size(); ++n) {
        if (labels[n] == kIgnore) continue;
        if (labels[n] < 0 || static_cast<std::size_t>(labels[n]) >= cfg.vocab_size) {
            throw ModelError("MLM label outside the vocabulary");
        }
        positions.push_back(n);
        targets.push_back(labels[n]);
    }
    LossResult<T> res;
    res.count = positions.size();
    if (positions.empty()) {
        res.empty_warning = true;
        return res;
    }
    const std::size_t H = cfg.hidden_dim;
    const std::size_t V = cfg.vocab_size;
    const std::size_t S = positions.size();
    EncoderCache<T> cache;
    const std::vector<T> hidden = encode(model, batch, mode, dropout_rng, grads ? &cache : nullptr);
    std::vector<T> hs(S * H);
    for (std::size_t s = 0; s < S; ++s) {
        std::copy_n(hidden.begin() + static_cast<std::ptrdiff_t>(positions[s] * H), H,
                    hs.begin() + static_cast<std::ptrdiff_t>(s * H));
    }
    std::vector<T> logits(S * V);
    gemm_nt(S, V, H, hs.data(), model.params.tok_emb.ptr(), logits.data());
    add_bias(logits, model.params.mlm_bias, S);
    res.loss = cross_entropy(logits, V, targets, grads != nullptr);
    if (grads == nullptr) return res;

    // logits now hold dL/dlogits.
    accumulate_colsum(logits.data(), S, V, grads->mlm_bias);
    gemm_tn(V, H, S, logits.data(), hs.data(), grads->tok_emb.ptr(), true);
    std::vector<T> dhs(S * H);
    gemm_nn(S, H, V, logits.data(), model.params.tok_emb.ptr(), dhs.data());
    std::vector<T> dhidden(hidden.size(), T(0));
    for (std::size_t s = 0; s < S; ++s) {
        std::copy_n(dhs.begin() + static_cast<std::ptrdiff_t>(s * H), H,
                    dhidden.begin() + static_cast<std::ptrdiff_t>(positions[s] * H));
    }
    encode_backward(model, cache, std::span<const T>(dhidden), *grads);
    return res;
}

template <class T>
LossResult<T> token_cls_loss(const Model<T>& model, const BatchView& batch,
                             std::span<const int> labels, ModelParams<T>* grads, Mode mode,
                             Rng* dropout_rng) {
    const ModelConfig& cfg = model.config;
    if (labels.size() != batch.rows * batch.cols) throw ModelError("label shape mismatch");
    const std::size_t H = cfg.hidden_dim;
    const std::size_t K = cfg.num_tags;
    std::vector<std::size_t> positions;
    std::vector<int> targets;
    for (std::size_t n = 0; n < labels.size(); ++n) {
        if (labels[n] == kIgnore || batch.attention_mask[n] == 0) continue;
        if (labels[n] < 0 || static_cast<std::size_t>(labels[n]) >= K) {
            throw ModelError("tag id outside the token-classification head");
        }
        positions.push_back(n);
        targets.push_back(labels[n]);
    }
    LossResult<T> res;
    res.count = positions.size();
    if (positions.empty()) {
        res.empty_warning = true;
        return res;
    }
    EncoderCache<T> cache;
    const std::vector<T> hidden = encode(model, batch, mode, dropout_rng, grads ? &cache : nullptr);
    const std::size_t S = positions.size();
    std::vector<T> hs(S * H);
    for (std::size_t s = 0; s < S; ++s) {
        std::copy_n(hidden.begin() + static_cast<std::ptrdiff_t>(positions[s] * H), H,
                    hs.begin() + static_cast<std::ptrdiff_t>(s * H));
    }
    std::vector<T> logits = linear(hs, S, model.params.tok_cls_w, model.params.tok_cls_b);
    res.loss = cross_entropy(logits, K, targets, grads != nullptr);
    if (grads == nullptr) return res;
    std::vector<T> dhs;
    linear_backward(hs, logits, S, model.params.tok_cls_w, grads->tok_cls_w, grads->tok_cls_b, dhs,
                    false);
    std::vector<T> dhidden(hidden.size(), T(0));
    for (std::size_t s = 0; s < S; ++s) {
        std::copy_n(dhs.begin() + static_cast<std::ptrdiff_t>(s * H), H,
                    dhidden.begin() + static_cast<std::ptrdiff_t>(positions[s] * H));
    }
    encode_backward(model, cache, std::span<const T>(dhidden), *grads);
    return res;
}

template <class T>
LossResult<T> seq_cls_loss(const Model<T>& model, const BatchView& batch,
                           std::span<const int> labels, ModelParams<T>* grads, Mode mode,
                           Rng* dropout_rng) {
    const ModelConfig& cfg = model.config;
    if (labels.size() != batch.rows) throw ModelError("one label per row expected");
    const std::size_t H = cfg.hidden_dim;
    const std::size_t K = cfg.num_labels;
    std::vector<std::size_t> rows;
    std::vector<int> targets;
    for (std::size_t r = 0; r < labels.size(); ++r) {
        if (labels[r] == kIgnore) continue;
        if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= K) {
            throw ModelError("label outside the sequence-classification head");
        }
        rows.push_back(r);
        targets.push_back(labels[r]);
    }
    LossResult<T> res;
    res.count = rows.size();
    if (rows.empty()) {
        res.empty_warning = true;
        return res;
    }
    EncoderCache<T> cache;
    const std::vector<T> hidden = encode(model, batch, mode, dropout_rng, grads ? &cache : nullptr);
    const std::size_t S = rows.size();
    std::vector<T> pooled(S * H);
    for (std::size_t s = 0; s < S; ++s) {
        std::copy_n(hidden.begin() + static_cast<std::ptrdiff_t>(rows[s] * batch.cols * H), H,
                    pooled.begin() + static_cast<std::ptrdiff_t>(s * H));
    }
    std::vector<T> logits = linear(pooled, S, model.params.seq_cls_w, model.params.seq_cls_b);
    res.loss = cross_entropy(logits, K, targets, grads != nullptr);
    if (grads == nullptr) return res;
    std::vector<T> dpooled;
    linear_backward(pooled, logits, S, model.params.seq_cls_w, grads->seq_cls_w,
                    grads->seq_cls_b, dpooled, false);
    std::vector<T> dhidden(hidden.size(), T(0));
    for (std::size_t s = 0; s < S; ++s) {
        std::copy_n(dpooled.begin() + static_cast<std::ptrdiff_t>(s * H), H,
                    dhidden.begin() + static_cast<std::ptrdiff_t>(rows[s] * batch.cols * H));
    }
    encode_backward(model, cache, std::span<const T>(dhidden), *grads);
    return res;
}

template <class T>
MlmOutput<T> forward_mlm(const Model<T>& model, const BatchView& batch,
                         std::span<const TokenId> labels) {
    const ModelConfig& cfg = model.config;
    if (labels.size() != batch.rows * batch.cols) throw ModelError("label shape mismatch");
    const std::size_t N = batch.rows * batch.cols;
    const std::size_t V = cfg.vocab_size;
    const std::vector<T> hidden = encode<T>(model, batch, Mode::Inference, nullptr, nullptr);
    MlmOutput<T> out;
    out.logits.resize(N * V);
    gemm_nt(N, V, cfg.hidden_dim, hidden.data(), model.params.tok_emb.ptr(), out.logits.data());
    add_bias(out.logits, model.params.mlm_bias, N);
    std::vector<T> picked;
    std::vector<int> targets;
    for (std::size_t n = 0; n < N; ++n) {
        if (labels[n] == kIgnore) continue;
        picked.insert(picked.end(), out.logits.begin() + static_cast<std::ptrdiff_t>(n * V),
                      out.logits.begin() + static_cast<std::ptrdiff_t>((n + 1) * V));
        targets.push_back(labels[n]);
    }
    if (targets.empty()) {
        out.empty_warning = true;
        return out;
    }
    out.loss = cross_entropy(picked, V, targets, false);
    return out;
}

template <class T>
std::vector<T> forward_token_cls(const Model<T>& model, const BatchView& batch,
                                 std::size_t expected_tags) {
    if (expected_tags != model.config.num_tags) {
        throw ModelError("tag set has " + std::to_string(expected_tags) + " tags but the head has " +
                         std::to_string(model.config.num_tags));
    }
    const std::vector<T> hidden = encode<T>(model, batch, Mode::Inference, nullptr, nullptr);
    return linear(hidden, batch.rows * batch.cols, model.params.tok_cls_w, model.params.tok_cls_b);
}

template <class T>
std::vector<T> forward_seq_cls(const Model<T>& model, const BatchView& batch,
                               std::size_t expected_labels) {
    if (expected_labels != model.config.num_labels) {
        throw ModelError("label set has " + std::to_string(expected_labels) +
                         " labels but the head has " + std::to_string(model.config.num_labels));
    }
    const std::size_t H = model.config.hidden_dim;
    const std::vector<T> hidden = encode<T>(model, batch, Mode::Inference, nullptr, nullptr);
    std::vector<T> pooled(batch.rows * H);
    for (std::size_t r = 0; r < batch.rows; ++r) {
        std::copy_n(hidden.begin() + static_cast<std::ptrdiff_t>(r * batch.cols * H), H,
                    pooled.begin() + static_cast<std::ptrdiff_t>(r * H));
    }
    return linear(pooled, batch.rows, model.params.seq_cls_w, model.params.seq_cls_b);
}

template <class T>
void softmax_rows(std::span<T> values, std::size_t width) {
    for (std::size_t r = 0; r * width < values.size(); ++r) {
        T* row = values.data() + r * width;
        const T mx = *std::max_element(row, row + width);
        T sum = 0;
        for (std::size_t j = 0; j < width; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (std::size_t j = 0; j < width; ++j) row[j] /= sum;
    }
}

#define NOMOS_INSTANTIATE(T)                                                                      \
    template struct ModelParams<T>;                                                               \
    template Model<T> init<T>(const ModelConfig&, std::uint64_t);                                 \
    template std::vector<T> encode<T>(const Model<T>&, const BatchView&, Mode, Rng*,              \
                                      EncoderCache<T>*);                                          \
    template void encode_backward<T>(const Model<T>&, const EncoderCache<T>&,                     \
                                     std::span<const T>, ModelParams<T>&);                        \
    template LossResult<T> mlm_loss<T>(const Model<T>&, const BatchView&,                         \
                                       std::span<const TokenId>, ModelParams<T>*, Mode, Rng*);    \
    template LossResult<T> token_cls_loss<T>(const Model<T>&, const BatchView&,                   \
                                             std::span<const int>, ModelParams<T>*, Mode, Rng*);  \
    template LossResult<T> seq_cls_loss<T>(const Model<T>&, const BatchView&,                     \
                                           std::span<const int>, ModelParams<T>*, Mode, Rng*);    \
    template MlmOutput<T> forward_mlm<T>(const Model<T>&, const BatchView&,                       \
                                         std::span<const TokenId>);                               \
    template std::vector<T> forward_token_cls<T>(const Model<T>&, const BatchView&, std::size_t); \
    template std::vector<T> forward_seq_cls<T>(const Model<T>&, const BatchView&, std::size_t);   \
    template void softmax_rows<T>(std::span<T>, std::size_t);

NOMOS_INSTANTIATE(float)
NOMOS_INSTANTIATE(double)

#undef NOMOS_INSTANTIATE

}  // namespace nomos::model
