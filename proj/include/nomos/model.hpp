#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nomos/rng.hpp"
#include "nomos/tokenizer.hpp"

namespace nomos::model {

using tokenizer::TokenId;

/// Label value for positions/rows excluded from a loss.
inline constexpr int kIgnore = -100;

class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ModelConfig {
    std::size_t num_layers = 4;
    std::size_t hidden_dim = 256;
    std::size_t num_heads = 4;
    std::size_t ffn_dim = 1024;
    std::size_t vocab_size = 0;  // taken from the tokenizer
    std::size_t max_positions = 512;
    double dropout = 0.1;
    std::size_t num_tags = 17;    // token-classification head width
    std::size_t num_labels = 47;  // sequence-classification head width
    double init_std = 0.02;
    double layer_norm_eps = 1e-5;
    // Accepted for configuration parity; desk-scale math runs in the
    // instantiated scalar type and ignores this flag.
    bool mixed_precision = false;

    std::size_t head_dim() const noexcept { return hidden_dim / num_heads; }
    /// Throws ModelError on an inconsistent shape.
    void validate() const;
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <class T>
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
        std::size_t n = 1;
        for (auto d : shape) n *= d;
        data.assign(n, T(0));
    }
    std::size_t size() const noexcept { return data.size(); }
    T* ptr() noexcept { return data.data(); }
    const T* ptr() const noexcept { return data.data(); }
    friend bool operator==(const Tensor&, const Tensor&) = default;
};

template <class T>
struct LayerParams {
    Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor<T> ln1_g, ln1_b;
    Tensor<T> w1, b1, w2, b2;
    Tensor<T> ln2_g, ln2_b;
    friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

/// Encoder weights plus the three heads. The MLM projection is the token
/// embedding table itself (tied); only its bias is a separate tensor.
template <class T>
struct ModelParams {
    Tensor<T> tok_emb, pos_emb, emb_ln_g, emb_ln_b;
    std::vector<LayerParams<T>> layers;
    Tensor<T> mlm_bias;
    Tensor<T> tok_cls_w, tok_cls_b;
    Tensor<T> seq_cls_w, seq_cls_b;

    /// Zero tensors shaped for `config`.
    static ModelParams zeros(const ModelConfig& config);

    /// Visits every tensor in a fixed order with its stable name.
    template <class F>
    void for_each(F&& f) {
        visit(*this, f);
    }
    template <class F>
    void for_each(F&& f) const {
        visit(*this, f);
    }

    std::size_t parameter_count() const;
    friend bool operator==(const ModelParams&, const ModelParams&) = default;

private:
    template <class Self, class F>
    static void visit(Self& self, F& f) {
        f("embeddings.token", self.tok_emb);
        f("embeddings.position", self.pos_emb);
        f("embeddings.ln.gamma", self.emb_ln_g);
        f("embeddings.ln.beta", self.emb_ln_b);
        for (std::size_t l = 0; l < self.layers.size(); ++l) {
            auto& L = self.layers[l];
            const std::string p = "layers." + std::to_string(l) + ".";
            f(p + "attn.q.weight", L.wq);
            f(p + "attn.q.bias", L.bq);
            f(p + "attn.k.weight", L.wk);
            f(p + "attn.k.bias", L.bk);
            f(p + "attn.v.weight", L.wv);
            f(p + "attn.v.bias", L.bv);
            f(p + "attn.out.weight", L.wo);
            f(p + "attn.out.bias", L.bo);
            f(p + "ln1.gamma", L.ln1_g);
            f(p + "ln1.beta", L.ln1_b);
            f(p + "ffn.in.weight", L.w1);
            f(p + "ffn.in.bias", L.b1);
            f(p + "ffn.out.weight", L.w2);
            f(p + "ffn.out.bias", L.b2);
            f(p + "ln2.gamma", L.ln2_g);
            f(p + "ln2.beta", L.ln2_b);
        }
        f("heads.mlm.bias", self.mlm_bias);
        f("heads.token_cls.weight", self.tok_cls_w);
        f("heads.token_cls.bias", self.tok_cls_b);
        f("heads.seq_cls.weight", self.seq_cls_w);
        f("heads.seq_cls.bias", self.seq_cls_b);
    }
};

template <class T>
struct Model {
    ModelConfig config;
    ModelParams<T> params;
};

/// Deterministic init: N(0, init_std) for matrices and embeddings, zero
/// biases, unit layer-norm gains. Each tensor draws from its own stream
/// Rng::derive(seed, tensor_index).
template <class T>
Model<T> init(const ModelConfig& config, std::uint64_t seed);

/// Inputs for one forward pass, row-major [rows, cols].
struct BatchView {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::span<const TokenId> ids;
    std::span<const std::uint8_t> attention_mask;
};

enum class Mode { Inference, Train };

template <class T>
struct LayerCache {
    std::vector<T> x_in;           // [N, H] layer input
    std::vector<T> q, k, v;        // [N, H]
    std::vector<T> probs;          // [rows, heads, cols, cols]
    std::vector<T> ctx;            // [N, H] concatenated head outputs
    std::vector<T> attn_drop;      // [N, H] dropout scales, empty when off
    std::vector<T> ln1_xhat;       // [N, H]
    std::vector<T> ln1_rstd;       // [N]
    std::vector<T> x1;             // [N, H] post-attention block output
    std::vector<T> ffn_pre;        // [N, F]
    std::vector<T> ffn_act;        // [N, F]
    std::vector<T> ffn_drop;       // [N, H]
    std::vector<T> ln2_xhat;       // [N, H]
    std::vector<T> ln2_rstd;       // [N]
};

/// Everything the backward pass needs from one forward pass.
template <class T>
struct EncoderCache {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<TokenId> ids;
    std::vector<std::uint8_t> attention_mask;
    std::vector<T> emb_xhat;
    std::vector<T> emb_rstd;
    std::vector<T> emb_drop;
    std::vector<LayerCache<T>> layers;
};

/// Runs the encoder. Returns final hidden states [rows * cols, hidden].
/// In Train mode dropout draws from `dropout_rng`; Inference mode is
/// deterministic. When `cache` is non-null it receives the activations.
template <class T>
std::vector<T> encode(const Model<T>& model, const BatchView& batch, Mode mode, Rng* dropout_rng,
                      EncoderCache<T>* cache);

/// Accumulates parameter gradients for d(loss)/d(hidden) into `grads`.
template <class T>
void encode_backward(const Model<T>& model, const EncoderCache<T>& cache,
                     std::span<const T> d_hidden, ModelParams<T>& grads);

template <class T>
struct LossResult {
    T loss = 0;
    std::size_t count = 0;  // number of targets the mean ran over
    bool empty_warning = false;
};

/// Masked-LM loss: mean cross-entropy over positions whose label is not
/// kIgnore. Logits are computed only at those positions. Accumulates
/// gradients into `grads` when non-null.
template <class T>
LossResult<T> mlm_loss(const Model<T>& model, const BatchView& batch,
                       std::span<const TokenId> labels, ModelParams<T>* grads, Mode mode,
                       Rng* dropout_rng);

/// Token-classification loss; labels are tag ids per position or kIgnore.
template <class T>
LossResult<T> token_cls_loss(const Model<T>& model, const BatchView& batch,
                             std::span<const int> labels, ModelParams<T>* grads, Mode mode,
                             Rng* dropout_rng);

/// Sequence-classification loss; one label per row (or kIgnore).
template <class T>
LossResult<T> seq_cls_loss(const Model<T>& model, const BatchView& batch,
                           std::span<const int> labels, ModelParams<T>* grads, Mode mode,
                           Rng* dropout_rng);

template <class T>
struct MlmOutput {
    T loss = 0;
    bool empty_warning = false;  // no selected positions; loss defined as 0
    std::vector<T> logits;       // [rows, cols, vocab]
};

/// Inference-mode MLM forward with full logits.
template <class T>
MlmOutput<T> forward_mlm(const Model<T>& model, const BatchView& batch,
                         std::span<const TokenId> labels);

/// Inference-mode token-classification logits [rows, cols, num_tags].
/// Throws ModelError when `expected_tags` disagrees with the head.
template <class T>
std::vector<T> forward_token_cls(const Model<T>& model, const BatchView& batch,
                                 std::size_t expected_tags);

/// Inference-mode sequence-classification logits [rows, num_labels] from the
/// first-position hidden state.
template <class T>
std::vector<T> forward_seq_cls(const Model<T>& model, const BatchView& batch,
                               std::size_t expected_labels);

/// Row-wise softmax in place over [rows, width].
template <class T>
void softmax_rows(std::span<T> values, std::size_t width);

}  // namespace nomos::model
