#pragma once

#include "haptix/rvq.hpp"  // RowMatrix

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace haptix {

struct ModelConfig {
    int vocab_size = 0;
    int d_model = 64;
    int n_layers = 2;
    int n_heads = 4;
    int max_seq_len = 1600;
    int lora_rank = 4;
    double lora_scale = 1.0;
    int mlp_hidden = 256;
    double rope_base = 10000.0;
    // Embedding rows [trainable_rows_begin, trainable_rows_end) are the haptic
    // token rows; they train together with the adapters.
    int trainable_rows_begin = 0;
    int trainable_rows_end = 0;

    int head_dim() const { return d_model / n_heads; }
    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

enum class TensorKind { embedding, norm, attention, mlp, head, lora_a, lora_b };

// Which tensors receive gradients.
//   adapters: LoRA A/B plus the haptic embedding rows (base frozen).
//   base:     every non-adapter tensor (used to stand in for a pretrained backbone).
enum class TrainScope { adapters, base };

bool is_trainable(TensorKind kind, TrainScope scope);

struct LayerParams {
    RowMatrix attn_gain;  // 1 x d
    RowMatrix wq, wk, wv, wo;  // d x d, y = x W^T
    RowMatrix lora_aq, lora_bq;  // r x d, d x r
    RowMatrix lora_av, lora_bv;
    RowMatrix mlp_gain;  // 1 x d
    RowMatrix w1;  // hidden x d
    RowMatrix w2;  // d x hidden
};

struct ModelParams {
    RowMatrix tok_emb;  // vocab x d
    std::vector<LayerParams> layers;
    RowMatrix final_gain;  // 1 x d
    RowMatrix head;  // vocab x d

    template <class F>
    void for_each(F&& f) {
        f("tok_emb", TensorKind::embedding, tok_emb);
        for (size_t l = 0; l < layers.size(); ++l) {
            auto& L = layers[l];
            const std::string p = "layers." + std::to_string(l) + ".";
            f(p + "attn_gain", TensorKind::norm, L.attn_gain);
            f(p + "wq", TensorKind::attention, L.wq);
            f(p + "wk", TensorKind::attention, L.wk);
            f(p + "wv", TensorKind::attention, L.wv);
            f(p + "wo", TensorKind::attention, L.wo);
            f(p + "lora_aq", TensorKind::lora_a, L.lora_aq);
            f(p + "lora_bq", TensorKind::lora_b, L.lora_bq);
            f(p + "lora_av", TensorKind::lora_a, L.lora_av);
            f(p + "lora_bv", TensorKind::lora_b, L.lora_bv);
            f(p + "mlp_gain", TensorKind::norm, L.mlp_gain);
            f(p + "w1", TensorKind::mlp, L.w1);
            f(p + "w2", TensorKind::mlp, L.w2);
        }
        f("final_gain", TensorKind::norm, final_gain);
        f("head", TensorKind::head, head);
    }

    template <class F>
    void for_each(F&& f) const {
        const_cast<ModelParams*>(this)->for_each(
            [&](const std::string& name, TensorKind kind, RowMatrix& m) { f(name, kind, static_cast<const RowMatrix&>(m)); });
    }

    // Same shapes, all zeros.
    ModelParams zeros_like() const;
    bool bit_equal(const ModelParams& o) const;
    bool all_finite() const;
};

struct ModelState {
    ModelConfig config;
    ModelParams params;
};

// Deterministic init. LoRA A is small random, LoRA B is zero, so the
// adapted projections start equal to the base ones.
ModelState init_model(const ModelConfig& cfg, uint64_t seed);

// Logits for every position (len x vocab). Throws when the sequence is too
// long or an id is out of range.
RowMatrix forward(const ModelState& state, std::span<const int> ids, bool use_adapters = true);

struct WeightedTarget {
    size_t position;  // logits row
    int target;       // token id predicted at that row
    double weight;
};

// Forward pass that keeps the activations needed for an exact backward pass.
class ForwardPass {
public:
    ForwardPass(const ModelState& state, std::span<const int> ids);
    ~ForwardPass();
    ForwardPass(ForwardPass&&) noexcept;
    ForwardPass& operator=(ForwardPass&&) noexcept;

    const RowMatrix& logits() const;
    // log softmax(logits[position])[target]
    double log_prob(size_t position, int target) const;

    // Accumulates into grads the gradient of  -sum_i weight_i * log p(target_i).
    // Only tensors trainable under `scope` are written; embedding rows outside
    // the trainable range are skipped in the adapters scope.
    void backward(std::span<const WeightedTarget> targets, ModelParams& grads, TrainScope scope) const;

private:
    friend RowMatrix forward(const ModelState&, std::span<const int>, bool);
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Incremental decoder with a key/value cache; matches forward() row by row.
class IncrementalDecoder {
public:
    explicit IncrementalDecoder(const ModelState& state);
    ~IncrementalDecoder();
    // Feeds one token and returns the logits for its position.
    Eigen::RowVectorXd step(int id);
    size_t position() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// W <- W + scale * B A for Q and V, then zero A and B.
ModelState merge_adapters(const ModelState& state);

// Tensors of the given scope, flattened in for_each order. Used by the
// optimizer and the gradient checks.
size_t trainable_parameter_count(const ModelState& state, TrainScope scope);

} // namespace haptix
