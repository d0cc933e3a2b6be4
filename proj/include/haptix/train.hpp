#pragma once

#include "haptix/kv_config.hpp"
#include "haptix/model.hpp"
#include "haptix/prompt.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace haptix {

struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class OptimizerKind { sgd_momentum, adam };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_from_string(const std::string& s);

class Optimizer {
public:
    Optimizer(OptimizerKind kind, double learning_rate, TrainScope scope, const ModelState& state);

    void step(ModelState& state, const ModelParams& grads);
    void set_learning_rate(double lr) { lr_ = lr; }

    double momentum = 0.9;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

private:
    OptimizerKind kind_;
    double lr_;
    TrainScope scope_;
    ModelParams m_, v_;
    long step_ = 0;
};

struct LossAndGrads {
    double loss = 0.0;
    size_t tokens = 0;
    ModelParams grads;
};

// Mean token cross-entropy over the caption spans of the batch (caption + EOS),
// with gradients for the tensors trainable under `scope`.
LossAndGrads sft_loss_and_grads(const ModelState& state, std::span<const PromptSample> batch,
                                TrainScope scope = TrainScope::adapters);

// Loss only.
double sft_loss(const ModelState& state, std::span<const PromptSample> batch);

struct TrainConfig {
    int epochs = 1;
    int batch_size = 4;
    double learning_rate = 3e-4;
    OptimizerKind optimizer = OptimizerKind::adam;
    uint64_t seed = 0;
    bool shuffle = true;
    TrainScope scope = TrainScope::adapters;
    // Called after every epoch with (epoch index, mean batch loss).
    std::function<void(int, double)> on_epoch;
};

struct TrainReport {
    std::vector<double> epoch_loss;
    std::vector<double> step_loss;
};

// Minibatch training on the caption-span loss. Throws DivergenceError when
// the loss or gradients become non-finite.
TrainReport train_sft(ModelState& state, std::span<const PromptSample> data, const TrainConfig& cfg);

struct DecodeConfig {
    bool greedy = true;
    double temperature = 1.0;
    int max_new_tokens = 96;
    uint64_t seed = 0;
};

// Continues the prompt ids until EOS or max_new_tokens; returns the ids of
// the continuation without the EOS.
std::vector<int> generate_ids(const ModelState& state, std::span<const int> prompt, const DecodeConfig& cfg);
std::string generate(const ModelState& state, const PromptSample& prompt, const Vocabulary& vocab,
                     const DecodeConfig& cfg = {});

// Model + vocabulary + free-form metadata (tokenizer settings and so on).
struct Checkpoint {
    ModelState state;
    Vocabulary vocab;
    KeyValueConfig meta;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace haptix
