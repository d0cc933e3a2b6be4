#pragma once

#include "haptix/model.hpp"
#include "haptix/prompt.hpp"
#include "haptix/train.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace haptix {

// One human (or simulated) judgement on a 1..7 scale.
struct RatingRecord {
    std::string signal_id;
    Category category = Category::sensory;
    std::string caption;
    TokenizerKind variant = TokenizerKind::frequency;
    std::string rater_id;
    double rating = 0.0;

    bool operator==(const RatingRecord&) const = default;
};

void validate(const RatingRecord& r);
// Throws if (signal_id, category, caption, rater_id) repeats.
void check_unique(std::span<const RatingRecord> ratings);

struct PreferencePair {
    std::string signal_id;
    Category category = Category::sensory;
    std::string chosen;
    std::string rejected;
    // Empty when pairs were built across variants.
    std::optional<TokenizerKind> variant;
    double chosen_mean = 0.0;
    double rejected_mean = 0.0;
    int chosen_votes = 0;
    int rejected_votes = 0;

    bool operator==(const PreferencePair&) const = default;
};

struct PairOptions {
    double threshold = 3.5;
    bool cross_variant = false;
};

// Per (signal, category[, variant]) group: ratings of the same caption text
// are averaged, captions above the threshold are paired with every caption
// below it. Sorted by (signal_id, category, chosen, rejected, variant).
std::vector<PreferencePair> build_pairs(std::span<const RatingRecord> ratings, const PairOptions& opts = {});

std::string to_jsonl(std::span<const RatingRecord> ratings);
std::string to_jsonl(std::span<const PreferencePair> pairs);
std::vector<RatingRecord> ratings_from_jsonl(const std::string& text);
std::vector<PreferencePair> pairs_from_jsonl(const std::string& text);
std::vector<RatingRecord> read_ratings(const std::filesystem::path& path);
std::vector<PreferencePair> read_pairs(const std::filesystem::path& path);

// A pair rendered against its signal's haptic tokens.
struct DpoExample {
    PromptSample chosen;
    PromptSample rejected;
};

DpoExample make_dpo_example(const PreferencePair& pair, const HapticTokenSequence& haptic, const Vocabulary& vocab,
                            int haptic_stride = 1);

// Summed log-probability of the caption span (caption + EOS).
double caption_log_prob(const ModelState& state, const PromptSample& sample);

struct DpoTerms {
    double loss = 0.0;
    // beta * [(pi - ref)(chosen) - (pi - ref)(rejected)]
    double margin = 0.0;
};

DpoTerms dpo_terms(const ModelState& policy, const ModelState& reference, const DpoExample& ex, double beta);

struct DpoLossAndGrads {
    double loss = 0.0;
    double margin = 0.0;
    ModelParams grads;
};

// Mean DPO loss and margin over the batch, gradients for the policy tensors
// trainable under `scope`. `reference_logps`, when given, holds the
// reference (chosen, rejected) log-probabilities per example.
DpoLossAndGrads dpo_loss_and_grads(const ModelState& policy, const ModelState& reference,
                                   std::span<const DpoExample> batch, double beta,
                                   TrainScope scope = TrainScope::adapters,
                                   std::span<const std::pair<double, double>> reference_logps = {});

struct DpoConfig {
    double beta = 0.1;
    int epochs = 3;
    int batch_size = 4;
    double learning_rate = 1e-4;
    OptimizerKind optimizer = OptimizerKind::adam;
    uint64_t seed = 0;
    bool shuffle = true;
    TrainScope scope = TrainScope::adapters;
    // (epoch, mean loss, mean margin) after every epoch.
    std::function<void(int, double, double)> on_epoch;
};

struct DpoEvaluation {
    double mean_loss = 0.0;
    double mean_margin = 0.0;
    std::vector<DpoTerms> per_pair;
};

DpoEvaluation evaluate_dpo(const ModelState& policy, const ModelState& reference, std::span<const DpoExample> data,
                           double beta);

struct DpoReport {
    // Minibatch means during each epoch.
    std::vector<double> epoch_loss;
    std::vector<double> epoch_margin;
    // Full-set evaluations: before training, then after every epoch.
    std::vector<DpoEvaluation> evaluations;
};

DpoReport train_dpo(ModelState& policy, const ModelState& reference, std::span<const DpoExample> data,
                    const DpoConfig& cfg);

} // namespace haptix
