#pragma once

#include "haptix/corpus.hpp"
#include "haptix/freq_tokenizer.hpp"
#include "haptix/metrics.hpp"
#include "haptix/model.hpp"
#include "haptix/prompt.hpp"
#include "haptix/rvq.hpp"
#include "haptix/train.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace haptix {

struct TokenizerSet {
    FreqTokenizerConfig freq;
    std::optional<RvqCodec> rvq;
};

HapticTokenSequence tokenize(const Waveform& w, TokenizerKind kind, const TokenizerSet& t);
Vocabulary make_vocabulary(TokenizerKind kind, const TokenizerSet& t);

// Default toy-model shape for a vocabulary; the haptic block is the trainable
// embedding range.
ModelConfig model_config_for(const Vocabulary& vocab, TokenizerKind kind);

// One (signal, category) prompt together with all of its reference captions.
struct CaptionGroup {
    std::string signal_id;
    Category category = Category::sensory;
    HapticTokenSequence haptic;
    std::vector<std::string> references;
};

struct SftData {
    std::vector<PromptSample> samples;
    std::vector<CaptionGroup> groups;
};

// Tokenizes each referenced signal once; records of other splits are skipped
// when split is set. Throws when a record names an unknown signal.
SftData build_sft_data(std::span<const CaptionRecord> records, const std::map<std::string, Waveform>& waves,
                       TokenizerKind kind, const TokenizerSet& t, const Vocabulary& vocab,
                       std::optional<Split> split = std::nullopt, int haptic_stride = 1);

std::map<std::string, Waveform> wave_map(std::span<const SignalEntry> signals);

struct BackboneConfig {
    int epochs = 60;
    double learning_rate = 3e-3;
    int batch_size = 4;
    uint64_t seed = 0;
    bool feature_hints = true;
};

// Signal-agnostic prompts over the caption grammar, used to train the base
// weights before adapters are attached. With feature_hints, each canonical
// caption is also paired with a prompt whose signal slot spells out its
// features in words ("low strong fading").
std::vector<PromptSample> backbone_corpus(const Vocabulary& vocab, std::span<const CaptionRecord> extra = {},
                                          bool feature_hints = false);
TrainReport pretrain_backbone(ModelState& state, const Vocabulary& vocab, const BackboneConfig& cfg,
                              std::span<const CaptionRecord> extra = {});

std::vector<EvalSample> caption_groups(const ModelState& state, std::span<const CaptionGroup> groups,
                                       const Vocabulary& vocab, const DecodeConfig& decode, int haptic_stride = 1);

} // namespace haptix
