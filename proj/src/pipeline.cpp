#include "haptix/pipeline.hpp"

#include <stdexcept>

namespace haptix {

HapticTokenSequence tokenize(const Waveform& w, TokenizerKind kind, const TokenizerSet& t) {
    if (kind == TokenizerKind::frequency) {
        return tokenize_freq(w, t.freq);
    }
    if (!t.rvq) {
        throw std::invalid_argument("rvq tokenizer requested but no codec is loaded");
    }
    return rvq_encode(w, *t.rvq);
}

Vocabulary make_vocabulary(TokenizerKind kind, const TokenizerSet& t) {
    Vocabulary v;
    if (kind == TokenizerKind::frequency) {
        v.register_haptic_tokens(freq_tokenizer_spec(t.freq));
    } else {
        if (!t.rvq) {
            throw std::invalid_argument("rvq vocabulary requested but no codec is loaded");
        }
        v.register_haptic_tokens(rvq_tokenizer_spec(t.rvq->config));
    }
    return v;
}

ModelConfig model_config_for(const Vocabulary& vocab, TokenizerKind kind) {
    ModelConfig c;
    c.vocab_size = vocab.size();
    c.trainable_rows_begin = vocab.haptic_offset(kind);
    c.trainable_rows_end = c.trainable_rows_begin + vocab.haptic_count(kind);
    return c;
}

std::map<std::string, Waveform> wave_map(std::span<const SignalEntry> signals) {
    std::map<std::string, Waveform> out;
    for (const auto& s : signals) {
        out.emplace(s.signal_id, s.wave);
    }
    return out;
}

SftData build_sft_data(std::span<const CaptionRecord> records, const std::map<std::string, Waveform>& waves,
                       TokenizerKind kind, const TokenizerSet& t, const Vocabulary& vocab, std::optional<Split> split,
                       int haptic_stride) {
    SftData out;
    std::map<std::string, HapticTokenSequence> tokens;
    std::map<std::pair<std::string, Category>, size_t> group_index;
    for (const auto& r : records) {
        if (split && r.split != *split) {
            continue;
        }
        auto tok = tokens.find(r.signal_id);
        if (tok == tokens.end()) {
            const auto w = waves.find(r.signal_id);
            if (w == waves.end()) {
                throw std::invalid_argument("no waveform for signal " + r.signal_id);
            }
            tok = tokens.emplace(r.signal_id, tokenize(w->second, kind, t)).first;
        }
        out.samples.push_back(assemble(tok->second, r.category, r.caption, vocab, haptic_stride));
        const auto key = std::make_pair(r.signal_id, r.category);
        auto g = group_index.find(key);
        if (g == group_index.end()) {
            g = group_index.emplace(key, out.groups.size()).first;
            out.groups.push_back({r.signal_id, r.category, tok->second, {}});
        }
        out.groups[g->second].references.push_back(r.caption);
    }
    return out;
}

std::vector<PromptSample> backbone_corpus(const Vocabulary& vocab, std::span<const CaptionRecord> extra,
                                          bool feature_hints) {
    std::vector<PromptSample> out;
    for (const auto& [c, text] : grammar_text_corpus()) {
        out.push_back(assemble_signal_agnostic(c, text, vocab));
    }
    for (const auto& r : extra) {
        out.push_back(assemble_signal_agnostic(r.category, r.caption, vocab));
    }
    if (!feature_hints) {
        return out;
    }
    static const char* pitch_words[] = {"low", "mid", "high"};
    static const char* intensity_words[] = {"gentle", "moderate", "strong"};
    static const char* rhythm_words[] = {"steady", "pulsing", "fading", "swelling"};
    for (int p = 0; p < 3; ++p) {
        for (int i = 0; i < 3; ++i) {
            for (int r = 0; r < 4; ++r) {
                SignalFeatures f;
                f.pitch = static_cast<PitchClass>(p);
                f.intensity = static_cast<Intensity>(i);
                f.rhythm = static_cast<Rhythm>(r);
                const std::string hint = std::string(pitch_words[p]) + " " + intensity_words[i] + " " + rhythm_words[r];
                for (auto c : kAllCategories) {
                    PromptSample s;
                    s.category = c;
                    s.caption = canonical_caption(f, c);
                    const auto head = vocab.encode_text("haptic signal: " + hint + ", its " + to_string(c) +
                                                        " description is: ");
                    s.ids.assign(head.begin(), head.end());
                    s.caption_begin = s.ids.size();
                    const auto body = vocab.encode_text(*s.caption);
                    s.ids.insert(s.ids.end(), body.begin(), body.end());
                    s.ids.push_back(Vocabulary::kEos);
                    s.caption_end = s.ids.size();
                    out.push_back(std::move(s));
                }
            }
        }
    }
    return out;
}

TrainReport pretrain_backbone(ModelState& state, const Vocabulary& vocab, const BackboneConfig& cfg,
                              std::span<const CaptionRecord> extra) {
    const auto data = backbone_corpus(vocab, extra, cfg.feature_hints);
    TrainConfig tc;
    tc.scope = TrainScope::base;
    tc.epochs = cfg.epochs;
    tc.learning_rate = cfg.learning_rate;
    tc.batch_size = cfg.batch_size;
    tc.seed = cfg.seed;
    return train_sft(state, data, tc);
}

std::vector<EvalSample> caption_groups(const ModelState& state, std::span<const CaptionGroup> groups,
                                       const Vocabulary& vocab, const DecodeConfig& decode, int haptic_stride) {
    std::vector<EvalSample> out;
    for (const auto& g : groups) {
        const auto prompt = assemble(g.haptic, g.category, std::nullopt, vocab, haptic_stride);
        out.push_back({g.signal_id, g.category, generate(state, prompt, vocab, decode), g.references});
    }
    return out;
}

} // namespace haptix
