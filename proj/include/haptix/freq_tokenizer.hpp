#pragma once

#include "haptix/kv_config.hpp"
#include "haptix/signal.hpp"
#include "haptix/tokens.hpp"

#include <optional>
#include <string>
#include <vector>

namespace haptix {

// Framewise spectral tokenizer: each frame's dominant in-band peak becomes one
// FREQ_i_AMP_j token, with log-spaced frequency bins one relative JND wide.
struct FreqTokenizerConfig {
    int sample_rate = kDefaultSampleRate;
    double f_min = kBandMinHz;
    double f_max = kBandMaxHz;
    double jnd_ratio = 0.19;
    int amp_levels = 12;
    int frame_len = 2048;
    int hop_len = 1539;
    double silence_threshold = 0.02;
    // Zero-padding factor applied before the FFT to reduce scalloping.
    int fft_oversample = 4;

    int bin_count() const;
    // bin_count * amp_levels content tokens + PAD + SEP.
    int vocab_size() const;
    int pad_id() const { return bin_count() * amp_levels; }
    int sep_id() const { return pad_id() + 1; }
    // Upper bound on emitted tokens for a waveform of n samples.
    size_t max_tokens(size_t n) const;

    void validate() const;

    static FreqTokenizerConfig from_kv(const KeyValueConfig& kv);
    KeyValueConfig to_kv() const;
};

int freq_bin(double hz, const FreqTokenizerConfig& cfg);
int amp_level(double amplitude, const FreqTokenizerConfig& cfg);

int freq_token_id(int bin, int level, const FreqTokenizerConfig& cfg);
std::string freq_token_symbol(int id, const FreqTokenizerConfig& cfg);
int freq_token_from_symbol(const std::string& symbol, const FreqTokenizerConfig& cfg);

struct FrameAnalysis {
    double peak_hz = 0.0;
    double peak_amplitude = 0.0;
    std::optional<int> token;
};

// Per-frame analysis, including silent frames (token empty).
std::vector<FrameAnalysis> analyze_frames(const Waveform& w, const FreqTokenizerConfig& cfg);

HapticTokenSequence tokenize_freq(const Waveform& w, const FreqTokenizerConfig& cfg = {});

} // namespace haptix
