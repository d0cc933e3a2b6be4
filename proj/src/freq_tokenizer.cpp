#include "haptix/freq_tokenizer.hpp"

#include "fft.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <regex>
#include <sstream>
#include <stdexcept>

namespace haptix {

int FreqTokenizerConfig::bin_count() const {
    return static_cast<int>(std::ceil(std::log(f_max / f_min) / std::log1p(jnd_ratio)));
}

int FreqTokenizerConfig::vocab_size() const { return bin_count() * amp_levels + 2; }

size_t FreqTokenizerConfig::max_tokens(size_t n) const {
    return (n + static_cast<size_t>(hop_len) - 1) / static_cast<size_t>(hop_len);
}

void FreqTokenizerConfig::validate() const {
    if (sample_rate <= 0) {
        throw std::invalid_argument("freq tokenizer: sample_rate must be positive");
    }
    if (!(f_min > 0.0) || !(f_min < f_max) || !(f_max < sample_rate / 2.0)) {
        throw std::invalid_argument("freq tokenizer: need 0 < f_min < f_max < sample_rate/2");
    }
    if (!(jnd_ratio > 0.0)) {
        throw std::invalid_argument("freq tokenizer: jnd_ratio must be positive");
    }
    if (amp_levels < 1 || frame_len < 2 || hop_len < 1 || fft_oversample < 1) {
        throw std::invalid_argument("freq tokenizer: amp_levels, frame_len, hop_len and fft_oversample must be positive");
    }
    if (silence_threshold < 0.0) {
        throw std::invalid_argument("freq tokenizer: silence_threshold must be non-negative");
    }
}

FreqTokenizerConfig FreqTokenizerConfig::from_kv(const KeyValueConfig& kv) {
    FreqTokenizerConfig c;
    c.sample_rate = static_cast<int>(kv.get_int("sample_rate", c.sample_rate));
    c.f_min = kv.get_double("f_min", c.f_min);
    c.f_max = kv.get_double("f_max", c.f_max);
    c.jnd_ratio = kv.get_double("jnd_ratio", c.jnd_ratio);
    c.amp_levels = static_cast<int>(kv.get_int("amp_levels", c.amp_levels));
    c.frame_len = static_cast<int>(kv.get_int("frame_len", c.frame_len));
    c.hop_len = static_cast<int>(kv.get_int("hop_len", c.hop_len));
    c.silence_threshold = kv.get_double("silence_threshold", c.silence_threshold);
    c.fft_oversample = static_cast<int>(kv.get_int("fft_oversample", c.fft_oversample));
    c.validate();
    return c;
}

KeyValueConfig FreqTokenizerConfig::to_kv() const {
    KeyValueConfig kv;
    auto num = [](double v) {
        std::ostringstream s;
        s.precision(17);
        s << v;
        return s.str();
    };
    kv.set("sample_rate", std::to_string(sample_rate));
    kv.set("f_min", num(f_min));
    kv.set("f_max", num(f_max));
    kv.set("jnd_ratio", num(jnd_ratio));
    kv.set("amp_levels", std::to_string(amp_levels));
    kv.set("frame_len", std::to_string(frame_len));
    kv.set("hop_len", std::to_string(hop_len));
    kv.set("silence_threshold", num(silence_threshold));
    kv.set("fft_oversample", std::to_string(fft_oversample));
    return kv;
}

int freq_bin(double hz, const FreqTokenizerConfig& cfg) {
    if (!(hz >= cfg.f_min) || !(hz < cfg.f_max)) {
        throw std::out_of_range("frequency outside [f_min, f_max)");
    }
    const int raw = static_cast<int>(std::floor(std::log(hz / cfg.f_min) / std::log1p(cfg.jnd_ratio)));
    return std::clamp(raw, 0, cfg.bin_count() - 1);
}

int amp_level(double amplitude, const FreqTokenizerConfig& cfg) {
    const double a = std::clamp(amplitude, 0.0, 1.0);
    return std::min(static_cast<int>(std::floor(a * cfg.amp_levels)), cfg.amp_levels - 1);
}

int freq_token_id(int bin, int level, const FreqTokenizerConfig& cfg) {
    if (bin < 0 || bin >= cfg.bin_count() || level < 0 || level >= cfg.amp_levels) {
        throw std::out_of_range("frequency token indices out of range");
    }
    return bin * cfg.amp_levels + level;
}

std::string freq_token_symbol(int id, const FreqTokenizerConfig& cfg) {
    if (id == cfg.pad_id()) {
        return "FREQ_PAD";
    }
    if (id == cfg.sep_id()) {
        return "FREQ_SEP";
    }
    if (id < 0 || id > cfg.sep_id()) {
        throw std::out_of_range("frequency token id out of range");
    }
    return "FREQ_" + std::to_string(id / cfg.amp_levels) + "_AMP_" + std::to_string(id % cfg.amp_levels);
}

int freq_token_from_symbol(const std::string& symbol, const FreqTokenizerConfig& cfg) {
    if (symbol == "FREQ_PAD") {
        return cfg.pad_id();
    }
    if (symbol == "FREQ_SEP") {
        return cfg.sep_id();
    }
    static const std::regex pattern(R"(FREQ_(\d+)_AMP_(\d+))");
    std::smatch m;
    if (!std::regex_match(symbol, m, pattern)) {
        throw std::invalid_argument("not a frequency token: " + symbol);
    }
    return freq_token_id(std::stoi(m[1]), std::stoi(m[2]), cfg);
}

std::vector<FrameAnalysis> analyze_frames(const Waveform& w, const FreqTokenizerConfig& cfg) {
    cfg.validate();
    if (w.empty()) {
        throw std::invalid_argument("cannot tokenize an empty waveform");
    }
    if (w.sample_rate != cfg.sample_rate) {
        throw std::invalid_argument("waveform sample rate does not match the tokenizer config");
    }

    const size_t frame_len = static_cast<size_t>(cfg.frame_len);
    const size_t hop = static_cast<size_t>(cfg.hop_len);
    const size_t fft_size = frame_len * static_cast<size_t>(cfg.fft_oversample);
    const double bin_hz = static_cast<double>(cfg.sample_rate) / static_cast<double>(fft_size);

    std::vector<double> window(frame_len);
    for (size_t n = 0; n < frame_len; ++n) {
        window[n] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / static_cast<double>(frame_len)));
    }

    const auto k_lo = static_cast<size_t>(std::ceil(cfg.f_min / bin_hz));
    const auto k_hi = std::min(static_cast<size_t>(std::floor(cfg.f_max / bin_hz)), fft_size / 2);

    const size_t frames = cfg.max_tokens(w.size());
    std::vector<FrameAnalysis> out(frames);
    std::vector<double> buf(frame_len);
    for (size_t f = 0; f < frames; ++f) {
        const size_t start = f * hop;
        const size_t valid = std::min(frame_len, w.size() - start);
        double window_sum = 0.0;
        std::fill(buf.begin(), buf.end(), 0.0);
        for (size_t n = 0; n < valid; ++n) {
            buf[n] = w.samples[start + n] * window[n];
            window_sum += window[n];
        }
        if (window_sum <= 0.0) {
            continue;
        }
        const auto mag = detail::real_fft_magnitude(buf, fft_size);

        size_t best = k_lo;
        for (size_t k = k_lo; k <= k_hi; ++k) {
            if (mag[k] > mag[best]) {
                best = k;
            }
        }
        double offset = 0.0;
        double peak_mag = mag[best];
        if (best > 0 && best + 1 < mag.size() && mag[best - 1] > 0.0 && mag[best + 1] > 0.0 && peak_mag > 0.0) {
            // Parabolic refinement on log magnitude.
            const double a = std::log(mag[best - 1]);
            const double b = std::log(peak_mag);
            const double c = std::log(mag[best + 1]);
            const double denom = a - 2.0 * b + c;
            if (denom < 0.0) {
                offset = std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
                peak_mag = std::exp(b - 0.25 * (a - c) * offset);
            }
        }
        FrameAnalysis& fa = out[f];
        fa.peak_hz = (static_cast<double>(best) + offset) * bin_hz;
        fa.peak_amplitude = 2.0 * peak_mag / window_sum;
        if (fa.peak_amplitude < cfg.silence_threshold) {
            continue;
        }
        const double hz = std::clamp(fa.peak_hz, cfg.f_min, std::nextafter(cfg.f_max, cfg.f_min));
        fa.token = freq_token_id(freq_bin(hz, cfg), amp_level(fa.peak_amplitude, cfg), cfg);
    }
    return out;
}

HapticTokenSequence tokenize_freq(const Waveform& w, const FreqTokenizerConfig& cfg) {
    HapticTokenSequence seq{TokenizerKind::frequency, {}};
    for (const auto& fa : analyze_frames(w, cfg)) {
        if (fa.token) {
            seq.ids.push_back(*fa.token);
        }
    }
    return seq;
}

} // namespace haptix
