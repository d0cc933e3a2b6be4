#include "haptix/signal.hpp"

#include "haptix/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <stdexcept>

namespace haptix {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double clip(double x) { return std::clamp(x, -1.0, 1.0); }

double envelope_gain(const std::vector<EnvelopePoint>& env, double t) {
    if (env.empty()) {
        return 1.0;
    }
    if (t <= env.front().time) {
        return env.front().gain;
    }
    if (t >= env.back().time) {
        return env.back().gain;
    }
    for (size_t i = 1; i < env.size(); ++i) {
        if (t <= env[i].time) {
            const auto& a = env[i - 1];
            const auto& b = env[i];
            const double span = b.time - a.time;
            if (span <= 0.0) {
                return b.gain;
            }
            return a.gain + (b.gain - a.gain) * (t - a.time) / span;
        }
    }
    return env.back().gain;
}

// One second-order low-pass section from the bilinear transform of
// 1 / (s^2 + s/q + 1) with frequency prewarping.
struct Biquad {
    double b0, b1, b2, a1, a2;

    static Biquad low_pass(double cutoff_hz, double q, int sample_rate) {
        const double k = std::tan(std::numbers::pi * cutoff_hz / sample_rate);
        const double norm = 1.0 / (1.0 + k / q + k * k);
        Biquad bq{};
        bq.b0 = k * k * norm;
        bq.b1 = 2.0 * bq.b0;
        bq.b2 = bq.b0;
        bq.a1 = 2.0 * (k * k - 1.0) * norm;
        bq.a2 = (1.0 - k / q + k * k) * norm;
        return bq;
    }

    std::complex<double> response(double omega) const {
        const std::complex<double> z1 = std::polar(1.0, -omega);
        const std::complex<double> z2 = z1 * z1;
        return (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2);
    }

    void run(std::vector<double>& x) const {
        double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
        for (double& v : x) {
            const double y = b0 * v + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
            x2 = x1;
            x1 = v;
            y2 = y1;
            y1 = y;
            v = y;
        }
    }
};

// Pole-pair quality factors of a 4th-order Butterworth prototype.
std::array<double, 2> butterworth4_q() {
    return {1.0 / (2.0 * std::cos(std::numbers::pi / 8.0)),
            1.0 / (2.0 * std::cos(3.0 * std::numbers::pi / 8.0))};
}

void check_cutoff(double cutoff_hz, int sample_rate) {
    if (!(cutoff_hz > 0.0) || !(cutoff_hz < sample_rate / 2.0)) {
        throw std::invalid_argument("low_pass: cutoff must lie in (0, sample_rate/2)");
    }
}

} // namespace

Waveform Waveform::silence(size_t n, int sample_rate) {
    return Waveform{sample_rate, std::vector<double>(n, 0.0)};
}

void validate(const Waveform& w) {
    if (w.sample_rate <= 0) {
        throw std::invalid_argument("waveform sample rate must be positive");
    }
    for (double s : w.samples) {
        if (!std::isfinite(s) || s < -1.0 || s > 1.0) {
            throw std::invalid_argument("waveform sample outside [-1, 1]");
        }
    }
}

double peak(const Waveform& w) {
    double p = 0.0;
    for (double s : w.samples) {
        p = std::max(p, std::abs(s));
    }
    return p;
}

double rms(const Waveform& w) {
    if (w.empty()) {
        return 0.0;
    }
    double acc = 0.0;
    for (double s : w.samples) {
        acc += s * s;
    }
    return std::sqrt(acc / static_cast<double>(w.size()));
}

std::string to_string(SynthKind kind) {
    switch (kind) {
    case SynthKind::sine:
        return "sine";
    case SynthKind::pulse_train:
        return "pulse_train";
    case SynthKind::swept_sine:
        return "swept_sine";
    case SynthKind::enveloped_noise:
        return "enveloped_noise";
    }
    return "sine";
}

SynthKind synth_kind_from_string(const std::string& s) {
    if (s == "sine") return SynthKind::sine;
    if (s == "pulse_train") return SynthKind::pulse_train;
    if (s == "swept_sine") return SynthKind::swept_sine;
    if (s == "enveloped_noise") return SynthKind::enveloped_noise;
    throw std::invalid_argument("unknown synth kind: " + s);
}

void validate(const SynthSpec& spec) {
    auto in_band = [](double f) { return f >= kBandMinHz && f <= kBandMaxHz; };
    if (!in_band(spec.frequency)) {
        throw std::invalid_argument("synth frequency outside the vibrotactile band");
    }
    if (spec.kind == SynthKind::swept_sine && !in_band(spec.end_frequency)) {
        throw std::invalid_argument("sweep end frequency outside the vibrotactile band");
    }
    if (!(spec.duration > 0.0) || spec.duration > kMaxDurationSec) {
        throw std::invalid_argument("synth duration must lie in (0, 10] seconds");
    }
    if (!(spec.amplitude >= 0.0) || spec.amplitude > 1.0) {
        throw std::invalid_argument("synth amplitude must lie in [0, 1]");
    }
    if (spec.kind == SynthKind::pulse_train) {
        if (!(spec.period > 0.0)) {
            throw std::invalid_argument("pulse period must be positive");
        }
        if (!(spec.duty > 0.0) || spec.duty > 1.0) {
            throw std::invalid_argument("pulse duty must lie in (0, 1]");
        }
    }
    for (size_t i = 0; i < spec.envelope.size(); ++i) {
        const auto& p = spec.envelope[i];
        if (p.gain < 0.0 || p.gain > 1.0 || p.time < 0.0) {
            throw std::invalid_argument("envelope gains must lie in [0, 1] at non-negative times");
        }
        if (i > 0 && p.time < spec.envelope[i - 1].time) {
            throw std::invalid_argument("envelope breakpoints must be time-ordered");
        }
    }
}

Waveform synthesize(const SynthSpec& spec, int sample_rate) {
    validate(spec);
    if (sample_rate <= 0) {
        throw std::invalid_argument("sample rate must be positive");
    }
    const auto n = static_cast<size_t>(std::llround(spec.duration * sample_rate));
    std::vector<double> out(n, 0.0);
    const double sr = static_cast<double>(sample_rate);
    Rng noise(spec.noise_seed);

    for (size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / sr;
        double carrier = 0.0;
        switch (spec.kind) {
        case SynthKind::sine:
            carrier = std::sin(kTwoPi * spec.frequency * t);
            break;
        case SynthKind::pulse_train: {
            const double local = std::fmod(t, spec.period);
            if (local < spec.duty * spec.period) {
                carrier = std::sin(kTwoPi * spec.frequency * local);
            }
            break;
        }
        case SynthKind::swept_sine: {
            const double rate = (spec.end_frequency - spec.frequency) / spec.duration;
            carrier = std::sin(kTwoPi * (spec.frequency * t + 0.5 * rate * t * t));
            break;
        }
        case SynthKind::enveloped_noise:
            carrier = 2.0 * noise.uniform() - 1.0;
            break;
        }
        out[i] = carrier * envelope_gain(spec.envelope, t);
    }

    double raw_peak = 0.0;
    for (double s : out) {
        raw_peak = std::max(raw_peak, std::abs(s));
    }
    if (raw_peak == 0.0) {
        if (spec.amplitude > 0.0 && n > 0) {
            throw std::invalid_argument("synth spec produces silence but asks for non-zero amplitude");
        }
        return Waveform{sample_rate, std::move(out)};
    }
    const double gain = spec.amplitude / raw_peak;
    for (double& s : out) {
        s = clip(s * gain);
    }
    return Waveform{sample_rate, std::move(out)};
}

Waveform reverse(const Waveform& w) {
    Waveform out = w;
    std::reverse(out.samples.begin(), out.samples.end());
    return out;
}

Waveform repeat(const Waveform& w, size_t count) {
    if (count == 0) {
        throw std::invalid_argument("repeat count must be at least 1");
    }
    Waveform out{w.sample_rate, {}};
    out.samples.reserve(w.size() * count);
    for (size_t i = 0; i < count; ++i) {
        out.samples.insert(out.samples.end(), w.samples.begin(), w.samples.end());
    }
    return out;
}

Waveform mix(const Waveform& a, const Waveform& b) {
    if (a.sample_rate != b.sample_rate) {
        throw std::invalid_argument("mix: sample rate mismatch");
    }
    Waveform out{a.sample_rate, std::vector<double>(std::max(a.size(), b.size()), 0.0)};
    for (size_t i = 0; i < out.size(); ++i) {
        const double x = (i < a.size() ? a.samples[i] : 0.0) + (i < b.size() ? b.samples[i] : 0.0);
        out.samples[i] = clip(x);
    }
    return out;
}

Waveform low_pass(const Waveform& w, double cutoff_hz) {
    check_cutoff(cutoff_hz, w.sample_rate);
    Waveform out = w;
    for (double q : butterworth4_q()) {
        Biquad::low_pass(cutoff_hz, q, w.sample_rate).run(out.samples);
    }
    for (double& s : out.samples) {
        s = clip(s);
    }
    return out;
}

double low_pass_gain(double f, double cutoff_hz, int sample_rate) {
    check_cutoff(cutoff_hz, sample_rate);
    const double omega = 2.0 * std::numbers::pi * f / sample_rate;
    std::complex<double> h = 1.0;
    for (double q : butterworth4_q()) {
        h *= Biquad::low_pass(cutoff_hz, q, sample_rate).response(omega);
    }
    return std::abs(h);
}

Waveform pad_or_truncate(const Waveform& w, size_t target_len) {
    Waveform out = w;
    out.samples.resize(target_len, 0.0);
    return out;
}

Waveform normalize(const Waveform& w) {
    const double p = peak(w);
    if (p == 0.0) {
        return w;
    }
    Waveform out = w;
    for (double& s : out.samples) {
        s = clip(s / p);
    }
    return out;
}

Waveform scale(const Waveform& w, double gain) {
    Waveform out = w;
    for (double& s : out.samples) {
        s = clip(s * gain);
    }
    return out;
}

// ---------------------------------------------------------------------------
// WAV

namespace {

void put_u16(std::vector<unsigned char>& b, uint16_t v) {
    b.push_back(static_cast<unsigned char>(v & 0xff));
    b.push_back(static_cast<unsigned char>(v >> 8));
}

void put_u32(std::vector<unsigned char>& b, uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        b.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
    }
}

uint16_t get_u16(const std::vector<unsigned char>& b, size_t at) {
    return static_cast<uint16_t>(b[at] | (b[at + 1] << 8));
}

uint32_t get_u32(const std::vector<unsigned char>& b, size_t at) {
    return static_cast<uint32_t>(b[at]) | (static_cast<uint32_t>(b[at + 1]) << 8) |
           (static_cast<uint32_t>(b[at + 2]) << 16) | (static_cast<uint32_t>(b[at + 3]) << 24);
}

} // namespace

std::vector<unsigned char> encode_wav(const Waveform& w) {
    validate(w);
    const auto data_bytes = static_cast<uint32_t>(w.size() * 2);
    std::vector<unsigned char> b;
    b.reserve(44 + data_bytes);
    b.insert(b.end(), {'R', 'I', 'F', 'F'});
    put_u32(b, 36 + data_bytes);
    b.insert(b.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
    put_u32(b, 16);
    put_u16(b, 1);  // PCM
    put_u16(b, 1);  // mono
    put_u32(b, static_cast<uint32_t>(w.sample_rate));
    put_u32(b, static_cast<uint32_t>(w.sample_rate) * 2);
    put_u16(b, 2);
    put_u16(b, 16);
    b.insert(b.end(), {'d', 'a', 't', 'a'});
    put_u32(b, data_bytes);
    for (double s : w.samples) {
        const auto q = static_cast<int16_t>(std::lround(clip(s) * 32767.0));
        put_u16(b, static_cast<uint16_t>(q));
    }
    return b;
}

Waveform decode_wav(const std::vector<unsigned char>& b) {
    if (b.size() < 12 || std::memcmp(b.data(), "RIFF", 4) != 0 || std::memcmp(b.data() + 8, "WAVE", 4) != 0) {
        throw std::runtime_error("not a RIFF/WAVE file");
    }
    size_t at = 12;
    bool have_fmt = false;
    int sample_rate = 0;
    while (at + 8 <= b.size()) {
        const std::string id(reinterpret_cast<const char*>(b.data() + at), 4);
        const uint32_t len = get_u32(b, at + 4);
        const size_t body = at + 8;
        if (body + len > b.size()) {
            throw std::runtime_error("truncated WAV chunk: " + id);
        }
        if (id == "fmt ") {
            if (len < 16) {
                throw std::runtime_error("malformed WAV fmt chunk");
            }
            const uint16_t format = get_u16(b, body);
            const uint16_t channels = get_u16(b, body + 2);
            sample_rate = static_cast<int>(get_u32(b, body + 4));
            const uint16_t bits = get_u16(b, body + 14);
            if (format != 1 || bits != 16) {
                throw std::runtime_error("unsupported WAV encoding (need 16-bit PCM)");
            }
            if (channels != 1) {
                throw std::runtime_error("multi-channel WAV input is not supported");
            }
            if (sample_rate <= 0) {
                throw std::runtime_error("WAV declares a non-positive sample rate");
            }
            have_fmt = true;
        } else if (id == "data") {
            if (!have_fmt) {
                throw std::runtime_error("WAV data chunk precedes fmt chunk");
            }
            Waveform w{sample_rate, {}};
            w.samples.resize(len / 2);
            for (size_t i = 0; i < w.samples.size(); ++i) {
                const auto v = static_cast<int16_t>(get_u16(b, body + 2 * i));
                w.samples[i] = clip(static_cast<double>(v) / 32767.0);
            }
            return w;
        }
        at = body + len + (len & 1u);
    }
    throw std::runtime_error("WAV file has no data chunk");
}

Waveform read_wav(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open WAV file: " + path.string());
    }
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_wav(bytes);
}

void write_wav(const Waveform& w, const std::filesystem::path& path) {
    const auto bytes = encode_wav(w);
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write WAV file: " + path.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw std::runtime_error("short write to WAV file: " + path.string());
    }
}

} // namespace haptix
