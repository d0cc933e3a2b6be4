#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace haptix {

constexpr int kDefaultSampleRate = 8000;
constexpr double kMaxDurationSec = 10.0;
constexpr double kBandMinHz = 10.0;
constexpr double kBandMaxHz = 500.0;

// Mono vibration signal. Samples live in [-1, 1].
struct Waveform {
    int sample_rate = kDefaultSampleRate;
    std::vector<double> samples;

    size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
    double duration() const { return static_cast<double>(samples.size()) / sample_rate; }

    static Waveform silence(size_t n, int sample_rate = kDefaultSampleRate);

    bool operator==(const Waveform&) const = default;
};

// Throws std::invalid_argument when the rate is non-positive or a sample lies
// outside [-1, 1] or is not finite.
void validate(const Waveform& w);

double peak(const Waveform& w);
double rms(const Waveform& w);

enum class SynthKind { sine, pulse_train, swept_sine, enveloped_noise };

std::string to_string(SynthKind kind);
SynthKind synth_kind_from_string(const std::string& s);

struct EnvelopePoint {
    double time;  // seconds
    double gain;  // [0, 1]
};

struct SynthSpec {
    SynthKind kind = SynthKind::sine;
    double frequency = 100.0;      // Hz; start frequency for swept_sine
    double end_frequency = 100.0;  // Hz; swept_sine only
    double amplitude = 0.5;
    double duration = 1.0;         // seconds
    double period = 0.25;          // pulse_train only, seconds
    double duty = 0.5;             // pulse_train only, fraction of the period that is "on"
    // Piecewise-linear gain envelope applied on top of the carrier. Empty means
    // constant gain 1.
    std::vector<EnvelopePoint> envelope;
    // Noise seed for enveloped_noise.
    unsigned long long noise_seed = 0;
};

void validate(const SynthSpec& spec);

// Deterministic synthesis. Output has round(duration * sample_rate) samples and
// its peak magnitude equals spec.amplitude.
Waveform synthesize(const SynthSpec& spec, int sample_rate = kDefaultSampleRate);

Waveform reverse(const Waveform& w);
Waveform repeat(const Waveform& w, size_t count);
// Element-wise sum, hard-clipped to [-1, 1]. The shorter input is zero-padded.
Waveform mix(const Waveform& a, const Waveform& b);
// 4th-order Butterworth low-pass (two cascaded bilinear-transform biquads).
Waveform low_pass(const Waveform& w, double cutoff_hz);
Waveform pad_or_truncate(const Waveform& w, size_t target_len);
// Scales so the peak magnitude is 1. Silence is returned unchanged.
Waveform normalize(const Waveform& w);
// Multiplies by a constant, then hard-clips.
Waveform scale(const Waveform& w, double gain);

// Magnitude of the 4th-order Butterworth low-pass used by low_pass(), evaluated
// from the digital transfer function at frequency f.
double low_pass_gain(double f, double cutoff_hz, int sample_rate);

// 16-bit PCM mono RIFF/WAVE.
Waveform read_wav(const std::filesystem::path& path);
void write_wav(const Waveform& w, const std::filesystem::path& path);
std::vector<unsigned char> encode_wav(const Waveform& w);
Waveform decode_wav(const std::vector<unsigned char>& bytes);

} // namespace haptix
