#include "doctest.h"

#include "haptix/rng.hpp"
#include "haptix/signal.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>

using namespace haptix;

namespace {

Waveform ramp() { return Waveform{kDefaultSampleRate, {0.0, 0.5, 1.0}}; }

Waveform sine(double f, double a, double d) {
    SynthSpec s;
    s.frequency = f;
    s.amplitude = a;
    s.duration = d;
    return synthesize(s);
}

// Number of maximal runs of nonzero samples.
int nonzero_runs(const Waveform& w) {
    int runs = 0;
    bool in_run = false;
    for (double x : w.samples) {
        const bool nz = x != 0.0;
        if (nz && !in_run) {
            ++runs;
        }
        in_run = nz;
    }
    return runs;
}

double db(double ratio) { return 20.0 * std::log10(ratio); }

} // namespace

TEST_CASE("sine synthesis length, peak and phase") {
    const auto w = sine(100.0, 0.5, 1.0);
    CHECK(w.size() == 8000);
    CHECK(std::abs(peak(w) - 0.5) < 1e-6);
    CHECK(w.samples[0] == 0.0);
}

TEST_CASE("pulse train has one burst per period") {
    SynthSpec s;
    s.kind = SynthKind::pulse_train;
    s.frequency = 100.0;
    s.period = 0.25;
    s.duty = 0.2;
    s.duration = 1.0;
    const auto w = synthesize(s);
    CHECK(w.size() == 8000);
    CHECK(nonzero_runs(w) == 4);
}

TEST_CASE("synthesis rejects invalid specs") {
    SynthSpec s;
    s.frequency = 5.0;
    CHECK_THROWS_AS(synthesize(s), std::invalid_argument);
    s.frequency = 100.0;
    s.duration = 0.0;
    CHECK_THROWS_AS(synthesize(s), std::invalid_argument);
    s.duration = 11.0;
    CHECK_THROWS_AS(synthesize(s), std::invalid_argument);
    s.duration = 1.0;
    s.amplitude = 1.5;
    CHECK_THROWS_AS(synthesize(s), std::invalid_argument);
}

TEST_CASE("synthesis is deterministic for every kind") {
    for (auto kind : {SynthKind::sine, SynthKind::pulse_train, SynthKind::swept_sine, SynthKind::enveloped_noise}) {
        SynthSpec s;
        s.kind = kind;
        s.frequency = 40.0;
        s.end_frequency = 300.0;
        s.amplitude = 0.8;
        s.duration = 0.7;
        s.envelope = {{0.0, 0.0}, {0.2, 1.0}, {0.7, 0.3}};
        s.noise_seed = 17;
        const auto a = synthesize(s);
        const auto b = synthesize(s);
        CHECK(a == b);
        CHECK(a.size() == 5600);
        CHECK(std::abs(peak(a) - 0.8) < 1e-6);
    }
}

TEST_CASE("reverse") {
    const auto w = sine(37.0, 0.9, 0.3);
    CHECK(reverse(reverse(w)) == w);
    const Waveform pal{kDefaultSampleRate, {0.1, 0.4, 0.9, 0.4, 0.1}};
    CHECK(reverse(pal) == pal);
    CHECK(reverse(ramp()).samples == std::vector<double>{1.0, 0.5, 0.0});
}

TEST_CASE("repeat") {
    const auto w = sine(50.0, 0.3, 0.1);
    CHECK(repeat(w, 1) == w);
    CHECK(repeat(w, 3).size() == 3 * w.size());
    CHECK(repeat(ramp(), 2).samples == std::vector<double>{0.0, 0.5, 1.0, 0.0, 0.5, 1.0});
    CHECK_THROWS_AS(repeat(w, 0), std::invalid_argument);
}

TEST_CASE("mix") {
    const auto w = sine(80.0, 0.6, 0.5);
    CHECK(mix(w, Waveform::silence(w.size())) == w);
    const auto loud = sine(80.0, 0.7, 0.5);
    CHECK(peak(mix(loud, loud)) == 1.0);

    Waveform neg = scale(w, -1.0);
    const auto z = mix(w, neg);
    CHECK(peak(z) < 1e-6);

    const auto shorter = sine(80.0, 0.2, 0.25);
    CHECK(mix(w, shorter).size() == w.size());
    CHECK_THROWS_AS(mix(w, Waveform::silence(10, 4000)), std::invalid_argument);
}

TEST_CASE("low-pass attenuation follows the Butterworth response") {
    const double fc = 100.0;
    const double oracle_400 = low_pass_gain(400.0, fc, kDefaultSampleRate);
    // Analog 4th-order Butterworth two octaves above cutoff: 1/sqrt(1+4^8).
    CHECK(db(oracle_400) < -40.0);
    CHECK(db(oracle_400) == doctest::Approx(db(1.0 / std::sqrt(1.0 + std::pow(4.0, 8.0)))).epsilon(0.02));

    const auto hi = sine(400.0, 0.9, 2.0);
    const auto out_hi = low_pass(hi, fc);
    // Skip the start-up transient.
    Waveform tail_in{hi.sample_rate, {hi.samples.begin() + 4000, hi.samples.end()}};
    Waveform tail_out{out_hi.sample_rate, {out_hi.samples.begin() + 4000, out_hi.samples.end()}};
    CHECK(db(rms(tail_out) / rms(tail_in)) <= -40.0);

    const auto lo = sine(10.0, 0.9, 2.0);
    const auto out_lo = low_pass(lo, fc);
    CHECK(std::abs(db(rms(out_lo) / rms(lo))) < 1.0);
    CHECK(std::abs(db(low_pass_gain(fc / 4.0, fc, kDefaultSampleRate))) < 1.0);
    CHECK(std::abs(db(low_pass_gain(fc, fc, kDefaultSampleRate)) + 3.0103) < 0.01);

    CHECK_THROWS_AS(low_pass(lo, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(low_pass(lo, 4000.0), std::invalid_argument);
}

TEST_CASE("low-pass keeps a DC-free input DC-free") {
    // 50 whole cycles of 25 Hz.
    const auto w = sine(25.0, 0.8, 2.0);
    const auto out = low_pass(w, 100.0);
    double mean = 0.0;
    for (double x : out.samples) {
        mean += x;
    }
    mean /= static_cast<double>(out.size());
    CHECK(std::abs(mean) < 1e-3);
    // The filter itself has unit DC gain.
    CHECK(low_pass_gain(0.0, 100.0, kDefaultSampleRate) == doctest::Approx(1.0).epsilon(1e-12));
    const auto zero = low_pass(Waveform::silence(1000), 100.0);
    CHECK(peak(zero) == 0.0);
}

TEST_CASE("pad, truncate and normalize") {
    const auto w = sine(60.0, 0.4, 100.0 / 8000.0);
    REQUIRE(w.size() == 100);
    CHECK(pad_or_truncate(w, 100) == w);
    const auto padded = pad_or_truncate(w, 130);
    CHECK(padded.size() == 130);
    CHECK(padded.samples[129] == 0.0);
    CHECK(pad_or_truncate(w, 40).samples == std::vector<double>(w.samples.begin(), w.samples.begin() + 40));
    const Waveform n{kDefaultSampleRate, {0.0, 0.25, -0.5}};
    CHECK(normalize(n).samples == std::vector<double>{0.0, 0.5, -1.0});
    CHECK(normalize(Waveform::silence(5)) == Waveform::silence(5));
}

TEST_CASE("WAV round trip within 16-bit granularity") {
    const auto path = std::filesystem::temp_directory_path() / "haptix_test_roundtrip.wav";
    SynthSpec s;
    s.kind = SynthKind::enveloped_noise;
    s.amplitude = 1.0;
    s.duration = 0.5;
    s.noise_seed = 3;
    const auto w = synthesize(s);
    write_wav(w, path);
    const auto r = read_wav(path);
    REQUIRE(r.size() == w.size());
    CHECK(r.sample_rate == w.sample_rate);
    for (size_t i = 0; i < w.size(); ++i) {
        REQUIRE(std::abs(r.samples[i] - w.samples[i]) <= 1.0 / 32768.0);
    }
    std::filesystem::remove(path);
    CHECK_THROWS(read_wav(path));
}

TEST_CASE("WAV decoder rejects unsupported input") {
    auto bytes = encode_wav(Waveform{8000, {0.1, 0.2}});
    auto stereo = bytes;
    stereo[22] = 2;
    CHECK_THROWS(decode_wav(stereo));
    auto float_fmt = bytes;
    float_fmt[20] = 3;
    CHECK_THROWS(decode_wav(float_fmt));
    CHECK_THROWS(decode_wav(std::vector<unsigned char>(bytes.begin(), bytes.begin() + 10)));
}

TEST_CASE("property: random transform chains stay in range with lawful lengths") {
    Rng rng(99);
    for (int trial = 0; trial < 60; ++trial) {
        SynthSpec s;
        s.kind = static_cast<SynthKind>(rng.below(4));
        s.frequency = rng.uniform(10.0, 499.0);
        s.end_frequency = rng.uniform(10.0, 499.0);
        s.amplitude = rng.uniform(0.0, 1.0);
        s.duration = rng.uniform(0.05, 0.5);
        s.noise_seed = rng.next_u64();
        Waveform w = synthesize(s);
        for (int step = 0; step < 4; ++step) {
            const size_t before = w.size();
            switch (rng.below(6)) {
            case 0:
                w = reverse(w);
                CHECK(w.size() == before);
                break;
            case 1: {
                const size_t n = 1 + rng.below(2);
                w = repeat(w, n);
                CHECK(w.size() == before * n);
                break;
            }
            case 2:
                w = mix(w, sine(rng.uniform(10.0, 499.0), rng.uniform(0.0, 1.0), 0.2));
                CHECK(w.size() == std::max<size_t>(before, 1600));
                break;
            case 3:
                w = low_pass(w, rng.uniform(20.0, 1000.0));
                CHECK(w.size() == before);
                break;
            case 4: {
                const size_t target = rng.below(4000) + 1;
                w = pad_or_truncate(w, target);
                CHECK(w.size() == target);
                break;
            }
            default:
                w = normalize(w);
                CHECK(w.size() == before);
            }
            CHECK_NOTHROW(validate(w));
        }
    }
}
