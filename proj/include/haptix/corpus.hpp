#pragma once

#include "haptix/freq_tokenizer.hpp"
#include "haptix/prompt.hpp"
#include "haptix/rng.hpp"
#include "haptix/signal.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace haptix {

enum class Split { train, valid, test };
enum class Author { human_synthetic, model };

std::string to_string(Split s);
Split split_from_string(const std::string& s);
std::string to_string(Author a);
Author author_from_string(const std::string& s);

struct CaptionRecord {
    std::string signal_id;
    std::string wav;  // path relative to the manifest directory
    Category category = Category::sensory;
    std::string caption;
    Split split = Split::train;
    Author author = Author::human_synthetic;

    bool operator==(const CaptionRecord&) const = default;
};

std::string to_jsonl(std::span<const CaptionRecord> records);
std::vector<CaptionRecord> caption_records_from_jsonl(const std::string& text);
std::vector<CaptionRecord> read_caption_records(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Signal features and the caption grammar

enum class PitchClass { low, mid, high };          // < 40 Hz, 40..150 Hz, > 150 Hz
enum class Intensity { gentle, moderate, strong };  // peak < 0.35, < 0.7, else
enum class Rhythm { steady, pulsing, fading, swelling };

struct SignalFeatures {
    double dominant_hz = 0.0;
    double peak = 0.0;
    double silent_fraction = 0.0;
    // Mean frame amplitude of the last third over the first third.
    double trend = 1.0;
    PitchClass pitch = PitchClass::mid;
    Intensity intensity = Intensity::moderate;
    Rhythm rhythm = Rhythm::steady;

    // 0..35, one per (pitch, intensity, rhythm) combination.
    int combination() const;
};

SignalFeatures extract_features(const Waveform& w, const FreqTokenizerConfig& cfg = {});

// One fixed caption per (features, category).
std::string canonical_caption(const SignalFeatures& f, Category c);
// A caption drawn from the grammar's templates and synonyms.
std::string sample_caption(const SignalFeatures& f, Category c, Rng& rng);
// Every caption the grammar can produce for these features and category.
std::vector<std::string> all_captions(const SignalFeatures& f, Category c);
// Canonical captions over every feature combination, all categories.
std::vector<std::pair<Category, std::string>> grammar_text_corpus();

// A signal shaped to land in a given (pitch, intensity, rhythm) class.
SynthSpec spec_for_class(PitchClass p, Intensity i, Rhythm r, double duration, Rng& rng);

// ---------------------------------------------------------------------------
// Datasets

struct SignalEntry {
    std::string signal_id;
    std::string source;  // VibRate source tag or "synthetic"
    Waveform wave;
};

struct CaptionCorpus {
    std::vector<SignalEntry> signals;
    std::vector<CaptionRecord> records;
};

struct CaptionCorpusOptions {
    int num_signals = 64;
    int min_captions = 8;
    int max_captions = 10;
    // Use the canonical caption once per category instead of sampling.
    bool canonical = false;
    double min_duration = 2.0;
    double max_duration = 10.0;
};

// Synthetic stand-in for the captioned dataset: signals spread over the
// feature classes, captions from the grammar. Every category of a signal gets
// the same number of captions.
CaptionCorpus generate_caption_corpus(const CaptionCorpusOptions& opts, uint64_t seed);

inline constexpr int kVibrateParametric = 174;
inline constexpr int kVibrateFiltered = 180;
inline constexpr int kVibrateGenerated = 176;
inline constexpr int kVibrateTransformed = 174;
inline constexpr int kVibrateTotal = kVibrateParametric + kVibrateFiltered + kVibrateGenerated + kVibrateTransformed;

// 704 signals from four sources: parametric, filtered, generated, transformed.
std::vector<SignalEntry> generate_vibrate(uint64_t seed);

// Writes <dir>/<id>.wav for each signal plus <dir>/manifest.jsonl.
void write_signal_set(std::span<const SignalEntry> signals, const std::filesystem::path& dir);
// Reads manifest.jsonl and the WAVs it names.
std::vector<SignalEntry> read_signal_set(const std::filesystem::path& dir);

std::map<std::string, size_t> count_sources(std::span<const SignalEntry> signals);

// Signal-level split with largest-remainder apportionment over a seeded
// shuffle of the distinct signal ids. Throws when a signal lacks a category.
std::vector<CaptionRecord> split_dataset(std::span<const CaptionRecord> records, const std::array<double, 3>& ratios,
                                         uint64_t seed);
// Largest-remainder apportionment of n items; ties favour earlier entries.
std::array<size_t, 3> apportion(size_t n, const std::array<double, 3>& ratios);

} // namespace haptix
