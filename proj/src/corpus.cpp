#include "haptix/corpus.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace haptix {

namespace {

using nlohmann::json;

template <class T>
const T& pick(const std::vector<T>& v, Rng& rng) {
    return v[static_cast<size_t>(rng.below(v.size()))];
}

double log_uniform(Rng& rng, double lo, double hi) { return std::exp(rng.uniform(std::log(lo), std::log(hi))); }

// Word tables of the caption grammar; the first entry of each list is the
// canonical choice.
const std::vector<std::string>& intensity_words(Intensity i) {
    static const std::vector<std::string> w[3] = {
        {"gentle", "soft", "faint"}, {"moderate", "medium", "mild"}, {"strong", "intense", "powerful"}};
    return w[static_cast<int>(i)];
}

const std::vector<std::string>& pitch_nouns(PitchClass p) {
    static const std::vector<std::string> w[3] = {
        {"low rumble", "deep rumble", "low hum"}, {"buzz", "humming buzz", "mid buzz"},
        {"high whine", "sharp whine", "high-pitched buzz"}};
    return w[static_cast<int>(p)];
}

const std::vector<std::string>& rhythm_phrases(Rhythm r) {
    static const std::vector<std::string> w[4] = {{"stays steady", "holds constant", "keeps an even level"},
                                                  {"pulses on and off", "comes in short bursts", "beats in a rhythm"},
                                                  {"fades away", "slowly dies out", "gets weaker"},
                                                  {"grows stronger", "builds up", "rises in strength"}};
    return w[static_cast<int>(r)];
}

const std::vector<std::string>& mood_words(Intensity i, PitchClass p) {
    static const std::vector<std::string> w[3][3] = {
        {{"calm", "peaceful"}, {"relaxed", "easygoing"}, {"curious", "light-hearted"}},
        {{"content", "comfortable"}, {"focused", "determined"}, {"alert", "attentive"}},
        {{"heavy", "serious"}, {"energetic", "lively"}, {"tense", "anxious"}}};
    return w[static_cast<int>(i)][static_cast<int>(p)];
}

const std::vector<std::string>& rhythm_moods(Rhythm r) {
    static const std::vector<std::string> w[4] = {
        {"stable", "assured"}, {"playful", "excited"}, {"wistful", "sad"}, {"hopeful", "eager"}};
    return w[static_cast<int>(r)];
}

const std::vector<std::string>& things(PitchClass p, Rhythm r) {
    static const std::vector<std::string> w[3][4] = {
        {{"an engine idling", "a running fridge"},
         {"a heartbeat", "footsteps"},
         {"distant thunder", "a train leaving"},
         {"an approaching truck", "a rising wave"}},
        {{"a phone vibrating", "an electric shaver"},
         {"a knock on the door", "a ticking clock"},
         {"a bell dying out", "a spinning top slowing"},
         {"a kettle heating up", "a crowd getting louder"}},
        {{"a dentist drill", "a buzzing bee"},
         {"an alarm clock", "a smoke detector"},
         {"a mosquito flying away", "a whistle trailing off"},
         {"a siren coming closer", "a jet taking off"}}};
    return w[static_cast<int>(p)][static_cast<int>(r)];
}

const std::vector<std::string>& distance_words(Intensity i) {
    static const std::vector<std::string> w[3] = {
        {"far away", "in the distance"}, {"nearby", "in the next room"}, {"right next to me", "up close"}};
    return w[static_cast<int>(i)];
}

struct Slots {
    std::vector<std::string> templates;
    std::vector<const std::vector<std::string>*> fillers;
};

Slots slots_for(const SignalFeatures& f, Category c) {
    switch (c) {
    case Category::sensory:
        return {{"a {0} {1} that {2}", "{0} {1} which {2}", "it is a {0} {1} and it {2}"},
                {&intensity_words(f.intensity), &pitch_nouns(f.pitch), &rhythm_phrases(f.rhythm)}};
    case Category::emotional:
        return {{"it feels {0} and {1}", "a {0}, {1} feeling", "this makes me feel {0} and {1}"},
                {&mood_words(f.intensity, f.pitch), &rhythm_moods(f.rhythm)}};
    case Category::associative:
        return {{"it reminds me of {0} {1}", "like {0} {1}", "it is similar to {0} {1}"},
                {&things(f.pitch, f.rhythm), &distance_words(f.intensity)}};
    }
    throw std::invalid_argument("bad category");
}

std::string fill(const std::string& tmpl, const std::vector<std::string>& values) {
    std::string out = tmpl;
    for (size_t i = 0; i < values.size(); ++i) {
        const std::string key = "{" + std::to_string(i) + "}";
        out.replace(out.find(key), key.size(), values[i]);
    }
    return out;
}

std::string signal_file(const std::string& id) { return id + ".wav"; }

Waveform clamp_length(const Waveform& w) {
    const auto max_len = static_cast<size_t>(kMaxDurationSec * w.sample_rate);
    return w.size() > max_len ? pad_or_truncate(w, max_len) : w;
}

SynthSpec random_primitive(Rng& rng, double duration) {
    SynthSpec s;
    s.kind = static_cast<SynthKind>(rng.below(4));
    s.frequency = log_uniform(rng, kBandMinHz, kBandMaxHz);
    s.end_frequency = log_uniform(rng, kBandMinHz, kBandMaxHz);
    s.amplitude = rng.uniform(0.2, 1.0);
    s.duration = duration;
    s.period = rng.uniform(0.08, 1.5);
    s.duty = rng.uniform(0.2, 0.8);
    s.noise_seed = rng.next_u64();
    if (rng.uniform() < 0.5) {
        const int points = 2 + static_cast<int>(rng.below(3));
        for (int k = 0; k < points; ++k) {
            s.envelope.push_back({duration * k / (points - 1), rng.uniform(0.1, 1.0)});
        }
    }
    return s;
}

} // namespace

std::string to_string(Split s) {
    switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
    }
    throw std::invalid_argument("bad split");
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "valid") return Split::valid;
    if (s == "test") return Split::test;
    throw std::invalid_argument("unknown split: " + s);
}

std::string to_string(Author a) { return a == Author::model ? "model" : "human-synthetic"; }

Author author_from_string(const std::string& s) {
    if (s == "model") return Author::model;
    if (s == "human-synthetic") return Author::human_synthetic;
    throw std::invalid_argument("unknown author tag: " + s);
}

std::string to_jsonl(std::span<const CaptionRecord> records) {
    std::string out;
    for (const auto& r : records) {
        json j{{"signal_id", r.signal_id}, {"wav", r.wav},           {"category", to_string(r.category)},
               {"caption", r.caption},     {"split", to_string(r.split)}, {"author", to_string(r.author)}};
        out += j.dump(-1, ' ', false, json::error_handler_t::replace) + "\n";
    }
    return out;
}

std::vector<CaptionRecord> caption_records_from_jsonl(const std::string& text) {
    std::vector<CaptionRecord> out;
    std::istringstream in(text);
    std::string line;
    size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            const auto j = json::parse(line);
            CaptionRecord r;
            r.signal_id = j.at("signal_id").get<std::string>();
            r.wav = j.value("wav", std::string());
            r.category = category_from_string(j.at("category").get<std::string>());
            r.caption = j.at("caption").get<std::string>();
            r.split = split_from_string(j.value("split", std::string("train")));
            r.author = author_from_string(j.value("author", std::string("human-synthetic")));
            out.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw std::runtime_error("line " + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << text;
    if (!out) {
        throw std::runtime_error("short write to " + path.string());
    }
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<CaptionRecord> read_caption_records(const std::filesystem::path& path) {
    return caption_records_from_jsonl(read_text(path));
}

int SignalFeatures::combination() const {
    return (static_cast<int>(pitch) * 3 + static_cast<int>(intensity)) * 4 + static_cast<int>(rhythm);
}

SignalFeatures extract_features(const Waveform& w, const FreqTokenizerConfig& cfg) {
    SignalFeatures f;
    f.peak = peak(w);
    const auto frames = analyze_frames(w, cfg);
    std::vector<double> hz;
    for (const auto& fr : frames) {
        if (fr.token) {
            hz.push_back(fr.peak_hz);
        }
    }
    if (!hz.empty()) {
        std::nth_element(hz.begin(), hz.begin() + static_cast<long>(hz.size() / 2), hz.end());
        f.dominant_hz = hz[hz.size() / 2];
    }
    f.silent_fraction = 1.0 - static_cast<double>(hz.size()) / static_cast<double>(frames.size());

    const size_t third = std::max<size_t>(1, frames.size() / 3);
    double head = 0.0;
    double tail = 0.0;
    for (size_t i = 0; i < third; ++i) {
        head += frames[i].peak_amplitude;
        tail += frames[frames.size() - 1 - i].peak_amplitude;
    }
    f.trend = head > 0.0 ? tail / head : 1.0;

    f.pitch = f.dominant_hz < 40.0 ? PitchClass::low : f.dominant_hz <= 150.0 ? PitchClass::mid : PitchClass::high;
    f.intensity = f.peak < 0.35 ? Intensity::gentle : f.peak < 0.7 ? Intensity::moderate : Intensity::strong;
    if (f.silent_fraction > 0.2) {
        f.rhythm = Rhythm::pulsing;
    } else if (f.trend < 0.6) {
        f.rhythm = Rhythm::fading;
    } else if (f.trend > 1.0 / 0.6) {
        f.rhythm = Rhythm::swelling;
    } else {
        f.rhythm = Rhythm::steady;
    }
    return f;
}

std::string canonical_caption(const SignalFeatures& f, Category c) {
    const auto s = slots_for(f, c);
    std::vector<std::string> values;
    for (const auto* words : s.fillers) {
        values.push_back(words->front());
    }
    return fill(s.templates.front(), values);
}

std::string sample_caption(const SignalFeatures& f, Category c, Rng& rng) {
    const auto s = slots_for(f, c);
    const auto& tmpl = pick(s.templates, rng);
    std::vector<std::string> values;
    for (const auto* words : s.fillers) {
        values.push_back(pick(*words, rng));
    }
    return fill(tmpl, values);
}

std::vector<std::string> all_captions(const SignalFeatures& f, Category c) {
    const auto s = slots_for(f, c);
    std::vector<std::string> out;
    for (const auto& tmpl : s.templates) {
        std::vector<size_t> idx(s.fillers.size(), 0);
        while (true) {
            std::vector<std::string> values;
            for (size_t k = 0; k < idx.size(); ++k) {
                values.push_back((*s.fillers[k])[idx[k]]);
            }
            out.push_back(fill(tmpl, values));
            size_t k = 0;
            while (k < idx.size() && ++idx[k] == s.fillers[k]->size()) {
                idx[k++] = 0;
            }
            if (k == idx.size()) {
                break;
            }
        }
    }
    return out;
}

std::vector<std::pair<Category, std::string>> grammar_text_corpus() {
    std::vector<std::pair<Category, std::string>> out;
    std::set<std::pair<Category, std::string>> seen;
    for (int p = 0; p < 3; ++p) {
        for (int i = 0; i < 3; ++i) {
            for (int r = 0; r < 4; ++r) {
                SignalFeatures f;
                f.pitch = static_cast<PitchClass>(p);
                f.intensity = static_cast<Intensity>(i);
                f.rhythm = static_cast<Rhythm>(r);
                for (auto c : kAllCategories) {
                    auto item = std::make_pair(c, canonical_caption(f, c));
                    if (seen.insert(item).second) {
                        out.push_back(item);
                    }
                }
            }
        }
    }
    return out;
}

SynthSpec spec_for_class(PitchClass p, Intensity i, Rhythm r, double duration, Rng& rng) {
    static const double f_lo[3] = {14.0, 50.0, 180.0};
    static const double f_hi[3] = {32.0, 130.0, 450.0};
    static const double a_lo[3] = {0.18, 0.45, 0.8};
    static const double a_hi[3] = {0.3, 0.6, 0.95};
    SynthSpec s;
    s.kind = SynthKind::sine;
    s.frequency = log_uniform(rng, f_lo[static_cast<int>(p)], f_hi[static_cast<int>(p)]);
    s.amplitude = rng.uniform(a_lo[static_cast<int>(i)], a_hi[static_cast<int>(i)]);
    s.duration = duration;
    switch (r) {
    case Rhythm::steady:
        break;
    case Rhythm::pulsing:
        s.kind = SynthKind::pulse_train;
        s.period = rng.uniform(1.0, 1.4);
        s.duty = 0.35;
        break;
    case Rhythm::fading:
        s.envelope = {{0.0, 1.0}, {duration, 0.15}};
        break;
    case Rhythm::swelling:
        s.envelope = {{0.0, 0.15}, {duration, 1.0}};
        break;
    }
    return s;
}

CaptionCorpus generate_caption_corpus(const CaptionCorpusOptions& opts, uint64_t seed) {
    if (opts.num_signals < 1 || opts.min_captions < 1 || opts.max_captions < opts.min_captions) {
        throw std::invalid_argument("invalid caption corpus options");
    }
    Rng rng(seed);
    std::vector<int> classes(36);
    for (int k = 0; k < 36; ++k) {
        classes[static_cast<size_t>(k)] = k;
    }
    rng.shuffle(classes);

    CaptionCorpus out;
    for (int n = 0; n < opts.num_signals; ++n) {
        const int k = classes[static_cast<size_t>(n % 36)];
        const auto p = static_cast<PitchClass>(k / 12);
        const auto i = static_cast<Intensity>((k / 4) % 3);
        const auto r = static_cast<Rhythm>(k % 4);
        const double duration = std::round(rng.uniform(opts.min_duration, opts.max_duration) * 10.0) / 10.0;
        char id[32];
        std::snprintf(id, sizeof(id), "hc_%04d", n);
        SignalEntry e{id, "synthetic", synthesize(spec_for_class(p, i, r, duration, rng))};
        const auto f = extract_features(e.wave);
        const int count = opts.canonical ? 1
                                         : opts.min_captions +
                                               static_cast<int>(rng.below(
                                                   static_cast<uint64_t>(opts.max_captions - opts.min_captions + 1)));
        for (auto c : kAllCategories) {
            std::vector<std::string> caps;
            if (opts.canonical) {
                caps.push_back(canonical_caption(f, c));
            } else {
                auto pool = all_captions(f, c);
                rng.shuffle(pool);
                caps.assign(pool.begin(), pool.begin() + std::min<long>(count, static_cast<long>(pool.size())));
            }
            for (auto& cap : caps) {
                out.records.push_back({e.signal_id, signal_file(e.signal_id), c, std::move(cap), Split::train,
                                       Author::human_synthetic});
            }
        }
        out.signals.push_back(std::move(e));
    }
    return out;
}

std::vector<SignalEntry> generate_vibrate(uint64_t seed) {
    Rng rng(seed);
    std::vector<SignalEntry> out;
    auto add = [&](const std::string& source, Waveform w) {
        char id[32];
        std::snprintf(id, sizeof(id), "vr_%03zu", out.size());
        out.push_back({id, source, clamp_length(w)});
    };

    for (int n = 0; n < kVibrateParametric; ++n) {
        auto s = random_primitive(rng, std::round(rng.uniform(1.0, 10.0) * 10.0) / 10.0);
        if (s.kind == SynthKind::enveloped_noise) {
            s.kind = SynthKind::sine;
        }
        add("parametric", synthesize(s));
    }
    for (int n = 0; n < kVibrateFiltered; ++n) {
        SynthSpec s;
        s.kind = SynthKind::enveloped_noise;
        s.amplitude = 1.0;
        s.duration = std::round(rng.uniform(1.0, 10.0) * 10.0) / 10.0;
        s.noise_seed = rng.next_u64();
        const int points = 3 + static_cast<int>(rng.below(3));
        for (int k = 0; k < points; ++k) {
            s.envelope.push_back({s.duration * k / (points - 1), rng.uniform(0.1, 1.0)});
        }
        const auto filtered = low_pass(synthesize(s), log_uniform(rng, 15.0, 400.0));
        add("filtered", scale(normalize(filtered), rng.uniform(0.3, 1.0)));
    }
    for (int n = 0; n < kVibrateGenerated; ++n) {
        const int segments = 2 + static_cast<int>(rng.below(3));
        Waveform w{kDefaultSampleRate, {}};
        for (int k = 0; k < segments; ++k) {
            const auto part = synthesize(random_primitive(rng, std::round(rng.uniform(0.3, 2.5) * 10.0) / 10.0));
            w.samples.insert(w.samples.end(), part.samples.begin(), part.samples.end());
        }
        if (rng.uniform() < 0.3) {
            w = mix(w, synthesize(random_primitive(rng, w.duration() > 10.0 ? 10.0 : w.duration())));
        }
        add("generated", w);
    }
    const size_t pool = out.size();
    for (int n = 0; n < kVibrateTransformed; ++n) {
        const auto& base = out[static_cast<size_t>(rng.below(pool))].wave;
        Waveform w;
        switch (rng.below(3)) {
        case 0:
            w = reverse(base);
            break;
        case 1:
            w = repeat(base, 2 + static_cast<size_t>(rng.below(2)));
            break;
        default:
            w = mix(scale(base, 0.6), scale(out[static_cast<size_t>(rng.below(pool))].wave, 0.6));
        }
        add("transformed", w);
    }
    return out;
}

void write_signal_set(std::span<const SignalEntry> signals, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::string manifest;
    for (const auto& s : signals) {
        write_wav(s.wave, dir / signal_file(s.signal_id));
        json j{{"signal_id", s.signal_id},
               {"source", s.source},
               {"wav", signal_file(s.signal_id)},
               {"sample_rate", s.wave.sample_rate},
               {"num_samples", s.wave.size()}};
        manifest += j.dump(-1, ' ', false, json::error_handler_t::replace) + "\n";
    }
    write_text(dir / "manifest.jsonl", manifest);
}

std::vector<SignalEntry> read_signal_set(const std::filesystem::path& dir) {
    std::vector<SignalEntry> out;
    std::istringstream in(read_text(dir / "manifest.jsonl"));
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        const auto j = json::parse(line);
        out.push_back({j.at("signal_id").get<std::string>(), j.value("source", std::string()),
                       read_wav(dir / j.at("wav").get<std::string>())});
    }
    return out;
}

std::map<std::string, size_t> count_sources(std::span<const SignalEntry> signals) {
    std::map<std::string, size_t> out;
    for (const auto& s : signals) {
        ++out[s.source];
    }
    return out;
}

std::array<size_t, 3> apportion(size_t n, const std::array<double, 3>& ratios) {
    double sum = 0.0;
    for (double r : ratios) {
        if (!(r >= 0.0)) {
            throw std::invalid_argument("split ratios must be non-negative");
        }
        sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw std::invalid_argument("split ratios must sum to 1");
    }
    std::array<size_t, 3> out{};
    std::array<double, 3> rem{};
    size_t assigned = 0;
    for (size_t i = 0; i < 3; ++i) {
        const double q = static_cast<double>(n) * ratios[i];
        out[i] = static_cast<size_t>(std::floor(q + 1e-9));
        rem[i] = q - static_cast<double>(out[i]);
        assigned += out[i];
    }
    std::array<size_t, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return rem[a] > rem[b]; });
    for (size_t k = 0; assigned < n; ++k, ++assigned) {
        ++out[order[k % 3]];
    }
    return out;
}

std::vector<CaptionRecord> split_dataset(std::span<const CaptionRecord> records, const std::array<double, 3>& ratios,
                                         uint64_t seed) {
    if (records.empty()) {
        throw std::invalid_argument("split_dataset: no records");
    }
    std::map<std::string, std::set<Category>> cats;
    for (const auto& r : records) {
        cats[r.signal_id].insert(r.category);
    }
    std::vector<std::string> ids;
    for (const auto& [id, cs] : cats) {
        if (cs.size() != 3) {
            throw std::invalid_argument("signal " + id + " lacks captions in some category");
        }
        ids.push_back(id);
    }
    const auto sizes = apportion(ids.size(), ratios);
    Rng rng(seed);
    rng.shuffle(ids);
    std::map<std::string, Split> assignment;
    size_t k = 0;
    for (size_t s = 0; s < 3; ++s) {
        for (size_t i = 0; i < sizes[s]; ++i) {
            assignment[ids[k++]] = static_cast<Split>(s);
        }
    }
    std::vector<CaptionRecord> out(records.begin(), records.end());
    for (auto& r : out) {
        r.split = assignment.at(r.signal_id);
    }
    return out;
}

} // namespace haptix
