#include "doctest.h"

#include "haptix/corpus.hpp"
#include "haptix/rvq.hpp"

#include <filesystem>
#include <map>
#include <set>

using namespace haptix;

namespace {

std::vector<CaptionRecord> records_for(int signals) {
    std::vector<CaptionRecord> out;
    for (int s = 0; s < signals; ++s) {
        for (auto c : kAllCategories) {
            for (int k = 0; k < 2; ++k) {
                out.push_back({"s" + std::to_string(s), "", c, "caption " + std::to_string(k), Split::train,
                               Author::human_synthetic});
            }
        }
    }
    return out;
}

const std::vector<SignalEntry>& vibrate() {
    static const auto v = generate_vibrate(7);
    return v;
}

} // namespace

TEST_CASE("vibrate source counts") {
    const auto& v = vibrate();
    REQUIRE(v.size() == 704);
    const auto counts = count_sources(v);
    CHECK(counts.at("parametric") == 174);
    CHECK(counts.at("filtered") == 180);
    CHECK(counts.at("generated") == 176);
    CHECK(counts.at("transformed") == 174);
    std::set<std::string> ids;
    for (const auto& s : v) {
        ids.insert(s.signal_id);
        CHECK(s.wave.duration() <= kMaxDurationSec);
        CHECK(!s.wave.empty());
        CHECK(peak(s.wave) <= 1.0);
    }
    CHECK(ids.size() == 704);
}

TEST_CASE("vibrate generation is deterministic") {
    const auto again = generate_vibrate(7);
    const auto& v = vibrate();
    for (size_t i = 0; i < v.size(); i += 37) {
        CHECK(encode_wav(again[i].wave) == encode_wav(v[i].wave));
    }
    const auto other = generate_vibrate(8);
    CHECK(other[0].wave != v[0].wave);
}

TEST_CASE("every vibrate signal tokenizes under both tokenizers") {
    const auto& v = vibrate();
    RvqConfig cfg;
    cfg.codebook_size = 32;
    cfg.max_training_frames = 2048;
    cfg.kmeans_iters = 5;
    std::vector<Waveform> train;
    for (size_t i = 0; i < v.size(); i += 20) {
        train.push_back(v[i].wave);
    }
    const auto codec = rvq_fit(train, cfg, 1);
    std::set<size_t> lengths;
    for (const auto& s : v) {
        const auto f = tokenize_freq(s.wave);
        CHECK(f.ids.size() >= 1);
        CHECK(f.ids.size() <= 52);
        lengths.insert(f.ids.size());
        CHECK(rvq_encode(s.wave, codec).ids.size() == 1379);
    }
    CHECK(lengths.size() > 1);
}

TEST_CASE("signal set round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "haptix_test_signal_set";
    std::filesystem::remove_all(dir);
    std::vector<SignalEntry> some(vibrate().begin(), vibrate().begin() + 5);
    write_signal_set(some, dir);
    const auto back = read_signal_set(dir);
    REQUIRE(back.size() == 5);
    for (size_t i = 0; i < 5; ++i) {
        CHECK(back[i].signal_id == some[i].signal_id);
        CHECK(back[i].source == some[i].source);
        CHECK(back[i].wave.size() == some[i].wave.size());
        CHECK(encode_wav(back[i].wave) == encode_wav(some[i].wave));
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("apportion") {
    CHECK(apportion(10, {0.8, 0.1, 0.1}) == std::array<size_t, 3>{8, 1, 1});
    CHECK(apportion(7, {0.8, 0.1, 0.1}) == std::array<size_t, 3>{5, 1, 1});
    CHECK(apportion(3, {1.0 / 3, 1.0 / 3, 1.0 / 3}) == std::array<size_t, 3>{1, 1, 1});
    CHECK(apportion(2, {1.0 / 3, 1.0 / 3, 1.0 / 3}) == std::array<size_t, 3>{1, 1, 0});
    CHECK(apportion(0, {0.8, 0.1, 0.1}) == std::array<size_t, 3>{0, 0, 0});
    for (size_t n = 0; n < 200; ++n) {
        const auto a = apportion(n, {0.7, 0.2, 0.1});
        CHECK(a[0] + a[1] + a[2] == n);
    }
    CHECK_THROWS_AS(apportion(10, {0.5, 0.1, 0.1}), std::invalid_argument);
    CHECK_THROWS_AS(apportion(10, {1.2, -0.1, -0.1}), std::invalid_argument);
}

TEST_CASE("split is a signal-level partition") {
    const auto recs = records_for(10);
    const auto out = split_dataset(recs, {0.8, 0.1, 0.1}, 3);
    REQUIRE(out.size() == recs.size());
    std::map<std::string, Split> by_signal;
    std::map<Split, std::set<std::string>> members;
    std::map<Split, std::map<Category, int>> per_cat;
    for (const auto& r : out) {
        auto [it, inserted] = by_signal.emplace(r.signal_id, r.split);
        CHECK(it->second == r.split);
        members[r.split].insert(r.signal_id);
        ++per_cat[r.split][r.category];
    }
    CHECK(members[Split::train].size() == 8);
    CHECK(members[Split::valid].size() == 1);
    CHECK(members[Split::test].size() == 1);
    for (const auto& [split, cats] : per_cat) {
        CHECK(cats.at(Category::sensory) == cats.at(Category::emotional));
        CHECK(cats.at(Category::sensory) == cats.at(Category::associative));
    }
    CHECK(split_dataset(recs, {0.8, 0.1, 0.1}, 3) == out);
    bool differs = false;
    for (uint64_t seed = 4; seed < 10 && !differs; ++seed) {
        differs = split_dataset(recs, {0.8, 0.1, 0.1}, seed) != out;
    }
    CHECK(differs);
}

TEST_CASE("split rejects a signal missing a category") {
    auto recs = records_for(3);
    recs.erase(std::remove_if(recs.begin(), recs.end(),
                              [](const CaptionRecord& r) {
                                  return r.signal_id == "s1" && r.category == Category::emotional;
                              }),
               recs.end());
    CHECK_THROWS_AS(split_dataset(recs, {0.8, 0.1, 0.1}, 1), std::invalid_argument);
}

TEST_CASE("caption record jsonl round trip") {
    auto recs = records_for(2);
    recs[1].author = Author::model;
    recs[2].split = Split::test;
    recs[3].caption = "a \"quoted\" caption";
    CHECK(caption_records_from_jsonl(to_jsonl(recs)) == recs);
    CHECK_THROWS(caption_records_from_jsonl("{\"signal_id\": \"x\"}\n"));
    CHECK_THROWS_AS(split_from_string("dev"), std::invalid_argument);
}

TEST_CASE("class specs land in their feature class") {
    Rng rng(11);
    for (int p = 0; p < 3; ++p) {
        for (int i = 0; i < 3; ++i) {
            for (int r = 0; r < 4; ++r) {
                for (int rep = 0; rep < 3; ++rep) {
                    const double d = rng.uniform(2.0, 10.0);
                    const auto w = synthesize(spec_for_class(static_cast<PitchClass>(p), static_cast<Intensity>(i),
                                                             static_cast<Rhythm>(r), d, rng));
                    const auto f = extract_features(w);
                    CAPTURE(p);
                    CAPTURE(i);
                    CAPTURE(r);
                    CAPTURE(f.dominant_hz);
                    CAPTURE(f.peak);
                    CAPTURE(f.silent_fraction);
                    CAPTURE(f.trend);
                    CHECK(static_cast<int>(f.pitch) == p);
                    CHECK(static_cast<int>(f.intensity) == i);
                    CHECK(static_cast<int>(f.rhythm) == r);
                }
            }
        }
    }
}

TEST_CASE("caption grammar") {
    SignalFeatures f;
    f.pitch = PitchClass::low;
    f.intensity = Intensity::strong;
    f.rhythm = Rhythm::fading;
    CHECK(canonical_caption(f, Category::sensory) == "a strong low rumble that fades away");
    CHECK(canonical_caption(f, Category::emotional) == "it feels heavy and wistful");
    CHECK(canonical_caption(f, Category::associative) == "it reminds me of distant thunder right next to me");
    for (auto c : kAllCategories) {
        const auto all = all_captions(f, c);
        const std::set<std::string> unique(all.begin(), all.end());
        CHECK(unique.size() == all.size());
        CHECK(all.size() >= 10);
        CHECK(unique.count(canonical_caption(f, c)) == 1);
        Rng rng(2);
        for (int k = 0; k < 20; ++k) {
            CHECK(unique.count(sample_caption(f, c, rng)) == 1);
        }
    }
    const auto corpus = grammar_text_corpus();
    CHECK(corpus.size() == 108);
}

TEST_CASE("caption corpus") {
    CaptionCorpusOptions opts;
    opts.num_signals = 12;
    opts.max_duration = 4.0;
    const auto c = generate_caption_corpus(opts, 5);
    REQUIRE(c.signals.size() == 12);
    std::map<std::string, std::map<Category, int>> counts;
    std::set<int> combos;
    for (const auto& s : c.signals) {
        combos.insert(extract_features(s.wave).combination());
    }
    CHECK(combos.size() == 12);
    for (const auto& r : c.records) {
        ++counts[r.signal_id][r.category];
        CHECK(!r.caption.empty());
    }
    for (const auto& [id, cats] : counts) {
        REQUIRE(cats.size() == 3);
        const int n = cats.begin()->second;
        CHECK(n >= 8);
        CHECK(n <= 10);
        for (const auto& [cat, k] : cats) {
            CHECK(k == n);
        }
    }
    const auto again = generate_caption_corpus(opts, 5);
    CHECK(again.records == c.records);

    opts.canonical = true;
    const auto canon = generate_caption_corpus(opts, 5);
    CHECK(canon.records.size() == 36);
    for (const auto& r : canon.records) {
        const auto& s = *std::find_if(canon.signals.begin(), canon.signals.end(),
                                      [&](const SignalEntry& e) { return e.signal_id == r.signal_id; });
        CHECK(r.caption == canonical_caption(extract_features(s.wave), r.category));
    }
}
