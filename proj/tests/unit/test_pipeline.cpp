#include "doctest.h"

#include "haptix/pipeline.hpp"

#include <set>

using namespace haptix;

TEST_CASE("backbone corpus covers the grammar, hints are optional") {
    const TokenizerSet ts;
    const auto vocab = make_vocabulary(TokenizerKind::frequency, ts);
    const auto plain = backbone_corpus(vocab);
    const auto hinted = backbone_corpus(vocab, {}, true);
    CHECK(plain.size() == 108);
    CHECK(hinted.size() == 216);

    for (const auto& s : hinted) {
        REQUIRE(s.caption);
        REQUIRE(s.has_caption_span());
        auto span = std::vector<int>(s.ids.begin() + static_cast<long>(s.caption_begin),
                                     s.ids.begin() + static_cast<long>(s.caption_end));
        CHECK(span.back() == Vocabulary::kEos);
        span.pop_back();
        CHECK(vocab.detokenize(span) == *s.caption);
    }
    const auto& h = hinted[108];
    CHECK(vocab.detokenize(h.prompt_ids()) == "haptic signal: low gentle steady, its sensory description is: ");
}

TEST_CASE("sft data groups references per signal and category") {
    CaptionCorpusOptions co;
    co.num_signals = 4;
    co.max_duration = 3.0;
    const auto corpus = generate_caption_corpus(co, 5);
    const TokenizerSet ts;
    const auto vocab = make_vocabulary(TokenizerKind::frequency, ts);
    const auto data = build_sft_data(corpus.records, wave_map(corpus.signals), TokenizerKind::frequency, ts, vocab);
    CHECK(data.samples.size() == corpus.records.size());
    CHECK(data.groups.size() == 12);
    size_t refs = 0;
    std::set<std::pair<std::string, Category>> keys;
    for (const auto& g : data.groups) {
        refs += g.references.size();
        keys.insert({g.signal_id, g.category});
        CHECK_FALSE(g.haptic.ids.empty());
    }
    CHECK(refs == corpus.records.size());
    CHECK(keys.size() == data.groups.size());

    std::vector<CaptionRecord> bad = {corpus.records.front()};
    bad.front().signal_id = "missing";
    CHECK_THROWS(build_sft_data(bad, wave_map(corpus.signals), TokenizerKind::frequency, ts, vocab));
}

TEST_CASE("model config trains only the haptic embedding block") {
    const TokenizerSet ts;
    const auto vocab = make_vocabulary(TokenizerKind::frequency, ts);
    const auto mc = model_config_for(vocab, TokenizerKind::frequency);
    CHECK(mc.vocab_size == 259 + 278);
    CHECK(mc.trainable_rows_begin == 259);
    CHECK(mc.trainable_rows_end == 259 + 278);
}
