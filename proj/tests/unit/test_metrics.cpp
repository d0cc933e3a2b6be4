#include "doctest.h"

#include "haptix/metrics.hpp"
#include "haptix/rng.hpp"
#include "metric_fixtures.hpp"

#include <cmath>

using namespace haptix;

namespace {

std::vector<std::string> refs(std::initializer_list<const char*> r) { return {r.begin(), r.end()}; }

} // namespace

TEST_CASE("tokenization") {
    CHECK(metric_tokens("  Hello, World!  ") == std::vector<std::string>{"hello", "world"});
    CHECK(metric_tokens("").empty());
    CHECK(metric_tokens("... !!").empty());
    CHECK(metric_tokens("it's a\ttest\nline") == std::vector<std::string>{"its", "a", "test", "line"});
}

TEST_CASE("hand-computed fixtures") {
    for (const auto& f : testing::metric_fixtures()) {
        INFO(f.name);
        CHECK(std::abs(bleu(f.candidate, f.references, 1) - f.bleu1) < 1e-6);
        CHECK(std::abs(bleu(f.candidate, f.references, 4) - f.bleu4) < 1e-6);
        CHECK(std::abs(rouge_l(f.candidate, f.references) - f.rouge_l) < 1e-6);
        CHECK(std::abs(meteor(f.candidate, f.references) - f.meteor) < 1e-6);
    }
}

TEST_CASE("worked examples") {
    const auto the_cat = refs({"the cat"});
    CHECK(bleu("the the the the", the_cat, 1) == doctest::Approx(0.25));
    CHECK(rouge_l("a b c d", refs({"a c d"})) == doctest::Approx(6.0 / 7.0));
    CHECK(meteor("steady pulse", refs({"pulse steady"})) == doctest::Approx(0.5));
    CHECK(meteor("w x y z", refs({"w x y z"})) == doctest::Approx(1.0 - 1.0 / 128.0));
    CHECK(bleu("one two", refs({"three four"}), 4) == 0.0);
    CHECK(rouge_l("one two", refs({"three four"})) == 0.0);
    CHECK(meteor("one two", refs({"three four"})) == 0.0);
}

TEST_CASE("identical strings are fixed points") {
    Rng rng(3);
    const std::vector<std::string> words{"soft", "hum", "sharp", "buzz", "slow", "wave", "tap", "calm"};
    for (int t = 0; t < 50; ++t) {
        std::string s;
        const size_t m = 1 + rng.below(9);
        for (size_t i = 0; i < m; ++i) {
            s += (i ? " " : "") + words[rng.below(words.size())];
        }
        const std::vector<std::string> r{s};
        CHECK(bleu(s, r, 1) == doctest::Approx(1.0));
        CHECK(bleu(s, r, 4) == doctest::Approx(1.0));
        CHECK(rouge_l(s, r) == doctest::Approx(1.0));
        CHECK(meteor(s, r) == doctest::Approx(1.0 - 0.5 / std::pow(static_cast<double>(m), 3.0)));
    }
}

TEST_CASE("properties: range, reference monotonicity, whitespace and case invariance") {
    Rng rng(5);
    const std::vector<std::string> words{"soft", "hums", "hum", "sharp", "buzzing", "buzz", "slow", "waves", "a", "the"};
    auto sentence = [&](size_t max_len) {
        std::string s;
        const size_t m = rng.below(max_len + 1);
        for (size_t i = 0; i < m; ++i) {
            s += (i ? " " : "") + words[rng.below(words.size())];
        }
        return s;
    };
    for (int t = 0; t < 200; ++t) {
        const std::string cand = sentence(8);
        std::vector<std::string> r{sentence(8) + " x"};
        std::vector<double> before;
        for (auto m : kAllMetrics) {
            const double v = score(m, cand, r);
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
            before.push_back(v);
        }
        r.push_back(sentence(8) + " y");
        CHECK(rouge_l(cand, r) >= before[2]);
        CHECK(meteor(cand, r) >= before[3]);

        std::string shouted = "  ";
        for (char c : cand) {
            shouted += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        }
        shouted += " \t";
        for (auto m : kAllMetrics) {
            CHECK(score(m, shouted, r) == score(m, cand, r));
        }
    }
}

TEST_CASE("corpus statistics") {
    std::vector<EvalSample> same{{"a", Category::sensory, "soft hum", {"soft hum", "x"}},
                                 {"b", Category::emotional, "calm", {"calm"}}};
    const auto metrics = std::vector<Metric>{Metric::bleu1, Metric::bleu4, Metric::rouge_l};
    const auto rep = evaluate_corpus(same, metrics);
    for (auto m : metrics) {
        CHECK(rep.overall.at(m).mean == doctest::Approx(100.0));
        CHECK(rep.overall.at(m).std == doctest::Approx(0.0));
    }

    const std::vector<EvalSample> one{{"a", Category::sensory, "soft", {"soft hum"}}};
    CHECK(evaluate_corpus(one, metrics).overall.at(Metric::rouge_l).std == 0.0);

    const std::vector<EvalSample> two{{"a", Category::sensory, "x", {"y"}}, {"b", Category::associative, "y", {"y"}}};
    const std::vector<Metric> r{Metric::rouge_l};
    const auto rep2 = evaluate_corpus(two, r);
    CHECK(rep2.overall.at(Metric::rouge_l).mean == doctest::Approx(50.0));
    CHECK(rep2.overall.at(Metric::rouge_l).std == doctest::Approx(50.0));
    CHECK(rep2.by_category.at(Category::sensory).at(Metric::rouge_l).mean == 0.0);
    CHECK(rep2.by_category.at(Category::associative).at(Metric::rouge_l).count == 1);
    CHECK(rep2.table("model", true).find("50.00 ± 50.00") != std::string::npos);
    CHECK(rep2.to_kv().find("overall.rougeL.mean = 50") != std::string::npos);

    CHECK_THROWS(evaluate_corpus(std::vector<EvalSample>{}, r));
    const std::vector<EvalSample> noref{{"a", Category::sensory, "x", {"", "  "}}};
    CHECK_THROWS(evaluate_corpus(noref, r));
}

TEST_CASE("metric names and JSONL") {
    for (auto m : kAllMetrics) {
        CHECK(metric_from_string(to_string(m)) == m);
    }
    CHECK(parse_metric_list("bleu1,bleu4,rougeL,meteor").size() == 4);
    CHECK_THROWS(parse_metric_list("cider"));
    const std::vector<EvalSample> s{{"a", Category::emotional, "calm \"hum\"", {"r1", "r2"}}};
    const auto back = eval_samples_from_jsonl(to_jsonl(s));
    REQUIRE(back.size() == 1);
    CHECK(back[0].candidate == s[0].candidate);
    CHECK(back[0].references == s[0].references);
    CHECK(back[0].category == Category::emotional);
}
