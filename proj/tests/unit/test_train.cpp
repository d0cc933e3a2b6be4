#include "doctest.h"

#include "gradcheck.hpp"
#include "haptix/freq_tokenizer.hpp"
#include "haptix/train.hpp"

#include <cmath>
#include <filesystem>

using namespace haptix;

namespace {

Vocabulary freq_vocab() {
    Vocabulary v;
    v.register_haptic_tokens(freq_tokenizer_spec(FreqTokenizerConfig{}));
    return v;
}

ModelConfig config_for(const Vocabulary& v, int d = 32) {
    ModelConfig c;
    c.vocab_size = v.size();
    c.d_model = d;
    c.n_layers = 2;
    c.n_heads = 4;
    c.max_seq_len = 160;
    c.lora_rank = 4;
    c.mlp_hidden = 2 * d;
    c.trainable_rows_begin = v.haptic_offset(TokenizerKind::frequency);
    c.trainable_rows_end = c.trainable_rows_begin + v.haptic_count(TokenizerKind::frequency);
    return c;
}

std::vector<PromptSample> tiny_dataset(const Vocabulary& v) {
    const std::vector<std::string> captions{"soft hum", "sharp buzz", "slow pulse", "warm wave",
                                            "tense tick", "calm drift", "quick tap", "deep roll"};
    std::vector<PromptSample> out;
    for (size_t i = 0; i < captions.size(); ++i) {
        const int base = static_cast<int>(i) * 30;
        HapticTokenSequence s{TokenizerKind::frequency, {base, base + 1, base + 13, base + 2}};
        out.push_back(assemble(s, kAllCategories[i % 3], captions[i], v));
    }
    return out;
}

} // namespace

TEST_CASE("uniform logits give ln V per token") {
    const auto v = freq_vocab();
    auto s = init_model(config_for(v), 1);
    s.params.head.setZero();
    const auto data = tiny_dataset(v);
    CHECK(sft_loss(s, data) == doctest::Approx(std::log(static_cast<double>(v.size()))).epsilon(1e-12));
    const auto lg = sft_loss_and_grads(s, data);
    CHECK(lg.loss == doctest::Approx(std::log(static_cast<double>(v.size()))).epsilon(1e-12));
    size_t tokens = 0;
    for (const auto& p : data) {
        tokens += p.caption_end - p.caption_begin;
    }
    CHECK(lg.tokens == tokens);
}

TEST_CASE("a model certain of every target has zero loss") {
    const auto v = freq_vocab();
    auto s = init_model(config_for(v), 2);
    const auto p = assemble(HapticTokenSequence{TokenizerKind::frequency, {4, 5}}, Category::sensory, std::string(), v);
    REQUIRE(p.caption_end - p.caption_begin == 1);
    // Read the final hidden state through an identity head, then point the EOS
    // row along it.
    const int d = s.config.d_model;
    auto probe = s;
    probe.params.head.setZero();
    probe.params.head.topRows(d).setIdentity();
    const RowMatrix logits = forward(probe, p.ids);
    const Eigen::RowVectorXd h = logits.row(static_cast<Eigen::Index>(p.caption_begin - 1)).head(d);
    s.params.head.setZero();
    s.params.head.row(Vocabulary::kEos) = 2000.0 * h / h.squaredNorm();
    const std::vector<PromptSample> batch{p};
    CHECK(sft_loss(s, batch) == 0.0);
}

TEST_CASE("SFT loss gradients match finite differences") {
    const auto v = freq_vocab();
    auto s = init_model(config_for(v), 3);
    testing::randomize_adapters(s, 4);
    const auto data = tiny_dataset(v);
    const std::vector<PromptSample> batch(data.begin(), data.begin() + 3);
    const auto lg = sft_loss_and_grads(s, batch);
    CHECK(lg.loss == doctest::Approx(sft_loss(s, batch)).epsilon(1e-12));
    std::vector<int> rows;
    for (const auto& p : batch) {
        for (int id : p.ids) {
            if (v.classify(id) == TokenClass::haptic) {
                rows.push_back(id);
            }
        }
    }
    const auto r = testing::finite_difference_check(
        s, lg.grads, TrainScope::adapters, [&](const ModelState& st) { return sft_loss(st, batch); }, 20, 5, rows);
    CHECK(r.max_rel_error.size() == 3);
    CHECK(r.worst() < 1e-4);
}

TEST_CASE("SFT rejects samples without captions") {
    const auto v = freq_vocab();
    const auto s = init_model(config_for(v), 3);
    const std::vector<PromptSample> batch{
        assemble(HapticTokenSequence{TokenizerKind::frequency, {1}}, Category::sensory, std::nullopt, v)};
    CHECK_THROWS_AS(sft_loss_and_grads(s, batch), std::invalid_argument);
    CHECK_THROWS_AS(sft_loss_and_grads(s, std::vector<PromptSample>{}), std::invalid_argument);
}

TEST_CASE("learning rate zero leaves the state unchanged") {
    const auto v = freq_vocab();
    auto s = init_model(config_for(v), 6);
    const auto before = s;
    TrainConfig tc;
    tc.learning_rate = 0.0;
    tc.epochs = 1;
    for (auto opt : {OptimizerKind::adam, OptimizerKind::sgd_momentum}) {
        tc.optimizer = opt;
        train_sft(s, tiny_dataset(v), tc);
        CHECK(s.params.bit_equal(before.params));
    }
}

TEST_CASE("overfitting eight samples, frozen base, exact greedy recall") {
    const auto v = freq_vocab();
    auto s = init_model(config_for(v), 7);
    const auto data = tiny_dataset(v);
    std::vector<PromptSample> text_only;
    for (const auto& p : data) {
        text_only.push_back(assemble_signal_agnostic(p.category, p.caption, v));
    }
    TrainConfig pre;
    pre.scope = TrainScope::base;
    pre.epochs = 60;
    pre.learning_rate = 3e-3;
    train_sft(s, text_only, pre);
    const auto before = s;
    TrainConfig tc;
    tc.epochs = 250;  // 2 steps per epoch
    tc.batch_size = 4;
    tc.learning_rate = 1e-2;
    tc.seed = 1;
    const auto report = train_sft(s, data, tc);
    CHECK(report.step_loss.size() == 500);
    CHECK(report.epoch_loss.size() == 250);
    CHECK(sft_loss(s, data) < 0.05);

    for (size_t l = 0; l < s.params.layers.size(); ++l) {
        CHECK(s.params.layers[l].wq == before.params.layers[l].wq);
        CHECK(s.params.layers[l].w1 == before.params.layers[l].w1);
    }
    CHECK(s.params.head == before.params.head);
    CHECK(s.params.tok_emb.topRows(259) == before.params.tok_emb.topRows(259));

    for (const auto& p : data) {
        PromptSample q = assemble(p.haptic, p.category, std::nullopt, v);
        CHECK(generate(s, q, v) == *p.caption);
        CHECK(generate(s, q, v) == generate(s, q, v));
    }
    DecodeConfig none;
    none.max_new_tokens = 0;
    CHECK(generate(s, assemble(data[0].haptic, data[0].category, std::nullopt, v), v, none).empty());
}

TEST_CASE("training is deterministic") {
    const auto v = freq_vocab();
    const auto data = tiny_dataset(v);
    TrainConfig tc;
    tc.epochs = 3;
    tc.learning_rate = 5e-3;
    tc.seed = 9;
    auto a = init_model(config_for(v), 8);
    auto b = a;
    const auto ra = train_sft(a, data, tc);
    const auto rb = train_sft(b, data, tc);
    CHECK(ra.step_loss == rb.step_loss);
    CHECK(a.params.bit_equal(b.params));
}

TEST_CASE("momentum SGD reduces the loss") {
    const auto v = freq_vocab();
    const auto data = tiny_dataset(v);
    auto s = init_model(config_for(v), 10);
    const double start = sft_loss(s, data);
    TrainConfig tc;
    tc.epochs = 20;
    tc.optimizer = OptimizerKind::sgd_momentum;
    tc.learning_rate = 0.05;
    train_sft(s, data, tc);
    CHECK(sft_loss(s, data) < start);
}

TEST_CASE("divergence guard") {
    const auto v = freq_vocab();
    auto s = init_model(config_for(v), 11);
    s.params.layers[0].wq(0, 0) = std::nan("");
    TrainConfig tc;
    CHECK_THROWS_AS(train_sft(s, tiny_dataset(v), tc), DivergenceError);
}

TEST_CASE("sampled decoding is seeded") {
    const auto v = freq_vocab();
    const auto s = init_model(config_for(v), 12);
    const auto q = assemble(HapticTokenSequence{TokenizerKind::frequency, {1, 2}}, Category::sensory, std::nullopt, v);
    DecodeConfig dc;
    dc.greedy = false;
    dc.temperature = 1.5;
    dc.max_new_tokens = 20;
    dc.seed = 3;
    CHECK(generate_ids(s, q.ids, dc) == generate_ids(s, q.ids, dc));
    CHECK(generate_ids(s, q.ids, dc).size() <= 20);
    dc.temperature = 0.0;
    CHECK_THROWS(generate_ids(s, q.ids, dc));
    const auto p = assemble(HapticTokenSequence{TokenizerKind::frequency, {1, 2}}, Category::sensory, std::string("x"), v);
    CHECK_THROWS(generate(s, p, v));
}

TEST_CASE("checkpoint round trip is bit-exact") {
    const auto v = freq_vocab();
    Checkpoint c{init_model(config_for(v), 13), v, {}};
    testing::randomize_adapters(c.state, 14);
    c.meta.set("tokenizer", "freq");
    const auto path = std::filesystem::temp_directory_path() / "haptix_test.ckpt";
    save_checkpoint(c, path);
    const auto back = load_checkpoint(path);
    CHECK(back.state.config == c.state.config);
    CHECK(back.state.params.bit_equal(c.state.params));
    CHECK(back.vocab == v);
    CHECK(back.meta.get("tokenizer") == "freq");
    std::filesystem::remove(path);
}

TEST_CASE("optimizer names") {
    CHECK(optimizer_from_string(to_string(OptimizerKind::adam)) == OptimizerKind::adam);
    CHECK(optimizer_from_string(to_string(OptimizerKind::sgd_momentum)) == OptimizerKind::sgd_momentum);
    CHECK_THROWS(optimizer_from_string("lbfgs"));
}
