#include "doctest.h"

#include "gradcheck.hpp"
#include "haptix/model.hpp"
#include "haptix/rng.hpp"

#include <cmath>

using namespace haptix;

namespace {

ModelConfig tiny_config() {
    ModelConfig c;
    c.vocab_size = 300;
    c.d_model = 32;
    c.n_layers = 2;
    c.n_heads = 4;
    c.max_seq_len = 64;
    c.lora_rank = 4;
    c.mlp_hidden = 64;
    c.trainable_rows_begin = 259;
    c.trainable_rows_end = 300;
    return c;
}

std::vector<int> random_ids(Rng& rng, size_t n, int vocab) {
    std::vector<int> ids(n);
    for (auto& id : ids) {
        id = static_cast<int>(rng.below(static_cast<uint64_t>(vocab)));
    }
    return ids;
}

double weighted_nll(const ModelState& s, const std::vector<int>& ids, const std::vector<WeightedTarget>& targets) {
    const RowMatrix logits = forward(s, ids);
    double loss = 0.0;
    for (const auto& t : targets) {
        const auto row = logits.row(static_cast<Eigen::Index>(t.position));
        const double mx = row.maxCoeff();
        loss -= t.weight * (row(t.target) - mx - std::log((row.array() - mx).exp().sum()));
    }
    return loss;
}

} // namespace

TEST_CASE("init is deterministic with zero LoRA B") {
    const auto a = init_model(tiny_config(), 3);
    const auto b = init_model(tiny_config(), 3);
    CHECK(a.params.bit_equal(b.params));
    CHECK_FALSE(a.params.bit_equal(init_model(tiny_config(), 4).params));
    for (const auto& L : a.params.layers) {
        CHECK(L.lora_bq.isZero(0.0));
        CHECK(L.lora_bv.isZero(0.0));
        CHECK_FALSE(L.lora_aq.isZero(0.0));
    }
    Rng rng(1);
    const auto ids = random_ids(rng, 20, 300);
    const RowMatrix with = forward(a, ids, true);
    const RowMatrix without = forward(a, ids, false);
    CHECK((with - without).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("config validation") {
    auto c = tiny_config();
    c.n_heads = 5;
    CHECK_THROWS(init_model(c, 0));
    c = tiny_config();
    c.lora_rank = 0;
    CHECK_THROWS(init_model(c, 0));
    c = tiny_config();
    c.trainable_rows_end = 400;
    CHECK_THROWS(init_model(c, 0));
}

TEST_CASE("forward: normalization and causality") {
    auto s = init_model(tiny_config(), 5);
    testing::randomize_adapters(s, 6);
    Rng rng(2);
    for (int trial = 0; trial < 10; ++trial) {
        auto ids = random_ids(rng, 5 + rng.below(30), 300);
        const RowMatrix logits = forward(s, ids);
        REQUIRE(logits.rows() == static_cast<Eigen::Index>(ids.size()));
        REQUIRE(logits.allFinite());
        for (Eigen::Index t = 0; t < logits.rows(); ++t) {
            const double mx = logits.row(t).maxCoeff();
            const double sum = (logits.row(t).array() - mx).exp().sum();
            const double p_total = ((logits.row(t).array() - mx).exp() / sum).sum();
            CHECK(std::abs(p_total - 1.0) < 1e-6);
        }

        auto longer = ids;
        longer.push_back(static_cast<int>(rng.below(300)));
        const RowMatrix ext = forward(s, longer);
        CHECK((ext.topRows(logits.rows()) - logits).cwiseAbs().maxCoeff() < 1e-12);

        auto perm = ids;
        std::swap(perm[1], perm[perm.size() - 1]);
        const RowMatrix p = forward(s, perm);
        CHECK((p.row(0) - logits.row(0)).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("forward errors") {
    const auto s = init_model(tiny_config(), 5);
    CHECK_THROWS(forward(s, std::vector<int>(65, 1)));
    CHECK_THROWS(forward(s, std::vector<int>{1, 300}));
    CHECK_THROWS(forward(s, std::vector<int>{-1}));
    CHECK_THROWS(forward(s, std::vector<int>{}));
}

TEST_CASE("incremental decoder matches the full forward pass") {
    auto s = init_model(tiny_config(), 7);
    testing::randomize_adapters(s, 8);
    Rng rng(3);
    const auto ids = random_ids(rng, 40, 300);
    const RowMatrix full = forward(s, ids);
    IncrementalDecoder dec(s);
    for (size_t t = 0; t < ids.size(); ++t) {
        const auto row = dec.step(ids[t]);
        CHECK((row - full.row(static_cast<Eigen::Index>(t))).cwiseAbs().maxCoeff() < 1e-10);
    }
    CHECK(dec.position() == ids.size());
}

TEST_CASE("merged adapters reproduce the adapted forward pass") {
    auto s = init_model(tiny_config(), 9);
    testing::randomize_adapters(s, 10, 0.5);
    const auto merged = merge_adapters(s);
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const auto ids = random_ids(rng, 1 + rng.below(60), 300);
        CHECK((forward(s, ids) - forward(merged, ids)).cwiseAbs().maxCoeff() < 1e-6);
    }
    for (const auto& L : merged.params.layers) {
        CHECK(L.lora_aq.isZero(0.0));
        CHECK(L.lora_bv.isZero(0.0));
    }
    CHECK(merge_adapters(merged).params.bit_equal(merged.params));

    const auto ids = random_ids(rng, 12, 300);
    std::vector<WeightedTarget> targets{{3, 7, 1.0}, {9, 280, 0.5}};
    ForwardPass fp(merged, ids);
    auto grads = merged.params.zeros_like();
    fp.backward(targets, grads, TrainScope::adapters);
    for (const auto& L : grads.layers) {
        CHECK(L.lora_aq.isZero(0.0));
        CHECK(L.lora_bq.isZero(0.0));
        CHECK(L.lora_av.isZero(0.0));
        CHECK(L.lora_bv.isZero(0.0));
    }
}

TEST_CASE("adapter-scope gradients match finite differences") {
    auto s = init_model(tiny_config(), 11);
    testing::randomize_adapters(s, 12);
    Rng rng(5);
    auto ids = random_ids(rng, 24, 259);
    ids[2] = 270;
    ids[5] = 290;
    ids[6] = 270;
    const std::vector<WeightedTarget> targets{{6, 33, 0.3}, {10, 270, 0.2}, {15, 100, 0.25}, {23, 257, 0.25}};
    ForwardPass fp(s, ids);
    auto grads = s.params.zeros_like();
    fp.backward(targets, grads, TrainScope::adapters);

    double lp_sum = 0.0;
    for (const auto& t : targets) {
        lp_sum -= t.weight * fp.log_prob(t.position, t.target);
    }
    CHECK(lp_sum == doctest::Approx(weighted_nll(s, ids, targets)).epsilon(1e-12));

    // Frozen tensors and frozen embedding rows receive nothing.
    grads.for_each([&](const std::string& name, TensorKind k, const RowMatrix& g) {
        if (!is_trainable(k, TrainScope::adapters)) {
            INFO(name);
            CHECK(g.isZero(0.0));
        }
    });
    CHECK(grads.tok_emb.topRows(259).isZero(0.0));
    CHECK_FALSE(grads.tok_emb.row(270).isZero(0.0));

    const auto r = testing::finite_difference_check(
        s, grads, TrainScope::adapters, [&](const ModelState& st) { return weighted_nll(st, ids, targets); }, 20, 77,
        {270, 290});
    CHECK(r.max_rel_error.size() == 3);
    for (const auto& [k, e] : r.max_rel_error) {
        INFO(testing::kind_name(k));
        CHECK(e < 1e-4);
    }
}

TEST_CASE("base-scope gradients match finite differences") {
    auto s = init_model(tiny_config(), 13);
    testing::randomize_adapters(s, 14);
    Rng rng(6);
    const auto ids = random_ids(rng, 18, 300);
    std::vector<WeightedTarget> targets;
    for (size_t t = 4; t < 18; t += 3) {
        targets.push_back({t, ids[(t + 1) % 18], 0.2});
    }
    ForwardPass fp(s, ids);
    auto grads = s.params.zeros_like();
    fp.backward(targets, grads, TrainScope::base);
    grads.for_each([&](const std::string&, TensorKind k, const RowMatrix& g) {
        if (k == TensorKind::lora_a || k == TensorKind::lora_b) {
            CHECK(g.isZero(0.0));
        }
    });
    std::vector<int> rows(ids.begin(), ids.end());
    const auto r = testing::finite_difference_check(
        s, grads, TrainScope::base, [&](const ModelState& st) { return weighted_nll(st, ids, targets); }, 20, 78, rows);
    CHECK(r.max_rel_error.size() == 5);
    for (const auto& [k, e] : r.max_rel_error) {
        INFO(testing::kind_name(k));
        CHECK(e < 1e-4);
    }
}

TEST_CASE("trainable parameter counts") {
    const auto s = init_model(tiny_config(), 1);
    const size_t lora = 2 * 2 * (4 * 32 + 32 * 4);
    CHECK(trainable_parameter_count(s, TrainScope::adapters) == lora + 41 * 32);
    size_t all = 0;
    s.params.for_each([&](const std::string&, TensorKind, const RowMatrix& m) { all += static_cast<size_t>(m.size()); });
    CHECK(trainable_parameter_count(s, TrainScope::base) == all - lora);
}
