#include "haptix/train.hpp"

#include "haptix/binary_io.hpp"
#include "haptix/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace haptix {

namespace {

constexpr uint32_t kCheckpointVersion = 1;

std::vector<WeightedTarget> caption_targets(const PromptSample& s, double weight) {
    std::vector<WeightedTarget> out;
    for (size_t t = s.caption_begin; t < s.caption_end; ++t) {
        out.push_back({t - 1, s.ids[t], weight});
    }
    return out;
}

void check_batch(std::span<const PromptSample> batch) {
    if (batch.empty()) {
        throw std::invalid_argument("empty training batch");
    }
    for (const auto& s : batch) {
        if (!s.has_caption_span() || s.caption_begin == 0) {
            throw std::invalid_argument("training sample without a caption span");
        }
    }
}

} // namespace

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::adam ? "adam" : "sgd"; }

OptimizerKind optimizer_from_string(const std::string& s) {
    if (s == "adam") return OptimizerKind::adam;
    if (s == "sgd" || s == "momentum") return OptimizerKind::sgd_momentum;
    throw std::invalid_argument("unknown optimizer: " + s);
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate, TrainScope scope, const ModelState& state)
    : kind_(kind), lr_(learning_rate), scope_(scope), m_(state.params.zeros_like()), v_(state.params.zeros_like()) {}

void Optimizer::step(ModelState& state, const ModelParams& grads) {
    ++step_;
    std::vector<RowMatrix*> w, m, v;
    std::vector<const RowMatrix*> g;
    std::vector<TensorKind> kinds;
    state.params.for_each([&](const std::string&, TensorKind k, RowMatrix& t) {
        w.push_back(&t);
        kinds.push_back(k);
    });
    grads.for_each([&](const std::string&, TensorKind, const RowMatrix& t) { g.push_back(&t); });
    m_.for_each([&](const std::string&, TensorKind, RowMatrix& t) { m.push_back(&t); });
    v_.for_each([&](const std::string&, TensorKind, RowMatrix& t) { v.push_back(&t); });

    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
    const auto& cfg = state.config;

    for (size_t i = 0; i < w.size(); ++i) {
        if (!is_trainable(kinds[i], scope_)) {
            continue;
        }
        Eigen::Index row_begin = 0;
        Eigen::Index row_end = w[i]->rows();
        if (kinds[i] == TensorKind::embedding && scope_ == TrainScope::adapters) {
            row_begin = cfg.trainable_rows_begin;
            row_end = cfg.trainable_rows_end;
        }
        if (row_end <= row_begin) {
            continue;
        }
        auto W = w[i]->middleRows(row_begin, row_end - row_begin);
        auto G = g[i]->middleRows(row_begin, row_end - row_begin);
        auto M = m[i]->middleRows(row_begin, row_end - row_begin);
        if (kind_ == OptimizerKind::sgd_momentum) {
            M = momentum * M + G;
            W -= lr_ * M;
        } else {
            auto V = v[i]->middleRows(row_begin, row_end - row_begin);
            M = beta1 * M + (1.0 - beta1) * G;
            V = beta2 * V + (1.0 - beta2) * G.cwiseProduct(G);
            W.array() -= lr_ * (M.array() / bc1) / ((V.array() / bc2).sqrt() + eps);
        }
    }
}

LossAndGrads sft_loss_and_grads(const ModelState& state, std::span<const PromptSample> batch, TrainScope scope) {
    check_batch(batch);
    LossAndGrads out;
    out.grads = state.params.zeros_like();
    for (const auto& s : batch) {
        out.tokens += s.caption_end - s.caption_begin;
    }
    const double w = 1.0 / static_cast<double>(out.tokens);
    for (const auto& s : batch) {
        ForwardPass fp(state, s.ids);
        const auto targets = caption_targets(s, w);
        for (const auto& t : targets) {
            out.loss -= t.weight * fp.log_prob(t.position, t.target);
        }
        fp.backward(targets, out.grads, scope);
    }
    return out;
}

double sft_loss(const ModelState& state, std::span<const PromptSample> batch) {
    check_batch(batch);
    size_t tokens = 0;
    double total = 0.0;
    for (const auto& s : batch) {
        const RowMatrix logits = forward(state, s.ids);
        for (size_t t = s.caption_begin; t < s.caption_end; ++t) {
            const auto row = logits.row(static_cast<Eigen::Index>(t - 1));
            const double mx = row.maxCoeff();
            const double lse = mx + std::log((row.array() - mx).exp().sum());
            total += lse - row(s.ids[t]);
            ++tokens;
        }
    }
    return total / static_cast<double>(tokens);
}

TrainReport train_sft(ModelState& state, std::span<const PromptSample> data, const TrainConfig& cfg) {
    if (data.empty()) {
        throw std::invalid_argument("train_sft: empty dataset");
    }
    if (cfg.batch_size < 1 || cfg.epochs < 0) {
        throw std::invalid_argument("train_sft: batch_size must be positive and epochs non-negative");
    }
    check_batch(data);
    Optimizer opt(cfg.optimizer, cfg.learning_rate, cfg.scope, state);
    Rng rng(cfg.seed);
    TrainReport report;
    std::vector<size_t> order(data.size());
    std::iota(order.begin(), order.end(), size_t{0});

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.shuffle) {
            rng.shuffle(order);
        }
        double sum = 0.0;
        int batches = 0;
        for (size_t b = 0; b < order.size(); b += static_cast<size_t>(cfg.batch_size)) {
            std::vector<PromptSample> batch;
            for (size_t i = b; i < std::min(order.size(), b + static_cast<size_t>(cfg.batch_size)); ++i) {
                batch.push_back(data[order[i]]);
            }
            auto lg = sft_loss_and_grads(state, batch, cfg.scope);
            if (!std::isfinite(lg.loss) || !lg.grads.all_finite()) {
                throw DivergenceError("SFT loss became non-finite at epoch " + std::to_string(epoch));
            }
            opt.step(state, lg.grads);
            report.step_loss.push_back(lg.loss);
            sum += lg.loss;
            ++batches;
        }
        const double mean = sum / batches;
        report.epoch_loss.push_back(mean);
        if (cfg.on_epoch) {
            cfg.on_epoch(epoch, mean);
        }
    }
    return report;
}

std::vector<int> generate_ids(const ModelState& state, std::span<const int> prompt, const DecodeConfig& cfg) {
    if (prompt.empty()) {
        throw std::invalid_argument("generate: empty prompt");
    }
    if (!cfg.greedy && !(cfg.temperature > 0.0)) {
        throw std::invalid_argument("generate: temperature must be positive when sampling");
    }
    std::vector<int> out;
    if (cfg.max_new_tokens <= 0) {
        return out;
    }
    IncrementalDecoder dec(state);
    Eigen::RowVectorXd logits;
    for (int id : prompt) {
        logits = dec.step(id);
    }
    Rng rng(cfg.seed);
    const auto max_len = static_cast<size_t>(state.config.max_seq_len);
    for (int i = 0; i < cfg.max_new_tokens; ++i) {
        int next = 0;
        if (cfg.greedy) {
            logits.maxCoeff(&next);
        } else {
            const double mx = logits.maxCoeff();
            Eigen::RowVectorXd p = ((logits.array() - mx) / cfg.temperature).exp().matrix();
            const double r = rng.uniform() * p.sum();
            double cum = 0.0;
            next = static_cast<int>(p.size()) - 1;
            for (Eigen::Index j = 0; j < p.size(); ++j) {
                cum += p(j);
                if (r < cum) {
                    next = static_cast<int>(j);
                    break;
                }
            }
        }
        if (next == Vocabulary::kEos) {
            break;
        }
        out.push_back(next);
        if (dec.position() >= max_len) {
            break;
        }
        logits = dec.step(next);
    }
    return out;
}

std::string generate(const ModelState& state, const PromptSample& prompt, const Vocabulary& vocab,
                     const DecodeConfig& cfg) {
    if (prompt.has_caption_span()) {
        throw std::invalid_argument("generate: prompt must be in inference mode (no caption)");
    }
    return vocab.detokenize(generate_ids(state, prompt.ids, cfg));
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    BinaryWriter w;
    w.bytes("HXCKPT\0\0", 8);
    w.u32(kCheckpointVersion);
    const auto& c = ckpt.state.config;
    w.i32(c.vocab_size);
    w.i32(c.d_model);
    w.i32(c.n_layers);
    w.i32(c.n_heads);
    w.i32(c.max_seq_len);
    w.i32(c.lora_rank);
    w.f64(c.lora_scale);
    w.i32(c.mlp_hidden);
    w.f64(c.rope_base);
    w.i32(c.trainable_rows_begin);
    w.i32(c.trainable_rows_end);
    ckpt.state.params.for_each([&](const std::string& name, TensorKind, const RowMatrix& m) {
        w.str(name);
        w.u32(static_cast<uint32_t>(m.rows()));
        w.u32(static_cast<uint32_t>(m.cols()));
        w.f64s(m.data(), static_cast<size_t>(m.size()));
    });
    w.str(ckpt.vocab.serialize());
    w.str(ckpt.meta.to_string());
    w.save(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    auto r = BinaryReader::load(path);
    r.expect_magic(std::string("HXCKPT\0\0", 8));
    if (const auto v = r.u32(); v != kCheckpointVersion) {
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(v));
    }
    ModelConfig c;
    c.vocab_size = r.i32();
    c.d_model = r.i32();
    c.n_layers = r.i32();
    c.n_heads = r.i32();
    c.max_seq_len = r.i32();
    c.lora_rank = r.i32();
    c.lora_scale = r.f64();
    c.mlp_hidden = r.i32();
    c.rope_base = r.f64();
    c.trainable_rows_begin = r.i32();
    c.trainable_rows_end = r.i32();
    Checkpoint ckpt;
    ckpt.state = init_model(c, 0);
    ckpt.state.params.for_each([&](const std::string& name, TensorKind, RowMatrix& m) {
        if (r.str() != name) {
            throw std::runtime_error("checkpoint tensor order mismatch at " + name);
        }
        const auto rows = r.u32();
        const auto cols = r.u32();
        if (rows != m.rows() || cols != m.cols()) {
            throw std::runtime_error("checkpoint tensor shape mismatch at " + name);
        }
        r.f64s(m.data(), static_cast<size_t>(m.size()));
    });
    ckpt.vocab = Vocabulary::deserialize(r.str());
    ckpt.meta = KeyValueConfig::parse(r.str());
    if (!r.at_end()) {
        throw std::runtime_error("trailing bytes in checkpoint");
    }
    return ckpt;
}

} // namespace haptix
