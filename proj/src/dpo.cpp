#include "haptix/dpo.hpp"

#include "haptix/rng.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

namespace haptix {

namespace {

using nlohmann::json;

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

template <class F>
void for_each_json_line(const std::string& text, F&& f) {
    std::istringstream in(text);
    std::string line;
    size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            f(json::parse(line));
        } catch (const json::exception& e) {
            throw std::runtime_error("line " + std::to_string(n) + ": " + e.what());
        }
    }
}

std::vector<WeightedTarget> span_targets(const PromptSample& s, double weight) {
    std::vector<WeightedTarget> out;
    for (size_t t = s.caption_begin; t < s.caption_end; ++t) {
        out.push_back({t - 1, s.ids[t], weight});
    }
    return out;
}

void check_example(const DpoExample& ex) {
    if (!ex.chosen.has_caption_span() || !ex.rejected.has_caption_span()) {
        throw std::invalid_argument("DPO example without caption spans");
    }
}

} // namespace

void validate(const RatingRecord& r) {
    if (r.signal_id.empty() || r.rater_id.empty()) {
        throw std::invalid_argument("rating needs signal_id and rater_id");
    }
    if (!std::isfinite(r.rating) || r.rating < 1.0 || r.rating > 7.0) {
        throw std::invalid_argument("rating outside [1, 7]");
    }
}

void check_unique(std::span<const RatingRecord> ratings) {
    std::set<std::tuple<std::string, Category, std::string, std::string>> seen;
    for (const auto& r : ratings) {
        if (!seen.emplace(r.signal_id, r.category, r.caption, r.rater_id).second) {
            throw std::invalid_argument("duplicate rating by " + r.rater_id + " for " + r.signal_id);
        }
    }
}

std::vector<PreferencePair> build_pairs(std::span<const RatingRecord> ratings, const PairOptions& opts) {
    struct Agg {
        double sum = 0.0;
        int n = 0;
    };
    using Key = std::tuple<std::string, Category, int>;
    std::map<Key, std::map<std::string, Agg>> groups;
    for (const auto& r : ratings) {
        const int variant = opts.cross_variant ? -1 : static_cast<int>(r.variant);
        auto& a = groups[{r.signal_id, r.category, variant}][r.caption];
        a.sum += r.rating;
        ++a.n;
    }

    std::vector<PreferencePair> out;
    for (const auto& [key, captions] : groups) {
        const auto& [signal, category, variant] = key;
        for (const auto& [hi_text, hi] : captions) {
            const double hi_mean = hi.sum / hi.n;
            if (!(hi_mean > opts.threshold)) {
                continue;
            }
            for (const auto& [lo_text, lo] : captions) {
                const double lo_mean = lo.sum / lo.n;
                if (!(lo_mean < opts.threshold)) {
                    continue;
                }
                PreferencePair p;
                p.signal_id = signal;
                p.category = category;
                p.chosen = hi_text;
                p.rejected = lo_text;
                if (variant >= 0) {
                    p.variant = static_cast<TokenizerKind>(variant);
                }
                p.chosen_mean = hi_mean;
                p.rejected_mean = lo_mean;
                p.chosen_votes = hi.n;
                p.rejected_votes = lo.n;
                out.push_back(std::move(p));
            }
        }
    }
    std::sort(out.begin(), out.end(), [](const PreferencePair& a, const PreferencePair& b) {
        const int va = a.variant ? static_cast<int>(*a.variant) : -1;
        const int vb = b.variant ? static_cast<int>(*b.variant) : -1;
        return std::tie(a.signal_id, a.category, a.chosen, a.rejected, va) <
               std::tie(b.signal_id, b.category, b.chosen, b.rejected, vb);
    });
    return out;
}

std::string to_jsonl(std::span<const RatingRecord> ratings) {
    std::string out;
    for (const auto& r : ratings) {
        json j{{"signal_id", r.signal_id},      {"category", to_string(r.category)}, {"caption", r.caption},
               {"variant", to_string(r.variant)}, {"rater_id", r.rater_id},         {"rating", r.rating}};
        out += j.dump(-1, ' ', false, json::error_handler_t::replace) + "\n";
    }
    return out;
}

std::string to_jsonl(std::span<const PreferencePair> pairs) {
    std::string out;
    for (const auto& p : pairs) {
        json j{{"signal_id", p.signal_id}, {"category", to_string(p.category)}, {"chosen", p.chosen},
               {"rejected", p.rejected}};
        if (p.variant) {
            j["variant"] = to_string(*p.variant);
        }
        j["chosen_mean"] = p.chosen_mean;
        j["rejected_mean"] = p.rejected_mean;
        j["chosen_votes"] = p.chosen_votes;
        j["rejected_votes"] = p.rejected_votes;
        out += j.dump(-1, ' ', false, json::error_handler_t::replace) + "\n";
    }
    return out;
}

std::vector<RatingRecord> ratings_from_jsonl(const std::string& text) {
    std::vector<RatingRecord> out;
    for_each_json_line(text, [&](const json& j) {
        RatingRecord r;
        r.signal_id = j.at("signal_id").get<std::string>();
        r.category = category_from_string(j.at("category").get<std::string>());
        r.caption = j.at("caption").get<std::string>();
        r.variant = tokenizer_kind_from_string(j.value("variant", std::string("freq")));
        r.rater_id = j.at("rater_id").get<std::string>();
        r.rating = j.at("rating").get<double>();
        validate(r);
        out.push_back(std::move(r));
    });
    return out;
}

std::vector<PreferencePair> pairs_from_jsonl(const std::string& text) {
    std::vector<PreferencePair> out;
    for_each_json_line(text, [&](const json& j) {
        PreferencePair p;
        p.signal_id = j.at("signal_id").get<std::string>();
        p.category = category_from_string(j.at("category").get<std::string>());
        p.chosen = j.at("chosen").get<std::string>();
        p.rejected = j.at("rejected").get<std::string>();
        if (j.contains("variant")) {
            p.variant = tokenizer_kind_from_string(j["variant"].get<std::string>());
        }
        p.chosen_mean = j.value("chosen_mean", 0.0);
        p.rejected_mean = j.value("rejected_mean", 0.0);
        p.chosen_votes = j.value("chosen_votes", 0);
        p.rejected_votes = j.value("rejected_votes", 0);
        out.push_back(std::move(p));
    });
    return out;
}

std::vector<RatingRecord> read_ratings(const std::filesystem::path& path) { return ratings_from_jsonl(read_file(path)); }
std::vector<PreferencePair> read_pairs(const std::filesystem::path& path) { return pairs_from_jsonl(read_file(path)); }

DpoExample make_dpo_example(const PreferencePair& pair, const HapticTokenSequence& haptic, const Vocabulary& vocab,
                            int haptic_stride) {
    if (pair.chosen.empty() || pair.rejected.empty()) {
        throw std::invalid_argument("preference pair with an empty caption");
    }
    if (pair.chosen == pair.rejected) {
        throw std::invalid_argument("preference pair with identical captions");
    }
    return {assemble(haptic, pair.category, pair.chosen, vocab, haptic_stride),
            assemble(haptic, pair.category, pair.rejected, vocab, haptic_stride)};
}

double caption_log_prob(const ModelState& state, const PromptSample& sample) {
    if (!sample.has_caption_span()) {
        throw std::invalid_argument("sample without caption span");
    }
    ForwardPass fp(state, sample.ids);
    double lp = 0.0;
    for (size_t t = sample.caption_begin; t < sample.caption_end; ++t) {
        lp += fp.log_prob(t - 1, sample.ids[t]);
    }
    return lp;
}

DpoTerms dpo_terms(const ModelState& policy, const ModelState& reference, const DpoExample& ex, double beta) {
    check_example(ex);
    const double d = (caption_log_prob(policy, ex.chosen) - caption_log_prob(reference, ex.chosen)) -
                     (caption_log_prob(policy, ex.rejected) - caption_log_prob(reference, ex.rejected));
    return {softplus(-beta * d), beta * d};
}

DpoLossAndGrads dpo_loss_and_grads(const ModelState& policy, const ModelState& reference,
                                   std::span<const DpoExample> batch, double beta, TrainScope scope,
                                   std::span<const std::pair<double, double>> reference_logps) {
    if (batch.empty()) {
        throw std::invalid_argument("empty DPO batch");
    }
    if (!reference_logps.empty() && reference_logps.size() != batch.size()) {
        throw std::invalid_argument("reference log-probabilities do not match the batch");
    }
    DpoLossAndGrads out;
    out.grads = policy.params.zeros_like();
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (size_t i = 0; i < batch.size(); ++i) {
        const auto& ex = batch[i];
        check_example(ex);
        ForwardPass fw(policy, ex.chosen.ids);
        ForwardPass fl(policy, ex.rejected.ids);
        double pw = 0.0;
        double pl = 0.0;
        for (size_t t = ex.chosen.caption_begin; t < ex.chosen.caption_end; ++t) {
            pw += fw.log_prob(t - 1, ex.chosen.ids[t]);
        }
        for (size_t t = ex.rejected.caption_begin; t < ex.rejected.caption_end; ++t) {
            pl += fl.log_prob(t - 1, ex.rejected.ids[t]);
        }
        double rw = 0.0;
        double rl = 0.0;
        if (reference_logps.empty()) {
            rw = caption_log_prob(reference, ex.chosen);
            rl = caption_log_prob(reference, ex.rejected);
        } else {
            std::tie(rw, rl) = reference_logps[i];
        }
        const double d = (pw - rw) - (pl - rl);
        out.loss += inv * softplus(-beta * d);
        out.margin += inv * beta * d;
        // d loss / d logp(chosen) = -beta * sigmoid(-beta d); backward() takes
        // weights of -log p, so the signs flip.
        const double w = inv * beta * sigmoid(-beta * d);
        if (w != 0.0) {
            fw.backward(span_targets(ex.chosen, w), out.grads, scope);
            fl.backward(span_targets(ex.rejected, -w), out.grads, scope);
        }
    }
    return out;
}

DpoEvaluation evaluate_dpo(const ModelState& policy, const ModelState& reference, std::span<const DpoExample> data,
                           double beta) {
    DpoEvaluation ev;
    for (const auto& ex : data) {
        ev.per_pair.push_back(dpo_terms(policy, reference, ex, beta));
        ev.mean_loss += ev.per_pair.back().loss;
        ev.mean_margin += ev.per_pair.back().margin;
    }
    if (!data.empty()) {
        ev.mean_loss /= static_cast<double>(data.size());
        ev.mean_margin /= static_cast<double>(data.size());
    }
    return ev;
}

DpoReport train_dpo(ModelState& policy, const ModelState& reference, std::span<const DpoExample> data,
                    const DpoConfig& cfg) {
    if (data.empty()) {
        throw std::invalid_argument("train_dpo: no preference pairs");
    }
    if (cfg.batch_size < 1 || cfg.epochs < 0 || !(cfg.beta >= 0.0)) {
        throw std::invalid_argument("train_dpo: invalid configuration");
    }
    std::vector<std::pair<double, double>> ref_lp;
    for (const auto& ex : data) {
        check_example(ex);
        ref_lp.emplace_back(caption_log_prob(reference, ex.chosen), caption_log_prob(reference, ex.rejected));
    }

    Optimizer opt(cfg.optimizer, cfg.learning_rate, cfg.scope, policy);
    Rng rng(cfg.seed);
    std::vector<size_t> order(data.size());
    std::iota(order.begin(), order.end(), size_t{0});
    DpoReport report;
    report.evaluations.push_back(evaluate_dpo(policy, reference, data, cfg.beta));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.shuffle) {
            rng.shuffle(order);
        }
        double loss_sum = 0.0;
        double margin_sum = 0.0;
        int batches = 0;
        for (size_t b = 0; b < order.size(); b += static_cast<size_t>(cfg.batch_size)) {
            std::vector<DpoExample> batch;
            std::vector<std::pair<double, double>> lps;
            for (size_t i = b; i < std::min(order.size(), b + static_cast<size_t>(cfg.batch_size)); ++i) {
                batch.push_back(data[order[i]]);
                lps.push_back(ref_lp[order[i]]);
            }
            auto lg = dpo_loss_and_grads(policy, reference, batch, cfg.beta, cfg.scope, lps);
            if (!std::isfinite(lg.loss) || !lg.grads.all_finite()) {
                throw DivergenceError("DPO loss became non-finite at epoch " + std::to_string(epoch));
            }
            opt.step(policy, lg.grads);
            loss_sum += lg.loss;
            margin_sum += lg.margin;
            ++batches;
        }
        report.epoch_loss.push_back(loss_sum / batches);
        report.epoch_margin.push_back(margin_sum / batches);
        report.evaluations.push_back(evaluate_dpo(policy, reference, data, cfg.beta));
        if (cfg.on_epoch) {
            cfg.on_epoch(epoch, report.epoch_loss.back(), report.epoch_margin.back());
        }
    }
    return report;
}

} // namespace haptix
