#pragma once

#include "haptix/model.hpp"
#include "haptix/rng.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace haptix::testing {

struct GradCheckResult {
    std::map<TensorKind, double> max_rel_error;
    std::map<TensorKind, int> coords;

    double worst() const {
        double w = 0.0;
        for (const auto& [k, e] : max_rel_error) {
            w = std::max(w, e);
        }
        return w;
    }
};

inline std::string kind_name(TensorKind k) {
    switch (k) {
    case TensorKind::embedding: return "embedding";
    case TensorKind::norm: return "norm";
    case TensorKind::attention: return "attention";
    case TensorKind::mlp: return "mlp";
    case TensorKind::head: return "head";
    case TensorKind::lora_a: return "lora_a";
    case TensorKind::lora_b: return "lora_b";
    }
    return "?";
}

// Central differences on `per_kind` random coordinates of every tensor kind
// trainable under `scope`. Embedding coordinates are drawn from `rows` when
// given (the rows that actually occur in the inputs).
inline GradCheckResult finite_difference_check(ModelState& state, const ModelParams& analytic, TrainScope scope,
                                               const std::function<double(const ModelState&)>& loss, int per_kind,
                                               uint64_t seed, const std::vector<int>& rows = {}, double eps = 1e-4) {
    struct Slot {
        RowMatrix* w;
        const RowMatrix* g;
    };
    std::map<TensorKind, std::vector<Slot>> by_kind;
    std::vector<const RowMatrix*> grads;
    analytic.for_each([&](const std::string&, TensorKind, const RowMatrix& g) { grads.push_back(&g); });
    size_t i = 0;
    state.params.for_each([&](const std::string&, TensorKind k, RowMatrix& w) {
        if (is_trainable(k, scope)) {
            by_kind[k].push_back({&w, grads[i]});
        }
        ++i;
    });

    Rng rng(seed);
    GradCheckResult out;
    for (auto& [kind, slots] : by_kind) {
        double worst = 0.0;
        for (int c = 0; c < per_kind; ++c) {
            const Slot& s = slots[rng.below(slots.size())];
            Eigen::Index r = 0;
            if (kind == TensorKind::embedding && !rows.empty()) {
                r = rows[rng.below(rows.size())];
            } else if (kind == TensorKind::embedding && scope == TrainScope::adapters) {
                const auto& cfg = state.config;
                r = cfg.trainable_rows_begin + static_cast<Eigen::Index>(
                                                   rng.below(static_cast<uint64_t>(cfg.trainable_rows_end - cfg.trainable_rows_begin)));
            } else {
                r = static_cast<Eigen::Index>(rng.below(static_cast<uint64_t>(s.w->rows())));
            }
            const auto col = static_cast<Eigen::Index>(rng.below(static_cast<uint64_t>(s.w->cols())));
            const double orig = (*s.w)(r, col);
            (*s.w)(r, col) = orig + eps;
            const double up = loss(state);
            (*s.w)(r, col) = orig - eps;
            const double down = loss(state);
            (*s.w)(r, col) = orig;
            const double numeric = (up - down) / (2.0 * eps);
            const double a = (*s.g)(r, col);
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-7});
            worst = std::max(worst, std::abs(a - numeric) / denom);
        }
        out.max_rel_error[kind] = worst;
        out.coords[kind] = per_kind;
    }
    return out;
}

// Gives LoRA B random values so gradients reach A as well.
inline void randomize_adapters(ModelState& state, uint64_t seed, double scale = 0.2) {
    Rng rng(seed);
    state.params.for_each([&](const std::string&, TensorKind k, RowMatrix& w) {
        if (k == TensorKind::lora_b || k == TensorKind::lora_a) {
            for (Eigen::Index i = 0; i < w.size(); ++i) {
                w.data()[i] = scale * rng.normal();
            }
        }
    });
}

} // namespace haptix::testing
