#include "haptix/model.hpp"

#include "haptix/rng.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

namespace haptix {

namespace {

constexpr double kNormEps = 1e-6;

using Vec = Eigen::VectorXd;

// y = x_hat * gain with x_hat = x / rms(x). Returns x_hat and 1/rms per row.
void rms_norm(const RowMatrix& x, const RowMatrix& gain, RowMatrix& x_hat, Vec& inv_rms, RowMatrix& y) {
    const auto d = static_cast<double>(x.cols());
    inv_rms = ((x.rowwise().squaredNorm().array() / d) + kNormEps).rsqrt().matrix();
    x_hat = inv_rms.asDiagonal() * x;
    y = x_hat.array().rowwise() * gain.row(0).array();
}

// Gradient through x_hat = x * r, r = (mean(x^2) + eps)^-1/2, given dL/dx_hat.
RowMatrix rms_norm_backward(const RowMatrix& d_hat, const RowMatrix& x_hat, const Vec& inv_rms) {
    const auto d = static_cast<double>(x_hat.cols());
    const Vec dots = (d_hat.array() * x_hat.array()).rowwise().sum().matrix() / d;
    RowMatrix dx = d_hat - dots.asDiagonal() * x_hat;
    return inv_rms.asDiagonal() * dx;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Rotary position embedding applied in place to every head of x, rows at
// positions start, start+1, ... `inverse` applies the transpose rotation.
void apply_rope(RowMatrix& x, const ModelConfig& cfg, size_t start, bool inverse) {
    const int dh = cfg.head_dim();
    const int half = dh / 2;
    for (Eigen::Index t = 0; t < x.rows(); ++t) {
        const double pos = static_cast<double>(start + static_cast<size_t>(t));
        for (int i = 0; i < half; ++i) {
            const double theta = pos * std::pow(cfg.rope_base, -2.0 * i / dh);
            const double c = std::cos(theta);
            const double s = inverse ? -std::sin(theta) : std::sin(theta);
            for (int h = 0; h < cfg.n_heads; ++h) {
                const int c0 = h * dh + 2 * i;
                const double x0 = x(t, c0);
                const double x1 = x(t, c0 + 1);
                x(t, c0) = x0 * c - x1 * s;
                x(t, c0 + 1) = x0 * s + x1 * c;
            }
        }
    }
}

void check_ids(const ModelConfig& cfg, std::span<const int> ids) {
    if (ids.empty()) {
        throw std::invalid_argument("forward: empty token sequence");
    }
    if (ids.size() > static_cast<size_t>(cfg.max_seq_len)) {
        throw std::invalid_argument("forward: sequence longer than max_seq_len");
    }
    for (int id : ids) {
        if (id < 0 || id >= cfg.vocab_size) {
            throw std::out_of_range("forward: token id out of range");
        }
    }
}

void fill_normal(RowMatrix& m, Rng& rng, double std) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = rng.normal() * std;
    }
}

struct LayerCache {
    RowMatrix x_in;
    RowMatrix a_hat, a;
    Vec r1;
    RowMatrix la_q, la_v;  // a A^T
    RowMatrix q, k, v;     // q, k after rotation
    std::vector<RowMatrix> probs;
    RowMatrix o;
    RowMatrix x_mid;
    RowMatrix m_hat, m;
    Vec r2;
    RowMatrix u, s;
};

} // namespace

void ModelConfig::validate() const {
    if (vocab_size < 1 || d_model < 2 || n_layers < 1 || n_heads < 1 || max_seq_len < 1 || mlp_hidden < 1) {
        throw std::invalid_argument("model config: sizes must be positive");
    }
    if (d_model % n_heads != 0 || head_dim() % 2 != 0) {
        throw std::invalid_argument("model config: d_model must split into heads of even width");
    }
    if (lora_rank < 1) {
        throw std::invalid_argument("model config: lora_rank must be at least 1");
    }
    if (trainable_rows_begin < 0 || trainable_rows_end < trainable_rows_begin || trainable_rows_end > vocab_size) {
        throw std::invalid_argument("model config: trainable embedding rows out of range");
    }
}

bool is_trainable(TensorKind kind, TrainScope scope) {
    const bool adapter = kind == TensorKind::lora_a || kind == TensorKind::lora_b;
    if (scope == TrainScope::adapters) {
        return adapter || kind == TensorKind::embedding;
    }
    return !adapter;
}

ModelParams ModelParams::zeros_like() const {
    ModelParams z = *this;
    z.for_each([](const std::string&, TensorKind, RowMatrix& m) { m.setZero(); });
    return z;
}

bool ModelParams::bit_equal(const ModelParams& o) const {
    std::vector<const RowMatrix*> mine;
    std::vector<const RowMatrix*> theirs;
    for_each([&](const std::string&, TensorKind, const RowMatrix& m) { mine.push_back(&m); });
    o.for_each([&](const std::string&, TensorKind, const RowMatrix& m) { theirs.push_back(&m); });
    if (mine.size() != theirs.size()) {
        return false;
    }
    for (size_t i = 0; i < mine.size(); ++i) {
        if (mine[i]->rows() != theirs[i]->rows() || mine[i]->cols() != theirs[i]->cols() ||
            std::memcmp(mine[i]->data(), theirs[i]->data(), static_cast<size_t>(mine[i]->size()) * sizeof(double)) != 0) {
            return false;
        }
    }
    return true;
}

bool ModelParams::all_finite() const {
    bool ok = true;
    for_each([&](const std::string&, TensorKind, const RowMatrix& m) { ok = ok && m.allFinite(); });
    return ok;
}

ModelState init_model(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    ModelState st;
    st.config = cfg;
    const int d = cfg.d_model;
    const int r = cfg.lora_rank;
    auto& p = st.params;
    p.tok_emb = RowMatrix(cfg.vocab_size, d);
    p.layers.resize(static_cast<size_t>(cfg.n_layers));
    for (auto& L : p.layers) {
        L.attn_gain = RowMatrix::Ones(1, d);
        L.wq = RowMatrix(d, d);
        L.wk = RowMatrix(d, d);
        L.wv = RowMatrix(d, d);
        L.wo = RowMatrix(d, d);
        L.lora_aq = RowMatrix(r, d);
        L.lora_bq = RowMatrix::Zero(d, r);
        L.lora_av = RowMatrix(r, d);
        L.lora_bv = RowMatrix::Zero(d, r);
        L.mlp_gain = RowMatrix::Ones(1, d);
        L.w1 = RowMatrix(cfg.mlp_hidden, d);
        L.w2 = RowMatrix(d, cfg.mlp_hidden);
    }
    p.final_gain = RowMatrix::Ones(1, d);
    p.head = RowMatrix(cfg.vocab_size, d);

    Rng rng(seed);
    const double in_std = 1.0 / std::sqrt(static_cast<double>(d));
    const double depth = 1.0 / std::sqrt(2.0 * cfg.n_layers);
    p.for_each([&](const std::string& name, TensorKind kind, RowMatrix& m) {
        switch (kind) {
        case TensorKind::embedding:
            fill_normal(m, rng, 1.0);
            break;
        case TensorKind::norm:
        case TensorKind::lora_b:
            break;
        case TensorKind::attention:
            fill_normal(m, rng, name.ends_with("wo") ? in_std * depth : in_std);
            break;
        case TensorKind::mlp:
            fill_normal(m, rng, name.ends_with("w2") ? depth / std::sqrt(static_cast<double>(cfg.mlp_hidden)) : in_std);
            break;
        case TensorKind::head:
            fill_normal(m, rng, in_std);
            break;
        case TensorKind::lora_a:
            fill_normal(m, rng, in_std);
            break;
        }
    });
    return st;
}

size_t trainable_parameter_count(const ModelState& state, TrainScope scope) {
    size_t n = 0;
    state.params.for_each([&](const std::string&, TensorKind kind, const RowMatrix& m) {
        if (!is_trainable(kind, scope)) {
            return;
        }
        if (kind == TensorKind::embedding && scope == TrainScope::adapters) {
            n += static_cast<size_t>(state.config.trainable_rows_end - state.config.trainable_rows_begin) *
                 static_cast<size_t>(m.cols());
        } else {
            n += static_cast<size_t>(m.size());
        }
    });
    return n;
}

// ---------------------------------------------------------------------------
// Full-sequence forward / backward

struct ForwardPass::Impl {
    const ModelState* state = nullptr;
    std::vector<int> ids;
    bool use_adapters = true;
    std::vector<LayerCache> layers;
    RowMatrix f_hat, f;
    Vec rf;
    RowMatrix logits;
    Vec log_norm;  // logsumexp per row

    void run() {
        const auto& cfg = state->config;
        const auto& P = state->params;
        const auto T = static_cast<Eigen::Index>(ids.size());
        const int dh = cfg.head_dim();
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
        const double ls = cfg.lora_scale;

        RowMatrix x(T, cfg.d_model);
        for (Eigen::Index t = 0; t < T; ++t) {
            x.row(t) = P.tok_emb.row(ids[static_cast<size_t>(t)]);
        }
        layers.resize(P.layers.size());
        for (size_t l = 0; l < P.layers.size(); ++l) {
            const auto& L = P.layers[l];
            auto& c = layers[l];
            c.x_in = x;
            rms_norm(x, L.attn_gain, c.a_hat, c.r1, c.a);
            c.q = c.a * L.wq.transpose();
            c.k = c.a * L.wk.transpose();
            c.v = c.a * L.wv.transpose();
            if (use_adapters) {
                c.la_q = c.a * L.lora_aq.transpose();
                c.la_v = c.a * L.lora_av.transpose();
                c.q.noalias() += ls * c.la_q * L.lora_bq.transpose();
                c.v.noalias() += ls * c.la_v * L.lora_bv.transpose();
            }
            apply_rope(c.q, cfg, 0, false);
            apply_rope(c.k, cfg, 0, false);

            c.o = RowMatrix(T, cfg.d_model);
            c.probs.resize(static_cast<size_t>(cfg.n_heads));
            for (int h = 0; h < cfg.n_heads; ++h) {
                RowMatrix s = (c.q.middleCols(h * dh, dh) * c.k.middleCols(h * dh, dh).transpose()) * scale;
                for (Eigen::Index t = 0; t < T; ++t) {
                    const double mx = s.row(t).head(t + 1).maxCoeff();
                    double sum = 0.0;
                    for (Eigen::Index j = 0; j <= t; ++j) {
                        s(t, j) = std::exp(s(t, j) - mx);
                        sum += s(t, j);
                    }
                    s.row(t).head(t + 1) /= sum;
                    s.row(t).tail(T - t - 1).setZero();
                }
                c.o.middleCols(h * dh, dh) = s * c.v.middleCols(h * dh, dh);
                c.probs[static_cast<size_t>(h)] = std::move(s);
            }
            c.x_mid = c.x_in + c.o * L.wo.transpose();
            rms_norm(c.x_mid, L.mlp_gain, c.m_hat, c.r2, c.m);
            c.u = c.m * L.w1.transpose();
            c.s = c.u.unaryExpr([](double z) { return z * sigmoid(z); });
            x = c.x_mid + c.s * L.w2.transpose();
        }
        rms_norm(x, P.final_gain, f_hat, rf, f);
        logits = f * P.head.transpose();
        log_norm = Vec(T);
        for (Eigen::Index t = 0; t < T; ++t) {
            const double mx = logits.row(t).maxCoeff();
            log_norm(t) = mx + std::log((logits.row(t).array() - mx).exp().sum());
        }
    }
};

ForwardPass::ForwardPass(const ModelState& state, std::span<const int> ids) : impl_(std::make_unique<Impl>()) {
    check_ids(state.config, ids);
    impl_->state = &state;
    impl_->ids.assign(ids.begin(), ids.end());
    impl_->run();
}

ForwardPass::~ForwardPass() = default;
ForwardPass::ForwardPass(ForwardPass&&) noexcept = default;
ForwardPass& ForwardPass::operator=(ForwardPass&&) noexcept = default;

const RowMatrix& ForwardPass::logits() const { return impl_->logits; }

double ForwardPass::log_prob(size_t position, int target) const {
    return impl_->logits(static_cast<Eigen::Index>(position), target) - impl_->log_norm(static_cast<Eigen::Index>(position));
}

void ForwardPass::backward(std::span<const WeightedTarget> targets, ModelParams& grads, TrainScope scope) const {
    const auto& I = *impl_;
    const auto& cfg = I.state->config;
    const auto& P = I.state->params;
    const auto T = static_cast<Eigen::Index>(I.ids.size());
    const int dh = cfg.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const double ls = cfg.lora_scale;

    const bool g_emb = is_trainable(TensorKind::embedding, scope);
    const bool g_norm = is_trainable(TensorKind::norm, scope);
    const bool g_attn = is_trainable(TensorKind::attention, scope);
    const bool g_mlp = is_trainable(TensorKind::mlp, scope);
    const bool g_head = is_trainable(TensorKind::head, scope);
    const bool g_la = is_trainable(TensorKind::lora_a, scope);
    const bool g_lb = is_trainable(TensorKind::lora_b, scope);

    RowMatrix dlogits = RowMatrix::Zero(T, cfg.vocab_size);
    for (const auto& wt : targets) {
        const auto t = static_cast<Eigen::Index>(wt.position);
        if (t >= T || wt.target < 0 || wt.target >= cfg.vocab_size) {
            throw std::out_of_range("backward: target outside the sequence or vocabulary");
        }
        dlogits.row(t) += wt.weight * (I.logits.row(t).array() - I.log_norm(t)).exp().matrix();
        dlogits(t, wt.target) -= wt.weight;
    }

    if (g_head) {
        grads.head.noalias() += dlogits.transpose() * I.f;
    }
    RowMatrix df = dlogits * P.head;
    if (g_norm) {
        grads.final_gain += (df.array() * I.f_hat.array()).colwise().sum().matrix();
    }
    RowMatrix dx = rms_norm_backward(df.array().rowwise() * P.final_gain.row(0).array(), I.f_hat, I.rf);

    for (size_t li = P.layers.size(); li-- > 0;) {
        const auto& L = P.layers[li];
        const auto& c = I.layers[li];
        auto& G = grads.layers[li];

        // MLP branch
        if (g_mlp) {
            G.w2.noalias() += dx.transpose() * c.s;
        }
        RowMatrix ds = dx * L.w2;
        RowMatrix du = ds.binaryExpr(c.u, [](double g, double z) {
            const double sg = sigmoid(z);
            return g * sg * (1.0 + z * (1.0 - sg));
        });
        if (g_mlp) {
            G.w1.noalias() += du.transpose() * c.m;
        }
        RowMatrix dm = du * L.w1;
        if (g_norm) {
            G.mlp_gain += (dm.array() * c.m_hat.array()).colwise().sum().matrix();
        }
        RowMatrix dx_mid = dx + rms_norm_backward(dm.array().rowwise() * L.mlp_gain.row(0).array(), c.m_hat, c.r2);

        // Attention branch
        if (g_attn) {
            G.wo.noalias() += dx_mid.transpose() * c.o;
        }
        RowMatrix d_o = dx_mid * L.wo;
        RowMatrix dq(T, cfg.d_model), dk(T, cfg.d_model), dv(T, cfg.d_model);
        for (int h = 0; h < cfg.n_heads; ++h) {
            const auto& p = c.probs[static_cast<size_t>(h)];
            const auto d_oh = d_o.middleCols(h * dh, dh);
            RowMatrix dp = d_oh * c.v.middleCols(h * dh, dh).transpose();
            dv.middleCols(h * dh, dh) = p.transpose() * d_oh;
            const Vec row_dot = (dp.array() * p.array()).rowwise().sum().matrix();
            RowMatrix dscore = p.array() * (dp.colwise() - row_dot).array();
            dscore *= scale;
            dq.middleCols(h * dh, dh) = dscore * c.k.middleCols(h * dh, dh);
            dk.middleCols(h * dh, dh) = dscore.transpose() * c.q.middleCols(h * dh, dh);
        }
        apply_rope(dq, cfg, 0, true);
        apply_rope(dk, cfg, 0, true);

        RowMatrix da = dq * L.wq + dk * L.wk + dv * L.wv;
        if (g_attn) {
            G.wq.noalias() += dq.transpose() * c.a;
            G.wk.noalias() += dk.transpose() * c.a;
            G.wv.noalias() += dv.transpose() * c.a;
        }
        if (I.use_adapters) {
            const RowMatrix tq = dq * L.lora_bq;  // T x r
            const RowMatrix tv = dv * L.lora_bv;
            da.noalias() += ls * tq * L.lora_aq;
            da.noalias() += ls * tv * L.lora_av;
            if (g_lb) {
                G.lora_bq.noalias() += ls * dq.transpose() * c.la_q;
                G.lora_bv.noalias() += ls * dv.transpose() * c.la_v;
            }
            if (g_la) {
                G.lora_aq.noalias() += ls * tq.transpose() * c.a;
                G.lora_av.noalias() += ls * tv.transpose() * c.a;
            }
        }
        if (g_norm) {
            G.attn_gain += (da.array() * c.a_hat.array()).colwise().sum().matrix();
        }
        dx = dx_mid + rms_norm_backward(da.array().rowwise() * L.attn_gain.row(0).array(), c.a_hat, c.r1);
    }

    if (g_emb) {
        const bool rows_limited = scope == TrainScope::adapters;
        for (Eigen::Index t = 0; t < T; ++t) {
            const int id = I.ids[static_cast<size_t>(t)];
            if (rows_limited && (id < cfg.trainable_rows_begin || id >= cfg.trainable_rows_end)) {
                continue;
            }
            grads.tok_emb.row(id) += dx.row(t);
        }
    }
}

RowMatrix forward(const ModelState& state, std::span<const int> ids, bool use_adapters) {
    check_ids(state.config, ids);
    ForwardPass::Impl impl;
    impl.state = &state;
    impl.ids.assign(ids.begin(), ids.end());
    impl.use_adapters = use_adapters;
    impl.run();
    return std::move(impl.logits);
}

// ---------------------------------------------------------------------------
// Incremental decoding

struct IncrementalDecoder::Impl {
    const ModelState* state = nullptr;
    std::vector<RowMatrix> keys, values;
    size_t pos = 0;
};

IncrementalDecoder::IncrementalDecoder(const ModelState& state) : impl_(std::make_unique<Impl>()) {
    impl_->state = &state;
    for (int l = 0; l < state.config.n_layers; ++l) {
        impl_->keys.emplace_back(state.config.max_seq_len, state.config.d_model);
        impl_->values.emplace_back(state.config.max_seq_len, state.config.d_model);
    }
}

IncrementalDecoder::~IncrementalDecoder() = default;

size_t IncrementalDecoder::position() const { return impl_->pos; }

Eigen::RowVectorXd IncrementalDecoder::step(int id) {
    auto& I = *impl_;
    const auto& cfg = I.state->config;
    const auto& P = I.state->params;
    if (I.pos >= static_cast<size_t>(cfg.max_seq_len)) {
        throw std::invalid_argument("decoder: sequence longer than max_seq_len");
    }
    if (id < 0 || id >= cfg.vocab_size) {
        throw std::out_of_range("decoder: token id out of range");
    }
    const int dh = cfg.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const auto t = static_cast<Eigen::Index>(I.pos);

    RowMatrix x = P.tok_emb.row(id);
    RowMatrix hat, a;
    Vec r;
    for (size_t l = 0; l < P.layers.size(); ++l) {
        const auto& L = P.layers[l];
        rms_norm(x, L.attn_gain, hat, r, a);
        RowMatrix q = a * L.wq.transpose();
        RowMatrix k = a * L.wk.transpose();
        RowMatrix v = a * L.wv.transpose();
        q.noalias() += cfg.lora_scale * (a * L.lora_aq.transpose()) * L.lora_bq.transpose();
        v.noalias() += cfg.lora_scale * (a * L.lora_av.transpose()) * L.lora_bv.transpose();
        apply_rope(q, cfg, I.pos, false);
        apply_rope(k, cfg, I.pos, false);
        I.keys[l].row(t) = k.row(0);
        I.values[l].row(t) = v.row(0);

        RowMatrix o(1, cfg.d_model);
        for (int h = 0; h < cfg.n_heads; ++h) {
            Eigen::RowVectorXd s = (q.middleCols(h * dh, dh) * I.keys[l].block(0, h * dh, t + 1, dh).transpose()) * scale;
            const double mx = s.maxCoeff();
            s = (s.array() - mx).exp().matrix();
            s /= s.sum();
            o.middleCols(h * dh, dh) = s * I.values[l].block(0, h * dh, t + 1, dh);
        }
        x += o * L.wo.transpose();
        rms_norm(x, L.mlp_gain, hat, r, a);
        RowMatrix u = a * L.w1.transpose();
        u = u.unaryExpr([](double z) { return z * sigmoid(z); });
        x += u * L.w2.transpose();
    }
    rms_norm(x, P.final_gain, hat, r, a);
    ++I.pos;
    return (a * P.head.transpose()).row(0);
}

ModelState merge_adapters(const ModelState& state) {
    ModelState out = state;
    const double ls = state.config.lora_scale;
    for (auto& L : out.params.layers) {
        L.wq.noalias() += ls * L.lora_bq * L.lora_aq;
        L.wv.noalias() += ls * L.lora_bv * L.lora_av;
        L.lora_aq.setZero();
        L.lora_bq.setZero();
        L.lora_av.setZero();
        L.lora_bv.setZero();
    }
    return out;
}

} // namespace haptix
