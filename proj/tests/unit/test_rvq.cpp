#include "doctest.h"

#include "haptix/rng.hpp"
#include "haptix/rvq.hpp"

#include <cmath>
#include <filesystem>
#include <set>

using namespace haptix;

namespace {

RvqConfig small_config(int stages, int k) {
    RvqConfig cfg;
    cfg.frame_len = 16;
    cfg.hop_len = 16;
    cfg.num_frames = 40;
    cfg.num_stages = stages;
    cfg.codebook_size = k;
    cfg.kmeans_iters = 25;
    return cfg;
}

Waveform random_signal(Rng& rng, size_t n) {
    SynthSpec s;
    s.kind = static_cast<SynthKind>(rng.below(4));
    s.frequency = rng.uniform(20.0, 400.0);
    s.end_frequency = rng.uniform(20.0, 400.0);
    s.amplitude = rng.uniform(0.2, 1.0);
    s.duration = static_cast<double>(n) / 8000.0;
    s.period = 0.01;
    s.duty = 0.5;
    s.noise_seed = rng.next_u64();
    return synthesize(s);
}

std::vector<Waveform> corpus(uint64_t seed, int count, size_t n) {
    Rng rng(seed);
    std::vector<Waveform> out;
    for (int i = 0; i < count; ++i) {
        out.push_back(random_signal(rng, n));
    }
    return out;
}

int brute_nearest(const RowMatrix& cb, const Eigen::RowVectorXd& v) {
    int best = 0;
    double best_d = (cb.row(0) - v).squaredNorm();
    for (int i = 1; i < cb.rows(); ++i) {
        const double d = (cb.row(i) - v).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return best;
}

double mean_relative_error(const std::vector<Waveform>& set, const RvqCodec& codec) {
    double total = 0.0;
    for (const auto& w : set) {
        const auto canvas = pad_or_truncate(w, codec.config.canvas_len());
        const auto rec = rvq_decode(rvq_encode(w, codec), codec);
        double num = 0.0;
        double den = 0.0;
        for (size_t i = 0; i < canvas.size(); ++i) {
            num += (rec.samples[i] - canvas.samples[i]) * (rec.samples[i] - canvas.samples[i]);
            den += canvas.samples[i] * canvas.samples[i];
        }
        total += std::sqrt(num / std::max(den, 1e-300));
    }
    return total / static_cast<double>(set.size());
}

} // namespace

TEST_CASE("default geometry matches the 1379-token, 1024-entry layout") {
    RvqConfig cfg;
    CHECK(cfg.sequence_len() == 1379);
    CHECK(cfg.codebook_size == 1024);
    CHECK(cfg.canvas_len() == 79982);
    CHECK(cfg.canvas_len() <= 80000);
}

TEST_CASE("zero-error fixed point when codebook equals the distinct frames") {
    // 8 distinct frames (one of them zero) and a codebook of 8.
    auto cfg = small_config(1, 8);
    cfg.num_frames = 8;
    Rng rng(1);
    std::vector<double> x(static_cast<size_t>(cfg.frame_len) * 8, 0.0);
    for (size_t i = static_cast<size_t>(cfg.frame_len); i < x.size(); ++i) {
        x[i] = rng.uniform(-1.0, 1.0);
    }
    const std::vector<Waveform> train{Waveform{8000, x}};
    const auto codec = rvq_fit(train, cfg, 7);
    CHECK(codec.trained);
    const auto rec = rvq_decode(rvq_encode(train[0], codec), codec);
    for (size_t i = 0; i < x.size(); ++i) {
        REQUIRE(std::abs(rec.samples[i] - x[i]) < 1e-6);
    }

    // One training frame repeated encodes to a constant index.
    std::vector<double> rep;
    for (int f = 0; f < cfg.num_frames; ++f) {
        rep.insert(rep.end(), x.begin() + 3 * cfg.frame_len, x.begin() + 4 * cfg.frame_len);
    }
    const auto seq = rvq_encode(Waveform{8000, rep}, codec);
    const auto frames = rvq_frames(Waveform{8000, rep}, cfg);
    const int oracle = brute_nearest(codec.codebooks[0], frames.row(0));
    for (int id : seq.ids) {
        CHECK(id == oracle);
    }
}

TEST_CASE("encode matches brute-force nearest centroid and has fixed length") {
    const auto cfg = small_config(2, 12);
    const auto train = corpus(3, 10, cfg.canvas_len());
    const auto codec = rvq_fit(train, cfg, 11);
    for (int c = 0; c < 2; ++c) {
        CHECK(codec.codebooks[static_cast<size_t>(c)].row(0).isZero(0.0));
    }
    Rng rng(8);
    for (int t = 0; t < 5; ++t) {
        const auto w = random_signal(rng, 200 + rng.below(1000));
        const auto seq = rvq_encode(w, codec);
        REQUIRE(seq.ids.size() == cfg.sequence_len());
        CHECK(seq.source == TokenizerKind::rvq);
        const auto frames = rvq_frames(w, cfg);
        for (int f = 0; f < cfg.num_frames; ++f) {
            Eigen::RowVectorXd residual = frames.row(f);
            for (int s = 0; s < cfg.num_stages; ++s) {
                const auto& cb = codec.codebooks[static_cast<size_t>(s)];
                const int got = seq.ids[static_cast<size_t>(f * cfg.num_stages + s)];
                const double d_got = (cb.row(got) - residual).squaredNorm();
                const double d_best = (cb.row(brute_nearest(cb, residual)) - residual).squaredNorm();
                CHECK(d_got <= d_best + 1e-9);
                residual -= cb.row(got);
            }
        }
    }
}

TEST_CASE("silence encodes to the zero centroid and decodes to silence") {
    const auto cfg = small_config(2, 10);
    const auto codec = rvq_fit(corpus(4, 6, cfg.canvas_len()), cfg, 2);
    const auto seq = rvq_encode(Waveform::silence(100), codec);
    for (int id : seq.ids) {
        CHECK(id == brute_nearest(codec.codebooks[0], Eigen::RowVectorXd::Zero(cfg.frame_len)));
        CHECK(id == 0);
    }
    CHECK(peak(rvq_decode(seq, codec)) == 0.0);
}

TEST_CASE("residual energy never increases across stages") {
    const auto cfg = small_config(4, 16);
    const auto train = corpus(5, 12, cfg.canvas_len());
    const auto codec = rvq_fit(train, cfg, 3);
    const auto held = corpus(6, 5, cfg.canvas_len());
    for (const auto& w : held) {
        const auto e = rvq_residual_energies(w, codec);
        for (Eigen::Index f = 0; f < e.rows(); ++f) {
            for (Eigen::Index s = 1; s < e.cols(); ++s) {
                CHECK(e(f, s) <= e(f, s - 1));
            }
        }
    }
}

TEST_CASE("held-out reconstruction error is non-increasing in stage count") {
    const auto train = corpus(10, 20, small_config(1, 16).canvas_len());
    const auto held = corpus(20, 20, small_config(1, 16).canvas_len());
    double last = 1e300;
    for (int stages : {1, 2, 4}) {
        const auto codec = rvq_fit(train, small_config(stages, 16), 9);
        const double err = mean_relative_error(held, codec);
        CHECK(err <= last);
        last = err;
    }
}

TEST_CASE("fit is deterministic and serialization is bit-exact") {
    const auto cfg = small_config(2, 8);
    const auto train = corpus(12, 4, cfg.canvas_len());
    const auto a = rvq_fit(train, cfg, 5);
    const auto b = rvq_fit(train, cfg, 5);
    CHECK(a == b);
    const auto path = std::filesystem::temp_directory_path() / "haptix_test_codec.bin";
    save_codec(a, path);
    CHECK(load_codec(path) == a);
    std::filesystem::remove(path);
}

TEST_CASE("degenerate corpus and error paths") {
    auto cfg = small_config(1, 8);
    const std::vector<Waveform> flat{Waveform::silence(cfg.canvas_len())};
    const auto codec = rvq_fit(flat, cfg, 1);
    CHECK(codec.degenerate);
    for (int id : rvq_encode(flat[0], codec).ids) {
        CHECK(id == 0);
    }

    cfg.codebook_size = 1000;
    CHECK_THROWS(rvq_fit(flat, cfg, 1));
    CHECK_THROWS(rvq_fit(std::span<const Waveform>{}, small_config(1, 8), 1));

    RvqCodec untrained;
    untrained.config = small_config(1, 8);
    CHECK_THROWS(rvq_encode(flat[0], untrained));

    HapticTokenSequence bad{TokenizerKind::rvq, std::vector<int>(cfg.num_frames, 99)};
    const auto trained = rvq_fit(corpus(2, 3, small_config(1, 8).canvas_len()), small_config(1, 8), 1);
    CHECK_THROWS(rvq_decode(bad, trained));
}

TEST_CASE("k-means with k equal to the point count recovers every point") {
    Rng rng(21);
    RowMatrix data = RowMatrix::Zero(9, 5);
    for (Eigen::Index i = 1; i < 9; ++i) {
        for (Eigen::Index j = 0; j < 5; ++j) {
            data(i, j) = rng.normal();
        }
    }
    const auto km = kmeans_pinned_zero(data, 9, 25, 4);
    std::set<int> used(km.assignment.begin(), km.assignment.end());
    CHECK(used.size() == 9);
    for (Eigen::Index i = 0; i < 9; ++i) {
        CHECK((km.centroids.row(km.assignment[static_cast<size_t>(i)]) - data.row(i)).norm() < 1e-12);
    }
}
