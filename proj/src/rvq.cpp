#include "haptix/rvq.hpp"

#include "haptix/binary_io.hpp"
#include "haptix/rng.hpp"

#include <algorithm>
#include <cstring>
#include <limits>
#include <stdexcept>

namespace haptix {

namespace {

constexpr uint32_t kCodecVersion = 1;
constexpr Eigen::Index kAssignChunk = 4096;

// Nearest centroid per row, squared Euclidean. Candidate search uses the
// ||x||^2 - 2 x.c + ||c||^2 expansion; the winner is then compared exactly
// against centroid 0 (the zero vector) so a greedy step can never increase
// the residual energy because of rounding.
std::vector<int> nearest_centroids(const RowMatrix& x, const RowMatrix& c) {
    const Eigen::VectorXd cnorm = c.rowwise().squaredNorm();
    std::vector<int> out(static_cast<size_t>(x.rows()), 0);
    for (Eigen::Index begin = 0; begin < x.rows(); begin += kAssignChunk) {
        const Eigen::Index n = std::min(kAssignChunk, x.rows() - begin);
        const RowMatrix scores = x.middleRows(begin, n) * c.transpose();
        for (Eigen::Index i = 0; i < n; ++i) {
            Eigen::Index best = 0;
            double best_d = cnorm(0) - 2.0 * scores(i, 0);
            for (Eigen::Index j = 1; j < c.rows(); ++j) {
                const double d = cnorm(j) - 2.0 * scores(i, j);
                if (d < best_d) {
                    best_d = d;
                    best = j;
                }
            }
            if (best != 0) {
                const auto row = x.row(begin + i);
                const double exact = (row - c.row(best)).squaredNorm();
                if (row.squaredNorm() <= exact) {
                    best = 0;
                }
            }
            out[static_cast<size_t>(begin + i)] = static_cast<int>(best);
        }
    }
    return out;
}

void check_trained(const RvqCodec& codec) {
    if (!codec.trained || codec.codebooks.size() != static_cast<size_t>(codec.config.num_stages)) {
        throw std::logic_error("RVQ codec is not trained");
    }
}

} // namespace

void RvqConfig::validate() const {
    if (sample_rate <= 0 || frame_len < 1 || hop_len < 1 || num_frames < 1) {
        throw std::invalid_argument("rvq: sample_rate, frame_len, hop_len and num_frames must be positive");
    }
    if (hop_len > frame_len) {
        throw std::invalid_argument("rvq: hop_len must not exceed frame_len");
    }
    if (num_stages < 1) {
        throw std::invalid_argument("rvq: num_stages must be at least 1");
    }
    if (codebook_size < 2) {
        throw std::invalid_argument("rvq: codebook_size must be at least 2");
    }
    if (kmeans_iters < 0) {
        throw std::invalid_argument("rvq: kmeans_iters must be non-negative");
    }
    if (max_training_frames < codebook_size) {
        throw std::invalid_argument("rvq: max_training_frames must be at least codebook_size");
    }
}

bool RvqCodec::operator==(const RvqCodec& o) const {
    const auto& a = config;
    const auto& b = o.config;
    if (a.sample_rate != b.sample_rate || a.frame_len != b.frame_len || a.hop_len != b.hop_len ||
        a.num_frames != b.num_frames || a.num_stages != b.num_stages || a.codebook_size != b.codebook_size ||
        a.kmeans_iters != b.kmeans_iters || a.max_training_frames != b.max_training_frames) {
        return false;
    }
    if (trained != o.trained || degenerate != o.degenerate || seed != o.seed ||
        codebooks.size() != o.codebooks.size()) {
        return false;
    }
    for (size_t s = 0; s < codebooks.size(); ++s) {
        if (codebooks[s].rows() != o.codebooks[s].rows() || codebooks[s].cols() != o.codebooks[s].cols()) {
            return false;
        }
        // Bitwise comparison; NaN-free by construction.
        if (std::memcmp(codebooks[s].data(), o.codebooks[s].data(),
                        static_cast<size_t>(codebooks[s].size()) * sizeof(double)) != 0) {
            return false;
        }
    }
    return true;
}

KMeansResult kmeans_pinned_zero(const RowMatrix& data, int k, int iterations, uint64_t seed) {
    const Eigen::Index n = data.rows();
    const Eigen::Index dim = data.cols();
    if (n == 0 || k < 1) {
        throw std::invalid_argument("k-means needs data and at least one centroid");
    }
    KMeansResult res;
    res.centroids = RowMatrix::Zero(k, dim);
    Rng rng(seed);

    // k-means++ seeding relative to the pinned zero centroid.
    std::vector<double> d2(static_cast<size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        d2[static_cast<size_t>(i)] = data.row(i).squaredNorm();
    }
    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (double v : d2) {
            total += v;
        }
        Eigen::Index pick = 0;
        if (total <= 0.0) {
            res.degenerate = true;
            pick = static_cast<Eigen::Index>(rng.below(static_cast<uint64_t>(n)));
        } else {
            const double r = rng.uniform() * total;
            double cum = 0.0;
            pick = -1;
            Eigen::Index last_positive = 0;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double v = d2[static_cast<size_t>(i)];
                if (v <= 0.0) {
                    continue;
                }
                last_positive = i;
                cum += v;
                if (r < cum) {
                    pick = i;
                    break;
                }
            }
            if (pick < 0) {
                pick = last_positive;
            }
        }
        res.centroids.row(c) = data.row(pick);
        for (Eigen::Index i = 0; i < n; ++i) {
            auto& v = d2[static_cast<size_t>(i)];
            v = std::min(v, (data.row(i) - res.centroids.row(c)).squaredNorm());
        }
    }

    res.assignment = nearest_centroids(data, res.centroids);
    for (int it = 0; it < iterations; ++it) {
        RowMatrix sums = RowMatrix::Zero(k, dim);
        std::vector<Eigen::Index> counts(static_cast<size_t>(k), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            const int a = res.assignment[static_cast<size_t>(i)];
            sums.row(a) += data.row(i);
            ++counts[static_cast<size_t>(a)];
        }
        std::vector<int> empty;
        for (int c = 1; c < k; ++c) {
            if (counts[static_cast<size_t>(c)] > 0) {
                res.centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<size_t>(c)]);
            } else {
                empty.push_back(c);
            }
        }
        if (!empty.empty()) {
            std::vector<double> dist(static_cast<size_t>(n));
            for (Eigen::Index i = 0; i < n; ++i) {
                dist[static_cast<size_t>(i)] =
                    (data.row(i) - res.centroids.row(res.assignment[static_cast<size_t>(i)])).squaredNorm();
            }
            for (int c : empty) {
                const auto far = std::max_element(dist.begin(), dist.end());
                if (*far <= 0.0) {
                    res.degenerate = true;
                    continue;
                }
                const auto idx = static_cast<Eigen::Index>(far - dist.begin());
                res.centroids.row(c) = data.row(idx);
                *far = 0.0;
            }
        }
        auto next = nearest_centroids(data, res.centroids);
        const bool converged = next == res.assignment && empty.empty();
        res.assignment = std::move(next);
        if (converged) {
            break;
        }
    }
    return res;
}

RowMatrix rvq_frames(const Waveform& w, const RvqConfig& cfg) {
    cfg.validate();
    if (w.sample_rate != cfg.sample_rate) {
        throw std::invalid_argument("waveform sample rate does not match the codec");
    }
    const Waveform canvas = pad_or_truncate(w, cfg.canvas_len());
    RowMatrix frames(cfg.num_frames, cfg.frame_len);
    for (int f = 0; f < cfg.num_frames; ++f) {
        const size_t start = static_cast<size_t>(f) * static_cast<size_t>(cfg.hop_len);
        for (int j = 0; j < cfg.frame_len; ++j) {
            frames(f, j) = canvas.samples[start + static_cast<size_t>(j)];
        }
    }
    return frames;
}

RvqCodec rvq_fit(std::span<const Waveform> corpus, const RvqConfig& cfg, uint64_t seed) {
    cfg.validate();
    if (corpus.empty()) {
        throw std::invalid_argument("rvq_fit: empty corpus");
    }
    const size_t per_signal = static_cast<size_t>(cfg.num_frames);
    const size_t total = corpus.size() * per_signal;
    if (total < static_cast<size_t>(cfg.codebook_size)) {
        throw std::invalid_argument("rvq_fit: corpus has fewer frames than codebook entries");
    }

    std::vector<size_t> chosen(total);
    for (size_t i = 0; i < total; ++i) {
        chosen[i] = i;
    }
    Rng rng(seed);
    const auto keep = std::min(total, static_cast<size_t>(cfg.max_training_frames));
    if (keep < total) {
        // Partial Fisher-Yates: the first `keep` slots are a uniform sample.
        for (size_t i = 0; i < keep; ++i) {
            const size_t j = i + static_cast<size_t>(rng.below(total - i));
            std::swap(chosen[i], chosen[j]);
        }
        chosen.resize(keep);
        std::sort(chosen.begin(), chosen.end());
    }

    RowMatrix data(static_cast<Eigen::Index>(chosen.size()), cfg.frame_len);
    size_t cursor = 0;
    for (size_t s = 0; s < corpus.size() && cursor < chosen.size(); ++s) {
        if (chosen[cursor] / per_signal != s) {
            continue;
        }
        const RowMatrix frames = rvq_frames(corpus[s], cfg);
        while (cursor < chosen.size() && chosen[cursor] / per_signal == s) {
            data.row(static_cast<Eigen::Index>(cursor)) =
                frames.row(static_cast<Eigen::Index>(chosen[cursor] % per_signal));
            ++cursor;
        }
    }

    RvqCodec codec;
    codec.config = cfg;
    codec.seed = seed;
    for (int stage = 0; stage < cfg.num_stages; ++stage) {
        auto km = kmeans_pinned_zero(data, cfg.codebook_size, cfg.kmeans_iters, seed + 1 + static_cast<uint64_t>(stage));
        codec.degenerate = codec.degenerate || km.degenerate;
        for (Eigen::Index i = 0; i < data.rows(); ++i) {
            data.row(i) -= km.centroids.row(km.assignment[static_cast<size_t>(i)]);
        }
        codec.codebooks.push_back(std::move(km.centroids));
    }
    codec.trained = true;
    return codec;
}

HapticTokenSequence rvq_encode(const Waveform& w, const RvqCodec& codec) {
    check_trained(codec);
    const auto& cfg = codec.config;
    RowMatrix residual = rvq_frames(w, cfg);
    HapticTokenSequence seq{TokenizerKind::rvq, std::vector<int>(cfg.sequence_len(), 0)};
    for (int s = 0; s < cfg.num_stages; ++s) {
        const auto& book = codec.codebooks[static_cast<size_t>(s)];
        const auto idx = nearest_centroids(residual, book);
        for (int f = 0; f < cfg.num_frames; ++f) {
            const int c = idx[static_cast<size_t>(f)];
            seq.ids[static_cast<size_t>(f) * static_cast<size_t>(cfg.num_stages) + static_cast<size_t>(s)] = c;
            residual.row(f) -= book.row(c);
        }
    }
    return seq;
}

Waveform rvq_decode(const HapticTokenSequence& tokens, const RvqCodec& codec) {
    check_trained(codec);
    const auto& cfg = codec.config;
    if (tokens.ids.size() != cfg.sequence_len()) {
        throw std::invalid_argument("rvq_decode: token sequence has the wrong length");
    }
    std::vector<double> acc(cfg.canvas_len(), 0.0);
    std::vector<double> cover(cfg.canvas_len(), 0.0);
    Eigen::RowVectorXd frame(cfg.frame_len);
    for (int f = 0; f < cfg.num_frames; ++f) {
        frame.setZero();
        for (int s = 0; s < cfg.num_stages; ++s) {
            const int c = tokens.ids[static_cast<size_t>(f) * static_cast<size_t>(cfg.num_stages) + static_cast<size_t>(s)];
            if (c < 0 || c >= cfg.codebook_size) {
                throw std::out_of_range("rvq_decode: codebook index out of range");
            }
            frame += codec.codebooks[static_cast<size_t>(s)].row(c);
        }
        const size_t start = static_cast<size_t>(f) * static_cast<size_t>(cfg.hop_len);
        for (int j = 0; j < cfg.frame_len; ++j) {
            acc[start + static_cast<size_t>(j)] += frame(j);
            cover[start + static_cast<size_t>(j)] += 1.0;
        }
    }
    Waveform out{cfg.sample_rate, std::move(acc)};
    for (size_t i = 0; i < out.size(); ++i) {
        out.samples[i] = std::clamp(out.samples[i] / cover[i], -1.0, 1.0);
    }
    return out;
}

RowMatrix rvq_residual_energies(const Waveform& w, const RvqCodec& codec) {
    check_trained(codec);
    const auto& cfg = codec.config;
    RowMatrix residual = rvq_frames(w, cfg);
    const auto seq = rvq_encode(w, codec);
    RowMatrix energies(cfg.num_frames, cfg.num_stages + 1);
    energies.col(0) = residual.rowwise().squaredNorm();
    for (int s = 0; s < cfg.num_stages; ++s) {
        for (int f = 0; f < cfg.num_frames; ++f) {
            const int c = seq.ids[static_cast<size_t>(f) * static_cast<size_t>(cfg.num_stages) + static_cast<size_t>(s)];
            residual.row(f) -= codec.codebooks[static_cast<size_t>(s)].row(c);
        }
        energies.col(s + 1) = residual.rowwise().squaredNorm();
    }
    return energies;
}

void save_codec(const RvqCodec& codec, const std::filesystem::path& path) {
    check_trained(codec);
    BinaryWriter w;
    w.bytes("HXRVQ\0\0\0", 8);
    w.u32(kCodecVersion);
    const auto& c = codec.config;
    w.i32(c.sample_rate);
    w.i32(c.frame_len);
    w.i32(c.hop_len);
    w.i32(c.num_frames);
    w.i32(c.num_stages);
    w.i32(c.codebook_size);
    w.i32(c.kmeans_iters);
    w.i32(c.max_training_frames);
    w.u64(codec.seed);
    w.u8(codec.degenerate ? 1 : 0);
    for (const auto& book : codec.codebooks) {
        w.f64s(book.data(), static_cast<size_t>(book.size()));
    }
    w.save(path);
}

RvqCodec load_codec(const std::filesystem::path& path) {
    auto r = BinaryReader::load(path);
    r.expect_magic(std::string("HXRVQ\0\0\0", 8));
    const uint32_t version = r.u32();
    if (version != kCodecVersion) {
        throw std::runtime_error("unsupported codec version " + std::to_string(version));
    }
    RvqCodec codec;
    auto& c = codec.config;
    c.sample_rate = r.i32();
    c.frame_len = r.i32();
    c.hop_len = r.i32();
    c.num_frames = r.i32();
    c.num_stages = r.i32();
    c.codebook_size = r.i32();
    c.kmeans_iters = r.i32();
    c.max_training_frames = r.i32();
    c.validate();
    codec.seed = r.u64();
    codec.degenerate = r.u8() != 0;
    for (int s = 0; s < c.num_stages; ++s) {
        RowMatrix book(c.codebook_size, c.frame_len);
        r.f64s(book.data(), static_cast<size_t>(book.size()));
        codec.codebooks.push_back(std::move(book));
    }
    if (!r.at_end()) {
        throw std::runtime_error("trailing bytes in codec file");
    }
    codec.trained = true;
    return codec;
}

} // namespace haptix
