#pragma once

#include "haptix/signal.hpp"
#include "haptix/tokens.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace haptix {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct RvqConfig {
    int sample_rate = kDefaultSampleRate;
    int frame_len = 58;
    int hop_len = 58;
    // Frames per signal. Every input is padded/truncated to the canvas that
    // exactly holds this many frames.
    int num_frames = 1379;
    int num_stages = 1;
    int codebook_size = 1024;
    int kmeans_iters = 25;
    // Training frames are subsampled (deterministically) above this count.
    int max_training_frames = 32768;

    size_t canvas_len() const {
        return static_cast<size_t>(num_frames - 1) * static_cast<size_t>(hop_len) + static_cast<size_t>(frame_len);
    }
    // Token sequence length: num_stages * num_frames.
    size_t sequence_len() const { return static_cast<size_t>(num_stages) * static_cast<size_t>(num_frames); }

    void validate() const;
};

// Residual vector quantizer over raw sample frames. Centroid 0 of every stage
// is the zero vector.
struct RvqCodec {
    RvqConfig config;
    std::vector<RowMatrix> codebooks;  // num_stages x (codebook_size x frame_len)
    bool trained = false;
    bool degenerate = false;  // fewer distinct training vectors than centroids at some stage
    uint64_t seed = 0;

    bool operator==(const RvqCodec& o) const;
};

struct KMeansResult {
    RowMatrix centroids;
    std::vector<int> assignment;
    bool degenerate = false;
};

// Lloyd's k-means with k-means++ seeding. Centroid 0 is pinned to the zero
// vector and never moves. Empty clusters are re-seeded from the point farthest
// from its centroid.
KMeansResult kmeans_pinned_zero(const RowMatrix& data, int k, int iterations, uint64_t seed);

// Frames of w after padding/truncation to the codec canvas (num_frames x frame_len).
RowMatrix rvq_frames(const Waveform& w, const RvqConfig& cfg);

RvqCodec rvq_fit(std::span<const Waveform> corpus, const RvqConfig& cfg, uint64_t seed);

// Frame-major layout: token[f * num_stages + s] is stage s of frame f.
HapticTokenSequence rvq_encode(const Waveform& w, const RvqCodec& codec);
Waveform rvq_decode(const HapticTokenSequence& tokens, const RvqCodec& codec);

// Per-frame residual energies after each stage (num_frames x (num_stages + 1));
// column 0 is the raw frame energy.
RowMatrix rvq_residual_energies(const Waveform& w, const RvqCodec& codec);

void save_codec(const RvqCodec& codec, const std::filesystem::path& path);
RvqCodec load_codec(const std::filesystem::path& path);

} // namespace haptix
