#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sws/tensor.hpp"

namespace sws {

/// Immutable labelled image set, images in [0, 1], stored N x C x H x W.
struct Dataset {
    std::vector<float> images;
    std::vector<int> labels;
    std::size_t channels = 1;
    std::size_t height = 0;
    std::size_t width = 0;
    int classes = 0;
    std::string split = "full";
    std::uint64_t content_hash = 0;

    std::size_t size() const { return labels.size(); }
    std::size_t sample_numel() const { return channels * height * width; }
    void validate() const;
};

/// FNV-1a over the dimensions (u64 LE), the float32 pixels and the int32 labels.
std::uint64_t content_hash(const Dataset& data);

/// IDX pair (MNIST layout). classes == 0 infers max(label) + 1.
Dataset load_idx(const std::string& images_path, const std::string& labels_path, int classes = 0);

/// Writes an IDX pair; pixels are quantized to bytes (used for fixtures).
void write_idx(const std::string& images_path, const std::string& labels_path, std::size_t count, std::size_t rows,
               std::size_t cols, const std::vector<std::uint8_t>& pixels, const std::vector<std::uint8_t>& labels);

/// Exact pixel value of the synthetic task before 32-bit storage.
double synthetic_pixel(int label, std::size_t row, std::size_t col, int classes, int size, double noise);

/// Sample t has label t mod K and a K-dependent 2D grating plus uniform
/// noise from SplitMix64(seed ^ t), one draw per pixel in row-major order.
Dataset make_synthetic(int count, int classes, int size, std::uint64_t seed);

/// Seeded permutation then prefix split into (train, val).
std::pair<Dataset, Dataset> split(const Dataset& data, double train_fraction, std::uint64_t seed);

Dataset subset(const Dataset& data, const std::vector<std::size_t>& indices, std::string name);

struct Batch {
    std::vector<std::size_t> indices;  // positions in the source dataset
    Tensor images;
    std::vector<int> labels;
};

Batch make_batch(const Dataset& data, const std::vector<std::size_t>& indices);

/// Fisher-Yates over 0..n-1 driven by SplitMix64(seed).
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

/// Deterministic batch sequence; the final short batch is kept.
class BatchSequence {
public:
    BatchSequence(const Dataset& data, std::size_t batch_size, std::optional<std::uint64_t> shuffle_seed);

    std::size_t size() const { return groups_.size(); }
    const std::vector<std::size_t>& indices(std::size_t i) const { return groups_.at(i); }
    Batch operator[](std::size_t i) const { return make_batch(*data_, groups_.at(i)); }

    class iterator {
    public:
        iterator(const BatchSequence* seq, std::size_t pos) : seq_(seq), pos_(pos) {}
        Batch operator*() const { return (*seq_)[pos_]; }
        iterator& operator++() {
            ++pos_;
            return *this;
        }
        bool operator!=(const iterator& other) const { return pos_ != other.pos_; }

    private:
        const BatchSequence* seq_;
        std::size_t pos_;
    };
    iterator begin() const { return {this, 0}; }
    iterator end() const { return {this, groups_.size()}; }

private:
    const Dataset* data_;
    std::vector<std::vector<std::size_t>> groups_;
};

inline BatchSequence batch_iter(const Dataset& data, std::size_t batch_size,
                                std::optional<std::uint64_t> shuffle_seed = std::nullopt) {
    return BatchSequence(data, batch_size, shuffle_seed);
}

}  // namespace sws
