#include "sws/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "sws/error.hpp"
#include "sws/rng.hpp"

namespace sws {

namespace {

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset, const std::string& path) {
    if (offset + 4 > bytes.size()) throw FormatError(path + ": truncated IDX header");
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void put_be32(std::ofstream& out, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                       static_cast<char>(v)};
    out.write(b, 4);
}

}  // namespace

void Dataset::validate() const {
    if (labels.empty()) throw ValidationError("dataset '" + split + "' is empty");
    if (images.size() != labels.size() * sample_numel()) throw ValidationError("dataset image buffer size mismatch");
    for (int y : labels) {
        if (y < 0 || y >= classes) throw ValidationError("label " + std::to_string(y) + " outside [0, " +
                                                         std::to_string(classes) + ")");
    }
}

std::uint64_t content_hash(const Dataset& data) {
    Fnv1a h;
    for (std::uint64_t dim : {std::uint64_t{data.size()}, std::uint64_t{data.channels}, std::uint64_t{data.height},
                              std::uint64_t{data.width}}) {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(dim >> (8 * i));
        h.update(b, 8);
    }
    for (float v : data.images) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        unsigned char b[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                              static_cast<unsigned char>(bits >> 16), static_cast<unsigned char>(bits >> 24)};
        h.update(b, 4);
    }
    for (int y : data.labels) {
        const auto bits = static_cast<std::uint32_t>(y);
        unsigned char b[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                              static_cast<unsigned char>(bits >> 16), static_cast<unsigned char>(bits >> 24)};
        h.update(b, 4);
    }
    return h.digest();
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path, int classes) {
    const auto img = read_file(images_path);
    const auto lab = read_file(labels_path);
    const auto img_magic = read_be32(img, 0, images_path);
    if (img_magic != kIdxImages) {
        throw FormatError(images_path + ": bad IDX image magic " + std::to_string(img_magic));
    }
    const auto lab_magic = read_be32(lab, 0, labels_path);
    if (lab_magic != kIdxLabels) {
        throw FormatError(labels_path + ": bad IDX label magic " + std::to_string(lab_magic));
    }
    const std::size_t n = read_be32(img, 4, images_path);
    const std::size_t rows = read_be32(img, 8, images_path);
    const std::size_t cols = read_be32(img, 12, images_path);
    const std::size_t n_labels = read_be32(lab, 4, labels_path);
    if (n != n_labels) {
        throw FormatError("IDX count mismatch: " + std::to_string(n) + " images vs " + std::to_string(n_labels) +
                          " labels");
    }
    if (n == 0 || rows == 0 || cols == 0) throw FormatError(images_path + ": empty IDX image set");
    if (img.size() < 16 + n * rows * cols) throw FormatError(images_path + ": truncated IDX image payload");
    if (lab.size() < 8 + n) throw FormatError(labels_path + ": truncated IDX label payload");

    Dataset d;
    d.channels = 1;
    d.height = rows;
    d.width = cols;
    d.images.resize(n * rows * cols);
    for (std::size_t i = 0; i < d.images.size(); ++i) d.images[i] = static_cast<float>(img[16 + i]) / 255.0f;
    d.labels.resize(n);
    int max_label = 0;
    for (std::size_t i = 0; i < n; ++i) {
        d.labels[i] = lab[8 + i];
        max_label = std::max(max_label, d.labels[i]);
    }
    d.classes = classes > 0 ? classes : max_label + 1;
    d.validate();
    d.content_hash = content_hash(d);
    return d;
}

void write_idx(const std::string& images_path, const std::string& labels_path, std::size_t count, std::size_t rows,
               std::size_t cols, const std::vector<std::uint8_t>& pixels, const std::vector<std::uint8_t>& labels) {
    if (pixels.size() != count * rows * cols || labels.size() != count) {
        throw ValidationError("write_idx: buffer sizes do not match dimensions");
    }
    std::ofstream img(images_path, std::ios::binary);
    std::ofstream lab(labels_path, std::ios::binary);
    if (!img || !lab) throw IoError("cannot write IDX files");
    put_be32(img, kIdxImages);
    put_be32(img, static_cast<std::uint32_t>(count));
    put_be32(img, static_cast<std::uint32_t>(rows));
    put_be32(img, static_cast<std::uint32_t>(cols));
    img.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    put_be32(lab, kIdxLabels);
    put_be32(lab, static_cast<std::uint32_t>(count));
    lab.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

double synthetic_pixel(int label, std::size_t row, std::size_t col, int classes, int size, double noise) {
    const double fi = 1.0 + label;
    const double fj = 1.0 + (3 * label) % classes;
    const double phase = 2.0 * std::numbers::pi * (fi * static_cast<double>(row) + fj * static_cast<double>(col)) /
                         static_cast<double>(size);
    const double v = 0.5 + 0.35 * std::sin(phase) + 0.15 * noise;
    return std::clamp(v, 0.0, 1.0);
}

Dataset make_synthetic(int count, int classes, int size, std::uint64_t seed) {
    if (count < 1 || classes < 1 || size < 1) throw ValidationError("synthetic dataset needs n, K, S >= 1");
    const auto s = static_cast<std::size_t>(size);
    Dataset d;
    d.channels = 1;
    d.height = s;
    d.width = s;
    d.classes = classes;
    d.images.resize(static_cast<std::size_t>(count) * s * s);
    d.labels.resize(static_cast<std::size_t>(count));
    for (std::size_t t = 0; t < d.labels.size(); ++t) {
        const int label = static_cast<int>(t % static_cast<std::size_t>(classes));
        d.labels[t] = label;
        SplitMix64 rng(seed ^ static_cast<std::uint64_t>(t));
        float* px = d.images.data() + t * s * s;
        for (std::size_t i = 0; i < s; ++i)
            for (std::size_t j = 0; j < s; ++j) {
                const double u = 2.0 * rng.uniform() - 1.0;
                px[i * s + j] = static_cast<float>(synthetic_pixel(label, i, j, classes, size, u));
            }
    }
    d.content_hash = content_hash(d);
    return d;
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    SplitMix64 rng(seed);
    for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[static_cast<std::size_t>(rng.below(i))]);
    return p;
}

Dataset subset(const Dataset& data, const std::vector<std::size_t>& indices, std::string name) {
    Dataset d;
    d.channels = data.channels;
    d.height = data.height;
    d.width = data.width;
    d.classes = data.classes;
    d.split = std::move(name);
    const std::size_t k = data.sample_numel();
    d.images.resize(indices.size() * k);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= data.size()) throw ValidationError("subset index out of range");
        std::copy_n(data.images.begin() + static_cast<std::ptrdiff_t>(indices[i] * k), k,
                    d.images.begin() + static_cast<std::ptrdiff_t>(i * k));
        d.labels.push_back(data.labels[indices[i]]);
    }
    d.content_hash = content_hash(d);
    return d;
}

std::pair<Dataset, Dataset> split(const Dataset& data, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ValidationError("train fraction must be in (0, 1)");
    const auto perm = seeded_permutation(data.size(), seed);
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(data.size())));
    if (n_train == 0 || n_train >= data.size()) throw ValidationError("split leaves one side empty");
    std::vector<std::size_t> train(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::size_t> val(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
    return {subset(data, train, "train"), subset(data, val, "val")};
}

Batch make_batch(const Dataset& data, const std::vector<std::size_t>& indices) {
    Batch b;
    b.indices = indices;
    const std::size_t k = data.sample_numel();
    std::vector<float> px(indices.size() * k);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        std::copy_n(data.images.begin() + static_cast<std::ptrdiff_t>(indices[i] * k), k,
                    px.begin() + static_cast<std::ptrdiff_t>(i * k));
        b.labels.push_back(data.labels.at(indices[i]));
    }
    b.images = Tensor::from_values({indices.size(), data.channels, data.height, data.width}, std::move(px));
    return b;
}

BatchSequence::BatchSequence(const Dataset& data, std::size_t batch_size, std::optional<std::uint64_t> shuffle_seed)
    : data_(&data) {
    if (batch_size < 1) throw ValidationError("batch size must be >= 1");
    std::vector<std::size_t> order;
    if (shuffle_seed) {
        order = seeded_permutation(data.size(), *shuffle_seed);
    } else {
        order.resize(data.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    }
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t end = std::min(order.size(), start + batch_size);
        groups_.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
}

}  // namespace sws
