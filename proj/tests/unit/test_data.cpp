#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "helpers.hpp"
#include "sws/data.hpp"
#include "sws/error.hpp"
#include "sws/train.hpp"

using namespace sws;

namespace {

void write_fixture(const std::string& img, const std::string& lab, std::size_t n = 4) {
    std::vector<std::uint8_t> pixels(n * 3 * 2), labels(n);
    for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<std::uint8_t>(i * 11);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<std::uint8_t>(i % 3);
    write_idx(img, lab, n, 3, 2, pixels, labels);
}

std::vector<char> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void dump(const std::string& path, const std::vector<char>& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), std::streamsize(bytes.size()));
}

}  // namespace

TEST_CASE("IDX fixture loads") {
    const auto img = testing::temp_path("fx-images.idx"), lab = testing::temp_path("fx-labels.idx");
    write_fixture(img, lab);
    const auto d = load_idx(img, lab);
    CHECK(d.size() == 4);
    CHECK(d.height == 3);
    CHECK(d.width == 2);
    CHECK(d.channels == 1);
    CHECK(d.classes == 3);
    CHECK(d.images[1] == 11.0f / 255.0f);
    CHECK(d.labels == std::vector<int>{0, 1, 2, 0});
    CHECK(load_idx(img, lab).content_hash == d.content_hash);
    CHECK(load_idx(img, lab, 10).classes == 10);
}

TEST_CASE("IDX errors") {
    const auto img = testing::temp_path("bad-images.idx"), lab = testing::temp_path("bad-labels.idx");
    write_fixture(img, lab);
    auto bytes = slurp(img);

    auto magic = bytes;
    magic[3] = 0x02;
    dump(img, magic);
    CHECK_THROWS_AS(load_idx(img, lab), FormatError);

    auto truncated = bytes;
    truncated.pop_back();
    dump(img, truncated);
    CHECK_THROWS_AS(load_idx(img, lab), FormatError);

    dump(img, bytes);
    const auto lab5 = testing::temp_path("bad-labels5.idx"), img5 = testing::temp_path("bad-images5.idx");
    write_fixture(img5, lab5, 5);
    CHECK_THROWS_AS(load_idx(img, lab5), FormatError);

    CHECK_THROWS_AS(load_idx(testing::temp_path("missing.idx"), lab), IoError);
    CHECK_NOTHROW(load_idx(img, lab));
}

TEST_CASE("synthetic data is deterministic and follows the formula") {
    const auto a = make_synthetic(50, 10, 16, 3);
    const auto b = make_synthetic(50, 10, 16, 3);
    CHECK(a.images == b.images);
    CHECK(a.labels == b.labels);
    CHECK(a.content_hash == b.content_hash);
    CHECK(make_synthetic(50, 10, 16, 4).content_hash != a.content_hash);

    // Independent evaluation of sample t = 13 (label 3), pixel (5, 9).
    const std::uint64_t t = 13;
    SplitMix64 rng(3 ^ t);
    double u = 0;
    for (int k = 0; k <= 5 * 16 + 9; ++k) u = 2.0 * (double(rng.next() >> 11) / 9007199254740992.0) - 1.0;
    const int c = 3;
    const double pi = std::acos(-1.0);
    double want = 0.5 + 0.35 * std::sin(2 * pi * ((1 + c) * 5 + (1 + (3 * c) % 10) * 9) / 16.0) + 0.15 * u;
    want = std::clamp(want, 0.0, 1.0);
    CHECK(std::abs(double(a.images[13 * 256 + 5 * 16 + 9]) - want) < 1e-7);
    CHECK(a.labels[13] == 3);
}

TEST_CASE("synthetic class counts differ by at most one") {
    const auto d = make_synthetic(103, 10, 8, 1);
    std::vector<int> counts(10);
    for (int y : d.labels) ++counts[y];
    CHECK(*std::max_element(counts.begin(), counts.end()) - *std::min_element(counts.begin(), counts.end()) <= 1);
    for (float v : d.images) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
}

TEST_CASE("split is seeded, disjoint and exhaustive") {
    const auto d = make_synthetic(10, 3, 4, 1);
    const auto [tr, va] = split(d, 0.5, 7);
    CHECK(tr.size() == 5);
    CHECK(va.size() == 5);
    const auto [tr2, va2] = split(d, 0.5, 7);
    CHECK(tr.images == tr2.images);
    CHECK(tr.content_hash != va.content_hash);

    // Samples are unique here, so pixel rows identify them.
    std::set<std::vector<float>> all;
    for (const auto* part : {&tr, &va}) {
        for (std::size_t i = 0; i < part->size(); ++i) {
            all.insert(std::vector<float>(part->images.begin() + i * 16, part->images.begin() + (i + 1) * 16));
        }
    }
    CHECK(all.size() == 10);
    CHECK_THROWS_AS(split(d, 0.0, 1), ValidationError);
    CHECK_THROWS_AS(split(d, 0.01, 1), ValidationError);
}

TEST_CASE("batches") {
    const auto d = make_synthetic(10, 3, 4, 1);
    const auto seq = batch_iter(d, 4);
    REQUIRE(seq.size() == 3);
    CHECK(seq.indices(0) == std::vector<std::size_t>{0, 1, 2, 3});
    CHECK(seq.indices(2) == std::vector<std::size_t>{8, 9});
    CHECK(seq[2].images.shape() == Shape{2, 1, 4, 4});
    std::size_t n = 0;
    for (const Batch& b : seq) n += b.labels.size();
    CHECK(n == 10);

    const auto s1 = batch_iter(d, 4, 42), s2 = batch_iter(d, 4, 42), s3 = batch_iter(d, 4, 43);
    bool differs = false;
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(s1.indices(i) == s2.indices(i));
        differs = differs || s1.indices(i) != s3.indices(i);
    }
    CHECK(differs);
}

TEST_CASE("a depth-2 tiny ViT learns the synthetic task within five epochs") {
    const auto full = make_synthetic(2000, 10, 16, 1);
    const auto [tr, va] = split(full, 0.8, 2);
    ModelConfig cfg;
    cfg.depth = 2;
    auto model = build_model<float>(cfg, 3);
    TrainConfig tc;
    tc.alpha = 0.0;
    tc.epochs = 5;
    tc.seed = 4;
    const auto metrics = train_model(model, tr, va, tc);
    MESSAGE("depth-2 top-1 after 5 epochs: " << metrics.last().top1);
    CHECK(metrics.last().top1 > 0.8);
}
