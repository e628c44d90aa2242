#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "sws/rng.hpp"
#include "sws/tensor.hpp"
#include "sws/vit.hpp"

namespace testing {

template <class T = double>
sws::BasicTensor<T> random_tensor(sws::Shape shape, std::uint64_t seed, double lo = -2.0, double hi = 2.0,
                                  bool requires_grad = true) {
    sws::SplitMix64 rng(seed);
    std::vector<T> v(sws::shape_numel(shape));
    for (auto& x : v) x = static_cast<T>(lo + (hi - lo) * rng.uniform());
    return sws::BasicTensor<T>::from_values(std::move(shape), std::move(v), requires_grad);
}

template <class T>
bool bit_equal(const sws::BasicTensor<T>& a, const sws::BasicTensor<T>& b) {
    return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(T)) == 0;
}

inline sws::ModelConfig tiny_config(int depth = 4, int width = 16) {
    sws::ModelConfig cfg;
    cfg.image_size = 8;
    cfg.patch_size = 4;
    cfg.channels = 1;
    cfg.depth = depth;
    cfg.width = width;
    cfg.heads = 2;
    cfg.mlp_ratio = 2.0;
    cfg.classes = 3;
    return cfg;
}

inline std::string temp_path(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "sws_unit";
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

}  // namespace testing
