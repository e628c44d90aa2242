#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sws/rng.hpp"
#include "sws/tensor.hpp"

namespace sws {

struct ModelConfig {
    int image_size = 16;
    int patch_size = 4;
    int channels = 1;
    int depth = 4;
    int width = 32;
    int heads = 4;
    double mlp_ratio = 4.0;
    int classes = 10;

    void validate() const;
    std::size_t num_patches() const;
    std::size_t tokens() const { return num_patches() + 1; }
    std::size_t patch_dim() const;
    std::size_t mlp_hidden() const;

    bool operator==(const ModelConfig&) const = default;
};

/// Parameters of one pre-LN transformer layer (MSA + MLP).
template <class T>
struct LayerParams {
    BasicTensor<T> norm1_gamma, norm1_beta;
    BasicTensor<T> qkv_weight, qkv_bias;    // [d x 3d], [3d]
    BasicTensor<T> proj_weight, proj_bias;  // [d x d], [d]
    BasicTensor<T> norm2_gamma, norm2_beta;
    BasicTensor<T> fc1_weight, fc1_bias;    // [d x r*d], [r*d]
    BasicTensor<T> fc2_weight, fc2_bias;    // [r*d x d], [d]

    // Visits (name, tensor) in a fixed order.
    template <class F>
    void for_each(F&& f) {
        f("norm1.gamma", norm1_gamma);
        f("norm1.beta", norm1_beta);
        f("attn.qkv.weight", qkv_weight);
        f("attn.qkv.bias", qkv_bias);
        f("attn.proj.weight", proj_weight);
        f("attn.proj.bias", proj_bias);
        f("norm2.gamma", norm2_gamma);
        f("norm2.beta", norm2_beta);
        f("mlp.fc1.weight", fc1_weight);
        f("mlp.fc1.bias", fc1_bias);
        f("mlp.fc2.weight", fc2_weight);
        f("mlp.fc2.bias", fc2_bias);
    }
    template <class F>
    void for_each(F&& f) const {
        const_cast<LayerParams*>(this)->for_each(
            [&](const char* name, BasicTensor<T>& t) { f(name, static_cast<const BasicTensor<T>&>(t)); });
    }

    LayerParams clone() const;
    std::size_t numel() const;
};

inline constexpr std::size_t kTensorsPerLayer = 12;
inline constexpr std::size_t kSharedTensors = 8;

/// A ViT classifier. Layer storage is kept separately from the position
/// list: layer_index[i] names the storage used at depth position i, so tied
/// models hold fewer storages than positions.
template <class T>
struct ModelParams {
    ModelConfig config;
    BasicTensor<T> patch_weight, patch_bias;  // [C*p*p x d], [d]
    BasicTensor<T> cls_token;                 // [1 x d]
    BasicTensor<T> pos_embed;                 // [1+P x d]
    std::vector<LayerParams<T>> layers;
    std::vector<std::size_t> layer_index;
    BasicTensor<T> norm_gamma, norm_beta;
    BasicTensor<T> head_weight, head_bias;  // [d x C], [C]

    std::size_t depth() const { return layer_index.size(); }
    const LayerParams<T>& at_position(std::size_t position) const { return layers.at(layer_index.at(position)); }
    LayerParams<T>& at_position(std::size_t position) { return layers.at(layer_index.at(position)); }
    bool is_tied() const { return layers.size() != layer_index.size(); }

    // Non-layer components, fixed order.
    template <class F>
    void for_each_shared(F&& f) {
        f("patch_embed.weight", patch_weight);
        f("patch_embed.bias", patch_bias);
        f("cls_token", cls_token);
        f("pos_embed", pos_embed);
        f("norm.gamma", norm_gamma);
        f("norm.beta", norm_beta);
        f("head.weight", head_weight);
        f("head.bias", head_bias);
    }

    // Every distinct storage once: shared components then "layers.<k>.<name>".
    template <class F>
    void for_each_unique(F&& f) {
        for_each_shared([&](const char* name, BasicTensor<T>& t) { f(std::string(name), t); });
        for (std::size_t k = 0; k < layers.size(); ++k) {
            layers[k].for_each(
                [&](const char* name, BasicTensor<T>& t) { f("layers." + std::to_string(k) + "." + name, t); });
        }
    }

    std::vector<BasicTensor<T>> unique_tensors();
    void set_requires_grad(bool on);
    void zero_grad();
    void validate() const;
};

using Model = ModelParams<float>;

template <class T>
LayerParams<T> init_layer(const ModelConfig& cfg, SplitMix64& rng);

/// Untied model; truncated-normal(0.02) weights and embeddings, zero biases,
/// unit/zero LN affine.
template <class T>
ModelParams<T> build_model(const ModelConfig& cfg, std::uint64_t seed);

/// Model whose position i uses storage layer_index[i]; storages are
/// 0..max(layer_index) and are initialized in storage order.
template <class T>
ModelParams<T> build_indexed_model(const ModelConfig& cfg, std::vector<std::size_t> layer_index, std::uint64_t seed);

/// images[B x C x H x W] -> logits[B x classes]
template <class T>
BasicTensor<T> forward_logits(const ModelParams<T>& params, const BasicTensor<T>& images);

/// Residual stream [B x tokens x d] after the embedding (entry 0) and after
/// every layer position (entries 1..depth). Not recorded on the graph.
template <class T>
std::vector<BasicTensor<T>> forward_activations(const ModelParams<T>& params, const BasicTensor<T>& images);

/// unique_only counts aliased storages once; otherwise layers count per position.
template <class T>
std::size_t count_params(const ModelParams<T>& params, bool unique_only);

/// Arithmetic count from shapes alone.
std::size_t layer_param_count(const ModelConfig& cfg);
std::size_t shared_param_count(const ModelConfig& cfg);

/// Deep copy that keeps the aliasing pattern.
template <class T>
ModelParams<T> clone_model(const ModelParams<T>& params);

/// Deep copy with independent storage at every position.
template <class T>
ModelParams<T> untie(const ModelParams<T>& params);

template <class To, class From>
ModelParams<To> cast_model(const ModelParams<From>& params);

}  // namespace sws
