#include "sws/vit.hpp"

#include <algorithm>
#include <cmath>

#include "sws/error.hpp"
#include "sws/ops.hpp"

namespace sws {

namespace {

constexpr double kInitStd = 0.02;

template <class T>
BasicTensor<T> normal_tensor(Shape shape, SplitMix64& rng) {
    std::vector<T> values(shape_numel(shape));
    for (auto& v : values) v = static_cast<T>(rng.truncated_normal(kInitStd));
    return BasicTensor<T>::from_values(std::move(shape), std::move(values));
}

template <class T>
BasicTensor<T> constant(std::size_t n, T value) {
    return BasicTensor<T>::full({n}, value);
}

std::size_t u(int v) { return static_cast<std::size_t>(v); }

template <class T>
BasicTensor<T> encoder_layer(const LayerParams<T>& p, const BasicTensor<T>& x, std::size_t heads) {
    const std::size_t d = x.dim(2);
    const T att_scale = T(1) / std::sqrt(static_cast<T>(d / heads));
    auto h = layer_norm(x, p.norm1_gamma, p.norm1_beta);
    auto qkv = linear(h, p.qkv_weight, p.qkv_bias);
    auto q = split_heads(slice_last(qkv, 0, d), heads);
    auto k = split_heads(slice_last(qkv, d, d), heads);
    auto v = split_heads(slice_last(qkv, 2 * d, d), heads);
    auto att = softmax_rows(scale(bmm_nt(q, k), att_scale));
    auto ctx = merge_heads(bmm(att, v), heads);
    auto y = add(x, linear(ctx, p.proj_weight, p.proj_bias));
    auto h2 = layer_norm(y, p.norm2_gamma, p.norm2_beta);
    auto mlp = linear(gelu(linear(h2, p.fc1_weight, p.fc1_bias)), p.fc2_weight, p.fc2_bias);
    return add(y, mlp);
}

template <class T>
BasicTensor<T> embed(const ModelParams<T>& params, const BasicTensor<T>& images) {
    const auto& cfg = params.config;
    if (images.rank() != 4 || images.dim(1) != u(cfg.channels) || images.dim(2) != u(cfg.image_size) ||
        images.dim(3) != u(cfg.image_size)) {
        throw DimensionError("images " + shape_str(images.shape()) + " do not match model input [B x " +
                             std::to_string(cfg.channels) + " x " + std::to_string(cfg.image_size) + " x " +
                             std::to_string(cfg.image_size) + "]");
    }
    auto tokens = linear(patchify(images, u(cfg.patch_size)), params.patch_weight, params.patch_bias);
    return add_broadcast(prepend_token(params.cls_token, tokens), params.pos_embed);
}

template <class T>
BasicTensor<T> head(const ModelParams<T>& params, const BasicTensor<T>& x) {
    auto cls = select_token(layer_norm(x, params.norm_gamma, params.norm_beta), 0);
    return linear(cls, params.head_weight, params.head_bias);
}

template <class To, class From>
BasicTensor<To> cast_leaf(const BasicTensor<From>& t) {
    return tensor_cast<To>(t);
}

}  // namespace

void ModelConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ValidationError("model config: " + msg); };
    if (image_size < 1 || patch_size < 1 || channels < 1 || depth < 1 || width < 1 || heads < 1 || classes < 1)
        fail("all sizes must be positive");
    if (image_size % patch_size) fail("image_size must be divisible by patch_size");
    if (width % heads) fail("width must be divisible by heads");
    if (!(mlp_ratio > 0.0) || mlp_hidden() < 1) fail("mlp_ratio must give a positive hidden width");
}

std::size_t ModelConfig::num_patches() const {
    const std::size_t g = u(image_size / patch_size);
    return g * g;
}

std::size_t ModelConfig::patch_dim() const { return u(channels * patch_size * patch_size); }

std::size_t ModelConfig::mlp_hidden() const {
    return static_cast<std::size_t>(std::llround(mlp_ratio * static_cast<double>(width)));
}

std::size_t layer_param_count(const ModelConfig& cfg) {
    const std::size_t d = u(cfg.width), r = cfg.mlp_hidden();
    return 4 * d + (d * 3 * d + 3 * d) + (d * d + d) + (d * r + r) + (r * d + d);
}

std::size_t shared_param_count(const ModelConfig& cfg) {
    const std::size_t d = u(cfg.width), c = u(cfg.classes);
    return cfg.patch_dim() * d + d + d + cfg.tokens() * d + 2 * d + d * c + c;
}

template <class T>
LayerParams<T> LayerParams<T>::clone() const {
    LayerParams out;
    std::vector<BasicTensor<T>*> dst;
    out.for_each([&](const char*, BasicTensor<T>& t) { dst.push_back(&t); });
    std::size_t i = 0;
    for_each([&](const char*, const BasicTensor<T>& t) { *dst[i++] = t.clone(); });
    return out;
}

template <class T>
std::size_t LayerParams<T>::numel() const {
    std::size_t n = 0;
    for_each([&](const char*, const BasicTensor<T>& t) { n += t.numel(); });
    return n;
}

template <class T>
std::vector<BasicTensor<T>> ModelParams<T>::unique_tensors() {
    std::vector<BasicTensor<T>> out;
    for_each_unique([&](const std::string&, BasicTensor<T>& t) { out.push_back(t); });
    return out;
}

template <class T>
void ModelParams<T>::set_requires_grad(bool on) {
    for_each_unique([&](const std::string&, BasicTensor<T>& t) { t.set_requires_grad(on); });
}

template <class T>
void ModelParams<T>::zero_grad() {
    for_each_unique([&](const std::string&, BasicTensor<T>& t) { t.zero_grad(); });
}

template <class T>
void ModelParams<T>::validate() const {
    config.validate();
    if (layer_index.size() != u(config.depth)) {
        throw ValidationError("model has " + std::to_string(layer_index.size()) + " layer positions, config depth " +
                              std::to_string(config.depth));
    }
    for (auto k : layer_index) {
        if (k >= layers.size()) throw ValidationError("layer position refers to missing storage");
    }
    const std::size_t d = u(config.width), r = config.mlp_hidden();
    auto expect = [](const BasicTensor<T>& t, const Shape& s, const std::string& name) {
        if (!t.defined() || t.shape() != s) {
            throw DimensionError(name + ": expected " + shape_str(s) + ", got " +
                                 (t.defined() ? shape_str(t.shape()) : std::string("undefined")));
        }
    };
    expect(patch_weight, {config.patch_dim(), d}, "patch_embed.weight");
    expect(patch_bias, {d}, "patch_embed.bias");
    expect(cls_token, {1, d}, "cls_token");
    expect(pos_embed, {config.tokens(), d}, "pos_embed");
    expect(norm_gamma, {d}, "norm.gamma");
    expect(norm_beta, {d}, "norm.beta");
    expect(head_weight, {d, u(config.classes)}, "head.weight");
    expect(head_bias, {u(config.classes)}, "head.bias");
    for (const auto& layer : layers) {
        expect(layer.norm1_gamma, {d}, "norm1.gamma");
        expect(layer.norm1_beta, {d}, "norm1.beta");
        expect(layer.qkv_weight, {d, 3 * d}, "attn.qkv.weight");
        expect(layer.qkv_bias, {3 * d}, "attn.qkv.bias");
        expect(layer.proj_weight, {d, d}, "attn.proj.weight");
        expect(layer.proj_bias, {d}, "attn.proj.bias");
        expect(layer.norm2_gamma, {d}, "norm2.gamma");
        expect(layer.norm2_beta, {d}, "norm2.beta");
        expect(layer.fc1_weight, {d, r}, "mlp.fc1.weight");
        expect(layer.fc1_bias, {r}, "mlp.fc1.bias");
        expect(layer.fc2_weight, {r, d}, "mlp.fc2.weight");
        expect(layer.fc2_bias, {d}, "mlp.fc2.bias");
    }
}

template <class T>
LayerParams<T> init_layer(const ModelConfig& cfg, SplitMix64& rng) {
    const std::size_t d = u(cfg.width), r = cfg.mlp_hidden();
    LayerParams<T> p;
    p.norm1_gamma = constant<T>(d, T(1));
    p.norm1_beta = constant<T>(d, T(0));
    p.qkv_weight = normal_tensor<T>({d, 3 * d}, rng);
    p.qkv_bias = constant<T>(3 * d, T(0));
    p.proj_weight = normal_tensor<T>({d, d}, rng);
    p.proj_bias = constant<T>(d, T(0));
    p.norm2_gamma = constant<T>(d, T(1));
    p.norm2_beta = constant<T>(d, T(0));
    p.fc1_weight = normal_tensor<T>({d, r}, rng);
    p.fc1_bias = constant<T>(r, T(0));
    p.fc2_weight = normal_tensor<T>({r, d}, rng);
    p.fc2_bias = constant<T>(d, T(0));
    return p;
}

template <class T>
ModelParams<T> build_model(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::vector<std::size_t> identity(u(cfg.depth));
    for (std::size_t i = 0; i < identity.size(); ++i) identity[i] = i;
    return build_indexed_model<T>(cfg, std::move(identity), seed);
}

template <class T>
ModelParams<T> build_indexed_model(const ModelConfig& cfg, std::vector<std::size_t> layer_index, std::uint64_t seed) {
    cfg.validate();
    if (layer_index.size() != u(cfg.depth)) throw ValidationError("layer index length must equal config depth");
    std::size_t storages = 0;
    for (auto k : layer_index) storages = std::max(storages, k + 1);
    SplitMix64 rng(seed);
    const std::size_t d = u(cfg.width);
    ModelParams<T> m;
    m.config = cfg;
    m.patch_weight = normal_tensor<T>({cfg.patch_dim(), d}, rng);
    m.patch_bias = constant<T>(d, T(0));
    m.cls_token = normal_tensor<T>({1, d}, rng);
    m.pos_embed = normal_tensor<T>({cfg.tokens(), d}, rng);
    for (std::size_t k = 0; k < storages; ++k) m.layers.push_back(init_layer<T>(cfg, rng));
    m.layer_index = std::move(layer_index);
    m.norm_gamma = constant<T>(d, T(1));
    m.norm_beta = constant<T>(d, T(0));
    m.head_weight = normal_tensor<T>({d, u(cfg.classes)}, rng);
    m.head_bias = constant<T>(u(cfg.classes), T(0));
    return m;
}

template <class T>
BasicTensor<T> forward_logits(const ModelParams<T>& params, const BasicTensor<T>& images) {
    auto x = embed(params, images);
    for (std::size_t i = 0; i < params.depth(); ++i) x = encoder_layer(params.at_position(i), x, u(params.config.heads));
    return head(params, x);
}

template <class T>
std::vector<BasicTensor<T>> forward_activations(const ModelParams<T>& params, const BasicTensor<T>& images) {
    NoGradGuard no_grad;
    std::vector<BasicTensor<T>> out;
    out.push_back(embed(params, images));
    for (std::size_t i = 0; i < params.depth(); ++i)
        out.push_back(encoder_layer(params.at_position(i), out.back(), u(params.config.heads)));
    return out;
}

template <class T>
std::size_t count_params(const ModelParams<T>& params, bool unique_only) {
    std::size_t n = 0;
    const_cast<ModelParams<T>&>(params).for_each_shared([&](const char*, BasicTensor<T>& t) { n += t.numel(); });
    if (unique_only) {
        for (const auto& layer : params.layers) n += layer.numel();
    } else {
        for (std::size_t i = 0; i < params.depth(); ++i) n += params.at_position(i).numel();
    }
    return n;
}

template <class T>
ModelParams<T> clone_model(const ModelParams<T>& params) {
    return cast_model<T>(params);
}

template <class T>
ModelParams<T> untie(const ModelParams<T>& params) {
    ModelParams<T> out = clone_model(params);
    out.layers.clear();
    for (std::size_t i = 0; i < params.depth(); ++i) {
        out.layers.push_back(params.at_position(i).clone());
        out.layer_index[i] = i;
    }
    return out;
}

template <class To, class From>
ModelParams<To> cast_model(const ModelParams<From>& params) {
    auto& src = const_cast<ModelParams<From>&>(params);
    ModelParams<To> out;
    out.config = params.config;
    out.layer_index = params.layer_index;
    out.layers.resize(params.layers.size());
    std::vector<BasicTensor<To>*> dst;
    out.for_each_unique([&](const std::string&, BasicTensor<To>& t) { dst.push_back(&t); });
    std::size_t i = 0;
    src.for_each_unique([&](const std::string&, BasicTensor<From>& t) { *dst[i++] = cast_leaf<To>(t); });
    return out;
}

#define SWS_INSTANTIATE_VIT(T)                                                                          \
    template struct LayerParams<T>;                                                                     \
    template struct ModelParams<T>;                                                                     \
    template LayerParams<T> init_layer<T>(const ModelConfig&, SplitMix64&);                             \
    template ModelParams<T> build_model<T>(const ModelConfig&, std::uint64_t);                          \
    template ModelParams<T> build_indexed_model<T>(const ModelConfig&, std::vector<std::size_t>, std::uint64_t); \
    template BasicTensor<T> forward_logits(const ModelParams<T>&, const BasicTensor<T>&);               \
    template std::vector<BasicTensor<T>> forward_activations(const ModelParams<T>&, const BasicTensor<T>&); \
    template std::size_t count_params(const ModelParams<T>&, bool);                                     \
    template ModelParams<T> clone_model(const ModelParams<T>&);                                         \
    template ModelParams<T> untie(const ModelParams<T>&);

SWS_INSTANTIATE_VIT(float)
SWS_INSTANTIATE_VIT(double)
template ModelParams<float> cast_model<float, float>(const ModelParams<float>&);
template ModelParams<double> cast_model<double, float>(const ModelParams<float>&);
template ModelParams<float> cast_model<float, double>(const ModelParams<double>&);
template ModelParams<double> cast_model<double, double>(const ModelParams<double>&);

}  // namespace sws
