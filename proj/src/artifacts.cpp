#include "sws/artifacts.hpp"

#include <cstdio>
#include <set>

#include "sws/error.hpp"

namespace sws {

using nlohmann::json;

namespace {

NamedTensor named(const std::string& name, const Tensor& t) {
    return {name, t.shape(), std::vector<float>(t.data().begin(), t.data().end())};
}

// Copies a stored tensor into a freshly built skeleton slot of equal shape.
void fill(Tensor& slot, const TensorFile& file, const std::string& name, std::set<std::string>& used) {
    const auto& src = file.at(name);
    if (src.shape != slot.shape()) {
        throw FormatError("tensor '" + name + "' has shape " + shape_str(src.shape) + ", expected " +
                          shape_str(slot.shape()));
    }
    slot = Tensor::from_values(src.shape, src.values);
    used.insert(name);
}

void require_all_used(const TensorFile& file, const std::set<std::string>& used) {
    for (const auto& t : file.tensors) {
        if (!used.count(t.name)) throw FormatError("unexpected tensor '" + t.name + "' in " + to_string(file.kind));
    }
}

template <class F>
auto guarded(F&& f) {
    try {
        return f();
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed artifact metadata: ") + e.what());
    }
}

}  // namespace

std::string hex64(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

std::uint64_t parse_hex64(const std::string& text) {
    std::size_t used = 0;
    std::uint64_t v = 0;
    try {
        v = std::stoull(text, &used, 16);
    } catch (const std::exception&) {
        used = 0;
    }
    if (text.empty() || used != text.size()) throw FormatError("bad 64-bit hex value '" + text + "'");
    return v;
}

json to_json(const ModelConfig& cfg) {
    return {{"image_size", cfg.image_size}, {"patch_size", cfg.patch_size}, {"channels", cfg.channels},
            {"depth", cfg.depth},           {"width", cfg.width},           {"heads", cfg.heads},
            {"mlp_ratio", cfg.mlp_ratio},   {"classes", cfg.classes}};
}

ModelConfig model_config_from_json(const json& j) {
    return guarded([&] {
        ModelConfig cfg;
        cfg.image_size = j.at("image_size").get<int>();
        cfg.patch_size = j.at("patch_size").get<int>();
        cfg.channels = j.at("channels").get<int>();
        cfg.depth = j.at("depth").get<int>();
        cfg.width = j.at("width").get<int>();
        cfg.heads = j.at("heads").get<int>();
        cfg.mlp_ratio = j.at("mlp_ratio").get<double>();
        cfg.classes = j.at("classes").get<int>();
        cfg.validate();
        return cfg;
    });
}

json to_json(const Provenance& p) {
    return {{"epochs", p.epochs},
            {"seed", p.seed},
            {"alpha", p.alpha},
            {"tau", p.tau},
            {"tau_square_scaling", p.tau_square_scaling},
            {"dataset_hash", hex64(p.dataset_hash)},
            {"note", p.note}};
}

Provenance provenance_from_json(const json& j) {
    return guarded([&] {
        Provenance p;
        p.epochs = j.at("epochs").get<int>();
        p.seed = j.at("seed").get<std::uint64_t>();
        p.alpha = j.at("alpha").get<double>();
        p.tau = j.at("tau").get<double>();
        p.tau_square_scaling = j.at("tau_square_scaling").get<bool>();
        p.dataset_hash = parse_hex64(j.at("dataset_hash").get<std::string>());
        p.note = j.at("note").get<std::string>();
        return p;
    });
}

TensorFile checkpoint_file(const Model& model, const json& info) {
    model.validate();
    TensorFile file;
    file.kind = ArtifactKind::kCheckpoint;
    file.meta = {{"model", to_json(model.config)}, {"layer_index", model.layer_index}, {"info", info}};
    auto& m = const_cast<Model&>(model);
    m.for_each_unique([&](const std::string& name, Tensor& t) { file.tensors.push_back(named(name, t)); });
    return file;
}

Model model_from_file(const TensorFile& file) {
    if (file.kind != ArtifactKind::kCheckpoint) throw KindError("expected a checkpoint, found " + to_string(file.kind));
    const auto [cfg, index] = guarded([&] {
        return std::make_pair(model_config_from_json(file.meta.at("model")),
                              file.meta.at("layer_index").get<std::vector<std::size_t>>());
    });
    if (index.size() != static_cast<std::size_t>(cfg.depth)) {
        throw FormatError("checkpoint layer_index has " + std::to_string(index.size()) + " entries for depth " +
                          std::to_string(cfg.depth));
    }
    Model model = build_indexed_model<float>(cfg, index, 0);
    std::set<std::string> used;
    model.for_each_unique([&](const std::string& name, Tensor& t) { fill(t, file, name, used); });
    require_all_used(file, used);
    model.validate();
    return model;
}

void save_checkpoint(const std::string& path, const Model& model, const json& info) {
    save_tensor_file(path, checkpoint_file(model, info));
}

Model load_checkpoint(const std::string& path, json* info) {
    const auto file = load_tensor_file(path, ArtifactKind::kCheckpoint);
    if (info) *info = file.meta.value("info", json::object());
    return model_from_file(file);
}

TensorFile learngene_file(const LearngenePack& pack) {
    pack.validate();
    TensorFile file;
    file.kind = ArtifactKind::kLearngene;
    file.meta = {{"model", to_json(pack.config)},
                 {"plan", pack.plan.sizes()},
                 {"provenance", to_json(pack.provenance)},
                 {"pack_format_version", pack.format_version}};
    auto& p = const_cast<LearngenePack&>(pack);
    p.for_each_shared([&](const char* name, Tensor& t) { file.tensors.push_back(named(name, t)); });
    for (std::size_t m = 0; m < p.layer_sets.size(); ++m) {
        p.layer_sets[m].for_each([&](const char* name, Tensor& t) {
            file.tensors.push_back(named("learngene." + std::to_string(m) + "." + name, t));
        });
    }
    return file;
}

LearngenePack pack_from_file(const TensorFile& file) {
    if (file.kind != ArtifactKind::kLearngene) throw KindError("expected a learngene, found " + to_string(file.kind));
    LearngenePack pack;
    guarded([&] {
        pack.config = model_config_from_json(file.meta.at("model"));
        pack.plan = StagePlan::custom(file.meta.at("plan").get<std::vector<int>>());
        pack.provenance = provenance_from_json(file.meta.at("provenance"));
        pack.format_version = file.meta.at("pack_format_version").get<int>();
        return 0;
    });
    if (pack.format_version != LearngenePack::kFormatVersion) {
        throw VersionError("unsupported learngene pack version " + std::to_string(pack.format_version));
    }
    ModelConfig one = pack.config;
    one.depth = 1;
    const Model skeleton = build_model<float>(one, 0);
    pack.patch_weight = skeleton.patch_weight;
    pack.patch_bias = skeleton.patch_bias;
    pack.cls_token = skeleton.cls_token;
    pack.pos_embed = skeleton.pos_embed;
    pack.norm_gamma = skeleton.norm_gamma;
    pack.norm_beta = skeleton.norm_beta;
    pack.head_weight = skeleton.head_weight;
    pack.head_bias = skeleton.head_bias;
    std::set<std::string> used;
    pack.for_each_shared([&](const char* name, Tensor& t) { fill(t, file, name, used); });
    for (int m = 0; m < pack.plan.stages(); ++m) {
        LayerParams<float> layer = skeleton.layers[0].clone();
        layer.for_each([&](const char* name, Tensor& t) {
            fill(t, file, "learngene." + std::to_string(m) + "." + name, used);
        });
        pack.layer_sets.push_back(std::move(layer));
    }
    require_all_used(file, used);
    pack.validate();
    return pack;
}

void save_learngene(const std::string& path, const LearngenePack& pack) {
    save_tensor_file(path, learngene_file(pack));
}

LearngenePack load_learngene(const std::string& path) {
    return pack_from_file(load_tensor_file(path, ArtifactKind::kLearngene));
}

TensorFile logit_cache_file(const LogitCache& cache) {
    if (!cache.logits.defined() || cache.logits.rank() != 2) throw ValidationError("logit cache must be [N x C]");
    TensorFile file;
    file.kind = ArtifactKind::kLogitCache;
    file.meta = {{"dataset_hash", hex64(cache.dataset_hash)},
                 {"count", cache.logits.dim(0)},
                 {"classes", cache.logits.dim(1)}};
    file.tensors.push_back(named("logits", cache.logits));
    return file;
}

LogitCache logit_cache_from_file(const TensorFile& file) {
    if (file.kind != ArtifactKind::kLogitCache) throw KindError("expected a logitcache, found " + to_string(file.kind));
    LogitCache cache;
    const auto& t = file.at("logits");
    guarded([&] {
        cache.dataset_hash = parse_hex64(file.meta.at("dataset_hash").get<std::string>());
        const Shape declared{file.meta.at("count").get<std::size_t>(), file.meta.at("classes").get<std::size_t>()};
        if (declared != t.shape) throw FormatError("logit cache metadata disagrees with its tensor shape");
        return 0;
    });
    if (file.tensors.size() != 1) throw FormatError("logit cache holds unexpected tensors");
    cache.logits = Tensor::from_values(t.shape, t.values);
    return cache;
}

void save_logit_cache(const std::string& path, const LogitCache& cache) {
    save_tensor_file(path, logit_cache_file(cache));
}

LogitCache load_logit_cache(const std::string& path) {
    return logit_cache_from_file(load_tensor_file(path, ArtifactKind::kLogitCache));
}

}  // namespace sws
