#include "sws/sharing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "sws/error.hpp"

namespace sws {

StagePlan StagePlan::balanced(int depth, int stages) {
    if (stages < 1 || depth < 1 || stages > depth) {
        throw ValidationError("balanced plan needs 1 <= M <= L, got L=" + std::to_string(depth) +
                              " M=" + std::to_string(stages));
    }
    std::vector<int> sizes(static_cast<std::size_t>(stages), depth / stages);
    std::vector<int> order(sizes.size());
    std::iota(order.begin(), order.end(), 0);
    // Distance from the center in half-steps; ties resolve to the lower index.
    std::stable_sort(order.begin(), order.end(),
                     [stages](int a, int b) { return std::abs(2 * a - (stages - 1)) < std::abs(2 * b - (stages - 1)); });
    for (int r = 0; r < depth % stages; ++r) ++sizes[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])];
    return StagePlan(std::move(sizes));
}

StagePlan StagePlan::custom(std::vector<int> sizes) {
    if (sizes.empty()) throw ValidationError("stage plan needs at least one stage");
    for (int s : sizes) {
        if (s < 1) throw ValidationError("stage sizes must be >= 1, got " + std::to_string(s));
    }
    return StagePlan(std::move(sizes));
}

StagePlan StagePlan::parse(const std::string& text) {
    std::vector<int> sizes;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            sizes.push_back(std::stoi(item, &used));
            if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ValidationError("bad stage plan '" + text + "'");
        }
    }
    return custom(std::move(sizes));
}

int StagePlan::depth() const { return std::accumulate(sizes_.begin(), sizes_.end(), 0); }

std::vector<std::size_t> StagePlan::position_to_stage() const {
    std::vector<std::size_t> out;
    for (std::size_t m = 0; m < sizes_.size(); ++m) out.insert(out.end(), static_cast<std::size_t>(sizes_[m]), m);
    return out;
}

std::string StagePlan::to_string() const {
    std::string s;
    for (std::size_t i = 0; i < sizes_.size(); ++i) s += (i ? "," : "") + std::to_string(sizes_[i]);
    return s;
}

template <class T>
ModelParams<T> build_aux(const ModelConfig& cfg, const StagePlan& plan, std::uint64_t seed) {
    if (plan.depth() != cfg.depth) {
        throw ValidationError("stage plan (" + plan.to_string() + ") covers " + std::to_string(plan.depth()) +
                              " layers but model depth is " + std::to_string(cfg.depth));
    }
    return build_indexed_model<T>(cfg, plan.position_to_stage(), seed);
}

template <class T>
bool matches_plan(const ModelParams<T>& params, const StagePlan& plan) {
    return params.layers.size() == static_cast<std::size_t>(plan.stages()) &&
           params.layer_index == plan.position_to_stage();
}

std::size_t LearngenePack::param_count() const {
    std::size_t n = 0;
    const_cast<LearngenePack*>(this)->for_each_shared([&](const char*, Tensor& t) { n += t.numel(); });
    for (const auto& layer : layer_sets) n += layer.numel();
    return n;
}

void LearngenePack::validate() const {
    if (layer_sets.size() != static_cast<std::size_t>(plan.stages())) {
        throw ValidationError("learngene pack holds " + std::to_string(layer_sets.size()) + " layer sets for a " +
                              std::to_string(plan.stages()) + "-stage plan");
    }
    if (plan.depth() != config.depth) throw ValidationError("learngene plan does not cover the Aux-Net depth");
    // Reassemble a skeleton so shapes are checked in one place.
    Model skeleton;
    skeleton.config = config;
    skeleton.layers = layer_sets;
    skeleton.layer_index = plan.position_to_stage();
    auto* self = const_cast<LearngenePack*>(this);
    std::vector<Tensor*> dst;
    skeleton.for_each_shared([&](const char*, Tensor& t) { dst.push_back(&t); });
    std::size_t i = 0;
    self->for_each_shared([&](const char*, Tensor& t) { *dst[i++] = t; });
    skeleton.validate();
    skeleton.for_each_unique([](const std::string& name, Tensor& t) {
        for (float v : t.data()) {
            if (!std::isfinite(v)) throw NumericError("learngene tensor " + name + " is not finite");
        }
    });
}

LearngenePack extract_learngene(const Model& aux, const StagePlan& plan, const Provenance& provenance) {
    if (!matches_plan(aux, plan)) {
        throw ValidationError("Aux-Net layer sharing does not follow plan (" + plan.to_string() + ")");
    }
    LearngenePack pack;
    pack.config = aux.config;
    pack.plan = plan;
    pack.provenance = provenance;
    for (const auto& layer : aux.layers) pack.layer_sets.push_back(layer.clone());
    auto& src = const_cast<Model&>(aux);
    std::vector<Tensor> shared;
    src.for_each_shared([&](const char*, Tensor& t) { shared.push_back(t.clone().set_requires_grad(false)); });
    std::size_t i = 0;
    pack.for_each_shared([&](const char*, Tensor& t) { t = shared[i++]; });
    for (auto& layer : pack.layer_sets) layer.for_each([](const char*, Tensor& t) { t.set_requires_grad(false); });
    pack.validate();
    return pack;
}

template ModelParams<float> build_aux<float>(const ModelConfig&, const StagePlan&, std::uint64_t);
template ModelParams<double> build_aux<double>(const ModelConfig&, const StagePlan&, std::uint64_t);
template bool matches_plan(const ModelParams<float>&, const StagePlan&);
template bool matches_plan(const ModelParams<double>&, const StagePlan&);

}  // namespace sws
