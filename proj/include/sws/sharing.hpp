#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sws/vit.hpp"

namespace sws {

/// Per-stage layer counts (L_1..L_M) of a stage-wise tied model.
class StagePlan {
public:
    StagePlan() = default;

    /// floor(L/M) per stage; the L mod M extra layers go one each to stages
    /// ordered center-out (middle first, the front one of a tied pair first).
    static StagePlan balanced(int depth, int stages);
    static StagePlan custom(std::vector<int> sizes);
    /// "3,3,4,3,3"
    static StagePlan parse(const std::string& text);

    const std::vector<int>& sizes() const { return sizes_; }
    int stages() const { return static_cast<int>(sizes_.size()); }
    int depth() const;
    std::vector<std::size_t> position_to_stage() const;
    std::string to_string() const;

    bool operator==(const StagePlan&) const = default;

private:
    explicit StagePlan(std::vector<int> sizes) : sizes_(std::move(sizes)) {}
    std::vector<int> sizes_;
};

inline StagePlan balanced_plan(int depth, int stages) { return StagePlan::balanced(depth, stages); }
inline StagePlan custom_plan(std::vector<int> sizes) { return StagePlan::custom(std::move(sizes)); }

/// Tied Aux-Net: one layer storage per stage, referenced by every position of
/// that stage. Gradients from all positions land in the one storage.
template <class T>
ModelParams<T> build_aux(const ModelConfig& cfg, const StagePlan& plan, std::uint64_t seed);

/// True when params' storages and positions follow plan exactly.
template <class T>
bool matches_plan(const ModelParams<T>& params, const StagePlan& plan);

struct Provenance {
    int epochs = 0;
    std::uint64_t seed = 0;
    double alpha = 0.0;
    double tau = 1.0;
    bool tau_square_scaling = false;
    std::uint64_t dataset_hash = 0;
    std::string note;

    bool operator==(const Provenance&) const = default;
};

/// The M trained stage layers plus the non-layer components needed to
/// assemble a full model. Immutable once built.
struct LearngenePack {
    static constexpr int kFormatVersion = 1;

    ModelConfig config;  // of the Aux-Net
    StagePlan plan;
    Provenance provenance;
    int format_version = kFormatVersion;
    std::vector<LayerParams<float>> layer_sets;
    Tensor patch_weight, patch_bias, cls_token, pos_embed;
    Tensor norm_gamma, norm_beta, head_weight, head_bias;

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

    std::size_t param_count() const;
    void validate() const;
};

LearngenePack extract_learngene(const Model& aux, const StagePlan& plan, const Provenance& provenance);

}  // namespace sws
