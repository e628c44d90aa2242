#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "sws/sharing.hpp"
#include "sws/store.hpp"
#include "sws/train.hpp"

namespace sws {

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Provenance& prov);
Provenance provenance_from_json(const nlohmann::json& j);

std::string hex64(std::uint64_t value);
std::uint64_t parse_hex64(const std::string& text);

/// Checkpoints keep the position -> storage map, so tied models round trip
/// with their aliasing intact. info is free-form metadata stored alongside.
TensorFile checkpoint_file(const Model& model, const nlohmann::json& info = nlohmann::json::object());
Model model_from_file(const TensorFile& file);
void save_checkpoint(const std::string& path, const Model& model,
                     const nlohmann::json& info = nlohmann::json::object());
Model load_checkpoint(const std::string& path, nlohmann::json* info = nullptr);

TensorFile learngene_file(const LearngenePack& pack);
LearngenePack pack_from_file(const TensorFile& file);
void save_learngene(const std::string& path, const LearngenePack& pack);
LearngenePack load_learngene(const std::string& path);

TensorFile logit_cache_file(const LogitCache& cache);
LogitCache logit_cache_from_file(const TensorFile& file);
void save_logit_cache(const std::string& path, const LogitCache& cache);
LogitCache load_logit_cache(const std::string& path);

}  // namespace sws
