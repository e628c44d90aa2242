#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "sws/data.hpp"
#include "sws/train.hpp"
#include "sws/vit.hpp"

namespace sws::cli {

struct DataSection {
    std::string source = "synthetic";  // synthetic | idx
    int count = 2000;
    int classes = 10;
    int size = 16;
    std::uint64_t data_seed = 1;
    double train_fraction = 0.8;
    std::uint64_t split_seed = 2;
    std::string images, labels, val_images, val_labels;
};

/// Teacher dimensions; zero inherits the [model] value.
struct TeacherSection {
    int depth = 0;
    int width = 0;
    int heads = 0;
    double mlp_ratio = 0.0;
};

/// Descendant fine-tuning overrides; negative inherits from [train].
struct FinetuneSection {
    double alpha = 0.0;
    int epochs = -1;
    double lr = -1.0;
};

struct ExperimentConfig {
    ModelConfig model;
    std::string plan_sizes;  // explicit "2,2,2,2"
    int plan_stages = 0;     // or balanced over the model depth
    TrainConfig train;
    DataSection data;
    TeacherSection teacher;
    FinetuneSection finetune;
    std::uint64_t seed = 0;
    std::string out = "out";
    bool timing = false;
};

std::pair<Dataset, Dataset> load_data(const DataSection& data);

/// key=value lines describing every resolved setting.
std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& cfg);

/// Runs one subcommand; returns the process exit code. args excludes the
/// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace sws::cli
