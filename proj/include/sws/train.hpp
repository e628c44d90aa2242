#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sws/data.hpp"
#include "sws/vit.hpp"

namespace sws {

enum class Schedule { kConstant, kCosine };

Schedule parse_schedule(const std::string& text);
std::string to_string(Schedule schedule);

struct TrainConfig {
    double alpha = 0.9;
    double tau = 1.0;
    bool tau_square_scaling = false;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_opt = 1e-8;
    double weight_decay = 0.05;
    int epochs = 1;  // 0 is accepted and yields only the no-tune snapshot
    int batch_size = 64;
    Schedule schedule = Schedule::kCosine;
    std::uint64_t seed = 0;
    std::optional<double> grad_clip;

    void validate() const;
};

/// Mean cross-entropy against one-hot labels.
template <class T>
BasicTensor<T> loss_cls(const BasicTensor<T>& logits, const std::vector<int>& labels);

/// CE(softmax(teacher / tau), softmax(student / tau)), times tau^2 when
/// scaled. The teacher side is a constant.
template <class T>
BasicTensor<T> loss_distill(const BasicTensor<T>& student, const BasicTensor<T>& teacher, double tau,
                            bool tau_square_scaling);

/// (1 - alpha) * cls + alpha * distill. At alpha == 0 the teacher is never
/// read and may be undefined; at alpha == 1 the labels are never read.
template <class T>
BasicTensor<T> loss_total(const BasicTensor<T>& student, const std::vector<int>& labels,
                          const BasicTensor<T>& teacher, const TrainConfig& cfg);

/// First and second moments kept in double, one pair per parameter.
struct OptState {
    std::vector<std::vector<double>> m, v;
    std::vector<std::string> names;  // for diagnostics
    long step = 0;
};

OptState init_opt_state(const std::vector<Tensor>& params, std::vector<std::string> names = {});

/// One AdamW step using the parameters' accumulated gradients (a parameter
/// without a gradient is treated as having a zero gradient). Returns the
/// global gradient norm before clipping.
double opt_step(const std::vector<Tensor>& params, OptState& state, const TrainConfig& cfg, double lr);

/// Learning rate for a 0-based step out of total_steps.
double scheduled_lr(const TrainConfig& cfg, long step, long total_steps);

struct LogitCache {
    Tensor logits;  // [N x C] in dataset order
    std::uint64_t dataset_hash = 0;

    void check(const Dataset& data) const;
};

/// Logits for every sample of data, in order, without recording a graph.
Tensor predict_logits(const Model& model, const Dataset& data, std::size_t batch_size = 256);

LogitCache cache_teacher_logits(const Model& teacher, const Dataset& data, std::size_t batch_size = 256);

/// Teacher logits for a batch of the training set.
using TeacherFn = std::function<Tensor(const Batch&)>;

/// Verifies the cache against data (stale-cache error on mismatch).
TeacherFn cached_teacher(const LogitCache& cache, const Dataset& data);
TeacherFn live_teacher(const Model& teacher);

struct EvalResult {
    double loss = 0.0;
    double top1 = 0.0;
};

EvalResult evaluate(const Model& model, const Dataset& data, std::size_t batch_size = 256);

/// Mean classification loss and top-1 of precomputed logits.
EvalResult evaluate_logits(const Tensor& logits, const std::vector<int>& labels);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double top1 = 0.0;
    double seconds = 0.0;
};

struct Metrics {
    std::vector<EpochRecord> epochs;  // entry 0 is the no-tune snapshot
    std::vector<double> step_losses;

    const EpochRecord& no_tune() const { return epochs.front(); }
    const EpochRecord& last() const { return epochs.back(); }
};

/// Trains every distinct storage of model in place. Epoch 0 evaluates the
/// untouched model (train_loss is then the classification loss on train).
/// Without a teacher alpha must be 0.
Metrics train_model(Model& model, const Dataset& train, const Dataset& val, const TrainConfig& cfg,
                    const TeacherFn& teacher = nullptr);

/// epoch,train_loss,val_loss,top1,seconds. Seconds are written as 0 unless
/// with_timing, so replays are byte-identical.
std::string metrics_csv(const Metrics& metrics, bool with_timing = false);

/// Plain key=value summary.
std::string metrics_summary(const Metrics& metrics);

}  // namespace sws
