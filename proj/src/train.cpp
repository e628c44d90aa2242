#include "sws/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "sws/error.hpp"
#include "sws/ops.hpp"
#include "sws/rng.hpp"

namespace sws {

Schedule parse_schedule(const std::string& text) {
    if (text == "constant") return Schedule::kConstant;
    if (text == "cosine") return Schedule::kCosine;
    throw ValidationError("unknown schedule '" + text + "' (expected constant or cosine)");
}

std::string to_string(Schedule schedule) { return schedule == Schedule::kCosine ? "cosine" : "constant"; }

void TrainConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ValidationError("train config: " + msg); };
    if (!(alpha >= 0.0 && alpha <= 1.0)) fail("alpha must lie in [0, 1]");
    if (!(tau > 0.0) || !std::isfinite(tau)) fail("tau must be positive");
    if (!(lr > 0.0) || !std::isfinite(lr)) fail("lr must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("betas must lie in [0, 1)");
    if (!(eps_opt > 0.0)) fail("eps_opt must be positive");
    if (!(weight_decay >= 0.0)) fail("weight_decay must be non-negative");
    if (epochs < 0) fail("epochs must be non-negative");
    if (batch_size < 1) fail("batch_size must be at least 1");
    if (grad_clip && !(*grad_clip > 0.0)) fail("grad_clip must be positive");
}

template <class T>
BasicTensor<T> loss_cls(const BasicTensor<T>& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2) throw DimensionError("loss_cls: logits must be [B x C], got " + shape_str(logits.shape()));
    if (labels.size() != logits.dim(0)) {
        throw DimensionError("loss_cls: " + std::to_string(labels.size()) + " labels for " +
                             shape_str(logits.shape()) + " logits");
    }
    return soft_cross_entropy(one_hot<T>(labels, logits.dim(1)), softmax_rows(logits));
}

template <class T>
BasicTensor<T> loss_distill(const BasicTensor<T>& student, const BasicTensor<T>& teacher, double tau,
                            bool tau_square_scaling) {
    if (!(tau > 0.0)) throw ValidationError("loss_distill: tau must be positive");
    if (!teacher.defined() || student.shape() != teacher.shape()) {
        throw DimensionError("loss_distill: student " + shape_str(student.shape()) + " vs teacher " +
                             (teacher.defined() ? shape_str(teacher.shape()) : std::string("<none>")));
    }
    const T inv = static_cast<T>(1.0 / tau);
    BasicTensor<T> target;
    {
        NoGradGuard guard;
        target = softmax_rows(scale(teacher, inv));
    }
    auto loss = soft_cross_entropy(target, softmax_rows(scale(student, inv)));
    if (tau_square_scaling) loss = scale(loss, static_cast<T>(tau * tau));
    return loss;
}

template <class T>
BasicTensor<T> loss_total(const BasicTensor<T>& student, const std::vector<int>& labels,
                          const BasicTensor<T>& teacher, const TrainConfig& cfg) {
    if (cfg.alpha == 0.0) return loss_cls(student, labels);
    if (cfg.alpha == 1.0) return loss_distill(student, teacher, cfg.tau, cfg.tau_square_scaling);
    auto cls = loss_cls(student, labels);
    auto distill = loss_distill(student, teacher, cfg.tau, cfg.tau_square_scaling);
    return add(scale(cls, static_cast<T>(1.0 - cfg.alpha)), scale(distill, static_cast<T>(cfg.alpha)));
}

template Tensor loss_cls<float>(const Tensor&, const std::vector<int>&);
template TensorD loss_cls<double>(const TensorD&, const std::vector<int>&);
template Tensor loss_distill<float>(const Tensor&, const Tensor&, double, bool);
template TensorD loss_distill<double>(const TensorD&, const TensorD&, double, bool);
template Tensor loss_total<float>(const Tensor&, const std::vector<int>&, const Tensor&, const TrainConfig&);
template TensorD loss_total<double>(const TensorD&, const std::vector<int>&, const TensorD&, const TrainConfig&);

OptState init_opt_state(const std::vector<Tensor>& params, std::vector<std::string> names) {
    OptState state;
    for (const auto& p : params) {
        state.m.emplace_back(p.numel(), 0.0);
        state.v.emplace_back(p.numel(), 0.0);
    }
    if (!names.empty() && names.size() != params.size()) {
        throw ValidationError("init_opt_state: names do not match parameters");
    }
    state.names = std::move(names);
    return state;
}

double opt_step(const std::vector<Tensor>& params, OptState& state, const TrainConfig& cfg, double lr) {
    if (state.m.size() != params.size()) throw ValidationError("opt_step: state does not match parameters");
    double sq = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].has_grad()) continue;
        for (float g : params[i].grad()) {
            if (!std::isfinite(g)) {
                const std::string name =
                    state.names.empty() ? "#" + std::to_string(i) : state.names[i];
                throw NumericError("non-finite gradient in parameter " + name + " at optimizer step " +
                                   std::to_string(state.step + 1));
            }
            sq += static_cast<double>(g) * static_cast<double>(g);
        }
    }
    const double norm = std::sqrt(sq);
    double gscale = 1.0;
    if (cfg.grad_clip && norm > *cfg.grad_clip) gscale = *cfg.grad_clip / (norm + 1e-6);

    ++state.step;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    const double decay = 1.0 - lr * cfg.weight_decay;
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor p = params[i];
        auto values = p.data();
        const bool has = p.has_grad();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < values.size(); ++j) {
            const double g = has ? static_cast<double>(p.grad()[j]) * gscale : 0.0;
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
            const double mhat = m[j] / c1;
            const double vhat = v[j] / c2;
            values[j] = static_cast<float>(static_cast<double>(values[j]) * decay -
                                           lr * mhat / (std::sqrt(vhat) + cfg.eps_opt));
        }
    }
    return norm;
}

double scheduled_lr(const TrainConfig& cfg, long step, long total_steps) {
    if (cfg.schedule == Schedule::kConstant || total_steps <= 0) return cfg.lr;
    const double pi = std::acos(-1.0);
    return cfg.lr * 0.5 * (1.0 + std::cos(pi * static_cast<double>(step) / static_cast<double>(total_steps)));
}

void LogitCache::check(const Dataset& data) const {
    if (!logits.defined() || logits.rank() != 2) throw FormatError("logit cache holds no [N x C] logits");
    if (dataset_hash != data.content_hash || logits.dim(0) != data.size()) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "logit cache built for dataset %016llx (%zu rows), got %016llx (%zu rows)",
                      static_cast<unsigned long long>(dataset_hash), logits.dim(0),
                      static_cast<unsigned long long>(data.content_hash), data.size());
        throw StaleCacheError(buf);
    }
    if (logits.dim(1) != static_cast<std::size_t>(data.classes)) {
        throw StaleCacheError("logit cache has " + std::to_string(logits.dim(1)) + " classes, dataset has " +
                              std::to_string(data.classes));
    }
}

Tensor predict_logits(const Model& model, const Dataset& data, std::size_t batch_size) {
    NoGradGuard guard;
    const auto classes = static_cast<std::size_t>(model.config.classes);
    std::vector<float> out;
    out.reserve(data.size() * classes);
    for (const Batch& batch : batch_iter(data, batch_size)) {
        const auto logits = forward_logits(model, batch.images);
        out.insert(out.end(), logits.data().begin(), logits.data().end());
    }
    return Tensor::from_values({data.size(), classes}, std::move(out));
}

LogitCache cache_teacher_logits(const Model& teacher, const Dataset& data, std::size_t batch_size) {
    data.validate();
    LogitCache cache;
    cache.logits = predict_logits(teacher, data, batch_size);
    for (float v : cache.logits.data()) {
        if (!std::isfinite(v)) throw NumericError("teacher produced non-finite logits");
    }
    cache.dataset_hash = data.content_hash;
    return cache;
}

TeacherFn cached_teacher(const LogitCache& cache, const Dataset& data) {
    cache.check(data);
    return [logits = cache.logits](const Batch& batch) {
        const std::size_t c = logits.dim(1);
        std::vector<float> rows;
        rows.reserve(batch.indices.size() * c);
        for (auto idx : batch.indices) {
            const auto src = logits.data().subspan(idx * c, c);
            rows.insert(rows.end(), src.begin(), src.end());
        }
        return Tensor::from_values({batch.indices.size(), c}, std::move(rows));
    };
}

TeacherFn live_teacher(const Model& teacher) {
    return [model = clone_model(teacher)](const Batch& batch) {
        NoGradGuard guard;
        return forward_logits(model, batch.images);
    };
}

EvalResult evaluate_logits(const Tensor& logits, const std::vector<int>& labels) {
    if (labels.empty()) throw ValidationError("evaluate: empty split");
    if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
        throw DimensionError("evaluate: logits " + shape_str(logits.shape()) + " for " +
                             std::to_string(labels.size()) + " labels");
    }
    const std::size_t c = logits.dim(1);
    double loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t r = 0; r < labels.size(); ++r) {
        const auto row = logits.data().subspan(r * c, c);
        const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
        if (best == static_cast<std::size_t>(labels[r])) ++correct;
        // Same float pipeline as loss_cls on a single row.
        const Tensor one = Tensor::from_values({1, c}, std::vector<float>(row.begin(), row.end()));
        loss += static_cast<double>(loss_cls(one, {labels[r]}).item());
    }
    const auto n = static_cast<double>(labels.size());
    return {loss / n, static_cast<double>(correct) / n};
}

EvalResult evaluate(const Model& model, const Dataset& data, std::size_t batch_size) {
    if (data.size() == 0) throw ValidationError("evaluate: empty split");
    NoGradGuard guard;
    return evaluate_logits(predict_logits(model, data, batch_size), data.labels);
}

Metrics train_model(Model& model, const Dataset& train, const Dataset& val, const TrainConfig& cfg,
                    const TeacherFn& teacher) {
    cfg.validate();
    model.validate();
    if (cfg.alpha > 0.0 && !teacher) throw ValidationError("train: alpha > 0 requires teacher logits");
    if (train.size() == 0 || val.size() == 0) throw ValidationError("train: empty split");
    if (train.classes != model.config.classes) {
        throw ValidationError("train: dataset has " + std::to_string(train.classes) + " classes, model has " +
                              std::to_string(model.config.classes));
    }

    using Clock = std::chrono::steady_clock;
    Metrics metrics;
    {
        const auto start = Clock::now();
        EpochRecord rec;
        rec.train_loss = evaluate(model, train).loss;
        const auto v = evaluate(model, val);
        rec.val_loss = v.loss;
        rec.top1 = v.top1;
        rec.seconds = std::chrono::duration<double>(Clock::now() - start).count();
        metrics.epochs.push_back(rec);
    }
    if (cfg.epochs == 0) return metrics;

    std::vector<Tensor> params;
    std::vector<std::string> names;
    model.for_each_unique([&](const std::string& name, Tensor& t) {
        params.push_back(t);
        names.push_back(name);
    });
    model.set_requires_grad(true);
    OptState state = init_opt_state(params, names);

    const auto batch_size = static_cast<std::size_t>(cfg.batch_size);
    const long per_epoch = static_cast<long>((train.size() + batch_size - 1) / batch_size);
    const long total = per_epoch * cfg.epochs;
    long step = 0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto start = Clock::now();
        double loss_sum = 0.0;
        const auto batches = batch_iter(train, batch_size, mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
        for (const Batch& batch : batches) {
            model.zero_grad();
            const Tensor logits = forward_logits(model, batch.images);
            Tensor target;
            if (cfg.alpha > 0.0) target = teacher(batch);
            const Tensor loss = loss_total(logits, batch.labels, target, cfg);
            const double value = static_cast<double>(loss.item());
            if (!std::isfinite(value)) {
                model.set_requires_grad(false);
                throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                   std::to_string(step + 1));
            }
            backward(loss);
            opt_step(params, state, cfg, scheduled_lr(cfg, step, total));
            ++step;
            metrics.step_losses.push_back(value);
            loss_sum += value * static_cast<double>(batch.labels.size());
        }
        model.zero_grad();
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(train.size());
        const auto v = evaluate(model, val);
        rec.val_loss = v.loss;
        rec.top1 = v.top1;
        rec.seconds = std::chrono::duration<double>(Clock::now() - start).count();
        metrics.epochs.push_back(rec);
    }
    model.zero_grad();
    model.set_requires_grad(false);
    return metrics;
}

std::string metrics_csv(const Metrics& metrics, bool with_timing) {
    std::string out = "epoch,train_loss,val_loss,top1,seconds\n";
    char buf[160];
    for (const auto& r : metrics.epochs) {
        std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.6f,%.3f\n", r.epoch, r.train_loss, r.val_loss, r.top1,
                      with_timing ? r.seconds : 0.0);
        out += buf;
    }
    return out;
}

std::string metrics_summary(const Metrics& metrics) {
    std::ostringstream out;
    char buf[64];
    auto put = [&](const char* key, double v) {
        std::snprintf(buf, sizeof buf, "%.9g", v);
        out << key << '=' << buf << '\n';
    };
    out << "epochs=" << metrics.epochs.size() - 1 << '\n';
    put("no_tune_val_loss", metrics.no_tune().val_loss);
    put("no_tune_top1", metrics.no_tune().top1);
    put("final_val_loss", metrics.last().val_loss);
    put("final_top1", metrics.last().top1);
    put("steps", static_cast<double>(metrics.step_losses.size()));
    return out.str();
}

}  // namespace sws
