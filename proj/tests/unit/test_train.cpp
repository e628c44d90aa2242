#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "sws/artifacts.hpp"
#include "sws/error.hpp"
#include "sws/ops.hpp"
#include "sws/train.hpp"

using namespace sws;
using testing::random_tensor;
using testing::tiny_config;

namespace {

// 64-bit reference: -sum p log q with p = softmax(t/tau), q = softmax(s/tau).
double reference_distill(const std::vector<double>& s, const std::vector<double>& t, double tau) {
    auto soft = [&](const std::vector<double>& z) {
        double mx = *std::max_element(z.begin(), z.end()), total = 0;
        std::vector<double> e;
        for (double v : z) e.push_back(std::exp((v - mx) / tau));
        for (double v : e) total += v;
        for (double& v : e) v /= total;
        return e;
    };
    const auto p = soft(t), q = soft(s);
    double out = 0;
    for (std::size_t i = 0; i < p.size(); ++i) out -= p[i] * std::log(q[i]);
    return out;
}

std::pair<Dataset, Dataset> tiny_task(int n = 60) {
    auto full = make_synthetic(n, 3, 8, 1);
    return split(full, 0.75, 2);
}

}  // namespace

TEST_CASE("distillation loss examples") {
    auto z = TensorD::from_values({1, 2}, {0, 0});
    CHECK(loss_distill(z, z, 1.0, false).item() == doctest::Approx(std::log(2.0)).epsilon(1e-14));

    auto t = random_tensor({4, 5}, 1);
    auto p = softmax_rows(t);
    double entropy = 0;
    for (std::size_t i = 0; i < p.numel(); ++i) entropy -= p.data()[i] * std::log(p.data()[i]);
    CHECK(std::abs(loss_distill(t, t, 1.0, false).item() - entropy / 4) < 1e-12);

    auto s = random_tensor({4, 5}, 2);
    CHECK(std::abs(loss_distill(s, t, 1e6, false).item() - std::log(5.0)) < 1e-5);

    auto ps = TensorD::from_values({1, 2}, {0, 2}), pt = TensorD::from_values({1, 2}, {2, 0});
    CHECK(loss_distill(ps, pt, 1.0, false).item() == doctest::Approx(reference_distill({0, 2}, {2, 0}, 1.0)).epsilon(1e-14));
    CHECK(loss_distill(ps, pt, 2.0, true).item() ==
          doctest::Approx(4.0 * reference_distill({0, 2}, {2, 0}, 2.0)).epsilon(1e-14));

    CHECK_THROWS_AS(loss_distill(ps, TensorD::zeros({1, 3}), 1.0, false), DimensionError);
    CHECK_THROWS_AS(loss_distill(ps, pt, 0.0, false), ValidationError);
}

TEST_CASE("distillation gradients never reach the teacher") {
    auto s = random_tensor({3, 4}, 3);
    auto t = random_tensor({3, 4}, 4);
    loss_distill(s, t, 2.0, true).backward();
    CHECK(s.has_grad());
    CHECK_FALSE(t.has_grad());
}

TEST_CASE("classification loss examples") {
    auto zeros = Tensor::zeros({3, 2});
    CHECK(std::abs(loss_cls(zeros, {0, 1, 1}).item() - std::log(2.0)) < 1e-7);
    auto sure = Tensor::from_values({1, 3}, {0, 30, 0});
    CHECK(loss_cls(sure, {1}).item() < 1e-12);
    CHECK_THROWS_AS(loss_cls(zeros, {0, 2, 1}), ValidationError);
    CHECK_THROWS_AS(loss_cls(zeros, {0, 1}), DimensionError);

    auto z = random_tensor({4, 3}, 5);
    const std::vector<int> y{2, 0, 1, 1};
    loss_cls(z, y).backward();
    for (std::size_t b = 0; b < 4; ++b) {
        double mx = -1e9, total = 0;
        for (std::size_t c = 0; c < 3; ++c) mx = std::max(mx, z.data()[b * 3 + c]);
        for (std::size_t c = 0; c < 3; ++c) total += std::exp(z.data()[b * 3 + c] - mx);
        for (std::size_t c = 0; c < 3; ++c) {
            const double sm = std::exp(z.data()[b * 3 + c] - mx) / total;
            const double want = (sm - (int(c) == y[b] ? 1.0 : 0.0)) / 4.0;
            CHECK(z.grad()[b * 3 + c] == doctest::Approx(want).epsilon(1e-10));
        }
    }
}

TEST_CASE("total loss endpoints are exact and the midpoint is the mean") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto s = random_tensor<float>({6, 4}, seed, -3, 3, false);
        auto t = random_tensor<float>({6, 4}, seed + 50, -3, 3, false);
        const std::vector<int> y{0, 1, 2, 3, 0, 1};
        TrainConfig cfg;
        cfg.tau = 1.5;
        const float cls = loss_cls(s, y).item();
        const float dis = loss_distill(s, t, cfg.tau, cfg.tau_square_scaling).item();
        cfg.alpha = 0.0;
        CHECK(loss_total(s, y, Tensor(), cfg).item() == cls);
        cfg.alpha = 1.0;
        CHECK(loss_total(s, y, t, cfg).item() == dis);
        cfg.alpha = 0.5;
        CHECK(std::abs(double(loss_total(s, y, t, cfg).item()) - 0.5 * (double(cls) + double(dis))) < 1e-6);
        auto sd = tensor_cast<double>(s), td = tensor_cast<double>(t);
        const double mid = loss_total(sd, y, td, cfg).item();
        const double want = 0.5 * loss_cls(sd, y).item() + 0.5 * loss_distill(sd, td, cfg.tau, false).item();
        CHECK(std::abs(mid - want) < 1e-7);
    }
}

TEST_CASE("train config validation") {
    TrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.alpha = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = {};
    cfg.tau = 0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = {};
    cfg.lr = -1;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = {};
    cfg.epochs = -1;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    CHECK(parse_schedule("cosine") == Schedule::kCosine);
    CHECK_THROWS_AS(parse_schedule("step"), ValidationError);
}

TEST_CASE("optimizer: decay-only path is exact") {
    auto p = random_tensor<float>({10}, 6, -2, 2, false);
    const std::vector<float> before(p.data().begin(), p.data().end());
    TrainConfig cfg;
    cfg.weight_decay = 0.05;
    auto state = init_opt_state({p});
    opt_step({p}, state, cfg, 0.01);
    for (std::size_t i = 0; i < 10; ++i) CHECK(p.data()[i] == float(double(before[i]) * (1.0 - 0.01 * 0.05)));
}

TEST_CASE("optimizer: one step on x^2 matches a hand-rolled update") {
    auto x = Tensor::from_values({1}, {1.0f}, true);
    sum(mul(x, x)).backward();
    TrainConfig cfg;
    cfg.weight_decay = 0.0;
    auto state = init_opt_state({x});
    opt_step({x}, state, cfg, 0.1);
    const double g = 2.0;
    const double m = (1 - 0.9) * g, v = (1 - 0.999) * g * g;
    const double mhat = m / (1 - 0.9), vhat = v / (1 - 0.999);
    const double want = 1.0 - 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
    CHECK(x.data()[0] == float(want));
    CHECK(state.step == 1);
}

TEST_CASE("optimizer: clipping and non-finite gradients") {
    auto x = Tensor::from_values({2}, {0.0f, 0.0f}, true);
    sum(scale(x, 100.0f)).backward();
    TrainConfig cfg;
    cfg.weight_decay = 0;
    cfg.grad_clip = 1.0;
    auto state = init_opt_state({x});
    const double norm = opt_step({x}, state, cfg, 0.1);
    CHECK(norm == doctest::Approx(std::sqrt(2.0) * 100));
    CHECK(state.m[0][0] == doctest::Approx(0.1 * 100 / (norm + 1e-6)));

    x.grad()[1] = std::nanf("");
    CHECK_THROWS_AS(opt_step({x}, state, cfg, 0.1), NumericError);
}

TEST_CASE("optimizer on a tied model keeps stages aliased and updates M storages") {
    const auto plan = custom_plan({2, 2});
    auto aux = build_aux<float>(tiny_config(4), plan, 7);
    const auto snapshot = clone_model(aux);
    auto [tr, va] = tiny_task();
    TrainConfig cfg;
    cfg.alpha = 0;
    cfg.epochs = 1;
    cfg.batch_size = 64;
    train_model(aux, tr, va, cfg);
    CHECK(aux.layers.size() == 2);
    CHECK(aux.unique_tensors().size() == 2 * kTensorsPerLayer + kSharedTensors);
    CHECK(matches_plan(aux, plan));
    CHECK(aux.at_position(0).qkv_weight.shares_storage(aux.at_position(1).qkv_weight));
    for (std::size_t m = 0; m < 2; ++m) CHECK_FALSE(testing::bit_equal(aux.layers[m].fc1_weight, snapshot.layers[m].fc1_weight));
}

TEST_CASE("teacher cache: size, reload, staleness") {
    auto [tr, va] = tiny_task();
    const auto teacher = build_model<float>(tiny_config(2), 8);
    const auto cache = cache_teacher_logits(teacher, tr);
    CHECK(cache.logits.numel() == tr.size() * 3);
    CHECK(cache.dataset_hash == tr.content_hash);
    const auto path = testing::temp_path("teacher.lc");
    save_logit_cache(path, cache);
    const auto back = load_logit_cache(path);
    CHECK(testing::bit_equal(back.logits, cache_teacher_logits(teacher, tr).logits));
    CHECK_THROWS_AS(back.check(va), StaleCacheError);
    CHECK_THROWS_AS(cached_teacher(back, va), StaleCacheError);
    try {
        back.check(va);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kStaleCache);
    }
}

TEST_CASE("training from the cache equals training against the live teacher") {
    auto [tr, va] = tiny_task(40);
    const auto teacher = build_model<float>(tiny_config(3, 16), 9);
    const auto teacher_copy = clone_model(teacher);
    TrainConfig cfg;
    cfg.alpha = 0.7;
    cfg.tau = 2.0;
    cfg.epochs = 1;
    cfg.batch_size = 15;  // two batches
    auto a = build_model<float>(tiny_config(2), 10);
    auto b = clone_model(a);
    const auto ma = train_model(a, tr, va, cfg, cached_teacher(cache_teacher_logits(teacher, tr), tr));
    const auto mb = train_model(b, tr, va, cfg, live_teacher(teacher));
    REQUIRE(ma.step_losses.size() == 2);
    CHECK(ma.step_losses == mb.step_losses);
    CHECK(metrics_csv(ma) == metrics_csv(mb));
    std::vector<Tensor> x, y;
    const_cast<Model&>(teacher).for_each_unique([&](const std::string&, Tensor& t) { x.push_back(t); });
    const_cast<Model&>(teacher_copy).for_each_unique([&](const std::string&, Tensor& t) { y.push_back(t); });
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(testing::bit_equal(x[i], y[i]));
}

TEST_CASE("train_model contracts") {
    auto [tr, va] = tiny_task();
    auto model = build_model<float>(tiny_config(2), 11);
    TrainConfig cfg;
    cfg.epochs = 0;
    cfg.alpha = 0;
    const auto snap = train_model(model, tr, va, cfg);
    CHECK(snap.epochs.size() == 1);
    CHECK(snap.no_tune().epoch == 0);
    CHECK(snap.step_losses.empty());

    int calls = 0;
    TeacherFn counting = [&](const Batch& b) {
        ++calls;
        return Tensor::zeros({b.labels.size(), 3});
    };
    cfg.epochs = 1;
    train_model(model, tr, va, cfg, counting);
    CHECK(calls == 0);
    cfg.alpha = 0.5;
    CHECK_THROWS_AS(train_model(model, tr, va, cfg), ValidationError);

    TeacherFn broken = [](const Batch& b) {
        return Tensor::full({b.labels.size(), 3}, std::numeric_limits<float>::quiet_NaN());
    };
    CHECK_THROWS_AS(train_model(model, tr, va, cfg, broken), NumericError);

    auto wrong = make_synthetic(20, 4, 8, 1);
    cfg.alpha = 0;
    CHECK_THROWS_AS(train_model(model, wrong, wrong, cfg), ValidationError);
}

TEST_CASE("training replays bitwise under the same seed") {
    auto [tr, va] = tiny_task();
    TrainConfig cfg;
    cfg.alpha = 0;
    cfg.epochs = 2;
    cfg.batch_size = 16;
    cfg.seed = 12;
    auto a = build_model<float>(tiny_config(2), 13);
    auto b = build_model<float>(tiny_config(2), 13);
    const auto ma = train_model(a, tr, va, cfg);
    const auto mb = train_model(b, tr, va, cfg);
    CHECK(metrics_csv(ma) == metrics_csv(mb));
    CHECK(ma.step_losses == mb.step_losses);
    CHECK(testing::bit_equal(a.head_weight, b.head_weight));
    CHECK(metrics_csv(ma).rfind("epoch,train_loss,val_loss,top1,seconds\n0,", 0) == 0);
    CHECK(metrics_summary(ma).find("final_top1=") != std::string::npos);

    cfg.seed = 14;
    auto c = build_model<float>(tiny_config(2), 13);
    CHECK(train_model(c, tr, va, cfg).step_losses != ma.step_losses);
}

TEST_CASE("evaluation: chance level, determinism, recomputation") {
    const auto data = make_synthetic(300, 10, 16, 5);
    ModelConfig cfg;
    cfg.depth = 2;
    const auto model = build_model<float>(cfg, 15);
    const auto r1 = evaluate(model, data);
    const auto r2 = evaluate(model, data, 7);
    CHECK(r1.loss == r2.loss);
    CHECK(r1.top1 == r2.top1);
    const double sigma = std::sqrt(0.1 * 0.9 / 300);
    CHECK(std::abs(r1.top1 - 0.1) <= 3 * sigma);

    const auto logits = predict_logits(model, data);
    double loss = 0;
    int correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        std::vector<double> row(logits.data().begin() + i * 10, logits.data().begin() + (i + 1) * 10);
        const double mx = *std::max_element(row.begin(), row.end());
        double total = 0;
        for (double v : row) total += std::exp(v - mx);
        loss -= (row[data.labels[i]] - mx) - std::log(total);
        correct += std::max_element(row.begin(), row.end()) - row.begin() == data.labels[i];
    }
    CHECK(std::abs(r1.loss - loss / 300) < 1e-5);
    CHECK(r1.top1 == double(correct) / 300);
    CHECK_THROWS_AS(evaluate_logits(logits, {}), ValidationError);
}

TEST_CASE("cosine schedule") {
    TrainConfig cfg;
    cfg.lr = 0.2;
    CHECK(scheduled_lr(cfg, 0, 10) == 0.2);
    CHECK(scheduled_lr(cfg, 5, 10) == doctest::Approx(0.1));
    CHECK(scheduled_lr(cfg, 9, 10) > 0.0);
    cfg.schedule = Schedule::kConstant;
    CHECK(scheduled_lr(cfg, 9, 10) == 0.2);
}
