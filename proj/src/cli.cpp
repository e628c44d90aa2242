#include "sws/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "sws/artifacts.hpp"
#include "sws/error.hpp"
#include "sws/expand.hpp"
#include "sws/sharing.hpp"

namespace sws::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kExitCodes =
    "Exit codes:\n"
    "  0  success\n"
    "  1  internal error\n"
    "  2  invalid configuration or arguments\n"
    "  3  I/O failure (missing or unwritable file)\n"
    "  4  malformed artifact (bad magic, wrong kind, overlap, truncation, version)\n"
    "  5  stale teacher-logit cache (dataset hash mismatch)\n"
    "  6  numeric failure (non-finite loss, gradient or logits)\n";

// Shortest of %.15g / %.17g that reads back exactly.
std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.15g", v);
    if (std::strtod(buf, nullptr) != v) std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_top1(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::vector<int> parse_int_list(const std::string& text, const char* what) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const int v = std::stoi(item, &used);
            while (used < item.size() && item[used] == ' ') ++used;
            if (used != item.size()) throw std::invalid_argument(item);
            out.push_back(v);
        } catch (const std::exception&) {
            throw ValidationError(std::string("bad ") + what + " list '" + text + "'");
        }
    }
    if (out.empty()) throw ValidationError(std::string("empty ") + what + " list");
    return out;
}

// Run-level state shared by every subcommand.
struct Context {
    ExperimentConfig cfg;
    std::string command;
    std::vector<std::pair<std::string, std::string>> inputs;     // name -> path
    std::vector<std::pair<std::string, std::string>> artifacts;  // name -> file
    std::vector<std::pair<std::string, std::string>> extra;
    std::ostream* out = nullptr;

    std::string path(const std::string& name) const { return (fs::path(cfg.out) / name).string(); }

    void publish(const std::string& name, const std::string& text) {
        write_text_atomic(path(name), text);
        artifacts.emplace_back(name, path(name));
    }
    void record(const std::string& name) { artifacts.emplace_back(name, path(name)); }

    void write_manifest() {
        std::ostringstream m;
        m << "command=" << command << '\n';
        for (const auto& [k, v] : config_entries(cfg)) m << "config." << k << '=' << v << '\n';
        for (const auto& [k, v] : extra) m << k << '=' << v << '\n';
        for (const auto& [k, p] : inputs) {
            m << "input." << k << '=' << p << '\n';
            m << "input." << k << ".fnv1a=" << file_digest(p) << '\n';
        }
        for (const auto& [k, p] : artifacts) m << "artifact." << k << ".fnv1a=" << file_digest(p) << '\n';
        write_text_atomic(path("manifest.txt"), m.str());
    }
};

StagePlan resolve_plan(const ExperimentConfig& cfg) {
    if (!cfg.plan_sizes.empty()) {
        if (cfg.plan_stages > 0) throw ValidationError("set either plan.sizes or plan.stages, not both");
        return StagePlan::parse(cfg.plan_sizes);
    }
    if (cfg.plan_stages > 0) return balanced_plan(cfg.model.depth, cfg.plan_stages);
    throw ValidationError("train-aux needs plan.sizes or plan.stages");
}

void validate_data_section(const DataSection& d) {
    if (d.source == "synthetic") {
        if (d.count < 2 || d.classes < 1 || d.size < 1) throw ValidationError("data: count, classes, size must be positive");
    } else if (d.source == "idx") {
        if (d.images.empty() || d.labels.empty()) throw ValidationError("data: idx source needs images and labels");
        if (d.val_images.empty() != d.val_labels.empty()) {
            throw ValidationError("data: val_images and val_labels go together");
        }
    } else {
        throw ValidationError("data.source must be synthetic or idx, got '" + d.source + "'");
    }
    if (!(d.train_fraction > 0.0 && d.train_fraction < 1.0)) throw ValidationError("data.train_fraction must lie in (0, 1)");
}

void check_data_fits(const Dataset& data, const ModelConfig& model) {
    if (data.classes != model.classes) {
        throw ValidationError("dataset has " + std::to_string(data.classes) + " classes, model expects " +
                              std::to_string(model.classes));
    }
    if (data.height != static_cast<std::size_t>(model.image_size) ||
        data.width != static_cast<std::size_t>(model.image_size) ||
        data.channels != static_cast<std::size_t>(model.channels)) {
        throw ValidationError("dataset images are " + std::to_string(data.channels) + "x" +
                              std::to_string(data.height) + "x" + std::to_string(data.width) +
                              ", model expects " + std::to_string(model.channels) + "x" +
                              std::to_string(model.image_size) + "x" + std::to_string(model.image_size));
    }
}

void validate_common(const ExperimentConfig& cfg) {
    cfg.model.validate();
    cfg.train.validate();
    validate_data_section(cfg.data);
    if (cfg.out.empty()) throw ValidationError("--out must not be empty");
}

ModelConfig teacher_config(const ExperimentConfig& cfg) {
    ModelConfig t = cfg.model;
    if (cfg.teacher.depth > 0) t.depth = cfg.teacher.depth;
    if (cfg.teacher.width > 0) t.width = cfg.teacher.width;
    if (cfg.teacher.heads > 0) t.heads = cfg.teacher.heads;
    if (cfg.teacher.mlp_ratio > 0) t.mlp_ratio = cfg.teacher.mlp_ratio;
    t.validate();
    return t;
}

TrainConfig finetune_config(const ExperimentConfig& cfg) {
    TrainConfig t = cfg.train;
    t.alpha = cfg.finetune.alpha;
    if (cfg.finetune.epochs >= 0) t.epochs = cfg.finetune.epochs;
    if (cfg.finetune.lr > 0) t.lr = cfg.finetune.lr;
    t.validate();
    return t;
}

nlohmann::json run_info(const Context& ctx) {
    return {{"command", ctx.command}, {"seed", ctx.cfg.seed}};
}

void write_metrics(Context& ctx, const Metrics& metrics) {
    ctx.publish("metrics.csv", metrics_csv(metrics, ctx.cfg.timing));
    ctx.publish("summary.txt", metrics_summary(metrics));
}

TeacherFn teacher_from(Context& ctx, const std::string& cache_path, const Dataset& train, double alpha) {
    if (alpha == 0.0) return nullptr;
    if (cache_path.empty()) throw ValidationError("train.alpha > 0 needs --teacher-cache");
    ctx.inputs.emplace_back("teacher_cache", cache_path);
    return cached_teacher(load_logit_cache(cache_path), train);
}

void prepare_out(const Context& ctx) {
    std::error_code ec;
    fs::create_directories(ctx.cfg.out, ec);
    if (ec) throw IoError("cannot create output directory " + ctx.cfg.out);
}

void cmd_train_teacher(Context& ctx) {
    auto& cfg = ctx.cfg;
    validate_common(cfg);
    const ModelConfig tcfg = teacher_config(cfg);
    TrainConfig train = cfg.train;
    train.alpha = 0.0;
    auto [tr, va] = load_data(cfg.data);
    check_data_fits(tr, tcfg);
    prepare_out(ctx);

    Model teacher = build_model<float>(tcfg, cfg.seed);
    const auto metrics = train_model(teacher, tr, va, train);
    save_checkpoint(ctx.path("teacher.ckpt"), teacher, run_info(ctx));
    ctx.record("teacher.ckpt");
    save_logit_cache(ctx.path("teacher_logits.lc"), cache_teacher_logits(teacher, tr));
    ctx.record("teacher_logits.lc");
    write_metrics(ctx, metrics);
    ctx.extra.emplace_back("dataset.train.fnv1a", hex64(tr.content_hash));
    ctx.write_manifest();
    *ctx.out << "teacher top1=" << fmt_top1(metrics.last().top1) << '\n';
}

void cmd_train_aux(Context& ctx, const std::string& cache_path) {
    auto& cfg = ctx.cfg;
    validate_common(cfg);
    const StagePlan plan = resolve_plan(cfg);
    if (plan.depth() != cfg.model.depth) {
        throw ValidationError("plan " + plan.to_string() + " covers " + std::to_string(plan.depth()) +
                              " layers, model.depth is " + std::to_string(cfg.model.depth));
    }
    auto [tr, va] = load_data(cfg.data);
    check_data_fits(tr, cfg.model);
    const TeacherFn teacher = teacher_from(ctx, cache_path, tr, cfg.train.alpha);
    prepare_out(ctx);

    Model aux = build_aux<float>(cfg.model, plan, cfg.seed);
    const auto metrics = train_model(aux, tr, va, cfg.train, teacher);
    Provenance prov;
    prov.epochs = cfg.train.epochs;
    prov.seed = cfg.seed;
    prov.alpha = cfg.train.alpha;
    prov.tau = cfg.train.tau;
    prov.tau_square_scaling = cfg.train.tau_square_scaling;
    prov.dataset_hash = tr.content_hash;
    prov.note = "plan " + plan.to_string();
    save_checkpoint(ctx.path("aux.ckpt"), aux, run_info(ctx));
    ctx.record("aux.ckpt");
    save_learngene(ctx.path("learngene.lg"), extract_learngene(aux, plan, prov));
    ctx.record("learngene.lg");
    write_metrics(ctx, metrics);
    ctx.extra.emplace_back("plan", plan.to_string());
    ctx.extra.emplace_back("dataset.train.fnv1a", hex64(tr.content_hash));
    ctx.write_manifest();
    *ctx.out << "aux top1=" << fmt_top1(metrics.last().top1) << " unique_params=" << count_params(aux, true)
             << '\n';
}

DescendantSpec make_spec(int depth, const std::string& strategy, const std::string& order, std::uint64_t seed,
                         int classes) {
    DescendantSpec spec;
    spec.depth = depth;
    spec.strategy = parse_strategy(strategy);
    spec.order = InitOrder::parse(order);
    spec.seed = seed;
    spec.classes = classes;
    return spec;
}

void cmd_init_des(Context& ctx, const std::string& pack_path, int depth, const std::string& strategy,
                  const std::string& order, int classes) {
    if (pack_path.empty()) throw ValidationError("init-des needs --pack");
    const auto spec = make_spec(depth, strategy, order, ctx.cfg.seed, classes);
    ctx.inputs.emplace_back("pack", pack_path);
    const auto pack = load_learngene(pack_path);
    spec.validate(pack.plan.stages());
    prepare_out(ctx);
    const Model des = init_descendant(pack, spec);
    save_checkpoint(ctx.path("descendant.ckpt"), des, run_info(ctx));
    ctx.record("descendant.ckpt");
    ctx.publish("assignment.csv", assignment_csv(assignment_report(pack, spec)));
    ctx.extra.emplace_back("descendant.depth", std::to_string(depth));
    ctx.extra.emplace_back("descendant.strategy", to_string(spec.strategy));
    ctx.extra.emplace_back("descendant.order", spec.order.to_string());
    ctx.write_manifest();
    *ctx.out << "descendant depth=" << depth << " params=" << count_params(des, false) << '\n';
}

void cmd_finetune(Context& ctx, const std::string& ckpt_path, const std::string& cache_path) {
    auto& cfg = ctx.cfg;
    if (ckpt_path.empty()) throw ValidationError("finetune needs --checkpoint");
    validate_common(cfg);
    const TrainConfig train = finetune_config(cfg);
    ctx.inputs.emplace_back("checkpoint", ckpt_path);
    Model model = load_checkpoint(ckpt_path);
    auto [tr, va] = load_data(cfg.data);
    check_data_fits(tr, model.config);
    const TeacherFn teacher = teacher_from(ctx, cache_path, tr, train.alpha);
    prepare_out(ctx);
    const auto metrics = train_model(model, tr, va, train, teacher);
    save_checkpoint(ctx.path("finetuned.ckpt"), model, run_info(ctx));
    ctx.record("finetuned.ckpt");
    write_metrics(ctx, metrics);
    ctx.write_manifest();
    *ctx.out << "finetuned top1=" << fmt_top1(metrics.last().top1) << '\n';
}

std::string eval_line(const EvalResult& r) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "loss=%.9g top1=%.6f", r.loss, r.top1);
    return buf;
}

void cmd_eval(Context& ctx, const std::string& ckpt_path, const std::string& which) {
    auto& cfg = ctx.cfg;
    if (ckpt_path.empty()) throw ValidationError("eval needs --checkpoint");
    if (which != "val" && which != "train") throw ValidationError("--split must be val or train");
    validate_data_section(cfg.data);
    ctx.inputs.emplace_back("checkpoint", ckpt_path);
    const Model model = load_checkpoint(ckpt_path);
    auto [tr, va] = load_data(cfg.data);
    check_data_fits(tr, model.config);
    prepare_out(ctx);
    const auto r = evaluate(model, which == "val" ? va : tr);
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s,%.9g,%.6f\n", which.c_str(), r.loss, r.top1);
    ctx.publish("eval.csv", std::string("split,loss,top1\n") + buf);
    ctx.write_manifest();
    *ctx.out << eval_line(r) << '\n';
}

void cmd_sweep_depth(Context& ctx, const std::string& pack_path, const std::string& vanilla_path,
                     const std::string& depths_text, const std::string& strategy, const std::string& order,
                     bool scratch) {
    auto& cfg = ctx.cfg;
    if (pack_path.empty() || vanilla_path.empty()) throw ValidationError("sweep-depth needs --pack and --vanilla");
    validate_common(cfg);
    const auto depths = parse_int_list(depths_text, "depth");
    ctx.inputs.emplace_back("pack", pack_path);
    ctx.inputs.emplace_back("vanilla", vanilla_path);
    const auto pack = load_learngene(pack_path);
    const Model vanilla = load_checkpoint(vanilla_path);
    if (vanilla.is_tied()) throw ValidationError("--vanilla must be an untied model");
    if (vanilla.config.width != pack.config.width || vanilla.config.heads != pack.config.heads) {
        throw ValidationError("vanilla and learngene widths differ");
    }
    auto [tr, va] = load_data(cfg.data);
    check_data_fits(tr, pack.config);
    TrainConfig scratch_train = cfg.train;
    scratch_train.alpha = 0.0;
    for (int d : depths) {
        make_spec(d, strategy, order, cfg.seed, 0).validate(pack.plan.stages());
        make_spec(d, strategy, order, cfg.seed, 0).validate(vanilla.depth());
    }
    prepare_out(ctx);

    std::string csv = "depth,params,method,val_loss,top1\n";
    auto row = [&](int depth, std::size_t params, const char* method, const EvalResult& r) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%d,%zu,%s,%.9g,%.6f\n", depth, params, method, r.loss, r.top1);
        csv += buf;
    };
    for (int d : depths) {
        const auto spec = make_spec(d, strategy, order, cfg.seed, 0);
        const Model sws_model = init_descendant(pack, spec);
        row(d, count_params(sws_model, false), "sws", evaluate(sws_model, va));
        const Model lg = simple_lg_expand(vanilla, spec);
        row(d, count_params(lg, false), "simple-lg", evaluate(lg, va));
        if (scratch) {
            ModelConfig mc = pack.config;
            mc.depth = d;
            Model s = build_model<float>(mc, cfg.seed);
            const auto metrics = train_model(s, tr, va, scratch_train);
            row(d, count_params(s, false), "scratch", {metrics.last().val_loss, metrics.last().top1});
        }
    }
    ctx.publish("sweep.csv", csv);
    ctx.extra.emplace_back("sweep.depths", depths_text);
    ctx.write_manifest();
    *ctx.out << csv;
}

void add_experiment_options(CLI::App* sub, ExperimentConfig& cfg) {
    sub->add_option("--config", "TOML config file; [section] key = value maps to --section.key")
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", cfg.seed, "Seed for initialization and shuffling")->capture_default_str();
    sub->add_option("--out", cfg.out, "Output directory")->capture_default_str();
    sub->add_flag("--timing", cfg.timing, "Write wall-clock seconds into metrics.csv (breaks byte-identical replays)");

    auto& m = cfg.model;
    sub->add_option("--model.image_size", m.image_size)->capture_default_str()->group("Model");
    sub->add_option("--model.patch_size", m.patch_size)->capture_default_str()->group("Model");
    sub->add_option("--model.channels", m.channels)->capture_default_str()->group("Model");
    sub->add_option("--model.depth", m.depth)->capture_default_str()->group("Model");
    sub->add_option("--model.width", m.width)->capture_default_str()->group("Model");
    sub->add_option("--model.heads", m.heads)->capture_default_str()->group("Model");
    sub->add_option("--model.mlp_ratio", m.mlp_ratio)->capture_default_str()->group("Model");
    sub->add_option("--model.classes", m.classes)->capture_default_str()->group("Model");

    sub->add_option("--plan.sizes", cfg.plan_sizes, "Explicit stage sizes, e.g. 3,3,4,3,3")->group("Plan");
    sub->add_option("--plan.stages", cfg.plan_stages, "Balanced plan with this many stages")->group("Plan");

    auto& t = cfg.train;
    sub->add_option("--train.alpha", t.alpha)->capture_default_str()->group("Train");
    sub->add_option("--train.tau", t.tau)->capture_default_str()->group("Train");
    sub->add_option("--train.tau_square_scaling", t.tau_square_scaling)->capture_default_str()->group("Train");
    sub->add_option("--train.lr", t.lr)->capture_default_str()->group("Train");
    sub->add_option("--train.beta1", t.beta1)->capture_default_str()->group("Train");
    sub->add_option("--train.beta2", t.beta2)->capture_default_str()->group("Train");
    sub->add_option("--train.eps_opt", t.eps_opt)->capture_default_str()->group("Train");
    sub->add_option("--train.weight_decay", t.weight_decay)->capture_default_str()->group("Train");
    sub->add_option("--train.epochs", t.epochs)->capture_default_str()->group("Train");
    sub->add_option("--train.batch_size", t.batch_size)->capture_default_str()->group("Train");
    sub->add_option_function<std::string>(
           "--train.schedule", [&t](const std::string& s) { t.schedule = parse_schedule(s); },
           "constant or cosine (default cosine)")
        ->group("Train");
    sub->add_option_function<double>(
           "--train.grad_clip", [&t](double v) { t.grad_clip = v > 0 ? std::optional<double>(v) : std::nullopt; },
           "Global gradient-norm clip; 0 disables (default)")
        ->group("Train");

    auto& d = cfg.data;
    sub->add_option("--data.source", d.source, "synthetic or idx")->capture_default_str()->group("Data");
    sub->add_option("--data.count", d.count)->capture_default_str()->group("Data");
    sub->add_option("--data.classes", d.classes)->capture_default_str()->group("Data");
    sub->add_option("--data.size", d.size)->capture_default_str()->group("Data");
    sub->add_option("--data.seed", d.data_seed)->capture_default_str()->group("Data");
    sub->add_option("--data.train_fraction", d.train_fraction)->capture_default_str()->group("Data");
    sub->add_option("--data.split_seed", d.split_seed)->capture_default_str()->group("Data");
    sub->add_option("--data.images", d.images)->group("Data");
    sub->add_option("--data.labels", d.labels)->group("Data");
    sub->add_option("--data.val_images", d.val_images)->group("Data");
    sub->add_option("--data.val_labels", d.val_labels)->group("Data");

    sub->add_option("--teacher.depth", cfg.teacher.depth, "0 inherits model.depth")->group("Teacher");
    sub->add_option("--teacher.width", cfg.teacher.width, "0 inherits model.width")->group("Teacher");
    sub->add_option("--teacher.heads", cfg.teacher.heads, "0 inherits model.heads")->group("Teacher");
    sub->add_option("--teacher.mlp_ratio", cfg.teacher.mlp_ratio, "0 inherits model.mlp_ratio")->group("Teacher");

    sub->add_option("--finetune.alpha", cfg.finetune.alpha)->capture_default_str()->group("Finetune");
    sub->add_option("--finetune.epochs", cfg.finetune.epochs, "-1 inherits train.epochs")->group("Finetune");
    sub->add_option("--finetune.lr", cfg.finetune.lr, "-1 inherits train.lr")->group("Finetune");
}

// Turns the file named by --config into --section.key=value arguments placed
// right after the subcommand, so explicit flags (which come later) win.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
    std::string path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
        if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
    }
    if (path.empty()) return args;
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    std::vector<std::string> injected;
    try {
        CLI::ConfigTOML parser;
        for (const auto& item : parser.from_config(in)) {
            if (item.name == "++" || item.name == "--") continue;
            std::string value;
            for (std::size_t i = 0; i < item.inputs.size(); ++i) value += (i ? "," : "") + item.inputs[i];
            injected.push_back("--" + item.fullname() + "=" + value);
        }
    } catch (const CLI::Error& e) {
        throw ValidationError("config " + path + ": " + e.what());
    }
    std::vector<std::string> out;
    bool placed = false;
    for (const auto& a : args) {
        out.push_back(a);
        if (!placed && !a.empty() && a[0] != '-') {
            out.insert(out.end(), injected.begin(), injected.end());
            placed = true;
        }
    }
    return out;
}

}  // namespace

std::pair<Dataset, Dataset> load_data(const DataSection& d) {
    validate_data_section(d);
    if (d.source == "synthetic") {
        const Dataset full = make_synthetic(d.count, d.classes, d.size, d.data_seed);
        return split(full, d.train_fraction, d.split_seed);
    }
    Dataset full = load_idx(d.images, d.labels, d.classes);
    if (!d.val_images.empty()) {
        Dataset val = load_idx(d.val_images, d.val_labels, d.classes);
        full.split = "train";
        val.split = "val";
        return {std::move(full), std::move(val)};
    }
    return split(full, d.train_fraction, d.split_seed);
}

std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& c) {
    std::vector<std::pair<std::string, std::string>> e;
    auto i = [&](const char* k, long long v) { e.emplace_back(k, std::to_string(v)); };
    auto u = [&](const char* k, std::uint64_t v) { e.emplace_back(k, std::to_string(v)); };
    auto f = [&](const char* k, double v) { e.emplace_back(k, fmt_double(v)); };
    auto s = [&](const char* k, const std::string& v) { e.emplace_back(k, v); };
    u("seed", c.seed);
    i("model.image_size", c.model.image_size);
    i("model.patch_size", c.model.patch_size);
    i("model.channels", c.model.channels);
    i("model.depth", c.model.depth);
    i("model.width", c.model.width);
    i("model.heads", c.model.heads);
    f("model.mlp_ratio", c.model.mlp_ratio);
    i("model.classes", c.model.classes);
    s("plan.sizes", c.plan_sizes);
    i("plan.stages", c.plan_stages);
    f("train.alpha", c.train.alpha);
    f("train.tau", c.train.tau);
    s("train.tau_square_scaling", c.train.tau_square_scaling ? "true" : "false");
    f("train.lr", c.train.lr);
    f("train.beta1", c.train.beta1);
    f("train.beta2", c.train.beta2);
    f("train.eps_opt", c.train.eps_opt);
    f("train.weight_decay", c.train.weight_decay);
    i("train.epochs", c.train.epochs);
    i("train.batch_size", c.train.batch_size);
    s("train.schedule", to_string(c.train.schedule));
    f("train.grad_clip", c.train.grad_clip.value_or(0.0));
    s("data.source", c.data.source);
    i("data.count", c.data.count);
    i("data.classes", c.data.classes);
    i("data.size", c.data.size);
    u("data.seed", c.data.data_seed);
    f("data.train_fraction", c.data.train_fraction);
    u("data.split_seed", c.data.split_seed);
    s("data.images", c.data.images);
    s("data.labels", c.data.labels);
    s("data.val_images", c.data.val_images);
    s("data.val_labels", c.data.val_labels);
    i("teacher.depth", c.teacher.depth);
    i("teacher.width", c.teacher.width);
    i("teacher.heads", c.teacher.heads);
    f("teacher.mlp_ratio", c.teacher.mlp_ratio);
    f("finetune.alpha", c.finetune.alpha);
    i("finetune.epochs", c.finetune.epochs);
    f("finetune.lr", c.finetune.lr);
    return e;
}

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Stage-wise weight sharing learngene pipeline"};
    app.footer(kExitCodes);
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    Context ctx;
    ctx.out = &out;
    ExperimentConfig& cfg = ctx.cfg;

    std::string cache_path, ckpt_path, pack_path, vanilla_path, strategy = "cyclic-contiguous",
                                                                order = "front-mid-last", depths = "5,6,7,8",
                                                                which = "val";
    int depth = 0, classes = 0;
    bool scratch = false;

    auto* teacher = app.add_subcommand("train-teacher", "Train the teacher (alpha = 0) and cache its train-split logits");
    auto* aux = app.add_subcommand("train-aux", "Train the stage-wise tied Aux-Net and extract the learngene pack");
    aux->add_option("--teacher-cache", cache_path, "Teacher logit cache (needed when train.alpha > 0)");
    auto* init = app.add_subcommand("init-des", "Initialize a descendant of any depth from a learngene pack");
    init->add_option("--pack", pack_path, "Learngene pack")->required();
    init->add_option("--depth", depth, "Descendant depth")->required();
    init->add_option("--strategy", strategy, "cyclic-contiguous, cyclic-roundrobin or random")->capture_default_str();
    init->add_option("--order", order, "Initialization order, e.g. front-mid-last")->capture_default_str();
    init->add_option("--classes", classes, "Re-initialize the head for this many classes (0 keeps)");
    auto* fine = app.add_subcommand("finetune", "Fine-tune a checkpoint without weight sharing constraints");
    fine->add_option("--checkpoint", ckpt_path, "Checkpoint to fine-tune")->required();
    fine->add_option("--teacher-cache", cache_path, "Teacher logit cache (needed when finetune.alpha > 0)");
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint (loss and top-1) without tuning");
    eval->add_option("--checkpoint", ckpt_path, "Checkpoint to evaluate")->required();
    eval->add_option("--split", which, "val or train")->capture_default_str();
    auto* sweep = app.add_subcommand("sweep-depth", "No-tune comparison of SWS and Simple-LG descendants over depths");
    sweep->add_option("--pack", pack_path, "Learngene pack")->required();
    sweep->add_option("--vanilla", vanilla_path, "Untied vanilla checkpoint for Simple-LG")->required();
    sweep->add_option("--depths", depths, "Comma-separated depths")->capture_default_str();
    sweep->add_option("--strategy", strategy)->capture_default_str();
    sweep->add_option("--order", order)->capture_default_str();
    sweep->add_flag("--scratch", scratch, "Also train a scratch model (alpha = 0) at every depth");

    for (auto* sub : {teacher, aux, init, fine, eval, sweep}) {
        sub->footer(kExitCodes);
        add_experiment_options(sub, cfg);
    }

    try {
        auto args = expand_config(raw_args);
        std::reverse(args.begin(), args.end());
        try {
            app.parse(args);
        } catch (const CLI::ParseError& e) {
            const int code = app.exit(e, out, err);
            return code == 0 ? 0 : static_cast<int>(ErrorCode::kValidation);
        }
        ctx.command = app.get_subcommands().front()->get_name();
        if (teacher->parsed()) cmd_train_teacher(ctx);
        if (aux->parsed()) cmd_train_aux(ctx, cache_path);
        if (init->parsed()) cmd_init_des(ctx, pack_path, depth, strategy, order, classes);
        if (fine->parsed()) cmd_finetune(ctx, ckpt_path, cache_path);
        if (eval->parsed()) cmd_eval(ctx, ckpt_path, which);
        if (sweep->parsed()) cmd_sweep_depth(ctx, pack_path, vanilla_path, depths, strategy, order, scratch);
        return 0;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return static_cast<int>(e.code());
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return static_cast<int>(ErrorCode::kInternal);
    }
}

int run(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace sws::cli
