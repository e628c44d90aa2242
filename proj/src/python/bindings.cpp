#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "sws/artifacts.hpp"
#include "sws/cli.hpp"
#include "sws/data.hpp"
#include "sws/error.hpp"
#include "sws/expand.hpp"
#include "sws/sharing.hpp"
#include "sws/train.hpp"
#include "sws/vit.hpp"

namespace py = pybind11;
using namespace sws;

namespace {

py::array_t<float> to_array(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<float> out(shape);
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

Tensor from_array(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    return Tensor::from_values(std::move(shape), std::vector<float>(a.data(), a.data() + a.size()));
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

py::dict epoch_dict(const EpochRecord& r) {
    py::dict d;
    d["epoch"] = r.epoch;
    d["train_loss"] = r.train_loss;
    d["val_loss"] = r.val_loss;
    d["top1"] = r.top1;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Stage-wise weight sharing learngene pipeline";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());
    py::register_exception<NumericError>(m, "NumericError", base.ptr());
    py::register_exception<StaleCacheError>(m, "StaleCacheError", base.ptr());
    py::register_exception<FormatError>(m, "FormatError", base.ptr());

    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_readwrite("image_size", &ModelConfig::image_size)
        .def_readwrite("patch_size", &ModelConfig::patch_size)
        .def_readwrite("channels", &ModelConfig::channels)
        .def_readwrite("depth", &ModelConfig::depth)
        .def_readwrite("width", &ModelConfig::width)
        .def_readwrite("heads", &ModelConfig::heads)
        .def_readwrite("mlp_ratio", &ModelConfig::mlp_ratio)
        .def_readwrite("classes", &ModelConfig::classes)
        .def("validate", &ModelConfig::validate)
        .def("__eq__", [](const ModelConfig& a, const ModelConfig& b) { return a == b; });

    py::class_<StagePlan>(m, "StagePlan")
        .def_static("balanced", &StagePlan::balanced, py::arg("depth"), py::arg("stages"))
        .def_static("custom", &StagePlan::custom, py::arg("sizes"))
        .def_static("parse", &StagePlan::parse)
        .def_property_readonly("sizes", &StagePlan::sizes)
        .def_property_readonly("stages", &StagePlan::stages)
        .def_property_readonly("depth", &StagePlan::depth)
        .def("__eq__", [](const StagePlan& a, const StagePlan& b) { return a == b; })
        .def("__repr__", [](const StagePlan& p) { return "StagePlan(" + p.to_string() + ")"; });
    m.def("balanced_plan", &balanced_plan, py::arg("depth"), py::arg("stages"));
    m.def(
        "stage_partition",
        [](int depth, const StagePlan& plan, const std::string& order) {
            return stage_partition(depth, plan, InitOrder::parse(order));
        },
        py::arg("depth"), py::arg("plan"), py::arg("order") = "front-mid-last");

    py::class_<Dataset>(m, "Dataset")
        .def_property_readonly("size", &Dataset::size)
        .def_readonly("classes", &Dataset::classes)
        .def_readonly("labels", &Dataset::labels)
        .def_readonly("content_hash", &Dataset::content_hash)
        .def_property_readonly("images", [](const Dataset& d) {
            py::array_t<float> out({d.size(), d.channels, d.height, d.width});
            std::copy(d.images.begin(), d.images.end(), out.mutable_data());
            return out;
        });
    m.def("make_synthetic", &make_synthetic, py::arg("count"), py::arg("classes"), py::arg("size"), py::arg("seed"));
    m.def("split", &split, py::arg("data"), py::arg("train_fraction"), py::arg("seed"));
    m.def("load_idx", &load_idx, py::arg("images"), py::arg("labels"), py::arg("classes") = 0);

    py::class_<Model>(m, "Model")
        .def_readonly("config", &Model::config)
        .def_property_readonly("depth", &Model::depth)
        .def_property_readonly("is_tied", &Model::is_tied)
        .def_readonly("layer_index", &Model::layer_index)
        .def("param_count", [](const Model& model, bool unique_only) { return count_params(model, unique_only); },
             py::arg("unique_only") = true)
        .def("logits", [](const Model& model, const py::array_t<float, py::array::c_style | py::array::forcecast>& x) {
            NoGradGuard no_grad;
            return to_array(forward_logits(model, from_array(x)));
        });
    m.def("build_model", &build_model<float>, py::arg("config"), py::arg("seed"));
    m.def("build_aux", &build_aux<float>, py::arg("config"), py::arg("plan"), py::arg("seed"));

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("alpha", &TrainConfig::alpha)
        .def_readwrite("tau", &TrainConfig::tau)
        .def_readwrite("tau_square_scaling", &TrainConfig::tau_square_scaling)
        .def_readwrite("lr", &TrainConfig::lr)
        .def_readwrite("weight_decay", &TrainConfig::weight_decay)
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("grad_clip", &TrainConfig::grad_clip)
        .def_property(
            "schedule", [](const TrainConfig& c) { return to_string(c.schedule); },
            [](TrainConfig& c, const std::string& s) { c.schedule = parse_schedule(s); });

    py::class_<LogitCache>(m, "LogitCache")
        .def_property_readonly("logits", [](const LogitCache& c) { return to_array(c.logits); })
        .def_readonly("dataset_hash", &LogitCache::dataset_hash);
    m.def("cache_teacher_logits", [](const Model& t, const Dataset& d) { return cache_teacher_logits(t, d); });

    m.def(
        "train",
        [](Model& model, const Dataset& train, const Dataset& val, const TrainConfig& cfg,
           const LogitCache* teacher_cache) {
            TeacherFn teacher;
            if (teacher_cache) teacher = cached_teacher(*teacher_cache, train);
            Metrics metrics;
            {
                py::gil_scoped_release release;
                metrics = train_model(model, train, val, cfg, teacher);
            }
            py::list epochs;
            for (const auto& r : metrics.epochs) epochs.append(epoch_dict(r));
            return epochs;
        },
        py::arg("model"), py::arg("train"), py::arg("val"), py::arg("config"), py::arg("teacher_cache") = nullptr);
    m.def(
        "evaluate",
        [](const Model& model, const Dataset& data) {
            const auto r = evaluate(model, data);
            return py::make_tuple(r.loss, r.top1);
        },
        py::arg("model"), py::arg("data"));

    py::class_<LearngenePack>(m, "LearngenePack")
        .def_readonly("config", &LearngenePack::config)
        .def_readonly("plan", &LearngenePack::plan)
        .def_property_readonly("note", [](const LearngenePack& p) { return p.provenance.note; })
        .def("param_count", &LearngenePack::param_count);
    m.def(
        "extract_learngene",
        [](const Model& aux, const StagePlan& plan, const std::string& note) {
            Provenance prov;
            prov.note = note;
            return extract_learngene(aux, plan, prov);
        },
        py::arg("aux"), py::arg("plan"), py::arg("note") = "");
    m.def(
        "init_descendant",
        [](const LearngenePack& pack, int depth, const std::string& strategy, const std::string& order,
           std::uint64_t seed, int classes) {
            return init_descendant(pack, make_spec(depth, strategy, order, seed, classes));
        },
        py::arg("pack"), py::arg("depth"), py::arg("strategy") = "cyclic-contiguous",
        py::arg("order") = "front-mid-last", py::arg("seed") = 0, py::arg("classes") = 0);
    m.def(
        "simple_lg_expand",
        [](const Model& vanilla, int depth, const std::string& strategy, const std::string& order) {
            return simple_lg_expand(vanilla, make_spec(depth, strategy, order, 0, 0));
        },
        py::arg("vanilla"), py::arg("depth"), py::arg("strategy") = "cyclic-contiguous",
        py::arg("order") = "front-mid-last");

    m.def("save_checkpoint", [](const std::string& path, const Model& model) { save_checkpoint(path, model); });
    m.def("load_checkpoint", [](const std::string& path) { return load_checkpoint(path); });
    m.def("save_learngene", &save_learngene);
    m.def("load_learngene", &load_learngene);
    m.def("save_logit_cache", &save_logit_cache);
    m.def("load_logit_cache", &load_logit_cache);

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            int code;
            {
                py::gil_scoped_release release;
                code = cli::run(args, out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"));
}
