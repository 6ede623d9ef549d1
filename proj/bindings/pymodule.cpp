// Python bindings for the main operations: synthetic data, poisoning, training,
// evaluation, alignment, curves and the two defenses, plus the config-driven
// experiment pipeline.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <optional>
#include <utility>

#include "tsclab/checkpoint.hpp"
#include "tsclab/experiment.hpp"

namespace py = pybind11;
using namespace tsclab;

namespace {

Matrix matrix_from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw ArgumentError("expected a 2-d array");
    Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
    std::memcpy(m.data().data(), a.data(), sizeof(double) * m.size());
    return m;
}

py::array_t<double> matrix_to_numpy(const Matrix& m) {
    py::array_t<double> out({m.rows(), m.cols()});
    std::memcpy(out.mutable_data(), m.data().data(), sizeof(double) * m.size());
    return out;
}

Dataset dataset_from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& samples,
                           std::optional<std::vector<int>> labels, int num_classes, int height,
                           int width) {
    Dataset d;
    d.samples = matrix_from_numpy(samples);
    d.poison_mask.assign(d.samples.rows(), 0);
    if (labels) {
        d.labels = std::move(*labels);
        d.num_classes = num_classes;
    }
    d.image_height = height;
    d.image_width = width;
    d.validate();
    return d;
}

TriggerSpec make_trigger(const std::string& kind, int target_class, int height, int width,
                         int patch_size, double patch_value, double blend_alpha,
                         double signal_amplitude, double signal_frequency) {
    TriggerSpec t;
    t.target_class = target_class;
    if (kind == "patch") {
        PatchTrigger p;
        p.size = patch_size;
        p.row = height - patch_size;
        p.col = width - patch_size;
        p.value = patch_value;
        t.kind = p;
    } else if (kind == "blended") {
        t.kind = BlendedTrigger{default_blended_pattern(height, width), blend_alpha};
    } else if (kind == "signal") {
        t.kind = SignalTrigger{signal_amplitude, signal_frequency};
    } else {
        throw ArgumentError("trigger kind must be patch, blended or signal");
    }
    return t;
}

TrainKind kind_from_string(const std::string& kind) {
    if (kind == "supervised") return TrainKind::supervised_ce;
    if (kind == "contrastive") return TrainKind::contrastive_ntxent;
    throw ArgumentError("training kind must be supervised or contrastive");
}

} // namespace

PYBIND11_MODULE(tsclab, m) {
    m.doc() = "Desk-scale laboratory for weight-symmetry backdoor purification";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ArgumentError>(m, "ArgumentError", PyExc_ValueError);
    py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);

    py::class_<NetworkSpec>(m, "NetworkSpec")
        .def(py::init([](std::vector<int> dims, std::uint64_t seed) {
                 NetworkSpec spec;
                 spec.layer_dims = std::move(dims);
                 spec.seed = seed;
                 spec.validate();
                 return spec;
             }),
             py::arg("layer_dims"), py::arg("seed") = 0)
        .def_readonly("layer_dims", &NetworkSpec::layer_dims)
        .def_readonly("seed", &NetworkSpec::seed)
        .def("num_layers", &NetworkSpec::num_layers);

    py::class_<Weights>(m, "Weights")
        .def("num_params", &Weights::num_params)
        .def("all_finite", &Weights::all_finite)
        .def("layers",
             [](const Weights& w) {
                 py::list out;
                 for (const Layer& l : w.layers)
                     out.append(py::make_tuple(matrix_to_numpy(l.w),
                                               py::array_t<double>(
                                                   static_cast<py::ssize_t>(l.b.size()),
                                                   l.b.data())));
                 return out;
             },
             "Per-layer (weight matrix, bias vector) copies as numpy arrays.")
        .def("__eq__", [](const Weights& a, const Weights& b) { return a == b; });

    py::class_<Dataset>(m, "Dataset")
        .def(py::init(&dataset_from_numpy), py::arg("samples"), py::arg("labels") = py::none(),
             py::arg("num_classes") = 0, py::arg("height") = 0, py::arg("width") = 0)
        .def_property_readonly("samples", [](const Dataset& d) { return matrix_to_numpy(d.samples); })
        .def_property_readonly("labels",
                               [](const Dataset& d) -> py::object {
                                   if (!d.labels) return py::none();
                                   return py::cast(*d.labels);
                               })
        .def_property_readonly("poison_mask",
                               [](const Dataset& d) { return py::cast(d.poison_mask); })
        .def_readonly("num_classes", &Dataset::num_classes)
        .def_readonly("image_height", &Dataset::image_height)
        .def_readonly("image_width", &Dataset::image_width)
        .def("__len__", &Dataset::size);

    py::class_<TrainingMethod>(m, "TrainingMethod")
        .def(py::init([](const std::string& kind, double lr, int batch, int epochs,
                         double temperature, const std::string& schedule) {
                 TrainingMethod tm;
                 tm.kind = kind_from_string(kind);
                 tm.learning_rate = lr;
                 tm.batch_size = batch;
                 tm.epochs = epochs;
                 tm.temperature = temperature;
                 if (schedule == "cosine")
                     tm.lr_schedule = LrSchedule::cosine;
                 else if (schedule == "constant")
                     tm.lr_schedule = LrSchedule::constant;
                 else
                     throw ArgumentError("schedule must be cosine or constant");
                 tm.validate();
                 return tm;
             }),
             py::arg("kind") = "supervised", py::arg("lr") = 0.05, py::arg("batch") = 64,
             py::arg("epochs") = 60, py::arg("temperature") = 0.5,
             py::arg("schedule") = "cosine")
        .def_readwrite("learning_rate", &TrainingMethod::learning_rate)
        .def_readwrite("batch_size", &TrainingMethod::batch_size)
        .def_readwrite("epochs", &TrainingMethod::epochs)
        .def_readwrite("temperature", &TrainingMethod::temperature);

    py::class_<TriggerSpec>(m, "TriggerSpec")
        .def_readonly("target_class", &TriggerSpec::target_class);
    m.def("make_trigger", &make_trigger, py::arg("kind"), py::arg("target_class"),
          py::arg("height"), py::arg("width"), py::arg("patch_size") = 2,
          py::arg("patch_value") = 1.0, py::arg("blend_alpha") = 0.2,
          py::arg("signal_amplitude") = 0.15, py::arg("signal_frequency") = 6.0,
          "Builds a patch, blended or signal trigger for h x w images.");

    py::class_<Metrics>(m, "Metrics")
        .def_readonly("acc", &Metrics::acc)
        .def_readonly("asr", &Metrics::asr)
        .def_readonly("n_eval_clean", &Metrics::n_eval_clean)
        .def_readonly("n_eval_attack", &Metrics::n_eval_attack)
        .def("__repr__", [](const Metrics& m_) {
            return "Metrics(acc=" + std::to_string(m_.acc) + ", asr=" + std::to_string(m_.asr) +
                   ")";
        });

    py::class_<TscConfig>(m, "TscConfig")
        .def_static("supervised_defaults", &TscConfig::supervised_defaults)
        .def_static("contrastive_defaults", &TscConfig::contrastive_defaults)
        .def_readwrite("global_epochs", &TscConfig::global_epochs)
        .def_readwrite("curve_index", &TscConfig::curve_index)
        .def_readwrite("curve_epochs", &TscConfig::curve_epochs)
        .def_readwrite("curve_lr", &TscConfig::curve_lr)
        .def_readwrite("finetune_epochs", &TscConfig::finetune_epochs)
        .def_readwrite("finetune_lr", &TscConfig::finetune_lr)
        .def_readwrite("method", &TscConfig::method);

    py::class_<PermutationSet>(m, "PermutationSet")
        .def_readonly("perms", &PermutationSet::perms)
        .def("is_identity", &PermutationSet::is_identity);

    py::class_<BezierCurve>(m, "BezierCurve")
        .def_readonly("a", &BezierCurve::a)
        .def_readonly("control", &BezierCurve::control)
        .def_readonly("b", &BezierCurve::b);

    py::class_<StageRecord>(m, "StageRecord")
        .def_readonly("round", &StageRecord::round)
        .def_readonly("stage", &StageRecord::stage)
        .def_readonly("retrieved", &StageRecord::retrieved);

    py::class_<DefenseReport>(m, "DefenseReport")
        .def_readonly("defense", &DefenseReport::defense)
        .def_readonly("stages", &DefenseReport::stages);

    // Data.
    m.def("gen_synthetic_images", &gen_synthetic_images, py::arg("num_classes"),
          py::arg("per_class"), py::arg("height"), py::arg("width"), py::arg("noise_sigma"),
          py::arg("seed"));
    m.def("split_defender", &split_defender, py::arg("data"), py::arg("fraction"),
          py::arg("seed"));
    m.def(
        "poison_dataset",
        [](const Dataset& data, const TriggerSpec& trigger, double rate, const std::string& mode,
           std::uint64_t seed) {
            PoisonPlan plan;
            plan.trigger = trigger;
            plan.rate = rate;
            if (mode == "flip")
                plan.mode = LabelMode::flip;
            else if (mode == "clean_label")
                plan.mode = LabelMode::clean_label;
            else
                throw ArgumentError("label mode must be flip or clean_label");
            return poison_dataset(data, plan, seed);
        },
        py::arg("data"), py::arg("trigger"), py::arg("rate"), py::arg("mode") = "flip",
        py::arg("seed") = 0);

    // Networks.
    m.def("init_weights", &init_weights, py::arg("spec"));
    m.def("train", &train, py::arg("spec"), py::arg("weights"), py::arg("data"),
          py::arg("method"), py::arg("seed"));
    m.def(
        "forward",
        [](const NetworkSpec& spec, const Weights& w,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& batch) {
            return matrix_to_numpy(forward_batch(spec, w, matrix_from_numpy(batch)));
        },
        py::arg("spec"), py::arg("weights"), py::arg("batch"));
    m.def("evaluate", &evaluate, py::arg("spec"), py::arg("weights"), py::arg("clean_test"),
          py::arg("trigger"));
    m.def(
        "ce_loss",
        [](const NetworkSpec& spec, const Weights& w,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& batch,
           const std::vector<int>& labels) {
            return ce_loss(spec, w, matrix_from_numpy(batch), labels);
        },
        py::arg("spec"), py::arg("weights"), py::arg("batch"), py::arg("labels"));

    // Alignment and curves.
    m.def(
        "find_permutation",
        [](const NetworkSpec& spec, const Weights& a, const Weights& b, const Dataset& data,
           const std::string& objective) {
            if (objective != "min" && objective != "max")
                throw ArgumentError("objective must be min or max");
            return find_permutation(spec, a, b, data,
                                    objective == "min" ? AlignObjective::min_distance
                                                       : AlignObjective::max_distance);
        },
        py::arg("spec"), py::arg("a"), py::arg("b"), py::arg("data"), py::arg("objective"));
    m.def("permute_layers", &permute_layers, py::arg("spec"), py::arg("weights"),
          py::arg("permutation"));
    m.def("init_curve", &init_curve, py::arg("a"), py::arg("b"));
    m.def("curve_point", &curve_point, py::arg("curve"), py::arg("t"));
    m.def("fit_quad_curve", &fit_quad_curve, py::arg("spec"), py::arg("curve"), py::arg("data"),
          py::arg("method"), py::arg("epochs"), py::arg("update_endpoints"), py::arg("seed"));

    // Defenses.
    m.def("tsc_defend",
          [](const NetworkSpec& spec, const Weights& w_adv, const Dataset& d_c,
             const TscConfig& cfg, std::uint64_t seed) { return tsc_defend(spec, w_adv, d_c, cfg, seed); },
          py::arg("spec"), py::arg("weights"), py::arg("defender_data"), py::arg("config"),
          py::arg("seed"));
    m.def("mcr_defend",
          [](const NetworkSpec& spec, const Weights& w_adv, const Dataset& d_c,
             const TscConfig& cfg, std::uint64_t seed) { return mcr_defend(spec, w_adv, d_c, cfg, seed); },
          py::arg("spec"), py::arg("weights"), py::arg("defender_data"), py::arg("config"),
          py::arg("seed"));

    // Checkpoints.
    m.def("save_weights", &save_weights, py::arg("path"), py::arg("spec"), py::arg("weights"));
    m.def("load_weights", &load_weights, py::arg("path"));

    // Config-driven experiments.
    py::class_<PipelineResult>(m, "PipelineResult")
        .def_readonly("clean", &PipelineResult::clean)
        .def_readonly("before", &PipelineResult::before)
        .def_readonly("after", &PipelineResult::after)
        .def_readonly("defense_ran", &PipelineResult::defense_ran)
        .def_readonly("success", &PipelineResult::success);
    m.def(
        "run_experiment",
        [](const std::string& config_text) { return run_experiment(parse_config(config_text)); },
        py::arg("config_text"),
        "Parses a key = value config and runs the full pipeline; artifacts land in its out dir.");
    m.def("config_schema", &config_schema);
}
