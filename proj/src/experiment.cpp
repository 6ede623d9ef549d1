#include "tsclab/experiment.hpp"

#include <chrono>
#include <climits>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "tsclab/checkpoint.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace tsclab {

// ---------------------------------------------------------------------------
// Config schema and parsing
// ---------------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

struct SchemaEntry {
    const char* key;
    const char* fallback; // printed default
    const char* help;
};

const SchemaEntry kSchema[] = {
    {"data.classes", "4", "number of classes (>= 2)"},
    {"data.per_class_train", "250", "training rows per class"},
    {"data.per_class_test", "100", "test rows per class"},
    {"data.height", "10", "image height in pixels"},
    {"data.width", "10", "image width in pixels"},
    {"data.noise_sigma", "0.1", "pixel noise std dev (>= 0)"},
    {"data.defender_fraction", "0.1", "clean-row share handed to the defender, in (0, 1)"},
    {"model.hidden", "64,64", "hidden layer widths, comma separated"},
    {"model.feature_dim", "0", "output width; 0 uses data.classes"},
    {"train.kind", "supervised", "supervised | contrastive"},
    {"train.lr", "0.1", "training step size"},
    {"train.batch", "64", "minibatch size"},
    {"train.epochs", "120", "training epochs"},
    {"train.temperature", "0.5", "nt-xent temperature (contrastive)"},
    {"train.schedule", "cosine", "cosine | constant"},
    {"attack.mode", "data_poison", "data_poison | adaptive_subspace"},
    {"attack.trigger", "patch", "patch | blended | signal"},
    {"attack.target", "0", "target class of the backdoor"},
    {"attack.rate", "0.05", "poisoned fraction of the training set, in [0, 1]"},
    {"attack.label_mode", "flip", "flip | clean_label"},
    {"attack.patch_size", "2", "patch side length in pixels"},
    {"attack.patch_value", "1", "patch pixel value, in [0, 1]"},
    {"attack.blend_alpha", "0.2", "blending weight of the pattern, in [0, 1]"},
    {"attack.signal_amplitude", "0.15", "sinusoid amplitude (>= 0)"},
    {"attack.signal_frequency", "6", "sinusoid frequency in cycles per image width"},
    {"attack.adaptive_epochs", "200", "subspace-attack curve epochs"},
    {"attack.adaptive_lr", "0.02", "subspace-attack curve step size"},
    {"defense.kind", "tsc", "none | tsc | mcr"},
    {"defense.rounds", "3", "purification rounds E_TSC (>= 0)"},
    {"defense.curve_index", "0.4", "retrieval index t, in [0, 1]"},
    {"defense.curve_epochs", "200", "SGD epochs per curve fit (>= 1)"},
    {"defense.curve_lr", "0.02", "curve training step size"},
    {"defense.finetune_epochs", "5", "clean fine-tune epochs per round (>= 0)"},
    {"defense.finetune_lr", "0.0001", "fine-tune step size"},
    {"defense.profile_points", "11", "t grid size for per-stage profiles; 0 disables"},
    {"probe.per_class", "50", "probe training rows per class (contrastive eval)"},
    {"probe.epochs", "200", "probe training epochs"},
    {"probe.lr", "0.5", "probe training step size"},
    {"landscape.nx", "25", "landscape grid width (>= 2)"},
    {"landscape.ny", "25", "landscape grid height (>= 2)"},
    {"landscape.margin", "0.2", "relative margin beyond the anchor box (>= 0)"},
    {"sweep.axis", "", "E_TSC | t | poisoning_rate (sweep subcommand only)"},
    {"sweep.values", "", "comma-separated axis values"},
    {"seed", "1", "master seed; TSCLAB_SEED and --seed override"},
    {"out", "out", "output directory; TSCLAB_OUT and --out override"},
};

bool known_key(const std::string& key) {
    for (const auto& e : kSchema)
        if (key == e.key) return true;
    return false;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& want) {
    throw ConfigError("config key '" + key + "': expected " + want + ", got '" + value + "'");
}

long long parse_ll(const std::string& key, const std::string& value) {
    std::size_t pos = 0;
    long long v = 0;
    try {
        v = std::stoll(value, &pos);
    } catch (const std::exception&) {
        bad_value(key, value, "an integer");
    }
    if (pos != value.size()) bad_value(key, value, "an integer");
    return v;
}

int parse_int(const std::string& key, const std::string& value) {
    long long v = parse_ll(key, value);
    if (v < INT_MIN || v > INT_MAX) bad_value(key, value, "an integer in range");
    return static_cast<int>(v);
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(value, &pos);
    } catch (const std::exception&) {
        bad_value(key, value, "an unsigned integer");
    }
    if (pos != value.size() || value.find('-') != std::string::npos)
        bad_value(key, value, "an unsigned integer");
    return static_cast<std::uint64_t>(v);
}

double parse_double(const std::string& key, const std::string& value) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(value, &pos);
    } catch (const std::exception&) {
        bad_value(key, value, "a number");
    }
    if (pos != value.size() || !std::isfinite(v)) bad_value(key, value, "a finite number");
    return v;
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::string cur;
    std::stringstream ss(value);
    while (std::getline(ss, cur, ',')) out.push_back(trim(cur));
    return out;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
    std::vector<int> out;
    for (const std::string& item : split_list(value)) out.push_back(parse_int(key, item));
    if (out.empty()) bad_value(key, value, "a comma-separated integer list");
    return out;
}

std::vector<double> parse_double_list(const std::string& key, const std::string& value) {
    std::vector<double> out;
    for (const std::string& item : split_list(value)) out.push_back(parse_double(key, item));
    if (out.empty()) bad_value(key, value, "a comma-separated number list");
    return out;
}

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
}

} // namespace

ExperimentConfig::ExperimentConfig() {
    method.kind = TrainKind::supervised_ce;
    method.learning_rate = 0.10;
    method.batch_size = 64;
    method.epochs = 120;
    method.temperature = 0.5;
    method.lr_schedule = LrSchedule::cosine;
}

NetworkSpec ExperimentConfig::network_spec() const {
    NetworkSpec spec;
    spec.layer_dims.push_back(height * width);
    for (int h : hidden) spec.layer_dims.push_back(h);
    spec.layer_dims.push_back(feature_dim > 0 ? feature_dim : classes);
    spec.activation = Activation::relu;
    spec.seed = derive_seed(seed, "init");
    return spec;
}

TriggerSpec ExperimentConfig::trigger() const {
    TriggerSpec t;
    t.target_class = target_class;
    if (trigger_kind == "patch") {
        PatchTrigger p;
        p.size = patch_size;
        p.row = height - patch_size;
        p.col = width - patch_size;
        p.value = patch_value;
        t.kind = p;
    } else if (trigger_kind == "blended") {
        t.kind = BlendedTrigger{default_blended_pattern(height, width), blend_alpha};
    } else if (trigger_kind == "signal") {
        t.kind = SignalTrigger{signal_amplitude, signal_frequency};
    } else {
        throw ConfigError("config key 'attack.trigger': expected patch | blended | signal, got '" +
                          trigger_kind + "'");
    }
    return t;
}

PoisonPlan ExperimentConfig::poison_plan() const {
    PoisonPlan plan;
    plan.trigger = trigger();
    plan.rate = poison_rate;
    plan.mode = label_mode;
    return plan;
}

TscConfig ExperimentConfig::tsc_config() const {
    TscConfig cfg;
    cfg.global_epochs = rounds;
    cfg.curve_index = curve_index;
    cfg.curve_epochs = curve_epochs;
    cfg.curve_lr = curve_lr;
    cfg.finetune_epochs = finetune_epochs;
    cfg.finetune_lr = finetune_lr;
    cfg.method = method;
    return cfg;
}

void ExperimentConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError(msg); };
    if (classes < 2) fail("data.classes: need at least 2 classes");
    if (per_class_train < 1) fail("data.per_class_train: must be >= 1");
    if (per_class_test < 1) fail("data.per_class_test: must be >= 1");
    if (height < 1 || width < 1) fail("data.height/data.width: must be >= 1");
    if (!(noise_sigma >= 0.0)) fail("data.noise_sigma: must be >= 0");
    if (!(defender_fraction > 0.0 && defender_fraction < 1.0))
        fail("data.defender_fraction: must lie in (0, 1)");
    if (hidden.empty()) fail("model.hidden: at least one hidden layer is required");
    for (int h : hidden)
        if (h < 1) fail("model.hidden: widths must be >= 1");
    if (feature_dim < 0) fail("model.feature_dim: must be >= 0");
    if (method.kind == TrainKind::supervised_ce && feature_dim > 0 && feature_dim != classes)
        fail("model.feature_dim: a supervised head must match data.classes (or be 0)");
    try {
        method.validate();
    } catch (const Error& e) {
        fail(std::string("train.*: ") + e.what());
    }
    if (target_class < 0 || target_class >= classes)
        fail("attack.target: must lie in [0, data.classes)");
    if (!(poison_rate >= 0.0 && poison_rate <= 1.0)) fail("attack.rate: must lie in [0, 1]");
    if (patch_size < 1 || patch_size > std::min(height, width))
        fail("attack.patch_size: must fit inside the image");
    if (!(patch_value >= 0.0 && patch_value <= 1.0))
        fail("attack.patch_value: must lie in [0, 1]");
    if (!(blend_alpha >= 0.0 && blend_alpha <= 1.0))
        fail("attack.blend_alpha: must lie in [0, 1]");
    if (!(signal_amplitude >= 0.0)) fail("attack.signal_amplitude: must be >= 0");
    if (!(signal_frequency > 0.0)) fail("attack.signal_frequency: must be > 0");
    if (attacker == AttackerMode::adaptive_subspace &&
        (adaptive_epochs < 1 || !(adaptive_lr > 0.0)))
        fail("attack.adaptive_epochs/attack.adaptive_lr: adaptive mode requires positive "
             "training-control fields");
    try {
        tsc_config().validate();
    } catch (const Error& e) {
        fail(std::string("defense.*: ") + e.what());
    }
    if (profile_points != 0 && profile_points < 2)
        fail("defense.profile_points: must be 0 (off) or >= 2");
    if (probe_per_class < 1) fail("probe.per_class: must be >= 1");
    if (probe_epochs < 1) fail("probe.epochs: must be >= 1");
    if (!(probe_lr > 0.0)) fail("probe.lr: must be > 0");
    if (grid_nx < 2 || grid_ny < 2) fail("landscape.nx/landscape.ny: must be >= 2");
    if (!(grid_margin >= 0.0)) fail("landscape.margin: must be >= 0");
    if (sweep) {
        if (sweep->values.empty()) fail("sweep.values: must not be empty");
        for (double v : sweep->values) {
            switch (sweep->axis) {
            case SweepAxis::rounds:
                if (v < 0.0 || v != std::floor(v))
                    fail("sweep.values: E_TSC values must be non-negative integers");
                break;
            case SweepAxis::curve_index:
                if (!(v >= 0.0 && v <= 1.0)) fail("sweep.values: t values must lie in [0, 1]");
                break;
            case SweepAxis::poison_rate:
                if (!(v >= 0.0 && v <= 1.0))
                    fail("sweep.values: poisoning rates must lie in [0, 1]");
                break;
            }
        }
    }
    if (out_dir.empty()) fail("out: output directory must not be empty");
    (void)trigger(); // validates attack.trigger
}

std::string config_schema() {
    std::string out = "key = default  (description)\n";
    for (const auto& e : kSchema) {
        out += "  ";
        out += e.key;
        out += " = ";
        out += e.fallback;
        out += "  (";
        out += e.help;
        out += ")\n";
    }
    return out;
}

ExperimentConfig parse_config(const std::string& text) {
    std::map<std::string, std::string> pairs;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        if (!known_key(key))
            throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key +
                              "'");
        if (!pairs.emplace(key, value).second)
            throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" +
                              key + "'");
    }

    ExperimentConfig cfg;
    auto get = [&](const char* key) -> const std::string* {
        auto it = pairs.find(key);
        return it == pairs.end() ? nullptr : &it->second;
    };
    auto geti = [&](const char* key, int& field) {
        if (const std::string* v = get(key)) field = parse_int(key, *v);
    };
    auto getd = [&](const char* key, double& field) {
        if (const std::string* v = get(key)) field = parse_double(key, *v);
    };

    geti("data.classes", cfg.classes);
    geti("data.per_class_train", cfg.per_class_train);
    geti("data.per_class_test", cfg.per_class_test);
    geti("data.height", cfg.height);
    geti("data.width", cfg.width);
    getd("data.noise_sigma", cfg.noise_sigma);
    getd("data.defender_fraction", cfg.defender_fraction);
    if (const std::string* v = get("model.hidden")) cfg.hidden = parse_int_list("model.hidden", *v);
    geti("model.feature_dim", cfg.feature_dim);

    if (const std::string* v = get("train.kind")) {
        if (*v == "supervised")
            cfg.method.kind = TrainKind::supervised_ce;
        else if (*v == "contrastive")
            cfg.method.kind = TrainKind::contrastive_ntxent;
        else
            bad_value("train.kind", *v, "supervised | contrastive");
    }
    getd("train.lr", cfg.method.learning_rate);
    geti("train.batch", cfg.method.batch_size);
    geti("train.epochs", cfg.method.epochs);
    getd("train.temperature", cfg.method.temperature);
    if (const std::string* v = get("train.schedule")) {
        if (*v == "cosine")
            cfg.method.lr_schedule = LrSchedule::cosine;
        else if (*v == "constant")
            cfg.method.lr_schedule = LrSchedule::constant;
        else
            bad_value("train.schedule", *v, "cosine | constant");
    }

    if (const std::string* v = get("attack.mode")) {
        if (*v == "data_poison")
            cfg.attacker = AttackerMode::data_poison;
        else if (*v == "adaptive_subspace")
            cfg.attacker = AttackerMode::adaptive_subspace;
        else
            bad_value("attack.mode", *v, "data_poison | adaptive_subspace");
    }
    if (const std::string* v = get("attack.trigger")) cfg.trigger_kind = *v;
    geti("attack.target", cfg.target_class);
    getd("attack.rate", cfg.poison_rate);
    if (const std::string* v = get("attack.label_mode")) {
        if (*v == "flip")
            cfg.label_mode = LabelMode::flip;
        else if (*v == "clean_label")
            cfg.label_mode = LabelMode::clean_label;
        else
            bad_value("attack.label_mode", *v, "flip | clean_label");
    }
    geti("attack.patch_size", cfg.patch_size);
    getd("attack.patch_value", cfg.patch_value);
    getd("attack.blend_alpha", cfg.blend_alpha);
    getd("attack.signal_amplitude", cfg.signal_amplitude);
    getd("attack.signal_frequency", cfg.signal_frequency);
    geti("attack.adaptive_epochs", cfg.adaptive_epochs);
    getd("attack.adaptive_lr", cfg.adaptive_lr);

    if (const std::string* v = get("defense.kind")) {
        if (*v == "none")
            cfg.defense = DefenseKind::none;
        else if (*v == "tsc")
            cfg.defense = DefenseKind::tsc;
        else if (*v == "mcr")
            cfg.defense = DefenseKind::mcr;
        else
            bad_value("defense.kind", *v, "none | tsc | mcr");
    }
    geti("defense.rounds", cfg.rounds);
    getd("defense.curve_index", cfg.curve_index);
    geti("defense.curve_epochs", cfg.curve_epochs);
    getd("defense.curve_lr", cfg.curve_lr);
    geti("defense.finetune_epochs", cfg.finetune_epochs);
    getd("defense.finetune_lr", cfg.finetune_lr);
    geti("defense.profile_points", cfg.profile_points);
    geti("probe.per_class", cfg.probe_per_class);
    geti("probe.epochs", cfg.probe_epochs);
    getd("probe.lr", cfg.probe_lr);
    geti("landscape.nx", cfg.grid_nx);
    geti("landscape.ny", cfg.grid_ny);
    getd("landscape.margin", cfg.grid_margin);

    const std::string* axis = get("sweep.axis");
    const std::string* values = get("sweep.values");
    if ((axis == nullptr) != (values == nullptr))
        throw ConfigError("config: sweep.axis and sweep.values must be given together");
    if (axis) {
        SweepPlan plan;
        if (*axis == "E_TSC")
            plan.axis = SweepAxis::rounds;
        else if (*axis == "t")
            plan.axis = SweepAxis::curve_index;
        else if (*axis == "poisoning_rate")
            plan.axis = SweepAxis::poison_rate;
        else
            bad_value("sweep.axis", *axis, "E_TSC | t | poisoning_rate");
        plan.values = parse_double_list("sweep.values", *values);
        cfg.sweep = std::move(plan);
    }

    if (const std::string* v = get("seed")) cfg.seed = parse_u64("seed", *v);
    if (const std::string* v = get("out")) cfg.out_dir = *v;

    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("config: cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

json metrics_json(const Metrics& m) {
    return json{{"acc", m.acc},
                {"asr", m.asr},
                {"n_eval_clean", m.n_eval_clean},
                {"n_eval_attack", m.n_eval_attack}};
}

const char* attacker_name(AttackerMode m) {
    return m == AttackerMode::data_poison ? "data_poison" : "adaptive_subspace";
}

const char* defense_name(DefenseKind d) {
    switch (d) {
    case DefenseKind::none: return "none";
    case DefenseKind::tsc: return "tsc";
    default: return "mcr";
    }
}

const char* stage_name(PipelineStage s) {
    switch (s) {
    case PipelineStage::train: return "train";
    case PipelineStage::poison: return "poison";
    case PipelineStage::attack: return "attack";
    default: return "defend";
    }
}

// Canonical echo of every config field, in schema order, for report.json.
json config_json(const ExperimentConfig& cfg) {
    json j;
    j["data.classes"] = cfg.classes;
    j["data.per_class_train"] = cfg.per_class_train;
    j["data.per_class_test"] = cfg.per_class_test;
    j["data.height"] = cfg.height;
    j["data.width"] = cfg.width;
    j["data.noise_sigma"] = cfg.noise_sigma;
    j["data.defender_fraction"] = cfg.defender_fraction;
    j["model.hidden"] = cfg.hidden;
    j["model.feature_dim"] = cfg.feature_dim;
    j["train.kind"] = cfg.method.kind == TrainKind::supervised_ce ? "supervised" : "contrastive";
    j["train.lr"] = cfg.method.learning_rate;
    j["train.batch"] = cfg.method.batch_size;
    j["train.epochs"] = cfg.method.epochs;
    j["train.temperature"] = cfg.method.temperature;
    j["train.schedule"] = cfg.method.lr_schedule == LrSchedule::cosine ? "cosine" : "constant";
    j["attack.mode"] = attacker_name(cfg.attacker);
    j["attack.trigger"] = cfg.trigger_kind;
    j["attack.target"] = cfg.target_class;
    j["attack.rate"] = cfg.poison_rate;
    j["attack.label_mode"] = cfg.label_mode == LabelMode::flip ? "flip" : "clean_label";
    j["attack.patch_size"] = cfg.patch_size;
    j["attack.patch_value"] = cfg.patch_value;
    j["attack.blend_alpha"] = cfg.blend_alpha;
    j["attack.signal_amplitude"] = cfg.signal_amplitude;
    j["attack.signal_frequency"] = cfg.signal_frequency;
    j["attack.adaptive_epochs"] = cfg.adaptive_epochs;
    j["attack.adaptive_lr"] = cfg.adaptive_lr;
    j["defense.kind"] = defense_name(cfg.defense);
    j["defense.rounds"] = cfg.rounds;
    j["defense.curve_index"] = cfg.curve_index;
    j["defense.curve_epochs"] = cfg.curve_epochs;
    j["defense.curve_lr"] = cfg.curve_lr;
    j["defense.finetune_epochs"] = cfg.finetune_epochs;
    j["defense.finetune_lr"] = cfg.finetune_lr;
    j["defense.profile_points"] = cfg.profile_points;
    j["probe.per_class"] = cfg.probe_per_class;
    j["probe.epochs"] = cfg.probe_epochs;
    j["probe.lr"] = cfg.probe_lr;
    j["landscape.nx"] = cfg.grid_nx;
    j["landscape.ny"] = cfg.grid_ny;
    j["landscape.margin"] = cfg.grid_margin;
    if (cfg.sweep) {
        switch (cfg.sweep->axis) {
        case SweepAxis::rounds: j["sweep.axis"] = "E_TSC"; break;
        case SweepAxis::curve_index: j["sweep.axis"] = "t"; break;
        case SweepAxis::poison_rate: j["sweep.axis"] = "poisoning_rate"; break;
        }
        j["sweep.values"] = cfg.sweep->values;
    }
    j["seed"] = cfg.seed;
    j["out"] = cfg.out_dir;
    return j;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc | std::ios::binary);
    if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
    f << text;
    if (!f) throw IoError("write to '" + path.string() + "' failed");
}

// Everything run_experiment accumulates before the final report is assembled.
struct PipelineState {
    json data_stats = json::object();
    json defense_section; // null until a defense runs
    std::vector<std::pair<std::string, double>> timings;
    std::vector<std::pair<int, std::pair<int, double>>> stage_timings; // (round,(stage,sec))
};

Evaluator make_evaluator(const ExperimentConfig& cfg) {
    if (cfg.method.kind == TrainKind::supervised_ce) return Evaluator::direct();
    Dataset probe = gen_synthetic_images(cfg.classes, cfg.probe_per_class, cfg.height, cfg.width,
                                         cfg.noise_sigma, derive_seed(cfg.seed, "data-probe"));
    return Evaluator::linear_probe(std::move(probe), cfg.probe_epochs, cfg.probe_lr,
                                   derive_seed(cfg.seed, "probe-train"));
}

void write_report(const ExperimentConfig& cfg, PipelineStage stage, const PipelineResult& res,
                  const PipelineState& state) {
    const fs::path out(cfg.out_dir);

    json report;
    report["run"] = stage_name(stage);
    report["config"] = config_json(cfg);
    report["data"] = state.data_stats;
    json metrics;
    metrics["clean"] = metrics_json(res.clean);
    if (stage >= PipelineStage::attack) metrics["backdoored"] = metrics_json(res.before);
    if (res.defense_ran) metrics["defended"] = metrics_json(res.after);
    report["metrics"] = metrics;
    if (!state.defense_section.is_null()) report["defense"] = state.defense_section;
    json files;
    files["checkpoints"] = res.artifacts.checkpoints;
    files["csvs"] = res.artifacts.csvs;
    report["artifacts"] = files;
    write_text(out / "report.json", report.dump(2) + "\n");

    json timings;
    for (const auto& [name, sec] : state.timings) timings[name] = sec;
    if (!state.stage_timings.empty()) {
        json stages = json::array();
        for (const auto& [round, rest] : state.stage_timings)
            stages.push_back(json{{"round", round}, {"stage", rest.first}, {"seconds", rest.second}});
        timings["stages"] = stages;
    }
    write_text(out / "timings.json", timings.dump(2) + "\n");
}

} // namespace

PipelineResult run_experiment(const ExperimentConfig& cfg, PipelineStage stage) {
    cfg.validate();
    const fs::path out(cfg.out_dir);
    fs::create_directories(out);

    const auto t_run = std::chrono::steady_clock::now();
    PipelineResult res;
    PipelineState state;
    res.artifacts.out_dir = cfg.out_dir;

    auto add_checkpoint = [&](const std::string& name, const NetworkSpec& spec, const Weights& w) {
        save_weights((out / name).string(), spec, w);
        res.artifacts.checkpoints.push_back(name);
    };
    auto add_csv = [&](const std::string& name) { res.artifacts.csvs.push_back(name); };

    const NetworkSpec spec = cfg.network_spec();
    const TriggerSpec trig = cfg.trigger();
    const Evaluator evaluator = make_evaluator(cfg);

    // Data.
    Dataset train_clean =
        gen_synthetic_images(cfg.classes, cfg.per_class_train, cfg.height, cfg.width,
                             cfg.noise_sigma, derive_seed(cfg.seed, "data-train"));
    Dataset test = gen_synthetic_images(cfg.classes, cfg.per_class_test, cfg.height, cfg.width,
                                        cfg.noise_sigma, derive_seed(cfg.seed, "data-test"));
    export_dataset_csv((out / "train_clean.csv").string(), train_clean);
    add_csv("train_clean.csv");
    export_dataset_csv((out / "test_clean.csv").string(), test);
    add_csv("test_clean.csv");
    state.data_stats["train_rows"] = train_clean.size();
    state.data_stats["test_rows"] = test.size();

    // Reference model on the unpoisoned set.
    auto t0 = std::chrono::steady_clock::now();
    const Weights w_init = init_weights(spec);
    Weights w_clean = train(spec, w_init, train_clean, cfg.method,
                            derive_seed(cfg.seed, "train-clean"));
    state.timings.emplace_back("train_clean_seconds", seconds_since(t0));
    add_checkpoint("clean.bin", spec, w_clean);
    res.clean = evaluator(spec, w_clean, test, trig).metrics;

    if (stage == PipelineStage::train) {
        state.timings.emplace_back("total_seconds", seconds_since(t_run));
        write_report(cfg, stage, res, state);
        return res;
    }

    // Poison.
    Dataset poisoned = poison_dataset(train_clean, cfg.poison_plan(),
                                      derive_seed(cfg.seed, "poison"));
    std::size_t n_poisoned = 0;
    for (std::uint8_t m : poisoned.poison_mask) n_poisoned += m;
    state.data_stats["poisoned_rows"] = n_poisoned;
    export_dataset_csv((out / "train_poisoned.csv").string(), poisoned);
    add_csv("train_poisoned.csv");

    if (stage == PipelineStage::poison) {
        state.timings.emplace_back("total_seconds", seconds_since(t_run));
        write_report(cfg, stage, res, state);
        return res;
    }

    // Attack: a model trained on the poisoned set, optionally hardened by the
    // subspace-aware attacker.
    t0 = std::chrono::steady_clock::now();
    Weights w_adv =
        train(spec, w_init, poisoned, cfg.method, derive_seed(cfg.seed, "train-backdoor"));
    if (cfg.attacker == AttackerMode::adaptive_subspace) {
        AdaptiveAttackConfig acfg;
        acfg.curve_epochs = cfg.adaptive_epochs;
        acfg.curve_lr = cfg.adaptive_lr;
        acfg.method = cfg.method;
        w_adv = adaptive_subspace_attack(spec, w_adv, poisoned, acfg,
                                         derive_seed(cfg.seed, "adaptive"))
                    .model;
    }
    state.timings.emplace_back("train_backdoor_seconds", seconds_since(t0));
    add_checkpoint("backdoored.bin", spec, w_adv);
    res.before = evaluator(spec, w_adv, test, trig).metrics;

    if (stage == PipelineStage::attack) {
        state.timings.emplace_back("total_seconds", seconds_since(t_run));
        write_report(cfg, stage, res, state);
        return res;
    }

    // Defender split: a small clean dataset drawn from the unpoisoned training
    // data. Splitting the pristine set (not the poisoned one) keeps every class
    // represented even when clean-label poisoning touches a whole class.
    auto [d_c, d_rest] = split_defender(train_clean, cfg.defender_fraction,
                                        derive_seed(cfg.seed, "split"));
    (void)d_rest;
    export_dataset_csv((out / "defender.csv").string(), d_c);
    add_csv("defender.csv");
    state.data_stats["defender_rows"] = d_c.size();

    if (cfg.defense == DefenseKind::none) {
        state.timings.emplace_back("total_seconds", seconds_since(t_run));
        write_report(cfg, stage, res, state);
        return res;
    }

    // Defense, with per-stage profiles evaluated on the held-out test set.
    std::vector<std::pair<std::string, std::string>> profile_files; // (stage key, csv)
    StageInspector inspector;
    if (cfg.profile_points >= 2) {
        inspector = [&](int round, int stg, const BezierCurve& curve) {
            CurveProfile p = eval_along_curve(spec, curve, uniform_t_grid(cfg.profile_points),
                                              test, trig, evaluator);
            char name[64];
            std::snprintf(name, sizeof name, "round%d_stage%d_profile.csv", round, stg);
            profile_to_csv((out / name).string(), p);
            profile_files.emplace_back(std::to_string(round) + ":" + std::to_string(stg), name);
            return p;
        };
    }

    t0 = std::chrono::steady_clock::now();
    const TscConfig tcfg = cfg.tsc_config();
    const std::uint64_t defense_seed = derive_seed(cfg.seed, "defense");
    auto [w_final, report] = cfg.defense == DefenseKind::tsc
                                 ? tsc_defend(spec, w_adv, d_c, tcfg, defense_seed, inspector)
                                 : mcr_defend(spec, w_adv, d_c, tcfg, defense_seed, inspector);
    state.timings.emplace_back("defense_seconds", seconds_since(t0));
    for (const StageRecord& s : report.stages)
        state.stage_timings.emplace_back(s.round, std::make_pair(s.stage, s.seconds));

    res.after = evaluator(spec, w_final, test, trig).metrics;
    res.defense_ran = true;
    res.success = res.after.asr < 0.15;
    res.report = std::move(report);
    res.report.before = res.before;
    res.report.after = res.after;

    // Stage-indexed checkpoints plus the final model.
    json stage_rows = json::array();
    for (const StageRecord& s : res.report.stages) {
        char name[64];
        std::snprintf(name, sizeof name, "round%d_stage%d.bin", s.round, s.stage);
        add_checkpoint(name, spec, s.retrieved);
        Metrics sm = evaluator(spec, s.retrieved, test, trig).metrics;
        json row;
        row["round"] = s.round;
        row["stage"] = s.stage;
        row["checkpoint"] = name;
        std::string profile_csv;
        for (const auto& [key, csv] : profile_files)
            if (key == std::to_string(s.round) + ":" + std::to_string(s.stage)) profile_csv = csv;
        if (profile_csv.empty())
            row["profile_csv"] = nullptr;
        else
            row["profile_csv"] = profile_csv;
        row["acc"] = sm.acc;
        row["asr"] = sm.asr;
        stage_rows.push_back(std::move(row));
    }
    for (const auto& [key, csv] : profile_files) {
        (void)key;
        add_csv(csv);
    }
    add_checkpoint("final.bin", spec, w_final);

    state.defense_section = json::object();
    state.defense_section["kind"] = res.report.defense;
    state.defense_section["stages"] = std::move(stage_rows);
    state.defense_section["success"] = res.success;

    state.timings.emplace_back("total_seconds", seconds_since(t_run));
    write_report(cfg, stage, res, state);
    return res;
}

// ---------------------------------------------------------------------------
// Landscape
// ---------------------------------------------------------------------------

void run_landscape(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.defense != DefenseKind::tsc)
        throw ConfigError("landscape: requires defense.kind = tsc");
    const fs::path out(cfg.out_dir);
    fs::create_directories(out);

    const NetworkSpec spec = cfg.network_spec();
    const TriggerSpec trig = cfg.trigger();

    // Re-create the pipeline up to the backdoored model with the same seeds the
    // defend subcommand uses, so the landscape shows exactly its first stage.
    Dataset train_clean =
        gen_synthetic_images(cfg.classes, cfg.per_class_train, cfg.height, cfg.width,
                             cfg.noise_sigma, derive_seed(cfg.seed, "data-train"));
    Dataset test = gen_synthetic_images(cfg.classes, cfg.per_class_test, cfg.height, cfg.width,
                                        cfg.noise_sigma, derive_seed(cfg.seed, "data-test"));
    Dataset poisoned = poison_dataset(train_clean, cfg.poison_plan(),
                                      derive_seed(cfg.seed, "poison"));
    const Weights w_init = init_weights(spec);
    Weights w_adv =
        train(spec, w_init, poisoned, cfg.method, derive_seed(cfg.seed, "train-backdoor"));
    if (cfg.attacker == AttackerMode::adaptive_subspace) {
        AdaptiveAttackConfig acfg;
        acfg.curve_epochs = cfg.adaptive_epochs;
        acfg.curve_lr = cfg.adaptive_lr;
        acfg.method = cfg.method;
        w_adv = adaptive_subspace_attack(spec, w_adv, poisoned, acfg,
                                         derive_seed(cfg.seed, "adaptive"))
                    .model;
    }
    auto [d_c, d_rest] = split_defender(train_clean, cfg.defender_fraction,
                                        derive_seed(cfg.seed, "split"));
    (void)d_rest;

    // Round 1, stage 1 of the defense: max-distance twin plus fitted curve.
    // Seeds and training method mirror tsc_defend exactly.
    const std::uint64_t defense_seed = derive_seed(cfg.seed, "defense");
    const TscConfig tcfg = cfg.tsc_config();
    TrainingMethod curve_tm = tcfg.method;
    curve_tm.learning_rate = tcfg.curve_lr;
    curve_tm.lr_schedule = LrSchedule::cosine;
    PermutationSet perm = find_permutation(spec, w_adv, w_adv, d_c, AlignObjective::max_distance);
    Weights twin = permute_layers(spec, w_adv, perm);
    BezierCurve c1 = fit_quad_curve(spec, init_curve(w_adv, twin), d_c, curve_tm,
                                    tcfg.curve_epochs, /*update_endpoints=*/false,
                                    derive_seed(defense_seed, "tsc-curve", 1, 1));

    // Loss sets: the clean test set, and its triggered non-target pool relabeled
    // to the attack target.
    LossSet clean{test.samples, *test.labels};
    Dataset pool = attack_pool(test, trig);
    LossSet poison{pool.samples, std::vector<int>(pool.size(), trig.target_class)};

    LandscapeGrid grid = loss_landscape_plane(spec, w_adv, twin, c1.control, clean, poison,
                                              cfg.grid_nx, cfg.grid_ny, cfg.grid_margin);
    landscape_to_csv((out / "landscape.csv").string(), grid);

    // Companion stats: anchor coordinates and the plane-midpoint losses.
    auto losses_at = [&](double x, double y) {
        Weights w = plane_point(grid.plane, x, y);
        return std::make_pair(ce_loss(spec, w, clean.samples, clean.labels),
                              ce_loss(spec, w, poison.samples, poison.labels));
    };
    const double xmid = 0.5 * (grid.points.front().x + grid.points.back().x);
    const double ymid = 0.5 * (grid.points.front().y + grid.points.back().y);
    auto [mid_clean, mid_poison] = losses_at(xmid, ymid);
    auto [adv_clean, adv_poison] = losses_at(0.0, 0.0);
    auto [twin_clean, twin_poison] = losses_at(grid.plane.bx, 0.0);
    auto [ctl_clean, ctl_poison] = losses_at(grid.plane.cx, grid.plane.cy);

    json j;
    j["config"] = config_json(cfg);
    j["anchors"] = json{
        {"w_adv", json{{"x", 0.0}, {"y", 0.0}, {"loss_clean", adv_clean},
                       {"loss_poison", adv_poison}}},
        {"twin", json{{"x", grid.plane.bx}, {"y", 0.0}, {"loss_clean", twin_clean},
                      {"loss_poison", twin_poison}}},
        {"control", json{{"x", grid.plane.cx}, {"y", grid.plane.cy}, {"loss_clean", ctl_clean},
                         {"loss_poison", ctl_poison}}},
    };
    j["midpoint"] = json{{"x", xmid}, {"y", ymid}, {"loss_clean", mid_clean},
                         {"loss_poison", mid_poison}};
    j["poison_loss_ratio_midpoint_over_w_adv"] =
        adv_poison > 0.0 ? mid_poison / adv_poison : 0.0;
    write_text(out / "landscape.json", j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

void run_sweep(const ExperimentConfig& cfg) {
    cfg.validate();
    if (!cfg.sweep)
        throw ConfigError("sweep: config must set sweep.axis and sweep.values");
    const SweepPlan plan = *cfg.sweep;
    const fs::path out(cfg.out_dir);
    fs::create_directories(out);

    std::ofstream csv(out / "sweep.csv", std::ios::trunc | std::ios::binary);
    if (!csv) throw IoError("sweep: cannot open '" + (out / "sweep.csv").string() + "'");
    csv << "value,acc,asr\n" << std::flush;

    for (std::size_t i = 0; i < plan.values.size(); ++i) {
        const double v = plan.values[i];
        ExperimentConfig sub = cfg;
        sub.sweep.reset();
        switch (plan.axis) {
        case SweepAxis::rounds: sub.rounds = static_cast<int>(v); break;
        case SweepAxis::curve_index: sub.curve_index = v; break;
        case SweepAxis::poison_rate: sub.poison_rate = v; break;
        }
        char dir[32];
        std::snprintf(dir, sizeof dir, "run_%02zu", i);
        sub.out_dir = (out / dir).string();
        // Shared seed across sub-runs: only the axis value differs.
        PipelineResult r = run_experiment(sub, PipelineStage::defend);
        const Metrics& last = r.defense_ran ? r.after : r.before;
        csv << fmt17(v) << ',' << fmt17(last.acc) << ',' << fmt17(last.asr) << "\n"
            << std::flush;
        if (!csv) throw IoError("sweep: write to sweep.csv failed");
    }
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

int emit_report(const std::string& out_dir) {
    const fs::path out(out_dir);
    const fs::path report_path = out / "report.json";
    if (!fs::exists(report_path)) {
        std::cerr << json{{"error", {{"type", "missing"}, {"message", report_path.string()}}}}
                  << "\n";
        return 4;
    }
    json report;
    try {
        std::ifstream in(report_path, std::ios::binary);
        in >> report;
    } catch (const std::exception& e) {
        std::cerr << json{{"error", {{"type", "malformed"}, {"message", e.what()}}}} << "\n";
        return 4;
    }

    std::vector<std::string> missing;
    auto check_files = [&](const char* kind) {
        if (!report.contains("artifacts") || !report["artifacts"].contains(kind)) return;
        for (const auto& f : report["artifacts"][kind])
            if (!fs::exists(out / f.get<std::string>()))
                missing.push_back(f.get<std::string>());
    };
    check_files("checkpoints");
    check_files("csvs");
    if (!missing.empty()) {
        json j;
        j["error"] = {{"type", "missing"}, {"message", "artifacts listed in report.json absent"}};
        j["missing"] = missing;
        std::cerr << j << "\n";
        return 4;
    }

    auto num = [&](const json& j, const char* key) {
        return fmt17(j.at(key).get<double>());
    };
    std::printf("run: %s\n", report.at("run").get<std::string>().c_str());
    const json& cfgj = report.at("config");
    std::printf("attack: mode=%s trigger=%s target=%d rate=%s labels=%s\n",
                cfgj.at("attack.mode").get<std::string>().c_str(),
                cfgj.at("attack.trigger").get<std::string>().c_str(),
                cfgj.at("attack.target").get<int>(), num(cfgj, "attack.rate").c_str(),
                cfgj.at("attack.label_mode").get<std::string>().c_str());
    std::printf("defense: kind=%s rounds=%d t=%s curve_epochs=%d\n",
                cfgj.at("defense.kind").get<std::string>().c_str(),
                cfgj.at("defense.rounds").get<int>(), num(cfgj, "defense.curve_index").c_str(),
                cfgj.at("defense.curve_epochs").get<int>());
    const json& data = report.at("data");
    std::printf("data: train=%lld test=%lld", data.at("train_rows").get<long long>(),
                data.at("test_rows").get<long long>());
    if (data.contains("poisoned_rows"))
        std::printf(" poisoned=%lld", data.at("poisoned_rows").get<long long>());
    if (data.contains("defender_rows"))
        std::printf(" defender=%lld", data.at("defender_rows").get<long long>());
    std::printf("\n");

    const json& metrics = report.at("metrics");
    std::printf("%-12s %-22s %-22s\n", "model", "acc", "asr");
    for (const char* name : {"clean", "backdoored", "defended"}) {
        if (!metrics.contains(name)) continue;
        std::printf("%-12s %-22s %-22s\n", name, num(metrics.at(name), "acc").c_str(),
                    num(metrics.at(name), "asr").c_str());
    }

    if (report.contains("defense")) {
        const json& defense = report.at("defense");
        std::printf("rounds (%s):\n", defense.at("kind").get<std::string>().c_str());
        std::printf("  %-6s %-6s %-22s %-22s %s\n", "round", "stage", "acc", "asr", "checkpoint");
        for (const auto& row : defense.at("stages"))
            std::printf("  %-6d %-6d %-22s %-22s %s\n", row.at("round").get<int>(),
                        row.at("stage").get<int>(), num(row, "acc").c_str(),
                        num(row, "asr").c_str(),
                        row.at("checkpoint").get<std::string>().c_str());
        std::printf("success (final ASR < 0.15): %s\n",
                    defense.at("success").get<bool>() ? "yes" : "no");
    }

    std::printf("files under %s:\n", out_dir.c_str());
    for (const char* kind : {"checkpoints", "csvs"})
        if (report.contains("artifacts") && report["artifacts"].contains(kind))
            for (const auto& f : report["artifacts"][kind])
                std::printf("  %s\n", f.get<std::string>().c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

namespace {

struct CommonFlags {
    std::string config_path;
    std::string out_flag;
    std::uint64_t seed_flag = 0;
    CLI::App* sub = nullptr;
};

void add_common(CLI::App* sub, CommonFlags& flags, bool config_required) {
    flags.sub = sub;
    auto* opt = sub->add_option("--config", flags.config_path, "experiment config file");
    if (config_required) opt->required();
    sub->add_option("--seed", flags.seed_flag, "override the master seed");
    sub->add_option("--out", flags.out_flag, "override the output directory");
}

// Precedence: flag > environment > config file.
void apply_overrides(ExperimentConfig& cfg, const CommonFlags& flags) {
    if (const char* s = std::getenv("TSCLAB_SEED")) cfg.seed = parse_u64("TSCLAB_SEED", s);
    if (const char* s = std::getenv("TSCLAB_OUT")) cfg.out_dir = s;
    if (flags.sub->count("--seed") > 0) cfg.seed = flags.seed_flag;
    if (flags.sub->count("--out") > 0) cfg.out_dir = flags.out_flag;
}

void print_error(const char* type, const std::string& message) {
    std::cerr << json{{"error", {{"type", type}, {"message", message}}}} << "\n";
}

} // namespace

int cli_main(int argc, char** argv) {
    CLI::App app{"tsclab: a desk-scale laboratory for weight-symmetry backdoor purification"};
    app.require_subcommand(1);
    app.footer("config schema:\n" + config_schema());

    CommonFlags train_f, poison_f, attack_f, defend_f, landscape_f, sweep_f, report_f;
    add_common(app.add_subcommand("train", "generate data and train the clean model"), train_f,
               true);
    add_common(app.add_subcommand("poison", "additionally poison the training set"), poison_f,
               true);
    add_common(app.add_subcommand("attack", "additionally train the backdoored model"), attack_f,
               true);
    add_common(app.add_subcommand("defend", "run the full pipeline including the defense"),
               defend_f, true);
    add_common(app.add_subcommand("landscape", "stage-1 loss landscape plane"), landscape_f,
               true);
    add_common(app.add_subcommand("sweep", "one defend run per sweep.values entry"), sweep_f,
               true);
    add_common(app.add_subcommand("report", "print the summary of a finished run directory"),
               report_f, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        auto run_stage = [&](const CommonFlags& flags, PipelineStage stage) {
            ExperimentConfig cfg = load_config(flags.config_path);
            apply_overrides(cfg, flags);
            run_experiment(cfg, stage);
            return emit_report(cfg.out_dir);
        };
        if (train_f.sub->parsed()) return run_stage(train_f, PipelineStage::train);
        if (poison_f.sub->parsed()) return run_stage(poison_f, PipelineStage::poison);
        if (attack_f.sub->parsed()) return run_stage(attack_f, PipelineStage::attack);
        if (defend_f.sub->parsed()) return run_stage(defend_f, PipelineStage::defend);
        if (landscape_f.sub->parsed()) {
            ExperimentConfig cfg = load_config(landscape_f.config_path);
            apply_overrides(cfg, landscape_f);
            run_landscape(cfg);
            std::printf("landscape written to %s\n", cfg.out_dir.c_str());
            return 0;
        }
        if (sweep_f.sub->parsed()) {
            ExperimentConfig cfg = load_config(sweep_f.config_path);
            apply_overrides(cfg, sweep_f);
            run_sweep(cfg);
            std::printf("sweep written to %s\n", cfg.out_dir.c_str());
            return 0;
        }
        if (report_f.sub->parsed()) {
            std::string out_dir = "out";
            if (!report_f.config_path.empty())
                out_dir = load_config(report_f.config_path).out_dir;
            if (const char* s = std::getenv("TSCLAB_OUT")) out_dir = s;
            if (report_f.sub->count("--out") > 0) out_dir = report_f.out_flag;
            return emit_report(out_dir);
        }
        return 1; // unreachable: a subcommand is required
    } catch (const ConfigError& e) {
        print_error("config", e.what());
        return 2;
    } catch (const ArgumentError& e) {
        print_error("config", e.what());
        return 2;
    } catch (const DimensionError& e) {
        print_error("config", e.what());
        return 2;
    } catch (const NumericError& e) {
        print_error("numeric", e.what());
        return 3;
    } catch (const IoError& e) {
        print_error("io", e.what());
        return 4;
    } catch (const std::exception& e) {
        print_error("internal", e.what());
        return 1;
    }
}

} // namespace tsclab
