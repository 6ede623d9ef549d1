#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tsclab/adaptive.hpp"
#include "tsclab/purify.hpp"

namespace tsclab {

enum class AttackerMode { data_poison, adaptive_subspace };
enum class DefenseKind { none, tsc, mcr };
enum class SweepAxis { rounds, curve_index, poison_rate };

struct SweepPlan {
    SweepAxis axis = SweepAxis::curve_index;
    std::vector<double> values;
};

// Everything a run needs, parsed from a flat key = value config file. The
// documented schema lives in config_schema(); every key has a default, so an
// empty file is a valid config. Seed and output directory may be overridden by
// the TSCLAB_SEED / TSCLAB_OUT environment variables and the --seed / --out
// flags (flag beats environment beats file).
struct ExperimentConfig {
    // data.*
    int classes = 4;
    int per_class_train = 250;
    int per_class_test = 100;
    int height = 10;
    int width = 10;
    double noise_sigma = 0.10;
    double defender_fraction = 0.10;
    // model.*
    std::vector<int> hidden = {64, 64};
    int feature_dim = 0; // output width; 0 means data.classes (supervised head)
    // train.*
    TrainingMethod method; // defaults adjusted in the constructor below
    // attack.*
    AttackerMode attacker = AttackerMode::data_poison;
    std::string trigger_kind = "patch"; // patch | blended | signal
    int target_class = 0;
    double poison_rate = 0.05;
    LabelMode label_mode = LabelMode::flip;
    int patch_size = 2;
    double patch_value = 1.0;
    double blend_alpha = 0.2;
    double signal_amplitude = 0.15;
    double signal_frequency = 6.0;
    int adaptive_epochs = 200;
    double adaptive_lr = 0.02;
    // defense.*
    DefenseKind defense = DefenseKind::tsc;
    int rounds = 3;
    double curve_index = 0.4;
    int curve_epochs = 200;
    double curve_lr = 0.02;
    int finetune_epochs = 5;
    double finetune_lr = 1e-4;
    int profile_points = 11; // t grid per stage; 0 disables profile CSVs
    // probe.* (evaluation of contrastive encoders)
    int probe_per_class = 50;
    int probe_epochs = 200;
    double probe_lr = 0.5;
    // landscape.*
    int grid_nx = 25;
    int grid_ny = 25;
    double grid_margin = 0.2;
    // sweep.* (required only by the sweep subcommand)
    std::optional<SweepPlan> sweep;
    // top level
    std::uint64_t seed = 1;
    std::string out_dir = "out";

    ExperimentConfig();

    NetworkSpec network_spec() const;
    TriggerSpec trigger() const;  // resolved against the image geometry
    PoisonPlan poison_plan() const;
    TscConfig tsc_config() const;
    void validate() const; // throws ConfigError naming the offending field
};

// One line per key: "key  default  explanation".
std::string config_schema();

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// How far along the pipeline a run goes: train stops after the clean model,
// poison after dataset poisoning, attack after the backdoored model, defend
// runs everything.
enum class PipelineStage { train, poison, attack, defend };

struct RunArtifacts {
    std::string out_dir;
    std::vector<std::string> checkpoints; // paths relative to out_dir
    std::vector<std::string> csvs;
    std::string report_json = "report.json";
    std::string timings_json = "timings.json";
};

struct PipelineResult {
    Metrics clean;    // reference model trained on the unpoisoned set
    Metrics before;   // backdoored model (attack stage onward)
    Metrics after;    // defended model (defend stage with a real defense)
    bool defense_ran = false;
    bool success = false; // after.asr < 0.15
    DefenseReport report;
    RunArtifacts artifacts;
};

// Executes the pipeline deterministically and writes all artifacts under
// cfg.out_dir: stage-named checkpoints (clean, backdoored, round{k}_stage{1|2},
// final), dataset and profile CSVs, report.json (bitwise reproducible) and
// timings.json (wall clock, excluded from the reproducibility guarantee).
PipelineResult run_experiment(const ExperimentConfig& cfg,
                              PipelineStage stage = PipelineStage::defend);

// Stage-1 landscape: anchors (backdoored model, its max-distance twin, the
// fitted first-curve control point), losses of the clean test set and the
// triggered pool on a grid plane; writes landscape.csv and landscape.json.
void run_landscape(const ExperimentConfig& cfg);

// One full pipeline per value, shared seed, isolated sub-directories
// run_00, run_01, ...; appends each finished row to sweep.csv immediately so an
// aborted sweep keeps its partial results.
void run_sweep(const ExperimentConfig& cfg);

// Prints the human-readable summary for a finished run directory. Returns 0,
// or 4 when report.json or a referenced artifact is missing.
int emit_report(const std::string& out_dir);

// Full command-line front end (subcommands train, poison, attack, defend,
// landscape, sweep, report). Returns the process exit code: 0 success,
// 2 invalid config, 3 numeric failure, 4 missing files / IO failure.
int cli_main(int argc, char** argv);

} // namespace tsclab
