#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hyperimage/train.hpp"

namespace hyperimage {

struct StageSettings {
    std::string spec;
    std::string head_spec;  // ranking stage only
    int epochs = 80;
    int patience = 20;
    std::size_t batch = 128;
    double lr = 0.005;
    double lr_decay = 1e-5;
    double momentum = 0.9;
    int plateau_patience = 10;
    double plateau_factor = 10.0;
    double min_delta = 1e-4;
    bool class_weighting = false;
    bool augment_hflip = false;
    std::size_t max_crops_per_image = 0;  // synthetic stage 1; 0 keeps the full grid
    std::size_t contour_points = 15;      // ranking stage
};

struct ProfileSettings {
    std::size_t max_h = 0, max_w = 0;
    std::size_t patch = 32;
    std::size_t grid_y = 0, grid_x = 0;
    std::string preprocess = "none";  // none | lcn | mean-subtract
};

struct ExperimentConfig {
    std::string id;
    std::string kind;  // synthetic | iqa | forgery
    std::string out_dir = "out";
    std::string manifest;  // iqa/forgery ingestion instead of a generator
    std::uint64_t seed = 0;
    unsigned jobs = 2;

    // generators
    std::size_t synth_count = 0;
    std::size_t iqa_references = 0;
    std::vector<double> iqa_sigmas;
    std::size_t forgery_pairs = 0;
    std::size_t forgery_height = 128, forgery_width = 192;

    double score_lo = 0.0, score_hi = 100.0;
    double reference_score = 9.0;  // label for pristine reference patches
    double selective_tau = 0.95;

    ProfileSettings profile;
    ProfileSettings baseline_profile;  // patch-average grid

    StageSettings stage1, stage2, rank, e2e;
    bool run_patch_average = true;
    bool run_e2e = false;

    std::array<double, 3> fractions{0.6, 0.2, 0.2};
    int n_splits = 1;
    std::string statistic = "mean";
};

// Parses and validates a config; unknown spec ids or kinds are rejected here,
// before any compute happens.
ExperimentConfig load_experiment_config(const std::string& path);
std::string experiment_config_json(const ExperimentConfig& cfg);  // out_dir stripped

// Full pipeline: generate (when configured) -> splits -> stage 1 -> extract
// -> stage 2 -> baselines -> metrics -> summaries; every artifact lands under
// <out_dir>/<id>/ and a hash manifest of produced files is written last.
// Errors leave a partial-run marker and rethrow.
void run_experiment(const ExperimentConfig& cfg);

// individual stages, for the CLI subcommands; each checks its prerequisites
void stage_generate(const ExperimentConfig& cfg);
void stage_splits(const ExperimentConfig& cfg);
void stage_train_stage1(const ExperimentConfig& cfg);
void stage_train_rank(const ExperimentConfig& cfg);
void stage_extract(const ExperimentConfig& cfg);
void stage_train_stage2(const ExperimentConfig& cfg);
void stage_baseline_avg(const ExperimentConfig& cfg);
void stage_baseline_e2e(const ExperimentConfig& cfg);
void stage_evaluate(const ExperimentConfig& cfg);
void stage_finalize(const ExperimentConfig& cfg);

// consolidated comparison table (proposed vs baselines) from a finished run
void emit_comparison_report(const std::string& run_dir);

std::string experiment_dir(const ExperimentConfig& cfg);

}  // namespace hyperimage
