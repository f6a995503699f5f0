#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "hyperimage/grid.hpp"
#include "hyperimage/image.hpp"
#include "hyperimage/net.hpp"

namespace hyperimage {

// Deterministic parallel map: workers pull indices from a shared counter and
// every effect is stored per index, so results never depend on scheduling.
void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn);

struct TrainConfig {
    std::string spec_id;
    int epochs = 80;
    int patience = 20;        // early stop, epochs without improvement
    double min_delta = 1e-4;  // improvement threshold for both stoppers
    std::size_t batch_size = 128;
    double lr = 0.005;
    double lr_decay = 1e-5;
    double momentum = 0.9;
    int plateau_patience = 10;  // lr cut after this many stale epochs
    double plateau_factor = 10.0;
    std::uint64_t seed = 0;
    bool class_weighting = false;
    bool augment_hflip = false;
    unsigned jobs = 2;
};

struct RunReport {
    std::vector<double> train_loss, val_loss, lr_trace;
    int best_epoch = -1;
    double best_val_loss = 0.0;
    std::map<std::string, double> final_metrics;
    double wall_clock_seconds = 0.0;  // informational; kept out of hashed artifacts
};

struct Sample {
    RealTensor input;
    RealTensor target;
};

using SampleSet = std::vector<Sample>;

struct TrainResult {
    ModelParams params;  // best-epoch weights
    RunReport report;
};

// Mini-batch SGD against the spec's loss with early stopping on validation
// loss. Gradients are reduced over fixed sample groups in index order, so
// runs are bit-reproducible for any worker count.
TrainResult train_supervised(const Network& net, const SampleSet& train, const SampleSet& val,
                             const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// pairwise ranking stage
// ---------------------------------------------------------------------------

struct RankPair {
    RealTensor a, b;
    double label = 1.0;  // +1: first channel input should rank higher
};

struct RankModel {
    NetworkSpec channel_spec;
    ModelParams channel;
    NetworkSpec head_spec;
    ModelParams head;
};

struct RankResult {
    RankModel model;
    RunReport report;
};

// Two weight-sharing channels; the head scores d = head(C1 - C2) under the
// hinge L = max(0, margin - y*d). Channel order is randomly swapped per epoch
// (with the label negated) unless disabled, in which case a single-label pair
// stream is rejected.
RankResult train_ranking(const Network& channel, const Network& head,
                         const std::vector<RankPair>& train, const std::vector<RankPair>& val,
                         const TrainConfig& cfg, bool randomize_channel_order = true);

double rank_distance(const Network& channel, const Network& head, const RankModel& model,
                     const RealTensor& a, const RealTensor& b);

// ---------------------------------------------------------------------------
// hyper-image extraction and the two predictors
// ---------------------------------------------------------------------------

enum class Preprocess { none, lcn, mean_subtract };

struct DatasetProfile {
    std::size_t max_h = 0, max_w = 0;  // dataset maximum dimensions
    std::size_t patch = 32;
    std::size_t grid_y = 0, grid_x = 0;  // feature-grid shape fed to stage 2
    Preprocess preprocess = Preprocess::none;
    std::vector<double> channel_means;  // per-channel, for mean_subtract
};

// rescale into the profile bounds and apply image-level preprocessing
Image prepare_image(const Image& img, const DatasetProfile& prof);

// patch-level preprocessing (mean subtraction) and tensor conversion
RealTensor patch_input(const Image& patch, const DatasetProfile& prof);

HyperImage extract_hyper_image(const Image& img, const Network& stage1, const ModelParams& params,
                               const DatasetProfile& prof, unsigned jobs = 1);

double predict_two_stage(const Image& img, const Network& stage1, const ModelParams& p1,
                         const Network& stage2, const ModelParams& p2, const DatasetProfile& prof,
                         unsigned jobs = 1);

// position-blind baseline: mean of the stage-1 outputs over the profile grid
double predict_patch_average(const Image& img, const Network& stage1, const ModelParams& p1,
                             const DatasetProfile& prof, unsigned jobs = 1);

}  // namespace hyperimage
