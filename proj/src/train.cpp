#include "hyperimage/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace hyperimage {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

constexpr std::size_t kReduceGroup = 8;  // fixed reduction granularity

ModelParams zero_like(const ModelParams& p) {
    ModelParams z;
    z.layers.resize(p.layers.size());
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        if (!p.layers[i].present) continue;
        z.layers[i].weights = RealTensor(p.layers[i].weights.shape);
        z.layers[i].bias = RealTensor(p.layers[i].bias.shape);
        z.layers[i].present = true;
    }
    return z;
}

RealTensor hflip_tensor(const RealTensor& t) {
    if (t.rank() != 3) return t;
    const std::size_t h = t.shape[0], w = t.shape[1], c = t.shape[2];
    RealTensor out(t.shape);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t ch = 0; ch < c; ++ch)
                out.data[(y * w + x) * c + ch] = t.data[(y * w + (w - 1 - x)) * c + ch];
    return out;
}

std::uint64_t sample_seed(std::uint64_t base, int epoch, std::size_t idx) {
    return hash_combine(hash_combine(base, 0x5A17ull + static_cast<std::uint64_t>(epoch)),
                        static_cast<std::uint64_t>(idx));
}

struct EpochState {
    double best_val = 0.0;
    int best_epoch = -1;
    int since_improve = 0;
    bool cut_this_stall = false;

    // returns true when the run should stop
    bool observe(double val, int epoch, double min_delta, int patience, OptimizerState& opt) {
        if (best_epoch < 0 || val < best_val - min_delta) {
            best_val = val;
            best_epoch = epoch;
            since_improve = 0;
            cut_this_stall = false;
            return false;
        }
        ++since_improve;
        if (since_improve >= opt.plateau_patience && !cut_this_stall) {
            opt.trigger_plateau();
            cut_this_stall = true;  // one reduction per plateau event
        }
        return since_improve >= patience;
    }
};

}  // namespace

void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    const unsigned workers = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(n)));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex error_mutex;
    for (unsigned t = 0; t < workers; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

TrainResult train_supervised(const Network& net, const SampleSet& train, const SampleSet& val,
                             const TrainConfig& cfg) {
    if (train.empty()) fail("train_supervised: empty train set");
    if (val.empty()) fail("train_supervised: empty validation set");
    if (cfg.batch_size == 0) fail("train_supervised: batch size must be positive");
    if (cfg.patience >= cfg.epochs) fail("train_supervised: patience must stay below epochs");

    const auto t_start = std::chrono::steady_clock::now();
    const LossSpec& loss = net.spec().loss;

    // class weights balance a skewed binary stream
    double w_pos = 1.0, w_neg = 1.0;
    if (cfg.class_weighting && loss.kind == LossKind::bce) {
        std::size_t pos = 0;
        for (const auto& s : train)
            if (s.target[0] == 1.0) ++pos;
        const std::size_t neg = train.size() - pos;
        if (pos == 0 || neg == 0) fail("train_supervised: class weighting needs both classes");
        w_pos = static_cast<double>(train.size()) / (2.0 * static_cast<double>(pos));
        w_neg = static_cast<double>(train.size()) / (2.0 * static_cast<double>(neg));
    }
    auto weight_of = [&](const Sample& s) {
        if (!cfg.class_weighting || loss.kind != LossKind::bce) return 1.0;
        return s.target[0] == 1.0 ? w_pos : w_neg;
    };

    ModelParams params = net.init_params(hash_combine(cfg.seed, 0x1417ull));
    OptimizerState opt = make_optimizer(params, cfg.lr, cfg.lr_decay, cfg.momentum,
                                        cfg.plateau_patience, cfg.plateau_factor);

    TrainResult result;
    result.params = params;
    EpochState stop;

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        try {
            Rng shuffle_rng(hash_combine(hash_combine(cfg.seed, 0x0EDull), static_cast<std::uint64_t>(epoch)));
            shuffle_rng.shuffle(order);

            double epoch_loss = 0.0;
            for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
                const std::size_t count = std::min(cfg.batch_size, order.size() - start);
                const std::size_t n_groups = (count + kReduceGroup - 1) / kReduceGroup;
                std::vector<ModelParams> partial(n_groups);
                std::vector<double> partial_loss(n_groups, 0.0);

                parallel_for(n_groups, cfg.jobs, [&](std::size_t gi) {
                    ModelParams acc = zero_like(params);
                    double lacc = 0.0;
                    const std::size_t lo = gi * kReduceGroup;
                    const std::size_t hi = std::min(lo + kReduceGroup, count);
                    for (std::size_t k = lo; k < hi; ++k) {
                        const std::size_t idx = order[start + k];
                        const Sample& s = train[idx];
                        Rng rng(sample_seed(cfg.seed, epoch, idx));
                        const bool flip = cfg.augment_hflip && rng.coin();
                        const RealTensor& input_ref = s.input;
                        RealTensor flipped;
                        if (flip) flipped = hflip_tensor(input_ref);
                        const RealTensor& input = flip ? flipped : input_ref;

                        ForwardTrace trace = net.forward(params, input, RunMode::train, &rng);
                        LossValue lv = compute_loss(loss, net.output(trace), s.target);
                        const double w = weight_of(s);
                        lacc += w * lv.value;
                        if (w != 1.0)
                            for (double& gv : lv.grad.data) gv *= w;
                        BackwardResult back = net.backward(params, trace, lv.grad);
                        axpy(acc, back.grads, 1.0);
                    }
                    partial[gi] = std::move(acc);
                    partial_loss[gi] = lacc;
                });

                ModelParams batch_grad = zero_like(params);
                for (std::size_t gi = 0; gi < n_groups; ++gi) {
                    axpy(batch_grad, partial[gi], 1.0);
                    epoch_loss += partial_loss[gi];
                }
                scale_params(batch_grad, 1.0 / static_cast<double>(count));
                sgd_update(params, batch_grad, opt);
            }
            result.report.train_loss.push_back(epoch_loss / static_cast<double>(train.size()));

            // validation in inference mode
            std::vector<double> val_losses(val.size());
            parallel_for(val.size(), cfg.jobs, [&](std::size_t i) {
                ForwardTrace trace = net.forward(params, val[i].input, RunMode::infer);
                val_losses[i] = weight_of(val[i]) * compute_loss(loss, net.output(trace), val[i].target).value;
            });
            const double val_loss =
                std::accumulate(val_losses.begin(), val_losses.end(), 0.0) / static_cast<double>(val.size());
            result.report.val_loss.push_back(val_loss);
            result.report.lr_trace.push_back(opt.effective_lr());

            const int prev_best = stop.best_epoch;
            const bool done = stop.observe(val_loss, epoch, cfg.min_delta, cfg.patience, opt);
            if (stop.best_epoch == epoch && stop.best_epoch != prev_best) result.params = params;
            if (done) break;
        } catch (const std::exception& e) {
            fail("epoch " + std::to_string(epoch) + ": " + e.what());
        }
    }

    result.report.best_epoch = stop.best_epoch;
    result.report.best_val_loss = stop.best_val;
    result.report.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return result;
}

// ---------------------------------------------------------------------------
// ranking
// ---------------------------------------------------------------------------

double rank_distance(const Network& channel, const Network& head, const RankModel& model,
                     const RealTensor& a, const RealTensor& b) {
    ForwardTrace ta = channel.forward(model.channel, a, RunMode::infer);
    ForwardTrace tb = channel.forward(model.channel, b, RunMode::infer);
    RealTensor diff = channel.output(ta);
    for (std::size_t i = 0; i < diff.numel(); ++i) diff[i] -= channel.output(tb)[i];
    diff.shape = {diff.numel()};
    ForwardTrace th = head.forward(model.head, diff, RunMode::infer);
    return head.output(th)[0];
}

RankResult train_ranking(const Network& channel, const Network& head,
                         const std::vector<RankPair>& train, const std::vector<RankPair>& val,
                         const TrainConfig& cfg, bool randomize_channel_order) {
    if (train.empty()) fail("train_ranking: empty pair stream");
    if (val.empty()) fail("train_ranking: empty validation pairs");
    if (cfg.patience >= cfg.epochs) fail("train_ranking: patience must stay below epochs");
    if (head.spec().loss.kind != LossKind::pairwise_rank)
        fail("train_ranking: head spec must carry the pairwise-rank loss");
    if (!randomize_channel_order) {
        const double first = train[0].label;
        bool mixed = false;
        for (const auto& p : train)
            if (p.label != first) mixed = true;
        if (!mixed) fail("train_ranking: pair stream carries a single label and shuffling is disabled");
    }
    for (const auto& p : train)
        if (p.label != 1.0 && p.label != -1.0) fail("train_ranking: labels must be -1 or +1");

    const auto t_start = std::chrono::steady_clock::now();
    const LossSpec& loss = head.spec().loss;

    RankResult result;
    result.model.channel_spec = channel.spec();
    result.model.head_spec = head.spec();
    ModelParams cparams = channel.init_params(hash_combine(cfg.seed, 0xC0ull));
    ModelParams hparams = head.init_params(hash_combine(cfg.seed, 0x0Dull));
    OptimizerState copt = make_optimizer(cparams, cfg.lr, cfg.lr_decay, cfg.momentum,
                                         cfg.plateau_patience, cfg.plateau_factor);
    OptimizerState hopt = make_optimizer(hparams, cfg.lr, cfg.lr_decay, cfg.momentum,
                                         cfg.plateau_patience, cfg.plateau_factor);
    result.model.channel = cparams;
    result.model.head = hparams;

    EpochState stop;
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        try {
            Rng shuffle_rng(hash_combine(hash_combine(cfg.seed, 0x0EDull), static_cast<std::uint64_t>(epoch)));
            shuffle_rng.shuffle(order);

            double epoch_loss = 0.0;
            for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
                const std::size_t count = std::min(cfg.batch_size, order.size() - start);
                const std::size_t n_groups = (count + kReduceGroup - 1) / kReduceGroup;
                std::vector<ModelParams> cpartial(n_groups), hpartial(n_groups);
                std::vector<double> partial_loss(n_groups, 0.0);

                parallel_for(n_groups, cfg.jobs, [&](std::size_t gi) {
                    ModelParams cacc = zero_like(cparams);
                    ModelParams hacc = zero_like(hparams);
                    double lacc = 0.0;
                    const std::size_t lo = gi * kReduceGroup;
                    const std::size_t hi = std::min(lo + kReduceGroup, count);
                    for (std::size_t k = lo; k < hi; ++k) {
                        const std::size_t idx = order[start + k];
                        const RankPair& pair = train[idx];
                        Rng rng(sample_seed(cfg.seed, epoch, idx));

                        const bool swap = randomize_channel_order && rng.coin();
                        const bool flip = cfg.augment_hflip && rng.coin();
                        RealTensor xa = swap ? pair.b : pair.a;
                        RealTensor xb = swap ? pair.a : pair.b;
                        const double y = swap ? -pair.label : pair.label;
                        if (flip) {
                            xa = hflip_tensor(xa);
                            xb = hflip_tensor(xb);
                        }

                        ForwardTrace ta = channel.forward(cparams, xa, RunMode::train, &rng);
                        ForwardTrace tb = channel.forward(cparams, xb, RunMode::train, &rng);
                        RealTensor diff = channel.output(ta);
                        for (std::size_t i = 0; i < diff.numel(); ++i) diff[i] -= channel.output(tb)[i];
                        diff.shape = {diff.numel()};
                        ForwardTrace th = head.forward(hparams, diff, RunMode::train, &rng);

                        RealTensor target({1});
                        target[0] = y;
                        LossValue lv = compute_loss(loss, head.output(th), target);
                        lacc += lv.value;
                        if (lv.grad[0] == 0.0) continue;  // hinge inactive

                        BackwardResult hb = head.backward(hparams, th, lv.grad);
                        axpy(hacc, hb.grads, 1.0);

                        RealTensor ga = hb.input_grad;
                        ga.shape = channel.output(ta).shape;
                        BackwardResult cba = channel.backward(cparams, ta, ga);
                        axpy(cacc, cba.grads, 1.0);

                        RealTensor gb = hb.input_grad;
                        for (double& v : gb.data) v = -v;
                        gb.shape = channel.output(tb).shape;
                        BackwardResult cbb = channel.backward(cparams, tb, gb);
                        axpy(cacc, cbb.grads, 1.0);
                    }
                    cpartial[gi] = std::move(cacc);
                    hpartial[gi] = std::move(hacc);
                    partial_loss[gi] = lacc;
                });

                ModelParams cgrad = zero_like(cparams);
                ModelParams hgrad = zero_like(hparams);
                for (std::size_t gi = 0; gi < n_groups; ++gi) {
                    axpy(cgrad, cpartial[gi], 1.0);
                    axpy(hgrad, hpartial[gi], 1.0);
                    epoch_loss += partial_loss[gi];
                }
                scale_params(cgrad, 1.0 / static_cast<double>(count));
                scale_params(hgrad, 1.0 / static_cast<double>(count));
                sgd_update(cparams, cgrad, copt);
                sgd_update(hparams, hgrad, hopt);
            }
            result.report.train_loss.push_back(epoch_loss / static_cast<double>(train.size()));

            RankModel current;
            current.channel = cparams;
            current.head = hparams;
            std::vector<double> val_losses(val.size());
            std::vector<double> satisfied(val.size(), 0.0);
            parallel_for(val.size(), cfg.jobs, [&](std::size_t i) {
                const double d = rank_distance(channel, head, current, val[i].a, val[i].b);
                const double margin = loss.margin - val[i].label * d;
                val_losses[i] = margin > 0.0 ? margin : 0.0;
                satisfied[i] = val[i].label * d >= loss.margin ? 1.0 : 0.0;
            });
            const double val_loss =
                std::accumulate(val_losses.begin(), val_losses.end(), 0.0) / static_cast<double>(val.size());
            result.report.val_loss.push_back(val_loss);
            result.report.lr_trace.push_back(copt.effective_lr());
            result.report.final_metrics["val_margin_satisfaction"] =
                std::accumulate(satisfied.begin(), satisfied.end(), 0.0) / static_cast<double>(val.size());

            const int prev_best = stop.best_epoch;
            const bool done = stop.observe(val_loss, epoch, cfg.min_delta, cfg.patience, copt);
            if (stop.best_epoch == epoch && stop.best_epoch != prev_best) {
                result.model.channel = cparams;
                result.model.head = hparams;
            }
            if (done) break;
        } catch (const std::exception& e) {
            fail("epoch " + std::to_string(epoch) + ": " + e.what());
        }
    }

    result.report.best_epoch = stop.best_epoch;
    result.report.best_val_loss = stop.best_val;
    result.report.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return result;
}

// ---------------------------------------------------------------------------
// extraction and predictors
// ---------------------------------------------------------------------------

Image prepare_image(const Image& img, const DatasetProfile& prof) {
    Image scaled = isotropic_rescale(img, prof.max_h, prof.max_w);
    if (prof.preprocess == Preprocess::lcn) return lcn(scaled);
    return scaled;
}

RealTensor patch_input(const Image& patch, const DatasetProfile& prof) {
    RealTensor t = image_to_tensor(patch);
    if (prof.preprocess == Preprocess::mean_subtract) {
        if (prof.channel_means.size() != patch.c)
            fail("patch_input: channel means not sized for this image");
        for (std::size_t i = 0; i < t.numel(); ++i) t[i] -= prof.channel_means[i % patch.c];
    }
    return t;
}

HyperImage extract_hyper_image(const Image& img, const Network& stage1, const ModelParams& params,
                               const DatasetProfile& prof, unsigned jobs) {
    const Image prepared = prepare_image(img, prof);
    const GridGeometry geom = make_grid(prepared.h, prepared.w, prof.patch, prof.grid_y, prof.grid_x);
    const std::vector<Image> patches = extract_grid(prepared, geom);

    const std::size_t d = stage1.penultimate_dim();
    HyperImage h;
    h.u = prof.grid_y;
    h.v = prof.grid_x;
    h.d = d;
    h.grid = RealTensor({h.u, h.v, h.d});
    parallel_for(patches.size(), jobs, [&](std::size_t i) {
        RealTensor feat = stage1.penultimate_features(params, patch_input(patches[i], prof));
        std::copy(feat.data.begin(), feat.data.end(), h.grid.data.begin() + static_cast<long>(i * d));
    });
    return h;
}

double predict_two_stage(const Image& img, const Network& stage1, const ModelParams& p1,
                         const Network& stage2, const ModelParams& p2, const DatasetProfile& prof,
                         unsigned jobs) {
    HyperImage h = extract_hyper_image(img, stage1, p1, prof, jobs);
    if (stage2.spec().input_shape != h.grid.shape)
        fail("predict_two_stage: profile grid " + shape_str(h.grid.shape) +
             " inconsistent with the stage-2 input " + shape_str(stage2.spec().input_shape));
    ForwardTrace t = stage2.forward(p2, h.grid, RunMode::infer);
    return stage2.output(t)[0];
}

double predict_patch_average(const Image& img, const Network& stage1, const ModelParams& p1,
                             const DatasetProfile& prof, unsigned jobs) {
    const Image prepared = prepare_image(img, prof);
    const GridGeometry geom = make_grid(prepared.h, prepared.w, prof.patch, prof.grid_y, prof.grid_x);
    const std::vector<Image> patches = extract_grid(prepared, geom);
    std::vector<double> scores(patches.size());
    parallel_for(patches.size(), jobs, [&](std::size_t i) {
        ForwardTrace t = stage1.forward(p1, patch_input(patches[i], prof), RunMode::infer);
        scores[i] = stage1.output(t)[0];
    });
    double total = 0.0;
    for (double s : scores) total += s;
    return total / static_cast<double>(scores.size());
}

}  // namespace hyperimage
