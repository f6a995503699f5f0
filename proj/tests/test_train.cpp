#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "hyperimage/train.hpp"

using namespace hyperimage;

namespace {

NetworkSpec tiny_regressor() {
    NetworkSpec s;
    s.input_shape = {4};
    s.layers = {{Dense{8, Activation::relu}, "", ""}, {Dense{1, Activation::linear}, "", ""}};
    s.loss = {LossKind::mae, 3.0};
    return s;
}

SampleSet constant_label_set(std::size_t n, double label, std::uint64_t seed) {
    SampleSet set;
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        Sample s;
        s.input = RealTensor({4});
        for (double& v : s.input.data) v = rng.uniform(-1.0, 1.0);
        s.target = RealTensor({1});
        s.target[0] = label;
        set.push_back(std::move(s));
    }
    return set;
}

TrainConfig quick_config(std::uint64_t seed) {
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.patience = 10;
    cfg.batch_size = 16;
    cfg.lr = 0.05;
    cfg.lr_decay = 0.0;
    cfg.seed = seed;
    cfg.jobs = 2;
    return cfg;
}

}  // namespace

TEST_CASE("constant-label regression converges to the constant predictor") {
    Network net(tiny_regressor());
    SampleSet train = constant_label_set(60, 2.5, 1);
    SampleSet val = constant_label_set(20, 2.5, 2);
    TrainResult r = train_supervised(net, train, val, quick_config(11));
    CHECK(r.report.best_val_loss < 0.05);
    CHECK(r.report.val_loss.size() <= 20);
}

TEST_CASE("training is bit-reproducible across runs with parallel workers") {
    Network net(tiny_regressor());
    SampleSet train = constant_label_set(40, 1.0, 3);
    SampleSet val = constant_label_set(10, 1.0, 4);
    TrainResult a = train_supervised(net, train, val, quick_config(7));
    TrainResult b = train_supervised(net, train, val, quick_config(7));
    CHECK(a.report.train_loss == b.report.train_loss);
    CHECK(a.report.val_loss == b.report.val_loss);
    for (std::size_t i = 0; i < a.params.layers.size(); ++i) {
        if (!a.params.layers[i].present) continue;
        CHECK(a.params.layers[i].weights.data == b.params.layers[i].weights.data);
    }

    TrainConfig serial = quick_config(7);
    serial.jobs = 1;
    TrainResult c = train_supervised(net, train, val, serial);
    CHECK(a.report.train_loss == c.report.train_loss);
}

TEST_CASE("returned model tracks the best validation epoch") {
    Network net(tiny_regressor());
    // noisy labels make validation wobble
    SampleSet train = constant_label_set(40, 1.0, 5);
    Rng noise(6);
    for (auto& s : train) s.target[0] += noise.uniform(-0.5, 0.5);
    SampleSet val = constant_label_set(16, 1.0, 7);
    for (auto& s : val) s.target[0] += noise.uniform(-0.5, 0.5);

    TrainResult r = train_supervised(net, train, val, quick_config(13));
    REQUIRE(r.report.best_epoch >= 0);
    const double best = *std::min_element(r.report.val_loss.begin(), r.report.val_loss.end());
    CHECK(r.report.best_val_loss == best);
    CHECK(r.report.val_loss[static_cast<std::size_t>(r.report.best_epoch)] == best);
}

TEST_CASE("empty sets and bad configs are rejected") {
    Network net(tiny_regressor());
    SampleSet train = constant_label_set(8, 1.0, 8);
    SampleSet val = constant_label_set(4, 1.0, 9);
    CHECK_THROWS(train_supervised(net, {}, val, quick_config(1)));
    CHECK_THROWS(train_supervised(net, train, {}, quick_config(1)));
    TrainConfig bad = quick_config(1);
    bad.patience = bad.epochs;
    CHECK_THROWS(train_supervised(net, train, val, bad));
}

TEST_CASE("class-weighted bce narrows the per-class recall gap on an imbalanced fixture") {
    NetworkSpec s;
    s.input_shape = {4};
    s.layers = {{Dense{8, Activation::relu}, "", ""}, {Dense{1, Activation::sigmoid}, "", ""}};
    s.loss = {LossKind::bce, 3.0};
    Network net(s);

    auto make = [](std::size_t n_pos, std::size_t n_neg, std::uint64_t seed) {
        SampleSet set;
        Rng rng(seed);
        for (std::size_t i = 0; i < n_pos + n_neg; ++i) {
            const bool pos = i < n_pos;
            Sample smp;
            smp.input = RealTensor({4});
            for (double& v : smp.input.data)
                v = (pos ? 0.6 : 0.0) + 0.4 * rng.uniform01();
            smp.target = RealTensor({1});
            smp.target[0] = pos ? 1.0 : 0.0;
            set.push_back(std::move(smp));
        }
        return set;
    };

    SampleSet train = make(70, 30, 21);
    SampleSet val = make(14, 6, 22);
    TrainConfig cfg = quick_config(31);
    cfg.epochs = 40;
    cfg.patience = 20;
    cfg.class_weighting = true;
    TrainResult r = train_supervised(net, train, val, cfg);

    double pos_correct = 0, pos_total = 0, neg_correct = 0, neg_total = 0;
    for (const auto& smp : val) {
        ForwardTrace t = net.forward(r.params, smp.input, RunMode::infer);
        const int pred = net.output(t)[0] >= 0.5 ? 1 : 0;
        if (smp.target[0] == 1.0) {
            ++pos_total;
            if (pred == 1) ++pos_correct;
        } else {
            ++neg_total;
            if (pred == 0) ++neg_correct;
        }
    }
    const double gap = std::abs(pos_correct / pos_total - neg_correct / neg_total);
    CHECK(gap < 0.2);
}

TEST_CASE("ranking stage separates two feature populations") {
    NetworkSpec cs;
    cs.input_shape = {4};
    cs.layers = {{Dense{8, Activation::relu}, "", ""}, {Dense{4, Activation::relu}, "", ""}};
    cs.loss = {LossKind::pairwise_rank, 3.0};
    NetworkSpec hs;
    hs.input_shape = {4};
    hs.layers = {{Dense{4, Activation::relu, false}, "", ""},
                 {Dense{1, Activation::linear, false}, "", ""}};
    hs.loss = {LossKind::pairwise_rank, 3.0};
    Network channel(cs), head(hs);

    auto make_pairs = [](std::size_t n, std::uint64_t seed) {
        std::vector<RankPair> pairs;
        Rng rng(seed);
        for (std::size_t i = 0; i < n; ++i) {
            RankPair p;
            p.a = RealTensor({4});
            p.b = RealTensor({4});
            for (double& v : p.a.data) v = 0.6 + 0.4 * rng.uniform01();  // the higher-ranked class
            for (double& v : p.b.data) v = 0.4 * rng.uniform01();
            p.label = 1.0;
            pairs.push_back(std::move(p));
        }
        return pairs;
    };

    auto train_pairs = make_pairs(120, 41);
    auto val_pairs = make_pairs(40, 42);
    TrainConfig cfg = quick_config(51);
    cfg.epochs = 60;
    cfg.patience = 30;
    cfg.lr = 0.02;
    RankResult r = train_ranking(channel, head, train_pairs, val_pairs, cfg);
    CHECK(r.report.final_metrics.at("val_margin_satisfaction") >= 0.7);

    // identical inputs give zero distance, so the loss is the full margin
    const RealTensor& x = train_pairs[0].a;
    CHECK(rank_distance(channel, head, r.model, x, x) == 0.0);
    RealTensor zero_d({1}), plus({1});
    plus[0] = 1.0;
    CHECK(compute_loss(head.spec().loss, zero_d, plus).value == 3.0);

    // the trained model orders swapped pairs the opposite way
    const double dab = rank_distance(channel, head, r.model, train_pairs[0].a, train_pairs[0].b);
    const double dba = rank_distance(channel, head, r.model, train_pairs[0].b, train_pairs[0].a);
    CHECK(dab > 0.0);
    CHECK(dba < dab);

    // a single-label stream without channel shuffling is rejected
    CHECK_THROWS(train_ranking(channel, head, train_pairs, val_pairs, cfg, false));
}

TEST_CASE("hyper extraction is deterministic, local and non-negative") {
    NetworkSpec s1;
    s1.input_shape = {8, 8, 1};
    s1.layers = {{ConvSame{2, 3, 1}, "", ""},
                 {MaxPool{2, 2}, "", ""},
                 {Dense{5, Activation::relu}, "", ""},
                 {Dense{1, Activation::linear}, "", ""}};
    s1.loss = {LossKind::mae, 3.0};
    Network stage1(s1);
    ModelParams p1 = stage1.init_params(61);

    DatasetProfile prof;
    prof.max_h = prof.max_w = 24;
    prof.patch = 8;
    prof.grid_y = prof.grid_x = 3;

    Image img(24, 24, 1);
    Rng rng(62);
    for (double& v : img.px) v = rng.uniform01();

    HyperImage a = extract_hyper_image(img, stage1, p1, prof, 2);
    HyperImage b = extract_hyper_image(img, stage1, p1, prof, 1);
    CHECK(a.grid.shape == std::vector<std::size_t>{3, 3, 5});
    CHECK(a.grid.data == b.grid.data);
    for (double v : a.grid.data) CHECK(v >= 0.0);

    // perturbing one non-overlapping cell changes exactly that slice
    Image poked = img;
    for (std::size_t y = 8; y < 16; ++y)
        for (std::size_t x = 8; x < 16; ++x) poked.at(y, x) = 1.0 - poked.at(y, x);
    HyperImage c = extract_hyper_image(poked, stage1, p1, prof, 2);
    for (std::size_t cell = 0; cell < 9; ++cell) {
        bool changed = false;
        for (std::size_t k = 0; k < 5; ++k)
            if (a.grid[cell * 5 + k] != c.grid[cell * 5 + k]) changed = true;
        CHECK(changed == (cell == 4));
    }
}

TEST_CASE("patch-average prediction ignores patch positions") {
    NetworkSpec s1;
    s1.input_shape = {8, 8, 1};
    s1.layers = {{Dense{6, Activation::tanh}, "", ""}, {Dense{1, Activation::linear}, "", ""}};
    s1.loss = {LossKind::mae, 3.0};
    Network stage1(s1);
    ModelParams p1 = stage1.init_params(71);

    DatasetProfile prof;
    prof.max_h = prof.max_w = 24;
    prof.patch = 8;
    prof.grid_y = prof.grid_x = 3;  // non-overlapping partition

    auto with_block_at = [](std::size_t cy, std::size_t cx) {
        Image img(24, 24, 1, 0.25);
        for (std::size_t y = 0; y < 8; ++y)
            for (std::size_t x = 0; x < 8; ++x)
                img.at(cy * 8 + y, cx * 8 + x) = ((y + x) % 2 == 0) ? 0.9 : 0.1;
        return img;
    };

    const double pa = predict_patch_average(with_block_at(0, 0), stage1, p1, prof, 2);
    const double pb = predict_patch_average(with_block_at(2, 1), stage1, p1, prof, 2);
    CHECK(std::abs(pa - pb) < 1e-9);  // identical patch multisets, permuted

    // constant image: the average equals the single-patch prediction
    Image flat(24, 24, 1, 0.5);
    const double avg = predict_patch_average(flat, stage1, p1, prof, 1);
    Image one(8, 8, 1, 0.5);
    ForwardTrace t = stage1.forward(p1, patch_input(one, prof), RunMode::infer);
    CHECK(avg == doctest::Approx(stage1.output(t)[0]).epsilon(1e-12));
}

TEST_CASE("stage-2 recovers a linear functional of a hyper channel") {
    NetworkSpec s2;
    s2.input_shape = {3, 3, 4};
    s2.layers = {{Dense{10, Activation::relu}, "", ""}, {Dense{1, Activation::linear}, "", ""}};
    s2.loss = {LossKind::mae, 3.0};
    Network net(s2);

    auto make = [](std::size_t n, std::uint64_t seed) {
        SampleSet set;
        Rng rng(seed);
        for (std::size_t i = 0; i < n; ++i) {
            Sample s;
            s.input = RealTensor({3, 3, 4});
            for (double& v : s.input.data) v = rng.uniform01();
            double mean = 0.0;
            for (std::size_t k = 0; k < 9; ++k) mean += s.input[k * 4 + 1];  // channel 1
            s.target = RealTensor({1});
            s.target[0] = mean / 9.0;
            set.push_back(std::move(s));
        }
        return set;
    };

    TrainConfig cfg = quick_config(81);
    cfg.epochs = 60;
    cfg.patience = 30;
    cfg.lr = 0.02;
    TrainResult r = train_supervised(net, make(200, 91), make(40, 92), cfg);
    CHECK(r.report.best_val_loss < 0.05);
}
