#include "hyperimage/registry.hpp"

#include <map>
#include <stdexcept>

namespace hyperimage {

namespace {

LayerSpec conv(std::size_t n, std::size_t r = 3, std::size_t s = 1, std::string name = "",
               std::string from = "") {
    return {ConvSame{n, r, s}, std::move(name), std::move(from)};
}
LayerSpec mp(std::size_t n) { return {MaxPool{n, n}, "", ""}; }
LayerSpec maxpool(std::size_t size, std::size_t stride, std::string name, std::string from) {
    return {MaxPool{size, stride}, std::move(name), std::move(from)};
}
LayerSpec minpool(std::size_t size, std::size_t stride, std::string name, std::string from) {
    return {MinPool{size, stride}, std::move(name), std::move(from)};
}
LayerSpec fc(std::size_t n, Activation a = Activation::relu) { return {Dense{n, a}, "", ""}; }
LayerSpec drop(double rate) { return {Dropout{rate}, "", ""}; }
LayerSpec cat(std::vector<std::string> inputs) { return {Concat{std::move(inputs)}, "", ""}; }

// conv blocks followed by dropout-regularized dense head, the shape shared by
// every chain architecture here
NetworkSpec chain(std::vector<std::size_t> input, std::vector<LayerSpec> layers, LossSpec loss) {
    NetworkSpec s;
    s.input_shape = std::move(input);
    s.layers = std::move(layers);
    s.loss = loss;
    return s;
}

// Dual-pooling patch network: one wide convolution whose response map is
// reduced by parallel max- and min-pooling branches, concatenated into the
// dense head.
NetworkSpec dual_pool_stage1(std::size_t channels, std::size_t filters, std::size_t width) {
    NetworkSpec s;
    s.input_shape = {32, 32, channels};
    s.layers = {
        conv(filters, 7, 1, "conv1"),
        maxpool(26, 26, "maxp", "conv1"),
        minpool(26, 26, "minp", "conv1"),
        cat({"maxp", "minp"}),
        fc(width),
        fc(width),
        fc(1, Activation::linear),
    };
    s.loss = {LossKind::mae, 3.0};
    return s;
}

// Pure weight transforms, d = w2' relu(w1' (C1 - C2)): bias-free so identical
// channel inputs give exactly zero distance.
NetworkSpec rank_head(std::size_t width) {
    NetworkSpec s;
    s.input_shape = {width};
    s.layers = {{Dense{width, Activation::relu, false}, "", ""},
                {Dense{1, Activation::linear, false}, "", ""}};
    s.loss = {LossKind::pairwise_rank, 3.0};
    return s;
}

std::map<std::string, NetworkSpec> build_registry() {
    std::map<std::string, NetworkSpec> reg;
    const LossSpec mae{LossKind::mae, 3.0};
    const LossSpec bce{LossKind::bce, 3.0};
    const LossSpec rank{LossKind::pairwise_rank, 3.0};

    // ---- synthetic benchmark ----
    reg["synthetic-stage-1"] = chain(
        {32, 32, 1},
        {conv(16), mp(2), conv(32), mp(2), conv(48), conv(48), mp(2), conv(64), conv(64), mp(2),
         conv(128), conv(128), mp(2), fc(400), drop(0.5), fc(400), drop(0.5), fc(1, Activation::linear)},
        mae);
    reg["synthetic-stage-2"] = chain(
        {10, 10, 400},
        {conv(16), conv(16), mp(2), conv(32), conv(32), mp(2), conv(64), conv(64), mp(2), fc(400),
         drop(0.5), fc(400, Activation::tanh), drop(0.5), fc(1, Activation::linear)},
        mae);

    // ---- image quality ----
    reg["live-stage-1"] = dual_pool_stage1(1, 50, 800);
    reg["tid-stage-1"] = dual_pool_stage1(3, 50, 800);
    reg["live-stage-2"] = chain(
        {24, 23, 800},
        {conv(32), conv(32), mp(2), conv(48), conv(48), mp(2), conv(64), conv(64), mp(2), conv(128),
         conv(128), mp(2), fc(500), drop(0.5), fc(500, Activation::tanh), drop(0.5),
         fc(1, Activation::linear)},
        mae);
    reg["tid-stage-2"] = chain(
        {23, 31, 800},
        {conv(64), conv(64), mp(2), conv(64), conv(64), mp(2), conv(128), conv(128), mp(2), conv(128),
         conv(128), mp(2), fc(500), drop(0.5), fc(500, Activation::tanh), drop(0.5),
         fc(1, Activation::linear)},
        mae);
    reg["tid-e2e-shallow"] = chain(
        {384, 512, 3},
        {conv(32, 7, 2), mp(2), conv(64, 7, 1), mp(2), conv(128), mp(2), conv(128), mp(2), conv(256),
         conv(256), mp(2), fc(400), drop(0.25), fc(400, Activation::tanh), drop(0.25),
         fc(1, Activation::linear)},
        mae);
    reg["tid-e2e-deep"] = chain(
        {384, 512, 3},
        {conv(32), mp(2), conv(64), mp(2), conv(128), mp(2), conv(128), mp(2), conv(256), conv(256),
         mp(2), conv(256), conv(256), mp(2), conv(512), conv(512), mp(2), conv(512), conv(512), mp(2),
         fc(400), drop(0.25), fc(400, Activation::tanh), drop(0.25), fc(1, Activation::linear)},
        mae);

    // ---- forgery ----
    reg["forgery-channel"] = chain(
        {64, 64, 3},
        {conv(64), conv(64), mp(2), conv(128), conv(128), mp(2), conv(128), conv(128), mp(2),
         conv(256), conv(256), mp(2), fc(500), drop(0.5), fc(500), drop(0.5)},
        rank);
    reg["forgery-rank-head"] = rank_head(500);
    reg["forgery-stage-2"] = chain(
        {15, 15, 500},
        {conv(64), conv(64), conv(64), mp(2), conv(128), conv(128), conv(128), mp(2), conv(256),
         conv(256), conv(256), mp(2), fc(800), drop(0.5), fc(800), drop(0.5),
         fc(1, Activation::sigmoid)},
        bce);
    reg["forgery-e2e"] = chain(
        {256, 384, 3},
        {conv(32), mp(2), conv(64), mp(2), conv(64), conv(64), mp(2), conv(128), conv(128), mp(2),
         conv(128), conv(128), mp(2), conv(256), conv(256), mp(2), fc(500), drop(0.5), fc(500),
         drop(0.5), fc(1, Activation::sigmoid)},
        bce);

    // ---- desk variants: filter counts halved twice ----
    reg["desk-synthetic-stage-1"] = chain(
        {32, 32, 1},
        {conv(4), mp(2), conv(8), mp(2), conv(12), conv(12), mp(2), conv(16), conv(16), mp(2),
         conv(32), conv(32), mp(2), fc(100), drop(0.5), fc(100), drop(0.5), fc(1, Activation::linear)},
        mae);
    reg["desk-synthetic-stage-2"] = chain(
        {10, 10, 100},
        {conv(4), conv(4), mp(2), conv(8), conv(8), mp(2), conv(16), conv(16), mp(2), fc(100),
         drop(0.5), fc(100, Activation::tanh), drop(0.5), fc(1, Activation::linear)},
        mae);
    reg["desk-iqa-stage-1"] = dual_pool_stage1(3, 12, 200);
    // 4x4 feature grids leave room for only two pooling stages, so the desk
    // second stage is a truncated cousin of the paper-scale stack.
    reg["desk-iqa-stage-2"] = chain(
        {4, 4, 200},
        {conv(16), conv(16), mp(2), conv(32), conv(32), mp(2), fc(125), drop(0.5),
         fc(125, Activation::tanh), drop(0.5), fc(1, Activation::linear)},
        mae);
    reg["desk-forgery-channel"] = chain(
        {32, 32, 3},
        {conv(16), conv(16), mp(2), conv(32), conv(32), mp(2), conv(32), conv(32), mp(2), conv(64),
         conv(64), mp(2), fc(125), drop(0.5), fc(125), drop(0.5)},
        rank);
    reg["desk-forgery-rank-head"] = rank_head(125);
    reg["desk-forgery-stage-2"] = chain(
        {8, 8, 125},
        {conv(16), conv(16), conv(16), mp(2), conv(32), conv(32), conv(32), mp(2), conv(64), conv(64),
         conv(64), mp(2), fc(200), drop(0.5), fc(200), drop(0.5), fc(1, Activation::sigmoid)},
        bce);
    reg["desk-forgery-e2e"] = chain(
        {128, 192, 3},
        {conv(8), mp(2), conv(16), mp(2), conv(16), conv(16), mp(2), conv(32), conv(32), mp(2),
         conv(32), conv(32), mp(2), conv(64), conv(64), mp(2), fc(125), drop(0.5), fc(125), drop(0.5),
         fc(1, Activation::sigmoid)},
        bce);
    reg["desk-synth-e2e"] = chain(
        {128, 128, 1},
        {conv(8, 7, 2), mp(2), conv(16, 7, 1), mp(2), conv(32), mp(2), conv(32), mp(2), conv(64),
         conv(64), mp(2), fc(100), drop(0.25), fc(100, Activation::tanh), drop(0.25),
         fc(1, Activation::linear)},
        mae);

    return reg;
}

const std::map<std::string, NetworkSpec>& registry() {
    static const std::map<std::string, NetworkSpec> reg = build_registry();
    return reg;
}

}  // namespace

const NetworkSpec& spec_by_name(const std::string& name) {
    const auto& reg = registry();
    auto it = reg.find(name);
    if (it == reg.end()) throw std::runtime_error("unknown network spec '" + name + "'");
    return it->second;
}

bool spec_registered(const std::string& name) { return registry().count(name) != 0; }

std::vector<std::string> registered_spec_names() {
    std::vector<std::string> names;
    for (const auto& [k, v] : registry()) names.push_back(k);
    return names;
}

}  // namespace hyperimage
