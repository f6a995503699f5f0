#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "hyperimage/rng.hpp"
#include "hyperimage/tensor.hpp"

namespace hyperimage {

// ---------------------------------------------------------------------------
// Layer vocabulary
// ---------------------------------------------------------------------------

enum class Activation { relu, tanh, sigmoid, linear };

// "same" convolution: output spatial extent = ceil(input / stride), zero
// padding split symmetrically with the extra pixel on the bottom/right.
// The layer is purely linear; nonlinearities come from pooling and from
// dense-layer activations.
struct ConvSame {
    std::size_t filters = 0;
    std::size_t kernel = 3;
    std::size_t stride = 1;
};

struct MaxPool {
    std::size_t size = 2;
    std::size_t stride = 2;
};

// Window-wise minimum, the dual of max-pooling.
struct MinPool {
    std::size_t size = 2;
    std::size_t stride = 2;
};

struct Dense {
    std::size_t units = 0;
    Activation act = Activation::relu;
    bool use_bias = true;  // ranking heads are pure weight transforms
};

// Inverted dropout: in train mode survivors are scaled by 1/(1-rate) so the
// expected pre-activation is preserved; identity in inference mode.
struct Dropout {
    double rate = 0.5;
};

// Concatenation along the last axis of the named producer layers.
struct Concat {
    std::vector<std::string> inputs;
};

struct LayerSpec {
    std::variant<ConvSame, MaxPool, MinPool, Dense, Dropout, Concat> op;
    std::string name;   // optional tag other layers can reference
    std::string input;  // producer tag; empty means the preceding layer
};

enum class LossKind { mae, bce, pairwise_rank };

struct LossSpec {
    LossKind kind = LossKind::mae;
    double margin = 3.0;  // pairwise_rank hinge margin
};

struct NetworkSpec {
    std::vector<std::size_t> input_shape;
    std::vector<LayerSpec> layers;
    LossSpec loss;
};

std::string spec_to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(const std::string& text);

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

struct LayerParams {
    RealTensor weights;  // conv: [filters, k, k, in_c]; dense: [in, units]
    RealTensor bias;     // [filters] or [units]
    bool present = false;
};

struct ModelParams {
    std::vector<LayerParams> layers;
};

std::size_t param_count(const ModelParams& p);
// acc += s * g, elementwise over all present layers
void axpy(ModelParams& acc, const ModelParams& g, double s);
void scale_params(ModelParams& p, double s);

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

enum class RunMode { train, infer };

// Per-layer forward results plus what backward needs (dropout scale masks,
// pooling extremum positions).
struct ForwardTrace {
    RealTensor input;
    std::vector<RealTensor> outputs;
    std::vector<std::vector<std::size_t>> pool_arg;  // flat input index per pooled element
    std::vector<RealTensor> dropout_mask;
    RunMode mode = RunMode::infer;
};

struct BackwardResult {
    ModelParams grads;
    RealTensor input_grad;
};

// A compiled network: spec plus resolved wiring and per-layer output shapes.
// Construction validates shape propagation and reports the first offending
// layer on failure.
class Network {
  public:
    explicit Network(NetworkSpec spec);

    const NetworkSpec& spec() const { return spec_; }
    std::size_t layer_count() const { return spec_.layers.size(); }
    const std::vector<std::size_t>& layer_shape(std::size_t i) const { return shapes_[i]; }
    const std::vector<std::size_t>& output_shape() const { return shapes_.back(); }

    // Weights drawn uniformly in +-sqrt(6/(fan_in+fan_out)), biases zero.
    // Identical seeds give bit-identical parameters.
    ModelParams init_params(std::uint64_t seed) const;

    // rng is consumed only by dropout in train mode and may be null in
    // inference mode. Non-finite activations abort with the layer index.
    ForwardTrace forward(const ModelParams& params, const RealTensor& input, RunMode mode,
                         Rng* rng = nullptr) const;

    const RealTensor& output(const ForwardTrace& t) const { return t.outputs.back(); }

    // Reverse-mode gradients from a train-mode trace. Min/max pooling routes
    // gradient to the first extremum in row-major window order.
    BackwardResult backward(const ModelParams& params, const ForwardTrace& trace,
                            const RealTensor& loss_grad) const;

    // Activation of the last-but-one layer in inference mode, with ReLU
    // applied on top regardless of that layer's own activation. Flattened.
    RealTensor penultimate_features(const ModelParams& params, const RealTensor& input) const;
    std::size_t penultimate_dim() const;

  private:
    NetworkSpec spec_;
    std::vector<std::vector<std::size_t>> shapes_;   // output shape per layer
    std::vector<std::vector<int>> producers_;        // -1 denotes the network input
};

// loss value and gradient with respect to the prediction
struct LossValue {
    double value = 0.0;
    RealTensor grad;
};

// pairwise_rank expects prediction = d(C1,C2) and target y in {-1,+1} and
// returns max(0, margin - y*d). bce clamps probabilities to
// [1e-7, 1 - 1e-7] before the logs.
LossValue compute_loss(const LossSpec& loss, const RealTensor& prediction, const RealTensor& target);

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

// SGD with Nesterov momentum in the look-ahead form
//   v <- mu*v - lr*g,  theta <- theta + mu*v - lr*g
// and learning rate base/(1 + decay*t), divided by plateau_factor once per
// triggered plateau.
struct OptimizerState {
    double base_lr = 0.005;
    double decay = 1e-5;
    double momentum = 0.9;
    int plateau_patience = 10;
    double plateau_factor = 10.0;
    std::uint64_t update_count = 0;
    double plateau_divisor = 1.0;
    ModelParams velocity;

    double effective_lr() const {
        return base_lr / ((1.0 + decay * static_cast<double>(update_count)) * plateau_divisor);
    }
    void trigger_plateau() { plateau_divisor *= plateau_factor; }
};

OptimizerState make_optimizer(const ModelParams& params, double base_lr = 0.005,
                              double decay = 1e-5, double momentum = 0.9,
                              int plateau_patience = 10, double plateau_factor = 10.0);

// One Nesterov step; aborts on non-finite gradients.
void sgd_update(ModelParams& params, const ModelParams& grads, OptimizerState& state);

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

struct GradCheckLayer {
    std::size_t layer = 0;
    double max_rel_err = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckLayer> per_layer;
    double max_rel_err = 0.0;
    bool pass = false;
};

// Compares analytic parameter gradients against central finite differences
// (step 1e-4) of the spec's loss on seeded random input/target. Specs are
// limited to 1e4 parameters to keep the sweep tractable.
GradCheckReport gradient_check(const NetworkSpec& spec, std::uint64_t seed, double tolerance);

}  // namespace hyperimage
