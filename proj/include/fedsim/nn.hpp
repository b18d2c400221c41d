#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "fedsim/arch.hpp"
#include "fedsim/tensor.hpp"

namespace fedsim::nn {

// Parameters of one layer; both tensors are empty for parameter-free
// layers (relu, maxpool, flatten).
struct LayerParams {
    Tensor weight;
    Tensor bias;
    bool empty() const { return weight.empty() && bias.empty(); }
};

// All parameters of one model, aligned index-by-index with the
// architecture's layer list.
struct ParameterSet {
    std::vector<LayerParams> layers;
};

struct SgdConfig {
    double learning_rate = 0.01;
    double momentum = 0.9;
    double weight_decay = 5e-4;
};

struct OptimizerState {
    std::vector<LayerParams> velocity;
};

// Column n holds the flattened post-activation feature vector of sample n.
struct FeatureMatrix {
    std::size_t layer_index = 0;
    std::size_t rows = 0;  // feature dimension d_l
    std::size_t cols = 0;  // sample count
    std::vector<double> values;  // row-major rows x cols

    double at(std::size_t d, std::size_t n) const { return values[d * cols + n]; }
};

struct ForwardResult {
    Tensor logits;
    std::map<std::size_t, FeatureMatrix> features;
};

struct TaskGradients {
    std::vector<LayerParams> layers;
    double loss = 0.0;
};

struct LayerLossGrad {
    double loss = 0.0;
    Tensor dweight;
    Tensor dbias;
};

// Deterministic uniform(-s, s) init with s = sqrt(6 / (fan_in + fan_out));
// biases start at zero. The seed selects the whole stream.
ParameterSet init_params(const ModelArchitecture& arch, std::uint64_t seed);

OptimizerState make_optimizer_state(const ModelArchitecture& arch);

// Runs one layer on a batch-shaped activation.
Tensor apply_layer(const LayerSpec& spec, const LayerParams& params, const Tensor& input);

// Full forward pass. `capture` selects layer indices whose post-activation
// outputs are returned as d_l x N feature matrices.
ForwardResult forward(const ModelArchitecture& arch, const ParameterSet& params,
                      const Tensor& batch, const std::set<std::size_t>& capture = {});

double cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// Softmax cross-entropy gradients for every parameter; loss is the batch mean.
TaskGradients backward_task_loss(const ModelArchitecture& arch, const ParameterSet& params,
                                 const Tensor& batch, const std::vector<int>& labels);

// velocity = momentum*velocity + grad + weight_decay*param; param -= lr*velocity.
void sgd_step(ParameterSet& params, const TaskGradients& grads, OptimizerState& state,
              const SgdConfig& cfg);

// Mean-over-samples squared-L2 distance between a layer's output on
// `input` and a stored feature target, plus its gradient with respect to
// that layer's own parameters only.
double feature_loss(const LayerSpec& spec, const LayerParams& params, const Tensor& input,
                    const FeatureMatrix& target);
LayerLossGrad feature_loss_grad(const LayerSpec& spec, const LayerParams& params,
                                const Tensor& input, const FeatureMatrix& target);

}  // namespace fedsim::nn
