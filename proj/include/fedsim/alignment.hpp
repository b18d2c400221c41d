#pragma once

#include <map>
#include <utility>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/nn.hpp"

namespace fedsim::align {

struct AlignmentConfig {
    int steps_per_layer = 5;   // 0 disables alignment entirely
    double align_lr = 0.01;
    std::size_t sample_cap = 512;
};

struct LayerReportRow {
    std::size_t layer_index = 0;
    double loss_pre = 0.0;
    double loss_post = 0.0;
    int steps = 0;
};

struct AlignmentReport {
    std::vector<LayerReportRow> rows;  // ascending layer order
    double total_pre() const;
    double total_post() const;
};

// Feature targets H^(l) of the client's previous model over the first
// min(sample_cap, N) train samples, for every common layer.
std::map<std::size_t, nn::FeatureMatrix> capture_targets(
    const ModelArchitecture& arch, const nn::ParameterSet& old_model,
    const data::ClientDataset& shard, const std::vector<std::size_t>& common_indices,
    std::size_t sample_cap);

// Gradient-descends one layer's parameters toward the feature target,
// holding every other layer fixed. The learning rate is halved (up to 10
// times) whenever a step would increase the loss, so loss_post <= loss_pre
// always holds. `layer_input` is the activation feeding the layer.
LayerReportRow align_layer_at(const LayerSpec& spec, nn::LayerParams& params,
                              const Tensor& layer_input, std::size_t layer_index,
                              const nn::FeatureMatrix& target, const AlignmentConfig& cfg);

// Convenience form matching the per-operation contract: recomputes the
// prefix activation from the shard before descending.
LayerReportRow align_layer(const ModelArchitecture& arch, nn::ParameterSet& model,
                           const data::ClientDataset& shard, std::size_t layer,
                           const nn::FeatureMatrix& target, const AlignmentConfig& cfg);

// Aligns common layers in ascending order; the features feeding layer j
// come from already-aligned layers < j. Targets are streamed from
// old_model layer by layer, so nothing larger than two activation buffers
// is ever held.
std::pair<nn::ParameterSet, AlignmentReport> progressive_align(
    const ModelArchitecture& arch, nn::ParameterSet new_model, const nn::ParameterSet& old_model,
    const data::ClientDataset& shard, const std::vector<std::size_t>& common_indices,
    const AlignmentConfig& cfg);

}  // namespace fedsim::align
