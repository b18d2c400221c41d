#pragma once

#include <map>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/model_zoo.hpp"
#include "fedsim/nn.hpp"

namespace fedsim::agg {

using ParamsByClient = std::map<int, const nn::ParameterSet*>;

// Per-position uniform averaging: each contributor of a common position
// receives the mean of the contributors' layer parameters; everything
// outside the common set stays untouched (personalized).
std::map<int, nn::ParameterSet> aggregate_uniform(const zoo::CommonLayerSet& cluster,
                                                  const ParamsByClient& params);

// Entropy-weighted averaging. Client weights are renormalized over each
// position's contributors so they sum to 1 there; equal weights reduce to
// the uniform average exactly. `literal_scale` instead multiplies the
// uniform mean by the recipient's own global weight (norm-shrinking study
// mode, off by default).
std::map<int, nn::ParameterSet> aggregate_entropy(const zoo::CommonLayerSet& cluster,
                                                  const ParamsByClient& params,
                                                  const data::EntropyWeights& weights,
                                                  bool literal_scale = false);

// Plain whole-model averaging inside groups of architecture-identical
// clients; every group member receives the same model.
struct ArchGroup {
    std::vector<int> members;  // sorted client ids
};
std::vector<ArchGroup> group_by_architecture(
    const std::vector<std::pair<int, const ModelArchitecture*>>& models);
std::map<int, nn::ParameterSet> fedavg_aggregate(const std::vector<ArchGroup>& groups,
                                                 const ParamsByClient& params);

}  // namespace fedsim::agg
