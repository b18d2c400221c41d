#include "fedsim/aggregation.hpp"

#include <algorithm>

namespace fedsim::agg {

namespace {

// out[k] = sum_j w_j * x_j[k], summed in the given (client-id) order.
// Both averaging modes go through this one accumulation so that equal
// weights reproduce the uniform result bit for bit.
void weighted_accumulate(const std::vector<const Tensor*>& xs, const std::vector<double>& ws,
                         Tensor& out) {
    std::fill(out.v.begin(), out.v.end(), 0.0);
    for (std::size_t j = 0; j < xs.size(); ++j) {
        const double w = ws[j];
        const double* src = xs[j]->data();
        for (std::size_t k = 0; k < out.numel(); ++k) out.v[k] += w * src[k];
    }
}

void aggregate_position(const std::vector<int>& contributors, std::size_t layer,
                        const ParamsByClient& params, const std::vector<double>& ws,
                        std::map<int, nn::ParameterSet>& result) {
    const nn::LayerParams& first = params.at(contributors.front())->layers[layer];
    if (first.empty()) return;  // relu/pool/flatten: nothing to average

    std::vector<const Tensor*> weights, biases;
    weights.reserve(contributors.size());
    biases.reserve(contributors.size());
    for (int id : contributors) {
        const nn::LayerParams& lp = params.at(id)->layers[layer];
        if (!lp.weight.same_shape(first.weight) || !lp.bias.same_shape(first.bias)) {
            throw DimensionError("aggregate: shape mismatch inside a cluster at layer " +
                                 std::to_string(layer));
        }
        weights.push_back(&lp.weight);
        biases.push_back(&lp.bias);
    }

    Tensor w_mean = Tensor::zeros(first.weight.shape);
    Tensor b_mean = Tensor::zeros(first.bias.shape);
    weighted_accumulate(weights, ws, w_mean);
    weighted_accumulate(biases, ws, b_mean);
    for (int id : contributors) {
        result.at(id).layers[layer].weight = w_mean;
        result.at(id).layers[layer].bias = b_mean;
    }
}

std::map<int, nn::ParameterSet> copy_members(const zoo::CommonLayerSet& cluster,
                                             const ParamsByClient& params) {
    std::map<int, nn::ParameterSet> result;
    for (int id : cluster.members) result.emplace(id, *params.at(id));
    return result;
}

}  // namespace

std::map<int, nn::ParameterSet> aggregate_uniform(const zoo::CommonLayerSet& cluster,
                                                  const ParamsByClient& params) {
    std::map<int, nn::ParameterSet> result = copy_members(cluster, params);
    for (const auto& g : cluster.groups) {
        const std::vector<double> ws(g.contributors.size(),
                                     1.0 / static_cast<double>(g.contributors.size()));
        aggregate_position(g.contributors, g.layer_index, params, ws, result);
    }
    return result;
}

std::map<int, nn::ParameterSet> aggregate_entropy(const zoo::CommonLayerSet& cluster,
                                                  const ParamsByClient& params,
                                                  const data::EntropyWeights& weights,
                                                  bool literal_scale) {
    for (int id : cluster.members) {
        if (static_cast<std::size_t>(id) >= weights.normalized.size()) {
            throw InputError("aggregate_entropy: missing weight for client " + std::to_string(id));
        }
    }
    std::map<int, nn::ParameterSet> result = copy_members(cluster, params);

    for (const auto& g : cluster.groups) {
        const std::size_t c = g.contributors.size();
        std::vector<double> ws(c);
        if (literal_scale) {
            // Uniform mean; recipients scale it by their own global weight below.
            std::fill(ws.begin(), ws.end(), 1.0 / static_cast<double>(c));
        } else {
            double sum = 0.0;
            bool all_equal = true;
            for (std::size_t j = 0; j < c; ++j) {
                ws[j] = weights.normalized[static_cast<std::size_t>(g.contributors[j])];
                sum += ws[j];
                all_equal = all_equal && ws[j] == ws.front();
            }
            if (sum == 0.0 || all_equal) {
                std::fill(ws.begin(), ws.end(), 1.0 / static_cast<double>(c));
            } else {
                for (double& w : ws) w /= sum;
            }
        }
        aggregate_position(g.contributors, g.layer_index, params, ws, result);

        if (literal_scale) {
            for (int id : g.contributors) {
                const double e = weights.normalized[static_cast<std::size_t>(id)];
                nn::LayerParams& lp = result.at(id).layers[g.layer_index];
                for (double& x : lp.weight.v) x *= e;
                for (double& x : lp.bias.v) x *= e;
            }
        }
    }
    return result;
}

std::vector<ArchGroup> group_by_architecture(
    const std::vector<std::pair<int, const ModelArchitecture*>>& models) {
    std::map<std::string, ArchGroup> by_sig;
    for (const auto& [id, arch] : models) by_sig[arch->signature()].members.push_back(id);
    std::vector<ArchGroup> groups;
    groups.reserve(by_sig.size());
    for (auto& [sig, g] : by_sig) {
        (void)sig;
        std::sort(g.members.begin(), g.members.end());
        groups.push_back(std::move(g));
    }
    return groups;
}

std::map<int, nn::ParameterSet> fedavg_aggregate(const std::vector<ArchGroup>& groups,
                                                 const ParamsByClient& params) {
    std::map<int, nn::ParameterSet> result;
    for (const ArchGroup& g : groups) {
        const nn::ParameterSet& first = *params.at(g.members.front());
        nn::ParameterSet mean;
        mean.layers.resize(first.layers.size());
        const std::vector<double> ws(g.members.size(), 1.0 / static_cast<double>(g.members.size()));
        for (std::size_t layer = 0; layer < first.layers.size(); ++layer) {
            if (first.layers[layer].empty()) continue;
            std::vector<const Tensor*> weights, biases;
            for (int id : g.members) {
                weights.push_back(&params.at(id)->layers[layer].weight);
                biases.push_back(&params.at(id)->layers[layer].bias);
            }
            mean.layers[layer].weight = Tensor::zeros(first.layers[layer].weight.shape);
            mean.layers[layer].bias = Tensor::zeros(first.layers[layer].bias.shape);
            weighted_accumulate(weights, ws, mean.layers[layer].weight);
            weighted_accumulate(biases, ws, mean.layers[layer].bias);
        }
        for (int id : g.members) result.emplace(id, mean);
    }
    return result;
}

}  // namespace fedsim::agg
