#include "fedsim/alignment.hpp"

#include <algorithm>
#include <numeric>

namespace fedsim::align {

double AlignmentReport::total_pre() const {
    double s = 0.0;
    for (const auto& r : rows) s += r.loss_pre;
    return s;
}

double AlignmentReport::total_post() const {
    double s = 0.0;
    for (const auto& r : rows) s += r.loss_post;
    return s;
}

namespace {

Tensor capped_inputs(const ModelArchitecture& arch, const data::ClientDataset& shard,
                     std::size_t sample_cap) {
    if (shard.train.size() == 0) throw InputError("alignment: empty client shard");
    std::size_t n = shard.train.size();
    if (sample_cap > 0) n = std::min(n, sample_cap);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Tensor batch = data::gather(shard.train, idx).first;
    if (batch.shape[1] != arch.in_c || batch.shape[2] != arch.in_h || batch.shape[3] != arch.in_w) {
        throw DimensionError("alignment: shard images do not match architecture input");
    }
    return batch;
}

nn::FeatureMatrix to_target(std::size_t layer_index, const Tensor& act) {
    const std::size_t n = act.shape[0];
    const std::size_t d = act.numel() / n;
    nn::FeatureMatrix fm;
    fm.layer_index = layer_index;
    fm.rows = d;
    fm.cols = n;
    fm.values.resize(d * n);
    for (std::size_t s = 0; s < n; ++s) {
        const double* row = act.data() + s * d;
        for (std::size_t i = 0; i < d; ++i) fm.values[i * n + s] = row[i];
    }
    return fm;
}

void check_prefix(const std::vector<std::size_t>& common_indices) {
    for (std::size_t i = 0; i < common_indices.size(); ++i) {
        if (common_indices[i] != i) {
            throw InputError("alignment: common indices must form a layer prefix");
        }
    }
}

}  // namespace

std::map<std::size_t, nn::FeatureMatrix> capture_targets(
    const ModelArchitecture& arch, const nn::ParameterSet& old_model,
    const data::ClientDataset& shard, const std::vector<std::size_t>& common_indices,
    std::size_t sample_cap) {
    Tensor act = capped_inputs(arch, shard, sample_cap);
    std::map<std::size_t, nn::FeatureMatrix> targets;
    if (common_indices.empty()) return targets;
    const std::size_t last = *std::max_element(common_indices.begin(), common_indices.end());
    for (std::size_t j = 0; j <= last; ++j) {
        act = nn::apply_layer(arch.layers[j], old_model.layers[j], act);
        if (std::find(common_indices.begin(), common_indices.end(), j) != common_indices.end()) {
            targets.emplace(j, to_target(j, act));
        }
    }
    return targets;
}

namespace {

nn::LayerParams stepped(const nn::LayerParams& params, const nn::LayerLossGrad& g, double t) {
    nn::LayerParams out = params;
    for (std::size_t k = 0; k < out.weight.numel(); ++k) out.weight.v[k] -= t * g.dweight.v[k];
    for (std::size_t k = 0; k < out.bias.numel(); ++k) out.bias.v[k] -= t * g.dbias.v[k];
    return out;
}

}  // namespace

LayerReportRow align_layer_at(const LayerSpec& spec, nn::LayerParams& params,
                              const Tensor& layer_input, std::size_t layer_index,
                              const nn::FeatureMatrix& target, const AlignmentConfig& cfg) {
    LayerReportRow row;
    row.layer_index = layer_index;
    row.loss_pre = nn::feature_loss(spec, params, layer_input, target);
    row.loss_post = row.loss_pre;
    if (!spec.has_params() || cfg.steps_per_layer <= 0) return row;

    double cur = row.loss_pre;
    for (int step = 0; step < cfg.steps_per_layer; ++step) {
        nn::LayerLossGrad g = nn::feature_loss_grad(spec, params, layer_input, target);
        double gnorm2 = 0.0;
        for (double x : g.dweight.v) gnorm2 += x * x;
        for (double x : g.dbias.v) gnorm2 += x * x;
        if (gnorm2 == 0.0) break;  // already at the target; keep params bitwise intact

        // The layer op is linear in its own parameters, so the loss along
        // the gradient ray is an exact quadratic: phi(t) = cur - gnorm2*t + a*t^2.
        // One probe at t1 fixes `a`, giving the exact minimizing step.
        const double t1 = cfg.align_lr;
        const double phi1 = nn::feature_loss(spec, stepped(params, g, t1), layer_input, target);
        const double a = (phi1 - cur + gnorm2 * t1) / (t1 * t1);
        double t = a > 0.0 ? gnorm2 / (2.0 * a) : t1;

        bool accepted = false;
        for (int halving = 0; halving <= 10; ++halving) {
            nn::LayerParams candidate = stepped(params, g, t);
            double next = nn::feature_loss(spec, candidate, layer_input, target);
            if (next <= cur) {
                params = std::move(candidate);
                cur = next;
                row.steps++;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) break;  // even the smallest step increases the loss
    }
    row.loss_post = cur;
    return row;
}

LayerReportRow align_layer(const ModelArchitecture& arch, nn::ParameterSet& model,
                           const data::ClientDataset& shard, std::size_t layer,
                           const nn::FeatureMatrix& target, const AlignmentConfig& cfg) {
    Tensor act = capped_inputs(arch, shard, cfg.sample_cap);
    for (std::size_t j = 0; j < layer; ++j) {
        act = nn::apply_layer(arch.layers[j], model.layers[j], act);
    }
    return align_layer_at(arch.layers[layer], model.layers[layer], act, layer, target, cfg);
}

std::pair<nn::ParameterSet, AlignmentReport> progressive_align(
    const ModelArchitecture& arch, nn::ParameterSet new_model, const nn::ParameterSet& old_model,
    const data::ClientDataset& shard, const std::vector<std::size_t>& common_indices,
    const AlignmentConfig& cfg) {
    AlignmentReport report;
    if (common_indices.empty()) return {std::move(new_model), report};
    check_prefix(common_indices);

    Tensor inputs = capped_inputs(arch, shard, cfg.sample_cap);
    Tensor old_act = inputs;
    Tensor new_act = std::move(inputs);
    for (std::size_t j : common_indices) {
        old_act = nn::apply_layer(arch.layers[j], old_model.layers[j], old_act);
        nn::FeatureMatrix target = to_target(j, old_act);
        report.rows.push_back(
            align_layer_at(arch.layers[j], new_model.layers[j], new_act, j, target, cfg));
        new_act = nn::apply_layer(arch.layers[j], new_model.layers[j], new_act);
    }
    return {std::move(new_model), report};
}

}  // namespace fedsim::align
