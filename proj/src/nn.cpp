#include "fedsim/nn.hpp"

#include <algorithm>
#include <cmath>

#include "fedsim/rng.hpp"

namespace fedsim::nn {

namespace {

std::size_t batch_size_of(const Tensor& t) {
    if (t.shape.empty() || t.shape[0] == 0) throw DimensionError("empty batch");
    return t.shape[0];
}

void dense_forward(const double* in, const double* w, const double* b, double* out,
                   std::size_t n, std::size_t in_dim, std::size_t out_dim) {
    for (std::size_t s = 0; s < n; ++s) {
        const double* row = in + s * in_dim;
        double* orow = out + s * out_dim;
        for (std::size_t o = 0; o < out_dim; ++o) {
            const double* wrow = w + o * in_dim;
            double acc = b[o];
            for (std::size_t i = 0; i < in_dim; ++i) acc += row[i] * wrow[i];
            orow[o] = acc;
        }
    }
}

// 3x3, stride 1, same padding. One (ky, output row) pair at a time so the
// x loop stays contiguous.
void conv_forward(const double* in, const double* w, const double* b, double* out,
                  std::size_t n, std::size_t ic, std::size_t oc, std::size_t h, std::size_t wd) {
    const std::size_t plane = h * wd;
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t o = 0; o < oc; ++o) {
            double* oplane = out + (s * oc + o) * plane;
            std::fill(oplane, oplane + plane, b[o]);
            for (std::size_t c = 0; c < ic; ++c) {
                const double* iplane = in + (s * ic + c) * plane;
                const double* kw = w + (o * ic + c) * 9;
                for (std::size_t y = 0; y < h; ++y) {
                    double* orow = oplane + y * wd;
                    for (std::size_t ky = 0; ky < 3; ++ky) {
                        if (y + ky == 0 || y + ky - 1 >= h) continue;
                        const double* irow = iplane + (y + ky - 1) * wd;
                        const double w0 = kw[ky * 3 + 0], w1 = kw[ky * 3 + 1], w2 = kw[ky * 3 + 2];
                        if (wd == 1) {
                            orow[0] += w1 * irow[0];
                            continue;
                        }
                        orow[0] += w1 * irow[0] + w2 * irow[1];
                        for (std::size_t x = 1; x + 1 < wd; ++x) {
                            orow[x] += w0 * irow[x - 1] + w1 * irow[x] + w2 * irow[x + 1];
                        }
                        orow[wd - 1] += w0 * irow[wd - 2] + w1 * irow[wd - 1];
                    }
                }
            }
        }
    }
}

void conv_backward_weights(const double* in, const double* dout, double* dw, double* db,
                           std::size_t n, std::size_t ic, std::size_t oc, std::size_t h,
                           std::size_t wd) {
    const std::size_t plane = h * wd;
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t o = 0; o < oc; ++o) {
            const double* dplane = dout + (s * oc + o) * plane;
            double acc_b = 0.0;
            for (std::size_t i = 0; i < plane; ++i) acc_b += dplane[i];
            db[o] += acc_b;
            for (std::size_t c = 0; c < ic; ++c) {
                const double* iplane = in + (s * ic + c) * plane;
                double* kw = dw + (o * ic + c) * 9;
                for (std::size_t ky = 0; ky < 3; ++ky) {
                    double a0 = 0.0, a1 = 0.0, a2 = 0.0;
                    for (std::size_t y = 0; y < h; ++y) {
                        if (y + ky == 0 || y + ky - 1 >= h) continue;
                        const double* irow = iplane + (y + ky - 1) * wd;
                        const double* drow = dplane + y * wd;
                        for (std::size_t x = 1; x < wd; ++x) a0 += drow[x] * irow[x - 1];
                        for (std::size_t x = 0; x < wd; ++x) a1 += drow[x] * irow[x];
                        for (std::size_t x = 0; x + 1 < wd; ++x) a2 += drow[x] * irow[x + 1];
                    }
                    kw[ky * 3 + 0] += a0;
                    kw[ky * 3 + 1] += a1;
                    kw[ky * 3 + 2] += a2;
                }
            }
        }
    }
}

// dIn = correlation of dOut with the kernel flipped in both axes.
void conv_backward_input(const double* dout, const double* w, double* din, std::size_t n,
                         std::size_t ic, std::size_t oc, std::size_t h, std::size_t wd) {
    const std::size_t plane = h * wd;
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t c = 0; c < ic; ++c) {
            double* iplane = din + (s * ic + c) * plane;
            for (std::size_t o = 0; o < oc; ++o) {
                const double* dplane = dout + (s * oc + o) * plane;
                const double* kw = w + (o * ic + c) * 9;
                for (std::size_t y = 0; y < h; ++y) {
                    double* irow = iplane + y * wd;
                    for (std::size_t ky = 0; ky < 3; ++ky) {
                        // output row that consumed input row y through tap ky
                        if (y + 1 < ky || y + 1 - ky >= h) continue;
                        const double* drow = dplane + (y + 1 - ky) * wd;
                        const double w0 = kw[ky * 3 + 2], w1 = kw[ky * 3 + 1], w2 = kw[ky * 3 + 0];
                        if (wd == 1) {
                            irow[0] += w1 * drow[0];
                            continue;
                        }
                        irow[0] += w1 * drow[0] + w2 * drow[1];
                        for (std::size_t x = 1; x + 1 < wd; ++x) {
                            irow[x] += w0 * drow[x - 1] + w1 * drow[x] + w2 * drow[x + 1];
                        }
                        irow[wd - 1] += w0 * drow[wd - 2] + w1 * drow[wd - 1];
                    }
                }
            }
        }
    }
}

struct LayerBackward {
    Tensor dweight;
    Tensor dbias;
    Tensor dinput;
};

LayerBackward layer_backward(const LayerSpec& spec, const LayerParams& params, const Tensor& input,
                             const Tensor& output, const Tensor& doutput, bool need_dinput) {
    LayerBackward r;
    const std::size_t n = batch_size_of(input);
    switch (spec.kind) {
        case LayerKind::dense: {
            const std::size_t in_dim = spec.in, out_dim = spec.out;
            r.dweight = Tensor::zeros({out_dim, in_dim});
            r.dbias = Tensor::zeros({out_dim});
            for (std::size_t s = 0; s < n; ++s) {
                const double* row = input.data() + s * in_dim;
                const double* drow = doutput.data() + s * out_dim;
                for (std::size_t o = 0; o < out_dim; ++o) {
                    const double d = drow[o];
                    r.dbias.v[o] += d;
                    double* wrow = r.dweight.data() + o * in_dim;
                    for (std::size_t i = 0; i < in_dim; ++i) wrow[i] += d * row[i];
                }
            }
            if (need_dinput) {
                r.dinput = Tensor::zeros(input.shape);
                for (std::size_t s = 0; s < n; ++s) {
                    double* irow = r.dinput.data() + s * in_dim;
                    const double* drow = doutput.data() + s * out_dim;
                    for (std::size_t o = 0; o < out_dim; ++o) {
                        const double d = drow[o];
                        const double* wrow = params.weight.data() + o * in_dim;
                        for (std::size_t i = 0; i < in_dim; ++i) irow[i] += d * wrow[i];
                    }
                }
            }
            break;
        }
        case LayerKind::conv: {
            const std::size_t ic = spec.in, oc = spec.out;
            const std::size_t h = input.shape[2], w = input.shape[3];
            r.dweight = Tensor::zeros({oc, ic, 3, 3});
            r.dbias = Tensor::zeros({oc});
            conv_backward_weights(input.data(), doutput.data(), r.dweight.data(), r.dbias.data(),
                                  n, ic, oc, h, w);
            if (need_dinput) {
                r.dinput = Tensor::zeros(input.shape);
                conv_backward_input(doutput.data(), params.weight.data(), r.dinput.data(), n, ic,
                                    oc, h, w);
            }
            break;
        }
        case LayerKind::relu: {
            if (need_dinput) {
                r.dinput = Tensor::zeros(input.shape);
                for (std::size_t i = 0; i < input.numel(); ++i) {
                    r.dinput.v[i] = output.v[i] > 0.0 ? doutput.v[i] : 0.0;
                }
            }
            break;
        }
        case LayerKind::maxpool: {
            if (need_dinput) {
                r.dinput = Tensor::zeros(input.shape);
                const std::size_t c = input.shape[1], h = input.shape[2], w = input.shape[3];
                const std::size_t oh = h / 2, ow = w / 2;
                for (std::size_t s = 0; s < n; ++s) {
                    for (std::size_t ch = 0; ch < c; ++ch) {
                        const double* ip = input.data() + (s * c + ch) * h * w;
                        double* dip = r.dinput.data() + (s * c + ch) * h * w;
                        const double* dop = doutput.data() + (s * c + ch) * oh * ow;
                        for (std::size_t y = 0; y < oh; ++y) {
                            for (std::size_t x = 0; x < ow; ++x) {
                                std::size_t best = (2 * y) * w + 2 * x;
                                double bv = ip[best];
                                const std::size_t cand[3] = {(2 * y) * w + 2 * x + 1,
                                                             (2 * y + 1) * w + 2 * x,
                                                             (2 * y + 1) * w + 2 * x + 1};
                                for (std::size_t k = 0; k < 3; ++k) {
                                    if (ip[cand[k]] > bv) {
                                        bv = ip[cand[k]];
                                        best = cand[k];
                                    }
                                }
                                dip[best] += dop[y * ow + x];
                            }
                        }
                    }
                }
            }
            break;
        }
        case LayerKind::flatten: {
            if (need_dinput) r.dinput = Tensor(input.shape, doutput.v);
            break;
        }
    }
    return r;
}

}  // namespace

ParameterSet init_params(const ModelArchitecture& arch, std::uint64_t seed) {
    Rng rng(seed);
    ParameterSet ps;
    ps.layers.resize(arch.layers.size());
    for (std::size_t i = 0; i < arch.layers.size(); ++i) {
        const LayerSpec& l = arch.layers[i];
        if (l.kind == LayerKind::dense) {
            double s = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
            Tensor w = Tensor::zeros({l.out, l.in});
            for (double& x : w.v) x = rng.uniform(-s, s);
            ps.layers[i] = {std::move(w), Tensor::zeros({l.out})};
        } else if (l.kind == LayerKind::conv) {
            double s = std::sqrt(6.0 / static_cast<double>(l.in * 9 + l.out * 9));
            Tensor w = Tensor::zeros({l.out, l.in, 3, 3});
            for (double& x : w.v) x = rng.uniform(-s, s);
            ps.layers[i] = {std::move(w), Tensor::zeros({l.out})};
        }
    }
    return ps;
}

OptimizerState make_optimizer_state(const ModelArchitecture& arch) {
    OptimizerState st;
    st.velocity.resize(arch.layers.size());
    for (std::size_t i = 0; i < arch.layers.size(); ++i) {
        const LayerSpec& l = arch.layers[i];
        if (l.kind == LayerKind::dense) {
            st.velocity[i] = {Tensor::zeros({l.out, l.in}), Tensor::zeros({l.out})};
        } else if (l.kind == LayerKind::conv) {
            st.velocity[i] = {Tensor::zeros({l.out, l.in, 3, 3}), Tensor::zeros({l.out})};
        }
    }
    return st;
}

Tensor apply_layer(const LayerSpec& spec, const LayerParams& params, const Tensor& input) {
    const std::size_t n = batch_size_of(input);
    switch (spec.kind) {
        case LayerKind::dense: {
            if (input.shape.size() != 2 || input.shape[1] != spec.in) {
                throw DimensionError("dense: input shape mismatch");
            }
            Tensor out = Tensor::zeros({n, spec.out});
            dense_forward(input.data(), params.weight.data(), params.bias.data(), out.data(), n,
                          spec.in, spec.out);
            return out;
        }
        case LayerKind::conv: {
            if (input.shape.size() != 4 || input.shape[1] != spec.in) {
                throw DimensionError("conv: input shape mismatch");
            }
            Tensor out = Tensor::zeros({n, spec.out, input.shape[2], input.shape[3]});
            conv_forward(input.data(), params.weight.data(), params.bias.data(), out.data(), n,
                         spec.in, spec.out, input.shape[2], input.shape[3]);
            return out;
        }
        case LayerKind::relu: {
            Tensor out = input;
            for (double& x : out.v) x = x > 0.0 ? x : 0.0;
            return out;
        }
        case LayerKind::maxpool: {
            if (input.shape.size() != 4 || input.shape[2] < 2 || input.shape[3] < 2) {
                throw DimensionError("maxpool: input must be n x c x h x w with h,w >= 2");
            }
            const std::size_t c = input.shape[1], h = input.shape[2], w = input.shape[3];
            const std::size_t oh = h / 2, ow = w / 2;
            Tensor out = Tensor::zeros({n, c, oh, ow});
            for (std::size_t s = 0; s < n; ++s) {
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const double* ip = input.data() + (s * c + ch) * h * w;
                    double* op = out.data() + (s * c + ch) * oh * ow;
                    for (std::size_t y = 0; y < oh; ++y) {
                        for (std::size_t x = 0; x < ow; ++x) {
                            double a = ip[(2 * y) * w + 2 * x];
                            a = std::max(a, ip[(2 * y) * w + 2 * x + 1]);
                            a = std::max(a, ip[(2 * y + 1) * w + 2 * x]);
                            a = std::max(a, ip[(2 * y + 1) * w + 2 * x + 1]);
                            op[y * ow + x] = a;
                        }
                    }
                }
            }
            return out;
        }
        case LayerKind::flatten: {
            if (input.shape.size() != 4) throw DimensionError("flatten: input must be 4-d");
            std::size_t d = input.shape[1] * input.shape[2] * input.shape[3];
            return Tensor({n, d}, input.v);
        }
    }
    throw DimensionError("unknown layer kind");
}

namespace {

FeatureMatrix to_feature_matrix(std::size_t layer_index, const Tensor& act) {
    const std::size_t n = act.shape[0];
    const std::size_t d = act.numel() / n;
    FeatureMatrix fm;
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

void check_batch(const ModelArchitecture& arch, const Tensor& batch) {
    if (batch.shape.size() != 4 || batch.shape[1] != arch.in_c || batch.shape[2] != arch.in_h ||
        batch.shape[3] != arch.in_w) {
        throw DimensionError(arch.name + ": batch shape does not match architecture input");
    }
}

}  // namespace

ForwardResult forward(const ModelArchitecture& arch, const ParameterSet& params,
                      const Tensor& batch, const std::set<std::size_t>& capture) {
    check_batch(arch, batch);
    for (std::size_t idx : capture) {
        if (idx >= arch.layers.size()) throw DimensionError("capture index out of range");
    }
    ForwardResult res;
    Tensor act = batch;
    for (std::size_t i = 0; i < arch.layers.size(); ++i) {
        act = apply_layer(arch.layers[i], params.layers[i], act);
        if (capture.count(i)) res.features.emplace(i, to_feature_matrix(i, act));
    }
    act.check_finite("logits of " + arch.name);
    res.logits = std::move(act);
    return res;
}

double cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    const std::size_t n = logits.shape[0], c = logits.shape[1];
    double loss = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        const double* row = logits.data() + s * c;
        double m = row[0];
        for (std::size_t k = 1; k < c; ++k) m = std::max(m, row[k]);
        double sum = 0.0;
        for (std::size_t k = 0; k < c; ++k) sum += std::exp(row[k] - m);
        loss += std::log(sum) - (row[static_cast<std::size_t>(labels[s])] - m);
    }
    return loss / static_cast<double>(n);
}

TaskGradients backward_task_loss(const ModelArchitecture& arch, const ParameterSet& params,
                                 const Tensor& batch, const std::vector<int>& labels) {
    check_batch(arch, batch);
    const std::size_t n = batch.shape[0];
    if (labels.size() != n) throw DimensionError("labels do not match batch size");
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= arch.num_classes) {
            throw InputError("label out of range");
        }
    }

    std::vector<Tensor> acts;
    acts.reserve(arch.layers.size() + 1);
    acts.push_back(batch);
    for (std::size_t i = 0; i < arch.layers.size(); ++i) {
        acts.push_back(apply_layer(arch.layers[i], params.layers[i], acts.back()));
    }
    const Tensor& logits = acts.back();
    logits.check_finite("logits of " + arch.name);

    const std::size_t c = arch.num_classes;
    Tensor dlogits = Tensor::zeros({n, c});
    double loss = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        const double* row = logits.data() + s * c;
        double* drow = dlogits.data() + s * c;
        double m = row[0];
        for (std::size_t k = 1; k < c; ++k) m = std::max(m, row[k]);
        double sum = 0.0;
        for (std::size_t k = 0; k < c; ++k) sum += std::exp(row[k] - m);
        const std::size_t y = static_cast<std::size_t>(labels[s]);
        loss += std::log(sum) - (row[y] - m);
        for (std::size_t k = 0; k < c; ++k) {
            drow[k] = std::exp(row[k] - m) / sum / static_cast<double>(n);
        }
        drow[y] -= 1.0 / static_cast<double>(n);
    }
    loss /= static_cast<double>(n);
    if (!std::isfinite(loss)) throw NumericError("non-finite training loss");

    TaskGradients g;
    g.loss = loss;
    g.layers.resize(arch.layers.size());
    Tensor dact = std::move(dlogits);
    for (std::size_t i = arch.layers.size(); i-- > 0;) {
        LayerBackward lb = layer_backward(arch.layers[i], params.layers[i], acts[i], acts[i + 1],
                                          dact, i > 0);
        g.layers[i] = {std::move(lb.dweight), std::move(lb.dbias)};
        if (i > 0) dact = std::move(lb.dinput);
    }
    for (const LayerParams& lp : g.layers) {
        if (!lp.weight.empty()) lp.weight.check_finite("weight gradient");
        if (!lp.bias.empty()) lp.bias.check_finite("bias gradient");
    }
    return g;
}

void sgd_step(ParameterSet& params, const TaskGradients& grads, OptimizerState& state,
              const SgdConfig& cfg) {
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        LayerParams& p = params.layers[i];
        const LayerParams& g = grads.layers[i];
        LayerParams& v = state.velocity[i];
        if (p.empty()) continue;
        if (!p.weight.same_shape(g.weight) || !p.bias.same_shape(g.bias)) {
            throw DimensionError("sgd_step: gradient shape mismatch");
        }
        for (std::size_t k = 0; k < p.weight.numel(); ++k) {
            v.weight.v[k] = cfg.momentum * v.weight.v[k] + g.weight.v[k] +
                            cfg.weight_decay * p.weight.v[k];
            p.weight.v[k] -= cfg.learning_rate * v.weight.v[k];
        }
        for (std::size_t k = 0; k < p.bias.numel(); ++k) {
            v.bias.v[k] = cfg.momentum * v.bias.v[k] + g.bias.v[k] + cfg.weight_decay * p.bias.v[k];
            p.bias.v[k] -= cfg.learning_rate * v.bias.v[k];
        }
    }
}

namespace {

// Residual 2*(out - target)/N in batch-major layout, plus the loss.
std::pair<Tensor, double> feature_residual(const Tensor& out, const FeatureMatrix& target) {
    const std::size_t n = out.shape[0];
    const std::size_t d = out.numel() / n;
    if (target.rows != d || target.cols != n) {
        throw DimensionError("feature target dimensions do not match layer output");
    }
    Tensor dout = Tensor::zeros(out.shape);
    double loss = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t s = 0; s < n; ++s) {
        const double* row = out.data() + s * d;
        double* drow = dout.data() + s * d;
        for (std::size_t i = 0; i < d; ++i) {
            double r = row[i] - target.values[i * n + s];
            loss += r * r;
            drow[i] = 2.0 * r * inv_n;
        }
    }
    return {std::move(dout), loss * inv_n};
}

}  // namespace

double feature_loss(const LayerSpec& spec, const LayerParams& params, const Tensor& input,
                    const FeatureMatrix& target) {
    Tensor out = apply_layer(spec, params, input);
    return feature_residual(out, target).second;
}

LayerLossGrad feature_loss_grad(const LayerSpec& spec, const LayerParams& params,
                                const Tensor& input, const FeatureMatrix& target) {
    Tensor out = apply_layer(spec, params, input);
    auto [dout, loss] = feature_residual(out, target);
    LayerLossGrad r;
    r.loss = loss;
    if (!std::isfinite(loss)) throw NumericError("non-finite alignment loss");
    if (spec.has_params()) {
        LayerBackward lb = layer_backward(spec, params, input, out, dout, false);
        r.dweight = std::move(lb.dweight);
        r.dbias = std::move(lb.dbias);
    }
    return r;
}

}  // namespace fedsim::nn
