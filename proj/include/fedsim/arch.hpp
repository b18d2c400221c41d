#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fedsim/error.hpp"

namespace fedsim {

// Supported layer kinds. Convolutions are fixed 3x3, stride 1, same
// padding; max-pool is fixed 2x2. That is enough to express the
// prefix-sharing model family the simulator trains.
enum class LayerKind { dense, relu, conv, maxpool, flatten };

struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    std::size_t in = 0;   // dense: input dim, conv: input channels
    std::size_t out = 0;  // dense: output dim, conv: output channels

    static LayerSpec denseL(std::size_t in, std::size_t out) { return {LayerKind::dense, in, out}; }
    static LayerSpec reluL() { return {LayerKind::relu, 0, 0}; }
    static LayerSpec convL(std::size_t in_ch, std::size_t out_ch) { return {LayerKind::conv, in_ch, out_ch}; }
    static LayerSpec maxpoolL() { return {LayerKind::maxpool, 0, 0}; }
    static LayerSpec flattenL() { return {LayerKind::flatten, 0, 0}; }

    bool has_params() const { return kind == LayerKind::dense || kind == LayerKind::conv; }

    // Canonical signature; two layer positions match iff the strings are
    // byte-identical.
    std::string signature() const;
};

// Shape of one activation: either an image stack (c,h,w) or a flat vector.
struct ActShape {
    bool flat = false;
    std::size_t c = 0, h = 0, w = 0;
    std::size_t dim() const { return flat ? c : c * h * w; }
};

struct ModelArchitecture {
    std::string name;
    std::vector<LayerSpec> layers;
    std::size_t num_classes = 0;
    std::size_t in_c = 1, in_h = 28, in_w = 28;

    // Per-layer output shapes (index i = output of layer i). Throws
    // DimensionError when the chain is inconsistent.
    std::vector<ActShape> output_shapes() const;

    // Signature of the whole stack, one layer per line.
    std::string signature() const;

    // Enforces the structural invariants: nonempty, shape-consistent,
    // ends in a dense layer producing num_classes logits.
    void validate() const;
};

}  // namespace fedsim
