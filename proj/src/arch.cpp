#include "fedsim/arch.hpp"

namespace fedsim {

std::string LayerSpec::signature() const {
    switch (kind) {
        case LayerKind::dense:
            return "dense[" + std::to_string(in) + "," + std::to_string(out) + "]";
        case LayerKind::relu:
            return "relu";
        case LayerKind::conv:
            return "conv3x3[" + std::to_string(in) + "," + std::to_string(out) + "]";
        case LayerKind::maxpool:
            return "maxpool2";
        case LayerKind::flatten:
            return "flatten";
    }
    return "?";
}

std::vector<ActShape> ModelArchitecture::output_shapes() const {
    std::vector<ActShape> out;
    out.reserve(layers.size());
    ActShape cur{false, in_c, in_h, in_w};
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        switch (l.kind) {
            case LayerKind::conv:
                if (cur.flat || cur.c != l.in) {
                    throw DimensionError(name + ": conv input mismatch at layer " + std::to_string(i));
                }
                cur.c = l.out;
                break;
            case LayerKind::relu:
                break;
            case LayerKind::maxpool:
                if (cur.flat || cur.h < 2 || cur.w < 2) {
                    throw DimensionError(name + ": maxpool needs a 2d input at layer " + std::to_string(i));
                }
                cur.h /= 2;
                cur.w /= 2;
                break;
            case LayerKind::flatten:
                if (cur.flat) {
                    throw DimensionError(name + ": flatten of a flat input at layer " + std::to_string(i));
                }
                cur = ActShape{true, cur.c * cur.h * cur.w, 0, 0};
                break;
            case LayerKind::dense:
                if (!cur.flat || cur.c != l.in) {
                    throw DimensionError(name + ": dense input mismatch at layer " + std::to_string(i));
                }
                cur = ActShape{true, l.out, 0, 0};
                break;
        }
        out.push_back(cur);
    }
    return out;
}

std::string ModelArchitecture::signature() const {
    std::string s;
    for (const LayerSpec& l : layers) {
        s += l.signature();
        s += '\n';
    }
    return s;
}

void ModelArchitecture::validate() const {
    if (layers.empty()) throw DimensionError(name + ": architecture has no layers");
    output_shapes();
    const LayerSpec& last = layers.back();
    if (last.kind != LayerKind::dense || last.out != num_classes) {
        throw DimensionError(name + ": last layer must be dense with num_classes outputs");
    }
}

}  // namespace fedsim
