#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fedsim/arch.hpp"

namespace fedsim::zoo {

enum class Scale { tiny, small };

Scale scale_from_string(const std::string& s);
std::string to_string(Scale s);

// Four architectures A < B < C < D over 1x28x28 input. Deeper members
// insert extra conv+relu blocks after a shared prefix, so pairwise common
// prefixes are nested the way the VGG family's are:
//   prefix(A,B) = prefix(A,C) = prefix(A,D) = 2
//   prefix(B,C) = prefix(B,D) = 7
//   prefix(C,D) = 9
std::vector<ModelArchitecture> build_family(Scale scale, std::size_t num_classes = 10);

// Single dense probe on flattened input; used for separability checks.
ModelArchitecture probe_architecture(std::size_t num_classes, std::size_t in_c = 1,
                                     std::size_t in_h = 28, std::size_t in_w = 28);

// One group of clients whose architectures share at least their first
// layer. Aggregation scope is per position: the contributors of a
// position are exactly the members whose leading layers match through it,
// so C_l shrinks as the shared chain branches off.
struct CommonLayerSet {
    struct PositionGroup {
        std::size_t layer_index = 0;
        std::vector<int> contributors;  // sorted client ids, size >= 2
    };

    int cluster_id = 0;
    std::vector<int> members;  // sorted client ids
    std::map<int, std::vector<std::size_t>> common_indices;  // per member, ascending
    std::vector<PositionGroup> groups;  // ordered by (layer_index, first contributor)

    // Longest prefix shared by every member (0 for singletons).
    std::size_t shared_prefix_len() const;
};

// Greedy grouping by maximal shared leading-layer signature sequences.
// Every client lands in exactly one cluster; clusters are sorted by their
// first-layer signature so the result is independent of input order.
std::vector<CommonLayerSet> extract_max_common_layers(
    const std::vector<std::pair<int, const ModelArchitecture*>>& models);

}  // namespace fedsim::zoo
