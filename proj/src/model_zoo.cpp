#include "fedsim/model_zoo.hpp"

#include <algorithm>
#include <functional>

namespace fedsim::zoo {

Scale scale_from_string(const std::string& s) {
    if (s == "tiny") return Scale::tiny;
    if (s == "small") return Scale::small;
    throw ConfigError("unknown model scale '" + s + "' (expected tiny or small)");
}

std::string to_string(Scale s) { return s == Scale::tiny ? "tiny" : "small"; }

namespace {

ModelArchitecture make_member(const std::string& name, std::size_t c1, std::size_t c2,
                              int stage1_convs, int stage2_convs, std::size_t num_classes) {
    ModelArchitecture m;
    m.name = name;
    m.num_classes = num_classes;
    m.layers.push_back(LayerSpec::convL(1, c1));
    m.layers.push_back(LayerSpec::reluL());
    for (int i = 1; i < stage1_convs; ++i) {
        m.layers.push_back(LayerSpec::convL(c1, c1));
        m.layers.push_back(LayerSpec::reluL());
    }
    m.layers.push_back(LayerSpec::maxpoolL());
    m.layers.push_back(LayerSpec::convL(c1, c2));
    m.layers.push_back(LayerSpec::reluL());
    for (int i = 1; i < stage2_convs; ++i) {
        m.layers.push_back(LayerSpec::convL(c2, c2));
        m.layers.push_back(LayerSpec::reluL());
    }
    m.layers.push_back(LayerSpec::maxpoolL());
    m.layers.push_back(LayerSpec::flattenL());
    m.layers.push_back(LayerSpec::denseL(c2 * 7 * 7, num_classes));
    m.validate();
    return m;
}

}  // namespace

std::vector<ModelArchitecture> build_family(Scale scale, std::size_t num_classes) {
    const std::size_t c1 = scale == Scale::tiny ? 3 : 8;
    const std::size_t c2 = scale == Scale::tiny ? 6 : 16;
    const std::string p = to_string(scale) + "-";
    return {
        make_member(p + "A", c1, c2, 1, 1, num_classes),
        make_member(p + "B", c1, c2, 2, 1, num_classes),
        make_member(p + "C", c1, c2, 2, 2, num_classes),
        make_member(p + "D", c1, c2, 2, 3, num_classes),
    };
}

ModelArchitecture probe_architecture(std::size_t num_classes, std::size_t in_c, std::size_t in_h,
                                     std::size_t in_w) {
    ModelArchitecture m;
    m.name = "probe";
    m.num_classes = num_classes;
    m.in_c = in_c;
    m.in_h = in_h;
    m.in_w = in_w;
    m.layers.push_back(LayerSpec::flattenL());
    m.layers.push_back(LayerSpec::denseL(in_c * in_h * in_w, num_classes));
    m.validate();
    return m;
}

std::size_t CommonLayerSet::shared_prefix_len() const {
    if (members.size() < 2) return 0;
    // Full-membership groups always form the consecutive chain 0..len-1.
    std::size_t len = 0;
    for (const PositionGroup& g : groups) {
        if (g.contributors.size() == members.size()) ++len;
    }
    return len;
}

std::vector<CommonLayerSet> extract_max_common_layers(
    const std::vector<std::pair<int, const ModelArchitecture*>>& models) {
    if (models.empty()) throw InputError("extract_max_common_layers: no clients given");

    struct Entry {
        int client;
        std::vector<std::string> sigs;
    };
    std::vector<Entry> entries;
    entries.reserve(models.size());
    for (const auto& [id, arch] : models) {
        Entry e;
        e.client = id;
        e.sigs.reserve(arch->layers.size());
        for (const LayerSpec& l : arch->layers) e.sigs.push_back(l.signature());
        entries.push_back(std::move(e));
    }
    std::sort(entries.begin(), entries.end(),
              [](const Entry& a, const Entry& b) { return a.client < b.client; });

    // Top-level clusters: clients sharing the first layer's signature.
    std::map<std::string, std::vector<const Entry*>> top;
    for (const Entry& e : entries) top[e.sigs.front()].push_back(&e);

    std::vector<CommonLayerSet> result;
    for (auto& [sig, group] : top) {
        (void)sig;
        CommonLayerSet cl;
        cl.cluster_id = static_cast<int>(result.size());
        for (const Entry* e : group) {
            cl.members.push_back(e->client);
            cl.common_indices[e->client] = {};
        }

        // Refine the matching chain position by position; a subgroup keeps
        // aggregating only while >= 2 of its clients still match.
        std::function<void(std::vector<const Entry*>, std::size_t)> refine =
            [&](std::vector<const Entry*> g, std::size_t depth) {
                if (g.size() < 2) return;
                CommonLayerSet::PositionGroup pg;
                pg.layer_index = depth;
                for (const Entry* e : g) {
                    pg.contributors.push_back(e->client);
                    cl.common_indices[e->client].push_back(depth);
                }
                cl.groups.push_back(std::move(pg));

                std::map<std::string, std::vector<const Entry*>> next;
                for (const Entry* e : g) {
                    if (e->sigs.size() > depth + 1) next[e->sigs[depth + 1]].push_back(e);
                }
                for (auto& [nsig, ng] : next) {
                    (void)nsig;
                    refine(std::move(ng), depth + 1);
                }
            };
        refine(std::vector<const Entry*>(group.begin(), group.end()), 0);

        std::sort(cl.groups.begin(), cl.groups.end(),
                  [](const CommonLayerSet::PositionGroup& a,
                     const CommonLayerSet::PositionGroup& b) {
                      if (a.layer_index != b.layer_index) return a.layer_index < b.layer_index;
                      return a.contributors.front() < b.contributors.front();
                  });
        result.push_back(std::move(cl));
    }
    return result;
}

}  // namespace fedsim::zoo
