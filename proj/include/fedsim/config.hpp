#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedsim/alignment.hpp"
#include "fedsim/data.hpp"
#include "fedsim/model_zoo.hpp"
#include "fedsim/nn.hpp"

namespace fedsim {

enum class Strategy { fedavg, maxcommon, fedppa, fedppa_plus };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);

struct DataConfig {
    enum class Source { synth, idx };
    Source source = Source::synth;
    std::size_t classes = 10;
    std::size_t per_class = 400;
    std::int64_t seed = -1;  // -1: derive from the run seed
    std::string images;
    std::string labels;
    std::size_t limit = 0;  // 0: all samples
};

struct ModelsConfig {
    zoo::Scale scale = zoo::Scale::tiny;
    std::vector<std::string> assignment;  // empty: pairwise A,A,B,B,C,C,D,D...
};

// Full experiment description. Defaults reproduce the reference setup:
// 8 clients, 51 rounds, 10 local epochs, SGD(0.01, 0.9, 5e-4).
struct RunConfig {
    Strategy strategy = Strategy::fedppa;
    int num_clients = 8;
    int rounds = 51;
    int local_epochs = 10;
    int batch_size = 32;
    std::uint64_t seed = 1;
    unsigned threads = 0;     // 0: hardware concurrency (FEDPPA_THREADS caps)
    bool timing = false;      // wall-clock seconds column; off keeps output byte-stable
    bool eq7_literal = false; // study mode: scale the mean by the recipient's weight
    nn::SgdConfig sgd;
    data::PartitionConfig partition;
    align::AlignmentConfig alignment;
    ModelsConfig models;
    DataConfig data;

    std::uint64_t partition_seed() const;
    std::uint64_t data_seed() const;
    std::string assignment_name(int client) const;

    void validate() const;  // throws ConfigError naming section.key
};

// INI-style file with [run]/[partition]/[optimizer]/[alignment]/[models]/[data]
// sections. Unknown sections or keys are fatal. Overrides are
// "section.key=value" strings applied after the file.
RunConfig parse_config(const std::string& path, const std::vector<std::string>& overrides = {});
RunConfig parse_config_text(const std::string& text,
                            const std::vector<std::string>& overrides = {});

}  // namespace fedsim
