#include "fedsim/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace fedsim {

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::fedavg: return "fedavg";
        case Strategy::maxcommon: return "maxcommon";
        case Strategy::fedppa: return "fedppa";
        case Strategy::fedppa_plus: return "fedppa+";
    }
    return "?";
}

Strategy strategy_from_string(const std::string& s) {
    if (s == "fedavg") return Strategy::fedavg;
    if (s == "maxcommon") return Strategy::maxcommon;
    if (s == "fedppa") return Strategy::fedppa;
    if (s == "fedppa+" || s == "fedppa_plus") return Strategy::fedppa_plus;
    throw ConfigError("run.strategy: unknown strategy '" + s +
                      "' (expected fedavg|maxcommon|fedppa|fedppa+)");
}

std::uint64_t RunConfig::partition_seed() const { return partition.seed; }

std::uint64_t RunConfig::data_seed() const {
    return data.seed >= 0 ? static_cast<std::uint64_t>(data.seed) : seed;
}

std::string RunConfig::assignment_name(int client) const {
    if (!models.assignment.empty()) {
        return models.assignment[static_cast<std::size_t>(client) % models.assignment.size()];
    }
    static const char* kCycle[] = {"A", "B", "C", "D"};
    return kCycle[(client / 2) % 4];
}

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

long long parse_int(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    long long x = 0;
    try {
        x = std::stoll(v, &pos);
    } catch (...) {
        throw ConfigError(key + ": expected an integer, got '" + v + "'");
    }
    if (pos != v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
    return x;
}

double parse_real(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    double x = 0.0;
    try {
        x = std::stod(v, &pos);
    } catch (...) {
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
    if (pos != v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
    return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "on" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "off" || v == "0" || v == "no") return false;
    throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

std::vector<std::string> split_csv(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

struct Parser {
    RunConfig cfg;
    bool partition_seed_set = false;

    void apply(const std::string& section, const std::string& key, const std::string& value) {
        const std::string full = section + "." + key;
        if (section == "run") {
            if (key == "strategy") cfg.strategy = strategy_from_string(value);
            else if (key == "clients") cfg.num_clients = static_cast<int>(parse_int(full, value));
            else if (key == "rounds") cfg.rounds = static_cast<int>(parse_int(full, value));
            else if (key == "local_epochs") cfg.local_epochs = static_cast<int>(parse_int(full, value));
            else if (key == "batch_size") cfg.batch_size = static_cast<int>(parse_int(full, value));
            else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int(full, value));
            else if (key == "threads") cfg.threads = static_cast<unsigned>(parse_int(full, value));
            else if (key == "timing") cfg.timing = parse_bool(full, value);
            else if (key == "eq7_literal") cfg.eq7_literal = parse_bool(full, value);
            else throw ConfigError("unknown config key '" + full + "'");
        } else if (section == "partition") {
            if (key == "alpha") cfg.partition.alpha = parse_real(full, value);
            else if (key == "seed") {
                cfg.partition.seed = static_cast<std::uint64_t>(parse_int(full, value));
                partition_seed_set = true;
            } else if (key == "train_fraction") cfg.partition.train_fraction = parse_real(full, value);
            else throw ConfigError("unknown config key '" + full + "'");
        } else if (section == "optimizer") {
            if (key == "lr") cfg.sgd.learning_rate = parse_real(full, value);
            else if (key == "momentum") cfg.sgd.momentum = parse_real(full, value);
            else if (key == "weight_decay") cfg.sgd.weight_decay = parse_real(full, value);
            else throw ConfigError("unknown config key '" + full + "'");
        } else if (section == "alignment") {
            if (key == "steps_per_layer") cfg.alignment.steps_per_layer = static_cast<int>(parse_int(full, value));
            else if (key == "lr") cfg.alignment.align_lr = parse_real(full, value);
            else if (key == "sample_cap") cfg.alignment.sample_cap = static_cast<std::size_t>(parse_int(full, value));
            else throw ConfigError("unknown config key '" + full + "'");
        } else if (section == "models") {
            if (key == "scale") cfg.models.scale = zoo::scale_from_string(value);
            else if (key == "assignment") cfg.models.assignment = split_csv(value);
            else throw ConfigError("unknown config key '" + full + "'");
        } else if (section == "data") {
            if (key == "source") {
                if (value == "synth") cfg.data.source = DataConfig::Source::synth;
                else if (value == "idx") cfg.data.source = DataConfig::Source::idx;
                else throw ConfigError("data.source: expected synth or idx, got '" + value + "'");
            } else if (key == "classes") cfg.data.classes = static_cast<std::size_t>(parse_int(full, value));
            else if (key == "per_class") cfg.data.per_class = static_cast<std::size_t>(parse_int(full, value));
            else if (key == "seed") cfg.data.seed = parse_int(full, value);
            else if (key == "images") cfg.data.images = value;
            else if (key == "labels") cfg.data.labels = value;
            else if (key == "limit") cfg.data.limit = static_cast<std::size_t>(parse_int(full, value));
            else throw ConfigError("unknown config key '" + full + "'");
        } else {
            throw ConfigError("unknown config section '" + section + "'");
        }
    }
};

}  // namespace

void RunConfig::validate() const {
    if (num_clients < 1) throw ConfigError("run.clients: must be >= 1");
    if (rounds < 1) throw ConfigError("run.rounds: must be >= 1");
    if (local_epochs < 1) throw ConfigError("run.local_epochs: must be >= 1");
    if (batch_size < 1) throw ConfigError("run.batch_size: must be >= 1");
    if (!(sgd.learning_rate > 0.0)) throw ConfigError("optimizer.lr: must be positive");
    if (!(sgd.momentum >= 0.0 && sgd.momentum < 1.0)) {
        throw ConfigError("optimizer.momentum: must lie in [0,1)");
    }
    if (!(sgd.weight_decay >= 0.0)) throw ConfigError("optimizer.weight_decay: must be >= 0");
    if (!(partition.alpha > 0.0)) throw ConfigError("partition.alpha: must be positive");
    if (!(partition.train_fraction > 0.0 && partition.train_fraction < 1.0)) {
        throw ConfigError("partition.train_fraction: must lie in (0,1)");
    }
    if (alignment.steps_per_layer < 0) throw ConfigError("alignment.steps_per_layer: must be >= 0");
    if (!(alignment.align_lr > 0.0)) throw ConfigError("alignment.lr: must be positive");
    if (alignment.sample_cap < 1) throw ConfigError("alignment.sample_cap: must be >= 1");
    if (data.classes < 2) throw ConfigError("data.classes: must be >= 2");
    if (data.per_class < 1) throw ConfigError("data.per_class: must be >= 1");
    if (data.source == DataConfig::Source::idx && (data.images.empty() || data.labels.empty())) {
        throw ConfigError("data.images/data.labels: required when data.source = idx");
    }
    if (!models.assignment.empty() &&
        models.assignment.size() != static_cast<std::size_t>(num_clients)) {
        throw ConfigError("models.assignment: must list exactly run.clients entries");
    }
    for (const std::string& name : models.assignment) {
        if (name != "A" && name != "B" && name != "C" && name != "D") {
            throw ConfigError("models.assignment: unknown architecture '" + name + "'");
        }
    }
}

RunConfig parse_config_text(const std::string& text, const std::vector<std::string>& overrides) {
    Parser p;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ConfigError("config line " + std::to_string(lineno) + ": malformed section header");
            }
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        }
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (section.empty()) {
            throw ConfigError("config line " + std::to_string(lineno) + ": key outside any [section]");
        }
        p.apply(section, key, value);
    }

    for (const std::string& ov : overrides) {
        std::size_t eq = ov.find('=');
        std::size_t dot = ov.find('.');
        if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
            throw ConfigError("override '" + ov + "': expected section.key=value");
        }
        p.apply(trim(ov.substr(0, dot)), trim(ov.substr(dot + 1, eq - dot - 1)),
                trim(ov.substr(eq + 1)));
    }

    p.cfg.partition.num_clients = static_cast<std::size_t>(std::max(p.cfg.num_clients, 1));
    if (!p.partition_seed_set) p.cfg.partition.seed = p.cfg.seed;
    p.cfg.validate();
    return p.cfg;
}

RunConfig parse_config(const std::string& path, const std::vector<std::string>& overrides) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str(), overrides);
}

}  // namespace fedsim
