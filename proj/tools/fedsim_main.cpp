#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedsim/orchestrator.hpp"
#include "fedsim/svg.hpp"

namespace {

using namespace fedsim;

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    if (path.empty()) return parse_config_text("", overrides);
    return parse_config(path, overrides);
}

int cmd_run(const std::string& config_path, const std::string& out_dir,
            const std::vector<std::string>& overrides) {
    RunConfig cfg = load_config(config_path, overrides);
    orch::ExperimentResult res = orch::run_experiment(cfg, out_dir);
    std::printf("strategy %s: %d rounds done\n", to_string(cfg.strategy).c_str(), cfg.rounds);
    std::printf("best_personalized_accuracy = %.6f (round %d)\n", res.best_personalized,
                res.best_personalized_round);
    std::printf("best_global_accuracy = %.6f (round %d)\n", res.best_global,
                res.best_global_round);
    std::printf("outputs in %s: metrics.csv, summary.txt, accuracy.svg\n", out_dir.c_str());
    return 0;
}

int cmd_partition_stats(const std::string& config_path, const std::string& out_dir,
                        const std::vector<std::string>& overrides) {
    RunConfig cfg = load_config(config_path, overrides);
    data::LabeledDataset ds = orch::build_dataset(cfg);
    std::vector<data::ClientDataset> shards = orch::build_shards(cfg, ds);

    std::filesystem::create_directories(out_dir);
    std::ofstream csv(out_dir + "/partition_stats.csv", std::ios::trunc);
    csv << "client,total,train,test,classes_geq_1pct\n";
    std::printf("client  total  train  test  classes>=1%%  histogram\n");
    std::vector<int> class_counts;
    for (const auto& s : shards) {
        int rich = 0;
        std::string hist = "[";
        for (std::size_t c = 0; c < s.label_histogram.size(); ++c) {
            double share = static_cast<double>(s.label_histogram[c]) /
                           static_cast<double>(s.train.size());
            if (share >= 0.01) ++rich;
            hist += std::to_string(s.label_histogram[c]);
            if (c + 1 < s.label_histogram.size()) hist += ",";
        }
        hist += "]";
        class_counts.push_back(rich);
        std::size_t total = s.train.size() + s.test.size();
        std::printf("%-7d %-6zu %-6zu %-5zu %-12d %s\n", s.client_id, total, s.train.size(),
                    s.test.size(), rich, hist.c_str());
        csv << s.client_id << "," << total << "," << s.train.size() << "," << s.test.size() << ","
            << rich << "\n";
    }
    std::sort(class_counts.begin(), class_counts.end());
    double median = class_counts.size() % 2 == 1
                        ? class_counts[class_counts.size() / 2]
                        : 0.5 * (class_counts[class_counts.size() / 2 - 1] +
                                 class_counts[class_counts.size() / 2]);
    std::printf("median_classes_geq_1pct = %.1f\n", median);
    return 0;
}

int cmd_entropy_report(const std::string& config_path, const std::string& out_dir,
                       const std::vector<std::string>& overrides) {
    RunConfig cfg = load_config(config_path, overrides);
    data::LabeledDataset ds = orch::build_dataset(cfg);
    std::vector<data::ClientDataset> shards = orch::build_shards(cfg, ds);
    data::EntropyWeights w = data::entropy_weights(shards);

    double sum = 0.0, mean = 0.0;
    for (double e : w.normalized) {
        sum += e;
        mean += e;
    }
    mean /= static_cast<double>(w.normalized.size());
    double var = 0.0;
    for (double e : w.normalized) var += (e - mean) * (e - mean);
    var /= static_cast<double>(w.normalized.size());

    std::vector<std::string> labels;
    for (std::size_t i = 0; i < w.normalized.size(); ++i) {
        std::printf("client %zu: e=%.6f H=%.6f\n", i, w.normalized[i], w.raw_entropy[i]);
        labels.push_back(std::to_string(i));
    }
    std::printf("sum_e = %.12f\n", sum);
    std::printf("variance_e = %.12f\n", var);

    std::filesystem::create_directories(out_dir);
    char title[128];
    std::snprintf(title, sizeof title, "entropy weights (alpha=%g)", cfg.partition.alpha);
    svg::write_file(out_dir + "/entropy_weights.svg", svg::bar_chart(title, labels, w.normalized));
    return 0;
}

struct CsvCurve {
    std::string label;
    std::vector<double> rounds;
    std::vector<double> personalized;
    std::vector<double> global;
};

CsvCurve read_metrics_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw FormatError(path + ": cannot open");
    std::string line;
    if (!std::getline(f, line) || line != orch::kMetricsCsvHeader) {
        throw FormatError(path + ": unexpected metrics CSV header");
    }
    CsvCurve curve;
    curve.label = std::filesystem::path(path).stem().string();
    int last_round = -1;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 8) throw FormatError(path + ": malformed row '" + line + "'");
        try {
            int round = std::stoi(cells[0]);
            if (round == last_round) continue;  // one point per round
            last_round = round;
            curve.rounds.push_back(round);
            curve.personalized.push_back(std::stod(cells[3]));
            curve.global.push_back(std::stod(cells[4]));
        } catch (const std::logic_error&) {
            throw FormatError(path + ": malformed row '" + line + "'");
        }
    }
    return curve;
}

int cmd_plot(const std::vector<std::string>& csvs, const std::string& out_dir) {
    if (csvs.empty()) throw ConfigError("plot: at least one --csv is required");
    std::vector<svg::Series> pers, glob;
    for (const std::string& path : csvs) {
        CsvCurve c = read_metrics_csv(path);
        pers.push_back({c.label, c.rounds, c.personalized});
        glob.push_back({c.label, c.rounds, c.global});
    }
    std::filesystem::create_directories(out_dir);
    svg::write_file(out_dir + "/personalized.svg",
                    svg::line_chart("personalized accuracy", "round", "accuracy", pers));
    svg::write_file(out_dir + "/global.svg",
                    svg::line_chart("global accuracy", "round", "accuracy", glob));
    std::printf("wrote %s/personalized.svg and %s/global.svg\n", out_dir.c_str(), out_dir.c_str());
    return 0;
}

// ---- verify: fast invariant suite ---------------------------------------

struct Check {
    std::string name;
    bool pass = false;
    std::string detail;
};

Check check_gradient() {
    ModelArchitecture arch;
    arch.name = "verify-net";
    arch.num_classes = 4;
    arch.in_c = 1;
    arch.in_h = 4;
    arch.in_w = 4;
    arch.layers = {LayerSpec::flattenL(), LayerSpec::denseL(16, 12), LayerSpec::reluL(),
                   LayerSpec::denseL(12, 4)};
    nn::ParameterSet params = nn::init_params(arch, 99);

    Rng rng(123);
    Tensor batch = Tensor::zeros({6, 1, 4, 4});
    for (double& x : batch.v) x = rng.uniform();
    std::vector<int> labels(6);
    for (int& y : labels) y = static_cast<int>(rng.index(4));

    nn::TaskGradients g = nn::backward_task_loss(arch, params, batch, labels);
    if (const char* fault = std::getenv("FEDSIM_VERIFY_FAULT"); fault &&
        std::string(fault) == "gradient") {
        g.layers[1].weight.v[0] += 1e-2;  // test hook: corrupt one component
    }

    const double eps = 1e-5;
    double max_rel = 0.0;
    for (std::size_t li = 0; li < params.layers.size(); ++li) {
        nn::LayerParams& lp = params.layers[li];
        for (Tensor* t : {&lp.weight, &lp.bias}) {
            Tensor* gt = t == &lp.weight ? &g.layers[li].weight : &g.layers[li].bias;
            for (std::size_t k = 0; k < t->numel(); ++k) {
                const double orig = t->v[k];
                t->v[k] = orig + eps;
                double up = nn::cross_entropy(nn::forward(arch, params, batch).logits, labels);
                t->v[k] = orig - eps;
                double dn = nn::cross_entropy(nn::forward(arch, params, batch).logits, labels);
                t->v[k] = orig;
                double num = (up - dn) / (2 * eps);
                double rel = std::abs(num - gt->v[k]) / std::max(1e-6, std::abs(num) + std::abs(gt->v[k]));
                max_rel = std::max(max_rel, rel);
            }
        }
    }
    char buf[96];
    std::snprintf(buf, sizeof buf, "max_rel_err=%.2e (threshold 1.0e-04)", max_rel);
    return {"gradient_check", max_rel < 1e-4, buf};
}

Check check_entropy_normalization() {
    data::LabeledDataset ds = data::synth_dataset(10, 60, 5);
    data::PartitionConfig pc{0.1, 8, 21, 0.8};
    data::EntropyWeights w = data::entropy_weights(data::partition_dirichlet(ds, pc));
    double sum = 0.0;
    for (double e : w.normalized) sum += e;
    double err = std::abs(sum - 1.0);
    char buf[96];
    std::snprintf(buf, sizeof buf, "|sum-1|=%.2e (threshold 1.0e-12)", err);
    return {"entropy_normalization", err <= 1e-12, buf};
}

Check check_fedavg_degeneracy() {
    RunConfig base = parse_config_text("", {});
    base.num_clients = 4;
    base.rounds = 2;
    base.local_epochs = 1;
    base.data.classes = 4;
    base.data.per_class = 40;
    base.partition.alpha = 1.0;
    base.partition.seed = 3;
    base.seed = 3;
    base.models.assignment = {"A", "A", "A", "A"};
    base.alignment.steps_per_layer = 0;

    auto run_final = [&](Strategy s) {
        RunConfig cfg = base;
        cfg.strategy = s;
        data::LabeledDataset ds = orch::build_dataset(cfg);
        auto shards = orch::build_shards(cfg, ds);
        auto pool = orch::combined_test_pool(shards);
        orch::Simulation sim(cfg, std::move(shards), std::move(pool));
        for (int r = 0; r < cfg.rounds; ++r) sim.run_round();
        std::vector<nn::ParameterSet> out;
        for (std::size_t i = 0; i < sim.num_clients(); ++i) out.push_back(sim.client(i).params);
        return out;
    };
    auto a = run_final(Strategy::fedppa);
    auto b = run_final(Strategy::fedavg);
    double max_diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t l = 0; l < a[i].layers.size(); ++l) {
            for (std::size_t k = 0; k < a[i].layers[l].weight.numel(); ++k) {
                max_diff = std::max(max_diff,
                                    std::abs(a[i].layers[l].weight.v[k] - b[i].layers[l].weight.v[k]));
            }
            for (std::size_t k = 0; k < a[i].layers[l].bias.numel(); ++k) {
                max_diff = std::max(max_diff,
                                    std::abs(a[i].layers[l].bias.v[k] - b[i].layers[l].bias.v[k]));
            }
        }
    }
    char buf[96];
    std::snprintf(buf, sizeof buf, "max_abs_diff=%.2e (threshold 1.0e-12)", max_diff);
    return {"fedavg_degeneracy", max_diff <= 1e-12, buf};
}

Check check_alignment_fixed_point() {
    data::LabeledDataset ds = data::synth_dataset(4, 30, 9);
    data::PartitionConfig pc{10.0, 2, 4, 0.8};
    auto shards = data::partition_dirichlet(ds, pc);
    auto family = zoo::build_family(zoo::Scale::tiny, 4);
    const ModelArchitecture& arch = family[0];
    nn::ParameterSet model = nn::init_params(arch, 77);

    std::vector<std::size_t> common(arch.layers.size());
    std::iota(common.begin(), common.end(), 0);
    align::AlignmentConfig cfg;
    auto [aligned, report] = align::progressive_align(arch, model, model, shards[0], common, cfg);
    double total = report.total_pre() + report.total_post();
    bool bitwise = true;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        bitwise = bitwise && aligned.layers[l].weight.v == model.layers[l].weight.v &&
                  aligned.layers[l].bias.v == model.layers[l].bias.v;
    }
    char buf[96];
    std::snprintf(buf, sizeof buf, "total_loss=%.2e bitwise_equal=%s", total, bitwise ? "yes" : "no");
    return {"alignment_fixed_point", total == 0.0 && bitwise, buf};
}

int cmd_verify() {
    std::vector<Check> checks;
    checks.push_back(check_gradient());
    checks.push_back(check_entropy_normalization());
    checks.push_back(check_fedavg_degeneracy());
    checks.push_back(check_alignment_fixed_point());

    int passed = 0;
    for (const Check& c : checks) {
        std::printf("[%s] %-24s %s\n", c.pass ? "PASS" : "FAIL", c.name.c_str(), c.detail.c_str());
        if (c.pass) ++passed;
    }
    std::printf("%d/%zu checks passed\n", passed, checks.size());
    return passed == static_cast<int>(checks.size()) ? 0 : 1;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return 2;
    if (dynamic_cast<const FormatError*>(&e)) return 3;
    if (dynamic_cast<const InputError*>(&e)) return 3;
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fedsim: deterministic federated-learning simulator "
                 "(FedAvg / Max-Common / FedPPA / FedPPA+)"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::vector<std::string> overrides;
    std::vector<std::string> csvs;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "INI-style run config (defaults if omitted)");
        cmd->add_option("--out", out_dir, "output directory");
        cmd->add_option("--set", overrides, "override as section.key=value (repeatable)");
    };

    CLI::App* run = app.add_subcommand("run", "run one experiment and write metrics/plots");
    add_common(run);
    CLI::App* pstats = app.add_subcommand("partition-stats", "describe the non-IID partition");
    add_common(pstats);
    CLI::App* ereport = app.add_subcommand("entropy-report", "per-client entropy weights + chart");
    add_common(ereport);
    CLI::App* plot = app.add_subcommand("plot", "plot accuracy curves from metrics CSVs");
    plot->add_option("--csv", csvs, "metrics.csv produced by run (repeatable)")->required();
    plot->add_option("--out", out_dir, "output directory");
    CLI::App* verify = app.add_subcommand("verify", "run the fast invariant checklist");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(config_path, out_dir, overrides);
        if (pstats->parsed()) return cmd_partition_stats(config_path, out_dir, overrides);
        if (ereport->parsed()) return cmd_entropy_report(config_path, out_dir, overrides);
        if (plot->parsed()) return cmd_plot(csvs, out_dir);
        if (verify->parsed()) return cmd_verify();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
    return 0;
}
