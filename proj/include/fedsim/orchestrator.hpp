#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fedsim/aggregation.hpp"
#include "fedsim/config.hpp"
#include "fedsim/rng.hpp"
#include "fedsim/threading.hpp"

namespace fedsim::orch {

struct RoundMetrics {
    int round = 0;
    std::vector<double> client_acc;
    double personalized_acc = 0.0;
    double global_acc = 0.0;
    std::vector<double> align_pre;   // per client, summed over aligned layers
    std::vector<double> align_post;
    double seconds = 0.0;
};

struct ClientState {
    int id = 0;
    const ModelArchitecture* arch = nullptr;
    nn::ParameterSet params;
    nn::OptimizerState opt;
    Rng train_rng{0};
};

// Argmax accuracy over a labeled set; chunk counts are integers summed in
// order, so the result is worker-count independent.
double accuracy(const ModelArchitecture& arch, const nn::ParameterSet& params,
                const data::LabeledDataset& ds, const WorkerPool* pool = nullptr);

// One federated run over fixed shards. Each round executes: (FedPPA+)
// entropy weights -> local training -> common-layer clustering ->
// aggregation -> (FedPPA/FedPPA+) progressive alignment -> distribution ->
// evaluation.
class Simulation {
public:
    Simulation(RunConfig cfg, std::vector<data::ClientDataset> shards,
               data::LabeledDataset full_test);

    RoundMetrics run_round();
    int round() const { return round_; }

    const RunConfig& config() const { return cfg_; }
    std::size_t num_clients() const { return clients_.size(); }
    const ClientState& client(std::size_t i) const { return clients_[i]; }
    const data::ClientDataset& shard(std::size_t i) const { return shards_[i]; }

    // Model of client i at the end of its latest local training (m_i^t).
    const nn::ParameterSet& local_snapshot(std::size_t i) const { return snapshots_[i]; }

    const std::vector<zoo::CommonLayerSet>& clusters() const { return clusters_; }
    const std::optional<data::EntropyWeights>& entropy() const { return entropy_; }

    std::pair<std::vector<double>, double> evaluate_personalized();
    // Accuracy of the designated global model (largest cluster's
    // pre-alignment aggregate) on an arbitrary test set.
    double evaluate_global(const data::LabeledDataset& test) const;

    int global_cluster_id() const { return global_cluster_id_; }
    std::size_t global_cluster_size() const { return global_cluster_size_; }
    const std::string& global_arch_name() const { return global_arch_->name; }
    bool heads_shared() const { return heads_shared_; }

private:
    void train_client(std::size_t i);

    RunConfig cfg_;
    std::vector<data::ClientDataset> shards_;
    data::LabeledDataset full_test_;
    std::vector<ModelArchitecture> family_;
    std::vector<ClientState> clients_;
    std::vector<std::pair<int, const ModelArchitecture*>> models_;
    std::vector<nn::ParameterSet> snapshots_;
    std::vector<zoo::CommonLayerSet> clusters_;
    std::optional<data::EntropyWeights> entropy_;
    WorkerPool pool_;
    int round_ = 0;

    nn::ParameterSet global_params_;
    const ModelArchitecture* global_arch_ = nullptr;
    int global_cluster_id_ = -1;
    std::size_t global_cluster_size_ = 0;
    bool heads_shared_ = false;
};

struct ExperimentResult {
    std::vector<RoundMetrics> rounds;
    double best_personalized = 0.0;
    int best_personalized_round = 0;
    double best_global = 0.0;
    int best_global_round = 0;
};

// Builds the dataset and shards from the config, runs all rounds, and
// streams metrics.csv (one row per client per round), summary.txt and
// accuracy.svg into out_dir. A failing round leaves crash_report.txt.
ExperimentResult run_experiment(const RunConfig& cfg, const std::string& out_dir);

// Dataset/shard construction shared with the CLI inspection commands.
data::LabeledDataset build_dataset(const RunConfig& cfg);
std::vector<data::ClientDataset> build_shards(const RunConfig& cfg,
                                              const data::LabeledDataset& ds);
data::LabeledDataset combined_test_pool(const std::vector<data::ClientDataset>& shards);

extern const char* kMetricsCsvHeader;

}  // namespace fedsim::orch
