#include "fedsim/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "fedsim/svg.hpp"

namespace fedsim::orch {

const char* kMetricsCsvHeader =
    "round,client_id,client_acc,personalized_acc,global_acc,align_loss_pre,align_loss_post,seconds";

double accuracy(const ModelArchitecture& arch, const nn::ParameterSet& params,
                const data::LabeledDataset& ds, const WorkerPool* pool) {
    const std::size_t n = ds.size();
    if (n == 0) throw InputError("accuracy: empty evaluation set");
    const std::size_t chunk = 128;
    const std::size_t chunks = (n + chunk - 1) / chunk;
    std::vector<std::size_t> correct(chunks, 0);

    auto eval_chunk = [&](std::size_t ci) {
        const std::size_t lo = ci * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        std::vector<std::size_t> idx(hi - lo);
        std::iota(idx.begin(), idx.end(), lo);
        auto [batch, labels] = data::gather(ds, idx);
        Tensor logits = nn::forward(arch, params, batch).logits;
        const std::size_t c = arch.num_classes;
        std::size_t hits = 0;
        for (std::size_t s = 0; s < labels.size(); ++s) {
            const double* row = logits.data() + s * c;
            std::size_t best = 0;
            for (std::size_t k = 1; k < c; ++k) {
                if (row[k] > row[best]) best = k;
            }
            if (static_cast<int>(best) == labels[s]) ++hits;
        }
        correct[ci] = hits;
    };

    if (pool) {
        pool->parallel_for(chunks, eval_chunk);
    } else {
        for (std::size_t ci = 0; ci < chunks; ++ci) eval_chunk(ci);
    }
    std::size_t total = 0;
    for (std::size_t c : correct) total += c;
    return static_cast<double>(total) / static_cast<double>(n);
}

Simulation::Simulation(RunConfig cfg, std::vector<data::ClientDataset> shards,
                       data::LabeledDataset full_test)
    : cfg_(std::move(cfg)),
      shards_(std::move(shards)),
      full_test_(std::move(full_test)),
      pool_(resolve_threads(cfg_.threads)) {
    if (shards_.size() != static_cast<std::size_t>(cfg_.num_clients)) {
        throw InputError("simulation: shard count does not match run.clients");
    }
    const std::size_t classes = shards_.front().train.num_classes;
    family_ = zoo::build_family(cfg_.models.scale, classes);

    clients_.resize(shards_.size());
    for (std::size_t i = 0; i < shards_.size(); ++i) {
        const std::string name = cfg_.assignment_name(static_cast<int>(i));
        const ModelArchitecture* arch = nullptr;
        for (const ModelArchitecture& m : family_) {
            if (m.name.ends_with("-" + name)) arch = &m;
        }
        if (!arch) throw ConfigError("models.assignment: unknown architecture '" + name + "'");
        ClientState& c = clients_[i];
        c.id = static_cast<int>(i);
        c.arch = arch;
        c.params = nn::init_params(*arch, cfg_.seed * 10007ULL + i);
        c.opt = nn::make_optimizer_state(*arch);
        c.train_rng = Rng(cfg_.seed * 15485863ULL + 7ULL + i);
        models_.emplace_back(c.id, arch);
    }
    snapshots_.resize(clients_.size());
}

void Simulation::train_client(std::size_t i) {
    ClientState& c = clients_[i];
    const data::LabeledDataset& train = shards_[i].train;
    const std::size_t n = train.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    const std::size_t bs = static_cast<std::size_t>(cfg_.batch_size);
    for (int epoch = 0; epoch < cfg_.local_epochs; ++epoch) {
        c.train_rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += bs) {
            const std::size_t end = std::min(n, start + bs);
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(end));
            auto [batch, labels] = data::gather(train, idx);
            nn::TaskGradients g = nn::backward_task_loss(*c.arch, c.params, batch, labels);
            nn::sgd_step(c.params, g, c.opt, cfg_.sgd);
        }
    }
}

std::pair<std::vector<double>, double> Simulation::evaluate_personalized() {
    std::vector<double> accs(clients_.size(), 0.0);
    pool_.parallel_for(clients_.size(), [&](std::size_t i) {
        accs[i] = accuracy(*clients_[i].arch, clients_[i].params, shards_[i].test);
    });
    double mean = 0.0;
    for (double a : accs) mean += a;
    mean /= static_cast<double>(accs.size());
    return {std::move(accs), mean};
}

double Simulation::evaluate_global(const data::LabeledDataset& test) const {
    if (!global_arch_) throw InputError("evaluate_global: no aggregated model yet");
    return accuracy(*global_arch_, global_params_, test, &pool_);
}

RoundMetrics Simulation::run_round() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t m = clients_.size();
    round_ += 1;

    // Label histograms are static, so the entropy weights are computed once.
    if (cfg_.strategy == Strategy::fedppa_plus && !entropy_) {
        entropy_ = data::entropy_weights(shards_);
    }

    pool_.parallel_for(m, [&](std::size_t i) { train_client(i); });
    for (std::size_t i = 0; i < m; ++i) snapshots_[i] = clients_[i].params;

    agg::ParamsByClient by_client;
    for (const ClientState& c : clients_) by_client.emplace(c.id, &c.params);

    std::map<int, nn::ParameterSet> aggregated;
    heads_shared_ = false;

    if (cfg_.strategy == Strategy::fedavg) {
        const std::vector<agg::ArchGroup> groups = agg::group_by_architecture(models_);
        aggregated = agg::fedavg_aggregate(groups, by_client);
        std::size_t best = 0;
        for (std::size_t gi = 1; gi < groups.size(); ++gi) {
            if (groups[gi].members.size() > groups[best].members.size()) best = gi;
        }
        global_cluster_id_ = static_cast<int>(best);
        global_cluster_size_ = groups[best].members.size();
        const int repr = groups[best].members.front();
        global_arch_ = clients_[static_cast<std::size_t>(repr)].arch;
        global_params_ = aggregated.at(repr);
        for (const agg::ArchGroup& g : groups) heads_shared_ = heads_shared_ || g.members.size() > 1;
        clusters_.clear();
    } else {
        clusters_ = zoo::extract_max_common_layers(models_);
        for (const zoo::CommonLayerSet& cl : clusters_) {
            std::map<int, nn::ParameterSet> part;
            if (cfg_.strategy == Strategy::fedppa_plus) {
                part = agg::aggregate_entropy(cl, by_client, *entropy_, cfg_.eq7_literal);
            } else {
                part = agg::aggregate_uniform(cl, by_client);
            }
            for (auto& [id, ps] : part) aggregated[id] = std::move(ps);
            for (const auto& g : cl.groups) {
                const ClientState& any = clients_[static_cast<std::size_t>(g.contributors.front())];
                if (g.layer_index + 1 == any.arch->layers.size() &&
                    any.arch->layers[g.layer_index].kind == LayerKind::dense) {
                    heads_shared_ = true;
                }
            }
        }
        std::size_t best = 0;
        for (std::size_t ci = 1; ci < clusters_.size(); ++ci) {
            if (clusters_[ci].members.size() > clusters_[best].members.size()) best = ci;
        }
        global_cluster_id_ = clusters_[best].cluster_id;
        global_cluster_size_ = clusters_[best].members.size();
        const int repr = clusters_[best].members.front();
        global_arch_ = clients_[static_cast<std::size_t>(repr)].arch;
        global_params_ = aggregated.at(repr);  // pre-alignment server-side copy
    }

    RoundMetrics rm;
    rm.round = round_;
    rm.align_pre.assign(m, 0.0);
    rm.align_post.assign(m, 0.0);
    rm.global_acc = evaluate_global(full_test_);

    const bool aligns = cfg_.strategy == Strategy::fedppa || cfg_.strategy == Strategy::fedppa_plus;
    if (aligns) {
        std::map<int, const std::vector<std::size_t>*> common;
        for (const zoo::CommonLayerSet& cl : clusters_) {
            for (const auto& [id, idx] : cl.common_indices) common.emplace(id, &idx);
        }
        pool_.parallel_for(m, [&](std::size_t i) {
            const ClientState& c = clients_[i];
            auto [aligned, report] = align::progressive_align(
                *c.arch, std::move(aggregated.at(c.id)), snapshots_[i], shards_[i],
                *common.at(c.id), cfg_.alignment);
            aggregated.at(c.id) = std::move(aligned);
            rm.align_pre[i] = report.total_pre();
            rm.align_post[i] = report.total_post();
        });
    }

    for (std::size_t i = 0; i < m; ++i) {
        clients_[i].params = std::move(aggregated.at(clients_[i].id));
    }

    auto [accs, mean] = evaluate_personalized();
    rm.client_acc = std::move(accs);
    rm.personalized_acc = mean;
    if (cfg_.timing) {
        rm.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    return rm;
}

data::LabeledDataset build_dataset(const RunConfig& cfg) {
    data::LabeledDataset ds;
    if (cfg.data.source == DataConfig::Source::synth) {
        ds = data::synth_dataset(cfg.data.classes, cfg.data.per_class, cfg.data_seed());
    } else {
        ds = data::load_idx(cfg.data.images, cfg.data.labels);
    }
    return data::head_subset(ds, cfg.data.limit);
}

std::vector<data::ClientDataset> build_shards(const RunConfig& cfg,
                                              const data::LabeledDataset& ds) {
    data::PartitionConfig pc = cfg.partition;
    pc.num_clients = static_cast<std::size_t>(cfg.num_clients);
    return data::partition_dirichlet(ds, pc);
}

data::LabeledDataset combined_test_pool(const std::vector<data::ClientDataset>& shards) {
    data::LabeledDataset pool;
    pool.num_classes = shards.front().test.num_classes;
    std::size_t total = 0;
    for (const auto& s : shards) total += s.test.size();
    const auto& shape0 = shards.front().test.images.shape;
    pool.images = Tensor::zeros({total, shape0[1], shape0[2], shape0[3]});
    pool.labels.reserve(total);
    std::size_t off = 0;
    for (const auto& s : shards) {
        std::copy(s.test.images.v.begin(), s.test.images.v.end(), pool.images.v.begin() + static_cast<std::ptrdiff_t>(off));
        off += s.test.images.numel();
        pool.labels.insert(pool.labels.end(), s.test.labels.begin(), s.test.labels.end());
    }
    return pool;
}

namespace {

std::string csv_row(const RoundMetrics& rm, std::size_t client) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%d,%zu,%.6f,%.6f,%.6f,%.9e,%.9e,%.3f", rm.round, client,
                  rm.client_acc[client], rm.personalized_acc, rm.global_acc,
                  rm.align_pre[client], rm.align_post[client], rm.seconds);
    return buf;
}

}  // namespace

ExperimentResult run_experiment(const RunConfig& cfg, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    const std::string csv_path = out_dir + "/metrics.csv";
    std::ofstream csv(csv_path, std::ios::binary | std::ios::trunc);
    if (!csv) throw Error("cannot write " + csv_path);
    csv << kMetricsCsvHeader << "\n";
    csv.flush();

    data::LabeledDataset ds = build_dataset(cfg);
    std::vector<data::ClientDataset> shards = build_shards(cfg, ds);
    data::LabeledDataset full_test = combined_test_pool(shards);
    Simulation sim(cfg, std::move(shards), std::move(full_test));

    ExperimentResult res;
    for (int round = 1; round <= cfg.rounds; ++round) {
        RoundMetrics rm;
        try {
            rm = sim.run_round();
        } catch (const std::exception& e) {
            std::ofstream crash(out_dir + "/crash_report.txt", std::ios::trunc);
            crash << "round = " << round << "\n"
                  << "seed = " << cfg.seed << "\n"
                  << "strategy = " << to_string(cfg.strategy) << "\n"
                  << "error = " << e.what() << "\n";
            throw;
        }
        for (std::size_t i = 0; i < sim.num_clients(); ++i) {
            csv << csv_row(rm, i) << "\n";
        }
        csv.flush();  // crash-safe: rows land as soon as the round ends
        res.rounds.push_back(std::move(rm));
    }

    for (const RoundMetrics& rm : res.rounds) {
        if (rm.personalized_acc > res.best_personalized) {
            res.best_personalized = rm.personalized_acc;
            res.best_personalized_round = rm.round;
        }
        if (rm.global_acc > res.best_global) {
            res.best_global = rm.global_acc;
            res.best_global_round = rm.round;
        }
    }

    {
        std::ofstream sum(out_dir + "/summary.txt", std::ios::binary | std::ios::trunc);
        char buf[128];
        sum << "strategy = " << to_string(cfg.strategy) << "\n";
        sum << "clients = " << cfg.num_clients << "\n";
        sum << "rounds = " << cfg.rounds << "\n";
        std::snprintf(buf, sizeof buf, "%.6f", cfg.partition.alpha);
        sum << "alpha = " << buf << "\n";
        sum << "seed = " << cfg.seed << "\n";
        std::snprintf(buf, sizeof buf, "%.6f", res.best_personalized);
        sum << "best_personalized_accuracy = " << buf << "\n";
        sum << "best_personalized_round = " << res.best_personalized_round << "\n";
        std::snprintf(buf, sizeof buf, "%.6f", res.best_global);
        sum << "best_global_accuracy = " << buf << "\n";
        sum << "best_global_round = " << res.best_global_round << "\n";
        sum << "global_model_cluster = " << sim.global_cluster_id() << "\n";
        sum << "global_model_cluster_size = " << sim.global_cluster_size() << "\n";
        sum << "global_model_arch = " << sim.global_arch_name() << "\n";
        sum << "head_layers_shared = " << (sim.heads_shared() ? "true" : "false") << "\n";
    }

    {
        svg::Series pers{"personalized", {}, {}};
        svg::Series glob{"global", {}, {}};
        for (const RoundMetrics& rm : res.rounds) {
            pers.x.push_back(rm.round);
            pers.y.push_back(rm.personalized_acc);
            glob.x.push_back(rm.round);
            glob.y.push_back(rm.global_acc);
        }
        svg::write_file(out_dir + "/accuracy.svg",
                        svg::line_chart("accuracy vs round (" + to_string(cfg.strategy) + ")",
                                        "round", "accuracy", {pers, glob}));
    }
    return res;
}

}  // namespace fedsim::orch
