#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedsim/tensor.hpp"

namespace fedsim::data {

struct LabeledDataset {
    Tensor images;  // (N, C, H, W), values in [0, 1]
    std::vector<int> labels;
    std::size_t num_classes = 0;

    std::size_t size() const { return labels.size(); }
};

struct PartitionConfig {
    double alpha = 0.5;
    std::size_t num_clients = 8;
    std::uint64_t seed = 1;
    double train_fraction = 0.8;
};

struct ClientDataset {
    int client_id = 0;
    LabeledDataset train;
    LabeledDataset test;
    std::vector<std::size_t> label_histogram;  // over the train split
};

struct EntropyWeights {
    std::vector<double> raw_entropy;  // H(D)_i, natural log
    std::vector<double> normalized;   // e_i, sums to 1
};

// IDX (big-endian) image/label pair as published for MNIST-style sets.
// Pixels are scaled to [0, 1].
LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path);
void write_idx(const LabeledDataset& ds, const std::string& images_path,
               const std::string& labels_path);

// Deterministic Gaussian class-blob images, 1x28x28, class-major order.
LabeledDataset synth_dataset(std::size_t num_classes, std::size_t per_class, std::uint64_t seed);

// First `limit` samples (0 = all).
LabeledDataset head_subset(const LabeledDataset& ds, std::size_t limit);

// Gathers samples by index into a batch tensor plus labels.
std::pair<Tensor, std::vector<int>> gather(const LabeledDataset& ds,
                                           const std::vector<std::size_t>& indices);

// Per-class Dirichlet(alpha) split into num_clients shards, each further
// divided into train/test by per-client streams. Shards with fewer than
// two samples trigger a re-draw (up to 100 attempts).
std::vector<ClientDataset> partition_dirichlet(const LabeledDataset& ds,
                                               const PartitionConfig& cfg);

// Normalized Shannon entropy of each client's train-label distribution;
// uniform fallback when every client has zero entropy.
EntropyWeights entropy_weights(const std::vector<ClientDataset>& shards);

}  // namespace fedsim::data
