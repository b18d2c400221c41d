#include "fedsim/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "fedsim/rng.hpp"

namespace fedsim::data {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::uint32_t read_u32_be(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw FormatError(path + ": truncated IDX header");
    }
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

void write_u32_be(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imf(images_path, std::ios::binary);
    if (!imf) throw FormatError(images_path + ": cannot open");
    std::uint32_t magic = read_u32_be(imf, images_path);
    if (magic != kImagesMagic) {
        throw FormatError(images_path + ": bad IDX magic for an image file");
    }
    std::uint32_t n = read_u32_be(imf, images_path);
    std::uint32_t h = read_u32_be(imf, images_path);
    std::uint32_t w = read_u32_be(imf, images_path);
    std::vector<unsigned char> pixels(static_cast<std::size_t>(n) * h * w);
    if (!imf.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()))) {
        throw FormatError(images_path + ": truncated image data");
    }

    std::ifstream lbf(labels_path, std::ios::binary);
    if (!lbf) throw FormatError(labels_path + ": cannot open");
    magic = read_u32_be(lbf, labels_path);
    if (magic != kLabelsMagic) {
        throw FormatError(labels_path + ": bad IDX magic for a label file");
    }
    std::uint32_t ln = read_u32_be(lbf, labels_path);
    if (ln != n) {
        throw FormatError(labels_path + ": label count does not match image count");
    }
    std::vector<unsigned char> raw_labels(ln);
    if (!lbf.read(reinterpret_cast<char*>(raw_labels.data()), static_cast<std::streamsize>(ln))) {
        throw FormatError(labels_path + ": truncated label data");
    }

    LabeledDataset ds;
    ds.images = Tensor::zeros({n, 1, h, w});
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        ds.images.v[i] = static_cast<double>(pixels[i]) / 255.0;
    }
    ds.labels.reserve(ln);
    int max_label = 0;
    for (unsigned char y : raw_labels) {
        ds.labels.push_back(static_cast<int>(y));
        max_label = std::max(max_label, static_cast<int>(y));
    }
    ds.num_classes = static_cast<std::size_t>(max_label) + 1;
    return ds;
}

void write_idx(const LabeledDataset& ds, const std::string& images_path,
               const std::string& labels_path) {
    if (ds.images.shape.size() != 4 || ds.images.shape[1] != 1) {
        throw DimensionError("write_idx expects (N,1,H,W) images");
    }
    const std::uint32_t n = static_cast<std::uint32_t>(ds.images.shape[0]);
    const std::uint32_t h = static_cast<std::uint32_t>(ds.images.shape[2]);
    const std::uint32_t w = static_cast<std::uint32_t>(ds.images.shape[3]);

    std::ofstream imf(images_path, std::ios::binary);
    if (!imf) throw FormatError(images_path + ": cannot open for writing");
    write_u32_be(imf, kImagesMagic);
    write_u32_be(imf, n);
    write_u32_be(imf, h);
    write_u32_be(imf, w);
    for (double v : ds.images.v) {
        double q = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
        unsigned char b = static_cast<unsigned char>(q);
        imf.write(reinterpret_cast<const char*>(&b), 1);
    }

    std::ofstream lbf(labels_path, std::ios::binary);
    if (!lbf) throw FormatError(labels_path + ": cannot open for writing");
    write_u32_be(lbf, kLabelsMagic);
    write_u32_be(lbf, n);
    for (int y : ds.labels) {
        unsigned char b = static_cast<unsigned char>(y);
        lbf.write(reinterpret_cast<const char*>(&b), 1);
    }
}

LabeledDataset synth_dataset(std::size_t num_classes, std::size_t per_class, std::uint64_t seed) {
    if (per_class < 1) throw InputError("synth_dataset: per_class must be >= 1");
    const std::size_t h = 28, w = 28, d = h * w;
    Rng rng(seed);
    LabeledDataset ds;
    ds.num_classes = num_classes;
    ds.images = Tensor::zeros({num_classes * per_class, 1, h, w});
    ds.labels.resize(num_classes * per_class);

    std::size_t pos = 0;
    for (std::size_t c = 0; c < num_classes; ++c) {
        std::vector<double> mean(d);
        for (double& m : mean) m = rng.uniform(0.15, 0.85);
        for (std::size_t s = 0; s < per_class; ++s) {
            double* img = ds.images.data() + pos * d;
            for (std::size_t i = 0; i < d; ++i) {
                img[i] = std::clamp(mean[i] + 0.25 * rng.normal(), 0.0, 1.0);
            }
            ds.labels[pos] = static_cast<int>(c);
            ++pos;
        }
    }
    return ds;
}

LabeledDataset head_subset(const LabeledDataset& ds, std::size_t limit) {
    if (limit == 0 || limit >= ds.size()) return ds;
    const std::size_t d = ds.images.numel() / ds.size();
    LabeledDataset out;
    out.num_classes = ds.num_classes;
    out.images = Tensor({limit, ds.images.shape[1], ds.images.shape[2], ds.images.shape[3]},
                        std::vector<double>(ds.images.v.begin(),
                                            ds.images.v.begin() + static_cast<std::ptrdiff_t>(limit * d)));
    out.labels.assign(ds.labels.begin(), ds.labels.begin() + static_cast<std::ptrdiff_t>(limit));
    return out;
}

std::pair<Tensor, std::vector<int>> gather(const LabeledDataset& ds,
                                           const std::vector<std::size_t>& indices) {
    const std::size_t d = ds.images.numel() / ds.size();
    Tensor batch = Tensor::zeros(
        {indices.size(), ds.images.shape[1], ds.images.shape[2], ds.images.shape[3]});
    std::vector<int> labels(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const double* src = ds.images.data() + indices[i] * d;
        std::copy(src, src + d, batch.data() + i * d);
        labels[i] = ds.labels[indices[i]];
    }
    return {std::move(batch), std::move(labels)};
}

namespace {

LabeledDataset subset_of(const LabeledDataset& ds, const std::vector<std::size_t>& idx) {
    auto [images, labels] = gather(ds, idx);
    LabeledDataset out;
    out.images = std::move(images);
    out.labels = std::move(labels);
    out.num_classes = ds.num_classes;
    return out;
}

}  // namespace

std::vector<ClientDataset> partition_dirichlet(const LabeledDataset& ds,
                                               const PartitionConfig& cfg) {
    if (ds.size() == 0) throw InputError("partition_dirichlet: empty dataset");
    if (cfg.alpha <= 0.0) throw InputError("partition_dirichlet: alpha must be positive");
    if (cfg.num_clients < 1) throw InputError("partition_dirichlet: need at least one client");
    if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0)) {
        throw InputError("partition_dirichlet: train_fraction must lie in (0,1)");
    }
    const std::size_t m = cfg.num_clients;

    std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
    }

    for (int attempt = 0; attempt < 100; ++attempt) {
        Rng rng(cfg.seed * 1000003ULL + static_cast<std::uint64_t>(attempt));
        std::vector<std::vector<std::size_t>> assigned(m);

        for (std::size_t c = 0; c < ds.num_classes; ++c) {
            std::vector<std::size_t> idx = by_class[c];
            if (idx.empty()) continue;
            rng.shuffle(idx);
            std::vector<double> p = rng.dirichlet(cfg.alpha, m);
            double cum = 0.0;
            std::size_t start = 0;
            for (std::size_t k = 0; k < m; ++k) {
                cum += p[k];
                std::size_t end = k + 1 == m
                                      ? idx.size()
                                      : std::min(idx.size(), static_cast<std::size_t>(
                                                                 cum * static_cast<double>(idx.size())));
                for (std::size_t i = start; i < end; ++i) assigned[k].push_back(idx[i]);
                start = std::max(start, end);
            }
        }

        bool viable = true;
        for (const auto& a : assigned) {
            if (a.size() < 2) {  // need at least one train and one test sample
                viable = false;
                break;
            }
        }
        if (!viable) continue;

        std::vector<ClientDataset> shards;
        shards.reserve(m);
        for (std::size_t k = 0; k < m; ++k) {
            Rng crng(cfg.seed * 7919ULL + 104729ULL * static_cast<std::uint64_t>(attempt) + k);
            std::vector<std::size_t> idx = assigned[k];
            crng.shuffle(idx);
            std::size_t train_n = static_cast<std::size_t>(
                cfg.train_fraction * static_cast<double>(idx.size()));
            train_n = std::clamp<std::size_t>(train_n, 1, idx.size() - 1);

            ClientDataset cd;
            cd.client_id = static_cast<int>(k);
            cd.train = subset_of(ds, {idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(train_n)});
            cd.test = subset_of(ds, {idx.begin() + static_cast<std::ptrdiff_t>(train_n), idx.end()});
            cd.label_histogram.assign(ds.num_classes, 0);
            for (int y : cd.train.labels) cd.label_histogram[static_cast<std::size_t>(y)]++;
            shards.push_back(std::move(cd));
        }
        return shards;
    }
    throw InputError("partition_dirichlet: a client received too few samples after 100 attempts (seed " +
                     std::to_string(cfg.seed) + ", alpha " + std::to_string(cfg.alpha) + ")");
}

EntropyWeights entropy_weights(const std::vector<ClientDataset>& shards) {
    EntropyWeights w;
    w.raw_entropy.reserve(shards.size());
    for (const ClientDataset& cd : shards) {
        if (cd.train.size() == 0) throw InputError("entropy_weights: empty client shard");
        const double total = static_cast<double>(cd.train.size());
        double h = 0.0;
        for (std::size_t count : cd.label_histogram) {
            if (count == 0) continue;
            double q = static_cast<double>(count) / total;
            h -= q * std::log(q);
        }
        w.raw_entropy.push_back(h);
    }
    double sum = 0.0;
    for (double h : w.raw_entropy) sum += h;
    w.normalized.resize(shards.size());
    if (sum == 0.0) {
        std::fill(w.normalized.begin(), w.normalized.end(), 1.0 / static_cast<double>(shards.size()));
    } else {
        for (std::size_t i = 0; i < shards.size(); ++i) w.normalized[i] = w.raw_entropy[i] / sum;
    }
    return w;
}

}  // namespace fedsim::data
