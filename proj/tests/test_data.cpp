#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "fedsim/data.hpp"
#include "fedsim/model_zoo.hpp"
#include "fedsim/nn.hpp"
#include "fedsim/rng.hpp"

using namespace fedsim;

namespace {

std::string temp_dir() {
    static int counter = 0;
    std::string dir =
        (std::filesystem::temp_directory_path() / ("fedsim_data_" + std::to_string(counter++)))
            .string();
    std::filesystem::create_directories(dir);
    return dir;
}

void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> read_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void push_u32(std::vector<unsigned char>& v, std::uint32_t x) {
    v.push_back(static_cast<unsigned char>(x >> 24));
    v.push_back(static_cast<unsigned char>(x >> 16));
    v.push_back(static_cast<unsigned char>(x >> 8));
    v.push_back(static_cast<unsigned char>(x));
}

// hand-built 4-image IDX pair (independent of write_idx)
std::pair<std::string, std::string> make_fixture(const std::string& dir) {
    std::vector<unsigned char> img;
    push_u32(img, 0x00000803);
    push_u32(img, 4);
    push_u32(img, 28);
    push_u32(img, 28);
    for (std::uint32_t i = 0; i < 4 * 28 * 28; ++i) img.push_back(static_cast<unsigned char>((i * 7 + 13) % 256));
    std::vector<unsigned char> lbl;
    push_u32(lbl, 0x00000801);
    push_u32(lbl, 4);
    for (unsigned char y : {3, 1, 4, 1}) lbl.push_back(y);
    std::string ip = dir + "/fix-images-idx3-ubyte", lp = dir + "/fix-labels-idx1-ubyte";
    write_bytes(ip, img);
    write_bytes(lp, lbl);
    return {ip, lp};
}

// balanced label-only dataset; image pixel 0 carries the sample index so
// partition membership can be traced back
data::LabeledDataset traceable(std::size_t classes, std::size_t per_class) {
    data::LabeledDataset ds;
    ds.num_classes = classes;
    const std::size_t n = classes * per_class;
    ds.images = Tensor::zeros({n, 1, 1, 1});
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        ds.images.v[i] = static_cast<double>(i);
        ds.labels[i] = static_cast<int>(i % classes);
    }
    return ds;
}

double histogram_variance(const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    return var / static_cast<double>(v.size());
}

}  // namespace

TEST_CASE("load_idx reads the hand-built fixture") {
    std::string dir = temp_dir();
    auto [ip, lp] = make_fixture(dir);
    data::LabeledDataset ds = data::load_idx(ip, lp);
    CHECK(ds.size() == 4);
    CHECK(ds.images.shape == std::vector<std::size_t>{4, 1, 28, 28});
    CHECK(ds.labels == std::vector<int>{3, 1, 4, 1});
    CHECK(ds.images.v[0] == doctest::Approx(13.0 / 255.0).epsilon(1e-12));
    for (double v : ds.images.v) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("load_idx rejects wrong magic, truncation and count mismatch") {
    std::string dir = temp_dir();
    auto [ip, lp] = make_fixture(dir);

    // labels file with the image magic
    std::vector<unsigned char> bad;
    push_u32(bad, 0x00000803);
    push_u32(bad, 4);
    for (unsigned char y : {1, 2, 3, 0}) bad.push_back(y);
    write_bytes(dir + "/badmagic", bad);
    CHECK_THROWS_AS(data::load_idx(ip, dir + "/badmagic"), FormatError);

    std::vector<unsigned char> img = read_bytes(ip);
    img.resize(img.size() - 10);
    write_bytes(dir + "/trunc", img);
    CHECK_THROWS_AS(data::load_idx(dir + "/trunc", lp), FormatError);

    std::vector<unsigned char> fewer;
    push_u32(fewer, 0x00000801);
    push_u32(fewer, 3);
    for (unsigned char y : {1, 2, 3}) fewer.push_back(y);
    write_bytes(dir + "/fewer", fewer);
    CHECK_THROWS_AS(data::load_idx(ip, dir + "/fewer"), FormatError);

    CHECK_THROWS_AS(data::load_idx(dir + "/missing", lp), FormatError);
}

TEST_CASE("write_idx(load_idx(f)) reproduces f byte for byte") {
    std::string dir = temp_dir();
    auto [ip, lp] = make_fixture(dir);
    data::LabeledDataset ds = data::load_idx(ip, lp);
    data::write_idx(ds, dir + "/rt-images", dir + "/rt-labels");
    CHECK(read_bytes(dir + "/rt-images") == read_bytes(ip));
    CHECK(read_bytes(dir + "/rt-labels") == read_bytes(lp));
}

TEST_CASE("synth_dataset is balanced, bounded and seed-deterministic") {
    data::LabeledDataset ds = data::synth_dataset(10, 10, 7);
    CHECK(ds.size() == 100);
    CHECK(ds.images.shape == std::vector<std::size_t>{100, 1, 28, 28});
    std::vector<int> hist(10, 0);
    for (int y : ds.labels) hist[static_cast<std::size_t>(y)]++;
    for (int c : hist) CHECK(c == 10);
    for (double v : ds.images.v) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }

    data::LabeledDataset again = data::synth_dataset(10, 10, 7);
    CHECK(ds.images.v == again.images.v);
    CHECK(ds.labels == again.labels);
    CHECK(data::synth_dataset(10, 10, 8).images.v != ds.images.v);
}

TEST_CASE("a one-layer probe separates the synthetic blobs at >= 0.95") {
    data::LabeledDataset ds = data::synth_dataset(4, 200, 1);
    ModelArchitecture probe = zoo::probe_architecture(4);
    nn::ParameterSet params = nn::init_params(probe, 2);
    nn::OptimizerState opt = nn::make_optimizer_state(probe);
    nn::SgdConfig sgd{0.1, 0.9, 0.0};

    Rng rng(3);
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < 20; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += 32) {
            std::size_t end = std::min(order.size(), start + 32);
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(end));
            auto [batch, labels] = data::gather(ds, idx);
            nn::TaskGradients g = nn::backward_task_loss(probe, params, batch, labels);
            nn::sgd_step(params, g, opt, sgd);
        }
    }

    // naive argmax evaluation, independent of the library's accuracy path
    std::vector<std::size_t> all(ds.size());
    std::iota(all.begin(), all.end(), 0);
    auto [batch, labels] = data::gather(ds, all);
    Tensor logits = nn::forward(probe, params, batch).logits;
    std::size_t hits = 0;
    for (std::size_t s = 0; s < ds.size(); ++s) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < 4; ++k) {
            if (logits.v[s * 4 + k] > logits.v[s * 4 + best]) best = k;
        }
        if (static_cast<int>(best) == labels[s]) ++hits;
    }
    CHECK(static_cast<double>(hits) / static_cast<double>(ds.size()) >= 0.95);
}

TEST_CASE("near-IID partition spreads every class about evenly") {
    data::LabeledDataset ds = traceable(10, 400);
    auto shards = data::partition_dirichlet(ds, {1e6, 8, 5, 0.8});
    REQUIRE(shards.size() == 8);
    for (const auto& s : shards) {
        const double expected = 4000.0 * 0.8 / 8.0 / 10.0;
        for (std::size_t c = 0; c < 10; ++c) {
            CHECK(std::abs(static_cast<double>(s.label_histogram[c]) - expected) / expected <= 0.2);
        }
        CHECK(s.label_histogram == [&] {
            std::vector<std::size_t> h(10, 0);
            for (int y : s.train.labels) h[static_cast<std::size_t>(y)]++;
            return h;
        }());
    }
}

TEST_CASE("partition is a true set-partition: disjoint and covering") {
    data::LabeledDataset ds = traceable(7, 60);
    for (std::uint64_t seed : {1ULL, 9ULL, 77ULL}) {
        auto shards = data::partition_dirichlet(ds, {0.3, 5, seed, 0.75});
        std::multiset<long> seen;
        for (const auto& s : shards) {
            for (double v : s.train.images.v) seen.insert(std::lround(v));
            for (double v : s.test.images.v) seen.insert(std::lround(v));
            CHECK(s.train.size() >= 1);
            CHECK(s.test.size() >= 1);
        }
        REQUIRE(seen.size() == ds.size());
        long expect = 0;
        for (long idx : seen) CHECK(idx == expect++);  // each index exactly once
    }
}

TEST_CASE("partition is bytewise deterministic in (dataset, config)") {
    data::LabeledDataset ds = traceable(10, 50);
    auto a = data::partition_dirichlet(ds, {0.1, 6, 42, 0.8});
    auto b = data::partition_dirichlet(ds, {0.1, 6, 42, 0.8});
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].train.images.v == b[i].train.images.v);
        CHECK(a[i].train.labels == b[i].train.labels);
        CHECK(a[i].test.images.v == b[i].test.images.v);
        CHECK(a[i].label_histogram == b[i].label_histogram);
    }
    auto c = data::partition_dirichlet(ds, {0.1, 6, 43, 0.8});
    CHECK(a[0].train.labels != c[0].train.labels);
}

TEST_CASE("extreme skew leaves clients with one or two effective labels") {
    // median (over clients and 20 seeds) of classes holding >= 1% share
    data::LabeledDataset ds = traceable(10, 400);
    std::vector<int> counts;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        auto shards = data::partition_dirichlet(ds, {0.01, 8, seed, 0.8});
        for (const auto& s : shards) {
            int rich = 0;
            for (std::size_t c = 0; c < 10; ++c) {
                if (static_cast<double>(s.label_histogram[c]) >=
                    0.01 * static_cast<double>(s.train.size()))
                    ++rich;
            }
            counts.push_back(rich);
        }
    }
    std::sort(counts.begin(), counts.end());
    CHECK(counts[counts.size() / 2] <= 2);
}

TEST_CASE("unsatisfiable partitions fail with a seeded input error") {
    // 3 samples among 8 clients can never give everyone two
    data::LabeledDataset ds = traceable(3, 1);
    CHECK_THROWS_AS(data::partition_dirichlet(ds, {0.5, 8, 4, 0.8}), InputError);
    CHECK_THROWS_AS(data::partition_dirichlet(data::LabeledDataset{}, {0.5, 2, 4, 0.8}),
                    InputError);
    CHECK_THROWS_AS(data::partition_dirichlet(ds, {-1.0, 2, 4, 0.8}), InputError);
}

TEST_CASE("entropy weights: degenerate, symmetric and hand-computed cases") {
    auto shard_with = [](std::vector<std::size_t> hist) {
        data::ClientDataset cd;
        std::size_t n = 0;
        for (std::size_t h : hist) n += h;
        cd.train.num_classes = hist.size();
        cd.train.images = Tensor::zeros({n, 1, 1, 1});
        for (std::size_t c = 0, i = 0; c < hist.size(); ++c) {
            for (std::size_t k = 0; k < hist[c]; ++k) cd.train.labels.push_back(static_cast<int>(c)), ++i;
        }
        cd.label_histogram = std::move(hist);
        return cd;
    };

    SUBCASE("single-label client has zero entropy") {
        auto w = data::entropy_weights({shard_with({40, 0}), shard_with({10, 10})});
        CHECK(w.raw_entropy[0] == 0.0);
        CHECK(w.normalized[0] == 0.0);
        CHECK(w.normalized[1] == 1.0);
    }

    SUBCASE("uniform clients share weight equally") {
        std::vector<data::ClientDataset> shards;
        for (int i = 0; i < 5; ++i) shards.push_back(shard_with({20, 20, 20, 20, 20, 20, 20, 20, 20, 20}));
        auto w = data::entropy_weights(shards);
        for (double e : w.normalized) CHECK(e == doctest::Approx(0.2).epsilon(1e-12));
    }

    SUBCASE("all-zero entropies fall back to uniform") {
        auto w = data::entropy_weights({shard_with({7, 0}), shard_with({0, 9})});
        CHECK(w.normalized[0] == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(w.normalized[1] == doctest::Approx(0.5).epsilon(1e-15));
    }

    SUBCASE("hand-computed two-client case") {
        auto w = data::entropy_weights({shard_with({50, 50}), shard_with({90, 10})});
        CHECK(w.raw_entropy[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
        CHECK(w.raw_entropy[1] == doctest::Approx(0.3251).epsilon(1e-3));
        CHECK(w.normalized[0] == doctest::Approx(0.6807).epsilon(1e-3));
        CHECK(w.normalized[1] == doctest::Approx(0.3193).epsilon(1e-3));
    }
}

TEST_CASE("entropy weights sum to one within 1e-12 on random shards") {
    data::LabeledDataset ds = traceable(10, 100);
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto shards = data::partition_dirichlet(ds, {0.1, 8, seed, 0.8});
        auto w = data::entropy_weights(shards);
        double sum = 0.0;
        for (double e : w.normalized) {
            CHECK(e >= 0.0);
            sum += e;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
}

TEST_CASE("weight spread grows monotonically as alpha shrinks") {
    data::LabeledDataset ds = traceable(10, 200);
    double mean_var[3] = {0.0, 0.0, 0.0};
    const double alphas[3] = {0.5, 0.1, 0.01};
    const int seeds = 20;
    for (int ai = 0; ai < 3; ++ai) {
        for (std::uint64_t seed = 1; seed <= seeds; ++seed) {
            auto shards = data::partition_dirichlet(ds, {alphas[ai], 8, seed, 0.8});
            mean_var[ai] += histogram_variance(data::entropy_weights(shards).normalized);
        }
        mean_var[ai] /= seeds;
    }
    CHECK(mean_var[2] > mean_var[1]);
    CHECK(mean_var[1] > mean_var[0]);
}
