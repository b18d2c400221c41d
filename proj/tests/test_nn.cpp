#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "fedsim/nn.hpp"
#include "fedsim/rng.hpp"
#include "oracles.hpp"

using namespace fedsim;

namespace {

ModelArchitecture flat_arch(std::size_t d_side, std::vector<LayerSpec> tail,
                            std::size_t classes) {
    ModelArchitecture m;
    m.name = "t";
    m.num_classes = classes;
    m.in_c = 1;
    m.in_h = d_side;
    m.in_w = d_side;
    m.layers.push_back(LayerSpec::flattenL());
    for (auto& l : tail) m.layers.push_back(l);
    m.validate();
    return m;
}

Tensor random_batch(Rng& rng, std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    Tensor t = Tensor::zeros({n, c, h, w});
    for (double& x : t.v) x = rng.uniform(-1.0, 1.0);
    return t;
}

}  // namespace

TEST_CASE("identity dense layer reproduces its input") {
    ModelArchitecture arch = flat_arch(2, {LayerSpec::denseL(4, 4)}, 4);
    nn::ParameterSet params = nn::init_params(arch, 1);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 4; ++j) params.layers[1].weight.v[i * 4 + j] = i == j ? 1.0 : 0.0;
    }

    Tensor batch({2, 1, 2, 2}, {0.5, -1.25, 3.0, 0.0, 1.0, 2.0, -0.5, 0.25});
    nn::ForwardResult res = nn::forward(arch, params, batch, {1});
    for (std::size_t s = 0; s < 2; ++s) {
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(res.logits.v[s * 4 + i] == batch.v[s * 4 + i]);
            CHECK(res.features.at(1).at(i, s) == batch.v[s * 4 + i]);
        }
    }
}

TEST_CASE("zero-weight network produces all-zero logits") {
    ModelArchitecture arch = flat_arch(2, {LayerSpec::denseL(4, 6), LayerSpec::reluL(),
                                           LayerSpec::denseL(6, 3)}, 3);
    nn::ParameterSet params = nn::init_params(arch, 3);
    for (auto& lp : params.layers) {
        for (double& x : lp.weight.v) x = 0.0;
        for (double& x : lp.bias.v) x = 0.0;
    }
    Rng rng(9);
    nn::ForwardResult res = nn::forward(arch, params, random_batch(rng, 5, 1, 2, 2));
    for (double x : res.logits.v) CHECK(x == 0.0);
}

TEST_CASE("2-layer MLP forward matches the naive matmul oracle") {
    const std::size_t d = 9, hid = 7, classes = 5, n = 4;
    ModelArchitecture arch = flat_arch(3, {LayerSpec::denseL(d, hid), LayerSpec::denseL(hid, classes)},
                                       classes);
    nn::ParameterSet params = nn::init_params(arch, 42);
    Rng rng(42);
    Tensor batch = random_batch(rng, n, 1, 3, 3);
    Tensor logits = nn::forward(arch, params, batch).logits;

    // oracle: x * W1^T + b1, then * W2^T + b2, via the triple-loop matmul
    auto transpose = [](const Tensor& w, std::size_t rows, std::size_t cols) {
        std::vector<double> t(rows * cols);
        for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < cols; ++j) t[j * rows + i] = w.v[i * cols + j];
        }
        return t;
    };
    std::vector<double> h =
        oracles::naive_matmul(batch.v, transpose(params.layers[1].weight, hid, d), n, d, hid);
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t i = 0; i < hid; ++i) h[s * hid + i] += params.layers[1].bias.v[i];
    }
    std::vector<double> out =
        oracles::naive_matmul(h, transpose(params.layers[2].weight, classes, hid), n, hid, classes);
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t i = 0; i < classes; ++i) {
            out[s * classes + i] += params.layers[2].bias.v[i];
            CHECK(logits.v[s * classes + i] == doctest::Approx(out[s * classes + i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("cross-entropy gradient vanishes at a confident correct prediction") {
    ModelArchitecture arch = flat_arch(2, {LayerSpec::denseL(4, 2)}, 2);
    nn::ParameterSet params = nn::init_params(arch, 7);
    params.layers[1].bias.v = {50.0, -50.0};  // huge margin for class 0
    for (double& x : params.layers[1].weight.v) x = 0.0;

    Tensor batch({1, 1, 2, 2}, {0.1, 0.2, 0.3, 0.4});
    nn::TaskGradients g = nn::backward_task_loss(arch, params, batch, {0});
    double norm = 0.0;
    for (const auto& lp : g.layers) {
        for (double x : lp.weight.v) norm += x * x;
        for (double x : lp.bias.v) norm += x * x;
    }
    CHECK(std::sqrt(norm) < 1e-6);
    CHECK(g.loss < 1e-6);
}

TEST_CASE("softmax gradient at uniform logits equals (softmax - onehot) / batch") {
    // zero net -> uniform logits over 2 classes; label 0, batch of 1
    ModelArchitecture arch = flat_arch(2, {LayerSpec::denseL(4, 2)}, 2);
    nn::ParameterSet params = nn::init_params(arch, 7);
    for (double& x : params.layers[1].weight.v) x = 0.0;
    for (double& x : params.layers[1].bias.v) x = 0.0;

    Tensor batch({1, 1, 2, 2}, {1.0, 1.0, 1.0, 1.0});
    nn::TaskGradients g = nn::backward_task_loss(arch, params, batch, {0});
    // bias gradient IS the logits gradient
    CHECK(g.layers[1].bias.v[0] == doctest::Approx(0.5 - 1.0).epsilon(1e-12));
    CHECK(g.layers[1].bias.v[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("analytic gradients match central finite differences on a 3-layer net") {
    ModelArchitecture arch = flat_arch(3, {LayerSpec::denseL(9, 8), LayerSpec::reluL(),
                                           LayerSpec::denseL(8, 4)}, 4);
    nn::ParameterSet params = nn::init_params(arch, 11);
    Rng rng(12);
    Tensor batch = random_batch(rng, 6, 1, 3, 3);
    std::vector<int> labels = {0, 1, 2, 3, 1, 2};

    nn::TaskGradients g = nn::backward_task_loss(arch, params, batch, labels);
    double err = oracles::max_relative_gradient_error(params, g.layers, [&] {
        return nn::cross_entropy(nn::forward(arch, params, batch).logits, labels);
    });
    CHECK(err < 1e-4);
}

TEST_CASE("gradient check holds for randomized small nets including conv and pool") {
    for (std::uint64_t trial = 0; trial < 4; ++trial) {
        ModelArchitecture arch;
        arch.name = "g" + std::to_string(trial);
        arch.num_classes = 3;
        arch.in_c = 1;
        arch.in_h = 6;
        arch.in_w = 6;
        arch.layers = {LayerSpec::convL(1, 2), LayerSpec::reluL()};
        if (trial % 2 == 1) {
            arch.layers.push_back(LayerSpec::convL(2, 2));
            arch.layers.push_back(LayerSpec::maxpoolL());
            arch.layers.push_back(LayerSpec::flattenL());
            arch.layers.push_back(LayerSpec::denseL(2 * 3 * 3, 3));
        } else {
            arch.layers.push_back(LayerSpec::flattenL());
            arch.layers.push_back(LayerSpec::denseL(2 * 6 * 6, 3));
        }
        arch.validate();

        nn::ParameterSet params = nn::init_params(arch, 100 + trial);
        Rng rng(200 + trial);
        Tensor batch = random_batch(rng, 5, 1, 6, 6);
        std::vector<int> labels;
        for (int i = 0; i < 5; ++i) labels.push_back(static_cast<int>(rng.index(3)));

        nn::TaskGradients g = nn::backward_task_loss(arch, params, batch, labels);
        double err = oracles::max_relative_gradient_error(params, g.layers, [&] {
            return nn::cross_entropy(nn::forward(arch, params, batch).logits, labels);
        });
        CHECK(err < 1e-4);
    }
}

TEST_CASE("sgd_step follows the momentum + weight-decay recurrence") {
    ModelArchitecture arch = flat_arch(2, {LayerSpec::denseL(4, 2)}, 2);
    nn::ParameterSet params = nn::init_params(arch, 5);
    nn::ParameterSet before = params;
    nn::OptimizerState st = nn::make_optimizer_state(arch);

    nn::TaskGradients zero;
    zero.layers.resize(arch.layers.size());
    zero.layers[1].weight = Tensor::zeros({2, 4});
    zero.layers[1].bias = Tensor::zeros({2});

    SUBCASE("zero gradient, zero weight decay leaves parameters bitwise unchanged") {
        nn::sgd_step(params, zero, st, {0.01, 0.9, 0.0});
        CHECK(params.layers[1].weight.v == before.layers[1].weight.v);
        CHECK(params.layers[1].bias.v == before.layers[1].bias.v);
    }

    SUBCASE("plain step without momentum moves by lr * g") {
        nn::TaskGradients g = zero;
        g.layers[1].weight.v[3] = 2.0;
        nn::sgd_step(params, g, st, {0.01, 0.0, 0.0});
        CHECK(params.layers[1].weight.v[3] ==
              doctest::Approx(before.layers[1].weight.v[3] - 0.01 * 2.0).epsilon(1e-15));
    }

    SUBCASE("two steps with momentum 0.9 accumulate 0.01 * (g + 1.9 g)") {
        nn::TaskGradients g = zero;
        g.layers[1].weight.v[0] = 3.0;
        nn::sgd_step(params, g, st, {0.01, 0.9, 0.0});
        nn::sgd_step(params, g, st, {0.01, 0.9, 0.0});
        // hand-unrolled: v1 = g, v2 = 1.9 g; total = 0.01 * 2.9 g
        CHECK(params.layers[1].weight.v[0] ==
              doctest::Approx(before.layers[1].weight.v[0] - 0.01 * (3.0 + 1.9 * 3.0))
                  .epsilon(1e-12));
    }
}

TEST_CASE("forward is deterministic and capture does not disturb logits") {
    auto family = zoo::build_family(zoo::Scale::tiny, 10);
    const ModelArchitecture& arch = family[1];
    nn::ParameterSet params = nn::init_params(arch, 77);
    Rng rng(3);
    Tensor batch = random_batch(rng, 3, 1, 28, 28);

    Tensor a = nn::forward(arch, params, batch).logits;
    Tensor b = nn::forward(arch, params, batch).logits;
    CHECK(a.v == b.v);

    std::set<std::size_t> all;
    for (std::size_t i = 0; i < arch.layers.size(); ++i) all.insert(i);
    Tensor c = nn::forward(arch, params, batch, all).logits;
    CHECK(a.v == c.v);
}

TEST_CASE("cross-entropy is nonnegative and equals ln(classes) at uniform logits") {
    Tensor uniform({2, 10}, std::vector<double>(20, 0.25));
    double ce = nn::cross_entropy(uniform, {3, 7});
    CHECK(ce == doctest::Approx(std::log(10.0)).epsilon(1e-12));

    Rng rng(4);
    Tensor logits = Tensor::zeros({6, 4});
    for (double& x : logits.v) x = rng.uniform(-3.0, 3.0);
    std::vector<int> labels = {0, 1, 2, 3, 0, 1};
    CHECK(nn::cross_entropy(logits, labels) >= 0.0);
}

TEST_CASE("init_params is seed-deterministic and per-seed distinct") {
    auto family = zoo::build_family(zoo::Scale::tiny, 10);
    nn::ParameterSet a = nn::init_params(family[0], 1234);
    nn::ParameterSet b = nn::init_params(family[0], 1234);
    nn::ParameterSet c = nn::init_params(family[0], 1235);
    CHECK(a.layers[0].weight.v == b.layers[0].weight.v);
    CHECK(a.layers[0].weight.v != c.layers[0].weight.v);

    // uniform(-s, s) bound with s = sqrt(6 / (fan_in + fan_out))
    double s = std::sqrt(6.0 / (1 * 9 + 3 * 9));
    for (double x : a.layers[0].weight.v) CHECK(std::abs(x) <= s);
}

TEST_CASE("errors: bad labels, bad shapes, non-finite values") {
    ModelArchitecture arch = flat_arch(2, {LayerSpec::denseL(4, 2)}, 2);
    nn::ParameterSet params = nn::init_params(arch, 8);
    Tensor batch({1, 1, 2, 2}, {0.0, 0.0, 0.0, 0.0});

    CHECK_THROWS_AS(nn::backward_task_loss(arch, params, batch, {2}), InputError);
    CHECK_THROWS_AS(nn::backward_task_loss(arch, params, batch, {-1}), InputError);

    Tensor wrong({1, 1, 3, 3}, std::vector<double>(9, 0.0));
    CHECK_THROWS_AS(nn::forward(arch, params, wrong), DimensionError);
    CHECK_THROWS_AS(nn::forward(arch, params, batch, {9}), DimensionError);

    params.layers[1].weight.v[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(nn::forward(arch, params, batch), NumericError);
}
