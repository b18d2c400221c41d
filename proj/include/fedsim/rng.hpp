#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace fedsim {

// Deterministic random stream. All draws are implemented on top of the
// raw mt19937_64 output so that sequences are identical across standard
// library implementations (std distributions carry no such guarantee).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // [0, 1), 53-bit resolution.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // (0, 1]; safe as a log argument.
    double uniform_pos() { return 1.0 - uniform(); }

    double normal();

    // Gamma(alpha, 1) via Marsaglia-Tsang; alpha < 1 handled by boosting.
    double gamma(double alpha);

    std::vector<double> dirichlet(double alpha, std::size_t k);

    std::size_t index(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[index(i)]);
        }
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace fedsim
