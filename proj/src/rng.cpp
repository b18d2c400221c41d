#include "fedsim/rng.hpp"

#include <cmath>

#include "fedsim/error.hpp"

namespace fedsim {

double Rng::normal() {
    // Box-Muller, second variate discarded to keep the stream stateless.
    double u1 = uniform_pos();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

double Rng::gamma(double alpha) {
    if (alpha <= 0.0) throw InputError("gamma: alpha must be positive");
    if (alpha < 1.0) {
        double boost = std::pow(uniform_pos(), 1.0 / alpha);
        return gamma(alpha + 1.0) * boost;
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = normal();
        double t = 1.0 + c * x;
        if (t <= 0.0) continue;
        double vol = t * t * t;
        double u = uniform();
        double x2 = x * x;
        if (u < 1.0 - 0.0331 * x2 * x2) return d * vol;
        if (u > 0.0 && std::log(u) < 0.5 * x2 + d * (1.0 - vol + std::log(vol))) return d * vol;
    }
}

std::vector<double> Rng::dirichlet(double alpha, std::size_t k) {
    std::vector<double> p(k);
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        p[i] = gamma(alpha);
        sum += p[i];
    }
    if (sum <= 0.0) {
        // All components underflowed; fall back to a one-hot pick.
        std::fill(p.begin(), p.end(), 0.0);
        p[index(k)] = 1.0;
        return p;
    }
    for (double& x : p) x /= sum;
    return p;
}

}  // namespace fedsim
