#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "fedsim/error.hpp"

namespace fedsim {

// Dense row-major f64 buffer with an explicit shape. All weights,
// activations and image batches in the simulator are Tensors.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> v;

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, std::vector<double> values)
        : shape(std::move(s)), v(std::move(values)) {
        if (numel_of(shape) != v.size()) {
            throw DimensionError("tensor: shape does not match value count");
        }
    }

    static Tensor zeros(std::vector<std::size_t> s) {
        std::size_t n = numel_of(s);
        return Tensor(std::move(s), std::vector<double>(n, 0.0));
    }

    static std::size_t numel_of(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t e : s) n *= e;
        return s.empty() ? 0 : n;
    }

    std::size_t numel() const { return v.size(); }
    bool empty() const { return v.empty(); }
    double* data() { return v.data(); }
    const double* data() const { return v.data(); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    void check_finite(const std::string& what) const {
        for (double x : v) {
            if (!std::isfinite(x)) {
                throw NumericError("non-finite value in " + what);
            }
        }
    }
};

}  // namespace fedsim
