#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "conceptdrive/tensor.hpp"

namespace conceptdrive {

/// Central-difference gradient of a scalar function, one entry at a time:
/// df/dx_i ~ (f(x + h e_i) - f(x - h e_i)) / 2h. Deliberately independent of
/// the tape machinery so the two can check each other.
inline std::vector<Tensor> finite_diff_grad(
    const std::function<double(const std::vector<Tensor>&)>& f, std::vector<Tensor> inputs,
    double h = 1e-5) {
    std::vector<Tensor> grads;
    grads.reserve(inputs.size());
    for (const Tensor& in : inputs) grads.emplace_back(in.rows(), in.cols());
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        for (std::size_t i = 0; i < inputs[t].size(); ++i) {
            const double saved = inputs[t][i];
            inputs[t][i] = saved + h;
            const double hi = f(inputs);
            inputs[t][i] = saved - h;
            const double lo = f(inputs);
            inputs[t][i] = saved;
            grads[t][i] = (hi - lo) / (2.0 * h);
        }
    }
    return grads;
}

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
inline double max_rel_error(const Tensor& a, const Tensor& b, double floor_val = 1e-8) {
    if (!a.same_shape(b)) throw ShapeError("max_rel_error: shapes differ");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::fabs(a[i]), std::fabs(b[i]), floor_val});
        worst = std::max(worst, std::fabs(a[i] - b[i]) / denom);
    }
    return worst;
}

inline double max_rel_error(const std::vector<Tensor>& a, const std::vector<Tensor>& b,
                            double floor_val = 1e-8) {
    if (a.size() != b.size()) throw ShapeError("max_rel_error: tensor counts differ");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, max_rel_error(a[i], b[i], floor_val));
    return worst;
}

}  // namespace conceptdrive
