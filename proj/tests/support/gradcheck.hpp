#pragma once

// Central finite-difference gradient checker. Every analytic backward rule in
// the library is validated against central differences through this helper so
// the step size and tolerance conventions live in exactly one place.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "feast/rng.hpp"
#include "feast/tensor.hpp"

namespace feast::testing {

struct GradCheckResult {
    double max_rel_err = 0.0;
    int checked = 0;
    std::string worst;
};

// Relative error with a floor so near-zero gradients compare absolutely.
inline double rel_err(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
    return std::abs(analytic - numeric) / denom;
}

// `build` must construct a fresh graph from the current leaf values and return
// the scalar loss. Checks d(loss)/d(leaf) for every listed leaf coordinate
// (or only `coords[i]` per leaf when given) against central differences.
inline GradCheckResult grad_check(const std::function<TensorPtr()>& build,
                                  const std::vector<TensorPtr>& leaves, double h = 1e-5,
                                  const std::vector<std::vector<int>>* coords = nullptr) {
    for (const auto& l : leaves) l->zero_grad();
    backward(build());
    std::vector<std::vector<double>> analytic;
    analytic.reserve(leaves.size());
    for (const auto& l : leaves) analytic.push_back(l->grad);

    GradCheckResult res;
    for (size_t li = 0; li < leaves.size(); ++li) {
        Tensor& leaf = *leaves[li];
        std::vector<int> idx;
        if (coords) {
            idx = (*coords)[li];
        } else {
            idx.resize(leaf.size());
            std::iota(idx.begin(), idx.end(), 0);
        }
        for (int i : idx) {
            const double orig = leaf.values[i];
            leaf.values[i] = orig + h;
            const double fp = build()->item();
            leaf.values[i] = orig - h;
            const double fm = build()->item();
            leaf.values[i] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double r = rel_err(analytic[li][i], numeric);
            if (r > res.max_rel_err) {
                char buf[160];
                std::snprintf(buf, sizeof(buf), "leaf %zu coord %d: analytic %.10g vs fd %.10g",
                              li, i, analytic[li][i], numeric);
                res.max_rel_err = r;
                res.worst = buf;
            }
            ++res.checked;
        }
    }
    return res;
}

inline TensorPtr rand_leaf(Rng& rng, int rows, int cols, double sd = 1.0,
                           bool requires_grad = true) {
    std::vector<double> v(static_cast<size_t>(rows) * cols);
    for (double& x : v) x = rng.normal(0.0, sd);
    return Tensor::make(rows, cols, std::move(v), requires_grad);
}

inline std::vector<int> rand_labels(Rng& rng, int n, int n_classes = 2) {
    std::vector<int> out(n);
    for (int& x : out) x = rng.uniform_int(n_classes);
    return out;
}

// Evenly spread coordinate subsample for large leaves.
inline std::vector<int> sample_coords(Rng& rng, int size, int count) {
    if (count >= size) {
        std::vector<int> all(size);
        std::iota(all.begin(), all.end(), 0);
        return all;
    }
    return rng.sample_without_replacement(size, count);
}

}  // namespace feast::testing
