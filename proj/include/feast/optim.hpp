#pragma once

#include <vector>

#include "feast/tensor.hpp"

namespace feast {

// Adam with additive L2 weight decay: the decay term lambda_wd * theta is
// added to the raw gradient before the moment updates, so it flows through
// the adaptive scaling like any other gradient component.
struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    long long t = 0;                            // completed steps
    std::vector<std::vector<double>> m, v;      // first/second moments per parameter tensor

    explicit AdamState(double lr_ = 1e-3, double weight_decay_ = 0.0)
        : lr(lr_), weight_decay(weight_decay_) {}
};

// One Adam step over aligned parameter/gradient lists. Moments are lazily
// sized on the first call and must keep matching shapes afterwards.
void adam_step(AdamState& state, const std::vector<TensorPtr>& params,
               const std::vector<TensorPtr>& grads);

// Convenience: uses each parameter's own accumulated grad buffer.
void adam_step(AdamState& state, const std::vector<TensorPtr>& params);

// Plain SGD step, used by tests to pin meta-update arithmetic.
void sgd_step(double lr, double weight_decay, const std::vector<TensorPtr>& params,
              const std::vector<TensorPtr>& grads);

}  // namespace feast
