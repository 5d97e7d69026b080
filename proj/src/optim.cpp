#include "feast/optim.hpp"

#include <cmath>
#include <string>

#include "feast/errors.hpp"

namespace feast {

namespace {

void check_aligned(const std::vector<TensorPtr>& params, const std::vector<TensorPtr>& grads) {
    if (params.size() != grads.size())
        throw ShapeError("adam_step: " + std::to_string(params.size()) + " params vs " +
                         std::to_string(grads.size()) + " grads");
    for (size_t i = 0; i < params.size(); ++i)
        if (params[i]->size() != grads[i]->size())
            throw ShapeError("adam_step: param/grad size mismatch at index " + std::to_string(i));
}

}  // namespace

void adam_step(AdamState& state, const std::vector<TensorPtr>& params,
               const std::vector<TensorPtr>& grads) {
    check_aligned(params, grads);
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            state.m[i].assign(params[i]->size(), 0.0);
            state.v[i].assign(params[i]->size(), 0.0);
        }
    }
    if (state.m.size() != params.size())
        throw StateError("adam_step: state was initialized for a different parameter list");

    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i]->values;
        const auto& g = grads[i]->values;
        auto& m = state.m[i];
        auto& v = state.v[i];
        if (m.size() != p.size())
            throw StateError("adam_step: moment size mismatch at index " + std::to_string(i));
        for (size_t k = 0; k < p.size(); ++k) {
            const double gk = g[k] + state.weight_decay * p[k];
            if (!std::isfinite(gk))
                throw NumericsError("adam_step: non-finite gradient at param " + std::to_string(i));
            m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * gk;
            v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * gk * gk;
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            p[k] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
        }
        params[i]->check_finite("adam_step");
    }
}

void adam_step(AdamState& state, const std::vector<TensorPtr>& params) {
    std::vector<TensorPtr> grads;
    grads.reserve(params.size());
    for (const auto& p : params) {
        if (!p->requires_grad)
            throw StateError("adam_step: parameter does not track gradients");
        grads.push_back(Tensor::make(p->rows, p->cols, p->grad));
    }
    adam_step(state, params, grads);
}

void sgd_step(double lr, double weight_decay, const std::vector<TensorPtr>& params,
              const std::vector<TensorPtr>& grads) {
    check_aligned(params, grads);
    for (size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i]->values;
        const auto& g = grads[i]->values;
        for (size_t k = 0; k < p.size(); ++k) p[k] -= lr * (g[k] + weight_decay * p[k]);
        params[i]->check_finite("sgd_step");
    }
}

}  // namespace feast
