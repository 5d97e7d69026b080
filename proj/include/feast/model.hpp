#pragma once

#include <vector>

#include "feast/rng.hpp"
#include "feast/tensor.hpp"

namespace feast {

// Classifier: input -> 40 -> 40 -> 2 MLP with ReLU between layers and a
// softmax head. The sample embedding is the second hidden activation,
// l2-normalized per row (zero rows pass through as zeros, which only occurs
// for degenerate parameters).
struct ClassifierParams {
    int n_features = 0;
    TensorPtr w1, b1, w2, b2, w3, b3;

    static constexpr int kHidden = 40;
    static constexpr int kClasses = 2;

    static ClassifierParams init(int n_features, Rng& rng);
    std::vector<TensorPtr> all() const { return {w1, b1, w2, b2, w3, b3}; }
    ClassifierParams clone() const;   // fresh leaves, zeroed grads
};

struct ClassifierOutput {
    TensorPtr embeddings;  // m x 40, unit rows (or zero rows for dead inputs)
    TensorPtr probs;       // m x 2, rows sum to 1
};

ClassifierOutput classifier_forward(const ClassifierParams& params, const TensorPtr& x);

// Total parameter count for a given input width.
int d_theta(int n_features);

// Bijection between the parameter struct and a flat vector. Order: w1 row-major,
// b1, w2, b2, w3, b3; the flat layout is what dictionary keys, generator outputs
// and checkpoints all speak.
std::vector<double> flatten_params(const ClassifierParams& params);
std::vector<double> flatten_grads(const ClassifierParams& params);
ClassifierParams unflatten_params(const std::vector<double>& flat, int n_features);

// Direction generator: one transformer encoder block over the support
// embeddings (single-head self-attention at width 40, feed-forward width 64,
// residual + layer norm, no positional encoding — support sets are unordered),
// mean-pooled and mapped through a 128-wide MLP to a d_theta-sized vector.
struct GeneratorParams {
    int d_out = 0;
    TensorPtr wq, bq, wk, bk, wv, bv, wo, bo;
    TensorPtr ln1_g, ln1_b;
    TensorPtr ff1_w, ff1_b, ff2_w, ff2_b;
    TensorPtr ln2_g, ln2_b;
    TensorPtr head1_w, head1_b, head2_w, head2_b;

    static constexpr int kWidth = 40;
    static constexpr int kFeedForward = 64;
    static constexpr int kHeadHidden = 128;

    static GeneratorParams init(int d_out, Rng& rng);
    std::vector<TensorPtr> all() const;
    GeneratorParams clone() const;
};

// embeddings: m x 40 (detached classifier embeddings). Returns 1 x d_out.
TensorPtr generator_forward(const GeneratorParams& params, const TensorPtr& embeddings);

std::vector<double> flatten_values(const std::vector<TensorPtr>& tensors);
void unflatten_values(const std::vector<double>& flat, const std::vector<TensorPtr>& tensors);

}  // namespace feast
