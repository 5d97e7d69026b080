#include "feast/model.hpp"

#include <cmath>
#include <string>

#include "feast/errors.hpp"

namespace feast {

namespace {

// Kaiming-style uniform fan-in init, bound 1/sqrt(fan_in), biases included.
TensorPtr init_linear_weight(int fan_in, int fan_out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> v(static_cast<size_t>(fan_in) * fan_out);
    for (double& x : v) x = rng.uniform(-bound, bound);
    return Tensor::make(fan_in, fan_out, std::move(v), true);
}

TensorPtr init_linear_bias(int fan_in, int fan_out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> v(fan_out);
    for (double& x : v) x = rng.uniform(-bound, bound);
    return Tensor::make(1, fan_out, std::move(v), true);
}

TensorPtr clone_leaf(const TensorPtr& t) {
    return Tensor::make(t->rows, t->cols, t->values, t->requires_grad);
}

}  // namespace

// ---- classifier ---------------------------------------------------------------

ClassifierParams ClassifierParams::init(int n_features, Rng& rng) {
    if (n_features < 1) throw ShapeError("ClassifierParams::init: n_features must be >= 1");
    ClassifierParams p;
    p.n_features = n_features;
    p.w1 = init_linear_weight(n_features, kHidden, rng);
    p.b1 = init_linear_bias(n_features, kHidden, rng);
    p.w2 = init_linear_weight(kHidden, kHidden, rng);
    p.b2 = init_linear_bias(kHidden, kHidden, rng);
    p.w3 = init_linear_weight(kHidden, kClasses, rng);
    p.b3 = init_linear_bias(kHidden, kClasses, rng);
    return p;
}

ClassifierParams ClassifierParams::clone() const {
    ClassifierParams p;
    p.n_features = n_features;
    p.w1 = clone_leaf(w1);
    p.b1 = clone_leaf(b1);
    p.w2 = clone_leaf(w2);
    p.b2 = clone_leaf(b2);
    p.w3 = clone_leaf(w3);
    p.b3 = clone_leaf(b3);
    return p;
}

ClassifierOutput classifier_forward(const ClassifierParams& params, const TensorPtr& x) {
    if (!x) throw StateError("classifier_forward: null input");
    if (x->cols != params.n_features)
        throw ShapeError("classifier_forward: input has " + std::to_string(x->cols) +
                         " features, params expect " + std::to_string(params.n_features));
    auto h1 = relu(linear(x, params.w1, params.b1));
    auto h2 = relu(linear(h1, params.w2, params.b2));
    ClassifierOutput out;
    out.embeddings = l2_normalize_rows(h2, /*error_on_zero=*/false);
    out.probs = softmax_row(linear(h2, params.w3, params.b3));
    return out;
}

int d_theta(int n_features) {
    const int h = ClassifierParams::kHidden, c = ClassifierParams::kClasses;
    return n_features * h + h + h * h + h + h * c + c;
}

std::vector<double> flatten_values(const std::vector<TensorPtr>& tensors) {
    std::vector<double> flat;
    for (const auto& t : tensors) flat.insert(flat.end(), t->values.begin(), t->values.end());
    return flat;
}

void unflatten_values(const std::vector<double>& flat, const std::vector<TensorPtr>& tensors) {
    size_t k = 0;
    for (const auto& t : tensors) {
        if (k + t->values.size() > flat.size())
            throw ShapeError("unflatten_values: flat vector too short");
        std::copy(flat.begin() + k, flat.begin() + k + t->values.size(), t->values.begin());
        k += t->values.size();
    }
    if (k != flat.size()) throw ShapeError("unflatten_values: flat vector has extra entries");
}

std::vector<double> flatten_params(const ClassifierParams& params) {
    return flatten_values(params.all());
}

std::vector<double> flatten_grads(const ClassifierParams& params) {
    std::vector<double> flat;
    for (const auto& t : params.all()) {
        if (!t->requires_grad) throw StateError("flatten_grads: parameter does not track gradients");
        flat.insert(flat.end(), t->grad.begin(), t->grad.end());
    }
    return flat;
}

ClassifierParams unflatten_params(const std::vector<double>& flat, int n_features) {
    if (static_cast<int>(flat.size()) != d_theta(n_features))
        throw ShapeError("unflatten_params: got " + std::to_string(flat.size()) + " values, need " +
                         std::to_string(d_theta(n_features)));
    const int h = ClassifierParams::kHidden, c = ClassifierParams::kClasses;
    ClassifierParams p;
    p.n_features = n_features;
    size_t k = 0;
    auto take = [&](int rows, int cols) {
        std::vector<double> v(flat.begin() + k, flat.begin() + k + static_cast<size_t>(rows) * cols);
        k += static_cast<size_t>(rows) * cols;
        return Tensor::make(rows, cols, std::move(v), true);
    };
    p.w1 = take(n_features, h);
    p.b1 = take(1, h);
    p.w2 = take(h, h);
    p.b2 = take(1, h);
    p.w3 = take(h, c);
    p.b3 = take(1, c);
    return p;
}

// ---- generator ------------------------------------------------------------------

GeneratorParams GeneratorParams::init(int d_out, Rng& rng) {
    if (d_out < 1) throw ShapeError("GeneratorParams::init: d_out must be >= 1");
    const int w = kWidth, f = kFeedForward, hh = kHeadHidden;
    GeneratorParams p;
    p.d_out = d_out;
    p.wq = init_linear_weight(w, w, rng);
    p.bq = init_linear_bias(w, w, rng);
    p.wk = init_linear_weight(w, w, rng);
    p.bk = init_linear_bias(w, w, rng);
    p.wv = init_linear_weight(w, w, rng);
    p.bv = init_linear_bias(w, w, rng);
    p.wo = init_linear_weight(w, w, rng);
    p.bo = init_linear_bias(w, w, rng);
    p.ln1_g = Tensor::full(1, w, 1.0, true);
    p.ln1_b = Tensor::zeros(1, w, true);
    p.ff1_w = init_linear_weight(w, f, rng);
    p.ff1_b = init_linear_bias(w, f, rng);
    p.ff2_w = init_linear_weight(f, w, rng);
    p.ff2_b = init_linear_bias(f, w, rng);
    p.ln2_g = Tensor::full(1, w, 1.0, true);
    p.ln2_b = Tensor::zeros(1, w, true);
    p.head1_w = init_linear_weight(w, hh, rng);
    p.head1_b = init_linear_bias(w, hh, rng);
    p.head2_w = init_linear_weight(hh, d_out, rng);
    p.head2_b = init_linear_bias(hh, d_out, rng);
    return p;
}

std::vector<TensorPtr> GeneratorParams::all() const {
    return {wq,    bq,    wk,    bk,    wv,    bv,    wo,      bo,      ln1_g,   ln1_b,
            ff1_w, ff1_b, ff2_w, ff2_b, ln2_g, ln2_b, head1_w, head1_b, head2_w, head2_b};
}

GeneratorParams GeneratorParams::clone() const {
    GeneratorParams p;
    p.d_out = d_out;
    p.wq = clone_leaf(wq);
    p.bq = clone_leaf(bq);
    p.wk = clone_leaf(wk);
    p.bk = clone_leaf(bk);
    p.wv = clone_leaf(wv);
    p.bv = clone_leaf(bv);
    p.wo = clone_leaf(wo);
    p.bo = clone_leaf(bo);
    p.ln1_g = clone_leaf(ln1_g);
    p.ln1_b = clone_leaf(ln1_b);
    p.ff1_w = clone_leaf(ff1_w);
    p.ff1_b = clone_leaf(ff1_b);
    p.ff2_w = clone_leaf(ff2_w);
    p.ff2_b = clone_leaf(ff2_b);
    p.ln2_g = clone_leaf(ln2_g);
    p.ln2_b = clone_leaf(ln2_b);
    p.head1_w = clone_leaf(head1_w);
    p.head1_b = clone_leaf(head1_b);
    p.head2_w = clone_leaf(head2_w);
    p.head2_b = clone_leaf(head2_b);
    return p;
}

TensorPtr generator_forward(const GeneratorParams& params, const TensorPtr& embeddings) {
    if (!embeddings) throw StateError("generator_forward: null input");
    if (embeddings->cols != GeneratorParams::kWidth)
        throw ShapeError("generator_forward: embeddings are " + std::to_string(embeddings->cols) +
                         " wide, expected " + std::to_string(GeneratorParams::kWidth));
    if (embeddings->rows < 1) throw DegenerateError("generator_forward: empty support set");

    auto q = linear(embeddings, params.wq, params.bq);
    auto k = linear(embeddings, params.wk, params.bk);
    auto v = linear(embeddings, params.wv, params.bv);
    auto att = softmax_row(scale(matmul(q, transpose(k)),
                                 1.0 / std::sqrt(static_cast<double>(GeneratorParams::kWidth))));
    auto mixed = linear(matmul(att, v), params.wo, params.bo);
    auto x1 = layer_norm_rows(add(embeddings, mixed), params.ln1_g, params.ln1_b);
    auto ff = linear(relu(linear(x1, params.ff1_w, params.ff1_b)), params.ff2_w, params.ff2_b);
    auto x2 = layer_norm_rows(add(x1, ff), params.ln2_g, params.ln2_b);
    auto pooled = mean_rows(x2);
    return linear(relu(linear(pooled, params.head1_w, params.head1_b)), params.head2_w,
                  params.head2_b);
}

}  // namespace feast
