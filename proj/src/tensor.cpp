#include "feast/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "feast/errors.hpp"

namespace feast {

namespace {

std::string shape_str(const Tensor& t) {
    return std::to_string(t.rows) + "x" + std::to_string(t.cols);
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.rows != b.rows || a.cols != b.cols)
        throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) + " differ");
}

void require_nonnull(const char* op, const TensorPtr& t) {
    if (!t) throw StateError(std::string(op) + ": null operand");
}

}  // namespace

TensorPtr Tensor::make(int rows, int cols, std::vector<double> v, bool requires_grad) {
    if (rows < 0 || cols < 0) throw ShapeError("make: negative dimension");
    if (static_cast<int>(v.size()) != rows * cols)
        throw ShapeError("make: value count " + std::to_string(v.size()) + " does not fill " +
                         std::to_string(rows) + "x" + std::to_string(cols));
    auto t = std::make_shared<Tensor>();
    t->rows = rows;
    t->cols = cols;
    t->values = std::move(v);
    t->requires_grad = requires_grad;
    if (requires_grad) t->grad.assign(t->values.size(), 0.0);
    return t;
}

TensorPtr Tensor::zeros(int rows, int cols, bool requires_grad) {
    return make(rows, cols, std::vector<double>(static_cast<size_t>(rows) * cols, 0.0), requires_grad);
}

TensorPtr Tensor::full(int rows, int cols, double v, bool requires_grad) {
    return make(rows, cols, std::vector<double>(static_cast<size_t>(rows) * cols, v), requires_grad);
}

double Tensor::at(int r, int c) const {
    if (r < 0 || r >= rows || c < 0 || c >= cols)
        throw IndexError("at: (" + std::to_string(r) + "," + std::to_string(c) + ") outside " + shape_str(*this));
    return values[static_cast<size_t>(r) * cols + c];
}

double Tensor::item() const {
    if (rows != 1 || cols != 1) throw ShapeError("item: tensor is " + shape_str(*this) + ", not 1x1");
    return values[0];
}

void Tensor::zero_grad() {
    if (requires_grad) std::fill(grad.begin(), grad.end(), 0.0);
}

void Tensor::check_finite(const char* where) const {
    for (double v : values)
        if (!std::isfinite(v))
            throw NumericsError(std::string(where) + ": produced a non-finite value");
}

void zero_grad(const std::vector<TensorPtr>& params) {
    for (const auto& p : params) p->zero_grad();
}

TensorPtr detach(const TensorPtr& x) {
    require_nonnull("detach", x);
    return Tensor::make(x->rows, x->cols, x->values, false);
}

// ---- graph ----------------------------------------------------------------

void backward(const TensorPtr& loss) {
    require_nonnull("backward", loss);
    if (loss->size() != 1) throw ShapeError("backward: loss must be 1x1, got " + shape_str(*loss));
    if (!loss->requires_grad) throw StateError("backward: loss has no grad path");
    if (loss->consumed) throw StateError("backward: graph already consumed");

    // Reverse post-order DFS gives every consumer before its producers.
    std::vector<Tensor*> order;
    std::unordered_set<Tensor*> seen;
    std::vector<std::pair<Tensor*, size_t>> stack{{loss.get(), 0}};
    seen.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Tensor* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss->grad.assign(1, 1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Tensor* node = *it;
        if (node->is_leaf()) continue;
        if (node->consumed) throw StateError("backward: graph already consumed at op '" + node->op + "'");
        node->consumed = true;
        if (node->backward_fn) node->backward_fn(*node);
    }
}

// ---- primitive operations -------------------------------------------------

namespace {

// Builds the output node and wires parents when any operand tracks gradients.
TensorPtr finish(const char* op, int rows, int cols, std::vector<double> v,
                 std::vector<TensorPtr> parents, std::function<void(const Tensor&)> bwd) {
    bool req = false;
    for (const auto& p : parents) req = req || p->requires_grad;
    auto out = Tensor::make(rows, cols, std::move(v), req);
    out->op = op;
    out->check_finite(op);
    if (req) {
        out->parents = std::move(parents);
        out->backward_fn = std::move(bwd);
    }
    return out;
}

}  // namespace

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
    require_nonnull("matmul", a);
    require_nonnull("matmul", b);
    if (a->cols != b->rows)
        throw ShapeError("matmul: inner dimensions " + shape_str(*a) + " * " + shape_str(*b) + " disagree");
    const int m = a->rows, k = a->cols, n = b->cols;
    std::vector<double> v(static_cast<size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i) {
        const double* arow = &a->values[static_cast<size_t>(i) * k];
        double* orow = &v[static_cast<size_t>(i) * n];
        for (int kk = 0; kk < k; ++kk) {
            const double aik = arow[kk];
            if (aik == 0.0) continue;
            const double* brow = &b->values[static_cast<size_t>(kk) * n];
            for (int j = 0; j < n; ++j) orow[j] += aik * brow[j];
        }
    }
    return finish("matmul", m, n, std::move(v), {a, b}, [a, b, m, k, n](const Tensor& self) {
        const auto& g = self.grad;
        if (a->requires_grad) {
            auto& ga = a->grad;
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) {
                    const double gij = g[static_cast<size_t>(i) * n + j];
                    if (gij == 0.0) continue;
                    const double* brow = &b->values[0];
                    for (int kk = 0; kk < k; ++kk)
                        ga[static_cast<size_t>(i) * k + kk] += gij * brow[static_cast<size_t>(kk) * n + j];
                }
        }
        if (b->requires_grad) {
            auto& gb = b->grad;
            for (int i = 0; i < m; ++i)
                for (int kk = 0; kk < k; ++kk) {
                    const double aik = a->values[static_cast<size_t>(i) * k + kk];
                    if (aik == 0.0) continue;
                    for (int j = 0; j < n; ++j)
                        gb[static_cast<size_t>(kk) * n + j] += aik * g[static_cast<size_t>(i) * n + j];
                }
        }
    });
}

TensorPtr transpose(const TensorPtr& a) {
    require_nonnull("transpose", a);
    const int m = a->rows, n = a->cols;
    std::vector<double> v(static_cast<size_t>(m) * n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) v[static_cast<size_t>(j) * m + i] = a->values[static_cast<size_t>(i) * n + j];
    return finish("transpose", n, m, std::move(v), {a}, [a, m, n](const Tensor& self) {
        if (!a->requires_grad) return;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                a->grad[static_cast<size_t>(i) * n + j] += self.grad[static_cast<size_t>(j) * m + i];
    });
}

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    require_nonnull("add", a);
    require_nonnull("add", b);
    require_same_shape("add", *a, *b);
    std::vector<double> v(a->values.size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = a->values[i] + b->values[i];
    return finish("add", a->rows, a->cols, std::move(v), {a, b}, [a, b](const Tensor& self) {
        if (a->requires_grad)
            for (size_t i = 0; i < self.grad.size(); ++i) a->grad[i] += self.grad[i];
        if (b->requires_grad)
            for (size_t i = 0; i < self.grad.size(); ++i) b->grad[i] += self.grad[i];
    });
}

TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
    require_nonnull("sub", a);
    require_nonnull("sub", b);
    require_same_shape("sub", *a, *b);
    std::vector<double> v(a->values.size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = a->values[i] - b->values[i];
    return finish("sub", a->rows, a->cols, std::move(v), {a, b}, [a, b](const Tensor& self) {
        if (a->requires_grad)
            for (size_t i = 0; i < self.grad.size(); ++i) a->grad[i] += self.grad[i];
        if (b->requires_grad)
            for (size_t i = 0; i < self.grad.size(); ++i) b->grad[i] -= self.grad[i];
    });
}

TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
    require_nonnull("mul", a);
    require_nonnull("mul", b);
    require_same_shape("mul", *a, *b);
    std::vector<double> v(a->values.size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = a->values[i] * b->values[i];
    return finish("mul", a->rows, a->cols, std::move(v), {a, b}, [a, b](const Tensor& self) {
        if (a->requires_grad)
            for (size_t i = 0; i < self.grad.size(); ++i) a->grad[i] += self.grad[i] * b->values[i];
        if (b->requires_grad)
            for (size_t i = 0; i < self.grad.size(); ++i) b->grad[i] += self.grad[i] * a->values[i];
    });
}

TensorPtr div(const TensorPtr& a, const TensorPtr& b) {
    require_nonnull("div", a);
    require_nonnull("div", b);
    require_same_shape("div", *a, *b);
    std::vector<double> v(a->values.size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = a->values[i] / b->values[i];
    return finish("div", a->rows, a->cols, std::move(v), {a, b}, [a, b](const Tensor& self) {
        if (a->requires_grad)
            for (size_t i = 0; i < self.grad.size(); ++i) a->grad[i] += self.grad[i] / b->values[i];
        if (b->requires_grad)
            for (size_t i = 0; i < self.grad.size(); ++i)
                b->grad[i] -= self.grad[i] * a->values[i] / (b->values[i] * b->values[i]);
    });
}

TensorPtr scale(const TensorPtr& a, double c) {
    require_nonnull("scale", a);
    std::vector<double> v(a->values.size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = a->values[i] * c;
    return finish("scale", a->rows, a->cols, std::move(v), {a}, [a, c](const Tensor& self) {
        if (!a->requires_grad) return;
        for (size_t i = 0; i < self.grad.size(); ++i) a->grad[i] += self.grad[i] * c;
    });
}

TensorPtr add_scalar(const TensorPtr& a, double c) {
    require_nonnull("add_scalar", a);
    std::vector<double> v(a->values.size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = a->values[i] + c;
    return finish("add_scalar", a->rows, a->cols, std::move(v), {a}, [a](const Tensor& self) {
        if (!a->requires_grad) return;
        for (size_t i = 0; i < self.grad.size(); ++i) a->grad[i] += self.grad[i];
    });
}

TensorPtr add_bias(const TensorPtr& x, const TensorPtr& b) {
    require_nonnull("add_bias", x);
    require_nonnull("add_bias", b);
    if (b->rows != 1 || b->cols != x->cols)
        throw ShapeError("add_bias: bias " + shape_str(*b) + " does not match " + shape_str(*x));
    const int m = x->rows, n = x->cols;
    std::vector<double> v(x->values.size());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            v[static_cast<size_t>(i) * n + j] = x->values[static_cast<size_t>(i) * n + j] + b->values[j];
    return finish("add_bias", m, n, std::move(v), {x, b}, [x, b, m, n](const Tensor& self) {
        if (x->requires_grad)
            for (size_t i = 0; i < self.grad.size(); ++i) x->grad[i] += self.grad[i];
        if (b->requires_grad)
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) b->grad[j] += self.grad[static_cast<size_t>(i) * n + j];
    });
}

TensorPtr relu(const TensorPtr& x) {
    require_nonnull("relu", x);
    std::vector<double> v(x->values.size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = x->values[i] > 0.0 ? x->values[i] : 0.0;
    return finish("relu", x->rows, x->cols, std::move(v), {x}, [x](const Tensor& self) {
        if (!x->requires_grad) return;
        for (size_t i = 0; i < self.grad.size(); ++i)
            if (x->values[i] > 0.0) x->grad[i] += self.grad[i];
    });
}

TensorPtr softmax_row(const TensorPtr& x) {
    require_nonnull("softmax_row", x);
    const int m = x->rows, n = x->cols;
    if (n < 1) throw ShapeError("softmax_row: needs at least one column");
    std::vector<double> v(x->values.size());
    for (int i = 0; i < m; ++i) {
        const double* row = &x->values[static_cast<size_t>(i) * n];
        double* out = &v[static_cast<size_t>(i) * n];
        double mx = row[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double s = 0.0;
        for (int j = 0; j < n; ++j) {
            out[j] = std::exp(row[j] - mx);
            s += out[j];
        }
        for (int j = 0; j < n; ++j) out[j] /= s;
    }
    return finish("softmax_row", m, n, std::move(v), {x}, [x, m, n](const Tensor& self) {
        if (!x->requires_grad) return;
        for (int i = 0; i < m; ++i) {
            const double* s = &self.values[static_cast<size_t>(i) * n];
            const double* g = &self.grad[static_cast<size_t>(i) * n];
            double dot = 0.0;
            for (int j = 0; j < n; ++j) dot += s[j] * g[j];
            for (int j = 0; j < n; ++j) x->grad[static_cast<size_t>(i) * n + j] += s[j] * (g[j] - dot);
        }
    });
}

TensorPtr l2_normalize_rows(const TensorPtr& x, bool error_on_zero) {
    require_nonnull("l2_normalize_rows", x);
    const int m = x->rows, n = x->cols;
    constexpr double kZero = 1e-12;
    std::vector<double> v(x->values.size());
    std::vector<double> norms(m);
    for (int i = 0; i < m; ++i) {
        const double* row = &x->values[static_cast<size_t>(i) * n];
        double ss = 0.0;
        for (int j = 0; j < n; ++j) ss += row[j] * row[j];
        double r = std::sqrt(ss);
        norms[i] = r;
        if (r <= kZero) {
            if (error_on_zero)
                throw DegenerateError("l2_normalize_rows: row " + std::to_string(i) + " has zero norm");
            for (int j = 0; j < n; ++j) v[static_cast<size_t>(i) * n + j] = 0.0;
        } else {
            for (int j = 0; j < n; ++j) v[static_cast<size_t>(i) * n + j] = row[j] / r;
        }
    }
    return finish("l2_normalize_rows", m, n, std::move(v), {x},
                  [x, m, n, norms = std::move(norms)](const Tensor& self) {
                      if (!x->requires_grad) return;
                      for (int i = 0; i < m; ++i) {
                          if (norms[i] <= kZero) continue;  // zero rows pass zero gradient
                          const double* y = &self.values[static_cast<size_t>(i) * n];
                          const double* g = &self.grad[static_cast<size_t>(i) * n];
                          double dot = 0.0;
                          for (int j = 0; j < n; ++j) dot += y[j] * g[j];
                          for (int j = 0; j < n; ++j)
                              x->grad[static_cast<size_t>(i) * n + j] += (g[j] - y[j] * dot) / norms[i];
                      }
                  });
}

TensorPtr mean_rows(const TensorPtr& x) {
    require_nonnull("mean_rows", x);
    const int m = x->rows, n = x->cols;
    if (m < 1) throw DegenerateError("mean_rows: no rows");
    std::vector<double> v(n, 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) v[j] += x->values[static_cast<size_t>(i) * n + j];
    for (int j = 0; j < n; ++j) v[j] /= m;
    return finish("mean_rows", 1, n, std::move(v), {x}, [x, m, n](const Tensor& self) {
        if (!x->requires_grad) return;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) x->grad[static_cast<size_t>(i) * n + j] += self.grad[j] / m;
    });
}

TensorPtr sum_all(const TensorPtr& x) {
    require_nonnull("sum_all", x);
    double s = 0.0;
    for (double v : x->values) s += v;
    return finish("sum_all", 1, 1, {s}, {x}, [x](const Tensor& self) {
        if (!x->requires_grad) return;
        for (size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += self.grad[0];
    });
}

TensorPtr mean_all(const TensorPtr& x) {
    require_nonnull("mean_all", x);
    if (x->size() < 1) throw DegenerateError("mean_all: empty tensor");
    double s = 0.0;
    for (double v : x->values) s += v;
    const double inv = 1.0 / x->size();
    return finish("mean_all", 1, 1, {s * inv}, {x}, [x, inv](const Tensor& self) {
        if (!x->requires_grad) return;
        for (size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += self.grad[0] * inv;
    });
}

TensorPtr select_rows(const TensorPtr& x, const std::vector<int>& idx) {
    require_nonnull("select_rows", x);
    const int n = x->cols;
    for (int r : idx)
        if (r < 0 || r >= x->rows)
            throw IndexError("select_rows: row " + std::to_string(r) + " outside " + shape_str(*x));
    std::vector<double> v(idx.size() * static_cast<size_t>(n));
    for (size_t i = 0; i < idx.size(); ++i)
        for (int j = 0; j < n; ++j)
            v[i * n + j] = x->values[static_cast<size_t>(idx[i]) * n + j];
    return finish("select_rows", static_cast<int>(idx.size()), n, std::move(v), {x},
                  [x, idx, n](const Tensor& self) {
                      if (!x->requires_grad) return;
                      for (size_t i = 0; i < idx.size(); ++i)
                          for (int j = 0; j < n; ++j)
                              x->grad[static_cast<size_t>(idx[i]) * n + j] += self.grad[i * n + j];
                  });
}

TensorPtr select_col(const TensorPtr& x, int col) {
    require_nonnull("select_col", x);
    if (col < 0 || col >= x->cols)
        throw IndexError("select_col: column " + std::to_string(col) + " outside " + shape_str(*x));
    const int m = x->rows, n = x->cols;
    std::vector<double> v(m);
    for (int i = 0; i < m; ++i) v[i] = x->values[static_cast<size_t>(i) * n + col];
    return finish("select_col", m, 1, std::move(v), {x}, [x, col, m, n](const Tensor& self) {
        if (!x->requires_grad) return;
        for (int i = 0; i < m; ++i) x->grad[static_cast<size_t>(i) * n + col] += self.grad[i];
    });
}

TensorPtr logsumexp_row(const TensorPtr& x) {
    require_nonnull("logsumexp_row", x);
    const int m = x->rows, n = x->cols;
    if (n < 1) throw ShapeError("logsumexp_row: needs at least one column");
    std::vector<double> v(m);
    for (int i = 0; i < m; ++i) {
        const double* row = &x->values[static_cast<size_t>(i) * n];
        double mx = row[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += std::exp(row[j] - mx);
        v[i] = mx + std::log(s);
    }
    return finish("logsumexp_row", m, 1, std::move(v), {x}, [x, m, n](const Tensor& self) {
        if (!x->requires_grad) return;
        for (int i = 0; i < m; ++i) {
            const double lse = self.values[i];
            const double g = self.grad[i];
            for (int j = 0; j < n; ++j)
                x->grad[static_cast<size_t>(i) * n + j] +=
                    g * std::exp(x->values[static_cast<size_t>(i) * n + j] - lse);
        }
    });
}

TensorPtr layer_norm_rows(const TensorPtr& x, const TensorPtr& gain, const TensorPtr& bias, double eps) {
    require_nonnull("layer_norm_rows", x);
    require_nonnull("layer_norm_rows", gain);
    require_nonnull("layer_norm_rows", bias);
    const int m = x->rows, n = x->cols;
    if (gain->rows != 1 || gain->cols != n || bias->rows != 1 || bias->cols != n)
        throw ShapeError("layer_norm_rows: gain/bias must be 1x" + std::to_string(n));
    std::vector<double> v(x->values.size());
    std::vector<double> xhat(x->values.size());
    std::vector<double> inv(m);
    for (int i = 0; i < m; ++i) {
        const double* row = &x->values[static_cast<size_t>(i) * n];
        double mu = 0.0;
        for (int j = 0; j < n; ++j) mu += row[j];
        mu /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= n;
        inv[i] = 1.0 / std::sqrt(var + eps);
        for (int j = 0; j < n; ++j) {
            const size_t k = static_cast<size_t>(i) * n + j;
            xhat[k] = (row[j] - mu) * inv[i];
            v[k] = xhat[k] * gain->values[j] + bias->values[j];
        }
    }
    return finish("layer_norm_rows", m, n, std::move(v), {x, gain, bias},
                  [x, gain, bias, m, n, xhat = std::move(xhat), inv = std::move(inv)](const Tensor& self) {
                      for (int i = 0; i < m; ++i) {
                          const size_t base = static_cast<size_t>(i) * n;
                          double mean_dxh = 0.0, mean_dxh_xh = 0.0;
                          for (int j = 0; j < n; ++j) {
                              const double dxh = self.grad[base + j] * gain->values[j];
                              mean_dxh += dxh;
                              mean_dxh_xh += dxh * xhat[base + j];
                          }
                          mean_dxh /= n;
                          mean_dxh_xh /= n;
                          for (int j = 0; j < n; ++j) {
                              const double g = self.grad[base + j];
                              if (x->requires_grad) {
                                  const double dxh = g * gain->values[j];
                                  x->grad[base + j] += inv[i] * (dxh - mean_dxh - xhat[base + j] * mean_dxh_xh);
                              }
                              if (gain->requires_grad) gain->grad[j] += g * xhat[base + j];
                              if (bias->requires_grad) bias->grad[j] += g;
                          }
                      }
                  });
}

TensorPtr cross_entropy(const TensorPtr& probs, const std::vector<int>& labels) {
    require_nonnull("cross_entropy", probs);
    const int m = probs->rows, n = probs->cols;
    if (m < 1) throw DegenerateError("cross_entropy: empty batch");
    if (static_cast<int>(labels.size()) != m)
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(m) + " rows");
    constexpr double kClamp = 1e-12;
    double loss = 0.0;
    for (int i = 0; i < m; ++i) {
        if (labels[i] < 0 || labels[i] >= n)
            throw IndexError("cross_entropy: label " + std::to_string(labels[i]) + " outside " +
                             std::to_string(n) + " classes");
        loss -= std::log(std::max(probs->values[static_cast<size_t>(i) * n + labels[i]], kClamp));
    }
    loss /= m;
    return finish("cross_entropy", 1, 1, {loss}, {probs}, [probs, labels, m, n](const Tensor& self) {
        if (!probs->requires_grad) return;
        const double g = self.grad[0];
        for (int i = 0; i < m; ++i) {
            const size_t k = static_cast<size_t>(i) * n + labels[i];
            const double p = probs->values[k];
            if (p > kClamp) probs->grad[k] -= g / (m * p);
        }
    });
}

// ---- composites -------------------------------------------------------------

TensorPtr linear(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b) {
    return add_bias(matmul(x, w), b);
}

TensorPtr mse(const TensorPtr& a, const TensorPtr& b) {
    auto d = sub(a, b);
    return mean_all(mul(d, d));
}

TensorPtr sum_squares(const TensorPtr& a) {
    return sum_all(mul(a, a));
}

}  // namespace feast
