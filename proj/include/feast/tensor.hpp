#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace feast {

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Dense row-major matrix of doubles with reverse-mode autodiff. Every
// operation below builds a fresh node; graphs are per-forward-pass and a
// graph can be walked backward exactly once. Leaves (parents empty) keep
// their grad buffers across graphs so parameters accumulate until zeroed.
class Tensor : public std::enable_shared_from_this<Tensor> {
public:
    int rows = 0;
    int cols = 0;
    std::vector<double> values;           // rows*cols, row-major
    bool requires_grad = false;
    std::vector<double> grad;             // same layout; allocated when requires_grad
    std::vector<TensorPtr> parents;       // empty for leaves
    std::function<void(const Tensor&)> backward_fn;  // accumulates into parents
    bool consumed = false;                // set once backward has visited this node
    std::string op = "leaf";

    static TensorPtr make(int rows, int cols, std::vector<double> v, bool requires_grad = false);
    static TensorPtr zeros(int rows, int cols, bool requires_grad = false);
    static TensorPtr full(int rows, int cols, double v, bool requires_grad = false);
    static TensorPtr scalar(double v) { return make(1, 1, {v}); }

    int size() const { return rows * cols; }
    bool is_leaf() const { return parents.empty(); }
    double at(int r, int c) const;
    double item() const;                  // value of a 1x1 tensor
    void zero_grad();

    // Throws NumericsError if any stored value is NaN or Inf.
    void check_finite(const char* where) const;
};

// ---- graph ----------------------------------------------------------------

// Reverse-mode sweep from a scalar loss. Seeds d(loss)/d(loss) = 1, visits
// every reachable node exactly once in reverse topological order, and marks
// non-leaf nodes consumed; a second sweep over the same graph is a StateError.
void backward(const TensorPtr& loss);

void zero_grad(const std::vector<TensorPtr>& params);

// Copies values into a fresh leaf with no grad tracking.
TensorPtr detach(const TensorPtr& x);

// ---- primitive operations -------------------------------------------------

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
TensorPtr transpose(const TensorPtr& a);
TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);   // elementwise
TensorPtr div(const TensorPtr& a, const TensorPtr& b);   // elementwise
TensorPtr scale(const TensorPtr& a, double c);
TensorPtr add_scalar(const TensorPtr& a, double c);
TensorPtr add_bias(const TensorPtr& x, const TensorPtr& b);  // b is 1 x cols, added to every row
TensorPtr relu(const TensorPtr& x);
TensorPtr softmax_row(const TensorPtr& x);               // rows sum to 1 within 1e-12
// Unit-norm rows. Zero-norm rows raise DegenerateError unless error_on_zero
// is cleared, in which case they pass through as zero rows.
TensorPtr l2_normalize_rows(const TensorPtr& x, bool error_on_zero = true);
TensorPtr mean_rows(const TensorPtr& x);                 // 1 x cols, mean over rows
TensorPtr sum_all(const TensorPtr& x);                   // 1 x 1
TensorPtr mean_all(const TensorPtr& x);                  // 1 x 1
TensorPtr select_rows(const TensorPtr& x, const std::vector<int>& idx);
TensorPtr select_col(const TensorPtr& x, int col);       // rows x 1
TensorPtr logsumexp_row(const TensorPtr& x);             // rows x 1, max-subtracted
TensorPtr layer_norm_rows(const TensorPtr& x, const TensorPtr& gain, const TensorPtr& bias,
                          double eps = 1e-5);

// Mean over samples of -log p(label), probabilities clamped at 1e-12 before
// the log. probs is rows x C, labels[i] in [0, C).
TensorPtr cross_entropy(const TensorPtr& probs, const std::vector<int>& labels);

// ---- composites (no new backward rules) -----------------------------------

TensorPtr linear(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b);
TensorPtr mse(const TensorPtr& a, const TensorPtr& b);        // mean of squared differences
TensorPtr sum_squares(const TensorPtr& a);                    // squared L2 norm of all entries

}  // namespace feast
