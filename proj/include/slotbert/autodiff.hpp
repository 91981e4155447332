#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <string>
#include <vector>

// Reverse-mode autodiff on dense double matrices. Define-by-run: every op
// returns a new Var holding its value plus a closure that scatters incoming
// gradients to the parents. backward() runs the closures in reverse
// topological order. All math is 64-bit so analytic gradients can be checked
// against central finite differences at tight tolerances.

namespace slotbert::ag {

using Mat = Eigen::MatrixXd;

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Mat val;
    Mat grad; // empty until needed
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backfn;

    Mat& g() {
        if (grad.size() == 0) grad = Mat::Zero(val.rows(), val.cols());
        return grad;
    }
    long rows() const { return val.rows(); }
    long cols() const { return val.cols(); }
};

// When false, ops compute values only (no tape). Used for inference.
bool& grad_enabled();

struct NoGradGuard {
    NoGradGuard() : prev_(grad_enabled()) { grad_enabled() = false; }
    ~NoGradGuard() { grad_enabled() = prev_; }
private:
    bool prev_;
};

Var constant(Mat v);
Var constant_scalar(double v);
Var param(Mat v); // leaf with requires_grad = true

void backward(const Var& loss); // loss must be 1x1
void zero_grad(const std::vector<Var>& params);

// -- arithmetic ------------------------------------------------------------
Var add(const Var& a, const Var& b);        // same shape
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);        // elementwise
Var div(const Var& a, const Var& b);        // elementwise
Var matmul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var transpose(const Var& a);
Var neg(const Var& a);

// broadcasting helpers
Var add_row_broadcast(const Var& a, const Var& row); // a: MxN, row: 1xN
Var mul_col_broadcast(const Var& a, const Var& col); // a: MxN, col: Mx1
Var div_col_broadcast(const Var& a, const Var& col);

// -- nonlinearities ----------------------------------------------------------
Var relu(const Var& a);
Var gelu(const Var& a); // exact erf form
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var square(const Var& a);

// -- reductions / normalizations --------------------------------------------
Var sum(const Var& a);        // 1x1
Var mean(const Var& a);       // 1x1
Var row_sum(const Var& a);    // Mx1
Var softmax_rows(const Var& a);      // each row sums to 1
Var softmax_cols(const Var& a);      // each column sums to 1
Var logsumexp_rows(const Var& a);    // Mx1, max-subtracted
// rows scaled to sum 1; rows whose sum is below `eps` are left as zeros
Var normalize_rows_guarded(const Var& a, double eps);
// per-row layer norm with learnable gain/bias (1xN each)
Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);

// -- structural -------------------------------------------------------------
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(const Var& a, long start, long len);
Var slice_cols(const Var& a, long start, long len);
// out[(k*n_repeat + r), :] = slots[k, :] + pos[r, :]   (broadcast decoder layout)
Var broadcast_rows_add(const Var& slots, long n_repeat, const Var& pos);
Var zero_diagonal(const Var& a); // square; diagonal forced to exact 0

} // namespace slotbert::ag
