#include "slotbert/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace slotbert::ag {

bool& grad_enabled() {
    thread_local bool enabled = true;
    return enabled;
}

Var constant(Mat v) {
    auto n = std::make_shared<Node>();
    n->val = std::move(v);
    return n;
}

Var constant_scalar(double v) {
    Mat m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
}

Var param(Mat v) {
    auto n = std::make_shared<Node>();
    n->val = std::move(v);
    n->requires_grad = true;
    return n;
}

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

Var make(Mat val, std::vector<Var> parents, std::function<void(Node&)> backfn) {
    auto n = std::make_shared<Node>();
    n->val = std::move(val);
    if (grad_enabled()) {
        for (const auto& p : parents)
            if (p->requires_grad) { n->requires_grad = true; break; }
        if (n->requires_grad) {
            n->parents = std::move(parents);
            n->backfn = std::move(backfn);
        }
    }
    return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (a->rows() != b->rows() || a->cols() != b->cols())
        throw std::invalid_argument(std::string(op) + ": shape mismatch (" +
                                    std::to_string(a->rows()) + "x" + std::to_string(a->cols()) +
                                    " vs " + std::to_string(b->rows()) + "x" +
                                    std::to_string(b->cols()) + ")");
}

} // namespace

void backward(const Var& loss) {
    if (loss->rows() != 1 || loss->cols() != 1)
        throw std::invalid_argument("backward: loss must be 1x1");
    // iterative post-order DFS over requires_grad subgraph
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack;
    if (loss->requires_grad) stack.push_back({loss.get(), 0});
    seen.insert(loss.get());
    while (!stack.empty()) {
        Node* node = stack.back().first;
        size_t idx = stack.back().second;
        if (idx < node->parents.size()) {
            stack.back().second++;
            Node* p = node->parents[idx].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    loss->g()(0, 0) += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backfn) (*it)->backfn(**it);
}

void zero_grad(const std::vector<Var>& params) {
    for (const auto& p : params) p->grad.resize(0, 0);
}

// -- arithmetic ------------------------------------------------------------

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    return make(a->val + b->val, {a, b}, [a, b](Node& n) {
        if (a->requires_grad) a->g() += n.grad;
        if (b->requires_grad) b->g() += n.grad;
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    return make(a->val - b->val, {a, b}, [a, b](Node& n) {
        if (a->requires_grad) a->g() += n.grad;
        if (b->requires_grad) b->g() -= n.grad;
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    return make(a->val.cwiseProduct(b->val), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) a->g() += n.grad.cwiseProduct(b->val);
        if (b->requires_grad) b->g() += n.grad.cwiseProduct(a->val);
    });
}

Var div(const Var& a, const Var& b) {
    check_same_shape(a, b, "div");
    return make(a->val.cwiseQuotient(b->val), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) a->g() += n.grad.cwiseQuotient(b->val);
        if (b->requires_grad)
            b->g() -= n.grad.cwiseProduct(a->val).cwiseQuotient(b->val.cwiseProduct(b->val));
    });
}

Var matmul(const Var& a, const Var& b) {
    if (a->cols() != b->rows())
        throw std::invalid_argument("matmul: inner dimensions disagree (" +
                                    std::to_string(a->cols()) + " vs " +
                                    std::to_string(b->rows()) + ")");
    return make(a->val * b->val, {a, b}, [a, b](Node& n) {
        if (a->requires_grad) a->g().noalias() += n.grad * b->val.transpose();
        if (b->requires_grad) b->g().noalias() += a->val.transpose() * n.grad;
    });
}

Var scale(const Var& a, double s) {
    return make(a->val * s, {a}, [a, s](Node& n) {
        if (a->requires_grad) a->g() += n.grad * s;
    });
}

Var add_scalar(const Var& a, double s) {
    return make((a->val.array() + s).matrix(), {a}, [a](Node& n) {
        if (a->requires_grad) a->g() += n.grad;
    });
}

Var transpose(const Var& a) {
    return make(a->val.transpose(), {a}, [a](Node& n) {
        if (a->requires_grad) a->g() += n.grad.transpose();
    });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var add_row_broadcast(const Var& a, const Var& row) {
    if (row->rows() != 1 || row->cols() != a->cols())
        throw std::invalid_argument("add_row_broadcast: row must be 1x" + std::to_string(a->cols()));
    return make(a->val.rowwise() + row->val.row(0), {a, row}, [a, row](Node& n) {
        if (a->requires_grad) a->g() += n.grad;
        if (row->requires_grad) row->g() += n.grad.colwise().sum();
    });
}

Var mul_col_broadcast(const Var& a, const Var& col) {
    if (col->cols() != 1 || col->rows() != a->rows())
        throw std::invalid_argument("mul_col_broadcast: col must be " + std::to_string(a->rows()) + "x1");
    return make((a->val.array().colwise() * col->val.col(0).array()).matrix(), {a, col}, [a, col](Node& n) {
        if (a->requires_grad) a->g() += (n.grad.array().colwise() * col->val.col(0).array()).matrix();
        if (col->requires_grad) col->g() += n.grad.cwiseProduct(a->val).rowwise().sum();
    });
}

Var div_col_broadcast(const Var& a, const Var& col) {
    if (col->cols() != 1 || col->rows() != a->rows())
        throw std::invalid_argument("div_col_broadcast: col must be " + std::to_string(a->rows()) + "x1");
    Mat out = (a->val.array().colwise() / col->val.col(0).array()).matrix();
    return make(std::move(out), {a, col}, [a, col](Node& n) {
        if (a->requires_grad)
            a->g() += (n.grad.array().colwise() / col->val.col(0).array()).matrix();
        if (col->requires_grad) {
            Mat num = n.grad.cwiseProduct(a->val).rowwise().sum();
            col->g() -= (num.array() / (col->val.array() * col->val.array())).matrix();
        }
    });
}

// -- nonlinearities -----------------------------------------------------------

Var relu(const Var& a) {
    return make(a->val.cwiseMax(0.0), {a}, [a](Node& n) {
        if (a->requires_grad)
            a->g() += (a->val.array() > 0.0).cast<double>().matrix().cwiseProduct(n.grad);
    });
}

Var gelu(const Var& a) {
    Mat out = a->val.unaryExpr([](double x) {
        return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    });
    return make(std::move(out), {a}, [a](Node& n) {
        if (!a->requires_grad) return;
        Mat d = a->val.unaryExpr([](double x) {
            double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
            double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
            return cdf + x * pdf;
        });
        a->g() += d.cwiseProduct(n.grad);
    });
}

Var sigmoid(const Var& a) {
    Mat out = a->val.unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    return make(out, {a}, [a, out](Node& n) {
        if (a->requires_grad)
            a->g() += out.cwiseProduct((1.0 - out.array()).matrix()).cwiseProduct(n.grad);
    });
}

Var tanh(const Var& a) {
    Mat out = a->val.array().tanh().matrix();
    return make(out, {a}, [a, out](Node& n) {
        if (a->requires_grad)
            a->g() += ((1.0 - out.array().square()).matrix()).cwiseProduct(n.grad);
    });
}

Var exp(const Var& a) {
    Mat out = a->val.array().exp().matrix();
    return make(out, {a}, [a, out](Node& n) {
        if (a->requires_grad) a->g() += out.cwiseProduct(n.grad);
    });
}

Var log(const Var& a) {
    return make(a->val.array().log().matrix(), {a}, [a](Node& n) {
        if (a->requires_grad) a->g() += n.grad.cwiseQuotient(a->val);
    });
}

Var sqrt(const Var& a) {
    Mat out = a->val.array().sqrt().matrix();
    return make(out, {a}, [a, out](Node& n) {
        if (a->requires_grad)
            a->g() += (n.grad.array() / (2.0 * out.array())).matrix();
    });
}

Var square(const Var& a) { return mul(a, a); }

// -- reductions / normalizations ----------------------------------------------

Var sum(const Var& a) {
    Mat out(1, 1);
    out(0, 0) = a->val.sum();
    return make(std::move(out), {a}, [a](Node& n) {
        if (a->requires_grad) a->g().array() += n.grad(0, 0);
    });
}

Var mean(const Var& a) {
    double inv = 1.0 / static_cast<double>(a->val.size());
    Mat out(1, 1);
    out(0, 0) = a->val.sum() * inv;
    return make(std::move(out), {a}, [a, inv](Node& n) {
        if (a->requires_grad) a->g().array() += n.grad(0, 0) * inv;
    });
}

Var row_sum(const Var& a) {
    return make(a->val.rowwise().sum(), {a}, [a](Node& n) {
        if (a->requires_grad) a->g() += n.grad * Mat::Ones(1, a->cols());
    });
}

Var softmax_rows(const Var& a) {
    Mat out(a->rows(), a->cols());
    for (long i = 0; i < a->rows(); ++i) {
        double mx = a->val.row(i).maxCoeff();
        Eigen::ArrayXd e = (a->val.row(i).array() - mx).exp();
        out.row(i) = (e / e.sum()).matrix();
    }
    return make(out, {a}, [a, out](Node& n) {
        if (!a->requires_grad) return;
        for (long i = 0; i < out.rows(); ++i) {
            double dot = out.row(i).dot(n.grad.row(i));
            a->g().row(i) += out.row(i).cwiseProduct(n.grad.row(i)).matrix() - dot * out.row(i);
        }
    });
}

Var softmax_cols(const Var& a) {
    Mat out(a->rows(), a->cols());
    for (long j = 0; j < a->cols(); ++j) {
        double mx = a->val.col(j).maxCoeff();
        Eigen::ArrayXd e = (a->val.col(j).array() - mx).exp();
        out.col(j) = (e / e.sum()).matrix();
    }
    return make(out, {a}, [a, out](Node& n) {
        if (!a->requires_grad) return;
        for (long j = 0; j < out.cols(); ++j) {
            double dot = out.col(j).dot(n.grad.col(j));
            a->g().col(j) += out.col(j).cwiseProduct(n.grad.col(j)) - dot * out.col(j);
        }
    });
}

Var logsumexp_rows(const Var& a) {
    Mat out(a->rows(), 1);
    Mat soft(a->rows(), a->cols());
    for (long i = 0; i < a->rows(); ++i) {
        double mx = a->val.row(i).maxCoeff();
        Eigen::ArrayXd e = (a->val.row(i).array() - mx).exp();
        double s = e.sum();
        out(i, 0) = mx + std::log(s);
        soft.row(i) = (e / s).matrix();
    }
    return make(std::move(out), {a}, [a, soft](Node& n) {
        if (a->requires_grad)
            a->g() += (soft.array().colwise() * n.grad.col(0).array()).matrix();
    });
}

Var normalize_rows_guarded(const Var& a, double eps) {
    Eigen::VectorXd sums = a->val.rowwise().sum();
    Mat out = Mat::Zero(a->rows(), a->cols());
    for (long i = 0; i < a->rows(); ++i)
        if (sums(i) >= eps) out.row(i) = a->val.row(i) / sums(i);
    return make(out, {a}, [a, sums, eps, out](Node& n) {
        if (!a->requires_grad) return;
        for (long i = 0; i < out.rows(); ++i) {
            if (sums(i) < eps) continue; // dead row: gradient stays zero
            double dot = out.row(i).dot(n.grad.row(i));
            a->g().row(i) += (n.grad.row(i).array() - dot).matrix() / sums(i);
        }
    });
}

Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias, double eps) {
    if (gain->rows() != 1 || gain->cols() != x->cols() || bias->rows() != 1 ||
        bias->cols() != x->cols())
        throw std::invalid_argument("layer_norm_rows: gain/bias must be 1x" + std::to_string(x->cols()));
    long n = x->cols();
    Mat xhat(x->rows(), n);
    Eigen::VectorXd inv_std(x->rows());
    for (long i = 0; i < x->rows(); ++i) {
        double mu = x->val.row(i).mean();
        double var = (x->val.row(i).array() - mu).square().sum() / static_cast<double>(n);
        double is = 1.0 / std::sqrt(var + eps);
        inv_std(i) = is;
        xhat.row(i) = ((x->val.row(i).array() - mu) * is).matrix();
    }
    Mat out = ((xhat.array().rowwise() * gain->val.row(0).array()).rowwise() +
               bias->val.row(0).array())
                  .matrix();
    return make(std::move(out), {x, gain, bias}, [x, gain, bias, xhat, inv_std, n](Node& nd) {
        if (gain->requires_grad) gain->g() += nd.grad.cwiseProduct(xhat).colwise().sum();
        if (bias->requires_grad) bias->g() += nd.grad.colwise().sum();
        if (x->requires_grad) {
            double inv_n = 1.0 / static_cast<double>(n);
            for (long i = 0; i < xhat.rows(); ++i) {
                Eigen::RowVectorXd dxhat =
                    nd.grad.row(i).cwiseProduct(gain->val.row(0));
                double s1 = dxhat.sum();
                double s2 = dxhat.dot(xhat.row(i));
                x->g().row(i) +=
                    inv_std(i) * (dxhat.array() - inv_n * s1 - xhat.row(i).array() * inv_n * s2)
                        .matrix();
            }
        }
    });
}

// -- structural -------------------------------------------------------------

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty input");
    long cols = parts[0]->cols(), rows = 0;
    for (const auto& p : parts) {
        if (p->cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
        rows += p->rows();
    }
    Mat out(rows, cols);
    long at = 0;
    for (const auto& p : parts) {
        out.middleRows(at, p->rows()) = p->val;
        at += p->rows();
    }
    return make(std::move(out), parts, [parts](Node& n) {
        long at = 0;
        for (const auto& p : parts) {
            if (p->requires_grad) p->g() += n.grad.middleRows(at, p->rows());
            at += p->rows();
        }
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty input");
    long rows = parts[0]->rows(), cols = 0;
    for (const auto& p : parts) {
        if (p->rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
        cols += p->cols();
    }
    Mat out(rows, cols);
    long at = 0;
    for (const auto& p : parts) {
        out.middleCols(at, p->cols()) = p->val;
        at += p->cols();
    }
    return make(std::move(out), parts, [parts](Node& n) {
        long at = 0;
        for (const auto& p : parts) {
            if (p->requires_grad) p->g() += n.grad.middleCols(at, p->cols());
            at += p->cols();
        }
    });
}

Var slice_rows(const Var& a, long start, long len) {
    if (start < 0 || len < 0 || start + len > a->rows())
        throw std::invalid_argument("slice_rows: out of range");
    return make(a->val.middleRows(start, len), {a}, [a, start, len](Node& n) {
        if (a->requires_grad) a->g().middleRows(start, len) += n.grad;
    });
}

Var slice_cols(const Var& a, long start, long len) {
    if (start < 0 || len < 0 || start + len > a->cols())
        throw std::invalid_argument("slice_cols: out of range");
    return make(a->val.middleCols(start, len), {a}, [a, start, len](Node& n) {
        if (a->requires_grad) a->g().middleCols(start, len) += n.grad;
    });
}

Var broadcast_rows_add(const Var& slots, long n_repeat, const Var& pos) {
    if (pos->rows() != n_repeat || pos->cols() != slots->cols())
        throw std::invalid_argument("broadcast_rows_add: pos must be " +
                                    std::to_string(n_repeat) + "x" + std::to_string(slots->cols()));
    long k = slots->rows(), d = slots->cols();
    Mat out(k * n_repeat, d);
    for (long i = 0; i < k; ++i)
        out.middleRows(i * n_repeat, n_repeat) = pos->val.rowwise() + slots->val.row(i);
    return make(std::move(out), {slots, pos}, [slots, pos, k, n_repeat](Node& n) {
        for (long i = 0; i < k; ++i) {
            auto block = n.grad.middleRows(i * n_repeat, n_repeat);
            if (slots->requires_grad) slots->g().row(i) += block.colwise().sum();
            if (pos->requires_grad) pos->g() += block;
        }
    });
}

Var zero_diagonal(const Var& a) {
    if (a->rows() != a->cols()) throw std::invalid_argument("zero_diagonal: matrix must be square");
    Mat out = a->val;
    out.diagonal().setZero();
    return make(std::move(out), {a}, [a](Node& n) {
        if (a->requires_grad) {
            Mat g = n.grad;
            g.diagonal().setZero();
            a->g() += g;
        }
    });
}

} // namespace slotbert::ag
