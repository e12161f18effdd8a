#include "fedbal/autodiff.hpp"

#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "fedbal/error.hpp"

namespace fedbal {

namespace {

using detail::Node;

Tensor make_op(Matrix value, std::vector<Tensor> parents,
               std::function<std::vector<Tensor>(const Tensor&, const Tensor&)> backward) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    for (const auto& p : parents)
        if (p.requires_grad()) node->requires_grad = true;
    if (node->requires_grad) {
        node->parents = std::move(parents);
        node->backward = std::move(backward);
    }
    Tensor t = wrap_node(std::move(node));
    return t;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.value().same_shape(b.value()))
        throw EngineError(std::string(op) + ": shape mismatch");
}

Matrix zip(const Matrix& a, const Matrix& b, double (*f)(double, double), const char* op) {
    Matrix out(a.rows(), a.cols());
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::size_t i = 0; i < out.size(); ++i) po[i] = f(pa[i], pb[i]);
    check_finite(out, op);
    return out;
}

} // namespace

Tensor wrap_node(std::shared_ptr<detail::Node> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
}

Tensor Tensor::constant(Matrix value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    return wrap_node(std::move(node));
}

Tensor Tensor::leaf(Matrix value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = true;
    return wrap_node(std::move(node));
}

const Matrix& Tensor::value() const {
    if (!node_) throw EngineError("use of undefined Tensor");
    return node_->value;
}

Matrix& Tensor::mutable_value() {
    if (!node_) throw EngineError("use of undefined Tensor");
    return node_->value;
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    return make_op(zip(a.value(), b.value(), [](double x, double y) { return x + y; }, "add"),
                   {a, b}, [](const Tensor& up, const Tensor&) {
                       return std::vector<Tensor>{up, up};
                   });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    return make_op(zip(a.value(), b.value(), [](double x, double y) { return x - y; }, "sub"),
                   {a, b}, [](const Tensor& up, const Tensor&) {
                       return std::vector<Tensor>{up, neg(up)};
                   });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    return make_op(zip(a.value(), b.value(), [](double x, double y) { return x * y; }, "mul"),
                   {a, b}, [a, b](const Tensor& up, const Tensor&) {
                       return std::vector<Tensor>{mul(up, b), mul(up, a)};
                   });
}

Tensor div(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "div");
    return make_op(zip(a.value(), b.value(), [](double x, double y) { return x / y; }, "div"),
                   {a, b}, [a, b](const Tensor& up, const Tensor&) {
                       Tensor ga = div(up, b);
                       Tensor gb = neg(div(mul(up, a), mul(b, b)));
                       return std::vector<Tensor>{ga, gb};
                   });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    return make_op(matmul(a.value(), b.value()), {a, b},
                   [a, b](const Tensor& up, const Tensor&) {
                       Tensor ga = matmul(up, transpose(b));
                       Tensor gb = matmul(transpose(a), up);
                       return std::vector<Tensor>{ga, gb};
                   });
}

Tensor transpose(const Tensor& a) {
    return make_op(transposed(a.value()), {a}, [](const Tensor& up, const Tensor&) {
        return std::vector<Tensor>{transpose(up)};
    });
}

Tensor scalar_mul(const Tensor& a, double s) {
    Matrix out = a.value();
    for (double& v : out.values()) v *= s;
    check_finite(out, "scalar_mul");
    return make_op(std::move(out), {a}, [s](const Tensor& up, const Tensor&) {
        return std::vector<Tensor>{scalar_mul(up, s)};
    });
}

Tensor scalar_add(const Tensor& a, double s) {
    Matrix out = a.value();
    for (double& v : out.values()) v += s;
    check_finite(out, "scalar_add");
    return make_op(std::move(out), {a}, [](const Tensor& up, const Tensor&) {
        return std::vector<Tensor>{up};
    });
}

Tensor neg(const Tensor& a) { return scalar_mul(a, -1.0); }

Tensor add_rowvec(const Tensor& a, const Tensor& row) {
    if (row.rows() != 1 || row.cols() != a.cols())
        throw EngineError("add_rowvec: row vector shape mismatch");
    Matrix out = a.value();
    const double* pr = row.value().data();
    for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t c = 0; c < out.cols(); ++c) out.at(r, c) += pr[c];
    check_finite(out, "add_rowvec");
    return make_op(std::move(out), {a, row}, [](const Tensor& up, const Tensor&) {
        return std::vector<Tensor>{up, col_sum(up)};
    });
}

Tensor mul_rowvec(const Tensor& a, const Tensor& row) {
    if (row.rows() != 1 || row.cols() != a.cols())
        throw EngineError("mul_rowvec: row vector shape mismatch");
    Matrix out = a.value();
    const double* pr = row.value().data();
    for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t c = 0; c < out.cols(); ++c) out.at(r, c) *= pr[c];
    check_finite(out, "mul_rowvec");
    return make_op(std::move(out), {a, row}, [a, row](const Tensor& up, const Tensor&) {
        Tensor ga = mul_rowvec(up, row);
        Tensor gb = col_sum(mul(up, a));
        return std::vector<Tensor>{ga, gb};
    });
}

Tensor col_sum(const Tensor& a) {
    Matrix out(1, a.cols());
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) out.at(0, c) += a.value().at(r, c);
    check_finite(out, "col_sum");
    const std::size_t n = a.rows();
    return make_op(std::move(out), {a}, [n](const Tensor& up, const Tensor&) {
        return std::vector<Tensor>{broadcast_rows(up, n)};
    });
}

Tensor row_sum(const Tensor& a) {
    Matrix out(a.rows(), 1);
    for (std::size_t r = 0; r < a.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < a.cols(); ++c) s += a.value().at(r, c);
        out.at(r, 0) = s;
    }
    check_finite(out, "row_sum");
    const std::size_t d = a.cols();
    return make_op(std::move(out), {a}, [d](const Tensor& up, const Tensor&) {
        return std::vector<Tensor>{broadcast_cols(up, d)};
    });
}

Tensor broadcast_rows(const Tensor& row, std::size_t n) {
    if (row.rows() != 1) throw EngineError("broadcast_rows: expected 1 x d input");
    Matrix out(n, row.cols());
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < row.cols(); ++c) out.at(r, c) = row.value().at(0, c);
    return make_op(std::move(out), {row}, [](const Tensor& up, const Tensor&) {
        return std::vector<Tensor>{col_sum(up)};
    });
}

Tensor broadcast_cols(const Tensor& col, std::size_t d) {
    if (col.cols() != 1) throw EngineError("broadcast_cols: expected n x 1 input");
    Matrix out(col.rows(), d);
    for (std::size_t r = 0; r < col.rows(); ++r)
        for (std::size_t c = 0; c < d; ++c) out.at(r, c) = col.value().at(r, 0);
    return make_op(std::move(out), {col}, [](const Tensor& up, const Tensor&) {
        return std::vector<Tensor>{row_sum(up)};
    });
}

Tensor sum_all(const Tensor& a) {
    double s = 0.0;
    for (double v : a.value().values()) s += v;
    Matrix out(1, 1, s);
    check_finite(out, "sum_all");
    const std::size_t r = a.rows(), c = a.cols();
    return make_op(std::move(out), {a}, [r, c](const Tensor& up, const Tensor&) {
        return std::vector<Tensor>{broadcast_full(up, r, c)};
    });
}

Tensor mean_all(const Tensor& a) {
    if (a.value().size() == 0) throw EngineError("mean_all: empty tensor");
    return scalar_mul(sum_all(a), 1.0 / static_cast<double>(a.value().size()));
}

Tensor broadcast_full(const Tensor& scalar, std::size_t rows, std::size_t cols) {
    if (scalar.rows() != 1 || scalar.cols() != 1)
        throw EngineError("broadcast_full: expected 1 x 1 input");
    Matrix out(rows, cols, scalar.value().at(0, 0));
    return make_op(std::move(out), {scalar}, [](const Tensor& up, const Tensor&) {
        return std::vector<Tensor>{sum_all(up)};
    });
}

Tensor relu(const Tensor& a) {
    Matrix out = a.value();
    for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
    // The active-set mask is a constant: second derivative of relu is
    // treated as zero everywhere.
    Matrix mask(a.rows(), a.cols());
    for (std::size_t i = 0; i < mask.size(); ++i)
        mask.values()[i] = a.value().values()[i] > 0.0 ? 1.0 : 0.0;
    Tensor mask_t = Tensor::constant(std::move(mask));
    return make_op(std::move(out), {a}, [mask_t](const Tensor& up, const Tensor&) {
        return std::vector<Tensor>{mul(up, mask_t)};
    });
}

Tensor sigmoid(const Tensor& a) {
    Matrix out = a.value();
    for (double& v : out.values()) {
        if (v >= 0.0) {
            v = 1.0 / (1.0 + std::exp(-v));
        } else {
            const double e = std::exp(v);
            v = e / (1.0 + e);
        }
    }
    check_finite(out, "sigmoid");
    return make_op(std::move(out), {a}, [](const Tensor& up, const Tensor& self) {
        // d sigma = sigma * (1 - sigma), kept on the record via `self`.
        Tensor one_minus = scalar_add(neg(self), 1.0);
        return std::vector<Tensor>{mul(up, mul(self, one_minus))};
    });
}

Tensor log(const Tensor& a) {
    Matrix out = a.value();
    for (double& v : out.values()) v = std::log(v);
    check_finite(out, "log");
    return make_op(std::move(out), {a}, [a](const Tensor& up, const Tensor&) {
        return std::vector<Tensor>{div(up, a)};
    });
}

Tensor sqrt(const Tensor& a) {
    Matrix out = a.value();
    for (double& v : out.values()) v = std::sqrt(v);
    check_finite(out, "sqrt");
    return make_op(std::move(out), {a}, [](const Tensor& up, const Tensor& self) {
        return std::vector<Tensor>{div(scalar_mul(up, 0.5), self)};
    });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    Matrix out = a.value();
    Matrix mask(a.rows(), a.cols());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double v = out.values()[i];
        mask.values()[i] = (v >= lo && v <= hi) ? 1.0 : 0.0;
        out.values()[i] = v < lo ? lo : (v > hi ? hi : v);
    }
    Tensor mask_t = Tensor::constant(std::move(mask));
    return make_op(std::move(out), {a}, [mask_t](const Tensor& up, const Tensor&) {
        return std::vector<Tensor>{mul(up, mask_t)};
    });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows()) throw EngineError("concat_cols: row count mismatch");
    Matrix out(a.rows(), a.cols() + b.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t c = 0; c < a.cols(); ++c) out.at(r, c) = a.value().at(r, c);
        for (std::size_t c = 0; c < b.cols(); ++c) out.at(r, a.cols() + c) = b.value().at(r, c);
    }
    const std::size_t ca = a.cols(), cb = b.cols();
    return make_op(std::move(out), {a, b}, [ca, cb](const Tensor& up, const Tensor&) {
        return std::vector<Tensor>{slice_cols(up, 0, ca), slice_cols(up, ca, ca + cb)};
    });
}

Tensor slice_cols(const Tensor& a, std::size_t first, std::size_t last) {
    if (first > last || last > a.cols()) throw EngineError("slice_cols: range out of bounds");
    Matrix out(a.rows(), last - first);
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = first; c < last; ++c) out.at(r, c - first) = a.value().at(r, c);
    const std::size_t total = a.cols();
    return make_op(std::move(out), {a}, [first, total](const Tensor& up, const Tensor&) {
        // Pad the slice gradient back into the full width with zero blocks.
        std::vector<Tensor> parts;
        if (first > 0)
            parts.push_back(Tensor::constant(Matrix(up.rows(), first, 0.0)));
        parts.push_back(up);
        const std::size_t tail = total - first - up.cols();
        if (tail > 0)
            parts.push_back(Tensor::constant(Matrix(up.rows(), tail, 0.0)));
        Tensor acc = parts[0];
        for (std::size_t i = 1; i < parts.size(); ++i) acc = concat_cols(acc, parts[i]);
        return std::vector<Tensor>{acc};
    });
}

std::vector<Tensor> gradients(const Tensor& output, const std::vector<Tensor>& wrt) {
    if (!output.defined()) throw EngineError("gradients: undefined output");

    // Post-order over the recorded ops, restricted to the differentiable part.
    std::vector<Tensor> order;
    std::unordered_set<Node*> visited;
    struct Frame {
        Tensor tensor;
        std::size_t next_parent;
    };
    std::vector<Frame> stack;
    if (output.requires_grad()) {
        stack.push_back({output, 0});
        visited.insert(output.node());
    }
    while (!stack.empty()) {
        Frame& f = stack.back();
        Node* node = f.tensor.node();
        if (f.next_parent < node->parents.size()) {
            const Tensor& parent = node->parents[f.next_parent++];
            if (parent.requires_grad() && !visited.count(parent.node())) {
                visited.insert(parent.node());
                stack.push_back({parent, 0});
            }
        } else {
            order.push_back(f.tensor);
            stack.pop_back();
        }
    }

    std::unordered_map<Node*, Tensor> grad;
    if (output.requires_grad())
        grad[output.node()] =
            Tensor::constant(Matrix(output.rows(), output.cols(), 1.0));

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const Tensor& self = *it;
        Node* node = self.node();
        auto found = grad.find(node);
        if (found == grad.end() || !node->backward) continue;
        std::vector<Tensor> contribs = node->backward(found->second, self);
        if (contribs.size() != node->parents.size())
            throw EngineError("gradients: backward arity mismatch");
        for (std::size_t i = 0; i < contribs.size(); ++i) {
            const Tensor& parent = node->parents[i];
            if (!parent.requires_grad() || !contribs[i].defined()) continue;
            auto slot = grad.find(parent.node());
            if (slot == grad.end())
                grad[parent.node()] = contribs[i];
            else
                slot->second = add(slot->second, contribs[i]);
        }
    }

    std::vector<Tensor> out;
    out.reserve(wrt.size());
    for (const Tensor& w : wrt) {
        auto found = w.defined() ? grad.find(w.node()) : grad.end();
        if (found != grad.end())
            out.push_back(found->second);
        else
            out.push_back(Tensor::constant(Matrix(w.rows(), w.cols(), 0.0)));
    }
    return out;
}

} // namespace fedbal
