#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "fedbal/matrix.hpp"

namespace fedbal {

namespace detail {
struct Node;
}

/// Handle to a value in the differentiation record. Every operation on
/// Tensors appends a primitive to the record; gradients() walks it in
/// reverse. Backward rules are themselves written in terms of these
/// primitives, so the reverse traversal can be traversed again, which is
/// what the gradient penalty needs for gradients-of-gradients.
class Tensor {
public:
    Tensor() = default;

    static Tensor constant(Matrix value);
    /// A differentiation root (parameter or probed input).
    static Tensor leaf(Matrix value);

    bool defined() const { return node_ != nullptr; }
    const Matrix& value() const;
    /// In-place access for leaves; optimizers update parameters through it.
    Matrix& mutable_value();
    bool requires_grad() const;

    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }

    detail::Node* node() const { return node_.get(); }

private:
    friend Tensor wrap_node(std::shared_ptr<detail::Node> n);
    std::shared_ptr<detail::Node> node_;
};

Tensor wrap_node(std::shared_ptr<detail::Node> n);

namespace detail {
struct Node {
    Matrix value;
    bool requires_grad = false;
    std::vector<Tensor> parents;
    // Returns gradients aligned with `parents` (undefined Tensor = no
    // contribution). Built from Tensor primitives so it is differentiable.
    std::function<std::vector<Tensor>(const Tensor& upstream, const Tensor& self)> backward;
};
} // namespace detail

// Elementwise, same shape.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor scalar_mul(const Tensor& a, double s);
Tensor scalar_add(const Tensor& a, double s);
Tensor neg(const Tensor& a);

// Broadcasting between (n x d) and (1 x d) / (n x 1) shapes.
Tensor add_rowvec(const Tensor& a, const Tensor& row);
Tensor mul_rowvec(const Tensor& a, const Tensor& row);
Tensor col_sum(const Tensor& a);
Tensor row_sum(const Tensor& a);
Tensor broadcast_rows(const Tensor& row, std::size_t n);
Tensor broadcast_cols(const Tensor& col, std::size_t d);
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor broadcast_full(const Tensor& scalar, std::size_t rows, std::size_t cols);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
/// Clamp to [lo, hi]; gradient passes only where the input was in range.
Tensor clamp(const Tensor& a, double lo, double hi);

Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& a, std::size_t first, std::size_t last);

/// d(sum of output elements)/d(each wrt), as graph-connected Tensors, so a
/// returned gradient can be differentiated again. Running it twice over the
/// same record yields identical values. Unreached wrt entries come back as
/// zero tensors.
std::vector<Tensor> gradients(const Tensor& output, const std::vector<Tensor>& wrt);

} // namespace fedbal
