#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace fedbal {

/// Dense row-major matrix of doubles; the value type everything in the
/// engine computes on.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Matrix row_vector(const std::vector<double>& values);
    static Matrix column(const std::vector<double>& values);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    bool all_finite() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Raises EngineError if any entry is NaN/Inf; `where` names the operation.
void check_finite(const Matrix& m, const char* where);

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transposed(const Matrix& a);

} // namespace fedbal
