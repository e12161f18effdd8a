#include "fedbal/matrix.hpp"

#include <Eigen/Core>
#include <cmath>

#include "fedbal/error.hpp"

namespace fedbal {

namespace {
using ERowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<ERowMajor>;
using ECMap = Eigen::Map<const ERowMajor>;
} // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m;
    m.rows_ = rows.size();
    m.cols_ = rows.size() == 0 ? 0 : rows.begin()->size();
    m.data_.reserve(m.rows_ * m.cols_);
    for (const auto& r : rows) {
        if (r.size() != m.cols_)
            throw EngineError("Matrix::from_rows: ragged row lengths");
        m.data_.insert(m.data_.end(), r.begin(), r.end());
    }
    return m;
}

Matrix Matrix::row_vector(const std::vector<double>& values) {
    Matrix m(1, values.size());
    m.data_ = values;
    return m;
}

Matrix Matrix::column(const std::vector<double>& values) {
    Matrix m(values.size(), 1);
    m.data_ = values;
    return m;
}

bool Matrix::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void check_finite(const Matrix& m, const char* where) {
    if (!m.all_finite())
        throw EngineError(std::string("non-finite value produced by ") + where);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw EngineError("matmul: inner dimensions disagree");
    Matrix out(a.rows(), b.cols());
    if (out.size() == 0) return out;
    EMap(out.data(), static_cast<Eigen::Index>(out.rows()), static_cast<Eigen::Index>(out.cols()))
        .noalias() =
        ECMap(a.data(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols())) *
        ECMap(b.data(), static_cast<Eigen::Index>(b.rows()), static_cast<Eigen::Index>(b.cols()));
    check_finite(out, "matmul");
    return out;
}

Matrix transposed(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c)
            out.at(c, r) = a.at(r, c);
    return out;
}

} // namespace fedbal
