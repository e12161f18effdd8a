#pragma once

#include <cstdint>
#include <vector>

#include "fedbal/matrix.hpp"

namespace fedbal {

enum class Provenance : std::uint8_t { real, synthetic };

/// Feature rows with binary labels; label 1 is the positive (minority)
/// class throughout.
struct LabeledDataset {
    Matrix features;
    std::vector<int> labels;
    std::vector<Provenance> provenance;

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return features.cols(); }

    std::size_t count_label(int label) const;
    /// The rarer label; ties resolve to 1.
    int minority_label() const;

    /// Rows with the given label, in order.
    Matrix rows_with_label(int label) const;

    void append_row(const double* row, int label, Provenance origin);
    void append_rows(const Matrix& rows, int label, Provenance origin);
    LabeledDataset subset(const std::vector<std::size_t>& indices) const;
};

/// Raises DataError unless row counts line up and labels are binary.
void validate(const LabeledDataset& data);

} // namespace fedbal
