#include "fedbal/dataset.hpp"

#include <cstring>

#include "fedbal/error.hpp"

namespace fedbal {

std::size_t LabeledDataset::count_label(int label) const {
    std::size_t n = 0;
    for (int l : labels)
        if (l == label) ++n;
    return n;
}

int LabeledDataset::minority_label() const {
    return count_label(1) <= count_label(0) ? 1 : 0;
}

Matrix LabeledDataset::rows_with_label(int label) const {
    const std::size_t n = count_label(label);
    Matrix out(n, features.cols());
    std::size_t r = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != label) continue;
        for (std::size_t c = 0; c < features.cols(); ++c) out.at(r, c) = features.at(i, c);
        ++r;
    }
    return out;
}

void LabeledDataset::append_row(const double* row, int label, Provenance origin) {
    Matrix grown(features.rows() + 1, features.cols() == 0 ? 0 : features.cols());
    if (features.size() > 0)
        std::memcpy(grown.data(), features.data(), features.size() * sizeof(double));
    for (std::size_t c = 0; c < grown.cols(); ++c) grown.at(features.rows(), c) = row[c];
    features = std::move(grown);
    labels.push_back(label);
    provenance.push_back(origin);
}

void LabeledDataset::append_rows(const Matrix& rows, int label, Provenance origin) {
    if (features.size() > 0 && rows.cols() != features.cols())
        throw DataError("append_rows: width mismatch");
    Matrix grown(features.rows() + rows.rows(), rows.cols());
    if (features.size() > 0)
        std::memcpy(grown.data(), features.data(), features.size() * sizeof(double));
    std::memcpy(grown.data() + features.size(), rows.data(), rows.size() * sizeof(double));
    features = std::move(grown);
    for (std::size_t r = 0; r < rows.rows(); ++r) {
        labels.push_back(label);
        provenance.push_back(origin);
    }
}

LabeledDataset LabeledDataset::subset(const std::vector<std::size_t>& indices) const {
    LabeledDataset out;
    out.features = Matrix(indices.size(), features.cols());
    out.labels.reserve(indices.size());
    out.provenance.reserve(indices.size());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const std::size_t i = indices[r];
        if (i >= labels.size()) throw DataError("subset: index out of range");
        for (std::size_t c = 0; c < features.cols(); ++c) out.features.at(r, c) = features.at(i, c);
        out.labels.push_back(labels[i]);
        out.provenance.push_back(provenance.empty() ? Provenance::real : provenance[i]);
    }
    return out;
}

void validate(const LabeledDataset& data) {
    if (data.features.rows() != data.labels.size())
        throw DataError("dataset: feature/label row count mismatch");
    if (!data.provenance.empty() && data.provenance.size() != data.labels.size())
        throw DataError("dataset: provenance length mismatch");
    for (int l : data.labels)
        if (l != 0 && l != 1) throw DataError("dataset: labels must be 0 or 1");
}

} // namespace fedbal
