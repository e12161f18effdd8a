#include <algorithm>
#include <cmath>
#include <vector>

#include "fedbal/augment.hpp"
#include "fedbal/error.hpp"

namespace fedbal {

namespace {

double sq_distance(const Matrix& rows, std::size_t a, std::size_t b) {
    double acc = 0.0;
    for (std::size_t c = 0; c < rows.cols(); ++c) {
        const double diff = rows.at(a, c) - rows.at(b, c);
        acc += diff * diff;
    }
    return acc;
}

// k nearest minority neighbors of each minority row; distance ties break
// toward the lower row index so runs replay exactly.
std::vector<std::vector<std::size_t>> neighbor_table(const Matrix& rows, std::size_t k) {
    const std::size_t n = rows.rows();
    std::vector<std::vector<std::size_t>> table(n);
    std::vector<std::pair<double, std::size_t>> dist;
    dist.reserve(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        dist.clear();
        for (std::size_t j = 0; j < n; ++j)
            if (j != i)
                dist.emplace_back(sq_distance(rows, i, j), j);
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k),
                          dist.end());
        table[i].reserve(k);
        for (std::size_t r = 0; r < k; ++r)
            table[i].push_back(dist[r].second);
    }
    return table;
}

} // namespace

Matrix smote(const LabeledDataset& data, const SmoteConfig& cfg, Rng& rng) {
    validate(data);
    if (cfg.k_neighbors == 0)
        throw ConfigError("smote: k_neighbors must be at least 1");
    if (cfg.target && *cfg.target < 0)
        throw ConfigError("smote: negative target");

    const int minority = data.minority_label();
    const std::size_t n_min = data.count_label(minority);
    const std::size_t n_maj = data.size() - n_min;
    if (n_min <= cfg.k_neighbors)
        throw DataError("smote: minority class needs more rows than k_neighbors");

    const std::size_t count = cfg.target ? static_cast<std::size_t>(*cfg.target)
                                         : n_maj - n_min;
    const Matrix rows = data.rows_with_label(minority);
    Matrix out(count, rows.cols());
    if (count == 0)
        return out;

    const auto neighbors = neighbor_table(rows, cfg.k_neighbors);
    for (std::size_t t = 0; t < count; ++t) {
        const std::size_t base = rng.uniform_index(n_min);
        const std::size_t nn = neighbors[base][rng.uniform_index(cfg.k_neighbors)];
        const double u = rng.uniform();
        for (std::size_t c = 0; c < rows.cols(); ++c)
            out.at(t, c) = rows.at(base, c) + u * (rows.at(nn, c) - rows.at(base, c));
    }
    return out;
}

} // namespace fedbal
