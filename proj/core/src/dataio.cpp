#include "fedbal/dataio.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "fedbal/error.hpp"
#include "fedbal/rng.hpp"

namespace fedbal {

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

std::vector<std::vector<std::string>> parse_csv_text(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool field_started = false;
    std::size_t line = 1;

    auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_row = [&] {
        if (field_started || !row.empty()) {
            end_field();
            rows.push_back(std::move(row));
            row.clear();
        }
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
                if (c == '\n')
                    ++line;
            }
            continue;
        }
        switch (c) {
        case '"':
            if (field.empty())
                quoted = true;
            else
                field += c;  // interior quote, taken literally
            field_started = true;
            break;
        case ',':
            end_field();
            field_started = true;  // a delimiter implies a following field
            break;
        case '\r':
            break;
        case '\n':
            end_row();
            ++line;
            break;
        default:
            field += c;
            field_started = true;
            break;
        }
    }
    if (quoted)
        throw DataError("csv line " + std::to_string(line) + ": unterminated quoted field");
    end_row();
    return rows;
}

double parse_feature(const std::string& cell, std::size_t row_number,
                     const std::string& column) {
    if (cell.empty())
        return kMissing;
    const char* begin = cell.c_str();
    char* end = nullptr;
    const double value = std::strtod(begin, &end);
    if (end != begin + cell.size())
        throw DataError("csv row " + std::to_string(row_number) + ": column '" + column +
                        "' value '" + cell + "' is not numeric");
    return value;
}

bool parse_int(const std::string& text, long long& out) {
    if (text.empty())
        return false;
    const char* begin = text.c_str();
    char* end = nullptr;
    out = std::strtoll(begin, &end, 10);
    return end == begin + text.size() && out >= std::numeric_limits<int>::min() &&
           out <= std::numeric_limits<int>::max();
}

double median_of(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n % 2 == 1)
        return values[n / 2];
    return (values[n / 2 - 1] + values[n / 2]) / 2.0;
}

// floor(f*n) plus largest-remainder distribution of the leftover rows;
// ties go to the earlier part
std::array<std::size_t, 3> allocate_counts(std::size_t n, const SplitSpec& spec) {
    const std::array<double, 3> frac = {spec.train, spec.validation, spec.test};
    std::array<std::size_t, 3> base{};
    std::array<double, 3> rem{};
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        const double ideal = frac[i] * static_cast<double>(n);
        base[i] = static_cast<std::size_t>(std::floor(ideal));
        rem[i] = ideal - std::floor(ideal);
        assigned += base[i];
    }
    std::array<std::size_t, 3> order = {0, 1, 2};
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
    for (std::size_t k = 0; assigned < n; ++k, ++assigned)
        ++base[order[k % 3]];
    return base;
}

void append_indices(const std::vector<std::size_t>& indices, std::size_t from,
                    std::size_t count, std::vector<std::size_t>& out) {
    for (std::size_t i = 0; i < count; ++i)
        out.push_back(indices[from + i]);
}

} // namespace

void validate_schema(const Schema& schema) {
    if (schema.station_column.empty())
        throw ConfigError("schema: station_column is empty");
    if (schema.label_column.empty())
        throw ConfigError("schema: label_column is empty");
    if (schema.feature_columns.empty())
        throw ConfigError("schema: no feature columns");
    std::unordered_set<std::string> seen;
    for (const std::string& name : schema.feature_columns) {
        if (name.empty())
            throw ConfigError("schema: empty feature column name");
        if (!seen.insert(name).second)
            throw ConfigError("schema: duplicate feature column '" + name + "'");
    }
    if (seen.count(schema.label_column))
        throw ConfigError("schema: label column repeats a feature column");
    if (seen.count(schema.station_column))
        throw ConfigError("schema: station column repeats a feature column");
    if (schema.positive_labels.empty() || schema.negative_labels.empty())
        throw ConfigError("schema: label value sets must be non-empty");
    for (const std::string& v : schema.positive_labels)
        for (const std::string& w : schema.negative_labels)
            if (v == w)
                throw ConfigError("schema: label value '" + v + "' is both positive and negative");
}

void StationPartition::refresh_stats() {
    const std::size_t pos = data.count_label(1);
    const std::size_t neg = data.count_label(0);
    minority_count = std::min(pos, neg);
    majority_count = std::max(pos, neg);
    const std::size_t total = pos + neg;
    imbalance_ratio =
        total == 0 ? 0.0
                   : static_cast<double>(minority_count) / static_cast<double>(total);
}

std::vector<StationPartition> load_csv(const std::filesystem::path& path,
                                       const Schema& schema) {
    validate_schema(schema);
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open csv file: " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    const std::string text = buffer.str();

    const std::vector<std::vector<std::string>> rows = parse_csv_text(text);
    if (rows.empty())
        throw DataError("csv file is empty: " + path.string());

    const std::vector<std::string>& header = rows.front();
    auto column_index = [&](const std::string& name) {
        std::size_t found = header.size();
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) {
                if (found != header.size())
                    throw DataError("csv header repeats column '" + name + "'");
                found = i;
            }
        }
        if (found == header.size())
            throw DataError("csv header is missing column '" + name + "'");
        return found;
    };

    const std::size_t station_col = column_index(schema.station_column);
    const std::size_t label_col = column_index(schema.label_column);
    std::vector<std::size_t> feature_cols;
    feature_cols.reserve(schema.feature_columns.size());
    for (const std::string& name : schema.feature_columns)
        feature_cols.push_back(column_index(name));

    auto label_of = [&](const std::string& cell, std::size_t row_number) {
        if (cell.empty())
            return -1;
        for (const std::string& v : schema.positive_labels)
            if (cell == v)
                return 1;
        for (const std::string& v : schema.negative_labels)
            if (cell == v)
                return 0;
        throw DataError("csv row " + std::to_string(row_number) + ": unmappable label value '" +
                        cell + "'");
    };

    struct Bucket {
        std::string name;
        std::vector<double> features;
        std::vector<int> labels;
    };
    std::vector<Bucket> buckets;
    std::unordered_map<std::string, std::size_t> bucket_of;

    const std::size_t dim = feature_cols.size();
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const std::vector<std::string>& cells = rows[r];
        const std::size_t row_number = r + 1;
        if (cells.size() != header.size())
            throw DataError("csv row " + std::to_string(row_number) + ": expected " +
                            std::to_string(header.size()) + " fields, got " +
                            std::to_string(cells.size()));

        const std::string& station = cells[station_col];
        auto [it, inserted] = bucket_of.try_emplace(station, buckets.size());
        if (inserted)
            buckets.push_back({station, {}, {}});
        Bucket& bucket = buckets[it->second];

        for (std::size_t f = 0; f < dim; ++f)
            bucket.features.push_back(
                parse_feature(cells[feature_cols[f]], row_number, schema.feature_columns[f]));
        bucket.labels.push_back(label_of(cells[label_col], row_number));
    }
    if (buckets.empty())
        throw DataError("csv file has a header but no data rows: " + path.string());

    bool numeric_names = true;
    std::vector<long long> parsed_ids(buckets.size());
    for (std::size_t i = 0; i < buckets.size() && numeric_names; ++i)
        numeric_names = parse_int(buckets[i].name, parsed_ids[i]);
    if (numeric_names) {
        // distinct station strings mapping to one id (e.g. "1" and "01")
        // fall back to appearance-order numbering
        std::unordered_set<long long> unique_ids(parsed_ids.begin(), parsed_ids.end());
        if (unique_ids.size() != parsed_ids.size())
            numeric_names = false;
    }

    std::vector<StationPartition> partitions;
    partitions.reserve(buckets.size());
    for (std::size_t i = 0; i < buckets.size(); ++i) {
        StationPartition p;
        p.station_id = numeric_names ? static_cast<int>(parsed_ids[i])
                                     : static_cast<int>(i + 1);
        p.station_name = buckets[i].name;
        const std::size_t n = buckets[i].labels.size();
        p.data.features = Matrix(n, dim);
        std::copy(buckets[i].features.begin(), buckets[i].features.end(),
                  p.data.features.data());
        p.data.labels = std::move(buckets[i].labels);
        p.data.provenance.assign(n, Provenance::real);
        p.refresh_stats();
        partitions.push_back(std::move(p));
    }
    std::sort(partitions.begin(), partitions.end(),
              [](const StationPartition& a, const StationPartition& b) {
                  return a.station_id < b.station_id;
              });
    return partitions;
}

std::string CleaningReport::text() const {
    return "dropped " + std::to_string(rows_dropped) + " rows with missing labels, imputed " +
           std::to_string(cells_imputed) + " feature cells";
}

std::size_t drop_missing_labels(LabeledDataset& data) {
    const std::size_t n = data.size();
    std::vector<std::size_t> keep;
    keep.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        if (data.labels[i] >= 0)
            keep.push_back(i);
    if (keep.size() == n)
        return 0;
    data = data.subset(keep);
    return n - keep.size();
}

std::vector<double> column_medians(const Matrix& features) {
    std::vector<double> medians(features.cols());
    std::vector<double> seen;
    for (std::size_t c = 0; c < features.cols(); ++c) {
        seen.clear();
        for (std::size_t r = 0; r < features.rows(); ++r) {
            const double v = features.at(r, c);
            if (!std::isnan(v))
                seen.push_back(v);
        }
        if (seen.empty())
            throw DataError("feature column " + std::to_string(c) + " has no observed values");
        medians[c] = median_of(seen);
    }
    return medians;
}

std::size_t impute_missing(Matrix& features, const std::vector<double>& medians) {
    if (medians.size() != features.cols())
        throw EngineError("impute: median count does not match feature width");
    std::size_t imputed = 0;
    for (std::size_t r = 0; r < features.rows(); ++r)
        for (std::size_t c = 0; c < features.cols(); ++c)
            if (std::isnan(features.at(r, c))) {
                features.at(r, c) = medians[c];
                ++imputed;
            }
    return imputed;
}

CleaningReport clean(StationPartition& partition) {
    CleaningReport report;
    report.rows_dropped = drop_missing_labels(partition.data);
    if (partition.data.size() > 0)
        report.cells_imputed =
            impute_missing(partition.data.features, column_medians(partition.data.features));
    partition.refresh_stats();
    return report;
}

void validate_split_spec(const SplitSpec& spec) {
    if (!(spec.train > 0.0) || !(spec.validation > 0.0) || !(spec.test > 0.0))
        throw ConfigError("split spec: fractions must be positive");
    const double sum = spec.train + spec.validation + spec.test;
    if (std::abs(sum - 1.0) > 1e-9)
        throw ConfigError("split spec: fractions must sum to 1");
}

SplitResult split(const LabeledDataset& data, const SplitSpec& spec) {
    validate_split_spec(spec);
    validate(data);

    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> val_idx;
    std::vector<std::size_t> test_idx;

    auto assign_group = [&](std::vector<std::size_t>& indices, std::uint64_t stream) {
        Rng rng(derive_seed(spec.seed, "split", stream));
        rng.shuffle(indices);
        const std::array<std::size_t, 3> counts = allocate_counts(indices.size(), spec);
        append_indices(indices, 0, counts[0], train_idx);
        append_indices(indices, counts[0], counts[1], val_idx);
        append_indices(indices, counts[0] + counts[1], counts[2], test_idx);
    };

    if (spec.stratified) {
        for (int label : {0, 1}) {
            std::vector<std::size_t> indices;
            for (std::size_t i = 0; i < data.size(); ++i)
                if (data.labels[i] == label)
                    indices.push_back(i);
            if (indices.size() < 3)
                throw DataError("split: class " + std::to_string(label) + " has " +
                                std::to_string(indices.size()) +
                                " rows, need at least 3 to stratify");
            assign_group(indices, static_cast<std::uint64_t>(label));
        }
    } else {
        std::vector<std::size_t> indices(data.size());
        for (std::size_t i = 0; i < data.size(); ++i)
            indices[i] = i;
        assign_group(indices, 2);
    }

    std::sort(train_idx.begin(), train_idx.end());
    std::sort(val_idx.begin(), val_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    return {data.subset(train_idx), data.subset(val_idx), data.subset(test_idx)};
}

ScalingParams fit_minmax(const Matrix& train_features) {
    if (train_features.rows() == 0 || train_features.cols() == 0)
        throw DataError("scale: empty training features");
    ScalingParams params;
    params.min_v.resize(train_features.cols());
    params.max_v.resize(train_features.cols());
    params.degenerate.resize(train_features.cols());
    for (std::size_t c = 0; c < train_features.cols(); ++c) {
        double lo = train_features.at(0, c);
        double hi = lo;
        for (std::size_t r = 0; r < train_features.rows(); ++r) {
            const double v = train_features.at(r, c);
            if (!std::isfinite(v))
                throw DataError("scale: non-finite value in feature column " +
                                std::to_string(c) + "; impute first");
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        params.min_v[c] = lo;
        params.max_v[c] = hi;
        params.degenerate[c] = hi > lo ? 0 : 1;
    }
    return params;
}

void apply_minmax(Matrix& features, const ScalingParams& params, bool clamp) {
    if (params.min_v.size() != features.cols())
        throw EngineError("scale: parameter width does not match features");
    for (std::size_t r = 0; r < features.rows(); ++r)
        for (std::size_t c = 0; c < features.cols(); ++c) {
            double& v = features.at(r, c);
            if (params.degenerate[c]) {
                v = 0.5;
                continue;
            }
            v = (v - params.min_v[c]) / (params.max_v[c] - params.min_v[c]);
            if (clamp)
                v = std::clamp(v, 0.0, 1.0);
        }
}

void invert_minmax(Matrix& features, const ScalingParams& params) {
    if (params.min_v.size() != features.cols())
        throw EngineError("scale: parameter width does not match features");
    for (std::size_t r = 0; r < features.rows(); ++r)
        for (std::size_t c = 0; c < features.cols(); ++c) {
            double& v = features.at(r, c);
            v = params.degenerate[c]
                    ? params.min_v[c]
                    : params.min_v[c] + v * (params.max_v[c] - params.min_v[c]);
        }
}

ScalingParams scale_minmax(SplitResult& splits) {
    ScalingParams params = fit_minmax(splits.train.features);
    apply_minmax(splits.train.features, params, false);
    apply_minmax(splits.validation.features, params, true);
    apply_minmax(splits.test.features, params, true);
    return params;
}

double imbalance_ratio(std::size_t minority, std::size_t majority) {
    const std::size_t total = minority + majority;
    if (total == 0)
        throw DataError("imbalance ratio: no observations");
    return static_cast<double>(minority) / static_cast<double>(total);
}

double imbalance_ratio_2dp(std::size_t minority, std::size_t majority) {
    const std::size_t total = minority + majority;
    if (total == 0)
        throw DataError("imbalance ratio: no observations");
    // integer half-up rounding of 100 * minority / total
    const std::size_t percent = (200 * minority + total) / (2 * total);
    return static_cast<double>(percent) / 100.0;
}

LabeledDataset make_blobs(std::size_t n_negative, std::size_t n_positive, std::size_t dims,
                          double negative_mean, double positive_mean, double stddev,
                          std::uint64_t seed) {
    if (dims == 0)
        throw ConfigError("make_blobs: dims must be at least 1");
    if (!(stddev > 0.0))
        throw ConfigError("make_blobs: stddev must be positive");

    Rng rng(derive_seed(seed, "blobs", 0));
    LabeledDataset d;
    d.features = Matrix(n_negative + n_positive, dims);
    for (std::size_t i = 0; i < n_negative + n_positive; ++i) {
        const bool positive = i >= n_negative;
        for (std::size_t c = 0; c < dims; ++c)
            d.features.at(i, c) = std::clamp(
                rng.gaussian(positive ? positive_mean : negative_mean, stddev), 0.0, 1.0);
        d.labels.push_back(positive ? 1 : 0);
        d.provenance.push_back(Provenance::real);
    }
    return d;
}

StationSplits prepare_station(const StationPartition& partition, const SplitSpec& spec) {
    StationSplits out;
    out.station_id = partition.station_id;
    out.station_name = partition.station_name;

    LabeledDataset data = partition.data;
    out.cleaning.rows_dropped = drop_missing_labels(data);
    out.splits = split(data, spec);

    const std::vector<double> medians = column_medians(out.splits.train.features);
    out.cleaning.cells_imputed += impute_missing(out.splits.train.features, medians);
    out.cleaning.cells_imputed += impute_missing(out.splits.validation.features, medians);
    out.cleaning.cells_imputed += impute_missing(out.splits.test.features, medians);

    out.scaling = scale_minmax(out.splits);
    return out;
}

} // namespace fedbal
