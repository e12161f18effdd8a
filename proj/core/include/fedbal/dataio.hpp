#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fedbal/dataset.hpp"
#include "fedbal/matrix.hpp"

namespace fedbal {

/// Column mapping for ingesting a stations CSV. Label cells are matched
/// exactly (no trimming); an empty cell means missing.
struct Schema {
    std::string station_column;
    std::vector<std::string> feature_columns;
    std::string label_column;
    std::vector<std::string> positive_labels = {"Yes", "1"};
    std::vector<std::string> negative_labels = {"No", "0"};
};

void validate_schema(const Schema& schema);

/// One station's rows as loaded: missing feature cells are NaN and a
/// missing label is -1 until clean() drops it. Counts cover mapped labels
/// only.
struct StationPartition {
    int station_id = 0;
    std::string station_name;
    LabeledDataset data;
    std::size_t minority_count = 0;
    std::size_t majority_count = 0;
    double imbalance_ratio = 0.0;

    void refresh_stats();
};

/// Groups rows by the station column, ordered by station id. Station ids
/// come from the cell values when every one parses as an integer,
/// otherwise stations are numbered 1..k in order of first appearance.
std::vector<StationPartition> load_csv(const std::filesystem::path& path,
                                       const Schema& schema);

struct CleaningReport {
    std::size_t rows_dropped = 0;
    std::size_t cells_imputed = 0;
    std::string text() const;
};

/// Drops rows whose label is missing, then imputes missing feature cells
/// with the column median over the partition. Idempotent.
CleaningReport clean(StationPartition& partition);

std::size_t drop_missing_labels(LabeledDataset& data);
/// Per-column medians over observed (non-NaN) values.
std::vector<double> column_medians(const Matrix& features);
std::size_t impute_missing(Matrix& features, const std::vector<double>& medians);

struct SplitSpec {
    double train = 0.70;
    double validation = 0.15;
    double test = 0.15;
    bool stratified = true;
    std::uint64_t seed = 0;
};

void validate_split_spec(const SplitSpec& spec);

struct SplitResult {
    LabeledDataset train;
    LabeledDataset validation;
    LabeledDataset test;
};

/// Seeded shuffle then largest-remainder allocation, within each class
/// when stratified. Every row lands in exactly one part.
SplitResult split(const LabeledDataset& data, const SplitSpec& spec);

struct ScalingParams {
    std::vector<double> min_v;
    std::vector<double> max_v;
    std::vector<std::uint8_t> degenerate;  // constant column in the fit split
};

ScalingParams fit_minmax(const Matrix& train_features);
/// x' = (x - min) / (max - min); degenerate columns map to 0.5. Clamp is
/// for data the parameters were not fit on.
void apply_minmax(Matrix& features, const ScalingParams& params, bool clamp);
void invert_minmax(Matrix& features, const ScalingParams& params);
/// Fits on the train split and transforms all three; validation and test
/// are clamped to [0, 1].
ScalingParams scale_minmax(SplitResult& splits);

/// minority / (minority + majority)
double imbalance_ratio(std::size_t minority, std::size_t majority);
/// The same ratio rounded half-up to two decimals, computed in integers.
double imbalance_ratio_2dp(std::size_t minority, std::size_t majority);

/// Two Gaussian point clouds clipped to [0, 1]; class 0 rows first.
LabeledDataset make_blobs(std::size_t n_negative, std::size_t n_positive, std::size_t dims,
                          double negative_mean, double positive_mean, double stddev,
                          std::uint64_t seed);

/// The per-station preparation pipeline: drop unlabeled rows, split,
/// impute with train-split medians, scale with train-split min/max.
struct StationSplits {
    int station_id = 0;
    std::string station_name;
    SplitResult splits;
    CleaningReport cleaning;
    ScalingParams scaling;
};

StationSplits prepare_station(const StationPartition& partition, const SplitSpec& spec);

} // namespace fedbal
