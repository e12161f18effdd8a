#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "fedbal/dataset.hpp"
#include "fedbal/layers.hpp"

namespace fedbal {

/// Binary-classification outcome counts. Positive = label 1 (the minority
/// class by convention).
struct ConfusionMatrix {
    std::size_t tp = 0;
    std::size_t tn = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;

    std::size_t total() const { return tp + tn + fp + fn; }
    bool operator==(const ConfusionMatrix&) const = default;
};

/// Counts agreement between true and predicted labels. Throws DataError on
/// empty input, length mismatch, or labels outside {0,1}.
ConfusionMatrix confusion(const std::vector<int>& y_true, const std::vector<int>& y_pred);

/// tp/(tp+fn); empty when no positives were evaluated.
std::optional<double> sensitivity(const ConfusionMatrix& cm);

/// tn/(tn+fp); empty when no negatives were evaluated.
std::optional<double> specificity(const ConfusionMatrix& cm);

/// Geometric mean of sensitivity and specificity; an undefined factor
/// contributes 0, so the result is always a number in [0,1].
double g_mean(const ConfusionMatrix& cm);

/// (tp+tn)/total. Throws EngineError on an empty matrix.
double accuracy(const ConfusionMatrix& cm);

/// Rank-based AUC: the fraction of (positive, negative) pairs ranked
/// correctly, ties worth 0.5 (Mann-Whitney). Equals the trapezoidal area
/// under the ROC curve. Empty when only one class is present. Throws
/// DataError on length mismatch or non-binary labels.
std::optional<double> auc(const std::vector<double>& scores, const std::vector<int>& y_true);

/// Evaluation summary for one model on one dataset. Metrics that are
/// undefined on degenerate inputs (single-class eval sets) stay empty
/// rather than defaulting to 0.
struct MetricsReport {
    double loss = 0.0;
    double accuracy = 0.0;
    std::optional<double> auc;
    double g_mean = 0.0;
    std::optional<double> sensitivity;
    std::optional<double> specificity;
    ConfusionMatrix confusion;
};

/// Runs the network over the dataset in eval mode and scores the sigmoid
/// outputs against the labels. Scores at or above the threshold predict 1.
/// Throws DataError on an empty dataset, ConfigError unless the threshold
/// lies in (0,1), EngineError unless the network has one output unit.
MetricsReport evaluate(Network& net, const LabeledDataset& data, double threshold = 0.5);

/// Exact optimal-transport cost between two one-dimensional samples with
/// uniform weights. For equal lengths this is the mean absolute difference
/// of the sorted samples; unequal lengths integrate the quantile gap
/// piecewise. Throws DataError if either sample is empty.
double empirical_wasserstein_1d(std::vector<double> a, std::vector<double> b);

/// Column header matching metrics_csv_row.
std::string metrics_csv_header();

/// One CSV row: scope, station_id, round, loss, accuracy, auc, g_mean,
/// sensitivity, specificity, tp, tn, fp, fn. Absent values render as empty
/// cells. No trailing newline.
std::string metrics_csv_row(const std::string& scope,
                            std::optional<int> station_id,
                            std::optional<int> round,
                            const MetricsReport& report);

} // namespace fedbal
