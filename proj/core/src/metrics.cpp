#include "fedbal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "fedbal/error.hpp"
#include "fedbal/losses.hpp"

namespace fedbal {

ConfusionMatrix confusion(const std::vector<int>& y_true, const std::vector<int>& y_pred) {
    if (y_true.empty())
        throw DataError("confusion: empty input");
    if (y_true.size() != y_pred.size())
        throw DataError("confusion: label vectors differ in length");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const int t = y_true[i];
        const int p = y_pred[i];
        if ((t != 0 && t != 1) || (p != 0 && p != 1))
            throw DataError("confusion: labels must be 0 or 1");
        if (t == 1)
            p == 1 ? ++cm.tp : ++cm.fn;
        else
            p == 0 ? ++cm.tn : ++cm.fp;
    }
    return cm;
}

std::optional<double> sensitivity(const ConfusionMatrix& cm) {
    const std::size_t denom = cm.tp + cm.fn;
    if (denom == 0)
        return std::nullopt;
    return static_cast<double>(cm.tp) / static_cast<double>(denom);
}

std::optional<double> specificity(const ConfusionMatrix& cm) {
    const std::size_t denom = cm.tn + cm.fp;
    if (denom == 0)
        return std::nullopt;
    return static_cast<double>(cm.tn) / static_cast<double>(denom);
}

double g_mean(const ConfusionMatrix& cm) {
    const double sens = sensitivity(cm).value_or(0.0);
    const double spec = specificity(cm).value_or(0.0);
    return std::sqrt(sens * spec);
}

double accuracy(const ConfusionMatrix& cm) {
    const std::size_t total = cm.total();
    if (total == 0)
        throw EngineError("accuracy: empty confusion matrix");
    return static_cast<double>(cm.tp + cm.tn) / static_cast<double>(total);
}

std::optional<double> auc(const std::vector<double>& scores, const std::vector<int>& y_true) {
    if (scores.size() != y_true.size())
        throw DataError("auc: scores and labels differ in length");
    std::size_t pos = 0;
    std::size_t neg = 0;
    for (int l : y_true) {
        if (l == 1)
            ++pos;
        else if (l == 0)
            ++neg;
        else
            throw DataError("auc: labels must be 0 or 1");
    }
    for (double s : scores)
        if (!std::isfinite(s))
            throw DataError("auc: non-finite score");
    if (pos == 0 || neg == 0)
        return std::nullopt;

    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Mann-Whitney via midranks: tied scores share the average of the ranks
    // they span, which credits each tied (pos, neg) pair exactly 0.5.
    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]])
            ++j;
        const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (std::size_t k = i; k < j; ++k)
            if (y_true[order[k]] == 1)
                pos_rank_sum += midrank;
        i = j;
    }
    const double u = pos_rank_sum
                     - 0.5 * static_cast<double>(pos) * static_cast<double>(pos + 1);
    return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

MetricsReport evaluate(Network& net, const LabeledDataset& data, double threshold) {
    if (data.size() == 0)
        throw DataError("evaluate: empty dataset");
    validate(data);
    if (!(threshold > 0.0 && threshold < 1.0))
        throw ConfigError("evaluate: threshold must lie in (0,1)");
    if (net.output_dim() != 1)
        throw EngineError("evaluate: network must end in a single output unit");

    const bool was_training = net.training();
    net.set_training(false);
    const Matrix scores = net.forward(data.features);
    net.set_training(was_training);

    const std::size_t n = data.size();
    std::vector<double> score_vec(n);
    std::vector<int> y_pred(n);
    std::vector<double> targets(n);
    for (std::size_t i = 0; i < n; ++i) {
        score_vec[i] = scores.at(i, 0);
        y_pred[i] = scores.at(i, 0) >= threshold ? 1 : 0;
        targets[i] = static_cast<double>(data.labels[i]);
    }

    MetricsReport report;
    report.confusion = confusion(data.labels, y_pred);
    report.loss = bce_loss(scores, Matrix::column(targets));
    report.accuracy = accuracy(report.confusion);
    report.auc = auc(score_vec, data.labels);
    report.sensitivity = sensitivity(report.confusion);
    report.specificity = specificity(report.confusion);
    report.g_mean = g_mean(report.confusion);
    return report;
}

double empirical_wasserstein_1d(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty())
        throw DataError("empirical_wasserstein_1d: empty sample");
    for (double v : a)
        if (!std::isfinite(v))
            throw DataError("empirical_wasserstein_1d: non-finite sample");
    for (double v : b)
        if (!std::isfinite(v))
            throw DataError("empirical_wasserstein_1d: non-finite sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());

    const std::size_t n = a.size();
    const std::size_t m = b.size();
    if (n == m) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            acc += std::abs(a[i] - b[i]);
        return acc / static_cast<double>(n);
    }

    // Quantile functions are step functions; integrate |Qa - Qb| over (0,1)
    // in exact units of 1/(n*m) so segment boundaries stay integral.
    double acc = 0.0;
    std::size_t i = 0;
    std::size_t j = 0;
    std::size_t left_a = m;
    std::size_t left_b = n;
    while (i < n && j < m) {
        const std::size_t step = std::min(left_a, left_b);
        acc += static_cast<double>(step) * std::abs(a[i] - b[j]);
        left_a -= step;
        left_b -= step;
        if (left_a == 0) {
            ++i;
            left_a = m;
        }
        if (left_b == 0) {
            ++j;
            left_b = n;
        }
    }
    return acc / (static_cast<double>(n) * static_cast<double>(m));
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt(const std::optional<double>& v) {
    return v ? fmt(*v) : std::string();
}

} // namespace

std::string metrics_csv_header() {
    return "scope,station_id,round,loss,accuracy,auc,g_mean,sensitivity,specificity,"
           "tp,tn,fp,fn";
}

std::string metrics_csv_row(const std::string& scope,
                            std::optional<int> station_id,
                            std::optional<int> round,
                            const MetricsReport& report) {
    std::string row = scope;
    row += ',';
    row += station_id ? std::to_string(*station_id) : std::string();
    row += ',';
    row += round ? std::to_string(*round) : std::string();
    row += ',';
    row += fmt(report.loss);
    row += ',';
    row += fmt(report.accuracy);
    row += ',';
    row += fmt(report.auc);
    row += ',';
    row += fmt(report.g_mean);
    row += ',';
    row += fmt(report.sensitivity);
    row += ',';
    row += fmt(report.specificity);
    row += ',';
    row += std::to_string(report.confusion.tp);
    row += ',';
    row += std::to_string(report.confusion.tn);
    row += ',';
    row += std::to_string(report.confusion.fp);
    row += ',';
    row += std::to_string(report.confusion.fn);
    return row;
}

} // namespace fedbal
