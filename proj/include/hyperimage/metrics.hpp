#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace hyperimage {

// Spearman rank correlation: Pearson correlation of mid-ranks (ties receive
// their average rank). Throws on length mismatch, n < 2, or a constant side.
double srocc(const std::vector<double>& pred, const std::vector<double>& truth);

// Pearson linear correlation, no nonlinear remapping applied beforehand.
double plcc(const std::vector<double>& pred, const std::vector<double>& truth);

// Kendall tau-b (tie-corrected), merge-sort inversion counting.
double kendall(const std::vector<double>& pred, const std::vector<double>& truth);

// fraction of matching {0,1} labels
double accuracy(const std::vector<int>& pred, const std::vector<int>& truth);

struct MetricReport {
    std::optional<double> srocc, plcc, kendall, accuracy;
    std::size_t n = 0;
    int split_index = 0;
};

MetricReport correlation_report(const std::vector<double>& pred, const std::vector<double>& truth,
                                int split_index);

enum class AggStatistic { mean, median };

struct MetricSummary {
    double value = 0.0;  // chosen statistic over splits
    double std_dev = 0.0;
    double min = 0.0;
    double max = 0.0;
    std::size_t n_splits = 0;
};

// one summary per metric present in the reports
std::map<std::string, MetricSummary> aggregate_splits(const std::vector<MetricReport>& reports,
                                                      AggStatistic statistic);

// rows: metric,statistic,value,std,min,max,n_splits
std::string summary_csv(const std::map<std::string, MetricSummary>& mean_summary,
                        const std::map<std::string, MetricSummary>& median_summary);

}  // namespace hyperimage
