#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cdhf {

class MetricError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ReliabilityBin {
    double mean_score = 0.0;
    double empirical_rate = 0.0;
    std::size_t count = 0;
};

struct ClassifierMetrics {
    double auroc = 0.0;
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    double ece = 0.0;
    std::vector<ReliabilityBin> reliability;
};

// Probability that a random positive outscores a random negative, ties
// credited 0.5 (rank statistic). Throws when only one class is present.
double auroc(std::span<const double> scores, std::span<const int> labels);

// Expected calibration error with equal-width bins on [0,1]; empty bins
// skipped.
double ece(std::span<const double> scores, std::span<const int> labels, int n_bins = 10);

std::vector<ReliabilityBin> reliability_bins(std::span<const double> scores,
                                             std::span<const int> labels, int n_bins = 10);

ClassifierMetrics classification_report(std::span<const double> scores,
                                        std::span<const int> labels,
                                        double threshold = 0.5, int ece_bins = 10);

std::string metrics_text(const ClassifierMetrics& m);
std::string metrics_csv(const ClassifierMetrics& m);

}  // namespace cdhf
