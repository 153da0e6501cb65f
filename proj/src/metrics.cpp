#include "cdhf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace cdhf {

namespace {

void check_two_classes(std::span<const int> labels) {
    bool pos = false, neg = false;
    for (int l : labels) (l ? pos : neg) = true;
    if (!pos || !neg) throw MetricError("both classes must be present");
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw MetricError("scores/labels length mismatch");
    check_two_classes(labels);
    const std::size_t n = scores.size();

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Sum of positive ranks with midranks for ties (Mann-Whitney).
    double pos_rank_sum = 0.0;
    std::size_t n_pos = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        double midrank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]]) {
                pos_rank_sum += midrank;
                ++n_pos;
            }
        i = j;
    }
    std::size_t n_neg = n - n_pos;
    double u = pos_rank_sum - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::vector<ReliabilityBin> reliability_bins(std::span<const double> scores,
                                             std::span<const int> labels, int n_bins) {
    if (scores.size() != labels.size()) throw MetricError("scores/labels length mismatch");
    if (n_bins < 1) throw MetricError("n_bins must be >= 1");
    std::vector<double> score_sum(static_cast<std::size_t>(n_bins), 0.0);
    std::vector<double> label_sum(static_cast<std::size_t>(n_bins), 0.0);
    std::vector<std::size_t> count(static_cast<std::size_t>(n_bins), 0);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        double s = scores[i];
        if (s < 0.0 || s > 1.0) throw MetricError("score outside [0,1]");
        int b = std::min(static_cast<int>(s * n_bins), n_bins - 1);
        score_sum[static_cast<std::size_t>(b)] += s;
        label_sum[static_cast<std::size_t>(b)] += labels[i];
        ++count[static_cast<std::size_t>(b)];
    }
    std::vector<ReliabilityBin> bins;
    for (int b = 0; b < n_bins; ++b) {
        auto c = count[static_cast<std::size_t>(b)];
        if (c == 0) continue;
        bins.push_back({score_sum[static_cast<std::size_t>(b)] / static_cast<double>(c),
                        label_sum[static_cast<std::size_t>(b)] / static_cast<double>(c), c});
    }
    return bins;
}

double ece(std::span<const double> scores, std::span<const int> labels, int n_bins) {
    auto bins = reliability_bins(scores, labels, n_bins);
    double total = static_cast<double>(scores.size());
    double e = 0.0;
    for (const auto& b : bins)
        e += (static_cast<double>(b.count) / total) * std::abs(b.mean_score - b.empirical_rate);
    return e;
}

ClassifierMetrics classification_report(std::span<const double> scores,
                                        std::span<const int> labels,
                                        double threshold, int ece_bins) {
    check_two_classes(labels);
    ClassifierMetrics m;
    m.auroc = auroc(scores, labels);
    m.ece = ece(scores, labels, ece_bins);
    m.reliability = reliability_bins(scores, labels, ece_bins);

    std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        bool pred = scores[i] > threshold;
        if (pred && labels[i]) ++tp;
        else if (pred && !labels[i]) ++fp;
        else if (!pred && labels[i]) ++fn;
        else ++tn;
    }
    double n = static_cast<double>(scores.size());
    m.accuracy = static_cast<double>(tp + tn) / n;

    auto f1 = [](std::size_t tp_, std::size_t fp_, std::size_t fn_) {
        double denom = static_cast<double>(2 * tp_ + fp_ + fn_);
        return denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(tp_) / denom;
    };
    m.macro_f1 = 0.5 * (f1(tp, fp, fn) + f1(tn, fn, fp));
    return m;
}

std::string metrics_text(const ClassifierMetrics& m) {
    std::ostringstream out;
    out << "auroc:     " << m.auroc << '\n'
        << "accuracy:  " << m.accuracy << '\n'
        << "macro_f1:  " << m.macro_f1 << '\n'
        << "ece:       " << m.ece << '\n'
        << "reliability (mean_score, empirical_rate, count):\n";
    for (const auto& b : m.reliability)
        out << "  " << b.mean_score << ", " << b.empirical_rate << ", " << b.count << '\n';
    return out.str();
}

std::string metrics_csv(const ClassifierMetrics& m) {
    std::ostringstream out;
    out.precision(17);
    out << "auroc,accuracy,macro_f1,ece\n"
        << m.auroc << ',' << m.accuracy << ',' << m.macro_f1 << ',' << m.ece << '\n';
    return out.str();
}

}  // namespace cdhf
