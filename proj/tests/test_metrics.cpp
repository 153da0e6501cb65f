#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "cdhf/metrics.hpp"
#include "cdhf/rng.hpp"
#include "doctest.h"

using namespace cdhf;

namespace {

// Independent oracle: probability a random positive outscores a random
// negative, ties credited half, by direct enumeration of all pairs.
double auroc_bruteforce(const std::vector<double>& scores, const std::vector<int>& labels) {
    double wins = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            ++pairs;
            if (scores[i] > scores[j])
                wins += 1.0;
            else if (scores[i] == scores[j])
                wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

}  // namespace

TEST_CASE("auroc exact cases") {
    CHECK(auroc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, std::vector<int>{1, 1, 0, 0}) == 1.0);
    CHECK(auroc(std::vector<double>{0.3, 0.3, 0.3}, std::vector<int>{1, 0, 1}) == 0.5);
    CHECK(auroc(std::vector<double>{0.9, 0.4, 0.6}, std::vector<int>{1, 0, 1}) == 1.0);
    CHECK(auroc(std::vector<double>{0.1, 0.9}, std::vector<int>{1, 0}) == 0.0);
}

TEST_CASE("auroc single class is an error") {
    CHECK_THROWS_AS(auroc(std::vector<double>{0.1, 0.9}, std::vector<int>{1, 1}), MetricError);
    CHECK_THROWS_AS(auroc(std::vector<double>{}, std::vector<int>{}), MetricError);
}

TEST_CASE("auroc matches brute force on random instances") {
    for (int trial = 0; trial < 100; ++trial) {
        auto seed = rng::substream(13, "auroc-test") + static_cast<std::uint64_t>(trial);
        std::size_t n = 2 + static_cast<std::size_t>(rng::uniform01(seed, 0) * 998);
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        for (std::size_t i = 0; i < n; ++i) {
            // Coarse grid so ties occur often.
            scores[i] = std::floor(rng::uniform01(seed, 2 * i + 1) * 8.0) / 8.0;
            labels[i] = rng::uniform01(seed, 2 * i + 2) < 0.4 ? 1 : 0;
        }
        labels[0] = 1;
        labels[1] = 0;
        CHECK(auroc(scores, labels) == auroc_bruteforce(scores, labels));
    }
}

TEST_CASE("auroc flip symmetry and monotone-transform invariance") {
    std::vector<double> scores = {0.1, 0.5, 0.5, 0.8, 0.3, 0.9};
    std::vector<int> labels = {0, 1, 0, 1, 0, 1};
    std::vector<int> flipped;
    for (int l : labels) flipped.push_back(1 - l);
    CHECK(auroc(scores, labels) + auroc(scores, flipped) == doctest::Approx(1.0));

    std::vector<double> squashed;
    for (double s : scores) squashed.push_back(1.0 / (1.0 + std::exp(-7.0 * s)));
    CHECK(auroc(squashed, labels) == auroc(scores, labels));
}

TEST_CASE("ece boundary cases") {
    std::vector<double> ones = {1.0, 1.0, 1.0};
    CHECK(ece(ones, std::vector<int>{1, 1, 1}) == 0.0);
    CHECK(ece(ones, std::vector<int>{0, 0, 0}) == 1.0);
    std::vector<double> s = {0.25, 0.25, 0.25, 0.25};
    CHECK(ece(s, std::vector<int>{1, 0, 0, 0}) == doctest::Approx(0.0));
}

TEST_CASE("reliability bins partition the sample") {
    std::vector<double> scores;
    std::vector<int> labels;
    for (std::size_t i = 0; i < 500; ++i) {
        scores.push_back(rng::uniform01(5, i));
        labels.push_back(rng::uniform01(6, i) < scores.back() ? 1 : 0);
    }
    auto bins = reliability_bins(scores, labels);
    std::size_t total = 0;
    for (const auto& b : bins) {
        total += b.count;
        CHECK(b.mean_score >= 0.0);
        CHECK(b.mean_score <= 1.0);
    }
    CHECK(total == scores.size());
}

TEST_CASE("classification report exact cases") {
    // Constant majority predictor on 78.9% negative data.
    std::vector<double> scores(1000, 0.3);
    std::vector<int> labels(1000, 0);
    for (std::size_t i = 0; i < 211; ++i) labels[i] = 1;
    auto m = classification_report(scores, labels);
    CHECK(m.accuracy == doctest::Approx(0.789));
    CHECK(m.auroc == 0.5);

    auto perfect =
        classification_report(std::vector<double>{0.9, 0.9, 0.1}, std::vector<int>{1, 1, 0});
    CHECK(perfect.accuracy == 1.0);
    CHECK(perfect.macro_f1 == 1.0);

    auto two = classification_report(std::vector<double>{0.6, 0.4}, std::vector<int>{1, 0});
    CHECK(two.accuracy == 1.0);
}

TEST_CASE("classification report single class is an error") {
    CHECK_THROWS_AS(
        classification_report(std::vector<double>{0.6, 0.4}, std::vector<int>{1, 1}),
        MetricError);
}

TEST_CASE("metric text and csv render") {
    auto m = classification_report(std::vector<double>{0.9, 0.2, 0.7, 0.1},
                                   std::vector<int>{1, 0, 1, 0});
    CHECK(metrics_text(m).find("auroc") != std::string::npos);
    CHECK(metrics_csv(m).find("auroc") != std::string::npos);
}
