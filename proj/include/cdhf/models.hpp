#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdhf/features.hpp"

namespace cdhf {

class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ModelKind { Logistic, TreeEnsemble };
enum class TreeObjective { Logistic, Squared };

struct LogisticParams {
    double l2_strength = 1e-4;
    int epochs = 200;
    double learning_rate = 0.5;
    std::uint64_t seed = 0;
};

struct TreeEnsembleParams {
    int n_trees = 200;
    int max_depth = 4;
    double learning_rate = 0.1;
    int min_rows_per_leaf = 20;
    std::uint64_t seed = 0;
    TreeObjective objective = TreeObjective::Logistic;
    int max_bins = 256;  // quantile thresholds per feature
    double l2_leaf = 1.0;
};

struct TreeNode {
    int feature = -1;        // -1 marks a leaf
    double threshold = 0.0;  // go left when x[feature] <= threshold
    int left = -1;
    int right = -1;
    double value = 0.0;  // leaf weight

    bool is_leaf() const { return feature < 0; }
};

struct RegressionTree {
    std::vector<TreeNode> nodes;
    double predict(std::span<const double> x) const;
};

struct FeatureImportanceEntry {
    std::string name;
    int feature_index = 0;
    int split_count = 0;
};

struct FeatureImportanceReport {
    std::vector<FeatureImportanceEntry> entries;  // descending by split_count
    int total_internal_nodes = 0;
};

struct TrainingMetadata {
    std::uint64_t seed = 0;
    std::size_t row_count = 0;
    std::string dataset_checksum;
    std::string hyperparameters_json;
    std::vector<double> loss_trace;  // full-data training loss per epoch/tree
};

// A trained acceptance classifier (or squared-loss regressor when built with
// TreeObjective::Squared). Immutable after training; safe for concurrent
// prediction.
class AcceptanceModel {
public:
    ModelKind kind() const { return kind_; }
    TreeObjective objective() const { return objective_; }
    const FeatureSchema& schema() const { return schema_; }
    const std::string& schema_id() const { return schema_id_; }
    const TrainingMetadata& metadata() const { return meta_; }

    // Probability in [0,1]; throws on schema mismatch.
    double predict_proba(const FeatureVector& v) const;
    double predict_proba(std::span<const double> raw) const;
    // Untransformed output (logit, or the regression value).
    double predict_raw(std::span<const double> raw) const;

    // Split counts per feature; tree ensembles only.
    FeatureImportanceReport feature_importance() const;

    std::string to_json() const;
    static AcceptanceModel from_json(const std::string& text);
    void save(const std::string& path) const;
    static AcceptanceModel load(const std::string& path);

    friend AcceptanceModel train_logistic(const TrainingDataset&, const FeatureSchema&,
                                          const LogisticParams&);
    friend AcceptanceModel train_tree_ensemble(const TrainingDataset&, const FeatureSchema&,
                                               const TreeEnsembleParams&);
    friend AcceptanceModel detail_train_tree_core(const TrainingDataset&,
                                                  const FeatureSchema&,
                                                  const std::vector<double>&,
                                                  const TreeEnsembleParams&);

private:
    ModelKind kind_ = ModelKind::Logistic;
    TreeObjective objective_ = TreeObjective::Logistic;
    FeatureSchema schema_;
    std::string schema_id_;
    TrainingMetadata meta_;

    // Standardization fitted on training rows.
    std::vector<double> feature_mean_;
    std::vector<double> feature_scale_;

    // Logistic realization.
    std::vector<double> weights_;
    double bias_ = 0.0;

    // Tree-ensemble realization.
    std::vector<RegressionTree> trees_;
    double base_score_ = 0.0;
};

// Full-batch gradient descent with backtracking; training loss is
// non-increasing across epochs by construction.
AcceptanceModel train_logistic(const TrainingDataset& ds, const FeatureSchema& schema,
                               const LogisticParams& params);

// Gradient boosting, each tree fit to negative gradients with Newton leaf
// weights; exact split search over quantile-binned thresholds.
AcceptanceModel train_tree_ensemble(const TrainingDataset& ds, const FeatureSchema& schema,
                                    const TreeEnsembleParams& params);

// Squared-loss boosting over real-valued targets (dataset labels ignored);
// used for the verification-time feasibility check.
AcceptanceModel train_regression(const TrainingDataset& ds, const FeatureSchema& schema,
                                 const std::vector<double>& targets,
                                 TreeEnsembleParams params);

}  // namespace cdhf
