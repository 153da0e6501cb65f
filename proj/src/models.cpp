#include "cdhf/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cdhf/checksum.hpp"
#include "json.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cdhf {

using nlohmann::json;

AcceptanceModel detail_train_tree_core(const TrainingDataset& ds, const FeatureSchema& schema,
                                       const std::vector<double>& target_in,
                                       const TreeEnsembleParams& params);

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double clamp_prob(double p) { return std::min(1.0 - 1e-12, std::max(1e-12, p)); }

void check_dataset(const TrainingDataset& ds, const FeatureSchema& schema,
                   bool require_both_classes) {
    if (ds.rows.empty()) throw ModelError("empty training dataset");
    if (ds.schema_id != schema.id()) throw ModelError("dataset/schema id mismatch");
    for (const auto& r : ds.rows)
        if (r.size() != schema.arity()) throw ModelError("row arity mismatch");
    if (require_both_classes) {
        bool pos = false, neg = false;
        for (int l : ds.labels) (l ? pos : neg) = true;
        if (!pos || !neg) throw ModelError("training dataset contains a single class");
    }
}

struct Scaler {
    std::vector<double> mean, scale;

    static Scaler fit(const std::vector<std::vector<double>>& rows, std::size_t arity) {
        Scaler s;
        s.mean.assign(arity, 0.0);
        s.scale.assign(arity, 1.0);
        double n = static_cast<double>(rows.size());
        for (const auto& r : rows)
            for (std::size_t j = 0; j < arity; ++j) s.mean[j] += r[j];
        for (auto& m : s.mean) m /= n;
        std::vector<double> var(arity, 0.0);
        for (const auto& r : rows)
            for (std::size_t j = 0; j < arity; ++j) {
                double d = r[j] - s.mean[j];
                var[j] += d * d;
            }
        for (std::size_t j = 0; j < arity; ++j) {
            double sd = std::sqrt(var[j] / n);
            s.scale[j] = sd > 1e-12 ? sd : 1.0;
        }
        return s;
    }
};

}  // namespace

double RegressionTree::predict(std::span<const double> x) const {
    int i = 0;
    while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
        const TreeNode& n = nodes[static_cast<std::size_t>(i)];
        i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(i)].value;
}

double AcceptanceModel::predict_raw(std::span<const double> x) const {
    if (x.size() != schema_.arity()) throw ModelError("feature vector arity mismatch");
    if (kind_ == ModelKind::Logistic) {
        double z = bias_;
        for (std::size_t j = 0; j < x.size(); ++j)
            z += weights_[j] * (x[j] - feature_mean_[j]) / feature_scale_[j];
        return z;
    }
    double z = base_score_;
    for (const auto& t : trees_) z += t.predict(x);
    return z;
}

double AcceptanceModel::predict_proba(std::span<const double> x) const {
    if (objective_ == TreeObjective::Squared)
        throw ModelError("squared-loss model has no probability output");
    return sigmoid(predict_raw(x));
}

double AcceptanceModel::predict_proba(const FeatureVector& v) const {
    if (v.schema_id != schema_id_)
        throw ModelError("feature vector schema " + v.schema_id +
                         " does not match model schema " + schema_id_);
    return predict_proba(std::span<const double>(v.values));
}

FeatureImportanceReport AcceptanceModel::feature_importance() const {
    if (kind_ != ModelKind::TreeEnsemble)
        throw ModelError("feature importance requires a tree-ensemble model");
    std::vector<int> counts(schema_.arity(), 0);
    int total = 0;
    for (const auto& t : trees_)
        for (const auto& n : t.nodes)
            if (!n.is_leaf()) {
                ++counts[static_cast<std::size_t>(n.feature)];
                ++total;
            }
    FeatureImportanceReport r;
    r.total_internal_nodes = total;
    for (std::size_t j = 0; j < counts.size(); ++j)
        if (counts[j] > 0)
            r.entries.push_back({schema_.features[j].name, static_cast<int>(j), counts[j]});
    std::sort(r.entries.begin(), r.entries.end(), [](const auto& a, const auto& b) {
        if (a.split_count != b.split_count) return a.split_count > b.split_count;
        return a.feature_index < b.feature_index;
    });
    return r;
}

AcceptanceModel train_logistic(const TrainingDataset& ds, const FeatureSchema& schema,
                               const LogisticParams& params) {
    check_dataset(ds, schema, true);
    const std::size_t n = ds.rows.size();
    const std::size_t d = schema.arity();

    AcceptanceModel m;
    m.kind_ = ModelKind::Logistic;
    m.schema_ = schema;
    m.schema_id_ = schema.id();
    Scaler sc = Scaler::fit(ds.rows, d);
    m.feature_mean_ = sc.mean;
    m.feature_scale_ = sc.scale;
    m.weights_.assign(d, 0.0);
    m.bias_ = 0.0;

    // Pre-standardized copy of the rows.
    std::vector<std::vector<double>> x(n, std::vector<double>(d));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
            x[i][j] = (ds.rows[i][j] - sc.mean[j]) / sc.scale[j];

    auto loss_of = [&](const std::vector<double>& w, double b) {
        double loss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double z = b;
            for (std::size_t j = 0; j < d; ++j) z += w[j] * x[i][j];
            double p = clamp_prob(sigmoid(z));
            loss -= ds.labels[i] ? std::log(p) : std::log(1.0 - p);
        }
        loss /= static_cast<double>(n);
        for (double wj : w) loss += 0.5 * params.l2_strength * wj * wj;
        return loss;
    };

    double loss = loss_of(m.weights_, m.bias_);
    m.meta_.loss_trace.push_back(loss);
    std::vector<double> grad(d), trial_w(d);
    for (int epoch = 0; epoch < params.epochs; ++epoch) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double grad_b = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double z = m.bias_;
            for (std::size_t j = 0; j < d; ++j) z += m.weights_[j] * x[i][j];
            double err = sigmoid(z) - ds.labels[i];
            for (std::size_t j = 0; j < d; ++j) grad[j] += err * x[i][j];
            grad_b += err;
        }
        for (std::size_t j = 0; j < d; ++j)
            grad[j] = grad[j] / static_cast<double>(n) + params.l2_strength * m.weights_[j];
        grad_b /= static_cast<double>(n);

        // Backtracking keeps the full-batch loss non-increasing.
        double step = params.learning_rate;
        bool moved = false;
        for (int bt = 0; bt < 40; ++bt) {
            for (std::size_t j = 0; j < d; ++j) trial_w[j] = m.weights_[j] - step * grad[j];
            double trial_b = m.bias_ - step * grad_b;
            double trial_loss = loss_of(trial_w, trial_b);
            if (trial_loss <= loss) {
                m.weights_ = trial_w;
                m.bias_ = trial_b;
                loss = trial_loss;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        m.meta_.loss_trace.push_back(loss);
        if (!moved) break;  // converged to machine precision
    }

    m.meta_.seed = params.seed;
    m.meta_.row_count = n;
    m.meta_.dataset_checksum = ds.checksum();
    m.meta_.hyperparameters_json =
        json{{"l2_strength", params.l2_strength},
             {"epochs", params.epochs},
             {"learning_rate", params.learning_rate}}
            .dump();
    return m;
}

namespace {

// Quantile-binned columns for exact split search on a bounded threshold set.
struct BinnedColumns {
    std::vector<std::vector<double>> thresholds;  // per feature, ascending
    std::vector<std::uint16_t> bins;              // feature-major, f * n + i
    std::size_t n = 0;

    int n_bins(std::size_t f) const {
        return static_cast<int>(thresholds[f].size()) + 1;
    }

    static BinnedColumns build(const std::vector<std::vector<double>>& rows,
                               std::size_t arity, int max_bins) {
        BinnedColumns bc;
        bc.n = rows.size();
        bc.thresholds.resize(arity);
        bc.bins.resize(arity * bc.n);
        std::vector<double> col(bc.n);
        for (std::size_t f = 0; f < arity; ++f) {
            for (std::size_t i = 0; i < bc.n; ++i) col[i] = rows[i][f];
            std::vector<double> sorted = col;
            std::sort(sorted.begin(), sorted.end());
            sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
            auto& th = bc.thresholds[f];
            if (sorted.size() > 1) {
                std::size_t cuts = std::min<std::size_t>(sorted.size() - 1,
                                                         static_cast<std::size_t>(max_bins - 1));
                for (std::size_t c = 0; c < cuts; ++c) {
                    // Evenly spaced quantiles over the distinct values.
                    std::size_t idx = (c + 1) * (sorted.size() - 1) / (cuts + 1);
                    if (idx + 1 > sorted.size() - 1) idx = sorted.size() - 2;
                    double t = sorted[idx];
                    if (th.empty() || t > th.back()) th.push_back(t);
                }
            }
            for (std::size_t i = 0; i < bc.n; ++i) {
                // bin b: x <= thresholds[b]; last bin holds the rest.
                auto it = std::lower_bound(th.begin(), th.end(), col[i]);
                bc.bins[f * bc.n + i] = static_cast<std::uint16_t>(it - th.begin());
            }
        }
        return bc;
    }
};

struct SplitChoice {
    double gain = 0.0;
    int feature = -1;
    int bin = -1;
    bool found = false;
};

}  // namespace

AcceptanceModel train_tree_ensemble(const TrainingDataset& ds, const FeatureSchema& schema,
                                    const TreeEnsembleParams& params) {
    if (params.objective != TreeObjective::Logistic)
        throw ModelError("train_tree_ensemble expects the logistic objective");
    check_dataset(ds, schema, true);
    std::vector<double> target(ds.labels.begin(), ds.labels.end());
    return detail_train_tree_core(ds, schema, target, params);
}

AcceptanceModel train_regression(const TrainingDataset& ds, const FeatureSchema& schema,
                                 const std::vector<double>& targets,
                                 TreeEnsembleParams params) {
    params.objective = TreeObjective::Squared;
    check_dataset(ds, schema, false);
    if (targets.size() != ds.rows.size())
        throw ModelError("regression target length mismatch");
    return detail_train_tree_core(ds, schema, targets, params);
}

AcceptanceModel detail_train_tree_core(const TrainingDataset& ds, const FeatureSchema& schema,
                                       const std::vector<double>& target_in,
                                       const TreeEnsembleParams& params) {
    if (params.n_trees < 1) throw ModelError("n_trees must be >= 1");
    if (params.max_depth < 1) throw ModelError("max_depth must be >= 1");
    if (params.min_rows_per_leaf < 1) throw ModelError("min_rows_per_leaf must be >= 1");
    const bool logistic = params.objective == TreeObjective::Logistic;

    const std::size_t n = ds.rows.size();
    const std::size_t d = schema.arity();
    BinnedColumns bc = BinnedColumns::build(ds.rows, d, params.max_bins);

    AcceptanceModel m;
    m.kind_ = ModelKind::TreeEnsemble;
    m.objective_ = params.objective;
    m.schema_ = schema;
    m.schema_id_ = schema.id();
    m.feature_mean_.assign(d, 0.0);
    m.feature_scale_.assign(d, 1.0);

    const std::vector<double>& target = target_in;

    if (logistic) {
        double pos = std::accumulate(target.begin(), target.end(), 0.0) /
                     static_cast<double>(n);
        pos = clamp_prob(pos);
        m.base_score_ = std::log(pos / (1.0 - pos));
    } else {
        m.base_score_ = std::accumulate(target.begin(), target.end(), 0.0) /
                        static_cast<double>(n);
    }

    std::vector<double> score(n, m.base_score_);
    std::vector<double> grad(n), hess(n);

    auto train_loss = [&]() {
        double loss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (logistic) {
                double p = clamp_prob(sigmoid(score[i]));
                loss -= target[i] > 0.5 ? std::log(p) : std::log(1.0 - p);
            } else {
                double e = score[i] - target[i];
                loss += 0.5 * e * e;
            }
        }
        return loss / static_cast<double>(n);
    };

    double loss = train_loss();
    m.meta_.loss_trace.push_back(loss);

    const double lambda = params.l2_leaf;
    std::vector<double> hist_g(d * static_cast<std::size_t>(params.max_bins));
    std::vector<double> hist_h(d * static_cast<std::size_t>(params.max_bins));
    std::vector<std::size_t> hist_c(d * static_cast<std::size_t>(params.max_bins));

    for (int t = 0; t < params.n_trees; ++t) {
        for (std::size_t i = 0; i < n; ++i) {
            if (logistic) {
                double p = sigmoid(score[i]);
                grad[i] = p - target[i];
                hess[i] = std::max(p * (1.0 - p), 1e-12);
            } else {
                grad[i] = score[i] - target[i];
                hess[i] = 1.0;
            }
        }

        RegressionTree tree;
        tree.nodes.push_back(TreeNode{});
        struct NodeWork {
            int node;
            int depth;
            std::vector<std::uint32_t> rows;
        };
        std::vector<NodeWork> frontier;
        {
            std::vector<std::uint32_t> all(n);
            std::iota(all.begin(), all.end(), 0u);
            frontier.push_back({0, 0, std::move(all)});
        }

        std::vector<std::uint32_t> row_to_leaf(n, 0);
        while (!frontier.empty()) {
            std::vector<NodeWork> next;
            for (auto& work : frontier) {
                double g_total = 0.0, h_total = 0.0;
                for (auto r : work.rows) {
                    g_total += grad[r];
                    h_total += hess[r];
                }
                double leaf_value = -g_total / (h_total + lambda);

                SplitChoice best;
                if (work.depth < params.max_depth &&
                    work.rows.size() >= 2 * static_cast<std::size_t>(params.min_rows_per_leaf)) {
                    std::fill(hist_g.begin(), hist_g.end(), 0.0);
                    std::fill(hist_h.begin(), hist_h.end(), 0.0);
                    std::fill(hist_c.begin(), hist_c.end(), 0);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
                    for (std::ptrdiff_t fs = 0; fs < static_cast<std::ptrdiff_t>(d); ++fs) {
                        auto f = static_cast<std::size_t>(fs);
                        const std::uint16_t* col = &bc.bins[f * n];
                        double* hg = &hist_g[f * static_cast<std::size_t>(params.max_bins)];
                        double* hh = &hist_h[f * static_cast<std::size_t>(params.max_bins)];
                        std::size_t* hc = &hist_c[f * static_cast<std::size_t>(params.max_bins)];
                        for (auto r : work.rows) {
                            std::uint16_t b = col[r];
                            hg[b] += grad[r];
                            hh[b] += hess[r];
                            ++hc[b];
                        }
                    }
                    double parent_score = g_total * g_total / (h_total + lambda);
                    // Serial scan so the argmax is reduction-order-independent.
                    for (std::size_t f = 0; f < d; ++f) {
                        int nb = bc.n_bins(f);
                        if (nb < 2) continue;
                        const double* hg = &hist_g[f * static_cast<std::size_t>(params.max_bins)];
                        const double* hh = &hist_h[f * static_cast<std::size_t>(params.max_bins)];
                        const std::size_t* hc =
                            &hist_c[f * static_cast<std::size_t>(params.max_bins)];
                        double gl = 0.0, hl = 0.0;
                        std::size_t cl = 0;
                        for (int b = 0; b + 1 < nb; ++b) {
                            gl += hg[b];
                            hl += hh[b];
                            cl += hc[b];
                            std::size_t cr = work.rows.size() - cl;
                            if (cl < static_cast<std::size_t>(params.min_rows_per_leaf) ||
                                cr < static_cast<std::size_t>(params.min_rows_per_leaf))
                                continue;
                            double gr = g_total - gl, hr = h_total - hl;
                            double gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda) -
                                          parent_score;
                            if (gain > best.gain + 1e-12) {
                                best = {gain, static_cast<int>(f), b, true};
                            }
                        }
                    }
                }

                if (!best.found) {
                    tree.nodes[static_cast<std::size_t>(work.node)].value = leaf_value;
                    for (auto r : work.rows) row_to_leaf[r] = static_cast<std::uint32_t>(work.node);
                    continue;
                }

                double threshold =
                    bc.thresholds[static_cast<std::size_t>(best.feature)]
                                 [static_cast<std::size_t>(best.bin)];
                int left_id = static_cast<int>(tree.nodes.size());
                tree.nodes.push_back(TreeNode{});
                int right_id = static_cast<int>(tree.nodes.size());
                tree.nodes.push_back(TreeNode{});
                TreeNode& node = tree.nodes[static_cast<std::size_t>(work.node)];
                node.feature = best.feature;
                node.threshold = threshold;
                node.left = left_id;
                node.right = right_id;

                NodeWork lw{left_id, work.depth + 1, {}};
                NodeWork rw{right_id, work.depth + 1, {}};
                const std::uint16_t* col = &bc.bins[static_cast<std::size_t>(best.feature) * n];
                for (auto r : work.rows)
                    (col[r] <= best.bin ? lw.rows : rw.rows).push_back(r);
                next.push_back(std::move(lw));
                next.push_back(std::move(rw));
            }
            frontier = std::move(next);
        }

        // Shrinkage, with halving as a guard so training loss never increases.
        double scale = params.learning_rate;
        std::vector<double> contrib(n);
        for (std::size_t i = 0; i < n; ++i)
            contrib[i] = tree.nodes[row_to_leaf[i]].value;
        double new_loss = loss;
        bool applied = false;
        for (int bt = 0; bt < 40 && !applied; ++bt) {
            for (std::size_t i = 0; i < n; ++i) score[i] += scale * contrib[i];
            new_loss = train_loss();
            if (new_loss <= loss) {
                applied = true;
                break;
            }
            for (std::size_t i = 0; i < n; ++i) score[i] -= scale * contrib[i];
            scale *= 0.5;
            new_loss = loss;
        }
        if (!applied) scale = 0.0;  // tree contributes nothing this round
        for (auto& node : tree.nodes)
            if (node.is_leaf()) node.value *= scale;
        loss = std::min(new_loss, loss);
        m.meta_.loss_trace.push_back(loss);
        m.trees_.push_back(std::move(tree));
    }

    m.meta_.seed = params.seed;
    m.meta_.row_count = n;
    m.meta_.dataset_checksum = ds.checksum();
    m.meta_.hyperparameters_json =
        json{{"n_trees", params.n_trees},
             {"max_depth", params.max_depth},
             {"learning_rate", params.learning_rate},
             {"min_rows_per_leaf", params.min_rows_per_leaf},
             {"max_bins", params.max_bins},
             {"l2_leaf", params.l2_leaf},
             {"objective", logistic ? "logistic" : "squared"}}
            .dump();
    return m;
}

namespace {

json metadata_to_json(const TrainingMetadata& meta) {
    return json{{"seed", meta.seed},
                {"row_count", meta.row_count},
                {"dataset_checksum", meta.dataset_checksum},
                {"hyperparameters", meta.hyperparameters_json},
                {"loss_trace", meta.loss_trace}};
}

TrainingMetadata metadata_from_json(const json& j) {
    TrainingMetadata meta;
    meta.seed = j.at("seed").get<std::uint64_t>();
    meta.row_count = j.at("row_count").get<std::size_t>();
    meta.dataset_checksum = j.at("dataset_checksum").get<std::string>();
    meta.hyperparameters_json = j.at("hyperparameters").get<std::string>();
    meta.loss_trace = j.at("loss_trace").get<std::vector<double>>();
    return meta;
}

}  // namespace

std::string AcceptanceModel::to_json() const {
    json j;
    j["format_version"] = 1;
    j["kind"] = kind_ == ModelKind::Logistic ? "logistic" : "tree-ensemble";
    j["objective"] = objective_ == TreeObjective::Logistic ? "logistic" : "squared";
    j["schema_manifest"] = schema_.manifest_json();
    j["feature_mean"] = feature_mean_;
    j["feature_scale"] = feature_scale_;
    j["metadata"] = metadata_to_json(meta_);
    if (kind_ == ModelKind::Logistic) {
        j["weights"] = weights_;
        j["bias"] = bias_;
    } else {
        j["base_score"] = base_score_;
        json trees = json::array();
        for (const auto& t : trees_) {
            json nodes = json::array();
            for (const auto& nd : t.nodes)
                nodes.push_back({{"f", nd.feature},
                                 {"t", nd.threshold},
                                 {"l", nd.left},
                                 {"r", nd.right},
                                 {"v", nd.value}});
            trees.push_back(std::move(nodes));
        }
        j["trees"] = std::move(trees);
    }
    std::string payload = j.dump();
    json wrapped;
    wrapped["payload"] = std::move(j);
    wrapped["checksum"] = checksum_hex(payload);
    return wrapped.dump();
}

AcceptanceModel AcceptanceModel::from_json(const std::string& text) {
    json wrapped = json::parse(text, nullptr, false);
    if (wrapped.is_discarded()) throw ModelError("malformed model file");
    const json& j = wrapped.at("payload");
    if (wrapped.at("checksum").get<std::string>() != checksum_hex(j.dump()))
        throw ModelError("model file checksum mismatch");
    if (j.at("format_version").get<int>() != 1)
        throw ModelError("unsupported model format version");

    AcceptanceModel m;
    m.kind_ = j.at("kind").get<std::string>() == "logistic" ? ModelKind::Logistic
                                                            : ModelKind::TreeEnsemble;
    m.objective_ = j.at("objective").get<std::string>() == "logistic"
                       ? TreeObjective::Logistic
                       : TreeObjective::Squared;
    m.schema_ = FeatureSchema::from_manifest_json(j.at("schema_manifest").get<std::string>());
    m.schema_id_ = m.schema_.id();
    m.feature_mean_ = j.at("feature_mean").get<std::vector<double>>();
    m.feature_scale_ = j.at("feature_scale").get<std::vector<double>>();
    m.meta_ = metadata_from_json(j.at("metadata"));
    if (m.kind_ == ModelKind::Logistic) {
        m.weights_ = j.at("weights").get<std::vector<double>>();
        m.bias_ = j.at("bias").get<double>();
    } else {
        m.base_score_ = j.at("base_score").get<double>();
        for (const auto& tj : j.at("trees")) {
            RegressionTree t;
            for (const auto& nj : tj)
                t.nodes.push_back({nj.at("f").get<int>(), nj.at("t").get<double>(),
                                   nj.at("l").get<int>(), nj.at("r").get<int>(),
                                   nj.at("v").get<double>()});
            m.trees_.push_back(std::move(t));
        }
    }
    return m;
}

void AcceptanceModel::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ModelError("cannot write model file: " + path);
    out << to_json() << '\n';
}

AcceptanceModel AcceptanceModel::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ModelError("cannot open model file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_json(buf.str());
}

}  // namespace cdhf
