#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cdhf/telemetry.hpp"

namespace cdhf {

class FeatureError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class FeatureKind { Numeric, Boolean, HashedBucket };
enum class FeatureStage { Stage1, Stage2, Both };

struct FeatureDef {
    std::string name;
    FeatureKind kind;
    FeatureStage stage;
};

inline constexpr int kDefaultHashDimensions = 64;
inline constexpr int kActionHistoryWindow = 4;

struct FeatureSchema {
    std::vector<FeatureDef> features;
    int hash_dimensions = kDefaultHashDimensions;

    std::size_t arity() const { return features.size(); }
    // Checksum of the serialized manifest; stamped on every vector, dataset
    // and model built against this schema.
    std::string id() const;
    std::string manifest_json() const;
    static FeatureSchema from_manifest_json(const std::string& text);

    int index_of(const std::string& name) const;  // -1 when absent
};

// Canonical schema for a stage. Stage-1 contains no suggestion-derived
// feature; stage-2 extends it with suggestion features and hashed n-grams.
FeatureSchema make_schema(int stage, int hash_dimensions = kDefaultHashDimensions);

struct FeatureVector {
    std::vector<double> values;
    std::string schema_id;
};

// `context` is the trailing window of events preceding `event` in its
// session, oldest first. Pure and total; no value depends on anything at a
// later timestamp.
FeatureVector extract(const TelemetryEvent& event,
                      std::span<const TelemetryEvent> context,
                      const FeatureSchema& schema);

struct TrainingDataset {
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;  // 1 = accept, 0 = reject
    std::string schema_id;

    std::size_t size() const { return rows.size(); }
    double positive_rate() const;
    // Checksum over row/label content; ties models to the data they saw.
    std::string checksum() const;
};

// One row per labeled Shown event (telemetry-core label_pairs), in store
// order. Throws FeatureError when the store yields no labels.
TrainingDataset build_dataset(const TelemetryStore& store, const FeatureSchema& schema);

std::string dataset_csv(const TrainingDataset& ds, const FeatureSchema& schema);

}  // namespace cdhf
