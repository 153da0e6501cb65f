#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cdhf {

class TelemetryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ActionKind { Shown, Accepted, Rejected, Browsed };

std::string to_string(ActionKind a);
// Throws TelemetryError on any token other than shown|accepted|rejected|browsed.
ActionKind action_from_string(const std::string& token);

struct TelemetryEvent {
    std::int64_t timestamp_ms = 0;
    ActionKind action = ActionKind::Shown;
    std::string prompt;
    std::string suggestion;
    double suggestion_confidence = 0.0;
    std::string programmer_id;
    std::int64_t event_id = 0;  // assigned in log order, unique within a store
};

struct SessionTrace {
    std::string programmer_id;
    int session_index = 0;
    std::vector<TelemetryEvent> events;

    std::int64_t duration_ms() const {
        return events.empty() ? 0 : events.back().timestamp_ms - events.front().timestamp_ms;
    }
};

enum class Provenance { Simulated, Ingested };

struct TelemetryStore {
    std::vector<SessionTrace> sessions;
    Provenance provenance = Provenance::Ingested;

    std::size_t event_count() const;
    // Checksum over the canonical serialization; identifies the store in
    // model metadata and evaluation reports.
    std::string checksum() const;
};

inline constexpr std::int64_t kDefaultGapLimitMs = 30 * 60 * 1000;
inline constexpr std::size_t kDefaultPromptByteBudget = 4096;

struct ParseOptions {
    std::size_t prompt_byte_budget = kDefaultPromptByteBudget;
    std::int64_t gap_limit_ms = kDefaultGapLimitMs;
    bool segment = true;  // run session segmentation after parsing
};

// One JSON record per line, fields: ts_ms, action, prompt, suggestion,
// confidence, programmer_id. Malformed lines raise TelemetryError naming the
// line number.
TelemetryStore parse_log(std::istream& in, const ParseOptions& opts = {});
TelemetryStore parse_log_file(const std::string& path, const ParseOptions& opts = {});

void serialize(const TelemetryStore& store, std::ostream& out);
std::string serialize_to_string(const TelemetryStore& store);
void write_log_file(const TelemetryStore& store, const std::string& path);

// Splits each programmer's event stream at inter-event gaps strictly greater
// than gap_limit_ms. Events must be time-sorted per programmer. Idempotent.
std::vector<SessionTrace> segment_sessions(const std::string& programmer_id,
                                           const std::vector<TelemetryEvent>& events,
                                           std::int64_t gap_limit_ms = kDefaultGapLimitMs,
                                           int first_session_index = 0);
TelemetryStore segment_store(const TelemetryStore& store,
                             std::int64_t gap_limit_ms = kDefaultGapLimitMs);

struct Summary {
    std::size_t shown = 0;
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::size_t browsed = 0;
    std::size_t n_sessions = 0;
    std::size_t n_programmers = 0;
    double sessions_per_programmer = 0.0;
    double mean_session_duration_ms = 0.0;
    double median_session_duration_ms = 0.0;
    std::optional<double> acceptance_rate;  // absent when no shown events
};

Summary summarize(const TelemetryStore& store);
std::string summary_text(const Summary& s);
std::string summary_csv(const Summary& s);

struct LabeledShown {
    TelemetryEvent shown;
    bool accepted = false;
    std::int64_t outcome_timestamp_ms = 0;  // timestamp of the terminal accept/reject
};

// Pairs every Shown event with its terminal accept/reject outcome. Browse
// chains fold into the terminal action; Shown events with no recorded outcome
// are dropped.
std::vector<LabeledShown> label_pairs(const TelemetryStore& store);

}  // namespace cdhf
