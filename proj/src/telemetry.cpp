#include "cdhf/telemetry.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "cdhf/checksum.hpp"
#include "json.hpp"

namespace cdhf {

using nlohmann::json;

std::string to_string(ActionKind a) {
    switch (a) {
        case ActionKind::Shown: return "shown";
        case ActionKind::Accepted: return "accepted";
        case ActionKind::Rejected: return "rejected";
        case ActionKind::Browsed: return "browsed";
    }
    return "?";
}

ActionKind action_from_string(const std::string& token) {
    if (token == "shown") return ActionKind::Shown;
    if (token == "accepted") return ActionKind::Accepted;
    if (token == "rejected") return ActionKind::Rejected;
    if (token == "browsed") return ActionKind::Browsed;
    throw TelemetryError("unknown action token '" + token + "'");
}

std::size_t TelemetryStore::event_count() const {
    std::size_t n = 0;
    for (const auto& s : sessions) n += s.events.size();
    return n;
}

std::string TelemetryStore::checksum() const {
    return checksum_hex(serialize_to_string(*this));
}

namespace {

TelemetryEvent event_from_json(const json& j, std::size_t line_no,
                               const ParseOptions& opts) {
    TelemetryEvent e;
    try {
        e.timestamp_ms = j.at("ts_ms").get<std::int64_t>();
        e.action = action_from_string(j.at("action").get<std::string>());
        e.prompt = j.at("prompt").get<std::string>();
        e.suggestion = j.at("suggestion").get<std::string>();
        e.suggestion_confidence = j.at("confidence").get<double>();
        e.programmer_id = j.at("programmer_id").get<std::string>();
    } catch (const json::exception& ex) {
        throw TelemetryError("line " + std::to_string(line_no) + ": " + ex.what());
    } catch (const TelemetryError& ex) {
        throw TelemetryError("line " + std::to_string(line_no) + ": " + ex.what());
    }
    if (e.timestamp_ms < 0)
        throw TelemetryError("line " + std::to_string(line_no) + ": negative ts_ms");
    if (e.suggestion.empty())
        throw TelemetryError("line " + std::to_string(line_no) + ": empty suggestion");
    if (e.suggestion_confidence < 0.0 || e.suggestion_confidence > 1.0)
        throw TelemetryError("line " + std::to_string(line_no) + ": confidence outside [0,1]");
    if (e.prompt.size() > opts.prompt_byte_budget)
        e.prompt.resize(opts.prompt_byte_budget);
    return e;
}

json event_to_json(const TelemetryEvent& e) {
    // nlohmann orders keys alphabetically, which defines the canonical line.
    json j;
    j["ts_ms"] = e.timestamp_ms;
    j["action"] = to_string(e.action);
    j["prompt"] = e.prompt;
    j["suggestion"] = e.suggestion;
    j["confidence"] = e.suggestion_confidence;
    j["programmer_id"] = e.programmer_id;
    return j;
}

}  // namespace

TelemetryStore parse_log(std::istream& in, const ParseOptions& opts) {
    // Events grouped per programmer in order of first appearance.
    std::vector<std::string> order;
    std::map<std::string, std::vector<TelemetryEvent>> by_programmer;

    std::string line;
    std::size_t line_no = 0;
    std::int64_t next_event_id = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw TelemetryError("line " + std::to_string(line_no) + ": malformed record");
        TelemetryEvent e = event_from_json(j, line_no, opts);
        e.event_id = next_event_id++;
        auto [it, inserted] = by_programmer.try_emplace(e.programmer_id);
        if (inserted) order.push_back(e.programmer_id);
        it->second.push_back(std::move(e));
    }

    TelemetryStore store;
    store.provenance = Provenance::Ingested;
    for (const auto& pid : order) {
        auto& events = by_programmer[pid];
        if (opts.segment) {
            auto traces = segment_sessions(pid, events, opts.gap_limit_ms);
            for (auto& t : traces) store.sessions.push_back(std::move(t));
        } else {
            SessionTrace t;
            t.programmer_id = pid;
            t.session_index = 0;
            t.events = std::move(events);
            store.sessions.push_back(std::move(t));
        }
    }
    return store;
}

TelemetryStore parse_log_file(const std::string& path, const ParseOptions& opts) {
    std::ifstream in(path);
    if (!in) throw TelemetryError("cannot open telemetry log: " + path);
    return parse_log(in, opts);
}

void serialize(const TelemetryStore& store, std::ostream& out) {
    for (const auto& session : store.sessions)
        for (const auto& e : session.events)
            out << event_to_json(e).dump() << '\n';
}

std::string serialize_to_string(const TelemetryStore& store) {
    std::ostringstream out;
    serialize(store, out);
    return out.str();
}

void write_log_file(const TelemetryStore& store, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw TelemetryError("cannot write telemetry log: " + path);
    serialize(store, out);
}

std::vector<SessionTrace> segment_sessions(const std::string& programmer_id,
                                           const std::vector<TelemetryEvent>& events,
                                           std::int64_t gap_limit_ms,
                                           int first_session_index) {
    std::vector<SessionTrace> out;
    if (events.empty()) return out;

    SessionTrace current;
    current.programmer_id = programmer_id;
    current.session_index = first_session_index;
    for (std::size_t i = 0; i < events.size(); ++i) {
        if (i > 0) {
            std::int64_t gap = events[i].timestamp_ms - events[i - 1].timestamp_ms;
            if (gap < 0)
                throw TelemetryError("events for programmer " + programmer_id +
                                     " are not sorted by timestamp");
            if (gap > gap_limit_ms) {
                out.push_back(std::move(current));
                current = SessionTrace{};
                current.programmer_id = programmer_id;
                current.session_index = out.back().session_index + 1;
            }
        }
        current.events.push_back(events[i]);
    }
    out.push_back(std::move(current));
    return out;
}

TelemetryStore segment_store(const TelemetryStore& store, std::int64_t gap_limit_ms) {
    TelemetryStore out;
    out.provenance = store.provenance;
    // Re-segmenting concatenated per-programmer streams; session boundaries
    // already present are preserved because their gaps exceed the limit.
    std::vector<std::string> order;
    std::map<std::string, std::vector<TelemetryEvent>> by_programmer;
    for (const auto& s : store.sessions) {
        auto [it, inserted] = by_programmer.try_emplace(s.programmer_id);
        if (inserted) order.push_back(s.programmer_id);
        it->second.insert(it->second.end(), s.events.begin(), s.events.end());
    }
    for (const auto& pid : order) {
        auto traces = segment_sessions(pid, by_programmer[pid], gap_limit_ms);
        for (auto& t : traces) out.sessions.push_back(std::move(t));
    }
    return out;
}

Summary summarize(const TelemetryStore& store) {
    Summary s;
    std::map<std::string, std::size_t> sessions_by_programmer;
    std::vector<double> durations;
    for (const auto& trace : store.sessions) {
        ++sessions_by_programmer[trace.programmer_id];
        durations.push_back(static_cast<double>(trace.duration_ms()));
        for (const auto& e : trace.events) {
            switch (e.action) {
                case ActionKind::Shown: ++s.shown; break;
                case ActionKind::Accepted: ++s.accepted; break;
                case ActionKind::Rejected: ++s.rejected; break;
                case ActionKind::Browsed: ++s.browsed; break;
            }
        }
    }
    s.n_sessions = store.sessions.size();
    s.n_programmers = sessions_by_programmer.size();
    if (s.n_programmers > 0)
        s.sessions_per_programmer =
            static_cast<double>(s.n_sessions) / static_cast<double>(s.n_programmers);
    if (!durations.empty()) {
        double total = 0;
        for (double d : durations) total += d;
        s.mean_session_duration_ms = total / static_cast<double>(durations.size());
        std::sort(durations.begin(), durations.end());
        std::size_t mid = durations.size() / 2;
        s.median_session_duration_ms = durations.size() % 2 == 1
                                           ? durations[mid]
                                           : 0.5 * (durations[mid - 1] + durations[mid]);
    }
    if (s.shown > 0)
        s.acceptance_rate = static_cast<double>(s.accepted) / static_cast<double>(s.shown);
    return s;
}

std::string summary_text(const Summary& s) {
    std::ostringstream out;
    out << "shown:                  " << s.shown << '\n'
        << "accepted:               " << s.accepted << '\n'
        << "rejected:               " << s.rejected << '\n'
        << "browsed:                " << s.browsed << '\n'
        << "sessions:               " << s.n_sessions << '\n'
        << "programmers:            " << s.n_programmers << '\n'
        << "sessions/programmer:    " << s.sessions_per_programmer << '\n'
        << "mean session (ms):      " << s.mean_session_duration_ms << '\n'
        << "median session (ms):    " << s.median_session_duration_ms << '\n';
    if (s.acceptance_rate)
        out << "acceptance rate:        " << *s.acceptance_rate << '\n';
    else
        out << "acceptance rate:        n/a\n";
    return out.str();
}

std::string summary_csv(const Summary& s) {
    std::ostringstream out;
    out << "shown,accepted,rejected,browsed,sessions,programmers,"
           "sessions_per_programmer,mean_session_ms,median_session_ms,acceptance_rate\n";
    out << s.shown << ',' << s.accepted << ',' << s.rejected << ',' << s.browsed << ','
        << s.n_sessions << ',' << s.n_programmers << ',' << s.sessions_per_programmer << ','
        << s.mean_session_duration_ms << ',' << s.median_session_duration_ms << ',';
    if (s.acceptance_rate) out << *s.acceptance_rate;
    out << '\n';
    return out.str();
}

std::vector<LabeledShown> label_pairs(const TelemetryStore& store) {
    std::vector<LabeledShown> out;
    for (const auto& session : store.sessions) {
        const auto& ev = session.events;
        for (std::size_t i = 0; i < ev.size(); ++i) {
            if (ev[i].action != ActionKind::Shown) continue;
            // Walk the browse chain to its terminal accept/reject.
            std::size_t j = i + 1;
            while (j < ev.size() && ev[j].action == ActionKind::Browsed) ++j;
            if (j >= ev.size() || ev[j].action == ActionKind::Shown) continue;
            out.push_back({ev[i], ev[j].action == ActionKind::Accepted, ev[j].timestamp_ms});
        }
    }
    return out;
}

}  // namespace cdhf
