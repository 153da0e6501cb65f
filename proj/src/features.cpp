#include "cdhf/features.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <sstream>

#include "cdhf/checksum.hpp"
#include "cdhf/lexical.hpp"
#include "json.hpp"

namespace cdhf {

using nlohmann::json;

namespace {

const char* kind_name(FeatureKind k) {
    switch (k) {
        case FeatureKind::Numeric: return "numeric";
        case FeatureKind::Boolean: return "boolean";
        case FeatureKind::HashedBucket: return "hashed-bucket";
    }
    return "?";
}

FeatureKind kind_from_name(const std::string& s) {
    if (s == "numeric") return FeatureKind::Numeric;
    if (s == "boolean") return FeatureKind::Boolean;
    if (s == "hashed-bucket") return FeatureKind::HashedBucket;
    throw FeatureError("unknown feature kind: " + s);
}

const char* stage_name(FeatureStage s) {
    switch (s) {
        case FeatureStage::Stage1: return "1";
        case FeatureStage::Stage2: return "2";
        case FeatureStage::Both: return "both";
    }
    return "?";
}

FeatureStage stage_from_name(const std::string& s) {
    if (s == "1") return FeatureStage::Stage1;
    if (s == "2") return FeatureStage::Stage2;
    if (s == "both") return FeatureStage::Both;
    throw FeatureError("unknown feature stage: " + s);
}

constexpr double kGapCapSeconds = 30.0 * 60.0;  // session bound
constexpr int kPromptTailTokens = 16;

}  // namespace

std::string FeatureSchema::manifest_json() const {
    json j;
    j["version"] = 1;
    j["hash_dimensions"] = hash_dimensions;
    json fs = json::array();
    for (const auto& f : features)
        fs.push_back({{"name", f.name}, {"kind", kind_name(f.kind)}, {"stage", stage_name(f.stage)}});
    j["features"] = fs;
    return j.dump();
}

FeatureSchema FeatureSchema::from_manifest_json(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw FeatureError("malformed schema manifest");
    FeatureSchema s;
    s.hash_dimensions = j.at("hash_dimensions").get<int>();
    for (const auto& f : j.at("features"))
        s.features.push_back({f.at("name").get<std::string>(),
                              kind_from_name(f.at("kind").get<std::string>()),
                              stage_from_name(f.at("stage").get<std::string>())});
    return s;
}

std::string FeatureSchema::id() const { return checksum_hex(manifest_json()); }

int FeatureSchema::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < features.size(); ++i)
        if (features[i].name == name) return static_cast<int>(i);
    return -1;
}

FeatureSchema make_schema(int stage, int hash_dimensions) {
    if (stage != 1 && stage != 2) throw FeatureError("stage must be 1 or 2");
    FeatureSchema s;
    s.hash_dimensions = hash_dimensions;
    auto num = [&](const std::string& n, FeatureStage st) {
        s.features.push_back({n, FeatureKind::Numeric, st});
    };
    auto flag = [&](const std::string& n, FeatureStage st) {
        s.features.push_back({n, FeatureKind::Boolean, st});
    };

    num("prompt_len_chars", FeatureStage::Both);
    num("prompt_len_lines", FeatureStage::Both);
    num("document_len_log", FeatureStage::Both);
    num("prompt_token_count", FeatureStage::Both);
    num("prompt_keyword_count", FeatureStage::Both);
    num("prompt_bracket_balance", FeatureStage::Both);
    flag("prompt_ends_alnum", FeatureStage::Both);
    for (int k = 1; k <= kActionHistoryWindow; ++k)
        for (const char* a : {"shown", "accepted", "rejected", "browsed"})
            flag("prev" + std::to_string(k) + "_" + a, FeatureStage::Both);
    num("time_since_prev_log_s", FeatureStage::Both);
    num("event_index_in_session", FeatureStage::Both);
    num("session_accept_rate", FeatureStage::Both);
    num("session_shown_so_far", FeatureStage::Both);

    if (stage == 2) {
        num("suggestion_len_chars", FeatureStage::Stage2);
        num("suggestion_len_tokens", FeatureStage::Stage2);
        num("suggestion_len_lines", FeatureStage::Stage2);
        num("suggestion_confidence", FeatureStage::Stage2);
        num("suggestion_keyword_count", FeatureStage::Stage2);
        num("suggestion_bracket_balance", FeatureStage::Stage2);
        flag("has_comment_char", FeatureStage::Stage2);
        flag("single_char_nonalpha", FeatureStage::Stage2);
        flag("mid_word", FeatureStage::Stage2);
        for (int b = 0; b < hash_dimensions; ++b)
            s.features.push_back({"prompt_tail_hash_" + std::to_string(b),
                                  FeatureKind::HashedBucket, FeatureStage::Stage2});
        for (int b = 0; b < hash_dimensions; ++b)
            s.features.push_back({"suggestion_hash_" + std::to_string(b),
                                  FeatureKind::HashedBucket, FeatureStage::Stage2});
    }
    return s;
}

namespace {

// Signed feature hashing of token unigrams and bigrams into `dim` buckets.
void hash_ngrams(const std::vector<Token>& tokens, const std::string& field,
                 int dim, std::span<double> out) {
    auto add = [&](const std::string& gram) {
        std::uint64_t h = fnv1a64(gram, fnv1a64(field));
        double sign = (h >> 63) ? -1.0 : 1.0;
        out[h % static_cast<std::uint64_t>(dim)] += sign;
    };
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        add(tokens[i].text);
        if (i + 1 < tokens.size()) add(tokens[i].text + "\x1f" + tokens[i + 1].text);
    }
}

int count_lines(const std::string& s) {
    return 1 + static_cast<int>(std::count(s.begin(), s.end(), '\n'));
}

char last_nonspace(const std::string& s) {
    for (auto it = s.rbegin(); it != s.rend(); ++it)
        if (!std::isspace(static_cast<unsigned char>(*it))) return *it;
    return '\0';
}

}  // namespace

FeatureVector extract(const TelemetryEvent& event,
                      std::span<const TelemetryEvent> context,
                      const FeatureSchema& schema) {
    std::vector<double> v(schema.arity(), 0.0);
    auto set = [&](const char* name, double value) {
        int i = schema.index_of(name);
        if (i >= 0) v[static_cast<std::size_t>(i)] = value;
    };

    LexResult prompt_lex = lexical_scan(event.prompt);
    set("prompt_len_chars", static_cast<double>(event.prompt.size()));
    set("prompt_len_lines", count_lines(event.prompt));
    set("document_len_log", std::log1p(static_cast<double>(event.prompt.size())));
    set("prompt_token_count", static_cast<double>(prompt_lex.tokens.size()));
    set("prompt_keyword_count", prompt_lex.keyword_count());
    set("prompt_bracket_balance", prompt_lex.balance.round + prompt_lex.balance.square +
                                      prompt_lex.balance.curly);
    char prompt_last = last_nonspace(event.prompt);
    bool prompt_ends_alnum =
        prompt_last != '\0' && (std::isalnum(static_cast<unsigned char>(prompt_last)) != 0);
    set("prompt_ends_alnum", prompt_ends_alnum ? 1.0 : 0.0);

    for (int k = 1; k <= kActionHistoryWindow; ++k) {
        if (static_cast<std::size_t>(k) > context.size()) break;
        const TelemetryEvent& prev = context[context.size() - static_cast<std::size_t>(k)];
        std::string name = "prev" + std::to_string(k) + "_" + to_string(prev.action);
        set(name.c_str(), 1.0);
    }

    double gap_s = 0.0;
    if (!context.empty())
        gap_s = static_cast<double>(event.timestamp_ms - context.back().timestamp_ms) / 1000.0;
    set("time_since_prev_log_s", std::log1p(std::min(std::max(gap_s, 0.0), kGapCapSeconds)));
    set("event_index_in_session", static_cast<double>(context.size()));

    std::size_t shown_so_far = 0, accepted_so_far = 0;
    for (const auto& e : context) {
        if (e.action == ActionKind::Shown) ++shown_so_far;
        if (e.action == ActionKind::Accepted) ++accepted_so_far;
    }
    set("session_shown_so_far", static_cast<double>(shown_so_far));
    set("session_accept_rate",
        shown_so_far == 0 ? 0.5
                          : static_cast<double>(accepted_so_far) /
                                static_cast<double>(shown_so_far));

    if (schema.index_of("suggestion_len_chars") >= 0) {
        LexResult sug_lex = lexical_scan(event.suggestion);
        set("suggestion_len_chars", static_cast<double>(event.suggestion.size()));
        set("suggestion_len_tokens", static_cast<double>(sug_lex.tokens.size()));
        set("suggestion_len_lines", count_lines(event.suggestion));
        set("suggestion_confidence", event.suggestion_confidence);
        set("suggestion_keyword_count", sug_lex.keyword_count());
        set("suggestion_bracket_balance", sug_lex.balance.round + sug_lex.balance.square +
                                              sug_lex.balance.curly);
        set("has_comment_char",
            event.suggestion.find('#') != std::string::npos ? 1.0 : 0.0);
        bool single_nonalpha =
            event.suggestion.size() == 1 &&
            std::isalpha(static_cast<unsigned char>(event.suggestion[0])) == 0;
        set("single_char_nonalpha", single_nonalpha ? 1.0 : 0.0);
        bool mid_word = prompt_ends_alnum && !event.suggestion.empty() &&
                        std::isalnum(static_cast<unsigned char>(event.suggestion[0])) != 0;
        set("mid_word", mid_word ? 1.0 : 0.0);

        int tail_base = schema.index_of("prompt_tail_hash_0");
        if (tail_base >= 0) {
            std::vector<Token> tail = prompt_lex.tokens;
            if (tail.size() > kPromptTailTokens)
                tail.erase(tail.begin(),
                           tail.end() - static_cast<std::ptrdiff_t>(kPromptTailTokens));
            hash_ngrams(tail, "prompt_tail", schema.hash_dimensions,
                        std::span<double>(v).subspan(static_cast<std::size_t>(tail_base),
                                                     static_cast<std::size_t>(schema.hash_dimensions)));
        }
        int sug_base = schema.index_of("suggestion_hash_0");
        if (sug_base >= 0)
            hash_ngrams(lexical_scan(event.suggestion).tokens, "suggestion",
                        schema.hash_dimensions,
                        std::span<double>(v).subspan(static_cast<std::size_t>(sug_base),
                                                     static_cast<std::size_t>(schema.hash_dimensions)));
    }

    for (double x : v)
        if (!std::isfinite(x)) throw FeatureError("non-finite feature value");
    return {std::move(v), schema.id()};
}

double TrainingDataset::positive_rate() const {
    if (labels.empty()) return 0.0;
    double s = 0;
    for (int l : labels) s += l;
    return s / static_cast<double>(labels.size());
}

std::string TrainingDataset::checksum() const {
    std::ostringstream buf;
    buf << schema_id << '\n';
    buf.precision(17);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (double x : rows[i]) buf << x << ',';
        buf << labels[i] << '\n';
    }
    return checksum_hex(buf.str());
}

TrainingDataset build_dataset(const TelemetryStore& store, const FeatureSchema& schema) {
    TrainingDataset ds;
    ds.schema_id = schema.id();
    for (const auto& session : store.sessions) {
        const auto& ev = session.events;
        for (std::size_t i = 0; i < ev.size(); ++i) {
            if (ev[i].action != ActionKind::Shown) continue;
            std::size_t j = i + 1;
            while (j < ev.size() && ev[j].action == ActionKind::Browsed) ++j;
            if (j >= ev.size() || ev[j].action == ActionKind::Shown) continue;
            FeatureVector fv =
                extract(ev[i], std::span<const TelemetryEvent>(ev.data(), i), schema);
            ds.rows.push_back(std::move(fv.values));
            ds.labels.push_back(ev[j].action == ActionKind::Accepted ? 1 : 0);
        }
    }
    if (ds.rows.empty()) throw FeatureError("store yields no labeled shown events");
    return ds;
}

std::string dataset_csv(const TrainingDataset& ds, const FeatureSchema& schema) {
    if (schema.id() != ds.schema_id) throw FeatureError("schema mismatch in dataset_csv");
    std::ostringstream out;
    out.precision(17);
    for (const auto& f : schema.features) out << f.name << ',';
    out << "label\n";
    for (std::size_t i = 0; i < ds.rows.size(); ++i) {
        for (double x : ds.rows[i]) out << x << ',';
        out << ds.labels[i] << '\n';
    }
    return out.str();
}

}  // namespace cdhf
