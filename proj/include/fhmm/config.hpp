#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fhmm/ensemble.hpp"
#include "fhmm/error.hpp"

namespace fhmm {

/// Every tunable of a pipeline run. Defaults here are the documented defaults.
struct RunConfig {
    EnsembleConfig ensemble;
    double test_fraction = 0.2;
    std::uint64_t split_seed = 0;
    double markov_smoothing = 1.0;
    std::vector<std::size_t> sweep_k{1, 2, 4, 8, 16, 24, 32};
    std::size_t importance_runs = 5;
    std::string train_sessions;
    std::string test_sessions;
    std::string mapping;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
    T v{};
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || ec != std::errc() || ptr != text.data() + text.size())
        throw ConfigError(key, "config key '" + key + "': '" + text + "' is not a valid number");
    return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1" || text == "yes") return true;
    if (text == "false" || text == "0" || text == "no") return false;
    throw ConfigError(key, "config key '" + key + "': expected true or false, got '" + text + "'");
}

inline void require(bool ok, const std::string& key, const std::string& rule) {
    if (!ok) throw ConfigError(key, "config key '" + key + "' must be " + rule);
}

struct ConfigKey {
    const char* name;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline const std::vector<ConfigKey>& config_keys() {
    using C = RunConfig;
    auto count = [](const char* name, auto field, std::size_t lo) {
        return ConfigKey{name,
                         [=](C& c, const std::string& v) {
                             const auto n = parse_number<std::size_t>(name, v);
                             require(n >= lo, name, ">= " + std::to_string(lo));
                             field(c) = n;
                         },
                         [=](const C& c) { return std::to_string(field(const_cast<C&>(c))); }};
    };
    auto real = [](const char* name, auto field, double lo, double hi, bool open_lo, bool open_hi) {
        return ConfigKey{name,
                         [=](C& c, const std::string& v) {
                             const auto x = parse_number<double>(name, v);
                             const bool ok = (open_lo ? x > lo : x >= lo) && (open_hi ? x < hi : x <= hi);
                             require(ok, name,
                                     std::string("in ") + (open_lo ? "(" : "[") + format_double(lo) + ", " +
                                         format_double(hi) + (open_hi ? ")" : "]"));
                             field(c) = x;
                         },
                         [=](const C& c) { return format_double(field(const_cast<C&>(c))); }};
    };
    auto seed = [](const char* name, auto field) {
        return ConfigKey{name, [=](C& c, const std::string& v) { field(c) = parse_number<std::uint64_t>(name, v); },
                         [=](const C& c) { return std::to_string(field(const_cast<C&>(c))); }};
    };
    auto text = [](const char* name, auto field) {
        return ConfigKey{name, [=](C& c, const std::string& v) { field(c) = v; },
                         [=](const C& c) { return field(const_cast<C&>(c)); }};
    };
    constexpr double inf = std::numeric_limits<double>::infinity();
    static const std::vector<ConfigKey> keys{
        count("k", [](C& c) -> std::size_t& { return c.ensemble.k; }, 1),
        count("n_hidden", [](C& c) -> std::size_t& { return c.ensemble.n_hidden; }, 1),
        count("min_support", [](C& c) -> std::size_t& { return c.ensemble.min_support; }, 1),
        real("hmm_tol", [](C& c) -> double& { return c.ensemble.hmm.tol; }, 0.0, inf, false, true),
        count("hmm_max_iters", [](C& c) -> std::size_t& { return c.ensemble.hmm.max_iters; }, 1),
        count("fusion_hidden", [](C& c) -> std::size_t& { return c.ensemble.fusion.hidden; }, 1),
        real("fusion_lr", [](C& c) -> double& { return c.ensemble.fusion.lr; }, 0.0, inf, true, true),
        real("fusion_l2", [](C& c) -> double& { return c.ensemble.fusion.l2; }, 0.0, inf, false, true),
        count("fusion_epochs", [](C& c) -> std::size_t& { return c.ensemble.fusion.epochs; }, 1),
        count("fusion_batch", [](C& c) -> std::size_t& { return c.ensemble.fusion.batch; }, 1),
        ConfigKey{"fusion_output",
                  [](C& c, const std::string& v) {
                      try {
                          c.ensemble.fusion.output = fusion_output_from_string(v);
                      } catch (const DomainError&) {
                          throw ConfigError("fusion_output", "config key 'fusion_output' must be linear or softmax");
                      }
                  },
                  [](const C& c) { return to_string(c.ensemble.fusion.output); }},
        seed("base_seed", [](C& c) -> std::uint64_t& { return c.ensemble.base_seed; }),
        ConfigKey{"parallel", [](C& c, const std::string& v) { c.ensemble.parallel = parse_bool("parallel", v); },
                  [](const C& c) { return std::string(c.ensemble.parallel ? "true" : "false"); }},
        count("workers", [](C& c) -> std::size_t& { return c.ensemble.workers; }, 0),
        count("stride", [](C& c) -> std::size_t& { return c.ensemble.stride; }, 1),
        count("max_len", [](C& c) -> std::size_t& { return c.ensemble.max_len; }, 0),
        real("test_fraction", [](C& c) -> double& { return c.test_fraction; }, 0.0, 1.0, true, true),
        seed("split_seed", [](C& c) -> std::uint64_t& { return c.split_seed; }),
        real("markov_smoothing", [](C& c) -> double& { return c.markov_smoothing; }, 0.0, inf, false, true),
        ConfigKey{"sweep_k",
                  [](C& c, const std::string& v) {
                      std::vector<std::size_t> ks;
                      std::stringstream ss(v);
                      std::string tok;
                      while (std::getline(ss, tok, ',')) ks.push_back(parse_number<std::size_t>("sweep_k", trim(tok)));
                      try {
                          check_k_values(ks);
                      } catch (const DomainError& e) {
                          throw ConfigError("sweep_k", std::string("config key 'sweep_k': ") + e.what());
                      }
                      c.sweep_k = std::move(ks);
                  },
                  [](const C& c) {
                      std::string out;
                      for (std::size_t i = 0; i < c.sweep_k.size(); ++i) out += (i ? "," : "") + std::to_string(c.sweep_k[i]);
                      return out;
                  }},
        count("importance_runs", [](C& c) -> std::size_t& { return c.importance_runs; }, 1),
        text("train_sessions", [](C& c) -> std::string& { return c.train_sessions; }),
        text("test_sessions", [](C& c) -> std::string& { return c.test_sessions; }),
        text("mapping", [](C& c) -> std::string& { return c.mapping; }),
    };
    return keys;
}

}  // namespace detail

/// Sets one key; unknown keys and out-of-range values throw ConfigError naming the key.
inline void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
    for (const auto& k : detail::config_keys())
        if (key == k.name) {
            k.set(c, value);
            return;
        }
    throw ConfigError(key, "unknown config key '" + key + "'");
}

/// `key = value` lines; '#' starts a comment. Keys may appear once.
inline RunConfig parse_config(std::istream& in, RunConfig base = {}) {
    std::string line;
    std::size_t lineno = 0;
    std::set<std::string> seen;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("", "config line " + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (!seen.insert(key).second) throw ConfigError(key, "config key '" + key + "' given twice");
        set_config_value(base, key, value);
    }
    return base;
}

inline RunConfig load_config(const std::string& path, RunConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path);
    return parse_config(in, std::move(base));
}

/// Every key with its current value, in a form parse_config accepts.
inline std::string config_text(const RunConfig& c) {
    std::string out = "# fhmm-config v1\n";
    for (const auto& k : detail::config_keys()) out += std::string(k.name) + " = " + k.get(c) + "\n";
    return out;
}

}  // namespace fhmm
