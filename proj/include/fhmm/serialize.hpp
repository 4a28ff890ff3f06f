#pragma once

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fhmm/ensemble.hpp"
#include "fhmm/error.hpp"
#include "fhmm/fusion.hpp"
#include "fhmm/hmm.hpp"
#include "fhmm/ingest.hpp"
#include "fhmm/markov.hpp"
#include "fhmm/partition.hpp"

namespace fhmm {

namespace detail {

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_row(std::ostream& out, std::span<const double> row) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? " " : "") << num(row[i]);
    out << '\n';
}

inline void write_matrix(std::ostream& out, const char* name, const Matrix& m) {
    out << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (std::size_t r = 0; r < m.rows(); ++r) write_row(out, m.row(r));
}

class Reader {
public:
    Reader(std::istream& in, std::string what) : in_(in), what_(std::move(what)) {}

    void header(const std::string& expected) {
        std::string line;
        if (!std::getline(in_, line) || line != expected)
            fail("expected header '" + expected + "', got '" + line + "'");
    }

    void keyword(const std::string& k) {
        std::string got;
        if (!(in_ >> got) || got != k) fail("expected '" + k + "', got '" + got + "'");
    }

    template <class T>
    T value() {
        T v;
        if (!(in_ >> v)) fail("truncated or malformed value");
        return v;
    }

    template <class T>
    T field(const std::string& k) {
        keyword(k);
        return value<T>();
    }

    std::vector<double> vec(const std::string& k) {
        keyword(k);
        const auto n = value<std::size_t>();
        std::vector<double> v(n);
        for (auto& x : v) x = value<double>();
        return v;
    }

    Matrix matrix(const std::string& k) {
        keyword(k);
        const auto rows = value<std::size_t>();
        const auto cols = value<std::size_t>();
        Matrix m(rows, cols);
        for (double& x : m.data()) x = value<double>();
        return m;
    }

    [[noreturn]] void fail(const std::string& msg) const { throw DomainError(what_ + ": " + msg); }

private:
    std::istream& in_;
    std::string what_;
};

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError("cannot write " + p.string());
    out << content;
    if (!out) throw IoError("write failed for " + p.string());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Models

inline constexpr const char* kHmmHeader = "# fhmm-hmm v1";
inline constexpr const char* kFusionHeader = "# fhmm-fusion v1";
inline constexpr const char* kMarkovHeader = "# fhmm-markov v1";
inline constexpr const char* kManifestHeader = "# fhmm-ensemble v1";

inline std::string to_text(const HmmModel& m) {
    std::ostringstream out;
    out << kHmmHeader << '\n' << "n_hidden " << m.n_hidden << "\nn_obs " << m.n_obs << "\nseed " << m.seed << '\n';
    out << "pi " << m.pi.size() << '\n';
    detail::write_row(out, m.pi);
    detail::write_matrix(out, "A", m.A);
    detail::write_matrix(out, "B", m.B);
    return out.str();
}

inline HmmModel hmm_from_text(const std::string& text) {
    std::istringstream in(text);
    detail::Reader r(in, "hmm model");
    r.header(kHmmHeader);
    HmmModel m;
    m.n_hidden = r.field<std::size_t>("n_hidden");
    m.n_obs = r.field<std::size_t>("n_obs");
    m.seed = r.field<std::uint64_t>("seed");
    m.pi = r.vec("pi");
    m.A = r.matrix("A");
    m.B = r.matrix("B");
    validate(m);
    return m;
}

inline std::string to_text(const FusionNetwork& n) {
    std::ostringstream out;
    out << kFusionHeader << '\n'
        << "n_models " << n.n_models << "\nn_obs " << n.n_obs << "\nhidden " << n.hidden << "\noutput "
        << to_string(n.output) << "\nl2 " << detail::num(n.l2) << "\nlr " << detail::num(n.lr) << '\n';
    detail::write_matrix(out, "W", n.W);
    out << "c " << n.c.size() << '\n';
    detail::write_row(out, n.c);
    detail::write_matrix(out, "w", n.w);
    out << "b " << n.b.size() << '\n';
    detail::write_row(out, n.b);
    return out.str();
}

inline FusionNetwork fusion_from_text(const std::string& text) {
    std::istringstream in(text);
    detail::Reader r(in, "fusion network");
    r.header(kFusionHeader);
    FusionNetwork n;
    n.n_models = r.field<std::size_t>("n_models");
    n.n_obs = r.field<std::size_t>("n_obs");
    n.hidden = r.field<std::size_t>("hidden");
    n.output = fusion_output_from_string(r.field<std::string>("output"));
    n.l2 = r.field<double>("l2");
    n.lr = r.field<double>("lr");
    n.W = r.matrix("W");
    n.c = r.vec("c");
    n.w = r.matrix("w");
    n.b = r.vec("b");
    if (n.W.rows() != n.input_dim() || n.W.cols() != n.hidden || n.c.size() != n.hidden || n.w.rows() != n.hidden ||
        n.w.cols() != n.n_obs || n.b.size() != n.n_obs)
        r.fail("parameter shapes do not match the declared dimensions");
    return n;
}

inline std::string to_text(const MarkovChainModel& m) {
    std::ostringstream out;
    out << kMarkovHeader << '\n' << "n_obs " << m.n_obs << "\nsmoothing " << detail::num(m.smoothing) << '\n';
    out << "init " << m.init.size() << '\n';
    detail::write_row(out, m.init);
    detail::write_matrix(out, "transitions", m.transitions);
    return out.str();
}

inline MarkovChainModel markov_from_text(const std::string& text) {
    std::istringstream in(text);
    detail::Reader r(in, "markov model");
    r.header(kMarkovHeader);
    MarkovChainModel m;
    m.n_obs = r.field<std::size_t>("n_obs");
    m.smoothing = r.field<double>("smoothing");
    m.init = r.vec("init");
    m.transitions = r.matrix("transitions");
    if (m.init.size() != m.n_obs || m.transitions.rows() != m.n_obs || m.transitions.cols() != m.n_obs)
        r.fail("shape mismatch");
    return m;
}

// ---------------------------------------------------------------------------
// Partition plan

inline nlohmann::json to_json(const PartitionPlan& p) {
    nlohmann::json groups = nlohmann::json::array();
    for (std::size_t g = 0; g < p.groups.size(); ++g)
        groups.push_back({{"length", p.groups[g].length},
                          {"support", p.freq_arrays[g].support},
                          {"rank", p.ranks[g]},
                          {"members", p.groups[g].members},
                          {"session_ids", p.group_session_ids[g]},
                          {"probs", p.freq_arrays[g].probs}});
    nlohmann::json dist = nlohmann::json::array();
    for (std::size_t r = 0; r < p.distances.rows(); ++r) {
        const auto row = p.distances.row(r);
        dist.push_back(std::vector<double>(row.begin(), row.end()));
    }
    return {{"schema", "fhmm-partition"},
            {"version", 1},
            {"n_obs", p.n_obs},
            {"total_sessions", p.total_sessions},
            {"k", p.k},
            {"min_support", p.min_support},
            {"selected_lengths", p.selected_lengths},
            {"coverage", p.coverage},
            {"warnings", p.warnings},
            {"groups", groups},
            {"distances", dist}};
}

inline PartitionPlan plan_from_json(const nlohmann::json& j) {
    try {
        if (j.at("schema") != "fhmm-partition" || j.at("version") != 1) throw DomainError("unsupported partition schema");
        PartitionPlan p;
        p.n_obs = j.at("n_obs");
        p.total_sessions = j.at("total_sessions");
        p.k = j.at("k");
        p.min_support = j.at("min_support");
        p.selected_lengths = j.at("selected_lengths").get<std::vector<std::size_t>>();
        p.coverage = j.at("coverage");
        p.warnings = j.at("warnings").get<std::vector<std::string>>();
        for (const auto& g : j.at("groups")) {
            p.groups.push_back({g.at("length"), g.at("members").get<std::vector<std::size_t>>()});
            p.group_session_ids.push_back(g.at("session_ids").get<std::vector<std::string>>());
            p.freq_arrays.push_back({g.at("length"), g.at("probs").get<std::vector<double>>(), g.at("support")});
            p.ranks.push_back(g.at("rank"));
        }
        const auto& d = j.at("distances");
        p.distances = Matrix(d.size(), d.size());
        for (std::size_t r = 0; r < d.size(); ++r)
            for (std::size_t c = 0; c < d.size(); ++c) p.distances(r, c) = d.at(r).at(c);
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw DomainError(std::string("malformed partition document: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Ensemble directory

/// File name -> content for every file of a serialized ensemble.
using EnsembleFiles = std::map<std::string, std::string>;

inline EnsembleFiles serialize_ensemble(const EnsembleModel& m) {
    check_invariants(m);
    EnsembleFiles files;
    std::ostringstream manifest;
    manifest << kManifestHeader << '\n'
             << "n_obs " << m.n_obs << "\nk " << m.k() << "\nbase_seed " << m.base_seed << "\nmax_len " << m.max_len
             << "\nlengths";
    for (std::size_t len : m.lengths) manifest << ' ' << len;
    manifest << '\n';
    for (const auto& w : m.warnings) manifest << "warning " << w << '\n';
    files["manifest.txt"] = manifest.str();
    files["plan.json"] = to_json(m.plan).dump(1) + "\n";
    for (std::size_t i = 0; i < m.k(); ++i) files["hmm_" + std::to_string(m.lengths[i]) + ".txt"] = to_text(m.models[i]);
    files["fusion.txt"] = to_text(m.fusion);
    std::ostringstream alpha;
    std::vector<std::string> names = m.alphabet;
    if (names.empty())
        for (std::size_t s = 0; s < m.n_obs; ++s) names.push_back(std::to_string(s));
    write_alphabet(alpha, names);
    files["alphabet.txt"] = alpha.str();
    return files;
}

inline EnsembleModel deserialize_ensemble(const EnsembleFiles& files) {
    auto get = [&](const std::string& name) -> const std::string& {
        const auto it = files.find(name);
        if (it == files.end()) throw IoError("ensemble is missing " + name);
        return it->second;
    };
    EnsembleModel m;
    std::istringstream in(get("manifest.txt"));
    detail::Reader r(in, "ensemble manifest");
    r.header(kManifestHeader);
    m.n_obs = r.field<std::size_t>("n_obs");
    const auto k = r.field<std::size_t>("k");
    m.base_seed = r.field<std::uint64_t>("base_seed");
    m.max_len = r.field<std::size_t>("max_len");
    r.keyword("lengths");
    for (std::size_t i = 0; i < k; ++i) m.lengths.push_back(r.value<std::size_t>());
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line))
        if (line.rfind("warning ", 0) == 0) m.warnings.push_back(line.substr(8));

    const auto plan = nlohmann::json::parse(get("plan.json"), nullptr, false);
    if (plan.is_discarded()) throw DomainError("plan.json is not valid JSON");
    m.plan = plan_from_json(plan);
    for (std::size_t len : m.lengths) m.models.push_back(hmm_from_text(get("hmm_" + std::to_string(len) + ".txt")));
    m.fusion = fusion_from_text(get("fusion.txt"));
    std::istringstream alpha(get("alphabet.txt"));
    m.alphabet = read_alphabet(alpha);
    check_invariants(m);
    return m;
}

inline void save_ensemble(const EnsembleModel& m, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create model directory " + dir.string() + ": " + ec.message());
    for (const auto& [name, content] : serialize_ensemble(m)) detail::write_file(dir / name, content);
}

inline EnsembleModel load_ensemble(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError("model directory " + dir.string() + " does not exist");
    EnsembleFiles files;
    files["manifest.txt"] = detail::read_file(dir / "manifest.txt");
    {
        std::istringstream in(files["manifest.txt"]);
        std::string line;
        while (std::getline(in, line))
            if (line.rfind("lengths", 0) == 0) {
                std::istringstream ls(line.substr(7));
                std::size_t len;
                while (ls >> len) {
                    const auto name = "hmm_" + std::to_string(len) + ".txt";
                    files[name] = detail::read_file(dir / name);
                }
            }
    }
    for (const char* name : {"plan.json", "fusion.txt", "alphabet.txt"}) files[name] = detail::read_file(dir / name);
    return deserialize_ensemble(files);
}

// ---------------------------------------------------------------------------
// Reports

inline nlohmann::json to_json(const EvaluationReport& r, const std::vector<std::string>& alphabet = {}) {
    nlohmann::json per_state = nlohmann::json::array();
    for (std::size_t m = 0; m < r.n_obs; ++m) {
        nlohmann::json row{{"state", m}, {"support", r.support[m]}};
        if (m < alphabet.size()) row["name"] = alphabet[m];
        row["accuracy"] = r.per_state_accuracy[m] ? nlohmann::json(*r.per_state_accuracy[m]) : nlohmann::json(nullptr);
        per_state.push_back(std::move(row));
    }
    nlohmann::json members = nlohmann::json::array();
    for (const auto& [name, acc] : r.per_model_accuracy) members.push_back({{"model", name}, {"accuracy", acc}});
    return {{"predictor", r.predictor}, {"stride", r.stride},  {"points", r.points},
            {"correct", r.correct},     {"accuracy", r.overall_accuracy}, {"per_state", per_state},
            {"per_model", members}};
}

/// JSON summary of one or more predictors evaluated on the same sessions.
inline std::string evaluation_summary(const std::vector<EvaluationReport>& reports,
                                      const std::vector<std::string>& alphabet = {}) {
    nlohmann::json preds = nlohmann::json::array();
    for (const auto& r : reports) preds.push_back(to_json(r, alphabet));
    return nlohmann::json{{"schema", "fhmm-evaluation"}, {"version", 1}, {"predictors", preds}}.dump(2) + "\n";
}

/// Table-III style: one row per state, one accuracy column per predictor; "-" when a state has no support.
inline std::string per_state_csv(const std::vector<EvaluationReport>& reports, const std::vector<std::string>& alphabet = {}) {
    if (reports.empty()) throw DomainError("per-state table needs at least one report");
    std::ostringstream out;
    out << "# fhmm-per-state v1\nstate,name,support";
    for (const auto& r : reports) out << ',' << r.predictor;
    out << '\n';
    const std::size_t M = reports.front().n_obs;
    for (std::size_t m = 0; m < M; ++m) {
        out << m << ',' << (m < alphabet.size() ? alphabet[m] : std::to_string(m)) << ',' << reports.front().support[m];
        for (const auto& r : reports) {
            out << ',';
            if (r.per_state_accuracy[m]) out << detail::num(*r.per_state_accuracy[m]);
            else out << '-';
        }
        out << '\n';
    }
    return out.str();
}

inline std::string confusion_csv(const EvaluationReport& r) {
    std::ostringstream out;
    out << "# fhmm-confusion v1 predictor=" << r.predictor << "\ntrue";
    for (std::size_t c = 0; c < r.n_obs; ++c) out << ",pred_" << c;
    out << '\n';
    for (std::size_t t = 0; t < r.n_obs; ++t) {
        out << t;
        for (std::size_t c = 0; c < r.n_obs; ++c) out << ',' << r.confusion_at(t, c);
        out << '\n';
    }
    return out.str();
}

inline std::string timing_json(const std::vector<StageTime>& times) {
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& t : times) stages.push_back({{"stage", t.stage}, {"seconds", t.seconds}});
    return nlohmann::json{{"schema", "fhmm-timing"}, {"version", 1}, {"stages", stages}}.dump(2) + "\n";
}

inline std::string sweep_csv(const std::vector<SweepPoint>& points) {
    std::ostringstream out;
    out << "# fhmm-sweep v1\nk,error_rate\n";
    for (const auto& p : points) out << p.k << ',' << detail::num(p.error_rate) << '\n';
    return out.str();
}

/// Table-I style listing: "weight ± std" per feature, most important first.
inline std::string feature_importance_table(const std::vector<FeatureImportance>& rows) {
    std::ostringstream out;
    out << "# fhmm-feature-importance v1\n";
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-22s %s\n", "weight", "feature");
    out << buf;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.4f ± %.4f", r.mean, r.stddev);
        char line[192];
        std::snprintf(line, sizeof line, "%-22s %s\n", buf, r.feature.c_str());
        out << line;
    }
    return out.str();
}

inline std::string feature_importance_csv(const std::vector<FeatureImportance>& rows) {
    std::ostringstream out;
    out << "# fhmm-feature-importance v1\nfeature,weight,std\n";
    for (const auto& r : rows) out << r.feature << ',' << detail::num(r.mean) << ',' << detail::num(r.stddev) << '\n';
    return out.str();
}

inline std::string matrix_csv(const Matrix& m, const std::vector<std::string>& names, const std::string& schema) {
    std::ostringstream out;
    out << "# " << schema << " v1\nmodel";
    for (const auto& n : names) out << ',' << n;
    out << '\n';
    for (std::size_t r = 0; r < m.rows(); ++r) {
        out << names[r];
        for (std::size_t c = 0; c < m.cols(); ++c) out << ',' << detail::num(m(r, c));
        out << '\n';
    }
    return out.str();
}

/// Plot data for the 2-D projection of the frequency arrays.
inline std::string projection_csv(const PartitionPlan& plan) {
    std::ostringstream out;
    out << "# fhmm-projection v1\nlength,support,rank,selected,pc1,pc2\n";
    if (plan.freq_arrays.size() < 2) return out.str();
    const auto proj = project_2d(plan.freq_arrays);
    for (std::size_t g = 0; g < plan.groups.size(); ++g) {
        const bool selected = plan.ranks[g] != 0 && plan.ranks[g] <= plan.k;
        out << plan.groups[g].length << ',' << plan.freq_arrays[g].support << ',' << plan.ranks[g] << ','
            << (selected ? 1 : 0) << ',' << detail::num(proj.points[g][0]) << ',' << detail::num(proj.points[g][1])
            << '\n';
    }
    return out.str();
}

/// Predictions from an external model, one line per session:
/// `<session_id>\t<p1>,<p2>,...` with one prediction per stride point.
inline SessionPredictions read_external_predictions(std::istream& in, std::span<const StateSequence> sessions) {
    std::map<std::string, std::vector<Symbol>> by_id;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw DomainError("predictions line " + std::to_string(lineno) + ": missing tab");
        const auto rest = line.substr(tab + 1);
        by_id[line.substr(0, tab)] = rest.empty() ? std::vector<Symbol>{} : parse_symbol_list(rest);
    }
    SessionPredictions out;
    for (const auto& s : sessions) {
        const auto it = by_id.find(s.session_id);
        if (it == by_id.end()) throw DomainError("no external predictions for session " + s.session_id);
        out.push_back(it->second);
    }
    return out;
}

}  // namespace fhmm
