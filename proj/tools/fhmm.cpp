// fhmm: command-line front end for the FHMM library.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fhmm/benchmark.hpp"
#include "fhmm/config.hpp"
#include "fhmm/ensemble.hpp"
#include "fhmm/ingest.hpp"
#include "fhmm/markov.hpp"
#include "fhmm/partition.hpp"
#include "fhmm/serialize.hpp"

namespace fs = std::filesystem;
using namespace fhmm;

namespace {

// Bad command-line input (maps to exit code 2).
class UsageError : public Error {
public:
    using Error::Error;
};

struct Common {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    bool parallel = false;
    std::optional<std::size_t> workers;
    std::optional<std::size_t> stride;
};

void add_common(CLI::App* cmd, Common& c, bool training) {
    cmd->add_option("--config", c.config, "key = value configuration file");
    cmd->add_option("--out", c.out, "output path")->required();
    if (!training) return;
    cmd->add_option("--seed", c.seed, "base seed (overrides base_seed)");
    cmd->add_flag("--parallel", c.parallel, "train the K HMMs concurrently");
    cmd->add_option("--workers", c.workers, "worker threads for --parallel (0 = auto)");
    cmd->add_option("--stride", c.stride, "predict at every stride-th position");
}

RunConfig resolve(const Common& c) {
    RunConfig rc = c.config.empty() ? RunConfig{} : load_config(c.config);
    if (c.seed) rc.ensemble.base_seed = *c.seed;
    if (c.parallel) rc.ensemble.parallel = true;
    if (c.workers) {
        rc.ensemble.workers = *c.workers;
        rc.ensemble.parallel = true;
    }
    if (c.stride) {
        if (*c.stride == 0) throw ConfigError("stride", "--stride must be at least 1");
        rc.ensemble.stride = *c.stride;
    }
    return rc;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void write(const fs::path& p, const std::string& content) { detail::write_file(p, content); }

void print_timings(const std::vector<StageTime>& t) {
    for (const auto& s : t) std::fprintf(stderr, "  %-18s %8.3f s\n", s.stage.c_str(), s.seconds);
}

std::vector<std::string> alphabet_for(std::size_t n_obs) {
    if (n_obs == default_alphabet().size()) return default_alphabet();
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n_obs; ++i) out.push_back(std::to_string(i));
    return out;
}

std::size_t infer_n_obs(std::span<const StateSequence> sessions, std::size_t requested) {
    if (requested) return requested;
    Symbol hi = 0;
    for (const auto& s : sessions)
        for (Symbol x : s.symbols) hi = std::max(hi, x);
    return std::max<std::size_t>(default_alphabet().size(), static_cast<std::size_t>(hi) + 1);
}

std::vector<StateSequence> load_nonempty(const std::string& path) {
    auto s = load_sessions(path);
    if (s.empty()) throw DomainError("no sessions in " + path);
    return s;
}

// ---------------------------------------------------------------------------

int cmd_ingest(const std::vector<std::string>& logs, const std::string& mapping_path, std::size_t min_length,
               const std::string& out) {
    const auto mapping = mapping_path.empty() ? default_mapping() : load_mapping(mapping_path);
    const auto result = parse_log_files(logs, mapping, min_length);
    const fs::path dir(out);
    ensure_dir(dir);
    save_sessions((dir / "sessions.tsv").string(), result.sessions);
    std::ostringstream alpha;
    write_alphabet(alpha, mapping.alphabet());
    write(dir / "alphabet.txt", alpha.str());
    write(dir / "skip_report.json", result.report.to_json().dump(2) + "\n");
    const auto& r = result.report;
    std::fprintf(stderr, "ingested %zu sessions (%zu events) from %zu lines; skipped %zu lines\n", r.emitted_sessions,
                 r.emitted_events, r.lines, r.skipped());
    std::fprintf(stderr, "skip report: %s\n", (dir / "skip_report.json").string().c_str());
    return 0;
}

int cmd_synth(std::size_t n, std::uint64_t seed, const std::string& profile, bool logs, const std::string& out) {
    SynthSpec spec = benchmark_spec(n, seed);
    if (profile == "longtail") {
        for (auto& g : spec.generators) g.lengths = LengthDistribution{};
    } else if (profile != "benchmark") {
        throw UsageError("unknown profile '" + profile + "' (expected benchmark or longtail)");
    }
    const auto corpus = synth_corpus(spec);
    const fs::path dir(out);
    ensure_dir(dir);
    save_sessions((dir / "sessions.tsv").string(), corpus.sessions);
    std::ostringstream labels;
    labels << "# fhmm-labels v1\n";
    for (std::size_t i = 0; i < corpus.sessions.size(); ++i)
        labels << corpus.sessions[i].session_id << '\t' << corpus.labels[i] << '\n';
    write(dir / "labels.tsv", labels.str());
    std::ostringstream alpha;
    write_alphabet(alpha, default_alphabet());
    write(dir / "alphabet.txt", alpha.str());
    if (logs) {
        std::ofstream log(dir / "cowrie.json");
        if (!log) throw IoError("cannot write " + (dir / "cowrie.json").string());
        render_cowrie_logs(corpus.sessions, log, seed);
    }
    std::fprintf(stderr, "wrote %zu synthetic sessions to %s\n", corpus.sessions.size(), dir.string().c_str());
    return 0;
}

int cmd_partition(const std::string& sessions_path, const RunConfig& rc, const std::string& out) {
    const auto sessions = load_nonempty(sessions_path);
    const std::size_t n_obs = infer_n_obs(sessions, 0);
    const auto plan = partition(sessions, n_obs, rc.ensemble.k, rc.ensemble.min_support);
    const fs::path dir(out);
    ensure_dir(dir);
    write(dir / "plan.json", to_json(plan).dump(1) + "\n");
    write(dir / "projection.csv", projection_csv(plan));
    std::ostringstream groups;
    groups << "# fhmm-groups v1\nlength,support,rank,selected\n";
    for (std::size_t g = 0; g < plan.groups.size(); ++g)
        groups << plan.groups[g].length << ',' << plan.freq_arrays[g].support << ',' << plan.ranks[g] << ','
               << (plan.ranks[g] && plan.ranks[g] <= plan.k ? 1 : 0) << '\n';
    write(dir / "groups.csv", groups.str());
    for (const auto& w : plan.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    std::fprintf(stderr, "selected %zu of %zu length groups, coverage %.4f\n", plan.k, plan.groups.size(), plan.coverage);
    return 0;
}

int cmd_train(const std::string& sessions_path, const RunConfig& rc, const std::string& out) {
    const auto sessions = load_nonempty(sessions_path);
    const std::size_t n_obs = infer_n_obs(sessions, 0);
    const auto model = train_ensemble(sessions, n_obs, rc.ensemble, alphabet_for(n_obs));
    save_ensemble(model, out);
    for (const auto& w : model.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    std::fprintf(stderr, "trained FHMM with k=%zu (%s) on %zu sessions -> %s\n", model.k(),
                 rc.ensemble.parallel ? "parallel" : "sequential", sessions.size(), out.c_str());
    print_timings(model.timings);
    return 0;
}

std::vector<Symbol> parse_prefix(std::string text) {
    text = detail::trim(text);
    if (text.empty()) throw UsageError("empty prefix");
    try {
        return parse_symbol_list(text);
    } catch (const DomainError& e) {
        throw UsageError(std::string("malformed prefix: ") + e.what());
    }
}

int cmd_predict(const std::string& model_dir, std::string prefix_text) {
    const auto model = load_ensemble(model_dir);
    if (prefix_text.empty() || prefix_text == "-") {
        std::ostringstream ss;
        ss << std::cin.rdbuf();
        prefix_text = ss.str();
    }
    const auto prefix = parse_prefix(prefix_text);
    for (Symbol s : prefix)
        if (static_cast<std::size_t>(s) >= model.n_obs)
            throw UsageError("prefix symbol " + std::to_string(s) + " outside [0, " + std::to_string(model.n_obs) + ")");
    const auto p = predict(model, prefix);
    nlohmann::json members = nlohmann::json::array();
    const auto names = model.model_names();
    for (std::size_t i = 0; i < model.k(); ++i) members.push_back({{"model", names[i]}, {"prediction", p.per_model[i]}});
    nlohmann::json j{{"schema", "fhmm-prediction"},
                     {"version", 1},
                     {"prefix", prefix},
                     {"prediction", p.symbol},
                     {"name", model.alphabet.at(static_cast<std::size_t>(p.symbol))},
                     {"per_model", members},
                     {"scores", p.scores}};
    std::cout << j.dump(2) << '\n';
    return 0;
}

int cmd_evaluate(const std::string& model_dir, const std::string& test_path, const std::string& baseline_train,
                 const std::string& external, const RunConfig& rc, const std::string& out) {
    const auto model = load_ensemble(model_dir);
    const auto test = load_nonempty(test_path);
    const std::size_t stride = rc.ensemble.stride;
    std::vector<EvaluationReport> reports{evaluate(model, test, stride)};
    if (!baseline_train.empty()) {
        const auto train = load_nonempty(baseline_train);
        reports.push_back(evaluate(fit_markov(train, model.n_obs, rc.markov_smoothing), test, stride));
        const auto single = baum_welch_fit(train, rc.ensemble.n_hidden, model.n_obs, rc.ensemble.base_seed, rc.ensemble.hmm);
        if (!single.converged) std::fprintf(stderr, "warning: single HMM baseline did not converge\n");
        reports.push_back(evaluate(single.model, test, stride));
    }
    if (!external.empty()) {
        std::ifstream in(external);
        if (!in) throw IoError("cannot open predictions file " + external);
        const auto preds = read_external_predictions(in, test);
        reports.push_back(evaluate_predictions(test, preds, model.n_obs, stride, "external"));
    }
    const fs::path dir(out);
    ensure_dir(dir);
    write(dir / "summary.json", evaluation_summary(reports, model.alphabet));
    write(dir / "per_state.csv", per_state_csv(reports, model.alphabet));
    for (const auto& r : reports) write(dir / ("confusion_" + r.predictor + ".csv"), confusion_csv(r));
    if (model.k() >= 2)
        write(dir / "correlation.csv",
              matrix_csv(prediction_correlation(model.models, test, stride), model.model_names(), "fhmm-correlation"));
    for (const auto& r : reports)
        std::fprintf(stderr, "%-12s accuracy %.4f over %zu points\n", r.predictor.c_str(), r.overall_accuracy, r.points);
    print_timings(reports.front().wall_time);
    return 0;
}

std::vector<std::size_t> parse_k_list(const std::string& text) {
    RunConfig tmp;
    set_config_value(tmp, "sweep_k", text);
    return tmp.sweep_k;
}

int cmd_sweep(const std::string& sessions_path, const std::string& test_path, const RunConfig& rc,
              const std::string& out) {
    const auto sessions = load_nonempty(sessions_path);
    Split split;
    if (test_path.empty()) {
        split = split_sessions(sessions, rc.test_fraction, rc.split_seed);
    } else {
        split.train = sessions;
        split.test = load_nonempty(test_path);
    }
    std::vector<StateSequence> all = split.train;
    all.insert(all.end(), split.test.begin(), split.test.end());
    const std::size_t n_obs = infer_n_obs(all, 0);
    const auto result = sweep_k(split.train, split.test, n_obs, rc.sweep_k, rc.ensemble, alphabet_for(n_obs));
    const fs::path dir(out);
    ensure_dir(dir);
    write(dir / "sweep.csv", sweep_csv(result.points));
    for (const auto& p : result.points) std::fprintf(stderr, "k=%-4zu error %.4f\n", p.k, p.error_rate);
    return 0;
}

int cmd_importance(const std::string& sessions_path, const RunConfig& rc, const std::string& out) {
    const auto sessions = load_nonempty(sessions_path);
    const std::size_t n_obs = infer_n_obs(sessions, 0);
    const auto rows = retrained_importance(sessions, n_obs, rc.ensemble, rc.importance_runs);
    const fs::path dir(out);
    ensure_dir(dir);
    write(dir / "importance.txt", feature_importance_table(rows));
    write(dir / "importance.csv", feature_importance_csv(rows));
    std::fputs(feature_importance_table(rows).c_str(), stderr);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fusion hidden Markov model toolkit for attack-session sequences"};
    app.require_subcommand(1);

    Common common;
    std::vector<std::string> logs;
    std::string mapping, sessions, test, model_dir, prefix, baseline_train, external, profile = "benchmark", k_list;
    std::size_t min_length = 2, n_sessions = 1000;
    std::uint64_t synth_seed = 0;
    std::optional<std::size_t> k;
    std::optional<std::size_t> runs;
    bool render_logs = false;

    auto* ingest = app.add_subcommand("ingest", "convert Cowrie JSON logs into session sequences");
    ingest->add_option("logs", logs, "log files (line-delimited JSON)")->required();
    ingest->add_option("--mapping", mapping, "event mapping JSON (default: built-in 19-state mapping)");
    ingest->add_option("--min-length", min_length, "drop sessions shorter than this")->check(CLI::PositiveNumber);
    ingest->add_option("--out", common.out, "output directory")->required();

    auto* synth = app.add_subcommand("synth", "generate a seeded synthetic session corpus");
    synth->add_option("--sessions", n_sessions, "number of sessions")->check(CLI::PositiveNumber);
    synth->add_option("--seed", synth_seed, "random seed");
    synth->add_option("--profile", profile, "benchmark (lengths 2-300) or longtail (lengths 2-1400)");
    synth->add_flag("--logs", render_logs, "also render the sessions as Cowrie JSON logs");
    synth->add_option("--out", common.out, "output directory")->required();

    auto* part = app.add_subcommand("partition", "group sessions by length and select K diverse groups");
    part->add_option("sessions", sessions, "sessions file")->required();
    add_common(part, common, false);
    part->add_option("--k", k, "number of length groups to select");

    auto* train = app.add_subcommand("train", "train an FHMM ensemble");
    train->add_option("sessions", sessions, "training sessions file")->required();
    add_common(train, common, true);
    train->add_option("--k", k, "number of HMMs");

    auto* pred = app.add_subcommand("predict", "predict the next state after a prefix");
    pred->add_option("model", model_dir, "model directory")->required();
    pred->add_option("prefix", prefix, "comma-separated state indices ('-' or omitted: read stdin)");

    auto* eval = app.add_subcommand("evaluate", "score a trained ensemble and baselines on test sessions");
    eval->add_option("model", model_dir, "model directory")->required();
    eval->add_option("test", test, "test sessions file")->required();
    add_common(eval, common, true);
    eval->add_option("--baselines", baseline_train, "training sessions for Markov and single-HMM baselines");
    eval->add_option("--external", external, "predictions file from a third-party model");

    auto* sweep = app.add_subcommand("sweep", "error rate as a function of K");
    sweep->add_option("sessions", sessions, "sessions file (split into train/test unless --test is given)")->required();
    sweep->add_option("--test", test, "separate test sessions file");
    add_common(sweep, common, true);
    sweep->add_option("--k", k_list, "comma-separated ascending k values");

    auto* imp = app.add_subcommand("importance", "fusion input weight mass over seeded retrainings");
    imp->add_option("sessions", sessions, "training sessions file")->required();
    add_common(imp, common, true);
    imp->add_option("--k", k, "number of HMMs");
    imp->add_option("--runs", runs, "number of retrainings");

    auto* cfg = app.add_subcommand("config", "print the resolved configuration");
    cfg->add_option("--config", common.config, "configuration file to resolve");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        auto resolved = [&] {
            RunConfig rc = resolve(common);
            if (k) {
                if (*k == 0) throw ConfigError("k", "--k must be at least 1");
                rc.ensemble.k = *k;
            }
            if (runs) {
                if (*runs == 0) throw ConfigError("importance_runs", "--runs must be at least 1");
                rc.importance_runs = *runs;
            }
            if (!k_list.empty()) rc.sweep_k = parse_k_list(k_list);
            return rc;
        };
        if (*ingest) return cmd_ingest(logs, mapping, min_length, common.out);
        if (*synth) return cmd_synth(n_sessions, synth_seed, profile, render_logs, common.out);
        if (*part) return cmd_partition(sessions, resolved(), common.out);
        if (*train) return cmd_train(sessions, resolved(), common.out);
        if (*pred) return cmd_predict(model_dir, prefix);
        if (*eval) return cmd_evaluate(model_dir, test, baseline_train, external, resolved(), common.out);
        if (*sweep) return cmd_sweep(sessions, test, resolved(), common.out);
        if (*imp) return cmd_importance(sessions, resolved(), common.out);
        if (*cfg) {
            std::cout << config_text(resolve(common));
            return 0;
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error [%s]: %s\n", e.key().c_str(), e.what());
        return 2;
    } catch (const UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
