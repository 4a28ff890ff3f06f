#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "fhmm/ingest.hpp"
#include "oracles.hpp"

using namespace fhmm;
using fhmm::oracle::matrix_from;

namespace {

std::string event(const std::string& id, const std::string& session, const std::string& ts,
                  const std::string& input = "") {
    nlohmann::json j{{"eventid", id}, {"session", session}, {"timestamp", ts}, {"src_ip", "203.0.113.9"}};
    if (!input.empty()) j["input"] = input;
    return j.dump();
}

std::size_t state_of(const std::string& name) {
    const auto& a = default_alphabet();
    return static_cast<std::size_t>(std::find(a.begin(), a.end(), name) - a.begin());
}

std::vector<std::vector<Symbol>> symbols_of(const std::vector<StateSequence>& s) {
    std::vector<std::vector<Symbol>> out;
    for (const auto& x : s) out.push_back(x.symbols);
    return out;
}

HmmModel cycle_generator(std::size_t n_obs, std::size_t offset) {
    // Hidden chain 0 -> 1 -> 2 -> 0, each state emitting one symbol.
    Matrix A = matrix_from({{0, 1, 0}, {0, 0, 1}, {1, 0, 0}});
    Matrix B(3, n_obs);
    for (std::size_t i = 0; i < 3; ++i) B(i, (offset + i) % n_obs) = 1.0;
    return make_hmm(A, B, {1.0, 0.0, 0.0});
}

}  // namespace

TEST(Alphabet, NineteenStatesInListedOrder) {
    const auto& a = default_alphabet();
    ASSERT_EQ(a.size(), 19u);
    EXPECT_EQ(a.front(), "client.size");
    EXPECT_EQ(a[13], "login.failed");
    EXPECT_EQ(a.back(), "session.input");
    EXPECT_EQ(std::set<std::string>(a.begin(), a.end()).size(), 19u);
}

TEST(ClassifyCommand, RuleTable) {
    EXPECT_EQ(classify_command("rm -rf /tmp/x"), CommandClass::del);
    EXPECT_EQ(classify_command("uname -a"), CommandClass::system);
    EXPECT_EQ(classify_command("cd /tmp"), CommandClass::dir_sudo);
    EXPECT_EQ(classify_command("SUDO su"), CommandClass::dir_sudo);
    EXPECT_EQ(classify_command("/bin/rm a"), CommandClass::del);
    EXPECT_EQ(classify_command("echo hi > f"), CommandClass::write);
    EXPECT_EQ(classify_command("echo hi"), CommandClass::other);
    EXPECT_EQ(classify_command("cat /proc/cpuinfo"), CommandClass::system);
    EXPECT_EQ(classify_command("cat /proc/cpuinfo > x"), CommandClass::write);
    EXPECT_EQ(classify_command("cat notes.txt"), CommandClass::other);
    EXPECT_EQ(classify_command("wget -O a http://x"), CommandClass::write);
    EXPECT_EQ(classify_command("wget http://x"), CommandClass::other);
    EXPECT_EQ(classify_command("  tee log"), CommandClass::write);
    EXPECT_EQ(classify_command("./payload"), CommandClass::other);
}

TEST(ClassifyCommand, FuzzedCorpusIsTotal) {
    Rng rng(99);
    const std::string chars = "abcdefghijklmnopqrstuvwxyzRM /.>-|;0123456789";
    std::map<CommandClass, std::size_t> seen;
    for (int i = 0; i < 500; ++i) {
        std::string cmd;
        const std::size_t n = 1 + rng.below(24);
        for (std::size_t c = 0; c < n; ++c) cmd += chars[rng.below(chars.size())];
        if (i % 5 == 0) cmd = std::vector<std::string>{"rm ", "ls ", "uname ", "touch ", "ps "}[rng.below(5)] + cmd;
        const auto cls = classify_command(cmd);
        const auto name = to_string(cls);
        EXPECT_TRUE(name == "delete" || name == "dir-sudo" || name == "other" || name == "system" || name == "write");
        ++seen[cls];
    }
    std::size_t total = 0;
    for (const auto& [cls, n] : seen) total += n;
    EXPECT_EQ(total, 500u);
}

TEST(EventMapping, ShippedDataFileMatchesBuiltIn) {
    const auto loaded = load_mapping(std::string(FHMM_DATA_DIR) + "/cowrie_mapping.json");
    EXPECT_EQ(loaded.to_json(), default_mapping().to_json());
}

TEST(EventMapping, StripsPrefixAndUsesFirstMatch) {
    const auto m = default_mapping();
    EXPECT_EQ(m.map("cowrie.login.failed", std::nullopt), state_of("login.failed"));
    EXPECT_EQ(m.map("login.success", std::nullopt), state_of("login.success"));
    EXPECT_EQ(m.map("cowrie.session.file_download", std::nullopt), state_of("session.file-download"));
    EXPECT_EQ(m.map("cowrie.command.input", std::string("rm x")), state_of("command.input/delete"));
    EXPECT_EQ(m.map("cowrie.command.input", std::nullopt), std::nullopt);
    EXPECT_EQ(m.map("cowrie.session.params", std::nullopt), std::nullopt);
    EXPECT_EQ(m.map("cowrie.login.failedx", std::nullopt), std::nullopt);
}

TEST(EventMapping, RejectsIncompleteCoverage) {
    EXPECT_THROW(EventMapping({"a", "b"}, {{"x", std::nullopt, 0}}), DomainError);
    EXPECT_THROW(EventMapping({"a"}, {{"x", std::nullopt, 3}}), DomainError);
    EXPECT_THROW(EventMapping({"a"}, {{"(", std::nullopt, 0}}), DomainError);
}

TEST(EventMapping, RegexCommandPattern) {
    EventMapping m({"wget", "other"}, {{"command\\.input", "wget", 0}, {".*", std::nullopt, 1}});
    EXPECT_EQ(m.map("cowrie.command.input", std::string("cd /; wget x")), 0u);
    EXPECT_EQ(m.map("cowrie.command.input", std::string("curl x")), 1u);
}

TEST(Timestamp, ParsesIsoForms) {
    EXPECT_EQ(parse_timestamp_us("1970-01-01T00:00:00Z"), 0);
    EXPECT_EQ(parse_timestamp_us("1970-01-01T00:00:01.5Z"), 1500000);
    EXPECT_EQ(parse_timestamp_us("2017-04-01T00:00:00.000000Z"), 1491004800LL * 1000000);
    EXPECT_EQ(parse_timestamp_us("2017-04-01T02:00:00+02:00"), 1491004800LL * 1000000);
    EXPECT_EQ(parse_timestamp_us("2000-03-01 00:00:00"), 951868800LL * 1000000);
    EXPECT_EQ(parse_timestamp_us("yesterday"), std::nullopt);
    EXPECT_EQ(parse_timestamp_us("2017-13-01T00:00:00Z"), std::nullopt);
    EXPECT_EQ(parse_timestamp_us("2017-04-01T00:00:00Q"), std::nullopt);
}

TEST(Timestamp, FormatRoundTrips) {
    for (std::int64_t us : {0LL, 1491004800123456LL, 951868799999999LL, 4102444800000000LL})
        EXPECT_EQ(parse_timestamp_us(detail::format_timestamp(us)), us);
}

TEST(ParseLogs, TwoEventsOneSessionInTimestampOrder) {
    std::stringstream in;
    in << event("cowrie.login.success", "a1", "2017-04-01T00:00:02Z") << '\n'
       << event("cowrie.login.failed", "a1", "2017-04-01T00:00:01Z") << '\n';
    const auto r = parse_logs(in, default_mapping());
    ASSERT_EQ(r.sessions.size(), 1u);
    EXPECT_EQ(r.sessions[0].session_id, "a1");
    EXPECT_EQ(r.sessions[0].symbols,
              (std::vector<Symbol>{static_cast<Symbol>(state_of("login.failed")), static_cast<Symbol>(state_of("login.success"))}));
    EXPECT_EQ(r.sessions[0].timestamps.size(), 2u);
}

TEST(ParseLogs, TwoSessionIdsTwoSequencesInFirstAppearanceOrder) {
    std::stringstream in;
    in << event("cowrie.session.connect", "b", "2017-04-01T00:00:05Z") << '\n'
       << event("cowrie.session.connect", "a", "2017-04-01T00:00:01Z") << '\n'
       << event("cowrie.session.closed", "a", "2017-04-01T00:00:02Z") << '\n'
       << event("cowrie.session.closed", "b", "2017-04-01T00:00:06Z") << '\n';
    const auto r = parse_logs(in, default_mapping());
    ASSERT_EQ(r.sessions.size(), 2u);
    EXPECT_EQ(r.sessions[0].session_id, "b");
    EXPECT_EQ(r.sessions[1].session_id, "a");
}

TEST(ParseLogs, TimestampTiesKeepFileOrder) {
    std::stringstream in;
    in << event("cowrie.log.open", "s", "2017-04-01T00:00:01Z") << '\n'
       << event("cowrie.log.closed", "s", "2017-04-01T00:00:01Z") << '\n'
       << event("cowrie.client.size", "s", "2017-04-01T00:00:01Z") << '\n';
    const auto r = parse_logs(in, default_mapping());
    ASSERT_EQ(r.sessions.size(), 1u);
    EXPECT_EQ(r.sessions[0].symbols, (std::vector<Symbol>{12, 11, 0}));
}

TEST(ParseLogs, MultipleFilesMergeByTimestampThenFile) {
    std::stringstream f0, f1;
    f0 << event("cowrie.log.open", "s", "2017-04-01T00:00:02Z") << '\n';
    f1 << event("cowrie.log.closed", "s", "2017-04-01T00:00:01Z") << '\n'
       << event("cowrie.client.size", "s", "2017-04-01T00:00:02Z") << '\n';
    const auto r = parse_logs(std::vector<std::istream*>{&f0, &f1}, default_mapping());
    ASSERT_EQ(r.sessions.size(), 1u);
    EXPECT_EQ(r.sessions[0].symbols, (std::vector<Symbol>{11, 12, 0}));
}

TEST(ParseLogs, SkipReportAccountsForEveryLine) {
    std::stringstream in;
    in << event("cowrie.login.failed", "a", "2017-04-01T00:00:01Z") << '\n'
       << "{not json\n"
       << "\n"
       << event("cowrie.session.params", "a", "2017-04-01T00:00:02Z") << '\n'
       << R"({"eventid":"cowrie.login.failed","timestamp":"2017-04-01T00:00:03Z"})" << '\n'
       << event("cowrie.login.failed", "a", "garbage") << '\n'
       << event("cowrie.login.success", "a", "2017-04-01T00:00:04Z") << '\n'
       << event("cowrie.login.success", "lonely", "2017-04-01T00:00:05Z") << '\n'
       << "[1,2]\n";
    const auto r = parse_logs(in, default_mapping());
    const auto& rep = r.report;
    EXPECT_EQ(rep.lines, 9u);
    EXPECT_EQ(rep.blank, 1u);
    EXPECT_EQ(rep.malformed, 2u);
    EXPECT_EQ(rep.missing_fields, 1u);
    EXPECT_EQ(rep.bad_timestamp, 1u);
    EXPECT_EQ(rep.unmapped, 1u);
    EXPECT_EQ(rep.unmapped_events.at("cowrie.session.params"), 1u);
    EXPECT_EQ(rep.short_sessions, 1u);
    EXPECT_EQ(rep.short_session_events, 1u);
    EXPECT_EQ(rep.emitted_events, 2u);
    EXPECT_EQ(rep.emitted_sessions, 1u);
    EXPECT_EQ(rep.skipped() + rep.emitted_events, rep.lines);
    ASSERT_FALSE(rep.details.empty());
    EXPECT_EQ(rep.details[0].line, 2u);
    EXPECT_EQ(rep.details[0].reason, "malformed JSON");
    const auto j = rep.to_json();
    EXPECT_EQ(j.at("lines"), 9);
    EXPECT_EQ(j.at("schema"), "fhmm-skip-report");
}

TEST(ParseLogs, UnreadableFileIsFatal) {
    EXPECT_THROW(parse_log_files({"/nonexistent/cowrie.json"}, default_mapping()), IoError);
}

TEST(SynthCorpus, DeterministicGeneratorGivesIdenticalPatterns) {
    GeneratorSpec g{cycle_generator(19, 4), {}, 1.0};
    g.lengths.min_len = 6;
    g.lengths.max_len = 6;
    g.lengths.components = {{1.0, 6.0}};
    const auto c = synth_corpus({{g}, 3, 1});
    ASSERT_EQ(c.sessions.size(), 3u);
    for (const auto& s : c.sessions) EXPECT_EQ(s.symbols, (std::vector<Symbol>{4, 5, 6, 4, 5, 6}));
    EXPECT_EQ(c.labels, (std::vector<std::size_t>{0, 0, 0}));
}

TEST(SynthCorpus, SameSeedSameCorpus) {
    SynthSpec spec{{{random_hmm(3, 19, 5), {}, 1.0}, {random_hmm(4, 19, 6), {}, 2.0}}, 300, 42};
    const auto a = synth_corpus(spec);
    const auto b = synth_corpus(spec);
    EXPECT_EQ(a.sessions, b.sessions);
    EXPECT_EQ(a.labels, b.labels);
    spec.seed = 43;
    EXPECT_NE(synth_corpus(spec).sessions, a.sessions);
}

TEST(SynthCorpus, MixtureWeightsRespected) {
    SynthSpec spec{{{random_hmm(2, 19, 1), {}, 0.7}, {random_hmm(2, 19, 2), {}, 0.3}}, 10000, 7};
    for (auto& g : spec.generators) g.lengths.components = {{1.0, 4.0}};
    const auto c = synth_corpus(spec);
    const auto first = static_cast<double>(std::count(c.labels.begin(), c.labels.end(), 0u));
    EXPECT_NEAR(first / 10000.0, 0.7, 0.02);
}

TEST(SynthCorpus, DefaultLengthsAreLongTailedWithinBounds) {
    SynthSpec spec{{{random_hmm(2, 19, 1), {}, 1.0}}, 5000, 3};
    const auto c = synth_corpus(spec);
    std::size_t lo = SIZE_MAX, hi = 0, short_count = 0;
    for (const auto& s : c.sessions) {
        lo = std::min(lo, s.size());
        hi = std::max(hi, s.size());
        short_count += s.size() < 20;
    }
    EXPECT_GE(lo, 2u);
    EXPECT_LE(hi, 1400u);
    EXPECT_GT(hi, 300u);
    EXPECT_GT(short_count, 2500u);
}

TEST(SynthCorpus, InvalidWeightsRejected) {
    EXPECT_THROW(synth_corpus({{{random_hmm(2, 4, 1), {}, -1.0}}, 5, 0}), DomainError);
    EXPECT_THROW(synth_corpus({{{random_hmm(2, 4, 1), {}, 0.0}}, 5, 0}), DomainError);
    EXPECT_THROW(synth_corpus({{}, 5, 0}), DomainError);
    EXPECT_THROW(synth_corpus({{{random_hmm(2, 4, 1), {}, 1.0}}, 0, 0}), DomainError);
}

TEST(RoundTrip, RenderedLogsParseBackToGroundTruth) {
    SynthSpec spec{{{random_hmm(4, 19, 11), {}, 1.0}, {random_hmm(3, 19, 12), {}, 1.0}}, 1000, 2024};
    for (auto& g : spec.generators) g.lengths.max_len = 300;
    const auto truth = synth_corpus(spec);
    std::stringstream log;
    render_cowrie_logs(truth.sessions, log, 5);
    std::size_t total = 0;
    for (const auto& s : truth.sessions) total += s.size();

    const auto parsed = parse_logs(log, default_mapping());
    ASSERT_EQ(parsed.sessions.size(), truth.sessions.size());
    for (std::size_t i = 0; i < truth.sessions.size(); ++i) {
        EXPECT_EQ(parsed.sessions[i].session_id, truth.sessions[i].session_id);
        EXPECT_EQ(parsed.sessions[i].symbols, truth.sessions[i].symbols);
    }
    EXPECT_EQ(parsed.report.lines, total);
    EXPECT_EQ(parsed.report.emitted_events, total);
    EXPECT_EQ(parsed.report.skipped(), 0u);
}

TEST(SessionsFile, WriteReadRoundTrip) {
    const std::vector<StateSequence> s{{{0, 18, 3}, "x1", {}}, {{5, 5}, "x2", {}}};
    std::stringstream io;
    write_sessions(io, s);
    EXPECT_EQ(io.str(), "# fhmm-sessions v1\nx1\t0,18,3\nx2\t5,5\n");
    EXPECT_EQ(symbols_of(read_sessions(io)), symbols_of(s));
}

TEST(SessionsFile, MalformedLinesRejectedWithLineNumber) {
    std::stringstream bad("# fhmm-sessions v1\nx1\t0,1\nx2\t0,,1\n");
    try {
        read_sessions(bad);
        FAIL();
    } catch (const DomainError& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
    }
    std::stringstream notab("x1 0,1\n");
    EXPECT_THROW(read_sessions(notab), DomainError);
    std::stringstream neg("x1\t0,-1\n");
    EXPECT_THROW(read_sessions(neg), DomainError);
}

TEST(AlphabetFile, RoundTrip) {
    std::stringstream io;
    write_alphabet(io, default_alphabet());
    EXPECT_EQ(read_alphabet(io), default_alphabet());
}
