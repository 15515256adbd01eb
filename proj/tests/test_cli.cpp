#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "ebmh/adapter_mock.hpp"
#include "ebmh/classifier.hpp"
#include "ebmh/cli.hpp"
#include "ebmh/eval.hpp"
#include "ebmh/io.hpp"
#include "ebmh/ngram.hpp"
#include "support.hpp"

using namespace ebmh;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  std::vector<std::string> argv{"ebmh"};
  argv.insert(argv.end(), args.begin(), args.end());
  Run r;
  r.code = cli::run(argv, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

void write_file(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

const char* kCorpus =
    "how art thou\n"
    "thou art here\n"
    "how are you\n"
    "you are here\n"
    "\n"
    "how are you here\n";

// A trained model plus configs sharing its directory.
struct Workspace {
  test::TempDir dir;
  fs::path model;

  Workspace() {
    write_file(dir / "corpus.txt", kCorpus);
    model = dir / "lm.json";
    const auto r = run_cli({"train-lm", (dir / "corpus.txt").string(), "-o", model.string(), "-n", "2", "-k", "0.5"});
    REQUIRE(r.code == 0);
  }

  fs::path config(const std::string& name, const json& j) const {
    const auto p = dir / name;
    write_file(p, j.dump(2));
    return p;
  }

  json span_config(const std::string& out) const {
    return {{"proposal", {{"kind", "span-block"}, {"model", "lm.json"}, {"max_span", 2}, {"max_new", 2}}},
            {"energy", {{"terms", json::array({{{"kind", "ngram-nll"}, {"params", {{"model", "lm.json"}}}}})}}},
            {"steps", 30},
            {"batch_size", 4},
            {"seed", 11},
            {"init_text", "how art thou"},
            {"out_dir", out}};
  }
};

}  // namespace

TEST_CASE("train-lm writes a model that reloads bit-identically") {
  Workspace ws;
  REQUIRE(fs::exists(ws.dir / "lm.vocab.json"));
  const auto m = NgramModel::load(ws.model);
  CHECK(m.order() == 2);
  CHECK(m.k() == 0.5);
  CHECK(m.vocab().size() == 6);
  CHECK(dump_json(m.to_json("lm.vocab.json")) == read_file(ws.model));

  const auto again = ws.dir / "lm2.json";
  REQUIRE(run_cli({"train-lm", (ws.dir / "corpus.txt").string(), "-o", again.string(), "-n", "2", "-k", "0.5",
                   "--vocab", (ws.dir / "lm.vocab.json").string()})
              .code == 0);
  const auto first = json::parse(read_file(ws.model));
  auto second = json::parse(read_file(again));
  CHECK(first["counts"] == second["counts"]);
  CHECK_FALSE(fs::exists(ws.dir / "lm2.vocab.json"));

  test::TempDir other;
  write_file(other / "corpus.txt", kCorpus);
  run_cli({"train-lm", (other / "corpus.txt").string(), "-o", (other / "lm.json").string(), "-n", "2", "-k", "0.5"});
  CHECK(read_file(other / "lm.json") == read_file(ws.model));
  CHECK(read_file(other / "lm.vocab.json") == read_file(ws.dir / "lm.vocab.json"));
}

TEST_CASE("train-lm failures exit nonzero") {
  test::TempDir dir;
  const auto r = run_cli({"train-lm", (dir / "missing.txt").string(), "-o", (dir / "m.json").string()});
  CHECK(r.code != 0);
  CHECK(r.err.find("missing.txt") != std::string::npos);
  write_file(dir / "c.txt", "a b\n");
  CHECK(run_cli({"train-lm", (dir / "c.txt").string(), "-o", (dir / "m.json").string(), "-k", "0"}).code == 2);
  CHECK(run_cli({"train-lm"}).code == 2);
  CHECK(run_cli({"no-such-command"}).code == 2);
  CHECK(run_cli({"--help"}).code == 0);
}

TEST_CASE("train-clf labels classes by file stem") {
  test::TempDir dir;
  write_file(dir / "old.txt", "thou art here\nhow art thou\n");
  write_file(dir / "modern.txt", "you are here\nhow are you\n");
  const auto out = dir / "clf.json";
  REQUIRE(run_cli({"train-clf", (dir / "old.txt").string(), (dir / "modern.txt").string(), "-o", out.string()})
              .code == 0);
  const auto clf = StyleClassifier::load(out);
  CHECK(clf.posterior(std::vector<std::string>{"thou", "art"}, "old") > 0.5);
  CHECK(clf.posterior(std::vector<std::string>{"you", "are"}, "modern") > 0.5);
  CHECK(run_cli({"train-clf", (dir / "old.txt").string(), (dir / "old.txt").string(), "-o", out.string()}).code ==
        2);
}

TEST_CASE("sample with the identity proposal returns its input") {
  Workspace ws;
  const auto cfg = ws.config("id.json", {{"proposal", {{"kind", "identity"}}},
                                         {"energy", {{"terms", json::array({{{"kind", "constant"},
                                                                             {"params", {{"value", 1.0}}}}})}}},
                                         {"steps", 5},
                                         {"batch_size", 3},
                                         {"init_text", "how art thou"},
                                         {"vocab", "lm.vocab.json"}});
  const auto out = ws.dir / "id-out";
  const auto r = run_cli({"sample", cfg.string(), "--out", out.string()});
  INFO(r.err);
  REQUIRE(r.code == 0);
  CHECK(r.out == "how art thou\n");
  const auto trace = read_file(out / "trace.jsonl");
  CHECK(std::count(trace.begin(), trace.end(), '\n') == 15);
  const auto summary = json::parse(read_file(out / "summary.json"));
  CHECK(summary["best_text"] == "how art thou");
  CHECK(summary["per_chain"].size() == 3);
  const auto manifest = json::parse(read_file(out / "manifest.json"));
  CHECK(manifest["command"] == "sample");
  CHECK(manifest["artifacts"].size() == 2);
}

TEST_CASE("sample rejects invalid configuration with exit code 2") {
  Workspace ws;
  const auto cfg = ws.config("span.json", ws.span_config("o"));
  auto r = run_cli({"sample", cfg.string(), "--mode", "lenient"});
  CHECK(r.code == 2);
  CHECK(r.err.find("mode") != std::string::npos);
  CHECK(run_cli({"sample", cfg.string(), "--steps", "0"}).code == 2);

  auto broken = ws.span_config("o");
  broken["proposal"]["kind"] = "teleport";
  CHECK(run_cli({"sample", ws.config("b1.json", broken).string()}).code == 2);
  broken = ws.span_config("o");
  broken["energy"]["terms"][0]["params"]["model"] = "nope.json";
  r = run_cli({"sample", ws.config("b2.json", broken).string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("energy.terms[0]") != std::string::npos);
  broken = ws.span_config("o");
  broken.erase("energy");
  CHECK(run_cli({"sample", ws.config("b3.json", broken).string()}).code == 2);
}

TEST_CASE("sample is reproducible byte for byte") {
  Workspace ws;
  ::setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
  const auto a = run_cli({"sample", ws.config("a.json", ws.span_config("run-a")).string()});
  const auto b = run_cli({"sample", ws.config("b.json", ws.span_config("run-b")).string(), "--threads", "3"});
  ::unsetenv("SOURCE_DATE_EPOCH");
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(a.out == b.out);
  for (const char* f : {"trace.jsonl", "summary.json"}) {
    CHECK(read_file(ws.dir / "run-a" / f) == read_file(ws.dir / "run-b" / f));
  }
  const auto ma = json::parse(read_file(ws.dir / "run-a" / "manifest.json"));
  CHECK(ma["timestamp"] == "2023-11-14T22:13:20Z");
  const auto c = run_cli({"sample", ws.config("c.json", ws.span_config("run-c")).string(), "--seed", "12"});
  CHECK(read_file(ws.dir / "run-a" / "trace.jsonl") != read_file(ws.dir / "run-c" / "trace.jsonl"));
}

TEST_CASE("intrinsic writes a report and histogram") {
  Workspace ws;
  const json j = {{"target", "lm.json"},
                  {"exact_n", 200},
                  {"seed", 3},
                  {"init_text", "how are you"},
                  {"samplers", json::array({{{"name", "span"},
                                             {"proposal", {{"kind", "span-block"}, {"max_span", 2}, {"max_new", 2}}},
                                             {"steps", 10},
                                             {"chains", 5}},
                                            {{"name", "mask"}, {"proposal", {{"kind", "token-mask"}}}, {"steps", 10},
                                             {"chains", 5}}})}};
  const auto out = ws.dir / "intr";
  const auto r = run_cli({"intrinsic", ws.config("intr.json", j).string(), "--out", out.string()});
  INFO(r.err);
  REQUIRE(r.code == 0);
  const auto report = json::parse(read_file(out / "report.json"));
  CHECK(report["samplers"].size() == 2);
  CHECK(report["samplers"][1]["forward_passes"] == 50);
  const auto csv = read_file(out / "histogram.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 200 + 5 + 5);
  CHECK(fs::exists(out / "manifest.json"));

  const json exact_only = {{"target", "lm.json"}, {"exact_n", 50}, {"samplers", json::array()}};
  REQUIRE(run_cli({"intrinsic", ws.config("exact.json", exact_only).string(), "--out", (ws.dir / "ex").string()})
              .code == 0);
  const auto ex = json::parse(read_file(ws.dir / "ex" / "report.json"));
  CHECK(ex["samplers"].empty());
  CHECK(ex["exact"]["energies"].size() == 50);

  json missing = exact_only;
  missing["target"] = "absent.json";
  const auto r2 = run_cli({"intrinsic", ws.config("missing.json", missing).string()});
  CHECK(r2.code == 2);
  CHECK(r2.err.find("target") != std::string::npos);
}

TEST_CASE("eval computes J on a hand-checked TSV") {
  test::TempDir dir;
  write_file(dir / "corpus.txt", kCorpus);
  write_file(dir / "old.txt", "thou art here\nhow art thou\n");
  write_file(dir / "modern.txt", "you are here\nhow are you\n");
  REQUIRE(run_cli({"train-lm", (dir / "corpus.txt").string(), "-o", (dir / "lm.json").string()}).code == 0);
  REQUIRE(run_cli({"train-clf", (dir / "old.txt").string(), (dir / "modern.txt").string(), "-o",
                   (dir / "clf.json").string()})
              .code == 0);
  // rows as (acc, sim, fl): (1, 0.5, 1), (0, 0.9, 1), (1, 0.4, 0)  =>  J = 0.5 / 3
  const std::string out1 = "thou art", out2 = "how are you here you are here how are you",
                    out3 = "art art art thou thou";
  const auto lm = NgramModel::load(dir / "lm.json");
  const FluencyJudge probe(std::make_shared<const NgramModel>(lm), 0.0);
  const double nll1 = probe.per_token_nll(tokenize(out1, lm.vocab()));
  const double nll2 = probe.per_token_nll(tokenize(out2, lm.vocab()));
  const double nll3 = probe.per_token_nll(tokenize(out3, lm.vocab()));
  REQUIRE(nll3 > std::max(nll1, nll2));
  write_file(dir / "judges.json", json{{"classifier", "clf.json"},
                                       {"target_label", "old"},
                                       {"fluency", {{"model", "lm.json"}, {"threshold", 0.5 * (nll3 + std::max(nll1, nll2))}}},
                                       {"bootstrap", {{"resamples", 2000}, {"seed", 1}}}}
                                      .dump());
  write_file(dir / "sys.tsv", "source\toutput\ttarget\n"
                              "how are you\t" + out1 + "\tthou is\n"
                              "you are here\t" + out2 + "\thow are you here you are here how are thou\n"
                              "how are you\t" + out3 + "\tart thou you are here\n");
  const auto r = run_cli({"eval", (dir / "sys.tsv").string(), "-j", (dir / "judges.json").string(), "--baseline",
                          (dir / "sys.tsv").string(), "-o", (dir / "metrics.json").string()});
  INFO(r.err);
  REQUIRE(r.code == 0);
  const auto m = json::parse(r.out);
  CHECK(std::abs(m["system"]["J"].get<double>() - 0.16667) < 1e-5);
  CHECK(m["system"]["J"].get<double>() == doctest::Approx(0.5 / 3.0).epsilon(1e-12));
  CHECK(m["system"]["ACC"].get<double>() == doctest::Approx(2.0 / 3.0));
  CHECK(m["system"]["FL"].get<double>() == doctest::Approx(2.0 / 3.0));
  CHECK(m["system"]["SIM"].get<double>() == doctest::Approx((0.5 + 0.9 + 0.4) / 3.0));
  CHECK(m["bootstrap"]["significant"] == false);
  CHECK(json::parse(read_file(dir / "metrics.json")) == m);

  write_file(dir / "empty.tsv", "");
  CHECK(run_cli({"eval", (dir / "empty.tsv").string(), "-j", (dir / "judges.json").string()}).code == 1);
}

TEST_CASE("conformance command reports pass and fail") {
  adapter::MockAdapterServer good;
  auto r = run_cli({"conformance", "--endpoint", good.endpoint()});
  CHECK(r.code == 0);
  CHECK(json::parse(r.out)["passed"] == true);
  adapter::MockBehavior b;
  b.drop_logq_identity = true;
  adapter::MockAdapterServer bad(b);
  r = run_cli({"conformance", "--endpoint", bad.endpoint()});
  CHECK(r.code == 1);
}

TEST_CASE("the installed executable maps errors to exit codes") {
  const std::string exe = EBMH_CLI_PATH;
  CHECK(std::system((exe + " --version > /dev/null 2>&1").c_str()) == 0);
  const int status = std::system((exe + " sample /nonexistent/config.json > /dev/null 2>&1").c_str());
  REQUIRE(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) != 0);
}

TEST_CASE("adapter-block sampling runs end to end against the mock server") {
  adapter::MockBehavior b;
  b.candidates = {"how are you", "how art thou this fine morning"};
  adapter::MockAdapterServer server(b);
  test::TempDir dir;
  const json cfg = {{"adapter", {{"endpoint", server.endpoint()}, {"timeout_ms", 2000}}},
                    {"proposal", {{"kind", "adapter-block"}}},
                    {"energy", {{"terms", json::array({{{"kind", "adapter"}, {"name", "len"}}})}}},
                    {"steps", 10},
                    {"batch_size", 2},
                    {"init_text", "how art thou this fine morning"},
                    {"out_dir", "out"}};
  write_file(dir / "cfg.json", cfg.dump());
  const auto r = run_cli({"sample", (dir / "cfg.json").string()});
  INFO(r.err);
  REQUIRE(r.code == 0);
  const auto summary = json::parse(read_file(dir / "out" / "summary.json"));
  CHECK(summary["mode"] == "identity-variant");
  CHECK(summary["proposal"] == "adapter-block");
  CHECK(summary["best_energy"].get<double>() <= 0.6 + 1e-12);
  for (const auto& c : summary["per_chain"]) {
    CHECK(c["steps"] == 10);
    CHECK(c["initial_energy"].get<double>() == doctest::Approx(0.6));
  }
  CHECK(r.out == "how are you\n");
}
