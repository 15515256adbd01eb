#include "ebmh/cli.hpp"

#include <cstdlib>
#include <ctime>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "ebmh/adapter_mock.hpp"
#include "ebmh/classifier.hpp"
#include "ebmh/config.hpp"
#include "ebmh/conformance.hpp"
#include "ebmh/eval.hpp"
#include "ebmh/intrinsic.hpp"
#include "ebmh/io.hpp"
#include "ebmh/mh.hpp"
#include "ebmh/ngram.hpp"
#include "ebmh/similarity.hpp"

namespace ebmh::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::string> non_blank_lines(const fs::path& path) {
  std::vector<std::string> out;
  for (auto& line : read_lines(path)) {
    if (!split_whitespace(line).empty()) out.push_back(std::move(line));
  }
  if (out.empty()) throw std::runtime_error(path.string() + ": no non-blank lines");
  return out;
}

std::string relative_ref(const fs::path& target, const fs::path& from_dir) {
  const auto base = from_dir.empty() ? fs::path(".") : from_dir;
  return fs::relative(fs::absolute(target), fs::absolute(base)).generic_string();
}

fs::path default_out_dir(const fs::path& config) {
  return (config.has_parent_path() ? config.parent_path() : fs::path(".")) / "out";
}

}  // namespace

std::string timestamp_utc() {
  std::time_t t = std::time(nullptr);
  if (const char* sde = std::getenv("SOURCE_DATE_EPOCH"); sde != nullptr && *sde != '\0') {
    t = static_cast<std::time_t>(std::strtoll(sde, nullptr, 10));
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json RunManifest::to_json() const {
  json arts = json::array();
  for (const auto& a : artifacts) {
    std::error_code ec;
    const auto size = fs::file_size(a, ec);
    arts.push_back({{"path", a.generic_string()}, {"bytes", ec ? json(nullptr) : json(size)}});
  }
  return {{"tool", "ebmh"},
          {"version", kVersion},
          {"command", command},
          {"config", config_path},
          {"seed", seed ? json(*seed) : json(nullptr)},
          {"artifacts", std::move(arts)},
          {"timestamp", timestamp_utc()}};
}

void RunManifest::write(const fs::path& path) const { write_file_atomic(path, dump_json(to_json())); }

void cmd_train_lm(const TrainLmArgs& args, std::ostream& out) {
  const auto lines = non_blank_lines(args.corpus);
  std::shared_ptr<const Vocab> vocab;
  std::optional<fs::path> vocab_path = args.vocab;
  if (args.vocab) {
    vocab = std::make_shared<const Vocab>(Vocab::load(*args.vocab));
  } else {
    vocab = std::make_shared<const Vocab>(build_vocab(lines, args.min_count, args.lowercase));
    vocab_path = args.vocab_out.value_or(args.out.parent_path() / (args.out.stem().string() + ".vocab.json"));
    vocab->save(*vocab_path);
  }
  std::vector<TokenSeq> corpus;
  corpus.reserve(lines.size());
  for (const auto& l : lines) corpus.push_back(tokenize(l, *vocab));
  const auto model = NgramModel::train(corpus, vocab, args.order, args.k, args.max_len);
  model.save(args.out, relative_ref(*vocab_path, args.out.parent_path()));
  out << "wrote " << args.out.string() << " (order " << args.order << ", " << vocab->size()
      << " tokens, " << corpus.size() << " sentences)\n";
}

void cmd_train_clf(const TrainClfArgs& args, std::ostream& out) {
  const std::string la = args.label_a.value_or(args.class_a.stem().string());
  const std::string lb = args.label_b.value_or(args.class_b.stem().string());
  if (la == lb) throw UsageError("class labels must differ (both '" + la + "')");
  std::map<std::string, std::vector<std::string>> corpus;
  for (const auto& [label, path] : {std::pair{la, args.class_a}, std::pair{lb, args.class_b}}) {
    auto lines = non_blank_lines(path);
    if (args.lowercase) {
      for (auto& l : lines) l = ascii_lower(l);
    }
    corpus[label] = std::move(lines);
  }
  const auto clf = train_classifier(corpus, args.smoothing, !args.unigrams_only,
                                    args.empirical_prior ? ClassPrior::Empirical : ClassPrior::Uniform);
  clf.save(args.out);
  out << "wrote " << args.out.string() << " (labels " << la << ", " << lb << ")\n";
}

void cmd_sample(const SampleArgs& args, std::ostream& out) {
  const RunConfig rc = load_run_config(args.config, args.overrides);
  const fs::path dir = args.out_dir.value_or(rc.out_dir.empty() ? default_out_dir(args.config) : rc.out_dir);

  MemoryTraceSink sink;
  const BatchResult batch = run_batch(rc.mh, *rc.proposal.proposal, rc.energy, *rc.vocab, &sink);

  fs::create_directories(dir);
  RunManifest manifest;
  manifest.command = "sample";
  manifest.config_path = args.config.generic_string();
  manifest.seed = rc.mh.seed;

  const auto trace_path = dir / "trace.jsonl";
  write_file_atomic(trace_path, sink.to_jsonl());
  manifest.artifacts.push_back(trace_path);

  json summary = batch.summary();
  summary["energy_evals"] = batch.energy_evals;
  summary["mode"] = std::string(to_string(rc.mh.mode));
  summary["proposal"] = std::string(to_string(rc.proposal.kind));
  const auto summary_path = dir / "summary.json";
  write_file_atomic(summary_path, dump_json(summary));
  manifest.artifacts.push_back(summary_path);
  manifest.write(dir / "manifest.json");

  if (!batch.best) {
    std::string why = "all chains failed";
    if (!batch.chains.empty() && batch.chains.front().error) why += ": " + *batch.chains.front().error;
    throw std::runtime_error(why);
  }
  out << batch.best_state().seq.text << '\n';
}

void cmd_intrinsic(const IntrinsicArgs& args, std::ostream& out) {
  json j = read_json(args.config);
  if (!j.is_object()) throw ConfigError("<root>", "expected an object");
  LoadContext ctx;
  ctx.base_dir = args.config.parent_path();
  const auto target_path = ctx.resolve(get_string(j, "target", ""));
  std::shared_ptr<const NgramModel> target;
  try {
    target = ctx.models->ngram(target_path);
  } catch (const std::exception& e) {
    throw ConfigError("target", e.what());
  }
  ctx.vocab = target->vocab_ptr();
  const std::uint64_t seed = args.seed.value_or(j.value("seed", std::uint64_t{0}));
  const auto exact_n = get_int(j, "exact_n", "", 1000);
  const std::string init_text = get_string(j, "init_text", "", std::string());

  const json& samplers_j = require(j, "samplers", "");
  if (!samplers_j.is_array()) throw ConfigError("samplers", "expected an array");
  std::vector<SamplerSpec> samplers;
  for (std::size_t i = 0; i < samplers_j.size(); ++i) {
    const std::string f = "samplers[" + std::to_string(i) + "]";
    json s = samplers_j[i];
    if (!s.is_object()) throw ConfigError(f, "expected an object");
    SamplerSpec sp;
    sp.name = get_string(s, "name", f);
    const std::string kind = get_string(s, "kind", f, std::string("mh"));
    const std::uint64_t sampler_seed = derive_seed(seed, i + 1);
    if (kind == "ancestral") {
      sp.kind = SamplerSpec::Kind::Ancestral;
      sp.samples = get_int(s, "samples", f);
      sp.cfg.seed = sampler_seed;
    } else if (kind == "mh") {
      auto setup = build_proposal(require(s, "proposal", f), ctx, target, f + ".proposal");
      sp.proposal = setup.proposal;
      if (s.contains("chains")) s["batch_size"] = s.at("chains");
      if (!s.contains("init_text")) s["init_text"] = init_text;
      if (!s.contains("seed")) s["seed"] = sampler_seed;
      try {
        sp.cfg = parse_mh_config(s, setup.kind);
      } catch (const ConfigError& e) {
        throw ConfigError(f + "." + e.field(), e.what());
      }
    } else {
      throw ConfigError(f + ".kind", "unknown sampler kind '" + kind + "'");
    }
    samplers.push_back(std::move(sp));
  }

  const IntrinsicReport report = intrinsic_eval(target, samplers, exact_n, seed);
  const fs::path dir = args.out_dir.value_or(
      j.contains("out_dir") ? ctx.resolve(get_string(j, "out_dir", "")) : default_out_dir(args.config));
  fs::create_directories(dir);
  RunManifest manifest;
  manifest.command = "intrinsic";
  manifest.config_path = args.config.generic_string();
  manifest.seed = seed;
  json rj = report.to_json();
  rj["seed"] = seed;
  const auto report_path = dir / "report.json";
  write_file_atomic(report_path, dump_json(rj));
  manifest.artifacts.push_back(report_path);
  const auto hist_path = dir / "histogram.csv";
  write_file_atomic(hist_path, report.histogram_csv());
  manifest.artifacts.push_back(hist_path);
  manifest.write(dir / "manifest.json");

  out << "exact: mean " << report.exact.mean << " (n=" << report.exact.energies.size() << ")\n";
  for (const auto& s : report.samplers) {
    out << s.name << ": mean " << s.mean << " gap " << std::abs(s.mean - report.exact.mean)
        << " forward_passes " << s.forward_passes << '\n';
  }
}

void cmd_eval(const EvalArgs& args, std::ostream& out) {
  const json j = read_json(args.judges);
  if (!j.is_object()) throw ConfigError("<root>", "expected an object");
  LoadContext ctx;
  ctx.base_dir = args.judges.parent_path();

  Judges judges;
  try {
    judges.clf = ctx.models->classifier(ctx.resolve(get_string(j, "classifier", "")));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("classifier", e.what());
  }
  judges.target_label = get_string(j, "target_label", "");
  try {
    judges.clf->index_of(judges.target_label);
  } catch (const std::exception& e) {
    throw ConfigError("target_label", e.what());
  }

  const json& fj = require(j, "fluency", "");
  std::shared_ptr<const NgramModel> flm;
  try {
    flm = ctx.models->ngram(ctx.resolve(get_string(fj, "model", "fluency")));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("fluency.model", e.what());
  }
  const Vocab& vocab = flm->vocab();
  double tau = 0.0;
  if (fj.contains("threshold")) {
    tau = get_number(fj, "threshold", "fluency");
  } else {
    const auto lines = non_blank_lines(ctx.resolve(get_string(fj, "calibration_corpus", "fluency")));
    std::vector<TokenSeq> seqs;
    for (const auto& l : lines) seqs.push_back(tokenize(l, vocab));
    tau = calibrate_fluency_threshold(*flm, seqs, get_number(fj, "quantile", "fluency", 0.9));
  }
  judges.fluency = std::make_shared<const FluencyJudge>(flm, tau);
  judges.sim = std::make_shared<const SimilarityScorer>(SimilarityScorer::builtin());

  auto score_file = [&](const fs::path& path) {
    const auto rows = read_eval_tsv(path);
    if (rows.empty()) throw std::runtime_error(path.string() + ": empty TSV");
    std::vector<EvalRecord> recs;
    recs.reserve(rows.size());
    for (const auto& r : rows) {
      recs.push_back(judge(tokenize(r.source, vocab), tokenize(r.output, vocab),
                           tokenize(r.target, vocab), judges));
    }
    return recs;
  };

  const auto system = score_file(args.tsv);
  json result;
  result["system"] = summarize(system).to_json();
  result["fluency_threshold"] = tau;
  if (args.baseline) {
    const auto baseline = score_file(*args.baseline);
    result["baseline"] = summarize(baseline).to_json();
    const json bj = j.contains("bootstrap") ? j.at("bootstrap") : json::object();
    BootstrapOptions bo;
    bo.resamples = get_int(bj, "resamples", "bootstrap", bo.resamples);
    bo.alpha = get_number(bj, "alpha", "bootstrap", bo.alpha);
    bo.seed = bj.value("seed", std::uint64_t{0});
    result["bootstrap"] = paired_bootstrap(system, baseline, bo).to_json();
  }
  const std::string text = dump_json(result);
  if (args.out) write_file_atomic(*args.out, text);
  out << text;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Block Metropolis-Hastings sampling for energy-based sequence models"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  TrainLmArgs lm;
  std::string lm_corpus, lm_out, lm_vocab, lm_vocab_out;
  auto* train_lm = app.add_subcommand("train-lm", "Train an add-k n-gram model");
  train_lm->add_option("corpus", lm_corpus, "One sentence per line")->required();
  train_lm->add_option("-o,--out", lm_out, "Model JSON")->required();
  train_lm->add_option("-n,--order", lm.order)->capture_default_str();
  train_lm->add_option("-k,--k", lm.k, "Smoothing constant")->capture_default_str();
  train_lm->add_option("--max-len", lm.max_len)->capture_default_str();
  train_lm->add_option("--min-count", lm.min_count)->capture_default_str();
  train_lm->add_flag("--lowercase", lm.lowercase);
  train_lm->add_option("--vocab", lm_vocab, "Existing vocabulary to reuse");
  train_lm->add_option("--vocab-out", lm_vocab_out, "Vocabulary output path");

  TrainClfArgs clf;
  std::string clf_a, clf_b, clf_out, clf_la, clf_lb;
  auto* train_clf = app.add_subcommand("train-clf", "Train a two-class naive Bayes style classifier");
  train_clf->add_option("class_a", clf_a)->required();
  train_clf->add_option("class_b", clf_b)->required();
  train_clf->add_option("-o,--out", clf_out)->required();
  train_clf->add_option("--label-a", clf_la, "Defaults to the file stem");
  train_clf->add_option("--label-b", clf_lb, "Defaults to the file stem");
  train_clf->add_option("--smoothing", clf.smoothing)->capture_default_str();
  train_clf->add_flag("--unigrams-only", clf.unigrams_only);
  train_clf->add_flag("--empirical-prior", clf.empirical_prior);
  train_clf->add_flag("--lowercase", clf.lowercase);

  SampleArgs sample;
  std::string sample_cfg, sample_out, s_mode, s_init;
  std::int64_t s_steps = 0;
  int s_batch = 0, s_threads = -1;
  std::uint64_t s_seed = 0;
  auto* sample_cmd = app.add_subcommand("sample", "Run a batch of MH chains");
  sample_cmd->add_option("config", sample_cfg)->required();
  sample_cmd->add_option("--out", sample_out, "Output directory");
  auto* o_steps = sample_cmd->add_option("--steps", s_steps);
  auto* o_batch = sample_cmd->add_option("--batch-size", s_batch);
  auto* o_seed = sample_cmd->add_option("--seed", s_seed);
  auto* o_mode = sample_cmd->add_option("--mode", s_mode);
  auto* o_init = sample_cmd->add_option("--init-text", s_init);
  auto* o_threads = sample_cmd->add_option("--threads", s_threads);

  IntrinsicArgs intr;
  std::string intr_cfg, intr_out;
  std::uint64_t intr_seed = 0;
  auto* intr_cmd = app.add_subcommand("intrinsic", "Compare sampler energies against exact samples");
  intr_cmd->add_option("config", intr_cfg)->required();
  intr_cmd->add_option("--out", intr_out, "Output directory");
  auto* o_iseed = intr_cmd->add_option("--seed", intr_seed);

  EvalArgs ev;
  std::string ev_tsv, ev_judges, ev_base, ev_out;
  auto* eval_cmd = app.add_subcommand("eval", "J-score and paired bootstrap over a TSV of outputs");
  eval_cmd->add_option("tsv", ev_tsv)->required();
  eval_cmd->add_option("-j,--judges", ev_judges)->required();
  eval_cmd->add_option("--baseline", ev_base, "Baseline TSV for significance testing");
  eval_cmd->add_option("-o,--out", ev_out);

  std::string conf_endpoint = adapter::endpoint_from_env();
  int conf_timeout = 10000;
  auto* conf_cmd = app.add_subcommand("conformance", "Check an adapter endpoint against the protocol");
  conf_cmd->add_option("--endpoint", conf_endpoint)->capture_default_str();
  conf_cmd->add_option("--timeout-ms", conf_timeout)->capture_default_str();

  int mock_port = 8750;
  std::vector<std::string> mock_candidates;
  bool mock_drop_identity = false;
  auto* mock_cmd = app.add_subcommand("mock-server", "Serve the scripted mock adapter");
  mock_cmd->add_option("--port", mock_port)->capture_default_str();
  mock_cmd->add_option("--candidate", mock_candidates, "Proposal texts to cycle through");
  mock_cmd->add_flag("--drop-logq-identity", mock_drop_identity);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (train_lm->parsed()) {
      lm.corpus = lm_corpus;
      lm.out = lm_out;
      if (!lm_vocab.empty()) lm.vocab = lm_vocab;
      if (!lm_vocab_out.empty()) lm.vocab_out = lm_vocab_out;
      cmd_train_lm(lm, out);
    } else if (train_clf->parsed()) {
      clf.class_a = clf_a;
      clf.class_b = clf_b;
      clf.out = clf_out;
      if (!clf_la.empty()) clf.label_a = clf_la;
      if (!clf_lb.empty()) clf.label_b = clf_lb;
      cmd_train_clf(clf, out);
    } else if (sample_cmd->parsed()) {
      sample.config = sample_cfg;
      if (!sample_out.empty()) sample.out_dir = sample_out;
      if (o_steps->count()) sample.overrides["steps"] = s_steps;
      if (o_batch->count()) sample.overrides["batch_size"] = s_batch;
      if (o_seed->count()) sample.overrides["seed"] = s_seed;
      if (o_mode->count()) sample.overrides["mode"] = s_mode;
      if (o_init->count()) sample.overrides["init_text"] = s_init;
      if (o_threads->count()) sample.overrides["threads"] = s_threads;
      cmd_sample(sample, out);
    } else if (intr_cmd->parsed()) {
      intr.config = intr_cfg;
      if (!intr_out.empty()) intr.out_dir = intr_out;
      if (o_iseed->count()) intr.seed = intr_seed;
      cmd_intrinsic(intr, out);
    } else if (eval_cmd->parsed()) {
      ev.tsv = ev_tsv;
      ev.judges = ev_judges;
      if (!ev_base.empty()) ev.baseline = ev_base;
      if (!ev_out.empty()) ev.out = ev_out;
      cmd_eval(ev, out);
    } else if (conf_cmd->parsed()) {
      adapter::ClientOptions opts;
      opts.endpoint = conf_endpoint;
      opts.timeout = std::chrono::milliseconds(conf_timeout);
      const auto report = adapter::conformance_suite(opts);
      out << dump_json(report.to_json());
      return report.passed() ? kExitOk : kExitRuntime;
    } else if (mock_cmd->parsed()) {
      adapter::MockBehavior behavior;
      behavior.candidates = mock_candidates;
      behavior.drop_logq_identity = mock_drop_identity;
      adapter::MockAdapterServer server(behavior, mock_port);
      out << "listening on " << server.endpoint() << std::endl;
      server.wait();
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace ebmh::cli
