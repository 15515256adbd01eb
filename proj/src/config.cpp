#include "ebmh/config.hpp"

#include <cmath>

#include "ebmh/io.hpp"
#include "ebmh/similarity.hpp"

namespace ebmh {

using nlohmann::json;

namespace {

std::string join_field(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

std::uint64_t get_u64(const json& j, const std::string& key, const std::string& prefix,
                      std::uint64_t fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  const json& v = j.at(key);
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return v.get<std::uint64_t>();
  throw ConfigError(join_field(prefix, key), "expected a non-negative integer");
}

template <typename Fn>
auto wrap(const std::string& field, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(field, e.what());
  }
}

}  // namespace

const json& require(const json& j, const std::string& key, const std::string& prefix) {
  if (!j.is_object()) throw ConfigError(prefix.empty() ? "<root>" : prefix, "expected an object");
  if (!j.contains(key) || j.at(key).is_null()) throw ConfigError(join_field(prefix, key), "missing");
  return j.at(key);
}

std::string get_string(const json& j, const std::string& key, const std::string& prefix,
                       const std::optional<std::string>& fallback) {
  if (fallback && (!j.contains(key) || j.at(key).is_null())) return *fallback;
  const json& v = require(j, key, prefix);
  if (!v.is_string()) throw ConfigError(join_field(prefix, key), "expected a string");
  return v.get<std::string>();
}

double get_number(const json& j, const std::string& key, const std::string& prefix,
                  std::optional<double> fallback) {
  if (fallback && (!j.contains(key) || j.at(key).is_null())) return *fallback;
  const json& v = require(j, key, prefix);
  if (!v.is_number()) throw ConfigError(join_field(prefix, key), "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError(join_field(prefix, key), "must be finite");
  return x;
}

std::int64_t get_int(const json& j, const std::string& key, const std::string& prefix,
                     std::optional<std::int64_t> fallback) {
  if (fallback && (!j.contains(key) || j.at(key).is_null())) return *fallback;
  const json& v = require(j, key, prefix);
  if (!v.is_number_integer()) throw ConfigError(join_field(prefix, key), "expected an integer");
  return v.get<std::int64_t>();
}

bool get_bool(const json& j, const std::string& key, const std::string& prefix,
              std::optional<bool> fallback) {
  if (fallback && (!j.contains(key) || j.at(key).is_null())) return *fallback;
  const json& v = require(j, key, prefix);
  if (!v.is_boolean()) throw ConfigError(join_field(prefix, key), "expected a boolean");
  return v.get<bool>();
}

std::shared_ptr<const NgramModel> ModelCache::ngram(const std::filesystem::path& path) {
  const auto key = std::filesystem::weakly_canonical(path);
  auto it = ngrams_.find(key);
  if (it != ngrams_.end()) return it->second;
  auto model = std::make_shared<const NgramModel>(NgramModel::load(path));
  ngrams_.emplace(key, model);
  return model;
}

std::shared_ptr<const StyleClassifier> ModelCache::classifier(const std::filesystem::path& path) {
  const auto key = std::filesystem::weakly_canonical(path);
  auto it = classifiers_.find(key);
  if (it != classifiers_.end()) return it->second;
  auto clf = std::make_shared<const StyleClassifier>(StyleClassifier::load(path));
  classifiers_.emplace(key, clf);
  return clf;
}

std::filesystem::path LoadContext::resolve(const std::string& p) const {
  return resolve_path(base_dir, p);
}

std::shared_ptr<const adapter::AdapterClient> LoadContext::adapter_client() const {
  if (!client) {
    client = wrap("adapter", [&] {
      return std::make_shared<const adapter::AdapterClient>(parse_adapter_options(adapter_section));
    });
  }
  return client;
}

adapter::ClientOptions parse_adapter_options(const json& j) {
  adapter::ClientOptions opts;
  const json section = j.is_null() ? json::object() : j;
  if (!section.is_object()) throw ConfigError("adapter", "expected an object");
  opts.endpoint = adapter::endpoint_from_env(
      get_string(section, "endpoint", "adapter", std::string(adapter::kDefaultEndpoint)));
  const auto timeout = get_int(section, "timeout_ms", "adapter", opts.timeout.count());
  if (timeout < 1) throw ConfigError("adapter.timeout_ms", "must be >= 1");
  opts.timeout = std::chrono::milliseconds(timeout);
  opts.retries = static_cast<int>(get_int(section, "retries", "adapter", opts.retries));
  if (opts.retries < 0) throw ConfigError("adapter.retries", "must be >= 0");
  opts.max_inflight = static_cast<int>(get_int(section, "max_inflight", "adapter", opts.max_inflight));
  if (opts.max_inflight < 1 || opts.max_inflight > 1024) {
    throw ConfigError("adapter.max_inflight", "must be in [1, 1024]");
  }
  return opts;
}

EnergySpec load_energy_spec(const json& j, const LoadContext& ctx, const std::string& field) {
  if (!j.is_object()) throw ConfigError(field, "expected an object");
  if (!ctx.vocab) throw ConfigError(field, "no vocabulary available to tokenize seed_text");
  EnergySpec spec;
  if (j.contains("seed_text") && !j.at("seed_text").is_null()) {
    spec.seed_text = tokenize(get_string(j, "seed_text", field), *ctx.vocab);
  }
  const json& terms = require(j, "terms", field);
  if (!terms.is_array() || terms.empty()) throw ConfigError(field + ".terms", "expected a non-empty array");

  for (std::size_t i = 0; i < terms.size(); ++i) {
    const std::string tf = field + ".terms[" + std::to_string(i) + "]";
    const json& t = terms[i];
    if (!t.is_object()) throw ConfigError(tf, "expected an object");
    const std::string kind = get_string(t, "kind", tf);
    const std::string name = get_string(t, "name", tf, kind);
    const double weight = get_number(t, "weight", tf, 1.0);
    const json params = t.contains("params") ? t.at("params") : json::object();
    const std::string pf = tf + ".params";
    if (!params.is_object()) throw ConfigError(pf, "expected an object");

    if (kind == "ngram-nll") {
      const auto path = ctx.resolve(get_string(params, "model", pf));
      auto model = wrap(pf + ".model", [&] { return ctx.models->ngram(path); });
      if (!(model->vocab() == *ctx.vocab)) {
        throw ConfigError(pf + ".model", "vocabulary differs from the run vocabulary");
      }
      spec.terms.push_back(ngram_nll_term(name, weight, model));
    } else if (kind == "disc") {
      const auto path = ctx.resolve(get_string(params, "classifier", pf));
      auto clf = wrap(pf + ".classifier", [&] { return ctx.models->classifier(path); });
      const std::string label = get_string(params, "label", pf);
      spec.terms.push_back(wrap(pf + ".label", [&] { return disc_term(name, weight, clf, label); }));
    } else if (kind == "sim") {
      if (!spec.seed_text) throw ConfigError(field + ".seed_text", "required by similarity term");
      const std::string scorer = get_string(params, "scorer", pf, std::string("builtin"));
      if (scorer != "builtin") {
        throw ConfigError(pf + ".scorer", "only 'builtin' is supported; use an adapter term for external similarity");
      }
      const auto mapping =
          wrap(pf + ".mapping", [&] { return parse_sim_mapping(get_string(params, "mapping", pf, std::string("linear"))); });
      auto sc = std::make_shared<const SimilarityScorer>(SimilarityScorer::builtin(mapping));
      spec.terms.push_back(wrap(tf, [&] { return sim_term(name, weight, sc, *spec.seed_text); }));
    } else if (kind == "adapter") {
      const std::string term = get_string(params, "term", pf, name);
      std::optional<std::string> ref;
      if (get_bool(params, "use_seed", pf, false)) {
        if (!spec.seed_text) throw ConfigError(field + ".seed_text", "required by use_seed");
        ref = spec.seed_text->text;
      }
      auto client = ctx.adapter_client();
      spec.terms.push_back({name, weight, [client, term, ref](const TokenSeq& seq) {
                              return ref ? client->energy(seq.text, term, std::string_view(*ref))
                                         : client->energy(seq.text, term);
                            }});
    } else if (kind == "constant") {
      spec.terms.push_back(constant_term(name, weight, get_number(params, "value", pf)));
    } else if (kind == "table") {
      const json& table = require(params, "table", pf);
      if (!table.is_object()) throw ConfigError(pf + ".table", "expected an object");
      std::map<std::string, double> entries;
      for (const auto& [text, v] : table.items()) {
        if (!v.is_number()) throw ConfigError(pf + ".table", "values must be numbers");
        entries.emplace(normalize(text, ctx.vocab->lowercase()), v.get<double>());
      }
      spec.terms.push_back(table_term(name, weight, std::move(entries), get_number(params, "default", pf, 0.0)));
    } else {
      throw ConfigError(tf + ".kind", "unknown kind '" + kind + "'");
    }
  }
  wrap(field, [&] {
    validate(spec);
    return 0;
  });
  return spec;
}

ProposalSetup build_proposal(const json& j, const LoadContext& ctx,
                             std::shared_ptr<const NgramModel> default_model, const std::string& field) {
  if (!j.is_object()) throw ConfigError(field, "expected an object");
  ProposalSetup setup;
  setup.kind = wrap(field + ".kind", [&] { return parse_proposal_kind(get_string(j, "kind", field)); });

  auto need_model = [&]() -> std::shared_ptr<const NgramModel> {
    if (j.contains("model") && !j.at("model").is_null()) {
      const auto path = ctx.resolve(get_string(j, "model", field));
      return wrap(field + ".model", [&] { return ctx.models->ngram(path); });
    }
    if (default_model) return default_model;
    throw ConfigError(field + ".model", "missing");
  };

  switch (setup.kind) {
    case ProposalKind::TokenMask: {
      setup.model = need_model();
      auto cond = std::make_shared<const NgramMaskedConditional>(setup.model);
      setup.proposal = std::make_shared<const TokenMaskProposal>(cond, setup.model->vocab_ptr());
      break;
    }
    case ProposalKind::SpanBlock: {
      setup.model = need_model();
      SpanCfg cfg;
      cfg.max_span = static_cast<int>(get_int(j, "max_span", field, cfg.max_span));
      cfg.max_new = static_cast<int>(get_int(j, "max_new", field, cfg.max_new));
      if (cfg.max_span < 0) throw ConfigError(field + ".max_span", "must be >= 0");
      if (cfg.max_new < 0) throw ConfigError(field + ".max_new", "must be >= 0");
      setup.proposal = std::make_shared<const SpanBlockProposal>(setup.model, cfg);
      break;
    }
    case ProposalKind::AdapterBlock: {
      const json params = j.contains("params") ? j.at("params") : json::object();
      if (!params.is_object()) throw ConfigError(field + ".params", "expected an object");
      if (!ctx.vocab) throw ConfigError(field, "no vocabulary available to retokenize candidates");
      setup.proposal = std::make_shared<const AdapterBlockProposal>(ctx.adapter_client(), ctx.vocab, params);
      break;
    }
    case ProposalKind::Identity:
      setup.proposal = std::make_shared<const IdentityProposal>();
      break;
  }
  if (setup.model && ctx.vocab && !(setup.model->vocab() == *ctx.vocab)) {
    throw ConfigError(field + ".model", "vocabulary differs from the run vocabulary");
  }
  return setup;
}

MHConfig parse_mh_config(const json& j, ProposalKind kind) {
  MHConfig cfg;
  cfg.steps = get_int(j, "steps", "", cfg.steps);
  if (cfg.steps < 1) throw ConfigError("steps", "must be >= 1");
  cfg.batch_size = static_cast<int>(get_int(j, "batch_size", "", cfg.batch_size));
  if (cfg.batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
  const std::string default_mode = kind == ProposalKind::AdapterBlock ? "identity-variant" : "strict";
  cfg.mode = wrap("mode", [&] { return parse_accept_mode(get_string(j, "mode", "", default_mode)); });
  cfg.seed = get_u64(j, "seed", "", 0);
  cfg.init_text = get_string(j, "init_text", "", std::string());
  cfg.burn_in = get_int(j, "burn_in", "", 0);
  if (cfg.burn_in < 0) throw ConfigError("burn_in", "must be >= 0");
  cfg.thin = get_int(j, "thin", "", 1);
  if (cfg.thin < 1) throw ConfigError("thin", "must be >= 1");
  cfg.on_error = wrap("on_error", [&] { return parse_error_policy(get_string(j, "on_error", "", std::string("reject"))); });
  cfg.allow_empty = get_bool(j, "allow_empty", "", false);
  cfg.threads = static_cast<int>(get_int(j, "threads", "", 0));
  if (cfg.threads < 0) throw ConfigError("threads", "must be >= 0");
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path, const json& overrides) {
  RunConfig rc;
  rc.path = path;
  json j = wrap("<file>", [&] { return read_json(path); });
  if (!j.is_object()) throw ConfigError("<root>", "expected an object");
  j.merge_patch(overrides);
  rc.effective = j;

  LoadContext ctx;
  ctx.base_dir = path.parent_path();
  ctx.adapter_section = j.contains("adapter") ? j.at("adapter") : json::object();

  const json& pj = require(j, "proposal", "");
  if (!pj.is_object()) throw ConfigError("proposal", "expected an object");
  json ej = require(j, "energy", "");
  LoadContext energy_ctx = ctx;
  if (ej.is_string()) {
    const auto epath = ctx.resolve(ej.get<std::string>());
    ej = wrap("energy", [&] { return read_json(epath); });
    energy_ctx.base_dir = epath.parent_path();
  }
  if (!ej.is_object()) throw ConfigError("energy", "expected an object or a path");

  // Vocabulary resolution.
  if (j.contains("vocab") && !j.at("vocab").is_null()) {
    const auto vpath = ctx.resolve(get_string(j, "vocab", ""));
    ctx.vocab = wrap("vocab", [&] { return std::make_shared<const Vocab>(Vocab::load(vpath)); });
  } else if (pj.contains("model") && pj.at("model").is_string()) {
    const auto mpath = ctx.resolve(pj.at("model").get<std::string>());
    ctx.vocab = wrap("proposal.model", [&] { return ctx.models->ngram(mpath)->vocab_ptr(); });
  } else if (ej.contains("terms") && ej.at("terms").is_array()) {
    for (const auto& t : ej.at("terms")) {
      if (t.is_object() && t.value("kind", "") == "ngram-nll" && t.contains("params") &&
          t.at("params").is_object() && t.at("params").contains("model") &&
          t.at("params").at("model").is_string()) {
        const auto mpath = energy_ctx.resolve(t.at("params").at("model").get<std::string>());
        ctx.vocab = wrap("energy", [&] { return ctx.models->ngram(mpath)->vocab_ptr(); });
        break;
      }
    }
  }
  if (!ctx.vocab) {
    std::vector<std::string> corpus{get_string(j, "init_text", "", std::string())};
    if (ej.contains("seed_text") && ej.at("seed_text").is_string()) {
      corpus.push_back(ej.at("seed_text").get<std::string>());
    }
    ctx.vocab = std::make_shared<const Vocab>(build_vocab(corpus, 1));
  }
  energy_ctx.vocab = ctx.vocab;
  energy_ctx.models = ctx.models;
  rc.vocab = ctx.vocab;

  rc.proposal = build_proposal(pj, ctx);
  energy_ctx.client = ctx.client;
  rc.energy = load_energy_spec(ej, energy_ctx);
  rc.mh = parse_mh_config(j, rc.proposal.kind);
  if (j.contains("out_dir") && !j.at("out_dir").is_null()) {
    rc.out_dir = ctx.resolve(get_string(j, "out_dir", ""));
  }
  return rc;
}

}  // namespace ebmh
