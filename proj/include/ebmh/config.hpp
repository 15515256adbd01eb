#pragma once

// JSON run configuration: energy specs, proposals, MH settings.
//
// Relative paths inside a config file resolve against that file's directory.

#include <filesystem>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

#include "ebmh/adapter.hpp"
#include "ebmh/classifier.hpp"
#include "ebmh/energy.hpp"
#include "ebmh/mh.hpp"
#include "ebmh/ngram.hpp"
#include "ebmh/proposal.hpp"
#include "ebmh/vocab.hpp"

namespace ebmh {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::runtime_error("config field '" + field + "': " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// Loads each model file once per context.
class ModelCache {
 public:
  std::shared_ptr<const NgramModel> ngram(const std::filesystem::path& path);
  std::shared_ptr<const StyleClassifier> classifier(const std::filesystem::path& path);

 private:
  std::map<std::filesystem::path, std::shared_ptr<const NgramModel>> ngrams_;
  std::map<std::filesystem::path, std::shared_ptr<const StyleClassifier>> classifiers_;
};

struct LoadContext {
  std::filesystem::path base_dir;
  std::shared_ptr<const Vocab> vocab;
  std::shared_ptr<ModelCache> models = std::make_shared<ModelCache>();
  /// The "adapter" section; the client is created on first use.
  nlohmann::json adapter_section;
  mutable std::shared_ptr<const adapter::AdapterClient> client;

  std::filesystem::path resolve(const std::string& p) const;
  std::shared_ptr<const adapter::AdapterClient> adapter_client() const;
};

/// {"endpoint", "timeout_ms", "retries", "max_inflight"}, all optional.
/// EBMH_ADAPTER_URL overrides the endpoint.
adapter::ClientOptions parse_adapter_options(const nlohmann::json& j);

/// {"seed_text": str|null, "terms": [{"name", "weight", "kind", "params"}]}
/// with kind one of ngram-nll, disc, sim, adapter, constant, table.
EnergySpec load_energy_spec(const nlohmann::json& j, const LoadContext& ctx,
                            const std::string& field = "energy");

struct ProposalSetup {
  ProposalKind kind = ProposalKind::Identity;
  std::shared_ptr<const Proposal> proposal;
  std::shared_ptr<const NgramModel> model;
};

/// {"kind": "token-mask"|"span-block"|"adapter-block"|"identity", "model":
/// path, "max_span", "max_new", "params"}. A missing model falls back to
/// `default_model`.
ProposalSetup build_proposal(const nlohmann::json& j, const LoadContext& ctx,
                             std::shared_ptr<const NgramModel> default_model = nullptr,
                             const std::string& field = "proposal");

/// Chain settings. The mode defaults to identity-variant for adapter-block
/// proposals and strict otherwise.
MHConfig parse_mh_config(const nlohmann::json& j, ProposalKind kind);

struct RunConfig {
  std::filesystem::path path;
  MHConfig mh;
  std::shared_ptr<const Vocab> vocab;
  EnergySpec energy;
  ProposalSetup proposal;
  std::filesystem::path out_dir;
  /// The config after overrides were applied.
  nlohmann::json effective;
};

/// `overrides` is merge-patched over the file before parsing. The vocabulary
/// comes from "vocab", else the proposal model, else the first ngram-nll
/// term, else it is built from init_text and seed_text.
RunConfig load_run_config(const std::filesystem::path& path,
                          const nlohmann::json& overrides = nlohmann::json::object());

// Typed field access that throws ConfigError naming the field.
const nlohmann::json& require(const nlohmann::json& j, const std::string& key, const std::string& prefix);
std::string get_string(const nlohmann::json& j, const std::string& key, const std::string& prefix,
                       const std::optional<std::string>& fallback = std::nullopt);
double get_number(const nlohmann::json& j, const std::string& key, const std::string& prefix,
                  std::optional<double> fallback = std::nullopt);
std::int64_t get_int(const nlohmann::json& j, const std::string& key, const std::string& prefix,
                     std::optional<std::int64_t> fallback = std::nullopt);
bool get_bool(const nlohmann::json& j, const std::string& key, const std::string& prefix,
              std::optional<bool> fallback = std::nullopt);

}  // namespace ebmh
