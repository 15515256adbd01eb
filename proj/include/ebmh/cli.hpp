#pragma once

// Command implementations behind the `ebmh` executable.
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration or usage error.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace ebmh::cli {

inline constexpr const char* kVersion = "0.1.0";

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Files written by a command plus the manifest describing them. The
/// manifest is written last; its timestamp honours SOURCE_DATE_EPOCH.
struct RunManifest {
  std::string command;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::filesystem::path> artifacts;

  nlohmann::json to_json() const;
  void write(const std::filesystem::path& path) const;
};

std::string timestamp_utc();

struct TrainLmArgs {
  std::filesystem::path corpus;
  int order = 3;
  double k = 0.1;
  int max_len = 64;
  int min_count = 1;
  bool lowercase = false;
  /// Reuse an existing vocabulary instead of building one from the corpus.
  std::optional<std::filesystem::path> vocab;
  std::filesystem::path out;
  /// Where a freshly built vocabulary goes; defaults to <out stem>.vocab.json.
  std::optional<std::filesystem::path> vocab_out;
};
void cmd_train_lm(const TrainLmArgs& args, std::ostream& out);

struct TrainClfArgs {
  std::filesystem::path class_a;
  std::filesystem::path class_b;
  std::optional<std::string> label_a;
  std::optional<std::string> label_b;
  double smoothing = 1.0;
  bool unigrams_only = false;
  bool empirical_prior = false;
  bool lowercase = false;
  std::filesystem::path out;
};
void cmd_train_clf(const TrainClfArgs& args, std::ostream& out);

struct SampleArgs {
  std::filesystem::path config;
  nlohmann::json overrides = nlohmann::json::object();
  std::optional<std::filesystem::path> out_dir;
};
/// Prints the best text; writes trace.jsonl, summary.json, manifest.json.
void cmd_sample(const SampleArgs& args, std::ostream& out);

struct IntrinsicArgs {
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out_dir;
};
/// Writes report.json, histogram.csv, manifest.json; prints a summary.
void cmd_intrinsic(const IntrinsicArgs& args, std::ostream& out);

struct EvalArgs {
  std::filesystem::path tsv;
  std::filesystem::path judges;
  std::optional<std::filesystem::path> baseline;
  std::optional<std::filesystem::path> out;
};
/// Prints the metrics JSON and optionally writes it to `out`.
void cmd_eval(const EvalArgs& args, std::ostream& out);

/// Parses argv, dispatches, maps exceptions to exit codes.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ebmh::cli
