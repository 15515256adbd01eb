#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace ebmh {

using TokenId = std::int32_t;

/// Token alphabet with three reserved markers at fixed ids.
///
/// Regular tokens occupy ids [kFirstRegular, end_id()). The reserved ids are
/// constants, so they are stable across save/load by construction.
class Vocab {
 public:
  static constexpr TokenId kBos = 0;
  static constexpr TokenId kEos = 1;
  static constexpr TokenId kUnk = 2;
  static constexpr TokenId kFirstRegular = 3;
  static constexpr std::string_view kBosText = "<s>";
  static constexpr std::string_view kEosText = "</s>";
  static constexpr std::string_view kUnkText = "<unk>";

  Vocab() = default;
  /// Throws std::invalid_argument on duplicate or reserved token strings.
  Vocab(std::vector<std::string> tokens, bool lowercase, int min_count = 1);

  /// Id of `token`, or kUnk when absent.
  TokenId id(std::string_view token) const;
  std::optional<TokenId> find(std::string_view token) const;
  /// Surface string for any id, reserved ones included.
  const std::string& token(TokenId id) const;

  /// Number of regular (non-reserved) tokens.
  std::size_t size() const { return tokens_.size(); }
  TokenId end_id() const { return kFirstRegular + static_cast<TokenId>(tokens_.size()); }
  bool is_regular(TokenId id) const { return id >= kFirstRegular && id < end_id(); }
  std::span<const std::string> tokens() const { return tokens_; }

  bool lowercase() const { return lowercase_; }
  int min_count() const { return min_count_; }

  nlohmann::json to_json() const;
  static Vocab from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  bool operator==(const Vocab& other) const {
    return tokens_ == other.tokens_ && lowercase_ == other.lowercase_ &&
           min_count_ == other.min_count_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  bool lowercase_ = false;
  int min_count_ = 1;
};

/// An ordered token sequence: the state of a Markov chain.
///
/// `text` is the whitespace-normalized surface form. For in-vocabulary input
/// it equals detokenize(ids); for input with unknown tokens it keeps the
/// original surface so external services see what they produced.
/// Equality compares token ids only.
struct TokenSeq {
  std::vector<TokenId> ids;
  std::string text;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
  bool operator==(const TokenSeq& other) const { return ids == other.ids; }
};

/// Split on Unicode whitespace (ASCII separators plus the Zs/Zl/Zp code points).
std::vector<std::string> split_whitespace(std::string_view text);

/// Lowercase ASCII letters; other bytes pass through.
std::string ascii_lower(std::string_view text);

/// Collapse whitespace runs to single spaces, trim, optionally lowercase.
std::string normalize(std::string_view text, bool lowercase);

TokenSeq tokenize(std::string_view text, const Vocab& vocab);
std::string detokenize(std::span<const TokenId> ids, const Vocab& vocab);
/// Sequence whose text is the detokenized ids.
TokenSeq make_seq(std::vector<TokenId> ids, const Vocab& vocab);

/// Vocabulary of tokens occurring at least `min_count` times, ordered by
/// count descending then token ascending. Throws std::invalid_argument on an
/// empty corpus.
Vocab build_vocab(std::span<const std::string> corpus, int min_count, bool lowercase = false);

/// Read a one-sequence-per-line corpus. Throws std::runtime_error naming the
/// path when it cannot be opened.
std::vector<std::string> read_lines(const std::filesystem::path& path);

}  // namespace ebmh
