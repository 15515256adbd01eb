#include "ebmh/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <stdexcept>

#include "ebmh/io.hpp"

namespace ebmh {

namespace {

// Byte length of the whitespace code point starting at text[i], or 0.
std::size_t whitespace_len(std::string_view text, std::size_t i) {
  const auto b0 = static_cast<unsigned char>(text[i]);
  if (b0 == ' ' || (b0 >= 0x09 && b0 <= 0x0D) || (b0 >= 0x1C && b0 <= 0x1F)) return 1;
  const std::size_t left = text.size() - i;
  if (b0 == 0xC2 && left >= 2) {
    const auto b1 = static_cast<unsigned char>(text[i + 1]);
    if (b1 == 0x85 || b1 == 0xA0) return 2;  // NEL, NBSP
    return 0;
  }
  if (left < 3) return 0;
  const auto b1 = static_cast<unsigned char>(text[i + 1]);
  const auto b2 = static_cast<unsigned char>(text[i + 2]);
  if (b0 == 0xE1 && b1 == 0x9A && b2 == 0x80) return 3;  // U+1680
  if (b0 == 0xE2 && b1 == 0x80) {
    if (b2 >= 0x80 && b2 <= 0x8A) return 3;               // U+2000..U+200A
    if (b2 == 0xA8 || b2 == 0xA9 || b2 == 0xAF) return 3;  // U+2028, U+2029, U+202F
    return 0;
  }
  if (b0 == 0xE2 && b1 == 0x81 && b2 == 0x9F) return 3;  // U+205F
  if (b0 == 0xE3 && b1 == 0x80 && b2 == 0x80) return 3;  // U+3000
  return 0;
}

bool is_reserved(std::string_view tok) {
  return tok == Vocab::kBosText || tok == Vocab::kEosText || tok == Vocab::kUnkText;
}

}  // namespace

Vocab::Vocab(std::vector<std::string> tokens, bool lowercase, int min_count)
    : tokens_(std::move(tokens)), lowercase_(lowercase), min_count_(min_count) {
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const std::string& tok = tokens_[i];
    if (tok.empty()) throw std::invalid_argument("vocab: empty token string");
    if (is_reserved(tok)) throw std::invalid_argument("vocab: reserved token '" + tok + "'");
    if (!index_.emplace(tok, kFirstRegular + static_cast<TokenId>(i)).second) {
      throw std::invalid_argument("vocab: duplicate token '" + tok + "'");
    }
  }
}

TokenId Vocab::id(std::string_view token) const { return find(token).value_or(kUnk); }

std::optional<TokenId> Vocab::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocab::token(TokenId id) const {
  static const std::string bos(kBosText), eos(kEosText), unk(kUnkText);
  switch (id) {
    case kBos: return bos;
    case kEos: return eos;
    case kUnk: return unk;
    default: break;
  }
  if (!is_regular(id)) throw std::out_of_range("vocab: id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id - kFirstRegular)];
}

nlohmann::json Vocab::to_json() const {
  return {{"tokens", tokens_}, {"lowercase", lowercase_}, {"min_count", min_count_}};
}

Vocab Vocab::from_json(const nlohmann::json& j) {
  try {
    return Vocab(j.at("tokens").get<std::vector<std::string>>(), j.value("lowercase", false),
                 j.value("min_count", 1));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("vocab: malformed file: ") + e.what());
  }
}

void Vocab::save(const std::filesystem::path& path) const {
  write_file_atomic(path, dump_json(to_json()));
}

Vocab Vocab::load(const std::filesystem::path& path) { return from_json(read_json(path)); }

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  std::size_t start = 0;
  bool in_token = false;
  while (i < text.size()) {
    const std::size_t ws = whitespace_len(text, i);
    if (ws > 0) {
      if (in_token) out.emplace_back(text.substr(start, i - start));
      in_token = false;
      i += ws;
    } else {
      if (!in_token) start = i;
      in_token = true;
      ++i;
    }
  }
  if (in_token) out.emplace_back(text.substr(start));
  return out;
}

std::string ascii_lower(std::string_view text) {
  std::string out(text);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::string normalize(std::string_view text, bool lowercase) {
  std::string out;
  for (const auto& tok : split_whitespace(text)) {
    if (!out.empty()) out.push_back(' ');
    out += lowercase ? ascii_lower(tok) : tok;
  }
  return out;
}

TokenSeq tokenize(std::string_view text, const Vocab& vocab) {
  TokenSeq seq;
  for (auto& tok : split_whitespace(text)) {
    if (vocab.lowercase()) tok = ascii_lower(tok);
    seq.ids.push_back(vocab.id(tok));
    if (!seq.text.empty()) seq.text.push_back(' ');
    seq.text += tok;
  }
  return seq;
}

std::string detokenize(std::span<const TokenId> ids, const Vocab& vocab) {
  std::string out;
  for (TokenId id : ids) {
    if (!out.empty()) out.push_back(' ');
    out += vocab.token(id);
  }
  return out;
}

TokenSeq make_seq(std::vector<TokenId> ids, const Vocab& vocab) {
  TokenSeq seq;
  seq.text = detokenize(ids, vocab);
  seq.ids = std::move(ids);
  return seq;
}

Vocab build_vocab(std::span<const std::string> corpus, int min_count, bool lowercase) {
  if (corpus.empty()) throw std::invalid_argument("empty corpus");
  std::map<std::string, long long> counts;
  for (const auto& line : corpus) {
    for (auto& tok : split_whitespace(line)) {
      if (lowercase) tok = ascii_lower(tok);
      if (is_reserved(tok)) continue;
      ++counts[tok];
    }
  }
  std::vector<std::pair<std::string, long long>> kept;
  for (auto& [tok, n] : counts) {
    if (n >= min_count) kept.emplace_back(tok, n);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens;
  tokens.reserve(kept.size());
  for (auto& kv : kept) tokens.push_back(std::move(kv.first));
  return Vocab(std::move(tokens), lowercase, min_count);
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

}  // namespace ebmh
