#pragma once

#include <cstdlib>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "ebmh/ngram.hpp"
#include "ebmh/vocab.hpp"

namespace ebmh::test {

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "ebmh-test-XXXXXX").string();
    if (mkdtemp(tmpl.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::shared_ptr<const Vocab> vocab_of(std::vector<std::string> tokens, bool lowercase = false) {
  return std::make_shared<const Vocab>(std::move(tokens), lowercase);
}

inline std::vector<TokenSeq> seqs_of(const std::vector<std::string>& lines, const Vocab& vocab) {
  std::vector<TokenSeq> out;
  for (const auto& l : lines) out.push_back(tokenize(l, vocab));
  return out;
}

inline std::shared_ptr<const NgramModel> train_lm(const std::vector<std::string>& lines,
                                                  std::shared_ptr<const Vocab> vocab, int order,
                                                  double k, int max_len = 64) {
  const auto corpus = seqs_of(lines, *vocab);
  return std::make_shared<const NgramModel>(NgramModel::train(corpus, std::move(vocab), order, k, max_len));
}

/// All id sequences over the regular tokens of `vocab` with length <= max_len.
inline std::vector<std::vector<TokenId>> all_sequences(const Vocab& vocab, int max_len) {
  std::vector<std::vector<TokenId>> out{{}};
  std::vector<std::vector<TokenId>> frontier{{}};
  for (int len = 1; len <= max_len; ++len) {
    std::vector<std::vector<TokenId>> next;
    for (const auto& s : frontier) {
      for (TokenId id = Vocab::kFirstRegular; id < vocab.end_id(); ++id) {
        auto t = s;
        t.push_back(id);
        next.push_back(t);
      }
    }
    out.insert(out.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  return out;
}

}  // namespace ebmh::test
