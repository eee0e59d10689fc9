#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "weblm/errors.hpp"

namespace weblm {

// Fixed vocabulary layout: ids 0..4 are [PAD] [CLS] [SEP] [MASK] [UNK],
// ids 5..7 are the three structure-token ids, words follow.
struct SpecialIds {
  int32_t pad = 0;
  int32_t cls = 1;
  int32_t sep = 2;
  int32_t mask = 3;
  int32_t unk = 4;
  int32_t start_tag = 5;
  int32_t end_tag = 6;
  int32_t leaf_tag = 7;
};

inline constexpr int kReservedVocabSlots = 8;

inline const std::array<const char*, kReservedVocabSlots>& reserved_vocab_tokens() {
  static const std::array<const char*, kReservedVocabSlots> names = {
      "[PAD]", "[CLS]", "[SEP]", "[MASK]", "[UNK]",
      "<start_tag>", "<end_tag>", "<leaf_tag>"};
  return names;
}

class Vocab {
 public:
  Vocab() {
    for (const char* name : reserved_vocab_tokens()) push(name);
  }

  explicit Vocab(const std::vector<std::string>& words) : Vocab() {
    for (const auto& w : words) add(w);
  }

  // vocab.txt: one token per line, line number = id. The reserved tokens must
  // occupy the first lines in order.
  static Vocab load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::IoError, "cannot open vocab file " + path.string());
    Vocab v;
    v.tokens_.clear();
    v.index_.clear();
    std::string line;
    while (std::getline(in, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
      if (!line.empty()) v.push(line);
    }
    if (v.size() < kReservedVocabSlots) fail(Errc::DataError, "vocab file too short: " + path.string());
    for (int i = 0; i < kReservedVocabSlots; ++i)
      if (v.tokens_[static_cast<size_t>(i)] != reserved_vocab_tokens()[static_cast<size_t>(i)])
        fail(Errc::DataError, "vocab file does not start with the reserved tokens: " + path.string());
    return v;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(Errc::IoError, "cannot write vocab file " + path.string());
    for (const auto& t : tokens_) out << t << '\n';
  }

  int32_t add(const std::string& token) {
    auto it = index_.find(token);
    if (it != index_.end()) return it->second;
    return push(token);
  }

  // -1 when absent.
  int32_t id(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? -1 : it->second;
  }

  const std::string& token(int32_t id) const {
    if (id < 0 || id >= size()) fail(Errc::DataError, "token id out of range");
    return tokens_[static_cast<size_t>(id)];
  }

  int32_t size() const { return static_cast<int32_t>(tokens_.size()); }

 private:
  int32_t push(std::string token) {
    int32_t id = size();
    index_.emplace(token, id);
    tokens_.push_back(std::move(token));
    return id;
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int32_t> index_;
};

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::vector<int32_t> encode(std::string_view text) const = 0;
  virtual std::string decode(int32_t id) const = 0;
  virtual int32_t vocab_size() const = 0;
  virtual const SpecialIds& specials() const = 0;
};

namespace detail {

inline bool is_ascii_space(uint32_t cp) {
  return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\f' || cp == '\v' ||
         cp == 0xA0;
}

inline bool is_ascii_punct(uint32_t cp) {
  return (cp >= '!' && cp <= '/') || (cp >= ':' && cp <= '@') || (cp >= '[' && cp <= '`') ||
         (cp >= '{' && cp <= '~');
}

// Decodes one UTF-8 codepoint; malformed bytes pass through one at a time.
inline uint32_t next_codepoint(std::string_view s, size_t& i) {
  unsigned char c = static_cast<unsigned char>(s[i]);
  if (c < 0x80) {
    ++i;
    return c;
  }
  int extra = (c >= 0xF0) ? 3 : (c >= 0xE0) ? 2 : (c >= 0xC0) ? 1 : 0;
  if (extra == 0 || i + static_cast<size_t>(extra) >= s.size()) {
    ++i;
    return c;
  }
  uint32_t cp = c & (0x3F >> extra);
  size_t j = i + 1;
  for (int k = 0; k < extra; ++k, ++j) {
    if ((static_cast<unsigned char>(s[j]) & 0xC0) != 0x80) {
      ++i;
      return c;
    }
    cp = (cp << 6) | (static_cast<unsigned char>(s[j]) & 0x3F);
  }
  i = j;
  return cp;
}

inline void append_codepoint(std::string& out, uint32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

inline uint32_t to_lower_cp(uint32_t cp) { return (cp >= 'A' && cp <= 'Z') ? cp + 32 : cp; }

// Lowercases and splits into word / punctuation pieces. Punctuation is kept
// as single-codepoint pieces; whitespace only separates.
inline std::vector<std::string> split_pieces(std::string_view text) {
  std::vector<std::string> pieces;
  std::string word;
  size_t i = 0;
  while (i < text.size()) {
    uint32_t cp = next_codepoint(text, i);
    cp = to_lower_cp(cp);
    if (is_ascii_space(cp)) {
      if (!word.empty()) {
        pieces.push_back(std::move(word));
        word.clear();
      }
    } else if (is_ascii_punct(cp)) {
      if (!word.empty()) {
        pieces.push_back(std::move(word));
        word.clear();
      }
      std::string p;
      append_codepoint(p, cp);
      pieces.push_back(std::move(p));
    } else {
      append_codepoint(word, cp);
    }
  }
  if (!word.empty()) pieces.push_back(std::move(word));
  return pieces;
}

inline std::vector<std::string> split_codepoints(std::string_view word) {
  std::vector<std::string> chars;
  size_t i = 0;
  while (i < word.size()) {
    size_t start = i;
    next_codepoint(word, i);
    chars.emplace_back(word.substr(start, i - start));
  }
  return chars;
}

}  // namespace detail

// Default deterministic tokenizer: lowercase, split on whitespace and
// punctuation, per-character fallback for words missing from the vocabulary.
class WordTokenizer final : public Tokenizer {
 public:
  explicit WordTokenizer(Vocab vocab) : vocab_(std::move(vocab)) {}

  std::vector<int32_t> encode(std::string_view text) const override {
    std::vector<int32_t> ids;
    for (const auto& piece : detail::split_pieces(text)) {
      int32_t id = vocab_.id(piece);
      if (id >= 0) {
        ids.push_back(id);
        continue;
      }
      for (const auto& ch : detail::split_codepoints(piece)) {
        int32_t cid = vocab_.id(ch);
        ids.push_back(cid >= 0 ? cid : specials_.unk);
      }
    }
    return ids;
  }

  std::string decode(int32_t id) const override { return vocab_.token(id); }

  int32_t vocab_size() const override { return vocab_.size(); }

  const SpecialIds& specials() const override { return specials_; }

  const Vocab& vocab() const { return vocab_; }

 private:
  Vocab vocab_;
  SpecialIds specials_;
};

// Frequency counter used at prep time. Counts split pieces plus every
// codepoint seen inside words so the per-character fallback stays covered.
class VocabBuilder {
 public:
  void add_text(std::string_view text) {
    for (const auto& piece : detail::split_pieces(text)) {
      ++counts_[piece];
      if (piece.size() > 1) {
        for (const auto& ch : detail::split_codepoints(piece)) ++counts_[ch];
      }
    }
  }

  // Highest count first, ties by token text; capped at max_words entries
  // beyond the reserved slots.
  Vocab build(size_t max_words = 8192) const {
    std::vector<std::pair<std::string, uint64_t>> items(counts_.begin(), counts_.end());
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    Vocab v;
    for (const auto& [tok, cnt] : items) {
      if (static_cast<size_t>(v.size()) >= max_words + kReservedVocabSlots) break;
      v.add(tok);
    }
    return v;
  }

 private:
  std::map<std::string, uint64_t> counts_;
};

}  // namespace weblm
