#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "weblm/dom.hpp"
#include "weblm/errors.hpp"
#include "weblm/tokenizer.hpp"

namespace weblm {

enum class TokenKind : uint8_t { Special, Structure, Content };
enum class StructureKind : uint8_t { StartTag, EndTag, LeafTag, None };
enum class SegmentId : uint8_t { S = 0, C = 1 };

struct Token {
  int32_t id = 0;
  TokenKind kind = TokenKind::Special;
  StructureKind skind = StructureKind::None;
  int32_t node = 0;   // alignment to the source tree
  TagId tag = 0;
  SegmentId seg = SegmentId::S;
  int32_t pos = 0;    // index in the sequence
};

// Structure tokens can either share three ids (tag identity carried by the
// tag embedding alone) or use per-tag-name vocabulary entries.
enum class StructureVocab { ThreeIds, TagNames };

struct SeqConfig {
  int max_seq_len = 512;
  StructureVocab structure_vocab = StructureVocab::ThreeIds;
};

// Either a whole subtree or a run of consecutive siblings (children
// first..last of anchor). For runs the anchor is the siblings' common parent.
struct SegmentRef {
  int anchor = 0;
  int first_child = -1;
  int last_child = -1;

  bool is_run() const { return first_child >= 0; }
  bool operator==(const SegmentRef&) const = default;
};

struct TokenSequence {
  std::vector<Token> tokens;
  SegmentRef root;
  const DomTree* tree = nullptr;  // non-owning; may be null for deserialized sequences

  int32_t length() const { return static_cast<int32_t>(tokens.size()); }
};

namespace detail_seq {

struct Emitter {
  const DomTree& tree;
  const Tokenizer& tok;
  const SeqConfig& cfg;
  std::vector<Token> structure;
  std::vector<Token> content;

  int32_t structure_id(StructureKind k, const DomNode& n) const {
    if (cfg.structure_vocab == StructureVocab::ThreeIds) {
      switch (k) {
        case StructureKind::StartTag: return tok.specials().start_tag;
        case StructureKind::EndTag: return tok.specials().end_tag;
        default: return tok.specials().leaf_tag;
      }
    }
    // tag-name mode: look up "<name>", "</name>" or "<name/>" in the vocabulary
    std::string key;
    switch (k) {
      case StructureKind::StartTag: key = "<" + n.name + ">"; break;
      case StructureKind::EndTag: key = "</" + n.name + ">"; break;
      default: key = "<" + n.name + "/>"; break;
    }
    auto* wt = dynamic_cast<const WordTokenizer*>(&tok);
    int32_t id = wt ? wt->vocab().id(key) : -1;
    return id >= 0 ? id : tok.specials().unk;
  }

  void emit_structure(StructureKind k, const DomNode& n) {
    Token t;
    t.id = structure_id(k, n);
    t.kind = TokenKind::Structure;
    t.skind = k;
    t.node = n.id;
    t.tag = n.tag;
    t.seg = SegmentId::S;
    structure.push_back(t);
  }

  void emit_text(const DomNode& n, const std::string& text) {
    for (int32_t id : tok.encode(text)) {
      Token t;
      t.id = id;
      t.kind = TokenKind::Content;
      t.skind = StructureKind::None;
      t.node = n.id;
      t.tag = n.tag;
      t.seg = SegmentId::C;
      content.push_back(t);
    }
  }

  // Depth-first: start/end (or leaf) markers to the structure list, text runs
  // to the content list, runs interleaved with children in slot order.
  void visit(int id) {
    const DomNode& n = tree.node(id);
    if (n.children.empty()) {
      emit_structure(StructureKind::LeafTag, n);
      for (const TextRun& r : n.runs) emit_text(n, r.text);
      return;
    }
    emit_structure(StructureKind::StartTag, n);
    size_t ri = 0;
    for (size_t slot = 0; slot <= n.children.size(); ++slot) {
      while (ri < n.runs.size() && static_cast<size_t>(n.runs[ri].slot) <= slot) {
        emit_text(n, n.runs[ri].text);
        ++ri;
      }
      if (slot < n.children.size()) visit(n.children[slot]);
    }
    emit_structure(StructureKind::EndTag, n);
  }
};

inline Token special(int32_t id, int node, TagId tag, SegmentId seg) {
  Token t;
  t.id = id;
  t.kind = TokenKind::Special;
  t.skind = StructureKind::None;
  t.node = node;
  t.tag = tag;
  t.seg = seg;
  return t;
}

}  // namespace detail_seq

// [CLS] structure... [SEP] content... [SEP]. Specials attach to the segment
// anchor node; [CLS] and the first [SEP] carry segment S, the final one C.
inline TokenSequence build_sequence(const DomTree& tree, SegmentRef seg, const Tokenizer& tok,
                                    const SeqConfig& cfg = {}) {
  detail_seq::Emitter em{tree, tok, cfg, {}, {}};
  const DomNode& anchor = tree.node(seg.anchor);
  if (seg.is_run()) {
    if (seg.first_child < 0 || seg.last_child < seg.first_child ||
        static_cast<size_t>(seg.last_child) >= anchor.children.size())
      fail(Errc::InvalidNode, "sibling run out of range");
    for (int k = seg.first_child; k <= seg.last_child; ++k)
      em.visit(anchor.children[static_cast<size_t>(k)]);
  } else {
    em.visit(seg.anchor);
  }

  TokenSequence out;
  out.root = seg;
  out.tree = &tree;
  size_t total = em.structure.size() + em.content.size() + 3;
  if (static_cast<int>(total) > cfg.max_seq_len)
    fail(Errc::SegmentTooLong, "sequence length " + std::to_string(total) + " exceeds " +
                                   std::to_string(cfg.max_seq_len));
  out.tokens.reserve(total);
  out.tokens.push_back(detail_seq::special(tok.specials().cls, anchor.id, anchor.tag, SegmentId::S));
  for (Token& t : em.structure) out.tokens.push_back(t);
  out.tokens.push_back(detail_seq::special(tok.specials().sep, anchor.id, anchor.tag, SegmentId::S));
  for (Token& t : em.content) out.tokens.push_back(t);
  out.tokens.push_back(detail_seq::special(tok.specials().sep, anchor.id, anchor.tag, SegmentId::C));
  for (size_t i = 0; i < out.tokens.size(); ++i) out.tokens[i].pos = static_cast<int32_t>(i);
  return out;
}

inline TokenSequence structural_separate(const DomTree& tree, int root, const Tokenizer& tok,
                                         const SeqConfig& cfg = {}) {
  return build_sequence(tree, SegmentRef{root, -1, -1}, tok, cfg);
}

// Emitted length of a segment without building it: subtree counts plus the
// three specials.
inline int measured_length(const DomTree& tree, const SegmentRef& seg, const Tokenizer& tok) {
  int count = 3;
  if (seg.is_run()) {
    const DomNode& anchor = tree.node(seg.anchor);
    for (int k = seg.first_child; k <= seg.last_child; ++k)
      count += subtree_token_count(tree, anchor.children[static_cast<size_t>(k)], tok);
  } else {
    count += subtree_token_count(tree, seg.anchor, tok);
  }
  return count;
}

namespace detail_seq {

struct SegmentScan {
  const DomTree& tree;
  const Tokenizer& tok;
  int min_len;
  int max_len;
  std::vector<int> counts;  // subtree token counts, indexed by node id
  std::vector<SegmentRef> out;

  int fill_counts(int id) {
    const DomNode& n = tree.node(id);
    int c = n.children.empty() ? 1 : 2;
    for (const TextRun& r : n.runs) c += static_cast<int>(tok.encode(r.text).size());
    for (int ch : n.children) c += fill_counts(ch);
    counts[static_cast<size_t>(id)] = c;
    return c;
  }

  int emitted_len(int id) const { return counts[static_cast<size_t>(id)] + 3; }

  void scan(int id) {
    int len = emitted_len(id);
    if (len < min_len) return;  // every descendant is smaller still
    if (len <= max_len) {
      out.push_back(SegmentRef{id, -1, -1});
      return;
    }
    // node too large: take in-range children, group too-small consecutive
    // siblings greedily, recurse into oversized ones
    const DomNode& n = tree.node(id);
    int run_start = -1;
    int run_sum = 0;  // token counts only; a run adds one set of specials
    auto flush_run = [&](int end_exclusive) {
      if (run_start < 0) return;
      int len_run = run_sum + 3;
      if (len_run >= min_len && len_run <= max_len)
        out.push_back(SegmentRef{id, run_start, end_exclusive - 1});
      run_start = -1;
      run_sum = 0;
    };
    for (size_t k = 0; k < n.children.size(); ++k) {
      int child = n.children[k];
      int clen = emitted_len(child);
      if (clen >= min_len && clen <= max_len) {
        flush_run(static_cast<int>(k));
        out.push_back(SegmentRef{child, -1, -1});
      } else if (clen > max_len) {
        flush_run(static_cast<int>(k));
        scan(child);
      } else {
        int ccount = counts[static_cast<size_t>(child)];
        if (run_start >= 0 && run_sum + ccount + 3 > max_len) flush_run(static_cast<int>(k));
        if (run_start < 0) run_start = static_cast<int>(k);
        run_sum += ccount;
      }
    }
    flush_run(static_cast<int>(n.children.size()));
  }
};

}  // namespace detail_seq

// Greedy top-down selection of disjoint segments whose emitted sequence
// length lies in [min_len, max_len].
inline std::vector<SegmentRef> extract_segments(const DomTree& tree, const Tokenizer& tok,
                                                int min_len = 128, int max_len = 512) {
  if (min_len < 4 || max_len < min_len) fail(Errc::ConfigError, "invalid segment length range");
  if (tree.empty()) return {};
  detail_seq::SegmentScan scan{tree, tok, min_len, max_len,
                               std::vector<int>(static_cast<size_t>(tree.size()), 0),
                               {}};
  scan.fill_counts(tree.root());
  scan.scan(tree.root());
  return std::move(scan.out);
}

// Fine-tuning input shaping: cap the structure region, then slide a window
// over the content region. Every content token lands in at least one window.
inline std::vector<TokenSequence> sliding_window(const TokenSequence& seq, int window, int stride,
                                                 int structure_budget = 256) {
  if (stride <= 0 || stride > window) fail(Errc::InvalidWindow, "stride must be in (0, window]");
  if (window <= 0) fail(Errc::InvalidWindow, "window must be positive");
  if (structure_budget < 0) fail(Errc::InvalidWindow, "structure budget must be >= 0");
  if (seq.tokens.empty()) fail(Errc::InvalidWindow, "empty sequence");

  const Token& cls = seq.tokens.front();
  std::vector<Token> structure;
  std::vector<Token> content;
  Token sep_s = cls, sep_c = cls;
  bool seen_first_sep = false;
  for (size_t i = 1; i + 1 < seq.tokens.size(); ++i) {
    const Token& t = seq.tokens[i];
    if (t.kind == TokenKind::Special) {
      sep_s = t;
      seen_first_sep = true;
      continue;
    }
    if (!seen_first_sep)
      structure.push_back(t);
    else
      content.push_back(t);
  }
  sep_c = seq.tokens.back();
  if (static_cast<int>(structure.size()) > structure_budget)
    structure.resize(static_cast<size_t>(structure_budget));

  std::vector<TokenSequence> out;
  const int n = static_cast<int>(content.size());
  auto emit = [&](int lo, int hi) {
    TokenSequence w;
    w.root = seq.root;
    w.tree = seq.tree;
    w.tokens.push_back(cls);
    for (const Token& t : structure) w.tokens.push_back(t);
    w.tokens.push_back(sep_s);
    for (int k = lo; k < hi; ++k) w.tokens.push_back(content[static_cast<size_t>(k)]);
    w.tokens.push_back(sep_c);
    for (size_t i = 0; i < w.tokens.size(); ++i) w.tokens[i].pos = static_cast<int32_t>(i);
    out.push_back(std::move(w));
  };

  if (n <= window) {
    emit(0, n);
    return out;
  }
  for (int start = 0;; start += stride) {
    int end = std::min(start + window, n);
    emit(end - window, end);
    if (end == n) break;
  }
  return out;
}

// Appends question tokens to the content region before the final [SEP].
// They attach to the tree root with segment C.
inline TokenSequence attach_question(const TokenSequence& seq, std::string_view question,
                                     const Tokenizer& tok, const SeqConfig& cfg = {}) {
  if (!seq.tree) fail(Errc::AlignmentError, "sequence has no source tree");
  std::vector<int32_t> q = tok.encode(question);
  if (q.empty()) return seq;
  if (seq.length() + static_cast<int>(q.size()) > cfg.max_seq_len)
    fail(Errc::SegmentTooLong, "question does not fit the sequence budget");
  const DomTree& tree = *seq.tree;
  const DomNode& root = tree.node(tree.root());
  TokenSequence out = seq;
  Token sep_c = out.tokens.back();
  out.tokens.pop_back();
  for (int32_t id : q) {
    Token t;
    t.id = id;
    t.kind = TokenKind::Content;
    t.skind = StructureKind::None;
    t.node = root.id;
    t.tag = root.tag;
    t.seg = SegmentId::C;
    out.tokens.push_back(t);
  }
  out.tokens.push_back(sep_c);
  for (size_t i = 0; i < out.tokens.size(); ++i) out.tokens[i].pos = static_cast<int32_t>(i);
  return out;
}

// Re-checks the construction invariants; used when loading serialized records.
inline void validate_sequence_layout(const std::vector<Token>& tokens, const SpecialIds& sp) {
  if (tokens.size() < 3) fail(Errc::DataError, "sequence too short");
  if (tokens.front().id != sp.cls || tokens.front().kind != TokenKind::Special)
    fail(Errc::DataError, "sequence must start with [CLS]");
  if (tokens.back().id != sp.sep || tokens.back().seg != SegmentId::C)
    fail(Errc::DataError, "sequence must end with a content [SEP]");
  int seps = 0;
  bool in_content = false;
  int depth = 0;
  for (size_t i = 1; i + 1 < tokens.size(); ++i) {
    const Token& t = tokens[i];
    if (t.pos != static_cast<int32_t>(i)) fail(Errc::DataError, "pos field out of order");
    if (t.kind == TokenKind::Special) {
      if (t.id != sp.sep) fail(Errc::DataError, "unexpected special inside sequence");
      ++seps;
      in_content = true;
      continue;
    }
    if (!in_content) {
      if (t.kind != TokenKind::Structure || t.seg != SegmentId::S)
        fail(Errc::DataError, "non-structure token left of the first [SEP]");
      if (t.skind == StructureKind::StartTag) ++depth;
      if (t.skind == StructureKind::EndTag) {
        if (--depth < 0) fail(Errc::DataError, "unbalanced structure tokens");
      }
    } else {
      if (t.kind != TokenKind::Content || t.seg != SegmentId::C)
        fail(Errc::DataError, "non-content token right of the first [SEP]");
    }
  }
  if (seps != 1) fail(Errc::DataError, "expected exactly one interior [SEP]");
  if (depth != 0) fail(Errc::DataError, "unbalanced structure tokens");
}

}  // namespace weblm
