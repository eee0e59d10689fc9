#include <doctest.h>

#include <set>

#include "oracles.hpp"
#include "weblm/dom.hpp"
#include "weblm/sequence.hpp"
#include "weblm/tokenizer.hpp"

using namespace weblm;

namespace {

const TagVocab& tags() {
  static TagVocab v;
  return v;
}

WordTokenizer tok() {
  return WordTokenizer(Vocab({"hi", "a", "b", "c", "alpha", "beta", "gamma", "delta", "omega",
                              "sigma", "kappa", "theta", "what", "is", "this"}));
}

}  // namespace

TEST_CASE("structural separation: the worked example") {
  WordTokenizer t = tok();
  DomTree tree;
  int body = tree.add_node(tags().id("body"), "body", -1);
  int p = tree.add_node(tags().id("p"), "p", body);
  tree.add_run(p, "hi");
  tree.finalize();

  TokenSequence seq = structural_separate(tree, body, t);
  REQUIRE(seq.length() == 7);
  const SpecialIds& sp = t.specials();

  CHECK(seq.tokens[0].id == sp.cls);
  CHECK(seq.tokens[0].kind == TokenKind::Special);
  CHECK(seq.tokens[0].node == body);
  CHECK(seq.tokens[0].seg == SegmentId::S);

  CHECK(seq.tokens[1].id == sp.start_tag);
  CHECK(seq.tokens[1].skind == StructureKind::StartTag);
  CHECK(seq.tokens[1].node == body);
  CHECK(seq.tokens[1].tag == tags().id("body"));

  CHECK(seq.tokens[2].id == sp.leaf_tag);
  CHECK(seq.tokens[2].skind == StructureKind::LeafTag);
  CHECK(seq.tokens[2].node == p);
  CHECK(seq.tokens[2].tag == tags().id("p"));

  CHECK(seq.tokens[3].id == sp.end_tag);
  CHECK(seq.tokens[3].node == body);

  CHECK(seq.tokens[4].id == sp.sep);
  CHECK(seq.tokens[4].seg == SegmentId::S);

  CHECK(t.decode(seq.tokens[5].id) == "hi");
  CHECK(seq.tokens[5].kind == TokenKind::Content);
  CHECK(seq.tokens[5].node == p);
  CHECK(seq.tokens[5].tag == tags().id("p"));
  CHECK(seq.tokens[5].seg == SegmentId::C);

  CHECK(seq.tokens[6].id == sp.sep);
  CHECK(seq.tokens[6].seg == SegmentId::C);

  for (int i = 0; i < seq.length(); ++i) CHECK(seq.tokens[static_cast<size_t>(i)].pos == i);
}

TEST_CASE("structural separation: interleaved runs follow depth-first order") {
  WordTokenizer t = tok();
  DomTree tree;
  int div = tree.add_node(tags().id("div"), "div", -1);
  tree.add_run(div, "a");
  int span = tree.add_node(tags().id("span"), "span", div);
  tree.add_run(span, "b");
  tree.add_run(div, "c");
  tree.finalize();

  TokenSequence seq = structural_separate(tree, div, t);
  std::vector<std::string> content;
  std::vector<int> nodes;
  for (const Token& tk : seq.tokens) {
    if (tk.kind != TokenKind::Content) continue;
    content.push_back(t.decode(tk.id));
    nodes.push_back(tk.node);
  }
  CHECK(content == std::vector<std::string>{"a", "b", "c"});
  CHECK(nodes == std::vector<int>{div, span, div});
}

TEST_CASE("sequence layout invariants on random trees, rebuild matches the tree") {
  WordTokenizer t = tok();
  SeqConfig cfg;
  cfg.max_seq_len = 100000;
  for (uint64_t seed = 300; seed < 340; ++seed) {
    DomTree tree = oracles::random_tree(tags(), seed);
    TokenSequence seq = structural_separate(tree, tree.root(), t, cfg);
    validate_sequence_layout(seq.tokens, t.specials());
    int starts = 0, ends = 0;
    for (const Token& tk : seq.tokens) {
      if (tk.skind == StructureKind::StartTag) ++starts;
      if (tk.skind == StructureKind::EndTag) ++ends;
      CHECK(tk.node >= 0);
      CHECK(tk.node < tree.size());
    }
    CHECK(starts == ends);
    auto forest = oracles::rebuild_forest(seq.tokens);
    REQUIRE(forest.has_value());
    CAPTURE(seed);
    CHECK(oracles::rebuilt_matches_segment(*forest, tree, seq.root));
  }
}

TEST_CASE("sequences are deterministic") {
  WordTokenizer t = tok();
  DomTree tree = oracles::random_tree(tags(), 17);
  TokenSequence a = structural_separate(tree, tree.root(), t, {100000});
  TokenSequence b = structural_separate(tree, tree.root(), t, {100000});
  REQUIRE(a.length() == b.length());
  for (int i = 0; i < a.length(); ++i) {
    const Token& x = a.tokens[static_cast<size_t>(i)];
    const Token& y = b.tokens[static_cast<size_t>(i)];
    CHECK(x.id == y.id);
    CHECK(x.node == y.node);
    CHECK(x.tag == y.tag);
  }
}

TEST_CASE("over-long segments raise SegmentTooLong") {
  WordTokenizer t = tok();
  DomTree tree;
  int body = tree.add_node(tags().id("body"), "body", -1);
  int p = tree.add_node(tags().id("p"), "p", body);
  for (int i = 0; i < 40; ++i) tree.add_run(p, "alpha beta gamma");
  tree.finalize();
  SeqConfig cfg;
  cfg.max_seq_len = 16;
  CHECK_THROWS_WITH_AS(structural_separate(tree, body, t, cfg),
                       doctest::Contains("SegmentTooLong"), Error);
}

TEST_CASE("extract_segments: an exactly-min node under an oversized root is selected") {
  WordTokenizer t = tok();
  // each leaf contributes 1 + words tokens
  DomTree tree;
  int body = tree.add_node(tags().id("body"), "body", -1);
  int target = tree.add_node(tags().id("p"), "p", body);
  tree.add_run(target, "alpha beta gamma delta omega sigma");  // count 7, emitted 10
  for (int i = 0; i < 8; ++i) {
    int p = tree.add_node(tags().id("p"), "p", body);
    tree.add_run(p, "alpha beta gamma delta omega sigma kappa theta a b c hi what is this");
  }
  tree.finalize();
  CHECK(measured_length(tree, SegmentRef{target, -1, -1}, t) == 10);

  auto segs = extract_segments(tree, t, 10, 20);
  bool found = false;
  for (const auto& s : segs)
    if (!s.is_run() && s.anchor == target) found = true;
  CHECK(found);
  for (const auto& s : segs) {
    int len = measured_length(tree, s, t);
    CHECK(len >= 10);
    CHECK(len <= 20);
  }
}

TEST_CASE("extract_segments: everything too small yields an empty list") {
  WordTokenizer t = tok();
  DomTree tree;
  int body = tree.add_node(tags().id("body"), "body", -1);
  int p = tree.add_node(tags().id("p"), "p", body);
  tree.add_run(p, "hi");
  tree.finalize();
  CHECK(extract_segments(tree, t, 128, 512).empty());
}

TEST_CASE("extract_segments: too-small siblings combine into runs") {
  WordTokenizer t = tok();
  DomTree tree;
  int body = tree.add_node(tags().id("body"), "body", -1);
  // 10 leaves of 4 tokens each (emitted 7 alone, too small for min 20)
  for (int i = 0; i < 10; ++i) {
    int p = tree.add_node(tags().id("p"), "p", body);
    tree.add_run(p, "alpha beta gamma");
  }
  tree.finalize();
  // body emitted: 2 + 10*4 + 3 = 45 > max 30 -> runs of siblings
  auto segs = extract_segments(tree, t, 20, 30);
  REQUIRE(!segs.empty());
  for (const auto& s : segs) {
    CHECK(s.is_run());
    int len = measured_length(tree, s, t);
    CHECK(len >= 20);
    CHECK(len <= 30);
    TokenSequence seq = build_sequence(tree, s, t, {100000});
    CHECK(seq.length() == len);
    // specials anchor to the common parent
    CHECK(seq.tokens.front().node == body);
  }
}

TEST_CASE("extract_segments: selections are disjoint and re-measure in range") {
  WordTokenizer t = tok();
  oracles::TreeGenOptions opt;
  opt.max_nodes = 120;
  opt.text_prob = 0.5;
  for (uint64_t seed = 400; seed < 430; ++seed) {
    DomTree tree = oracles::random_tree(tags(), seed, opt);
    auto segs = extract_segments(tree, t, 24, 64);
    std::set<int> claimed;
    for (const auto& s : segs) {
      int len = build_sequence(tree, s, t, {100000}).length();
      CAPTURE(seed);
      CHECK(len >= 24);
      CHECK(len <= 64);
      // expand to the node set and ensure no overlap
      std::vector<int> roots;
      if (s.is_run()) {
        const auto& children = tree.node(s.anchor).children;
        for (int k = s.first_child; k <= s.last_child; ++k)
          roots.push_back(children[static_cast<size_t>(k)]);
      } else {
        roots.push_back(s.anchor);
      }
      for (int root : roots) {
        std::vector<int> stack{root};
        while (!stack.empty()) {
          int id = stack.back();
          stack.pop_back();
          CHECK(claimed.insert(id).second);
          for (int c : tree.node(id).children) stack.push_back(c);
        }
      }
    }
  }
}

TEST_CASE("sliding window: single window when content fits") {
  WordTokenizer t = tok();
  DomTree tree;
  int body = tree.add_node(tags().id("body"), "body", -1);
  int p = tree.add_node(tags().id("p"), "p", body);
  tree.add_run(p, "alpha beta gamma delta omega sigma kappa theta a b");
  tree.finalize();
  TokenSequence seq = structural_separate(tree, body, t, {100000});
  auto windows = sliding_window(seq, 10, 4);
  REQUIRE(windows.size() == 1);
  CHECK(windows[0].length() == seq.length());
  for (int i = 0; i < seq.length(); ++i)
    CHECK(windows[0].tokens[static_cast<size_t>(i)].id == seq.tokens[static_cast<size_t>(i)].id);
}

TEST_CASE("sliding window: length 12, window 8, stride 4") {
  WordTokenizer t = tok();
  DomTree tree;
  int body = tree.add_node(tags().id("body"), "body", -1);
  int p = tree.add_node(tags().id("p"), "p", body);
  tree.add_run(p, "alpha beta gamma delta omega sigma kappa theta a b c hi");
  tree.finalize();
  TokenSequence seq = structural_separate(tree, body, t, {100000});
  auto windows = sliding_window(seq, 8, 4);
  REQUIRE(windows.size() == 2);
  // windows carry [CLS] + structure + [SEP] + 8 content + [SEP]
  auto content_of = [&](const TokenSequence& s) {
    std::vector<std::string> out;
    for (const Token& tk : s.tokens)
      if (tk.kind == TokenKind::Content) out.push_back(t.decode(tk.id));
    return out;
  };
  auto w0 = content_of(windows[0]);
  auto w1 = content_of(windows[1]);
  CHECK(w0 == std::vector<std::string>{"alpha", "beta", "gamma", "delta", "omega", "sigma",
                                       "kappa", "theta"});
  CHECK(w1 == std::vector<std::string>{"omega", "sigma", "kappa", "theta", "a", "b", "c", "hi"});
}

TEST_CASE("sliding window: full coverage for content lengths 1..100") {
  WordTokenizer t = tok();
  for (int len = 1; len <= 100; ++len) {
    DomTree tree;
    int body = tree.add_node(tags().id("body"), "body", -1);
    int p = tree.add_node(tags().id("p"), "p", body);
    std::string text;
    for (int i = 0; i < len; ++i) text += i ? " a" : "a";
    tree.add_run(p, text);
    tree.finalize();
    TokenSequence seq = structural_separate(tree, body, t, {100000});
    for (int window : {7, 16}) {
      for (int stride : {3, window}) {
        auto windows = sliding_window(seq, window, stride);
        for (const auto& w : windows) validate_sequence_layout(w.tokens, t.specials());
        std::vector<bool> hit(static_cast<size_t>(len), false);
        int n = len;
        if (n <= window) {
          for (int i = 0; i < n; ++i) hit[static_cast<size_t>(i)] = true;
        } else {
          for (int start = 0;; start += stride) {
            int end = std::min(start + window, n);
            for (int i = end - window; i < end; ++i) hit[static_cast<size_t>(i)] = true;
            if (end == n) break;
          }
        }
        size_t expect_windows = 0;
        if (n <= window) {
          expect_windows = 1;
        } else {
          for (int start = 0;; start += stride) {
            ++expect_windows;
            if (std::min(start + window, n) == n) break;
          }
        }
        CHECK(windows.size() == expect_windows);
        CHECK(std::all_of(hit.begin(), hit.end(), [](bool b) { return b; }));
      }
    }
  }
}

TEST_CASE("sliding window: invalid stride") {
  WordTokenizer t = tok();
  DomTree tree;
  int body = tree.add_node(tags().id("body"), "body", -1);
  tree.add_run(body, "a b c");
  tree.finalize();
  TokenSequence seq = structural_separate(tree, body, t, {100000});
  CHECK_THROWS_WITH_AS(sliding_window(seq, 8, 0), doctest::Contains("InvalidWindow"), Error);
  CHECK_THROWS_AS(sliding_window(seq, 8, 9), Error);
}

TEST_CASE("attach_question: empty question leaves the sequence unchanged") {
  WordTokenizer t = tok();
  DomTree tree = parse_html("<html><body><p>hi</p></body></html>", tags());
  TokenSequence seq = structural_separate(tree, tree.root(), t, {512});
  TokenSequence out = attach_question(seq, "", t, {512});
  CHECK(out.length() == seq.length());
}

TEST_CASE("attach_question: question tokens extend the content region") {
  WordTokenizer t = tok();
  DomTree tree = parse_html("<html><body><p>hi</p></body></html>", tags());
  TokenSequence seq = structural_separate(tree, tree.root(), t, {512});
  int before = seq.length();
  TokenSequence out = attach_question(seq, "what is this hi a", t, {512});
  CHECK(out.length() == before + 5);
  // last token is the trailing [SEP], the 5 before it are the question
  CHECK(out.tokens.back().id == t.specials().sep);
  for (int i = 0; i < 5; ++i) {
    const Token& q = out.tokens[static_cast<size_t>(out.length() - 2 - i)];
    CHECK(q.kind == TokenKind::Content);
    CHECK(q.seg == SegmentId::C);
    CHECK(q.node == tree.root());
    CHECK(q.tag == tags().id("html"));
  }
  validate_sequence_layout(out.tokens, t.specials());
  // overflow
  SeqConfig tight{before + 2};
  CHECK_THROWS_WITH_AS(attach_question(structural_separate(tree, tree.root(), t, tight),
                                       "what is this hi a", t, tight),
                       doctest::Contains("SegmentTooLong"), Error);
}

TEST_CASE("tag-name structure vocabulary remains available behind the config flag") {
  Vocab v({"hi"});
  v.add("<body>");
  v.add("</body>");
  v.add("<p/>");
  WordTokenizer t(v);
  DomTree tree;
  int body = tree.add_node(tags().id("body"), "body", -1);
  int p = tree.add_node(tags().id("p"), "p", body);
  tree.add_run(p, "hi");
  tree.finalize();
  SeqConfig cfg;
  cfg.structure_vocab = StructureVocab::TagNames;
  TokenSequence seq = structural_separate(tree, body, t, cfg);
  CHECK(t.decode(seq.tokens[1].id) == "<body>");
  CHECK(t.decode(seq.tokens[2].id) == "<p/>");
  CHECK(t.decode(seq.tokens[3].id) == "</body>");
  // kinds are unchanged; only the ids differ
  CHECK(seq.tokens[1].skind == StructureKind::StartTag);
  CHECK(seq.tokens[2].skind == StructureKind::LeafTag);
}
