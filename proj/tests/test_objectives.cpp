#include <doctest.h>

#include <map>
#include <set>

#include "oracles.hpp"
#include "weblm/dom.hpp"
#include "weblm/objectives.hpp"
#include "weblm/sequence.hpp"
#include "weblm/tokenizer.hpp"

using namespace weblm;

namespace {

const TagVocab& tags() {
  static TagVocab v;
  return v;
}

WordTokenizer tok() {
  return WordTokenizer(Vocab({"hi", "x", "alpha", "beta", "gamma", "delta", "omega", "sigma",
                              "kappa", "theta"}));
}

// a long single-paragraph sequence with n content tokens
TokenSequence long_sequence(const DomTree*& tree_out, DomTree& storage, const WordTokenizer& t,
                            int n_content) {
  storage = DomTree();
  int body = storage.add_node(tags().id("body"), "body", -1);
  int p = storage.add_node(tags().id("p"), "p", body);
  std::string text;
  for (int i = 0; i < n_content; ++i) text += i ? " x" : "x";
  storage.add_run(p, text);
  storage.finalize();
  tree_out = &storage;
  SeqConfig cfg;
  cfg.max_seq_len = n_content + 16;
  return structural_separate(storage, body, t, cfg);
}

}  // namespace

TEST_CASE("mlm: only content positions are selected; labels mark selections exactly") {
  WordTokenizer t = tok();
  DomTree storage;
  const DomTree* tree;
  TokenSequence seq = long_sequence(tree, storage, t, 200);
  Rng rng(42);
  ObjectiveConfig cfg;
  MlmTarget target = apply_mlm(seq, t, rng, cfg);
  REQUIRE(target.input_ids.size() == seq.tokens.size());
  REQUIRE(target.labels.size() == seq.tokens.size());
  int selected = 0;
  for (size_t i = 0; i < seq.tokens.size(); ++i) {
    if (seq.tokens[i].kind != TokenKind::Content) {
      CHECK(target.labels[i] == kIgnoreLabel);
      CHECK(target.input_ids[i] == seq.tokens[i].id);
      continue;
    }
    if (target.labels[i] != kIgnoreLabel) {
      ++selected;
      CHECK(target.labels[i] == seq.tokens[i].id);  // original id
    } else {
      CHECK(target.input_ids[i] == seq.tokens[i].id);  // untouched
    }
  }
  CHECK(selected > 0);
}

TEST_CASE("mlm: vanishing probability selects nothing") {
  WordTokenizer t = tok();
  DomTree storage;
  const DomTree* tree;
  TokenSequence seq = long_sequence(tree, storage, t, 100);
  Rng rng(1);
  ObjectiveConfig cfg;
  cfg.mlm_p = 1e-9;
  MlmTarget target = apply_mlm(seq, t, rng, cfg);
  for (auto v : target.labels) CHECK(v == kIgnoreLabel);
}

TEST_CASE("mlm: p outside (0,1) is a config error") {
  WordTokenizer t = tok();
  DomTree storage;
  const DomTree* tree;
  TokenSequence seq = long_sequence(tree, storage, t, 10);
  Rng rng(1);
  ObjectiveConfig cfg;
  cfg.mlm_p = 0.0;
  CHECK_THROWS_WITH_AS(apply_mlm(seq, t, rng, cfg), doctest::Contains("ConfigError"), Error);
  cfg.mlm_p = 1.0;
  CHECK_THROWS_AS(apply_mlm(seq, t, rng, cfg), Error);
}

TEST_CASE("mlm: fixed seed replays identically") {
  WordTokenizer t = tok();
  DomTree storage;
  const DomTree* tree;
  TokenSequence seq = long_sequence(tree, storage, t, 300);
  Rng a(99), b(99);
  MlmTarget ta = apply_mlm(seq, t, a);
  MlmTarget tb = apply_mlm(seq, t, b);
  CHECK(ta.input_ids == tb.input_ids);
  CHECK(ta.labels == tb.labels);
}

TEST_CASE("mlm: selection count over 10000 tokens sits in the exact binomial interval") {
  // central 99.99% interval for Binomial(10000, 0.15), frozen from the oracle
  auto interval = oracles::binomial_central_interval(10000, 0.15, 1e-4);
  CHECK(interval.lo == 1363);
  CHECK(interval.hi == 1641);

  WordTokenizer t = tok();
  DomTree storage;
  const DomTree* tree;
  TokenSequence seq = long_sequence(tree, storage, t, 10000);
  Rng rng(2024);
  MlmTarget target = apply_mlm(seq, t, rng);
  int64_t selected = 0;
  for (auto v : target.labels)
    if (v != kIgnoreLabel) ++selected;
  CHECK(interval.contains(selected));

  // mask/random/keep splits: masked positions carry [MASK]
  int64_t masked = 0, changed_random = 0, kept = 0;
  for (size_t i = 0; i < seq.tokens.size(); ++i) {
    if (target.labels[i] == kIgnoreLabel) continue;
    if (target.input_ids[i] == t.specials().mask) ++masked;
    else if (target.input_ids[i] != seq.tokens[i].id) ++changed_random;
    else ++kept;
  }
  CHECK(masked + changed_random + kept == selected);
  auto mask_iv = oracles::binomial_central_interval(selected, 0.8, 1e-4);
  CHECK(mask_iv.contains(masked));
}

TEST_CASE("tsp: a leaf's own text token labels as parent-child") {
  WordTokenizer t = tok();
  DomTree tree;
  int p = tree.add_node(tags().id("p"), "p", -1);
  tree.add_run(p, "hi");
  tree.finalize();
  TokenSequence seq = structural_separate(tree, p, t);
  Rng rng(5);
  auto pairs = sample_tsp(seq, tree, rng);
  REQUIRE(pairs.size() == 1);  // one structure token x one content token
  CHECK(seq.tokens[static_cast<size_t>(pairs[0].structure_pos)].kind == TokenKind::Structure);
  CHECK(seq.tokens[static_cast<size_t>(pairs[0].content_pos)].kind == TokenKind::Content);
  CHECK(pairs[0].label == Relation::ParentChild);
}

TEST_CASE("tsp: ancestor two levels up labels as ancestor-descendant") {
  WordTokenizer t = tok();
  DomTree tree;
  int body = tree.add_node(tags().id("body"), "body", -1);
  int div = tree.add_node(tags().id("div"), "div", body);
  int p = tree.add_node(tags().id("p"), "p", div);
  tree.add_run(p, "x");
  tree.finalize();
  CHECK(tsp_label(tree, body, p) == Relation::AncestorDescendant);
  CHECK(tsp_label(tree, div, p) == Relation::ParentChild);
  CHECK(tsp_label(tree, p, p) == Relation::ParentChild);

  TokenSequence seq = structural_separate(tree, body, t);
  Rng rng(6);
  ObjectiveConfig cfg;
  cfg.tsp_max_pairs = 100;  // few candidates: exhaust them all
  auto pairs = sample_tsp(seq, tree, rng, cfg);
  bool saw_ad = false;
  for (const auto& pr : pairs) {
    const Token& st = seq.tokens[static_cast<size_t>(pr.structure_pos)];
    if (st.node == body) {
      CHECK(pr.label == Relation::AncestorDescendant);
      saw_ad = true;
    }
  }
  CHECK(saw_ad);
}

TEST_CASE("tsp: labels match the ancestor-set oracle; no duplicate pairs; cap holds") {
  WordTokenizer t = tok();
  for (uint64_t seed = 500; seed < 515; ++seed) {
    oracles::TreeGenOptions opt;
    opt.max_nodes = 60;
    opt.text_prob = 0.5;
    DomTree tree = oracles::random_tree(tags(), seed, opt);
    SeqConfig scfg;
    scfg.max_seq_len = 100000;
    TokenSequence seq = structural_separate(tree, tree.root(), t, scfg);
    bool has_content = false;
    for (const auto& tk : seq.tokens) has_content |= tk.kind == TokenKind::Content;
    if (!has_content) continue;
    oracles::AncestorOracle oracle(tree);
    Rng rng(seed);
    ObjectiveConfig cfg;
    cfg.tsp_max_pairs = 200;
    auto pairs = sample_tsp(seq, tree, rng, cfg);
    std::set<std::pair<int32_t, int32_t>> seen;
    int64_t other = 0;
    for (const auto& pr : pairs) {
      CHECK(seen.insert({pr.structure_pos, pr.content_pos}).second);
      const Token& st = seq.tokens[static_cast<size_t>(pr.structure_pos)];
      const Token& ct = seq.tokens[static_cast<size_t>(pr.content_pos)];
      CHECK(st.kind == TokenKind::Structure);
      CHECK(ct.kind == TokenKind::Content);
      REQUIRE(pr.label == oracle.tsp_relation(st.node, ct.node));
      if (pr.label == Relation::Other) ++other;
    }
    CAPTURE(seed);
    CHECK(static_cast<double>(other) <=
          cfg.tsp_other_cap * static_cast<double>(pairs.size()) + 1e-9);
  }
}

TEST_CASE("tsp: sequences without content are an empty-sample error") {
  WordTokenizer t = tok();
  DomTree tree;
  int body = tree.add_node(tags().id("body"), "body", -1);
  tree.add_node(tags().id("img"), "img", body);
  tree.finalize();
  TokenSequence seq = structural_separate(tree, body, t);
  Rng rng(1);
  CHECK_THROWS_WITH_AS(sample_tsp(seq, tree, rng), doctest::Contains("EmptySample"), Error);
}

TEST_CASE("vmd: zero scale keeps boxes but still labels selections") {
  WordTokenizer t = tok();
  DomTree storage;
  const DomTree* tree;
  TokenSequence seq = long_sequence(tree, storage, t, 100);
  std::vector<NormalizedBox> boxes(seq.tokens.size(),
                                   NormalizedBox::from_corners(100, 400, 200, 600));
  Rng rng(7);
  ObjectiveConfig cfg;
  cfg.vmd_scale = 0.0;
  VmdTarget target = apply_vmd(seq, boxes, t, rng, cfg);
  int labeled = 0;
  for (size_t i = 0; i < boxes.size(); ++i) {
    CHECK(target.boxes[i] == boxes[i]);
    labeled += target.labels[i];
  }
  CHECK(labeled > 0);
}

TEST_CASE("vmd: labels mark exactly the perturbed positions; specials participate") {
  WordTokenizer t = tok();
  DomTree storage;
  const DomTree* tree;
  TokenSequence seq = long_sequence(tree, storage, t, 400);
  std::vector<NormalizedBox> boxes(seq.tokens.size(),
                                   NormalizedBox::from_corners(200, 600, 200, 600));
  Rng rng(8);
  VmdTarget target = apply_vmd(seq, boxes, t, rng);
  bool special_hit = false;
  for (size_t i = 0; i < boxes.size(); ++i) {
    if (target.labels[i]) {
      CHECK(target.boxes[i] != boxes[i]);  // scale 0.5 always moves this box
      if (seq.tokens[i].kind == TokenKind::Special) special_hit = true;
    } else {
      CHECK(target.boxes[i] == boxes[i]);
    }
  }
  (void)special_hit;  // specials are eligible; with 3 specials a hit is not guaranteed
}

TEST_CASE("vmd: [PAD] positions are never perturbed") {
  WordTokenizer t = tok();
  DomTree storage;
  const DomTree* tree;
  TokenSequence seq = long_sequence(tree, storage, t, 50);
  // forge a PAD token into the sequence view
  seq.tokens.back().id = t.specials().pad;
  std::vector<NormalizedBox> boxes(seq.tokens.size(), NormalizedBox::from_corners(0, 1000, 0, 1000));
  for (int trial = 0; trial < 50; ++trial) {
    Rng rng(1000 + static_cast<uint64_t>(trial));
    VmdTarget target = apply_vmd(seq, boxes, t, rng);
    CHECK(target.labels.back() == 0);
  }
}

TEST_CASE("vmd: enlarge/reduce split passes the exact binomial interval") {
  WordTokenizer t = tok();
  DomTree storage;
  const DomTree* tree;
  TokenSequence seq = long_sequence(tree, storage, t, 10000);
  std::vector<NormalizedBox> boxes(seq.tokens.size(),
                                   NormalizedBox::from_corners(300, 500, 300, 500));
  Rng rng(31337);
  VmdTarget target = apply_vmd(seq, boxes, t, rng);
  int64_t enlarged = 0, reduced = 0;
  for (size_t i = 0; i < boxes.size(); ++i) {
    if (!target.labels[i]) continue;
    int delta = (target.boxes[i].w + target.boxes[i].h) - (boxes[i].w + boxes[i].h);
    REQUIRE(delta != 0);
    (delta > 0 ? enlarged : reduced) += 1;
  }
  int64_t selected = enlarged + reduced;
  // every position is eligible here (no PAD in the sequence)
  auto sel_iv = oracles::binomial_central_interval(static_cast<int64_t>(boxes.size()), 0.15, 1e-4);
  CHECK(sel_iv.contains(selected));
  auto split_iv = oracles::binomial_central_interval(selected, 0.5, 1e-4);
  CHECK(split_iv.contains(enlarged));
}

TEST_CASE("objective samples replay bit-identically from their seed") {
  WordTokenizer t = tok();
  oracles::TreeGenOptions opt;
  opt.max_nodes = 40;
  opt.text_prob = 0.5;
  DomTree tree = oracles::random_tree(tags(), 9001, opt);
  SeqConfig scfg;
  scfg.max_seq_len = 100000;
  TokenSequence seq = structural_separate(tree, tree.root(), t, scfg);
  std::vector<NormalizedBox> boxes(seq.tokens.size(),
                                   NormalizedBox::from_corners(100, 900, 100, 900));
  ObjectiveSample a = make_objective_sample(seq, tree, boxes, t, 777);
  ObjectiveSample b = make_objective_sample(seq, tree, boxes, t, 777);
  CHECK(a.mlm.input_ids == b.mlm.input_ids);
  CHECK(a.mlm.labels == b.mlm.labels);
  REQUIRE(a.tsp.size() == b.tsp.size());
  for (size_t i = 0; i < a.tsp.size(); ++i) CHECK(a.tsp[i] == b.tsp[i]);
  CHECK(a.vmd.labels == b.vmd.labels);
  for (size_t i = 0; i < a.vmd.boxes.size(); ++i) CHECK(a.vmd.boxes[i] == b.vmd.boxes[i]);
  ObjectiveSample c = make_objective_sample(seq, tree, boxes, t, 778);
  CHECK(a.mlm.labels != c.mlm.labels);
}
