#pragma once

#include <cstdint>
#include <unordered_set>
#include <vector>

#include "weblm/dom.hpp"
#include "weblm/errors.hpp"
#include "weblm/geometry.hpp"
#include "weblm/rng.hpp"
#include "weblm/sequence.hpp"

namespace weblm {

inline constexpr int32_t kIgnoreLabel = -1;

struct ObjectiveConfig {
  double mlm_p = 0.15;
  double mlm_mask_frac = 0.80;
  double mlm_random_frac = 0.10;
  double vmd_p = 0.15;
  double vmd_scale = 0.5;
  int tsp_max_pairs = 1000;
  double tsp_other_cap = 0.6;

  void validate() const {
    if (!(mlm_p > 0.0 && mlm_p < 1.0)) fail(Errc::ConfigError, "mlm_p must be in (0,1)");
    if (!(vmd_p > 0.0 && vmd_p < 1.0)) fail(Errc::ConfigError, "vmd_p must be in (0,1)");
    if (mlm_mask_frac < 0 || mlm_random_frac < 0 || mlm_mask_frac + mlm_random_frac > 1.0)
      fail(Errc::ConfigError, "mlm mask/random fractions must be non-negative and sum to <= 1");
    if (vmd_scale < 0.0) fail(Errc::ConfigError, "vmd_scale must be >= 0");
    if (tsp_max_pairs < 1) fail(Errc::ConfigError, "tsp_max_pairs must be >= 1");
    if (tsp_other_cap < 0.0 || tsp_other_cap > 1.0)
      fail(Errc::ConfigError, "tsp_other_cap must be in [0,1]");
  }
};

struct MlmTarget {
  std::vector<int32_t> input_ids;  // sequence ids with masking applied
  std::vector<int32_t> labels;     // original id at selected positions, kIgnoreLabel elsewhere
};

struct TspPair {
  int32_t structure_pos = 0;
  int32_t content_pos = 0;
  Relation label = Relation::Other;

  bool operator==(const TspPair&) const = default;
};

struct VmdTarget {
  std::vector<uint8_t> labels;       // 1 = perturbed
  std::vector<NormalizedBox> boxes;  // effective box per position
};

struct ObjectiveSample {
  MlmTarget mlm;
  std::vector<TspPair> tsp;
  VmdTarget vmd;
  uint64_t seed = 0;
};

// BERT-style masking over content positions only: select with probability p,
// then 80/10/10 mask/random/keep. Visual features of masked tokens are left
// untouched.
inline MlmTarget apply_mlm(const TokenSequence& seq, const Tokenizer& tok, Rng& rng,
                           const ObjectiveConfig& cfg = {}) {
  cfg.validate();
  MlmTarget out;
  out.input_ids.reserve(seq.tokens.size());
  out.labels.assign(seq.tokens.size(), kIgnoreLabel);
  for (const Token& t : seq.tokens) out.input_ids.push_back(t.id);
  for (size_t i = 0; i < seq.tokens.size(); ++i) {
    if (seq.tokens[i].kind != TokenKind::Content) continue;
    if (rng.uniform() >= cfg.mlm_p) continue;
    out.labels[i] = seq.tokens[i].id;
    double r = rng.uniform();
    if (r < cfg.mlm_mask_frac) {
      out.input_ids[i] = tok.specials().mask;
    } else if (r < cfg.mlm_mask_frac + cfg.mlm_random_frac) {
      out.input_ids[i] = static_cast<int32_t>(rng.below(static_cast<uint64_t>(tok.vocab_size())));
    }  // else keep the original id
  }
  return out;
}

// Relation of a (structure token, content token) pair. A content token is a
// leaf hanging under its element, so pairing an element with its own text
// reads as parent-child; otherwise this is the plain node relation.
inline Relation tsp_label(const DomTree& tree, int structure_node, int content_node) {
  if (structure_node == content_node) return Relation::ParentChild;
  return node_relation(tree, structure_node, content_node);
}

// Uniform pair sampling without replacement, with the other-relation share
// kept at or below the cap whenever enough non-other pairs exist. Draws are
// bounded by 10 * max_pairs.
inline std::vector<TspPair> sample_tsp(const TokenSequence& seq, const DomTree& tree, Rng& rng,
                                       const ObjectiveConfig& cfg = {}) {
  cfg.validate();
  std::vector<int32_t> structure_pos, content_pos;
  for (const Token& t : seq.tokens) {
    if (t.kind == TokenKind::Structure) structure_pos.push_back(t.pos);
    if (t.kind == TokenKind::Content) content_pos.push_back(t.pos);
  }
  if (content_pos.empty()) fail(Errc::EmptySample, "sequence has no content tokens");
  if (structure_pos.empty()) fail(Errc::EmptySample, "sequence has no structure tokens");

  const uint64_t total = static_cast<uint64_t>(structure_pos.size()) * content_pos.size();
  const uint64_t want = std::min<uint64_t>(static_cast<uint64_t>(cfg.tsp_max_pairs), total);
  const uint64_t budget = 10ULL * static_cast<uint64_t>(cfg.tsp_max_pairs);

  std::vector<TspPair> out;
  out.reserve(want);
  std::unordered_set<uint64_t> seen;
  seen.reserve(want * 2);
  uint64_t draws = 0;
  uint64_t other_count = 0;
  while (out.size() < want && seen.size() < total && draws < budget) {
    ++draws;
    uint64_t si = rng.below(structure_pos.size());
    uint64_t ci = rng.below(content_pos.size());
    uint64_t key = si * content_pos.size() + ci;
    if (!seen.insert(key).second) continue;
    TspPair pair;
    pair.structure_pos = structure_pos[static_cast<size_t>(si)];
    pair.content_pos = content_pos[static_cast<size_t>(ci)];
    const Token& st = seq.tokens[static_cast<size_t>(pair.structure_pos)];
    const Token& ct = seq.tokens[static_cast<size_t>(pair.content_pos)];
    pair.label = tsp_label(tree, st.node, ct.node);
    if (pair.label == Relation::Other) {
      if (static_cast<double>(other_count + 1) >
          cfg.tsp_other_cap * static_cast<double>(out.size() + 1))
        continue;  // over the cap: reject and resample
      ++other_count;
    }
    out.push_back(pair);
  }
  return out;
}

// Any position except [PAD] may be perturbed; [CLS]/[SEP] participate since
// they carry the segment box.
inline VmdTarget apply_vmd(const TokenSequence& seq, const std::vector<NormalizedBox>& boxes,
                           const Tokenizer& tok, Rng& rng, const ObjectiveConfig& cfg = {}) {
  cfg.validate();
  if (boxes.size() != seq.tokens.size())
    fail(Errc::AlignmentError, "boxes are not aligned 1:1 with sequence positions");
  VmdTarget out;
  out.labels.assign(seq.tokens.size(), 0);
  out.boxes = boxes;
  for (size_t i = 0; i < seq.tokens.size(); ++i) {
    if (seq.tokens[i].id == tok.specials().pad) continue;
    if (rng.uniform() >= cfg.vmd_p) continue;
    out.labels[i] = 1;
    PerturbDirection dir =
        rng.uniform() < 0.5 ? PerturbDirection::Enlarge : PerturbDirection::Reduce;
    out.boxes[i] = perturb_box(boxes[i], dir, cfg.vmd_scale);
  }
  return out;
}

// One pre-training record's worth of targets, reproducible from the seed.
// Each task draws from its own derived stream.
inline ObjectiveSample make_objective_sample(const TokenSequence& seq, const DomTree& tree,
                                             const std::vector<NormalizedBox>& boxes,
                                             const Tokenizer& tok, uint64_t seed,
                                             const ObjectiveConfig& cfg = {}) {
  ObjectiveSample sample;
  sample.seed = seed;
  Rng mlm_rng(Rng::mix(seed, 0xA11CE));
  Rng tsp_rng(Rng::mix(seed, 0xB0B));
  Rng vmd_rng(Rng::mix(seed, 0xCAFE));
  sample.mlm = apply_mlm(seq, tok, mlm_rng, cfg);
  sample.tsp = sample_tsp(seq, tree, tsp_rng, cfg);
  sample.vmd = apply_vmd(seq, boxes, tok, vmd_rng, cfg);
  return sample;
}

}  // namespace weblm
