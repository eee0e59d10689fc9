#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "weblm/errors.hpp"
#include "weblm/geometry.hpp"
#include "weblm/objectives.hpp"
#include "weblm/rng.hpp"
#include "weblm/sequence.hpp"
#include "weblm/tags.hpp"
#include "weblm/tensor.hpp"
#include "weblm/visual.hpp"

namespace weblm {

inline constexpr double kLayerNormEps = 1e-12;

struct ModelConfig {
  int hidden = 48;
  int layers = 2;
  int heads = 4;
  int ffn = 0;  // 0 -> 4 * hidden
  int vocab = 0;
  int tags = 0;
  int max_pos = 512;
  int grid = 14;
  int image_side = 224;
  double dropout = 0.0;
  double init_std = 0.02;
  uint64_t seed = 42;
  double w_mlm = 1.0;
  double w_tsp = 1.0;
  double w_vmd = 1.0;

  int ffn_dim() const { return ffn > 0 ? ffn : 4 * hidden; }
  int box_dim() const { return hidden / 6; }

  void validate() const {
    if (hidden < 6 || hidden % 6 != 0)
      fail(Errc::ConfigError, "hidden dim must be divisible by 6");
    if (heads < 1 || hidden % heads != 0)
      fail(Errc::ConfigError, "hidden dim must be divisible by the head count");
    if (layers < 0) fail(Errc::ConfigError, "layer count must be >= 0");
    if (vocab < kReservedVocabSlots) fail(Errc::ConfigError, "vocab size too small");
    if (tags < 1) fail(Errc::ConfigError, "tag vocab size must be >= 1");
    if (max_pos < 1) fail(Errc::ConfigError, "max positions must be >= 1");
    if (grid < 1) fail(Errc::ConfigError, "grid must be >= 1");
    if (image_side < grid) fail(Errc::ConfigError, "image side must be >= grid");
    if (dropout != 0.0) fail(Errc::ConfigError, "only dropout 0 is supported");
  }
};

struct LayerParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln1_g, ln1_b;
  Tensor w1, b1, w2, b2;
  Tensor ln2_g, ln2_b;
};

struct ModelParams {
  ModelConfig cfg;
  Tensor tok, tag, pos1d, seg;  // token / tag / 1D position / segment tables
  Tensor xtab, ytab;            // 2D position tables, 1001 x hidden/6 each
  Tensor patch_w, patch_b;      // patch extractor projection
  std::vector<LayerParams> layers;
  Tensor mlm_w, mlm_b;  // vocab x C
  Tensor tsp_w, tsp_b;  // 3 x 2C
  Tensor vmd_w, vmd_b;  // 2 x C

  template <class F>
  void visit(F&& f) {
    f("embed.tok", tok);
    f("embed.tag", tag);
    f("embed.pos1d", pos1d);
    f("embed.seg", seg);
    f("embed.xtab", xtab);
    f("embed.ytab", ytab);
    f("embed.patch_w", patch_w);
    f("embed.patch_b", patch_b);
    for (size_t l = 0; l < layers.size(); ++l) {
      std::string p = "layer." + std::to_string(l) + ".";
      LayerParams& L = layers[l];
      f(p + "wq", L.wq); f(p + "bq", L.bq);
      f(p + "wk", L.wk); f(p + "bk", L.bk);
      f(p + "wv", L.wv); f(p + "bv", L.bv);
      f(p + "wo", L.wo); f(p + "bo", L.bo);
      f(p + "ln1_g", L.ln1_g); f(p + "ln1_b", L.ln1_b);
      f(p + "w1", L.w1); f(p + "b1", L.b1);
      f(p + "w2", L.w2); f(p + "b2", L.b2);
      f(p + "ln2_g", L.ln2_g); f(p + "ln2_b", L.ln2_b);
    }
    f("head.mlm_w", mlm_w); f("head.mlm_b", mlm_b);
    f("head.tsp_w", tsp_w); f("head.tsp_b", tsp_b);
    f("head.vmd_w", vmd_w); f("head.vmd_b", vmd_b);
  }

  template <class F>
  void visit(F&& f) const {
    const_cast<ModelParams*>(this)->visit(
        [&](const std::string& name, Tensor& t) { f(name, const_cast<const Tensor&>(t)); });
  }

  size_t param_count() const {
    size_t n = 0;
    visit([&](const std::string&, const Tensor& t) { n += t.size(); });
    return n;
  }

  static ModelParams zeros_like(const ModelParams& other) {
    ModelParams out = shaped(other.cfg);
    return out;
  }

  static ModelParams shaped(const ModelConfig& cfg) {
    cfg.validate();
    ModelParams p;
    p.cfg = cfg;
    const int C = cfg.hidden;
    const int F = cfg.ffn_dim();
    const int B = cfg.box_dim();
    p.tok = Tensor::zeros({cfg.vocab, C});
    p.tag = Tensor::zeros({cfg.tags, C});
    p.pos1d = Tensor::zeros({cfg.max_pos, C});
    p.seg = Tensor::zeros({2, C});
    p.xtab = Tensor::zeros({1001, B});
    p.ytab = Tensor::zeros({1001, B});
    p.patch_w = Tensor::zeros({C, kPatchFeatureDim});
    p.patch_b = Tensor::zeros({C});
    p.layers.resize(static_cast<size_t>(cfg.layers));
    for (auto& L : p.layers) {
      L.wq = Tensor::zeros({C, C}); L.bq = Tensor::zeros({C});
      L.wk = Tensor::zeros({C, C}); L.bk = Tensor::zeros({C});
      L.wv = Tensor::zeros({C, C}); L.bv = Tensor::zeros({C});
      L.wo = Tensor::zeros({C, C}); L.bo = Tensor::zeros({C});
      L.ln1_g = Tensor::zeros({C}); L.ln1_b = Tensor::zeros({C});
      L.w1 = Tensor::zeros({F, C}); L.b1 = Tensor::zeros({F});
      L.w2 = Tensor::zeros({C, F}); L.b2 = Tensor::zeros({C});
      L.ln2_g = Tensor::zeros({C}); L.ln2_b = Tensor::zeros({C});
    }
    p.mlm_w = Tensor::zeros({cfg.vocab, C}); p.mlm_b = Tensor::zeros({cfg.vocab});
    p.tsp_w = Tensor::zeros({3, 2 * C}); p.tsp_b = Tensor::zeros({3});
    p.vmd_w = Tensor::zeros({2, C}); p.vmd_b = Tensor::zeros({2});
    return p;
  }

  // Tag rows come from the sidecar table (deterministic per-name fallback for
  // missing tags) and stay trainable. Everything else is seeded normal init;
  // layer norm gains start at 1.
  static ModelParams init(const ModelConfig& cfg, const std::vector<std::string>& tag_names,
                          const TagVectorTable& tag_vectors = {}) {
    ModelParams p = shaped(cfg);
    if (static_cast<int>(tag_names.size()) != cfg.tags)
      fail(Errc::ConfigError, "tag name list does not match the configured tag vocab size");
    Rng rng(cfg.seed);
    const double std_dev = cfg.init_std;
    p.visit([&](const std::string& name, Tensor& t) {
      if (name == "embed.tag") return;                       // sidecar below
      if (name.find("ln1_g") != std::string::npos ||
          name.find("ln2_g") != std::string::npos) {
        t.fill(1.0);
        return;
      }
      if (name.find("_b") != std::string::npos || name.find(".b") != std::string::npos) return;
      for (double& x : t.v) x = rng.normal() * std_dev;
    });
    for (int r = 0; r < cfg.tags; ++r) {
      std::vector<double> row = tag_vectors.get(tag_names[static_cast<size_t>(r)], cfg.hidden);
      for (int c = 0; c < cfg.hidden; ++c) p.tag.at(r, c) = row[static_cast<size_t>(c)];
    }
    return p;
  }
};

// Concatenated [x(x0), x(x1), x(w), y(y0), y(y1), y(h)] table rows.
inline std::vector<double> box_embed(const NormalizedBox& box, const Tensor& xtab,
                                     const Tensor& ytab) {
  if (xtab.rows() != 1001 || ytab.rows() != 1001 || xtab.cols() != ytab.cols())
    fail(Errc::ConfigError, "2D position tables must be 1001 rows of equal width");
  const int B = xtab.cols();
  std::vector<double> out(static_cast<size_t>(6 * B));
  const int coords[6] = {box.x0, box.x1, box.w, box.y0, box.y1, box.h};
  for (int part = 0; part < 6; ++part) {
    const Tensor& table = part < 3 ? xtab : ytab;
    const double* rowp = table.row(coords[part]);
    for (int k = 0; k < B; ++k) out[static_cast<size_t>(part * B + k)] = rowp[k];
  }
  return out;
}

struct TspPairInput {
  int32_t structure_pos = 0;
  int32_t content_pos = 0;
  uint8_t label = 0;  // 0 parent-child, 1 ancestor-descendant, 2 other
};

inline uint8_t relation_to_class(Relation r) {
  switch (r) {
    case Relation::ParentChild: return 0;
    case Relation::AncestorDescendant: return 1;
    case Relation::Other: return 2;
  }
  return 2;
}

// One record as the encoder consumes it: masked ids, per-token metadata,
// effective boxes, objective targets, and the raster patch features.
struct ModelInput {
  std::vector<int32_t> ids;
  std::vector<int32_t> tags;
  std::vector<uint8_t> segs;  // 0 = S, 1 = C
  std::vector<NormalizedBox> boxes;
  std::vector<int32_t> mlm_labels;  // kIgnoreLabel where unsupervised
  std::vector<TspPairInput> pairs;
  std::vector<uint8_t> vmd_labels;
  int32_t pad_id = 0;
  const PatchFeatures* patches = nullptr;

  int length() const { return static_cast<int>(ids.size()); }

  void check(const ModelConfig& cfg) const {
    const size_t n = ids.size();
    if (n == 0) fail(Errc::AlignmentError, "empty input");
    if (tags.size() != n || segs.size() != n || boxes.size() != n ||
        mlm_labels.size() != n || vmd_labels.size() != n)
      fail(Errc::AlignmentError, "per-token arrays have mismatched lengths");
    if (static_cast<int>(n) > cfg.max_pos)
      fail(Errc::AlignmentError, "sequence longer than max positions");
    for (size_t i = 0; i < n; ++i) {
      if (ids[i] < 0 || ids[i] >= cfg.vocab) fail(Errc::AlignmentError, "token id out of range");
      if (tags[i] < 0 || tags[i] >= cfg.tags) fail(Errc::AlignmentError, "tag id out of range");
      if (segs[i] > 1) fail(Errc::AlignmentError, "segment id out of range");
      if (!boxes[i].valid()) fail(Errc::AlignmentError, "invalid normalized box");
      if (mlm_labels[i] >= cfg.vocab) fail(Errc::AlignmentError, "mlm label out of range");
    }
    for (const auto& p : pairs) {
      if (p.structure_pos < 0 || static_cast<size_t>(p.structure_pos) >= n ||
          p.content_pos < 0 || static_cast<size_t>(p.content_pos) >= n || p.label > 2)
        fail(Errc::AlignmentError, "tsp pair out of range");
    }
    if (!patches) fail(Errc::AlignmentError, "input has no patch features");
    if (patches->p != cfg.grid) fail(Errc::AlignmentError, "patch grid does not match config");
  }
};

struct Losses {
  double mlm = 0.0;
  double tsp = 0.0;
  double vmd = 0.0;
  double total = 0.0;
};

namespace nn {

// y = x * W^T + b. W is out x in row-major.
inline void linear_forward(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& y) {
  const int n = x.rows(), in = x.cols(), out = w.rows();
  y = Tensor::zeros({n, out});
  for (int i = 0; i < n; ++i) {
    const double* xr = x.row(i);
    double* yr = y.row(i);
    for (int o = 0; o < out; ++o) {
      const double* wr = w.row(o);
      double acc = b.v[static_cast<size_t>(o)];
      for (int k = 0; k < in; ++k) acc += xr[k] * wr[k];
      yr[o] = acc;
    }
  }
}

inline void linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dx,
                            Tensor& dw, Tensor& db, bool accumulate_dx) {
  const int n = x.rows(), in = x.cols(), out = w.rows();
  if (!accumulate_dx) dx = Tensor::zeros({n, in});
  for (int i = 0; i < n; ++i) {
    const double* dyr = dy.row(i);
    const double* xr = x.row(i);
    double* dxr = dx.row(i);
    for (int o = 0; o < out; ++o) {
      const double g = dyr[o];
      if (g == 0.0) continue;
      const double* wr = w.row(o);
      double* dwr = dw.row(o);
      for (int k = 0; k < in; ++k) {
        dxr[k] += g * wr[k];
        dwr[k] += g * xr[k];
      }
      db.v[static_cast<size_t>(o)] += g;
    }
  }
}

struct LayerNormCache {
  Tensor xhat;               // n x C
  std::vector<double> rstd;  // n
};

inline void layernorm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                              Tensor& y, LayerNormCache& cache) {
  const int n = x.rows(), c = x.cols();
  y = Tensor::zeros({n, c});
  cache.xhat = Tensor::zeros({n, c});
  cache.rstd.assign(static_cast<size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    const double* xr = x.row(i);
    double mean = 0.0;
    for (int k = 0; k < c; ++k) mean += xr[k];
    mean /= c;
    double var = 0.0;
    for (int k = 0; k < c; ++k) {
      double d = xr[k] - mean;
      var += d * d;
    }
    var /= c;
    double rstd = 1.0 / std::sqrt(var + kLayerNormEps);
    cache.rstd[static_cast<size_t>(i)] = rstd;
    double* xh = cache.xhat.row(i);
    double* yr = y.row(i);
    for (int k = 0; k < c; ++k) {
      xh[k] = (xr[k] - mean) * rstd;
      yr[k] = xh[k] * gamma.v[static_cast<size_t>(k)] + beta.v[static_cast<size_t>(k)];
    }
  }
}

inline void layernorm_backward(const LayerNormCache& cache, const Tensor& gamma, const Tensor& dy,
                               Tensor& dx, Tensor& dgamma, Tensor& dbeta) {
  const int n = dy.rows(), c = dy.cols();
  dx = Tensor::zeros({n, c});
  for (int i = 0; i < n; ++i) {
    const double* dyr = dy.row(i);
    const double* xh = cache.xhat.row(i);
    double mean_dxh = 0.0, mean_dxh_xh = 0.0;
    for (int k = 0; k < c; ++k) {
      double dxh = dyr[k] * gamma.v[static_cast<size_t>(k)];
      mean_dxh += dxh;
      mean_dxh_xh += dxh * xh[k];
      dgamma.v[static_cast<size_t>(k)] += dyr[k] * xh[k];
      dbeta.v[static_cast<size_t>(k)] += dyr[k];
    }
    mean_dxh /= c;
    mean_dxh_xh /= c;
    const double rstd = cache.rstd[static_cast<size_t>(i)];
    double* dxr = dx.row(i);
    for (int k = 0; k < c; ++k) {
      double dxh = dyr[k] * gamma.v[static_cast<size_t>(k)];
      dxr[k] = rstd * (dxh - mean_dxh - xh[k] * mean_dxh_xh);
    }
  }
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475244)); }

inline double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865475244));
  const double pdf = 0.3989422804014326779 * std::exp(-0.5 * x * x);
  return cdf + x * pdf;
}

// Numerically stable log-softmax cross entropy; returns loss, fills probs.
inline double cross_entropy(const double* logits, int n, int target, double* probs) {
  double m = logits[0];
  for (int i = 1; i < n; ++i) m = std::max(m, logits[i]);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    probs[i] = std::exp(logits[i] - m);
    sum += probs[i];
  }
  for (int i = 0; i < n; ++i) probs[i] /= sum;
  return m + std::log(sum) - logits[target];
}

}  // namespace nn

struct LayerCache {
  Tensor x, q, k, v;
  Tensor probs;  // heads x n x n, flattened
  Tensor ctx, attn;
  Tensor r1, a;
  nn::LayerNormCache ln1;
  Tensor ff1, act, ff2;
  Tensor r2, out;
  nn::LayerNormCache ln2;
};

struct EncoderCache {
  std::vector<LayerCache> layers;
};

// Post-norm BERT block: x -> LN(x + MHA(x)) -> LN(a + FFN(a)).
inline Tensor encoder_forward(const ModelParams& params, const Tensor& x,
                              EncoderCache* cache = nullptr) {
  const ModelConfig& cfg = params.cfg;
  const int n = x.rows(), C = cfg.hidden, H = cfg.heads, dh = C / H;
  for (double v : x.v)
    if (!std::isfinite(v)) fail(Errc::NumericsError, "non-finite encoder input");
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor cur = x;
  if (cache) cache->layers.resize(params.layers.size());
  for (size_t l = 0; l < params.layers.size(); ++l) {
    const LayerParams& L = params.layers[l];
    LayerCache local;
    LayerCache& cc = cache ? cache->layers[l] : local;
    cc.x = cur;
    nn::linear_forward(cur, L.wq, L.bq, cc.q);
    nn::linear_forward(cur, L.wk, L.bk, cc.k);
    nn::linear_forward(cur, L.wv, L.bv, cc.v);
    cc.probs = Tensor::zeros({H * n, n});
    cc.ctx = Tensor::zeros({n, C});
    std::vector<double> scores(static_cast<size_t>(n));
    for (int h = 0; h < H; ++h) {
      const int off = h * dh;
      for (int i = 0; i < n; ++i) {
        const double* qi = cc.q.row(i) + off;
        double m = -1e300;
        for (int j = 0; j < n; ++j) {
          const double* kj = cc.k.row(j) + off;
          double s = 0.0;
          for (int d = 0; d < dh; ++d) s += qi[d] * kj[d];
          s *= scale;
          scores[static_cast<size_t>(j)] = s;
          m = std::max(m, s);
        }
        double* prow = cc.probs.row(h * n + i);
        double sum = 0.0;
        for (int j = 0; j < n; ++j) {
          double e = std::exp(scores[static_cast<size_t>(j)] - m);
          prow[j] = e;
          sum += e;
        }
        const double inv = 1.0 / sum;
        double* ctxi = cc.ctx.row(i) + off;
        for (int j = 0; j < n; ++j) {
          prow[j] *= inv;
          const double p = prow[j];
          if (p == 0.0) continue;
          const double* vj = cc.v.row(j) + off;
          for (int d = 0; d < dh; ++d) ctxi[d] += p * vj[d];
        }
      }
    }
    nn::linear_forward(cc.ctx, L.wo, L.bo, cc.attn);
    cc.r1 = Tensor::zeros({n, C});
    for (size_t i = 0; i < cc.r1.v.size(); ++i) cc.r1.v[i] = cur.v[i] + cc.attn.v[i];
    nn::layernorm_forward(cc.r1, L.ln1_g, L.ln1_b, cc.a, cc.ln1);
    nn::linear_forward(cc.a, L.w1, L.b1, cc.ff1);
    cc.act = Tensor::zeros({n, cfg.ffn_dim()});
    for (size_t i = 0; i < cc.ff1.v.size(); ++i) cc.act.v[i] = nn::gelu(cc.ff1.v[i]);
    nn::linear_forward(cc.act, L.w2, L.b2, cc.ff2);
    cc.r2 = Tensor::zeros({n, C});
    for (size_t i = 0; i < cc.r2.v.size(); ++i) cc.r2.v[i] = cc.a.v[i] + cc.ff2.v[i];
    nn::layernorm_forward(cc.r2, L.ln2_g, L.ln2_b, cc.out, cc.ln2);
    cur = cc.out;
  }
  return cur;
}

// Reverse pass through the block stack; returns d(input) and accumulates
// parameter gradients.
inline Tensor encoder_backward(const ModelParams& params, const EncoderCache& cache,
                               const Tensor& d_out, ModelParams& grads) {
  const ModelConfig& cfg = params.cfg;
  const int H = cfg.heads, C = cfg.hidden, dh = C / H;
  Tensor d_cur = d_out;
  for (size_t li = params.layers.size(); li-- > 0;) {
    const LayerParams& L = params.layers[li];
    LayerParams& G = grads.layers[li];
    const LayerCache& cc = cache.layers[li];
    const int n = cc.x.rows();

    Tensor d_r2;
    nn::layernorm_backward(cc.ln2, L.ln2_g, d_cur, d_r2, G.ln2_g, G.ln2_b);
    Tensor d_a = d_r2;  // residual branch
    Tensor d_act;
    nn::linear_backward(cc.act, L.w2, d_r2, d_act, G.w2, G.b2, false);
    Tensor d_ff1 = Tensor::zeros({n, cfg.ffn_dim()});
    for (size_t i = 0; i < d_ff1.v.size(); ++i)
      d_ff1.v[i] = d_act.v[i] * nn::gelu_grad(cc.ff1.v[i]);
    nn::linear_backward(cc.a, L.w1, d_ff1, d_a, G.w1, G.b1, true);
    Tensor d_r1;
    nn::layernorm_backward(cc.ln1, L.ln1_g, d_a, d_r1, G.ln1_g, G.ln1_b);
    Tensor d_x = d_r1;  // residual branch
    Tensor d_ctx;
    nn::linear_backward(cc.ctx, L.wo, d_r1, d_ctx, G.wo, G.bo, false);

    Tensor d_q = Tensor::zeros({n, C});
    Tensor d_k = Tensor::zeros({n, C});
    Tensor d_v = Tensor::zeros({n, C});
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<double> d_p(static_cast<size_t>(n));
    for (int h = 0; h < H; ++h) {
      const int off = h * dh;
      for (int i = 0; i < n; ++i) {
        const double* prow = cc.probs.row(h * n + i);
        const double* dctxi = d_ctx.row(i) + off;
        double dot = 0.0;
        for (int j = 0; j < n; ++j) {
          const double* vj = cc.v.row(j) + off;
          double acc = 0.0;
          for (int d = 0; d < dh; ++d) acc += dctxi[d] * vj[d];
          d_p[static_cast<size_t>(j)] = acc;
          dot += acc * prow[j];
          double* dvj = d_v.row(j) + off;
          const double p = prow[j];
          for (int d = 0; d < dh; ++d) dvj[d] += p * dctxi[d];
        }
        // softmax jacobian, then score gradients feed q and k
        double* dqi = d_q.row(i) + off;
        const double* qi = cc.q.row(i) + off;
        for (int j = 0; j < n; ++j) {
          double ds = prow[j] * (d_p[static_cast<size_t>(j)] - dot) * scale;
          if (ds == 0.0) continue;
          const double* kj = cc.k.row(j) + off;
          double* dkj = d_k.row(j) + off;
          for (int d = 0; d < dh; ++d) {
            dqi[d] += ds * kj[d];
            dkj[d] += ds * qi[d];
          }
        }
      }
    }
    nn::linear_backward(cc.x, L.wq, d_q, d_x, G.wq, G.bq, true);
    nn::linear_backward(cc.x, L.wk, d_k, d_x, G.wk, G.bk, true);
    nn::linear_backward(cc.x, L.wv, d_v, d_x, G.wv, G.bv, true);
    d_cur = std::move(d_x);
  }
  return d_cur;
}

struct EmbedCache {
  FeatureGrid grid;
  std::vector<std::vector<int>> cells;  // pooled cell set per token
  Tensor x0;
};

// x_i = TokEmb + TagEmb + PosEmb1D + SegEmb + RoS pooling + box embedding.
inline Tensor embed_input(const ModelParams& params, const ModelInput& input,
                          EmbedCache* cache = nullptr) {
  const ModelConfig& cfg = params.cfg;
  input.check(cfg);
  const int n = input.length();
  const int C = cfg.hidden;
  const int B = cfg.box_dim();

  EmbedCache local;
  EmbedCache& ec = cache ? *cache : local;
  ec.grid = project_patch_features(*input.patches, std::span<const double>(params.patch_w.v),
                                   std::span<const double>(params.patch_b.v));
  ec.cells.resize(static_cast<size_t>(n));

  Tensor x = Tensor::zeros({n, C});
  for (int i = 0; i < n; ++i) {
    double* xr = x.row(i);
    const double* tokr = params.tok.row(input.ids[static_cast<size_t>(i)]);
    const double* tagr = params.tag.row(input.tags[static_cast<size_t>(i)]);
    const double* posr = params.pos1d.row(i);
    const double* segr = params.seg.row(input.segs[static_cast<size_t>(i)]);
    for (int c = 0; c < C; ++c) xr[c] = tokr[c] + tagr[c] + posr[c] + segr[c];

    const NormalizedBox& box = input.boxes[static_cast<size_t>(i)];
    ec.cells[static_cast<size_t>(i)] = ros_cells(cfg.grid, box);
    const auto& cells = ec.cells[static_cast<size_t>(i)];
    const double inv = 1.0 / static_cast<double>(cells.size());
    for (int idx : cells) {
      auto cell = ec.grid.cell(idx);
      for (int c = 0; c < C; ++c) xr[c] += inv * cell[static_cast<size_t>(c)];
    }

    const int coords[6] = {box.x0, box.x1, box.w, box.y0, box.y1, box.h};
    for (int part = 0; part < 6; ++part) {
      const Tensor& table = part < 3 ? params.xtab : params.ytab;
      const double* rowp = table.row(coords[part]);
      double* dst = xr + part * B;
      for (int k = 0; k < B; ++k) dst[k] += rowp[k];
    }
  }
  if (cache) cache->x0 = x;
  return x;
}

inline void embed_backward(const ModelParams& params, const ModelInput& input,
                           const EmbedCache& cache, const Tensor& d_x, ModelParams& grads) {
  const ModelConfig& cfg = params.cfg;
  const int n = input.length();
  const int C = cfg.hidden;
  const int B = cfg.box_dim();

  Tensor d_grid = Tensor::zeros({cfg.grid * cfg.grid, C});
  for (int i = 0; i < n; ++i) {
    const double* dxr = d_x.row(i);
    double* dtok = grads.tok.row(input.ids[static_cast<size_t>(i)]);
    double* dtag = grads.tag.row(input.tags[static_cast<size_t>(i)]);
    double* dpos = grads.pos1d.row(i);
    double* dseg = grads.seg.row(input.segs[static_cast<size_t>(i)]);
    for (int c = 0; c < C; ++c) {
      dtok[c] += dxr[c];
      dtag[c] += dxr[c];
      dpos[c] += dxr[c];
      dseg[c] += dxr[c];
    }
    const auto& cells = cache.cells[static_cast<size_t>(i)];
    const double inv = 1.0 / static_cast<double>(cells.size());
    for (int idx : cells) {
      double* dgc = d_grid.row(idx);
      for (int c = 0; c < C; ++c) dgc[c] += inv * dxr[c];
    }
    const NormalizedBox& box = input.boxes[static_cast<size_t>(i)];
    const int coords[6] = {box.x0, box.x1, box.w, box.y0, box.y1, box.h};
    for (int part = 0; part < 6; ++part) {
      Tensor& table = part < 3 ? grads.xtab : grads.ytab;
      double* rowp = table.row(coords[part]);
      const double* src = dxr + part * B;
      for (int k = 0; k < B; ++k) rowp[k] += src[k];
    }
  }
  // grid -> patch projection
  const int cells_total = cfg.grid * cfg.grid;
  for (int idx = 0; idx < cells_total; ++idx) {
    auto f = input.patches->cell(idx);
    const double* dgc = d_grid.row(idx);
    for (int o = 0; o < C; ++o) {
      const double g = dgc[o];
      if (g == 0.0) continue;
      double* dwr = grads.patch_w.row(o);
      for (int k = 0; k < kPatchFeatureDim; ++k) dwr[k] += g * f[static_cast<size_t>(k)];
      grads.patch_b.v[static_cast<size_t>(o)] += g;
    }
  }
}

namespace detail_model {

struct HeadCaches {
  std::vector<int> mlm_rows;
  Tensor mlm_probs;  // labeled rows x vocab
  Tensor tsp_probs;  // pairs x 3
  Tensor tsp_inputs; // pairs x 2C
  std::vector<int> vmd_rows;
  Tensor vmd_probs;  // vmd rows x 2
};

}  // namespace detail_model

// Mean cross-entropy per task over its supervised positions; absent targets
// contribute zero. Reported values are unweighted; the training objective is
// the configured weighted sum.
inline Losses compute_losses(const ModelParams& params, const Tensor& hidden,
                             const ModelInput& input,
                             detail_model::HeadCaches* cache = nullptr) {
  const ModelConfig& cfg = params.cfg;
  const int n = hidden.rows();
  const int C = cfg.hidden;
  detail_model::HeadCaches local;
  detail_model::HeadCaches& hc = cache ? *cache : local;
  Losses out;

  for (int i = 0; i < n; ++i)
    if (input.mlm_labels[static_cast<size_t>(i)] != kIgnoreLabel) hc.mlm_rows.push_back(i);
  if (!hc.mlm_rows.empty()) {
    hc.mlm_probs = Tensor::zeros({static_cast<int>(hc.mlm_rows.size()), cfg.vocab});
    std::vector<double> logits(static_cast<size_t>(cfg.vocab));
    double sum = 0.0;
    for (size_t r = 0; r < hc.mlm_rows.size(); ++r) {
      const int row = hc.mlm_rows[r];
      const double* h = hidden.row(row);
      for (int v = 0; v < cfg.vocab; ++v) {
        const double* wr = params.mlm_w.row(v);
        double acc = params.mlm_b.v[static_cast<size_t>(v)];
        for (int k = 0; k < C; ++k) acc += wr[k] * h[k];
        logits[static_cast<size_t>(v)] = acc;
      }
      sum += nn::cross_entropy(logits.data(), cfg.vocab,
                               input.mlm_labels[static_cast<size_t>(row)],
                               hc.mlm_probs.row(static_cast<int>(r)));
    }
    out.mlm = sum / static_cast<double>(hc.mlm_rows.size());
  }

  if (!input.pairs.empty()) {
    hc.tsp_probs = Tensor::zeros({static_cast<int>(input.pairs.size()), 3});
    hc.tsp_inputs = Tensor::zeros({static_cast<int>(input.pairs.size()), 2 * C});
    double sum = 0.0;
    double logits[3];
    for (size_t r = 0; r < input.pairs.size(); ++r) {
      const TspPairInput& pair = input.pairs[r];
      double* z = hc.tsp_inputs.row(static_cast<int>(r));
      const double* hs = hidden.row(pair.structure_pos);
      const double* hcn = hidden.row(pair.content_pos);
      for (int k = 0; k < C; ++k) {
        z[k] = hs[k];
        z[C + k] = hcn[k];
      }
      for (int o = 0; o < 3; ++o) {
        const double* wr = params.tsp_w.row(o);
        double acc = params.tsp_b.v[static_cast<size_t>(o)];
        for (int k = 0; k < 2 * C; ++k) acc += wr[k] * z[k];
        logits[o] = acc;
      }
      sum += nn::cross_entropy(logits, 3, pair.label, hc.tsp_probs.row(static_cast<int>(r)));
    }
    out.tsp = sum / static_cast<double>(input.pairs.size());
  }

  for (int i = 0; i < n; ++i)
    if (input.ids[static_cast<size_t>(i)] != input.pad_id) hc.vmd_rows.push_back(i);
  if (!hc.vmd_rows.empty()) {
    hc.vmd_probs = Tensor::zeros({static_cast<int>(hc.vmd_rows.size()), 2});
    double sum = 0.0;
    double logits[2];
    for (size_t r = 0; r < hc.vmd_rows.size(); ++r) {
      const int row = hc.vmd_rows[r];
      const double* h = hidden.row(row);
      for (int o = 0; o < 2; ++o) {
        const double* wr = params.vmd_w.row(o);
        double acc = params.vmd_b.v[static_cast<size_t>(o)];
        for (int k = 0; k < C; ++k) acc += wr[k] * h[k];
        logits[o] = acc;
      }
      sum += nn::cross_entropy(logits, 2, input.vmd_labels[static_cast<size_t>(row)],
                               hc.vmd_probs.row(static_cast<int>(r)));
    }
    out.vmd = sum / static_cast<double>(hc.vmd_rows.size());
  }

  out.total = cfg.w_mlm * out.mlm + cfg.w_tsp * out.tsp + cfg.w_vmd * out.vmd;
  if (!std::isfinite(out.mlm)) fail(Errc::NumericsError, "non-finite mlm loss");
  if (!std::isfinite(out.tsp)) fail(Errc::NumericsError, "non-finite tsp loss");
  if (!std::isfinite(out.vmd)) fail(Errc::NumericsError, "non-finite vmd loss");
  return out;
}

inline void losses_backward(const ModelParams& params, const Tensor& hidden,
                            const ModelInput& input, const detail_model::HeadCaches& hc,
                            ModelParams& grads, Tensor& d_hidden) {
  const ModelConfig& cfg = params.cfg;
  const int C = cfg.hidden;
  d_hidden = Tensor::zeros({hidden.rows(), C});

  if (!hc.mlm_rows.empty()) {
    const double w = cfg.w_mlm / static_cast<double>(hc.mlm_rows.size());
    for (size_t r = 0; r < hc.mlm_rows.size(); ++r) {
      const int row = hc.mlm_rows[r];
      const int target = input.mlm_labels[static_cast<size_t>(row)];
      const double* probs = hc.mlm_probs.row(static_cast<int>(r));
      const double* h = hidden.row(row);
      double* dh = d_hidden.row(row);
      for (int v = 0; v < cfg.vocab; ++v) {
        double dz = probs[v] * w;
        if (v == target) dz -= w;
        if (dz == 0.0) continue;
        const double* wr = params.mlm_w.row(v);
        double* dwr = grads.mlm_w.row(v);
        for (int k = 0; k < C; ++k) {
          dh[k] += dz * wr[k];
          dwr[k] += dz * h[k];
        }
        grads.mlm_b.v[static_cast<size_t>(v)] += dz;
      }
    }
  }

  if (!input.pairs.empty()) {
    const double w = cfg.w_tsp / static_cast<double>(input.pairs.size());
    for (size_t r = 0; r < input.pairs.size(); ++r) {
      const TspPairInput& pair = input.pairs[r];
      const double* probs = hc.tsp_probs.row(static_cast<int>(r));
      const double* z = hc.tsp_inputs.row(static_cast<int>(r));
      double* dhs = d_hidden.row(pair.structure_pos);
      double* dhc = d_hidden.row(pair.content_pos);
      for (int o = 0; o < 3; ++o) {
        double dz = probs[o] * w;
        if (o == pair.label) dz -= w;
        const double* wr = params.tsp_w.row(o);
        double* dwr = grads.tsp_w.row(o);
        for (int k = 0; k < C; ++k) {
          dhs[k] += dz * wr[k];
          dhc[k] += dz * wr[C + k];
          dwr[k] += dz * z[k];
          dwr[C + k] += dz * z[C + k];
        }
        grads.tsp_b.v[static_cast<size_t>(o)] += dz;
      }
    }
  }

  if (!hc.vmd_rows.empty()) {
    const double w = cfg.w_vmd / static_cast<double>(hc.vmd_rows.size());
    for (size_t r = 0; r < hc.vmd_rows.size(); ++r) {
      const int row = hc.vmd_rows[r];
      const int target = input.vmd_labels[static_cast<size_t>(row)];
      const double* probs = hc.vmd_probs.row(static_cast<int>(r));
      const double* h = hidden.row(row);
      double* dh = d_hidden.row(row);
      for (int o = 0; o < 2; ++o) {
        double dz = probs[o] * w;
        if (o == target) dz -= w;
        const double* wr = params.vmd_w.row(o);
        double* dwr = grads.vmd_w.row(o);
        for (int k = 0; k < C; ++k) {
          dh[k] += dz * wr[k];
          dwr[k] += dz * h[k];
        }
        grads.vmd_b.v[static_cast<size_t>(o)] += dz;
      }
    }
  }
}

inline Losses model_forward(const ModelParams& params, const ModelInput& input) {
  Tensor x = embed_input(params, input);
  Tensor h = encoder_forward(params, x);
  return compute_losses(params, h, input);
}

inline Losses model_forward_backward(const ModelParams& params, const ModelInput& input,
                                     ModelParams& grads) {
  EmbedCache ec;
  Tensor x = embed_input(params, input, &ec);
  EncoderCache enc;
  Tensor h = encoder_forward(params, x, &enc);
  detail_model::HeadCaches hc;
  Losses losses = compute_losses(params, h, input, &hc);
  Tensor d_hidden;
  losses_backward(params, h, input, hc, grads, d_hidden);
  Tensor d_x = encoder_backward(params, enc, d_hidden, grads);
  embed_backward(params, input, ec, d_x, grads);
  return losses;
}

inline Tensor model_hidden(const ModelParams& params, const ModelInput& input) {
  Tensor x = embed_input(params, input);
  return encoder_forward(params, x);
}

}  // namespace weblm
