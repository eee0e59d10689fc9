#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "weblm/checkpoint.hpp"
#include "weblm/config.hpp"
#include "weblm/errors.hpp"
#include "weblm/image.hpp"
#include "weblm/model.hpp"
#include "weblm/optimizer.hpp"
#include "weblm/records.hpp"
#include "weblm/tags.hpp"
#include "weblm/tokenizer.hpp"
#include "weblm/visual.hpp"

namespace weblm {

struct TrainSetup {
  ModelConfig model;  // vocab/tags sizes are filled from the shard sidecars
  OptimizerConfig opt;
  int batch_size = 8;
  int64_t steps = 0;  // absolute target step count
  std::filesystem::path shards_dir;
  std::filesystem::path out_ckpt;
  std::filesystem::path metrics_path;
  std::optional<std::filesystem::path> resume;
  std::optional<std::filesystem::path> pages_dir;  // overrides the manifest entry
  std::optional<std::filesystem::path> tag_vectors;

  static TrainSetup from_config(const Config& cfg) {
    TrainSetup s;
    s.model.hidden = static_cast<int>(cfg.get_int("hidden", s.model.hidden));
    s.model.layers = static_cast<int>(cfg.get_int("layers", s.model.layers));
    s.model.heads = static_cast<int>(cfg.get_int("heads", s.model.heads));
    s.model.ffn = static_cast<int>(cfg.get_int("ffn", s.model.ffn));
    s.model.max_pos = static_cast<int>(cfg.get_int("max_seq_len", s.model.max_pos));
    s.model.grid = static_cast<int>(cfg.get_int("grid", s.model.grid));
    s.model.image_side = static_cast<int>(cfg.get_int("image_side", s.model.image_side));
    s.model.seed = cfg.get_u64("seed", s.model.seed);
    s.model.w_mlm = cfg.get_double("w_mlm", s.model.w_mlm);
    s.model.w_tsp = cfg.get_double("w_tsp", s.model.w_tsp);
    s.model.w_vmd = cfg.get_double("w_vmd", s.model.w_vmd);
    s.opt.lr = cfg.get_double("lr", s.opt.lr);
    s.opt.beta1 = cfg.get_double("beta1", s.opt.beta1);
    s.opt.beta2 = cfg.get_double("beta2", s.opt.beta2);
    s.opt.eps = cfg.get_double("adam_eps", s.opt.eps);
    s.opt.weight_decay = cfg.get_double("weight_decay", s.opt.weight_decay);
    s.opt.warmup_ratio = cfg.get_double("warmup_ratio", s.opt.warmup_ratio);
    s.opt.total_steps = cfg.get_int("total_steps", 0);
    s.batch_size = static_cast<int>(cfg.get_int("batch_size", s.batch_size));
    if (s.batch_size < 1) fail(Errc::ConfigError, "batch_size must be >= 1");
    if (const char* env = std::getenv("WEBLM_SEED")) s.model.seed = std::strtoull(env, nullptr, 10);
    return s;
  }
};

struct TrainResult {
  Losses last;
  int64_t steps_run = 0;
};

namespace detail_train {

// Rasters are shared between records of the same page.
struct PatchCache {
  std::map<std::string, std::unique_ptr<PatchFeatures>> cache;

  const PatchFeatures* get(const std::filesystem::path& pages_dir, const std::string& rel,
                           int side, int grid) {
    auto it = cache.find(rel);
    if (it != cache.end()) return it->second.get();
    Image img = load_image(pages_dir / rel);
    Image resized = resize_bilinear(img, side);
    auto pf = std::make_unique<PatchFeatures>(compute_patch_features(resized, grid));
    const PatchFeatures* ptr = pf.get();
    cache.emplace(rel, std::move(pf));
    return ptr;
  }
};

inline ModelInput record_to_input(const PretrainRecord& rec, const PatchFeatures* patches,
                                  int32_t pad_id) {
  ModelInput in;
  in.ids = rec.masked_ids;
  in.tags = rec.tags;
  in.segs = rec.segs;
  in.boxes = rec.vmd_boxes;  // effective boxes drive both visual channels
  in.mlm_labels = rec.mlm_labels;
  for (const auto& p : rec.pairs) in.pairs.push_back(p);
  in.vmd_labels.assign(rec.vmd_labels.begin(), rec.vmd_labels.end());
  in.pad_id = pad_id;
  in.patches = patches;
  return in;
}

inline std::string metrics_line(int64_t step, double lr, const Losses& l) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "{\"step\":%lld,\"lr\":%.17g,\"mlm\":%.17g,\"tsp\":%.17g,\"vmd\":%.17g,"
                "\"total\":%.17g}",
                static_cast<long long>(step), lr, l.mlm, l.tsp, l.vmd, l.total);
  return buf;
}

}  // namespace detail_train

// Deterministic toy training loop: records are consumed in shard order,
// cycling; gradients are summed per batch and divided once. Aborting on a
// numerics error keeps the checkpoint of the last completed step.
inline TrainResult train_toy(const TrainSetup& setup) {
  ShardSet shards = ShardSet::load(setup.shards_dir, true);
  if (shards.records.empty()) fail(Errc::DataError, "no records in " + setup.shards_dir.string());

  Vocab vocab = Vocab::load(setup.shards_dir / "vocab.txt");
  TagVocab tags = TagVocab::load(setup.shards_dir / "tags.txt");
  SpecialIds specials;

  std::filesystem::path pages_dir =
      setup.pages_dir ? *setup.pages_dir
                      : std::filesystem::path(
                            shards.manifest.value("pages_dir", std::string(".")));

  ModelConfig cfg = setup.model;
  cfg.vocab = vocab.size();
  cfg.tags = tags.size();
  cfg.validate();

  ModelParams params = ModelParams::shaped(cfg);
  OptimizerState opt_state = OptimizerState::init(cfg);
  OptimizerConfig opt_cfg = setup.opt;
  if (opt_cfg.total_steps <= 0) opt_cfg.total_steps = setup.steps;

  if (setup.resume) {
    Checkpoint ck = load_checkpoint(*setup.resume);
    if (ck.params.cfg.hidden != cfg.hidden || ck.params.cfg.layers != cfg.layers ||
        ck.params.cfg.vocab != cfg.vocab || ck.params.cfg.tags != cfg.tags)
      fail(Errc::DataError, "checkpoint does not match the configured model");
    params = std::move(ck.params);
    if (ck.opt) opt_state = std::move(*ck.opt);
    if (setup.opt.total_steps <= 0 && ck.total_steps > 0) opt_cfg.total_steps = ck.total_steps;
  } else {
    TagVectorTable table;
    if (setup.tag_vectors) table = TagVectorTable::load(*setup.tag_vectors);
    std::vector<std::string> names = tags.names();
    names.push_back("<unk>");
    params = ModelParams::init(cfg, names, table);
  }

  // all inputs up front; records re-validate their layout here
  detail_train::PatchCache patch_cache;
  std::vector<ModelInput> inputs;
  inputs.reserve(shards.records.size());
  for (const auto& rec : shards.records) {
    record_tokens(rec, specials);
    const PatchFeatures* patches =
        patch_cache.get(pages_dir, rec.raster_path, cfg.image_side, cfg.grid);
    inputs.push_back(detail_train::record_to_input(rec, patches, specials.pad));
    inputs.back().check(cfg);
  }

  std::ofstream metrics;
  if (!setup.metrics_path.empty()) {
    metrics.open(setup.metrics_path, std::ios::binary);
    if (!metrics) fail(Errc::IoError, "cannot write metrics " + setup.metrics_path.string());
  }

  const size_t n_records = inputs.size();
  const int B = setup.batch_size;
  TrainResult result;
  ModelParams last_good_params = params;
  OptimizerState last_good_opt = opt_state;

  for (int64_t step = opt_state.step + 1; step <= setup.steps; ++step) {
    try {
      ModelParams grads = ModelParams::shaped(cfg);
      Losses batch{};
      for (int j = 0; j < B; ++j) {
        size_t idx = (static_cast<size_t>(step - 1) * static_cast<size_t>(B) +
                      static_cast<size_t>(j)) %
                     n_records;
        Losses l = model_forward_backward(params, inputs[idx], grads);
        batch.mlm += l.mlm;
        batch.tsp += l.tsp;
        batch.vmd += l.vmd;
        batch.total += l.total;
      }
      const double inv = 1.0 / static_cast<double>(B);
      batch.mlm *= inv;
      batch.tsp *= inv;
      batch.vmd *= inv;
      batch.total *= inv;
      grads.visit([&](const std::string&, Tensor& t) {
        for (double& g : t.v) g *= inv;
      });
      double lr = adamw_step(params, grads, opt_state, opt_cfg);
      if (metrics.is_open()) metrics << detail_train::metrics_line(step, lr, batch) << '\n';
      result.last = batch;
      result.steps_run = step;
      last_good_params = params;
      last_good_opt = opt_state;
    } catch (const Error& e) {
      if (e.code() == Errc::NumericsError) {
        save_checkpoint(setup.out_ckpt, last_good_params, &last_good_opt, opt_cfg.total_steps);
        throw;
      }
      throw;
    }
  }
  save_checkpoint(setup.out_ckpt, params, &opt_state, opt_cfg.total_steps);
  return result;
}

}  // namespace weblm
