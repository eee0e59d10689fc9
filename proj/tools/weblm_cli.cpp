#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "weblm/weblm.hpp"

namespace fs = std::filesystem;
using namespace weblm;

namespace {

Config load_config_or_default(const std::string& path) {
  if (path.empty()) return Config{};
  return Config::load(path);
}

void apply_seed_env(Config& cfg) {
  if (const char* env = std::getenv("WEBLM_SEED")) cfg.set("seed", env);
}

TagVocab tags_from_flag(const std::string& path) {
  return path.empty() ? TagVocab() : TagVocab::load(path);
}

int run_gen(const std::string& spec_path, const std::string& out_dir,
            const std::string& tags_path) {
  Config cfg = load_config_or_default(spec_path);
  apply_seed_env(cfg);
  CorpusSpec spec = CorpusSpec::from_config(cfg);
  generate_corpus(spec, out_dir, tags_from_flag(tags_path));
  std::cout << "generated " << spec.pages << " page bundles under " << out_dir << "\n";
  return 0;
}

int run_prep(const std::string& in_dir, const std::string& out_dir, const std::string& cfg_path,
             const std::string& tags_path) {
  Config cfg = load_config_or_default(cfg_path);
  apply_seed_env(cfg);
  PrepResult result = prep_corpus(in_dir, out_dir, cfg, tags_from_flag(tags_path));
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "prepared " << result.records << " records from " << result.pages << " pages ("
            << result.pages_skipped << " skipped)\n";
  if (result.records == 0) {
    std::cerr << "error: no records produced\n";
    return 2;
  }
  return 0;
}

int run_stats(const std::string& shards_dir, bool as_json) {
  ShardSet shards = ShardSet::load(shards_dir, true);
  TagVocab tags = TagVocab::load(fs::path(shards_dir) / "tags.txt");
  StatsReport report = compute_stats(shards, tags);
  if (as_json)
    std::cout << report.to_json().dump(2) << "\n";
  else
    report.print(std::cout);
  return 0;
}

int run_train(const std::string& shards_dir, const std::string& cfg_path, int64_t steps,
              const std::string& out_ckpt, const std::string& metrics,
              const std::string& resume, const std::string& pages_dir) {
  Config cfg = load_config_or_default(cfg_path);
  TrainSetup setup = TrainSetup::from_config(cfg);
  setup.shards_dir = shards_dir;
  setup.steps = steps;
  setup.out_ckpt = out_ckpt;
  if (!metrics.empty()) setup.metrics_path = metrics;
  if (!resume.empty()) setup.resume = fs::path(resume);
  if (!pages_dir.empty()) setup.pages_dir = fs::path(pages_dir);
  if (cfg.has("tag_vectors")) setup.tag_vectors = fs::path(cfg.get_str("tag_vectors"));
  TrainResult result = train_toy(setup);
  std::cout << "trained to step " << result.steps_run << "; total loss " << result.last.total
            << " (mlm " << result.last.mlm << ", tsp " << result.last.tsp << ", vmd "
            << result.last.vmd << ")\n";
  return 0;
}

int run_inspect(const std::string& shards_dir, uint64_t record_id) {
  ShardSet shards = ShardSet::load(shards_dir, true);
  TagVocab tags = TagVocab::load(fs::path(shards_dir) / "tags.txt");
  Vocab vocab = Vocab::load(fs::path(shards_dir) / "vocab.txt");
  const PretrainRecord* rec = nullptr;
  for (const auto& r : shards.records)
    if (r.id == record_id) {
      rec = &r;
      break;
    }
  if (!rec) fail(Errc::DataError, "record " + std::to_string(record_id) + " not found");

  std::cout << "record " << rec->id << " page=" << rec->page_id << " segment="
            << rec->segment_path << " seed=" << rec->seed << "\n";
  std::cout << "raster " << rec->raster_path << " crop=[" << rec->crop[0] << "," << rec->crop[1]
            << "," << rec->crop[2] << "," << rec->crop[3] << "] page=" << rec->page_w << "x"
            << rec->page_h << "\n";
  std::cout << "tokens: " << rec->length() << ", pairs: " << rec->pairs.size() << "\n";
  const char* kind_names[] = {"special", "structure", "content"};
  const char* skind_names[] = {"start", "end", "leaf", "-"};
  for (int i = 0; i < rec->length(); ++i) {
    size_t idx = static_cast<size_t>(i);
    std::cout << "  " << i << "\t" << vocab.token(rec->ids[idx]) << "\tid=" << rec->ids[idx]
              << "\t" << kind_names[rec->kinds[idx]] << "/" << skind_names[rec->skinds[idx]]
              << "\ttag=" << tags.name(rec->tags[idx]) << "\tnode=" << rec->nodes[idx]
              << "\tseg=" << (rec->segs[idx] ? "C" : "S") << "\tbox=(" << rec->boxes[idx].x0
              << "," << rec->boxes[idx].y0 << "," << rec->boxes[idx].x1 << ","
              << rec->boxes[idx].y1 << ")";
    if (rec->mlm_labels[idx] != kIgnoreLabel)
      std::cout << "\tmlm->" << vocab.token(rec->mlm_labels[idx]) << " (input "
                << vocab.token(rec->masked_ids[idx]) << ")";
    if (rec->vmd_labels[idx])
      std::cout << "\tvmd perturbed=(" << rec->vmd_boxes[idx].x0 << "," << rec->vmd_boxes[idx].y0
                << "," << rec->vmd_boxes[idx].x1 << "," << rec->vmd_boxes[idx].y1 << ")";
    std::cout << "\n";
  }
  const char* rel_names[] = {"parent-child", "ancestor-descendant", "other"};
  std::cout << "tsp pairs:\n";
  for (const auto& p : rec->pairs)
    std::cout << "  (" << p.structure_pos << ", " << p.content_pos << ") -> "
              << rel_names[p.label] << "\n";
  return 0;
}

int run_gradcheck(const std::string& cfg_path) {
  Config cfg = load_config_or_default(cfg_path);
  apply_seed_env(cfg);
  ModelConfig mc;
  mc.hidden = static_cast<int>(cfg.get_int("hidden", 12));
  mc.layers = static_cast<int>(cfg.get_int("layers", 1));
  mc.heads = static_cast<int>(cfg.get_int("heads", 2));
  mc.grid = static_cast<int>(cfg.get_int("grid", 4));
  mc.image_side = static_cast<int>(cfg.get_int("image_side", 32));
  mc.vocab = static_cast<int>(cfg.get_int("vocab", 64));
  mc.tags = static_cast<int>(cfg.get_int("tags", 8));
  mc.max_pos = static_cast<int>(cfg.get_int("max_seq_len", 64));
  mc.init_std = cfg.get_double("init_std", 0.25);
  mc.seed = cfg.get_u64("seed", 11);
  const double tol = cfg.get_double("gradcheck_tol", 1e-4);
  const double eps = cfg.get_double("gradcheck_eps", 1e-5);
  const int n_tokens = static_cast<int>(cfg.get_int("tokens", 12));
  const size_t coords = static_cast<size_t>(cfg.get_int("coords", 200));

  std::vector<std::string> names;
  for (int i = 0; i < mc.tags; ++i) names.push_back("t" + std::to_string(i));
  ModelParams params = ModelParams::init(mc, names);

  Rng rng(mc.seed ^ 0x5eed);
  PatchFeatures patches;
  Image img = Image::filled(mc.image_side, mc.image_side, 0.5, 0.4, 0.3);
  for (double& p : img.px) p = rng.uniform();
  patches = compute_patch_features(img, mc.grid);

  ModelInput input;
  input.patches = &patches;
  for (int i = 0; i < n_tokens; ++i) {
    input.ids.push_back(static_cast<int32_t>(rng.below(static_cast<uint64_t>(mc.vocab))));
    input.tags.push_back(static_cast<int32_t>(rng.below(static_cast<uint64_t>(mc.tags))));
    input.segs.push_back(static_cast<uint8_t>(i < n_tokens / 2 ? 0 : 1));
    int x0 = static_cast<int>(rng.below(900));
    int y0 = static_cast<int>(rng.below(900));
    input.boxes.push_back(NormalizedBox::from_corners(x0, x0 + 80, y0, y0 + 60));
    input.mlm_labels.push_back(i % 3 == 0
                                   ? static_cast<int32_t>(rng.below(static_cast<uint64_t>(mc.vocab)))
                                   : kIgnoreLabel);
    input.vmd_labels.push_back(static_cast<uint8_t>(rng.below(2)));
  }
  for (int i = 0; i < n_tokens / 2; ++i)
    input.pairs.push_back({static_cast<int32_t>(i),
                           static_cast<int32_t>(n_tokens / 2 + i),
                           static_cast<uint8_t>(rng.below(3))});

  GradCheckReport report = grad_check(params, input, eps, coords, mc.seed + 1);
  std::cout << "checked " << report.checked << " coordinates; max rel. error "
            << report.max_rel_error << " (worst: " << report.worst_param << ")\n";
  return report.max_rel_error < tol ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"webpage-understanding pipeline: corpus generation, feature prep, objective "
               "sampling, statistics, and toy training"};
  app.require_subcommand(1);

  std::string spec_path, out_dir, tags_path;
  auto* gen = app.add_subcommand("gen", "generate a synthetic page corpus");
  gen->add_option("--spec", spec_path, "corpus spec file (toml/json)");
  gen->add_option("--out", out_dir, "output directory")->required();
  gen->add_option("--tags", tags_path, "tag list file (tags.txt)");

  std::string prep_in, prep_out, prep_cfg, prep_tags;
  auto* prep = app.add_subcommand("prep", "turn page bundles into training shards");
  prep->add_option("--in", prep_in, "directory of page bundles")->required();
  prep->add_option("--out", prep_out, "shard output directory")->required();
  prep->add_option("--config", prep_cfg, "prep config file");
  prep->add_option("--tags", prep_tags, "tag list file (tags.txt)");

  std::string stats_dir;
  bool stats_json = false;
  auto* stats = app.add_subcommand("stats", "report statistics over shards");
  stats->add_option("shards", stats_dir, "shards directory")->required();
  stats->add_flag("--json", stats_json, "machine-readable output");

  std::string train_shards, train_cfg, train_out, train_metrics, train_resume, train_pages;
  int64_t train_steps = 0;
  auto* train = app.add_subcommand("train", "toy training run");
  train->add_option("--shards", train_shards, "shards directory")->required();
  train->add_option("--config", train_cfg, "training config file");
  train->add_option("--steps", train_steps, "absolute step target")->required();
  train->add_option("--out", train_out, "checkpoint path")->required();
  train->add_option("--metrics", train_metrics, "metrics JSONL path");
  train->add_option("--resume", train_resume, "checkpoint to resume from");
  train->add_option("--pages", train_pages, "override the bundle directory for rasters");

  std::string inspect_dir;
  uint64_t inspect_id = 0;
  auto* inspect = app.add_subcommand("inspect", "pretty-print one record");
  inspect->add_option("shards", inspect_dir, "shards directory")->required();
  inspect->add_option("--record", inspect_id, "record id")->required();

  std::string gc_cfg;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
  gradcheck->add_option("--config", gc_cfg, "model config file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return run_gen(spec_path, out_dir, tags_path);
    if (prep->parsed()) return run_prep(prep_in, prep_out, prep_cfg, prep_tags);
    if (stats->parsed()) return run_stats(stats_dir, stats_json);
    if (train->parsed())
      return run_train(train_shards, train_cfg, train_steps, train_out, train_metrics,
                       train_resume, train_pages);
    if (inspect->parsed()) return run_inspect(inspect_dir, inspect_id);
    if (gradcheck->parsed()) return run_gradcheck(gc_cfg);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == Errc::NumericsError ? 3 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
