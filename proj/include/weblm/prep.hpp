#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "weblm/config.hpp"
#include "weblm/dom.hpp"
#include "weblm/errors.hpp"
#include "weblm/geometry.hpp"
#include "weblm/image.hpp"
#include "weblm/objectives.hpp"
#include "weblm/records.hpp"
#include "weblm/sequence.hpp"
#include "weblm/tags.hpp"
#include "weblm/tokenizer.hpp"

namespace weblm {

// Raster dimensions without decoding the pixels.
inline std::pair<int, int> raster_dims(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::IoError, "cannot open raster " + path.string());
  unsigned char sig[24] = {0};
  in.read(reinterpret_cast<char*>(sig), sizeof(sig));
  if (sig[0] == 'P' && sig[1] == '6') {
    in.seekg(2);
    int w = 0, h = 0;
    in >> w >> h;
    if (w < 1 || h < 1) fail(Errc::InvalidImage, "bad PPM header " + path.string());
    return {w, h};
  }
  if (sig[0] == 0x89 && sig[1] == 'P') {
    auto be32 = [&](int off) {
      return (static_cast<uint32_t>(sig[off]) << 24) | (static_cast<uint32_t>(sig[off + 1]) << 16) |
             (static_cast<uint32_t>(sig[off + 2]) << 8) | static_cast<uint32_t>(sig[off + 3]);
    };
    int w = static_cast<int>(be32(16));
    int h = static_cast<int>(be32(20));
    if (w < 1 || h < 1) fail(Errc::InvalidImage, "bad PNG header " + path.string());
    return {w, h};
  }
  fail(Errc::InvalidImage, "unsupported raster " + path.string());
}

struct PrepOptions {
  int seg_min = 128;
  int seg_max = 512;
  int max_seq_len = 512;
  int shard_size = 64;
  size_t vocab_max = 8192;
  StructureVocab structure_vocab = StructureVocab::ThreeIds;
  ObjectiveConfig objectives;
  uint64_t seed = 1;

  static PrepOptions from_config(const Config& cfg) {
    PrepOptions o;
    o.seg_min = static_cast<int>(cfg.get_int("seg_min", o.seg_min));
    o.seg_max = static_cast<int>(cfg.get_int("seg_max", o.seg_max));
    o.max_seq_len = static_cast<int>(cfg.get_int("max_seq_len", o.max_seq_len));
    o.shard_size = static_cast<int>(cfg.get_int("shard_size", o.shard_size));
    o.vocab_max = static_cast<size_t>(cfg.get_int("vocab_max", static_cast<int64_t>(o.vocab_max)));
    std::string sv = cfg.get_str("structure_vocab", "three_ids");
    if (sv == "three_ids") o.structure_vocab = StructureVocab::ThreeIds;
    else if (sv == "tag_names") o.structure_vocab = StructureVocab::TagNames;
    else fail(Errc::ConfigError, "structure_vocab must be three_ids or tag_names");
    o.objectives.mlm_p = cfg.get_double("mlm_p", o.objectives.mlm_p);
    o.objectives.mlm_mask_frac = cfg.get_double("mlm_mask_frac", o.objectives.mlm_mask_frac);
    o.objectives.mlm_random_frac = cfg.get_double("mlm_random_frac", o.objectives.mlm_random_frac);
    o.objectives.vmd_p = cfg.get_double("vmd_p", o.objectives.vmd_p);
    o.objectives.vmd_scale = cfg.get_double("vmd_scale", o.objectives.vmd_scale);
    o.objectives.tsp_max_pairs =
        static_cast<int>(cfg.get_int("tsp_max_pairs", o.objectives.tsp_max_pairs));
    o.objectives.tsp_other_cap = cfg.get_double("tsp_other_cap", o.objectives.tsp_other_cap);
    o.seed = cfg.get_u64("seed", o.seed);
    o.objectives.validate();
    if (o.seg_min < 8 || o.seg_max < o.seg_min || o.seg_max > o.max_seq_len)
      fail(Errc::ConfigError, "segment range must satisfy 8 <= seg_min <= seg_max <= max_seq_len");
    return o;
  }
};

struct PrepResult {
  uint64_t records = 0;
  uint64_t pages = 0;
  uint64_t pages_skipped = 0;
  std::vector<std::string> warnings;
};

namespace detail_prep {

struct PageData {
  std::string dir_name;
  std::string raster_name;
  DomTree tree;  // simplified
  int page_w = 0;
  int page_h = 0;
};

inline std::optional<std::string> find_raster(const std::filesystem::path& page_dir) {
  for (const char* name : {"screenshot.ppm", "screenshot.png"}) {
    if (std::filesystem::exists(page_dir / name)) return std::string(name);
  }
  return std::nullopt;
}

// Boxless nodes inherit the nearest ancestor box.
inline std::vector<std::optional<BoundingBox>> effective_boxes(const DomTree& tree) {
  std::vector<std::optional<BoundingBox>> eff(static_cast<size_t>(tree.size()));
  for (int id = 0; id < tree.size(); ++id) {
    const DomNode& n = tree.node(id);
    if (n.box)
      eff[static_cast<size_t>(id)] = n.box;
    else if (n.parent >= 0)
      eff[static_cast<size_t>(id)] = eff[static_cast<size_t>(n.parent)];
  }
  return eff;
}

inline std::string segment_path_string(const SegmentRef& seg) {
  if (seg.is_run())
    return "run:" + std::to_string(seg.anchor) + ":" + std::to_string(seg.first_child) + "-" +
           std::to_string(seg.last_child);
  return "node:" + std::to_string(seg.anchor);
}

}  // namespace detail_prep

// parse -> attach boxes -> simplify -> extract segments -> build sequences ->
// normalize boxes -> sample objectives -> serialize. Two passes: the first
// builds the vocabulary from the retained text.
inline PrepResult prep_corpus(const std::filesystem::path& pages_dir,
                              const std::filesystem::path& out_dir, const Config& cfg,
                              const TagVocab& tags = TagVocab()) {
  PrepOptions opt = PrepOptions::from_config(cfg);
  PrepResult result;

  std::vector<std::filesystem::path> page_dirs;
  if (!std::filesystem::is_directory(pages_dir))
    fail(Errc::IoError, "input directory not found: " + pages_dir.string());
  for (const auto& entry : std::filesystem::directory_iterator(pages_dir)) {
    if (entry.is_directory() && std::filesystem::exists(entry.path() / "page.html"))
      page_dirs.push_back(entry.path());
  }
  std::sort(page_dirs.begin(), page_dirs.end());

  // pass 1: parse each bundle, build the vocabulary from retained text
  std::vector<detail_prep::PageData> pages;
  VocabBuilder builder;
  std::map<std::string, int> seen_tag_names;
  for (const auto& dir : page_dirs) {
    try {
      detail_prep::PageData page;
      page.dir_name = dir.filename().string();
      auto raster = detail_prep::find_raster(dir);
      if (!raster) fail(Errc::DataError, "no screenshot in " + dir.string());
      page.raster_name = *raster;
      auto dims = raster_dims(dir / page.raster_name);
      page.page_w = dims.first;
      page.page_h = dims.second;
      DomTree raw = parse_html(read_file_bytes(dir / "page.html"), tags);
      if (std::filesystem::exists(dir / "boxes.jsonl")) {
        std::vector<std::string> box_warnings;
        apply_boxes_jsonl(raw, read_file_bytes(dir / "boxes.jsonl"), &box_warnings);
        for (auto& w : box_warnings) result.warnings.push_back(page.dir_name + ": " + w);
      }
      page.tree = simplify_tree(raw);
      for (int id = 0; id < page.tree.size(); ++id) {
        const DomNode& n = page.tree.node(id);
        seen_tag_names[n.name] = 1;
        for (const TextRun& r : n.runs) builder.add_text(r.text);
      }
      pages.push_back(std::move(page));
    } catch (const Error& e) {
      result.warnings.push_back("skipping bundle " + dir.string() + ": " + e.what());
      ++result.pages_skipped;
    }
  }

  Vocab vocab = builder.build(opt.vocab_max);
  if (opt.structure_vocab == StructureVocab::TagNames) {
    for (const auto& [name, _] : seen_tag_names) {
      vocab.add("<" + name + ">");
      vocab.add("</" + name + ">");
      vocab.add("<" + name + "/>");
    }
  }
  std::filesystem::create_directories(out_dir);
  vocab.save(out_dir / "vocab.txt");
  tags.save(out_dir / "tags.txt");
  WordTokenizer tokenizer(vocab);
  SeqConfig seq_cfg{opt.max_seq_len, opt.structure_vocab};

  // pass 2: segments, objectives, shards
  ShardWriter writer(out_dir, opt.shard_size);
  uint64_t record_id = 0;
  for (size_t page_index = 0; page_index < pages.size(); ++page_index) {
    const auto& page = pages[page_index];
    const DomTree& tree = page.tree;
    auto segments = extract_segments(tree, tokenizer, opt.seg_min, opt.seg_max);
    if (segments.empty()) {
      result.warnings.push_back("page " + page.dir_name + " yielded no segments");
      continue;
    }
    auto eff = detail_prep::effective_boxes(tree);
    for (size_t seg_index = 0; seg_index < segments.size(); ++seg_index) {
      const SegmentRef& seg = segments[seg_index];
      TokenSequence seq = build_sequence(tree, seg, tokenizer, seq_cfg);

      // segment box: the root's effective box, or the union over a run
      std::optional<BoundingBox> seg_box;
      if (seg.is_run()) {
        const auto& children = tree.node(seg.anchor).children;
        for (int k = seg.first_child; k <= seg.last_child; ++k) {
          auto b = eff[static_cast<size_t>(children[static_cast<size_t>(k)])];
          if (!b) continue;
          seg_box = seg_box ? BoundingBox::join(*seg_box, *b) : *b;
        }
      } else {
        seg_box = eff[static_cast<size_t>(seg.anchor)];
      }
      if (!seg_box) {
        result.warnings.push_back("page " + page.dir_name + " segment " +
                                  detail_prep::segment_path_string(seg) + " has no box");
        continue;
      }

      std::vector<NormalizedBox> boxes;
      boxes.reserve(seq.tokens.size());
      bool token_box_missing = false;
      for (const Token& t : seq.tokens) {
        std::optional<BoundingBox> b;
        if (t.kind == TokenKind::Special && seg.is_run())
          b = seg_box;  // run anchors carry the union box
        else
          b = eff[static_cast<size_t>(t.node)];
        if (!b) {
          token_box_missing = true;
          break;
        }
        boxes.push_back(normalize_box(*b, page.page_w, page.page_h));
      }
      if (token_box_missing) {
        result.warnings.push_back("page " + page.dir_name + " segment " +
                                  detail_prep::segment_path_string(seg) +
                                  " has tokens without any box");
        continue;
      }

      uint64_t seed = Rng::mix(opt.seed, static_cast<uint64_t>(page_index),
                               static_cast<uint64_t>(seg_index));
      ObjectiveSample sample =
          make_objective_sample(seq, tree, boxes, tokenizer, seed, opt.objectives);

      PretrainRecord rec;
      rec.id = record_id++;
      rec.seed = seed;
      rec.page_id = page.dir_name;
      rec.segment_path = detail_prep::segment_path_string(seg);
      rec.raster_path = page.dir_name + "/" + page.raster_name;
      rec.crop[0] = static_cast<int32_t>(seg_box->x0);
      rec.crop[1] = static_cast<int32_t>(seg_box->y0);
      rec.crop[2] = static_cast<int32_t>(seg_box->w);
      rec.crop[3] = static_cast<int32_t>(seg_box->h);
      rec.page_w = page.page_w;
      rec.page_h = page.page_h;
      for (const Token& t : seq.tokens) {
        rec.ids.push_back(t.id);
        rec.kinds.push_back(static_cast<uint8_t>(t.kind));
        rec.skinds.push_back(static_cast<uint8_t>(t.skind));
        rec.segs.push_back(static_cast<uint8_t>(t.seg));
        rec.nodes.push_back(t.node);
        rec.tags.push_back(t.tag);
      }
      rec.boxes = boxes;
      rec.masked_ids = sample.mlm.input_ids;
      rec.mlm_labels = sample.mlm.labels;
      for (const TspPair& p : sample.tsp)
        rec.pairs.push_back(
            {p.structure_pos, p.content_pos, relation_to_class(p.label)});
      rec.vmd_labels = sample.vmd.labels;
      rec.vmd_boxes = sample.vmd.boxes;
      writer.add(rec);
    }
    ++result.pages;
  }
  writer.flush();
  result.records = writer.total;

  nlohmann::json manifest;
  manifest["version"] = 1;
  manifest["seed"] = opt.seed;
  manifest["records"] = writer.total;
  manifest["pages_dir"] = pages_dir.string();
  nlohmann::json cfg_echo;
  for (const auto& [k, v] : cfg.entries()) cfg_echo[k] = v;
  manifest["config"] = cfg_echo;
  manifest["shards"] = writer.shards;
  manifest["vocab"] = "vocab.txt";
  manifest["vocab_fnv64"] = fnv1a64_hex(read_file_bytes(out_dir / "vocab.txt"));
  manifest["tags"] = "tags.txt";
  manifest["tags_fnv64"] = fnv1a64_hex(read_file_bytes(out_dir / "tags.txt"));
  {
    std::ofstream out(out_dir / "manifest.json", std::ios::binary);
    if (!out) fail(Errc::IoError, "cannot write manifest");
    out << manifest.dump(2) << '\n';
  }
  return result;
}

}  // namespace weblm
