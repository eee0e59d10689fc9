#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "weblm/config.hpp"
#include "weblm/dom.hpp"
#include "weblm/errors.hpp"
#include "weblm/geometry.hpp"
#include "weblm/image.hpp"
#include "weblm/rng.hpp"
#include "weblm/tags.hpp"

namespace weblm {

struct CorpusSpec {
  int pages = 16;
  int depth_min = 3;
  int depth_max = 5;
  int branch_min = 2;
  int branch_max = 4;
  int words_min = 3;
  int words_max = 10;
  int page_w = 640;
  int page_h = 960;
  int margin = 2;
  uint64_t seed = 1;
  uint64_t palette_seed = 1;
  std::string raster = "ppm";  // or "png"

  void validate() const {
    if (pages < 1) fail(Errc::ConfigError, "pages must be >= 1");
    if (depth_min < 1 || depth_max < depth_min) fail(Errc::ConfigError, "empty depth range");
    if (branch_min < 1 || branch_max < branch_min) fail(Errc::ConfigError, "empty branching range");
    if (words_min < 1 || words_max < words_min) fail(Errc::ConfigError, "empty word-count range");
    if (page_w < 64 || page_h < 64) fail(Errc::ConfigError, "page dimensions must be >= 64x64");
    if (margin < 0) fail(Errc::ConfigError, "margin must be >= 0");
    if (raster != "ppm" && raster != "png") fail(Errc::ConfigError, "raster must be ppm or png");
  }

  static CorpusSpec from_config(const Config& cfg) {
    CorpusSpec s;
    s.pages = static_cast<int>(cfg.get_int("pages", s.pages));
    s.depth_min = static_cast<int>(cfg.get_int("depth_min", s.depth_min));
    s.depth_max = static_cast<int>(cfg.get_int("depth_max", s.depth_max));
    s.branch_min = static_cast<int>(cfg.get_int("branch_min", s.branch_min));
    s.branch_max = static_cast<int>(cfg.get_int("branch_max", s.branch_max));
    s.words_min = static_cast<int>(cfg.get_int("words_min", s.words_min));
    s.words_max = static_cast<int>(cfg.get_int("words_max", s.words_max));
    s.page_w = static_cast<int>(cfg.get_int("page_w", s.page_w));
    s.page_h = static_cast<int>(cfg.get_int("page_h", s.page_h));
    s.margin = static_cast<int>(cfg.get_int("margin", s.margin));
    s.seed = cfg.get_u64("seed", s.seed);
    s.palette_seed = cfg.get_u64("palette_seed", s.palette_seed);
    s.raster = cfg.get_str("raster", s.raster);
    s.validate();
    return s;
  }
};

struct GeneratedPage {
  DomTree tree;  // the pre-simplification DOM the bundle parses back to
  std::string html;
  std::string boxes_jsonl;
  Image raster;
};

namespace pagegen {

inline const std::vector<std::string>& lexicon() {
  static const std::vector<std::string> words = {
      "anchor",  "atlas",   "autumn",  "basin",   "beacon",  "birch",   "border",  "bottle",
      "branch",  "breeze",  "bridge",  "bucket",  "butter",  "camera",  "candle",  "canyon",
      "carbon",  "castle",  "cedar",   "cellar",  "circle",  "cloud",   "coast",   "cobalt",
      "copper",  "coral",   "corner",  "cotton",  "crystal", "current", "cursor",  "delta",
      "desert",  "donkey",  "drawer",  "ember",   "engine",  "fabric",  "falcon",  "feather",
      "fiddle",  "field",   "finch",   "fjord",   "flint",   "forest",  "fossil",  "fountain",
      "galley",  "garden",  "garnet",  "ginger",  "glacier", "granite", "gravel",  "grove",
      "harbor",  "hazel",   "heather", "hollow",  "honey",   "horizon", "hunter",  "island",
      "ivory",   "jasper",  "jungle",  "kernel",  "kettle",  "lagoon",  "lantern", "ledger",
      "lemon",   "linen",   "lobster", "locket",  "lumber",  "machine", "magnet",  "mantle",
      "maple",   "marble",  "market",  "meadow",  "mirror",  "mitten",  "monsoon", "morning",
      "mosaic",  "mountain","needle",  "nickel",  "number",  "oasis",   "ocean",   "orchard",
      "oyster",  "paddle",  "pebble",  "pepper",  "pillar",  "pilot",   "pocket",  "pollen",
      "poplar",  "prairie", "prism",   "quarry",  "quiver",  "rabbit",  "raven",   "reef",
      "ribbon",  "ridge",   "river",   "rocket",  "saddle",  "saffron", "sailor",  "salmon",
      "sandal",  "sapphire","scarlet", "shadow",  "shelter", "signal",  "silver",  "sketch",
      "slate",   "smoke",   "socket",  "sparrow", "spiral",  "spring",  "spruce",  "stable",
      "stone",   "stream",  "summit",  "sunset",  "tangent", "tavern",  "temple",  "thicket",
      "thimble", "thunder", "timber",  "toffee",  "trail",   "tunnel",  "turnip",  "valley",
      "velvet",  "vessel",  "village", "violet",  "walnut",  "walrus",  "weather", "willow",
      "window",  "winter",  "wonder",  "yarrow",  "zephyr",  "zinc"};
  return words;
}

inline const std::vector<std::string>& container_tags() {
  static const std::vector<std::string> tags = {"div",    "section", "article", "aside",
                                                "nav",    "header",  "footer",  "figure",
                                                "blockquote"};
  return tags;
}

inline const std::vector<std::string>& leaf_tags() {
  static const std::vector<std::string> tags = {"p",  "span",   "h1",   "h2",    "h3",
                                                "em", "strong", "code", "small", "mark"};
  return tags;
}

inline void fill_rect(Image& img, int x0, int y0, int x1, int y1, double r, double g, double b) {
  x0 = std::max(0, x0);
  y0 = std::max(0, y0);
  x1 = std::min(img.w, x1);
  y1 = std::min(img.h, y1);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      img.at(y, x, 0) = r;
      img.at(y, x, 1) = g;
      img.at(y, x, 2) = b;
    }
}

inline void draw_glyph_blocks(Image& img, const BoundingBox& area, const std::string& text) {
  int x = static_cast<int>(area.x0) + 2;
  int y = static_cast<int>(area.y0) + 2;
  const int x_max = static_cast<int>(area.x1()) - 2;
  const int y_max = static_cast<int>(area.y1()) - 2;
  size_t start = 0;
  while (start < text.size()) {
    size_t space = text.find(' ', start);
    if (space == std::string::npos) space = text.size();
    const int len = static_cast<int>(space - start);
    const int bw = 2 + 2 * len;
    if (x + bw > x_max) {
      x = static_cast<int>(area.x0) + 2;
      y += 6;
    }
    if (y + 4 > y_max) return;
    fill_rect(img, x, y, std::min(x + bw, x_max), y + 4, 0.08, 0.08, 0.1);
    x += bw + 3;
    start = space + 1;
  }
}

struct Builder {
  const CorpusSpec& spec;
  const TagVocab& tags;
  Rng rng;
  DomTree tree;
  Image img;
  int depth_target = 1;

  std::string make_text() {
    const auto& words = lexicon();
    int count = spec.words_min +
                static_cast<int>(rng.below(static_cast<uint64_t>(spec.words_max - spec.words_min + 1)));
    std::string out;
    for (int i = 0; i < count; ++i) {
      if (i) out.push_back(' ');
      out += words[static_cast<size_t>(rng.below(words.size()))];
    }
    return out;
  }

  void paint_element(int id, const BoundingBox& box) {
    Rng palette(Rng::mix(spec.palette_seed, static_cast<uint64_t>(id)));
    double r = 0.55 + 0.4 * palette.uniform();
    double g = 0.55 + 0.4 * palette.uniform();
    double b = 0.55 + 0.4 * palette.uniform();
    fill_rect(img, static_cast<int>(box.x0), static_cast<int>(box.y0),
              static_cast<int>(box.x1()), static_cast<int>(box.y1()), r, g, b);
  }

  // Leaf element: one text run, or a void element kept by its box alone.
  void build_leaf(int parent, const BoundingBox& box) {
    bool void_leaf = rng.uniform() < 0.08;
    int id;
    if (void_leaf) {
      const char* name = rng.uniform() < 0.5 ? "img" : "hr";
      id = tree.add_node(tags.id(name), name, parent);
    } else {
      const auto& names = leaf_tags();
      const std::string& name = names[static_cast<size_t>(rng.below(names.size()))];
      id = tree.add_node(tags.id(name), name, parent);
    }
    tree.set_box(id, box);
    paint_element(id, box);
    if (!void_leaf) {
      std::string text = make_text();
      draw_glyph_blocks(img, box, text);
      tree.add_run(id, std::move(text));
    }
  }

  // Subdivides `content` among child slices and optional interleaved text
  // bands, alternating the split axis with depth.
  void build_children(int parent, const BoundingBox& content, int level) {
    int k = spec.branch_min +
            static_cast<int>(rng.below(static_cast<uint64_t>(spec.branch_max - spec.branch_min + 1)));
    int runs = rng.uniform() < 0.3 ? 1 : 0;
    // display items: runs occupy slots among the children
    std::vector<int> run_slots;
    for (int r = 0; r < runs; ++r)
      run_slots.push_back(static_cast<int>(rng.below(static_cast<uint64_t>(k + 1))));
    std::sort(run_slots.begin(), run_slots.end());
    run_slots.erase(std::unique(run_slots.begin(), run_slots.end()), run_slots.end());

    struct Slice {
      bool is_text;
      double weight;
    };
    std::vector<Slice> slices;
    size_t ri = 0;
    for (int slot = 0; slot <= k; ++slot) {
      if (ri < run_slots.size() && run_slots[ri] == slot) {
        slices.push_back({true, 0.5});
        ++ri;
      }
      if (slot < k) slices.push_back({false, 1.0 + rng.uniform()});
    }
    bool vertical = (tree.node(parent).depth % 2 == 0) ? true : rng.uniform() < 0.5;
    double span = vertical ? content.h : content.w;
    double total_w = 0.0;
    for (const auto& s : slices) total_w += s.weight;
    const double m = spec.margin;
    double cursor = vertical ? content.y0 : content.x0;
    for (const auto& s : slices) {
      double extent = span * s.weight / total_w;
      BoundingBox slice = vertical
                              ? BoundingBox{content.x0, cursor, content.w, extent}
                              : BoundingBox{cursor, content.y0, extent, content.h};
      cursor += extent;
      // integer corners, inset so the margin is honored exactly
      double ix0 = std::ceil(slice.x0 + m);
      double iy0 = std::ceil(slice.y0 + m);
      double ix1 = std::floor(slice.x1() - m);
      double iy1 = std::floor(slice.y1() - m);
      BoundingBox inner{ix0, iy0, ix1 - ix0, iy1 - iy0};
      if (s.is_text) {
        std::string text = make_text();
        draw_glyph_blocks(img, slice, text);
        tree.add_run(parent, std::move(text));
        continue;
      }
      if (inner.w < 12 || inner.h < 8) continue;  // no room for a child here
      if (level <= 1 || inner.w < 48 || inner.h < 32) {
        build_leaf(parent, inner);
      } else {
        const auto& names = container_tags();
        const std::string& name = names[static_cast<size_t>(rng.below(names.size()))];
        int id = tree.add_node(tags.id(name), name, parent);
        tree.set_box(id, inner);
        paint_element(id, inner);
        BoundingBox child_content{inner.x0 + m, inner.y0 + m, inner.w - 2 * m, inner.h - 2 * m};
        build_children(id, child_content, level - 1);
      }
    }
  }
};

inline std::string node_path_json(const DomTree& tree, int id) {
  std::vector<int> path;
  int cur = id;
  while (tree.node(cur).parent >= 0) {
    int parent = tree.node(cur).parent;
    const auto& siblings = tree.node(parent).children;
    for (size_t k = 0; k < siblings.size(); ++k) {
      if (siblings[k] == cur) {
        path.push_back(static_cast<int>(k));
        break;
      }
    }
    cur = parent;
  }
  std::reverse(path.begin(), path.end());
  nlohmann::json j = path;
  return j.dump();
}

}  // namespace pagegen

// Deterministic browser stand-in: a random tree of common tags laid out by
// recursive box subdivision, painted as filled rectangles with glyph-block
// text, with exact per-node boxes emitted alongside.
inline GeneratedPage generate_page(const CorpusSpec& spec, uint64_t page_index,
                                   const TagVocab& tags = TagVocab()) {
  spec.validate();
  pagegen::Builder b{spec, tags, Rng(Rng::mix(spec.seed, page_index)), DomTree{},
                     Image::filled(spec.page_w, spec.page_h, 0.97, 0.97, 0.97), 1};
  b.depth_target =
      spec.depth_min +
      static_cast<int>(b.rng.below(static_cast<uint64_t>(spec.depth_max - spec.depth_min + 1)));

  int html_id = b.tree.add_node(tags.id("html"), "html", -1);
  b.tree.set_box(html_id, {0, 0, static_cast<double>(spec.page_w),
                           static_cast<double>(spec.page_h)});
  int head_id = b.tree.add_node(tags.id("head"), "head", html_id);
  b.tree.add_node(tags.id("title"), "title", head_id);
  b.tree.add_node(tags.id("style"), "style", head_id);
  b.tree.add_node(tags.id("meta"), "meta", head_id);
  int body_id = b.tree.add_node(tags.id("body"), "body", html_id);
  const double m = spec.margin;
  BoundingBox body_box{m, m, spec.page_w - 2 * m, spec.page_h - 2 * m};
  b.tree.set_box(body_id, body_box);
  b.paint_element(body_id, body_box);
  BoundingBox content{body_box.x0 + m, body_box.y0 + m, body_box.w - 2 * m, body_box.h - 2 * m};
  b.build_children(body_id, content, b.depth_target);
  b.tree.finalize();

  GeneratedPage page;
  page.html = serialize_html(b.tree, true);
  // rawtext content exercises the parser; it never reaches the tree
  {
    size_t pos = page.html.find("<title></title>");
    if (pos != std::string::npos)
      page.html.replace(pos, 15, "<title>page " + std::to_string(page_index) + "</title>");
    pos = page.html.find("<style></style>");
    if (pos != std::string::npos)
      page.html.replace(pos, 15, "<style>body { margin: 0; }</style>");
  }

  std::string jsonl;
  for (int id = 0; id < b.tree.size(); ++id) {
    const DomNode& n = b.tree.node(id);
    if (!n.box) continue;
    nlohmann::json j;
    j["node_path"] = nlohmann::json::parse(pagegen::node_path_json(b.tree, id));
    j["x0"] = static_cast<int>(n.box->x0);
    j["y0"] = static_cast<int>(n.box->y0);
    j["w"] = static_cast<int>(n.box->w);
    j["h"] = static_cast<int>(n.box->h);
    jsonl += j.dump();
    jsonl += '\n';
  }
  page.boxes_jsonl = std::move(jsonl);
  page.raster = std::move(b.img);
  page.tree = std::move(b.tree);
  return page;
}

inline std::filesystem::path page_dir_name(uint64_t page_index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "page_%05llu", static_cast<unsigned long long>(page_index));
  return buf;
}

inline void write_page_bundle(const std::filesystem::path& dir, const GeneratedPage& page,
                              const std::string& raster_kind) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "page.html", std::ios::binary);
    if (!out) fail(Errc::IoError, "cannot write " + (dir / "page.html").string());
    out << page.html;
  }
  {
    std::ofstream out(dir / "boxes.jsonl", std::ios::binary);
    if (!out) fail(Errc::IoError, "cannot write " + (dir / "boxes.jsonl").string());
    out << page.boxes_jsonl;
  }
  if (raster_kind == "png") {
#if WEBLM_HAS_PNG
    save_png(page.raster, dir / "screenshot.png");
#else
    fail(Errc::ConfigError, "png support is not built in");
#endif
  } else {
    save_ppm(page.raster, dir / "screenshot.ppm");
  }
}

// Generates spec.pages bundles under out_dir and echoes the generating
// configuration for provenance.
inline void generate_corpus(const CorpusSpec& spec, const std::filesystem::path& out_dir,
                            const TagVocab& tags = TagVocab()) {
  spec.validate();
  std::filesystem::create_directories(out_dir);
  for (int p = 0; p < spec.pages; ++p) {
    GeneratedPage page = generate_page(spec, static_cast<uint64_t>(p), tags);
    write_page_bundle(out_dir / page_dir_name(static_cast<uint64_t>(p)), page, spec.raster);
  }
  std::ofstream echo(out_dir / "gen.toml", std::ios::binary);
  echo << "pages = " << spec.pages << "\n"
       << "depth_min = " << spec.depth_min << "\ndepth_max = " << spec.depth_max << "\n"
       << "branch_min = " << spec.branch_min << "\nbranch_max = " << spec.branch_max << "\n"
       << "words_min = " << spec.words_min << "\nwords_max = " << spec.words_max << "\n"
       << "page_w = " << spec.page_w << "\npage_h = " << spec.page_h << "\n"
       << "margin = " << spec.margin << "\n"
       << "seed = " << spec.seed << "\npalette_seed = " << spec.palette_seed << "\n"
       << "raster = \"" << spec.raster << "\"\n";
}

}  // namespace weblm
