#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "weblm/errors.hpp"
#include "weblm/geometry.hpp"
#include "weblm/image.hpp"
#include "weblm/rng.hpp"

namespace weblm {

inline constexpr int kPatchFeatureDim = 5;  // mean RGB + normalized cell center

// P x P grid of per-cell input features taken straight from the raster:
// [mean r, mean g, mean b, cx, cy] with centers normalized to [0, 1].
struct PatchFeatures {
  int p = 0;
  std::vector<double> feat;  // p * p * kPatchFeatureDim

  std::span<const double> cell(int idx) const {
    return {feat.data() + static_cast<size_t>(idx) * kPatchFeatureDim, kPatchFeatureDim};
  }
};

// P x P grid of projected C-dimensional features.
struct FeatureGrid {
  int p = 0;
  int c = 0;
  std::vector<double> v;  // p * p * c

  std::span<const double> cell(int idx) const {
    return {v.data() + static_cast<size_t>(idx) * static_cast<size_t>(c),
            static_cast<size_t>(c)};
  }
  std::span<double> cell_mut(int idx) {
    return {v.data() + static_cast<size_t>(idx) * static_cast<size_t>(c),
            static_cast<size_t>(c)};
  }
};

inline PatchFeatures compute_patch_features(const Image& img, int grid) {
  if (!img.valid()) fail(Errc::InvalidImage, "patch features need a raster");
  if (grid < 1) fail(Errc::ConfigError, "grid size must be >= 1");
  PatchFeatures out;
  out.p = grid;
  out.feat.assign(static_cast<size_t>(grid) * grid * kPatchFeatureDim, 0.0);
  for (int row = 0; row < grid; ++row) {
    int y_lo = static_cast<int>(static_cast<int64_t>(row) * img.h / grid);
    int y_hi = static_cast<int>(static_cast<int64_t>(row + 1) * img.h / grid);
    if (y_hi <= y_lo) y_hi = y_lo + 1;
    for (int col = 0; col < grid; ++col) {
      int x_lo = static_cast<int>(static_cast<int64_t>(col) * img.w / grid);
      int x_hi = static_cast<int>(static_cast<int64_t>(col + 1) * img.w / grid);
      if (x_hi <= x_lo) x_hi = x_lo + 1;
      double sum[3] = {0.0, 0.0, 0.0};
      for (int y = y_lo; y < y_hi; ++y)
        for (int x = x_lo; x < x_hi; ++x)
          for (int c = 0; c < 3; ++c) sum[c] += img.at(y, x, c);
      double n = static_cast<double>(y_hi - y_lo) * (x_hi - x_lo);
      double* f = out.feat.data() +
                  (static_cast<size_t>(row) * grid + col) * kPatchFeatureDim;
      f[0] = sum[0] / n;
      f[1] = sum[1] / n;
      f[2] = sum[2] / n;
      f[3] = (col + 0.5) / grid;
      f[4] = (row + 0.5) / grid;
    }
  }
  return out;
}

// Linear projection of the patch features: grid[cell] = W * feat[cell] + b,
// W is c x 5 row-major. The differentiable stand-in for a visual backbone.
inline FeatureGrid project_patch_features(const PatchFeatures& pf, std::span<const double> w,
                                          std::span<const double> b) {
  const int c = static_cast<int>(b.size());
  if (w.size() != static_cast<size_t>(c) * kPatchFeatureDim)
    fail(Errc::ConfigError, "patch projection shape mismatch");
  FeatureGrid grid;
  grid.p = pf.p;
  grid.c = c;
  grid.v.assign(static_cast<size_t>(pf.p) * pf.p * c, 0.0);
  const int cells = pf.p * pf.p;
  for (int idx = 0; idx < cells; ++idx) {
    auto f = pf.cell(idx);
    auto out = grid.cell_mut(idx);
    for (int o = 0; o < c; ++o) {
      const double* wr = w.data() + static_cast<size_t>(o) * kPatchFeatureDim;
      double acc = b[static_cast<size_t>(o)];
      for (int k = 0; k < kPatchFeatureDim; ++k) acc += wr[k] * f[static_cast<size_t>(k)];
      out[static_cast<size_t>(o)] = acc;
    }
  }
  return grid;
}

inline FeatureGrid extract_feature_grid(const Image& img, int grid, std::span<const double> w,
                                        std::span<const double> b) {
  return project_patch_features(compute_patch_features(img, grid), w, b);
}

// Grid cells whose centers fall inside the box, in row-major order. The box
// lives in [0, 1000] coordinates; cell centers sit at half-integer grid
// positions. Thin boxes that trap no center fall back to the single cell
// containing the box center.
inline std::vector<int> ros_cells(int grid, const NormalizedBox& box) {
  std::vector<int> cols, rows;
  const double unit = 1000.0 / grid;
  for (int col = 0; col < grid; ++col) {
    double cx = (col + 0.5) * unit;
    if (cx >= box.x0 && cx <= box.x1) cols.push_back(col);
  }
  for (int row = 0; row < grid; ++row) {
    double cy = (row + 0.5) * unit;
    if (cy >= box.y0 && cy <= box.y1) rows.push_back(row);
  }
  std::vector<int> cells;
  if (!cols.empty() && !rows.empty()) {
    cells.reserve(cols.size() * rows.size());
    for (int r : rows)
      for (int c : cols) cells.push_back(r * grid + c);
    return cells;
  }
  double bx = 0.5 * (box.x0 + box.x1) / unit;
  double by = 0.5 * (box.y0 + box.y1) / unit;
  int col = std::min(grid - 1, std::max(0, static_cast<int>(std::floor(bx))));
  int row = std::min(grid - 1, std::max(0, static_cast<int>(std::floor(by))));
  cells.push_back(row * grid + col);
  return cells;
}

// Mean of the covered cells.
inline std::vector<double> ros_pool(const FeatureGrid& grid, const NormalizedBox& box) {
  std::vector<int> cells = ros_cells(grid.p, box);
  std::vector<double> out(static_cast<size_t>(grid.c), 0.0);
  for (int idx : cells) {
    auto cell = grid.cell(idx);
    for (int k = 0; k < grid.c; ++k) out[static_cast<size_t>(k)] += cell[static_cast<size_t>(k)];
  }
  const double inv = 1.0 / static_cast<double>(cells.size());
  for (double& v : out) v *= inv;
  return out;
}

// Sidecar table of per-tag vectors (tag_vectors.tsv: name, tab, comma-joined
// floats). Tags absent from the file get a deterministic pseudo-random vector
// seeded from the tag name bytes.
class TagVectorTable {
 public:
  TagVectorTable() = default;

  static TagVectorTable load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::IoError, "cannot open tag vectors " + path.string());
    TagVectorTable table;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
      if (line.empty()) continue;
      size_t tab = line.find('\t');
      if (tab == std::string::npos)
        fail(Errc::DataError, "tag vector line " + std::to_string(lineno) + ": missing tab");
      std::string name = line.substr(0, tab);
      std::vector<double> vec;
      size_t pos = tab + 1;
      while (pos <= line.size()) {
        size_t comma = line.find(',', pos);
        if (comma == std::string::npos) comma = line.size();
        try {
          vec.push_back(std::stod(line.substr(pos, comma - pos)));
        } catch (const std::exception&) {
          fail(Errc::DataError, "tag vector line " + std::to_string(lineno) + ": bad number");
        }
        pos = comma + 1;
        if (comma == line.size()) break;
      }
      table.vectors_[name] = std::move(vec);
    }
    return table;
  }

  bool has(const std::string& name) const { return vectors_.count(name) != 0; }

  // Returns the stored vector resized/truncated to dim, or the deterministic
  // fallback when the tag is absent.
  std::vector<double> get(const std::string& name, int dim) const {
    auto it = vectors_.find(name);
    if (it != vectors_.end()) {
      std::vector<double> v = it->second;
      v.resize(static_cast<size_t>(dim), 0.0);
      return v;
    }
    return fallback(name, dim);
  }

  static std::vector<double> fallback(const std::string& name, int dim) {
    uint64_t seed = 1469598103934665603ULL;  // FNV-1a over the tag name bytes
    for (unsigned char c : name) {
      seed ^= c;
      seed *= 1099511628211ULL;
    }
    Rng rng(seed);
    std::vector<double> v(static_cast<size_t>(dim));
    for (double& x : v) x = (rng.uniform() * 2.0 - 1.0) * 0.05;
    return v;
  }

 private:
  std::map<std::string, std::vector<double>> vectors_;
};

}  // namespace weblm
