#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "weblm/geometry.hpp"
#include "weblm/image.hpp"
#include "weblm/model.hpp"
#include "weblm/rng.hpp"
#include "weblm/visual.hpp"

using namespace weblm;

TEST_CASE("resize: identity at the target size") {
  Image img = Image::filled(224, 224, 0.2, 0.4, 0.6);
  Image out = resize_bilinear(img, 224);
  CHECK(out.px == img.px);
}

TEST_CASE("resize: constant image stays constant") {
  Image img = Image::filled(448, 448, 0.3, 0.5, 0.7);
  Image out = resize_bilinear(img, 224);
  for (size_t i = 0; i < out.px.size(); i += 3) {
    CHECK(out.px[i] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(out.px[i + 1] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(out.px[i + 2] == doctest::Approx(0.7).epsilon(1e-12));
  }
}

TEST_CASE("resize: 2x2 checkerboard to 4x4 matches hand-computed weights") {
  Image img = Image::filled(2, 2, 0, 0, 0);
  img.at(0, 0, 0) = 1.0;
  img.at(1, 1, 0) = 1.0;
  Image out = resize_bilinear(img, 4);
  // with corner alignment, f(y, x) = (1-x)(1-y) + xy at x,y in {0, 1/3, 2/3, 1}
  const double g[4] = {0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0};
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      double expect = (1 - g[x]) * (1 - g[y]) + g[x] * g[y];
      CHECK(out.at(y, x, 0) == doctest::Approx(expect).epsilon(1e-12));
    }
  CHECK(out.at(0, 0, 0) == doctest::Approx(1.0));
  CHECK(out.at(0, 3, 0) == doctest::Approx(0.0));
  CHECK(out.at(3, 0, 0) == doctest::Approx(0.0));
  CHECK(out.at(3, 3, 0) == doctest::Approx(1.0));
}

TEST_CASE("resize: zero-area input is rejected") {
  Image img;
  CHECK_THROWS_WITH_AS(resize_bilinear(img, 10), doctest::Contains("InvalidImage"), Error);
}

TEST_CASE("ppm round trip preserves quantized pixels") {
  Rng rng(5);
  Image img = Image::filled(13, 9, 0, 0, 0);
  for (double& v : img.px) v = rng.uniform();
  auto path = std::filesystem::temp_directory_path() / "weblm_img_test.ppm";
  save_ppm(img, path);
  Image back = load_image(path);
  REQUIRE(back.w == img.w);
  REQUIRE(back.h == img.h);
  for (size_t i = 0; i < img.px.size(); ++i)
    CHECK(back.px[i] == doctest::Approx(img.px[i]).epsilon(0.005));
  std::filesystem::remove(path);
}

#if WEBLM_HAS_PNG
TEST_CASE("png round trip preserves quantized pixels") {
  Rng rng(6);
  Image img = Image::filled(17, 11, 0, 0, 0);
  for (double& v : img.px) v = rng.uniform();
  auto path = std::filesystem::temp_directory_path() / "weblm_img_test.png";
  save_png(img, path);
  Image back = load_image(path);
  REQUIRE(back.w == img.w);
  REQUIRE(back.h == img.h);
  for (size_t i = 0; i < img.px.size(); ++i)
    CHECK(back.px[i] == doctest::Approx(img.px[i]).epsilon(0.005));
  std::filesystem::remove(path);
}
#endif

TEST_CASE("patch features: zero projection gives a zero grid") {
  Image img = Image::filled(32, 32, 0.3, 0.6, 0.9);
  PatchFeatures pf = compute_patch_features(img, 4);
  std::vector<double> w(8 * kPatchFeatureDim, 0.0), b(8, 0.0);
  FeatureGrid grid = project_patch_features(pf, w, b);
  for (double v : grid.v) CHECK(v == 0.0);
}

TEST_CASE("patch features: constant image gives equal color channels per cell") {
  Image img = Image::filled(32, 32, 0.25, 0.5, 0.75);
  PatchFeatures pf = compute_patch_features(img, 4);
  for (int idx = 0; idx < 16; ++idx) {
    auto f = pf.cell(idx);
    CHECK(f[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(f[1] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(f[2] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(f[3] >= 0.0);
    CHECK(f[3] <= 1.0);
  }
  // identity-ish projection: each output dim reads one feature
  std::vector<double> w(3 * kPatchFeatureDim, 0.0), b(3, 0.0);
  w[0] = 1.0;                           // out0 = mean r
  w[kPatchFeatureDim + 1] = 1.0;        // out1 = mean g
  w[2 * kPatchFeatureDim + 2] = 1.0;    // out2 = mean b
  FeatureGrid grid = project_patch_features(pf, w, b);
  for (int idx = 0; idx < 16; ++idx) {
    auto cell = grid.cell(idx);
    CHECK(cell[0] == doctest::Approx(0.25));
    CHECK(cell[1] == doctest::Approx(0.5));
    CHECK(cell[2] == doctest::Approx(0.75));
  }
}

TEST_CASE("patch projection gradients match finite differences") {
  Rng rng(77);
  Image img = Image::filled(16, 16, 0, 0, 0);
  for (double& v : img.px) v = rng.uniform();
  PatchFeatures pf = compute_patch_features(img, 4);
  const int c = 6;
  std::vector<double> w(static_cast<size_t>(c) * kPatchFeatureDim), b(static_cast<size_t>(c));
  for (double& v : w) v = rng.normal() * 0.5;
  for (double& v : b) v = rng.normal() * 0.5;

  // d grid[cell][o] / d w[o][k] = feat[cell][k]; d / d b[o] = 1
  for (int trial = 0; trial < 20; ++trial) {
    int cell = static_cast<int>(rng.below(16));
    int o = static_cast<int>(rng.below(static_cast<uint64_t>(c)));
    int k = static_cast<int>(rng.below(kPatchFeatureDim));
    size_t widx = static_cast<size_t>(o) * kPatchFeatureDim + static_cast<size_t>(k);
    const double eps = 1e-6;
    double saved = w[widx];
    w[widx] = saved + eps;
    double up = project_patch_features(pf, w, b).cell(cell)[static_cast<size_t>(o)];
    w[widx] = saved - eps;
    double dn = project_patch_features(pf, w, b).cell(cell)[static_cast<size_t>(o)];
    w[widx] = saved;
    double numeric = (up - dn) / (2 * eps);
    double analytic = pf.cell(cell)[static_cast<size_t>(k)];
    CHECK(std::abs(numeric - analytic) / std::max({std::abs(analytic), std::abs(numeric), 1e-8}) <
          1e-4);
  }
}

TEST_CASE("normalize_box: scaling, full page, identity on width 1000") {
  CHECK(normalize_box({125, 0, 0, 0}, 500, 500).x0 == 250);
  NormalizedBox full = normalize_box({0, 0, 640, 480}, 640, 480);
  CHECK(full == NormalizedBox::from_corners(0, 1000, 0, 1000));
  CHECK(full.w == 1000);
  CHECK(full.h == 1000);
  CHECK(normalize_box({333, 0, 0, 0}, 1000, 1000).x0 == 333);
}

TEST_CASE("normalize_box: monotone, clamps out-of-page boxes, exact on divisors") {
  for (int page : {250, 500, 1000}) {
    int prev = -1;
    for (int x = 0; x <= page; x += 5) {
      int nx = normalize_box({static_cast<double>(x), 0, 0, 0}, page, page).x0;
      CHECK(nx >= prev);
      prev = nx;
      if (1000 % page == 0) CHECK(nx == x * (1000 / page));
    }
  }
  NormalizedBox clamped = normalize_box({-50, -10, 2000, 100}, 500, 500);
  CHECK(clamped.x0 == 0);
  CHECK(clamped.x1 == 1000);
  CHECK(clamped.valid());
}

TEST_CASE("ros_pool: whole-page box means all cells") {
  Rng rng(3);
  FeatureGrid grid;
  grid.p = 4;
  grid.c = 3;
  grid.v.resize(4 * 4 * 3);
  for (double& v : grid.v) v = rng.normal();
  auto out = ros_pool(grid, NormalizedBox::from_corners(0, 1000, 0, 1000));
  std::vector<double> expect(3, 0.0);
  for (int idx = 0; idx < 16; ++idx)
    for (int k = 0; k < 3; ++k) expect[static_cast<size_t>(k)] += grid.cell(idx)[static_cast<size_t>(k)];
  for (int k = 0; k < 3; ++k)
    CHECK(out[static_cast<size_t>(k)] == expect[static_cast<size_t>(k)] / 16.0);
}

TEST_CASE("ros_pool: a box inside one cell falls back to that cell") {
  Rng rng(4);
  FeatureGrid grid;
  grid.p = 4;
  grid.c = 2;
  grid.v.resize(4 * 4 * 2);
  for (double& v : grid.v) v = rng.normal();
  // cell (0,0) spans [0,250)x[0,250) with center at 125; a thin box away from
  // the center traps nothing
  auto out = ros_pool(grid, NormalizedBox::from_corners(10, 40, 10, 40));
  CHECK(out[0] == grid.cell(0)[0]);
  CHECK(out[1] == grid.cell(0)[1]);
}

TEST_CASE("ros_pool: bit-exact against the brute-force oracle on random boxes") {
  Rng rng(9);
  FeatureGrid grid;
  grid.p = 14;
  grid.c = 5;
  grid.v.resize(14 * 14 * 5);
  for (double& v : grid.v) v = rng.normal();
  for (int trial = 0; trial < 2000; ++trial) {
    int x0 = static_cast<int>(rng.below(1001));
    int x1 = x0 + static_cast<int>(rng.below(static_cast<uint64_t>(1001 - x0)));
    int y0 = static_cast<int>(rng.below(1001));
    int y1 = y0 + static_cast<int>(rng.below(static_cast<uint64_t>(1001 - y0)));
    NormalizedBox box = NormalizedBox::from_corners(x0, x1, y0, y1);
    auto got = ros_pool(grid, box);
    auto expect = oracles::brute_force_pool(grid, box);
    REQUIRE(got.size() == expect.size());
    for (size_t k = 0; k < got.size(); ++k) REQUIRE(got[k] == expect[k]);
  }
}

TEST_CASE("ros_pool: output ignores grid content outside the pooled cells") {
  Rng rng(11);
  FeatureGrid grid;
  grid.p = 8;
  grid.c = 3;
  grid.v.resize(8 * 8 * 3);
  for (double& v : grid.v) v = rng.normal();
  NormalizedBox box = NormalizedBox::from_corners(100, 400, 100, 400);
  auto covered = ros_cells(grid.p, box);
  auto before = ros_pool(grid, box);
  // scribble on every cell outside the covered set
  std::set<int> cov(covered.begin(), covered.end());
  for (int idx = 0; idx < 64; ++idx) {
    if (cov.count(idx)) continue;
    auto cell = grid.cell_mut(idx);
    for (auto& v : cell) v += 100.0;
  }
  auto after = ros_pool(grid, box);
  CHECK(before == after);
}

TEST_CASE("box_embed: zero tables, corner rows, y0 slice locality") {
  const int B = 4;
  Tensor xt = Tensor::zeros({1001, B});
  Tensor yt = Tensor::zeros({1001, B});
  NormalizedBox full = NormalizedBox::from_corners(0, 1000, 0, 1000);
  auto zero = box_embed(full, xt, yt);
  CHECK(zero.size() == 6 * B);
  for (double v : zero) CHECK(v == 0.0);

  Rng rng(21);
  for (double& v : xt.v) v = rng.normal();
  for (double& v : yt.v) v = rng.normal();
  auto got = box_embed(full, xt, yt);
  for (int k = 0; k < B; ++k) {
    CHECK(got[static_cast<size_t>(k)] == xt.at(0, k));            // x(x0 = 0)
    CHECK(got[static_cast<size_t>(B + k)] == xt.at(1000, k));     // x(x1 = 1000)
    CHECK(got[static_cast<size_t>(2 * B + k)] == xt.at(1000, k)); // x(w = 1000)
    CHECK(got[static_cast<size_t>(3 * B + k)] == yt.at(0, k));    // y(y0 = 0)
    CHECK(got[static_cast<size_t>(4 * B + k)] == yt.at(1000, k)); // y(y1)
    CHECK(got[static_cast<size_t>(5 * B + k)] == yt.at(1000, k)); // y(h)
  }

  // two boxes differing only in the y0 field: only the fourth slice changes
  NormalizedBox a = NormalizedBox::from_corners(10, 400, 100, 300);
  NormalizedBox b = a;
  b.y0 = 120;
  auto va = box_embed(a, xt, yt);
  auto vb = box_embed(b, xt, yt);
  for (int k = 0; k < B; ++k) {
    CHECK(va[static_cast<size_t>(k)] == vb[static_cast<size_t>(k)]);
    CHECK(va[static_cast<size_t>(B + k)] == vb[static_cast<size_t>(B + k)]);
    CHECK(va[static_cast<size_t>(2 * B + k)] == vb[static_cast<size_t>(2 * B + k)]);
    CHECK(va[static_cast<size_t>(4 * B + k)] == vb[static_cast<size_t>(4 * B + k)]);
    CHECK(va[static_cast<size_t>(5 * B + k)] == vb[static_cast<size_t>(5 * B + k)]);
  }
  CHECK(va[3 * B] != vb[3 * B]);
}

TEST_CASE("box_embed: mismatched tables are a config error") {
  Tensor xt = Tensor::zeros({1001, 4});
  Tensor yt = Tensor::zeros({1001, 5});
  CHECK_THROWS_WITH_AS(box_embed(NormalizedBox{}, xt, yt), doctest::Contains("ConfigError"),
                       Error);
}

TEST_CASE("hidden dim not divisible by six is rejected at model build") {
  ModelConfig cfg;
  cfg.hidden = 16;
  cfg.heads = 4;
  cfg.vocab = 32;
  cfg.tags = 4;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("ConfigError"), Error);
}

TEST_CASE("perturb_box: worked examples including clamping") {
  NormalizedBox box = NormalizedBox::from_corners(400, 600, 400, 600);
  NormalizedBox big = perturb_box(box, PerturbDirection::Enlarge, 0.5);
  CHECK(big == NormalizedBox::from_corners(350, 650, 350, 650));
  CHECK(big.w == 300);
  CHECK(big.h == 300);
  NormalizedBox small = perturb_box(box, PerturbDirection::Reduce, 0.5);
  CHECK(small == NormalizedBox::from_corners(450, 550, 450, 550));
  CHECK(small.w == 100);

  NormalizedBox edge = NormalizedBox::from_corners(0, 100, 900, 1000);
  NormalizedBox clamped = perturb_box(edge, PerturbDirection::Enlarge, 0.5);
  CHECK(clamped.x0 == 0);
  CHECK(clamped.x1 == 125);
  CHECK(clamped.y0 == 875);
  CHECK(clamped.y1 == 1000);
  CHECK(clamped.valid());

  NormalizedBox zero_scale = perturb_box(box, PerturbDirection::Enlarge, 0.0);
  CHECK(zero_scale == box);
}

TEST_CASE("visual additivity: pooling a zero grid leaves exactly the box embedding") {
  ModelConfig cfg;
  cfg.hidden = 12;
  cfg.layers = 0;
  cfg.heads = 2;
  cfg.vocab = 16;
  cfg.tags = 4;
  cfg.max_pos = 8;
  cfg.grid = 4;
  cfg.image_side = 16;
  ModelParams params = ModelParams::shaped(cfg);  // all zeros
  Rng rng(31);
  for (double& v : params.xtab.v) v = rng.normal();
  for (double& v : params.ytab.v) v = rng.normal();

  PatchFeatures patches = compute_patch_features(Image::filled(16, 16, 0.5, 0.5, 0.5), 4);
  ModelInput input;
  input.patches = &patches;
  input.ids = {3};
  input.tags = {1};
  input.segs = {0};
  input.boxes = {NormalizedBox::from_corners(100, 700, 50, 400)};
  input.mlm_labels = {kIgnoreLabel};
  input.vmd_labels = {0};
  Tensor x = embed_input(params, input);
  auto expect = box_embed(input.boxes[0], params.xtab, params.ytab);
  REQUIRE(static_cast<size_t>(x.cols()) == expect.size());
  for (int k = 0; k < x.cols(); ++k) CHECK(x.at(0, k) == expect[static_cast<size_t>(k)]);
}

TEST_CASE("tag vector sidecar: file rows load, absent tags get stable fallbacks") {
  auto path = std::filesystem::temp_directory_path() / "weblm_tagvec_test.tsv";
  {
    std::ofstream out(path);
    out << "div\t1.5,2.5,3.5\n";
    out << "p\t-1.0,0.0,1.0\n";
  }
  TagVectorTable table = TagVectorTable::load(path);
  std::filesystem::remove(path);
  CHECK(table.has("div"));
  auto div = table.get("div", 3);
  CHECK(div == std::vector<double>{1.5, 2.5, 3.5});
  auto padded = table.get("div", 5);
  CHECK(padded.size() == 5);
  CHECK(padded[3] == 0.0);
  auto fb1 = table.get("span", 4);
  auto fb2 = TagVectorTable::fallback("span", 4);
  CHECK(fb1 == fb2);
  CHECK(TagVectorTable::fallback("span", 4) != TagVectorTable::fallback("nav", 4));
  for (double v : fb1) {
    CHECK(v >= -0.05);
    CHECK(v <= 0.05);
  }
}
