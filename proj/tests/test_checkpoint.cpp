#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "weblm/checkpoint.hpp"
#include "weblm/records.hpp"

using namespace weblm;

namespace {

ModelConfig cfg_for_test() {
  ModelConfig cfg;
  cfg.hidden = 12;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.vocab = 24;
  cfg.tags = 5;
  cfg.max_pos = 16;
  cfg.grid = 2;
  cfg.image_side = 8;
  cfg.seed = 99;
  return cfg;
}

std::vector<std::string> names(int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back("t" + std::to_string(i));
  return out;
}

}  // namespace

TEST_CASE("checkpoint: byte-exact round trip with optimizer state") {
  ModelConfig cfg = cfg_for_test();
  ModelParams params = ModelParams::init(cfg, names(cfg.tags));
  OptimizerState state = OptimizerState::init(cfg);
  state.step = 17;
  Rng rng(4);
  state.m.visit([&](const std::string&, Tensor& t) {
    for (double& v : t.v) v = rng.normal();
  });

  auto dir = std::filesystem::temp_directory_path();
  auto p1 = dir / "weblm_ck_a.bin";
  auto p2 = dir / "weblm_ck_b.bin";
  save_checkpoint(p1, params, &state, 123);
  Checkpoint back = load_checkpoint(p1);
  CHECK(back.total_steps == 123);
  REQUIRE(back.opt.has_value());
  CHECK(back.opt->step == 17);
  save_checkpoint(p2, back.params, &*back.opt, back.total_steps);
  CHECK(read_file_bytes(p1) == read_file_bytes(p2));
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST_CASE("checkpoint: f32 payload loads with reduced precision") {
  ModelConfig cfg = cfg_for_test();
  ModelParams params = ModelParams::init(cfg, names(cfg.tags));
  auto path = std::filesystem::temp_directory_path() / "weblm_ck_f32.bin";
  save_checkpoint(path, params, nullptr, 0, /*f32_payload=*/true);
  Checkpoint back = load_checkpoint(path);
  std::filesystem::remove(path);
  double max_err = 0;
  std::vector<const Tensor*> a, b;
  params.visit([&](const std::string&, const Tensor& t) { a.push_back(&t); });
  back.params.visit([&](const std::string&, const Tensor& t) { b.push_back(&t); });
  for (size_t k = 0; k < a.size(); ++k)
    for (size_t i = 0; i < a[k]->size(); ++i)
      max_err = std::max(max_err, std::abs(a[k]->v[i] - b[k]->v[i]));
  CHECK(max_err < 1e-6);
  CHECK(max_err > 0.0);  // f32 truncation is visible at f64
}

TEST_CASE("checkpoint: corrupted files are rejected") {
  ModelConfig cfg = cfg_for_test();
  ModelParams params = ModelParams::init(cfg, names(cfg.tags));
  auto path = std::filesystem::temp_directory_path() / "weblm_ck_bad.bin";
  save_checkpoint(path, params);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    uint32_t junk = 0xDEADBEEF;
    f.write(reinterpret_cast<const char*>(&junk), sizeof(junk));
  }
  CHECK_THROWS_AS(load_checkpoint(path), Error);
  std::filesystem::remove(path);
}

TEST_CASE("record encode/decode round trip") {
  PretrainRecord r;
  r.id = 42;
  r.seed = 777;
  r.page_id = "page_00003";
  r.segment_path = "node:5";
  r.raster_path = "page_00003/screenshot.ppm";
  r.crop[0] = 1; r.crop[1] = 2; r.crop[2] = 30; r.crop[3] = 40;
  r.page_w = 640;
  r.page_h = 480;
  for (int i = 0; i < 9; ++i) {
    r.ids.push_back(i + 1);
    r.kinds.push_back(i == 0 || i == 4 || i == 8 ? 0 : (i < 4 ? 1 : 2));
    r.skinds.push_back(3);
    r.segs.push_back(i < 5 ? 0 : 1);
    r.nodes.push_back(i % 3);
    r.tags.push_back(i % 2);
    r.boxes.push_back(NormalizedBox::from_corners(i, i + 10, i, i + 20));
    r.masked_ids.push_back(i + 1);
    r.mlm_labels.push_back(i == 6 ? 6 : kIgnoreLabel);
    r.vmd_labels.push_back(i == 2 ? 1 : 0);
    r.vmd_boxes.push_back(NormalizedBox::from_corners(i, i + 15, i, i + 25));
  }
  r.pairs.push_back({1, 6, 0});
  r.pairs.push_back({2, 7, 2});

  std::string bytes = encode_record(r);
  PretrainRecord back = decode_record(bytes.data(), bytes.size());
  CHECK(back.id == r.id);
  CHECK(back.seed == r.seed);
  CHECK(back.page_id == r.page_id);
  CHECK(back.segment_path == r.segment_path);
  CHECK(back.raster_path == r.raster_path);
  CHECK(back.page_w == r.page_w);
  CHECK(back.ids == r.ids);
  CHECK(back.kinds == r.kinds);
  CHECK(back.segs == r.segs);
  CHECK(back.nodes == r.nodes);
  CHECK(back.tags == r.tags);
  CHECK(back.mlm_labels == r.mlm_labels);
  CHECK(back.vmd_labels == r.vmd_labels);
  REQUIRE(back.pairs.size() == 2);
  CHECK(back.pairs[1].label == 2);
  for (size_t i = 0; i < r.boxes.size(); ++i) {
    CHECK(back.boxes[i] == r.boxes[i]);
    CHECK(back.vmd_boxes[i] == r.vmd_boxes[i]);
  }
  CHECK(std::string(encode_record(back)) == bytes);
  // truncation is caught
  CHECK_THROWS_AS(decode_record(bytes.data(), bytes.size() - 3), Error);
}
