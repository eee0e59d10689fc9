#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "weblm/errors.hpp"
#include "weblm/model.hpp"
#include "weblm/optimizer.hpp"

namespace weblm {

// Single-file binary checkpoint: magic + version, config echo, then named
// tensors (name, dtype, rank, dims, row-major payload). Parameters first,
// then optionally the optimizer moments and step. Round-trips byte-exactly.
namespace ckpt {

inline constexpr uint32_t kMagic = 0x574C4D43;  // "WLMC"
inline constexpr uint32_t kVersion = 1;
inline constexpr uint8_t kDtypeF64 = 0;
inline constexpr uint8_t kDtypeF32 = 1;

template <class T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) fail(Errc::DataError, "truncated checkpoint");
  return v;
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_pod<uint32_t>(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in) {
  uint32_t n = read_pod<uint32_t>(in);
  if (n > (1u << 20)) fail(Errc::DataError, "implausible string length in checkpoint");
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) fail(Errc::DataError, "truncated checkpoint");
  return s;
}

inline void write_tensor(std::ostream& out, const std::string& name, const Tensor& t,
                         uint8_t dtype) {
  write_string(out, name);
  write_pod<uint8_t>(out, dtype);
  write_pod<uint32_t>(out, static_cast<uint32_t>(t.shape.size()));
  for (int d : t.shape) write_pod<uint32_t>(out, static_cast<uint32_t>(d));
  if (dtype == kDtypeF64) {
    out.write(reinterpret_cast<const char*>(t.v.data()),
              static_cast<std::streamsize>(t.v.size() * sizeof(double)));
  } else {
    std::vector<float> f(t.v.begin(), t.v.end());
    out.write(reinterpret_cast<const char*>(f.data()),
              static_cast<std::streamsize>(f.size() * sizeof(float)));
  }
}

inline void read_tensor_into(std::istream& in, const std::string& expect_name, Tensor& t) {
  std::string name = read_string(in);
  if (name != expect_name)
    fail(Errc::DataError, "checkpoint tensor order mismatch: got " + name + ", expected " +
                              expect_name);
  uint8_t dtype = read_pod<uint8_t>(in);
  uint32_t rank = read_pod<uint32_t>(in);
  std::vector<int> shape(rank);
  for (auto& d : shape) d = static_cast<int>(read_pod<uint32_t>(in));
  if (shape != t.shape) fail(Errc::DataError, "checkpoint tensor shape mismatch: " + name);
  if (dtype == kDtypeF64) {
    in.read(reinterpret_cast<char*>(t.v.data()),
            static_cast<std::streamsize>(t.v.size() * sizeof(double)));
    if (!in) fail(Errc::DataError, "truncated checkpoint payload: " + name);
  } else if (dtype == kDtypeF32) {
    std::vector<float> f(t.v.size());
    in.read(reinterpret_cast<char*>(f.data()),
            static_cast<std::streamsize>(f.size() * sizeof(float)));
    if (!in) fail(Errc::DataError, "truncated checkpoint payload: " + name);
    for (size_t i = 0; i < f.size(); ++i) t.v[i] = static_cast<double>(f[i]);
  } else {
    fail(Errc::DataError, "unknown checkpoint dtype");
  }
}

inline void write_config(std::ostream& out, const ModelConfig& cfg) {
  write_pod<int32_t>(out, cfg.hidden);
  write_pod<int32_t>(out, cfg.layers);
  write_pod<int32_t>(out, cfg.heads);
  write_pod<int32_t>(out, cfg.ffn);
  write_pod<int32_t>(out, cfg.vocab);
  write_pod<int32_t>(out, cfg.tags);
  write_pod<int32_t>(out, cfg.max_pos);
  write_pod<int32_t>(out, cfg.grid);
  write_pod<int32_t>(out, cfg.image_side);
  write_pod<double>(out, cfg.dropout);
  write_pod<double>(out, cfg.init_std);
  write_pod<uint64_t>(out, cfg.seed);
  write_pod<double>(out, cfg.w_mlm);
  write_pod<double>(out, cfg.w_tsp);
  write_pod<double>(out, cfg.w_vmd);
}

inline ModelConfig read_config(std::istream& in) {
  ModelConfig cfg;
  cfg.hidden = read_pod<int32_t>(in);
  cfg.layers = read_pod<int32_t>(in);
  cfg.heads = read_pod<int32_t>(in);
  cfg.ffn = read_pod<int32_t>(in);
  cfg.vocab = read_pod<int32_t>(in);
  cfg.tags = read_pod<int32_t>(in);
  cfg.max_pos = read_pod<int32_t>(in);
  cfg.grid = read_pod<int32_t>(in);
  cfg.image_side = read_pod<int32_t>(in);
  cfg.dropout = read_pod<double>(in);
  cfg.init_std = read_pod<double>(in);
  cfg.seed = read_pod<uint64_t>(in);
  cfg.w_mlm = read_pod<double>(in);
  cfg.w_tsp = read_pod<double>(in);
  cfg.w_vmd = read_pod<double>(in);
  return cfg;
}

}  // namespace ckpt

struct Checkpoint {
  ModelParams params;
  std::optional<OptimizerState> opt;
  int64_t total_steps = 0;  // schedule horizon the run was configured with
};

inline void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                            const OptimizerState* opt = nullptr, int64_t total_steps = 0,
                            bool f32_payload = false) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::IoError, "cannot write checkpoint " + path.string());
  const uint8_t dtype = f32_payload ? ckpt::kDtypeF32 : ckpt::kDtypeF64;
  ckpt::write_pod<uint32_t>(out, ckpt::kMagic);
  ckpt::write_pod<uint32_t>(out, ckpt::kVersion);
  ckpt::write_config(out, params.cfg);
  ckpt::write_pod<int64_t>(out, total_steps);
  uint32_t tensor_count = 0;
  params.visit([&](const std::string&, const Tensor&) { ++tensor_count; });
  ckpt::write_pod<uint32_t>(out, tensor_count);
  params.visit([&](const std::string& name, const Tensor& t) {
    ckpt::write_tensor(out, name, t, dtype);
  });
  ckpt::write_pod<uint8_t>(out, opt ? 1 : 0);
  if (opt) {
    ckpt::write_pod<int64_t>(out, opt->step);
    opt->m.visit([&](const std::string& name, const Tensor& t) {
      ckpt::write_tensor(out, "adam.m." + name, t, dtype);
    });
    opt->v.visit([&](const std::string& name, const Tensor& t) {
      ckpt::write_tensor(out, "adam.v." + name, t, dtype);
    });
  }
  if (!out) fail(Errc::IoError, "write failed for checkpoint " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::IoError, "cannot open checkpoint " + path.string());
  if (ckpt::read_pod<uint32_t>(in) != ckpt::kMagic)
    fail(Errc::DataError, "not a checkpoint file: " + path.string());
  if (ckpt::read_pod<uint32_t>(in) != ckpt::kVersion)
    fail(Errc::DataError, "unsupported checkpoint version: " + path.string());
  Checkpoint out;
  ModelConfig cfg = ckpt::read_config(in);
  out.total_steps = ckpt::read_pod<int64_t>(in);
  out.params = ModelParams::shaped(cfg);
  uint32_t tensor_count = ckpt::read_pod<uint32_t>(in);
  uint32_t expect = 0;
  out.params.visit([&](const std::string&, const Tensor&) { ++expect; });
  if (tensor_count != expect) fail(Errc::DataError, "checkpoint tensor count mismatch");
  out.params.visit([&](const std::string& name, Tensor& t) {
    ckpt::read_tensor_into(in, name, t);
  });
  uint8_t has_opt = ckpt::read_pod<uint8_t>(in);
  if (has_opt) {
    OptimizerState st = OptimizerState::init(cfg);
    st.step = ckpt::read_pod<int64_t>(in);
    st.m.visit([&](const std::string& name, Tensor& t) {
      ckpt::read_tensor_into(in, "adam.m." + name, t);
    });
    st.v.visit([&](const std::string& name, Tensor& t) {
      ckpt::read_tensor_into(in, "adam.v." + name, t);
    });
    out.opt = std::move(st);
  }
  return out;
}

}  // namespace weblm
