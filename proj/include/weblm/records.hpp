#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "weblm/errors.hpp"
#include "weblm/geometry.hpp"
#include "weblm/model.hpp"
#include "weblm/objectives.hpp"
#include "weblm/sequence.hpp"

namespace weblm {

inline uint64_t fnv1a64(const void* data, size_t len, uint64_t h = 1469598103934665603ULL) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string fnv1a64_hex(const std::string& bytes) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
  return buf;
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::IoError, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// One self-contained pre-training record. Everything the encoder needs except
// the raster pixels, which are referenced by path.
struct PretrainRecord {
  uint64_t id = 0;
  uint64_t seed = 0;
  std::string page_id;
  std::string segment_path;  // "node:<preorder>" or "run:<anchor>:<first>-<last>"
  std::string raster_path;   // relative to the bundle directory
  int32_t crop[4] = {0, 0, 0, 0};  // segment region in page pixels
  int32_t page_w = 0, page_h = 0;

  // token sequence
  std::vector<int32_t> ids;
  std::vector<uint8_t> kinds;   // TokenKind
  std::vector<uint8_t> skinds;  // StructureKind
  std::vector<uint8_t> segs;    // SegmentId
  std::vector<int32_t> nodes;
  std::vector<int32_t> tags;
  std::vector<NormalizedBox> boxes;  // clean boxes

  // objective targets
  std::vector<int32_t> masked_ids;
  std::vector<int32_t> mlm_labels;
  std::vector<TspPairInput> pairs;
  std::vector<uint8_t> vmd_labels;
  std::vector<NormalizedBox> vmd_boxes;  // effective boxes after perturbation

  int32_t length() const { return static_cast<int32_t>(ids.size()); }
};

namespace recio {

inline constexpr uint32_t kRecordMagic = 0x574C5243;  // "WLRC"

template <class T>
void put(std::string& out, const T& v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

inline void put_str(std::string& out, const std::string& s) {
  put<uint32_t>(out, static_cast<uint32_t>(s.size()));
  out.append(s);
}

inline void put_box(std::string& out, const NormalizedBox& b) {
  put<uint16_t>(out, static_cast<uint16_t>(b.x0));
  put<uint16_t>(out, static_cast<uint16_t>(b.x1));
  put<uint16_t>(out, static_cast<uint16_t>(b.y0));
  put<uint16_t>(out, static_cast<uint16_t>(b.y1));
  put<uint16_t>(out, static_cast<uint16_t>(b.w));
  put<uint16_t>(out, static_cast<uint16_t>(b.h));
}

struct Cursor {
  const char* p;
  size_t left;

  template <class T>
  T get() {
    if (left < sizeof(T)) fail(Errc::DataError, "truncated record");
    T v;
    std::memcpy(&v, p, sizeof(T));
    p += sizeof(T);
    left -= sizeof(T);
    return v;
  }

  std::string get_str() {
    uint32_t n = get<uint32_t>();
    if (left < n) fail(Errc::DataError, "truncated record string");
    std::string s(p, n);
    p += n;
    left -= n;
    return s;
  }

  NormalizedBox get_box() {
    NormalizedBox b;
    b.x0 = get<uint16_t>();
    b.x1 = get<uint16_t>();
    b.y0 = get<uint16_t>();
    b.y1 = get<uint16_t>();
    b.w = get<uint16_t>();
    b.h = get<uint16_t>();
    return b;
  }
};

}  // namespace recio

inline std::string encode_record(const PretrainRecord& r) {
  std::string out;
  recio::put<uint32_t>(out, recio::kRecordMagic);
  recio::put<uint64_t>(out, r.id);
  recio::put<uint64_t>(out, r.seed);
  recio::put_str(out, r.page_id);
  recio::put_str(out, r.segment_path);
  recio::put_str(out, r.raster_path);
  for (int k = 0; k < 4; ++k) recio::put<int32_t>(out, r.crop[k]);
  recio::put<int32_t>(out, r.page_w);
  recio::put<int32_t>(out, r.page_h);
  const uint32_t n = static_cast<uint32_t>(r.ids.size());
  recio::put<uint32_t>(out, n);
  for (uint32_t i = 0; i < n; ++i) {
    recio::put<int32_t>(out, r.ids[i]);
    recio::put<uint8_t>(out, r.kinds[i]);
    recio::put<uint8_t>(out, r.skinds[i]);
    recio::put<uint8_t>(out, r.segs[i]);
    recio::put<int32_t>(out, r.nodes[i]);
    recio::put<int32_t>(out, r.tags[i]);
    recio::put_box(out, r.boxes[i]);
  }
  for (uint32_t i = 0; i < n; ++i) recio::put<int32_t>(out, r.masked_ids[i]);
  for (uint32_t i = 0; i < n; ++i) recio::put<int32_t>(out, r.mlm_labels[i]);
  recio::put<uint32_t>(out, static_cast<uint32_t>(r.pairs.size()));
  for (const auto& p : r.pairs) {
    recio::put<uint32_t>(out, static_cast<uint32_t>(p.structure_pos));
    recio::put<uint32_t>(out, static_cast<uint32_t>(p.content_pos));
    recio::put<uint8_t>(out, p.label);
  }
  for (uint32_t i = 0; i < n; ++i) recio::put<uint8_t>(out, r.vmd_labels[i]);
  for (uint32_t i = 0; i < n; ++i) recio::put_box(out, r.vmd_boxes[i]);
  return out;
}

inline PretrainRecord decode_record(const char* data, size_t len) {
  recio::Cursor c{data, len};
  if (c.get<uint32_t>() != recio::kRecordMagic) fail(Errc::DataError, "bad record magic");
  PretrainRecord r;
  r.id = c.get<uint64_t>();
  r.seed = c.get<uint64_t>();
  r.page_id = c.get_str();
  r.segment_path = c.get_str();
  r.raster_path = c.get_str();
  for (int k = 0; k < 4; ++k) r.crop[k] = c.get<int32_t>();
  r.page_w = c.get<int32_t>();
  r.page_h = c.get<int32_t>();
  const uint32_t n = c.get<uint32_t>();
  if (n > (1u << 20)) fail(Errc::DataError, "implausible record length");
  r.ids.resize(n);
  r.kinds.resize(n);
  r.skinds.resize(n);
  r.segs.resize(n);
  r.nodes.resize(n);
  r.tags.resize(n);
  r.boxes.resize(n);
  for (uint32_t i = 0; i < n; ++i) {
    r.ids[i] = c.get<int32_t>();
    r.kinds[i] = c.get<uint8_t>();
    r.skinds[i] = c.get<uint8_t>();
    r.segs[i] = c.get<uint8_t>();
    r.nodes[i] = c.get<int32_t>();
    r.tags[i] = c.get<int32_t>();
    r.boxes[i] = c.get_box();
  }
  r.masked_ids.resize(n);
  r.mlm_labels.resize(n);
  for (uint32_t i = 0; i < n; ++i) r.masked_ids[i] = c.get<int32_t>();
  for (uint32_t i = 0; i < n; ++i) r.mlm_labels[i] = c.get<int32_t>();
  const uint32_t np = c.get<uint32_t>();
  if (np > (1u << 22)) fail(Errc::DataError, "implausible pair count");
  r.pairs.resize(np);
  for (uint32_t i = 0; i < np; ++i) {
    r.pairs[i].structure_pos = static_cast<int32_t>(c.get<uint32_t>());
    r.pairs[i].content_pos = static_cast<int32_t>(c.get<uint32_t>());
    r.pairs[i].label = c.get<uint8_t>();
  }
  r.vmd_labels.resize(n);
  r.vmd_boxes.resize(n);
  for (uint32_t i = 0; i < n; ++i) r.vmd_labels[i] = c.get<uint8_t>();
  for (uint32_t i = 0; i < n; ++i) r.vmd_boxes[i] = c.get_box();
  if (c.left != 0) fail(Errc::DataError, "trailing bytes in record");
  return r;
}

// Rebuilds the Token view and re-checks the construction invariants.
inline std::vector<Token> record_tokens(const PretrainRecord& r, const SpecialIds& sp) {
  std::vector<Token> tokens;
  tokens.reserve(r.ids.size());
  for (size_t i = 0; i < r.ids.size(); ++i) {
    Token t;
    t.id = r.ids[i];
    t.kind = static_cast<TokenKind>(r.kinds[i]);
    t.skind = static_cast<StructureKind>(r.skinds[i]);
    t.seg = static_cast<SegmentId>(r.segs[i]);
    t.node = r.nodes[i];
    t.tag = r.tags[i];
    t.pos = static_cast<int32_t>(i);
    tokens.push_back(t);
  }
  validate_sequence_layout(tokens, sp);
  return tokens;
}

// Shards on disk: shard_NNNN.bin holds length-prefixed binary records,
// shard_NNNN.jsonl one metadata line per record, manifest.json the checksums.
struct ShardWriter {
  std::filesystem::path dir;
  int shard_size = 64;
  std::string bin;
  std::string meta;
  int in_shard = 0;
  int shard_index = 0;
  uint64_t total = 0;
  nlohmann::json shards = nlohmann::json::array();

  explicit ShardWriter(std::filesystem::path out_dir, int per_shard = 64)
      : dir(std::move(out_dir)), shard_size(per_shard) {
    std::filesystem::create_directories(dir);
  }

  void add(const PretrainRecord& r) {
    std::string payload = encode_record(r);
    nlohmann::json j;
    j["record"] = r.id;
    j["page"] = r.page_id;
    j["segment"] = r.segment_path;
    j["seed"] = r.seed;
    j["tokens"] = r.ids.size();
    j["offset"] = bin.size();
    j["bytes"] = payload.size();
    meta += j.dump();
    meta += '\n';
    uint64_t len = payload.size();
    bin.append(reinterpret_cast<const char*>(&len), sizeof(len));
    bin += payload;
    ++in_shard;
    ++total;
    if (in_shard >= shard_size) flush();
  }

  void flush() {
    if (in_shard == 0) return;
    char name[32];
    std::snprintf(name, sizeof(name), "shard_%04d", shard_index);
    std::string bin_name = std::string(name) + ".bin";
    std::string meta_name = std::string(name) + ".jsonl";
    write(dir / bin_name, bin);
    write(dir / meta_name, meta);
    nlohmann::json j;
    j["bin"] = bin_name;
    j["meta"] = meta_name;
    j["records"] = in_shard;
    j["bin_fnv64"] = fnv1a64_hex(bin);
    j["meta_fnv64"] = fnv1a64_hex(meta);
    shards.push_back(j);
    bin.clear();
    meta.clear();
    in_shard = 0;
    ++shard_index;
  }

  static void write(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(Errc::IoError, "cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
};

struct ShardSet {
  std::filesystem::path dir;
  nlohmann::json manifest;
  std::vector<PretrainRecord> records;

  static ShardSet load(const std::filesystem::path& dir, bool verify = true) {
    ShardSet set;
    set.dir = dir;
    const auto manifest_path = dir / "manifest.json";
    auto text = read_file_bytes(manifest_path);
    set.manifest = nlohmann::json::parse(text, nullptr, false);
    if (set.manifest.is_discarded())
      fail(Errc::DataError, "malformed manifest " + manifest_path.string());
    for (const auto& shard : set.manifest.at("shards")) {
      const std::string bin_name = shard.at("bin").get<std::string>();
      std::string bytes = read_file_bytes(dir / bin_name);
      if (verify && fnv1a64_hex(bytes) != shard.at("bin_fnv64").get<std::string>())
        fail(Errc::ChecksumError, "checksum mismatch in shard " + bin_name);
      if (verify) {
        std::string meta_bytes = read_file_bytes(dir / shard.at("meta").get<std::string>());
        if (fnv1a64_hex(meta_bytes) != shard.at("meta_fnv64").get<std::string>())
          fail(Errc::ChecksumError,
               "checksum mismatch in shard " + shard.at("meta").get<std::string>());
      }
      size_t pos = 0;
      while (pos < bytes.size()) {
        if (pos + sizeof(uint64_t) > bytes.size())
          fail(Errc::DataError, "truncated shard " + bin_name);
        uint64_t len;
        std::memcpy(&len, bytes.data() + pos, sizeof(len));
        pos += sizeof(len);
        if (pos + len > bytes.size()) fail(Errc::DataError, "truncated shard " + bin_name);
        set.records.push_back(decode_record(bytes.data() + pos, len));
        pos += len;
      }
    }
    return set;
  }
};

}  // namespace weblm
