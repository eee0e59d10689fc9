#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "weblm/records.hpp"
#include "weblm/sequence.hpp"
#include "weblm/tags.hpp"

namespace weblm {

struct StatsReport {
  uint64_t records = 0;
  std::vector<uint64_t> length_hist;  // 32-token buckets
  std::map<std::string, uint64_t> tag_freq;
  uint64_t tsp_counts[3] = {0, 0, 0};
  uint64_t pairs_total = 0;
  double max_other_fraction = 0.0;
  uint64_t mlm_selected = 0;
  uint64_t content_positions = 0;
  uint64_t vmd_selected = 0;
  uint64_t total_positions = 0;
  uint64_t vmd_enlarged = 0;
  uint64_t vmd_reduced = 0;
  uint64_t vmd_ambiguous = 0;  // clamping erased the direction

  double mlm_rate() const {
    return content_positions ? static_cast<double>(mlm_selected) / content_positions : 0.0;
  }
  double vmd_rate() const {
    return total_positions ? static_cast<double>(vmd_selected) / total_positions : 0.0;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["records"] = records;
    j["length_hist"] = length_hist;
    j["tag_freq"] = tag_freq;
    j["tsp"] = {{"parent_child", tsp_counts[0]},
                {"ancestor_descendant", tsp_counts[1]},
                {"other", tsp_counts[2]},
                {"pairs", pairs_total},
                {"max_other_fraction", max_other_fraction}};
    j["mlm"] = {{"selected", mlm_selected},
                {"content_positions", content_positions},
                {"rate", mlm_rate()}};
    j["vmd"] = {{"selected", vmd_selected},
                {"positions", total_positions},
                {"rate", vmd_rate()},
                {"enlarged", vmd_enlarged},
                {"reduced", vmd_reduced},
                {"ambiguous", vmd_ambiguous}};
    return j;
  }

  void print(std::ostream& out) const {
    out << "records: " << records << "\n";
    out << "sequence length histogram (bucket = 32 tokens):\n";
    for (size_t b = 0; b < length_hist.size(); ++b) {
      if (!length_hist[b]) continue;
      out << "  [" << b * 32 << ", " << (b + 1) * 32 << "): " << length_hist[b] << "\n";
    }
    out << "tag frequency:\n";
    for (const auto& [name, count] : tag_freq) out << "  " << name << ": " << count << "\n";
    out << "tsp pairs: " << pairs_total << " (parent-child " << tsp_counts[0]
        << ", ancestor-descendant " << tsp_counts[1] << ", other " << tsp_counts[2]
        << ", max other fraction " << max_other_fraction << ")\n";
    out << "mlm: selected " << mlm_selected << " of " << content_positions
        << " content positions (rate " << mlm_rate() << ")\n";
    out << "vmd: selected " << vmd_selected << " of " << total_positions << " positions (rate "
        << vmd_rate() << "; enlarged " << vmd_enlarged << ", reduced " << vmd_reduced
        << ", ambiguous " << vmd_ambiguous << ")\n";
  }
};

inline StatsReport compute_stats(const ShardSet& shards, const TagVocab& tags) {
  StatsReport report;
  report.length_hist.assign(20, 0);
  for (const auto& rec : shards.records) {
    ++report.records;
    size_t bucket = std::min<size_t>(report.length_hist.size() - 1,
                                     static_cast<size_t>(rec.length()) / 32);
    ++report.length_hist[bucket];
    uint64_t other = 0;
    for (const auto& p : rec.pairs) {
      ++report.tsp_counts[p.label > 2 ? 2 : p.label];
      if (p.label == 2) ++other;
    }
    report.pairs_total += rec.pairs.size();
    if (!rec.pairs.empty()) {
      double frac = static_cast<double>(other) / static_cast<double>(rec.pairs.size());
      report.max_other_fraction = std::max(report.max_other_fraction, frac);
    }
    for (int i = 0; i < rec.length(); ++i) {
      ++report.total_positions;
      ++report.tag_freq[tags.name(rec.tags[static_cast<size_t>(i)])];
      if (static_cast<TokenKind>(rec.kinds[static_cast<size_t>(i)]) == TokenKind::Content) {
        ++report.content_positions;
        if (rec.mlm_labels[static_cast<size_t>(i)] != kIgnoreLabel) ++report.mlm_selected;
      }
      if (rec.vmd_labels[static_cast<size_t>(i)]) {
        ++report.vmd_selected;
        const NormalizedBox& clean = rec.boxes[static_cast<size_t>(i)];
        const NormalizedBox& eff = rec.vmd_boxes[static_cast<size_t>(i)];
        int delta = (eff.w + eff.h) - (clean.w + clean.h);
        if (delta > 0) ++report.vmd_enlarged;
        else if (delta < 0) ++report.vmd_reduced;
        else ++report.vmd_ambiguous;
      }
    }
  }
  return report;
}

}  // namespace weblm
