#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "weblm/errors.hpp"

namespace weblm {

using TagId = int32_t;

// Dense tag-name vocabulary. Listed names map to ids 0..n-1 in list order;
// everything else maps to the reserved unknown id n. The embedding table is
// therefore n+1 rows.
class TagVocab {
 public:
  TagVocab() : TagVocab(default_tags()) {}

  explicit TagVocab(std::vector<std::string> names) : names_(std::move(names)) {
    index_.reserve(names_.size());
    for (size_t i = 0; i < names_.size(); ++i) {
      auto [it, fresh] = index_.emplace(names_[i], static_cast<TagId>(i));
      if (!fresh) fail(Errc::ConfigError, "duplicate tag name: " + names_[i]);
    }
  }

  static TagVocab load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::IoError, "cannot open tag list " + path.string());
    std::vector<std::string> names;
    std::string line;
    while (std::getline(in, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
      if (!line.empty()) names.push_back(line);
    }
    return TagVocab(std::move(names));
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(Errc::IoError, "cannot write tag list " + path.string());
    for (const auto& n : names_) out << n << '\n';
  }

  TagId id(std::string_view name) const {
    auto it = index_.find(std::string(name));
    return it == index_.end() ? unknown_id() : it->second;
  }

  TagId unknown_id() const { return static_cast<TagId>(names_.size()); }

  // Number of embedding rows, including the unknown row.
  int size() const { return static_cast<int>(names_.size()) + 1; }

  int listed_count() const { return static_cast<int>(names_.size()); }

  const std::string& name(TagId id) const {
    static const std::string unk = "<unk>";
    if (id < 0 || id > unknown_id()) fail(Errc::InvalidNode, "tag id out of range");
    return id == unknown_id() ? unk : names_[static_cast<size_t>(id)];
  }

  const std::vector<std::string>& names() const { return names_; }

  static const std::vector<std::string>& default_tags() {
    static const std::vector<std::string> tags = {
        "a",        "abbr",     "address", "area",     "article",  "aside",      "audio",
        "b",        "base",     "bdi",     "bdo",      "blockquote", "body",     "br",
        "button",   "canvas",   "caption", "cite",     "code",     "col",        "colgroup",
        "data",     "datalist", "dd",      "del",      "details",  "dfn",        "dialog",
        "div",      "dl",       "dt",      "em",       "embed",    "fieldset",   "figcaption",
        "figure",   "footer",   "form",    "h1",       "h2",       "h3",         "h4",
        "h5",       "h6",       "head",    "header",   "hgroup",   "hr",         "html",
        "i",        "iframe",   "img",     "input",    "ins",      "kbd",        "label",
        "legend",   "li",       "link",    "main",     "map",      "mark",       "menu",
        "meta",     "meter",    "nav",     "noscript", "object",   "ol",         "optgroup",
        "option",   "output",   "p",       "param",    "picture",  "pre",        "progress",
        "q",        "rp",       "rt",      "ruby",     "s",        "samp",       "script",
        "section",  "select",   "slot",    "small",    "source",   "span",       "strong",
        "style",    "sub",      "summary", "sup",      "table",    "tbody",      "td",
        "template", "textarea", "tfoot",   "th",       "thead",    "time",       "title",
        "tr",       "track",    "u",       "ul",       "var",      "video",      "wbr",
    };
    return tags;
  }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, TagId> index_;
};

}  // namespace weblm
