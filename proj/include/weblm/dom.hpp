#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "weblm/errors.hpp"
#include "weblm/geometry.hpp"
#include "weblm/tags.hpp"
#include "weblm/tokenizer.hpp"

namespace weblm {

enum class Relation { ParentChild, AncestorDescendant, Other };

inline const char* relation_name(Relation r) {
  switch (r) {
    case Relation::ParentChild: return "parent-child";
    case Relation::AncestorDescendant: return "ancestor-descendant";
    case Relation::Other: return "other";
  }
  return "?";
}

// A text run hangs off its enclosing element. `slot` is the child position it
// precedes: slot == k means the run sits before child k, slot == children
// count means it trails the last child.
struct TextRun {
  int slot = 0;
  std::string text;
};

struct DomNode {
  int id = -1;
  int parent = -1;
  int depth = 0;
  int preorder = 0;
  TagId tag = 0;
  std::string name;
  std::vector<int> children;
  std::vector<TextRun> runs;
  std::optional<BoundingBox> box;
};

class DomTree {
 public:
  DomTree() = default;

  bool empty() const { return nodes_.empty(); }
  int size() const { return static_cast<int>(nodes_.size()); }
  int root() const { return nodes_.empty() ? -1 : 0; }

  const DomNode& node(int id) const {
    if (id < 0 || id >= size()) fail(Errc::InvalidNode, "node id " + std::to_string(id));
    return nodes_[static_cast<size_t>(id)];
  }

  int add_node(TagId tag, std::string name, int parent) {
    if (parent >= size()) fail(Errc::InvalidNode, "parent id " + std::to_string(parent));
    DomNode n;
    n.id = size();
    n.parent = parent;
    n.tag = tag;
    n.name = std::move(name);
    if (parent >= 0) {
      n.depth = nodes_[static_cast<size_t>(parent)].depth + 1;
      nodes_[static_cast<size_t>(parent)].children.push_back(n.id);
    }
    nodes_.push_back(std::move(n));
    return nodes_.back().id;
  }

  void add_run(int id, std::string text) {
    DomNode& n = mutable_node(id);
    n.runs.push_back({static_cast<int>(n.children.size()), std::move(text)});
  }

  void set_box(int id, BoundingBox box) { mutable_node(id).box = box; }

  // Recomputes depth and preorder indices. Nodes are stored in creation
  // order, which all builders keep equal to preorder.
  void finalize() {
    if (nodes_.empty()) return;
    int counter = 0;
    assign_order(0, 0, counter);
  }

  bool subtree_has_text(int id) const {
    const DomNode& n = node(id);
    if (!n.runs.empty()) return true;
    for (int c : n.children)
      if (subtree_has_text(c)) return true;
    return false;
  }

  DomNode& mutable_node(int id) {
    if (id < 0 || id >= size()) fail(Errc::InvalidNode, "node id " + std::to_string(id));
    return nodes_[static_cast<size_t>(id)];
  }

 private:
  void assign_order(int id, int depth, int& counter) {
    DomNode& n = nodes_[static_cast<size_t>(id)];
    n.depth = depth;
    n.preorder = counter++;
    for (int c : n.children) {
      nodes_[static_cast<size_t>(c)].parent = id;
      assign_order(c, depth + 1, counter);
    }
  }

  std::vector<DomNode> nodes_;
};

// Most specific relation wins: ParentChild beats AncestorDescendant. The
// first argument is the ancestor side; a == b is Other.
inline Relation node_relation(const DomTree& tree, int a, int b) {
  const DomNode& na = tree.node(a);
  const DomNode& nb = tree.node(b);
  int steps = nb.depth - na.depth;
  if (steps <= 0 || a == b) return Relation::Other;
  int cur = b;
  for (int i = 0; i < steps; ++i) cur = tree.node(cur).parent;
  if (cur != a) return Relation::Other;
  return steps == 1 ? Relation::ParentChild : Relation::AncestorDescendant;
}

namespace html {

inline bool is_void_tag(std::string_view name) {
  static const std::unordered_set<std::string_view> kVoid = {
      "area", "base", "br", "col", "embed", "hr", "img",
      "input", "link", "meta", "param", "source", "track", "wbr"};
  return kVoid.count(name) != 0;
}

// Content of these elements is never page text; it is skipped at parse time
// so the subtrees prune away later.
inline bool is_rawtext_tag(std::string_view name) {
  return name == "script" || name == "style" || name == "title" || name == "textarea";
}

// True when an incoming start tag `next` implies closing the open element
// `open` (the common optional-end-tag cases).
inline bool implies_close(std::string_view open, std::string_view next) {
  if (open == "p") {
    static const std::unordered_set<std::string_view> kClosesP = {
        "address", "article", "aside",  "blockquote", "details", "dialog", "div",
        "dl",      "fieldset", "figcaption", "figure", "footer", "form",   "h1",
        "h2",      "h3",      "h4",     "h5",         "h6",      "header", "hgroup",
        "hr",      "main",    "menu",   "nav",        "ol",      "p",      "pre",
        "section", "table",   "ul"};
    return kClosesP.count(next) != 0;
  }
  if (open == "li") return next == "li";
  if (open == "dt" || open == "dd") return next == "dt" || next == "dd";
  if (open == "option") return next == "option" || next == "optgroup";
  if (open == "optgroup") return next == "optgroup";
  if (open == "td" || open == "th")
    return next == "td" || next == "th" || next == "tr" || next == "tbody" ||
           next == "thead" || next == "tfoot";
  if (open == "tr") return next == "tr" || next == "tbody" || next == "thead" || next == "tfoot";
  return false;
}

inline std::string decode_entities(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '&') {
      out.push_back(text[i++]);
      continue;
    }
    size_t semi = text.find(';', i + 1);
    if (semi == std::string_view::npos || semi - i > 10) {
      out.push_back(text[i++]);
      continue;
    }
    std::string_view name = text.substr(i + 1, semi - i - 1);
    if (name == "amp") out.push_back('&');
    else if (name == "lt") out.push_back('<');
    else if (name == "gt") out.push_back('>');
    else if (name == "quot") out.push_back('"');
    else if (name == "apos") out.push_back('\'');
    else if (name == "nbsp") out.push_back(' ');
    else if (!name.empty() && name[0] == '#') {
      uint32_t cp = 0;
      bool ok = false;
      if (name.size() > 1 && (name[1] == 'x' || name[1] == 'X')) {
        for (size_t k = 2; k < name.size(); ++k) {
          int d = std::isxdigit(static_cast<unsigned char>(name[k]))
                      ? (std::isdigit(static_cast<unsigned char>(name[k]))
                             ? name[k] - '0'
                             : (std::tolower(static_cast<unsigned char>(name[k])) - 'a' + 10))
                      : -1;
          if (d < 0) { ok = false; break; }
          cp = cp * 16 + static_cast<uint32_t>(d);
          ok = true;
        }
      } else {
        for (size_t k = 1; k < name.size(); ++k) {
          if (!std::isdigit(static_cast<unsigned char>(name[k]))) { ok = false; break; }
          cp = cp * 10 + static_cast<uint32_t>(name[k] - '0');
          ok = true;
        }
      }
      if (ok && cp > 0 && cp <= 0x10FFFF) detail::append_codepoint(out, cp);
      else { out.push_back(text[i]); ++i; continue; }
    } else {
      out.push_back(text[i++]);
      continue;
    }
    i = semi + 1;
  }
  return out;
}

inline std::string escape_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out.push_back(c);
  }
  return out;
}

inline bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(),
                     [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
}

struct StartTagToken {
  std::string name;
  bool self_closing = false;
  std::optional<BoundingBox> box;  // from an inline data-box="x0,y0,w,h" annotation
};

// Scans one tag starting at '<'; returns position past it. Handles quoted
// attribute values so '>' inside quotes does not end the tag.
inline size_t scan_tag(std::string_view src, size_t pos, StartTagToken* start,
                       std::string* end_name, bool* is_end) {
  size_t i = pos + 1;
  *is_end = false;
  if (i < src.size() && src[i] == '/') {
    *is_end = true;
    ++i;
  }
  std::string name;
  while (i < src.size() && (std::isalnum(static_cast<unsigned char>(src[i])) || src[i] == '-' ||
                            src[i] == '_' || src[i] == ':')) {
    name.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(src[i]))));
    ++i;
  }
  bool self_closing = false;
  std::string attr_name, attr_value;
  std::optional<BoundingBox> box;
  while (i < src.size() && src[i] != '>') {
    char c = src[i];
    if (c == '/' && i + 1 < src.size() && src[i + 1] == '>') {
      self_closing = true;
      ++i;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    attr_name.clear();
    while (i < src.size() && src[i] != '=' && src[i] != '>' && src[i] != '/' &&
           !std::isspace(static_cast<unsigned char>(src[i]))) {
      attr_name.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(src[i]))));
      ++i;
    }
    while (i < src.size() && std::isspace(static_cast<unsigned char>(src[i]))) ++i;
    attr_value.clear();
    if (i < src.size() && src[i] == '=') {
      ++i;
      while (i < src.size() && std::isspace(static_cast<unsigned char>(src[i]))) ++i;
      if (i < src.size() && (src[i] == '"' || src[i] == '\'')) {
        char quote = src[i++];
        while (i < src.size() && src[i] != quote) attr_value.push_back(src[i++]);
        if (i < src.size()) ++i;
      } else {
        while (i < src.size() && src[i] != '>' &&
               !std::isspace(static_cast<unsigned char>(src[i])))
          attr_value.push_back(src[i++]);
      }
    }
    if (attr_name == "data-box") {
      BoundingBox b;
      if (std::sscanf(attr_value.c_str(), "%lf,%lf,%lf,%lf", &b.x0, &b.y0, &b.w, &b.h) == 4 &&
          b.w >= 0 && b.h >= 0)
        box = b;
    }
  }
  if (i < src.size()) ++i;  // consume '>'
  if (!*is_end && start) {
    start->name = std::move(name);
    start->self_closing = self_closing;
    start->box = box;
  } else if (end_name) {
    *end_name = std::move(name);
  }
  return i;
}

}  // namespace html

// Tolerant tag-soup parser. Attributes are scanned and dropped (except the
// optional data-box annotation); comments, doctype and processing
// instructions are skipped; unclosed elements close at the nearest enclosing
// close or at end of input.
inline DomTree parse_html(std::string_view source, const TagVocab& tags = TagVocab()) {
  if (source.empty()) fail(Errc::EmptyDocument, "empty input");
  DomTree tree;
  std::vector<int> stack;  // ids of open elements
  int element_count = 0;
  std::string pending_text;

  auto root_for_content = [&]() -> int {
    if (tree.empty()) tree.add_node(tags.id("html"), "html", -1);  // synthesized root
    return stack.empty() ? tree.root() : stack.back();
  };

  auto flush_text = [&](int target) {
    if (pending_text.empty()) return;
    std::string decoded = html::decode_entities(pending_text);
    pending_text.clear();
    if (html::is_blank(decoded)) return;
    if (target < 0) target = root_for_content();
    tree.add_run(target, std::move(decoded));
  };

  size_t i = 0;
  while (i < source.size()) {
    char c = source[i];
    if (c != '<') {
      pending_text.push_back(c);
      ++i;
      continue;
    }
    // markup that is dropped wholesale
    if (source.compare(i, 4, "<!--") == 0) {
      flush_text(stack.empty() ? -1 : stack.back());
      size_t close = source.find("-->", i + 4);
      i = close == std::string_view::npos ? source.size() : close + 3;
      continue;
    }
    if (i + 1 < source.size() && (source[i + 1] == '!' || source[i + 1] == '?')) {
      flush_text(stack.empty() ? -1 : stack.back());
      size_t close = source.find('>', i + 1);
      i = close == std::string_view::npos ? source.size() : close + 1;
      continue;
    }
    if (i + 1 >= source.size() ||
        (!std::isalpha(static_cast<unsigned char>(source[i + 1])) && source[i + 1] != '/')) {
      pending_text.push_back(c);  // bare '<' is text
      ++i;
      continue;
    }

    html::StartTagToken start;
    std::string end_name;
    bool is_end = false;
    size_t next = html::scan_tag(source, i, &start, &end_name, &is_end);

    if (is_end) {
      if (end_name.empty()) {  // "</>" soup
        i = next;
        continue;
      }
      // close at the nearest enclosing matching open tag; ignore strays
      int found = -1;
      for (int k = static_cast<int>(stack.size()) - 1; k >= 0; --k) {
        if (tree.node(stack[static_cast<size_t>(k)]).name == end_name) {
          found = k;
          break;
        }
      }
      if (found >= 0) {
        flush_text(stack.back());
        stack.resize(static_cast<size_t>(found));
      }
      i = next;
      continue;
    }

    if (start.name.empty()) {  // "<>" soup
      i = next;
      continue;
    }

    flush_text(stack.empty() ? -1 : stack.back());
    while (!stack.empty() && html::implies_close(tree.node(stack.back()).name, start.name)) {
      stack.pop_back();
    }

    int id;
    if (tree.empty()) {
      if (start.name == "html") {
        id = tree.add_node(tags.id("html"), "html", -1);
      } else {
        tree.add_node(tags.id("html"), "html", -1);  // synthesized root
        id = tree.add_node(tags.id(start.name), start.name, tree.root());
      }
    } else {
      int parent = stack.empty() ? tree.root() : stack.back();
      id = tree.add_node(tags.id(start.name), start.name, parent);
    }
    ++element_count;
    if (start.box) tree.set_box(id, *start.box);

    if (html::is_rawtext_tag(start.name)) {
      // content up to the matching end tag is not page text
      std::string close = "</" + start.name;
      size_t hit = source.find(close, next);
      if (hit == std::string_view::npos) {
        next = source.size();
      } else {
        size_t after = hit + close.size();
        while (after < source.size() && source[after] != '>') ++after;
        next = after < source.size() ? after + 1 : source.size();
      }
      i = next;
      continue;
    }

    if (!start.self_closing && !html::is_void_tag(start.name)) stack.push_back(id);
    i = next;
  }
  if (!tree.empty()) flush_text(stack.empty() ? tree.root() : stack.back());

  if (element_count == 0) fail(Errc::EmptyDocument, "no elements after recovery");
  tree.finalize();
  return tree;
}

namespace detail_simplify {

inline void compute_text_flags(const DomTree& t, int id, std::vector<char>& has_text) {
  const DomNode& n = t.node(id);
  char flag = n.runs.empty() ? 0 : 1;
  for (int c : n.children) {
    compute_text_flags(t, c, has_text);
    flag |= has_text[static_cast<size_t>(c)];
  }
  has_text[static_cast<size_t>(id)] = flag;
}

struct Rebuilder {
  const DomTree& src;
  const std::vector<char>& keep;
  DomTree out;

  bool is_protected(int id) const {
    return id == src.root() || src.node(id).parent == src.root();
  }

  // Follows single-child collapse chains: a non-protected element with no
  // text runs and exactly one kept element child is replaced by that child.
  int effective(int id) const {
    for (;;) {
      const DomNode& n = src.node(id);
      if (is_protected(id) || !n.runs.empty()) return id;
      int kept_child = -1;
      int kept_count = 0;
      for (int c : n.children) {
        if (keep[static_cast<size_t>(c)]) {
          kept_child = c;
          ++kept_count;
          if (kept_count > 1) break;
        }
      }
      if (kept_count != 1) return id;
      id = kept_child;
    }
  }

  int copy(int src_id, int new_parent) {
    const DomNode& n = src.node(src_id);
    int id = out.add_node(n.tag, n.name, new_parent);
    if (n.box) out.set_box(id, *n.box);
    // children are re-filtered here; run slots are remapped to kept positions
    std::vector<int> kept_before(n.children.size() + 1, 0);
    for (size_t k = 0; k < n.children.size(); ++k) {
      kept_before[k + 1] =
          kept_before[k] + (keep[static_cast<size_t>(n.children[k])] ? 1 : 0);
    }
    DomNode& dst = out.mutable_node(id);
    dst.runs.reserve(n.runs.size());
    for (const TextRun& r : n.runs)
      dst.runs.push_back({kept_before[static_cast<size_t>(r.slot)], r.text});
    for (int c : n.children) {
      if (!keep[static_cast<size_t>(c)]) continue;
      copy(effective(c), id);
    }
    return id;
  }
};

}  // namespace detail_simplify

// Rendering-tree simplification: prune subtrees with neither text anywhere
// nor a box on their root, then collapse single-child chains. The root and
// its direct children are never collapsed away.
inline DomTree simplify_tree(const DomTree& tree) {
  if (tree.empty()) return tree;
  std::vector<char> has_text(static_cast<size_t>(tree.size()), 0);
  detail_simplify::compute_text_flags(tree, tree.root(), has_text);
  std::vector<char> keep(static_cast<size_t>(tree.size()), 0);
  for (int id = 0; id < tree.size(); ++id) {
    keep[static_cast<size_t>(id)] =
        id == tree.root() || tree.node(id).box.has_value() || has_text[static_cast<size_t>(id)];
  }
  detail_simplify::Rebuilder rb{tree, keep, {}};
  rb.copy(rb.effective(tree.root()), -1);
  rb.out.finalize();
  return std::move(rb.out);
}

// Element skeleton (and optionally text) back to markup. Parsing the result
// yields an isomorphic tree.
inline void serialize_node(const DomTree& tree, int id, bool with_text, std::string& out) {
  const DomNode& n = tree.node(id);
  out += '<';
  out += n.name;
  out += '>';
  if (html::is_void_tag(n.name) && n.children.empty() && n.runs.empty()) return;
  size_t ri = 0;
  const size_t child_count = n.children.size();
  for (size_t slot = 0; slot <= child_count; ++slot) {
    while (ri < n.runs.size() && static_cast<size_t>(n.runs[ri].slot) <= slot) {
      if (with_text) out += html::escape_text(n.runs[ri].text);
      ++ri;
    }
    if (slot < child_count) serialize_node(tree, n.children[slot], with_text, out);
  }
  out += "</";
  out += n.name;
  out += '>';
}

inline std::string serialize_html(const DomTree& tree, bool with_text = true) {
  std::string out;
  if (!tree.empty()) serialize_node(tree, tree.root(), with_text, out);
  return out;
}

inline bool trees_isomorphic(const DomTree& a, const DomTree& b, bool compare_text = false) {
  struct Cmp {
    const DomTree& a;
    const DomTree& b;
    bool compare_text;
    bool eq(int x, int y) const {
      const DomNode& na = a.node(x);
      const DomNode& nb = b.node(y);
      if (na.name != nb.name || na.children.size() != nb.children.size()) return false;
      if (compare_text) {
        if (na.runs.size() != nb.runs.size()) return false;
        for (size_t i = 0; i < na.runs.size(); ++i) {
          if (na.runs[i].slot != nb.runs[i].slot || na.runs[i].text != nb.runs[i].text)
            return false;
        }
      }
      for (size_t i = 0; i < na.children.size(); ++i)
        if (!eq(na.children[i], nb.children[i])) return false;
      return true;
    }
  };
  if (a.empty() || b.empty()) return a.empty() == b.empty();
  return Cmp{a, b, compare_text}.eq(a.root(), b.root());
}

// Structure tokens an element contributes: one leaf marker for childless
// elements, start + end otherwise; plus the tokenized text of every run.
inline int subtree_token_count(const DomTree& tree, int id, const Tokenizer& tok) {
  const DomNode& n = tree.node(id);
  int count = n.children.empty() ? 1 : 2;
  for (const TextRun& r : n.runs) count += static_cast<int>(tok.encode(r.text).size());
  for (int c : n.children) count += subtree_token_count(tree, c, tok);
  return count;
}

// boxes.jsonl sidecar: one JSON object per line with node_path (child indices
// from the root) and pixel x0/y0/w/h. Unresolvable lines are skipped.
inline int apply_boxes_jsonl(DomTree& tree, std::string_view jsonl,
                             std::vector<std::string>* warnings = nullptr) {
  int applied = 0;
  size_t pos = 0;
  int lineno = 0;
  while (pos <= jsonl.size() && !jsonl.empty()) {
    size_t eol = jsonl.find('\n', pos);
    if (eol == std::string_view::npos) eol = jsonl.size();
    std::string_view line = jsonl.substr(pos, eol - pos);
    pos = eol + 1;
    ++lineno;
    bool at_end = eol == jsonl.size();
    if (!html::is_blank(line)) {
      auto j = nlohmann::json::parse(line, nullptr, false);
      bool ok = !j.is_discarded() && j.is_object() && j.contains("node_path") &&
                j["node_path"].is_array() && j.contains("x0") && j.contains("y0") &&
                j.contains("w") && j.contains("h");
      if (ok) {
        int id = tree.root();
        for (const auto& step : j["node_path"]) {
          if (!step.is_number_integer()) { id = -1; break; }
          int idx = step.get<int>();
          const auto& children = tree.node(id).children;
          if (idx < 0 || static_cast<size_t>(idx) >= children.size()) { id = -1; break; }
          id = children[static_cast<size_t>(idx)];
        }
        if (id >= 0) {
          BoundingBox b{j["x0"].get<double>(), j["y0"].get<double>(), j["w"].get<double>(),
                        j["h"].get<double>()};
          if (b.w >= 0 && b.h >= 0) {
            tree.set_box(id, b);
            ++applied;
          } else {
            ok = false;
          }
        } else {
          ok = false;
        }
      }
      if (!ok && warnings)
        warnings->push_back("boxes line " + std::to_string(lineno) + " skipped");
    }
    if (at_end) break;
  }
  return applied;
}

}  // namespace weblm
