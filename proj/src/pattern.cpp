//===- pattern.cpp - fix patterns, fingerprints, clustering ------------------===//
//
// Part of fixprint, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#include "fixprint/pattern.hpp"

#include "fixprint/util.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <unordered_map>

namespace fixprint::pattern {

using syntax::kInvalidNode;
using treediff::Side;

std::string to_string(AbstractionLevel level) {
  switch (level) {
  case AbstractionLevel::None: return "none";
  case AbstractionLevel::Literals: return "literals";
  case AbstractionLevel::IdentifiersAndLiterals: return "identifiers_and_literals";
  }
  return "?";
}

std::optional<AbstractionLevel> abstraction_level_from_string(std::string_view s) {
  if (s == "none") return AbstractionLevel::None;
  if (s == "literals") return AbstractionLevel::Literals;
  if (s == "identifiers_and_literals") return AbstractionLevel::IdentifiersAndLiterals;
  return std::nullopt;
}

//===----------------------------------------------------------------------===//
// enrich
//===----------------------------------------------------------------------===//

RichEditScript enrich(const EditScript &script, const SyntaxTree &before,
                      const SyntaxTree &after, const Mapping &mapping) {
  RichEditScript rich;
  rich.before = &before;
  rich.after = &after;
  rich.mapping = mapping;
  rich.script = script;

  for (std::size_t i = 0; i < script.actions.size(); ++i) {
    const treediff::EditAction &act = script.actions[i];
    const SyntaxTree &tree = act.subject.side == Side::Before ? before : after;
    NodeId id = act.subject.id;
    if (id < 0 || static_cast<std::size_t>(id) >= tree.size())
      throw Error("action " + std::to_string(i) + ": site not found in " +
                  (act.subject.side == Side::Before ? "before" : "after") + " tree");

    RichAction ra;
    ra.action_index = i;
    ra.site = act.subject;

    NodeId anchor = syntax::enclosing_function(tree, id);
    if (anchor == id)
      anchor = kInvalidNode; // the action is on the function itself
    if (anchor == kInvalidNode)
      anchor = tree.root();

    if (id == tree.root()) {
      // Root-level action: the chain degenerates to the site itself.
      ra.context_chain.push_back(tree.kind(id));
    } else {
      std::vector<NodeId> up;
      for (NodeId cur = tree.parent(id); cur != kInvalidNode; cur = tree.parent(cur)) {
        up.push_back(cur);
        if (cur == anchor)
          break;
      }
      std::reverse(up.begin(), up.end());
      for (NodeId n : up) {
        ra.context_chain.push_back(tree.kind(n));
        ra.context_refs.push_back(NodeRef{act.subject.side, n});
      }
    }
    rich.actions.push_back(std::move(ra));
  }
  return rich;
}

//===----------------------------------------------------------------------===//
// abstract: chain merging + token abstraction
//===----------------------------------------------------------------------===//

namespace {

int op_rank(EditOp op) {
  switch (op) {
  case EditOp::Insert: return 0;
  case EditOp::Delete: return 1;
  case EditOp::Move: return 2;
  case EditOp::Update: return 3;
  }
  return 4;
}

const char *op_name(EditOp op) {
  switch (op) {
  case EditOp::Insert: return "Insert";
  case EditOp::Delete: return "Delete";
  case EditOp::Move: return "Move";
  case EditOp::Update: return "Update";
  }
  return "?";
}

struct RefKey {
  int side; // 0 before, 1 after, 2 synthetic root
  NodeId id;
  friend bool operator==(const RefKey &, const RefKey &) = default;
  friend auto operator<=>(const RefKey &, const RefKey &) = default;
};

struct MergedNode {
  RefKey key;
  std::string kind;
  bool is_action = false;
  std::vector<EditOp> ops;
  std::optional<std::string> raw_token;
  std::vector<RefKey> children; // insertion order; sorted at emit time
};

class ShapeBuilder {
public:
  ShapeBuilder(const RichEditScript &rich) : rich_(rich) {}

  ShapeNode build() {
    for (const RichAction &ra : rich_.actions)
      add_action(ra);
    if (nodes_.empty())
      return ShapeNode{}; // empty script -> empty shape
    RefKey root = unify_roots();
    return emit(root);
  }

private:
  // Mapped after-instances fold onto their before partner so chains from both
  // trees merge into one tree.
  RefKey canon(NodeRef r) const {
    if (r.side == Side::After) {
      NodeId b = rich_.mapping.src_of(r.id);
      if (b != kInvalidNode)
        return RefKey{0, b};
      return RefKey{1, r.id};
    }
    return RefKey{0, r.id};
  }

  const SyntaxTree &tree_of(NodeRef r) const {
    return r.side == Side::Before ? *rich_.before : *rich_.after;
  }

  MergedNode &ensure(RefKey key, const std::string &kind) {
    auto [it, inserted] = nodes_.try_emplace(key);
    if (inserted) {
      it->second.key = key;
      it->second.kind = kind;
    }
    return it->second;
  }

  void add_edge(RefKey parent, RefKey child) {
    MergedNode &p = nodes_.at(parent);
    if (std::find(p.children.begin(), p.children.end(), child) == p.children.end())
      p.children.push_back(child);
  }

  void add_action(const RichAction &ra) {
    const treediff::EditAction &act = rich_.script.actions[ra.action_index];
    std::vector<RefKey> path;
    for (NodeRef r : ra.context_refs) {
      RefKey k = canon(r);
      ensure(k, tree_of(r).kind(r.id));
      path.push_back(k);
    }
    RefKey site = canon(ra.site);
    const SyntaxTree &site_tree = tree_of(ra.site);
    MergedNode &sn = ensure(site, site_tree.kind(ra.site.id));
    sn.is_action = true;
    if (std::find(sn.ops.begin(), sn.ops.end(), act.op) == sn.ops.end())
      sn.ops.push_back(act.op);
    if (site_tree.is_leaf(ra.site.id)) {
      // Updates advertise the token the fix put in place.
      sn.raw_token = act.op == EditOp::Update ? act.new_token
                                              : site_tree.token(ra.site.id);
    }
    path.push_back(site);

    for (std::size_t i = 0; i + 1 < path.size(); ++i)
      add_edge(path[i], path[i + 1]);
    tops_.insert(path.front());
  }

  RefKey unify_roots() {
    // Remove tops that are reachable from another top.
    std::vector<RefKey> roots;
    for (const RefKey &t : tops_)
      if (!reachable_from_other(t))
        roots.push_back(t);
    if (roots.size() == 1)
      return roots.front();

    // Multiple anchors (actions in several functions): hang them under the
    // translation-unit instance, which both trees share via the mapping.
    RefKey tu = canon(NodeRef{Side::Before, rich_.before->root()});
    ensure(tu, rich_.before->kind(rich_.before->root()));
    for (const RefKey &r : roots)
      if (r != tu)
        add_edge(tu, r);
    return tu;
  }

  bool reachable_from_other(const RefKey &t) const {
    for (const auto &[key, node] : nodes_) {
      if (key == t)
        continue;
      if (std::find(node.children.begin(), node.children.end(), t) !=
          node.children.end())
        return true;
    }
    return false;
  }

  ShapeNode emit(RefKey key) {
    const MergedNode &n = nodes_.at(key);
    ShapeNode s;
    s.kind = n.kind;
    s.is_action = n.is_action;
    s.ops = n.ops;
    std::sort(s.ops.begin(), s.ops.end(),
              [](EditOp a, EditOp b) { return op_rank(a) < op_rank(b); });
    s.token = n.raw_token;
    std::vector<RefKey> kids = n.children;
    std::sort(kids.begin(), kids.end()); // (side, preorder id): stable source order
    for (const RefKey &c : kids)
      s.children.push_back(emit(c));
    return s;
  }

  const RichEditScript &rich_;
  std::map<RefKey, MergedNode> nodes_;
  std::set<RefKey> tops_;
};

void abstract_tokens(ShapeNode &shape, AbstractionLevel level,
                     std::unordered_map<std::string, int> &ids) {
  if (shape.token) {
    if (shape.kind == syntax::kind::Literal &&
        (level == AbstractionLevel::Literals ||
         level == AbstractionLevel::IdentifiersAndLiterals)) {
      shape.token = "LIT";
    } else if (shape.kind == syntax::kind::Identifier &&
               level == AbstractionLevel::IdentifiersAndLiterals) {
      auto [it, inserted] = ids.try_emplace(*shape.token,
                                            static_cast<int>(ids.size()) + 1);
      shape.token = "ID_" + std::to_string(it->second);
    }
  }
  for (ShapeNode &c : shape.children)
    abstract_tokens(c, level, ids);
}

} // namespace

FixPattern abstract(const RichEditScript &rich, AbstractionLevel level) {
  FixPattern p;
  p.level = level;
  if (rich.actions.empty())
    return p;
  ShapeBuilder builder(rich);
  p.shape = builder.build();
  std::unordered_map<std::string, int> ids;
  abstract_tokens(p.shape, level, ids);
  return p;
}

//===----------------------------------------------------------------------===//
// canonical form and fingerprints
//===----------------------------------------------------------------------===//

namespace {

void canonical_rec(const ShapeNode &s, std::string &out) {
  out += '(';
  if (s.is_action) {
    for (std::size_t i = 0; i < s.ops.size(); ++i) {
      if (i)
        out += '+';
      out += op_name(s.ops[i]);
    }
    out += '!';
  }
  out += s.kind;
  if (s.token) {
    out += ' ';
    out += syntax::quote_token(*s.token);
  }
  for (const ShapeNode &c : s.children) {
    out += ' ';
    canonical_rec(c, out);
  }
  out += ')';
}

class CanonicalParser {
public:
  explicit CanonicalParser(std::string_view s) : s_(s) {}

  ShapeNode run() {
    skip_ws();
    ShapeNode n = parse_node();
    skip_ws();
    if (pos_ != s_.size())
      throw Error("canonical form: trailing characters at offset " +
                  std::to_string(pos_));
    return n;
  }

private:
  void skip_ws() {
    while (pos_ < s_.size() && s_[pos_] == ' ')
      ++pos_;
  }

  [[noreturn]] void fail(const std::string &what) {
    throw Error("canonical form: " + what + " at offset " + std::to_string(pos_));
  }

  ShapeNode parse_node() {
    if (pos_ >= s_.size() || s_[pos_] != '(')
      fail("expected '('");
    ++pos_;
    ShapeNode n;
    std::size_t start = pos_;
    while (pos_ < s_.size() && s_[pos_] != ' ' && s_[pos_] != ')' && s_[pos_] != '(')
      ++pos_;
    std::string head(s_.substr(start, pos_ - start));
    if (head.empty())
      fail("empty node head");
    std::size_t bang = head.find('!');
    if (bang != std::string::npos) {
      n.is_action = true;
      std::string ops = head.substr(0, bang);
      n.kind = head.substr(bang + 1);
      std::size_t p = 0;
      while (p < ops.size()) {
        std::size_t plus = ops.find('+', p);
        std::string one = ops.substr(p, plus == std::string::npos ? std::string::npos
                                                                  : plus - p);
        if (one == "Insert") n.ops.push_back(EditOp::Insert);
        else if (one == "Delete") n.ops.push_back(EditOp::Delete);
        else if (one == "Move") n.ops.push_back(EditOp::Move);
        else if (one == "Update") n.ops.push_back(EditOp::Update);
        else fail("unknown op '" + one + "'");
        if (plus == std::string::npos)
          break;
        p = plus + 1;
      }
    } else {
      n.kind = head;
    }
    if (n.kind.empty())
      fail("empty kind");

    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == '"') {
      std::size_t tstart = pos_;
      ++pos_;
      while (pos_ < s_.size() && s_[pos_] != '"') {
        if (s_[pos_] == '\\')
          ++pos_;
        ++pos_;
      }
      if (pos_ >= s_.size())
        fail("unterminated token");
      ++pos_;
      auto tok = syntax::unquote_token(s_.substr(tstart, pos_ - tstart));
      if (!tok)
        fail("bad token escape");
      n.token = std::move(*tok);
      skip_ws();
    }
    while (pos_ < s_.size() && s_[pos_] == '(') {
      n.children.push_back(parse_node());
      skip_ws();
    }
    if (pos_ >= s_.size() || s_[pos_] != ')')
      fail("expected ')'");
    ++pos_;
    return n;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

} // namespace

std::string shape_to_canonical(const ShapeNode &shape) {
  std::string out;
  canonical_rec(shape, out);
  return out;
}

ShapeNode shape_from_canonical(std::string_view canonical) {
  return CanonicalParser(canonical).run();
}

Fingerprint fingerprint(const FixPattern &pattern) {
  Fingerprint fp;
  fp.canonical = shape_to_canonical(pattern.shape);
  fp.digest = digest_bytes(fp.canonical);
  return fp;
}

int shape_size(const ShapeNode &shape) {
  int n = 1;
  for (const ShapeNode &c : shape.children)
    n += shape_size(c);
  return n;
}

//===----------------------------------------------------------------------===//
// site-side shapes
//===----------------------------------------------------------------------===//

namespace {

ShapeNode subtree_shape_rec(const SyntaxTree &tree, NodeId id) {
  ShapeNode s;
  s.kind = tree.kind(id);
  if (tree.is_leaf(id))
    s.token = tree.token(id);
  for (NodeId c : tree.children(id))
    s.children.push_back(subtree_shape_rec(tree, c));
  return s;
}

} // namespace

ShapeNode shape_of_subtree(const SyntaxTree &tree, NodeId id, AbstractionLevel level) {
  ShapeNode s = subtree_shape_rec(tree, id);
  std::unordered_map<std::string, int> ids;
  abstract_tokens(s, level, ids);
  return s;
}

ShapeNode with_local_id_numbering(ShapeNode shape) {
  std::unordered_map<std::string, int> renumber;
  auto walk = [&](ShapeNode &n, auto &&self) -> void {
    if (n.token && n.kind == syntax::kind::Identifier &&
        n.token->rfind("ID_", 0) == 0) {
      auto [it, inserted] =
          renumber.try_emplace(*n.token, static_cast<int>(renumber.size()) + 1);
      n.token = "ID_" + std::to_string(it->second);
    }
    for (ShapeNode &c : n.children)
      self(c, self);
  };
  walk(shape, walk);
  return shape;
}

//===----------------------------------------------------------------------===//
// tree edit distance (Zhang-Shasha) and similarity
//===----------------------------------------------------------------------===//

namespace {

struct FlatShape {
  // Postorder arrays.
  std::vector<const ShapeNode *> nodes;
  std::vector<int> lmd; // leftmost leaf descendant, postorder index
  std::vector<int> keyroots;
};

void flatten_post(const ShapeNode &n, FlatShape &f, int &counter, int &my_lmd) {
  int first_leaf = -1;
  for (const ShapeNode &c : n.children) {
    int child_lmd = -1;
    flatten_post(c, f, counter, child_lmd);
    if (first_leaf == -1)
      first_leaf = child_lmd;
  }
  int idx = counter++;
  my_lmd = first_leaf == -1 ? idx : first_leaf;
  f.nodes.push_back(&n);
  f.lmd.push_back(my_lmd);
}

FlatShape flatten(const ShapeNode &root) {
  FlatShape f;
  int counter = 0, lmd = -1;
  flatten_post(root, f, counter, lmd);
  std::map<int, int> last_with_lmd;
  for (int i = 0; i < static_cast<int>(f.nodes.size()); ++i)
    last_with_lmd[f.lmd[i]] = i;
  for (auto [l, i] : last_with_lmd)
    f.keyroots.push_back(i);
  std::sort(f.keyroots.begin(), f.keyroots.end());
  return f;
}

bool label_equal(const ShapeNode &a, const ShapeNode &b) {
  return a.kind == b.kind && a.is_action == b.is_action && a.ops == b.ops &&
         a.token == b.token;
}

} // namespace

int shape_edit_distance(const ShapeNode &a, const ShapeNode &b) {
  FlatShape fa = flatten(a), fb = flatten(b);
  const int n = static_cast<int>(fa.nodes.size());
  const int m = static_cast<int>(fb.nodes.size());
  std::vector<std::vector<int>> td(n, std::vector<int>(m, 0));

  std::vector<std::vector<int>> fd(n + 1, std::vector<int>(m + 1, 0));
  for (int i : fa.keyroots) {
    for (int j : fb.keyroots) {
      const int li = fa.lmd[i], lj = fb.lmd[j];
      const int rows = i - li + 2, cols = j - lj + 2;
      fd[0][0] = 0;
      for (int x = 1; x < rows; ++x)
        fd[x][0] = fd[x - 1][0] + 1;
      for (int y = 1; y < cols; ++y)
        fd[0][y] = fd[0][y - 1] + 1;
      for (int x = 1; x < rows; ++x) {
        for (int y = 1; y < cols; ++y) {
          const int di = li + x - 1, dj = lj + y - 1;
          if (fa.lmd[di] == li && fb.lmd[dj] == lj) {
            int rename = label_equal(*fa.nodes[di], *fb.nodes[dj]) ? 0 : 1;
            fd[x][y] = std::min({fd[x - 1][y] + 1, fd[x][y - 1] + 1,
                                 fd[x - 1][y - 1] + rename});
            td[di][dj] = fd[x][y];
          } else {
            const int p = fa.lmd[di] - li, q = fb.lmd[dj] - lj;
            fd[x][y] = std::min({fd[x - 1][y] + 1, fd[x][y - 1] + 1,
                                 fd[p][q] + td[di][dj]});
          }
        }
      }
    }
  }
  return td[n - 1][m - 1];
}

double similarity(const FixPattern &p1, const FixPattern &p2) {
  if (p1.level != p2.level)
    throw Error("cannot compare patterns at different abstraction levels");
  if (p1.shape == p2.shape)
    return 1.0;
  int n1 = shape_size(p1.shape), n2 = shape_size(p2.shape);
  int ted = shape_edit_distance(p1.shape, p2.shape);
  return 1.0 - static_cast<double>(ted) / std::max(n1, n2);
}

//===----------------------------------------------------------------------===//
// clustering
//===----------------------------------------------------------------------===//

std::vector<PatternCluster>
cluster(const std::vector<std::pair<Provenance, FixPattern>> &patterns, double theta) {
  if (theta < 0.0 || theta > 1.0)
    throw Error("clustering threshold must be in [0,1]");

  std::map<std::string, PatternCluster> by_digest;
  std::map<std::string, FixPattern> rep_pattern;
  std::optional<AbstractionLevel> level;
  for (const auto &[prov, pat] : patterns) {
    if (level && *level != pat.level)
      throw Error("cluster input mixes abstraction levels");
    level = pat.level;
    Fingerprint fp = fingerprint(pat);
    std::string key = fp.digest.hex();
    auto [it, inserted] = by_digest.try_emplace(key);
    if (inserted) {
      it->second.representative = fp;
      it->second.level = pat.level;
      rep_pattern.emplace(key, pat);
    }
    it->second.members.emplace_back(prov, std::move(fp));
  }

  std::vector<PatternCluster> out;
  out.reserve(by_digest.size());
  for (auto &[key, c] : by_digest) {
    std::sort(c.members.begin(), c.members.end(),
              [](const auto &x, const auto &y) { return x.first < y.first; });
    out.push_back(std::move(c));
  }
  std::sort(out.begin(), out.end(), [](const PatternCluster &x, const PatternCluster &y) {
    if (x.members.size() != y.members.size())
      return x.members.size() > y.members.size();
    return x.representative.canonical < y.representative.canonical;
  });

  // Similarity links between distinct groups, attached to the earlier cluster
  // in output order.
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t j = i + 1; j < out.size(); ++j) {
      const FixPattern &pi = rep_pattern.at(out[i].representative.digest.hex());
      const FixPattern &pj = rep_pattern.at(out[j].representative.digest.hex());
      double s = similarity(pi, pj);
      if (s >= theta)
        out[i].links.push_back(ClusterLink{out[i].representative.digest.hex(),
                                           out[j].representative.digest.hex(), s});
    }
  }
  return out;
}

} // namespace fixprint::pattern
