//===- treediff.cpp - tree matching and edit scripts -------------------------===//
//
// Part of fixprint, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#include "fixprint/treediff.hpp"

#include "fixprint/util.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <queue>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace fixprint::treediff {

using syntax::kInvalidNode;

//===----------------------------------------------------------------------===//
// Mapping
//===----------------------------------------------------------------------===//

Mapping::Mapping(std::size_t before_size, std::size_t after_size)
    : src_to_dst_(before_size, kInvalidNode), dst_to_src_(after_size, kInvalidNode) {}

void Mapping::link(NodeId b, NodeId a) {
  if (has_src(b) || has_dst(a))
    throw Error("mapping link would break injectivity");
  src_to_dst_[static_cast<std::size_t>(b)] = a;
  dst_to_src_[static_cast<std::size_t>(a)] = b;
  ++pair_count_;
}

bool Mapping::has_src(NodeId b) const {
  return b >= 0 && static_cast<std::size_t>(b) < src_to_dst_.size() &&
         src_to_dst_[static_cast<std::size_t>(b)] != kInvalidNode;
}

bool Mapping::has_dst(NodeId a) const {
  return a >= 0 && static_cast<std::size_t>(a) < dst_to_src_.size() &&
         dst_to_src_[static_cast<std::size_t>(a)] != kInvalidNode;
}

NodeId Mapping::dst_of(NodeId b) const {
  return has_src(b) ? src_to_dst_[static_cast<std::size_t>(b)] : kInvalidNode;
}

NodeId Mapping::src_of(NodeId a) const {
  return has_dst(a) ? dst_to_src_[static_cast<std::size_t>(a)] : kInvalidNode;
}

std::vector<std::pair<NodeId, NodeId>> Mapping::pairs() const {
  std::vector<std::pair<NodeId, NodeId>> out;
  out.reserve(pair_count_);
  for (std::size_t b = 0; b < src_to_dst_.size(); ++b)
    if (src_to_dst_[b] != kInvalidNode)
      out.emplace_back(static_cast<NodeId>(b), src_to_dst_[b]);
  return out;
}

void validate_mapping(const SyntaxTree &before, const SyntaxTree &after,
                      const Mapping &m) {
  for (auto [b, a] : m.pairs()) {
    if (b < 0 || static_cast<std::size_t>(b) >= before.size() || a < 0 ||
        static_cast<std::size_t>(a) >= after.size())
      throw Error("mapping refers to out-of-range node");
    if (before.kind(b) != after.kind(a))
      throw Error("mapped pair has unequal kinds: " + before.kind(b) + " vs " +
                  after.kind(a));
  }
}

//===----------------------------------------------------------------------===//
// dice
//===----------------------------------------------------------------------===//

double dice(const Mapping &m, const SyntaxTree &before, const SyntaxTree &after,
            NodeId n1, NodeId n2) {
  const int d1 = before.descendant_count(n1);
  const int d2 = after.descendant_count(n2);
  if (d1 + d2 == 0)
    return 0.0;
  int mapped = 0;
  for (NodeId b = n1 + 1; b < before.subtree_end(n1); ++b) {
    NodeId a = m.dst_of(b);
    if (a != kInvalidNode && a > n2 && a < after.subtree_end(n2))
      ++mapped;
  }
  return 2.0 * mapped / (d1 + d2);
}

//===----------------------------------------------------------------------===//
// match_trees
//===----------------------------------------------------------------------===//

namespace {

// Descending-height worklist over one tree's nodes.
class HeightList {
public:
  explicit HeightList(const SyntaxTree &t) : tree_(t) {}

  void push(NodeId id) { by_height_[tree_.height(id)].push_back(id); }

  int peek_max() const { return by_height_.empty() ? 0 : by_height_.rbegin()->first; }

  std::vector<NodeId> pop_max() {
    auto it = std::prev(by_height_.end());
    std::vector<NodeId> out = std::move(it->second);
    by_height_.erase(it);
    std::sort(out.begin(), out.end());
    return out;
  }

  void open(NodeId id) {
    for (NodeId c : tree_.children(id))
      push(c);
  }

private:
  const SyntaxTree &tree_;
  std::map<int, std::vector<NodeId>> by_height_;
};

void link_isomorphic(Mapping &m, NodeId b, NodeId a, const SyntaxTree &before) {
  // Isomorphic subtrees are preorder-aligned node for node.
  int count = before.descendant_count(b) + 1;
  for (int i = 0; i < count; ++i)
    m.link(b + i, a + i);
}

struct DigestKey {
  Digest128 d;
  bool operator<(const DigestKey &o) const { return d < o.d; }
};

void match_top_down(const SyntaxTree &before, const SyntaxTree &after,
                    const MatchConfig &cfg, Mapping &m) {
  HeightList l1(before), l2(after);
  l1.push(before.root());
  l2.push(after.root());

  while (true) {
    int max1 = l1.peek_max(), max2 = l2.peek_max();
    if (std::min(max1, max2) < std::max(cfg.min_height, 1))
      break;
    if (max1 > max2) {
      for (NodeId id : l1.pop_max())
        l1.open(id);
      continue;
    }
    if (max2 > max1) {
      for (NodeId id : l2.pop_max())
        l2.open(id);
      continue;
    }

    std::vector<NodeId> h1 = l1.pop_max();
    std::vector<NodeId> h2 = l2.pop_max();

    // Bucket this height band by structural digest.
    std::map<DigestKey, std::pair<std::vector<NodeId>, std::vector<NodeId>>> buckets;
    for (NodeId b : h1)
      buckets[{before.digest(b)}].first.push_back(b);
    for (NodeId a : h2)
      buckets[{after.digest(a)}].second.push_back(a);

    // Process buckets in a digest-value-independent order (leftmost before
    // member first) so outcomes are stable under token renamings.
    std::vector<const std::pair<std::vector<NodeId>, std::vector<NodeId>> *> order;
    for (const auto &[key, bucket] : buckets)
      if (!bucket.first.empty() && !bucket.second.empty())
        order.push_back(&bucket);
    std::sort(order.begin(), order.end(),
              [](const auto *x, const auto *y) { return x->first[0] < y->first[0]; });

    for (const auto *bucket : order) {
      for (NodeId b : bucket->first) {
        if (m.has_src(b))
          continue;
        NodeId chosen = kInvalidNode;
        for (NodeId a : bucket->second) {
          if (m.has_dst(a))
            continue;
          // Prefer a candidate whose parent is already mapped to ours.
          NodeId pb = before.parent(b), pa = after.parent(a);
          bool parents_linked =
              pb != kInvalidNode && pa != kInvalidNode && m.dst_of(pb) == pa;
          if (parents_linked) {
            chosen = a;
            break;
          }
          if (chosen == kInvalidNode)
            chosen = a; // leftmost unmapped candidate
        }
        if (chosen != kInvalidNode)
          link_isomorphic(m, b, chosen, before);
      }
    }

    for (NodeId b : h1)
      if (!m.has_src(b))
        l1.open(b);
    for (NodeId a : h2)
      if (!m.has_dst(a))
        l2.open(a);
  }
}

void postorder(const SyntaxTree &t, NodeId id, std::vector<NodeId> &out) {
  for (NodeId c : t.children(id))
    postorder(t, c, out);
  out.push_back(id);
}

// Longest common subsequence over two id sequences with a caller-supplied
// equivalence; returns matched index pairs.
template <typename Eq>
std::vector<std::pair<std::size_t, std::size_t>>
lcs_indices(std::size_t n, std::size_t m, Eq eq) {
  std::vector<std::vector<int>> dp(n + 1, std::vector<int>(m + 1, 0));
  for (std::size_t i = n; i-- > 0;)
    for (std::size_t j = m; j-- > 0;)
      dp[i][j] = eq(i, j) ? dp[i + 1][j + 1] + 1 : std::max(dp[i + 1][j], dp[i][j + 1]);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t i = 0, j = 0;
  while (i < n && j < m) {
    if (eq(i, j)) {
      out.emplace_back(i, j);
      ++i, ++j;
    } else if (dp[i + 1][j] >= dp[i][j + 1]) {
      ++i;
    } else {
      ++j;
    }
  }
  return out;
}

// Maps still-unmapped structure inside a freshly linked container pair:
// digest-equal children first, then kind-equal children by LCS, recursively.
void recover_container(const SyntaxTree &before, const SyntaxTree &after, NodeId b,
                       NodeId a, Mapping &m) {
  std::vector<NodeId> bs, as;
  for (NodeId c : before.children(b))
    if (!m.has_src(c))
      bs.push_back(c);
  for (NodeId c : after.children(a))
    if (!m.has_dst(c))
      as.push_back(c);
  if (bs.empty() || as.empty())
    return;

  // Pass 1: identical subtrees, in order.
  auto iso = lcs_indices(bs.size(), as.size(), [&](std::size_t i, std::size_t j) {
    return before.digest(bs[i]) == after.digest(as[j]);
  });
  std::vector<bool> b_used(bs.size(), false), a_used(as.size(), false);
  for (auto [i, j] : iso) {
    link_isomorphic(m, bs[i], as[j], before);
    b_used[i] = a_used[j] = true;
  }

  // Pass 2: same-kind containers/leaves, recursing for inner recovery.
  std::vector<std::size_t> bi, ai;
  for (std::size_t i = 0; i < bs.size(); ++i)
    if (!b_used[i])
      bi.push_back(i);
  for (std::size_t j = 0; j < as.size(); ++j)
    if (!a_used[j])
      ai.push_back(j);
  auto same_kind = lcs_indices(bi.size(), ai.size(), [&](std::size_t i, std::size_t j) {
    return before.kind(bs[bi[i]]) == after.kind(as[ai[j]]);
  });
  for (auto [i, j] : same_kind) {
    NodeId cb = bs[bi[i]], ca = as[ai[j]];
    m.link(cb, ca);
    recover_container(before, after, cb, ca, m);
  }
}

void match_bottom_up(const SyntaxTree &before, const SyntaxTree &after,
                     const MatchConfig &cfg, Mapping &m) {
  std::vector<NodeId> order;
  order.reserve(before.size());
  postorder(before, before.root(), order);

  // has_mapped_descendant via a single sweep: a node qualifies if any node in
  // its preorder interval (excluding itself) is mapped.
  auto has_mapped_descendant = [&](NodeId b) {
    for (NodeId d = b + 1; d < before.subtree_end(b); ++d)
      if (m.has_src(d))
        return true;
    return false;
  };

  for (NodeId b : order) {
    if (b == before.root()) {
      if (!m.has_src(b) && !m.has_dst(after.root()) &&
          before.kind(b) == after.kind(after.root())) {
        m.link(b, after.root());
        recover_container(before, after, b, after.root(), m);
      }
      break;
    }
    if (m.has_src(b) || !has_mapped_descendant(b))
      continue;
    NodeId best = kInvalidNode;
    double best_dice = 0.0;
    for (NodeId a = 0; a < static_cast<NodeId>(after.size()); ++a) {
      if (m.has_dst(a) || after.kind(a) != before.kind(b))
        continue;
      double d = dice(m, before, after, b, a);
      if (d >= cfg.dice_threshold && d > best_dice) {
        best_dice = d;
        best = a;
      }
    }
    if (best != kInvalidNode) {
      m.link(b, best);
      recover_container(before, after, b, best, m);
    }
  }
}

} // namespace

Mapping match_trees(const SyntaxTree &before, const SyntaxTree &after,
                    const MatchConfig &cfg) {
  if (before.grammar_id() != after.grammar_id())
    throw Error("cannot match trees from different grammars: " + before.grammar_id() +
                " vs " + after.grammar_id());
  Mapping m(before.size(), after.size());
  if (before.size() == 0 || after.size() == 0)
    return m;
  match_top_down(before, after, cfg, m);
  match_bottom_up(before, after, cfg, m);
  return m;
}

//===----------------------------------------------------------------------===//
// edit_script / apply_script
//===----------------------------------------------------------------------===//

namespace {

struct WNode {
  std::string kind;
  std::string token;
  bool leaf = false;
  NodeRef origin;
  WNode *parent = nullptr;
  std::vector<WNode *> children;
  bool inorder = false;
  bool in_tree = true;

  int index_in_parent() const {
    for (std::size_t i = 0; i < parent->children.size(); ++i)
      if (parent->children[i] == this)
        return static_cast<int>(i);
    return -1;
  }
};

class WorkTree {
public:
  WNode *make(std::string kind, std::string token, bool leaf, NodeRef origin) {
    arena_.push_back(WNode{std::move(kind), std::move(token), leaf, origin});
    return &arena_.back();
  }

  WNode *copy_of(const SyntaxTree &t, NodeId id,
                 std::vector<WNode *> &by_before_id) {
    WNode *w = make(t.kind(id), t.token(id), t.is_leaf(id), NodeRef{Side::Before, id});
    by_before_id[static_cast<std::size_t>(id)] = w;
    for (NodeId c : t.children(id)) {
      WNode *cw = copy_of(t, c, by_before_id);
      cw->parent = w;
      w->children.push_back(cw);
    }
    return w;
  }

  static void detach(WNode *w) {
    if (!w->parent)
      return;
    auto &sib = w->parent->children;
    sib.erase(std::find(sib.begin(), sib.end(), w));
    w->parent = nullptr;
  }

  static void attach(WNode *w, WNode *parent, int index) {
    index = std::clamp<int>(index, 0, static_cast<int>(parent->children.size()));
    parent->children.insert(parent->children.begin() + index, w);
    w->parent = parent;
  }

private:
  std::deque<WNode> arena_;
};

syntax::NodeSpec to_spec(const WNode *w) {
  syntax::NodeSpec s;
  s.kind = w->kind;
  if (w->leaf)
    s.token = w->token;
  for (const WNode *c : w->children)
    s.children.push_back(to_spec(c));
  return s;
}

// Shared state for script generation.
struct ScriptGen {
  const SyntaxTree &before;
  const SyntaxTree &after;
  const Mapping &m;
  WorkTree wt;
  std::vector<WNode *> w_before;       // before id -> node
  std::vector<WNode *> w_after;        // after id -> inserted node
  std::vector<char> after_inorder;     // after id -> alignment flag
  WNode *vroot = nullptr;
  EditScript script;

  ScriptGen(const SyntaxTree &b, const SyntaxTree &a, const Mapping &mm)
      : before(b), after(a), m(mm), w_before(b.size(), nullptr),
        w_after(a.size(), nullptr), after_inorder(a.size(), 0) {
    vroot = wt.make("\x01vroot", "", false, NodeRef{Side::Before, kInvalidNode});
    if (b.size() > 0) {
      WNode *r = wt.copy_of(b, b.root(), w_before);
      r->parent = vroot;
      vroot->children.push_back(r);
    }
  }

  WNode *w_of_after(NodeId a) const {
    NodeId b = m.src_of(a);
    return b != kInvalidNode ? w_before[static_cast<std::size_t>(b)]
                             : w_after[static_cast<std::size_t>(a)];
  }

  static NodeRef ref_of(const WNode *w) { return w->origin; }

  // Position for an after node among its parent's children, transcribed into
  // the working tree: one past the working-tree index of the partner of the
  // nearest in-order left sibling.
  int find_pos(NodeId a) {
    NodeId pa = after.parent(a);
    if (pa == kInvalidNode)
      return static_cast<int>(vroot->children.size());
    const auto &siblings = after.children(pa);
    NodeId v = kInvalidNode;
    for (NodeId s : siblings) {
      if (s == a)
        break;
      if (after_inorder[static_cast<std::size_t>(s)])
        v = s;
    }
    if (v == kInvalidNode)
      return 0;
    WNode *u = w_of_after(v);
    return u->index_in_parent() + 1;
  }

  void align_children(WNode *w, NodeId a) {
    for (WNode *c : w->children)
      c->inorder = false;
    for (NodeId c : after.children(a))
      after_inorder[static_cast<std::size_t>(c)] = 0;

    // Children of w mapped into children of a, and vice versa.
    std::vector<WNode *> s1;
    for (WNode *c : w->children) {
      if (c->origin.side != Side::Before)
        continue;
      NodeId ca = m.dst_of(c->origin.id);
      if (ca != kInvalidNode && after.parent(ca) == a)
        s1.push_back(c);
    }
    std::vector<NodeId> s2;
    for (NodeId c : after.children(a)) {
      NodeId cb = m.src_of(c);
      if (cb != kInvalidNode && w_before[static_cast<std::size_t>(cb)]->parent == w)
        s2.push_back(c);
    }

    auto common = lcs_indices(s1.size(), s2.size(), [&](std::size_t i, std::size_t j) {
      return m.dst_of(s1[i]->origin.id) == s2[j];
    });
    std::vector<char> s2_in_lcs(s2.size(), 0);
    for (auto [i, j] : common) {
      s1[i]->inorder = true;
      after_inorder[static_cast<std::size_t>(s2[j])] = 1;
      s2_in_lcs[j] = 1;
    }
    for (std::size_t j = 0; j < s2.size(); ++j) {
      if (s2_in_lcs[j])
        continue;
      NodeId ca = s2[j];
      NodeId cb = m.src_of(ca);
      WNode *cw = w_before[static_cast<std::size_t>(cb)];
      after_inorder[static_cast<std::size_t>(ca)] = 1;
      int k = find_pos(ca);
      WorkTree::detach(cw);
      WorkTree::attach(cw, w, k);
      cw->inorder = true;
      script.actions.push_back(
          EditAction{EditOp::Move, NodeRef{Side::Before, cb}, ref_of(w), k});
    }
  }

  void run() {
    // Breadth-first insert/move/update pass over the after tree.
    std::queue<NodeId> bfs;
    bfs.push(after.root());
    while (!bfs.empty()) {
      NodeId a = bfs.front();
      bfs.pop();
      for (NodeId c : after.children(a))
        bfs.push(c);

      WNode *z = a == after.root() ? vroot : w_of_after(after.parent(a));
      NodeId b = m.src_of(a);
      WNode *w = nullptr;
      if (b == kInvalidNode) {
        int k = find_pos(a);
        w = wt.make(after.kind(a), after.token(a), after.is_leaf(a),
                    NodeRef{Side::After, a});
        WorkTree::attach(w, z, k);
        w_after[static_cast<std::size_t>(a)] = w;
        w->inorder = true;
        after_inorder[static_cast<std::size_t>(a)] = 1;
        EditAction act{EditOp::Insert, NodeRef{Side::After, a}, ref_of(z), k};
        act.kind = after.kind(a);
        act.token = after.token(a);
        act.leaf = after.is_leaf(a);
        script.actions.push_back(std::move(act));
      } else {
        w = w_before[static_cast<std::size_t>(b)];
        if (a != after.root() && w->parent != z) {
          int k = find_pos(a);
          WorkTree::detach(w);
          WorkTree::attach(w, z, k);
          w->inorder = true;
          after_inorder[static_cast<std::size_t>(a)] = 1;
          script.actions.push_back(
              EditAction{EditOp::Move, NodeRef{Side::Before, b}, ref_of(z), k});
        }
        if (w->leaf && after.is_leaf(a) && w->token != after.token(a)) {
          EditAction act{EditOp::Update, NodeRef{Side::Before, b}};
          act.new_token = after.token(a);
          script.actions.push_back(std::move(act));
          w->token = after.token(a);
        }
      }
      align_children(w, a);
    }

    // Delete pass: unmapped before nodes, children first.
    std::vector<NodeId> order;
    postorder(before, before.root(), order);
    for (NodeId b : order) {
      if (m.has_src(b))
        continue;
      WNode *w = w_before[static_cast<std::size_t>(b)];
      WorkTree::detach(w);
      script.actions.push_back(EditAction{EditOp::Delete, NodeRef{Side::Before, b}});
    }
  }
};

} // namespace

EditScript edit_script(const SyntaxTree &before, const SyntaxTree &after,
                       const Mapping &m) {
  validate_mapping(before, after, m);
  ScriptGen gen(before, after, m);
  gen.run();
  return std::move(gen.script);
}

SyntaxTree apply_script(const SyntaxTree &before, const EditScript &script) {
  WorkTree wt;
  std::vector<WNode *> by_before(before.size(), nullptr);
  std::unordered_map<NodeId, WNode *> by_after;
  WNode *vroot = wt.make("\x01vroot", "", false, NodeRef{Side::Before, kInvalidNode});
  if (before.size() > 0) {
    WNode *r = wt.copy_of(before, before.root(), by_before);
    r->parent = vroot;
    vroot->children.push_back(r);
  }

  auto resolve = [&](const NodeRef &ref, std::size_t action_idx) -> WNode * {
    if (ref.id == kInvalidNode)
      return vroot;
    WNode *w = nullptr;
    if (ref.side == Side::Before) {
      if (ref.id >= 0 && static_cast<std::size_t>(ref.id) < by_before.size())
        w = by_before[static_cast<std::size_t>(ref.id)];
    } else {
      auto it = by_after.find(ref.id);
      w = it == by_after.end() ? nullptr : it->second;
    }
    if (!w || !w->in_tree)
      throw Error("action " + std::to_string(action_idx) +
                  ": dangling node reference");
    return w;
  };

  for (std::size_t i = 0; i < script.actions.size(); ++i) {
    const EditAction &act = script.actions[i];
    switch (act.op) {
    case EditOp::Insert: {
      WNode *parent = resolve(act.parent, i);
      WNode *w = wt.make(act.kind, act.token, act.leaf, act.subject);
      WorkTree::attach(w, parent, act.index);
      if (act.subject.side == Side::After)
        by_after[act.subject.id] = w;
      break;
    }
    case EditOp::Move: {
      WNode *w = resolve(act.subject, i);
      WNode *parent = resolve(act.parent, i);
      for (WNode *anc = parent; anc; anc = anc->parent)
        if (anc == w)
          throw Error("action " + std::to_string(i) + ": move creates a cycle");
      WorkTree::detach(w);
      WorkTree::attach(w, parent, act.index);
      break;
    }
    case EditOp::Update: {
      WNode *w = resolve(act.subject, i);
      if (!w->leaf)
        throw Error("action " + std::to_string(i) + ": update of a non-leaf");
      w->token = act.new_token;
      break;
    }
    case EditOp::Delete: {
      WNode *w = resolve(act.subject, i);
      WorkTree::detach(w);
      auto mark = [](WNode *n, auto &&self) -> void {
        n->in_tree = false;
        for (WNode *c : n->children)
          self(c, self);
      };
      mark(w, mark);
      break;
    }
    }
  }

  if (vroot->children.size() != 1)
    throw Error("script application left " + std::to_string(vroot->children.size()) +
                " roots");
  return syntax::build_tree(to_spec(vroot->children.front()), before.grammar_id());
}

std::string script_to_json(const EditScript &script, const SyntaxTree &before,
                           const SyntaxTree &after) {
  nlohmann::json out = nlohmann::json::array();
  auto describe = [&](const NodeRef &ref) -> nlohmann::json {
    if (ref.id == kInvalidNode)
      return "(root)";
    const SyntaxTree &t = ref.side == Side::Before ? before : after;
    return t.kind(ref.id);
  };
  for (const EditAction &a : script.actions) {
    nlohmann::json j;
    switch (a.op) {
    case EditOp::Insert: j["op"] = "insert"; break;
    case EditOp::Delete: j["op"] = "delete"; break;
    case EditOp::Update: j["op"] = "update"; break;
    case EditOp::Move: j["op"] = "move"; break;
    }
    j["kind"] = describe(a.subject);
    const SyntaxTree &t = a.subject.side == Side::Before ? before : after;
    if (a.subject.id != kInvalidNode && t.is_leaf(a.subject.id))
      j["token"] = t.token(a.subject.id);
    if (a.op == EditOp::Update)
      j["new_token"] = a.new_token;
    if (a.op == EditOp::Insert || a.op == EditOp::Move) {
      j["parent"] = describe(a.parent);
      j["index"] = a.index;
    }
    out.push_back(std::move(j));
  }
  return out.dump(2);
}

} // namespace fixprint::treediff
