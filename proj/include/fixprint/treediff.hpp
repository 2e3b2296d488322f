//===- treediff.hpp - tree matching and edit scripts ------------*- C++ -*-===//
//
// Part of fixprint, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//
//
// Two-phase differencing over syntax trees: a greedy top-down pass maps
// isomorphic subtrees by descending height, then a bottom-up pass maps
// containers whose dice coefficient clears a threshold and recovers leaf
// mappings inside them. Edit scripts are derived from the mapping and can be
// replayed with apply_script, which serves as the module's own oracle.
//
//===----------------------------------------------------------------------===//

#ifndef FIXPRINT_TREEDIFF_HPP
#define FIXPRINT_TREEDIFF_HPP

#include "fixprint/syntax.hpp"

#include <string>
#include <utility>
#include <vector>

namespace fixprint::treediff {

using syntax::NodeId;
using syntax::SyntaxTree;

struct MatchConfig {
  int min_height = 2;         // smallest subtree height phase 1 will map
  double dice_threshold = 0.5; // container acceptance bar for phase 2
};

/// Injective both ways; mapped pairs always have equal kind.
class Mapping {
public:
  Mapping() = default;
  Mapping(std::size_t before_size, std::size_t after_size);

  void link(NodeId before_node, NodeId after_node);
  bool has_src(NodeId before_node) const;
  bool has_dst(NodeId after_node) const;
  NodeId dst_of(NodeId before_node) const;
  NodeId src_of(NodeId after_node) const;

  std::size_t size() const { return pair_count_; }
  /// Pairs ordered by before-side id.
  std::vector<std::pair<NodeId, NodeId>> pairs() const;

private:
  std::vector<NodeId> src_to_dst_;
  std::vector<NodeId> dst_to_src_;
  std::size_t pair_count_ = 0;
};

enum class EditOp { Insert, Delete, Update, Move };

enum class Side { Before, After };

struct NodeRef {
  Side side = Side::Before;
  NodeId id = syntax::kInvalidNode;
  friend bool operator==(const NodeRef &, const NodeRef &) = default;
};

/// Sentinel parent for actions that target the working tree's root slot.
inline constexpr NodeRef kRootParent{Side::Before, syntax::kInvalidNode};

struct EditAction {
  EditOp op;
  NodeRef subject;
  // Insert/Move placement.
  NodeRef parent = kRootParent;
  int index = -1;
  // Insert payload (scripts are self-contained and replayable).
  std::string kind;
  std::string token;
  bool leaf = false;
  // Update payload.
  std::string new_token;
};

struct EditScript {
  std::vector<EditAction> actions;
  bool empty() const { return actions.empty(); }
  std::size_t size() const { return actions.size(); }
};

/// Throws Error when the trees come from different grammars.
Mapping match_trees(const SyntaxTree &before, const SyntaxTree &after,
                    const MatchConfig &cfg = {});

/// Container similarity: 2*|mapped descendant pairs| / (|desc n1| + |desc n2|).
/// Zero when neither node has descendants.
double dice(const Mapping &m, const SyntaxTree &before, const SyntaxTree &after,
            NodeId n1, NodeId n2);

/// Chawathe-style script: inserts and moves in breadth-first order of the
/// after tree, deletes in postorder of the before tree. A node that is both
/// moved and token-changed emits Move then Update.
EditScript edit_script(const SyntaxTree &before, const SyntaxTree &after,
                       const Mapping &m);

/// Replays a script against `before`. The result carries zeroed spans; it is
/// isomorphic (digest-equal) to the after tree the script was derived from.
/// Throws Error naming the action index on dangling references.
SyntaxTree apply_script(const SyntaxTree &before, const EditScript &script);

/// Debug rendering: ordered JSON list of (op, kind, token, parent kind, index).
std::string script_to_json(const EditScript &script, const SyntaxTree &before,
                           const SyntaxTree &after);

/// Validates mapping invariants against the two trees; throws Error on
/// violation. Used by edit_script and exposed for tests.
void validate_mapping(const SyntaxTree &before, const SyntaxTree &after,
                      const Mapping &m);

} // namespace fixprint::treediff

#endif // FIXPRINT_TREEDIFF_HPP
