//===- pattern.hpp - fix patterns, fingerprints, clustering -----*- C++ -*-===//
//
// Part of fixprint, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//
//
// Turns edit scripts into abstracted fix patterns: each action is paired with
// its ancestor chain up to the enclosing function, the chains are merged into
// one shape tree (instances unified through the mapping), tokens are
// abstracted, and the canonical serialization of the shape is hashed into a
// fingerprint. Similar fingerprints are linked by normalized tree edit
// distance.
//
//===----------------------------------------------------------------------===//

#ifndef FIXPRINT_PATTERN_HPP
#define FIXPRINT_PATTERN_HPP

#include "fixprint/digest.hpp"
#include "fixprint/syntax.hpp"
#include "fixprint/treediff.hpp"

#include <optional>
#include <string>
#include <vector>

namespace fixprint::pattern {

using syntax::NodeId;
using syntax::SyntaxTree;
using treediff::EditOp;
using treediff::EditScript;
using treediff::Mapping;
using treediff::NodeRef;

enum class AbstractionLevel { None, Literals, IdentifiersAndLiterals };

std::string to_string(AbstractionLevel level);
std::optional<AbstractionLevel> abstraction_level_from_string(std::string_view s);

struct RichAction {
  std::size_t action_index;                // into the underlying script
  std::vector<std::string> context_chain;  // anchor kind first, parent kind last
  std::vector<NodeRef> context_refs;       // instances behind context_chain
  NodeRef site;                            // the action subject
};

/// Edit script plus per-action ancestor context. Holds pointers to the trees
/// it was derived from; they must outlive it.
struct RichEditScript {
  const SyntaxTree *before = nullptr;
  const SyntaxTree *after = nullptr;
  Mapping mapping;
  EditScript script;
  std::vector<RichAction> actions;
};

/// Pairs every action with its ancestor-kind chain, starting at the nearest
/// enclosing FunctionDef (or the tree root). Inserts are anchored in the
/// after tree, everything else in the before tree.
RichEditScript enrich(const EditScript &script, const SyntaxTree &before,
                      const SyntaxTree &after, const Mapping &mapping);

/// One node of a fix-pattern shape: merged context chains with action nodes
/// (op-annotated, token-abstracted) at the leaves.
struct ShapeNode {
  std::string kind;
  bool is_action = false;
  std::vector<EditOp> ops;           // canonical order; "Move+Update" possible
  std::optional<std::string> token;  // abstracted lexeme
  std::vector<ShapeNode> children;

  friend bool operator==(const ShapeNode &, const ShapeNode &) = default;
};

int shape_size(const ShapeNode &shape);

struct FixPattern {
  ShapeNode shape;
  AbstractionLevel level = AbstractionLevel::IdentifiersAndLiterals;

  friend bool operator==(const FixPattern &, const FixPattern &) = default;
};

FixPattern abstract(const RichEditScript &rich, AbstractionLevel level);

struct Fingerprint {
  std::string canonical; // preorder S-expression of the shape
  Digest128 digest;

  friend bool operator==(const Fingerprint &, const Fingerprint &) = default;
};

Fingerprint fingerprint(const FixPattern &pattern);

std::string shape_to_canonical(const ShapeNode &shape);
/// Inverse of shape_to_canonical; throws Error on malformed input.
ShapeNode shape_from_canonical(std::string_view canonical);

/// Abstracted shape of a plain (unpatched) subtree, identifiers numbered by
/// first occurrence within this subtree. Used for site-side matching.
ShapeNode shape_of_subtree(const SyntaxTree &tree, NodeId id, AbstractionLevel level);

/// Re-numbers ID_k placeholders by first occurrence in preorder, making two
/// shapes comparable independently of the corpus-wide numbering they came from.
ShapeNode with_local_id_numbering(ShapeNode shape);

/// Exact unit-cost tree edit distance between shapes (Zhang-Shasha).
int shape_edit_distance(const ShapeNode &a, const ShapeNode &b);

/// 1 - TED/max(node counts); 1.0 iff equal shapes. Throws Error when the
/// patterns carry different abstraction levels.
double similarity(const FixPattern &p1, const FixPattern &p2);

struct Provenance {
  std::string cve_id;
  std::string commit_hash;
  std::string file_path;
  std::string function_name; // empty means file scope

  friend auto operator<=>(const Provenance &, const Provenance &) = default;
};

struct ClusterLink {
  std::string from_digest;
  std::string to_digest;
  double score;
};

struct PatternCluster {
  Fingerprint representative;
  AbstractionLevel level = AbstractionLevel::IdentifiersAndLiterals;
  std::vector<std::pair<Provenance, Fingerprint>> members;
  std::vector<ClusterLink> links;
};

/// Exact-digest grouping first; similarity links between representatives of
/// distinct groups at or above `theta`. Output sorted by descending member
/// count, ties by representative canonical. Throws Error if theta is outside
/// [0,1] or the patterns mix abstraction levels.
std::vector<PatternCluster>
cluster(const std::vector<std::pair<Provenance, FixPattern>> &patterns, double theta);

} // namespace fixprint::pattern

#endif // FIXPRINT_PATTERN_HPP
