//===- syntax.hpp - error-tolerant C-subset syntax trees --------*- C++ -*-===//
//
// Part of fixprint, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//
//
// Parses C-like source into a generic ordered labeled tree. The grammar is a
// kernel-patch-sized subset of C; anything outside it degrades to opaque
// Unknown leaves instead of failing. Trees are immutable after construction
// and safe to share across threads.
//
//===----------------------------------------------------------------------===//

#ifndef FIXPRINT_SYNTAX_HPP
#define FIXPRINT_SYNTAX_HPP

#include "fixprint/digest.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fixprint::syntax {

using NodeId = std::int32_t;
inline constexpr NodeId kInvalidNode = -1;

struct Span {
  std::uint32_t begin = 0;
  std::uint32_t end = 0;
  friend bool operator==(const Span &, const Span &) = default;
};

struct SyntaxNode {
  std::string kind;
  std::string token; // exact source slice; meaningful only when leaf
  bool leaf = false;
  Span span;
  NodeId parent = kInvalidNode;
  std::vector<NodeId> children;
  int height = 1;
};

/// Immutable tree over a parsed source buffer. Nodes are stored in preorder,
/// so the subtree of node i occupies the index interval [i, subtree_end(i)).
class SyntaxTree {
public:
  SyntaxTree() = default;

  NodeId root() const { return nodes_.empty() ? kInvalidNode : 0; }
  std::size_t size() const { return nodes_.size(); }

  const SyntaxNode &node(NodeId id) const { return nodes_[static_cast<std::size_t>(id)]; }
  const std::string &kind(NodeId id) const { return node(id).kind; }
  const std::string &token(NodeId id) const { return node(id).token; }
  bool is_leaf(NodeId id) const { return node(id).leaf; }
  Span span(NodeId id) const { return node(id).span; }
  NodeId parent(NodeId id) const { return node(id).parent; }
  const std::vector<NodeId> &children(NodeId id) const { return node(id).children; }
  int height(NodeId id) const { return node(id).height; }

  NodeId subtree_end(NodeId id) const { return subtree_end_[static_cast<std::size_t>(id)]; }
  bool in_subtree(NodeId id, NodeId ancestor) const {
    return id >= ancestor && id < subtree_end(ancestor);
  }
  /// Proper descendants of id.
  int descendant_count(NodeId id) const { return subtree_end(id) - id - 1; }

  const Digest128 &digest(NodeId id) const { return digests_[static_cast<std::size_t>(id)]; }

  const std::string &grammar_id() const { return grammar_id_; }
  const Digest128 &source_digest() const { return source_digest_; }

  /// Canonical S-expression dump of a subtree; the same token quoting is used
  /// by fingerprint serialization.
  std::string to_sexpr(NodeId id) const;

private:
  friend class TreeAssembler;
  std::vector<SyntaxNode> nodes_;
  std::vector<NodeId> subtree_end_;
  std::vector<Digest128> digests_;
  std::string grammar_id_;
  Digest128 source_digest_;
};

/// Node-kind labels of the "c-subset-1" grammar.
namespace kind {
inline constexpr const char *TranslationUnit = "TranslationUnit";
inline constexpr const char *FunctionDef = "FunctionDef";
inline constexpr const char *ParamList = "ParamList";
inline constexpr const char *Param = "Param";
inline constexpr const char *Declaration = "Declaration";
inline constexpr const char *Declarator = "Declarator";
inline constexpr const char *StructDecl = "StructDecl";
inline constexpr const char *FieldList = "FieldList";
inline constexpr const char *TypeName = "TypeName";
inline constexpr const char *Block = "Block";
inline constexpr const char *IfStmt = "IfStmt";
inline constexpr const char *ElseClause = "ElseClause";
inline constexpr const char *ForStmt = "ForStmt";
inline constexpr const char *WhileStmt = "WhileStmt";
inline constexpr const char *DoStmt = "DoStmt";
inline constexpr const char *SwitchStmt = "SwitchStmt";
inline constexpr const char *CaseLabel = "CaseLabel";
inline constexpr const char *LabelStmt = "LabelStmt";
inline constexpr const char *ReturnStmt = "ReturnStmt";
inline constexpr const char *GotoStmt = "GotoStmt";
inline constexpr const char *BreakStmt = "BreakStmt";
inline constexpr const char *ContinueStmt = "ContinueStmt";
inline constexpr const char *ExprStmt = "ExprStmt";
inline constexpr const char *EmptyStmt = "EmptyStmt";
inline constexpr const char *Assign = "Assign";
inline constexpr const char *Conditional = "Conditional";
inline constexpr const char *CommaExpr = "CommaExpr";
inline constexpr const char *BinaryOp = "BinaryOp";
inline constexpr const char *UnaryOp = "UnaryOp";
inline constexpr const char *PostfixOp = "PostfixOp";
inline constexpr const char *Call = "Call";
inline constexpr const char *ArgList = "ArgList";
inline constexpr const char *Index = "Index";
inline constexpr const char *Member = "Member";
inline constexpr const char *Cast = "Cast";
inline constexpr const char *Paren = "Paren";
inline constexpr const char *InitList = "InitList";
// Leaves.
inline constexpr const char *Identifier = "Identifier";
inline constexpr const char *Literal = "Literal";
inline constexpr const char *Keyword = "Keyword";
inline constexpr const char *Operator = "Operator";
inline constexpr const char *Punct = "Punct";
inline constexpr const char *PreprocLine = "PreprocLine";
inline constexpr const char *Unknown = "Unknown";
} // namespace kind

inline constexpr const char *kGrammarCSubset = "c-subset-1";

/// Parses `text` with the registered grammar front-end named by `grammar_id`.
/// Never fails on malformed input (Unknown leaves absorb it); throws Error
/// only for an unregistered grammar.
SyntaxTree parse_source(std::string_view text, std::string_view grammar_id);

bool grammar_registered(std::string_view grammar_id);

/// Structural digest of a subtree: equal iff the subtrees are isomorphic
/// (same kinds, tokens, and child order). Spans are not part of the digest.
inline const Digest128 &subtree_digest(const SyntaxTree &tree, NodeId id) {
  return tree.digest(id);
}

/// Leaves have height 1; an internal node is one above its tallest child.
inline int node_height(const SyntaxTree &tree, NodeId id) { return tree.height(id); }

/// Splices leaf tokens back between the original inter-token bytes. Equal to
/// `source` whenever the tree was parsed from it.
std::string reconstruct_source(const SyntaxTree &tree, std::string_view source);

/// Name of a FunctionDef node (the declarator identifier), or empty if the
/// node is not a function definition.
std::string function_name(const SyntaxTree &tree, NodeId fn);

/// Nearest enclosing FunctionDef of `id` (possibly id itself), or kInvalidNode.
NodeId enclosing_function(const SyntaxTree &tree, NodeId id);

/// Canonical token quoting shared by tree dumps and fingerprints.
std::string quote_token(std::string_view token);
/// Inverse of quote_token; returns std::nullopt on malformed input.
std::optional<std::string> unquote_token(std::string_view quoted);

/// Programmatic tree construction, used by script application and tests.
struct NodeSpec {
  std::string kind;
  std::optional<std::string> token; // present => leaf
  std::vector<NodeSpec> children;
};

SyntaxTree build_tree(const NodeSpec &root, std::string_view grammar_id = kGrammarCSubset);

} // namespace fixprint::syntax

#endif // FIXPRINT_SYNTAX_HPP
