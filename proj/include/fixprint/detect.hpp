//===- detect.hpp - missing-similar-component detection ---------*- C++ -*-===//
//
// Part of fixprint, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//
//
// Per-CVE fix-pattern graphs (CVE root, fingerprint children), candidate
// flagging when one fingerprint repeats across several components, and an
// anchor/effect scan of a codebase snapshot for sites that carry the fix
// context but not the fix itself.
//
//===----------------------------------------------------------------------===//

#ifndef FIXPRINT_DETECT_HPP
#define FIXPRINT_DETECT_HPP

#include "fixprint/pattern.hpp"

#include <string>
#include <vector>

namespace fixprint::detect {

using pattern::AbstractionLevel;
using pattern::Fingerprint;
using pattern::FixPattern;
using pattern::ShapeNode;

struct Site {
  std::string file_path;
  std::string function_name; // empty means file scope (TranslationUnit)

  friend auto operator<=>(const Site &, const Site &) = default;
};

struct ExtractedPattern {
  pattern::Provenance prov;
  FixPattern pat;
  Fingerprint fp;
};

struct ExtractionFailure {
  std::string file_path;
  std::string reason;
};

struct GraphNode {
  Fingerprint fp;
  std::vector<Site> sites; // duplicate-free, sorted
};

struct FixPatternGraph {
  std::string cve_id; // the root
  AbstractionLevel level = AbstractionLevel::IdentifiersAndLiterals;
  std::vector<GraphNode> nodes;             // descending site count
  std::vector<ExtractionFailure> failures;  // never silently dropped
};

/// Groups one CVE's extracted fingerprints into graph nodes. Entries from a
/// different CVE are an error.
FixPatternGraph build_graph(const std::string &cve_id,
                            const std::vector<ExtractedPattern> &extracted,
                            std::vector<ExtractionFailure> failures = {});

enum class OmissionEvidence { Absent, PresentButDifferent };

struct OmissionSite {
  std::string file_path;
  std::string function_name;
  syntax::Span span; // anchor match
  OmissionEvidence evidence = OmissionEvidence::Absent;
};

struct CandidateReport {
  std::string cve_id;
  Fingerprint fp;
  AbstractionLevel level = AbstractionLevel::IdentifiersAndLiterals;
  int multiplicity = 0; // distinct sites carrying this fingerprint
  std::vector<Site> sites;
  std::vector<OmissionSite> omissions;
  int score = 0; // = multiplicity
};

/// One report per (graph, fingerprint) whose multiplicity reaches k; ordered
/// by descending score, then cve_id, then fingerprint digest. k below 2 is an
/// error.
std::vector<CandidateReport>
detect_candidates(const std::vector<FixPatternGraph> &graphs, int k);

struct Effect {
  std::string attachment_kind; // context node the action hangs off
  ShapeNode node;              // action subtree, ops retained
};

struct AnchorQuery {
  ShapeNode anchor; // context skeleton: pattern shape minus action nodes
  std::vector<Effect> effects;
  AbstractionLevel level = AbstractionLevel::IdentifiersAndLiterals;
  std::string grammar_id;
};

/// Splits a pattern into unchanged context and applied effects. A pattern
/// whose root is itself an action has no context: error.
AnchorQuery anchor_query(const FixPattern &pattern,
                         std::string grammar_id = syntax::kGrammarCSubset);

struct SnapshotFile {
  std::string path;
  syntax::SyntaxTree tree;
};

/// Every site matching the anchor where the effect-presence check fails,
/// excluding `patched`; ordered by (file path, span). Effect presence: Insert
/// and Update effects must occur (shape-embedded, locally renumbered) inside
/// the matched function; Delete effects must have vanished; pure Moves are
/// placement changes and are not re-checked. Snapshot trees parsed with a
/// different grammar than the query are an error.
std::vector<OmissionSite> scan_omissions(const AnchorQuery &query,
                                         const std::vector<SnapshotFile> &snapshot,
                                         const std::vector<Site> &patched);

std::string evidence_to_string(OmissionEvidence e);

/// JSON for candidate reports (with omissions) and a human-readable text
/// rendering of the same.
std::string reports_to_json(const std::vector<CandidateReport> &reports);
std::vector<CandidateReport> reports_from_json(std::string_view text);
std::string reports_to_text(const std::vector<CandidateReport> &reports);

std::string graphs_to_json(const std::vector<FixPatternGraph> &graphs);

} // namespace fixprint::detect

#endif // FIXPRINT_DETECT_HPP
