//===- detect.cpp - missing-similar-component detection -----------------------===//
//
// Part of fixprint, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#include "fixprint/detect.hpp"

#include "fixprint/util.hpp"

#include <algorithm>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

namespace fixprint::detect {

using nlohmann::json;
using pattern::EditOp;
using syntax::NodeId;
using syntax::SyntaxTree;

//===----------------------------------------------------------------------===//
// graphs and candidates
//===----------------------------------------------------------------------===//

FixPatternGraph build_graph(const std::string &cve_id,
                            const std::vector<ExtractedPattern> &extracted,
                            std::vector<ExtractionFailure> failures) {
  FixPatternGraph g;
  g.cve_id = cve_id;
  g.failures = std::move(failures);

  std::map<std::string, GraphNode> by_digest;
  for (const ExtractedPattern &e : extracted) {
    if (e.prov.cve_id != cve_id)
      throw Error("graph for " + cve_id + " fed entry from " + e.prov.cve_id);
    g.level = e.pat.level;
    GraphNode &n = by_digest[e.fp.digest.hex()];
    n.fp = e.fp;
    n.sites.push_back(Site{e.prov.file_path, e.prov.function_name});
  }
  for (auto &[digest, node] : by_digest) {
    std::sort(node.sites.begin(), node.sites.end());
    node.sites.erase(std::unique(node.sites.begin(), node.sites.end()),
                     node.sites.end());
    g.nodes.push_back(std::move(node));
  }
  std::sort(g.nodes.begin(), g.nodes.end(), [](const GraphNode &a, const GraphNode &b) {
    if (a.sites.size() != b.sites.size())
      return a.sites.size() > b.sites.size();
    return a.fp.digest.hex() < b.fp.digest.hex();
  });
  std::sort(g.failures.begin(), g.failures.end(),
            [](const ExtractionFailure &a, const ExtractionFailure &b) {
              return a.file_path < b.file_path;
            });
  return g;
}

std::vector<CandidateReport>
detect_candidates(const std::vector<FixPatternGraph> &graphs, int k) {
  if (k < 2)
    throw Error("detection threshold k must be at least 2");
  std::vector<CandidateReport> out;
  for (const FixPatternGraph &g : graphs) {
    for (const GraphNode &n : g.nodes) {
      if (static_cast<int>(n.sites.size()) < k)
        continue;
      CandidateReport r;
      r.cve_id = g.cve_id;
      r.fp = n.fp;
      r.level = g.level;
      r.multiplicity = static_cast<int>(n.sites.size());
      r.sites = n.sites;
      r.score = r.multiplicity;
      out.push_back(std::move(r));
    }
  }
  std::sort(out.begin(), out.end(), [](const CandidateReport &a, const CandidateReport &b) {
    if (a.score != b.score)
      return a.score > b.score;
    if (a.cve_id != b.cve_id)
      return a.cve_id < b.cve_id;
    return a.fp.digest.hex() < b.fp.digest.hex();
  });
  return out;
}

//===----------------------------------------------------------------------===//
// anchor / effect decomposition
//===----------------------------------------------------------------------===//

namespace {

// Context skeleton: action nodes (and everything below them) pruned away.
bool prune_actions(const ShapeNode &in, ShapeNode &out) {
  if (in.is_action)
    return false;
  out.kind = in.kind;
  out.token = in.token;
  for (const ShapeNode &c : in.children) {
    ShapeNode child;
    if (prune_actions(c, child))
      out.children.push_back(std::move(child));
  }
  return true;
}

void collect_effects(const ShapeNode &n, const std::string &parent_kind,
                     std::vector<Effect> &out) {
  if (n.is_action) {
    out.push_back(Effect{parent_kind, n});
    return; // nested actions stay inside their top-level effect subtree
  }
  for (const ShapeNode &c : n.children)
    collect_effects(c, n.kind, out);
}

} // namespace

AnchorQuery anchor_query(const FixPattern &pattern, std::string grammar_id) {
  AnchorQuery q;
  q.level = pattern.level;
  q.grammar_id = std::move(grammar_id);
  if (pattern.shape.kind.empty())
    throw Error("cannot build an anchor query from an empty pattern");
  collect_effects(pattern.shape, "", q.effects);
  if (q.effects.empty())
    throw Error("pattern has no actions");
  if (!prune_actions(pattern.shape, q.anchor))
    throw Error("pattern has no unchanged context to anchor on");
  return q;
}

//===----------------------------------------------------------------------===//
// shape embedding
//===----------------------------------------------------------------------===//

namespace {

// Identifier placeholders match through a bijection; everything else matches
// verbatim.
struct Bindings {
  std::map<std::string, std::string> fwd, rev;

  bool bind(const std::string &from, const std::string &to) {
    auto f = fwd.find(from);
    if (f != fwd.end())
      return f->second == to;
    auto r = rev.find(to);
    if (r != rev.end())
      return false;
    fwd.emplace(from, to);
    rev.emplace(to, from);
    return true;
  }
};

bool is_id_placeholder(const std::string &t) { return t.rfind("ID_", 0) == 0; }

bool tokens_match(const ShapeNode &pat, const ShapeNode &site, Bindings &bind) {
  if (pat.token.has_value() != site.token.has_value())
    return false;
  if (!pat.token)
    return true;
  if (pat.kind == syntax::kind::Identifier && is_id_placeholder(*pat.token) &&
      is_id_placeholder(*site.token))
    return bind.bind(*pat.token, *site.token);
  return *pat.token == *site.token;
}

bool embed_node(const ShapeNode &pat, const ShapeNode &site, Bindings &bind);

// Order-preserving injective embedding of pattern children into site
// children; small sizes, plain backtracking with binding snapshots.
bool embed_children(const std::vector<ShapeNode> &ps, const std::vector<ShapeNode> &cs,
                    std::size_t pi, std::size_t ci, Bindings &bind) {
  if (pi == ps.size())
    return true;
  for (std::size_t j = ci; j < cs.size(); ++j) {
    if (cs.size() - j < ps.size() - pi)
      return false;
    Bindings trial = bind;
    if (embed_node(ps[pi], cs[j], trial) &&
        embed_children(ps, cs, pi + 1, j + 1, trial)) {
      bind = trial;
      return true;
    }
  }
  return false;
}

bool embed_node(const ShapeNode &pat, const ShapeNode &site, Bindings &bind) {
  if (pat.kind != site.kind)
    return false;
  if (!tokens_match(pat, site, bind))
    return false;
  return embed_children(pat.children, site.children, 0, 0, bind);
}

bool embeds_at(const ShapeNode &pat, const ShapeNode &site) {
  Bindings b;
  return embed_node(pat, site, b);
}

bool embeds_anywhere(const ShapeNode &pat, const ShapeNode &site) {
  if (embeds_at(pat, site))
    return true;
  for (const ShapeNode &c : site.children)
    if (embeds_anywhere(pat, c))
      return true;
  return false;
}

bool kind_anywhere(const std::string &kind, const ShapeNode &site) {
  if (site.kind == kind)
    return true;
  for (const ShapeNode &c : site.children)
    if (kind_anywhere(kind, c))
      return true;
  return false;
}

// Effect subtrees carry op annotations the site shape cannot have; strip them
// for presence matching.
ShapeNode strip_actions(const ShapeNode &n) {
  ShapeNode out;
  out.kind = n.kind;
  out.token = n.token;
  for (const ShapeNode &c : n.children)
    out.children.push_back(strip_actions(c));
  return out;
}

} // namespace

std::string evidence_to_string(OmissionEvidence e) {
  return e == OmissionEvidence::Absent ? "absent" : "present_but_different";
}

std::vector<OmissionSite> scan_omissions(const AnchorQuery &query,
                                         const std::vector<SnapshotFile> &snapshot,
                                         const std::vector<Site> &patched) {
  std::vector<const SnapshotFile *> files;
  for (const SnapshotFile &f : snapshot) {
    if (f.tree.grammar_id() != query.grammar_id)
      throw Error("snapshot file " + f.path + " parsed with grammar " +
                  f.tree.grammar_id() + ", query expects " + query.grammar_id);
    files.push_back(&f);
  }
  std::sort(files.begin(), files.end(),
            [](const SnapshotFile *a, const SnapshotFile *b) { return a->path < b->path; });

  std::set<Site> patched_set(patched.begin(), patched.end());
  std::vector<OmissionSite> out;

  for (const SnapshotFile *f : files) {
    const SyntaxTree &tree = f->tree;
    if (tree.size() == 0)
      continue;
    // Candidate roots: functions for function-anchored patterns, the file
    // root otherwise.
    std::vector<NodeId> roots;
    if (query.anchor.kind == syntax::kind::FunctionDef) {
      for (NodeId id = 0; id < static_cast<NodeId>(tree.size()); ++id)
        if (tree.kind(id) == syntax::kind::FunctionDef)
          roots.push_back(id);
    } else {
      roots.push_back(tree.root());
    }

    for (NodeId root : roots) {
      ShapeNode site_shape = pattern::shape_of_subtree(tree, root, query.level);
      if (!embeds_at(query.anchor, site_shape))
        continue;

      std::string fn_name = query.anchor.kind == syntax::kind::FunctionDef
                                ? syntax::function_name(tree, root)
                                : std::string();
      if (patched_set.count(Site{f->path, fn_name}))
        continue;

      bool all_satisfied = true;
      bool any_same_kind = false;
      for (const Effect &eff : query.effects) {
        ShapeNode needle =
            pattern::with_local_id_numbering(strip_actions(eff.node));
        bool pure_move = !eff.node.ops.empty() &&
                         std::all_of(eff.node.ops.begin(), eff.node.ops.end(),
                                     [](EditOp op) { return op == EditOp::Move; });
        bool pure_delete = !eff.node.ops.empty() &&
                           std::all_of(eff.node.ops.begin(), eff.node.ops.end(),
                                       [](EditOp op) { return op == EditOp::Delete; });
        if (pure_move)
          continue;
        bool present = embeds_anywhere(needle, site_shape);
        bool satisfied = pure_delete ? !present : present;
        if (!satisfied) {
          all_satisfied = false;
          if (pure_delete || kind_anywhere(eff.node.kind, site_shape))
            any_same_kind = true;
        }
      }
      if (all_satisfied)
        continue;

      OmissionSite o;
      o.file_path = f->path;
      o.function_name = fn_name;
      o.span = tree.span(root);
      o.evidence = any_same_kind ? OmissionEvidence::PresentButDifferent
                                 : OmissionEvidence::Absent;
      out.push_back(std::move(o));
    }
  }

  std::sort(out.begin(), out.end(), [](const OmissionSite &a, const OmissionSite &b) {
    if (a.file_path != b.file_path)
      return a.file_path < b.file_path;
    return a.span.begin < b.span.begin;
  });
  return out;
}

//===----------------------------------------------------------------------===//
// serialization
//===----------------------------------------------------------------------===//

namespace {

json site_to_json(const Site &s) {
  return json{{"file_path", s.file_path}, {"function", s.function_name}};
}

Site site_from_json(const json &j) {
  return Site{j.value("file_path", ""), j.value("function", "")};
}

json omission_to_json(const OmissionSite &o) {
  json j;
  j["file_path"] = o.file_path;
  j["function"] = o.function_name;
  j["span"] = json::array({o.span.begin, o.span.end});
  j["evidence"] = evidence_to_string(o.evidence);
  return j;
}

OmissionSite omission_from_json(const json &j) {
  OmissionSite o;
  o.file_path = j.value("file_path", "");
  o.function_name = j.value("function", "");
  if (j.contains("span") && j["span"].is_array() && j["span"].size() == 2) {
    o.span.begin = j["span"][0].get<std::uint32_t>();
    o.span.end = j["span"][1].get<std::uint32_t>();
  }
  o.evidence = j.value("evidence", "absent") == "present_but_different"
                   ? OmissionEvidence::PresentButDifferent
                   : OmissionEvidence::Absent;
  return o;
}

} // namespace

std::string reports_to_json(const std::vector<CandidateReport> &reports) {
  json arr = json::array();
  for (const CandidateReport &r : reports) {
    json j;
    j["cve_id"] = r.cve_id;
    j["fingerprint"] = r.fp.digest.hex();
    j["canonical"] = r.fp.canonical;
    j["level"] = pattern::to_string(r.level);
    j["multiplicity"] = r.multiplicity;
    j["score"] = r.score;
    json sites = json::array();
    for (const Site &s : r.sites)
      sites.push_back(site_to_json(s));
    j["sites"] = std::move(sites);
    json omissions = json::array();
    for (const OmissionSite &o : r.omissions)
      omissions.push_back(omission_to_json(o));
    j["omissions"] = std::move(omissions);
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

std::vector<CandidateReport> reports_from_json(std::string_view text) {
  json arr = json::parse(text, nullptr, false);
  if (arr.is_discarded() || !arr.is_array())
    throw Error("malformed candidate report JSON");
  std::vector<CandidateReport> out;
  for (const json &j : arr) {
    CandidateReport r;
    r.cve_id = j.value("cve_id", "");
    r.fp.canonical = j.value("canonical", "");
    r.fp.digest = digest_bytes(r.fp.canonical);
    auto lvl = pattern::abstraction_level_from_string(j.value("level", ""));
    r.level = lvl.value_or(AbstractionLevel::IdentifiersAndLiterals);
    r.multiplicity = j.value("multiplicity", 0);
    r.score = j.value("score", 0);
    if (j.contains("sites"))
      for (const json &s : j["sites"])
        r.sites.push_back(site_from_json(s));
    if (j.contains("omissions"))
      for (const json &o : j["omissions"])
        r.omissions.push_back(omission_from_json(o));
    out.push_back(std::move(r));
  }
  return out;
}

std::string reports_to_text(const std::vector<CandidateReport> &reports) {
  std::string out;
  if (reports.empty())
    return "no candidates above threshold\n";
  for (const CandidateReport &r : reports) {
    out += r.cve_id + "  fingerprint " + r.fp.digest.hex().substr(0, 12) +
           "  applied to " + std::to_string(r.multiplicity) + " sites (score " +
           std::to_string(r.score) + ")\n";
    for (const Site &s : r.sites)
      out += "  applied: " + s.file_path +
             (s.function_name.empty() ? "" : " :: " + s.function_name) + "\n";
    if (r.omissions.empty()) {
      out += "  no omissions found in snapshot\n";
    } else {
      for (const OmissionSite &o : r.omissions)
        out += "  OMITTED: " + o.file_path +
               (o.function_name.empty() ? "" : " :: " + o.function_name) +
               "  [bytes " + std::to_string(o.span.begin) + ".." +
               std::to_string(o.span.end) + ", " + evidence_to_string(o.evidence) +
               "]\n";
    }
  }
  return out;
}

std::string graphs_to_json(const std::vector<FixPatternGraph> &graphs) {
  json arr = json::array();
  for (const FixPatternGraph &g : graphs) {
    json j;
    j["cve_id"] = g.cve_id;
    j["level"] = pattern::to_string(g.level);
    json nodes = json::array();
    for (const GraphNode &n : g.nodes) {
      json nj;
      nj["fingerprint"] = n.fp.digest.hex();
      nj["canonical"] = n.fp.canonical;
      json sites = json::array();
      for (const Site &s : n.sites)
        sites.push_back(site_to_json(s));
      nj["sites"] = std::move(sites);
      nodes.push_back(std::move(nj));
    }
    j["nodes"] = std::move(nodes);
    json failures = json::array();
    for (const ExtractionFailure &f : g.failures)
      failures.push_back({{"file_path", f.file_path}, {"reason", f.reason}});
    j["failures"] = std::move(failures);
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

} // namespace fixprint::detect
