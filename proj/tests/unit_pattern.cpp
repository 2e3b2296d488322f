#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fixprint/pattern.hpp"
#include "fixprint/util.hpp"

#include "oracles.hpp"
#include "testutil.hpp"

using namespace fixprint;
using namespace fixprint::syntax;
using namespace fixprint::pattern;

namespace {

SyntaxTree parse(const std::string &src) { return parse_source(src, kGrammarCSubset); }

struct Mined {
  SyntaxTree before, after;
  treediff::Mapping mapping;
  treediff::EditScript script;
};

Mined mine(const std::string &b, const std::string &a) {
  Mined m{parse(b), parse(a), {}, {}};
  m.mapping = treediff::match_trees(m.before, m.after);
  m.script = treediff::edit_script(m.before, m.after, m.mapping);
  return m;
}

FixPattern mine_pattern(const std::string &b, const std::string &a,
                        AbstractionLevel lvl) {
  Mined m = mine(b, a);
  RichEditScript rich = enrich(m.script, m.before, m.after, m.mapping);
  return abstract(rich, lvl);
}

// Guard-insertion patch used across several cases.
const char *kGuardBefore = "static int send_msg(struct dev *d, struct cmd *m)\n"
                           "{\n"
                           "\tdvb_send(d, m->msg, 8);\n"
                           "\treturn 0;\n"
                           "}\n";
const char *kGuardAfter = "static int send_msg(struct dev *d, struct cmd *m)\n"
                          "{\n"
                          "\tif (m->msg_len > 6)\n"
                          "\t\treturn -EINVAL;\n"
                          "\tdvb_send(d, m->msg, m->msg_len);\n"
                          "\treturn 0;\n"
                          "}\n";

ShapeNode leaf_shape(const std::string &kind, const std::string &token) {
  ShapeNode n;
  n.kind = kind;
  n.token = token;
  return n;
}

ShapeNode random_shape(testutil::Rng &rng, int &budget) {
  ShapeNode n;
  n.kind = std::string(1, static_cast<char>('A' + testutil::uniform(rng, 0, 2)));
  if (testutil::uniform(rng, 0, 3) == 0) {
    n.is_action = true;
    n.ops.push_back(testutil::uniform(rng, 0, 1) ? EditOp::Insert : EditOp::Delete);
  }
  --budget;
  if (budget <= 0 || testutil::uniform(rng, 0, 2) == 0) {
    n.token = "t" + std::to_string(testutil::uniform(rng, 1, 2));
    return n;
  }
  int kids = std::min(budget, testutil::uniform(rng, 1, 3));
  for (int i = 0; i < kids && budget > 0; ++i)
    n.children.push_back(random_shape(rng, budget));
  return n;
}

} // namespace

TEST_CASE("enrich: empty script has zero actions") {
  Mined m = mine("int x;\n", "int x;\n");
  CHECK(m.script.empty());
  RichEditScript rich = enrich(m.script, m.before, m.after, m.mapping);
  CHECK(rich.actions.empty());
  FixPattern p = abstract(rich, AbstractionLevel::IdentifiersAndLiterals);
  CHECK(p.shape.kind.empty()); // empty shape for an empty script
}

TEST_CASE("enrich: guard insertion anchors at [FunctionDef, Block]") {
  Mined m = mine(kGuardBefore, kGuardAfter);
  RichEditScript rich = enrich(m.script, m.before, m.after, m.mapping);
  bool found = false;
  for (const RichAction &ra : rich.actions) {
    const SyntaxTree &t = ra.site.side == treediff::Side::Before ? m.before : m.after;
    if (t.kind(ra.site.id) == kind::IfStmt) {
      found = true;
      REQUIRE(ra.context_chain.size() == 2);
      CHECK(ra.context_chain[0] == kind::FunctionDef);
      CHECK(ra.context_chain[1] == kind::Block);
    }
  }
  CHECK(found);
}

TEST_CASE("enrich: file-scope changes anchor at TranslationUnit") {
  Mined m = mine("int threshold = 1;\n", "int threshold = 2;\n");
  RichEditScript rich = enrich(m.script, m.before, m.after, m.mapping);
  REQUIRE(!rich.actions.empty());
  for (const RichAction &ra : rich.actions) {
    REQUIRE(!ra.context_chain.empty());
    CHECK(ra.context_chain.front() == kind::TranslationUnit);
  }
  FixPattern p = abstract(rich, AbstractionLevel::IdentifiersAndLiterals);
  CHECK(fingerprint(p).canonical ==
        "(TranslationUnit (Declaration (Update!Literal \"LIT\")))");
}

TEST_CASE("enrich: action site outside the trees is an error") {
  Mined m = mine(kGuardBefore, kGuardAfter);
  treediff::EditScript bogus = m.script;
  bogus.actions[0].subject.id = 100000;
  CHECK_THROWS_AS(enrich(bogus, m.before, m.after, m.mapping), Error);
}

TEST_CASE("abstract: guard pattern at identifiers_and_literals") {
  FixPattern p =
      mine_pattern(kGuardBefore, kGuardAfter, AbstractionLevel::IdentifiersAndLiterals);
  std::string canonical = fingerprint(p).canonical;
  // Context skeleton threads through the touched call; the guard is a pure
  // insert whose condition keeps its operator but abstracts names and bounds.
  CHECK(canonical.find("(FunctionDef (Block") == 0);
  CHECK(canonical.find("(ExprStmt (Call (ArgList") != std::string::npos);
  CHECK(canonical.find("(Insert!IfStmt") != std::string::npos);
  CHECK(canonical.find("(Insert!BinaryOp (Insert!Member (Insert!Identifier "
                       "\"ID_1\") (Insert!Operator \"->\") (Insert!Identifier "
                       "\"ID_2\")) (Insert!Operator \">\") (Insert!Literal "
                       "\"LIT\"))") != std::string::npos);
  CHECK(canonical.find("(Delete!Literal \"LIT\")") != std::string::npos);
}

TEST_CASE("abstract: levels differ in what they erase") {
  FixPattern none = mine_pattern(kGuardBefore, kGuardAfter, AbstractionLevel::None);
  FixPattern lits = mine_pattern(kGuardBefore, kGuardAfter, AbstractionLevel::Literals);
  FixPattern both =
      mine_pattern(kGuardBefore, kGuardAfter, AbstractionLevel::IdentifiersAndLiterals);

  std::string cn = fingerprint(none).canonical;
  std::string cl = fingerprint(lits).canonical;
  std::string cb = fingerprint(both).canonical;
  CHECK(cn.find("\"msg_len\"") != std::string::npos);
  CHECK(cn.find("\"6\"") != std::string::npos);
  CHECK(cl.find("\"msg_len\"") != std::string::npos); // identifiers kept
  CHECK(cl.find("\"LIT\"") != std::string::npos);     // literals erased
  CHECK(cb.find("\"ID_") != std::string::npos);
  CHECK(cb.find("\"msg_len\"") == std::string::npos);
}

TEST_CASE("alpha-renaming invariance at identifiers_and_literals") {
  testutil::Rng rng(808);
  FixPattern base =
      mine_pattern(kGuardBefore, kGuardAfter, AbstractionLevel::IdentifiersAndLiterals);
  Fingerprint base_fp = fingerprint(base);
  FixPattern base_none = mine_pattern(kGuardBefore, kGuardAfter, AbstractionLevel::None);

  for (int i = 0; i < 25; ++i) {
    auto [rb, ra] = testutil::rename_identifiers(rng, kGuardBefore, kGuardAfter);
    FixPattern renamed = mine_pattern(rb, ra, AbstractionLevel::IdentifiersAndLiterals);
    CHECK(fingerprint(renamed) == base_fp);
    // At level none the very same patch fingerprints differently.
    FixPattern renamed_none = mine_pattern(rb, ra, AbstractionLevel::None);
    CHECK(fingerprint(renamed_none).digest != fingerprint(base_none).digest);
  }
}

TEST_CASE("structural sensitivity: an extra statement changes every level") {
  std::string mutated = kGuardAfter;
  std::size_t brace = mutated.find("{\n");
  REQUIRE(brace != std::string::npos);
  mutated.insert(brace + 2, "\tint zq_guard = 1;\n");

  for (AbstractionLevel lvl :
       {AbstractionLevel::None, AbstractionLevel::Literals,
        AbstractionLevel::IdentifiersAndLiterals}) {
    Fingerprint base = fingerprint(mine_pattern(kGuardBefore, kGuardAfter, lvl));
    Fingerprint changed = fingerprint(mine_pattern(kGuardBefore, mutated, lvl));
    CHECK(base.digest != changed.digest);
  }
}

TEST_CASE("fingerprint determinism and canonical round-trip") {
  FixPattern p1 =
      mine_pattern(kGuardBefore, kGuardAfter, AbstractionLevel::IdentifiersAndLiterals);
  FixPattern p2 =
      mine_pattern(kGuardBefore, kGuardAfter, AbstractionLevel::IdentifiersAndLiterals);
  CHECK(fingerprint(p1) == fingerprint(p2));

  ShapeNode round = shape_from_canonical(fingerprint(p1).canonical);
  CHECK(round == p1.shape);
  CHECK(shape_to_canonical(round) == fingerprint(p1).canonical);
}

TEST_CASE("op annotations distinguish canonicals") {
  ShapeNode a = leaf_shape(kind::Identifier, "ID_1");
  a.is_action = true;
  a.ops = {EditOp::Insert};
  ShapeNode b = a;
  b.ops = {EditOp::Delete};
  CHECK(shape_to_canonical(a) != shape_to_canonical(b));

  ShapeNode moved_updated = a;
  moved_updated.ops = {EditOp::Move, EditOp::Update};
  CHECK(shape_to_canonical(moved_updated).find("Move+Update!") != std::string::npos);
  CHECK(shape_from_canonical(shape_to_canonical(moved_updated)) == moved_updated);
}

TEST_CASE("similarity: identities and the extra-leaf example") {
  ShapeNode five;
  five.kind = "K";
  for (int i = 0; i < 4; ++i)
    five.children.push_back(leaf_shape("L", "t" + std::to_string(i)));
  ShapeNode six = five;
  six.children.push_back(leaf_shape("L", "t4"));

  FixPattern p5{five, AbstractionLevel::IdentifiersAndLiterals};
  FixPattern p6{six, AbstractionLevel::IdentifiersAndLiterals};
  CHECK(similarity(p5, p5) == doctest::Approx(1.0));
  CHECK(similarity(p5, p6) == doctest::Approx(1.0 - 1.0 / 6.0));
  CHECK(similarity(p6, p5) == doctest::Approx(similarity(p5, p6)));

  FixPattern single_a{leaf_shape("A", "x"), AbstractionLevel::IdentifiersAndLiterals};
  FixPattern single_b{leaf_shape("B", "x"), AbstractionLevel::IdentifiersAndLiterals};
  CHECK(similarity(single_a, single_b) == doctest::Approx(0.0));

  FixPattern other_level{leaf_shape("A", "x"), AbstractionLevel::None};
  CHECK_THROWS_AS(similarity(single_a, other_level), Error);
}

TEST_CASE("similarity agrees with the brute-force TED oracle on small shapes") {
  testutil::Rng rng(616);
  for (int trial = 0; trial < 120; ++trial) {
    int b1 = testutil::uniform(rng, 1, 8), b2 = testutil::uniform(rng, 1, 8);
    ShapeNode s1 = random_shape(rng, b1);
    ShapeNode s2 = random_shape(rng, b2);
    int lib = shape_edit_distance(s1, s2);
    int brute = oracle::ted(oracle::from_shape(s1), oracle::from_shape(s2));
    CAPTURE(shape_to_canonical(s1));
    CAPTURE(shape_to_canonical(s2));
    CHECK(lib == brute);
  }
}

TEST_CASE("cluster: digest groups, links, ordering, partition") {
  FixPattern guard =
      mine_pattern(kGuardBefore, kGuardAfter, AbstractionLevel::IdentifiersAndLiterals);
  testutil::Rng rng(99);
  auto [rb, ra] = testutil::rename_identifiers(rng, kGuardBefore, kGuardAfter);
  FixPattern renamed = mine_pattern(rb, ra, AbstractionLevel::IdentifiersAndLiterals);
  FixPattern filescope = mine_pattern("int threshold = 1;\n", "int threshold = 2;\n",
                                      AbstractionLevel::IdentifiersAndLiterals);

  SUBCASE("all identical: one cluster, no links") {
    std::vector<std::pair<Provenance, FixPattern>> in = {
        {{"CVE-2015-9289", "c1", "a.c", "f"}, guard},
        {{"CVE-2015-9289", "c1", "b.c", "g"}, renamed},
        {{"CVE-2015-9289", "c1", "c.c", "h"}, guard}};
    auto clusters = cluster(in, 0.8);
    REQUIRE(clusters.size() == 1);
    CHECK(clusters[0].members.size() == 3);
    CHECK(clusters[0].links.empty());
  }

  SUBCASE("dissimilar patterns: singleton clusters") {
    std::vector<std::pair<Provenance, FixPattern>> in = {
        {{"CVE-2015-9289", "c1", "a.c", "f"}, guard},
        {{"CVE-2016-0001", "c2", "z.c", ""}, filescope}};
    auto clusters = cluster(in, 0.8);
    REQUIRE(clusters.size() == 2);
    CHECK(clusters[0].members.size() == 1);
    CHECK(clusters[1].members.size() == 1);
    CHECK(clusters[0].links.empty()); // tiny vs big shape: similarity below 0.8
  }

  SUBCASE("partition: every pattern lands in exactly one cluster") {
    std::vector<std::pair<Provenance, FixPattern>> in = {
        {{"CVE-2015-9289", "c1", "a.c", "f"}, guard},
        {{"CVE-2015-9289", "c1", "b.c", "g"}, guard},
        {{"CVE-2016-0001", "c2", "z.c", ""}, filescope}};
    auto clusters = cluster(in, 0.0); // even with links everywhere
    std::size_t total = 0;
    for (const auto &c : clusters)
      total += c.members.size();
    CHECK(total == in.size());
    // theta=0 links every distinct pair, attached to the earlier cluster.
    REQUIRE(clusters.size() == 2);
    CHECK(clusters[0].links.size() == 1);
  }

  SUBCASE("threshold range is validated") {
    std::vector<std::pair<Provenance, FixPattern>> in = {
        {{"CVE-2015-9289", "c1", "a.c", "f"}, guard}};
    CHECK_THROWS_AS(cluster(in, -0.1), Error);
    CHECK_THROWS_AS(cluster(in, 1.5), Error);
  }

  SUBCASE("input order does not matter") {
    std::vector<std::pair<Provenance, FixPattern>> in = {
        {{"CVE-2015-9289", "c1", "a.c", "f"}, guard},
        {{"CVE-2015-9289", "c1", "b.c", "g"}, renamed},
        {{"CVE-2016-0001", "c2", "z.c", ""}, filescope}};
    auto c1 = cluster(in, 0.8);
    std::reverse(in.begin(), in.end());
    auto c2 = cluster(in, 0.8);
    REQUIRE(c1.size() == c2.size());
    for (std::size_t i = 0; i < c1.size(); ++i) {
      CHECK(c1[i].representative == c2[i].representative);
      CHECK(c1[i].members.size() == c2[i].members.size());
    }
  }
}

TEST_CASE("patches identical up to naming share one pattern, except at level none") {
  testutil::Rng rng(4242);
  auto [rb, ra] = testutil::rename_identifiers(rng, kGuardBefore, kGuardAfter);
  CHECK(mine_pattern(kGuardBefore, kGuardAfter, AbstractionLevel::IdentifiersAndLiterals) ==
        mine_pattern(rb, ra, AbstractionLevel::IdentifiersAndLiterals));
  CHECK_FALSE(mine_pattern(kGuardBefore, kGuardAfter, AbstractionLevel::None) ==
              mine_pattern(rb, ra, AbstractionLevel::None));
}
