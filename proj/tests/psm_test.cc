// Copyright 2026 The xmig Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "scenario.h"
#include "xmig/synthgen.h"

using namespace xmig;
using namespace xmig::testing;

namespace {

const Fixtures& fixtures() {
  static const Fixtures fx = load_fixtures(default_fixture_dir());
  return fx;
}

AttributeMap am(const std::string& from, const std::string& to, const std::string& chain) {
  AttributeMap a;
  if (!from.empty()) a.from = AttrRef::parse(from);
  a.to = AttrRef::parse(to);
  a.chain = parse_chain(chain);
  return a;
}

SchemaMapping mapping(const AppId& from, const AppId& to, std::vector<NodeMap> nms) {
  return {from, to, std::move(nms), {from, to}};
}

const SchemaMapping& direct(const AppId& a, const AppId& b) {
  for (const auto& m : fixtures().direct) {
    if (m.from_app == a && m.to_app == b) return m;
  }
  throw std::logic_error("no direct mapping " + a + "->" + b);
}

/// Fresh identities "k1", "k2", ... per call site.
std::function<std::string()> counter() {
  auto next = std::make_shared<int>(0);
  return [next] { return "k" + std::to_string(++*next); };
}

/// Destination row of `n` after the chain of node maps, each hop through
/// `materialize`.
std::optional<DataNode> hop(const std::vector<const SchemaMapping*>& legs, DataNode n) {
  for (const SchemaMapping* m : legs) {
    const NodeMap* nm = m->for_source(n.id.type);
    if (nm == nullptr) return std::nullopt;
    Materialized out = materialize(*nm, n, fixtures().apps.at(m->to_app), counter());
    out.node.id = {m->to_app, nm->to_node, "x"};
    n = out.node;
  }
  return n;
}

/// Attributes written by identity generation, whose values are fresh.
bool is_new_id(const NodeMap& nm, const AttrRef& to) {
  const AttributeMap* a = nm.to_attr(to);
  return a != nullptr && std::any_of(a->chain.begin(), a->chain.end(), [](const Transform& t) {
           return t.kind == TransformKind::kNewId;
         });
}

}  // namespace

TEST_CASE("transforms parse and print") {
  for (const char* text : {"copy", "constant(x)", "newID", "concat(posts.lang)", "truncate(5)",
                           "placeholder"}) {
    CHECK(Transform::parse(text).str() == text);
  }
  CHECK(chain_str(parse_chain("copy | truncate(3)")) == "copy | truncate(3)");
  CHECK_THROWS_AS(Transform::parse("frobnicate"), MappingError);
  CHECK_THROWS_AS(Transform::parse("truncate(x)"), MappingError);
}

TEST_CASE("evaluation of each transform") {
  auto row = [](const AttrRef& r) { return r.attr == "lang" ? Value("en") : Value(); };
  auto ids = counter();
  CHECK(evaluate(parse_chain("copy"), "abc", row, ids) == "abc");
  CHECK(evaluate(parse_chain("constant(z)"), "abc", row, ids) == "z");
  CHECK(evaluate(parse_chain("newID"), "abc", row, ids) == "k1");
  CHECK(evaluate(parse_chain("concat(posts.lang)"), "abc", row, ids) == "abc en");
  CHECK(evaluate(parse_chain("concat(posts.loc)"), "abc", row, ids) == "abc");
  CHECK(evaluate(parse_chain("truncate(2)"), "abc", row, ids) == "ab");
  CHECK(evaluate(parse_chain("copy | truncate(2) | concat(posts.lang)"), "abc", row, ids) == "ab en");
}

TEST_CASE("composing two identity regenerations leaves one newID") {
  auto ab = mapping("a", "b", {{"n", "n", {am("t.id", "u.id", "newID")}}});
  auto bc = mapping("b", "c", {{"n", "n", {am("u.id", "v.id", "newID")}}});
  SchemaMapping ac = compose(ab, bc);
  REQUIRE(ac.node_maps.size() == 1);
  REQUIRE(ac.node_maps[0].attributes.size() == 1);
  CHECK(ac.node_maps[0].attributes[0].chain == TransformChain{{TransformKind::kNewId, ""}});
  CHECK(ac.path == std::vector<AppId>{"a", "b", "c"});
  CHECK_FALSE(ac.direct());
}

TEST_CASE("composing copies chains the attributes") {
  auto ab = mapping("a", "b", {{"post", "status", {am("posts.text", "statuses.body", "copy"),
                                                   am("posts.lang", "statuses.lang", "copy")}}});
  auto bc = mapping("b", "c", {{"status", "tweet", {am("statuses.body", "tweets.content", "copy")}}});
  SchemaMapping ac = compose(ab, bc);
  REQUIRE(ac.node_maps.size() == 1);
  const NodeMap& nm = ac.node_maps[0];
  CHECK(nm.from_node == "post");
  CHECK(nm.to_node == "tweet");
  REQUIRE(nm.attributes.size() == 1);
  CHECK(nm.attributes[0].from == AttrRef{"posts", "text"});
  CHECK(nm.attributes[0].to == AttrRef{"tweets", "content"});
  CHECK(chain_str(nm.attributes[0].chain) == "copy");
}

TEST_CASE("mismatched legs do not compose") {
  auto ab = mapping("a", "b", {});
  auto cd = mapping("c", "d", {});
  CHECK_THROWS_AS(compose(ab, cd), CompositionDomainError);
}

TEST_CASE("an attribute lost in one leg is reported unmapped") {
  Scenario s;
  auto ab = mapping("forum", "b", {{"post", "status", {am("posts.text", "statuses.body", "copy"),
                                                       am("posts.lang", "statuses.lang", "copy")}}});
  auto bc = mapping("b", "c", {{"status", "tweet", {am("statuses.body", "tweets.content", "copy")}}});
  CoverageReport cov = coverage(compose(ab, bc), s.forum);
  const NodeCoverage* post = cov.node("post");
  REQUIRE(post != nullptr);
  CHECK(std::find(post->unmapped.begin(), post->unmapped.end(), AttrRef{"posts", "lang"}) !=
        post->unmapped.end());
  CHECK(post->mapped == 1);
}

TEST_CASE("coverage of the scenario mapping lists the unmapped post attributes") {
  Scenario s;
  CoverageReport cov = coverage(*s.catalog.find("forum", "micro"), s.forum);
  const NodeCoverage* post = cov.node("post");
  REQUIRE(post != nullptr);
  CHECK(post->unmapped == std::vector<AttrRef>{{"posts", "lang"}, {"posts", "loc"}});
  CHECK(post->mapped == 4);
  CHECK(post->total == 6);
}

TEST_CASE("coverage extremes: identity is complete, empty maps nothing") {
  Scenario s;
  SchemaMapping id = mapping("forum", "forum", {});
  SchemaMapping none = mapping("forum", "micro", {});
  std::size_t attrs = 0;
  for (const auto& t : s.forum.dag.node_types) {
    NodeMap nm{t.type_name, t.type_name, {}};
    for (const auto& table : t.member_tables) {
      for (const auto& a : s.forum.schema.table(table)->attributes) {
        nm.attributes.push_back(am(table + "." + a, table + "." + a, "copy"));
        ++attrs;
      }
    }
    id.node_maps.push_back(nm);
  }
  CHECK(coverage(id, s.forum).aggregate == doctest::Approx(1.0));
  CoverageReport empty = coverage(none, s.forum);
  CHECK(empty.aggregate == doctest::Approx(0.0));
  std::size_t listed = 0;
  for (const auto& n : empty.nodes) listed += n.unmapped.size();
  CHECK(listed == attrs);
}

TEST_CASE("derive_all closes a chain of direct mappings") {
  std::vector<SchemaMapping> chain{direct(kDiaspora, kGnuSocial), direct(kGnuSocial, kTwitter),
                                   direct(kTwitter, kMastodon)};
  auto all = derive_all(chain, fixtures().apps);
  MappingCatalog cat(all);
  CHECK(all.size() == 6);
  REQUIRE(cat.find(kDiaspora, kTwitter) != nullptr);
  CHECK(cat.find(kDiaspora, kTwitter)->path ==
        std::vector<AppId>{kDiaspora, kGnuSocial, kTwitter});
  REQUIRE(cat.find(kDiaspora, kMastodon) != nullptr);
  CHECK(cat.find(kDiaspora, kMastodon)->path ==
        std::vector<AppId>{kDiaspora, kGnuSocial, kTwitter, kMastodon});
  REQUIRE(cat.find(kGnuSocial, kMastodon) != nullptr);
  CHECK(cat.find(kGnuSocial, kMastodon)->path.size() == 3);
  CHECK(cat.find(kMastodon, kDiaspora) == nullptr);
  CHECK(derive_all({}, fixtures().apps).empty());
}

TEST_CASE("derive_all prefers the path that keeps more attributes") {
  // a -> b -> d keeps four of five attributes, a -> c -> d three.
  std::map<AppId, AppDefinition> apps;
  for (const AppId app : {"a", "b", "c", "d"}) {
    AppDefinition def;
    def.schema.app_id = def.dag.app_id = app;
    def.schema.tables = {{"t", {"id", "p", "q", "r", "s"}, "id", ""}};
    NodeTypeSpec root;
    root.type_name = "n";
    root.member_tables = {"t"};
    def.dag.root_type = "n";
    def.dag.node_types = {root};
    apps[app] = def;
  }
  auto full = [](const AppId& x, const AppId& y, std::vector<std::string> attrs) {
    NodeMap nm{"n", "n", {}};
    for (const auto& a : attrs) nm.attributes.push_back(am("t." + a, "t." + a, "copy"));
    return mapping(x, y, {nm});
  };
  const std::vector<std::string> all5{"id", "p", "q", "r", "s"};
  auto derived = derive_all({full("a", "b", all5), full("b", "d", {"id", "p", "q", "r"}),
                             full("a", "c", all5), full("c", "d", {"id", "p", "q"})},
                            apps);
  MappingCatalog cat(derived);
  const SchemaMapping* ad = cat.find("a", "d");
  REQUIRE(ad != nullptr);
  CHECK(ad->path == std::vector<AppId>{"a", "b", "d"});
  CHECK(coverage(*ad, apps["a"]).aggregate == doctest::Approx(0.8));

  // Equal coverage: the lexicographically smaller path wins.
  derived = derive_all({full("a", "b", all5), full("b", "d", all5), full("a", "c", all5),
                        full("c", "d", all5)},
                       apps);
  CHECK(MappingCatalog(derived).find("a", "d")->path == std::vector<AppId>{"a", "b", "d"});

  // A direct mapping beats any composition, however lossy.
  derived = derive_all({full("a", "b", all5), full("b", "d", all5), full("a", "d", {"id"})}, apps);
  CHECK(MappingCatalog(derived).find("a", "d")->direct());
}

TEST_CASE("the fixture catalog connects every ordered pair, directs first") {
  const auto& cat = fixtures().catalog;
  std::size_t pairs = 0;
  for (const auto& [a, da] : fixtures().apps) {
    for (const auto& [b, db] : fixtures().apps) {
      if (a == b) continue;
      const SchemaMapping* m = cat.find(a, b);
      REQUIRE(m != nullptr);
      ++pairs;
      bool has_direct = std::any_of(fixtures().direct.begin(), fixtures().direct.end(),
                                    [&](const SchemaMapping& d) {
                                      return d.from_app == a && d.to_app == b;
                                    });
      CHECK(m->direct() == has_direct);
    }
  }
  CHECK(pairs == 12);
}

TEST_CASE("a status field is left unmapped to exercise bags") {
  CoverageReport cov = coverage(direct(kMastodon, kDiaspora), fixtures().apps.at(kMastodon));
  const NodeCoverage* status = cov.node("status");
  REQUIRE(status != nullptr);
  CHECK(std::find(status->unmapped.begin(), status->unmapped.end(),
                  AttrRef{"statuses", "visibility"}) != status->unmapped.end());
}

TEST_CASE("property: composition agrees with hopping through the middle app") {
  // Every fixture node pushed through compose(ab, bc) lands on the same
  // values as pushing it through ab and then bc, identities excepted.
  AppStore store(fixtures().apps.at(kDiaspora));
  GenConfig cfg;
  cfg.users = 30;
  generate(cfg, store);
  std::size_t checked = 0;
  for (const auto& ab : fixtures().direct) {
    for (const auto& bc : fixtures().direct) {
      if (ab.to_app != bc.from_app || bc.to_app == ab.from_app || ab.from_app != kDiaspora) continue;
      SchemaMapping ac = compose(ab, bc);
      for (const auto& n : store.all_nodes()) {
        const NodeMap* nm = ac.for_source(n.id.type);
        auto two = hop({&ab, &bc}, n);
        if (nm == nullptr) continue;
        REQUIRE(two.has_value());
        Materialized one = materialize(*nm, n, fixtures().apps.at(bc.to_app), counter());
        for (const auto& a : nm->attributes) {
          if (is_new_id(*nm, a.to)) continue;
          CHECK(one.node.get(a.to) == two->get(a.to));
          ++checked;
        }
      }
    }
  }
  CHECK(checked > 1000);
}

TEST_CASE("property: composition is associative in effect") {
  const SchemaMapping& ab = direct(kDiaspora, kGnuSocial);
  const SchemaMapping& bc = direct(kGnuSocial, kTwitter);
  const SchemaMapping& cd = direct(kTwitter, kMastodon);
  SchemaMapping left = compose(compose(ab, bc), cd);
  SchemaMapping right = compose(ab, compose(bc, cd));
  CHECK(left.path == right.path);
  AppStore store(fixtures().apps.at(kDiaspora));
  GenConfig cfg;
  cfg.users = 30;
  generate(cfg, store);
  const AppDefinition& md = fixtures().apps.at(kMastodon);
  std::size_t checked = 0;
  for (const auto& n : store.all_nodes()) {
    const NodeMap* l = left.for_source(n.id.type);
    const NodeMap* r = right.for_source(n.id.type);
    REQUIRE((l == nullptr) == (r == nullptr));
    if (l == nullptr) continue;
    Materialized a = materialize(*l, n, md, counter());
    Materialized b = materialize(*r, n, md, counter());
    CHECK(a.node.rows == b.node.rows);
    ++checked;
  }
  CHECK(checked > 100);
}

TEST_CASE("property: composition never gains attributes over either leg") {
  std::size_t checked = 0;
  for (const auto& ab : fixtures().direct) {
    for (const auto& bc : fixtures().direct) {
      if (ab.to_app != bc.from_app) continue;
      SchemaMapping ac = compose(ab, bc);
      for (const auto& nm : ac.node_maps) {
        const NodeMap* first = ab.for_source(nm.from_node);
        REQUIRE(first != nullptr);
        const NodeMap* second = bc.for_source(first->to_node);
        REQUIRE(second != nullptr);
        auto used = first->consumed();
        for (const auto& a : nm.consumed()) CHECK(used.contains(a));
        for (const auto& a : nm.attributes) CHECK(second->to_attr(a.to) != nullptr);
        ++checked;
      }
      CoverageReport c = coverage(ac, fixtures().apps.at(ab.from_app));
      CoverageReport c1 = coverage(ab, fixtures().apps.at(ab.from_app));
      CHECK(c.aggregate <= c1.aggregate + 1e-12);
      for (const auto& n : c.nodes) CHECK(n.mapped <= c1.node(n.node_type)->mapped);
    }
  }
  CHECK(checked > 10);
}

TEST_CASE("structural checks reject ambiguous mappings") {
  auto twice = mapping("a", "b", {{"n", "m", {am("t.x", "u.x", "copy")}},
                                  {"n", "m", {am("t.y", "u.y", "copy")}}});
  CHECK_THROWS_AS(twice.check_structure(), MappingError);
  auto dup = mapping("a", "b", {{"n", "m", {am("t.x", "u.x", "copy"), am("t.y", "u.x", "copy")}}});
  CHECK_THROWS_AS(dup.check_structure(), MappingError);
  CHECK_NOTHROW(mapping("a", "b", {{"n", "m", {am("t.x", "u.x", "copy")}}}).check_structure());
}

TEST_CASE("materialize fills every destination column and reports leftovers") {
  Scenario s;
  const NodeMap* nm = s.catalog.find("forum", "micro")->for_source("post");
  Materialized m = materialize(*nm, *s.src.node(s.post1), s.micro, counter());
  CHECK(m.node.get({"statuses", "id"}) == "k1");
  CHECK(m.node.get({"statuses", "body"}) == "hi all");
  CHECK(m.node.rows.at("statuses").size() == 4);
  CHECK(m.leftovers == std::map<AttrRef, Value>{{{"posts", "lang"}, "en"}, {{"posts", "loc"}, "NYC"}});
  CHECK(m.provenance.at({"statuses", "account_id"}) == AttrRef{"posts", "author_id"});
}
