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
#include "random_dag.h"
#include "scenario.h"
#include "xmig/synthgen.h"

using namespace xmig;
using namespace xmig::testing;
using nlohmann::json;

namespace {

const Fixtures& fixtures() {
  static const Fixtures fx = load_fixtures(default_fixture_dir());
  return fx;
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("the bundled social app loads with its node types") {
  const AppDefinition& d = fixtures().apps.at(kDiaspora);
  std::set<std::string> names;
  for (const auto& t : d.dag.node_types) names.insert(t.type_name);
  CHECK(names == std::set<std::string>{"person", "post", "comment", "like", "conversation",
                                       "message", "photo", "notification"});
  CHECK(d.dag.root_type == "person");
}

TEST_CASE("unversioned and unparsable documents are rejected") {
  CHECK_THROWS_AS(SpecDocument::parse(R"({"app": "x"})"), SpecError);
  CHECK_THROWS_AS(SpecDocument::parse(R"({"version": 99, "app": "x"})"), SpecError);
  CHECK_THROWS_AS(SpecDocument::parse("{not json"), SpecError);
}

TEST_CASE("a self-dependent node type is a cycle") {
  json dag = json::parse(kForumDag);
  dag["nodes"][2]["depends_on"] = json::array(
      {{{"attr", "comments.post_id"}, {"parent", "comment"}, {"parent_attr", "comments.id"}}});
  AppSchema schema = load_schema(SpecDocument::parse(kForumSchema));
  CHECK_THROWS_AS(load_dag_spec(SpecDocument::wrap(dag), schema), CycleError);
}

TEST_CASE("an unknown table is named in the diagnostic") {
  json dag = json::parse(kForumDag);
  dag["nodes"][1]["tables"] = json::array({"postz"});
  AppSchema schema = load_schema(SpecDocument::parse(kForumSchema));
  std::string msg = error_of([&] { load_dag_spec(SpecDocument::wrap(dag), schema); });
  CHECK(msg.find("postz") != std::string::npos);
  CHECK_THROWS_AS(load_dag_spec(SpecDocument::wrap(dag), schema), SpecError);
}

TEST_CASE("a missing root is reported as such") {
  json dag = json::parse(kForumDag);
  dag["root"] = "nobody";
  AppSchema schema = load_schema(SpecDocument::parse(kForumSchema));
  CHECK_THROWS_AS(load_dag_spec(SpecDocument::wrap(dag), schema), RootMissing);
}

TEST_CASE("mapping entries: copy and newID accepted, unknown transforms and duplicates rejected") {
  const AppDefinition forum = load_app(kForumSchema, kForumDag);
  const AppDefinition micro = load_app(kMicroSchema, kMicroDag);
  json m = json::parse(kForumToMicro);
  SchemaMapping sm = load_mapping(SpecDocument::wrap(m), forum, micro);
  const NodeMap* post = sm.for_source("post");
  REQUIRE(post != nullptr);
  const AttributeMap* body = post->to_attr({"statuses", "body"});
  REQUIRE(body != nullptr);
  CHECK(body->from == AttrRef{"posts", "text"});
  CHECK(chain_str(body->chain) == "copy");
  CHECK(post->to_attr({"statuses", "id"})->chain == TransformChain{{TransformKind::kNewId, ""}});

  json bad = m;
  bad["node_maps"][1]["attributes"][3]["transform"] = "frobnicate";
  std::string msg = error_of([&] { load_mapping(SpecDocument::wrap(bad), forum, micro); });
  CHECK(msg.find("frobnicate") != std::string::npos);

  json dup = m;
  dup["node_maps"][1]["attributes"].push_back(
      {{"from", "posts.lang"}, {"to", "statuses.body"}, {"transform", "copy"}});
  CHECK_THROWS(load_mapping(SpecDocument::wrap(dup), forum, micro));

  json missing = m;
  missing["node_maps"][1]["attributes"][3]["from"] = "posts.title";
  CHECK_THROWS(load_mapping(SpecDocument::wrap(missing), forum, micro));
}

TEST_CASE("every fixture round-trips through save and load") {
  for (const auto& [app, def] : fixtures().apps) {
    CAPTURE(app);
    SpecDocument s = save_schema(def.schema);
    AppSchema schema = load_schema(SpecDocument::parse(s.dump()));
    CHECK(schema == def.schema);
    SpecDocument d = save_dag_spec(def.dag, def.schema);
    DagSpec dag = load_dag_spec(SpecDocument::parse(d.dump()), schema);
    CHECK(dag == def.dag);
    CHECK(save_dag_spec(dag, schema).dump() == d.dump());
  }
  for (const auto& m : fixtures().catalog.all()) {
    CAPTURE(m.from_app + "->" + m.to_app);
    SpecDocument doc = save_mapping(m);
    SchemaMapping back =
        load_mapping(SpecDocument::parse(doc.dump()), fixtures().apps.at(m.from_app),
                     fixtures().apps.at(m.to_app));
    CHECK(back == m);
    CHECK(doc.content.contains("derivation") == !m.direct());
  }
}

TEST_CASE("display rules survive a round trip") {
  AppDefinition def = load_app(kMicroSchema, kMicroDag);
  DagSpec dag = load_dag_spec(SpecDocument::parse(save_dag_spec(def.dag, def.schema).dump()),
                              def.schema);
  const DisplayRule& r = dag.type("status")->display_rule;
  CHECK(r.requires_owner_root);
  CHECK(r.requires_sharer_root);
  CHECK_FALSE(dag.type("account")->display_rule.requires_parents_displayed);
}

TEST_CASE("a node type without tables is rejected before saving") {
  AppDefinition def = load_app(kForumSchema, kForumDag);
  def.dag.node_types[1].member_tables.clear();
  CHECK_THROWS(save_dag_spec(def.dag, def.schema));
}

TEST_CASE("property: random specs round-trip") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    AppDefinition def = random_dag(rng, 2 + int(rng() % 7));
    for (auto& t : def.dag.node_types) {
      if (t.type_name == "t0") continue;
      t.display_rule.requires_parents_displayed = rng() % 2;
      t.display_rule.requires_sharer_root = rng() % 2;
      if (!t.depends_on.empty() && rng() % 2) {
        t.display_rule.exceptions = {t.depends_on.front().parent_type};
      }
    }
    AppSchema schema = load_schema(SpecDocument::parse(save_schema(def.schema).dump()));
    CHECK(schema == def.schema);
    DagSpec dag = load_dag_spec(SpecDocument::parse(save_dag_spec(def.dag, schema).dump()), schema);
    CHECK(dag == def.dag);
  }
}

TEST_CASE("property: malformed documents yield diagnostics, never crashes") {
  // Random structural damage to a valid spec: every outcome is either a valid
  // DagSpec or one of the documented exceptions.
  const json base = json::parse(kForumDag);
  const AppSchema schema = load_schema(SpecDocument::parse(kForumSchema));
  const std::vector<json> junk{nullptr, 7, "x", json::array(), json::object(), "posts.nope",
                               json::array({1, 2}), true};
  std::mt19937_64 rng(23);
  int rejected = 0;
  for (int trial = 0; trial < 500; ++trial) {
    json doc = base;
    std::vector<json::json_pointer> paths;
    std::function<void(const json&, const json::json_pointer&)> walk =
        [&](const json& j, const json::json_pointer& p) {
          paths.push_back(p);
          if (j.is_object()) {
            for (auto it = j.begin(); it != j.end(); ++it) walk(it.value(), p / it.key());
          } else if (j.is_array()) {
            for (std::size_t i = 0; i < j.size(); ++i) walk(j[i], p / i);
          }
        };
    walk(doc, json::json_pointer());
    const auto& path = paths[1 + rng() % (paths.size() - 1)];
    if (rng() % 3 == 0) {
      json& parent = doc[path.parent_pointer()];
      if (parent.is_object()) parent.erase(path.back());
      else doc[path] = junk[rng() % junk.size()];
    } else {
      doc[path] = junk[rng() % junk.size()];
    }
    try {
      load_dag_spec(SpecDocument::wrap(doc), schema);
    } catch (const SpecError&) {
      ++rejected;
    } catch (const ModelError&) {
      ++rejected;
    }
  }
  CHECK(rejected > 250);
}

TEST_CASE("directory loaders read every fixture") {
  auto apps = load_app_directory(default_fixture_dir());
  CHECK(apps.size() == 4);
  auto maps = load_mapping_directory(default_fixture_dir() / "mappings", apps);
  CHECK(maps.size() == fixtures().direct.size());
}
