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

using namespace xmig;
using namespace xmig::testing;

namespace {

const NodeMap& node_map(const Scenario& s, const std::string& type) {
  return *s.catalog.find("forum", "micro")->for_source(type);
}

Materialized push(const Scenario& s, const NodeId& id, const std::string& key) {
  return materialize(node_map(s, id.type), *s.src.node(id), s.micro, [key] { return key; });
}

}  // namespace

TEST_CASE("edges leaving a type") {
  Scenario s;
  auto edges = ref_edges(s.forum.dag, "post");
  REQUIRE(edges.size() == 2);
  CHECK(edges[0].attr == AttrRef{"posts", "author_id"});
  CHECK(edges[0].target_type == "person");
  CHECK(edges[1].attr == AttrRef{"posts", "sharer_id"});
  CHECK(ref_edges(s.forum.dag, "person").empty());
}

TEST_CASE("a reference follows its referent's new identity") {
  Scenario s;
  const Tracker& tr = s.engine.tracker();
  s.dst.insert(make_node("micro", "status", "statuses",
                         {{"id", "12"}, {"account_id", ""}, {"mention_id", ""}, {"body", "x"}}));
  s.meta.attributes.record(
      {{"m1", "forum", "micro", s.post1, {"micro", "status", "12"}, {"posts", "id"}, "2", "12"}});
  s.meta.references.record(tr.reference_rows(*s.src.node(s.comment1), s.src, "m1"));

  Materialized m = push(s, s.comment1, "30");
  CHECK(m.node.get({"notes", "status_id"}) == "2");
  auto changes = tr.relink(m.node, s.dst, m.provenance, s.comment1, {}, "m1");
  CHECK(m.node.get({"notes", "status_id"}) == "12");
  // The author has no account at the destination yet.
  CHECK(m.node.get({"notes", "account_id"}) == make_placeholder(s.alice));
  REQUIRE(changes.size() == 2);
  for (const auto& c : changes) {
    if (c.attr == AttrRef{"notes", "account_id"}) {
      REQUIRE(c.placeholder.has_value());
      CHECK(c.placeholder->original == s.alice);
    }
  }
}

TEST_CASE("a reference to data left behind becomes a placeholder") {
  Scenario s;
  const Tracker& tr = s.engine.tracker();
  s.meta.references.record(tr.reference_rows(*s.src.node(s.comment1), s.src, "m1"));
  Materialized m = push(s, s.comment1, "30");
  tr.relink(m.node, s.dst, m.provenance, s.comment1, {}, "m1");
  Value v = m.node.get({"notes", "status_id"});
  REQUIRE(is_placeholder(v));
  CHECK(placeholder_target(v) == s.post1);
}

TEST_CASE("forced attributes always become placeholders") {
  Scenario s;
  const Tracker& tr = s.engine.tracker();
  s.dst.insert(make_node("micro", "status", "statuses",
                         {{"id", "12"}, {"account_id", ""}, {"mention_id", ""}, {"body", "x"}}));
  s.meta.attributes.record(
      {{"m1", "forum", "micro", s.post1, {"micro", "status", "12"}, {"posts", "id"}, "2", "12"}});
  s.meta.references.record(tr.reference_rows(*s.src.node(s.comment1), s.src, "m1"));
  Materialized m = push(s, s.comment1, "30");
  tr.relink(m.node, s.dst, m.provenance, s.comment1, {{"notes", "status_id"}}, "m1");
  CHECK(is_placeholder(m.node.get({"notes", "status_id"})));
}

TEST_CASE("a node without references is left alone") {
  Scenario s;
  Materialized m = push(s, s.alice, "40");
  DataNode before = m.node;
  CHECK(s.engine.tracker().relink(m.node, s.dst, m.provenance, s.alice, {}, "m1").empty());
  CHECK(m.node == before);
}

TEST_CASE("placeholders resolve when the absent owner joins") {
  Scenario s;
  REQUIRE(s.migrate_alice().outcome == Outcome::kCommitted);
  const Tracker& tr = s.engine.tracker();
  auto status = s.dst.ids("status");
  REQUIRE(status.size() == 1);
  CHECK(s.dst.node(status[0])->get({"statuses", "account_id"}) == make_placeholder(s.bob));
  CHECK(s.meta.placeholders.targeting("micro", s.bob).size() == 1);

  MigrationRequest req;
  req.user_root = s.bob;
  req.dst = "micro";
  REQUIRE(s.engine.migrate(req).outcome == Outcome::kCommitted);
  auto bob_now = tr.lookup_current(s.bob, "micro");
  REQUIRE(bob_now.has_value());
  CHECK(s.dst.node(status[0])->get({"statuses", "account_id"}) == bob_now->key);
  CHECK(s.meta.placeholders.targeting("micro", s.bob).empty());

  // Nothing left to do the second time.
  auto snap = s.dst.snapshot();
  CHECK(tr.resolve_on_arrival(*bob_now, s.dst).empty());
  CHECK(s.dst.snapshot() == snap);
}

TEST_CASE("an arrival nobody waits for resolves nothing") {
  Scenario s;
  s.dst.insert(make_node("micro", "account", "accounts", {{"id", "77"}, {"name", "Zed"}}));
  CHECK(s.engine.tracker().resolve_on_arrival({"micro", "account", "77"}, s.dst).empty());
}

TEST_CASE("original owners are remembered across migration") {
  Scenario s;
  REQUIRE(s.migrate_alice().outcome == Outcome::kCommitted);
  const Tracker& tr = s.engine.tracker();
  auto status = tr.lookup_current(s.post1, "micro");
  auto note = tr.lookup_current(s.comment1, "micro");
  REQUIRE(status.has_value());
  REQUIRE(note.has_value());
  CHECK(tr.ownership_of_migrated(*status) == s.bob.str());
  CHECK(tr.ownership_of_migrated(*note) == s.alice.str());
  s.dst.insert(make_node("micro", "account", "accounts", {{"id", "77"}, {"name", "Zed"}}));
  CHECK_THROWS_AS(tr.ownership_of_migrated({"micro", "account", "77"}), NotTracked);
}

TEST_CASE("lineage runs back to the origin") {
  Scenario s;
  REQUIRE(s.migrate_alice().outcome == Outcome::kCommitted);
  const Tracker& tr = s.engine.tracker();
  auto root = tr.lookup_current(s.alice, "micro");
  REQUIRE(root.has_value());
  CHECK(tr.lineage_back(*root) == std::vector<NodeId>{*root, s.alice});
  CHECK(tr.origin_of(*root) == s.alice);
  CHECK(tr.canonical(*root) == s.alice.str());
  CHECK(tr.origin_of(s.bob) == s.bob);
  CHECK_FALSE(tr.lookup_current(s.comment2, "micro").has_value());
  CHECK(tr.lookup_current(s.bob, "forum") == s.bob);
}

TEST_CASE("referents resolve from key values directly") {
  Scenario s;
  const Tracker& tr = s.engine.tracker();
  CHECK(tr.referent(s.src, "comment", {"comments", "post_id"}, "2") == s.post1);
  CHECK(tr.referent(s.src, "comment", {"comments", "author_id"}, "2") == s.alice);
  CHECK_FALSE(tr.referent(s.src, "comment", {"comments", "post_id"}, "").has_value());
}

TEST_CASE("property: no visible node keeps a raw reference to a missing row") {
  // After every user of the scenario moves, each non-placeholder reference at
  // the destination names a live row.
  Scenario s;
  REQUIRE(s.migrate_alice().outcome == Outcome::kCommitted);
  MigrationRequest req;
  req.user_root = s.bob;
  req.dst = "micro";
  REQUIRE(s.engine.migrate(req).outcome == Outcome::kCommitted);
  std::size_t checked = 0;
  for (const auto& n : s.dst.all_nodes()) {
    if (!n.flags.visible()) continue;
    for (const auto& e : ref_edges(s.micro.dag, n.id.type)) {
      const Value& v = n.get(e.attr);
      if (v.empty() || is_placeholder(v)) continue;
      bool found = false;
      for (const auto& m : s.dst.all_nodes()) {
        found = found || (m.id.type == e.target_type && m.get(e.target_attr) == v);
      }
      CHECK(found);
      ++checked;
    }
  }
  CHECK(checked >= 4);
}
