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

using namespace xmig;
using namespace xmig::testing;

TEST_CASE("node ids parse, print and order naturally") {
  NodeId id = NodeId::parse("forum/post/12");
  CHECK(id == NodeId{"forum", "post", "12"});
  CHECK(id.str() == "forum/post/12");
  CHECK(NodeId{"a", "t", "9"} < NodeId{"a", "t", "10"});
  CHECK(NodeId{"a", "t", "b"} < NodeId{"a", "t", "c"});
  CHECK(natural_compare("007", "7") != std::strong_ordering::less);
  CHECK_THROWS_AS(NodeId::parse("nope"), ModelError);
}

TEST_CASE("placeholders carry their target and never collide with text") {
  NodeId target{"forum", "person", "1"};
  Value v = make_placeholder(target);
  CHECK(is_placeholder(v));
  CHECK(placeholder_target(v) == target);
  CHECK_FALSE(is_placeholder("ph:forum/person/1"));
  CHECK_FALSE(is_placeholder(""));
}

TEST_CASE("migration types round-trip through strings") {
  for (auto t : {MigrationType::kDeletion, MigrationType::kIndependent}) {
    CHECK(migration_type_from_string(to_string(t)) == t);
  }
  CHECK_THROWS(migration_type_from_string("sideways"));
}

TEST_CASE("grants cover concrete nodes and typed predicates") {
  DataNode post = make_node("forum", "post", "posts", {{"id", "2"}, {"lang", "en"}});
  SharingGrant g;
  g.node = post.id;
  CHECK(g.covers(post));
  g.node.reset();
  g.node_type = "post";
  CHECK(g.covers(post));
  g.predicate = "posts.lang=en";
  CHECK(g.covers(post));
  g.predicate = "posts.lang=fr";
  CHECK_FALSE(g.covers(post));
  g.node_type = "comment";
  g.predicate.clear();
  CHECK_FALSE(g.covers(post));
}

TEST_CASE("flags: only displayable, unflagged nodes are visible") {
  CHECK(Flags{}.visible());
  CHECK_FALSE((Flags{false, true, true}).visible());
  CHECK_FALSE((Flags{false, false, false}).visible());
}

// ---------------------------------------------------------------- dag checks

bool has_type_cycle(const std::vector<std::vector<int>>& edges) {
  const std::size_t n = edges.size();
  std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
  for (std::size_t i = 0; i < n; ++i) {
    for (int j : edges[i]) reach[i][j] = true;
  }
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) reach[i][j] = reach[i][j] || (reach[i][k] && reach[k][j]);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (reach[i][i]) return true;
  }
  return false;
}

TEST_CASE("property: a dependency graph is rejected exactly when its edges cycle") {
  std::mt19937_64 rng(11);
  int cyclic = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const int types = 2 + int(rng() % 6);
    std::vector<std::vector<int>> edges(types);
    for (int i = 1; i < types; ++i) {
      std::set<int> ps;
      int k = int(rng() % 3);
      for (int e = 0; e < k; ++e) ps.insert(1 + int(rng() % (types - 1)));
      edges[i].assign(ps.begin(), ps.end());
    }
    AppDefinition def = dag_with_edges(edges);
    if (has_type_cycle(edges)) {
      ++cyclic;
      CHECK_THROWS_AS(def.dag.validate(def.schema), CycleError);
    } else {
      CHECK_NOTHROW(def.dag.validate(def.schema));
    }
  }
  CHECK(cyclic > 20);
}

TEST_CASE("cycle errors name the cycle") {
  AppDefinition def = dag_with_edges({{}, {2}, {1}});
  try {
    def.dag.validate(def.schema);
    FAIL("accepted a cycle");
  } catch (const CycleError& e) {
    CHECK(e.cycle().size() >= 2);
  }
}

TEST_CASE("a dependency graph without its root type is rejected") {
  AppDefinition def = dag_with_edges({{}, {}});
  def.dag.root_type = "ghost";
  CHECK_THROWS_AS(def.dag.validate(def.schema), RootMissing);
}

// ---------------------------------------------------------------- order

TEST_CASE("deletion order of the shared-post scenario") {
  Scenario s;
  auto order = deletion_order(s.src, s.alice, {s.alice, s.post1, s.comment1, s.comment3});
  std::vector<OrderStep> expected{{s.alice, StepKind::kCopyRoot},
                                  {s.comment3, StepKind::kMigrate},
                                  {s.comment1, StepKind::kMigrate},
                                  {s.post1, StepKind::kMigrate},
                                  {s.alice, StepKind::kDeleteRoot}};
  CHECK(order == expected);
}

TEST_CASE("deletion order of a lone root") {
  Scenario s;
  AppStore solo(s.forum);
  solo.insert(make_node("forum", "person", "people", {{"id", "5"}, {"name", "Eve"}}));
  NodeId eve{"forum", "person", "5"};
  auto order = deletion_order(solo, eve, {eve});
  std::vector<OrderStep> expected{{eve, StepKind::kCopyRoot}, {eve, StepKind::kDeleteRoot}};
  CHECK(order == expected);
}

TEST_CASE("property: deletion order never puts a parent before its child") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 60; ++trial) {
    AppDefinition def = random_dag(rng, 3 + int(rng() % 5));
    NodeSet set = random_instance(rng, def, 50);
    std::set<NodeId> members;
    for (const auto& [id, n] : set.nodes()) members.insert(id);
    const NodeId root{"rand", "t0", "1"};
    auto order = deletion_order(set, root, members);

    REQUIRE(order.size() == members.size() + 1);
    CHECK(order.front() == OrderStep{root, StepKind::kCopyRoot});
    CHECK(order.back() == OrderStep{root, StepKind::kDeleteRoot});
    std::map<NodeId, std::size_t> pos;
    for (std::size_t i = 1; i + 1 < order.size(); ++i) {
      CHECK(order[i].kind == StepKind::kMigrate);
      CHECK(pos.emplace(order[i].id, i).second);
    }
    CHECK(pos.size() == members.size() - 1);
    for (const auto& [id, n] : set.nodes()) {
      if (id == root) continue;
      for (const auto& p : scan_parents(set, n)) {
        if (p == root) continue;
        CHECK(pos.at(id) < pos.at(p));
      }
    }
    CHECK(deletion_order(set, root, members) == order);
  }
}

// ---------------------------------------------------------------- dependents

TEST_CASE("sole dependents in the shared-post scenario") {
  Scenario s;
  // Once the rereply has moved, removing the comment strands only the reply.
  s.src.erase(s.comment3);
  CHECK(sole_dependents(s.src, s.comment1) == std::vector<NodeId>{s.comment2});
  CHECK(sole_dependents(s.src, s.comment2).empty());
}

TEST_CASE("sole dependents close transitively, children first") {
  Scenario s;
  CHECK(sole_dependents(s.src, s.comment1) == std::vector<NodeId>{s.comment3, s.comment2});
}

/// Fixed point of "every live parent is removed" by exhaustive scan.
std::set<NodeId> brute_sole_dependents(const NodeSet& set, const NodeId& target) {
  std::map<NodeId, std::set<NodeId>> parents;
  for (const auto& [id, n] : set.nodes()) parents[id] = scan_parents(set, n);
  std::set<NodeId> removed{target};
  for (bool changed = true; changed;) {
    changed = false;
    for (const auto& [id, ps] : parents) {
      if (removed.contains(id) || ps.empty()) continue;
      bool touched = false, all = true;
      for (const auto& p : ps) {
        touched = touched || removed.contains(p);
        all = all && removed.contains(p);
      }
      if (touched && all) {
        removed.insert(id);
        changed = true;
      }
    }
  }
  removed.erase(target);
  return removed;
}

TEST_CASE("property: sole dependents match a brute-force fixed point") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    AppDefinition def = random_dag(rng, 3 + int(rng() % 5));
    NodeSet set = random_instance(rng, def, 20 + int(rng() % 180), 0.05);
    std::vector<NodeId> ids;
    for (const auto& [id, n] : set.nodes()) ids.push_back(id);
    for (int pick = 0; pick < 10; ++pick) {
      const NodeId& target = ids[rng() % ids.size()];
      if (target.type == "t0") continue;
      auto got = sole_dependents(set, target);
      std::set<NodeId> got_set(got.begin(), got.end());
      CHECK(got_set.size() == got.size());
      CHECK(got_set == brute_sole_dependents(set, target));

      // Nothing returned keeps a live parent outside the removed set.
      std::set<NodeId> removed = got_set;
      removed.insert(target);
      for (const auto& id : got) {
        for (const auto& p : scan_parents(set, *set.node(id))) CHECK(removed.contains(p));
      }
      // Children precede their parents.
      std::map<NodeId, std::size_t> pos;
      for (std::size_t i = 0; i < got.size(); ++i) pos[got[i]] = i;
      for (const auto& id : got) {
        for (const auto& p : scan_parents(set, *set.node(id))) {
          if (pos.contains(p)) CHECK(pos[id] < pos[p]);
        }
      }
    }
  }
}

TEST_CASE("a leaf has no sole dependents") {
  Scenario s;
  CHECK(sole_dependents(s.src, s.comment3).empty());
}

// ---------------------------------------------------------------- owners

TEST_CASE("owner resolution") {
  Scenario s;
  CHECK(resolve_owner(s.src, *s.src.node(s.comment2)) == s.bob);
  CHECK(resolve_owner(s.src, *s.src.node(s.alice)) == s.alice);
  s.src.erase(s.bob);
  CHECK_THROWS_AS(resolve_owner(s.src, *s.src.node(s.comment2)), OwnerUnresolvable);
  DataNode orphan = *s.src.node(s.comment1);
  orphan.set({"comments", "author_id"}, "");
  CHECK_THROWS_AS(resolve_owner(s.src, orphan), OwnerUnresolvable);
}

TEST_CASE("traversal reaches owned and shared data") {
  Scenario s;
  auto reach = reachable_from(s.src, s.alice);
  CHECK(reach == std::set<NodeId>{s.post1, s.comment1, s.comment2, s.comment3});
  auto kids = root_children(s.src, *s.src.node(s.alice));
  CHECK(std::set<NodeId>(kids.begin(), kids.end()) ==
        std::set<NodeId>{s.post1, s.comment1, s.comment3});
  CHECK(dependency_parents(s.src, *s.src.node(s.comment1)) == std::vector<NodeId>{s.post1});
  CHECK(dependency_children(s.src, *s.src.node(s.post1)) == std::vector<NodeId>{s.comment1});
}
