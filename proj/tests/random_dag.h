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

// Random application definitions and instances for property tests.

#ifndef XMIG_TESTS_RANDOM_DAG_H_
#define XMIG_TESTS_RANDOM_DAG_H_

#include <random>

#include "xmig/graph.h"

namespace xmig::testing {

/// Type i > 0 lives in table "tab<i>" with attributes id, owner and one
/// "p<j>" per dependency edge to an earlier type j. Type 0 is the root.
/// `edges[i]` lists the parents of type i.
inline AppDefinition dag_with_edges(const std::vector<std::vector<int>>& edges) {
  AppDefinition def;
  def.schema.app_id = "rand";
  def.dag.app_id = "rand";
  def.dag.root_type = "t0";
  for (std::size_t i = 0; i < edges.size(); ++i) {
    TableSpec ts;
    ts.name = "tab" + std::to_string(i);
    ts.key = "id";
    ts.attributes = {"id", "owner"};
    NodeTypeSpec t;
    t.type_name = "t" + std::to_string(i);
    t.member_tables = {ts.name};
    if (i == 0) {
      t.display_rule = {false, {}, false, false};
    } else {
      t.owned_by.push_back({{ts.name, "owner"}, {"tab0", "id"}});
      for (int j : edges[i]) {
        std::string a = "p" + std::to_string(j);
        ts.attributes.push_back(a);
        t.depends_on.push_back({{ts.name, a}, "t" + std::to_string(j), {"tab" + std::to_string(j), "id"}});
      }
    }
    def.schema.tables.push_back(ts);
    def.dag.node_types.push_back(t);
  }
  return def;
}

/// Acyclic: every type depends on zero to two earlier non-root types.
inline AppDefinition random_dag(std::mt19937_64& rng, int types) {
  std::vector<std::vector<int>> edges(types);
  for (int i = 2; i < types; ++i) {
    int k = int(rng() % 3);
    std::set<int> ps;
    for (int e = 0; e < k; ++e) ps.insert(1 + int(rng() % (i - 1)));
    edges[i].assign(ps.begin(), ps.end());
  }
  return dag_with_edges(edges);
}

/// One root with key 1 owning `count` nodes. Each dependency value points at
/// a random earlier node of the parent type, or is NULL with probability
/// `null_rate`.
inline NodeSet random_instance(std::mt19937_64& rng, const AppDefinition& def, int count,
                               double null_rate = 0.15) {
  NodeSet set(def.dag);
  DataNode root;
  root.id = {"rand", "t0", "1"};
  root.rows["tab0"] = {{"id", "1"}, {"owner", ""}};
  set.add(root);
  std::map<std::string, std::vector<std::string>> keys;
  std::uniform_real_distribution<double> u(0, 1);
  for (int k = 0; k < count; ++k) {
    int ti = 1 + int(rng() % (def.dag.node_types.size() - 1));
    const NodeTypeSpec& t = def.dag.node_types[ti];
    DataNode n;
    std::string key = std::to_string(100 + k);
    n.id = {"rand", t.type_name, key};
    Row row{{"id", key}, {"owner", "1"}};
    for (const auto& e : t.depends_on) {
      const auto& pool = keys[e.parent_type];
      row[e.attr.attr] = pool.empty() || u(rng) < null_rate ? "" : pool[rng() % pool.size()];
    }
    n.rows[t.primary_table()] = row;
    set.add(n);
    keys[t.type_name].push_back(key);
  }
  return set;
}

/// Parents of `n` by scanning every node: no index, no InstanceView lookup.
inline std::set<NodeId> scan_parents(const NodeSet& set, const DataNode& n) {
  std::set<NodeId> out;
  const NodeTypeSpec* t = set.dag().type(n.id.type);
  for (const auto& e : t->depends_on) {
    const Value& v = n.get(e.attr);
    if (v.empty()) continue;
    for (const auto& [id, m] : set.nodes()) {
      if (id.type == e.parent_type && m.get(e.parent_attr) == v) out.insert(id);
    }
  }
  return out;
}

}  // namespace xmig::testing

#endif  // XMIG_TESTS_RANDOM_DAG_H_
