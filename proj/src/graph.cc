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

#include "xmig/graph.h"

#include <algorithm>
#include <functional>

namespace xmig {

namespace {

void sort_unique(std::vector<NodeId>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

}  // namespace

std::vector<NodeId> dependency_parents(const InstanceView& view, const DataNode& node) {
  std::vector<NodeId> out;
  const NodeTypeSpec* t = view.dag().type(node.id.type);
  if (t == nullptr) return out;
  for (const auto& e : t->depends_on) {
    const Value& v = node.get(e.attr);
    if (v.empty() || is_placeholder(v)) continue;
    if (auto p = view.find(e.parent_type, e.parent_attr, v)) out.push_back(*p);
  }
  sort_unique(out);
  return out;
}

std::vector<NodeId> dependency_children(const InstanceView& view, const DataNode& node) {
  std::vector<NodeId> out;
  const DagSpec& dag = view.dag();
  for (const auto& t : dag.node_types) {
    for (const auto& e : t.depends_on) {
      if (e.parent_type != node.id.type) continue;
      const Value& v = node.get(e.parent_attr);
      if (v.empty()) continue;
      auto found = view.find_all(t.type_name, e.attr, v);
      out.insert(out.end(), found.begin(), found.end());
    }
  }
  sort_unique(out);
  return out;
}

std::vector<NodeId> root_children(const InstanceView& view, const DataNode& node) {
  std::vector<NodeId> out;
  const DagSpec& dag = view.dag();
  if (node.id.type != dag.root_type) return out;
  for (const auto& t : dag.node_types) {
    auto scan = [&](const std::vector<RootEdge>& edges) {
      for (const auto& e : edges) {
        const Value& v = node.get(e.root_attr);
        if (v.empty()) continue;
        auto found = view.find_all(t.type_name, e.attr, v);
        out.insert(out.end(), found.begin(), found.end());
      }
    };
    scan(t.owned_by);
    scan(t.shared_with);
  }
  std::erase(out, node.id);
  sort_unique(out);
  return out;
}

std::vector<NodeId> traversal_children(const InstanceView& view, const DataNode& node) {
  std::vector<NodeId> out = dependency_children(view, node);
  auto r = root_children(view, node);
  out.insert(out.end(), r.begin(), r.end());
  sort_unique(out);
  return out;
}

std::vector<OrderStep> deletion_order(const InstanceView& view, const NodeId& root,
                                      const std::set<NodeId>& user_nodes) {
  enum class Mark { kActive, kDone };
  std::map<NodeId, Mark> mark;
  std::vector<OrderStep> out;
  out.push_back({root, StepKind::kCopyRoot});

  struct Frame {
    NodeId id;
    std::vector<NodeId> children;
    std::size_t next = 0;
  };

  // Children of the same parent are visited by type depth first, so a
  // user's posts are reached (with their subtrees) before the comments they
  // left elsewhere.
  std::map<std::string, int> depth;
  std::function<int(const std::string&)> depth_of = [&](const std::string& type) {
    auto it = depth.find(type);
    if (it != depth.end()) return it->second;
    depth[type] = 0;
    int d = 0;
    if (const NodeTypeSpec* t = view.dag().type(type)) {
      for (const auto& e : t->depends_on) d = std::max(d, depth_of(e.parent_type) + 1);
    }
    return depth[type] = d;
  };
  auto children_of = [&](const DataNode& n) {
    auto c = traversal_children(view, n);
    std::stable_sort(c.begin(), c.end(), [&](const NodeId& a, const NodeId& b) {
      return depth_of(a.type) < depth_of(b.type);
    });
    return c;
  };

  auto dfs = [&](const NodeId& start) {
    auto start_node = view.node(start);
    if (!start_node || mark.contains(start)) return;
    std::vector<Frame> stack;
    mark[start] = Mark::kActive;
    stack.push_back({start, children_of(*start_node)});
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next < f.children.size()) {
        NodeId c = f.children[f.next++];
        auto m = mark.find(c);
        if (m != mark.end()) {
          if (m->second == Mark::kActive) {
            std::vector<std::string> cycle;
            auto it = std::find_if(stack.begin(), stack.end(),
                                   [&](const Frame& fr) { return fr.id == c; });
            for (; it != stack.end(); ++it) cycle.push_back(it->id.str());
            cycle.push_back(c.str());
            std::string path;
            for (const auto& s : cycle) path += (path.empty() ? "" : " -> ") + s;
            throw CycleError("instance cycle " + path, cycle);
          }
          continue;
        }
        auto cn = view.node(c);
        if (!cn) continue;
        mark[c] = Mark::kActive;
        stack.push_back({c, children_of(*cn)});
        continue;
      }
      NodeId done = f.id;
      stack.pop_back();
      mark[done] = Mark::kDone;
      if (done != root && user_nodes.contains(done)) out.push_back({done, StepKind::kMigrate});
    }
  };

  dfs(root);
  for (const auto& n : user_nodes) {
    if (n != root && !mark.contains(n)) dfs(n);
  }
  out.push_back({root, StepKind::kDeleteRoot});
  return out;
}

std::vector<NodeId> sole_dependents(const InstanceView& view, const NodeId& target) {
  auto target_node = view.node(target);
  if (!target_node) return {};
  std::set<NodeId> removed{target};
  std::vector<DataNode> work{*target_node};
  while (!work.empty()) {
    DataNode n = std::move(work.back());
    work.pop_back();
    for (const auto& c : dependency_children(view, n)) {
      if (removed.contains(c)) continue;
      auto cn = view.node(c);
      if (!cn) continue;
      auto parents = dependency_parents(view, *cn);
      bool sole = std::all_of(parents.begin(), parents.end(),
                              [&](const NodeId& p) { return removed.contains(p); });
      if (sole) {
        removed.insert(c);
        work.push_back(std::move(*cn));
      }
    }
  }
  removed.erase(target);

  // children-first order within the closure
  std::vector<NodeId> out;
  std::set<NodeId> seen;
  std::function<void(const NodeId&)> visit = [&](const NodeId& id) {
    if (!seen.insert(id).second) return;
    auto n = view.node(id);
    if (!n) return;
    for (const auto& c : dependency_children(view, *n)) {
      if (removed.contains(c)) visit(c);
    }
    if (id != target) out.push_back(id);
  };
  visit(target);
  for (const auto& id : removed) visit(id);
  return out;
}

NodeId resolve_owner(const InstanceView& view, const DataNode& node) {
  const DagSpec& dag = view.dag();
  if (node.id.type == dag.root_type) return node.id;
  const NodeTypeSpec* t = dag.type(node.id.type);
  if (t == nullptr || t->owned_by.empty()) {
    throw OwnerUnresolvable(node.id.str() + ": node type has no ownership edge");
  }
  const RootEdge& e = t->owned_by.front();
  const Value& v = node.get(e.attr);
  if (v.empty()) throw OwnerUnresolvable(node.id.str() + ": ownership attribute is null");
  if (is_placeholder(v)) {
    throw OwnerUnresolvable(node.id.str() + ": owner lives elsewhere (" +
                            placeholder_target(v).str() + ")");
  }
  auto root = view.find(dag.root_type, e.root_attr, v);
  if (!root) throw OwnerUnresolvable(node.id.str() + ": owner '" + v + "' does not exist");
  return *root;
}

std::set<NodeId> reachable_from(const InstanceView& view, const NodeId& start) {
  std::set<NodeId> seen;
  std::vector<NodeId> work{start};
  while (!work.empty()) {
    NodeId id = work.back();
    work.pop_back();
    auto n = view.node(id);
    if (!n) continue;
    for (const auto& c : traversal_children(view, *n)) {
      if (c != start && seen.insert(c).second) work.push_back(c);
    }
  }
  return seen;
}

void NodeSet::add(DataNode n) {
  NodeId id = n.id;
  nodes_[id] = std::move(n);
}

void NodeSet::remove(const NodeId& id) { nodes_.erase(id); }

std::optional<DataNode> NodeSet::node(const NodeId& id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) return std::nullopt;
  return it->second;
}

std::optional<NodeId> NodeSet::find(const std::string& type, const AttrRef& attr,
                                    const Value& value) const {
  for (const auto& [id, n] : nodes_) {
    if (id.type == type && n.get(attr) == value) return id;
  }
  return std::nullopt;
}

std::vector<NodeId> NodeSet::find_all(const std::string& type, const AttrRef& attr,
                                      const Value& value) const {
  std::vector<NodeId> out;
  for (const auto& [id, n] : nodes_) {
    if (id.type == type && n.get(attr) == value) out.push_back(id);
  }
  return out;
}

}  // namespace xmig
