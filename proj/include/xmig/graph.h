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

// Graph operations over one application's live instance DAG.

#ifndef XMIG_GRAPH_H_
#define XMIG_GRAPH_H_

#include <map>
#include <optional>
#include <set>
#include <vector>

#include "xmig/model.h"

namespace xmig {

/// Read access to the live nodes of one application. Implemented over an
/// AppStore and over an in-memory NodeSet.
class InstanceView {
 public:
  virtual ~InstanceView() = default;

  virtual const DagSpec& dag() const = 0;
  virtual std::optional<DataNode> node(const NodeId& id) const = 0;
  /// Live node of `type` whose `attr` equals `value`.
  virtual std::optional<NodeId> find(const std::string& type, const AttrRef& attr,
                                     const Value& value) const = 0;
  /// Live nodes of `type` whose `attr` equals `value`.
  virtual std::vector<NodeId> find_all(const std::string& type, const AttrRef& attr,
                                       const Value& value) const = 0;
};

/// Live parents reached through dependency edges. Null and placeholder
/// references, and references to missing rows, contribute nothing.
std::vector<NodeId> dependency_parents(const InstanceView& view, const DataNode& node);

/// Live nodes holding a dependency edge to `id`.
std::vector<NodeId> dependency_children(const InstanceView& view, const DataNode& node);

/// For a root: live nodes owned by it or shared with it. Empty otherwise.
std::vector<NodeId> root_children(const InstanceView& view, const DataNode& node);

/// Traversal successors: dependency children plus, for roots, root children.
/// Sorted ascending, deduplicated.
std::vector<NodeId> traversal_children(const InstanceView& view, const DataNode& node);

enum class StepKind { kCopyRoot, kMigrate, kDeleteRoot };

struct OrderStep {
  NodeId id;
  StepKind kind;
  friend bool operator==(const OrderStep&, const OrderStep&) = default;
};

/// Source-side migration order. The root is copied first and deleted last;
/// every other member of `user_nodes` appears after all members depending on
/// it. Members are emitted in DFS post-order from the root; siblings are
/// visited by dependency depth of their type, then in ascending id order.
/// Throws CycleError naming the cycle.
std::vector<OrderStep> deletion_order(const InstanceView& view, const NodeId& root,
                                      const std::set<NodeId>& user_nodes);

/// Nodes that become dangling when `target` is removed: transitively, every
/// live node whose remaining live dependency parents all lie in the removed
/// set. `target` itself is excluded. Returned children-first, ready to bag.
std::vector<NodeId> sole_dependents(const InstanceView& view, const NodeId& target);

/// Owning root of `node`; the root itself for roots. Throws
/// OwnerUnresolvable for null, placeholder or dangling ownership values.
NodeId resolve_owner(const InstanceView& view, const DataNode& node);

/// Every node reachable from `start` through traversal_children, excluding
/// `start`.
std::set<NodeId> reachable_from(const InstanceView& view, const NodeId& start);

/// In-memory instance: a fixed set of nodes over one DAG.
class NodeSet final : public InstanceView {
 public:
  explicit NodeSet(DagSpec dag) : dag_(std::move(dag)) {}

  void add(DataNode n);
  void remove(const NodeId& id);
  bool contains(const NodeId& id) const { return nodes_.contains(id); }
  const std::map<NodeId, DataNode>& nodes() const { return nodes_; }

  const DagSpec& dag() const override { return dag_; }
  std::optional<DataNode> node(const NodeId& id) const override;
  std::optional<NodeId> find(const std::string& type, const AttrRef& attr,
                             const Value& value) const override;
  std::vector<NodeId> find_all(const std::string& type, const AttrRef& attr,
                               const Value& value) const override;

 private:
  DagSpec dag_;
  std::map<NodeId, DataNode> nodes_;
};

}  // namespace xmig

#endif  // XMIG_GRAPH_H_
