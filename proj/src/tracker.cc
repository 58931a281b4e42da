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

#include "xmig/tracker.h"

#include <deque>

namespace xmig {

std::vector<RefEdge> ref_edges(const DagSpec& dag, const std::string& type) {
  std::vector<RefEdge> out;
  const NodeTypeSpec* t = dag.type(type);
  if (t == nullptr) return out;
  for (const auto& e : t->depends_on) out.push_back({e.attr, e.parent_type, e.parent_attr});
  for (const auto& e : t->owned_by) out.push_back({e.attr, dag.root_type, e.root_attr});
  for (const auto& e : t->shared_with) out.push_back({e.attr, dag.root_type, e.root_attr});
  return out;
}

namespace {

bool is_key(const AppDefinition& def, const std::string& type, const AttrRef& attr) {
  const NodeTypeSpec* t = def.dag.type(type);
  if (t == nullptr || t->primary_table() != attr.table) return false;
  const TableSpec* ts = def.schema.table(attr.table);
  return ts != nullptr && ts->key == attr.attr;
}

}  // namespace

AppStore* Tracker::store(const AppId& app) const {
  auto it = stores_.find(app);
  return it == stores_.end() ? nullptr : it->second;
}

std::vector<NodeId> Tracker::lineage_back(const NodeId& id) const {
  std::vector<NodeId> out{id};
  std::set<NodeId> seen{id};
  while (auto prev = meta_.attributes.lookup_old_identity(out.back())) {
    if (!seen.insert(*prev).second) break;
    out.push_back(*prev);
  }
  return out;
}

std::optional<NodeId> Tracker::lookup_current(const NodeId& identity, const AppId& app,
                                              const PendingNodes* pending) const {
  const AppStore* s = store(app);
  std::deque<NodeId> work{identity};
  std::set<NodeId> seen{identity};
  while (!work.empty()) {
    NodeId x = std::move(work.front());
    work.pop_front();
    if (x.app == app) {
      if (pending != nullptr && pending->contains(x)) return x;
      if (s != nullptr && s->contains(x)) return x;
    }
    for (auto& n : meta_.attributes.successors(x)) {
      if (seen.insert(n).second) work.push_back(std::move(n));
    }
  }
  return std::nullopt;
}

std::optional<NodeId> Tracker::referent(const AppStore& store, const std::string& type,
                                        const AttrRef& attr, const Value& v) const {
  if (v.empty()) return std::nullopt;
  if (is_placeholder(v)) return placeholder_target(v);
  for (const auto& e : ref_edges(store.dag(), type)) {
    if (e.attr != attr) continue;
    if (is_key(store.definition(), e.target_type, e.target_attr)) {
      return NodeId{store.app_id(), e.target_type, v};
    }
    return store.find(e.target_type, e.target_attr, v);
  }
  return std::nullopt;
}

std::vector<ReferenceRow> Tracker::reference_rows(const DataNode& n, const AppStore& src,
                                                  const std::string& migration_id) const {
  std::vector<ReferenceRow> out;
  for (const auto& e : ref_edges(src.dag(), n.id.type)) {
    auto to = referent(src, n.id.type, e.attr, n.get(e.attr));
    if (!to) continue;
    out.push_back({migration_id, src.app_id(), n.id, e.attr, *to, e.target_attr});
  }
  return out;
}

std::vector<Tracker::Relinked> Tracker::relink(DataNode& node, const AppStore& dst,
                                               const std::map<AttrRef, AttrRef>& provenance,
                                               const NodeId& source_id,
                                               const std::set<AttrRef>& forced,
                                               const std::string& migration_id,
                                               const PendingNodes* pending) const {
  std::vector<Relinked> out;
  for (const auto& e : ref_edges(dst.dag(), node.id.type)) {
    const Value cur = node.get(e.attr);
    if (cur.empty()) continue;
    auto prov = provenance.find(e.attr);
    if (prov == provenance.end()) continue;
    auto ref = meta_.references.lookup(source_id, prov->second);
    if (!ref) continue;
    const NodeId& target = ref->to_node;

    Value next;
    if (!forced.contains(e.attr)) {
      if (auto live = lookup_current(target, dst.app_id(), pending);
          live && live->type == e.target_type) {
        if (is_key(dst.definition(), live->type, e.target_attr)) {
          next = live->key;
        } else if (pending != nullptr && pending->contains(*live)) {
          next = pending->at(*live)->get(e.target_attr);
        } else if (auto n = dst.node(*live)) {
          next = n->get(e.target_attr);
        }
      }
    }
    std::optional<PlaceholderRow> row;
    if (next.empty()) {
      next = make_placeholder(target);
      const AppStore* origin = store(target.app);
      bool user = origin != nullptr ? origin->dag().root_type == target.type
                                    : target.type == dst.dag().root_type;
      row = PlaceholderRow{migration_id, dst.app_id(), node.id, e.attr, target,
                           user ? PlaceholderKind::kAbsentUser : PlaceholderKind::kRemoteData};
    }
    if (next != cur || row) {
      node.set(e.attr, next);
      out.push_back({e.attr, cur, next, row});
    }
  }
  return out;
}

std::vector<Tracker::Resolution> Tracker::pending_resolutions(const NodeId& arrived,
                                                              const AppStore& dst,
                                                              const PendingNodes* pending) const {
  std::vector<Resolution> out;
  std::optional<DataNode> arrived_node;
  auto arrived_value = [&](const AttrRef& attr) -> Value {
    if (is_key(dst.definition(), arrived.type, attr)) return arrived.key;
    if (pending != nullptr && pending->contains(arrived)) return pending->at(arrived)->get(attr);
    if (!arrived_node) arrived_node = dst.node(arrived);
    return arrived_node ? arrived_node->get(attr) : Value{};
  };
  for (const auto& original : lineage_back(arrived)) {
    for (const auto& row : meta_.placeholders.targeting(dst.app_id(), original)) {
      if (!dst.contains(row.node)) continue;
      for (const auto& e : ref_edges(dst.dag(), row.node.type)) {
        if (e.attr != row.attr || e.target_type != arrived.type) continue;
        Value v = arrived_value(e.target_attr);
        if (v.empty()) continue;
        out.push_back({row.node, row.attr, make_placeholder(row.original), v, row});
      }
    }
  }
  return out;
}

void Tracker::apply(const Resolution& r, AppStore& dst) const {
  if (dst.contains(r.node)) dst.set_attr(r.node, r.attr, r.new_value);
  meta_.placeholders.erase(dst.app_id(), r.node, r.attr);
}

std::vector<Tracker::Resolution> Tracker::resolve_on_arrival(const NodeId& arrived,
                                                             AppStore& dst) const {
  auto res = pending_resolutions(arrived, dst);
  for (const auto& r : res) apply(r, dst);
  return res;
}

UserId Tracker::ownership_of_migrated(const NodeId& node) const {
  auto back = lineage_back(node);
  if (back.size() == 1) throw NotTracked(node.str() + " has no recorded migration");
  const NodeId& origin = back.back();
  const AppStore* s = store(origin.app);
  if (s == nullptr) throw NotTracked(origin.str() + ": unknown origin application");
  const DagSpec& dag = s->dag();
  if (origin.type == dag.root_type) return canonical(origin);
  const NodeTypeSpec* t = dag.type(origin.type);
  if (t == nullptr || t->owned_by.empty()) throw NotTracked(origin.str() + ": no ownership edge");
  auto ref = meta_.references.lookup(origin, t->owned_by.front().attr);
  if (!ref) throw NotTracked(origin.str() + ": owner reference not recorded");
  return canonical(ref->to_node);
}

}  // namespace xmig
