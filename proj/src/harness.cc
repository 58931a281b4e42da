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

#include "xmig/harness.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "xmig/graph.h"

namespace xmig {

using nlohmann::json;

namespace {

// ---------------------------------------------------------------- own index

// Attribute index over a node map, covering exactly the attributes DAG edges
// start from or point at.
class RefIndex {
 public:
  explicit RefIndex(const DagSpec& dag) {
    for (const auto& t : dag.node_types) {
      for (const auto& e : t.depends_on) {
        attrs_[t.type_name].insert(e.attr);
        attrs_[e.parent_type].insert(e.parent_attr);
      }
      for (const auto* edges : {&t.owned_by, &t.shared_with}) {
        for (const auto& e : *edges) {
          attrs_[t.type_name].insert(e.attr);
          attrs_[dag.root_type].insert(e.root_attr);
        }
      }
    }
  }

  void add(const DataNode& n) { update(n, true); }
  void remove(const DataNode& n) { update(n, false); }

  const std::set<NodeId>* find(const std::string& type, const AttrRef& attr,
                               const Value& v) const {
    auto it = idx_.find({type, attr, v});
    return it == idx_.end() || it->second.empty() ? nullptr : &it->second;
  }

 private:
  void update(const DataNode& n, bool add) {
    auto a = attrs_.find(n.id.type);
    if (a == attrs_.end()) return;
    for (const auto& attr : a->second) {
      const Value& v = n.get(attr);
      if (v.empty()) continue;
      auto key = std::make_tuple(n.id.type, attr, v);
      if (add) {
        idx_[key].insert(n.id);
      } else if (auto it = idx_.find(key); it != idx_.end()) {
        it->second.erase(n.id);
        if (it->second.empty()) idx_.erase(it);
      }
    }
  }

  std::map<std::string, std::set<AttrRef>> attrs_;
  std::map<std::tuple<std::string, AttrRef, Value>, std::set<NodeId>> idx_;
};

enum class Presence { kMissing, kHidden, kVisible };

Presence presence(const RefIndex& idx, const std::map<NodeId, DataNode>& nodes,
                  const std::string& type, const AttrRef& attr, const Value& v) {
  const std::set<NodeId>* hits = idx.find(type, attr, v);
  if (hits == nullptr) return Presence::kMissing;
  for (const auto& id : *hits) {
    auto it = nodes.find(id);
    if (it != nodes.end() && it->second.flags.visible()) return Presence::kVisible;
  }
  return Presence::kHidden;
}

enum class CheckMode {
  // May this node be shown now?
  kDisplay,
  // Is this shown node missing something it depends on?
  kDangling,
};

// Empty when the node passes.
std::string check_node(const DagSpec& dag, const RefIndex& idx,
                       const std::map<NodeId, DataNode>& nodes, const DataNode& n,
                       CheckMode mode) {
  if (n.id.type == dag.root_type) return {};
  const NodeTypeSpec* t = dag.type(n.id.type);
  if (t == nullptr) return "undeclared node type";
  const DisplayRule& rule = t->display_rule;

  for (const auto& e : t->depends_on) {
    const Value& v = n.get(e.attr);
    if (v.empty()) continue;
    bool required = rule.requires_parents_displayed &&
                    std::find(rule.exceptions.begin(), rule.exceptions.end(), e.parent_type) ==
                        rule.exceptions.end();
    if (is_placeholder(v)) {
      if (required) return e.attr.str() + " holds a placeholder";
      continue;
    }
    Presence p = presence(idx, nodes, e.parent_type, e.parent_attr, v);
    if (p == Presence::kMissing && (required || mode == CheckMode::kDangling)) {
      return e.attr.str() + " = " + v + " has no " + e.parent_type;
    }
    if (p == Presence::kHidden && required) {
      return e.attr.str() + " = " + v + " refers to a hidden " + e.parent_type;
    }
  }

  auto any_visible = [&](const std::vector<RootEdge>& edges, bool report_missing,
                         std::string* missing) {
    bool visible = false;
    for (const auto& e : edges) {
      const Value& v = n.get(e.attr);
      if (v.empty() || is_placeholder(v)) continue;
      Presence p = presence(idx, nodes, dag.root_type, e.root_attr, v);
      if (p == Presence::kVisible) visible = true;
      if (p == Presence::kMissing && report_missing && missing->empty()) {
        *missing = e.attr.str() + " = " + v + " has no owner";
      }
    }
    return visible;
  };
  std::string missing;
  bool owner = any_visible(t->owned_by, mode == CheckMode::kDangling, &missing);
  if (!missing.empty()) return missing;
  bool sharer = any_visible(t->shared_with, false, &missing);
  bool ok = true;
  if (rule.requires_owner_root && rule.requires_sharer_root) {
    ok = owner || sharer;
  } else if (rule.requires_owner_root) {
    ok = owner;
  } else if (rule.requires_sharer_root) {
    ok = sharer;
  }
  if (!ok) return "owner or sharer not displayed";
  return {};
}

// Nodes holding a dependency or ownership reference to `n`.
std::vector<NodeId> referrers(const DagSpec& dag, const RefIndex& idx, const DataNode& n) {
  std::vector<NodeId> out;
  for (const auto& t : dag.node_types) {
    for (const auto& e : t.depends_on) {
      if (e.parent_type != n.id.type) continue;
      const Value& v = n.get(e.parent_attr);
      if (v.empty()) continue;
      if (const auto* hits = idx.find(t.type_name, e.attr, v)) {
        out.insert(out.end(), hits->begin(), hits->end());
      }
    }
    if (n.id.type != dag.root_type) continue;
    for (const auto& e : t.owned_by) {
      const Value& v = n.get(e.root_attr);
      if (v.empty()) continue;
      if (const auto* hits = idx.find(t.type_name, e.attr, v)) {
        out.insert(out.end(), hits->begin(), hits->end());
      }
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  out.erase(std::remove(out.begin(), out.end(), n.id), out.end());
  return out;
}

// Owner root of `n` by its first ownership edge; empty if unresolvable.
NodeId owner_root(const DagSpec& dag, const RefIndex& idx, const DataNode& n) {
  if (n.id.type == dag.root_type) return n.id;
  const NodeTypeSpec* t = dag.type(n.id.type);
  if (t == nullptr || t->owned_by.empty()) return {};
  const RootEdge& e = t->owned_by.front();
  const Value& v = n.get(e.attr);
  if (v.empty() || is_placeholder(v)) return {};
  const std::set<NodeId>* hits = idx.find(dag.root_type, e.root_attr, v);
  return hits == nullptr ? NodeId{} : *hits->begin();
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace

// ---------------------------------------------------------------- audit types

std::string to_string(Anomaly a) {
  switch (a) {
    case Anomaly::kDangling: return "dangling";
    case Anomaly::kDataLoss: return "data_loss";
    case Anomaly::kOwnershipViolation: return "ownership_violation";
    case Anomaly::kPrematureDisplay: return "premature_display";
  }
  return "unknown";
}

std::size_t AppAudit::count(Anomaly a) const {
  return static_cast<std::size_t>(std::count_if(
      findings.begin(), findings.end(), [&](const Finding& f) { return f.kind == a; }));
}

double AppAudit::percent(Anomaly a) const {
  std::size_t base = a == Anomaly::kDataLoss ? baseline : total;
  return base == 0 ? 0.0 : 100.0 * double(count(a)) / double(base);
}

std::size_t AnomalyAudit::count(Anomaly a) const {
  std::size_t n = 0;
  for (const auto& [app, r] : apps) n += r.count(a);
  return n;
}

std::size_t AnomalyAudit::findings() const {
  std::size_t n = 0;
  for (const auto& [app, r] : apps) n += r.findings.size();
  return n;
}

json AnomalyAudit::to_json() const {
  json out = json::object();
  for (const auto& [app, r] : apps) {
    json counts = json::object();
    json pct = json::object();
    for (Anomaly a : kAllAnomalies) {
      counts[to_string(a)] = r.count(a);
      pct[to_string(a)] = r.percent(a);
    }
    json list = json::array();
    for (const auto& f : r.findings) {
      list.push_back({{"kind", to_string(f.kind)}, {"node", f.node.str()}, {"detail", f.detail}});
    }
    out[app] = {{"total", r.total}, {"baseline", r.baseline}, {"counts", counts}, {"percent", pct}, {"findings", list}};
  }
  return out;
}

std::string AnomalyAudit::table() const {
  std::ostringstream os;
  os << std::left << std::setw(16) << "app" << std::right << std::setw(8) << "objects";
  for (Anomaly a : kAllAnomalies) os << std::setw(21) << to_string(a);
  os << "\n";
  for (const auto& [app, r] : apps) {
    os << std::left << std::setw(16) << app << std::right << std::setw(8) << r.total;
    for (Anomaly a : kAllAnomalies) {
      os << std::setw(12) << r.count(a) << std::setw(8) << fixed(r.percent(a), 2) << "%";
    }
    os << "\n";
  }
  return os.str();
}

json Baseline::to_json() const {
  json nodes_j = json::array();
  for (const auto& [id, n] : nodes) {
    json jn = xmig::to_json(n);
    auto it = owner.find(id);
    if (it != owner.end()) jn["owner"] = it->second;
    nodes_j.push_back(std::move(jn));
  }
  return nodes_j;
}

Baseline Baseline::from_json(const json& j) {
  Baseline b;
  for (const auto& jn : j) {
    DataNode n = node_from_json(jn);
    if (jn.contains("owner")) b.owner[n.id] = jn.at("owner").get<std::string>();
    NodeId id = n.id;
    b.nodes.emplace(std::move(id), std::move(n));
  }
  return b;
}

Baseline capture_baseline(const std::vector<const AppStore*>& stores) {
  Baseline b;
  for (const AppStore* s : stores) {
    RefIndex idx(s->dag());
    auto all = s->all_nodes();
    for (const auto& n : all) idx.add(n);
    for (auto& n : all) {
      NodeId owner = owner_root(s->dag(), idx, n);
      if (!owner.empty()) b.owner[n.id] = owner.str();
      NodeId id = n.id;
      b.nodes.emplace(std::move(id), std::move(n));
    }
  }
  return b;
}

std::string to_string(TraceCheck c) {
  switch (c) {
    case TraceCheck::kDisplayBeforeParent: return "display_before_parent";
    case TraceCheck::kParentErasedFirst: return "parent_erased_first";
  }
  return "unknown";
}

json to_json(const TraceViolation& v) {
  return {{"check", to_string(v.check)},
          {"app", v.app},
          {"node", v.node.str()},
          {"detail", v.detail},
          {"seq", v.seq}};
}

TraceViolation trace_violation_from_json(const json& j) {
  TraceViolation v;
  std::string c = j.at("check").get<std::string>();
  if (c == "display_before_parent") {
    v.check = TraceCheck::kDisplayBeforeParent;
  } else if (c == "parent_erased_first") {
    v.check = TraceCheck::kParentErasedFirst;
  } else {
    throw std::invalid_argument("unknown trace check '" + c + "'");
  }
  v.app = j.at("app").get<std::string>();
  v.node = NodeId::parse(j.at("node").get<std::string>());
  v.detail = j.value("detail", "");
  v.seq = j.value("seq", std::uint64_t{0});
  return v;
}

// ---------------------------------------------------------------- trace

struct TraceAuditor::Replica {
  explicit Replica(const DagSpec& d) : dag(d), idx(d) {}
  DagSpec dag;
  RefIndex idx;
  std::map<NodeId, DataNode> nodes;

  void put(const DataNode& n) {
    auto it = nodes.find(n.id);
    if (it != nodes.end()) {
      idx.remove(it->second);
      it->second = n;
    } else {
      it = nodes.emplace(n.id, n).first;
    }
    idx.add(it->second);
  }
  void drop(const NodeId& id) {
    auto it = nodes.find(id);
    if (it == nodes.end()) return;
    idx.remove(it->second);
    nodes.erase(it);
  }
};

TraceAuditor::TraceAuditor() = default;
TraceAuditor::~TraceAuditor() = default;

void TraceAuditor::attach(AppStore& store) {
  {
    std::lock_guard lock(mu_);
    auto r = std::make_unique<Replica>(store.dag());
    for (const auto& n : store.all_nodes()) r->put(n);
    replicas_[store.app_id()] = std::move(r);
  }
  store.set_journal([this](const StoreEvent& ev) { on_event(ev); });
}

void TraceAuditor::set_paused(bool paused) {
  std::lock_guard lock(mu_);
  paused_ = paused;
}

bool TraceAuditor::paused() const {
  std::lock_guard lock(mu_);
  return paused_;
}

std::vector<TraceViolation> TraceAuditor::violations() const {
  std::lock_guard lock(mu_);
  return violations_;
}

std::size_t TraceAuditor::count(TraceCheck c) const {
  std::lock_guard lock(mu_);
  return static_cast<std::size_t>(
      std::count_if(violations_.begin(), violations_.end(),
                    [&](const TraceViolation& v) { return v.check == c; }));
}

std::uint64_t TraceAuditor::events() const {
  std::lock_guard lock(mu_);
  return events_;
}

void TraceAuditor::clear() {
  std::lock_guard lock(mu_);
  violations_.clear();
  events_ = 0;
}

void TraceAuditor::on_event(const StoreEvent& ev) {
  std::lock_guard lock(mu_);
  ++events_;
  auto it = replicas_.find(ev.app);
  if (it == replicas_.end()) return;
  Replica& r = *it->second;
  const DataNode& n = ev.node;

  if (ev.kind == MutationKind::kErase) {
    if (!paused_) {
      auto kids = referrers(r.dag, r.idx, n);
      if (!kids.empty()) {
        violations_.push_back({TraceCheck::kParentErasedFirst, ev.app, n.id,
                               kids.front().str() + " still refers to it", ev.seq});
      }
    }
    r.drop(n.id);
    return;
  }

  bool was_visible = false;
  if (auto old = r.nodes.find(n.id); old != r.nodes.end()) {
    was_visible = old->second.flags.visible();
  }
  r.put(n);
  if (paused_ || was_visible || !n.flags.visible()) return;
  std::string why = check_node(r.dag, r.idx, r.nodes, n, CheckMode::kDisplay);
  if (!why.empty()) {
    violations_.push_back({TraceCheck::kDisplayBeforeParent, ev.app, n.id, why, ev.seq});
  }
}

// ---------------------------------------------------------------- static audit

AnomalyAudit audit(const std::vector<const AppStore*>& stores, const MetaStore& meta,
                   const Baseline& base, const std::vector<TraceViolation>& trace) {
  AnomalyAudit out;
  std::map<AppId, const AppStore*> by_app;
  std::map<AppId, std::map<NodeId, DataNode>> live;
  for (const AppStore* s : stores) {
    by_app[s->app_id()] = s;
    auto& m = live[s->app_id()];
    for (auto& n : s->all_nodes()) {
      NodeId id = n.id;
      m.emplace(std::move(id), std::move(n));
    }
    out.apps[s->app_id()] = AppAudit{s->app_id(), m.size(), 0, {}};
  }
  for (const auto& [id, n] : base.nodes) {
    if (auto it = out.apps.find(id.app); it != out.apps.end()) ++it->second.baseline;
  }
  auto is_live = [&](const NodeId& id) {
    auto it = live.find(id.app);
    return it != live.end() && it->second.contains(id);
  };

  // Dangling: shown data missing something it needs.
  for (const AppStore* s : stores) {
    const auto& nodes = live[s->app_id()];
    RefIndex idx(s->dag());
    for (const auto& [id, n] : nodes) idx.add(n);
    for (const auto& [id, n] : nodes) {
      if (!n.flags.visible()) continue;
      std::string why = check_node(s->dag(), idx, nodes, n, CheckMode::kDangling);
      if (!why.empty()) out.apps[s->app_id()].findings.push_back({Anomaly::kDangling, id, why});
    }
  }

  // Lineage from the attribute change rows.
  std::map<NodeId, std::vector<NodeId>> forward;
  std::map<NodeId, std::pair<NodeId, std::string>> backward;
  for (const auto& r : meta.attributes.all()) {
    auto& f = forward[r.old_node];
    if (std::find(f.begin(), f.end(), r.new_node) == f.end()) f.push_back(r.new_node);
    backward.emplace(r.new_node, std::make_pair(r.old_node, r.migration_id));
  }
  std::set<NodeId> whole_bags;
  for (const auto& e : meta.bags.all()) {
    if (!e.partial) whole_bags.insert(e.origin);
  }

  // Data loss: every pre-migration node survives somewhere.
  for (const auto& [id, n] : base.nodes) {
    std::vector<NodeId> work{id};
    std::set<NodeId> seen{id};
    bool kept = false;
    while (!work.empty() && !kept) {
      NodeId cur = work.back();
      work.pop_back();
      if (is_live(cur) || whole_bags.contains(cur)) kept = true;
      auto f = forward.find(cur);
      if (f == forward.end()) continue;
      for (const auto& next : f->second) {
        if (seen.insert(next).second) work.push_back(next);
      }
    }
    if (!kept && out.apps.contains(id.app)) {
      out.apps[id.app].findings.push_back(
          {Anomaly::kDataLoss, id, "not live, not bagged, no live successor"});
    }
  }

  // Ownership: whoever moved a node owns it or holds a grant from its owner.
  for (const auto& [app, nodes] : live) {
    for (const auto& [id, n] : nodes) {
      auto b = backward.find(id);
      if (b == backward.end()) continue;
      const NodeId& prev = b->second.first;
      const std::string& mid = b->second.second;
      NodeId origin = id;
      for (std::size_t steps = 0; steps < backward.size(); ++steps) {
        auto it = backward.find(origin);
        if (it == backward.end()) break;
        origin = it->second.first;
      }
      auto own = base.owner.find(origin);
      if (own == base.owner.end()) continue;
      auto lease = meta.leases.lease(mid);
      if (!lease) {
        out.apps[app].findings.push_back(
            {Anomaly::kOwnershipViolation, id, "created by unknown migration " + mid});
        continue;
      }
      if (lease->user == own->second) continue;
      DataNode probe;
      if (auto s = by_app.find(prev.app); s != by_app.end()) {
        if (auto pn = s->second->node(prev)) probe = *pn;
      }
      if (probe.id.empty()) {
        probe = base.nodes.at(origin);
        probe.id = prev;
      }
      bool consented = false;
      if (auto s = by_app.find(prev.app); s != by_app.end()) {
        for (const auto& g : s->second->grants()) {
          if (g.grantor == own->second && g.grantee == lease->user &&
              g.allowed.contains(lease->type) && g.covers(probe)) {
            consented = true;
            break;
          }
        }
      }
      if (!consented) {
        out.apps[app].findings.push_back({Anomaly::kOwnershipViolation, id,
                                          lease->user + " moved data of " + own->second});
      }
    }
  }

  for (const auto& v : trace) {
    if (v.check != TraceCheck::kDisplayBeforeParent) continue;
    auto it = out.apps.find(v.app);
    if (it != out.apps.end()) {
      it->second.findings.push_back({Anomaly::kPrematureDisplay, v.node, v.detail});
    }
  }
  return out;
}

// ---------------------------------------------------------------- naive

std::vector<std::string> naive_type_order(const AppDefinition& app) {
  std::vector<std::string> order{app.dag.root_type};
  try {
    AppBinding b = binding_for(app.schema.app_id);
    for (const char* role : {"post", "like", "comment", "conversation", "message"}) {
      auto it = b.find(role);
      if (it != b.end() && app.dag.type(it->second.type) != nullptr) {
        order.push_back(it->second.type);
      }
    }
  } catch (const std::invalid_argument&) {
  }
  std::vector<std::string> rest;
  for (const auto& t : app.dag.node_types) {
    if (std::find(order.begin(), order.end(), t.type_name) == order.end()) {
      rest.push_back(t.type_name);
    }
  }
  std::sort(rest.begin(), rest.end());
  order.insert(order.end(), rest.begin(), rest.end());
  return order;
}

namespace {

bool has_missing_reference(const AppStore& s, const DataNode& n) {
  const DagSpec& dag = s.dag();
  if (n.id.type == dag.root_type) return false;
  const NodeTypeSpec* t = dag.type(n.id.type);
  if (t == nullptr) return false;
  for (const auto& e : t->depends_on) {
    const Value& v = n.get(e.attr);
    if (!v.empty() && !is_placeholder(v) && !s.find(e.parent_type, e.parent_attr, v)) return true;
  }
  for (const auto& e : t->owned_by) {
    const Value& v = n.get(e.attr);
    if (!v.empty() && !is_placeholder(v) && !s.find(dag.root_type, e.root_attr, v)) return true;
  }
  return false;
}

// Nodes in `s` holding a dependency or ownership reference to `n`.
std::vector<NodeId> store_referrers(const AppStore& s, const DataNode& n) {
  std::vector<NodeId> out;
  const DagSpec& dag = s.dag();
  for (const auto& t : dag.node_types) {
    for (const auto& e : t.depends_on) {
      if (e.parent_type != n.id.type) continue;
      const Value& v = n.get(e.parent_attr);
      if (v.empty()) continue;
      auto hits = s.find_all(t.type_name, e.attr, v);
      out.insert(out.end(), hits.begin(), hits.end());
    }
    if (n.id.type != dag.root_type) continue;
    for (const auto& e : t.owned_by) {
      const Value& v = n.get(e.root_attr);
      if (v.empty()) continue;
      auto hits = s.find_all(t.type_name, e.attr, v);
      out.insert(out.end(), hits.begin(), hits.end());
    }
  }
  return out;
}

AppStore& store_of(const EngineEnv& env, const AppId& app) {
  auto it = env.stores.find(app);
  if (it == env.stores.end() || it->second == nullptr) {
    throw std::invalid_argument("unknown application '" + app + "'");
  }
  return *it->second;
}

}  // namespace

std::size_t collect_dangling(AppStore& store, std::vector<NodeId> candidates) {
  ScopedLane lane(Lane::kOther);
  std::size_t removed = 0;
  while (!candidates.empty()) {
    NodeId id = std::move(candidates.back());
    candidates.pop_back();
    auto n = store.node(id);
    if (!n || !has_missing_reference(store, *n)) continue;
    store.erase(id);
    ++removed;
    auto more = store_referrers(store, *n);
    candidates.insert(candidates.end(), more.begin(), more.end());
  }
  return removed;
}

MigrationReport run_naive(const EngineEnv& env, const NodeId& user_root, const AppId& dst_app,
                          const NaiveOptions& opt, DanglingTally* tally) {
  AppStore& src = store_of(env, user_root.app);
  AppStore& dst = store_of(env, dst_app);
  if (&src == &dst) throw std::invalid_argument("source and destination are both " + dst_app);
  const SchemaMapping* mapping =
      env.catalog != nullptr ? env.catalog->find(src.app_id(), dst.app_id()) : nullptr;
  if (mapping == nullptr) {
    throw MappingError("no mapping from " + src.app_id() + " to " + dst.app_id());
  }
  auto root = src.node(user_root);
  if (!root) throw NotFound("user root " + user_root.str() + " not found");
  const NodeMap* root_map = mapping->for_source(root->id.type);
  if (root_map == nullptr) throw MappingError("no mapping for " + root->id.type);

  MetaStore& meta = *env.meta;
  Tracker tracker(meta, env.stores);
  const auto& meter = src.meter();
  auto now = [&] { return meter ? meter->now() : 0; };
  ScopedLane lane(Lane::kMigration);
  const std::int64_t mig0 = meter ? meter->total(Lane::kMigration) : 0;
  const std::int64_t val0 = meter ? meter->total(Lane::kValidation) : 0;

  MigrationLease lease = meta.leases.acquire(tracker.canonical(user_root), MigrationType::kDeletion);
  MigrationReport rep;
  rep.migration_id = lease.migration_id;
  rep.user = lease.user;
  rep.type = MigrationType::kDeletion;
  rep.src = src.app_id();
  rep.dst = dst.app_id();
  rep.start = now();

  // Owned nodes, in the fixed type order.
  const DagSpec& sdag = src.dag();
  std::vector<DataNode> owned{*root};
  for (const auto& type : naive_type_order(src.definition())) {
    const NodeTypeSpec* t = sdag.type(type);
    if (type == sdag.root_type || t == nullptr || t->owned_by.empty()) continue;
    const RootEdge& e = t->owned_by.front();
    const Value& v = root->get(e.root_attr);
    if (v.empty()) continue;
    auto ids = src.find_all(type, e.attr, v);
    std::sort(ids.begin(), ids.end());
    for (auto& n : src.read_many(ids)) owned.push_back(std::move(n));
  }
  rep.considered = owned.size() - 1;

  struct Moved {
    DataNode source;
    Materialized m;
  };
  std::vector<Moved> moved;
  for (const auto& n : owned) {
    const NodeMap* nm = mapping->for_source(n.id.type);
    if (nm == nullptr) {
      ++rep.retained;
      continue;
    }
    const std::string table = dst.dag().type(nm->to_node)->primary_table();
    moved.push_back({n, materialize(*nm, n, dst.definition(),
                                    [&] { return dst.fresh_key(table); })});
  }

  // Identity substitution among the nodes of this run only.
  std::map<std::tuple<std::string, AttrRef, Value>, std::size_t> by_value;
  for (std::size_t i = 0; i < moved.size(); ++i) {
    for (const auto& [table, row] : moved[i].source.rows) {
      for (const auto& [attr, v] : row) {
        if (!v.empty()) by_value.emplace(std::make_tuple(moved[i].source.id.type, AttrRef{table, attr}, v), i);
      }
    }
  }
  for (auto& mv : moved) {
    auto sedges = ref_edges(sdag, mv.source.id.type);
    auto dedges = ref_edges(dst.dag(), mv.m.node.id.type);
    for (const auto& [dattr, sattr] : mv.m.provenance) {
      auto se = std::find_if(sedges.begin(), sedges.end(),
                             [&](const RefEdge& e) { return e.attr == sattr; });
      auto de = std::find_if(dedges.begin(), dedges.end(),
                             [&](const RefEdge& e) { return e.attr == dattr; });
      if (se == sedges.end() || de == dedges.end()) continue;
      const Value& v = mv.source.get(sattr);
      if (v.empty()) continue;
      auto hit = by_value.find({se->target_type, se->target_attr, v});
      if (hit == by_value.end()) continue;
      mv.m.node.set(dattr, moved[hit->second].m.node.get(de->target_attr));
    }
  }

  std::vector<NodeId> inserted;
  std::vector<DataNode> erased;
  for (auto& mv : moved) {
    DataNode node = mv.m.node;
    node.flags = Flags{};
    node.flags.migration_flag = opt.hold_until_end;
    NodeTimeline t;
    t.source = mv.source.id;
    t.dest = node.id;
    dst.insert(node);
    inserted.push_back(node.id);
    if (!opt.hold_until_end) t.displayed = now();
    const TableSpec* st = src.definition().schema.table(sdag.type(mv.source.id.type)->primary_table());
    const TableSpec* dt = dst.definition().schema.table(dst.dag().type(node.id.type)->primary_table());
    meta.attributes.record({{rep.migration_id, src.app_id(), dst.app_id(), mv.source.id, node.id,
                             AttrRef{st->name, st->key}, mv.source.id.key,
                             node.get(AttrRef{dt->name, dt->key})}});
    if (mv.source.id != root->id) {
      erased.push_back(src.erase(mv.source.id));
      t.source_invisible = now();
      ++rep.migrated;
      ++rep.deleted;
    }
    rep.timeline.push_back(t);
  }
  rep.dest_root = moved.front().m.node.id;

  if (opt.hold_until_end) {
    ScopedLane vlane(Lane::kValidation);
    std::map<NodeId, std::size_t> pos;
    for (std::size_t i = 0; i < rep.timeline.size(); ++i) pos[rep.timeline[i].dest] = i;
    std::vector<NodeId> held = inserted;
    bool progress = true;
    while (progress) {
      progress = false;
      std::vector<NodeId> still;
      for (const auto& id : held) {
        auto n = dst.node(id);
        if (!n) continue;
        if (!is_displayable(dst, *n, rep.dest_root)) {
          still.push_back(id);
          continue;
        }
        Flags f = n->flags;
        f.migration_flag = false;
        dst.set_flags(id, f);
        rep.timeline[pos.at(id)].displayed = now();
        progress = true;
      }
      held = std::move(still);
    }
  }

  erased.push_back(src.erase(root->id));
  rep.timeline.front().source_invisible = now();
  meta.leases.commit(rep.migration_id);
  rep.end = now();
  if (meter) {
    rep.migration_cost = meter->total(Lane::kMigration) - mig0;
    rep.validation_cost = meter->total(Lane::kValidation) - val0;
  }

  if (opt.collect_garbage) {
    std::vector<NodeId> src_candidates;
    for (const auto& n : erased) {
      auto r = store_referrers(src, n);
      src_candidates.insert(src_candidates.end(), r.begin(), r.end());
    }
    std::size_t a = collect_dangling(src, std::move(src_candidates));
    std::size_t b = collect_dangling(dst, inserted);
    if (tally != nullptr) {
      tally->removed[src.app_id()] += a;
      tally->removed[dst.app_id()] += b;
    }
  }
  return rep;
}

MigrationReport run_naive_plus(const EngineEnv& env, const NodeId& user_root, const AppId& dst,
                               DanglingTally* tally) {
  NaiveOptions opt;
  opt.hold_until_end = true;
  return run_naive(env, user_root, dst, opt, tally);
}

// ---------------------------------------------------------------- world

World::World(const Fixtures& fx, CostParams params)
    : fx_(fx),
      meter_(std::make_shared<CostMeter>(params)),
      faults_(std::make_shared<FaultInjector>()) {
  std::map<AppId, AppStore*> raw;
  std::uint64_t floor = 0;
  for (const auto& [id, def] : fx.apps) {
    auto s = std::make_unique<AppStore>(def, meter_, faults_);
    // Each application numbers fresh keys in its own range.
    s->set_key_floor(++floor * 10'000'000);
    raw[id] = s.get();
    trace_.attach(*s);
    stores_[id] = std::move(s);
  }
  meta_.wal.set_faults(faults_);
  engine_ = std::make_unique<Engine>(EngineEnv{raw, &meta_, &fx.catalog, faults_});
}

AppStore& World::store(const AppId& app) const {
  auto it = stores_.find(app);
  if (it == stores_.end()) throw std::invalid_argument("unknown application '" + app + "'");
  return *it->second;
}

std::map<AppId, AppStore*> World::stores() const {
  std::map<AppId, AppStore*> out;
  for (const auto& [id, s] : stores_) out[id] = s.get();
  return out;
}

std::vector<const AppStore*> World::const_stores() const {
  std::vector<const AppStore*> out;
  for (const auto& [id, s] : stores_) out.push_back(s.get());
  return out;
}

GenStats World::generate(const GenConfig& cfg, const AppId& app) {
  trace_.set_paused(true);
  GenStats st;
  try {
    st = xmig::generate(cfg, store(app));
  } catch (...) {
    trace_.set_paused(false);
    throw;
  }
  trace_.set_paused(false);
  recapture_baseline();
  return st;
}

void World::recapture_baseline() { baseline_ = capture_baseline(const_stores()); }

std::vector<NodeId> World::users(const AppId& app) const {
  AppStore& s = store(app);
  auto ids = s.ids(s.dag().root_type);
  std::sort(ids.begin(), ids.end());
  return ids;
}

AnomalyAudit World::audit() const {
  return xmig::audit(const_stores(), meta_, baseline_, trace_findings());
}

std::vector<TraceViolation> World::trace_findings() const {
  std::vector<TraceViolation> out = loaded_trace_;
  for (auto& v : trace_.violations()) out.push_back(std::move(v));
  return out;
}

json World::save() const {
  json stores = json::object();
  for (const auto& [id, s] : stores_) stores[id] = s->snapshot();
  json trace = json::array();
  for (const auto& v : trace_findings()) trace.push_back(to_json(v));
  return {{"format", "xmig-workspace/1"},
          {"stores", stores},
          {"meta", meta_.snapshot()},
          {"wal", meta_.wal.to_json()},
          {"leases", meta_.leases.to_json()},
          {"baseline", baseline_.to_json()},
          {"trace", trace}};
}

void World::load(const json& j) {
  if (j.value("format", "") != "xmig-workspace/1") {
    throw std::invalid_argument("not a workspace file");
  }
  for (const auto& [id, s] : stores_) {
    if (j.at("stores").contains(id)) s->restore(j.at("stores").at(id));
    trace_.attach(*s);
  }
  meta_.restore(j.at("meta"));
  meta_.wal.load(j.at("wal"));
  meta_.leases.load(j.at("leases"));
  baseline_ = Baseline::from_json(j.at("baseline"));
  trace_.clear();
  loaded_trace_.clear();
  for (const auto& v : j.at("trace")) loaded_trace_.push_back(trace_violation_from_json(v));
}

// ---------------------------------------------------------------- metrics

double ContinuityReport::cdf(double x) const {
  if (fractions.empty()) return 1.0;
  auto it = std::upper_bound(fractions.begin(), fractions.end(), x);
  return double(it - fractions.begin()) / double(fractions.size());
}

json ContinuityReport::to_json() const {
  json points = json::array();
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    if (i + 1 < fractions.size() && fractions[i + 1] == fractions[i]) continue;
    points.push_back({fractions[i], double(i + 1) / double(fractions.size())});
  }
  return {{"objects", fractions.size()},
          {"median", median},
          {"p90", p90},
          {"tail", tail},
          {"cdf", points}};
}

namespace {

double quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0;
  auto i = static_cast<std::size_t>(std::ceil(q * double(sorted.size()))) ;
  return sorted[std::min(sorted.size() - 1, i == 0 ? 0 : i - 1)];
}

}  // namespace

ContinuityReport continuity_report(const std::vector<MigrationReport>& reports) {
  ContinuityReport out;
  for (const auto& r : reports) {
    const double span = double(r.end - r.start);
    for (const auto& t : r.timeline) {
      if (t.dest.empty()) continue;
      double f = 0;
      if (t.source_invisible >= 0) {
        std::int64_t shown = t.displayed >= 0 ? t.displayed : r.end;
        f = span <= 0 ? 1.0 : double(std::max<std::int64_t>(0, shown - t.source_invisible)) / span;
      } else if (t.displayed < 0) {
        f = 1.0;
      }
      out.fractions.push_back(std::clamp(f, 0.0, 1.0));
    }
  }
  std::sort(out.fractions.begin(), out.fractions.end());
  out.median = quantile(out.fractions, 0.5);
  out.p90 = quantile(out.fractions, 0.9);
  out.tail = static_cast<std::size_t>(
      std::count_if(out.fractions.begin(), out.fractions.end(), [](double f) { return f >= 0.5; }));
  return out;
}

bool first_order_dominates(const ContinuityReport& a, const ContinuityReport& b) {
  std::vector<double> xs = a.fractions;
  xs.insert(xs.end(), b.fractions.begin(), b.fractions.end());
  for (double x : xs) {
    if (a.cdf(x) + 1e-12 < b.cdf(x)) return false;
  }
  return true;
}

LinearFit fit_linear(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 2) throw std::invalid_argument("a linear fit needs two points");
  const double n = double(points.size());
  double sx = 0, sy = 0;
  for (const auto& [x, y] : points) {
    sx += x;
    sy += y;
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (const auto& [x, y] : points) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
    syy += (y - my) * (y - my);
  }
  LinearFit f;
  f.n = points.size();
  f.slope = sxx == 0 ? 0 : sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss_res = 0;
  for (const auto& [x, y] : points) {
    double e = y - (f.intercept + f.slope * x);
    ss_res += e * e;
  }
  f.r2 = syy == 0 ? 1.0 : 1.0 - ss_res / syy;
  return f;
}

double ScalingReport::size_range() const {
  if (points.empty()) return 0;
  auto [lo, hi] = std::minmax_element(points.begin(), points.end(),
                                      [](const ScalingPoint& a, const ScalingPoint& b) {
                                        return a.size() < b.size();
                                      });
  return lo->size() == 0 ? 0 : double(hi->size()) / double(lo->size());
}

namespace {

json fit_json(const LinearFit& f) {
  return {{"slope", f.slope}, {"intercept", f.intercept}, {"r2", f.r2}, {"n", f.n}};
}

}  // namespace

json ScalingReport::to_json() const {
  json pts = json::array();
  for (const auto& p : points) {
    pts.push_back({{"user", p.user.str()},
                   {"nodes", p.nodes},
                   {"edges", p.edges},
                   {"deletion", p.deletion},
                   {"independent", p.independent},
                   {"validation", p.validation}});
  }
  return {{"points", pts},
          {"size_range", size_range()},
          {"deletion", fit_json(deletion)},
          {"independent", fit_json(independent)},
          {"validation", fit_json(validation)}};
}

std::string ScalingReport::table() const {
  std::ostringstream os;
  os << std::left << std::setw(14) << "algorithm" << std::right << std::setw(12) << "slope"
     << std::setw(12) << "intercept" << std::setw(8) << "r2" << std::setw(6) << "n" << "\n";
  auto row = [&](const char* name, const LinearFit& f) {
    os << std::left << std::setw(14) << name << std::right << std::setw(12) << fixed(f.slope, 3)
       << std::setw(12) << fixed(f.intercept, 1) << std::setw(8) << fixed(f.r2, 4)
       << std::setw(6) << f.n << "\n";
  };
  row("deletion", deletion);
  row("independent", independent);
  row("validation", validation);
  os << "size range " << fixed(size_range(), 1) << "x over " << points.size() << " users\n";
  return os.str();
}

ScalingReport scaling_report(const Fixtures& fx, const GenConfig& cfg, const AppId& src,
                             const AppId& dst, std::size_t samples) {
  // Sizes come from one world; each sample then runs alone in a fresh copy.
  std::vector<ScalingPoint> sized;
  {
    World w(fx);
    w.generate(cfg, src);
    AppStore& s = w.store(src);
    for (const auto& root : w.users(src)) {
      ScalingPoint p;
      p.user = root;
      auto reach = reachable_from(s, root);
      p.nodes = reach.size() + 1;
      reach.insert(root);
      for (const auto& id : reach) {
        if (auto n = s.node(id)) p.edges += traversal_children(s, *n).size();
      }
      sized.push_back(p);
    }
  }
  std::sort(sized.begin(), sized.end(), [](const ScalingPoint& a, const ScalingPoint& b) {
    return a.size() != b.size() ? a.size() < b.size() : a.user < b.user;
  });

  // Spread the samples evenly over log size.
  std::vector<ScalingPoint> chosen;
  if (!sized.empty() && samples > 0) {
    const double lo = std::log(double(sized.front().size()));
    const double hi = std::log(double(sized.back().size()));
    std::set<std::size_t> picked;
    for (std::size_t i = 0; i < samples; ++i) {
      double target = samples == 1 ? hi : lo + (hi - lo) * double(i) / double(samples - 1);
      std::size_t best = 0;
      double best_d = 1e300;
      for (std::size_t k = 0; k < sized.size(); ++k) {
        if (picked.contains(k)) continue;
        double d = std::abs(std::log(double(sized[k].size())) - target);
        if (d < best_d) {
          best_d = d;
          best = k;
        }
      }
      if (best_d < 1e300) picked.insert(best);
    }
    for (std::size_t k : picked) chosen.push_back(sized[k]);
  }

  ScalingReport out;
  for (auto p : chosen) {
    for (MigrationType type : {MigrationType::kDeletion, MigrationType::kIndependent}) {
      World w(fx);
      w.generate(cfg, src);
      MigrationRequest req;
      req.user_root = p.user;
      req.dst = dst;
      req.type = type;
      MigrationReport r = w.engine().migrate(req);
      if (r.outcome != Outcome::kCommitted) {
        throw std::runtime_error("scaling run for " + p.user.str() + " failed: " + r.error);
      }
      if (type == MigrationType::kDeletion) {
        p.deletion = r.migration_cost;
        p.validation = r.validation_cost;
      } else {
        p.independent = r.migration_cost;
      }
    }
    out.points.push_back(p);
  }
  std::vector<std::pair<double, double>> del, ind, val;
  for (const auto& p : out.points) {
    del.emplace_back(double(p.size()), double(p.deletion));
    ind.emplace_back(double(p.size()), double(p.independent));
    val.emplace_back(double(p.size()), double(p.validation));
  }
  if (out.points.size() >= 2) {
    out.deletion = fit_linear(del);
    out.independent = fit_linear(ind);
    out.validation = fit_linear(val);
  }
  return out;
}

json RatesReport::to_json() const {
  return {{"users", users},
          {"deletion", deletion},
          {"independent", independent},
          {"validation", validation},
          {"ratio", ratio()},
          {"validation_overhead", validation_overhead()}};
}

std::string RatesReport::table() const {
  std::ostringstream os;
  os << "users                " << users << "\n"
     << "deletion cost        " << deletion << "\n"
     << "independent cost     " << independent << "\n"
     << "deletion/independent " << fixed(ratio(), 2) << "\n"
     << "validation cost      " << validation << " (" << fixed(100 * validation_overhead(), 2)
     << "% of deletion)\n";
  return os.str();
}

RatesReport rates_report(const Fixtures& fx, const GenConfig& cfg, const AppId& src,
                         const AppId& dst) {
  RatesReport out;
  for (MigrationType type : {MigrationType::kDeletion, MigrationType::kIndependent}) {
    World w(fx);
    w.generate(cfg, src);
    auto users = w.users(src);
    out.users = users.size();
    for (const auto& u : users) {
      MigrationRequest req;
      req.user_root = u;
      req.dst = dst;
      req.type = type;
      MigrationReport r = w.engine().migrate(req);
      if (r.outcome != Outcome::kCommitted) {
        throw std::runtime_error("rate run for " + u.str() + " failed: " + r.error);
      }
      if (type == MigrationType::kDeletion) {
        out.deletion += r.migration_cost;
        out.validation += r.validation_cost;
      } else {
        out.independent += r.migration_cost;
      }
    }
  }
  return out;
}

bool NaiveCurve::nondecreasing() const {
  auto mono = [](const std::vector<double>& v) {
    return std::adjacent_find(v.begin(), v.end(), std::greater<>()) == v.end();
  };
  return mono(source) && mono(destination);
}

json NaiveCurve::to_json() const { return {{"source", source}, {"destination", destination}}; }

NaiveCurve run_naive_all(World& w, const AppId& src, const AppId& dst) {
  const double src_total = double(w.store(src).size());
  DanglingTally tally;
  std::vector<std::size_t> removed_dst;
  NaiveCurve out;
  for (const auto& u : w.users(src)) {
    run_naive(w.env(), u, dst, {}, &tally);
    out.source.push_back(src_total == 0 ? 0 : 100.0 * double(tally.removed[src]) / src_total);
    removed_dst.push_back(tally.removed[dst]);
  }
  // The destination's total is its object count once every user has moved.
  const double dst_total = double(w.store(dst).size());
  for (std::size_t r : removed_dst) {
    out.destination.push_back(dst_total == 0 ? 0 : 100.0 * double(r) / dst_total);
  }
  return out;
}

json ContinuityComparison::to_json() const {
  return {{"engine", engine.to_json()}, {"naive_plus", naive_plus.to_json()}};
}

std::string ContinuityComparison::table() const {
  std::ostringstream os;
  os << std::left << std::setw(12) << "algorithm" << std::right << std::setw(9) << "objects"
     << std::setw(9) << "median" << std::setw(9) << "p90" << std::setw(8) << "tail" << "\n";
  auto row = [&](const char* name, const ContinuityReport& r) {
    os << std::left << std::setw(12) << name << std::right << std::setw(9) << r.fractions.size()
       << std::setw(9) << fixed(r.median, 4) << std::setw(9) << fixed(r.p90, 4) << std::setw(8)
       << r.tail << "\n";
  };
  row("engine", engine);
  row("naive+", naive_plus);
  os << "engine dominates naive+: " << (first_order_dominates(engine, naive_plus) ? "yes" : "no")
     << "\n";
  return os.str();
}

ContinuityComparison continuity_comparison(const Fixtures& fx, const GenConfig& cfg,
                                           const AppId& src, const AppId& dst) {
  ContinuityComparison out;
  {
    World w(fx);
    w.generate(cfg, src);
    std::vector<MigrationReport> reports;
    for (const auto& u : w.users(src)) {
      MigrationRequest req;
      req.user_root = u;
      req.dst = dst;
      reports.push_back(w.engine().migrate(req));
    }
    out.engine = continuity_report(reports);
  }
  {
    World w(fx);
    w.generate(cfg, src);
    std::vector<MigrationReport> reports;
    for (const auto& u : w.users(src)) reports.push_back(run_naive_plus(w.env(), u, dst));
    out.naive_plus = continuity_report(reports);
  }
  return out;
}

}  // namespace xmig
