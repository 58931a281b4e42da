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

#include "xmig/engine.h"

#include <algorithm>
#include <condition_variable>
#include <deque>
#include <exception>
#include <thread>

namespace xmig {

using json = nlohmann::json;

std::string to_string(Outcome o) {
  return o == Outcome::kCommitted ? "committed" : "rolled_back";
}

std::string to_string(CanMigrate c) {
  switch (c) {
    case CanMigrate::kYes: return "yes";
    case CanMigrate::kSkipNotShared: return "skip_not_shared";
    case CanMigrate::kSkipWrongType: return "skip_wrong_type";
  }
  return "?";
}

CanMigrate can_migrate(const DataNode& n, const UserId& owner, const UserId& user,
                       MigrationType type, const std::vector<SharingGrant>& grants) {
  if (owner == user) return CanMigrate::kYes;
  bool other_type = false;
  for (const auto& g : grants) {
    if (g.grantor != owner || g.grantee != user || !g.covers(n)) continue;
    if (g.allowed.contains(type)) return CanMigrate::kYes;
    other_type = true;
  }
  return other_type ? CanMigrate::kSkipWrongType : CanMigrate::kSkipNotShared;
}

json MigrationReport::to_json() const {
  json tl = json::array();
  for (const auto& t : timeline) {
    tl.push_back({{"source", t.source.str()},
                  {"dest", t.dest.empty() ? "" : t.dest.str()},
                  {"source_invisible", t.source_invisible},
                  {"displayed", t.displayed}});
  }
  return json{{"migration_id", migration_id},
              {"user", user},
              {"type", xmig::to_string(type)},
              {"src", src},
              {"dst", dst},
              {"dest_root", dest_root.empty() ? "" : dest_root.str()},
              {"counts",
               {{"considered", considered},
                {"migrated", migrated},
                {"bagged_no_mapping", bagged_no_mapping},
                {"bagged_dangling", bagged_dangling},
                {"skipped_not_shared", skipped_not_shared},
                {"skipped_wrong_type", skipped_wrong_type},
                {"skipped_marked", skipped_marked},
                {"retained", retained},
                {"deleted", deleted},
                {"failed_validation", failed_validation},
                {"partial_bags", partial_bags},
                {"merged_entries", merged_entries},
                {"phase2_moved", phase2_moved},
                {"duplicates", duplicates},
                {"key_retries", key_retries}}},
              {"merge_conflicts", merge_conflicts},
              {"start", start},
              {"end", end},
              {"migration_cost", migration_cost},
              {"validation_cost", validation_cost},
              {"outcome", xmig::to_string(outcome)},
              {"error", error},
              {"timeline", tl}};
}

namespace {

const AttrRef kNoAttr{};

DataNode without_flags(DataNode n) {
  n.flags = Flags{};
  return n;
}

std::optional<std::int64_t> created_at(const AppDefinition& def, const DataNode& n) {
  const NodeTypeSpec* t = def.dag.type(n.id.type);
  if (t == nullptr) return std::nullopt;
  const TableSpec* ts = def.schema.table(t->primary_table());
  if (ts == nullptr || !ts->has("created_at")) return std::nullopt;
  const Value& v = n.get({ts->name, "created_at"});
  if (v.empty()) return std::nullopt;
  try {
    return std::stoll(v);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

/// Attributes a bag merge must not fill: identities and references.
std::set<AttrRef> merge_blocked(const AppDefinition& def, const std::string& type) {
  std::set<AttrRef> out;
  const NodeTypeSpec* t = def.dag.type(type);
  if (t == nullptr) return out;
  out = def.dag.reference_attrs(*t);
  for (const auto& table : t->member_tables) {
    if (const TableSpec* ts = def.schema.table(table)) out.insert({table, ts->key});
  }
  for (const auto& j : t->intra_node_joins) out.insert(j.right);
  return out;
}

bool writes_placeholder(const TransformChain& chain) {
  return std::any_of(chain.begin(), chain.end(),
                     [](const Transform& t) { return t.kind == TransformKind::kPlaceholder; });
}

/// Original identity behind a placeholder held by a bagged node, if any.
NodeId placeholder_target_or(const BagEntry& e, const AttrRef& attr) {
  const Value& v = e.node.get(attr);
  return is_placeholder(v) ? placeholder_target(v) : NodeId{};
}

bool reads_unsafely(const TransformChain& chain) {
  return std::any_of(chain.begin(), chain.end(), [](const Transform& t) {
    return t.kind == TransformKind::kNewId || t.kind == TransformKind::kPlaceholder;
  });
}

/// Removes the validator's failures from the destination into bags.
void bag_failures(const Tracker& tr, MetaStore& meta, AppStore& dst, Validator& v,
                  const UserId& fallback_owner, const std::string& mid,
                  MigrationReport* report) {
  auto res = v.run_phase2();
  for (const auto& f : res.failed) {
    auto n = dst.node(f);
    v.forget(f);
    if (!n) continue;
    UserId owner = fallback_owner;
    try {
      owner = tr.ownership_of_migrated(f);
    } catch (const NotTracked&) {
    }
    if (meta.bags.get(f)) meta.bags.take(meta.bags.get(f)->owner, f);
    meta.bags.put({owner, f, without_flags(*n), BagReason::kFailedValidation, false, mid});
    // Placeholder rows stay: they bring the entry back once the referent
    // arrives.
    dst.erase(f);
    if (report != nullptr) ++report->failed_validation;
  }
}

}  // namespace

// ---------------------------------------------------------------- run

class MigrationRun {
 public:
  MigrationRun(Engine& engine, const MigrationRequest& req, MigrationLease lease, AppStore& src,
               AppStore& dst, const SchemaMapping& mapping)
      : env_(engine.env_),
        tr_(engine.tracker_),
        meta_(*engine.env_.meta),
        req_(req),
        mid_(lease.migration_id),
        user_(lease.user),
        src_(src),
        dst_(dst),
        mapping_(mapping),
        meter_(src.meter()),
        validator_(dst, lease.migration_id, NodeId{}, req.seed, &engine.env_.meta->wal) {
    report_.migration_id = mid_;
    report_.user = user_;
    report_.type = req.type;
    report_.src = src.app_id();
    report_.dst = dst.app_id();
    for (auto& g : src.grants()) {
      if (g.grantee == user_) grants_.push_back(std::move(g));
    }
  }

  void execute();
  MigrationReport& report() { return report_; }

 private:
  enum class Disp {
    kPending,
    kMigrated,
    kNoMapping,
    kDangling,
    kNotShared,
    kWrongType,
    kMarked,
    kRetained
  };

  struct Prepared {
    NodeId source;
    DataNode node;
    std::map<AttrRef, AttrRef> provenance;
    std::set<AttrRef> forced;
    std::vector<Tracker::Relinked> relinked;
    const AppStore* from = nullptr;
  };

  void log(WalKind kind, json payload) { meta_.wal.append(mid_, kind, std::move(payload)); }
  std::int64_t now() const { return meter_ ? meter_->now() : 0; }

  UserId owner_of(const AppStore& s, const DataNode& n) const;
  void put_bag(BagEntry e);
  void put_partial(const NodeId& origin, const std::map<AttrRef, Value>& leftovers);
  void merge_bags(const NodeId& source_id, DataNode& node);
  bool bag_source_node(const NodeId& id, const UserId& owner, BagReason reason);

  Prepared prepare(const DataNode& n, const NodeMap& nm, const AppStore& from,
                   const std::set<NodeId>* taken);
  void finish_insert(const Prepared& p);
  void copy_grants(const Prepared& p);
  void relink_and_insert(Prepared& p, WalKind kind);
  void arrival(const NodeId& id);

  void copy_root(const DataNode& root);
  void process_member(const NodeId& id);
  void parallel_walk(const std::vector<NodeId>& ids, const std::set<NodeId>& members);
  void bag_phase2();
  void reinsert_same_app(const BagEntry& e);
  void run_deletion(const DataNode& root);
  void run_independent(const DataNode& root);
  void finish();

  void set_disp(const NodeId& id, Disp d) {
    std::lock_guard lock(mu_);
    auto it = disp_.find(id);
    if (it != disp_.end()) it->second = d;
  }
  void note_timeline(const NodeId& source, const NodeId& dest, bool invisible) {
    std::lock_guard lock(mu_);
    NodeTimeline& t = timeline_[source];
    t.source = source;
    if (!dest.empty()) t.dest = dest;
    if (invisible) t.source_invisible = now();
  }

  const EngineEnv& env_;
  const Tracker& tr_;
  MetaStore& meta_;
  MigrationRequest req_;
  std::string mid_;
  UserId user_;
  AppStore& src_;
  AppStore& dst_;
  const SchemaMapping& mapping_;
  std::shared_ptr<CostMeter> meter_;
  Validator validator_;
  std::vector<SharingGrant> grants_;
  std::map<AppId, std::vector<SharingGrant>> grant_cache_;
  NodeId dest_root_;
  std::map<AttrRef, Value> own_keys_;  // root attribute -> value on the user's root

  std::mutex mu_;  // guards report_, disp_, timeline_, grant_cache_
  MigrationReport report_;
  std::map<NodeId, Disp> disp_;
  std::map<NodeId, NodeTimeline> timeline_;
};

UserId MigrationRun::owner_of(const AppStore& s, const DataNode& n) const {
  // Nodes pointing at the migrating root need no lookup.
  if (&s == &src_) {
    const NodeTypeSpec* t = s.dag().type(n.id.type);
    if (t != nullptr && !t->owned_by.empty()) {
      const RootEdge& e = t->owned_by.front();
      auto it = own_keys_.find(e.root_attr);
      if (it != own_keys_.end() && !it->second.empty() && n.get(e.attr) == it->second) {
        return user_;
      }
    }
  }
  try {
    return tr_.canonical(resolve_owner(s, n));
  } catch (const OwnerUnresolvable&) {
  }
  const NodeTypeSpec* t = s.dag().type(n.id.type);
  if (t != nullptr && !t->owned_by.empty()) {
    const AttrRef& a = t->owned_by.front().attr;
    if (auto target = tr_.referent(s, n.id.type, a, n.get(a))) return tr_.canonical(*target);
  }
  return user_;
}

void MigrationRun::put_bag(BagEntry e) {
  if (auto old = meta_.bags.get(e.origin)) {
    log(WalKind::kBagTake, {{"entry", to_json(*old)}});
    meta_.bags.take(old->owner, old->origin);
  }
  log(WalKind::kBagPut, {{"entry", to_json(e)}});
  meta_.bags.put(std::move(e));
}

void MigrationRun::put_partial(const NodeId& origin, const std::map<AttrRef, Value>& leftovers) {
  DataNode d;
  d.id = origin;
  for (const auto& [a, v] : leftovers) {
    if (!v.empty()) d.rows[a.table][a.attr] = v;
  }
  if (d.rows.empty()) return;
  if (auto old = meta_.bags.get(origin)) {
    if (!old->partial) return;
    for (const auto& [table, row] : old->node.rows) {
      for (const auto& [attr, v] : row) d.rows[table].emplace(attr, v);
    }
  }
  put_bag({user_, origin, d, BagReason::kNoMapping, true, mid_});
  std::lock_guard lock(mu_);
  ++report_.partial_bags;
}

void MigrationRun::merge_bags(const NodeId& source_id, DataNode& node) {
  const std::set<AttrRef> blocked = merge_blocked(dst_.definition(), node.id.type);
  for (const auto& old : tr_.lineage_back(source_id)) {
    auto e = meta_.bags.get(old);
    if (!e || !e->partial) continue;

    // destination attribute -> (value, entry attribute it came from)
    std::map<AttrRef, std::pair<Value, AttrRef>> vals;
    if (old.app == dst_.app_id()) {
      for (const auto& [table, row] : e->node.rows) {
        for (const auto& [attr, v] : row) vals[{table, attr}] = {v, {table, attr}};
      }
    } else {
      const SchemaMapping* sm =
          env_.catalog != nullptr ? env_.catalog->find(old.app, dst_.app_id()) : nullptr;
      const NodeMap* nm = sm != nullptr ? sm->for_source(old.type) : nullptr;
      if (nm == nullptr) continue;
      auto read = [&](const AttrRef& r) { return e->node.get(r); };
      for (const auto& am : nm->attributes) {
        if (!am.from || reads_unsafely(am.chain)) continue;
        const Value& v = e->node.get(*am.from);
        if (v.empty()) continue;
        vals[am.to] = {evaluate(am.chain, v, read, [] { return std::string{}; }), *am.from};
      }
    }

    std::set<AttrRef> consumed;
    for (const auto& [to, vs] : vals) {
      const auto& [v, from] = vs;
      if (v.empty() || blocked.contains(to)) continue;
      auto table = node.rows.find(to.table);
      if (table == node.rows.end() || !table->second.contains(to.attr)) continue;
      const Value& cur = node.get(to);
      if (cur.empty()) {
        node.set(to, v);
      } else if (cur != v) {
        std::lock_guard lock(mu_);
        report_.merge_conflicts.push_back(node.id.str() + " " + to.str() + ": kept '" + cur +
                                          "', bag held '" + v + "'");
      }
      consumed.insert(from);
    }
    if (consumed.empty()) continue;

    BagEntry rest = *e;
    rest.node.rows.clear();
    for (const auto& [table, row] : e->node.rows) {
      for (const auto& [attr, v] : row) {
        if (!v.empty() && !consumed.contains({table, attr})) rest.node.rows[table][attr] = v;
      }
    }
    log(WalKind::kBagTake, {{"entry", to_json(*e)}});
    meta_.bags.take(e->owner, e->origin);
    if (!rest.node.rows.empty()) {
      log(WalKind::kBagPut, {{"entry", to_json(rest)}});
      meta_.bags.put(rest);
    }
    std::lock_guard lock(mu_);
    ++report_.merged_entries;
  }
}

bool MigrationRun::bag_source_node(const NodeId& id, const UserId& owner, BagReason reason) {
  auto n = src_.node(id);
  if (!n) return false;
  put_bag({owner, id, without_flags(*n), reason, false, mid_});
  log(WalKind::kDeleteNode, {{"app", src_.app_id()}, {"node", to_json(*n)}});
  src_.erase(id);
  set_disp(id, reason == BagReason::kNoMapping ? Disp::kNoMapping : Disp::kDangling);
  note_timeline(id, NodeId{}, true);
  std::lock_guard lock(mu_);
  ++report_.deleted;
  return true;
}

MigrationRun::Prepared MigrationRun::prepare(const DataNode& n, const NodeMap& nm,
                                             const AppStore& from,
                                             const std::set<NodeId>* taken) {
  if (tr_.lookup_current(n.id, dst_.app_id())) {
    std::lock_guard lock(mu_);
    ++report_.duplicates;
  }
  meta_.references.record(tr_.reference_rows(n, from, mid_));

  const NodeTypeSpec* to_type = dst_.dag().type(nm.to_node);
  if (to_type == nullptr) throw MappingError("destination type '" + nm.to_node + "' unknown");
  const std::string table = to_type->primary_table();
  Materialized m;
  for (int attempt = 0;; ++attempt) {
    m = materialize(nm, n, dst_.definition(), [&] { return dst_.fresh_key(table); });
    if (m.node.id.key.empty()) {
      throw MigrationAborted("mapping gives " + n.id.str() + " no destination key");
    }
    if (!dst_.contains(m.node.id) && (taken == nullptr || !taken->contains(m.node.id))) break;
    if (attempt + 1 >= kNewIdRetries) {
      throw MigrationAborted("no free destination key for " + n.id.str() + " after " +
                             std::to_string(kNewIdRetries) + " attempts");
    }
    std::lock_guard lock(mu_);
    ++report_.key_retries;
  }

  merge_bags(n.id, m.node);
  put_partial(n.id, m.leftovers);

  Prepared p;
  p.source = n.id;
  p.from = &from;
  for (const auto& am : nm.attributes) {
    if (writes_placeholder(am.chain)) p.forced.insert(am.to);
  }
  std::vector<AttributeChangeRow> rows;
  for (const auto& am : nm.attributes) {
    if (!am.from) continue;
    rows.push_back({mid_, n.id.app, dst_.app_id(), n.id, m.node.id, *am.from, n.get(*am.from),
                    m.node.get(am.to)});
  }
  if (rows.empty()) {
    const NodeTypeSpec* st = from.dag().type(n.id.type);
    const TableSpec* ts = st != nullptr ? from.definition().schema.table(st->primary_table()) : nullptr;
    AttrRef key = ts != nullptr ? AttrRef{ts->name, ts->key} : kNoAttr;
    rows.push_back({mid_, n.id.app, dst_.app_id(), n.id, m.node.id, key, n.id.key, m.node.id.key});
  }
  meta_.attributes.record(rows);

  p.node = std::move(m.node);
  p.node.flags = Flags{false, true, true};
  p.provenance = std::move(m.provenance);
  return p;
}

void MigrationRun::finish_insert(const Prepared& p) {
  for (const auto& r : p.relinked) {
    if (r.placeholder) meta_.placeholders.put(*r.placeholder);
  }
  for (const auto& r : tr_.pending_resolutions(p.node.id, dst_)) {
    log(WalKind::kRelink, {{"app", dst_.app_id()},
                           {"node", r.node.str()},
                           {"attr", r.attr.str()},
                           {"old", r.old_value},
                           {"row", to_json(r.row)}});
    tr_.apply(r, dst_);
  }
  copy_grants(p);

  // Nodes that failed validation for want of this one come back.
  std::vector<BagEntry> revived;
  for (const auto& original : tr_.lineage_back(p.node.id)) {
    for (const auto& row : meta_.placeholders.targeting(dst_.app_id(), original)) {
      if (dst_.contains(row.node)) continue;
      auto e = meta_.bags.get(row.node);
      if (e && !e->partial && e->reason == BagReason::kFailedValidation &&
          std::none_of(revived.begin(), revived.end(),
                       [&](const BagEntry& r) { return r.origin == e->origin; })) {
        revived.push_back(*e);
      }
    }
  }
  for (const auto& e : revived) {
    if (meta_.bags.get(e.origin)) reinsert_same_app(e);
  }
}

void MigrationRun::copy_grants(const Prepared& p) {
  if (p.from == nullptr || p.from->app_id() == dst_.app_id()) return;

  std::vector<SharingGrant> from_grants;
  {
    std::lock_guard lock(mu_);
    auto it = grant_cache_.find(p.from->app_id());
    if (it == grant_cache_.end()) it = grant_cache_.emplace(p.from->app_id(), p.from->grants()).first;
    from_grants = it->second;
  }
  DataNode probe;
  probe.id = p.source;
  if (auto n = p.from->node(p.source)) probe = *n;
  for (const auto& g : from_grants) {
    if (!g.covers(probe)) continue;
    SharingGrant c = g;
    c.node = p.node.id;
    c.node_type.clear();
    c.predicate.clear();
    c.migration_id = mid_;
    dst_.add_grant(std::move(c));
  }
}

void MigrationRun::relink_and_insert(Prepared& p, WalKind kind) {
  p.relinked = tr_.relink(p.node, dst_, p.provenance, p.source, p.forced, mid_);
  log(kind, {{"app", dst_.app_id()},
             {"nodes", json::array({p.node.id.str()})},
             {"sources", json::array({p.source.str()})}});
  dst_.insert(p.node);
  finish_insert(p);
}

void MigrationRun::arrival(const NodeId& id) {
  if (req_.validate_during) {
    validator_.on_arrival(id);
  } else {
    validator_.hold(id);
  }
}

void MigrationRun::copy_root(const DataNode& root) {
  const NodeMap* nm = mapping_.for_source(root.id.type);
  if (nm == nullptr) {
    throw MigrationAborted("no node map for root type '" + root.id.type + "' from " +
                           src_.app_id() + " to " + dst_.app_id());
  }
  Prepared p = prepare(root, *nm, src_, nullptr);
  dest_root_ = p.node.id;
  validator_.set_user_root(dest_root_);
  relink_and_insert(p, WalKind::kCopyRoot);
  note_timeline(root.id, dest_root_, false);
  arrival(dest_root_);
}

void MigrationRun::process_member(const NodeId& id) {
  auto n = src_.node(id);
  if (!n) return;
  for (const auto& s : sole_dependents(src_, id)) {
    auto sn = src_.node(s);
    if (sn) bag_source_node(s, owner_of(src_, *sn), BagReason::kDanglingSource);
  }
  const NodeMap* nm = mapping_.for_source(id.type);
  if (nm == nullptr) {
    bag_source_node(id, user_, BagReason::kNoMapping);
    return;
  }
  Prepared p = prepare(*n, *nm, src_, nullptr);
  relink_and_insert(p, WalKind::kMigrateNode);
  // Validate before the source copy goes, so a node whose parents are already
  // shown is never unavailable.
  arrival(p.node.id);
  log(WalKind::kDeleteNode, {{"app", src_.app_id()}, {"node", to_json(*n)}});
  src_.erase(id);
  set_disp(id, Disp::kMigrated);
  note_timeline(id, p.node.id, true);
  {
    std::lock_guard lock(mu_);
    ++report_.deleted;
  }
}

void MigrationRun::parallel_walk(const std::vector<NodeId>& ids, const std::set<NodeId>& members) {
  // A node may move once every member it reaches directly has moved.
  std::map<NodeId, std::size_t> blocking;
  std::map<NodeId, std::vector<NodeId>> unblocks;
  for (const auto& id : ids) {
    blocking[id] = 0;
    auto n = src_.node(id);
    if (!n) continue;
    for (const auto& c : traversal_children(src_, *n)) {
      if (c == id || !members.contains(c)) continue;
      ++blocking[id];
      unblocks[c].push_back(id);
    }
  }
  std::deque<NodeId> ready;
  for (const auto& id : ids) {
    if (blocking[id] == 0) ready.push_back(id);
  }

  std::mutex m;
  std::condition_variable cv;
  std::size_t finished = 0;
  std::exception_ptr err;
  auto worker = [&] {
    ScopedLane lane(Lane::kMigration);
    for (;;) {
      NodeId id;
      {
        std::unique_lock lock(m);
        cv.wait(lock, [&] { return err || !ready.empty() || finished == ids.size(); });
        if (err || ready.empty()) return;
        id = std::move(ready.front());
        ready.pop_front();
      }
      try {
        process_member(id);
      } catch (...) {
        std::lock_guard lock(m);
        if (!err) err = std::current_exception();
        cv.notify_all();
        return;
      }
      {
        std::lock_guard lock(m);
        ++finished;
        for (const auto& p : unblocks[id]) {
          if (--blocking[p] == 0) ready.push_back(p);
        }
      }
      cv.notify_all();
    }
  };
  std::vector<std::thread> pool;
  for (int i = 0; i < req_.workers; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

void MigrationRun::reinsert_same_app(const BagEntry& e) {
  DataNode n = e.node;
  n.flags = Flags{false, true, true};
  const NodeTypeSpec* t = dst_.dag().type(n.id.type);
  if (t == nullptr) return;
  meta_.references.record(tr_.reference_rows(e.node, dst_, mid_));
  if (dst_.contains(n.id)) {
    const TableSpec* ts = dst_.definition().schema.table(t->primary_table());
    std::string key;
    for (int attempt = 0;; ++attempt) {
      key = dst_.fresh_key(ts->name);
      if (!dst_.contains({n.id.app, n.id.type, key})) break;
      if (attempt + 1 >= kNewIdRetries) {
        throw MigrationAborted("no free key to restore " + e.origin.str());
      }
    }
    n.set({ts->name, ts->key}, key);
    for (const auto& j : t->intra_node_joins) n.set(j.right, n.get(j.left));
    n.id.key = key;
    meta_.attributes.record({{mid_, e.origin.app, dst_.app_id(), e.origin, n.id,
                              AttrRef{ts->name, ts->key}, e.origin.key, key}});
  }
  log(WalKind::kBagTake, {{"entry", to_json(e)}});
  meta_.bags.take(e.owner, e.origin);
  for (const auto& edge : ref_edges(dst_.dag(), e.node.id.type)) {
    for (const auto& row : meta_.placeholders.targeting(dst_.app_id(), placeholder_target_or(e, edge.attr))) {
      if (row.node != e.origin || row.attr != edge.attr) continue;
      log(WalKind::kRelink, {{"app", dst_.app_id()},
                             {"node", row.node.str()},
                             {"attr", row.attr.str()},
                             {"old", e.node.get(edge.attr)},
                             {"row", to_json(row)}});
      meta_.placeholders.erase(dst_.app_id(), row.node, row.attr);
    }
  }

  Prepared p;
  p.source = e.origin;
  p.from = &dst_;
  p.node = std::move(n);
  for (const auto& edge : ref_edges(dst_.dag(), p.node.id.type)) p.provenance[edge.attr] = edge.attr;
  relink_and_insert(p, WalKind::kMigrateNode);
  {
    std::lock_guard lock(mu_);
    ++report_.phase2_moved;
  }
  arrival(p.node.id);
}

void MigrationRun::bag_phase2() {
  for (const auto& e : meta_.bags.list(user_)) {
    if (e.partial) continue;
    if (e.origin.app == dst_.app_id()) {
      reinsert_same_app(e);
      continue;
    }
    const AppStore* from = tr_.store(e.origin.app);
    const SchemaMapping* sm =
        env_.catalog != nullptr ? env_.catalog->find(e.origin.app, dst_.app_id()) : nullptr;
    const NodeMap* nm = sm != nullptr ? sm->for_source(e.node.id.type) : nullptr;
    if (from == nullptr || nm == nullptr) continue;
    log(WalKind::kBagTake, {{"entry", to_json(e)}});
    meta_.bags.take(e.owner, e.origin);
    Prepared p = prepare(e.node, *nm, *from, nullptr);
    relink_and_insert(p, WalKind::kMigrateNode);
    {
      std::lock_guard lock(mu_);
      ++report_.phase2_moved;
    }
    arrival(p.node.id);
  }
}

void MigrationRun::run_deletion(const DataNode& root) {
  copy_root(root);

  std::set<NodeId> reach = reachable_from(src_, root.id);
  std::vector<DataNode> nodes = src_.read_many({reach.begin(), reach.end()});
  std::set<NodeId> members;
  std::set<NodeId> late;
  for (const auto& n : nodes) {
    CanMigrate cm = can_migrate(n, owner_of(src_, n), user_, req_.type, grants_);
    Disp d = Disp::kPending;
    if (cm == CanMigrate::kSkipNotShared) d = Disp::kNotShared;
    if (cm == CanMigrate::kSkipWrongType) d = Disp::kWrongType;
    disp_[n.id] = d;
    if (cm != CanMigrate::kYes) continue;
    auto at = created_at(src_.definition(), n);
    if (req_.cutoff && at && *at > *req_.cutoff) {
      late.insert(n.id);
    } else {
      members.insert(n.id);
    }
  }
  report_.considered = disp_.size();

  std::vector<NodeId> walk;
  for (const auto& step : deletion_order(src_, root.id, members)) {
    if (step.kind == StepKind::kMigrate) walk.push_back(step.id);
  }
  if (req_.workers > 1) {
    parallel_walk(walk, members);
  } else {
    for (const auto& id : walk) process_member(id);
  }

  // Whatever of the user's data is still here (nodes past the cutoff), and
  // anything left without its dependency parents, goes to a bag.
  for (const auto& id : reach) {
    auto n = src_.node(id);
    if (!n) continue;
    UserId owner = owner_of(src_, *n);
    if (owner == user_ || late.contains(id)) {
      for (const auto& s : sole_dependents(src_, id)) {
        if (auto sn = src_.node(s)) bag_source_node(s, owner_of(src_, *sn), BagReason::kDanglingSource);
      }
      bag_source_node(id, user_, BagReason::kDanglingSource);
      continue;
    }
    const NodeTypeSpec* t = src_.dag().type(id.type);
    bool has_ref = t != nullptr && std::any_of(t->depends_on.begin(), t->depends_on.end(),
                                               [&](const DependencyEdge& e) {
                                                 const Value& v = n->get(e.attr);
                                                 return !v.empty() && !is_placeholder(v);
                                               });
    if (has_ref && dependency_parents(src_, *n).empty()) {
      bag_source_node(id, owner, BagReason::kDanglingSource);
    }
  }

  bag_phase2();

  for (const auto& s : sole_dependents(src_, root.id)) {
    if (auto sn = src_.node(s)) bag_source_node(s, owner_of(src_, *sn), BagReason::kDanglingSource);
  }
  if (auto r = src_.node(root.id)) {
    log(WalKind::kDeleteNode, {{"app", src_.app_id()}, {"node", to_json(*r)}});
    src_.erase(root.id);
    note_timeline(root.id, dest_root_, true);
    std::lock_guard lock(mu_);
    ++report_.deleted;
  }
  finish();
}

void MigrationRun::run_independent(const DataNode& root) {
  if (root.flags.migrated) {
    if (auto cur = tr_.lookup_current(root.id, dst_.app_id())) {
      dest_root_ = *cur;
      validator_.set_user_root(dest_root_);
      note_timeline(root.id, dest_root_, false);
    }
  }
  if (dest_root_.empty()) copy_root(root);

  // Level-by-level discovery with one bulk read per edge and level.
  const DagSpec& dag = src_.dag();
  std::map<std::string, std::vector<DataNode>> frontier{{dag.root_type, {root}}};
  std::set<NodeId> seen{root.id};
  std::vector<DataNode> found;
  while (!frontier.empty()) {
    std::map<std::string, std::vector<DataNode>> next;
    auto take = [&](std::vector<DataNode> hits) {
      for (auto& h : hits) {
        if (!seen.insert(h.id).second) continue;
        found.push_back(h);
        next[h.id.type].push_back(std::move(h));
      }
    };
    for (const auto& t : dag.node_types) {
      for (const auto& e : t.depends_on) {
        auto it = frontier.find(e.parent_type);
        if (it == frontier.end()) continue;
        std::set<Value> values;
        for (const auto& p : it->second) {
          if (const Value& v = p.get(e.parent_attr); !v.empty()) values.insert(v);
        }
        if (!values.empty()) take(src_.find_by(t.type_name, e.attr, values));
      }
      auto roots = frontier.find(dag.root_type);
      if (roots == frontier.end()) continue;
      auto by_root = [&](const std::vector<RootEdge>& edges) {
        for (const auto& e : edges) {
          std::set<Value> values;
          for (const auto& r : roots->second) {
            if (const Value& v = r.get(e.root_attr); !v.empty()) values.insert(v);
          }
          if (!values.empty()) take(src_.find_by(t.type_name, e.attr, values));
        }
      };
      by_root(t.owned_by);
      by_root(t.shared_with);
    }
    frontier = std::move(next);
  }
  std::sort(found.begin(), found.end(),
            [](const DataNode& a, const DataNode& b) { return a.id < b.id; });
  report_.considered = found.size();

  std::vector<const DataNode*> movers;
  for (const auto& n : found) {
    Disp d = Disp::kPending;
    if (n.flags.migrated) {
      d = Disp::kMarked;
    } else {
      CanMigrate cm = can_migrate(n, owner_of(src_, n), user_, req_.type, grants_);
      auto at = created_at(src_.definition(), n);
      if (cm == CanMigrate::kSkipNotShared) {
        d = Disp::kNotShared;
      } else if (cm == CanMigrate::kSkipWrongType) {
        d = Disp::kWrongType;
      } else if (mapping_.for_source(n.id.type) == nullptr ||
                 (req_.cutoff && at && *at > *req_.cutoff)) {
        d = Disp::kRetained;
      } else {
        movers.push_back(&n);
      }
    }
    disp_[n.id] = d;
  }

  std::vector<Prepared> batch;
  batch.reserve(movers.size());
  std::set<NodeId> taken;
  for (const DataNode* n : movers) {
    batch.push_back(prepare(*n, *mapping_.for_source(n->id.type), src_, &taken));
    taken.insert(batch.back().node.id);
  }
  PendingNodes pending;
  for (const auto& p : batch) pending[p.node.id] = &p.node;
  for (auto& p : batch) {
    p.relinked = tr_.relink(p.node, dst_, p.provenance, p.source, p.forced, mid_, &pending);
  }

  if (!batch.empty()) {
    json ids = json::array();
    json sources = json::array();
    std::vector<DataNode> nodes;
    for (const auto& p : batch) {
      ids.push_back(p.node.id.str());
      sources.push_back(p.source.str());
      nodes.push_back(p.node);
    }
    log(WalKind::kMigrateNode, {{"app", dst_.app_id()}, {"nodes", ids}, {"sources", sources}});
    dst_.insert_many(std::move(nodes));
    for (const auto& p : batch) finish_insert(p);
  }

  json marks = json::array();
  std::vector<std::pair<NodeId, Flags>> flags;
  auto mark = [&](const DataNode& n) {
    marks.push_back({{"node", n.id.str()}, {"flags", to_json(n.flags)}});
    Flags f = n.flags;
    f.migrated = true;
    flags.emplace_back(n.id, f);
  };
  if (!root.flags.migrated) mark(root);
  for (const DataNode* n : movers) mark(*n);
  if (!flags.empty()) {
    log(WalKind::kMark, {{"app", src_.app_id()}, {"nodes", marks}});
    src_.set_flags_many(flags);
  }
  for (const auto& p : batch) {
    set_disp(p.source, Disp::kMigrated);
    note_timeline(p.source, p.node.id, false);
  }
  for (const auto& p : batch) arrival(p.node.id);

  bag_phase2();
  finish();
}

void MigrationRun::finish() {
  json waiting = json::array();
  for (const auto& id : validator_.waiting()) waiting.push_back(id.str());
  log(WalKind::kCommit, {{"dst", dst_.app_id()},
                         {"root", dest_root_.str()},
                         {"user", user_},
                         {"waiting", waiting}});
  if (env_.faults) env_.faults->disarm();
  validator_.set_wal(nullptr);
  bag_failures(tr_, meta_, dst_, validator_, user_, mid_, &report_);
  meta_.leases.commit(mid_);
}

void MigrationRun::execute() {
  ScopedLane lane(Lane::kMigration);
  const std::int64_t mig0 = meter_ ? meter_->total(Lane::kMigration) : 0;
  const std::int64_t val0 = meter_ ? meter_->total(Lane::kValidation) : 0;
  report_.start = now();

  auto root = src_.node(req_.user_root);
  if (!root) throw NotFound("user root " + req_.user_root.str() + " not found");
  for (const auto& t : src_.dag().node_types) {
    for (const auto& e : t.owned_by) own_keys_[e.root_attr] = root->get(e.root_attr);
  }
  if (req_.type == MigrationType::kIndependent) {
    run_independent(*root);
  } else {
    run_deletion(*root);
  }

  report_.end = now();
  report_.dest_root = dest_root_;
  if (meter_) {
    report_.migration_cost = meter_->total(Lane::kMigration) - mig0;
    report_.validation_cost = meter_->total(Lane::kValidation) - val0;
  }
  for (const auto& [id, d] : disp_) {
    switch (d) {
      case Disp::kMigrated: ++report_.migrated; break;
      case Disp::kNoMapping: ++report_.bagged_no_mapping; break;
      case Disp::kDangling: ++report_.bagged_dangling; break;
      case Disp::kNotShared: ++report_.skipped_not_shared; break;
      case Disp::kWrongType: ++report_.skipped_wrong_type; break;
      case Disp::kMarked: ++report_.skipped_marked; break;
      case Disp::kPending:
      case Disp::kRetained: ++report_.retained; break;
    }
  }
  std::map<NodeId, std::int64_t> shown;
  for (const auto& ev : validator_.events()) shown.emplace(ev.node, ev.time);
  for (auto& [id, t] : timeline_) {
    if (!t.dest.empty()) {
      auto it = shown.find(t.dest);
      if (it != shown.end()) t.displayed = it->second;
    }
    report_.timeline.push_back(t);
  }
}

// ---------------------------------------------------------------- engine

Engine::Engine(EngineEnv env) : env_(std::move(env)), tracker_(*env_.meta, env_.stores) {}

CanMigrate Engine::can_migrate(const AppStore& src, const DataNode& n, const UserId& user,
                               MigrationType type) const {
  UserId owner;
  try {
    owner = tracker_.canonical(resolve_owner(src, n));
  } catch (const OwnerUnresolvable&) {
    return CanMigrate::kSkipNotShared;
  }
  return xmig::can_migrate(n, owner, user, type, src.grants());
}

MigrationReport Engine::migrate(const MigrationRequest& req) {
  AppStore* src = tracker_.store(req.user_root.app);
  AppStore* dst = tracker_.store(req.dst);
  if (src == nullptr) throw std::invalid_argument("unknown application '" + req.user_root.app + "'");
  if (dst == nullptr) throw std::invalid_argument("unknown application '" + req.dst + "'");
  if (src == dst) throw std::invalid_argument("source and destination are both " + req.dst);
  if (req.user_root.type != src->dag().root_type) {
    throw std::invalid_argument(req.user_root.str() + " is not a user root");
  }
  if (!src->contains(req.user_root)) throw NotFound("user root " + req.user_root.str() + " not found");
  const SchemaMapping* mapping =
      env_.catalog != nullptr ? env_.catalog->find(src->app_id(), dst->app_id()) : nullptr;
  if (mapping == nullptr) {
    throw MappingError("no mapping from " + src->app_id() + " to " + dst->app_id());
  }

  MigrationLease lease = env_.meta->leases.acquire(tracker_.canonical(req.user_root), req.type);
  MigrationRun run(*this, req, lease, *src, *dst, *mapping);
  try {
    run.execute();
  } catch (const InjectedCrash&) {
    throw;
  } catch (const std::exception& e) {
    if (env_.faults) env_.faults->disarm();
    rollback(lease.migration_id);
    if (env_.faults) env_.faults->arm();
    MigrationReport& r = run.report();
    r.outcome = Outcome::kRolledBack;
    r.error = e.what();
    return r;
  }
  return run.report();
}

void Engine::rollback(const std::string& mid) {
  MetaStore& meta = *env_.meta;
  if (meta.wal.committed(mid)) {
    throw std::logic_error("migration " + mid + " is committed and cannot be rolled back");
  }
  ScopedLane lane(Lane::kOther);
  if (!meta.wal.aborted(mid)) {
    auto recs = meta.wal.scan(mid);
    auto flags_back = [&](const json& p, const json& item) {
      AppStore* s = tracker_.store(p.at("app").get<std::string>());
      NodeId id = NodeId::parse(item.at("node").get<std::string>());
      if (s != nullptr && s->contains(id)) s->set_flags(id, flags_from_json(item.at("flags")));
    };
    for (auto it = recs.rbegin(); it != recs.rend(); ++it) {
      const json& p = it->payload;
      switch (it->kind) {
        case WalKind::kCopyRoot:
        case WalKind::kMigrateNode: {
          AppStore* s = tracker_.store(p.at("app").get<std::string>());
          for (const auto& n : p.at("nodes")) {
            NodeId id = NodeId::parse(n.get<std::string>());
            if (s != nullptr && s->contains(id)) s->erase(id);
          }
          break;
        }
        case WalKind::kDeleteNode: {
          AppStore* s = tracker_.store(p.at("app").get<std::string>());
          DataNode n = node_from_json(p.at("node"));
          if (s != nullptr && !s->contains(n.id)) s->insert(std::move(n));
          break;
        }
        case WalKind::kBagPut: {
          BagEntry e = bag_entry_from_json(p.at("entry"));
          if (auto cur = meta.bags.get(e.origin)) meta.bags.take(cur->owner, e.origin);
          break;
        }
        case WalKind::kBagTake: {
          BagEntry e = bag_entry_from_json(p.at("entry"));
          if (auto cur = meta.bags.get(e.origin)) meta.bags.take(cur->owner, e.origin);
          meta.bags.put(std::move(e));
          break;
        }
        case WalKind::kRelink: {
          AppStore* s = tracker_.store(p.at("app").get<std::string>());
          NodeId id = NodeId::parse(p.at("node").get<std::string>());
          if (s != nullptr && s->contains(id)) {
            s->set_attr(id, AttrRef::parse(p.at("attr").get<std::string>()),
                        p.at("old").get<std::string>());
          }
          meta.placeholders.put(placeholder_row_from_json(p.at("row")));
          break;
        }
        case WalKind::kMark:
          for (const auto& item : p.at("nodes")) flags_back(p, item);
          break;
        case WalKind::kDisplayNode:
          flags_back(p, p);
          break;
        case WalKind::kCommit:
        case WalKind::kAbort:
          break;
      }
    }
    meta.wal.append(mid, WalKind::kAbort, json::object());
  }
  meta.references.remove_migration(mid);
  meta.attributes.remove_migration(mid);
  meta.placeholders.remove_migration(mid);
  for (auto& [app, s] : env_.stores) s->remove_grants(mid);
  if (meta.leases.lease(mid)) meta.leases.abort(mid);
}

std::vector<std::string> Engine::recover() {
  MetaStore& meta = *env_.meta;
  if (env_.faults) env_.faults->disarm();
  std::vector<std::string> out;
  for (const auto& lease : meta.leases.all()) {
    if (lease.state != LeaseState::kActive) continue;
    const std::string& mid = lease.migration_id;
    if (!meta.wal.committed(mid)) {
      rollback(mid);
      out.push_back(mid);
      continue;
    }
    json commit;
    for (const auto& r : meta.wal.scan(mid)) {
      if (r.kind == WalKind::kCommit) commit = r.payload;
    }
    AppStore* dst = tracker_.store(commit.at("dst").get<std::string>());
    if (dst != nullptr) {
      Validator v(*dst, mid, NodeId::parse(commit.at("root").get<std::string>()), 1);
      for (const auto& w : commit.at("waiting")) {
        NodeId id = NodeId::parse(w.get<std::string>());
        if (auto n = dst->node(id); n && n->flags.migration_flag) v.hold(id);
      }
      bag_failures(tracker_, meta, *dst, v, lease.user, mid, nullptr);
    }
    meta.leases.commit(mid);
    out.push_back(mid);
  }
  if (env_.faults) env_.faults->arm();
  return out;
}

}  // namespace xmig
