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

#include "xmig/store.h"

#include <algorithm>
#include <charconv>

namespace xmig {

using nlohmann::json;

namespace {

thread_local Lane t_lane = Lane::kOther;

std::optional<std::uint64_t> numeric(const std::string& s) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace

// ---------------------------------------------------------------- clock

Lane CostMeter::lane() { return t_lane; }
void CostMeter::set_lane(Lane lane) { t_lane = lane; }

void CostMeter::charge(std::size_t rows, std::int64_t blob_bytes) {
  std::int64_t c = 0;
  switch (t_lane) {
    case Lane::kMigration:
      c = params_.round_trip + params_.per_row * static_cast<std::int64_t>(rows) +
          blob_bytes / params_.blob_bytes_per_unit;
      break;
    case Lane::kValidation:
      c = params_.local_op;
      break;
    case Lane::kOther:
      return;
  }
  now_ += c;
  lanes_[static_cast<int>(t_lane)] += c;
}

// ---------------------------------------------------------------- faults

void FaultInjector::on_wal_append() {
  std::uint64_t n = ++wal_appends_;
  if (armed_ && wal_crash_at_ != 0 && n == wal_crash_at_) {
    throw InjectedCrash("crash after log append " + std::to_string(n));
  }
}

void FaultInjector::on_store_mutation(const MutationEvent& ev) {
  if (mutation_observer) mutation_observer(ev);
  std::uint64_t n = ++store_mutations_;
  if (armed_ && store_fail_at_ != 0 && n == store_fail_at_) {
    throw StoreFailure("store mutation " + std::to_string(n) + " failed on " + ev.node.str());
  }
}

// ---------------------------------------------------------------- app store

AppStore::AppStore(AppDefinition def, std::shared_ptr<CostMeter> meter,
                   std::shared_ptr<FaultInjector> faults)
    : def_(std::move(def)), meter_(std::move(meter)), faults_(std::move(faults)) {
  const DagSpec& dag = def_.dag;
  auto add = [&](const std::string& type, const AttrRef& a) {
    auto& v = indexed_[type];
    if (std::find(v.begin(), v.end(), a) == v.end()) v.push_back(a);
  };
  for (const auto& t : dag.node_types) {
    const TableSpec* pt = def_.schema.table(t.primary_table());
    if (pt != nullptr) add(t.type_name, AttrRef{pt->name, pt->key});
    for (const auto& e : t.depends_on) {
      add(t.type_name, e.attr);
      add(e.parent_type, e.parent_attr);
    }
    for (const auto& e : t.owned_by) {
      add(t.type_name, e.attr);
      add(dag.root_type, e.root_attr);
    }
    for (const auto& e : t.shared_with) {
      add(t.type_name, e.attr);
      add(dag.root_type, e.root_attr);
    }
  }
}

AppStore::IndexKey AppStore::index_key(const std::string& type, const AttrRef& attr,
                                       const Value& v) {
  std::string k;
  k.reserve(type.size() + attr.table.size() + attr.attr.size() + v.size() + 3);
  k += type;
  k += '\x1f';
  k += attr.table;
  k += '.';
  k += attr.attr;
  k += '\x1f';
  k += v;
  return k;
}

void AppStore::index_locked(const DataNode& n, bool add) {
  auto it = indexed_.find(n.id.type);
  if (it == indexed_.end()) return;
  for (const auto& a : it->second) {
    const Value& v = n.get(a);
    if (v.empty()) continue;
    IndexKey k = index_key(n.id.type, a, v);
    if (add) {
      index_[k].insert(n.id);
    } else {
      auto f = index_.find(k);
      if (f != index_.end()) {
        f->second.erase(n.id);
        if (f->second.empty()) index_.erase(f);
      }
    }
  }
}

void AppStore::before_mutation(MutationKind kind, const NodeId& id) {
  if (faults_) faults_->on_store_mutation(MutationEvent{app_id(), kind, id});
}

void AppStore::journal_locked(MutationKind kind, const DataNode& n) {
  static std::atomic<std::uint64_t> seq{0};
  if (!journal_) return;
  journal_(StoreEvent{++seq, meter_ ? meter_->now() : 0, app_id(), kind, n});
}

void AppStore::charge(std::size_t rows, std::int64_t blob) const {
  if (meter_) meter_->charge(rows, blob);
}

std::int64_t AppStore::blob_bytes_locked(const DataNode& n) const {
  std::int64_t total = 0;
  for (const auto& [table, row] : n.rows) {
    const TableSpec* t = def_.schema.table(table);
    if (t == nullptr || t->blob_size_attr.empty()) continue;
    auto it = row.find(t->blob_size_attr);
    if (it == row.end()) continue;
    if (auto v = numeric(it->second)) total += static_cast<std::int64_t>(*v);
  }
  return total;
}

std::int64_t AppStore::blob_bytes(const DataNode& n) const { return blob_bytes_locked(n); }

std::optional<DataNode> AppStore::node(const NodeId& id) const {
  std::optional<DataNode> out;
  {
    std::shared_lock lock(mu_);
    auto it = nodes_.find(id);
    if (it != nodes_.end()) out = it->second;
  }
  charge(out ? out->rows.size() : 0, out ? blob_bytes_locked(*out) : 0);
  return out;
}

std::optional<NodeId> AppStore::find(const std::string& type, const AttrRef& attr,
                                     const Value& value) const {
  auto all = find_all(type, attr, value);
  if (all.empty()) return std::nullopt;
  return all.front();
}

std::vector<NodeId> AppStore::find_all(const std::string& type, const AttrRef& attr,
                                       const Value& value) const {
  std::vector<NodeId> out;
  {
    std::shared_lock lock(mu_);
    auto idx = indexed_.find(type);
    bool indexed = idx != indexed_.end() &&
                   std::find(idx->second.begin(), idx->second.end(), attr) != idx->second.end();
    if (indexed) {
      auto it = index_.find(index_key(type, attr, value));
      if (it != index_.end()) out.assign(it->second.begin(), it->second.end());
    } else {
      for (const auto& [id, n] : nodes_) {
        if (id.type == type && n.get(attr) == value) out.push_back(id);
      }
    }
  }
  charge(out.size(), 0);
  return out;
}

std::optional<DataNode> AppStore::read_visible(const NodeId& id) const {
  auto n = node(id);
  if (n && !n->flags.visible()) return std::nullopt;
  return n;
}

bool AppStore::contains(const NodeId& id) const {
  std::shared_lock lock(mu_);
  return nodes_.contains(id);
}

std::vector<NodeId> AppStore::ids(std::string_view type) const {
  std::shared_lock lock(mu_);
  std::vector<NodeId> out;
  for (const auto& [id, n] : nodes_) {
    if (type.empty() || id.type == type) out.push_back(id);
  }
  return out;
}

std::size_t AppStore::size() const {
  std::shared_lock lock(mu_);
  return nodes_.size();
}

std::vector<DataNode> AppStore::all_nodes() const {
  std::shared_lock lock(mu_);
  std::vector<DataNode> out;
  out.reserve(nodes_.size());
  for (const auto& [id, n] : nodes_) out.push_back(n);
  return out;
}

void AppStore::insert(DataNode n) {
  std::int64_t blob = blob_bytes_locked(n);
  std::size_t rows = n.rows.size();
  {
    std::unique_lock lock(mu_);
    if (nodes_.contains(n.id)) throw KeyCollision(n.id.str() + " already exists");
    before_mutation(MutationKind::kInsert, n.id);
    index_locked(n, true);
    journal_locked(MutationKind::kInsert, n);
    NodeId id = n.id;
    nodes_.emplace(std::move(id), std::move(n));
  }
  charge(rows, blob);
}

DataNode AppStore::erase(const NodeId& id) {
  DataNode pre;
  {
    std::unique_lock lock(mu_);
    auto it = nodes_.find(id);
    if (it == nodes_.end()) throw NotFound(id.str() + " not found");
    before_mutation(MutationKind::kErase, id);
    pre = std::move(it->second);
    nodes_.erase(it);
    index_locked(pre, false);
    journal_locked(MutationKind::kErase, pre);
  }
  charge(1, 0);
  return pre;
}

Flags AppStore::set_flags(const NodeId& id, Flags f) {
  Flags prev;
  {
    std::unique_lock lock(mu_);
    auto it = nodes_.find(id);
    if (it == nodes_.end()) throw NotFound(id.str() + " not found");
    before_mutation(MutationKind::kFlags, id);
    prev = it->second.flags;
    it->second.flags = f;
    journal_locked(MutationKind::kFlags, it->second);
  }
  charge(1, 0);
  return prev;
}

bool AppStore::compare_and_set_flags(const NodeId& id, Flags expected, Flags desired) {
  bool ok = false;
  {
    std::unique_lock lock(mu_);
    auto it = nodes_.find(id);
    if (it != nodes_.end() && it->second.flags == expected) {
      before_mutation(MutationKind::kFlags, id);
      it->second.flags = desired;
      journal_locked(MutationKind::kFlags, it->second);
      ok = true;
    }
  }
  charge(1, 0);
  return ok;
}

Value AppStore::set_attr(const NodeId& id, const AttrRef& attr, Value v) {
  Value prev;
  {
    std::unique_lock lock(mu_);
    auto it = nodes_.find(id);
    if (it == nodes_.end()) throw NotFound(id.str() + " not found");
    before_mutation(MutationKind::kAttr, id);
    index_locked(it->second, false);
    prev = it->second.get(attr);
    it->second.set(attr, std::move(v));
    index_locked(it->second, true);
    journal_locked(MutationKind::kAttr, it->second);
  }
  charge(1, 0);
  return prev;
}

std::vector<DataNode> AppStore::find_by(const std::string& type, const AttrRef& attr,
                                        const std::set<Value>& values) const {
  std::vector<DataNode> out;
  std::int64_t blob = 0;
  {
    std::shared_lock lock(mu_);
    std::set<NodeId> hits;
    auto idx = indexed_.find(type);
    bool indexed = idx != indexed_.end() &&
                   std::find(idx->second.begin(), idx->second.end(), attr) != idx->second.end();
    if (indexed) {
      for (const auto& v : values) {
        auto it = index_.find(index_key(type, attr, v));
        if (it != index_.end()) hits.insert(it->second.begin(), it->second.end());
      }
    } else {
      for (const auto& [id, n] : nodes_) {
        if (id.type == type && values.contains(n.get(attr))) hits.insert(id);
      }
    }
    for (const auto& id : hits) {
      out.push_back(nodes_.at(id));
      blob += blob_bytes_locked(out.back());
    }
  }
  charge(out.size(), blob);
  return out;
}

std::vector<DataNode> AppStore::read_many(const std::vector<NodeId>& ids) const {
  std::vector<DataNode> out;
  std::int64_t blob = 0;
  {
    std::shared_lock lock(mu_);
    for (const auto& id : ids) {
      auto it = nodes_.find(id);
      if (it == nodes_.end()) continue;
      out.push_back(it->second);
      blob += blob_bytes_locked(it->second);
    }
  }
  charge(out.size(), blob);
  return out;
}

void AppStore::insert_many(std::vector<DataNode> nodes) {
  std::int64_t blob = 0;
  std::size_t rows = 0;
  {
    std::unique_lock lock(mu_);
    for (const auto& n : nodes) {
      if (nodes_.contains(n.id)) throw KeyCollision(n.id.str() + " already exists");
    }
    for (auto& n : nodes) {
      before_mutation(MutationKind::kInsert, n.id);
      blob += blob_bytes_locked(n);
      rows += n.rows.size();
      index_locked(n, true);
      journal_locked(MutationKind::kInsert, n);
      NodeId id = n.id;
      nodes_.emplace(std::move(id), std::move(n));
    }
  }
  charge(rows, blob);
}

void AppStore::set_flags_many(const std::vector<std::pair<NodeId, Flags>>& flags) {
  {
    std::unique_lock lock(mu_);
    for (const auto& [id, f] : flags) {
      auto it = nodes_.find(id);
      if (it == nodes_.end()) throw NotFound(id.str() + " not found");
      before_mutation(MutationKind::kFlags, id);
      it->second.flags = f;
      journal_locked(MutationKind::kFlags, it->second);
    }
  }
  charge(flags.size(), 0);
}

std::string AppStore::fresh_key(const std::string& table) {
  std::unique_lock lock(mu_);
  auto it = next_key_.find(table);
  if (it == next_key_.end()) {
    std::uint64_t max = 0;
    const TableSpec* t = def_.schema.table(table);
    if (t != nullptr) {
      for (const auto& [id, n] : nodes_) {
        auto r = n.rows.find(table);
        if (r == n.rows.end()) continue;
        auto k = r->second.find(t->key);
        if (k == r->second.end()) continue;
        if (auto v = numeric(k->second)) max = std::max(max, *v);
      }
    }
    it = next_key_.emplace(table, std::max(max + 1, key_floor_)).first;
  }
  return std::to_string(it->second++);
}

void AppStore::set_key_floor(std::uint64_t floor) {
  std::unique_lock lock(mu_);
  key_floor_ = std::max<std::uint64_t>(floor, 1);
  for (auto& [table, next] : next_key_) next = std::max(next, key_floor_);
}

void AppStore::add_grant(SharingGrant g) {
  std::unique_lock lock(mu_);
  if (std::find(grants_.begin(), grants_.end(), g) == grants_.end()) {
    grants_.push_back(std::move(g));
  }
}

std::vector<SharingGrant> AppStore::grants() const {
  std::shared_lock lock(mu_);
  return grants_;
}

std::size_t AppStore::remove_grants(const std::string& migration_id) {
  std::unique_lock lock(mu_);
  return std::erase_if(grants_,
                       [&](const SharingGrant& g) { return g.migration_id == migration_id; });
}

json AppStore::snapshot() const {
  std::shared_lock lock(mu_);
  json nodes = json::array();
  for (const auto& [id, n] : nodes_) nodes.push_back(to_json(n));
  json grants = json::array();
  for (const auto& g : grants_) grants.push_back(to_json(g));
  return json{{"app", app_id()},
              {"nodes", nodes},
              {"grants", grants},
              {"next_key", next_key_},
              {"key_floor", key_floor_}};
}

void AppStore::restore(const json& snap) {
  std::unique_lock lock(mu_);
  nodes_.clear();
  index_.clear();
  grants_.clear();
  next_key_.clear();
  for (const auto& jn : snap.at("nodes")) {
    DataNode n = node_from_json(jn);
    index_locked(n, true);
    NodeId id = n.id;
    nodes_.emplace(std::move(id), std::move(n));
  }
  for (const auto& jg : snap.at("grants")) grants_.push_back(grant_from_json(jg));
  if (snap.contains("next_key")) {
    next_key_ = snap.at("next_key").get<std::map<std::string, std::uint64_t>>();
  }
  key_floor_ = snap.value("key_floor", std::uint64_t{1});
}

bool AppStore::same_content(const AppStore& other) const {
  std::shared_lock a(mu_);
  std::shared_lock b(other.mu_);
  if (nodes_ != other.nodes_) return false;
  auto ga = grants_;
  auto gb = other.grants_;
  auto key = [](const SharingGrant& g) { return to_json(g).dump(); };
  auto cmp = [&](const SharingGrant& x, const SharingGrant& y) { return key(x) < key(y); };
  std::sort(ga.begin(), ga.end(), cmp);
  std::sort(gb.begin(), gb.end(), cmp);
  return ga == gb;
}

// ---------------------------------------------------------------- references

void ReferenceTable::record(const std::vector<ReferenceRow>& rows) {
  std::lock_guard lock(mu_);
  for (const auto& r : rows) {
    rows_.push_back(r);
    latest_[{r.from_node, r.from_attr}] = rows_.size() - 1;
    by_from_[r.from_node].push_back(rows_.size() - 1);
  }
}

std::optional<ReferenceRow> ReferenceTable::lookup(const NodeId& from, const AttrRef& attr) const {
  std::lock_guard lock(mu_);
  auto it = latest_.find({from, attr});
  if (it == latest_.end()) return std::nullopt;
  return rows_[it->second];
}

std::vector<ReferenceRow> ReferenceTable::rows_from(const NodeId& from) const {
  std::lock_guard lock(mu_);
  std::vector<ReferenceRow> out;
  auto it = by_from_.find(from);
  if (it == by_from_.end()) return out;
  for (auto i : it->second) out.push_back(rows_[i]);
  return out;
}

std::vector<ReferenceRow> ReferenceTable::all() const {
  std::lock_guard lock(mu_);
  return rows_;
}

std::size_t ReferenceTable::remove_migration(const std::string& migration_id) {
  std::lock_guard lock(mu_);
  std::size_t n =
      std::erase_if(rows_, [&](const ReferenceRow& r) { return r.migration_id == migration_id; });
  if (n > 0) rebuild_locked();
  return n;
}

void ReferenceTable::rebuild_locked() {
  latest_.clear();
  by_from_.clear();
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    latest_[{rows_[i].from_node, rows_[i].from_attr}] = i;
    by_from_[rows_[i].from_node].push_back(i);
  }
}

// ---------------------------------------------------------------- attribute changes

void AttributeTable::record(const std::vector<AttributeChangeRow>& rows) {
  std::lock_guard lock(mu_);
  for (const auto& r : rows) {
    if (!unique_.insert({r.migration_id, r.old_node, r.attr}).second) continue;
    rows_.push_back(r);
    index_locked(rows_.size() - 1);
  }
}

void AttributeTable::index_locked(std::size_t i) {
  const AttributeChangeRow& r = rows_[i];
  by_old_[r.old_node].push_back(i);
  if (r.old_node == r.new_node) return;
  auto& fwd = forward_[r.old_node];
  if (std::find(fwd.begin(), fwd.end(), r.new_node) == fwd.end()) fwd.push_back(r.new_node);
  backward_.emplace(r.new_node, r.old_node);
}

std::optional<NodeId> AttributeTable::lookup_new_identity(const NodeId& old_node,
                                                          const std::string& migration_id) const {
  std::lock_guard lock(mu_);
  auto it = by_old_.find(old_node);
  if (it == by_old_.end()) return std::nullopt;
  for (auto i = it->second.rbegin(); i != it->second.rend(); ++i) {
    const AttributeChangeRow& r = rows_[*i];
    if (migration_id.empty() || r.migration_id == migration_id) return r.new_node;
  }
  return std::nullopt;
}

std::optional<NodeId> AttributeTable::lookup_old_identity(const NodeId& new_node) const {
  std::lock_guard lock(mu_);
  auto it = backward_.find(new_node);
  if (it == backward_.end()) return std::nullopt;
  return it->second;
}

std::vector<NodeId> AttributeTable::successors(const NodeId& old_node) const {
  std::lock_guard lock(mu_);
  auto it = forward_.find(old_node);
  if (it == forward_.end()) return {};
  return it->second;
}

std::vector<AttributeChangeRow> AttributeTable::rows_for(const NodeId& old_node) const {
  std::lock_guard lock(mu_);
  std::vector<AttributeChangeRow> out;
  auto it = by_old_.find(old_node);
  if (it == by_old_.end()) return out;
  for (auto i : it->second) out.push_back(rows_[i]);
  return out;
}

std::vector<AttributeChangeRow> AttributeTable::all() const {
  std::lock_guard lock(mu_);
  return rows_;
}

std::size_t AttributeTable::remove_migration(const std::string& migration_id) {
  std::lock_guard lock(mu_);
  std::size_t n = std::erase_if(
      rows_, [&](const AttributeChangeRow& r) { return r.migration_id == migration_id; });
  if (n > 0) rebuild_locked();
  return n;
}

void AttributeTable::rebuild_locked() {
  unique_.clear();
  by_old_.clear();
  forward_.clear();
  backward_.clear();
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    unique_.insert({rows_[i].migration_id, rows_[i].old_node, rows_[i].attr});
    index_locked(i);
  }
}

// ---------------------------------------------------------------- placeholders

void PlaceholderTable::put(PlaceholderRow row) {
  std::lock_guard lock(mu_);
  Key key = std::make_tuple(row.app, row.node, row.attr);
  auto it = rows_.find(key);
  if (it != rows_.end()) by_original_[{it->second.app, it->second.original}].erase(key);
  by_original_[{row.app, row.original}].insert(key);
  rows_[key] = std::move(row);
}

void PlaceholderTable::erase(const AppId& app, const NodeId& node, const AttrRef& attr) {
  std::lock_guard lock(mu_);
  Key key = std::make_tuple(app, node, attr);
  auto it = rows_.find(key);
  if (it == rows_.end()) return;
  by_original_[{it->second.app, it->second.original}].erase(key);
  rows_.erase(it);
}

std::vector<PlaceholderRow> PlaceholderTable::in_app(const AppId& app) const {
  std::lock_guard lock(mu_);
  std::vector<PlaceholderRow> out;
  for (const auto& [k, r] : rows_) {
    if (r.app == app) out.push_back(r);
  }
  return out;
}

std::vector<PlaceholderRow> PlaceholderTable::targeting(const AppId& app,
                                                        const NodeId& original) const {
  std::lock_guard lock(mu_);
  std::vector<PlaceholderRow> out;
  auto it = by_original_.find({app, original});
  if (it == by_original_.end()) return out;
  for (const auto& k : it->second) out.push_back(rows_.at(k));
  return out;
}

std::vector<PlaceholderRow> PlaceholderTable::all() const {
  std::lock_guard lock(mu_);
  std::vector<PlaceholderRow> out;
  for (const auto& [k, r] : rows_) out.push_back(r);
  return out;
}

std::size_t PlaceholderTable::remove_migration(const std::string& migration_id) {
  std::lock_guard lock(mu_);
  std::size_t n = 0;
  for (auto it = rows_.begin(); it != rows_.end();) {
    if (it->second.migration_id == migration_id) {
      by_original_[{it->second.app, it->second.original}].erase(it->first);
      it = rows_.erase(it);
      ++n;
    } else {
      ++it;
    }
  }
  return n;
}

// ---------------------------------------------------------------- bags

std::string to_string(BagReason r) {
  switch (r) {
    case BagReason::kNoMapping:
      return "no_mapping";
    case BagReason::kDanglingSource:
      return "dangling_source";
    case BagReason::kFailedValidation:
      return "failed_validation";
  }
  return "?";
}

BagReason bag_reason_from_string(std::string_view s) {
  if (s == "no_mapping") return BagReason::kNoMapping;
  if (s == "dangling_source") return BagReason::kDanglingSource;
  if (s == "failed_validation") return BagReason::kFailedValidation;
  throw std::invalid_argument("unknown bag reason '" + std::string(s) + "'");
}

bool BagStore::put(BagEntry e) {
  std::lock_guard lock(mu_);
  NodeId key = e.origin;
  return entries_.emplace(std::move(key), std::move(e)).second;
}

std::vector<BagEntry> BagStore::list(const UserId& owner) const {
  std::lock_guard lock(mu_);
  std::vector<BagEntry> out;
  for (const auto& [k, e] : entries_) {
    if (e.owner == owner) out.push_back(e);
  }
  return out;
}

std::optional<BagEntry> BagStore::get(const NodeId& origin) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(origin);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

BagEntry BagStore::take(const UserId& owner, const NodeId& origin) {
  std::lock_guard lock(mu_);
  auto it = entries_.find(origin);
  if (it == entries_.end() || it->second.owner != owner) {
    throw NotFound("no bag entry " + origin.str() + " for " + owner);
  }
  BagEntry e = std::move(it->second);
  entries_.erase(it);
  return e;
}

std::vector<BagEntry> BagStore::all() const {
  std::lock_guard lock(mu_);
  std::vector<BagEntry> out;
  for (const auto& [k, e] : entries_) out.push_back(e);
  return out;
}

std::size_t BagStore::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

// ---------------------------------------------------------------- wal

namespace {

constexpr std::pair<WalKind, std::string_view> kWalKinds[] = {
    {WalKind::kCopyRoot, "copy_root"},   {WalKind::kMigrateNode, "migrate_node"},
    {WalKind::kBagPut, "bag_put"},       {WalKind::kBagTake, "bag_take"},
    {WalKind::kRelink, "relink"},        {WalKind::kMark, "mark"},
    {WalKind::kDeleteNode, "delete_node"}, {WalKind::kDisplayNode, "display_node"},
    {WalKind::kCommit, "commit"},        {WalKind::kAbort, "abort"},
};

}  // namespace

std::string to_string(WalKind k) {
  for (const auto& [kind, name] : kWalKinds) {
    if (kind == k) return std::string(name);
  }
  return "?";
}

WalKind wal_kind_from_string(std::string_view s) {
  for (const auto& [kind, name] : kWalKinds) {
    if (name == s) return kind;
  }
  throw std::invalid_argument("unknown log record kind '" + std::string(s) + "'");
}

std::uint64_t Wal::append(const std::string& migration_id, WalKind kind, json payload) {
  std::uint64_t seq = 0;
  {
    std::lock_guard lock(mu_);
    auto& recs = log_[migration_id];
    if (!recs.empty() &&
        (recs.back().kind == WalKind::kCommit || recs.back().kind == WalKind::kAbort)) {
      throw WalSealed("log for " + migration_id + " is sealed");
    }
    seq = recs.empty() ? 1 : recs.back().seq + 1;
    recs.push_back(WalRecord{migration_id, seq, kind, std::move(payload)});
    order_.emplace_back(migration_id, recs.size() - 1);
  }
  if (faults_) faults_->on_wal_append();
  return seq;
}

std::vector<WalRecord> Wal::scan(const std::string& migration_id) const {
  std::lock_guard lock(mu_);
  auto it = log_.find(migration_id);
  if (it == log_.end()) return {};
  return it->second;
}

bool Wal::sealed(const std::string& migration_id) const {
  return committed(migration_id) || aborted(migration_id);
}

bool Wal::committed(const std::string& migration_id) const {
  std::lock_guard lock(mu_);
  auto it = log_.find(migration_id);
  if (it == log_.end()) return false;
  return std::any_of(it->second.begin(), it->second.end(),
                     [](const WalRecord& r) { return r.kind == WalKind::kCommit; });
}

bool Wal::aborted(const std::string& migration_id) const {
  std::lock_guard lock(mu_);
  auto it = log_.find(migration_id);
  return it != log_.end() && !it->second.empty() && it->second.back().kind == WalKind::kAbort;
}

std::vector<std::string> Wal::migrations() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [m, recs] : log_) out.push_back(m);
  return out;
}

std::vector<WalRecord> Wal::all() const {
  std::lock_guard lock(mu_);
  std::vector<WalRecord> out;
  for (const auto& [m, i] : order_) out.push_back(log_.at(m)[i]);
  return out;
}

// ---------------------------------------------------------------- leases

json Wal::to_json() const {
  json out = json::array();
  for (const auto& r : all()) {
    out.push_back({{"migration_id", r.migration_id},
                   {"seq", r.seq},
                   {"kind", to_string(r.kind)},
                   {"payload", r.payload}});
  }
  return out;
}

void Wal::load(const json& j) {
  std::lock_guard lock(mu_);
  log_.clear();
  order_.clear();
  for (const auto& r : j) {
    auto mid = r.at("migration_id").get<std::string>();
    auto& recs = log_[mid];
    recs.push_back(WalRecord{mid, r.at("seq").get<std::uint64_t>(),
                             wal_kind_from_string(r.at("kind").get<std::string>()),
                             r.at("payload")});
    order_.emplace_back(mid, recs.size() - 1);
  }
}

MigrationLease LeaseRegistry::acquire(const UserId& user, MigrationType type) {
  std::lock_guard lock(mu_);
  if (active_.contains(user)) {
    throw LeaseDenied(user + " already has migration " + active_.at(user) + " in progress");
  }
  MigrationLease l{user, "m" + std::to_string(next_++), type, LeaseState::kActive};
  active_[user] = l.migration_id;
  leases_[l.migration_id] = l;
  return l;
}

void LeaseRegistry::commit(const std::string& migration_id) {
  std::lock_guard lock(mu_);
  auto it = leases_.find(migration_id);
  if (it == leases_.end()) throw NotFound("no lease " + migration_id);
  it->second.state = LeaseState::kCommitted;
  active_.erase(it->second.user);
}

void LeaseRegistry::abort(const std::string& migration_id) {
  std::lock_guard lock(mu_);
  auto it = leases_.find(migration_id);
  if (it == leases_.end()) throw NotFound("no lease " + migration_id);
  if (it->second.state == LeaseState::kActive) it->second.state = LeaseState::kAborted;
  auto a = active_.find(it->second.user);
  if (a != active_.end() && a->second == migration_id) active_.erase(a);
}

namespace {

std::string lease_state_str(LeaseState s) {
  switch (s) {
    case LeaseState::kActive: return "active";
    case LeaseState::kCommitted: return "committed";
    case LeaseState::kAborted: return "aborted";
  }
  return "active";
}

LeaseState lease_state_of(std::string_view s) {
  if (s == "committed") return LeaseState::kCommitted;
  if (s == "aborted") return LeaseState::kAborted;
  if (s == "active") return LeaseState::kActive;
  throw std::invalid_argument("unknown lease state '" + std::string(s) + "'");
}

}  // namespace

json LeaseRegistry::to_json() const {
  std::lock_guard lock(mu_);
  json leases = json::array();
  for (const auto& [mid, l] : leases_) {
    leases.push_back({{"user", l.user},
                      {"migration_id", l.migration_id},
                      {"type", xmig::to_string(l.type)},
                      {"state", lease_state_str(l.state)}});
  }
  return json{{"next", next_}, {"leases", leases}};
}

void LeaseRegistry::load(const json& j) {
  std::lock_guard lock(mu_);
  leases_.clear();
  active_.clear();
  next_ = j.at("next").get<std::uint64_t>();
  for (const auto& jl : j.at("leases")) {
    MigrationLease l{jl.at("user").get<std::string>(), jl.at("migration_id").get<std::string>(),
                     migration_type_from_string(jl.at("type").get<std::string>()),
                     lease_state_of(jl.at("state").get<std::string>())};
    if (l.state == LeaseState::kActive) active_[l.user] = l.migration_id;
    leases_[l.migration_id] = l;
  }
}

bool LeaseRegistry::active(const UserId& user) const {
  std::lock_guard lock(mu_);
  return active_.contains(user);
}

std::optional<MigrationLease> LeaseRegistry::lease(const std::string& migration_id) const {
  std::lock_guard lock(mu_);
  auto it = leases_.find(migration_id);
  if (it == leases_.end()) return std::nullopt;
  return it->second;
}

std::vector<MigrationLease> LeaseRegistry::all() const {
  std::lock_guard lock(mu_);
  std::vector<MigrationLease> out;
  for (const auto& [m, l] : leases_) out.push_back(l);
  return out;
}

// ---------------------------------------------------------------- encoding

json to_json(const Flags& f) {
  return json{{"migrated", f.migrated},
              {"migration_flag", f.migration_flag},
              {"displayable", f.displayable}};
}

Flags flags_from_json(const json& f) {
  Flags out;
  out.migrated = f.value("migrated", false);
  out.migration_flag = f.value("migration_flag", false);
  out.displayable = f.value("displayable", true);
  return out;
}

json to_json(const DataNode& n) {
  return json{{"id", n.id.str()}, {"rows", n.rows}, {"flags", to_json(n.flags)}};
}

DataNode node_from_json(const json& j) {
  DataNode n;
  n.id = NodeId::parse(j.at("id").get<std::string>());
  n.rows = j.at("rows").get<std::map<std::string, Row>>();
  if (j.contains("flags")) n.flags = flags_from_json(j.at("flags"));
  return n;
}

json to_json(const SharingGrant& g) {
  json allowed = json::array();
  for (auto t : g.allowed) allowed.push_back(to_string(t));
  json j{{"grantor", g.grantor},
         {"grantee", g.grantee},
         {"node_type", g.node_type},
         {"predicate", g.predicate},
         {"allowed", allowed},
         {"migration_id", g.migration_id}};
  if (g.node) j["node"] = g.node->str();
  return j;
}

SharingGrant grant_from_json(const json& j) {
  SharingGrant g;
  g.grantor = j.at("grantor").get<std::string>();
  g.grantee = j.at("grantee").get<std::string>();
  if (j.contains("node")) g.node = NodeId::parse(j.at("node").get<std::string>());
  g.node_type = j.value("node_type", "");
  g.predicate = j.value("predicate", "");
  for (const auto& a : j.at("allowed")) g.allowed.insert(migration_type_from_string(a.get<std::string>()));
  g.migration_id = j.value("migration_id", "");
  return g;
}

json to_json(const BagEntry& e) {
  return json{{"owner", e.owner},         {"origin", e.origin.str()},
              {"node", to_json(e.node)},  {"reason", to_string(e.reason)},
              {"partial", e.partial},     {"migration_id", e.migration_id}};
}

BagEntry bag_entry_from_json(const json& j) {
  BagEntry e;
  e.owner = j.at("owner").get<std::string>();
  e.origin = NodeId::parse(j.at("origin").get<std::string>());
  e.node = node_from_json(j.at("node"));
  e.reason = bag_reason_from_string(j.at("reason").get<std::string>());
  e.partial = j.value("partial", false);
  e.migration_id = j.value("migration_id", "");
  return e;
}

namespace {

json attr_json(const AttrRef& a) { return a.str(); }
AttrRef attr_of(const json& j) { return AttrRef::parse(j.get<std::string>()); }
NodeId id_of(const json& j) { return NodeId::parse(j.get<std::string>()); }

}  // namespace

json to_json(const PlaceholderRow& r) {
  return json{{"migration_id", r.migration_id}, {"app", r.app}, {"node", r.node.str()},
              {"attr", attr_json(r.attr)}, {"original", r.original.str()},
              {"kind", r.kind == PlaceholderKind::kAbsentUser ? "absent_user" : "remote_data"}};
}

PlaceholderRow placeholder_row_from_json(const json& j) {
  return {j.at("migration_id").get<std::string>(), j.at("app").get<std::string>(),
          id_of(j.at("node")), attr_of(j.at("attr")), id_of(j.at("original")),
          j.at("kind").get<std::string>() == "absent_user" ? PlaceholderKind::kAbsentUser
                                                           : PlaceholderKind::kRemoteData};
}

json MetaStore::snapshot() const {
  json refs = json::array();
  for (const auto& r : references.all()) {
    refs.push_back({{"migration_id", r.migration_id}, {"app", r.app},
                    {"from_node", r.from_node.str()}, {"from_attr", attr_json(r.from_attr)},
                    {"to_node", r.to_node.str()}, {"to_attr", attr_json(r.to_attr)}});
  }
  json changes = json::array();
  for (const auto& r : attributes.all()) {
    changes.push_back({{"migration_id", r.migration_id}, {"from_app", r.from_app},
                       {"to_app", r.to_app}, {"old_node", r.old_node.str()},
                       {"new_node", r.new_node.str()}, {"attr", attr_json(r.attr)},
                       {"old_value", r.old_value}, {"new_value", r.new_value}});
  }
  json phs = json::array();
  for (const auto& r : placeholders.all()) phs.push_back(to_json(r));
  json bags_j = json::array();
  for (const auto& e : bags.all()) bags_j.push_back(to_json(e));
  return json{{"references", refs}, {"attribute_changes", changes}, {"placeholders", phs},
              {"bags", bags_j}};
}

void ReferenceTable::clear() {
  std::lock_guard lock(mu_);
  rows_.clear();
  latest_.clear();
  by_from_.clear();
}

void AttributeTable::clear() {
  std::lock_guard lock(mu_);
  rows_.clear();
  unique_.clear();
  by_old_.clear();
  forward_.clear();
  backward_.clear();
}

void PlaceholderTable::clear() {
  std::lock_guard lock(mu_);
  rows_.clear();
  by_original_.clear();
}

void BagStore::clear() {
  std::lock_guard lock(mu_);
  entries_.clear();
}

void MetaStore::restore(const json& snap) {
  references.clear();
  attributes.clear();
  placeholders.clear();
  bags.clear();
  std::vector<ReferenceRow> refs;
  for (const auto& j : snap.at("references")) {
    refs.push_back({j.at("migration_id").get<std::string>(), j.at("app").get<std::string>(),
                    id_of(j.at("from_node")), attr_of(j.at("from_attr")), id_of(j.at("to_node")),
                    attr_of(j.at("to_attr"))});
  }
  references.record(refs);
  std::vector<AttributeChangeRow> changes;
  for (const auto& j : snap.at("attribute_changes")) {
    changes.push_back({j.at("migration_id").get<std::string>(), j.at("from_app").get<std::string>(),
                       j.at("to_app").get<std::string>(), id_of(j.at("old_node")),
                       id_of(j.at("new_node")), attr_of(j.at("attr")),
                       j.at("old_value").get<std::string>(), j.at("new_value").get<std::string>()});
  }
  attributes.record(changes);
  for (const auto& j : snap.at("placeholders")) placeholders.put(placeholder_row_from_json(j));
  for (const auto& j : snap.at("bags")) bags.put(bag_entry_from_json(j));
}

}  // namespace xmig
