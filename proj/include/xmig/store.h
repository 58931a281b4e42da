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

// Embedded application stores and the migration metadata store (reference
// rows, attribute-change rows, placeholders, bags, write-ahead log, leases).
//
// Every public operation takes the owning object's lock, so each call is
// individually atomic. Costs are charged to a shared virtual clock according
// to the calling thread's lane.

#ifndef XMIG_STORE_H_
#define XMIG_STORE_H_

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <tuple>
#include <unordered_map>

#include "json.hpp"
#include "xmig/graph.h"
#include "xmig/model.h"

namespace xmig {

class NotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class KeyCollision : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class WalSealed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class LeaseDenied : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
/// Simulated process crash raised by the fault injector.
class InjectedCrash : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
/// Simulated failure of one store mutation.
class StoreFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- clock

enum class Lane { kMigration, kValidation, kOther };

struct CostParams {
  std::int64_t round_trip = 12;  // remote call from the migration controller
  std::int64_t per_row = 1;      // rows shipped per remote call
  std::int64_t blob_bytes_per_unit = 16 * 1024;
  std::int64_t local_op = 1;     // validation at the destination
};

/// Virtual clock. Each store operation advances it by a cost that depends on
/// the calling thread's lane; totals are kept per lane.
class CostMeter {
 public:
  explicit CostMeter(CostParams p = {}) : params_(p) {}

  static Lane lane();
  static void set_lane(Lane lane);

  /// One store call touching `rows` rows and `blob_bytes` of blob payload.
  void charge(std::size_t rows, std::int64_t blob_bytes);
  std::int64_t now() const { return now_.load(); }
  std::int64_t total(Lane lane) const { return lanes_[static_cast<int>(lane)].load(); }
  const CostParams& params() const { return params_; }

 private:
  CostParams params_;
  std::atomic<std::int64_t> now_{0};
  std::atomic<std::int64_t> lanes_[3]{};
};

/// Sets the thread's lane for a scope.
class ScopedLane {
 public:
  explicit ScopedLane(Lane lane) : prev_(CostMeter::lane()) { CostMeter::set_lane(lane); }
  ~ScopedLane() { CostMeter::set_lane(prev_); }
  ScopedLane(const ScopedLane&) = delete;
  ScopedLane& operator=(const ScopedLane&) = delete;

 private:
  Lane prev_;
};

// ---------------------------------------------------------------- faults

enum class MutationKind { kInsert, kErase, kFlags, kAttr };

struct MutationEvent {
  AppId app;
  MutationKind kind;
  NodeId node;
};

/// Deterministic fault plan shared by the stores and the log of one run.
/// Counters are 1-based; 0 disables a fault.
class FaultInjector {
 public:
  void crash_after_wal_append(std::uint64_t k) { wal_crash_at_ = k; }
  void fail_store_mutation(std::uint64_t k) { store_fail_at_ = k; }
  void disarm() { armed_ = false; }
  void arm() { armed_ = true; }

  void on_wal_append();
  void on_store_mutation(const MutationEvent& ev);

  std::uint64_t wal_appends() const { return wal_appends_.load(); }
  std::uint64_t store_mutations() const { return store_mutations_.load(); }

  /// Called for every store mutation before it is applied.
  std::function<void(const MutationEvent&)> mutation_observer;

 private:
  std::atomic<bool> armed_{true};
  std::uint64_t wal_crash_at_ = 0;
  std::uint64_t store_fail_at_ = 0;
  std::atomic<std::uint64_t> wal_appends_{0};
  std::atomic<std::uint64_t> store_mutations_{0};
};

// ---------------------------------------------------------------- journal

/// Post-image of every applied store mutation (pre-image for erase), in a
/// global order. Lets an observer replay what applications could see.
struct StoreEvent {
  std::uint64_t seq = 0;
  std::int64_t time = 0;
  AppId app;
  MutationKind kind = MutationKind::kInsert;
  DataNode node;
};

using StoreJournal = std::function<void(const StoreEvent&)>;

// ---------------------------------------------------------------- app store

/// One application's data. Nodes are stored whole; attribute indexes back the
/// lookups the DAG edges need. As an InstanceView it exposes every present
/// node regardless of flags; `read_visible` is the application-facing read.
class AppStore final : public InstanceView {
 public:
  explicit AppStore(AppDefinition def, std::shared_ptr<CostMeter> meter = nullptr,
                    std::shared_ptr<FaultInjector> faults = nullptr);

  const AppId& app_id() const { return def_.schema.app_id; }
  const AppDefinition& definition() const { return def_; }
  const DagSpec& dag() const override { return def_.dag; }
  void set_meter(std::shared_ptr<CostMeter> m) { meter_ = std::move(m); }
  void set_faults(std::shared_ptr<FaultInjector> f) { faults_ = std::move(f); }
  void set_journal(StoreJournal j) { journal_ = std::move(j); }
  const std::shared_ptr<CostMeter>& meter() const { return meter_; }

  std::optional<DataNode> node(const NodeId& id) const override;
  std::optional<NodeId> find(const std::string& type, const AttrRef& attr,
                             const Value& value) const override;
  std::vector<NodeId> find_all(const std::string& type, const AttrRef& attr,
                               const Value& value) const override;

  /// Application-visible read: hides flagged and undisplayable nodes.
  std::optional<DataNode> read_visible(const NodeId& id) const;
  bool contains(const NodeId& id) const;
  std::vector<NodeId> ids(std::string_view type = {}) const;
  std::size_t size() const;
  /// Every node, ordered by id. Uncharged; for audits and tests.
  std::vector<DataNode> all_nodes() const;

  /// Throws KeyCollision when the id is taken.
  void insert(DataNode n);
  /// Returns the pre-image. Throws NotFound.
  DataNode erase(const NodeId& id);
  /// Returns the previous flags. Throws NotFound.
  Flags set_flags(const NodeId& id, Flags f);
  /// Atomic flag transition; false if the node is absent or differs.
  bool compare_and_set_flags(const NodeId& id, Flags expected, Flags desired);
  /// Returns the previous value. Throws NotFound.
  Value set_attr(const NodeId& id, const AttrRef& attr, Value v);

  /// Bulk forms, each one store call.
  std::vector<DataNode> find_by(const std::string& type, const AttrRef& attr,
                                const std::set<Value>& values) const;
  std::vector<DataNode> read_many(const std::vector<NodeId>& ids) const;
  void insert_many(std::vector<DataNode> nodes);
  void set_flags_many(const std::vector<std::pair<NodeId, Flags>>& flags);

  /// Fresh key for a table: one past the largest numeric key seen when the
  /// table was first asked, then sequential.
  std::string fresh_key(const std::string& table);
  /// Fresh keys are at least `floor`. Keeps the key spaces of several
  /// applications apart.
  void set_key_floor(std::uint64_t floor);

  void add_grant(SharingGrant g);
  std::vector<SharingGrant> grants() const;
  std::size_t remove_grants(const std::string& migration_id);

  /// Total blob bytes carried by a node.
  std::int64_t blob_bytes(const DataNode& n) const;

  nlohmann::json snapshot() const;
  void restore(const nlohmann::json& snap);
  /// Equality of nodes (with flags) and grants.
  bool same_content(const AppStore& other) const;

 private:
  using IndexKey = std::string;
  static IndexKey index_key(const std::string& type, const AttrRef& attr, const Value& v);
  void index_locked(const DataNode& n, bool add);
  void before_mutation(MutationKind kind, const NodeId& id);
  void journal_locked(MutationKind kind, const DataNode& n);
  void charge(std::size_t rows, std::int64_t blob) const;
  std::int64_t blob_bytes_locked(const DataNode& n) const;

  AppDefinition def_;
  std::shared_ptr<CostMeter> meter_;
  std::shared_ptr<FaultInjector> faults_;
  StoreJournal journal_;
  std::map<std::string, std::vector<AttrRef>> indexed_;  // type -> attrs
  mutable std::shared_mutex mu_;
  std::map<NodeId, DataNode> nodes_;
  std::unordered_map<IndexKey, std::set<NodeId>> index_;
  std::map<std::string, std::uint64_t> next_key_;
  std::uint64_t key_floor_ = 1;
  std::vector<SharingGrant> grants_;
};

// ---------------------------------------------------------------- metadata

struct ReferenceRow {
  std::string migration_id;
  AppId app;
  NodeId from_node;
  AttrRef from_attr;
  NodeId to_node;
  AttrRef to_attr;
  friend bool operator==(const ReferenceRow&, const ReferenceRow&) = default;
};

class ReferenceTable {
 public:
  void record(const std::vector<ReferenceRow>& rows);
  /// Pre-migration referent of (node, attr), if recorded.
  std::optional<ReferenceRow> lookup(const NodeId& from, const AttrRef& attr) const;
  std::vector<ReferenceRow> rows_from(const NodeId& from) const;
  std::vector<ReferenceRow> all() const;
  std::size_t remove_migration(const std::string& migration_id);

  void clear();

 private:
  void rebuild_locked();
  mutable std::mutex mu_;
  std::vector<ReferenceRow> rows_;
  std::map<std::pair<NodeId, AttrRef>, std::size_t> latest_;
  std::map<NodeId, std::vector<std::size_t>> by_from_;
};

struct AttributeChangeRow {
  std::string migration_id;
  AppId from_app;
  AppId to_app;
  NodeId old_node;
  NodeId new_node;
  /// Source attribute.
  AttrRef attr;
  Value old_value;
  Value new_value;
  friend bool operator==(const AttributeChangeRow&, const AttributeChangeRow&) = default;
};

class AttributeTable {
 public:
  /// Rows with a (migration_id, old_node, attr) already present are dropped.
  void record(const std::vector<AttributeChangeRow>& rows);
  /// New identity of `old_node`, optionally restricted to one migration.
  std::optional<NodeId> lookup_new_identity(const NodeId& old_node,
                                            const std::string& migration_id = {}) const;
  /// Identity `new_node` was created from.
  std::optional<NodeId> lookup_old_identity(const NodeId& new_node) const;
  /// Every identity created directly from `old_node`, oldest first.
  std::vector<NodeId> successors(const NodeId& old_node) const;
  std::vector<AttributeChangeRow> rows_for(const NodeId& old_node) const;
  std::vector<AttributeChangeRow> all() const;
  std::size_t remove_migration(const std::string& migration_id);

  void clear();

 private:
  void rebuild_locked();
  void index_locked(std::size_t i);
  mutable std::mutex mu_;
  std::vector<AttributeChangeRow> rows_;
  std::set<std::tuple<std::string, NodeId, AttrRef>> unique_;
  std::map<NodeId, std::vector<std::size_t>> by_old_;
  std::map<NodeId, std::vector<NodeId>> forward_;
  std::map<NodeId, NodeId> backward_;
};

enum class PlaceholderKind { kAbsentUser, kRemoteData };

struct PlaceholderRow {
  std::string migration_id;
  AppId app;
  NodeId node;  // node holding the placeholder
  AttrRef attr;
  NodeId original;
  PlaceholderKind kind = PlaceholderKind::kRemoteData;
  friend bool operator==(const PlaceholderRow&, const PlaceholderRow&) = default;
};

class PlaceholderTable {
 public:
  /// Replaces any row at the same (app, node, attr).
  void put(PlaceholderRow row);
  void erase(const AppId& app, const NodeId& node, const AttrRef& attr);
  std::vector<PlaceholderRow> in_app(const AppId& app) const;
  /// Rows in `app` standing in for `original`.
  std::vector<PlaceholderRow> targeting(const AppId& app, const NodeId& original) const;
  std::vector<PlaceholderRow> all() const;
  std::size_t remove_migration(const std::string& migration_id);

  void clear();

 private:
  using Key = std::tuple<AppId, NodeId, AttrRef>;
  mutable std::mutex mu_;
  std::map<Key, PlaceholderRow> rows_;
  std::map<std::pair<AppId, NodeId>, std::set<Key>> by_original_;
};

enum class BagReason { kNoMapping, kDanglingSource, kFailedValidation };
std::string to_string(BagReason r);
BagReason bag_reason_from_string(std::string_view s);

struct BagEntry {
  UserId owner;
  /// Original identity (app included).
  NodeId origin;
  /// Bagged content. For partial entries only the leftover attributes.
  DataNode node;
  BagReason reason = BagReason::kNoMapping;
  /// Leftovers of a node whose mapped part migrated.
  bool partial = false;
  std::string migration_id;
  friend bool operator==(const BagEntry&, const BagEntry&) = default;
};

class BagStore {
 public:
  /// Idempotent on the origin identity; false if already present.
  bool put(BagEntry e);
  std::vector<BagEntry> list(const UserId& owner) const;
  std::optional<BagEntry> get(const NodeId& origin) const;
  /// Throws NotFound.
  BagEntry take(const UserId& owner, const NodeId& origin);
  std::vector<BagEntry> all() const;
  std::size_t size() const;

  void clear();

 private:
  mutable std::mutex mu_;
  std::map<NodeId, BagEntry> entries_;
};

enum class WalKind {
  kCopyRoot,
  kMigrateNode,
  kBagPut,
  kBagTake,
  kRelink,
  kMark,
  kDeleteNode,
  kDisplayNode,
  kCommit,
  kAbort
};
std::string to_string(WalKind k);
WalKind wal_kind_from_string(std::string_view s);

struct WalRecord {
  std::string migration_id;
  std::uint64_t seq = 0;
  WalKind kind = WalKind::kCommit;
  /// Rollback information; layout depends on kind.
  nlohmann::json payload;
};

/// Write-ahead log. Appends are durable on return.
class Wal {
 public:
  void set_faults(std::shared_ptr<FaultInjector> f) { faults_ = std::move(f); }
  /// Returns the assigned sequence number. Throws WalSealed after commit or
  /// abort, and InjectedCrash when the fault plan says so (after the record
  /// is durable).
  std::uint64_t append(const std::string& migration_id, WalKind kind, nlohmann::json payload);
  std::vector<WalRecord> scan(const std::string& migration_id) const;
  bool sealed(const std::string& migration_id) const;
  bool committed(const std::string& migration_id) const;
  bool aborted(const std::string& migration_id) const;
  std::vector<std::string> migrations() const;
  /// Global append order.
  std::vector<WalRecord> all() const;

  nlohmann::json to_json() const;
  /// Replaces the contents with a log saved by `to_json`.
  void load(const nlohmann::json& j);

 private:
  mutable std::mutex mu_;
  std::shared_ptr<FaultInjector> faults_;
  std::map<std::string, std::vector<WalRecord>> log_;
  std::vector<std::pair<std::string, std::size_t>> order_;
};

enum class LeaseState { kActive, kCommitted, kAborted };

struct MigrationLease {
  UserId user;
  std::string migration_id;
  MigrationType type = MigrationType::kDeletion;
  LeaseState state = LeaseState::kActive;
};

class LeaseRegistry {
 public:
  /// Throws LeaseDenied while the user holds an active lease.
  MigrationLease acquire(const UserId& user, MigrationType type);
  void commit(const std::string& migration_id);
  void abort(const std::string& migration_id);
  bool active(const UserId& user) const;
  std::optional<MigrationLease> lease(const std::string& migration_id) const;
  std::vector<MigrationLease> all() const;

  nlohmann::json to_json() const;
  /// Replaces the contents with leases saved by `to_json`.
  void load(const nlohmann::json& j);

 private:
  mutable std::mutex mu_;
  std::uint64_t next_ = 1;
  std::map<std::string, MigrationLease> leases_;
  std::map<UserId, std::string> active_;
};

/// Metadata held outside every application.
struct MetaStore {
  ReferenceTable references;
  AttributeTable attributes;
  PlaceholderTable placeholders;
  BagStore bags;
  Wal wal;
  LeaseRegistry leases;

  nlohmann::json snapshot() const;
  /// Replaces the tables and bags with a snapshot. The log and leases are
  /// left alone.
  void restore(const nlohmann::json& snap);
};

// ---------------------------------------------------------------- encoding

nlohmann::json to_json(const DataNode& n);
DataNode node_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SharingGrant& g);
SharingGrant grant_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BagEntry& e);
BagEntry bag_entry_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PlaceholderRow& r);
PlaceholderRow placeholder_row_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Flags& f);
Flags flags_from_json(const nlohmann::json& j);

}  // namespace xmig

#endif  // XMIG_STORE_H_
