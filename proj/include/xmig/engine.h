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

// Migration controller: deletion and independent migration, shared-data
// consent, two-phase bag migration, write-ahead logging and rollback.

#ifndef XMIG_ENGINE_H_
#define XMIG_ENGINE_H_

#include <memory>
#include <optional>

#include "json.hpp"
#include "xmig/psm.h"
#include "xmig/store.h"
#include "xmig/tracker.h"
#include "xmig/validate.h"

namespace xmig {

/// The migration could not proceed; it is rolled back.
class MigrationAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kNewIdRetries = 8;

enum class Outcome { kCommitted, kRolledBack };
std::string to_string(Outcome o);

enum class CanMigrate { kYes, kSkipNotShared, kSkipWrongType };
std::string to_string(CanMigrate c);

/// Consent check. `owner` and `user` are canonical user identities; `grants`
/// are the grants of the application holding `n`.
CanMigrate can_migrate(const DataNode& n, const UserId& owner, const UserId& user,
                       MigrationType type, const std::vector<SharingGrant>& grants);

struct NodeTimeline {
  NodeId source;
  NodeId dest;  // empty when the node went to a bag
  std::int64_t source_invisible = -1;
  std::int64_t displayed = -1;
};

struct MigrationReport {
  std::string migration_id;
  UserId user;
  MigrationType type = MigrationType::kDeletion;
  AppId src;
  AppId dst;
  NodeId dest_root;

  /// Nodes reachable from the root, the root excluded. Each ends up in
  /// exactly one of the counters summed by `accounted()`.
  std::size_t considered = 0;
  std::size_t migrated = 0;
  std::size_t bagged_no_mapping = 0;
  std::size_t bagged_dangling = 0;
  std::size_t skipped_not_shared = 0;
  std::size_t skipped_wrong_type = 0;
  std::size_t skipped_marked = 0;      // already copied by an earlier run
  std::size_t retained = 0;  // independent: unmapped or past the cutoff, left alone

  std::size_t deleted = 0;
  std::size_t failed_validation = 0;
  std::size_t partial_bags = 0;
  std::size_t merged_entries = 0;
  std::size_t phase2_moved = 0;
  std::size_t duplicates = 0;
  std::size_t key_retries = 0;
  std::vector<std::string> merge_conflicts;

  std::vector<NodeTimeline> timeline;
  std::int64_t start = 0;
  std::int64_t end = 0;
  std::int64_t migration_cost = 0;
  std::int64_t validation_cost = 0;

  Outcome outcome = Outcome::kCommitted;
  std::string error;

  std::size_t bagged() const { return bagged_no_mapping + bagged_dangling; }
  std::size_t skipped() const {
    return skipped_not_shared + skipped_wrong_type + skipped_marked + retained;
  }
  std::size_t accounted() const { return migrated + bagged() + skipped(); }
  nlohmann::json to_json() const;
};

/// Everything a migration touches.
struct EngineEnv {
  std::map<AppId, AppStore*> stores;
  MetaStore* meta = nullptr;
  const MappingCatalog* catalog = nullptr;
  std::shared_ptr<FaultInjector> faults;
};

struct MigrationRequest {
  /// The migrating user's root in the source application.
  NodeId user_root;
  AppId dst;
  MigrationType type = MigrationType::kDeletion;
  int workers = 1;
  std::uint64_t seed = 1;
  /// Only nodes whose `created_at` is at most this value move.
  std::optional<std::int64_t> cutoff;
  /// When false, migrated nodes are held and validated only after commit.
  bool validate_during = true;
};

class Engine {
 public:
  explicit Engine(EngineEnv env);

  /// Throws LeaseDenied, or InjectedCrash when the fault plan simulates a
  /// crash (call `recover` afterwards). Other failures roll back and are
  /// reported with outcome kRolledBack.
  MigrationReport migrate(const MigrationRequest& req);

  CanMigrate can_migrate(const AppStore& src, const DataNode& n, const UserId& user,
                         MigrationType type) const;

  /// Undoes an uncommitted migration from its log. Idempotent.
  void rollback(const std::string& migration_id);

  /// Finishes committed migrations whose validation did not complete and
  /// rolls back the rest. Returns the migration ids touched.
  std::vector<std::string> recover();

  const Tracker& tracker() const { return tracker_; }
  const EngineEnv& env() const { return env_; }

 private:
  friend class MigrationRun;
  EngineEnv env_;
  Tracker tracker_;
};

}  // namespace xmig

#endif  // XMIG_ENGINE_H_
