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

// Experiment harness: an anomaly auditor that shares no code with the
// engine's bookkeeping, naive baselines, and the continuity, scaling and rate
// metrics.
//
// The auditor works from raw store contents and the DAG declarations only.
// It builds its own attribute index, its own lineage map from the attribute
// change rows, and a replica of every store fed by the store journal to judge
// display events as they happen.

#ifndef XMIG_HARNESS_H_
#define XMIG_HARNESS_H_

#include <memory>
#include <mutex>

#include "json.hpp"
#include "xmig/engine.h"
#include "xmig/synthgen.h"

namespace xmig {

// ---------------------------------------------------------------- audit

enum class Anomaly { kDangling, kDataLoss, kOwnershipViolation, kPrematureDisplay };
inline constexpr Anomaly kAllAnomalies[] = {Anomaly::kDangling, Anomaly::kDataLoss,
                                            Anomaly::kOwnershipViolation,
                                            Anomaly::kPrematureDisplay};
std::string to_string(Anomaly a);

struct Finding {
  Anomaly kind = Anomaly::kDangling;
  NodeId node;
  std::string detail;
};

struct AppAudit {
  AppId app;
  /// Live nodes in the store.
  std::size_t total = 0;
  /// Nodes the store held before any migration.
  std::size_t baseline = 0;
  std::vector<Finding> findings;

  std::size_t count(Anomaly a) const;
  /// Findings of one kind in percent of the live nodes; data loss in percent
  /// of the baseline nodes.
  double percent(Anomaly a) const;
};

struct AnomalyAudit {
  std::map<AppId, AppAudit> apps;

  std::size_t count(Anomaly a) const;
  std::size_t findings() const;
  bool clean() const { return findings() == 0; }
  nlohmann::json to_json() const;
  /// One row per application, one column per anomaly kind.
  std::string table() const;
};

/// Pre-migration contents and the owner of every node, computed from the
/// ownership edges.
struct Baseline {
  std::map<NodeId, DataNode> nodes;
  std::map<NodeId, UserId> owner;

  nlohmann::json to_json() const;
  static Baseline from_json(const nlohmann::json& j);
};

Baseline capture_baseline(const std::vector<const AppStore*>& stores);

enum class TraceCheck {
  /// A node became visible while a parent or owner it needs was not.
  kDisplayBeforeParent,
  /// A node was erased while a node depending on or owned by it remained.
  kParentErasedFirst,
};
std::string to_string(TraceCheck c);

struct TraceViolation {
  TraceCheck check = TraceCheck::kDisplayBeforeParent;
  AppId app;
  NodeId node;
  std::string detail;
  std::uint64_t seq = 0;
};

nlohmann::json to_json(const TraceViolation& v);
TraceViolation trace_violation_from_json(const nlohmann::json& j);

/// Online auditor over store journals. Keeps a replica of each attached store
/// and checks every display and erase event against it.
class TraceAuditor {
 public:
  TraceAuditor();
  ~TraceAuditor();
  TraceAuditor(const TraceAuditor&) = delete;
  TraceAuditor& operator=(const TraceAuditor&) = delete;

  /// Seeds the replica from the store's current contents and installs the
  /// journal. Re-attaching reseeds.
  void attach(AppStore& store);
  /// While paused, events update the replicas but are not checked.
  void set_paused(bool paused);
  bool paused() const;

  std::vector<TraceViolation> violations() const;
  std::size_t count(TraceCheck c) const;
  std::uint64_t events() const;
  void clear();

 private:
  struct Replica;
  void on_event(const StoreEvent& ev);

  mutable std::mutex mu_;
  std::map<AppId, std::unique_ptr<Replica>> replicas_;
  bool paused_ = false;
  std::vector<TraceViolation> violations_;
  std::uint64_t events_ = 0;
};

/// Exhaustive scan of every store. `trace` supplies display-time findings.
AnomalyAudit audit(const std::vector<const AppStore*>& stores, const MetaStore& meta,
                   const Baseline& base, const std::vector<TraceViolation>& trace = {});

// ---------------------------------------------------------------- baselines

struct NaiveOptions {
  /// Hide migrated data until the migration completes, then reveal what the
  /// display rules allow.
  bool hold_until_end = false;
  /// Delete dangling data in both applications after the migration.
  bool collect_garbage = true;
};

/// Cumulative count of nodes the naive baselines removed as dangling.
struct DanglingTally {
  std::map<AppId, std::size_t> removed;
};

/// Moves the user's owned nodes type by type in a fixed order, substituting
/// identities only among nodes moved in the same run. No bags, no
/// placeholders, no validation. Records attribute rows and a lease so the
/// auditor can trace lineage and ownership.
MigrationReport run_naive(const EngineEnv& env, const NodeId& user_root, const AppId& dst,
                          const NaiveOptions& opt = {}, DanglingTally* tally = nullptr);
MigrationReport run_naive_plus(const EngineEnv& env, const NodeId& user_root, const AppId& dst,
                               DanglingTally* tally = nullptr);

/// Node types of `app` in the order the naive baseline moves them: the root,
/// then posts, likes, comments, conversations and messages, then the rest by
/// name.
std::vector<std::string> naive_type_order(const AppDefinition& app);

/// Erases nodes with an ownership or dependency reference to a missing node,
/// starting from `candidates` and following what each erasure orphans.
/// Returns the number erased.
std::size_t collect_dangling(AppStore& store, std::vector<NodeId> candidates);

// ---------------------------------------------------------------- world

/// Stores, metadata, engine, trace auditor and baseline of one experiment.
class World {
 public:
  explicit World(const Fixtures& fx, CostParams params = {});
  World(const World&) = delete;
  World& operator=(const World&) = delete;

  const Fixtures& fixtures() const { return fx_; }
  /// Throws std::invalid_argument for an unknown application.
  AppStore& store(const AppId& app) const;
  std::map<AppId, AppStore*> stores() const;
  std::vector<const AppStore*> const_stores() const;
  MetaStore& meta() { return meta_; }
  const MetaStore& meta() const { return meta_; }
  Engine& engine() { return *engine_; }
  const EngineEnv& env() const { return engine_->env(); }
  const std::shared_ptr<CostMeter>& meter() const { return meter_; }
  const std::shared_ptr<FaultInjector>& faults() const { return faults_; }
  TraceAuditor& trace() { return trace_; }
  const Baseline& baseline() const { return baseline_; }

  /// Generates into `app` and recaptures the baseline.
  GenStats generate(const GenConfig& cfg, const AppId& app);
  void recapture_baseline();
  /// User roots of `app`, ascending.
  std::vector<NodeId> users(const AppId& app) const;

  /// Trace violations, including those of earlier sessions of a loaded world.
  std::vector<TraceViolation> trace_findings() const;
  AnomalyAudit audit() const;

  nlohmann::json save() const;
  /// Replaces stores, metadata and baseline with a saved world.
  void load(const nlohmann::json& j);

 private:
  const Fixtures& fx_;
  std::shared_ptr<CostMeter> meter_;
  std::shared_ptr<FaultInjector> faults_;
  std::map<AppId, std::unique_ptr<AppStore>> stores_;
  MetaStore meta_;
  std::unique_ptr<Engine> engine_;
  TraceAuditor trace_;
  std::vector<TraceViolation> loaded_trace_;
  Baseline baseline_;
};

// ---------------------------------------------------------------- metrics

/// Per-object unavailability: time between the source copy disappearing and
/// the destination copy being displayed, over the migration's duration.
/// Objects never displayed during their migration count until its end.
struct ContinuityReport {
  std::vector<double> fractions;  // ascending
  double median = 0;
  double p90 = 0;
  /// Objects unavailable for at least half of their migration.
  std::size_t tail = 0;

  /// Share of objects with fraction <= x.
  double cdf(double x) const;
  nlohmann::json to_json() const;
};

ContinuityReport continuity_report(const std::vector<MigrationReport>& reports);
/// True if `a`'s distribution lies at or left of `b`'s everywhere.
bool first_order_dominates(const ContinuityReport& a, const ContinuityReport& b);

struct LinearFit {
  double slope = 0;
  double intercept = 0;
  double r2 = 0;
  std::size_t n = 0;
};

/// Ordinary least squares. Throws std::invalid_argument for fewer than two
/// points.
LinearFit fit_linear(const std::vector<std::pair<double, double>>& points);

struct ScalingPoint {
  NodeId user;
  std::size_t nodes = 0;
  std::size_t edges = 0;
  std::int64_t deletion = 0;
  std::int64_t independent = 0;
  std::int64_t validation = 0;
  std::size_t size() const { return nodes + edges; }
};

struct ScalingReport {
  std::vector<ScalingPoint> points;
  LinearFit deletion;
  LinearFit independent;
  LinearFit validation;

  double size_range() const;
  nlohmann::json to_json() const;
  std::string table() const;
};

/// Migrates each of up to `samples` users, spread over the size range, alone
/// in a freshly generated world, once per algorithm.
ScalingReport scaling_report(const Fixtures& fx, const GenConfig& cfg, const AppId& src,
                             const AppId& dst, std::size_t samples);

struct RatesReport {
  std::size_t users = 0;
  std::int64_t deletion = 0;
  std::int64_t independent = 0;
  /// Validation cost during the deletion runs.
  std::int64_t validation = 0;

  double ratio() const { return independent == 0 ? 0.0 : double(deletion) / double(independent); }
  double validation_overhead() const {
    return deletion == 0 ? 0.0 : double(validation) / double(deletion);
  }
  nlohmann::json to_json() const;
  std::string table() const;
};

/// Migrates every user once by deletion and, in an identical world, once
/// independently.
RatesReport rates_report(const Fixtures& fx, const GenConfig& cfg, const AppId& src,
                         const AppId& dst);

/// Dangling percentages after each naive migration, measured against the
/// initial node count.
struct NaiveCurve {
  std::vector<double> source;
  std::vector<double> destination;
  bool nondecreasing() const;
  nlohmann::json to_json() const;
};

/// Migrates every user of `src` with the naive baseline.
NaiveCurve run_naive_all(World& w, const AppId& src, const AppId& dst);

/// Continuity of deletion migration against the held-naive baseline, each on
/// its own copy of the same workload.
struct ContinuityComparison {
  ContinuityReport engine;
  ContinuityReport naive_plus;
  nlohmann::json to_json() const;
  std::string table() const;
};

ContinuityComparison continuity_comparison(const Fixtures& fx, const GenConfig& cfg,
                                           const AppId& src, const AppId& dst);

}  // namespace xmig

#endif  // XMIG_HARNESS_H_
