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

// Destination-side validation. Migrated nodes arrive hidden under the
// migration flag and are released for display only once the destination's
// display rules hold for them.

#ifndef XMIG_VALIDATE_H_
#define XMIG_VALIDATE_H_

#include <mutex>
#include <random>
#include <set>
#include <vector>

#include "xmig/store.h"

namespace xmig {

/// Rule check against the current state of `dst`. `user_root` is always
/// displayable.
bool is_displayable(const AppStore& dst, const DataNode& n, const NodeId& user_root);

struct DisplayEvent {
  NodeId node;
  std::int64_t time = 0;
};

class Validator {
 public:
  /// With a non-null `wal`, each display transition is logged first.
  Validator(AppStore& dst, std::string migration_id, NodeId user_root, std::uint64_t seed,
            Wal* wal = nullptr);

  void set_user_root(NodeId root);
  void set_wal(Wal* wal);

  /// Registers a migrated node, then displays it and every waiting node it
  /// unblocks, transitively.
  void on_arrival(const NodeId& id);
  /// Registers without checking; used when validation runs only at the end.
  void hold(const NodeId& id);
  /// One pass over the waiting nodes in random order. Returns what displayed.
  std::vector<NodeId> sweep();

  struct Phase2 {
    std::vector<NodeId> displayed;
    std::vector<NodeId> failed;
  };
  /// Repeats passes until nothing changes. Whatever is left has failed; the
  /// failed nodes stay registered until `forget`.
  Phase2 run_phase2();
  void forget(const NodeId& id);

  std::set<NodeId> waiting() const;
  std::vector<DisplayEvent> events() const;

 private:
  bool try_display_locked(const NodeId& id);
  void cascade_locked(std::vector<NodeId> work);

  AppStore& dst_;
  std::string migration_id_;
  NodeId user_root_;
  Wal* wal_;
  mutable std::mutex mu_;
  std::mt19937_64 rng_;
  std::set<NodeId> waiting_;
  std::vector<DisplayEvent> events_;
};

}  // namespace xmig

#endif  // XMIG_VALIDATE_H_
