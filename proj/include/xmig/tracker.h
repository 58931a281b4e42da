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

// Relationship tracker. Follows identity lineage recorded in the attribute
// table to re-link references after keys change, and manages placeholders for
// references whose target lives in another application.

#ifndef XMIG_TRACKER_H_
#define XMIG_TRACKER_H_

#include <map>
#include <optional>
#include <set>
#include <vector>

#include "xmig/store.h"

namespace xmig {

class NotTracked : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One edge-carrying attribute and the attribute it points at.
struct RefEdge {
  AttrRef attr;
  std::string target_type;
  AttrRef target_attr;
};

/// Every dependency, ownership and sharing edge leaving `type`.
std::vector<RefEdge> ref_edges(const DagSpec& dag, const std::string& type);

/// Nodes not yet in a store but to be treated as present by lookups.
using PendingNodes = std::map<NodeId, const DataNode*>;

class Tracker {
 public:
  Tracker(MetaStore& meta, std::map<AppId, AppStore*> stores)
      : meta_(meta), stores_(std::move(stores)) {}

  AppStore* store(const AppId& app) const;
  MetaStore& meta() const { return meta_; }

  /// `id`, the identity it was created from, and so on back to the origin.
  std::vector<NodeId> lineage_back(const NodeId& id) const;
  NodeId origin_of(const NodeId& id) const { return lineage_back(id).back(); }
  /// A user is named by the origin identity of their root.
  UserId canonical(const NodeId& root) const { return origin_of(root).str(); }

  /// First live identity in `app` reachable forward from `identity`.
  std::optional<NodeId> lookup_current(const NodeId& identity, const AppId& app,
                                       const PendingNodes* pending = nullptr) const;

  /// Identity referenced through `attr` of a node of `type`, from the value
  /// alone when the edge targets a key.
  std::optional<NodeId> referent(const AppStore& store, const std::string& type,
                                 const AttrRef& attr, const Value& v) const;

  /// Reference rows describing every non-null reference of `n` in `src`.
  std::vector<ReferenceRow> reference_rows(const DataNode& n, const AppStore& src,
                                           const std::string& migration_id) const;

  struct Relinked {
    AttrRef attr;
    Value old_value;
    Value new_value;
    std::optional<PlaceholderRow> placeholder;
  };

  /// Rewrites the reference attributes of a node about to enter `dst`.
  /// `provenance` maps destination attributes to the source attributes they
  /// were copied from; references recorded for `source_id` are resolved to
  /// their current identity in `dst`, or replaced by a placeholder.
  /// Attributes in `forced` always become placeholders.
  std::vector<Relinked> relink(DataNode& node, const AppStore& dst,
                               const std::map<AttrRef, AttrRef>& provenance,
                               const NodeId& source_id, const std::set<AttrRef>& forced,
                               const std::string& migration_id,
                               const PendingNodes* pending = nullptr) const;

  struct Resolution {
    NodeId node;
    AttrRef attr;
    Value old_value;
    Value new_value;
    PlaceholderRow row;
  };

  /// Placeholders in `dst` whose original identity is on the lineage of
  /// `arrived`, with the value each should take.
  std::vector<Resolution> pending_resolutions(const NodeId& arrived, const AppStore& dst,
                                              const PendingNodes* pending = nullptr) const;
  /// Writes one resolution and drops its placeholder row.
  void apply(const Resolution& r, AppStore& dst) const;
  std::vector<Resolution> resolve_on_arrival(const NodeId& arrived, AppStore& dst) const;

  /// Owner of a migrated node before its first migration. Throws NotTracked
  /// for nodes with no recorded lineage.
  UserId ownership_of_migrated(const NodeId& node) const;

 private:
  MetaStore& meta_;
  std::map<AppId, AppStore*> stores_;
};

}  // namespace xmig

#endif  // XMIG_TRACKER_H_
