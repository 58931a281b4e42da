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

#ifndef XMIG_MODEL_H_
#define XMIG_MODEL_H_

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace xmig {

using AppId = std::string;
using Value = std::string;
/// Attribute name -> value for one table row. An empty value is SQL NULL.
using Row = std::map<std::string, Value>;

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Type-level dependency cycle in a DAG specification, or an instance cycle.
class CycleError : public ModelError {
 public:
  CycleError(std::string msg, std::vector<std::string> cycle)
      : ModelError(std::move(msg)), cycle_(std::move(cycle)) {}
  const std::vector<std::string>& cycle() const { return cycle_; }

 private:
  std::vector<std::string> cycle_;
};

class RootMissing : public ModelError {
 public:
  using ModelError::ModelError;
};

class OwnerUnresolvable : public ModelError {
 public:
  using ModelError::ModelError;
};

/// "table.attr", split.
struct AttrRef {
  std::string table;
  std::string attr;

  static AttrRef parse(std::string_view qualified);
  std::string str() const { return table + "." + attr; }
  friend auto operator<=>(const AttrRef&, const AttrRef&) = default;
};

struct TableSpec {
  std::string name;
  std::vector<std::string> attributes;
  std::string key;
  /// Attribute holding the size in bytes of an out-of-line media blob. Only
  /// the size is stored; transfer cost is charged against it.
  std::string blob_size_attr;

  bool has(std::string_view attr) const;
  friend bool operator==(const TableSpec&, const TableSpec&) = default;
};

struct AppSchema {
  AppId app_id;
  std::vector<TableSpec> tables;

  const TableSpec* table(std::string_view name) const;
  bool has(const AttrRef& ref) const;
  /// Throws ModelError on duplicate tables/attributes or a missing key.
  void validate() const;
  friend bool operator==(const AppSchema&, const AppSchema&) = default;
};

/// child.attr holds the value of parent.attr of the node it depends on.
struct DependencyEdge {
  AttrRef attr;
  std::string parent_type;
  AttrRef parent_attr;
  friend bool operator==(const DependencyEdge&, const DependencyEdge&) = default;
};

/// node.attr references a root node's root_attr (ownership or sharing).
struct RootEdge {
  AttrRef attr;
  AttrRef root_attr;
  friend bool operator==(const RootEdge&, const RootEdge&) = default;
};

struct DisplayRule {
  bool requires_parents_displayed = true;
  std::vector<std::string> exceptions;
  bool requires_owner_root = true;
  bool requires_sharer_root = false;
  friend bool operator==(const DisplayRule&, const DisplayRule&) = default;
};

struct Join {
  AttrRef left;
  AttrRef right;
  friend bool operator==(const Join&, const Join&) = default;
};

struct NodeTypeSpec {
  std::string type_name;
  /// First table is the primary table; its key is the node key.
  std::vector<std::string> member_tables;
  std::vector<Join> intra_node_joins;
  std::vector<DependencyEdge> depends_on;
  std::vector<RootEdge> owned_by;
  std::vector<RootEdge> shared_with;
  DisplayRule display_rule;

  const std::string& primary_table() const { return member_tables.front(); }
  friend bool operator==(const NodeTypeSpec&, const NodeTypeSpec&) = default;
};

struct DagSpec {
  AppId app_id;
  std::string root_type;
  std::vector<NodeTypeSpec> node_types;

  const NodeTypeSpec* type(std::string_view name) const;
  const NodeTypeSpec& root() const;
  /// Node type owning a table as one of its members, if any.
  const NodeTypeSpec* type_of_table(std::string_view table) const;
  /// All attributes carrying a reference (dependency, ownership or sharing).
  std::set<AttrRef> reference_attrs(const NodeTypeSpec& t) const;
  /// Validates every model invariant against the schema. Throws CycleError,
  /// RootMissing or ModelError.
  void validate(const AppSchema& schema) const;
  friend bool operator==(const DagSpec&, const DagSpec&) = default;
};

/// Schema plus DAG; everything an application declares.
struct AppDefinition {
  AppSchema schema;
  DagSpec dag;
};

struct NodeId {
  AppId app;
  std::string type;
  std::string key;

  std::string str() const { return app + "/" + type + "/" + key; }
  static NodeId parse(std::string_view s);
  bool empty() const { return key.empty(); }
  friend bool operator==(const NodeId&, const NodeId&) = default;
  /// Natural order: numeric keys compare numerically.
  friend std::strong_ordering operator<=>(const NodeId& a, const NodeId& b);
};

/// Compares numeric strings by magnitude, everything else lexicographically.
std::strong_ordering natural_compare(std::string_view a, std::string_view b);

enum class MigrationType { kDeletion, kIndependent };

std::string to_string(MigrationType t);
MigrationType migration_type_from_string(std::string_view s);

struct Flags {
  bool migrated = false;
  bool migration_flag = false;
  bool displayable = true;

  /// Visible to ordinary application reads.
  bool visible() const { return displayable && !migration_flag; }
  friend bool operator==(const Flags&, const Flags&) = default;
};

struct DataNode {
  NodeId id;
  /// table -> row
  std::map<std::string, Row> rows;
  Flags flags;

  const Value& get(const AttrRef& ref) const;
  void set(const AttrRef& ref, Value v);
  friend bool operator==(const DataNode&, const DataNode&) = default;
};

/// Users are identified across applications by the identity of their
/// earliest root node (see Tracker::canonical).
using UserId = std::string;

struct SharingGrant {
  UserId grantor;
  UserId grantee;
  /// Either a concrete node, or a node type with an optional "attr=value"
  /// predicate over the primary row.
  std::optional<NodeId> node;
  std::string node_type;
  std::string predicate;
  std::set<MigrationType> allowed;
  /// Migration that replicated this grant to a destination, empty if native.
  std::string migration_id;

  bool covers(const DataNode& n) const;
  friend bool operator==(const SharingGrant&, const SharingGrant&) = default;
};

/// Placeholders stand in for a reference whose referent lives in another
/// application or belongs to a user who has not joined yet. The encoding is a
/// reserved control-character prefix no application value carries.
inline constexpr std::string_view kPlaceholderPrefix = "\x1bph:";
bool is_placeholder(std::string_view v);
Value make_placeholder(const NodeId& original);
/// Original identity carried by a placeholder value.
NodeId placeholder_target(std::string_view v);

}  // namespace xmig

#endif  // XMIG_MODEL_H_
