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

// Pairwise schema mappings: attribute-level transforms between two apps,
// transitive composition, and loss (coverage) accounting.

#ifndef XMIG_PSM_H_
#define XMIG_PSM_H_

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "xmig/model.h"

namespace xmig {

class MappingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CompositionDomainError : public MappingError {
 public:
  using MappingError::MappingError;
};

enum class TransformKind { kCopy, kConstant, kNewId, kConcat, kTruncate, kPlaceholder };

struct Transform {
  TransformKind kind = TransformKind::kCopy;
  /// constant value, concat partner attribute (table.attr, source side), or
  /// truncate length.
  std::string arg;

  /// Parses one registered transform: copy, constant(v), newID, concat(t.a),
  /// truncate(n), placeholder. Throws MappingError on anything else.
  static Transform parse(std::string_view text);
  std::string str() const;
  /// Transforms that do not read their input.
  bool ignores_input() const {
    return kind == TransformKind::kConstant || kind == TransformKind::kNewId;
  }
  friend bool operator==(const Transform&, const Transform&) = default;
};

using TransformChain = std::vector<Transform>;

/// "a | b | c" <-> chain.
TransformChain parse_chain(std::string_view text);
std::string chain_str(const TransformChain& chain);
/// Drops identity copies and everything a later newID overwrites.
TransformChain simplify(TransformChain chain);

struct AttributeMap {
  /// Source attribute; empty for input-free transforms (constant, newID).
  std::optional<AttrRef> from;
  AttrRef to;
  TransformChain chain;
  friend bool operator==(const AttributeMap&, const AttributeMap&) = default;
};

struct NodeMap {
  std::string from_node;
  std::string to_node;
  std::vector<AttributeMap> attributes;

  /// Source attributes read by this map (sources and concat partners).
  std::set<AttrRef> consumed() const;
  const AttributeMap* to_attr(const AttrRef& to) const;
  friend bool operator==(const NodeMap&, const NodeMap&) = default;
};

struct SchemaMapping {
  AppId from_app;
  AppId to_app;
  std::vector<NodeMap> node_maps;
  /// App path; two entries for a direct mapping.
  std::vector<AppId> path;

  bool direct() const { return path.size() <= 2; }
  const NodeMap* for_source(std::string_view from_node) const;
  /// Throws MappingError on duplicate (from_node, to_node) pairs, a source
  /// node mapped twice, or a destination attribute written twice.
  void check_structure() const;
  friend bool operator==(const SchemaMapping&, const SchemaMapping&) = default;
};

struct NodeCoverage {
  std::string node_type;
  std::size_t mapped = 0;
  std::size_t total = 0;
  std::vector<AttrRef> unmapped;
  double fraction() const { return total == 0 ? 1.0 : double(mapped) / double(total); }
};

struct CoverageReport {
  std::vector<NodeCoverage> nodes;
  /// Pooled mapped/total over all node types (weighted by attribute count).
  double aggregate = 0.0;

  const NodeCoverage* node(std::string_view type) const;
};

/// a->b, b->c => a->c. An attribute survives iff mapped in both legs.
SchemaMapping compose(const SchemaMapping& ab, const SchemaMapping& bc);

/// Coverage of a mapping over every node type of the source app.
CoverageReport coverage(const SchemaMapping& m, const AppDefinition& src);

/// Closure of the direct-mapping digraph. For each reachable ordered pair the
/// direct mapping wins; otherwise the composed path with the highest aggregate
/// coverage, then the shortest, then the lexicographically smallest.
std::vector<SchemaMapping> derive_all(const std::vector<SchemaMapping>& direct,
                                      const std::map<AppId, AppDefinition>& apps);

/// Mapping lookup keyed by ordered app pair.
class MappingCatalog {
 public:
  MappingCatalog() = default;
  explicit MappingCatalog(std::vector<SchemaMapping> mappings);

  const SchemaMapping* find(const AppId& from, const AppId& to) const;
  const std::vector<SchemaMapping>& all() const { return mappings_; }

 private:
  std::vector<SchemaMapping> mappings_;
};

/// Result of pushing one source node through a NodeMap.
struct Materialized {
  DataNode node;
  /// Source attributes no attribute map consumed.
  std::map<AttrRef, Value> leftovers;
  /// Destination attribute -> source attribute it was copied from, for the
  /// reference attributes the tracker must re-link.
  std::map<AttrRef, AttrRef> provenance;
};

/// Applies a node map. `new_id` supplies fresh destination identities.
/// Destination rows carry every schema attribute (unmapped ones NULL), and
/// intra-node joins are re-established from the primary row.
Materialized materialize(const NodeMap& nm, const DataNode& src, const AppDefinition& dst,
                         const std::function<std::string()>& new_id);

/// Evaluates a chain for one input value; `row_value` reads concat partners.
Value evaluate(const TransformChain& chain, const Value& input,
               const std::function<Value(const AttrRef&)>& row_value,
               const std::function<std::string()>& new_id);

}  // namespace xmig

#endif  // XMIG_PSM_H_
