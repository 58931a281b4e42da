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

#include "xmig/model.h"

#include <algorithm>
#include <functional>
#include <map>

namespace xmig {

AttrRef AttrRef::parse(std::string_view qualified) {
  auto dot = qualified.find('.');
  if (dot == std::string_view::npos || dot == 0 || dot + 1 == qualified.size()) {
    throw ModelError("attribute reference '" + std::string(qualified) +
                     "' is not of the form table.attr");
  }
  return AttrRef{std::string(qualified.substr(0, dot)), std::string(qualified.substr(dot + 1))};
}

bool TableSpec::has(std::string_view attr) const {
  return std::find(attributes.begin(), attributes.end(), attr) != attributes.end();
}

const TableSpec* AppSchema::table(std::string_view name) const {
  for (const auto& t : tables) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

bool AppSchema::has(const AttrRef& ref) const {
  const TableSpec* t = table(ref.table);
  return t != nullptr && t->has(ref.attr);
}

void AppSchema::validate() const {
  if (app_id.empty()) throw ModelError("schema has no app id");
  std::set<std::string> names;
  for (const auto& t : tables) {
    if (!names.insert(t.name).second) {
      throw ModelError("duplicate table '" + t.name + "' in app " + app_id);
    }
    std::set<std::string> attrs;
    for (const auto& a : t.attributes) {
      if (!attrs.insert(a).second) {
        throw ModelError("duplicate attribute '" + t.name + "." + a + "'");
      }
    }
    if (t.key.empty() || !t.has(t.key)) {
      throw ModelError("table '" + t.name + "' has no valid key attribute");
    }
    if (!t.blob_size_attr.empty() && !t.has(t.blob_size_attr)) {
      throw ModelError("table '" + t.name + "' blob size attribute '" + t.blob_size_attr +
                       "' does not exist");
    }
  }
}

const NodeTypeSpec* DagSpec::type(std::string_view name) const {
  for (const auto& t : node_types) {
    if (t.type_name == name) return &t;
  }
  return nullptr;
}

const NodeTypeSpec& DagSpec::root() const {
  const NodeTypeSpec* r = type(root_type);
  if (r == nullptr) throw RootMissing("app " + app_id + " declares no root node type");
  return *r;
}

const NodeTypeSpec* DagSpec::type_of_table(std::string_view table) const {
  for (const auto& t : node_types) {
    if (std::find(t.member_tables.begin(), t.member_tables.end(), table) != t.member_tables.end()) {
      return &t;
    }
  }
  return nullptr;
}

std::set<AttrRef> DagSpec::reference_attrs(const NodeTypeSpec& t) const {
  std::set<AttrRef> out;
  for (const auto& e : t.depends_on) out.insert(e.attr);
  for (const auto& e : t.owned_by) out.insert(e.attr);
  for (const auto& e : t.shared_with) out.insert(e.attr);
  return out;
}

namespace {

bool is_member(const NodeTypeSpec& t, const std::string& table) {
  return std::find(t.member_tables.begin(), t.member_tables.end(), table) !=
         t.member_tables.end();
}

void check_attr(const AppSchema& schema, const NodeTypeSpec& owner, const AttrRef& ref,
                const std::string& where) {
  if (schema.table(ref.table) == nullptr) {
    throw ModelError(where + ": unknown table '" + ref.table + "'");
  }
  if (!schema.has(ref)) {
    throw ModelError(where + ": unknown attribute '" + ref.str() + "'");
  }
  if (!is_member(owner, ref.table)) {
    throw ModelError(where + ": table '" + ref.table + "' is not a member of node type '" +
                     owner.type_name + "'");
  }
}

}  // namespace

void DagSpec::validate(const AppSchema& schema) const {
  if (app_id != schema.app_id) {
    throw ModelError("DAG app '" + app_id + "' does not match schema app '" + schema.app_id + "'");
  }
  if (root_type.empty() || type(root_type) == nullptr) {
    throw RootMissing("app " + app_id + ": root type '" + root_type + "' is not declared");
  }
  std::set<std::string> names;
  std::map<std::string, std::string> table_owner;
  for (const auto& t : node_types) {
    const std::string where = app_id + "/nodes/" + t.type_name;
    if (t.type_name.empty()) throw ModelError(app_id + ": node type without a name");
    if (!names.insert(t.type_name).second) {
      throw ModelError(where + ": duplicate node type");
    }
    if (t.member_tables.empty()) throw ModelError(where + ": node type has no member tables");
    for (const auto& table : t.member_tables) {
      if (schema.table(table) == nullptr) {
        throw ModelError(where + "/tables: unknown table '" + table + "'");
      }
      auto [it, fresh] = table_owner.emplace(table, t.type_name);
      if (!fresh) {
        throw ModelError(where + "/tables: table '" + table + "' already belongs to '" +
                         it->second + "'");
      }
    }
    for (const auto& j : t.intra_node_joins) {
      check_attr(schema, t, j.left, where + "/joins");
      check_attr(schema, t, j.right, where + "/joins");
    }
    if (t.member_tables.size() > 1) {
      // every non-primary member must be bound to the primary row by a join
      for (std::size_t i = 1; i < t.member_tables.size(); ++i) {
        bool bound = std::any_of(t.intra_node_joins.begin(), t.intra_node_joins.end(),
                                 [&](const Join& j) {
                                   return j.left.table == t.primary_table() &&
                                          j.right.table == t.member_tables[i];
                                 });
        if (!bound) {
          throw ModelError(where + "/joins: member table '" + t.member_tables[i] +
                           "' is not joined to the primary table");
        }
      }
    }
  }
  const NodeTypeSpec& r = root();
  for (const auto& t : node_types) {
    const std::string where = app_id + "/nodes/" + t.type_name;
    for (const auto& e : t.depends_on) {
      check_attr(schema, t, e.attr, where + "/depends_on");
      const NodeTypeSpec* parent = type(e.parent_type);
      if (parent == nullptr) {
        throw ModelError(where + "/depends_on: unknown node type '" + e.parent_type + "'");
      }
      check_attr(schema, *parent, e.parent_attr, where + "/depends_on");
    }
    for (const auto& e : t.owned_by) {
      check_attr(schema, t, e.attr, where + "/owned_by");
      check_attr(schema, r, e.root_attr, where + "/owned_by");
    }
    for (const auto& e : t.shared_with) {
      check_attr(schema, t, e.attr, where + "/shared_with");
      check_attr(schema, r, e.root_attr, where + "/shared_with");
    }
    if (t.type_name != root_type && t.owned_by.empty()) {
      throw ModelError(where + "/owned_by: non-root node type has no ownership edge");
    }
    for (const auto& ex : t.display_rule.exceptions) {
      bool declared = std::any_of(t.depends_on.begin(), t.depends_on.end(),
                                  [&](const DependencyEdge& e) { return e.parent_type == ex; });
      if (!declared) {
        throw ModelError(where + "/display_rule: exception '" + ex +
                         "' is not a dependency parent");
      }
    }
  }

  // Type-level cycle check over dependency edges.
  enum class Mark { kNone, kActive, kDone };
  std::map<std::string, Mark> mark;
  std::vector<std::string> stack;
  std::function<void(const NodeTypeSpec&)> visit = [&](const NodeTypeSpec& t) {
    mark[t.type_name] = Mark::kActive;
    stack.push_back(t.type_name);
    for (const auto& e : t.depends_on) {
      Mark m = mark[e.parent_type];
      if (m == Mark::kActive) {
        auto from = std::find(stack.begin(), stack.end(), e.parent_type);
        std::vector<std::string> cycle(from, stack.end());
        cycle.push_back(e.parent_type);
        std::string path;
        for (const auto& c : cycle) path += (path.empty() ? "" : " -> ") + c;
        throw CycleError(app_id + ": dependency cycle " + path, cycle);
      }
      if (m == Mark::kNone) visit(*type(e.parent_type));
    }
    stack.pop_back();
    mark[t.type_name] = Mark::kDone;
  };
  for (const auto& t : node_types) {
    if (mark[t.type_name] == Mark::kNone) visit(t);
  }
}

NodeId NodeId::parse(std::string_view s) {
  auto a = s.find('/');
  auto b = a == std::string_view::npos ? a : s.find('/', a + 1);
  if (b == std::string_view::npos) {
    throw ModelError("node id '" + std::string(s) + "' is not of the form app/type/key");
  }
  return NodeId{std::string(s.substr(0, a)), std::string(s.substr(a + 1, b - a - 1)),
                std::string(s.substr(b + 1))};
}

std::strong_ordering natural_compare(std::string_view a, std::string_view b) {
  auto numeric = [](std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
  };
  if (numeric(a) && numeric(b) && a.size() != b.size()) return a.size() <=> b.size();
  int c = a.compare(b);
  return c < 0 ? std::strong_ordering::less
               : (c > 0 ? std::strong_ordering::greater : std::strong_ordering::equal);
}

std::strong_ordering operator<=>(const NodeId& a, const NodeId& b) {
  if (auto c = a.app <=> b.app; c != 0) return c;
  if (auto c = a.type <=> b.type; c != 0) return c;
  return natural_compare(a.key, b.key);
}

std::string to_string(MigrationType t) {
  return t == MigrationType::kDeletion ? "deletion" : "independent";
}

MigrationType migration_type_from_string(std::string_view s) {
  if (s == "deletion") return MigrationType::kDeletion;
  if (s == "independent") return MigrationType::kIndependent;
  throw ModelError("unknown migration type '" + std::string(s) + "'");
}

const Value& DataNode::get(const AttrRef& ref) const {
  static const Value kNull;
  auto t = rows.find(ref.table);
  if (t == rows.end()) return kNull;
  auto a = t->second.find(ref.attr);
  return a == t->second.end() ? kNull : a->second;
}

void DataNode::set(const AttrRef& ref, Value v) { rows[ref.table][ref.attr] = std::move(v); }

bool SharingGrant::covers(const DataNode& n) const {
  if (node) return *node == n.id;
  if (node_type != n.id.type) return false;
  if (predicate.empty()) return true;
  auto eq = predicate.find('=');
  if (eq == std::string::npos) return false;
  return n.get(AttrRef::parse(predicate.substr(0, eq))) == predicate.substr(eq + 1);
}

bool is_placeholder(std::string_view v) { return v.starts_with(kPlaceholderPrefix); }

Value make_placeholder(const NodeId& original) {
  return std::string(kPlaceholderPrefix) + original.str();
}

NodeId placeholder_target(std::string_view v) {
  if (!is_placeholder(v)) throw ModelError("value is not a placeholder");
  return NodeId::parse(v.substr(kPlaceholderPrefix.size()));
}

}  // namespace xmig
