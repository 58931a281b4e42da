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

#include "xmig/psm.h"

#include <algorithm>
#include <charconv>
#include <tuple>
#include <set>

namespace xmig {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

/// "name(arg)" -> {name, arg}; "name" -> {name, nullopt}.
std::pair<std::string_view, std::optional<std::string_view>> split_call(std::string_view s) {
  auto open = s.find('(');
  if (open == std::string_view::npos) return {s, std::nullopt};
  if (s.back() != ')') return {s, std::nullopt};
  return {s.substr(0, open), s.substr(open + 1, s.size() - open - 2)};
}

}  // namespace

Transform Transform::parse(std::string_view text) {
  text = trim(text);
  auto [name, arg] = split_call(text);
  if (name == "copy" && !arg) return {TransformKind::kCopy, {}};
  if (name == "newID" && (!arg || arg->empty())) return {TransformKind::kNewId, {}};
  if (name == "placeholder" && !arg) return {TransformKind::kPlaceholder, {}};
  if (name == "constant" && arg) return {TransformKind::kConstant, std::string(*arg)};
  if (name == "concat" && arg) {
    AttrRef::parse(*arg);  // validates shape
    return {TransformKind::kConcat, std::string(*arg)};
  }
  if (name == "truncate" && arg) {
    std::size_t n = 0;
    auto [p, ec] = std::from_chars(arg->data(), arg->data() + arg->size(), n);
    if (ec != std::errc() || p != arg->data() + arg->size()) {
      throw MappingError("truncate length '" + std::string(*arg) + "' is not a number");
    }
    return {TransformKind::kTruncate, std::string(*arg)};
  }
  throw MappingError("unknown transform '" + std::string(text) + "'");
}

std::string Transform::str() const {
  switch (kind) {
    case TransformKind::kCopy: return "copy";
    case TransformKind::kConstant: return "constant(" + arg + ")";
    case TransformKind::kNewId: return "newID";
    case TransformKind::kConcat: return "concat(" + arg + ")";
    case TransformKind::kTruncate: return "truncate(" + arg + ")";
    case TransformKind::kPlaceholder: return "placeholder";
  }
  return "copy";
}

TransformChain parse_chain(std::string_view text) {
  TransformChain out;
  std::size_t start = 0;
  while (true) {
    auto bar = text.find('|', start);
    out.push_back(Transform::parse(text.substr(start, bar == std::string_view::npos
                                                          ? std::string_view::npos
                                                          : bar - start)));
    if (bar == std::string_view::npos) break;
    start = bar + 1;
  }
  return out;
}

std::string chain_str(const TransformChain& chain) {
  std::string out;
  for (const auto& t : chain) out += (out.empty() ? "" : " | ") + t.str();
  return out.empty() ? "copy" : out;
}

TransformChain simplify(TransformChain chain) {
  auto last_newid = std::find_if(chain.rbegin(), chain.rend(), [](const Transform& t) {
    return t.kind == TransformKind::kNewId;
  });
  if (last_newid != chain.rend()) {
    chain.erase(chain.begin(), std::prev(last_newid.base()));
  }
  std::erase_if(chain, [](const Transform& t) { return t.kind == TransformKind::kCopy; });
  if (chain.empty()) chain.push_back({TransformKind::kCopy, {}});
  return chain;
}

std::set<AttrRef> NodeMap::consumed() const {
  std::set<AttrRef> out;
  for (const auto& a : attributes) {
    if (a.from) out.insert(*a.from);
    for (const auto& t : a.chain) {
      if (t.kind == TransformKind::kConcat) out.insert(AttrRef::parse(t.arg));
    }
  }
  return out;
}

const AttributeMap* NodeMap::to_attr(const AttrRef& to) const {
  for (const auto& a : attributes) {
    if (a.to == to) return &a;
  }
  return nullptr;
}

const NodeMap* SchemaMapping::for_source(std::string_view from_node) const {
  for (const auto& nm : node_maps) {
    if (nm.from_node == from_node) return &nm;
  }
  return nullptr;
}

void SchemaMapping::check_structure() const {
  std::set<std::pair<std::string, std::string>> pairs;
  std::set<std::string> sources;
  for (const auto& nm : node_maps) {
    if (!pairs.emplace(nm.from_node, nm.to_node).second) {
      throw MappingError(from_app + "->" + to_app + ": duplicate node map " + nm.from_node +
                         " -> " + nm.to_node);
    }
    if (!sources.insert(nm.from_node).second) {
      throw MappingError(from_app + "->" + to_app + ": source node '" + nm.from_node +
                         "' is mapped more than once");
    }
    std::set<AttrRef> targets;
    for (const auto& a : nm.attributes) {
      if (!targets.insert(a.to).second) {
        throw MappingError(from_app + "->" + to_app + ": duplicate destination attribute '" +
                           a.to.str() + "' in " + nm.from_node + " -> " + nm.to_node);
      }
    }
  }
}

const NodeCoverage* CoverageReport::node(std::string_view type) const {
  for (const auto& n : nodes) {
    if (n.node_type == type) return &n;
  }
  return nullptr;
}

SchemaMapping compose(const SchemaMapping& ab, const SchemaMapping& bc) {
  if (ab.to_app != bc.from_app) {
    throw CompositionDomainError("cannot compose " + ab.from_app + "->" + ab.to_app + " with " +
                                 bc.from_app + "->" + bc.to_app);
  }
  SchemaMapping out;
  out.from_app = ab.from_app;
  out.to_app = bc.to_app;
  out.path = ab.path.empty() ? std::vector<AppId>{ab.from_app, ab.to_app} : ab.path;
  const auto& tail = bc.path.empty() ? std::vector<AppId>{bc.from_app, bc.to_app} : bc.path;
  out.path.insert(out.path.end(), tail.begin() + 1, tail.end());

  for (const auto& first : ab.node_maps) {
    const NodeMap* second = bc.for_source(first.to_node);
    if (second == nullptr) continue;
    NodeMap nm{first.from_node, second->to_node, {}};
    for (const auto& am2 : second->attributes) {
      AttributeMap composed;
      composed.to = am2.to;
      TransformChain chain;
      std::size_t leg2_begin = 0;
      if (!am2.from) {
        composed.from = std::nullopt;
        chain = am2.chain;
      } else {
        const AttributeMap* am1 = first.to_attr(*am2.from);
        if (am1 == nullptr) continue;
        composed.from = am1->from;
        chain = am1->chain;
        leg2_begin = chain.size();
        chain.insert(chain.end(), am2.chain.begin(), am2.chain.end());
      }
      // concat partners named in leg 2 are b-side attributes; translate them
      // through pure copies in leg 1, otherwise the attribute does not survive.
      bool ok = true;
      for (std::size_t i = leg2_begin; i < chain.size(); ++i) {
        Transform& t = chain[i];
        if (t.kind != TransformKind::kConcat) continue;
        const AttributeMap* src = first.to_attr(AttrRef::parse(t.arg));
        bool pure = src != nullptr && src->from &&
                    std::all_of(src->chain.begin(), src->chain.end(), [](const Transform& x) {
                      return x.kind == TransformKind::kCopy;
                    });
        if (!pure) {
          ok = false;
          break;
        }
        t.arg = src->from->str();
      }
      if (!ok) continue;
      composed.chain = simplify(std::move(chain));
      if (!composed.from &&
          !std::all_of(composed.chain.begin(), composed.chain.end(),
                       [](const Transform& t) { return t.ignores_input() ||
                                                       t.kind == TransformKind::kTruncate; })) {
        continue;
      }
      nm.attributes.push_back(std::move(composed));
    }
    out.node_maps.push_back(std::move(nm));
  }
  std::set<std::pair<std::string, std::string>> pairs;
  for (const auto& nm : out.node_maps) {
    if (!pairs.emplace(nm.from_node, nm.to_node).second) {
      throw MappingError("composition " + out.from_app + "->" + out.to_app +
                         " yields conflicting node maps for " + nm.from_node + " -> " +
                         nm.to_node);
    }
  }
  return out;
}

CoverageReport coverage(const SchemaMapping& m, const AppDefinition& src) {
  CoverageReport report;
  std::size_t mapped = 0;
  std::size_t total = 0;
  for (const auto& t : src.dag.node_types) {
    NodeCoverage nc;
    nc.node_type = t.type_name;
    const NodeMap* nm = m.for_source(t.type_name);
    std::set<AttrRef> used = nm ? nm->consumed() : std::set<AttrRef>{};
    for (const auto& table : t.member_tables) {
      const TableSpec* ts = src.schema.table(table);
      if (ts == nullptr) continue;
      for (const auto& a : ts->attributes) {
        AttrRef ref{table, a};
        ++nc.total;
        if (used.contains(ref)) {
          ++nc.mapped;
        } else {
          nc.unmapped.push_back(ref);
        }
      }
    }
    mapped += nc.mapped;
    total += nc.total;
    report.nodes.push_back(std::move(nc));
  }
  report.aggregate = total == 0 ? 1.0 : double(mapped) / double(total);
  return report;
}

std::vector<SchemaMapping> derive_all(const std::vector<SchemaMapping>& direct,
                                      const std::map<AppId, AppDefinition>& apps) {
  std::map<AppId, std::vector<const SchemaMapping*>> out_edges;
  std::map<std::pair<AppId, AppId>, const SchemaMapping*> direct_by_pair;
  std::set<AppId> nodes;
  for (const auto& m : direct) {
    out_edges[m.from_app].push_back(&m);
    direct_by_pair[{m.from_app, m.to_app}] = &m;
    nodes.insert(m.from_app);
    nodes.insert(m.to_app);
  }
  for (auto& [_, v] : out_edges) {
    std::sort(v.begin(), v.end(),
              [](const SchemaMapping* a, const SchemaMapping* b) { return a->to_app < b->to_app; });
  }

  struct Candidate {
    SchemaMapping mapping;
    double cov;
  };
  std::map<std::pair<AppId, AppId>, Candidate> best;

  auto better = [](const Candidate& a, const Candidate& b) {
    if (a.cov != b.cov) return a.cov > b.cov;
    if (a.mapping.path.size() != b.mapping.path.size()) {
      return a.mapping.path.size() < b.mapping.path.size();
    }
    return a.mapping.path < b.mapping.path;
  };

  for (const auto& x : nodes) {
    // DFS over simple paths from x.
    std::vector<AppId> path{x};
    std::set<AppId> on_path{x};
    std::function<void(const SchemaMapping*)> extend = [&](const SchemaMapping* acc) {
      const AppId& here = path.back();
      for (const SchemaMapping* e : out_edges[here]) {
        if (on_path.contains(e->to_app)) continue;
        SchemaMapping next;
        try {
          next = acc == nullptr ? *e : compose(*acc, *e);
        } catch (const MappingError&) {
          continue;
        }
        if (next.path.empty()) next.path = {e->from_app, e->to_app};
        std::pair<AppId, AppId> key{x, e->to_app};
        if (!direct_by_pair.contains(key)) {
          auto app = apps.find(x);
          double cov = app == apps.end() ? 0.0 : coverage(next, app->second).aggregate;
          Candidate c{next, cov};
          auto it = best.find(key);
          if (it == best.end() || better(c, it->second)) best.insert_or_assign(key, std::move(c));
        }
        path.push_back(e->to_app);
        on_path.insert(e->to_app);
        extend(&next);
        on_path.erase(e->to_app);
        path.pop_back();
      }
    };
    extend(nullptr);
  }

  std::vector<SchemaMapping> out;
  for (const auto& [key, m] : direct_by_pair) {
    SchemaMapping d = *m;
    if (d.path.empty()) d.path = {d.from_app, d.to_app};
    out.push_back(std::move(d));
  }
  for (auto& [key, c] : best) out.push_back(std::move(c.mapping));
  std::sort(out.begin(), out.end(), [](const SchemaMapping& a, const SchemaMapping& b) {
    return std::tie(a.from_app, a.to_app) < std::tie(b.from_app, b.to_app);
  });
  return out;
}

MappingCatalog::MappingCatalog(std::vector<SchemaMapping> mappings)
    : mappings_(std::move(mappings)) {}

const SchemaMapping* MappingCatalog::find(const AppId& from, const AppId& to) const {
  for (const auto& m : mappings_) {
    if (m.from_app == from && m.to_app == to) return &m;
  }
  return nullptr;
}

Value evaluate(const TransformChain& chain, const Value& input,
               const std::function<Value(const AttrRef&)>& row_value,
               const std::function<std::string()>& new_id) {
  Value v = input;
  for (const auto& t : chain) {
    switch (t.kind) {
      case TransformKind::kCopy:
      case TransformKind::kPlaceholder:
        break;
      case TransformKind::kConstant:
        v = t.arg;
        break;
      case TransformKind::kNewId:
        v = new_id();
        break;
      case TransformKind::kConcat: {
        Value other = row_value(AttrRef::parse(t.arg));
        if (!other.empty()) v = v.empty() ? other : v + " " + other;
        break;
      }
      case TransformKind::kTruncate: {
        std::size_t n = std::stoul(t.arg);
        if (v.size() > n && !is_placeholder(v)) v.resize(n);
        break;
      }
    }
  }
  return v;
}

Materialized materialize(const NodeMap& nm, const DataNode& src, const AppDefinition& dst,
                         const std::function<std::string()>& new_id) {
  const NodeTypeSpec* t = dst.dag.type(nm.to_node);
  if (t == nullptr) {
    throw MappingError("destination node type '" + nm.to_node + "' does not exist in " +
                       dst.dag.app_id);
  }
  Materialized out;
  for (const auto& table : t->member_tables) {
    Row& row = out.node.rows[table];
    for (const auto& a : dst.schema.table(table)->attributes) row[a] = "";
  }
  auto read = [&](const AttrRef& r) { return src.get(r); };
  for (const auto& am : nm.attributes) {
    Value in = am.from ? src.get(*am.from) : Value{};
    out.node.set(am.to, evaluate(am.chain, in, read, new_id));
    if (am.from) out.provenance[am.to] = *am.from;
  }
  for (const auto& j : t->intra_node_joins) out.node.set(j.right, out.node.get(j.left));
  const TableSpec* primary = dst.schema.table(t->primary_table());
  out.node.id = NodeId{dst.dag.app_id, t->type_name,
                       out.node.get(AttrRef{primary->name, primary->key})};

  std::set<AttrRef> used = nm.consumed();
  for (const auto& [table, row] : src.rows) {
    for (const auto& [attr, value] : row) {
      AttrRef ref{table, attr};
      if (!used.contains(ref)) out.leftovers[ref] = value;
    }
  }
  return out;
}

}  // namespace xmig
