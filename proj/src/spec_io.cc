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

#include "xmig/spec_io.h"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace xmig {

using nlohmann::json;

namespace {

const json& member(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.is_object()) throw SpecError(where, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw SpecError(where + "/" + key, "missing key");
  return *it;
}

std::string str_at(const json& obj, const std::string& key, const std::string& where) {
  const json& v = member(obj, key, where);
  if (!v.is_string()) throw SpecError(where + "/" + key, "expected a string");
  return v.get<std::string>();
}

const json& array_at(const json& obj, const std::string& key, const std::string& where,
                     bool optional = false) {
  static const json kEmpty = json::array();
  if (optional && obj.is_object() && !obj.contains(key)) return kEmpty;
  const json& v = member(obj, key, where);
  if (!v.is_array()) throw SpecError(where + "/" + key, "expected an array");
  return v;
}

bool bool_at(const json& obj, const std::string& key, bool fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_boolean()) throw SpecError(where + "/" + key, "expected a boolean");
  return v.get<bool>();
}

AttrRef attr_ref(const json& v, const std::string& where) {
  if (!v.is_string()) throw SpecError(where, "expected \"table.attr\"");
  try {
    return AttrRef::parse(v.get<std::string>());
  } catch (const ModelError& e) {
    throw SpecError(where, e.what());
  }
}

void check_version(const json& content, const std::string& path) {
  if (!content.is_object()) throw SpecError(path, "document is not a JSON object");
  if (!content.contains("version")) throw SpecError(path + "/version", "unversioned document");
  const json& v = content.at("version");
  if (!v.is_number_integer() || v.get<int>() != kSpecFormatVersion) {
    throw SpecError(path + "/version", "unsupported format version " + v.dump());
  }
}

void check_known_attr(const AppSchema& schema, const AttrRef& ref, const std::string& where) {
  if (schema.table(ref.table) == nullptr) {
    throw SpecError(where, "unknown table '" + ref.table + "'");
  }
  if (!schema.has(ref)) throw SpecError(where, "unknown attribute '" + ref.str() + "'");
}

json rule_json(const DisplayRule& r) {
  return json{{"requires_parents_displayed", r.requires_parents_displayed},
              {"exceptions", r.exceptions},
              {"requires_owner_root", r.requires_owner_root},
              {"requires_sharer_root", r.requires_sharer_root}};
}

}  // namespace

SpecDocument SpecDocument::parse(std::string_view text, std::string source_path) {
  json content;
  try {
    content = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw SpecError(source_path, std::string("parse error: ") + e.what());
  }
  return wrap(std::move(content), std::move(source_path));
}

SpecDocument SpecDocument::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SpecError(path.string(), "cannot open");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

SpecDocument SpecDocument::wrap(json content, std::string source_path) {
  check_version(content, source_path);
  SpecDocument doc;
  doc.version = content.at("version").get<int>();
  doc.content = std::move(content);
  doc.source_path = std::move(source_path);
  return doc;
}

AppSchema load_schema(const SpecDocument& doc) {
  const std::string& p = doc.source_path;
  AppSchema s;
  s.app_id = str_at(doc.content, "app", p);
  const json& tables = array_at(doc.content, "tables", p);
  for (std::size_t i = 0; i < tables.size(); ++i) {
    const std::string where = p + "/tables/" + std::to_string(i);
    TableSpec t;
    t.name = str_at(tables[i], "name", where);
    for (const auto& a : array_at(tables[i], "attributes", where)) {
      if (!a.is_string()) throw SpecError(where + "/attributes", "expected strings");
      t.attributes.push_back(a.get<std::string>());
    }
    t.key = str_at(tables[i], "key", where);
    if (tables[i].contains("blob_size")) t.blob_size_attr = str_at(tables[i], "blob_size", where);
    s.tables.push_back(std::move(t));
  }
  try {
    s.validate();
  } catch (const ModelError& e) {
    throw SpecError(p, e.what());
  }
  return s;
}

DagSpec load_dag_spec(const SpecDocument& doc, const AppSchema& schema) {
  const std::string& p = doc.source_path;
  DagSpec dag;
  dag.app_id = str_at(doc.content, "app", p);
  dag.root_type = doc.content.contains("root") ? str_at(doc.content, "root", p) : "";
  const json& nodes = array_at(doc.content, "nodes", p);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const json& n = nodes[i];
    const std::string where = p + "/nodes/" + std::to_string(i);
    NodeTypeSpec t;
    t.type_name = str_at(n, "name", where);
    const auto& tables = array_at(n, "tables", where);
    for (std::size_t k = 0; k < tables.size(); ++k) {
      if (!tables[k].is_string()) throw SpecError(where + "/tables", "expected strings");
      std::string table = tables[k].get<std::string>();
      if (schema.table(table) == nullptr) {
        throw SpecError(where + "/tables/" + std::to_string(k), "unknown table '" + table + "'");
      }
      t.member_tables.push_back(std::move(table));
    }
    const auto& joins = array_at(n, "joins", where, true);
    for (std::size_t k = 0; k < joins.size(); ++k) {
      const std::string jw = where + "/joins/" + std::to_string(k);
      if (!joins[k].is_string()) throw SpecError(jw, "expected \"t.a = t.b\"");
      std::string text = joins[k].get<std::string>();
      auto eq = text.find('=');
      if (eq == std::string::npos) throw SpecError(jw, "expected \"t.a = t.b\"");
      auto strip = [](std::string s) {
        s.erase(std::remove(s.begin(), s.end(), ' '), s.end());
        return s;
      };
      Join j{attr_ref(strip(text.substr(0, eq)), jw), attr_ref(strip(text.substr(eq + 1)), jw)};
      check_known_attr(schema, j.left, jw);
      check_known_attr(schema, j.right, jw);
      t.intra_node_joins.push_back(std::move(j));
    }
    const auto& deps = array_at(n, "depends_on", where, true);
    for (std::size_t k = 0; k < deps.size(); ++k) {
      const std::string dw = where + "/depends_on/" + std::to_string(k);
      DependencyEdge e{attr_ref(member(deps[k], "attr", dw), dw + "/attr"),
                       str_at(deps[k], "parent", dw),
                       attr_ref(member(deps[k], "parent_attr", dw), dw + "/parent_attr")};
      check_known_attr(schema, e.attr, dw + "/attr");
      check_known_attr(schema, e.parent_attr, dw + "/parent_attr");
      t.depends_on.push_back(std::move(e));
    }
    auto root_edges = [&](const std::string& key, std::vector<RootEdge>& out) {
      const auto& arr = array_at(n, key, where, true);
      for (std::size_t k = 0; k < arr.size(); ++k) {
        const std::string ew = where + "/" + key + "/" + std::to_string(k);
        RootEdge e{attr_ref(member(arr[k], "attr", ew), ew + "/attr"),
                   attr_ref(member(arr[k], "root_attr", ew), ew + "/root_attr")};
        check_known_attr(schema, e.attr, ew + "/attr");
        check_known_attr(schema, e.root_attr, ew + "/root_attr");
        out.push_back(std::move(e));
      }
    };
    root_edges("owned_by", t.owned_by);
    root_edges("shared_with", t.shared_with);
    if (n.contains("display_rule")) {
      const json& r = n.at("display_rule");
      const std::string rw = where + "/display_rule";
      if (!r.is_object()) throw SpecError(rw, "expected an object");
      t.display_rule.requires_parents_displayed =
          bool_at(r, "requires_parents_displayed", true, rw);
      t.display_rule.requires_owner_root = bool_at(r, "requires_owner_root", true, rw);
      t.display_rule.requires_sharer_root = bool_at(r, "requires_sharer_root", false, rw);
      for (const auto& ex : array_at(r, "exceptions", rw, true)) {
        if (!ex.is_string()) throw SpecError(rw + "/exceptions", "expected strings");
        t.display_rule.exceptions.push_back(ex.get<std::string>());
      }
    }
    dag.node_types.push_back(std::move(t));
  }
  try {
    dag.validate(schema);
  } catch (const CycleError&) {
    throw;
  } catch (const RootMissing&) {
    throw;
  } catch (const ModelError& e) {
    throw SpecError(p, e.what());
  }
  return dag;
}

SchemaMapping load_mapping(const SpecDocument& doc, const AppDefinition& src,
                           const AppDefinition& dst) {
  const std::string& p = doc.source_path;
  SchemaMapping m;
  m.from_app = str_at(doc.content, "from_app", p);
  m.to_app = str_at(doc.content, "to_app", p);
  if (m.from_app != src.schema.app_id) {
    throw SpecError(p + "/from_app", "expected '" + src.schema.app_id + "', got '" + m.from_app + "'");
  }
  if (m.to_app != dst.schema.app_id) {
    throw SpecError(p + "/to_app", "expected '" + dst.schema.app_id + "', got '" + m.to_app + "'");
  }
  if (doc.content.contains("derivation")) {
    for (const auto& a : array_at(doc.content, "derivation", p)) {
      if (!a.is_string()) throw SpecError(p + "/derivation", "expected strings");
      m.path.push_back(a.get<std::string>());
    }
  } else {
    m.path = {m.from_app, m.to_app};
  }
  const json& maps = array_at(doc.content, "node_maps", p);
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const std::string where = p + "/node_maps/" + std::to_string(i);
    NodeMap nm;
    nm.from_node = str_at(maps[i], "from_node", where);
    nm.to_node = str_at(maps[i], "to_node", where);
    const NodeTypeSpec* from_t = src.dag.type(nm.from_node);
    const NodeTypeSpec* to_t = dst.dag.type(nm.to_node);
    if (from_t == nullptr) {
      throw SpecError(where + "/from_node", "unknown node type '" + nm.from_node + "'");
    }
    if (to_t == nullptr) {
      throw SpecError(where + "/to_node", "unknown node type '" + nm.to_node + "'");
    }
    auto in_node = [](const NodeTypeSpec& t, const AttrRef& r) {
      return std::find(t.member_tables.begin(), t.member_tables.end(), r.table) !=
             t.member_tables.end();
    };
    const json& attrs = array_at(maps[i], "attributes", where);
    for (std::size_t k = 0; k < attrs.size(); ++k) {
      const std::string aw = where + "/attributes/" + std::to_string(k);
      AttributeMap am;
      if (attrs[k].contains("from") && !attrs[k].at("from").is_null()) {
        am.from = attr_ref(attrs[k].at("from"), aw + "/from");
        check_known_attr(src.schema, *am.from, aw + "/from");
        if (!in_node(*from_t, *am.from)) {
          throw SpecError(aw + "/from", "'" + am.from->str() + "' is not part of node '" +
                                            nm.from_node + "'");
        }
      }
      am.to = attr_ref(member(attrs[k], "to", aw), aw + "/to");
      check_known_attr(dst.schema, am.to, aw + "/to");
      if (!in_node(*to_t, am.to)) {
        throw SpecError(aw + "/to", "'" + am.to.str() + "' is not part of node '" + nm.to_node + "'");
      }
      std::string transform = attrs[k].contains("transform")
                                  ? str_at(attrs[k], "transform", aw)
                                  : std::string("copy");
      try {
        am.chain = parse_chain(transform);
      } catch (const std::exception& e) {
        throw SpecError(aw + "/transform", e.what());
      }
      for (const auto& t : am.chain) {
        if (t.kind == TransformKind::kConcat) {
          check_known_attr(src.schema, AttrRef::parse(t.arg), aw + "/transform");
        }
      }
      bool needs_input = std::any_of(am.chain.begin(), am.chain.end(), [](const Transform& t) {
        return !t.ignores_input() && t.kind != TransformKind::kTruncate;
      });
      if (!am.from && needs_input) throw SpecError(aw + "/from", "transform needs a source");
      nm.attributes.push_back(std::move(am));
    }
    m.node_maps.push_back(std::move(nm));
  }
  try {
    m.check_structure();
  } catch (const MappingError& e) {
    throw SpecError(p + "/node_maps", e.what());
  }
  return m;
}

SpecDocument save_schema(const AppSchema& schema) {
  json tables = json::array();
  for (const auto& t : schema.tables) {
    json jt{{"name", t.name}, {"attributes", t.attributes}, {"key", t.key}};
    if (!t.blob_size_attr.empty()) jt["blob_size"] = t.blob_size_attr;
    tables.push_back(std::move(jt));
  }
  return SpecDocument::wrap(
      json{{"version", kSpecFormatVersion}, {"app", schema.app_id}, {"tables", tables}});
}

SpecDocument save_dag_spec(const DagSpec& dag, const AppSchema& schema) {
  dag.validate(schema);
  json nodes = json::array();
  for (const auto& t : dag.node_types) {
    json joins = json::array();
    for (const auto& j : t.intra_node_joins) joins.push_back(j.left.str() + " = " + j.right.str());
    json deps = json::array();
    for (const auto& e : t.depends_on) {
      deps.push_back({{"attr", e.attr.str()},
                      {"parent", e.parent_type},
                      {"parent_attr", e.parent_attr.str()}});
    }
    auto root_edges = [](const std::vector<RootEdge>& edges) {
      json out = json::array();
      for (const auto& e : edges) {
        out.push_back({{"attr", e.attr.str()}, {"root_attr", e.root_attr.str()}});
      }
      return out;
    };
    nodes.push_back({{"name", t.type_name},
                     {"tables", t.member_tables},
                     {"joins", joins},
                     {"depends_on", deps},
                     {"owned_by", root_edges(t.owned_by)},
                     {"shared_with", root_edges(t.shared_with)},
                     {"display_rule", rule_json(t.display_rule)}});
  }
  return SpecDocument::wrap(json{{"version", kSpecFormatVersion},
                                 {"app", dag.app_id},
                                 {"root", dag.root_type},
                                 {"nodes", nodes}});
}

SpecDocument save_mapping(const SchemaMapping& m) {
  json maps = json::array();
  for (const auto& nm : m.node_maps) {
    json attrs = json::array();
    for (const auto& a : nm.attributes) {
      json ja{{"to", a.to.str()}, {"transform", chain_str(a.chain)}};
      if (a.from) ja["from"] = a.from->str();
      attrs.push_back(std::move(ja));
    }
    maps.push_back({{"from_node", nm.from_node}, {"to_node", nm.to_node}, {"attributes", attrs}});
  }
  json doc{{"version", kSpecFormatVersion},
           {"from_app", m.from_app},
           {"to_app", m.to_app},
           {"node_maps", maps}};
  if (!m.direct()) doc["derivation"] = m.path;
  return SpecDocument::wrap(std::move(doc));
}

std::map<AppId, AppDefinition> load_app_directory(const std::filesystem::path& root) {
  std::map<AppId, AppDefinition> out;
  if (!std::filesystem::is_directory(root)) throw SpecError(root.string(), "not a directory");
  std::vector<std::filesystem::path> dirs;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (entry.is_directory() && std::filesystem::exists(entry.path() / "dag.json")) {
      dirs.push_back(entry.path());
    }
  }
  std::sort(dirs.begin(), dirs.end());
  for (const auto& d : dirs) {
    AppDefinition def;
    def.schema = load_schema(SpecDocument::read(d / "schema.json"));
    def.dag = load_dag_spec(SpecDocument::read(d / "dag.json"), def.schema);
    AppId id = def.schema.app_id;
    out.emplace(std::move(id), std::move(def));
  }
  return out;
}

std::vector<SchemaMapping> load_mapping_directory(const std::filesystem::path& dir,
                                                  const std::map<AppId, AppDefinition>& apps) {
  std::vector<SchemaMapping> out;
  if (!std::filesystem::is_directory(dir)) return out;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    SpecDocument doc = SpecDocument::read(f);
    std::string from = str_at(doc.content, "from_app", doc.source_path);
    std::string to = str_at(doc.content, "to_app", doc.source_path);
    auto s = apps.find(from);
    auto d = apps.find(to);
    if (s == apps.end()) throw SpecError(doc.source_path + "/from_app", "unknown app '" + from + "'");
    if (d == apps.end()) throw SpecError(doc.source_path + "/to_app", "unknown app '" + to + "'");
    out.push_back(load_mapping(doc, s->second, d->second));
  }
  return out;
}

}  // namespace xmig
