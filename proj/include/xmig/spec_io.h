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

// JSON documents for schemas, DAG specifications and schema mappings.

#ifndef XMIG_SPEC_IO_H_
#define XMIG_SPEC_IO_H_

#include <filesystem>
#include <string>

#include "json.hpp"
#include "xmig/model.h"
#include "xmig/psm.h"

namespace xmig {

inline constexpr int kSpecFormatVersion = 1;

/// Malformed document. `where()` is a slash-separated location inside it.
class SpecError : public std::runtime_error {
 public:
  SpecError(std::string where, const std::string& what)
      : std::runtime_error(where + ": " + what), where_(std::move(where)) {}
  const std::string& where() const { return where_; }

 private:
  std::string where_;
};

struct SpecDocument {
  nlohmann::json content;
  std::string source_path;
  int version = kSpecFormatVersion;

  /// Parses text; rejects unparsable or unversioned documents.
  static SpecDocument parse(std::string_view text, std::string source_path = "<memory>");
  static SpecDocument read(const std::filesystem::path& path);
  static SpecDocument wrap(nlohmann::json content, std::string source_path = "<memory>");
  std::string dump() const { return content.dump(2) + "\n"; }
};

AppSchema load_schema(const SpecDocument& doc);
/// Throws CycleError, RootMissing or SpecError.
DagSpec load_dag_spec(const SpecDocument& doc, const AppSchema& schema);
SchemaMapping load_mapping(const SpecDocument& doc, const AppDefinition& src,
                           const AppDefinition& dst);

SpecDocument save_schema(const AppSchema& schema);
/// Validates before serializing.
SpecDocument save_dag_spec(const DagSpec& dag, const AppSchema& schema);
/// Composed mappings carry a "derivation" key with their app path.
SpecDocument save_mapping(const SchemaMapping& m);

/// Loads fixtures/<app>/{schema,dag}.json for every app directory under root.
std::map<AppId, AppDefinition> load_app_directory(const std::filesystem::path& root);
/// Loads every *.json mapping under dir, validated against `apps`.
std::vector<SchemaMapping> load_mapping_directory(const std::filesystem::path& dir,
                                                  const std::map<AppId, AppDefinition>& apps);

}  // namespace xmig

#endif  // XMIG_SPEC_IO_H_
