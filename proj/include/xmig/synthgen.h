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

// Synthetic social-network datasets and the four bundled mini applications.
//
// A dataset is generated once as an application-neutral world (users with
// Pareto popularity, follows, posts, interactions, conversations) and then
// rendered into a concrete application through a role binding that says which
// node type and attributes play each role.

#ifndef XMIG_SYNTHGEN_H_
#define XMIG_SYNTHGEN_H_

#include <filesystem>

#include "json.hpp"
#include "xmig/psm.h"
#include "xmig/store.h"

namespace xmig {

inline const AppId kDiaspora = "miniDiaspora";
inline const AppId kMastodon = "miniMastodon";
inline const AppId kTwitter = "miniTwitter";
inline const AppId kGnuSocial = "miniGnuSocial";

struct GenConfig {
  std::size_t users = 100;
  std::uint64_t seed = 42;
  double pareto_shape = 1.16;

  double posts_per_user = 7.5;
  double likes_per_post = 4.0;
  double comments_per_post = 1.8;
  double photos_per_post = 0.49;
  double conversations_per_user = 0.081;
  double messages_per_user = 5.4;
  double follows_per_user = 8.0;
  /// Probability that a follow is returned; mutual follows are friends.
  double mutuality = 0.3;
  /// Probability that a like or comment on someone else's post notifies them.
  double notification_rate = 0.3;
  /// Fraction of friend pairs exchanging sharing grants.
  double grant_fraction = 0.5;

  std::int64_t start_time = 1'600'000'000;
  /// Range the harness draws per-user migration cutoffs from; both zero
  /// means no cutoff.
  std::int64_t cutoff_min = 0;
  std::int64_t cutoff_max = 0;

  /// Throws std::invalid_argument.
  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults.
  static GenConfig from_json(const nlohmann::json& j);
};

/// Node type and attributes playing one role in an application. Field names:
/// key, owner, parent, actor, peer, handle, name, bio, text, lang, url, size,
/// kind, subject, created_at.
struct RoleBinding {
  std::string type;
  std::map<std::string, AttrRef> fields;
};

/// Role name -> binding. Roles: user, post, comment, like, photo,
/// notification, conversation, message. Absent roles are not generated.
using AppBinding = std::map<std::string, RoleBinding>;

/// Binding of a bundled application. Throws std::invalid_argument.
AppBinding binding_for(const AppId& app);

struct GenStats {
  std::map<std::string, std::size_t> nodes;  // role -> count rendered
  std::size_t follows = 0;
  std::size_t friend_pairs = 0;
  std::size_t grants = 0;
  /// Content nodes (everything but roots) per user key, for skew checks.
  std::map<std::string, std::size_t> content_by_user;
};

/// Fills an empty store. Deterministic in the config.
GenStats generate(const GenConfig& cfg, AppStore& store, const AppBinding& binding);
GenStats generate(const GenConfig& cfg, AppStore& store);

/// The bundled applications and their direct mappings, plus the catalog
/// derived from them.
struct Fixtures {
  std::map<AppId, AppDefinition> apps;
  std::vector<SchemaMapping> direct;
  MappingCatalog catalog;
};

/// Reads <dir>/<app>/{schema,dag}.json and <dir>/mappings/*.json.
Fixtures load_fixtures(const std::filesystem::path& dir);
/// Fixture directory compiled into the build, overridable by XMIG_FIXTURES.
std::filesystem::path default_fixture_dir();

}  // namespace xmig

#endif  // XMIG_SYNTHGEN_H_
