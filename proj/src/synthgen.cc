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

#include "xmig/synthgen.h"

#include <cmath>
#include <cstdlib>
#include <random>

#include "xmig/spec_io.h"

#ifndef XMIG_FIXTURE_DIR
#define XMIG_FIXTURE_DIR "fixtures"
#endif

namespace xmig {

using json = nlohmann::json;

void GenConfig::validate() const {
  if (users < 1) throw std::invalid_argument("user count must be at least 1");
  if (!(pareto_shape > 0)) throw std::invalid_argument("Pareto shape must be positive");
  for (double r : {posts_per_user, likes_per_post, comments_per_post, photos_per_post,
                   conversations_per_user, messages_per_user, follows_per_user}) {
    if (r < 0 || !std::isfinite(r)) throw std::invalid_argument("volume multipliers must be >= 0");
  }
  for (double p : {mutuality, notification_rate, grant_fraction}) {
    if (p < 0 || p > 1) throw std::invalid_argument("probabilities must lie in [0, 1]");
  }
  if (cutoff_min > cutoff_max) throw std::invalid_argument("cutoff range is empty");
}

json GenConfig::to_json() const {
  return json{{"users", users},
              {"seed", seed},
              {"pareto_shape", pareto_shape},
              {"posts_per_user", posts_per_user},
              {"likes_per_post", likes_per_post},
              {"comments_per_post", comments_per_post},
              {"photos_per_post", photos_per_post},
              {"conversations_per_user", conversations_per_user},
              {"messages_per_user", messages_per_user},
              {"follows_per_user", follows_per_user},
              {"mutuality", mutuality},
              {"notification_rate", notification_rate},
              {"grant_fraction", grant_fraction},
              {"start_time", start_time},
              {"cutoff_min", cutoff_min},
              {"cutoff_max", cutoff_max}};
}

GenConfig GenConfig::from_json(const json& j) {
  GenConfig c;
  c.users = j.value("users", c.users);
  c.seed = j.value("seed", c.seed);
  c.pareto_shape = j.value("pareto_shape", c.pareto_shape);
  c.posts_per_user = j.value("posts_per_user", c.posts_per_user);
  c.likes_per_post = j.value("likes_per_post", c.likes_per_post);
  c.comments_per_post = j.value("comments_per_post", c.comments_per_post);
  c.photos_per_post = j.value("photos_per_post", c.photos_per_post);
  c.conversations_per_user = j.value("conversations_per_user", c.conversations_per_user);
  c.messages_per_user = j.value("messages_per_user", c.messages_per_user);
  c.follows_per_user = j.value("follows_per_user", c.follows_per_user);
  c.mutuality = j.value("mutuality", c.mutuality);
  c.notification_rate = j.value("notification_rate", c.notification_rate);
  c.grant_fraction = j.value("grant_fraction", c.grant_fraction);
  c.start_time = j.value("start_time", c.start_time);
  c.cutoff_min = j.value("cutoff_min", c.cutoff_min);
  c.cutoff_max = j.value("cutoff_max", c.cutoff_max);
  c.validate();
  return c;
}

// ---------------------------------------------------------------- bindings

namespace {

RoleBinding role(std::string type, std::initializer_list<std::pair<const char*, const char*>> f) {
  RoleBinding b{std::move(type), {}};
  for (const auto& [field, attr] : f) b.fields[field] = AttrRef::parse(attr);
  return b;
}

}  // namespace

AppBinding binding_for(const AppId& app) {
  if (app == kDiaspora) {
    return {
        {"user", role("person", {{"key", "people.id"}, {"handle", "people.guid"},
                                 {"name", "people.name"}, {"bio", "profiles.bio"},
                                 {"created_at", "people.created_at"}})},
        {"post", role("post", {{"key", "posts.id"}, {"owner", "posts.author_id"},
                               {"text", "posts.text"}, {"lang", "posts.lang"},
                               {"created_at", "posts.created_at"}})},
        {"comment", role("comment", {{"key", "comments.id"}, {"parent", "comments.post_id"},
                                     {"owner", "comments.author_id"}, {"text", "comments.text"},
                                     {"created_at", "comments.created_at"}})},
        {"like", role("like", {{"key", "likes.id"}, {"parent", "likes.target_id"},
                               {"owner", "likes.author_id"}, {"created_at", "likes.created_at"}})},
        {"photo", role("photo", {{"key", "photos.id"}, {"parent", "photos.post_id"},
                                 {"owner", "photos.author_id"}, {"url", "photos.url"},
                                 {"size", "photos.size"}, {"created_at", "photos.created_at"}})},
        {"notification",
         role("notification", {{"key", "notifications.id"}, {"parent", "notifications.post_id"},
                               {"owner", "notifications.recipient_id"},
                               {"actor", "notifications.actor_id"}, {"kind", "notifications.kind"},
                               {"created_at", "notifications.created_at"}})},
        {"conversation",
         role("conversation", {{"key", "conversations.id"}, {"owner", "conversations.author_id"},
                               {"peer", "conversations.recipient_id"},
                               {"subject", "conversations.subject"},
                               {"created_at", "conversations.created_at"}})},
        {"message", role("message", {{"key", "messages.id"}, {"parent", "messages.conversation_id"},
                                     {"owner", "messages.author_id"}, {"text", "messages.text"},
                                     {"created_at", "messages.created_at"}})},
    };
  }
  if (app == kMastodon) {
    return {
        {"user", role("account", {{"key", "accounts.id"}, {"handle", "accounts.username"},
                                  {"name", "accounts.display_name"}, {"bio", "accounts.note"},
                                  {"created_at", "accounts.created_at"}})},
        {"post", role("status", {{"key", "statuses.id"}, {"owner", "statuses.account_id"},
                                 {"text", "statuses.body"}, {"lang", "statuses.lang"},
                                 {"created_at", "statuses.created_at"}})},
        {"comment", role("reply", {{"key", "replies.id"}, {"parent", "replies.status_id"},
                                   {"owner", "replies.account_id"}, {"text", "replies.body"},
                                   {"created_at", "replies.created_at"}})},
        {"like", role("favourite", {{"key", "favourites.id"}, {"parent", "favourites.status_id"},
                                    {"owner", "favourites.account_id"},
                                    {"created_at", "favourites.created_at"}})},
        {"photo", role("media", {{"key", "media_attachments.id"},
                                 {"parent", "media_attachments.status_id"},
                                 {"owner", "media_attachments.account_id"},
                                 {"url", "media_attachments.file_url"},
                                 {"size", "media_attachments.file_size"},
                                 {"created_at", "media_attachments.created_at"}})},
        {"notification",
         role("notification", {{"key", "notifications.id"}, {"parent", "notifications.status_id"},
                               {"owner", "notifications.account_id"},
                               {"actor", "notifications.from_account_id"},
                               {"kind", "notifications.type"},
                               {"created_at", "notifications.created_at"}})},
        {"conversation",
         role("conversation", {{"key", "conversations.id"}, {"owner", "conversations.account_id"},
                               {"peer", "conversations.participant_id"},
                               {"subject", "conversations.topic"},
                               {"created_at", "conversations.created_at"}})},
        {"message", role("direct_message", {{"key", "direct_messages.id"},
                                            {"parent", "direct_messages.conversation_id"},
                                            {"owner", "direct_messages.account_id"},
                                            {"text", "direct_messages.body"},
                                            {"created_at", "direct_messages.created_at"}})},
    };
  }
  if (app == kTwitter) {
    return {
        {"user", role("user", {{"key", "users.id"}, {"handle", "users.handle"},
                               {"name", "users.name"}, {"bio", "users.bio"},
                               {"created_at", "users.created_at"}})},
        {"post", role("tweet", {{"key", "tweets.id"}, {"owner", "tweets.user_id"},
                                {"text", "tweets.text"}, {"created_at", "tweets.created_at"}})},
        {"comment", role("tweet_reply", {{"key", "tweet_replies.id"},
                                         {"parent", "tweet_replies.tweet_id"},
                                         {"owner", "tweet_replies.user_id"},
                                         {"text", "tweet_replies.text"},
                                         {"created_at", "tweet_replies.created_at"}})},
        {"like", role("tweet_like", {{"key", "tweet_likes.id"}, {"parent", "tweet_likes.tweet_id"},
                                     {"owner", "tweet_likes.user_id"},
                                     {"created_at", "tweet_likes.created_at"}})},
        {"photo", role("media", {{"key", "media.id"}, {"parent", "media.tweet_id"},
                                 {"owner", "media.user_id"}, {"url", "media.url"},
                                 {"size", "media.bytes"}, {"created_at", "media.created_at"}})},
        {"conversation", role("thread", {{"key", "threads.id"}, {"owner", "threads.user_id"},
                                         {"peer", "threads.peer_id"}, {"subject", "threads.title"},
                                         {"created_at", "threads.created_at"}})},
        {"message", role("dm", {{"key", "dms.id"}, {"parent", "dms.thread_id"},
                                {"owner", "dms.user_id"}, {"text", "dms.text"},
                                {"created_at", "dms.created_at"}})},
    };
  }
  if (app == kGnuSocial) {
    return {
        {"user", role("profile", {{"key", "profiles.id"}, {"handle", "profiles.nickname"},
                                  {"name", "profiles.fullname"}, {"bio", "profiles.bio"},
                                  {"created_at", "profiles.created_at"}})},
        {"post", role("notice", {{"key", "notices.id"}, {"owner", "notices.profile_id"},
                                 {"text", "notices.content"}, {"lang", "notices.lang"},
                                 {"created_at", "notices.created_at"}})},
        {"comment", role("reply", {{"key", "replies.id"}, {"parent", "replies.notice_id"},
                                   {"owner", "replies.profile_id"}, {"text", "replies.content"},
                                   {"created_at", "replies.created_at"}})},
        {"like", role("fave", {{"key", "faves.id"}, {"parent", "faves.notice_id"},
                               {"owner", "faves.profile_id"}, {"created_at", "faves.created_at"}})},
        {"photo", role("attachment", {{"key", "attachments.id"}, {"parent", "attachments.notice_id"},
                                      {"owner", "attachments.profile_id"},
                                      {"url", "attachments.url"}, {"size", "attachments.filesize"},
                                      {"created_at", "attachments.created_at"}})},
    };
  }
  throw std::invalid_argument("no role binding for application '" + app + "'");
}

// ---------------------------------------------------------------- world

namespace {

/// One generated entity. Reference fields hold the key of the referenced
/// entity (users for owner/actor/peer, the parent role for parent).
struct Entity {
  std::string role;
  std::size_t key = 0;
  std::map<std::string, std::string> fields;
};

const char* kLangs[] = {"en", "de", "fr", "ja", "pt"};

class WorldBuilder {
 public:
  explicit WorldBuilder(const GenConfig& cfg) : cfg_(cfg), rng_(cfg.seed) {}

  std::vector<Entity> build(GenStats& stats);
  const std::vector<std::pair<std::size_t, std::size_t>>& friends() const { return friends_; }

 private:
  std::size_t count(double rate, std::size_t base) const {
    return static_cast<std::size_t>(std::llround(rate * static_cast<double>(base)));
  }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_); }
  std::size_t pick(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }
  std::size_t pick_user() { return popularity_(rng_) + 1; }
  std::string stamp() { return std::to_string(clock_++); }

  Entity& add(std::vector<Entity>& out, const std::string& role) {
    std::size_t key = ++next_key_[role];
    out.push_back({role, key, {{"key", std::to_string(key)}, {"created_at", stamp()}}});
    return out.back();
  }

  const GenConfig& cfg_;
  std::mt19937_64 rng_;
  std::discrete_distribution<std::size_t> popularity_;
  std::int64_t clock_ = 0;
  std::map<std::string, std::size_t> next_key_;
  std::vector<std::pair<std::size_t, std::size_t>> friends_;
};

std::vector<Entity> WorldBuilder::build(GenStats& stats) {
  clock_ = cfg_.start_time;
  const std::size_t n = cfg_.users;
  std::vector<double> weight(n);
  for (auto& w : weight) w = std::pow(1.0 - uniform(), -1.0 / cfg_.pareto_shape);
  popularity_ = std::discrete_distribution<std::size_t>(weight.begin(), weight.end());

  std::vector<Entity> out;
  for (std::size_t u = 1; u <= n; ++u) {
    Entity& e = add(out, "user");
    e.fields["handle"] = "user" + std::to_string(u);
    e.fields["name"] = "User " + std::to_string(u);
    e.fields["bio"] = "bio of user " + std::to_string(u);
  }

  // Follows drawn by popularity; a returned follow makes two users friends.
  std::set<std::pair<std::size_t, std::size_t>> follows;
  if (n > 1) {
    std::poisson_distribution<std::size_t> fan(cfg_.follows_per_user);
    for (std::size_t u = 1; u <= n; ++u) {
      std::size_t k = std::min(fan(rng_), n - 1);
      for (std::size_t i = 0; i < k; ++i) {
        std::size_t v = pick_user();
        if (v == u) continue;
        follows.insert({u, v});
        if (uniform() < cfg_.mutuality) follows.insert({v, u});
      }
    }
  }
  for (const auto& [a, b] : follows) {
    if (a < b && follows.contains({b, a})) friends_.emplace_back(a, b);
  }
  stats.follows = follows.size();
  stats.friend_pairs = friends_.size();

  std::vector<std::size_t> post_author;
  for (std::size_t i = 0, total = count(cfg_.posts_per_user, n); i < total; ++i) {
    Entity& e = add(out, "post");
    std::size_t a = pick_user();
    post_author.push_back(a);
    e.fields["owner"] = std::to_string(a);
    e.fields["text"] = "post " + std::to_string(e.key);
    e.fields["lang"] = kLangs[pick(std::size(kLangs))];
  }
  if (!post_author.empty()) {
    auto interact = [&](const std::string& r, std::size_t total) {
      for (std::size_t i = 0; i < total; ++i) {
        std::size_t post = pick(post_author.size());
        std::size_t actor = pick_user();
        Entity& e = add(out, r);
        e.fields["parent"] = std::to_string(post + 1);
        e.fields["owner"] = std::to_string(actor);
        if (r == "comment") e.fields["text"] = "comment " + std::to_string(e.key);
        std::size_t author = post_author[post];
        if (actor != author && uniform() < cfg_.notification_rate) {
          Entity& note = add(out, "notification");
          note.fields["parent"] = std::to_string(post + 1);
          note.fields["owner"] = std::to_string(author);
          note.fields["actor"] = std::to_string(actor);
          note.fields["kind"] = r;
        }
      }
    };
    interact("comment", count(cfg_.comments_per_post, post_author.size()));
    interact("like", count(cfg_.likes_per_post, post_author.size()));
    for (std::size_t i = 0, total = count(cfg_.photos_per_post, post_author.size()); i < total;
         ++i) {
      std::size_t post = pick(post_author.size());
      Entity& e = add(out, "photo");
      e.fields["parent"] = std::to_string(post + 1);
      e.fields["owner"] = std::to_string(post_author[post]);
      e.fields["url"] = "https://media.example/" + std::to_string(e.key) + ".jpg";
      double kib = std::min(20.0 * std::pow(1.0 - uniform(), -1.0 / cfg_.pareto_shape), 8192.0);
      e.fields["size"] = std::to_string(static_cast<std::int64_t>(kib * 1024));
    }
  }

  // Conversations only between friends.
  std::vector<std::pair<std::size_t, std::size_t>> convo;
  if (!friends_.empty()) {
    for (std::size_t i = 0, total = count(cfg_.conversations_per_user, n); i < total; ++i) {
      auto [a, b] = friends_[pick(friends_.size())];
      if (uniform() < 0.5) std::swap(a, b);
      Entity& e = add(out, "conversation");
      e.fields["owner"] = std::to_string(a);
      e.fields["peer"] = std::to_string(b);
      e.fields["subject"] = "conversation " + std::to_string(e.key);
      convo.emplace_back(a, b);
    }
  }
  if (!convo.empty()) {
    for (std::size_t i = 0, total = count(cfg_.messages_per_user, n); i < total; ++i) {
      std::size_t c = pick(convo.size());
      Entity& e = add(out, "message");
      e.fields["parent"] = std::to_string(c + 1);
      e.fields["owner"] = std::to_string(uniform() < 0.5 ? convo[c].first : convo[c].second);
      e.fields["text"] = "message " + std::to_string(e.key);
    }
  }
  return out;
}

DataNode render(const AppDefinition& def, const RoleBinding& b, const Entity& e) {
  const NodeTypeSpec* t = def.dag.type(b.type);
  if (t == nullptr) {
    throw std::invalid_argument("binding names unknown node type '" + b.type + "' in " +
                                def.dag.app_id);
  }
  DataNode n;
  n.id = NodeId{def.dag.app_id, b.type, std::to_string(e.key)};
  for (const auto& table : t->member_tables) {
    Row& row = n.rows[table];
    for (const auto& a : def.schema.table(table)->attributes) row[a] = "";
    row[def.schema.table(table)->key] = n.id.key;
  }
  for (const auto& [field, value] : e.fields) {
    auto it = b.fields.find(field);
    if (it != b.fields.end()) n.set(it->second, value);
  }
  for (const auto& j : t->intra_node_joins) n.set(j.right, n.get(j.left));
  // Attributes no role fills still carry data, so unmapped columns are
  // exercised by migrations.
  const std::set<AttrRef> refs = def.dag.reference_attrs(*t);
  for (auto& [table, row] : n.rows) {
    for (auto& [attr, value] : row) {
      if (value.empty() && !refs.contains({table, attr})) value = attr + "-" + n.id.key;
    }
  }
  return n;
}

}  // namespace

GenStats generate(const GenConfig& cfg, AppStore& store, const AppBinding& binding) {
  cfg.validate();
  ScopedLane lane(Lane::kOther);
  const AppDefinition& def = store.definition();
  if (!binding.contains("user")) throw std::invalid_argument("binding lacks the user role");
  if (binding.at("user").type != def.dag.root_type) {
    throw std::invalid_argument("user role must bind the root type");
  }

  GenStats stats;
  WorldBuilder world(cfg);
  std::vector<Entity> entities = world.build(stats);
  std::vector<DataNode> nodes;
  std::map<std::string, std::map<std::size_t, const Entity*>> by_role;
  for (const auto& e : entities) {
    auto it = binding.find(e.role);
    if (it == binding.end()) continue;
    // Children of roles the application lacks are dropped with them.
    if (e.fields.contains("parent")) {
      static const std::map<std::string, std::string> kParentRole{
          {"comment", "post"}, {"like", "post"}, {"photo", "post"},
          {"notification", "post"}, {"message", "conversation"}};
      if (!binding.contains(kParentRole.at(e.role))) continue;
    }
    by_role[e.role][e.key] = &e;
    nodes.push_back(render(def, it->second, e));
    ++stats.nodes[e.role];
    if (e.role != "user") ++stats.content_by_user[e.fields.at("owner")];
  }
  store.insert_many(std::move(nodes));

  const std::string& root_type = def.dag.root_type;
  auto user_id = [&](std::size_t u) { return NodeId{def.dag.app_id, root_type, std::to_string(u)}.str(); };
  // (grantor, post owner) -> comments and likes the grantor left there.
  std::map<std::pair<std::string, std::string>, std::vector<NodeId>> interactions;
  for (const char* r : {"comment", "like"}) {
    if (!by_role.contains(r) || !by_role.contains("post")) continue;
    const auto& posts = by_role.at("post");
    for (const auto& [key, e] : by_role.at(r)) {
      auto post = posts.find(std::stoul(e->fields.at("parent")));
      if (post == posts.end()) continue;
      interactions[{e->fields.at("owner"), post->second->fields.at("owner")}].push_back(
          NodeId{def.dag.app_id, binding.at(r).type, std::to_string(key)});
    }
  }
  std::mt19937_64 grant_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (const auto& [a, b] : world.friends()) {
    if (coin(grant_rng) >= cfg.grant_fraction) continue;
    // Each friend may carry the other's comments and likes on their posts.
    for (auto [grantor, grantee] : {std::pair{a, b}, std::pair{b, a}}) {
      auto it = interactions.find({std::to_string(grantor), std::to_string(grantee)});
      if (it == interactions.end()) continue;
      for (const auto& id : it->second) {
        SharingGrant g;
        g.grantor = user_id(grantor);
        g.grantee = user_id(grantee);
        g.node = id;
        g.allowed = {MigrationType::kDeletion, MigrationType::kIndependent};
        store.add_grant(std::move(g));
        ++stats.grants;
      }
    }
  }
  return stats;
}

GenStats generate(const GenConfig& cfg, AppStore& store) {
  return generate(cfg, store, binding_for(store.app_id()));
}

Fixtures load_fixtures(const std::filesystem::path& dir) {
  Fixtures f;
  f.apps = load_app_directory(dir);
  f.direct = load_mapping_directory(dir / "mappings", f.apps);
  f.catalog = MappingCatalog(derive_all(f.direct, f.apps));
  return f;
}

std::filesystem::path default_fixture_dir() {
  if (const char* env = std::getenv("XMIG_FIXTURES"); env != nullptr && *env != '\0') return env;
  return XMIG_FIXTURE_DIR;
}

}  // namespace xmig
