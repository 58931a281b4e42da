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

// A two-application scenario small enough to check by hand.
//
// forum: Bob (person 1) and Alice (person 2). Bob's post 2 is shared with
// Alice (sharer_id) and Bob granted her permission to move it. Alice's
// comment 1 sits on the post, Bob's reply 2 answers the comment, and Alice's
// rereply 3 answers the reply. micro is the destination; its statuses display
// when either the owner or the mentioned account is present.

#ifndef XMIG_TESTS_SCENARIO_H_
#define XMIG_TESTS_SCENARIO_H_

#include <memory>

#include "xmig/engine.h"
#include "xmig/spec_io.h"

namespace xmig::testing {

inline const char* kForumSchema = R"({
  "version": 1, "app": "forum",
  "tables": [
    {"name": "people", "attributes": ["id", "name"], "key": "id"},
    {"name": "posts", "attributes": ["id", "author_id", "sharer_id", "text", "lang", "loc"], "key": "id"},
    {"name": "comments", "attributes": ["id", "post_id", "author_id", "text"], "key": "id"},
    {"name": "replies", "attributes": ["id", "comment_id", "author_id", "text"], "key": "id"},
    {"name": "rereplies", "attributes": ["id", "reply_id", "author_id", "text"], "key": "id"}
  ]})";

inline const char* kForumDag = R"({
  "version": 1, "app": "forum", "root": "person",
  "nodes": [
    {"name": "person", "tables": ["people"],
     "display_rule": {"requires_parents_displayed": false, "requires_owner_root": false}},
    {"name": "post", "tables": ["posts"],
     "owned_by": [{"attr": "posts.author_id", "root_attr": "people.id"}],
     "shared_with": [{"attr": "posts.sharer_id", "root_attr": "people.id"}]},
    {"name": "comment", "tables": ["comments"],
     "depends_on": [{"attr": "comments.post_id", "parent": "post", "parent_attr": "posts.id"}],
     "owned_by": [{"attr": "comments.author_id", "root_attr": "people.id"}]},
    {"name": "reply", "tables": ["replies"],
     "depends_on": [{"attr": "replies.comment_id", "parent": "comment", "parent_attr": "comments.id"}],
     "owned_by": [{"attr": "replies.author_id", "root_attr": "people.id"}]},
    {"name": "rereply", "tables": ["rereplies"],
     "depends_on": [{"attr": "rereplies.reply_id", "parent": "reply", "parent_attr": "replies.id"}],
     "owned_by": [{"attr": "rereplies.author_id", "root_attr": "people.id"}]}
  ]})";

inline const char* kMicroSchema = R"({
  "version": 1, "app": "micro",
  "tables": [
    {"name": "accounts", "attributes": ["id", "name"], "key": "id"},
    {"name": "statuses", "attributes": ["id", "account_id", "mention_id", "body"], "key": "id"},
    {"name": "notes", "attributes": ["id", "status_id", "account_id", "body"], "key": "id"},
    {"name": "subnotes", "attributes": ["id", "note_id", "account_id", "body"], "key": "id"},
    {"name": "subsubnotes", "attributes": ["id", "subnote_id", "account_id", "body"], "key": "id"}
  ]})";

inline const char* kMicroDag = R"({
  "version": 1, "app": "micro", "root": "account",
  "nodes": [
    {"name": "account", "tables": ["accounts"],
     "display_rule": {"requires_parents_displayed": false, "requires_owner_root": false}},
    {"name": "status", "tables": ["statuses"],
     "owned_by": [{"attr": "statuses.account_id", "root_attr": "accounts.id"}],
     "shared_with": [{"attr": "statuses.mention_id", "root_attr": "accounts.id"}],
     "display_rule": {"requires_parents_displayed": true, "requires_owner_root": true,
                      "requires_sharer_root": true}},
    {"name": "note", "tables": ["notes"],
     "depends_on": [{"attr": "notes.status_id", "parent": "status", "parent_attr": "statuses.id"}],
     "owned_by": [{"attr": "notes.account_id", "root_attr": "accounts.id"}]},
    {"name": "subnote", "tables": ["subnotes"],
     "depends_on": [{"attr": "subnotes.note_id", "parent": "note", "parent_attr": "notes.id"}],
     "owned_by": [{"attr": "subnotes.account_id", "root_attr": "accounts.id"}]},
    {"name": "subsubnote", "tables": ["subsubnotes"],
     "depends_on": [{"attr": "subsubnotes.subnote_id", "parent": "subnote", "parent_attr": "subnotes.id"}],
     "owned_by": [{"attr": "subsubnotes.account_id", "root_attr": "accounts.id"}]}
  ]})";

inline const char* kForumToMicro = R"({
  "version": 1, "from_app": "forum", "to_app": "micro",
  "node_maps": [
    {"from_node": "person", "to_node": "account", "attributes": [
      {"from": "people.id", "to": "accounts.id", "transform": "newID"},
      {"from": "people.name", "to": "accounts.name", "transform": "copy"}]},
    {"from_node": "post", "to_node": "status", "attributes": [
      {"from": "posts.id", "to": "statuses.id", "transform": "newID"},
      {"from": "posts.author_id", "to": "statuses.account_id", "transform": "copy"},
      {"from": "posts.sharer_id", "to": "statuses.mention_id", "transform": "copy"},
      {"from": "posts.text", "to": "statuses.body", "transform": "copy"}]},
    {"from_node": "comment", "to_node": "note", "attributes": [
      {"from": "comments.id", "to": "notes.id", "transform": "newID"},
      {"from": "comments.post_id", "to": "notes.status_id", "transform": "copy"},
      {"from": "comments.author_id", "to": "notes.account_id", "transform": "copy"},
      {"from": "comments.text", "to": "notes.body", "transform": "copy"}]},
    {"from_node": "reply", "to_node": "subnote", "attributes": [
      {"from": "replies.id", "to": "subnotes.id", "transform": "newID"},
      {"from": "replies.comment_id", "to": "subnotes.note_id", "transform": "copy"},
      {"from": "replies.author_id", "to": "subnotes.account_id", "transform": "copy"},
      {"from": "replies.text", "to": "subnotes.body", "transform": "copy"}]},
    {"from_node": "rereply", "to_node": "subsubnote", "attributes": [
      {"from": "rereplies.id", "to": "subsubnotes.id", "transform": "newID"},
      {"from": "rereplies.reply_id", "to": "subsubnotes.subnote_id", "transform": "copy"},
      {"from": "rereplies.author_id", "to": "subsubnotes.account_id", "transform": "copy"},
      {"from": "rereplies.text", "to": "subsubnotes.body", "transform": "copy"}]}
  ]})";

inline AppDefinition load_app(const char* schema, const char* dag) {
  AppDefinition def;
  def.schema = load_schema(SpecDocument::parse(schema));
  def.dag = load_dag_spec(SpecDocument::parse(dag), def.schema);
  return def;
}

inline DataNode make_node(const AppId& app, const std::string& type, const std::string& table,
                          Row row) {
  DataNode n;
  n.id = {app, type, row.at("id")};
  n.rows[table] = std::move(row);
  return n;
}

struct Scenario {
  AppDefinition forum = load_app(kForumSchema, kForumDag);
  AppDefinition micro = load_app(kMicroSchema, kMicroDag);
  MappingCatalog catalog{{load_mapping(SpecDocument::parse(kForumToMicro), forum, micro)}};
  std::shared_ptr<CostMeter> meter = std::make_shared<CostMeter>();
  std::shared_ptr<FaultInjector> faults = std::make_shared<FaultInjector>();
  MetaStore meta;
  AppStore src{forum, meter, faults};
  AppStore dst{micro, meter, faults};
  Engine engine{EngineEnv{{{"forum", &src}, {"micro", &dst}}, &meta, &catalog, faults}};

  const NodeId bob{"forum", "person", "1"};
  const NodeId alice{"forum", "person", "2"};
  const NodeId post1{"forum", "post", "2"};
  const NodeId comment1{"forum", "comment", "1"};
  const NodeId comment2{"forum", "reply", "2"};
  const NodeId comment3{"forum", "rereply", "3"};

  Scenario() {
    meta.wal.set_faults(faults);
    dst.set_key_floor(10);
    src.insert(make_node("forum", "person", "people", {{"id", "1"}, {"name", "Bob"}}));
    src.insert(make_node("forum", "person", "people", {{"id", "2"}, {"name", "Alice"}}));
    src.insert(make_node("forum", "post", "posts",
                         {{"id", "2"}, {"author_id", "1"}, {"sharer_id", "2"},
                          {"text", "hi all"}, {"lang", "en"}, {"loc", "NYC"}}));
    src.insert(make_node("forum", "comment", "comments",
                         {{"id", "1"}, {"post_id", "2"}, {"author_id", "2"}, {"text", "c1"}}));
    src.insert(make_node("forum", "reply", "replies",
                         {{"id", "2"}, {"comment_id", "1"}, {"author_id", "1"}, {"text", "c2"}}));
    src.insert(make_node("forum", "rereply", "rereplies",
                         {{"id", "3"}, {"reply_id", "2"}, {"author_id", "2"}, {"text", "c3"}}));
    SharingGrant g;
    g.grantor = bob.str();
    g.grantee = alice.str();
    g.node = post1;
    g.allowed = {MigrationType::kDeletion, MigrationType::kIndependent};
    src.add_grant(g);
  }

  MigrationReport migrate_alice(MigrationType type = MigrationType::kDeletion) {
    MigrationRequest req;
    req.user_root = alice;
    req.dst = "micro";
    req.type = type;
    return engine.migrate(req);
  }
};

}  // namespace xmig::testing

#endif  // XMIG_TESTS_SCENARIO_H_
