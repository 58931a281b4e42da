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

#include "xmig/validate.h"

#include <algorithm>

namespace xmig {

namespace {

bool root_displayed(const AppStore& dst, const RootEdge& e, const DataNode& n) {
  const Value& v = n.get(e.attr);
  if (v.empty() || is_placeholder(v)) return false;
  auto root = dst.find(dst.dag().root_type, e.root_attr, v);
  if (!root) return false;
  auto rn = dst.node(*root);
  return rn && rn->flags.visible();
}

}  // namespace

bool is_displayable(const AppStore& dst, const DataNode& n, const NodeId& user_root) {
  const DagSpec& dag = dst.dag();
  if (n.id == user_root || n.id.type == dag.root_type) return true;
  const NodeTypeSpec* t = dag.type(n.id.type);
  if (t == nullptr) return false;
  const DisplayRule& rule = t->display_rule;

  if (rule.requires_parents_displayed) {
    for (const auto& e : t->depends_on) {
      if (std::find(rule.exceptions.begin(), rule.exceptions.end(), e.parent_type) !=
          rule.exceptions.end()) {
        continue;
      }
      const Value& v = n.get(e.attr);
      if (v.empty()) continue;
      if (is_placeholder(v)) return false;
      auto p = dst.find(e.parent_type, e.parent_attr, v);
      if (!p) return false;
      auto pn = dst.node(*p);
      if (!pn || !pn->flags.visible()) return false;
    }
  }

  auto owner_ok = [&] {
    return std::any_of(t->owned_by.begin(), t->owned_by.end(),
                       [&](const RootEdge& e) { return root_displayed(dst, e, n); });
  };
  auto sharer_ok = [&] {
    return std::any_of(t->shared_with.begin(), t->shared_with.end(),
                       [&](const RootEdge& e) { return root_displayed(dst, e, n); });
  };
  if (rule.requires_owner_root && rule.requires_sharer_root) return owner_ok() || sharer_ok();
  if (rule.requires_owner_root) return owner_ok();
  if (rule.requires_sharer_root) return sharer_ok();
  return true;
}

Validator::Validator(AppStore& dst, std::string migration_id, NodeId user_root,
                     std::uint64_t seed, Wal* wal)
    : dst_(dst),
      migration_id_(std::move(migration_id)),
      user_root_(std::move(user_root)),
      wal_(wal),
      rng_(seed) {}

void Validator::set_user_root(NodeId root) {
  std::lock_guard lock(mu_);
  user_root_ = std::move(root);
}

void Validator::set_wal(Wal* wal) {
  std::lock_guard lock(mu_);
  wal_ = wal;
}

bool Validator::try_display_locked(const NodeId& id) {
  auto n = dst_.node(id);
  if (!n) {
    waiting_.erase(id);
    return false;
  }
  if (!n->flags.migration_flag) {
    waiting_.erase(id);
    return false;
  }
  if (!is_displayable(dst_, *n, user_root_)) return false;
  Flags next = n->flags;
  next.migration_flag = false;
  next.displayable = true;
  if (wal_ != nullptr) {
    wal_->append(migration_id_, WalKind::kDisplayNode,
                 {{"app", dst_.app_id()},
                  {"node", id.str()},
                  {"flags", to_json(*n).at("flags")}});
  }
  if (!dst_.compare_and_set_flags(id, n->flags, next)) return false;
  waiting_.erase(id);
  events_.push_back({id, dst_.meter() ? dst_.meter()->now() : 0});
  return true;
}

void Validator::cascade_locked(std::vector<NodeId> work) {
  while (!work.empty()) {
    NodeId id = std::move(work.back());
    work.pop_back();
    if (!waiting_.contains(id) || !try_display_locked(id)) continue;
    auto n = dst_.node(id);
    if (!n) continue;
    for (auto& c : traversal_children(dst_, *n)) {
      if (waiting_.contains(c)) work.push_back(std::move(c));
    }
  }
}

void Validator::on_arrival(const NodeId& id) {
  ScopedLane lane(Lane::kValidation);
  std::lock_guard lock(mu_);
  waiting_.insert(id);
  cascade_locked({id});
}

void Validator::hold(const NodeId& id) {
  std::lock_guard lock(mu_);
  waiting_.insert(id);
}

std::vector<NodeId> Validator::sweep() {
  ScopedLane lane(Lane::kValidation);
  std::lock_guard lock(mu_);
  std::vector<NodeId> order(waiting_.begin(), waiting_.end());
  std::shuffle(order.begin(), order.end(), rng_);
  std::vector<NodeId> shown;
  for (const auto& id : order) {
    if (waiting_.contains(id) && try_display_locked(id)) shown.push_back(id);
  }
  return shown;
}

Validator::Phase2 Validator::run_phase2() {
  ScopedLane lane(Lane::kValidation);
  std::lock_guard lock(mu_);
  Phase2 out;
  bool progress = true;
  while (progress) {
    progress = false;
    std::vector<NodeId> order(waiting_.begin(), waiting_.end());
    for (const auto& id : order) {
      if (waiting_.contains(id) && try_display_locked(id)) {
        out.displayed.push_back(id);
        progress = true;
      }
    }
  }
  out.failed.assign(waiting_.begin(), waiting_.end());
  return out;
}

void Validator::forget(const NodeId& id) {
  std::lock_guard lock(mu_);
  waiting_.erase(id);
}

std::set<NodeId> Validator::waiting() const {
  std::lock_guard lock(mu_);
  return waiting_;
}

std::vector<DisplayEvent> Validator::events() const {
  std::lock_guard lock(mu_);
  return events_;
}

}  // namespace xmig
