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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <random>

#include "doctest.h"
#include "scenario.h"
#include "xmig/harness.h"

using namespace xmig;
using namespace xmig::testing;

namespace {

const Fixtures& fixtures() {
  static const Fixtures fx = load_fixtures(default_fixture_dir());
  return fx;
}

GenConfig config(std::size_t users) {
  GenConfig c;
  c.users = users;
  c.seed = 5;
  return c;
}

MigrationReport migrate(World& w, const NodeId& user, const AppId& dst) {
  MigrationRequest req;
  req.user_root = user;
  req.dst = dst;
  return w.engine().migrate(req);
}

/// A comment of the store together with the post it hangs off.
std::pair<DataNode, NodeId> comment_with_post(const AppStore& s) {
  for (const auto& id : s.ids("comment")) {
    DataNode c = *s.node(id);
    for (const auto& p : dependency_parents(s, c)) {
      if (p.type == "post") return {c, p};
    }
  }
  FAIL("no comment found");
  return {};
}

}  // namespace

TEST_CASE("baselines record owners from the ownership edges") {
  Scenario s;
  Baseline b = capture_baseline({&s.src});
  CHECK(b.nodes.size() == 6);
  CHECK(b.owner.at(s.post1) == s.bob.str());
  CHECK(b.owner.at(s.comment1) == s.alice.str());
  CHECK(b.owner.at(s.comment2) == s.bob.str());
  CHECK(b.owner.at(s.alice) == s.alice.str());
  Baseline back = Baseline::from_json(b.to_json());
  CHECK(back.nodes == b.nodes);
  CHECK(back.owner == b.owner);
}

TEST_CASE("the auditor finds injected dangling references and lost data") {
  World w(fixtures());
  w.generate(config(30), kDiaspora);
  REQUIRE(w.audit().clean());
  AppStore& d = w.store(kDiaspora);
  auto [comment, post] = comment_with_post(d);
  d.erase(post);
  AnomalyAudit a = w.audit();
  CHECK(a.count(Anomaly::kDangling) >= 1);
  CHECK(a.count(Anomaly::kDataLoss) >= 1);
  bool named = false;
  for (const auto& f : a.apps.at(kDiaspora).findings) {
    named = named || (f.kind == Anomaly::kDangling && f.node == comment.id);
  }
  CHECK(named);
  CHECK(a.apps.at(kDiaspora).percent(Anomaly::kDangling) > 0);
  CHECK_FALSE(a.table().empty());
}

TEST_CASE("the auditor finds data moved without consent") {
  World w(fixtures());
  w.generate(config(30), kDiaspora);
  const auto users = w.users(kDiaspora);
  REQUIRE(migrate(w, users[0], kMastodon).outcome == Outcome::kCommitted);
  REQUIRE(w.audit().clean());

  // users[1] "moves" somebody else's post under a lease of its own.
  AppStore& m = w.store(kMastodon);
  const AppStore& d = w.store(kDiaspora);
  NodeId victim;
  for (const auto& [id, owner] : w.baseline().owner) {
    if (id.type == "post" && owner != users[1].str() && d.contains(id)) victim = id;
  }
  REQUIRE_FALSE(victim.empty());
  auto statuses = m.ids("status");
  REQUIRE_FALSE(statuses.empty());
  DataNode copy = *m.node(statuses.front());
  const std::string table = m.dag().type("status")->primary_table();
  const std::string key_attr = m.definition().schema.table(table)->key;
  copy.id.key = "9999999";
  copy.set({table, key_attr}, "9999999");
  MigrationLease lease = w.meta().leases.acquire(users[1].str(), MigrationType::kIndependent);
  m.insert(copy);
  w.meta().attributes.record({{lease.migration_id, kDiaspora, kMastodon, victim, copy.id,
                               {"posts", "id"}, victim.key, copy.id.key}});
  AnomalyAudit a = w.audit();
  CHECK(a.count(Anomaly::kOwnershipViolation) >= 1);
}

TEST_CASE("showing a child before its parent is caught as it happens") {
  World w(fixtures());
  w.generate(config(30), kDiaspora);
  AppStore& d = w.store(kDiaspora);
  auto [comment, post] = comment_with_post(d);
  d.set_flags(post, Flags{false, true, true});
  d.set_flags(comment.id, Flags{false, true, true});
  CHECK(w.trace().count(TraceCheck::kDisplayBeforeParent) == 0);
  d.set_flags(comment.id, Flags{});
  CHECK(w.trace().count(TraceCheck::kDisplayBeforeParent) == 1);
  CHECK(w.audit().count(Anomaly::kPrematureDisplay) >= 1);

  // Paused checks still track state.
  w.trace().clear();
  w.trace().set_paused(true);
  d.set_flags(comment.id, Flags{false, true, true});
  d.set_flags(comment.id, Flags{});
  CHECK(w.trace().violations().empty());
  w.trace().set_paused(false);
}

TEST_CASE("erasing a parent ahead of its children is caught") {
  World w(fixtures());
  w.generate(config(30), kDiaspora);
  AppStore& d = w.store(kDiaspora);
  auto [comment, post] = comment_with_post(d);
  d.erase(post);
  CHECK(w.trace().count(TraceCheck::kParentErasedFirst) == 1);
  auto v = w.trace().violations();
  REQUIRE_FALSE(v.empty());
  TraceViolation back = trace_violation_from_json(to_json(v.front()));
  CHECK(back.node == v.front().node);
  CHECK(back.check == v.front().check);
}

TEST_CASE("the naive baseline leaves dangling data behind") {
  World w(fixtures());
  w.generate(config(50), kDiaspora);
  NaiveCurve c = run_naive_all(w, kDiaspora, kMastodon);
  REQUIRE(c.source.size() == 50);
  CHECK(c.nondecreasing());
  CHECK(c.source.back() + c.destination.back() > 0);
}

TEST_CASE("the held naive baseline never shows a child early") {
  World w(fixtures());
  w.generate(config(40), kDiaspora);
  for (const auto& u : w.users(kDiaspora)) run_naive_plus(w.env(), u, kMastodon);
  CHECK(w.trace().count(TraceCheck::kDisplayBeforeParent) == 0);
}

TEST_CASE("naive type order moves the root, then content") {
  auto order = naive_type_order(fixtures().apps.at(kDiaspora));
  REQUIRE(order.size() >= 6);
  CHECK(std::vector<std::string>(order.begin(), order.begin() + 6) ==
        std::vector<std::string>{"person", "post", "like", "comment", "conversation", "message"});
}

TEST_CASE("garbage collection follows orphans down the chain") {
  Scenario s;
  s.src.erase(s.post1);
  CHECK(collect_dangling(s.src, {s.comment1}) == 3);
  CHECK(s.src.ids() == std::vector<NodeId>{s.bob, s.alice});
  CHECK(collect_dangling(s.src, {s.alice}) == 0);
}

TEST_CASE("least squares agrees with the normal equations") {
  LinearFit exact = fit_linear({{0, 2}, {1, 5}, {2, 8}, {3, 11}});
  CHECK(exact.slope == doctest::Approx(3));
  CHECK(exact.intercept == doctest::Approx(2));
  CHECK(exact.r2 == doctest::Approx(1));
  CHECK(exact.n == 4);
  CHECK_THROWS_AS(fit_linear({{1, 1}}), std::invalid_argument);

  std::mt19937_64 rng(3);
  std::normal_distribution<double> noise(0, 5);
  std::uniform_real_distribution<double> xs(0, 100);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::pair<double, double>> pts;
    for (int i = 0; i < 30; ++i) {
      double x = xs(rng);
      pts.emplace_back(x, 1.7 * x - 4 + noise(rng));
    }
    // Cramer's rule on [n sx; sx sxx] [b; a] = [sy; sxy].
    long double n = pts.size(), sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (auto [x, y] : pts) {
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    long double det = n * sxx - sx * sx;
    double a = double((n * sxy - sx * sy) / det);
    double b = double((sxx * sy - sx * sxy) / det);
    long double ss_res = 0, ss_tot = 0, mean = sy / n;
    for (auto [x, y] : pts) {
      ss_res += (y - (a * x + b)) * (y - (a * x + b));
      ss_tot += (y - mean) * (y - mean);
    }
    LinearFit f = fit_linear(pts);
    CHECK(f.slope == doctest::Approx(a).epsilon(1e-9));
    CHECK(f.intercept == doctest::Approx(b).epsilon(1e-9));
    CHECK(f.r2 == doctest::Approx(double(1 - ss_res / ss_tot)).epsilon(1e-9));
  }
}

TEST_CASE("unavailability fractions come from the timelines") {
  MigrationReport r;
  r.start = 0;
  r.end = 100;
  r.timeline = {
      {{"a", "x", "1"}, {"b", "x", "1"}, 10, 30},   // 0.2
      {{"a", "x", "2"}, {"b", "x", "2"}, 10, -1},   // until the end: 0.9
      {{"a", "x", "3"}, {"b", "x", "3"}, -1, 50},   // source never hidden: 0
      {{"a", "x", "4"}, {"b", "x", "4"}, 60, 40},   // shown first: 0
      {{"a", "x", "5"}, {}, 10, -1},                // bagged: not counted
  };
  ContinuityReport c = continuity_report({r});
  REQUIRE(c.fractions.size() == 4);
  CHECK(c.fractions[0] == 0);
  CHECK(c.fractions[1] == 0);
  CHECK(c.fractions[2] == doctest::Approx(0.2));
  CHECK(c.fractions[3] == doctest::Approx(0.9));
  CHECK(c.tail == 1);
  CHECK(c.cdf(0) == 0.5);
  CHECK(c.cdf(0.5) == 0.75);
  CHECK(c.cdf(1) == 1);
}

TEST_CASE("first-order dominance by brute force") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    ContinuityReport a, b;
    for (int i = 0; i < 1 + int(rng() % 8); ++i) a.fractions.push_back(u(rng) * u(rng));
    for (int i = 0; i < 1 + int(rng() % 8); ++i) b.fractions.push_back(u(rng));
    std::sort(a.fractions.begin(), a.fractions.end());
    std::sort(b.fractions.begin(), b.fractions.end());
    // Dense grid check of F_a >= F_b.
    bool expected = true;
    auto cdf = [](const std::vector<double>& v, double x) {
      return double(std::count_if(v.begin(), v.end(), [&](double f) { return f <= x; })) /
             double(v.size());
    };
    std::vector<double> grid = a.fractions;
    grid.insert(grid.end(), b.fractions.begin(), b.fractions.end());
    for (int i = 0; i <= 1000; ++i) grid.push_back(i / 1000.0);
    for (double x : grid) expected = expected && cdf(a.fractions, x) >= cdf(b.fractions, x);
    CHECK(first_order_dominates(a, b) == expected);
  }
  ContinuityReport same;
  same.fractions = {0.1, 0.4};
  CHECK(first_order_dominates(same, same));
}

TEST_CASE("a world survives save and load") {
  World w(fixtures());
  w.generate(config(30), kDiaspora);
  auto users = w.users(kDiaspora);
  for (std::size_t i = 0; i < 5; ++i) {
    REQUIRE(migrate(w, users[i], kMastodon).outcome == Outcome::kCommitted);
  }
  const nlohmann::json saved = w.save();
  World back(fixtures());
  back.load(saved);
  CHECK(back.save() == saved);
  CHECK(back.audit().findings() == w.audit().findings());
  CHECK(back.users(kDiaspora) == w.users(kDiaspora));
  // Work continues in the loaded world.
  CHECK(migrate(back, users[5], kMastodon).outcome == Outcome::kCommitted);
  CHECK(back.audit().clean());
  CHECK_THROWS_AS(back.store("nope"), std::invalid_argument);
}

TEST_CASE("the same seed and steps give the same world") {
  auto run = [] {
    World w(fixtures());
    w.generate(config(25), kDiaspora);
    auto users = w.users(kDiaspora);
    for (std::size_t i = 0; i < users.size(); i += 3) migrate(w, users[i], kTwitter);
    nlohmann::json j = w.save();
    return j;
  };
  CHECK(run() == run());
}
