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

// Command-line driver. A workspace directory holds the generated world in
// state.json; every command loads it, works, and saves it back.
//
// Exit status: 0 clean, 1 findings (audit --strict, invalid specs), 2 usage
// or input errors.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "xmig/harness.h"
#include "xmig/spec_io.h"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace xmig;

namespace {

constexpr int kClean = 0;
constexpr int kFindings = 1;
constexpr int kUsage = 2;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string workspace = "xmig-work";
  std::string fixtures;
  bool json_out = false;

  // gen and report
  std::string app = kDiaspora;
  std::size_t users = 100;
  std::uint64_t seed = 42;
  std::string config_file;
  std::size_t samples = 40;

  // migrate
  std::string type = "deletion";
  std::string src = kDiaspora;
  std::string dst = kMastodon;
  std::string user;
  bool all = false;
  int workers = 1;
  std::string fault;
  std::string algorithm = "engine";
  std::int64_t cutoff = -1;

  // map derive, specs check
  std::string mappings;

  bool strict = false;
  std::string origin;
};

fs::path fixture_dir(const Options& o) {
  return o.fixtures.empty() ? default_fixture_dir() : fs::path(o.fixtures);
}

fs::path state_path(const Options& o) { return fs::path(o.workspace) / "state.json"; }

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw UsageError("cannot read " + p.string());
  return json::parse(in);
}

void write_json(const fs::path& p, const json& j) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p);
  out << j.dump() << '\n';
  if (!out) throw std::runtime_error("cannot write " + p.string());
}

void load_world(World& w, const Options& o) {
  if (!fs::exists(state_path(o))) {
    throw UsageError("no world in " + o.workspace + "; run 'xmig gen' first");
  }
  w.load(read_json(state_path(o)));
}

GenConfig gen_config(const Options& o) {
  GenConfig cfg;
  if (!o.config_file.empty()) cfg = GenConfig::from_json(read_json(o.config_file));
  cfg.users = o.users;
  cfg.seed = o.seed;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

void emit(const Options& o, const json& j, const std::string& table) {
  if (o.json_out) {
    std::cout << j.dump(2) << '\n';
  } else {
    std::cout << table;
    if (!table.empty() && table.back() != '\n') std::cout << '\n';
  }
}

// ---------------------------------------------------------------- commands

int cmd_gen(const Options& o) {
  const Fixtures fx = load_fixtures(fixture_dir(o));
  if (!fx.apps.contains(o.app)) throw UsageError("unknown application " + o.app);
  World w(fx);
  GenStats st = w.generate(gen_config(o), o.app);
  write_json(state_path(o), w.save());
  json j{{"app", o.app}, {"nodes", st.nodes}, {"follows", st.follows},
         {"friend_pairs", st.friend_pairs}, {"grants", st.grants}};
  std::ostringstream t;
  t << "generated " << o.app << " into " << state_path(o).string() << "\n";
  for (const auto& [role, n] : st.nodes) t << "  " << role << ": " << n << "\n";
  t << "  friend pairs: " << st.friend_pairs << ", grants: " << st.grants << "\n";
  emit(o, j, t.str());
  return kClean;
}

int cmd_specs_check(const Options& o) {
  const fs::path dir = fixture_dir(o);
  json j = json::object();
  std::ostringstream t;
  int status = kClean;
  std::map<AppId, AppDefinition> apps;
  try {
    apps = load_app_directory(dir);
  } catch (const std::exception& e) {
    emit(o, json{{"error", e.what()}}, std::string("invalid: ") + e.what() + "\n");
    return kFindings;
  }
  for (const auto& [app, def] : apps) {
    j[app] = {{"node_types", def.dag.node_types.size()}, {"tables", def.schema.tables.size()}};
    t << "ok  " << app << " (" << def.dag.node_types.size() << " node types)\n";
  }
  const fs::path mdir = o.mappings.empty() ? dir / "mappings" : fs::path(o.mappings);
  if (fs::exists(mdir)) {
    for (const auto& entry : fs::directory_iterator(mdir)) {
      if (entry.path().extension() != ".json") continue;
      const std::string name = entry.path().filename().string();
      try {
        std::ifstream in(entry.path());
        std::stringstream buf;
        buf << in.rdbuf();
        SpecDocument doc = SpecDocument::parse(buf.str());
        const std::string from = doc.content.value("from_app", "");
        const std::string to = doc.content.value("to_app", "");
        if (!apps.contains(from) || !apps.contains(to)) {
          throw std::invalid_argument("mapping names an unknown application");
        }
        load_mapping(doc, apps.at(from), apps.at(to)).check_structure();
        j[name] = "ok";
        t << "ok  " << name << "\n";
      } catch (const std::exception& e) {
        j[name] = e.what();
        t << "bad " << name << ": " << e.what() << "\n";
        status = kFindings;
      }
    }
  }
  emit(o, j, t.str());
  return status;
}

int cmd_map_derive(const Options& o) {
  const fs::path dir = fixture_dir(o);
  const auto apps = load_app_directory(dir);
  const fs::path mdir = o.mappings.empty() ? dir / "mappings" : fs::path(o.mappings);
  if (!fs::is_directory(mdir)) throw UsageError("no mapping directory " + mdir.string());
  const auto direct = load_mapping_directory(mdir, apps);
  const auto all = derive_all(direct, apps);
  json j = json::array();
  std::ostringstream t;
  for (const auto& m : all) {
    j.push_back(save_mapping(m).content);
    CoverageReport cov = coverage(m, apps.at(m.from_app));
    t << m.from_app << " -> " << m.to_app;
    if (!m.direct()) {
      t << " via";
      for (const auto& a : m.path) t << " " << a;
    }
    t << "  coverage " << cov.aggregate << "\n";
  }
  emit(o, j, t.str());
  return kClean;
}

NodeId parse_user(const World& w, const Options& o) {
  if (o.user.find('/') != std::string::npos) return NodeId::parse(o.user);
  const auto& def = w.store(o.src).definition();
  return NodeId{o.src, def.dag.root_type, o.user};
}

void arm_fault(World& w, const std::string& spec) {
  if (spec.empty()) return;
  auto colon = spec.find(':');
  if (colon == std::string::npos) throw UsageError("fault point must be wal:K or store:K");
  const std::string kind = spec.substr(0, colon);
  std::uint64_t k = 0;
  try {
    k = std::stoull(spec.substr(colon + 1));
  } catch (const std::exception&) {
    throw UsageError("bad fault count in '" + spec + "'");
  }
  if (kind == "wal") {
    w.faults()->crash_after_wal_append(k);
  } else if (kind == "store") {
    w.faults()->fail_store_mutation(w.faults()->store_mutations() + k);
  } else {
    throw UsageError("unknown fault kind '" + kind + "'");
  }
}

int cmd_migrate(const Options& o) {
  const Fixtures fx = load_fixtures(fixture_dir(o));
  World w(fx);
  load_world(w, o);
  if (!fx.apps.contains(o.src) || !fx.apps.contains(o.dst)) {
    throw UsageError("unknown application");
  }
  if (o.all == !o.user.empty()) throw UsageError("give exactly one of --user and --all");
  MigrationType type = MigrationType::kDeletion;
  if (o.type == "independent") {
    type = MigrationType::kIndependent;
  } else if (o.type != "deletion") {
    throw UsageError("--type must be deletion or independent");
  }
  if (o.algorithm != "engine" && type != MigrationType::kDeletion) {
    throw UsageError("the naive baselines only delete");
  }

  std::vector<NodeId> users = o.all ? w.users(o.src) : std::vector<NodeId>{parse_user(w, o)};
  for (const auto& u : users) {
    if (!w.store(o.src).contains(u)) throw UsageError("no user " + u.str() + " in " + o.src);
  }
  arm_fault(w, o.fault);

  json reports = json::array();
  std::ostringstream t;
  std::uint64_t seed = o.seed;
  for (const auto& u : users) {
    MigrationReport r;
    if (o.algorithm == "naive") {
      r = run_naive(w.env(), u, o.dst);
    } else if (o.algorithm == "naive+") {
      r = run_naive_plus(w.env(), u, o.dst);
    } else if (o.algorithm == "engine") {
      MigrationRequest req;
      req.user_root = u;
      req.dst = o.dst;
      req.type = type;
      req.workers = o.workers;
      req.seed = seed++;
      if (o.cutoff >= 0) req.cutoff = o.cutoff;
      try {
        r = w.engine().migrate(req);
      } catch (const InjectedCrash& e) {
        // Restart: recovery undoes whatever the crashed run left behind.
        auto touched = w.engine().recover();
        r.user = u.str();
        r.src = o.src;
        r.dst = o.dst;
        r.type = type;
        r.migration_id = touched.empty() ? "" : touched.back();
        r.outcome = Outcome::kRolledBack;
        r.error = e.what();
      }
    } else {
      throw UsageError("--algorithm must be engine, naive or naive+");
    }
    if (r.outcome == Outcome::kRolledBack) {
      // The fault has fired; the remaining users migrate normally.
      w.faults()->crash_after_wal_append(0);
      w.faults()->fail_store_mutation(0);
    }
    reports.push_back(r.to_json());
    t << r.migration_id << " " << u.str() << " " << to_string(r.outcome)
      << " migrated=" << r.migrated << " bagged=" << r.bagged() << " skipped=" << r.skipped()
      << " cost=" << r.migration_cost + r.validation_cost;
    if (!r.error.empty()) t << " error=\"" << r.error << "\"";
    t << "\n";
  }
  write_json(state_path(o), w.save());
  emit(o, reports, t.str());
  return kClean;
}

int cmd_audit(const Options& o) {
  const Fixtures fx = load_fixtures(fixture_dir(o));
  World w(fx);
  load_world(w, o);
  AnomalyAudit a = w.audit();
  json j = a.to_json();
  std::ostringstream t;
  t << a.table();
  t << (a.clean() ? "clean" : std::to_string(a.findings()) + " findings") << "\n";
  emit(o, j, t.str());
  return o.strict && !a.clean() ? kFindings : kClean;
}

int cmd_report(const Options& o, const std::string& which) {
  const Fixtures fx = load_fixtures(fixture_dir(o));
  if (!fx.apps.contains(o.src) || !fx.apps.contains(o.dst)) {
    throw UsageError("unknown application");
  }
  const GenConfig cfg = gen_config(o);
  if (which == "continuity") {
    ContinuityComparison c = continuity_comparison(fx, cfg, o.src, o.dst);
    emit(o, c.to_json(), c.table());
  } else if (which == "scaling") {
    ScalingReport s = scaling_report(fx, cfg, o.src, o.dst, o.samples);
    emit(o, s.to_json(), s.table());
  } else if (which == "rates") {
    RatesReport r = rates_report(fx, cfg, o.src, o.dst);
    emit(o, r.to_json(), r.table());
  } else {
    throw UsageError("report must be continuity, scaling or rates");
  }
  return kClean;
}

int cmd_bags(const Options& o, bool take) {
  const Fixtures fx = load_fixtures(fixture_dir(o));
  World w(fx);
  load_world(w, o);
  std::ostringstream t;
  json j = json::array();
  if (take) {
    if (o.user.empty() || o.origin.empty()) throw UsageError("bags take needs --user and --origin");
    BagEntry e;
    try {
      e = w.meta().bags.take(o.user, NodeId::parse(o.origin));
    } catch (const NotFound& err) {
      throw UsageError(err.what());
    }
    write_json(state_path(o), w.save());
    j.push_back(to_json(e));
    t << "took " << e.origin.str() << " (" << to_string(e.reason) << ")\n";
  } else {
    auto entries = o.user.empty() ? w.meta().bags.all() : w.meta().bags.list(o.user);
    for (const auto& e : entries) {
      j.push_back(to_json(e));
      t << e.owner << "  " << e.origin.str() << "  " << to_string(e.reason)
        << (e.partial ? " partial" : "") << "\n";
    }
    t << entries.size() << " entries\n";
  }
  emit(o, j, t.str());
  return kClean;
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"Cross-application data migration with anomaly auditing"};
  app.require_subcommand(1);
  app.add_option("-w,--workspace", o.workspace, "Directory holding state.json");
  app.add_option("--fixtures", o.fixtures, "Directory of application specs and mappings");
  app.add_flag("--json", o.json_out, "Print structured output instead of tables");

  auto gen_opts = [&](CLI::App* c) {
    c->add_option("--users", o.users, "Number of users")->check(CLI::PositiveNumber);
    c->add_option("--seed", o.seed, "Random seed");
    c->add_option("--config", o.config_file, "Generator config (JSON)")->check(CLI::ExistingFile);
  };

  CLI::App* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  gen->add_option("--app", o.app, "Application to populate");
  gen_opts(gen);

  CLI::App* specs = app.add_subcommand("specs", "Specification tools");
  specs->require_subcommand(1);
  CLI::App* check = specs->add_subcommand("check", "Validate the application specs and mappings");
  check->add_option("--mappings", o.mappings, "Mapping directory");

  CLI::App* map = app.add_subcommand("map", "Schema mapping tools");
  map->require_subcommand(1);
  CLI::App* derive = map->add_subcommand("derive", "Derive every mapping by composition");
  derive->add_option("--mappings", o.mappings, "Mapping directory");

  CLI::App* mig = app.add_subcommand("migrate", "Migrate users between applications");
  mig->add_option("--type", o.type, "deletion or independent");
  mig->add_option("--src", o.src, "Source application");
  mig->add_option("--dst", o.dst, "Destination application");
  mig->add_option("--user", o.user, "User root key or full node id");
  mig->add_flag("--all", o.all, "Migrate every user of the source");
  mig->add_option("--workers", o.workers, "Worker threads")->check(CLI::Range(1, 64));
  mig->add_option("--seed", o.seed, "Seed for worker scheduling");
  mig->add_option("--fault-inject", o.fault, "wal:K crashes after the K-th log append; "
                                             "store:K fails the K-th store change");
  mig->add_option("--algorithm", o.algorithm, "engine, naive or naive+");
  mig->add_option("--cutoff", o.cutoff, "Only move nodes created at or before this time");

  CLI::App* aud = app.add_subcommand("audit", "Scan the workspace for anomalies");
  aud->add_flag("--strict", o.strict, "Exit 1 on any finding");

  CLI::App* rep = app.add_subcommand("report", "Run an experiment on a fresh world");
  std::string which;
  rep->add_option("which", which, "continuity, scaling or rates")->required();
  rep->add_option("--src", o.src, "Source application");
  rep->add_option("--dst", o.dst, "Destination application");
  rep->add_option("--samples", o.samples, "Users measured for scaling");
  gen_opts(rep);

  CLI::App* bags = app.add_subcommand("bags", "Inspect data bags");
  bags->require_subcommand(1);
  CLI::App* list = bags->add_subcommand("list", "List bag entries");
  list->add_option("--user", o.user, "Owner (canonical user id)");
  CLI::App* take = bags->add_subcommand("take", "Remove an entry from a bag");
  take->add_option("--user", o.user, "Owner (canonical user id)");
  take->add_option("--origin", o.origin, "Original node id");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*gen) return cmd_gen(o);
    if (*check) return cmd_specs_check(o);
    if (*derive) return cmd_map_derive(o);
    if (*mig) return cmd_migrate(o);
    if (*aud) return cmd_audit(o);
    if (*rep) return cmd_report(o, which);
    if (*list) return cmd_bags(o, false);
    if (*take) return cmd_bags(o, true);
  } catch (const std::exception& e) {
    std::cerr << "xmig: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
