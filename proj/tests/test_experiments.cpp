#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "doctest.h"

#include "dynrec/csv.hpp"
#include "dynrec/errors.hpp"
#include "dynrec/experiments.hpp"

using namespace dynrec;
using nlohmann::json;

namespace {

namespace fs = std::filesystem;

struct CliRun {
  int code = -1;
  std::string out;
};

CliRun run_cli(const std::string& args) {
  const fs::path capture = fs::temp_directory_path() / "dynrec_cli_stdout.txt";
  const std::string command = std::string(DYNREC_CLI) + " " + args + " > " + capture.string() + " 2>/dev/null";
  const int status = std::system(command.c_str());
  CliRun run;
  run.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(capture);
  std::stringstream text;
  text << in.rdbuf();
  run.out = text.str();
  return run;
}

fs::path scratch_dir() {
  const fs::path dir = fs::temp_directory_path() / "dynrec_experiment_tests";
  fs::create_directories(dir);
  return dir;
}

fs::path write_json(const std::string& name, const json& doc) {
  const fs::path path = scratch_dir() / name;
  std::ofstream(path) << doc.dump(2);
  return path;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream text;
  text << in.rdbuf();
  return text.str();
}

json small_lorenz() {
  return {{"system", {{"n", 12}}}, {"dimensions", {{"components", {3}}}}};
}

}  // namespace

TEST_SUITE("experiments") {
  TEST_CASE("csv round trip with quoting") {
    CsvTable table;
    table.header = {"name", "value", "note"};
    table.add_row({"plain", format_double(0.1), ""});
    table.add_row({"with,comma", format_double(-1.0 / 3.0), "say \"hi\""});
    table.add_row({"multi\nline", format_double(1e-300), format_bool(true)});
    const std::string text = to_csv(table);
    CHECK(text.find("\"with,comma\"") != std::string::npos);
    CHECK(text.find("\"say \"\"hi\"\"\"") != std::string::npos);
    CHECK(text.rfind("plain,0.10000000000000001,\n", 0) == std::string::npos);
    CHECK(parse_csv(text) == table);
    CHECK(std::stod(parse_csv(text).rows[1][1]) == -1.0 / 3.0);
    CHECK(format_bool(false) == "false");

    const CsvTable crlf = parse_csv("a,b\r\n1,2\r\n");
    REQUIRE(crlf.rows.size() == 1);
    CHECK(crlf.rows[0][1] == "2");

    CHECK_THROWS_AS(table.add_row({"too", "short"}), ShapeError);
    CHECK_THROWS_AS(parse_csv("a,\"open\n"), InvalidArgument);

    const fs::path path = scratch_dir() / "round.csv";
    write_csv(path, table);
    CHECK(read_csv(path) == table);
  }

  TEST_CASE("configuration layering") {
    const json defaults = default_config(Experiment::phase_transition, Preset::desk);
    CHECK(defaults["system"]["n"] == 50);
    CHECK(defaults["experiment"]["bursts"] == json({20, 40, 60, 80, 100}));
    const json paper = default_config(Experiment::phase_transition, Preset::paper);
    CHECK(paper["experiment"]["trials"] == 100);
    CHECK(paper["experiment"]["bursts"].size() == 53);

    const fs::path file = write_json("layer.json", {{"system", {{"n", 30}}}, {"experiment", {{"trials", 4}}}});
    const json overrides = {{"experiment", {{"trials", 6}}}};
    const json cfg = resolve_config(Experiment::phase_transition, Preset::desk, file, overrides);
    CHECK(cfg["system"]["n"] == 30);
    CHECK(cfg["system"]["kind"] == "lorenz96");
    CHECK(cfg["experiment"]["trials"] == 6);
    CHECK(experiment_params_from_json(cfg).trials == 6);
    const RecoveryConfig rc = recovery_config_from_json(cfg);
    CHECK(rc.system.n == 30);
    CHECK(rc.components == std::vector<std::size_t>{9});

    const fs::path unknown = write_json("unknown.json", {{"solver", {{"sigmaa", 1.0}}}});
    CHECK_THROWS_AS(resolve_config(Experiment::compare, Preset::desk, unknown), ConfigError);
    CHECK_THROWS_AS(resolve_config(Experiment::compare, Preset::desk, std::nullopt, {{"bogus", 1}}), ConfigError);

    const fs::path broken = scratch_dir() / "broken.json";
    std::ofstream(broken) << "{ not json";
    CHECK_THROWS_AS(resolve_config(Experiment::compare, Preset::desk, broken), ConfigError);

    json bad = defaults;
    bad["dimensions"]["components"] = {0};
    CHECK_THROWS_AS(recovery_config_from_json(bad), ConfigError);
    bad = defaults;
    bad["solver"]["sigma"] = "tight";
    CHECK_THROWS_AS(recovery_config_from_json(bad), ConfigError);
    bad = defaults;
    bad["dimensions"]["bursts"] = "many";
    CHECK_THROWS_AS(recovery_config_from_json(bad), ConfigError);
    bad = defaults;
    bad["strategy"]["name"] = "localized";
    CHECK_THROWS_AS(recovery_config_from_json(bad), ConfigError);

    json fixed = defaults;
    fixed["solver"]["sigma"] = 0.25;
    fixed["noise"]["ratio"] = 2.5;
    const RecoveryConfig fc = recovery_config_from_json(fixed);
    CHECK(fc.sigma.kind == SigmaPolicy::Kind::fixed);
    CHECK(fc.sigma.value == 0.25);
    REQUIRE(fc.noise);
    CHECK(fc.noise->ratio == 2.5);
  }

  TEST_CASE("experiment and preset names") {
    for (auto e : {Experiment::phase_transition, Experiment::fisher_table, Experiment::localization,
                   Experiment::single_trajectory, Experiment::noise_sweep, Experiment::compare}) {
      CHECK(experiment_from_string(to_string(e)) == e);
      CHECK_NOTHROW(recovery_config_from_json(default_config(e, Preset::desk)));
      CHECK_NOTHROW(recovery_config_from_json(default_config(e, Preset::paper)));
    }
    CHECK(to_string(Experiment::noise_sweep) == "noise-sweep");
    CHECK(preset_from_string("paper") == Preset::paper);
    CHECK_THROWS_AS(preset_from_string("huge"), ConfigError);
  }

  TEST_CASE("phase transition output is deterministic") {
    json overrides = small_lorenz();
    overrides["experiment"] = {{"bursts", {8, 30}}, {"trials", 3}};
    const json cfg = resolve_config(Experiment::phase_transition, Preset::desk, std::nullopt, overrides);
    const auto a = run_experiment(Experiment::phase_transition, cfg);
    const auto b = run_experiment(Experiment::phase_transition, cfg);
    CHECK(a.table.header == std::vector<std::string>{"K", "K_over_N", "trials", "successes", "probability"});
    REQUIRE(a.table.rows.size() == 2);
    CHECK(a.table.rows[1][0] == "30");
    CHECK(std::stod(a.table.rows[1][1]) == doctest::Approx(30.0 / 91.0));
    CHECK(a.table.rows[1][3] == "3");
    CHECK(to_csv(a.table) == to_csv(b.table));
    CHECK(a.seed == 1);

    const fs::path out = scratch_dir() / "phase.csv";
    write_report(a, out);
    CHECK(read_csv(out) == a.table);
    const json meta = json::parse(slurp(out.string() + ".meta.json"));
    CHECK(meta["seed"] == 1);
    CHECK(meta.contains("parameters"));
    CHECK(meta.contains("wall_seconds"));
  }

  TEST_CASE("schemas of the remaining experiments") {
    {
      json o = {{"system", {{"n", 10}}}, {"dimensions", {{"bursts", 40}}}, {"experiment", {{"gammas", {0.1, 0.0}}}}};
      const auto r = run_experiment(Experiment::fisher_table,
                                    resolve_config(Experiment::fisher_table, Preset::desk, std::nullopt, o));
      CHECK(r.table.header ==
            std::vector<std::string>{"term", "gamma", "recovered", "debiased", "true", "converged"});
      CHECK(!r.table.rows.empty());
    }
    {
      json o = {{"system", {{"n", 20}}},
                {"strategy", {{"ell", 5}}},
                {"experiment", {{"windows", {5}}, {"trials", 2}}}};
      const auto r = run_experiment(Experiment::localization,
                                    resolve_config(Experiment::localization, Preset::desk, std::nullopt, o));
      CHECK(r.table.header == std::vector<std::string>{"ell", "min_K", "ratio", "resolved"});
      REQUIRE(r.table.rows.size() == 1);
      CHECK(r.table.rows[0][0] == "5");
      CHECK(r.table.rows[0][3] == "Y");
    }
    {
      json o = {{"system", {{"n", 8}}}, {"dimensions", {{"samples", 120}}}, {"experiment", {{"velocities", {"exact-observed"}}}}};
      const auto r = run_experiment(Experiment::single_trajectory,
                                    resolve_config(Experiment::single_trajectory, Preset::desk, std::nullopt, o));
      CHECK(r.table.header == std::vector<std::string>{"velocity", "term", "recovered", "debiased", "true"});
      CHECK(!r.table.rows.empty());
    }
    {
      json o = small_lorenz();
      o["dimensions"]["bursts"] = 30;
      o["experiment"] = {{"levels", {0.0, 1.0}}, {"trials", 2}};
      const auto r = run_experiment(Experiment::noise_sweep,
                                    resolve_config(Experiment::noise_sweep, Preset::desk, std::nullopt, o));
      CHECK(r.table.header == std::vector<std::string>{"noise_pct", "trials", "rel_l2_pct", "support_ok",
                                                       "support_ok_trials", "oracle_rel_l2_pct"});
      REQUIRE(r.table.rows.size() == 2);
      CHECK(r.table.rows[0][3] == "Y");
    }
    {
      json o = small_lorenz();
      o["dimensions"]["bursts"] = 40;
      const auto r =
          run_experiment(Experiment::compare, resolve_config(Experiment::compare, Preset::desk, std::nullopt, o));
      CHECK(r.table.header == std::vector<std::string>{"method", "position", "term", "coefficient"});
      CHECK(r.summary["stls_large_is_zero"] == true);
      CHECK(r.summary["l_bp_success"] == true);
    }
  }

  TEST_CASE("command line exit codes and output") {
    const auto bound = run_cli("bound --s 5 --N 20301");
    CHECK(bound.code == 0);
    CHECK(bound.out == "159\n");
    CHECK(run_cli("bound --s 5 --N 11 --c 2.1").out == "26\n");
    CHECK(run_cli("bound --s 5 --N 20301 --mode theoretical --eps 1").out == "0\n");

    CHECK(run_cli("--help").code == 0);
    CHECK(run_cli("").code == 2);
    CHECK(run_cli("bound --s 5").code == 2);
    CHECK(run_cli("phase-transition --preset enormous").code == 2);
    CHECK(run_cli("phase-transition --config /nonexistent/file.json").code == 2);

    const fs::path unknown = write_json("cli_unknown.json", {{"experiment", {{"trails", 3}}}});
    CHECK(run_cli("phase-transition --dry-run --config " + unknown.string()).code == 2);

    const auto dry = run_cli("compare --dry-run --seed 17");
    CHECK(dry.code == 0);
    const json echoed = json::parse(dry.out);
    CHECK(echoed["experiment"]["seed"] == 17);
    CHECK(echoed["dimensions"]["components"] == json({35}));
  }

  TEST_CASE("command line reruns are byte-identical") {
    json doc = small_lorenz();
    doc["experiment"] = {{"bursts", {10, 25}}, {"trials", 2}};
    const fs::path config = write_json("cli_phase.json", doc);
    const fs::path a = scratch_dir() / "cli_a.csv";
    const fs::path b = scratch_dir() / "cli_b.csv";
    CHECK(run_cli("phase-transition --config " + config.string() + " --seed 4 --out " + a.string()).code == 0);
    CHECK(run_cli("phase-transition --config " + config.string() + " --seed 4 --out " + b.string()).code == 0);
    CHECK(slurp(a) == slurp(b));
    CHECK(!slurp(a).empty());
    CHECK(fs::exists(a.string() + ".meta.json"));

    const auto piped = run_cli("phase-transition --config " + config.string() + " --seed 4");
    CHECK(piped.code == 0);
    CHECK(piped.out == slurp(a));
  }
}
