#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dynrec/differentiation.hpp"
#include "dynrec/experiments.hpp"
#include "dynrec/random.hpp"
#include "oracles.hpp"

using namespace dynrec;
using nlohmann::json;

namespace {

namespace fs = std::filesystem;

// Collects named checks; the criterion passes when all of them do.
class Verdict {
 public:
  void check(bool ok, const std::string& what) {
    std::cout << "  [" << (ok ? "ok" : "FAIL") << "] " << what << '\n';
    all_ &= ok;
  }
  void note(const std::string& what) { std::cout << "  " << what << '\n'; }
  bool passed() const { return all_; }

 private:
  bool all_ = true;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

json resolved(Experiment e, Preset p, const json& overrides = json::object()) {
  return resolve_config(e, p, std::nullopt, overrides);
}

const std::vector<std::string>& row_of(const CsvTable& table, std::size_t column, const std::string& key) {
  for (const auto& row : table.rows)
    if (row[column] == key) return row;
  throw std::runtime_error("no row with key " + key);
}

// Phase transition on Lorenz 96, n = 50, component 10.
bool criterion_1(Verdict& v) {
  const json cfg = resolved(Experiment::phase_transition, Preset::desk, {{"experiment", {{"bursts", {20, 100}}}}});
  const auto report = run_experiment(Experiment::phase_transition, cfg);
  const double p20 = std::stod(row_of(report.table, 0, "20")[4]);
  const double p100 = std::stod(row_of(report.table, 0, "100")[4]);
  v.check(p100 >= 0.8, "P(success) at K=100 is " + fmt(p100) + " (need >= 0.8)");
  v.check(p20 <= 0.25, "P(success) at K=20 is " + fmt(p20) + " (need <= 0.25)");
  return v.passed();
}

// Fisher coefficients, n = 200, K = 159.
bool criterion_2(Verdict& v) {
  const json doc = resolved(Experiment::fisher_table, Preset::paper);
  const RecoveryConfig base = recovery_config_from_json(doc);
  const ExperimentParams params = experiment_params_from_json(doc);
  v.check(base.system.n == 200 && base.bursts == 159 && base.samples == 5, "n=200, K=159, m=5");
  for (double gamma : {0.25, 0.1, 0.01, 0.0}) {
    RecoveryConfig run = with_seed(base, params.seed);
    run.system = SystemSpec::fisher(200, gamma);
    const auto result = run_recovery(run);
    const ComponentResult& c = result.components.front();

    std::vector<std::pair<Column, double>> truth = {
        {Column::linear(0), -2.0 + gamma}, {Column::linear(1), 1.0}, {Column::linear(199), 1.0}};
    if (gamma != 0.0) truth.push_back({Column::quadratic(0, 0), -gamma});
    std::vector<Column> expected_support;
    for (const auto& [col, value] : truth) expected_support.push_back(col);
    std::vector<Column> support;
    for (auto k : c.support) support.push_back(c.columns[k]);
    auto key = [](const Column& a, const Column& b) { return column_position(a, 200) < column_position(b, 200); };
    std::sort(expected_support.begin(), expected_support.end(), key);
    std::sort(support.begin(), support.end(), key);

    double pre = 0.0, post = 0.0;
    std::string values;
    for (const auto& [col, value] : truth) {
      pre = std::max(pre, std::abs(c.pre_debias_coefficient(col) - value));
      post = std::max(post, std::abs(c.coefficient(col) - value));
      values += " " + term_name(col) + "=" + fmt(c.pre_debias_coefficient(col), 5) + "/" + fmt(c.coefficient(col), 6);
    }
    const std::string tag = "gamma=" + fmt(gamma) + ":";
    v.note(tag + values + " (pre/post)");
    v.check(c.solver_converged, tag + " solver converged");
    v.check(support == expected_support, tag + " support has " + std::to_string(support.size()) + " terms, expected " +
                                             std::to_string(expected_support.size()));
    v.check(pre <= 0.02, tag + " max pre-debias error " + fmt(pre) + " (need <= 0.02)");
    v.check(post <= 1e-3, tag + " max post-debias error " + fmt(post) + " (need <= 1e-3)");
  }
  return v.passed();
}

// Localized recovery on Fisher, n = 1000, ell = 11.
bool criterion_3(Verdict& v) {
  const json doc = resolved(Experiment::localization, Preset::desk, {{"experiment", {{"windows", {11}}}}});
  const RecoveryConfig base = recovery_config_from_json(doc);
  const ExperimentParams params = experiment_params_from_json(doc);
  v.check(base.system.n == 1000 && base.ell == 11u, "Fisher n=1000, ell=11");

  // Same seed layout as the minimum-K scan.
  RecoveryConfig at30 = base;
  at30.bursts = 30;
  const std::uint64_t master = derive_seed(params.seed, {11});
  std::size_t wins = 0;
  for (std::size_t t = 0; t < 10; ++t) wins += run_success_trial(at30, derive_seed(master, {30, t}));
  v.check(wins >= 9, "exact recovery at K=30 in " + std::to_string(wins) + "/10 trials (need >= 9)");

  const auto report = run_experiment(Experiment::localization, doc);
  const auto& row = row_of(report.table, 0, "11");
  if (row[3] != "Y") {
    v.check(false, "minimum-K scan found no K with 10/10 successes");
    return false;
  }
  const double ratio = std::stod(row[2]);
  v.check(ratio >= 1.5 && ratio <= 3.0, "min K = " + row[1] + ", ratio K/(5 ln 11) = " + fmt(ratio) +
                                            " (need within [1.5, 3.0])");
  return v.passed();
}

// One long chaotic Lorenz 96 trajectory.
bool criterion_4(Verdict& v) {
  const json doc = resolved(Experiment::single_trajectory, Preset::desk);
  const RecoveryConfig base = recovery_config_from_json(doc);
  const ExperimentParams params = experiment_params_from_json(doc);
  v.check(base.system.n == 50 && base.bursts == 1 && base.samples == 500 && base.dt == 1.0, "n=50, K=1, m=500, dt=1");
  const std::vector<std::pair<Column, double>> truth = {{Column::constant(), 8.0},
                                                        {Column::linear(0), -1.0},
                                                        {Column::quadratic(1, 49), 1.0},
                                                        {Column::quadratic(48, 49), -1.0}};
  for (auto source : {VelocitySource::exact_observed, VelocitySource::fine_step_fd}) {
    RecoveryConfig run = with_seed(base, params.seed);
    run.velocity = source;
    run.dt_fine = 0.01;
    const ComponentResult c = run_recovery(run).components.front();
    const std::string tag = to_string(source) + ":";
    std::vector<std::size_t> support;
    for (auto k : c.support) support.push_back(column_position(c.columns[k], 50));
    std::vector<std::size_t> expected;
    for (const auto& [col, value] : truth) expected.push_back(column_position(col, 50));
    std::sort(expected.begin(), expected.end());
    double worst = 0.0;
    std::string values;
    for (const auto& [col, value] : truth) {
      worst = std::max(worst, std::abs(c.coefficient(col) - value));
      values += " " + term_name(col) + "=" + fmt(c.coefficient(col), 6);
    }
    v.note(tag + values);
    v.check(support == expected, tag + " support exact (" + std::to_string(support.size()) + " terms)");
    v.check(worst <= 0.05, tag + " max coefficient error " + fmt(worst) + " (need <= 0.05)");
  }
  return v.passed();
}

// Noise robustness trend, K = 200, m = 3.
bool criterion_5(Verdict& v) {
  const json doc = resolved(Experiment::noise_sweep, Preset::desk, {{"experiment", {{"levels", {0.0, 1.0, 2.5, 5.0, 7.0}}}}});
  const auto report = run_experiment(Experiment::noise_sweep, doc);
  for (const auto& row : report.table.rows) {
    v.note("noise " + row[0] + "%: median rel_l2 " + fmt(std::stod(row[2])) + "%, top-4 support " + row[4] + "/" +
           row[1] + ", least squares on the true support " + fmt(std::stod(row[5])) + "%");
  }
  const auto& at25 = row_of(report.table, 0, format_double(2.5));
  v.check(std::stod(at25[2]) <= 6.0, "median rel_l2 at 2.5% noise is " + fmt(std::stod(at25[2])) + "% (need <= 6%)");
  for (double level : {0.0, 1.0, 2.5, 5.0}) {
    const auto& row = row_of(report.table, 0, format_double(level));
    v.check(std::stoi(row[4]) >= 7,
            "top-4 support at " + fmt(level) + "% correct in " + row[4] + "/10 trials (need >= 7)");
  }
  const auto& at7 = row_of(report.table, 0, format_double(7.0));
  v.check(10 - std::stoi(at7[4]) >= 5, "top-4 support at 7% fails in " + std::to_string(10 - std::stoi(at7[4])) +
                                           "/10 trials (need >= 5)");
  return v.passed();
}

// L-BP against least squares and thresholded least squares on the same data.
bool criterion_6(Verdict& v) {
  const json doc = resolved(Experiment::compare, Preset::desk);
  const auto report = run_experiment(Experiment::compare, doc);
  const json& s = report.summary;
  v.note("dictionary " + s["rows"].dump() + " x " + s["columns"].dump());
  v.check(s["rows"].get<long>() < s["columns"].get<long>(), "data are under-sampled");
  v.check(s["l_bp_success"].get<bool>(), "L-BP recovers the 4-term truth");
  v.check(s["entries_above_threshold"]["l-bp"].get<int>() == 4, "L-BP support has " +
                                                                    s["entries_above_threshold"]["l-bp"].dump() + " entries");
  const int ls = s["entries_above_threshold"]["least-squares"].get<int>();
  v.check(ls > 100, "least squares has " + std::to_string(ls) + " entries above 1e-3 max|c| (need > 100)");
  v.check(s["stls_matches_thresholded_least_squares"].get<bool>(),
          "STLS(0.05) support equals the thresholded least-squares support");
  v.check(s["stls_large_is_zero"].get<bool>(), "STLS with lambda " + fmt(s["stls_large_lambda"].get<double>()) +
                                                   " returns the zero vector");
  return v.passed();
}

int cli_exit(const std::string& args, std::string* out = nullptr) {
  const fs::path capture = fs::temp_directory_path() / "dynrec_acceptance_stdout.txt";
  const std::string cmd = std::string(DYNREC_CLI) + " " + args + " > " + capture.string() + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  if (out) {
    std::ifstream in(capture);
    std::stringstream text;
    text << in.rdbuf();
    *out = text.str();
  }
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Property suites.
bool criterion_7(Verdict& v) {
  std::mt19937_64 rng(2024);

  double bos = 0.0;
  for (int k = 0; k < 10000; ++k) {
    const Eigen::VectorXd x = testing::uniform_vector(rng, 10);
    bos = std::max(bos, legendre_row(testing::view(x)).cwiseAbs().maxCoeff());
  }
  v.check(bos <= 3.0 + 1e-12, "max |Legendre entry| on 1e4 points = " + fmt(bos, 8) + " (need <= 3)");

  double gram = 0.0;
  for (std::size_t n = 1; n <= 3; ++n) {
    const Eigen::MatrixXd G = testing::legendre_gram(n);
    gram = std::max(gram, (G - Eigen::MatrixXd::Identity(G.rows(), G.cols())).cwiseAbs().maxCoeff());
  }
  v.check(gram <= 1e-12, "Gram matrix deviation from identity " + fmt(gram, 3) + " (need <= 1e-12)");

  const std::size_t n = 6;
  const auto N = static_cast<Eigen::Index>(num_columns(n));
  double round_trip = 0.0;
  for (int k = 0; k < 20; ++k) {
    const Eigen::VectorXd c = testing::uniform_vector(rng, N);
    const Eigen::VectorXd back =
        change_basis(change_basis(c, Basis::monomial, Basis::legendre, n), Basis::legendre, Basis::monomial, n);
    round_trip = std::max(round_trip, (back - c).cwiseAbs().maxCoeff());
  }
  v.check(round_trip <= 1e-14, "change_basis round trip error " + fmt(round_trip, 3) + " (need <= 1e-14)");

  Eigen::MatrixXd T(N, N);
  for (Eigen::Index p = 0; p < N; ++p) {
    T.col(p) = change_basis(Eigen::VectorXd::Unit(N, p), Basis::legendre, Basis::monomial, n);
  }
  double rows = 0.0;
  for (int k = 0; k < 100; ++k) {
    const Eigen::VectorXd x = testing::uniform_vector(rng, static_cast<Eigen::Index>(n));
    const Eigen::VectorXd via = T.transpose() * monomial_row(testing::view(x));
    rows = std::max(rows, (via - legendre_row(testing::view(x))).cwiseAbs().maxCoeff());
  }
  v.check(rows <= 1e-13, "legendre_row vs monomial_row * T error " + fmt(rows, 3) + " (need <= 1e-13)");

  std::uniform_int_distribution<int> row_count(1, 3), extra(1, 3);
  double l1_gap = 0.0;
  bool feasible = true;
  int converged = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int r = row_count(rng);
    const int cols = std::min(6, r + extra(rng));
    const Eigen::MatrixXd A = testing::uniform_matrix(rng, r, cols);
    const Eigen::VectorXd b = A * testing::uniform_vector(rng, cols);
    const BpdnConfig cfg;
    const auto result = solve_bpdn(A, b, cfg);
    if (!result.converged) continue;
    ++converged;
    const double oracle = testing::vertex_oracle(A, b);
    l1_gap = std::max(l1_gap, std::abs(result.x.lpNorm<1>() - oracle) / oracle);
    feasible &= (A * result.x - b).norm() <= std::max(cfg.sigma, residual_floor(b)) * (1.0 + cfg.tol_residual);
  }
  v.check(converged == 50, "BPDN converged on " + std::to_string(converged) + "/50 tiny instances");
  v.check(l1_gap <= 1e-6, "BPDN l1 norm vs vertex enumeration, max relative gap " + fmt(l1_gap, 3));
  v.check(feasible, "BPDN residual within bound on every converged instance");

  const auto fd = testing::sine_fd_errors([](const Eigen::MatrixXd& x, double h) { return fd_velocity(x, h); });
  const double s_in = testing::loglog_slope(fd.steps, fd.interior);
  const double s_end = testing::loglog_slope(fd.steps, fd.endpoint);
  v.check(std::abs(s_in - 2.0) <= 0.1, "interior FD slope " + fmt(s_in) + " (need 2.0 +- 0.1)");
  v.check(std::abs(s_end - 1.0) <= 0.1, "endpoint FD slope " + fmt(s_end) + " (need 1.0 +- 0.1)");

  double pull = 0.0;
  const auto columns = full_columns(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd lo = testing::uniform_vector(rng, 4, -3.0, 0.0);
    const Eigen::VectorXd hi = lo + testing::uniform_vector(rng, 4, 0.5, 4.0);
    const AffineTransform frame(lo, hi);
    const Eigen::VectorXd g = testing::uniform_vector(rng, static_cast<Eigen::Index>(columns.size()));
    const std::size_t j = static_cast<std::size_t>(trial) % 4;
    const Eigen::VectorXd f = pullback_affine(g, columns, frame, j);
    for (int k = 0; k < 10; ++k) {
      const Eigen::VectorXd x = testing::uniform_vector(rng, 4, -3.0, 3.0);
      const double direct = testing::eval_monomial(g, frame.forward(x)) / frame.scale(j);
      pull = std::max(pull, std::abs(testing::eval_monomial(f, x) - direct) / std::max(1.0, std::abs(direct)));
    }
  }
  v.check(pull <= 1e-12, "pullback evaluation mismatch " + fmt(pull, 3) + " (need <= 1e-12)");

  std::string out;
  v.check(cli_exit("bound --s 5 --N 20301", &out) == 0 && out == "159\n", "exit 0 on success (bound prints 159)");
  v.check(cli_exit("phase-transition --preset enormous") == 2, "exit 2 on a bad flag value");
  const fs::path bad = fs::temp_directory_path() / "dynrec_acceptance_bad.json";
  std::ofstream(bad) << R"({"solver": {"sigmaa": 1}})";
  v.check(cli_exit("compare --dry-run --config " + bad.string()) == 2, "exit 2 on an unknown configuration key");
  const fs::path blow = fs::temp_directory_path() / "dynrec_acceptance_blowup.json";
  std::ofstream(blow) << R"({"system": {"n": 10}, "dimensions": {"bursts": 5},
    "sampling": {"init_lo": -100.0, "init_hi": -50.0, "dt": 1.0}, "experiment": {"gammas": [1.0]}})";
  v.check(cli_exit("fisher-table --config " + blow.string()) == 3, "exit 3 on an integration failure");

  const fs::path small = fs::temp_directory_path() / "dynrec_acceptance_small.json";
  std::ofstream(small) << R"({"system": {"n": 12}, "dimensions": {"components": [3]},
    "experiment": {"bursts": [30], "trials": 2}})";
  v.check(cli_exit("phase-transition --config " + small.string(), &out) == 0, "small phase-transition run exits 0");
  const CsvTable table = parse_csv(out);
  v.check(table.header == std::vector<std::string>{"K", "K_over_N", "trials", "successes", "probability"} &&
              table.rows.size() == 1,
          "phase-transition CSV schema");
  CsvTable quoted;
  quoted.header = {"term", "note"};
  quoted.add_row({"x1*x2", "a,b \"c\"\nd"});
  const std::string text = to_csv(quoted);
  v.check(text == "term,note\nx1*x2,\"a,b \"\"c\"\"\nd\"\n" && parse_csv(text) == quoted, "RFC 4180 quoting round trip");
  return v.passed();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> criteria;
  app.add_option("--criterion", criteria, "criterion numbers to run (default: all)")->check(CLI::Range(1, 7));
  CLI11_PARSE(app, argc, argv);
  if (criteria.empty()) criteria = {1, 2, 3, 4, 5, 6, 7};

  const std::function<bool(Verdict&)> runners[] = {criterion_1, criterion_2, criterion_3, criterion_4,
                                                   criterion_5, criterion_6, criterion_7};
  bool all = true;
  for (int c : criteria) {
    Verdict verdict;
    const auto start = std::chrono::steady_clock::now();
    bool ok = false;
    try {
      ok = runners[c - 1](verdict);
    } catch (const std::exception& e) {
      verdict.check(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << "criterion " << c << ": " << (ok ? "PASS" : "FAIL") << " (" << fmt(secs, 3) << " s)" << std::endl;
    all &= ok;
  }
  return all ? 0 : 1;
}
