#include "CLI11.hpp"
#include "bess/errors.hpp"
#include "bess/harness.hpp"
#include "bess/oracle.hpp"

#include <fstream>
#include <iostream>

using namespace bess;
using nlohmann::json;

namespace {

json theta_json(const PolicyTheta& t) { return json::array({t.theta1, t.theta2}); }

json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

SimConfig read_config(const std::string& path, std::optional<std::uint64_t> seed) {
  SimConfig cfg = path.empty() ? default_config() : load_config(path);
  if (seed) cfg.seed = *seed;
  cfg.validate();
  return cfg;
}

std::vector<int> parse_sizes(const std::string& list, const char* what) {
  std::vector<int> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    const auto comma = list.find(',', start);
    const std::string item = list.substr(start, comma - start);
    try {
      std::size_t used = 0;
      const int v = std::stoi(item, &used);
      if (used != item.size() || v < 1) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError(std::string(what) + ": bad entry '" + item + "'");
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

int cmd_simulate(const std::string& config, const std::string& out_dir,
                 std::optional<std::uint64_t> seed, bool debug_enki) {
  const SimConfig cfg = read_config(config, seed);
  const std::filesystem::path dir(out_dir);

  std::vector<DiagnosticsRow> diag;
  SimulationHooks hooks;
  if (debug_enki) {
    hooks.on_iteration = [&](int step, const IterationDiagnostics& d) { diag.push_back({step, d}); };
  }
  std::vector<StepRecord> records;
  try {
    records = run_simulation(cfg, hooks);
  } catch (const DivergenceError&) {
    if (debug_enki) write_diagnostics_csv(diag, dir / cfg.output.diagnostics);
    throw;
  }
  write_outputs(records, cfg, {dir / cfg.output.csv, dir / cfg.output.summary});
  if (debug_enki) write_diagnostics_csv(diag, dir / cfg.output.diagnostics);

  const json summary = summarize(records, cfg);
  std::cerr << "steps " << records.size() << ", nonconverged "
            << summary["nonconverged_steps"].size() << ", infeasible "
            << summary["infeasible_steps"].size() << ", solve time "
            << summary["runtime"]["total_s"].get<double>() << " s\n";
  return 0;
}

int cmd_solve_step(const std::string& config, const std::string& state_path, int step,
                   std::optional<std::uint64_t> seed) {
  const SimConfig cfg = read_config(config, seed);
  std::mt19937_64 rng(cfg.seed);
  const InitialPack init = init_pack(cfg, rng);
  const PackState state = read_state_csv(state_path, cfg.pack.env_temperature);
  if (state.size() != init.params.size()) {
    throw ConfigError("state file has " + std::to_string(state.size()) + " cells, config has " +
                      std::to_string(init.params.size()));
  }
  const ControlProblem problem = make_problem(cfg, state, init.params, step);
  EnkiConfig enki = cfg.enki;
  enki.seed = stream_seed(cfg.seed, static_cast<std::uint64_t>(step), 0x656e6b69ULL);
  const EnkiResult res = solve(problem, enki);

  const Vec ocv = open_circuit_voltages(state, init.params);
  const Vec mu = applied_shares(res.theta_star, cfg.hyper, state, init.params,
                                weights_resistance(init.params.internal_resistances()),
                                problem.power.front(), ocv, cfg.balance_supply);
  const json out = {{"theta_star", theta_json(res.theta_star)},
                    {"mu", vec_json(mu)},
                    {"p_out", problem.power.front()},
                    {"iterations", res.iterations},
                    {"converged", res.converged},
                    {"final_step_norm", res.final_step_norm}};
  std::cout << out.dump(2) << '\n';
  return 0;
}

int cmd_oracle_compare(const std::string& config, int resolution, int step,
                       std::optional<std::uint64_t> seed) {
  const SimConfig cfg = read_config(config, seed);
  std::mt19937_64 rng(cfg.seed);
  const InitialPack init = init_pack(cfg, rng);
  const ControlProblem problem = make_problem(cfg, init.state, init.params, step);
  EnkiConfig enki = cfg.enki;
  enki.seed = stream_seed(cfg.seed, static_cast<std::uint64_t>(step), 0x656e6b69ULL);
  const EnkiResult res = solve(problem, enki);
  const OracleReport rep = grid_search_theta(problem, {resolution}, res.theta_star, enki.threads);
  const json out = {{"theta_enki", theta_json(res.theta_star)},
                    {"theta_best", theta_json(rep.theta_best)},
                    {"cost_enki", rep.cost_enki},
                    {"cost_best", rep.cost_best},
                    {"relative_gap", rep.relative_gap},
                    {"grid_resolution", resolution},
                    {"evaluated", rep.evaluated},
                    {"enki_iterations", res.iterations},
                    {"enki_converged", res.converged}};
  std::cout << out.dump(2) << '\n';
  return 0;
}

int cmd_bench(const std::string& config, const std::string& sizes, const std::string& ensembles,
              int steps, const std::string& out_dir, std::optional<std::uint64_t> seed) {
  const SimConfig cfg = read_config(config, seed);
  const auto entries =
      bench(cfg, parse_sizes(sizes, "--sizes"), parse_sizes(ensembles, "--ensembles"), steps);
  const json doc = bench_to_json(entries);
  if (!out_dir.empty()) {
    const std::filesystem::path dir(out_dir);
    write_bench_csv(entries, dir / "bench.csv");
    std::ofstream f(dir / "bench.json");
    f << doc.dump(2) << '\n';
    if (!f) throw IoError((dir / "bench.json").string(), "write failed");
  }
  std::cout << doc.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Receding-horizon power sharing for battery packs, solved with ensemble Kalman inversion"};
  app.require_subcommand(1);

  std::string config;
  std::optional<std::uint64_t> seed;

  auto* sim = app.add_subcommand("simulate", "closed-loop simulation, writes CSV and summary JSON");
  std::string out_dir = "out";
  bool debug_enki = false;
  sim->add_option("--config", config, "JSON scenario file (default scenario when omitted)");
  sim->add_option("--out", out_dir, "output directory")->capture_default_str();
  sim->add_option("--seed", seed, "override the config seed");
  sim->add_flag("--debug-enki", debug_enki, "log per-iteration solver diagnostics");

  auto* one = app.add_subcommand("solve-step", "solve one horizon problem from a state file");
  std::string state_path;
  int step = 0;
  one->add_option("--config", config, "JSON scenario file");
  one->add_option("--state", state_path, "CSV with header soc,temperature")->required();
  one->add_option("--step", step, "control step k, selects the power window")->capture_default_str();
  one->add_option("--seed", seed, "override the config seed");

  auto* cmp = app.add_subcommand("oracle-compare", "EnKI solution against a theta grid search");
  int grid = 101;
  cmp->add_option("--config", config, "JSON scenario file");
  cmp->add_option("--grid", grid, "points per theta axis")->capture_default_str();
  cmp->add_option("--step", step, "control step k")->capture_default_str();
  cmp->add_option("--seed", seed, "override the config seed");

  auto* ben = app.add_subcommand("bench", "per-step solve time over pack and ensemble sizes");
  std::string sizes = "20,50,100";
  std::string ensembles = "50,100,200";
  int bench_steps = 30;
  std::string bench_out;
  ben->add_option("--config", config, "JSON scenario file");
  ben->add_option("--sizes", sizes, "pack sizes")->capture_default_str();
  ben->add_option("--ensembles", ensembles, "ensemble sizes")->capture_default_str();
  ben->add_option("--steps", bench_steps, "control steps per point")->capture_default_str();
  ben->add_option("--out", bench_out, "also write bench.json and bench.csv here");
  ben->add_option("--seed", seed, "override the config seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*sim) return cmd_simulate(config, out_dir, seed, debug_enki);
    if (*one) return cmd_solve_step(config, state_path, step, seed);
    if (*cmp) return cmd_oracle_compare(config, grid, step, seed);
    if (*ben) return cmd_bench(config, sizes, ensembles, bench_steps, bench_out, seed);
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return 3;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::logic_error& e) {
    // DimensionMismatch and DegenerateInput: inputs the config should have ruled out
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
