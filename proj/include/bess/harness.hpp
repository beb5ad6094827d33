#pragma once

// Closed-loop receding-horizon simulation: configuration, pack
// initialization, power profiles, the per-step solve loop, CSV/JSON output
// and timing benchmarks.

#include "bess/enki.hpp"
#include "bess/model.hpp"
#include "bess/objective.hpp"
#include "bess/policy.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace bess {

// Closed interval for heterogeneous cell parameters; a point when min == max.
struct Range {
  double min = 0.0;
  double max = 0.0;

  static Range point(double v) { return {v, v}; }
  bool is_point() const { return min == max; }
  double draw(std::mt19937_64& rng) const;
};

struct PackSpec {
  int size = 100;
  double capacity_ah = 2.5;
  Range r_internal{0.03, 0.04};
  Range r_converter = Range::point(0.010);
  Range c_thermal = Range::point(40.23);
  Range r_convection = Range::point(41.05);
  Range initial_soc{0.70, 0.75};
  Range initial_temperature = Range::point(298.0);
  double env_temperature = 298.0;
  OcvCurve ocv = OcvCurve::default_li_ion();
};

enum class ProfileKind { square_wave, from_file };

struct PowerProfile {
  ProfileKind kind = ProfileKind::square_wave;
  double amplitude = 1000.0;     // W
  double half_period = 1200.0;   // s
  std::vector<double> samples;   // W, one per sample_dt (from_file)
  double sample_dt = 1.0;        // s
  std::string path;              // source of `samples`, informational
};

struct OutputSpec {
  std::string csv = "steps.csv";
  std::string summary = "summary.json";
  std::string diagnostics = "enki_iterations.csv";
};

struct SimConfig {
  PackSpec pack;
  LimitsSpec limits;
  PolicyHyper hyper;
  EnkiConfig enki;
  BarrierConfig barrier;
  int horizon = 10;        // steps
  double dt = 1.0;         // s
  double duration = 3600;  // s
  PowerProfile profile;
  std::uint64_t seed = 42;
  bool warm_start = true;
  bool balance_supply = true;  // rescale shares so the pack covers its losses
  OutputSpec output;

  int steps() const;
  void validate() const;
};

SimConfig default_config();
SimConfig parse_config(const nlohmann::json& doc);
SimConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const SimConfig& cfg);

// Square wave starts discharging at +amplitude and flips sign every
// half_period; from_file returns the sample covering t.
double generate_profile(const PowerProfile& profile, double t);

// P_out for t = k dt, ..., (k + H) dt.
std::vector<double> horizon_power(const PowerProfile& profile, int k, int horizon, double dt);

struct InitialPack {
  PackState state;
  PackParams params;
};

InitialPack init_pack(const SimConfig& cfg, std::mt19937_64& rng);

struct StepRecord {
  double t = 0.0;
  PolicyTheta theta_star;
  Vec mu;
  Vec socs;
  Vec temps;
  double total_loss = 0.0;              // W
  double max_soc_dev = 0.0;
  double max_temp_dev = 0.0;            // K
  double power_balance_residual = 0.0;  // |sum_j (mu_j - s loss_j/|P|) - 1|
  int enki_iterations = 0;
  double solve_time = 0.0;              // s
  // Not part of the CSV schema:
  double p_out = 0.0;
  bool converged = true;
  bool infeasible = false;  // theta* still violates a constraint on the horizon
};

struct SimulationHooks {
  // Per-iteration solver diagnostics tagged with the control step index.
  std::function<void(int step, const IterationDiagnostics&)> on_iteration;
  // Called after each logged step.
  std::function<void(const StepRecord&)> on_step;
};

std::vector<StepRecord> run_simulation(const SimConfig& cfg, const SimulationHooks& hooks = {});

// Builds the horizon problem the controller solves at step k.
ControlProblem make_problem(const SimConfig& cfg, const PackState& state, const PackParams& params,
                            int k);

// Per-step CSV: t, theta1, theta2, loss, max_soc_dev, max_temp_dev, residual,
// iterations, solve_time, soc_1..soc_n, temp_1..temp_n, mu_1..mu_n.
void write_step_csv(const std::vector<StepRecord>& records, std::size_t n,
                    const std::filesystem::path& path);
std::vector<StepRecord> read_step_csv(const std::filesystem::path& path);

nlohmann::json summarize(const std::vector<StepRecord>& records, const SimConfig& cfg);

struct OutputPaths {
  std::filesystem::path csv;
  std::filesystem::path summary;
};

void write_outputs(const std::vector<StepRecord>& records, const SimConfig& cfg,
                   const OutputPaths& paths);

struct DiagnosticsRow {
  int step = 0;
  IterationDiagnostics diag;
};

// step,iteration,alpha,misfit,theta1_mean,theta2_mean,step_norm
void write_diagnostics_csv(const std::vector<DiagnosticsRow>& rows,
                           const std::filesystem::path& path);

// Pack state as a CSV with header "soc,temperature" and one row per cell.
PackState read_state_csv(const std::filesystem::path& path, double env_temperature);

struct BenchEntry {
  int pack_size = 0;
  int ensemble_size = 0;
  int steps = 0;
  double mean_solve_time = 0.0;  // s
  double max_solve_time = 0.0;
  double mean_iterations = 0.0;
  double time_per_iteration = 0.0;  // s, total solve time / total iterations
};

// Average per-step solve time for every (pack size, ensemble size) pair. The
// profile is scaled by size / base.pack.size to keep the load per cell fixed.
std::vector<BenchEntry> bench(const SimConfig& base, const std::vector<int>& pack_sizes,
                              const std::vector<int>& ensemble_sizes, int steps = 30);

nlohmann::json bench_to_json(const std::vector<BenchEntry>& entries);
void write_bench_csv(const std::vector<BenchEntry>& entries, const std::filesystem::path& path);

}  // namespace bess
