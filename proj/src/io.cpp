#include "bess/errors.hpp"
#include "bess/harness.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>

namespace bess {

using nlohmann::json;

namespace {

constexpr std::size_t kFixedColumns = 9;

// Shortest round-trip representation, independent of the C locale.
void put(std::string& line, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  line.append(buf, res.ptr);
}

double parse_double(std::string_view field, const std::string& path, std::size_t row) {
  double v = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size()) {
    throw IoError(path, "row " + std::to_string(row) + ": malformed number '" + std::string(field) + "'");
  }
  return v;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError(path.parent_path().string(), ec.message());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  return out;
}

}  // namespace

void write_step_csv(const std::vector<StepRecord>& records, std::size_t n,
                    const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  std::string line =
      "t,theta1,theta2,loss,max_soc_dev,max_temp_dev,residual,iterations,solve_time";
  for (const char* prefix : {"soc_", "temp_", "mu_"}) {
    for (std::size_t j = 1; j <= n; ++j) line += "," + std::string(prefix) + std::to_string(j);
  }
  out << line << '\n';
  for (const auto& r : records) {
    if (r.mu.size() != static_cast<Eigen::Index>(n) || r.socs.size() != r.mu.size() ||
        r.temps.size() != r.mu.size()) {
      throw DimensionMismatch("step record vectors do not match pack size");
    }
    line.clear();
    for (double v : {r.t, r.theta_star.theta1, r.theta_star.theta2, r.total_loss, r.max_soc_dev,
                     r.max_temp_dev, r.power_balance_residual}) {
      put(line, v);
      line += ',';
    }
    line += std::to_string(r.enki_iterations);
    line += ',';
    put(line, r.solve_time);
    for (const Vec* v : {&r.socs, &r.temps, &r.mu}) {
      for (Eigen::Index j = 0; j < v->size(); ++j) {
        line += ',';
        put(line, (*v)(j));
      }
    }
    out << line << '\n';
  }
  if (!out) throw IoError(path.string(), "write failed");
}

std::vector<StepRecord> read_step_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string(), "missing header");
  const auto header = split(line);
  if (header.size() < kFixedColumns || (header.size() - kFixedColumns) % 3 != 0 ||
      header[0] != "t") {
    throw IoError(path.string(), "unexpected header");
  }
  const auto n = static_cast<Eigen::Index>((header.size() - kFixedColumns) / 3);
  const std::string p = path.string();

  std::vector<StepRecord> records;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != header.size()) throw IoError(p, "row " + std::to_string(row) + ": wrong column count");
    StepRecord r;
    r.t = parse_double(f[0], p, row);
    r.theta_star = {parse_double(f[1], p, row), parse_double(f[2], p, row)};
    r.total_loss = parse_double(f[3], p, row);
    r.max_soc_dev = parse_double(f[4], p, row);
    r.max_temp_dev = parse_double(f[5], p, row);
    r.power_balance_residual = parse_double(f[6], p, row);
    r.enki_iterations = static_cast<int>(parse_double(f[7], p, row));
    r.solve_time = parse_double(f[8], p, row);
    r.socs.resize(n);
    r.temps.resize(n);
    r.mu.resize(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto base = kFixedColumns + static_cast<std::size_t>(j);
      r.socs(j) = parse_double(f[base], p, row);
      r.temps(j) = parse_double(f[base + static_cast<std::size_t>(n)], p, row);
      r.mu(j) = parse_double(f[base + 2 * static_cast<std::size_t>(n)], p, row);
    }
    records.push_back(std::move(r));
  }
  return records;
}

json summarize(const std::vector<StepRecord>& records, const SimConfig& cfg) {
  json s;
  s["steps"] = records.size();
  s["pack_size"] = cfg.pack.size;
  s["ensemble_size"] = cfg.enki.ensemble_size;
  s["seed"] = cfg.seed;
  double energy_loss = 0.0;
  double max_soc_dev = 0.0;
  double max_temp_dev = 0.0;
  std::size_t soc_violations = 0;
  std::size_t temp_violations = 0;
  std::vector<double> times;
  json nonconverged = json::array();
  json infeasible = json::array();
  double iterations = 0.0;
  for (std::size_t k = 0; k < records.size(); ++k) {
    const auto& r = records[k];
    energy_loss += r.total_loss * cfg.dt;
    max_soc_dev = std::max(max_soc_dev, r.max_soc_dev);
    max_temp_dev = std::max(max_temp_dev, r.max_temp_dev);
    if (r.max_soc_dev > cfg.limits.delta_soc) ++soc_violations;
    if (r.max_temp_dev > cfg.limits.delta_temp) ++temp_violations;
    if (!r.converged) nonconverged.push_back(k);
    if (r.infeasible) infeasible.push_back(k);
    times.push_back(r.solve_time);
    iterations += r.enki_iterations;
  }
  s["total_energy_loss_J"] = energy_loss;
  s["max_soc_deviation"] = max_soc_dev;
  s["max_temperature_deviation_K"] = max_temp_dev;
  s["soc_balance_violation_steps"] = soc_violations;
  s["temperature_balance_violation_steps"] = temp_violations;
  s["nonconverged_steps"] = nonconverged;
  s["infeasible_steps"] = infeasible;
  json runtime;
  if (!times.empty()) {
    std::vector<double> sorted = times;
    std::sort(sorted.begin(), sorted.end());
    runtime["mean_s"] = std::accumulate(times.begin(), times.end(), 0.0) / static_cast<double>(times.size());
    runtime["median_s"] = sorted[sorted.size() / 2];
    runtime["max_s"] = sorted.back();
    runtime["total_s"] = std::accumulate(times.begin(), times.end(), 0.0);
    runtime["mean_iterations"] = iterations / static_cast<double>(times.size());
  } else {
    runtime["mean_s"] = 0.0;
    runtime["median_s"] = 0.0;
    runtime["max_s"] = 0.0;
    runtime["total_s"] = 0.0;
    runtime["mean_iterations"] = 0.0;
  }
  s["runtime"] = runtime;
  return s;
}

void write_outputs(const std::vector<StepRecord>& records, const SimConfig& cfg,
                   const OutputPaths& paths) {
  write_step_csv(records, static_cast<std::size_t>(cfg.pack.size), paths.csv);
  std::ofstream out = open_out(paths.summary);
  out << summarize(records, cfg).dump(2) << '\n';
  if (!out) throw IoError(paths.summary.string(), "write failed");
}

void write_diagnostics_csv(const std::vector<DiagnosticsRow>& rows,
                           const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  out << "step,iteration,alpha,misfit,theta1_mean,theta2_mean,step_norm\n";
  std::string line;
  for (const auto& r : rows) {
    line = std::to_string(r.step) + ',' + std::to_string(r.diag.iteration);
    for (double v : {r.diag.alpha, r.diag.misfit, r.diag.theta_mean(0), r.diag.theta_mean(1),
                     r.diag.step_norm}) {
      line += ',';
      put(line, v);
    }
    out << line << '\n';
  }
  if (!out) throw IoError(path.string(), "write failed");
}

PackState read_state_csv(const std::filesystem::path& path, double env_temperature) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  const std::string p = path.string();
  std::string line;
  if (!std::getline(in, line)) throw IoError(p, "missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line);
  if (header.size() != 2 || header[0] != "soc" || header[1] != "temperature") {
    throw IoError(p, "expected header 'soc,temperature'");
  }
  std::vector<double> soc, temp;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != 2) throw IoError(p, "row " + std::to_string(row) + ": wrong column count");
    soc.push_back(parse_double(f[0], p, row));
    temp.push_back(parse_double(f[1], p, row));
  }
  if (soc.empty()) throw IoError(p, "no cells");
  PackState state;
  state.soc = Eigen::Map<const Vec>(soc.data(), static_cast<Eigen::Index>(soc.size()));
  state.temperature = Eigen::Map<const Vec>(temp.data(), static_cast<Eigen::Index>(temp.size()));
  state.env_temperature = env_temperature;
  state.validate();
  return state;
}

json bench_to_json(const std::vector<BenchEntry>& entries) {
  json arr = json::array();
  for (const auto& e : entries) {
    arr.push_back({{"pack_size", e.pack_size},
                   {"ensemble_size", e.ensemble_size},
                   {"steps", e.steps},
                   {"mean_solve_time_s", e.mean_solve_time},
                   {"max_solve_time_s", e.max_solve_time},
                   {"mean_iterations", e.mean_iterations},
                   {"time_per_iteration_s", e.time_per_iteration}});
  }
  return arr;
}

void write_bench_csv(const std::vector<BenchEntry>& entries, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  out << "pack_size,ensemble_size,steps,mean_solve_time_s,max_solve_time_s,mean_iterations,time_per_iteration_s\n";
  for (const auto& e : entries) {
    std::string line = std::to_string(e.pack_size) + ',' + std::to_string(e.ensemble_size) + ',' +
                       std::to_string(e.steps) + ',';
    put(line, e.mean_solve_time);
    line += ',';
    put(line, e.max_solve_time);
    line += ',';
    put(line, e.mean_iterations);
    line += ',';
    put(line, e.time_per_iteration);
    out << line << '\n';
  }
  if (!out) throw IoError(path.string(), "write failed");
}

}  // namespace bess
