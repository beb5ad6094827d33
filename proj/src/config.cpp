#include "bess/errors.hpp"
#include "bess/harness.hpp"

#include <cmath>
#include <fstream>

namespace bess {

using nlohmann::json;

double Range::draw(std::mt19937_64& rng) const {
  if (is_point()) return min;
  return std::uniform_real_distribution<double>(min, max)(rng);
}

int SimConfig::steps() const { return static_cast<int>(std::llround(duration / dt)); }

void SimConfig::validate() const {
  if (pack.size < 1) throw ConfigError("pack.size must be at least 1");
  if (!(pack.capacity_ah > 0.0)) throw ConfigError("pack.capacity_ah must be positive");
  for (const Range* r : {&pack.r_internal, &pack.r_converter, &pack.c_thermal, &pack.r_convection,
                         &pack.initial_temperature}) {
    if (!(r->min > 0.0) || !(r->max >= r->min) || !std::isfinite(r->max)) {
      throw ConfigError("pack parameter ranges must satisfy 0 < min <= max");
    }
  }
  if (!(pack.initial_soc.min >= 0.0 && pack.initial_soc.max <= 1.0 &&
        pack.initial_soc.min <= pack.initial_soc.max)) {
    throw ConfigError("pack.initial_soc must lie within [0, 1] with min <= max");
  }
  if (!(pack.env_temperature > 0.0)) throw ConfigError("pack.env_temperature must be positive");
  if (pack.ocv.empty()) throw ConfigError("pack.ocv has no breakpoints");
  limits.validate();
  hyper.validate();
  enki.validate();
  barrier.validate();
  if (horizon < 1) throw ConfigError("simulation.horizon must be at least 1");
  if (!(dt > 0.0)) throw ConfigError("simulation.dt must be positive");
  if (!(duration >= 0.0)) throw ConfigError("simulation.duration must be nonnegative");
  if (std::abs(steps() * dt - duration) > 1e-9 * std::max(1.0, duration)) {
    throw ConfigError("simulation.duration must be a multiple of dt");
  }
  if (profile.kind == ProfileKind::square_wave) {
    if (!(profile.half_period > 0.0)) throw ConfigError("profile.half_period must be positive");
  } else {
    if (profile.samples.empty()) throw ConfigError("profile has no samples");
    if (!(profile.sample_dt > 0.0)) throw ConfigError("profile.sample_dt must be positive");
    const double needed = duration + horizon * dt;
    if (static_cast<double>(profile.samples.size()) * profile.sample_dt < needed) {
      throw ConfigError("profile samples do not cover duration + horizon");
    }
  }
}

SimConfig default_config() { return SimConfig{}; }

namespace {

Range parse_range(const json& j) {
  if (j.is_number()) return Range::point(j.get<double>());
  if (j.is_object()) return {j.at("min").get<double>(), j.at("max").get<double>()};
  if (j.is_array() && j.size() == 2) return {j[0].get<double>(), j[1].get<double>()};
  throw ConfigError("expected a number, [min, max] or {\"min\", \"max\"}");
}

json range_json(const Range& r) {
  if (r.is_point()) return r.min;
  return json{{"min", r.min}, {"max", r.max}};
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (auto it = obj.find(key); it != obj.end()) out = it->template get<T>();
}

void read_range(const json& obj, const char* key, Range& out) {
  if (auto it = obj.find(key); it != obj.end()) out = parse_range(*it);
}

std::vector<double> load_profile_samples(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open profile");
  std::vector<double> samples;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    // take the last comma-separated field so both "p" and "t,p" rows work
    const auto comma = line.find_last_of(',');
    const std::string field = comma == std::string::npos ? line : line.substr(comma + 1);
    try {
      samples.push_back(std::stod(field));
    } catch (const std::exception&) {
      if (samples.empty()) continue;  // header row
      throw IoError(path, "malformed profile row: " + line);
    }
  }
  return samples;
}

}  // namespace

SimConfig parse_config(const json& doc) {
  SimConfig cfg;
  try {
    if (auto p = doc.find("pack"); p != doc.end()) {
      read(*p, "size", cfg.pack.size);
      read(*p, "capacity_ah", cfg.pack.capacity_ah);
      read_range(*p, "r_internal", cfg.pack.r_internal);
      read_range(*p, "r_converter", cfg.pack.r_converter);
      read_range(*p, "c_thermal", cfg.pack.c_thermal);
      read_range(*p, "r_convection", cfg.pack.r_convection);
      read_range(*p, "initial_soc", cfg.pack.initial_soc);
      read_range(*p, "initial_temperature", cfg.pack.initial_temperature);
      read(*p, "env_temperature", cfg.pack.env_temperature);
      if (auto o = p->find("ocv"); o != p->end()) {
        std::vector<OcvCurve::Breakpoint> points;
        for (const auto& bp : *o) points.emplace_back(bp.at(0).get<double>(), bp.at(1).get<double>());
        cfg.pack.ocv = OcvCurve(std::move(points));
      }
    }
    if (auto l = doc.find("limits"); l != doc.end()) {
      read(*l, "soc_min", cfg.limits.soc_min);
      read(*l, "soc_max", cfg.limits.soc_max);
      read(*l, "current_min", cfg.limits.current_min);
      read(*l, "current_max", cfg.limits.current_max);
      read(*l, "delta_soc", cfg.limits.delta_soc);
      read(*l, "delta_temp", cfg.limits.delta_temp);
      read(*l, "power_balance_tol", cfg.limits.power_balance_tol);
    }
    if (auto p = doc.find("policy"); p != doc.end()) {
      read(*p, "beta1", cfg.hyper.beta1);
      read(*p, "beta2", cfg.hyper.beta2);
      read(*p, "balance_supply", cfg.balance_supply);
    }
    if (auto b = doc.find("barrier"); b != doc.end()) {
      read(*b, "sharpness", cfg.barrier.sharpness);
      read(*b, "scale", cfg.barrier.scale);
      if (auto m = b->find("mode"); m != b->end()) {
        const auto mode = m->get<std::string>();
        if (mode == "softplus") {
          cfg.barrier.mode = BarrierMode::softplus;
        } else if (mode == "hard") {
          cfg.barrier.mode = BarrierMode::hard;
        } else {
          throw ConfigError("barrier.mode must be \"softplus\" or \"hard\"");
        }
      }
    }
    if (auto e = doc.find("enki"); e != doc.end()) {
      read(*e, "ensemble_size", cfg.enki.ensemble_size);
      read(*e, "tolerance", cfg.enki.tolerance);
      read(*e, "max_iterations", cfg.enki.max_iterations);
      read(*e, "noise_variance", cfg.enki.noise_variance);
      read(*e, "step_cap", cfg.enki.step_cap);
      read(*e, "alpha0", cfg.enki.alpha0);
      read(*e, "jitter", cfg.enki.jitter);
      read(*e, "threads", cfg.enki.threads);
      read(*e, "warm_start", cfg.warm_start);
      if (auto m = e->find("prior_mean"); m != e->end()) {
        cfg.enki.prior_mean = {m->at(0).get<double>(), m->at(1).get<double>()};
      }
      if (auto c = e->find("prior_cov"); c != e->end()) {
        for (int r = 0; r < 2; ++r) {
          for (int col = 0; col < 2; ++col) cfg.enki.prior_cov(r, col) = c->at(r).at(col).get<double>();
        }
      }
      if (auto m = e->find("alpha_mode"); m != e->end()) {
        const auto mode = m->get<std::string>();
        if (mode == "bisection") {
          cfg.enki.alpha_mode = AlphaMode::bisection;
        } else if (mode == "fixed_schedule") {
          cfg.enki.alpha_mode = AlphaMode::fixed_schedule;
        } else {
          throw ConfigError("enki.alpha_mode must be \"bisection\" or \"fixed_schedule\"");
        }
      }
    }
    if (auto s = doc.find("simulation"); s != doc.end()) {
      read(*s, "horizon", cfg.horizon);
      read(*s, "dt", cfg.dt);
      read(*s, "duration", cfg.duration);
      read(*s, "seed", cfg.seed);
    }
    if (auto p = doc.find("profile"); p != doc.end()) {
      const auto kind = p->value("kind", std::string("square_wave"));
      if (kind == "square_wave") {
        cfg.profile.kind = ProfileKind::square_wave;
      } else if (kind == "from_file") {
        cfg.profile.kind = ProfileKind::from_file;
      } else {
        throw ConfigError("profile.kind must be \"square_wave\" or \"from_file\"");
      }
      read(*p, "amplitude", cfg.profile.amplitude);
      read(*p, "half_period", cfg.profile.half_period);
      read(*p, "sample_dt", cfg.profile.sample_dt);
      read(*p, "samples", cfg.profile.samples);
      read(*p, "path", cfg.profile.path);
      if (cfg.profile.kind == ProfileKind::from_file && cfg.profile.samples.empty() &&
          !cfg.profile.path.empty()) {
        cfg.profile.samples = load_profile_samples(cfg.profile.path);
      }
    }
    if (auto o = doc.find("output"); o != doc.end()) {
      read(*o, "csv", cfg.output.csv);
      read(*o, "summary", cfg.output.summary);
      read(*o, "diagnostics", cfg.output.diagnostics);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

SimConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open config");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  // profile paths are relative to the config file
  if (auto p = doc.find("profile"); p != doc.end() && p->contains("path")) {
    std::filesystem::path prof = (*p)["path"].get<std::string>();
    if (prof.is_relative()) (*p)["path"] = (path.parent_path() / prof).string();
  }
  return parse_config(doc);
}

json config_to_json(const SimConfig& cfg) {
  json ocv = json::array();
  for (const auto& [q, u] : cfg.pack.ocv.breakpoints()) ocv.push_back({q, u});
  json doc;
  doc["pack"] = {{"size", cfg.pack.size},
                 {"capacity_ah", cfg.pack.capacity_ah},
                 {"r_internal", range_json(cfg.pack.r_internal)},
                 {"r_converter", range_json(cfg.pack.r_converter)},
                 {"c_thermal", range_json(cfg.pack.c_thermal)},
                 {"r_convection", range_json(cfg.pack.r_convection)},
                 {"initial_soc", range_json(cfg.pack.initial_soc)},
                 {"initial_temperature", range_json(cfg.pack.initial_temperature)},
                 {"env_temperature", cfg.pack.env_temperature},
                 {"ocv", ocv}};
  doc["limits"] = {{"soc_min", cfg.limits.soc_min},
                   {"soc_max", cfg.limits.soc_max},
                   {"current_min", cfg.limits.current_min},
                   {"current_max", cfg.limits.current_max},
                   {"delta_soc", cfg.limits.delta_soc},
                   {"delta_temp", cfg.limits.delta_temp},
                   {"power_balance_tol", cfg.limits.power_balance_tol}};
  doc["policy"] = {{"beta1", cfg.hyper.beta1},
                   {"beta2", cfg.hyper.beta2},
                   {"balance_supply", cfg.balance_supply}};
  doc["barrier"] = {{"sharpness", cfg.barrier.sharpness},
                    {"scale", cfg.barrier.scale},
                    {"mode", cfg.barrier.mode == BarrierMode::hard ? "hard" : "softplus"}};
  const auto& e = cfg.enki;
  doc["enki"] = {
      {"ensemble_size", e.ensemble_size},
      {"tolerance", e.tolerance},
      {"max_iterations", e.max_iterations},
      {"noise_variance", e.noise_variance},
      {"prior_mean", {e.prior_mean.theta1, e.prior_mean.theta2}},
      {"prior_cov", {{e.prior_cov(0, 0), e.prior_cov(0, 1)}, {e.prior_cov(1, 0), e.prior_cov(1, 1)}}},
      {"alpha_mode", e.alpha_mode == AlphaMode::bisection ? "bisection" : "fixed_schedule"},
      {"step_cap", e.step_cap},
      {"alpha0", e.alpha0},
      {"jitter", e.jitter},
      {"threads", e.threads},
      {"warm_start", cfg.warm_start}};
  doc["simulation"] = {
      {"horizon", cfg.horizon}, {"dt", cfg.dt}, {"duration", cfg.duration}, {"seed", cfg.seed}};
  if (cfg.profile.kind == ProfileKind::square_wave) {
    doc["profile"] = {{"kind", "square_wave"},
                      {"amplitude", cfg.profile.amplitude},
                      {"half_period", cfg.profile.half_period}};
  } else {
    doc["profile"] = {
        {"kind", "from_file"}, {"sample_dt", cfg.profile.sample_dt}, {"samples", cfg.profile.samples}};
  }
  doc["output"] = {{"csv", cfg.output.csv},
                   {"summary", cfg.output.summary},
                   {"diagnostics", cfg.output.diagnostics}};
  return doc;
}

}  // namespace bess
