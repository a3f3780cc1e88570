#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "trajrecon/benchmark.hpp"
#include "trajrecon/cost_model.hpp"
#include "trajrecon/rectification.hpp"

namespace trajrecon {

/// Flat "key = value" configuration, '#' comments, dotted key namespaces.
class ConfigMap {
 public:
  ConfigMap() = default;

  static ConfigMap from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    ConfigMap c;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        if (line.find_first_not_of(" \t\r") != std::string::npos)
          throw std::runtime_error(path + ":" + std::to_string(n) + ": expected key = value");
        continue;
      }
      c.values_[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return c;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback = {}) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "inf") return std::numeric_limits<double>::infinity();
    try {
      return std::stod(it->second);
    } catch (const std::exception&) {
      throw std::runtime_error("config key '" + key + "': not a number: " + it->second);
    }
  }

  std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      return std::stoll(it->second);
    } catch (const std::exception&) {
      throw std::runtime_error("config key '" + key + "': not an integer: " + it->second);
    }
  }

  /// Comma-separated list of colon-separated numeric tuples.
  std::vector<std::vector<double>> get_tuples(const std::string& key) const {
    std::vector<std::vector<double>> out;
    const auto it = values_.find(key);
    if (it == values_.end()) return out;
    std::stringstream groups(it->second);
    std::string group;
    while (std::getline(groups, group, ',')) {
      if (trim(group).empty()) continue;
      std::vector<double> tuple;
      std::stringstream fields(group);
      std::string field;
      while (std::getline(fields, field, ':')) tuple.push_back(std::stod(trim(field)));
      out.push_back(std::move(tuple));
    }
    return out;
  }

  std::vector<double> get_list(const std::string& key) const {
    std::vector<double> out;
    for (const auto& t : get_tuples(key)) {
      if (t.size() != 1) throw std::runtime_error("config key '" + key + "': expected plain numbers");
      out.push_back(t[0]);
    }
    return out;
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }

 private:
  static std::string trim(std::string s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    const auto b = s.find_last_not_of(" \t\r\n");
    return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
  }

  std::map<std::string, std::string> values_;
};

inline CostModelParams cost_params_from(const ConfigMap& c, const std::string& prefix = "cost.") {
  CostModelParams p;
  p.alpha = c.get_double(prefix + "alpha", p.alpha);
  p.beta = c.get_double(prefix + "beta", p.beta);
  p.p_enter = c.get_double(prefix + "p_enter", p.p_enter);
  p.p_exit = c.get_double(prefix + "p_exit", p.p_exit);
  p.fp_prob = c.get_double(prefix + "fp_prob", p.fp_prob);
  p.max_gap = c.get_double(prefix + "max_gap", p.max_gap);
  p.max_transition_cost = c.get_double(prefix + "max_transition_cost", p.max_transition_cost);
  p.nominal_speed = c.get_double(prefix + "nominal_speed", p.nominal_speed);
  p.fit_window = c.get_double(prefix + "fit_window", p.fit_window);
  p.eval_window = c.get_double(prefix + "eval_window", p.eval_window);
  return p;
}

inline RectifierConfig rectifier_from(const ConfigMap& c, const std::string& prefix = "rect.") {
  RectifierConfig r;
  r.lambda1 = c.get_double(prefix + "lambda1", r.lambda1);
  r.lambda2 = c.get_double(prefix + "lambda2", r.lambda2);
  r.lambda3 = c.get_double(prefix + "lambda3", r.lambda3);
  r.a_max = c.get_double(prefix + "a_max", r.a_max);
  r.j_max = c.get_double(prefix + "j_max", r.j_max);
  r.dt = c.get_double(prefix + "dt", r.dt);
  r.tol = c.get_double(prefix + "tol", r.tol);
  r.max_iter = static_cast<int>(c.get_int(prefix + "max_iter", r.max_iter));
  return r;
}

inline ScenarioSpec scenario_from(const ConfigMap& c) {
  ScenarioSpec s;
  s.corridor_length = c.get_double("scenario.length", s.corridor_length);
  s.duration = c.get_double("scenario.duration", s.duration);
  s.lane_count = static_cast<int>(c.get_int("scenario.lanes", s.lane_count));
  s.lane_width = c.get_double("scenario.lane_width", s.lane_width);
  s.dt = c.get_double("scenario.dt", s.dt);
  s.desired_speed = c.get_double("scenario.desired_speed", s.desired_speed);
  s.headway_time = c.get_double("scenario.headway_time", s.headway_time);
  s.min_gap = c.get_double("scenario.min_gap", s.min_gap);
  s.max_accel = c.get_double("scenario.max_accel", s.max_accel);
  s.comfort_decel = c.get_double("scenario.comfort_decel", s.comfort_decel);
  s.truck_fraction = c.get_double("scenario.truck_fraction", s.truck_fraction);
  for (const auto& t : c.get_tuples("scenario.demand")) {
    if (t.size() != 3)
      throw std::runtime_error("scenario.demand entries must be t0:t1:veh_per_hr_per_lane");
    s.demand.push_back({t[0], t[1], t[2]});
  }
  const auto b = c.get_tuples("scenario.bottleneck");
  if (!b.empty()) {
    if (b[0].size() != 4)
      throw std::runtime_error("scenario.bottleneck must be lane:x:t0:t1");
    s.bottleneck = Bottleneck{static_cast<int>(b[0][0]), b[0][1], b[0][2], b[0][3]};
  }
  return s;
}

inline std::vector<SpaceTimeMask> masks_from(const ConfigMap& c) {
  std::vector<SpaceTimeMask> out;
  for (const auto& t : c.get_tuples("masks")) {
    if (t.size() != 4) throw std::runtime_error("masks entries must be x0:x1:t0:t1");
    out.push_back({t[0], t[1], t[2], t[3]});
  }
  return out;
}

inline CameraLayout cameras_from(const ConfigMap& c) {
  CameraLayout layout;
  for (const auto& t : c.get_tuples("cameras")) {
    if (t.size() != 2) throw std::runtime_error("cameras entries must be x0:x1");
    layout.cameras.push_back({t[0], t[1]});
  }
  return layout;
}

inline NoiseSpec noise_from(const ConfigMap& c) {
  NoiseSpec n;
  n.sigma = c.get_double("noise.sigma", n.sigma);
  n.outlier_rate = c.get_double("noise.outlier_rate", n.outlier_rate);
  n.outlier_min = c.get_double("noise.outlier_min", n.outlier_min);
  n.outlier_max = c.get_double("noise.outlier_max", n.outlier_max);
  n.seed = static_cast<std::uint64_t>(c.get_int("seed", 0));
  return n;
}

/// End-to-end pipeline settings.
struct PipelineConfig {
  std::string input;
  std::string output;
  std::vector<double> partitions;  // boundaries; k+1 values = k workers
  double eviction_horizon = 60.0;
  double reorder_window = 5.0;
  double boundary_margin = 0.0;  // 0: derived from max_gap * nominal_speed
  int threads = 2;
  std::uint64_t seed = 0;
  double dt = 0.04;
  CostModelParams cost;
  CostModelParams master_cost;
  RectifierConfig rect;

  static PipelineConfig from_config(const ConfigMap& c) {
    PipelineConfig p;
    p.input = c.get_string("input");
    p.output = c.get_string("output");
    p.partitions = c.get_list("partitions");
    p.eviction_horizon = c.get_double("eviction_horizon", p.eviction_horizon);
    p.reorder_window = c.get_double("reorder_window", p.reorder_window);
    p.boundary_margin = c.get_double("boundary_margin", p.boundary_margin);
    p.threads = static_cast<int>(c.get_int("threads", p.threads));
    p.seed = static_cast<std::uint64_t>(c.get_int("seed", 0));
    p.dt = c.get_double("dt", p.dt);
    p.cost = cost_params_from(c, "cost.");
    p.master_cost = cost_params_from(c, "cost.");
    p.master_cost.fit_window = c.get_double("master.fit_window", 1.0);
    p.master_cost.eval_window = c.get_double("master.eval_window", 1.0);
    p.rect = rectifier_from(c, "rect.");
    p.rect.dt = p.dt;
    if (p.partitions.empty()) p.partitions = {-1e18, 1e18};
    if (p.partitions.size() < 2)
      throw std::runtime_error("partitions needs at least two boundaries");
    if (p.boundary_margin <= 0.0) p.boundary_margin = p.cost.max_gap * p.cost.nominal_speed;
    return p;
  }
};

}  // namespace trajrecon
