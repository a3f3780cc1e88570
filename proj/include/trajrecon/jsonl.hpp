#pragma once

#include <fstream>
#include <istream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "trajrecon/association.hpp"
#include "trajrecon/core.hpp"

namespace trajrecon {

using nlohmann::json;

namespace detail {

inline std::vector<double> number_array(const json& j, const char* field, std::size_t line) {
  if (!j.contains(field))
    throw std::runtime_error("line " + std::to_string(line) + ": missing field '" + field + "'");
  const auto& v = j.at(field);
  if (!v.is_array())
    throw std::runtime_error("line " + std::to_string(line) + ": field '" + field +
                             "' must be an array");
  return v.get<std::vector<double>>();
}

inline double number(const json& j, const char* field, std::size_t line) {
  if (!j.contains(field))
    throw std::runtime_error("line " + std::to_string(line) + ": missing field '" + field + "'");
  return j.at(field).get<double>();
}

}  // namespace detail

inline json fragment_to_json(const Fragment& f) {
  json j;
  j["id"] = f.id;
  json t = json::array(), x = json::array(), y = json::array();
  for (const Point& p : f.points) {
    t.push_back(p.t);
    x.push_back(p.x);
    y.push_back(p.y);
  }
  j["t"] = std::move(t);
  j["x"] = std::move(x);
  j["y"] = std::move(y);
  j["length"] = f.length;
  j["width"] = f.width;
  j["direction"] = f.direction;
  if (!f.gt_id.empty()) j["gt_id"] = f.gt_id;
  return j;
}

inline Fragment fragment_from_json(const json& j, std::size_t line) {
  Fragment f;
  if (!j.contains("id")) throw std::runtime_error("line " + std::to_string(line) + ": missing field 'id'");
  f.id = j.at("id").get<std::string>();
  const auto t = detail::number_array(j, "t", line);
  const auto x = detail::number_array(j, "x", line);
  const auto y = detail::number_array(j, "y", line);
  if (t.size() != x.size() || t.size() != y.size())
    throw std::runtime_error("line " + std::to_string(line) + ": t/x/y lengths differ");
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i > 0 && !(t[i] > t[i - 1]))
      throw std::runtime_error("line " + std::to_string(line) +
                               ": timestamps not strictly increasing");
    f.points.push_back({t[i], x[i], y[i]});
  }
  f.length = detail::number(j, "length", line);
  f.width = detail::number(j, "width", line);
  f.direction = static_cast<int>(detail::number(j, "direction", line));
  if (j.contains("gt_id")) f.gt_id = j.at("gt_id").get<std::string>();
  return f;
}

inline json trajectory_to_json(const Trajectory& t) {
  json j;
  j["id"] = t.id;
  j["fragment_ids"] = t.fragment_ids;
  j["t"] = t.t;
  j["x"] = t.x;
  j["y"] = t.y;
  j["vx"] = t.vx;
  j["vy"] = t.vy;
  j["ax"] = t.ax;
  j["ay"] = t.ay;
  j["theta"] = t.theta;
  j["length"] = t.length;
  j["width"] = t.width;
  return j;
}

inline Trajectory trajectory_from_json(const json& j, std::size_t line) {
  Trajectory t;
  if (!j.contains("id")) throw std::runtime_error("line " + std::to_string(line) + ": missing field 'id'");
  t.id = j.at("id").get<std::string>();
  if (j.contains("fragment_ids")) t.fragment_ids = j.at("fragment_ids").get<std::vector<std::string>>();
  t.t = detail::number_array(j, "t", line);
  t.x = detail::number_array(j, "x", line);
  t.y = detail::number_array(j, "y", line);
  if (t.t.size() != t.x.size() || t.t.size() != t.y.size())
    throw std::runtime_error("line " + std::to_string(line) + ": t/x/y lengths differ");
  auto opt_array = [&](const char* f, std::vector<double>& dst) {
    if (j.contains(f)) dst = j.at(f).get<std::vector<double>>();
  };
  opt_array("vx", t.vx);
  opt_array("vy", t.vy);
  opt_array("ax", t.ax);
  opt_array("ay", t.ay);
  opt_array("theta", t.theta);
  t.length = detail::number(j, "length", line);
  t.width = detail::number(j, "width", line);
  t.direction = (t.x.size() < 2 || t.x.back() >= t.x.front()) ? +1 : -1;
  return t;
}

inline void write_fragments(const std::string& path, std::span<const Fragment> fragments) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (const Fragment& f : fragments) out << fragment_to_json(f).dump() << '\n';
}

inline std::vector<Fragment> read_fragments(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open input " + path);
  std::vector<Fragment> out;
  std::string lineBuf;
  std::size_t line = 0;
  while (std::getline(in, lineBuf)) {
    ++line;
    if (lineBuf.empty()) continue;
    out.push_back(fragment_from_json(json::parse(lineBuf), line));
  }
  return out;
}

inline void write_trajectories(const std::string& path, std::span<const Trajectory> trajectories) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (const Trajectory& t : trajectories) out << trajectory_to_json(t).dump() << '\n';
}

inline std::vector<Trajectory> read_trajectories(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open input " + path);
  std::vector<Trajectory> out;
  std::string lineBuf;
  std::size_t line = 0;
  while (std::getline(in, lineBuf)) {
    ++line;
    if (lineBuf.empty()) continue;
    out.push_back(trajectory_from_json(json::parse(lineBuf), line));
  }
  return out;
}

inline void write_chains(const std::string& path, std::span<const Chain> chains) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  std::size_t n = 0;
  for (const Chain& c : chains) {
    json j;
    j["id"] = "c" + std::to_string(1000000 + n++).substr(1);
    json frags = json::array();
    for (const Fragment& f : c.fragments) frags.push_back(fragment_to_json(f));
    j["fragments"] = std::move(frags);
    out << j.dump() << '\n';
  }
}

inline std::vector<Chain> read_chains(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open input " + path);
  std::vector<Chain> out;
  std::string lineBuf;
  std::size_t line = 0;
  while (std::getline(in, lineBuf)) {
    ++line;
    if (lineBuf.empty()) continue;
    const json j = json::parse(lineBuf);
    if (!j.contains("fragments"))
      throw std::runtime_error("line " + std::to_string(line) + ": missing field 'fragments'");
    Chain c;
    for (const auto& fj : j.at("fragments")) c.fragments.push_back(fragment_from_json(fj, line));
    out.push_back(std::move(c));
  }
  return out;
}

/// A dataset file holds either fragment records or trajectory records;
/// sniffed from the first record.
struct LoadedDataset {
  std::vector<Fragment> fragments;
  std::vector<Trajectory> trajectories;
  bool is_trajectories = false;

  std::size_t size() const {
    return is_trajectories ? trajectories.size() : fragments.size();
  }
};

inline LoadedDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open input " + path);
  LoadedDataset d;
  std::string lineBuf;
  std::size_t line = 0;
  bool sniffed = false;
  while (std::getline(in, lineBuf)) {
    ++line;
    if (lineBuf.empty()) continue;
    const json j = json::parse(lineBuf, nullptr, true);
    if (!sniffed) {
      d.is_trajectories = j.contains("fragment_ids") || j.contains("vx");
      sniffed = true;
    }
    if (d.is_trajectories)
      d.trajectories.push_back(trajectory_from_json(j, line));
    else
      d.fragments.push_back(fragment_from_json(j, line));
  }
  return d;
}

}  // namespace trajrecon
