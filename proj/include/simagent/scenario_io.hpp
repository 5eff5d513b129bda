#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "simagent/scenario.hpp"

namespace simagent::io {

inline constexpr int kScenarioSchemaVersion = 1;

class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline nlohmann::json to_json(const Scenario& sc) {
  using nlohmann::json;
  json agents = json::array();
  for (const Agent& a : sc.agents) {
    json hist = json::array();
    for (const AgentState& s : a.history) {
      hist.push_back({{"x", s.position.x},
                      {"y", s.position.y},
                      {"vx", s.velocity.x},
                      {"vy", s.velocity.y},
                      {"heading", s.heading},
                      {"valid", s.valid}});
    }
    json fut = json::array();
    for (const FuturePoint& f : a.future) fut.push_back({{"x", f.position.x}, {"y", f.position.y}, {"valid", f.valid}});
    agents.push_back({{"type", to_string(a.type)},
                      {"length", a.length},
                      {"width", a.width},
                      {"history", std::move(hist)},
                      {"future", std::move(fut)}});
  }
  json map = json::array();
  for (const MapFeature& f : sc.map) {
    json pts = json::array();
    for (const Vec2& p : f.polyline) pts.push_back({p.x, p.y});
    map.push_back({{"type", to_string(f.type)}, {"points", std::move(pts)}});
  }
  return {{"schema_version", kScenarioSchemaVersion},
          {"id", sc.id},
          {"dt", sc.dt},
          {"t_prev", sc.t_prev},
          {"t_pred", sc.t_pred},
          {"av_index", sc.av_index},
          {"agents", std::move(agents)},
          {"map", std::move(map)}};
}

inline Scenario scenario_from_json(const nlohmann::json& j) {
  const int version = j.at("schema_version").get<int>();
  if (version != kScenarioSchemaVersion) {
    throw FormatError("schema_version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kScenarioSchemaVersion) + ")");
  }
  Scenario sc;
  sc.id = j.at("id").get<std::string>();
  sc.dt = j.at("dt").get<double>();
  sc.t_prev = j.at("t_prev").get<int>();
  sc.t_pred = j.at("t_pred").get<int>();
  sc.av_index = j.at("av_index").get<int>();
  for (const auto& ja : j.at("agents")) {
    Agent a;
    a.type = object_type_from_string(ja.at("type").get<std::string>());
    a.length = ja.at("length").get<double>();
    a.width = ja.at("width").get<double>();
    for (const auto& h : ja.at("history")) {
      AgentState s;
      s.position = {h.at("x").get<double>(), h.at("y").get<double>()};
      s.velocity = {h.at("vx").get<double>(), h.at("vy").get<double>()};
      s.heading = h.at("heading").get<double>();
      s.valid = h.at("valid").get<bool>();
      a.history.push_back(s);
    }
    for (const auto& f : ja.at("future")) {
      a.future.push_back({{f.at("x").get<double>(), f.at("y").get<double>()}, f.at("valid").get<bool>()});
    }
    sc.agents.push_back(std::move(a));
  }
  for (const auto& jf : j.at("map")) {
    MapFeature f;
    f.type = feature_type_from_string(jf.at("type").get<std::string>());
    for (const auto& p : jf.at("points")) f.polyline.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    sc.map.push_back(std::move(f));
  }
  sc.validate();
  return sc;
}

/// One scenario per line.
inline void write_scenarios(const std::string& path, const std::vector<Scenario>& scenarios) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  for (const Scenario& sc : scenarios) out << to_json(sc).dump() << '\n';
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

inline std::vector<Scenario> read_scenarios(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  std::vector<Scenario> out;
  std::string line;
  std::size_t record = 0;
  while (std::getline(in, line)) {
    ++record;
    if (line.empty()) continue;
    try {
      out.push_back(scenario_from_json(nlohmann::json::parse(line)));
    } catch (const FormatError& e) {
      throw FormatError(path + ": record " + std::to_string(record) + ": " + e.what());
    } catch (const std::exception& e) {
      throw FormatError(path + ": malformed record " + std::to_string(record) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace simagent::io
