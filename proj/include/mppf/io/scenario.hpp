#pragma once

#include <algorithm>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "mppf/error.hpp"
#include "mppf/oracle.hpp"

namespace mppf {

/// Oracle scenario text format (INI):
///
///   [model]
///   generator = -1 1 ; 2 -2        rows separated by ';'
///   intercepts = 1.0 2.0
///   slopes = 0.5 -0.5
///   initial = 0.5 0.5
///   reference_scale = 1
///   [run]
///   dt = 0.05
///   steps = 8
///   events = 2:0.3 5:0.9           step:mark pairs
///   [channel]
///   kind = exact                   exact | resolution | partial
///   cells = 4
///   observed = 0 2
struct ScenarioFile {
  OracleScenario scenario;
  std::string channel_kind = "exact";
  int cells = 1;
  std::vector<int> observed;

  ObservationChannel channel() const {
    if (channel_kind == "exact") return ObservationChannel::exact();
    if (channel_kind == "resolution") return ObservationChannel::resolution(cells);
    if (channel_kind == "partial") return ObservationChannel::partial(cells, observed);
    throw ConfigError("unknown channel kind: " + channel_kind);
  }
};

namespace detail {
inline std::vector<double> numbers(const std::string& s) {
  std::istringstream is(s);
  std::vector<double> out;
  std::string tok;
  while (is >> tok) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ConfigError("not a number in scenario: '" + tok + "'");
    }
  }
  return out;
}

template <class T>
T scenario_value(const boost::property_tree::ptree& pt, const std::string& path, T fallback) {
  const auto text = pt.get_optional<std::string>(path);
  if (!text) return fallback;
  std::istringstream is(*text);
  T v{};
  if (!(is >> v) || !(is >> std::ws).eof())
    throw ConfigError("bad value for scenario key '" + path + "': '" + *text + "'");
  return v;
}
}  // namespace detail

inline ScenarioFile parse_scenario(std::istream& is) {
  boost::property_tree::ptree pt;
  try {
    boost::property_tree::ini_parser::read_ini(is, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("scenario syntax: ") + e.what());
  }
  const std::vector<std::pair<std::string, std::vector<std::string>>> allowed = {
      {"model", {"generator", "intercepts", "slopes", "initial", "reference_scale"}},
      {"run", {"dt", "steps", "events"}},
      {"channel", {"kind", "cells", "observed"}}};
  for (const auto& [sec, tree] : pt) {
    const std::vector<std::string>* keys = nullptr;
    for (const auto& a : allowed)
      if (a.first == sec) keys = &a.second;
    if (!keys) throw ConfigError("unknown scenario section [" + sec + "]");
    for (const auto& kv : tree)
      if (std::find(keys->begin(), keys->end(), kv.first) == keys->end())
        throw ConfigError("unknown scenario key '" + kv.first + "' in [" + sec + "]");
  }

  ScenarioFile f;
  FiniteStateModel& m = f.scenario.model;
  std::stringstream rows(pt.get<std::string>("model.generator", ""));
  std::string row;
  while (std::getline(rows, row, ';')) {
    auto v = detail::numbers(row);
    if (!v.empty()) m.generator.push_back(std::move(v));
  }
  const auto a = detail::numbers(pt.get<std::string>("model.intercepts", ""));
  const auto b = detail::numbers(pt.get<std::string>("model.slopes", ""));
  if (a.size() != b.size()) throw ConfigError("intercepts and slopes differ in length");
  for (std::size_t i = 0; i < a.size(); ++i) m.intensity.push_back({a[i], b[i]});
  m.initial = detail::numbers(pt.get<std::string>("model.initial", ""));
  m.reference_scale = detail::scenario_value(pt, "model.reference_scale", 1.0);
  m.validate();

  f.scenario.dt = detail::scenario_value(pt, "run.dt", 0.05);
  f.scenario.steps = detail::scenario_value<std::size_t>(pt, "run.steps", 8);
  std::istringstream ev(pt.get<std::string>("run.events", ""));
  std::string tok;
  while (ev >> tok) {
    const auto colon = tok.find(':');
    if (colon == std::string::npos) throw ConfigError("event must be step:mark, got '" + tok + "'");
    OracleEvent e;
    try {
      std::size_t used = 0;
      e.step = static_cast<std::size_t>(std::stoul(tok.substr(0, colon), &used));
      if (used != colon) throw std::invalid_argument(tok);
      e.mark = std::stod(tok.substr(colon + 1), &used);
      if (used != tok.size() - colon - 1) throw std::invalid_argument(tok);
    } catch (const std::logic_error&) {
      throw ConfigError("bad event '" + tok + "', expected step:mark");
    }
    if (e.step >= f.scenario.steps) throw ConfigError("event step beyond run length");
    if (!(e.mark >= 0.0 && e.mark <= 1.0)) throw ConfigError("event mark outside [0, 1]");
    f.scenario.events.push_back(e);
  }
  f.channel_kind = pt.get<std::string>("channel.kind", "exact");
  f.cells = detail::scenario_value(pt, "channel.cells", 1);
  for (double v : detail::numbers(pt.get<std::string>("channel.observed", "")))
    f.observed.push_back(static_cast<int>(v));
  f.channel();  // validates
  return f;
}

}  // namespace mppf
