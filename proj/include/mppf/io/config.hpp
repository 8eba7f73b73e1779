#pragma once

#include <cstdint>
#include <cstdio>
#include <functional>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "mppf/error.hpp"
#include "mppf/intensity.hpp"
#include "mppf/signal.hpp"

namespace mppf {

struct GridConfig {
  int width = 32;
  int height = 32;
  double physical_side = 1.0;
  friend bool operator==(const GridConfig&, const GridConfig&) = default;
};

struct SignalConfig {
  std::string model = "white-noise";  // white-noise | fhn
  double dt = 1.0;
  long steps = 1000;
  double amplitude = 0.01;
  bool scale_by_cell_area = false;
  double init_mean = 10.0;
  double init_sd = 1.0;
  FhnParams fhn;
  friend bool operator==(const SignalConfig&, const SignalConfig&) = default;
};

struct FilterConfig {
  std::size_t particles = 10;
  double ess_threshold = 0.5;
  double reference_scale = 1.0;
  int resolution = 32;  // observation cells per side
  std::size_t enkf_members = 10;
  double enkf_inflation = 1.0;
  double variance_floor = 1e-6;
  friend bool operator==(const FilterConfig&, const FilterConfig&) = default;
};

struct ExperimentSection {
  std::size_t seeds = 10;
  std::uint64_t seed = 1;
  unsigned workers = 1;
  std::string output_dir = "out";
  long snapshot_stride = 0;  // 0 disables estimate snapshots
  std::vector<int> resolutions = {32, 16, 8, 4, 2, 1};
  std::vector<double> mask_fractions = {1.0, 0.5, 0.25, 0.0625};
  std::vector<double> intensity_scales = {100.0, 2000.0};
  std::size_t instances = 100;
  std::vector<int> ladder = {1, 2, 4, 8};
  std::vector<double> photon_rates = {0.5, 3.0, 10.0};
  std::size_t photon_datasets = 100;
  std::size_t photon_frames = 100;
  int photon_side = 10;
  friend bool operator==(const ExperimentSection&, const ExperimentSection&) = default;
};

struct ExperimentConfig {
  GridConfig grid;
  SignalConfig signal;
  IntensitySpec intensity;
  FilterConfig filter;
  ExperimentSection experiment;
  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& key, const std::string& s) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': not a number: '" + s + "'");
  }
  if (s.find_first_not_of(" \t", pos) != std::string::npos)
    throw ConfigError("key '" + key + "': trailing characters in '" + s + "'");
  return v;
}

inline long long parse_int(const std::string& key, const std::string& s) {
  std::size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &pos);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': not an integer: '" + s + "'");
  }
  if (s.find_first_not_of(" \t", pos) != std::string::npos)
    throw ConfigError("key '" + key + "': trailing characters in '" + s + "'");
  return v;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

struct Binding {
  std::string section;
  std::string key;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

inline unsigned long long parse_uint(const std::string& key, const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos || s[b] == '-') throw ConfigError("key '" + key + "' must be >= 0, got '" + s + "'");
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': not an unsigned integer: '" + s + "'");
  }
  if (s.find_first_not_of(" \t", pos) != std::string::npos)
    throw ConfigError("key '" + key + "': trailing characters in '" + s + "'");
  return v;
}

template <class Int>
Binding bind_int(const char* sec, const char* key, Int& ref) {
  return {sec, key,
          [&ref, key](const std::string& s) {
            if constexpr (std::is_unsigned_v<Int>) {
              const unsigned long long v = parse_uint(key, s);
              if (v > std::numeric_limits<Int>::max()) throw ConfigError(std::string("key '") + key + "' out of range");
              ref = static_cast<Int>(v);
            } else {
              const long long v = parse_int(key, s);
              if (v < std::numeric_limits<Int>::min() || v > std::numeric_limits<Int>::max())
                throw ConfigError(std::string("key '") + key + "' out of range");
              ref = static_cast<Int>(v);
            }
          },
          [&ref] { return std::to_string(ref); }};
}

inline Binding bind_double(const char* sec, const char* key, double& ref) {
  return {sec, key, [&ref, key](const std::string& s) { ref = parse_double(key, s); },
          [&ref] { return format_double(ref); }};
}

inline Binding bind_bool(const char* sec, const char* key, bool& ref) {
  return {sec, key,
          [&ref, key](const std::string& s) {
            if (s == "true" || s == "1") {
              ref = true;
            } else if (s == "false" || s == "0") {
              ref = false;
            } else {
              throw ConfigError(std::string("key '") + key + "': expected true/false, got '" + s + "'");
            }
          },
          [&ref] { return std::string(ref ? "true" : "false"); }};
}

inline Binding bind_string(const char* sec, const char* key, std::string& ref) {
  return {sec, key, [&ref](const std::string& s) { ref = s; }, [&ref] { return ref; }};
}

inline Binding bind_int_list(const char* sec, const char* key, std::vector<int>& ref) {
  return {sec, key,
          [&ref, key](const std::string& s) {
            ref.clear();
            for (const auto& item : split_list(s)) ref.push_back(static_cast<int>(parse_int(key, item)));
          },
          [&ref] {
            std::string out;
            for (std::size_t i = 0; i < ref.size(); ++i) out += (i ? "," : "") + std::to_string(ref[i]);
            return out;
          }};
}

inline Binding bind_double_list(const char* sec, const char* key, std::vector<double>& ref) {
  return {sec, key,
          [&ref, key](const std::string& s) {
            ref.clear();
            for (const auto& item : split_list(s)) ref.push_back(parse_double(key, item));
          },
          [&ref] {
            std::string out;
            for (std::size_t i = 0; i < ref.size(); ++i) out += (i ? "," : "") + format_double(ref[i]);
            return out;
          }};
}

inline std::vector<Binding> bindings(ExperimentConfig& c) {
  auto& f = c.signal.fhn;
  auto& in = c.intensity;
  auto& x = c.experiment;
  return {
      bind_int("grid", "width", c.grid.width),
      bind_int("grid", "height", c.grid.height),
      bind_double("grid", "physical_side", c.grid.physical_side),

      bind_string("signal", "model", c.signal.model),
      bind_double("signal", "dt", c.signal.dt),
      bind_int("signal", "steps", c.signal.steps),
      bind_double("signal", "amplitude", c.signal.amplitude),
      bind_bool("signal", "scale_by_cell_area", c.signal.scale_by_cell_area),
      bind_double("signal", "init_mean", c.signal.init_mean),
      bind_double("signal", "init_sd", c.signal.init_sd),
      bind_double("signal", "epsilon", f.epsilon),
      bind_double("signal", "alpha1", f.alpha1),
      bind_double("signal", "alpha2", f.alpha2),
      bind_double("signal", "alpha3", f.alpha3),
      bind_double("signal", "input_current", f.input_current),
      bind_double("signal", "gamma", f.gamma),
      bind_double("signal", "beta", f.beta),
      bind_double("signal", "noise_u", f.noise_u),
      bind_double("signal", "noise_v", f.noise_v),
      bind_double("signal", "diffusion_u", f.diffusion_u),
      bind_double("signal", "diffusion_v", f.diffusion_v),
      bind_double("signal", "init_radius", f.init_radius),
      bind_double("signal", "init_u", f.init_u),

      {"intensity", "kind", [&in](const std::string& s) { in.kind = parse_intensity_kind(s); },
       [&in] { return to_string(in.kind); }},
      bind_double("intensity", "decay", in.decay),
      bind_double("intensity", "scale", in.scale),
      bind_double("intensity", "c_max", in.c_max),
      bind_double("intensity", "floor", in.floor),
      bind_double("intensity", "c1", in.c1),
      bind_double("intensity", "c2", in.c2),
      bind_int("intensity", "mollifier_radius", in.mollifier_radius),

      bind_int("filter", "particles", c.filter.particles),
      bind_double("filter", "ess_threshold", c.filter.ess_threshold),
      bind_double("filter", "reference_scale", c.filter.reference_scale),
      bind_int("filter", "resolution", c.filter.resolution),
      bind_int("filter", "enkf_members", c.filter.enkf_members),
      bind_double("filter", "enkf_inflation", c.filter.enkf_inflation),
      bind_double("filter", "variance_floor", c.filter.variance_floor),

      bind_int("experiment", "seeds", x.seeds),
      bind_int("experiment", "seed", x.seed),
      bind_int("experiment", "workers", x.workers),
      bind_string("experiment", "output_dir", x.output_dir),
      bind_int("experiment", "snapshot_stride", x.snapshot_stride),
      bind_int_list("experiment", "resolutions", x.resolutions),
      bind_double_list("experiment", "mask_fractions", x.mask_fractions),
      bind_double_list("experiment", "intensity_scales", x.intensity_scales),
      bind_int("experiment", "instances", x.instances),
      bind_int_list("experiment", "ladder", x.ladder),
      bind_double_list("experiment", "photon_rates", x.photon_rates),
      bind_int("experiment", "photon_datasets", x.photon_datasets),
      bind_int("experiment", "photon_frames", x.photon_frames),
      bind_int("experiment", "photon_side", x.photon_side),
  };
}

}  // namespace detail

inline void validate(const ExperimentConfig& c) {
  GridDomain(c.grid.width, c.grid.height, c.grid.physical_side);
  if (c.signal.model != "white-noise" && c.signal.model != "fhn")
    throw ConfigError("unknown signal model: " + c.signal.model);
  if (!(c.signal.dt > 0.0)) throw ConfigError("signal dt must be > 0");
  if (c.signal.steps < 0) throw ConfigError("signal steps must be >= 0");
  c.intensity.validate();
  if (c.filter.particles < 1) throw ConfigError("filter needs at least one particle");
  if (!(c.filter.ess_threshold >= 0.0 && c.filter.ess_threshold <= 1.0))
    throw ConfigError("ess_threshold must lie in [0, 1]");
  if (!is_power_of_two(c.filter.resolution) || c.filter.resolution > c.grid.width)
    throw ConfigError("filter resolution must be a power of two no larger than the grid");
  for (int r : c.experiment.resolutions)
    if (!is_power_of_two(r) || r > c.grid.width) throw ConfigError("bad resolution " + std::to_string(r));
  for (double m : c.experiment.mask_fractions)
    if (!(m > 0.0 && m <= 1.0)) throw ConfigError("mask fractions must lie in (0, 1]");
  for (int r : c.experiment.ladder)
    if (r < 1) throw ConfigError("ladder levels must be >= 1 cell");
  if (c.experiment.seeds < 1) throw ConfigError("need at least one seed");
}

/// Parse an INI config; unknown sections or keys are rejected.
inline ExperimentConfig parse_config(std::istream& is) {
  boost::property_tree::ptree pt;
  try {
    boost::property_tree::ini_parser::read_ini(is, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }
  ExperimentConfig c;
  const auto bs = detail::bindings(c);
  for (const auto& [section, tree] : pt) {
    if (tree.empty() && !tree.data().empty())
      throw ConfigError("key '" + section + "' outside any section");
    bool known_section = false;
    for (const auto& b : bs) known_section |= b.section == section;
    if (!known_section) throw ConfigError("unknown section [" + section + "]");
    for (const auto& [key, node] : tree) {
      const detail::Binding* hit = nullptr;
      for (const auto& b : bs)
        if (b.section == section && b.key == key) hit = &b;
      if (!hit) throw ConfigError("unknown key '" + key + "' in [" + section + "]");
      hit->set(node.data());
    }
  }
  validate(c);
  return c;
}

inline ExperimentConfig parse_config_string(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

/// Every key with its resolved value, %.17g for reals.
inline void write_config(std::ostream& os, const ExperimentConfig& cfg) {
  ExperimentConfig c = cfg;
  const auto bs = detail::bindings(c);
  std::string current;
  for (const auto& b : bs) {
    if (b.section != current) {
      os << (current.empty() ? "" : "\n") << "[" << b.section << "]\n";
      current = b.section;
    }
    os << b.key << " = " << b.get() << "\n";
  }
}

inline std::string config_to_string(const ExperimentConfig& c) {
  std::ostringstream os;
  write_config(os, c);
  return os.str();
}

inline SignalModel make_signal_model(const ExperimentConfig& c) {
  const GridDomain grid(c.grid.width, c.grid.height, c.grid.physical_side);
  if (c.signal.model == "fhn") {
    FhnParams p = c.signal.fhn;
    p.dt = c.signal.dt;
    p.scale_by_cell_area = c.signal.scale_by_cell_area;
    return SignalModel(FhnModel(p, grid));
  }
  WhiteNoiseModel w;
  w.noise = {c.signal.amplitude, c.signal.scale_by_cell_area};
  w.dt = c.signal.dt;
  w.init_mean = c.signal.init_mean;
  w.init_sd = c.signal.init_sd;
  return SignalModel(w, grid);
}

inline GridDomain make_grid(const ExperimentConfig& c) {
  return GridDomain(c.grid.width, c.grid.height, c.grid.physical_side);
}

}  // namespace mppf
