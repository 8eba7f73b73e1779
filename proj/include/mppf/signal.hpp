#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mppf/error.hpp"
#include "mppf/grid.hpp"
#include "mppf/rng.hpp"

namespace mppf {

/// Signal realization on the finest grid. `v` is empty for single-component models.
struct FieldState {
  int width = 0;
  int height = 0;
  std::vector<double> u;
  std::vector<double> v;
  double t = 0.0;

  bool has_v() const { return !v.empty(); }
  int size() const { return width * height; }

  friend bool operator==(const FieldState&, const FieldState&) = default;
};

/// Five-point Laplacian with zero-flux boundary (ghost cells replicate the edge).
inline void neumann_laplacian(std::span<const double> f, int width, int height, double spacing,
                              std::span<double> out) {
  const double inv_h2 = 1.0 / (spacing * spacing);
  for (int iy = 0; iy < height; ++iy) {
    const int up = iy + 1 < height ? iy + 1 : iy;
    const int dn = iy > 0 ? iy - 1 : iy;
    for (int ix = 0; ix < width; ++ix) {
      const int rt = ix + 1 < width ? ix + 1 : ix;
      const int lt = ix > 0 ? ix - 1 : ix;
      const double c = f[iy * width + ix];
      // Neighbour differences first, so a constant field gives exactly zero.
      out[iy * width + ix] = ((f[iy * width + lt] - c) + (f[iy * width + rt] - c) +
                              (f[dn * width + ix] - c) + (f[up * width + ix] - c)) *
                             inv_h2;
    }
  }
}

inline std::vector<double> neumann_laplacian(const std::vector<double>& f, int width, int height,
                                             double spacing) {
  std::vector<double> out(f.size());
  neumann_laplacian(f, width, height, spacing, out);
  return out;
}

struct NoiseModel {
  double amplitude = 0.01;
  bool scale_by_cell_area = false;

  double effective(double cell_area) const {
    return scale_by_cell_area ? amplitude / std::sqrt(cell_area) : amplitude;
  }
};

/// u' = u + amplitude * sqrt(dt) * xi, xi iid standard normal per cell.
inline void step_white_noise(FieldState& state, double amplitude, double dt, Stream& rng) {
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  const double s = amplitude * std::sqrt(dt);
  if (s != 0.0) {
    std::normal_distribution<double> normal;
    for (double& x : state.u) x += s * normal(rng);
  }
  state.t += dt;
}

struct WhiteNoiseModel {
  NoiseModel noise;
  double dt = 1.0;
  double init_mean = 10.0;
  double init_sd = 1.0;
};

inline FieldState init_white_noise_signal(const GridDomain& grid, Stream& rng, double mean = 10.0,
                                          double sd = 1.0) {
  FieldState s;
  s.width = grid.width_cells();
  s.height = grid.height_cells();
  s.u.assign(grid.cell_count(), mean);
  if (sd > 0.0) {
    std::normal_distribution<double> normal(mean, sd);
    for (double& x : s.u) x = normal(rng);
  }
  return s;
}

inline FieldState init_white_noise_signal(const GridDomain& grid, std::uint64_t seed) {
  Stream rng = derive_stream(seed, StreamTag::kInit);
  return init_white_noise_signal(grid, rng);
}

struct FhnParams {
  double epsilon = 10.0;
  double alpha1 = 0.0;
  double alpha2 = 0.15;
  double alpha3 = 1.0;
  double input_current = 0.0;
  double gamma = 0.05;
  double beta = 3.0;
  double noise_u = 0.2;
  double noise_v = 0.005;
  double dt = 0.1;
  double diffusion_u = 1e-3;
  double diffusion_v = 1e-4;
  // Initial condition: rest state plus one excited disk at a random location.
  double init_radius = 3.0;  // in cells
  double init_u = 1.0;
  bool scale_by_cell_area = false;

  friend bool operator==(const FhnParams&, const FhnParams&) = default;
};

/// FitzHugh-Nagumo model bound to a grid; construction validates explicit-scheme stability.
class FhnModel {
 public:
  FhnModel(const FhnParams& params, const GridDomain& grid) : p_(params), grid_(grid) {
    const double h = grid.cell_side();
    if (!(p_.dt > 0.0)) throw ConfigError("fhn dt must be positive");
    if (p_.noise_u < 0.0 || p_.noise_v < 0.0) throw ConfigError("fhn noise amplitudes must be >= 0");
    if (p_.diffusion_u < 0.0 || p_.diffusion_v < 0.0)
      throw ConfigError("fhn diffusion coefficients must be >= 0");
    const double r = p_.dt * std::max(p_.diffusion_u, p_.diffusion_v) / (h * h);
    if (r > 0.25)
      throw ConfigError("unstable fhn step: dt*max(d)/h^2 = " + std::to_string(r) + " > 0.25");
  }

  const FhnParams& params() const { return p_; }
  const GridDomain& grid() const { return grid_; }
  double dt() const { return p_.dt; }

  double reaction(double u) const {
    return p_.epsilon * (u - p_.alpha1) * (u - p_.alpha2) * (p_.alpha3 - u);
  }

  FieldState initial_state(Stream& rng) const {
    FieldState s;
    s.width = grid_.width_cells();
    s.height = grid_.height_cells();
    s.u.assign(s.size(), 0.0);
    s.v.assign(s.size(), 0.0);
    if (p_.init_radius > 0.0) {
      const double cx = rng.uniform01() * s.width;
      const double cy = rng.uniform01() * s.height;
      for (int iy = 0; iy < s.height; ++iy)
        for (int ix = 0; ix < s.width; ++ix)
          if (std::hypot(ix + 0.5 - cx, iy + 0.5 - cy) <= p_.init_radius)
            s.u[iy * s.width + ix] = p_.init_u;
    }
    return s;
  }

  void step(FieldState& s, Stream& rng) const {
    const double dt = p_.dt;
    const double h = grid_.cell_side();
    const double scale = p_.scale_by_cell_area ? 1.0 / std::sqrt(grid_.cell_area()) : 1.0;
    const double su = p_.noise_u * scale * std::sqrt(dt);
    const double sv = p_.noise_v * scale * std::sqrt(dt);
    std::vector<double> lu(s.u.size()), lv(s.v.size());
    neumann_laplacian(s.u, s.width, s.height, h, lu);
    neumann_laplacian(s.v, s.width, s.height, h, lv);
    std::normal_distribution<double> normal;
    for (std::size_t i = 0; i < s.u.size(); ++i) {
      const double u = s.u[i];
      const double v = s.v[i];
      const double xi1 = su != 0.0 ? normal(rng) : 0.0;
      const double xi2 = sv != 0.0 ? normal(rng) : 0.0;
      s.u[i] = u + dt * (p_.diffusion_u * lu[i] + reaction(u) - v + p_.input_current) + su * xi1;
      s.v[i] = v + dt * (p_.diffusion_v * lv[i] + p_.gamma * (p_.beta * u - v)) + sv * xi2;
    }
    s.t += dt;
  }

 private:
  FhnParams p_;
  GridDomain grid_;
};

inline void step_fhn(FieldState& state, const FhnModel& model, Stream& rng) { model.step(state, rng); }

/// Either signal model behind one interface.
class SignalModel {
 public:
  SignalModel(const WhiteNoiseModel& m, const GridDomain& grid) : grid_(grid), impl_(m) {
    if (!(m.dt > 0.0)) throw ConfigError("signal dt must be positive");
    if (m.noise.amplitude < 0.0) throw ConfigError("noise amplitude must be >= 0");
    if (m.init_sd < 0.0) throw ConfigError("init_sd must be >= 0");
  }
  SignalModel(const FhnModel& m) : grid_(m.grid()), impl_(m) {}

  const GridDomain& grid() const { return grid_; }
  bool is_fhn() const { return std::holds_alternative<FhnModel>(impl_); }

  double dt() const {
    if (auto* w = std::get_if<WhiteNoiseModel>(&impl_)) return w->dt;
    return std::get<FhnModel>(impl_).dt();
  }

  FieldState initial_state(Stream& rng) const {
    if (auto* w = std::get_if<WhiteNoiseModel>(&impl_))
      return init_white_noise_signal(grid_, rng, w->init_mean, w->init_sd);
    return std::get<FhnModel>(impl_).initial_state(rng);
  }

  void step(FieldState& s, Stream& rng) const {
    if (auto* w = std::get_if<WhiteNoiseModel>(&impl_)) {
      step_white_noise(s, w->noise.effective(grid_.cell_area()), w->dt, rng);
    } else {
      std::get<FhnModel>(impl_).step(s, rng);
    }
  }

 private:
  GridDomain grid_;
  std::variant<WhiteNoiseModel, FhnModel> impl_;
};

inline void check_finite(const FieldState& s, long step) {
  for (std::size_t i = 0; i < s.u.size(); ++i)
    if (!std::isfinite(s.u[i])) throw NumericalError("non-finite u", step, static_cast<long>(i));
  for (std::size_t i = 0; i < s.v.size(); ++i)
    if (!std::isfinite(s.v[i])) throw NumericalError("non-finite v", step, static_cast<long>(i));
}

/// Snapshots at steps 0, stride, 2*stride, ... up to n_steps.
inline std::vector<FieldState> simulate_path(const SignalModel& model, long n_steps, std::uint64_t seed,
                                             long stride = 1) {
  if (n_steps < 0) throw ConfigError("n_steps must be >= 0");
  if (stride < 1) throw ConfigError("snapshot stride must be >= 1");
  Stream init = derive_stream(seed, StreamTag::kInit);
  Stream rng = derive_stream(seed, StreamTag::kSignal);
  std::vector<FieldState> out;
  FieldState s = model.initial_state(init);
  out.push_back(s);
  for (long j = 1; j <= n_steps; ++j) {
    model.step(s, rng);
    check_finite(s, j);
    if (j % stride == 0) out.push_back(s);
  }
  return out;
}

}  // namespace mppf
