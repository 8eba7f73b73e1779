#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mppf/error.hpp"
#include "mppf/observation.hpp"
#include "mppf/oracle.hpp"
#include "mppf/rng.hpp"

namespace mppf {

struct BoundInputs {
  double lambda_minus = 1.0;
  double lambda_plus = 1.0;
  double lipschitz = 0.0;
  double horizon = 1.0;
  double mark_measure = 1.0;
  long ground_count = 0;  // events in (0, T]
  double max_diameter = 1.0;
  // Partial observation: events and measure on the observed / unobserved regions.
  long observed_count = 0;
  long unobserved_count = 0;
  double observed_measure = 1.0;
  double unobserved_measure = 0.0;

  void validate() const {
    if (!(lambda_minus > 0.0) || lambda_plus < lambda_minus) throw DomainError("need 0 < lambda_- <= lambda_+");
    if (lipschitz < 0.0 || horizon < 0.0 || mark_measure < 0.0 || ground_count < 0 || max_diameter < 0.0 ||
        observed_count < 0 || unobserved_count < 0 || observed_measure < 0.0 || unobserved_measure < 0.0)
      throw DomainError("bound inputs must be nonnegative");
  }
};

struct Envelopes {
  double lower = 1.0;
  double upper = 1.0;
};

/// Upper and lower envelopes of the likelihood density at time t with n events in (0, t].
inline Envelopes theta_envelopes(double lambda_minus, double lambda_plus, double t, double mark_measure, long n) {
  const double nn = static_cast<double>(n);
  const double up_pow = std::pow(lambda_plus, nn);
  const double up_exp = std::exp(-t * (lambda_minus - 1.0) * mark_measure);
  const double lo_pow = std::pow(lambda_minus, nn);
  const double lo_exp = std::exp(-t * (lambda_plus - 1.0) * mark_measure);
  return {std::min({lo_pow * lo_exp, lo_pow, lo_exp}), std::max({up_pow * up_exp, up_pow, up_exp})};
}

inline Envelopes theta_envelopes(const BoundInputs& in, double t, long n_t) {
  in.validate();
  return theta_envelopes(in.lambda_minus, in.lambda_plus, t, in.mark_measure, n_t);
}

/// max{D, D^n}
inline double diameter_factor(double diam, long n) {
  return std::max(diam, std::pow(diam, static_cast<double>(n)));
}

inline double lipschitz_growth(const BoundInputs& in) {
  return std::pow(1.0 + in.lipschitz / in.lambda_minus, static_cast<double>(in.ground_count)) - 1.0;
}

inline double kappa_rho(const BoundInputs& in) {
  in.validate();
  const double upper = theta_envelopes(in, in.horizon, in.ground_count).upper;
  return 0.5 * lipschitz_growth(in) * upper;
}

inline double kappa_eta(const BoundInputs& in) {
  in.validate();
  const double n = static_cast<double>(in.ground_count);
  const double lm = in.lambda_minus;
  const double lp = in.lambda_plus;
  const double tm = in.horizon * in.mark_measure;
  const double m = std::max({std::pow(lm, -n) * std::exp(-2.0 * tm * (lm - 1.0)),
                             std::pow(lp * lp / lm, n) * std::exp(tm * (lp + 1.0 - 2.0 * lm)),
                             std::pow(lp, 2.0 * n) * std::exp(tm * (lp - 1.0))});
  return lipschitz_growth(in) * m;
}

/// exp{max(|log l-|, |log l+|) Y(unobserved) + T mu(unobserved) max(|l- - 1|, |l+ - 1|)} - 1
inline double unobserved_growth(const BoundInputs& in) {
  const double a = std::max(std::abs(std::log(in.lambda_minus)), std::abs(std::log(in.lambda_plus)));
  const double b = std::max(std::abs(in.lambda_minus - 1.0), std::abs(in.lambda_plus - 1.0));
  return std::expm1(a * static_cast<double>(in.unobserved_count) + in.horizon * in.unobserved_measure * b);
}

inline double epsilon_rho(const BoundInputs& in) {
  in.validate();
  return 0.5 * theta_envelopes(in, in.horizon, in.ground_count).upper * unobserved_growth(in);
}

inline double epsilon_eta(const BoundInputs& in) {
  in.validate();
  const double n = static_cast<double>(in.ground_count);
  const double no = static_cast<double>(in.observed_count);
  const double lm = in.lambda_minus;
  const double lp = in.lambda_plus;
  const double t = in.horizon;
  const double m = std::max(
      {std::pow(lm, -no) * std::exp(-2.0 * t * (lm - 1.0) * in.mark_measure),
       std::pow(lp, 2.0 * n) * std::pow(lm, -no) *
           std::exp(t * ((lp + 1.0) * in.observed_measure - 2.0 * lm * in.mark_measure)),
       std::pow(lp, 2.0 * n) * std::exp(t * (lp - 1.0) * in.observed_measure)});
  return m * unobserved_growth(in);
}

/// Box [t0, t1] x [x0, x1] x [y0, y1] on which probe norms are measured.
struct ProbeDomain {
  double t0 = -std::numeric_limits<double>::infinity(), t1 = std::numeric_limits<double>::infinity();
  double x0 = -std::numeric_limits<double>::infinity(), x1 = std::numeric_limits<double>::infinity();
  double y0 = -std::numeric_limits<double>::infinity(), y1 = std::numeric_limits<double>::infinity();
};

namespace detail {

// max |cos| over the phase interval [lo, hi], shifted by `offset` (pi/2 gives max |sin|).
inline double max_abs_cos(double lo, double hi, double offset) {
  constexpr double pi = std::numbers::pi;
  if (!std::isfinite(lo) || !std::isfinite(hi) || hi - lo >= pi) return 1.0;
  const double a = lo - offset, b = hi - offset;
  if (std::floor(b / pi) > std::floor(a / pi)) return 1.0;
  return std::max(std::abs(std::cos(a)), std::abs(std::cos(b)));
}

// Range of w . z over the box; zero-weight axes contribute nothing.
inline std::pair<double, double> project_box(double w, double lo, double hi) {
  if (w == 0.0) return {0.0, 0.0};
  const double a = w * lo, b = w * hi;
  return {std::min(a, b), std::max(a, b)};
}

}  // namespace detail

/// f(t, x, y) = sum_j a_j cos(w_j . (t, x, y) + phi_j), scaled so that
/// sum_j |a_j| (sup_D |cos| + |w_j| sup_D |sin|) = 1 on the domain D. Each
/// summand is that term's exact sup norm plus Lipschitz constant on D, so the
/// sum bounds the bounded-Lipschitz norm of f on D by 1.
class RidgeProbe {
 public:
  struct Term {
    double a;
    double wt, wx, wy;
    double phi;
  };

  explicit RidgeProbe(std::vector<Term> terms, const ProbeDomain& domain = {}) : terms_(std::move(terms)) {
    double s = 0.0;
    for (const Term& r : terms_) {
      const auto [tl, th] = detail::project_box(r.wt, domain.t0, domain.t1);
      const auto [xl, xh] = detail::project_box(r.wx, domain.x0, domain.x1);
      const auto [yl, yh] = detail::project_box(r.wy, domain.y0, domain.y1);
      const double lo = r.phi + tl + xl + yl, hi = r.phi + th + xh + yh;
      const double w = std::sqrt(r.wt * r.wt + r.wx * r.wx + r.wy * r.wy);
      s += std::abs(r.a) * (detail::max_abs_cos(lo, hi, 0.0) + w * detail::max_abs_cos(lo, hi, std::numbers::pi / 2));
    }
    if (!(s > 0.0)) throw DomainError("degenerate probe");
    for (Term& r : terms_) r.a /= s;
  }

  double operator()(double t, Point p) const {
    double v = 0.0;
    for (const Term& r : terms_) v += r.a * std::cos(r.wt * t + r.wx * p.x + r.wy * p.y + r.phi);
    return v;
  }

  const std::vector<Term>& terms() const { return terms_; }

 private:
  std::vector<Term> terms_;
};

/// Random ridge sums plus a fixed grid of single ridges over frequency,
/// direction and phase, normalized on [0, horizon] x [0, extent]^2.
inline std::vector<RidgeProbe> make_probes(std::size_t random_count, Stream& rng, double extent = 1.0,
                                           double horizon = 1.0) {
  std::vector<RidgeProbe> out;
  constexpr double pi = std::numbers::pi;
  const ProbeDomain dom{0.0, horizon, 0.0, extent, 0.0, extent};
  for (double r : {0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 16.0, 32.0})
    for (int a = 0; a < 16; ++a)
      for (int f = 0; f < 16; ++f) {
        const double ang = pi * a / 16.0;
        out.emplace_back(std::vector<RidgeProbe::Term>{
                             {1.0, 0.0, r / extent * std::cos(ang), r / extent * std::sin(ang), 2.0 * pi * f / 16.0}},
                         dom);
      }
  for (std::size_t k = 0; k < random_count; ++k) {
    const int terms = 1 + static_cast<int>(rng.uniform01() * 3.0);
    std::vector<RidgeProbe::Term> ts;
    for (int j = 0; j < terms; ++j) {
      const double r = std::exp(std::log(0.25) + rng.uniform01() * std::log(256.0)) / extent;
      const double ang = 2.0 * pi * rng.uniform01();
      ts.push_back({2.0 * rng.uniform01() - 1.0, (2.0 * rng.uniform01() - 1.0) * r / horizon * extent,
                    r * std::cos(ang), r * std::sin(ang), 2.0 * pi * rng.uniform01()});
    }
    out.emplace_back(std::move(ts), dom);
  }
  return out;
}

struct BlStarResult {
  double empirical_sup = 0.0;
  double bound = 0.0;
};

/// Probe-based lower estimate of the dual bounded-Lipschitz distance between
/// two event sets, against the bound (ground count) * max_diameter.
inline BlStarResult bl_star_bound(const MarkedEventList& events, const MarkedEventList& embedded,
                                  double max_diameter, std::span<const RidgeProbe> probes) {
  if (events.ground_count() != embedded.ground_count())
    throw DomainError("ground counts differ: " + std::to_string(events.ground_count()) + " vs " +
                      std::to_string(embedded.ground_count()));
  BlStarResult r;
  r.bound = static_cast<double>(events.ground_count()) * max_diameter;
  for (const RidgeProbe& f : probes) {
    double s = 0.0;
    for (const MarkedEvent& e : events.events) s += f(e.time, e.mark);
    for (const MarkedEvent& e : embedded.events) s -= f(e.time, e.mark);
    r.empirical_sup = std::max(r.empirical_sup, std::abs(s));
  }
  return r;
}

struct BoundRow {
  int cells = 1;  // partition cells at this level
  double diam = 1.0;
  double tv_sup = 0.0;
  double bound = 0.0;
  double margin = 0.0;  // min over the time grid of (bound - tv)
};

struct BoundReport {
  std::vector<BoundRow> rho;
  std::vector<BoundRow> eta;
  std::vector<BoundRow> rho_partial;
  std::vector<BoundRow> eta_partial;

  std::size_t violations() const {
    std::size_t v = 0;
    for (const auto* rows : {&rho, &eta, &rho_partial, &eta_partial})
      for (const BoundRow& r : *rows)
        if (r.margin < 0.0) ++v;
    return v;
  }
};

inline void write_bound_csv(std::ostream& os, std::span<const BoundRow> rows) {
  os << "level,diam,tv_sup,bound,margin\n";
  char buf[160];
  for (const BoundRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", r.cells, r.diam, r.tv_sup, r.bound, r.margin);
    os << buf;
  }
}

/// Compare the exact filter against resolution-M filters (and, if masks are
/// given, partial filters) over a ladder of interval partitions. Every check is
/// pointwise on the time grid; rows report the grid sup and the smallest slack.
inline BoundReport verify_bound(const FiniteStateModel& model, double dt, std::size_t steps,
                                std::span<const OracleEvent> events, std::span<const int> ladder,
                                std::span<const std::vector<int>> masks = {}) {
  model.validate();
  if (model.reference_scale != 1.0) throw ConfigError("bound verification assumes a unit reference density");
  if (!masks.empty() && masks.size() != ladder.size()) throw DomainError("one mask per ladder level required");
  const auto exact = run_exact_filter(model, ObservationChannel::exact(), dt, steps, events);
  const double horizon = static_cast<double>(steps) * dt;

  BoundInputs base;
  base.lambda_minus = model.lambda_minus();
  base.lambda_plus = model.lambda_plus();
  base.lipschitz = model.lipschitz();
  base.horizon = horizon;
  base.mark_measure = model.mark_measure();
  base.ground_count = static_cast<long>(events.size());

  BoundReport rep;
  for (std::size_t li = 0; li < ladder.size(); ++li) {
    const int cells = ladder[li];
    BoundInputs in = base;
    in.max_diameter = IntervalPartition(cells).diameter();
    const double dfac = diameter_factor(in.max_diameter, in.ground_count);
    const double b_rho = kappa_rho(in) * dfac;
    const double b_eta = kappa_eta(in) * dfac;
    const auto coarse = run_exact_filter(model, ObservationChannel::resolution(cells), dt, steps, events);

    BoundRow r_rho{cells, in.max_diameter, 0.0, b_rho, b_rho};
    BoundRow r_eta{cells, in.max_diameter, 0.0, b_eta, b_eta};
    for (std::size_t j = 0; j <= steps; ++j) {
      r_rho.tv_sup = std::max(r_rho.tv_sup, tv_distance(exact[j].rho, coarse[j].rho));
      r_eta.tv_sup = std::max(r_eta.tv_sup, tv_distance(exact[j].eta, coarse[j].eta));
    }
    r_rho.margin = b_rho - r_rho.tv_sup;
    r_eta.margin = b_eta - r_eta.tv_sup;
    rep.rho.push_back(r_rho);
    rep.eta.push_back(r_eta);

    if (masks.empty()) continue;
    const ObservationChannel ch = ObservationChannel::partial(cells, masks[li]);
    const auto part = run_exact_filter(model, ch, dt, steps, events);
    auto inputs_at = [&](std::size_t j) {
      BoundInputs it = in;
      it.horizon = static_cast<double>(j) * dt;
      it.observed_measure = ch.observed_measure();
      it.unobserved_measure = model.mark_measure() - it.observed_measure;
      it.ground_count = 0;
      for (const OracleEvent& e : events) {
        if (e.step >= j) continue;  // event at the end of step e.step, time (e.step + 1) dt
        ++it.ground_count;
        if (ch.sees(e.mark)) {
          ++it.observed_count;
        } else {
          ++it.unobserved_count;
        }
      }
      return it;
    };
    const double bound_rho = b_rho + epsilon_rho(inputs_at(steps));
    BoundRow p_rho{cells, in.max_diameter, 0.0, bound_rho, std::numeric_limits<double>::infinity()};
    BoundRow p_eta{cells, in.max_diameter, 0.0, 0.0, std::numeric_limits<double>::infinity()};
    for (std::size_t j = 0; j <= steps; ++j) {
      const double bound_eta = b_eta + epsilon_eta(inputs_at(j));
      const double tv_r = tv_distance(exact[j].rho, part[j].rho);
      const double tv_e = tv_distance(exact[j].eta, part[j].eta);
      p_rho.tv_sup = std::max(p_rho.tv_sup, tv_r);
      p_eta.tv_sup = std::max(p_eta.tv_sup, tv_e);
      p_eta.bound = std::max(p_eta.bound, bound_eta);
      p_rho.margin = std::min(p_rho.margin, bound_rho - tv_r);
      p_eta.margin = std::min(p_eta.margin, bound_eta - tv_e);
    }
    rep.rho_partial.push_back(p_rho);
    rep.eta_partial.push_back(p_eta);
  }
  return rep;
}

}  // namespace mppf
