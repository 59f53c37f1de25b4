#pragma once

// Level curves of the interleave image over (gain error, duty-cycle error).

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "tidac/dac.hpp"
#include "tidac/error.hpp"
#include "tidac/spectrum.hpp"

namespace tidac {

struct LevelPoint {
  double gain_error_pct = 0.0;  // 100 |g_A - g_B| / g_B
  double duty_error_pct = 0.0;  // 100 |α|
};

struct LevelCurveGrid {
  int rows = 48;                     // duty-error rows between 0 and the duty-only crossing
  double max_gain_error_pct = 50.0;  // bisection bracket for the gain axis
  int bisection_steps = 80;
  int k_range = kDefaultReplicaRange;
};

/// Spur for the worst sign combination of the given error magnitudes (skews zero).
///
/// A gain error and a duty error can partially cancel; the level curve bounds the
/// region where the spur is guaranteed below the threshold, so all four sign
/// combinations are evaluated and the largest spur is kept.
inline double worst_case_spur_dbc(const DacConfig& cfg, const ToneSpec& tone, double gain_error, double duty_error,
                                  int k_range = kDefaultReplicaRange) {
  double worst = kSpurFloorDbc;
  for (double gs : {1.0, -1.0}) {
    const double ga = 1.0 + gs * gain_error;
    if (ga <= 0.0) continue;
    for (double ds : {1.0, -1.0}) {
      const ImpairmentState imp{ds * duty_error, ga, 1.0, 0.0, 0.0};
      worst = std::max(worst, analytic_spur_dbc(cfg, imp, tone, k_range));
    }
  }
  return worst;
}

namespace detail {

/// Smallest x in [lo, hi] with f(x) >= threshold, assuming f nondecreasing and f(lo) < threshold <= f(hi).
template <class F>
double bisect_crossing(F&& f, double threshold, double lo, double hi, int steps) {
  for (int i = 0; i < steps && hi - lo > 0.0; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (f(mid) < threshold ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// Boundary of the region where the worst-case image stays below `threshold_dbc`.
///
/// Rows are evenly spaced in duty error from 0 up to the duty-only crossing; on each
/// row the gain-error crossing is located by bisection. The last point is the
/// duty-only crossing itself (zero gain error).
inline std::vector<LevelPoint> level_curve(const DacConfig& cfg, const ToneSpec& tone, double threshold_dbc,
                                           const LevelCurveGrid& grid = {}) {
  tone.validate(cfg);
  detail::require(threshold_dbc < 0.0, "threshold_dbc must be negative");
  if (threshold_dbc <= kSpurFloorDbc) throw InvalidArgument("threshold_dbc is below the numerical spur floor");
  detail::require(grid.rows >= 1, "grid.rows must be >= 1");
  detail::require(grid.max_gain_error_pct > 0.0 && grid.max_gain_error_pct < 100.0,
                  "grid.max_gain_error_pct must lie in (0, 100)");

  const auto spur = [&](double gain_err, double duty_err) {
    return worst_case_spur_dbc(cfg, tone, gain_err, duty_err, grid.k_range);
  };

  constexpr double kMaxDuty = 0.45;
  if (spur(0.0, kMaxDuty) < threshold_dbc) throw Error("duty-cycle error never reaches the threshold");
  const double duty_max = detail::bisect_crossing([&](double d) { return spur(0.0, d); }, threshold_dbc, 0.0,
                                                  kMaxDuty, grid.bisection_steps);

  const double gain_hi = grid.max_gain_error_pct / 100.0;
  std::vector<LevelPoint> points;
  points.reserve(static_cast<std::size_t>(grid.rows) + 1);
  for (int r = 0; r < grid.rows; ++r) {
    const double d = duty_max * static_cast<double>(r) / grid.rows;
    if (spur(0.0, d) >= threshold_dbc) break;
    if (spur(gain_hi, d) < threshold_dbc) throw Error("gain-error bracket too small for the threshold");
    const double g = detail::bisect_crossing([&](double e) { return spur(e, d); }, threshold_dbc, 0.0, gain_hi,
                                             grid.bisection_steps);
    points.push_back({100.0 * g, 100.0 * d});
  }
  points.push_back({0.0, 100.0 * duty_max});
  return points;
}

/// True when (gain, duty) errors in percent sit on the passing side of the threshold.
inline bool inside_level_curve(const DacConfig& cfg, const ToneSpec& tone, double threshold_dbc,
                               double gain_error_pct, double duty_error_pct) {
  return worst_case_spur_dbc(cfg, tone, gain_error_pct / 100.0, duty_error_pct / 100.0) < threshold_dbc;
}

}  // namespace tidac
