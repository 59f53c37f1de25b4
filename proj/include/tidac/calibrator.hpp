#pragma once

// Simulated-annealing calibration over the register state space, plus the
// grid-search baseline it is compared against.

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <vector>

#include "tidac/error.hpp"
#include "tidac/spur_meter.hpp"
#include "tidac/virtual_plant.hpp"

namespace tidac {

/// Anything that maps a register file to one spur measurement.
template <class F>
concept CostOracle = requires(F f, const RegisterFile& s) {
  { f(s) } -> std::convertible_to<SpurMeasurement>;
};

enum class NeighborMode { kWindow, kFullRange };

struct NeighborOptions {
  NeighborMode mode = NeighborMode::kWindow;
  int window = 32;  // half-width W in LSBs
};

struct AnnealParams {
  std::optional<double> t_max;       // unset: calibrated by the warm-up probe
  std::optional<double> t_min;       // unset: t_max * t_min_ratio
  double t_min_ratio = 0.01;
  double gamma = 0.8;
  double beta = 50.0;
  int k_inner = 30;
  std::uint64_t seed = 0;
  NeighborOptions neighbor;
  bool remeasure_current = false;    // re-measure C(s) every inner iteration
  std::optional<double> stop_at_dbc; // checked after each temperature step
  int warmup_probes = 20;
  double warmup_accept = 0.8;        // target acceptance of the median uphill probe at t_max
  bool count_warmup = false;         // put warm-up measurements in the trace and count

  void validate() const {
    detail::require(gamma > 0.0 && gamma < 1.0, "gamma must lie in (0, 1)");
    detail::require(beta > 0.0, "beta must be > 0");
    detail::require(k_inner >= 1, "k_inner must be >= 1");
    detail::require(neighbor.mode == NeighborMode::kFullRange || neighbor.window >= 1, "neighbor window must be >= 1");
    detail::require(t_min_ratio > 0.0 && t_min_ratio < 1.0, "t_min_ratio must lie in (0, 1)");
    if (t_max) detail::require(*t_max > 0.0, "t_max must be > 0");
    if (t_min) detail::require(*t_min > 0.0, "t_min must be > 0");
    if (t_max && t_min) detail::require(*t_min < *t_max, "t_min must be < t_max");
    detail::require(warmup_probes >= 1, "warmup_probes must be >= 1");
    detail::require(warmup_accept > 0.0 && warmup_accept < 1.0, "warmup_accept must lie in (0, 1)");
  }
};

enum class TraceKind { kInitial, kProposal, kRemeasure, kWarmup, kGrid };

struct TraceEntry {
  int measurement_index = 0;
  double temperature = 0.0;
  double proposed_cost = 0.0;
  double proposed_dbc = 0.0;
  bool accepted = false;
  double best_cost = 0.0;
  double best_dbc = 0.0;
  TraceKind kind = TraceKind::kProposal;
};

struct AnnealResult {
  RegisterFile best_state;
  double best_cost = std::numeric_limits<double>::infinity();
  double best_dbc = 0.0;
  std::vector<TraceEntry> trace;
  int measurement_count = 0;
  int warmup_measurements = 0;
  int uphill_proposals = 0;
  int accepted_uphill = 0;
  int outer_iterations = 0;
  double t_max = 0.0;
  double t_min = 0.0;
  bool stopped_early = false;
};

/// Trace CSV: `measurement_index,temperature,proposed_cost_dbc,accepted,best_cost_dbc`.
inline void write_trace_csv(std::ostream& os, const AnnealResult& r) {
  os << "measurement_index,temperature,proposed_cost_dbc,accepted,best_cost_dbc\n";
  os.precision(10);
  for (const auto& e : r.trace)
    os << e.measurement_index << ',' << e.temperature << ',' << e.proposed_dbc << ',' << (e.accepted ? 1 : 0) << ','
       << e.best_dbc << '\n';
}

/// Number of temperatures T_max·γ^n visited while T > T_min.
inline int schedule_length(double t_max, double t_min, double gamma) {
  detail::require(t_max > 0 && t_min > 0 && gamma > 0 && gamma < 1, "invalid cooling schedule");
  int n = 0;
  for (double t = t_max; t > t_min; t *= gamma) ++n;
  return n;
}

/// Metropolis rule for an uphill move: accept when rand[0,1) < exp(-β ΔE / T).
template <class Rng>
bool accept_uphill(double delta_e, double temperature, double beta, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return u(rng) < std::exp(-beta * delta_e / temperature);
}

/// Neighbor n(s): pick one active register uniformly, redraw its code uniformly over
/// [code - W, code + W] clipped to the register range (or the whole range). The new
/// code may equal the old one.
template <class Rng>
RegisterFile neighbor(const RegisterFile& s, const NeighborOptions& opt, Rng& rng) {
  const auto active = s.map.active_addresses();
  if (active.empty()) throw InvalidArgument("no active registers to perturb");
  std::uniform_int_distribution<std::size_t> pick(0, active.size() - 1);
  const int addr = active[pick(rng)];
  const auto& spec = s.map.spec(addr);
  const int code = s.values[static_cast<std::size_t>(addr)];
  int lo = 0;
  int hi = spec.max_code();
  if (opt.mode == NeighborMode::kWindow) {
    lo = std::max(lo, code - opt.window);
    hi = std::min(hi, code + opt.window);
  }
  std::uniform_int_distribution<int> draw(lo, hi);
  RegisterFile out = s;
  out.values[static_cast<std::size_t>(addr)] = draw(rng);
  return out;
}

/// Simulated annealing.
///
/// s ← s0, s* ← s, T ← T_max; while T > T_min: K times { s' ← n(s); ΔE ← C(s') − C(s);
/// downhill or flat moves are taken (and s* updated when C(s) < C(s*)); uphill moves
/// are taken when rand(0,1) < exp(−βΔE/T) }; T ← γT.
///
/// C(s0) is measured once and C(s) is carried with the current state unless
/// `remeasure_current` is set. If a measurement throws, the partial result is
/// available through `partial` before the exception propagates.
template <CostOracle Cost>
AnnealResult anneal(Cost&& cost, const AnnealParams& p, const RegisterFile& s0, AnnealResult* partial = nullptr) {
  p.validate();
  std::mt19937_64 rng(p.seed);
  AnnealResult r;
  AnnealResult& res = partial ? *partial : r;
  res = AnnealResult{};

  int index = 0;
  const auto record = [&](const SpurMeasurement& m, double t, bool accepted, TraceKind kind) {
    res.trace.push_back({++index, t, m.image_power, m.spur_dbc, accepted, res.best_cost, res.best_dbc, kind});
  };

  RegisterFile s = s0;
  SpurMeasurement cur = cost(s);
  res.best_state = s;
  res.best_cost = cur.image_power;
  res.best_dbc = cur.spur_dbc;

  // Warm-up probe for T_max: median uphill ΔE from s0 accepted with probability warmup_accept.
  double t_max = p.t_max.value_or(0.0);
  std::vector<SpurMeasurement> warm;
  if (!p.t_max) {
    std::vector<double> uphill;
    for (int i = 0; i < p.warmup_probes; ++i) {
      const auto m = cost(neighbor(s, p.neighbor, rng));
      warm.push_back(m);
      if (m.image_power > cur.image_power) uphill.push_back(m.image_power - cur.image_power);
    }
    res.warmup_measurements = p.warmup_probes;
    double scale = 0.0;
    if (!uphill.empty()) {
      std::nth_element(uphill.begin(), uphill.begin() + static_cast<long>(uphill.size() / 2), uphill.end());
      scale = uphill[uphill.size() / 2];
    }
    if (!(scale > 0.0)) scale = std::max(cur.image_power, std::numeric_limits<double>::min());
    t_max = p.beta * scale / -std::log(p.warmup_accept);
  }
  const double t_min = p.t_min.value_or(t_max * p.t_min_ratio);
  detail::require(t_min < t_max, "t_min must be < t_max");
  res.t_max = t_max;
  res.t_min = t_min;

  record(cur, t_max, true, TraceKind::kInitial);
  if (p.count_warmup)
    for (const auto& m : warm) record(m, t_max, false, TraceKind::kWarmup);

  for (double t = t_max; t > t_min; t *= p.gamma) {
    for (int k = 0; k < p.k_inner; ++k) {
      if (p.remeasure_current) {
        cur = cost(s);
        record(cur, t, true, TraceKind::kRemeasure);
      }
      RegisterFile cand = neighbor(s, p.neighbor, rng);
      const SpurMeasurement m = cost(cand);
      const double de = m.image_power - cur.image_power;
      bool take = false;
      if (de <= 0.0) {
        take = true;
      } else {
        ++res.uphill_proposals;
        take = accept_uphill(de, t, p.beta, rng);
        if (take) ++res.accepted_uphill;
      }
      if (take) {
        s = std::move(cand);
        cur = m;
        if (de <= 0.0 && cur.image_power < res.best_cost) {
          res.best_cost = cur.image_power;
          res.best_dbc = cur.spur_dbc;
          res.best_state = s;
        }
      }
      record(m, t, take, TraceKind::kProposal);
    }
    ++res.outer_iterations;
    if (p.stop_at_dbc && res.best_dbc <= *p.stop_at_dbc) {
      res.stopped_early = true;
      break;
    }
  }
  res.measurement_count = static_cast<int>(res.trace.size());
  return partial ? *partial : r;
}

/// Anneal on a fresh measurement session of `plant` at `tone`.
inline AnnealResult anneal(const PlantModel& plant, const ToneSpec& tone, const CaptureConfig& capture,
                           const AnnealParams& p, const RegisterFile& s0, std::uint64_t noise_seed) {
  SpurMeter meter(plant, tone, capture, noise_seed);
  return anneal(meter, p, s0);
}

/// One lattice axis: `count` codes starting at `start` spaced by `stride`.
struct GridAxis {
  int start = 0;
  int stride = 1;
  int count = 1;
};

struct GridSpec {
  std::array<GridAxis, kNumRegisters> axes{};

  std::size_t size() const {
    std::size_t n = 1;
    for (const auto& a : axes) n *= static_cast<std::size_t>(a.count);
    return n;
  }

  /// `counts[i]` evenly strided codes centered in register i's range; count 1 pins the reset value.
  static GridSpec centered(const RegisterMap& map, const std::array<int, kNumRegisters>& counts) {
    GridSpec g;
    for (std::size_t i = 0; i < kNumRegisters; ++i) {
      const auto& spec = map[i];
      detail::require(counts[i] >= 1 && counts[i] <= spec.max_code() + 1, "grid count out of range");
      if (counts[i] == 1) {
        g.axes[i] = {spec.reset_value, 1, 1};
        continue;
      }
      const int range = spec.max_code() + 1;
      const int stride = range / counts[i];
      g.axes[i] = {stride / 2, stride, counts[i]};
    }
    return g;
  }

  /// Every code of every register (exhaustive over active registers, others pinned at reset).
  static GridSpec exhaustive(const RegisterMap& map) {
    GridSpec g;
    for (std::size_t i = 0; i < kNumRegisters; ++i) {
      const auto& spec = map[i];
      g.axes[i] = spec.active ? GridAxis{0, 1, spec.max_code() + 1} : GridAxis{spec.reset_value, 1, 1};
    }
    return g;
  }
};

/// Grid search over a stride lattice. Rejects the lattice before measuring when it exceeds `budget`.
template <CostOracle Cost>
AnnealResult grid_search(Cost&& cost, const RegisterMap& map, const GridSpec& grid, std::size_t budget) {
  const std::size_t n = grid.size();
  if (n > budget)
    throw InvalidArgument("grid of " + std::to_string(n) + " points exceeds the budget of " + std::to_string(budget));
  for (std::size_t i = 0; i < kNumRegisters; ++i) {
    const auto& a = grid.axes[i];
    detail::require(a.count >= 1 && a.stride >= 1, "grid axis needs count >= 1 and stride >= 1");
    detail::require(map[i].in_range(a.start) && map[i].in_range(a.start + a.stride * (a.count - 1)),
                    "grid axis leaves the register range");
  }

  AnnealResult res;
  res.trace.reserve(n);
  RegisterFile s = RegisterFile::reset(map);
  std::array<int, kNumRegisters> idx{};
  for (std::size_t point = 0; point < n; ++point) {
    for (std::size_t i = 0; i < kNumRegisters; ++i) s.values[i] = grid.axes[i].start + grid.axes[i].stride * idx[i];
    const SpurMeasurement m = cost(s);
    const bool better = m.image_power < res.best_cost;
    if (better) {
      res.best_cost = m.image_power;
      res.best_dbc = m.spur_dbc;
      res.best_state = s;
    }
    res.trace.push_back({static_cast<int>(point) + 1, 0.0, m.image_power, m.spur_dbc, better, res.best_cost,
                         res.best_dbc, TraceKind::kGrid});
    for (std::size_t i = 0; i < kNumRegisters; ++i) {
      if (++idx[i] < grid.axes[i].count) break;
      idx[i] = 0;
    }
  }
  res.measurement_count = static_cast<int>(n);
  return res;
}

}  // namespace tidac
