#pragma once

// Closed-form output spectrum of the twofold interleaved DAC driven by a tone.
//
// The tone is treated as a two-sided line spectrum X(f) = (A/2)[δ(f - f0) + δ(f + f0)],
// so every spectrum below is the complex coefficient of the output impulse at `f`
// (zero when no replica of the tone lands there).

#include <algorithm>
#include <cmath>
#include <complex>

#include "tidac/dac.hpp"
#include "tidac/error.hpp"

namespace tidac {

inline constexpr int kDefaultReplicaRange = 8;
inline constexpr double kSpurFloorDbc = -200.0;

struct SpectrumSample {
  double freq_hz = 0.0;
  std::complex<double> value;
};

namespace detail {

inline void check_spectrum_args(const DacConfig& cfg, const ImpairmentState& imp, const ToneSpec& tone,
                                double f, int k_range) {
  cfg.validate();
  imp.validate(cfg);
  require(std::isfinite(f), "evaluation frequency must be finite");
  require(k_range >= 1, "k_range must be >= 1");
  require(std::isfinite(tone.freq_hz) && tone.freq_hz > 0, "tone frequency must be > 0");
  require(imp.renderable(), "|alpha| >= 0.5 gives a pulse window of non-positive width");
}

/// Coefficient of the tone's line spectrum at `f`.
inline double line_amplitude(const ToneSpec& tone, const DacConfig& cfg, double f) {
  const double tol = 1e-9 * cfg.sample_rate_hz;
  const double a = 0.5 * tone.amplitude * cfg.full_scale;
  double out = 0.0;
  if (std::abs(f - tone.freq_hz) <= tol) out += a;
  if (std::abs(f + tone.freq_hz) <= tol) out += a;
  return out;
}

/// (g/2) w sinc(f T_s w) e^{-jπ f T_s w} e^{-j2π f skew}: one RZ pulse train, w in units of T_s.
inline std::complex<double> pulse_response(double gain, double width, double f, double ts, double skew_s) {
  const double u = f * ts * width;
  return 0.5 * gain * width * sinc(u) * std::polar(1.0, -kPi * u - 2.0 * kPi * f * skew_s);
}

}  // namespace detail

/// Sub-DAC A spectrum: pulse of width T_s(1+2α) starting at t = 0 on the even clock edges.
inline SpectrumSample spectrum_sub_a(const DacConfig& cfg, const ImpairmentState& imp, const ToneSpec& tone,
                                     double f, int k_range = kDefaultReplicaRange) {
  detail::check_spectrum_args(cfg, imp, tone, f, k_range);
  const double half_fs = cfg.sample_rate_hz / 2.0;
  double replicas = 0.0;
  for (int k = -k_range; k <= k_range; ++k) replicas += detail::line_amplitude(tone, cfg, f - k * half_fs);
  if (replicas == 0.0) return {f, {}};
  const auto h = detail::pulse_response(imp.gain_a, imp.width_a(), f, cfg.sample_period_s(), imp.skew_a_s);
  return {f, h * replicas};
}

/// Replica phase of sub-DAC B, e^{-jπk(1+2α)}.
inline std::complex<double> sub_b_replica_phase(int k, double alpha) {
  return std::polar(1.0, -kPi * k * (1.0 + 2.0 * alpha));
}

/// Sub-DAC B spectrum: complementary pulse of width T_s(1-2α), clocked T_s(1+2α) after A.
inline SpectrumSample spectrum_sub_b(const DacConfig& cfg, const ImpairmentState& imp, const ToneSpec& tone,
                                     double f, int k_range = kDefaultReplicaRange) {
  detail::check_spectrum_args(cfg, imp, tone, f, k_range);
  const double half_fs = cfg.sample_rate_hz / 2.0;
  std::complex<double> replicas;
  for (int k = -k_range; k <= k_range; ++k) {
    const double x = detail::line_amplitude(tone, cfg, f - k * half_fs);
    if (x != 0.0) replicas += x * sub_b_replica_phase(k, imp.alpha);
  }
  if (replicas == std::complex<double>{}) return {f, {}};
  const auto h = detail::pulse_response(imp.gain_b, imp.width_b(), f, cfg.sample_period_s(), imp.skew_b_s);
  return {f, h * replicas};
}

/// Y(f) = Y_A(f) + Y_B(f).
inline SpectrumSample output_spectrum(const DacConfig& cfg, const ImpairmentState& imp, const ToneSpec& tone,
                                      double f, int k_range = kDefaultReplicaRange) {
  return {f, spectrum_sub_a(cfg, imp, tone, f, k_range).value + spectrum_sub_b(cfg, imp, tone, f, k_range).value};
}

/// Interleave image at f_s/2 - f_out relative to the carrier, in dBc.
///
/// Returns `floor_dbc` when the image is below 1e-15 of the carrier (exact cancellation).
inline double analytic_spur_dbc(const DacConfig& cfg, const ImpairmentState& imp, const ToneSpec& tone,
                                int k_range = kDefaultReplicaRange, double floor_dbc = kSpurFloorDbc) {
  tone.validate(cfg);
  const double carrier = std::abs(output_spectrum(cfg, imp, tone, tone.freq_hz, k_range).value);
  if (!(carrier > 0.0)) throw Error("carrier magnitude is zero; spur ratio undefined");
  const double image = std::abs(output_spectrum(cfg, imp, tone, tone.image_freq_hz(cfg), k_range).value);
  const double ratio = image / carrier;
  if (ratio < 1e-15) return floor_dbc;
  return std::max(floor_dbc, db20(ratio));
}

}  // namespace tidac
