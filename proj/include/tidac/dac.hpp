#pragma once

// Converter parameters, the physical impairment vector and the test tone.

#include <cmath>
#include <numbers>
#include <string>

#include "tidac/error.hpp"

namespace tidac {

inline constexpr double kPi = std::numbers::pi;

/// Largest resolution accepted; 48 bits is an effectively ideal quantizer in double precision.
inline constexpr int kMaxResolutionBits = 48;

/// Static converter parameters of a twofold interleaved DAC.
struct DacConfig {
  double sample_rate_hz = 50e9;  // aggregate f_s
  int resolution_bits = 10;      // M
  double full_scale = 1.0;

  double sample_period_s() const { return 1.0 / sample_rate_hz; }
  double sub_dac_rate_hz() const { return sample_rate_hz / 2.0; }
  double nyquist_hz() const { return sample_rate_hz / 2.0; }

  void validate() const {
    detail::require(std::isfinite(sample_rate_hz) && sample_rate_hz > 0, "sample_rate_hz must be > 0");
    detail::require(resolution_bits >= 1 && resolution_bits <= kMaxResolutionBits,
                    "resolution_bits must be in [1, 48]");
    detail::require(std::isfinite(full_scale) && full_scale > 0, "full_scale must be > 0");
  }

  bool operator==(const DacConfig&) const = default;
};

/// Physical error vector of the converter.
///
/// `alpha` is the fractional duty-cycle offset of the half-rate clock: sub-DAC A
/// drives for T_s(1+2α) and sub-DAC B for T_s(1-2α). The skews delay the whole
/// RZ pulse train of one sub-DAC without changing the code it carries.
struct ImpairmentState {
  double alpha = 0.0;
  double gain_a = 1.0;
  double gain_b = 1.0;
  double skew_a_s = 0.0;
  double skew_b_s = 0.0;

  void validate(const DacConfig& cfg) const {
    detail::require(std::isfinite(alpha) && std::abs(alpha) <= 1.0, "alpha must lie in [-1, 1]");
    detail::require(std::isfinite(gain_a) && gain_a > 0, "gain_a must be > 0");
    detail::require(std::isfinite(gain_b) && gain_b > 0, "gain_b must be > 0");
    const double ts = cfg.sample_period_s();
    detail::require(std::isfinite(skew_a_s) && std::abs(skew_a_s) < ts, "|skew_a_s| must be < T_s");
    detail::require(std::isfinite(skew_b_s) && std::abs(skew_b_s) < ts, "|skew_b_s| must be < T_s");
  }

  /// Relative pulse widths of sub-DAC A and B in units of T_s.
  double width_a() const { return 1.0 + 2.0 * alpha; }
  double width_b() const { return 1.0 - 2.0 * alpha; }

  /// Both pulse windows have positive width.
  bool renderable() const { return width_a() > 0.0 && width_b() > 0.0; }

  /// Same converter with the sub-DAC labels swapped.
  ImpairmentState relabeled() const { return {-alpha, gain_b, gain_a, skew_b_s, skew_a_s}; }

  bool operator==(const ImpairmentState&) const = default;
};

/// Single-tone stimulus x(t) = amplitude * full_scale * cos(2π f t).
struct ToneSpec {
  double freq_hz = 20e9;
  double amplitude = 1.0;

  double image_freq_hz(const DacConfig& cfg) const { return cfg.sample_rate_hz / 2.0 - freq_hz; }

  void validate(const DacConfig& cfg) const {
    detail::require(std::isfinite(freq_hz) && freq_hz > 0 && freq_hz < cfg.nyquist_hz(),
                    "tone frequency must lie strictly inside (0, f_s/2)");
    detail::require(std::abs(freq_hz - cfg.sample_rate_hz / 4.0) > 1e-9 * cfg.sample_rate_hz,
                    "tone at f_s/4: the interleave image coincides with the carrier");
    detail::require(std::isfinite(amplitude) && amplitude > 0 && amplitude <= 1.0,
                    "tone amplitude must lie in (0, 1]");
  }

  bool operator==(const ToneSpec&) const = default;
};

/// Normalized sinc, sin(πx)/(πx), with its limit at 0.
inline double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = kPi * x;
  return std::sin(px) / px;
}

/// Mid-tread quantizer: round half away from zero, clamp to the two's-complement code range.
inline double quantize(double x, const DacConfig& cfg) {
  const double half_levels = std::ldexp(1.0, cfg.resolution_bits - 1);
  const double lsb = cfg.full_scale / half_levels;
  double code = std::round(x / lsb);
  if (code > half_levels - 1) code = half_levels - 1;
  if (code < -half_levels) code = -half_levels;
  return code * lsb;
}

inline double db20(double ratio) { return 20.0 * std::log10(ratio); }
inline double db10(double ratio) { return 10.0 * std::log10(ratio); }

}  // namespace tidac
