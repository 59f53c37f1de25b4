#pragma once

// Time-domain view of the interleaved DAC: quantized code streams, the RZ pulse
// trains they drive, and the output as seen by an ideal anti-aliased ADC.

#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "tidac/dac.hpp"
#include "tidac/error.hpp"
#include "tidac/fft.hpp"

namespace tidac {

enum class SubDac { kA, kB };

/// Quantized codes carried by each sub-DAC over `pairs` half-rate clock periods.
///
/// Each sub-DAC latches the stimulus on its own clock edge: A at 2nT_s, B at
/// 2nT_s + T_s(1+2α). Skews delay the output pulses only, never the latch instant.
struct CodeStreams {
  std::vector<double> a;
  std::vector<double> b;
};

inline CodeStreams sub_dac_codes(const DacConfig& cfg, const ImpairmentState& imp, const ToneSpec& tone,
                                 std::size_t pairs) {
  const double ts = cfg.sample_period_s();
  const double amp = tone.amplitude * cfg.full_scale;
  const double w = 2.0 * kPi * tone.freq_hz;
  CodeStreams out;
  out.a.resize(pairs);
  out.b.resize(pairs);
  for (std::size_t n = 0; n < pairs; ++n) {
    const double t_a = 2.0 * static_cast<double>(n) * ts;
    const double t_b = t_a + ts * imp.width_a();
    out.a[n] = quantize(amp * std::cos(w * t_a), cfg);
    out.b[n] = quantize(amp * std::cos(w * t_b), cfg);
  }
  return out;
}

/// One return-to-zero output pulse.
struct RzPulse {
  SubDac dac = SubDac::kA;
  double start_s = 0.0;
  double width_s = 0.0;
  double amplitude = 0.0;  // gain * code

  double end_s() const { return start_s + width_s; }
};

/// The continuous-time output as an explicit list of RZ pulses, two per aggregate sample pair.
inline std::vector<RzPulse> rz_pulses(const DacConfig& cfg, const ImpairmentState& imp, const ToneSpec& tone,
                                      std::size_t n_codes) {
  cfg.validate();
  imp.validate(cfg);
  detail::require(n_codes >= 2 && n_codes % 2 == 0, "n_codes must be even and >= 2");
  detail::require(imp.renderable(), "pulse window of non-positive width (|alpha| >= 0.5)");
  const double ts = cfg.sample_period_s();
  const auto codes = sub_dac_codes(cfg, imp, tone, n_codes / 2);
  std::vector<RzPulse> pulses;
  pulses.reserve(n_codes);
  for (std::size_t n = 0; n < n_codes / 2; ++n) {
    const double t0 = 2.0 * static_cast<double>(n) * ts;
    pulses.push_back({SubDac::kA, t0 + imp.skew_a_s, ts * imp.width_a(), imp.gain_a * codes.a[n]});
    pulses.push_back(
        {SubDac::kB, t0 + ts * imp.width_a() + imp.skew_b_s, ts * imp.width_b(), imp.gain_b * codes.b[n]});
  }
  return pulses;
}

/// Fourier-series coefficients c_m, m in [0, n_samples/2), of the periodic RZ output
/// whose period is the capture record of n_samples/oversample aggregate samples.
///
/// Exact for any α and skew: c_m = (1/P) Σ_sub g·w·sinc(u w)·e^{-jπuw}·e^{-j2πu·delay}·DFT(codes)[m],
/// with u = m/P the frequency in units of f_s.
inline std::vector<std::complex<double>> waveform_fourier_series(const DacConfig& cfg, const ImpairmentState& imp,
                                                                 const ToneSpec& tone, std::size_t n_samples,
                                                                 std::size_t oversample, Fft& fft) {
  cfg.validate();
  imp.validate(cfg);
  detail::require(n_samples >= 2, "n_samples must be >= 2");
  detail::require(oversample >= 4, "oversample must be >= 4 to keep f_s/2 - f_out unaliased");
  detail::require(n_samples % (2 * oversample) == 0, "n_samples must be a multiple of 2 * oversample");
  detail::require(imp.renderable(), "pulse window of non-positive width (|alpha| >= 0.5)");

  const std::size_t p = n_samples / oversample;
  const std::size_t half = p / 2;
  const auto codes = sub_dac_codes(cfg, imp, tone, half);

  std::vector<std::complex<double>> da, db;
  fft.forward(da, std::vector<std::complex<double>>(codes.a.begin(), codes.a.end()));
  fft.forward(db, std::vector<std::complex<double>>(codes.b.begin(), codes.b.end()));

  const double ts = cfg.sample_period_s();
  const double wa = imp.width_a();
  const double wb = imp.width_b();
  const double delay_a = imp.skew_a_s / ts;
  const double delay_b = wa + imp.skew_b_s / ts;
  const double inv_p = 1.0 / static_cast<double>(p);

  std::vector<std::complex<double>> coeffs(n_samples / 2);
  for (std::size_t m = 0; m < coeffs.size(); ++m) {
    const double u = static_cast<double>(m) * inv_p;
    const std::size_t idx = m % half;
    const auto ha = imp.gain_a * wa * sinc(u * wa) * std::polar(1.0, -kPi * u * wa - 2.0 * kPi * u * delay_a);
    const auto hb = imp.gain_b * wb * sinc(u * wb) * std::polar(1.0, -kPi * u * wb - 2.0 * kPi * u * delay_b);
    coeffs[m] = (ha * da[idx] + hb * db[idx]) * inv_p;
  }
  return coeffs;
}

/// Output sampled at oversample·f_s by an ideal anti-aliased ADC.
///
/// The capture is one period of the periodic extension of the record, band-limited to the
/// ADC Nyquist frequency. `start_offset_samples` delays the capture window in ADC samples.
inline std::vector<double> synthesize_waveform(const DacConfig& cfg, const ImpairmentState& imp,
                                               const ToneSpec& tone, std::size_t n_samples, std::size_t oversample,
                                               double start_offset_samples, Fft& fft) {
  const auto coeffs = waveform_fourier_series(cfg, imp, tone, n_samples, oversample, fft);
  const auto n = static_cast<double>(n_samples);
  std::vector<std::complex<double>> spec(n_samples);
  for (std::size_t m = 0; m < coeffs.size(); ++m) {
    auto c = coeffs[m] * n;
    if (start_offset_samples != 0.0) c *= std::polar(1.0, 2.0 * kPi * static_cast<double>(m) * start_offset_samples / n);
    if (m == 0) {
      spec[0] = c.real();
    } else {
      spec[m] = c;
      spec[n_samples - m] = std::conj(c);
    }
  }
  std::vector<std::complex<double>> time;
  fft.inverse(time, spec);
  std::vector<double> out(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) out[i] = time[i].real();
  return out;
}

inline std::vector<double> synthesize_waveform(const DacConfig& cfg, const ImpairmentState& imp,
                                               const ToneSpec& tone, std::size_t n_samples,
                                               std::size_t oversample) {
  Fft fft;
  return synthesize_waveform(cfg, imp, tone, n_samples, oversample, 0.0, fft);
}

}  // namespace tidac
