#pragma once

// Closed-loop measurement path: capture the DAC output, FFT it and read the
// power in the interleave image bin. That power is the calibration cost C(s).

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "tidac/dac.hpp"
#include "tidac/error.hpp"
#include "tidac/fft.hpp"
#include "tidac/spectrum.hpp"
#include "tidac/virtual_plant.hpp"
#include "tidac/waveform.hpp"

namespace tidac {

enum class Window { kAuto, kRectangular, kBlackmanHarris };

inline constexpr double kNoiseOff = -std::numeric_limits<double>::infinity();

struct CaptureConfig {
  std::size_t fft_size = 8192;
  std::size_t oversample = 8;
  bool coherent = true;
  Window window = Window::kAuto;  // rectangular when coherent, Blackman-Harris otherwise
  double noise_floor_dbc = -90.0;
  double start_offset_samples = 0.0;

  double capture_rate_hz(const DacConfig& dac) const { return static_cast<double>(oversample) * dac.sample_rate_hz; }
  double bin_width_hz(const DacConfig& dac) const { return capture_rate_hz(dac) / static_cast<double>(fft_size); }

  Window effective_window() const {
    if (window != Window::kAuto) return window;
    return coherent ? Window::kRectangular : Window::kBlackmanHarris;
  }

  void validate() const {
    detail::require(fft_size >= 1024 && (fft_size & (fft_size - 1)) == 0, "fft_size must be a power of two >= 1024");
    detail::require(oversample >= 4, "oversample must be >= 4");
    detail::require(fft_size % (2 * oversample) == 0, "fft_size must be a multiple of 2 * oversample");
    detail::require(!std::isnan(noise_floor_dbc) && noise_floor_dbc < 0.0, "noise_floor_dbc must be negative or -inf");
    detail::require(std::isfinite(start_offset_samples), "start_offset_samples must be finite");
  }

  bool operator==(const CaptureConfig&) const = default;
};

/// One evaluation of the cost function.
struct SpurMeasurement {
  double image_power = 0.0;    // linear, the cost
  double carrier_power = 0.0;  // linear
  double spur_dbc = kSpurFloorDbc;
  ToneSpec tone;
  int measurement_index = 0;

  double cost() const { return image_power; }
};

inline double spur_dbc_from_powers(double image_power, double carrier_power, double floor_dbc = kSpurFloorDbc) {
  if (!(image_power > 0.0) || !(carrier_power > 0.0)) return floor_dbc;
  return std::max(floor_dbc, db10(image_power / carrier_power));
}

/// Nearest tone whose carrier and image both fall on exact FFT bins.
///
/// The bin width is f_s / P with P = fft_size / oversample aggregate samples, so the
/// image bin P/2 - m is integral whenever the carrier bin m is. Bins 0, P/4 and P/2 are
/// avoided.
inline ToneSpec snap_coherent(const ToneSpec& tone, const CaptureConfig& cfg, const DacConfig& dac) {
  cfg.validate();
  const double bw = cfg.bin_width_hz(dac);
  const auto p = static_cast<long>(cfg.fft_size / cfg.oversample);
  long bin = std::lround(tone.freq_hz / bw);
  const auto bad = [&](long b) { return b <= 0 || b >= p / 2 || b == p / 4; };
  if (bad(bin)) {
    const long up = bin + 1;
    const long down = bin - 1;
    const double err_up = std::abs(up * bw - tone.freq_hz);
    const double err_down = std::abs(down * bw - tone.freq_hz);
    bin = (!bad(up) && (bad(down) || err_up <= err_down)) ? up : down;
    if (bad(bin)) throw InvalidArgument("no coherent bin near the requested tone");
  }
  return {static_cast<double>(bin) * bw, tone.amplitude};
}

namespace detail {

inline std::vector<double> make_window(Window w, std::size_t n) {
  std::vector<double> out(n, 1.0);
  if (w != Window::kBlackmanHarris) return out;
  constexpr double a0 = 0.35875, a1 = 0.48829, a2 = 0.14128, a3 = 0.01168;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = 2.0 * kPi * static_cast<double>(i) / static_cast<double>(n);
    out[i] = a0 - a1 * std::cos(x) + a2 * std::cos(2 * x) - a3 * std::cos(3 * x);
  }
  return out;
}

}  // namespace detail

/// Measurement session: one plant, one tone, one capture setup and one seeded noise stream.
///
/// Every call to measure() counts as one spur measurement. Not thread-safe; give
/// each optimizer its own session.
class SpurMeter {
 public:
  SpurMeter(PlantModel plant, const ToneSpec& tone, CaptureConfig capture, std::uint64_t seed)
      : plant_(std::move(plant)), capture_(capture), rng_(seed) {
    plant_.validate();
    capture_.validate();
    tone.validate(plant_.dac);
    tone_ = capture_.coherent ? snap_coherent(tone, capture_, plant_.dac) : tone;
    tone_.validate(plant_.dac);
    window_ = detail::make_window(capture_.effective_window(), capture_.fft_size);
    window_sum_ = std::accumulate(window_.begin(), window_.end(), 0.0);
    const double bw = capture_.bin_width_hz(plant_.dac);
    carrier_bin_ = tone_.freq_hz / bw;
    image_bin_ = tone_.image_freq_hz(plant_.dac) / bw;
  }

  SpurMeasurement measure(const RegisterFile& file) {
    const auto mapped = map_registers(plant_, file);
    if (mapped.clamped) ++clamp_events_;
    return measure_impairments(mapped.state);
  }

  SpurMeasurement operator()(const RegisterFile& file) { return measure(file); }

  /// Measures an explicit impairment state, bypassing the registers.
  SpurMeasurement measure_impairments(const ImpairmentState& imp) {
    const auto bins = capture_spectrum(imp);
    const int span = capture_.coherent ? 0 : 2;
    SpurMeasurement m;
    m.tone = tone_;
    m.carrier_power = band_power(bins, carrier_bin_, span);
    m.image_power = band_power(bins, image_bin_, span);
    m.spur_dbc = spur_dbc_from_powers(m.image_power, m.carrier_power);
    m.measurement_index = ++count_;
    if (keep_history_) history_.push_back(m);
    return m;
  }

  /// Normalized power per positive-frequency bin (|X[k]|² / (Σw)²) including measurement noise.
  std::vector<double> capture_spectrum(const ImpairmentState& imp) {
    const std::size_t n = capture_.fft_size;
    auto y = synthesize_waveform(plant_.dac, imp, tone_, n, capture_.oversample, capture_.start_offset_samples, fft_);
    std::vector<std::complex<double>> in(n), out;
    for (std::size_t i = 0; i < n; ++i) in[i] = y[i] * window_[i];
    fft_.forward(out, in);

    std::vector<double> power(n / 2);
    std::vector<std::complex<double>> bins(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) bins[k] = out[k] / window_sum_;

    if (std::isfinite(capture_.noise_floor_dbc)) {
      const double ref = std::norm(bins[static_cast<std::size_t>(std::lround(carrier_bin_))]);
      const double sigma = std::sqrt(0.5 * ref * std::pow(10.0, capture_.noise_floor_dbc / 10.0));
      std::normal_distribution<double> noise(0.0, sigma);
      for (auto& b : bins) b += std::complex<double>(noise(rng_), noise(rng_));
    }
    for (std::size_t k = 0; k < n / 2; ++k) power[k] = std::norm(bins[k]);
    return power;
  }

  const ToneSpec& tone() const { return tone_; }
  const PlantModel& plant() const { return plant_; }
  const CaptureConfig& capture() const { return capture_; }
  int measurement_count() const { return count_; }
  int clamp_events() const { return clamp_events_; }

  void keep_history(bool on) { keep_history_ = on; }
  const std::vector<SpurMeasurement>& history() const { return history_; }

  /// Per-measurement trace: `index,f_out_hz,spur_dbc,cost_linear`.
  void write_history_csv(std::ostream& os) const {
    os << "index,f_out_hz,spur_dbc,cost_linear\n";
    os.precision(17);
    for (const auto& m : history_)
      os << m.measurement_index << ',' << m.tone.freq_hz << ',' << m.spur_dbc << ',' << m.image_power << '\n';
  }

 private:
  static double band_power(const std::vector<double>& bins, double center, int span) {
    const long c = std::lround(center);
    double p = 0.0;
    for (long k = c - span; k <= c + span; ++k)
      if (k >= 0 && k < static_cast<long>(bins.size())) p += bins[static_cast<std::size_t>(k)];
    return p;
  }

  PlantModel plant_;
  CaptureConfig capture_;
  ToneSpec tone_;
  std::mt19937_64 rng_;
  Fft fft_;
  std::vector<double> window_;
  double window_sum_ = 1.0;
  double carrier_bin_ = 0.0;
  double image_bin_ = 0.0;
  int count_ = 0;
  int clamp_events_ = 0;
  bool keep_history_ = false;
  std::vector<SpurMeasurement> history_;
};

/// One-shot cost evaluation on a fresh session.
inline SpurMeasurement measure_cost(const PlantModel& model, const RegisterFile& file, const ToneSpec& tone,
                                    const CaptureConfig& cfg, std::uint64_t seed) {
  SpurMeter meter(model, tone, cfg, seed);
  return meter.measure(file);
}

}  // namespace tidac
