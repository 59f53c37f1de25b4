#pragma once

// Batch experiments: calibration runs, Nyquist sweeps against the grid-search
// baseline, and level-curve export. Configuration is JSON.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "tidac/calibrator.hpp"
#include "tidac/contours.hpp"
#include "tidac/dac.hpp"
#include "tidac/error.hpp"
#include "tidac/spectrum.hpp"
#include "tidac/spur_meter.hpp"
#include "tidac/virtual_plant.hpp"

namespace tidac {

using Json = nlohmann::ordered_json;

/// Plant parameters with timing expressed in units of T_s so they survive a change of f_s.
struct PlantConfig {
  double alpha = 0.01;
  double gain_a = 1.02;
  double gain_b = 1.0;
  double skew_a_ts = 0.05;
  double skew_b_ts = 0.0;
  double current_a_step = 5e-4;
  double current_b_step = 5e-4;
  double duty_coarse_step = 2e-4;
  double duty_fine_step = 2e-5;
  double phase_a_step_ts = 1.0 / 2048.0;
  double phase_b_step_ts = 1.0 / 2048.0;
  int register_width_bits = 8;

  PlantModel build(const DacConfig& dac) const {
    const double ts = dac.sample_period_s();
    PlantModel m;
    m.dac = dac;
    m.base = {alpha, gain_a, gain_b, skew_a_ts * ts, skew_b_ts * ts};
    m.steps = {current_a_step, current_b_step, duty_coarse_step, duty_fine_step, phase_a_step_ts * ts,
               phase_b_step_ts * ts};
    m.registers = RegisterMap::uniform(register_width_bits);
    return m;
  }

  bool operator==(const PlantConfig&) const = default;
};

/// Sweep frequencies: an explicit list, or `count` log-spaced points over [start, stop].
struct SweepSpec {
  std::vector<double> freqs_hz;
  double start_hz = 1e9;
  double stop_hz = 24e9;
  int count = 12;

  std::vector<double> resolve(const DacConfig& dac) const {
    if (!freqs_hz.empty()) return freqs_hz;
    std::vector<double> out;
    const double tol = 1e-6 * dac.sample_rate_hz;
    for (int i = 0; i < count; ++i) {
      const double f = count == 1 ? start_hz
                                  : start_hz * std::pow(stop_hz / start_hz, static_cast<double>(i) / (count - 1));
      if (std::abs(f - dac.sample_rate_hz / 4.0) > tol) out.push_back(f);
    }
    return out;
  }

  bool operator==(const SweepSpec&) const = default;
};

struct GridConfig {
  std::array<int, kNumRegisters> counts = {7, 2, 4, 1, 5, 1};  // 280 lattice points
  std::size_t budget = 280;
  bool operator==(const GridConfig&) const = default;
};

struct ContourConfig {
  double threshold_dbc = -50.0;
  std::vector<double> freqs_hz;  // empty: the sweep frequencies
  int rows = 48;
  bool operator==(const ContourConfig&) const = default;
};

struct AcceptanceConfig {
  double max_post_cal_dbc = -50.0;  // verified spur every calibrated point must reach
  double min_pass_fraction = 0.95;  // fraction of seeds that must reach it
  double contour_tolerance_db = 0.1;
  bool operator==(const AcceptanceConfig&) const = default;
};

struct ExperimentConfig {
  DacConfig dac;
  PlantConfig plant;
  CaptureConfig capture;
  double tone_amplitude = 1.0;
  AnnealParams anneal = default_anneal();
  GridConfig grid;
  SweepSpec sweep;
  double calibrate_freq_hz = 20e9;
  ContourConfig contours;
  AcceptanceConfig acceptance;
  std::string output_dir = "out";
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  int threads = 0;  // 0: hardware concurrency

  static AnnealParams default_anneal() {
    AnnealParams p;
    p.stop_at_dbc = -55.0;
    return p;
  }

  PlantModel plant_model() const { return plant.build(dac); }

  std::vector<double> contour_freqs() const {
    return contours.freqs_hz.empty() ? sweep.resolve(dac) : contours.freqs_hz;
  }
};

inline bool operator==(const AnnealParams& a, const AnnealParams& b) {
  return a.t_max == b.t_max && a.t_min == b.t_min && a.t_min_ratio == b.t_min_ratio && a.gamma == b.gamma &&
         a.beta == b.beta && a.k_inner == b.k_inner && a.seed == b.seed && a.neighbor.mode == b.neighbor.mode &&
         a.neighbor.window == b.neighbor.window && a.remeasure_current == b.remeasure_current &&
         a.stop_at_dbc == b.stop_at_dbc && a.warmup_probes == b.warmup_probes &&
         a.warmup_accept == b.warmup_accept && a.count_warmup == b.count_warmup;
}

inline bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return a.dac == b.dac && a.plant == b.plant && a.capture == b.capture && a.tone_amplitude == b.tone_amplitude &&
         a.anneal == b.anneal && a.grid == b.grid && a.sweep == b.sweep && a.calibrate_freq_hz == b.calibrate_freq_hz &&
         a.contours == b.contours && a.acceptance == b.acceptance && a.output_dir == b.output_dir &&
         a.seeds == b.seeds && a.threads == b.threads;
}

// ---------------------------------------------------------------------------
// JSON encoding

inline std::string_view to_string(Window w) {
  switch (w) {
    case Window::kRectangular: return "rectangular";
    case Window::kBlackmanHarris: return "blackman-harris";
    default: return "auto";
  }
}

inline std::string_view to_string(NeighborMode m) { return m == NeighborMode::kWindow ? "window" : "full"; }

namespace detail {

inline Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

inline Json noise_to_json(double dbc) { return std::isfinite(dbc) ? Json(dbc) : Json("off"); }

}  // namespace detail

inline Json to_json(const ExperimentConfig& c) {
  Json j;
  j["dac"] = {{"sample_rate_hz", c.dac.sample_rate_hz},
              {"resolution_bits", c.dac.resolution_bits},
              {"full_scale", c.dac.full_scale}};
  const auto& p = c.plant;
  j["plant"] = {{"alpha", p.alpha},
                {"gain_a", p.gain_a},
                {"gain_b", p.gain_b},
                {"skew_a_ts", p.skew_a_ts},
                {"skew_b_ts", p.skew_b_ts},
                {"current_a_step", p.current_a_step},
                {"current_b_step", p.current_b_step},
                {"duty_coarse_step", p.duty_coarse_step},
                {"duty_fine_step", p.duty_fine_step},
                {"phase_a_step_ts", p.phase_a_step_ts},
                {"phase_b_step_ts", p.phase_b_step_ts},
                {"register_width_bits", p.register_width_bits}};
  j["capture"] = {{"fft_size", c.capture.fft_size},
                  {"oversample", c.capture.oversample},
                  {"coherent", c.capture.coherent},
                  {"window", to_string(c.capture.window)},
                  {"noise_floor_dbc", detail::noise_to_json(c.capture.noise_floor_dbc)},
                  {"start_offset_samples", c.capture.start_offset_samples}};
  j["tone_amplitude"] = c.tone_amplitude;
  const auto& a = c.anneal;
  j["anneal"] = {{"t_max", detail::optional_number(a.t_max)},
                 {"t_min", detail::optional_number(a.t_min)},
                 {"t_min_ratio", a.t_min_ratio},
                 {"gamma", a.gamma},
                 {"beta", a.beta},
                 {"k_inner", a.k_inner},
                 {"neighbor_mode", to_string(a.neighbor.mode)},
                 {"neighbor_window", a.neighbor.window},
                 {"remeasure_current", a.remeasure_current},
                 {"stop_at_dbc", detail::optional_number(a.stop_at_dbc)},
                 {"warmup_probes", a.warmup_probes},
                 {"warmup_accept", a.warmup_accept},
                 {"count_warmup", a.count_warmup}};
  j["grid"] = {{"counts", c.grid.counts}, {"budget", c.grid.budget}};
  if (!c.sweep.freqs_hz.empty())
    j["sweep"] = {{"freqs_hz", c.sweep.freqs_hz}};
  else
    j["sweep"] = {{"start_hz", c.sweep.start_hz}, {"stop_hz", c.sweep.stop_hz}, {"count", c.sweep.count}};
  j["calibrate_freq_hz"] = c.calibrate_freq_hz;
  j["contours"] = {{"threshold_dbc", c.contours.threshold_dbc},
                   {"freqs_hz", c.contours.freqs_hz},
                   {"rows", c.contours.rows}};
  j["acceptance"] = {{"max_post_cal_dbc", c.acceptance.max_post_cal_dbc},
                     {"min_pass_fraction", c.acceptance.min_pass_fraction},
                     {"contour_tolerance_db", c.acceptance.contour_tolerance_db}};
  j["output_dir"] = c.output_dir;
  j["seeds"] = c.seeds;
  j["threads"] = c.threads;
  return j;
}

namespace detail {

/// Reads fields out of a JSON tree, collecting every violation with its dotted path.
class FieldReader {
 public:
  explicit FieldReader(std::vector<std::string>& errors) : errors_(errors) {}

  template <class T>
  void read(const Json& obj, const std::string& path, const char* key, T& out, bool required = false) {
    const std::string full = path.empty() ? key : path + "." + key;
    if (!obj.is_object() || !obj.contains(key)) {
      if (required) errors_.push_back(full + ": required field missing");
      return;
    }
    try {
      out = obj.at(key).get<T>();
    } catch (const std::exception&) {
      errors_.push_back(full + ": wrong type (" + std::string(obj.at(key).type_name()) + ")");
    }
  }

  void read_optional(const Json& obj, const std::string& path, const char* key, std::optional<double>& out) {
    if (!obj.is_object() || !obj.contains(key)) return;
    const auto& v = obj.at(key);
    if (v.is_null()) {
      out.reset();
    } else if (v.is_number()) {
      out = v.get<double>();
    } else {
      errors_.push_back(path + "." + key + ": expected a number or null");
    }
  }

  const Json& section(const Json& root, const char* key) {
    static const Json empty = Json::object();
    if (!root.contains(key)) return empty;
    if (!root.at(key).is_object()) {
      errors_.push_back(std::string(key) + ": expected an object");
      return empty;
    }
    return root.at(key);
  }

  void check(bool ok, const std::string& message) {
    if (!ok) errors_.push_back(message);
  }

 private:
  std::vector<std::string>& errors_;
};

inline std::pair<std::size_t, std::size_t> line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace detail

/// Parses and validates a configuration document. Throws ConfigError listing every violation.
inline ExperimentConfig parse_config_text(const std::string& text) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const auto [line, col] = detail::line_col(text, e.byte == 0 ? 0 : e.byte - 1);
    std::string msg = e.what();
    throw ConfigError({"parse error at line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + msg});
  }
  if (!root.is_object()) throw ConfigError({"top level must be a JSON object"});

  std::vector<std::string> errors;
  detail::FieldReader rd(errors);
  ExperimentConfig c;

  rd.check(root.contains("dac"), "dac: required section missing");
  const auto& dac = rd.section(root, "dac");
  rd.read(dac, "dac", "sample_rate_hz", c.dac.sample_rate_hz, true);
  rd.read(dac, "dac", "resolution_bits", c.dac.resolution_bits, true);
  rd.read(dac, "dac", "full_scale", c.dac.full_scale);

  const auto& pl = rd.section(root, "plant");
  auto& p = c.plant;
  rd.read(pl, "plant", "alpha", p.alpha);
  rd.read(pl, "plant", "gain_a", p.gain_a);
  rd.read(pl, "plant", "gain_b", p.gain_b);
  rd.read(pl, "plant", "skew_a_ts", p.skew_a_ts);
  rd.read(pl, "plant", "skew_b_ts", p.skew_b_ts);
  rd.read(pl, "plant", "current_a_step", p.current_a_step);
  rd.read(pl, "plant", "current_b_step", p.current_b_step);
  rd.read(pl, "plant", "duty_coarse_step", p.duty_coarse_step);
  rd.read(pl, "plant", "duty_fine_step", p.duty_fine_step);
  rd.read(pl, "plant", "phase_a_step_ts", p.phase_a_step_ts);
  rd.read(pl, "plant", "phase_b_step_ts", p.phase_b_step_ts);
  rd.read(pl, "plant", "register_width_bits", p.register_width_bits);

  const auto& cap = rd.section(root, "capture");
  rd.read(cap, "capture", "fft_size", c.capture.fft_size);
  rd.read(cap, "capture", "oversample", c.capture.oversample);
  rd.read(cap, "capture", "coherent", c.capture.coherent);
  std::string window = std::string(to_string(c.capture.window));
  rd.read(cap, "capture", "window", window);
  if (window == "auto") c.capture.window = Window::kAuto;
  else if (window == "rectangular") c.capture.window = Window::kRectangular;
  else if (window == "blackman-harris") c.capture.window = Window::kBlackmanHarris;
  else errors.push_back("capture.window: expected auto, rectangular or blackman-harris");
  if (cap.contains("noise_floor_dbc")) {
    const auto& v = cap.at("noise_floor_dbc");
    if (v.is_string() && v.get<std::string>() == "off") c.capture.noise_floor_dbc = kNoiseOff;
    else if (v.is_number()) c.capture.noise_floor_dbc = v.get<double>();
    else errors.push_back("capture.noise_floor_dbc: expected a number or \"off\"");
  }
  rd.read(cap, "capture", "start_offset_samples", c.capture.start_offset_samples);

  rd.read(root, "", "tone_amplitude", c.tone_amplitude);

  const auto& an = rd.section(root, "anneal");
  auto& a = c.anneal;
  rd.read_optional(an, "anneal", "t_max", a.t_max);
  rd.read_optional(an, "anneal", "t_min", a.t_min);
  rd.read(an, "anneal", "t_min_ratio", a.t_min_ratio);
  rd.read(an, "anneal", "gamma", a.gamma);
  rd.read(an, "anneal", "beta", a.beta);
  rd.read(an, "anneal", "k_inner", a.k_inner);
  std::string mode = std::string(to_string(a.neighbor.mode));
  rd.read(an, "anneal", "neighbor_mode", mode);
  if (mode == "window") a.neighbor.mode = NeighborMode::kWindow;
  else if (mode == "full") a.neighbor.mode = NeighborMode::kFullRange;
  else errors.push_back("anneal.neighbor_mode: expected window or full");
  rd.read(an, "anneal", "neighbor_window", a.neighbor.window);
  rd.read(an, "anneal", "remeasure_current", a.remeasure_current);
  rd.read_optional(an, "anneal", "stop_at_dbc", a.stop_at_dbc);
  rd.read(an, "anneal", "warmup_probes", a.warmup_probes);
  rd.read(an, "anneal", "warmup_accept", a.warmup_accept);
  rd.read(an, "anneal", "count_warmup", a.count_warmup);

  const auto& gr = rd.section(root, "grid");
  rd.read(gr, "grid", "counts", c.grid.counts);
  rd.read(gr, "grid", "budget", c.grid.budget);

  const auto& sw = rd.section(root, "sweep");
  rd.read(sw, "sweep", "freqs_hz", c.sweep.freqs_hz);
  rd.read(sw, "sweep", "start_hz", c.sweep.start_hz);
  rd.read(sw, "sweep", "stop_hz", c.sweep.stop_hz);
  rd.read(sw, "sweep", "count", c.sweep.count);

  rd.read(root, "", "calibrate_freq_hz", c.calibrate_freq_hz);

  const auto& co = rd.section(root, "contours");
  rd.read(co, "contours", "threshold_dbc", c.contours.threshold_dbc);
  rd.read(co, "contours", "freqs_hz", c.contours.freqs_hz);
  rd.read(co, "contours", "rows", c.contours.rows);

  const auto& ac = rd.section(root, "acceptance");
  rd.read(ac, "acceptance", "max_post_cal_dbc", c.acceptance.max_post_cal_dbc);
  rd.read(ac, "acceptance", "min_pass_fraction", c.acceptance.min_pass_fraction);
  rd.read(ac, "acceptance", "contour_tolerance_db", c.acceptance.contour_tolerance_db);

  rd.read(root, "", "output_dir", c.output_dir);
  rd.read(root, "", "seeds", c.seeds, true);
  rd.read(root, "", "threads", c.threads);

  if (!errors.empty()) throw ConfigError(errors);

  // Semantic validation, again collecting everything.
  const auto guard = [&](const std::string& prefix, auto&& fn) {
    try {
      fn();
    } catch (const InvalidArgument& e) {
      errors.push_back(prefix + ": " + e.what());
    }
  };
  guard("dac", [&] { c.dac.validate(); });
  guard("capture", [&] { c.capture.validate(); });
  guard("anneal", [&] { c.anneal.validate(); });
  guard("plant", [&] { c.plant_model().validate(); });
  guard("grid", [&] { GridSpec::centered(RegisterMap::uniform(c.plant.register_width_bits), c.grid.counts); });
  rd.check(c.plant.register_width_bits >= 1 && c.plant.register_width_bits <= 16,
           "plant.register_width_bits: must be in [1, 16]");
  rd.check(c.tone_amplitude > 0 && c.tone_amplitude <= 1, "tone_amplitude: must lie in (0, 1]");
  rd.check(!c.seeds.empty(), "seeds: at least one seed required");
  rd.check(c.threads >= 0, "threads: must be >= 0");
  rd.check(c.sweep.count >= 1 && c.sweep.start_hz > 0 && c.sweep.stop_hz >= c.sweep.start_hz,
           "sweep: need count >= 1 and 0 < start_hz <= stop_hz");
  rd.check(c.contours.threshold_dbc < 0 && c.contours.threshold_dbc > kSpurFloorDbc,
           "contours.threshold_dbc: must lie in (-200, 0)");
  rd.check(c.contours.rows >= 1, "contours.rows: must be >= 1");

  const auto check_tone = [&](const std::string& where, double f) {
    const double fs = c.dac.sample_rate_hz;
    if (std::abs(f - fs / 4.0) <= 1e-9 * fs) {
      errors.push_back(where + ": " + std::to_string(f) +
                       " Hz equals f_s/4, where the interleave image coincides with the carrier");
      return;
    }
    if (!(f > 0 && f < fs / 2)) errors.push_back(where + ": " + std::to_string(f) + " Hz is outside (0, f_s/2)");
  };
  if (c.dac.sample_rate_hz > 0) {
    check_tone("calibrate_freq_hz", c.calibrate_freq_hz);
    if (c.sweep.count >= 1 && c.sweep.start_hz > 0)
      for (double f : c.sweep.resolve(c.dac)) check_tone("sweep", f);
    for (double f : c.contours.freqs_hz) check_tone("contours.freqs_hz", f);
  }
  if (!errors.empty()) throw ConfigError(errors);
  return c;
}

inline ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot open config file " + path.string()});
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

/// FNV-1a over the canonical JSON encoding.
inline std::string config_hash(const ExperimentConfig& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_json(c).dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

// ---------------------------------------------------------------------------
// Execution helpers

namespace detail {

/// Runs jobs [0, n) on a small worker pool; results must be written by index.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& job) {
  std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads) : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

inline std::uint64_t noise_seed(std::uint64_t seed) { return seed * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL; }

inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

inline double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

inline std::string format_double(double x) {
  std::ostringstream os;
  os.precision(10);
  os << x;
  return os.str();
}

}  // namespace detail

/// Noiseless spur of a register file, the figure reported as "post-calibration".
inline double verified_spur_dbc(const PlantModel& plant, const ToneSpec& tone, const CaptureConfig& capture,
                                const RegisterFile& file) {
  CaptureConfig quiet = capture;
  quiet.noise_floor_dbc = kNoiseOff;
  return measure_cost(plant, file, tone, quiet, 0).spur_dbc;
}

struct CalibrationRun {
  std::uint64_t seed = 0;
  AnnealResult result;
  double verified_dbc = 0.0;
};

/// Anneals once from the reset registers at `freq_hz`.
inline CalibrationRun run_calibration(const ExperimentConfig& cfg, const PlantModel& plant, double freq_hz,
                                      std::uint64_t seed, bool keep_history = false,
                                      std::vector<SpurMeasurement>* history = nullptr) {
  SpurMeter meter(plant, {freq_hz, cfg.tone_amplitude}, cfg.capture, detail::noise_seed(seed));
  meter.keep_history(keep_history);
  AnnealParams p = cfg.anneal;
  p.seed = seed;
  CalibrationRun run;
  run.seed = seed;
  run.result = anneal(meter, p, plant.reset_file());
  run.verified_dbc = verified_spur_dbc(plant, meter.tone(), cfg.capture, run.result.best_state);
  if (history) *history = meter.history();
  return run;
}

inline Json state_json(const RegisterFile& f) { return Json(f.values); }

/// Calibrates at `calibrate_freq_hz` once per seed. Writes `calibrate_report.json`,
/// `trace_seed<N>.csv` and `measurements_seed<N>.csv` into the output directory.
inline Json cmd_calibrate(const ExperimentConfig& cfg, bool write_files = true) {
  const PlantModel plant = cfg.plant_model();
  verify_calibratable(plant, {cfg.calibrate_freq_hz, cfg.tone_amplitude});
  std::vector<CalibrationRun> runs(cfg.seeds.size());
  std::vector<std::vector<SpurMeasurement>> histories(cfg.seeds.size());
  detail::parallel_for(cfg.seeds.size(), cfg.threads, [&](std::size_t i) {
    runs[i] = run_calibration(cfg, plant, cfg.calibrate_freq_hz, cfg.seeds[i], write_files, &histories[i]);
  });

  const ToneSpec tone = cfg.capture.coherent
                            ? snap_coherent({cfg.calibrate_freq_hz, cfg.tone_amplitude}, cfg.capture, cfg.dac)
                            : ToneSpec{cfg.calibrate_freq_hz, cfg.tone_amplitude};
  const double pre = verified_spur_dbc(plant, tone, cfg.capture, plant.reset_file());

  Json per_seed = Json::array();
  std::vector<double> spurs, counts;
  int passing = 0;
  for (const auto& r : runs) {
    spurs.push_back(r.verified_dbc);
    counts.push_back(r.result.measurement_count);
    if (r.verified_dbc <= cfg.acceptance.max_post_cal_dbc) ++passing;
    per_seed.push_back({{"seed", r.seed},
                        {"best_measured_dbc", r.result.best_dbc},
                        {"post_cal_dbc", r.verified_dbc},
                        {"measurement_count", r.result.measurement_count},
                        {"warmup_measurements", r.result.warmup_measurements},
                        {"outer_iterations", r.result.outer_iterations},
                        {"stopped_early", r.result.stopped_early},
                        {"best_state", state_json(r.result.best_state)}});
  }
  const double pass_fraction = static_cast<double>(passing) / static_cast<double>(runs.size());
  Json report;
  report["command"] = "calibrate";
  report["config_hash"] = config_hash(cfg);
  report["seeds"] = cfg.seeds;
  report["f_out_hz"] = tone.freq_hz;
  report["pre_cal_dbc"] = pre;
  report["runs"] = per_seed;
  report["summary"] = {{"post_cal_mean_dbc", detail::mean(spurs)},
                       {"post_cal_std_db", detail::stddev(spurs)},
                       {"post_cal_worst_dbc", *std::max_element(spurs.begin(), spurs.end())},
                       {"measurement_count_mean", detail::mean(counts)},
                       {"measurement_count_std", detail::stddev(counts)},
                       {"pass_fraction", pass_fraction}};
  report["acceptance"] = {{"max_post_cal_dbc", cfg.acceptance.max_post_cal_dbc},
                          {"min_pass_fraction", cfg.acceptance.min_pass_fraction},
                          {"passed", pass_fraction >= cfg.acceptance.min_pass_fraction}};

  if (write_files) {
    const std::filesystem::path dir = cfg.output_dir;
    for (std::size_t i = 0; i < runs.size(); ++i) {
      std::ostringstream trace, meas;
      write_trace_csv(trace, runs[i].result);
      detail::write_file_atomic(dir / ("trace_seed" + std::to_string(runs[i].seed) + ".csv"), trace.str());
      meas << "index,f_out_hz,spur_dbc,cost_linear\n";
      meas.precision(17);
      for (const auto& m : histories[i])
        meas << m.measurement_index << ',' << m.tone.freq_hz << ',' << m.spur_dbc << ',' << m.image_power << '\n';
      detail::write_file_atomic(dir / ("measurements_seed" + std::to_string(runs[i].seed) + ".csv"), meas.str());
    }
    detail::write_file_atomic(dir / "calibrate_report.json", report.dump(2) + "\n");
  }
  return report;
}

struct SweepPoint {
  double f_out_hz = 0.0;
  double pre_cal_dbc = 0.0;
  std::vector<double> sa_dbc, sa_count, grid_dbc, grid_count;
};

/// Pre-calibration, annealed and grid-searched spur at every sweep frequency and seed.
inline std::vector<SweepPoint> run_sweep(const ExperimentConfig& cfg) {
  const PlantModel plant = cfg.plant_model();
  const auto freqs = cfg.sweep.resolve(cfg.dac);
  const std::size_t ns = cfg.seeds.size();
  std::vector<SweepPoint> points(freqs.size());
  for (auto& pt : points) {
    pt.sa_dbc.resize(ns);
    pt.sa_count.resize(ns);
    pt.grid_dbc.resize(ns);
    pt.grid_count.resize(ns);
  }
  const GridSpec grid = GridSpec::centered(plant.registers, cfg.grid.counts);
  for (double f : freqs) verify_calibratable(plant, {f, cfg.tone_amplitude});

  detail::parallel_for(freqs.size() * ns, cfg.threads, [&](std::size_t job) {
    const std::size_t fi = job / ns;
    const std::size_t si = job % ns;
    const std::uint64_t seed = cfg.seeds[si];
    auto& pt = points[fi];
    const auto sa = run_calibration(cfg, plant, freqs[fi], seed);
    pt.sa_dbc[si] = sa.verified_dbc;
    pt.sa_count[si] = sa.result.measurement_count;

    SpurMeter meter(plant, {freqs[fi], cfg.tone_amplitude}, cfg.capture, detail::noise_seed(seed) ^ 0x5bd1e995ULL);
    const auto g = grid_search(meter, plant.registers, grid, cfg.grid.budget);
    pt.grid_dbc[si] = verified_spur_dbc(plant, meter.tone(), cfg.capture, g.best_state);
    pt.grid_count[si] = g.measurement_count;
    if (si == 0) {
      pt.f_out_hz = meter.tone().freq_hz;
      pt.pre_cal_dbc = verified_spur_dbc(plant, meter.tone(), cfg.capture, plant.reset_file());
    }
  });
  return points;
}

/// Nyquist sweep. Writes `sweep.csv` (one row per frequency), `sweep_runs.csv` (one row per
/// frequency and seed) and `sweep_report.json`.
inline Json cmd_sweep(const ExperimentConfig& cfg, bool write_files = true) {
  const auto points = run_sweep(cfg);
  std::ostringstream rows, runs;
  rows << "f_out_hz,pre_cal_dbc,sa_mean_dbc,sa_worst_dbc,sa_pass_fraction,sa_mean_count,grid_mean_dbc,"
          "grid_worst_dbc,grid_count\n";
  runs << "f_out_hz,seed,sa_dbc,sa_count,grid_dbc,grid_count\n";
  Json freq_rows = Json::array();
  bool all_pass = true;
  for (const auto& pt : points) {
    const auto pass = static_cast<double>(std::count_if(pt.sa_dbc.begin(), pt.sa_dbc.end(), [&](double d) {
                        return d <= cfg.acceptance.max_post_cal_dbc;
                      })) /
                      static_cast<double>(pt.sa_dbc.size());
    all_pass = all_pass && pass >= cfg.acceptance.min_pass_fraction;
    const double sa_worst = *std::max_element(pt.sa_dbc.begin(), pt.sa_dbc.end());
    const double grid_worst = *std::max_element(pt.grid_dbc.begin(), pt.grid_dbc.end());
    using detail::format_double;
    rows << format_double(pt.f_out_hz) << ',' << format_double(pt.pre_cal_dbc) << ','
         << format_double(detail::mean(pt.sa_dbc)) << ',' << format_double(sa_worst) << ',' << format_double(pass)
         << ',' << format_double(detail::mean(pt.sa_count)) << ',' << format_double(detail::mean(pt.grid_dbc)) << ','
         << format_double(grid_worst) << ',' << format_double(detail::mean(pt.grid_count)) << '\n';
    for (std::size_t s = 0; s < cfg.seeds.size(); ++s)
      runs << format_double(pt.f_out_hz) << ',' << cfg.seeds[s] << ',' << format_double(pt.sa_dbc[s]) << ','
           << pt.sa_count[s] << ',' << format_double(pt.grid_dbc[s]) << ',' << pt.grid_count[s] << '\n';
    freq_rows.push_back({{"f_out_hz", pt.f_out_hz},
                         {"pre_cal_dbc", pt.pre_cal_dbc},
                         {"sa_mean_dbc", detail::mean(pt.sa_dbc)},
                         {"sa_worst_dbc", sa_worst},
                         {"sa_pass_fraction", pass},
                         {"sa_mean_count", detail::mean(pt.sa_count)},
                         {"grid_mean_dbc", detail::mean(pt.grid_dbc)},
                         {"grid_worst_dbc", grid_worst},
                         {"grid_count", detail::mean(pt.grid_count)}});
  }
  Json report;
  report["command"] = "sweep";
  report["config_hash"] = config_hash(cfg);
  report["seeds"] = cfg.seeds;
  report["csv_columns"] = "f_out_hz,pre_cal_dbc,sa_mean_dbc,sa_worst_dbc,sa_pass_fraction,sa_mean_count,"
                          "grid_mean_dbc,grid_worst_dbc,grid_count";
  report["rows"] = freq_rows;
  report["acceptance"] = {{"max_post_cal_dbc", cfg.acceptance.max_post_cal_dbc},
                          {"min_pass_fraction", cfg.acceptance.min_pass_fraction},
                          {"passed", all_pass}};
  if (write_files) {
    const std::filesystem::path dir = cfg.output_dir;
    detail::write_file_atomic(dir / "sweep.csv", rows.str());
    detail::write_file_atomic(dir / "sweep_runs.csv", runs.str());
    detail::write_file_atomic(dir / "sweep_report.json", report.dump(2) + "\n");
  }
  return report;
}

struct ContourResult {
  double f_out_hz = 0.0;
  std::vector<LevelPoint> points;
  double max_abs_error_db = 0.0;  // re-evaluation error against the threshold
};

inline std::vector<ContourResult> run_contours(const ExperimentConfig& cfg) {
  const auto freqs = cfg.contour_freqs();
  std::vector<ContourResult> out(freqs.size());
  detail::parallel_for(out.size(), cfg.threads, [&](std::size_t i) {
    const ToneSpec tone{freqs[i], cfg.tone_amplitude};
    LevelCurveGrid grid;
    grid.rows = cfg.contours.rows;
    auto& r = out[i];
    r.f_out_hz = tone.freq_hz;
    r.points = level_curve(cfg.dac, tone, cfg.contours.threshold_dbc, grid);
    for (const auto& p : r.points) {
      const double s = worst_case_spur_dbc(cfg.dac, tone, p.gain_error_pct / 100.0, p.duty_error_pct / 100.0);
      r.max_abs_error_db = std::max(r.max_abs_error_db, std::abs(s - cfg.contours.threshold_dbc));
    }
  });
  return out;
}

inline std::string contour_file_name(double f_out_hz) {
  return "contour_" + std::to_string(std::llround(f_out_hz / 1e6)) + "MHz.csv";
}

/// Level curves, one `contour_<f>MHz.csv` per frequency (`gain_error_pct,duty_error_pct`).
inline Json cmd_contours(const ExperimentConfig& cfg, bool write_files = true) {
  const auto curves = run_contours(cfg);
  Json items = Json::array();
  bool ok = true;
  for (const auto& c : curves) {
    ok = ok && c.max_abs_error_db <= cfg.acceptance.contour_tolerance_db;
    double max_gain = 0.0, max_duty = 0.0;
    for (const auto& p : c.points) {
      max_gain = std::max(max_gain, p.gain_error_pct);
      max_duty = std::max(max_duty, p.duty_error_pct);
    }
    items.push_back({{"f_out_hz", c.f_out_hz},
                     {"file", contour_file_name(c.f_out_hz)},
                     {"points", c.points.size()},
                     {"max_gain_error_pct", max_gain},
                     {"max_duty_error_pct", max_duty},
                     {"max_abs_error_db", c.max_abs_error_db}});
    if (write_files) {
      std::ostringstream csv;
      csv << "gain_error_pct,duty_error_pct\n";
      csv.precision(12);
      for (const auto& p : c.points) csv << p.gain_error_pct << ',' << p.duty_error_pct << '\n';
      detail::write_file_atomic(std::filesystem::path(cfg.output_dir) / contour_file_name(c.f_out_hz), csv.str());
    }
  }
  Json report;
  report["command"] = "contours";
  report["config_hash"] = config_hash(cfg);
  report["seeds"] = cfg.seeds;
  report["threshold_dbc"] = cfg.contours.threshold_dbc;
  report["curves"] = items;
  report["acceptance"] = {{"contour_tolerance_db", cfg.acceptance.contour_tolerance_db}, {"passed", ok}};
  if (write_files)
    detail::write_file_atomic(std::filesystem::path(cfg.output_dir) / "contours_report.json", report.dump(2) + "\n");
  return report;
}

}  // namespace tidac
