#pragma once

// Six-register digital control surface of the converter and its mapping onto
// the physical impairment vector.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tidac/dac.hpp"
#include "tidac/error.hpp"
#include "tidac/spectrum.hpp"

namespace tidac {

inline constexpr std::size_t kNumRegisters = 6;

enum class RegisterRole { kCurrentA = 0, kCurrentB, kDutyCoarse, kDutyFine, kPhaseA, kPhaseB };

inline constexpr std::array<std::string_view, kNumRegisters> kRegisterNames = {
    "current_a", "current_b", "duty_coarse", "duty_fine", "phase_a", "phase_b"};

inline std::string_view to_string(RegisterRole role) { return kRegisterNames[static_cast<std::size_t>(role)]; }

struct RegisterSpec {
  int address = 0;
  RegisterRole role = RegisterRole::kCurrentA;
  int width_bits = 8;
  int reset_value = 128;
  bool active = true;  // inactive registers are frozen at reset by the optimizers

  std::string_view name() const { return to_string(role); }
  int max_code() const { return (1 << width_bits) - 1; }
  int midscale() const { return 1 << (width_bits - 1); }
  bool in_range(int code) const { return code >= 0 && code <= max_code(); }

  bool operator==(const RegisterSpec&) const = default;
};

using StateVector = std::array<int, kNumRegisters>;

class RegisterMap {
 public:
  /// Six registers of `width_bits` each, reset to midscale, address == role index.
  static RegisterMap uniform(int width_bits = 8) {
    detail::require(width_bits >= 1 && width_bits <= 16, "register width must be in [1, 16] bits");
    RegisterMap map;
    for (std::size_t i = 0; i < kNumRegisters; ++i) {
      auto& s = map.specs_[i];
      s.address = static_cast<int>(i);
      s.role = static_cast<RegisterRole>(i);
      s.width_bits = width_bits;
      s.reset_value = s.midscale();
    }
    return map;
  }

  const RegisterSpec& operator[](std::size_t address) const { return specs_.at(address); }
  RegisterSpec& operator[](std::size_t address) { return specs_.at(address); }

  const RegisterSpec& spec(int address) const {
    if (address < 0 || address >= static_cast<int>(kNumRegisters))
      throw InvalidArgument("register address " + std::to_string(address) + " out of range [0, 5]");
    return specs_[static_cast<std::size_t>(address)];
  }

  std::vector<int> active_addresses() const {
    std::vector<int> out;
    for (const auto& s : specs_)
      if (s.active) out.push_back(s.address);
    return out;
  }

  void validate() const {
    std::array<bool, kNumRegisters> seen{};
    for (const auto& s : specs_) {
      detail::require(s.address >= 0 && s.address < static_cast<int>(kNumRegisters), "register address out of range");
      detail::require(!seen[static_cast<std::size_t>(s.address)], "duplicate register address");
      seen[static_cast<std::size_t>(s.address)] = true;
      detail::require(s.width_bits >= 1 && s.width_bits <= 16, "register width must be in [1, 16] bits");
      detail::require(s.in_range(s.reset_value), "register reset value outside its code range");
    }
  }

  auto begin() const { return specs_.begin(); }
  auto end() const { return specs_.end(); }

  bool operator==(const RegisterMap&) const = default;

 private:
  std::array<RegisterSpec, kNumRegisters> specs_{};
};

/// The state vector s: one code per register.
struct RegisterFile {
  RegisterMap map;
  StateVector values{};

  static RegisterFile reset(const RegisterMap& map) {
    RegisterFile f{map, {}};
    for (std::size_t i = 0; i < kNumRegisters; ++i) f.values[i] = map[i].reset_value;
    return f;
  }

  int operator[](std::size_t address) const { return values[address]; }

  bool operator==(const RegisterFile& other) const { return values == other.values; }
};

/// Line-oriented register transaction record, `W addr code` / `R addr code`.
class TransactionLog {
 public:
  struct Entry {
    char op = 'W';
    int address = 0;
    int code = 0;
    bool operator==(const Entry&) const = default;
  };

  void record(char op, int address, int code) { entries_.push_back({op, address, code}); }

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t writes() const {
    return static_cast<std::size_t>(std::count_if(entries_.begin(), entries_.end(), [](const Entry& e) { return e.op == 'W'; }));
  }

  std::string to_text() const {
    std::string out;
    for (const auto& e : entries_) {
      out += e.op;
      out += ' ' + std::to_string(e.address) + ' ' + std::to_string(e.code) + '\n';
    }
    return out;
  }

  static TransactionLog parse(std::string_view text) {
    TransactionLog log;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::string op;
      Entry e;
      if (!(ls >> op >> e.address >> e.code) || (op != "W" && op != "R"))
        throw Error("malformed transaction at line " + std::to_string(lineno) + ": '" + line + "'");
      e.op = op[0];
      log.entries_.push_back(e);
    }
    return log;
  }

  bool operator==(const TransactionLog&) const = default;

 private:
  std::vector<Entry> entries_;
};

/// Returns `file` with register `address` set to `code`; the file is left unchanged on error.
inline RegisterFile write_register(RegisterFile file, int address, int code, TransactionLog* log = nullptr) {
  const auto& spec = file.map.spec(address);
  if (!spec.in_range(code))
    throw InvalidArgument("code " + std::to_string(code) + " out of range for register " + std::string(spec.name()));
  file.values[static_cast<std::size_t>(address)] = code;
  if (log) log->record('W', address, code);
  return file;
}

inline int read_register(const RegisterFile& file, int address, TransactionLog* log = nullptr) {
  file.map.spec(address);
  const int code = file.values[static_cast<std::size_t>(address)];
  if (log) log->record('R', address, code);
  return code;
}

/// Physical change per register LSB.
struct PlantSteps {
  double current_a = 5e-4;     // gain per LSB
  double current_b = 5e-4;     // gain per LSB
  double duty_coarse = 2e-4;   // α per LSB
  double duty_fine = 2e-5;     // α per LSB
  double phase_a_s = 0.0;      // seconds per LSB
  double phase_b_s = 0.0;      // seconds per LSB

  static PlantSteps standard(const DacConfig& cfg) {
    PlantSteps s;
    s.phase_a_s = cfg.sample_period_s() / 2048.0;
    s.phase_b_s = cfg.sample_period_s() / 2048.0;
    return s;
  }

  bool operator==(const PlantSteps&) const = default;
};

inline constexpr double kMaxPlantAlpha = 0.45;
inline constexpr double kMinPlantGain = 1e-3;
inline constexpr double kMaxPlantSkewFraction = 0.99;

/// Affine register-to-impairment model of one uncalibrated converter.
struct PlantModel {
  DacConfig dac;
  ImpairmentState base;
  PlantSteps steps;
  RegisterMap registers = RegisterMap::uniform();

  /// Default uncalibrated converter: 2 % gain error, 1 % duty error, T_s/20 skew on sub-DAC A.
  static ImpairmentState standard_impairment(const DacConfig& cfg) {
    return {0.01, 1.02, 1.0, cfg.sample_period_s() / 20.0, 0.0};
  }

  static PlantModel standard(const DacConfig& cfg = {}) {
    return {cfg, standard_impairment(cfg), PlantSteps::standard(cfg), RegisterMap::uniform(8)};
  }

  /// Two active 4-bit registers (current_a, duty_coarse); the other four are frozen.
  static PlantModel toy(const DacConfig& cfg = {}) {
    PlantModel m{cfg, {0.01, 1.02, 1.0, 0.0, 0.0}, PlantSteps::standard(cfg), RegisterMap::uniform(8)};
    m.steps.current_a = 4e-3;
    m.steps.duty_coarse = 1.5e-3;
    for (auto role : {RegisterRole::kCurrentA, RegisterRole::kDutyCoarse}) {
      auto& s = m.registers[static_cast<std::size_t>(role)];
      s.width_bits = 4;
      s.reset_value = s.midscale();
    }
    for (auto role : {RegisterRole::kCurrentB, RegisterRole::kDutyFine, RegisterRole::kPhaseA, RegisterRole::kPhaseB})
      m.registers[static_cast<std::size_t>(role)].active = false;
    return m;
  }

  RegisterFile reset_file() const { return RegisterFile::reset(registers); }

  void validate() const {
    dac.validate();
    base.validate(dac);
    registers.validate();
  }

  bool operator==(const PlantModel&) const = default;
};

struct MappedImpairment {
  ImpairmentState state;
  bool clamped = false;
};

/// Affine map from register codes to impairments, clamped to the physically renderable range.
inline MappedImpairment map_registers(const PlantModel& model, const RegisterFile& file) {
  const auto delta = [&](RegisterRole r) {
    const auto i = static_cast<std::size_t>(r);
    return static_cast<double>(file.values[i] - model.registers[i].midscale());
  };
  const auto& st = model.steps;
  ImpairmentState s = model.base;
  s.gain_a += st.current_a * delta(RegisterRole::kCurrentA);
  s.gain_b += st.current_b * delta(RegisterRole::kCurrentB);
  s.alpha += st.duty_coarse * delta(RegisterRole::kDutyCoarse) + st.duty_fine * delta(RegisterRole::kDutyFine);
  s.skew_a_s += st.phase_a_s * delta(RegisterRole::kPhaseA);
  s.skew_b_s += st.phase_b_s * delta(RegisterRole::kPhaseB);

  const double skew_max = kMaxPlantSkewFraction * model.dac.sample_period_s();
  const ImpairmentState raw = s;
  s.alpha = std::clamp(s.alpha, -kMaxPlantAlpha, kMaxPlantAlpha);
  s.gain_a = std::max(s.gain_a, kMinPlantGain);
  s.gain_b = std::max(s.gain_b, kMinPlantGain);
  s.skew_a_s = std::clamp(s.skew_a_s, -skew_max, skew_max);
  s.skew_b_s = std::clamp(s.skew_b_s, -skew_max, skew_max);
  return {s, !(s == raw)};
}

inline ImpairmentState impairments_from_registers(const PlantModel& model, const RegisterFile& file) {
  return map_registers(model, file).state;
}

/// Register file that inverts the affine map onto the zero-error point (g_A = g_B, α = 0,
/// equal skews), rounded to the nearest codes. Only active registers are moved.
inline RegisterFile zero_error_registers(const PlantModel& model) {
  RegisterFile f = model.reset_file();
  const auto set = [&](RegisterRole r, double offset_lsb) {
    const auto i = static_cast<std::size_t>(r);
    const auto& spec = model.registers[i];
    if (!spec.active) return 0.0;
    const double target = spec.midscale() + offset_lsb;
    const int code = std::clamp(static_cast<int>(std::lround(target)), 0, spec.max_code());
    f.values[i] = code;
    return static_cast<double>(code - spec.midscale());
  };
  const auto& b = model.base;
  const auto& st = model.steps;
  const auto i = [](RegisterRole r) { return static_cast<std::size_t>(r); };

  set(RegisterRole::kCurrentA, (b.gain_b - b.gain_a) / st.current_a);
  const double coarse = set(RegisterRole::kDutyCoarse, -b.alpha / st.duty_coarse);
  if (model.registers[i(RegisterRole::kDutyFine)].active) {
    const double residual = b.alpha + coarse * st.duty_coarse;
    set(RegisterRole::kDutyFine, -residual / st.duty_fine);
  }
  if (st.phase_a_s > 0.0) set(RegisterRole::kPhaseA, (b.skew_b_s - b.skew_a_s) / st.phase_a_s);
  return f;
}

/// Coordinate descent on the analytic spur over the active registers.
inline RegisterFile local_search(const PlantModel& model, const ToneSpec& tone, RegisterFile start,
                                 int radius = 3) {
  const auto cost = [&](const RegisterFile& f) {
    return analytic_spur_dbc(model.dac, impairments_from_registers(model, f), tone);
  };
  double best = cost(start);
  bool improved = true;
  while (improved) {
    improved = false;
    for (int addr : model.registers.active_addresses()) {
      const auto& spec = model.registers.spec(addr);
      for (int d = -radius; d <= radius; ++d) {
        const int code = start.values[static_cast<std::size_t>(addr)] + d;
        if (d == 0 || !spec.in_range(code)) continue;
        auto trial = start;
        trial.values[static_cast<std::size_t>(addr)] = code;
        const double c = cost(trial);
        if (c < best) {
          best = c;
          start = trial;
          improved = true;
        }
      }
    }
  }
  return start;
}

/// Best register file found from the zero-error inverse; throws when it misses `threshold_dbc`.
inline RegisterFile verify_calibratable(const PlantModel& model, const ToneSpec& tone, double threshold_dbc = -60.0) {
  model.validate();
  const auto best = local_search(model, tone, zero_error_registers(model));
  const double spur = analytic_spur_dbc(model.dac, impairments_from_registers(model, best), tone);
  if (spur > threshold_dbc)
    throw Error("plant is not calibratable: best reachable spur " + std::to_string(spur) + " dBc");
  return best;
}

}  // namespace tidac
