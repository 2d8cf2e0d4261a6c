#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "qkdsim/core.hpp"
#include "qkdsim/distill.hpp"
#include "qkdsim/environment.hpp"
#include "qkdsim/optics.hpp"
#include "qkdsim/stabilizer.hpp"

namespace qkdsim {

struct StabilizerSettings {
  bool enabled = true;
  double trial_period_s = 10.0;
  int dwell_epochs = 3;
  std::vector<TunableParameter> parameters = default_tunable_parameters();
};

struct DistillSettings {
  std::int64_t block_bits = 100000;
  double sample_fraction = 0.05;
  std::int64_t sample_floor_bits = 100;
  double period_s = 0.0;  // 0 = auto-scaled with run duration
  RateFormula formula = RateFormula::Calibrated;
  double ec_inefficiency_f = 1.1;
  double kappa = 0.64048;
  bool subtract_leakage_in_calibrated = false;
  int cascade_passes = 4;
};

struct ChannelScenario {
  ChannelHardware hardware;
  OperatingPoint initial_op;
};

struct ScenarioConfig {
  std::vector<ChannelScenario> channels;
  FiberModel fiber;
  EnvironmentModel environment;
  StabilizerSettings stabilizer;
  DistillSettings distill;
  double duration_s = 7200.0;
  double epoch_s = 1.0;
  SimMode mode = SimMode::RateLevel;
  std::uint64_t seed = 1;
  std::uint64_t pulse_mc_gate_cap = 200'000'000;
  double checkpoint_period_s = 3600.0;
  std::string out_dir;
};

/// Distillation sampling cadence: explicit when configured, otherwise
/// auto-scaled so a run of any length distills about 720 blocks per channel.
inline double distill_period_s(const ScenarioConfig& cfg) {
  if (cfg.distill.period_s > 0.0) return cfg.distill.period_s;
  return std::max(10.0, cfg.duration_s / 720.0);
}

namespace cfgdetail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

using Section = std::map<std::string, std::string>;
using IniData = std::map<std::string, Section>;

inline IniData parse_ini(const std::string& text) {
  IniData data;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  bool any_content = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t comment = line.find_first_of("#;");
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    any_content = true;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("config parse error at line " + std::to_string(line_no) +
                          ": unterminated section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) {
        throw ConfigError("config parse error at line " + std::to_string(line_no) +
                          ": empty section name");
      }
      data[section];
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config parse error at line " + std::to_string(line_no) +
                        ": expected key = value");
    }
    if (section.empty()) {
      throw ConfigError("config parse error at line " + std::to_string(line_no) +
                        ": key outside any [section]");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("config parse error at line " + std::to_string(line_no) +
                        ": empty key");
    }
    data[section][key] = value;
  }
  if (!any_content) throw ConfigError("config parse error: empty file");
  return data;
}

// Field reader that records violations instead of throwing, so a load
// reports every problem at once.
class FieldReader {
 public:
  FieldReader(IniData& data, std::vector<std::string>& problems)
      : data_(data), problems_(problems) {}

  bool has_section(const std::string& s) const { return data_.count(s) > 0; }

  void use_section(const std::string& s) { used_sections_.push_back(s); }

  double get_double(const std::string& sec, const std::string& key, double fallback) {
    const std::string* raw = fetch(sec, key);
    if (!raw) return fallback;
    char* end = nullptr;
    const double v = std::strtod(raw->c_str(), &end);
    if (end == raw->c_str() || *end != '\0') {
      problems_.push_back(sec + "." + key + ": not a number: '" + *raw + "'");
      return fallback;
    }
    return v;
  }

  std::int64_t get_int(const std::string& sec, const std::string& key,
                       std::int64_t fallback) {
    const double v = get_double(sec, key, static_cast<double>(fallback));
    if (std::floor(v) != v) {
      problems_.push_back(sec + "." + key + ": expected an integer");
      return fallback;
    }
    return static_cast<std::int64_t>(v);
  }

  std::uint64_t get_uint(const std::string& sec, const std::string& key,
                         std::uint64_t fallback) {
    const std::string* raw = fetch(sec, key);
    if (!raw) return fallback;
    try {
      return std::stoull(*raw);
    } catch (const std::exception&) {
      problems_.push_back(sec + "." + key + ": not an unsigned integer: '" + *raw + "'");
      return fallback;
    }
  }

  bool get_bool(const std::string& sec, const std::string& key, bool fallback) {
    const std::string* raw = fetch(sec, key);
    if (!raw) return fallback;
    if (*raw == "true" || *raw == "1") return true;
    if (*raw == "false" || *raw == "0") return false;
    problems_.push_back(sec + "." + key + ": expected true/false");
    return fallback;
  }

  std::string get_string(const std::string& sec, const std::string& key,
                         const std::string& fallback) {
    const std::string* raw = fetch(sec, key);
    return raw ? *raw : fallback;
  }

  void complain_unused() {
    for (auto& [sec, kv] : data_) {
      if (std::find(used_sections_.begin(), used_sections_.end(), sec) ==
          used_sections_.end()) {
        problems_.push_back("unknown section [" + sec + "]");
        continue;
      }
      for (auto& [key, value] : kv) {
        if (!consumed_.count(sec + "\n" + key)) {
          problems_.push_back(sec + "." + key + ": unknown key");
        }
      }
    }
  }

 private:
  const std::string* fetch(const std::string& sec, const std::string& key) {
    auto s = data_.find(sec);
    if (s == data_.end()) return nullptr;
    auto k = s->second.find(key);
    if (k == s->second.end()) return nullptr;
    consumed_.insert(sec + "\n" + key);
    return &k->second;
  }

  IniData& data_;
  std::vector<std::string>& problems_;
  std::vector<std::string> used_sections_;
  std::set<std::string> consumed_;
};

inline DriftProcess read_drift(FieldReader& r, const std::string& sec,
                               std::vector<std::string>& problems,
                               const DriftProcess& defaults) {
  r.use_section(sec);
  const double mean = r.get_double(sec, "mean", defaults.mean);
  const double tau = r.get_double(sec, "relaxation_time_s", defaults.relaxation_time_s);
  const double sigma = r.get_double(sec, "stationary_sigma", defaults.stationary_sigma);
  const double amp = r.get_double(sec, "diurnal_amplitude", defaults.diurnal_amplitude);
  const double phase = r.get_double(sec, "diurnal_phase_s", defaults.diurnal_phase_s);
  const double initial = r.get_double(sec, "initial", defaults.ou_state);
  if (!(tau > 0.0)) problems.push_back(sec + ".relaxation_time_s: must be > 0");
  if (sigma < 0.0) problems.push_back(sec + ".stationary_sigma: must be >= 0");
  if (amp < 0.0) problems.push_back(sec + ".diurnal_amplitude: must be >= 0");
  DriftProcess p;
  try {
    p = make_drift_process(mean, tau > 0.0 ? tau : 1.0, std::max(sigma, 0.0),
                           std::max(amp, 0.0), phase, initial);
  } catch (const ConfigError& e) {
    problems.push_back(std::string(sec) + ": " + e.what());
  }
  return p;
}

}  // namespace cfgdetail

/// Parses and fully validates a scenario. Throws ConfigError carrying every
/// violated constraint, one per line.
inline ScenarioConfig parse_scenario(const std::string& text) {
  cfgdetail::IniData ini = cfgdetail::parse_ini(text);
  std::vector<std::string> problems;
  cfgdetail::FieldReader r(ini, problems);
  ScenarioConfig cfg;

  // [run]
  r.use_section("run");
  cfg.duration_s = r.get_double("run", "duration_s", cfg.duration_s);
  cfg.epoch_s = r.get_double("run", "epoch_s", cfg.epoch_s);
  const std::string mode = r.get_string("run", "mode", "rate_level");
  if (mode == "rate_level") {
    cfg.mode = SimMode::RateLevel;
  } else if (mode == "pulse_mc") {
    cfg.mode = SimMode::PulseMc;
  } else {
    problems.push_back("run.mode: expected rate_level or pulse_mc");
  }
  cfg.seed = r.get_uint("run", "seed", cfg.seed);
  cfg.pulse_mc_gate_cap = r.get_uint("run", "pulse_mc_gate_cap", cfg.pulse_mc_gate_cap);
  cfg.checkpoint_period_s =
      r.get_double("run", "checkpoint_period_s", cfg.checkpoint_period_s);
  cfg.out_dir = r.get_string("run", "out_dir", cfg.out_dir);
  if (!(cfg.epoch_s > 0.0)) problems.push_back("run.epoch_s: must be > 0");
  if (!(cfg.duration_s >= cfg.epoch_s)) {
    problems.push_back("run.duration_s: must be >= epoch_s");
  }
  if (cfg.checkpoint_period_s < 0.0) {
    problems.push_back("run.checkpoint_period_s: must be >= 0");
  }

  // [fiber]
  r.use_section("fiber");
  cfg.fiber.length_km = r.get_double("fiber", "length_km", cfg.fiber.length_km);
  cfg.fiber.loss_db = r.get_double("fiber", "loss_db", cfg.fiber.loss_db);
  cfg.fiber.polarization_daylight_boost = r.get_double(
      "fiber", "polarization_daylight_boost", cfg.fiber.polarization_daylight_boost);
  if (cfg.fiber.loss_db < 0.0) problems.push_back("fiber.loss_db: must be >= 0");
  if (cfg.fiber.length_km < 0.0) problems.push_back("fiber.length_km: must be >= 0");
  if (cfg.fiber.polarization_daylight_boost < 1.0) {
    problems.push_back("fiber.polarization_daylight_boost: must be >= 1");
  }

  // [environment]
  r.use_section("environment");
  cfg.environment.daylight_start_s = r.get_double("environment", "daylight_start_s",
                                                  cfg.environment.daylight_start_s);
  cfg.environment.daylight_end_s =
      r.get_double("environment", "daylight_end_s", cfg.environment.daylight_end_s);
  if (cfg.environment.daylight_start_s < 0.0 ||
      cfg.environment.daylight_end_s > kSecondsPerDay ||
      cfg.environment.daylight_start_s > cfg.environment.daylight_end_s) {
    problems.push_back("environment: daylight window must satisfy 0 <= start <= end <= 86400");
  }

  // drift processes; shipped defaults reproduce a ~50 ps daily delay swing
  // and a ~0.02 K interferometer temperature error.
  {
    DriftProcess d;
    d = make_drift_process(0.0, 7200.0, 5.0, 25.0, 0.0, 0.0);
    cfg.environment.fiber_delay_ps =
        cfgdetail::read_drift(r, "drift.fiber_delay_ps", problems, d);
    d = make_drift_process(0.0, 1800.0, 0.2, 0.3, 0.0, 0.0);
    cfg.environment.polarization_rad =
        cfgdetail::read_drift(r, "drift.polarization_rad", problems, d);
    d = make_drift_process(0.0, 7200.0, 0.02, 0.05, 0.0, 0.0);
    cfg.environment.amzi_temp_k =
        cfgdetail::read_drift(r, "drift.amzi_temp_K", problems, d);
    d = make_drift_process(0.0, 21600.0, 0.1, 0.2, 0.0, 0.0);
    cfg.environment.bias = cfgdetail::read_drift(r, "drift.bias", problems, d);
  }

  // [stabilizer]
  r.use_section("stabilizer");
  cfg.stabilizer.enabled = r.get_bool("stabilizer", "enabled", cfg.stabilizer.enabled);
  cfg.stabilizer.trial_period_s =
      r.get_double("stabilizer", "trial_period_s", cfg.stabilizer.trial_period_s);
  cfg.stabilizer.dwell_epochs = static_cast<int>(
      r.get_int("stabilizer", "dwell_epochs", cfg.stabilizer.dwell_epochs));
  {
    auto& pars = cfg.stabilizer.parameters;
    pars[0].step = r.get_double("stabilizer", "timing_step_ps", pars[0].step);
    pars[0].min_value = r.get_double("stabilizer", "timing_min_ps", pars[0].min_value);
    pars[0].max_value = r.get_double("stabilizer", "timing_max_ps", pars[0].max_value);
    pars[1].step = r.get_double("stabilizer", "bias_step", pars[1].step);
    pars[1].min_value = r.get_double("stabilizer", "bias_min", pars[1].min_value);
    pars[1].max_value = r.get_double("stabilizer", "bias_max", pars[1].max_value);
    pars[2].step = r.get_double("stabilizer", "temperature_step_K", pars[2].step);
    pars[2].min_value =
        r.get_double("stabilizer", "temperature_min_K", pars[2].min_value);
    pars[2].max_value =
        r.get_double("stabilizer", "temperature_max_K", pars[2].max_value);
    pars[3].step = r.get_double("stabilizer", "phase_step_rad", pars[3].step);
    pars[3].min_value = r.get_double("stabilizer", "phase_min_rad", pars[3].min_value);
    pars[3].max_value = r.get_double("stabilizer", "phase_max_rad", pars[3].max_value);
    for (TunableParameter& p : pars) {
      p.dwell_epochs = cfg.stabilizer.dwell_epochs;
      if (!(p.step > 0.0)) {
        problems.push_back(std::string("stabilizer: ") + param_name(p.id) +
                           " step must be > 0");
      }
      if (!(p.min_value < p.max_value)) {
        problems.push_back(std::string("stabilizer: ") + param_name(p.id) +
                           " bounds must be ordered");
      }
    }
  }
  if (cfg.stabilizer.dwell_epochs < 1) {
    problems.push_back("stabilizer.dwell_epochs: must be >= 1");
  }
  if (!(cfg.stabilizer.trial_period_s > 0.0)) {
    problems.push_back("stabilizer.trial_period_s: must be > 0");
  } else if (cfg.epoch_s > 0.0) {
    const double slots = cfg.stabilizer.trial_period_s / cfg.epoch_s;
    if (std::abs(slots - std::round(slots)) > 1e-9) {
      problems.push_back("stabilizer.trial_period_s: must be a multiple of epoch_s");
    } else if (std::llround(slots) < 3 * cfg.stabilizer.dwell_epochs) {
      problems.push_back(
          "stabilizer.trial_period_s: slot must hold 3*dwell_epochs epochs");
    }
  }

  // [distill]
  r.use_section("distill");
  cfg.distill.block_bits = r.get_int("distill", "block_bits", cfg.distill.block_bits);
  cfg.distill.sample_fraction =
      r.get_double("distill", "sample_fraction", cfg.distill.sample_fraction);
  cfg.distill.sample_floor_bits =
      r.get_int("distill", "sample_floor_bits", cfg.distill.sample_floor_bits);
  {
    const std::string period = r.get_string("distill", "period_s", "auto");
    if (period == "auto") {
      cfg.distill.period_s = 0.0;
    } else {
      char* end = nullptr;
      cfg.distill.period_s = std::strtod(period.c_str(), &end);
      if (end == period.c_str() || *end != '\0' || !(cfg.distill.period_s > 0.0)) {
        problems.push_back("distill.period_s: expected 'auto' or a positive number");
      }
    }
  }
  {
    const std::string formula = r.get_string("distill", "formula", "calibrated");
    if (formula == "ideal") {
      cfg.distill.formula = RateFormula::IdealBB84;
    } else if (formula == "gllp") {
      cfg.distill.formula = RateFormula::GllpMultiphoton;
    } else if (formula == "calibrated") {
      cfg.distill.formula = RateFormula::Calibrated;
    } else {
      problems.push_back("distill.formula: expected ideal, gllp or calibrated");
    }
  }
  cfg.distill.ec_inefficiency_f =
      r.get_double("distill", "ec_inefficiency_f", cfg.distill.ec_inefficiency_f);
  cfg.distill.kappa = r.get_double("distill", "kappa", cfg.distill.kappa);
  cfg.distill.subtract_leakage_in_calibrated =
      r.get_bool("distill", "subtract_leakage_in_calibrated",
                 cfg.distill.subtract_leakage_in_calibrated);
  if (cfg.distill.block_bits < 1) problems.push_back("distill.block_bits: must be >= 1");
  if (!(cfg.distill.sample_fraction > 0.0) || !(cfg.distill.sample_fraction < 1.0)) {
    problems.push_back("distill.sample_fraction: must be in (0,1)");
  } else if (std::llround(cfg.distill.block_bits * cfg.distill.sample_fraction) <
             cfg.distill.sample_floor_bits) {
    problems.push_back(
        "distill: block_bits * sample_fraction is below sample_floor_bits");
  }
  if (cfg.distill.sample_floor_bits < 1) {
    problems.push_back("distill.sample_floor_bits: must be >= 1");
  }
  if (cfg.distill.ec_inefficiency_f < 1.0) {
    problems.push_back("distill.ec_inefficiency_f: must be >= 1");
  }
  if (!(cfg.distill.kappa > 0.0) || cfg.distill.kappa > 1.0) {
    problems.push_back("distill.kappa: must be in (0,1]");
  }

  // [channel.N]
  std::vector<int> indices;
  for (auto& [sec, kv] : ini) {
    if (sec.rfind("channel.", 0) != 0) continue;
    const std::string tail = sec.substr(8);
    int index = -1;
    try {
      index = std::stoi(tail);
    } catch (const std::exception&) {
      problems.push_back("[" + sec + "]: channel index must be an integer");
      r.use_section(sec);
      continue;
    }
    r.use_section(sec);
    indices.push_back(index);

    ChannelScenario ch;
    const double wavelength = r.get_double(sec, "wavelength_nm", kItuGridNm[0]);
    if (index < 0 || index >= kMaxChannels) {
      problems.push_back(sec + ": index outside 0..7");
    } else if (!on_itu_grid(wavelength)) {
      problems.push_back(sec + ".wavelength_nm: " + std::to_string(wavelength) +
                         " is not on the 100-GHz grid");
    } else {
      ch.hardware.channel = make_wavelength_channel(index, wavelength);
    }

    auto& hw = ch.hardware;
    hw.receiver_excess_loss = r.get_double(sec, "t_rx", hw.receiver_excess_loss);
    hw.source.clock_rate_hz = r.get_double(sec, "clock_rate_hz", hw.source.clock_rate_hz);
    hw.source.mean_photon_number =
        r.get_double(sec, "mean_photon_number", hw.source.mean_photon_number);
    hw.source.mu_is_per_pulse = r.get_bool(sec, "mu_per_pulse", hw.source.mu_is_per_pulse);
    hw.source.pulse_pair_delay_ps =
        r.get_double(sec, "pulse_pair_delay_ps", hw.source.pulse_pair_delay_ps);
    hw.source.bias_error_gain =
        r.get_double(sec, "bias_error_gain", hw.source.bias_error_gain);
    hw.interferometer.extinction_ratio_db =
        r.get_double(sec, "extinction_ratio_db", hw.interferometer.extinction_ratio_db);
    hw.interferometer.temp_to_phase_rad_per_k = r.get_double(
        sec, "temp_to_phase_rad_per_K", hw.interferometer.temp_to_phase_rad_per_k);
    hw.interferometer.polarization_independent = r.get_bool(
        sec, "polarization_independent", hw.interferometer.polarization_independent);
    hw.interferometer.pol_sensitivity =
        r.get_double(sec, "pol_sensitivity", hw.interferometer.pol_sensitivity);
    hw.detector.quantum_efficiency =
        r.get_double(sec, "quantum_efficiency", hw.detector.quantum_efficiency);
    hw.detector.dark_count_rate_hz =
        r.get_double(sec, "dark_count_rate_hz", hw.detector.dark_count_rate_hz);
    hw.detector.active_detectors = static_cast<int>(
        r.get_int(sec, "active_detectors", hw.detector.active_detectors));
    hw.detector.timing_sigma_ps =
        r.get_double(sec, "timing_sigma_ps", hw.detector.timing_sigma_ps);
    hw.detector.dead_time_s = r.get_double(sec, "dead_time_s", hw.detector.dead_time_s);
    hw.phase_offset_rad = r.get_double(sec, "phase_offset_rad", hw.phase_offset_rad);

    if (!(hw.receiver_excess_loss > 0.0) || hw.receiver_excess_loss > 1.0) {
      problems.push_back(sec + ".t_rx: must be in (0,1]");
    }
    if (!(hw.source.clock_rate_hz > 0.0)) {
      problems.push_back(sec + ".clock_rate_hz: must be > 0");
    }
    if (!(hw.source.mean_photon_number > 0.0) || hw.source.mean_photon_number > 1.0) {
      problems.push_back(sec + ".mean_photon_number: must be in (0,1]");
    }
    if (!(hw.source.pulse_pair_delay_ps > 0.0)) {
      problems.push_back(sec + ".pulse_pair_delay_ps: must be > 0");
    }
    if (hw.source.bias_error_gain < 0.0) {
      problems.push_back(sec + ".bias_error_gain: must be >= 0");
    }
    if (!(hw.interferometer.extinction_ratio_db > 0.0)) {
      problems.push_back(sec + ".extinction_ratio_db: must be > 0");
    }
    if (hw.detector.quantum_efficiency < 0.0 || hw.detector.quantum_efficiency > 1.0) {
      problems.push_back(sec + ".quantum_efficiency: must be in [0,1]");
    }
    if (hw.detector.dark_count_rate_hz < 0.0) {
      problems.push_back(sec + ".dark_count_rate_hz: must be >= 0");
    }
    if (hw.detector.active_detectors < 1) {
      problems.push_back(sec + ".active_detectors: must be >= 1");
    }
    if (!(hw.detector.timing_sigma_ps > 0.0)) {
      problems.push_back(sec + ".timing_sigma_ps: must be > 0");
    }
    if (hw.detector.dead_time_s < 0.0) {
      problems.push_back(sec + ".dead_time_s: must be >= 0");
    }

    // Initial operating point, snapped onto the knob grids.
    auto& op = ch.initial_op;
    const auto& pars = cfg.stabilizer.parameters;
    param_set(op, ParamId::DetectionTiming,
              r.get_double(sec, "timing_offset_ps", 0.0), pars[0].step);
    param_set(op, ParamId::EncoderBias, r.get_double(sec, "encoder_bias", 0.0),
              pars[1].step);
    param_set(op, ParamId::AmziTemperature,
              r.get_double(sec, "amzi_temperature_K", 0.0), pars[2].step);
    param_set(op, ParamId::PhaseCompAmplitude,
              r.get_double(sec, "phase_comp_rad", 0.0), pars[3].step);
    for (std::size_t i = 0; i < kParamCount; ++i) {
      const double v = param_get(op, pars[i].id);
      if (v < pars[i].min_value || v > pars[i].max_value) {
        problems.push_back(sec + ": initial " + param_name(pars[i].id) +
                           " outside stabilizer bounds");
      }
    }

    cfg.channels.push_back(std::move(ch));
  }

  if (cfg.channels.empty()) {
    problems.push_back("config needs at least one [channel.N] section");
  }
  if (static_cast<int>(cfg.channels.size()) > kMaxChannels) {
    problems.push_back("at most 8 channels are supported, got " +
                       std::to_string(cfg.channels.size()));
  }
  std::sort(cfg.channels.begin(), cfg.channels.end(),
            [](const ChannelScenario& a, const ChannelScenario& b) {
              return a.hardware.channel.index < b.hardware.channel.index;
            });
  for (std::size_t i = 1; i < cfg.channels.size(); ++i) {
    if (cfg.channels[i].hardware.channel.index ==
        cfg.channels[i - 1].hardware.channel.index) {
      problems.push_back("duplicate channel index " +
                         std::to_string(cfg.channels[i].hardware.channel.index));
    }
    if (cfg.channels[i].hardware.channel.wavelength_nm ==
        cfg.channels[i - 1].hardware.channel.wavelength_nm) {
      problems.push_back("duplicate wavelength " +
                         std::to_string(cfg.channels[i].hardware.channel.wavelength_nm));
    }
  }

  if (cfg.mode == SimMode::PulseMc) {
    for (const ChannelScenario& ch : cfg.channels) {
      if (cfg.epoch_s * ch.hardware.source.clock_rate_hz >
          static_cast<double>(cfg.pulse_mc_gate_cap)) {
        problems.push_back(
            "run.mode: pulse_mc epoch exceeds pulse_mc_gate_cap gates; "
            "use rate_level or shrink epoch_s");
        break;
      }
    }
  }

  r.complain_unused();
  if (!problems.empty()) {
    std::string msg = "invalid scenario config:";
    for (const std::string& p : problems) msg += "\n  - " + p;
    throw ConfigError(msg);
  }
  return cfg;
}

inline ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

namespace cfgdetail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void dump_drift(std::ostringstream& os, const std::string& name,
                       const DriftProcess& p) {
  os << "[" << name << "]\n";
  os << "mean = " << fmt(p.mean) << "\n";
  os << "relaxation_time_s = " << fmt(p.relaxation_time_s) << "\n";
  os << "stationary_sigma = " << fmt(p.stationary_sigma) << "\n";
  os << "diurnal_amplitude = " << fmt(p.diurnal_amplitude) << "\n";
  os << "diurnal_phase_s = " << fmt(p.diurnal_phase_s) << "\n";
  os << "initial = " << fmt(p.ou_state) << "\n";
}

}  // namespace cfgdetail

/// Canonical dump of the effective configuration. Stable ordering, full
/// precision; the run's config digest hashes this text.
inline std::string effective_config_text(const ScenarioConfig& cfg) {
  using cfgdetail::fmt;
  std::ostringstream os;
  os << "[run]\n";
  os << "duration_s = " << fmt(cfg.duration_s) << "\n";
  os << "epoch_s = " << fmt(cfg.epoch_s) << "\n";
  os << "mode = " << (cfg.mode == SimMode::PulseMc ? "pulse_mc" : "rate_level") << "\n";
  os << "seed = " << cfg.seed << "\n";
  os << "pulse_mc_gate_cap = " << cfg.pulse_mc_gate_cap << "\n";
  os << "checkpoint_period_s = " << fmt(cfg.checkpoint_period_s) << "\n";
  os << "[fiber]\n";
  os << "length_km = " << fmt(cfg.fiber.length_km) << "\n";
  os << "loss_db = " << fmt(cfg.fiber.loss_db) << "\n";
  os << "polarization_daylight_boost = " << fmt(cfg.fiber.polarization_daylight_boost)
     << "\n";
  os << "[environment]\n";
  os << "daylight_start_s = " << fmt(cfg.environment.daylight_start_s) << "\n";
  os << "daylight_end_s = " << fmt(cfg.environment.daylight_end_s) << "\n";
  cfgdetail::dump_drift(os, "drift.fiber_delay_ps", cfg.environment.fiber_delay_ps);
  cfgdetail::dump_drift(os, "drift.polarization_rad", cfg.environment.polarization_rad);
  cfgdetail::dump_drift(os, "drift.amzi_temp_K", cfg.environment.amzi_temp_k);
  cfgdetail::dump_drift(os, "drift.bias", cfg.environment.bias);
  os << "[stabilizer]\n";
  os << "enabled = " << (cfg.stabilizer.enabled ? "true" : "false") << "\n";
  os << "trial_period_s = " << fmt(cfg.stabilizer.trial_period_s) << "\n";
  os << "dwell_epochs = " << cfg.stabilizer.dwell_epochs << "\n";
  for (const TunableParameter& p : cfg.stabilizer.parameters) {
    os << param_name(p.id) << " = step " << fmt(p.step) << " bounds ["
       << fmt(p.min_value) << ", " << fmt(p.max_value) << "]\n";
  }
  os << "[distill]\n";
  os << "block_bits = " << cfg.distill.block_bits << "\n";
  os << "sample_fraction = " << fmt(cfg.distill.sample_fraction) << "\n";
  os << "sample_floor_bits = " << cfg.distill.sample_floor_bits << "\n";
  os << "period_s = " << fmt(cfg.distill.period_s) << "\n";
  os << "formula = "
     << (cfg.distill.formula == RateFormula::IdealBB84
             ? "ideal"
             : cfg.distill.formula == RateFormula::GllpMultiphoton ? "gllp"
                                                                   : "calibrated")
     << "\n";
  os << "ec_inefficiency_f = " << fmt(cfg.distill.ec_inefficiency_f) << "\n";
  os << "kappa = " << fmt(cfg.distill.kappa) << "\n";
  os << "subtract_leakage_in_calibrated = "
     << (cfg.distill.subtract_leakage_in_calibrated ? "true" : "false") << "\n";
  for (const ChannelScenario& ch : cfg.channels) {
    const ChannelHardware& hw = ch.hardware;
    os << "[channel." << hw.channel.index << "]\n";
    os << "wavelength_nm = " << fmt(hw.channel.wavelength_nm) << "\n";
    os << "t_rx = " << fmt(hw.receiver_excess_loss) << "\n";
    os << "clock_rate_hz = " << fmt(hw.source.clock_rate_hz) << "\n";
    os << "mean_photon_number = " << fmt(hw.source.mean_photon_number) << "\n";
    os << "mu_per_pulse = " << (hw.source.mu_is_per_pulse ? "true" : "false") << "\n";
    os << "pulse_pair_delay_ps = " << fmt(hw.source.pulse_pair_delay_ps) << "\n";
    os << "bias_error_gain = " << fmt(hw.source.bias_error_gain) << "\n";
    os << "extinction_ratio_db = " << fmt(hw.interferometer.extinction_ratio_db) << "\n";
    os << "temp_to_phase_rad_per_K = "
       << fmt(hw.interferometer.temp_to_phase_rad_per_k) << "\n";
    os << "polarization_independent = "
       << (hw.interferometer.polarization_independent ? "true" : "false") << "\n";
    os << "pol_sensitivity = " << fmt(hw.interferometer.pol_sensitivity) << "\n";
    os << "quantum_efficiency = " << fmt(hw.detector.quantum_efficiency) << "\n";
    os << "dark_count_rate_hz = " << fmt(hw.detector.dark_count_rate_hz) << "\n";
    os << "active_detectors = " << hw.detector.active_detectors << "\n";
    os << "timing_sigma_ps = " << fmt(hw.detector.timing_sigma_ps) << "\n";
    os << "dead_time_s = " << fmt(hw.detector.dead_time_s) << "\n";
    os << "phase_offset_rad = " << fmt(hw.phase_offset_rad) << "\n";
    os << "timing_offset_ps = " << fmt(ch.initial_op.timing_offset_ps) << "\n";
    os << "encoder_bias = " << fmt(ch.initial_op.encoder_bias) << "\n";
    os << "amzi_temperature_K = " << fmt(ch.initial_op.amzi_temp_offset_k) << "\n";
    os << "phase_comp_rad = " << fmt(ch.initial_op.phase_comp_rad) << "\n";
  }
  return os.str();
}

inline std::string config_digest(const ScenarioConfig& cfg) {
  const std::string text = effective_config_text(cfg);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace qkdsim
