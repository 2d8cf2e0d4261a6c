#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace qkdsim {

// Runtime failures are SimError subclasses; invalid math inputs throw
// std::domain_error / std::invalid_argument.
struct SimError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : SimError {
  using SimError::SimError;
};
struct EmptyBlockError : SimError {
  using SimError::SimError;
};
struct BlockTooSmallError : SimError {
  using SimError::SimError;
};
struct ReconciliationError : SimError {
  using SimError::SimError;
};
struct ModeCapError : SimError {
  using SimError::SimError;
};
struct IoError : SimError {
  using SimError::SimError;
};

// The eight ITU-T 100-GHz grid slots the multiplexer can serve
// (194.0 THz down to 193.3 THz).
inline constexpr std::array<double, 8> kItuGridNm = {
    1545.32, 1546.12, 1546.92, 1547.72, 1548.51, 1549.32, 1550.12, 1550.92};
inline constexpr double kItuGridToleranceNm = 0.05;
inline constexpr int kMaxChannels = 8;

inline bool on_itu_grid(double wavelength_nm) {
  for (double grid : kItuGridNm) {
    if (std::abs(wavelength_nm - grid) <= kItuGridToleranceNm) return true;
  }
  return false;
}

struct WavelengthChannel {
  int index = 0;
  double wavelength_nm = kItuGridNm[0];
};

inline WavelengthChannel make_wavelength_channel(int index, double wavelength_nm) {
  if (index < 0 || index >= kMaxChannels) {
    throw ConfigError("channel index " + std::to_string(index) + " outside 0.." +
                      std::to_string(kMaxChannels - 1));
  }
  if (!on_itu_grid(wavelength_nm)) {
    throw ConfigError("wavelength " + std::to_string(wavelength_nm) +
                      " nm is not on the 100-GHz grid (1545.32..1550.92 nm)");
  }
  return WavelengthChannel{index, wavelength_nm};
}

enum class Basis : std::uint8_t { Time = 0, Phase = 1 };

/// Shannon binary entropy in bits; 0 at the endpoints by continuity.
inline double binary_entropy(double p) {
  if (!(p >= 0.0) || !(p <= 1.0)) {
    throw std::domain_error("binary_entropy: p outside [0,1]");
  }
  if (p == 0.0 || p == 1.0) return 0.0;
  return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

inline double db_to_transmittance(double loss_db) {
  if (!(loss_db >= 0.0)) {
    throw std::domain_error("db_to_transmittance: negative loss");
  }
  return std::pow(10.0, -loss_db / 10.0);
}

/// Error ratio of a sifted block. Empty blocks cannot carry a rate; callers
/// skip such epochs.
inline double qber_from_counts(std::int64_t errors, std::int64_t sifted) {
  if (errors < 0 || sifted < 0 || errors > sifted) {
    throw std::invalid_argument("qber_from_counts: need 0 <= errors <= sifted");
  }
  if (sifted == 0) throw EmptyBlockError("qber_from_counts: empty block");
  return static_cast<double>(errors) / static_cast<double>(sifted);
}

// Per-epoch, per-channel counting record.
struct EpochStats {
  std::int64_t epoch_index = 0;
  int channel_index = 0;
  std::int64_t gated_pulses = 0;
  std::int64_t signal_clicks = 0;
  std::int64_t dark_clicks = 0;
  std::int64_t sifted_bits = 0;
  std::int64_t sifted_errors = 0;
  double qber = 0.0;
  double sifted_rate_bps = 0.0;
  double secure_rate_bps = 0.0;

  bool consistent() const {
    if (gated_pulses < 0 || signal_clicks < 0 || dark_clicks < 0) return false;
    if (sifted_errors < 0 || sifted_errors > sifted_bits) return false;
    if (sifted_bits > signal_clicks + dark_clicks) return false;
    if (sifted_bits > 0 &&
        std::abs(qber - static_cast<double>(sifted_errors) /
                            static_cast<double>(sifted_bits)) > 1e-12) {
      return false;
    }
    return true;
  }
};

// The four tunable parameters of the control plane.
enum class ParamId : int {
  DetectionTiming = 0,
  EncoderBias = 1,
  AmziTemperature = 2,
  PhaseCompAmplitude = 3,
};
inline constexpr std::size_t kParamCount = 4;

inline const char* param_name(ParamId id) {
  switch (id) {
    case ParamId::DetectionTiming: return "detection_timing";
    case ParamId::EncoderBias: return "encoder_bias";
    case ParamId::AmziTemperature: return "amzi_temperature";
    case ParamId::PhaseCompAmplitude: return "phase_comp_amplitude";
  }
  return "unknown";
}

// Hardware granularity of the two paper-specified knobs; the other two use
// configurable steps of comparable relative size.
inline constexpr double kTimingStepPs = 12.5;
inline constexpr double kTemperatureStepK = 0.01;
inline constexpr double kDefaultBiasStep = 0.01;
inline constexpr double kDefaultPhaseStepRad = 0.01;

inline double snap_to_step(double value, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("snap_to_step: step must be > 0");
  return std::round(value / step) * step;
}

// Current setting of the four knobs, as offsets from the nominal (perfectly
// aligned) operating point.
struct OperatingPoint {
  double timing_offset_ps = 0.0;   // quantized to 12.5 ps
  double encoder_bias = 0.0;       // normalized units
  double amzi_temp_offset_k = 0.0; // quantized to 0.01 K
  double phase_comp_rad = 0.0;     // per-channel compensator amplitude
};

inline double param_get(const OperatingPoint& op, ParamId id) {
  switch (id) {
    case ParamId::DetectionTiming: return op.timing_offset_ps;
    case ParamId::EncoderBias: return op.encoder_bias;
    case ParamId::AmziTemperature: return op.amzi_temp_offset_k;
    case ParamId::PhaseCompAmplitude: return op.phase_comp_rad;
  }
  throw std::invalid_argument("param_get: bad ParamId");
}

/// Mutations go through here so every committed value sits on its grid.
inline void param_set(OperatingPoint& op, ParamId id, double value, double step) {
  const double snapped = snap_to_step(value, step);
  switch (id) {
    case ParamId::DetectionTiming: op.timing_offset_ps = snapped; return;
    case ParamId::EncoderBias: op.encoder_bias = snapped; return;
    case ParamId::AmziTemperature: op.amzi_temp_offset_k = snapped; return;
    case ParamId::PhaseCompAmplitude: op.phase_comp_rad = snapped; return;
  }
  throw std::invalid_argument("param_set: bad ParamId");
}

}  // namespace qkdsim
