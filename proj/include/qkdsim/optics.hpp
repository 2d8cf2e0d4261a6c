#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "qkdsim/core.hpp"
#include "qkdsim/environment.hpp"
#include "qkdsim/rng.hpp"

namespace qkdsim {

// Transmitter: pulse-pair source behind the encoding modulator and VOA.
struct SourceModel {
  double clock_rate_hz = 1.24e9;
  double mean_photon_number = 0.5;   // per pulse pair by default
  bool mu_is_per_pulse = false;      // when true, a pair carries 2*mu
  double pulse_pair_delay_ps = 400.0;
  double bias_error_gain = 0.05;     // quadratic error penalty of bias offset
};

// Shared decoder interferometer. Default thermal sensitivity: one full
// fringe per 0.25 K.
struct InterferometerModel {
  double extinction_ratio_db = 20.0;
  double temp_to_phase_rad_per_k = 2.0 * M_PI / 0.25;
  bool polarization_independent = true;
  double pol_sensitivity = 0.0;  // error gain used only when not independent
};

struct DetectorModel {
  double quantum_efficiency = 0.125;
  double dark_count_rate_hz = 1.5e3;  // per detector
  int active_detectors = 2;
  // Gate acceptance width, solved from the 50 ps -> 80 % count-rate anchor.
  double timing_sigma_ps = 74.845;
  double dead_time_s = 0.0;  // optional linear rate correction R/(1+R*tau)
};

// Everything fixed about one wavelength channel's hardware. The receiver
// excess loss t_rx folds all unmodeled receiver factors into one calibrated
// transmittance. phase_offset_rad is the channel's intrinsic interferometer
// mismatch that the phase compensator has to cancel.
struct ChannelHardware {
  WavelengthChannel channel;
  SourceModel source;
  InterferometerModel interferometer;
  DetectorModel detector;
  double receiver_excess_loss = 1.0;
  double phase_offset_rad = 0.0;
};

// Per-gate outcome probabilities for one channel.
struct OutcomeProbabilities {
  double p_signal_click = 0.0;
  double p_dark_click = 0.0;
  double p_sift_keep = 0.5;
  double conditional_error = 0.0;
};

/// Gaussian gate-acceptance factor in (0,1].
inline double timing_factor(double offset_ps, double timing_sigma_ps) {
  if (!(timing_sigma_ps > 0.0)) {
    throw std::invalid_argument("timing_factor: sigma must be > 0");
  }
  const double x = offset_ps / timing_sigma_ps;
  return std::exp(-0.5 * x * x);
}

/// Phase-basis conditional error of an interferometer with finite extinction
/// ratio: (1 - V*cos(mismatch))/2, V = (ER-1)/(ER+1).
inline double interference_error(double extinction_ratio_db,
                                 double phase_mismatch_rad) {
  if (!(extinction_ratio_db > 0.0)) {
    throw std::invalid_argument("interference_error: ER must be > 0 dB");
  }
  const double er = std::pow(10.0, extinction_ratio_db / 10.0);
  const double visibility = (er - 1.0) / (er + 1.0);
  return 0.5 * (1.0 - visibility * std::cos(phase_mismatch_rad));
}

inline double bias_error(double gain, double bias_offset) {
  return gain * bias_offset * bias_offset;
}

/// Composes source, link, interferometer and detectors into per-gate
/// probabilities at the given operating point and environment.
inline OutcomeProbabilities outcome_probabilities(const ChannelHardware& hw,
                                                  double fiber_transmittance,
                                                  const OperatingPoint& op,
                                                  const EnvironmentState& env) {
  if (!(hw.receiver_excess_loss > 0.0) || hw.receiver_excess_loss > 1.0) {
    throw ConfigError("receiver_excess_loss must be in (0,1]");
  }
  if (!(fiber_transmittance > 0.0) || fiber_transmittance > 1.0) {
    throw ConfigError("fiber transmittance must be in (0,1]");
  }

  const double mu_pair = hw.source.mu_is_per_pulse
                             ? 2.0 * hw.source.mean_photon_number
                             : hw.source.mean_photon_number;
  const double total_timing_ps = op.timing_offset_ps + env.fiber_delay_ps;
  const double gate = timing_factor(total_timing_ps, hw.detector.timing_sigma_ps);

  OutcomeProbabilities probs;
  probs.p_signal_click =
      1.0 - std::exp(-mu_pair * fiber_transmittance * hw.receiver_excess_loss *
                     hw.detector.quantum_efficiency * gate);
  probs.p_dark_click = hw.detector.dark_count_rate_hz *
                       static_cast<double>(hw.detector.active_detectors) /
                       hw.source.clock_rate_hz;

  if (hw.detector.dead_time_s > 0.0) {
    const double rate =
        (probs.p_signal_click + probs.p_dark_click) * hw.source.clock_rate_hz;
    const double keep = 1.0 / (1.0 + rate * hw.detector.dead_time_s);
    probs.p_signal_click *= keep;
    probs.p_dark_click *= keep;
  }

  const double phase_mismatch =
      hw.interferometer.temp_to_phase_rad_per_k *
          (op.amzi_temp_offset_k + env.amzi_temp_error_k) +
      (hw.phase_offset_rad - op.phase_comp_rad);
  double err = interference_error(hw.interferometer.extinction_ratio_db,
                                  phase_mismatch);
  err += bias_error(hw.source.bias_error_gain, op.encoder_bias + env.bias_drift);
  if (!hw.interferometer.polarization_independent) {
    const double s = std::sin(env.polarization_angle_rad);
    err += hw.interferometer.pol_sensitivity * s * s;
  }
  probs.conditional_error = std::clamp(err, 0.0, 0.5);
  probs.p_sift_keep = 0.5;
  return probs;
}

/// QBER of an epoch at the given probabilities: dark counts contribute
/// half-random errors on top of the optical conditional error.
inline double epoch_qber(const OutcomeProbabilities& probs) {
  const double denom = probs.p_signal_click + probs.p_dark_click;
  if (!(denom > 0.0)) throw EmptyBlockError("epoch_qber: no click probability");
  return (probs.conditional_error * probs.p_signal_click +
          0.5 * probs.p_dark_click) /
         denom;
}

enum class SimMode { PulseMc, RateLevel };

// Detection-event streams of one epoch (one entry per click).
struct EpochBits {
  std::vector<std::uint8_t> alice_bits;
  std::vector<std::uint8_t> bob_bits;
  std::vector<std::uint8_t> alice_bases;
  std::vector<std::uint8_t> bob_bases;
};

struct EpochResult {
  EpochStats stats;
  EpochBits bits;
};

struct EpochOptions {
  std::uint64_t pulse_mc_gate_cap = 200'000'000;
  bool synthesize_streams = true;
};

/// Per-gate Monte Carlo epoch. Every gate draws a uniform; click outcomes
/// then draw basis/bit/error. Detection events (only) land in the streams.
inline EpochResult simulate_pulse_mc(double duration_s, double clock_rate_hz,
                                     const OutcomeProbabilities& probs,
                                     RngStream& rng, const EpochOptions& opts) {
  const double gates_d = duration_s * clock_rate_hz;
  if (gates_d > static_cast<double>(opts.pulse_mc_gate_cap)) {
    throw ModeCapError(
        "pulse_mc epoch of " + std::to_string(static_cast<std::uint64_t>(gates_d)) +
        " gates exceeds the cap; use rate_level mode");
  }
  const std::int64_t gates = std::llround(gates_d);
  const double p_sig = probs.p_signal_click;
  const double p_click = probs.p_signal_click + probs.p_dark_click;

  EpochResult res;
  res.stats.gated_pulses = gates;
  for (std::int64_t g = 0; g < gates; ++g) {
    const double u = rng.uniform();
    if (u >= p_click) continue;
    const bool signal = u < p_sig;
    if (signal) {
      ++res.stats.signal_clicks;
    } else {
      ++res.stats.dark_clicks;
    }
    const std::uint8_t alice_basis = rng.bernoulli(0.5) ? 1 : 0;
    const std::uint8_t bob_basis = rng.bernoulli(0.5) ? 1 : 0;
    const std::uint8_t alice_bit = rng.bernoulli(0.5) ? 1 : 0;
    std::uint8_t bob_bit;
    if (alice_basis == bob_basis) {
      if (signal) {
        bob_bit = alice_bit ^ (rng.bernoulli(probs.conditional_error) ? 1 : 0);
      } else {
        bob_bit = rng.bernoulli(0.5) ? 1 : 0;
      }
      ++res.stats.sifted_bits;
      if (bob_bit != alice_bit) ++res.stats.sifted_errors;
    } else {
      bob_bit = rng.bernoulli(0.5) ? 1 : 0;
    }
    if (opts.synthesize_streams) {
      res.bits.alice_bits.push_back(alice_bit);
      res.bits.bob_bits.push_back(bob_bit);
      res.bits.alice_bases.push_back(alice_basis);
      res.bits.bob_bases.push_back(bob_basis);
    }
  }
  return res;
}

/// Aggregate-count epoch: draws the same means from binomials, then (when
/// requested) synthesizes detection streams carrying exactly the drawn
/// counts at uniformly random positions.
inline EpochResult simulate_rate_level(double duration_s, double clock_rate_hz,
                                       const OutcomeProbabilities& probs,
                                       RngStream& rng,
                                       const EpochOptions& opts) {
  const std::int64_t gates = std::llround(duration_s * clock_rate_hz);
  EpochResult res;
  res.stats.gated_pulses = gates;

  const std::int64_t n_sig = rng.binomial(gates, probs.p_signal_click);
  const std::int64_t n_dark = rng.binomial(gates, probs.p_dark_click);
  const std::int64_t sift_sig = rng.binomial(n_sig, probs.p_sift_keep);
  const std::int64_t sift_dark = rng.binomial(n_dark, probs.p_sift_keep);
  const std::int64_t err_sig = rng.binomial(sift_sig, probs.conditional_error);
  const std::int64_t err_dark = rng.binomial(sift_dark, 0.5);

  res.stats.signal_clicks = n_sig;
  res.stats.dark_clicks = n_dark;
  res.stats.sifted_bits = sift_sig + sift_dark;
  res.stats.sifted_errors = err_sig + err_dark;

  if (opts.synthesize_streams) {
    const std::int64_t n_det = n_sig + n_dark;
    res.bits.alice_bits.resize(n_det);
    res.bits.bob_bits.resize(n_det);
    res.bits.alice_bases.resize(n_det);
    res.bits.bob_bases.resize(n_det);
    std::int64_t sig_left = n_sig;
    std::int64_t sift_sig_left = sift_sig;
    std::int64_t sift_dark_left = sift_dark;
    std::int64_t err_sig_left = err_sig;
    std::int64_t err_dark_left = err_dark;
    for (std::int64_t i = 0; i < n_det; ++i) {
      const std::int64_t det_left = n_det - i;
      const bool signal = detail::take_next(sig_left, det_left, rng);
      // Remaining positions of this click class, counting the current one.
      const std::int64_t class_remaining = signal ? sig_left : det_left - sig_left;
      std::int64_t& sift_left = signal ? sift_sig_left : sift_dark_left;
      const bool kept = detail::take_next(sift_left, class_remaining, rng);
      bool error = false;
      if (kept) {
        std::int64_t& err_left = signal ? err_sig_left : err_dark_left;
        error = detail::take_next(err_left, sift_left, rng);
        if (error) --err_left;
        --sift_left;
      }
      if (signal) --sig_left;

      const std::uint8_t alice_basis = rng.bernoulli(0.5) ? 1 : 0;
      const std::uint8_t alice_bit = rng.bernoulli(0.5) ? 1 : 0;
      res.bits.alice_bases[i] = alice_basis;
      res.bits.alice_bits[i] = alice_bit;
      if (kept) {
        res.bits.bob_bases[i] = alice_basis;
        res.bits.bob_bits[i] = alice_bit ^ (error ? 1 : 0);
      } else {
        res.bits.bob_bases[i] = alice_basis ^ 1;
        res.bits.bob_bits[i] = rng.bernoulli(0.5) ? 1 : 0;
      }
    }
  }
  return res;
}

inline EpochResult simulate_epoch(SimMode mode, double duration_s,
                                  double clock_rate_hz,
                                  const OutcomeProbabilities& probs,
                                  RngStream& rng,
                                  const EpochOptions& opts = {}) {
  if (!(duration_s > 0.0)) {
    throw std::invalid_argument("simulate_epoch: duration must be > 0");
  }
  EpochResult res = (mode == SimMode::PulseMc)
                        ? simulate_pulse_mc(duration_s, clock_rate_hz, probs, rng, opts)
                        : simulate_rate_level(duration_s, clock_rate_hz, probs, rng, opts);
  res.stats.qber = res.stats.sifted_bits > 0
                       ? qber_from_counts(res.stats.sifted_errors, res.stats.sifted_bits)
                       : 0.0;
  res.stats.sifted_rate_bps =
      static_cast<double>(res.stats.sifted_bits) / duration_s;
  return res;
}

/// Deterministic expected-value epoch, used for noise-free controller scores
/// and as the oracle side of Monte Carlo checks.
inline EpochStats expected_epoch_stats(const OutcomeProbabilities& probs,
                                       double clock_rate_hz, double duration_s) {
  const double gates = duration_s * clock_rate_hz;
  EpochStats s;
  s.gated_pulses = std::llround(gates);
  const double sig = gates * probs.p_signal_click;
  const double dark = gates * probs.p_dark_click;
  s.signal_clicks = std::llround(sig);
  s.dark_clicks = std::llround(dark);
  const double sifted = probs.p_sift_keep * (sig + dark);
  const double errors = probs.p_sift_keep *
                        (probs.conditional_error * sig + 0.5 * dark);
  s.sifted_bits = std::llround(sifted);
  s.sifted_errors = std::llround(errors);
  s.qber = (sig + dark) > 0.0 ? epoch_qber(probs) : 0.0;
  s.sifted_rate_bps = sifted / duration_s;
  return s;
}

}  // namespace qkdsim
