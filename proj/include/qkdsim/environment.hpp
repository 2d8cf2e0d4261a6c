#pragma once

#include <cmath>

#include "qkdsim/core.hpp"
#include "qkdsim/rng.hpp"

namespace qkdsim {

inline constexpr double kSecondsPerDay = 86400.0;

// Mean-reverting drift with an additive day-cycle component. The observable
// `value` is the OU state plus the sinusoid; only the OU state is recursive,
// so a pure sinusoid configuration stays exactly within +/- amplitude.
struct DriftProcess {
  double mean = 0.0;
  double relaxation_time_s = 3600.0;
  double stationary_sigma = 0.0;
  double diurnal_amplitude = 0.0;
  double diurnal_phase_s = 0.0;
  double ou_state = 0.0;
  double value = 0.0;
};

inline double diurnal_term(const DriftProcess& p, double sim_time_s) {
  if (p.diurnal_amplitude == 0.0) return 0.0;
  return p.diurnal_amplitude *
         std::sin(2.0 * M_PI * (sim_time_s + p.diurnal_phase_s) / kSecondsPerDay);
}

inline DriftProcess make_drift_process(double mean, double relaxation_time_s,
                                       double stationary_sigma,
                                       double diurnal_amplitude,
                                       double diurnal_phase_s, double initial) {
  if (!(relaxation_time_s > 0.0)) {
    throw ConfigError("drift process: relaxation_time_s must be > 0");
  }
  if (stationary_sigma < 0.0 || diurnal_amplitude < 0.0) {
    throw ConfigError("drift process: sigma and diurnal amplitude must be >= 0");
  }
  DriftProcess p;
  p.mean = mean;
  p.relaxation_time_s = relaxation_time_s;
  p.stationary_sigma = stationary_sigma;
  p.diurnal_amplitude = diurnal_amplitude;
  p.diurnal_phase_s = diurnal_phase_s;
  p.ou_state = initial;
  p.value = initial + diurnal_term(p, 0.0);
  return p;
}

/// Exact-discretization OU update (stationary variance is preserved for any
/// dt), then the diurnal term evaluated at the new simulation time.
/// `sigma_scale` scales the noise amplitude for this step only.
inline DriftProcess drift_step(DriftProcess p, double dt_s, double noise,
                               double sim_time_after_s, double sigma_scale = 1.0) {
  if (!(dt_s > 0.0)) throw std::invalid_argument("drift_step: dt_s must be > 0");
  const double a = std::exp(-dt_s / p.relaxation_time_s);
  const double sigma = p.stationary_sigma * sigma_scale;
  p.ou_state = p.mean + (p.ou_state - p.mean) * a +
               sigma * std::sqrt(1.0 - a * a) * noise;
  p.value = p.ou_state + diurnal_term(p, sim_time_after_s);
  return p;
}

// Link-level disturbances seen by every channel.
struct EnvironmentState {
  double fiber_delay_ps = 0.0;
  double polarization_angle_rad = 0.0;
  double amzi_temp_error_k = 0.0;
  double bias_drift = 0.0;
  double sim_time_s = 0.0;
};

struct EnvironmentModel {
  DriftProcess fiber_delay_ps;
  DriftProcess polarization_rad;
  DriftProcess amzi_temp_k;
  DriftProcess bias;
  double daylight_start_s = 6.0 * 3600.0;
  double daylight_end_s = 18.0 * 3600.0;
};

struct FiberModel {
  double length_km = 22.0;
  double loss_db = 12.6;
  double polarization_daylight_boost = 1.0;  // >= 1
};

inline double fiber_transmittance(const FiberModel& fiber) {
  return db_to_transmittance(fiber.loss_db);
}

inline bool is_daylight(const EnvironmentModel& model, double sim_time_s) {
  const double tod = std::fmod(sim_time_s, kSecondsPerDay);
  return tod >= model.daylight_start_s && tod < model.daylight_end_s;
}

/// Advances all drift processes by one step. The daylight boost applies to
/// the polarization noise only. One gaussian is drawn per process per step
/// regardless of its sigma, so trajectories of the other processes do not
/// depend on the boost setting.
inline EnvironmentState advance_environment(EnvironmentModel& model,
                                            EnvironmentState env, double dt_s,
                                            double polarization_daylight_boost,
                                            RngStream& rng) {
  if (!(dt_s > 0.0)) {
    throw std::invalid_argument("advance_environment: dt_s must be > 0");
  }
  const double t_after = env.sim_time_s + dt_s;
  const double pol_scale =
      is_daylight(model, env.sim_time_s) ? polarization_daylight_boost : 1.0;

  model.fiber_delay_ps = drift_step(model.fiber_delay_ps, dt_s, rng.gauss(), t_after);
  model.polarization_rad =
      drift_step(model.polarization_rad, dt_s, rng.gauss(), t_after, pol_scale);
  model.amzi_temp_k = drift_step(model.amzi_temp_k, dt_s, rng.gauss(), t_after);
  model.bias = drift_step(model.bias, dt_s, rng.gauss(), t_after);

  env.fiber_delay_ps = model.fiber_delay_ps.value;
  env.polarization_angle_rad = model.polarization_rad.value;
  env.amzi_temp_error_k = model.amzi_temp_k.value;
  env.bias_drift = model.bias.value;
  env.sim_time_s = t_after;
  return env;
}

}  // namespace qkdsim
