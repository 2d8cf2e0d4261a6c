#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "qkdsim/core.hpp"
#include "qkdsim/optics.hpp"

namespace qkdsim {

enum class Objective { MaximizeCounts, MinimizeQber };

struct TunableParameter {
  ParamId id = ParamId::DetectionTiming;
  double step = kTimingStepPs;
  double min_value = -200.0;
  double max_value = 200.0;
  Objective objective = Objective::MaximizeCounts;
  int dwell_epochs = 3;
};

// Detection timing is scored on count rate (its failure symptom); the three
// interference-affecting knobs are scored on QBER.
inline std::vector<TunableParameter> default_tunable_parameters() {
  return {
      {ParamId::DetectionTiming, kTimingStepPs, -200.0, 200.0,
       Objective::MaximizeCounts, 3},
      {ParamId::EncoderBias, kDefaultBiasStep, -1.5, 1.5,
       Objective::MinimizeQber, 3},
      {ParamId::AmziTemperature, kTemperatureStepK, -1.0, 1.0,
       Objective::MinimizeQber, 3},
      {ParamId::PhaseCompAmplitude, kDefaultPhaseStepRad, -3.2, 3.2,
       Objective::MinimizeQber, 3},
  };
}

enum class TrialPhase : int { TrialMinus = 0, TrialCenter = 1, TrialPlus = 2, Commit = 3 };

struct ControllerState {
  std::size_t param_index = 0;
  TrialPhase phase = TrialPhase::TrialMinus;
  std::array<std::optional<double>, 3> trial_scores{};
  std::int64_t cycle_count = 0;
};

namespace detail {

inline double clamp_snap(double value, const TunableParameter& par) {
  double v = std::clamp(value, par.min_value, par.max_value);
  v = snap_to_step(v, par.step);
  if (v > par.max_value) v -= par.step;
  if (v < par.min_value) v += par.step;
  return v;
}

inline double leg_offset(const TunableParameter& par, int leg) {
  return (leg - 1) * par.step;  // leg 0/1/2 -> -step/0/+step
}

inline OperatingPoint displaced(const OperatingPoint& op,
                                const TunableParameter& par, int leg) {
  OperatingPoint trial = op;
  const double center = param_get(op, par.id);
  param_set(trial, par.id, detail::clamp_snap(center + leg_offset(par, leg), par),
            par.step);
  return trial;
}

inline bool better(Objective objective, double candidate, double incumbent) {
  return objective == Objective::MaximizeCounts ? candidate > incumbent
                                                : candidate < incumbent;
}

}  // namespace detail

/// Operating point to measure next: the active parameter displaced by
/// {-step, 0, +step} depending on the trial phase, clamped to bounds.
/// A clamped displacement simply repeats the center value.
inline OperatingPoint propose_trial(const ControllerState& state,
                                    const std::vector<TunableParameter>& params,
                                    const OperatingPoint& op) {
  if (state.phase == TrialPhase::Commit) return op;
  const TunableParameter& par = params.at(state.param_index);
  return detail::displaced(op, par, static_cast<int>(state.phase));
}

struct SelectResult {
  ControllerState next;
  double chosen_offset = 0.0;
  int chosen_leg = 1;
};

/// Picks the best-scoring trial under the parameter's objective. Ties
/// resolve toward the center (no move); a minus/plus tie resolves to minus.
/// Advances the round-robin to the next parameter.
inline SelectResult record_and_select(ControllerState state,
                                      const std::vector<TunableParameter>& params,
                                      const std::array<double, 3>& scores) {
  const TunableParameter& par = params.at(state.param_index);
  int best = 1;  // evaluation order: center first, then minus, then plus
  for (int leg : {0, 2}) {
    if (detail::better(par.objective, scores[leg], scores[best])) best = leg;
  }
  SelectResult result;
  result.chosen_leg = best;
  result.chosen_offset = detail::leg_offset(par, best);
  state.trial_scores = {scores[0], scores[1], scores[2]};
  state.param_index = (state.param_index + 1) % params.size();
  if (state.param_index == 0) ++state.cycle_count;
  state.phase = TrialPhase::TrialMinus;
  result.next = state;
  return result;
}

namespace detail {

// Dwell-averaged score accumulator.
struct ScoreAccum {
  double count_sum = 0.0;
  double qber_sum = 0.0;
  int epochs = 0;
  int qber_epochs = 0;

  void add(const EpochStats& stats) {
    count_sum += static_cast<double>(stats.signal_clicks + stats.dark_clicks);
    if (stats.sifted_bits > 0) {
      qber_sum += stats.qber;
      ++qber_epochs;
    }
    ++epochs;
  }

  double finalize(Objective objective) const {
    if (objective == Objective::MaximizeCounts) {
      return epochs > 0 ? count_sum / epochs : 0.0;
    }
    return qber_epochs > 0 ? qber_sum / qber_epochs
                           : std::numeric_limits<double>::infinity();
  }
};

}  // namespace detail

/// One synchronous propose/measure/select cycle over every parameter.
/// `measure` is called dwell_epochs times per trial leg and must return the
/// EpochStats observed at the given operating point.
template <typename MeasureFn>
OperatingPoint stabilization_round(OperatingPoint op, MeasureFn&& measure,
                                   const std::vector<TunableParameter>& params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const TunableParameter& par = params[i];
    std::array<double, 3> scores{};
    for (int leg = 0; leg < 3; ++leg) {
      const OperatingPoint trial = detail::displaced(op, par, leg);
      detail::ScoreAccum accum;
      for (int d = 0; d < par.dwell_epochs; ++d) accum.add(measure(trial));
      scores[leg] = accum.finalize(par.objective);
    }
    ControllerState st;
    st.param_index = i;
    const SelectResult sel = record_and_select(st, params, scores);
    const double center = param_get(op, par.id);
    param_set(op, par.id, detail::clamp_snap(center + sel.chosen_offset, par),
              par.step);
  }
  return op;
}

struct CommitEvent {
  double sim_time_s = 0.0;
  ParamId id = ParamId::DetectionTiming;
  double chosen_offset = 0.0;
  double committed_value = 0.0;
  std::array<double, 3> scores{};
  std::int64_t cycle_count = 0;
};

// Online controller driven one epoch at a time by the simulation loop. Each
// parameter owns one trial slot of `trial_period_s`; the slot starts with
// the three dwell-averaged trial legs, commits, then idles at the committed
// point until the next slot.
class PerturbObserveController {
 public:
  PerturbObserveController(std::vector<TunableParameter> params,
                           const OperatingPoint& initial, double trial_period_s,
                           double epoch_s)
      : params_(std::move(params)), committed_(initial) {
    if (params_.empty()) throw ConfigError("controller needs >= 1 parameter");
    if (!(epoch_s > 0.0) || !(trial_period_s > 0.0)) {
      throw ConfigError("controller periods must be > 0");
    }
    epochs_per_slot_ = static_cast<int>(std::llround(trial_period_s / epoch_s));
    for (const TunableParameter& p : params_) {
      if (p.dwell_epochs < 1) throw ConfigError("dwell_epochs must be >= 1");
      if (3 * p.dwell_epochs > epochs_per_slot_) {
        throw ConfigError(
            "trial_period_s too short: a slot must hold 3*dwell_epochs epochs");
      }
      if (!(p.step > 0.0) || !(p.min_value < p.max_value)) {
        throw ConfigError("tunable parameter needs step > 0 and ordered bounds");
      }
    }
  }

  const OperatingPoint& committed() const { return committed_; }
  const std::vector<TunableParameter>& parameters() const { return params_; }
  const ControllerState& state() const { return state_; }
  std::int64_t rounds_completed() const { return state_.cycle_count; }

  /// Operating point the channel should use for the next epoch.
  OperatingPoint active() const {
    const TunableParameter& par = params_[state_.param_index];
    if (slot_epoch_ < 3 * par.dwell_epochs) {
      return detail::displaced(committed_, par, slot_epoch_ / par.dwell_epochs);
    }
    return committed_;
  }

  /// Feed back the stats measured at active(). Returns the commit decision
  /// when this epoch completes the parameter's third trial leg.
  std::optional<CommitEvent> observe(const EpochStats& stats, double sim_time_s) {
    std::optional<CommitEvent> event;
    const TunableParameter& par = params_[state_.param_index];
    const int legs_end = 3 * par.dwell_epochs;
    if (slot_epoch_ < legs_end) {
      const int leg = slot_epoch_ / par.dwell_epochs;
      state_.phase = static_cast<TrialPhase>(leg);
      accum_.add(stats);
      if ((slot_epoch_ + 1) % par.dwell_epochs == 0) {
        leg_scores_[leg] = accum_.finalize(par.objective);
        state_.trial_scores[leg] = leg_scores_[leg];
        accum_ = {};
        if (leg == 2) {
          const SelectResult sel = record_and_select(state_, params_, leg_scores_);
          const double center = param_get(committed_, par.id);
          param_set(committed_, par.id,
                    detail::clamp_snap(center + sel.chosen_offset, par), par.step);
          CommitEvent ev;
          ev.sim_time_s = sim_time_s;
          ev.id = par.id;
          ev.chosen_offset = sel.chosen_offset;
          ev.committed_value = param_get(committed_, par.id);
          ev.scores = leg_scores_;
          ev.cycle_count = sel.next.cycle_count;
          event = ev;
          state_ = sel.next;
          state_.phase = TrialPhase::Commit;  // idle until the slot ends
        }
      }
    }
    ++slot_epoch_;
    if (slot_epoch_ >= epochs_per_slot_) {
      slot_epoch_ = 0;
      state_.phase = TrialPhase::TrialMinus;
    }
    return event;
  }

  // Checkpoint support: the full mutable state as plain numbers.
  struct Snapshot {
    OperatingPoint committed;
    std::size_t param_index = 0;
    int phase = 0;
    std::int64_t cycle_count = 0;
    int slot_epoch = 0;
    std::array<double, 3> leg_scores{};
    double accum_count_sum = 0.0;
    double accum_qber_sum = 0.0;
    int accum_epochs = 0;
    int accum_qber_epochs = 0;
  };

  Snapshot snapshot() const {
    Snapshot s;
    s.committed = committed_;
    s.param_index = state_.param_index;
    s.phase = static_cast<int>(state_.phase);
    s.cycle_count = state_.cycle_count;
    s.slot_epoch = slot_epoch_;
    s.leg_scores = leg_scores_;
    s.accum_count_sum = accum_.count_sum;
    s.accum_qber_sum = accum_.qber_sum;
    s.accum_epochs = accum_.epochs;
    s.accum_qber_epochs = accum_.qber_epochs;
    return s;
  }

  void restore(const Snapshot& s) {
    committed_ = s.committed;
    state_.param_index = s.param_index;
    state_.phase = static_cast<TrialPhase>(s.phase);
    state_.cycle_count = s.cycle_count;
    slot_epoch_ = s.slot_epoch;
    leg_scores_ = s.leg_scores;
    accum_.count_sum = s.accum_count_sum;
    accum_.qber_sum = s.accum_qber_sum;
    accum_.epochs = s.accum_epochs;
    accum_.qber_epochs = s.accum_qber_epochs;
  }

 private:
  std::vector<TunableParameter> params_;
  OperatingPoint committed_;
  ControllerState state_;
  int epochs_per_slot_ = 1;
  int slot_epoch_ = 0;
  std::array<double, 3> leg_scores_{};
  detail::ScoreAccum accum_;
};

}  // namespace qkdsim
