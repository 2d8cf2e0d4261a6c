#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "qkdsim/distill.hpp"
#include "qkdsim/environment.hpp"
#include "qkdsim/optics.hpp"
#include "qkdsim/scenario.hpp"
#include "qkdsim/stabilizer.hpp"

namespace qkdsim {

using Json = nlohmann::json;

struct TimeSeriesRecord {
  double sim_time_s = 0.0;
  int channel = 0;
  double qber = 0.0;
  double sifted_rate_bps = 0.0;
  double secure_rate_bps = 0.0;
  OperatingPoint op;
  double fiber_delay_ps = 0.0;
  double polarization_rad = 0.0;
};

inline const char* csv_header() {
  return "sim_time_s,channel,qber,sifted_rate_bps,secure_rate_bps,"
         "timing_offset_ps,encoder_bias,amzi_temp_K,phase_comp_rad,"
         "fiber_delay_ps,polarization_rad";
}

inline std::string to_csv(const TimeSeriesRecord& r) {
  char buf[352];
  std::snprintf(buf, sizeof(buf),
                "%.9g,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g",
                r.sim_time_s, r.channel, r.qber, r.sifted_rate_bps,
                r.secure_rate_bps, r.op.timing_offset_ps, r.op.encoder_bias,
                r.op.amzi_temp_offset_k, r.op.phase_comp_rad, r.fiber_delay_ps,
                r.polarization_rad);
  return buf;
}

struct ChannelReport {
  int channel_index = 0;
  double wavelength_nm = 0.0;
  double qber_avg = 0.0;  // sifted-weighted: total errors / total sifted
  double sifted_bps_avg = 0.0;
  double secure_bps_avg = 0.0;
  std::int64_t secure_bits_total = 0;
  std::int64_t sifted_bits_total = 0;
  std::int64_t sifted_errors_total = 0;
  std::int64_t distilled_sifted_bits = 0;
  std::int64_t distilled_secure_bits = 0;
};

struct RunTotals {
  double qber_avg = 0.0;
  double sifted_bps_avg = 0.0;
  double secure_bps_avg = 0.0;
  std::int64_t secure_bits_total = 0;
};

struct RunReport {
  std::vector<ChannelReport> per_channel;
  RunTotals totals;
  double channel_loss_db = 0.0;
  double normalized_secure_bits = 0.0;
  double uninterrupted_span_s = 0.0;
  std::string config_digest;
  double duration_s = 0.0;
  double wall_clock_s = 0.0;  // console-only; never serialized
};

/// The long-term quality metric: secure bits referred to a lossless channel.
inline double normalized_secure_bits(double total_secure_bits, double loss_db) {
  return total_secure_bits / db_to_transmittance(loss_db);
}

inline double accumulated_bits(double rate_bps, double duration_s) {
  return rate_bps * duration_s;
}

inline Json summary_to_json(const RunReport& report) {
  Json j;
  j["per_channel"] = Json::array();
  for (const ChannelReport& ch : report.per_channel) {
    Json c;
    c["channel"] = ch.channel_index;
    c["wavelength_nm"] = ch.wavelength_nm;
    c["qber_avg"] = ch.qber_avg;
    c["sifted_bps_avg"] = ch.sifted_bps_avg;
    c["secure_bps_avg"] = ch.secure_bps_avg;
    c["secure_bits_total"] = ch.secure_bits_total;
    c["sifted_bits_total"] = ch.sifted_bits_total;
    c["sifted_errors_total"] = ch.sifted_errors_total;
    c["distilled_sifted_bits"] = ch.distilled_sifted_bits;
    c["distilled_secure_bits"] = ch.distilled_secure_bits;
    j["per_channel"].push_back(std::move(c));
  }
  j["totals"] = {{"qber_avg", report.totals.qber_avg},
                 {"sifted_bps_avg", report.totals.sifted_bps_avg},
                 {"secure_bps_avg", report.totals.secure_bps_avg},
                 {"secure_bits_total", report.totals.secure_bits_total}};
  j["channel_loss_db"] = report.channel_loss_db;
  j["normalized_secure_bits"] = report.normalized_secure_bits;
  j["uninterrupted_span_s"] = report.uninterrupted_span_s;
  j["config_digest"] = report.config_digest;
  return j;
}

inline RunReport summary_from_json(const Json& j) {
  RunReport report;
  for (const Json& c : j.at("per_channel")) {
    ChannelReport ch;
    ch.channel_index = c.at("channel").get<int>();
    ch.wavelength_nm = c.at("wavelength_nm").get<double>();
    ch.qber_avg = c.at("qber_avg").get<double>();
    ch.sifted_bps_avg = c.at("sifted_bps_avg").get<double>();
    ch.secure_bps_avg = c.at("secure_bps_avg").get<double>();
    ch.secure_bits_total = c.at("secure_bits_total").get<std::int64_t>();
    ch.sifted_bits_total = c.at("sifted_bits_total").get<std::int64_t>();
    ch.sifted_errors_total = c.at("sifted_errors_total").get<std::int64_t>();
    ch.distilled_sifted_bits = c.at("distilled_sifted_bits").get<std::int64_t>();
    ch.distilled_secure_bits = c.at("distilled_secure_bits").get<std::int64_t>();
    report.per_channel.push_back(ch);
  }
  const Json& t = j.at("totals");
  report.totals.qber_avg = t.at("qber_avg").get<double>();
  report.totals.sifted_bps_avg = t.at("sifted_bps_avg").get<double>();
  report.totals.secure_bps_avg = t.at("secure_bps_avg").get<double>();
  report.totals.secure_bits_total = t.at("secure_bits_total").get<std::int64_t>();
  report.channel_loss_db = j.at("channel_loss_db").get<double>();
  report.normalized_secure_bits = j.at("normalized_secure_bits").get<double>();
  report.uninterrupted_span_s = j.at("uninterrupted_span_s").get<double>();
  report.config_digest = j.at("config_digest").get<std::string>();
  return report;
}

struct RunSinks {
  std::function<void(const TimeSeriesRecord&)> on_record;
  std::function<void(const Json&)> on_event;
  std::function<void(const Json&)> on_checkpoint;
};

namespace rundetail {

struct ChannelAccum {
  std::int64_t sifted_bits = 0;
  std::int64_t sifted_errors = 0;
  double secure_rate_integral = 0.0;  // bits, from the per-epoch analytic rate
  std::int64_t secure_bits_total = 0;
  std::int64_t distilled_sifted_in = 0;
  double next_distill_time_s = 0.0;

  Json to_json() const {
    return Json{{"sifted_bits", sifted_bits},
                {"sifted_errors", sifted_errors},
                {"secure_rate_integral", secure_rate_integral},
                {"secure_bits_total", secure_bits_total},
                {"distilled_sifted_in", distilled_sifted_in},
                {"next_distill_time_s", next_distill_time_s}};
  }

  static ChannelAccum from_json(const Json& j) {
    ChannelAccum a;
    a.sifted_bits = j.at("sifted_bits").get<std::int64_t>();
    a.sifted_errors = j.at("sifted_errors").get<std::int64_t>();
    a.secure_rate_integral = j.at("secure_rate_integral").get<double>();
    a.secure_bits_total = j.at("secure_bits_total").get<std::int64_t>();
    a.distilled_sifted_in = j.at("distilled_sifted_in").get<std::int64_t>();
    a.next_distill_time_s = j.at("next_distill_time_s").get<double>();
    return a;
  }
};

inline Json drift_to_json(const DriftProcess& p) {
  return Json{{"ou_state", p.ou_state}, {"value", p.value}};
}

inline void drift_from_json(DriftProcess& p, const Json& j) {
  p.ou_state = j.at("ou_state").get<double>();
  p.value = j.at("value").get<double>();
}

inline Json op_to_json(const OperatingPoint& op) {
  return Json{{"timing_offset_ps", op.timing_offset_ps},
              {"encoder_bias", op.encoder_bias},
              {"amzi_temp_offset_k", op.amzi_temp_offset_k},
              {"phase_comp_rad", op.phase_comp_rad}};
}

inline OperatingPoint op_from_json(const Json& j) {
  OperatingPoint op;
  op.timing_offset_ps = j.at("timing_offset_ps").get<double>();
  op.encoder_bias = j.at("encoder_bias").get<double>();
  op.amzi_temp_offset_k = j.at("amzi_temp_offset_k").get<double>();
  op.phase_comp_rad = j.at("phase_comp_rad").get<double>();
  return op;
}

inline Json controller_to_json(const PerturbObserveController::Snapshot& s) {
  return Json{{"committed", op_to_json(s.committed)},
              {"param_index", s.param_index},
              {"phase", s.phase},
              {"cycle_count", s.cycle_count},
              {"slot_epoch", s.slot_epoch},
              {"leg_scores", s.leg_scores},
              {"accum_count_sum", s.accum_count_sum},
              {"accum_qber_sum", s.accum_qber_sum},
              {"accum_epochs", s.accum_epochs},
              {"accum_qber_epochs", s.accum_qber_epochs}};
}

inline PerturbObserveController::Snapshot controller_from_json(const Json& j) {
  PerturbObserveController::Snapshot s;
  s.committed = op_from_json(j.at("committed"));
  s.param_index = j.at("param_index").get<std::size_t>();
  s.phase = j.at("phase").get<int>();
  s.cycle_count = j.at("cycle_count").get<std::int64_t>();
  s.slot_epoch = j.at("slot_epoch").get<int>();
  for (std::size_t i = 0; i < 3; ++i) s.leg_scores[i] = j.at("leg_scores")[i];
  s.accum_count_sum = j.at("accum_count_sum").get<double>();
  s.accum_qber_sum = j.at("accum_qber_sum").get<double>();
  s.accum_epochs = j.at("accum_epochs").get<int>();
  s.accum_qber_epochs = j.at("accum_qber_epochs").get<int>();
  return s;
}

}  // namespace rundetail

/// Advances the coupled environment -> optics -> stabilizer -> distillation
/// loop over the whole scenario. Emits one time-series record per channel
/// per epoch, event-log entries for controller commits and distilled blocks,
/// and periodic checkpoints. Deterministic for a given (config, seed).
inline RunReport run_scenario(const ScenarioConfig& cfg, const RunSinks& sinks = {},
                              const Json* resume_checkpoint = nullptr) {
  const auto wall_start = std::chrono::steady_clock::now();
  const std::size_t nch = cfg.channels.size();
  if (nch == 0) throw ConfigError("run_scenario: no channels configured");
  const double t_fiber = fiber_transmittance(cfg.fiber);
  const std::int64_t total_epochs =
      static_cast<std::int64_t>(std::floor(cfg.duration_s / cfg.epoch_s + 1e-9));
  const double dperiod = distill_period_s(cfg);
  const std::string digest = config_digest(cfg);

  EnvironmentModel env_model = cfg.environment;
  EnvironmentState env;
  env.fiber_delay_ps = env_model.fiber_delay_ps.value;
  env.polarization_angle_rad = env_model.polarization_rad.value;
  env.amzi_temp_error_k = env_model.amzi_temp_k.value;
  env.bias_drift = env_model.bias.value;

  RngStream env_rng(derive_seed(cfg.seed, 0));
  std::vector<RngStream> epoch_rng;
  std::vector<RngStream> distill_rng;
  std::vector<std::optional<PerturbObserveController>> controllers(nch);
  std::vector<rundetail::ChannelAccum> accum(nch);
  for (std::size_t i = 0; i < nch; ++i) {
    const int index = cfg.channels[i].hardware.channel.index;
    epoch_rng.emplace_back(derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(index)));
    distill_rng.emplace_back(derive_seed(cfg.seed, 2000 + static_cast<std::uint64_t>(index)));
    if (cfg.stabilizer.enabled) {
      controllers[i].emplace(cfg.stabilizer.parameters, cfg.channels[i].initial_op,
                             cfg.stabilizer.trial_period_s, cfg.epoch_s);
    }
    accum[i].next_distill_time_s = dperiod;
  }

  std::vector<double> closed_spans;
  double span_start_s = 0.0;
  std::int64_t start_epoch = 0;

  if (resume_checkpoint) {
    const Json& ck = *resume_checkpoint;
    if (ck.at("config_digest").get<std::string>() != digest) {
      throw ConfigError("resume: checkpoint was taken with a different config");
    }
    start_epoch = ck.at("epoch_index").get<std::int64_t>();
    env.fiber_delay_ps = ck.at("env").at("fiber_delay_ps").get<double>();
    env.polarization_angle_rad = ck.at("env").at("polarization_angle_rad").get<double>();
    env.amzi_temp_error_k = ck.at("env").at("amzi_temp_error_k").get<double>();
    env.bias_drift = ck.at("env").at("bias_drift").get<double>();
    env.sim_time_s = ck.at("env").at("sim_time_s").get<double>();
    rundetail::drift_from_json(env_model.fiber_delay_ps, ck.at("drift").at("fiber_delay_ps"));
    rundetail::drift_from_json(env_model.polarization_rad, ck.at("drift").at("polarization_rad"));
    rundetail::drift_from_json(env_model.amzi_temp_k, ck.at("drift").at("amzi_temp_K"));
    rundetail::drift_from_json(env_model.bias, ck.at("drift").at("bias"));
    env_rng.load_state(ck.at("rng").at("env").get<std::string>());
    for (std::size_t i = 0; i < nch; ++i) {
      epoch_rng[i].load_state(ck.at("rng").at("channels")[i].get<std::string>());
      distill_rng[i].load_state(ck.at("rng").at("distill")[i].get<std::string>());
      accum[i] = rundetail::ChannelAccum::from_json(ck.at("accum")[i]);
      if (controllers[i]) {
        controllers[i]->restore(
            rundetail::controller_from_json(ck.at("controllers")[i]));
      }
    }
    for (const Json& s : ck.at("spans").at("closed")) closed_spans.push_back(s.get<double>());
    // Resuming is an interruption: the running span closes at the checkpoint.
    closed_spans.push_back(env.sim_time_s - ck.at("spans").at("span_start_s").get<double>());
    span_start_s = env.sim_time_s;
    if (sinks.on_event) {
      sinks.on_event(Json{{"type", "resumed"}, {"sim_time_s", env.sim_time_s}});
    }
  } else if (sinks.on_event) {
    sinks.on_event(Json{{"type", "run_started"},
                        {"config_digest", digest},
                        {"duration_s", cfg.duration_s},
                        {"epoch_s", cfg.epoch_s}});
  }

  const std::int64_t checkpoint_epochs =
      cfg.checkpoint_period_s > 0.0
          ? std::llround(cfg.checkpoint_period_s / cfg.epoch_s)
          : 0;

  const auto write_checkpoint = [&](std::int64_t next_epoch) {
    Json ck;
    ck["type"] = "checkpoint";
    ck["config_digest"] = digest;
    ck["epoch_index"] = next_epoch;
    ck["env"] = Json{{"fiber_delay_ps", env.fiber_delay_ps},
                     {"polarization_angle_rad", env.polarization_angle_rad},
                     {"amzi_temp_error_k", env.amzi_temp_error_k},
                     {"bias_drift", env.bias_drift},
                     {"sim_time_s", env.sim_time_s}};
    ck["drift"] = Json{{"fiber_delay_ps", rundetail::drift_to_json(env_model.fiber_delay_ps)},
                       {"polarization_rad", rundetail::drift_to_json(env_model.polarization_rad)},
                       {"amzi_temp_K", rundetail::drift_to_json(env_model.amzi_temp_k)},
                       {"bias", rundetail::drift_to_json(env_model.bias)}};
    Json ch_states = Json::array();
    Json di_states = Json::array();
    Json ctrls = Json::array();
    Json accs = Json::array();
    for (std::size_t i = 0; i < nch; ++i) {
      ch_states.push_back(epoch_rng[i].save_state());
      di_states.push_back(distill_rng[i].save_state());
      ctrls.push_back(controllers[i] ? rundetail::controller_to_json(controllers[i]->snapshot())
                                     : Json());
      accs.push_back(accum[i].to_json());
    }
    ck["rng"] = Json{{"env", env_rng.save_state()},
                     {"channels", std::move(ch_states)},
                     {"distill", std::move(di_states)}};
    ck["controllers"] = std::move(ctrls);
    ck["accum"] = std::move(accs);
    Json spans = Json::array();
    for (double s : closed_spans) spans.push_back(s);
    ck["spans"] = Json{{"closed", std::move(spans)}, {"span_start_s", span_start_s}};
    sinks.on_checkpoint(ck);
    if (sinks.on_event) {
      sinks.on_event(Json{{"type", "checkpoint_saved"}, {"sim_time_s", env.sim_time_s}});
    }
  };

  EpochOptions epoch_opts;
  epoch_opts.pulse_mc_gate_cap = cfg.pulse_mc_gate_cap;
  epoch_opts.synthesize_streams = false;

  for (std::int64_t e = start_epoch; e < total_epochs; ++e) {
    env = advance_environment(env_model, env, cfg.epoch_s,
                              cfg.fiber.polarization_daylight_boost, env_rng);
    for (std::size_t i = 0; i < nch; ++i) {
      const ChannelScenario& ch = cfg.channels[i];
      const int index = ch.hardware.channel.index;
      const OperatingPoint op =
          controllers[i] ? controllers[i]->active() : ch.initial_op;
      const OutcomeProbabilities probs =
          outcome_probabilities(ch.hardware, t_fiber, op, env);

      EpochResult res = simulate_epoch(cfg.mode, cfg.epoch_s,
                                       ch.hardware.source.clock_rate_hz, probs,
                                       epoch_rng[i], epoch_opts);
      EpochStats& stats = res.stats;
      stats.epoch_index = e;
      stats.channel_index = index;

      RateFormulaConfig rate;
      rate.kind = cfg.distill.formula;
      rate.ec_inefficiency_f = cfg.distill.ec_inefficiency_f;
      rate.kappa = cfg.distill.kappa;
      rate.mu = ch.hardware.source.mu_is_per_pulse
                    ? 2.0 * ch.hardware.source.mean_photon_number
                    : ch.hardware.source.mean_photon_number;
      rate.detection_prob_per_pulse = probs.p_signal_click + probs.p_dark_click;
      const double fraction =
          stats.qber < 0.5 ? secure_fraction(rate, stats.qber) : 0.0;
      stats.secure_rate_bps = stats.sifted_rate_bps * fraction;

      if (controllers[i]) {
        if (auto ev = controllers[i]->observe(stats, env.sim_time_s)) {
          if (sinks.on_event) {
            sinks.on_event(Json{{"type", "stabilizer_commit"},
                                {"sim_time_s", ev->sim_time_s},
                                {"channel", index},
                                {"parameter", param_name(ev->id)},
                                {"chosen_offset", ev->chosen_offset},
                                {"committed_value", ev->committed_value},
                                {"scores", ev->scores},
                                {"cycle", ev->cycle_count}});
          }
        }
      }

      accum[i].sifted_bits += stats.sifted_bits;
      accum[i].sifted_errors += stats.sifted_errors;
      accum[i].secure_rate_integral += stats.secure_rate_bps * cfg.epoch_s;

      if (sinks.on_record) {
        TimeSeriesRecord rec;
        rec.sim_time_s = env.sim_time_s;
        rec.channel = index;
        rec.qber = stats.qber;
        rec.sifted_rate_bps = stats.sifted_rate_bps;
        rec.secure_rate_bps = stats.secure_rate_bps;
        rec.op = op;
        rec.fiber_delay_ps = env.fiber_delay_ps;
        rec.polarization_rad = env.polarization_angle_rad;
        sinks.on_record(rec);
      }

      if (env.sim_time_s + 1e-9 >= accum[i].next_distill_time_s) {
        accum[i].next_distill_time_s += dperiod;
        const double p_err = epoch_qber(probs);
        const SiftedBlock block = synthesize_sifted_block(
            cfg.distill.block_bits, p_err, index, distill_rng[i]);
        DistillConfig dcfg;
        dcfg.sample_fraction = cfg.distill.sample_fraction;
        dcfg.sample_floor_bits = cfg.distill.sample_floor_bits;
        dcfg.cascade_passes = cfg.distill.cascade_passes;
        dcfg.subtract_leakage_in_calibrated =
            cfg.distill.subtract_leakage_in_calibrated;
        DistillRecord drec;
        try {
          auto [key, record] = distill_block(block, rate, dcfg, distill_rng[i]);
          drec = record;
        } catch (const ReconciliationError&) {
          drec.channel_index = index;
          drec.sifted_in = block.size();
          drec.reconciled_ok = false;  // block discarded
        }
        drec.sim_time_s = env.sim_time_s;
        accum[i].secure_bits_total += drec.secure_bits;
        accum[i].distilled_sifted_in += drec.sifted_in;
        if (sinks.on_event) {
          sinks.on_event(Json{{"type", "distill_block"},
                              {"sim_time_s", drec.sim_time_s},
                              {"channel", drec.channel_index},
                              {"sifted_in", drec.sifted_in},
                              {"disclosed_sample_bits", drec.disclosed_sample_bits},
                              {"estimated_qber", drec.estimated_qber},
                              {"reconciled_bits", drec.reconciled_bits},
                              {"leaked_bits", drec.leaked_bits},
                              {"secure_bits", drec.secure_bits},
                              {"secure_fraction", drec.secure_fraction_used},
                              {"ok", drec.reconciled_ok}});
        }
      }
    }

    if (checkpoint_epochs > 0 && sinks.on_checkpoint && (e + 1) % checkpoint_epochs == 0 &&
        e + 1 < total_epochs) {
      write_checkpoint(e + 1);
    }
  }

  if (sinks.on_event) {
    sinks.on_event(Json{{"type", "run_complete"}, {"sim_time_s", env.sim_time_s}});
  }

  RunReport report;
  report.duration_s = cfg.duration_s;
  report.channel_loss_db = cfg.fiber.loss_db;
  report.config_digest = digest;
  std::int64_t total_sifted = 0;
  std::int64_t total_errors = 0;
  double total_secure_rate_integral = 0.0;
  for (std::size_t i = 0; i < nch; ++i) {
    ChannelReport ch;
    ch.channel_index = cfg.channels[i].hardware.channel.index;
    ch.wavelength_nm = cfg.channels[i].hardware.channel.wavelength_nm;
    ch.sifted_bits_total = accum[i].sifted_bits;
    ch.sifted_errors_total = accum[i].sifted_errors;
    ch.qber_avg = accum[i].sifted_bits > 0
                      ? static_cast<double>(accum[i].sifted_errors) /
                            static_cast<double>(accum[i].sifted_bits)
                      : 0.0;
    ch.sifted_bps_avg = static_cast<double>(accum[i].sifted_bits) / cfg.duration_s;
    ch.secure_bps_avg = accum[i].secure_rate_integral / cfg.duration_s;
    ch.secure_bits_total = accum[i].secure_bits_total;
    ch.distilled_sifted_bits = accum[i].distilled_sifted_in;
    ch.distilled_secure_bits = accum[i].secure_bits_total;
    report.per_channel.push_back(ch);
    total_sifted += accum[i].sifted_bits;
    total_errors += accum[i].sifted_errors;
    total_secure_rate_integral += accum[i].secure_rate_integral;
    report.totals.secure_bits_total += accum[i].secure_bits_total;
  }
  report.totals.qber_avg =
      total_sifted > 0
          ? static_cast<double>(total_errors) / static_cast<double>(total_sifted)
          : 0.0;
  report.totals.sifted_bps_avg = static_cast<double>(total_sifted) / cfg.duration_s;
  report.totals.secure_bps_avg = total_secure_rate_integral / cfg.duration_s;
  report.normalized_secure_bits = normalized_secure_bits(
      static_cast<double>(report.totals.secure_bits_total), cfg.fiber.loss_db);

  closed_spans.push_back(cfg.duration_s - span_start_s);
  report.uninterrupted_span_s = *std::max_element(closed_spans.begin(), closed_spans.end());

  report.wall_clock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start)
          .count();
  return report;
}

// ---------------------------------------------------------------------------
// File emission: CSV time series, JSONL event log, summary JSON, checkpoint.

class FileEmitter {
 public:
  FileEmitter(const std::string& dir, bool append) : dir_(dir) {
    std::filesystem::create_directories(dir);
    const bool fresh = !append;
    csv_.open(path("timeseries.csv"),
              fresh ? std::ios::trunc : std::ios::app);
    events_.open(path("events.jsonl"), fresh ? std::ios::trunc : std::ios::app);
    if (!csv_ || !events_) throw IoError("cannot open output files in " + dir);
    if (fresh) csv_ << csv_header() << "\n";
  }

  RunSinks sinks() {
    RunSinks s;
    s.on_record = [this](const TimeSeriesRecord& r) { csv_ << to_csv(r) << "\n"; };
    s.on_event = [this](const Json& e) { events_ << e.dump() << "\n"; };
    s.on_checkpoint = [this](const Json& ck) {
      std::ofstream out(path("checkpoint.json"), std::ios::trunc);
      if (!out) throw IoError("cannot write checkpoint in " + dir_);
      out << ck.dump(2) << "\n";
    };
    return s;
  }

  void write_summary(const RunReport& report) {
    std::ofstream out(path("summary.json"), std::ios::trunc);
    if (!out) throw IoError("cannot write summary in " + dir_);
    out << summary_to_json(report).dump(2) << "\n";
  }

  void flush() {
    csv_.flush();
    events_.flush();
  }

  std::string path(const std::string& name) const {
    return (std::filesystem::path(dir_) / name).string();
  }

 private:
  std::string dir_;
  std::ofstream csv_;
  std::ofstream events_;
};

inline Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  Json j;
  in >> j;
  return j;
}

/// Drops time-series rows and events recorded after `sim_time_s`. Called
/// before resuming so rows an interrupted process wrote past its last
/// checkpoint do not appear twice.
inline void trim_outputs_after(const std::string& dir, double sim_time_s) {
  const auto trim = [&](const std::string& name, auto&& keep) {
    const std::string path = (std::filesystem::path(dir) / name).string();
    std::ifstream in(path);
    if (!in) return;
    std::vector<std::string> kept;
    std::string line;
    while (std::getline(in, line)) {
      if (keep(line)) kept.push_back(line);
    }
    in.close();
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot rewrite " + path);
    for (const std::string& l : kept) out << l << "\n";
  };
  trim("timeseries.csv", [&](const std::string& line) {
    double t = 0.0;
    if (std::sscanf(line.c_str(), "%lf,", &t) != 1) return true;  // header
    return t <= sim_time_s + 1e-9;
  });
  trim("events.jsonl", [&](const std::string& line) {
    const Json e = Json::parse(line, nullptr, false);
    if (e.is_discarded() || !e.contains("sim_time_s")) return true;
    return e.at("sim_time_s").get<double>() <= sim_time_s + 1e-9;
  });
}

inline RunReport load_summary(const std::string& dir) {
  return summary_from_json(
      load_json_file((std::filesystem::path(dir) / "summary.json").string()));
}

// Minimal reader for the emitted CSV (used by compare and tests).
inline std::vector<TimeSeriesRecord> load_timeseries(const std::string& dir) {
  const std::string path = (std::filesystem::path(dir) / "timeseries.csv").string();
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<TimeSeriesRecord> records;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    TimeSeriesRecord r;
    double ch = 0;
    double rest[6];
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf",
                    &r.sim_time_s, &ch, &r.qber, &r.sifted_rate_bps,
                    &r.secure_rate_bps, &rest[0], &rest[1], &rest[2], &rest[3],
                    &rest[4], &rest[5]) != 11) {
      throw IoError("malformed CSV row in " + path);
    }
    r.channel = static_cast<int>(ch);
    r.op.timing_offset_ps = rest[0];
    r.op.encoder_bias = rest[1];
    r.op.amzi_temp_offset_k = rest[2];
    r.op.phase_comp_rad = rest[3];
    r.fiber_delay_ps = rest[4];
    r.polarization_rad = rest[5];
    records.push_back(r);
  }
  return records;
}

struct RunComparison {
  struct Side {
    std::string dir;
    double qber_avg = 0.0;
    double qber_max_epoch = 0.0;
    double qber_max_windowed = 0.0;
    double sifted_bps_avg = 0.0;
    double secure_bps_avg = 0.0;
    std::int64_t secure_bits_total = 0;
  };
  Side a, b;
  double window_s = 600.0;
};

inline RunComparison::Side summarize_side(const std::string& dir, double window_s) {
  RunComparison::Side side;
  side.dir = dir;
  const RunReport report = load_summary(dir);
  side.qber_avg = report.totals.qber_avg;
  side.sifted_bps_avg = report.totals.sifted_bps_avg;
  side.secure_bps_avg = report.totals.secure_bps_avg;
  side.secure_bits_total = report.totals.secure_bits_total;

  const std::vector<TimeSeriesRecord> records = load_timeseries(dir);
  double win_sum = 0.0;
  int win_count = 0;
  double win_end = window_s;
  for (const TimeSeriesRecord& r : records) {
    side.qber_max_epoch = std::max(side.qber_max_epoch, r.qber);
    if (r.sim_time_s > win_end) {
      if (win_count > 0) {
        side.qber_max_windowed =
            std::max(side.qber_max_windowed, win_sum / win_count);
      }
      win_sum = 0.0;
      win_count = 0;
      while (r.sim_time_s > win_end) win_end += window_s;
    }
    win_sum += r.qber;
    ++win_count;
  }
  if (win_count > 0) {
    side.qber_max_windowed = std::max(side.qber_max_windowed, win_sum / win_count);
  }
  return side;
}

/// A/B comparison of two emitted run directories (e.g. stabilizer on/off).
inline RunComparison compare_runs(const std::string& dir_a, const std::string& dir_b,
                                  double window_s = 600.0) {
  RunComparison cmp;
  cmp.window_s = window_s;
  cmp.a = summarize_side(dir_a, window_s);
  cmp.b = summarize_side(dir_b, window_s);
  return cmp;
}

inline std::string format_comparison(const RunComparison& cmp) {
  char buf[1024];
  std::snprintf(
      buf, sizeof(buf),
      "run A: %s\nrun B: %s\n"
      "                         A              B\n"
      "mean QBER          %10.4f%%    %10.4f%%\n"
      "max epoch QBER     %10.4f%%    %10.4f%%\n"
      "max %4.0f s QBER    %10.4f%%    %10.4f%%\n"
      "sifted rate [kbps] %10.1f     %10.1f\n"
      "secure rate [kbps] %10.1f     %10.1f\n"
      "secure bits        %10lld     %10lld\n",
      cmp.a.dir.c_str(), cmp.b.dir.c_str(), 100.0 * cmp.a.qber_avg,
      100.0 * cmp.b.qber_avg, 100.0 * cmp.a.qber_max_epoch,
      100.0 * cmp.b.qber_max_epoch, cmp.window_s, 100.0 * cmp.a.qber_max_windowed,
      100.0 * cmp.b.qber_max_windowed, cmp.a.sifted_bps_avg / 1e3,
      cmp.b.sifted_bps_avg / 1e3, cmp.a.secure_bps_avg / 1e3,
      cmp.b.secure_bps_avg / 1e3,
      static_cast<long long>(cmp.a.secure_bits_total),
      static_cast<long long>(cmp.b.secure_bits_total));
  return buf;
}

}  // namespace qkdsim
