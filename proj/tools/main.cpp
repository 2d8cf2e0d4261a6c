// Command-line front end: run a scenario, summarize an output directory,
// or compare two runs (typically stabilizer on vs off).

#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"
#include "qkdsim/runner.hpp"
#include "qkdsim/scenario.hpp"

namespace {

void print_report(const qkdsim::RunReport& report) {
  for (const qkdsim::ChannelReport& ch : report.per_channel) {
    std::printf(
        "channel %d (%.2f nm): QBER %.3f %%, sifted %.1f kbps, secure %.1f kbps, "
        "distilled %lld/%lld bits\n",
        ch.channel_index, ch.wavelength_nm, 100.0 * ch.qber_avg,
        ch.sifted_bps_avg / 1e3, ch.secure_bps_avg / 1e3,
        static_cast<long long>(ch.distilled_secure_bits),
        static_cast<long long>(ch.distilled_sifted_bits));
  }
  std::printf("totals: QBER %.3f %%, sifted %.1f kbps, secure %.1f kbps, "
              "secure bits %lld\n",
              100.0 * report.totals.qber_avg, report.totals.sifted_bps_avg / 1e3,
              report.totals.secure_bps_avg / 1e3,
              static_cast<long long>(report.totals.secure_bits_total));
  std::printf("channel loss %.2f dB, normalized secure bits %.4g\n",
              report.channel_loss_db, report.normalized_secure_bits);
  std::printf("uninterrupted span %.0f s of %.0f s\n", report.uninterrupted_span_s,
              report.duration_s);
  std::printf("wall clock %.2f s\n", report.wall_clock_s);
}

int cmd_run(const std::string& config_path, std::uint64_t* seed, double* duration,
            const std::string& mode, bool no_stabilizer, std::string out_dir,
            const std::string& resume_path) {
  qkdsim::ScenarioConfig cfg = qkdsim::load_scenario(config_path);
  if (seed) cfg.seed = *seed;
  if (duration) {
    cfg.duration_s = *duration;
    if (cfg.duration_s < cfg.epoch_s) {
      throw qkdsim::ConfigError("--duration must be >= epoch_s");
    }
  }
  if (!mode.empty()) {
    if (mode == "pulse_mc") {
      cfg.mode = qkdsim::SimMode::PulseMc;
    } else if (mode == "rate_level") {
      cfg.mode = qkdsim::SimMode::RateLevel;
    } else {
      throw qkdsim::ConfigError("--mode must be pulse_mc or rate_level");
    }
  }
  if (no_stabilizer) cfg.stabilizer.enabled = false;
  if (out_dir.empty()) out_dir = cfg.out_dir.empty() ? "run_out" : cfg.out_dir;

  qkdsim::Json checkpoint;
  const bool resuming = !resume_path.empty();
  if (resuming) {
    checkpoint = qkdsim::load_json_file(resume_path);
    qkdsim::trim_outputs_after(out_dir,
                               checkpoint.at("env").at("sim_time_s").get<double>());
  }

  qkdsim::FileEmitter emitter(out_dir, resuming);
  const qkdsim::RunReport report =
      qkdsim::run_scenario(cfg, emitter.sinks(), resuming ? &checkpoint : nullptr);
  emitter.flush();
  emitter.write_summary(report);
  std::printf("outputs written to %s\n", out_dir.c_str());
  print_report(report);
  return 0;
}

int cmd_summarize(const std::string& dir) {
  const qkdsim::RunReport report = qkdsim::load_summary(dir);
  for (const qkdsim::ChannelReport& ch : report.per_channel) {
    std::printf("channel %d (%.2f nm): QBER %.3f %%, sifted %.1f kbps, "
                "secure %.1f kbps\n",
                ch.channel_index, ch.wavelength_nm, 100.0 * ch.qber_avg,
                ch.sifted_bps_avg / 1e3, ch.secure_bps_avg / 1e3);
  }
  std::printf("totals: QBER %.3f %%, secure bits %lld over loss %.2f dB\n",
              100.0 * report.totals.qber_avg,
              static_cast<long long>(report.totals.secure_bits_total),
              report.channel_loss_db);
  const double recomputed = qkdsim::normalized_secure_bits(
      static_cast<double>(report.totals.secure_bits_total), report.channel_loss_db);
  std::printf("normalized secure bits: %.6g (recomputed %.6g)\n",
              report.normalized_secure_bits, recomputed);
  std::printf("uninterrupted span: %.0f s\n", report.uninterrupted_span_s);
  std::printf("config digest: %s\n", report.config_digest.c_str());
  return 0;
}

int cmd_compare(const std::string& dir_a, const std::string& dir_b, double window_s) {
  const qkdsim::RunComparison cmp = qkdsim::compare_runs(dir_a, dir_b, window_s);
  std::printf("%s", qkdsim::format_comparison(cmp).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"WDM time-bin BB84 link simulator and key-distillation stack"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  double duration = 0.0;
  bool duration_set = false;
  std::string mode;
  bool no_stabilizer = false;
  std::string out_dir;
  std::string resume_path;

  CLI::App* run = app.add_subcommand("run", "simulate a scenario config");
  run->add_option("config", config_path, "scenario config file")->required();
  run->add_option("--seed", seed, "override the master seed")
      ->each([&](const std::string&) { seed_set = true; });
  run->add_option("--duration", duration, "override duration_s")
      ->each([&](const std::string&) { duration_set = true; });
  run->add_option("--mode", mode, "pulse_mc or rate_level");
  run->add_flag("--no-stabilizer", no_stabilizer, "disable the stabilizer");
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--resume", resume_path, "checkpoint.json to resume from");

  std::string sum_dir;
  CLI::App* summarize = app.add_subcommand("summarize", "print a run summary");
  summarize->add_option("dir", sum_dir, "run output directory")->required();

  std::string cmp_a, cmp_b;
  double window_s = 600.0;
  CLI::App* compare = app.add_subcommand("compare", "A/B report of two runs");
  compare->add_option("dir_a", cmp_a, "first run directory")->required();
  compare->add_option("dir_b", cmp_b, "second run directory")->required();
  compare->add_option("--window", window_s, "averaging window in seconds");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      return cmd_run(config_path, seed_set ? &seed : nullptr,
                     duration_set ? &duration : nullptr, mode, no_stabilizer,
                     out_dir, resume_path);
    }
    if (summarize->parsed()) return cmd_summarize(sum_dir);
    if (compare->parsed()) return cmd_compare(cmp_a, cmp_b, window_s);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
