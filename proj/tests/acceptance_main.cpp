// Acceptance suite. Each criterion prints one line:
//   [PASS|FAIL] criterion N: <name> (<observed vs required>)
// Exit code is the number of failed criteria.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "qkdsim/runner.hpp"
#include "qkdsim/scenario.hpp"
#include "qkdsim/stabilizer.hpp"

using namespace qkdsim;

namespace {

int g_failures = 0;

void check(int id, const std::string& name, bool ok, const std::string& detail) {
  std::printf("[%s] criterion %d: %s (%s)\n", ok ? "PASS" : "FAIL", id,
              name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

std::string config_path(const std::string& name) {
  return std::string(QKDSIM_CONFIG_DIR) + "/" + name;
}

std::string temp_dir(const std::string& tag) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("qkdsim_acceptance_" + tag);
  std::filesystem::remove_all(dir);
  return dir.string();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

char fmtbuf[512];

// --- criterion 1: Table-2 normalized-secure-key recomputation -------------

void criterion_1() {
  struct Row {
    double bits;
    double loss_db;
    double published_tbit;
    int decimals;
  };
  // (total secure bits, channel loss) pairs with the published normalized
  // values; computed values are rounded to the published precision first
  // because the published inputs are themselves rounded.
  const std::vector<Row> rows = {{595.6e9, 12.6, 10.8, 1},
                                 {70e9, 2.5, 0.12, 2},
                                 {63.3e9, 14.5, 1.78, 2},
                                 {4.4e9, 5.6, 0.016, 3}};
  bool ok = true;
  std::string detail;
  for (const Row& row : rows) {
    const double tbit = normalized_secure_bits(row.bits, row.loss_db) / 1e12;
    const double scale = std::pow(10.0, row.decimals);
    const double rounded = std::round(tbit * scale) / scale;
    const bool row_ok =
        std::abs(rounded - row.published_tbit) <= 0.02 * row.published_tbit;
    ok = ok && row_ok;
    std::snprintf(fmtbuf, sizeof(fmtbuf), "%.4g->%g ", tbit, row.published_tbit);
    detail += fmtbuf;
  }
  check(1, "normalized secure key recomputation", ok, detail + "Tbit");
}

// --- criterion 2: total-key identity ---------------------------------------

void criterion_2() {
  const double bits = accumulated_bits(229.8e3, 30.0 * 86400.0);
  const double rel = std::abs(bits - 595.6e9) / 595.6e9;
  std::snprintf(fmtbuf, sizeof(fmtbuf), "%.4f Gbit vs 595.6, rel err %.2e",
                bits / 1e9, rel);
  check(2, "229.8 kbps over 30 days totals 595.6 Gbit", rel <= 1e-3, fmtbuf);
}

// --- criterion 3: calibrated steady-state reproduction ---------------------

void criterion_3() {
  const ScenarioConfig cfg = load_scenario(config_path("paper_2ch.cfg"));
  const RunReport report = run_scenario(cfg);

  const double target_sifted[2] = {315300.0, 168000.0};
  bool ok = true;
  std::string detail;
  std::int64_t distilled_secure = 0;
  std::int64_t distilled_sifted = 0;
  for (std::size_t i = 0; i < report.per_channel.size(); ++i) {
    const ChannelReport& ch = report.per_channel[i];
    const bool qber_ok = ch.qber_avg >= 0.011 && ch.qber_avg <= 0.024;
    const bool sift_ok =
        std::abs(ch.sifted_bps_avg - target_sifted[i]) <= 0.2 * target_sifted[i];
    ok = ok && qber_ok && sift_ok;
    distilled_secure += ch.distilled_secure_bits;
    distilled_sifted += ch.distilled_sifted_bits;
    std::snprintf(fmtbuf, sizeof(fmtbuf), "ch%zu qber %.3f%% sift %.1fk ", i,
                  100.0 * ch.qber_avg, ch.sifted_bps_avg / 1e3);
    detail += fmtbuf;
  }
  const double ratio = distilled_sifted > 0
                           ? static_cast<double>(distilled_secure) /
                                 static_cast<double>(distilled_sifted)
                           : 0.0;
  const bool ratio_ok = std::abs(ratio - 0.48) <= 0.04;
  ok = ok && ratio_ok;
  std::snprintf(fmtbuf, sizeof(fmtbuf), "secure/sifted %.3f", ratio);
  detail += fmtbuf;
  check(3, "two-hour run reproduces the calibrated steady state", ok, detail);
}

// --- criterion 4: stabilization efficacy A/B --------------------------------

void criterion_4() {
  ScenarioConfig cfg = load_scenario(config_path("paper_2ch.cfg"));
  cfg.duration_s = 86400.0;
  cfg.checkpoint_period_s = 0.0;

  const std::string dir_on = temp_dir("stab_on");
  const std::string dir_off = temp_dir("stab_off");
  {
    FileEmitter em(dir_on, false);
    const RunReport r = run_scenario(cfg, em.sinks());
    em.flush();
    em.write_summary(r);
  }
  cfg.stabilizer.enabled = false;
  {
    FileEmitter em(dir_off, false);
    const RunReport r = run_scenario(cfg, em.sinks());
    em.flush();
    em.write_summary(r);
  }
  const RunComparison cmp = compare_runs(dir_on, dir_off);
  const bool on_ok = cmp.a.qber_avg <= 0.025;
  const bool off_ok = cmp.b.qber_max_epoch > 0.05;
  std::snprintf(fmtbuf, sizeof(fmtbuf),
                "on mean %.3f%% (<=2.5%%), off max epoch %.1f%% (>5%%)",
                100.0 * cmp.a.qber_avg, 100.0 * cmp.b.qber_max_epoch);
  check(4, "24 h stabilizer on/off comparison", on_ok && off_ok, fmtbuf);
  std::filesystem::remove_all(dir_on);
  std::filesystem::remove_all(dir_off);
}

// --- criterion 5: timing model pin ------------------------------------------

void criterion_5() {
  const double f50 = timing_factor(50.0, 74.845);
  const double f0 = timing_factor(0.0, 74.845);
  std::snprintf(fmtbuf, sizeof(fmtbuf), "f(50)=%.4f, f(0)=%.1f", f50, f0);
  check(5, "50 ps misalignment costs 20% of the counts",
        std::abs(f50 - 0.80) <= 0.002 && f0 == 1.0, fmtbuf);
}

// --- criterion 6: stabilizer convergence oracle -----------------------------

double scan_optimum(const ChannelHardware& hw, const TunableParameter& par) {
  double best_value = 0.0;
  double best_score = 0.0;
  bool first = true;
  for (double v = par.min_value; v <= par.max_value + 1e-9; v += par.step) {
    OperatingPoint op;
    param_set(op, par.id, v, par.step);
    const OutcomeProbabilities probs = outcome_probabilities(
        hw, db_to_transmittance(12.6), op, EnvironmentState{});
    const double score = par.objective == Objective::MaximizeCounts
                             ? probs.p_signal_click
                             : epoch_qber(probs);
    const bool better = par.objective == Objective::MaximizeCounts
                            ? score > best_score
                            : score < best_score;
    if (first || better) {
      best_score = score;
      best_value = v;
      first = false;
    }
  }
  return best_value;
}

void criterion_6() {
  ChannelHardware hw;
  hw.channel = make_wavelength_channel(0, 1547.72);
  hw.receiver_excess_loss = 0.1473978538;
  const std::vector<TunableParameter> params = default_tunable_parameters();
  const auto measure = [&hw](const OperatingPoint& op) {
    const OutcomeProbabilities probs = outcome_probabilities(
        hw, db_to_transmittance(12.6), op, EnvironmentState{});
    return expected_epoch_stats(probs, hw.source.clock_rate_hz, 1.0);
  };

  // Timing: 50 ps off, frozen environment, scan oracle says 0.
  const double timing_opt = scan_optimum(hw, params[0]);
  OperatingPoint op;
  op.timing_offset_ps = 50.0;
  int timing_rounds = 0;
  while (timing_rounds < 8 && std::abs(op.timing_offset_ps - timing_opt) > 12.5) {
    op = stabilization_round(op, measure, params);
    ++timing_rounds;
  }
  const bool timing_ok = std::abs(op.timing_offset_ps - timing_opt) <= 12.5;

  // Phase compensation against a pi/4 channel mismatch. The interferometer
  // temperature is a redundant coarse phase knob, so it stays fixed here to
  // keep the compensator's scan optimum well-defined.
  hw.phase_offset_rad = M_PI / 4.0;
  std::vector<TunableParameter> no_temp = params;
  no_temp.erase(no_temp.begin() + 2);
  const double phase_opt = scan_optimum(hw, no_temp[2]);
  OperatingPoint op2;
  int phase_rounds = 0;
  while (phase_rounds < 100 && std::abs(op2.phase_comp_rad - phase_opt) > 0.02) {
    op2 = stabilization_round(op2, measure, no_temp);
    ++phase_rounds;
  }
  const bool phase_ok = std::abs(op2.phase_comp_rad - phase_opt) <= 0.02;

  std::snprintf(fmtbuf, sizeof(fmtbuf),
                "timing %d rounds -> %.1f ps (opt %.1f); phase %d rounds -> "
                "%.3f rad (opt %.3f)",
                timing_rounds, op.timing_offset_ps, timing_opt, phase_rounds,
                op2.phase_comp_rad, phase_opt);
  check(6, "perturb-and-observe reaches the scan optima", timing_ok && phase_ok,
        fmtbuf);
}

// --- criterion 7: distillation correctness ----------------------------------

void criterion_7() {
  int successes = 0;
  double leak_sum = 0.0;
  const int trials = 100;
  for (int s = 0; s < trials; ++s) {
    RngStream rng(31000 + s);
    const SiftedBlock block = synthesize_sifted_block(100000, 0.017, 0, rng);
    try {
      const ReconciledBlock rec = cascade_reconcile(block, 0.017, rng);
      if (rec.bits == block.alice) ++successes;
      leak_sum += static_cast<double>(rec.leaked_bits) / block.size();
    } catch (const ReconciliationError&) {
      // counted as a failure
    }
  }
  const double leak_avg = leak_sum / trials;
  const double leak_budget = 1.25 * binary_entropy(0.017);
  const bool cascade_ok = successes >= 99 && leak_avg <= leak_budget;

  // Toeplitz: dense 2x4 hand example plus GF(2) linearity on 1000 pairs.
  const BitVec x = {1, 0, 1, 1};
  const BitVec seed = {1, 0, 1, 1, 0};
  BitVec dense(2, 0);
  for (int i = 0; i < 2; ++i) {
    int acc = 0;
    for (int j = 0; j < 4; ++j) acc ^= seed[i - j + 3] & x[j];
    dense[i] = static_cast<std::uint8_t>(acc);
  }
  bool toeplitz_ok = toeplitz_amplify(x, 2, seed) == dense;

  RngStream rng(77);
  const std::int64_t n = 256;
  const std::int64_t m = 128;
  const BitVec hseed = random_bits(n + m - 1, rng);
  for (int trial = 0; trial < 1000 && toeplitz_ok; ++trial) {
    const BitVec a = random_bits(n, rng);
    const BitVec b = random_bits(n, rng);
    BitVec ab(n);
    for (std::int64_t i = 0; i < n; ++i) ab[i] = a[i] ^ b[i];
    const BitVec ha = toeplitz_amplify(a, m, hseed);
    const BitVec hb = toeplitz_amplify(b, m, hseed);
    const BitVec hab = toeplitz_amplify(ab, m, hseed);
    for (std::int64_t i = 0; i < m; ++i) {
      if (hab[i] != (ha[i] ^ hb[i])) {
        toeplitz_ok = false;
        break;
      }
    }
  }
  std::snprintf(fmtbuf, sizeof(fmtbuf),
                "cascade %d/100 ok, leak/n %.4f (<= %.4f); toeplitz %s",
                successes, leak_avg, leak_budget,
                toeplitz_ok ? "exact+linear" : "mismatch");
  check(7, "cascade and toeplitz correctness", cascade_ok && toeplitz_ok, fmtbuf);
}

// --- criterion 8: mode equivalence ------------------------------------------

void criterion_8() {
  OutcomeProbabilities probs;
  probs.p_signal_click = 5.0613e-4;
  probs.p_dark_click = 2.4194e-6;
  probs.conditional_error = 0.0099;
  const int seeds = 100;
  const double gates = 1e6;
  EpochOptions opts;
  opts.synthesize_streams = false;
  double sum_mc = 0.0;
  double sum2_mc = 0.0;
  double sum_rl = 0.0;
  double sum2_rl = 0.0;
  for (int s = 0; s < seeds; ++s) {
    RngStream rng_mc(40000 + s);
    RngStream rng_rl(50000 + s);
    const double mc = static_cast<double>(
        simulate_epoch(SimMode::PulseMc, 1.0, gates, probs, rng_mc, opts)
            .stats.sifted_bits);
    const double rl = static_cast<double>(
        simulate_epoch(SimMode::RateLevel, 1.0, gates, probs, rng_rl, opts)
            .stats.sifted_bits);
    sum_mc += mc;
    sum2_mc += mc * mc;
    sum_rl += rl;
    sum2_rl += rl * rl;
  }
  const double mean_mc = sum_mc / seeds;
  const double mean_rl = sum_rl / seeds;
  const double var_mc = (sum2_mc / seeds - mean_mc * mean_mc) / seeds;
  const double var_rl = (sum2_rl / seeds - mean_rl * mean_rl) / seeds;
  const double se = std::sqrt(var_mc + var_rl);
  const double diff = std::abs(mean_mc - mean_rl);
  std::snprintf(fmtbuf, sizeof(fmtbuf),
                "means %.1f vs %.1f, |diff| %.2f <= 3*SE %.2f", mean_mc, mean_rl,
                diff, 3.0 * se);
  check(8, "pulse and rate modes agree on sifted counts", diff <= 3.0 * se, fmtbuf);
}

// --- criterion 9: design-target scenario ------------------------------------

void criterion_9() {
  const ScenarioConfig cfg = load_scenario(config_path("design_8ch.cfg"));
  const RunReport report = run_scenario(cfg);
  std::snprintf(fmtbuf, sizeof(fmtbuf), "aggregate secure %.3f Mbps over %zu ch",
                report.totals.secure_bps_avg / 1e6, report.per_channel.size());
  check(9, "eight channels at 10 dB exceed 1 Mbps secure",
        report.totals.secure_bps_avg > 1e6, fmtbuf);
}

// --- criterion 10: determinism ----------------------------------------------

void criterion_10() {
  ScenarioConfig cfg = load_scenario(config_path("paper_2ch.cfg"));
  cfg.duration_s = 600.0;
  cfg.checkpoint_period_s = 0.0;
  const std::string dir_a = temp_dir("det_a");
  const std::string dir_b = temp_dir("det_b");
  for (const std::string& dir : {dir_a, dir_b}) {
    FileEmitter em(dir, false);
    const RunReport r = run_scenario(cfg, em.sinks());
    em.flush();
    em.write_summary(r);
  }
  const bool csv_ok =
      read_file(dir_a + "/timeseries.csv") == read_file(dir_b + "/timeseries.csv");
  const bool sum_ok =
      read_file(dir_a + "/summary.json") == read_file(dir_b + "/summary.json");
  std::snprintf(fmtbuf, sizeof(fmtbuf), "csv %s, summary %s",
                csv_ok ? "identical" : "differs", sum_ok ? "identical" : "differs");
  check(10, "same seed gives byte-identical outputs", csv_ok && sum_ok, fmtbuf);
  std::filesystem::remove_all(dir_a);
  std::filesystem::remove_all(dir_b);
}

}  // namespace

int main() {
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();
  criterion_10();
  if (g_failures > 0) {
    std::printf("%d criterion(s) failed\n", g_failures);
  } else {
    std::printf("all criteria passed\n");
  }
  return g_failures;
}
