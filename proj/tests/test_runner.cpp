#include "qkdsim/runner.hpp"

#include <unistd.h>

#include <catch2/catch_amalgamated.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

using namespace qkdsim;

namespace {

// Small fast scenario: modest clock, two channels, distillation every 2 s.
ScenarioConfig small_scenario(double duration_s = 10.0) {
  const std::string text = R"(
[run]
duration_s = )" + std::to_string(duration_s) +
                           R"(
epoch_s = 1
mode = rate_level
seed = 99
checkpoint_period_s = 0

[fiber]
loss_db = 6.0

[distill]
block_bits = 5000
sample_fraction = 0.02
period_s = 2

[channel.0]
wavelength_nm = 1547.72
t_rx = 0.9
clock_rate_hz = 1e7

[channel.1]
wavelength_nm = 1550.92
t_rx = 0.8
clock_rate_hz = 1e7
)";
  return parse_scenario(text);
}

struct MemorySinks {
  std::vector<TimeSeriesRecord> records;
  std::vector<Json> events;
  std::vector<Json> checkpoints;

  RunSinks sinks() {
    RunSinks s;
    s.on_record = [this](const TimeSeriesRecord& r) { records.push_back(r); };
    s.on_event = [this](const Json& e) { events.push_back(e); };
    s.on_checkpoint = [this](const Json& c) { checkpoints.push_back(c); };
    return s;
  }
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string temp_dir(const std::string& tag) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("qkdsim_test_" + tag + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  return dir.string();
}

}  // namespace

TEST_CASE("a ten-epoch run emits ten rows per channel") {
  const ScenarioConfig cfg = small_scenario(10.0);
  MemorySinks mem;
  const RunReport report = run_scenario(cfg, mem.sinks());
  CHECK(mem.records.size() == 20);
  CHECK(report.per_channel.size() == 2);
  // records alternate channels with strictly increasing time per channel
  double last_t0 = -1.0;
  for (const TimeSeriesRecord& r : mem.records) {
    if (r.channel == 0) {
      CHECK(r.sim_time_s > last_t0);
      last_t0 = r.sim_time_s;
    }
  }
}

TEST_CASE("duration equal to the epoch gives exactly one epoch") {
  ScenarioConfig cfg = small_scenario(10.0);
  cfg.duration_s = cfg.epoch_s;
  MemorySinks mem;
  run_scenario(cfg, mem.sinks());
  CHECK(mem.records.size() == 2);
}

TEST_CASE("report totals equal the sums of the distillation records") {
  const ScenarioConfig cfg = small_scenario(20.0);
  MemorySinks mem;
  const RunReport report = run_scenario(cfg, mem.sinks());

  std::int64_t secure_from_events = 0;
  int distill_events = 0;
  for (const Json& e : mem.events) {
    if (e.at("type") == "distill_block") {
      secure_from_events += e.at("secure_bits").get<std::int64_t>();
      ++distill_events;
    }
  }
  CHECK(distill_events > 0);
  CHECK(report.totals.secure_bits_total == secure_from_events);

  std::int64_t per_channel_sum = 0;
  for (const ChannelReport& ch : report.per_channel) {
    per_channel_sum += ch.secure_bits_total;
  }
  CHECK(report.totals.secure_bits_total == per_channel_sum);

  CHECK(report.normalized_secure_bits ==
        Catch::Approx(normalized_secure_bits(
            static_cast<double>(report.totals.secure_bits_total), 6.0)));
  CHECK(report.uninterrupted_span_s == Catch::Approx(20.0));
}

TEST_CASE("normalized metric arithmetic") {
  // Published pairs: 595.6 Gbit over 12.6 dB loss -> 10.8 Tbit normalized.
  CHECK(normalized_secure_bits(595.6e9, 12.6) / 1e12 ==
        Catch::Approx(10.8).epsilon(0.005));
  CHECK(accumulated_bits(229.8e3, 30.0 * 86400.0) ==
        Catch::Approx(595.6e9).epsilon(0.001));
}

TEST_CASE("summary json round-trips") {
  const ScenarioConfig cfg = small_scenario(10.0);
  const RunReport report = run_scenario(cfg);
  const Json j = summary_to_json(report);
  const RunReport back = summary_from_json(j);
  REQUIRE(back.per_channel.size() == report.per_channel.size());
  for (std::size_t i = 0; i < report.per_channel.size(); ++i) {
    CHECK(back.per_channel[i].qber_avg ==
          Catch::Approx(report.per_channel[i].qber_avg).epsilon(1e-9));
    CHECK(back.per_channel[i].secure_bits_total ==
          report.per_channel[i].secure_bits_total);
  }
  CHECK(back.totals.sifted_bps_avg ==
        Catch::Approx(report.totals.sifted_bps_avg).epsilon(1e-9));
  CHECK(back.normalized_secure_bits ==
        Catch::Approx(report.normalized_secure_bits).epsilon(1e-9));
  CHECK(back.config_digest == report.config_digest);
}

TEST_CASE("same seed produces byte-identical outputs") {
  const ScenarioConfig cfg = small_scenario(15.0);
  const std::string dir_a = temp_dir("det_a");
  const std::string dir_b = temp_dir("det_b");
  {
    FileEmitter em(dir_a, false);
    const RunReport r = run_scenario(cfg, em.sinks());
    em.flush();
    em.write_summary(r);
  }
  {
    FileEmitter em(dir_b, false);
    const RunReport r = run_scenario(cfg, em.sinks());
    em.flush();
    em.write_summary(r);
  }
  CHECK(read_file(dir_a + "/timeseries.csv") == read_file(dir_b + "/timeseries.csv"));
  CHECK(read_file(dir_a + "/summary.json") == read_file(dir_b + "/summary.json"));
  CHECK(read_file(dir_a + "/events.jsonl") == read_file(dir_b + "/events.jsonl"));
  std::filesystem::remove_all(dir_a);
  std::filesystem::remove_all(dir_b);
}

TEST_CASE("resume from a checkpoint continues the exact trajectory") {
  ScenarioConfig cfg = small_scenario(20.0);
  cfg.checkpoint_period_s = 10.0;

  MemorySinks full;
  const RunReport report_full = run_scenario(cfg, full.sinks());
  REQUIRE(full.checkpoints.size() == 1);

  MemorySinks resumed;
  const RunReport report_resumed =
      run_scenario(cfg, resumed.sinks(), &full.checkpoints[0]);

  // Epochs 10..19 replay identically.
  REQUIRE(resumed.records.size() == 20);
  for (std::size_t i = 0; i < resumed.records.size(); ++i) {
    CHECK(to_csv(resumed.records[i]) == to_csv(full.records[20 + i]));
  }
  CHECK(report_resumed.totals.secure_bits_total ==
        report_full.totals.secure_bits_total);
  CHECK(report_resumed.totals.qber_avg ==
        Catch::Approx(report_full.totals.qber_avg));
  // The resume itself is an interruption, so the longest span halves.
  CHECK(report_full.uninterrupted_span_s == Catch::Approx(20.0));
  CHECK(report_resumed.uninterrupted_span_s == Catch::Approx(10.0));
}

TEST_CASE("trim drops rows past the checkpoint time") {
  const ScenarioConfig cfg = small_scenario(20.0);
  const std::string dir = temp_dir("trim");
  {
    FileEmitter em(dir, false);
    const RunReport r = run_scenario(cfg, em.sinks());
    em.flush();
    em.write_summary(r);
  }
  trim_outputs_after(dir, 12.0);
  const std::vector<TimeSeriesRecord> records = load_timeseries(dir);
  CHECK(records.size() == 24);  // 12 epochs x 2 channels survive
  for (const TimeSeriesRecord& r : records) CHECK(r.sim_time_s <= 12.0 + 1e-9);
  std::filesystem::remove_all(dir);
}

TEST_CASE("resume refuses a different config") {
  ScenarioConfig cfg = small_scenario(20.0);
  cfg.checkpoint_period_s = 10.0;
  MemorySinks full;
  run_scenario(cfg, full.sinks());
  REQUIRE(full.checkpoints.size() == 1);
  cfg.seed = 12345;
  CHECK_THROWS_AS(run_scenario(cfg, RunSinks{}, &full.checkpoints[0]), ConfigError);
}

TEST_CASE("stabilizer commits appear in the event log") {
  ScenarioConfig cfg = small_scenario(40.0);
  MemorySinks mem;
  run_scenario(cfg, mem.sinks());
  int commits = 0;
  for (const Json& e : mem.events) {
    if (e.at("type") == "stabilizer_commit") ++commits;
  }
  // 40 s of 10 s trial slots per channel
  CHECK(commits == 8);
}

TEST_CASE("comparison of emitted runs") {
  ScenarioConfig cfg = small_scenario(30.0);
  const std::string dir_a = temp_dir("cmp_a");
  const std::string dir_b = temp_dir("cmp_b");
  {
    FileEmitter em(dir_a, false);
    const RunReport r = run_scenario(cfg, em.sinks());
    em.flush();
    em.write_summary(r);
  }
  cfg.stabilizer.enabled = false;
  {
    FileEmitter em(dir_b, false);
    const RunReport r = run_scenario(cfg, em.sinks());
    em.flush();
    em.write_summary(r);
  }
  const RunComparison cmp = compare_runs(dir_a, dir_b, 10.0);
  CHECK(cmp.a.qber_avg > 0.0);
  CHECK(cmp.b.qber_avg > 0.0);
  CHECK(cmp.a.qber_max_epoch >= cmp.a.qber_avg);
  const std::string text = format_comparison(cmp);
  CHECK(text.find("mean QBER") != std::string::npos);
  std::filesystem::remove_all(dir_a);
  std::filesystem::remove_all(dir_b);
}

TEST_CASE("csv round trip via the file emitter") {
  const ScenarioConfig cfg = small_scenario(10.0);
  const std::string dir = temp_dir("csv");
  MemorySinks mem;
  {
    FileEmitter em(dir, false);
    RunSinks s = em.sinks();
    RunSinks both;
    both.on_record = [&](const TimeSeriesRecord& r) {
      s.on_record(r);
      mem.records.push_back(r);
    };
    both.on_event = s.on_event;
    const RunReport r = run_scenario(cfg, both);
    em.flush();
    em.write_summary(r);
  }
  const std::vector<TimeSeriesRecord> loaded = load_timeseries(dir);
  REQUIRE(loaded.size() == mem.records.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].sim_time_s == Catch::Approx(mem.records[i].sim_time_s));
    CHECK(loaded[i].channel == mem.records[i].channel);
    CHECK(loaded[i].qber == Catch::Approx(mem.records[i].qber).margin(1e-12));
    CHECK(loaded[i].sifted_rate_bps ==
          Catch::Approx(mem.records[i].sifted_rate_bps).epsilon(1e-6));
  }
  std::filesystem::remove_all(dir);
}
