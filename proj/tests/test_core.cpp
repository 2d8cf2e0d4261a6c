#include "qkdsim/core.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <random>

using namespace qkdsim;

TEST_CASE("binary entropy pinned values") {
  CHECK(binary_entropy(0.5) == Catch::Approx(1.0).epsilon(1e-12));
  CHECK(binary_entropy(0.0) == 0.0);
  CHECK(binary_entropy(1.0) == 0.0);
  // Direct evaluation at the lambda-1 QBER.
  CHECK(binary_entropy(0.0161) == Catch::Approx(0.1189).margin(1e-4));
}

TEST_CASE("binary entropy domain") {
  CHECK_THROWS_AS(binary_entropy(-0.01), std::domain_error);
  CHECK_THROWS_AS(binary_entropy(1.01), std::domain_error);
  CHECK_THROWS_AS(binary_entropy(std::nan("")), std::domain_error);
}

TEST_CASE("binary entropy symmetry") {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    const double p = dist(gen);
    CHECK(std::abs(binary_entropy(p) - binary_entropy(1.0 - p)) < 1e-12);
  }
}

TEST_CASE("db to transmittance") {
  CHECK(db_to_transmittance(0.0) == 1.0);
  CHECK(db_to_transmittance(10.0) == Catch::Approx(0.1).epsilon(1e-12));
  CHECK(db_to_transmittance(12.6) == Catch::Approx(0.05495).margin(1e-5));
  CHECK_THROWS_AS(db_to_transmittance(-0.1), std::domain_error);
}

TEST_CASE("db to transmittance is decreasing and multiplicative") {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> dist(0.0, 30.0);
  for (int i = 0; i < 1000; ++i) {
    const double a = dist(gen);
    const double b = dist(gen);
    CHECK(std::abs(db_to_transmittance(a + b) -
                   db_to_transmittance(a) * db_to_transmittance(b)) < 1e-12);
    if (a < b) {
      CHECK(db_to_transmittance(a) > db_to_transmittance(b));
    }
  }
}

TEST_CASE("qber from counts") {
  CHECK(qber_from_counts(17, 1000) == Catch::Approx(0.017).epsilon(1e-12));
  CHECK(qber_from_counts(0, 1000) == 0.0);
  // Table-row value: 161 errors in 10000 sifted bits.
  CHECK(qber_from_counts(161, 10000) == Catch::Approx(0.0161).epsilon(1e-12));
  CHECK_THROWS_AS(qber_from_counts(0, 0), EmptyBlockError);
  CHECK_THROWS_AS(qber_from_counts(5, 3), std::invalid_argument);
  CHECK_THROWS_AS(qber_from_counts(-1, 3), std::invalid_argument);
}

TEST_CASE("wavelength grid") {
  CHECK(on_itu_grid(1547.72));
  CHECK(on_itu_grid(1550.92));
  CHECK_FALSE(on_itu_grid(1550.00));
  CHECK_NOTHROW(make_wavelength_channel(0, 1545.32));
  CHECK_THROWS_AS(make_wavelength_channel(8, 1545.32), ConfigError);
  CHECK_THROWS_AS(make_wavelength_channel(0, 1310.0), ConfigError);
}

TEST_CASE("operating point mutations stay on the knob grids") {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> dist(-100.0, 100.0);
  OperatingPoint op;
  for (int i = 0; i < 500; ++i) {
    param_set(op, ParamId::DetectionTiming, dist(gen), kTimingStepPs);
    param_set(op, ParamId::AmziTemperature, dist(gen) / 100.0, kTemperatureStepK);
    param_set(op, ParamId::EncoderBias, dist(gen) / 100.0, kDefaultBiasStep);
    param_set(op, ParamId::PhaseCompAmplitude, dist(gen) / 50.0, kDefaultPhaseStepRad);
    CHECK(std::abs(op.timing_offset_ps -
                   std::round(op.timing_offset_ps / kTimingStepPs) * kTimingStepPs) <
          1e-9);
    CHECK(std::abs(op.amzi_temp_offset_k -
                   std::round(op.amzi_temp_offset_k / kTemperatureStepK) *
                       kTemperatureStepK) < 1e-9);
    CHECK(std::abs(op.encoder_bias -
                   std::round(op.encoder_bias / kDefaultBiasStep) * kDefaultBiasStep) <
          1e-9);
  }
}

TEST_CASE("epoch stats invariants") {
  EpochStats s;
  s.gated_pulses = 1000;
  s.signal_clicks = 50;
  s.dark_clicks = 2;
  s.sifted_bits = 26;
  s.sifted_errors = 1;
  s.qber = 1.0 / 26.0;
  CHECK(s.consistent());
  s.sifted_errors = 27;
  CHECK_FALSE(s.consistent());
  s.sifted_errors = 1;
  s.sifted_bits = 60;  // more than clicks
  CHECK_FALSE(s.consistent());
}
