#include <gtest/gtest.h>

#include "tidac/virtual_plant.hpp"

using namespace tidac;

TEST(Registers, ResetToMidscale) {
  const auto f = PlantModel::standard().reset_file();
  for (int v : f.values) EXPECT_EQ(v, 128);
  const auto toy = PlantModel::toy().reset_file();
  EXPECT_EQ(toy[0], 8);
  EXPECT_EQ(toy[2], 8);
  EXPECT_EQ(toy[1], 128);
}

TEST(Registers, WriteReadRoundTripAndRangeChecks) {
  TransactionLog log;
  auto f = PlantModel::standard().reset_file();
  f = write_register(f, 3, 255, &log);
  EXPECT_EQ(read_register(f, 3, &log), 255);
  EXPECT_THROW(write_register(f, 3, 256), InvalidArgument);
  EXPECT_THROW(write_register(f, 0, -1), InvalidArgument);
  EXPECT_THROW(write_register(f, 6, 1), InvalidArgument);
  EXPECT_THROW(read_register(f, -1), InvalidArgument);
  EXPECT_EQ(log.size(), 2u);
  EXPECT_EQ(log.writes(), 1u);
  EXPECT_EQ(log.to_text(), "W 3 255\nR 3 255\n");
}

TEST(TransactionLog, TextRoundTripAndLineNumberedErrors) {
  TransactionLog log;
  log.record('W', 0, 12);
  log.record('R', 5, 200);
  EXPECT_EQ(TransactionLog::parse(log.to_text()), log);
  try {
    TransactionLog::parse("W 0 1\nX 1 2\n");
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(PlantMap, MidscaleGivesBaseImpairment) {
  const auto m = PlantModel::standard();
  EXPECT_EQ(impairments_from_registers(m, m.reset_file()), m.base);
  EXPECT_NEAR(m.base.gain_a - m.base.gain_b, 0.02, 1e-15);
  EXPECT_NEAR(m.base.alpha, 0.01, 1e-15);
  EXPECT_NEAR(m.base.skew_a_s, m.dac.sample_period_s() / 20, 1e-25);
}

TEST(PlantMap, EachRegisterMovesOneAxisByItsStep) {
  const auto m = PlantModel::standard();
  const auto base = impairments_from_registers(m, m.reset_file());
  const auto moved = [&](RegisterRole r, int delta) {
    auto f = m.reset_file();
    f.values[static_cast<std::size_t>(r)] += delta;
    return impairments_from_registers(m, f);
  };
  EXPECT_NEAR(moved(RegisterRole::kCurrentA, 3).gain_a - base.gain_a, 3 * m.steps.current_a, 1e-15);
  EXPECT_NEAR(moved(RegisterRole::kCurrentB, -2).gain_b - base.gain_b, -2 * m.steps.current_b, 1e-15);
  EXPECT_NEAR(moved(RegisterRole::kDutyCoarse, 5).alpha - base.alpha, 5 * m.steps.duty_coarse, 1e-15);
  EXPECT_NEAR(moved(RegisterRole::kDutyFine, 7).alpha - base.alpha, 7 * m.steps.duty_fine, 1e-15);
  EXPECT_NEAR(moved(RegisterRole::kPhaseA, 10).skew_a_s - base.skew_a_s, 10 * m.steps.phase_a_s, 1e-24);
  EXPECT_NEAR(moved(RegisterRole::kPhaseB, -10).skew_b_s - base.skew_b_s, -10 * m.steps.phase_b_s, 1e-24);
  const auto g = moved(RegisterRole::kCurrentA, 3);
  EXPECT_EQ(g.alpha, base.alpha);
  EXPECT_EQ(g.gain_b, base.gain_b);
}

TEST(PlantMap, MapIsAffine) {
  const auto m = PlantModel::standard();
  auto a = m.reset_file(), b = m.reset_file(), ab = m.reset_file();
  a.values = {100, 140, 120, 30, 150, 90};
  b.values = {140, 116, 136, 226, 106, 166};
  for (std::size_t i = 0; i < kNumRegisters; ++i) ab.values[i] = (a.values[i] + b.values[i]) / 2;
  const auto sa = impairments_from_registers(m, a), sb = impairments_from_registers(m, b),
             sab = impairments_from_registers(m, ab);
  EXPECT_NEAR(sab.gain_a, 0.5 * (sa.gain_a + sb.gain_a), 1e-14);
  EXPECT_NEAR(sab.alpha, 0.5 * (sa.alpha + sb.alpha), 1e-14);
  EXPECT_NEAR(sab.skew_b_s, 0.5 * (sa.skew_b_s + sb.skew_b_s), 1e-24);
}

TEST(PlantMap, ClampsOutOfRangeImpairments) {
  auto m = PlantModel::standard();
  m.steps.duty_coarse = 0.01;
  auto f = m.reset_file();
  f.values[2] = 255;
  const auto mapped = map_registers(m, f);
  EXPECT_TRUE(mapped.clamped);
  EXPECT_DOUBLE_EQ(mapped.state.alpha, kMaxPlantAlpha);
  EXPECT_FALSE(map_registers(m, m.reset_file()).clamped);
}

TEST(PlantMap, StandardAndToyPlantsAreCalibratable) {
  for (double f : {1e9, 5e9, 10e9, 20e9, 24e9}) {
    const auto s = PlantModel::standard();
    const auto best = verify_calibratable(s, {f, 1.0});
    EXPECT_LE(analytic_spur_dbc(s.dac, impairments_from_registers(s, best), {f, 1.0}), -60.0) << f;
  }
  EXPECT_NO_THROW(verify_calibratable(PlantModel::toy(), {20e9, 1.0}, -50.0));  // coarse 4-bit steps
}

TEST(PlantMap, UncalibratablePlantIsReported) {
  auto m = PlantModel::standard();
  // At a single tone duty and phase can offset a gain error, so every knob is made too weak.
  m.steps = {1e-7, 1e-7, 1e-8, 1e-9, 1e-18, 1e-18};
  EXPECT_THROW(verify_calibratable(m, {20e9, 1.0}), Error);
}

TEST(PlantMap, ToyPlantFreezesFourRegisters) {
  const auto m = PlantModel::toy();
  EXPECT_EQ(m.registers.active_addresses(), (std::vector<int>{0, 2}));
  EXPECT_EQ(m.registers[0].max_code(), 15);
}
