#include <gtest/gtest.h>

#include <sstream>

#include "tidac/spur_meter.hpp"

using namespace tidac;

namespace {

CaptureConfig quiet() {
  CaptureConfig c;
  c.noise_floor_dbc = kNoiseOff;
  return c;
}

PlantModel ideal_plant() {
  auto m = PlantModel::standard({50e9, 48, 1.0});
  return m;
}

}  // namespace

TEST(SnapCoherent, PicksNearestBin) {
  CaptureConfig c;
  c.fft_size = 4096;
  c.oversample = 4;
  const DacConfig dac{};
  const auto t = snap_coherent({20e9, 1.0}, c, dac);
  EXPECT_DOUBLE_EQ(t.freq_hz, 410 * 50e9 / 1024);
  // Image bin is also integral.
  const double bw = c.bin_width_hz(dac);
  EXPECT_NEAR(t.image_freq_hz(dac) / bw, std::round(t.image_freq_hz(dac) / bw), 1e-9);
}

TEST(SnapCoherent, OnBinRequestIsUnchanged) {
  CaptureConfig c;
  const DacConfig dac{};
  const double f = 321 * c.bin_width_hz(dac);
  EXPECT_DOUBLE_EQ(snap_coherent({f, 1.0}, c, dac).freq_hz, f);
}

TEST(SnapCoherent, SnappedToneDoesNotLeak) {
  CaptureConfig c;
  const DacConfig dac{50e9, 48, 1.0};
  const auto t = snap_coherent({17.3e9, 1.0}, c, dac);
  Fft fft;
  const auto y = synthesize_waveform(dac, {}, t, c.fft_size, c.oversample, 0.0, fft);
  const auto spec = fft.forward(y);
  const auto k = static_cast<std::size_t>(std::lround(t.freq_hz / c.bin_width_hz(dac)));
  for (std::size_t j : {k - 2, k - 1, k + 1, k + 2}) EXPECT_LT(db20(std::abs(spec[j]) / std::abs(spec[k])), -250.0);
}

TEST(SpurMeter, ParsevalHoldsForTheCapture) {
  const auto plant = PlantModel::standard();
  SpurMeter meter(plant, {20e9, 1.0}, quiet(), 1);
  const auto imp = impairments_from_registers(plant, plant.reset_file());
  Fft fft;
  const auto y = synthesize_waveform(plant.dac, imp, meter.tone(), 8192, 8, 0.0, fft);
  const auto spec = fft.forward(y);
  double t = 0, f = 0;
  for (double v : y) t += v * v;
  for (const auto& v : spec) f += std::norm(v);
  EXPECT_NEAR(f / 8192.0, t, 1e-9 * t);
}

TEST(SnapCoherent, AvoidsQuarterRate) {
  CaptureConfig c;
  const DacConfig dac{};
  const auto t = snap_coherent({12.5e9 + 1e6, 1.0}, c, dac);
  EXPECT_GT(std::abs(t.freq_hz - 12.5e9), 1e6);
}

TEST(SpurMeter, MatchesAnalyticSpurWithNoiseOff) {
  const auto plant = ideal_plant();
  for (double f : {2e9, 11e9, 19e9, 23e9}) {
    SpurMeter meter(plant, {f, 1.0}, quiet(), 1);
    const auto imp = impairments_from_registers(plant, plant.reset_file());
    EXPECT_NEAR(meter.measure(plant.reset_file()).spur_dbc, analytic_spur_dbc(plant.dac, imp, meter.tone()), 1e-6);
  }
}

TEST(SpurMeter, MatchedConverterReadsAtTheFloor) {
  auto plant = ideal_plant();
  plant.base = {};
  SpurMeter meter(plant, {20e9, 1.0}, quiet(), 1);
  EXPECT_LE(meter.measure(plant.reset_file()).spur_dbc, -180.0);
}

TEST(SpurMeter, CaptureOffsetDoesNotChangeSpur) {
  const auto plant = ideal_plant();
  auto c = quiet();
  const double a = SpurMeter(plant, {20e9, 1.0}, c, 1).measure(plant.reset_file()).spur_dbc;
  c.start_offset_samples = 13.37;
  const double b = SpurMeter(plant, {20e9, 1.0}, c, 1).measure(plant.reset_file()).spur_dbc;
  EXPECT_NEAR(a, b, 1e-6);
}

TEST(SpurMeter, NonCoherentCaptureWithWindowStaysClose) {
  const auto plant = ideal_plant();
  auto c = quiet();
  c.coherent = false;
  SpurMeter meter(plant, {20.0123e9, 1.0}, c, 1);
  const auto imp = impairments_from_registers(plant, plant.reset_file());
  EXPECT_NEAR(meter.measure(plant.reset_file()).spur_dbc, analytic_spur_dbc(plant.dac, imp, meter.tone()), 0.5);
}

TEST(SpurMeter, NoiseFloorSpreadIsSmallAtTheTarget) {
  // Plant sitting near -48 dBc with the default -90 dBc noise floor.
  auto plant = ideal_plant();
  plant.base = {0.0, 1.00633, 1.0, 0.0, 0.0};
  SpurMeter meter(plant, {20e9, 1.0}, CaptureConfig{}, 42);
  std::vector<double> v;
  for (int i = 0; i < 200; ++i) v.push_back(meter.measure(plant.reset_file()).spur_dbc);
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  double var = 0;
  for (double x : v) var += (x - mean) * (x - mean);
  EXPECT_LT(std::sqrt(var / (v.size() - 1)), 0.5);
  EXPECT_NEAR(mean, analytic_spur_dbc(plant.dac, plant.base, meter.tone()), 0.2);
}

TEST(SpurMeter, MinusEightyNoiseKeepsMinusFiftySpurSteadyAcrossSeeds) {
  auto plant = ideal_plant();
  plant.base = {0.0, 1.00488, 1.0, 0.0, 0.0};
  CaptureConfig c;
  c.noise_floor_dbc = -80.0;
  std::vector<double> v;
  for (std::uint64_t seed = 0; seed < 100; ++seed)
    v.push_back(SpurMeter(plant, {20e9, 1.0}, c, seed).measure(plant.reset_file()).spur_dbc);
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  EXPECT_NEAR(mean, -50.0, 0.5);
  double var = 0;
  for (double x : v) var += (x - mean) * (x - mean);
  EXPECT_LT(std::sqrt(var / (v.size() - 1)), 0.5);
}

TEST(SpurMeter, SameSeedSameReadings) {
  const auto plant = PlantModel::standard();
  SpurMeter a(plant, {20e9, 1.0}, CaptureConfig{}, 5), b(plant, {20e9, 1.0}, CaptureConfig{}, 5);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(a.measure(plant.reset_file()).spur_dbc, b.measure(plant.reset_file()).spur_dbc);
}

TEST(SpurMeter, CountsMeasurementsAndExportsHistory) {
  const auto plant = PlantModel::standard();
  SpurMeter meter(plant, {20e9, 1.0}, CaptureConfig{}, 5);
  meter.keep_history(true);
  meter.measure(plant.reset_file());
  meter(plant.reset_file());
  EXPECT_EQ(meter.measurement_count(), 2);
  std::ostringstream os;
  meter.write_history_csv(os);
  const auto text = os.str();
  EXPECT_EQ(text.rfind("index,f_out_hz,spur_dbc,cost_linear\n", 0), 0u);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
}

TEST(SpurMeter, RejectsInvalidSetups) {
  const auto plant = PlantModel::standard();
  EXPECT_THROW(SpurMeter(plant, {12.5e9, 1.0}, CaptureConfig{}, 1), InvalidArgument);
  CaptureConfig c;
  c.fft_size = 1000;
  EXPECT_THROW(SpurMeter(plant, {20e9, 1.0}, c, 1), InvalidArgument);
}
