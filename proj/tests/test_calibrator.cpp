#include <gtest/gtest.h>

#include <map>
#include <set>
#include <sstream>

#include "tidac/calibrator.hpp"

using namespace tidac;

namespace {

CaptureConfig quiet() {
  CaptureConfig c;
  c.noise_floor_dbc = kNoiseOff;
  return c;
}

// Deterministic cost over the toy plant with every state measured at most once.
class CachedToyCost {
 public:
  CachedToyCost() : plant_(PlantModel::toy()), meter_(plant_, {20e9, 1.0}, quiet(), 0) {}
  SpurMeasurement operator()(const RegisterFile& f) {
    auto it = cache_.find(f.values);
    if (it == cache_.end()) it = cache_.emplace(f.values, meter_.measure(f)).first;
    return it->second;
  }
  const PlantModel& plant() const { return plant_; }

 private:
  PlantModel plant_;
  SpurMeter meter_;
  std::map<StateVector, SpurMeasurement> cache_;
};

// Synthetic quadratic bowl with its minimum at codes (100, 60) on two registers.
struct Bowl {
  SpurMeasurement operator()(const RegisterFile& f) const {
    const double a = f.values[0] - 100.0, b = f.values[2] - 60.0;
    SpurMeasurement m;
    m.image_power = 1e-8 * (1.0 + a * a + b * b);
    m.carrier_power = 1.0;
    m.spur_dbc = db10(m.image_power);
    return m;
  }
};

RegisterFile bowl_start() {
  auto map = RegisterMap::uniform(8);
  for (auto i : {1, 3, 4, 5}) map[i].active = false;
  return RegisterFile::reset(map);
}

}  // namespace

TEST(Schedule, CountsGeometricTemperatures) {
  EXPECT_EQ(schedule_length(1.0, 0.01, 0.8), 21);
  int direct = 0;
  for (int n = 0; n < 1000; ++n)
    if (std::pow(0.8, n) > 0.01) ++direct;
  EXPECT_EQ(direct, 21);
  EXPECT_EQ(schedule_length(5.0, 1.0, 0.5), 3);  // 5, 2.5, 1.25
  EXPECT_THROW(schedule_length(1.0, 0.1, 1.0), InvalidArgument);
}

TEST(Metropolis, AcceptanceMatchesBoltzmannFactor) {
  std::mt19937_64 rng(3);
  const double de = 0.02, t = 1.0, beta = 50.0;
  const double p = std::exp(-beta * de / t);
  const int n = 20000;
  int hits = 0;
  for (int i = 0; i < n; ++i) hits += accept_uphill(de, t, beta, rng);
  EXPECT_NEAR(static_cast<double>(hits) / n, p, 3.0 * std::sqrt(p * (1 - p) / n));
}

TEST(Neighbor, DrawsUniformlyOverTheWindow) {
  auto f = RegisterFile::reset(RegisterMap::uniform(8));
  for (std::size_t i = 1; i < kNumRegisters; ++i) f.map[i].active = false;
  std::mt19937_64 rng(9);
  NeighborOptions opt{NeighborMode::kWindow, 4};
  std::map<int, int> counts;
  const int n = 9000;
  for (int i = 0; i < n; ++i) {
    const auto g = neighbor(f, opt, rng);
    for (std::size_t j = 1; j < kNumRegisters; ++j) ASSERT_EQ(g.values[j], f.values[j]);
    ++counts[g.values[0]];
  }
  ASSERT_EQ(counts.size(), 9u);
  EXPECT_EQ(counts.begin()->first, 124);
  EXPECT_EQ(counts.rbegin()->first, 132);
  double chi2 = 0;
  for (auto [code, c] : counts) chi2 += (c - n / 9.0) * (c - n / 9.0) / (n / 9.0);
  EXPECT_LT(chi2, 26.1);  // 8 dof, p = 0.001
}

TEST(Neighbor, ClipsAtRegisterEdgesAndSupportsFullRange) {
  auto f = RegisterFile::reset(RegisterMap::uniform(4));
  f.values[0] = 0;
  for (std::size_t i = 1; i < kNumRegisters; ++i) f.map[i].active = false;
  std::mt19937_64 rng(1);
  for (int i = 0; i < 500; ++i) {
    const int c = neighbor(f, {NeighborMode::kWindow, 3}, rng).values[0];
    EXPECT_GE(c, 0);
    EXPECT_LE(c, 3);
  }
  std::set<int> seen;
  for (int i = 0; i < 2000; ++i) seen.insert(neighbor(f, {NeighborMode::kFullRange, 1}, rng).values[0]);
  EXPECT_EQ(seen.size(), 16u);
}

TEST(Anneal, PerfectPlantRunsFullScheduleAtTheFloor) {
  auto plant = PlantModel::standard({50e9, 48, 1.0});
  plant.base = {};
  AnnealParams p;
  p.t_max = 1.0;
  const auto r = anneal(plant, {20e9, 1.0}, quiet(), p, plant.reset_file(), 0);
  EXPECT_EQ(r.outer_iterations, 21);
  EXPECT_EQ(r.measurement_count, 1 + 30 * 21);
  EXPECT_LE(r.best_dbc, -180.0);
  EXPECT_EQ(r.best_state, plant.reset_file());
}

TEST(Anneal, HugeBetaNeverAcceptsUphill) {
  AnnealParams p;
  p.t_max = 1.0;
  p.beta = 1e12;
  p.seed = 4;
  const auto r = anneal(Bowl{}, p, bowl_start());
  EXPECT_GT(r.uphill_proposals, 0);
  EXPECT_EQ(r.accepted_uphill, 0);
  double cur = r.trace.front().proposed_cost;
  for (const auto& e : r.trace)
    if (e.accepted) {
      EXPECT_LE(e.proposed_cost, cur);
      cur = e.proposed_cost;
    }
}

TEST(Anneal, BestCostNeverIncreases) {
  AnnealParams p;
  p.seed = 8;
  const auto r = anneal(Bowl{}, p, bowl_start());
  for (std::size_t i = 1; i < r.trace.size(); ++i) EXPECT_LE(r.trace[i].best_cost, r.trace[i - 1].best_cost);
  EXPECT_EQ(r.best_cost, r.trace.back().best_cost);
  EXPECT_EQ(Bowl{}(r.best_state).image_power, r.best_cost);
}

TEST(Anneal, FindsBowlMinimumWithColdFinish) {
  AnnealParams p;
  p.seed = 2;
  p.t_min_ratio = 1e-4;
  const auto r = anneal(Bowl{}, p, bowl_start());
  EXPECT_EQ(r.best_state.values[0], 100);
  EXPECT_EQ(r.best_state.values[2], 60);
}

TEST(Anneal, SameSeedGivesIdenticalTrace) {
  const auto plant = PlantModel::standard();
  AnnealParams p;
  p.seed = 77;
  p.stop_at_dbc = -55.0;
  const auto a = anneal(plant, {20e9, 1.0}, CaptureConfig{}, p, plant.reset_file(), 5);
  const auto b = anneal(plant, {20e9, 1.0}, CaptureConfig{}, p, plant.reset_file(), 5);
  std::ostringstream ta, tb;
  write_trace_csv(ta, a);
  write_trace_csv(tb, b);
  EXPECT_EQ(ta.str(), tb.str());
  EXPECT_EQ(ta.str().rfind("measurement_index,temperature,proposed_cost_dbc,accepted,best_cost_dbc\n", 0), 0u);
}

TEST(Anneal, EarlyStopEndsAfterTheTemperatureStep) {
  AnnealParams p;
  p.t_max = 1.0;
  p.stop_at_dbc = 0.0;  // any reading qualifies
  const auto r = anneal(Bowl{}, p, bowl_start());
  EXPECT_TRUE(r.stopped_early);
  EXPECT_EQ(r.outer_iterations, 1);
  EXPECT_EQ(r.measurement_count, 31);
}

TEST(Anneal, WarmupProbesAreCountedOnlyOnRequest) {
  AnnealParams p;
  p.seed = 3;
  p.stop_at_dbc = 0.0;
  auto r = anneal(Bowl{}, p, bowl_start());
  EXPECT_EQ(r.warmup_measurements, 20);
  EXPECT_EQ(r.measurement_count, 31);
  p.count_warmup = true;
  r = anneal(Bowl{}, p, bowl_start());
  EXPECT_EQ(r.measurement_count, 51);
}

TEST(Anneal, PartialResultSurvivesAFailingOracle) {
  int calls = 0;
  auto flaky = [&](const RegisterFile& f) {
    if (++calls == 40) throw Error("instrument timeout");
    return Bowl{}(f);
  };
  AnnealParams p;
  p.t_max = 1.0;
  AnnealResult partial;
  EXPECT_THROW(anneal(flaky, p, bowl_start(), &partial), Error);
  EXPECT_EQ(partial.trace.size(), 39u);
}

TEST(Anneal, RejectsBadParameters) {
  AnnealParams p;
  p.gamma = 1.0;
  EXPECT_THROW(anneal(Bowl{}, p, bowl_start()), InvalidArgument);
  p = {};
  p.t_max = 1.0;
  p.t_min = 2.0;
  EXPECT_THROW(anneal(Bowl{}, p, bowl_start()), InvalidArgument);
}

TEST(ToyPlant, AnnealReachesExhaustiveOptimum) {
  CachedToyCost cost;
  const auto& plant = cost.plant();
  const auto best = grid_search(cost, plant.registers, GridSpec::exhaustive(plant.registers), 256);
  EXPECT_EQ(best.measurement_count, 256);
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    AnnealParams p;
    p.seed = seed;
    hits += anneal(cost, p, plant.reset_file()).best_state == best.best_state;
  }
  EXPECT_GE(hits, 95);
}

TEST(GridSearch, CenteredLatticeHasRequestedSize) {
  const auto map = RegisterMap::uniform(8);
  const auto g = GridSpec::centered(map, {7, 2, 4, 1, 5, 1});
  EXPECT_EQ(g.size(), 280u);
  EXPECT_EQ(g.axes[0].stride, 36);
  EXPECT_EQ(g.axes[0].start, 18);
  EXPECT_EQ(g.axes[3].start, 128);
  EXPECT_THROW(grid_search(Bowl{}, map, g, 279), InvalidArgument);
  const auto r = grid_search(Bowl{}, map, g, 280);
  EXPECT_EQ(r.measurement_count, 280);
}
