#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mcfilter/harness.hpp"

using namespace mcfilter;
namespace fs = std::filesystem;

namespace {

nlohmann::json small_config() {
  return nlohmann::json::parse(R"({
    "grid": {"dims": [4, 3, 3], "voxel_edge": 0.3333333333333333,
             "diffusion_coeff": 1.0, "boundary": "absorbing"},
    "transmitter": {"voxel": [1, 2, 2], "symbol_rates": [10.0, 20.0]},
    "receiver": {"voxel": [3, 2, 2], "M": 10, "rate_units": "concentration",
                 "n_sites": 2, "lambdas": [1.0, 0.5], "mus": [1.0, 1.0]},
    "measurements": [["C1"], ["C2"], "all"],
    "horizon": 1.0,
    "n_trials": 40,
    "n_moment_runs": 60,
    "moment_grid_step": 0.05,
    "base_seed": 99
  })");
}

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string &name) {
  const auto p = fs::temp_directory_path() / ("mcfilter_test_" + name);
  fs::remove_all(p);
  return p;
}

} // namespace

TEST(Harness, MissingKeyIsNamed) {
  auto j = small_config();
  j["receiver"].erase("M");
  try {
    config_from_json(j);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError &e) {
    EXPECT_NE(std::string(e.what()).find("\"receiver.M\""), std::string::npos) << e.what();
  }
  auto k = small_config();
  k.erase("grid");
  EXPECT_THROW(config_from_json(k), ConfigError);
}

TEST(Harness, ValidationMessages) {
  auto j = small_config();
  j["transmitter"]["symbol_rates"] = {10.0, 10.0};
  EXPECT_THROW(config_from_json(j).validate(), ConfigError);
  EXPECT_NO_THROW(config_from_json(j).validate(false));
  j = small_config();
  j["measurements"] = {{"C7"}};
  EXPECT_THROW(config_from_json(j).validate(), ConfigError);
  j = small_config();
  j["n_trials"] = 0;
  EXPECT_THROW(config_from_json(j).validate(), ConfigError);
  j = small_config();
  j["receiver"]["rate_units"] = "molar";
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = small_config();
  j["grid"]["boundary"] = "periodic";
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = small_config();
  j["decision_time"] = 2.0;
  EXPECT_THROW(config_from_json(j).validate(), ConfigError);
}

TEST(Harness, RateUnits) {
  const auto conc = config_from_json(small_config());
  EXPECT_NEAR(conc.network.reactions()[0].rate_constant, 27.0, 1e-9);
  EXPECT_NEAR(conc.network.reactions()[2].rate_constant, 13.5, 1e-9);
  EXPECT_DOUBLE_EQ(conc.network.reactions()[1].rate_constant, 1.0);
  auto j = small_config();
  j["receiver"].erase("rate_units");
  const auto count = config_from_json(j);
  EXPECT_DOUBLE_EQ(count.network.reactions()[0].rate_constant, 1.0);
}

TEST(Harness, ShippedConfigsLoad) {
  const fs::path root = MCFILTER_SOURCE_DIR;
  const auto three = load_config(root / "configs/three_site.json");
  EXPECT_EQ(three.grid.dims, (std::array<int, 3>{6, 6, 3}));
  EXPECT_EQ(three.tx_voxel, (VoxelCoord{1, 2, 1}));
  EXPECT_EQ(three.rx_voxel, (VoxelCoord{4, 2, 1}));
  EXPECT_EQ(three.receptors, 10);
  EXPECT_EQ(three.network.reactions().size(), 6u);
  EXPECT_NEAR(three.network.reactions()[2].rate_constant /
                  three.network.reactions()[0].rate_constant,
              0.5, 1e-12);
  EXPECT_EQ(three.measurements.back().species,
            (std::vector<std::string>{"C1", "C2", "C3"}));
  const auto five = load_config(root / "configs/five_site.json");
  EXPECT_EQ(five.receptors, 50);
  EXPECT_EQ(five.measurements.size(), 6u);

  const auto text = slurp(root / "configs/two_site.net");
  EXPECT_EQ(parse_network_text(text), make_ligand_receptor_network(2, {1, 1}, {1, 1}));
}

TEST(Harness, MeasureAllSelectsComplexes) {
  const auto cfg = config_from_json(small_config());
  EXPECT_EQ(cfg.measurements[2].label, "all");
  EXPECT_EQ(cfg.measurements[2].species, (std::vector<std::string>{"C1", "C2"}));
}

TEST(Harness, RunIsDeterministicAndManifestReproduces) {
  const auto cfg = config_from_json(small_config());
  const auto a = run_ser(cfg);
  const auto b = run_ser(cfg);
  EXPECT_EQ(a, b);
  for (const auto &m : a.measurements) {
    EXPECT_LE(m.errors, m.trials);
    EXPECT_TRUE(m.ci.contains(m.ser));
    EXPECT_EQ(m.correct.size(), m.trials);
    std::size_t total = 0;
    for (const auto &row : m.confusion)
      for (auto c : row)
        total += c;
    EXPECT_EQ(total, m.trials);
  }

  const auto dir = scratch("manifest");
  persist_results(a, cfg, dir);
  const auto again = load_config(dir / "manifest.json");
  EXPECT_EQ(config_hash(again), config_hash(cfg));
  const auto c = run_ser(again);
  EXPECT_EQ(a, c);
  const auto dir2 = scratch("manifest2");
  persist_results(c, again, dir2);
  EXPECT_EQ(slurp(dir / "ser.csv"), slurp(dir2 / "ser.csv"));
  EXPECT_EQ(slurp(dir / "confusion.csv"), slurp(dir2 / "confusion.csv"));
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST(Harness, SeedChangesResults) {
  auto j = small_config();
  const auto a = run_ser(config_from_json(j));
  j["base_seed"] = 12345;
  const auto b = run_ser(config_from_json(j));
  EXPECT_NE(a, b);
}

TEST(Harness, IdenticalSymbolsAreAGuess) {
  auto j = small_config();
  j["transmitter"]["symbol_rates"] = {15.0, 15.0};
  j["n_trials"] = 400;
  const auto cfg = config_from_json(j);
  EXPECT_THROW(run_ser(cfg), ConfigError);
  RunOptions opts;
  opts.allow_identical_symbols = true;
  const auto r = run_ser(cfg, opts);
  for (const auto &m : r.measurements)
    EXPECT_TRUE(m.ci.contains(0.5)) << m.choice.label << " " << m.ser;
}

TEST(Harness, SweepRowsAndSingleValueSweep) {
  const auto cfg = config_from_json(small_config());
  const auto sw = run_sweep(cfg, "receiver.lambdas.1", {0.5, 2.0});
  ASSERT_EQ(sw.points.size(), 2u);
  std::ostringstream csv;
  write_sweep_csv(csv, sw);
  std::size_t lines = 0;
  for (char ch : csv.str())
    lines += ch == '\n';
  EXPECT_EQ(lines, 1 + 2 * cfg.measurements.size());
  EXPECT_EQ(csv.str().rfind("parameter,value,measurement", 0), 0u);

  const auto single = run_sweep(cfg, "receiver.lambdas.1", {0.5});
  EXPECT_EQ(single.points[0].result, run_ser(cfg));
  EXPECT_THROW(run_sweep(cfg, "receiver.nope", {1.0}), ConfigError);
  EXPECT_THROW(run_sweep(cfg, "receiver.lambdas.1", {}), ConfigError);
}

TEST(Harness, MoreReceptorsDoNotHurt) {
  auto cfg = load_config(fs::path(MCFILTER_SOURCE_DIR) / "configs/three_site.json");
  cfg.n_trials = 400;
  cfg.n_moment_runs = 300;
  cfg.source["n_trials"] = cfg.n_trials;
  cfg.source["n_moment_runs"] = cfg.n_moment_runs;
  const auto sw = run_sweep(cfg, "receiver.M", {10, 50});
  for (std::size_t m = 0; m < sw.points[0].result.measurements.size(); ++m) {
    const auto &few = sw.points[0].result.measurements[m];
    const auto &many = sw.points[1].result.measurements[m];
    EXPECT_TRUE(many.ser <= few.ser || many.ci.overlaps(few.ci))
        << few.choice.label << ": M=10 " << few.ser << ", M=50 " << many.ser;
  }
}

TEST(Harness, WilsonIntervalCoverage) {
  EXPECT_EQ(wilson_interval(0, 20).lower, 0.0);
  EXPECT_GT(wilson_interval(0, 20).upper, 0.0);
  EXPECT_EQ(wilson_interval(20, 20).upper, 1.0);
  EXPECT_THROW(wilson_interval(21, 20), ModelError);
  const double p = 0.3;
  const std::size_t n = 200, reps = 4000;
  std::size_t covered = 0;
  for (std::size_t r = 0; r < reps; ++r) {
    Rng rng(r);
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i)
      k += rng.uniform() < p;
    covered += wilson_interval(k, n).contains(p);
  }
  const double coverage = static_cast<double>(covered) / reps;
  EXPECT_NEAR(coverage, 0.95, 0.015);
}

TEST(Harness, PairedComparison) {
  // b is wrong on 12 trials where a is right, the reverse on 2
  std::vector<std::uint8_t> a(100, 1), b(100, 1);
  for (int i = 0; i < 12; ++i)
    b[i] = 0;
  for (int i = 50; i < 52; ++i)
    a[i] = 0;
  // P[X >= 12], X ~ Bin(14, 1/2) = (1 + 14 + 91) / 2^14
  EXPECT_NEAR(mcnemar_worse_p(a, b), 106.0 / 16384.0, 1e-12);
  EXPECT_NEAR(mcnemar_worse_p(a, a), 1.0, 1e-12);
  EXPECT_GT(mcnemar_worse_p(b, a), 0.99);
}

TEST(Harness, KolmogorovSmirnov) {
  Rng rng(4);
  std::vector<double> x(2000);
  for (double &v : x)
    v = rng.exponential(3.0);
  auto cdf = [](double t) { return 1.0 - std::exp(-3.0 * t); };
  EXPECT_GT(ks_test(x, cdf).p_value, 0.01);
  for (double &v : x)
    v = rng.exponential(2.5);
  EXPECT_LT(ks_test(x, cdf).p_value, 0.01);
}
