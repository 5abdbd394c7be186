#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "mcfilter/oracle.hpp"
#include "mcfilter/stats.hpp"

using namespace mcfilter;

namespace {

// One voxel, no emission, one-site receptors S + E <-> C1.
CtmpSystem closed_one_site(double lambda, double mu, std::int64_t M) {
  VoxelGrid g;
  const auto net = make_ligand_receptor_network(1, {lambda}, {mu});
  return build_system(g, TransmitterModel{0, {0.0}}, net, 0, M);
}

SystemState with_ligands(const CtmpSystem &sys, std::int64_t n) {
  auto s = sys.initial_state();
  s.at(0, sys.signal_species()) = n;
  return s;
}

double poisson_pmf(int k, double mean) {
  return std::exp(k * std::log(mean) - mean - std::lgamma(k + 1.0));
}

} // namespace

TEST(Oracle, TimeZeroIsAPointMass) {
  const auto sys = closed_one_site(1, 1, 2);
  const auto init = with_ligands(sys, 3);
  const auto p = master_equation_transient(sys, 0, 0.0, init);
  const std::size_t i = p.chain.lookup(init.counts);
  for (std::size_t k = 0; k < p.probability.size(); ++k)
    EXPECT_EQ(p.probability[k], k == i ? 1.0 : 0.0);
}

TEST(Oracle, SingleLigandDetailedBalance) {
  const auto sys = closed_one_site(1, 1, 2);
  const auto p = master_equation_transient(sys, 0, 60.0, with_ligands(sys, 1));
  ASSERT_EQ(p.chain.states.size(), 2u);
  // (S,E,C1) = (1,2,0) <-> (0,1,1): forward rate 2, reverse rate 1
  EXPECT_NEAR(p.probability[p.chain.lookup({1, 2, 0})], 1.0 / 3.0, 1e-8);
  EXPECT_NEAR(p.probability[p.chain.lookup({0, 1, 1})], 2.0 / 3.0, 1e-8);
}

TEST(Oracle, ThreeLigandDetailedBalance) {
  const auto sys = closed_one_site(1, 1, 2);
  const auto p = master_equation_transient(sys, 0, 60.0, with_ligands(sys, 3));
  // pi(c+1)/pi(c) = (3-c)(2-c)/(c+1)  ->  1 : 6 : 6
  EXPECT_NEAR(p.probability[p.chain.lookup({3, 2, 0})], 1.0 / 13.0, 1e-8);
  EXPECT_NEAR(p.probability[p.chain.lookup({2, 1, 1})], 6.0 / 13.0, 1e-8);
  EXPECT_NEAR(p.probability[p.chain.lookup({1, 0, 2})], 6.0 / 13.0, 1e-8);
}

TEST(Oracle, PureBirthIsPoisson) {
  VoxelGrid g;
  const auto net = make_ligand_receptor_network(1, {1}, {1});
  const auto sys = build_system(g, TransmitterModel{0, {10.0}}, net, 0, 0);
  StateSpaceLimits lim;
  lim.signal_cap = 80;
  const auto p = master_equation_transient(sys, 0, 1.0, sys.initial_state(), lim);
  for (int k = 0; k <= 80; ++k)
    EXPECT_NEAR(p.probability[p.chain.lookup({k, 0, 0})], poisson_pmf(k, 10.0), 1e-8)
        << "k=" << k;
  EXPECT_LT(p.overflow_mass, 1e-8);
}

TEST(Oracle, TransientIsAProbabilityDistribution) {
  VoxelGrid g;
  g.boundary = Boundary::Absorbing;
  g.escape_rate = 0.5;
  const auto net = make_ligand_receptor_network(2, {1, 1}, {1, 1});
  const auto sys = build_system(g, TransmitterModel{0, {4.0}}, net, 0, 2);
  for (double t : {0.1, 1.0, 5.0}) {
    const auto p = master_equation_transient(sys, 0, t, sys.initial_state());
    double sum = 0.0;
    for (double x : p.probability) {
      EXPECT_GE(x, 0.0);
      sum += x;
    }
    EXPECT_NEAR(sum, 1.0, 1e-8);
    EXPECT_LT(p.truncation_error, 1e-8);
  }
}

TEST(Oracle, StateSpaceBound) {
  VoxelGrid g;
  g.dims = {3, 3, 3};
  g.diffusion_coeff = 1.0;
  const auto net = make_ligand_receptor_network(1, {1}, {1});
  const auto sys = build_system(g, TransmitterModel{0, {5.0}}, net, 0, 2);
  StateSpaceLimits lim;
  lim.max_states = 1000;
  EXPECT_THROW(enumerate_chain(sys, 0, sys.initial_state(), lim), ModelError);
}

TEST(Oracle, ExactSamplerConcentrates) {
  const auto sys = closed_one_site(1, 1, 2);
  const auto p = master_equation_transient(sys, 0, 0.7, with_ligands(sys, 3));
  std::vector<double> cdf(p.probability.size());
  std::partial_sum(p.probability.begin(), p.probability.end(), cdf.begin());
  double last = 1.0;
  for (std::size_t n : {1000u, 10000u, 100000u}) {
    Rng rng(n);
    std::vector<double> emp(p.probability.size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double u = rng.uniform() * cdf.back();
      const auto k = static_cast<std::size_t>(
          std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
      emp[std::min(k, emp.size() - 1)] += 1.0 / static_cast<double>(n);
    }
    const double tv = total_variation(emp, p.probability);
    EXPECT_LT(tv, 3.0 / std::sqrt(static_cast<double>(n)));
    EXPECT_LT(tv, last);
    last = tv;
  }
}

TEST(Oracle, SsaMatchesExactLaw) {
  const auto sys = closed_one_site(1, 1, 2);
  const auto cmp = empirical_vs_exact(sys, sys, 0, 0.7, with_ligands(sys, 3), 20000, 5);
  EXPECT_LT(cmp.tv, 0.02);
}

TEST(Oracle, MismatchedRatesAreDetected) {
  const auto ref = closed_one_site(1, 1, 2);
  const auto wrong = closed_one_site(4, 1, 2);
  const auto cmp =
      empirical_vs_exact(wrong, ref, 0, 0.7, with_ligands(ref, 3), 20000, 5);
  EXPECT_GT(cmp.tv, 0.1);
}

TEST(Oracle, AllRatesZeroMeansNoChange) {
  const auto sys = closed_one_site(1, 1, 2); // no ligand, no emission
  const auto spec =
      generate_filter_spec(sys.network(), std::vector<std::string>{"C1"});
  const auto rep = brute_force_filter_check(sys, spec, 0, 0.5, {0.1, 0.05}, 200, 1,
                                            {}, false, 1);
  EXPECT_EQ(rep.bin_runs, 200u);
  for (const auto &step : rep.steps) {
    ASSERT_EQ(step.deltas.back().delta, (std::vector<int>{0}));
    EXPECT_EQ(step.deltas.back().frequency, 1.0);
    EXPECT_EQ(step.deltas.back().predicted, 1.0);
    for (std::size_t c = 0; c + 1 < step.deltas.size(); ++c)
      EXPECT_EQ(step.deltas[c].frequency, 0.0);
  }
}

TEST(Oracle, SingleChannelIsFirstOrderInDt) {
  // E -> E + A at rate 2: A counts a Poisson process of rate 2
  VoxelGrid g;
  const auto net = parse_network({"S", "E", "A"}, {"E -> E + A @ 2"});
  const auto sys = build_system(g, TransmitterModel{0, {0.0}}, net, 0, 1);
  const auto spec = generate_filter_spec(net, std::vector<std::string>{"A"});
  const std::vector<double> dts{0.08, 0.04, 0.02, 0.01};
  // condition on time zero so every run shares the empty history
  const auto rep = brute_force_filter_check(sys, spec, 0, 0.0, dts, 100000, 3,
                                            {}, true, 0);
  ASSERT_EQ(rep.bin_runs, 100000u);
  // least squares f = a dt + b dt^2
  double s2 = 0.0, s3 = 0.0, s4 = 0.0, f1 = 0.0, f2 = 0.0;
  for (const auto &step : rep.steps) {
    const auto &up = step.deltas.front();
    ASSERT_EQ(up.delta, (std::vector<int>{1}));
    EXPECT_NEAR(up.predicted, 2.0 * step.dt, 1e-12);
    // exact law of "exactly one event" vs frequency of net change +1
    const double exact = 2.0 * step.dt * std::exp(-2.0 * step.dt);
    EXPECT_NEAR(up.frequency, exact, 4 * std::sqrt(exact / 100000));
    const double h = step.dt;
    s2 += h * h;
    s3 += h * h * h;
    s4 += h * h * h * h;
    f1 += h * up.frequency;
    f2 += h * h * up.frequency;
  }
  // the linear coefficient is the channel rate
  const double a = (f1 * s4 - f2 * s3) / (s2 * s4 - s3 * s3);
  EXPECT_NEAR(a, 2.0, 0.15);
}

TEST(Oracle, TwoSiteFilterTermsAgree) {
  VoxelGrid g;
  g.boundary = Boundary::Absorbing;
  g.escape_rate = 0.5;
  const auto net = make_ligand_receptor_network(2, {1, 1}, {1, 1});
  const auto sys = build_system(g, TransmitterModel{0, {4.0}}, net, 0, 3);
  const auto spec = generate_filter_spec(net, std::vector<std::string>{"C1", "C2"});
  const auto rep = brute_force_filter_check(sys, spec, 0, 1.0, {0.02, 0.01}, 40000,
                                            17, {}, true, 0);
  ASSERT_EQ(rep.steps.size(), 2u);
  EXPECT_EQ(rep.steps[0].deltas.size(), 5u);
  EXPECT_GT(rep.bin_runs, 100u);
  // ten simultaneous checks: widen each 95% interval to 99.9%
  for (const auto &step : rep.steps)
    for (const auto &d : step.deltas)
      EXPECT_LE(std::abs(d.discrepancy), d.half_width * 3.2905 / 1.96)
          << rep.to_text();
}
