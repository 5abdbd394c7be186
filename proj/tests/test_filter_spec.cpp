#include <gtest/gtest.h>

#include <random>

#include "golden.hpp"
#include "mcfilter/filter_spec.hpp"

using namespace mcfilter;

TEST(FilterSpec, MatchesHandDerivedTables) {
  const auto net = golden::two_site(golden::Scenario{});
  for (const auto &t : golden::two_site_tables())
    EXPECT_EQ(golden::compare(net, t), "") << t.name;
}

TEST(FilterSpec, MatchesHandDerivedTerms) {
  const golden::Scenario x;
  const auto net = golden::two_site(x);
  EXPECT_LT(golden::max_term_difference(golden::generated_terms(net, {"C1"}, x),
                                        golden::hand_terms_m1(x)),
            1e-15);
  EXPECT_LT(golden::max_term_difference(golden::generated_terms(net, {"C2"}, x),
                                        golden::hand_terms_m2(x)),
            1e-15);
  EXPECT_LT(golden::max_term_difference(
                golden::generated_terms(net, {"C1", "C2"}, x),
                golden::hand_terms_mA(x)),
            1e-15);
}

TEST(FilterSpec, RendersTerms) {
  const auto net = make_ligand_receptor_network(2, {1, 0.5}, {1, 1});
  const std::string text =
      render_text(generate_filter_spec(net, std::vector<std::string>{"C2"}));
  EXPECT_EQ(text,
            "measured: C2\n"
            "terms: 3\n"
            "Q_1 = lambda2[0.5] * E[S(t) C1(t) | s, B(t)] * dt    when C2(t+dt) = C2(t) + 1\n"
            "Q_2 = mu2[1] * C2(t) * 1 * dt    when C2(t+dt) = C2(t) - 1\n"
            "Q_3 = 1 - (Q_1 + Q_2)    when C2(t+dt) = C2(t)\n");
}

TEST(FilterSpec, OnlyReactionsTouchingMeasuredSpecies) {
  const auto net = make_ligand_receptor_network(3, {1, 1, 1}, {1, 1, 1});
  const auto c3 = generate_filter_spec(net, std::vector<std::string>{"C3"});
  ASSERT_EQ(c3.channels.size(), 2u);
  EXPECT_EQ(c3.channels[0].label, "lambda3");
  EXPECT_EQ(c3.channels[1].label, "mu3");
  const auto e = generate_filter_spec(net, std::vector<std::string>{"E"});
  ASSERT_EQ(e.channels.size(), 2u);
  EXPECT_EQ(e.channels[0].label, "lambda1");
  EXPECT_EQ(generate_filter_spec(net, std::vector<std::string>{"C1", "C2", "C3"})
                .channels.size(),
            6u);
}

TEST(FilterSpec, CatalyticChannelHasZeroObservedChange) {
  const auto net = parse_network({"A", "B", "C"}, {"A + B -> A + C @ 2"});
  const auto spec = generate_filter_spec(net, std::vector<std::string>{"A"});
  ASSERT_EQ(spec.channels.size(), 1u);
  EXPECT_EQ(spec.channels[0].observed_delta, (std::vector<int>{0}));
  EXPECT_EQ(spec.channels[0].observed_monomial.size(), 1u);
}

TEST(FilterSpec, RejectsBadMeasurementSets) {
  const auto net = make_ligand_receptor_network(2, {1, 1}, {1, 1});
  EXPECT_THROW(generate_filter_spec(net, std::vector<std::string>{}), ModelError);
  EXPECT_THROW(generate_filter_spec(net, std::vector<std::string>{"C1", "C1"}),
               ModelError);
  EXPECT_THROW(generate_filter_spec(net, std::vector<std::string>{"C9"}), ModelError);
}

TEST(FilterSpec, JsonRoundTrip) {
  const auto net = make_ligand_receptor_network(3, {27, 13.5, 27}, {1, 1, 1});
  for (const auto &m : std::vector<std::vector<std::string>>{
           {"C1"}, {"C2"}, {"C3"}, {"C1", "C2", "C3"}, {"C3", "E"}}) {
    const auto spec = generate_filter_spec(net, m);
    const auto back = filter_spec_from_json(nlohmann::json::parse(to_json(spec).dump()));
    EXPECT_EQ(back, spec);
  }
}

TEST(FilterSpec, RenamingSpeciesOnlyRenames) {
  const auto a = make_ligand_receptor_network(2, {1, 2}, {3, 4});
  const auto b = parse_network(
      {"L", "R", "RL", "RLL"},
      {"L + R -> RL @ 1 # lambda1", "RL -> L + R @ 3 # mu1",
       "L + RL -> RLL @ 2 # lambda2", "RLL -> L + RL @ 4 # mu2"});
  auto sa = generate_filter_spec(a, std::vector<std::string>{"C1", "C2"});
  auto sb = generate_filter_spec(b, std::vector<std::string>{"RL", "RLL"});
  EXPECT_NE(sa, sb);
  sb.species_names = sa.species_names;
  EXPECT_EQ(sa, sb);
}

TEST(FilterSpec, ProbabilitiesAndNoReactionTerm) {
  const auto net = make_ligand_receptor_network(2, {1, 1}, {1, 1});
  const auto spec = generate_filter_spec(net, std::vector<std::string>{"C1", "C2"});
  const std::vector<double> moments{4.0 * 7, 1, 4.0, 1};
  const auto p = channel_probabilities(spec, {2, 1}, moments, 0.01);
  ASSERT_EQ(p.channel.size(), 4u);
  EXPECT_DOUBLE_EQ(p.channel[0], 0.28);
  EXPECT_DOUBLE_EQ(p.channel[1], 0.02);
  EXPECT_DOUBLE_EQ(p.channel[2], 0.08);
  EXPECT_DOUBLE_EQ(p.channel[3], 0.01);
  EXPECT_NEAR(p.no_reaction, 1 - 0.39, 1e-15);
  EXPECT_THROW(channel_probabilities(spec, {2, 1}, moments, 0.1), StepTooLarge);
  EXPECT_THROW(channel_probabilities(spec, {2, 1}, {1.0}, 0.01), ModelError);
  EXPECT_THROW(channel_probabilities(spec, {2, 1}, {-1.0, 1, 1, 1}, 0.01), ModelError);
}

TEST(FilterSpec, FuzzedTermsSumToOne) {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n_sites = 1 + gen() % 5;
    std::vector<double> lam, mu;
    for (std::size_t k = 0; k < n_sites; ++k) {
      lam.push_back(0.1 + static_cast<double>(gen() % 1000) / 10.0);
      mu.push_back(0.1 + static_cast<double>(gen() % 100) / 10.0);
    }
    const auto net = make_ligand_receptor_network(n_sites, lam, mu);
    std::vector<SpeciesId> measured;
    for (std::uint32_t s = 1; s < net.species_count(); ++s)
      if (gen() % 2)
        measured.push_back(SpeciesId{s});
    if (measured.empty())
      measured.push_back(SpeciesId{2});
    const auto spec = generate_filter_spec(net, measured);
    std::vector<std::int64_t> counts;
    for (std::size_t j = 0; j < measured.size(); ++j)
      counts.push_back(static_cast<std::int64_t>(gen() % 20));
    std::vector<double> moments;
    double total_rate = 0.0;
    for (const auto &ch : spec.channels) {
      moments.push_back(ch.moment.is_constant() ? 1.0 : static_cast<double>(gen() % 500) / 7.0);
      total_rate += ch.rate_constant * observed_factor(spec, ch, counts) * moments.back();
    }
    const double dt = total_rate > 0 ? 0.9 / total_rate : 0.1;
    const auto p = channel_probabilities(spec, counts, moments, dt);
    double sum = p.no_reaction;
    for (double q : p.channel) {
      EXPECT_GE(q, 0.0);
      sum += q;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}
