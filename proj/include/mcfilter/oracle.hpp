#ifndef MCFILTER_ORACLE_HPP
#define MCFILTER_ORACLE_HPP

// Independent checks of the simulator and of generated filter specs on small
// systems: exact transient laws by uniformization of the enumerated generator,
// SSA-vs-exact total variation, and a brute-force Monte-Carlo estimate of the
// one-step observed-change probabilities conditioned on the observed history.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <ostream>
#include <queue>
#include <sstream>
#include <string>
#include <vector>

#include "mcfilter/demod.hpp"
#include "mcfilter/error.hpp"
#include "mcfilter/filter_spec.hpp"
#include "mcfilter/parallel.hpp"
#include "mcfilter/rdme.hpp"

namespace mcfilter {

struct StateSpaceLimits {
  /// States whose total signal-species count exceeds this are lumped into a
  /// single absorbing overflow state.
  std::int64_t signal_cap = 50;
  std::size_t max_states = 100000;
};

/// Enumerated reachable states and the sparse generator of the jump process
/// for one symbol. The last state index is the overflow sink.
struct EnumeratedChain {
  std::vector<std::vector<std::int64_t>> states;
  std::map<std::vector<std::int64_t>, std::size_t> index;
  struct Transition {
    std::size_t from, to;
    double rate;
  };
  std::vector<Transition> transitions;
  std::vector<double> exit_rate;
  std::size_t overflow = 0;
  std::size_t initial = 0;

  std::size_t size() const { return states.size() + 1; }

  /// Index for a count vector; the overflow index when not enumerated.
  std::size_t lookup(const std::vector<std::int64_t> &counts) const {
    const auto it = index.find(counts);
    return it == index.end() ? overflow : it->second;
  }
};

inline EnumeratedChain enumerate_chain(const CtmpSystem &sys, std::size_t symbol,
                                       const SystemState &initial,
                                       StateSpaceLimits limits = {}) {
  const std::size_t ns = sys.species_count();
  const SpeciesId sig = sys.signal_species();
  auto signal_total = [&](const std::vector<std::int64_t> &c) {
    std::int64_t n = 0;
    for (std::size_t v = 0; v < sys.grid().voxel_count(); ++v)
      n += c[v * ns + sig.index];
    return n;
  };

  EnumeratedChain chain;
  std::queue<std::size_t> frontier;
  auto intern = [&](const std::vector<std::int64_t> &c) -> std::size_t {
    if (signal_total(c) > limits.signal_cap)
      return std::numeric_limits<std::size_t>::max();
    auto [it, fresh] = chain.index.emplace(c, chain.states.size());
    if (fresh) {
      if (chain.states.size() >= limits.max_states)
        throw ModelError("state space exceeds " +
                         std::to_string(limits.max_states) + " states");
      chain.states.push_back(c);
      frontier.push(it->second);
    }
    return it->second;
  };
  if (initial.species_count != ns)
    throw ModelError("initial state does not match the system");
  chain.initial = intern(initial.counts);
  if (chain.initial == std::numeric_limits<std::size_t>::max())
    throw ModelError("initial state exceeds the signal cap");

  std::vector<std::tuple<std::size_t, std::size_t, double>> raw;
  SystemState s = initial;
  while (!frontier.empty()) {
    const std::size_t from = frontier.front();
    frontier.pop();
    s.counts = chain.states[from];
    for (std::size_t ch = 0; ch < sys.channels().size(); ++ch) {
      const double a = sys.propensity(s, ch, symbol);
      if (a <= 0.0)
        continue;
      SystemState next = s;
      sys.apply(next, ch);
      const std::size_t to = intern(next.counts);
      raw.emplace_back(from, to, a);
    }
  }
  chain.overflow = chain.states.size();
  chain.exit_rate.assign(chain.size(), 0.0);
  // merge parallel transitions (e.g. several escape faces) per (from, to)
  std::map<std::pair<std::size_t, std::size_t>, double> merged;
  for (auto [from, to, a] : raw) {
    if (to == std::numeric_limits<std::size_t>::max())
      to = chain.overflow;
    if (to == from)
      continue;
    merged[{from, to}] += a;
  }
  for (const auto &[key, a] : merged) {
    chain.transitions.push_back({key.first, key.second, a});
    chain.exit_rate[key.first] += a;
  }
  return chain;
}

struct TransientDistribution {
  EnumeratedChain chain;
  std::vector<double> probability; // aligned with chain indices
  double overflow_mass = 0.0;
  double truncation_error = 0.0;
};

/// p(t) = sum_k Poisson(k; Lambda t) p0 P^k with P = I + G / Lambda.
inline TransientDistribution
master_equation_transient(const CtmpSystem &sys, std::size_t symbol, double t,
                          const SystemState &initial, StateSpaceLimits limits = {},
                          double tolerance = 1e-10) {
  if (!(t >= 0.0))
    throw ModelError("time must be non-negative");
  TransientDistribution out;
  out.chain = enumerate_chain(sys, symbol, initial, limits);
  const auto &chain = out.chain;
  const std::size_t n = chain.size();
  std::vector<double> v(n, 0.0);
  v[chain.initial] = 1.0;
  const double lambda =
      *std::max_element(chain.exit_rate.begin(), chain.exit_rate.end());
  if (t == 0.0 || lambda == 0.0) {
    out.probability = v;
    out.overflow_mass = v[chain.overflow];
    return out;
  }
  const double lt = lambda * t;
  if (lt > 5000.0)
    throw ModelError("uniformization rate too large for this horizon");
  std::vector<double> acc(n, 0.0), next(n);
  double cumulative = 0.0;
  for (std::size_t k = 0;; ++k) {
    const double w = std::exp(-lt + static_cast<double>(k) * std::log(lt) -
                              std::lgamma(static_cast<double>(k) + 1.0));
    for (std::size_t i = 0; i < n; ++i)
      acc[i] += w * v[i];
    cumulative += w;
    if (static_cast<double>(k) > lt && 1.0 - cumulative < tolerance)
      break;
    if (k > 100000)
      throw ModelError("uniformization failed to converge");
    // v <- v P
    for (std::size_t i = 0; i < n; ++i)
      next[i] = v[i] * (1.0 - chain.exit_rate[i] / lambda);
    for (const auto &tr : chain.transitions)
      next[tr.to] += v[tr.from] * tr.rate / lambda;
    v.swap(next);
  }
  out.probability = acc;
  out.overflow_mass = acc[chain.overflow];
  out.truncation_error = std::max(0.0, 1.0 - cumulative);
  return out;
}

inline double total_variation(const std::vector<double> &p,
                              const std::vector<double> &q) {
  if (p.size() != q.size())
    throw ModelError("distributions differ in support size");
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    d += std::abs(p[i] - q[i]);
  return 0.5 * d;
}

struct EmpiricalComparison {
  double tv = 0.0;
  std::vector<double> empirical;
  TransientDistribution exact;
};

/// SSA end states of `simulated` at time t versus the exact law of `reference`
/// (normally the same system; a different one gives a negative control).
inline EmpiricalComparison
empirical_vs_exact(const CtmpSystem &simulated, const CtmpSystem &reference,
                   std::size_t symbol, double t, const SystemState &initial,
                   std::size_t n_runs, std::uint64_t first_stream,
                   StateSpaceLimits limits = {}, unsigned workers = 0) {
  if (n_runs == 0)
    throw ModelError("n_runs must be positive");
  EmpiricalComparison out;
  out.exact = master_equation_transient(reference, symbol, t, initial, limits);
  const auto &chain = out.exact.chain;
  std::vector<std::size_t> landed(n_runs);
  parallel_for(
      n_runs,
      [&](std::size_t r) {
        const SystemState end = simulate_visit(
            simulated, symbol, t, first_stream + r,
            [](double, std::size_t, const SystemState &) {}, initial);
        landed[r] = chain.lookup(end.counts);
      },
      workers);
  out.empirical.assign(chain.size(), 0.0);
  for (std::size_t idx : landed)
    out.empirical[idx] += 1.0 / static_cast<double>(n_runs);
  out.tv = total_variation(out.empirical, out.exact.probability);
  return out;
}

// ---------------------------------------------------------------------------
// Brute-force check of the one-step observed-change law.

struct DeltaCheck {
  std::vector<int> delta;
  double frequency = 0.0; // direct conditional frequency
  double predicted = 0.0; // from the spec with ensemble moments
  double discrepancy = 0.0;
  double half_width = 0.0; // 95% CI half-width of the discrepancy
  bool within() const { return std::abs(discrepancy) <= half_width; }
};

struct FilterCheckAtStep {
  double dt = 0.0;
  std::vector<DeltaCheck> deltas; // spec deltas, then zero change
  double other_frequency = 0.0;   // net changes matching no class
  double total_abs_discrepancy() const {
    double s = 0.0;
    for (const auto &d : deltas)
      s += std::abs(d.discrepancy);
    return s;
  }
};

struct FilterCheckReport {
  std::vector<int> bin_history; // flattened observed deltas up to t
  std::vector<std::int64_t> observed_counts;
  std::size_t bin_runs = 0;
  std::size_t total_runs = 0;
  std::vector<FilterCheckAtStep> steps; // one per dt, in input order

  bool all_within() const {
    for (const auto &s : steps)
      for (const auto &d : s.deltas)
        if (!d.within())
          return false;
    return true;
  }

  std::string to_text() const {
    std::ostringstream os;
    os.precision(6);
    os << "bin runs " << bin_runs << " of " << total_runs << ", counts";
    for (auto c : observed_counts)
      os << ' ' << c;
    os << '\n';
    for (const auto &s : steps) {
      os << "dt=" << s.dt << " other=" << s.other_frequency
         << " sum|disc|=" << s.total_abs_discrepancy() << '\n';
      for (const auto &d : s.deltas) {
        os << "  delta(";
        for (std::size_t j = 0; j < d.delta.size(); ++j)
          os << (j ? "," : "") << d.delta[j];
        os << ") freq=" << d.frequency << " pred=" << d.predicted
           << " disc=" << d.discrepancy << " ci=" << d.half_width
           << (d.within() ? " ok" : " OUTSIDE") << '\n';
      }
    }
    return os.str();
  }
};

/// Conditions on the observed event sequence up to time t (order and values
/// of observed changes, not their times) and compares, for every step in
/// `dts`, the frequency of each observed net change over (t, t+dt] with the
/// spec's Q terms evaluated using within-bin means of the unmeasured
/// monomials at t. The most populated bin in which every spec delta has
/// positive predicted probability is reported (any bin when
/// require_every_class is false).
inline FilterCheckReport
brute_force_filter_check(const CtmpSystem &sys, const FilterSpec &spec,
                         std::size_t symbol, double t,
                         const std::vector<double> &dts, std::size_t n_runs,
                         std::uint64_t first_stream,
                         const SystemState &initial = {},
                         bool require_every_class = true, unsigned workers = 0) {
  if (dts.empty())
    throw ModelError("at least one dt is required");
  const double dt_max = *std::max_element(dts.begin(), dts.end());
  const std::size_t rx = sys.receiver().voxel;
  const std::size_t ns = sys.species_count();
  const std::size_t mo = spec.measured.size();

  // delta classes: distinct nonzero spec deltas in channel order, then zero
  std::vector<std::vector<int>> classes;
  for (const auto &ch : spec.channels)
    if (std::any_of(ch.observed_delta.begin(), ch.observed_delta.end(),
                    [](int x) { return x != 0; }) &&
        std::find(classes.begin(), classes.end(), ch.observed_delta) ==
            classes.end())
      classes.push_back(ch.observed_delta);
  classes.emplace_back(mo, 0);
  const std::size_t C = classes.size(), S = dts.size();

  struct RunRecord {
    std::vector<int> key;
    std::vector<std::int64_t> rx_at_t;
    std::vector<std::vector<int>> net; // per dt
  };
  std::vector<RunRecord> records(n_runs);
  const SystemState start = initial.counts.empty() ? sys.initial_state() : initial;
  parallel_for(
      n_runs,
      [&](std::size_t r) {
        RunRecord &rec = records[r];
        std::vector<std::int64_t> rx_counts(ns);
        for (std::size_t s = 0; s < ns; ++s)
          rx_counts[s] = start.counts[rx * ns + s];
        bool captured = false;
        auto measured_of = [&](const std::vector<std::int64_t> &c) {
          std::vector<std::int64_t> m(mo);
          for (std::size_t j = 0; j < mo; ++j)
            m[j] = c[spec.measured[j].index];
          return m;
        };
        std::vector<std::int64_t> at_t_measured;
        rec.net.assign(S, std::vector<int>(mo, 0));
        auto capture = [&] {
          rec.rx_at_t = rx_counts;
          at_t_measured = measured_of(rx_counts);
          captured = true;
        };
        simulate_visit(
            sys, symbol, t + dt_max, first_stream + r,
            [&](double te, std::size_t, const SystemState &st) {
              if (!captured && te > t)
                capture();
              std::vector<std::int64_t> before = measured_of(rx_counts);
              for (std::size_t s = 0; s < ns; ++s)
                rx_counts[s] = st.counts[rx * ns + s];
              const auto after = measured_of(rx_counts);
              bool changed = false;
              for (std::size_t j = 0; j < mo; ++j)
                changed = changed || after[j] != before[j];
              if (!changed)
                return;
              if (te <= t) {
                for (std::size_t j = 0; j < mo; ++j)
                  rec.key.push_back(static_cast<int>(after[j] - before[j]));
              } else {
                for (std::size_t k = 0; k < S; ++k)
                  if (te <= t + dts[k])
                    for (std::size_t j = 0; j < mo; ++j)
                      rec.net[k][j] += static_cast<int>(after[j] - before[j]);
              }
            },
            start);
        if (!captured)
          capture();
      },
      workers);

  // group runs by history bin
  std::map<std::vector<int>, std::vector<std::size_t>> bins;
  for (std::size_t r = 0; r < n_runs; ++r)
    bins[records[r].key].push_back(r);

  std::vector<std::int64_t> start_measured(mo);
  for (std::size_t j = 0; j < mo; ++j)
    start_measured[j] = start.counts[rx * ns + spec.measured[j].index];

  // per-run predicted probability of each class given the run's state at t
  auto predicted = [&](const RunRecord &rec, const std::vector<std::int64_t> &obs,
                       double dt) {
    std::vector<double> p(C, 0.0);
    double sum = 0.0;
    for (const auto &ch : spec.channels) {
      const double q = ch.rate_constant * observed_factor(spec, ch, obs) *
                       monomial_value(ch.moment.exponents, rec.rx_at_t) * dt;
      const auto c = static_cast<std::size_t>(
          std::find(classes.begin(), classes.end(), ch.observed_delta) -
          classes.begin());
      if (c < C - 1) {
        p[c] += q;
        sum += q;
      }
    }
    p[C - 1] = 1.0 - sum;
    return p;
  };

  FilterCheckReport best;
  best.total_runs = n_runs;
  bool found = false;
  for (const auto &[key, members] : bins) {
    if (found && members.size() <= best.bin_runs)
      continue;
    std::vector<std::int64_t> obs = start_measured;
    for (std::size_t i = 0; i < key.size(); ++i)
      obs[i % mo] += key[i];
    // every reaction class must be possible on average
    std::vector<double> mean_pred(C, 0.0);
    for (std::size_t r : members) {
      const auto p = predicted(records[r], obs, 1.0);
      for (std::size_t c = 0; c < C; ++c)
        mean_pred[c] += p[c];
    }
    bool ok = members.size() >= 2;
    for (std::size_t c = 0; require_every_class && c + 1 < C; ++c)
      ok = ok && mean_pred[c] > 0.0;
    if (!ok)
      continue;

    FilterCheckReport rep;
    rep.bin_history = key;
    rep.observed_counts = obs;
    rep.bin_runs = members.size();
    rep.total_runs = n_runs;
    const double n = static_cast<double>(members.size());
    for (std::size_t k = 0; k < S; ++k) {
      FilterCheckAtStep step;
      step.dt = dts[k];
      std::vector<double> freq(C, 0.0), pred(C, 0.0), d_sum(C, 0.0),
          d_sq(C, 0.0);
      double other = 0.0;
      for (std::size_t r : members) {
        const auto &rec = records[r];
        const auto p = predicted(rec, obs, dts[k]);
        const auto it = std::find(classes.begin(), classes.end(), rec.net[k]);
        const std::size_t hit = static_cast<std::size_t>(it - classes.begin());
        if (hit == C)
          other += 1.0;
        for (std::size_t c = 0; c < C; ++c) {
          const double ind = c == hit ? 1.0 : 0.0;
          freq[c] += ind;
          pred[c] += p[c];
          const double d = ind - p[c];
          d_sum[c] += d;
          d_sq[c] += d * d;
        }
      }
      for (std::size_t c = 0; c < C; ++c) {
        DeltaCheck dc;
        dc.delta = classes[c];
        dc.frequency = freq[c] / n;
        dc.predicted = pred[c] / n;
        dc.discrepancy = d_sum[c] / n;
        const double var =
            std::max(0.0, (d_sq[c] - n * dc.discrepancy * dc.discrepancy) / (n - 1.0));
        dc.half_width = 1.96 * std::sqrt(var / n);
        step.deltas.push_back(dc);
      }
      step.other_frequency = other / n;
      rep.steps.push_back(std::move(step));
    }
    best = std::move(rep);
    found = true;
  }
  if (!found)
    throw ModelError("no history bin supports every observed change");
  return best;
}

} // namespace mcfilter

#endif
