#ifndef MCFILTER_DEMOD_HPP
#define MCFILTER_DEMOD_HPP

// Sub-optimal MAP demodulation.
//
// For every symbol s the log-posterior statistic obeys, between observed
// events, dZ_s/dt = -sum_i q_is(t), and jumps by log(sum_{i: o_i = delta}
// q_is(t-)) at an event with observed change delta, where
//
//   q_is(t) = kappa_i * prod_j n_Oj(t)^(a_ij) * E[prod_j n_Uj(t)^(b_ij) | s].
//
// History-conditioned moments are replaced by symbol-conditioned moments
// estimated by Monte Carlo, which is what makes the filter sub-optimal.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "mcfilter/error.hpp"
#include "mcfilter/filter_spec.hpp"
#include "mcfilter/parallel.hpp"
#include "mcfilter/rdme.hpp"

namespace mcfilter {

/// Distinct non-constant moment descriptors referenced by the spec.
inline std::set<MomentDescriptor> required_moments(const FilterSpec &spec) {
  std::set<MomentDescriptor> out;
  for (const auto &ch : spec.channels)
    if (!ch.moment.is_constant())
      out.insert(ch.moment);
  return out;
}

/// Symbol-conditioned mean of one monomial on a time grid.
struct MomentTable {
  std::size_t symbol = 0;
  MomentDescriptor descriptor;
  std::vector<double> grid;
  std::vector<double> values;
  std::vector<double> std_error;
  std::size_t n_runs = 0;

  /// Linear interpolation; t must lie within the grid.
  double at(double t) const {
    if (grid.empty())
      throw ModelError("empty moment table");
    if (t < grid.front() || t > grid.back())
      throw ModelError("time " + std::to_string(t) +
                       " outside the moment grid [" +
                       std::to_string(grid.front()) + ", " +
                       std::to_string(grid.back()) + "]");
    const auto hi = std::upper_bound(grid.begin(), grid.end(), t);
    if (hi == grid.end())
      return values.back();
    const std::size_t k = static_cast<std::size_t>(hi - grid.begin());
    if (k == 0)
      return values.front();
    const double w = (t - grid[k - 1]) / (grid[k] - grid[k - 1]);
    return values[k - 1] + w * (values[k] - values[k - 1]);
  }
};

/// All moment tables for one symbol.
struct SymbolMoments {
  std::size_t symbol = 0;
  std::map<MomentDescriptor, MomentTable> tables;

  double value(const MomentDescriptor &d, double t) const {
    if (d.is_constant())
      return 1.0;
    const auto it = tables.find(d);
    if (it == tables.end())
      throw ModelError("no moment table for a required descriptor");
    return it->second.at(t);
  }

  /// Grid points of all tables.
  std::vector<double> grid() const {
    std::vector<double> g;
    for (const auto &[d, t] : tables)
      g.insert(g.end(), t.grid.begin(), t.grid.end());
    std::sort(g.begin(), g.end());
    g.erase(std::unique(g.begin(), g.end()), g.end());
    return g;
  }
};

inline std::vector<double> uniform_grid(double horizon, double step) {
  if (!(horizon > 0.0) || !(step > 0.0))
    throw ModelError("grid horizon and step must be positive");
  const auto n = static_cast<std::size_t>(std::ceil(horizon / step - 1e-9));
  std::vector<double> g(n + 1);
  for (std::size_t k = 0; k <= n; ++k)
    g[k] = std::min(horizon, static_cast<double>(k) * step);
  return g;
}

inline double monomial_value(const Monomial &m,
                             const std::vector<std::int64_t> &counts) {
  double v = 1.0;
  for (const auto &[sp, k] : m)
    v *= falling_power(counts[sp.index], k);
  return v;
}

/// Sample means (and standard errors) of each descriptor's monomial over the
/// receiver-voxel counts, sampled right-continuously at grid times, across
/// n_runs independent trajectories with stream ids first_stream + run.
inline SymbolMoments
estimate_moments(const CtmpSystem &sys, std::size_t symbol,
                 const std::set<MomentDescriptor> &descriptors,
                 std::size_t n_runs, const std::vector<double> &grid,
                 std::uint64_t first_stream, unsigned workers = 0) {
  if (n_runs < 2)
    throw ModelError("moment estimation needs at least two runs");
  if (grid.empty() || grid.front() < 0.0 ||
      !std::is_sorted(grid.begin(), grid.end()))
    throw ModelError("moment grid must be non-empty, sorted, non-negative");
  const std::vector<MomentDescriptor> desc(descriptors.begin(),
                                           descriptors.end());
  const std::size_t G = grid.size(), D = desc.size();
  const std::size_t rx = sys.receiver().voxel;
  const std::size_t ns = sys.species_count();
  const double horizon = std::max(grid.back(), 1e-12);

  // per-run samples, summed in run order afterwards
  std::vector<std::vector<double>> samples(n_runs);
  parallel_for(
      n_runs,
      [&](std::size_t run) {
        std::vector<double> &out = samples[run];
        out.assign(G * D, 0.0);
        SystemState init = sys.initial_state();
        std::vector<std::int64_t> rx_counts(ns);
        for (std::size_t s = 0; s < ns; ++s)
          rx_counts[s] = init.counts[rx * ns + s];
        std::size_t g = 0;
        auto flush_before = [&](double t) {
          for (; g < G && grid[g] < t; ++g)
            for (std::size_t d = 0; d < D; ++d)
              out[g * D + d] = monomial_value(desc[d].exponents, rx_counts);
        };
        simulate_visit(sys, symbol, horizon, first_stream + run,
                       [&](double t, std::size_t, const SystemState &st) {
                         flush_before(t);
                         for (std::size_t s = 0; s < ns; ++s)
                           rx_counts[s] = st.counts[rx * ns + s];
                       });
        flush_before(std::numeric_limits<double>::infinity());
      },
      workers);

  SymbolMoments result;
  result.symbol = symbol;
  const double n = static_cast<double>(n_runs);
  for (std::size_t d = 0; d < D; ++d) {
    MomentTable t;
    t.symbol = symbol;
    t.descriptor = desc[d];
    t.grid = grid;
    t.n_runs = n_runs;
    t.values.assign(G, 0.0);
    t.std_error.assign(G, 0.0);
    for (std::size_t g = 0; g < G; ++g) {
      double sum = 0.0, sq = 0.0;
      for (std::size_t r = 0; r < n_runs; ++r) {
        const double x = samples[r][g * D + d];
        sum += x;
        sq += x * x;
      }
      const double mean = sum / n;
      const double var = std::max(0.0, (sq - n * mean * mean) / (n - 1.0));
      t.values[g] = mean;
      t.std_error[g] = std::sqrt(var / n);
    }
    result.tables.emplace(desc[d], std::move(t));
  }
  return result;
}

struct Decision {
  std::size_t symbol = 0;
  std::vector<double> Z;
  double time = 0.0;
  std::size_t floor_hits = 0; // jump rates clamped to the floor
  bool operator==(const Decision &) const = default;
};

/// Argmax over Z with ties resolved to the lowest symbol.
inline std::size_t argmax_symbol(const std::vector<double> &Z) {
  std::size_t best = 0;
  for (std::size_t s = 1; s < Z.size(); ++s)
    if (Z[s] > Z[best])
      best = s;
  return best;
}

struct DemodState {
  std::vector<double> Z;
  double time = 0.0;
};

inline Decision decide(const DemodState &state) {
  if (state.Z.empty())
    throw ModelError("no symbols to decide between");
  return Decision{argmax_symbol(state.Z), state.Z, state.time, 0};
}

struct DemodOptions {
  /// Lower clamp for the summed jump rate inside the log.
  double rate_floor = 1e-12;
  /// Omit drift of channels whose rate does not depend on the symbol
  /// (constant moment). Shifts every Z_s equally.
  bool drop_symbol_independent_drift = false;
  /// Called after each breakpoint with (time, Z).
  std::function<void(double, const std::vector<double> &)> trace;
};

inline Decision integrate_filter(const FilterSpec &spec,
                                 const std::vector<SymbolMoments> &moments,
                                 const ObservedHistory &history, double t_d,
                                 const DemodOptions &opts = {}) {
  const std::size_t K = moments.size();
  if (K == 0)
    throw ModelError("moment tables for at least one symbol are required");
  if (history.measured != spec.measured)
    throw ModelError("history and filter spec measure different species");
  if (!(t_d >= 0.0))
    throw ModelError("decision time must be non-negative");
  for (const auto &sm : moments)
    for (const auto &d : required_moments(spec))
      if (!sm.tables.count(d))
        throw ModelError("moment tables do not cover every required moment");

  // Channels that leave the measured counts unchanged are indistinguishable
  // from "no event": their probability merges into the no-change term and
  // their rate cancels from the drift.
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < spec.channels.size(); ++i)
    if (std::any_of(spec.channels[i].observed_delta.begin(),
                    spec.channels[i].observed_delta.end(),
                    [](int x) { return x != 0; }))
      active.push_back(i);

  std::vector<double> breaks{0.0, t_d};
  for (const auto &sm : moments) {
    const auto g = sm.grid();
    for (double t : g)
      if (t > 0.0 && t < t_d)
        breaks.push_back(t);
  }
  for (const auto &e : history.events) {
    if (e.time < 0.0)
      throw ModelError("history event before time zero");
    if (e.time <= t_d)
      breaks.push_back(e.time);
  }
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

  std::vector<std::int64_t> counts = history.initial;
  std::vector<double> Z(K, 0.0);
  std::size_t floor_hits = 0;
  std::size_t next_event = 0;

  auto drift_rate = [&](std::size_t s, double t) {
    double r = 0.0;
    for (std::size_t i : active) {
      const auto &ch = spec.channels[i];
      if (opts.drop_symbol_independent_drift && ch.moment.is_constant())
        continue;
      r += ch.rate_constant * observed_factor(spec, ch, counts) *
           moments[s].value(ch.moment, t);
    }
    return r;
  };

  for (std::size_t b = 0; b < breaks.size(); ++b) {
    const double t = breaks[b];
    // jumps at t, evaluated with pre-event counts
    while (next_event < history.events.size() &&
           history.events[next_event].time <= t) {
      const auto &e = history.events[next_event];
      if (e.time == t) {
        for (std::size_t s = 0; s < K; ++s) {
          double rate = 0.0;
          bool matched = false;
          for (std::size_t i : active) {
            const auto &ch = spec.channels[i];
            if (ch.observed_delta != e.delta)
              continue;
            matched = true;
            rate += ch.rate_constant * observed_factor(spec, ch, counts) *
                    moments[s].value(ch.moment, t);
          }
          if (!matched)
            throw ModelMismatch("observed change at t=" + std::to_string(t) +
                                " matches no filter channel");
          if (!(rate >= opts.rate_floor)) {
            rate = opts.rate_floor;
            ++floor_hits;
          }
          Z[s] += std::log(rate);
        }
      }
      for (std::size_t j = 0; j < counts.size(); ++j) {
        counts[j] += e.delta[j];
        if (counts[j] < 0)
          throw ModelMismatch("observed count went negative");
      }
      ++next_event;
    }
    if (opts.trace)
      opts.trace(t, Z);
    if (b + 1 == breaks.size())
      break;
    // drift over [t, t_next) with counts constant and moments linear
    const double t1 = breaks[b + 1];
    for (std::size_t s = 0; s < K; ++s)
      Z[s] -= 0.5 * (drift_rate(s, t) + drift_rate(s, t1)) * (t1 - t);
  }

  Decision d;
  d.Z = Z;
  d.symbol = argmax_symbol(Z);
  d.time = t_d;
  d.floor_hits = floor_hits;
  return d;
}

/// CSV "time,Z_0,...,Z_{K-1}" of the filter outputs at every breakpoint.
inline void write_z_trace_csv(std::ostream &os, const FilterSpec &spec,
                              const std::vector<SymbolMoments> &moments,
                              const ObservedHistory &history, double t_d) {
  os.precision(17);
  os << "time";
  for (std::size_t s = 0; s < moments.size(); ++s)
    os << ",Z_" << s;
  os << '\n';
  DemodOptions opts;
  opts.trace = [&](double t, const std::vector<double> &Z) {
    os << t;
    for (double z : Z)
      os << ',' << z;
    os << '\n';
  };
  integrate_filter(spec, moments, history, t_d, opts);
}

} // namespace mcfilter

#endif
