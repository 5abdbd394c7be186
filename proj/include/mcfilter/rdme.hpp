#ifndef MCFILTER_RDME_HPP
#define MCFILTER_RDME_HPP

// End-to-end jump process: a cubic voxel lattice in which the signalling
// species diffuses, a transmitter voxel emitting molecules as a Poisson
// process, and a receiver voxel hosting the receptor circuit. Trajectories are
// sampled exactly with the direct-method SSA.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "mcfilter/chem.hpp"
#include "mcfilter/error.hpp"
#include "mcfilter/rng.hpp"

namespace mcfilter {

enum class Boundary { Reflecting, Absorbing };

/// Zero-based lattice coordinate.
struct VoxelCoord {
  int x = 0, y = 0, z = 0;
  bool operator==(const VoxelCoord &) const = default;
};

struct VoxelGrid {
  std::array<int, 3> dims{1, 1, 1};
  double voxel_edge = 1.0;      // W, um
  double diffusion_coeff = 0.0; // D, um^2/s
  Boundary boundary = Boundary::Reflecting;
  /// Per-molecule, per-outward-face escape rate for Absorbing boundaries.
  /// Negative selects the default d/50.
  double escape_rate = -1.0;

  static constexpr double kDefaultEscapeFraction = 1.0 / 50.0;

  void validate() const {
    for (int n : dims)
      if (n < 1)
        throw ModelError("grid dimensions must be >= 1");
    if (!(voxel_edge > 0.0))
      throw ModelError("voxel edge must be positive");
    if (!(diffusion_coeff >= 0.0))
      throw ModelError("diffusion coefficient must be non-negative");
  }

  /// Hop rate d = D / W^2 to each neighbouring voxel.
  double hop_rate() const { return diffusion_coeff / (voxel_edge * voxel_edge); }

  double escape_rate_value() const {
    if (boundary == Boundary::Reflecting)
      return 0.0;
    return escape_rate < 0.0 ? hop_rate() * kDefaultEscapeFraction
                             : escape_rate;
  }

  double voxel_volume() const { return voxel_edge * voxel_edge * voxel_edge; }

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }

  bool contains(VoxelCoord c) const {
    return c.x >= 0 && c.y >= 0 && c.z >= 0 && c.x < dims[0] &&
           c.y < dims[1] && c.z < dims[2];
  }

  std::size_t index(VoxelCoord c) const {
    if (!contains(c))
      throw ModelError("voxel (" + std::to_string(c.x + 1) + "," +
                       std::to_string(c.y + 1) + "," +
                       std::to_string(c.z + 1) + ") outside the grid");
    return static_cast<std::size_t>(c.x) +
           static_cast<std::size_t>(dims[0]) *
               (static_cast<std::size_t>(c.y) +
                static_cast<std::size_t>(dims[1]) * c.z);
  }

  VoxelCoord coord(std::size_t v) const {
    const int x = static_cast<int>(v % dims[0]);
    const int y = static_cast<int>((v / dims[0]) % dims[1]);
    const int z = static_cast<int>(v / (static_cast<std::size_t>(dims[0]) * dims[1]));
    return {x, y, z};
  }

  std::vector<std::size_t> neighbors(std::size_t v) const {
    const VoxelCoord c = coord(v);
    std::vector<std::size_t> out;
    for (const auto &step : kSteps) {
      const VoxelCoord n{c.x + step[0], c.y + step[1], c.z + step[2]};
      if (contains(n))
        out.push_back(index(n));
    }
    return out;
  }

  /// Number of faces of voxel v on the outer surface of the medium.
  int boundary_faces(std::size_t v) const {
    return 6 - static_cast<int>(neighbors(v).size());
  }

private:
  static constexpr std::array<std::array<int, 3>, 6> kSteps{
      {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}}};
};

struct TransmitterModel {
  std::size_t voxel = 0;
  /// Mean emission rate (molecules/s) for each symbol.
  std::vector<double> emission_rates;
};

struct ReceiverModel {
  ReactionNetwork network;
  std::size_t voxel = 0;
  std::int64_t receptor_count = 0; // M
  std::string signal_species = "S";
  std::string receptor_species = "E";
};

enum class ChannelKind { Reaction, Diffusion, Emission, Escape };

inline const char *to_string(ChannelKind k) {
  switch (k) {
  case ChannelKind::Reaction:
    return "reaction";
  case ChannelKind::Diffusion:
    return "diffusion";
  case ChannelKind::Emission:
    return "emission";
  case ChannelKind::Escape:
    return "escape";
  }
  return "?";
}

struct Channel {
  ChannelKind kind = ChannelKind::Reaction;
  std::size_t reaction = 0; // Reaction
  std::size_t from = 0;     // Diffusion source, Escape/Emission voxel
  std::size_t to = 0;       // Diffusion target
  SpeciesId species{};      // Diffusion/Emission/Escape species
};

/// One entry of a sparse state change.
struct CountDelta {
  std::size_t voxel = 0;
  SpeciesId species{};
  int change = 0;
  bool operator==(const CountDelta &) const = default;
};

struct SystemState {
  std::size_t species_count = 0;
  std::vector<std::int64_t> counts; // voxel-major
  double time = 0.0;

  std::int64_t at(std::size_t voxel, SpeciesId sp) const {
    return counts[voxel * species_count + sp.index];
  }
  std::int64_t &at(std::size_t voxel, SpeciesId sp) {
    return counts[voxel * species_count + sp.index];
  }
  bool operator==(const SystemState &) const = default;
};

struct JumpEvent {
  double time = 0.0;
  std::size_t channel = 0;
  std::vector<CountDelta> delta;
  bool operator==(const JumpEvent &) const = default;
};

struct Trajectory {
  SystemState initial;
  std::vector<JumpEvent> events;
  double horizon = 0.0;
  std::size_t symbol = 0;
  bool operator==(const Trajectory &) const = default;
};

/// The assembled jump process for all symbols. Immutable after construction.
class CtmpSystem {
public:
  /// Rejects total propensities above this value as runaway.
  static constexpr double kPropensityCap = 1e12;

  CtmpSystem(VoxelGrid grid, TransmitterModel tx, ReceiverModel rx)
      : grid_(std::move(grid)), tx_(std::move(tx)), rx_(std::move(rx)) {
    grid_.validate();
    if (tx_.voxel >= grid_.voxel_count())
      throw ModelError("transmitter voxel outside the grid");
    if (rx_.voxel >= grid_.voxel_count())
      throw ModelError("receiver voxel outside the grid");
    if (rx_.receptor_count < 0)
      throw ModelError("receptor count must be non-negative");
    for (double r : tx_.emission_rates)
      if (!(r >= 0.0) || !std::isfinite(r))
        throw ModelError("emission rates must be finite and non-negative");
    signal_ = rx_.network.at(rx_.signal_species);
    receptor_ = rx_.network.at(rx_.receptor_species);
    enumerate_channels();
  }

  const VoxelGrid &grid() const { return grid_; }
  const TransmitterModel &transmitter() const { return tx_; }
  const ReceiverModel &receiver() const { return rx_; }
  const ReactionNetwork &network() const { return rx_.network; }
  std::size_t species_count() const { return rx_.network.species_count(); }
  std::size_t symbol_count() const { return tx_.emission_rates.size(); }
  SpeciesId signal_species() const { return signal_; }
  SpeciesId receptor_species() const { return receptor_; }
  const std::vector<Channel> &channels() const { return channels_; }
  const std::vector<CountDelta> &channel_delta(std::size_t ch) const {
    return deltas_[ch];
  }

  SystemState initial_state() const {
    SystemState s;
    s.species_count = species_count();
    s.counts.assign(grid_.voxel_count() * s.species_count, 0);
    s.at(rx_.voxel, receptor_) = rx_.receptor_count;
    return s;
  }

  double propensity(const SystemState &state, std::size_t ch,
                    std::size_t symbol) const {
    const Channel &c = channels_[ch];
    switch (c.kind) {
    case ChannelKind::Reaction: {
      const Reaction &r = rx_.network.reactions()[c.reaction];
      double a = r.rate_constant;
      for (const auto &[sp, k] : r.reactants)
        a *= falling_power(state.at(rx_.voxel, sp), k);
      return a;
    }
    case ChannelKind::Diffusion:
      return hop_rate_ * static_cast<double>(state.at(c.from, c.species));
    case ChannelKind::Escape:
      return escape_rate_ * static_cast<double>(state.at(c.from, c.species));
    case ChannelKind::Emission:
      return tx_.emission_rates.at(symbol);
    }
    return 0.0;
  }

  void apply(SystemState &state, std::size_t ch) const {
    for (const auto &d : deltas_[ch])
      state.at(d.voxel, d.species) += d.change;
  }

private:
  void enumerate_channels() {
    const auto &net = rx_.network;
    for (std::size_t i = 0; i < net.reactions().size(); ++i) {
      Channel c;
      c.kind = ChannelKind::Reaction;
      c.reaction = i;
      std::vector<CountDelta> d;
      for (const auto &[sp, k] : net_change(net.reactions()[i]))
        d.push_back({rx_.voxel, sp, k});
      add(c, std::move(d));
    }
    hop_rate_ = grid_.hop_rate();
    escape_rate_ = grid_.escape_rate_value();
    // Receptor species are fixed in the receiver voxel; only the signal
    // species moves.
    if (hop_rate_ > 0.0)
      for (std::size_t v = 0; v < grid_.voxel_count(); ++v)
        for (std::size_t n : grid_.neighbors(v))
          add(Channel{ChannelKind::Diffusion, 0, v, n, signal_},
              {{v, signal_, -1}, {n, signal_, +1}});
    if (grid_.boundary == Boundary::Absorbing && escape_rate_ > 0.0)
      for (std::size_t v = 0; v < grid_.voxel_count(); ++v)
        for (int f = 0; f < grid_.boundary_faces(v); ++f)
          add(Channel{ChannelKind::Escape, 0, v, v, signal_},
              {{v, signal_, -1}});
    add(Channel{ChannelKind::Emission, 0, tx_.voxel, tx_.voxel, signal_},
        {{tx_.voxel, signal_, +1}});
  }

  void add(Channel c, std::vector<CountDelta> d) {
    channels_.push_back(c);
    deltas_.push_back(std::move(d));
  }

  VoxelGrid grid_;
  TransmitterModel tx_;
  ReceiverModel rx_;
  SpeciesId signal_{};
  SpeciesId receptor_{};
  double hop_rate_ = 0.0;
  double escape_rate_ = 0.0;
  std::vector<Channel> channels_;
  std::vector<std::vector<CountDelta>> deltas_;
};

inline CtmpSystem build_system(const VoxelGrid &grid,
                               const TransmitterModel &tx,
                               const ReactionNetwork &rx_network,
                               std::size_t rx_voxel,
                               std::int64_t receptor_count) {
  ReceiverModel rx;
  rx.network = rx_network;
  rx.voxel = rx_voxel;
  rx.receptor_count = receptor_count;
  return CtmpSystem(grid, tx, std::move(rx));
}

/// Direct-method SSA. Calls on_event(time, channel, state_after) for every
/// jump up to `horizon`; returns the final state (time set to horizon).
template <class OnEvent>
SystemState simulate_visit(const CtmpSystem &sys, std::size_t symbol,
                           double horizon, std::uint64_t seed,
                           OnEvent &&on_event,
                           SystemState state = SystemState{}) {
  if (!(horizon > 0.0))
    throw ModelError("horizon must be positive");
  if (symbol >= sys.symbol_count())
    throw ModelError("symbol " + std::to_string(symbol) + " out of range");
  if (state.counts.empty())
    state = sys.initial_state();
  Rng rng(seed);
  const std::size_t n = sys.channels().size();
  std::vector<double> a(n);
  double t = state.time;
  while (true) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = sys.propensity(state, i, symbol);
      total += a[i];
    }
    if (!(total <= CtmpSystem::kPropensityCap))
      throw ModelError("total propensity exceeds the cap (" +
                       std::to_string(total) + "/s)");
    if (total <= 0.0)
      break;
    t += rng.exponential(total);
    if (t > horizon)
      break;
    const double target = rng.uniform() * total;
    double acc = 0.0;
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      acc += a[i];
      if (target < acc && a[i] > 0.0) {
        pick = i;
        break;
      }
    }
    if (pick == n) // rounding at the top end of the cumulative sum
      for (std::size_t i = n; i-- > 0;)
        if (a[i] > 0.0) {
          pick = i;
          break;
        }
    sys.apply(state, pick);
    state.time = t;
    on_event(t, pick, static_cast<const SystemState &>(state));
  }
  state.time = horizon;
  return state;
}

inline Trajectory simulate(const CtmpSystem &sys, std::size_t symbol,
                           double horizon, std::uint64_t seed) {
  Trajectory traj;
  traj.initial = sys.initial_state();
  traj.horizon = horizon;
  traj.symbol = symbol;
  simulate_visit(sys, symbol, horizon, seed,
                 [&](double t, std::size_t ch, const SystemState &) {
                   traj.events.push_back({t, ch, sys.channel_delta(ch)});
                 });
  return traj;
}

/// Re-applies every event from the initial state. Calls visit(state) after
/// each event and throws if a count would go negative or time goes backwards.
template <class Visit>
SystemState replay(const Trajectory &traj, Visit &&visit) {
  SystemState s = traj.initial;
  double last = s.time;
  for (const auto &e : traj.events) {
    if (!(e.time > last))
      throw ModelError("trajectory times are not strictly increasing");
    last = e.time;
    for (const auto &d : e.delta) {
      auto &c = s.at(d.voxel, d.species);
      c += d.change;
      if (c < 0)
        throw ModelError("trajectory replay produced a negative count");
    }
    s.time = e.time;
    visit(static_cast<const SystemState &>(s));
  }
  return s;
}

inline SystemState replay(const Trajectory &traj) {
  return replay(traj, [](const SystemState &) {});
}

struct ObservedEvent {
  double time = 0.0;
  std::vector<int> delta; // aligned with ObservedHistory::measured
  bool operator==(const ObservedEvent &) const = default;
};

/// Projection of a trajectory onto the receiver counts of measured species.
struct ObservedHistory {
  std::vector<SpeciesId> measured;
  std::vector<std::string> names;
  std::vector<std::int64_t> initial;
  std::vector<ObservedEvent> events;
  bool operator==(const ObservedHistory &) const = default;
};

inline ObservedHistory observe(const Trajectory &traj, const CtmpSystem &sys,
                               const std::vector<SpeciesId> &measured) {
  if (measured.empty())
    throw ModelError("at least one measured species is required");
  ObservedHistory h;
  h.measured = measured;
  const std::size_t rx = sys.receiver().voxel;
  for (SpeciesId sp : measured) {
    if (sp.index >= sys.species_count())
      throw ModelError("measured species not in the receiver network");
    h.names.push_back(sys.network().name(sp));
    h.initial.push_back(traj.initial.at(rx, sp));
  }
  std::vector<int> delta(measured.size());
  for (const auto &e : traj.events) {
    std::fill(delta.begin(), delta.end(), 0);
    bool any = false;
    for (const auto &d : e.delta) {
      if (d.voxel != rx)
        continue;
      for (std::size_t j = 0; j < measured.size(); ++j)
        if (measured[j] == d.species) {
          delta[j] += d.change;
          any = any || d.change != 0;
        }
    }
    if (any && std::any_of(delta.begin(), delta.end(),
                           [](int x) { return x != 0; }))
      h.events.push_back({e.time, delta});
  }
  return h;
}

inline ObservedHistory observe(const Trajectory &traj, const CtmpSystem &sys,
                               const std::vector<std::string> &measured) {
  std::vector<SpeciesId> ids;
  for (const auto &n : measured)
    ids.push_back(sys.network().at(n));
  return observe(traj, sys, ids);
}

/// One line per event: time, channel kind, then (voxel,species,change)
/// triples.
inline void write_trajectory(std::ostream &os, const Trajectory &traj,
                             const CtmpSystem &sys) {
  os.precision(17);
  for (const auto &e : traj.events) {
    os << e.time << ' ' << to_string(sys.channels()[e.channel].kind);
    for (const auto &d : e.delta)
      os << ' ' << d.voxel << ',' << sys.network().name(d.species) << ','
         << d.change;
    os << '\n';
  }
}

/// CSV with header "time,species,delta"; one row per nonzero entry.
inline void write_history_csv(std::ostream &os, const ObservedHistory &h) {
  os.precision(17);
  os << "time,species,delta\n";
  for (const auto &e : h.events)
    for (std::size_t j = 0; j < e.delta.size(); ++j)
      if (e.delta[j] != 0)
        os << e.time << ',' << h.names[j] << ',' << e.delta[j] << '\n';
}

} // namespace mcfilter

#endif
