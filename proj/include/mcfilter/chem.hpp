#ifndef MCFILTER_CHEM_HPP
#define MCFILTER_CHEM_HPP

// Species, mass-action reactions and reaction networks.
//
// Rate constants are count-based (per second for unimolecular, per second per
// molecule for bimolecular reactions). Converting from concentration-based
// constants is explicit, through scale_rate().

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mcfilter/error.hpp"

namespace mcfilter {

struct SpeciesId {
  std::uint32_t index = 0;
  auto operator<=>(const SpeciesId &) const = default;
};

/// Species -> multiplicity. Ordered by species index so iteration is stable.
using Stoichiometry = std::map<SpeciesId, int>;

struct Reaction {
  Stoichiometry reactants;
  Stoichiometry products;
  double rate_constant = 0.0;
  std::string label;

  int reactant_order() const {
    int n = 0;
    for (const auto &[sp, k] : reactants)
      n += k;
    return n;
  }

  bool operator==(const Reaction &) const = default;
};

/// Products minus reactants with zero entries removed. Catalytic species
/// cancel.
inline std::map<SpeciesId, int> net_change(const Reaction &r) {
  std::map<SpeciesId, int> delta;
  for (const auto &[sp, k] : r.products)
    delta[sp] += k;
  for (const auto &[sp, k] : r.reactants)
    delta[sp] -= k;
  std::erase_if(delta, [](const auto &kv) { return kv.second == 0; });
  return delta;
}

/// Falling factorial n (n-1) ... (n-k+1). Mass-action propensities count
/// distinct reactant tuples, so a homodimer reaction 2A -> ... fires at
/// kappa * n_A (n_A - 1). For the unit multiplicities of the receptor
/// circuits this is just n.
inline double falling_power(std::int64_t n, int k) {
  double p = 1.0;
  for (int i = 0; i < k; ++i)
    p *= static_cast<double>(n - i);
  return p < 0.0 ? 0.0 : p;
}

class ReactionNetwork {
public:
  ReactionNetwork() = default;

  SpeciesId add_species(const std::string &name) {
    if (name.empty())
      throw ModelError("species name must be non-empty");
    if (find(name))
      throw ModelError("duplicate species '" + name + "'");
    names_.push_back(name);
    return SpeciesId{static_cast<std::uint32_t>(names_.size() - 1)};
  }

  std::size_t add_reaction(Reaction r) {
    validate(r);
    reactions_.push_back(std::move(r));
    return reactions_.size() - 1;
  }

  std::optional<SpeciesId> find(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name)
        return SpeciesId{static_cast<std::uint32_t>(i)};
    return std::nullopt;
  }

  SpeciesId at(std::string_view name) const {
    auto id = find(name);
    if (!id)
      throw ModelError("unknown species '" + std::string(name) + "'");
    return *id;
  }

  const std::string &name(SpeciesId id) const { return names_.at(id.index); }
  std::size_t species_count() const { return names_.size(); }
  const std::vector<std::string> &species_names() const { return names_; }
  const std::vector<Reaction> &reactions() const { return reactions_; }

  /// "S + E -> C1" style rendering of one reaction.
  std::string describe(const Reaction &r) const {
    auto side = [&](const Stoichiometry &st) {
      if (st.empty())
        return std::string("0");
      std::string out;
      for (const auto &[sp, k] : st) {
        if (!out.empty())
          out += " + ";
        if (k != 1)
          out += std::to_string(k) + " ";
        out += name(sp);
      }
      return out;
    };
    return side(r.reactants) + " -> " + side(r.products);
  }

  bool operator==(const ReactionNetwork &) const = default;

private:
  void validate(const Reaction &r) const {
    if (r.reactants.empty() && r.products.empty())
      throw ModelError("reaction has neither reactants nor products");
    if (!(r.rate_constant > 0.0))
      throw ModelError("rate constant must be positive" +
                       (r.label.empty() ? std::string() : " (" + r.label + ")"));
    for (const auto *side : {&r.reactants, &r.products})
      for (const auto &[sp, k] : *side) {
        if (sp.index >= names_.size())
          throw ModelError("reaction references undeclared species #" +
                           std::to_string(sp.index));
        if (k < 0)
          throw ModelError("negative stoichiometry");
      }
    if (r.reactant_order() > 2)
      throw ModelError("only elementary reactions (at most two reactant "
                       "molecules) are supported: " +
                       describe(r));
  }

  std::vector<std::string> names_;
  std::vector<Reaction> reactions_;
};

struct RateScaling {
  double volume = 1.0; // voxel volume W^3 in um^3
};

enum class Molecularity { Unimolecular, Bimolecular };

/// Converts a concentration-based rate constant into the count-based constant
/// used by the jump process. Bimolecular constants are divided by the voxel
/// volume; unimolecular constants are unchanged.
inline double scale_rate(double concentration_constant, RateScaling scaling,
                         Molecularity molecularity) {
  if (!(concentration_constant > 0.0))
    throw ModelError("rate constant must be positive");
  if (!(scaling.volume > 0.0))
    throw ModelError("voxel volume must be positive");
  return molecularity == Molecularity::Bimolecular
             ? concentration_constant / scaling.volume
             : concentration_constant;
}

/// Receptor with `n_sites` sequential binding sites:
///   S + E    <-> C1        (lambdas[0], mus[0])
///   S + C[k] <-> C[k+1]    (lambdas[k], mus[k])
/// Species order is S, E, C1..Cn. Each reversible pair is stored as forward
/// then reverse. Constants are count-based (already volume scaled).
inline ReactionNetwork
make_ligand_receptor_network(std::size_t n_sites,
                             const std::vector<double> &lambdas,
                             const std::vector<double> &mus) {
  if (n_sites == 0)
    throw ModelError("receptor needs at least one binding site");
  if (lambdas.size() != n_sites || mus.size() != n_sites)
    throw ModelError("expected " + std::to_string(n_sites) +
                     " forward and reverse rate constants");
  ReactionNetwork net;
  const SpeciesId s = net.add_species("S");
  const SpeciesId e = net.add_species("E");
  std::vector<SpeciesId> c;
  for (std::size_t k = 1; k <= n_sites; ++k)
    c.push_back(net.add_species("C" + std::to_string(k)));

  for (std::size_t k = 0; k < n_sites; ++k) {
    const SpeciesId from = k == 0 ? e : c[k - 1];
    const std::string idx = std::to_string(k + 1);
    net.add_reaction(Reaction{{{s, 1}, {from, 1}}, {{c[k], 1}}, lambdas[k],
                              "lambda" + idx});
    net.add_reaction(
        Reaction{{{c[k], 1}}, {{s, 1}, {from, 1}}, mus[k], "mu" + idx});
  }
  return net;
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos)
    return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos)
      break;
    start = pos + 1;
  }
  return out;
}

} // namespace detail

/// Parses "reactants -> products @ rate [# label]". Sides are '+'-separated
/// terms "[k] Name"; "0" or an empty side denotes no species. Unknown species
/// are an error.
inline Reaction parse_reaction(std::string_view line,
                               const ReactionNetwork &net) {
  std::string body(line);
  std::string label;
  if (const auto hash = body.find('#'); hash != std::string::npos) {
    label = detail::trim(std::string_view(body).substr(hash + 1));
    body.resize(hash);
  }
  const auto arrow = body.find("->");
  const auto at = body.rfind('@');
  if (arrow == std::string::npos || at == std::string::npos || at < arrow)
    throw ModelError("malformed reaction '" + std::string(line) +
                     "' (expected 'reactants -> products @ rate')");

  auto side = [&](std::string_view text) {
    Stoichiometry st;
    const std::string t = detail::trim(text);
    if (t.empty() || t == "0")
      return st;
    for (const auto &term : detail::split(t, '+')) {
      std::istringstream is(term);
      std::string first, second;
      is >> first >> second;
      int k = 1;
      std::string name = first;
      if (!second.empty()) {
        try {
          k = std::stoi(first);
        } catch (const std::exception &) {
          throw ModelError("bad stoichiometric coefficient in '" + term + "'");
        }
        name = second;
      }
      if (name.empty())
        throw ModelError("empty term in reaction '" + std::string(line) + "'");
      st[net.at(name)] += k;
    }
    return st;
  };

  Reaction r;
  r.reactants = side(std::string_view(body).substr(0, arrow));
  r.products = side(std::string_view(body).substr(arrow + 2, at - arrow - 2));
  const std::string rate = detail::trim(std::string_view(body).substr(at + 1));
  try {
    std::size_t used = 0;
    r.rate_constant = std::stod(rate, &used);
    if (used != rate.size())
      throw std::invalid_argument(rate);
  } catch (const std::exception &) {
    throw ModelError("bad rate constant '" + rate + "'");
  }
  r.label = label;
  return r;
}

/// Builds a network from species names and reaction lines.
inline ReactionNetwork
parse_network(const std::vector<std::string> &species,
              const std::vector<std::string> &reaction_lines) {
  ReactionNetwork net;
  for (const auto &s : species)
    net.add_species(s);
  for (const auto &line : reaction_lines)
    net.add_reaction(parse_reaction(line, net));
  return net;
}

/// Text network format: a "species: A B C" line followed by one reaction per
/// line. Blank lines and lines starting with '#' are ignored.
inline ReactionNetwork parse_network_text(std::string_view text) {
  std::vector<std::string> species;
  std::vector<std::string> reactions;
  bool have_species = false;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    const std::string line = detail::trim(raw);
    if (line.empty() || line.front() == '#')
      continue;
    if (line.rfind("species:", 0) == 0) {
      std::istringstream names(line.substr(8));
      std::string n;
      while (names >> n)
        species.push_back(n);
      have_species = true;
    } else {
      reactions.push_back(line);
    }
  }
  if (!have_species)
    throw ModelError("network text lacks a 'species:' line");
  return parse_network(species, reactions);
}

} // namespace mcfilter

#endif
