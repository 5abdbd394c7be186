#ifndef MCFILTER_HARNESS_HPP
#define MCFILTER_HARNESS_HPP

// Experiment configuration, symbol-error-rate Monte Carlo, parameter sweeps
// and result persistence.
//
// Seeds: evaluation trial i simulates on stream base_seed + i and draws its
// symbol from stream base_seed + kSymbolStreamOffset + i. Moment estimation
// for symbol s, run r uses base_seed + kMomentStreamOffset + s * 2^32 + r, a
// range disjoint from the evaluation streams.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mcfilter/chem.hpp"
#include "mcfilter/demod.hpp"
#include "mcfilter/error.hpp"
#include "mcfilter/filter_spec.hpp"
#include "mcfilter/parallel.hpp"
#include "mcfilter/rdme.hpp"
#include "mcfilter/rng.hpp"
#include "mcfilter/stats.hpp"

namespace mcfilter {

inline constexpr const char *kVersion = "mcfilter 1.0.0";
inline constexpr std::uint64_t kMomentStreamOffset = 1ULL << 40;
inline constexpr std::uint64_t kSymbolStreamOffset = 1ULL << 42;
inline constexpr std::uint64_t kSweepSeedStride = 1ULL << 44;

struct MeasurementChoice {
  std::string label;
  std::vector<std::string> species;
};

struct ExperimentConfig {
  VoxelGrid grid;
  VoxelCoord tx_voxel;
  std::vector<double> symbol_rates;
  VoxelCoord rx_voxel;
  std::int64_t receptors = 0;
  ReactionNetwork network;
  std::string signal_species = "S";
  std::string receptor_species = "E";
  std::vector<MeasurementChoice> measurements;
  double horizon = 1.0;
  double decision_time = 1.0;
  std::size_t n_trials = 200;
  std::size_t n_moment_runs = 500;
  double moment_grid_step = 0.01;
  std::uint64_t base_seed = 1;
  std::string output_dir = "results";
  /// The structured document this config was read from, with overrides
  /// applied. Persisted verbatim in the manifest.
  nlohmann::json source;

  CtmpSystem system() const {
    TransmitterModel tx{grid.index(tx_voxel), symbol_rates};
    ReceiverModel rx;
    rx.network = network;
    rx.voxel = grid.index(rx_voxel);
    rx.receptor_count = receptors;
    rx.signal_species = signal_species;
    rx.receptor_species = receptor_species;
    return CtmpSystem(grid, std::move(tx), std::move(rx));
  }

  void validate(bool require_distinct_symbols = true) const {
    grid.validate();
    grid.index(tx_voxel);
    grid.index(rx_voxel);
    if (symbol_rates.size() < 2)
      throw ConfigError("transmitter.symbol_rates needs at least two symbols");
    for (std::size_t i = 0; i < symbol_rates.size(); ++i) {
      if (!(symbol_rates[i] >= 0.0))
        throw ConfigError("transmitter.symbol_rates must be non-negative");
      for (std::size_t j = 0; require_distinct_symbols && j < i; ++j)
        if (symbol_rates[i] == symbol_rates[j])
          throw ConfigError("transmitter.symbol_rates must be distinct");
    }
    if (receptors < 0)
      throw ConfigError("receiver.M must be non-negative");
    if (measurements.empty())
      throw ConfigError("measurements must list at least one choice");
    for (const auto &m : measurements)
      for (const auto &s : m.species)
        if (!network.find(s))
          throw ConfigError("measurement '" + m.label +
                            "' references unknown species '" + s + "'");
    if (n_trials < 1)
      throw ConfigError("n_trials must be >= 1");
    if (n_moment_runs < 2)
      throw ConfigError("n_moment_runs must be >= 2");
    if (!(horizon > 0.0))
      throw ConfigError("horizon must be positive");
    if (!(decision_time > 0.0) || decision_time > horizon)
      throw ConfigError("decision_time must lie in (0, horizon]");
    if (!(moment_grid_step > 0.0))
      throw ConfigError("moment_grid_step must be positive");
  }
};

namespace detail {

inline const nlohmann::json &require(const nlohmann::json &j,
                                     const std::string &path) {
  const nlohmann::json *node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (!node->is_object() || !node->contains(key))
      throw ConfigError("missing required key \"" + path + "\"");
    node = &(*node)[key];
    if (dot == std::string::npos)
      return *node;
    start = dot + 1;
  }
}

template <class T>
T get(const nlohmann::json &j, const std::string &path) {
  const auto &node = require(j, path);
  try {
    return node.get<T>();
  } catch (const nlohmann::json::exception &) {
    throw ConfigError("key \"" + path + "\" has the wrong type");
  }
}

template <class T>
T get_or(const nlohmann::json &j, const std::string &path, T fallback) {
  try {
    require(j, path);
  } catch (const ConfigError &) {
    return fallback;
  }
  return get<T>(j, path);
}

inline VoxelCoord voxel_from(const nlohmann::json &j, const std::string &path) {
  const auto v = get<std::vector<int>>(j, path);
  if (v.size() != 3)
    throw ConfigError("key \"" + path + "\" must hold three coordinates");
  return {v[0] - 1, v[1] - 1, v[2] - 1}; // configs use 1-based coordinates
}

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string join(const std::vector<std::string> &v, const char *sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i)
    out += (i ? sep : "") + v[i];
  return out;
}

inline std::uint64_t fnv1a(const std::string &s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

} // namespace detail

/// Parses a measurement list entry: an array of species names, or the string
/// "all" (every receiver species other than the signal and unbound receptor).
inline MeasurementChoice measurement_from(const nlohmann::json &j,
                                          const ReactionNetwork &net,
                                          const std::string &signal,
                                          const std::string &receptor) {
  MeasurementChoice m;
  if (j.is_string() && j.get<std::string>() == "all") {
    m.label = "all";
    for (const auto &n : net.species_names())
      if (n != signal && n != receptor)
        m.species.push_back(n);
  } else if (j.is_string()) {
    m.species = {j.get<std::string>()};
    m.label = m.species.front();
  } else if (j.is_array() && !j.empty()) {
    m.species = j.get<std::vector<std::string>>();
    m.label = detail::join(m.species, "+");
  } else {
    throw ConfigError("measurement entries must be species lists or \"all\"");
  }
  return m;
}

/// Copy of `net` with concentration-based constants converted to count-based
/// ones (bimolecular constants divided by the voxel volume).
inline ReactionNetwork to_count_based(const ReactionNetwork &net,
                                      RateScaling scaling) {
  ReactionNetwork out;
  for (const auto &n : net.species_names())
    out.add_species(n);
  for (Reaction r : net.reactions()) {
    r.rate_constant = scale_rate(r.rate_constant, scaling,
                                 r.reactant_order() == 2
                                     ? Molecularity::Bimolecular
                                     : Molecularity::Unimolecular);
    out.add_reaction(std::move(r));
  }
  return out;
}

inline ExperimentConfig config_from_json(const nlohmann::json &doc) {
  using detail::get;
  using detail::get_or;
  if (!doc.is_object())
    throw ConfigError("configuration must be a JSON object");
  const nlohmann::json &j = doc.contains("config") ? doc["config"] : doc;
  ExperimentConfig c;
  c.source = j;

  const auto dims = get<std::vector<int>>(j, "grid.dims");
  if (dims.size() != 3)
    throw ConfigError("grid.dims must hold three integers");
  c.grid.dims = {dims[0], dims[1], dims[2]};
  c.grid.voxel_edge = get<double>(j, "grid.voxel_edge");
  c.grid.diffusion_coeff = get<double>(j, "grid.diffusion_coeff");
  const auto boundary = get<std::string>(j, "grid.boundary");
  if (boundary == "reflecting")
    c.grid.boundary = Boundary::Reflecting;
  else if (boundary == "absorbing")
    c.grid.boundary = Boundary::Absorbing;
  else
    throw ConfigError("grid.boundary must be \"reflecting\" or \"absorbing\"");
  c.grid.escape_rate = get_or<double>(j, "grid.escape_rate", -1.0);

  c.tx_voxel = detail::voxel_from(j, "transmitter.voxel");
  c.symbol_rates = get<std::vector<double>>(j, "transmitter.symbol_rates");

  c.rx_voxel = detail::voxel_from(j, "receiver.voxel");
  c.receptors = get<std::int64_t>(j, "receiver.M");
  c.signal_species = get_or<std::string>(j, "receiver.signal_species", "S");
  c.receptor_species = get_or<std::string>(j, "receiver.receptor_species", "E");
  try {
    if (j.at("receiver").contains("network")) {
      c.network = parse_network(
          get<std::vector<std::string>>(j, "receiver.network.species"),
          get<std::vector<std::string>>(j, "receiver.network.reactions"));
    } else {
      const auto n = get<std::size_t>(j, "receiver.n_sites");
      c.network = make_ligand_receptor_network(
          n, get<std::vector<double>>(j, "receiver.lambdas"),
          get<std::vector<double>>(j, "receiver.mus"));
    }
    const auto units = get_or<std::string>(j, "receiver.rate_units", "count");
    if (units == "concentration")
      c.network = to_count_based(c.network, RateScaling{c.grid.voxel_volume()});
    else if (units != "count")
      throw ConfigError(
          "receiver.rate_units must be \"count\" or \"concentration\"");
  } catch (const ModelError &e) {
    throw ConfigError(std::string("receiver: ") + e.what());
  }

  for (const auto &m : detail::require(j, "measurements"))
    c.measurements.push_back(
        measurement_from(m, c.network, c.signal_species, c.receptor_species));

  c.horizon = get_or<double>(j, "horizon", 1.0);
  c.decision_time = get_or<double>(j, "decision_time", c.horizon);
  c.n_trials = get_or<std::size_t>(j, "n_trials", 200);
  c.n_moment_runs = get_or<std::size_t>(j, "n_moment_runs", 500);
  c.moment_grid_step = get_or<double>(j, "moment_grid_step", 0.01);
  c.base_seed = get_or<std::uint64_t>(j, "base_seed", 1);
  c.output_dir = get_or<std::string>(j, "output_dir", "results");
  return c;
}

/// Reads a configuration file, or a manifest written by persist_results.
inline ExperimentConfig load_config(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot open configuration file " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::parse_error &e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  }
  auto c = config_from_json(doc);
  c.validate();
  return c;
}

/// Applies a scalar override at a dotted path ("receiver.lambdas.2") and
/// re-parses the configuration.
inline ExperimentConfig with_override(const ExperimentConfig &base,
                                      const std::string &path, double value) {
  std::string pointer = "/" + path;
  for (auto &ch : pointer)
    if (ch == '.')
      ch = '/';
  nlohmann::json doc = base.source;
  const nlohmann::json::json_pointer ptr(pointer);
  if (!doc.contains(ptr))
    throw ConfigError("sweep path \"" + path + "\" does not exist");
  if (!doc[ptr].is_number())
    throw ConfigError("sweep path \"" + path + "\" is not a scalar number");
  if (doc[ptr].is_number_integer() && value == std::floor(value))
    doc[ptr] = static_cast<std::int64_t>(value);
  else
    doc[ptr] = value;
  auto c = config_from_json(doc);
  c.base_seed = base.base_seed;
  c.source["base_seed"] = c.base_seed;
  return c;
}

inline std::string config_hash(const ExperimentConfig &c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(detail::fnv1a(c.source.dump())));
  return buf;
}

struct MeasurementResult {
  MeasurementChoice choice;
  std::size_t errors = 0;
  std::size_t trials = 0;
  double ser = 0.0;
  Interval ci;
  std::vector<std::vector<std::size_t>> confusion; // [true][decided]
  std::size_t floor_hits = 0;
  std::vector<std::uint8_t> correct; // per trial, for paired comparisons

  bool operator==(const MeasurementResult &o) const {
    return choice.label == o.choice.label && errors == o.errors &&
           trials == o.trials && confusion == o.confusion &&
           floor_hits == o.floor_hits && correct == o.correct;
  }
};

struct SerResult {
  std::vector<MeasurementResult> measurements;
  std::uint64_t base_seed = 0;
  double runtime_seconds = 0.0;

  const MeasurementResult &at(const std::string &label) const {
    for (const auto &m : measurements)
      if (m.choice.label == label)
        return m;
    throw ModelError("no result for measurement '" + label + "'");
  }

  bool operator==(const SerResult &o) const {
    return measurements == o.measurements && base_seed == o.base_seed;
  }
};

struct RunOptions {
  unsigned workers = 0;
  bool allow_identical_symbols = false;
};

/// Moment tables for every symbol covering all descriptors the given specs
/// need, on the config's grid over [0, horizon].
inline std::vector<SymbolMoments>
estimate_all_moments(const ExperimentConfig &cfg, const CtmpSystem &sys,
                     const std::vector<FilterSpec> &specs, unsigned workers = 0) {
  std::set<MomentDescriptor> desc;
  for (const auto &spec : specs)
    for (const auto &d : required_moments(spec))
      desc.insert(d);
  const auto grid = uniform_grid(cfg.horizon, cfg.moment_grid_step);
  std::vector<SymbolMoments> out;
  for (std::size_t s = 0; s < sys.symbol_count(); ++s)
    out.push_back(estimate_moments(
        sys, s, desc, cfg.n_moment_runs, grid,
        cfg.base_seed + kMomentStreamOffset + (static_cast<std::uint64_t>(s) << 32),
        workers));
  return out;
}

inline SerResult run_ser(const ExperimentConfig &cfg, const RunOptions &opts = {}) {
  const auto started = std::chrono::steady_clock::now();
  cfg.validate(!opts.allow_identical_symbols);
  const CtmpSystem sys = cfg.system();
  const std::size_t K = sys.symbol_count();

  std::vector<FilterSpec> specs;
  std::vector<std::vector<SpeciesId>> measured;
  for (const auto &m : cfg.measurements) {
    std::vector<SpeciesId> ids;
    for (const auto &n : m.species)
      ids.push_back(cfg.network.at(n));
    specs.push_back(generate_filter_spec(cfg.network, ids));
    measured.push_back(std::move(ids));
  }
  const auto moments = estimate_all_moments(cfg, sys, specs, opts.workers);

  struct TrialOutcome {
    std::size_t symbol = 0;
    std::vector<std::size_t> decided;
    std::vector<std::size_t> floor_hits;
  };
  std::vector<TrialOutcome> outcomes(cfg.n_trials);
  parallel_for(
      cfg.n_trials,
      [&](std::size_t i) {
        TrialOutcome &o = outcomes[i];
        Rng pick(cfg.base_seed + kSymbolStreamOffset + i);
        o.symbol = static_cast<std::size_t>(pick.below(K));
        const Trajectory traj =
            simulate(sys, o.symbol, cfg.horizon, cfg.base_seed + i);
        for (std::size_t m = 0; m < specs.size(); ++m) {
          const auto hist = observe(traj, sys, measured[m]);
          const auto d =
              integrate_filter(specs[m], moments, hist, cfg.decision_time);
          o.decided.push_back(d.symbol);
          o.floor_hits.push_back(d.floor_hits);
        }
      },
      opts.workers);

  SerResult result;
  result.base_seed = cfg.base_seed;
  for (std::size_t m = 0; m < specs.size(); ++m) {
    MeasurementResult r;
    r.choice = cfg.measurements[m];
    r.trials = cfg.n_trials;
    r.confusion.assign(K, std::vector<std::size_t>(K, 0));
    for (const auto &o : outcomes) {
      ++r.confusion[o.symbol][o.decided[m]];
      r.errors += o.decided[m] != o.symbol;
      r.correct.push_back(o.decided[m] == o.symbol);
      r.floor_hits += o.floor_hits[m];
    }
    r.ser = static_cast<double>(r.errors) / static_cast<double>(r.trials);
    r.ci = wilson_interval(r.errors, r.trials);
    result.measurements.push_back(std::move(r));
  }
  result.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
          .count();
  return result;
}

struct SweepPoint {
  double value = 0.0;
  SerResult result;
};

struct SweepResult {
  std::string path;
  std::vector<SweepPoint> points;
};

/// One SER run per value. Point i uses base_seed + i * kSweepSeedStride, so a
/// single-value sweep reproduces run_ser exactly.
inline SweepResult run_sweep(const ExperimentConfig &cfg, const std::string &path,
                             const std::vector<double> &values,
                             const RunOptions &opts = {}) {
  if (values.empty())
    throw ConfigError("sweep needs at least one value");
  SweepResult out;
  out.path = path;
  for (std::size_t i = 0; i < values.size(); ++i) {
    ExperimentConfig point = with_override(cfg, path, values[i]);
    point.base_seed = cfg.base_seed + i * kSweepSeedStride;
    point.source["base_seed"] = point.base_seed;
    out.points.push_back({values[i], run_ser(point, opts)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV output. All files carry a header row; numbers use '.' and %.17g.

inline void write_ser_csv(std::ostream &os, const SerResult &r) {
  os << "measurement,species,trials,errors,ser,ci_lower,ci_upper\n";
  for (const auto &m : r.measurements)
    os << m.choice.label << ',' << detail::join(m.choice.species, "+") << ','
       << m.trials << ',' << m.errors << ',' << detail::format_double(m.ser)
       << ',' << detail::format_double(m.ci.lower) << ','
       << detail::format_double(m.ci.upper) << '\n';
}

inline void write_confusion_csv(std::ostream &os, const SerResult &r) {
  os << "measurement,true_symbol,decided_symbol,count\n";
  for (const auto &m : r.measurements)
    for (std::size_t s = 0; s < m.confusion.size(); ++s)
      for (std::size_t d = 0; d < m.confusion[s].size(); ++d)
        os << m.choice.label << ',' << s << ',' << d << ',' << m.confusion[s][d]
           << '\n';
}

inline void write_sweep_csv(std::ostream &os, const SweepResult &sw) {
  os << "parameter,value,measurement,trials,errors,ser,ci_lower,ci_upper\n";
  for (const auto &p : sw.points)
    for (const auto &m : p.result.measurements)
      os << sw.path << ',' << detail::format_double(p.value) << ','
         << m.choice.label << ',' << m.trials << ',' << m.errors << ','
         << detail::format_double(m.ser) << ','
         << detail::format_double(m.ci.lower) << ','
         << detail::format_double(m.ci.upper) << '\n';
}

inline void write_moments_csv(std::ostream &os, const FilterSpec &names_from,
                              const std::vector<SymbolMoments> &moments) {
  os << "symbol,moment,time,mean,std_error\n";
  for (const auto &sm : moments)
    for (const auto &[d, t] : sm.tables) {
      std::string label;
      for (const auto &[sp, k] : d.exponents)
        label += (label.empty() ? "" : "*") + names_from.name(sp) +
                 (k == 1 ? "" : "^" + std::to_string(k));
      for (std::size_t g = 0; g < t.grid.size(); ++g)
        os << sm.symbol << ',' << label << ',' << detail::format_double(t.grid[g])
           << ',' << detail::format_double(t.values[g]) << ','
           << detail::format_double(t.std_error[g]) << '\n';
    }
}

inline nlohmann::json make_manifest(const ExperimentConfig &cfg,
                                    const std::string &command,
                                    const std::vector<std::string> &outputs,
                                    double runtime_seconds) {
  nlohmann::json m;
  m["version"] = kVersion;
  m["command"] = command;
  m["config"] = cfg.source;
  m["config_hash"] = config_hash(cfg);
  m["base_seed"] = cfg.base_seed;
  m["outputs"] = outputs;
  m["runtime_seconds"] = runtime_seconds;
  return m;
}

inline void write_text_file(const std::filesystem::path &path,
                            const std::string &text) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw ConfigError("cannot write " + path.string());
  out << text;
}

/// Writes ser.csv, confusion.csv and manifest.json into dir.
inline void persist_results(const SerResult &r, const ExperimentConfig &cfg,
                            const std::filesystem::path &dir) {
  std::filesystem::create_directories(dir);
  std::ostringstream ser, conf;
  write_ser_csv(ser, r);
  write_confusion_csv(conf, r);
  write_text_file(dir / "ser.csv", ser.str());
  write_text_file(dir / "confusion.csv", conf.str());
  write_text_file(dir / "manifest.json",
                  make_manifest(cfg, "ser", {"ser.csv", "confusion.csv"},
                                r.runtime_seconds)
                          .dump(2) +
                      "\n");
}

inline void persist_sweep(const SweepResult &sw, const ExperimentConfig &cfg,
                          const std::vector<double> &values,
                          const std::filesystem::path &dir) {
  std::filesystem::create_directories(dir);
  std::ostringstream csv;
  write_sweep_csv(csv, sw);
  write_text_file(dir / "sweep.csv", csv.str());
  double runtime = 0.0;
  for (const auto &p : sw.points)
    runtime += p.result.runtime_seconds;
  auto manifest = make_manifest(cfg, "sweep", {"sweep.csv"}, runtime);
  manifest["sweep"] = {{"path", sw.path}, {"values", values}};
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

} // namespace mcfilter

#endif
