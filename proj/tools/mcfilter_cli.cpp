// Command-line front end: simulate, filtergen, moments, ser, sweep, verify.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mcfilter/mcfilter.hpp"

namespace fs = std::filesystem;
using namespace mcfilter;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> trials;
  std::string out;
  std::string measure;
  unsigned workers = 0;
};

void add_common(CLI::App *app, Common &c, bool need_config = true) {
  auto *opt = app->add_option("--config", c.config, "Experiment configuration (JSON) or manifest");
  if (need_config)
    opt->required();
  app->add_option("--seed", c.seed, "Override base seed");
  app->add_option("--trials", c.trials, "Override number of evaluation trials");
  app->add_option("--out", c.out, "Output directory");
  app->add_option("--measure", c.measure,
                  "Measurement choices: species separated by ',', choices by ';' "
                  "(\"all\" selects every complex)");
  app->add_option("--workers", c.workers, "Worker threads (0 = all cores)");
}

// "C1;C2;C1,C2" -> three choices
std::vector<MeasurementChoice> parse_measure(const std::string &text,
                                             const ExperimentConfig &cfg) {
  std::vector<MeasurementChoice> out;
  for (const auto &group : detail::split(text, ';')) {
    if (group.empty())
      continue;
    nlohmann::json j;
    if (group == "all")
      j = "all";
    else
      j = detail::split(group, ',');
    out.push_back(measurement_from(j, cfg.network, cfg.signal_species,
                                   cfg.receptor_species));
  }
  if (out.empty())
    throw ConfigError("--measure selected no species");
  return out;
}

ExperimentConfig load(const Common &c) {
  ExperimentConfig cfg = load_config(c.config);
  if (c.seed) {
    cfg.base_seed = *c.seed;
    cfg.source["base_seed"] = *c.seed;
  }
  if (c.trials) {
    cfg.n_trials = *c.trials;
    cfg.source["n_trials"] = *c.trials;
  }
  if (!c.measure.empty()) {
    cfg.measurements = parse_measure(c.measure, cfg);
    nlohmann::json m = nlohmann::json::array();
    for (const auto &choice : cfg.measurements)
      m.push_back(choice.species);
    cfg.source["measurements"] = m;
  }
  cfg.validate();
  return cfg;
}

fs::path out_dir(const Common &c, const ExperimentConfig &cfg) {
  return c.out.empty() ? fs::path(cfg.output_dir) : fs::path(c.out);
}

int cmd_simulate(const Common &c, std::size_t symbol, bool ztrace) {
  const auto cfg = load(c);
  const auto sys = cfg.system();
  const auto traj = simulate(sys, symbol, cfg.horizon, cfg.base_seed);
  const fs::path dir = out_dir(c, cfg);
  fs::create_directories(dir);
  {
    std::ofstream os(dir / "trajectory.txt");
    write_trajectory(os, traj, sys);
  }
  std::vector<FilterSpec> specs;
  for (std::size_t m = 0; m < cfg.measurements.size(); ++m) {
    const auto &choice = cfg.measurements[m];
    const auto hist = observe(traj, sys, choice.species);
    std::ofstream os(dir / ("history_" + choice.label + ".csv"));
    write_history_csv(os, hist);
    specs.push_back(generate_filter_spec(cfg.network, choice.species));
  }
  if (ztrace) {
    const auto moments = estimate_all_moments(cfg, sys, specs, c.workers);
    for (std::size_t m = 0; m < specs.size(); ++m) {
      const auto hist = observe(traj, sys, cfg.measurements[m].species);
      std::ofstream os(dir / ("ztrace_" + cfg.measurements[m].label + ".csv"));
      write_z_trace_csv(os, specs[m], moments, hist, cfg.decision_time);
    }
  }
  std::cout << traj.events.size() << " events over " << cfg.horizon
            << " s (symbol " << symbol << ") written to " << dir << "\n";
  return 0;
}

int cmd_filtergen(const std::string &network_path, const Common &c) {
  ReactionNetwork net;
  if (!network_path.empty()) {
    std::ifstream in(network_path);
    if (!in)
      throw ConfigError("cannot open network file " + network_path);
    std::stringstream ss;
    ss << in.rdbuf();
    net = parse_network_text(ss.str());
  } else if (!c.config.empty()) {
    net = load_config(c.config).network;
  } else {
    throw ConfigError("filtergen needs --network or --config");
  }
  if (c.measure.empty())
    throw ConfigError("filtergen needs --measure");
  std::vector<std::string> names = detail::split(c.measure, ',');
  const FilterSpec spec = generate_filter_spec(net, names);
  const std::string text = render_text(spec);
  std::cout << text;
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    write_text_file(fs::path(c.out) / "spec.txt", text);
    write_text_file(fs::path(c.out) / "spec.json", to_json(spec).dump(2) + "\n");
  }
  return 0;
}

int cmd_moments(const Common &c) {
  const auto cfg = load(c);
  const auto sys = cfg.system();
  std::vector<FilterSpec> specs;
  for (const auto &m : cfg.measurements)
    specs.push_back(generate_filter_spec(cfg.network, m.species));
  const auto moments = estimate_all_moments(cfg, sys, specs, c.workers);
  const fs::path dir = out_dir(c, cfg);
  fs::create_directories(dir);
  std::ostringstream csv;
  write_moments_csv(csv, specs.front(), moments);
  write_text_file(dir / "moments.csv", csv.str());
  write_text_file(dir / "manifest.json",
                  make_manifest(cfg, "moments", {"moments.csv"}, 0.0).dump(2) + "\n");
  std::cout << "moment tables written to " << dir / "moments.csv" << "\n";
  return 0;
}

void print_ser(const SerResult &r) {
  for (const auto &m : r.measurements)
    std::cout << m.choice.label << ": SER " << m.ser << " (" << m.errors << "/"
              << m.trials << ", 95% CI [" << m.ci.lower << ", " << m.ci.upper
              << "])\n";
}

int cmd_ser(const Common &c) {
  const auto cfg = load(c);
  RunOptions opts;
  opts.workers = c.workers;
  const auto r = run_ser(cfg, opts);
  const fs::path dir = out_dir(c, cfg);
  persist_results(r, cfg, dir);
  print_ser(r);
  std::cout << "results written to " << dir << " (" << r.runtime_seconds
            << " s)\n";
  return 0;
}

int cmd_sweep(const Common &c, std::string path, std::string values_text) {
  auto cfg = load(c);
  // a sweep manifest carries its own path and values
  std::ifstream in(c.config);
  const auto doc = nlohmann::json::parse(in, nullptr, true, true);
  if (doc.contains("sweep")) {
    if (path.empty())
      path = doc["sweep"]["path"].get<std::string>();
    if (values_text.empty())
      for (double v : doc["sweep"]["values"].get<std::vector<double>>())
        values_text += (values_text.empty() ? "" : ",") + detail::format_double(v);
  }
  if (path.empty() || values_text.empty())
    throw ConfigError("sweep needs --path and --values");
  std::vector<double> values;
  for (const auto &v : detail::split(values_text, ','))
    values.push_back(std::stod(v));
  RunOptions opts;
  opts.workers = c.workers;
  const auto sw = run_sweep(cfg, path, values, opts);
  const fs::path dir = out_dir(c, cfg);
  persist_sweep(sw, cfg, values, dir);
  for (const auto &p : sw.points) {
    std::cout << path << " = " << p.value << "\n";
    print_ser(p.result);
  }
  std::cout << "sweep written to " << dir / "sweep.csv" << "\n";
  return 0;
}

// Small-system oracle suite: SSA vs exact transient law and the brute-force
// check of the generated two-site filter when both complexes are measured.
int cmd_verify(const Common &c, std::size_t runs) {
  const std::uint64_t seed = c.seed.value_or(7);
  VoxelGrid grid;
  grid.boundary = Boundary::Absorbing;
  grid.escape_rate = 0.5;
  const auto net = make_ligand_receptor_network(2, {1.0, 1.0}, {1.0, 1.0});
  const auto sys = build_system(grid, TransmitterModel{0, {4.0}}, net, 0, 2);
  const auto init = sys.initial_state();

  std::ostringstream report;
  StateSpaceLimits limits;
  limits.signal_cap = 40;
  const auto cmp = empirical_vs_exact(sys, sys, 0, 1.0, init, runs, seed,
                                      limits, c.workers);
  report << "ssa-vs-exact: states " << cmp.exact.chain.size() << " tv "
         << cmp.tv << " overflow " << cmp.exact.overflow_mass << "\n";

  const auto spec = generate_filter_spec(net, std::vector<std::string>{"C1", "C2"});
  const auto sys3 = build_system(grid, TransmitterModel{0, {4.0}}, net, 0, 3);
  const auto check = brute_force_filter_check(sys3, spec, 0, 1.0,
                                              {0.08, 0.04, 0.02, 0.01}, runs,
                                              seed + (1ULL << 40), {}, true,
                                              c.workers);
  report << "filter-check (m=A):\n" << check.to_text();
  std::cout << report.str();
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    write_text_file(fs::path(c.out) / "verify.txt", report.str());
  }
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Molecular-communication receiver simulation and filter generation"};
  app.require_subcommand(1);

  Common sim_c, gen_c, mom_c, ser_c, sweep_c, ver_c;

  auto *sim = app.add_subcommand("simulate", "Simulate one trajectory and export it");
  add_common(sim, sim_c);
  std::size_t symbol = 0;
  bool ztrace = false;
  sim->add_option("--symbol", symbol, "Transmitted symbol");
  sim->add_flag("--ztrace", ztrace, "Also write filter Z traces");

  auto *gen = app.add_subcommand("filtergen", "Generate the Bayesian filter terms");
  add_common(gen, gen_c, false);
  std::string network_path;
  gen->add_option("--network", network_path, "Network text file");

  auto *mom = app.add_subcommand("moments", "Estimate symbol-conditioned moment tables");
  add_common(mom, mom_c);

  auto *ser = app.add_subcommand("ser", "Symbol error rate Monte Carlo");
  add_common(ser, ser_c);

  auto *sweep = app.add_subcommand("sweep", "SER over a parameter sweep");
  add_common(sweep, sweep_c);
  std::string sweep_path, sweep_values;
  sweep->add_option("--path", sweep_path, "Dotted config path, e.g. receiver.lambdas.2");
  sweep->add_option("--values", sweep_values, "Comma-separated values");

  auto *ver = app.add_subcommand("verify", "Run the small-system oracle checks");
  add_common(ver, ver_c, false);
  std::size_t verify_runs = 50000;
  ver->add_option("--runs", verify_runs, "Monte-Carlo runs per check");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim)
      return cmd_simulate(sim_c, symbol, ztrace);
    if (*gen)
      return cmd_filtergen(network_path, gen_c);
    if (*mom)
      return cmd_moments(mom_c);
    if (*ser)
      return cmd_ser(ser_c);
    if (*sweep)
      return cmd_sweep(sweep_c, sweep_path, sweep_values);
    if (*ver)
      return cmd_verify(ver_c, verify_runs);
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
