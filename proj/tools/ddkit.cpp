// ddkit command-line front end.
//
// Units: sigma_delta and gamma in 1/s (rad/s for sigma_delta), f_dd in Hz,
// times in seconds. The only conversion is 2 pi f_dd -> rad/s, done inside
// the library where a pulse rate meets a spectrum.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ddkit/decoherence.hpp"
#include "ddkit/montecarlo.hpp"
#include "ddkit/noise.hpp"
#include "ddkit/optimize.hpp"
#include "ddkit/sequences.hpp"
#include "ddkit/serialization.hpp"
#include "ddkit/tomography.hpp"

namespace {

using namespace ddkit;
using nlohmann::json;

constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

const std::vector<std::string> kCommands{"filter",      "coherence", "taucurve", "optimize",
                                         "compare-udd", "simulate",  "qpt",      "fit-sigma"};

struct Globals {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  double tol = 1e-7;
};

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvalidArgument(path + ": " + e.what());
  }
}

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    if (cell.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(cell, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != cell.size()) throw InvalidArgument(std::string("bad number in ") + what + ": " + cell);
    out.push_back(v);
  }
  return out;
}

/// Writes to --out or stdout.
class Sink {
 public:
  explicit Sink(const std::string& path) {
    if (!path.empty() && path != "-") {
      file_.open(path);
      if (!file_) throw InvalidArgument("cannot write " + path);
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

// ---- shared option groups --------------------------------------------------

struct BathArgs {
  std::string file;
  double sigma_delta = 23.8;
  double gamma = 37.5;
  double collision_rate = 0.0;
  CLI::Option* gamma_opt = nullptr;
  CLI::Option* collision_opt = nullptr;

  void add(CLI::App* cmd) {
    cmd->add_option("--bath", file, "Bath JSON file (overrides the flags below)");
    cmd->add_option("--sigma-delta", sigma_delta, "Detuning spread, rad/s");
    gamma_opt = cmd->add_option("--gamma", gamma, "Correlation decay rate, 1/s");
    collision_opt = cmd->add_option("--collision-rate", collision_rate,
                                    "Elastic collision rate, 1/s (gamma = rate / 2.7)");
  }

  double resolved_gamma() const {
    if (gamma_opt->count() > 0 && collision_opt->count() > 0)
      throw InvalidArgument("give either --gamma or --collision-rate, not both");
    return collision_opt->count() > 0 ? collision_rate_to_gamma(collision_rate) : gamma;
  }

  std::unique_ptr<BathModel> make() const {
    if (!file.empty()) return io::bath_from_json(read_json_file(file));
    return std::make_unique<LorentzianBath>(sigma_delta, resolved_gamma());
  }
};

struct SequenceArgs {
  std::string family = "cpmg";
  long long n = 1;
  double t = 1.0;
  double eta = 0.5;
  std::string times;
  std::string file;

  void add(CLI::App* cmd) {
    cmd->add_option("--family", family, "cpmg, udd, eta, free or custom");
    cmd->add_option("--n", n, "Number of pi pulses");
    cmd->add_option("--t", t, "Total time, s");
    cmd->add_option("--eta", eta, "Eta for the eta family");
    cmd->add_option("--times", times, "Comma-separated pulse times for custom");
    cmd->add_option("--sequence", file, "Sequence JSON file");
  }

  PulseSequence make_at(double total) const {
    if (family == "free" || (family == "cpmg" && n == 0)) return free_evolution(total);
    switch (family_from_string(family)) {
      case SequenceFamily::cpmg: return cpmg(n, total);
      case SequenceFamily::udd: return udd(n, total);
      case SequenceFamily::eta: return eta_family(n, total, eta);
      case SequenceFamily::custom: {
        auto p = parse_list(times, "--times");
        for (double& x : p) x *= total / t;
        return custom(std::move(p), total);
      }
    }
    throw InvalidArgument("unknown family " + family);
  }

  PulseSequence make() const {
    if (!file.empty()) return io::sequence_from_json(read_json_file(file));
    return make_at(t);
  }
};

QuadratureConfig quad_config(const Globals& g, double omega_max) {
  QuadratureConfig q;
  q.tol = g.tol;
  q.omega_max = omega_max;
  return q;
}

// ---- commands --------------------------------------------------------------

struct FilterCmd {
  SequenceArgs seq;
  double omega_min = 0.0;
  double omega_max = 50.0;
  std::size_t points = 1000;

  void add(CLI::App* app) {
    auto* cmd = app->add_subcommand("filter", "Filter function F(omega) on a uniform grid");
    seq.add(cmd);
    cmd->add_option("--omega-min", omega_min, "Grid start, rad/s");
    cmd->add_option("--omega-max", omega_max, "Grid end, rad/s");
    cmd->add_option("--points", points, "Grid points");
  }

  void run(const Globals& g) const {
    if (points == 0) throw InvalidArgument("empty omega grid");
    if (!(omega_max >= omega_min)) throw InvalidArgument("omega-max must be >= omega-min");
    const FilterKernel kernel(seq.make());
    std::vector<std::vector<double>> rows;
    for (std::size_t k = 0; k < points; ++k) {
      const double w = points == 1 ? omega_min
                                   : omega_min + (omega_max - omega_min) * static_cast<double>(k) /
                                                     static_cast<double>(points - 1);
      rows.push_back({w, kernel(w)});
    }
    Sink sink(g.out);
    io::write_csv(sink.stream(), {"omega", "F"}, rows);
  }
};

struct CoherenceCmd {
  BathArgs bath;
  SequenceArgs seq;
  CLI::Option* n_opt = nullptr;
  double f_dd = 35.0;
  double t_max = 4.0;
  std::size_t points = 41;
  std::string times;
  double omega_max = 0.0;
  bool as_json = false;

  void add(CLI::App* app) {
    auto* cmd = app->add_subcommand("coherence", "C(t) from the filter-function exponent");
    bath.add(cmd);
    cmd->add_option("--family", seq.family, "Sequence family when --n is given");
    n_opt = cmd->add_option("--n", seq.n, "Fixed pulse count (otherwise CPMG at fixed --fdd)");
    cmd->add_option("--eta", seq.eta, "Eta for the eta family");
    cmd->add_option("--fdd", f_dd, "CPMG rate, Hz; 0 is free evolution");
    cmd->add_option("--tmax", t_max, "Last sample time, s");
    cmd->add_option("--points", points, "Samples on [0, tmax]");
    cmd->add_option("--sample-times", times, "Comma-separated sample times (overrides the grid)");
    cmd->add_option("--omega-max", omega_max, "Fixed quadrature cut-off, rad/s (0 = automatic)");
    cmd->add_flag("--json", as_json, "Emit a coherence_curve JSON document");
  }

  void run(const Globals& g) {
    const auto b = bath.make();
    std::vector<double> grid;
    if (!times.empty()) {
      grid = parse_list(times, "--sample-times");
    } else {
      if (points < 2 || !(t_max > 0.0)) throw InvalidArgument("need tmax > 0 and points >= 2");
      for (std::size_t k = 0; k < points; ++k)
        grid.push_back(t_max * static_cast<double>(k) / static_cast<double>(points - 1));
    }
    if (grid.empty()) throw InvalidArgument("empty time grid");
    if (!(f_dd >= 0.0)) throw InvalidArgument("fdd must be >= 0");
    SequenceGenerator gen;
    if (n_opt->count() > 0) {
      seq.t = 1.0;
      gen = [this](double t) { return seq.make_at(t); };
    } else if (f_dd == 0.0) {
      gen = [](double t) { return free_evolution(t); };
    } else {
      gen = cpmg_generator(f_dd);
    }
    const auto curve = coherence_curve(gen, *b, grid, quad_config(g, omega_max));
    Sink sink(g.out);
    if (as_json) {
      sink.stream() << io::to_json(curve).dump(2) << '\n';
      return;
    }
    const auto* lb = dynamic_cast<const LorentzianBath*>(b.get());
    const double nan = std::numeric_limits<double>::quiet_NaN();
    auto& os = sink.stream();
    os << "time_s,coherence,method,f_dd_hz,sigma_delta,gamma\n";
    os.precision(17);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const double t = grid[k];
      const double rate = t > 0.0 ? effective_rate(gen(t)) : (n_opt->count() > 0 ? nan : f_dd);
      os << t << ',' << curve.values[k] << ',' << to_string(curve.method) << ',' << rate << ','
         << (lb ? lb->sigma_delta() : std::sqrt(b->variance())) << ',' << (lb ? lb->gamma() : nan)
         << '\n';
    }
  }
};

struct TauCurveCmd {
  BathArgs bath;
  std::string grid = "2,5,10,20,35";
  std::string engine = "quadrature";
  double t_max = 20.0;
  std::size_t atoms = 1000;
  std::size_t points = 16;
  std::string energy = "gamma3";
  std::size_t workers = 0;

  void add(CLI::App* app) {
    auto* cmd = app->add_subcommand("taucurve", "Coherence time versus CPMG rate");
    bath.add(cmd);
    cmd->add_option("--fdd", grid, "Comma-separated CPMG rates, Hz (0 = free decay)");
    cmd->add_option("--engine", engine, "quadrature, mc or both")
        ->check(CLI::IsMember({"quadrature", "mc", "both"}));
    cmd->add_option("--tmax", t_max, "Search limit for tau_c, s");
    cmd->add_option("--atoms", atoms, "Monte-Carlo ensemble size");
    cmd->add_option("--points", points, "Samples in the exponential-fit window");
    cmd->add_option("--energy-model", energy, "gamma3 or gaussian");
    cmd->add_option("--workers", workers, "Monte-Carlo threads (0 = all cores)");
  }

  void run(const Globals& g) const {
    const auto rates = parse_list(grid, "--fdd");
    if (rates.empty()) throw InvalidArgument("empty f_dd grid");
    if (!(t_max > 0.0)) throw InvalidArgument("tmax must be positive");
    const auto b = bath.make();
    const bool quad = engine != "mc", mc = engine != "quadrature";
    EnsembleConfig cfg;
    if (mc) {
      const auto* lb = dynamic_cast<const LorentzianBath*>(b.get());
      if (!lb) throw InvalidArgument("the Monte-Carlo engine needs a Lorentzian bath");
      cfg.n_atoms = atoms;
      cfg.sigma_delta = lb->sigma_delta();
      cfg.gamma = lb->gamma();
      cfg.seed = g.seed;
      cfg.energy_model = energy_model_from_string(energy);
      cfg.workers = workers;
      cfg.validate();
    }
    const QuadratureConfig qc = quad_config(g, 0.0);

    std::vector<std::string> header{"f_dd_hz"};
    if (quad) header.insert(header.end(), {"tau_c", "flagged"});
    if (mc) header.insert(header.end(), {"tau_c_mc", "stat_err", "flagged_mc"});
    std::vector<std::vector<double>> rows;
    for (double f : rates) {
      if (!(f >= 0.0)) throw InvalidArgument("f_dd values must be >= 0");
      std::vector<double> row{f};
      if (quad) {
        if (f == 0.0) {
          // Collisionless free-decay law, 1/e time.
          const double s = std::sqrt(b->variance());
          const double tau = s > 0.0 ? free_decay_3d_tau1(s) : t_max;
          const bool flag = s == 0.0 || tau > t_max;
          row.insert(row.end(), {flag ? t_max : tau, flag ? 1.0 : 0.0});
        } else {
          auto eval = [&](double t) { return coherence(cpmg_at_rate(f, t), *b, qc); };
          const auto fit = fitted_coherence_time(eval, t_max, points);
          row.insert(row.end(), {fit.fit.tau_c, fit.fit.lower_bound ? 1.0 : 0.0});
        }
      }
      if (mc) {
        const SequenceGenerator gen =
            f == 0.0 ? SequenceGenerator([](double t) { return free_evolution(t); }) : cpmg_generator(f);
        auto eval = [&](double t) { return simulate(cfg, gen, {t}).coherence_curve.values[0]; };
        const auto fit = fitted_coherence_time(eval, t_max, points, CurveMethod::monte_carlo);
        const CoherenceTime& tau = f == 0.0 ? fit.root : fit.fit;
        double err = 0.0;
        if (!tau.lower_bound) err = tau_standard_error(cfg, gen, fit.window, tau.tau_c);
        row.insert(row.end(), {tau.tau_c, err, tau.lower_bound ? 1.0 : 0.0});
      }
      rows.push_back(std::move(row));
    }
    Sink sink(g.out);
    io::write_csv(sink.stream(), header, rows);
  }
};

struct OptimizeCmd {
  BathArgs bath;
  long long n = 70;
  double t = 1.0;
  std::string seed_sequence = "cpmg";
  double eta = 0.5;
  double perturb = 0.0;
  std::size_t max_iter = 20000;
  std::size_t restarts = 4;
  std::string csv;

  void add(CLI::App* app) {
    auto* cmd = app->add_subcommand("optimize", "Nelder-Mead search over pulse timings");
    bath.add(cmd);
    cmd->add_option("--n", n, "Number of pi pulses");
    cmd->add_option("--t", t, "Total time, s");
    cmd->add_option("--seed-sequence", seed_sequence,
                    "Starting timings: cpmg, udd, eta or a sequence JSON file");
    cmd->add_option("--eta", eta, "Eta of the starting sequence for --seed-sequence eta");
    cmd->add_option("--perturb", perturb,
                    "Log-normal gap perturbation of the start (sd; uses --seed)");
    cmd->add_option("--max-iter", max_iter, "Total Nelder-Mead iterations");
    cmd->add_option("--restarts", restarts, "Simplex restarts around the incumbent");
    cmd->add_option("--csv", csv, "Timing CSV path (default: <out>.csv when --out is a file)");
  }

  void run(const Globals& g) const {
    const auto b = bath.make();
    PulseSequence start = [&] {
      if (seed_sequence == "cpmg") return cpmg(n, t);
      if (seed_sequence == "udd") return udd(n, t);
      if (seed_sequence == "eta") return eta_family(n, t, eta);
      return io::sequence_from_json(read_json_file(seed_sequence));
    }();
    if (perturb > 0.0) start = perturb_gaps(start, perturb, g.seed);
    OptimizeOptions opt;
    opt.tol = std::min(g.tol, 1e-9);
    opt.max_iter = max_iter;
    opt.restarts = restarts;
    opt.start = start;
    const auto r = optimize_timings(start.size(), start.total_time(), *b, opt);
    {
      Sink sink(g.out);
      sink.stream() << io::to_json(r).dump(2) << '\n';
    }
    std::string csv_path = csv;
    if (csv_path.empty() && !g.out.empty() && g.out != "-") csv_path = g.out + ".csv";
    if (csv_path.empty()) return;
    const auto p = r.best_sequence.pulse_times();
    const double eta_fit = r.eta_equivalent.value_or(0.5);
    const auto family = eta_family(static_cast<long long>(p.size()), r.best_sequence.total_time(), eta_fit);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < p.size(); ++i)
      rows.push_back({static_cast<double>(i + 1), p[i], p[i] / r.best_sequence.total_time(),
                      family.pulse_times()[i], start.pulse_times()[i]});
    Sink sink(csv_path);
    io::write_csv(sink.stream(), {"pulse", "time_s", "fraction", "eta_time_s", "start_time_s"}, rows);
  }
};

struct CompareUddCmd {
  BathArgs bath;
  std::string ns = "4,8,16,32,64,128";
  double t = 1.0;
  std::size_t workers = 0;

  void add(CLI::App* app) {
    auto* cmd = app->add_subcommand("compare-udd", "CPMG versus UDD coherence times");
    bath.add(cmd);
    cmd->add_option("--n", ns, "Comma-separated pulse counts");
    cmd->add_option("--t", t, "Total time, s");
    cmd->add_option("--workers", workers, "Threads (0 = all cores)");
  }

  void run(const Globals& g) const {
    std::vector<long long> counts;
    for (double v : parse_list(ns, "--n")) {
      if (v != std::floor(v)) throw InvalidArgument("pulse counts must be integers");
      counts.push_back(static_cast<long long>(v));
    }
    if (counts.empty()) throw InvalidArgument("empty pulse-count list");
    const auto b = bath.make();
    const auto rows = compare_cpmg_udd(counts, t, *b, quad_config(g, 0.0), workers);
    std::vector<std::vector<double>> out;
    for (const auto& r : rows)
      out.push_back({static_cast<double>(r.n), r.tau_cpmg, r.tau_udd, r.udd_deficit});
    Sink sink(g.out);
    io::write_csv(sink.stream(), {"n", "tau_cpmg", "tau_udd", "udd_deficit"}, out);
  }
};

struct SimulateCmd {
  BathArgs bath;
  std::size_t atoms = 1000;
  double f_dd = 35.0;
  double t_max = 4.0;
  std::size_t points = 41;
  std::string energy = "gamma3";
  std::size_t workers = 0;
  bool as_json = false;

  void add(CLI::App* app) {
    auto* cmd = app->add_subcommand("simulate", "Monte-Carlo ensemble under CPMG");
    bath.add(cmd);
    cmd->add_option("--atoms", atoms, "Ensemble size");
    cmd->add_option("--fdd", f_dd, "CPMG rate, Hz; 0 is free evolution");
    cmd->add_option("--tmax", t_max, "Last sample time, s");
    cmd->add_option("--points", points, "Samples on [0, tmax]");
    cmd->add_option("--energy-model", energy, "gamma3 or gaussian");
    cmd->add_option("--workers", workers, "Threads (0 = all cores); results do not depend on it");
    cmd->add_flag("--json", as_json, "Emit a simulation_result JSON document");
  }

  void run(const Globals& g) const {
    if (!bath.file.empty()) throw InvalidArgument("simulate takes --sigma-delta and --gamma, not --bath");
    if (points < 2 || !(t_max > 0.0)) throw InvalidArgument("need tmax > 0 and points >= 2");
    if (!(f_dd >= 0.0)) throw InvalidArgument("fdd must be >= 0");
    EnsembleConfig cfg;
    cfg.n_atoms = atoms;
    cfg.sigma_delta = bath.sigma_delta;
    cfg.gamma = bath.resolved_gamma();
    cfg.seed = g.seed;
    cfg.energy_model = energy_model_from_string(energy);
    cfg.workers = workers;
    std::vector<double> grid;
    for (std::size_t k = 0; k < points; ++k)
      grid.push_back(t_max * static_cast<double>(k) / static_cast<double>(points - 1));
    const SequenceGenerator gen =
        f_dd == 0.0 ? SequenceGenerator([](double t) { return free_evolution(t); }) : cpmg_generator(f_dd);
    auto r = simulate(cfg, gen, grid);
    r.coherence_curve.params["f_dd_hz"] = f_dd;
    Sink sink(g.out);
    if (as_json) {
      sink.stream() << io::to_json(r).dump(2) << '\n';
      return;
    }
    std::vector<std::vector<double>> rows;
    for (std::size_t k = 0; k < grid.size(); ++k)
      rows.push_back({grid[k], r.coherence_curve.values[k], r.statistical_error[k], r.phase_variance[k]});
    io::write_csv(sink.stream(), {"time_s", "coherence", "stat_err", "phase_var"}, rows);
  }
};

struct QptCmd {
  std::string channel_file;
  bool no_rotation = false;
  std::string times = "1,2,3";
  std::uint64_t shots = 0;
  std::size_t fringe_points = 24;

  void add(CLI::App* app) {
    auto* cmd = app->add_subcommand("qpt", "Process tomography report for a memory channel");
    cmd->add_option("--channel", channel_file, "Channel JSON (default: tau 2.4 s, T1 6 s, 9 deg/s)");
    cmd->add_flag("--no-rotation", no_rotation, "Drop the rotation of the default channel");
    cmd->add_option("--t", times, "Comma-separated storage times, s");
    cmd->add_option("--shots", shots, "Shots per measurement setting (0 = noiseless)");
    cmd->add_option("--fringe-points", fringe_points, "Detection phases per fringe scan");
  }

  void run(const Globals& g) const {
    ChannelParams params = channel_file.empty() ? memory_channel(!no_rotation)
                                                : io::channel_from_json(read_json_file(channel_file));
    if (no_rotation) params.rotation_rate = 0.0;
    params.validate();
    const auto ts = parse_list(times, "--t");
    if (ts.empty()) throw InvalidArgument("empty time list");
    if (fringe_points < 3) throw InvalidArgument("fringe scans need at least 3 phases");
    std::vector<double> phases;
    for (std::size_t k = 0; k < fringe_points; ++k)
      phases.push_back(2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(fringe_points));
    const auto psi = probe_states();

    json entries = json::array();
    std::vector<double> fidelities;
    for (std::size_t k = 0; k < ts.size(); ++k) {
      if (!(ts[k] >= 0.0)) throw InvalidArgument("storage times must be >= 0", k);
      const Channel ch = make_channel(params, ts[k]);
      const ChiReconstruction rec =
          shots == 0 ? channel_to_chi_diagnostic(ch)
                     : process_tomography(ch, shots, stream_seed(g.seed, k));
      const ChiMatrix& chi = rec.chi;
      const auto fid = worst_case_fidelity(chi);
      fidelities.push_back(fid.fidelity);
      const Channel reconstructed = [chi](const DensityMatrix& rho) { return chi_apply(chi, rho); };
      entries.push_back({{"t", ts[k]},
                         {"chi", io::to_json(chi)},
                         {"tp_residual", chi.tp_residual()},
                         {"min_choi_eigenvalue", chi.min_choi_eigenvalue()},
                         {"clipped_mass", rec.clipped_mass},
                         {"worst_case", io::to_json(fid)},
                         {"fringe_x", io::to_json(fringe_scan(psi[2], reconstructed, phases))},
                         {"fringe_y", io::to_json(fringe_scan(psi[3], reconstructed, phases))}});
    }
    json report{{"schema", io::kSchema},
                {"kind", "qpt_report"},
                {"channel", io::to_json(params)},
                {"shots", shots},
                {"seed", g.seed},
                {"fidelities", fidelities},
                {"entries", entries}};
    Sink sink(g.out);
    sink.stream() << report.dump(2) << '\n';
  }
};

struct FitSigmaCmd {
  std::string curve_file;

  void add(CLI::App* app) {
    auto* cmd = app->add_subcommand("fit-sigma", "Fit sigma_delta to a collisionless free decay");
    cmd->add_option("--curve", curve_file, "coherence_curve or simulation_result JSON, or CSV with time_s,coherence")
        ->required();
  }

  CoherenceCurve load() const {
    const bool is_csv = curve_file.size() >= 4 && curve_file.substr(curve_file.size() - 4) == ".csv";
    if (!is_csv) {
      const json j = read_json_file(curve_file);
      if (j.is_object() && j.value("kind", "") == "simulation_result")
        return io::simulation_from_json(j).coherence_curve;
      return io::curve_from_json(j);
    }
    std::ifstream in(curve_file);
    if (!in) throw InvalidArgument("cannot open " + curve_file);
    std::vector<std::string> header;
    const auto rows = io::read_csv(in, &header);
    const auto col = [&](const char* name) {
      const auto it = std::find(header.begin(), header.end(), name);
      if (it == header.end()) throw InvalidArgument(std::string("CSV lacks column ") + name);
      return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t ct = col("time_s"), cc = col("coherence");
    CoherenceCurve c;
    for (const auto& r : rows) {
      c.times.push_back(r.at(ct));
      c.values.push_back(r.at(cc));
    }
    return c;
  }

  void run(const Globals& g) const {
    const auto fit = fit_sigma_delta(load());
    json out{{"schema", io::kSchema},
             {"kind", "sigma_fit"},
             {"sigma_delta", fit.sigma_delta},
             {"residual", fit.residual},
             {"tau_1", free_decay_3d_tau1(fit.sigma_delta)}};
    Sink sink(g.out);
    sink.stream() << out.dump(2) << '\n';
  }
};

// ---- config ----------------------------------------------------------------

std::string config_path(const std::vector<std::string>& args) {
  std::string path;
  for (std::size_t k = 0; k < args.size(); ++k) {
    if (args[k] == "--config" && k + 1 < args.size()) path = args[k + 1];
    else if (args[k].rfind("--config=", 0) == 0) path = args[k].substr(9);
  }
  return path;
}

// Config keys become flags placed right after the subcommand, so explicit
// flags later on the command line take precedence.
std::vector<std::string> config_tokens(const json& cfg, std::string& command) {
  if (!cfg.is_object()) throw InvalidArgument("config must be a JSON object");
  if (!cfg.contains("schema") || cfg.at("schema") != io::kSchema)
    throw InvalidArgument(std::string("config needs \"schema\": \"") + io::kSchema + "\"");
  std::vector<std::string> tokens;
  for (const auto& [key, value] : cfg.items()) {
    if (key == "schema") continue;
    if (key == "command") {
      command = value.get<std::string>();
      continue;
    }
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    if (value.is_boolean()) {
      if (value.get<bool>()) tokens.push_back(flag);
    } else if (value.is_array()) {
      std::string joined;
      for (const auto& v : value) {
        if (!joined.empty()) joined += ',';
        joined += v.is_string() ? v.get<std::string>() : v.dump();
      }
      tokens.insert(tokens.end(), {flag, joined});
    } else if (value.is_string()) {
      tokens.insert(tokens.end(), {flag, value.get<std::string>()});
    } else if (value.is_number()) {
      tokens.insert(tokens.end(), {flag, value.dump()});
    } else if (!value.is_null()) {
      throw InvalidArgument("config key \"" + key + "\" must be a scalar or a list");
    }
  }
  return tokens;
}

std::vector<std::string> expand_config(std::vector<std::string> args) {
  const std::string path = config_path(args);
  if (path.empty()) return args;
  std::string command;
  const auto tokens = config_tokens(read_json_file(path), command);
  auto it = std::find_if(args.begin(), args.end(), [](const std::string& a) {
    return std::find(kCommands.begin(), kCommands.end(), a) != kCommands.end();
  });
  if (it == args.end()) {
    if (command.empty()) throw InvalidArgument("no subcommand given");
    args.push_back(command);
    it = args.end() - 1;
  } else if (!command.empty() && command != *it) {
    throw InvalidArgument("config is for \"" + command + "\", not \"" + *it + "\"");
  }
  args.insert(it + 1, tokens.begin(), tokens.end());
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamical-decoupling and memory-fidelity toolkit"};
  app.name("ddkit");
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  Globals g;
  app.add_option("--config", g.config, "JSON file of flag values (keys are flag names)");
  app.add_option("--seed", g.seed, "Master seed for every random stream");
  app.add_option("--out", g.out, "Output path (default stdout)");
  app.add_option("--tol", g.tol, "Absolute tolerance on the coherence exponent")
      ->check(CLI::PositiveNumber);

  FilterCmd filter;
  CoherenceCmd coh;
  TauCurveCmd tau;
  OptimizeCmd opt;
  CompareUddCmd cmp;
  SimulateCmd sim;
  QptCmd qpt;
  FitSigmaCmd fit;
  filter.add(&app);
  coh.add(&app);
  tau.add(&app);
  opt.add(&app);
  cmp.add(&app);
  sim.add(&app);
  qpt.add(&app);
  fit.add(&app);

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = expand_config(std::move(args));
    std::reverse(args.begin(), args.end());
    try {
      app.parse(args);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e);
      return code == 0 ? 0 : kExitUsage;
    }
    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "filter") filter.run(g);
    else if (name == "coherence") coh.run(g);
    else if (name == "taucurve") tau.run(g);
    else if (name == "optimize") opt.run(g);
    else if (name == "compare-udd") cmp.run(g);
    else if (name == "simulate") sim.run(g);
    else if (name == "qpt") qpt.run(g);
    else if (name == "fit-sigma") fit.run(g);
  } catch (const InvalidArgument& e) {
    std::cerr << "ddkit: " << e.what() << '\n';
    return kExitUsage;
  } catch (const json::exception& e) {
    std::cerr << "ddkit: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericFailure& e) {
    std::cerr << "ddkit: numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const FitFailure& e) {
    std::cerr << "ddkit: fit failed: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const NotFound& e) {
    std::cerr << "ddkit: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "ddkit: " << e.what() << '\n';
    return kExitNumeric;
  }
  return 0;
}
