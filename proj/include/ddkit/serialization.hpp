#pragma once

#include "json.hpp"

#include <cmath>
#include <initializer_list>
#include <limits>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ddkit/decoherence.hpp"
#include "ddkit/errors.hpp"
#include "ddkit/montecarlo.hpp"
#include "ddkit/noise.hpp"
#include "ddkit/optimize.hpp"
#include "ddkit/sequences.hpp"
#include "ddkit/tomography.hpp"

namespace ddkit::io {

using nlohmann::json;

inline constexpr const char* kSchema = "ddkit/v1";

/// Throws InvalidArgument unless j is an object whose schema field is
/// ddkit/v1, whose kind (when `kind` is non-empty) matches, and whose keys
/// all appear in `allowed` (schema and kind are always allowed).
inline void check_object(const json& j, const std::string& kind,
                         std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw InvalidArgument("expected a JSON object");
  if (!j.contains("schema") || j.at("schema") != kSchema)
    throw InvalidArgument(std::string("missing or unsupported schema; expected ") + kSchema);
  if (!kind.empty() && (!j.contains("kind") || j.at("kind") != kind))
    throw InvalidArgument("expected kind \"" + kind + "\"");
  std::set<std::string> ok{"schema", "kind"};
  for (const char* a : allowed) ok.insert(a);
  for (const auto& [key, value] : j.items())
    if (!ok.count(key)) throw InvalidArgument("unknown key \"" + key + "\"");
}

template <class T>
T required(const json& j, const char* key) {
  if (!j.contains(key)) throw InvalidArgument(std::string("missing key \"") + key + "\"");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("bad value for \"") + key + "\": " + e.what());
  }
}

/// JSON has no infinity; null stands for it.
inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline double from_finite_or_null(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::numeric_limits<double>::infinity();
  return required<double>(j, key);
}

// ---- sequences -----------------------------------------------------------

inline json to_json(const PulseSequence& s) {
  return {{"schema", kSchema},
          {"kind", "sequence"},
          {"family", to_string(s.family())},
          {"total_time", s.total_time()},
          {"pulse_times", std::vector<double>(s.pulse_times().begin(), s.pulse_times().end())},
          {"phases", std::vector<double>(s.phases().begin(), s.phases().end())},
          {"params", s.family_params()}};
}

inline PulseSequence sequence_from_json(const json& j) {
  check_object(j, "sequence", {"family", "total_time", "pulse_times", "phases", "params"});
  const auto times = required<std::vector<double>>(j, "pulse_times");
  const auto phases = j.contains("phases") ? required<std::vector<double>>(j, "phases")
                                           : alternating_phases(times.size());
  const auto family = j.contains("family") ? family_from_string(required<std::string>(j, "family"))
                                           : SequenceFamily::custom;
  const auto params = j.contains("params") ? required<PulseSequence::Params>(j, "params")
                                           : PulseSequence::Params{};
  return PulseSequence(required<double>(j, "total_time"), times, phases, family, params);
}

// ---- baths ---------------------------------------------------------------

inline json to_json(const LorentzianBath& b) {
  return {{"schema", kSchema},
          {"kind", "bath"},
          {"model", "lorentzian"},
          {"sigma_delta", b.sigma_delta()},
          {"gamma", b.gamma()}};
}

inline json to_json(const TabulatedBath& b) {
  return {{"schema", kSchema},
          {"kind", "bath"},
          {"model", "tabulated"},
          {"omega", b.omega()},
          {"s_omega", b.values()}};
}

/// Lorentzian baths may give gamma directly or as a physical collision
/// rate ("collision_rate", converted with the 2.7 ratio).
inline std::unique_ptr<BathModel> bath_from_json(const json& j) {
  check_object(j, "bath", {"model", "sigma_delta", "gamma", "collision_rate", "omega", "s_omega"});
  const auto model = required<std::string>(j, "model");
  if (model == "lorentzian") {
    for (const char* k : {"omega", "s_omega"})
      if (j.contains(k)) throw InvalidArgument(std::string("unknown key \"") + k + "\"");
    if (j.contains("gamma") == j.contains("collision_rate"))
      throw InvalidArgument("give exactly one of gamma and collision_rate");
    const double gamma = j.contains("gamma")
                             ? required<double>(j, "gamma")
                             : collision_rate_to_gamma(required<double>(j, "collision_rate"));
    return std::make_unique<LorentzianBath>(required<double>(j, "sigma_delta"), gamma);
  }
  if (model == "tabulated") {
    for (const char* k : {"sigma_delta", "gamma", "collision_rate"})
      if (j.contains(k)) throw InvalidArgument(std::string("unknown key \"") + k + "\"");
    return std::make_unique<TabulatedBath>(required<std::vector<double>>(j, "omega"),
                                           required<std::vector<double>>(j, "s_omega"));
  }
  throw InvalidArgument("unknown bath model \"" + model + "\"");
}

inline json bath_to_json(const BathModel& b) {
  if (const auto* l = dynamic_cast<const LorentzianBath*>(&b)) return to_json(*l);
  if (const auto* t = dynamic_cast<const TabulatedBath*>(&b)) return to_json(*t);
  throw InvalidArgument("bath type has no JSON form");
}

// ---- tomography ----------------------------------------------------------

inline json to_json(const ChannelParams& p) {
  return {{"schema", kSchema},
          {"kind", "channel"},
          {"dephasing_tau", finite_or_null(p.dephasing_tau)},
          {"depolarizing_t1", finite_or_null(p.depolarizing_t1)},
          {"rotation_rate", p.rotation_rate}};
}

inline ChannelParams channel_from_json(const json& j) {
  check_object(j, "channel", {"dephasing_tau", "depolarizing_t1", "rotation_rate"});
  ChannelParams p;
  p.dephasing_tau = from_finite_or_null(j, "dephasing_tau");
  p.depolarizing_t1 = from_finite_or_null(j, "depolarizing_t1");
  p.rotation_rate = j.contains("rotation_rate") ? required<double>(j, "rotation_rate") : 0.0;
  p.validate();
  return p;
}

/// chi as 16 row-major [re, im] pairs in the basis I, X, -iY, Z.
inline json to_json(const ChiMatrix& chi) {
  json entries = json::array();
  for (int k = 0; k < 4; ++k)
    for (int l = 0; l < 4; ++l) entries.push_back({chi(k, l).real(), chi(k, l).imag()});
  return {{"schema", kSchema}, {"kind", "chi"}, {"basis", "I,X,-iY,Z"}, {"entries", entries}};
}

inline ChiMatrix chi_from_json(const json& j) {
  check_object(j, "chi", {"basis", "entries"});
  if (required<std::string>(j, "basis") != "I,X,-iY,Z")
    throw InvalidArgument("chi basis must be \"I,X,-iY,Z\"");
  const auto e = required<std::vector<std::vector<double>>>(j, "entries");
  if (e.size() != 16) throw InvalidArgument("chi needs 16 entries");
  Matrix4c m;
  for (int k = 0; k < 16; ++k) {
    if (e[k].size() != 2) throw InvalidArgument("chi entries are [re, im] pairs", k);
    m(k / 4, k % 4) = cplx(e[k][0], e[k][1]);
  }
  return ChiMatrix(m);
}

// ---- results -------------------------------------------------------------

inline json to_json(const CoherenceCurve& c) {
  return {{"schema", kSchema},
          {"kind", "coherence_curve"},
          {"method", to_string(c.method)},
          {"times", c.times},
          {"values", c.values},
          {"params", c.params}};
}

inline CoherenceCurve curve_from_json(const json& j) {
  check_object(j, "coherence_curve", {"method", "times", "values", "params"});
  CoherenceCurve c;
  const auto method = required<std::string>(j, "method");
  if (method == "analytic") c.method = CurveMethod::analytic;
  else if (method == "quadrature") c.method = CurveMethod::quadrature;
  else if (method == "monte_carlo") c.method = CurveMethod::monte_carlo;
  else throw InvalidArgument("unknown curve method \"" + method + "\"");
  c.times = required<std::vector<double>>(j, "times");
  c.values = required<std::vector<double>>(j, "values");
  if (c.times.size() != c.values.size()) throw InvalidArgument("times and values differ in length");
  if (j.contains("params")) c.params = required<std::map<std::string, double>>(j, "params");
  return c;
}

inline json to_json(const OptimizationResult& r) {
  return {{"schema", kSchema},
          {"kind", "optimization_result"},
          {"best_sequence", to_json(r.best_sequence)},
          {"best_coherence", r.best_coherence},
          {"start_coherence", r.start_coherence},
          {"iterations", r.iterations},
          {"evaluations", r.evaluations},
          {"converged", r.converged},
          {"eta_equivalent", r.eta_equivalent ? json(*r.eta_equivalent) : json(nullptr)},
          {"eta_residual", r.eta_residual}};
}

inline OptimizationResult optimization_from_json(const json& j) {
  check_object(j, "optimization_result",
               {"best_sequence", "best_coherence", "start_coherence", "iterations", "evaluations",
                "converged", "eta_equivalent", "eta_residual"});
  OptimizationResult r{sequence_from_json(required<json>(j, "best_sequence"))};
  r.best_coherence = required<double>(j, "best_coherence");
  r.start_coherence = required<double>(j, "start_coherence");
  r.iterations = required<std::size_t>(j, "iterations");
  r.evaluations = required<std::size_t>(j, "evaluations");
  r.converged = required<bool>(j, "converged");
  if (j.contains("eta_equivalent") && !j.at("eta_equivalent").is_null())
    r.eta_equivalent = required<double>(j, "eta_equivalent");
  r.eta_residual = required<double>(j, "eta_residual");
  return r;
}

inline json to_json(const SimulationResult& r) {
  return {{"schema", kSchema},
          {"kind", "simulation_result"},
          {"coherence_curve", to_json(r.coherence_curve)},
          {"phase_variance", r.phase_variance},
          {"statistical_error", r.statistical_error}};
}

inline SimulationResult simulation_from_json(const json& j) {
  check_object(j, "simulation_result", {"coherence_curve", "phase_variance", "statistical_error"});
  SimulationResult r;
  r.coherence_curve = curve_from_json(required<json>(j, "coherence_curve"));
  r.phase_variance = required<std::vector<double>>(j, "phase_variance");
  r.statistical_error = required<std::vector<double>>(j, "statistical_error");
  return r;
}

inline json to_json(const FringeScan& f) {
  return {{"schema", kSchema},     {"kind", "fringe_scan"},   {"phases", f.phases},
          {"populations", f.populations}, {"contrast", f.contrast}, {"offset", f.offset}};
}

inline json to_json(const FidelityResult& f) {
  return {{"fidelity", f.fidelity}, {"theta", f.theta}, {"phi", f.phi}};
}

// ---- CSV -----------------------------------------------------------------

/// Writes a header line and rows of numbers at full precision.
inline void write_csv(std::ostream& os, const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
  for (std::size_t k = 0; k < header.size(); ++k) os << (k ? "," : "") << header[k];
  os << '\n';
  const auto old = os.precision(17);
  for (const auto& row : rows) {
    if (row.size() != header.size()) throw InvalidArgument("CSV row width differs from header");
    for (std::size_t k = 0; k < row.size(); ++k) {
      os << (k ? "," : "");
      if (std::isnan(row[k])) os << "nan";
      else if (std::isinf(row[k])) os << (row[k] > 0 ? "inf" : "-inf");
      else os << row[k];
    }
    os << '\n';
  }
  os.precision(old);
}

/// Parses a CSV written by write_csv.
inline std::vector<std::vector<double>> read_csv(std::istream& is, std::vector<std::string>* header) {
  std::string line;
  std::vector<std::vector<double>> rows;
  if (!std::getline(is, line)) throw InvalidArgument("empty CSV");
  std::vector<std::string> cols;
  {
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cols.push_back(cell);
  }
  if (header) *header = cols;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) {
      if (cell == "inf") row.push_back(std::numeric_limits<double>::infinity());
      else if (cell == "-inf") row.push_back(-std::numeric_limits<double>::infinity());
      else if (cell == "nan") row.push_back(std::numeric_limits<double>::quiet_NaN());
      else {
        try {
          row.push_back(std::stod(cell));
        } catch (const std::exception&) {
          throw InvalidArgument("bad CSV number \"" + cell + "\"", rows.size());
        }
      }
    }
    if (row.size() != cols.size()) throw InvalidArgument("ragged CSV row", rows.size());
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace ddkit::io
