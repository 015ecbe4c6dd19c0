#pragma once

// JSON model files.
//
// {
//   "name": "...",
//   "variables": [{"name": "x1", "role": "state", "unit": "mg/dl", "lower": 0, "upper": 600}, ...],
//   "dynamics": {"x1": {"drift": "-0.005*x1 - x1*x2 + 0.45", "input": {"u": "0"}}, ...},
//   "initial": ["..."], "path": ["..."], "terminal": ["..."], "control_set": ["..."],
//   "horizon": 80, "time_unit_seconds": 60,
//   "factual": [250, 0, 0],
//   "parameter_values": {"p2": 0.05},
//   "parameter_box": [{"name": "p2", "lower": 0.049, "upper": 0.051}],
//   "sample_box": [[126, 260], [0, 0], [0, 30]],
//   "numerical_ranges": {"x2": 0.05},
//   "assume_disjoint": false
// }
//
// States and controls are the variables with those roles, in declaration
// order. Set entries are inequalities w >= 0 in polynomial text. Omitted
// "path" and "control_set" default to the scale boxes. The running cost is
// always the control energy and the terminal cost zero.

#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "occf/errors.hpp"
#include "occf/ocp.hpp"
#include "occf/polynomial.hpp"

namespace occf {

inline nlohmann::json model_to_json(const OcpSpec& spec) {
  using nlohmann::json;
  if (spec.extended_parameters != 0)
    throw StructuralError("parameter-extended specs are internal and cannot be saved");
  const auto& space = *spec.space;
  json j;
  j["name"] = spec.name;
  j["variables"] = json::array();
  for (const auto& v : space.variables())
    j["variables"].push_back(
        {{"name", v.name}, {"role", to_string(v.role)}, {"unit", v.unit}, {"lower", v.lower}, {"upper", v.upper}});
  j["dynamics"] = json::object();
  for (std::size_t i = 0; i < spec.states.size(); ++i) {
    json input = json::object();
    for (std::size_t k = 0; k < spec.controls.size(); ++k)
      input[space[spec.controls[k]].name] = to_string(spec.input[i][k]);
    j["dynamics"][space[spec.states[i]].name] = {{"drift", to_string(spec.drift[i])}, {"input", input}};
  }
  auto set_json = [](const SemialgebraicSet& s) {
    json arr = json::array();
    for (const auto& w : s.inequalities) arr.push_back(to_string(w));
    return arr;
  };
  j["initial"] = set_json(spec.initial);
  j["path"] = set_json(spec.path);
  j["terminal"] = set_json(spec.terminal);
  j["control_set"] = set_json(spec.control_set);
  j["horizon"] = spec.horizon;
  j["time_unit_seconds"] = spec.time_unit_seconds;
  j["factual"] = spec.factual;
  j["parameter_values"] = spec.parameter_values;
  j["parameter_box"] = json::array();
  for (const auto& pb : spec.parameter_box)
    j["parameter_box"].push_back({{"name", pb.name}, {"lower", pb.lower}, {"upper", pb.upper}});
  j["sample_box"] = json::array();
  for (const auto& [lo, hi] : spec.sample_box) j["sample_box"].push_back({lo, hi});
  j["numerical_ranges"] = spec.numerical_ranges;
  j["assume_disjoint"] = spec.assume_disjoint;
  return j;
}

inline OcpSpec model_from_json(const nlohmann::json& j) {
  using nlohmann::json;
  try {
    OcpSpec spec;
    spec.name = j.value("name", std::string("model"));
    std::vector<Variable> vars;
    for (const auto& v : j.at("variables"))
      vars.push_back({v.at("name").get<std::string>(), parse_role(v.at("role").get<std::string>()),
                      v.value("unit", std::string()), v.at("lower").get<double>(),
                      v.at("upper").get<double>()});
    spec.space = make_space(std::move(vars));
    const auto& space = spec.space;
    spec.states = space->indices_with_role(VarRole::state);
    spec.controls = space->indices_with_role(VarRole::control);
    auto poly = [&](const json& text) { return parse_polynomial(text.get<std::string>(), space); };

    const auto& dyn = j.at("dynamics");
    for (std::size_t s : spec.states) {
      const std::string& name = (*space)[s].name;
      if (!dyn.contains(name)) throw ConfigurationError("missing dynamics for state '" + name + "'");
      const auto& entry = dyn.at(name);
      spec.drift.push_back(entry.contains("drift") ? poly(entry.at("drift")) : Polynomial(space));
      std::vector<Polynomial> row;
      for (std::size_t c : spec.controls) {
        const std::string& cname = (*space)[c].name;
        if (entry.contains("input") && entry.at("input").contains(cname))
          row.push_back(poly(entry.at("input").at(cname)));
        else
          row.push_back(Polynomial(space));
      }
      spec.input.push_back(std::move(row));
    }
    for (const auto& [name, _] : dyn.items())
      if (!space->find(name) || (*space)[space->index_of(name)].role != VarRole::state)
        throw ConfigurationError("dynamics given for non-state '" + name + "'");

    auto set_from = [&](const char* key, SemialgebraicSet fallback) {
      if (!j.contains(key)) return fallback;
      SemialgebraicSet s{space, {}};
      for (const auto& w : j.at(key)) s.inequalities.push_back(poly(w));
      return s;
    };
    spec.initial = set_from("initial", SemialgebraicSet{space, {}});
    spec.path = set_from("path", box_set(space, spec.states));
    if (!j.contains("terminal")) throw ConfigurationError("model needs a terminal set");
    spec.terminal = set_from("terminal", {});
    spec.control_set = set_from("control_set", box_set(space, spec.controls));
    spec.horizon = j.at("horizon").get<double>();
    spec.time_unit_seconds = j.value("time_unit_seconds", 1.0);
    spec.running_cost = energy_cost(space, spec.controls);
    spec.terminal_cost = Polynomial(space);
    spec.factual = j.at("factual").get<std::vector<double>>();
    if (j.contains("parameter_values"))
      spec.parameter_values = j.at("parameter_values").get<std::map<std::string, double>>();
    if (j.contains("parameter_box"))
      for (const auto& pb : j.at("parameter_box"))
        spec.parameter_box.push_back(
            {pb.at("name").get<std::string>(), pb.at("lower").get<double>(), pb.at("upper").get<double>()});
    if (j.contains("sample_box"))
      for (const auto& pair : j.at("sample_box")) {
        if (!pair.is_array() || pair.size() != 2)
          throw ConfigurationError("sample_box entries must be [lower, upper]");
        spec.sample_box.emplace_back(pair[0].get<double>(), pair[1].get<double>());
      }
    if (j.contains("numerical_ranges"))
      spec.numerical_ranges = j.at("numerical_ranges").get<std::map<std::string, double>>();
    spec.assume_disjoint = j.value("assume_disjoint", false);
    return spec;
  } catch (const json::exception& e) {
    throw ConfigurationError(std::string("model file: ") + e.what());
  }
}

/// Line of a byte offset, 1-based.
inline std::size_t line_of_offset(const std::string& text, std::size_t offset) {
  std::size_t line = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

inline OcpSpec parse_model(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what(),
                     line_of_offset(text, e.byte > 0 ? e.byte - 1 : 0));
  }
  return model_from_json(j);
}

inline OcpSpec load_model_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigurationError("cannot open model file '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_model(buffer.str());
}

inline void save_model_file(const OcpSpec& spec, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigurationError("cannot open '" + path + "' for writing");
  out << model_to_json(spec).dump(2) << '\n';
}

}  // namespace occf
