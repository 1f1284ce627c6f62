#include "dhaug/constraint.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <tuple>

#include "dhaug/errors.hpp"
#include "json.hpp"

namespace dhaug {

namespace {

bool name_has(const SkeletonTopology& topology, int id, std::string_view part) {
  const ParamInfo& p = topology.params()[id];
  return p.kind == ParamKind::angle && p.field == DhField::theta &&
         p.name.find(part) != std::string::npos;
}

}  // namespace

bool is_knee_angle(const SkeletonTopology& topology, int id) {
  return name_has(topology, id, "knee");
}

bool is_elbow_angle(const SkeletonTopology& topology, int id) {
  return name_has(topology, id, "elbow");
}

ConstraintTable ConstraintTable::from_deltas(const SkeletonTopology& topology,
                                             std::vector<Bounds> deltas) {
  if (static_cast<int>(deltas.size()) != topology.param_count()) {
    throw InvalidArgument("constraint table needs " + std::to_string(topology.param_count()) +
                          " bounds, got " + std::to_string(deltas.size()));
  }
  for (int id = 0; id < topology.param_count(); ++id) {
    const Bounds& b = deltas[id];
    const std::string& name = topology.params()[id].name;
    if (!std::isfinite(b.min) || !std::isfinite(b.max) || !(b.min < b.max)) {
      throw InvalidArgument("constraint for " + name + " needs finite min < max");
    }
    if (is_knee_angle(topology, id)) {
      const double rest = topology.params()[id].rest;
      constexpr double tol = 1e-12;
      if (rest + b.min < -std::numbers::pi - tol || rest + b.max > tol) {
        throw InvalidArgument("knee constraint for " + name + " leaves [-180, 0] degrees");
      }
    }
  }
  ConstraintTable t;
  t.bounds_ = std::move(deltas);
  return t;
}

ConstraintTable ConstraintTable::from_effective(const SkeletonTopology& topology,
                                                const std::vector<Bounds>& effective) {
  if (static_cast<int>(effective.size()) != topology.param_count()) {
    throw InvalidArgument("constraint table needs " + std::to_string(topology.param_count()) +
                          " bounds, got " + std::to_string(effective.size()));
  }
  std::vector<Bounds> deltas(effective.size());
  for (std::size_t id = 0; id < effective.size(); ++id) {
    const double rest = topology.params()[id].rest;
    deltas[id] = {effective[id].min - rest, effective[id].max - rest};
  }
  return from_deltas(topology, std::move(deltas));
}

Bounds ConstraintTable::effective(const SkeletonTopology& topology, int id) const {
  const double rest = topology.params().at(id).rest;
  return {rest + bounds_.at(id).min, rest + bounds_.at(id).max};
}

double squash_value(double raw, const Bounds& bounds) {
  if (!std::isfinite(raw)) throw InvalidArgument("squash: non-finite raw value");
  // same value as min + (1 + tanh) (max - min) / 2, but exact at raw = 0
  const double v = bounds.mid() + std::tanh(raw) * (bounds.max - bounds.min) / 2.0;
  return std::clamp(v, bounds.min, bounds.max);
}

double squash_derivative(double raw, const Bounds& bounds) {
  const double t = std::tanh(raw);
  return (1.0 - t * t) * (bounds.max - bounds.min) / 2.0;
}

ParamVector squash_params(std::span<const double> raw, const ConstraintTable& table) {
  if (raw.size() != table.size()) {
    throw InvalidArgument("squash_params: expected " + std::to_string(table.size()) +
                          " raw values, got " + std::to_string(raw.size()));
  }
  ParamVector out;
  out.values.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = squash_value(raw[i], table[i]);
  return out;
}

ValidationReport validate_params(const ParamVector& params, const ConstraintTable& table) {
  ValidationReport report;
  if (params.size() != table.size()) {
    throw InvalidArgument("validate_params: expected " + std::to_string(table.size()) +
                          " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    // NaN fails `contains` as well
    if (!table[i].contains(params[i])) {
      report.violations.push_back({static_cast<int>(i), params[i], table[i]});
    }
  }
  report.ok = report.violations.empty();
  return report;
}

namespace {

struct TableEntry {
  const char* param;
  double min;
  double max;
};

constexpr TableEntry kDefaultBounds[] = {
#include "default_constraints.inc"
};

std::vector<Bounds> effective_from_entries(const SkeletonTopology& topology,
                                           const std::vector<std::tuple<std::string, double, double>>& entries,
                                           const std::string& origin) {
  std::vector<Bounds> effective(topology.param_count());
  std::vector<char> seen(topology.param_count(), 0);
  for (const auto& [name, lo, hi] : entries) {
    const int id = topology.find_param(name);
    if (id < 0) throw ParseError(origin, 0, "unknown parameter '" + name + "'");
    if (seen[id]) throw ParseError(origin, 0, "parameter '" + name + "' listed twice");
    seen[id] = 1;
    const bool angle = topology.params()[id].kind == ParamKind::angle;
    effective[id] = angle ? Bounds{deg_to_rad(lo), deg_to_rad(hi)} : Bounds{lo, hi};
  }
  for (int id = 0; id < topology.param_count(); ++id) {
    if (!seen[id]) {
      throw ParseError(origin, 0, "no bounds for parameter '" + topology.params()[id].name + "'");
    }
  }
  return effective;
}

ConstraintTable make_default_table() {
  const SkeletonTopology& topo = default_topology();
  std::vector<std::tuple<std::string, double, double>> entries;
  for (const TableEntry& e : kDefaultBounds) entries.emplace_back(e.param, e.min, e.max);
  return ConstraintTable::from_effective(topo, effective_from_entries(topo, entries, "<default>"));
}

}  // namespace

const ConstraintTable& default_constraint_table() {
  static const ConstraintTable table = make_default_table();
  return table;
}

ConstraintTable load_constraint_table(const std::string& path, const SkeletonTopology& topology) {
  using nlohmann::json;
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, "cannot open constraint file");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path, 0, e.what());
  }
  std::vector<std::tuple<std::string, double, double>> entries;
  try {
    for (const auto& b : j.at("bounds")) {
      entries.emplace_back(b.at("param").get<std::string>(), b.at("min").get<double>(),
                           b.at("max").get<double>());
    }
  } catch (const json::exception& e) {
    throw ParseError(path, 0, e.what());
  }
  return ConstraintTable::from_effective(topology, effective_from_entries(topology, entries, path));
}

void save_constraint_table(const ConstraintTable& table, const SkeletonTopology& topology,
                           const std::string& path) {
  using nlohmann::json;
  json bounds = json::array();
  for (int id = 0; id < topology.param_count(); ++id) {
    const Bounds e = table.effective(topology, id);
    const bool angle = topology.params()[id].kind == ParamKind::angle;
    bounds.push_back({{"param", topology.params()[id].name},
                      {"min", angle ? rad_to_deg(e.min) : e.min},
                      {"max", angle ? rad_to_deg(e.max) : e.max}});
  }
  json j = {{"format", "dhaug-constraints/1"},
            {"units", {{"angles", "degrees"}, {"lengths", "meters"}}},
            {"note", "min/max are effective DH values (rest value plus delta)"},
            {"bounds", bounds}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(1) << "\n";
}

}  // namespace dhaug
