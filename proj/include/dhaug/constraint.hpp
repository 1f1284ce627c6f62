#pragma once

#include <span>
#include <string>
#include <vector>

#include "dhaug/skeleton.hpp"

namespace dhaug {

struct Bounds {
  double min = 0.0;
  double max = 0.0;

  double mid() const { return 0.5 * (min + max); }
  bool contains(double v) const { return v >= min && v <= max; }
};

/// Admissible range of every parameter delta, indexed by canonical id.
/// Angle entries are radians, length entries meters.
class ConstraintTable {
 public:
  /// Builds from per-id delta bounds. Requires min < max everywhere and keeps
  /// knee flexion inside [-pi, 0].
  static ConstraintTable from_deltas(const SkeletonTopology& topology, std::vector<Bounds> deltas);
  /// Builds from effective DH values (rest + delta), keyed by parameter id.
  static ConstraintTable from_effective(const SkeletonTopology& topology,
                                        const std::vector<Bounds>& effective);

  const std::vector<Bounds>& bounds() const { return bounds_; }
  const Bounds& operator[](std::size_t id) const { return bounds_[id]; }
  std::size_t size() const { return bounds_.size(); }

  /// rest + delta bounds for id.
  Bounds effective(const SkeletonTopology& topology, int id) const;

 private:
  std::vector<Bounds> bounds_;
};

struct Violation {
  int param = 0;
  double value = 0.0;
  Bounds bound;
};

struct ValidationReport {
  bool ok = true;
  std::vector<Violation> violations;
};

/// min + (1 + tanh(raw)) * (max - min) / 2, kept inside [min, max].
double squash_value(double raw, const Bounds& bounds);
/// Derivative of squash_value with respect to raw.
double squash_derivative(double raw, const Bounds& bounds);

ParamVector squash_params(std::span<const double> raw, const ConstraintTable& table);

ValidationReport validate_params(const ParamVector& params, const ConstraintTable& table);

const ConstraintTable& default_constraint_table();

ConstraintTable load_constraint_table(const std::string& path, const SkeletonTopology& topology);
void save_constraint_table(const ConstraintTable& table, const SkeletonTopology& topology,
                           const std::string& path);

/// True for knee flexion parameters, which must stay within [-pi, 0].
bool is_knee_angle(const SkeletonTopology& topology, int id);
bool is_elbow_angle(const SkeletonTopology& topology, int id);

}  // namespace dhaug
