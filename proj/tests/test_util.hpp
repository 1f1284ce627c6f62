#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "dhaug/constraint.hpp"
#include "dhaug/skeleton.hpp"

namespace dhaug::test {

inline ParamVector random_params(std::mt19937_64& rng, double angle = 3.0, double length = 0.05) {
  std::uniform_real_distribution<double> a(-angle, angle), l(-length, length);
  ParamVector p;
  for (int i = 0; i < kParamCount; ++i) p[i] = i < kAngleParamCount ? a(rng) : l(rng);
  return p;
}

inline GlobalTransform random_global(std::mt19937_64& rng, double t = 2.0) {
  std::uniform_real_distribution<double> a(-3.2, 3.2), s(-t, t);
  return {a(rng), a(rng), a(rng), s(rng), s(rng), s(rng)};
}

/// Parameters squashed from random raw values, so always admissible.
inline ParamVector admissible_params(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 2.0);
  std::vector<double> raw(kParamCount);
  for (double& r : raw) r = n(rng);
  return squash_params(raw, default_constraint_table());
}

inline std::string tmp_path(const std::string& name) {
  std::filesystem::create_directories(DHAUG_TEST_TMP);
  return std::string(DHAUG_TEST_TMP) + "/" + name;
}

inline double max_abs(const Vec3& v) { return v.cwiseAbs().maxCoeff(); }

}  // namespace dhaug::test
