#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace s3d {

struct GradientCheck {
  std::string name;
  std::string group;  // ops, sem, losses, regularizers, rasterizer, networks, end_to_end
  double max_relative_error = 0.0;
  double tolerance = 0.0;
  std::size_t checked = 0;     // coordinates compared
  std::size_t candidates = 0;  // coordinates considered before certification
  double seconds = 0.0;
  bool passed = false;
};

struct GradientSuiteReport {
  std::vector<GradientCheck> checks;
  double eps = 0.0;
  double seconds = 0.0;
  bool passed = false;

  std::string to_text() const;
};

void to_json(nlohmann::json& j, const GradientCheck& c);
void to_json(nlohmann::json& j, const GradientSuiteReport& r);

struct GradientSuiteOptions {
  double eps = 1e-3;
  double tolerance = 1e-4;
  double raster_tolerance = 1e-3;
  std::uint64_t seed = 0;
};

/// Central-difference checks in float64 over every primitive op, SEM, the
/// losses, the regularizers, the rasterizer, both networks and the
/// sketch -> mesh -> silhouette -> IoU path of a 16x16 micro model.
GradientSuiteReport run_gradient_suite(const GradientSuiteOptions& options = {});

}  // namespace s3d
