#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace capsnet {

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;  // (x, y), drawn in order
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  std::optional<double> y_min, y_max;  // default: data range
  std::optional<double> reference_y;   // dashed horizontal line
  std::string reference_label;
};

/// Standalone SVG; every data point is a <circle class="point">.
std::string render_line_chart(const LineChart& chart);

struct CapsuleRow {
  std::string label;
  std::vector<double> activations;
};

/// One <circle class="capsule"> per activation, one row per layer. Fill runs
/// from white at A = 0 to kFullFill at A = 1; capsules at or below the
/// threshold get a red outline.
std::string render_capsule_grid(const std::string& title, const std::vector<CapsuleRow>& rows, double threshold);

inline constexpr const char* kFullFill = "#08306b";
/// "#rrggbb" for an activation, clamped to [0, 1].
std::string activation_fill(double a);

}  // namespace capsnet
