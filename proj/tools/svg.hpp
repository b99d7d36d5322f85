#pragma once

#include <string>
#include <utility>
#include <vector>

namespace trackfuse::cli {

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

// Minimal fixed-layout charts; output depends only on the inputs.
std::string line_chart(const std::string& title, const std::string& x_label,
                       const std::string& y_label, const std::vector<Series>& series);
std::string bar_chart(const std::string& title, const std::string& y_label,
                      const std::vector<std::pair<std::string, double>>& bars);

}  // namespace trackfuse::cli
