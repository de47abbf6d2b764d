#pragma once

#include <string>
#include <utility>
#include <vector>

#include "conrad/metrics.hpp"

namespace conrad {

/// Overlaid robust-accuracy-vs-epoch curves, one per labeled run, with
/// dashed markers at the epochs where the learning rate drops. Emits a
/// standalone SVG.
void plot_robust_curves(const std::vector<std::pair<std::string, std::vector<MetricsRow>>>& runs,
                        const std::string& out_svg);

/// Bar chart of final robust accuracy per labeled run (fraction sweeps).
void plot_fraction_bars(const std::vector<std::pair<std::string, double>>& bars,
                        const std::string& out_svg);

}  // namespace conrad
