#pragma once

#include <cstddef>
#include <vector>

namespace layoutplan {

/// Maximum-weight one-to-one assignment on a dense rows x cols weight matrix
/// (rectangular allowed, weights >= 0). Returns, for each row, the matched
/// column or -1. Kuhn-Munkres with potentials, O(n^3).
std::vector<int> max_weight_assignment(const std::vector<std::vector<double>>& weight);

}  // namespace layoutplan
