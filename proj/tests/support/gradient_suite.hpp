#pragma once

// Seeded finite-difference checks of every backward kernel, in double.
// Shared by the unit tests and the acceptance binary.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace adenet::testing {

inline constexpr double kFdStep = 1e-5;

struct GradientCase {
  std::string name;
  /// Largest norm-relative error over dx and parameter gradients for one
  /// random instance.
  std::function<double(std::uint64_t seed)> worst_error;
};

const std::vector<GradientCase>& gradient_cases();

}  // namespace adenet::testing
