#pragma once

#include <vector>

namespace scorelab {

using Vec = std::vector<double>;
using MultiIndex = std::vector<int>;

inline double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

inline double multi_factorial(const MultiIndex& k) {
  double f = 1.0;
  for (int v : k) f *= factorial(v);
  return f;
}

}  // namespace scorelab
