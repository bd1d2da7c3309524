#include "acceptance_numerics.hpp"

#include <algorithm>

#include "gradcheck.hpp"

namespace acceptance_numerics {

bool high_precision() { return glazelab::kHighPrecision; }

std::vector<GradientLine> gradient_checks() {
  std::vector<GradientLine> out;
  for (const auto& c : glazelab::gradcheck::all_checks({})) out.push_back({c.name, c.max_rel_error, c.coordinates});
  return out;
}

double conv_forward_error() {
  double worst = 0;
  for (std::uint64_t seed : {1, 2, 3}) worst = std::max(worst, glazelab::gradcheck::conv_forward_max_error(seed));
  return worst;
}

}  // namespace acceptance_numerics
