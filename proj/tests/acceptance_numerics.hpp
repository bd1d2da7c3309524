#pragma once

#include <cstddef>
#include <string>
#include <vector>

// Double-precision checks behind a precision-free interface.
namespace acceptance_numerics {

struct GradientLine {
  std::string name;
  double max_rel_error = 0;
  std::size_t coordinates = 0;
};

bool high_precision();
std::vector<GradientLine> gradient_checks();
// Worst brute-force conv mismatch over a few seeds.
double conv_forward_error();

}  // namespace acceptance_numerics
