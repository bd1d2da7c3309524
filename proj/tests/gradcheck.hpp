#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "glazelab/common.hpp"

// Central-difference checks of every hand-written backward pass. Compiled
// against either precision; tolerances are the caller's business.
namespace glazelab::inline GLAZELAB_ABI::gradcheck {

struct Check {
  std::string name;
  double max_rel_error = 0;
  std::size_t coordinates = 0;
};

struct Settings {
  double h = 1e-4;           // step for the layer-level checks
  double objective_h = 1e-6; // step for whole-network objectives
  int sampled = 40;          // coordinates sampled on 64x64 inputs
  std::uint64_t seed = 1;
};

// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor = 1e-7);

// Largest |conv2d_forward - definitional sum| over strides 1 and 2 and a few
// odd and even shapes.
double conv_forward_max_error(std::uint64_t seed);

std::vector<Check> conv_checks(const Settings& s);
std::vector<Check> activation_checks(const Settings& s);
Check perceptual_check(const Settings& s);
std::vector<Check> objective_checks(const Settings& s);

std::vector<Check> all_checks(const Settings& s);

}  // namespace glazelab::gradcheck
