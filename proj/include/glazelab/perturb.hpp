#pragma once

#include <cstdint>
#include <vector>

#include "glazelab/autoencoder.hpp"
#include "glazelab/perceptual.hpp"
#include "glazelab/style.hpp"

namespace glazelab::inline GLAZELAB_ABI {

inline constexpr real kDefaultBudget = real(0.07);
// constraint_satisfied <=> final_pd <= budget * kBudgetSlack
inline constexpr real kBudgetSlack = real(1.05);

struct OptConfig {
  real budget = kDefaultBudget;  // pd units
  int steps = 400;
  real lr = real(0.01);
  real penalty_alpha = real(10.0);
  real alpha_growth = real(1.5);  // applied every kGrowthInterval steps while infeasible
  // Echoed into reports. The perturbation starts at zero, so the optimizers
  // themselves draw nothing from it.
  std::uint64_t seed = 0;

  static constexpr int kGrowthInterval = 50;

  void validate() const;
};

struct OptResult {
  Image output;  // clamp01(input + delta)
  Tensor delta;  // [H, W, 3], same layout as Image pixels, unclamped
  // Iterate k = 0..steps (0 is the unperturbed input): total objective,
  // primary term, pd to the input and the feasibility flag.
  std::vector<real> objective_history;
  std::vector<real> primary_history;
  std::vector<real> pd_history;
  std::vector<bool> feasible_history;
  real final_pd = 0;            // re-measured pd(output, input)
  real final_primary_loss = 0;  // primary term at the returned iterate
  bool constraint_satisfied = false;
  int selected_step = 0;
};

struct ObjectiveValue {
  real total = 0;
  real primary = 0;
  real pd = 0;
  Tensor gradient;  // d total / d delta, [3, H, W]
};

// L(delta) = ||E(clamp01(x + delta)) - E(stylize(x, t))||_2
//          + alpha * max(0, pd(clamp01(x + delta), x) - budget)^2
// with the target latent evaluated once at construction.
class CloakObjective {
 public:
  CloakObjective(const Image& x, const StyleParams& t, const Autoencoder& ae,
                 const PerceptualMetric& m, real budget);

  // `delta` is [3, H, W].
  ObjectiveValue evaluate(const Tensor& delta, real alpha, bool with_gradient = true) const;

  const Tensor& input() const { return x_; }
  const Latent& target_latent() const { return target_; }

 private:
  Tensor x_;
  Latent target_;
  const Autoencoder* ae_;
  const PerceptualMetric* metric_;
  PerceptualMetric::Reference ref_;
  real budget_;
};

// L(delta) = mean((y - reconstruct(y))^2) + alpha * max(0, pd(y, x) - budget)^2,
// y = clamp01(x + delta); the gradient flows through both occurrences of y.
class PurifyObjective {
 public:
  PurifyObjective(const Image& x_glazed, const Autoencoder& ae, const PerceptualMetric& m,
                  real budget);

  ObjectiveValue evaluate(const Tensor& delta, real alpha, bool with_gradient = true) const;

  const Tensor& input() const { return x_; }

 private:
  Tensor x_;
  const Autoencoder* ae_;
  const PerceptualMetric* metric_;
  PerceptualMetric::Reference ref_;
  real budget_;
};

OptResult cloak(const Image& x, const StyleParams& t, const Autoencoder& ae,
                const PerceptualMetric& m, const OptConfig& cfg);

OptResult purify(const Image& x_glazed, const Autoencoder& ae, const PerceptualMetric& m,
                 const OptConfig& cfg);

}  // namespace glazelab
