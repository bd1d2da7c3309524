#include "glazelab/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace glazelab::inline GLAZELAB_ABI {

namespace {

struct Clamped {
  Tensor y;
  std::vector<unsigned char> inside;  // 1 where 0 <= x + delta <= 1
};

Clamped clamp_sum(const Tensor& x, const Tensor& delta) {
  if (x.shape != delta.shape) throw ValidationError("perturbation shape does not match the image");
  Clamped c{Tensor(x.shape), std::vector<unsigned char>(x.size())};
  for (std::size_t i = 0; i < x.size(); ++i) {
    const real v = x.data[i] + delta.data[i];
    c.inside[i] = (v >= 0 && v <= 1) ? 1 : 0;
    c.y.data[i] = std::clamp(v, real(0), real(1));
  }
  return c;
}

// Adds the penalty term alpha * hinge^2 (value and, optionally, gradient).
void add_penalty(const PerceptualMetric& m, const PerceptualMetric::Reference& ref, const Tensor& y,
                 real alpha, real budget, bool with_gradient, ObjectiveValue& v, Tensor& grad_y) {
  if (with_gradient) {
    Tensor g_pd;
    v.pd = m.value_and_gradient(y, ref, g_pd);
    const double hinge = std::max(0.0, double(v.pd) - double(budget));
    if (hinge > 0) {
      const real coeff = static_cast<real>(2.0 * double(alpha) * hinge);
      for (std::size_t i = 0; i < grad_y.size(); ++i) grad_y.data[i] += coeff * g_pd.data[i];
    }
    v.total = static_cast<real>(double(v.primary) + double(alpha) * hinge * hinge);
  } else {
    v.pd = m.distance(y, ref);
    const double hinge = std::max(0.0, double(v.pd) - double(budget));
    v.total = static_cast<real>(double(v.primary) + double(alpha) * hinge * hinge);
  }
}

void mask_gradient(const Clamped& c, Tensor& grad) {
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!c.inside[i]) grad.data[i] = 0;
  }
}

void require_degenerate_free(const Latent& z) {
  double mean = 0;
  for (real v : z.values) mean += v;
  mean /= double(z.values.size());
  double var = 0;
  for (real v : z.values) var += (v - mean) * (v - mean);
  if (!(var > 0)) throw ValidationError("autoencoder is degenerate: zero-variance latent");
}

void require_64(const Image& x) {
  if (x.width() != kImageSize || x.height() != kImageSize) {
    throw ValidationError("perturbation optimizers expect a 64x64 image");
  }
}

Tensor chw_to_hwc(const Tensor& t) {
  const int c = t.dim(0);
  const int h = t.dim(1);
  const int w = t.dim(2);
  const std::size_t plane = std::size_t(h) * w;
  Tensor out({h, w, c});
  for (std::size_t p = 0; p < plane; ++p) {
    for (int ch = 0; ch < c; ++ch) out.data[p * c + ch] = t.data[ch * plane + p];
  }
  return out;
}

Image apply_delta(const Image& x, const Tensor& delta_hwc) {
  std::vector<real> px(x.pixels().begin(), x.pixels().end());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = std::clamp(px[i] + delta_hwc.data[i], real(0), real(1));
  return Image(x.width(), x.height(), std::move(px));
}

// Penalty-method Adam descent over delta with best-feasible-iterate return.
template <typename Objective>
OptResult descend(const Image& x, const Objective& objective, const PerceptualMetric& m,
                  const OptConfig& cfg) {
  OptResult r;
  const Tensor& x_t = objective.input();
  Tensor delta(x_t.shape);
  AdamState state(delta.size());
  const AdamConfig adam{cfg.lr};
  real alpha = cfg.penalty_alpha;
  const real feasible_pd = cfg.budget * kBudgetSlack;

  real best_primary = std::numeric_limits<real>::infinity();
  int best_step = -1;
  Tensor best_delta;

  for (int k = 0; k <= cfg.steps; ++k) {
    const bool last = (k == cfg.steps);
    ObjectiveValue v = objective.evaluate(delta, alpha, !last);
    if (!std::isfinite(v.total) || !std::isfinite(v.pd)) {
      throw NumericalError("optimization produced a non-finite objective at step " + std::to_string(k));
    }
    const bool feasible = v.pd <= feasible_pd;
    r.objective_history.push_back(v.total);
    r.primary_history.push_back(v.primary);
    r.pd_history.push_back(v.pd);
    r.feasible_history.push_back(feasible);
    if (feasible && v.primary < best_primary) {
      best_primary = v.primary;
      best_step = k;
      best_delta = delta;
    }
    if (last) break;
    if ((k + 1) % OptConfig::kGrowthInterval == 0 && !feasible) alpha *= cfg.alpha_growth;
    adam_step(delta.data, v.gradient.data, state, adam);
  }

  if (best_step < 0) {
    best_step = cfg.steps;
    best_delta = delta;
    best_primary = r.primary_history.back();
  }
  r.selected_step = best_step;
  r.delta = chw_to_hwc(best_delta);
  r.output = apply_delta(x, r.delta);
  r.final_primary_loss = best_primary;
  r.final_pd = pd(m, r.output, x);
  r.constraint_satisfied = r.final_pd <= feasible_pd;
  return r;
}

}  // namespace

void OptConfig::validate() const {
  if (!(budget > 0) || steps < 1 || !(lr >= 0) || !(penalty_alpha > 0) || !(alpha_growth >= 1)) {
    throw ValidationError("invalid optimizer configuration (budget > 0, steps >= 1, lr >= 0, "
                          "penalty_alpha > 0, alpha_growth >= 1)");
  }
}

CloakObjective::CloakObjective(const Image& x, const StyleParams& t, const Autoencoder& ae,
                               const PerceptualMetric& m, real budget)
    : x_(image_to_tensor(x)), ae_(&ae), metric_(&m), ref_(m.prepare(x_)), budget_(budget) {
  require_64(x);
  require_degenerate_free(encode(ae, x));
  target_ = encode(ae, stylize(x, t));
}

ObjectiveValue CloakObjective::evaluate(const Tensor& delta, real alpha, bool with_gradient) const {
  const Clamped c = clamp_sum(x_, delta);
  const EncoderTrace et = encoder_forward(*ae_, c.y);
  ObjectiveValue v;
  Tensor diff(et.latent.shape);
  double norm2 = 0;
  for (std::size_t i = 0; i < diff.size(); ++i) {
    diff.data[i] = et.latent.data[i] - target_.values[i];
    norm2 += double(diff.data[i]) * diff.data[i];
  }
  const double norm = std::sqrt(norm2);
  v.primary = static_cast<real>(norm);
  Tensor grad_y;
  if (with_gradient) {
    // d||d||/dd = d / ||d||; taken as zero at the exact optimum.
    const real inv = norm > 0 ? static_cast<real>(1.0 / norm) : real(0);
    for (real& d : diff.data) d *= inv;
    grad_y = encoder_backward_input(*ae_, et, diff);
  }
  add_penalty(*metric_, ref_, c.y, alpha, budget_, with_gradient, v, grad_y);
  if (with_gradient) {
    mask_gradient(c, grad_y);
    v.gradient = std::move(grad_y);
  }
  return v;
}

PurifyObjective::PurifyObjective(const Image& x_glazed, const Autoencoder& ae,
                                 const PerceptualMetric& m, real budget)
    : x_(image_to_tensor(x_glazed)), ae_(&ae), metric_(&m), ref_(m.prepare(x_)), budget_(budget) {
  require_64(x_glazed);
  require_degenerate_free(encode(ae, x_glazed));
}

ObjectiveValue PurifyObjective::evaluate(const Tensor& delta, real alpha, bool with_gradient) const {
  const Clamped c = clamp_sum(x_, delta);
  const EncoderTrace et = encoder_forward(*ae_, c.y);
  const DecoderTrace dt = decoder_forward(*ae_, et.latent);
  ObjectiveValue v;
  const double n = double(c.y.size());
  Tensor resid(c.y.shape);
  double sum = 0;
  for (std::size_t i = 0; i < resid.size(); ++i) {
    resid.data[i] = c.y.data[i] - dt.output.data[i];
    sum += double(resid.data[i]) * resid.data[i];
  }
  v.primary = static_cast<real>(sum / n);
  Tensor grad_y;
  if (with_gradient) {
    const real coeff = static_cast<real>(2.0 / n);
    Tensor grad_out(resid.shape);
    for (std::size_t i = 0; i < resid.size(); ++i) grad_out.data[i] = -coeff * resid.data[i];
    const Tensor grad_latent = decoder_backward_input(*ae_, dt, grad_out);
    grad_y = encoder_backward_input(*ae_, et, grad_latent);
    for (std::size_t i = 0; i < grad_y.size(); ++i) grad_y.data[i] += coeff * resid.data[i];
  }
  add_penalty(*metric_, ref_, c.y, alpha, budget_, with_gradient, v, grad_y);
  if (with_gradient) {
    mask_gradient(c, grad_y);
    v.gradient = std::move(grad_y);
  }
  return v;
}

OptResult cloak(const Image& x, const StyleParams& t, const Autoencoder& ae, const PerceptualMetric& m,
                const OptConfig& cfg) {
  cfg.validate();
  const CloakObjective objective(x, t, ae, m, cfg.budget);
  return descend(x, objective, m, cfg);
}

OptResult purify(const Image& x_glazed, const Autoencoder& ae, const PerceptualMetric& m,
                 const OptConfig& cfg) {
  cfg.validate();
  const PurifyObjective objective(x_glazed, ae, m, cfg.budget);
  return descend(x_glazed, objective, m, cfg);
}

}  // namespace glazelab
