#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "glazelab/dataset.hpp"
#include "glazelab/evaluation.hpp"
#include "glazelab/perceptual.hpp"
#include "support.hpp"

using namespace glazelab;

namespace {

const PerceptualMetric& metric() {
  static const PerceptualMetric m = [] {
    Rng rng(21);
    return PerceptualMetric(Autoencoder::he_initialized(rng));
  }();
  return m;
}

Image add_noise(const Image& x, double amplitude, Rng& rng) {
  std::vector<real> px(x.pixels().begin(), x.pixels().end());
  for (real& v : px) v = static_cast<real>(v + amplitude * (2 * rng.uniform() - 1));
  return Image(x.width(), x.height(), std::move(px));
}

}  // namespace

TEST_CASE("pd identity, symmetry, nonnegativity") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Image a = random_image(64, 64, 2 * s);
    const Image b = random_image(64, 64, 2 * s + 1);
    CHECK(pd(metric(), a, a) == 0);
    const real ab = pd(metric(), a, b);
    CHECK(ab > 0);
    CHECK(std::abs(double(ab) - double(pd(metric(), b, a))) <= 1e-6 * std::max(1.0, double(ab)));
  }
}

TEST_CASE("pd grows with noise amplitude") {
  const auto images = generate_content(0, 20);
  Rng rng(8);
  double previous = 0;
  for (double amp : {0.01, 0.02, 0.05, 0.1}) {
    std::vector<double> values;
    for (const auto& x : images) values.push_back(pd(metric(), x, add_noise(x, amp, rng)));
    const double med = median(values);
    CHECK(med > previous);
    previous = med;
  }
}

TEST_CASE("pd gradient") {
  const Image a = random_image(64, 64, 31);
  const Image b = random_image(64, 64, 32);
  const Tensor at_min = pd_gradient(metric(), a, a);
  for (real g : at_min.data) CHECK(std::abs(g) <= 1e-8);
  const Tensor g1 = pd_gradient(metric(), a, b);
  CHECK(g1 == pd_gradient(metric(), a, b));
  Tensor g2;
  const auto ref = metric().prepare(image_to_tensor(b));
  const real v = metric().value_and_gradient(image_to_tensor(a), ref, g2);
  CHECK(g1 == g2);
  CHECK(v == pd(metric(), a, b));
  CHECK(metric().distance(image_to_tensor(a), ref) == v);
}

TEST_CASE("pd errors") {
  CHECK_THROWS_AS(pd(metric(), random_image(64, 64, 1), random_image(32, 32, 1)), ValidationError);
  CHECK_THROWS_AS(pd(metric(), random_image(32, 32, 1), random_image(32, 32, 2)), ValidationError);
  CHECK_THROWS_AS(pd_gradient(metric(), random_image(64, 64, 1), random_image(64, 32, 1)), ValidationError);
}

TEST_CASE("layer weights scale their terms") {
  Rng rng(21);
  const Autoencoder ae = Autoencoder::he_initialized(rng);
  const Image a = random_image(64, 64, 3);
  const Image b = random_image(64, 64, 4);
  const double first = pd(PerceptualMetric(ae, {1, 0}), a, b);
  const double second = pd(PerceptualMetric(ae, {0, 1}), a, b);
  CHECK(double(pd(PerceptualMetric(ae, {1, 1}), a, b)) == doctest::Approx(first + second).epsilon(1e-5));
  CHECK(double(pd(PerceptualMetric(ae, {2, 0}), a, b)) == doctest::Approx(2 * first).epsilon(1e-5));
}
