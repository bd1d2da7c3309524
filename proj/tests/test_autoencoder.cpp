#include <fstream>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "glazelab/autoencoder.hpp"
#include "glazelab/dataset.hpp"
#include "support.hpp"

using namespace glazelab;

namespace {

// Decoder that ignores the latent and paints a constant colour.
Autoencoder constant_decoder(Autoencoder ae, real r, real g, real b) {
  for (auto& l : ae.decoder) {
    std::fill(l.weights.data.begin(), l.weights.data.end(), real(0));
    std::fill(l.bias.data.begin(), l.bias.data.end(), real(0));
  }
  auto logit = [](real p) { return static_cast<real>(std::log(double(p) / (1.0 - double(p)))); };
  ae.decoder[2].bias.data = {logit(r), logit(g), logit(b)};
  return ae;
}

}  // namespace

TEST_CASE("shapes and zero networks") {
  const Autoencoder zero = Autoencoder::zeros();
  const Image x = random_image(64, 64, 1);
  const Latent z = encode(zero, x);
  CHECK(z.values.size() == 512);
  for (real v : z.values) CHECK(v == 0);
  const Image out = decode(zero, z);
  CHECK(out.width() == 64);
  for (real v : out.pixels()) CHECK(v == 0.5f);
  CHECK(Autoencoder::zeros(4).latent_size() == 256);
}

TEST_CASE("encode/decode contracts") {
  Rng rng(3);
  const Autoencoder ae = Autoencoder::he_initialized(rng);
  const Image x = random_image(64, 64, 2);
  CHECK(encode(ae, x) == encode(ae, x));
  CHECK(decode(ae, encode(ae, x)) == reconstruct(ae, x));
  const Image rec = reconstruct(ae, x);
  for (real v : rec.pixels()) CHECK((v >= 0 && v <= 1));
  CHECK(reconstruction_gap(ae, x) >= 0);
  CHECK(reconstruction_gap(ae, x) == pixel_l2(x, reconstruct(ae, x)));
  CHECK_THROWS_AS(encode(ae, random_image(32, 32, 1)), ValidationError);
  CHECK_THROWS_AS(decode(ae, Latent{std::vector<real>(10)}), ValidationError);
  CHECK_THROWS_AS(latent_l2(Latent{{1}}, Latent{{1, 2}}), ValidationError);
}

TEST_CASE("a network that reproduces a constant image has zero gap") {
  Rng rng(5);
  const Autoencoder ae = constant_decoder(Autoencoder::he_initialized(rng), 0.2f, 0.5f, 0.7f);
  const Image c = Image::filled(64, 64, 0.2f, 0.5f, 0.7f);
  CHECK(reconstruction_gap(ae, c) <= 1e-6);
}

// Bias-only learning path (all weights zero); learning rate from a scan over
// [0.03, 0.2], best at 0.075.
TEST_CASE("a constant image is learned within 20 epochs") {
  const std::vector<Image> corpus{Image::filled(64, 64, 0.3f, 0.6f, 0.2f)};
  Rng rng(1);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.lr = 0.075f;
  const TrainResult r = train(Autoencoder::zeros(), corpus, cfg, rng);
  CHECK(r.loss_history.size() == 20);
  CHECK(r.loss_history.back() < r.loss_history.front());
  CHECK(r.loss_history.back() < 1e-4);
}

TEST_CASE("training") {
  SUBCASE("determinism, worker count included") {
    const auto corpus = generate_content(77, 10);
    TrainConfig cfg;
    cfg.epochs = 2;
    Rng r1(9), r2(9), r3(9);
    const auto a = train(Autoencoder::he_initialized(r1), corpus, cfg, r1);
    const auto b = train(Autoencoder::he_initialized(r2), corpus, cfg, r2);
    cfg.jobs = 3;
    const auto c = train(Autoencoder::he_initialized(r3), corpus, cfg, r3);
    CHECK(a.model == b.model);
    CHECK(a.model == c.model);
    CHECK(a.loss_history == c.loss_history);
  }
  SUBCASE("a trained model separates distinct images") {
    const auto corpus = generate_content(1, 16);
    TrainConfig cfg;
    cfg.epochs = 5;
    Rng rng(1);
    const Autoencoder init = Autoencoder::he_initialized(rng);
    const auto r = train(init, corpus, cfg, rng);
    CHECK(latent_l2(encode(r.model, corpus[0]), encode(r.model, corpus[1])) > 0);
    double before = 0, after = 0;
    for (const auto& img : corpus) {
      before += reconstruction_gap(init, img);
      after += reconstruction_gap(r.model, img);
    }
    CHECK(after < before);
  }
  SUBCASE("errors") {
    Rng rng(1);
    CHECK_THROWS_AS(train(Autoencoder::zeros(), {}, {}, rng), ValidationError);
    const std::vector<Image> small{random_image(8, 8, 1)};
    CHECK_THROWS_AS(train(Autoencoder::zeros(), small, {}, rng), ValidationError);
    TrainConfig diverge;
    diverge.epochs = 3;
    diverge.lr = 1e30f;
    const auto corpus = generate_content(3, 4);
    CHECK_THROWS_AS(train(Autoencoder::he_initialized(rng), corpus, diverge, rng), NumericalError);
  }
}

TEST_CASE("weight files") {
  Rng rng(4);
  const Autoencoder ae = Autoencoder::he_initialized(rng);
  TempDir dir;
  save_weights(ae, dir.path / "ae.nnw");
  const Autoencoder back = load_weights(dir.path / "ae.nnw");
  CHECK(back == ae);
  const Image probe = random_image(64, 64, 12);
  CHECK(reconstruction_gap(back, probe) == reconstruction_gap(ae, probe));

  auto bytes = encode_weights(ae);
  bytes[1] = 'X';
  {
    std::ofstream out(dir.path / "bad.nnw", std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  }
  CHECK_THROWS_AS(load_weights(dir.path / "bad.nnw"), ValidationError);

  std::vector<ConvLayer> two{ae.encoder[0], ae.encoder[1]};
  save_layers(two, dir.path / "two.nnw");
  CHECK_THROWS_AS(load_weights(dir.path / "two.nnw"), ValidationError);
  std::vector<ConvLayer> swapped{ae.encoder[0], ae.encoder[1], ae.encoder[2], ae.decoder[0], ae.decoder[2], ae.decoder[1]};
  save_layers(swapped, dir.path / "swapped.nnw");
  CHECK_THROWS_AS(load_weights(dir.path / "swapped.nnw"), ValidationError);
}
