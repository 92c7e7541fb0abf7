#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lst/vae.hpp"
#include "testutil.hpp"

using namespace lst;
using lsttest::max_grad_error;

namespace {

VaeConfig tiny_config() {
  VaeConfig cfg;
  cfg.in_channels = 1;
  cfg.image_hw = 8;
  cfg.channels = {4, 8};
  cfg.latent_dim = 5;
  return cfg;
}

VaeConfig mnist_config() {
  return VaeConfig{};  // 1x28x28, channels 32/64, latent 100
}

}  // namespace

TEST_CASE("encode/decode shape contracts") {
  Rng rng(201);
  VaeModel<float> model(mnist_config(), rng);
  auto batch = Tensor<float>::randu({2, 1, 28, 28}, rng, -1, 1);
  auto [mu, log_var] = model.encode(batch, false);
  CHECK(mu.shape() == Shape{2, 100});
  CHECK(log_var.shape() == Shape{2, 100});
  auto out = model.decode(mu, false);
  CHECK(out.shape() == batch.shape());

  CHECK_THROWS_AS(model.encode(Tensor<float>::ones({2, 1, 16, 16}), false),
                  DimensionError);
  CHECK_THROWS_AS(model.decode(Tensor<float>::ones({2, 64}), false), DimensionError);
}

TEST_CASE("decoder output lies in [-1,1]") {
  Rng rng(203);
  VaeModel<float> model(tiny_config(), rng);
  auto z = Tensor<float>::randu({4, 5}, rng, -3, 3);
  auto img = model.decode(z, false);
  for (size_t i = 0; i < img.size(); ++i) {
    CHECK(img[i] >= -1.0f);
    CHECK(img[i] <= 1.0f);
  }
}

TEST_CASE("encode and decode are deterministic in eval mode") {
  Rng rng(205);
  VaeModel<float> model(tiny_config(), rng);
  auto x = Tensor<float>::randu({1, 1, 8, 8}, rng, -1, 1);
  auto two = concat<float>({x, x}, 0);
  auto [mu, lv] = model.encode(two, false);
  for (int j = 0; j < 5; ++j) {
    CHECK(mu[static_cast<size_t>(j)] == mu[static_cast<size_t>(5 + j)]);
    CHECK(lv[static_cast<size_t>(j)] == lv[static_cast<size_t>(5 + j)]);
  }
  auto d1 = model.decode(mu, false);
  auto d2 = model.decode(mu, false);
  CHECK(lsttest::max_abs_diff(d1, d2) == 0.0);
}

TEST_CASE("encoder mean gradient vs finite differences (tiny config)") {
  Rng rng(207);
  VaeModel<double> model(tiny_config(), rng);
  std::vector<Tensor<double>> ins = {Tensor<double>::randu({2, 1, 8, 8}, rng, -1, 1)};
  auto fn = [&](std::vector<Tensor<double>>& v) {
    auto [mu, lv] = model.encode(v[0], true);
    (void)lv;
    return mse(mu, Tensor<double>::zeros(mu.shape()));
  };
  CHECK(max_grad_error(fn, ins) < 1e-3);
}

TEST_CASE("reparameterize") {
  Rng rng(211);
  auto mu = Tensor<float>::randu({2, 4}, rng, -1, 1);
  auto lv = Tensor<float>::randu({2, 4}, rng, -1, 1);

  auto z0 = reparameterize(mu, lv, Tensor<float>::zeros({2, 4}));
  CHECK(lsttest::max_abs_diff(z0, mu) == 0.0);

  auto e = Tensor<float>::randu({2, 4}, rng, -1, 1);
  auto z1 = reparameterize(mu, Tensor<float>::zeros({2, 4}), e);
  for (size_t i = 0; i < z1.size(); ++i)
    CHECK(z1[i] == doctest::Approx(mu[i] + e[i]).epsilon(1e-6));

  // recorded eps replays bit-exactly
  auto s1 = sample_latent(mu, lv, rng);
  auto z_replay = reparameterize(mu, lv, s1.eps);
  CHECK(lsttest::max_abs_diff(s1.z, z_replay) == 0.0);

  // empirical mean of z approaches mu
  const int draws = 10000;
  double acc = 0;
  Rng r2(212);
  auto mu1 = Tensor<float>::from({1, 1}, {0.37f});
  auto lv1 = Tensor<float>::from({1, 1}, {-0.4f});
  for (int i = 0; i < draws; ++i) acc += sample_latent(mu1, lv1, r2).z.item();
  const double sigma = std::exp(0.5 * -0.4);
  CHECK(std::abs(acc / draws - 0.37) < 3.0 * sigma / std::sqrt(draws));
}

TEST_CASE("kl closed form") {
  auto z = Tensor<float>::zeros({1, 3});
  CHECK(kl_to_standard_normal(z, z).item() == doctest::Approx(0.0));

  auto mu = Tensor<float>::from({1, 1}, {1.0f});
  auto lv = Tensor<float>::zeros({1, 1});
  CHECK(kl_to_standard_normal(mu, lv).item() == doctest::Approx(0.5));

  // nonnegativity over random inputs
  Rng rng(213);
  for (int t = 0; t < 200; ++t) {
    auto m = Tensor<float>::randu({3, 6}, rng, -2, 2);
    auto l = Tensor<float>::randu({3, 6}, rng, -2, 2);
    CHECK(kl_to_standard_normal(m, l).item() >= -1e-6f);
  }
}

TEST_CASE("kl matches monte-carlo estimate within 2%") {
  Rng rng(217);
  const int dims = 4, draws = 100000;
  auto mu = Tensor<double>::randu({1, dims}, rng, -1, 1);
  auto lv = Tensor<double>::randu({1, dims}, rng, -1, 1);
  const double closed = kl_to_standard_normal(mu, lv).item();

  // E_q[log q(z) - log p(z)] with z ~ q
  double acc = 0;
  for (int i = 0; i < draws; ++i) {
    double logq = 0, logp = 0;
    for (int d = 0; d < dims; ++d) {
      const double sigma = std::exp(0.5 * lv[static_cast<size_t>(d)]);
      const double z = mu[static_cast<size_t>(d)] + sigma * rng.normal();
      const double zq = (z - mu[static_cast<size_t>(d)]) / sigma;
      logq += -0.5 * zq * zq - std::log(sigma);
      logp += -0.5 * z * z;
    }
    acc += logq - logp;
  }
  const double mc = acc / draws;
  CHECK(std::abs(closed - mc) / std::abs(closed) < 0.02);
}

TEST_CASE("kl gradient vs finite differences") {
  Rng rng(219);
  std::vector<Tensor<double>> ins = {Tensor<double>::randu({3, 4}, rng, -1, 1),
                                     Tensor<double>::randu({3, 4}, rng, -1, 1)};
  auto fn = [](std::vector<Tensor<double>>& v) {
    return kl_to_standard_normal(v[0], v[1]);
  };
  CHECK(max_grad_error(fn, ins) < 1e-4);
}

TEST_CASE("vae loss composition") {
  // a perfectly reconstructing model with mu=0, log_var=0 gives loss 0
  Rng rng(223);
  auto img = Tensor<float>::randu({2, 1, 4, 4}, rng, -1, 1);
  auto zero_lat = Tensor<float>::zeros({2, 3});
  auto rec = mse(img, img);
  auto kl = kl_to_standard_normal(zero_lat, zero_lat);
  CHECK(add(rec, kl).item() == 0.0f);

  // components add up and both reach the trainable parameters
  VaeModel<float> model(tiny_config(), rng);
  auto batch = Tensor<float>::randu({4, 1, 8, 8}, rng, -1, 1);
  Rng noise(1);
  auto parts = vae_loss(model, batch, noise, true);
  CHECK(parts.total.item() ==
        doctest::Approx(parts.reconstruction.item() + parts.kl.item()).epsilon(1e-6));
  CHECK(parts.kl.item() >= 0.0f);

  backward(parts.total);
  std::vector<NamedParam<float>> params;
  model.collect("vae", params);
  size_t with_grad = 0;
  for (auto& p : params) {
    if (p.tensor.has_grad()) {
      bool nonzero = false;
      for (auto g : p.tensor.grad())
        if (g != 0.0f) nonzero = true;
      if (nonzero) ++with_grad;
    }
  }
  // every layer's weight sees gradient (biases of zero-mean paths can be tiny)
  CHECK(with_grad > params.size() / 2);
}

TEST_CASE("full vae gradient check on tiny config") {
  Rng rng(227);
  VaeModel<double> model(tiny_config(), rng);
  auto batch = Tensor<double>::randu({2, 1, 8, 8}, rng, -1, 1);
  auto eps = Tensor<double>::randn({2, 5}, rng);

  std::vector<NamedParam<double>> params;
  model.collect("vae", params);
  // probe a representative subset: conv, bn, heads, decoder
  std::vector<Tensor<double>> ins;
  for (auto& p : params) {
    if (p.name.find("down0.main.weight") != std::string::npos ||
        p.name.find("down1.norm.gamma") != std::string::npos ||
        p.name.find("mu.weight") != std::string::npos ||
        p.name.find("logvar.bias") != std::string::npos ||
        p.name.find("up1.main.weight") != std::string::npos ||
        p.name.find("smooth.weight") != std::string::npos) {
      ins.push_back(p.tensor);
    }
  }
  REQUIRE(ins.size() == 6);

  auto fn = [&](std::vector<Tensor<double>>&) {
    auto [mu, lv] = model.encode(batch, true);
    auto z = reparameterize(mu, lv, eps);
    auto dec = model.decode(z, true);
    return add(mse(dec, batch), kl_to_standard_normal(mu, lv));
  };
  CHECK(max_grad_error(fn, ins) < 1e-3);
}
