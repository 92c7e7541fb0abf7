#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lst/controller.hpp"
#include "testutil.hpp"

using namespace lst;
using lsttest::max_grad_error;

namespace {

VaeConfig tiny_config() {
  VaeConfig cfg;
  cfg.in_channels = 1;
  cfg.image_hw = 8;
  cfg.channels = {4, 8};
  cfg.latent_dim = 6;
  return cfg;
}

}  // namespace

TEST_CASE("control_step residual identity at zero init") {
  Rng rng(301);
  ControllerModule<float> ctrl(6, 1, 16, 8, 1, rng);
  auto z = Tensor<float>::randu({3, 6}, rng, -2, 2);
  for (float theta : {-0.8f, 0.0f, 0.4f}) {
    auto t = Tensor<float>::full({3, 1}, theta);
    auto z_hat = ctrl.control_step({z}, t, false);
    CHECK(z_hat.shape() == Shape{3, 6});
    for (size_t i = 0; i < z.size(); ++i) CHECK(z_hat[i] == z[i]);
  }
}

TEST_CASE("control_step contracts") {
  Rng rng(303);
  ControllerModule<float> ctrl(6, 2, 16, 8, 1, rng);
  auto z = Tensor<float>::randu({3, 6}, rng, -1, 1);
  auto theta = Tensor<float>::zeros({3, 1});
  CHECK_THROWS_AS(ctrl.control_step({z}, theta, false), ContractError);
  CHECK_THROWS_AS(ctrl.control_step({z, Tensor<float>::ones({3, 4})}, theta, false),
                  ContractError);
  CHECK_THROWS_AS(ctrl.control_step({z, z}, Tensor<float>::zeros({2, 1}), false),
                  ContractError);
  CHECK(ctrl.control_step({z, z}, theta, false).shape() == Shape{3, 6});
}

TEST_CASE("dimensional closure across configs") {
  Rng rng(305);
  for (int latent : {6, 10}) {
    for (int history : {1, 3}) {
      ControllerModule<float> ctrl(latent, history, 12, 6, 2, rng);
      std::vector<Tensor<float>> hist(static_cast<size_t>(history),
                                      Tensor<float>::randu({2, latent}, rng, -1, 1));
      auto out = ctrl.control_step(hist, Tensor<float>::zeros({2, 1}), false);
      CHECK(out.shape() == Shape{2, latent});
    }
  }
}

TEST_CASE("compose_controllers") {
  Rng rng(307);
  ControllerModule<float> rot(6, 1, 16, 8, 1, rng);
  ControllerModule<float> dil(6, 1, 16, 8, 1, rng);
  auto z = Tensor<float>::randu({2, 6}, rng, -1, 1);

  // empty list is the identity
  auto same = compose_controllers<float>({}, {}, z);
  CHECK(lsttest::max_abs_diff(same, z) == 0.0);

  // at zero init every step is the identity, composition included
  std::vector<ControlSpec> specs{{ControlKind::kRotation, 0.3},
                                 {ControlKind::kDilation, -1.0}};
  auto out = compose_controllers<float>({&rot, &dil}, specs, z);
  CHECK(lsttest::max_abs_diff(out, z) == 0.0);

  ControllerModule<float> other(5, 1, 16, 8, 1, rng);
  CHECK_THROWS_AS(compose_controllers<float>({&other}, {specs[0]}, z), ContractError);
  CHECK_THROWS_AS(compose_controllers<float>({&rot}, {}, z), ContractError);
}

TEST_CASE("control spec ranges") {
  CHECK(ControlSpec{ControlKind::kRotation, 0.5}.in_range());
  CHECK_FALSE(ControlSpec{ControlKind::kRotation, 1.2}.in_range());
  CHECK(ControlSpec{ControlKind::kDilation, -2.0}.in_range());
  CHECK_FALSE(ControlSpec{ControlKind::kDilation, 3.0}.in_range());
  CHECK(ControlSpec{ControlKind::kTimestep, 5.0}.in_range());
  CHECK_FALSE(ControlSpec{ControlKind::kTimestep, 0.0}.in_range());
}

TEST_CASE("latent loss values and gradient") {
  Rng rng(311);
  auto z = Tensor<float>::randu({2, 5}, rng, -1, 1);
  CHECK(latent_loss(z, z).item() == 0.0f);

  // unit offset in one of 100 dims, batch 1
  auto t = Tensor<float>::zeros({1, 100});
  auto h = Tensor<float>::zeros({1, 100});
  h.mutable_data()[42] = 1.0f;
  CHECK(latent_loss(t, h).item() == doctest::Approx(1.0));

  auto zt = Tensor<double>::randu({4, 6}, rng, -1, 1);
  auto zh = Tensor<double>::randu({4, 6}, rng, -1, 1);
  zh.set_requires_grad(true);
  backward(latent_loss(zt, zh));
  for (size_t i = 0; i < zh.size(); ++i)
    CHECK(zh.grad()[i] == doctest::Approx(2.0 * (zh[i] - zt[i]) / 4.0).epsilon(1e-6));
}

TEST_CASE("gradient partitioning across the three losses") {
  Rng rng(313);
  VaeModel<float> vae(tiny_config(), rng);
  ControllerModule<float> ctrl(6, 1, 16, 8, 1, rng);
  // give the controller nonzero output so its gradients flow
  for (auto& v : ctrl.tn.output_map.weight.mutable_data()) v = 0.05f;

  auto src = Tensor<float>::randu({4, 1, 8, 8}, rng, -1, 1);
  auto tgt = Tensor<float>::randu({4, 1, 8, 8}, rng, -1, 1);
  auto theta = Tensor<float>::full({4, 1}, 0.3f);

  std::vector<NamedParam<float>> enc, dec, con;
  vae.collect_encoder("enc", enc);
  vae.collect_decoder("dec", dec);
  ctrl.collect("ctrl", con);

  auto grad_norm = [](std::vector<NamedParam<float>>& ps) {
    double s = 0;
    for (auto& p : ps)
      for (auto g : p.tensor.grad()) s += std::abs(g);
    return s;
  };
  auto clear = [](std::vector<NamedParam<float>>& ps) {
    for (auto& p : ps) p.tensor.zero_grad();
  };

  // Eq. 5: encoder + decoder
  Rng noise(2);
  auto parts = vae_loss(vae, src, noise, true);
  backward(parts.total);
  CHECK(grad_norm(enc) > 0.0);
  CHECK(grad_norm(dec) > 0.0);
  CHECK(grad_norm(con) == 0.0);
  clear(enc);
  clear(dec);
  clear(con);

  // Eq. 6: controller only (inputs and targets detached)
  {
    auto [mu_s, lv_s] = vae.encode(src, true);
    (void)lv_s;
    auto [mu_t, lv_t] = vae.encode(tgt, true);
    (void)lv_t;
    auto z_hat = ctrl.control_step({detach(mu_s)}, theta, true);
    backward(latent_loss(detach(mu_t), z_hat));
    CHECK(grad_norm(con) > 0.0);
    CHECK(grad_norm(enc) == 0.0);
    CHECK(grad_norm(dec) == 0.0);
    clear(enc);
    clear(dec);
    clear(con);
  }

  // Eq. 7: controller + decoder, encoder blocked
  {
    auto [mu_s, lv_s] = vae.encode(src, true);
    (void)lv_s;
    auto z_hat = ctrl.control_step({detach(mu_s)}, theta, true);
    auto pred = vae.decode(z_hat, true);
    backward(image_loss(tgt, pred));
    CHECK(grad_norm(con) > 0.0);
    CHECK(grad_norm(dec) > 0.0);
    CHECK(grad_norm(enc) == 0.0);
  }
}

TEST_CASE("scalar head") {
  Rng rng(317);
  ControllerModule<float> ctrl(6, 1, 16, 8, 1, rng);
  ScalarHead<float> head(16, rng);  // zero-initialized
  auto z = Tensor<float>::randu({3, 6}, rng, -1, 1);
  Tensor<float> features;
  auto z_hat =
      ctrl.control_step_with_features({z}, Tensor<float>::zeros({3, 1}), false, features);
  (void)z_hat;
  REQUIRE(features.defined());
  auto out = head.forward(features);
  CHECK(out.shape() == Shape{3, 1});
  for (size_t i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0f);
}

TEST_CASE("controller end-to-end gradient check (tiny, 64-bit)") {
  Rng rng(319);
  VaeModel<double> vae(tiny_config(), rng);
  ControllerModule<double> ctrl(6, 1, 12, 6, 1, rng);
  for (auto& v : ctrl.tn.output_map.weight.mutable_data())
    v = 0.02 * std::sin(static_cast<double>(v + 1));
  auto& interp = ctrl.tn.blocks[0].interpretation.weight;
  {
    auto d = interp.mutable_data();
    for (size_t i = 0; i < d.size(); ++i) d[i] = 0.2 * std::cos(static_cast<double>(i));
  }

  auto src = Tensor<double>::randu({2, 1, 8, 8}, rng, -1, 1);
  auto tgt = Tensor<double>::randu({2, 1, 8, 8}, rng, -1, 1);
  auto theta = Tensor<double>::full({2, 1}, 0.25);

  std::vector<Tensor<double>> ins = {ctrl.tn.input_map.weight, interp,
                                     ctrl.tn.output_map.weight,
                                     vae.dec_fc.weight};
  auto fn = [&](std::vector<Tensor<double>>&) {
    auto [mu, lv] = vae.encode(src, true);
    (void)lv;
    auto z_hat = ctrl.control_step({detach(mu)}, theta, true);
    auto pred = vae.decode(z_hat, true);
    return image_loss(tgt, pred);
  };
  CHECK(max_grad_error(fn, ins) < 1e-3);
}
