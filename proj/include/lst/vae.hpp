#pragma once

#include <utility>
#include <vector>

#include "lst/fern.hpp"
#include "lst/nn.hpp"

namespace lst {

// Strided residual stage: 3x3 main path with batch norm, 1x1 skip, both at
// stride 2. Downsampling halves the spatial extent, upsampling doubles it.
template <class T>
struct ResDown {
  Conv2d<T> main;
  Conv2d<T> skip;
  BatchNorm<T> norm;

  ResDown() = default;
  ResDown(int in_ch, int out_ch, Rng& rng)
      : main(in_ch, out_ch, 3, 2, 1, rng), skip(in_ch, out_ch, 1, 2, 0, rng),
        norm(out_ch) {}

  Tensor<T> forward(const Tensor<T>& x, bool training) {
    return relu(add(norm.forward(main.forward(x), training), skip.forward(x)));
  }

  void collect(const std::string& p, std::vector<NamedParam<T>>& out) {
    main.collect(p + ".main", out);
    skip.collect(p + ".skip", out);
    norm.collect(p + ".norm", out);
  }
  void collect_buffers(const std::string& p,
                       std::vector<std::pair<std::string, std::vector<T>*>>& out) {
    norm.collect_buffers(p + ".norm", out);
  }
};

template <class T>
struct ResUp {
  ConvTranspose2d<T> main;
  ConvTranspose2d<T> skip;
  BatchNorm<T> norm;
  bool is_last = false;  // last stage: no norm/relu, the tanh head follows

  ResUp() = default;
  ResUp(int in_ch, int out_ch, bool is_last_, Rng& rng)
      : main(in_ch, out_ch, 3, 2, 1, 1, rng), skip(in_ch, out_ch, 1, 2, 0, 1, rng),
        norm(out_ch), is_last(is_last_) {}

  Tensor<T> forward(const Tensor<T>& x, bool training) {
    if (is_last) return add(main.forward(x), skip.forward(x));
    return relu(add(norm.forward(main.forward(x), training), skip.forward(x)));
  }

  void collect(const std::string& p, std::vector<NamedParam<T>>& out) {
    main.collect(p + ".main", out);
    skip.collect(p + ".skip", out);
    if (!is_last) norm.collect(p + ".norm", out);
  }
  void collect_buffers(const std::string& p,
                       std::vector<std::pair<std::string, std::vector<T>*>>& out) {
    if (!is_last) norm.collect_buffers(p + ".norm", out);
  }
};

struct VaeConfig {
  int in_channels = 1;
  int image_hw = 28;
  std::vector<int> channels = {32, 64};  // per downsampling stage
  int latent_dim = 100;

  int stages() const { return static_cast<int>(channels.size()); }
  int feature_hw() const {
    int hw = image_hw;
    for (size_t i = 0; i < channels.size(); ++i) hw /= 2;
    return hw;
  }
  int feature_ch() const { return channels.back(); }
  int64_t flat_features() const {
    return static_cast<int64_t>(feature_ch()) * feature_hw() * feature_hw();
  }
};

template <class T>
struct LatentSample {
  Tensor<T> mu;
  Tensor<T> log_var;
  Tensor<T> eps;  // recorded noise; replaying it reproduces z exactly
  Tensor<T> z;
};

// Residual VAE: strided residual encoder with parallel mean / log-variance
// heads, mirrored residual decoder ending in a smoothing conv and tanh.
template <class T>
struct VaeModel {
  VaeConfig cfg;
  std::vector<ResDown<T>> downs;
  Linear<T> mu_head;
  Linear<T> logvar_head;
  Linear<T> dec_fc;
  std::vector<ResUp<T>> ups;
  Conv2d<T> smooth;

  VaeModel() = default;
  VaeModel(const VaeConfig& config, Rng& rng) : cfg(config) {
    if (cfg.image_hw % (1 << cfg.stages()) != 0) {
      throw ConfigError("VaeModel: image size " + std::to_string(cfg.image_hw) +
                        " not divisible by 2^" + std::to_string(cfg.stages()));
    }
    int ch = cfg.in_channels;
    for (int c : cfg.channels) {
      downs.emplace_back(ch, c, rng);
      ch = c;
    }
    const int flat = static_cast<int>(cfg.flat_features());
    mu_head = Linear<T>(flat, cfg.latent_dim, rng);
    logvar_head = Linear<T>(flat, cfg.latent_dim, rng);
    dec_fc = Linear<T>(cfg.latent_dim, flat, rng);
    for (int i = cfg.stages() - 1; i >= 0; --i) {
      const int out_ch = i == 0 ? cfg.in_channels : cfg.channels[static_cast<size_t>(i) - 1];
      ups.emplace_back(cfg.channels[static_cast<size_t>(i)], out_ch, i == 0, rng);
    }
    smooth = Conv2d<T>(cfg.in_channels, cfg.in_channels, 3, 1, 1, rng);
  }

  void check_image(const Tensor<T>& x) const {
    if (x.ndim() != 4 || x.dim(1) != cfg.in_channels || x.dim(2) != cfg.image_hw ||
        x.dim(3) != cfg.image_hw) {
      throw DimensionError("VaeModel: expected images [N," +
                           std::to_string(cfg.in_channels) + "," +
                           std::to_string(cfg.image_hw) + "," +
                           std::to_string(cfg.image_hw) + "], got " +
                           shape_str(x.shape()));
    }
  }

  std::pair<Tensor<T>, Tensor<T>> encode(const Tensor<T>& images, bool training) {
    check_image(images);
    auto h = images;
    for (auto& d : downs) h = d.forward(h, training);
    auto flat = reshape(h, {h.dim(0), static_cast<int>(cfg.flat_features())});
    return {mu_head.forward(flat), logvar_head.forward(flat)};
  }

  Tensor<T> decode(const Tensor<T>& z, bool training) {
    if (z.ndim() != 2 || z.dim(1) != cfg.latent_dim) {
      throw DimensionError("VaeModel::decode: latent " + shape_str(z.shape()) +
                           ", model wants [N," + std::to_string(cfg.latent_dim) + "]");
    }
    auto h = reshape(dec_fc.forward(z),
                     {z.dim(0), cfg.feature_ch(), cfg.feature_hw(), cfg.feature_hw()});
    for (auto& u : ups) h = u.forward(h, training);
    return tanh_(smooth.forward(h));
  }

  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) {
    for (size_t i = 0; i < downs.size(); ++i)
      downs[i].collect(prefix + ".down" + std::to_string(i), out);
    mu_head.collect(prefix + ".mu", out);
    logvar_head.collect(prefix + ".logvar", out);
    dec_fc.collect(prefix + ".dec_fc", out);
    for (size_t i = 0; i < ups.size(); ++i)
      ups[i].collect(prefix + ".up" + std::to_string(i), out);
    smooth.collect(prefix + ".smooth", out);
  }

  void collect_encoder(const std::string& prefix, std::vector<NamedParam<T>>& out) {
    for (size_t i = 0; i < downs.size(); ++i)
      downs[i].collect(prefix + ".down" + std::to_string(i), out);
    mu_head.collect(prefix + ".mu", out);
    logvar_head.collect(prefix + ".logvar", out);
  }

  void collect_decoder(const std::string& prefix, std::vector<NamedParam<T>>& out) {
    dec_fc.collect(prefix + ".dec_fc", out);
    for (size_t i = 0; i < ups.size(); ++i)
      ups[i].collect(prefix + ".up" + std::to_string(i), out);
    smooth.collect(prefix + ".smooth", out);
  }

  void collect_buffers(const std::string& prefix,
                       std::vector<std::pair<std::string, std::vector<T>*>>& out) {
    for (size_t i = 0; i < downs.size(); ++i)
      downs[i].collect_buffers(prefix + ".down" + std::to_string(i), out);
    for (size_t i = 0; i < ups.size(); ++i)
      ups[i].collect_buffers(prefix + ".up" + std::to_string(i), out);
  }
};

// z = mu + exp(0.5 * log_var) .* eps
template <class T>
Tensor<T> reparameterize(const Tensor<T>& mu, const Tensor<T>& log_var,
                         const Tensor<T>& eps) {
  check_same_shape(mu.shape(), log_var.shape(), "reparameterize");
  check_same_shape(mu.shape(), eps.shape(), "reparameterize");
  return add(mu, mul(exp_(scale(log_var, T(0.5))), eps));
}

template <class T>
LatentSample<T> sample_latent(const Tensor<T>& mu, const Tensor<T>& log_var, Rng& rng) {
  auto eps = Tensor<T>::randn(mu.shape(), rng);
  return {mu, log_var, eps, reparameterize(mu, log_var, eps)};
}

// Closed-form KL(N(mu, diag(exp(log_var))) || N(0, I)), per-sample sums
// averaged over the batch: 0.5 * sum_d(mu^2 + sigma^2 - log sigma^2 - 1).
template <class T>
Tensor<T> kl_to_standard_normal(const Tensor<T>& mu, const Tensor<T>& log_var) {
  check_same_shape(mu.shape(), log_var.shape(), "kl_to_standard_normal");
  const int batch = mu.dim(0);
  const int64_t dims = numel(mu.shape()) / batch;
  auto s = add(sum(mul(mu, mu)), sub(sum(exp_(log_var)), sum(log_var)));
  return add_scalar(scale(s, T(0.5) / static_cast<T>(batch)),
                    static_cast<T>(-0.5 * static_cast<double>(dims)));
}

template <class T>
struct VaeLossParts {
  Tensor<T> total;
  Tensor<T> reconstruction;
  Tensor<T> kl;
  LatentSample<T> latent;
  Tensor<T> decoded;
};

// Eq-for-eq VAE objective: batch-mean squared reconstruction error plus
// unweighted KL to the standard normal prior.
template <class T>
VaeLossParts<T> vae_loss(VaeModel<T>& model, const Tensor<T>& batch, Rng& rng,
                         bool training) {
  if (batch.dim(0) < 1) throw ContractError("vae_loss: empty batch");
  auto [mu, log_var] = model.encode(batch, training);
  auto latent = sample_latent(mu, log_var, rng);
  auto decoded = model.decode(latent.z, training);
  auto rec = mse(decoded, batch);
  auto kl = kl_to_standard_normal(mu, log_var);
  return {add(rec, kl), rec, kl, latent, decoded};
}

}  // namespace lst
