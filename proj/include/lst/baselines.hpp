#pragma once

#include <cstdlib>
#include <vector>

#include "lst/controller.hpp"
#include "lst/nn.hpp"

namespace lst {

// Feedforward ablation of the fern controller: 4 FC layers with ReLU between,
// hidden width solved so total parameters match a given budget. Applied
// residually like the fern controller unless the skip is disabled.
template <class T>
struct LinearController {
  std::vector<Linear<T>> layers;
  int latent_dim = 0;
  int history_len = 1;
  bool residual_skip = true;

  LinearController() = default;
  LinearController(int latent_dim_, int history_len_, int hidden, Rng& rng,
                   bool residual_skip_ = true, bool zero_output = true)
      : latent_dim(latent_dim_), history_len(history_len_),
        residual_skip(residual_skip_) {
    const int in = latent_dim_ * history_len_ + 1;
    layers.emplace_back(in, hidden, rng);
    layers.emplace_back(hidden, hidden, rng);
    layers.emplace_back(hidden, hidden, rng);
    layers.emplace_back(hidden, latent_dim_, rng, zero_output);
  }

  // Smallest hidden width whose 4-layer parameter count reaches the target;
  // used to match the fern controller's capacity.
  static int solve_hidden(int latent_dim, int history_len, int64_t target_params) {
    const int in = latent_dim * history_len + 1;
    auto count = [&](int64_t h) {
      return (in * h + h) + 2 * (h * h + h) + (h * latent_dim + latent_dim);
    };
    int lo = 1, hi = 1;
    while (count(hi) < target_params) hi *= 2;
    while (lo < hi) {
      const int mid = (lo + hi) / 2;
      if (count(mid) < target_params) lo = mid + 1;
      else hi = mid;
    }
    // Pick whichever neighbor lands closer to the budget.
    if (lo > 1 && std::llabs(count(lo - 1) - target_params) <
                      std::llabs(count(lo) - target_params)) {
      return lo - 1;
    }
    return lo;
  }

  Tensor<T> forward(const std::vector<Tensor<T>>& z_history, const Tensor<T>& theta,
                    bool /*training*/) {
    if (static_cast<int>(z_history.size()) != history_len) {
      throw ContractError("LinearController: history length " +
                          std::to_string(z_history.size()) + ", wants " +
                          std::to_string(history_len));
    }
    std::vector<Tensor<T>> parts = z_history;
    parts.push_back(theta);
    auto h = concat(parts, 1);
    for (size_t i = 0; i < layers.size(); ++i) {
      h = layers[i].forward(h);
      if (i + 1 < layers.size()) h = relu(h);
    }
    return residual_skip ? add(z_history.back(), h) : h;
  }

  int64_t param_count() const {
    int64_t n = 0;
    for (const auto& l : layers) n += l.param_count();
    return n;
  }

  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) {
    for (size_t i = 0; i < layers.size(); ++i)
      layers[i].collect(prefix + ".fc" + std::to_string(i), out);
  }
};

// Direct image-to-image baseline: 2 strided 3x3 convs, 2 FC layers with the
// control variable concatenated at the bottleneck, 2 strided 3x3 transposed
// convs. ReLU after every hidden layer, constant 128 hidden channels.
template <class T>
struct CnnBaseline {
  Conv2d<T> conv1, conv2;
  Linear<T> fc1, fc2;
  ConvTranspose2d<T> dec1, dec2;
  int image_hw = 28;
  int in_channels = 1;
  int hidden_ch = 128;
  int fc_width = 128;

  CnnBaseline() = default;
  CnnBaseline(int image_hw_, int in_channels_, Rng& rng, int hidden_ch_ = 128,
              int fc_width_ = 128)
      : conv1(in_channels_, hidden_ch_, 3, 2, 1, rng),
        conv2(hidden_ch_, hidden_ch_, 3, 2, 1, rng),
        image_hw(image_hw_), in_channels(in_channels_), hidden_ch(hidden_ch_),
        fc_width(fc_width_) {
    if (image_hw_ % 4 != 0) {
      throw ConfigError("CnnBaseline: image size " + std::to_string(image_hw_) +
                        " must be divisible by 4");
    }
    const int flat = hidden_ch_ * (image_hw_ / 4) * (image_hw_ / 4);
    fc1 = Linear<T>(flat + 1, fc_width_, rng);
    fc2 = Linear<T>(fc_width_, flat, rng);
    dec1 = ConvTranspose2d<T>(hidden_ch_, hidden_ch_, 3, 2, 1, 1, rng);
    dec2 = ConvTranspose2d<T>(hidden_ch_, in_channels_, 3, 2, 1, 1, rng);
  }

  Tensor<T> forward(const Tensor<T>& images, const Tensor<T>& theta) {
    if (images.ndim() != 4 || images.dim(2) != image_hw || images.dim(3) != image_hw) {
      throw DimensionError("CnnBaseline: images " + shape_str(images.shape()) +
                           ", model wants " + std::to_string(image_hw) + "x" +
                           std::to_string(image_hw));
    }
    const int n = images.dim(0);
    const int q = image_hw / 4;
    auto h = relu(conv1.forward(images));
    h = relu(conv2.forward(h));
    auto flat = reshape(h, {n, hidden_ch * q * q});
    auto joined = concat<T>({flat, theta}, 1);
    auto b = relu(fc1.forward(joined));
    b = relu(fc2.forward(b));
    auto g = reshape(b, {n, hidden_ch, q, q});
    g = relu(dec1.forward(g));
    return dec2.forward(g);
  }

  int64_t param_count() const {
    return conv1.param_count() + conv2.param_count() + fc1.param_count() +
           fc2.param_count() + dec1.param_count() + dec2.param_count();
  }

  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) {
    conv1.collect(prefix + ".conv1", out);
    conv2.collect(prefix + ".conv2", out);
    fc1.collect(prefix + ".fc1", out);
    fc2.collect(prefix + ".fc2", out);
    dec1.collect(prefix + ".dec1", out);
    dec2.collect(prefix + ".dec2", out);
  }
};

// Trivial prediction baseline: most recent frame, independent of horizon.
template <class T>
Tensor<T> copy_last_frame(const std::vector<Tensor<T>>& frames) {
  if (frames.empty()) throw ContractError("copy_last_frame: no frames");
  return frames.back();
}

}  // namespace lst
