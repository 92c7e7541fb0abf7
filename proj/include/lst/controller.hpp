#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "lst/fern.hpp"
#include "lst/vae.hpp"

namespace lst {

enum class ControlKind { kRotation, kDilation, kTimestep };

inline const char* control_kind_name(ControlKind k) {
  switch (k) {
    case ControlKind::kRotation: return "rotation";
    case ControlKind::kDilation: return "dilation";
    case ControlKind::kTimestep: return "timestep";
  }
  return "?";
}

// Scalar side information steering a traversal. Rotation in radians, dilation
// in integer morphology levels, timestep in frames ahead.
struct ControlSpec {
  ControlKind kind = ControlKind::kRotation;
  double value = 0.0;

  // In-distribution ranges seen during training; outside values still
  // evaluate (sweeps may extrapolate) but callers surface a warning.
  bool in_range() const {
    switch (kind) {
      case ControlKind::kRotation: return value >= -M_PI / 4 && value <= M_PI / 4;
      case ControlKind::kDilation: return value >= -2.0 && value <= 2.0;
      case ControlKind::kTimestep: return value >= 1.0 && value <= 5.0;
    }
    return false;
  }
};

// Residual traversal controller: predicted latent = last latent plus the
// transformer network applied to the concatenated latent history and the
// control variable.
template <class T>
struct ControllerModule {
  TransformerNetwork<T> tn;
  int latent_dim = 0;
  int history_len = 1;
  int control_width = 1;

  ControllerModule() = default;
  ControllerModule(int latent_dim_, int history_len_, int hidden, int decision_width,
                   int n_blocks, Rng& rng)
      : tn(latent_dim_ * history_len_ + 1, hidden, decision_width, n_blocks,
           latent_dim_, rng),
        latent_dim(latent_dim_),
        history_len(history_len_) {}

  // z_history: oldest..newest, each [N, latent_dim]; theta: [N, 1].
  Tensor<T> control_step(const std::vector<Tensor<T>>& z_history,
                         const Tensor<T>& theta, bool training) {
    return step_impl(z_history, theta, training, nullptr);
  }

  // Also exposes the transformer's penultimate activation for the scalar
  // regression head.
  Tensor<T> control_step_with_features(const std::vector<Tensor<T>>& z_history,
                                       const Tensor<T>& theta, bool training,
                                       Tensor<T>& features_out) {
    return step_impl(z_history, theta, training, &features_out);
  }

  int64_t param_count() const { return tn.param_count(); }

  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) {
    tn.collect(prefix + ".tn", out);
  }
  void collect_buffers(const std::string& prefix,
                       std::vector<std::pair<std::string, std::vector<T>*>>& out) {
    tn.collect_buffers(prefix + ".tn", out);
  }

 private:
  Tensor<T> step_impl(const std::vector<Tensor<T>>& z_history, const Tensor<T>& theta,
                      bool training, Tensor<T>* features_out) {
    if (static_cast<int>(z_history.size()) != history_len) {
      throw ContractError("control_step: history length " +
                          std::to_string(z_history.size()) + ", controller wants " +
                          std::to_string(history_len));
    }
    for (const auto& z : z_history) {
      if (z.ndim() != 2 || z.dim(1) != latent_dim) {
        throw ContractError("control_step: latent " + shape_str(z.shape()) +
                            ", controller wants [N," + std::to_string(latent_dim) +
                            "]");
      }
    }
    if (theta.ndim() != 2 || theta.dim(1) != control_width ||
        theta.dim(0) != z_history.back().dim(0)) {
      throw ContractError("control_step: control input " + shape_str(theta.shape()) +
                          " does not match batch");
    }
    std::vector<Tensor<T>> parts = z_history;
    parts.push_back(theta);
    auto features = tn.penultimate(concat(parts, 1), training);
    if (features_out) *features_out = features;
    return add(z_history.back(), tn.output_map.forward(features));
  }
};

// Sequential application of independently trained controllers in one shared
// latent space.
template <class T>
Tensor<T> compose_controllers(std::vector<ControllerModule<T>*> ctrls,
                              const std::vector<ControlSpec>& specs, Tensor<T> z,
                              bool training = false) {
  if (ctrls.size() != specs.size()) {
    throw ContractError("compose_controllers: " + std::to_string(ctrls.size()) +
                        " controllers but " + std::to_string(specs.size()) + " specs");
  }
  for (size_t i = 0; i < ctrls.size(); ++i) {
    if (ctrls[i]->latent_dim != (z.ndim() == 2 ? z.dim(1) : -1)) {
      throw ContractError("compose_controllers: controller " + std::to_string(i) +
                          " latent dim " + std::to_string(ctrls[i]->latent_dim) +
                          " does not match z " + shape_str(z.shape()));
    }
    auto theta =
        Tensor<T>::full({z.dim(0), 1}, static_cast<T>(specs[i].value));
    std::vector<Tensor<T>> history(static_cast<size_t>(ctrls[i]->history_len), z);
    z = ctrls[i]->control_step(history, theta, training);
  }
  return z;
}

// Controller objective: batch-mean squared latent error against the target
// encoding mean.
template <class T>
Tensor<T> latent_loss(const Tensor<T>& z_target, const Tensor<T>& z_hat) {
  return mse(z_hat, z_target);
}

// Predicted-image objective; callers detach the encoder side so its gradient
// reaches only controller and decoder.
template <class T>
Tensor<T> image_loss(const Tensor<T>& image_target, const Tensor<T>& image_hat) {
  return mse(image_hat, image_target);
}

// Single-value regression head over the transformer's penultimate features.
template <class T>
struct ScalarHead {
  Linear<T> fc;

  ScalarHead() = default;
  ScalarHead(int feature_width, Rng& rng, bool zero_init = true)
      : fc(feature_width, 1, rng, zero_init) {}

  Tensor<T> forward(const Tensor<T>& features) const { return fc.forward(features); }

  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) {
    fc.collect(prefix + ".fc", out);
  }
};

}  // namespace lst
