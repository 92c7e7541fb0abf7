#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "lst/nn.hpp"

namespace lst {

// ---------------------------------------------------------------------------
// Scalar depth-2 soft-fern math
// ---------------------------------------------------------------------------

// Soft routing decision: sigmoid of the activation biased by its threshold.
template <class T>
T soft_decision(T x_n, T t_n) {
  return T(1) / (T(1) + std::exp(-(x_n - t_n)));
}

// Leaf-enumerated output of a depth-2 fern. p0, p1 are the routing
// probabilities of the two decisions; leaves ordered q0..q3 with q0 the
// (p0, p1) route and q3 the ((1-p0), (1-p1)) route.
template <class T>
T fern_enumerate(const std::array<T, 4>& q, T p0, T p1) {
  if (p0 < T(0) || p0 > T(1) || p1 < T(0) || p1 > T(1)) {
    throw ContractError("fern_enumerate: routing probabilities must lie in [0,1]");
  }
  return q[0] * p0 * p1 + q[1] * p0 * (T(1) - p1) + q[2] * (T(1) - p0) * p1 +
         q[3] * (T(1) - p0) * (T(1) - p1);
}

// Coefficients of the bilinear form Q = bias + d0*first + d1*second +
// d0*d1*interaction over tanh decisions d in (-1,1). The pairing is fixed by
// expanding the enumerated form under p = (1+d)/2: `first` multiplies d0 and
// carries (q0+q1-q2-q3)/4, `second` multiplies d1 and carries (q0-q1+q2-q3)/4.
template <class T>
struct FernCoeffs {
  T bias;
  T first;
  T second;
  T interaction;
};

template <class T>
FernCoeffs<T> fern_coeffs_from_leaves(const std::array<T, 4>& q) {
  constexpr T inv = T(1) / T(4);  // 1 / 2^h, h = 2
  return {(q[0] + q[1] + q[2] + q[3]) * inv, (q[0] + q[1] - q[2] - q[3]) * inv,
          (q[0] - q[1] + q[2] - q[3]) * inv, (q[0] - q[1] - q[2] + q[3]) * inv};
}

template <class T>
std::array<T, 4> fern_leaves_from_coeffs(const FernCoeffs<T>& c) {
  return {c.bias + c.first + c.second + c.interaction,
          c.bias + c.first - c.second - c.interaction,
          c.bias - c.first + c.second - c.interaction,
          c.bias - c.first - c.second + c.interaction};
}

// Reparameterized depth-2 fern over decisions d0, d1 in (-1,1).
template <class T>
T fern_reparam(const FernCoeffs<T>& c, T d0, T d1) {
  return c.bias + d0 * c.first + d1 * c.second + d0 * d1 * c.interaction;
}

// ---------------------------------------------------------------------------
// Fern ensemble as four linear maps
// ---------------------------------------------------------------------------

// A bank of M depth-2 ferns with vector leaves, written as four linear maps
// over the decision activations: out = bias_map(1) + first_map(d0) +
// second_map(d1) + interaction_map(d0 .* d1). Each map takes the
// decision-activation width M to the output width.
template <class T>
struct FernEnsemble {
  Tensor<T> bias_map;         // [M, out]
  Tensor<T> first_map;        // [M, out]
  Tensor<T> second_map;       // [M, out]
  Tensor<T> interaction_map;  // [M, out]

  FernEnsemble() = default;
  FernEnsemble(int ferns, int out, Rng& rng, bool zero_init = false) {
    auto mk = [&] {
      return zero_init ? init_zeros<T>({ferns, out})
                       : init_weight<T>({ferns, out}, 3 * ferns, rng);
    };
    bias_map = mk();
    first_map = mk();
    second_map = mk();
    interaction_map = mk();
  }

  int fern_count() const { return bias_map.dim(0); }
  int out_dim() const { return bias_map.dim(1); }

  // d0, d1: [N, M] tanh decision activations.
  Tensor<T> forward(const Tensor<T>& d0, const Tensor<T>& d1) const {
    check_same_shape(d0.shape(), d1.shape(), "FernEnsemble::forward");
    if (d0.dim(1) != fern_count()) {
      throw DimensionError("FernEnsemble::forward: got " + shape_str(d0.shape()) +
                           ", ensemble has " + std::to_string(fern_count()) +
                           " ferns");
    }
    auto ones = Tensor<T>::ones({d0.dim(0), fern_count()});
    auto out = matmul(ones, bias_map);
    out = add(out, matmul(d0, first_map));
    out = add(out, matmul(d1, second_map));
    out = add(out, matmul(mul(d0, d1), interaction_map));
    return out;
  }

  // Oracle view: leaves of fern m for output o, enumerated routing. Used by
  // tests to pin the equivalence between the linear-map form and per-fern
  // leaf enumeration.
  std::array<T, 4> leaves(int m, int o) const {
    const int out = out_dim();
    const FernCoeffs<T> c{bias_map[static_cast<size_t>(m) * out + o],
                          first_map[static_cast<size_t>(m) * out + o],
                          second_map[static_cast<size_t>(m) * out + o],
                          interaction_map[static_cast<size_t>(m) * out + o]};
    return fern_leaves_from_coeffs(c);
  }

  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) {
    out.push_back({prefix + ".bias_map", bias_map});
    out.push_back({prefix + ".first_map", first_map});
    out.push_back({prefix + ".second_map", second_map});
    out.push_back({prefix + ".interaction_map", interaction_map});
  }
};

// ---------------------------------------------------------------------------
// Fern block: the residual-branch unit of the transformer network
// ---------------------------------------------------------------------------

// Pipeline: pre-decision linear -> batch norm -> tanh -> split into halves
// (d_a, d_b) -> elementwise product -> concat [d_a, d_b, d_a.*d_b] ->
// interpretation linear. Decision thresholds live in the pre-decision bias.
// With decision width D this realizes D/2 depth-2 ferns; the interpretation
// map's blocks over [d_a | d_b | product] are the first/second/interaction
// maps of the ensemble and its bias vector the summed bias leaves.
template <class T>
struct FernBlock {
  Linear<T> pre_decision;
  BatchNorm<T> norm;
  Linear<T> interpretation;
  int decision_width = 0;

  FernBlock() = default;
  FernBlock(int in_width, int decision_width_, int out_width, Rng& rng,
            bool zero_interpretation = true)
      : pre_decision(in_width, decision_width_, rng),
        norm(decision_width_),
        interpretation(decision_width_ / 2 * 3, out_width, rng, zero_interpretation),
        decision_width(decision_width_) {
    if (decision_width_ % 2 != 0) {
      throw ConfigError("FernBlock: decision width " + std::to_string(decision_width_) +
                        " must be even");
    }
  }

  int fern_count() const { return decision_width / 2; }

  Tensor<T> forward(const Tensor<T>& x, bool training) {
    if (x.ndim() != 2 || x.dim(1) != pre_decision.in_dim()) {
      throw ConfigError("FernBlock::forward: input " + shape_str(x.shape()) +
                        " does not match block width " +
                        std::to_string(pre_decision.in_dim()));
    }
    auto decisions = tanh_(norm.forward(pre_decision.forward(x), training));
    auto halves = split(decisions, 1, 2);
    auto conditioned = mul(halves[0], halves[1]);
    auto all = concat<T>({halves[0], halves[1], conditioned}, 1);
    return interpretation.forward(all);
  }

  int64_t param_count() const {
    return pre_decision.param_count() + norm.param_count() +
           interpretation.param_count();
  }

  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) {
    pre_decision.collect(prefix + ".pre", out);
    norm.collect(prefix + ".norm", out);
    interpretation.collect(prefix + ".interp", out);
  }

  void collect_buffers(const std::string& prefix,
                       std::vector<std::pair<std::string, std::vector<T>*>>& out) {
    norm.collect_buffers(prefix + ".norm", out);
  }
};

// ---------------------------------------------------------------------------
// Transformer network: residual feedforward stack of fern blocks
// ---------------------------------------------------------------------------

template <class T>
struct TransformerNetwork {
  Linear<T> input_map;
  std::vector<FernBlock<T>> blocks;
  Linear<T> output_map;
  int hidden = 0;

  TransformerNetwork() = default;

  // The output map is zero-initialized by default so a fresh network emits
  // exactly zero; a controller built on top starts as the identity.
  TransformerNetwork(int in_width, int hidden_, int decision_width, int n_blocks,
                     int out_width, Rng& rng, bool zero_output = true)
      : input_map(in_width, hidden_, rng),
        output_map(hidden_, out_width, rng, zero_output),
        hidden(hidden_) {
    blocks.reserve(static_cast<size_t>(n_blocks));
    for (int i = 0; i < n_blocks; ++i)
      blocks.emplace_back(hidden_, decision_width, hidden_, rng);
  }

  Tensor<T> forward(const Tensor<T>& x, bool training) {
    return output_map.forward(penultimate(x, training));
  }

  // Hidden state after the residual stack; the scalar regression head taps
  // this.
  Tensor<T> penultimate(const Tensor<T>& x, bool training) {
    if (x.ndim() != 2 || x.dim(1) != input_map.in_dim()) {
      throw ConfigError("TransformerNetwork: input " + shape_str(x.shape()) +
                        " does not match configured width " +
                        std::to_string(input_map.in_dim()));
    }
    auto h = input_map.forward(x);
    for (auto& block : blocks) h = add(h, block.forward(h, training));
    return h;
  }

  int in_dim() const { return input_map.in_dim(); }
  int out_dim() const { return output_map.out_dim(); }

  int64_t param_count() const {
    int64_t n = input_map.param_count() + output_map.param_count();
    for (const auto& b : blocks) n += b.param_count();
    return n;
  }

  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) {
    input_map.collect(prefix + ".input", out);
    for (size_t i = 0; i < blocks.size(); ++i)
      blocks[i].collect(prefix + ".block" + std::to_string(i), out);
    output_map.collect(prefix + ".output", out);
  }

  void collect_buffers(const std::string& prefix,
                       std::vector<std::pair<std::string, std::vector<T>*>>& out) {
    for (size_t i = 0; i < blocks.size(); ++i)
      blocks[i].collect_buffers(prefix + ".block" + std::to_string(i), out);
  }
};

}  // namespace lst
