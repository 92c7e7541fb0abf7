#pragma once

#include <cstdint>
#include <vector>

#include "lst/rng.hpp"
#include "lst/tensor.hpp"

namespace lst {

// Evaluation-side metrics. Images arrive in [-1,1] and are rescaled to [0,1]
// internally so magnitudes line up with the usual per-pixel MSE convention.

// Mean over all pixels and batch entries of (a-b)^2 on [0,1].
double per_pixel_mse(std::span<const float> a, std::span<const float> b);

// Structural similarity with an 8x8 uniform window, C1 = 0.01^2, C2 = 0.03^2
// on [0,1] intensities. Mean over all full windows (stride 1).
double ssim(std::span<const float> a, std::span<const float> b, int h, int w,
            int window = 8);

struct PatchSet {
  std::vector<std::pair<int, int>> corners;  // row, col
  int size = 20;
};

// Samples `count` size x size patches whose mask coverage is at least
// min_cover (moving) or exactly zero (static when min_cover == 0).
PatchSet sample_patches(const std::vector<uint8_t>& mask, int h, int w, int count,
                        int size, bool moving, Rng& rng, double min_cover = 0.15);

// Per-pixel MSE restricted to the given patches.
double patch_mse(std::span<const float> a, std::span<const float> b, int h, int w,
                 const PatchSet& patches);

}  // namespace lst
