#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lst/controller.hpp"
#include "lst/tensor.hpp"

namespace lst {

using TensorF = Tensor<float>;

// ---------------------------------------------------------------------------
// IDX datasets
// ---------------------------------------------------------------------------

struct IdxDataset {
  TensorF images;           // [M,1,H,W], values in [-1,1]
  std::vector<int> labels;  // M entries

  int count() const { return images.dim(0); }
  int hw() const { return images.dim(2); }
  const float* image(int i) const {
    return images.data().data() + static_cast<size_t>(i) * hw() * hw();
  }
};

// Big-endian IDX pair (0x803 images / 0x801 labels); pixels map to [-1,1]
// via v/127.5 - 1.
IdxDataset load_idx(const std::string& images_path, const std::string& labels_path);

void write_idx_images(const std::string& path, const std::vector<uint8_t>& pixels,
                      int count, int rows, int cols);
void write_idx_labels(const std::string& path, const std::vector<uint8_t>& labels);

// ---------------------------------------------------------------------------
// Procedural digit corpus (stand-in when no IDX files are supplied)
// ---------------------------------------------------------------------------

struct DigitCorpusConfig {
  int count = 12000;
  int hw = 28;
  uint64_t seed = 7;
};

// Renders stroke-skeleton glyphs for classes 0-9 with randomized affine pose,
// thickness and intensity. Classes are balanced.
IdxDataset generate_digit_corpus(const DigitCorpusConfig& cfg);

// ---------------------------------------------------------------------------
// Augmentations (single-plane, values in [-1,1])
// ---------------------------------------------------------------------------

// Rotation about the image center, bilinear interpolation, -1 (black) fill.
// Positive theta turns the content counter-clockwise. |theta| <= pi/2.
void rotate_plane(const float* src, float* dst, int h, int w, double theta_rad);
TensorF rotate_image(const TensorF& image, double theta_rad);

// |level| iterations of grayscale dilation (level > 0) or erosion (level < 0)
// with a 3x3 cross structuring element.
void dilate_erode_plane(const float* src, float* dst, int h, int w, int level);
TensorF dilate_erode(const TensorF& image, int level);

// ---------------------------------------------------------------------------
// Augmentation pools and triplets
// ---------------------------------------------------------------------------

struct AugmentedPool {
  ControlKind kind = ControlKind::kRotation;
  int hw = 28;
  std::vector<int> orig_ids;     // selected source indices
  TensorF originals;             // [K,1,H,W]
  TensorF variants;              // [K*V,1,H,W]
  std::vector<float> controls;   // V control values, shared grid
  int variants_per_original = 0;
  bool orbit_includes_original = false;  // dilation pairs may use level 0
  uint64_t content_hash = 0;

  int original_count() const { return static_cast<int>(orig_ids.size()); }
  int orbit_size() const {
    return variants_per_original + (orbit_includes_original ? 1 : 0);
  }
  // orbit member 0..orbit_size()-1; for dilation the original sits at the
  // middle of the level grid
  float orbit_control(int member) const;
  const float* orbit_image(int original, int member) const;
};

// 600 originals (60 per class) x 45 evenly spaced angles inside (-45, 45) deg.
AugmentedPool make_rotation_set(const IdxDataset& ds, uint64_t seed,
                                int originals = 600, int per_class = 60,
                                int augmentations = 45);

// 5000 class-balanced originals x levels {-2,-1,+1,+2}; the level-0 original
// joins the pairing orbit.
AugmentedPool make_dilation_set(const IdxDataset& ds, uint64_t seed,
                                int originals = 5000);

struct TripletBatch {
  TensorF source;  // [N,1,H,W]
  TensorF target;  // [N,1,H,W]
  TensorF theta;   // [N,1] signed control difference
};

// Uniform pairs within one original's orbit; theta = control(target) -
// control(source). Dilation pairs are restricted to |theta| <= 2 so the
// control stays inside the trained range.
TripletBatch sample_triplets(const AugmentedPool& pool, int batch_size, Rng& rng);

// Image sampler over the base dataset merged with a pool's variants, feeding
// the VAE objective.
struct VaeSampler {
  const IdxDataset* base = nullptr;
  const AugmentedPool* pool = nullptr;  // optional

  int64_t total() const;
  TensorF sample_batch(int n, Rng& rng) const;
};

// ---------------------------------------------------------------------------
// Synthetic sequences (desk-scale video stand-in)
// ---------------------------------------------------------------------------

struct SequenceConfig {
  int count = 256;
  int frames = 12;
  int hw = 64;
  int moving_sprites = 2;
  int static_sprites = 3;
  float min_speed = 1.2f;
  float max_speed = 2.6f;
  float min_turn = 0.04f;  // radians per frame, sign randomized
  float max_turn = 0.18f;
  float pan_max = 0.25f;   // camera drift, pixels per frame
  uint64_t seed = 11;
};

struct SequenceSample {
  TensorF frames;                    // [T,1,H,W] in [-1,1]
  std::vector<float> heading;        // primary sprite heading per frame (rad)
  std::vector<uint8_t> motion_mask;  // H*W, union of moving-sprite coverage
};

std::vector<SequenceSample> gen_sequences(const SequenceConfig& cfg);

uint64_t sequences_hash(const std::vector<SequenceSample>& seqs);

// Directory layout: manifest.json plus one raw little-endian f32 frame blob
// and one coverage mask per sequence.
void write_sequences(const std::string& dir, const std::vector<SequenceSample>& seqs,
                     const SequenceConfig& cfg);
std::vector<SequenceSample> load_sequences(const std::string& dir);

// Shared helpers.
uint64_t pool_hash(const AugmentedPool& pool);
uint8_t quantize_pixel(float v);

}  // namespace lst
