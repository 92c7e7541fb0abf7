#include "lst/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace lst {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// IDX
// ---------------------------------------------------------------------------

namespace {

uint32_t read_be32(const std::vector<uint8_t>& buf, size_t off, const std::string& path) {
  if (off + 4 > buf.size()) {
    throw FormatError(path + ": truncated at byte " + std::to_string(off));
  }
  return (static_cast<uint32_t>(buf[off]) << 24) |
         (static_cast<uint32_t>(buf[off + 1]) << 16) |
         (static_cast<uint32_t>(buf[off + 2]) << 8) | static_cast<uint32_t>(buf[off + 3]);
}

void write_be32(std::ofstream& os, uint32_t v) {
  const uint8_t b[4] = {static_cast<uint8_t>(v >> 24), static_cast<uint8_t>(v >> 16),
                        static_cast<uint8_t>(v >> 8), static_cast<uint8_t>(v)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path);
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(is),
                              std::istreambuf_iterator<char>());
}

}  // namespace

uint8_t quantize_pixel(float v) {
  const float u = (v + 1.0f) * 127.5f;
  return static_cast<uint8_t>(std::clamp(std::lround(u), 0l, 255l));
}

IdxDataset load_idx(const std::string& images_path, const std::string& labels_path) {
  const auto ibuf = read_file(images_path);
  if (read_be32(ibuf, 0, images_path) != 0x00000803u) {
    throw FormatError(images_path + ": bad magic at byte 0, want 0x00000803");
  }
  const uint32_t m = read_be32(ibuf, 4, images_path);
  const uint32_t rows = read_be32(ibuf, 8, images_path);
  const uint32_t cols = read_be32(ibuf, 12, images_path);
  const size_t want = 16 + static_cast<size_t>(m) * rows * cols;
  if (ibuf.size() < want) {
    throw FormatError(images_path + ": truncated at byte " +
                      std::to_string(ibuf.size()) + ", want " + std::to_string(want));
  }

  const auto lbuf = read_file(labels_path);
  if (read_be32(lbuf, 0, labels_path) != 0x00000801u) {
    throw FormatError(labels_path + ": bad magic at byte 0, want 0x00000801");
  }
  const uint32_t lm = read_be32(lbuf, 4, labels_path);
  if (lm != m) {
    throw FormatError(labels_path + ": label count " + std::to_string(lm) +
                      " disagrees with image count " + std::to_string(m));
  }
  if (lbuf.size() < 8 + static_cast<size_t>(m)) {
    throw FormatError(labels_path + ": truncated at byte " + std::to_string(lbuf.size()));
  }

  std::vector<float> px(static_cast<size_t>(m) * rows * cols);
  for (size_t i = 0; i < px.size(); ++i)
    px[i] = static_cast<float>(ibuf[16 + i]) / 127.5f - 1.0f;

  IdxDataset ds;
  ds.images = TensorF::from(
      {static_cast<int>(m), 1, static_cast<int>(rows), static_cast<int>(cols)},
      std::move(px));
  ds.labels.resize(m);
  for (uint32_t i = 0; i < m; ++i) ds.labels[i] = lbuf[8 + i];
  return ds;
}

void write_idx_images(const std::string& path, const std::vector<uint8_t>& pixels,
                      int count, int rows, int cols) {
  if (pixels.size() != static_cast<size_t>(count) * rows * cols) {
    throw DataError("write_idx_images: pixel buffer does not match dimensions");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path);
  write_be32(os, 0x00000803u);
  write_be32(os, static_cast<uint32_t>(count));
  write_be32(os, static_cast<uint32_t>(rows));
  write_be32(os, static_cast<uint32_t>(cols));
  os.write(reinterpret_cast<const char*>(pixels.data()),
           static_cast<std::streamsize>(pixels.size()));
}

void write_idx_labels(const std::string& path, const std::vector<uint8_t>& labels) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path);
  write_be32(os, 0x00000801u);
  write_be32(os, static_cast<uint32_t>(labels.size()));
  os.write(reinterpret_cast<const char*>(labels.data()),
           static_cast<std::streamsize>(labels.size()));
}

// ---------------------------------------------------------------------------
// Digit corpus
// ---------------------------------------------------------------------------

namespace {

struct Pt {
  double x, y;
};
using Stroke = std::vector<Pt>;

void arc(Stroke& s, double cx, double cy, double rx, double ry, double a0_deg,
         double a1_deg, int n = 24) {
  for (int i = 0; i <= n; ++i) {
    const double a = (a0_deg + (a1_deg - a0_deg) * i / n) * M_PI / 180.0;
    s.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
  }
}

// Unit-square stroke skeletons, x right, y down.
std::vector<Stroke> digit_skeleton(int d) {
  std::vector<Stroke> out;
  Stroke s;
  switch (d) {
    case 0:
      arc(s, 0.5, 0.5, 0.26, 0.36, 0, 360, 40);
      out.push_back(s);
      break;
    case 1:
      out.push_back({{0.40, 0.26}, {0.55, 0.12}});
      out.push_back({{0.55, 0.12}, {0.55, 0.88}});
      break;
    case 2:
      arc(s, 0.5, 0.34, 0.24, 0.21, 180, 355);
      out.push_back(s);
      out.push_back({{0.73, 0.37}, {0.26, 0.85}});
      out.push_back({{0.26, 0.85}, {0.76, 0.85}});
      break;
    case 3: {
      Stroke a1, a2;
      arc(a1, 0.46, 0.30, 0.22, 0.18, -140, 90);
      arc(a2, 0.46, 0.67, 0.24, 0.20, -90, 140);
      out.push_back(a1);
      out.push_back(a2);
      break;
    }
    case 4:
      out.push_back({{0.60, 0.12}, {0.22, 0.60}});
      out.push_back({{0.22, 0.60}, {0.80, 0.60}});
      out.push_back({{0.62, 0.34}, {0.62, 0.88}});
      break;
    case 5:
      out.push_back({{0.72, 0.13}, {0.32, 0.13}});
      out.push_back({{0.32, 0.13}, {0.30, 0.46}});
      arc(s, 0.47, 0.65, 0.24, 0.22, -90, 150);
      out.push_back(s);
      break;
    case 6:
      out.push_back({{0.62, 0.12}, {0.45, 0.24}, {0.33, 0.42}, {0.29, 0.62}});
      arc(s, 0.49, 0.65, 0.20, 0.21, 0, 360, 32);
      out.push_back(s);
      break;
    case 7:
      out.push_back({{0.25, 0.14}, {0.75, 0.14}});
      out.push_back({{0.75, 0.14}, {0.42, 0.88}});
      break;
    case 8: {
      Stroke a1, a2;
      arc(a1, 0.5, 0.30, 0.17, 0.17, 0, 360, 32);
      arc(a2, 0.5, 0.67, 0.21, 0.21, 0, 360, 32);
      out.push_back(a1);
      out.push_back(a2);
      break;
    }
    case 9:
      arc(s, 0.52, 0.33, 0.19, 0.19, 0, 360, 32);
      out.push_back(s);
      out.push_back({{0.71, 0.35}, {0.68, 0.60}, {0.56, 0.88}});
      break;
    default:
      throw ParameterError("digit_skeleton: class out of range");
  }
  return out;
}

double point_segment_dist(double px, double py, const Pt& a, const Pt& b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((px - a.x) * vx + (py - a.y) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = px - (a.x + t * vx), dy = py - (a.y + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

}  // namespace

IdxDataset generate_digit_corpus(const DigitCorpusConfig& cfg) {
  Rng rng(cfg.seed);
  const int hw = cfg.hw;
  std::vector<uint8_t> pixels(static_cast<size_t>(cfg.count) * hw * hw);
  std::vector<uint8_t> labels(static_cast<size_t>(cfg.count));

  for (int i = 0; i < cfg.count; ++i) {
    const int cls = i % 10;
    labels[static_cast<size_t>(i)] = static_cast<uint8_t>(cls);
    auto strokes = digit_skeleton(cls);

    // randomized pose
    const double rot = rng.uniform(-0.12, 0.12);
    const double shear = rng.uniform(-0.18, 0.18);
    const double sx = rng.uniform(0.85, 1.12);
    const double sy = rng.uniform(0.85, 1.12);
    const double tx = rng.uniform(-0.06, 0.06);
    const double ty = rng.uniform(-0.05, 0.05);
    const double thick = rng.uniform(0.042, 0.062);
    const double gain = rng.uniform(0.82, 1.0);
    const double cr = std::cos(rot), sr = std::sin(rot);
    for (auto& s : strokes)
      for (auto& p : s) {
        double x = p.x - 0.5, y = p.y - 0.5;
        x += shear * y;
        x *= sx;
        y *= sy;
        const double xr = cr * x - sr * y, yr = sr * x + cr * y;
        p.x = 0.5 + xr + tx;
        p.y = 0.5 + yr + ty;
      }

    float* img = nullptr;
    std::vector<float> plane(static_cast<size_t>(hw) * hw, 0.0f);
    img = plane.data();
    const double aa = 0.70 / hw;  // antialias band, ~0.7 px
    for (int r = 0; r < hw; ++r)
      for (int c = 0; c < hw; ++c) {
        const double py = (r + 0.5) / hw, px = (c + 0.5) / hw;
        double best = 1e9;
        for (const auto& s : strokes)
          for (size_t k = 0; k + 1 < s.size(); ++k)
            best = std::min(best, point_segment_dist(px, py, s[k], s[k + 1]));
        const double v = std::clamp((thick - best) / aa + 0.5, 0.0, 1.0) * gain;
        img[static_cast<size_t>(r) * hw + c] = static_cast<float>(v);
      }
    for (size_t p = 0; p < plane.size(); ++p) {
      const double noisy = plane[p] + rng.uniform(-0.02, 0.02);
      pixels[static_cast<size_t>(i) * hw * hw + p] = static_cast<uint8_t>(
          std::clamp(std::lround(noisy * 255.0), 0l, 255l));
    }
  }

  std::vector<float> px(pixels.size());
  for (size_t i = 0; i < pixels.size(); ++i)
    px[i] = static_cast<float>(pixels[i]) / 127.5f - 1.0f;
  IdxDataset ds;
  ds.images = TensorF::from({cfg.count, 1, hw, hw}, std::move(px));
  ds.labels.assign(labels.begin(), labels.end());
  return ds;
}

// ---------------------------------------------------------------------------
// Plane augmentations
// ---------------------------------------------------------------------------

void rotate_plane(const float* src, float* dst, int h, int w, double theta_rad) {
  if (std::abs(theta_rad) > M_PI / 2 + 1e-9) {
    throw ParameterError("rotate_plane: |theta| must not exceed pi/2");
  }
  const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  // Inverse map: sample the source at the backward-rotated coordinate. With
  // y pointing down, positive theta turns content counter-clockwise on
  // screen.
  const double c = std::cos(theta_rad), s = std::sin(theta_rad);
  for (int r = 0; r < h; ++r)
    for (int col = 0; col < w; ++col) {
      const double dy = r - cy, dx = col - cx;
      const double sx = c * dx - s * dy + cx;
      const double sy = s * dx + c * dy + cy;
      float v = -1.0f;
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      if (x0 >= -1 && x0 <= w - 1 && y0 >= -1 && y0 <= h - 1) {
        const double fx = sx - x0, fy = sy - y0;
        auto at = [&](int yy, int xx) -> double {
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) return -1.0;
          return src[static_cast<size_t>(yy) * w + xx];
        };
        v = static_cast<float>((1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
                               fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1)));
      }
      dst[static_cast<size_t>(r) * w + col] = v;
    }
}

TensorF rotate_image(const TensorF& image, double theta_rad) {
  const auto& s = image.shape();
  if (s.size() < 2) throw DimensionError("rotate_image: need a 2-d plane");
  const int w = s.back(), h = s[s.size() - 2];
  if (numel(s) != static_cast<int64_t>(h) * w) {
    throw DimensionError("rotate_image: expects a single plane, got " + shape_str(s));
  }
  std::vector<float> out(static_cast<size_t>(h) * w);
  rotate_plane(image.data().data(), out.data(), h, w, theta_rad);
  return TensorF::from(s, std::move(out));
}

void dilate_erode_plane(const float* src, float* dst, int h, int w, int level) {
  const int iters = std::abs(level);
  std::vector<float> cur(src, src + static_cast<size_t>(h) * w);
  std::vector<float> next(cur.size());
  for (int it = 0; it < iters; ++it) {
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        // 3x3 cross; out-of-bounds neighbors do not participate
        float v = cur[static_cast<size_t>(r) * w + c];
        auto consider = [&](int rr, int cc) {
          if (rr < 0 || rr >= h || cc < 0 || cc >= w) return;
          const float n = cur[static_cast<size_t>(rr) * w + cc];
          v = level > 0 ? std::max(v, n) : std::min(v, n);
        };
        consider(r - 1, c);
        consider(r + 1, c);
        consider(r, c - 1);
        consider(r, c + 1);
        next[static_cast<size_t>(r) * w + c] = v;
      }
    cur.swap(next);
  }
  std::copy(cur.begin(), cur.end(), dst);
}

TensorF dilate_erode(const TensorF& image, int level) {
  const auto& s = image.shape();
  const int w = s.back(), h = s[s.size() - 2];
  if (numel(s) != static_cast<int64_t>(h) * w) {
    throw DimensionError("dilate_erode: expects a single plane, got " + shape_str(s));
  }
  std::vector<float> out(static_cast<size_t>(h) * w);
  dilate_erode_plane(image.data().data(), out.data(), h, w, level);
  return TensorF::from(s, std::move(out));
}

// ---------------------------------------------------------------------------
// Pools
// ---------------------------------------------------------------------------

uint64_t pool_hash(const AugmentedPool& pool) {
  uint64_t h = fnv1a(pool.orig_ids.data(), pool.orig_ids.size() * sizeof(int));
  h = fnv1a(pool.variants.data().data(), pool.variants.size() * sizeof(float), h);
  h = fnv1a(pool.controls.data(), pool.controls.size() * sizeof(float), h);
  return h;
}

float AugmentedPool::orbit_control(int member) const {
  if (!orbit_includes_original) return controls[static_cast<size_t>(member)];
  // level grid with the original spliced in at control 0
  std::vector<float> grid = controls;
  grid.push_back(0.0f);
  std::sort(grid.begin(), grid.end());
  return grid[static_cast<size_t>(member)];
}

const float* AugmentedPool::orbit_image(int original, int member) const {
  const size_t plane = static_cast<size_t>(hw) * hw;
  if (!orbit_includes_original) {
    return variants.data().data() +
           (static_cast<size_t>(original) * variants_per_original + member) * plane;
  }
  const float ctrl = orbit_control(member);
  if (ctrl == 0.0f) return originals.data().data() + static_cast<size_t>(original) * plane;
  // locate the variant with this control value
  for (int v = 0; v < variants_per_original; ++v) {
    if (controls[static_cast<size_t>(v)] == ctrl) {
      return variants.data().data() +
             (static_cast<size_t>(original) * variants_per_original + v) * plane;
    }
  }
  throw DataError("orbit_image: control value not present");
}

namespace {

std::vector<int> pick_balanced(const IdxDataset& ds, int per_class, Rng& rng) {
  std::vector<std::vector<int>> by_class(10);
  for (int i = 0; i < ds.count(); ++i) by_class[static_cast<size_t>(ds.labels[i])].push_back(i);
  std::vector<int> chosen;
  for (int c = 0; c < 10; ++c) {
    auto& ids = by_class[static_cast<size_t>(c)];
    if (static_cast<int>(ids.size()) < per_class) {
      throw DataError("class " + std::to_string(c) + " has " +
                      std::to_string(ids.size()) + " samples, need " +
                      std::to_string(per_class));
    }
    // Fisher-Yates prefix
    for (int k = 0; k < per_class; ++k) {
      const int j = rng.uniform_int(k, static_cast<int>(ids.size()) - 1);
      std::swap(ids[static_cast<size_t>(k)], ids[static_cast<size_t>(j)]);
      chosen.push_back(ids[static_cast<size_t>(k)]);
    }
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

}  // namespace

AugmentedPool make_rotation_set(const IdxDataset& ds, uint64_t seed, int originals,
                                int per_class, int augmentations) {
  if (originals != per_class * 10) {
    throw ParameterError("make_rotation_set: originals must be 10 * per_class");
  }
  Rng rng(seed);
  AugmentedPool pool;
  pool.kind = ControlKind::kRotation;
  pool.hw = ds.hw();
  pool.orig_ids = pick_balanced(ds, per_class, rng);
  pool.variants_per_original = augmentations;
  pool.orbit_includes_original = false;

  // evenly spaced inside the open interval (-pi/4, pi/4)
  const double span = M_PI / 2;
  const double step = span / augmentations;
  for (int k = 0; k < augmentations; ++k)
    pool.controls.push_back(static_cast<float>(-M_PI / 4 + (k + 0.5) * step));

  const int hw = pool.hw;
  const size_t plane = static_cast<size_t>(hw) * hw;
  std::vector<float> orig(static_cast<size_t>(originals) * plane);
  std::vector<float> vars(static_cast<size_t>(originals) * augmentations * plane);
  for (int k = 0; k < originals; ++k) {
    const float* src = ds.image(pool.orig_ids[static_cast<size_t>(k)]);
    std::memcpy(orig.data() + static_cast<size_t>(k) * plane, src,
                plane * sizeof(float));
    for (int a = 0; a < augmentations; ++a) {
      rotate_plane(src,
                   vars.data() +
                       (static_cast<size_t>(k) * augmentations + a) * plane,
                   hw, hw, pool.controls[static_cast<size_t>(a)]);
    }
  }
  pool.originals = TensorF::from({originals, 1, hw, hw}, std::move(orig));
  pool.variants = TensorF::from({originals * augmentations, 1, hw, hw}, std::move(vars));
  pool.content_hash = pool_hash(pool);
  return pool;
}

AugmentedPool make_dilation_set(const IdxDataset& ds, uint64_t seed, int originals) {
  if (originals % 10 != 0) {
    throw ParameterError("make_dilation_set: originals must be class-balanced");
  }
  Rng rng(seed);
  AugmentedPool pool;
  pool.kind = ControlKind::kDilation;
  pool.hw = ds.hw();
  pool.orig_ids = pick_balanced(ds, originals / 10, rng);
  pool.controls = {-2.0f, -1.0f, 1.0f, 2.0f};
  pool.variants_per_original = 4;
  pool.orbit_includes_original = true;

  const int hw = pool.hw;
  const size_t plane = static_cast<size_t>(hw) * hw;
  std::vector<float> orig(static_cast<size_t>(originals) * plane);
  std::vector<float> vars(static_cast<size_t>(originals) * 4 * plane);
  for (int k = 0; k < originals; ++k) {
    const float* src = ds.image(pool.orig_ids[static_cast<size_t>(k)]);
    std::memcpy(orig.data() + static_cast<size_t>(k) * plane, src,
                plane * sizeof(float));
    for (int v = 0; v < 4; ++v) {
      dilate_erode_plane(src,
                         vars.data() + (static_cast<size_t>(k) * 4 + v) * plane, hw, hw,
                         static_cast<int>(pool.controls[static_cast<size_t>(v)]));
    }
  }
  pool.originals = TensorF::from({originals, 1, hw, hw}, std::move(orig));
  pool.variants = TensorF::from({originals * 4, 1, hw, hw}, std::move(vars));
  pool.content_hash = pool_hash(pool);
  return pool;
}

TripletBatch sample_triplets(const AugmentedPool& pool, int batch_size, Rng& rng) {
  const int hw = pool.hw;
  const size_t plane = static_cast<size_t>(hw) * hw;
  std::vector<float> src(static_cast<size_t>(batch_size) * plane);
  std::vector<float> tgt(static_cast<size_t>(batch_size) * plane);
  std::vector<float> theta(static_cast<size_t>(batch_size));

  const int orbit = pool.orbit_size();
  for (int n = 0; n < batch_size; ++n) {
    const int k = rng.uniform_int(0, pool.original_count() - 1);
    int i = 0, j = 0;
    for (;;) {
      i = rng.uniform_int(0, orbit - 1);
      j = rng.uniform_int(0, orbit - 1);
      if (i == j) continue;
      if (pool.kind == ControlKind::kDilation &&
          std::abs(pool.orbit_control(j) - pool.orbit_control(i)) > 2.0f + 1e-6f) {
        continue;
      }
      break;
    }
    std::memcpy(src.data() + static_cast<size_t>(n) * plane, pool.orbit_image(k, i),
                plane * sizeof(float));
    std::memcpy(tgt.data() + static_cast<size_t>(n) * plane, pool.orbit_image(k, j),
                plane * sizeof(float));
    theta[static_cast<size_t>(n)] = pool.orbit_control(j) - pool.orbit_control(i);
  }

  TripletBatch batch;
  batch.source = TensorF::from({batch_size, 1, hw, hw}, std::move(src));
  batch.target = TensorF::from({batch_size, 1, hw, hw}, std::move(tgt));
  batch.theta = TensorF::from({batch_size, 1}, std::move(theta));
  return batch;
}

int64_t VaeSampler::total() const {
  int64_t n = base ? base->count() : 0;
  if (pool) n += pool->variants.dim(0);
  return n;
}

TensorF VaeSampler::sample_batch(int n, Rng& rng) const {
  if (!base) throw ContractError("VaeSampler: no base dataset");
  const int hw = base->hw();
  const size_t plane = static_cast<size_t>(hw) * hw;
  std::vector<float> out(static_cast<size_t>(n) * plane);
  const int64_t tot = total();
  for (int i = 0; i < n; ++i) {
    const int64_t pick = rng.uniform_int(0, static_cast<int>(tot - 1));
    const float* src =
        pick < base->count()
            ? base->image(static_cast<int>(pick))
            : pool->variants.data().data() +
                  static_cast<size_t>(pick - base->count()) * plane;
    std::memcpy(out.data() + static_cast<size_t>(i) * plane, src,
                plane * sizeof(float));
  }
  return TensorF::from({n, 1, hw, hw}, std::move(out));
}

// ---------------------------------------------------------------------------
// Sequand sequences
// ---------------------------------------------------------------------------

namespace {

struct Sprite {
  double x, y;
  double heading;
  double speed;
  double turn;
  double sigma_long, sigma_perp;
  double gain;
  bool moving;
};

void splat(float* plane, int hw, const Sprite& s, double pan_x, double pan_y,
           uint8_t* mask) {
  const double cx = s.x + pan_x, cy = s.y + pan_y;
  const double reach = 3.0 * std::max(s.sigma_long, s.sigma_perp);
  const int r0 = std::max(0, static_cast<int>(cy - reach));
  const int r1 = std::min(hw - 1, static_cast<int>(cy + reach));
  const int c0 = std::max(0, static_cast<int>(cx - reach));
  const int c1 = std::min(hw - 1, static_cast<int>(cx + reach));
  const double ch = std::cos(s.heading), sh = std::sin(s.heading);
  for (int r = r0; r <= r1; ++r)
    for (int c = c0; c <= c1; ++c) {
      const double dx = c - cx, dy = r - cy;
      const double u = ch * dx + sh * dy;
      const double v = -sh * dx + ch * dy;
      const double e = u * u / (2 * s.sigma_long * s.sigma_long) +
                       v * v / (2 * s.sigma_perp * s.sigma_perp);
      if (e > 4.5) continue;
      float& px = plane[static_cast<size_t>(r) * hw + c];
      px = std::min(1.0f, px + static_cast<float>(s.gain * std::exp(-e)));
      if (mask && s.moving) mask[static_cast<size_t>(r) * hw + c] = 1;
    }
}

}  // namespace

std::vector<SequenceSample> gen_sequences(const SequenceConfig& cfg) {
  Rng rng(cfg.seed);
  std::vector<SequenceSample> out;
  out.reserve(static_cast<size_t>(cfg.count));
  const int hw = cfg.hw;
  const size_t plane = static_cast<size_t>(hw) * hw;

  for (int s = 0; s < cfg.count; ++s) {
    std::vector<Sprite> sprites;
    for (int m = 0; m < cfg.moving_sprites; ++m) {
      Sprite sp;
      sp.x = rng.uniform(hw * 0.25, hw * 0.75);
      sp.y = rng.uniform(hw * 0.25, hw * 0.75);
      sp.heading = rng.uniform(-M_PI, M_PI);
      sp.speed = rng.uniform(cfg.min_speed, cfg.max_speed);
      sp.turn = (rng.uniform() < 0.5 ? -1 : 1) * rng.uniform(cfg.min_turn, cfg.max_turn);
      sp.sigma_long = rng.uniform(2.6, 3.4);
      sp.sigma_perp = rng.uniform(1.2, 1.8);
      sp.gain = rng.uniform(0.8, 1.0);
      sp.moving = true;
      sprites.push_back(sp);
    }
    for (int m = 0; m < cfg.static_sprites; ++m) {
      Sprite sp;
      sp.x = rng.uniform(2.0, hw - 2.0);
      sp.y = rng.uniform(2.0, hw - 2.0);
      sp.heading = rng.uniform(-M_PI, M_PI);
      sp.speed = 0;
      sp.turn = 0;
      sp.sigma_long = rng.uniform(1.4, 2.6);
      sp.sigma_perp = sp.sigma_long * rng.uniform(0.7, 1.0);
      sp.gain = rng.uniform(0.45, 0.8);
      sp.moving = false;
      sprites.push_back(sp);
    }
    const double pan_vx = cfg.pan_max > 0 ? rng.uniform(-cfg.pan_max, cfg.pan_max) : 0;
    const double pan_vy = cfg.pan_max > 0 ? rng.uniform(-cfg.pan_max, cfg.pan_max) : 0;

    SequenceSample sample;
    sample.heading.resize(static_cast<size_t>(cfg.frames));
    sample.motion_mask.assign(plane, 0);
    std::vector<float> frames(static_cast<size_t>(cfg.frames) * plane, 0.0f);

    double pan_x = 0, pan_y = 0;
    for (int t = 0; t < cfg.frames; ++t) {
      float* fr = frames.data() + static_cast<size_t>(t) * plane;
      for (const auto& sp : sprites)
        splat(fr, hw, sp, pan_x, pan_y, sample.motion_mask.data());
      sample.heading[static_cast<size_t>(t)] =
          static_cast<float>(sprites[0].heading);
      // advance kinematics: constant-curvature motion, wrap at borders
      for (auto& sp : sprites) {
        if (!sp.moving) continue;
        sp.x += sp.speed * std::cos(sp.heading);
        sp.y += sp.speed * std::sin(sp.heading);
        sp.heading += sp.turn;
        const double margin = 4.0;
        if (sp.x < margin || sp.x > hw - margin) {
          sp.heading = M_PI - sp.heading;
          sp.x = std::clamp(sp.x, margin, hw - margin);
        }
        if (sp.y < margin || sp.y > hw - margin) {
          sp.heading = -sp.heading;
          sp.y = std::clamp(sp.y, margin, hw - margin);
        }
      }
      pan_x += pan_vx;
      pan_y += pan_vy;
    }
    // to [-1, 1]
    for (auto& v : frames) v = v * 2.0f - 1.0f;
    sample.frames = TensorF::from({cfg.frames, 1, hw, hw}, std::move(frames));
    out.push_back(std::move(sample));
  }
  return out;
}

uint64_t sequences_hash(const std::vector<SequenceSample>& seqs) {
  uint64_t h = 1469598103934665603ull;
  for (const auto& s : seqs) {
    h = fnv1a(s.frames.data().data(), s.frames.size() * sizeof(float), h);
    h = fnv1a(s.heading.data(), s.heading.size() * sizeof(float), h);
  }
  return h;
}

void write_sequences(const std::string& dir, const std::vector<SequenceSample>& seqs,
                     const SequenceConfig& cfg) {
  fs::create_directories(dir);
  json manifest;
  manifest["format"] = "lstnet-sequences-v1";
  manifest["count"] = seqs.size();
  manifest["frames"] = cfg.frames;
  manifest["hw"] = cfg.hw;
  manifest["shape"] = {cfg.frames, 1, cfg.hw, cfg.hw};
  manifest["seed"] = cfg.seed;
  manifest["hash"] = hex64(sequences_hash(seqs));
  json headings = json::array();
  for (const auto& s : seqs) headings.push_back(s.heading);
  manifest["headings"] = headings;

  for (size_t i = 0; i < seqs.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "seq_%05zu", i);
    std::ofstream os(fs::path(dir) / (std::string(name) + ".f32"), std::ios::binary);
    os.write(reinterpret_cast<const char*>(seqs[i].frames.data().data()),
             static_cast<std::streamsize>(seqs[i].frames.size() * sizeof(float)));
    std::ofstream ms(fs::path(dir) / (std::string(name) + ".mask"), std::ios::binary);
    ms.write(reinterpret_cast<const char*>(seqs[i].motion_mask.data()),
             static_cast<std::streamsize>(seqs[i].motion_mask.size()));
  }
  std::ofstream mf(fs::path(dir) / "manifest.json");
  mf << manifest.dump(1) << "\n";
}

std::vector<SequenceSample> load_sequences(const std::string& dir) {
  std::ifstream mf(fs::path(dir) / "manifest.json");
  if (!mf) throw DataError("load_sequences: no manifest in " + dir);
  json manifest = json::parse(mf);
  if (manifest.value("format", "") != "lstnet-sequences-v1") {
    throw FormatError("load_sequences: unknown manifest format in " + dir);
  }
  const int count = manifest["count"];
  const int frames = manifest["frames"];
  const int hw = manifest["hw"];
  const size_t plane = static_cast<size_t>(hw) * hw;

  std::vector<SequenceSample> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "seq_%05d", i);
    std::ifstream is(fs::path(dir) / (std::string(name) + ".f32"), std::ios::binary);
    if (!is) throw DataError("load_sequences: missing blob " + std::string(name));
    std::vector<float> buf(static_cast<size_t>(frames) * plane);
    is.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (is.gcount() != static_cast<std::streamsize>(buf.size() * sizeof(float))) {
      throw FormatError("load_sequences: truncated blob " + std::string(name));
    }
    SequenceSample s;
    s.frames = TensorF::from({frames, 1, hw, hw}, std::move(buf));
    s.heading = manifest["headings"][static_cast<size_t>(i)].get<std::vector<float>>();
    s.motion_mask.assign(plane, 0);
    std::ifstream ms(fs::path(dir) / (std::string(name) + ".mask"), std::ios::binary);
    if (ms) ms.read(reinterpret_cast<char*>(s.motion_mask.data()),
                    static_cast<std::streamsize>(plane));
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace lst
