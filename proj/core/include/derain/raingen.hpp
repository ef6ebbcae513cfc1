#pragma once

#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "derain/tensor.hpp"

namespace derain {

struct StreakParams {
  double intensity = 0.35;  // seeded-pixel fraction in [0,1]; 0 means no rain
  double angle_deg = 10.0;  // tilt from vertical, [-45, 45]
  int length_px = 12;       // motion-blur extent, >= 1
  double brightness = 0.8;  // scale on the additive layer, >= 0
  uint64_t seed = 1;
};

struct DropParams {
  double density = 100.0;  // expected drops per megapixel, >= 0
  int radius_min = 3;      // ellipse semi-axis bounds, >= 2
  int radius_max = 9;
  double refraction = 0.6;  // lens-warp strength in [0, 1]
  uint64_t seed = 1;
};

struct SamplePair {
  std::string id;
  Tensor<float> clean, rainy;             // (h,w,3) in [0,1]
  Tensor<float> mask_streak, mask_drop;   // (h,w,1) in [0,1]
};

struct SampleInfo {
  std::string id;
  std::string split;  // "train" or "test"
  StreakParams sp;
  DropParams dp;
};

struct DropGeom {
  double cx, cy;
  int rx, ry;
};

// Additive streak field in [0, brightness]: thresholded uniform noise,
// motion-blurred along the streak direction, max-normalized, scaled.
Tensor<float> streak_layer(int h, int w, const StreakParams& p);

// clean + streak layer, clamped. intensity 0 returns clean unchanged.
Tensor<float> synth_streaks(const Tensor<float>& clean, const StreakParams& p);

// Drop placement only; rendering consumes exactly these geometries.
std::vector<DropGeom> sample_drops(int h, int w, const DropParams& p);

// Renders adherent drops: each ellipse shows a lens-warped, blurred view of
// the scene plus a specular highlight. Pixels outside all ellipses are
// bit-identical to the input.
Tensor<float> synth_drops(const Tensor<float>& clean, const DropParams& p);

// Normalized luma of |a-b|: zero where the images agree, max-scaled into
// [0,1] with a 1e-6 denominator floor.
Tensor<float> compute_soft_mask(const Tensor<float>& a, const Tensor<float>& b);

// Full pipeline for one pair: drops first, then streaks composited on top,
// plus the two supervision masks.
SamplePair synth_joint(const Tensor<float>& clean, const std::string& id,
                       const StreakParams& sp, const DropParams& dp);

// Procedural clean test card: smooth color field with randomly placed soft
// shapes, values kept inside (0,1).
Tensor<float> make_clean_image(int h, int w, uint64_t seed);

// n test cards with per-image seeds derived from one base seed. The CLI and
// the verification suite both use this derivation so they agree on pixels.
std::vector<Tensor<float>> make_clean_set(int n, int h, int w, uint64_t seed);

// Canonical name for the i-th generated test card.
inline std::string clean_image_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "img%03d", i);
  return buf;
}

std::vector<double> intensity_levels(double lo, double hi, int n);

struct SynthConfig {
  int levels = 4;
  double intensity_min = 0.2, intensity_max = 0.6;
  double angle_min = -30.0, angle_max = 30.0;
  int streak_length = 12;
  double streak_brightness = 0.8;
  double drop_density = 100.0;
  int drop_radius_min = 3, drop_radius_max = 9;
  double drop_refraction = 0.6;
  double test_fraction = 0.1;
  uint64_t seed = 1;
};

// For each clean image: one drop field, `levels` streak intensities layered
// over it. All levels of one clean image share its train/test split.
struct Corpus {
  std::vector<SamplePair> pairs;
  std::vector<SampleInfo> infos;
};
Corpus synth_corpus(const std::vector<Tensor<float>>& cleans,
                    const std::vector<std::string>& names, const SynthConfig& cfg);

// On-disk layout: root/{clean,rainy,mask_streak,mask_drop}/<id>.png plus
// root/manifest.txt listing ids, splits and synthesis parameters.
void write_dataset(const std::string& root, const std::vector<SamplePair>& pairs,
                   const std::vector<SampleInfo>& infos);

struct Dataset {
  std::vector<SamplePair> pairs;
  std::vector<SampleInfo> infos;
};
Dataset read_dataset(const std::string& root);

}  // namespace derain
