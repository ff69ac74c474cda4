#pragma once

// Procedural multi-texture scenes with exact ground truth.

#include <cstdint>
#include <vector>

#include "skseg/image.hpp"

namespace skseg {

enum class TextureKind { stripes, checks, smooth };

struct TextureParams {
  TextureKind kind = TextureKind::smooth;
  double base = 0.5;        // mean intensity
  double amplitude = 0.0;   // half peak-to-peak of the pattern
  double period = 8.0;      // stripe period, check size * 2, or undulation period (pixels)
  double angle_deg = 0.0;   // stripe orientation
  double noise_sigma = 0.03;
};

struct TextureScene {
  int width = 512;
  int height = 512;
  int channels = 3;
  int sites = 6;  // Voronoi cells; cell i gets class i % classes
  std::uint64_t layout_seed = 1;
  std::uint64_t noise_seed = 1;
  std::vector<TextureParams> textures;  // one per class
  std::vector<double> tint{1.0, 0.9, 0.95};

  int classes() const { return static_cast<int>(textures.size()); }
};

/// Three classes with near-equal mean intensity: fine stripes, coarse
/// checks, smooth slow undulation.
TextureScene default_scene(std::uint64_t layout_seed = 1, std::uint64_t noise_seed = 1);

struct SynthResult {
  ImageGrid image;
  LabelMap truth;
};

/// Every class covers at least 5% of the pixels (layouts are redrawn until
/// they do).
LabelMap generate_regions(const TextureScene& scene);

SynthResult generate(const TextureScene& scene);

}  // namespace skseg
