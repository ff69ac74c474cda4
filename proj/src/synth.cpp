#include "skseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "skseg/errors.hpp"

namespace skseg {

TextureScene default_scene(std::uint64_t layout_seed, std::uint64_t noise_seed) {
  TextureScene s;
  s.layout_seed = layout_seed;
  s.noise_seed = noise_seed;
  s.textures = {
      {TextureKind::stripes, 0.5, 0.30, 4.0, 45.0, 0.03},
      {TextureKind::checks, 0.5, 0.10, 16.0, 0.0, 0.03},
      {TextureKind::smooth, 0.5, 0.10, 96.0, 0.0, 0.02},
  };
  return s;
}

LabelMap generate_regions(const TextureScene& scene) {
  const int classes = scene.classes();
  if (classes < 1) throw UsageError("scene needs at least one texture");
  if (scene.width < 1 || scene.height < 1) throw UsageError("scene dimensions must be positive");
  LabelMap lm(scene.width, scene.height, classes, 0);
  if (classes == 1) return lm;
  const int sites = std::max(scene.sites, classes);

  std::mt19937_64 rng(scene.layout_seed);
  std::uniform_real_distribution<double> ux(0.0, scene.width), uy(0.0, scene.height);
  const auto min_pixels = static_cast<std::size_t>(std::ceil(0.05 * lm.labels.size()));
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::vector<std::pair<double, double>> pts(static_cast<std::size_t>(sites));
    for (auto& p : pts) p = {ux(rng), uy(rng)};
    std::vector<std::size_t> area(static_cast<std::size_t>(classes), 0);
    for (int y = 0; y < scene.height; ++y)
      for (int x = 0; x < scene.width; ++x) {
        int best = 0;
        double best_d = 1e300;
        for (int i = 0; i < sites; ++i) {
          const double dx = x + 0.5 - pts[i].first, dy = y + 0.5 - pts[i].second;
          const double d = dx * dx + dy * dy;
          if (d < best_d) {
            best_d = d;
            best = i;
          }
        }
        lm(x, y) = best % classes;
        ++area[static_cast<std::size_t>(best % classes)];
      }
    if (std::all_of(area.begin(), area.end(), [&](std::size_t a) { return a >= min_pixels; })) return lm;
  }
  throw DataError("could not draw a layout giving every class 5% of the pixels");
}

namespace {

double pattern(const TextureParams& t, int x, int y) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  switch (t.kind) {
    case TextureKind::stripes: {
      const double a = t.angle_deg * std::numbers::pi / 180.0;
      const double u = x * std::cos(a) + y * std::sin(a);
      return t.amplitude * std::sin(two_pi * u / t.period);
    }
    case TextureKind::checks: {
      const int cell = std::max(1, static_cast<int>(t.period / 2));
      return ((x / cell + y / cell) % 2 == 0) ? t.amplitude : -t.amplitude;
    }
    case TextureKind::smooth:
      return t.amplitude * std::sin(two_pi * x / t.period) * std::cos(two_pi * y / (1.3 * t.period));
  }
  return 0.0;
}

}  // namespace

SynthResult generate(const TextureScene& scene) {
  if (scene.channels != 1 && scene.channels != 3) throw UsageError("scene must have 1 or 3 channels");
  if (scene.channels == 3 && scene.tint.size() < 3) throw UsageError("scene tint needs three entries");
  SynthResult out;
  out.truth = generate_regions(scene);
  out.image = ImageGrid(scene.width, scene.height, scene.channels);

  std::mt19937_64 rng(scene.noise_seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int y = 0; y < scene.height; ++y)
    for (int x = 0; x < scene.width; ++x) {
      const auto& t = scene.textures[static_cast<std::size_t>(out.truth(x, y))];
      const double v = t.base + pattern(t, x, y) + t.noise_sigma * noise(rng);
      for (int c = 0; c < scene.channels; ++c) {
        const double tint = scene.channels == 3 ? scene.tint[static_cast<std::size_t>(c)] : 1.0;
        out.image.at(x, y, c) = std::clamp(v * tint, 0.0, 1.0);
      }
    }
  return out;
}

}  // namespace skseg
