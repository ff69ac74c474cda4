#include <doctest.h>

#include "skseg/synth.hpp"

#include <cmath>

using namespace skseg;

namespace {

struct Moments {
  double mean = 0, var = 0;
  std::size_t n = 0;
};

Moments class_moments(const SynthResult& s, int k) {
  Moments m;
  for (int y = 0; y < s.image.height; ++y)
    for (int x = 0; x < s.image.width; ++x)
      if (s.truth(x, y) == k) {
        m.mean += s.image.at(x, y, 0);
        ++m.n;
      }
  m.mean /= static_cast<double>(m.n);
  for (int y = 0; y < s.image.height; ++y)
    for (int x = 0; x < s.image.width; ++x)
      if (s.truth(x, y) == k) m.var += std::pow(s.image.at(x, y, 0) - m.mean, 2);
  m.var /= static_cast<double>(m.n);
  return m;
}

}  // namespace

TEST_CASE("synthetic scenes are deterministic") {
  const auto a = generate(default_scene(4, 5));
  const auto b = generate(default_scene(4, 5));
  CHECK(a.image.data == b.image.data);
  CHECK(a.truth == b.truth);

  const auto c = generate(default_scene(4, 6));
  CHECK(c.truth == a.truth);
  CHECK(c.image.data != a.image.data);
}

TEST_CASE("every class covers at least five percent") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const auto s = generate(default_scene(seed, seed));
    std::vector<std::size_t> cover(3, 0);
    for (int l : s.truth.labels) {
      REQUIRE(l >= 0);
      REQUIRE(l < 3);
      ++cover[static_cast<std::size_t>(l)];
    }
    for (std::size_t n : cover) CHECK(static_cast<double>(n) >= 0.05 * 512 * 512);
    for (double v : s.image.data) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("stripes and checks share a mean but not a variance") {
  const auto s = generate(default_scene(1, 1));
  const Moments stripes = class_moments(s, 0), checks = class_moments(s, 1);
  CHECK(std::abs(stripes.mean - checks.mean) < 0.05);
  CHECK(stripes.var >= 3.0 * checks.var);
}

TEST_CASE("a one-class scene is a single flat texture") {
  TextureScene scene = default_scene();
  scene.textures = {TextureParams{TextureKind::smooth, 0.4, 0.0, 8.0, 0.0, 0.0}};
  scene.width = 64;
  scene.height = 48;
  const auto s = generate(scene);
  for (int l : s.truth.labels) CHECK(l == 0);
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 64; ++x) CHECK(s.image.at(x, y, 0) == doctest::Approx(0.4));
}
