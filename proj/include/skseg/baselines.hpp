#pragma once

// Comparison segmenters: multithreshold Otsu on grayscale foreground pixels
// and k-means on raw per-pixel color.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "skseg/image.hpp"

namespace skseg {

/// 256 bins, bin = floor(v * 255) (v = 1 lands in bin 255).
struct Histogram256 {
  std::array<std::uint64_t, 256> counts{};
  std::uint64_t total() const;
};

int intensity_bin(double v);

/// Histogram of grayscale intensities over foreground pixels only.
Histogram256 foreground_histogram(const ImageGrid& img, const TissueMask& mask);

/// Thresholds t_1 < ... < t_{C-1} in [1, 255]; class k holds bins
/// [t_k, t_{k+1}) with t_0 = 0 and t_C = 256.
struct OtsuResult {
  std::vector<int> thresholds;
  double between_class_variance = 0;
};

/// sum_k w_k (mu_k - mu_T)^2 with bin indices as intensities.
double between_class_variance(const Histogram256& hist, std::span<const int> thresholds);

/// Exhaustive search for 2 <= classes <= 4; the lexicographically smallest
/// tuple wins ties.
OtsuResult otsu_thresholds(const Histogram256& hist, int classes);

LabelMap otsu_multithreshold(const ImageGrid& img, const TissueMask& mask, int classes);

LabelMap pixel_kmeans_segment(const ImageGrid& img, const TissueMask& mask, int clusters, std::uint64_t seed,
                              int max_iters = 100, double tol = 1e-6, int restarts = 1);

}  // namespace skseg
