#include "skseg/baselines.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "skseg/clustering.hpp"
#include "skseg/errors.hpp"

namespace skseg {

std::uint64_t Histogram256::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

int intensity_bin(double v) {
  return std::clamp(static_cast<int>(std::floor(v * 255.0)), 0, 255);
}

Histogram256 foreground_histogram(const ImageGrid& img, const TissueMask& mask) {
  if (mask.width != img.width || mask.height != img.height) throw DataError("tissue mask does not match the image");
  const ImageGrid gray = to_grayscale(img);
  Histogram256 hist;
  for (std::size_t i = 0; i < gray.data.size(); ++i)
    if (mask.bits[i]) ++hist.counts[static_cast<std::size_t>(intensity_bin(gray.data[i]))];
  return hist;
}

namespace {

// Prefix sums over bins: count[t] and moment[t] cover bins [0, t).
struct Prefix {
  std::array<double, 257> count{};
  std::array<double, 257> moment{};

  explicit Prefix(const Histogram256& h) {
    for (int b = 0; b < 256; ++b) {
      count[b + 1] = count[b] + static_cast<double>(h.counts[b]);
      moment[b + 1] = moment[b] + static_cast<double>(b) * static_cast<double>(h.counts[b]);
    }
  }

  double variance(std::span<const int> thresholds) const {
    const double n = count[256];
    const double mu_t = moment[256] / n;
    double total = 0.0;
    int lo = 0;
    for (std::size_t k = 0; k <= thresholds.size(); ++k) {
      const int hi = k < thresholds.size() ? thresholds[k] : 256;
      const double nk = count[hi] - count[lo];
      if (nk > 0) {
        const double mu = (moment[hi] - moment[lo]) / nk;
        total += (nk / n) * (mu - mu_t) * (mu - mu_t);
      }
      lo = hi;
    }
    return total;
  }
};

}  // namespace

double between_class_variance(const Histogram256& hist, std::span<const int> thresholds) {
  if (hist.total() == 0) throw DataError("empty histogram");
  return Prefix(hist).variance(thresholds);
}

OtsuResult otsu_thresholds(const Histogram256& hist, int classes) {
  if (classes < 2 || classes > 4) throw UsageError("multithreshold Otsu supports 2 to 4 classes");
  const auto distinct = std::count_if(hist.counts.begin(), hist.counts.end(), [](auto c) { return c > 0; });
  if (distinct < classes)
    throw DataError("only " + std::to_string(distinct) + " distinct foreground intensities for " +
                    std::to_string(classes) + " classes");

  const Prefix prefix(hist);
  OtsuResult best;
  best.between_class_variance = -1.0;
  std::vector<int> t(static_cast<std::size_t>(classes - 1));

  // Lexicographic enumeration of 1 <= t_1 < ... < t_{C-1} <= 255; strict
  // improvement keeps the smallest tuple on ties.
  auto visit = [&](auto&& self, std::size_t depth, int start) -> void {
    if (depth == t.size()) {
      const double v = prefix.variance(t);
      if (v > best.between_class_variance) {
        best.between_class_variance = v;
        best.thresholds = t;
      }
      return;
    }
    const int remaining = static_cast<int>(t.size() - depth - 1);
    for (int x = start; x <= 255 - remaining; ++x) {
      t[depth] = x;
      self(self, depth + 1, x + 1);
    }
  };
  visit(visit, 0, 1);
  return best;
}

LabelMap otsu_multithreshold(const ImageGrid& img, const TissueMask& mask, int classes) {
  const OtsuResult res = otsu_thresholds(foreground_histogram(img, mask), classes);
  const ImageGrid gray = to_grayscale(img);
  LabelMap out(img.width, img.height, classes);
  for (std::size_t i = 0; i < gray.data.size(); ++i) {
    if (!mask.bits[i]) continue;
    const int bin = intensity_bin(gray.data[i]);
    out.labels[i] = static_cast<int>(std::upper_bound(res.thresholds.begin(), res.thresholds.end(), bin) -
                                     res.thresholds.begin());
  }
  return out;
}

LabelMap pixel_kmeans_segment(const ImageGrid& img, const TissueMask& mask, int clusters, std::uint64_t seed,
                              int max_iters, double tol, int restarts) {
  if (mask.width != img.width || mask.height != img.height) throw DataError("tissue mask does not match the image");
  std::vector<std::size_t> fg;
  for (std::size_t i = 0; i < mask.bits.size(); ++i)
    if (mask.bits[i]) fg.push_back(i);

  Eigen::MatrixXd points(img.channels, static_cast<Eigen::Index>(fg.size()));
  for (Eigen::Index n = 0; n < points.cols(); ++n)
    for (int c = 0; c < img.channels; ++c)
      points(c, n) = img.data[fg[static_cast<std::size_t>(n)] * img.channels + c];

  KMeansOptions opt;
  opt.clusters = clusters;
  opt.seed = seed;
  opt.max_iters = max_iters;
  opt.tol = tol;
  opt.restarts = restarts;
  const auto model = kmeans_fit(points, opt);
  const auto labels = kmeans_assign(points, model);

  LabelMap out(img.width, img.height, clusters);
  for (std::size_t n = 0; n < fg.size(); ++n) out.labels[fg[n]] = labels[n];
  return out;
}

}  // namespace skseg
