#pragma once

// Conventional k-means (k-means++ seeding, Lloyd iterations) over column
// vectors, and projection of per-window labels back onto pixels.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "skseg/errors.hpp"
#include "skseg/features.hpp"
#include "skseg/image.hpp"
#include "skseg/patching.hpp"

namespace skseg {

template <typename Scalar>
struct KMeansModel {
  PatchMatrix<Scalar> centers;  // dim x C
  double inertia = 0;
  std::vector<double> inertia_trace;
  int iterations = 0;

  Eigen::Index clusters() const { return centers.cols(); }
  Eigen::Index dim() const { return centers.rows(); }
};

struct KMeansOptions {
  int clusters = 3;
  std::uint64_t seed = 0;
  int max_iters = 100;
  double tol = 1e-6;  // stop once every center moves less than this (Euclidean)
  int restarts = 1;   // independent k-means++ starts; the lowest final inertia wins
};

namespace detail {

template <typename A, typename B>
double squared_distance(const A& a, const B& b) {
  return static_cast<double>((a - b).squaredNorm());
}

/// Nearest center per point (lowest index on ties); returns the inertia.
template <typename Derived, typename Scalar>
double nearest_centers(const Eigen::MatrixBase<Derived>& points, const PatchMatrix<Scalar>& centers,
                       std::vector<int>& labels, std::vector<double>& dist) {
  const Eigen::Index n = points.cols();
  labels.resize(static_cast<std::size_t>(n));
  dist.resize(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    int best = 0;
    double best_d = squared_distance(points.col(i), centers.col(0));
    for (Eigen::Index c = 1; c < centers.cols(); ++c) {
      const double dd = squared_distance(points.col(i), centers.col(c));
      if (dd < best_d) {
        best_d = dd;
        best = static_cast<int>(c);
      }
    }
    labels[static_cast<std::size_t>(i)] = best;
    dist[static_cast<std::size_t>(i)] = best_d;
  }
  double total = 0.0;
  for (double v : dist) total += v;
  return total;
}

}  // namespace detail

/// k-means++ seeding: first center uniform, then proportional to squared
/// distance from the nearest chosen center.
template <typename Derived, typename Scalar = typename Derived::Scalar>
PatchMatrix<Scalar> kmeans_plus_plus(const Eigen::MatrixBase<Derived>& points, int clusters, std::mt19937_64& rng) {
  const Eigen::Index n = points.cols();
  PatchMatrix<Scalar> centers(points.rows(), clusters);
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centers.col(0) = points.col(first(rng));
  std::vector<double> d2(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) d2[static_cast<std::size_t>(i)] = detail::squared_distance(points.col(i), centers.col(0));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int c = 1; c < clusters; ++c) {
    double total = 0.0;
    for (double v : d2) total += v;
    if (!(total > 0.0)) throw DataError("fewer distinct feature vectors than clusters");
    const double target = unit(rng) * total;
    double acc = 0.0;
    Eigen::Index pick = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v = d2[static_cast<std::size_t>(i)];
      if (v <= 0.0) continue;
      acc += v;
      pick = i;
      if (acc > target) break;
    }
    centers.col(c) = points.col(pick);
    for (Eigen::Index i = 0; i < n; ++i)
      d2[static_cast<std::size_t>(i)] =
          std::min(d2[static_cast<std::size_t>(i)], detail::squared_distance(points.col(i), centers.col(c)));
  }
  return centers;
}

namespace detail {

template <typename Derived, typename Scalar = typename Derived::Scalar>
KMeansModel<Scalar> lloyd(const Eigen::MatrixBase<Derived>& points, const KMeansOptions& opt, std::mt19937_64& rng) {
  KMeansModel<Scalar> model;
  model.centers = kmeans_plus_plus(points, opt.clusters, rng);
  const Eigen::Index n = points.cols(), c = opt.clusters;

  std::vector<int> labels;
  std::vector<double> dist;
  for (int it = 1; it <= opt.max_iters; ++it) {
    double inertia = nearest_centers(points, model.centers, labels, dist);

    // Empty clusters move to the point farthest from its current center.
    for (;;) {
      std::vector<Eigen::Index> sizes(static_cast<std::size_t>(c), 0);
      for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
      Eigen::Index empty = -1;
      for (Eigen::Index k = 0; k < c && empty < 0; ++k)
        if (sizes[static_cast<std::size_t>(k)] == 0) empty = k;
      if (empty < 0) break;
      Eigen::Index far = 0;
      for (Eigen::Index i = 1; i < n; ++i)
        if (dist[static_cast<std::size_t>(i)] > dist[static_cast<std::size_t>(far)]) far = i;
      if (!(dist[static_cast<std::size_t>(far)] > 0.0)) throw DataError("fewer distinct feature vectors than clusters");
      model.centers.col(empty) = points.col(far);
      inertia = nearest_centers(points, model.centers, labels, dist);
    }
    model.inertia_trace.push_back(inertia);
    model.iterations = it;

    PatchMatrix<Scalar> sums = PatchMatrix<Scalar>::Zero(points.rows(), c);
    std::vector<Eigen::Index> sizes(static_cast<std::size_t>(c), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.col(labels[static_cast<std::size_t>(i)]) += points.col(i);
      ++sizes[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
    }
    double movement = 0.0;
    for (Eigen::Index k = 0; k < c; ++k) {
      sums.col(k) /= static_cast<Scalar>(sizes[static_cast<std::size_t>(k)]);
      movement = std::max(movement, std::sqrt(squared_distance(sums.col(k), model.centers.col(k))));
    }
    model.centers = std::move(sums);
    if (movement < opt.tol) break;
  }
  model.inertia = nearest_centers(points, model.centers, labels, dist);
  model.inertia_trace.push_back(model.inertia);
  return model;
}

}  // namespace detail

/// Points are the columns of `points`.
template <typename Derived, typename Scalar = typename Derived::Scalar>
KMeansModel<Scalar> kmeans_fit(const Eigen::MatrixBase<Derived>& points, const KMeansOptions& opt) {
  if (opt.clusters < 2) throw UsageError("k-means needs at least two clusters");
  if (opt.max_iters < 1) throw UsageError("k-means max_iters must be at least 1");
  if (opt.restarts < 1) throw UsageError("k-means restarts must be at least 1");
  if (points.cols() < opt.clusters)
    throw DataError("only " + std::to_string(points.cols()) + " feature vectors for " +
                    std::to_string(opt.clusters) + " clusters");

  std::mt19937_64 rng(opt.seed);
  KMeansModel<Scalar> best = detail::lloyd(points, opt, rng);
  for (int r = 1; r < opt.restarts; ++r) {
    KMeansModel<Scalar> next = detail::lloyd(points, opt, rng);
    if (next.inertia < best.inertia) best = std::move(next);
  }
  return best;
}

/// Index of the nearest center per column; ties go to the lowest index.
template <typename Derived, typename Scalar = typename Derived::Scalar>
std::vector<int> kmeans_assign(const Eigen::MatrixBase<Derived>& points, const KMeansModel<Scalar>& model) {
  if (points.rows() != model.dim())
    throw DataError("feature dimension " + std::to_string(points.rows()) + " does not match k-means model dimension " +
                    std::to_string(model.dim()));
  std::vector<int> labels;
  std::vector<double> dist;
  if (points.cols() > 0) detail::nearest_centers(points, model.centers, labels, dist);
  return labels;
}

/// Writes each window's label into its central s x s block. Pixels no window
/// covers, and background pixels, stay unlabeled.
inline LabelMap project_labels(const std::vector<WindowPos>& windows, const std::vector<int>& labels,
                               const WindowSpec& spec, int width, int height, const TissueMask& mask,
                               int num_classes) {
  if (windows.size() != labels.size()) throw DataError("window and label counts differ");
  if (mask.width != width || mask.height != height) throw DataError("tissue mask does not match the image");
  LabelMap out(width, height, num_classes);
  const int off = spec.center_offset(), s = spec.stride;
  for (std::size_t n = 0; n < windows.size(); ++n) {
    const int l = labels[n];
    if (l < 0 || l >= num_classes) throw DataError("window label outside [0, C)");
    const int bx = windows[n].x + off, by = windows[n].y + off;
    for (int y = by; y < by + s && y < height; ++y)
      for (int x = bx; x < bx + s && x < width; ++x)
        if (mask(x, y)) out(x, y) = l;
  }
  return out;
}

}  // namespace skseg
