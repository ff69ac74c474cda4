#pragma once

// Training-patch sampling and the preprocessing applied to every patch before
// it meets the dictionary: global brightness/contrast normalization followed
// by ZCA whitening.
//
// Patch layout: a p x p x c patch is flattened pixel-major with the channel
// index fastest, i.e. entry (dy*p + dx)*c + ch. This matches the interleaved
// row-major layout of ImageGrid, so each patch row is one contiguous run.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <random>
#include <vector>

#include "skseg/errors.hpp"
#include "skseg/image.hpp"

namespace skseg {

template <typename Scalar>
using PatchMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

struct PixelCoord {
  int x = 0;
  int y = 0;
  bool operator==(const PixelCoord&) const = default;
};

/// Scalar mean/std over the whole dataset. With more than one group the
/// statistics are kept per channel (entry r belongs to group r % groups).
template <typename Scalar>
struct NormStats {
  VectorX<Scalar> mean;
  VectorX<Scalar> stddev;

  Eigen::Index groups() const { return mean.size(); }
};

/// ZCA transform W = V (L + eps I)^{-1/2} V^T together with the per-feature
/// mean removed before it is applied.
template <typename Scalar>
struct WhiteningTransform {
  VectorX<Scalar> mean;
  PatchMatrix<Scalar> matrix;
  Scalar epsilon = 0;

  Eigen::Index dim() const { return matrix.rows(); }
};

// ---------------------------------------------------------------------------
// Sampling

/// Top-left corners of every p x p patch with at least `min_foreground`
/// (fraction) of its pixels inside the mask, in row-major order.
inline std::vector<PixelCoord> admissible_corners(const TissueMask& mask, int p,
                                                  double min_foreground = 0.5) {
  if (p < 1 || p > mask.width || p > mask.height)
    throw UsageError("patch size " + std::to_string(p) + " does not fit the image");
  const int w = mask.width, h = mask.height;
  // Integral image with a zero guard row/column.
  std::vector<std::int64_t> sat(static_cast<std::size_t>(w + 1) * (h + 1), 0);
  auto S = [&](int x, int y) -> std::int64_t& { return sat[static_cast<std::size_t>(y) * (w + 1) + x]; };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) S(x + 1, y + 1) = mask(x, y) + S(x, y + 1) + S(x + 1, y) - S(x, y);

  const double needed = min_foreground * p * p;
  std::vector<PixelCoord> out;
  for (int y = 0; y + p <= h; ++y)
    for (int x = 0; x + p <= w; ++x) {
      const auto fg = S(x + p, y + p) - S(x, y + p) - S(x + p, y) + S(x, y);
      if (fg > 0 && static_cast<double>(fg) >= needed) out.push_back({x, y});
    }
  return out;
}

/// n corners drawn uniformly, with replacement, from the admissible set.
inline std::vector<PixelCoord> sample_patch_corners(const TissueMask& mask, std::size_t n, int p,
                                                    std::uint64_t seed, double min_foreground = 0.5) {
  if (n == 0) throw UsageError("number of training patches must be positive");
  const auto candidates = admissible_corners(mask, p, min_foreground);
  if (candidates.empty()) throw DataError("no admissible patch location under the tissue mask");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
  std::vector<PixelCoord> out(n);
  for (auto& c : out) c = candidates[pick(rng)];
  return out;
}

/// Copies one flattened patch into `out` (length p*p*c).
template <typename Scalar, typename Out>
void copy_patch(const ImageGrid& img, int x, int y, int p, Out&& out) {
  const int c = img.channels;
  const Eigen::Index run = static_cast<Eigen::Index>(p) * c;
  for (int dy = 0; dy < p; ++dy) {
    const double* src = &img.data[(static_cast<std::size_t>(y + dy) * img.width + x) * c];
    for (Eigen::Index k = 0; k < run; ++k) out(dy * run + k) = static_cast<Scalar>(src[k]);
  }
}

template <typename Scalar = double>
PatchMatrix<Scalar> extract_patches(const ImageGrid& img, const std::vector<PixelCoord>& corners, int p) {
  const Eigen::Index dim = static_cast<Eigen::Index>(p) * p * img.channels;
  PatchMatrix<Scalar> x(dim, static_cast<Eigen::Index>(corners.size()));
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    const auto& c = corners[static_cast<std::size_t>(i)];
    if (c.x < 0 || c.y < 0 || c.x + p > img.width || c.y + p > img.height)
      throw DataError("patch corner outside the image");
    copy_patch<Scalar>(img, c.x, c.y, p, x.col(i));
  }
  return x;
}

/// Random crops of p x p pixels whose foreground fraction is at least
/// `min_foreground`; deterministic for a fixed seed.
template <typename Scalar = double>
PatchMatrix<Scalar> sample_training_patches(const ImageGrid& img, const TissueMask& mask, std::size_t n,
                                            int p, std::uint64_t seed, double min_foreground = 0.5) {
  if (mask.width != img.width || mask.height != img.height)
    throw DataError("tissue mask does not match the image size");
  return extract_patches<Scalar>(img, sample_patch_corners(mask, n, p, seed, min_foreground), p);
}

// ---------------------------------------------------------------------------
// Normalization

/// Mean and (population) standard deviation pooled over every entry of x, or
/// per channel group when `groups` > 1.
template <typename Derived>
NormStats<typename Derived::Scalar> fit_norm_stats(const Eigen::MatrixBase<Derived>& x, int groups = 1) {
  using Scalar = typename Derived::Scalar;
  if (x.cols() < 2) throw DataError("normalization needs at least two patches");
  if (groups < 1 || x.rows() % groups != 0) throw UsageError("patch length is not a multiple of the channel count");

  NormStats<Scalar> s;
  s.mean = VectorX<Scalar>::Zero(groups);
  s.stddev = VectorX<Scalar>::Zero(groups);
  const double per_group = static_cast<double>(x.size()) / groups;
  for (int g = 0; g < groups; ++g) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      for (Eigen::Index r = g; r < x.rows(); r += groups) sum += static_cast<double>(x(r, j));
    const double mean = sum / per_group;
    double ss = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      for (Eigen::Index r = g; r < x.rows(); r += groups) {
        const double d = static_cast<double>(x(r, j)) - mean;
        ss += d * d;
      }
    const double sd = std::sqrt(ss / per_group);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) throw DataError("patch dataset has zero variance");
    s.mean(g) = static_cast<Scalar>(mean);
    s.stddev(g) = static_cast<Scalar>(sd);
  }
  return s;
}

template <typename Derived>
PatchMatrix<typename Derived::Scalar> apply_norm(const Eigen::MatrixBase<Derived>& x,
                                                 const NormStats<typename Derived::Scalar>& s) {
  const Eigen::Index groups = s.groups();
  if (groups < 1 || x.rows() % groups != 0) throw DataError("normalization groups do not divide the patch length");
  PatchMatrix<typename Derived::Scalar> out(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const Eigen::Index g = r % groups;
      out(r, j) = (x(r, j) - s.mean(g)) / s.stddev(g);
    }
  return out;
}

// ---------------------------------------------------------------------------
// ZCA whitening

template <typename Derived>
WhiteningTransform<typename Derived::Scalar> fit_zca(const Eigen::MatrixBase<Derived>& x,
                                                     typename Derived::Scalar epsilon) {
  using Scalar = typename Derived::Scalar;
  using Matrix = PatchMatrix<Scalar>;
  if (epsilon < 0) throw UsageError("ZCA epsilon must be non-negative");
  if (x.cols() < 1) throw DataError("cannot whiten an empty patch set");
  if (x.cols() <= x.rows())
    std::cerr << "warning: whitening " << x.cols() << " patches of dimension " << x.rows()
              << "; covariance may be rank deficient\n";

  WhiteningTransform<Scalar> t;
  t.epsilon = epsilon;
  t.mean = x.rowwise().mean();
  const Matrix centered = x.colwise() - t.mean;
  const Matrix cov = (centered * centered.transpose()) / static_cast<Scalar>(x.cols());

  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericalError("covariance eigendecomposition failed");
  VectorX<Scalar> scale = eig.eigenvalues().array() + epsilon;
  for (Eigen::Index i = 0; i < scale.size(); ++i) {
    if (!std::isfinite(static_cast<double>(scale(i))))
      throw NumericalError("non-finite eigenvalue in patch covariance");
    if (!(scale(i) > 0))
      throw NumericalError("patch covariance is singular; use a positive ZCA epsilon");
    scale(i) = Scalar(1) / std::sqrt(scale(i));
  }
  const Matrix& v = eig.eigenvectors();
  t.matrix = v * scale.asDiagonal() * v.transpose();
  // Symmetrize away round-off so W == W^T holds bit for bit.
  t.matrix = (0.5 * (t.matrix + t.matrix.transpose())).eval();
  return t;
}

template <typename Derived>
PatchMatrix<typename Derived::Scalar> apply_zca(const Eigen::MatrixBase<Derived>& x,
                                                const WhiteningTransform<typename Derived::Scalar>& w) {
  if (x.rows() != w.dim())
    throw DataError("patch dimension " + std::to_string(x.rows()) + " does not match whitening dimension " +
                    std::to_string(w.dim()));
  return w.matrix * (x.colwise() - w.mean);
}

}  // namespace skseg
