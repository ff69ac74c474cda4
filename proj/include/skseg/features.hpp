#pragma once

// Window featurization: every w x w window is covered by p x p sub-patches at
// stride h (a g x g grid, g = (w - p)/h + 1). Each sub-patch is preprocessed
// with the dictionary's frozen normalization and whitening, passed through
// the K filters and rectified (max{0, D^T x}). Each filter map is then
// sum-pooled over four quadrants, giving a 4K vector ordered filter-major,
// quadrants TL, TR, BL, BR.
//
// For odd g the quadrants cannot be equal: rows/columns [0, (g+1)/2) form the
// top/left halves and the remainder the bottom/right halves.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "skseg/errors.hpp"
#include "skseg/image.hpp"
#include "skseg/patching.hpp"
#include "skseg/spherical_kmeans.hpp"

namespace skseg {

struct WindowSpec {
  int window = 99;        // w
  int stride = 1;         // s
  int filter = 5;         // p
  int filter_stride = 2;  // h

  int grid() const { return (window - filter) / filter_stride + 1; }
  int split() const { return (grid() + 1) / 2; }
  /// Offset of the central s x s block inside a window.
  int center_offset() const { return (window - stride) / 2; }

  void validate() const {
    if (window < 1 || stride < 1 || filter < 1 || filter_stride < 1)
      throw UsageError("window geometry values must be positive");
    if (stride > window) throw UsageError("window stride s must not exceed window size w");
    if (filter > window) throw UsageError("filter size p must not exceed window size w");
    if ((window - filter) % filter_stride != 0)
      throw UsageError("(w - p) = " + std::to_string(window - filter) + " is not divisible by filter stride h = " +
                       std::to_string(filter_stride));
    if (grid() < 2) throw UsageError("activation grid must be at least 2 x 2 for quadrant pooling");
  }
};

/// A window by grid coordinate and pixel top-left corner.
struct WindowPos {
  int row = 0;
  int col = 0;
  int x = 0;
  int y = 0;
};

inline int window_grid_rows(int height, const WindowSpec& spec) { return (height - spec.window) / spec.stride + 1; }
inline int window_grid_cols(int width, const WindowSpec& spec) { return (width - spec.window) / spec.stride + 1; }

template <typename Scalar>
struct FeatureField {
  int rows = 0;  // full window grid, before masking
  int cols = 0;
  std::vector<WindowPos> windows;
  PatchMatrix<Scalar> vectors;  // 4K x windows.size()

  Eigen::Index dim() const { return vectors.rows(); }
  Eigen::Index count() const { return vectors.cols(); }
};

/// Grid-aligned windows whose central s x s block holds at least one
/// foreground pixel, in row-major grid order.
inline std::vector<WindowPos> extract_windows(const ImageGrid& img, const TissueMask& mask, const WindowSpec& spec) {
  spec.validate();
  if (spec.window > img.width || spec.window > img.height)
    throw DataError("image " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                    " is smaller than the window size " + std::to_string(spec.window));
  if (mask.width != img.width || mask.height != img.height) throw DataError("tissue mask does not match the image");

  const int w = mask.width, h = mask.height;
  std::vector<std::int64_t> sat(static_cast<std::size_t>(w + 1) * (h + 1), 0);
  auto S = [&](int x, int y) -> std::int64_t& { return sat[static_cast<std::size_t>(y) * (w + 1) + x]; };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) S(x + 1, y + 1) = mask(x, y) + S(x, y + 1) + S(x + 1, y) - S(x, y);

  const int rows = window_grid_rows(img.height, spec), cols = window_grid_cols(img.width, spec);
  const int off = spec.center_offset(), s = spec.stride;
  std::vector<WindowPos> out;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const int x0 = c * s, y0 = r * s;
      const int bx = x0 + off, by = y0 + off;
      const auto fg = S(bx + s, by + s) - S(bx, by + s) - S(bx + s, by) + S(bx, by);
      if (fg > 0) out.push_back({r, c, x0, y0});
    }
  return out;
}

/// Normalization then whitening, exactly as at training time.
template <typename Derived, typename Scalar = typename Derived::Scalar>
PatchMatrix<Scalar> preprocess_patches(const Eigen::MatrixBase<Derived>& x, const Dictionary<Scalar>& d) {
  return apply_zca(apply_norm(x, d.norm), d.whitening);
}

namespace detail {

template <typename Scalar>
void check_provenance(const Dictionary<Scalar>& d, int channels, const WindowSpec& spec) {
  if (!d.has_preprocessing()) throw DataError("dictionary carries no normalization/whitening statistics");
  if (d.patch_size != spec.filter)
    throw DataError("dictionary was trained with patch size " + std::to_string(d.patch_size) +
                    " but the window spec uses " + std::to_string(spec.filter));
  if (d.channels != channels)
    throw DataError("dictionary was trained on " + std::to_string(d.channels) + "-channel patches, image has " +
                    std::to_string(channels));
  if (d.dim() != static_cast<Eigen::Index>(d.patch_size) * d.patch_size * d.channels)
    throw DataError("dictionary dimension inconsistent with its patch geometry");
}

}  // namespace detail

inline ImageGrid crop(const ImageGrid& img, int x, int y, int w, int h) {
  if (x < 0 || y < 0 || x + w > img.width || y + h > img.height) throw DataError("crop outside the image");
  ImageGrid out(w, h, img.channels);
  const std::size_t run = static_cast<std::size_t>(w) * img.channels;
  for (int r = 0; r < h; ++r)
    std::copy_n(&img.data[(static_cast<std::size_t>(y + r) * img.width + x) * img.channels], run,
                &out.data[static_cast<std::size_t>(r) * run]);
  return out;
}

/// K rectified activation maps (g x g, row = sub-patch row) for one window.
template <typename Scalar>
std::vector<PatchMatrix<Scalar>> apply_filters(const ImageGrid& window, const Dictionary<Scalar>& d,
                                               const WindowSpec& spec) {
  spec.validate();
  detail::check_provenance(d, window.channels, spec);
  if (window.width != spec.window || window.height != spec.window)
    throw DataError("window is not w x w");
  const int g = spec.grid(), p = spec.filter, h = spec.filter_stride;
  PatchMatrix<Scalar> patches(d.dim(), static_cast<Eigen::Index>(g) * g);
  for (int a = 0; a < g; ++a)
    for (int b = 0; b < g; ++b) copy_patch<Scalar>(window, b * h, a * h, p, patches.col(a * g + b));
  const PatchMatrix<Scalar> act = (d.columns.transpose() * preprocess_patches(patches, d)).cwiseMax(Scalar(0));
  std::vector<PatchMatrix<Scalar>> maps(static_cast<std::size_t>(d.k()), PatchMatrix<Scalar>(g, g));
  for (Eigen::Index j = 0; j < d.k(); ++j)
    for (int a = 0; a < g; ++a)
      for (int b = 0; b < g; ++b) maps[static_cast<std::size_t>(j)](a, b) = act(j, a * g + b);
  return maps;
}

/// Sums of the TL, TR, BL, BR quadrants; top/left halves span [0, (g+1)/2).
template <typename Derived>
std::array<typename Derived::Scalar, 4> sum_pool_quadrants(const Eigen::MatrixBase<Derived>& map) {
  if (map.rows() != map.cols() || map.rows() < 2) throw DataError("activation map must be square with side >= 2");
  const Eigen::Index g = map.rows(), m = (g + 1) / 2, rest = g - m;
  return {map.topLeftCorner(m, m).sum(), map.topRightCorner(m, rest).sum(), map.bottomLeftCorner(rest, m).sum(),
          map.bottomRightCorner(rest, rest).sum()};
}

/// Reference featurization: every window filtered and pooled independently.
template <typename Scalar>
FeatureField<Scalar> featurize_direct(const ImageGrid& img, const TissueMask& mask, const Dictionary<Scalar>& d,
                                      const WindowSpec& spec) {
  detail::check_provenance(d, img.channels, spec);
  FeatureField<Scalar> field;
  field.rows = window_grid_rows(img.height, spec);
  field.cols = window_grid_cols(img.width, spec);
  field.windows = extract_windows(img, mask, spec);
  field.vectors.resize(4 * d.k(), static_cast<Eigen::Index>(field.windows.size()));
  for (Eigen::Index n = 0; n < field.count(); ++n) {
    const auto& wp = field.windows[static_cast<std::size_t>(n)];
    const auto maps = apply_filters(crop(img, wp.x, wp.y, spec.window, spec.window), d, spec);
    for (Eigen::Index j = 0; j < d.k(); ++j) {
      const auto q = sum_pool_quadrants(maps[static_cast<std::size_t>(j)]);
      for (int k = 0; k < 4; ++k) field.vectors(4 * j + k, n) = q[static_cast<std::size_t>(k)];
    }
  }
  return field;
}

/// Featurization sharing work between overlapping windows. Rectified
/// responses are computed once per sub-patch position for the whole image,
/// then quadrant sums are read from integral images taken over the h-strided
/// lattice. Matches featurize_direct up to round-off.
template <typename Scalar>
FeatureField<Scalar> featurize(const ImageGrid& img, const TissueMask& mask, const Dictionary<Scalar>& d,
                               const WindowSpec& spec, std::size_t max_buffer_values = std::size_t{1} << 24) {
  detail::check_provenance(d, img.channels, spec);
  FeatureField<Scalar> field;
  field.rows = window_grid_rows(img.height, spec);
  field.cols = window_grid_cols(img.width, spec);
  field.windows = extract_windows(img, mask, spec);
  const Eigen::Index k = d.k(), dim = d.dim();
  field.vectors.resize(4 * k, static_cast<Eigen::Index>(field.windows.size()));
  if (field.windows.empty()) return field;

  const int p = spec.filter, h = spec.filter_stride, g = spec.grid(), m = spec.split();
  const int ph = img.height - p + 1, pw = img.width - p + 1;
  const std::size_t plane = static_cast<std::size_t>(ph) * pw;

  // Fold normalization, centering and whitening into the filters:
  // D^T W (S x - t - mu) = F x - bias with S = diag(1/std), t = mean/std.
  using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic>;
  const Matrix dw = d.columns.template cast<double>().transpose() * d.whitening.matrix.template cast<double>();
  Matrix folded(k, dim);
  Eigen::VectorXd shift(dim);
  const Eigen::Index groups = d.norm.groups();
  for (Eigen::Index r = 0; r < dim; ++r) {
    const double sd = static_cast<double>(d.norm.stddev(r % groups));
    const double mu = static_cast<double>(d.norm.mean(r % groups));
    folded.col(r) = dw.col(r) / sd;
    shift(r) = mu / sd + static_cast<double>(d.whitening.mean(r));
  }
  const Eigen::VectorXd bias = dw * shift;

  const Eigen::Index chunk = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(max_buffer_values / plane), 1, k);
  std::vector<double> buffer(static_cast<std::size_t>(chunk) * plane);

  for (Eigen::Index j0 = 0; j0 < k; j0 += chunk) {
    const Eigen::Index kc = std::min(chunk, k - j0);
    const Matrix f = folded.middleRows(j0, kc);
    const Eigen::VectorXd b = bias.segment(j0, kc);

#pragma omp parallel for schedule(static)
    for (int y = 0; y < ph; ++y) {
      Matrix patches(dim, pw);
      for (int x = 0; x < pw; ++x) copy_patch<double>(img, x, y, p, patches.col(x));
      const Matrix resp = ((f * patches).colwise() - b).cwiseMax(0.0);
      for (Eigen::Index j = 0; j < kc; ++j) {
        double* row = &buffer[static_cast<std::size_t>(j) * plane + static_cast<std::size_t>(y) * pw];
        for (int x = 0; x < pw; ++x) row[x] = resp(j, x);
      }
    }

#pragma omp parallel for schedule(static)
    for (Eigen::Index j = 0; j < kc; ++j) {
      double* sat = &buffer[static_cast<std::size_t>(j) * plane];
      auto at = [&](int y, int x) -> double {
        return (y < 0 || x < 0) ? 0.0 : sat[static_cast<std::size_t>(y) * pw + x];
      };
      // In place: S(y,x) = R(y,x) + S(y-h,x) + S(y,x-h) - S(y-h,x-h).
      for (int y = 0; y < ph; ++y)
        for (int x = 0; x < pw; ++x)
          sat[static_cast<std::size_t>(y) * pw + x] += at(y - h, x) + at(y, x - h) - at(y - h, x - h);
      auto rect = [&](int ya, int xa, int yb, int xb) {
        const double v = at(yb, xb) - at(ya - h, xb) - at(yb, xa - h) + at(ya - h, xa - h);
        return v > 0.0 ? v : 0.0;
      };
      for (Eigen::Index n = 0; n < field.count(); ++n) {
        const auto& wp = field.windows[static_cast<std::size_t>(n)];
        const int top = wp.y, left = wp.x;
        const int mid_y = wp.y + m * h, mid_x = wp.x + m * h;
        const int last_top = wp.y + (m - 1) * h, last_left = wp.x + (m - 1) * h;
        const int bottom = wp.y + (g - 1) * h, right = wp.x + (g - 1) * h;
        const Eigen::Index row = 4 * (j0 + j);
        field.vectors(row + 0, n) = static_cast<Scalar>(rect(top, left, last_top, last_left));
        field.vectors(row + 1, n) = static_cast<Scalar>(rect(top, mid_x, last_top, right));
        field.vectors(row + 2, n) = static_cast<Scalar>(rect(mid_y, left, bottom, last_left));
        field.vectors(row + 3, n) = static_cast<Scalar>(rect(mid_y, mid_x, bottom, right));
      }
    }
  }
  return field;
}

}  // namespace skseg
