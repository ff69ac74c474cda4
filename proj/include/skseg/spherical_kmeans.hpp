#pragma once

// Spherical k-means dictionary learning.
//
// Minimizes sum_i ||D z_i - x_i||^2 subject to unit-norm dictionary columns
// and at most one non-zero entry per code vector, by alternating
//
//   z_i  <- D_j^T x_i at j = argmax_l |D_l^T x_i|, zero elsewhere
//   D'   <- X Z^T + D
//   D_j  <- D'_j / ||D'_j||
//
// The additive D term damps the update and keeps columns that attract no
// patches alive.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "skseg/errors.hpp"
#include "skseg/patching.hpp"

namespace skseg {

/// K unit-norm filters plus the preprocessing they were trained under, so a
/// dictionary can be reused on other images without refitting anything.
template <typename Scalar>
struct Dictionary {
  PatchMatrix<Scalar> columns;  // dim x K
  int patch_size = 0;
  int channels = 0;
  NormStats<Scalar> norm;
  WhiteningTransform<Scalar> whitening;

  Eigen::Index dim() const { return columns.rows(); }
  Eigen::Index k() const { return columns.cols(); }
  bool has_preprocessing() const { return norm.groups() > 0 && whitening.dim() == dim(); }
};

template <typename Scalar>
struct Code {
  Eigen::Index index = 0;
  Scalar value = 0;
};

/// One (index, value) pair per patch; every other entry of z_i is zero.
template <typename Scalar>
struct CodeMatrix {
  Eigen::Index k = 0;
  std::vector<Code<Scalar>> codes;

  Eigen::Index count() const { return static_cast<Eigen::Index>(codes.size()); }

  PatchMatrix<Scalar> dense() const {
    PatchMatrix<Scalar> z = PatchMatrix<Scalar>::Zero(k, count());
    for (Eigen::Index i = 0; i < count(); ++i) z(codes[i].index, i) = codes[i].value;
    return z;
  }
};

struct TrainLogEntry {
  int iteration = 0;
  double objective = 0;  // sum_i ||D z_i - x_i||^2 at this iteration's assignment
  double movement = 0;   // max_j (1 - old_j . new_j)
  int reseeded = 0;
};

template <typename Scalar>
struct SphericalKMeansOptions {
  Eigen::Index k = 200;
  int max_iters = 50;
  Scalar tol = Scalar(1e-4);
  std::uint64_t seed = 0;
  // Re-seed columns that received no patch in an iteration from the worst
  // represented patches.
  bool reseed_starved = true;
};

template <typename Scalar>
struct SphericalKMeansResult {
  Dictionary<Scalar> dictionary;
  std::vector<TrainLogEntry> log;
};

namespace detail {

template <typename ColumnType>
bool normalize_column(ColumnType&& col) {
  const auto n = col.norm();
  if (!(n > 0) || !std::isfinite(static_cast<double>(n))) return false;
  col /= n;
  return true;
}

}  // namespace detail

/// Standard Gaussian columns scaled to unit length.
template <typename Scalar = double>
Dictionary<Scalar> init_dictionary(Eigen::Index dim, Eigen::Index k, std::uint64_t seed) {
  if (k < 2) throw UsageError("dictionary needs at least two centroids");
  if (dim < 1) throw UsageError("dictionary dimension must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Dictionary<Scalar> d;
  d.columns.resize(dim, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    do {
      for (Eigen::Index r = 0; r < dim; ++r) d.columns(r, j) = static_cast<Scalar>(gauss(rng));
    } while (!detail::normalize_column(d.columns.col(j)));
  }
  return d;
}

/// argmax_l |D_l^T x_i| with the signed response as the value; ties go to the
/// lowest index.
template <typename Derived, typename Scalar = typename Derived::Scalar>
CodeMatrix<Scalar> assign_codes(const Eigen::MatrixBase<Derived>& x, const Dictionary<Scalar>& d) {
  if (x.rows() != d.dim())
    throw DataError("patch dimension " + std::to_string(x.rows()) + " does not match dictionary dimension " +
                    std::to_string(d.dim()));
  CodeMatrix<Scalar> z;
  z.k = d.k();
  z.codes.resize(static_cast<std::size_t>(x.cols()));

  constexpr Eigen::Index kBlock = 2048;
  const Eigen::Index blocks = (x.cols() + kBlock - 1) / kBlock;
#pragma omp parallel for schedule(static)
  for (Eigen::Index b = 0; b < blocks; ++b) {
    const Eigen::Index begin = b * kBlock;
    const Eigen::Index len = std::min(kBlock, x.cols() - begin);
    const PatchMatrix<Scalar> resp = d.columns.transpose() * x.middleCols(begin, len);
    for (Eigen::Index i = 0; i < len; ++i) {
      Eigen::Index best = 0;
      Scalar best_abs = std::abs(resp(0, i));
      for (Eigen::Index l = 1; l < resp.rows(); ++l) {
        const Scalar a = std::abs(resp(l, i));
        if (a > best_abs) {
          best_abs = a;
          best = l;
        }
      }
      Scalar value = resp(best, i);
      // The blocked product may round equal responses differently per column;
      // near-ties are re-scored in a fixed order so exact ties keep the lowest index.
      const Scalar slack = best_abs * Scalar(4 * d.dim()) * std::numeric_limits<Scalar>::epsilon();
      Eigen::Index near = 0;
      for (Eigen::Index l = 0; l < resp.rows() && near < 2; ++l)
        if (std::abs(resp(l, i)) >= best_abs - slack) ++near;
      if (near > 1) {
        best_abs = Scalar(-1);
        for (Eigen::Index l = 0; l < resp.rows(); ++l) {
          if (std::abs(resp(l, i)) < best_abs - 2 * slack) continue;
          Scalar dot = 0;
          for (Eigen::Index r = 0; r < d.dim(); ++r) dot += d.columns(r, l) * x(r, begin + i);
          if (std::abs(dot) > best_abs) {
            best_abs = std::abs(dot);
            best = l;
            value = dot;
          }
        }
      }
      z.codes[static_cast<std::size_t>(begin + i)] = {best, value};
    }
  }
  return z;
}

/// D' = X Z^T + D followed by column renormalization. A column whose D' is
/// exactly zero is replaced by a random normalized training patch drawn with
/// `reseed_seed`.
template <typename Derived, typename Scalar = typename Derived::Scalar>
Dictionary<Scalar> update_dictionary(const Eigen::MatrixBase<Derived>& x, const CodeMatrix<Scalar>& z,
                                     const Dictionary<Scalar>& d, std::uint64_t reseed_seed = 0) {
  if (x.rows() != d.dim() || z.count() != x.cols() || z.k != d.k())
    throw DataError("shape mismatch in dictionary update");
  Dictionary<Scalar> out = d;
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    const auto& c = z.codes[static_cast<std::size_t>(i)];
    if (c.value != Scalar(0)) out.columns.col(c.index) += c.value * x.col(i);
  }
  std::mt19937_64 rng(reseed_seed);
  for (Eigen::Index j = 0; j < out.k(); ++j) {
    if (detail::normalize_column(out.columns.col(j))) continue;
    bool done = false;
    if (x.cols() > 0) {
      std::uniform_int_distribution<Eigen::Index> pick(0, x.cols() - 1);
      for (int attempt = 0; attempt < 64 && !done; ++attempt) {
        out.columns.col(j) = x.col(pick(rng));
        done = detail::normalize_column(out.columns.col(j));
      }
    }
    if (!done) {
      out.columns.col(j).setZero();
      out.columns(j % out.dim(), j) = Scalar(1);
    }
  }
  return out;
}

/// sum_i ||D z_i - x_i||^2, using that D has unit columns and z_i is 1-sparse.
template <typename Derived, typename Scalar = typename Derived::Scalar>
double reconstruction_objective(const Eigen::MatrixBase<Derived>& x, const CodeMatrix<Scalar>& z) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    const double v = static_cast<double>(z.codes[static_cast<std::size_t>(i)].value);
    total += static_cast<double>(x.col(i).squaredNorm()) - v * v;
  }
  return total;
}

template <typename Derived, typename Scalar = typename Derived::Scalar>
SphericalKMeansResult<Scalar> train_spherical_kmeans(const Eigen::MatrixBase<Derived>& x,
                                                     const SphericalKMeansOptions<Scalar>& opt) {
  if (opt.max_iters < 1) throw UsageError("max_iters must be at least 1");
  if (x.cols() < 1) throw DataError("no training patches");

  SphericalKMeansResult<Scalar> res;
  Dictionary<Scalar> d = init_dictionary<Scalar>(x.rows(), opt.k, opt.seed);
  std::mt19937_64 seeds(opt.seed ^ 0x9e3779b97f4a7c15ULL);

  for (int it = 1; it <= opt.max_iters; ++it) {
    const CodeMatrix<Scalar> z = assign_codes(x, d);
    Dictionary<Scalar> next = update_dictionary(x, z, d, seeds());

    TrainLogEntry entry;
    entry.iteration = it;
    entry.objective = reconstruction_objective(x, z);

    if (opt.reseed_starved) {
      std::vector<char> used(static_cast<std::size_t>(d.k()), 0);
      for (const auto& c : z.codes)
        if (c.value != Scalar(0)) used[static_cast<std::size_t>(c.index)] = 1;
      std::vector<Eigen::Index> starved;
      for (Eigen::Index j = 0; j < d.k(); ++j)
        if (!used[static_cast<std::size_t>(j)]) starved.push_back(j);
      if (!starved.empty()) {
        // Worst represented first: smallest share of the patch norm explained
        // by its best column.
        std::vector<double> explained(static_cast<std::size_t>(x.cols()));
        for (Eigen::Index i = 0; i < x.cols(); ++i) {
          const double n = static_cast<double>(x.col(i).norm());
          explained[static_cast<std::size_t>(i)] =
              n > 0 ? std::abs(static_cast<double>(z.codes[static_cast<std::size_t>(i)].value)) / n : 2.0;
        }
        std::vector<Eigen::Index> order(static_cast<std::size_t>(x.cols()));
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        const std::size_t take = std::min(starved.size(), order.size());
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                          [&](Eigen::Index a, Eigen::Index b) {
                            const double ea = explained[static_cast<std::size_t>(a)];
                            const double eb = explained[static_cast<std::size_t>(b)];
                            return ea < eb || (ea == eb && a < b);
                          });
        for (std::size_t s = 0; s < take; ++s) {
          if (!(explained[static_cast<std::size_t>(order[s])] < 1.0)) break;
          next.columns.col(starved[s]) = x.col(order[s]);
          detail::normalize_column(next.columns.col(starved[s]));
          ++entry.reseeded;
        }
      }
    }

    double movement = 0.0;
    for (Eigen::Index j = 0; j < d.k(); ++j)
      movement = std::max(movement, 1.0 - static_cast<double>(d.columns.col(j).dot(next.columns.col(j))));
    entry.movement = movement;
    res.log.push_back(entry);
    d = std::move(next);
    if (movement < static_cast<double>(opt.tol)) break;
  }
  res.dictionary = std::move(d);
  return res;
}

}  // namespace skseg
