#pragma once

// Versioned binary model container and the optional feature-field dump.
//
// Model layout (all text lines end in '\n'):
//
//   SKSEG-MODEL
//   version 1
//   int <name> <value>                    -- integer field
//   array <name> <rows> <cols>            -- header, followed directly by
//   <rows*cols little-endian float64>     -- column-major payload
//   ...
//   end
//
// Sections, in order: patch_size, channels, norm_mean, norm_std, zca_epsilon,
// zca_mean, zca_matrix, dictionary, then (only when a clusterer is present)
// kmeans_window, kmeans_filter_stride, kmeans_centers, kmeans_inertia.

#include <filesystem>
#include <optional>
#include <string>

#include "skseg/clustering.hpp"
#include "skseg/features.hpp"
#include "skseg/spherical_kmeans.hpp"

namespace skseg {

inline constexpr int kModelFormatVersion = 1;

struct PipelineModel {
  Dictionary<double> dictionary;
  std::optional<KMeansModel<double>> kmeans;
  // Feature geometry the clusterer was fitted under.
  int kmeans_window = 0;
  int kmeans_filter_stride = 0;

  /// Throws DataError unless dictionary and clusterer dimensions agree.
  void validate() const;
};

std::string serialize_model(const PipelineModel& model);
PipelineModel deserialize_model(const std::string& bytes);

void save_model(const PipelineModel& model, const std::filesystem::path& path);
PipelineModel load_model(const std::filesystem::path& path);

/// ASCII header "rows cols dim\n", then little-endian float32 values
/// row-major over (rows, cols, dim). Windows rejected by the mask are NaN.
void write_feature_field(const FeatureField<double>& field, const std::filesystem::path& path);

}  // namespace skseg
