#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "skseg/evaluation.hpp"
#include "skseg/features.hpp"

namespace skseg {

/// Every tunable of the pipeline. Defaults reproduce the reference setup:
/// N = 100000 patches of 5 x 5, K = 200 filters, 99 x 99 windows at stride 1,
/// filter stride 2, C = 3 clusters.
struct PipelineConfig {
  std::size_t patches = 100000;  // N
  int patch_size = 5;            // p
  int filters = 200;             // K
  int window = 99;               // w
  int window_stride = 1;         // s
  int filter_stride = 2;         // h
  int clusters = 3;              // C

  double white_threshold = 0.9;
  double min_foreground = 0.5;
  double zca_epsilon = 0.01;
  bool per_channel_norm = false;
  bool grayscale = false;  // learn on luma instead of all channels

  std::uint64_t sample_seed = 1;
  std::uint64_t dictionary_seed = 2;
  std::uint64_t kmeans_seed = 3;
  int dictionary_max_iters = 50;
  double dictionary_tol = 1e-4;
  int kmeans_max_iters = 100;
  double kmeans_tol = 1e-6;
  int kmeans_restarts = 10;

  NmiNorm nmi_norm = NmiNorm::arithmetic;
  int threads = 0;  // 0 = library default

  WindowSpec window_spec() const { return {window, window_stride, patch_size, filter_stride}; }

  /// Rejects invalid geometry and out-of-range values with UsageError.
  void validate() const;

  /// Applies one `key=value` setting; unknown keys raise UsageError.
  void set(const std::string& key, const std::string& value);
};

/// Reads `key = value` lines; blank lines and `#` comments are skipped.
void load_config_file(PipelineConfig& cfg, const std::filesystem::path& path);

void write_config(std::ostream& out, const PipelineConfig& cfg);

}  // namespace skseg
