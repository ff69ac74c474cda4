#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace skseg {

/// 2D raster with 1 or 3 interleaved channels, intensities in [0,1], row-major.
struct ImageGrid {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<double> data;

  ImageGrid() = default;
  ImageGrid(int w, int h, int c, double fill = 0.0);

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  double& at(int x, int y, int c = 0) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  double at(int x, int y, int c = 0) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }

  /// Throws DataError if the size or range invariants do not hold.
  void validate() const;
};

/// Foreground (tissue) map, one flag per pixel.
struct TissueMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  TissueMask() = default;
  TissueMask(int w, int h, bool fill);

  bool operator()(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  std::size_t count() const;
};

/// Per-pixel cluster labels, 0-based; kUnlabeled marks masked or uncovered pixels.
struct LabelMap {
  static constexpr int kUnlabeled = -1;

  int width = 0;
  int height = 0;
  int num_classes = 0;
  std::vector<int> labels;

  LabelMap() = default;
  LabelMap(int w, int h, int classes, int fill = kUnlabeled);

  int& operator()(int x, int y) { return labels[static_cast<std::size_t>(y) * width + x]; }
  int operator()(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }

  void validate() const;
  bool operator==(const LabelMap&) const = default;
};

using Rgb8 = std::array<std::uint8_t, 3>;

/// Reads an 8- or 16-bit grayscale/RGB PNG (alpha is dropped, palettes expanded).
ImageGrid load_image(const std::filesystem::path& path);

/// Writes an 8-bit PNG; intensities are clamped to [0,1] and rounded.
void save_image(const ImageGrid& img, const std::filesystem::path& path);

/// Luma with weights 0.299/0.587/0.114; grayscale input is returned as is.
ImageGrid to_grayscale(const ImageGrid& img);

/// Foreground iff grayscale intensity < white_threshold.
TissueMask tissue_mask(const ImageGrid& img, double white_threshold);

/// Default palette: red, green, blue, then a fixed list of distinct colors.
std::vector<Rgb8> default_palette(int num_classes);

/// Path of the integer sidecar that accompanies a rendered PNG
/// ("seg.png" -> "seg.labels.txt").
std::filesystem::path sidecar_path(const std::filesystem::path& png_path);

/// Writes the color PNG (unlabeled = black) and its `.labels.txt` sidecar.
void render_label_map(const LabelMap& lm, std::span<const Rgb8> palette,
                      const std::filesystem::path& png_path);

// Sidecar format: first line "width height num_classes", then one row of
// space-separated integers per image row, -1 for unlabeled.
void write_label_sidecar(const LabelMap& lm, const std::filesystem::path& path);
LabelMap read_label_sidecar(const std::filesystem::path& path);

}  // namespace skseg
