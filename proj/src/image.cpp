#include "skseg/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include "skseg/errors.hpp"

namespace skseg {

ImageGrid::ImageGrid(int w, int h, int c, double fill)
    : width(w), height(h), channels(c),
      data(static_cast<std::size_t>(w) * h * c, fill) {}

void ImageGrid::validate() const {
  if (width <= 0 || height <= 0) throw DataError("image has non-positive dimensions");
  if (channels != 1 && channels != 3) throw DataError("image must have 1 or 3 channels");
  if (data.size() != pixel_count() * channels) throw DataError("image data length does not match dimensions");
  for (double v : data)
    if (!(v >= 0.0 && v <= 1.0)) throw DataError("image intensity outside [0,1]");
}

TissueMask::TissueMask(int w, int h, bool fill)
    : width(w), height(h), bits(static_cast<std::size_t>(w) * h, fill ? 1 : 0) {}

std::size_t TissueMask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

LabelMap::LabelMap(int w, int h, int classes, int fill)
    : width(w), height(h), num_classes(classes),
      labels(static_cast<std::size_t>(w) * h, fill) {}

void LabelMap::validate() const {
  if (width <= 0 || height <= 0) throw DataError("label map has non-positive dimensions");
  if (labels.size() != static_cast<std::size_t>(width) * height)
    throw DataError("label map length does not match dimensions");
  for (int l : labels)
    if (l != kUnlabeled && (l < 0 || l >= num_classes))
      throw DataError("label " + std::to_string(l) + " outside [0," + std::to_string(num_classes) + ")");
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// Keeps libpng's message for the exception instead of printing it.
void png_error_to_string(png_structp png, png_const_charp msg) {
  *static_cast<std::string*>(png_get_error_ptr(png)) = msg;
  png_longjmp(png, 1);
}

void png_ignore_warning(png_structp, png_const_charp) {}

// libpng reports errors through longjmp; everything that must be cleaned up
// lives outside this function so no C++ destructor is skipped.
bool read_png_rows(std::FILE* fp, png_structp png, png_infop info,
                   std::vector<unsigned char>& buffer, png_uint_32& width,
                   png_uint_32& height, int& channels, int& bit_depth,
                   std::vector<png_bytep>& rows) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_init_io(png, fp);
  png_read_info(png, info);

  int color_type = 0;
  png_get_IHDR(png, info, &width, &height, &bit_depth, &color_type, nullptr, nullptr, nullptr);
  if (color_type == PNG_COLOR_TYPE_PALETTE) {
    png_set_palette_to_rgb(png);
    bit_depth = 8;
  }
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
    bit_depth = 8;
  }
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  channels = png_get_channels(png, info);
  bit_depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * height);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = buffer.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  return true;
}

}  // namespace

ImageGrid load_image(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw DataError("cannot open image: " + path.string());

  unsigned char sig[8] = {};
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw DataError("not a PNG file: " + path.string());

  std::string png_message;
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, &png_message, png_error_to_string, png_ignore_warning);
  if (!png) throw DataError("libpng initialisation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DataError("libpng initialisation failed");
  }
  png_set_sig_bytes(png, 8);

  std::vector<unsigned char> buffer;
  std::vector<png_bytep> rows;
  png_uint_32 w = 0, h = 0;
  int channels = 0, depth = 0;
  const bool ok = read_png_rows(fp.get(), png, info, buffer, w, h, channels, depth, rows);
  png_destroy_read_struct(&png, &info, nullptr);
  if (!ok) throw DataError("corrupt or truncated PNG: " + path.string() + " (" + png_message + ")");
  if (channels != 1 && channels != 3)
    throw DataError("unsupported PNG channel layout in " + path.string());
  if (depth != 8 && depth != 16)
    throw DataError("unsupported PNG bit depth " + std::to_string(depth) + " in " + path.string());

  ImageGrid img(static_cast<int>(w), static_cast<int>(h), channels);
  const std::size_t n = img.data.size();
  if (depth == 8) {
    for (std::size_t i = 0; i < n; ++i) img.data[i] = buffer[i] / 255.0;
  } else {
    for (std::size_t i = 0; i < n; ++i)
      img.data[i] = ((buffer[2 * i] << 8) | buffer[2 * i + 1]) / 65535.0;
  }
  return img;
}

namespace {

void write_png8(const std::filesystem::path& path, int width, int height, int channels,
                const std::vector<std::uint8_t>& bytes) {
  png_image out{};
  out.version = PNG_IMAGE_VERSION;
  out.width = static_cast<png_uint_32>(width);
  out.height = static_cast<png_uint_32>(height);
  out.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&out, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    std::string msg = out.message;
    png_image_free(&out);
    throw DataError("cannot write PNG " + path.string() + ": " + msg);
  }
}

}  // namespace

void save_image(const ImageGrid& img, const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes(img.data.size());
  std::transform(img.data.begin(), img.data.end(), bytes.begin(), [](double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
  });
  write_png8(path, img.width, img.height, img.channels, bytes);
}

ImageGrid to_grayscale(const ImageGrid& img) {
  if (img.channels == 1) return img;
  if (img.channels != 3) throw DataError("to_grayscale expects 1 or 3 channels");
  ImageGrid gray(img.width, img.height, 1);
  for (std::size_t i = 0; i < gray.data.size(); ++i) {
    const double* px = &img.data[3 * i];
    gray.data[i] = std::clamp(0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2], 0.0, 1.0);
  }
  return gray;
}

TissueMask tissue_mask(const ImageGrid& img, double white_threshold) {
  if (!(white_threshold > 0.0 && white_threshold <= 1.0))
    throw UsageError("white_threshold must lie in (0,1]");
  const ImageGrid gray = to_grayscale(img);
  TissueMask mask(img.width, img.height, false);
  for (std::size_t i = 0; i < gray.data.size(); ++i) mask.bits[i] = gray.data[i] < white_threshold ? 1 : 0;
  return mask;
}

std::vector<Rgb8> default_palette(int num_classes) {
  static const Rgb8 base[] = {{255, 0, 0},   {0, 255, 0},   {0, 0, 255},     {255, 255, 0},
                              {255, 0, 255}, {0, 255, 255}, {255, 128, 0},   {128, 0, 255},
                              {0, 128, 64},  {128, 128, 128}, {128, 64, 0}, {255, 192, 203}};
  std::vector<Rgb8> out;
  for (int i = 0; i < num_classes; ++i) {
    if (i < static_cast<int>(std::size(base))) {
      out.push_back(base[i]);
    } else {
      // Deterministic filler colors for large C.
      const auto v = static_cast<unsigned>(i) * 2654435761u;
      out.push_back({static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16),
                     static_cast<std::uint8_t>(v >> 8)});
    }
  }
  return out;
}

std::filesystem::path sidecar_path(const std::filesystem::path& png_path) {
  std::filesystem::path p = png_path;
  if (p.extension() == ".png") p.replace_extension();
  p += ".labels.txt";
  return p;
}

void render_label_map(const LabelMap& lm, std::span<const Rgb8> palette,
                      const std::filesystem::path& png_path) {
  lm.validate();
  if (static_cast<int>(palette.size()) < lm.num_classes)
    throw UsageError("palette has " + std::to_string(palette.size()) + " colors for " +
                     std::to_string(lm.num_classes) + " classes");
  std::vector<std::uint8_t> bytes(lm.labels.size() * 3, 0);
  for (std::size_t i = 0; i < lm.labels.size(); ++i) {
    const int l = lm.labels[i];
    if (l == LabelMap::kUnlabeled) continue;
    std::copy(palette[l].begin(), palette[l].end(), bytes.begin() + 3 * i);
  }
  write_png8(png_path, lm.width, lm.height, 3, bytes);
  write_label_sidecar(lm, sidecar_path(png_path));
}

void write_label_sidecar(const LabelMap& lm, const std::filesystem::path& path) {
  lm.validate();
  std::ofstream out(path);
  if (!out) throw DataError("cannot write label file: " + path.string());
  out << lm.width << ' ' << lm.height << ' ' << lm.num_classes << '\n';
  for (int y = 0; y < lm.height; ++y) {
    for (int x = 0; x < lm.width; ++x) {
      if (x) out << ' ';
      out << lm(x, y);
    }
    out << '\n';
  }
  if (!out) throw DataError("I/O error writing " + path.string());
}

LabelMap read_label_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open label file: " + path.string());
  int w = 0, h = 0, c = 0;
  if (!(in >> w >> h >> c) || w <= 0 || h <= 0 || c < 0)
    throw DataError("bad label file header: " + path.string());
  LabelMap lm(w, h, c);
  for (int& l : lm.labels)
    if (!(in >> l)) throw DataError("label file truncated: " + path.string());
  std::string extra;
  if (in >> extra) throw DataError("trailing data in label file: " + path.string());
  lm.validate();
  return lm;
}

}  // namespace skseg
