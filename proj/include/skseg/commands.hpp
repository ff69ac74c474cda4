#pragma once

// Subcommand bodies, callable from the CLI and from tests. Failures raise
// UsageError, DataError or NumericalError.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "skseg/config.hpp"
#include "skseg/image.hpp"
#include "skseg/model_io.hpp"
#include "skseg/synth.hpp"

namespace skseg {

/// Image as consumed by the learning pipeline (luma if cfg.grayscale).
ImageGrid pipeline_input(const ImageGrid& img, const PipelineConfig& cfg);

/// Mask, sample, normalize, whiten, learn the dictionary.
PipelineModel train_model(const ImageGrid& img, const PipelineConfig& cfg, std::vector<TrainLogEntry>* log = nullptr);

/// Featurize, optionally refit the clusterer (stored into `model`), project.
LabelMap segment_image(const ImageGrid& img, PipelineModel& model, const PipelineConfig& cfg, bool refit_kmeans,
                       FeatureField<double>* features = nullptr);

void write_train_log(std::ostream& out, const std::vector<TrainLogEntry>& log);

void cmd_train(const PipelineConfig& cfg, const std::filesystem::path& image, const std::filesystem::path& model_out,
               std::ostream& log);

struct SegmentOutputs {
  std::filesystem::path label_png;
  std::filesystem::path model_out;      // written when the clusterer was refit
  std::filesystem::path feature_dump;   // optional
};

void cmd_segment(const PipelineConfig& cfg, const std::filesystem::path& model_path,
                 const std::filesystem::path& image, const SegmentOutputs& out, bool refit_kmeans, std::ostream& log);

void cmd_baseline(const std::string& method, const PipelineConfig& cfg, const std::filesystem::path& image,
                  const std::filesystem::path& out_png, std::ostream& log);

/// One full report per prediction, then a `name,nmi` summary when several
/// predictions are given.
void cmd_evaluate(const std::vector<std::filesystem::path>& preds, const std::filesystem::path& truth, NmiNorm norm,
                  std::ostream& out);

/// Writes <prefix>.png and <prefix>.labels.txt; with `sibling`, also
/// <prefix>_sibling.png/.labels.txt (same regions, new noise).
void cmd_synth(const TextureScene& scene, const std::filesystem::path& prefix, bool sibling,
               std::uint64_t sibling_noise_seed, std::ostream& log);

void cmd_render(const std::filesystem::path& labels, const std::filesystem::path& out_png);

}  // namespace skseg
