#include "skseg/commands.hpp"

#include <ostream>

#include "skseg/baselines.hpp"
#include "skseg/clustering.hpp"
#include "skseg/errors.hpp"
#include "skseg/features.hpp"
#include "skseg/patching.hpp"
#include "skseg/spherical_kmeans.hpp"

namespace skseg {

namespace {

std::filesystem::path with_suffix(const std::filesystem::path& prefix, const std::string& suffix) {
  return std::filesystem::path(prefix.string() + suffix);
}

std::filesystem::path labels_file(const std::filesystem::path& p) {
  return p.extension() == ".png" ? sidecar_path(p) : p;
}

}  // namespace

ImageGrid pipeline_input(const ImageGrid& img, const PipelineConfig& cfg) {
  return cfg.grayscale ? to_grayscale(img) : img;
}

PipelineModel train_model(const ImageGrid& img, const PipelineConfig& cfg, std::vector<TrainLogEntry>* log) {
  cfg.validate();
  img.validate();
  const ImageGrid input = pipeline_input(img, cfg);
  const TissueMask mask = tissue_mask(img, cfg.white_threshold);

  const PatchMatrix<double> raw =
      sample_training_patches<double>(input, mask, cfg.patches, cfg.patch_size, cfg.sample_seed, cfg.min_foreground);
  PipelineModel model;
  auto& d = model.dictionary;
  d.norm = fit_norm_stats(raw, cfg.per_channel_norm ? input.channels : 1);
  const PatchMatrix<double> normalized = apply_norm(raw, d.norm);
  d.whitening = fit_zca(normalized, cfg.zca_epsilon);
  const PatchMatrix<double> whitened = apply_zca(normalized, d.whitening);

  SphericalKMeansOptions<double> opt;
  opt.k = cfg.filters;
  opt.max_iters = cfg.dictionary_max_iters;
  opt.tol = cfg.dictionary_tol;
  opt.seed = cfg.dictionary_seed;
  auto result = train_spherical_kmeans(whitened, opt);
  d.columns = std::move(result.dictionary.columns);
  d.patch_size = cfg.patch_size;
  d.channels = input.channels;
  if (log) *log = std::move(result.log);
  return model;
}

LabelMap segment_image(const ImageGrid& img, PipelineModel& model, const PipelineConfig& cfg, bool refit_kmeans,
                       FeatureField<double>* features) {
  cfg.validate();
  img.validate();
  const ImageGrid input = pipeline_input(img, cfg);
  if (model.dictionary.channels != input.channels)
    throw DataError("model expects " + std::to_string(model.dictionary.channels) + "-channel input, image gives " +
                    std::to_string(input.channels));
  if (!refit_kmeans) {
    if (!model.kmeans) throw DataError("model has no stored clusterer; segment with refit to fit one");
    if (model.kmeans_window != cfg.window || model.kmeans_filter_stride != cfg.filter_stride)
      throw DataError("stored clusterer was fitted with w=" + std::to_string(model.kmeans_window) +
                      ", h=" + std::to_string(model.kmeans_filter_stride) + "; configuration uses w=" +
                      std::to_string(cfg.window) + ", h=" + std::to_string(cfg.filter_stride));
  }

  const TissueMask mask = tissue_mask(img, cfg.white_threshold);
  const WindowSpec spec = cfg.window_spec();
  FeatureField<double> field = featurize(input, mask, model.dictionary, spec);

  if (refit_kmeans) {
    KMeansOptions opt;
    opt.clusters = cfg.clusters;
    opt.seed = cfg.kmeans_seed;
    opt.max_iters = cfg.kmeans_max_iters;
    opt.tol = cfg.kmeans_tol;
    opt.restarts = cfg.kmeans_restarts;
    model.kmeans = kmeans_fit(field.vectors, opt);
    model.kmeans_window = cfg.window;
    model.kmeans_filter_stride = cfg.filter_stride;
  }
  const auto labels = kmeans_assign(field.vectors, *model.kmeans);
  LabelMap out = project_labels(field.windows, labels, spec, img.width, img.height, mask,
                                static_cast<int>(model.kmeans->clusters()));
  if (features) *features = std::move(field);
  return out;
}

void write_train_log(std::ostream& out, const std::vector<TrainLogEntry>& log) {
  const auto old = out.precision(12);
  out << "iteration,objective,movement,reseeded\n";
  for (const auto& e : log) out << e.iteration << ',' << e.objective << ',' << e.movement << ',' << e.reseeded << '\n';
  out.precision(old);
}

void cmd_train(const PipelineConfig& cfg, const std::filesystem::path& image, const std::filesystem::path& model_out,
               std::ostream& log) {
  cfg.validate();
  const ImageGrid img = load_image(image);
  std::vector<TrainLogEntry> trace;
  const PipelineModel model = train_model(img, cfg, &trace);
  save_model(model, model_out);
  write_train_log(log, trace);
  log << "wrote " << model_out.string() << ": " << model.dictionary.k() << " filters of dimension "
      << model.dictionary.dim() << '\n';
}

void cmd_segment(const PipelineConfig& cfg, const std::filesystem::path& model_path,
                 const std::filesystem::path& image, const SegmentOutputs& out, bool refit_kmeans, std::ostream& log) {
  cfg.validate();
  PipelineModel model = load_model(model_path);
  const ImageGrid img = load_image(image);
  FeatureField<double> field;
  const LabelMap lm = segment_image(img, model, cfg, refit_kmeans, out.feature_dump.empty() ? nullptr : &field);
  render_label_map(lm, default_palette(lm.num_classes), out.label_png);
  log << "wrote " << out.label_png.string() << " and " << sidecar_path(out.label_png).string() << '\n';
  if (!out.feature_dump.empty()) {
    write_feature_field(field, out.feature_dump);
    log << "wrote " << out.feature_dump.string() << '\n';
  }
  if (refit_kmeans) {
    const auto target = out.model_out.empty() ? model_path : out.model_out;
    save_model(model, target);
    log << "stored clusterer (inertia " << model.kmeans->inertia << ") in " << target.string() << '\n';
  }
}

void cmd_baseline(const std::string& method, const PipelineConfig& cfg, const std::filesystem::path& image,
                  const std::filesystem::path& out_png, std::ostream& log) {
  if (method != "otsu" && method != "pixel-kmeans")
    throw UsageError("unknown baseline method '" + method + "' (otsu, pixel-kmeans)");
  cfg.validate();
  const ImageGrid img = load_image(image);
  const TissueMask mask = tissue_mask(img, cfg.white_threshold);
  const LabelMap lm = method == "otsu"
                          ? otsu_multithreshold(img, mask, cfg.clusters)
                          : pixel_kmeans_segment(pipeline_input(img, cfg), mask, cfg.clusters, cfg.kmeans_seed,
                                                 cfg.kmeans_max_iters, cfg.kmeans_tol, cfg.kmeans_restarts);
  render_label_map(lm, default_palette(lm.num_classes), out_png);
  log << "wrote " << out_png.string() << " and " << sidecar_path(out_png).string() << '\n';
}

void cmd_evaluate(const std::vector<std::filesystem::path>& preds, const std::filesystem::path& truth, NmiNorm norm,
                  std::ostream& out) {
  if (preds.empty()) throw UsageError("evaluate needs at least one prediction");
  const LabelMap gt = read_label_sidecar(labels_file(truth));
  std::vector<double> scores;
  for (const auto& p : preds) {
    const auto report = evaluate_run(read_label_sidecar(labels_file(p)), gt, norm);
    if (preds.size() > 1) out << "# " << p.string() << '\n';
    write_report(out, report);
    scores.push_back(report.nmi);
    if (preds.size() > 1) out << '\n';
  }
  if (preds.size() > 1) {
    const auto old = out.precision(12);
    out << "prediction,nmi\n";
    for (std::size_t i = 0; i < preds.size(); ++i) out << preds[i].string() << ',' << scores[i] << '\n';
    out.precision(old);
  }
}

void cmd_synth(const TextureScene& scene, const std::filesystem::path& prefix, bool sibling,
               std::uint64_t sibling_noise_seed, std::ostream& log) {
  const SynthResult a = generate(scene);
  save_image(a.image, with_suffix(prefix, ".png"));
  write_label_sidecar(a.truth, with_suffix(prefix, ".labels.txt"));
  log << "wrote " << with_suffix(prefix, ".png").string() << " and " << with_suffix(prefix, ".labels.txt").string()
      << '\n';
  if (sibling) {
    TextureScene s = scene;
    s.noise_seed = sibling_noise_seed;
    const SynthResult b = generate(s);
    save_image(b.image, with_suffix(prefix, "_sibling.png"));
    write_label_sidecar(b.truth, with_suffix(prefix, "_sibling.labels.txt"));
    log << "wrote " << with_suffix(prefix, "_sibling.png").string() << " and "
        << with_suffix(prefix, "_sibling.labels.txt").string() << '\n';
  }
}

void cmd_render(const std::filesystem::path& labels, const std::filesystem::path& out_png) {
  const LabelMap lm = read_label_sidecar(labels_file(labels));
  render_label_map(lm, default_palette(lm.num_classes), out_png);
}

}  // namespace skseg
