// skseg: unsupervised texture segmentation from a learned filter dictionary.
//
//   skseg synth    --out scene [--sibling]
//   skseg train    --image scene.png --model model.bin
//   skseg segment  --model model.bin --image scene.png --out seg.png --refit
//   skseg baseline --method otsu --image scene.png --out otsu.png
//   skseg evaluate --truth scene.labels.txt seg.labels.txt otsu.labels.txt
//   skseg render   --labels seg.labels.txt --out seg.png
//
// Exit status: 0 ok, 1 usage/config error, 2 data error, 3 numerical failure.

#include <CLI11.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "skseg/commands.hpp"
#include "skseg/errors.hpp"

namespace {

struct ConfigFlags {
  std::string config_file;
  std::vector<std::string> overrides;
  std::size_t patches = 0;
  int filters = 0, window = 0, stride = 0, filter_stride = 0, patch_size = 0, clusters = 0, threads = -1;
  long long seed = -1;
  std::string nmi_norm;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_file, "key=value configuration file")->check(CLI::ExistingFile);
    cmd->add_option("--set", overrides, "override a configuration key (key=value), repeatable");
    cmd->add_option("-N,--patches", patches, "training patches N");
    cmd->add_option("-p,--patch-size", patch_size, "patch/filter size p");
    cmd->add_option("-K,--filters", filters, "dictionary size K");
    cmd->add_option("-w,--window", window, "window size w");
    cmd->add_option("-s,--stride", stride, "window stride s");
    cmd->add_option("--filter-stride", filter_stride, "filter stride h");
    cmd->add_option("-C,--clusters", clusters, "number of clusters C");
    cmd->add_option("--seed", seed, "base seed for sampling, dictionary and k-means");
    cmd->add_option("--threads", threads, "worker thread cap (0 = default)");
  }

  skseg::PipelineConfig build() const {
    skseg::PipelineConfig cfg;
    if (!config_file.empty()) skseg::load_config_file(cfg, config_file);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw skseg::UsageError("--set expects key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (patches) cfg.patches = patches;
    if (patch_size) cfg.patch_size = patch_size;
    if (filters) cfg.filters = filters;
    if (window) cfg.window = window;
    if (stride) cfg.window_stride = stride;
    if (filter_stride) cfg.filter_stride = filter_stride;
    if (clusters) cfg.clusters = clusters;
    if (seed >= 0) cfg.set("seed", std::to_string(seed));
    if (threads >= 0) cfg.threads = threads;
    if (!nmi_norm.empty()) cfg.nmi_norm = skseg::parse_nmi_norm(nmi_norm);
    cfg.validate();
#ifdef _OPENMP
    if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
#endif
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unsupervised texture segmentation with a spherical k-means filter dictionary"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic multi-texture scene with ground truth");
  std::string synth_out;
  int synth_w = 512, synth_h = 512;
  std::uint64_t layout_seed = 1, noise_seed = 1, sibling_seed = 2;
  bool sibling = false, synth_gray = false;
  synth->add_option("--out", synth_out, "output prefix")->required();
  synth->add_option("--width", synth_w, "image width");
  synth->add_option("--height", synth_h, "image height");
  synth->add_option("--layout-seed", layout_seed, "seed of the region layout");
  synth->add_option("--noise-seed", noise_seed, "seed of the pixel noise");
  synth->add_flag("--sibling", sibling, "also write a sibling slice with new noise");
  synth->add_option("--sibling-seed", sibling_seed, "noise seed of the sibling slice");
  synth->add_flag("--grayscale", synth_gray, "single-channel output");

  // train
  auto* train = app.add_subcommand("train", "learn the filter dictionary from one image");
  ConfigFlags train_cfg;
  train_cfg.attach(train);
  std::string train_image, train_model, train_log;
  train->add_option("--image", train_image, "input PNG")->required();
  train->add_option("--model", train_model, "model file to write")->required();
  train->add_option("--log", train_log, "write the training log CSV here instead of stdout");

  // segment
  auto* segment = app.add_subcommand("segment", "featurize, cluster and project labels");
  ConfigFlags seg_cfg;
  seg_cfg.attach(segment);
  std::string seg_model, seg_image, seg_out, seg_model_out, seg_dump;
  bool refit = false;
  segment->add_option("--model", seg_model, "model file")->required();
  segment->add_option("--image", seg_image, "input PNG")->required();
  segment->add_option("--out", seg_out, "label PNG to write (sidecar written alongside)")->required();
  segment->add_flag("--refit", refit, "fit the k-means clusterer on this image and store it in the model");
  segment->add_option("--model-out", seg_model_out, "where to store the refit model (default: --model)");
  segment->add_option("--dump-features", seg_dump, "write the feature field as float32 binary");

  // baseline
  auto* baseline = app.add_subcommand("baseline", "multithreshold Otsu or pixel k-means segmentation");
  ConfigFlags base_cfg;
  base_cfg.attach(baseline);
  std::string method, base_image, base_out;
  baseline->add_option("--method", method, "otsu | pixel-kmeans")->required();
  baseline->add_option("--image", base_image, "input PNG")->required();
  baseline->add_option("--out", base_out, "label PNG to write")->required();

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "NMI of predicted label maps against ground truth");
  std::string truth, nmi_norm = "arithmetic";
  std::vector<std::string> preds;
  evaluate->add_option("--truth", truth, "ground-truth label sidecar")->required();
  evaluate->add_option("preds", preds, "predicted label sidecars (or their PNGs)")->required();
  evaluate->add_option("--nmi-norm", nmi_norm, "arithmetic | geometric | max");

  // render
  auto* render = app.add_subcommand("render", "render a label sidecar as a color PNG");
  std::string render_in, render_out;
  render->add_option("--labels", render_in, "label sidecar")->required();
  render->add_option("--out", render_out, "PNG to write")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*synth) {
      skseg::TextureScene scene = skseg::default_scene(layout_seed, noise_seed);
      scene.width = synth_w;
      scene.height = synth_h;
      if (synth_gray) scene.channels = 1;
      skseg::cmd_synth(scene, synth_out, sibling, sibling_seed, std::cout);
    } else if (*train) {
      const auto cfg = train_cfg.build();
      if (train_log.empty()) {
        skseg::cmd_train(cfg, train_image, train_model, std::cout);
      } else {
        std::ofstream log(train_log);
        if (!log) throw skseg::DataError("cannot write log file: " + train_log);
        skseg::cmd_train(cfg, train_image, train_model, log);
      }
    } else if (*segment) {
      const auto cfg = seg_cfg.build();
      skseg::SegmentOutputs out{seg_out, seg_model_out, seg_dump};
      skseg::cmd_segment(cfg, seg_model, seg_image, out, refit, std::cout);
    } else if (*baseline) {
      const auto cfg = base_cfg.build();
      skseg::cmd_baseline(method, cfg, base_image, base_out, std::cout);
    } else if (*evaluate) {
      std::vector<std::filesystem::path> paths(preds.begin(), preds.end());
      skseg::cmd_evaluate(paths, truth, skseg::parse_nmi_norm(nmi_norm), std::cout);
    } else if (*render) {
      skseg::cmd_render(render_in, render_out);
    }
  } catch (const skseg::UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const skseg::DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const skseg::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
