#include "skseg/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <ostream>

#include "skseg/errors.hpp"

namespace skseg {

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = first + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) throw UsageError("invalid value '" + text + "' for key '" + key + "'");
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "1" || text == "true" || text == "yes" || text == "on") return true;
  if (text == "0" || text == "false" || text == "no" || text == "off") return false;
  throw UsageError("invalid boolean '" + text + "' for key '" + key + "'");
}

}  // namespace

void PipelineConfig::set(const std::string& raw_key, const std::string& raw_value) {
  const std::string key = trim(raw_key), v = trim(raw_value);
  if (key == "patches" || key == "N") patches = parse_number<std::size_t>(key, v);
  else if (key == "patch_size" || key == "p") patch_size = parse_number<int>(key, v);
  else if (key == "filters" || key == "K") filters = parse_number<int>(key, v);
  else if (key == "window" || key == "w") window = parse_number<int>(key, v);
  else if (key == "window_stride" || key == "s") window_stride = parse_number<int>(key, v);
  else if (key == "filter_stride" || key == "h") filter_stride = parse_number<int>(key, v);
  else if (key == "clusters" || key == "C") clusters = parse_number<int>(key, v);
  else if (key == "white_threshold") white_threshold = parse_number<double>(key, v);
  else if (key == "min_foreground") min_foreground = parse_number<double>(key, v);
  else if (key == "zca_epsilon") zca_epsilon = parse_number<double>(key, v);
  else if (key == "per_channel_norm") per_channel_norm = parse_bool(key, v);
  else if (key == "grayscale") grayscale = parse_bool(key, v);
  else if (key == "sample_seed") sample_seed = parse_number<std::uint64_t>(key, v);
  else if (key == "dictionary_seed") dictionary_seed = parse_number<std::uint64_t>(key, v);
  else if (key == "kmeans_seed") kmeans_seed = parse_number<std::uint64_t>(key, v);
  else if (key == "seed") {
    const auto s = parse_number<std::uint64_t>(key, v);
    sample_seed = s;
    dictionary_seed = s + 1;
    kmeans_seed = s + 2;
  } else if (key == "dictionary_max_iters") dictionary_max_iters = parse_number<int>(key, v);
  else if (key == "dictionary_tol") dictionary_tol = parse_number<double>(key, v);
  else if (key == "kmeans_max_iters") kmeans_max_iters = parse_number<int>(key, v);
  else if (key == "kmeans_tol") kmeans_tol = parse_number<double>(key, v);
  else if (key == "kmeans_restarts") kmeans_restarts = parse_number<int>(key, v);
  else if (key == "nmi_norm") nmi_norm = parse_nmi_norm(v);
  else if (key == "threads") threads = parse_number<int>(key, v);
  else throw UsageError("unknown configuration key '" + key + "'");
}

void PipelineConfig::validate() const {
  window_spec().validate();
  if (patches == 0) throw UsageError("patches (N) must be positive");
  if (filters < 2) throw UsageError("filters (K) must be at least 2");
  if (clusters < 2) throw UsageError("clusters (C) must be at least 2");
  if (!(white_threshold > 0.0 && white_threshold <= 1.0)) throw UsageError("white_threshold must lie in (0,1]");
  if (!(min_foreground > 0.0 && min_foreground <= 1.0)) throw UsageError("min_foreground must lie in (0,1]");
  if (!(zca_epsilon >= 0.0)) throw UsageError("zca_epsilon must be non-negative");
  if (kmeans_restarts < 1) throw UsageError("kmeans_restarts must be at least 1");
  if (dictionary_max_iters < 1 || kmeans_max_iters < 1) throw UsageError("max_iters values must be at least 1");
  if (!(dictionary_tol >= 0.0) || !(kmeans_tol >= 0.0)) throw UsageError("tolerances must be non-negative");
  if (threads < 0) throw UsageError("threads must be non-negative");
}

void load_config_file(PipelineConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file: " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    cfg.set(line.substr(0, eq), line.substr(eq + 1));
  }
}

void write_config(std::ostream& out, const PipelineConfig& c) {
  out << "patches=" << c.patches << "\npatch_size=" << c.patch_size << "\nfilters=" << c.filters
      << "\nwindow=" << c.window << "\nwindow_stride=" << c.window_stride << "\nfilter_stride=" << c.filter_stride
      << "\nclusters=" << c.clusters << "\nwhite_threshold=" << c.white_threshold
      << "\nmin_foreground=" << c.min_foreground << "\nzca_epsilon=" << c.zca_epsilon
      << "\nper_channel_norm=" << c.per_channel_norm << "\ngrayscale=" << c.grayscale
      << "\nsample_seed=" << c.sample_seed << "\ndictionary_seed=" << c.dictionary_seed
      << "\nkmeans_seed=" << c.kmeans_seed << "\ndictionary_max_iters=" << c.dictionary_max_iters
      << "\ndictionary_tol=" << c.dictionary_tol << "\nkmeans_max_iters=" << c.kmeans_max_iters
      << "\nkmeans_tol=" << c.kmeans_tol << "\nkmeans_restarts=" << c.kmeans_restarts << "\nnmi_norm=" << to_string(c.nmi_norm) << "\nthreads=" << c.threads
      << '\n';
}

}  // namespace skseg
