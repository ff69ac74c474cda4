#include "skseg/model_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include "skseg/errors.hpp"

namespace skseg {

namespace {

constexpr const char* kMagic = "SKSEG-MODEL";

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(sizeof(T) == 8 || sizeof(T) == 4);
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

void put_int(std::string& out, const char* name, long long value) {
  out += "int ";
  out += name;
  out += ' ';
  out += std::to_string(value);
  out += '\n';
}

template <typename Derived>
void put_array(std::string& out, const char* name, const Eigen::MatrixBase<Derived>& m) {
  out += "array ";
  out += name;
  out += ' ' + std::to_string(m.rows()) + ' ' + std::to_string(m.cols()) + '\n';
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) put_le(out, static_cast<double>(m(r, c)));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::string line() {
    const auto end = bytes_.find('\n', pos_);
    if (end == std::string::npos) throw DataError("model file truncated");
    std::string s = bytes_.substr(pos_, end - pos_);
    pos_ = end + 1;
    return s;
  }

  long long get_int(const std::string& name) {
    std::istringstream in(line());
    std::string tag, got;
    long long v = 0;
    if (!(in >> tag >> got >> v) || tag != "int" || got != name)
      throw DataError("model file: expected int field '" + name + "'");
    return v;
  }

  Eigen::MatrixXd get_array(const std::string& name) {
    std::istringstream in(line());
    std::string tag, got;
    long long rows = -1, cols = -1;
    if (!(in >> tag >> got >> rows >> cols) || tag != "array" || got != name || rows < 0 || cols < 0)
      throw DataError("model file: expected array '" + name + "'");
    const auto count = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    if (count > (bytes_.size() - pos_) / 8) throw DataError("model file truncated in array '" + name + "'");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
      for (Eigen::Index r = 0; r < rows; ++r) {
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 8;
        m(r, c) = std::bit_cast<double>(bits);
      }
    return m;
  }

  std::string peek_word() const {
    const auto end = bytes_.find_first_of(" \n", pos_);
    return bytes_.substr(pos_, end == std::string::npos ? std::string::npos : end - pos_);
  }
  std::string peek_name() const {
    const auto sp = bytes_.find(' ', pos_);
    if (sp == std::string::npos) return {};
    const auto end = bytes_.find_first_of(" \n", sp + 1);
    return bytes_.substr(sp + 1, end == std::string::npos ? std::string::npos : end - sp - 1);
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void PipelineModel::validate() const {
  const auto& d = dictionary;
  if (d.k() < 2 || d.dim() < 1) throw DataError("model dictionary is empty");
  if (d.dim() != static_cast<Eigen::Index>(d.patch_size) * d.patch_size * d.channels)
    throw DataError("model dictionary dimension does not match p*p*c");
  if (!d.has_preprocessing()) throw DataError("model lacks normalization/whitening statistics");
  if (d.whitening.mean.size() != d.dim()) throw DataError("model whitening mean has wrong length");
  if (kmeans) {
    if (kmeans->dim() != 4 * d.k())
      throw DataError("model clusterer dimension " + std::to_string(kmeans->dim()) + " is not 4K = " +
                      std::to_string(4 * d.k()));
    if (kmeans->clusters() < 2) throw DataError("model clusterer has fewer than two centers");
  }
}

std::string serialize_model(const PipelineModel& model) {
  model.validate();
  const auto& d = model.dictionary;
  std::string out;
  out += kMagic;
  out += '\n';
  out += "version " + std::to_string(kModelFormatVersion) + '\n';
  put_int(out, "patch_size", d.patch_size);
  put_int(out, "channels", d.channels);
  put_array(out, "norm_mean", d.norm.mean.transpose());
  put_array(out, "norm_std", d.norm.stddev.transpose());
  put_array(out, "zca_epsilon", Eigen::Matrix<double, 1, 1>::Constant(d.whitening.epsilon));
  put_array(out, "zca_mean", d.whitening.mean);
  put_array(out, "zca_matrix", d.whitening.matrix);
  put_array(out, "dictionary", d.columns);
  if (model.kmeans) {
    put_int(out, "kmeans_window", model.kmeans_window);
    put_int(out, "kmeans_filter_stride", model.kmeans_filter_stride);
    put_array(out, "kmeans_centers", model.kmeans->centers);
    put_array(out, "kmeans_inertia", Eigen::Matrix<double, 1, 1>::Constant(model.kmeans->inertia));
  }
  out += "end\n";
  return out;
}

PipelineModel deserialize_model(const std::string& bytes) {
  Reader in(bytes);
  if (in.line() != kMagic) throw DataError("not a model file (bad magic)");
  {
    std::istringstream v(in.line());
    std::string tag;
    int version = 0;
    if (!(v >> tag >> version) || tag != "version") throw DataError("model file: missing version line");
    if (version != kModelFormatVersion)
      throw DataError("unsupported model format version " + std::to_string(version));
  }
  PipelineModel m;
  auto& d = m.dictionary;
  d.patch_size = static_cast<int>(in.get_int("patch_size"));
  d.channels = static_cast<int>(in.get_int("channels"));
  d.norm.mean = in.get_array("norm_mean").transpose();
  d.norm.stddev = in.get_array("norm_std").transpose();
  const Eigen::MatrixXd eps = in.get_array("zca_epsilon");
  if (eps.size() != 1) throw DataError("model file: zca_epsilon must be a scalar");
  d.whitening.epsilon = eps(0, 0);
  const Eigen::MatrixXd zmean = in.get_array("zca_mean");
  if (zmean.cols() != 1) throw DataError("model file: zca_mean must be a column");
  d.whitening.mean = zmean.col(0);
  d.whitening.matrix = in.get_array("zca_matrix");
  d.columns = in.get_array("dictionary");
  if (in.peek_word() == "int" && in.peek_name() == "kmeans_window") {
    m.kmeans_window = static_cast<int>(in.get_int("kmeans_window"));
    m.kmeans_filter_stride = static_cast<int>(in.get_int("kmeans_filter_stride"));
    KMeansModel<double> km;
    km.centers = in.get_array("kmeans_centers");
    const Eigen::MatrixXd inertia = in.get_array("kmeans_inertia");
    if (inertia.size() != 1) throw DataError("model file: kmeans_inertia must be a scalar");
    km.inertia = inertia(0, 0);
    m.kmeans = std::move(km);
  }
  if (in.line() != "end" || !in.at_end()) throw DataError("model file: trailing or missing end marker");
  if (d.norm.mean.size() != d.norm.stddev.size() || d.norm.mean.size() < 1)
    throw DataError("model file: inconsistent normalization statistics");
  if (d.whitening.matrix.rows() != d.dim() || d.whitening.matrix.cols() != d.dim())
    throw DataError("model file: whitening matrix does not match dictionary dimension");
  m.validate();
  return m;
}

void save_model(const PipelineModel& model, const std::filesystem::path& path) {
  const std::string bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write model file: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("I/O error writing " + path.string());
}

PipelineModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file: " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

void write_feature_field(const FeatureField<double>& field, const std::filesystem::path& path) {
  const auto dim = static_cast<std::size_t>(field.dim());
  std::vector<float> values(static_cast<std::size_t>(field.rows) * field.cols * dim,
                            std::numeric_limits<float>::quiet_NaN());
  for (Eigen::Index n = 0; n < field.count(); ++n) {
    const auto& wp = field.windows[static_cast<std::size_t>(n)];
    const std::size_t base = (static_cast<std::size_t>(wp.row) * field.cols + wp.col) * dim;
    for (std::size_t k = 0; k < dim; ++k) values[base + k] = static_cast<float>(field.vectors(static_cast<Eigen::Index>(k), n));
  }
  std::string out = std::to_string(field.rows) + ' ' + std::to_string(field.cols) + ' ' + std::to_string(dim) + '\n';
  out.reserve(out.size() + values.size() * 4);
  for (float v : values) put_le(out, v);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write feature dump: " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("I/O error writing " + path.string());
}

}  // namespace skseg
