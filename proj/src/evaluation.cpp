#include "skseg/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "skseg/errors.hpp"

namespace skseg {

NmiNorm parse_nmi_norm(std::string_view name) {
  if (name == "arithmetic") return NmiNorm::arithmetic;
  if (name == "geometric") return NmiNorm::geometric;
  if (name == "max") return NmiNorm::max;
  throw UsageError("unknown NMI normalization '" + std::string(name) + "' (arithmetic, geometric, max)");
}

std::string_view to_string(NmiNorm norm) {
  switch (norm) {
    case NmiNorm::arithmetic: return "arithmetic";
    case NmiNorm::geometric: return "geometric";
    case NmiNorm::max: return "max";
  }
  return "arithmetic";
}

ContingencyTable contingency(const LabelMap& pred, const LabelMap& truth) {
  if (pred.width != truth.width || pred.height != truth.height)
    throw DataError("label maps differ in size: " + std::to_string(pred.width) + "x" + std::to_string(pred.height) +
                    " vs " + std::to_string(truth.width) + "x" + std::to_string(truth.height));
  pred.validate();
  truth.validate();
  ContingencyTable t;
  t.counts.setZero(std::max(pred.num_classes, 1), std::max(truth.num_classes, 1));
  for (std::size_t i = 0; i < pred.labels.size(); ++i) {
    const int u = pred.labels[i], v = truth.labels[i];
    if (u == LabelMap::kUnlabeled || v == LabelMap::kUnlabeled) continue;
    ++t.counts(u, v);
    ++t.total;
  }
  if (t.total == 0) throw DataError("no pixel is labeled in both maps");
  return t;
}

namespace {

double entropy(const Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1>& marginal, double n) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < marginal.size(); ++i) {
    if (marginal(i) == 0) continue;
    const double p = static_cast<double>(marginal(i)) / n;
    h -= p * std::log(p);
  }
  return h;
}

}  // namespace

double nmi(const ContingencyTable& table, NmiNorm norm) {
  const double n = static_cast<double>(table.total);
  if (!(n > 0)) throw DataError("empty contingency table");
  const auto a = table.row_sums();
  const auto b = table.col_sums();
  const double hu = entropy(a, n), hv = entropy(b, n);
  if (hu + hv == 0.0) return 1.0;

  double mi = 0.0;
  for (Eigen::Index u = 0; u < table.counts.rows(); ++u)
    for (Eigen::Index v = 0; v < table.counts.cols(); ++v) {
      const auto nuv = table.counts(u, v);
      if (nuv == 0) continue;
      const double c = static_cast<double>(nuv);
      mi += (c / n) * std::log(n * c / (static_cast<double>(a(u)) * static_cast<double>(b(v))));
    }

  double denom = 0.0;
  switch (norm) {
    case NmiNorm::arithmetic: denom = 0.5 * (hu + hv); break;
    case NmiNorm::geometric: denom = std::sqrt(hu * hv); break;
    case NmiNorm::max: denom = std::max(hu, hv); break;
  }
  if (!(denom > 0.0)) return 0.0;
  return std::clamp(mi / denom, 0.0, 1.0);
}

EvaluationReport evaluate_run(const LabelMap& pred, const LabelMap& truth, NmiNorm norm) {
  EvaluationReport r;
  r.table = contingency(pred, truth);
  r.nmi = nmi(r.table, norm);
  r.norm = norm;
  return r;
}

void write_report(std::ostream& out, const EvaluationReport& report) {
  const auto a = report.table.row_sums();
  const auto b = report.table.col_sums();
  const auto old_precision = out.precision(12);
  out << "metric,value\n";
  out << "nmi," << report.nmi << '\n';
  out << "nmi_norm," << to_string(report.norm) << '\n';
  out << "pixels_scored," << report.table.total << '\n';
  for (Eigen::Index u = 0; u < a.size(); ++u) out << "pred_class_" << u << "," << a(u) << '\n';
  for (Eigen::Index v = 0; v < b.size(); ++v) out << "truth_class_" << v << "," << b(v) << '\n';
  out << '\n' << "pred\\truth";
  for (Eigen::Index v = 0; v < b.size(); ++v) out << ',' << v;
  out << '\n';
  for (Eigen::Index u = 0; u < a.size(); ++u) {
    out << u;
    for (Eigen::Index v = 0; v < b.size(); ++v) out << ',' << report.table.counts(u, v);
    out << '\n';
  }
  out.precision(old_precision);
}

}  // namespace skseg
