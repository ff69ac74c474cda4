#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>

#include "skseg/image.hpp"

namespace skseg {

/// Pixel counts n_uv (row u = predicted label, column v = true label) over
/// pixels labeled in both maps.
struct ContingencyTable {
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> counts;
  std::int64_t total = 0;

  Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1> row_sums() const { return counts.rowwise().sum(); }
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1> col_sums() const { return counts.colwise().sum().transpose(); }
};

enum class NmiNorm { arithmetic, geometric, max };

NmiNorm parse_nmi_norm(std::string_view name);
std::string_view to_string(NmiNorm norm);

ContingencyTable contingency(const LabelMap& pred, const LabelMap& truth);

/// Mutual information (natural log) normalized by the mean (arithmetic,
/// geometric) or maximum of the two entropies. Two single-cluster labelings
/// score 1. The result is clamped to [0,1].
double nmi(const ContingencyTable& table, NmiNorm norm = NmiNorm::arithmetic);

struct EvaluationReport {
  double nmi = 0;
  NmiNorm norm = NmiNorm::arithmetic;
  ContingencyTable table;
};

EvaluationReport evaluate_run(const LabelMap& pred, const LabelMap& truth, NmiNorm norm = NmiNorm::arithmetic);

/// `metric,value` CSV block, per-class counts, then the contingency table.
void write_report(std::ostream& out, const EvaluationReport& report);

}  // namespace skseg
