// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "atrl/matrix.hpp"
#include "atrl/partitioner.hpp"

namespace atrl {

struct CreditResult;

/// printf("%.9g") — every number in emitted reports uses this.
std::string format_g9(double value);

/// One row of the per-token credit report.
struct CreditRow {
  std::size_t token = 0;
  double connectivity = 0.0;
  double phi = 0.0;
  std::uint32_t cluster = 0;
  double cluster_weight = 0.0;
  double token_adv = 0.0;
};

struct CreditReport {
  std::string mode;
  double seq_adv = 1.0;
  std::size_t k = 0;
  std::vector<CreditRow> rows;
};

CreditReport make_credit_report(const CreditResult& credit, double seq_adv, std::string mode);
void write_credit_report(const CreditReport& report, std::ostream& out);
CreditReport read_credit_report(std::istream& in);

/// Linear-interpolated percentile (0..100) of the values, as numpy's default.
double percentile(std::span<const double> values, double pct);

/// Equal-width histogram over [0, max(C)] plus the anchor statistics.
struct Histogram {
  std::vector<double> edges;         // bins + 1 entries
  std::vector<std::size_t> counts;   // bins entries
  double threshold = 0.0;            // (100 - 100 * top_fraction)-th percentile of C
  double top_fraction = 0.15;
  std::size_t above = 0;             // tokens with C strictly above the threshold
  std::size_t total = 0;

  double anchor_fraction() const noexcept {
    return total == 0 ? 0.0 : static_cast<double>(above) / static_cast<double>(total);
  }
};

Histogram make_histogram(std::span<const double> connectivity, std::size_t bins,
                         double top_fraction = 0.15);
void write_histogram(const Histogram& histogram, std::ostream& out);
Histogram read_histogram(std::istream& in);

/// Calibrated T x S matrix as tab-separated text.
void write_matrix(const Matrix& m, std::ostream& out);
Matrix read_matrix(std::istream& in);

/// Per-token cluster assignment plus its cut and balance.
void write_clustering(const Clustering& c, std::ostream& out);
Clustering read_clustering(std::istream& in);

/// Generic result table (ablation, sweep). Cells are plain strings without tabs.
struct Table {
  std::string kind;  // "ablation", "sweep", ...
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  friend bool operator==(const Table&, const Table&) = default;
};

void write_table(const Table& table, std::ostream& out);
Table read_table(std::istream& in);

}  // namespace atrl
