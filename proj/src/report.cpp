// SPDX-License-Identifier: Apache-2.0

#include "atrl/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "atrl/error.hpp"
#include "atrl/pipeline.hpp"

namespace atrl {
namespace {

constexpr const char* kCreditMagic = "# atrl-credit-report v1";
constexpr const char* kCreditColumns = "token\tconnectivity\tphi\tcluster\tcluster_weight\ttoken_adv";
constexpr const char* kHistogramMagic = "# atrl-histogram v1";
constexpr const char* kHistogramColumns = "lo\thi\tcount";

// Parses "key=value" fields following "# " on a header line.
std::vector<std::pair<std::string, std::string>> header_fields(const std::string& line) {
  if (line.rfind("# ", 0) != 0) throw Error(ErrorCode::kMalformedInput, "expected a '# key=value' header line");
  std::istringstream in(line.substr(2));
  std::vector<std::pair<std::string, std::string>> out;
  std::string field;
  while (in >> field) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::kMalformedInput, "header field without '='");
    out.emplace_back(field.substr(0, eq), field.substr(eq + 1));
  }
  return out;
}

std::string require_line(std::istream& in, const char* what) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kMalformedInput, std::string("missing ") + what);
  return line;
}

double to_double(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::kMalformedInput, "not a number: '" + s + "'");
  }
}

std::size_t to_size(const std::string& s) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw Error(ErrorCode::kMalformedInput, "not a count: '" + s + "'");
  }
}

}  // namespace

std::string format_g9(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", value);
  return buf;
}

CreditReport make_credit_report(const CreditResult& credit, double seq_adv, std::string mode) {
  CreditReport report;
  report.mode = std::move(mode);
  report.seq_adv = seq_adv;
  report.k = credit.clustering.k;
  const std::size_t n = credit.connectivity.size();
  report.rows.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    auto& row = report.rows[t];
    row.token = t;
    row.connectivity = credit.connectivity[t];
    row.phi = credit.phi[t];
    row.cluster = credit.clustering.assignment[t];
    row.cluster_weight = credit.cluster_weight[row.cluster];
    row.token_adv = credit.token_weight[t] * seq_adv;
  }
  return report;
}

void write_credit_report(const CreditReport& report, std::ostream& out) {
  out << kCreditMagic << '\n';
  out << "# T=" << report.rows.size() << " K=" << report.k << " seq_adv=" << format_g9(report.seq_adv)
      << " mode=" << report.mode << '\n';
  out << kCreditColumns << '\n';
  for (const auto& r : report.rows) {
    out << r.token << '\t' << format_g9(r.connectivity) << '\t' << format_g9(r.phi) << '\t'
        << r.cluster << '\t' << format_g9(r.cluster_weight) << '\t' << format_g9(r.token_adv)
        << '\n';
  }
}

CreditReport read_credit_report(std::istream& in) {
  if (require_line(in, "report magic") != kCreditMagic) {
    throw Error(ErrorCode::kMalformedInput, "not a credit report");
  }
  CreditReport report;
  std::size_t t_len = 0;
  bool have_t = false;
  for (const auto& [key, value] : header_fields(require_line(in, "report header"))) {
    if (key == "T") {
      t_len = to_size(value);
      have_t = true;
    } else if (key == "K") {
      report.k = to_size(value);
    } else if (key == "seq_adv") {
      report.seq_adv = to_double(value);
    } else if (key == "mode") {
      report.mode = value;
    }
  }
  if (!have_t) throw Error(ErrorCode::kMalformedInput, "credit report header lacks T");
  if (require_line(in, "column header") != kCreditColumns) {
    throw Error(ErrorCode::kMalformedInput, "unexpected credit report columns");
  }
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row_in(line);
    std::string token, conn, phi, cluster, weight, adv;
    if (!(std::getline(row_in, token, '\t') && std::getline(row_in, conn, '\t') &&
          std::getline(row_in, phi, '\t') && std::getline(row_in, cluster, '\t') &&
          std::getline(row_in, weight, '\t') && std::getline(row_in, adv))) {
      throw Error(ErrorCode::kMalformedInput, "credit row needs 6 tab-separated fields");
    }
    CreditRow r;
    r.token = to_size(token);
    r.connectivity = to_double(conn);
    r.phi = to_double(phi);
    r.cluster = static_cast<std::uint32_t>(to_size(cluster));
    r.cluster_weight = to_double(weight);
    r.token_adv = to_double(adv);
    report.rows.push_back(r);
  }
  if (report.rows.size() != t_len) {
    throw Error(ErrorCode::kLengthMismatch, "credit report declares T=" + std::to_string(t_len) +
                                                " but has " + std::to_string(report.rows.size()) + " rows");
  }
  return report;
}

double percentile(std::span<const double> values, double pct) {
  if (values.empty()) throw Error(ErrorCode::kInvalidParameter, "percentile of an empty set");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = std::clamp(pct, 0.0, 100.0) / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

Histogram make_histogram(std::span<const double> connectivity, std::size_t bins, double top_fraction) {
  if (bins == 0) throw Error(ErrorCode::kInvalidParameter, "histogram needs at least one bin");
  if (!(top_fraction > 0.0 && top_fraction <= 1.0)) {
    throw Error(ErrorCode::kBadFraction, "top fraction must lie in (0, 1]");
  }
  Histogram h;
  h.top_fraction = top_fraction;
  h.total = connectivity.size();
  h.counts.assign(bins, 0);
  const double top = connectivity.empty() ? 0.0 : *std::max_element(connectivity.begin(), connectivity.end());
  const double width = top > 0.0 ? top / static_cast<double>(bins) : 1.0 / static_cast<double>(bins);
  h.edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) h.edges[b] = width * static_cast<double>(b);
  for (double c : connectivity) {
    auto b = static_cast<std::size_t>(c / width);
    ++h.counts[std::min(b, bins - 1)];
  }
  if (!connectivity.empty()) {
    h.threshold = percentile(connectivity, 100.0 * (1.0 - top_fraction));
    h.above = static_cast<std::size_t>(
        std::count_if(connectivity.begin(), connectivity.end(), [&](double c) { return c > h.threshold; }));
  }
  return h;
}

void write_histogram(const Histogram& h, std::ostream& out) {
  out << kHistogramMagic << '\n';
  out << "# bins=" << h.counts.size() << " total=" << h.total << " top_fraction=" << format_g9(h.top_fraction)
      << " threshold=" << format_g9(h.threshold) << " above=" << h.above
      << " anchor_fraction=" << format_g9(h.anchor_fraction()) << '\n';
  out << kHistogramColumns << '\n';
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    out << format_g9(h.edges[b]) << '\t' << format_g9(h.edges[b + 1]) << '\t' << h.counts[b] << '\n';
  }
}

Histogram read_histogram(std::istream& in) {
  if (require_line(in, "histogram magic") != kHistogramMagic) {
    throw Error(ErrorCode::kMalformedInput, "not a histogram file");
  }
  Histogram h;
  std::size_t bins = 0;
  for (const auto& [key, value] : header_fields(require_line(in, "histogram header"))) {
    if (key == "bins") bins = to_size(value);
    else if (key == "total") h.total = to_size(value);
    else if (key == "top_fraction") h.top_fraction = to_double(value);
    else if (key == "threshold") h.threshold = to_double(value);
    else if (key == "above") h.above = to_size(value);
  }
  if (require_line(in, "column header") != kHistogramColumns) {
    throw Error(ErrorCode::kMalformedInput, "unexpected histogram columns");
  }
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row_in(line);
    std::string lo, hi, count;
    if (!(std::getline(row_in, lo, '\t') && std::getline(row_in, hi, '\t') && std::getline(row_in, count))) {
      throw Error(ErrorCode::kMalformedInput, "histogram row needs 3 tab-separated fields");
    }
    if (h.edges.empty()) h.edges.push_back(to_double(lo));
    h.edges.push_back(to_double(hi));
    h.counts.push_back(to_size(count));
  }
  if (h.counts.size() != bins) throw Error(ErrorCode::kLengthMismatch, "histogram bin count mismatch");
  return h;
}

void write_matrix(const Matrix& m, std::ostream& out) {
  out << "# atrl-matrix v1\n# rows=" << m.rows() << " cols=" << m.cols() << '\n';
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) out << (j ? "\t" : "") << format_g9(m(i, j));
    out << '\n';
  }
}

Matrix read_matrix(std::istream& in) {
  if (require_line(in, "matrix magic") != "# atrl-matrix v1") throw Error(ErrorCode::kMalformedInput, "not a matrix file");
  std::size_t rows = 0, cols = 0;
  for (const auto& [key, value] : header_fields(require_line(in, "matrix header"))) {
    if (key == "rows") rows = to_size(value);
    else if (key == "cols") cols = to_size(value);
  }
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    std::istringstream row_in(require_line(in, "matrix row"));
    std::string cell;
    std::size_t j = 0;
    while (std::getline(row_in, cell, '\t')) {
      if (j >= cols) throw Error(ErrorCode::kLengthMismatch, "matrix row too long");
      m(i, j++) = to_double(cell);
    }
    if (j != cols) throw Error(ErrorCode::kLengthMismatch, "matrix row too short");
  }
  return m;
}

void write_clustering(const Clustering& c, std::ostream& out) {
  out << "# atrl-clustering v1\n# n=" << c.assignment.size() << " K=" << c.k
      << " edge_cut=" << format_g9(c.edge_cut) << " balance=" << format_g9(c.balance) << "\ntoken\tcluster\n";
  for (std::size_t t = 0; t < c.assignment.size(); ++t) out << t << '\t' << c.assignment[t] << '\n';
}

Clustering read_clustering(std::istream& in) {
  if (require_line(in, "clustering magic") != "# atrl-clustering v1") {
    throw Error(ErrorCode::kMalformedInput, "not a clustering file");
  }
  Clustering c;
  std::size_t n = 0;
  for (const auto& [key, value] : header_fields(require_line(in, "clustering header"))) {
    if (key == "n") n = to_size(value);
    else if (key == "K") c.k = to_size(value);
    else if (key == "edge_cut") c.edge_cut = to_double(value);
    else if (key == "balance") c.balance = to_double(value);
  }
  if (require_line(in, "column header") != "token\tcluster") throw Error(ErrorCode::kMalformedInput, "bad clustering columns");
  c.assignment.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    std::istringstream row_in(require_line(in, "clustering row"));
    std::string tok, cl;
    if (!(std::getline(row_in, tok, '\t') && std::getline(row_in, cl)) || to_size(tok) != t) {
      throw Error(ErrorCode::kMalformedInput, "clustering rows must be 'token<TAB>cluster' in order");
    }
    const std::size_t k = to_size(cl);
    if (k >= c.k) throw Error(ErrorCode::kIndexOutOfRange, "cluster id outside [0, K)");
    c.assignment[t] = static_cast<std::uint32_t>(k);
  }
  return c;
}

void write_table(const Table& table, std::ostream& out) {
  out << "# atrl-table v1 kind=" << table.kind << '\n';
  for (const auto& [k, v] : table.meta) out << "# " << k << '=' << v << '\n';
  for (std::size_t i = 0; i < table.columns.size(); ++i) out << (i ? "\t" : "") << table.columns[i];
  out << '\n';
  for (const auto& row : table.rows) {
    if (row.size() != table.columns.size()) throw Error(ErrorCode::kLengthMismatch, "table row width differs from header");
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "\t" : "") << row[i];
    out << '\n';
  }
}

Table read_table(std::istream& in) {
  const std::string magic = require_line(in, "table magic");
  const std::string prefix = "# atrl-table v1 kind=";
  if (magic.rfind(prefix, 0) != 0) throw Error(ErrorCode::kMalformedInput, "not a table file");
  Table t;
  t.kind = magic.substr(prefix.size());
  std::string line = require_line(in, "table header");
  while (line.rfind("# ", 0) == 0) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::kMalformedInput, "table meta line without '='");
    t.meta.emplace_back(line.substr(2, eq - 2), line.substr(eq + 1));
    line = require_line(in, "table header");
  }
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::istringstream row_in(s);
    std::string cell;
    while (std::getline(row_in, cell, '\t')) cells.push_back(cell);
    if (!s.empty() && s.back() == '\t') cells.emplace_back();
    return cells;
  };
  t.columns = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != t.columns.size()) throw Error(ErrorCode::kLengthMismatch, "table row width differs from header");
    t.rows.push_back(std::move(cells));
  }
  return t;
}

}  // namespace atrl
