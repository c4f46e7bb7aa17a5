#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "natmed/errors.hpp"

namespace natmed {

enum class YKind { binary, continuous };

struct ObservedRecord {
  std::vector<double> w;
  int a = 0;  // {0,1}
  int z = 0;  // {0,1}
  std::vector<double> m;
  double y = 0.0;
};

// Immutable after construction; safe to share across threads.
struct Dataset {
  std::vector<ObservedRecord> records;
  std::vector<std::string> w_names;
  std::vector<std::string> m_names;
  YKind y_kind = YKind::binary;

  std::size_t size() const { return records.size(); }
  std::size_t w_dim() const { return w_names.size(); }
  std::size_t m_dim() const { return m_names.size(); }

  // Enforces equal arity, binary A/Z, finite entries. Throws DataError.
  void validate() const;
};

// Column names of a CSV file; mediators and covariates may be multi-column.
struct ColumnSpec {
  std::vector<std::string> w;
  std::string a = "A";
  std::string z = "Z";
  std::vector<std::string> m;
  std::string y = "Y";
  YKind y_kind = YKind::binary;
};

// Strict reader: header row required, every cell numeric, A/Z in {0,1},
// no missing cells. Errors name the offending column or 1-based data row.
Dataset load_csv(const std::string& path, const ColumnSpec& spec);

// Writes header + rows with shortest round-trip number formatting, so
// load_csv(write_csv(d)) reproduces d exactly.
void write_csv(const Dataset& d, const std::string& path);

struct StratumDiagnostics {
  std::string label;
  std::size_t n_a1 = 0, n_a0 = 0;
  double pz_a1 = 0.0, pz_a0 = 0.0;
  bool monotonicity_flag = false;  // empirical P(Z=1|A=1) < P(Z=1|A=0)
  bool skipped = false;            // empty arm
};

// Advisory only: monotonicity is an individual-level assumption and can at
// most be falsified in aggregate. The fitted-propensity fields are filled
// by the estimator, not by diagnose().
struct DiagnosticsReport {
  std::size_t n = 0;
  double pz_given_a1 = 0.0;
  double pz_given_a0 = 0.0;
  bool monotonicity_flag = false;
  std::vector<StratumDiagnostics> strata;
  std::vector<std::string> warnings;

  // filled post-estimation (NaN / 0 until then)
  double min_propensity = 0.0;
  double max_propensity = 0.0;
  std::size_t negative_q_diff_count = 0;
};

DiagnosticsReport diagnose(const Dataset& d,
                           const std::vector<std::string>& strata_names = {});

}  // namespace natmed
