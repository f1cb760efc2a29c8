#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace wmdl {

// One study site. Outcome sources carry (y, a, x, z); a covariates-only
// source (used as a transfer target) carries x alone.
struct SourceData {
  int id = 0;
  bool has_outcomes = true;
  std::vector<double> y;  // empty when !has_outcomes
  std::vector<int> a;     // +1 / -1, empty when !has_outcomes
  Eigen::MatrixXd x;      // n x d_x
  Eigen::MatrixXd z;      // n x d_z(id); zero columns allowed

  int rows() const { return static_cast<int>(x.rows()); }
  int d_z() const { return static_cast<int>(z.cols()); }
};

struct MultiSourceData {
  std::vector<SourceData> sources;  // sorted by ascending id, ids unique
  int d_x = 0;
  int target_source = 1;

  const SourceData& source(int id) const;
  int source_index(int id) const;  // -1 if absent
  int n_sources() const { return static_cast<int>(sources.size()); }
  int total_rows() const;
  int outcome_rows() const;
  bool transfer_mode() const;  // target source is covariates-only

  // Enforces structural invariants; throws config_error with a message
  // naming the offending source/row.
  void validate() const;
};

// Returns a copy containing only the given source (it must carry outcomes).
MultiSourceData restrict_to_source(const MultiSourceData& data, int source_id);

struct FoldAssignment {
  int n_folds = 0;
  // fold id per row, aligned with data.sources / their row order
  std::vector<std::vector<int>> fold_of;

  int fold(int source_index, int row) const { return fold_of[source_index][row]; }
};

// Stratified by source: every source is split into n_folds near-equal parts
// (sizes differ by at most one). Deterministic in (seed, source ids, sizes).
FoldAssignment split_folds(const MultiSourceData& data, int n_folds, std::uint64_t seed);

struct CsvSchema {
  std::string source_col = "source";
  std::string y_col = "y";
  std::string a_col = "a";
  // Empty means auto-detect: x1..x{d} by header prefix, and per-source z
  // columns by which z{j} cells that source fills.
  std::vector<std::string> x_cols;
  std::map<int, std::vector<std::string>> z_cols;
  int target_source = 1;
};

// Header row required. Treatment accepts {0,1} or {-1,+1} with 0 mapped to -1.
// y and a cells may be empty only for a covariates-only target source.
MultiSourceData load_csv(const std::string& path, const CsvSchema& schema = {});

// Inverse of load_csv under the default schema: columns
// source,y,a,x1..x{d_x},z1..z{max d_z}; cells a source does not have are empty.
void save_csv(const MultiSourceData& data, const std::string& path);

}  // namespace wmdl
