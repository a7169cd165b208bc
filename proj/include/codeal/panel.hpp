#pragma once

#include <limits>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "codeal/types.hpp"

namespace codeal {

// A causal panel: outcomes Y (N x T), binary treatment indicators W (N x T)
// and static unit covariates X (N x P). Rows of Y, W and X refer to the same
// unit. Instances are immutable after construction by convention; every
// operation below returns new values.
struct PanelDataset {
  Matrix outcomes;                         // Y, N x T
  IntMatrix treatment;                     // W, N x T, entries 0/1
  Matrix covariates;                       // X, N x P (P may be 0)
  std::vector<std::string> unit_labels;    // length N
  std::vector<std::string> period_labels;  // length T

  Index units() const { return outcomes.rows(); }
  Index periods() const { return outcomes.cols(); }
  Index covariate_dim() const { return covariates.cols(); }
};

// Adoption time of a unit: first period with W = 1, or kNeverTreated.
inline constexpr int kNeverTreated = std::numeric_limits<int>::max();

int adoption_time(const IntMatrix& treatment, Index unit);

// Staggered grouping of a sorted panel. Groups collect units with equal
// adoption time (never-treated first); segments split the time axis at every
// distinct adoption time. Indices xi (group) and eta (segment) are 1-based to
// match the block notation used throughout.
struct BlockPartition {
  std::vector<int> group_sizes;      // {N_xi}, length r
  std::vector<int> segment_lengths;  // {T_eta}, length r
  std::set<std::pair<int, int>> treated_blocks;

  int block_count() const { return static_cast<int>(group_sizes.size()); }

  Index group_row_begin(int xi) const;    // first row of group xi
  Index segment_col_begin(int eta) const; // first column of segment eta
  bool is_treated(int xi, int eta) const {
    return treated_blocks.count({xi, eta}) > 0;
  }
};

// A four-block submatrix assembled around a target treated block (xi0, eta0).
// Rows are groups 1..xi0 and columns segments 1..eta0 of the sorted parent,
// so origin_rows/origin_cols are contiguous prefixes. The indicator carries
// the canonical 2x2 mask: the whole bottom-right region counts as missing for
// the subproblem even where the parent panel observed untreated values.
struct FourBlockView {
  Matrix outcomes;
  IntMatrix indicator;
  Matrix covariates;
  Index control_rows = 0;  // N1
  Index pre_periods = 0;   // T1
  std::vector<Index> origin_rows;
  std::vector<Index> origin_cols;
  Index target_row_begin = 0, target_row_end = 0;  // half-open, view indices
  Index target_col_begin = 0, target_col_end = 0;
  int xi0 = 0, eta0 = 0;

  Index rows() const { return outcomes.rows(); }
  Index cols() const { return outcomes.cols(); }
};

// Unit-specific average treatment effects on the treated. per_unit[i] is NaN
// for units without any treated period; treated_period_counts[i] == 0 marks
// those units.
struct AttEstimate {
  std::vector<double> per_unit;
  std::vector<int> treated_period_counts;

  bool has(Index i) const {
    return treated_period_counts[static_cast<std::size_t>(i)] > 0;
  }
};

struct SortedPanel {
  PanelDataset panel;
  // permutation[k] = original row index of sorted row k.
  std::vector<Index> permutation;
};

// Validates the staggered-adoption structure (binary W, irreversible
// treatment, at least one never-treated unit) and reorders units so that
// never-treated units come first, followed by adopters in descending adoption
// time. Ties keep their original order.
SortedPanel validate_and_sort(const PanelDataset& panel);

// Maximal rectangular block structure of a sorted indicator matrix.
// Reconstructing W from the result reproduces it bit for bit.
BlockPartition extract_block_partition(const IntMatrix& treatment);

// Inverse of extract_block_partition; treated blocks become 1, the rest 0.
IntMatrix reconstruct_indicator(const BlockPartition& partition);

FourBlockView build_four_block(const Matrix& outcomes, const Matrix& covariates,
                               const BlockPartition& partition, int xi0,
                               int eta0);
FourBlockView build_four_block(const PanelDataset& panel,
                               const BlockPartition& partition, int xi0,
                               int eta0);

// tau_hat_i = mean over unit i's treated periods of Y_it - Yhat0_it.
AttEstimate att_from_imputation(const PanelDataset& panel,
                                const Matrix& imputed);

// Cell-weighted mean of Y_it - Yhat0_it over all treated cells.
double aggregate_att(const AttEstimate& estimate, const PanelDataset& panel);

}  // namespace codeal
