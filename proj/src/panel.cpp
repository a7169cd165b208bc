#include "codeal/panel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "codeal/errors.hpp"

namespace codeal {

int adoption_time(const IntMatrix& treatment, Index unit) {
  for (Index t = 0; t < treatment.cols(); ++t) {
    if (treatment(unit, t) != 0) return static_cast<int>(t);
  }
  return kNeverTreated;
}

namespace {

// Binary entries and irreversibility (no 1 followed by 0 within a row).
void check_indicator(const IntMatrix& treatment) {
  for (Index i = 0; i < treatment.rows(); ++i) {
    bool seen_one = false;
    for (Index t = 0; t < treatment.cols(); ++t) {
      const int w = treatment(i, t);
      if (w != 0 && w != 1) {
        throw NonBinaryIndicator(
            fmt::format("treatment({}, {}) = {} is not 0/1", i, t, w));
      }
      if (w == 1) {
        seen_one = true;
      } else if (seen_one) {
        throw ReversedTreatment(
            fmt::format("unit {} leaves treatment at period {}", i, t));
      }
    }
  }
}

}  // namespace

SortedPanel validate_and_sort(const PanelDataset& panel) {
  const Index n = panel.outcomes.rows();
  const Index t = panel.outcomes.cols();
  if (panel.treatment.rows() != n || panel.treatment.cols() != t) {
    throw ShapeMismatch(fmt::format(
        "treatment is {}x{}, outcomes are {}x{}", panel.treatment.rows(),
        panel.treatment.cols(), n, t));
  }
  if (panel.covariates.rows() != n && panel.covariates.size() != 0) {
    throw ShapeMismatch(fmt::format("covariates have {} rows, expected {}",
                                    panel.covariates.rows(), n));
  }
  if (!panel.unit_labels.empty() &&
      panel.unit_labels.size() != static_cast<std::size_t>(n)) {
    throw ShapeMismatch(fmt::format("{} unit labels for {} units",
                                    panel.unit_labels.size(), n));
  }
  if (!panel.period_labels.empty() &&
      panel.period_labels.size() != static_cast<std::size_t>(t)) {
    throw ShapeMismatch(fmt::format("{} period labels for {} periods",
                                    panel.period_labels.size(), t));
  }
  check_indicator(panel.treatment);

  std::vector<int> adoption(static_cast<std::size_t>(n));
  bool any_never = false;
  for (Index i = 0; i < n; ++i) {
    adoption[static_cast<std::size_t>(i)] = adoption_time(panel.treatment, i);
    any_never = any_never ||
                adoption[static_cast<std::size_t>(i)] == kNeverTreated;
  }
  if (!any_never) {
    throw NoNeverTreatedUnit("every unit is eventually treated");
  }

  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::stable_sort(perm.begin(), perm.end(), [&](Index a, Index b) {
    return adoption[static_cast<std::size_t>(a)] >
           adoption[static_cast<std::size_t>(b)];
  });

  SortedPanel out;
  out.permutation = perm;
  out.panel.outcomes.resize(n, t);
  out.panel.treatment.resize(n, t);
  if (panel.covariates.size() != 0) {
    out.panel.covariates.resize(n, panel.covariates.cols());
  } else {
    out.panel.covariates.resize(n, 0);
  }
  out.panel.period_labels = panel.period_labels;
  if (!panel.unit_labels.empty()) {
    out.panel.unit_labels.resize(static_cast<std::size_t>(n));
  }
  for (Index k = 0; k < n; ++k) {
    const Index src = perm[static_cast<std::size_t>(k)];
    out.panel.outcomes.row(k) = panel.outcomes.row(src);
    out.panel.treatment.row(k) = panel.treatment.row(src);
    if (out.panel.covariates.cols() > 0) {
      out.panel.covariates.row(k) = panel.covariates.row(src);
    }
    if (!panel.unit_labels.empty()) {
      out.panel.unit_labels[static_cast<std::size_t>(k)] =
          panel.unit_labels[static_cast<std::size_t>(src)];
    }
  }
  return out;
}

Index BlockPartition::group_row_begin(int xi) const {
  Index row = 0;
  for (int g = 1; g < xi; ++g) {
    row += group_sizes[static_cast<std::size_t>(g - 1)];
  }
  return row;
}

Index BlockPartition::segment_col_begin(int eta) const {
  Index col = 0;
  for (int s = 1; s < eta; ++s) {
    col += segment_lengths[static_cast<std::size_t>(s - 1)];
  }
  return col;
}

BlockPartition extract_block_partition(const IntMatrix& treatment) {
  const Index n = treatment.rows();
  const Index t = treatment.cols();
  if (n == 0) throw NoNeverTreatedUnit("empty panel");
  if (t == 0) throw InvalidStaggeredPanel("panel has no periods");
  check_indicator(treatment);

  std::vector<int> adoption(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    adoption[static_cast<std::size_t>(i)] = adoption_time(treatment, i);
    if (i > 0 && adoption[static_cast<std::size_t>(i)] >
                     adoption[static_cast<std::size_t>(i - 1)]) {
      throw UnsortedPanel(
          fmt::format("unit {} adopts later than unit {}", i, i - 1));
    }
  }
  if (adoption[0] != kNeverTreated) {
    throw NoNeverTreatedUnit("first sorted unit is eventually treated");
  }
  if (adoption[static_cast<std::size_t>(n - 1)] == 0) {
    throw InvalidStaggeredPanel(
        "a unit is treated from the first period; no pre-period exists");
  }

  BlockPartition part;
  // Groups share an adoption time; the never-treated group comes first.
  std::vector<int> group_adoption;
  for (Index i = 0; i < n; ++i) {
    const int a = adoption[static_cast<std::size_t>(i)];
    if (group_adoption.empty() || group_adoption.back() != a) {
      group_adoption.push_back(a);
      part.group_sizes.push_back(0);
    }
    ++part.group_sizes.back();
  }
  const int r = static_cast<int>(part.group_sizes.size());

  // Segment eta >= 2 starts where group r + 2 - eta adopts. Segment 1 covers
  // everything before the earliest adoption; segment boundaries are the
  // distinct adoption times in increasing order.
  std::vector<int> boundaries;  // starts of segments 2..r
  for (int g = r; g >= 2; --g) {
    boundaries.push_back(group_adoption[static_cast<std::size_t>(g - 1)]);
  }
  int prev = 0;
  for (int b : boundaries) {
    part.segment_lengths.push_back(b - prev);
    prev = b;
  }
  part.segment_lengths.push_back(static_cast<int>(t) - prev);

  for (int xi = 2; xi <= r; ++xi) {
    for (int eta = r + 2 - xi; eta <= r; ++eta) {
      part.treated_blocks.insert({xi, eta});
    }
  }
  return part;
}

IntMatrix reconstruct_indicator(const BlockPartition& partition) {
  Index n = 0, t = 0;
  for (int g : partition.group_sizes) n += g;
  for (int s : partition.segment_lengths) t += s;
  IntMatrix w = IntMatrix::Zero(n, t);
  for (const auto& [xi, eta] : partition.treated_blocks) {
    const Index r0 = partition.group_row_begin(xi);
    const Index c0 = partition.segment_col_begin(eta);
    w.block(r0, c0, partition.group_sizes[static_cast<std::size_t>(xi - 1)],
            partition.segment_lengths[static_cast<std::size_t>(eta - 1)])
        .setOnes();
  }
  return w;
}

FourBlockView build_four_block(const Matrix& outcomes, const Matrix& covariates,
                               const BlockPartition& partition, int xi0,
                               int eta0) {
  if (!partition.is_treated(xi0, eta0)) {
    throw UntreatedTargetBlock(
        fmt::format("block ({}, {}) is not treated", xi0, eta0));
  }
  const int r = partition.block_count();
  const int k1 = r + 1 - eta0;  // last fully-control group among rows
  const int k2 = r + 1 - xi0;   // last pre-adoption segment for group xi0

  const Index view_rows = partition.group_row_begin(xi0 + 1);
  const Index view_cols = partition.segment_col_begin(eta0 + 1);
  const Index n1 = partition.group_row_begin(k1 + 1);
  const Index t1 = partition.segment_col_begin(k2 + 1);

  FourBlockView view;
  view.xi0 = xi0;
  view.eta0 = eta0;
  view.outcomes = outcomes.topLeftCorner(view_rows, view_cols);
  if (covariates.size() != 0) {
    view.covariates = covariates.topRows(view_rows);
  } else {
    view.covariates.resize(view_rows, 0);
  }
  view.control_rows = n1;
  view.pre_periods = t1;
  // Canonical mask: everything outside the top rows and left columns counts
  // as missing, even cells the parent panel observed untreated.
  view.indicator = IntMatrix::Zero(view_rows, view_cols);
  view.indicator.block(n1, t1, view_rows - n1, view_cols - t1).setOnes();
  view.origin_rows.resize(static_cast<std::size_t>(view_rows));
  std::iota(view.origin_rows.begin(), view.origin_rows.end(), Index{0});
  view.origin_cols.resize(static_cast<std::size_t>(view_cols));
  std::iota(view.origin_cols.begin(), view.origin_cols.end(), Index{0});
  view.target_row_begin = partition.group_row_begin(xi0);
  view.target_row_end = view_rows;
  view.target_col_begin = partition.segment_col_begin(eta0);
  view.target_col_end = view_cols;
  return view;
}

FourBlockView build_four_block(const PanelDataset& panel,
                               const BlockPartition& partition, int xi0,
                               int eta0) {
  return build_four_block(panel.outcomes, panel.covariates, partition, xi0,
                          eta0);
}

AttEstimate att_from_imputation(const PanelDataset& panel,
                                const Matrix& imputed) {
  const Index n = panel.outcomes.rows();
  const Index t = panel.outcomes.cols();
  if (imputed.rows() != n || imputed.cols() != t) {
    throw ShapeMismatch(fmt::format("imputed matrix is {}x{}, panel is {}x{}",
                                    imputed.rows(), imputed.cols(), n, t));
  }
  AttEstimate est;
  est.per_unit.assign(static_cast<std::size_t>(n),
                      std::numeric_limits<double>::quiet_NaN());
  est.treated_period_counts.assign(static_cast<std::size_t>(n), 0);
  for (Index i = 0; i < n; ++i) {
    double sum = 0.0;
    int count = 0;
    for (Index s = 0; s < t; ++s) {
      if (panel.treatment(i, s) == 0) continue;
      const double y0 = imputed(i, s);
      if (std::isnan(y0)) {
        throw MissingImputedCell(fmt::format(
            "no counterfactual for treated cell ({}, {})", i, s));
      }
      sum += panel.outcomes(i, s) - y0;
      ++count;
    }
    if (count > 0) {
      est.per_unit[static_cast<std::size_t>(i)] = sum / count;
      est.treated_period_counts[static_cast<std::size_t>(i)] = count;
    }
  }
  return est;
}

double aggregate_att(const AttEstimate& estimate, const PanelDataset& panel) {
  if (estimate.per_unit.size() != static_cast<std::size_t>(panel.units())) {
    throw ShapeMismatch(fmt::format("estimate covers {} units, panel has {}",
                                    estimate.per_unit.size(), panel.units()));
  }
  double sum = 0.0;
  long total = 0;
  for (std::size_t i = 0; i < estimate.per_unit.size(); ++i) {
    const int c = estimate.treated_period_counts[i];
    if (c == 0) continue;
    sum += estimate.per_unit[i] * c;
    total += c;
  }
  if (total == 0) throw NoTreatedCells("no treated cells in the panel");
  return sum / total;
}

}  // namespace codeal
