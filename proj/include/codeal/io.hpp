#pragma once

#include <string>
#include <vector>

#include "codeal/panel.hpp"
#include "codeal/simulate.hpp"
#include "codeal/types.hpp"

namespace codeal {

// A labeled numeric table: one header row, one label column, and a numeric
// body. The minimal CSV dialect used throughout: comma separators, no
// quoting, lines starting with '#' ignored.
struct CsvTable {
  std::string corner = "unit";  // header above the label column
  std::vector<std::string> row_labels;
  std::vector<std::string> column_labels;
  Matrix values;
};

CsvTable read_csv(const std::string& path);

// Values are written with 17 significant digits, enough for doubles to
// survive a write/read round trip bit for bit. A non-empty comment becomes a
// leading '#' line.
void write_csv(const std::string& path, const CsvTable& table,
               const std::string& comment = "");

// Joins outcome, treatment and covariate files by unit label. Row label sets
// must match exactly across files and Y/W must share period headers; the
// result is validated and returned in sorted unit order. x_path may be empty
// for a panel without covariates.
PanelDataset load_panel(const std::string& y_path, const std::string& w_path,
                        const std::string& x_path = "");

void save_panel(const PanelDataset& panel, const std::string& y_path,
                const std::string& w_path, const std::string& x_path = "",
                const std::string& comment = "");

// Reorders a unit-labeled table to match unit_labels. Both label sets must
// coincide exactly; origin names the file in error messages.
Matrix align_rows(const CsvTable& table,
                  const std::vector<std::string>& unit_labels,
                  const std::string& origin);

// Per-period outcome totals over the ever-treated units: what happened, and
// what the imputation says would have happened without treatment. Rolling
// trailing means (window periods, shorter at the start) are attached when
// window > 0.
struct CounterfactualSeries {
  std::vector<std::string> period_labels;
  Vector observed;
  Vector counterfactual;
  Vector observed_rolling;
  Vector counterfactual_rolling;
  int window = 0;
};

CounterfactualSeries counterfactual_series(const PanelDataset& panel,
                                           const Matrix& counterfactuals,
                                           int window = 14);

void write_series_csv(const std::string& path,
                      const CounterfactualSeries& series,
                      const std::string& comment = "");

// One row per estimator: identification columns, then mean(se) metric pairs.
void write_results_csv(const std::string& path, const ExperimentResult& result,
                       const std::vector<std::string>& removal_names,
                       const std::string& comment = "");

}  // namespace codeal
