#include "codeal/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>

#include "codeal/config.hpp"
#include "codeal/errors.hpp"

namespace codeal {
namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(trim(field));
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

double parse_cell(const std::string& path, int line, std::size_t column,
                  const std::string& text) {
  const char* begin = text.c_str();
  char* end = nullptr;
  const double parsed = std::strtod(begin, &end);
  if (text.empty() || end == begin || *end != '\0') {
    throw NonNumericCell(fmt::format("{}:{}: column {}: '{}' is not a number",
                                     path, line, column + 1, text));
  }
  return parsed;
}

// Label -> position map that rejects duplicates, since joins by label would
// otherwise be ambiguous.
std::unordered_map<std::string, Index> label_index(
    const std::vector<std::string>& labels, const std::string& path) {
  std::unordered_map<std::string, Index> index;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!index.emplace(labels[i], static_cast<Index>(i)).second) {
      throw JoinFailure(
          fmt::format("{}: duplicate unit label '{}'", path, labels[i]));
    }
  }
  return index;
}

std::string format_value(double v) { return fmt::format("{:.17g}", v); }

void open_for_write(std::ofstream& out, const std::string& path) {
  out.open(path);
  if (!out) {
    throw MissingFile(fmt::format("cannot open '{}' for writing", path));
  }
}

Vector trailing_mean(const Vector& values, int window) {
  Vector out(values.size());
  double running = 0.0;
  for (Index t = 0; t < values.size(); ++t) {
    running += values(t);
    if (t >= window) running -= values(t - window);
    const double span = std::min<double>(window, static_cast<double>(t) + 1.0);
    out(t) = running / span;
  }
  return out;
}

}  // namespace

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingFile(fmt::format("cannot open '{}'", path));

  CsvTable table;
  std::vector<std::vector<double>> rows;
  std::string line;
  int number = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    std::vector<std::string> fields = split_fields(line);
    if (!have_header) {
      table.corner = fields[0];
      table.column_labels.assign(fields.begin() + 1, fields.end());
      have_header = true;
      continue;
    }
    if (fields.size() != table.column_labels.size() + 1) {
      throw HeaderMismatch(
          fmt::format("{}:{}: row has {} fields, the header has {}", path,
                      number, fields.size(), table.column_labels.size() + 1));
    }
    table.row_labels.push_back(fields[0]);
    std::vector<double> row(table.column_labels.size());
    for (std::size_t c = 0; c < row.size(); ++c) {
      row[c] = parse_cell(path, number, c + 1, fields[c + 1]);
    }
    rows.push_back(std::move(row));
  }
  if (!have_header) {
    throw HeaderMismatch(fmt::format("{}: no header row", path));
  }

  table.values.resize(static_cast<Index>(rows.size()),
                      static_cast<Index>(table.column_labels.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < rows[i].size(); ++c) {
      table.values(static_cast<Index>(i), static_cast<Index>(c)) = rows[i][c];
    }
  }
  return table;
}

void write_csv(const std::string& path, const CsvTable& table,
               const std::string& comment) {
  if (table.values.rows() != static_cast<Index>(table.row_labels.size()) ||
      table.values.cols() != static_cast<Index>(table.column_labels.size())) {
    throw ShapeMismatch(fmt::format(
        "table is {}x{} but has {} row and {} column labels",
        table.values.rows(), table.values.cols(), table.row_labels.size(),
        table.column_labels.size()));
  }
  std::ofstream out;
  open_for_write(out, path);
  if (!comment.empty()) out << "# " << comment << "\n";
  out << table.corner;
  for (const std::string& label : table.column_labels) out << "," << label;
  out << "\n";
  for (Index i = 0; i < table.values.rows(); ++i) {
    out << table.row_labels[static_cast<std::size_t>(i)];
    for (Index c = 0; c < table.values.cols(); ++c) {
      out << "," << format_value(table.values(i, c));
    }
    out << "\n";
  }
}

PanelDataset load_panel(const std::string& y_path, const std::string& w_path,
                        const std::string& x_path) {
  const CsvTable y = read_csv(y_path);
  const CsvTable w = read_csv(w_path);
  if (y.column_labels != w.column_labels) {
    throw HeaderMismatch(fmt::format(
        "'{}' and '{}' disagree on period headers", y_path, w_path));
  }
  (void)label_index(y.row_labels, y_path);
  const auto w_index = label_index(w.row_labels, w_path);
  if (w.row_labels.size() != y.row_labels.size()) {
    throw JoinFailure(fmt::format("'{}' has {} units, '{}' has {}", y_path,
                                  y.row_labels.size(), w_path,
                                  w.row_labels.size()));
  }

  const Index n = y.values.rows();
  const Index t = y.values.cols();
  PanelDataset panel;
  panel.outcomes = y.values;
  panel.unit_labels = y.row_labels;
  panel.period_labels = y.column_labels;
  panel.treatment.resize(n, t);
  for (Index i = 0; i < n; ++i) {
    const std::string& label = y.row_labels[static_cast<std::size_t>(i)];
    auto it = w_index.find(label);
    if (it == w_index.end()) {
      throw JoinFailure(
          fmt::format("unit '{}' has no row in '{}'", label, w_path));
    }
    for (Index s = 0; s < t; ++s) {
      const double v = w.values(it->second, s);
      if (v != 0.0 && v != 1.0) {
        throw NonBinaryIndicator(fmt::format(
            "{}: unit '{}', period '{}': treatment {} is not 0 or 1", w_path,
            label, w.column_labels[static_cast<std::size_t>(s)], v));
      }
      panel.treatment(i, s) = static_cast<int>(v);
    }
  }

  if (x_path.empty()) {
    panel.covariates.resize(n, 0);
  } else {
    const CsvTable x = read_csv(x_path);
    const auto x_index = label_index(x.row_labels, x_path);
    if (x.row_labels.size() != y.row_labels.size()) {
      throw JoinFailure(fmt::format("'{}' has {} units, '{}' has {}", y_path,
                                    y.row_labels.size(), x_path,
                                    x.row_labels.size()));
    }
    panel.covariates.resize(n, x.values.cols());
    for (Index i = 0; i < n; ++i) {
      const std::string& label = y.row_labels[static_cast<std::size_t>(i)];
      auto it = x_index.find(label);
      if (it == x_index.end()) {
        throw JoinFailure(
            fmt::format("unit '{}' has no row in '{}'", label, x_path));
      }
      panel.covariates.row(i) = x.values.row(it->second);
    }
  }

  return validate_and_sort(panel).panel;
}

void save_panel(const PanelDataset& panel, const std::string& y_path,
                const std::string& w_path, const std::string& x_path,
                const std::string& comment) {
  CsvTable y;
  y.row_labels = panel.unit_labels;
  y.column_labels = panel.period_labels;
  y.values = panel.outcomes;
  write_csv(y_path, y, comment);

  // The treatment table goes through the same writer; 0/1 print exactly.
  CsvTable w = y;
  w.values = panel.treatment.cast<double>();
  write_csv(w_path, w, comment);

  if (!x_path.empty() && panel.covariate_dim() > 0) {
    CsvTable x;
    x.row_labels = panel.unit_labels;
    for (Index j = 0; j < panel.covariate_dim(); ++j) {
      x.column_labels.push_back(fmt::format("x{}", j));
    }
    x.values = panel.covariates;
    write_csv(x_path, x, comment);
  }
}

Matrix align_rows(const CsvTable& table,
                  const std::vector<std::string>& unit_labels,
                  const std::string& origin) {
  const auto index = label_index(table.row_labels, origin);
  if (table.row_labels.size() != unit_labels.size()) {
    throw JoinFailure(fmt::format("'{}' has {} units, the panel has {}",
                                  origin, table.row_labels.size(),
                                  unit_labels.size()));
  }
  Matrix out(static_cast<Index>(unit_labels.size()), table.values.cols());
  for (std::size_t i = 0; i < unit_labels.size(); ++i) {
    auto it = index.find(unit_labels[i]);
    if (it == index.end()) {
      throw JoinFailure(
          fmt::format("unit '{}' has no row in '{}'", unit_labels[i], origin));
    }
    out.row(static_cast<Index>(i)) = table.values.row(it->second);
  }
  return out;
}

CounterfactualSeries counterfactual_series(const PanelDataset& panel,
                                           const Matrix& counterfactuals,
                                           int window) {
  if (counterfactuals.rows() != panel.units() ||
      counterfactuals.cols() != panel.periods()) {
    throw ShapeMismatch(fmt::format("counterfactuals are {}x{}, panel is {}x{}",
                                    counterfactuals.rows(),
                                    counterfactuals.cols(), panel.units(),
                                    panel.periods()));
  }
  if (window < 0) throw InvalidConfig("negative rolling window");

  std::vector<Index> treated_units;
  for (Index i = 0; i < panel.units(); ++i) {
    if ((panel.treatment.row(i).array() == 1).any()) {
      treated_units.push_back(i);
    }
  }

  CounterfactualSeries series;
  series.period_labels = panel.period_labels;
  series.window = window;
  series.observed = Vector::Zero(panel.periods());
  series.counterfactual = Vector::Zero(panel.periods());
  for (Index s = 0; s < panel.periods(); ++s) {
    for (Index i : treated_units) {
      const double cf = counterfactuals(i, s);
      if (std::isnan(cf)) {
        throw MissingImputedCell(fmt::format(
            "no counterfactual for unit '{}' at period '{}'",
            panel.unit_labels[static_cast<std::size_t>(i)],
            panel.period_labels[static_cast<std::size_t>(s)]));
      }
      series.observed(s) += panel.outcomes(i, s);
      series.counterfactual(s) += cf;
    }
  }
  if (window > 0) {
    series.observed_rolling = trailing_mean(series.observed, window);
    series.counterfactual_rolling =
        trailing_mean(series.counterfactual, window);
  }
  return series;
}

void write_series_csv(const std::string& path,
                      const CounterfactualSeries& series,
                      const std::string& comment) {
  std::ofstream out;
  open_for_write(out, path);
  if (!comment.empty()) out << "# " << comment << "\n";
  out << "period,observed,counterfactual";
  if (series.window > 0) {
    out << fmt::format(",observed-rolling{0},counterfactual-rolling{0}",
                       series.window);
  }
  out << "\n";
  for (Index s = 0; s < series.observed.size(); ++s) {
    out << series.period_labels[static_cast<std::size_t>(s)] << ","
        << format_value(series.observed(s)) << ","
        << format_value(series.counterfactual(s));
    if (series.window > 0) {
      out << "," << format_value(series.observed_rolling(s)) << ","
          << format_value(series.counterfactual_rolling(s));
    }
    out << "\n";
  }
}

void write_results_csv(const std::string& path, const ExperimentResult& result,
                       const std::vector<std::string>& removal_names,
                       const std::string& comment) {
  if (removal_names.size() != result.rows.size()) {
    throw ShapeMismatch(fmt::format("{} removal names for {} result rows",
                                    removal_names.size(), result.rows.size()));
  }
  std::ofstream out;
  open_for_write(out, path);
  if (!comment.empty()) out << "# " << comment << "\n";
  out << "estimator,covariateRemoval,factorKind,covariateKind,config,R,"
         "maeMean,maeSe,mseMean,mseSe\n";
  for (std::size_t e = 0; e < result.rows.size(); ++e) {
    const ExperimentRow& row = result.rows[e];
    auto se_field = [](double se) {
      return std::isnan(se) ? std::string() : format_value(se);
    };
    out << fmt::format("{},{},{},{},{},{},{},{},{},{}\n", row.estimator,
                       removal_names[e], to_name(result.config.factor_kind),
                       to_name(result.config.covariate_kind),
                       describe(result.config), result.replications,
                       format_value(row.mae_mean), se_field(row.mae_se),
                       format_value(row.mse_mean), se_field(row.mse_se));
  }
}

}  // namespace codeal
