#include "codeal/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "codeal/errors.hpp"

namespace codeal {
namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> items;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

double parse_double(const std::string& key, const std::string& value) {
  const char* begin = value.c_str();
  char* end = nullptr;
  const double parsed = std::strtod(begin, &end);
  if (end == begin || *end != '\0') {
    throw InvalidConfig(fmt::format("{}: '{}' is not a number", key, value));
  }
  return parsed;
}

long long parse_integer(const std::string& key, const std::string& value) {
  const char* begin = value.c_str();
  char* end = nullptr;
  const long long parsed = std::strtoll(begin, &end, 10);
  if (end == begin || *end != '\0') {
    throw InvalidConfig(fmt::format("{}: '{}' is not an integer", key, value));
  }
  return parsed;
}

}  // namespace

ConfigMap ConfigMap::parse_text(const std::string& text,
                                const std::string& origin) {
  ConfigMap map;
  std::istringstream in(text);
  std::string line, section;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw InvalidConfig(
            fmt::format("{}:{}: unterminated section header", origin, number));
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) {
        throw InvalidConfig(fmt::format("{}:{}: empty section name", origin,
                                        number));
      }
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw InvalidConfig(fmt::format(
          "{}:{}: expected 'key = value', got '{}'", origin, number, line));
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw InvalidConfig(fmt::format("{}:{}: empty key", origin, number));
    }
    const std::string full = section.empty() ? key : section + "." + key;
    if (!map.values_.emplace(full, value).second) {
      throw InvalidConfig(
          fmt::format("{}:{}: duplicate key '{}'", origin, number, full));
    }
  }
  return map;
}

ConfigMap ConfigMap::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingFile(fmt::format("cannot open config '{}'", path));
  std::ostringstream text;
  text << in.rdbuf();
  return parse_text(text.str(), path);
}

bool ConfigMap::has(const std::string& key) const {
  return values_.count(key) > 0;
}

std::string ConfigMap::get_string(const std::string& key,
                                  const std::string& fallback) const {
  read_.insert(key);
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double ConfigMap::get_double(const std::string& key, double fallback) const {
  read_.insert(key);
  auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_double(key, it->second);
}

double ConfigMap::get_penalty(const std::string& key, double fallback) const {
  read_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "auto") return -1.0;
  return parse_double(key, it->second);
}

Index ConfigMap::get_index(const std::string& key, Index fallback) const {
  read_.insert(key);
  auto it = values_.find(key);
  return it == values_.end()
             ? fallback
             : static_cast<Index>(parse_integer(key, it->second));
}

int ConfigMap::get_int(const std::string& key, int fallback) const {
  read_.insert(key);
  auto it = values_.find(key);
  return it == values_.end() ? fallback
                             : static_cast<int>(parse_integer(key, it->second));
}

std::uint64_t ConfigMap::get_uint64(const std::string& key,
                                    std::uint64_t fallback) const {
  read_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const char* begin = it->second.c_str();
  char* end = nullptr;
  const unsigned long long parsed = std::strtoull(begin, &end, 10);
  // strtoull wraps negative input around instead of failing.
  if (end == begin || *end != '\0' || it->second.find('-') != std::string::npos) {
    throw InvalidConfig(
        fmt::format("{}: '{}' is not an unsigned integer", key, it->second));
  }
  return parsed;
}

bool ConfigMap::get_bool(const std::string& key, bool fallback) const {
  read_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
  if (v == "false" || v == "no" || v == "off" || v == "0") return false;
  throw InvalidConfig(fmt::format("{}: '{}' is not a boolean", key, v));
}

std::vector<Index> ConfigMap::get_index_list(
    const std::string& key, const std::vector<Index>& fallback) const {
  read_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<Index> out;
  for (const std::string& item : split_list(it->second)) {
    out.push_back(static_cast<Index>(parse_integer(key, item)));
  }
  return out;
}

std::vector<std::string> ConfigMap::get_string_list(
    const std::string& key, const std::vector<std::string>& fallback) const {
  read_.insert(key);
  auto it = values_.find(key);
  return it == values_.end() ? fallback : split_list(it->second);
}

std::vector<std::string> ConfigMap::unread_keys() const {
  std::vector<std::string> unread;
  for (const auto& [key, value] : values_) {
    (void)value;
    if (read_.count(key) == 0) unread.push_back(key);
  }
  return unread;
}

std::string to_name(DesignKind kind) {
  return kind == DesignKind::kFourBlock ? "four-block" : "staggered";
}

std::string to_name(FactorKind kind) {
  switch (kind) {
    case FactorKind::kLinear: return "linear";
    case FactorKind::kSine: return "sine";
    case FactorKind::kPolynomial: return "polynomial";
    case FactorKind::kReluMlp: return "relu-mlp";
  }
  return "?";
}

std::string to_name(DgpCovariateKind kind) {
  switch (kind) {
    case DgpCovariateKind::kNone: return "none";
    case DgpCovariateKind::kMatrixLinear: return "matrix-linear";
    case DgpCovariateKind::kVectorLinear: return "vector-linear";
    case DgpCovariateKind::kTanh: return "tanh";
    case DgpCovariateKind::kPoly: return "poly";
    case DgpCovariateKind::kLog: return "log";
    case DgpCovariateKind::kRelu: return "relu";
  }
  return "?";
}

std::string to_name(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::kCodeal: return "codeal";
    case EstimatorKind::kSingleAe: return "single-ae";
    case EstimatorKind::kDid: return "did";
    case EstimatorKind::kVertReg: return "vert-reg";
    case EstimatorKind::kMcNnm: return "mc-nnm";
  }
  return "?";
}

std::string to_name(CovariateKind kind) {
  switch (kind) {
    case CovariateKind::kNone: return "none";
    case CovariateKind::kLinear: return "linear";
    case CovariateKind::kDnn: return "dnn";
  }
  return "?";
}

DesignKind design_from_name(const std::string& name) {
  if (name == "four-block") return DesignKind::kFourBlock;
  if (name == "staggered") return DesignKind::kStaggered;
  throw InvalidConfig(fmt::format("unknown design '{}'", name));
}

FactorKind factor_kind_from_name(const std::string& name) {
  if (name == "linear") return FactorKind::kLinear;
  if (name == "sine") return FactorKind::kSine;
  if (name == "polynomial") return FactorKind::kPolynomial;
  if (name == "relu-mlp") return FactorKind::kReluMlp;
  throw InvalidConfig(fmt::format("unknown factor effect '{}'", name));
}

DgpCovariateKind dgp_covariate_kind_from_name(const std::string& name) {
  if (name == "none") return DgpCovariateKind::kNone;
  if (name == "matrix-linear") return DgpCovariateKind::kMatrixLinear;
  if (name == "vector-linear") return DgpCovariateKind::kVectorLinear;
  if (name == "tanh") return DgpCovariateKind::kTanh;
  if (name == "poly") return DgpCovariateKind::kPoly;
  if (name == "log") return DgpCovariateKind::kLog;
  if (name == "relu") return DgpCovariateKind::kRelu;
  throw InvalidConfig(fmt::format("unknown covariate effect '{}'", name));
}

EstimatorKind estimator_kind_from_name(const std::string& name) {
  if (name == "codeal") return EstimatorKind::kCodeal;
  if (name == "single-ae") return EstimatorKind::kSingleAe;
  if (name == "did") return EstimatorKind::kDid;
  if (name == "vert-reg") return EstimatorKind::kVertReg;
  if (name == "mc-nnm") return EstimatorKind::kMcNnm;
  throw UnknownEstimator(fmt::format("unknown estimator '{}'", name));
}

CovariateKind covariate_kind_from_name(const std::string& name) {
  if (name == "none") return CovariateKind::kNone;
  if (name == "linear") return CovariateKind::kLinear;
  if (name == "dnn") return CovariateKind::kDnn;
  throw InvalidConfig(fmt::format("unknown covariate removal '{}'", name));
}

DgpConfig dgp_from_config(const ConfigMap& config) {
  DgpConfig dgp;
  dgp.design = design_from_name(
      config.get_string("dgp.design", to_name(dgp.design)));
  dgp.units = config.get_index("dgp.N", dgp.units);
  dgp.periods = config.get_index("dgp.T", dgp.periods);
  dgp.control_units = config.get_index("dgp.N1", dgp.control_units);
  dgp.pre_periods = config.get_index("dgp.T1", dgp.pre_periods);
  dgp.covariate_dim = config.get_index("dgp.P", dgp.covariate_dim);
  dgp.factor_dim = config.get_index("dgp.K", dgp.factor_dim);
  dgp.staggered_groups = config.get_int("dgp.r", dgp.staggered_groups);
  dgp.factor_kind = factor_kind_from_name(
      config.get_string("dgp.factor", to_name(dgp.factor_kind)));
  dgp.covariate_kind = dgp_covariate_kind_from_name(
      config.get_string("dgp.covariate", to_name(dgp.covariate_kind)));
  dgp.noise_sd = config.get_double("dgp.noise-sd", dgp.noise_sd);
  dgp.tau_mean = config.get_double("dgp.tau-mean", dgp.tau_mean);
  dgp.tau_variance = config.get_double("dgp.tau-variance", dgp.tau_variance);
  dgp.seed = config.get_uint64("dgp.seed", dgp.seed);
  return dgp;
}

namespace {

TrainConfig training_from(const ConfigMap& config, const std::string& section,
                          const TrainConfig& defaults) {
  TrainConfig training = defaults;
  training.epochs = config.get_int(section + ".epochs", training.epochs);
  training.batch_size =
      config.get_index(section + ".batch-size", training.batch_size);
  training.adam.learning_rate = config.get_double(
      section + ".learning-rate", training.adam.learning_rate);
  return training;
}

}  // namespace

EstimatorConfig estimator_from_config(const ConfigMap& config) {
  EstimatorConfig est;
  // Desk-scale training defaults; the constructors' own defaults are tuned
  // for unit tests, not for the simulation harness. Slim decoders and
  // averaged restarts hold up much better than a single long fit.
  est.autoencoder.training.epochs = 700;
  est.autoencoder.training.adam.learning_rate = 5e-3;
  est.autoencoder.decoder_hidden = {8};
  est.autoencoder.restarts = 3;
  est.covariate.training.epochs = 400;
  est.covariate.training.adam.learning_rate = 5e-3;

  est.kind = estimator_kind_from_name(
      config.get_string("estimator.kind", to_name(est.kind)));
  est.covariate.kind = covariate_kind_from_name(config.get_string(
      "estimator.covariate-removal", to_name(est.covariate.kind)));

  est.covariate.hidden =
      config.get_index_list("covariate.hidden", est.covariate.hidden);
  est.covariate.training =
      training_from(config, "covariate", est.covariate.training);
  est.covariate.ridge = config.get_double("covariate.ridge",
                                          est.covariate.ridge);
  est.covariate.shared_trunk =
      config.get_bool("covariate.shared-trunk", est.covariate.shared_trunk);

  est.autoencoder.code_dim =
      config.get_index("autoencoder.code-dim", est.autoencoder.code_dim);
  est.autoencoder.encoder_hidden = config.get_index_list(
      "autoencoder.encoder-hidden", est.autoencoder.encoder_hidden);
  est.autoencoder.decoder_hidden = config.get_index_list(
      "autoencoder.decoder-hidden", est.autoencoder.decoder_hidden);
  est.autoencoder.training =
      training_from(config, "autoencoder", est.autoencoder.training);
  est.autoencoder.mask_encoder_input = config.get_bool(
      "autoencoder.mask-encoder-input", est.autoencoder.mask_encoder_input);
  est.autoencoder.restarts =
      config.get_int("autoencoder.restarts", est.autoencoder.restarts);

  est.vert_reg.ridge = config.get_penalty("vert-reg.ridge",
                                          est.vert_reg.ridge);

  est.mc_nnm.lambda = config.get_penalty("mc-nnm.lambda", est.mc_nnm.lambda);
  est.mc_nnm.max_iterations =
      config.get_int("mc-nnm.max-iterations", est.mc_nnm.max_iterations);
  est.mc_nnm.tolerance =
      config.get_double("mc-nnm.tolerance", est.mc_nnm.tolerance);
  est.mc_nnm.grid_size = config.get_int("mc-nnm.grid-size",
                                        est.mc_nnm.grid_size);
  est.mc_nnm.holdout_fraction = config.get_double(
      "mc-nnm.holdout-fraction", est.mc_nnm.holdout_fraction);
  est.mc_nnm.warm_start_path = config.get_bool("mc-nnm.warm-start-path",
                                               est.mc_nnm.warm_start_path);
  return est;
}

ExperimentEstimator parse_estimator_entry(const std::string& entry,
                                          const EstimatorConfig& base) {
  ExperimentEstimator out;
  out.name = entry;
  out.config = base;
  std::string kind = entry;
  const std::size_t slash = entry.find('/');
  if (slash != std::string::npos) {
    kind = entry.substr(0, slash);
    out.config.covariate.kind =
        covariate_kind_from_name(entry.substr(slash + 1));
  }
  out.config.kind = estimator_kind_from_name(kind);
  return out;
}

std::vector<ExperimentEstimator> estimators_from_config(
    const ConfigMap& config, const EstimatorConfig& base) {
  const std::vector<std::string> entries = config.get_string_list(
      "estimators.list",
      {fmt::format("{}/{}", to_name(base.kind), to_name(base.covariate.kind))});
  std::vector<ExperimentEstimator> out;
  out.reserve(entries.size());
  for (const std::string& entry : entries) {
    out.push_back(parse_estimator_entry(entry, base));
  }
  return out;
}

std::string render_config(const DgpConfig& dgp,
                          const std::vector<ExperimentEstimator>& estimators,
                          const EstimatorConfig& base) {
  std::string text;
  text += "[dgp]\n";
  text += fmt::format("design = {}\n", to_name(dgp.design));
  text += fmt::format("N = {}\n", dgp.units);
  text += fmt::format("T = {}\n", dgp.periods);
  if (dgp.design == DesignKind::kFourBlock) {
    text += fmt::format("N1 = {}\n", dgp.control_units);
    text += fmt::format("T1 = {}\n", dgp.pre_periods);
  } else {
    text += fmt::format("r = {}\n", dgp.staggered_groups);
  }
  text += fmt::format("P = {}\n", dgp.covariate_dim);
  text += fmt::format("K = {}\n", dgp.factor_dim);
  text += fmt::format("factor = {}\n", to_name(dgp.factor_kind));
  text += fmt::format("covariate = {}\n", to_name(dgp.covariate_kind));
  text += fmt::format("noise-sd = {}\n", dgp.noise_sd);
  text += fmt::format("tau-mean = {}\n", dgp.tau_mean);
  text += fmt::format("tau-variance = {}\n", dgp.tau_variance);
  text += fmt::format("seed = {}\n", dgp.seed);

  text += "\n[estimators]\n";
  std::string list;
  for (const ExperimentEstimator& e : estimators) {
    if (!list.empty()) list += ", ";
    list += e.name;
  }
  text += fmt::format("list = {}\n", list);

  text += "\n[estimator]\n";
  text += fmt::format("kind = {}\n", to_name(base.kind));
  text += fmt::format("covariate-removal = {}\n", to_name(base.covariate.kind));

  auto join_dims = [](const std::vector<Index>& dims) {
    std::string joined;
    for (Index d : dims) {
      if (!joined.empty()) joined += ",";
      joined += fmt::format("{}", d);
    }
    return joined;
  };
  text += "\n[covariate]\n";
  text += fmt::format("hidden = {}\n", join_dims(base.covariate.hidden));
  text += fmt::format("epochs = {}\n", base.covariate.training.epochs);
  text += fmt::format("batch-size = {}\n", base.covariate.training.batch_size);
  text += fmt::format("learning-rate = {}\n",
                      base.covariate.training.adam.learning_rate);
  text += fmt::format("ridge = {}\n", base.covariate.ridge);
  text += fmt::format("shared-trunk = {}\n",
                      base.covariate.shared_trunk ? "true" : "false");

  text += "\n[autoencoder]\n";
  text += fmt::format("code-dim = {}\n", base.autoencoder.code_dim);
  text += fmt::format("encoder-hidden = {}\n",
                      join_dims(base.autoencoder.encoder_hidden));
  text += fmt::format("decoder-hidden = {}\n",
                      join_dims(base.autoencoder.decoder_hidden));
  text += fmt::format("epochs = {}\n", base.autoencoder.training.epochs);
  text += fmt::format("batch-size = {}\n",
                      base.autoencoder.training.batch_size);
  text += fmt::format("learning-rate = {}\n",
                      base.autoencoder.training.adam.learning_rate);
  text += fmt::format("mask-encoder-input = {}\n",
                      base.autoencoder.mask_encoder_input ? "true" : "false");
  text += fmt::format("restarts = {}\n", base.autoencoder.restarts);

  text += "\n[vert-reg]\n";
  if (base.vert_reg.ridge < 0) {
    text += "ridge = auto\n";
  } else {
    text += fmt::format("ridge = {}\n", base.vert_reg.ridge);
  }

  text += "\n[mc-nnm]\n";
  if (base.mc_nnm.lambda < 0) {
    text += "lambda = auto\n";
  } else {
    text += fmt::format("lambda = {}\n", base.mc_nnm.lambda);
  }
  text += fmt::format("max-iterations = {}\n", base.mc_nnm.max_iterations);
  text += fmt::format("tolerance = {}\n", base.mc_nnm.tolerance);
  text += fmt::format("grid-size = {}\n", base.mc_nnm.grid_size);
  text += fmt::format("holdout-fraction = {}\n", base.mc_nnm.holdout_fraction);
  text += fmt::format("warm-start-path = {}\n",
                      base.mc_nnm.warm_start_path ? "true" : "false");
  return text;
}

std::string describe(const DgpConfig& config) {
  if (config.design == DesignKind::kFourBlock) {
    return fmt::format("four-block({}x{},N1={},T1={},P={},K={})", config.units,
                       config.periods, config.control_units,
                       config.pre_periods, config.covariate_dim,
                       config.factor_dim);
  }
  return fmt::format("staggered(r={},{}x{},P={},K={})",
                     config.staggered_groups, config.units, config.periods,
                     config.covariate_dim, config.factor_dim);
}

}  // namespace codeal
