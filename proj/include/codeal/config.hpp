#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "codeal/estimators.hpp"
#include "codeal/simulate.hpp"

namespace codeal {

// Flat "[section]" + "key = value" text, '#'/';' comment lines. Keys are
// addressed as "section.key". Reads are tracked so a run can reject keys it
// never understood instead of silently ignoring typos.
class ConfigMap {
 public:
  static ConfigMap parse_file(const std::string& path);
  static ConfigMap parse_text(const std::string& text,
                              const std::string& origin = "<config>");

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key,
                         const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  // Like get_double, with the word "auto" standing for -1 (pick by
  // cross-validation).
  double get_penalty(const std::string& key, double fallback) const;
  Index get_index(const std::string& key, Index fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_uint64(const std::string& key,
                           std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<Index> get_index_list(const std::string& key,
                                    const std::vector<Index>& fallback) const;
  std::vector<std::string> get_string_list(
      const std::string& key, const std::vector<std::string>& fallback) const;

  // Keys present in the text that no getter ever asked for.
  std::vector<std::string> unread_keys() const;

 private:
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> read_;
};

// Name maps used by config files, CLI flags and report columns.
std::string to_name(DesignKind kind);
std::string to_name(FactorKind kind);
std::string to_name(DgpCovariateKind kind);
std::string to_name(EstimatorKind kind);
std::string to_name(CovariateKind kind);
DesignKind design_from_name(const std::string& name);
FactorKind factor_kind_from_name(const std::string& name);
DgpCovariateKind dgp_covariate_kind_from_name(const std::string& name);
EstimatorKind estimator_kind_from_name(const std::string& name);
CovariateKind covariate_kind_from_name(const std::string& name);

// Section [dgp]; unset keys keep the defaults of DgpConfig.
DgpConfig dgp_from_config(const ConfigMap& config);

// Sections [covariate], [autoencoder], [vert-reg], [mc-nnm] plus
// [estimator].kind and [estimator].covariate-removal; unset keys keep
// desk-scale defaults.
EstimatorConfig estimator_from_config(const ConfigMap& config);

// "kind" or "kind/removal", e.g. "codeal/linear". The base carries every
// other setting.
ExperimentEstimator parse_estimator_entry(const std::string& entry,
                                          const EstimatorConfig& base);

// [estimators].list entries parsed against the shared base; defaults to the
// single entry of the base config itself.
std::vector<ExperimentEstimator> estimators_from_config(
    const ConfigMap& config, const EstimatorConfig& base);

// Round-trippable dump of the effective settings, suitable for --print-config
// and for reading back with parse_text.
std::string render_config(const DgpConfig& dgp,
                          const std::vector<ExperimentEstimator>& estimators,
                          const EstimatorConfig& base);

// Compact one-token description for report rows, e.g.
// "four-block(100x200,N1=50,T1=100,P=3,K=4)".
std::string describe(const DgpConfig& config);

}  // namespace codeal
