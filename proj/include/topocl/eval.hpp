#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "json.hpp"

namespace topocl {

/// Row-major feature matrix with one integer label per row.
struct LabeledFeatures {
  std::size_t dim = 0;
  std::vector<double> x;
  std::vector<int> y;

  std::size_t size() const { return y.size(); }
};

struct ProbeConfig {
  std::size_t epochs = 100;
  double lr = 0.1;
};

struct ProbeResult {
  double accuracy = 0.0;
  std::vector<double> per_class;
  std::vector<double> runs;

  nlohmann::json to_json() const;
};

/// Multinomial logistic regression trained by full-batch gradient descent on
/// features standardized with the training statistics; reports test accuracy.
ProbeResult linear_probe(const LabeledFeatures& train, const LabeledFeatures& test, const ProbeConfig& config = {});

/// Stratified split: `train_fraction` of each class goes to train, chosen by
/// a seeded shuffle.
void stratified_split(const LabeledFeatures& all, double train_fraction, std::uint64_t seed,
                      LabeledFeatures& train, LabeledFeatures& test);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  std::size_t dof = 0;
  double mean_difference = 0.0;
  /// Set when every difference is zero; t is then NaN and p is 1.
  bool degenerate = false;

  nlohmann::json to_json() const;
};

/// Two-sided paired t-test on a - b with n - 1 degrees of freedom.
TTestResult paired_ttest(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace topocl
