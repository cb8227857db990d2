#include "topocl/eval.hpp"

#include <Eigen/Core>
#include <boost/math/special_functions/beta.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "topocl/rng.hpp"

namespace topocl {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMat> as_matrix(const LabeledFeatures& f) {
  return {f.x.data(), static_cast<Eigen::Index>(f.size()), static_cast<Eigen::Index>(f.dim)};
}

void check(const LabeledFeatures& f, const char* what) {
  if (f.x.size() != f.size() * f.dim) throw std::invalid_argument(std::string(what) + ": feature size mismatch");
}

}  // namespace

nlohmann::json ProbeResult::to_json() const {
  return {{"accuracy", accuracy}, {"per_class", per_class}, {"runs", runs}};
}

ProbeResult linear_probe(const LabeledFeatures& train, const LabeledFeatures& test, const ProbeConfig& config) {
  check(train, "probe train");
  check(test, "probe test");
  if (train.dim != test.dim) throw std::invalid_argument("probe: train and test dims differ");
  if (train.size() == 0 || test.size() == 0) throw std::invalid_argument("probe: empty split");
  const int classes = *std::max_element(train.y.begin(), train.y.end()) + 1;
  {
    std::vector<int> seen(train.y.begin(), train.y.end());
    std::sort(seen.begin(), seen.end());
    if (std::unique(seen.begin(), seen.end()) - seen.begin() < 2) {
      throw std::invalid_argument("probe: needs at least two classes");
    }
  }
  const auto xtr_raw = as_matrix(train);
  const auto xte_raw = as_matrix(test);
  const Eigen::RowVectorXd mu = xtr_raw.colwise().mean();
  Eigen::RowVectorXd sd = ((xtr_raw.rowwise() - mu).array().square().colwise().mean()).sqrt();
  for (Eigen::Index j = 0; j < sd.size(); ++j) {
    if (sd[j] < 1e-12) sd[j] = 1.0;
  }
  const RowMat xtr = (xtr_raw.rowwise() - mu).array().rowwise() / sd.array();
  const RowMat xte = (xte_raw.rowwise() - mu).array().rowwise() / sd.array();

  const auto n = static_cast<Eigen::Index>(train.size());
  RowMat onehot = RowMat::Zero(n, classes);
  for (Eigen::Index i = 0; i < n; ++i) onehot(i, train.y[static_cast<std::size_t>(i)]) = 1.0;

  RowMat w = RowMat::Zero(static_cast<Eigen::Index>(train.dim), classes);
  Eigen::RowVectorXd b = Eigen::RowVectorXd::Zero(classes);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    RowMat logits = (xtr * w).rowwise() + b;
    const Eigen::VectorXd mx = logits.rowwise().maxCoeff();
    RowMat p = (logits.colwise() - mx).array().exp();
    const Eigen::VectorXd z = p.rowwise().sum();
    p = p.array().colwise() / z.array();
    const RowMat g = (p - onehot) / static_cast<double>(n);
    w -= config.lr * (xtr.transpose() * g);
    b -= config.lr * g.colwise().sum();
  }

  const RowMat scores = (xte * w).rowwise() + b;
  std::vector<std::size_t> hits(static_cast<std::size_t>(classes), 0);
  std::vector<std::size_t> totals(static_cast<std::size_t>(classes), 0);
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index pred = 0;
    scores.row(i).maxCoeff(&pred);
    const int label = test.y[static_cast<std::size_t>(i)];
    if (label >= 0 && label < classes) ++totals[static_cast<std::size_t>(label)];
    if (pred == label) {
      ++correct;
      ++hits[static_cast<std::size_t>(label)];
    }
  }
  ProbeResult r;
  r.accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
  for (int c = 0; c < classes; ++c) {
    const auto k = static_cast<std::size_t>(c);
    r.per_class.push_back(totals[k] ? static_cast<double>(hits[k]) / static_cast<double>(totals[k]) : 0.0);
  }
  r.runs.push_back(r.accuracy);
  return r;
}

void stratified_split(const LabeledFeatures& all, double train_fraction, std::uint64_t seed,
                      LabeledFeatures& train, LabeledFeatures& test) {
  check(all, "split");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < all.size(); ++i) by_class[all.y[i]].push_back(i);
  train = LabeledFeatures{all.dim, {}, {}};
  test = LabeledFeatures{all.dim, {}, {}};
  CounterRng rng(seed);
  for (auto& [label, idx] : by_class) {
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    const auto cut = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(idx.size())));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      LabeledFeatures& dst = k < cut ? train : test;
      const auto row = all.x.begin() + static_cast<std::ptrdiff_t>(idx[k] * all.dim);
      dst.x.insert(dst.x.end(), row, row + static_cast<std::ptrdiff_t>(all.dim));
      dst.y.push_back(label);
    }
  }
}

nlohmann::json TTestResult::to_json() const {
  return {{"t", degenerate ? nlohmann::json(nullptr) : nlohmann::json(t)},
          {"p", p},
          {"dof", dof},
          {"mean_difference", mean_difference},
          {"degenerate", degenerate}};
}

TTestResult paired_ttest(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("paired t-test: lengths differ");
  if (a.size() < 2) throw std::invalid_argument("paired t-test: needs n >= 2");
  const std::size_t n = a.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  TTestResult r;
  r.dof = n - 1;
  double mean = 0.0;
  for (double v : d) mean += v;
  mean /= static_cast<double>(n);
  r.mean_difference = mean;
  if (std::all_of(d.begin(), d.end(), [](double v) { return v == 0.0; })) {
    r.degenerate = true;
    r.t = std::numeric_limits<double>::quiet_NaN();
    r.p = 1.0;
    return r;
  }
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const double se = std::sqrt(ss / static_cast<double>(n - 1)) / std::sqrt(static_cast<double>(n));
  if (se == 0.0) {
    r.t = mean > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    r.p = 0.0;
    return r;
  }
  r.t = mean / se;
  const double nu = static_cast<double>(r.dof);
  // P(|T| > t) = I_{nu / (nu + t^2)}(nu / 2, 1 / 2).
  r.p = boost::math::ibeta(nu / 2.0, 0.5, nu / (nu + r.t * r.t));
  return r;
}

}  // namespace topocl
