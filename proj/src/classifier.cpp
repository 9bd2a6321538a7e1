#include "ctxsiem/classifier.hpp"

#include <algorithm>
#include <set>
#include <string>

#include "ctxsiem/errors.hpp"

namespace ctxsiem {

void validate_training_data(const Dataset& d) {
  if (static_cast<std::size_t>(d.x.rows()) != d.y.size())
    throw InputError("feature rows (" + std::to_string(d.x.rows()) + ") != labels (" +
                     std::to_string(d.y.size()) + ")");
  if (!d.x.allFinite()) throw InputError("training features contain NaN or infinite values");
  std::set<int> present;
  for (int c : d.y) {
    if (c < 0 || c >= d.num_classes)
      throw InputError("label " + std::to_string(c) + " outside [0, " +
                       std::to_string(d.num_classes) + ")");
    present.insert(c);
  }
  if (present.size() < 2)
    throw DegenerateModelError("training data has fewer than two classes");
}

void Classifier::check_arity(Eigen::Index n) const {
  if (n != num_features())
    throw InputError("feature arity mismatch: got " + std::to_string(n) + ", model expects " +
                     std::to_string(num_features()));
}

int Classifier::predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  Eigen::Index arg = 0;
  predict_proba(x).maxCoeff(&arg);
  return static_cast<int>(arg);
}

Eigen::MatrixXd Classifier::predict_proba_rows(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd out(x.rows(), num_classes());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out.row(i) = predict_proba(x.row(i).transpose()).transpose();
  return out;
}

std::vector<int> Classifier::predict_rows(const Eigen::MatrixXd& x) const {
  std::vector<int> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) out[static_cast<std::size_t>(i)] = predict(x.row(i).transpose());
  return out;
}

double softmax_log_loss(const Eigen::MatrixXd& margins, const std::vector<int>& y) {
  double total = 0;
  for (Eigen::Index i = 0; i < margins.rows(); ++i) {
    const auto row = margins.row(i);
    const double m = row.maxCoeff();
    const double lse = m + std::log((row.array() - m).exp().sum());
    total += lse - row(y[static_cast<std::size_t>(i)]);
  }
  return margins.rows() ? total / static_cast<double>(margins.rows()) : 0.0;
}

Eigen::MatrixXd softmax_log_loss_gradient(const Eigen::MatrixXd& margins, const std::vector<int>& y) {
  Eigen::MatrixXd g(margins.rows(), margins.cols());
  const double inv_n = margins.rows() ? 1.0 / static_cast<double>(margins.rows()) : 0.0;
  for (Eigen::Index i = 0; i < margins.rows(); ++i) {
    g.row(i) = softmax(margins.row(i).transpose()).transpose();
    g(i, y[static_cast<std::size_t>(i)]) -= 1.0;
  }
  return g * inv_n;
}

double binary_log_loss(const Eigen::VectorXd& margins, const std::vector<int>& y) {
  double total = 0;
  for (Eigen::Index i = 0; i < margins.size(); ++i) {
    const double z = margins[i];
    // log(1 + exp(-z)) for positives, log(1 + exp(z)) for negatives.
    const double s = y[static_cast<std::size_t>(i)] == 1 ? -z : z;
    total += s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s));
  }
  return margins.size() ? total / static_cast<double>(margins.size()) : 0.0;
}

Eigen::VectorXd binary_log_loss_gradient(const Eigen::VectorXd& margins, const std::vector<int>& y) {
  Eigen::VectorXd g(margins.size());
  const double inv_n = margins.size() ? 1.0 / static_cast<double>(margins.size()) : 0.0;
  for (Eigen::Index i = 0; i < margins.size(); ++i)
    g[i] = (sigmoid(margins[i]) - (y[static_cast<std::size_t>(i)] == 1 ? 1.0 : 0.0)) * inv_n;
  return g;
}

double log_loss(const Eigen::MatrixXd& proba, const std::vector<int>& y) {
  constexpr double kEps = 1e-15;
  double total = 0;
  for (Eigen::Index i = 0; i < proba.rows(); ++i)
    total -= std::log(std::clamp(proba(i, y[static_cast<std::size_t>(i)]), kEps, 1.0));
  return proba.rows() ? total / static_cast<double>(proba.rows()) : 0.0;
}

}  // namespace ctxsiem
