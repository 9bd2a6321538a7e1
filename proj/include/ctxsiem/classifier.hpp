#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

namespace ctxsiem {

/// Dense design matrix (rows = samples) with integer class targets.
struct Dataset {
  Eigen::MatrixXd x;
  std::vector<int> y;
  int num_classes = 2;

  Eigen::Index rows() const { return x.rows(); }
  Eigen::Index cols() const { return x.cols(); }
};

/// Throws InputError on a NaN/inf feature or a row/label count mismatch, and
/// DegenerateModelError when fewer than two classes are present.
void validate_training_data(const Dataset& d);

class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual int num_classes() const = 0;
  virtual int num_features() const = 0;
  /// Probability vector of length num_classes(); throws InputError on arity mismatch.
  virtual Eigen::VectorXd predict_proba(const Eigen::Ref<const Eigen::VectorXd>& x) const = 0;

  int predict(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Eigen::MatrixXd predict_proba_rows(const Eigen::MatrixXd& x) const;
  std::vector<int> predict_rows(const Eigen::MatrixXd& x) const;

 protected:
  void check_arity(Eigen::Index n) const;
};

/// Numerically stable softmax of a margin vector.
template <typename Derived>
Eigen::VectorXd softmax(const Eigen::MatrixBase<Derived>& margin) {
  const double m = margin.maxCoeff();
  Eigen::VectorXd e = (margin.array() - m).exp().matrix();
  return e / e.sum();
}

inline double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

/// Mean multinomial log-loss of margins (rows = samples, cols = classes).
double softmax_log_loss(const Eigen::MatrixXd& margins, const std::vector<int>& y);
/// d loss / d margins for softmax_log_loss, same shape as margins.
Eigen::MatrixXd softmax_log_loss_gradient(const Eigen::MatrixXd& margins, const std::vector<int>& y);

/// Mean binary log-loss of one margin per sample (positive class = 1).
double binary_log_loss(const Eigen::VectorXd& margins, const std::vector<int>& y);
Eigen::VectorXd binary_log_loss_gradient(const Eigen::VectorXd& margins, const std::vector<int>& y);

/// Mean log-loss of predicted probabilities (rows = samples).
double log_loss(const Eigen::MatrixXd& proba, const std::vector<int>& y);

}  // namespace ctxsiem
