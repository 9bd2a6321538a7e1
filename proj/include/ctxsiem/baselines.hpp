#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "ctxsiem/classifier.hpp"

namespace ctxsiem {

struct LogisticConfig {
  double l2 = 1e-3;
  int epochs = 300;
  double learning_rate = 0.5;
  std::size_t batch_size = 0;  // 0 = full batch
  std::uint64_t seed = 0;
  bool standardise = true;  // z-score columns before fitting
};

/// Multinomial logistic regression, W is classes x features.
class LogisticModel : public Classifier {
 public:
  int num_classes() const override { return static_cast<int>(weights_.rows()); }
  int num_features() const override { return static_cast<int>(weights_.cols()); }
  Eigen::VectorXd predict_proba(const Eigen::Ref<const Eigen::VectorXd>& x) const override;

  const Eigen::MatrixXd& weights() const { return weights_; }
  const Eigen::VectorXd& bias() const { return bias_; }

 private:
  friend LogisticModel train_logistic(const Dataset&, const LogisticConfig&);
  Eigen::MatrixXd weights_;
  Eigen::VectorXd bias_;
  Eigen::VectorXd mean_;
  Eigen::VectorXd scale_;
};

/// Penalised mean log-loss of a linear softmax model and its gradient.
/// Parameters are packed as [vec(W) column-major, b].
struct LinearObjective {
  double loss = 0.0;
  Eigen::VectorXd gradient;
};
LinearObjective logistic_objective(const Eigen::VectorXd& params, const Eigen::MatrixXd& x,
                                   const std::vector<int>& y, int num_classes, double l2);

LogisticModel train_logistic(const Dataset& data, const LogisticConfig& cfg);

struct DecisionTreeConfig {
  int max_depth = 10;
  int min_samples_split = 2;
  int min_samples_leaf = 1;
};

/// Greedy CART classifier with Gini impurity; leaves hold class frequencies.
class DecisionTreeModel : public Classifier {
 public:
  struct Node {
    int feature = -1;
    double threshold = 0.0;  // x < threshold goes left
    int left = -1;
    int right = -1;
    Eigen::VectorXd distribution;
    bool is_leaf() const { return feature < 0; }
  };

  int num_classes() const override { return num_classes_; }
  int num_features() const override { return num_features_; }
  Eigen::VectorXd predict_proba(const Eigen::Ref<const Eigen::VectorXd>& x) const override;

  const std::vector<Node>& nodes() const { return nodes_; }

 private:
  friend DecisionTreeModel train_single_tree(const Dataset&, const DecisionTreeConfig&);
  int num_classes_ = 2;
  int num_features_ = 0;
  std::vector<Node> nodes_;
};

DecisionTreeModel train_single_tree(const Dataset& data, const DecisionTreeConfig& cfg);

}  // namespace ctxsiem
