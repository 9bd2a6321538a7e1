#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ctxsiem/classifier.hpp"
#include "ctxsiem/context.hpp"
#include "ctxsiem/encoding.hpp"

namespace ctxsiem {

enum class Objective { BinaryLogistic, MulticlassSoftmax };
enum class SplitMethod { Exact, Histogram };

struct GbdtConfig {
  int n_estimators = 100;
  double learning_rate = 0.1;
  int max_depth = 6;
  double subsample = 1.0;
  double colsample_bytree = 1.0;
  double reg_lambda = 1.0;
  double min_child_weight = 1.0;  // minimum hessian sum per child
  int early_stopping_patience = 50;
  Objective objective = Objective::MulticlassSoftmax;
  SplitMethod split_method = SplitMethod::Exact;
  int histogram_bins = 256;
  std::uint64_t seed = 0;

  /// Throws ConfigError when a field is out of range.
  void validate() const;

  nlohmann::json to_json() const;
  static GbdtConfig from_json(const nlohmann::json& j);
};

/// Stage-1 selection: 500 rounds, lr 0.1, depth 10, row 0.70, column 0.85, lambda 1.
GbdtConfig stage1_defaults();
/// Stage-2 selection: 500 rounds, lr 0.06, depth 8, row 0.85, column 0.70, lambda 1.
GbdtConfig stage2_defaults();

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // rows with x[feature] < threshold go left
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf output, already scaled by the learning rate
  double gain = 0.0;
  double cover = 0.0;  // hessian sum

  bool is_leaf() const { return feature < 0; }
};

struct RegressionTree {
  std::vector<TreeNode> nodes;

  template <typename Row>
  double predict(const Row& x) const {
    int i = 0;
    while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
      const auto& n = nodes[static_cast<std::size_t>(i)];
      i = x[n.feature] < n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(i)].value;
  }
  int depth() const;
};

struct TrainingTrace {
  std::vector<double> train_loss;  // after each round
  std::vector<double> valid_loss;
};

class GbdtModel : public Classifier {
 public:
  GbdtModel() = default;

  int num_classes() const override { return num_classes_; }
  int num_features() const override { return num_features_; }
  Eigen::VectorXd predict_proba(const Eigen::Ref<const Eigen::VectorXd>& x) const override;

  /// Raw margins: one value per class (binary models return a single logit).
  Eigen::VectorXd margin(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  const GbdtConfig& config() const { return config_; }
  int rounds() const { return static_cast<int>(rounds_.size()); }
  int best_iteration() const { return best_iteration_; }
  const std::vector<std::vector<RegressionTree>>& trees() const { return rounds_; }
  const std::vector<double>& gain_by_feature() const { return gain_by_feature_; }
  double total_gain() const;

  nlohmann::json to_json() const;
  static GbdtModel from_json(const nlohmann::json& j);

 private:
  friend GbdtModel train_gbdt(const Dataset&, const GbdtConfig&, const Dataset*, TrainingTrace*);

  GbdtConfig config_;
  int num_classes_ = 2;
  int num_features_ = 0;
  Eigen::VectorXd base_score_;
  std::vector<std::vector<RegressionTree>> rounds_;  // rounds_[r][k]
  int best_iteration_ = -1;
  std::vector<double> gain_by_feature_;
};

/// Second-order gradient boosting. With a validation set, training stops once
/// validation log-loss has not improved for `early_stopping_patience` rounds
/// and the ensemble is truncated to the best round.
GbdtModel train_gbdt(const Dataset& train, const GbdtConfig& cfg, const Dataset* valid = nullptr,
                     TrainingTrace* trace = nullptr);

/// (feature, total gain) sorted by descending gain, ties by feature index.
std::vector<std::pair<int, double>> feature_importance(const GbdtModel& model);

/// Gain of splitting a node with totals (g, h) into (gl, hl) / (g-gl, h-hl).
inline double split_gain(double gl, double hl, double g, double h, double lambda) {
  const double gr = g - gl;
  const double hr = h - hl;
  return 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda));
}

struct SplitCandidate {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

/// Best split of one node under the trainer's rules, computed with the same
/// strategy the trainer uses (exposed for verification).
SplitCandidate find_best_split(const Eigen::MatrixXd& x, const std::vector<double>& grad,
                               const std::vector<double>& hess, const std::vector<int>& rows,
                               double reg_lambda, double min_child_weight);

/// Boosted model bundled with the encoder that produced its inputs.
struct TreeEnsembleModel {
  FeatureEncoder encoder;
  GbdtModel booster;
  std::vector<std::string> class_names;  // index = model class id

  Eigen::VectorXd predict_proba(const EnrichedVector& v) const {
    return booster.predict_proba(encoder.transform(v));
  }
  int predict(const EnrichedVector& v) const { return booster.predict(encoder.transform(v)); }

  nlohmann::json to_json() const;
  static TreeEnsembleModel from_json(const nlohmann::json& j);
};

}  // namespace ctxsiem
