#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ctxsiem/context.hpp"

namespace ctxsiem {

/// Per-column ordinal codes. Codes are contiguous from 0 in lexicographic
/// order of the training vocabulary; anything unseen maps to the vocabulary
/// size of its column.
class OrdinalEncoder {
 public:
  void fit(const std::vector<std::vector<std::string>>& columns);
  std::vector<double> apply(std::span<const std::string> row) const;
  double apply(std::size_t column, const std::string& value) const;

  bool fitted() const { return fitted_; }
  std::size_t columns() const { return vocab_.size(); }
  std::size_t unseen_code(std::size_t column) const { return vocab_.at(column).size(); }
  const std::map<std::string, int>& vocabulary(std::size_t column) const { return vocab_.at(column); }

  nlohmann::json to_json() const;
  static OrdinalEncoder from_json(const nlohmann::json& j);

 private:
  std::vector<std::map<std::string, int>> vocab_;
  bool fitted_ = false;
};

/// Maps enriched vectors onto dense rows. `feature_count` is 28 for the full
/// vector or 16 to drop the history profile.
class FeatureEncoder {
 public:
  FeatureEncoder() = default;
  explicit FeatureEncoder(std::size_t feature_count);

  void fit(std::span<const EnrichedVector> rows);
  Eigen::VectorXd transform(const EnrichedVector& v) const;
  Eigen::MatrixXd transform(std::span<const EnrichedVector> rows) const;

  std::size_t feature_count() const { return feature_count_; }
  bool fitted() const { return categorical_.fitted(); }
  const OrdinalEncoder& categorical() const { return categorical_; }

  nlohmann::json to_json() const;
  static FeatureEncoder from_json(const nlohmann::json& j);

 private:
  std::size_t feature_count_ = kNumFeatures;
  std::vector<std::size_t> categorical_slots_;
  OrdinalEncoder categorical_;
};

}  // namespace ctxsiem
