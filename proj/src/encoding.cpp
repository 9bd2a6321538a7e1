#include "ctxsiem/encoding.hpp"

#include <set>

#include "ctxsiem/errors.hpp"

namespace ctxsiem {

void OrdinalEncoder::fit(const std::vector<std::vector<std::string>>& columns) {
  vocab_.assign(columns.size(), {});
  for (std::size_t c = 0; c < columns.size(); ++c) {
    const std::set<std::string> distinct(columns[c].begin(), columns[c].end());
    int code = 0;
    for (const auto& s : distinct) vocab_[c].emplace(s, code++);
  }
  fitted_ = true;
}

double OrdinalEncoder::apply(std::size_t column, const std::string& value) const {
  if (!fitted_) throw StateError("OrdinalEncoder used before fit");
  const auto& v = vocab_.at(column);
  auto it = v.find(value);
  return static_cast<double>(it == v.end() ? v.size() : static_cast<std::size_t>(it->second));
}

std::vector<double> OrdinalEncoder::apply(std::span<const std::string> row) const {
  if (!fitted_) throw StateError("OrdinalEncoder used before fit");
  if (row.size() != vocab_.size())
    throw InputError("OrdinalEncoder arity mismatch: got " + std::to_string(row.size()) +
                     ", expected " + std::to_string(vocab_.size()));
  std::vector<double> out(row.size());
  for (std::size_t c = 0; c < row.size(); ++c) out[c] = apply(c, row[c]);
  return out;
}

nlohmann::json OrdinalEncoder::to_json() const {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& v : vocab_) {
    // Codes are implied by lexicographic position.
    nlohmann::json words = nlohmann::json::array();
    for (const auto& [word, code] : v) words.push_back(word);
    cols.push_back(std::move(words));
  }
  return cols;
}

OrdinalEncoder OrdinalEncoder::from_json(const nlohmann::json& j) {
  std::vector<std::vector<std::string>> columns;
  for (const auto& col : j) columns.push_back(col.get<std::vector<std::string>>());
  OrdinalEncoder enc;
  enc.fit(columns);
  return enc;
}

FeatureEncoder::FeatureEncoder(std::size_t feature_count) : feature_count_(feature_count) {
  if (feature_count_ != kNumBaseFeatures && feature_count_ != kNumFeatures)
    throw ConfigError("feature count must be 16 or 28, got " + std::to_string(feature_count_));
  for (std::size_t s = 0; s < feature_count_; ++s)
    if (kFeatureSchema[s].kind == SlotKind::Categorical) categorical_slots_.push_back(s);
}

void FeatureEncoder::fit(std::span<const EnrichedVector> rows) {
  if (categorical_slots_.empty()) *this = FeatureEncoder(feature_count_);
  std::vector<std::vector<std::string>> columns(categorical_slots_.size());
  for (const auto& r : rows)
    for (std::size_t c = 0; c < categorical_slots_.size(); ++c)
      columns[c].push_back(std::get<std::string>(r.slots[categorical_slots_[c]]));
  categorical_.fit(columns);
}

Eigen::VectorXd FeatureEncoder::transform(const EnrichedVector& v) const {
  if (!fitted()) throw StateError("FeatureEncoder used before fit");
  Eigen::VectorXd out(static_cast<Eigen::Index>(feature_count_));
  std::size_t cat = 0;
  for (std::size_t s = 0; s < feature_count_; ++s) {
    if (kFeatureSchema[s].kind == SlotKind::Categorical)
      out[static_cast<Eigen::Index>(s)] = categorical_.apply(cat++, std::get<std::string>(v.slots[s]));
    else
      out[static_cast<Eigen::Index>(s)] = std::get<double>(v.slots[s]);
  }
  return out;
}

Eigen::MatrixXd FeatureEncoder::transform(std::span<const EnrichedVector> rows) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(feature_count_));
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = transform(rows[i]).transpose();
  return out;
}

nlohmann::json FeatureEncoder::to_json() const {
  return {{"feature_count", feature_count_}, {"vocabularies", categorical_.to_json()}};
}

FeatureEncoder FeatureEncoder::from_json(const nlohmann::json& j) {
  FeatureEncoder enc(j.at("feature_count").get<std::size_t>());
  enc.categorical_ = OrdinalEncoder::from_json(j.at("vocabularies"));
  if (enc.categorical_.columns() != enc.categorical_slots_.size())
    throw SchemaError("encoder vocabulary count does not match feature layout");
  return enc;
}

}  // namespace ctxsiem
