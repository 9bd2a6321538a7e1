#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctxsiem/event.hpp"

namespace ctxsiem {

struct ConfusionMatrix {
  std::vector<ClassLabel> labels;
  std::vector<std::vector<long>> counts;  // [true][predicted]

  long total() const;
  long at(ClassLabel truth, ClassLabel pred) const;
  std::string to_csv() const;
};

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long support = 0;  // true count
};

struct EvalReport {
  std::map<ClassLabel, ClassScores> per_class;  // classes present in truth or prediction
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  double attack_recall = 0.0;     // attack events flagged as any attack
  double attack_precision = 0.0;  // flagged events that are attacks
  long missed_attacks = 0;
  long false_alarms = 0;
  long total = 0;
  ConfusionMatrix confusion;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

/// Throws InputError on a length mismatch.
ConfusionMatrix confusion_matrix(std::span<const ClassLabel> truth, std::span<const ClassLabel> pred);
EvalReport evaluate(std::span<const ClassLabel> truth, std::span<const ClassLabel> pred);
double macro_f1(std::span<const ClassLabel> truth, std::span<const ClassLabel> pred);

struct ConfidenceInterval {
  double point = 0.0;
  double low = 0.0;
  double high = 0.0;
};

/// Percentile bootstrap of macro F1 over event indices. Each resample draws
/// from its own generator seeded from (seed, resample index), so results do
/// not depend on evaluation order. The interval is widened, if needed, to
/// contain the point estimate.
ConfidenceInterval bootstrap_ci(std::span<const ClassLabel> truth, std::span<const ClassLabel> pred,
                                int resamples = 1000, double level = 0.95, std::uint64_t seed = 0);

/// Keyword table for the strict rule-engine baseline. Keywords are matched
/// case-insensitively as substrings of rule groups, description and MITRE ids.
struct KeywordTable {
  int version = 1;
  std::vector<std::pair<ClassLabel, std::vector<std::string>>> keywords;  // checked in order

  static KeywordTable defaults();
  static KeywordTable from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

std::optional<ClassLabel> rule_engine_categorised(const SecurityEvent& e, const KeywordTable& table);

struct DetectionRow {
  ClassLabel label = ClassLabel::Normal;
  long events = 0;
  long rule_hits = 0;
  long model_hits = 0;
  double rule_pct = 0.0;
  double model_pct = 0.0;
};

/// Per attack class: share of true-class events each detector names correctly.
/// `rule_out` holds the rule engine's category (or nothing) per event.
std::vector<DetectionRow> compare_detection(std::span<const ClassLabel> truth,
                                            std::span<const ClassLabel> model_pred,
                                            std::span<const std::optional<ClassLabel>> rule_out);
nlohmann::json detection_to_json(std::span<const DetectionRow> rows);
std::string detection_to_text(std::span<const DetectionRow> rows);

}  // namespace ctxsiem
