#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctxsiem/gbdt.hpp"
#include "ctxsiem/resampling.hpp"

namespace ctxsiem {

struct CascadeConfig {
  GbdtConfig stage1 = stage1_defaults();
  GbdtConfig stage2 = stage2_defaults();
  /// Stage 1 flags ATTACK when P(attack) exceeds this value.
  double stage1_threshold = 0.5;
  /// 28 for the full vector, 16 to train on base fields only.
  std::size_t feature_count = kNumFeatures;
};

/// Stage 1 separates NORMAL from ATTACK; stage 2 names the attack class.
struct CascadeModel {
  TreeEnsembleModel stage1;  // classes: NORMAL, ATTACK
  TreeEnsembleModel stage2;  // classes: stage2_labels
  std::vector<ClassLabel> stage2_labels;
  double stage1_threshold = 0.5;
  std::string training_fingerprint;
  std::size_t stage1_rows = 0;
  std::size_t stage2_rows = 0;
};

struct CascadePrediction {
  bool attack = false;
  double stage1_confidence = 0.0;
  ClassLabel final_label = ClassLabel::Normal;
  std::optional<double> stage2_confidence;
  std::optional<ClassLabel> stage2_label;

  /// Lowest confidence along the path that produced final_label.
  double confidence() const {
    return stage2_confidence ? std::min(stage1_confidence, *stage2_confidence) : stage1_confidence;
  }
};

struct ClassifyStats {
  std::size_t stage1_calls = 0;
  std::size_t stage2_calls = 0;
};

/// Encodes rows with `encoder` and maps labels through `class_of` (rows that
/// map to -1 are dropped).
Dataset make_dataset(const FeatureEncoder& encoder, std::span<const LabelledVector> rows,
                     const std::function<int(ClassLabel)>& class_of, int num_classes);

/// Throws InputError when there are no attack rows, no NORMAL rows, or fewer
/// than two attack classes.
CascadeModel train_cascade(std::span<const LabelledVector> train, const CascadeConfig& cfg = {},
                           std::span<const LabelledVector> validation = {});

CascadePrediction classify(const CascadeModel& model, const EnrichedVector& v,
                           ClassifyStats* stats = nullptr);

/// One softmax model over every label. With require_all_classes, a missing
/// class is an InputError.
TreeEnsembleModel train_flat(std::span<const LabelledVector> train, GbdtConfig cfg,
                             std::span<const LabelledVector> validation = {},
                             std::size_t feature_count = kNumFeatures,
                             bool require_all_classes = true);

/// Probability of each flat-model class plus the decoded argmax label.
ClassLabel predict_flat(const TreeEnsembleModel& model, const EnrichedVector& v,
                        double* confidence = nullptr);

std::string training_fingerprint(std::span<const LabelledVector> rows);

/// Writes stage1.json, stage2.json and manifest.json into `dir`.
void save_cascade(const CascadeModel& model, const std::string& dir, const nlohmann::json& extra = {});
CascadeModel load_cascade(const std::string& dir);

void save_model(const TreeEnsembleModel& model, const std::string& path);
TreeEnsembleModel load_model(const std::string& path);

}  // namespace ctxsiem
