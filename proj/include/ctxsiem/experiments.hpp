#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctxsiem/baselines.hpp"
#include "ctxsiem/cascade.hpp"
#include "ctxsiem/metrics.hpp"
#include "ctxsiem/resampling.hpp"
#include "ctxsiem/simulator.hpp"

namespace ctxsiem {

/// A labelled corpus turned into enriched vectors and split for training.
struct PreparedData {
  std::size_t window = kDefaultWindow;
  std::vector<LabelledVector> train;  // balanced
  std::vector<LabelledVector> train_raw;
  std::vector<LabelledVector> validation;
  std::vector<LabelledVector> test;
  std::vector<std::size_t> test_index;  // positions in the source event list
};

struct PrepareOptions {
  std::size_t window = kDefaultWindow;
  SplitFractions fractions;
  std::uint64_t split_seed = 42;
  BalanceConfig balance;
};

/// Labels events through the windows, builds context vectors over the whole
/// chronology, then splits and balances. Throws InputError if an event falls
/// outside every window yet comes from an attack IP (never with generated data).
PreparedData prepare(std::span<const SecurityEvent> events, std::span<const AttackWindow> windows,
                     const PrepareOptions& opt = {});

std::vector<ClassLabel> labels_of(std::span<const LabelledVector> rows);
std::vector<ClassLabel> predict_cascade(const CascadeModel& m, std::span<const LabelledVector> rows);
std::vector<ClassLabel> predict_flat_all(const TreeEnsembleModel& m, std::span<const LabelledVector> rows);

/// Collapses every attack class onto one representative label.
std::vector<ClassLabel> to_binary(std::span<const ClassLabel> labels);

enum class Algorithm { Gbdt, DecisionTree, Logistic };
std::string_view to_string(Algorithm a);

struct ContextImpactRow {
  Algorithm algorithm = Algorithm::Gbdt;
  double f1_without = 0.0;
  double f1_with = 0.0;
  double gain() const { return f1_with - f1_without; }
};

struct ExperimentSettings {
  GbdtConfig stage1 = stage1_defaults();
  GbdtConfig stage2 = stage2_defaults();
  LogisticConfig logistic;
  DecisionTreeConfig tree;
  double stage1_threshold = 0.5;
  /// Cascade and flat models only; 16 drops the context profile.
  std::size_t feature_count = kNumFeatures;
};

/// Stage-1 (NORMAL vs ATTACK) macro F1 with the full vector and with base
/// fields only, for each algorithm family.
std::vector<ContextImpactRow> context_impact(const PreparedData& data, const ExperimentSettings& s,
                                             std::span<const Algorithm> algorithms);

struct CascadeComparison {
  EvalReport cascade;
  EvalReport flat_stage1;  // flat seven-class model, stage-1 hyperparameters
  EvalReport flat_stage2;  // flat seven-class model, stage-2 hyperparameters
  ConfidenceInterval cascade_ci;
  ConfidenceInterval flat_stage1_ci;
  ConfidenceInterval flat_stage2_ci;
  std::vector<DetectionRow> detection;  // rule engine vs cascade
  CascadeModel model;
  TreeEnsembleModel flat_stage1_model;
  TreeEnsembleModel flat_stage2_model;
};

CascadeComparison cascade_vs_flat(const PreparedData& data, std::span<const SecurityEvent> events,
                                  const ExperimentSettings& s, const KeywordTable& keywords,
                                  int bootstrap_resamples = 1000, std::uint64_t seed = 0);

struct AblationRow {
  std::size_t window = 0;
  double macro_f1 = 0.0;
  double stage1_f1 = 0.0;
};

std::vector<AblationRow> window_ablation(std::span<const SecurityEvent> events,
                                         std::span<const AttackWindow> windows,
                                         std::span<const std::size_t> sizes, const PrepareOptions& base,
                                         const ExperimentSettings& s);
std::vector<std::size_t> default_ablation_sizes();

struct DriftResult {
  // Rows: phase 1, 2, 3 test segments. Columns: initial, KB-only, combined.
  std::array<double, 3> initial{};
  std::array<std::optional<double>, 3> kb_only{};
  std::array<std::optional<double>, 3> combined{};
  double kb_accuracy = 0.0;  // initial model against the phase-2 knowledge base
  int retrains_kb_only = 0;
  int retrains_combined = 0;
  nlohmann::json to_json() const;
  std::string to_text() const;
};

struct DriftSettings {
  ExperimentSettings models;
  std::size_t window = kDefaultWindow;
  double accuracy_threshold = 0.90;
  /// Share of each phase reserved for evaluation; the rest trains or seeds the KB.
  double test_fraction = 0.3;
  std::uint64_t seed = 5;
};

DriftResult drift_experiment(const DriftCorpus& corpus, const DriftSettings& s);

}  // namespace ctxsiem
