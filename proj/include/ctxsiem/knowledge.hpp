#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "ctxsiem/cascade.hpp"
#include "ctxsiem/metrics.hpp"

namespace ctxsiem {

enum class Provenance { AutoHighConfidence, Analyst, Seed };
std::string_view to_string(Provenance p);
Provenance parse_provenance(std::string_view s);

nlohmann::json vector_to_json(const EnrichedVector& v);
EnrichedVector vector_from_json(const nlohmann::json& j);

nlohmann::json labelled_to_json(const LabelledVector& v);
LabelledVector labelled_from_json(const nlohmann::json& j);
/// NDJSON, one labelled vector per line.
void write_labelled(const std::string& path, std::span<const LabelledVector> rows);
std::vector<LabelledVector> read_labelled(const std::string& path);

struct KbRecord {
  std::string event_id;
  SecurityEvent event;
  EnrichedVector vector;
  ClassLabel label = ClassLabel::Normal;
  Provenance provenance = Provenance::Seed;
  Timestamp added_at{};
  std::uint64_t seq = 0;  // append order, assigned by the store

  nlohmann::json to_json() const;
  static KbRecord from_json(const nlohmann::json& j);
};

/// Append-only labelled store. A relabel appends a new record; the latest
/// record per event id wins. With a path, records are replayed from and
/// appended to an NDJSON file.
class KnowledgeBase {
 public:
  KnowledgeBase() = default;
  explicit KnowledgeBase(std::string path);

  /// Returns the stored record (with its sequence number).
  KbRecord append(KbRecord r);
  /// Latest record per event id, ordered by first appearance.
  std::vector<KbRecord> snapshot() const;
  std::optional<KbRecord> latest(const std::string& event_id) const;
  std::size_t size() const;          // distinct event ids
  std::size_t record_count() const;  // appended records
  std::map<ClassLabel, std::size_t> class_counts() const;

 private:
  mutable std::mutex mu_;
  std::string path_;
  std::ofstream out_;
  std::vector<KbRecord> records_;
  std::unordered_map<std::string, std::size_t> latest_;  // id -> index into records_
  std::vector<std::string> order_;
};

/// Mean per-class recall of the model over the classes present among the
/// records' labels. Empty input logs a warning and returns nothing.
std::optional<double> evaluate_kb(const CascadeModel& model, std::span<const KbRecord> records);
EvalReport kb_report(const CascadeModel& model, std::span<const KbRecord> records);

enum class RetrainMode { Combined, KbOnly };

struct RetrainPolicy {
  double accuracy_threshold = 0.90;
  std::chrono::milliseconds cadence = std::chrono::hours(24);
  RetrainMode mode = RetrainMode::Combined;

  void validate() const;
  /// Strict: accuracy equal to the threshold does not retrain.
  bool should_retrain(double accuracy) const { return accuracy < accuracy_threshold; }
};

struct RetrainSettings {
  CascadeConfig cascade;
  BalanceConfig balance;
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;
};

/// Builds a balanced training set from the KB (plus `original` in combined
/// mode) and trains a fresh cascade. Throws DegenerateModelError when the
/// corpus lacks NORMAL or has fewer than two attack classes.
CascadeModel retrain(std::span<const KbRecord> records, std::span<const LabelledVector> original,
                     RetrainMode mode, const RetrainSettings& settings);

struct ModelVersion {
  int version = 0;
  std::shared_ptr<const CascadeModel> model;
  nlohmann::json evaluation;  // report that accompanied this version
  std::string reason;
  Timestamp created{};
};

/// Serving model holder. Readers take a shared snapshot; publishing swaps it
/// atomically, so a classification sees exactly one version.
class ModelRegistry {
 public:
  /// Versions are archived under `archive_dir` when it is non-empty.
  explicit ModelRegistry(std::string archive_dir = {});

  std::shared_ptr<const ModelVersion> current() const;
  /// Serves the highest archived version, if any. Returns it (0 when none).
  int restore();
  int publish(CascadeModel model, nlohmann::json evaluation, std::string reason, Timestamp now = {});
  void set_evaluation(nlohmann::json evaluation);
  std::vector<nlohmann::json> history() const;

 private:
  mutable std::mutex mu_;
  std::string archive_dir_;
  std::shared_ptr<const ModelVersion> current_;
  std::vector<nlohmann::json> history_;
};

struct EvaluationOutcome {
  std::optional<double> accuracy;
  bool triggered = false;
  bool retrained = false;
  int version = 0;  // serving version afterwards
  std::string message;
  nlohmann::json to_json() const;
};

/// One adaptive step: evaluate the serving model on a KB snapshot and, when
/// accuracy falls below the threshold, retrain and publish. A failed retrain
/// keeps the old model and reports the failure in `message`.
EvaluationOutcome evaluate_and_adapt(ModelRegistry& registry, const KnowledgeBase& kb,
                                     std::span<const LabelledVector> original, const RetrainPolicy& policy,
                                     const RetrainSettings& settings, Timestamp now = {});

}  // namespace ctxsiem
