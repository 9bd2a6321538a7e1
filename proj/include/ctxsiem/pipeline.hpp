#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "ctxsiem/cascade.hpp"
#include "ctxsiem/context.hpp"
#include "ctxsiem/knowledge.hpp"

namespace ctxsiem {

struct RoutingPolicy {
  double tau = 0.8;  // uncalibrated default
  bool queue_low_confidence_normals = true;

  void validate() const;
};

enum class Route { PersistOnly, AnalystQueue, AutoKb };
std::string_view to_string(Route r);

struct PipelineConfig {
  std::string store_dir = "ctxsiem-store";
  std::size_t window = kDefaultWindow;
  RoutingPolicy routing;
  RetrainPolicy retrain;
  RetrainSettings settings;
  std::size_t workers = 2;
  /// Evaluate at cadence boundaries of event time instead of the wall clock.
  bool event_time_cadence = true;
  std::string http_host = "127.0.0.1";
  int http_port = 8080;
  int ingest_port = 0;  // 0 disables the TCP line listener

  void validate() const;
  nlohmann::json to_json() const;
  /// Unknown keys are ignored; missing keys keep their defaults.
  static PipelineConfig from_json(const nlohmann::json& j);
};

/// Reads `path` (or $CTXSIEM_CONFIG when `path` is empty and the variable is
/// set), then applies CTXSIEM_STORE_DIR, CTXSIEM_N, CTXSIEM_TAU and
/// CTXSIEM_THRESHOLD. Throws ConfigError on unreadable files or bad values.
PipelineConfig load_pipeline_config(const std::string& path = {});
void apply_env_overrides(PipelineConfig& cfg);

struct ClassifiedRecord {
  std::string event_id;
  SecurityEvent event;
  EnrichedVector vector;
  CascadePrediction prediction;
  int model_version = 0;
  Route route = Route::PersistOnly;
  std::uint64_t seq = 0;

  double p_max() const { return prediction.confidence(); }
  nlohmann::json to_json(bool with_vector = true) const;
  static ClassifiedRecord from_json(const nlohmann::json& j);
};

Route route(const ClassifiedRecord& record, const RoutingPolicy& policy);

/// Runs tasks on a fixed set of threads; tasks sharing a key run on the same
/// thread in submission order.
class KeyedExecutor {
 public:
  explicit KeyedExecutor(std::size_t threads);
  ~KeyedExecutor();
  KeyedExecutor(const KeyedExecutor&) = delete;
  KeyedExecutor& operator=(const KeyedExecutor&) = delete;

  std::size_t lane_for(const std::string& key) const;
  void submit(const std::string& key, std::function<void()> task);
  /// Blocks until every submitted task has finished.
  void drain();

 private:
  struct Lane {
    std::mutex mu;
    std::condition_variable cv;
    std::vector<std::function<void()>> tasks;
    std::thread thread;
  };
  void run(Lane& lane);

  std::vector<std::unique_ptr<Lane>> lanes_;
  std::mutex idle_mu_;
  std::condition_variable idle_cv_;
  std::size_t pending_ = 0;
  std::atomic<bool> stop_{false};
};

struct IngestSummary {
  std::size_t accepted = 0;
  std::size_t duplicates = 0;
  std::size_t rejected = 0;
  std::size_t evaluations = 0;
  nlohmann::json to_json() const;
};

struct QueueItem {
  std::string event_id;
  double p_max = 0.0;
  ClassLabel predicted = ClassLabel::Normal;
  Timestamp timestamp{};
  std::string src_ip;
};

struct EventQuery {
  std::optional<ClassLabel> label;
  std::optional<double> min_conf;
  std::optional<double> max_conf;
  std::size_t limit = 100;
};

/// The streaming service. Stores live under config.store_dir:
///   ingest.ndjson      accepted events, in acceptance order
///   results.ndjson     one classified record per event id
///   deadletter.ndjson  rejected lines with a reason
///   kb.ndjson          knowledge base
///   training.ndjson    original training corpus (combined-mode retraining)
///   models/v{n}/       archived model versions
/// Construction replays the stores; events in the ingest log without a
/// result are classified again, so a crash between the two writes loses
/// nothing and duplicates nothing.
class Pipeline {
 public:
  using Clock = std::function<Timestamp()>;

  /// `initial` is published as version 1 when the store holds no model.
  /// `original` is written to training.ndjson when given, else read from it.
  Pipeline(PipelineConfig cfg, std::optional<CascadeModel> initial = std::nullopt,
           std::vector<LabelledVector> original = {}, Clock clock = {});
  ~Pipeline();

  /// Classifies one event. Throws OrderError (after dead-lettering) when it
  /// is older than its IP's latest accepted event. A repeated event id
  /// returns the stored record.
  ClassifiedRecord ingest(const SecurityEvent& e);
  /// One NDJSON line. Bad or out-of-order lines are dead-lettered and yield
  /// nothing.
  std::optional<ClassifiedRecord> ingest_line(const std::string& line);
  /// NDJSON stream; bad lines are dead-lettered and skipped.
  IngestSummary ingest_stream(std::istream& in);
  IngestSummary ingest_events(std::span<const SecurityEvent> events);

  /// Runs an evaluation when a cadence boundary has passed since the last one.
  std::optional<EvaluationOutcome> tick(Timestamp now);
  Timestamp now() const;

  EvaluationOutcome evaluate();
  /// Retrains on the current KB regardless of accuracy.
  EvaluationOutcome retrain_now(const std::string& reason = "manual");

  /// Appends an analyst label and drops the event from the queue. Throws
  /// NotFoundError for an unknown id and SchemaError for a bad label.
  KbRecord label(const std::string& event_id, const std::string& label);

  std::vector<ClassifiedRecord> events(const EventQuery& q) const;
  std::optional<ClassifiedRecord> record(const std::string& event_id) const;
  /// Lowest confidence first.
  std::vector<QueueItem> queue() const;
  std::size_t result_count() const;
  std::size_t dead_letter_count() const;

  nlohmann::json model_status() const;
  EvalReport metrics() const;

  const PipelineConfig& config() const { return cfg_; }
  ModelRegistry& registry() { return registry_; }
  KnowledgeBase& knowledge_base() { return kb_; }

 private:
  /// Classifies, persists, routes and commits `e` under its lane lock.
  /// Returns false with the stored record when the id was already present.
  bool process(const SecurityEvent& e, const std::string& id, bool log_ingest, ClassifiedRecord& out);
  void dead_letter(const std::string& line, const std::string& reason);
  void store_result(ClassifiedRecord& r);
  void apply_route(const ClassifiedRecord& r);
  void recover();
  std::size_t lane_of(const std::string& ip) const;
  /// Pulls events from `next` until it returns false, fanning them out by
  /// IP. `next` reports unparseable input itself and may skip lines.
  IngestSummary dispatch(const std::function<bool(std::optional<SecurityEvent>&)>& next);
  bool cadence_due(Timestamp t) const;

  PipelineConfig cfg_;
  Clock clock_;
  ModelRegistry registry_;
  KnowledgeBase kb_;
  std::vector<LabelledVector> original_;

  std::vector<std::unique_ptr<ContextStore>> contexts_;  // one per lane
  std::vector<std::unique_ptr<std::mutex>> context_mu_;

  mutable std::mutex results_mu_;
  std::vector<ClassifiedRecord> results_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::map<std::string, QueueItem> queue_;
  std::ofstream results_out_;
  std::ofstream ingest_out_;
  std::ofstream dead_out_;
  std::size_t dead_letters_ = 0;

  std::mutex eval_mu_;
  std::optional<Timestamp> last_evaluation_;
  mutable std::mutex outcome_mu_;
  std::optional<EvaluationOutcome> last_outcome_;

  std::unique_ptr<KeyedExecutor> executor_;
};

/// JSON-over-HTTP front end for a Pipeline.
class ApiServer {
 public:
  explicit ApiServer(Pipeline& pipeline);
  ~ApiServer();

  /// Binds and serves on a background thread; port 0 picks a free port.
  /// Returns the bound port.
  int start(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Accepts TCP connections and feeds each received line to the pipeline.
class LineListener {
 public:
  explicit LineListener(Pipeline& pipeline);
  ~LineListener();

  int start(const std::string& host, int port);
  void stop();

 private:
  void serve();
  void handle(int fd);

  Pipeline& pipeline_;
  int listen_fd_ = -1;
  std::atomic<bool> running_{false};
  std::thread thread_;
  std::mutex conn_mu_;
  std::vector<std::thread> connections_;
};

}  // namespace ctxsiem
