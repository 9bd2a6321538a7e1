#include "ctxsiem/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "ctxsiem/errors.hpp"
#include "ctxsiem/log.hpp"

namespace ctxsiem {

namespace fs = std::filesystem;
using nlohmann::json;

void RoutingPolicy::validate() const {
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("routing tau must lie in (0,1)");
}

std::string_view to_string(Route r) {
  switch (r) {
    case Route::PersistOnly: return "persist";
    case Route::AnalystQueue: return "queue";
    case Route::AutoKb: return "auto_kb";
  }
  return "persist";
}

static Route parse_route(std::string_view s) {
  if (s == "persist") return Route::PersistOnly;
  if (s == "queue") return Route::AnalystQueue;
  if (s == "auto_kb") return Route::AutoKb;
  throw SchemaError("unknown route '" + std::string(s) + "'");
}

// ---------------------------------------------------------------- config

static std::string mode_name(RetrainMode m) { return m == RetrainMode::Combined ? "combined" : "kb_only"; }

static RetrainMode parse_mode(const std::string& s) {
  if (s == "combined") return RetrainMode::Combined;
  if (s == "kb_only") return RetrainMode::KbOnly;
  throw ConfigError("retrain mode must be 'combined' or 'kb_only', got '" + s + "'");
}

void PipelineConfig::validate() const {
  if (store_dir.empty()) throw ConfigError("store_dir is empty");
  if (window == 0) throw ConfigError("window must be positive");
  routing.validate();
  retrain.validate();
  if (workers == 0) throw ConfigError("workers must be positive");
  if (!(settings.validation_fraction >= 0.0 && settings.validation_fraction < 1.0))
    throw ConfigError("validation_fraction must lie in [0,1)");
  if (http_port < 0 || http_port > 65535 || ingest_port < 0 || ingest_port > 65535)
    throw ConfigError("port out of range");
  settings.cascade.stage1.validate();
  settings.cascade.stage2.validate();
}

json PipelineConfig::to_json() const {
  json targets = json::object();
  for (const auto& [l, n] : settings.balance.targets) targets[std::string(ctxsiem::to_string(l))] = n;
  return {{"store_dir", store_dir},
          {"window", window},
          {"routing", {{"tau", routing.tau}, {"queue_low_confidence_normals", routing.queue_low_confidence_normals}}},
          {"retrain",
           {{"accuracy_threshold", retrain.accuracy_threshold},
            {"cadence_hours", std::chrono::duration<double, std::ratio<3600>>(retrain.cadence).count()},
            {"mode", mode_name(retrain.mode)}}},
          {"training",
           {{"stage1", settings.cascade.stage1.to_json()},
            {"stage2", settings.cascade.stage2.to_json()},
            {"stage1_threshold", settings.cascade.stage1_threshold},
            {"validation_fraction", settings.validation_fraction},
            {"seed", settings.seed},
            {"balance", {{"k_neighbors", settings.balance.k_neighbors}, {"seed", settings.balance.seed}, {"targets", targets}}}}},
          {"workers", workers},
          {"event_time_cadence", event_time_cadence},
          {"http", {{"host", http_host}, {"port", http_port}}},
          {"ingest_port", ingest_port}};
}

PipelineConfig PipelineConfig::from_json(const json& j) {
  PipelineConfig c;
  try {
    c.store_dir = j.value("store_dir", c.store_dir);
    c.window = j.value("window", c.window);
    if (auto r = j.find("routing"); r != j.end()) {
      c.routing.tau = r->value("tau", c.routing.tau);
      c.routing.queue_low_confidence_normals =
          r->value("queue_low_confidence_normals", c.routing.queue_low_confidence_normals);
    }
    if (auto r = j.find("retrain"); r != j.end()) {
      c.retrain.accuracy_threshold = r->value("accuracy_threshold", c.retrain.accuracy_threshold);
      if (r->contains("cadence_hours"))
        c.retrain.cadence = std::chrono::milliseconds(
            static_cast<long long>(r->at("cadence_hours").get<double>() * 3600.0 * 1000.0));
      if (r->contains("mode")) c.retrain.mode = parse_mode(r->at("mode").get<std::string>());
    }
    if (auto t = j.find("training"); t != j.end()) {
      if (t->contains("stage1")) c.settings.cascade.stage1 = GbdtConfig::from_json(t->at("stage1"));
      if (t->contains("stage2")) c.settings.cascade.stage2 = GbdtConfig::from_json(t->at("stage2"));
      c.settings.cascade.stage1_threshold = t->value("stage1_threshold", c.settings.cascade.stage1_threshold);
      c.settings.validation_fraction = t->value("validation_fraction", c.settings.validation_fraction);
      c.settings.seed = t->value("seed", c.settings.seed);
      if (auto b = t->find("balance"); b != t->end()) {
        c.settings.balance.k_neighbors = b->value("k_neighbors", c.settings.balance.k_neighbors);
        c.settings.balance.seed = b->value("seed", c.settings.balance.seed);
        if (auto tg = b->find("targets"); tg != b->end())
          for (const auto& [name, n] : tg->items()) c.settings.balance.targets[parse_label(name)] = n.get<std::size_t>();
      }
    }
    c.workers = j.value("workers", c.workers);
    c.event_time_cadence = j.value("event_time_cadence", c.event_time_cadence);
    if (auto h = j.find("http"); h != j.end()) {
      c.http_host = h->value("host", c.http_host);
      c.http_port = h->value("port", c.http_port);
    }
    c.ingest_port = j.value("ingest_port", c.ingest_port);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("pipeline config: ") + e.what());
  } catch (const SchemaError& e) {
    throw ConfigError(std::string("pipeline config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

double env_double(const char* name, const char* v) {
  char* end = nullptr;
  const double d = std::strtod(v, &end);
  if (end == v || *end != '\0') throw ConfigError(std::string(name) + " is not a number: '" + v + "'");
  return d;
}

}  // namespace

void apply_env_overrides(PipelineConfig& cfg) {
  if (const char* v = std::getenv("CTXSIEM_STORE_DIR"); v && *v) cfg.store_dir = v;
  if (const char* v = std::getenv("CTXSIEM_N"); v && *v) {
    const double n = env_double("CTXSIEM_N", v);
    if (n < 1 || n != static_cast<double>(static_cast<std::size_t>(n)))
      throw ConfigError("CTXSIEM_N must be a positive integer");
    cfg.window = static_cast<std::size_t>(n);
  }
  if (const char* v = std::getenv("CTXSIEM_TAU"); v && *v) cfg.routing.tau = env_double("CTXSIEM_TAU", v);
  if (const char* v = std::getenv("CTXSIEM_THRESHOLD"); v && *v)
    cfg.retrain.accuracy_threshold = env_double("CTXSIEM_THRESHOLD", v);
  cfg.validate();
}

PipelineConfig load_pipeline_config(const std::string& path) {
  std::string p = path;
  if (p.empty())
    if (const char* v = std::getenv("CTXSIEM_CONFIG"); v && *v) p = v;
  PipelineConfig cfg;
  if (!p.empty()) {
    std::ifstream in(p);
    if (!in) throw ConfigError("cannot read config file " + p);
    json j = json::parse(in, nullptr, false, true);
    if (j.is_discarded() || !j.is_object()) throw ConfigError("config file " + p + " is not a JSON object");
    cfg = PipelineConfig::from_json(j);
  }
  apply_env_overrides(cfg);
  return cfg;
}

// ---------------------------------------------------------------- records

json ClassifiedRecord::to_json(bool with_vector) const {
  const auto& p = prediction;
  json j = {{"event_id", event_id},
            {"event", json::parse(serialise_event(event))},
            {"stage1", {{"label", p.attack ? "ATTACK" : "NORMAL"}, {"confidence", p.stage1_confidence}}},
            {"final_label", std::string(ctxsiem::to_string(p.final_label))},
            {"p_max", p_max()},
            {"model_version", model_version},
            {"route", std::string(ctxsiem::to_string(route))},
            {"seq", seq}};
  if (p.stage2_label)
    j["stage2"] = {{"label", std::string(ctxsiem::to_string(*p.stage2_label))},
                   {"confidence", p.stage2_confidence.value_or(0.0)}};
  else
    j["stage2"] = nullptr;
  if (with_vector) j["vector"] = vector_to_json(vector);
  return j;
}

ClassifiedRecord ClassifiedRecord::from_json(const json& j) {
  ClassifiedRecord r;
  try {
    r.event_id = j.at("event_id").get<std::string>();
    r.event = parse_event(j.at("event").dump());
    r.vector = vector_from_json(j.at("vector"));
    const auto& s1 = j.at("stage1");
    r.prediction.attack = s1.at("label").get<std::string>() == "ATTACK";
    r.prediction.stage1_confidence = s1.at("confidence").get<double>();
    r.prediction.final_label = parse_label(j.at("final_label").get<std::string>());
    if (const auto& s2 = j.at("stage2"); !s2.is_null()) {
      r.prediction.stage2_label = parse_label(s2.at("label").get<std::string>());
      r.prediction.stage2_confidence = s2.at("confidence").get<double>();
    }
    r.model_version = j.at("model_version").get<int>();
    r.route = parse_route(j.at("route").get<std::string>());
    r.seq = j.value("seq", std::uint64_t{0});
  } catch (const json::exception& e) {
    throw SchemaError(std::string("classified record: ") + e.what());
  }
  return r;
}

Route route(const ClassifiedRecord& record, const RoutingPolicy& policy) {
  if (record.p_max() >= policy.tau) return Route::AutoKb;
  if (!is_attack(record.prediction.final_label) && !policy.queue_low_confidence_normals) return Route::PersistOnly;
  return Route::AnalystQueue;
}

json IngestSummary::to_json() const {
  return {{"accepted", accepted}, {"duplicates", duplicates}, {"rejected", rejected}, {"evaluations", evaluations}};
}

// ---------------------------------------------------------------- executor

KeyedExecutor::KeyedExecutor(std::size_t threads) {
  if (threads == 0) throw ConfigError("executor needs at least one thread");
  for (std::size_t i = 0; i < threads; ++i) lanes_.push_back(std::make_unique<Lane>());
  for (auto& lane : lanes_) lane->thread = std::thread([this, l = lane.get()] { run(*l); });
}

KeyedExecutor::~KeyedExecutor() {
  drain();
  stop_ = true;
  for (auto& lane : lanes_) {
    { std::lock_guard lock(lane->mu); }
    lane->cv.notify_all();
    lane->thread.join();
  }
}

std::size_t KeyedExecutor::lane_for(const std::string& key) const {
  return static_cast<std::size_t>(fnv1a64(key) % lanes_.size());
}

void KeyedExecutor::submit(const std::string& key, std::function<void()> task) {
  {
    std::lock_guard lock(idle_mu_);
    ++pending_;
  }
  Lane& lane = *lanes_[lane_for(key)];
  {
    std::lock_guard lock(lane.mu);
    lane.tasks.push_back(std::move(task));
  }
  lane.cv.notify_one();
}

void KeyedExecutor::drain() {
  std::unique_lock lock(idle_mu_);
  idle_cv_.wait(lock, [&] { return pending_ == 0; });
}

void KeyedExecutor::run(Lane& lane) {
  for (;;) {
    std::vector<std::function<void()>> batch;
    {
      std::unique_lock lock(lane.mu);
      lane.cv.wait(lock, [&] { return stop_ || !lane.tasks.empty(); });
      if (lane.tasks.empty()) return;
      batch.swap(lane.tasks);
    }
    for (auto& task : batch) {
      try {
        task();
      } catch (const std::exception& e) {
        log_error(std::string("ingest worker: ") + e.what());
      }
      std::lock_guard lock(idle_mu_);
      if (--pending_ == 0) idle_cv_.notify_all();
    }
  }
}

// ---------------------------------------------------------------- pipeline

namespace {

Timestamp system_now() {
  return std::chrono::time_point_cast<std::chrono::milliseconds>(std::chrono::system_clock::now());
}

// Validates the config and creates the store; returns the model archive path.
std::string prepare_store(const PipelineConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.store_dir);
  return cfg.store_dir + "/models";
}

std::ofstream open_append(const fs::path& p) {
  std::ofstream out(p, std::ios::app);
  if (!out) throw ConfigError("cannot open " + p.string() + " for appending");
  return out;
}

}  // namespace

Pipeline::Pipeline(PipelineConfig cfg, std::optional<CascadeModel> initial, std::vector<LabelledVector> original,
                   Clock clock)
    : cfg_(std::move(cfg)),
      clock_(clock ? std::move(clock) : Clock(system_now)),
      registry_(prepare_store(cfg_)),
      kb_(cfg_.store_dir + "/kb.ndjson"),
      original_(std::move(original)) {
  const fs::path dir = cfg_.store_dir;
  const fs::path training = dir / "training.ndjson";
  if (!original_.empty()) write_labelled(training.string(), original_);
  else if (fs::exists(training)) original_ = read_labelled(training.string());

  if (registry_.restore() == 0) {
    if (!initial) throw StateError("store " + cfg_.store_dir + " holds no model and none was supplied");
    registry_.publish(std::move(*initial), json::object(), "initial", clock_());
  }

  for (std::size_t i = 0; i < cfg_.workers; ++i) {
    contexts_.push_back(std::make_unique<ContextStore>(cfg_.window));
    context_mu_.push_back(std::make_unique<std::mutex>());
  }
  recover();
  results_out_ = open_append(dir / "results.ndjson");
  ingest_out_ = open_append(dir / "ingest.ndjson");
  dead_out_ = open_append(dir / "deadletter.ndjson");
  executor_ = std::make_unique<KeyedExecutor>(cfg_.workers);
}

Pipeline::~Pipeline() { executor_.reset(); }

std::size_t Pipeline::lane_of(const std::string& ip) const {
  return static_cast<std::size_t>(fnv1a64(ip) % contexts_.size());
}

void Pipeline::recover() {
  const fs::path dir = cfg_.store_dir;
  for (const char* name : {"results.ndjson", "ingest.ndjson", "deadletter.ndjson"})
    if (const auto cut = trim_torn_tail((dir / name).string()))
      log_warn(std::string(name) + ": dropped a torn final line of " + std::to_string(cut) + " bytes");
  std::string line;
  if (std::ifstream in(dir / "results.ndjson"); in) {
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (line.empty()) continue;
      try {
        ClassifiedRecord r = ClassifiedRecord::from_json(json::parse(line));
        if (by_id_.count(r.event_id)) continue;
        r.seq = results_.size();
        by_id_[r.event_id] = results_.size();
        results_.push_back(std::move(r));
      } catch (const std::exception& e) {
        // A torn final line after a crash is expected; anything else is worth a look.
        log_warn("results.ndjson line " + std::to_string(n) + " skipped: " + e.what());
      }
    }
  }
  if (std::ifstream in(dir / "deadletter.ndjson"); in)
    while (std::getline(in, line)) dead_letters_ += !line.empty();

  // Analyst labels settle queue membership.
  for (const auto& r : results_) {
    if (r.route != Route::AnalystQueue) continue;
    auto kb = kb_.latest(r.event_id);
    if (kb && kb->provenance == Provenance::Analyst) continue;
    queue_[r.event_id] = {r.event_id, r.p_max(), r.prediction.final_label, r.event.timestamp, r.event.src_ip};
  }

  // Rebuild context from the ingest log; classify whatever never reached
  // the results store.
  std::ifstream in(dir / "ingest.ndjson");
  if (!in) return;
  results_out_ = open_append(dir / "results.ndjson");
  std::size_t n = 0, reclassified = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    SecurityEvent e;
    try {
      e = parse_event(line);
    } catch (const Error& ex) {
      log_warn("ingest.ndjson line " + std::to_string(n) + " skipped: " + ex.what());
      continue;
    }
    const std::string id = event_id(e);
    ContextStore& ctx = *contexts_[lane_of(e.src_ip)];
    if (by_id_.count(id)) {
      ctx.commit(e);
      continue;
    }
    ClassifiedRecord r;
    process(e, id, false, r);
    ++reclassified;
  }
  if (reclassified) log_info("recovered " + std::to_string(reclassified) + " events without results");
}

Timestamp Pipeline::now() const { return clock_(); }

void Pipeline::dead_letter(const std::string& line, const std::string& reason) {
  std::lock_guard lock(results_mu_);
  dead_out_ << json{{"reason", reason}, {"line", line}, {"at", format_timestamp(clock_())}}.dump() << '\n';
  dead_out_.flush();
  ++dead_letters_;
}

void Pipeline::store_result(ClassifiedRecord& r) {
  std::lock_guard lock(results_mu_);
  r.seq = results_.size();
  results_out_ << r.to_json().dump() << '\n';
  results_out_.flush();
  by_id_[r.event_id] = results_.size();
  results_.push_back(r);
  if (r.route == Route::AnalystQueue)
    queue_[r.event_id] = {r.event_id, r.p_max(), r.prediction.final_label, r.event.timestamp, r.event.src_ip};
}

void Pipeline::apply_route(const ClassifiedRecord& r) {
  if (r.route != Route::AutoKb || kb_.latest(r.event_id)) return;
  KbRecord k;
  k.event_id = r.event_id;
  k.event = r.event;
  k.vector = r.vector;
  k.label = r.prediction.final_label;
  k.provenance = Provenance::AutoHighConfidence;
  k.added_at = clock_();
  kb_.append(std::move(k));
}

bool Pipeline::process(const SecurityEvent& e, const std::string& id, bool log_ingest, ClassifiedRecord& out) {
  const std::size_t lane = lane_of(e.src_ip);
  std::lock_guard lane_lock(*context_mu_[lane]);
  {
    std::lock_guard lock(results_mu_);
    if (auto it = by_id_.find(id); it != by_id_.end()) {
      out = results_[it->second];
      return false;
    }
  }
  ContextStore& ctx = *contexts_[lane];
  EnrichedVector v = ctx.enrich(e);  // throws OrderError before anything is written
  if (log_ingest) {
    std::lock_guard lock(results_mu_);
    ingest_out_ << serialise_event(e) << '\n';
    ingest_out_.flush();
  }
  const auto serving = registry_.current();  // one version for both stages
  ClassifiedRecord r;
  r.event_id = id;
  r.event = e;
  r.vector = std::move(v);
  r.prediction = classify(*serving->model, r.vector);
  r.model_version = serving->version;
  r.route = route(r, cfg_.routing);
  store_result(r);
  apply_route(r);
  ctx.commit(e);
  out = std::move(r);
  return true;
}

ClassifiedRecord Pipeline::ingest(const SecurityEvent& e) {
  ClassifiedRecord r;
  try {
    process(e, event_id(e), true, r);
  } catch (const OrderError& ex) {
    dead_letter(serialise_event(e), ex.what());
    throw;
  }
  tick(cfg_.event_time_cadence ? e.timestamp : clock_());
  return r;
}

std::optional<ClassifiedRecord> Pipeline::ingest_line(const std::string& line) {
  SecurityEvent e;
  try {
    e = parse_event(line);
  } catch (const Error& ex) {
    dead_letter(line, ex.what());
    return std::nullopt;
  }
  try {
    return ingest(e);
  } catch (const OrderError&) {
    return std::nullopt;
  }
}

bool Pipeline::cadence_due(Timestamp t) const {
  return !last_evaluation_ || t - *last_evaluation_ >= cfg_.retrain.cadence;
}

std::optional<EvaluationOutcome> Pipeline::tick(Timestamp now) {
  {
    std::lock_guard lock(eval_mu_);
    if (!last_evaluation_) {
      last_evaluation_ = now;  // the first observation starts the cadence
      return std::nullopt;
    }
    if (!cadence_due(now)) return std::nullopt;
    last_evaluation_ = now;
  }
  return evaluate();
}

EvaluationOutcome Pipeline::evaluate() {
  std::lock_guard lock(eval_mu_);
  EvaluationOutcome out = evaluate_and_adapt(registry_, kb_, original_, cfg_.retrain, cfg_.settings, clock_());
  log_info("evaluation: " + out.to_json().dump());
  std::lock_guard outcome_lock(outcome_mu_);
  last_outcome_ = out;
  return out;
}

EvaluationOutcome Pipeline::retrain_now(const std::string& reason) {
  std::lock_guard lock(eval_mu_);
  EvaluationOutcome out;
  out.triggered = true;
  out.version = registry_.current()->version;
  const auto snapshot = kb_.snapshot();
  out.accuracy = evaluate_kb(*registry_.current()->model, snapshot);
  try {
    CascadeModel fresh = retrain(snapshot, original_, cfg_.retrain.mode, cfg_.settings);
    const EvalReport after = kb_report(fresh, snapshot);
    out.version = registry_.publish(std::move(fresh), {{"kb_macro_f1", after.macro_f1}}, reason, clock_());
    out.retrained = true;
    out.message = "retrained";
  } catch (const Error& e) {
    log_error(std::string("retraining aborted, keeping version ") + std::to_string(out.version) + ": " + e.what());
    out.message = std::string("retraining aborted: ") + e.what();
  }
  std::lock_guard outcome_lock(outcome_mu_);
  last_outcome_ = out;
  return out;
}

IngestSummary Pipeline::dispatch(const std::function<bool(std::optional<SecurityEvent>&)>& next) {
  std::atomic<std::size_t> accepted{0}, duplicates{0}, rejected{0};
  IngestSummary summary;
  std::optional<SecurityEvent> item;
  while (next(item)) {
    if (!item) {
      ++rejected;
      continue;
    }
    const Timestamp t = cfg_.event_time_cadence ? item->timestamp : clock_();
    bool due;
    {
      std::lock_guard lock(eval_mu_);
      due = last_evaluation_ && cadence_due(t);
    }
    if (due) {
      // Evaluate between events, never underneath in-flight ones.
      executor_->drain();
      if (tick(t)) ++summary.evaluations;
    } else if (!last_evaluation_) {
      tick(t);
    }
    executor_->submit(item->src_ip, [this, e = std::move(*item), &accepted, &duplicates, &rejected] {
      ClassifiedRecord r;
      try {
        if (process(e, event_id(e), true, r)) ++accepted;
        else ++duplicates;
      } catch (const Error& ex) {
        dead_letter(serialise_event(e), ex.what());
        ++rejected;
      }
    });
    item.reset();
  }
  executor_->drain();
  summary.accepted = accepted;
  summary.duplicates = duplicates;
  summary.rejected = rejected;
  return summary;
}

IngestSummary Pipeline::ingest_stream(std::istream& in) {
  std::string line;
  return dispatch([&](std::optional<SecurityEvent>& out) {
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        out = parse_event(line);
      } catch (const Error& ex) {
        dead_letter(line, ex.what());
        out.reset();
      }
      return true;
    }
    return false;
  });
}

IngestSummary Pipeline::ingest_events(std::span<const SecurityEvent> events) {
  std::size_t i = 0;
  return dispatch([&](std::optional<SecurityEvent>& out) {
    if (i == events.size()) return false;
    out = events[i++];
    return true;
  });
}

KbRecord Pipeline::label(const std::string& id, const std::string& label_name) {
  const ClassLabel l = parse_label(label_name);
  auto rec = record(id);
  if (!rec) throw NotFoundError("unknown event id '" + id + "'");
  KbRecord k;
  k.event_id = id;
  k.event = rec->event;
  k.vector = rec->vector;
  k.label = l;
  k.provenance = Provenance::Analyst;
  k.added_at = clock_();
  KbRecord stored = kb_.append(std::move(k));
  std::lock_guard lock(results_mu_);
  queue_.erase(id);
  return stored;
}

std::vector<ClassifiedRecord> Pipeline::events(const EventQuery& q) const {
  std::lock_guard lock(results_mu_);
  std::vector<const ClassifiedRecord*> hits;
  for (const auto& r : results_) {
    if (q.label && r.prediction.final_label != *q.label) continue;
    if (q.min_conf && r.p_max() < *q.min_conf) continue;
    if (q.max_conf && r.p_max() > *q.max_conf) continue;
    hits.push_back(&r);
  }
  std::sort(hits.begin(), hits.end(), [](const ClassifiedRecord* a, const ClassifiedRecord* b) {
    return std::tie(a->event.timestamp, a->seq) > std::tie(b->event.timestamp, b->seq);
  });
  if (hits.size() > q.limit) hits.resize(q.limit);
  std::vector<ClassifiedRecord> out;
  out.reserve(hits.size());
  for (const auto* r : hits) out.push_back(*r);
  return out;
}

std::optional<ClassifiedRecord> Pipeline::record(const std::string& id) const {
  std::lock_guard lock(results_mu_);
  auto it = by_id_.find(id);
  if (it == by_id_.end()) return std::nullopt;
  return results_[it->second];
}

std::vector<QueueItem> Pipeline::queue() const {
  std::vector<QueueItem> out;
  {
    std::lock_guard lock(results_mu_);
    for (const auto& [id, item] : queue_) out.push_back(item);
  }
  std::sort(out.begin(), out.end(), [](const QueueItem& a, const QueueItem& b) {
    return std::tie(a.p_max, a.event_id) < std::tie(b.p_max, b.event_id);
  });
  return out;
}

std::size_t Pipeline::result_count() const {
  std::lock_guard lock(results_mu_);
  return results_.size();
}

std::size_t Pipeline::dead_letter_count() const {
  std::lock_guard lock(results_mu_);
  return dead_letters_;
}

json Pipeline::model_status() const {
  const auto v = registry_.current();
  const CascadeModel& m = *v->model;
  json labels = json::array();
  for (auto l : m.stage2_labels) labels.push_back(std::string(to_string(l)));
  json j = {{"version", v->version},
            {"reason", v->reason},
            {"created", format_timestamp(v->created)},
            {"stage2_labels", labels},
            {"stage1_threshold", m.stage1_threshold},
            {"training_fingerprint", m.training_fingerprint},
            {"config", cfg_.to_json()},
            {"last_evaluation", v->evaluation},
            {"versions", registry_.history().size()}};
  std::lock_guard lock(outcome_mu_);
  j["last_outcome"] = last_outcome_ ? last_outcome_->to_json() : json(nullptr);
  return j;
}

EvalReport Pipeline::metrics() const {
  const auto snapshot = kb_.snapshot();
  if (snapshot.empty()) throw StateError("knowledge base is empty");
  return kb_report(*registry_.current()->model, snapshot);
}

}  // namespace ctxsiem
