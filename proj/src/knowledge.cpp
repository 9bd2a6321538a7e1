#include "ctxsiem/knowledge.hpp"

#include <algorithm>
#include <filesystem>
#include <set>

#include "ctxsiem/errors.hpp"
#include "ctxsiem/log.hpp"

namespace ctxsiem {

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::AutoHighConfidence: return "auto";
    case Provenance::Analyst: return "analyst";
    case Provenance::Seed: return "seed";
  }
  return "seed";
}

Provenance parse_provenance(std::string_view s) {
  if (s == "auto") return Provenance::AutoHighConfidence;
  if (s == "analyst") return Provenance::Analyst;
  if (s == "seed") return Provenance::Seed;
  throw SchemaError("unknown provenance '" + std::string(s) + "'");
}

nlohmann::json vector_to_json(const EnrichedVector& v) {
  nlohmann::json slots = nlohmann::json::array();
  for (const auto& s : v.slots) {
    if (const auto* d = std::get_if<double>(&s)) slots.push_back(*d);
    else slots.push_back(std::get<std::string>(s));
  }
  return {{"slots", slots}, {"window_length", v.window_length}};
}

EnrichedVector vector_from_json(const nlohmann::json& j) {
  EnrichedVector v;
  const auto& slots = j.at("slots");
  if (!slots.is_array() || slots.size() != kNumFeatures)
    throw SchemaError("enriched vector must hold " + std::to_string(kNumFeatures) + " slots");
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    const auto& s = slots[i];
    const bool numeric = kFeatureSchema[i].kind == SlotKind::Numeric;
    if (numeric != s.is_number())
      throw SchemaError("slot " + std::string(kFeatureSchema[i].name) + " has the wrong type");
    if (numeric) v.slots[i] = s.get<double>();
    else v.slots[i] = s.get<std::string>();
  }
  v.window_length = j.value("window_length", std::size_t{0});
  return v;
}

nlohmann::json labelled_to_json(const LabelledVector& v) {
  return {{"vector", vector_to_json(v.x)}, {"label", std::string(to_string(v.y))}, {"synthetic", v.synthetic}};
}

LabelledVector labelled_from_json(const nlohmann::json& j) {
  try {
    return {vector_from_json(j.at("vector")), parse_label(j.at("label").get<std::string>()), j.value("synthetic", false)};
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("labelled vector: ") + e.what());
  }
}

void write_labelled(const std::string& path, std::span<const LabelledVector> rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path);
  for (const auto& r : rows) out << labelled_to_json(r).dump() << '\n';
}

std::vector<LabelledVector> read_labelled(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path);
  std::vector<LabelledVector> rows;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ParseError(path + ": line " + std::to_string(n) + " is not JSON", 0);
    rows.push_back(labelled_from_json(j));
  }
  return rows;
}

nlohmann::json KbRecord::to_json() const {
  return {{"event_id", event_id},
          {"event", nlohmann::json::parse(serialise_event(event))},
          {"vector", vector_to_json(vector)},
          {"label", std::string(ctxsiem::to_string(label))},
          {"provenance", std::string(ctxsiem::to_string(provenance))},
          {"added_at", format_timestamp(added_at)},
          {"seq", seq}};
}

KbRecord KbRecord::from_json(const nlohmann::json& j) {
  KbRecord r;
  try {
    r.event_id = j.at("event_id").get<std::string>();
    r.event = parse_event(j.at("event").dump());
    r.vector = vector_from_json(j.at("vector"));
    r.label = parse_label(j.at("label").get<std::string>());
    r.provenance = parse_provenance(j.at("provenance").get<std::string>());
    r.added_at = parse_timestamp(j.at("added_at").get<std::string>());
    r.seq = j.value("seq", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("knowledge base record: ") + e.what());
  }
  return r;
}

KnowledgeBase::KnowledgeBase(std::string path) : path_(std::move(path)) {
  if (path_.empty()) return;
  if (const auto dir = std::filesystem::path(path_).parent_path(); !dir.empty())
    std::filesystem::create_directories(dir);
  if (const auto cut = trim_torn_tail(path_))
    log_warn("knowledge base " + path_ + ": dropped a torn final line of " + std::to_string(cut) + " bytes");
  if (std::ifstream in(path_); in) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        KbRecord r = KbRecord::from_json(nlohmann::json::parse(line));
        r.seq = records_.size();
        if (!latest_.count(r.event_id)) order_.push_back(r.event_id);
        latest_[r.event_id] = records_.size();
        records_.push_back(std::move(r));
      } catch (const std::exception& e) {
        // A torn final line after a crash is expected; anything else is not.
        log_warn("knowledge base " + path_ + ": skipping line " + std::to_string(lineno) + ": " + e.what());
      }
    }
  }
  out_.open(path_, std::ios::app);
  if (!out_) throw InputError("cannot open knowledge base " + path_);
}

KbRecord KnowledgeBase::append(KbRecord r) {
  std::lock_guard lock(mu_);
  r.seq = records_.size();
  if (out_.is_open()) {
    out_ << r.to_json().dump() << '\n';
    out_.flush();
  }
  if (!latest_.count(r.event_id)) order_.push_back(r.event_id);
  latest_[r.event_id] = records_.size();
  records_.push_back(r);
  return r;
}

std::vector<KbRecord> KnowledgeBase::snapshot() const {
  std::lock_guard lock(mu_);
  std::vector<KbRecord> out;
  out.reserve(order_.size());
  for (const auto& id : order_) out.push_back(records_[latest_.at(id)]);
  return out;
}

std::optional<KbRecord> KnowledgeBase::latest(const std::string& event_id) const {
  std::lock_guard lock(mu_);
  const auto it = latest_.find(event_id);
  if (it == latest_.end()) return std::nullopt;
  return records_[it->second];
}

std::size_t KnowledgeBase::size() const {
  std::lock_guard lock(mu_);
  return order_.size();
}

std::size_t KnowledgeBase::record_count() const {
  std::lock_guard lock(mu_);
  return records_.size();
}

std::map<ClassLabel, std::size_t> KnowledgeBase::class_counts() const {
  std::map<ClassLabel, std::size_t> out;
  for (const auto& r : snapshot()) ++out[r.label];
  return out;
}

EvalReport kb_report(const CascadeModel& model, std::span<const KbRecord> records) {
  std::vector<ClassLabel> truth, pred;
  truth.reserve(records.size());
  pred.reserve(records.size());
  for (const auto& r : records) {
    truth.push_back(r.label);
    pred.push_back(classify(model, r.vector).final_label);
  }
  return evaluate(truth, pred);
}

std::optional<double> evaluate_kb(const CascadeModel& model, std::span<const KbRecord> records) {
  if (records.empty()) {
    log_warn("evaluate_kb: knowledge base is empty, nothing to evaluate");
    return std::nullopt;
  }
  const EvalReport r = kb_report(model, records);
  double sum = 0;
  int n = 0;
  for (const auto& [label, s] : r.per_class)
    if (s.support > 0) {
      sum += s.recall;
      ++n;
    }
  return sum / n;
}

void RetrainPolicy::validate() const {
  if (!(accuracy_threshold > 0 && accuracy_threshold < 1)) throw ConfigError("accuracy threshold must lie in (0,1)");
  if (cadence.count() <= 0) throw ConfigError("evaluation cadence must be positive");
}

CascadeModel retrain(std::span<const KbRecord> records, std::span<const LabelledVector> original, RetrainMode mode,
                     const RetrainSettings& settings) {
  std::vector<LabelledVector> corpus;
  if (mode == RetrainMode::Combined) corpus.assign(original.begin(), original.end());
  for (const auto& r : records) corpus.push_back({r.vector, r.label, false});

  std::map<ClassLabel, std::size_t> counts;
  for (const auto& r : corpus) ++counts[r.y];
  std::size_t attack_classes = 0;
  for (const auto& [l, c] : counts) attack_classes += is_attack(l);
  if (!counts.count(ClassLabel::Normal) || attack_classes < 2)
    throw DegenerateModelError("retraining corpus needs NORMAL and at least two attack classes");

  std::vector<ClassLabel> labels;
  for (const auto& r : corpus) labels.push_back(r.y);
  const SplitFractions f{1.0 - settings.validation_fraction, settings.validation_fraction, 0.0};
  const SplitIndices split = stratified_split(labels, f, settings.seed);
  std::vector<LabelledVector> train, valid;
  for (std::size_t i : split.train) train.push_back(corpus[i]);
  for (std::size_t i : split.validation) valid.push_back(corpus[i]);

  // Classes too small for SMOTE-NC keep their rows as they are.
  BalanceConfig bc = settings.balance;
  bc.require_all_classes = false;
  std::map<ClassLabel, std::size_t> in_train;
  for (const auto& r : train) ++in_train[r.y];
  std::map<ClassLabel, std::size_t> targets;
  for (const auto& [l, c] : in_train) {
    const std::size_t want = settings.balance.target_for(l);
    targets[l] = (want > c && c <= static_cast<std::size_t>(bc.k_neighbors)) ? c : want;
  }
  bc.targets = targets;
  const auto balanced = balance_training(train, bc);
  return train_cascade(balanced, settings.cascade, valid);
}

ModelRegistry::ModelRegistry(std::string archive_dir) : archive_dir_(std::move(archive_dir)) {}

std::shared_ptr<const ModelVersion> ModelRegistry::current() const {
  std::lock_guard lock(mu_);
  return current_;
}

int ModelRegistry::restore() {
  namespace fs = std::filesystem;
  if (archive_dir_.empty() || !fs::is_directory(archive_dir_)) return 0;
  std::vector<int> found;
  for (const auto& entry : fs::directory_iterator(archive_dir_)) {
    const std::string name = entry.path().filename().string();
    if (name.size() < 2 || name[0] != 'v' || !entry.is_directory()) continue;
    if (name.find_first_not_of("0123456789", 1) != std::string::npos) continue;
    found.push_back(std::stoi(name.substr(1)));
  }
  std::sort(found.begin(), found.end());
  std::vector<nlohmann::json> history;
  for (int n : found) {
    std::ifstream in(archive_dir_ + "/v" + std::to_string(n) + "/evaluation.json");
    nlohmann::json entry = nlohmann::json::parse(in, nullptr, false);
    if (entry.is_discarded()) entry = {{"version", n}};
    history.push_back(std::move(entry));
  }
  if (found.empty()) return 0;
  auto v = std::make_shared<ModelVersion>();
  v->version = found.back();
  v->model = std::make_shared<const CascadeModel>(load_cascade(archive_dir_ + "/v" + std::to_string(v->version)));
  v->evaluation = history.back().value("evaluation", nlohmann::json{});
  v->reason = history.back().value("reason", std::string("restored"));
  std::lock_guard lock(mu_);
  history_ = std::move(history);
  current_ = std::move(v);
  return current_->version;
}

int ModelRegistry::publish(CascadeModel model, nlohmann::json evaluation, std::string reason, Timestamp now) {
  auto v = std::make_shared<ModelVersion>();
  v->model = std::make_shared<const CascadeModel>(std::move(model));
  v->evaluation = std::move(evaluation);
  v->reason = std::move(reason);
  v->created = now;
  std::lock_guard lock(mu_);
  v->version = current_ ? current_->version + 1 : 1;
  nlohmann::json entry = {{"version", v->version},
                          {"reason", v->reason},
                          {"created", format_timestamp(v->created)},
                          {"evaluation", v->evaluation}};
  if (!archive_dir_.empty()) {
    const std::string dir = archive_dir_ + "/v" + std::to_string(v->version);
    save_cascade(*v->model, dir, {{"version", v->version}, {"reason", v->reason}});
    std::ofstream(dir + "/evaluation.json") << entry.dump(1) << '\n';
  }
  history_.push_back(std::move(entry));
  current_ = std::move(v);
  return current_->version;
}

void ModelRegistry::set_evaluation(nlohmann::json evaluation) {
  std::lock_guard lock(mu_);
  if (!current_) return;
  auto v = std::make_shared<ModelVersion>(*current_);
  v->evaluation = std::move(evaluation);
  history_.back()["evaluation"] = v->evaluation;
  if (!archive_dir_.empty())
    std::ofstream(archive_dir_ + "/v" + std::to_string(v->version) + "/evaluation.json")
        << history_.back().dump(1) << '\n';
  current_ = std::move(v);
}

std::vector<nlohmann::json> ModelRegistry::history() const {
  std::lock_guard lock(mu_);
  return history_;
}

nlohmann::json EvaluationOutcome::to_json() const {
  nlohmann::json j = {{"triggered", triggered}, {"retrained", retrained}, {"version", version}, {"message", message}};
  j["accuracy"] = accuracy ? nlohmann::json(*accuracy) : nlohmann::json(nullptr);
  return j;
}

EvaluationOutcome evaluate_and_adapt(ModelRegistry& registry, const KnowledgeBase& kb,
                                     std::span<const LabelledVector> original, const RetrainPolicy& policy,
                                     const RetrainSettings& settings, Timestamp now) {
  EvaluationOutcome out;
  const auto serving = registry.current();
  if (!serving) throw StateError("no model is being served");
  out.version = serving->version;
  const auto snapshot = kb.snapshot();  // point-in-time view
  out.accuracy = evaluate_kb(*serving->model, snapshot);
  if (!out.accuracy) {
    out.message = "knowledge base is empty";
    return out;
  }
  const EvalReport report = kb_report(*serving->model, snapshot);
  nlohmann::json evaluation = {{"accuracy", *out.accuracy},
                               {"threshold", policy.accuracy_threshold},
                               {"kb_size", snapshot.size()},
                               {"evaluated_at", format_timestamp(now)},
                               {"report", report.to_json()}};
  registry.set_evaluation(evaluation);
  if (!policy.should_retrain(*out.accuracy)) {
    out.message = "accuracy at or above threshold";
    return out;
  }
  out.triggered = true;
  try {
    CascadeModel fresh = retrain(snapshot, original, policy.mode, settings);
    const EvalReport after = kb_report(fresh, snapshot);
    out.version = registry.publish(std::move(fresh),
                                   {{"kb_macro_f1", after.macro_f1}, {"previous", evaluation}},
                                   "accuracy " + std::to_string(*out.accuracy) + " below threshold", now);
    out.retrained = true;
    out.message = "retrained";
  } catch (const Error& e) {
    log_error(std::string("retraining aborted, keeping version ") + std::to_string(out.version) + ": " + e.what());
    out.message = std::string("retraining aborted: ") + e.what();
  }
  return out;
}

}  // namespace ctxsiem
