#include "ctxsiem/experiments.hpp"

#include <cstdio>
#include <sstream>

#include "ctxsiem/errors.hpp"
#include "ctxsiem/knowledge.hpp"
#include "ctxsiem/log.hpp"

namespace ctxsiem {

namespace {

std::vector<LabelledVector> pick(const std::vector<EnrichedVector>& vectors, const std::vector<ClassLabel>& labels,
                                 std::span<const std::size_t> idx) {
  std::vector<LabelledVector> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back({vectors[i], labels[i], false});
  return out;
}

std::vector<EnrichedVector> vectors_of(std::span<const LabelledVector> rows) {
  std::vector<EnrichedVector> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.x);
  return out;
}

int binary_class(ClassLabel l) { return is_attack(l) ? 1 : 0; }

ClassLabel from_binary(int c) { return c == 1 ? ClassLabel::SqlInjection : ClassLabel::Normal; }

}  // namespace

std::vector<ClassLabel> labels_of(std::span<const LabelledVector> rows) {
  std::vector<ClassLabel> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.y);
  return out;
}

std::vector<ClassLabel> to_binary(std::span<const ClassLabel> labels) {
  std::vector<ClassLabel> out;
  out.reserve(labels.size());
  for (ClassLabel l : labels) out.push_back(from_binary(binary_class(l)));
  return out;
}

std::vector<ClassLabel> predict_cascade(const CascadeModel& m, std::span<const LabelledVector> rows) {
  std::vector<ClassLabel> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(classify(m, r.x).final_label);
  return out;
}

std::vector<ClassLabel> predict_flat_all(const TreeEnsembleModel& m, std::span<const LabelledVector> rows) {
  std::vector<ClassLabel> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(predict_flat(m, r.x));
  return out;
}

PreparedData prepare(std::span<const SecurityEvent> events, std::span<const AttackWindow> windows,
                     const PrepareOptions& opt) {
  validate_windows(windows);
  const WindowIndex index(windows);
  std::vector<ClassLabel> labels;
  labels.reserve(events.size());
  for (const auto& e : events) labels.push_back(index.label_for(e));
  const auto vectors = build_dataset(events, opt.window);
  const SplitIndices split = stratified_split(labels, opt.fractions, opt.split_seed);

  PreparedData d;
  d.window = opt.window;
  d.train_raw = pick(vectors, labels, split.train);
  d.validation = pick(vectors, labels, split.validation);
  d.test = pick(vectors, labels, split.test);
  d.test_index = split.test;
  d.train = balance_training(d.train_raw, opt.balance);
  return d;
}

std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::Gbdt: return "gbdt";
    case Algorithm::DecisionTree: return "decision_tree";
    case Algorithm::Logistic: return "logistic_regression";
  }
  return "gbdt";
}

std::vector<ContextImpactRow> context_impact(const PreparedData& data, const ExperimentSettings& s,
                                             std::span<const Algorithm> algorithms) {
  const auto truth = to_binary(labels_of(data.test));
  std::vector<ContextImpactRow> rows;
  for (Algorithm a : algorithms) {
    ContextImpactRow row;
    row.algorithm = a;
    for (std::size_t features : {kNumBaseFeatures, kNumFeatures}) {
      FeatureEncoder enc(features);
      enc.fit(vectors_of(data.train));
      const Dataset train = make_dataset(enc, data.train, binary_class, 2);
      const Dataset valid = make_dataset(enc, data.validation, binary_class, 2);
      const Eigen::MatrixXd test = enc.transform(vectors_of(data.test));

      Eigen::MatrixXd proba;
      switch (a) {
        case Algorithm::Gbdt: {
          GbdtConfig cfg = s.stage1;
          cfg.objective = Objective::BinaryLogistic;
          proba = train_gbdt(train, cfg, &valid).predict_proba_rows(test);
          break;
        }
        case Algorithm::DecisionTree:
          proba = train_single_tree(train, s.tree).predict_proba_rows(test);
          break;
        case Algorithm::Logistic:
          proba = train_logistic(train, s.logistic).predict_proba_rows(test);
          break;
      }
      std::vector<ClassLabel> pred;
      pred.reserve(static_cast<std::size_t>(proba.rows()));
      for (Eigen::Index i = 0; i < proba.rows(); ++i) pred.push_back(from_binary(proba(i, 1) > s.stage1_threshold));
      (features == kNumFeatures ? row.f1_with : row.f1_without) = macro_f1(truth, pred);
    }
    log_info(std::string(to_string(a)) + ": stage-1 F1 " + std::to_string(row.f1_without) + " -> " +
             std::to_string(row.f1_with));
    rows.push_back(row);
  }
  return rows;
}

CascadeComparison cascade_vs_flat(const PreparedData& data, std::span<const SecurityEvent> events,
                                  const ExperimentSettings& s, const KeywordTable& keywords, int bootstrap_resamples,
                                  std::uint64_t seed) {
  CascadeComparison out;
  CascadeConfig cc;
  cc.stage1 = s.stage1;
  cc.stage2 = s.stage2;
  cc.stage1_threshold = s.stage1_threshold;
  cc.feature_count = s.feature_count;
  out.model = train_cascade(data.train, cc, data.validation);
  const auto truth = labels_of(data.test);
  const auto cascade_pred = predict_cascade(out.model, data.test);
  out.cascade = evaluate(truth, cascade_pred);
  out.cascade_ci = bootstrap_ci(truth, cascade_pred, bootstrap_resamples, 0.95, seed);

  out.flat_stage1_model = train_flat(data.train, s.stage1, data.validation, s.feature_count);
  const auto flat1_pred = predict_flat_all(out.flat_stage1_model, data.test);
  out.flat_stage1 = evaluate(truth, flat1_pred);
  out.flat_stage1_ci = bootstrap_ci(truth, flat1_pred, bootstrap_resamples, 0.95, seed);

  out.flat_stage2_model = train_flat(data.train, s.stage2, data.validation, s.feature_count);
  const auto flat2_pred = predict_flat_all(out.flat_stage2_model, data.test);
  out.flat_stage2 = evaluate(truth, flat2_pred);
  out.flat_stage2_ci = bootstrap_ci(truth, flat2_pred, bootstrap_resamples, 0.95, seed);

  std::vector<std::optional<ClassLabel>> rules;
  rules.reserve(data.test_index.size());
  for (std::size_t i : data.test_index) rules.push_back(rule_engine_categorised(events[i], keywords));
  out.detection = compare_detection(truth, cascade_pred, rules);
  return out;
}

std::vector<std::size_t> default_ablation_sizes() { return {3, 5, 7, 10, 12, 15, 20, 25, 30, 35}; }

std::vector<AblationRow> window_ablation(std::span<const SecurityEvent> events, std::span<const AttackWindow> windows,
                                         std::span<const std::size_t> sizes, const PrepareOptions& base,
                                         const ExperimentSettings& s) {
  std::vector<AblationRow> rows;
  CascadeConfig cc;
  cc.stage1 = s.stage1;
  cc.stage2 = s.stage2;
  cc.stage1_threshold = s.stage1_threshold;
  cc.feature_count = s.feature_count;
  for (std::size_t n : sizes) {
    PrepareOptions opt = base;
    opt.window = n;
    const PreparedData d = prepare(events, windows, opt);
    const CascadeModel m = train_cascade(d.train, cc, d.validation);
    const auto truth = labels_of(d.test);
    const auto pred = predict_cascade(m, d.test);
    AblationRow row;
    row.window = n;
    row.macro_f1 = macro_f1(truth, pred);
    row.stage1_f1 = macro_f1(to_binary(truth), to_binary(pred));
    log_info("ablation N=" + std::to_string(n) + ": macro F1 " + std::to_string(row.macro_f1));
    rows.push_back(row);
  }
  return rows;
}

nlohmann::json DriftResult::to_json() const {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t p = 0; p < 3; ++p)
    rows.push_back({{"segment", "phase" + std::to_string(p + 1)},
                    {"initial", initial[p]},
                    {"kb_only", opt(kb_only[p])},
                    {"combined", opt(combined[p])}});
  return {{"rows", rows},
          {"kb_accuracy_initial", kb_accuracy},
          {"retrains_kb_only", retrains_kb_only},
          {"retrains_combined", retrains_combined}};
}

std::string DriftResult::to_text() const {
  std::ostringstream os;
  auto cell = [](const std::optional<double>& v) {
    char buf[32];
    if (v) std::snprintf(buf, sizeof buf, "%10.3f", *v);
    else std::snprintf(buf, sizeof buf, "%10s", "---");
    return std::string(buf);
  };
  char line[128];
  std::snprintf(line, sizeof line, "%-10s %10s %10s %10s\n", "segment", "initial", "kb_only", "combined");
  os << line;
  for (std::size_t p = 0; p < 3; ++p) {
    std::snprintf(line, sizeof line, "phase%-5zu %10.3f", p + 1, initial[p]);
    os << line << ' ' << cell(kb_only[p]) << ' ' << cell(combined[p]) << '\n';
  }
  os << "initial KB accuracy " << kb_accuracy << ", retrains kb_only=" << retrains_kb_only
     << " combined=" << retrains_combined << '\n';
  return os.str();
}

DriftResult drift_experiment(const DriftCorpus& corpus, const DriftSettings& s) {
  const Corpus all = corpus.combined();
  validate_windows(all.windows);
  const WindowIndex index(all.windows);
  std::vector<ClassLabel> labels;
  for (const auto& e : all.events) labels.push_back(index.label_for(e));
  const auto vectors = build_dataset(all.events, s.window);

  // Phases occupy consecutive time ranges, so the merged log is phase-ordered.
  std::array<std::vector<LabelledVector>, 3> rest, test;
  std::array<std::vector<SecurityEvent>, 3> rest_events;
  std::size_t offset = 0;
  for (std::size_t p = 0; p < 3; ++p) {
    const std::size_t n = corpus.phases[p].events.size();
    std::vector<ClassLabel> phase_labels(labels.begin() + static_cast<std::ptrdiff_t>(offset),
                                         labels.begin() + static_cast<std::ptrdiff_t>(offset + n));
    const SplitIndices split =
        stratified_split(phase_labels, {1.0 - s.test_fraction, 0.0, s.test_fraction}, s.seed + p);
    for (std::size_t i : split.train) {
      rest[p].push_back({vectors[offset + i], labels[offset + i], false});
      rest_events[p].push_back(all.events[offset + i]);
    }
    for (std::size_t i : split.test) test[p].push_back({vectors[offset + i], labels[offset + i], false});
    offset += n;
  }

  RetrainSettings rs;
  rs.cascade.stage1 = s.models.stage1;
  rs.cascade.stage2 = s.models.stage2;
  rs.cascade.stage1_threshold = s.models.stage1_threshold;
  rs.seed = s.seed;

  // Initial model: phase-1 data only, trained through the same path as a retrain.
  const CascadeModel initial = retrain({}, rest[0], RetrainMode::Combined, rs);

  auto phase_f1 = [&](const CascadeModel& m, std::size_t p) {
    const auto truth = labels_of(test[p]);
    return macro_f1(truth, predict_cascade(m, test[p]));
  };

  DriftResult out;
  for (std::size_t p = 0; p < 3; ++p) out.initial[p] = phase_f1(initial, p);

  KnowledgeBase kb;
  for (std::size_t i = 0; i < rest[1].size(); ++i) {
    KbRecord r;
    r.event = rest_events[1][i];
    r.event_id = event_id(r.event);
    r.vector = rest[1][i].x;
    r.label = rest[1][i].y;
    r.provenance = Provenance::Analyst;
    r.added_at = r.event.timestamp;
    kb.append(std::move(r));
  }
  out.kb_accuracy = evaluate_kb(initial, kb.snapshot()).value_or(0.0);

  for (RetrainMode mode : {RetrainMode::KbOnly, RetrainMode::Combined}) {
    ModelRegistry registry;
    registry.publish(initial, {}, "initial");
    RetrainPolicy policy;
    policy.accuracy_threshold = s.accuracy_threshold;
    policy.mode = mode;
    int retrains = 0;
    // Two evaluation cycles: the first should adapt, the second should hold.
    for (int day = 0; day < 2; ++day)
      retrains += evaluate_and_adapt(registry, kb, rest[0], policy, rs).retrained ? 1 : 0;
    const auto& model = *registry.current()->model;
    auto& column = mode == RetrainMode::KbOnly ? out.kb_only : out.combined;
    for (std::size_t p = 0; p < 3; ++p) column[p] = phase_f1(model, p);
    (mode == RetrainMode::KbOnly ? out.retrains_kb_only : out.retrains_combined) = retrains;
  }
  return out;
}

}  // namespace ctxsiem
