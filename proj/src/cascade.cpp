#include "ctxsiem/cascade.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "ctxsiem/errors.hpp"

namespace ctxsiem {

namespace {

constexpr int kManifestVersion = 1;

std::vector<EnrichedVector> features_of(std::span<const LabelledVector> rows) {
  std::vector<EnrichedVector> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.x);
  return out;
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what(), e.byte);
  }
}

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write " + path);
  out << j.dump(1) << '\n';
}

}  // namespace

Dataset make_dataset(const FeatureEncoder& encoder, std::span<const LabelledVector> rows,
                     const std::function<int(ClassLabel)>& class_of, int num_classes) {
  std::vector<const LabelledVector*> kept;
  for (const auto& r : rows)
    if (class_of(r.y) >= 0) kept.push_back(&r);
  Dataset d;
  d.num_classes = num_classes;
  d.x.resize(static_cast<Eigen::Index>(kept.size()), static_cast<Eigen::Index>(encoder.feature_count()));
  for (std::size_t i = 0; i < kept.size(); ++i) {
    d.x.row(static_cast<Eigen::Index>(i)) = encoder.transform(kept[i]->x).transpose();
    d.y.push_back(class_of(kept[i]->y));
  }
  return d;
}

CascadeModel train_cascade(std::span<const LabelledVector> train, const CascadeConfig& cfg,
                           std::span<const LabelledVector> validation) {
  std::set<ClassLabel> attack_classes;
  bool has_normal = false;
  for (const auto& r : train) {
    if (is_attack(r.y)) attack_classes.insert(r.y);
    else has_normal = true;
  }
  if (attack_classes.empty()) throw InputError("train_cascade: training set has no attack rows");
  if (!has_normal) throw InputError("train_cascade: training set has no NORMAL rows");
  if (attack_classes.size() < 2)
    throw InputError("train_cascade: stage 2 needs at least two attack classes");

  CascadeModel model;
  model.stage1_threshold = cfg.stage1_threshold;
  model.stage2_labels.assign(attack_classes.begin(), attack_classes.end());
  model.training_fingerprint = training_fingerprint(train);

  // Stage 1: every row, labels collapsed to NORMAL / ATTACK.
  GbdtConfig c1 = cfg.stage1;
  c1.objective = Objective::BinaryLogistic;
  model.stage1.encoder = FeatureEncoder(cfg.feature_count);
  model.stage1.encoder.fit(features_of(train));
  model.stage1.class_names = {"NORMAL", "ATTACK"};
  auto binary = [](ClassLabel l) { return is_attack(l) ? 1 : 0; };
  const Dataset d1 = make_dataset(model.stage1.encoder, train, binary, 2);
  const Dataset v1 = make_dataset(model.stage1.encoder, validation, binary, 2);
  model.stage1.booster = train_gbdt(d1, c1, validation.empty() ? nullptr : &v1);
  model.stage1_rows = static_cast<std::size_t>(d1.rows());

  // Stage 2: attack rows only.
  std::vector<LabelledVector> attacks;
  for (const auto& r : train)
    if (is_attack(r.y)) attacks.push_back(r);
  auto attack_class = [&](ClassLabel l) {
    auto it = std::find(model.stage2_labels.begin(), model.stage2_labels.end(), l);
    return it == model.stage2_labels.end() ? -1 : static_cast<int>(it - model.stage2_labels.begin());
  };
  GbdtConfig c2 = cfg.stage2;
  c2.objective = Objective::MulticlassSoftmax;
  model.stage2.encoder = FeatureEncoder(cfg.feature_count);
  model.stage2.encoder.fit(features_of(attacks));
  for (ClassLabel l : model.stage2_labels) model.stage2.class_names.emplace_back(to_string(l));
  const int k2 = static_cast<int>(model.stage2_labels.size());
  const Dataset d2 = make_dataset(model.stage2.encoder, attacks, attack_class, k2);
  const Dataset v2 = make_dataset(model.stage2.encoder, validation, attack_class, k2);
  model.stage2.booster = train_gbdt(d2, c2, v2.rows() > 0 ? &v2 : nullptr);
  model.stage2_rows = static_cast<std::size_t>(d2.rows());
  return model;
}

CascadePrediction classify(const CascadeModel& model, const EnrichedVector& v, ClassifyStats* stats) {
  CascadePrediction p;
  const Eigen::VectorXd p1 = model.stage1.predict_proba(v);
  if (stats) ++stats->stage1_calls;
  p.attack = p1[1] > model.stage1_threshold;
  p.stage1_confidence = p.attack ? p1[1] : p1[0];
  if (!p.attack) {
    p.final_label = ClassLabel::Normal;
    return p;
  }
  const Eigen::VectorXd p2 = model.stage2.predict_proba(v);
  if (stats) ++stats->stage2_calls;
  Eigen::Index arg = 0;
  p.stage2_confidence = p2.maxCoeff(&arg);
  p.stage2_label = model.stage2_labels.at(static_cast<std::size_t>(arg));
  p.final_label = *p.stage2_label;
  return p;
}

TreeEnsembleModel train_flat(std::span<const LabelledVector> train, GbdtConfig cfg,
                             std::span<const LabelledVector> validation, std::size_t feature_count,
                             bool require_all_classes) {
  std::set<ClassLabel> present;
  for (const auto& r : train) present.insert(r.y);
  if (require_all_classes)
    for (ClassLabel l : kAllLabels)
      if (!present.count(l))
        throw InputError("train_flat: class " + std::string(to_string(l)) + " is missing");
  const std::vector<ClassLabel> labels(present.begin(), present.end());

  TreeEnsembleModel m;
  m.encoder = FeatureEncoder(feature_count);
  m.encoder.fit(features_of(train));
  for (ClassLabel l : labels) m.class_names.emplace_back(to_string(l));
  auto class_of = [&](ClassLabel l) {
    auto it = std::find(labels.begin(), labels.end(), l);
    return it == labels.end() ? -1 : static_cast<int>(it - labels.begin());
  };
  cfg.objective = Objective::MulticlassSoftmax;
  const int k = static_cast<int>(labels.size());
  const Dataset d = make_dataset(m.encoder, train, class_of, k);
  const Dataset v = make_dataset(m.encoder, validation, class_of, k);
  m.booster = train_gbdt(d, cfg, v.rows() > 0 ? &v : nullptr);
  return m;
}

ClassLabel predict_flat(const TreeEnsembleModel& model, const EnrichedVector& v, double* confidence) {
  const Eigen::VectorXd p = model.predict_proba(v);
  Eigen::Index arg = 0;
  const double best = p.maxCoeff(&arg);
  if (confidence) *confidence = best;
  return parse_label(model.class_names.at(static_cast<std::size_t>(arg)));
}

std::string training_fingerprint(std::span<const LabelledVector> rows) {
  std::uint64_t h = fnv1a64("");
  for (const auto& r : rows) {
    h = fnv1a64(to_string(r.y), h);
    for (const auto& slot : r.x.slots) {
      if (const auto* d = std::get_if<double>(&slot)) {
        h = fnv1a64(std::string_view(reinterpret_cast<const char*>(d), sizeof(double)), h);
      } else {
        h = fnv1a64(std::get<std::string>(slot), h);
        h = fnv1a64(std::string_view("\x1f", 1), h);
      }
    }
  }
  return hex64(h);
}

void save_model(const TreeEnsembleModel& model, const std::string& path) {
  write_json(path, model.to_json());
}

TreeEnsembleModel load_model(const std::string& path) { return TreeEnsembleModel::from_json(read_json(path)); }

void save_cascade(const CascadeModel& model, const std::string& dir, const nlohmann::json& extra) {
  std::filesystem::create_directories(dir);
  save_model(model.stage1, dir + "/stage1.json");
  save_model(model.stage2, dir + "/stage2.json");
  nlohmann::json stage2_labels = nlohmann::json::array();
  for (ClassLabel l : model.stage2_labels) stage2_labels.push_back(std::string(to_string(l)));
  nlohmann::json manifest = {
      {"format", "ctxsiem.cascade"},
      {"version", kManifestVersion},
      {"stage1_labels", {"NORMAL", "ATTACK"}},
      {"stage2_labels", stage2_labels},
      {"stage1_threshold", model.stage1_threshold},
      {"stage1_config", model.stage1.booster.config().to_json()},
      {"stage2_config", model.stage2.booster.config().to_json()},
      {"feature_count", model.stage1.encoder.feature_count()},
      {"training_fingerprint", model.training_fingerprint},
      {"stage1_rows", model.stage1_rows},
      {"stage2_rows", model.stage2_rows},
  };
  if (extra.is_object()) manifest["extra"] = extra;
  write_json(dir + "/manifest.json", manifest);
}

CascadeModel load_cascade(const std::string& dir) {
  const auto manifest = read_json(dir + "/manifest.json");
  if (manifest.value("format", std::string()) != "ctxsiem.cascade")
    throw SchemaError(dir + " does not hold a cascade manifest");
  if (manifest.value("version", -1) != kManifestVersion)
    throw SchemaError("unsupported cascade manifest version");
  CascadeModel m;
  m.stage1 = load_model(dir + "/stage1.json");
  m.stage2 = load_model(dir + "/stage2.json");
  for (const auto& l : manifest.at("stage2_labels")) m.stage2_labels.push_back(parse_label(l.get<std::string>()));
  m.stage1_threshold = manifest.at("stage1_threshold").get<double>();
  m.training_fingerprint = manifest.value("training_fingerprint", std::string());
  m.stage1_rows = manifest.value("stage1_rows", std::size_t{0});
  m.stage2_rows = manifest.value("stage2_rows", std::size_t{0});
  if (m.stage2_labels.size() != m.stage2.class_names.size())
    throw SchemaError("stage 2 label map does not match its model");
  return m;
}

}  // namespace ctxsiem
