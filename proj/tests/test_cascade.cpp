#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "ctxsiem/cascade.hpp"
#include "ctxsiem/errors.hpp"
#include "ctxsiem/metrics.hpp"
#include "fixtures.hpp"

using namespace ctxsiem;

namespace {

struct Trained {
  std::vector<LabelledVector> train, test;
  CascadeModel model;
};

const Trained& trained() {
  static const Trained t = [] {
    Trained r;
    r.train = fixture::to_rows(fixture::class_log(fixture::every_class(400, 120), 1, 0.15));
    r.test = fixture::to_rows(fixture::class_log(fixture::every_class(200, 60), 2, 0.15, 1'800'000'000'000));
    r.model = train_cascade(r.train, fixture::fast_cascade());
    return r;
  }();
  return t;
}

}  // namespace

TEST_CASE("stage row counts on a reference-balanced set") {
  const auto rows = fixture::to_rows(fixture::class_log(fixture::every_class(5000, 1250), 3, 0.05));
  auto cfg = fixture::fast_cascade();
  cfg.stage1.n_estimators = cfg.stage2.n_estimators = 2;
  const auto m = train_cascade(rows, cfg);
  CHECK(m.stage1_rows == 12'500);
  CHECK(m.stage2_rows == 7'500);
  CHECK(m.stage2_labels == std::vector<ClassLabel>(kAttackLabels.begin(), kAttackLabels.end()));
  CHECK(m.stage1.class_names == std::vector<std::string>{"NORMAL", "ATTACK"});
  CHECK(m.stage1_threshold == 0.5);
}

TEST_CASE("default cascade configuration uses the stage presets") {
  const CascadeConfig c;
  CHECK(c.stage1.to_json() == stage1_defaults().to_json());
  CHECK(c.stage2.to_json() == stage2_defaults().to_json());
  CHECK(c.feature_count == kNumFeatures);
}

TEST_CASE("training guards") {
  const auto& t = trained();
  std::vector<LabelledVector> normals, one_attack, attacks;
  for (const auto& r : t.train) {
    if (r.y == ClassLabel::Normal) normals.push_back(r);
    else attacks.push_back(r);
    if (r.y == ClassLabel::Normal || r.y == ClassLabel::Xss) one_attack.push_back(r);
  }
  CHECK_THROWS_AS(train_cascade(normals, fixture::fast_cascade()), InputError);
  CHECK_THROWS_AS(train_cascade(attacks, fixture::fast_cascade()), InputError);
  CHECK_THROWS_AS(train_cascade(one_attack, fixture::fast_cascade()), InputError);
  CHECK_THROWS_AS(train_flat(one_attack, fixture::fast_cascade().stage2), InputError);
}

TEST_CASE("stage 2 runs only for rows stage 1 flags") {
  const auto& t = trained();
  ClassifyStats stats;
  std::size_t flagged = 0;
  for (const auto& r : t.test) {
    const std::size_t before = stats.stage2_calls;
    const auto p = classify(t.model, r.x, &stats);
    if (!p.attack) {
      CHECK(stats.stage2_calls == before);
      CHECK(p.final_label == ClassLabel::Normal);
      CHECK_FALSE(p.stage2_confidence.has_value());
      CHECK(p.confidence() == p.stage1_confidence);
    } else {
      ++flagged;
      CHECK(stats.stage2_calls == before + 1);
      REQUIRE(p.stage2_label.has_value());
      CHECK(p.final_label == *p.stage2_label);
      CHECK(is_attack(p.final_label));
      CHECK(p.confidence() == std::min(p.stage1_confidence, *p.stage2_confidence));
    }
  }
  CHECK(stats.stage1_calls == t.test.size());
  CHECK(stats.stage2_calls == flagged);
}

TEST_CASE("the cascade is the composition of its two stages") {
  const auto& t = trained();
  for (const auto& r : t.test) {
    const auto p1 = t.model.stage1.predict_proba(r.x);
    const auto p = classify(t.model, r.x);
    REQUIRE(p.attack == (p1[1] > 0.5));
    if (p.attack) {
      Eigen::Index arg;
      const double top = t.model.stage2.predict_proba(r.x).maxCoeff(&arg);
      REQUIRE(p.final_label == t.model.stage2_labels[static_cast<std::size_t>(arg)]);
      REQUIRE(*p.stage2_confidence == top);
    }
  }
}

TEST_CASE("missed attacks are exactly the stage-1 false negatives") {
  const auto& t = trained();
  std::vector<ClassLabel> truth, pred;
  long stage1_fn = 0, stage1_fp = 0;
  for (const auto& r : t.test) {
    const auto p = classify(t.model, r.x);
    truth.push_back(r.y);
    pred.push_back(p.final_label);
    stage1_fn += is_attack(r.y) && !p.attack;
    stage1_fp += !is_attack(r.y) && p.attack;
  }
  const auto rep = evaluate(truth, pred);
  CHECK(rep.missed_attacks == stage1_fn);
  CHECK(rep.false_alarms == stage1_fp);
  CHECK(rep.macro_f1 > 0.8);
}

TEST_CASE("flat models cover every label") {
  const auto& t = trained();
  const auto flat = train_flat(t.train, fixture::fast_cascade().stage2);
  CHECK(flat.class_names.size() == kNumClasses);
  std::set<ClassLabel> seen;
  for (const auto& r : t.test) {
    double conf = 0;
    seen.insert(predict_flat(flat, r.x, &conf));
    REQUIRE(conf > 0);
    REQUIRE(conf <= 1);
  }
  CHECK(seen.size() == kNumClasses);
}

TEST_CASE("base-only models ignore the context slots") {
  const auto& t = trained();
  auto cfg = fixture::fast_cascade();
  cfg.feature_count = kNumBaseFeatures;
  const auto m = train_cascade(t.train, cfg);
  auto row = t.test.front().x;
  const auto before = classify(m, row);
  for (std::size_t i = kNumBaseFeatures; i < kNumFeatures; ++i) row.slots[i] = 1234.0;
  const auto after = classify(m, row);
  CHECK(before.stage1_confidence == after.stage1_confidence);
  CHECK(before.final_label == after.final_label);
}

TEST_CASE("cascades survive a save and load") {
  const auto& t = trained();
  const auto dir = std::filesystem::temp_directory_path() / "ctxsiem_test_cascade";
  std::filesystem::remove_all(dir);
  save_cascade(t.model, dir.string(), {{"note", "unit"}});
  const auto back = load_cascade(dir.string());
  CHECK(back.stage2_labels == t.model.stage2_labels);
  CHECK(back.training_fingerprint == t.model.training_fingerprint);
  for (const auto& r : t.test) {
    const auto a = classify(t.model, r.x), b = classify(back, r.x);
    REQUIRE(a.final_label == b.final_label);
    REQUIRE(a.stage1_confidence == b.stage1_confidence);
  }
  // A manifest from another format version is refused.
  nlohmann::json manifest;
  std::ifstream(dir / "manifest.json") >> manifest;
  manifest["version"] = 12345;
  std::ofstream(dir / "manifest.json") << manifest.dump();
  CHECK_THROWS_AS(load_cascade(dir.string()), SchemaError);
  CHECK_THROWS(load_cascade((dir / "nope").string()));
  std::filesystem::remove_all(dir);
}

TEST_CASE("training fingerprints depend on content") {
  const auto& t = trained();
  const auto a = training_fingerprint(t.train);
  CHECK(a == training_fingerprint(t.train));
  auto changed = t.train;
  changed[0].y = changed[0].y == ClassLabel::Xss ? ClassLabel::WebScan : ClassLabel::Xss;
  CHECK(training_fingerprint(changed) != a);
}
