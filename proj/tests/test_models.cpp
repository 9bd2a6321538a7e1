#include <doctest.h>

#include <cmath>
#include <numeric>

#include "ctxsiem/baselines.hpp"
#include "ctxsiem/errors.hpp"
#include "ctxsiem/gbdt.hpp"
#include "oracles.hpp"

using namespace ctxsiem;

namespace {

Dataset random_dataset(std::mt19937_64& rng, int n, int d, int k, int signal = -1) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> cls(0, k - 1);
  Dataset ds;
  ds.x.resize(n, d);
  ds.num_classes = k;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) ds.x(i, j) = std::round(u(rng) * 20) / 4;
    ds.y.push_back(signal >= 0 ? (ds.x(i, signal) > 0 ? 1 : 0) % k : cls(rng));
  }
  return ds;
}

GbdtConfig small(int rounds, Objective obj = Objective::MulticlassSoftmax) {
  GbdtConfig c;
  c.n_estimators = rounds;
  c.max_depth = 3;
  c.learning_rate = 0.1;
  c.objective = obj;
  return c;
}

double accuracy(const Classifier& m, const Dataset& d) {
  const auto p = m.predict_rows(d.x);
  int ok = 0;
  for (std::size_t i = 0; i < p.size(); ++i) ok += p[i] == d.y[i];
  return static_cast<double>(ok) / static_cast<double>(p.size());
}

double node_gain_sum(const GbdtModel& m, std::vector<double>* per_feature = nullptr) {
  double total = 0;
  if (per_feature) per_feature->assign(static_cast<std::size_t>(m.num_features()), 0.0);
  for (const auto& round : m.trees())
    for (const auto& tree : round)
      for (const auto& n : tree.nodes)
        if (!n.is_leaf()) {
          total += n.gain;
          if (per_feature) (*per_feature)[static_cast<std::size_t>(n.feature)] += n.gain;
        }
  return total;
}

}  // namespace

TEST_CASE("ordinal encoder uses lexicographic codes and a sentinel for unseen values") {
  OrdinalEncoder enc;
  CHECK_THROWS_AS(enc.apply(0, "GET"), StateError);
  enc.fit({{"GET", "POST", "GET"}, {"", "x"}});
  CHECK(enc.vocabulary(0).size() == 2);
  const std::vector<std::string> rows[] = {{"GET", "x"}, {"POST", ""}, {"GET", "y"}};
  CHECK(enc.apply(rows[0]) == std::vector<double>{0, 1});
  CHECK(enc.apply(rows[1]) == std::vector<double>{1, 0});
  CHECK(enc.apply(0, "PUT") == 2.0);
  CHECK(enc.unseen_code(0) == 2);
  CHECK(enc.apply(rows[2])[1] == 2.0);
  const std::vector<std::string> short_row = {"GET"};
  CHECK_THROWS_AS(enc.apply(short_row), InputError);
  const auto back = OrdinalEncoder::from_json(enc.to_json());
  CHECK(back.apply(0, "POST") == 1.0);
  CHECK(back.apply(1, "") == 0.0);
}

TEST_CASE("feature encoder refuses use before fit") {
  FeatureEncoder f;
  CHECK_THROWS_AS(f.transform(EnrichedVector{}), StateError);
}

TEST_CASE("training data validation") {
  Dataset d;
  d.x = Eigen::MatrixXd::Zero(4, 2);
  d.y = {1, 1, 1, 1};
  CHECK_THROWS_AS(train_gbdt(d, small(5)), DegenerateModelError);
  d.y = {0, 1, 0};
  CHECK_THROWS_AS(train_gbdt(d, small(5)), InputError);
  d.y = {0, 1, 0, 1};
  d.x(0, 0) = std::nan("");
  CHECK_THROWS_AS(train_gbdt(d, small(5)), InputError);
  GbdtConfig bad = small(5);
  bad.subsample = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("stage presets carry the selected hyperparameters") {
  const auto s1 = stage1_defaults();
  CHECK(s1.n_estimators == 500);
  CHECK(s1.learning_rate == 0.1);
  CHECK(s1.max_depth == 10);
  CHECK(s1.subsample == 0.70);
  CHECK(s1.colsample_bytree == 0.85);
  CHECK(s1.reg_lambda == 1.0);
  const auto s2 = stage2_defaults();
  CHECK(s2.n_estimators == 500);
  CHECK(s2.learning_rate == 0.06);
  CHECK(s2.max_depth == 8);
  CHECK(s2.subsample == 0.85);
  CHECK(s2.colsample_bytree == 0.70);
  CHECK(s2.reg_lambda == 1.0);
}

TEST_CASE("training log-loss never increases across rounds") {
  std::mt19937_64 rng(12);
  for (auto obj : {Objective::MulticlassSoftmax, Objective::BinaryLogistic}) {
    const auto d = random_dataset(rng, 300, 4, obj == Objective::BinaryLogistic ? 2 : 3);
    TrainingTrace trace;
    train_gbdt(d, small(40, obj), nullptr, &trace);
    REQUIRE(trace.train_loss.size() == 40);
    for (std::size_t i = 1; i < trace.train_loss.size(); ++i)
      CHECK(trace.train_loss[i] <= trace.train_loss[i - 1] + 1e-12);
  }
}

TEST_CASE("XOR truth table is learned") {
  Dataset d;
  d.num_classes = 2;
  d.x.resize(200, 2);
  for (int r = 0; r < 50; ++r)
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) {
        const int i = r * 4 + a * 2 + b;
        d.x(i, 0) = a;
        d.x(i, 1) = b;
        d.y.push_back(a ^ b);
      }
  for (auto obj : {Objective::BinaryLogistic, Objective::MulticlassSoftmax}) {
    GbdtConfig c = small(50, obj);
    c.max_depth = 2;
    c.subsample = 0.8;
    c.seed = 1;
    const auto m = train_gbdt(d, c);
    CHECK(accuracy(m, d) >= 0.99);
  }
}

TEST_CASE("probabilities are normalised and argmax is the prediction") {
  std::mt19937_64 rng(3);
  const auto d = random_dataset(rng, 400, 5, 4);
  const auto m = train_gbdt(d, small(20));
  std::uniform_real_distribution<double> u(-6, 6);
  for (int i = 0; i < 10'000; ++i) {
    Eigen::VectorXd x(5);
    for (int j = 0; j < 5; ++j) x[j] = u(rng);
    const auto p = m.predict_proba(x);
    REQUIRE(std::abs(p.sum() - 1.0) < 1e-9);
    Eigen::Index arg;
    p.maxCoeff(&arg);
    REQUIRE(m.predict(x) == static_cast<int>(arg));
  }
  CHECK_THROWS_AS(m.predict_proba(Eigen::VectorXd::Zero(3)), InputError);
}

TEST_CASE("zero-tree model predicts the uniform prior with zero gains") {
  std::mt19937_64 rng(5);
  const auto d = random_dataset(rng, 60, 3, 3);
  const auto m = train_gbdt(d, small(0));
  const auto p = m.predict_proba(d.x.row(0).transpose());
  for (Eigen::Index k = 0; k < 3; ++k) CHECK(p[k] == doctest::Approx(1.0 / 3));
  CHECK(m.total_gain() == 0.0);
  for (const auto& [f, g] : feature_importance(m)) CHECK(g == 0.0);
}

TEST_CASE("planted signal ranks first and gains add up") {
  std::mt19937_64 rng(17);
  const auto d = random_dataset(rng, 500, 6, 2, 3);
  TrainingTrace trace;
  Dataset valid = random_dataset(rng, 200, 6, 2, 3);
  GbdtConfig c = small(60);
  c.early_stopping_patience = 5;
  const auto m = train_gbdt(d, c, &valid, &trace);
  CHECK(feature_importance(m).front().first == 3);
  std::vector<double> per_feature;
  CHECK(m.total_gain() == doctest::Approx(node_gain_sum(m, &per_feature)).epsilon(1e-12));
  for (std::size_t f = 0; f < per_feature.size(); ++f)
    CHECK(m.gain_by_feature()[f] == doctest::Approx(per_feature[f]).epsilon(1e-12));
}

TEST_CASE("best split equals exhaustive enumeration") {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> rows_n(2, 200);
  std::normal_distribution<double> g(0, 1);
  std::uniform_real_distribution<double> h(0.05, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = rows_n(rng);
    const auto d = random_dataset(rng, n, 3, 2);
    std::vector<double> grad(static_cast<std::size_t>(n)), hess(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      grad[static_cast<std::size_t>(i)] = g(rng);
      hess[static_cast<std::size_t>(i)] = h(rng);
    }
    std::vector<int> rows;
    for (int i = 0; i < n; ++i)
      if (rng() % 4 != 0) rows.push_back(i);
    if (rows.empty()) continue;
    const double lambda = trial % 2 ? 1.0 : 0.3;
    const double mcw = trial % 3 == 0 ? 2.0 : 0.0;
    const auto got = find_best_split(d.x, grad, hess, rows, lambda, mcw);
    const auto want = oracle::exhaustive_split(d.x, grad, hess, rows, lambda, mcw);
    REQUIRE(got.gain == doctest::Approx(want.gain).epsilon(1e-9));
    if (want.feature >= 0) {
      // The returned threshold must realise the reported gain.
      double gl = 0, hl = 0, gt = 0, ht = 0;
      for (int r : rows) {
        gt += grad[static_cast<std::size_t>(r)];
        ht += hess[static_cast<std::size_t>(r)];
        if (d.x(r, got.feature) < got.threshold) {
          gl += grad[static_cast<std::size_t>(r)];
          hl += hess[static_cast<std::size_t>(r)];
        }
      }
      REQUIRE(split_gain(gl, hl, gt, ht, lambda) == doctest::Approx(got.gain).epsilon(1e-9));
    }
  }
}

TEST_CASE("training is deterministic under a seed and serialises losslessly") {
  std::mt19937_64 rng(8);
  const auto d = random_dataset(rng, 300, 4, 3);
  GbdtConfig c = small(25);
  c.subsample = 0.7;
  c.colsample_bytree = 0.75;
  c.seed = 99;
  const auto a = train_gbdt(d, c);
  const auto b = train_gbdt(d, c);
  CHECK(a.to_json() == b.to_json());
  const auto back = GbdtModel::from_json(a.to_json());
  for (Eigen::Index i = 0; i < d.x.rows(); ++i)
    REQUIRE((back.predict_proba(d.x.row(i).transpose()) - a.predict_proba(d.x.row(i).transpose())).norm() == 0.0);
  auto j = a.to_json();
  j["version"] = 999;
  CHECK_THROWS_AS(GbdtModel::from_json(j), SchemaError);
  j["format"] = "something-else";
  CHECK_THROWS_AS(GbdtModel::from_json(j), SchemaError);
}

TEST_CASE("histogram splits learn a planted signal too") {
  std::mt19937_64 rng(2);
  const auto d = random_dataset(rng, 400, 4, 2, 1);
  GbdtConfig c = small(20);
  c.split_method = SplitMethod::Histogram;
  c.histogram_bins = 64;  // more bins than distinct values
  CHECK(accuracy(train_gbdt(d, c), d) >= 0.99);
}

TEST_CASE("log-loss gradients match finite differences") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0, 2);
  Eigen::MatrixXd margins(7, 3);
  for (Eigen::Index i = 0; i < margins.size(); ++i) margins.data()[i] = g(rng);
  const std::vector<int> y = {0, 1, 2, 2, 1, 0, 1};
  const Eigen::MatrixXd grad = softmax_log_loss_gradient(margins, y);
  const Eigen::VectorXd flat = Eigen::Map<const Eigen::VectorXd>(margins.data(), margins.size());
  const auto fd = oracle::finite_difference(
      [&](const Eigen::VectorXd& v) {
        Eigen::MatrixXd m = Eigen::Map<const Eigen::MatrixXd>(v.data(), 7, 3);
        return softmax_log_loss(m, y);
      },
      flat);
  const Eigen::VectorXd analytic = Eigen::Map<const Eigen::VectorXd>(grad.data(), grad.size());
  CHECK((analytic - fd).norm() <= 1e-4 * std::max(1.0, analytic.norm()));

  Eigen::VectorXd z(6);
  for (Eigen::Index i = 0; i < 6; ++i) z[i] = g(rng);
  const std::vector<int> yb = {0, 1, 1, 0, 1, 0};
  const auto gb = binary_log_loss_gradient(z, yb);
  const auto fdb = oracle::finite_difference([&](const Eigen::VectorXd& v) { return binary_log_loss(v, yb); }, z);
  CHECK((gb - fdb).norm() <= 1e-4 * std::max(1.0, gb.norm()));
}

TEST_CASE("logistic objective gradient matches finite differences and vanishes at the optimum") {
  std::mt19937_64 rng(10);
  const auto d = random_dataset(rng, 40, 3, 3);
  const int k = 3;
  const Eigen::Index p = k * d.x.cols() + k;
  std::normal_distribution<double> g(0, 0.5);
  Eigen::VectorXd w(p);
  for (Eigen::Index i = 0; i < p; ++i) w[i] = g(rng);
  const double l2 = 0.1;
  auto f = [&](const Eigen::VectorXd& v) { return logistic_objective(v, d.x, d.y, k, l2).loss; };
  const auto obj = logistic_objective(w, d.x, d.y, k, l2);
  const auto fd = oracle::finite_difference(f, w);
  CHECK((obj.gradient - fd).norm() <= 1e-4 * std::max(1.0, obj.gradient.norm()));

  // Plain gradient descent on the strongly convex objective.
  for (int it = 0; it < 20000; ++it) w -= 0.5 * logistic_objective(w, d.x, d.y, k, l2).gradient;
  const auto at_opt = logistic_objective(w, d.x, d.y, k, l2);
  CHECK(at_opt.gradient.norm() < 1e-3);
  const auto fd_opt = oracle::finite_difference(f, w);
  CHECK((fd_opt - at_opt.gradient).norm() < 1e-3);
}

TEST_CASE("logistic regression separates linearly separable data") {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> u(-5, 5);
  Dataset d;
  d.x.resize(400, 2);
  for (int i = 0; i < 400; ++i) {
    double a, b;
    do {
      a = u(rng);
      b = u(rng);
    } while (std::abs(2 * a - b + 1) < 0.3);  // keep a margin around the boundary
    d.x(i, 0) = a;
    d.x(i, 1) = b;
    d.y.push_back(2 * a - b + 1 > 0 ? 1 : 0);
  }
  const auto m = train_logistic(d, LogisticConfig{});
  CHECK(accuracy(m, d) >= 0.99);
  const auto p = m.predict_proba(d.x.row(0).transpose());
  CHECK(p.sum() == doctest::Approx(1.0));
}

TEST_CASE("a depth-1 tree recovers the exact threshold") {
  Dataset d;
  d.x.resize(100, 2);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    d.x(i, 0) = i;
    d.x(i, 1) = static_cast<double>(rng() % 100);
    d.y.push_back(i >= 37 ? 1 : 0);
  }
  DecisionTreeConfig c;
  c.max_depth = 1;
  const auto t = train_single_tree(d, c);
  REQUIRE(t.nodes().size() == 3);
  CHECK(t.nodes()[0].feature == 0);
  // Brute force: the only zero-impurity cut lies between 36 and 37.
  CHECK(t.nodes()[0].threshold > 36.0);
  CHECK(t.nodes()[0].threshold <= 37.0);
  CHECK(accuracy(t, d) == 1.0);
}

TEST_CASE("tree ensemble bundle rejects a mismatched class list") {
  std::mt19937_64 rng(4);
  const auto d = random_dataset(rng, 50, 2, 2);
  TreeEnsembleModel m;
  m.encoder = FeatureEncoder(kNumFeatures);
  m.booster = train_gbdt(d, small(3));
  m.class_names = {"a", "b", "c"};
  std::vector<EnrichedVector> rows(1);
  for (std::size_t s = 0; s < kNumFeatures; ++s)
    rows[0].slots[s] = kFeatureSchema[s].kind == SlotKind::Numeric ? FeatureValue{0.0} : FeatureValue{std::string()};
  m.encoder.fit(rows);
  CHECK_THROWS_AS(TreeEnsembleModel::from_json(m.to_json()), SchemaError);
}
