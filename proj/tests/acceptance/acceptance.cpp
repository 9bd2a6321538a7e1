// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cstring>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "ctxsiem/context.hpp"
#include "ctxsiem/experiments.hpp"
#include "ctxsiem/gbdt.hpp"
#include "ctxsiem/log.hpp"
#include "ctxsiem/metrics.hpp"
#include "ctxsiem/resampling.hpp"
#include "ctxsiem/simulator.hpp"
#include "oracles.hpp"

using namespace ctxsiem;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  // Records a check; failed checks are marked in the detail line.
  void expect(bool ok, const std::string& what) {
    pass = pass && ok;
    if (detail.tellp() > 0) detail << "; ";
    detail << (ok ? "" : "NOT ") << what;
  }
};

std::string fmt(double v, int digits = 3) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(digits) << v;
  return o.str();
}

// The default testbed, generated and prepared once per process.
struct Testbed {
  Corpus corpus;
  PreparedData data;
};

const Testbed& testbed() {
  static const Testbed t = [] {
    Testbed b;
    b.corpus = generate(default_scenario());
    b.data = prepare(b.corpus.events, b.corpus.windows);
    return b;
  }();
  return t;
}

const CascadeComparison& comparison() {
  static const CascadeComparison c = [] {
    const auto& t = testbed();
    return cascade_vs_flat(t.data, t.corpus.events, ExperimentSettings{}, KeywordTable::defaults(), 1000, 0);
  }();
  return c;
}

// ---------------------------------------------------------------- 1

void context_gap(Verdict& v) {
  const auto& t = testbed();
  const auto start = std::chrono::steady_clock::now();
  const std::vector<Algorithm> algs = {Algorithm::Gbdt, Algorithm::DecisionTree, Algorithm::Logistic};
  std::map<Algorithm, ContextImpactRow> rows;
  for (const auto& r : context_impact(t.data, ExperimentSettings{}, algs)) rows[r.algorithm] = r;
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  v.expect(t.corpus.events.size() >= 20'000, std::to_string(t.corpus.events.size()) + " events");
  for (auto a : {Algorithm::Gbdt, Algorithm::DecisionTree}) {
    const auto& r = rows.at(a);
    v.expect(r.gain() >= 0.10, std::string(to_string(a)) + " " + fmt(r.f1_without) + " -> " + fmt(r.f1_with) +
                                   " gain " + fmt(r.gain()) + " >= 0.10");
  }
  const auto& lr = rows.at(Algorithm::Logistic);
  v.expect(rows.at(Algorithm::Gbdt).gain() > lr.gain(), "gbdt gain > logistic gain " + fmt(lr.gain()));
  v.expect(seconds < 600, "trained in " + fmt(seconds, 0) + " s < 600 s");
}

// ---------------------------------------------------------------- 2

void cascade_tradeoff(Verdict& v) {
  const auto& c = comparison();
  const auto& cas = c.cascade;
  const auto& flat = c.flat_stage1;
  v.expect(cas.missed_attacks <= flat.missed_attacks,
           "missed " + std::to_string(cas.missed_attacks) + " <= flat " + std::to_string(flat.missed_attacks));
  const double hi = static_cast<double>(std::max(cas.false_alarms, flat.false_alarms));
  const double diff = std::abs(static_cast<double>(cas.false_alarms - flat.false_alarms));
  v.expect(diff <= 0.2 * hi, "false alarms " + std::to_string(cas.false_alarms) + " vs " +
                                 std::to_string(flat.false_alarms) + " within 20%");
  v.expect(cas.attack_recall >= flat.attack_recall - 0.005,
           "attack recall " + fmt(cas.attack_recall, 4) + " >= " + fmt(flat.attack_recall, 4) + " - 0.005");
}

// ---------------------------------------------------------------- 3

void ablation_shape(Verdict& v) {
  const auto& t = testbed();
  const std::vector<std::size_t> sizes = {3, 15, 30};
  std::map<std::size_t, double> f1;
  for (const auto& r : window_ablation(t.corpus.events, t.corpus.windows, sizes, PrepareOptions{}, ExperimentSettings{}))
    f1[r.window] = r.macro_f1;
  v.expect(f1[30] >= f1[3] + 0.05, "F1(30) " + fmt(f1[30]) + " >= F1(3) " + fmt(f1[3]) + " + 0.05");
  v.expect(f1[15] - f1[3] > f1[30] - f1[15],
           "gain 3->15 " + fmt(f1[15] - f1[3]) + " > gain 15->30 " + fmt(f1[30] - f1[15]));
}

// ---------------------------------------------------------------- 4

void drift_loop(Verdict& v) {
  const DriftResult r = drift_experiment(drift_corpus(), DriftSettings{});
  v.expect(r.initial[1] <= r.initial[0] - 0.15,
           "phase-2 F1 " + fmt(r.initial[1]) + " <= phase-1 F1 " + fmt(r.initial[0]) + " - 0.15");
  v.expect(r.kb_accuracy < 0.90, "KB accuracy " + fmt(r.kb_accuracy) + " < 0.90");
  v.expect(r.retrains_combined == 1 && r.retrains_kb_only == 1,
           "retrains combined " + std::to_string(r.retrains_combined) + ", kb-only " +
               std::to_string(r.retrains_kb_only) + " == 1");
  const double combined = r.combined[2].value_or(0.0), kb_only = r.kb_only[2].value_or(0.0);
  v.expect(combined >= r.initial[2] + 0.10,
           "phase-3 F1 " + fmt(combined) + " >= initial " + fmt(r.initial[2]) + " + 0.10");
  v.expect(combined >= kb_only, "combined " + fmt(combined) + " >= kb-only " + fmt(kb_only));
}

// ---------------------------------------------------------------- 5

void balancing_exactness(Verdict& v) {
  const auto& d = testbed().data;
  std::map<ClassLabel, std::size_t> counts;
  for (const auto& r : d.train) ++counts[r.y];
  bool exact = counts[ClassLabel::Normal] == 5000;
  for (auto l : kAttackLabels) exact = exact && counts[l] == 1250;
  v.expect(exact && counts.size() == kNumClasses, "balanced training set " + std::to_string(d.train.size()) +
                                                      " rows, NORMAL 5000 and 1250 per attack class");
  auto near = [](std::size_t got, long want) { return std::abs(static_cast<long>(got) - want) <= 1; };
  v.expect(near(d.train_raw.size(), 29'731), "train " + std::to_string(d.train_raw.size()) + " ~ 29731");
  v.expect(near(d.validation.size(), 7'432), "validation " + std::to_string(d.validation.size()) + " ~ 7432");
  v.expect(near(d.test.size(), 9'232), "test " + std::to_string(d.test.size()) + " ~ 9232");
}

// ---------------------------------------------------------------- 6

oracle::Context context_of(const EnrichedVector& x) {
  oracle::Context c{};
  for (std::size_t i = 0; i < kNumContextFeatures; ++i) c[i] = std::get<double>(x.slots[kNumBaseFeatures + i]);
  return c;
}

void oracle_equivalences(Verdict& v) {
  // (a) enrichment
  std::size_t checked = 0, mismatched = 0;
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    std::mt19937_64 rng(seed);
    const auto log = oracle::random_log(rng, 10'000, 15, 0.2);
    const auto batch = build_dataset(log, kDefaultWindow);
    ContextStore store(kDefaultWindow);
    for (std::size_t i = 0; i < log.size(); ++i, ++checked) {
      const auto streamed = store.enrich_and_commit(log[i]);
      mismatched += !(streamed == batch[i]) || context_of(batch[i]) != oracle::naive_context(log, i, kDefaultWindow);
    }
  }
  v.expect(mismatched == 0, "(a) " + std::to_string(checked) + " events, " + std::to_string(mismatched) + " mismatches");

  // (b) best split
  {
    std::mt19937_64 rng(31);
    std::normal_distribution<double> g(0, 1);
    std::uniform_real_distribution<double> h(0.05, 1.0), u(-5, 5);
    int bad = 0, trials = 0;
    for (; trials < 300; ++trials) {
      const int n = 2 + static_cast<int>(rng() % 199);
      Eigen::MatrixXd x(n, 4);
      for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = std::round(u(rng) * 4) / 4;
      std::vector<double> grad(static_cast<std::size_t>(n)), hess(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) {
        grad[static_cast<std::size_t>(i)] = g(rng);
        hess[static_cast<std::size_t>(i)] = h(rng);
      }
      std::vector<int> rows(static_cast<std::size_t>(n));
      std::iota(rows.begin(), rows.end(), 0);
      const double lambda = trials % 2 ? 1.0 : 0.1;
      const double mcw = trials % 3 ? 0.0 : 1.0;
      const auto got = find_best_split(x, grad, hess, rows, lambda, mcw);
      const auto want = oracle::exhaustive_split(x, grad, hess, rows, lambda, mcw);
      bad += std::abs(got.gain - want.gain) > 1e-9 * std::max(1.0, std::abs(want.gain));
    }
    v.expect(bad == 0, "(b) " + std::to_string(trials) + " split instances, " + std::to_string(bad) + " differ");
  }

  // (c) SMOTE-NC
  {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> g(0, 1);
    std::size_t synthetics = 0, unexplained = 0;
    for (int round = 0; round < 5; ++round) {
      std::vector<MixedSample> src;
      for (int i = 0; i < 60; ++i) {
        MixedSample s;
        s.numeric.resize(4);
        for (int d = 0; d < 4; ++d) s.numeric[d] = std::round(g(rng) * 4) / 2;
        for (int c = 0; c < 3; ++c) s.categorical.push_back(static_cast<int>(rng() % 4));
        s.label = ClassLabel::BrokenAuthentication;
        src.push_back(std::move(s));
      }
      const int k = 5;
      const double m = oracle::median_std(src);
      std::vector<std::vector<int>> knn;
      for (std::size_t i = 0; i < src.size(); ++i) knn.push_back(oracle::brute_knn(src, i, k, m));
      const auto out = smote_nc(src, SmoteConfig{k, 500, static_cast<std::uint64_t>(round)});
      for (std::size_t i = src.size(); i < out.size(); ++i, ++synthetics)
        unexplained += !oracle::smote_explained(out[i], src, knn);
    }
    v.expect(unexplained == 0,
             "(c) " + std::to_string(synthetics) + " synthetics, " + std::to_string(unexplained) + " unexplained");
  }

  // (d) gradients
  {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> g(0, 2);
    double worst = 0;
    auto rel = [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
      return (a - b).norm() / std::max(1.0, a.norm());
    };
    for (int trial = 0; trial < 20; ++trial) {
      Eigen::MatrixXd margins(9, 4);
      for (Eigen::Index i = 0; i < margins.size(); ++i) margins.data()[i] = g(rng);
      std::vector<int> y;
      for (int i = 0; i < 9; ++i) y.push_back(static_cast<int>(rng() % 4));
      const Eigen::MatrixXd grad = softmax_log_loss_gradient(margins, y);
      const Eigen::VectorXd flat = Eigen::Map<const Eigen::VectorXd>(margins.data(), margins.size());
      const auto fd = oracle::finite_difference(
          [&](const Eigen::VectorXd& w) { return softmax_log_loss(Eigen::Map<const Eigen::MatrixXd>(w.data(), 9, 4), y); },
          flat);
      worst = std::max(worst, rel(Eigen::Map<const Eigen::VectorXd>(grad.data(), grad.size()), fd));

      Eigen::VectorXd z(8);
      for (Eigen::Index i = 0; i < 8; ++i) z[i] = g(rng);
      std::vector<int> yb;
      for (int i = 0; i < 8; ++i) yb.push_back(static_cast<int>(rng() % 2));
      const auto fdb = oracle::finite_difference([&](const Eigen::VectorXd& w) { return binary_log_loss(w, yb); }, z);
      worst = std::max(worst, rel(binary_log_loss_gradient(z, yb), fdb));

      Eigen::MatrixXd x(30, 3);
      for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
      std::vector<int> yl;
      for (int i = 0; i < 30; ++i) yl.push_back(static_cast<int>(rng() % 3));
      Eigen::VectorXd w(3 * 3 + 3);
      for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = 0.3 * g(rng);
      const auto obj = logistic_objective(w, x, yl, 3, 0.1);
      const auto fdl = oracle::finite_difference(
          [&](const Eigen::VectorXd& p) { return logistic_objective(p, x, yl, 3, 0.1).loss; }, w);
      worst = std::max(worst, rel(obj.gradient, fdl));
    }
    std::ostringstream w;
    w << std::scientific << std::setprecision(2) << worst;
    v.expect(worst <= 1e-4, "(d) worst relative gradient error " + w.str() + " <= 1e-4");
  }
}

// ---------------------------------------------------------------- 7

void no_future_leakage(Verdict& v) {
  std::mt19937_64 rng(99);
  int checked = 0, changed = 0;
  for (int round = 0; round < 10; ++round) {
    const auto log = oracle::random_log(rng, 2000, 6, 0.2);
    const auto full = build_dataset(log);
    std::uniform_int_distribution<std::size_t> pick(0, log.size() - 1);
    for (int k = 0; k < 100; ++k, ++checked) {
      const std::size_t i = pick(rng);
      std::vector<SecurityEvent> kept;
      for (const auto& e : log)
        if (!(log[i].timestamp < e.timestamp)) kept.push_back(e);
      changed += !(build_dataset(kept)[i].context() == full[i].context());
    }
  }
  v.expect(checked == 1000 && changed == 0,
           std::to_string(checked) + " events checked, " + std::to_string(changed) + " contexts changed");
}

// ---------------------------------------------------------------- 8

void bootstrap_sanity(Verdict& v) {
  std::mt19937_64 rng(8);
  int outside = 0, instances = 0;
  for (; instances < 100; ++instances) {
    const std::size_t n = 50 + rng() % 400;
    const int k = 2 + static_cast<int>(rng() % 6);
    std::vector<ClassLabel> truth, pred;
    for (std::size_t i = 0; i < n; ++i) {
      truth.push_back(kAllLabels[rng() % static_cast<std::uint64_t>(k)]);
      pred.push_back(rng() % 3 ? truth.back() : kAllLabels[rng() % kNumClasses]);
    }
    const auto ci = bootstrap_ci(truth, pred, 1000, 0.95, rng());
    outside += !(ci.low <= ci.point && ci.point <= ci.high);
  }
  v.expect(outside == 0, std::to_string(instances) + " intervals, " + std::to_string(outside) + " exclude the point");

  std::vector<ClassLabel> perfect;
  for (int i = 0; i < 300; ++i) perfect.push_back(kAllLabels[rng() % kNumClasses]);
  const auto p = bootstrap_ci(perfect, perfect, 1000, 0.95, 1);
  v.expect(p.low == 1.0 && p.high == 1.0 && p.point == 1.0, "perfect predictions give [1,1]");

  const auto& c = comparison();
  const auto truth = labels_of(testbed().data.test);
  const auto pred = predict_cascade(c.model, testbed().data.test);
  const auto a = bootstrap_ci(truth, pred, 1000, 0.95, 0);
  v.expect(std::memcmp(&a, &c.cascade_ci, sizeof a) == 0,
           "seed 0 reproduces the cascade interval [" + fmt(a.low, 4) + ", " + fmt(a.high, 4) + "] bit for bit");
}

// ---------------------------------------------------------------- 9

void rule_engine_gap(Verdict& v) {
  for (const auto& r : comparison().detection) {
    if (r.label != ClassLabel::BruteForce && r.label != ClassLabel::BrokenAuthentication) continue;
    const std::string name(to_string(r.label));
    v.expect(r.rule_pct <= 5.0, name + " rule engine " + fmt(r.rule_pct, 1) + "% <= 5%");
    v.expect(r.model_pct >= 80.0, name + " cascade " + fmt(r.model_pct, 1) + "% >= 80%");
  }
}

struct Criterion {
  int id;
  const char* name;
  std::function<void(Verdict&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  app.add_option("--criterion", only, "Run only these criteria (1-9)")->check(CLI::Range(1, 9));
  CLI11_PARSE(app, argc, argv);
  set_log_level(LogLevel::Error);

  const std::vector<Criterion> criteria = {
      {1, "context gap", context_gap},
      {2, "cascade trade-off", cascade_tradeoff},
      {3, "ablation shape", ablation_shape},
      {4, "drift loop", drift_loop},
      {5, "balancing exactness", balancing_exactness},
      {6, "oracle equivalences", oracle_equivalences},
      {7, "no future leakage", no_future_leakage},
      {8, "bootstrap sanity", bootstrap_sanity},
      {9, "rule-engine gap", rule_engine_gap},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    Verdict v;
    const auto start = std::chrono::steady_clock::now();
    try {
      c.run(v);
    } catch (const std::exception& e) {
      v.expect(false, std::string("error: ") + e.what());
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failed += !v.pass;
    std::cout << "criterion " << c.id << ' ' << (v.pass ? "PASS" : "FAIL") << "  " << c.name << ": "
              << v.detail.str() << " [" << fmt(s, 1) << " s]" << std::endl;
  }
  return failed ? 1 : 0;
}
