#include "ctxsiem/gbdt.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

#include "ctxsiem/errors.hpp"

namespace ctxsiem {

namespace {

constexpr double kMinSplitGain = 1e-10;
constexpr double kMinHessian = 1e-16;
constexpr int kFormatVersion = 1;

double midpoint(double lo, double hi) {
  const double mid = lo + (hi - lo) / 2.0;
  return mid > lo ? mid : hi;
}

struct NodeStats {
  double g = 0.0;
  double h = 0.0;
  std::size_t count = 0;
};

// Level-wise tree growth shared by the exact and histogram strategies. Rows
// carry the id of the frontier node they currently sit in, or -1.
class TreeBuilder {
 public:
  TreeBuilder(const Eigen::MatrixXd& x, const GbdtConfig& cfg) : x_(x), cfg_(cfg) {
    const auto n = static_cast<std::size_t>(x.rows());
    const auto d = static_cast<std::size_t>(x.cols());
    if (cfg.split_method == SplitMethod::Exact) {
      sorted_.resize(d);
      for (std::size_t f = 0; f < d; ++f) {
        auto& order = sorted_[f];
        order.resize(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
          return x(a, static_cast<Eigen::Index>(f)) < x(b, static_cast<Eigen::Index>(f));
        });
      }
    } else {
      build_bins();
    }
  }

  RegressionTree build(const std::vector<double>& g, const std::vector<double>& h,
                       const std::vector<int>& bag, const std::vector<int>& features) {
    const auto n = static_cast<std::size_t>(x_.rows());
    node_of_row_.assign(n, -1);
    nodes_.clear();
    stats_.clear();

    NodeStats root;
    for (int r : bag) {
      node_of_row_[static_cast<std::size_t>(r)] = 0;
      root.g += g[static_cast<std::size_t>(r)];
      root.h += h[static_cast<std::size_t>(r)];
      ++root.count;
    }
    nodes_.push_back(TreeNode{});
    stats_.push_back(root);

    std::vector<int> frontier{0};
    for (int depth = 0; depth < cfg_.max_depth && !frontier.empty(); ++depth) {
      std::vector<SplitCandidate> best(nodes_.size());
      if (cfg_.split_method == SplitMethod::Exact)
        scan_exact(g, h, frontier, features, best);
      else
        scan_histogram(g, h, bag, frontier, features, best);

      std::vector<int> next;
      std::vector<char> split(nodes_.size(), 0);
      for (int id : frontier) {
        const auto& b = best[static_cast<std::size_t>(id)];
        if (b.feature < 0 || !(b.gain > kMinSplitGain)) continue;
        const int left = static_cast<int>(nodes_.size());
        nodes_.push_back(TreeNode{});
        nodes_.push_back(TreeNode{});
        stats_.resize(nodes_.size());
        auto& node = nodes_[static_cast<std::size_t>(id)];
        node.feature = b.feature;
        node.threshold = b.threshold;
        node.gain = b.gain;
        node.left = left;
        node.right = left + 1;
        split[static_cast<std::size_t>(id)] = 1;
        next.push_back(left);
        next.push_back(left + 1);
      }
      if (next.empty()) break;
      for (int r : bag) {
        const int id = node_of_row_[static_cast<std::size_t>(r)];
        if (id < 0 || !split[static_cast<std::size_t>(id)]) continue;
        const auto& node = nodes_[static_cast<std::size_t>(id)];
        const int child = x_(r, node.feature) < node.threshold ? node.left : node.right;
        node_of_row_[static_cast<std::size_t>(r)] = child;
        auto& s = stats_[static_cast<std::size_t>(child)];
        s.g += g[static_cast<std::size_t>(r)];
        s.h += h[static_cast<std::size_t>(r)];
        ++s.count;
      }
      frontier = std::move(next);
    }

    RegressionTree tree;
    tree.nodes = std::move(nodes_);
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
      auto& node = tree.nodes[i];
      node.cover = stats_[i].h;
      if (node.is_leaf())
        node.value = -stats_[i].g / (stats_[i].h + cfg_.reg_lambda) * cfg_.learning_rate;
    }
    nodes_.clear();
    return tree;
  }

 private:
  void consider(SplitCandidate& best, int node, int feature, double threshold, double gl, double hl,
                std::size_t left_count) const {
    const auto& s = stats_[static_cast<std::size_t>(node)];
    const double hr = s.h - hl;
    if (left_count == 0 || left_count == s.count) return;
    if (hl < cfg_.min_child_weight || hr < cfg_.min_child_weight) return;
    const double gain = split_gain(gl, hl, s.g, s.h, cfg_.reg_lambda);
    if (gain > best.gain) best = SplitCandidate{feature, threshold, gain};
  }

  void scan_exact(const std::vector<double>& g, const std::vector<double>& h,
                  const std::vector<int>& frontier, const std::vector<int>& features,
                  std::vector<SplitCandidate>& best) {
    const std::size_t m = nodes_.size();
    std::vector<char> active(m, 0);
    for (int id : frontier) active[static_cast<std::size_t>(id)] = 1;
    std::vector<double> gl(m), hl(m), last(m);
    std::vector<std::size_t> cnt(m);
    for (int f : features) {
      for (int id : frontier) {
        gl[static_cast<std::size_t>(id)] = 0;
        hl[static_cast<std::size_t>(id)] = 0;
        cnt[static_cast<std::size_t>(id)] = 0;
      }
      for (int r : sorted_[static_cast<std::size_t>(f)]) {
        const int id = node_of_row_[static_cast<std::size_t>(r)];
        if (id < 0 || !active[static_cast<std::size_t>(id)]) continue;
        const auto k = static_cast<std::size_t>(id);
        const double v = x_(r, f);
        if (cnt[k] > 0 && v > last[k])
          consider(best[k], id, f, midpoint(last[k], v), gl[k], hl[k], cnt[k]);
        gl[k] += g[static_cast<std::size_t>(r)];
        hl[k] += h[static_cast<std::size_t>(r)];
        ++cnt[k];
        last[k] = v;
      }
    }
  }

  void build_bins() {
    const auto n = static_cast<std::size_t>(x_.rows());
    const auto d = static_cast<std::size_t>(x_.cols());
    cuts_.resize(d);
    bins_.assign(d, std::vector<std::uint16_t>(n));
    const auto max_bins = static_cast<std::size_t>(std::max(2, cfg_.histogram_bins));
    for (std::size_t f = 0; f < d; ++f) {
      std::vector<double> v(n);
      for (std::size_t r = 0; r < n; ++r) v[r] = x_(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(f));
      std::sort(v.begin(), v.end());
      std::vector<double> distinct = v;
      distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
      auto& cuts = cuts_[f];
      if (distinct.size() <= max_bins) {
        for (std::size_t i = 1; i < distinct.size(); ++i) cuts.push_back(midpoint(distinct[i - 1], distinct[i]));
      } else {
        // Quantile cut points over the row distribution.
        for (std::size_t b = 1; b < max_bins; ++b) {
          const std::size_t idx = b * n / max_bins;
          auto hi = std::upper_bound(distinct.begin(), distinct.end(), v[idx - 1]);
          if (hi == distinct.end()) break;
          const double c = midpoint(*(hi - 1), *hi);
          if (cuts.empty() || c > cuts.back()) cuts.push_back(c);
        }
      }
      for (std::size_t r = 0; r < n; ++r) {
        const double val = x_(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(f));
        bins_[f][r] = static_cast<std::uint16_t>(std::upper_bound(cuts.begin(), cuts.end(), val) - cuts.begin());
      }
    }
  }

  void scan_histogram(const std::vector<double>& g, const std::vector<double>& h,
                      const std::vector<int>& bag, const std::vector<int>& frontier,
                      const std::vector<int>& features, std::vector<SplitCandidate>& best) {
    const std::size_t m = nodes_.size();
    std::vector<int> slot(m, -1);
    for (std::size_t i = 0; i < frontier.size(); ++i) slot[static_cast<std::size_t>(frontier[i])] = static_cast<int>(i);
    for (int f : features) {
      const auto& cuts = cuts_[static_cast<std::size_t>(f)];
      const std::size_t nb = cuts.size() + 1;
      std::vector<NodeStats> hist(frontier.size() * nb);
      for (int r : bag) {
        const int id = node_of_row_[static_cast<std::size_t>(r)];
        if (id < 0 || slot[static_cast<std::size_t>(id)] < 0) continue;
        auto& cell = hist[static_cast<std::size_t>(slot[static_cast<std::size_t>(id)]) * nb +
                          bins_[static_cast<std::size_t>(f)][static_cast<std::size_t>(r)]];
        cell.g += g[static_cast<std::size_t>(r)];
        cell.h += h[static_cast<std::size_t>(r)];
        ++cell.count;
      }
      for (std::size_t i = 0; i < frontier.size(); ++i) {
        const int id = frontier[i];
        double gl = 0, hl = 0;
        std::size_t cl = 0;
        for (std::size_t b = 0; b + 1 < nb; ++b) {
          const auto& cell = hist[i * nb + b];
          gl += cell.g;
          hl += cell.h;
          cl += cell.count;
          if (cell.count == 0) continue;
          consider(best[static_cast<std::size_t>(id)], id, f, cuts[b], gl, hl, cl);
        }
      }
    }
  }

  const Eigen::MatrixXd& x_;
  const GbdtConfig& cfg_;
  std::vector<std::vector<int>> sorted_;
  std::vector<std::vector<double>> cuts_;
  std::vector<std::vector<std::uint16_t>> bins_;
  std::vector<int> node_of_row_;
  std::vector<TreeNode> nodes_;
  std::vector<NodeStats> stats_;
};

nlohmann::json tree_to_json(const RegressionTree& t, int i) {
  const auto& n = t.nodes[static_cast<std::size_t>(i)];
  if (n.is_leaf()) return {{"leaf", n.value}, {"cover", n.cover}};
  return {{"feature", n.feature},      {"threshold", n.threshold}, {"gain", n.gain},
          {"cover", n.cover},          {"left", tree_to_json(t, n.left)},
          {"right", tree_to_json(t, n.right)}};
}

int tree_from_json(const nlohmann::json& j, RegressionTree& t, int num_features) {
  const int id = static_cast<int>(t.nodes.size());
  t.nodes.push_back(TreeNode{});
  if (j.contains("leaf")) {
    t.nodes.back().value = j.at("leaf").get<double>();
    t.nodes.back().cover = j.value("cover", 0.0);
    if (!std::isfinite(t.nodes.back().value)) throw SchemaError("non-finite leaf value");
    return id;
  }
  TreeNode n;
  n.feature = j.at("feature").get<int>();
  if (n.feature < 0 || n.feature >= num_features) throw SchemaError("split feature out of range");
  n.threshold = j.at("threshold").get<double>();
  n.gain = j.at("gain").get<double>();
  n.cover = j.value("cover", 0.0);
  n.left = tree_from_json(j.at("left"), t, num_features);
  n.right = tree_from_json(j.at("right"), t, num_features);
  t.nodes[static_cast<std::size_t>(id)] = n;
  return id;
}

std::vector<double> accumulate_gains(const std::vector<std::vector<RegressionTree>>& rounds, int d) {
  std::vector<double> gains(static_cast<std::size_t>(d), 0.0);
  for (const auto& round : rounds)
    for (const auto& tree : round)
      for (const auto& n : tree.nodes)
        if (!n.is_leaf()) gains[static_cast<std::size_t>(n.feature)] += n.gain;
  return gains;
}

}  // namespace

void GbdtConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("GbdtConfig: " + what); };
  if (n_estimators < 0) fail("n_estimators must be >= 0");
  if (!(learning_rate > 0)) fail("learning_rate must be > 0");
  if (max_depth < 1) fail("max_depth must be >= 1");
  if (!(subsample > 0 && subsample <= 1)) fail("subsample must lie in (0, 1]");
  if (!(colsample_bytree > 0 && colsample_bytree <= 1)) fail("colsample_bytree must lie in (0, 1]");
  if (reg_lambda < 0) fail("reg_lambda must be >= 0");
  if (min_child_weight < 0) fail("min_child_weight must be >= 0");
  if (early_stopping_patience < 0) fail("early_stopping_patience must be >= 0");
  if (histogram_bins < 2 || histogram_bins > 65535) fail("histogram_bins must lie in [2, 65535]");
}

nlohmann::json GbdtConfig::to_json() const {
  return {{"n_estimators", n_estimators},
          {"learning_rate", learning_rate},
          {"max_depth", max_depth},
          {"subsample", subsample},
          {"colsample_bytree", colsample_bytree},
          {"reg_lambda", reg_lambda},
          {"min_child_weight", min_child_weight},
          {"early_stopping_patience", early_stopping_patience},
          {"objective", objective == Objective::BinaryLogistic ? "binary-logistic" : "multiclass-softmax"},
          {"split_method", split_method == SplitMethod::Exact ? "exact" : "histogram"},
          {"histogram_bins", histogram_bins},
          {"seed", seed}};
}

GbdtConfig GbdtConfig::from_json(const nlohmann::json& j) {
  GbdtConfig c;
  c.n_estimators = j.value("n_estimators", c.n_estimators);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.max_depth = j.value("max_depth", c.max_depth);
  c.subsample = j.value("subsample", c.subsample);
  c.colsample_bytree = j.value("colsample_bytree", c.colsample_bytree);
  c.reg_lambda = j.value("reg_lambda", c.reg_lambda);
  c.min_child_weight = j.value("min_child_weight", c.min_child_weight);
  c.early_stopping_patience = j.value("early_stopping_patience", c.early_stopping_patience);
  const auto obj = j.value("objective", std::string("multiclass-softmax"));
  if (obj == "binary-logistic") c.objective = Objective::BinaryLogistic;
  else if (obj == "multiclass-softmax") c.objective = Objective::MulticlassSoftmax;
  else throw ConfigError("unknown objective '" + obj + "'");
  const auto split = j.value("split_method", std::string("exact"));
  if (split == "exact") c.split_method = SplitMethod::Exact;
  else if (split == "histogram") c.split_method = SplitMethod::Histogram;
  else throw ConfigError("unknown split_method '" + split + "'");
  c.histogram_bins = j.value("histogram_bins", c.histogram_bins);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

GbdtConfig stage1_defaults() {
  GbdtConfig c;
  c.n_estimators = 500;
  c.learning_rate = 0.1;
  c.max_depth = 10;
  c.subsample = 0.70;
  c.colsample_bytree = 0.85;
  c.reg_lambda = 1.0;
  c.objective = Objective::BinaryLogistic;
  return c;
}

GbdtConfig stage2_defaults() {
  GbdtConfig c;
  c.n_estimators = 500;
  c.learning_rate = 0.06;
  c.max_depth = 8;
  c.subsample = 0.85;
  c.colsample_bytree = 0.70;
  c.reg_lambda = 1.0;
  c.objective = Objective::MulticlassSoftmax;
  return c;
}

int RegressionTree::depth() const {
  std::vector<int> level(nodes.size(), 0);
  int deepest = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    deepest = std::max(deepest, level[i]);
    if (!nodes[i].is_leaf()) {
      level[static_cast<std::size_t>(nodes[i].left)] = level[i] + 1;
      level[static_cast<std::size_t>(nodes[i].right)] = level[i] + 1;
    }
  }
  return deepest;
}

Eigen::VectorXd GbdtModel::margin(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  check_arity(x.size());
  Eigen::VectorXd m = base_score_;
  for (const auto& round : rounds_)
    for (std::size_t k = 0; k < round.size(); ++k) m[static_cast<Eigen::Index>(k)] += round[k].predict(x);
  return m;
}

Eigen::VectorXd GbdtModel::predict_proba(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const Eigen::VectorXd m = margin(x);
  if (config_.objective == Objective::BinaryLogistic) {
    const double p = sigmoid(m[0]);
    return Eigen::Vector2d(1.0 - p, p);
  }
  return softmax(m);
}

double GbdtModel::total_gain() const {
  return std::accumulate(gain_by_feature_.begin(), gain_by_feature_.end(), 0.0);
}

GbdtModel train_gbdt(const Dataset& train, const GbdtConfig& cfg, const Dataset* valid,
                     TrainingTrace* trace) {
  cfg.validate();
  validate_training_data(train);
  const bool binary = cfg.objective == Objective::BinaryLogistic;
  if (binary && train.num_classes != 2)
    throw ConfigError("binary-logistic objective needs exactly two classes");
  if (valid != nullptr) {
    if (valid->x.cols() != train.x.cols()) throw InputError("validation arity differs from training");
    if (!valid->x.allFinite()) throw InputError("validation features contain NaN or infinite values");
  }

  const auto n = static_cast<std::size_t>(train.x.rows());
  const int d = static_cast<int>(train.x.cols());
  const int outputs = binary ? 1 : train.num_classes;

  GbdtModel model;
  model.config_ = cfg;
  model.num_classes_ = train.num_classes;
  model.num_features_ = d;
  model.base_score_ = Eigen::VectorXd::Zero(outputs);

  Eigen::MatrixXd margins = Eigen::MatrixXd::Zero(train.x.rows(), outputs);
  Eigen::MatrixXd valid_margins;
  if (valid) valid_margins = Eigen::MatrixXd::Zero(valid->x.rows(), outputs);

  auto loss_of = [&](const Eigen::MatrixXd& m, const std::vector<int>& y) {
    return binary ? binary_log_loss(m.col(0), y) : softmax_log_loss(m, y);
  };

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  TreeBuilder builder(train.x, cfg);

  std::vector<int> all_features(static_cast<std::size_t>(d));
  std::iota(all_features.begin(), all_features.end(), 0);
  const auto n_cols = static_cast<std::size_t>(
      std::max(1L, std::lround(cfg.colsample_bytree * static_cast<double>(d))));

  std::vector<std::vector<double>> grad(static_cast<std::size_t>(outputs), std::vector<double>(n));
  std::vector<std::vector<double>> hess = grad;

  double best_loss = std::numeric_limits<double>::infinity();
  int best_round = -1;
  for (int round = 0; round < cfg.n_estimators; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      const int yi = train.y[i];
      if (binary) {
        const double p = sigmoid(margins(row, 0));
        grad[0][i] = p - (yi == 1 ? 1.0 : 0.0);
        hess[0][i] = std::max(p * (1.0 - p), kMinHessian);
      } else {
        const Eigen::VectorXd p = softmax(margins.row(row).transpose());
        for (int k = 0; k < outputs; ++k) {
          grad[static_cast<std::size_t>(k)][i] = p[k] - (yi == k ? 1.0 : 0.0);
          hess[static_cast<std::size_t>(k)][i] = std::max(p[k] * (1.0 - p[k]), kMinHessian);
        }
      }
    }

    std::vector<RegressionTree> trees;
    for (int k = 0; k < outputs; ++k) {
      std::vector<int> bag;
      bag.reserve(n);
      if (cfg.subsample < 1.0) {
        for (std::size_t i = 0; i < n; ++i)
          if (unit(rng) < cfg.subsample) bag.push_back(static_cast<int>(i));
        if (bag.empty()) bag.push_back(static_cast<int>(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)));
      } else {
        for (std::size_t i = 0; i < n; ++i) bag.push_back(static_cast<int>(i));
      }
      std::vector<int> features = all_features;
      if (n_cols < features.size()) {
        std::shuffle(features.begin(), features.end(), rng);
        features.resize(n_cols);
        std::sort(features.begin(), features.end());
      }
      trees.push_back(builder.build(grad[static_cast<std::size_t>(k)], hess[static_cast<std::size_t>(k)], bag, features));
    }

    for (int k = 0; k < outputs; ++k) {
      const auto& t = trees[static_cast<std::size_t>(k)];
      for (Eigen::Index i = 0; i < train.x.rows(); ++i) margins(i, k) += t.predict(train.x.row(i));
      if (valid)
        for (Eigen::Index i = 0; i < valid->x.rows(); ++i) valid_margins(i, k) += t.predict(valid->x.row(i));
    }
    model.rounds_.push_back(std::move(trees));

    if (trace) trace->train_loss.push_back(loss_of(margins, train.y));
    if (valid && valid->x.rows() > 0) {
      const double vl = loss_of(valid_margins, valid->y);
      if (trace) trace->valid_loss.push_back(vl);
      if (vl < best_loss) {
        best_loss = vl;
        best_round = round;
      } else if (cfg.early_stopping_patience > 0 && round - best_round >= cfg.early_stopping_patience) {
        break;
      }
    } else {
      best_round = round;
    }
  }

  model.rounds_.resize(static_cast<std::size_t>(best_round + 1));
  model.best_iteration_ = best_round;
  model.gain_by_feature_ = accumulate_gains(model.rounds_, d);
  return model;
}

std::vector<std::pair<int, double>> feature_importance(const GbdtModel& model) {
  std::vector<std::pair<int, double>> out;
  const auto& gains = model.gain_by_feature();
  for (std::size_t f = 0; f < gains.size(); ++f) out.emplace_back(static_cast<int>(f), gains[f]);
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  return out;
}

SplitCandidate find_best_split(const Eigen::MatrixXd& x, const std::vector<double>& grad,
                               const std::vector<double>& hess, const std::vector<int>& rows,
                               double reg_lambda, double min_child_weight) {
  double g = 0, h = 0;
  for (int r : rows) {
    g += grad[static_cast<std::size_t>(r)];
    h += hess[static_cast<std::size_t>(r)];
  }
  SplitCandidate best;
  for (Eigen::Index f = 0; f < x.cols(); ++f) {
    std::vector<int> order = rows;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return x(a, f) < x(b, f); });
    double gl = 0, hl = 0;
    for (std::size_t i = 0; i < order.size(); ++i) {
      const int r = order[i];
      if (i > 0 && x(r, f) > x(order[i - 1], f) && hl >= min_child_weight && h - hl >= min_child_weight) {
        const double gain = split_gain(gl, hl, g, h, reg_lambda);
        if (gain > best.gain) best = {static_cast<int>(f), midpoint(x(order[i - 1], f), x(r, f)), gain};
      }
      gl += grad[static_cast<std::size_t>(r)];
      hl += hess[static_cast<std::size_t>(r)];
    }
  }
  return best;
}

nlohmann::json GbdtModel::to_json() const {
  nlohmann::json rounds = nlohmann::json::array();
  for (const auto& round : rounds_) {
    nlohmann::json per_class = nlohmann::json::array();
    for (const auto& t : round) per_class.push_back(t.nodes.empty() ? nlohmann::json{} : tree_to_json(t, 0));
    rounds.push_back(std::move(per_class));
  }
  return {{"format", "ctxsiem.gbdt"},
          {"version", kFormatVersion},
          {"config", config_.to_json()},
          {"num_classes", num_classes_},
          {"num_features", num_features_},
          {"base_score", std::vector<double>(base_score_.data(), base_score_.data() + base_score_.size())},
          {"best_iteration", best_iteration_},
          {"trees", std::move(rounds)}};
}

GbdtModel GbdtModel::from_json(const nlohmann::json& j) {
  if (j.value("format", std::string()) != "ctxsiem.gbdt")
    throw SchemaError("not a gbdt model document");
  if (j.value("version", -1) != kFormatVersion)
    throw SchemaError("unsupported gbdt model version " + std::to_string(j.value("version", -1)));
  GbdtModel m;
  m.config_ = GbdtConfig::from_json(j.at("config"));
  m.num_classes_ = j.at("num_classes").get<int>();
  m.num_features_ = j.at("num_features").get<int>();
  const auto base = j.at("base_score").get<std::vector<double>>();
  m.base_score_ = Eigen::Map<const Eigen::VectorXd>(base.data(), static_cast<Eigen::Index>(base.size()));
  m.best_iteration_ = j.at("best_iteration").get<int>();
  for (const auto& round : j.at("trees")) {
    std::vector<RegressionTree> trees;
    for (const auto& t : round) {
      RegressionTree tree;
      tree_from_json(t, tree, m.num_features_);
      trees.push_back(std::move(tree));
    }
    m.rounds_.push_back(std::move(trees));
  }
  m.gain_by_feature_ = accumulate_gains(m.rounds_, m.num_features_);
  return m;
}

nlohmann::json TreeEnsembleModel::to_json() const {
  return {{"encoder", encoder.to_json()}, {"class_names", class_names}, {"booster", booster.to_json()}};
}

TreeEnsembleModel TreeEnsembleModel::from_json(const nlohmann::json& j) {
  TreeEnsembleModel m;
  m.encoder = FeatureEncoder::from_json(j.at("encoder"));
  m.class_names = j.at("class_names").get<std::vector<std::string>>();
  m.booster = GbdtModel::from_json(j.at("booster"));
  if (static_cast<int>(m.class_names.size()) != m.booster.num_classes())
    throw SchemaError("class_names length does not match booster class count");
  return m;
}

}  // namespace ctxsiem
