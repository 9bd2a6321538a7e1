#include "ctxsiem/baselines.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "ctxsiem/errors.hpp"

namespace ctxsiem {

namespace {

Eigen::MatrixXd one_hot(const std::vector<int>& y, int k) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(y.size()), k);
  for (std::size_t i = 0; i < y.size(); ++i) out(static_cast<Eigen::Index>(i), y[i]) = 1.0;
  return out;
}

Eigen::MatrixXd row_softmax(Eigen::MatrixXd z) {
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    z.row(i).array() -= z.row(i).maxCoeff();
    z.row(i) = z.row(i).array().exp().matrix();
    z.row(i) /= z.row(i).sum();
  }
  return z;
}

}  // namespace

LinearObjective logistic_objective(const Eigen::VectorXd& params, const Eigen::MatrixXd& x,
                                   const std::vector<int>& y, int num_classes, double l2) {
  const Eigen::Index d = x.cols();
  const Eigen::Index k = num_classes;
  const Eigen::Map<const Eigen::MatrixXd> w(params.data(), k, d);
  const Eigen::Map<const Eigen::VectorXd> b(params.data() + k * d, k);

  Eigen::MatrixXd z = x * w.transpose();
  z.rowwise() += b.transpose();

  LinearObjective out;
  std::vector<int> labels(y.begin(), y.end());
  out.loss = softmax_log_loss(z, labels) + 0.5 * l2 * w.squaredNorm();

  const double inv_n = x.rows() ? 1.0 / static_cast<double>(x.rows()) : 0.0;
  const Eigen::MatrixXd resid = (row_softmax(z) - one_hot(y, num_classes)) * inv_n;
  out.gradient.resize(params.size());
  Eigen::Map<Eigen::MatrixXd> gw(out.gradient.data(), k, d);
  gw = resid.transpose() * x + l2 * w;
  out.gradient.tail(k) = resid.colwise().sum().transpose();
  return out;
}

Eigen::VectorXd LogisticModel::predict_proba(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  check_arity(x.size());
  const Eigen::VectorXd z = ((x - mean_).array() / scale_.array()).matrix();
  return softmax(weights_ * z + bias_);
}

LogisticModel train_logistic(const Dataset& data, const LogisticConfig& cfg) {
  validate_training_data(data);
  if (cfg.epochs < 0 || !(cfg.learning_rate > 0) || cfg.l2 < 0)
    throw ConfigError("LogisticConfig out of range");

  const Eigen::Index n = data.x.rows();
  const Eigen::Index d = data.x.cols();
  const int k = data.num_classes;

  LogisticModel m;
  m.mean_ = Eigen::VectorXd::Zero(d);
  m.scale_ = Eigen::VectorXd::Ones(d);
  if (cfg.standardise && n > 0) {
    m.mean_ = data.x.colwise().mean().transpose();
    const Eigen::MatrixXd centred = data.x.rowwise() - m.mean_.transpose();
    for (Eigen::Index j = 0; j < d; ++j) {
      const double sd = std::sqrt(centred.col(j).squaredNorm() / static_cast<double>(n));
      m.scale_[j] = sd > 1e-12 ? sd : 1.0;
    }
  }
  const Eigen::MatrixXd xs =
      (data.x.rowwise() - m.mean_.transpose()).array().rowwise() / m.scale_.transpose().array();

  Eigen::VectorXd params = Eigen::VectorXd::Zero(k * d + k);
  std::mt19937_64 rng(cfg.seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch = cfg.batch_size == 0 ? static_cast<std::size_t>(n) : cfg.batch_size;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (batch >= static_cast<std::size_t>(n)) {
      params -= cfg.learning_rate * logistic_objective(params, xs, data.y, k, cfg.l2).gradient;
      continue;
    }
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      Eigen::MatrixXd xb(static_cast<Eigen::Index>(end - start), d);
      std::vector<int> yb;
      for (std::size_t i = start; i < end; ++i) {
        xb.row(static_cast<Eigen::Index>(i - start)) = xs.row(order[i]);
        yb.push_back(data.y[static_cast<std::size_t>(order[i])]);
      }
      params -= cfg.learning_rate * logistic_objective(params, xb, yb, k, cfg.l2).gradient;
    }
  }
  m.weights_ = Eigen::Map<const Eigen::MatrixXd>(params.data(), k, d);
  m.bias_ = params.tail(k);
  return m;
}

Eigen::VectorXd DecisionTreeModel::predict_proba(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  check_arity(x.size());
  int i = 0;
  while (!nodes_[static_cast<std::size_t>(i)].is_leaf()) {
    const auto& n = nodes_[static_cast<std::size_t>(i)];
    i = x[n.feature] < n.threshold ? n.left : n.right;
  }
  return nodes_[static_cast<std::size_t>(i)].distribution;
}

DecisionTreeModel train_single_tree(const Dataset& data, const DecisionTreeConfig& cfg) {
  validate_training_data(data);
  if (cfg.max_depth < 0 || cfg.min_samples_leaf < 1 || cfg.min_samples_split < 2)
    throw ConfigError("DecisionTreeConfig out of range");

  DecisionTreeModel model;
  model.num_classes_ = data.num_classes;
  model.num_features_ = static_cast<int>(data.x.cols());
  const int k = data.num_classes;

  auto counts_of = [&](const std::vector<int>& rows) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(k);
    for (int r : rows) c[data.y[static_cast<std::size_t>(r)]] += 1.0;
    return c;
  };
  auto gini_sum = [](const Eigen::VectorXd& c, double n) {
    // n * gini(c) = n - sum(c^2) / n
    return n > 0 ? n - c.squaredNorm() / n : 0.0;
  };

  struct Work {
    int node;
    std::vector<int> rows;
    int depth;
  };
  std::vector<int> all(static_cast<std::size_t>(data.x.rows()));
  std::iota(all.begin(), all.end(), 0);
  model.nodes_.push_back({});
  std::vector<Work> stack{{0, std::move(all), 0}};

  while (!stack.empty()) {
    Work w = std::move(stack.back());
    stack.pop_back();
    const Eigen::VectorXd counts = counts_of(w.rows);
    const double n = static_cast<double>(w.rows.size());
    model.nodes_[static_cast<std::size_t>(w.node)].distribution = counts / std::max(n, 1.0);

    const double parent = gini_sum(counts, n);
    if (w.depth >= cfg.max_depth || static_cast<int>(w.rows.size()) < cfg.min_samples_split ||
        parent <= 1e-12)
      continue;

    int best_f = -1;
    double best_thr = 0.0;
    double best_gain = 1e-12;
    for (Eigen::Index f = 0; f < data.x.cols(); ++f) {
      std::vector<int> order = w.rows;
      std::stable_sort(order.begin(), order.end(),
                       [&](int a, int b) { return data.x(a, f) < data.x(b, f); });
      Eigen::VectorXd left = Eigen::VectorXd::Zero(k);
      for (std::size_t i = 0; i + 1 < order.size(); ++i) {
        left[data.y[static_cast<std::size_t>(order[i])]] += 1.0;
        const double lo = data.x(order[i], f);
        const double hi = data.x(order[i + 1], f);
        if (!(hi > lo)) continue;
        const double nl = static_cast<double>(i + 1);
        const double nr = n - nl;
        if (nl < cfg.min_samples_leaf || nr < cfg.min_samples_leaf) continue;
        const double gain = parent - gini_sum(left, nl) - gini_sum(counts - left, nr);
        if (gain > best_gain) {
          best_gain = gain;
          best_f = static_cast<int>(f);
          const double mid = lo + (hi - lo) / 2.0;
          best_thr = mid > lo ? mid : hi;
        }
      }
    }
    if (best_f < 0) continue;

    std::vector<int> lrows, rrows;
    for (int r : w.rows) (data.x(r, best_f) < best_thr ? lrows : rrows).push_back(r);
    const int l = static_cast<int>(model.nodes_.size());
    model.nodes_.push_back({});
    model.nodes_.push_back({});
    auto& node = model.nodes_[static_cast<std::size_t>(w.node)];
    node.feature = best_f;
    node.threshold = best_thr;
    node.left = l;
    node.right = l + 1;
    stack.push_back({l + 1, std::move(rrows), w.depth + 1});
    stack.push_back({l, std::move(lrows), w.depth + 1});
  }
  return model;
}

}  // namespace ctxsiem
