#include "ctxsiem/resampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ctxsiem/errors.hpp"
#include "ctxsiem/log.hpp"

namespace ctxsiem {

double median_numeric_std(std::span<const MixedSample> samples) {
  if (samples.empty()) return 0.0;
  const Eigen::Index d = samples.front().numeric.size();
  if (d == 0) return 0.0;
  const double n = static_cast<double>(samples.size());
  std::vector<double> stds;
  for (Eigen::Index j = 0; j < d; ++j) {
    double mean = 0;
    for (const auto& s : samples) mean += s.numeric[j];
    mean /= n;
    double var = 0;
    for (const auto& s : samples) var += (s.numeric[j] - mean) * (s.numeric[j] - mean);
    stds.push_back(std::sqrt(var / n));
  }
  std::sort(stds.begin(), stds.end());
  const std::size_t mid = stds.size() / 2;
  return stds.size() % 2 ? stds[mid] : 0.5 * (stds[mid - 1] + stds[mid]);
}

double mixed_distance(const MixedSample& a, const MixedSample& b, double m) {
  double d = (a.numeric - b.numeric).squaredNorm();
  for (std::size_t c = 0; c < a.categorical.size(); ++c)
    if (a.categorical[c] != b.categorical[c]) d += m * m;
  return d;
}

std::vector<std::vector<int>> nearest_neighbours(std::span<const MixedSample> samples, int k, double m) {
  const std::size_t n = samples.size();
  std::vector<std::vector<int>> out(n);
  std::vector<std::pair<double, int>> dist;
  for (std::size_t i = 0; i < n; ++i) {
    dist.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) dist.emplace_back(mixed_distance(samples[i], samples[j], m), static_cast<int>(j));
    const auto kk = std::min<std::size_t>(static_cast<std::size_t>(k), dist.size());
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk), dist.end());
    for (std::size_t t = 0; t < kk; ++t) out[i].push_back(dist[t].second);
  }
  return out;
}

std::vector<MixedSample> smote_nc(std::span<const MixedSample> samples, const SmoteConfig& cfg,
                                  std::mt19937_64& rng, std::optional<double> m) {
  if (cfg.k_neighbors < 1) throw ConfigError("k_neighbors must be >= 1");
  std::vector<MixedSample> out(samples.begin(), samples.end());
  if (cfg.target_count <= samples.size()) {
    if (cfg.target_count < samples.size())
      log_warn("smote_nc: target " + std::to_string(cfg.target_count) + " below class size " +
               std::to_string(samples.size()) + "; returning input unchanged");
    return out;
  }
  if (samples.size() <= static_cast<std::size_t>(cfg.k_neighbors))
    throw InputError("smote_nc: class has " + std::to_string(samples.size()) +
                     " samples, need more than k=" + std::to_string(cfg.k_neighbors));
  for (const auto& s : samples)
    if (s.label != samples.front().label) throw InputError("smote_nc: samples span several labels");

  const double penalty = m.value_or(median_numeric_std(samples));
  const auto knn = nearest_neighbours(samples, cfg.k_neighbors, penalty);
  const std::size_t n_cat = samples.front().categorical.size();

  // Neighbour-mode categoricals depend only on the source, so compute once.
  std::vector<std::vector<int>> mode(samples.size(), std::vector<int>(n_cat));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (std::size_t c = 0; c < n_cat; ++c) {
      std::map<int, int> freq;
      for (int nb : knn[i]) ++freq[samples[static_cast<std::size_t>(nb)].categorical[c]];
      int best = 0, best_count = -1;
      for (const auto& [code, count] : freq)  // ascending code: ties keep the lowest
        if (count > best_count) {
          best = code;
          best_count = count;
        }
      mode[i][c] = best;
    }
  }

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::uniform_int_distribution<int> pick(0, cfg.k_neighbors - 1);
  std::uniform_real_distribution<double> gap(0.0, 1.0);

  const std::size_t needed = cfg.target_count - samples.size();
  for (std::size_t j = 0; j < needed; ++j) {
    const std::size_t src = order[j % order.size()];
    const auto& s = samples[src];
    const auto& nb = samples[static_cast<std::size_t>(knn[src][static_cast<std::size_t>(pick(rng))])];
    MixedSample syn;
    syn.numeric = s.numeric + gap(rng) * (nb.numeric - s.numeric);
    syn.categorical = mode[src];
    syn.label = s.label;
    syn.synthetic = true;
    out.push_back(std::move(syn));
  }
  return out;
}

std::vector<MixedSample> smote_nc(std::span<const MixedSample> samples, const SmoteConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  return smote_nc(samples, cfg, rng);
}

std::vector<std::size_t> undersample_indices(std::size_t n, std::size_t target, std::mt19937_64& rng) {
  if (target > n)
    throw InputError("undersample: target " + std::to_string(target) + " exceeds " + std::to_string(n));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < target; ++i) {
    std::uniform_int_distribution<std::size_t> d(i, n - 1);
    std::swap(idx[i], idx[d(rng)]);
  }
  idx.resize(target);
  std::sort(idx.begin(), idx.end());
  return idx;
}

SplitIndices stratified_split(std::span<const ClassLabel> labels, const SplitFractions& f,
                              std::uint64_t seed) {
  if (f.train < 0 || f.validation < 0 || f.test < 0 ||
      std::abs(f.train + f.validation + f.test - 1.0) > 1e-9)
    throw ConfigError("split fractions must be non-negative and sum to 1");
  std::map<ClassLabel, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

  std::mt19937_64 rng(seed);
  SplitIndices out;
  for (auto& [label, idx] : by_class) {
    if (idx.size() < 5)
      log_warn("stratified_split: class " + std::string(to_string(label)) + " has only " +
               std::to_string(idx.size()) + " members");
    std::shuffle(idx.begin(), idx.end(), rng);
    const double n = static_cast<double>(idx.size());
    const auto n_test = static_cast<std::size_t>(std::lround(f.test * n));
    const auto n_val = std::min(idx.size() - n_test, static_cast<std::size_t>(std::lround(f.validation * n)));
    out.test.insert(out.test.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
    out.validation.insert(out.validation.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test),
                          idx.begin() + static_cast<std::ptrdiff_t>(n_test + n_val));
    out.train.insert(out.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test + n_val), idx.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.validation.begin(), out.validation.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

SplitIndices stratified_split(std::span<const SecurityEvent> events, const SplitFractions& f,
                              std::uint64_t seed) {
  std::vector<ClassLabel> labels;
  labels.reserve(events.size());
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (!events[i].label) throw InputError("stratified_split: event " + std::to_string(i) + " is unlabelled");
    labels.push_back(*events[i].label);
  }
  return stratified_split(labels, f, seed);
}

std::size_t BalanceConfig::target_for(ClassLabel l) const {
  if (auto it = targets.find(l); it != targets.end()) return it->second;
  if (!targets.empty()) return 0;
  return l == ClassLabel::Normal ? 5000 : 1250;
}

namespace {

std::vector<std::size_t> slots_of(SlotKind kind) {
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s < kNumFeatures; ++s)
    if (kFeatureSchema[s].kind == kind) out.push_back(s);
  return out;
}

}  // namespace

std::vector<LabelledVector> balance_training(std::span<const LabelledVector> train,
                                             const BalanceConfig& cfg) {
  const auto num_slots = slots_of(SlotKind::Numeric);
  const auto cat_slots = slots_of(SlotKind::Categorical);

  std::vector<std::map<std::string, int>> vocab(cat_slots.size());
  for (const auto& row : train)
    for (std::size_t c = 0; c < cat_slots.size(); ++c)
      vocab[c].emplace(std::get<std::string>(row.x.slots[cat_slots[c]]), 0);
  std::vector<std::vector<std::string>> words(cat_slots.size());
  for (std::size_t c = 0; c < cat_slots.size(); ++c) {
    int code = 0;
    for (auto& [w, v] : vocab[c]) {
      v = code++;
      words[c].push_back(w);
    }
  }

  auto to_mixed = [&](const LabelledVector& r) {
    MixedSample s;
    s.numeric.resize(static_cast<Eigen::Index>(num_slots.size()));
    for (std::size_t i = 0; i < num_slots.size(); ++i)
      s.numeric[static_cast<Eigen::Index>(i)] = std::get<double>(r.x.slots[num_slots[i]]);
    for (std::size_t c = 0; c < cat_slots.size(); ++c)
      s.categorical.push_back(vocab[c].at(std::get<std::string>(r.x.slots[cat_slots[c]])));
    s.label = r.y;
    s.synthetic = r.synthetic;
    return s;
  };
  auto from_mixed = [&](const MixedSample& s) {
    LabelledVector r;
    for (std::size_t i = 0; i < num_slots.size(); ++i)
      r.x.slots[num_slots[i]] = s.numeric[static_cast<Eigen::Index>(i)];
    for (std::size_t c = 0; c < cat_slots.size(); ++c)
      r.x.slots[cat_slots[c]] = words[c][static_cast<std::size_t>(s.categorical[c])];
    r.y = s.label;
    r.synthetic = true;
    return r;
  };

  std::map<ClassLabel, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < train.size(); ++i) by_class[train[i].y].push_back(i);

  std::optional<double> dispersion;
  if (cfg.population == DispersionPopulation::FullTraining) {
    std::vector<MixedSample> all;
    all.reserve(train.size());
    for (const auto& r : train) all.push_back(to_mixed(r));
    dispersion = median_numeric_std(all);
  }

  std::mt19937_64 rng(cfg.seed);
  std::vector<LabelledVector> out;
  for (ClassLabel label : kAllLabels) {
    const std::size_t target = cfg.target_for(label);
    auto it = by_class.find(label);
    if (it == by_class.end() || it->second.empty()) {
      if (cfg.require_all_classes && target > 0)
        throw InputError("balance_training: class " + std::string(to_string(label)) +
                         " is missing from the training split");
      continue;
    }
    if (target == 0) continue;
    const auto& idx = it->second;
    if (idx.size() >= target) {
      for (std::size_t i : undersample_indices(idx.size(), target, rng)) out.push_back(train[idx[i]]);
      continue;
    }
    std::vector<MixedSample> minority;
    minority.reserve(idx.size());
    for (std::size_t i : idx) minority.push_back(to_mixed(train[i]));
    SmoteConfig sc{cfg.k_neighbors, target, cfg.seed};
    const auto grown = smote_nc(minority, sc, rng, dispersion);
    for (std::size_t i : idx) out.push_back(train[i]);
    for (std::size_t i = idx.size(); i < grown.size(); ++i) out.push_back(from_mixed(grown[i]));
  }
  return out;
}

}  // namespace ctxsiem
