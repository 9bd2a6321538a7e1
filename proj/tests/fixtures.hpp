#pragma once

// Small labelled corpora whose classes are learnable from a few fields, so
// model-dependent tests train in milliseconds.

#include <map>
#include <random>
#include <string>
#include <vector>

#include "ctxsiem/cascade.hpp"
#include "ctxsiem/context.hpp"
#include "ctxsiem/event.hpp"
#include "oracles.hpp"

namespace fixture {

using namespace ctxsiem;

// `ambiguous` events share one rule id across classes and carry no
// class-specific status, which gives the models something to be unsure about.
inline SecurityEvent class_event(std::mt19937_64& rng, Timestamp t, ClassLabel label, bool ambiguous) {
  const int k = label_index(label);
  SecurityEvent e;
  e.timestamp = t;
  e.src_ip = "10.20.0." + std::to_string(k * 4 + static_cast<int>(rng() % 4));
  e.protocol = k % 2 ? "POST" : "GET";
  e.rule_id = ambiguous ? "31100" : std::to_string(31100 + k);
  e.rule_description = ambiguous ? "Web server access" : "profile " + std::to_string(k);
  e.status_code = ambiguous ? 200 : 200 + 100 * (k % 4);
  e.rule_level = ambiguous ? 3 : 3 + k;
  e.rule_groups = {"web"};
  if (is_attack(label) && !ambiguous) e.mitre_ids = {std::string(oracle::kTechniques[static_cast<std::size_t>(k) % 7])};
  e.label = label;
  return e;
}

// Chronological log: classes interleaved at random, one event per second.
inline std::vector<SecurityEvent> class_log(const std::map<ClassLabel, std::size_t>& counts, std::uint64_t seed,
                                            double ambiguity = 0.1, std::int64_t start_ms = 1'700'000'000'000) {
  std::mt19937_64 rng(seed);
  std::vector<ClassLabel> order;
  for (const auto& [l, n] : counts) order.insert(order.end(), n, l);
  std::shuffle(order.begin(), order.end(), rng);
  std::bernoulli_distribution amb(ambiguity);
  std::vector<SecurityEvent> log;
  for (std::size_t i = 0; i < order.size(); ++i)
    log.push_back(class_event(rng, oracle::at_ms(start_ms + static_cast<std::int64_t>(i) * 1000), order[i], amb(rng)));
  return log;
}

inline std::vector<LabelledVector> to_rows(const std::vector<SecurityEvent>& log, std::size_t window = kDefaultWindow) {
  const auto v = build_dataset(log, window);
  std::vector<LabelledVector> rows;
  for (std::size_t i = 0; i < log.size(); ++i) rows.push_back({v[i], *log[i].label, false});
  return rows;
}

inline std::map<ClassLabel, std::size_t> every_class(std::size_t normal, std::size_t attack) {
  std::map<ClassLabel, std::size_t> m{{ClassLabel::Normal, normal}};
  for (auto l : kAttackLabels) m[l] = attack;
  return m;
}

inline CascadeConfig fast_cascade() {
  CascadeConfig c;
  for (auto* g : {&c.stage1, &c.stage2}) {
    g->n_estimators = 15;
    g->max_depth = 3;
    g->subsample = 1.0;
    g->colsample_bytree = 1.0;
  }
  return c;
}

}  // namespace fixture
