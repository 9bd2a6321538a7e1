#include "ctxsiem/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <random>
#include <set>
#include <sstream>

#include "ctxsiem/errors.hpp"

namespace ctxsiem {

namespace {

double safe_div(double num, double den) { return den > 0 ? num / den : 0.0; }

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b)
    throw InputError("label sequences differ in length (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// Same mixing step as splitmix64; gives each resample an independent stream.
std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double percentile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

long ConfusionMatrix::total() const {
  long t = 0;
  for (const auto& row : counts)
    for (long c : row) t += c;
  return t;
}

long ConfusionMatrix::at(ClassLabel truth, ClassLabel pred) const {
  const auto ti = std::find(labels.begin(), labels.end(), truth);
  const auto pi = std::find(labels.begin(), labels.end(), pred);
  if (ti == labels.end() || pi == labels.end()) return 0;
  return counts[static_cast<std::size_t>(ti - labels.begin())][static_cast<std::size_t>(pi - labels.begin())];
}

std::string ConfusionMatrix::to_csv() const {
  std::ostringstream os;
  os << "true\\pred";
  for (ClassLabel l : labels) os << ',' << to_string(l);
  os << '\n';
  for (std::size_t i = 0; i < labels.size(); ++i) {
    os << to_string(labels[i]);
    for (long c : counts[i]) os << ',' << c;
    os << '\n';
  }
  return os.str();
}

ConfusionMatrix confusion_matrix(std::span<const ClassLabel> truth, std::span<const ClassLabel> pred) {
  check_lengths(truth.size(), pred.size());
  std::set<ClassLabel> present(truth.begin(), truth.end());
  present.insert(pred.begin(), pred.end());
  ConfusionMatrix cm;
  cm.labels.assign(present.begin(), present.end());
  cm.counts.assign(cm.labels.size(), std::vector<long>(cm.labels.size(), 0));
  std::array<int, kNumClasses> pos{};
  for (std::size_t i = 0; i < cm.labels.size(); ++i) pos[static_cast<std::size_t>(label_index(cm.labels[i]))] = static_cast<int>(i);
  for (std::size_t i = 0; i < truth.size(); ++i)
    ++cm.counts[static_cast<std::size_t>(pos[static_cast<std::size_t>(label_index(truth[i]))])]
               [static_cast<std::size_t>(pos[static_cast<std::size_t>(label_index(pred[i]))])];
  return cm;
}

EvalReport evaluate(std::span<const ClassLabel> truth, std::span<const ClassLabel> pred) {
  EvalReport r;
  r.confusion = confusion_matrix(truth, pred);
  const auto& cm = r.confusion;
  const std::size_t k = cm.labels.size();
  r.total = static_cast<long>(truth.size());

  long correct = 0;
  for (std::size_t i = 0; i < k; ++i) {
    long tp = cm.counts[i][i], row = 0, col = 0;
    for (std::size_t j = 0; j < k; ++j) {
      row += cm.counts[i][j];
      col += cm.counts[j][i];
    }
    correct += tp;
    ClassScores s;
    s.support = row;
    s.precision = safe_div(static_cast<double>(tp), static_cast<double>(col));
    s.recall = safe_div(static_cast<double>(tp), static_cast<double>(row));
    s.f1 = safe_div(2 * s.precision * s.recall, s.precision + s.recall);
    r.per_class[cm.labels[i]] = s;
    r.macro_precision += s.precision;
    r.macro_recall += s.recall;
    r.macro_f1 += s.f1;
  }
  if (k > 0) {
    r.macro_precision /= static_cast<double>(k);
    r.macro_recall /= static_cast<double>(k);
    r.macro_f1 /= static_cast<double>(k);
  }
  r.accuracy = safe_div(static_cast<double>(correct), static_cast<double>(r.total));

  long attacks = 0, flagged = 0, flagged_true = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool t = is_attack(truth[i]);
    const bool p = is_attack(pred[i]);
    attacks += t;
    flagged += p;
    flagged_true += t && p;
    if (t && !p) ++r.missed_attacks;
    if (!t && p) ++r.false_alarms;
  }
  r.attack_recall = safe_div(static_cast<double>(flagged_true), static_cast<double>(attacks));
  r.attack_precision = safe_div(static_cast<double>(flagged_true), static_cast<double>(flagged));
  return r;
}

double macro_f1(std::span<const ClassLabel> truth, std::span<const ClassLabel> pred) {
  check_lengths(truth.size(), pred.size());
  std::array<long, kNumClasses> tp{}, tcount{}, pcount{};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto t = static_cast<std::size_t>(label_index(truth[i]));
    const auto p = static_cast<std::size_t>(label_index(pred[i]));
    ++tcount[t];
    ++pcount[p];
    if (t == p) ++tp[t];
  }
  double sum = 0;
  int n = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (tcount[c] == 0 && pcount[c] == 0) continue;
    const double p = safe_div(static_cast<double>(tp[c]), static_cast<double>(pcount[c]));
    const double r = safe_div(static_cast<double>(tp[c]), static_cast<double>(tcount[c]));
    sum += safe_div(2 * p * r, p + r);
    ++n;
  }
  return n ? sum / n : 0.0;
}

ConfidenceInterval bootstrap_ci(std::span<const ClassLabel> truth, std::span<const ClassLabel> pred,
                                int resamples, double level, std::uint64_t seed) {
  check_lengths(truth.size(), pred.size());
  if (truth.size() < 2) throw InputError("bootstrap needs at least two events");
  if (resamples < 1) throw ConfigError("bootstrap needs at least one resample");
  if (!(level > 0 && level < 1)) throw ConfigError("confidence level must lie in (0,1)");

  ConfidenceInterval ci;
  ci.point = macro_f1(truth, pred);
  const std::size_t n = truth.size();
  std::vector<double> scores(static_cast<std::size_t>(resamples));
  std::vector<ClassLabel> t(n), p(n);
  for (int b = 0; b < resamples; ++b) {
    std::mt19937_64 rng(mix(seed ^ mix(static_cast<std::uint64_t>(b))));
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = pick(rng);
      t[i] = truth[j];
      p[i] = pred[j];
    }
    scores[static_cast<std::size_t>(b)] = macro_f1(t, p);
  }
  std::sort(scores.begin(), scores.end());
  const double alpha = (1.0 - level) / 2.0;
  ci.low = std::min(percentile(scores, alpha), ci.point);
  ci.high = std::max(percentile(scores, 1.0 - alpha), ci.point);
  return ci;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["total"] = total;
  j["accuracy"] = accuracy;
  j["macro_precision"] = macro_precision;
  j["macro_recall"] = macro_recall;
  j["macro_f1"] = macro_f1;
  j["attack_recall"] = attack_recall;
  j["attack_precision"] = attack_precision;
  j["missed_attacks"] = missed_attacks;
  j["false_alarms"] = false_alarms;
  nlohmann::ordered_json pc = nlohmann::ordered_json::object();
  for (const auto& [l, s] : per_class)
    pc[std::string(to_string(l))] = {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}, {"support", s.support}};
  j["per_class"] = pc;
  nlohmann::ordered_json labels = nlohmann::ordered_json::array();
  for (ClassLabel l : confusion.labels) labels.push_back(std::string(to_string(l)));
  j["confusion"] = {{"labels", labels}, {"counts", confusion.counts}};
  return nlohmann::json::parse(j.dump());
}

std::string EvalReport::to_text() const {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-24s %9s %9s %9s %8s\n", "class", "precision", "recall", "f1", "support");
  os << line;
  for (const auto& [l, s] : per_class) {
    std::snprintf(line, sizeof line, "%-24s %9.4f %9.4f %9.4f %8ld\n", std::string(to_string(l)).c_str(),
                  s.precision, s.recall, s.f1, s.support);
    os << line;
  }
  std::snprintf(line, sizeof line, "%-24s %9.4f %9.4f %9.4f %8ld\n", "macro", macro_precision, macro_recall,
                macro_f1, total);
  os << line;
  os << "accuracy " << fixed(accuracy, 4) << "  attack_recall " << fixed(attack_recall, 4) << "  attack_precision "
     << fixed(attack_precision, 4) << "\nmissed_attacks " << missed_attacks << "  false_alarms " << false_alarms
     << '\n';
  return os.str();
}

KeywordTable KeywordTable::defaults() {
  KeywordTable t;
  t.keywords = {
      {ClassLabel::SqlInjection, {"sql_injection", "sqli", "sql injection"}},
      {ClassLabel::Xss, {"xss", "cross-site scripting", "cross site scripting"}},
      {ClassLabel::WebScan, {"web_scan", "web scanner", "scanner detected"}},
      {ClassLabel::BruteForce, {"brute_force", "brute force", "bruteforce"}},
      {ClassLabel::BrokenAuthentication, {"broken_authentication", "broken authentication", "session hijack"}},
      {ClassLabel::SensitiveDataExposure, {"sensitive_data", "data exposure", "data_exposure"}},
  };
  return t;
}

KeywordTable KeywordTable::from_json(const nlohmann::json& j) {
  KeywordTable t;
  t.version = j.value("version", 1);
  if (t.version != 1) throw SchemaError("unsupported keyword table version " + std::to_string(t.version));
  const auto& kw = j.at("keywords");
  if (!kw.is_object()) throw SchemaError("keyword table: 'keywords' must be an object");
  // Iterate in label order so the match order is independent of JSON key order.
  for (ClassLabel l : kAttackLabels) {
    const auto it = kw.find(std::string(to_string(l)));
    if (it == kw.end()) continue;
    std::vector<std::string> words;
    for (const auto& w : *it) words.push_back(lower(w.get<std::string>()));
    t.keywords.emplace_back(l, std::move(words));
  }
  for (const auto& [key, _] : kw.items())
    if (!try_parse_label(key) || !is_attack(parse_label(key)))
      throw SchemaError("keyword table: unknown attack class '" + key + "'");
  return t;
}

nlohmann::json KeywordTable::to_json() const {
  nlohmann::json kw = nlohmann::json::object();
  for (const auto& [l, words] : keywords) kw[std::string(to_string(l))] = words;
  return {{"version", version}, {"keywords", kw}};
}

std::optional<ClassLabel> rule_engine_categorised(const SecurityEvent& e, const KeywordTable& table) {
  std::vector<std::string> fields;
  for (const auto& g : e.rule_groups) fields.push_back(lower(g));
  fields.push_back(lower(e.rule_description));
  for (const auto& m : e.mitre_ids) fields.push_back(lower(m));
  for (const auto& [label, words] : table.keywords)
    for (const auto& w : words)
      for (const auto& f : fields)
        if (!w.empty() && f.find(w) != std::string::npos) return label;
  return std::nullopt;
}

std::vector<DetectionRow> compare_detection(std::span<const ClassLabel> truth,
                                            std::span<const ClassLabel> model_pred,
                                            std::span<const std::optional<ClassLabel>> rule_out) {
  check_lengths(truth.size(), model_pred.size());
  check_lengths(truth.size(), rule_out.size());
  std::vector<DetectionRow> rows;
  for (ClassLabel l : kAttackLabels) {
    DetectionRow row;
    row.label = l;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (truth[i] != l) continue;
      ++row.events;
      row.model_hits += model_pred[i] == l;
      row.rule_hits += rule_out[i] == l;
    }
    row.rule_pct = 100.0 * safe_div(static_cast<double>(row.rule_hits), static_cast<double>(row.events));
    row.model_pct = 100.0 * safe_div(static_cast<double>(row.model_hits), static_cast<double>(row.events));
    rows.push_back(row);
  }
  return rows;
}

nlohmann::json detection_to_json(std::span<const DetectionRow> rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows)
    out.push_back({{"class", std::string(to_string(r.label))},
                   {"events", r.events},
                   {"rule_hits", r.rule_hits},
                   {"rule_pct", r.rule_pct},
                   {"model_hits", r.model_hits},
                   {"model_pct", r.model_pct}});
  return out;
}

std::string detection_to_text(std::span<const DetectionRow> rows) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-24s %8s %8s %8s\n", "class", "events", "rule%", "model%");
  os << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-24s %8ld %8.1f %8.1f\n", std::string(to_string(r.label)).c_str(), r.events,
                  r.rule_pct, r.model_pct);
    os << line;
  }
  return os.str();
}

}  // namespace ctxsiem
