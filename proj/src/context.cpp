#include "ctxsiem/context.hpp"

#include <algorithm>
#include <unordered_map>

#include "ctxsiem/errors.hpp"

namespace ctxsiem {

namespace {

int status_bucket(const std::optional<int>& code) {
  if (!code) return -1;
  const int family = *code / 100;
  return (family >= 2 && family <= 5) ? family - 2 : -1;
}

struct ContextAccumulator {
  ContextFeatures f;

  void add(const SecurityEvent& e) {
    f.hist_firedtimes = std::max(f.hist_firedtimes, e.rule_firedtimes);
    if (const int b = status_bucket(e.status_code); b >= 0) ++f.status[static_cast<std::size_t>(b)];
    // Membership counting: a technique listed twice on one event still counts once.
    for (std::size_t t = 0; t < kTrackedTechniques.size(); ++t) {
      if (std::find(e.mitre_ids.begin(), e.mitre_ids.end(), kTrackedTechniques[t]) !=
          e.mitre_ids.end())
        ++f.techniques[t];
    }
  }
};

}  // namespace

std::array<double, kNumContextFeatures> ContextFeatures::as_array() const {
  std::array<double, kNumContextFeatures> out{};
  out[0] = hist_firedtimes;
  for (std::size_t i = 0; i < 4; ++i) out[1 + i] = status[i];
  for (std::size_t i = 0; i < 7; ++i) out[5 + i] = techniques[i];
  return out;
}

HistoryWindow::HistoryWindow(std::string src_ip, std::size_t capacity)
    : src_ip_(std::move(src_ip)), capacity_(capacity) {
  if (capacity_ == 0) throw ConfigError("history window capacity must be >= 1");
}

void HistoryWindow::push(SecurityEvent e) {
  if (e.src_ip != src_ip_)
    throw InputError("event from " + e.src_ip + " pushed into window of " + src_ip_);
  if (!events_.empty() && e.timestamp < events_.back().timestamp)
    throw OrderError("history window for " + src_ip_ + " received an older event");
  events_.push_back(std::move(e));
  while (events_.size() > capacity_) events_.pop_front();
}

ContextFeatures compute_context(const HistoryWindow& history) {
  ContextAccumulator acc;
  for (const auto& e : history.events()) acc.add(e);
  return acc.f;
}

ContextFeatures compute_context(std::span<const SecurityEvent* const> history) {
  ContextAccumulator acc;
  for (const auto* e : history) acc.add(*e);
  return acc.f;
}

ContextFeatures EnrichedVector::context() const {
  ContextFeatures f;
  auto at = [&](std::size_t i) { return static_cast<int>(std::get<double>(slots[kNumBaseFeatures + i])); };
  f.hist_firedtimes = at(0);
  for (std::size_t i = 0; i < 4; ++i) f.status[i] = at(1 + i);
  for (std::size_t i = 0; i < 7; ++i) f.techniques[i] = at(5 + i);
  return f;
}

std::array<FeatureValue, kNumBaseFeatures> base_features(const SecurityEvent& e) {
  // Missing status codes become 0, below every real HTTP status.
  return {FeatureValue{e.protocol},
          FeatureValue{e.status_code ? static_cast<double>(*e.status_code) : 0.0},
          FeatureValue{static_cast<double>(e.rule_firedtimes)},
          FeatureValue{static_cast<double>(e.rule_mail)},
          FeatureValue{static_cast<double>(e.rule_level)},
          FeatureValue{e.rule_description},
          FeatureValue{join_list(e.rule_groups)},
          FeatureValue{join_list(e.pci_dss)},
          FeatureValue{join_list(e.tsc)},
          FeatureValue{join_list(e.nist_800_53)},
          FeatureValue{join_list(e.gdpr)},
          FeatureValue{join_list(e.mitre_ids)},
          FeatureValue{static_cast<double>(e.rule_frequency)},
          FeatureValue{join_list(e.hipaa)},
          FeatureValue{e.agent_description},
          FeatureValue{e.rule_id}};
}

EnrichedVector make_vector(const SecurityEvent& e, const ContextFeatures& ctx,
                           std::size_t window_length) {
  EnrichedVector v;
  const auto base = base_features(e);
  std::copy(base.begin(), base.end(), v.slots.begin());
  const auto c = ctx.as_array();
  for (std::size_t i = 0; i < kNumContextFeatures; ++i) v.slots[kNumBaseFeatures + i] = c[i];
  v.window_length = window_length;
  return v;
}

EnrichedVector enrich(const SecurityEvent& e, const HistoryWindow& history) {
  if (!history.empty() && history.src_ip() != e.src_ip)
    throw InputError("history of " + history.src_ip() + " used for event from " + e.src_ip);
  for (const auto& h : history.events())
    if (!(h.timestamp < e.timestamp))
      throw OrderError("history event at " + format_timestamp(h.timestamp) +
                       " is not earlier than " + format_timestamp(e.timestamp));
  return make_vector(e, compute_context(history), history.size());
}

std::vector<EnrichedVector> build_dataset(std::span<const SecurityEvent> events,
                                          std::size_t window) {
  if (window == 0) throw ConfigError("history window must be >= 1");
  for (std::size_t i = 1; i < events.size(); ++i)
    if (events[i].timestamp < events[i - 1].timestamp)
      throw OrderError("event log is not sorted by timestamp at index " + std::to_string(i));

  std::unordered_map<std::string, std::vector<const SecurityEvent*>> per_ip;
  std::vector<EnrichedVector> out;
  out.reserve(events.size());
  for (const auto& e : events) {
    auto& seen = per_ip[e.src_ip];
    // Skip back over same-instant events: they are not strictly earlier.
    std::size_t end = seen.size();
    while (end > 0 && seen[end - 1]->timestamp == e.timestamp) --end;
    const std::size_t begin = end > window ? end - window : 0;
    std::span<const SecurityEvent* const> hist(seen.data() + begin, end - begin);
    out.push_back(make_vector(e, compute_context(hist), hist.size()));
    seen.push_back(&e);
  }
  return out;
}

ContextStore::IpState& ContextStore::state_for(const std::string& ip) {
  auto it = ips_.find(ip);
  if (it == ips_.end()) it = ips_.emplace(ip, IpState{HistoryWindow(ip, window_), {}}).first;
  return it->second;
}

void ContextStore::settle(IpState& st, Timestamp now) {
  if (!st.same_instant.empty() && st.same_instant.front().timestamp < now) {
    for (auto& e : st.same_instant) st.history.push(std::move(e));
    st.same_instant.clear();
  }
}

EnrichedVector ContextStore::enrich(const SecurityEvent& e) {
  auto& st = state_for(e.src_ip);
  if (auto last = latest(e.src_ip); last && e.timestamp < *last)
    throw OrderError("event for " + e.src_ip + " at " + format_timestamp(e.timestamp) +
                     " precedes already-seen " + format_timestamp(*last));
  settle(st, e.timestamp);
  return ctxsiem::enrich(e, st.history);
}

void ContextStore::commit(const SecurityEvent& e) {
  auto& st = state_for(e.src_ip);
  if (auto last = latest(e.src_ip); last && e.timestamp < *last)
    throw OrderError("commit out of order for " + e.src_ip);
  settle(st, e.timestamp);
  st.same_instant.push_back(e);
  if (st.same_instant.size() > window_) st.same_instant.erase(st.same_instant.begin());
}

EnrichedVector ContextStore::enrich_and_commit(const SecurityEvent& e) {
  auto v = enrich(e);
  commit(e);
  return v;
}

std::optional<Timestamp> ContextStore::latest(const std::string& src_ip) const {
  auto it = ips_.find(src_ip);
  if (it == ips_.end()) return std::nullopt;
  if (!it->second.same_instant.empty()) return it->second.same_instant.back().timestamp;
  if (!it->second.history.empty()) return it->second.history.events().back().timestamp;
  return std::nullopt;
}

std::vector<SecurityEvent> ContextStore::snapshot() const {
  std::vector<SecurityEvent> out;
  for (const auto& [ip, st] : ips_) {
    out.insert(out.end(), st.history.events().begin(), st.history.events().end());
    out.insert(out.end(), st.same_instant.begin(), st.same_instant.end());
  }
  return out;
}

}  // namespace ctxsiem
