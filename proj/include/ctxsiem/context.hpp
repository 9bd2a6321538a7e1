#pragma once

#include <array>
#include <cstddef>
#include <deque>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "ctxsiem/event.hpp"

namespace ctxsiem {

inline constexpr std::size_t kNumBaseFeatures = 16;
inline constexpr std::size_t kNumContextFeatures = 12;
inline constexpr std::size_t kNumFeatures = kNumBaseFeatures + kNumContextFeatures;
inline constexpr std::size_t kDefaultWindow = 30;

/// MITRE ATT&CK techniques profiled over the history window, in feature order.
inline constexpr std::array<std::string_view, 7> kTrackedTechniques = {
    "T1190", "T1083", "T1055", "T1212", "T1068", "T1064", "T1210"};

enum class SlotKind { Categorical, Numeric };

struct SlotInfo {
  std::string_view name;
  SlotKind kind;
};

// Slots 0..15 are the current event's own fields, 16..27 the history profile.
inline constexpr std::array<SlotInfo, kNumFeatures> kFeatureSchema = {{
    {"data.protocol", SlotKind::Categorical},
    {"data.id", SlotKind::Numeric},
    {"rule.firedtimes", SlotKind::Numeric},
    {"rule.mail", SlotKind::Numeric},
    {"rule.level", SlotKind::Numeric},
    {"rule.description", SlotKind::Categorical},
    {"rule.groups", SlotKind::Categorical},
    {"rule.pci_dss", SlotKind::Categorical},
    {"rule.tsc", SlotKind::Categorical},
    {"rule.nist_800_53", SlotKind::Categorical},
    {"rule.gdpr", SlotKind::Categorical},
    {"rule.mitre.id", SlotKind::Categorical},
    {"rule.frequency", SlotKind::Numeric},
    {"rule.hipaa", SlotKind::Categorical},
    {"agent.description", SlotKind::Categorical},
    {"rule.id", SlotKind::Categorical},
    {"hist.firedtimes", SlotKind::Numeric},
    {"hist.status.2xx", SlotKind::Numeric},
    {"hist.status.3xx", SlotKind::Numeric},
    {"hist.status.4xx", SlotKind::Numeric},
    {"hist.status.5xx", SlotKind::Numeric},
    {"T1190", SlotKind::Numeric},
    {"T1083", SlotKind::Numeric},
    {"T1055", SlotKind::Numeric},
    {"T1212", SlotKind::Numeric},
    {"T1068", SlotKind::Numeric},
    {"T1064", SlotKind::Numeric},
    {"T1210", SlotKind::Numeric},
}};

struct ContextFeatures {
  int hist_firedtimes = 0;
  std::array<int, 4> status{};  // 2xx, 3xx, 4xx, 5xx
  std::array<int, 7> techniques{};

  std::array<double, kNumContextFeatures> as_array() const;
  bool operator==(const ContextFeatures&) const = default;
};

/// Bounded per-IP history, oldest first. Timestamps are non-decreasing.
class HistoryWindow {
 public:
  explicit HistoryWindow(std::string src_ip, std::size_t capacity = kDefaultWindow);

  void push(SecurityEvent e);

  const std::string& src_ip() const { return src_ip_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return events_.size(); }
  bool empty() const { return events_.empty(); }
  const std::deque<SecurityEvent>& events() const { return events_; }

 private:
  std::string src_ip_;
  std::size_t capacity_;
  std::deque<SecurityEvent> events_;
};

ContextFeatures compute_context(const HistoryWindow& history);
ContextFeatures compute_context(std::span<const SecurityEvent* const> history);

using FeatureValue = std::variant<double, std::string>;

struct EnrichedVector {
  std::array<FeatureValue, kNumFeatures> slots;
  std::size_t window_length = 0;  // diagnostic only, never a model input

  ContextFeatures context() const;
  bool operator==(const EnrichedVector&) const = default;
};

std::array<FeatureValue, kNumBaseFeatures> base_features(const SecurityEvent& e);
EnrichedVector make_vector(const SecurityEvent& e, const ContextFeatures& ctx,
                           std::size_t window_length);

/// Throws OrderError if any history event is not strictly earlier than `e`,
/// InputError if the history belongs to another IP.
EnrichedVector enrich(const SecurityEvent& e, const HistoryWindow& history);

/// Batch construction over a chronologically sorted log. Each event sees the
/// `window` most recent strictly-earlier events from its own source IP.
std::vector<EnrichedVector> build_dataset(std::span<const SecurityEvent> events,
                                          std::size_t window = kDefaultWindow);

/// Incremental per-IP state for streaming enrichment. Callers must feed all
/// events of a given IP from one logical stream in non-decreasing time order.
class ContextStore {
 public:
  explicit ContextStore(std::size_t window = kDefaultWindow) : window_(window) {}

  /// Enriches `e` against its IP's prior events. Throws OrderError if `e` is
  /// older than the latest event already committed for that IP.
  EnrichedVector enrich(const SecurityEvent& e);
  /// Makes `e` visible to later events of the same IP.
  void commit(const SecurityEvent& e);
  EnrichedVector enrich_and_commit(const SecurityEvent& e);

  /// Latest committed timestamp for an IP, if any.
  std::optional<Timestamp> latest(const std::string& src_ip) const;
  std::size_t window() const { return window_; }
  std::size_t ip_count() const { return ips_.size(); }

  /// Every retained event (window plus same-instant tail) in commit order per IP.
  std::vector<SecurityEvent> snapshot() const;

 private:
  struct IpState {
    HistoryWindow history;
    std::vector<SecurityEvent> same_instant;  // share the latest timestamp
  };
  IpState& state_for(const std::string& ip);
  static void settle(IpState& st, Timestamp now);

  std::size_t window_;
  std::unordered_map<std::string, IpState> ips_;
};

}  // namespace ctxsiem
