#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ctxsiem {

using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

enum class ClassLabel : std::uint8_t {
  Normal = 0,
  SqlInjection,
  Xss,
  WebScan,
  BruteForce,
  BrokenAuthentication,
  SensitiveDataExposure,
};

inline constexpr std::size_t kNumClasses = 7;

inline constexpr std::array<ClassLabel, kNumClasses> kAllLabels = {
    ClassLabel::Normal,     ClassLabel::SqlInjection,         ClassLabel::Xss,
    ClassLabel::WebScan,    ClassLabel::BruteForce,           ClassLabel::BrokenAuthentication,
    ClassLabel::SensitiveDataExposure};

inline constexpr std::array<ClassLabel, kNumClasses - 1> kAttackLabels = {
    ClassLabel::SqlInjection, ClassLabel::Xss, ClassLabel::WebScan, ClassLabel::BruteForce,
    ClassLabel::BrokenAuthentication, ClassLabel::SensitiveDataExposure};

constexpr bool is_attack(ClassLabel l) { return l != ClassLabel::Normal; }
constexpr int label_index(ClassLabel l) { return static_cast<int>(l); }

std::string_view to_string(ClassLabel l);
/// Accepts the upper-case wire names ("SQL_INJECTION", ...). Throws SchemaError otherwise.
ClassLabel parse_label(std::string_view s);
std::optional<ClassLabel> try_parse_label(std::string_view s);

/// ISO-8601 with millisecond precision, always emitted in UTC with a trailing 'Z'.
std::string format_timestamp(Timestamp t);
/// Accepts "YYYY-MM-DDTHH:MM:SS[.fff][Z|+HH:MM|+HHMM]" (space allowed instead of 'T').
Timestamp parse_timestamp(std::string_view s);

struct SecurityEvent {
  Timestamp timestamp{};
  std::string src_ip;
  std::string protocol;
  std::optional<int> status_code;
  int rule_firedtimes = 1;
  int rule_mail = 0;
  int rule_level = 3;
  std::string rule_description;
  std::vector<std::string> rule_groups;
  std::vector<std::string> pci_dss;
  std::vector<std::string> tsc;
  std::vector<std::string> nist_800_53;
  std::vector<std::string> gdpr;
  std::vector<std::string> hipaa;
  std::vector<std::string> mitre_ids;
  int rule_frequency = 0;
  std::string agent_description;
  std::string rule_id;
  std::optional<ClassLabel> label;

  bool operator==(const SecurityEvent&) const = default;
};

/// Sorts and de-duplicates every list field and clamps numeric fields into
/// their valid ranges. parse_event already returns canonical events.
void canonicalise(SecurityEvent& e);

/// Deterministic string form of a list-valued field, used wherever a list is
/// treated as a single categorical value.
std::string join_list(std::span<const std::string> items);

SecurityEvent parse_event(std::string_view line);
std::string serialise_event(const SecurityEvent& e);

/// Stable identifier derived from the canonical serialisation (label excluded).
std::string event_id(const SecurityEvent& e);

struct AttackWindow {
  std::string src_ip;
  Timestamp start{};
  Timestamp end{};
  ClassLabel label = ClassLabel::SqlInjection;

  bool operator==(const AttackWindow&) const = default;
};

AttackWindow parse_window(std::string_view line);
std::string serialise_window(const AttackWindow& w);

/// Throws ConfigError on an inverted window, a NORMAL window, or two windows
/// on the same IP that share any instant (boundaries are inclusive).
void validate_windows(std::span<const AttackWindow> windows);

/// Per-IP lookup structure for bulk labelling.
class WindowIndex {
 public:
  explicit WindowIndex(std::span<const AttackWindow> windows);
  ClassLabel label_for(const SecurityEvent& e) const;

 private:
  std::map<std::string, std::vector<AttackWindow>, std::less<>> by_ip_;
};

ClassLabel assign_label(const SecurityEvent& e, std::span<const AttackWindow> windows);

// NDJSON file helpers. Blank lines are skipped.
std::vector<SecurityEvent> read_events(const std::string& path);
void write_events(const std::string& path, std::span<const SecurityEvent> events);
std::vector<AttackWindow> read_windows(const std::string& path);
void write_windows(const std::string& path, std::span<const AttackWindow> windows);
/// Cuts a partial final line (no trailing newline) left by an interrupted
/// append. Returns the number of bytes removed; a missing file is fine.
std::size_t trim_torn_tail(const std::string& path);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

}  // namespace ctxsiem
