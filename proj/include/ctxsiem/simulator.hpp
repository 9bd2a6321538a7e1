#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctxsiem/event.hpp"

namespace ctxsiem {

/// One rule the simulated SIEM can fire.
struct RuleTemplate {
  std::string rule_id;
  std::string description;
  std::vector<std::string> groups;
  int level = 3;
  int frequency = 0;
  std::vector<std::string> pci_dss, gdpr, hipaa, nist_800_53, tsc;
  /// 0..3 restricts the rule to 2xx/3xx/4xx/5xx responses; -1 allows any.
  int status_class = -1;
  double weight = 1.0;
};

enum class FiredtimesMode { Constant, Escalating };

struct TrafficProfile {
  std::string name;
  ClassLabel label = ClassLabel::Normal;
  std::array<double, 4> status_distribution{1, 0, 0, 0};  // 2xx 3xx 4xx 5xx
  std::array<double, 7> mitre_distribution{};              // per-event, kTrackedTechniques order
  std::vector<std::string> untracked_techniques;
  double untracked_rate = 0.0;
  std::vector<RuleTemplate> rule_pool;
  std::map<std::string, double> protocol_distribution{{"GET", 1.0}};
  FiredtimesMode firedtimes_mode = FiredtimesMode::Constant;
  int firedtimes_max = 1;
  /// Share of this profile's events drawn from the benign profile instead
  /// (same fields, no techniques). This is the base-feature overlap knob.
  double generic_fraction = 0.0;
  /// Two-state modulation. In the quiet state events use the benign rule
  /// pool and protocols with quiet_status_distribution and carry no
  /// techniques: low-and-slow probing for attackers, error bursts for benign
  /// clients. quiet_share is the long-run share of quiet events and
  /// quiet_mean_run the mean quiet run length in events.
  double quiet_share = 0.0;
  double quiet_mean_run = 1.0;
  std::array<double, 4> quiet_status_distribution{1, 0, 0, 0};
  double rate_per_minute = 1.0;
  std::vector<std::string> agents{"web-server-01"};

  /// Throws ConfigError when a distribution does not sum to 1 or the rate is not positive.
  void validate() const;
  nlohmann::json to_json() const;
  static TrafficProfile from_json(const nlohmann::json& j);
};

struct Session {
  double start_minute = 0;
  double end_minute = 0;
};

struct TrafficSource {
  std::string profile;  // key into ScenarioConfig::profiles
  std::string src_ip;
  /// Fraction of total_events; with total_events == 0 the profile rate is used.
  double share = 0.0;
  std::vector<Session> sessions;  // empty = the whole scenario
  /// Attack sources only: events the IP keeps sending after each session
  /// ends, spread over cooldown_minutes. They fall outside every window and
  /// are therefore labelled NORMAL.
  std::size_t cooldown_events = 0;
  double cooldown_minutes = 0.0;
  /// Cool-down traffic keeps the attack profile instead of the benign one:
  /// the campaign outlives its annotated window. Still labelled NORMAL.
  bool cooldown_residual = false;
};

struct ScenarioConfig {
  std::map<std::string, TrafficProfile> profiles;
  std::vector<TrafficSource> sources;
  Timestamp start{};
  double duration_minutes = 7 * 24 * 60.0;
  std::size_t total_events = 0;
  std::string benign_profile = "normal";
  std::uint64_t seed = 0;

  /// Throws ConfigError on unknown profiles, shared IPs, overlapping sessions
  /// or sessions outside the scenario.
  void validate() const;
  nlohmann::json to_json() const;
  static ScenarioConfig from_json(const nlohmann::json& j);
};

struct Corpus {
  std::vector<SecurityEvent> events;  // chronological, labelled
  std::vector<AttackWindow> windows;
};

Corpus generate(const ScenarioConfig& cfg);

/// Six attack profiles and the benign profile, keyed by name.
std::map<std::string, TrafficProfile> default_profiles();

/// Default testbed: 46,454 events, raw class mix of the reference dataset.
ScenarioConfig default_scenario(std::uint64_t seed = 7);
/// Reference raw class shares, NORMAL included.
std::map<ClassLabel, double> default_class_mix();

struct DriftConfig {
  std::array<std::size_t, 3> phase_events{10000, 10000, 10000};
  double phase2_sde_share = 0.932;
  std::uint64_t seed = 11;
};

struct DriftCorpus {
  std::array<Corpus, 3> phases;
  /// All phases in one chronology, used for context construction.
  Corpus combined() const;
};

/// Phase 1 holds NORMAL, SQL injection, XSS and web scanning; phase 2 adds
/// brute force, broken authentication and sensitive data exposure (which
/// dominates it); phase 3 mixes all seven classes. Phases are consecutive in
/// time and reuse the per-class IPs.
DriftCorpus drift_corpus(const DriftConfig& cfg = {});

}  // namespace ctxsiem
