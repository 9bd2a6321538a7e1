#include "ctxsiem/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "ctxsiem/context.hpp"
#include "ctxsiem/errors.hpp"

namespace ctxsiem {

namespace {

using std::chrono::milliseconds;

constexpr double kMsPerMinute = 60'000.0;

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void check_distribution(std::span<const double> p, const std::string& what) {
  double sum = 0;
  for (double v : p) {
    if (v < 0 || !std::isfinite(v)) throw ConfigError(what + ": negative or non-finite probability");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError(what + ": probabilities sum to " + std::to_string(sum));
}

// Largest-remainder apportionment of `total` over `weights`.
std::vector<std::size_t> apportion(std::size_t total, const std::vector<double>& weights) {
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::size_t> out(weights.size(), 0);
  if (wsum <= 0 || total == 0) return out;
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = static_cast<double>(total) * weights[i] / wsum;
    out[i] = static_cast<std::size_t>(std::floor(exact));
    assigned += out[i];
    rem.emplace_back(-(exact - std::floor(exact)), i);
  }
  std::sort(rem.begin(), rem.end());
  for (std::size_t j = 0; assigned < total; ++j, ++assigned) ++out[rem[j % rem.size()].second];
  return out;
}

template <typename Rng>
std::size_t pick_index(std::span<const double> weights, Rng& rng) {
  std::discrete_distribution<std::size_t> d(weights.begin(), weights.end());
  return d(rng);
}

struct StatusCodes {
  std::vector<int> codes;
  std::vector<double> weights;
};

const std::array<StatusCodes, 4>& status_codes() {
  static const std::array<StatusCodes, 4> table = {{
      {{200, 201, 204}, {0.85, 0.05, 0.10}},
      {{301, 302, 304}, {0.3, 0.5, 0.2}},
      {{400, 401, 403, 404}, {0.3, 0.15, 0.2, 0.35}},
      {{500, 502, 503}, {0.6, 0.2, 0.2}},
  }};
  return table;
}

class SourceGenerator {
 public:
  SourceGenerator(const TrafficProfile& profile, const TrafficProfile& benign, std::string ip, std::uint64_t seed)
      : p_(profile), b_(benign), ip_(std::move(ip)), rng_(seed) {}

  void session(Timestamp start, Timestamp end, std::size_t count, std::vector<SecurityEvent>& out) {
    std::uniform_int_distribution<long long> when(start.time_since_epoch().count(), end.time_since_epoch().count());
    std::vector<long long> times(count);
    for (auto& t : times) t = when(rng_);
    std::sort(times.begin(), times.end());
    int counter = 0;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    // Switching probabilities that give the configured share and mean run.
    const double leave_quiet = 1.0 / std::max(1.0, p_.quiet_mean_run);
    const double enter_quiet =
        p_.quiet_share <= 0 ? 0.0 : std::min(1.0, leave_quiet * p_.quiet_share / (1.0 - p_.quiet_share));
    bool quiet = u(rng_) < p_.quiet_share;
    for (long long t : times) {
      counter = std::min(counter + 1, std::max(1, p_.firedtimes_max));
      out.push_back(event(Timestamp(milliseconds(t)), counter, quiet));
      quiet = quiet ? u(rng_) >= leave_quiet : u(rng_) < enter_quiet;
    }
  }

 private:
  SecurityEvent event(Timestamp t, int session_counter, bool quiet) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const bool generic = quiet || (p_.label != ClassLabel::Normal && u(rng_) < p_.generic_fraction);
    const TrafficProfile& src = generic ? b_ : p_;

    SecurityEvent e;
    e.timestamp = t;
    e.src_ip = ip_;
    e.label = p_.label;

    const auto sc = static_cast<int>(
        pick_index(quiet ? std::span<const double>(p_.quiet_status_distribution) : src.status_distribution, rng_));
    const auto& codes = status_codes()[static_cast<std::size_t>(sc)];
    e.status_code = codes.codes[pick_index(codes.weights, rng_)];

    std::vector<const RuleTemplate*> rules;
    std::vector<double> weights;
    for (const auto& r : src.rule_pool)
      if (r.status_class < 0 || r.status_class == sc) {
        rules.push_back(&r);
        weights.push_back(r.weight);
      }
    if (rules.empty())
      for (const auto& r : src.rule_pool) {
        rules.push_back(&r);
        weights.push_back(r.weight);
      }
    const RuleTemplate& rule = *rules[pick_index(weights, rng_)];
    e.rule_id = rule.rule_id;
    e.rule_description = rule.description;
    e.rule_groups = rule.groups;
    e.rule_level = rule.level;
    e.rule_mail = rule.level >= 12 ? 1 : 0;
    e.rule_frequency = rule.frequency;
    e.pci_dss = rule.pci_dss;
    e.gdpr = rule.gdpr;
    e.hipaa = rule.hipaa;
    e.nist_800_53 = rule.nist_800_53;
    e.tsc = rule.tsc;

    std::vector<std::string> names;
    std::vector<double> pw;
    for (const auto& [name, w] : src.protocol_distribution) {
      names.push_back(name);
      pw.push_back(w);
    }
    e.protocol = names[pick_index(pw, rng_)];

    if (!generic) {
      for (std::size_t k = 0; k < kTrackedTechniques.size(); ++k)
        if (u(rng_) < p_.mitre_distribution[k]) e.mitre_ids.emplace_back(kTrackedTechniques[k]);
      if (!p_.untracked_techniques.empty() && u(rng_) < p_.untracked_rate) {
        std::uniform_int_distribution<std::size_t> which(0, p_.untracked_techniques.size() - 1);
        e.mitre_ids.push_back(p_.untracked_techniques[which(rng_)]);
      }
    }

    if (p_.firedtimes_mode == FiredtimesMode::Escalating) {
      e.rule_firedtimes = session_counter;
    } else {
      std::uniform_int_distribution<int> f(1, std::max(1, src.firedtimes_max));
      e.rule_firedtimes = f(rng_);
    }
    std::uniform_int_distribution<std::size_t> agent(0, p_.agents.size() - 1);
    e.agent_description = p_.agents.empty() ? std::string() : p_.agents[agent(rng_)];
    canonicalise(e);
    return e;
  }

  const TrafficProfile& p_;
  const TrafficProfile& b_;
  std::string ip_;
  std::mt19937_64 rng_;
};

Timestamp at_minute(Timestamp start, double minute) {
  return start + milliseconds(std::llround(minute * kMsPerMinute));
}

// --- default rule catalogue ---

RuleTemplate web_rule(std::string id, std::string desc, std::vector<std::string> groups, int level,
                      int status_class, double weight, int frequency = 0) {
  RuleTemplate r;
  r.rule_id = std::move(id);
  r.description = std::move(desc);
  r.groups = std::move(groups);
  r.level = level;
  r.status_class = status_class;
  r.weight = weight;
  r.frequency = frequency;
  return r;
}

RuleTemplate with_compliance(RuleTemplate r) {
  r.pci_dss = {"6.5", "11.4"};
  r.gdpr = {"IV_35.7.d"};
  r.nist_800_53 = {"SA.11", "SI.4"};
  r.tsc = {"CC6.6", "CC7.1", "CC8.1"};
  r.hipaa = {"164.312.b"};
  return r;
}

RuleTemplate with_auth_compliance(RuleTemplate r) {
  r.pci_dss = {"10.2.4", "10.2.5"};
  r.gdpr = {"IV_35.7.d", "IV_32.2"};
  r.nist_800_53 = {"AU.14", "AC.7"};
  r.tsc = {"CC6.1", "CC6.8", "CC7.2", "CC7.3"};
  r.hipaa = {"164.312.b"};
  return r;
}

// Rules that fire on ordinary web traffic; every profile can emit them.
std::vector<RuleTemplate> benign_rules() {
  return {
      web_rule("31108", "Web server access: request completed.", {"web", "accesslog"}, 3, 0, 6.0),
      web_rule("31108", "Web server access: request completed.", {"web", "accesslog"}, 3, 1, 6.0),
      web_rule("31100", "Web server access log entry.", {"web", "accesslog"}, 3, -1, 1.0),
      with_compliance(web_rule("31101", "Web server 400 error code.", {"web", "accesslog", "attack"}, 5, 2, 6.0)),
      with_compliance(web_rule("31120", "Web server 500 error code (Internal Error).", {"web", "accesslog", "errors"},
                               5, 3, 6.0)),
      with_auth_compliance(
          web_rule("5501", "PAM: Login session opened.", {"pam", "syslog", "authentication_success"}, 3, 0, 0.5)),
  };
}

void add(std::vector<RuleTemplate>& pool, std::vector<RuleTemplate> more) {
  pool.insert(pool.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
}

}  // namespace

void TrafficProfile::validate() const {
  check_distribution(status_distribution, name + ".status_distribution");
  for (double p : mitre_distribution)
    if (p < 0 || p > 1) throw ConfigError(name + ": technique probability outside [0,1]");
  if (untracked_rate < 0 || untracked_rate > 1) throw ConfigError(name + ": untracked_rate outside [0,1]");
  if (generic_fraction < 0 || generic_fraction > 1) throw ConfigError(name + ": generic_fraction outside [0,1]");
  if (quiet_share < 0 || quiet_share >= 1) throw ConfigError(name + ": quiet_share outside [0,1)");
  if (quiet_mean_run < 1) throw ConfigError(name + ": quiet_mean_run must be >= 1");
  check_distribution(quiet_status_distribution, name + ".quiet_status_distribution");
  if (!(rate_per_minute > 0)) throw ConfigError(name + ": rate must be positive");
  if (rule_pool.empty()) throw ConfigError(name + ": empty rule pool");
  if (protocol_distribution.empty()) throw ConfigError(name + ": empty protocol distribution");
  std::vector<double> pw;
  for (const auto& [_, w] : protocol_distribution) pw.push_back(w);
  check_distribution(pw, name + ".protocol_distribution");
  for (const auto& r : rule_pool) {
    if (r.weight <= 0) throw ConfigError(name + ": rule " + r.rule_id + " has non-positive weight");
    if (r.status_class < -1 || r.status_class > 3) throw ConfigError(name + ": bad status_class on " + r.rule_id);
  }
  if (firedtimes_max < 1) throw ConfigError(name + ": firedtimes_max must be >= 1");
  if (label == ClassLabel::Normal && firedtimes_mode == FiredtimesMode::Escalating)
    throw ConfigError(name + ": benign traffic cannot use escalating firedtimes");
}

nlohmann::json TrafficProfile::to_json() const {
  nlohmann::json rules = nlohmann::json::array();
  for (const auto& r : rule_pool)
    rules.push_back({{"rule_id", r.rule_id},
                     {"description", r.description},
                     {"groups", r.groups},
                     {"level", r.level},
                     {"frequency", r.frequency},
                     {"pci_dss", r.pci_dss},
                     {"gdpr", r.gdpr},
                     {"hipaa", r.hipaa},
                     {"nist_800_53", r.nist_800_53},
                     {"tsc", r.tsc},
                     {"status_class", r.status_class},
                     {"weight", r.weight}});
  nlohmann::json mitre = nlohmann::json::object();
  for (std::size_t k = 0; k < kTrackedTechniques.size(); ++k)
    mitre[std::string(kTrackedTechniques[k])] = mitre_distribution[k];
  return {{"label", std::string(to_string(label))},
          {"status_distribution", status_distribution},
          {"mitre_distribution", mitre},
          {"untracked_techniques", untracked_techniques},
          {"untracked_rate", untracked_rate},
          {"rule_pool", rules},
          {"protocol_distribution", protocol_distribution},
          {"firedtimes", {{"mode", firedtimes_mode == FiredtimesMode::Escalating ? "escalating" : "constant"},
                          {"max", firedtimes_max}}},
          {"generic_fraction", generic_fraction},
          {"quiet", {{"share", quiet_share}, {"mean_run", quiet_mean_run}, {"status_distribution", quiet_status_distribution}}},
          {"rate_per_minute", rate_per_minute},
          {"agents", agents}};
}

TrafficProfile TrafficProfile::from_json(const nlohmann::json& j) {
  TrafficProfile p;
  try {
    p.label = parse_label(j.at("label").get<std::string>());
    p.status_distribution = j.at("status_distribution").get<std::array<double, 4>>();
    if (j.contains("mitre_distribution")) {
      for (const auto& [k, v] : j.at("mitre_distribution").items()) {
        const auto it = std::find(kTrackedTechniques.begin(), kTrackedTechniques.end(), k);
        if (it == kTrackedTechniques.end()) throw ConfigError("unknown tracked technique " + k);
        p.mitre_distribution[static_cast<std::size_t>(it - kTrackedTechniques.begin())] = v.get<double>();
      }
    }
    p.untracked_techniques = j.value("untracked_techniques", std::vector<std::string>{});
    p.untracked_rate = j.value("untracked_rate", 0.0);
    for (const auto& r : j.at("rule_pool")) {
      RuleTemplate t;
      t.rule_id = r.at("rule_id").get<std::string>();
      t.description = r.value("description", std::string());
      t.groups = r.value("groups", std::vector<std::string>{});
      t.level = r.value("level", 3);
      t.frequency = r.value("frequency", 0);
      t.pci_dss = r.value("pci_dss", std::vector<std::string>{});
      t.gdpr = r.value("gdpr", std::vector<std::string>{});
      t.hipaa = r.value("hipaa", std::vector<std::string>{});
      t.nist_800_53 = r.value("nist_800_53", std::vector<std::string>{});
      t.tsc = r.value("tsc", std::vector<std::string>{});
      t.status_class = r.value("status_class", -1);
      t.weight = r.value("weight", 1.0);
      p.rule_pool.push_back(std::move(t));
    }
    if (j.contains("protocol_distribution"))
      p.protocol_distribution = j.at("protocol_distribution").get<std::map<std::string, double>>();
    if (j.contains("firedtimes")) {
      const auto& f = j.at("firedtimes");
      const auto mode = f.value("mode", std::string("constant"));
      if (mode == "escalating") p.firedtimes_mode = FiredtimesMode::Escalating;
      else if (mode != "constant") throw ConfigError("unknown firedtimes mode " + mode);
      p.firedtimes_max = f.value("max", 1);
    }
    p.generic_fraction = j.value("generic_fraction", 0.0);
    if (j.contains("quiet")) {
      const auto& q = j.at("quiet");
      p.quiet_share = q.value("share", 0.0);
      p.quiet_mean_run = q.value("mean_run", 1.0);
      if (q.contains("status_distribution"))
        p.quiet_status_distribution = q.at("status_distribution").get<std::array<double, 4>>();
    }
    p.rate_per_minute = j.value("rate_per_minute", 1.0);
    p.agents = j.value("agents", std::vector<std::string>{"web-server-01"});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("traffic profile: ") + e.what());
  } catch (const SchemaError& e) {
    throw ConfigError(std::string("traffic profile: ") + e.what());
  }
  return p;
}

void ScenarioConfig::validate() const {
  if (!(duration_minutes > 0)) throw ConfigError("scenario duration must be positive");
  for (const auto& [name, p] : profiles) p.validate();
  const auto benign = profiles.find(benign_profile);
  if (benign == profiles.end()) throw ConfigError("benign profile '" + benign_profile + "' is not defined");
  if (benign->second.label != ClassLabel::Normal) throw ConfigError("benign profile must be labelled NORMAL");

  std::map<std::string, std::string> ip_owner;
  std::set<std::string> benign_ips, attack_ips;
  double share_sum = 0;
  for (const auto& s : sources) {
    const auto it = profiles.find(s.profile);
    if (it == profiles.end()) throw ConfigError("source " + s.src_ip + " uses unknown profile " + s.profile);
    if (s.src_ip.empty()) throw ConfigError("source without src_ip");
    if (auto [pos, fresh] = ip_owner.emplace(s.src_ip, s.profile); !fresh && pos->second != s.profile)
      throw ConfigError("IP " + s.src_ip + " is shared by profiles " + pos->second + " and " + s.profile);
    (it->second.label == ClassLabel::Normal ? benign_ips : attack_ips).insert(s.src_ip);
    if (s.share < 0) throw ConfigError("negative share for " + s.src_ip);
    share_sum += s.share;
    for (const auto& w : s.sessions)
      if (w.start_minute < 0 || w.end_minute + s.cooldown_minutes > duration_minutes || w.start_minute >= w.end_minute)
        throw ConfigError("session of " + s.src_ip + " lies outside the scenario or is empty");
    if (s.cooldown_events > 0) {
      std::vector<Session> sorted = s.sessions;
      std::sort(sorted.begin(), sorted.end(), [](const Session& a, const Session& b) { return a.start_minute < b.start_minute; });
      for (std::size_t w = 1; w < sorted.size(); ++w)
        if (sorted[w - 1].end_minute + s.cooldown_minutes >= sorted[w].start_minute)
          throw ConfigError("cool-down of " + s.src_ip + " runs into its next session");
    }
    if (s.cooldown_events > 0 && (it->second.label == ClassLabel::Normal || !(s.cooldown_minutes > 0)))
      throw ConfigError("cool-down on " + s.src_ip + " needs an attack profile and a positive duration");
  }
  if (total_events > 0 && std::abs(share_sum - 1.0) > 1e-6)
    throw ConfigError("source shares sum to " + std::to_string(share_sum) + ", expected 1");
  for (const auto& ip : benign_ips)
    if (attack_ips.count(ip)) throw ConfigError("IP " + ip + " carries both benign and attack traffic");

  // Attack sessions become labelling windows, which must not overlap per IP.
  std::vector<AttackWindow> windows;
  for (const auto& s : sources) {
    const auto& p = profiles.at(s.profile);
    if (p.label == ClassLabel::Normal) continue;
    std::vector<Session> sess = s.sessions;
    if (sess.empty()) sess.push_back({0, duration_minutes});
    for (const auto& w : sess)
      windows.push_back({s.src_ip, at_minute(start, w.start_minute), at_minute(start, w.end_minute), p.label});
  }
  validate_windows(windows);
}

nlohmann::json ScenarioConfig::to_json() const {
  nlohmann::json profs = nlohmann::json::object();
  for (const auto& [name, p] : profiles) profs[name] = p.to_json();
  nlohmann::json srcs = nlohmann::json::array();
  for (const auto& s : sources) {
    nlohmann::json sess = nlohmann::json::array();
    for (const auto& w : s.sessions) sess.push_back({{"start_minute", w.start_minute}, {"end_minute", w.end_minute}});
    srcs.push_back({{"profile", s.profile},
                    {"src_ip", s.src_ip},
                    {"share", s.share},
                    {"sessions", sess},
                    {"cooldown_events", s.cooldown_events},
                    {"cooldown_minutes", s.cooldown_minutes},
                    {"cooldown_residual", s.cooldown_residual}});
  }
  return {{"version", 1},
          {"seed", seed},
          {"start", format_timestamp(start)},
          {"duration_minutes", duration_minutes},
          {"total_events", total_events},
          {"benign_profile", benign_profile},
          {"profiles", profs},
          {"sources", srcs}};
}

ScenarioConfig ScenarioConfig::from_json(const nlohmann::json& j) {
  ScenarioConfig c;
  try {
    if (j.value("version", 1) != 1) throw ConfigError("unsupported scenario version");
    c.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("start")) c.start = parse_timestamp(j.at("start").get<std::string>());
    c.duration_minutes = j.value("duration_minutes", c.duration_minutes);
    c.total_events = j.value("total_events", std::size_t{0});
    c.benign_profile = j.value("benign_profile", c.benign_profile);
    if (j.contains("profiles")) {
      for (const auto& [name, p] : j.at("profiles").items()) {
        if (!name.empty() && name.front() == '_') continue;  // comment keys
        auto prof = TrafficProfile::from_json(p);
        prof.name = name;
        c.profiles[name] = std::move(prof);
      }
    } else {
      c.profiles = default_profiles();
    }
    for (const auto& s : j.at("sources")) {
      TrafficSource src;
      src.profile = s.at("profile").get<std::string>();
      src.src_ip = s.at("src_ip").get<std::string>();
      src.share = s.value("share", 0.0);
      for (const auto& w : s.value("sessions", nlohmann::json::array()))
        src.sessions.push_back({w.at("start_minute").get<double>(), w.at("end_minute").get<double>()});
      src.cooldown_events = s.value("cooldown_events", std::size_t{0});
      src.cooldown_minutes = s.value("cooldown_minutes", 0.0);
      src.cooldown_residual = s.value("cooldown_residual", false);
      c.sources.push_back(std::move(src));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  } catch (const ParseError& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
  return c;
}

Corpus generate(const ScenarioConfig& cfg) {
  cfg.validate();
  const TrafficProfile& benign = cfg.profiles.at(cfg.benign_profile);

  std::vector<std::size_t> counts(cfg.sources.size());
  if (cfg.total_events > 0) {
    std::vector<double> shares;
    for (const auto& s : cfg.sources) shares.push_back(s.share);
    counts = apportion(cfg.total_events, shares);
  }

  Corpus out;
  for (std::size_t i = 0; i < cfg.sources.size(); ++i) {
    const auto& src = cfg.sources[i];
    const auto& profile = cfg.profiles.at(src.profile);
    std::vector<Session> sessions = src.sessions;
    if (sessions.empty()) sessions.push_back({0, cfg.duration_minutes});

    const std::uint64_t seed = mix(cfg.seed ^ mix(i + 1));
    std::vector<double> lengths;
    for (const auto& w : sessions) lengths.push_back(w.end_minute - w.start_minute);
    std::vector<std::size_t> per_session;
    if (cfg.total_events > 0) {
      per_session = apportion(counts[i], lengths);
    } else {
      std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
      for (double len : lengths) {
        std::poisson_distribution<std::size_t> n(profile.rate_per_minute * len);
        per_session.push_back(n(rng));
      }
    }

    SourceGenerator gen(profile, benign, src.src_ip, seed);
    for (std::size_t w = 0; w < sessions.size(); ++w) {
      const Timestamp a = at_minute(cfg.start, sessions[w].start_minute);
      const Timestamp b = at_minute(cfg.start, sessions[w].end_minute);
      gen.session(a, b, per_session[w], out.events);
      if (profile.label != ClassLabel::Normal) out.windows.push_back({src.src_ip, a, b, profile.label});
    }
    if (src.cooldown_events > 0) {
      SourceGenerator tail(src.cooldown_residual ? profile : benign, benign, src.src_ip, mix(seed ^ 0xc001d0a1ULL));
      const auto per_tail = apportion(src.cooldown_events, std::vector<double>(sessions.size(), 1.0));
      for (std::size_t w = 0; w < sessions.size(); ++w) {
        const Timestamp a = at_minute(cfg.start, sessions[w].end_minute) + milliseconds(1);
        const std::size_t first = out.events.size();
        tail.session(a, at_minute(cfg.start, sessions[w].end_minute + src.cooldown_minutes), per_tail[w], out.events);
        // Outside every window, so NORMAL whatever they look like.
        for (std::size_t k = first; k < out.events.size(); ++k) out.events[k].label = ClassLabel::Normal;
      }
    }
  }
  std::stable_sort(out.events.begin(), out.events.end(),
                   [](const SecurityEvent& a, const SecurityEvent& b) { return a.timestamp < b.timestamp; });
  std::stable_sort(out.windows.begin(), out.windows.end(), [](const AttackWindow& a, const AttackWindow& b) {
    return std::tie(a.start, a.src_ip) < std::tie(b.start, b.src_ip);
  });
  return out;
}

std::map<std::string, TrafficProfile> default_profiles() {
  // The reference study describes these behaviours only qualitatively; every
  // number below is a modelling choice.
  std::map<std::string, TrafficProfile> m;
  const std::vector<RuleTemplate> common = benign_rules();
  // Quiet-state status mix shared by every attacker: slow probing that
  // draws slightly more errors than ordinary browsing.
  const std::array<double, 4> kProbeStatus = {0.66, 0.10, 0.20, 0.04};

  TrafficProfile normal;
  normal.name = "normal";
  normal.label = ClassLabel::Normal;
  normal.status_distribution = {0.82, 0.09, 0.07, 0.02};
  normal.rule_pool = common;
  normal.protocol_distribution = {{"GET", 0.84}, {"POST", 0.14}, {"HEAD", 0.02}};
  normal.firedtimes_max = 3;
  normal.quiet_share = 0.02;
  normal.quiet_mean_run = 30;
  normal.quiet_status_distribution = {0.20, 0.03, 0.74, 0.03};
  normal.rate_per_minute = 1.0;
  normal.agents = {"web-server-01", "web-server-02"};
  m["normal"] = normal;

  TrafficProfile sqli;
  sqli.name = "sql_injection";
  sqli.label = ClassLabel::SqlInjection;
  sqli.status_distribution = {0.16, 0.02, 0.77, 0.05};
  sqli.mitre_distribution = {0.30, 0.0, 0.0, 0.0, 0.0, 0.0, 0.06};
  sqli.untracked_techniques = {"T1059"};
  sqli.untracked_rate = 0.05;
  sqli.rule_pool = common;
  add(sqli.rule_pool,
      {with_compliance(web_rule("31103", "SQL injection attempt.", {"web", "accesslog", "attack", "sql_injection"}, 7,
                                -1, 1.3)),
       with_compliance(web_rule("31106", "A web attack returned code 200 (success).", {"web", "accesslog", "attack"},
                                6, 0, 3.0)),
       with_compliance(web_rule("31151", "Multiple web server 400 error codes from same source ip.",
                                {"web", "accesslog", "recon"}, 10, 2, 3.0, 14))});
  sqli.protocol_distribution = {{"GET", 0.62}, {"POST", 0.38}};
  sqli.firedtimes_max = 3;
  sqli.generic_fraction = 0.45;
  sqli.quiet_share = 0.06;
  sqli.quiet_mean_run = 40;
  sqli.quiet_status_distribution = kProbeStatus;
  sqli.rate_per_minute = 12.0;
  m["sql_injection"] = sqli;

  TrafficProfile xss;
  xss.name = "xss";
  xss.label = ClassLabel::Xss;
  xss.status_distribution = {0.52, 0.06, 0.39, 0.03};
  xss.mitre_distribution = {0.08, 0.0, 0.0, 0.0, 0.0, 0.30, 0.0};
  xss.untracked_techniques = {"T1189"};
  xss.untracked_rate = 0.05;
  xss.rule_pool = common;
  add(xss.rule_pool,
      {with_compliance(web_rule("31105", "XSS (Cross Site Scripting) attempt.", {"web", "accesslog", "attack"}, 6, -1,
                                3.0)),
       with_compliance(web_rule("31104", "Common web attack.", {"web", "accesslog", "attack"}, 6, -1, 4.0))});
  xss.protocol_distribution = {{"GET", 0.7}, {"POST", 0.3}};
  xss.firedtimes_max = 3;
  xss.generic_fraction = 0.45;
  xss.quiet_share = 0.06;
  xss.quiet_mean_run = 40;
  xss.quiet_status_distribution = kProbeStatus;
  xss.rate_per_minute = 2.0;
  m["xss"] = xss;

  TrafficProfile scan;
  scan.name = "web_scan";
  scan.label = ClassLabel::WebScan;
  scan.status_distribution = {0.44, 0.34, 0.19, 0.03};
  scan.mitre_distribution = {0.05, 0.30, 0.0, 0.0, 0.0, 0.0, 0.0};
  scan.untracked_techniques = {"T1595"};
  scan.untracked_rate = 0.05;
  scan.rule_pool = common;
  add(scan.rule_pool,
      {with_compliance(web_rule("31102", "Blacklisted user agent (known malicious user agent).",
                                {"web", "accesslog", "attack"}, 6, -1, 2.0)),
       with_compliance(web_rule("31151", "Multiple web server 400 error codes from same source ip.",
                                {"web", "accesslog", "recon"}, 10, 2, 2.0, 14)),
       with_compliance(web_rule("31516", "Web scanner detected.", {"web", "accesslog", "attack"}, 6, -1, 0.15))});
  scan.protocol_distribution = {{"GET", 0.78}, {"HEAD", 0.12}, {"OPTIONS", 0.05}, {"POST", 0.05}};
  scan.firedtimes_max = 3;
  scan.generic_fraction = 0.45;
  scan.quiet_share = 0.06;
  scan.quiet_mean_run = 40;
  scan.quiet_status_distribution = kProbeStatus;
  scan.rate_per_minute = 20.0;
  m["web_scan"] = scan;

  TrafficProfile brute;
  brute.name = "brute_force";
  brute.label = ClassLabel::BruteForce;
  brute.status_distribution = {0.12, 0.04, 0.82, 0.02};
  brute.mitre_distribution = {0.0, 0.0, 0.0, 0.04, 0.0, 0.0, 0.0};
  brute.untracked_techniques = {"T1110", "T1110.001"};
  brute.untracked_rate = 0.3;
  brute.rule_pool = common;
  add(brute.rule_pool,
      {with_auth_compliance(web_rule("31509", "CMS (WordPress or Joomla) login attempt.",
                                     {"web", "accesslog", "authentication_failed"}, 3, -1, 4.0)),
       with_auth_compliance(web_rule("5716", "sshd: authentication failed.",
                                     {"syslog", "sshd", "authentication_failed"}, 5, 2, 3.0)),
       with_auth_compliance(web_rule("5720", "sshd: Multiple authentication failures.",
                                     {"syslog", "sshd", "authentication_failures"}, 10, 2, 2.0, 8))});
  brute.protocol_distribution = {{"POST", 0.9}, {"GET", 0.1}};
  brute.firedtimes_mode = FiredtimesMode::Escalating;
  brute.firedtimes_max = 2000;
  brute.generic_fraction = 0.35;
  brute.quiet_share = 0.06;
  brute.quiet_mean_run = 40;
  brute.quiet_status_distribution = kProbeStatus;
  brute.rate_per_minute = 6.0;
  m["brute_force"] = brute;

  TrafficProfile auth;
  auth.name = "broken_authentication";
  auth.label = ClassLabel::BrokenAuthentication;
  auth.status_distribution = {0.58, 0.16, 0.23, 0.03};
  auth.mitre_distribution = {0.0, 0.0, 0.0, 0.28, 0.05, 0.0, 0.0};
  auth.untracked_techniques = {"T1078", "T1539"};
  auth.untracked_rate = 0.1;
  auth.rule_pool = common;
  add(auth.rule_pool,
      {with_auth_compliance(web_rule("31530", "Web authentication bypass attempt (session token reuse).",
                                     {"web", "accesslog", "attack"}, 8, -1, 2.0)),
       with_auth_compliance(web_rule("5501", "PAM: Login session opened.",
                                     {"pam", "syslog", "authentication_success"}, 3, 0, 3.0))});
  auth.protocol_distribution = {{"GET", 0.55}, {"POST", 0.45}};
  auth.firedtimes_max = 3;
  auth.generic_fraction = 0.45;
  auth.quiet_share = 0.06;
  auth.quiet_mean_run = 40;
  auth.quiet_status_distribution = kProbeStatus;
  auth.rate_per_minute = 1.0;
  m["broken_authentication"] = auth;

  TrafficProfile sde;
  sde.name = "sensitive_data_exposure";
  sde.label = ClassLabel::SensitiveDataExposure;
  sde.status_distribution = {0.76, 0.05, 0.16, 0.03};
  sde.mitre_distribution = {0.0, 0.06, 0.16, 0.0, 0.04, 0.0, 0.0};
  sde.untracked_techniques = {"T1005", "T1552"};
  sde.untracked_rate = 0.08;
  sde.rule_pool = common;
  add(sde.rule_pool,
      {with_compliance(web_rule("31104", "Common web attack.", {"web", "accesslog", "attack"}, 4, -1, 1.5)),
       with_compliance(web_rule("31531", "Sensitive data exposure: backup or configuration file requested.",
                                {"web", "accesslog", "attack", "data_exposure"}, 4, 0, 0.9)),
       with_compliance(web_rule("550", "Integrity checksum changed.", {"ossec", "syscheck"}, 4, -1, 0.8))});
  sde.protocol_distribution = {{"GET", 0.9}, {"POST", 0.1}};
  sde.firedtimes_max = 3;
  sde.generic_fraction = 0.45;
  sde.quiet_share = 0.06;
  sde.quiet_mean_run = 40;
  sde.quiet_status_distribution = kProbeStatus;
  sde.rate_per_minute = 60.0;
  m["sensitive_data_exposure"] = sde;

  return m;
}

std::map<ClassLabel, double> default_class_mix() {
  const double total = 46454.0;
  return {{ClassLabel::SensitiveDataExposure, 26558 / total}, {ClassLabel::SqlInjection, 6573 / total},
          {ClassLabel::Normal, 6350 / total},                 {ClassLabel::WebScan, 5654 / total},
          {ClassLabel::BruteForce, 702 / total},              {ClassLabel::Xss, 317 / total},
          {ClassLabel::BrokenAuthentication, 300 / total}};
}

namespace {

constexpr std::size_t kDefaultCooldownEvents = 200;

const char* default_ip(ClassLabel l) {
  switch (l) {
    case ClassLabel::Normal: return "10.0.0.20";
    case ClassLabel::SqlInjection: return "192.168.56.101";
    case ClassLabel::Xss: return "192.168.56.102";
    case ClassLabel::WebScan: return "192.168.56.103";
    case ClassLabel::BruteForce: return "192.168.56.104";
    case ClassLabel::BrokenAuthentication: return "192.168.56.105";
    case ClassLabel::SensitiveDataExposure: return "192.168.56.106";
  }
  return "0.0.0.0";
}

std::string profile_for(ClassLabel l) {
  for (const auto& [name, p] : default_profiles())
    if (p.label == l) return name;
  throw ConfigError("no default profile for " + std::string(to_string(l)));
}

}  // namespace

ScenarioConfig default_scenario(std::uint64_t seed) {
  ScenarioConfig c;
  c.profiles = default_profiles();
  c.seed = seed;
  c.start = parse_timestamp("2025-03-03T00:00:00Z");
  c.duration_minutes = 7 * 24 * 60.0;
  c.total_events = 46454;
  // One working-day session per attack class, on consecutive days, each
  // followed by an hour of ordinary traffic from the same IP. Cool-down
  // events count towards NORMAL, so the benign IP sends the remainder.
  const std::size_t cooldown = kDefaultCooldownEvents;
  const std::size_t attack_sources = kAttackLabels.size();
  c.total_events = 46454 - cooldown * attack_sources;
  int day = 0;
  for (const auto& [label, share] : default_class_mix()) {
    TrafficSource s;
    s.profile = profile_for(label);
    s.src_ip = default_ip(label);
    double count = share * 46454.0;
    if (label != ClassLabel::Normal) {
      const double start = (day % 7) * 1440.0 + 9 * 60.0;
      s.sessions.push_back({start, start + 8 * 60.0});
      s.cooldown_events = cooldown;
      s.cooldown_minutes = 60.0;
      s.cooldown_residual = true;
      ++day;
    } else {
      count -= static_cast<double>(cooldown * attack_sources);
    }
    s.share = count / static_cast<double>(c.total_events);
    c.sources.push_back(std::move(s));
  }
  return c;
}

Corpus DriftCorpus::combined() const {
  Corpus out;
  for (const auto& p : phases) {
    out.events.insert(out.events.end(), p.events.begin(), p.events.end());
    out.windows.insert(out.windows.end(), p.windows.begin(), p.windows.end());
  }
  std::stable_sort(out.events.begin(), out.events.end(),
                   [](const SecurityEvent& a, const SecurityEvent& b) { return a.timestamp < b.timestamp; });
  return out;
}

DriftCorpus drift_corpus(const DriftConfig& cfg) {
  if (cfg.phase2_sde_share <= 0 || cfg.phase2_sde_share >= 1) throw ConfigError("phase2_sde_share must lie in (0,1)");
  const double phase_minutes = 3 * 1440.0;
  const Timestamp origin = parse_timestamp("2025-04-07T00:00:00Z");
  const double rest = 1.0 - cfg.phase2_sde_share;

  const std::array<std::map<ClassLabel, double>, 3> mixes = {{
      {{ClassLabel::Normal, 0.30}, {ClassLabel::SqlInjection, 0.30}, {ClassLabel::Xss, 0.15}, {ClassLabel::WebScan, 0.25}},
      {{ClassLabel::SensitiveDataExposure, cfg.phase2_sde_share},
       {ClassLabel::Normal, rest * 0.5},
       {ClassLabel::BruteForce, rest * 0.3},
       {ClassLabel::BrokenAuthentication, rest * 0.2}},
      default_class_mix(),
  }};

  DriftCorpus out;
  for (std::size_t ph = 0; ph < 3; ++ph) {
    ScenarioConfig c;
    c.profiles = default_profiles();
    c.seed = mix(cfg.seed + ph);
    c.start = origin + std::chrono::duration_cast<milliseconds>(
                           std::chrono::duration<double, std::ratio<60>>(phase_minutes * static_cast<double>(ph)));
    c.duration_minutes = phase_minutes;
    c.total_events = cfg.phase_events[ph];
    int slot = 0;
    for (const auto& [label, share] : mixes[ph]) {
      TrafficSource s;
      s.profile = profile_for(label);
      s.src_ip = default_ip(label);
      s.share = share;
      if (label != ClassLabel::Normal) {
        const double start = (slot % 3) * 1440.0 + 8 * 60.0;
        s.sessions.push_back({start, start + 10 * 60.0});
        ++slot;
      }
      c.sources.push_back(std::move(s));
    }
    out.phases[ph] = generate(c);
  }
  return out;
}

}  // namespace ctxsiem
