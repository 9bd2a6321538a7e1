#include "ctxsiem/event.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "ctxsiem/errors.hpp"

namespace ctxsiem {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr std::array<std::string_view, kNumClasses> kLabelNames = {
    "NORMAL",      "SQL_INJECTION",         "XSS",
    "WEB_SCAN",    "BRUTE_FORCE",           "BROKEN_AUTHENTICATION",
    "SENSITIVE_DATA_EXPOSURE"};

int parse_digits(std::string_view s, std::size_t pos, std::size_t n) {
  if (pos + n > s.size()) throw SchemaError("timestamp too short: '" + std::string(s) + "'");
  int v = 0;
  auto [p, ec] = std::from_chars(s.data() + pos, s.data() + pos + n, v);
  if (ec != std::errc{} || p != s.data() + pos + n)
    throw SchemaError("bad timestamp digits: '" + std::string(s) + "'");
  return v;
}

void expect_char(std::string_view s, std::size_t pos, std::string_view allowed) {
  if (pos >= s.size() || allowed.find(s[pos]) == std::string_view::npos)
    throw SchemaError("bad timestamp separator: '" + std::string(s) + "'");
}

const json* find_path(const json& j, std::initializer_list<const char*> path) {
  const json* cur = &j;
  for (const char* key : path) {
    if (!cur->is_object()) return nullptr;
    auto it = cur->find(key);
    if (it == cur->end()) return nullptr;
    cur = &*it;
  }
  return cur;
}

std::string get_string(const json& j, std::initializer_list<const char*> path) {
  const json* v = find_path(j, path);
  if (v == nullptr || v->is_null()) return {};
  if (v->is_string()) return v->get<std::string>();
  if (v->is_number_integer()) return std::to_string(v->get<long long>());
  return v->dump();
}

std::optional<long long> get_int(const json& j, std::initializer_list<const char*> path) {
  const json* v = find_path(j, path);
  if (v == nullptr || v->is_null()) return std::nullopt;
  if (v->is_number_integer()) return v->get<long long>();
  if (v->is_number_float()) return static_cast<long long>(v->get<double>());
  if (v->is_boolean()) return v->get<bool>() ? 1 : 0;
  if (v->is_string()) {
    const auto s = v->get<std::string>();
    if (s.empty()) return std::nullopt;
    long long out = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc{} || p != s.data() + s.size())
      throw SchemaError("expected integer, got '" + s + "'");
    return out;
  }
  throw SchemaError("expected integer value");
}

std::vector<std::string> get_list(const json& j, std::initializer_list<const char*> path) {
  const json* v = find_path(j, path);
  std::vector<std::string> out;
  if (v == nullptr || v->is_null()) return out;
  if (v->is_string()) {
    out.push_back(v->get<std::string>());
  } else if (v->is_array()) {
    for (const auto& item : *v) {
      if (item.is_string()) out.push_back(item.get<std::string>());
      else if (!item.is_null()) out.push_back(item.dump());
    }
  } else {
    out.push_back(v->dump());
  }
  return out;
}

void sort_unique(std::vector<std::string>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

ordered_json event_to_json(const SecurityEvent& e, bool with_label) {
  ordered_json j;
  j["timestamp"] = format_timestamp(e.timestamp);
  ordered_json data;
  data["srcip"] = e.src_ip;
  data["protocol"] = e.protocol;
  data["id"] = e.status_code ? ordered_json(*e.status_code) : ordered_json(nullptr);
  j["data"] = std::move(data);
  ordered_json rule;
  rule["id"] = e.rule_id;
  rule["level"] = e.rule_level;
  rule["description"] = e.rule_description;
  rule["firedtimes"] = e.rule_firedtimes;
  rule["mail"] = e.rule_mail != 0;
  rule["frequency"] = e.rule_frequency;
  rule["groups"] = e.rule_groups;
  rule["pci_dss"] = e.pci_dss;
  rule["tsc"] = e.tsc;
  rule["nist_800_53"] = e.nist_800_53;
  rule["gdpr"] = e.gdpr;
  rule["hipaa"] = e.hipaa;
  rule["mitre"] = ordered_json{{"id", e.mitre_ids}};
  j["rule"] = std::move(rule);
  j["agent"] = ordered_json{{"description", e.agent_description}};
  if (with_label && e.label) j["label"] = std::string(to_string(*e.label));
  return j;
}

}  // namespace

std::string_view to_string(ClassLabel l) { return kLabelNames.at(static_cast<std::size_t>(l)); }

std::optional<ClassLabel> try_parse_label(std::string_view s) {
  for (std::size_t i = 0; i < kLabelNames.size(); ++i)
    if (kLabelNames[i] == s) return static_cast<ClassLabel>(i);
  return std::nullopt;
}

ClassLabel parse_label(std::string_view s) {
  if (auto l = try_parse_label(s)) return *l;
  throw SchemaError("unknown class label '" + std::string(s) + "'");
}

std::string format_timestamp(Timestamp t) {
  using namespace std::chrono;
  const auto day = floor<days>(t);
  const year_month_day ymd{day};
  const hh_mm_ss hms{t - day};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d.%03dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()),
                static_cast<int>(hms.subseconds().count()));
  return buf;
}

Timestamp parse_timestamp(std::string_view s) {
  using namespace std::chrono;
  const int y = parse_digits(s, 0, 4);
  expect_char(s, 4, "-");
  const int mo = parse_digits(s, 5, 2);
  expect_char(s, 7, "-");
  const int d = parse_digits(s, 8, 2);
  expect_char(s, 10, "T ");
  const int hh = parse_digits(s, 11, 2);
  expect_char(s, 13, ":");
  const int mm = parse_digits(s, 14, 2);
  expect_char(s, 16, ":");
  const int ss = parse_digits(s, 17, 2);
  std::size_t pos = 19;
  int ms = 0;
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    const std::size_t begin = pos;
    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
    if (pos == begin) throw SchemaError("empty fractional seconds in '" + std::string(s) + "'");
    // Truncate to milliseconds; pad shorter fractions.
    std::string frac(s.substr(begin, std::min<std::size_t>(3, pos - begin)));
    frac.resize(3, '0');
    ms = parse_digits(frac, 0, 3);
  }
  minutes offset{0};
  if (pos < s.size()) {
    if (s[pos] == 'Z') {
      ++pos;
    } else if (s[pos] == '+' || s[pos] == '-') {
      const int sign = s[pos] == '-' ? -1 : 1;
      ++pos;
      const int oh = parse_digits(s, pos, 2);
      pos += 2;
      if (pos < s.size() && s[pos] == ':') ++pos;
      const int om = parse_digits(s, pos, 2);
      pos += 2;
      offset = minutes{sign * (oh * 60 + om)};
    }
  }
  if (pos != s.size()) throw SchemaError("trailing characters in timestamp '" + std::string(s) + "'");
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || hh > 23 || mm > 59 || ss > 60)
    throw SchemaError("invalid calendar timestamp '" + std::string(s) + "'");
  return sys_days{ymd} + hours{hh} + minutes{mm} + seconds{ss} + milliseconds{ms} - offset;
}

std::string join_list(std::span<const std::string> items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    out += items[i];
  }
  return out;
}

void canonicalise(SecurityEvent& e) {
  for (auto* list : {&e.rule_groups, &e.pci_dss, &e.tsc, &e.nist_800_53, &e.gdpr, &e.hipaa,
                     &e.mitre_ids})
    sort_unique(*list);
  e.rule_level = std::clamp(e.rule_level, 1, 16);
  e.rule_firedtimes = std::max(e.rule_firedtimes, 1);
  e.rule_mail = e.rule_mail != 0 ? 1 : 0;
  e.rule_frequency = std::max(e.rule_frequency, 0);
}

SecurityEvent parse_event(std::string_view line) {
  json j;
  try {
    j = json::parse(line.begin(), line.end());
  } catch (const json::parse_error& ex) {
    throw ParseError("malformed event JSON: " + std::string(ex.what()), ex.byte);
  }
  if (!j.is_object()) throw ParseError("event line is not a JSON object", 0);

  SecurityEvent e;
  const json* ts = find_path(j, {"timestamp"});
  if (ts == nullptr || !ts->is_string()) throw SchemaError("event lacks a string 'timestamp'");
  e.timestamp = parse_timestamp(ts->get_ref<const std::string&>());

  if (const json* ip = find_path(j, {"data", "srcip"}); ip != nullptr && !ip->is_null()) {
    if (!ip->is_string()) throw SchemaError("'data.srcip' must be a string");
    e.src_ip = ip->get<std::string>();
  }
  e.protocol = get_string(j, {"data", "protocol"});
  if (auto code = get_int(j, {"data", "id"})) {
    if (*code < 100 || *code > 599)
      throw SchemaError("'data.id' status code out of range: " + std::to_string(*code));
    e.status_code = static_cast<int>(*code);
  }
  e.rule_firedtimes = static_cast<int>(get_int(j, {"rule", "firedtimes"}).value_or(1));
  e.rule_mail = static_cast<int>(get_int(j, {"rule", "mail"}).value_or(0));
  e.rule_level = static_cast<int>(get_int(j, {"rule", "level"}).value_or(3));
  e.rule_description = get_string(j, {"rule", "description"});
  e.rule_groups = get_list(j, {"rule", "groups"});
  e.pci_dss = get_list(j, {"rule", "pci_dss"});
  e.tsc = get_list(j, {"rule", "tsc"});
  e.nist_800_53 = get_list(j, {"rule", "nist_800_53"});
  e.gdpr = get_list(j, {"rule", "gdpr"});
  e.hipaa = get_list(j, {"rule", "hipaa"});
  e.mitre_ids = get_list(j, {"rule", "mitre", "id"});
  e.rule_frequency = static_cast<int>(get_int(j, {"rule", "frequency"}).value_or(0));
  e.agent_description = get_string(j, {"agent", "description"});
  e.rule_id = get_string(j, {"rule", "id"});
  if (const json* lbl = find_path(j, {"label"}); lbl != nullptr && !lbl->is_null()) {
    if (!lbl->is_string()) throw SchemaError("'label' must be a string");
    e.label = parse_label(lbl->get_ref<const std::string&>());
  }
  canonicalise(e);
  return e;
}

std::string serialise_event(const SecurityEvent& e) { return event_to_json(e, true).dump(); }

std::string event_id(const SecurityEvent& e) {
  return hex64(fnv1a64(event_to_json(e, false).dump()));
}

AttackWindow parse_window(std::string_view line) {
  json j;
  try {
    j = json::parse(line.begin(), line.end());
  } catch (const json::parse_error& ex) {
    throw ParseError("malformed window JSON: " + std::string(ex.what()), ex.byte);
  }
  AttackWindow w;
  try {
    w.src_ip = j.at("src_ip").get<std::string>();
    w.start = parse_timestamp(j.at("start").get<std::string>());
    w.end = parse_timestamp(j.at("end").get<std::string>());
    w.label = parse_label(j.at("label").get<std::string>());
  } catch (const json::exception& ex) {
    throw SchemaError(std::string("attack window: ") + ex.what());
  }
  return w;
}

std::string serialise_window(const AttackWindow& w) {
  ordered_json j;
  j["src_ip"] = w.src_ip;
  j["start"] = format_timestamp(w.start);
  j["end"] = format_timestamp(w.end);
  j["label"] = std::string(to_string(w.label));
  return j.dump();
}

void validate_windows(std::span<const AttackWindow> windows) {
  std::map<std::string, std::vector<const AttackWindow*>> by_ip;
  for (const auto& w : windows) {
    if (!(w.start < w.end))
      throw ConfigError("attack window for " + w.src_ip + " has start >= end");
    if (w.label == ClassLabel::Normal)
      throw ConfigError("attack window for " + w.src_ip + " is labelled NORMAL");
    by_ip[w.src_ip].push_back(&w);
  }
  for (auto& [ip, list] : by_ip) {
    std::sort(list.begin(), list.end(),
              [](const AttackWindow* a, const AttackWindow* b) { return a->start < b->start; });
    for (std::size_t i = 1; i < list.size(); ++i)
      if (list[i]->start <= list[i - 1]->end)
        throw ConfigError("overlapping attack windows for " + ip + " at " +
                          format_timestamp(list[i]->start));
  }
}

WindowIndex::WindowIndex(std::span<const AttackWindow> windows) {
  validate_windows(windows);
  for (const auto& w : windows) by_ip_[w.src_ip].push_back(w);
  for (auto& [ip, list] : by_ip_)
    std::sort(list.begin(), list.end(),
              [](const AttackWindow& a, const AttackWindow& b) { return a.start < b.start; });
}

ClassLabel WindowIndex::label_for(const SecurityEvent& e) const {
  auto it = by_ip_.find(e.src_ip);
  if (it == by_ip_.end()) return ClassLabel::Normal;
  const auto& list = it->second;
  // Last window whose start <= timestamp.
  auto pos = std::upper_bound(list.begin(), list.end(), e.timestamp,
                              [](Timestamp t, const AttackWindow& w) { return t < w.start; });
  if (pos == list.begin()) return ClassLabel::Normal;
  --pos;
  return e.timestamp <= pos->end ? pos->label : ClassLabel::Normal;
}

ClassLabel assign_label(const SecurityEvent& e, std::span<const AttackWindow> windows) {
  return WindowIndex(windows).label_for(e);
}

namespace {

template <typename F>
void for_each_line(const std::string& path, F&& f) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    f(line);
  }
}

template <typename T, typename F>
void write_lines(const std::string& path, std::span<const T> items, F&& to_line) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path);
  for (const auto& item : items) out << to_line(item) << '\n';
}

}  // namespace

std::vector<SecurityEvent> read_events(const std::string& path) {
  std::vector<SecurityEvent> out;
  for_each_line(path, [&](const std::string& line) { out.push_back(parse_event(line)); });
  return out;
}

void write_events(const std::string& path, std::span<const SecurityEvent> events) {
  write_lines(path, events, serialise_event);
}

std::vector<AttackWindow> read_windows(const std::string& path) {
  std::vector<AttackWindow> out;
  for_each_line(path, [&](const std::string& line) { out.push_back(parse_window(line)); });
  return out;
}

void write_windows(const std::string& path, std::span<const AttackWindow> windows) {
  write_lines(path, windows, serialise_window);
}

std::size_t trim_torn_tail(const std::string& path) {
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec || size == 0) return 0;
  std::ifstream in(path, std::ios::binary);
  std::uintmax_t keep = size;
  char c = 0;
  // Walk back from the end to the last newline.
  while (keep > 0) {
    in.seekg(static_cast<std::streamoff>(keep - 1));
    in.get(c);
    if (c == '\n') break;
    --keep;
  }
  in.close();
  if (keep == size) return 0;
  std::filesystem::resize_file(path, keep);
  return static_cast<std::size_t>(size - keep);
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace ctxsiem
