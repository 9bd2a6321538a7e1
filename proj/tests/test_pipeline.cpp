#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "ctxsiem/errors.hpp"
#include "ctxsiem/pipeline.hpp"
#include "fixtures.hpp"

using namespace ctxsiem;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Fixture {
  std::vector<LabelledVector> train;
  CascadeModel model;
  std::vector<SecurityEvent> stream;
};

// Enough rounds for confident predictions, so every route is exercised.
CascadeConfig confident_cascade() {
  auto c = fixture::fast_cascade();
  for (auto* g : {&c.stage1, &c.stage2}) {
    g->n_estimators = 40;
    g->learning_rate = 0.3;
  }
  return c;
}

const Fixture& base() {
  static const Fixture f = [] {
    Fixture x;
    x.train = fixture::to_rows(fixture::class_log(fixture::every_class(300, 80), 11, 0.2));
    x.model = train_cascade(x.train, confident_cascade());
    x.stream = fixture::class_log(fixture::every_class(150, 40), 12, 0.25, 1'750'000'000'000);
    return x;
  }();
  return f;
}

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("ctxsiem_pipe_" + name);
  fs::remove_all(d);
  return d;
}

PipelineConfig config_for(const fs::path& dir) {
  PipelineConfig c;
  c.store_dir = dir.string();
  c.workers = 2;
  c.retrain.cadence = std::chrono::hours(24 * 365);
  c.settings.cascade = fixture::fast_cascade();
  for (auto l : kAllLabels) c.settings.balance.targets[l] = 120;
  return c;
}

std::unique_ptr<Pipeline> open_pipeline(const fs::path& dir, bool with_model = true) {
  const auto& f = base();
  return std::make_unique<Pipeline>(config_for(dir), with_model ? std::optional(f.model) : std::nullopt, f.train);
}

json stable(const ClassifiedRecord& r) {
  auto j = r.to_json();
  j.erase("seq");
  return j;
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) out.push_back(line);
  return out;
}

ClassifiedRecord with_confidence(bool attack, double p) {
  ClassifiedRecord r;
  r.prediction.attack = attack;
  r.prediction.stage1_confidence = p;
  r.prediction.final_label = attack ? ClassLabel::Xss : ClassLabel::Normal;
  if (attack) {
    r.prediction.stage2_label = ClassLabel::Xss;
    r.prediction.stage2_confidence = p;
  }
  return r;
}

}  // namespace

TEST_CASE("routing examples") {
  const RoutingPolicy policy{0.8, true};
  auto r = with_confidence(true, 0.95);
  CHECK(route(r, policy) == Route::AutoKb);
  r = with_confidence(true, 0.60);
  CHECK(route(r, policy) == Route::AnalystQueue);
  r = with_confidence(true, 0.8);
  CHECK(route(r, policy) == Route::AutoKb);  // tau itself is confident enough
  // p_max is the weaker stage.
  r = with_confidence(true, 0.95);
  r.prediction.stage2_confidence = 0.5;
  CHECK(route(r, policy) == Route::AnalystQueue);

  r = with_confidence(false, 0.6);
  CHECK(route(r, policy) == Route::AnalystQueue);
  CHECK(route(r, RoutingPolicy{0.8, false}) == Route::PersistOnly);
  CHECK(route(with_confidence(true, 0.6), RoutingPolicy{0.8, false}) == Route::AnalystQueue);

  CHECK_THROWS_AS((RoutingPolicy{1.0, true}.validate()), ConfigError);
  CHECK_THROWS_AS((RoutingPolicy{0.0, true}.validate()), ConfigError);
}

TEST_CASE("an empty store without a model refuses to start") {
  const auto dir = fresh_dir("nomodel");
  CHECK_THROWS_AS(open_pipeline(dir, false), StateError);
  fs::remove_all(dir);
}

TEST_CASE("cold start and persistence of a single event") {
  const auto dir = fresh_dir("cold");
  auto p = open_pipeline(dir);
  const auto& e = base().stream.front();
  const auto r = p->ingest(e);
  CHECK(r.event_id == event_id(e));
  CHECK(r.model_version == 1);
  for (double c : r.vector.context().as_array()) CHECK(c == 0.0);
  CHECK(p->result_count() == 1);
  const auto stored = lines_of(dir / "results.ndjson");
  REQUIRE(stored.size() == 1);
  CHECK(stable(ClassifiedRecord::from_json(json::parse(stored[0]))) == stable(r));
  CHECK(lines_of(dir / "ingest.ndjson").size() == 1);

  // A repeated id returns the stored record and writes nothing.
  const auto again = p->ingest(e);
  CHECK(stable(again) == stable(r));
  CHECK(p->result_count() == 1);
  CHECK(lines_of(dir / "results.ndjson").size() == 1);
  p.reset();
  fs::remove_all(dir);
}

TEST_CASE("streaming results equal batch feature construction and classification") {
  const auto& f = base();
  const auto dir = fresh_dir("stream");
  auto p = open_pipeline(dir);
  const auto summary = p->ingest_events(f.stream);
  CHECK(summary.accepted == f.stream.size());
  CHECK(summary.rejected == 0);
  CHECK(summary.evaluations == 0);
  const auto batch = build_dataset(f.stream, kDefaultWindow);
  for (std::size_t i = 0; i < f.stream.size(); ++i) {
    const auto r = p->record(event_id(f.stream[i]));
    REQUIRE(r.has_value());
    REQUIRE(r->vector == batch[i]);
    const auto expect = classify(f.model, batch[i]);
    REQUIRE(r->prediction.final_label == expect.final_label);
    REQUIRE(r->p_max() == expect.confidence());
    REQUIRE(r->route == route(*r, p->config().routing));
  }
  p.reset();
  fs::remove_all(dir);
}

TEST_CASE("replaying a stream into fresh stores is deterministic") {
  const auto& f = base();
  const auto a_dir = fresh_dir("replay_a"), b_dir = fresh_dir("replay_b");
  auto a = open_pipeline(a_dir);
  auto b = open_pipeline(b_dir);
  a->ingest_events(f.stream);
  std::stringstream ndjson;
  for (const auto& e : f.stream) ndjson << serialise_event(e) << '\n';
  b->ingest_stream(ndjson);
  for (const auto& e : f.stream) REQUIRE(stable(*a->record(event_id(e))) == stable(*b->record(event_id(e))));
  CHECK(a->knowledge_base().size() == b->knowledge_base().size());
  const auto qa = a->queue(), qb = b->queue();
  REQUIRE(qa.size() == qb.size());
  for (std::size_t i = 0; i < qa.size(); ++i) CHECK(qa[i].event_id == qb[i].event_id);
  a.reset();
  b.reset();
  fs::remove_all(a_dir);
  fs::remove_all(b_dir);
}

TEST_CASE("bad input is dead-lettered") {
  const auto dir = fresh_dir("dead");
  auto p = open_pipeline(dir);
  SecurityEvent e = base().stream[0];
  p->ingest(e);

  SUBCASE("an older event from the same IP") {
    SecurityEvent older = e;
    older.timestamp -= std::chrono::seconds(5);
    older.rule_id = "1";
    CHECK_THROWS_AS(p->ingest(older), OrderError);
    CHECK(p->dead_letter_count() == 1);
    CHECK_FALSE(p->record(event_id(older)).has_value());
    // Events at the same instant are in order.
    SecurityEvent same = e;
    same.rule_id = "2";
    CHECK_NOTHROW(p->ingest(same));
    // Another IP has its own clock.
    older.src_ip = "192.0.2.1";
    CHECK_NOTHROW(p->ingest(older));
  }
  SUBCASE("malformed lines") {
    CHECK_FALSE(p->ingest_line("{not json").has_value());
    CHECK_FALSE(p->ingest_line(R"({"timestamp": "2024-01-01T00:00:00Z", "data": {"id": 700}})").has_value());
    CHECK(p->dead_letter_count() == 2);
    std::stringstream in;
    in << serialise_event(base().stream[1]) << "\n\ngarbage\n" << serialise_event(base().stream[2]) << "\n";
    const auto s = p->ingest_stream(in);
    CHECK(s.accepted == 2);
    CHECK(s.rejected == 1);
    CHECK(p->dead_letter_count() == 3);
  }
  const auto dead = lines_of(dir / "deadletter.ndjson");
  REQUIRE_FALSE(dead.empty());
  for (const auto& d : dead) {
    const auto j = json::parse(d);
    CHECK_FALSE(j.at("reason").get<std::string>().empty());
    CHECK(j.contains("line"));
  }
  p.reset();
  // The dead-letter count survives a restart.
  const auto n = dead.size();
  CHECK(open_pipeline(dir)->dead_letter_count() == n);
  fs::remove_all(dir);
}

TEST_CASE("recovery after a crash loses and duplicates nothing") {
  const auto& f = base();
  const auto dir = fresh_dir("crash");
  std::map<std::string, json> before;
  std::size_t kb_before = 0, queue_before = 0;
  {
    auto p = open_pipeline(dir);
    p->ingest_events(f.stream);
    for (const auto& e : f.stream) before[event_id(e)] = stable(*p->record(event_id(e)));
    kb_before = p->knowledge_base().record_count();
    queue_before = p->queue().size();
  }
  REQUIRE(kb_before > 0);
  REQUIRE(queue_before > 0);
  auto check_store = [&](Pipeline& p) {
    CHECK(p.result_count() == f.stream.size());
    for (const auto& [id, j] : before) REQUIRE(stable(*p.record(id)) == j);
    CHECK(p.knowledge_base().record_count() == kb_before);
    CHECK(p.queue().size() == queue_before);
    // The results file holds each id once.
    std::set<std::string> ids;
    for (const auto& line : lines_of(dir / "results.ndjson")) REQUIRE(ids.insert(json::parse(line).at("event_id")).second);
    CHECK(ids.size() == f.stream.size());
  };

  SUBCASE("results lost after the ingest log was written") {
    auto lines = lines_of(dir / "results.ndjson");
    {
      std::ofstream out(dir / "results.ndjson", std::ios::trunc);
      for (std::size_t i = 0; i < lines.size() / 2; ++i) out << lines[i] << '\n';
      out << lines[lines.size() / 2].substr(0, 40);  // torn write
    }
    auto p = open_pipeline(dir, false);
    check_store(*p);
  }
  SUBCASE("results file missing") {
    fs::remove(dir / "results.ndjson");
    auto p = open_pipeline(dir, false);
    check_store(*p);
  }
  SUBCASE("torn ingest and knowledge-base tails") {
    { std::ofstream(dir / "ingest.ndjson", std::ios::app) << R"({"timestamp":"2025)"; }
    { std::ofstream(dir / "kb.ndjson", std::ios::app) << R"({"event_id":)"; }
    auto p = open_pipeline(dir, false);
    check_store(*p);
    SecurityEvent next = f.stream.back();
    next.timestamp += std::chrono::hours(1);
    p->ingest(next);
    for (const auto& line : lines_of(dir / "ingest.ndjson")) REQUIRE_NOTHROW(parse_event(line));
  }
  SUBCASE("a clean restart followed by a full replay") {
    auto p = open_pipeline(dir, false);
    check_store(*p);
    const auto s = p->ingest_events(f.stream);
    CHECK(s.duplicates == f.stream.size());
    CHECK(s.accepted == 0);
    check_store(*p);
  }
  fs::remove_all(dir);
}

TEST_CASE("analyst labels") {
  const auto& f = base();
  const auto dir = fresh_dir("labels");
  auto p = open_pipeline(dir);
  CHECK_THROWS_AS(p->metrics(), StateError);
  p->ingest_events(f.stream);

  const auto q = p->queue();
  REQUIRE(q.size() >= 2);
  for (std::size_t i = 1; i < q.size(); ++i) CHECK(q[i - 1].p_max <= q[i].p_max);
  for (const auto& item : q) CHECK(item.p_max < p->config().routing.tau);

  CHECK_THROWS_AS(p->label("no-such-id", "XSS"), NotFoundError);
  CHECK_THROWS_AS(p->label(q.front().event_id, "PHISHING"), SchemaError);
  CHECK(p->queue().size() == q.size());

  const auto k = p->label(q.front().event_id, "BRUTE_FORCE");
  CHECK(k.provenance == Provenance::Analyst);
  CHECK(k.label == ClassLabel::BruteForce);
  CHECK(p->queue().size() == q.size() - 1);
  CHECK(p->knowledge_base().latest(q.front().event_id)->label == ClassLabel::BruteForce);
  CHECK_NOTHROW(p->metrics());

  // Labelled items stay out of the queue after a restart.
  p.reset();
  p = open_pipeline(dir, false);
  CHECK(p->queue().size() == q.size() - 1);
  for (const auto& item : p->queue()) CHECK(item.event_id != q.front().event_id);
  p.reset();
  fs::remove_all(dir);
}

TEST_CASE("event queries") {
  const auto& f = base();
  const auto dir = fresh_dir("query");
  auto p = open_pipeline(dir);
  p->ingest_events(f.stream);
  std::map<Route, std::size_t> routes;
  for (const auto& e : f.stream) ++routes[p->record(event_id(e))->route];
  CHECK(routes[Route::AutoKb] > 0);
  CHECK(routes[Route::AnalystQueue] > 0);
  CHECK(p->knowledge_base().size() == routes[Route::AutoKb]);
  EventQuery all;
  all.limit = 100000;
  const auto everything = p->events(all);
  CHECK(everything.size() == f.stream.size());
  for (std::size_t i = 1; i < everything.size(); ++i) CHECK(!(everything[i - 1].event.timestamp < everything[i].event.timestamp));

  EventQuery confident = all;
  confident.min_conf = 0.9;
  std::size_t expected = 0;
  for (const auto& r : everything) expected += r.p_max() >= 0.9;
  const auto hits = p->events(confident);
  CHECK(hits.size() == expected);
  for (const auto& r : hits) CHECK(r.p_max() >= 0.9);

  EventQuery xss = all;
  xss.label = ClassLabel::Xss;
  for (const auto& r : p->events(xss)) CHECK(r.prediction.final_label == ClassLabel::Xss);

  EventQuery few;
  few.limit = 3;
  const auto top = p->events(few);
  REQUIRE(top.size() == 3);
  CHECK(top[0].event_id == everything[0].event_id);
  p.reset();
  fs::remove_all(dir);
}

TEST_CASE("evaluation cadence follows event time") {
  const auto& f = base();
  const auto dir = fresh_dir("cadence");
  auto cfg = config_for(dir);
  cfg.retrain.cadence = std::chrono::hours(1);
  Pipeline p(cfg, f.model, f.train);
  SecurityEvent e = f.stream[0];
  p.ingest(e);
  CHECK(p.model_status().at("last_outcome").is_null());  // the first event only starts the clock
  e.timestamp += std::chrono::minutes(59);
  p.ingest(e);
  CHECK(p.model_status().at("last_outcome").is_null());
  e.timestamp += std::chrono::minutes(1);
  p.ingest(e);
  CHECK_FALSE(p.model_status().at("last_outcome").is_null());

  SUBCASE("wall-clock cadence uses the injected clock") {
    Timestamp now = oracle::at_ms(0);
    auto wall = config_for(fresh_dir("cadence_wall"));
    wall.retrain.cadence = std::chrono::hours(24);
    wall.event_time_cadence = false;
    Pipeline q(wall, f.model, f.train, [&] { return now; });
    CHECK_FALSE(q.tick(q.now()).has_value());
    now += std::chrono::hours(23);
    CHECK_FALSE(q.tick(q.now()).has_value());
    now += std::chrono::hours(1);
    CHECK(q.tick(q.now()).has_value());
    fs::remove_all(wall.store_dir);
  }
  fs::remove_all(dir);
}

TEST_CASE("low KB accuracy retrains and later events use the new version") {
  const auto& f = base();
  const auto dir = fresh_dir("retrain");
  auto p = open_pipeline(dir);
  const std::span<const SecurityEvent> all(f.stream);
  p->ingest_events(all.first(200));
  // Contradict the model on confidently handled events.
  std::size_t relabelled = 0;
  for (const auto& r : p->events(EventQuery{std::nullopt, 0.9, std::nullopt, 100000})) {
    if (relabelled == 60) break;
    p->label(r.event_id, is_attack(r.prediction.final_label) ? "NORMAL" : "SQL_INJECTION");
    ++relabelled;
  }
  REQUIRE(relabelled == 60);
  const auto out = p->evaluate();
  REQUIRE(out.accuracy.has_value());
  CHECK(*out.accuracy < 0.9);
  CHECK(out.triggered);
  CHECK(out.retrained);
  CHECK(out.version == 2);
  CHECK(p->model_status().at("version") == 2);
  CHECK(fs::exists(dir / "models" / "v2" / "manifest.json"));

  p->ingest_events(all.subspan(200));
  for (const auto& e : all.subspan(200)) REQUIRE(p->record(event_id(e))->model_version == 2);
  for (const auto& e : all.first(200)) REQUIRE(p->record(event_id(e))->model_version == 1);

  CHECK(p->retrain_now().version == 3);
  p.reset();
  // The newest version is served after a restart.
  CHECK(open_pipeline(dir, false)->model_status().at("version") == 3);
  fs::remove_all(dir);
}

TEST_CASE("keyed executor keeps per-key order") {
  KeyedExecutor ex(3);
  std::mutex mu;
  std::map<std::string, std::vector<int>> seen;
  for (int i = 0; i < 2000; ++i) {
    const std::string key = "k" + std::to_string(i % 11);
    ex.submit(key, [&, key, i] {
      std::lock_guard lock(mu);
      seen[key].push_back(i);
    });
  }
  ex.drain();
  std::size_t total = 0;
  for (const auto& [key, order] : seen) {
    total += order.size();
    CHECK(std::is_sorted(order.begin(), order.end()));
  }
  CHECK(total == 2000);
  CHECK(ex.lane_for("k1") == ex.lane_for("k1"));
}

TEST_CASE("pipeline configuration") {
  const auto dir = fresh_dir("config");
  fs::create_directories(dir);
  auto c = config_for(dir);
  c.routing.tau = 0.7;
  c.retrain.mode = RetrainMode::KbOnly;
  c.retrain.cadence = std::chrono::hours(6);
  const auto back = PipelineConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.retrain.cadence == std::chrono::hours(6));
  CHECK(back.settings.balance.targets.at(ClassLabel::Xss) == 120);

  const auto partial = PipelineConfig::from_json(json{{"window", 15}});
  CHECK(partial.window == 15);
  CHECK(partial.routing.tau == PipelineConfig{}.routing.tau);

  CHECK_THROWS_AS(PipelineConfig::from_json(json{{"routing", {{"tau", 1.5}}}}), ConfigError);
  CHECK_THROWS_AS(PipelineConfig::from_json(json{{"retrain", {{"mode", "sometimes"}}}}), ConfigError);
  CHECK_THROWS_AS(PipelineConfig::from_json(json{{"window", "thirty"}}), ConfigError);
  CHECK_THROWS_AS(PipelineConfig::from_json(json{{"workers", 0}}), ConfigError);
  CHECK_THROWS_AS(load_pipeline_config((dir / "absent.json").string()), ConfigError);

  const auto file = dir / "pipeline.json";
  std::ofstream(file) << c.to_json().dump(2);
  ::setenv("CTXSIEM_N", "3", 1);
  ::setenv("CTXSIEM_TAU", "0.65", 1);
  ::setenv("CTXSIEM_THRESHOLD", "0.8", 1);
  ::setenv("CTXSIEM_STORE_DIR", "/tmp/elsewhere", 1);
  const auto loaded = load_pipeline_config(file.string());
  CHECK(loaded.window == 3);
  CHECK(loaded.routing.tau == 0.65);
  CHECK(loaded.retrain.accuracy_threshold == 0.8);
  CHECK(loaded.store_dir == "/tmp/elsewhere");
  CHECK(loaded.retrain.mode == RetrainMode::KbOnly);

  ::setenv("CTXSIEM_N", "abc", 1);
  CHECK_THROWS_AS(load_pipeline_config(file.string()), ConfigError);
  ::setenv("CTXSIEM_N", "0", 1);
  CHECK_THROWS_AS(load_pipeline_config(file.string()), ConfigError);
  for (const char* v : {"CTXSIEM_N", "CTXSIEM_TAU", "CTXSIEM_THRESHOLD", "CTXSIEM_STORE_DIR"}) ::unsetenv(v);
  fs::remove_all(dir);
}
