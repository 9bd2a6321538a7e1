#include <doctest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <filesystem>
#include <thread>

#include "ctxsiem/errors.hpp"
#include "ctxsiem/pipeline.hpp"
#include "fixtures.hpp"

// After Eigen, see src/api.cpp.
#include <httplib.h>

using namespace ctxsiem;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Service {
  fs::path dir;
  std::vector<SecurityEvent> stream;
  std::unique_ptr<Pipeline> pipeline;
  std::unique_ptr<ApiServer> server;
  int port = 0;

  explicit Service(const std::string& name) {
    auto cascade = fixture::fast_cascade();
    for (auto* g : {&cascade.stage1, &cascade.stage2}) {
      g->n_estimators = 40;
      g->learning_rate = 0.3;
    }
    const auto train = fixture::to_rows(fixture::class_log(fixture::every_class(300, 80), 21, 0.2));
    stream = fixture::class_log(fixture::every_class(150, 40), 22, 0.25, 1'750'000'000'000);
    dir = fs::temp_directory_path() / ("ctxsiem_api_" + name);
    fs::remove_all(dir);
    PipelineConfig cfg;
    cfg.store_dir = dir.string();
    cfg.retrain.cadence = std::chrono::hours(24 * 365);
    cfg.settings.cascade = cascade;
    for (auto l : kAllLabels) cfg.settings.balance.targets[l] = 120;
    pipeline = std::make_unique<Pipeline>(cfg, train_cascade(train, cascade), train);
    server = std::make_unique<ApiServer>(*pipeline);
    port = server->start("127.0.0.1", 0);
  }
  ~Service() {
    server.reset();
    pipeline.reset();
    fs::remove_all(dir);
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(60, 0);
    return c;
  }
};

json body_of(const httplib::Result& r) {
  REQUIRE(r);
  return json::parse(r->body);
}

httplib::Result post_label(httplib::Client& c, const std::string& id, const std::string& label) {
  return c.Post("/labels", json{{"event_id", id}, {"label", label}}.dump(), "application/json");
}

}  // namespace

TEST_CASE("health and event listing") {
  Service s("events");
  auto c = s.client();
  auto health = body_of(c.Get("/health"));
  CHECK(health.at("status") == "ok");
  CHECK(health.at("results") == 0);
  CHECK(health.at("model_version") == 1);

  s.pipeline->ingest_events(s.stream);
  CHECK(body_of(c.Get("/health")).at("results") == s.stream.size());

  const auto all = body_of(c.Get("/events?limit=100000"));
  CHECK(all.size() == s.stream.size());
  CHECK_FALSE(all.at(0).contains("vector"));

  SUBCASE("default limit") {
    CHECK(body_of(c.Get("/events")).size() == 100);
    CHECK(body_of(c.Get("/events?limit=5")).size() == 5);
  }
  SUBCASE("confidence filter") {
    std::size_t expected = 0;
    for (const auto& r : all) expected += r.at("p_max").get<double>() >= 0.9;
    const auto hits = body_of(c.Get("/events?min_conf=0.9&limit=100000"));
    CHECK(hits.size() == expected);
    for (const auto& r : hits) CHECK(r.at("p_max").get<double>() >= 0.9);
    for (const auto& r : body_of(c.Get("/events?max_conf=0.5&limit=100000"))) CHECK(r.at("p_max").get<double>() <= 0.5);
  }
  SUBCASE("label filter") {
    const auto hits = body_of(c.Get("/events?label=SQL_INJECTION&limit=100000"));
    for (const auto& r : hits) CHECK(r.at("final_label") == "SQL_INJECTION");
  }
  SUBCASE("bad parameters") {
    for (const char* q : {"/events?min_conf=high", "/events?limit=0", "/events?limit=2.5", "/events?label=PHISHING"}) {
      INFO(q);
      const auto r = c.Get(q);
      REQUIRE(r);
      CHECK(r->status == 400);
      CHECK(json::parse(r->body).contains("error"));
    }
  }
}

TEST_CASE("labelling through the API") {
  Service s("labels");
  auto c = s.client();
  {
    const auto r = c.Get("/metrics");
    REQUIRE(r);
    CHECK(r->status == 409);
  }
  s.pipeline->ingest_events(s.stream);
  const auto queue = body_of(c.Get("/queue"));
  REQUIRE(queue.size() >= 2);
  for (std::size_t i = 1; i < queue.size(); ++i) CHECK(queue[i - 1].at("p_max") <= queue[i].at("p_max"));
  const std::string id = queue.at(0).at("event_id");

  auto r = post_label(c, "unknown", "XSS");
  REQUIRE(r);
  CHECK(r->status == 404);
  r = post_label(c, id, "PHISHING");
  REQUIRE(r);
  CHECK(r->status == 400);
  r = c.Post("/labels", "{\"event_id\": ", "application/json");
  REQUIRE(r);
  CHECK(r->status == 400);
  r = c.Post("/labels", R"({"label": "XSS"})", "application/json");
  REQUIRE(r);
  CHECK(r->status == 400);

  r = post_label(c, id, "XSS");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(json::parse(r->body).at("label") == "XSS");
  const auto after = body_of(c.Get("/queue"));
  CHECK(after.size() == queue.size() - 1);
  for (const auto& item : after) CHECK(item.at("event_id") != id);

  const auto m = c.Get("/metrics");
  REQUIRE(m);
  CHECK(m->status == 200);
  const auto report = json::parse(m->body);
  CHECK(report.contains("macro_f1"));
  CHECK(report.at("model_version") == 1);
}

TEST_CASE("evaluation below the threshold publishes a new model") {
  Service s("evaluate");
  auto c = s.client();
  s.pipeline->ingest_events(s.stream);
  // Contradict the model on 250 events it was sure about.
  const auto sure = body_of(c.Get("/events?min_conf=0.9&limit=250"));
  REQUIRE(sure.size() == 250);
  for (const auto& r : sure) {
    const bool attack = r.at("final_label") != "NORMAL";
    REQUIRE(post_label(c, r.at("event_id"), attack ? "NORMAL" : "WEB_SCAN")->status == 200);
  }
  const auto before = body_of(c.Get("/model"));
  CHECK(before.at("version") == 1);
  CHECK(before.at("last_outcome").is_null());

  const auto out = body_of(c.Post("/evaluate"));
  CHECK(out.at("accuracy").get<double>() < 0.9);
  CHECK(out.at("retrained") == true);
  const auto model = body_of(c.Get("/model"));
  CHECK(model.at("version") == 2);
  CHECK(model.at("last_outcome").at("version") == 2);
  CHECK(body_of(c.Get("/health")).at("model_version") == 2);

  const auto manual = body_of(c.Post("/retrain"));
  CHECK(manual.at("version") == 3);
  CHECK(body_of(c.Get("/model")).at("versions") == 3);
}

TEST_CASE("the TCP listener feeds lines into the pipeline") {
  Service s("listener");
  LineListener listener(*s.pipeline);
  const int port = listener.start("127.0.0.1", 0);
  REQUIRE(port > 0);

  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  REQUIRE(fd >= 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  ::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
  REQUIRE(::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0);
  std::string payload;
  for (std::size_t i = 0; i < 50; ++i) payload += serialise_event(s.stream[i]) + "\n";
  payload += "not an event\n";
  REQUIRE(::send(fd, payload.data(), payload.size(), 0) == static_cast<ssize_t>(payload.size()));
  ::close(fd);

  for (int i = 0; i < 200 && (s.pipeline->result_count() < 50 || s.pipeline->dead_letter_count() < 1); ++i)
    std::this_thread::sleep_for(std::chrono::milliseconds(25));
  CHECK(s.pipeline->result_count() == 50);
  CHECK(s.pipeline->dead_letter_count() == 1);
  listener.stop();
  CHECK(body_of(s.client().Get("/health")).at("results") == 50);
}
