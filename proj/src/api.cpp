#include "ctxsiem/errors.hpp"
#include "ctxsiem/log.hpp"
#include "ctxsiem/pipeline.hpp"

// After Eigen: <resolv.h> defines a `_res` macro that collides with its parameter names.
#include <httplib.h>

namespace ctxsiem {

using nlohmann::json;

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void fail(httplib::Response& res, int status, const std::string& message) {
  reply(res, status, {{"error", message}});
}

double query_double(const httplib::Request& req, const char* name) {
  const std::string v = req.get_param_value(name);
  std::size_t used = 0;
  double d = 0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw InputError(std::string(name) + " must be a number");
  return d;
}

json queue_json(const std::vector<QueueItem>& items) {
  json out = json::array();
  for (const auto& q : items)
    out.push_back({{"event_id", q.event_id},
                   {"p_max", q.p_max},
                   {"predicted", std::string(to_string(q.predicted))},
                   {"timestamp", format_timestamp(q.timestamp)},
                   {"src_ip", q.src_ip}});
  return out;
}

// Maps library errors onto HTTP statuses.
template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const NotFoundError& e) {
      fail(res, 404, e.what());
    } catch (const StateError& e) {
      fail(res, 409, e.what());
    } catch (const SchemaError& e) {
      fail(res, 400, e.what());
    } catch (const ParseError& e) {
      fail(res, 400, e.what());
    } catch (const InputError& e) {
      fail(res, 400, e.what());
    } catch (const json::exception& e) {
      fail(res, 400, std::string("malformed JSON body: ") + e.what());
    } catch (const std::exception& e) {
      log_error(std::string("HTTP ") + req.method + " " + req.path + ": " + e.what());
      fail(res, 500, e.what());
    }
  };
}

}  // namespace

struct ApiServer::Impl {
  Pipeline& pipeline;
  httplib::Server server;
  std::thread thread;

  explicit Impl(Pipeline& p) : pipeline(p) { routes(); }

  void routes() {
    server.Get("/health", guarded([this](const httplib::Request&, httplib::Response& res) {
      reply(res, 200,
            {{"status", "ok"},
             {"model_version", pipeline.registry().current()->version},
             {"results", pipeline.result_count()},
             {"queue", pipeline.queue().size()},
             {"kb_size", pipeline.knowledge_base().size()},
             {"dead_letters", pipeline.dead_letter_count()}});
    }));

    server.Get("/events", guarded([this](const httplib::Request& req, httplib::Response& res) {
      EventQuery q;
      if (req.has_param("label")) q.label = parse_label(req.get_param_value("label"));
      if (req.has_param("min_conf")) q.min_conf = query_double(req, "min_conf");
      if (req.has_param("max_conf")) q.max_conf = query_double(req, "max_conf");
      if (req.has_param("limit")) {
        const double limit = query_double(req, "limit");
        if (limit < 1 || limit != static_cast<double>(static_cast<long long>(limit)))
          throw InputError("limit must be a positive integer");
        q.limit = static_cast<std::size_t>(limit);
      }
      json out = json::array();
      for (const auto& r : pipeline.events(q)) out.push_back(r.to_json(false));
      reply(res, 200, out);
    }));

    server.Get("/queue", guarded([this](const httplib::Request&, httplib::Response& res) {
      reply(res, 200, queue_json(pipeline.queue()));
    }));

    server.Post("/labels", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json body = json::parse(req.body);
      if (!body.is_object() || !body.contains("event_id") || !body.contains("label"))
        throw InputError("body must be an object with event_id and label");
      const KbRecord k = pipeline.label(body.at("event_id").get<std::string>(), body.at("label").get<std::string>());
      reply(res, 200, {{"event_id", k.event_id}, {"label", std::string(to_string(k.label))}, {"seq", k.seq}});
    }));

    server.Get("/model", guarded([this](const httplib::Request&, httplib::Response& res) {
      reply(res, 200, pipeline.model_status());
    }));

    server.Post("/evaluate", guarded([this](const httplib::Request&, httplib::Response& res) {
      reply(res, 200, pipeline.evaluate().to_json());
    }));

    server.Post("/retrain", guarded([this](const httplib::Request&, httplib::Response& res) {
      reply(res, 200, pipeline.retrain_now("manual").to_json());
    }));

    server.Get("/metrics", guarded([this](const httplib::Request&, httplib::Response& res) {
      json body = pipeline.metrics().to_json();
      body["model_version"] = pipeline.registry().current()->version;
      reply(res, 200, body);
    }));
  }
};

ApiServer::ApiServer(Pipeline& pipeline) : impl_(std::make_unique<Impl>(pipeline)) {}

ApiServer::~ApiServer() { stop(); }

int ApiServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) bound = impl_->server.bind_to_any_port(host);
  else if (!impl_->server.bind_to_port(host, port)) bound = -1;
  if (bound < 0) throw ConfigError("cannot bind HTTP server to " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void ApiServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace ctxsiem
