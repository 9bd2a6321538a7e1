// Command-line front end: corpus generation, training, evaluation, the
// experiments, and the streaming service.

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "ctxsiem/errors.hpp"
#include "ctxsiem/experiments.hpp"
#include "ctxsiem/log.hpp"
#include "ctxsiem/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ctxsiem;

namespace {

enum Exit { kOk = 0, kConfig = 2, kData = 3, kInternal = 4 };

std::atomic<bool> g_stop{false};
extern "C" void on_signal(int) { g_stop = true; }

std::string file_hash(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return hex64(fnv1a64(ss.str()));
}

// Every run leaves one of these next to its outputs.
class Manifest {
 public:
  Manifest(std::string subcommand, json config) : start_(std::chrono::steady_clock::now()) {
    doc_ = {{"subcommand", std::move(subcommand)},
            {"config", std::move(config)},
            {"inputs", json::object()},
            {"outputs", json::object()},
            {"started_at", format_timestamp(std::chrono::time_point_cast<std::chrono::milliseconds>(
                               std::chrono::system_clock::now()))}};
  }
  void input(const std::string& role, const fs::path& p) { doc_["inputs"][role] = describe(p); }
  void output(const std::string& role, const fs::path& p) { doc_["outputs"][role] = describe(p); }
  void note(const std::string& key, json value) { doc_[key] = std::move(value); }

  void write(const fs::path& dir) {
    doc_["wall_clock_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::ofstream(dir / "manifest.json") << doc_.dump(2) << '\n';
  }

 private:
  static json describe(const fs::path& p) {
    json d = {{"path", p.string()}};
    if (fs::is_regular_file(p)) {
      d["fnv1a64"] = file_hash(p);
    } else if (fs::is_directory(p)) {
      json files = json::object();
      for (const auto& e : fs::recursive_directory_iterator(p))
        if (e.is_regular_file()) files[fs::relative(e.path(), p).string()] = file_hash(e.path());
      d["files"] = files;
    }
    return d;
  }

  json doc_;
  std::chrono::steady_clock::time_point start_;
};

void write_json(const fs::path& p, const json& j) {
  std::ofstream out(p);
  if (!out) throw ConfigError("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p);
  if (!out) throw ConfigError("cannot write " + p.string());
  out << s;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  json j = json::parse(in, nullptr, false, true);
  if (j.is_discarded()) throw ConfigError(path + " is not valid JSON");
  return j;
}

json ci_json(const ConfidenceInterval& ci) { return {{"point", ci.point}, {"low", ci.low}, {"high", ci.high}}; }

ExperimentSettings settings_from(const PipelineConfig& cfg) {
  ExperimentSettings s;
  s.stage1 = cfg.settings.cascade.stage1;
  s.stage2 = cfg.settings.cascade.stage2;
  s.stage1_threshold = cfg.settings.cascade.stage1_threshold;
  return s;
}

PipelineConfig config_or_default(const std::string& path) {
  return path.empty() ? PipelineConfig{} : PipelineConfig::from_json(read_json_file(path));
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
  std::string out;
  std::string scenario;
  std::uint64_t seed = 7;
  bool drift = false;
  bool print_scenario = false;
};

void write_corpus(const Corpus& c, const fs::path& dir, Manifest& m, const std::string& prefix) {
  fs::create_directories(dir);
  write_events((dir / "events.ndjson").string(), c.events);
  write_windows((dir / "windows.ndjson").string(), c.windows);
  m.output(prefix + "events", dir / "events.ndjson");
  m.output(prefix + "windows", dir / "windows.ndjson");
  std::map<std::string, std::size_t> counts;
  for (const auto& e : c.events) ++counts[std::string(to_string(e.label.value_or(ClassLabel::Normal)))];
  m.note(prefix + "class_counts", counts);
}

int run_generate(const GenerateArgs& a) {
  if (a.print_scenario) {
    ScenarioConfig sc = a.scenario.empty() ? default_scenario(a.seed) : ScenarioConfig::from_json(read_json_file(a.scenario));
    std::cout << sc.to_json().dump(2) << '\n';
    return kOk;
  }
  if (a.out.empty()) throw ConfigError("--out is required");
  const fs::path out = a.out;
  fs::create_directories(out);
  if (a.drift) {
    DriftConfig dc;
    dc.seed = a.seed;
    Manifest m("generate", {{"drift", true}, {"seed", a.seed}, {"phase_events", dc.phase_events},
                            {"phase2_sde_share", dc.phase2_sde_share}});
    const DriftCorpus d = drift_corpus(dc);
    for (int p = 0; p < 3; ++p)
      write_corpus(d.phases[static_cast<std::size_t>(p)], out / ("phase" + std::to_string(p + 1)), m,
                   "phase" + std::to_string(p + 1) + "_");
    m.write(out);
    std::cout << "wrote three drift phases to " << out << '\n';
    return kOk;
  }
  ScenarioConfig sc = a.scenario.empty() ? default_scenario(a.seed) : ScenarioConfig::from_json(read_json_file(a.scenario));
  if (!a.scenario.empty()) sc.seed = a.seed;
  Manifest m("generate", {{"scenario", sc.to_json()}, {"seed", sc.seed}});
  if (!a.scenario.empty()) m.input("scenario", a.scenario);
  const Corpus c = generate(sc);
  write_corpus(c, out, m, "");
  m.write(out);
  std::cout << "wrote " << c.events.size() << " events and " << c.windows.size() << " windows to " << out << '\n';
  return kOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string events, windows, out, config, keywords;
  std::size_t window = kDefaultWindow;
  std::uint64_t seed = 42;
  bool no_context = false;
  bool compare_algorithms = false;
  int bootstrap = 1000;
};

int run_train(const TrainArgs& a) {
  const PipelineConfig cfg = config_or_default(a.config);
  const KeywordTable keywords = a.keywords.empty() ? KeywordTable::defaults() : KeywordTable::from_json(read_json_file(a.keywords));
  const auto events = read_events(a.events);
  const auto windows = read_windows(a.windows);

  PrepareOptions opt;
  opt.window = a.window;
  opt.split_seed = a.seed;
  opt.balance = cfg.settings.balance;
  opt.balance.seed = a.seed;
  ExperimentSettings s = settings_from(cfg);
  s.feature_count = a.no_context ? kNumBaseFeatures : kNumFeatures;

  Manifest m("train", {{"window", a.window},
                       {"seed", a.seed},
                       {"no_context", a.no_context},
                       {"feature_count", s.feature_count},
                       {"bootstrap_resamples", a.bootstrap},
                       {"training", cfg.to_json()["training"]},
                       {"keywords", keywords.to_json()}});
  m.input("events", a.events);
  m.input("windows", a.windows);
  if (!a.config.empty()) m.input("config", a.config);

  const PreparedData d = prepare(events, windows, opt);
  const fs::path out = a.out;
  fs::create_directories(out);
  m.note("split_sizes", {{"train", d.train_raw.size()},
                         {"validation", d.validation.size()},
                         {"test", d.test.size()},
                         {"train_balanced", d.train.size()}});

  CascadeComparison cmp = cascade_vs_flat(d, events, s, keywords, a.bootstrap, a.seed);
  save_cascade(cmp.model, (out / "cascade").string(), {{"window", a.window}, {"no_context", a.no_context}});
  save_model(cmp.flat_stage1_model, (out / "flat_stage1.json").string());
  save_model(cmp.flat_stage2_model, (out / "flat_stage2.json").string());
  write_labelled((out / "train.ndjson").string(), d.train_raw);
  write_labelled((out / "test.ndjson").string(), d.test);

  json report = {{"cascade", cmp.cascade.to_json()},
                 {"flat_stage1", cmp.flat_stage1.to_json()},
                 {"flat_stage2", cmp.flat_stage2.to_json()},
                 {"bootstrap",
                  {{"cascade", ci_json(cmp.cascade_ci)},
                   {"flat_stage1", ci_json(cmp.flat_stage1_ci)},
                   {"flat_stage2", ci_json(cmp.flat_stage2_ci)}}},
                 {"rule_engine", detection_to_json(cmp.detection)}};
  write_json(out / "report.json", report);
  std::ostringstream text;
  text << "== cascade\n" << cmp.cascade.to_text() << "\n== flat (stage-1 hyperparameters)\n"
       << cmp.flat_stage1.to_text() << "\n== flat (stage-2 hyperparameters)\n" << cmp.flat_stage2.to_text()
       << "\n== rule engine vs cascade\n" << detection_to_text(cmp.detection);
  write_text(out / "report.txt", text.str());

  if (a.compare_algorithms) {
    const std::vector<Algorithm> algs = {Algorithm::Gbdt, Algorithm::DecisionTree, Algorithm::Logistic};
    std::ostringstream csv;
    csv << "algorithm,f1_without_context,f1_with_context,gain\n";
    for (const auto& r : context_impact(d, s, algs))
      csv << to_string(r.algorithm) << ',' << r.f1_without << ',' << r.f1_with << ',' << r.gain() << '\n';
    write_text(out / "context_impact.csv", csv.str());
    m.output("context_impact", out / "context_impact.csv");
  }

  for (const char* f : {"cascade", "flat_stage1.json", "flat_stage2.json", "train.ndjson", "test.ndjson",
                        "report.json", "report.txt"})
    m.output(f, out / f);
  m.write(out);
  std::cout << text.str();
  return kOk;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string model, test, out;
  int bootstrap = 1000;
  double level = 0.95;
  std::uint64_t seed = 0;
};

int run_evaluate(const EvaluateArgs& a) {
  const CascadeModel model = load_cascade(a.model);
  const auto test = read_labelled(a.test);
  if (test.empty()) throw InputError(a.test + " holds no rows");
  const auto truth = labels_of(test);
  const auto pred = predict_cascade(model, test);
  const EvalReport r = evaluate(truth, pred);
  const ConfidenceInterval ci = bootstrap_ci(truth, pred, a.bootstrap, a.level, a.seed);

  Manifest m("evaluate", {{"bootstrap_resamples", a.bootstrap}, {"level", a.level}, {"seed", a.seed}});
  m.input("model", a.model);
  m.input("test", a.test);
  const fs::path out = a.out;
  fs::create_directories(out);
  json report = r.to_json();
  report["bootstrap"] = ci_json(ci);
  report["bootstrap"]["level"] = a.level;
  report["bootstrap"]["resamples"] = a.bootstrap;
  write_json(out / "report.json", report);
  write_text(out / "confusion.csv", r.confusion.to_csv());
  m.output("report", out / "report.json");
  m.output("confusion", out / "confusion.csv");
  m.write(out);
  std::cout << r.to_text() << "macro F1 " << ci.point << " [" << ci.low << ", " << ci.high << "] at "
            << a.level << '\n';
  return kOk;
}

// ---------------------------------------------------------------- ablate

struct AblateArgs {
  std::string events, windows, out, config;
  std::vector<std::size_t> sizes = default_ablation_sizes();
  std::uint64_t seed = 42;
};

int run_ablate(const AblateArgs& a) {
  const PipelineConfig cfg = config_or_default(a.config);
  const auto events = read_events(a.events);
  const auto windows = read_windows(a.windows);
  PrepareOptions opt;
  opt.split_seed = a.seed;
  opt.balance = cfg.settings.balance;
  opt.balance.seed = a.seed;
  Manifest m("ablate", {{"sizes", a.sizes}, {"seed", a.seed}, {"training", cfg.to_json()["training"]}});
  m.input("events", a.events);
  m.input("windows", a.windows);
  const auto rows = window_ablation(events, windows, a.sizes, opt, settings_from(cfg));

  const fs::path out = a.out;
  fs::create_directories(out);
  std::ostringstream csv;
  csv << "window,macro_f1,stage1_macro_f1\n";
  json j = json::array();
  for (const auto& r : rows) {
    csv << r.window << ',' << r.macro_f1 << ',' << r.stage1_f1 << '\n';
    j.push_back({{"window", r.window}, {"macro_f1", r.macro_f1}, {"stage1_macro_f1", r.stage1_f1}});
  }
  write_text(out / "ablation.csv", csv.str());
  write_json(out / "ablation.json", j);
  m.output("csv", out / "ablation.csv");
  m.output("json", out / "ablation.json");
  m.write(out);
  std::cout << csv.str();
  return kOk;
}

// ---------------------------------------------------------------- drift

struct DriftArgs {
  std::string out, config;
  std::uint64_t seed = 11;
  std::size_t phase_events = 10000;
};

int run_drift(const DriftArgs& a) {
  const PipelineConfig cfg = config_or_default(a.config);
  DriftConfig dc;
  dc.seed = a.seed;
  dc.phase_events = {a.phase_events, a.phase_events, a.phase_events};
  DriftSettings s;
  s.models = settings_from(cfg);
  s.window = cfg.window;
  s.accuracy_threshold = cfg.retrain.accuracy_threshold;
  s.seed = a.seed;
  Manifest m("drift", {{"seed", a.seed},
                       {"phase_events", dc.phase_events},
                       {"window", s.window},
                       {"accuracy_threshold", s.accuracy_threshold},
                       {"test_fraction", s.test_fraction},
                       {"training", cfg.to_json()["training"]}});
  const DriftResult r = drift_experiment(drift_corpus(dc), s);

  const fs::path out = a.out;
  fs::create_directories(out);
  write_json(out / "drift.json", r.to_json());
  std::ostringstream csv;
  auto cell = [](const std::optional<double>& v) { return v ? std::to_string(*v) : std::string(); };
  csv << "segment,initial,kb_only,combined\n";
  for (std::size_t p = 0; p < 3; ++p)
    csv << "phase" << p + 1 << ',' << r.initial[p] << ',' << cell(r.kb_only[p]) << ',' << cell(r.combined[p]) << '\n';
  write_text(out / "drift.csv", csv.str());
  m.output("json", out / "drift.json");
  m.output("csv", out / "drift.csv");
  m.write(out);
  std::cout << r.to_text();
  return kOk;
}

// ---------------------------------------------------------------- serve

struct ServeArgs {
  std::string config, store, model, train_data, input;
  int port = -1;
  int ingest_port = -1;
  bool exit_after_input = false;
};

int run_serve(const ServeArgs& a) {
  PipelineConfig cfg = load_pipeline_config(a.config);
  if (!a.store.empty()) cfg.store_dir = a.store;
  if (a.port >= 0) cfg.http_port = a.port;
  if (a.ingest_port >= 0) cfg.ingest_port = a.ingest_port;
  cfg.validate();

  std::optional<CascadeModel> initial;
  std::vector<LabelledVector> original;
  if (!a.model.empty()) initial = load_cascade(a.model);
  if (!a.train_data.empty()) original = read_labelled(a.train_data);
  const bool has_model = fs::is_directory(fs::path(cfg.store_dir) / "models");
  if (!initial && !has_model) {
    // Cold start: train on the default testbed.
    log_info("no model supplied; training on the default scenario");
    const Corpus c = generate(default_scenario());
    PrepareOptions opt;
    opt.window = cfg.window;
    opt.balance = cfg.settings.balance;
    const PreparedData d = prepare(c.events, c.windows, opt);
    CascadeConfig cc = cfg.settings.cascade;
    initial = train_cascade(d.train, cc, d.validation);
    if (original.empty()) original = d.train_raw;
  }

  fs::create_directories(cfg.store_dir);
  Manifest m("serve", cfg.to_json());
  if (!a.model.empty()) m.input("model", a.model);
  if (!a.input.empty()) m.input("input", a.input);

  Pipeline pipeline(cfg, std::move(initial), std::move(original));
  ApiServer api(pipeline);
  const int http_port = api.start(cfg.http_host, cfg.http_port);
  std::cout << "http listening on " << cfg.http_host << ':' << http_port << std::endl;
  std::optional<LineListener> listener;
  if (cfg.ingest_port > 0) {
    listener.emplace(pipeline);
    const int p = listener->start(cfg.http_host, cfg.ingest_port);
    std::cout << "ingest listening on " << cfg.http_host << ':' << p << std::endl;
  }

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  if (!a.input.empty()) {
    std::ifstream in(a.input);
    if (!in) throw InputError("cannot read " + a.input);
    const IngestSummary s = pipeline.ingest_stream(in);
    std::cout << "ingested " << s.to_json().dump() << std::endl;
    m.note("ingest", s.to_json());
  }
  if (!a.exit_after_input)
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));

  if (listener) listener->stop();
  api.stop();
  m.note("results", pipeline.result_count());
  m.note("model_version", pipeline.registry().current()->version);
  m.write(cfg.store_dir);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Context-aware two-stage security event classification"};
  app.require_subcommand(1);
  std::string log_level;
  app.add_option("--log", log_level, "debug|info|warn|error|off")->check(CLI::IsMember({"debug", "info", "warn", "error", "off"}));

  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "Write a labelled synthetic corpus");
  gen->add_option("--out", ga.out, "Output directory");
  gen->add_option("--scenario", ga.scenario, "Scenario JSON (default: built-in testbed)");
  gen->add_option("--seed", ga.seed, "Random seed")->capture_default_str();
  gen->add_flag("--drift", ga.drift, "Write the three drift phases instead");
  gen->add_flag("--print-scenario", ga.print_scenario, "Print the scenario JSON and exit");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train the cascade and the flat baselines");
  train->add_option("--events", ta.events, "Events NDJSON")->required();
  train->add_option("--windows", ta.windows, "Attack windows NDJSON")->required();
  train->add_option("--out", ta.out, "Output directory")->required();
  train->add_option("--config", ta.config, "Pipeline config JSON (training section is used)");
  train->add_option("--keywords", ta.keywords, "Rule-engine keyword table JSON");
  train->add_option("-N,--window", ta.window, "Context window size")->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--seed", ta.seed, "Split and balancing seed")->capture_default_str();
  train->add_option("--bootstrap", ta.bootstrap, "Bootstrap resamples")->capture_default_str()->check(CLI::PositiveNumber);
  train->add_flag("--no-context", ta.no_context, "Use the 16 base features only");
  train->add_flag("--compare-algorithms", ta.compare_algorithms, "Also run the GBDT / tree / logistic context comparison");

  EvaluateArgs ea;
  auto* eval = app.add_subcommand("evaluate", "Score a saved cascade on a labelled vector file");
  eval->add_option("--model", ea.model, "Cascade directory")->required();
  eval->add_option("--test", ea.test, "Labelled vectors NDJSON")->required();
  eval->add_option("--out", ea.out, "Output directory")->required();
  eval->add_option("--bootstrap", ea.bootstrap, "Bootstrap resamples")->capture_default_str();
  eval->add_option("--level", ea.level, "Interval level")->capture_default_str();
  eval->add_option("--seed", ea.seed, "Bootstrap seed")->capture_default_str();

  AblateArgs aa;
  auto* ablate = app.add_subcommand("ablate", "Macro F1 against context window size");
  ablate->add_option("--events", aa.events, "Events NDJSON")->required();
  ablate->add_option("--windows", aa.windows, "Attack windows NDJSON")->required();
  ablate->add_option("--out", aa.out, "Output directory")->required();
  ablate->add_option("--config", aa.config, "Pipeline config JSON");
  ablate->add_option("--sizes", aa.sizes, "Window sizes")->delimiter(',');
  ablate->add_option("--seed", aa.seed, "Split and balancing seed")->capture_default_str();

  DriftArgs da;
  auto* drift = app.add_subcommand("drift", "Three-phase drift and retraining simulation");
  drift->add_option("--out", da.out, "Output directory")->required();
  drift->add_option("--config", da.config, "Pipeline config JSON");
  drift->add_option("--seed", da.seed, "Corpus and split seed")->capture_default_str();
  drift->add_option("--phase-events", da.phase_events, "Events per phase")->capture_default_str();

  ServeArgs sa;
  auto* serve = app.add_subcommand("serve", "Run the streaming service and HTTP API");
  serve->add_option("--config", sa.config, "Pipeline config JSON (or $CTXSIEM_CONFIG)");
  serve->add_option("--store", sa.store, "Store directory (overrides config and $CTXSIEM_STORE_DIR)");
  serve->add_option("--model", sa.model, "Initial cascade directory");
  serve->add_option("--train-data", sa.train_data, "Original training vectors for combined retraining");
  serve->add_option("--input", sa.input, "NDJSON events to ingest at start-up");
  serve->add_option("--port", sa.port, "HTTP port (0 picks one)");
  serve->add_option("--ingest-port", sa.ingest_port, "TCP line listener port (0 disables)");
  serve->add_flag("--exit-after-input", sa.exit_after_input, "Stop once --input has been ingested");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (!log_level.empty()) {
      static const std::map<std::string, LogLevel> levels = {{"debug", LogLevel::Debug}, {"info", LogLevel::Info},
                                                             {"warn", LogLevel::Warn},   {"error", LogLevel::Error},
                                                             {"off", LogLevel::Off}};
      set_log_level(levels.at(log_level));
    }
    if (*gen) return run_generate(ga);
    if (*train) return run_train(ta);
    if (*eval) return run_evaluate(ea);
    if (*ablate) return run_ablate(aa);
    if (*drift) return run_drift(da);
    if (*serve) return run_serve(sa);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const ParseError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const SchemaError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const InputError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const OrderError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const DegenerateModelError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kInternal;
}
