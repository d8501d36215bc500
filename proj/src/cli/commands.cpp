#include "phishtrain/cli.hpp"

#include <pthread.h>
#include <signal.h>

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "phishtrain/analysis.hpp"
#include "phishtrain/corpus.hpp"
#include "phishtrain/embeddings.hpp"
#include "phishtrain/error.hpp"
#include "phishtrain/service/server.hpp"
#include "phishtrain/service/store.hpp"
#include "phishtrain/simd/kernels.hpp"
#include "phishtrain/simulation.hpp"

namespace phishtrain::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Failures that mean "fix the invocation", reported with exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError(path + " is not valid JSON: " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

fs::path prepare_out_dir(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw UsageError("cannot create output directory " + out);
  return fs::path(out);
}

std::string absolute(const std::string& path) {
  return path.empty() ? path : fs::absolute(path).lexically_normal().string();
}

/// Accepts a bare params object or a document with a "params" member, so the
/// output of `calibrate` can be passed straight to `simulate` and `serve`.
ibl::IBLParams params_from_file(const std::string& path) {
  const json doc = read_json_file(path);
  try {
    return ibl::params_from_json(doc.contains("params") ? doc["params"] : doc);
  } catch (const Error& e) {
    throw UsageError(path + ": " + e.what());
  }
}

ibl::IBLParams preset_params(const std::string& preset) {
  if (preset == "calibrated") return calibrated_agent_params();
  return ibl::IBLParams{};
}

struct Inputs {
  std::string corpus;
  std::string embeddings;
};

void add_inputs(CLI::App& cmd, Inputs& in) {
  cmd.add_option("--corpus", in.corpus, "Email corpus (JSON array of records)")
      ->envname("PHISHTRAIN_CORPUS")
      ->required()
      ->check(CLI::ExistingFile);
  cmd.add_option("--embeddings", in.embeddings, "Embedding table (JSONL of {id, vector})")
      ->envname("PHISHTRAIN_EMBEDDINGS")
      ->required()
      ->check(CLI::ExistingFile);
}

struct Loaded {
  std::vector<EmailRecord> corpus;
  EmbeddingTable embeddings{EmbeddingTable::Provenance::kFile};
};

Loaded load_inputs(const Inputs& in) {
  Loaded l;
  l.corpus = load_corpus(in.corpus);
  l.embeddings = load_embeddings(in.embeddings);
  return l;
}

std::vector<Condition> parse_conditions(const std::vector<std::string>& names) {
  std::vector<Condition> out;
  for (const auto& n : names) out.push_back(parse_condition(n));
  return out;
}

std::map<Condition, double> parse_targets(const std::vector<std::string>& specs) {
  std::map<Condition, double> out;
  for (const auto& s : specs) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError("target '" + s + "' must look like AUTHOR/STYLE=PP");
    try {
      out[parse_condition(s.substr(0, eq))] = std::stod(s.substr(eq + 1));
    } catch (const std::logic_error&) {
      throw UsageError("target '" + s + "' has no numeric improvement");
    }
  }
  return out;
}

// --- simulate --------------------------------------------------------------

struct SimulateArgs {
  Inputs inputs;
  std::string out = "out";
  std::string config;
  std::uint64_t seed = 1;
  std::size_t agents = 100;
  std::string policy = "both";
  std::vector<std::string> conditions;
  std::string params;
  std::string preset = "calibrated";
  std::size_t threads = 0;
  bool participants = false;
};

int cmd_simulate(const SimulateArgs& a, const CLI::App& cmd, std::ostream& out) {
  CohortConfig cfg;
  std::string corpus = a.inputs.corpus;
  std::string embeddings = a.inputs.embeddings;
  cfg.agent_params = preset_params(a.preset);

  // A JSON config supplies defaults; explicit flags (or their env vars) win.
  json file = json::object();
  if (!a.config.empty()) file = read_json_file(a.config);
  auto given = [&](const char* flag) { return cmd.get_option(flag)->count() > 0; };
  try {
    if (file.contains("agent_params") && !given("--params") && !given("--preset")) {
      cfg.agent_params = ibl::params_from_json(file["agent_params"]);
    }
    if (file.contains("protocol")) cfg.protocol = protocol_from_json(file["protocol"]);
    cfg.n_agents = given("--agents") || !file.contains("agents") ? a.agents : file["agents"].get<std::size_t>();
    cfg.base_seed = given("--seed") || !file.contains("seed") ? a.seed : file["seed"].get<std::uint64_t>();
    cfg.threads = given("--threads") || !file.contains("threads") ? a.threads : file["threads"].get<std::size_t>();
    if (!a.conditions.empty()) {
      cfg.conditions = parse_conditions(a.conditions);
    } else if (file.contains("conditions")) {
      cfg.conditions = parse_conditions(file["conditions"].get<std::vector<std::string>>());
    }
    if (!a.params.empty()) cfg.agent_params = params_from_file(a.params);

    cfg.policies.clear();
    if (!given("--policy") && file.contains("policies")) {
      for (const auto& p : file["policies"]) {
        SelectionPolicy policy{PolicyKind::kRandom, 0, cfg.agent_params};
        if (p.is_string()) {
          policy.kind = parse_policy(p.get<std::string>());
        } else {
          policy = policy_from_json(p);
          if (!p.contains("params")) policy.params = cfg.agent_params;
        }
        cfg.policies.push_back(policy);
      }
    } else {
      if (a.policy == "random" || a.policy == "both") {
        cfg.policies.push_back({PolicyKind::kRandom, 0, cfg.agent_params});
      }
      if (a.policy == "ibl" || a.policy == "both") {
        cfg.policies.push_back({PolicyKind::kIblSelection, 0, cfg.agent_params});
      }
    }
  } catch (const json::exception& e) {
    throw UsageError(a.config + ": " + e.what());
  }
  cfg.keep_trials = a.participants;

  const Loaded data = load_inputs({corpus, embeddings});
  const SimulationReport report = run_cohort(cfg, data.corpus, data.embeddings);

  const fs::path dir = prepare_out_dir(a.out);
  json policies = json::array();
  for (const auto& p : cfg.policies) policies.push_back(to_json(p));
  std::vector<std::string> conditions;
  for (auto c : cfg.conditions) conditions.push_back(to_string(c));
  write_json(dir / "resolved-config.json",
             json{{"command", "simulate"},
                  {"corpus", absolute(corpus)},
                  {"embeddings", absolute(embeddings)},
                  {"out", absolute(a.out)},
                  {"seed", cfg.base_seed},
                  {"agents", cfg.n_agents},
                  {"conditions", conditions},
                  {"policies", policies},
                  {"agent_params", ibl::params_json(cfg.agent_params)},
                  {"protocol", to_json(cfg.protocol)},
                  {"threads", cfg.threads},
                  {"participants", cfg.keep_trials}});
  write_json(dir / "report.json", to_json(report));
  write_text(dir / "report.csv", to_csv(report));
  if (cfg.keep_trials) save_participants(to_participants(report), dir / "participants.json");

  for (const auto& c : report.cells) {
    out << to_string(c.condition) << "  " << to_string(c.policy) << "  improvement "
        << c.overall.improvement_pp.mean << " pp (sd " << c.overall.improvement_pp.sd << ")\n";
  }
  for (const auto& cmp : report.comparisons) {
    out << to_string(cmp.condition) << "  ibl - random = " << cmp.welch.mean_difference
        << " pp, Welch t = " << cmp.welch.t << ", p = " << cmp.welch.p << "\n";
  }
  out << "wrote " << (dir / "report.json").string() << "\n";
  return kExitOk;
}

// --- calibrate -------------------------------------------------------------

struct CalibrateArgs {
  Inputs inputs;
  std::string out = "out";
  std::string grid;
  std::vector<std::string> targets{"HUMAN/GPT4_STYLED=1.5", "GPT4/GPT4_STYLED=10.4"};
  std::uint64_t seed = 1;
  std::size_t agents = 100;
  std::size_t threads = 0;
};

int cmd_calibrate(const CalibrateArgs& a, std::ostream& out) {
  CalibrationGrid grid = CalibrationGrid::defaults();
  if (!a.grid.empty()) {
    try {
      grid = grid_from_json(read_json_file(a.grid));
    } catch (const json::exception& e) {
      throw UsageError(a.grid + ": " + e.what());
    }
  }
  const auto targets = parse_targets(a.targets);
  const Loaded data = load_inputs(a.inputs);
  const CalibrationResult result =
      calibrate(grid, targets, data.corpus, data.embeddings, a.agents, a.seed, {}, {}, a.threads);

  const fs::path dir = prepare_out_dir(a.out);
  json target_json = json::object();
  for (const auto& [c, v] : targets) target_json[to_string(c)] = v;
  write_json(dir / "resolved-config.json", json{{"command", "calibrate"},
                                                {"corpus", absolute(a.inputs.corpus)},
                                                {"embeddings", absolute(a.inputs.embeddings)},
                                                {"out", absolute(a.out)},
                                                {"seed", a.seed},
                                                {"agents", a.agents},
                                                {"grid", to_json(grid)},
                                                {"targets_pp", target_json},
                                                {"threads", a.threads}});
  write_json(dir / "best-params.json", to_json(result));

  out << "best grid point " << result.best_index << " of " << result.evaluated << ", loss " << result.loss << "\n";
  out << "params " << ibl::params_json(result.params).dump() << "\n";
  for (const auto& [c, r] : result.residuals) {
    out << to_string(c) << "  simulated " << result.simulated.at(c) << " pp, residual " << r << " pp\n";
  }
  out << "wrote " << (dir / "best-params.json").string() << "\n";
  return kExitOk;
}

// --- analyze ---------------------------------------------------------------

struct AnalyzeArgs {
  std::string participants;
  std::string out;
};

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out) {
  const auto records = load_participants(a.participants);
  const AnalysisReport report = analyze(records);
  out << format_report(report);
  if (!a.out.empty()) {
    const fs::path dir = prepare_out_dir(a.out);
    write_json(dir / "resolved-config.json",
               json{{"command", "analyze"}, {"participants", absolute(a.participants)}, {"out", absolute(a.out)}});
    write_json(dir / "analysis.json", to_json(report));
    write_text(dir / "analysis.txt", format_report(report));
  }
  return kExitOk;
}

// --- gen-corpus ------------------------------------------------------------

struct GenCorpusArgs {
  std::string out = "corpus";
  std::uint64_t seed = 1;
  std::size_t n_base = 360;
  SynthOptions options;
};

int cmd_gen_corpus(const GenCorpusArgs& a, std::ostream& out) {
  const SynthCorpus synth = synth_corpus(a.seed, a.n_base, a.options);
  const fs::path dir = prepare_out_dir(a.out);
  save_corpus(synth.emails, dir / "corpus.json");
  save_embeddings(synth.embeddings, dir / "embeddings.jsonl");
  write_json(dir / "resolved-config.json", json{{"command", "gen-corpus"},
                                                {"out", absolute(a.out)},
                                                {"seed", a.seed},
                                                {"n_base", a.n_base},
                                                {"dim", a.options.dim},
                                                {"cluster_size", a.options.cluster_size},
                                                {"within_cluster_noise", a.options.within_cluster_noise},
                                                {"variant_noise", a.options.variant_noise},
                                                {"shared_weight", a.options.shared_weight},
                                                {"label_weight", a.options.label_weight},
                                                {"twin_similarity", a.options.twin_similarity}});
  out << "wrote " << synth.emails.size() << " emails to " << (dir / "corpus.json").string() << " and "
      << (dir / "embeddings.jsonl").string() << "\n";
  return kExitOk;
}

// --- embed -----------------------------------------------------------------

struct EmbedArgs {
  std::string corpus;
  std::string out = "embeddings.jsonl";
  ProviderConfig provider;
  std::string cache;
};

int cmd_embed(EmbedArgs a, std::ostream& out) {
  ProviderConfig provider = a.provider;
  const ProviderConfig env = ProviderConfig::from_env();
  if (provider.endpoint.empty()) provider.endpoint = env.endpoint;
  if (provider.model.empty()) provider.model = env.model;
  provider.token = env.token;  // never taken from the command line
  provider.cache_path = a.cache.empty() ? fs::path(a.out) : fs::path(a.cache);
  if (provider.endpoint.empty()) {
    throw UsageError("no provider endpoint: pass --endpoint or set PHISHTRAIN_EMBED_URL");
  }
  const auto corpus = load_corpus(a.corpus);
  std::vector<std::pair<std::string, std::string>> texts;
  for (const auto& e : corpus) texts.emplace_back(e.id, embedding_text(e));
  FetchStats stats;
  const EmbeddingTable table = fetch_embeddings(provider, texts, &stats);
  if (provider.cache_path != fs::path(a.out)) save_embeddings(table, a.out);
  out << "embedded " << table.size() << " emails (" << stats.cache_hits << " cached, " << stats.fetched
      << " fetched in " << stats.requests << " requests) -> " << a.out << "\n";
  return kExitOk;
}

// --- serve -----------------------------------------------------------------

struct ServeArgs {
  Inputs inputs;
  std::string data_dir = "sessions";
  std::string bind = "127.0.0.1:8080";
  std::string static_dir;
  std::vector<std::string> actions;
  std::string policy = "ibl";
  std::string params;
  std::string preset = "calibrated";
  bool no_sync = false;
};

int cmd_serve(const ServeArgs& a, std::ostream& out) {
  service::ServerConfig config;
  const auto colon = a.bind.rfind(':');
  if (colon == std::string::npos) throw UsageError("--bind must be HOST:PORT");
  config.host = a.bind.substr(0, colon);
  try {
    config.port = std::stoi(a.bind.substr(colon + 1));
  } catch (const std::logic_error&) {
    throw UsageError("--bind must be HOST:PORT");
  }
  if (config.port < 0 || config.port > 65535) throw UsageError("port out of range in --bind");
  if (!a.static_dir.empty()) config.static_dir = a.static_dir;
  config.default_policy.kind = parse_policy(a.policy);
  config.default_policy.params = a.params.empty() ? preset_params(a.preset) : params_from_file(a.params);

  Loaded data = load_inputs(a.inputs);
  auto env = std::make_shared<service::Environment>(std::move(data.corpus), std::move(data.embeddings),
                                                    ProtocolConfig{},
                                                    a.actions.empty() ? service::default_actions() : a.actions);
  service::StoreOptions options;
  options.data_dir = a.data_dir;
  options.sync_writes = !a.no_sync;
  auto store = std::make_shared<service::SessionStore>(env, options);
  const std::size_t recovered = store->recover();

  // Route SIGINT/SIGTERM to a waiter thread so shutdown happens outside a
  // signal handler. Every log line is already on disk when a request returns,
  // so stopping only has to drain in-flight requests.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  service::Server server(store, config);
  const int port = server.bind();
  out << "phishtrain serving on " << config.host << ":" << port << " (" << recovered
      << " sessions recovered, data in " << a.data_dir << ")" << std::endl;

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  });
  server.run();
  // run() also returns if the listener fails; wake the waiter in that case.
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  pthread_sigmask(SIG_UNBLOCK, &signals, nullptr);
  out << "phishtrain stopped" << std::endl;
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adaptive phishing-awareness training: IBL learner simulation, calibration, analysis and the "
               "live training service"};
  app.name("phishtrain");
  app.require_subcommand(1);
  app.set_version_flag("--version", "phishtrain 1.0.0");
  std::string simd = "auto";
  app.add_option("--simd", simd, "Dot-product kernels: auto, scalar, avx2 or neon")
      ->envname("PHISHTRAIN_SIMD")
      ->check(CLI::IsMember({"auto", "scalar", "avx2", "neon"}));

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Run the pre/train/post protocol with simulated IBL agents");
  add_inputs(*simulate, sim.inputs);
  simulate->add_option("--out", sim.out, "Output directory")->envname("PHISHTRAIN_OUT")->capture_default_str();
  simulate->add_option("--config", sim.config, "JSON config (protocol, policies, conditions, seed, agents, ...)")
      ->check(CLI::ExistingFile);
  simulate->add_option("--seed", sim.seed, "Base seed")->envname("PHISHTRAIN_SEED")->capture_default_str();
  simulate->add_option("--agents", sim.agents, "Agents per condition and policy")
      ->envname("PHISHTRAIN_AGENTS")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  simulate->add_option("--policy", sim.policy, "random, ibl or both")
      ->envname("PHISHTRAIN_POLICY")
      ->check(CLI::IsMember({"random", "ibl", "both"}))
      ->capture_default_str();
  simulate->add_option("--condition", sim.conditions, "AUTHOR/STYLE, repeatable (default: all four)")
      ->envname("PHISHTRAIN_CONDITION");
  simulate->add_option("--params", sim.params, "Agent params JSON (e.g. calibrate's best-params.json)")
      ->check(CLI::ExistingFile);
  simulate->add_option("--preset", sim.preset, "Agent params when --params is absent: calibrated or paper")
      ->check(CLI::IsMember({"calibrated", "paper"}))
      ->capture_default_str();
  simulate->add_option("--threads", sim.threads, "Worker threads (0 = all cores)")->envname("PHISHTRAIN_THREADS");
  simulate->add_flag("--export-participants", sim.participants, "Also write per-agent trial logs");

  CalibrateArgs cal;
  auto* calib = app.add_subcommand("calibrate", "Grid-search agent params to match target improvements");
  add_inputs(*calib, cal.inputs);
  calib->add_option("--out", cal.out, "Output directory")->envname("PHISHTRAIN_OUT")->capture_default_str();
  calib->add_option("--grid", cal.grid, "JSON grid {decay, noise, default_utility, choice_temperature}")
      ->envname("PHISHTRAIN_GRID")
      ->check(CLI::ExistingFile);
  calib->add_option("--target", cal.targets, "AUTHOR/STYLE=PP, repeatable")->capture_default_str();
  calib->add_option("--seed", cal.seed, "Base seed")->envname("PHISHTRAIN_SEED")->capture_default_str();
  calib->add_option("--agents", cal.agents, "Agents per grid point and condition")
      ->envname("PHISHTRAIN_AGENTS")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  calib->add_option("--threads", cal.threads, "Worker threads (0 = all cores)")->envname("PHISHTRAIN_THREADS");

  AnalyzeArgs ana;
  auto* analyze_cmd = app.add_subcommand("analyze", "Improvement, ANOVA and regression tables for participant data");
  analyze_cmd->add_option("--participants,--input", ana.participants, "Participant file (.json or .csv)")
      ->envname("PHISHTRAIN_PARTICIPANTS")
      ->required()
      ->check(CLI::ExistingFile);
  analyze_cmd->add_option("--out", ana.out, "Also write analysis.json/analysis.txt here")->envname("PHISHTRAIN_OUT");

  GenCorpusArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-corpus", "Write a synthetic clustered corpus and its embeddings");
  gen_cmd->add_option("--out", gen.out, "Output directory")->envname("PHISHTRAIN_OUT")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Generator seed")->envname("PHISHTRAIN_SEED")->capture_default_str();
  gen_cmd->add_option("--n-base", gen.n_base, "Base emails (each yields four condition variants)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gen_cmd->add_option("--dim", gen.options.dim, "Embedding dimension")->check(CLI::PositiveNumber)->capture_default_str();
  gen_cmd->add_option("--cluster-size", gen.options.cluster_size, "Base emails per latent cluster")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gen_cmd->add_option("--within-noise", gen.options.within_cluster_noise, "Spread around cluster centres")
      ->capture_default_str();
  gen_cmd->add_option("--variant-noise", gen.options.variant_noise, "Spread between condition variants")
      ->capture_default_str();
  gen_cmd->add_option("--twin-similarity", gen.options.twin_similarity,
                      "Cosine between paired phishing/ham cluster centres (0 = independent)")
      ->capture_default_str();

  EmbedArgs emb;
  auto* embed_cmd = app.add_subcommand(
      "embed", "Fetch embeddings for a corpus from an HTTP provider (token from PHISHTRAIN_EMBED_TOKEN)");
  embed_cmd->add_option("--corpus", emb.corpus, "Email corpus")
      ->envname("PHISHTRAIN_CORPUS")
      ->required()
      ->check(CLI::ExistingFile);
  embed_cmd->add_option("--out", emb.out, "Embeddings JSONL to write")->envname("PHISHTRAIN_OUT")->capture_default_str();
  embed_cmd->add_option("--cache", emb.cache, "Cache file (default: the output file)");
  embed_cmd->add_option("--endpoint", emb.provider.endpoint, "Provider URL")->envname("PHISHTRAIN_EMBED_URL");
  embed_cmd->add_option("--model", emb.provider.model, "Provider model name")->envname("PHISHTRAIN_EMBED_MODEL");
  embed_cmd->add_option("--batch-size", emb.provider.batch_size, "Texts per request")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  embed_cmd->add_option("--concurrency", emb.provider.max_concurrency, "Concurrent requests")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  ServeArgs srv;
  auto* serve = app.add_subcommand("serve", "Run the HTTP training service");
  add_inputs(*serve, srv.inputs);
  serve->add_option("--data-dir", srv.data_dir, "Session log directory")
      ->envname("PHISHTRAIN_DATA_DIR")
      ->capture_default_str();
  serve->add_option("--bind", srv.bind, "HOST:PORT")->envname("PHISHTRAIN_BIND")->capture_default_str();
  serve->add_option("--static-dir", srv.static_dir, "Directory served at / (trainer UI build)")
      ->envname("PHISHTRAIN_STATIC_DIR")
      ->check(CLI::ExistingDirectory);
  serve->add_option("--actions", srv.actions, "Post-read actions offered to trainees")
      ->envname("PHISHTRAIN_ACTIONS")
      ->delimiter(',');
  serve->add_option("--policy", srv.policy, "Default selection policy: random or ibl")
      ->envname("PHISHTRAIN_POLICY")
      ->check(CLI::IsMember({"random", "ibl"}))
      ->capture_default_str();
  serve->add_option("--params", srv.params, "Teacher params JSON")->check(CLI::ExistingFile);
  serve->add_option("--preset", srv.preset, "Teacher params when --params is absent: calibrated or paper")
      ->check(CLI::IsMember({"calibrated", "paper"}))
      ->capture_default_str();
  serve->add_flag("--no-sync", srv.no_sync, "Skip fdatasync after each event (faster, not crash-safe)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (simd != "auto") {
      const simd::Isa isa = simd == "scalar" ? simd::Isa::kScalar : simd == "avx2" ? simd::Isa::kAvx2 : simd::Isa::kNeon;
      if (!simd::isa_available(isa)) throw UsageError("this CPU does not support the " + simd + " kernels");
      simd::set_active_isa(isa);
    }
    if (*simulate) return cmd_simulate(sim, *simulate, out);
    if (*calib) return cmd_calibrate(cal, out);
    if (*analyze_cmd) return cmd_analyze(ana, out);
    if (*gen_cmd) return cmd_gen_corpus(gen, out);
    if (*embed_cmd) return cmd_embed(emb, out);
    if (*serve) return cmd_serve(srv, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
    switch (e.code()) {
      case ErrorCode::kInvalidArgument:
      case ErrorCode::kMissingEmbedding:
      case ErrorCode::kMalformedRecord:
      case ErrorCode::kValidation:
        return kExitUsage;
      default:
        return kExitFailure;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace phishtrain::cli
