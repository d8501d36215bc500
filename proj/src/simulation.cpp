#include "phishtrain/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <sstream>
#include <thread>

#include "phishtrain/error.hpp"
#include "phishtrain/rng.hpp"

namespace phishtrain {

using nlohmann::json;

namespace {

constexpr std::array<ibl::OptionId, 2> kBinaryOptions{ibl::kPhishing, ibl::kHam};

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& body) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = next++; i < n; i = next++) body(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::size_t condition_ordinal(Condition c) {
  return static_cast<std::size_t>(std::find(kAllConditions.begin(), kAllConditions.end(), c) -
                                  kAllConditions.begin());
}

Summary summarize(const std::vector<double>& values) {
  std::vector<double> defined;
  for (double v : values) {
    if (!std::isnan(v)) defined.push_back(v);
  }
  Summary s;
  s.n = defined.size();
  if (!defined.empty()) {
    s.mean = stats::mean(defined);
    s.sd = stats::sample_sd(defined);
  } else {
    s.mean = std::numeric_limits<double>::quiet_NaN();
  }
  return s;
}

SplitSummary summarize_split(const std::vector<AgentOutcome>& agents, SplitAccuracy ImprovementStats::*split) {
  std::vector<double> pre, post, imp;
  for (const auto& a : agents) {
    const SplitAccuracy& s = a.stats.*split;
    pre.push_back(s.pre);
    post.push_back(s.post);
    imp.push_back(100.0 * s.delta);
  }
  return {summarize(pre), summarize(post), summarize(imp)};
}

}  // namespace

ibl::IBLParams calibrated_agent_params() {
  ibl::IBLParams p;
  p.decay = 0.2;
  p.noise = 0.1;
  p.default_utility = 1.0;
  p.choice_temperature = 0.25;
  return p;
}

IblLearner::IblLearner(const ibl::IBLParams& params, std::uint64_t seed)
    : memory_(params, ibl::kBinaryOptionCount, seed) {}

ibl::OptionId IblLearner::classify(const EmailRecord&, const ibl::AttributeVector& probe, ibl::Trial t) {
  memory_.advance_to(t - 1);
  return memory_.choose(kBinaryOptions, probe, ibl::ChoiceMode::kSoftmax).option;
}

void IblLearner::feedback(const EmailRecord&, const ibl::AttributeVector& probe, ibl::OptionId response,
                          double points, ibl::Trial t) {
  memory_.record_outcome(response, probe, points, t);
}

void IblLearner::no_feedback(ibl::Trial t) { memory_.advance_to(t); }

std::vector<TrialRecord> run_session(Learner& learner, const ConditionSet& condition_set,
                                     const EmbeddingTable& embeddings, const SelectionPolicy& policy,
                                     const ProtocolConfig& protocol, std::uint64_t seed) {
  protocol.validate();
  const auto needed = static_cast<std::size_t>(protocol.total());
  if (condition_set.emails.size() < needed) {
    throw Error(ErrorCode::kInsufficientEmails,
                "condition " + to_string(condition_set.condition) + " has " +
                    std::to_string(condition_set.emails.size()) + " emails; the protocol needs " +
                    std::to_string(needed));
  }
  require_embeddings(condition_set.emails, embeddings);

  Rng schedule(derive_seed(seed, {1}));
  std::vector<EmailRecord> unseen = condition_set.emails;
  std::vector<EmailRecord> pre, post;
  for (int i = 0; i < protocol.n_pre; ++i) pre.push_back(next_email_random(unseen, schedule));
  for (int i = 0; i < protocol.n_post; ++i) post.push_back(next_email_random(unseen, schedule));

  std::optional<ibl::MemoryStore> teacher;
  if (policy.kind == PolicyKind::kIblSelection) {
    teacher.emplace(policy.params, ibl::kBinaryOptionCount, derive_seed(seed, {3}));
  }

  std::vector<TrialRecord> log;
  log.reserve(needed);
  auto present = [&](const EmailRecord& email, ibl::Trial t, Block block) {
    const auto probe = email_probe(email, embeddings);
    TrialRecord rec;
    rec.index = t;
    rec.block = block;
    rec.email_id = email.id;
    rec.true_label = email.label;
    rec.response = learner.classify(email, probe, t);
    rec.correct = rec.response == email.label;
    if (block == Block::kTrain) {
      const double points = rec.correct ? protocol.reward_correct : protocol.reward_incorrect;
      rec.points = points;
      learner.feedback(email, probe, rec.response, points, t);
      if (teacher) teacher->record_outcome(rec.response, probe, points, t);
    } else {
      learner.no_feedback(t);
      if (teacher) teacher->advance_to(t);
    }
    log.push_back(std::move(rec));
  };

  ibl::Trial t = 0;
  for (const auto& email : pre) present(email, ++t, Block::kPre);
  for (int i = 0; i < protocol.n_train; ++i) {
    ++t;
    if (teacher) {
      const auto pick = next_email_ibl(*teacher, unseen, embeddings, t);
      EmailRecord email = std::move(unseen[pick.index]);
      unseen.erase(unseen.begin() + static_cast<std::ptrdiff_t>(pick.index));
      present(email, t, Block::kTrain);
    } else {
      present(next_email_random(unseen, schedule), t, Block::kTrain);
    }
  }
  for (const auto& email : post) present(email, ++t, Block::kPost);
  return log;
}

std::vector<TrialRecord> run_session(const ibl::IBLParams& agent_params, const ConditionSet& condition_set,
                                     const EmbeddingTable& embeddings, const SelectionPolicy& policy,
                                     const ProtocolConfig& protocol, std::uint64_t seed) {
  IblLearner learner(agent_params, derive_seed(seed, {2}));
  return run_session(learner, condition_set, embeddings, policy, protocol, seed);
}

std::uint64_t agent_seed(std::uint64_t base_seed, Condition condition, std::size_t agent) {
  return derive_seed(base_seed, {condition_ordinal(condition), agent});
}

const CellReport* SimulationReport::find(Condition condition, PolicyKind policy) const {
  for (const auto& c : cells) {
    if (c.condition == condition && c.policy == policy) return &c;
  }
  return nullptr;
}

SimulationReport run_cohort(const CohortConfig& config, std::span<const EmailRecord> corpus,
                            const EmbeddingTable& embeddings) {
  if (config.n_agents == 0) throw Error(ErrorCode::kInvalidArgument, "cohort needs at least one agent");
  config.agent_params.validate();
  SimulationReport report;
  report.config = config;

  std::vector<ConditionSet> sets;
  for (Condition c : config.conditions) {
    sets.push_back(condition_subset(corpus, c));
    require_embeddings(sets.back().emails, embeddings);
  }

  for (std::size_t ci = 0; ci < sets.size(); ++ci) {
    for (const auto& policy : config.policies) {
      CellReport cell;
      cell.condition = sets[ci].condition;
      cell.policy = policy.kind;
      cell.agents.resize(config.n_agents);
      std::vector<std::vector<TrialRecord>> logs(config.n_agents);
      parallel_for(config.n_agents, config.threads, [&](std::size_t a) {
        const std::uint64_t seed = agent_seed(config.base_seed, cell.condition, a);
        auto log = run_session(config.agent_params, sets[ci], embeddings, policy, config.protocol, seed);
        cell.agents[a] = AgentOutcome{a, seed, improvement_stats(log), phishing_rate(log)};
        if (config.keep_trials) logs[a] = std::move(log);
      });
      cell.overall = summarize_split(cell.agents, &ImprovementStats::overall);
      cell.ham = summarize_split(cell.agents, &ImprovementStats::ham);
      cell.phish = summarize_split(cell.agents, &ImprovementStats::phish);
      report.cells.push_back(std::move(cell));
      if (config.keep_trials) report.trials.push_back(std::move(logs));
    }
  }

  for (const auto& set : sets) {
    const auto* random = report.find(set.condition, PolicyKind::kRandom);
    const auto* ibl_cell = report.find(set.condition, PolicyKind::kIblSelection);
    if (!random || !ibl_cell || config.n_agents < 2) continue;
    std::vector<double> a, b;
    for (const auto& o : ibl_cell->agents) a.push_back(100.0 * o.stats.overall.delta);
    for (const auto& o : random->agents) b.push_back(100.0 * o.stats.overall.delta);
    report.comparisons.push_back({set.condition, stats::welch_t_test(a, b)});
  }
  return report;
}

namespace {

json nullable(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

json to_json(const Summary& s) { return json{{"n", s.n}, {"mean", nullable(s.mean)}, {"sd", nullable(s.sd)}}; }

json to_json(const SplitSummary& s) {
  return json{{"pre_accuracy", to_json(s.pre)},
              {"post_accuracy", to_json(s.post)},
              {"improvement_pp", to_json(s.improvement_pp)}};
}

}  // namespace

json to_json(const SimulationReport& report) {
  json policies = json::array();
  for (const auto& p : report.config.policies) policies.push_back(to_json(p));
  std::vector<std::string> conditions;
  for (auto c : report.config.conditions) conditions.push_back(to_string(c));
  json cells = json::array();
  for (const auto& c : report.cells) {
    std::vector<std::uint64_t> seeds;
    for (const auto& a : c.agents) seeds.push_back(a.seed);
    cells.push_back(json{{"condition", to_string(c.condition)},
                         {"policy", to_string(c.policy)},
                         {"n_agents", c.agents.size()},
                         {"overall", to_json(c.overall)},
                         {"ham", to_json(c.ham)},
                         {"phish", to_json(c.phish)},
                         {"seeds", seeds}});
  }
  json comparisons = json::array();
  for (const auto& cmp : report.comparisons) {
    comparisons.push_back(json{{"condition", to_string(cmp.condition)},
                               {"ibl_minus_random_pp", cmp.welch.mean_difference},
                               {"welch_t", cmp.welch.t},
                               {"welch_df", cmp.welch.df},
                               {"p", cmp.welch.p}});
  }
  return json{{"n_agents", report.config.n_agents},
              {"base_seed", report.config.base_seed},
              {"agent_params", ibl::params_json(report.config.agent_params)},
              {"protocol", to_json(report.config.protocol)},
              {"conditions", conditions},
              {"policies", policies},
              {"cells", cells},
              {"comparisons", comparisons}};
}

std::string to_csv(const SimulationReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "condition,policy,agent,seed,pre,post,improvement,pre_ham,post_ham,improvement_ham,"
         "pre_phish,post_phish,improvement_phish\n";
  auto cell = [&](double v) -> std::ostringstream& {
    if (!std::isnan(v)) out << v;
    return out;
  };
  for (const auto& c : report.cells) {
    for (const auto& a : c.agents) {
      out << to_string(c.condition) << ',' << to_string(c.policy) << ',' << a.agent << ',' << a.seed << ',';
      const auto& s = a.stats;
      cell(s.overall.pre) << ',';
      cell(s.overall.post) << ',';
      cell(100.0 * s.overall.delta) << ',';
      cell(s.ham.pre) << ',';
      cell(s.ham.post) << ',';
      cell(100.0 * s.ham.delta) << ',';
      cell(s.phish.pre) << ',';
      cell(s.phish.post) << ',';
      cell(100.0 * s.phish.delta) << '\n';
    }
  }
  return out.str();
}

std::vector<ParticipantRecord> to_participants(const SimulationReport& report) {
  if (report.trials.size() != report.cells.size()) {
    throw Error(ErrorCode::kInvalidArgument, "simulation report was produced without keep_trials");
  }
  std::vector<ParticipantRecord> out;
  for (std::size_t c = 0; c < report.cells.size(); ++c) {
    const auto& cell = report.cells[c];
    for (std::size_t a = 0; a < cell.agents.size(); ++a) {
      ParticipantRecord r;
      r.participant_id = to_string(cell.condition) + "/" + std::string(to_string(cell.policy)) + "/" +
                         std::to_string(a);
      r.condition = cell.condition;
      r.policy = std::string(to_string(cell.policy));
      r.trials = report.trials[c][a];
      out.push_back(std::move(r));
    }
  }
  return out;
}

CalibrationGrid CalibrationGrid::defaults() {
  CalibrationGrid g;
  for (int i = 1; i <= 20; ++i) g.decay.push_back(i / 10.0);
  for (int i = 1; i <= 5; ++i) g.noise.push_back(i / 10.0);
  g.default_utility = {-1.0, 0.0, 1.0};
  g.choice_temperature = {0.1, 0.25, 0.5};
  return g;
}

ibl::IBLParams CalibrationGrid::point(std::size_t i, const ibl::IBLParams& base) const {
  if (i >= size()) throw Error(ErrorCode::kOutOfRange, "grid index out of range");
  ibl::IBLParams p = base;
  p.choice_temperature = choice_temperature[i % choice_temperature.size()];
  i /= choice_temperature.size();
  p.default_utility = default_utility[i % default_utility.size()];
  i /= default_utility.size();
  p.noise = noise[i % noise.size()];
  i /= noise.size();
  p.decay = decay[i];
  return p;
}

json to_json(const CalibrationGrid& g) {
  return json{{"decay", g.decay},
              {"noise", g.noise},
              {"default_utility", g.default_utility},
              {"choice_temperature", g.choice_temperature}};
}

CalibrationGrid grid_from_json(const json& j) {
  CalibrationGrid g = CalibrationGrid::defaults();
  if (j.contains("decay")) g.decay = j["decay"].get<std::vector<double>>();
  if (j.contains("noise")) g.noise = j["noise"].get<std::vector<double>>();
  if (j.contains("default_utility")) g.default_utility = j["default_utility"].get<std::vector<double>>();
  if (j.contains("choice_temperature")) {
    g.choice_temperature = j["choice_temperature"].get<std::vector<double>>();
  }
  return g;
}

CalibrationResult calibrate(const CalibrationGrid& grid, const std::map<Condition, double>& targets_pp,
                            std::span<const EmailRecord> corpus, const EmbeddingTable& embeddings,
                            std::size_t n_agents, std::uint64_t seed, const ibl::IBLParams& base,
                            const ProtocolConfig& protocol, std::size_t threads) {
  if (grid.size() == 0) throw Error(ErrorCode::kEmptySet, "calibration grid is empty");
  if (targets_pp.empty()) throw Error(ErrorCode::kEmptySet, "calibration needs at least one target");
  if (n_agents == 0) throw Error(ErrorCode::kInvalidArgument, "calibration needs at least one agent");
  for (const auto& [c, v] : targets_pp) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kInvalidArgument, "target for " + to_string(c) + " is not finite");
  }

  std::vector<ConditionSet> sets;
  for (const auto& [c, _] : targets_pp) {
    sets.push_back(condition_subset(corpus, c));
    require_embeddings(sets.back().emails, embeddings);
  }
  const SelectionPolicy random_policy{PolicyKind::kRandom, 0, {}};

  CalibrationResult best;
  best.loss = std::numeric_limits<double>::infinity();
  std::vector<double> improvements(n_agents);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const ibl::IBLParams params = grid.point(g, base);
    params.validate();
    double loss = 0.0;
    std::map<Condition, double> simulated;
    for (const auto& set : sets) {
      parallel_for(n_agents, threads, [&](std::size_t a) {
        const auto log = run_session(params, set, embeddings, random_policy, protocol,
                                     agent_seed(seed, set.condition, a));
        improvements[a] = 100.0 * improvement_stats(log).overall.delta;
      });
      const double mean_pp = stats::mean(improvements);
      simulated[set.condition] = mean_pp;
      const double gap = mean_pp - targets_pp.at(set.condition);
      loss += gap * gap;
    }
    ++best.evaluated;
    if (loss < best.loss) {
      best.loss = loss;
      best.params = params;
      best.best_index = g;
      best.simulated = simulated;
    }
  }
  for (const auto& [c, sim] : best.simulated) best.residuals[c] = sim - targets_pp.at(c);
  return best;
}

json to_json(const CalibrationResult& r) {
  json residuals = json::object();
  json simulated = json::object();
  for (const auto& [c, v] : r.residuals) residuals[to_string(c)] = v;
  for (const auto& [c, v] : r.simulated) simulated[to_string(c)] = v;
  return json{{"params", ibl::params_json(r.params)},
              {"loss", r.loss},
              {"grid_index", r.best_index},
              {"evaluated", r.evaluated},
              {"simulated_improvement_pp", simulated},
              {"residual_pp", residuals}};
}

}  // namespace phishtrain
