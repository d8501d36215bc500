#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phishtrain/analysis.hpp"
#include "phishtrain/corpus.hpp"
#include "phishtrain/embeddings.hpp"
#include "phishtrain/ibl/memory.hpp"
#include "phishtrain/protocol.hpp"
#include "phishtrain/selection.hpp"
#include "phishtrain/stats.hpp"

namespace phishtrain {

/// Agent parameters for cohort simulations: the point of the default
/// calibration grid (d = 0.2, sigma = 0.1, u0 = +1, beta = 0.25) at which
/// retrieval is driven by similarity rather than recency, so training on one
/// email carries over to its neighbours. The library-wide IBLParams defaults
/// keep the classic ACT-R values (d = 0.5, sigma = 0.25).
ibl::IBLParams calibrated_agent_params();

/// A simulated trainee.
class Learner {
 public:
  virtual ~Learner() = default;
  virtual ibl::OptionId classify(const EmailRecord& email, const ibl::AttributeVector& probe, ibl::Trial t) = 0;
  /// Feedback-block outcome for the trial just classified.
  virtual void feedback(const EmailRecord& email, const ibl::AttributeVector& probe, ibl::OptionId response,
                        double points, ibl::Trial t) = 0;
  /// A trial without feedback has passed.
  virtual void no_feedback(ibl::Trial t) = 0;
};

/// Learner backed by an IBL memory choosing by softmax over blended values.
class IblLearner final : public Learner {
 public:
  IblLearner(const ibl::IBLParams& params, std::uint64_t seed);

  ibl::OptionId classify(const EmailRecord& email, const ibl::AttributeVector& probe, ibl::Trial t) override;
  void feedback(const EmailRecord& email, const ibl::AttributeVector& probe, ibl::OptionId response,
                double points, ibl::Trial t) override;
  void no_feedback(ibl::Trial t) override;

  const ibl::MemoryStore& memory() const { return memory_; }

 private:
  ibl::MemoryStore memory_;
};

/// Runs one pre/train/post session. Pre and post emails are drawn at random
/// from the pool before training; the policy picks training emails from the rest.
std::vector<TrialRecord> run_session(Learner& learner, const ConditionSet& condition_set,
                                     const EmbeddingTable& embeddings, const SelectionPolicy& policy,
                                     const ProtocolConfig& protocol, std::uint64_t seed);

std::vector<TrialRecord> run_session(const ibl::IBLParams& agent_params, const ConditionSet& condition_set,
                                     const EmbeddingTable& embeddings, const SelectionPolicy& policy,
                                     const ProtocolConfig& protocol, std::uint64_t seed);

struct Summary {
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;
};

/// Accuracy summaries as fractions, improvement in percentage points.
struct SplitSummary {
  Summary pre;
  Summary post;
  Summary improvement_pp;
};

struct AgentOutcome {
  std::size_t agent = 0;
  std::uint64_t seed = 0;
  ImprovementStats stats;
  double phishing_rate = 0.0;
};

struct CellReport {
  Condition condition;
  PolicyKind policy = PolicyKind::kRandom;
  std::vector<AgentOutcome> agents;
  SplitSummary overall;
  SplitSummary ham;
  SplitSummary phish;
};

struct PolicyComparison {
  Condition condition;
  /// IBL selection minus random, percentage points.
  stats::WelchResult welch;
};

struct CohortConfig {
  std::size_t n_agents = 100;
  std::uint64_t base_seed = 1;
  ibl::IBLParams agent_params = calibrated_agent_params();
  ProtocolConfig protocol;
  std::vector<Condition> conditions{kAllConditions.begin(), kAllConditions.end()};
  /// The IBL teacher's params should describe the learner it traces.
  std::vector<SelectionPolicy> policies{SelectionPolicy{PolicyKind::kRandom, 0, calibrated_agent_params()},
                                        SelectionPolicy{PolicyKind::kIblSelection, 0, calibrated_agent_params()}};
  /// 0 = hardware concurrency.
  std::size_t threads = 0;
  /// Keep per-agent trial logs in the report (for export).
  bool keep_trials = false;
};

struct SimulationReport {
  CohortConfig config;
  std::vector<CellReport> cells;
  std::vector<PolicyComparison> comparisons;
  /// Per-agent trial logs, parallel to cells[i].agents, when keep_trials is set.
  std::vector<std::vector<std::vector<TrialRecord>>> trials;

  const CellReport* find(Condition condition, PolicyKind policy) const;
};

/// Seed of agent `agent` in condition `condition`; identical across policies.
std::uint64_t agent_seed(std::uint64_t base_seed, Condition condition, std::size_t agent);

SimulationReport run_cohort(const CohortConfig& config, std::span<const EmailRecord> corpus,
                            const EmbeddingTable& embeddings);

nlohmann::json to_json(const SimulationReport& report);
/// condition,policy,agent,seed,pre,post,improvement,pre_ham,post_ham,improvement_ham,pre_phish,post_phish,improvement_phish
std::string to_csv(const SimulationReport& report);
/// Per-agent logs as analysis input; requires keep_trials.
std::vector<ParticipantRecord> to_participants(const SimulationReport& report);

struct CalibrationGrid {
  std::vector<double> decay;
  std::vector<double> noise;
  std::vector<double> default_utility;
  std::vector<double> choice_temperature;

  std::size_t size() const {
    return decay.size() * noise.size() * default_utility.size() * choice_temperature.size();
  }
  /// d in 0.1..2.0 step 0.1, sigma in 0.1..0.5 step 0.1, u0 in {-1, 0, 1}, beta in {0.1, 0.25, 0.5}.
  static CalibrationGrid defaults();
  /// Point `i` in grid order (decay slowest, choice temperature fastest) applied over `base`.
  ibl::IBLParams point(std::size_t i, const ibl::IBLParams& base) const;
};

nlohmann::json to_json(const CalibrationGrid& grid);
CalibrationGrid grid_from_json(const nlohmann::json& doc);

struct CalibrationResult {
  ibl::IBLParams params;
  double loss = 0.0;
  std::size_t best_index = 0;
  std::size_t evaluated = 0;
  /// Simulated minus target improvement, percentage points.
  std::map<Condition, double> residuals;
  std::map<Condition, double> simulated;
};

/// Exhaustive grid search under random selection minimizing the summed
/// squared gap between simulated and target mean improvement (percentage
/// points) over the targeted conditions. Ties keep the earliest grid point.
CalibrationResult calibrate(const CalibrationGrid& grid, const std::map<Condition, double>& targets_pp,
                            std::span<const EmailRecord> corpus, const EmbeddingTable& embeddings,
                            std::size_t n_agents, std::uint64_t seed, const ibl::IBLParams& base = {},
                            const ProtocolConfig& protocol = {}, std::size_t threads = 0);

nlohmann::json to_json(const CalibrationResult& result);

}  // namespace phishtrain
