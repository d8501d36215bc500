#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phishtrain/corpus.hpp"
#include "phishtrain/protocol.hpp"

namespace phishtrain {

/// Accuracy before and after training for one subset of trials. When either
/// block has no trial in the subset, the accuracies and delta are NaN.
struct SplitAccuracy {
  std::size_t pre_n = 0;
  std::size_t post_n = 0;
  double pre = 0.0;
  double post = 0.0;
  double delta = 0.0;

  bool defined() const { return pre_n > 0 && post_n > 0; }
};

struct ImprovementStats {
  SplitAccuracy overall;
  SplitAccuracy ham;
  SplitAccuracy phish;
};

/// Accuracies as fractions; delta = post - pre. Throws kMissingBlock when the
/// trials lack a PRE or POST block.
ImprovementStats improvement_stats(std::span<const TrialRecord> trials);

/// Undefined accuracies serialize as null.
nlohmann::json to_json(const SplitAccuracy& split);
nlohmann::json to_json(const ImprovementStats& stats);

/// Fraction of responses that are PHISHING.
double phishing_rate(std::span<const TrialRecord> trials);

struct Regression {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::size_t n = 0;
};

/// Ordinary least squares y = intercept + slope * x. R^2 is 0 when y is constant.
Regression linear_regression(std::span<const double> x, std::span<const double> y);

struct AnovaEffect {
  double ss = 0.0;
  double df = 1.0;
  double f = 0.0;
  double p = 1.0;
  double partial_eta_sq = 0.0;
};

struct AnovaTable {
  AnovaEffect author;
  AnovaEffect style;
  AnovaEffect interaction;
  double ss_error = 0.0;
  double df_error = 0.0;
  std::size_t n = 0;
};

/// Between-subjects 2x2 ANOVA with Type-II sums of squares. `cells` follows
/// kAllConditions order. Every cell needs >= 2 observations; zero error
/// variance is reported as kDegenerate.
AnovaTable two_way_anova(const std::array<std::vector<double>, 4>& cells);

/// Mean of four 0-100 proportions. Throws kOutOfRange outside [0, 100].
double ai_identification_score(const std::array<double, 4>& answers);

struct ParticipantRecord {
  std::string participant_id;
  Condition condition;
  /// Set for simulated cohorts; human data leaves it empty.
  std::string policy;
  std::vector<TrialRecord> trials;
  std::optional<double> ai_identification;
};

nlohmann::json to_json(const ParticipantRecord& record);
std::vector<nlohmann::json> to_json(std::span<const ParticipantRecord> records);

/// JSON: array of participant objects. CSV: one row per trial with header
/// participant_id,author,style,policy,ai_identification,t,block,email_id,true_label,response[,confidence,response_ms].
/// Schema violations cite the record index (JSON) or line number (CSV).
std::vector<ParticipantRecord> load_participants(const std::filesystem::path& path);
std::vector<ParticipantRecord> parse_participants_json(const nlohmann::json& doc);
std::vector<ParticipantRecord> parse_participants_csv(std::istream& in);
void save_participants(std::span<const ParticipantRecord> records, const std::filesystem::path& path);

struct ConditionSummary {
  Condition condition;
  std::string policy;
  std::size_t n = 0;
  double pre_mean = 0.0;
  double post_mean = 0.0;
  double improvement_mean = 0.0;
  double improvement_sd = 0.0;
  double ham_improvement_mean = 0.0;
  double phish_improvement_mean = 0.0;
  double phishing_rate_mean = 0.0;
  /// Phishing rate regressed on AI identification, when >= 2 scored participants.
  std::optional<Regression> ai_regression;
};

struct AnalysisReport {
  std::vector<ConditionSummary> conditions;
  /// One ANOVA per policy group (the empty policy for human data), when computable.
  std::vector<std::pair<std::string, AnovaTable>> anova;
  std::vector<std::pair<std::string, std::string>> anova_errors;
  /// Phishing rate vs AI identification across all scored participants.
  std::optional<Regression> ai_regression;
  /// Uncorrected pairwise differences of mean improvement, per policy group.
  struct Pairwise {
    std::string policy;
    Condition a;
    Condition b;
    double difference = 0.0;
  };
  std::vector<Pairwise> pairwise;
};

AnalysisReport analyze(std::span<const ParticipantRecord> participants);
nlohmann::json to_json(const AnalysisReport& report);
std::string format_report(const AnalysisReport& report);

}  // namespace phishtrain
