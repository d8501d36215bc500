#include "phishtrain/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "phishtrain/error.hpp"
#include "phishtrain/stats.hpp"

namespace phishtrain {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Tally {
  std::size_t pre_n = 0, pre_ok = 0, post_n = 0, post_ok = 0;

  SplitAccuracy finish() const {
    SplitAccuracy s;
    s.pre_n = pre_n;
    s.post_n = post_n;
    s.pre = pre_n ? static_cast<double>(pre_ok) / static_cast<double>(pre_n) : kNaN;
    s.post = post_n ? static_cast<double>(post_ok) / static_cast<double>(post_n) : kNaN;
    s.delta = s.defined() ? s.post - s.pre : kNaN;
    return s;
  }
};

}  // namespace

ImprovementStats improvement_stats(std::span<const TrialRecord> trials) {
  Tally overall, ham, phish;
  for (const auto& t : trials) {
    if (t.block == Block::kTrain) continue;
    for (Tally* tally : {&overall, t.true_label == ibl::kHam ? &ham : &phish}) {
      if (t.block == Block::kPre) {
        ++tally->pre_n;
        tally->pre_ok += t.correct;
      } else {
        ++tally->post_n;
        tally->post_ok += t.correct;
      }
    }
  }
  if (overall.pre_n == 0) throw Error(ErrorCode::kMissingBlock, "trials contain no PRE block");
  if (overall.post_n == 0) throw Error(ErrorCode::kMissingBlock, "trials contain no POST block");
  return {overall.finish(), ham.finish(), phish.finish()};
}

double phishing_rate(std::span<const TrialRecord> trials) {
  if (trials.empty()) throw Error(ErrorCode::kEmptySet, "phishing_rate of no trials");
  std::size_t phishing = 0;
  for (const auto& t : trials) phishing += t.response == ibl::kPhishing;
  return static_cast<double>(phishing) / static_cast<double>(trials.size());
}

Regression linear_regression(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::kShapeMismatch, "x and y lengths differ");
  if (x.size() < 2) throw Error(ErrorCode::kInvalidArgument, "regression needs at least two points");
  const double mx = stats::mean(x);
  const double my = stats::mean(y);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx == 0.0) throw Error(ErrorCode::kDegenerate, "regression x values are constant");
  Regression r;
  r.n = x.size();
  r.slope = sxy / sxx;
  r.intercept = my - r.slope * mx;
  r.r_squared = syy == 0.0 ? 0.0 : std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0);
  return r;
}

namespace {

struct Cell {
  double n = 0.0;
  double mean = 0.0;
  double within_ss = 0.0;
};

// Residual sum of squares of a model that fits `fitted` per cell.
double rss_from_fit(const std::array<Cell, 4>& cells, const std::array<double, 4>& fitted) {
  double rss = 0.0;
  for (std::size_t c = 0; c < 4; ++c) {
    const double gap = cells[c].mean - fitted[c];
    rss += cells[c].within_ss + cells[c].n * gap * gap;
  }
  return rss;
}

// Weighted fit of cell means on the listed indicator columns (plus intercept).
// Cell c sits at author = c / 2, style = c % 2.
std::array<double, 4> fit_cells(const std::array<Cell, 4>& cells, bool use_author, bool use_style) {
  std::vector<std::array<double, 3>> design(4);
  std::size_t p = 1 + use_author + use_style;
  for (std::size_t c = 0; c < 4; ++c) {
    std::size_t col = 0;
    design[c][col++] = 1.0;
    if (use_author) design[c][col++] = static_cast<double>(c / 2);
    if (use_style) design[c][col++] = static_cast<double>(c % 2);
  }
  // Normal equations (X' W X) beta = X' W m, solved by Gaussian elimination.
  double a[3][4] = {};
  for (std::size_t c = 0; c < 4; ++c) {
    for (std::size_t i = 0; i < p; ++i) {
      for (std::size_t j = 0; j < p; ++j) a[i][j] += cells[c].n * design[c][i] * design[c][j];
      a[i][p] += cells[c].n * design[c][i] * cells[c].mean;
    }
  }
  for (std::size_t col = 0; col < p; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < p; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    }
    for (std::size_t k = 0; k <= p; ++k) std::swap(a[col][k], a[pivot][k]);
    for (std::size_t r = 0; r < p; ++r) {
      if (r == col) continue;
      const double factor = a[r][col] / a[col][col];
      for (std::size_t k = col; k <= p; ++k) a[r][k] -= factor * a[col][k];
    }
  }
  std::array<double, 3> beta{};
  for (std::size_t i = 0; i < p; ++i) beta[i] = a[i][p] / a[i][i];
  std::array<double, 4> fitted{};
  for (std::size_t c = 0; c < 4; ++c) {
    for (std::size_t i = 0; i < p; ++i) fitted[c] += design[c][i] * beta[i];
  }
  return fitted;
}

AnovaEffect make_effect(double ss, double ss_error, double df_error) {
  AnovaEffect e;
  e.ss = std::max(0.0, ss);
  e.df = 1.0;
  e.f = (e.ss / e.df) / (ss_error / df_error);
  e.p = stats::f_survival(e.f, e.df, df_error);
  e.partial_eta_sq = e.ss / (e.ss + ss_error);
  return e;
}

}  // namespace

AnovaTable two_way_anova(const std::array<std::vector<double>, 4>& samples) {
  std::array<Cell, 4> cells;
  double grand_sum = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < 4; ++c) {
    if (samples[c].size() < 2) {
      throw Error(ErrorCode::kEmptySet, "ANOVA cell " + to_string(kAllConditions[c]) +
                                            " needs at least two observations");
    }
    for (double v : samples[c]) grand_sum += v;
    n += samples[c].size();
  }
  // Centre on the grand mean so sums of squares do not cancel catastrophically.
  const double grand = grand_sum / static_cast<double>(n);
  for (std::size_t c = 0; c < 4; ++c) {
    std::vector<double> centred(samples[c].size());
    for (std::size_t i = 0; i < centred.size(); ++i) centred[i] = samples[c][i] - grand;
    cells[c].n = static_cast<double>(centred.size());
    cells[c].mean = stats::mean(centred);
    for (double v : centred) cells[c].within_ss += (v - cells[c].mean) * (v - cells[c].mean);
  }

  AnovaTable table;
  table.n = n;
  table.df_error = static_cast<double>(n) - 4.0;
  table.ss_error = 0.0;
  for (const auto& c : cells) table.ss_error += c.within_ss;
  if (table.ss_error <= 0.0) {
    throw Error(ErrorCode::kDegenerate, "zero error variance: every cell is constant");
  }
  const double rss_author = rss_from_fit(cells, fit_cells(cells, true, false));
  const double rss_style = rss_from_fit(cells, fit_cells(cells, false, true));
  const double rss_additive = rss_from_fit(cells, fit_cells(cells, true, true));

  table.author = make_effect(rss_style - rss_additive, table.ss_error, table.df_error);
  table.style = make_effect(rss_author - rss_additive, table.ss_error, table.df_error);
  table.interaction = make_effect(rss_additive - table.ss_error, table.ss_error, table.df_error);
  return table;
}

double ai_identification_score(const std::array<double, 4>& answers) {
  double sum = 0.0;
  for (double a : answers) {
    if (!(a >= 0.0 && a <= 100.0)) {
      throw Error(ErrorCode::kOutOfRange, "questionnaire answers must lie in [0, 100]");
    }
    sum += a;
  }
  return sum / 4.0;
}

json to_json(const ParticipantRecord& r) {
  json trials = json::array();
  for (const auto& t : r.trials) trials.push_back(to_json(t));
  json j{{"participant_id", r.participant_id},
         {"author", to_string(r.condition.author)},
         {"style", to_string(r.condition.style)},
         {"ai_identification", nullptr},
         {"trials", std::move(trials)}};
  if (!r.policy.empty()) j["policy"] = r.policy;
  if (r.ai_identification) j["ai_identification"] = *r.ai_identification;
  return j;
}

std::vector<json> to_json(std::span<const ParticipantRecord> records) {
  std::vector<json> out;
  for (const auto& r : records) out.push_back(to_json(r));
  return out;
}

namespace {

void check_ai(const std::optional<double>& ai, const std::string& where) {
  if (ai && !(*ai >= 0.0 && *ai <= 100.0)) {
    throw Error(ErrorCode::kMalformedRecord, where + ": ai_identification outside [0, 100]");
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        fields.back() += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.emplace_back();
    } else if (ch != '\r') {
      fields.back() += ch;
    }
  }
  return fields;
}

}  // namespace

std::vector<ParticipantRecord> parse_participants_json(const json& doc) {
  if (!doc.is_array()) throw Error(ErrorCode::kMalformedRecord, "participant file must be a JSON array");
  std::vector<ParticipantRecord> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const std::string where = "record " + std::to_string(i + 1);
    try {
      const auto& j = doc[i];
      ParticipantRecord r;
      r.participant_id = j.at("participant_id").get<std::string>();
      r.condition = {parse_author(j.at("author").get<std::string>()),
                     parse_style(j.at("style").get<std::string>())};
      r.policy = j.value("policy", std::string{});
      if (j.contains("ai_identification") && !j["ai_identification"].is_null()) {
        r.ai_identification = j["ai_identification"].get<double>();
      }
      check_ai(r.ai_identification, where);
      for (const auto& t : j.at("trials")) r.trials.push_back(trial_from_json(t));
      out.push_back(std::move(r));
    } catch (const Error& e) {
      throw Error(ErrorCode::kMalformedRecord, where + ": " + e.what());
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kMalformedRecord, where + ": " + e.what());
    }
  }
  return out;
}

std::vector<ParticipantRecord> parse_participants_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kMalformedRecord, "line 1: missing CSV header");
  const auto header = split_csv_line(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* required : {"participant_id", "author", "style", "t", "block", "email_id",
                               "true_label", "response"}) {
    if (!col.contains(required)) {
      throw Error(ErrorCode::kMalformedRecord, std::string("line 1: missing column '") + required + "'");
    }
  }
  std::vector<ParticipantRecord> out;
  std::map<std::string, std::size_t> index;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "line " + std::to_string(line_no);
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) {
      throw Error(ErrorCode::kMalformedRecord, where + ": expected " + std::to_string(header.size()) +
                                                   " fields, found " + std::to_string(f.size()));
    }
    auto field = [&](const char* name) -> std::string {
      auto it = col.find(name);
      return it == col.end() ? std::string{} : f[it->second];
    };
    try {
      const std::string pid = field("participant_id");
      if (pid.empty()) throw Error(ErrorCode::kMalformedRecord, "empty participant_id");
      Condition condition{parse_author(field("author")), parse_style(field("style"))};
      std::optional<double> ai;
      if (auto s = field("ai_identification"); !s.empty()) ai = std::stod(s);
      check_ai(ai, where);
      auto [it, fresh] = index.emplace(pid, out.size());
      if (fresh) out.push_back(ParticipantRecord{pid, condition, field("policy"), {}, ai});
      auto& rec = out[it->second];
      if (rec.condition != condition || rec.policy != field("policy") || rec.ai_identification != ai) {
        throw Error(ErrorCode::kMalformedRecord, "participant '" + pid + "' changes condition, policy or score");
      }
      TrialRecord t;
      std::size_t used = 0;
      const std::string t_text = field("t");
      t.index = std::stoll(t_text, &used);
      if (used != t_text.size()) throw Error(ErrorCode::kMalformedRecord, "bad trial index '" + t_text + "'");
      t.block = parse_block(field("block"));
      t.email_id = field("email_id");
      t.true_label = ibl::parse_option(field("true_label"));
      t.response = ibl::parse_option(field("response"));
      t.correct = t.true_label == t.response;
      if (t.block == Block::kTrain) t.points = t.correct ? 1.0 : -1.0;
      if (auto s = field("confidence"); !s.empty()) t.confidence = std::stoi(s);
      if (auto s = field("response_ms"); !s.empty()) t.response_ms = std::stod(s);
      rec.trials.push_back(std::move(t));
    } catch (const Error& e) {
      throw Error(ErrorCode::kMalformedRecord, where + ": " + e.what());
    } catch (const std::exception& e) {
      throw Error(ErrorCode::kMalformedRecord, where + ": unparsable number (" + e.what() + ")");
    }
  }
  return out;
}

std::vector<ParticipantRecord> load_participants(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open participant file " + path.string());
  if (path.extension() == ".csv") return parse_participants_csv(in);
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorCode::kMalformedRecord, path.string() + ": invalid JSON");
  return parse_participants_json(doc);
}

void save_participants(std::span<const ParticipantRecord> records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  if (path.extension() != ".csv") {
    out << json(to_json(records)).dump() << '\n';
    return;
  }
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  };
  out << std::setprecision(17);
  out << "participant_id,author,style,policy,ai_identification,t,block,email_id,true_label,response,confidence,"
         "response_ms\n";
  for (const auto& r : records) {
    for (const auto& t : r.trials) {
      out << quote(r.participant_id) << ',' << to_string(r.condition.author) << ',' << to_string(r.condition.style)
          << ',' << quote(r.policy) << ',';
      if (r.ai_identification) out << *r.ai_identification;
      out << ',' << t.index << ',' << to_string(t.block) << ',' << quote(t.email_id) << ','
          << ibl::option_name(t.true_label) << ',' << ibl::option_name(t.response) << ',';
      if (t.confidence) out << *t.confidence;
      out << ',';
      if (t.response_ms) out << *t.response_ms;
      out << '\n';
    }
  }
}

namespace {

double mean_defined(const std::vector<double>& xs) {
  double s = 0.0;
  std::size_t n = 0;
  for (double x : xs) {
    if (!std::isnan(x)) {
      s += x;
      ++n;
    }
  }
  return n ? s / static_cast<double>(n) : kNaN;
}

std::size_t condition_index(Condition c) {
  return static_cast<std::size_t>(std::find(kAllConditions.begin(), kAllConditions.end(), c) -
                                  kAllConditions.begin());
}

}  // namespace

AnalysisReport analyze(std::span<const ParticipantRecord> participants) {
  if (participants.empty()) throw Error(ErrorCode::kEmptySet, "no participants to analyze");
  struct Group {
    std::vector<double> pre, post, delta, ham, phish, rate, ai_x, ai_y;
  };
  std::map<std::pair<std::string, std::size_t>, Group> groups;
  std::vector<double> all_ai, all_rate;
  for (const auto& p : participants) {
    const auto stats = improvement_stats(p.trials);
    auto& g = groups[{p.policy, condition_index(p.condition)}];
    g.pre.push_back(stats.overall.pre);
    g.post.push_back(stats.overall.post);
    g.delta.push_back(stats.overall.delta);
    g.ham.push_back(stats.ham.delta);
    g.phish.push_back(stats.phish.delta);
    const double rate = phishing_rate(p.trials);
    g.rate.push_back(rate);
    if (p.ai_identification) {
      g.ai_x.push_back(*p.ai_identification);
      g.ai_y.push_back(rate);
      all_ai.push_back(*p.ai_identification);
      all_rate.push_back(rate);
    }
  }

  auto try_regression = [](const std::vector<double>& x, const std::vector<double>& y) -> std::optional<Regression> {
    if (x.size() < 2) return std::nullopt;
    try {
      return linear_regression(x, y);
    } catch (const Error&) {
      return std::nullopt;
    }
  };

  AnalysisReport report;
  std::map<std::string, std::array<std::vector<double>, 4>> anova_cells;
  for (const auto& [key, g] : groups) {
    ConditionSummary s;
    s.policy = key.first;
    s.condition = kAllConditions[key.second];
    s.n = g.delta.size();
    s.pre_mean = stats::mean(g.pre);
    s.post_mean = stats::mean(g.post);
    s.improvement_mean = stats::mean(g.delta);
    s.improvement_sd = stats::sample_sd(g.delta);
    s.ham_improvement_mean = mean_defined(g.ham);
    s.phish_improvement_mean = mean_defined(g.phish);
    s.phishing_rate_mean = stats::mean(g.rate);
    s.ai_regression = try_regression(g.ai_x, g.ai_y);
    report.conditions.push_back(s);
    anova_cells[key.first][key.second] = g.delta;
  }
  for (const auto& [policy, cells] : anova_cells) {
    try {
      report.anova.emplace_back(policy, two_way_anova(cells));
    } catch (const Error& e) {
      report.anova_errors.emplace_back(policy, e.what());
    }
  }
  report.ai_regression = try_regression(all_ai, all_rate);
  for (std::size_t i = 0; i < report.conditions.size(); ++i) {
    for (std::size_t j = i + 1; j < report.conditions.size(); ++j) {
      const auto& a = report.conditions[i];
      const auto& b = report.conditions[j];
      if (a.policy != b.policy) continue;
      report.pairwise.push_back({a.policy, a.condition, b.condition, a.improvement_mean - b.improvement_mean});
    }
  }
  return report;
}

namespace {

json nullable(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

json to_json(const Regression& r) {
  return json{{"slope", r.slope}, {"intercept", r.intercept}, {"r_squared", r.r_squared}, {"n", r.n}};
}

json to_json(const AnovaEffect& e) {
  return json{{"ss", e.ss}, {"df", e.df}, {"F", e.f}, {"p", e.p}, {"partial_eta_sq", e.partial_eta_sq}};
}

}  // namespace

json to_json(const SplitAccuracy& split) {
  return json{{"pre_n", split.pre_n},
              {"post_n", split.post_n},
              {"pre", nullable(split.pre)},
              {"post", nullable(split.post)},
              {"delta", nullable(split.delta)}};
}

json to_json(const ImprovementStats& stats) {
  return json{{"overall", to_json(stats.overall)}, {"ham", to_json(stats.ham)}, {"phish", to_json(stats.phish)}};
}

json to_json(const AnalysisReport& report) {
  json conditions = json::array();
  for (const auto& c : report.conditions) {
    json j{{"condition", to_string(c.condition)},
           {"policy", c.policy},
           {"n", c.n},
           {"pre_accuracy", c.pre_mean},
           {"post_accuracy", c.post_mean},
           {"improvement", c.improvement_mean},
           {"improvement_sd", c.improvement_sd},
           {"ham_improvement", nullable(c.ham_improvement_mean)},
           {"phish_improvement", nullable(c.phish_improvement_mean)},
           {"phishing_rate", c.phishing_rate_mean},
           {"ai_regression", nullptr}};
    if (c.ai_regression) j["ai_regression"] = to_json(*c.ai_regression);
    conditions.push_back(std::move(j));
  }
  json anova = json::array();
  for (const auto& [policy, t] : report.anova) {
    anova.push_back(json{{"policy", policy},
                         {"author", to_json(t.author)},
                         {"style", to_json(t.style)},
                         {"interaction", to_json(t.interaction)},
                         {"ss_error", t.ss_error},
                         {"df_error", t.df_error},
                         {"n", t.n}});
  }
  json errors = json::array();
  for (const auto& [policy, msg] : report.anova_errors) errors.push_back({{"policy", policy}, {"error", msg}});
  json pairwise = json::array();
  for (const auto& p : report.pairwise) {
    pairwise.push_back({{"policy", p.policy},
                        {"a", to_string(p.a)},
                        {"b", to_string(p.b)},
                        {"difference", p.difference}});
  }
  return json{{"conditions", std::move(conditions)},
              {"anova", std::move(anova)},
              {"anova_errors", std::move(errors)},
              {"ai_regression", report.ai_regression ? to_json(*report.ai_regression) : json(nullptr)},
              {"pairwise_uncorrected", std::move(pairwise)}};
}

std::string format_report(const AnalysisReport& report) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << "Improvement by condition (accuracy fractions; delta = post - pre)\n";
  out << std::left << std::setw(20) << "condition" << std::setw(8) << "policy" << std::setw(6) << "n"
      << std::setw(10) << "pre" << std::setw(10) << "post" << std::setw(10) << "delta" << std::setw(10)
      << "sd" << std::setw(10) << "ham" << std::setw(10) << "phish" << "phish_rate\n";
  for (const auto& c : report.conditions) {
    out << std::setw(20) << to_string(c.condition) << std::setw(8) << (c.policy.empty() ? "-" : c.policy)
        << std::setw(6) << c.n << std::setw(10) << c.pre_mean << std::setw(10) << c.post_mean << std::setw(10)
        << c.improvement_mean << std::setw(10) << c.improvement_sd << std::setw(10) << c.ham_improvement_mean
        << std::setw(10) << c.phish_improvement_mean << c.phishing_rate_mean << "\n";
  }
  for (const auto& [policy, t] : report.anova) {
    out << "\nTwo-way ANOVA on improvement (Type II SS)" << (policy.empty() ? "" : ", policy " + policy) << "\n";
    out << std::setw(14) << "effect" << std::setw(12) << "F" << std::setw(12) << "p" << "partial_eta_sq\n";
    for (const auto& [name, e] : {std::pair{"author", t.author}, std::pair{"style", t.style},
                                  std::pair{"interaction", t.interaction}}) {
      out << std::setw(14) << name << std::setw(12) << e.f << std::setw(12) << e.p << e.partial_eta_sq << "\n";
    }
    out << "error df " << t.df_error << "\n";
  }
  for (const auto& [policy, msg] : report.anova_errors) {
    out << "\nANOVA unavailable" << (policy.empty() ? "" : " for policy " + policy) << ": " << msg << "\n";
  }
  if (report.ai_regression) {
    const auto& r = *report.ai_regression;
    out << "\nPhishing rate vs AI identification: slope " << r.slope << ", intercept " << r.intercept
        << ", R^2 " << r.r_squared << " (n=" << r.n << ")\n";
  }
  if (!report.pairwise.empty()) {
    out << "\nPairwise improvement differences (uncorrected, no multiplicity adjustment)\n";
    for (const auto& p : report.pairwise) {
      out << "  " << (p.policy.empty() ? "" : p.policy + ": ") << to_string(p.a) << " - " << to_string(p.b)
          << " = " << p.difference << "\n";
    }
  }
  return out.str();
}

}  // namespace phishtrain
