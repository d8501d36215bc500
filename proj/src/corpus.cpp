#include "phishtrain/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "phishtrain/error.hpp"
#include "phishtrain/rng.hpp"

namespace phishtrain {

using nlohmann::json;

std::string_view to_string(Author author) { return author == Author::kHuman ? "HUMAN" : "GPT4"; }
std::string_view to_string(Style style) { return style == Style::kPlain ? "PLAIN" : "GPT4_STYLED"; }

Author parse_author(std::string_view text) {
  if (text == "HUMAN") return Author::kHuman;
  if (text == "GPT4") return Author::kGpt4;
  throw Error(ErrorCode::kInvalidArgument, "unknown author '" + std::string(text) + "'");
}

Style parse_style(std::string_view text) {
  if (text == "PLAIN") return Style::kPlain;
  if (text == "GPT4_STYLED") return Style::kGpt4Styled;
  throw Error(ErrorCode::kInvalidArgument, "unknown style '" + std::string(text) + "'");
}

std::string to_string(Condition condition) {
  return std::string(to_string(condition.author)) + "/" + std::string(to_string(condition.style));
}

Condition parse_condition(std::string_view text) {
  const auto slash = text.find('/');
  if (slash == std::string_view::npos) {
    throw Error(ErrorCode::kInvalidArgument,
                "condition must look like AUTHOR/STYLE, got '" + std::string(text) + "'");
  }
  return {parse_author(text.substr(0, slash)), parse_style(text.substr(slash + 1))};
}

json to_json(const EmailRecord& r) {
  json j{{"id", r.id},
         {"base_id", r.base_id},
         {"author", to_string(r.author)},
         {"style", to_string(r.style)},
         {"label", ibl::option_name(r.label)},
         {"subject", r.subject},
         {"sender", r.sender},
         {"body_plain", r.body_plain},
         {"body_markup", nullptr},
         {"cue_tags", r.cue_tags}};
  if (r.body_markup) j["body_markup"] = *r.body_markup;
  return j;
}

EmailRecord email_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kMalformedRecord, "email record must be an object");
  auto str = [&](const char* key) -> std::string {
    if (!j.contains(key) || !j[key].is_string()) {
      const std::string who = j.contains("id") && j["id"].is_string() ? j["id"].get<std::string>() : "?";
      throw Error(ErrorCode::kMalformedRecord,
                  "email '" + who + "': field '" + key + "' missing or not a string");
    }
    return j[key].get<std::string>();
  };
  EmailRecord r;
  r.id = str("id");
  r.base_id = str("base_id");
  r.author = parse_author(str("author"));
  r.style = parse_style(str("style"));
  r.label = ibl::parse_option(str("label"));
  r.subject = str("subject");
  r.sender = str("sender");
  r.body_plain = str("body_plain");
  if (j.contains("body_markup") && !j["body_markup"].is_null()) r.body_markup = str("body_markup");
  if (j.contains("cue_tags")) r.cue_tags = j["cue_tags"].get<std::vector<std::string>>();
  return r;
}

void validate_corpus(std::span<const EmailRecord> corpus) {
  std::vector<std::string> problems;
  std::set<std::string> ids;
  std::set<std::tuple<std::string, Author, Style>> variants;
  std::map<std::string, std::pair<ibl::OptionId, std::string>> base_label;
  std::map<Condition, std::pair<std::size_t, std::size_t>> balance;

  for (const auto& r : corpus) {
    if (!ids.insert(r.id).second) problems.push_back("duplicate email id '" + r.id + "'");
    if (!variants.emplace(r.base_id, r.author, r.style).second) {
      problems.push_back("duplicate (base_id, author, style) for '" + r.id + "' (base " + r.base_id + ", " +
                         to_string(r.condition()) + ")");
    }
    const bool styled = r.style == Style::kGpt4Styled;
    if (styled && !r.body_markup) problems.push_back("styled email '" + r.id + "' lacks body_markup");
    if (!styled && r.body_markup) problems.push_back("plain email '" + r.id + "' carries body_markup");
    auto [it, fresh] = base_label.emplace(r.base_id, std::make_pair(r.label, r.id));
    if (!fresh && it->second.first != r.label) {
      problems.push_back("label of '" + r.id + "' differs from '" + it->second.second +
                         "' within base " + r.base_id);
    }
    auto& counts = balance[r.condition()];
    (r.is_phishing() ? counts.first : counts.second)++;
  }
  for (const auto& [condition, counts] : balance) {
    if (counts.first != counts.second) {
      problems.push_back("label imbalance in " + to_string(condition) + ": " +
                         std::to_string(counts.first) + " phishing vs " +
                         std::to_string(counts.second) + " ham");
    }
  }
  if (!problems.empty()) {
    std::ostringstream msg;
    msg << "corpus validation failed (" << problems.size() << " problem"
        << (problems.size() == 1 ? "" : "s") << "):";
    for (const auto& p : problems) msg << "\n  " << p;
    throw Error(ErrorCode::kValidation, msg.str());
  }
}

std::vector<EmailRecord> parse_corpus(const json& doc) {
  if (!doc.is_array()) throw Error(ErrorCode::kMalformedRecord, "corpus must be a JSON array");
  std::vector<EmailRecord> out;
  out.reserve(doc.size());
  for (const auto& rec : doc) out.push_back(email_from_json(rec));
  validate_corpus(out);
  return out;
}

std::vector<EmailRecord> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open corpus file " + path.string());
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorCode::kMalformedRecord, path.string() + ": invalid JSON");
  return parse_corpus(doc);
}

void save_corpus(std::span<const EmailRecord> corpus, const std::filesystem::path& path) {
  json doc = json::array();
  for (const auto& r : corpus) doc.push_back(to_json(r));
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << doc.dump(1) << '\n';
}

ConditionSet condition_subset(std::span<const EmailRecord> corpus, Condition condition) {
  ConditionSet set{condition, {}};
  std::size_t phishing = 0;
  for (const auto& r : corpus) {
    if (r.condition() != condition) continue;
    set.emails.push_back(r);
    phishing += r.is_phishing();
  }
  if (set.emails.empty()) {
    throw Error(ErrorCode::kEmptySet, "corpus has no emails for condition " + to_string(condition));
  }
  if (2 * phishing != set.emails.size()) {
    throw Error(ErrorCode::kValidation, "condition " + to_string(condition) + " is not label-balanced");
  }
  std::sort(set.emails.begin(), set.emails.end(),
            [](const EmailRecord& a, const EmailRecord& b) { return a.id < b.id; });
  return set;
}

void require_embeddings(std::span<const EmailRecord> emails, const EmbeddingTable& table) {
  for (const auto& r : emails) {
    if (!table.contains(r.id)) {
      throw Error(ErrorCode::kMissingEmbedding, "email '" + r.id + "' has no embedding");
    }
  }
}

std::string embedding_text(const EmailRecord& record) { return record.subject + "\n" + record.body_plain; }

namespace {

constexpr std::array<std::string_view, 6> kPhishingCues{
    "urgent language", "request for credentials", "suspicious link",
    "making an offer",  "spoofed sender",          "attachment lure"};

constexpr std::array<std::string_view, 8> kTopics{"invoice",  "password reset", "delivery",
                                                  "payroll",  "prize",          "security alert",
                                                  "meeting",  "subscription"};

std::vector<double> gaussian_vector(Rng& rng, std::size_t dim, double scale) {
  std::vector<double> v(dim);
  for (double& x : v) x = scale * standard_normal(rng);
  return v;
}

void normalize(std::vector<double>& v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  for (double& x : v) x /= n;
}

std::string pad(std::size_t n, int width) {
  std::string s = std::to_string(n);
  return std::string(width > static_cast<int>(s.size()) ? width - s.size() : 0, '0') + s;
}

}  // namespace

SynthCorpus synth_corpus(std::uint64_t seed, std::size_t n_base, const SynthOptions& options) {
  if (n_base % 2 != 0) throw Error(ErrorCode::kInvalidArgument, "n_base must be even");
  if (options.dim == 0 || options.cluster_size == 0) {
    throw Error(ErrorCode::kInvalidArgument, "synthetic corpus needs dim > 0 and cluster_size > 0");
  }
  Rng rng(derive_seed(seed, {0x5157}));
  const std::size_t per_label = n_base / 2;
  const std::size_t clusters_per_label =
      std::max<std::size_t>(1, (per_label + options.cluster_size - 1) / options.cluster_size);

  auto shared = gaussian_vector(rng, options.dim, 1.0);
  normalize(shared);
  std::array<std::vector<double>, 2> label_dir;
  for (auto& d : label_dir) {
    d = gaussian_vector(rng, options.dim, 1.0);
    normalize(d);
  }

  // centres[label][cluster]; a phishing centre and the ham centre with the
  // same index form a look-alike pair when twin_similarity > 0.
  std::array<std::vector<std::vector<double>>, 2> centres;
  for (std::size_t c = 0; c < clusters_per_label; ++c) {
    auto ham = gaussian_vector(rng, options.dim, 1.0);
    normalize(ham);
    auto phish = gaussian_vector(rng, options.dim, 1.0);
    normalize(phish);
    if (options.twin_similarity > 0.0) {
      // Rotate an independent direction towards the ham centre.
      double along = 0.0;
      for (std::size_t i = 0; i < options.dim; ++i) along += phish[i] * ham[i];
      for (std::size_t i = 0; i < options.dim; ++i) phish[i] -= along * ham[i];
      normalize(phish);
      const double rho = std::min(options.twin_similarity, 1.0);
      const double ortho = std::sqrt(1.0 - rho * rho);
      for (std::size_t i = 0; i < options.dim; ++i) phish[i] = rho * ham[i] + ortho * phish[i];
    }
    centres[ibl::kPhishing.value].push_back(std::move(phish));
    centres[ibl::kHam.value].push_back(std::move(ham));
  }
  for (std::size_t label = 0; label < 2; ++label) {
    for (auto& centre : centres[label]) {
      for (std::size_t i = 0; i < options.dim; ++i) {
        centre[i] += options.shared_weight * shared[i] + options.label_weight * label_dir[label][i];
      }
      normalize(centre);
    }
  }

  SynthCorpus out{{}, EmbeddingTable(EmbeddingTable::Provenance::kFile)};
  const double within = options.within_cluster_noise / std::sqrt(static_cast<double>(options.dim));
  const double variant = options.variant_noise / std::sqrt(static_cast<double>(options.dim));
  const int width = std::max<int>(4, static_cast<int>(std::to_string(n_base).size()));

  for (std::size_t b = 0; b < n_base; ++b) {
    const ibl::OptionId label = (b % 2 == 0) ? ibl::kPhishing : ibl::kHam;
    const std::size_t cluster = (b / 2) % clusters_per_label;
    auto base_vec = centres[label.value][cluster];
    auto jitter = gaussian_vector(rng, options.dim, within);
    for (std::size_t i = 0; i < options.dim; ++i) base_vec[i] += jitter[i];

    const std::string base_id = "b" + pad(b, width);
    const auto topic = kTopics[(cluster * 3 + label.value) % kTopics.size()];
    std::vector<std::string> cues;
    if (label == ibl::kPhishing) {
      cues.emplace_back(kPhishingCues[cluster % kPhishingCues.size()]);
      cues.emplace_back(kPhishingCues[(cluster + 1 + b / 2) % kPhishingCues.size()]);
      if (cues[0] == cues[1]) cues.pop_back();
    }

    for (const Condition condition : kAllConditions) {
      EmailRecord r;
      r.base_id = base_id;
      r.author = condition.author;
      r.style = condition.style;
      r.id = base_id + "-" + (condition.author == Author::kHuman ? "h" : "g") +
             (condition.style == Style::kPlain ? "p" : "s");
      r.label = label;
      const bool phish = label == ibl::kPhishing;
      r.subject = std::string(phish ? "Action required: " : "Re: ") + std::string(topic) + " #" +
                  std::to_string(b);
      r.sender = phish ? "support@" + std::string(topic.substr(0, 4)) + "-accounts.example"
                       : "colleague" + std::to_string(cluster) + "@corp.example";
      std::string body = (condition.author == Author::kHuman ? "Hi,\n\n" : "Dear valued user,\n\n");
      body += phish ? "Your " + std::string(topic) + " needs attention. Please confirm your details "
                      "using the link below within 24 hours."
                    : "Following up on the " + std::string(topic) + " we discussed. Details are "
                      "in the shared folder.";
      body += "\n\nRegards";
      r.body_plain = body;
      if (condition.style == Style::kGpt4Styled) {
        r.body_markup = "<div style=\"font-family:sans-serif;border:1px solid #ccc;padding:12px\">"
                        "<h2 style=\"color:#1a4d8f\">" + r.subject + "</h2><p>" + body + "</p></div>";
      }
      r.cue_tags = cues;

      auto vec = base_vec;
      auto v_jitter = gaussian_vector(rng, options.dim, variant);
      for (std::size_t i = 0; i < options.dim; ++i) vec[i] += v_jitter[i];
      out.embeddings.add(r.id, vec);
      out.emails.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace phishtrain
