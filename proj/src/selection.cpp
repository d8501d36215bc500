#include "phishtrain/selection.hpp"

#include <algorithm>
#include <cmath>

#include "phishtrain/error.hpp"
#include "phishtrain/simd/kernels.hpp"

namespace phishtrain {

using nlohmann::json;

std::string_view to_string(PolicyKind kind) {
  return kind == PolicyKind::kRandom ? "random" : "ibl";
}

PolicyKind parse_policy(std::string_view text) {
  if (text == "random" || text == "RANDOM") return PolicyKind::kRandom;
  if (text == "ibl" || text == "IBL_SELECTION") return PolicyKind::kIblSelection;
  throw Error(ErrorCode::kInvalidArgument, "unknown policy '" + std::string(text) + "'");
}

json to_json(const SelectionPolicy& p) {
  return json{{"policy", to_string(p.kind)}, {"seed", p.seed}, {"params", ibl::params_json(p.params)}};
}

SelectionPolicy policy_from_json(const json& j) {
  SelectionPolicy p;
  p.kind = parse_policy(j.at("policy").get<std::string>());
  p.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("params")) p.params = ibl::params_from_json(j["params"]);
  return p;
}

ibl::OptionId incorrect_option(const EmailRecord& email) {
  return email.label == ibl::kPhishing ? ibl::kHam : ibl::kPhishing;
}

ibl::AttributeVector email_probe(const EmailRecord& email, const EmbeddingTable& embeddings) {
  auto v = embeddings.vector(email.id);
  return {ibl::make_embedding_attribute(email.id, {v.begin(), v.end()})};
}

EmailRecord next_email_random(std::vector<EmailRecord>& unseen, Rng& rng) {
  if (unseen.empty()) throw Error(ErrorCode::kNoUnseenEmails, "no unseen emails left");
  const std::size_t pick = uniform_index(rng, unseen.size());
  EmailRecord chosen = std::move(unseen[pick]);
  unseen.erase(unseen.begin() + static_cast<std::ptrdiff_t>(pick));
  return chosen;
}

namespace {

// Instances of one option laid out for scoring many probes at a fixed trial:
// base-level activations are probe-independent, so they are computed once and
// the per-probe work reduces to one dot-product row sweep.
struct OptionBatch {
  std::vector<double> base;       // per instance
  std::vector<double> utility;    // per instance
  std::vector<bool> exact;        // prepopulated: always matches
  std::vector<std::string> ids;   // embedding ids (empty for prepopulated)
  std::vector<double> rows;       // embeddings of non-prepopulated instances
  std::vector<double> norms;
  std::vector<std::size_t> row_of;  // instance -> row, SIZE_MAX when exact
  bool batchable = true;
};

OptionBatch make_batch(std::span<const ibl::Instance> group, ibl::Trial t, const ibl::IBLParams& params,
                       std::size_t dim) {
  OptionBatch b;
  for (const auto& inst : group) {
    b.base.push_back(ibl::base_level_activation(inst.occurrences, t, params.decay));
    b.utility.push_back(inst.utility);
    b.exact.push_back(inst.prepopulated);
    if (inst.prepopulated) {
      b.ids.emplace_back();
      b.row_of.push_back(SIZE_MAX);
      continue;
    }
    const auto* e = inst.attributes.size() == 1 ? std::get_if<ibl::EmbeddingAttribute>(&inst.attributes[0])
                                                : nullptr;
    if (!e || e->values.size() != dim) {
      b.batchable = false;
      return b;
    }
    b.ids.push_back(e->id);
    b.row_of.push_back(b.norms.size());
    b.rows.insert(b.rows.end(), e->values.begin(), e->values.end());
    b.norms.push_back(e->norm);
  }
  return b;
}

double batch_value(const OptionBatch& b, const ibl::EmbeddingAttribute& probe, const ibl::IBLParams& params,
                   std::vector<double>& dots, std::vector<double>& activations) {
  if (b.base.empty()) return params.default_utility;
  dots.resize(b.norms.size());
  if (!dots.empty()) simd::dot_rows(probe.values, b.rows, dots);
  activations.resize(b.base.size());
  const double w = params.weight(0);
  for (std::size_t i = 0; i < b.base.size(); ++i) {
    double penalty = 0.0;
    if (!b.exact[i]) {
      const double s = (!probe.id.empty() && probe.id == b.ids[i])
                           ? 1.0
                           : clamp_similarity(dots[b.row_of[i]] / (probe.norm * b.norms[b.row_of[i]]));
      penalty = params.mismatch * (w * (s - 1.0));
    }
    activations[i] = b.base[i] + penalty;
  }
  const auto probs = ibl::softmax(activations, params.retrieval_temperature());
  double value = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) value += probs[i] * b.utility[i];
  return value;
}

}  // namespace

IblSelection next_email_ibl(const ibl::MemoryStore& traced_memory, std::span<const EmailRecord> unseen,
                            const EmbeddingTable& embeddings, ibl::Trial t, bool with_misclassification) {
  if (unseen.empty()) throw Error(ErrorCode::kNoUnseenEmails, "no unseen emails left");
  const auto& params = traced_memory.params();

  std::vector<ibl::AttributeVector> probes;
  probes.reserve(unseen.size());
  for (const auto& email : unseen) probes.push_back(email_probe(email, embeddings));

  std::vector<OptionBatch> batches;
  bool batchable = true;
  for (std::uint32_t k = 0; k < traced_memory.option_count(); ++k) {
    batches.push_back(make_batch(traced_memory.instances(ibl::OptionId{k}), t, params, embeddings.dim()));
    batchable = batchable && batches.back().batchable;
  }

  std::vector<double> dots, activations;
  auto value_of = [&](ibl::OptionId option, std::size_t e) {
    if (batchable) {
      return batch_value(batches[option.value], std::get<ibl::EmbeddingAttribute>(probes[e][0]), params,
                         dots, activations);
    }
    return traced_memory.blended_value_noiseless(option, probes[e], t);
  };

  IblSelection out;
  out.scores.resize(unseen.size());
  for (std::size_t e = 0; e < unseen.size(); ++e) {
    const ibl::OptionId wrong = incorrect_option(unseen[e]);
    out.scores[e] = value_of(wrong, e);
    if (with_misclassification) {
      const double right = value_of(unseen[e].label, e);
      const double values[2] = {out.scores[e], right};
      out.misclassification.push_back(ibl::softmax(values, params.choice_temperature)[0]);
    }
  }

  std::size_t best = 0;
  for (std::size_t e = 1; e < unseen.size(); ++e) {
    if (out.scores[e] > out.scores[best] ||
        (out.scores[e] == out.scores[best] && unseen[e].id < unseen[best].id)) {
      best = e;
    }
  }
  out.index = best;
  return out;
}

}  // namespace phishtrain
