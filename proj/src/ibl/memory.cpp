#include "phishtrain/ibl/memory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "phishtrain/embeddings.hpp"
#include "phishtrain/error.hpp"
#include "phishtrain/simd/kernels.hpp"

namespace phishtrain::ibl {

std::string_view option_name(OptionId option) {
  if (option == kPhishing) return "PHISHING";
  if (option == kHam) return "HAM";
  return "OPTION";
}

OptionId parse_option(std::string_view name) {
  if (name == "PHISHING" || name == "phishing") return kPhishing;
  if (name == "HAM" || name == "ham") return kHam;
  throw Error(ErrorCode::kInvalidArgument, "unknown option '" + std::string(name) + "'");
}

EmbeddingAttribute make_embedding_attribute(std::string id, std::vector<double> values) {
  const double norm = std::sqrt(simd::squared_norm(values));
  if (norm == 0.0 || !std::isfinite(norm)) {
    throw Error(ErrorCode::kZeroVector, "embedding attribute '" + id + "' has no direction");
  }
  return EmbeddingAttribute{std::move(id), std::move(values), norm};
}

double attribute_similarity(const Attribute& probe, const Attribute& stored) {
  if (probe.index() != stored.index()) {
    throw Error(ErrorCode::kShapeMismatch, "attribute kinds differ between probe and instance");
  }
  if (const auto* p = std::get_if<EmbeddingAttribute>(&probe)) {
    const auto& s = std::get<EmbeddingAttribute>(stored);
    if (p->values.size() != s.values.size()) {
      throw Error(ErrorCode::kShapeMismatch, "embedding dims differ between probe and instance");
    }
    if (!p->id.empty() && p->id == s.id) return 1.0;
    return clamp_similarity(simd::dot(p->values, s.values) / (p->norm * s.norm));
  }
  const double diff = std::abs(std::get<ScalarAttribute>(probe).value -
                               std::get<ScalarAttribute>(stored).value);
  return std::max(0.0, 1.0 - diff);
}

bool same_attribute_value(const Attribute& a, const Attribute& b) {
  if (a.index() != b.index()) return false;
  if (const auto* ea = std::get_if<EmbeddingAttribute>(&a)) {
    const auto& eb = std::get<EmbeddingAttribute>(b);
    if (!ea->id.empty() || !eb.id.empty()) return ea->id == eb.id;
    return ea->values == eb.values;
  }
  return std::get<ScalarAttribute>(a).value == std::get<ScalarAttribute>(b).value;
}

double IBLParams::retrieval_temperature() const {
  return temperature.value_or(noise * std::numbers::sqrt2);
}

void IBLParams::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kInvalidArgument, what); };
  if (!(decay > 0.0) || !std::isfinite(decay)) fail("decay must be > 0");
  if (!(mismatch >= 0.0) || !std::isfinite(mismatch)) fail("mismatch penalty must be >= 0");
  if (!(noise >= 0.0) || !std::isfinite(noise)) fail("noise must be >= 0");
  const double tau = retrieval_temperature();
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    fail("retrieval temperature must be > 0 (set it explicitly when noise is 0)");
  }
  if (!(choice_temperature > 0.0) || !std::isfinite(choice_temperature)) {
    fail("choice temperature must be > 0");
  }
  if (!std::isfinite(default_utility)) fail("default utility must be finite");
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) fail("attribute weights must be >= 0");
  }
}

double base_level_activation(std::span<const Trial> occurrences, Trial t, double decay) {
  if (occurrences.empty()) throw Error(ErrorCode::kInvalidArgument, "instance has no occurrences");
  double sum = 0.0;
  for (Trial occurred : occurrences) {
    if (occurred >= t) {
      throw Error(ErrorCode::kNonCausalProbe, "probe at trial " + std::to_string(t) +
                                                  " does not follow occurrence " +
                                                  std::to_string(occurred));
    }
    sum += std::pow(static_cast<double>(t - occurred), -decay);
  }
  return std::log(sum);
}

double mismatch_term(const AttributeVector& probe, const Instance& instance, const IBLParams& params) {
  if (instance.prepopulated) return 0.0;
  if (probe.size() != instance.attributes.size()) {
    throw Error(ErrorCode::kShapeMismatch, "probe has " + std::to_string(probe.size()) +
                                               " attributes, instance has " +
                                               std::to_string(instance.attributes.size()));
  }
  double penalty = 0.0;
  for (std::size_t j = 0; j < probe.size(); ++j) {
    penalty += params.weight(j) * (attribute_similarity(probe[j], instance.attributes[j]) - 1.0);
  }
  return params.mismatch * penalty;
}

double activation(const Instance& instance, Trial t, const AttributeVector& probe,
                  const IBLParams& params, double noise_draw) {
  return base_level_activation(instance.occurrences, t, params.decay) +
         mismatch_term(probe, instance, params) + params.noise * noise_draw;
}

std::vector<double> softmax(std::span<const double> values, double temperature) {
  if (values.empty()) throw Error(ErrorCode::kEmptySet, "softmax over an empty set");
  const double top = *std::max_element(values.begin(), values.end());
  std::vector<double> out(values.size());
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = std::exp((values[i] - top) / temperature);
    total += out[i];
  }
  for (double& p : out) p /= total;
  return out;
}

std::vector<double> retrieval_probabilities(std::span<const Instance> matching, Trial t,
                                            const AttributeVector& probe, const IBLParams& params,
                                            std::span<const double> noise_draws) {
  if (matching.empty()) throw Error(ErrorCode::kEmptySet, "no matching instances");
  if (!noise_draws.empty() && noise_draws.size() != matching.size()) {
    throw Error(ErrorCode::kShapeMismatch, "one noise draw per instance is required");
  }
  std::vector<double> activations(matching.size());
  for (std::size_t i = 0; i < matching.size(); ++i) {
    activations[i] = activation(matching[i], t, probe, params, noise_draws.empty() ? 0.0 : noise_draws[i]);
  }
  return softmax(activations, params.retrieval_temperature());
}

MemoryStore::MemoryStore(IBLParams params, std::size_t option_count, std::uint64_t seed,
                         bool prepopulate)
    : params_(std::move(params)), by_option_(option_count), seed_(seed), rng_(seed) {
  params_.validate();
  if (option_count == 0) throw Error(ErrorCode::kEmptySet, "option set must be non-empty");
  if (prepopulate) {
    for (std::uint32_t k = 0; k < option_count; ++k) {
      by_option_[k].push_back(Instance{OptionId{k}, {}, params_.default_utility, {0}, true});
    }
  }
}

void MemoryStore::check_option(OptionId option) const {
  if (option.value >= by_option_.size()) {
    throw Error(ErrorCode::kInvalidArgument, "option " + std::to_string(option.value) +
                                                 " is outside the option set");
  }
}

std::span<const Instance> MemoryStore::instances(OptionId option) const {
  check_option(option);
  return by_option_[option.value];
}

std::size_t MemoryStore::size() const {
  std::size_t n = 0;
  for (const auto& group : by_option_) n += group.size();
  return n;
}

namespace {

template <class NoiseFn>
double blend_group(std::span<const Instance> group, const AttributeVector& probe, Trial t,
                   const IBLParams& params, NoiseFn&& noise) {
  // Without any instance (prepopulation disabled) the default utility stands in.
  if (group.empty()) return params.default_utility;
  std::vector<double> activations(group.size());
  for (std::size_t i = 0; i < group.size(); ++i) {
    activations[i] = activation(group[i], t, probe, params, noise());
  }
  const auto probs = softmax(activations, params.retrieval_temperature());
  double value = 0.0;
  for (std::size_t i = 0; i < group.size(); ++i) value += probs[i] * group[i].utility;
  return value;
}

}  // namespace

double MemoryStore::blended_value(OptionId option, const AttributeVector& probe, Trial t) {
  check_option(option);
  const bool noisy = params_.noise > 0.0;
  return blend_group(by_option_[option.value], probe, t, params_,
                     [&] { return noisy ? standard_normal(rng_) : 0.0; });
}

double MemoryStore::blended_value_noiseless(OptionId option, const AttributeVector& probe,
                                            Trial t) const {
  check_option(option);
  return blend_group(by_option_[option.value], probe, t, params_, [] { return 0.0; });
}

Choice MemoryStore::choose(std::span<const OptionId> options, const AttributeVector& probe,
                           ChoiceMode mode) {
  if (options.empty()) throw Error(ErrorCode::kEmptySet, "choose: empty option list");
  const Trial t = now_ + 1;
  Choice choice;
  choice.values.reserve(options.size());
  for (OptionId k : options) choice.values.push_back(blended_value(k, probe, t));

  if (mode == ChoiceMode::kArgmax) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < options.size(); ++i) {
      const bool better = choice.values[i] > choice.values[best] ||
                          (choice.values[i] == choice.values[best] && options[i] < options[best]);
      if (better) best = i;
    }
    choice.distribution.assign(options.size(), 0.0);
    choice.distribution[best] = 1.0;
    choice.option = options[best];
    return choice;
  }

  choice.distribution = softmax(choice.values, params_.choice_temperature);
  const double u = uniform_unit(rng_);
  double cumulative = 0.0;
  std::size_t pick = options.size() - 1;
  for (std::size_t i = 0; i < options.size(); ++i) {
    cumulative += choice.distribution[i];
    if (u < cumulative) {
      pick = i;
      break;
    }
  }
  choice.option = options[pick];
  return choice;
}

void MemoryStore::record_outcome(OptionId option, const AttributeVector& probe, double utility,
                                 Trial t) {
  check_option(option);
  if (!std::isfinite(utility)) throw Error(ErrorCode::kInvalidArgument, "utility must be finite");
  if (t < now_) {
    throw Error(ErrorCode::kNonCausalProbe, "trial " + std::to_string(t) +
                                                " precedes the memory clock " + std::to_string(now_));
  }
  if (t < 1) throw Error(ErrorCode::kInvalidArgument, "outcomes are recorded at trials >= 1");
  auto& group = by_option_[option.value];
  for (auto& inst : group) {
    if (inst.prepopulated || inst.utility != utility || inst.attributes.size() != probe.size()) continue;
    bool same = true;
    for (std::size_t j = 0; j < probe.size() && same; ++j) {
      same = same_attribute_value(inst.attributes[j], probe[j]);
    }
    if (!same) continue;
    if (inst.occurrences.back() >= t) {
      throw Error(ErrorCode::kNonCausalProbe, "instance already has an occurrence at trial " +
                                                  std::to_string(inst.occurrences.back()));
    }
    inst.occurrences.push_back(t);
    now_ = t;
    return;
  }
  group.push_back(Instance{option, probe, utility, {t}, false});
  now_ = t;
}

void MemoryStore::advance_to(Trial t) {
  if (t < now_) throw Error(ErrorCode::kNonCausalProbe, "the memory clock only moves forward");
  now_ = t;
}

void trace(MemoryStore& memory, std::span<const TracedTrial> trials) {
  for (const auto& trial : trials) {
    const Trial t = memory.now() + 1;
    if (trial.utility) {
      memory.record_outcome(trial.chosen, trial.probe, *trial.utility, t);
    } else {
      memory.advance_to(t);
    }
  }
}

}  // namespace phishtrain::ibl
