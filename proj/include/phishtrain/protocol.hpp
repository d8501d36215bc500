#pragma once

#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "phishtrain/ibl/types.hpp"

namespace phishtrain {

/// Trial schedule: an unfeedbacked pre block, a feedback block, an unfeedbacked post block.
struct ProtocolConfig {
  int n_pre = 10;
  int n_train = 40;
  int n_post = 10;
  double reward_correct = 1.0;
  double reward_incorrect = -1.0;

  int total() const { return n_pre + n_train + n_post; }
  void validate() const;

  friend bool operator==(const ProtocolConfig&, const ProtocolConfig&) = default;
};

nlohmann::json to_json(const ProtocolConfig& protocol);
ProtocolConfig protocol_from_json(const nlohmann::json& doc);

enum class Block { kPre, kTrain, kPost };

std::string_view to_string(Block block);
Block parse_block(std::string_view text);

/// Block of a 1-based trial index under `protocol`.
Block block_of(const ProtocolConfig& protocol, ibl::Trial index);

struct TrialRecord {
  ibl::Trial index = 0;
  Block block = Block::kPre;
  std::string email_id;
  ibl::OptionId true_label;
  ibl::OptionId response;
  bool correct = false;
  /// Present exactly for feedback-block trials.
  std::optional<double> points;
  std::optional<int> confidence;
  std::optional<double> response_ms;

  friend bool operator==(const TrialRecord&, const TrialRecord&) = default;
};

nlohmann::json to_json(const TrialRecord& trial);
TrialRecord trial_from_json(const nlohmann::json& doc);

}  // namespace phishtrain
