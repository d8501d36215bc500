#include "phishtrain/protocol.hpp"

#include "phishtrain/error.hpp"

namespace phishtrain {

using nlohmann::json;

void ProtocolConfig::validate() const {
  if (n_pre < 1 || n_train < 0 || n_post < 1) {
    throw Error(ErrorCode::kInvalidArgument, "protocol needs n_pre >= 1, n_train >= 0, n_post >= 1");
  }
}

json to_json(const ProtocolConfig& p) {
  return json{{"n_pre", p.n_pre},
              {"n_train", p.n_train},
              {"n_post", p.n_post},
              {"reward_correct", p.reward_correct},
              {"reward_incorrect", p.reward_incorrect}};
}

ProtocolConfig protocol_from_json(const json& j) {
  ProtocolConfig p;
  p.n_pre = j.value("n_pre", p.n_pre);
  p.n_train = j.value("n_train", p.n_train);
  p.n_post = j.value("n_post", p.n_post);
  p.reward_correct = j.value("reward_correct", p.reward_correct);
  p.reward_incorrect = j.value("reward_incorrect", p.reward_incorrect);
  p.validate();
  return p;
}

std::string_view to_string(Block block) {
  switch (block) {
    case Block::kPre: return "PRE";
    case Block::kTrain: return "TRAIN";
    case Block::kPost: return "POST";
  }
  return "?";
}

Block parse_block(std::string_view text) {
  if (text == "PRE") return Block::kPre;
  if (text == "TRAIN") return Block::kTrain;
  if (text == "POST") return Block::kPost;
  throw Error(ErrorCode::kInvalidArgument, "unknown block '" + std::string(text) + "'");
}

Block block_of(const ProtocolConfig& protocol, ibl::Trial index) {
  if (index < 1 || index > protocol.total()) {
    throw Error(ErrorCode::kOutOfRange, "trial " + std::to_string(index) + " outside the protocol");
  }
  if (index <= protocol.n_pre) return Block::kPre;
  if (index <= protocol.n_pre + protocol.n_train) return Block::kTrain;
  return Block::kPost;
}

json to_json(const TrialRecord& t) {
  json j{{"t", t.index},
         {"block", to_string(t.block)},
         {"email_id", t.email_id},
         {"true_label", ibl::option_name(t.true_label)},
         {"response", ibl::option_name(t.response)},
         {"correct", t.correct},
         {"points", nullptr},
         {"confidence", nullptr},
         {"response_ms", nullptr}};
  if (t.points) j["points"] = *t.points;
  if (t.confidence) j["confidence"] = *t.confidence;
  if (t.response_ms) j["response_ms"] = *t.response_ms;
  return j;
}

TrialRecord trial_from_json(const json& j) {
  TrialRecord t;
  t.index = j.at("t").get<ibl::Trial>();
  t.block = parse_block(j.at("block").get<std::string>());
  t.email_id = j.at("email_id").get<std::string>();
  t.true_label = ibl::parse_option(j.at("true_label").get<std::string>());
  t.response = ibl::parse_option(j.at("response").get<std::string>());
  t.correct = j.contains("correct") ? j["correct"].get<bool>() : t.response == t.true_label;
  if (t.correct != (t.response == t.true_label)) {
    throw Error(ErrorCode::kMalformedRecord, "trial " + std::to_string(t.index) +
                                                 ": 'correct' disagrees with response/label");
  }
  if (j.contains("points") && !j["points"].is_null()) t.points = j["points"].get<double>();
  if (j.contains("confidence") && !j["confidence"].is_null()) t.confidence = j["confidence"].get<int>();
  if (j.contains("response_ms") && !j["response_ms"].is_null()) t.response_ms = j["response_ms"].get<double>();
  return t;
}

}  // namespace phishtrain
