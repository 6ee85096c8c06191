#include "sactext/critic/critic.hpp"

#include "sactext/common/errors.hpp"

namespace sactext::critic {

using nn::Var;

std::string_view to_string(InputMode mode) {
  return mode == InputMode::observation ? "observation" : "observation_action";
}

InputMode parse_input_mode(std::string_view name) {
  if (name == "observation") return InputMode::observation;
  if (name == "observation_action") return InputMode::observation_action;
  throw ConfigError("unknown critic input mode '" + std::string(name) + "'");
}

MlpHead::MlpHead(std::string prefix, int in, int hidden, int out, nn::ParameterStore& store, Rng& init_rng)
    : out_(out) {
  if (in < 1 || hidden < 1 || out < 1) throw ConfigError("head '" + prefix + "' needs positive widths");
  const auto i = static_cast<std::size_t>(in);
  const auto h = static_cast<std::size_t>(hidden);
  const auto o = static_cast<std::size_t>(out);
  l1w_ = store.add(prefix + ".l1.w", {h, i});
  l1b_ = store.add(prefix + ".l1.b", {h});
  l2w_ = store.add(prefix + ".l2.w", {h, h});
  l2b_ = store.add(prefix + ".l2.b", {h});
  ow_ = store.add(prefix + ".out.w", {o, h});
  ob_ = store.add(prefix + ".out.b", {o});
  ids_ = {l1w_, l1b_, l2w_, l2b_, ow_, ob_};
  for (auto id : {l1w_, l2w_, ow_}) nn::init_uniform_fan_in(store[id], init_rng);
}

Var MlpHead::forward(nn::Tape& tape, const nn::ParameterStore& store, Var x) const {
  const Var h1 = nn::relu(tape, nn::dense(tape, store, l1w_, l1b_, x));
  const Var h2 = nn::relu(tape, nn::dense(tape, store, l2w_, l2b_, h1));
  return nn::dense(tape, store, ow_, ob_, h2);
}

Critic::Critic(CriticConfig config, const policy::Scorer& scorer, int action_count, nn::ParameterStore& store,
               Rng& init_rng)
    : config_(config), scorer_(&scorer), action_count_(action_count) {
  if (config_.tau < 0.0 || config_.tau > 1.0) throw ConfigError("critic tau must lie in [0, 1]");
  const int width = config_.input_mode == InputMode::observation ? action_count : 1;
  const int heads = config_.twin ? 2 : 1;
  for (int k = 0; k < heads; ++k) {
    heads_.emplace_back("q" + std::to_string(k + 1), scorer.code_width(), config_.head_hidden, width, store,
                        init_rng);
    head_ids_.insert(head_ids_.end(), heads_.back().ids().begin(), heads_.back().ids().end());
  }
}

Var Critic::code(nn::Tape& tape, const nn::ParameterStore& store, const policy::PromptTokens& prompt, Var prefix,
                 std::span<const int> action) const {
  if (config_.shared_backprop) return scorer_->encode_finish(tape, store, prefix, prompt, action);
  // Evaluate the encoder off the tape so no gradient path reaches it.
  nn::Tape scratch;
  const Var p = scorer_->encode_prefix(scratch, store, prompt);
  return tape.constant(scratch.value(scorer_->encode_finish(scratch, store, p, prompt, action)));
}

std::vector<Var> Critic::q_all(nn::Tape& tape, const nn::ParameterStore& store, const policy::PromptTokens& prompt,
                               Var prefix, std::span<const policy::ActionTokens> candidates) const {
  if (candidates.empty()) throw ContractError("critic over an empty candidate list");
  std::vector<Var> out;
  if (config_.input_mode == InputMode::observation) {
    if (static_cast<int>(candidates.size()) != action_count_) {
      throw ShapeError("observation-input critic has " + std::to_string(action_count_) + " outputs but got " +
                       std::to_string(candidates.size()) + " candidates");
    }
    const Var c = code(tape, store, prompt, prefix, {});
    for (const auto& head : heads_) out.push_back(head.forward(tape, store, c));
    return out;
  }
  std::vector<std::vector<Var>> per_head(heads_.size());
  for (const auto& action : candidates) {
    const Var c = code(tape, store, prompt, prefix, action);
    for (std::size_t k = 0; k < heads_.size(); ++k) per_head[k].push_back(heads_[k].forward(tape, store, c));
  }
  for (const auto& values : per_head) out.push_back(nn::concat(tape, values));
  return out;
}

std::vector<Var> Critic::q_one(nn::Tape& tape, const nn::ParameterStore& store, const policy::PromptTokens& prompt,
                               Var prefix, std::span<const policy::ActionTokens> candidates,
                               std::size_t index) const {
  if (index >= candidates.size()) throw ContractError("action index out of range");
  std::vector<Var> out;
  if (config_.input_mode == InputMode::observation) {
    for (Var q : q_all(tape, store, prompt, prefix, candidates)) out.push_back(nn::pick(tape, q, index));
    return out;
  }
  const Var c = code(tape, store, prompt, prefix, candidates[index]);
  for (const auto& head : heads_) out.push_back(head.forward(tape, store, c));
  return out;
}

std::vector<double> Critic::q_values(const nn::ParameterStore& store, std::string_view prompt,
                                     std::span<const std::string> candidates, std::size_t head) const {
  nn::Tape tape;
  const auto p = scorer_->tokenize_prompt(prompt);
  const auto c = scorer_->tokenize_actions(candidates);
  const Var prefix = scorer_->encode_prefix(tape, store, p);
  return tape.value(q_all(tape, store, p, prefix, c).at(head));
}

void polyak_update(const nn::ParameterStore& online, nn::ParameterStore& target, std::span<const nn::ParamId> ids,
                   double tau) {
  for (nn::ParamId id : ids) {
    const auto& src = online[id].value;
    auto& dst = target[id].value;
    if (src.size() != dst.size()) throw ShapeError("polyak: shape mismatch for '" + online[id].name + "'");
    if (tau == 1.0) {
      dst = src;
      continue;
    }
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = (1.0 - tau) * dst[i] + tau * src[i];
  }
}

}  // namespace sactext::critic
