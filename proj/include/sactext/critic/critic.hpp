#pragma once

#include <span>
#include <string>
#include <vector>

#include "sactext/policy/scorer.hpp"

namespace sactext::critic {

enum class InputMode { observation, observation_action };
std::string_view to_string(InputMode mode);
InputMode parse_input_mode(std::string_view name);

struct CriticConfig {
  InputMode input_mode = InputMode::observation_action;
  /// When false, critic losses do not reach the shared encoder.
  bool shared_backprop = true;
  bool twin = true;
  double tau = 0.005;
  /// Evaluate bootstrap values with a polyak-averaged copy instead of the online critic.
  bool use_target_network = true;
  int head_hidden = 128;
};

/// Two ReLU hidden layers and a linear output: <prefix>.l1, <prefix>.l2, <prefix>.out.
class MlpHead {
 public:
  MlpHead(std::string prefix, int in, int hidden, int out, nn::ParameterStore& store, Rng& init_rng);

  nn::Var forward(nn::Tape& tape, const nn::ParameterStore& store, nn::Var x) const;
  const std::vector<nn::ParamId>& ids() const { return ids_; }
  int out_width() const { return out_; }

 private:
  nn::ParamId l1w_, l1b_, l2w_, l2b_, ow_, ob_;
  int out_;
  std::vector<nn::ParamId> ids_;
};

/// Q-function heads on the scorer's encoder.
///
/// observation_action: the encoder sees the prompt with the action text appended to its final
/// line and a 1-wide head scores each candidate. observation: one encoder pass, and a head of
/// width `action_count` emits every candidate's value at once.
class Critic {
 public:
  Critic(CriticConfig config, const policy::Scorer& scorer, int action_count, nn::ParameterStore& store,
         Rng& init_rng);

  const CriticConfig& config() const { return config_; }
  std::size_t head_count() const { return heads_.size(); }
  /// Parameters owned by the critic heads (the encoder belongs to the scorer).
  const std::vector<nn::ParamId>& head_ids() const { return head_ids_; }

  /// Q(s, a) for every candidate, one vector per head. `prefix` is the scorer's encode_prefix
  /// of the same prompt on the same store, so it can be shared with the actor.
  std::vector<nn::Var> q_all(nn::Tape& tape, const nn::ParameterStore& store, const policy::PromptTokens& prompt,
                             nn::Var prefix, std::span<const policy::ActionTokens> candidates) const;
  /// Q(s, candidates[index]) per head.
  std::vector<nn::Var> q_one(nn::Tape& tape, const nn::ParameterStore& store, const policy::PromptTokens& prompt,
                             nn::Var prefix, std::span<const policy::ActionTokens> candidates,
                             std::size_t index) const;

  /// Forward-only values of head `head`.
  std::vector<double> q_values(const nn::ParameterStore& store, std::string_view prompt,
                               std::span<const std::string> candidates, std::size_t head = 0) const;

 private:
  nn::Var code(nn::Tape& tape, const nn::ParameterStore& store, const policy::PromptTokens& prompt, nn::Var prefix,
               std::span<const int> action) const;

  CriticConfig config_;
  const policy::Scorer* scorer_;
  int action_count_;
  std::vector<MlpHead> heads_;
  std::vector<nn::ParamId> head_ids_;
};

/// target <- (1 - tau) * target + tau * online for the listed parameters.
void polyak_update(const nn::ParameterStore& online, nn::ParameterStore& target, std::span<const nn::ParamId> ids,
                   double tau);

}  // namespace sactext::critic
