#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sactext/common/rng.hpp"
#include "sactext/env/playground.hpp"
#include "sactext/nn/tape.hpp"

namespace sactext::policy {

/// Whitespace tokenizer. Text is lowercased and ',' ':' '.' act as separators. Words outside
/// the vocabulary map to id 0 ("<unk>").
///
/// Vocabulary order for an environment lexicon: "<unk>", the fixed template words, the colors,
/// then the kinds (both in lexicon order). Checkpoints are only portable between identical
/// vocabularies; `serialize()` writes one word per line in id order.
class Tokenizer {
 public:
  static constexpr int kUnknown = 0;

  explicit Tokenizer(const std::vector<std::string>& words);
  static Tokenizer for_lexicon(const env::Lexicon& lexicon);
  static Tokenizer parse(std::string_view vocabulary_file);

  static const std::vector<std::string>& template_words();

  int id(std::string_view word) const;
  std::vector<int> encode(std::string_view text) const;
  /// One token list per '\n'-separated line.
  std::vector<std::vector<int>> encode_lines(std::string_view text) const;

  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }
  std::string serialize() const;

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

struct ScorerConfig {
  int embedding_dim = 32;
  int hidden = 64;
  /// Prompt lines are embedded per segment; the last segment holds the final ("Action:") line.
  int segments = 6;
};

/// Prompt tokens grouped into the encoder's segments.
struct PromptTokens {
  std::vector<std::vector<int>> segments;
};

using ActionTokens = std::vector<int>;

/// Small learned stand-in for a language model that scores action texts token by token.
///
/// Encoder: per-segment mean of token embeddings -> dense -> ReLU -> dense -> ReLU, giving a
/// `hidden`-wide prompt code. Token head: for action token j, logits over the whole vocabulary
/// from [prompt code, mean embedding of action tokens before j] through one ReLU layer. The score
/// of an action is the sum of its token log-probabilities; the policy is the softmax of scores.
///
/// Parameter names: embed, enc.l1.{w,b}, enc.l2.{w,b} (the shared encoder) and
/// tok.l1.{w,b}, tok.out.{w,b} (the actor head).
class Scorer {
 public:
  Scorer(ScorerConfig config, Tokenizer tokenizer, nn::ParameterStore& store, Rng& init_rng);

  const ScorerConfig& config() const { return config_; }
  const Tokenizer& tokenizer() const { return tokenizer_; }
  int code_width() const { return config_.hidden; }

  const std::vector<nn::ParamId>& encoder_ids() const { return encoder_ids_; }
  const std::vector<nn::ParamId>& actor_head_ids() const { return actor_ids_; }
  nn::ParamId token_out_weight() const { return tok_out_w_; }
  nn::ParamId token_out_bias() const { return tok_out_b_; }

  PromptTokens tokenize_prompt(std::string_view prompt) const;
  ActionTokens tokenize_action(std::string_view action) const { return tokenizer_.encode(action); }
  std::vector<ActionTokens> tokenize_actions(std::span<const std::string> actions) const;

  /// First encoder layer applied to every segment except the last (bias included).
  nn::Var encode_prefix(nn::Tape& tape, const nn::ParameterStore& store, const PromptTokens& prompt) const;
  /// Rest of the encoder; the last segment holds the prompt's final line followed by `extra`.
  nn::Var encode_finish(nn::Tape& tape, const nn::ParameterStore& store, nn::Var prefix,
                        const PromptTokens& prompt, std::span<const int> extra = {}) const;
  /// Prompt code without any action text.
  nn::Var encode(nn::Tape& tape, const nn::ParameterStore& store, const PromptTokens& prompt) const;

  /// Per-token log P(w_j | prompt, w_<j) for one action.
  std::vector<nn::Var> token_logprobs(nn::Tape& tape, const nn::ParameterStore& store, nn::Var code,
                                      const ActionTokens& action) const;
  /// Summed token log-probabilities for each candidate. Candidates sharing a token prefix
  /// share the corresponding head evaluations.
  std::vector<nn::Var> action_logprobs(nn::Tape& tape, const nn::ParameterStore& store, nn::Var code,
                                       std::span<const ActionTokens> candidates) const;
  /// log pi(a | prompt) over the candidates.
  nn::Var policy_log_probs(nn::Tape& tape, const nn::ParameterStore& store, const PromptTokens& prompt,
                           std::span<const ActionTokens> candidates) const;

  double action_logprob(const nn::ParameterStore& store, std::string_view prompt, std::string_view action) const;
  std::vector<double> policy_distribution(const nn::ParameterStore& store, std::string_view prompt,
                                          std::span<const std::string> candidates) const;

 private:
  nn::Var token_head(nn::Tape& tape, const nn::ParameterStore& store, nn::Var code_part,
                     std::span<const int> prefix) const;

  ScorerConfig config_;
  Tokenizer tokenizer_;
  nn::ParamId embed_;
  nn::ParamId enc1_w_, enc1_b_, enc2_w_, enc2_b_;
  nn::ParamId tok1_w_, tok1_b_, tok_out_w_, tok_out_b_;
  std::vector<nn::ParamId> encoder_ids_;
  std::vector<nn::ParamId> actor_ids_;
};

double entropy(std::span<const double> probs);
std::size_t sample_action(std::span<const double> probs, Rng& rng);
/// Softmax of arbitrary scores computed in log space.
std::vector<double> softmax(std::span<const double> scores);

}  // namespace sactext::policy
