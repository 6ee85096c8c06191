#include "sactext/policy/scorer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <sstream>

#include "sactext/common/errors.hpp"

namespace sactext::policy {

using nn::Var;

Tokenizer::Tokenizer(const std::vector<std::string>& words) {
  words_.push_back("<unk>");
  index_.emplace("<unk>", kUnknown);
  for (const auto& w : words) {
    if (w.empty() || index_.contains(w)) continue;
    index_.emplace(w, static_cast<int>(words_.size()));
    words_.push_back(w);
  }
}

const std::vector<std::string>& Tokenizer::template_words() {
  static const std::vector<std::string> words = {"goal", "grasp", "grow", "then",    "you",     "see",
                                                 "are",  "on",    "holding", "have", "grown",   "nothing",
                                                 "action", "go",  "to",      "release"};
  return words;
}

Tokenizer Tokenizer::for_lexicon(const env::Lexicon& lexicon) {
  std::vector<std::string> words = template_words();
  for (const auto& c : lexicon.colors()) words.push_back(c);
  for (const auto& k : lexicon.kinds()) words.push_back(k.name);
  return Tokenizer(words);
}

Tokenizer Tokenizer::parse(std::string_view vocabulary_file) {
  std::istringstream in{std::string(vocabulary_file)};
  std::vector<std::string> words;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (first) {
      first = false;
      if (line != "<unk>") throw ConfigError("vocabulary file must start with <unk>");
      continue;
    }
    if (!line.empty()) words.push_back(line);
  }
  return Tokenizer(words);
}

int Tokenizer::id(std::string_view word) const {
  const auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnknown : it->second;
}

std::vector<int> Tokenizer::encode(std::string_view text) const {
  std::vector<int> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) {
      out.push_back(id(word));
      word.clear();
    }
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c) || ch == ',' || ch == ':' || ch == '.') {
      flush();
    } else {
      word.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

std::vector<std::vector<int>> Tokenizer::encode_lines(std::string_view text) const {
  std::vector<std::vector<int>> lines;
  std::size_t start = 0;
  while (true) {
    const auto end = text.find('\n', start);
    lines.push_back(encode(text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start)));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return lines;
}

std::string Tokenizer::serialize() const {
  std::string out;
  for (const auto& w : words_) out += w + '\n';
  return out;
}

Scorer::Scorer(ScorerConfig config, Tokenizer tokenizer, nn::ParameterStore& store, Rng& init_rng)
    : config_(config), tokenizer_(std::move(tokenizer)) {
  if (config_.embedding_dim < 1 || config_.hidden < 1 || config_.segments < 1) {
    throw ConfigError("scorer dimensions must be positive");
  }
  const auto v = tokenizer_.size();
  const auto d = static_cast<std::size_t>(config_.embedding_dim);
  const auto h = static_cast<std::size_t>(config_.hidden);
  const auto s = static_cast<std::size_t>(config_.segments);
  embed_ = store.add("embed", {v, d});
  enc1_w_ = store.add("enc.l1.w", {h, s * d});
  enc1_b_ = store.add("enc.l1.b", {h});
  enc2_w_ = store.add("enc.l2.w", {h, h});
  enc2_b_ = store.add("enc.l2.b", {h});
  tok1_w_ = store.add("tok.l1.w", {h, h + d});
  tok1_b_ = store.add("tok.l1.b", {h});
  tok_out_w_ = store.add("tok.out.w", {v, h});
  tok_out_b_ = store.add("tok.out.b", {v});
  encoder_ids_ = {embed_, enc1_w_, enc1_b_, enc2_w_, enc2_b_};
  actor_ids_ = {tok1_w_, tok1_b_, tok_out_w_, tok_out_b_};
  for (auto id : {embed_, enc1_w_, enc2_w_, tok1_w_, tok_out_w_}) nn::init_uniform_fan_in(store[id], init_rng);
}

PromptTokens Scorer::tokenize_prompt(std::string_view prompt) const {
  auto lines = tokenizer_.encode_lines(prompt);
  const auto s = static_cast<std::size_t>(config_.segments);
  PromptTokens out;
  out.segments.resize(s);
  out.segments.back() = std::move(lines.back());
  lines.pop_back();
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto& seg = out.segments[s == 1 ? 0 : std::min(i, s - 2)];
    seg.insert(seg.end(), lines[i].begin(), lines[i].end());
  }
  return out;
}

std::vector<ActionTokens> Scorer::tokenize_actions(std::span<const std::string> actions) const {
  std::vector<ActionTokens> out;
  out.reserve(actions.size());
  for (const auto& a : actions) out.push_back(tokenize_action(a));
  return out;
}

Var Scorer::encode_prefix(nn::Tape& tape, const nn::ParameterStore& store, const PromptTokens& prompt) const {
  const std::size_t s = prompt.segments.size();
  if (s != static_cast<std::size_t>(config_.segments)) throw ShapeError("prompt has the wrong segment count");
  if (s == 1) return tape.constant(store[enc1_b_].value);
  std::vector<Var> means;
  means.reserve(s - 1);
  for (std::size_t i = 0; i + 1 < s; ++i) means.push_back(nn::embed_mean(tape, store, embed_, prompt.segments[i]));
  return nn::dense_slice(tape, store, enc1_w_, 0, nn::concat(tape, means), enc1_b_);
}

Var Scorer::encode_finish(nn::Tape& tape, const nn::ParameterStore& store, Var prefix, const PromptTokens& prompt,
                          std::span<const int> extra) const {
  const auto d = static_cast<std::size_t>(config_.embedding_dim);
  const auto& base = prompt.segments.back();
  Var last;
  if (extra.empty()) {
    last = nn::embed_mean(tape, store, embed_, base);
  } else {
    std::vector<int> tokens(base);
    tokens.insert(tokens.end(), extra.begin(), extra.end());
    last = nn::embed_mean(tape, store, embed_, tokens);
  }
  const Var z = nn::add(tape, prefix, nn::dense_slice(tape, store, enc1_w_, (prompt.segments.size() - 1) * d, last));
  const Var h1 = nn::relu(tape, z);
  return nn::relu(tape, nn::dense(tape, store, enc2_w_, enc2_b_, h1));
}

Var Scorer::encode(nn::Tape& tape, const nn::ParameterStore& store, const PromptTokens& prompt) const {
  return encode_finish(tape, store, encode_prefix(tape, store, prompt), prompt);
}

Var Scorer::token_head(nn::Tape& tape, const nn::ParameterStore& store, Var code_part,
                       std::span<const int> prefix) const {
  Var z = code_part;
  if (!prefix.empty()) {
    const Var mean = nn::embed_mean(tape, store, embed_, prefix);
    z = nn::add(tape, z, nn::dense_slice(tape, store, tok1_w_, static_cast<std::size_t>(config_.hidden), mean));
  }
  const Var logits = nn::dense(tape, store, tok_out_w_, tok_out_b_, nn::relu(tape, z));
  return nn::log_softmax(tape, logits);
}

std::vector<Var> Scorer::token_logprobs(nn::Tape& tape, const nn::ParameterStore& store, Var code,
                                        const ActionTokens& action) const {
  const Var code_part = nn::dense_slice(tape, store, tok1_w_, 0, code, tok1_b_);
  std::vector<Var> out;
  for (std::size_t j = 0; j < action.size(); ++j) {
    const Var ls = token_head(tape, store, code_part, std::span(action).first(j));
    out.push_back(nn::pick(tape, ls, static_cast<std::size_t>(action[j])));
  }
  return out;
}

std::vector<Var> Scorer::action_logprobs(nn::Tape& tape, const nn::ParameterStore& store, Var code,
                                         std::span<const ActionTokens> candidates) const {
  const Var code_part = nn::dense_slice(tape, store, tok1_w_, 0, code, tok1_b_);
  std::map<std::vector<int>, Var> heads;
  std::vector<Var> out;
  out.reserve(candidates.size());
  for (const auto& action : candidates) {
    if (action.empty()) throw ContractError("action text has no tokens");
    std::vector<Var> terms;
    terms.reserve(action.size());
    std::vector<int> prefix;
    for (int token : action) {
      auto it = heads.find(prefix);
      if (it == heads.end()) it = heads.emplace(prefix, token_head(tape, store, code_part, prefix)).first;
      terms.push_back(nn::pick(tape, it->second, static_cast<std::size_t>(token)));
      prefix.push_back(token);
    }
    out.push_back(terms.size() == 1 ? terms.front() : nn::sum_scalars(tape, terms));
  }
  return out;
}

Var Scorer::policy_log_probs(nn::Tape& tape, const nn::ParameterStore& store, const PromptTokens& prompt,
                             std::span<const ActionTokens> candidates) const {
  if (candidates.empty()) throw ContractError("policy over an empty candidate list");
  const Var code = encode(tape, store, prompt);
  const auto scores = action_logprobs(tape, store, code, candidates);
  return nn::log_softmax(tape, nn::concat(tape, scores));
}

double Scorer::action_logprob(const nn::ParameterStore& store, std::string_view prompt,
                              std::string_view action) const {
  nn::Tape tape;
  const Var code = encode(tape, store, tokenize_prompt(prompt));
  const std::vector<ActionTokens> one{tokenize_action(action)};
  return tape.item(action_logprobs(tape, store, code, one).front());
}

std::vector<double> Scorer::policy_distribution(const nn::ParameterStore& store, std::string_view prompt,
                                                std::span<const std::string> candidates) const {
  nn::Tape tape;
  const auto logp = policy_log_probs(tape, store, tokenize_prompt(prompt), tokenize_actions(candidates));
  std::vector<double> p = tape.value(logp);
  for (auto& x : p) x = std::exp(x);
  return p;
}

double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

std::size_t sample_action(std::span<const double> probs, Rng& rng) { return rng.categorical(probs); }

std::vector<double> softmax(std::span<const double> scores) {
  const double mx = *std::max_element(scores.begin(), scores.end());
  double s = 0.0;
  for (double x : scores) s += std::exp(x - mx);
  const double lse = mx + std::log(s);
  std::vector<double> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = std::exp(scores[i] - lse);
  return out;
}

}  // namespace sactext::policy
