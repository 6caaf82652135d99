#include "convstruct/synth.hpp"

#include <numeric>
#include <string>

#include "convstruct/error.hpp"
#include "convstruct/random.hpp"

namespace convstruct {

void SynthConfig::validate() const {
  auto fail = [](const std::string& msg) {
    throw Error(ErrorKind::kInvalidConfig, "synth: " + msg);
  };
  if (n_conversations == 0) fail("n_conversations must be positive");
  if (n_utterances < 2) fail("n_utterances must be at least 2");
  if (n_topics == 0) fail("n_topics must be positive");
  if (n_topics >= n_utterances) fail("n_topics must be below n_utterances");
  if (echo_distance < 2) fail("echo_distance must be at least 2");
  if (echo_count == 0) fail("echo_count must be positive");
  if (!(ambiguity >= 0.0 && ambiguity <= 1.0)) fail("ambiguity must lie in [0, 1]");
  if (!(new_thread_prob >= 0.0 && new_thread_prob <= 1.0)) {
    fail("new_thread_prob must lie in [0, 1]");
  }
  if (!(recency_prob >= 0.0 && recency_prob <= 1.0)) {
    fail("recency_prob must lie in [0, 1]");
  }
  if (vocab_size < n_utterances + n_topics) {
    fail("vocab_size " + std::to_string(vocab_size) + " is too small for " +
         std::to_string(n_topics) + " topics over " + std::to_string(n_utterances) +
         " utterances (need at least " + std::to_string(n_utterances + n_topics) + ")");
  }
}

namespace {

LabeledConversation generate_one(const SynthConfig& config, std::size_t number,
                                 Rng& rng) {
  const std::size_t n = config.n_utterances;

  std::vector<std::size_t> words(config.vocab_size);
  std::iota(words.begin(), words.end(), std::size_t{0});
  shuffle(std::span<std::size_t>(words), rng);
  std::vector<std::size_t> signature(n);
  std::iota(signature.begin(), signature.end(), std::size_t{0});
  shuffle(std::span<std::size_t>(signature), rng);

  auto word = [&](Index i) { return "w" + std::to_string(words[i]); };
  auto sig = [&](Index i) { return "s" + std::to_string(signature[i]); };
  auto ref = [&](Index i) { return "r" + std::to_string(signature[i]); };

  std::vector<Index> parent(n, 0);
  std::vector<std::size_t> thread(n, 0);  // 0 = root, else 1-based thread
  std::vector<std::size_t> depth(n, 0);
  std::vector<std::vector<Index>> members;
  std::vector<std::vector<std::string>> tokens(n);
  tokens[0] = {sig(0), word(0), "start"};

  for (Index j = 1; j < n; ++j) {
    const bool can_open = members.size() < config.n_topics;
    if (members.empty() || (can_open && bernoulli(rng, config.new_thread_prob))) {
      members.push_back({j});
      thread[j] = members.size();
      parent[j] = 0;
    } else {
      const std::size_t t = uniform_index(rng, members.size());
      const auto& chain = members[t];
      parent[j] = bernoulli(rng, config.recency_prob)
                      ? chain.back()
                      : chain[uniform_index(rng, chain.size())];
      thread[j] = t + 1;
      members[t].push_back(j);
    }
    depth[j] = depth[parent[j]] + 1;
    auto& tok = tokens[j];
    tok = {sig(j), word(j), ref(parent[j])};

    if (depth[j] > config.echo_distance) {
      Index echoed = j;
      for (std::size_t k = 0; k < config.echo_distance; ++k) echoed = parent[echoed];
      for (std::size_t k = 0; k < config.echo_count && echoed != 0; ++k) {
        tok.push_back(word(echoed));
        echoed = parent[echoed];
      }
      // The decoy is drawn from another thread by the same rule as a parent,
      // so neither its recency nor its number of replies gives it away.
      if (members.size() > 1 && bernoulli(rng, config.ambiguity)) {
        std::size_t other = uniform_index(rng, members.size() - 1);
        if (other + 1 >= thread[j]) ++other;
        const auto& chain = members[other];
        tok.push_back(ref(bernoulli(rng, config.recency_prob)
                              ? chain.back()
                              : chain[uniform_index(rng, chain.size())]));
      }
    }
    shuffle(std::span<std::string>(tok), rng);
  }

  LabeledConversation item;
  item.conversation.conv_id = "synth-" + std::to_string(number);
  item.conversation.mode = Mode::kRedditTree;
  item.graph = ReplyGraph(n);
  for (Index j = 0; j < n; ++j) {
    Utterance u;
    u.id = "c" + std::to_string(number) + "_" + std::to_string(j);
    u.index = j;
    u.author = "user" + std::to_string(uniform_index(rng, 6));
    u.timestamp = static_cast<std::int64_t>(j) * 60;
    for (const auto& t : tokens[j]) {
      if (!u.text.empty()) u.text += ' ';
      u.text += t;
    }
    item.conversation.utterances.push_back(std::move(u));
    if (j > 0) item.graph.set_parents(j, {parent[j]});
  }
  item.graph.validate(Mode::kRedditTree);
  return item;
}

}  // namespace

Corpus generate_corpus(const SynthConfig& config) {
  config.validate();
  Rng rng(config.seed);
  Corpus corpus;
  corpus.reserve(config.n_conversations);
  for (std::size_t c = 0; c < config.n_conversations; ++c) {
    corpus.push_back(generate_one(config, c, rng));
  }
  return corpus;
}

Corpus generate_corpus(std::size_t n_conversations, std::size_t n_utterances,
                       std::size_t n_topics, std::size_t vocab_size,
                       double ambiguity, std::uint64_t seed) {
  SynthConfig config;
  config.n_conversations = n_conversations;
  config.n_utterances = n_utterances;
  config.n_topics = n_topics;
  config.vocab_size = vocab_size;
  config.ambiguity = ambiguity;
  config.seed = seed;
  return generate_corpus(config);
}

}  // namespace convstruct
