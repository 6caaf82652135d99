#pragma once

#include <cstdint>

#include "convstruct/corpus.hpp"

namespace convstruct {

// Synthetic reply trees in which a reply's true parent can be told apart from
// a decoy only by looking at the candidates' ancestors.
//
// Every utterance carries a signature token `sK`, a private word `wM` unique
// within its conversation, and (for replies) a reference `rK` to its parent's
// signature. A reply also repeats the private word of its ancestor
// `echo_distance` levels up when that ancestor is not the root. With
// probability `ambiguity`, such a reply carries a second reference to an
// utterance from another thread. The echoed word then sits on the true
// parent's ancestor chain and on no chain of the decoy.
//
// `n_topics` is the number of threads under the root; thread heads are the
// root's children.
struct SynthConfig {
  std::size_t n_conversations = 200;
  std::size_t n_utterances = 12;
  std::size_t n_topics = 2;
  std::size_t vocab_size = 16;
  double ambiguity = 0.6;
  std::uint64_t seed = 0;

  std::size_t echo_distance = 3;
  // Number of consecutive non-root ancestors, starting at echo_distance and
  // walking up, whose private words a reply repeats.
  std::size_t echo_count = 1;
  // Chance that a reply opens a new thread while some remain unopened.
  double new_thread_prob = 0.5;
  // Chance that a reply answers the newest utterance of its thread rather
  // than a uniformly chosen one.
  double recency_prob = 1.0;

  void validate() const;
};

Corpus generate_corpus(const SynthConfig& config);

Corpus generate_corpus(std::size_t n_conversations, std::size_t n_utterances,
                       std::size_t n_topics, std::size_t vocab_size,
                       double ambiguity, std::uint64_t seed);

}  // namespace convstruct
