#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <string>
#include <vector>

#include "convstruct/graph.hpp"

namespace convstruct {

using Corpus = std::vector<LabeledConversation>;

struct CorpusConfig {
  Mode mode = Mode::kRedditTree;
  std::size_t max_window = 16;
  std::size_t max_tokens = 50;
  std::array<double, 3> split_ratios{0.8, 0.1, 0.1};
  std::uint64_t seed = 0;

  static CorpusConfig reddit();
  static CorpusConfig irc();
  void validate() const;
};

// Canonical line-delimited JSON:
// {"conv_id", "mode", "utterances": [{"id", "author", "ts", "text",
//   "parents": [id...], "context", "deleted"?}]}
Corpus parse_conversations(const std::filesystem::path& path);
Corpus parse_conversations(std::istream& in);
LabeledConversation parse_conversation_line(const std::string& line,
                                            std::size_t line_number = 1);

std::string to_jsonl_line(const LabeledConversation& item);
std::string to_jsonl(const Corpus& corpus);
void write_conversations(const std::filesystem::path& path,
                         const Corpus& corpus);

// Re-indexes the kept utterances (ascending original indices); parent links
// leaving the kept set are dropped.
LabeledConversation subconversation(const LabeledConversation& item,
                                    const std::vector<Index>& keep);

bool is_deleted_text(const std::string& text);

struct FilterRules {
  std::size_t max_chars = 128;
  std::size_t min_depth = 6;
};

Corpus filter_reddit_large(const Corpus& corpus, const FilterRules& rules = {});

enum class LeafChoice { kLatest, kRandom };

struct PrunedWindow {
  LabeledConversation window;
  std::vector<Index> kept;  // original indices, ascending
  Index target = 0;         // target position inside the window
  bool oversize = false;
};

PrunedWindow prune_to_window(const LabeledConversation& item, Index target,
                             std::size_t k,
                             LeafChoice choice = LeafChoice::kLatest,
                             std::uint64_t seed = 0);

struct IrcWindow {
  Index first = 0;
  Index last = 0;  // the target

  std::size_t size() const { return last - first + 1; }
};

IrcWindow irc_window(const Conversation& conversation, Index target,
                     std::size_t w);

LabeledConversation mark_context_self_parents(
    const LabeledConversation& item, std::size_t context_count,
    std::vector<std::string>* warnings = nullptr);

struct CorpusSplit {
  Corpus train;
  Corpus dev;
  Corpus test;
};

std::array<std::size_t, 3> split_sizes(std::size_t n,
                                       const std::array<double, 3>& ratios);
CorpusSplit split_corpus(const Corpus& corpus,
                         const std::array<double, 3>& ratios,
                         std::uint64_t seed);

struct PairSample {
  std::size_t conversation = 0;
  Index candidate = 0;
  Index target = 0;
  bool is_parent = false;
};

std::vector<PairSample> pair_samples_downsampled(const Corpus& corpus,
                                                 std::uint64_t seed);

// Truncates each conversation to its first n utterances by index.
Corpus truncate_conversations(const Corpus& corpus, std::size_t n);

// Targets that carry gold annotation: 1..N-1 in tree mode, non-context
// annotated utterances in IRC mode.
std::vector<Index> annotated_targets(const LabeledConversation& item);

}  // namespace convstruct
