#include "convstruct/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "convstruct/error.hpp"
#include "convstruct/io.hpp"
#include "convstruct/random.hpp"
#include "json.hpp"

namespace convstruct {

using nlohmann::json;

CorpusConfig CorpusConfig::reddit() { return CorpusConfig{}; }

CorpusConfig CorpusConfig::irc() {
  CorpusConfig c;
  c.mode = Mode::kIrcMultiParent;
  c.max_window = 40;
  c.max_tokens = 36;
  return c;
}

void CorpusConfig::validate() const {
  double sum = 0.0;
  for (double r : split_ratios) {
    if (!(r > 0.0)) {
      throw Error(ErrorKind::kInvalidConfig, "split ratios must be positive");
    }
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw Error(ErrorKind::kInvalidConfig, "split ratios must sum to 1");
  }
  if (max_window < 2) {
    throw Error(ErrorKind::kInvalidConfig, "max_window must be >= 2");
  }
  if (max_tokens < 1) {
    throw Error(ErrorKind::kInvalidConfig, "max_tokens must be >= 1");
  }
}

namespace {

[[noreturn]] void parse_fail(std::size_t line_number, const std::string& what) {
  throw Error(ErrorKind::kParseError,
              "line " + std::to_string(line_number) + ": " + what);
}

struct RawUtterance {
  Utterance utterance;
  std::vector<std::string> parent_ids;
  std::size_t file_order = 0;
};

}  // namespace

LabeledConversation parse_conversation_line(const std::string& line,
                                            std::size_t line_number) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    parse_fail(line_number, e.what());
  }

  LabeledConversation item;
  std::vector<RawUtterance> raw;
  try {
    item.conversation.conv_id = j.at("conv_id").get<std::string>();
    item.conversation.mode = parse_mode(j.at("mode").get<std::string>());
    std::size_t order = 0;
    for (const auto& u : j.at("utterances")) {
      RawUtterance r;
      r.utterance.id = u.at("id").get<std::string>();
      r.utterance.author = u.value("author", std::string{});
      r.utterance.timestamp = u.at("ts").get<std::int64_t>();
      r.utterance.text = u.value("text", std::string{});
      r.utterance.is_context = u.value("context", false);
      r.utterance.deleted = u.value("deleted", false);
      if (u.contains("parents")) {
        r.parent_ids = u.at("parents").get<std::vector<std::string>>();
      }
      r.file_order = order++;
      raw.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    parse_fail(line_number, e.what());
  } catch (const Error& e) {
    parse_fail(line_number, e.what());
  }
  if (raw.empty()) parse_fail(line_number, "conversation has no utterances");

  // Canonical order: timestamp, then file order.
  std::stable_sort(raw.begin(), raw.end(),
                   [](const RawUtterance& a, const RawUtterance& b) {
                     return a.utterance.timestamp < b.utterance.timestamp;
                   });
  std::map<std::string, Index> by_id;
  for (Index i = 0; i < raw.size(); ++i) {
    raw[i].utterance.index = i;
    if (!by_id.emplace(raw[i].utterance.id, i).second) {
      parse_fail(line_number, "duplicate utterance id '" +
                                  raw[i].utterance.id + "'");
    }
  }

  const Mode mode = item.conversation.mode;
  item.graph = ReplyGraph(raw.size());
  for (Index i = 0; i < raw.size(); ++i) {
    std::vector<Index> parents;
    for (const auto& pid : raw[i].parent_ids) {
      auto it = by_id.find(pid);
      if (it == by_id.end()) {
        throw Error(ErrorKind::kInvalidGraph,
                    "line " + std::to_string(line_number) + ": utterance '" +
                        raw[i].utterance.id + "' references unknown parent '" +
                        pid + "'");
      }
      parents.push_back(it->second);
    }
    item.graph.set_parents(i, std::move(parents));
    item.conversation.utterances.push_back(std::move(raw[i].utterance));
  }
  try {
    item.graph.validate(mode);
  } catch (const Error& e) {
    throw Error(ErrorKind::kInvalidGraph, "line " +
                                              std::to_string(line_number) +
                                              " (" + item.conversation.conv_id +
                                              "): " + e.what());
  }
  return item;
}

Corpus parse_conversations(std::istream& in) {
  Corpus corpus;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    corpus.push_back(parse_conversation_line(line, line_number));
  }
  return corpus;
}

Corpus parse_conversations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIoError, "cannot open " + path.string());
  return parse_conversations(in);
}

std::string to_jsonl_line(const LabeledConversation& item) {
  const auto& conv = item.conversation;
  json utts = json::array();
  for (const auto& u : conv.utterances) {
    json parents = json::array();
    for (Index p : item.graph.parents(u.index)) {
      parents.push_back(conv.utterances.at(p).id);
    }
    json ju = {{"id", u.id},          {"author", u.author},
               {"ts", u.timestamp},   {"text", u.text},
               {"parents", parents},  {"context", u.is_context}};
    if (u.deleted) ju["deleted"] = true;
    utts.push_back(std::move(ju));
  }
  json j = {{"conv_id", conv.conv_id},
            {"mode", std::string(mode_name(conv.mode))},
            {"utterances", utts}};
  return j.dump();
}

std::string to_jsonl(const Corpus& corpus) {
  std::string out;
  for (const auto& item : corpus) {
    out += to_jsonl_line(item);
    out += '\n';
  }
  return out;
}

void write_conversations(const std::filesystem::path& path,
                         const Corpus& corpus) {
  write_file_atomic(path, to_jsonl(corpus));
}

LabeledConversation subconversation(const LabeledConversation& item,
                                    const std::vector<Index>& keep) {
  LabeledConversation out;
  out.conversation.conv_id = item.conversation.conv_id;
  out.conversation.mode = item.conversation.mode;
  std::vector<std::size_t> remap(item.conversation.size(), SIZE_MAX);
  for (Index k = 0; k < keep.size(); ++k) remap.at(keep[k]) = k;
  out.graph = ReplyGraph(keep.size());
  for (Index k = 0; k < keep.size(); ++k) {
    Utterance u = item.conversation.utterances.at(keep[k]);
    u.index = k;
    out.conversation.utterances.push_back(std::move(u));
    std::vector<Index> parents;
    for (Index p : item.graph.parents(keep[k])) {
      if (remap[p] != SIZE_MAX) parents.push_back(remap[p]);
    }
    out.graph.set_parents(k, std::move(parents));
  }
  return out;
}

bool is_deleted_text(const std::string& text) {
  return text == "[deleted]" || text == "[removed]";
}

namespace {

bool is_ascii(const std::string& text) {
  return std::all_of(text.begin(), text.end(), [](char c) {
    return static_cast<unsigned char>(c) < 0x80;
  });
}

std::size_t utf8_length(const std::string& text) {
  return static_cast<std::size_t>(
      std::count_if(text.begin(), text.end(), [](char c) {
        return (static_cast<unsigned char>(c) & 0xC0) != 0x80;
      }));
}

}  // namespace

Corpus filter_reddit_large(const Corpus& corpus, const FilterRules& rules) {
  Corpus out;
  for (const auto& item : corpus) {
    if (item.conversation.mode != Mode::kRedditTree) {
      throw Error(ErrorKind::kInvalidConfig,
                  "filter_reddit_large requires reddit mode");
    }
    const auto& utts = item.conversation.utterances;
    std::vector<char> dropped(utts.size(), 0);
    for (Index i = 0; i < utts.size(); ++i) {
      const auto& u = utts[i];
      bool bad = u.deleted || is_deleted_text(u.text) || !is_ascii(u.text) ||
                 utf8_length(u.text) > rules.max_chars;
      // Parents precede children, so the cascade is a forward pass.
      auto p = item.graph.parent(i);
      if (p && dropped[*p]) bad = true;
      dropped[i] = bad;
    }
    if (!utts.empty() && dropped[0]) continue;
    std::vector<Index> keep;
    for (Index i = 0; i < utts.size(); ++i) {
      if (!dropped[i]) keep.push_back(i);
    }
    LabeledConversation sub = subconversation(item, keep);
    if (tree_depth(sub.graph) < rules.min_depth) continue;
    out.push_back(std::move(sub));
  }
  return out;
}

PrunedWindow prune_to_window(const LabeledConversation& item, Index target,
                             std::size_t k, LeafChoice choice,
                             std::uint64_t seed) {
  const auto& conv = item.conversation;
  if (conv.mode != Mode::kRedditTree) {
    throw Error(ErrorKind::kInvalidConfig, "prune_to_window requires reddit mode");
  }
  if (target == 0) {
    throw Error(ErrorKind::kInvalidTarget, "target must not be the root");
  }
  if (target >= conv.size()) {
    throw Error(ErrorKind::kNotFound, "target " + std::to_string(target));
  }
  const std::size_t n = conv.size();
  std::vector<char> protected_node(n, 0);
  protected_node[0] = 1;
  protected_node[target] = 1;
  for (Index a : ancestors(item.graph, target)) protected_node[a] = 1;

  std::vector<char> alive(n, 1);
  std::vector<std::size_t> child_count(n, 0);
  for (Index i = 1; i < n; ++i) {
    if (auto p = item.graph.parent(i)) ++child_count[*p];
  }
  std::size_t count = n;
  Rng rng(seed);
  bool oversize = false;
  while (count > k) {
    std::vector<Index> leaves;
    for (Index i = 0; i < n; ++i) {
      if (alive[i] && !protected_node[i] && child_count[i] == 0) {
        leaves.push_back(i);
      }
    }
    if (leaves.empty()) {
      oversize = true;
      break;
    }
    Index victim;
    if (choice == LeafChoice::kLatest) {
      victim = *std::max_element(
          leaves.begin(), leaves.end(), [&](Index a, Index b) {
            const auto ta = conv.utterances[a].timestamp;
            const auto tb = conv.utterances[b].timestamp;
            return ta != tb ? ta < tb : a < b;
          });
    } else {
      victim = leaves[uniform_index(rng, leaves.size())];
    }
    alive[victim] = 0;
    --count;
    if (auto p = item.graph.parent(victim)) --child_count[*p];
  }

  PrunedWindow out;
  for (Index i = 0; i < n; ++i) {
    if (alive[i]) out.kept.push_back(i);
  }
  out.target = static_cast<Index>(
      std::find(out.kept.begin(), out.kept.end(), target) - out.kept.begin());
  out.oversize = oversize;
  out.window = subconversation(item, out.kept);
  return out;
}

IrcWindow irc_window(const Conversation& conversation, Index target,
                     std::size_t w) {
  if (target >= conversation.size()) {
    throw Error(ErrorKind::kNotFound, "target " + std::to_string(target));
  }
  if (w == 0) throw Error(ErrorKind::kInvalidConfig, "window must be >= 1");
  IrcWindow out;
  out.last = target;
  out.first = target + 1 >= w ? target + 1 - w : 0;
  return out;
}

LabeledConversation mark_context_self_parents(
    const LabeledConversation& item, std::size_t context_count,
    std::vector<std::string>* warnings) {
  if (item.conversation.mode != Mode::kIrcMultiParent) {
    throw Error(ErrorKind::kInvalidConfig, "context marking requires irc mode");
  }
  if (context_count > item.conversation.size()) {
    throw Error(ErrorKind::kInvalidConfig,
                "context_count " + std::to_string(context_count) +
                    " exceeds conversation length " +
                    std::to_string(item.conversation.size()));
  }
  LabeledConversation out = item;
  for (Index i = 0; i < context_count; ++i) {
    const auto& existing = out.graph.parents(i);
    bool annotated = !existing.empty() &&
                     !(existing.size() == 1 && existing.front() == i);
    if (annotated && warnings) {
      warnings->push_back("context message " +
                          out.conversation.utterances[i].id +
                          " had annotated parents; overwritten with self");
    }
    out.graph.set_parents(i, {i});
    out.conversation.utterances[i].is_context = true;
  }
  return out;
}

std::array<std::size_t, 3> split_sizes(std::size_t n,
                                       const std::array<double, 3>& ratios) {
  const auto train = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) * ratios[0]));
  auto dev = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) * ratios[1]));
  const std::size_t t = std::min(train, n);
  dev = std::min(dev, n - t);
  return {t, dev, n - t - dev};
}

CorpusSplit split_corpus(const Corpus& corpus,
                         const std::array<double, 3>& ratios,
                         std::uint64_t seed) {
  CorpusConfig check;
  check.split_ratios = ratios;
  check.validate();
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  shuffle(std::span<std::size_t>(order), rng);
  const auto sizes = split_sizes(corpus.size(), ratios);
  std::array<std::vector<std::size_t>, 3> parts;
  std::size_t at = 0;
  for (int s = 0; s < 3; ++s) {
    parts[s].assign(order.begin() + static_cast<long>(at),
                    order.begin() + static_cast<long>(at + sizes[s]));
    std::sort(parts[s].begin(), parts[s].end());
    at += sizes[s];
  }
  CorpusSplit out;
  Corpus* dst[3] = {&out.train, &out.dev, &out.test};
  for (int s = 0; s < 3; ++s) {
    for (std::size_t i : parts[s]) dst[s]->push_back(corpus[i]);
  }
  return out;
}

std::vector<Index> annotated_targets(const LabeledConversation& item) {
  std::vector<Index> out;
  const auto& utts = item.conversation.utterances;
  for (Index i = 0; i < utts.size(); ++i) {
    if (item.conversation.mode == Mode::kRedditTree) {
      if (i > 0) out.push_back(i);
    } else if (!utts[i].is_context && !item.graph.parents(i).empty()) {
      out.push_back(i);
    }
  }
  return out;
}

std::vector<PairSample> pair_samples_downsampled(const Corpus& corpus,
                                                 std::uint64_t seed) {
  Rng rng(seed);
  std::vector<PairSample> out;
  for (std::size_t c = 0; c < corpus.size(); ++c) {
    const auto& item = corpus[c];
    const bool irc = item.conversation.mode == Mode::kIrcMultiParent;
    for (Index target : annotated_targets(item)) {
      const Index last = irc ? target : target - 1;
      std::vector<Index> negatives;
      std::size_t positives = 0;
      for (Index cand = 0; cand <= last; ++cand) {
        if (item.graph.has_parent(target, cand)) {
          out.push_back({c, cand, target, true});
          ++positives;
        } else {
          negatives.push_back(cand);
        }
      }
      const std::size_t take = std::min(positives, negatives.size());
      // Partial Fisher-Yates: sample without replacement.
      for (std::size_t s = 0; s < take; ++s) {
        std::size_t j = s + uniform_index(rng, negatives.size() - s);
        std::swap(negatives[s], negatives[j]);
        out.push_back({c, negatives[s], target, false});
      }
    }
  }
  return out;
}

Corpus truncate_conversations(const Corpus& corpus, std::size_t n) {
  Corpus out;
  for (const auto& item : corpus) {
    if (item.conversation.size() <= n) {
      out.push_back(item);
      continue;
    }
    std::vector<Index> keep(n);
    std::iota(keep.begin(), keep.end(), Index{0});
    out.push_back(subconversation(item, keep));
  }
  return out;
}

}  // namespace convstruct
