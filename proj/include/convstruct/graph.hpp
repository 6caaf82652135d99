#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace convstruct {

using Index = std::size_t;

enum class Mode { kRedditTree, kIrcMultiParent };

std::string_view mode_name(Mode mode);
Mode parse_mode(std::string_view name);

struct Utterance {
  std::string id;
  Index index = 0;
  std::string author;
  std::int64_t timestamp = 0;
  std::string text;
  bool is_context = false;
  // Set by importers when the source marks the record as removed.
  bool deleted = false;
};

struct Conversation {
  std::string conv_id;
  std::vector<Utterance> utterances;
  Mode mode = Mode::kRedditTree;

  std::size_t size() const { return utterances.size(); }
};

// Parent sets indexed by utterance position. Self-parent edges are stored
// explicitly (IRC context messages) but contribute nothing to ancestry or
// connectivity.
class ReplyGraph {
 public:
  ReplyGraph() = default;
  explicit ReplyGraph(std::size_t n) : parents_(n) {}
  explicit ReplyGraph(std::vector<std::vector<Index>> parents);

  std::size_t size() const { return parents_.size(); }

  const std::vector<Index>& parents(Index node) const;
  void set_parents(Index node, std::vector<Index> parents);
  void add_parent(Index node, Index parent);
  bool has_parent(Index node, Index parent) const;

  // First parent, or nullopt when the node is unannotated.
  std::optional<Index> parent(Index node) const;

  // (child, parent) pairs in child order, parents ascending.
  std::vector<std::pair<Index, Index>> edges() const;

  // Throws InvalidGraph when the mode's invariants are violated.
  void validate(Mode mode) const;

  bool operator==(const ReplyGraph& other) const = default;

 private:
  std::vector<std::vector<Index>> parents_;
};

struct LabeledConversation {
  Conversation conversation;
  ReplyGraph graph;
};

// Transitive closure of parent links, excluding the node itself, ascending.
std::vector<Index> ancestors(const ReplyGraph& graph, Index node);

// Length of the shortest upward path from descendant to ancestor.
std::optional<std::size_t> graph_distance(const ReplyGraph& graph,
                                          Index descendant, Index ancestor);

// Undirected components over {0..n-1}; each cluster ascending, clusters
// ordered by their smallest member.
using Partition = std::vector<std::vector<Index>>;
Partition connected_components(const ReplyGraph& graph, std::size_t n);

// Number of nodes on the longest root-to-leaf path of a tree rooted at 0.
std::size_t tree_depth(const ReplyGraph& graph);

struct TreeStats {
  std::size_t count = 0;
  std::size_t comment_count = 0;
  double average_depth = 0.0;
  std::size_t max_depth = 0;
};

TreeStats tree_stats(const std::vector<LabeledConversation>& corpus);

}  // namespace convstruct
