#include "convstruct/graph.hpp"

#include <algorithm>
#include <deque>
#include <numeric>

#include "convstruct/error.hpp"

namespace convstruct {

std::string_view mode_name(Mode mode) {
  return mode == Mode::kRedditTree ? "reddit" : "irc";
}

Mode parse_mode(std::string_view name) {
  if (name == "reddit") return Mode::kRedditTree;
  if (name == "irc") return Mode::kIrcMultiParent;
  throw Error(ErrorKind::kInvalidConfig,
              "unknown mode '" + std::string(name) + "'");
}

ReplyGraph::ReplyGraph(std::vector<std::vector<Index>> parents)
    : parents_(std::move(parents)) {
  for (auto& p : parents_) {
    std::sort(p.begin(), p.end());
    p.erase(std::unique(p.begin(), p.end()), p.end());
  }
}

const std::vector<Index>& ReplyGraph::parents(Index node) const {
  if (node >= parents_.size()) {
    throw Error(ErrorKind::kNotFound, "node " + std::to_string(node) +
                                          " not in graph of size " +
                                          std::to_string(parents_.size()));
  }
  return parents_[node];
}

void ReplyGraph::set_parents(Index node, std::vector<Index> parents) {
  if (node >= parents_.size()) {
    throw Error(ErrorKind::kNotFound, "node " + std::to_string(node));
  }
  std::sort(parents.begin(), parents.end());
  parents.erase(std::unique(parents.begin(), parents.end()), parents.end());
  parents_[node] = std::move(parents);
}

void ReplyGraph::add_parent(Index node, Index parent) {
  auto p = parents(node);
  p.push_back(parent);
  set_parents(node, std::move(p));
}

bool ReplyGraph::has_parent(Index node, Index parent) const {
  const auto& p = parents(node);
  return std::binary_search(p.begin(), p.end(), parent);
}

std::optional<Index> ReplyGraph::parent(Index node) const {
  const auto& p = parents(node);
  if (p.empty()) return std::nullopt;
  return p.front();
}

std::vector<std::pair<Index, Index>> ReplyGraph::edges() const {
  std::vector<std::pair<Index, Index>> out;
  for (Index i = 0; i < parents_.size(); ++i) {
    for (Index p : parents_[i]) out.emplace_back(i, p);
  }
  return out;
}

void ReplyGraph::validate(Mode mode) const {
  for (Index i = 0; i < parents_.size(); ++i) {
    const auto& p = parents_[i];
    if (mode == Mode::kRedditTree) {
      if (i == 0 && !p.empty()) {
        throw Error(ErrorKind::kInvalidGraph, "root has a parent");
      }
      if (i > 0 && p.size() != 1) {
        throw Error(ErrorKind::kInvalidGraph,
                    "node " + std::to_string(i) + " has " +
                        std::to_string(p.size()) + " parents, expected 1");
      }
      if (i > 0 && p.front() >= i) {
        throw Error(ErrorKind::kInvalidGraph,
                    "node " + std::to_string(i) + " points forward to " +
                        std::to_string(p.front()));
      }
    } else {
      for (Index q : p) {
        if (q > i) {
          throw Error(ErrorKind::kInvalidGraph,
                      "node " + std::to_string(i) + " points forward to " +
                          std::to_string(q));
        }
      }
    }
  }
}

std::vector<Index> ancestors(const ReplyGraph& graph, Index node) {
  graph.parents(node);  // bounds check
  std::vector<char> seen(graph.size(), 0);
  std::vector<Index> stack{node};
  seen[node] = 1;
  std::vector<Index> out;
  while (!stack.empty()) {
    Index cur = stack.back();
    stack.pop_back();
    for (Index p : graph.parents(cur)) {
      if (p >= graph.size()) {
        throw Error(ErrorKind::kInvalidGraph,
                    "parent " + std::to_string(p) + " out of range");
      }
      if (!seen[p]) {
        seen[p] = 1;
        out.push_back(p);
        stack.push_back(p);
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::optional<std::size_t> graph_distance(const ReplyGraph& graph,
                                          Index descendant, Index ancestor) {
  graph.parents(descendant);
  graph.parents(ancestor);
  std::vector<std::size_t> dist(graph.size(), SIZE_MAX);
  std::deque<Index> queue{descendant};
  dist[descendant] = 0;
  while (!queue.empty()) {
    Index cur = queue.front();
    queue.pop_front();
    if (cur == ancestor) return dist[cur];
    for (Index p : graph.parents(cur)) {
      if (p < graph.size() && dist[p] == SIZE_MAX) {
        dist[p] = dist[cur] + 1;
        queue.push_back(p);
      }
    }
  }
  return std::nullopt;
}

namespace {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) {
    std::iota(parent_.begin(), parent_.end(), Index{0});
  }
  Index find(Index x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(Index a, Index b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<Index> parent_;
};

}  // namespace

Partition connected_components(const ReplyGraph& graph, std::size_t n) {
  DisjointSets sets(n);
  for (Index i = 0; i < std::min(n, graph.size()); ++i) {
    for (Index p : graph.parents(i)) {
      if (p == i) continue;
      if (p >= n) {
        throw Error(ErrorKind::kInvalidGraph,
                    "parent " + std::to_string(p) + " >= n");
      }
      sets.unite(i, p);
    }
  }
  Partition out;
  std::vector<std::size_t> slot(n, SIZE_MAX);
  for (Index i = 0; i < n; ++i) {
    Index root = sets.find(i);
    if (slot[root] == SIZE_MAX) {
      slot[root] = out.size();
      out.emplace_back();
    }
    out[slot[root]].push_back(i);
  }
  return out;
}

std::size_t tree_depth(const ReplyGraph& graph) {
  if (graph.size() == 0) return 0;
  // Parents precede children, so a single forward pass suffices.
  std::vector<std::size_t> depth(graph.size(), 1);
  std::size_t best = 1;
  for (Index i = 1; i < graph.size(); ++i) {
    auto p = graph.parent(i);
    if (p && *p < i) depth[i] = depth[*p] + 1;
    best = std::max(best, depth[i]);
  }
  return best;
}

TreeStats tree_stats(const std::vector<LabeledConversation>& corpus) {
  if (corpus.empty()) {
    throw Error(ErrorKind::kEmptyCorpus, "tree_stats on empty corpus");
  }
  TreeStats stats;
  double depth_sum = 0.0;
  for (const auto& item : corpus) {
    item.graph.validate(Mode::kRedditTree);
    std::size_t depth = tree_depth(item.graph);
    ++stats.count;
    stats.comment_count += item.conversation.size();
    depth_sum += static_cast<double>(depth);
    stats.max_depth = std::max(stats.max_depth, depth);
  }
  stats.average_depth = depth_sum / static_cast<double>(stats.count);
  return stats;
}

}  // namespace convstruct
