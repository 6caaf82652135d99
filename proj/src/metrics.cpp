#include "convstruct/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "convstruct/error.hpp"

namespace convstruct {

PRF make_prf(std::size_t correct, std::size_t predicted, std::size_t gold) {
  PRF out;
  if (predicted == 0) {
    out.precision_undefined = true;
  } else {
    out.precision = static_cast<double>(correct) / static_cast<double>(predicted);
  }
  if (gold == 0) {
    out.recall_undefined = true;
  } else {
    out.recall = static_cast<double>(correct) / static_cast<double>(gold);
  }
  const double denom = out.precision + out.recall;
  out.f1 = denom > 0.0 ? 2.0 * out.precision * out.recall / denom : 0.0;
  return out;
}

namespace {

void require_same_size(const ReplyGraph& pred, const ReplyGraph& gold) {
  if (pred.size() != gold.size()) {
    throw Error(ErrorKind::kMismatch,
                "predicted graph has " + std::to_string(pred.size()) +
                    " nodes, gold has " + std::to_string(gold.size()));
  }
}

std::size_t tree_matches(const ReplyGraph& pred, const ReplyGraph& gold) {
  std::size_t correct = 0;
  for (Index i = 1; i < gold.size(); ++i) {
    if (pred.parents(i) == gold.parents(i)) ++correct;
  }
  return correct;
}

// Label per item; throws Mismatch unless the partition covers 0..n-1 once.
std::vector<std::size_t> labels_of(const Partition& p, std::size_t n) {
  std::vector<std::size_t> label(n, SIZE_MAX);
  for (std::size_t c = 0; c < p.size(); ++c) {
    for (Index i : p[c]) {
      if (i >= n || label[i] != SIZE_MAX) {
        throw Error(ErrorKind::kMismatch,
                    "partition does not cover 0.." + std::to_string(n - 1) +
                        " exactly once");
      }
      label[i] = c;
    }
  }
  for (std::size_t l : label) {
    if (l == SIZE_MAX) {
      throw Error(ErrorKind::kMismatch, "partition misses an item");
    }
  }
  return label;
}

std::map<std::pair<std::size_t, std::size_t>, std::size_t> contingency(
    const Partition& pred, const Partition& gold, std::size_t n) {
  const auto lp = labels_of(pred, n);
  const auto lg = labels_of(gold, n);
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> table;
  for (std::size_t i = 0; i < n; ++i) ++table[{lp[i], lg[i]}];
  return table;
}

}  // namespace

double graph_accuracy(const ReplyGraph& pred, const ReplyGraph& gold) {
  require_same_size(pred, gold);
  if (gold.size() <= 1) return 1.0;
  return static_cast<double>(tree_matches(pred, gold)) /
         static_cast<double>(gold.size() - 1);
}

double conversation_accuracy(std::span<const ReplyGraph> preds,
                             std::span<const ReplyGraph> golds) {
  if (preds.size() != golds.size()) {
    throw Error(ErrorKind::kMismatch, "conversation lists differ in length");
  }
  if (golds.empty()) return 0.0;
  std::size_t exact = 0;
  for (std::size_t c = 0; c < golds.size(); ++c) {
    require_same_size(preds[c], golds[c]);
    if (preds[c] == golds[c]) ++exact;
  }
  return static_cast<double>(exact) / static_cast<double>(golds.size());
}

PRF edge_prf(const ReplyGraph& pred, const ReplyGraph& gold,
             const std::vector<Index>& children) {
  require_same_size(pred, gold);
  std::size_t predicted = 0, expected = 0, correct = 0;
  for (Index c : children) {
    const auto& pp = pred.parents(c);
    const auto& gp = gold.parents(c);
    predicted += pp.size();
    expected += gp.size();
    for (Index p : pp) {
      if (std::binary_search(gp.begin(), gp.end(), p)) ++correct;
    }
  }
  return make_prf(correct, predicted, expected);
}

PRF edge_prf(const ReplyGraph& pred, const ReplyGraph& gold) {
  std::vector<Index> all(gold.size());
  for (Index i = 0; i < all.size(); ++i) all[i] = i;
  return edge_prf(pred, gold, all);
}

double variation_of_information(const Partition& pred, const Partition& gold,
                                std::size_t n) {
  if (n == 0) return 0.0;
  const auto table = contingency(pred, gold, n);
  std::vector<double> row(pred.size(), 0.0), col(gold.size(), 0.0);
  for (const auto& [key, count] : table) {
    row[key.first] += static_cast<double>(count);
    col[key.second] += static_cast<double>(count);
  }
  const double total = static_cast<double>(n);
  double h_pred_given_gold = 0.0, h_gold_given_pred = 0.0;
  for (const auto& [key, count] : table) {
    const double joint = static_cast<double>(count) / total;
    h_pred_given_gold -= joint * std::log(static_cast<double>(count) / col[key.second]);
    h_gold_given_pred -= joint * std::log(static_cast<double>(count) / row[key.first]);
  }
  return h_pred_given_gold + h_gold_given_pred;
}

double scaled_vi(const Partition& pred, const Partition& gold, std::size_t n) {
  const double vi = variation_of_information(pred, gold, n);
  if (n <= 1) return 100.0;
  return 100.0 * (1.0 - vi / std::log(static_cast<double>(n)));
}

std::vector<long> max_weight_assignment(
    const std::vector<std::vector<long long>>& weights) {
  const std::size_t rows = weights.size();
  std::size_t cols = 0;
  for (const auto& r : weights) cols = std::max(cols, r.size());
  const std::size_t n = std::max(rows, cols);
  std::vector<long> result(rows, -1);
  if (n == 0) return result;
  auto cost = [&](std::size_t i, std::size_t j) -> long long {
    if (i >= rows || j >= weights[i].size()) return 0;
    return -weights[i][j];
  };
  // Shortest augmenting path with potentials (1-based, column 0 sentinel).
  const long long inf = std::numeric_limits<long long>::max() / 4;
  std::vector<long long> u(n + 1, 0), v(n + 1, 0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<long long> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match[j0];
      long long delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const long long cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  for (std::size_t j = 1; j <= n; ++j) {
    const std::size_t i = match[j];
    if (i >= 1 && i <= rows && j <= cols && j - 1 < weights[i - 1].size()) {
      result[i - 1] = static_cast<long>(j - 1);
    }
  }
  return result;
}

double one_to_one(const Partition& pred, const Partition& gold, std::size_t n) {
  if (n == 0) return 100.0;
  const auto table = contingency(pred, gold, n);
  std::vector<std::vector<long long>> w(pred.size(),
                                        std::vector<long long>(gold.size(), 0));
  for (const auto& [key, count] : table) {
    w[key.first][key.second] = static_cast<long long>(count);
  }
  const auto assignment = max_weight_assignment(w);
  long long overlap = 0;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] >= 0) overlap += w[i][static_cast<std::size_t>(assignment[i])];
  }
  return 100.0 * static_cast<double>(overlap) / static_cast<double>(n);
}

PRF cluster_exact_prf(const Partition& pred, const Partition& gold) {
  std::set<std::vector<Index>> gold_set;
  for (auto c : gold) {
    std::sort(c.begin(), c.end());
    gold_set.insert(std::move(c));
  }
  std::size_t correct = 0;
  for (auto c : pred) {
    std::sort(c.begin(), c.end());
    if (gold_set.count(c)) ++correct;
  }
  return make_prf(correct, pred.size(), gold.size());
}

Partition restricted_components(const ReplyGraph& graph,
                                const std::vector<Index>& members) {
  std::map<Index, Index> local;
  for (Index k = 0; k < members.size(); ++k) local[members[k]] = k;
  ReplyGraph sub(members.size());
  for (Index k = 0; k < members.size(); ++k) {
    std::vector<Index> parents;
    for (Index p : graph.parents(members[k])) {
      auto it = local.find(p);
      if (it != local.end() && it->second != k) parents.push_back(it->second);
    }
    sub.set_parents(k, std::move(parents));
  }
  return connected_components(sub, members.size());
}

nlohmann::json MetricsReport::to_json() const {
  auto prf_json = [](const PRF& p) {
    return nlohmann::json{{"precision", p.precision},
                          {"recall", p.recall},
                          {"f1", p.f1},
                          {"precision_undefined", p.precision_undefined},
                          {"recall_undefined", p.recall_undefined}};
  };
  nlohmann::json j = {{"mode", mode},
                      {"conversations", conversations},
                      {"scored_utterances", scored_utterances},
                      {"graph_acc", graph_acc},
                      {"conv_acc", conv_acc},
                      {"flags", flags}};
  if (mode == "irc") {
    j["edge"] = prf_json(edge);
    j["scaled_vi"] = scaled_vi;
    j["one_to_one"] = one_to_one;
    j["cluster"] = prf_json(cluster);
    j["vi_formula"] = kScaledViFormula;
  }
  return j;
}

std::string MetricsReport::to_text() const {
  char buf[256];
  std::ostringstream out;
  std::snprintf(buf, sizeof(buf), "mode: %s  conversations: %zu  scored: %zu\n",
                mode.c_str(), conversations, scored_utterances);
  out << buf;
  if (mode == "reddit") {
    std::snprintf(buf, sizeof(buf), "%-12s %12s %12s\n", "", "Graph acc", "Conv acc");
    out << buf;
    std::snprintf(buf, sizeof(buf), "%-12s %11.2f%% %11.2f%%\n", "model",
                  100.0 * graph_acc, 100.0 * conv_acc);
    out << buf;
  } else {
    std::snprintf(buf, sizeof(buf), "%-12s %8s %8s %8s\n", "graph", "P", "R", "F");
    out << buf;
    std::snprintf(buf, sizeof(buf), "%-12s %8.1f %8.1f %8.1f\n", "model",
                  100.0 * edge.precision, 100.0 * edge.recall, 100.0 * edge.f1);
    out << buf;
    std::snprintf(buf, sizeof(buf), "%-12s %8s %8s %8s %8s %8s\n", "conversation",
                  "VI", "1-1", "P", "R", "F");
    out << buf;
    std::snprintf(buf, sizeof(buf), "%-12s %8.1f %8.1f %8.1f %8.1f %8.1f\n",
                  "model", scaled_vi, one_to_one, 100.0 * cluster.precision,
                  100.0 * cluster.recall, 100.0 * cluster.f1);
    out << buf;
    out << "VI scaling: " << kScaledViFormula << "\n";
  }
  for (const auto& f : flags) out << "flag: " << f << "\n";
  return out.str();
}

MetricsReport evaluate(const Corpus& predicted, const Corpus& gold) {
  if (gold.empty()) throw Error(ErrorKind::kEmptyCorpus, "no gold conversations");
  std::map<std::string, const LabeledConversation*> by_id;
  for (const auto& p : predicted) by_id[p.conversation.conv_id] = &p;
  if (by_id.size() != gold.size() || predicted.size() != gold.size()) {
    throw Error(ErrorKind::kMismatch,
                "predicted corpus has " + std::to_string(predicted.size()) +
                    " conversations, gold has " + std::to_string(gold.size()));
  }

  MetricsReport report;
  const Mode mode = gold.front().conversation.mode;
  report.mode = std::string(mode_name(mode));
  report.conversations = gold.size();

  std::vector<ReplyGraph> pred_graphs, gold_graphs;
  std::size_t correct = 0, scored = 0;
  std::size_t edge_pred = 0, edge_gold = 0, edge_hit = 0;
  Partition pred_union, gold_union;
  std::size_t offset = 0;
  for (const auto& g : gold) {
    auto it = by_id.find(g.conversation.conv_id);
    if (it == by_id.end()) {
      throw Error(ErrorKind::kMismatch,
                  "no prediction for conversation " + g.conversation.conv_id);
    }
    const LabeledConversation& p = *it->second;
    if (p.conversation.size() != g.conversation.size() ||
        p.conversation.mode != mode || g.conversation.mode != mode) {
      throw Error(ErrorKind::kMismatch,
                  "conversation " + g.conversation.conv_id + " differs in size or mode");
    }
    for (Index i = 0; i < g.conversation.size(); ++i) {
      if (p.conversation.utterances[i].id != g.conversation.utterances[i].id) {
        throw Error(ErrorKind::kMismatch,
                    "utterance order differs in " + g.conversation.conv_id);
      }
    }
    pred_graphs.push_back(p.graph);
    gold_graphs.push_back(g.graph);
    if (mode == Mode::kRedditTree) {
      correct += tree_matches(p.graph, g.graph);
      scored += g.conversation.size() - 1;
      continue;
    }
    std::vector<Index> annotated;
    for (Index i = 0; i < g.conversation.size(); ++i) {
      if (!g.conversation.utterances[i].is_context) annotated.push_back(i);
    }
    for (Index c : annotated) {
      const auto& pp = p.graph.parents(c);
      const auto& gp = g.graph.parents(c);
      if (pp == gp) ++correct;
      edge_pred += pp.size();
      edge_gold += gp.size();
      for (Index q : pp) {
        if (std::binary_search(gp.begin(), gp.end(), q)) ++edge_hit;
      }
    }
    scored += annotated.size();
    for (auto cluster : restricted_components(p.graph, annotated)) {
      for (auto& i : cluster) i += offset;
      pred_union.push_back(std::move(cluster));
    }
    for (auto cluster : restricted_components(g.graph, annotated)) {
      for (auto& i : cluster) i += offset;
      gold_union.push_back(std::move(cluster));
    }
    offset += annotated.size();
  }
  report.scored_utterances = scored;
  report.graph_acc = scored == 0 ? 0.0
                                 : static_cast<double>(correct) /
                                       static_cast<double>(scored);
  report.conv_acc = conversation_accuracy(pred_graphs, gold_graphs);
  if (mode == Mode::kIrcMultiParent) {
    report.edge = make_prf(edge_hit, edge_pred, edge_gold);
    report.scaled_vi = scaled_vi(pred_union, gold_union, offset);
    report.one_to_one = one_to_one(pred_union, gold_union, offset);
    report.cluster = cluster_exact_prf(pred_union, gold_union);
    if (report.edge.precision_undefined) {
      report.flags.push_back("edge precision undefined (no predicted edges); reported as 0");
    }
    if (report.cluster.precision_undefined) {
      report.flags.push_back("cluster precision undefined; reported as 0");
    }
  }
  return report;
}

}  // namespace convstruct
