#pragma once

#include <span>
#include <string>
#include <vector>

#include "convstruct/corpus.hpp"
#include "json.hpp"

namespace convstruct {

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  // Set when the corresponding denominator was empty and 0 was reported.
  bool precision_undefined = false;
  bool recall_undefined = false;
};

PRF make_prf(std::size_t correct, std::size_t predicted, std::size_t gold);

// Fraction of non-root utterances whose predicted parent equals gold.
double graph_accuracy(const ReplyGraph& pred, const ReplyGraph& gold);

// Fraction of conversations whose every edge matches.
double conversation_accuracy(std::span<const ReplyGraph> preds,
                             std::span<const ReplyGraph> golds);

// (child, parent) edges, self-parents included, over `children` only.
PRF edge_prf(const ReplyGraph& pred, const ReplyGraph& gold,
             const std::vector<Index>& children);
PRF edge_prf(const ReplyGraph& pred, const ReplyGraph& gold);

// Natural-log VI = H(pred|gold) + H(gold|pred), reported as
// 100 * (1 - VI / ln n); n = 1 scores 100.
inline constexpr const char* kScaledViFormula = "100*(1-VI/ln(n)), natural log";
double variation_of_information(const Partition& pred, const Partition& gold,
                                std::size_t n);
double scaled_vi(const Partition& pred, const Partition& gold, std::size_t n);

// Exact maximum-weight one-to-one cluster matching, 100 * overlap / n.
double one_to_one(const Partition& pred, const Partition& gold, std::size_t n);

// A predicted cluster counts only when it equals a gold cluster exactly.
PRF cluster_exact_prf(const Partition& pred, const Partition& gold);

// Maximum-weight assignment on a rectangular weight matrix; returns, per
// row, the matched column or -1.
std::vector<long> max_weight_assignment(
    const std::vector<std::vector<long long>>& weights);

// Clusters over the given members only, edges outside them ignored;
// members are renumbered 0..|members|-1 in the output.
Partition restricted_components(const ReplyGraph& graph,
                                const std::vector<Index>& members);

struct MetricsReport {
  std::string mode;
  std::size_t conversations = 0;
  std::size_t scored_utterances = 0;
  double graph_acc = 0.0;
  double conv_acc = 0.0;
  PRF edge;
  double scaled_vi = 0.0;
  double one_to_one = 0.0;
  PRF cluster;
  std::vector<std::string> flags;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

// Aligns conversations by conv_id; Mismatch on missing ids or size drift.
MetricsReport evaluate(const Corpus& predicted, const Corpus& gold);

}  // namespace convstruct
