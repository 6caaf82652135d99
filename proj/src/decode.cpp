#include "convstruct/decode.hpp"

#include <cmath>
#include <cstdio>

#include "convstruct/error.hpp"

namespace convstruct {

namespace {

double sigmoid(double t) {
  return t >= 0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
}

std::size_t argmax_latest(const std::vector<double>& scores) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] >= scores[best]) best = i;
  }
  return best;
}

}  // namespace

ParentPrediction select_parents(std::span<const double> logits, LossKind loss,
                                bool threshold_mode) {
  ParentPrediction out;
  if (loss == LossKind::kRank) {
    if (logits.size() < 2) {
      throw Error(ErrorKind::kNoCandidates,
                  "rank mode needs at least one history utterance");
    }
    out.probabilities = parent_distribution(logits.first(logits.size() - 1));
    out.slots.push_back(argmax_latest(out.probabilities));
    return out;
  }
  if (logits.empty()) throw Error(ErrorKind::kNoCandidates, "empty window");
  for (double t : logits) out.probabilities.push_back(sigmoid(t));
  if (threshold_mode) {
    for (std::size_t i = 0; i < out.probabilities.size(); ++i) {
      if (out.probabilities[i] > 0.5) out.slots.push_back(i);
    }
  }
  if (out.slots.empty()) {
    // Compare logits: sigmoid saturates to equal doubles for large inputs.
    std::vector<double> raw(logits.begin(), logits.end());
    out.slots.push_back(argmax_latest(raw));
  }
  return out;
}

ParentPrediction predict_parent(const HierarchicalModel& model,
                                const Conversation& conversation,
                                const tk::Matrix& encodings,
                                const WindowView& window,
                                const DecodeOptions& options) {
  const ModelConfig& cfg = model.config();
  const std::size_t length = window.size();
  if (cfg.loss == LossKind::kRank && length < 2) {
    throw Error(ErrorKind::kNoCandidates, "window holds only the target");
  }
  const AttentionMask mask = build_mask(cfg.mask, window.prefix, length);
  if (options.validate_masks && cfg.mask.kind == MaskSpec::Kind::kAncestor) {
    const auto violations = validate_mask(mask, window.prefix);
    if (!violations.empty()) {
      throw Error(ErrorKind::kMaskError,
                  std::to_string(violations.size()) +
                      " mask cells disagree with the ancestor rule");
    }
  }
  tk::Matrix rows(static_cast<long>(length), encodings.cols());
  for (std::size_t k = 0; k < length; ++k) {
    rows.row(static_cast<long>(k)) = encodings.row(static_cast<long>(window.kept[k]));
  }
  const tk::Tensor v(std::move(rows));
  std::optional<tk::Tensor> features;
  if (cfg.feature_mode) features.emplace(window_features(conversation, window));
  const tk::Tensor contextual =
      model.contextualize(v, features ? &*features : nullptr, mask);
  const tk::Tensor logits = model.parent_logits(contextual);
  const auto& lv = logits.value();
  return select_parents(std::span<const double>(lv.data(), lv.size()), cfg.loss,
                        options.threshold_mode);
}

DecodedStructure reconstruct(const HierarchicalModel& model,
                             const LabeledConversation& item,
                             const DecodeOptions& options) {
  const Conversation& conv = item.conversation;
  const std::size_t n = conv.size();
  DecodedStructure out;
  out.graph = ReplyGraph(n);
  if (n == 0) return out;
  const bool tree = conv.mode == Mode::kRedditTree;
  if (tree && model.config().loss != LossKind::kRank) {
    throw Error(ErrorKind::kInvalidConfig, "tree mode decodes with the rank loss");
  }

  std::vector<Index> targets;
  for (Index i = 0; i < n; ++i) {
    if (tree) {
      if (i > 0) targets.push_back(i);
    } else if (conv.utterances[i].is_context) {
      out.graph.set_parents(i, {i});
    } else {
      targets.push_back(i);
    }
  }

  const tk::Matrix encodings = model.encode_conversation(conv);
  LabeledConversation working{conv, out.graph};
  for (Index target : targets) {
    if (options.teacher_forcing) {
      for (Index i = 0; i < target; ++i) {
        working.graph.set_parents(i, item.graph.parents(i));
      }
    }
    const WindowView window =
        build_window(working, target, model.config().max_window);
    if (window.oversize) out.oversize_targets.push_back(target);
    ParentPrediction pred =
        predict_parent(model, conv, encodings, window, options);

    TargetDecision decision;
    decision.target = target;
    const std::size_t scored = pred.probabilities.size();
    for (std::size_t k = 0; k < scored; ++k) {
      decision.candidates.push_back(window.kept[k]);
    }
    decision.probabilities = std::move(pred.probabilities);
    for (std::size_t slot : pred.slots) {
      decision.parents.push_back(window.kept[slot]);
    }
    out.graph.set_parents(target, decision.parents);
    if (!options.teacher_forcing) {
      working.graph.set_parents(target, decision.parents);
    }
    out.decisions.push_back(std::move(decision));
  }
  out.graph.validate(conv.mode);
  return out;
}

Corpus decode_corpus(const HierarchicalModel& model, const Corpus& corpus,
                     const DecodeOptions& options,
                     std::vector<DecodedStructure>* decoded) {
  Corpus out;
  out.reserve(corpus.size());
  for (const auto& item : corpus) {
    DecodedStructure d = reconstruct(model, item, options);
    out.push_back({item.conversation, d.graph});
    if (decoded != nullptr) decoded->push_back(std::move(d));
  }
  return out;
}

DecodedStructure predict_first_baseline(const Conversation& conversation) {
  if (conversation.mode != Mode::kRedditTree) {
    throw Error(ErrorKind::kInvalidConfig, "predict-first needs tree mode");
  }
  DecodedStructure out;
  out.graph = ReplyGraph(conversation.size());
  for (Index i = 1; i < conversation.size(); ++i) {
    out.graph.set_parents(i, {0});
    out.decisions.push_back({i, {0}, {1.0}, {0}});
  }
  return out;
}

std::string probability_sidecar_csv(
    const std::vector<LabeledConversation>& inputs,
    const std::vector<DecodedStructure>& decoded) {
  if (inputs.size() != decoded.size()) {
    throw Error(ErrorKind::kMismatch, "inputs/decoded length mismatch");
  }
  std::string out = "conv_id,target_id,candidate_id,probability\n";
  char buf[64];
  for (std::size_t c = 0; c < inputs.size(); ++c) {
    const auto& utts = inputs[c].conversation.utterances;
    for (const auto& d : decoded[c].decisions) {
      for (std::size_t k = 0; k < d.candidates.size(); ++k) {
        std::snprintf(buf, sizeof(buf), "%.17g", d.probabilities[k]);
        out += inputs[c].conversation.conv_id + "," + utts[d.target].id + "," +
               utts[d.candidates[k]].id + "," + buf + "\n";
      }
    }
  }
  return out;
}

}  // namespace convstruct
