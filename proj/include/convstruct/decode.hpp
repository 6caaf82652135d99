#pragma once

#include <string>
#include <vector>

#include "convstruct/model.hpp"

namespace convstruct {

struct DecodeOptions {
  // IRC only: emit every candidate with sigmoid > 0.5 (argmax fallback)
  // instead of the single most probable parent.
  bool threshold_mode = false;
  // Build masks from the gold structure instead of earlier predictions.
  bool teacher_forcing = false;
  // Check every ancestor mask against validate_mask while decoding.
  bool validate_masks = false;
};

struct ParentPrediction {
  std::vector<std::size_t> slots;     // chosen window slots
  std::vector<double> probabilities;  // softmax (rank) or sigmoid (bce)
};

// Picks parents from the head logits of one window. Rank mode scores slots
// 0..L-2 with a softmax; bce mode scores 0..L-1 (self allowed) with sigmoids.
// Equal scores resolve to the most recent slot.
ParentPrediction select_parents(std::span<const double> logits, LossKind loss,
                                bool threshold_mode = false);

// Runs the model on one window whose prefix graph holds the structure known
// so far. `encodings` are eval-mode utterance vectors for the conversation.
ParentPrediction predict_parent(const HierarchicalModel& model,
                                const Conversation& conversation,
                                const tk::Matrix& encodings,
                                const WindowView& window,
                                const DecodeOptions& options = {});

struct TargetDecision {
  Index target = 0;
  std::vector<Index> candidates;  // original indices of the scored slots
  std::vector<double> probabilities;
  std::vector<Index> parents;
};

struct DecodedStructure {
  ReplyGraph graph;
  std::vector<TargetDecision> decisions;
  std::vector<Index> oversize_targets;
};

// Greedy left-to-right reconstruction; each step's mask comes from the
// predictions made so far (or gold, under teacher forcing).
DecodedStructure reconstruct(const HierarchicalModel& model,
                             const LabeledConversation& item,
                             const DecodeOptions& options = {});

// Decodes every conversation; the returned corpus carries predicted parents.
Corpus decode_corpus(const HierarchicalModel& model, const Corpus& corpus,
                     const DecodeOptions& options = {},
                     std::vector<DecodedStructure>* decoded = nullptr);

// Every non-root utterance replies to the root.
DecodedStructure predict_first_baseline(const Conversation& conversation);

// conv_id,target_id,candidate_id,probability
std::string probability_sidecar_csv(
    const std::vector<LabeledConversation>& inputs,
    const std::vector<DecodedStructure>& decoded);

}  // namespace convstruct
