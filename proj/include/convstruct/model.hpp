#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "convstruct/encoder.hpp"
#include "convstruct/mask.hpp"

namespace convstruct {

enum class LossKind { kRank, kBce };

std::string loss_name(LossKind kind);
LossKind parse_loss(const std::string& name);

struct ModelConfig {
  EncoderConfig encoder;
  std::size_t layers = 4;
  std::size_t hidden = 300;
  std::size_t intermediate = 1024;
  std::size_t heads = 4;
  LossKind loss = LossKind::kRank;
  bool feature_mode = false;
  // Learned position embeddings over window slots in the second stage.
  bool positional = false;
  // Learned vector added to the target row before the second stage.
  bool target_embedding = true;
  std::size_t max_window = 16;
  double dropout = 0.1;
  MaskSpec mask;

  // Second stage at full size (4 x 300, 1024 inner, 4 heads).
  static ModelConfig reddit();
  static ModelConfig irc();
  // Scaled-down preset for single-core runs.
  static ModelConfig desk();

  void validate() const;
  nlohmann::json to_json() const;
  // Missing keys keep the values of `base`.
  static ModelConfig from_json(const nlohmann::json& j);
  static ModelConfig from_json(const nlohmann::json& j,
                               const ModelConfig& base);
};

// --- losses --------------------------------------------------------------
// Softmax over the candidate logits t_1..t_{L-1}.
std::vector<double> parent_distribution(std::span<const double> logits);
// Negative log likelihood of the single positive label; InvalidLabel unless
// exactly one label is set.
double rank_loss(std::span<const double> logits, std::span<const int> labels);
// Summed per-utterance binary cross-entropy over t_1..t_L.
double bce_loss(std::span<const double> logits, std::span<const int> labels);

// Tensor forms used for training. `logits` is the L x 1 head output.
tk::Tensor rank_loss(const tk::Tensor& logits, std::size_t parent);
tk::Tensor bce_loss(const tk::Tensor& logits, std::span<const double> labels);

// --- windows -------------------------------------------------------------
// History (+ target last) seen when predicting one target.
struct WindowView {
  std::vector<Index> kept;  // original indices, ascending, target last
  ReplyGraph prefix;        // window-local parents of the history rows
  bool oversize = false;

  std::size_t size() const { return kept.size(); }
};

// Tree mode: prefix 0..target, pruned to max_window by leaf removal using
// `graph`. IRC mode: the max_window most recent messages. Edges leaving the
// window are dropped.
WindowView build_window(const LabeledConversation& item, Index target,
                        std::size_t max_window);

// Labels over the window for the gold graph. Rank: parent slot among the
// history rows (nullopt when the parent fell outside the window). Bce: one
// 0/1 per row including the target itself.
std::optional<std::size_t> rank_label(const WindowView& window,
                                      const ReplyGraph& gold, Index target);
std::vector<double> bce_labels(const WindowView& window,
                               const ReplyGraph& gold, Index target);

// Feature rows for each window slot paired with the target (L x 9).
tk::Matrix window_features(const Conversation& conversation,
                           const WindowView& window);

// --- model ---------------------------------------------------------------
class HierarchicalModel {
 public:
  HierarchicalModel(const ModelConfig& config, Vocabulary vocab,
                    std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  const UtteranceEncoder& encoder() const { return encoder_; }

  nn::ParameterSet encoder_parameters() const;
  // Input projection, second-stage transformer and output head.
  nn::ParameterSet upper_parameters() const;
  nn::ParameterSet parameters() const;

  std::vector<std::size_t> token_ids(const Utterance& u) const;

  // Eval-mode encodings of every utterance (N x output_dim).
  tk::Matrix encode_conversation(const Conversation& conversation) const;
  // Differentiable encodings of the window rows.
  tk::Tensor encode_window(const Conversation& conversation,
                           const WindowView& window, bool train,
                           Rng* rng) const;

  // Concatenates features (when enabled) and projects to the hidden size.
  tk::Tensor project_inputs(const tk::Tensor& utterance_vectors,
                            const tk::Tensor* features) const;

  // V (L x output_dim) -> contextual vectors (L x hidden) under `mask`.
  tk::Tensor contextualize(const tk::Tensor& utterance_vectors,
                           const tk::Tensor* features,
                           const AttentionMask& mask, bool train = false,
                           Rng* rng = nullptr) const;

  // t_i = W_o V~_i + b_o, as an L x 1 column.
  tk::Tensor parent_logits(const tk::Tensor& contextual) const;

  const tk::Tensor& head_weight() const { return head_weight_; }
  const tk::Tensor& head_bias() const { return head_bias_; }

  nlohmann::json checkpoint_meta() const;
  void save(const std::filesystem::path& path) const;
  static HierarchicalModel load(const std::filesystem::path& path);

 private:
  ModelConfig config_;
  Vocabulary vocab_;
  UtteranceEncoder encoder_;
  nn::Linear input_projection_;
  tk::Tensor feature_weight_;  // kFeatureCount x hidden, no bias
  tk::Tensor position_embedding_;
  tk::Tensor target_embedding_;
  nn::LayerNorm input_norm_;
  std::vector<nn::TransformerLayer> layers_;
  tk::Tensor head_weight_;  // 1 x hidden
  tk::Tensor head_bias_;    // 1 x 1
};

}  // namespace convstruct
