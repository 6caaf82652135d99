#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "convstruct/model.hpp"

namespace convstruct {

struct TrainConfig {
  double stage1_lr = 1e-4;
  std::size_t stage1_batch = 32;
  std::size_t stage1_epochs = 10;
  double stage2_lr = 1e-5;
  std::size_t stage2_batch = 8;
  std::size_t stage2_epochs = 10;
  // Epochs without a dev improvement before a stage ends early; 0 disables.
  std::size_t early_stopping_patience = 3;
  std::uint64_t seed = 0;

  static TrainConfig reddit();
  static TrainConfig irc();
  static TrainConfig desk();

  void validate() const;
  nlohmann::json to_json() const;
  // Missing keys keep the values of `base`.
  static TrainConfig from_json(const nlohmann::json& j);
  static TrainConfig from_json(const nlohmann::json& j,
                               const TrainConfig& base);
};

struct EpochRecord {
  long step = 0;  // optimizer steps taken so far
  int stage = 1;
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_graph_acc = 0.0;
};

struct TrainResult {
  HierarchicalModel model;
  std::vector<EpochRecord> curve;
  std::uint64_t encoder_checksum_initial = 0;
  std::uint64_t encoder_checksum_after_stage1 = 0;
  // Live parameters at the end of stage 2, before the best checkpoint is
  // restored.
  std::uint64_t encoder_checksum_after_stage2 = 0;
  double best_dev_graph_acc = 0.0;
  int best_stage = 0;
  std::size_t best_epoch = 0;
};

// Progress hook, called once per finished epoch.
using EpochCallback = std::function<void(const EpochRecord&)>;

// One training example: predict `target`'s parent inside `conversation`.
struct TrainSample {
  std::size_t conversation = 0;
  Index target = 0;
};

std::vector<TrainSample> training_samples(const Corpus& corpus);

// Summed loss of one example under gold-structure masks, given the window
// rows' utterance vectors.
tk::Tensor sample_loss(const HierarchicalModel& model,
                       const LabeledConversation& item, Index target,
                       const tk::Tensor& window_vectors, bool train, Rng* rng);

// Micro graph accuracy of free-running greedy decoding over `corpus`.
double corpus_graph_accuracy(const HierarchicalModel& model, const Corpus& corpus);

TrainResult train_two_stage(const Corpus& train, const Corpus& dev,
                            const ModelConfig& model_config,
                            const TrainConfig& train_config,
                            const EpochCallback& on_epoch = {});

struct AblationRow {
  std::string mask;
  double graph_acc = 0.0;
  double conv_acc = 0.0;
  double dev_graph_acc = 0.0;
};

// Trains one model per mask variant and scores free-running decoding on
// `test`. Every variant starts from the same seed.
std::vector<AblationRow> run_ablation(const Corpus& train, const Corpus& dev,
                                      const Corpus& test,
                                      const ModelConfig& model_config,
                                      const TrainConfig& train_config,
                                      const std::vector<MaskSpec>& masks,
                                      const EpochCallback& on_epoch = {});

// mask,graph_acc,conv_acc,dev_graph_acc
std::string ablation_csv(const std::vector<AblationRow>& rows);

// step,stage,train_loss,dev_graph_acc
std::string metrics_csv(const std::vector<EpochRecord>& curve);

}  // namespace convstruct
