#include "convstruct/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <optional>

#include "convstruct/decode.hpp"
#include "convstruct/error.hpp"
#include "convstruct/metrics.hpp"

namespace convstruct {

TrainConfig TrainConfig::reddit() { return TrainConfig{}; }

TrainConfig TrainConfig::irc() {
  TrainConfig c;
  c.stage1_lr = 1e-5;
  c.stage1_batch = 32;
  c.stage2_lr = 1e-7;
  c.stage2_batch = 4;
  return c;
}

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.stage1_lr = 2e-3;
  c.stage1_batch = 16;
  c.stage2_lr = 1e-3;
  c.stage2_batch = 16;
  c.stage1_epochs = 40;
  c.stage2_epochs = 40;
  c.early_stopping_patience = 12;
  return c;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) {
    throw Error(ErrorKind::kInvalidConfig, "train config: " + msg);
  };
  if (!(stage1_lr > 0.0) || !(stage2_lr > 0.0)) fail("learning rates must be positive");
  if (stage1_batch == 0 || stage2_batch == 0) fail("batch sizes must be positive");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"stage1_lr", stage1_lr},
          {"stage1_batch", stage1_batch},
          {"stage1_epochs", stage1_epochs},
          {"stage2_lr", stage2_lr},
          {"stage2_batch", stage2_batch},
          {"stage2_epochs", stage2_epochs},
          {"early_stopping_patience", early_stopping_patience},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  return from_json(j, TrainConfig{});
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j, const TrainConfig& base) {
  TrainConfig c = base;
  try {
    c.stage1_lr = j.value("stage1_lr", c.stage1_lr);
    c.stage1_batch = j.value("stage1_batch", c.stage1_batch);
    c.stage1_epochs = j.value("stage1_epochs", c.stage1_epochs);
    c.stage2_lr = j.value("stage2_lr", c.stage2_lr);
    c.stage2_batch = j.value("stage2_batch", c.stage2_batch);
    c.stage2_epochs = j.value("stage2_epochs", c.stage2_epochs);
    c.early_stopping_patience =
        j.value("early_stopping_patience", c.early_stopping_patience);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kInvalidConfig, std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

bool has_label(const LabeledConversation& item, Index target,
               const ModelConfig& config) {
  const WindowView window = build_window(item, target, config.max_window);
  if (config.loss == LossKind::kRank) {
    return window.size() >= 2 && rank_label(window, item.graph, target).has_value();
  }
  for (double y : bce_labels(window, item.graph, target)) {
    if (y > 0.0) return true;
  }
  return false;
}

std::vector<TrainSample> labeled_samples(const Corpus& corpus,
                                         const ModelConfig& config) {
  std::vector<TrainSample> out;
  for (const auto& s : training_samples(corpus)) {
    if (has_label(corpus[s.conversation], s.target, config)) out.push_back(s);
  }
  return out;
}

}  // namespace

std::vector<TrainSample> training_samples(const Corpus& corpus) {
  std::vector<TrainSample> out;
  for (std::size_t c = 0; c < corpus.size(); ++c) {
    for (Index t : annotated_targets(corpus[c])) out.push_back({c, t});
  }
  return out;
}

tk::Tensor sample_loss(const HierarchicalModel& model,
                       const LabeledConversation& item, Index target,
                       const tk::Tensor& window_vectors, bool train, Rng* rng) {
  const ModelConfig& cfg = model.config();
  const WindowView window = build_window(item, target, cfg.max_window);
  if (window_vectors.rows() != window.size()) {
    throw Error(ErrorKind::kShapeError, "window vectors do not match the window");
  }
  const AttentionMask mask = build_mask(cfg.mask, window.prefix, window.size());
  std::optional<tk::Tensor> features;
  if (cfg.feature_mode) {
    features.emplace(window_features(item.conversation, window));
  }
  const tk::Tensor contextual = model.contextualize(
      window_vectors, features ? &*features : nullptr, mask, train, rng);
  const tk::Tensor logits = model.parent_logits(contextual);
  if (cfg.loss == LossKind::kRank) {
    const auto label = rank_label(window, item.graph, target);
    if (!label) {
      throw Error(ErrorKind::kInvalidLabel,
                  "gold parent of utterance " + std::to_string(target) +
                      " is outside its window");
    }
    return rank_loss(logits, *label);
  }
  return bce_loss(logits, bce_labels(window, item.graph, target));
}

double corpus_graph_accuracy(const HierarchicalModel& model, const Corpus& corpus) {
  if (corpus.empty()) return 0.0;
  Corpus predicted;
  predicted.reserve(corpus.size());
  for (const auto& item : corpus) {
    predicted.push_back({item.conversation, reconstruct(model, item).graph});
  }
  return evaluate(predicted, corpus).graph_acc;
}

namespace {

struct StageSpec {
  int stage;
  double lr;
  std::size_t batch;
  std::size_t epochs;
  bool encoder_trainable;
};

class Trainer {
 public:
  Trainer(const Corpus& train, const Corpus& dev, HierarchicalModel& model,
          const TrainConfig& config, const EpochCallback& on_epoch)
      : train_(train), dev_(dev), model_(model), config_(config),
        on_epoch_(on_epoch), rng_(config.seed ^ 0x5eedULL),
        samples_(labeled_samples(train, model.config())) {
    if (samples_.empty()) {
      throw Error(ErrorKind::kEmptyCorpus, "training corpus has no labeled targets");
    }
    best_ = model_.parameters().snapshot();
  }

  void run_stage(const StageSpec& spec) {
    nn::ParameterSet encoder = model_.encoder_parameters();
    encoder.set_requires_grad(spec.encoder_trainable);
    nn::ParameterSet trainable =
        spec.encoder_trainable ? model_.parameters() : model_.upper_parameters();
    std::vector<tk::Tensor> params = trainable.tensors();
    nn::AdamState adam;
    adam.lr = spec.lr;

    // With a frozen encoder the utterance vectors are constants.
    std::vector<tk::Matrix> cached;
    if (!spec.encoder_trainable) {
      cached.reserve(train_.size());
      for (const auto& item : train_) {
        cached.push_back(model_.encode_conversation(item.conversation));
      }
    }

    std::size_t stale = 0;
    for (std::size_t epoch = 1; epoch <= spec.epochs; ++epoch) {
      std::vector<TrainSample> order = samples_;
      shuffle(std::span<TrainSample>(order), rng_);
      double loss_sum = 0.0;
      for (std::size_t start = 0; start < order.size(); start += spec.batch) {
        const std::size_t end = std::min(order.size(), start + spec.batch);
        const double batch_loss = train_batch(
            std::span<const TrainSample>(order.data() + start, end - start),
            spec, cached, params, adam);
        loss_sum += batch_loss * static_cast<double>(end - start);
      }

      EpochRecord record;
      record.step = total_steps_;
      record.stage = spec.stage;
      record.epoch = epoch;
      record.train_loss = loss_sum / static_cast<double>(order.size());
      record.dev_graph_acc = dev_.empty() ? 0.0 : corpus_graph_accuracy(model_, dev_);
      curve_.push_back(record);
      if (on_epoch_) on_epoch_(record);

      if (!have_best_ || dev_.empty() || record.dev_graph_acc > best_acc_) {
        have_best_ = true;
        best_acc_ = record.dev_graph_acc;
        best_stage_ = spec.stage;
        best_epoch_ = epoch;
        best_ = model_.parameters().snapshot();
        stale = 0;
      } else if (config_.early_stopping_patience > 0 &&
                 ++stale >= config_.early_stopping_patience) {
        break;
      }
    }
    encoder.set_requires_grad(true);
  }

  void restore_best() { model_.parameters().restore(best_); }

  std::vector<EpochRecord> curve_;
  double best_acc_ = 0.0;
  int best_stage_ = 0;
  std::size_t best_epoch_ = 0;

 private:
  double train_batch(std::span<const TrainSample> batch, const StageSpec& spec,
                     const std::vector<tk::Matrix>& cached,
                     std::vector<tk::Tensor>& params, nn::AdamState& adam) {
    // Each conversation in the batch is encoded once and shared by its targets.
    std::map<std::size_t, std::vector<tk::Tensor>> encoded;
    std::optional<tk::Tensor> total;
    for (const TrainSample& s : batch) {
      const LabeledConversation& item = train_[s.conversation];
      const WindowView window =
          build_window(item, s.target, model_.config().max_window);
      tk::Tensor rows;
      if (!spec.encoder_trainable) {
        const tk::Matrix& enc = cached[s.conversation];
        tk::Matrix m(static_cast<long>(window.size()), enc.cols());
        for (std::size_t k = 0; k < window.size(); ++k) {
          m.row(static_cast<long>(k)) = enc.row(static_cast<long>(window.kept[k]));
        }
        rows = tk::Tensor(std::move(m));
      } else {
        auto& vectors = encoded[s.conversation];
        if (vectors.empty()) {
          for (const auto& u : item.conversation.utterances) {
            vectors.push_back(
                model_.encoder().encode(model_.token_ids(u), true, &rng_));
          }
        }
        std::vector<tk::Tensor> parts;
        parts.reserve(window.size());
        for (Index i : window.kept) parts.push_back(vectors[i]);
        rows = tk::concat_rows(parts);
      }
      tk::Tensor loss = sample_loss(model_, item, s.target, rows, true, &rng_);
      total = total ? tk::add(*total, loss) : loss;
    }
    tk::Tensor mean = tk::scale(*total, 1.0 / static_cast<double>(batch.size()));
    const double value = mean.item();
    if (!std::isfinite(value)) {
      throw DivergedError(total_steps_ + 1,
                          "non-finite training loss in stage " +
                              std::to_string(spec.stage));
    }
    tk::backward(mean);
    nn::adam_step(std::span<tk::Tensor>(params), adam);
    ++total_steps_;
    return value;
  }

  const Corpus& train_;
  const Corpus& dev_;
  HierarchicalModel& model_;
  TrainConfig config_;
  EpochCallback on_epoch_;
  Rng rng_;
  std::vector<TrainSample> samples_;
  std::vector<tk::Matrix> best_;
  bool have_best_ = false;
  long total_steps_ = 0;
};

}  // namespace

TrainResult train_two_stage(const Corpus& train, const Corpus& dev,
                            const ModelConfig& model_config,
                            const TrainConfig& train_config,
                            const EpochCallback& on_epoch) {
  if (train.empty()) throw Error(ErrorKind::kEmptyCorpus, "training corpus is empty");
  train_config.validate();
  HierarchicalModel model(model_config, Vocabulary::build(train), train_config.seed);

  Trainer trainer(train, dev, model, train_config, on_epoch);
  const std::uint64_t initial = model.encoder_parameters().checksum();
  trainer.run_stage({1, train_config.stage1_lr, train_config.stage1_batch,
                     train_config.stage1_epochs, false});
  const std::uint64_t after1 = model.encoder_parameters().checksum();
  // Stage 2 resumes from the best stage-1 state.
  trainer.restore_best();
  trainer.run_stage({2, train_config.stage2_lr, train_config.stage2_batch,
                     train_config.stage2_epochs, true});
  const std::uint64_t after2 = model.encoder_parameters().checksum();
  trainer.restore_best();

  TrainResult result{std::move(model), std::move(trainer.curve_), initial, after1,
                     after2, trainer.best_acc_, trainer.best_stage_,
                     trainer.best_epoch_};
  return result;
}

std::vector<AblationRow> run_ablation(const Corpus& train, const Corpus& dev,
                                      const Corpus& test,
                                      const ModelConfig& model_config,
                                      const TrainConfig& train_config,
                                      const std::vector<MaskSpec>& masks,
                                      const EpochCallback& on_epoch) {
  if (test.empty()) throw Error(ErrorKind::kEmptyCorpus, "test corpus is empty");
  std::vector<AblationRow> rows;
  for (const MaskSpec& mask : masks) {
    ModelConfig config = model_config;
    config.mask = mask;
    TrainResult result = train_two_stage(train, dev, config, train_config, on_epoch);
    const MetricsReport report = evaluate(decode_corpus(result.model, test), test);
    rows.push_back({mask.name(), report.graph_acc, report.conv_acc,
                    result.best_dev_graph_acc});
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "mask,graph_acc,conv_acc,dev_graph_acc\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f\n", r.mask.c_str(),
                  r.graph_acc, r.conv_acc, r.dev_graph_acc);
    out += buf;
  }
  return out;
}

std::string metrics_csv(const std::vector<EpochRecord>& curve) {
  std::string out = "step,stage,train_loss,dev_graph_acc\n";
  char buf[128];
  for (const auto& r : curve) {
    std::snprintf(buf, sizeof(buf), "%ld,%d,%.17g,%.17g\n", r.step, r.stage,
                  r.train_loss, r.dev_graph_acc);
    out += buf;
  }
  return out;
}

}  // namespace convstruct
