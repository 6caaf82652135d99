#include "convstruct/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "convstruct/error.hpp"

namespace convstruct {

std::string loss_name(LossKind kind) {
  return kind == LossKind::kRank ? "rank" : "bce";
}

LossKind parse_loss(const std::string& name) {
  if (name == "rank") return LossKind::kRank;
  if (name == "bce") return LossKind::kBce;
  throw Error(ErrorKind::kInvalidConfig, "unknown loss '" + name + "'");
}

ModelConfig ModelConfig::reddit() { return ModelConfig{}; }

ModelConfig ModelConfig::irc() {
  ModelConfig c;
  c.loss = LossKind::kBce;
  c.max_window = 40;
  c.encoder.max_tokens = 36;
  return c;
}

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.layers = 3;
  c.hidden = 64;
  c.intermediate = 128;
  c.heads = 4;
  c.dropout = 0.1;
  c.encoder.embed_dim = 64;
  c.encoder.num_layers = 1;
  c.encoder.num_heads = 4;
  c.encoder.intermediate_dim = 128;
  c.encoder.output_dim = 64;
  c.encoder.max_tokens = 24;
  c.encoder.pooling = Pooling::kMeanPool;
  c.encoder.dropout = 0.0;
  return c;
}

void ModelConfig::validate() const {
  encoder.validate();
  if (hidden == 0 || heads == 0 || hidden % heads != 0) {
    throw Error(ErrorKind::kInvalidConfig,
                "hidden must be divisible by heads");
  }
  if (max_window < 2) {
    throw Error(ErrorKind::kInvalidConfig, "max_window must be >= 2");
  }
  if (mask.kind == MaskSpec::Kind::kDepth && mask.depth == 0) {
    throw Error(ErrorKind::kInvalidConfig, "ancestor depth must be >= 1");
  }
}

nlohmann::json ModelConfig::to_json() const {
  return {{"encoder", encoder.to_json()},
          {"layers", layers},
          {"hidden", hidden},
          {"intermediate", intermediate},
          {"heads", heads},
          {"loss", loss_name(loss)},
          {"feature_mode", feature_mode},
          {"positional", positional},
          {"target_embedding", target_embedding},
          {"max_window", max_window},
          {"dropout", dropout},
          {"mask", mask.name()}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  return from_json(j, ModelConfig{});
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j,
                                   const ModelConfig& base) {
  ModelConfig c = base;
  if (j.contains("encoder")) {
    c.encoder = EncoderConfig::from_json(j.at("encoder"), base.encoder);
  }
  c.layers = j.value("layers", c.layers);
  c.hidden = j.value("hidden", c.hidden);
  c.intermediate = j.value("intermediate", c.intermediate);
  c.heads = j.value("heads", c.heads);
  c.loss = parse_loss(j.value("loss", loss_name(c.loss)));
  c.feature_mode = j.value("feature_mode", c.feature_mode);
  c.positional = j.value("positional", c.positional);
  c.target_embedding = j.value("target_embedding", c.target_embedding);
  c.max_window = j.value("max_window", c.max_window);
  c.dropout = j.value("dropout", c.dropout);
  c.mask = MaskSpec::parse(j.value("mask", c.mask.name()));
  return c;
}

std::vector<double> parent_distribution(std::span<const double> logits) {
  if (logits.empty()) {
    throw Error(ErrorKind::kNoCandidates, "no candidate logits");
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

double rank_loss(std::span<const double> logits, std::span<const int> labels) {
  if (logits.size() != labels.size()) {
    throw Error(ErrorKind::kShapeError, "rank_loss logits/labels size mismatch");
  }
  std::size_t positives = 0;
  std::size_t parent = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0) {
      ++positives;
      parent = i;
    }
  }
  if (positives != 1) {
    throw Error(ErrorKind::kInvalidLabel,
                "rank loss needs exactly one positive, got " +
                    std::to_string(positives));
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double t : logits) z += std::exp(t - m);
  return m + std::log(z) - logits[parent];
}

double bce_loss(std::span<const double> logits, std::span<const int> labels) {
  if (logits.size() != labels.size()) {
    throw Error(ErrorKind::kShapeError, "bce_loss logits/labels size mismatch");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double t = logits[i];
    const double y = labels[i] != 0 ? 1.0 : 0.0;
    loss += std::max(t, 0.0) - t * y + std::log1p(std::exp(-std::abs(t)));
  }
  return loss;
}

tk::Tensor rank_loss(const tk::Tensor& logits, std::size_t parent) {
  if (logits.numel() < 2) {
    throw Error(ErrorKind::kNoCandidates, "rank loss needs L >= 2");
  }
  return tk::softmax_cross_entropy(logits, logits.numel() - 1, parent);
}

tk::Tensor bce_loss(const tk::Tensor& logits, std::span<const double> labels) {
  return tk::bce_with_logits(logits, labels);
}

WindowView build_window(const LabeledConversation& item, Index target,
                        std::size_t max_window) {
  const auto& conv = item.conversation;
  if (target >= conv.size()) {
    throw Error(ErrorKind::kNotFound, "target " + std::to_string(target));
  }
  WindowView view;
  if (conv.mode == Mode::kRedditTree) {
    std::vector<Index> prefix(target + 1);
    std::iota(prefix.begin(), prefix.end(), Index{0});
    if (prefix.size() > max_window && target > 0) {
      const LabeledConversation sub = subconversation(item, prefix);
      PrunedWindow pruned = prune_to_window(sub, target, max_window);
      view.kept = pruned.kept;  // sub indices coincide with originals
      view.oversize = pruned.oversize;
    } else {
      view.kept = std::move(prefix);
    }
  } else {
    const IrcWindow w = irc_window(conv, target, max_window);
    for (Index i = w.first; i <= w.last; ++i) view.kept.push_back(i);
  }
  LabeledConversation local = subconversation(item, view.kept);
  view.prefix = local.graph;
  view.prefix.set_parents(view.kept.size() - 1, {});
  return view;
}

std::optional<std::size_t> rank_label(const WindowView& window,
                                      const ReplyGraph& gold, Index target) {
  auto parent = gold.parent(target);
  if (!parent) return std::nullopt;
  for (std::size_t k = 0; k + 1 < window.kept.size(); ++k) {
    if (window.kept[k] == *parent) return k;
  }
  return std::nullopt;
}

std::vector<double> bce_labels(const WindowView& window,
                               const ReplyGraph& gold, Index target) {
  std::vector<double> y(window.kept.size(), 0.0);
  for (std::size_t k = 0; k < window.kept.size(); ++k) {
    if (gold.has_parent(target, window.kept[k])) y[k] = 1.0;
  }
  return y;
}

tk::Matrix window_features(const Conversation& conversation,
                           const WindowView& window) {
  const Utterance& target = conversation.utterances.at(window.kept.back());
  tk::Matrix f(static_cast<long>(window.kept.size()),
               static_cast<long>(kFeatureCount));
  for (std::size_t k = 0; k < window.kept.size(); ++k) {
    const FeatureVector fv = extract_features(
        conversation.utterances.at(window.kept[k]), target, conversation);
    for (std::size_t c = 0; c < kFeatureCount; ++c) {
      f(static_cast<long>(k), static_cast<long>(c)) = fv[c];
    }
  }
  return f;
}

HierarchicalModel::HierarchicalModel(const ModelConfig& config,
                                     Vocabulary vocab, std::uint64_t seed)
    : config_(config), vocab_(std::move(vocab)) {
  config_.encoder.vocab_size = vocab_.size();
  config_.validate();
  Rng rng(seed);
  encoder_ = UtteranceEncoder(config_.encoder, rng);
  input_projection_ = nn::Linear(config_.encoder.output_dim, config_.hidden, rng);
  if (config_.feature_mode) {
    feature_weight_ = tk::Tensor(
        nn::truncated_normal(kFeatureCount, config_.hidden, 0.02, rng), true);
  }
  if (config_.positional) {
    position_embedding_ = tk::Tensor(
        nn::truncated_normal(config_.max_window, config_.hidden, 0.02, rng),
        true);
  }
  if (config_.target_embedding) {
    target_embedding_ = tk::Tensor(
        nn::truncated_normal(1, config_.hidden, 0.02, rng), true);
  }
  input_norm_ = nn::LayerNorm(config_.hidden);
  for (std::size_t l = 0; l < config_.layers; ++l) {
    layers_.emplace_back(config_.hidden, config_.intermediate, config_.heads,
                         config_.dropout, rng);
  }
  head_weight_ = tk::Tensor(
      nn::truncated_normal(
          1, config_.hidden, 1.0 / std::sqrt(static_cast<double>(config_.hidden)), rng),
      true);
  head_bias_ = tk::Tensor(tk::Matrix::Zero(1, 1), true);
}

nn::ParameterSet HierarchicalModel::encoder_parameters() const {
  nn::ParameterSet p;
  encoder_.collect("encoder", p);
  return p;
}

nn::ParameterSet HierarchicalModel::upper_parameters() const {
  nn::ParameterSet p;
  input_projection_.collect("input_projection", p);
  if (config_.feature_mode) p.add("feature_projection.weight", feature_weight_);
  if (config_.positional) p.add("position_embedding", position_embedding_);
  if (config_.target_embedding) p.add("target_embedding", target_embedding_);
  input_norm_.collect("input_norm", p);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    layers_[l].collect("second_stage.layer" + std::to_string(l), p);
  }
  p.add("head.weight", head_weight_);
  p.add("head.bias", head_bias_);
  return p;
}

nn::ParameterSet HierarchicalModel::parameters() const {
  nn::ParameterSet p = encoder_parameters();
  p.append(upper_parameters());
  return p;
}

std::vector<std::size_t> HierarchicalModel::token_ids(const Utterance& u) const {
  return tokenize(u.text, vocab_, config_.encoder.max_tokens);
}

tk::Matrix HierarchicalModel::encode_conversation(
    const Conversation& conversation) const {
  tk::Matrix out(static_cast<long>(conversation.size()),
                 static_cast<long>(config_.encoder.output_dim));
  for (std::size_t i = 0; i < conversation.size(); ++i) {
    const auto ids = token_ids(conversation.utterances[i]);
    out.row(static_cast<long>(i)) = encoder_.encode(ids).value().row(0);
  }
  return out;
}

tk::Tensor HierarchicalModel::encode_window(const Conversation& conversation,
                                            const WindowView& window,
                                            bool train, Rng* rng) const {
  std::vector<tk::Tensor> rows;
  rows.reserve(window.kept.size());
  for (Index i : window.kept) {
    const auto ids = token_ids(conversation.utterances.at(i));
    rows.push_back(encoder_.encode(ids, train, rng));
  }
  return tk::concat_rows(rows);
}

tk::Tensor HierarchicalModel::project_inputs(const tk::Tensor& utterance_vectors,
                                             const tk::Tensor* features) const {
  if (utterance_vectors.cols() != config_.encoder.output_dim) {
    throw Error(ErrorKind::kShapeError,
                "utterance vectors have " +
                    std::to_string(utterance_vectors.cols()) +
                    " columns, expected " +
                    std::to_string(config_.encoder.output_dim));
  }
  tk::Tensor x = input_projection_.forward(utterance_vectors);
  if (config_.feature_mode) {
    if (features == nullptr) {
      throw Error(ErrorKind::kShapeError, "feature mode needs a feature matrix");
    }
    if (features->rows() != utterance_vectors.rows() ||
        features->cols() != kFeatureCount) {
      throw Error(ErrorKind::kShapeError, "feature matrix shape mismatch");
    }
    x = tk::add(x, tk::matmul(*features, feature_weight_));
  }
  return x;
}

tk::Tensor HierarchicalModel::contextualize(const tk::Tensor& utterance_vectors,
                                            const tk::Tensor* features,
                                            const AttentionMask& mask,
                                            bool train, Rng* rng) const {
  const std::size_t length = utterance_vectors.rows();
  if (mask.size() != length) {
    throw Error(ErrorKind::kShapeError,
                "mask size " + std::to_string(mask.size()) + " vs " +
                    std::to_string(length) + " utterances");
  }
  tk::Tensor x = project_inputs(utterance_vectors, features);
  if (config_.positional) {
    if (length > config_.max_window) {
      throw Error(ErrorKind::kShapeError, "window longer than max_window");
    }
    std::vector<std::size_t> slots(length);
    std::iota(slots.begin(), slots.end(), std::size_t{0});
    x = tk::add(x, tk::gather_rows(position_embedding_, slots));
  }
  if (config_.target_embedding) {
    x = tk::add_to_row(x, length - 1, target_embedding_);
  }
  x = tk::dropout(input_norm_.forward(x), config_.dropout, train, rng);
  for (const auto& layer : layers_) x = layer.forward(x, mask, train, rng);
  return x;
}

tk::Tensor HierarchicalModel::parent_logits(const tk::Tensor& contextual) const {
  if (contextual.cols() != config_.hidden) {
    throw Error(ErrorKind::kShapeError, "contextual width mismatch");
  }
  return tk::add(tk::matmul_nt(contextual, head_weight_), head_bias_);
}

nlohmann::json HierarchicalModel::checkpoint_meta() const {
  return {{"format", "convstruct-mht-v1"},
          {"model", config_.to_json()},
          {"second_stage_positions", config_.positional},
          {"feature_schema", config_.feature_mode ? kFeatureSchema : ""},
          {"vocab", vocab_.tokens()}};
}

void HierarchicalModel::save(const std::filesystem::path& path) const {
  nn::save_checkpoint(path, parameters(), checkpoint_meta());
}

HierarchicalModel HierarchicalModel::load(const std::filesystem::path& path) {
  const nlohmann::json meta = nn::read_checkpoint_meta(path);
  if (meta.value("format", std::string()) != "convstruct-mht-v1") {
    throw Error(ErrorKind::kParseError, "unknown checkpoint format");
  }
  ModelConfig config = ModelConfig::from_json(meta.at("model"));
  Vocabulary vocab =
      Vocabulary::from_tokens(meta.at("vocab").get<std::vector<std::string>>());
  HierarchicalModel model(config, std::move(vocab), 0);
  nn::ParameterSet params = model.parameters();
  nn::load_checkpoint(path, params);
  return model;
}

}  // namespace convstruct
