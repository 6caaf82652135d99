#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "convstruct/corpus.hpp"
#include "convstruct/nn.hpp"

namespace convstruct {

class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::size_t kCls = 2;
  static constexpr std::size_t kReserved = 3;

  Vocabulary() = default;
  // Tokens ordered by descending count, ties lexicographic.
  static Vocabulary build(const Corpus& corpus, std::size_t min_count = 1);
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::size_t size() const { return kReserved + tokens_.size(); }
  std::size_t id(const std::string& token) const;
  const std::string& token(std::size_t id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  // One token per line; line number = id - kReserved.
  std::string to_text() const;
  static Vocabulary from_text(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> ids_;
};

// Lowercased runs of [a-z0-9_] (and non-ASCII bytes); every other
// non-space character is its own token.
std::vector<std::string> split_tokens(const std::string& text);

// [CLS] + token ids, truncated to max_tokens, PAD-filled to max_tokens.
std::vector<std::size_t> tokenize(const std::string& text,
                                  const Vocabulary& vocab,
                                  std::size_t max_tokens);

enum class Pooling { kTransformer, kMeanPool };

struct EncoderConfig {
  std::size_t vocab_size = 0;  // 0: filled in from the vocabulary
  std::size_t embed_dim = 128;
  std::size_t num_layers = 2;
  std::size_t num_heads = 4;
  std::size_t intermediate_dim = 256;
  std::size_t max_tokens = 50;
  std::size_t output_dim = 128;
  Pooling pooling = Pooling::kTransformer;
  double dropout = 0.1;

  void validate() const;
  nlohmann::json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& j);
  static EncoderConfig from_json(const nlohmann::json& j,
                                 const EncoderConfig& base);
};

// Shared utterance encoder: token + position embeddings, a small transformer
// and a tanh pooler over the [CLS] position. The mean-pool variant skips
// positions and attention and averages token embeddings.
class UtteranceEncoder {
 public:
  UtteranceEncoder() = default;
  UtteranceEncoder(const EncoderConfig& config, Rng& rng);

  const EncoderConfig& config() const { return config_; }

  // PAD positions never influence the output: they are dropped before the
  // forward pass. Returns a 1 x output_dim row.
  tk::Tensor encode(std::span<const std::size_t> ids, bool train = false,
                    Rng* rng = nullptr) const;

  void collect(const std::string& prefix, nn::ParameterSet& params) const;

 private:
  EncoderConfig config_;
  tk::Tensor token_embedding_;
  tk::Tensor position_embedding_;
  nn::LayerNorm embedding_norm_;
  std::vector<nn::TransformerLayer> layers_;
  nn::Linear pooler_;
};

// Pairwise/utterance features for the "+F" configuration. This is an
// approximation of the external IRC feature set, versioned by schema id.
inline constexpr const char* kFeatureSchema = "convstruct-irc-features-v1";
inline constexpr std::size_t kFeatureCount = 9;
using FeatureVector = std::array<double, kFeatureCount>;

extern const std::array<const char*, kFeatureCount> kFeatureNames;

// True when `text` opens with "name:" or "name," addressing `name`.
bool addresses(const std::string& text, const std::string& name);

FeatureVector extract_features(const Utterance& history,
                               const Utterance& target,
                               const Conversation& conversation);

}  // namespace convstruct
