#include "convstruct/encoder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <sstream>

#include "convstruct/error.hpp"
#include "convstruct/io.hpp"

namespace convstruct {

std::vector<std::string> split_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c >= 0x80 || std::isalnum(c) || c == '_') {
      word += static_cast<char>(c < 0x80 ? std::tolower(c) : c);
    } else {
      flush();
      if (!std::isspace(c)) out.emplace_back(1, static_cast<char>(c));
    }
  }
  flush();
  return out;
}

Vocabulary Vocabulary::build(const Corpus& corpus, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const auto& item : corpus) {
    for (const auto& u : item.conversation.utterances) {
      for (auto& t : split_tokens(u.text)) ++counts[t];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> sorted(counts.begin(),
                                                          counts.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens;
  for (auto& [t, c] : sorted) {
    if (c >= min_count) tokens.push_back(t);
  }
  return from_tokens(std::move(tokens));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  Vocabulary v;
  v.tokens_ = std::move(tokens);
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    if (!v.ids_.emplace(v.tokens_[i], kReserved + i).second) {
      throw Error(ErrorKind::kParseError,
                  "duplicate vocabulary token '" + v.tokens_[i] + "'");
    }
  }
  return v;
}

std::size_t Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(std::size_t id) const {
  static const std::string kNames[kReserved] = {"[PAD]", "[UNK]", "[CLS]"};
  if (id < kReserved) return kNames[id];
  if (id - kReserved >= tokens_.size()) {
    throw Error(ErrorKind::kNotFound, "token id " + std::to_string(id));
  }
  return tokens_[id - kReserved];
}

std::string Vocabulary::to_text() const {
  std::string out;
  for (const auto& t : tokens_) {
    out += t;
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::from_text(const std::string& text) {
  std::vector<std::string> tokens;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  return from_tokens(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  write_file_atomic(path, to_text());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  return from_text(read_file(path));
}

std::vector<std::size_t> tokenize(const std::string& text,
                                  const Vocabulary& vocab,
                                  std::size_t max_tokens) {
  std::vector<std::size_t> ids(max_tokens, Vocabulary::kPad);
  if (max_tokens == 0) return ids;
  ids[0] = Vocabulary::kCls;
  std::size_t at = 1;
  for (const auto& t : split_tokens(text)) {
    if (at >= max_tokens) break;
    ids[at++] = vocab.id(t);
  }
  return ids;
}

void EncoderConfig::validate() const {
  // 0 means "taken from the vocabulary when the model is built".
  if (vocab_size != 0 && vocab_size <= Vocabulary::kReserved) {
    throw Error(ErrorKind::kInvalidConfig, "encoder vocab_size too small");
  }
  if (embed_dim == 0 || num_heads == 0 || embed_dim % num_heads != 0) {
    throw Error(ErrorKind::kInvalidConfig,
                "embed_dim must be divisible by num_heads");
  }
  if (max_tokens == 0 || output_dim == 0) {
    throw Error(ErrorKind::kInvalidConfig, "max_tokens/output_dim must be > 0");
  }
}

nlohmann::json EncoderConfig::to_json() const {
  return {{"vocab_size", vocab_size},
          {"embed_dim", embed_dim},
          {"num_layers", num_layers},
          {"num_heads", num_heads},
          {"intermediate_dim", intermediate_dim},
          {"max_tokens", max_tokens},
          {"output_dim", output_dim},
          {"pooling", pooling == Pooling::kMeanPool ? "mean" : "transformer"},
          {"dropout", dropout}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
  return from_json(j, EncoderConfig{});
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j,
                                       const EncoderConfig& base) {
  EncoderConfig c = base;
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.num_layers = j.value("num_layers", c.num_layers);
  c.num_heads = j.value("num_heads", c.num_heads);
  c.intermediate_dim = j.value("intermediate_dim", c.intermediate_dim);
  c.max_tokens = j.value("max_tokens", c.max_tokens);
  c.output_dim = j.value("output_dim", c.output_dim);
  const std::string pooling = j.value(
      "pooling",
      std::string(base.pooling == Pooling::kMeanPool ? "mean" : "transformer"));
  if (pooling == "mean") {
    c.pooling = Pooling::kMeanPool;
  } else if (pooling == "transformer") {
    c.pooling = Pooling::kTransformer;
  } else {
    throw Error(ErrorKind::kInvalidConfig, "unknown pooling '" + pooling + "'");
  }
  c.dropout = j.value("dropout", c.dropout);
  return c;
}

UtteranceEncoder::UtteranceEncoder(const EncoderConfig& config, Rng& rng)
    : config_(config) {
  config_.validate();
  if (config_.vocab_size == 0) {
    throw Error(ErrorKind::kInvalidConfig, "encoder needs a vocabulary size");
  }
  token_embedding_ = tk::Tensor(
      nn::truncated_normal(config.vocab_size, config.embed_dim,
                           config.pooling == Pooling::kMeanPool ? 1.0 : 0.02, rng),
      true);
  if (config.pooling == Pooling::kTransformer) {
    position_embedding_ = tk::Tensor(
        nn::truncated_normal(config.max_tokens, config.embed_dim, 0.02, rng),
        true);
    embedding_norm_ = nn::LayerNorm(config.embed_dim);
    for (std::size_t l = 0; l < config.num_layers; ++l) {
      layers_.emplace_back(config.embed_dim, config.intermediate_dim,
                           config.num_heads, config.dropout, rng);
    }
  }
  pooler_ = nn::Linear(config.embed_dim, config.output_dim, rng);
}

tk::Tensor UtteranceEncoder::encode(std::span<const std::size_t> ids,
                                    bool train, Rng* rng) const {
  if (ids.size() > config_.max_tokens) {
    throw Error(ErrorKind::kShapeError,
                "sequence of " + std::to_string(ids.size()) +
                    " tokens exceeds max_tokens " +
                    std::to_string(config_.max_tokens));
  }
  std::vector<std::size_t> tokens;
  std::vector<std::size_t> positions;
  for (std::size_t p = 0; p < ids.size(); ++p) {
    if (ids[p] == Vocabulary::kPad) continue;
    tokens.push_back(ids[p] < config_.vocab_size ? ids[p] : Vocabulary::kUnk);
    positions.push_back(p);
  }
  if (tokens.empty()) {
    throw Error(ErrorKind::kShapeError, "utterance has no non-PAD tokens");
  }
  tk::Tensor embedded = tk::gather_rows(token_embedding_, tokens);
  tk::Tensor pooled;
  if (config_.pooling == Pooling::kMeanPool) {
    pooled = tk::mean_rows(embedded);
  } else {
    tk::Tensor x = tk::add(embedded, tk::gather_rows(position_embedding_, positions));
    x = tk::dropout(embedding_norm_.forward(x), config_.dropout, train, rng);
    const AttentionMask mask = full_mask(tokens.size());
    for (const auto& layer : layers_) x = layer.forward(x, mask, train, rng);
    const std::size_t cls = 0;
    pooled = tk::gather_rows(x, std::span<const std::size_t>(&cls, 1));
  }
  return tk::tanh(pooler_.forward(pooled));
}

void UtteranceEncoder::collect(const std::string& prefix,
                               nn::ParameterSet& params) const {
  params.add(prefix + ".token_embedding", token_embedding_);
  if (config_.pooling == Pooling::kTransformer) {
    params.add(prefix + ".position_embedding", position_embedding_);
    embedding_norm_.collect(prefix + ".embedding_norm", params);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      layers_[l].collect(prefix + ".layer" + std::to_string(l), params);
    }
  }
  pooler_.collect(prefix + ".pooler", params);
}

const std::array<const char*, kFeatureCount> kFeatureNames = {
    "position_gap",          "log_time_gap",   "same_author",
    "target_mentions_author", "author_mentions_target",
    "is_system_message",     "message_length", "year_offset",
    "channel_frequency_bucket"};

bool addresses(const std::string& text, const std::string& name) {
  if (name.empty() || text.size() <= name.size()) return false;
  for (std::size_t i = 0; i < name.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(text[i])) !=
        std::tolower(static_cast<unsigned char>(name[i]))) {
      return false;
    }
  }
  const char next = text[name.size()];
  return next == ':' || next == ',';
}

namespace {

// Days since 1970-01-01 to civil year (proleptic Gregorian).
long civil_year(std::int64_t seconds) {
  long z = static_cast<long>(std::floor(static_cast<double>(seconds) / 86400.0));
  z += 719468;
  const long era = (z >= 0 ? z : z - 146096) / 146097;
  const long doe = z - era * 146097;
  const long yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const long doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const long mp = (5 * doy + 2) / 153;
  const long month = mp < 10 ? mp + 3 : mp - 9;
  return yoe + era * 400 + (month <= 2 ? 1 : 0);
}

bool is_system_message(const Utterance& u) {
  return u.author.empty() || u.text.rfind("===", 0) == 0;
}

std::size_t word_count(const std::string& text) {
  std::istringstream in(text);
  std::size_t n = 0;
  std::string w;
  while (in >> w) ++n;
  return n;
}

double frequency_bucket(const Conversation& conversation) {
  const auto& utts = conversation.utterances;
  if (utts.size() < 2) return 0.0;
  const double hours =
      std::max(1.0, static_cast<double>(utts.back().timestamp -
                                        utts.front().timestamp) /
                        3600.0);
  const double per_hour = static_cast<double>(utts.size()) / hours;
  return std::floor(std::log2(1.0 + per_hour));
}

}  // namespace

FeatureVector extract_features(const Utterance& history,
                               const Utterance& target,
                               const Conversation& conversation) {
  FeatureVector f{};
  const double position_gap =
      std::abs(static_cast<double>(target.index) -
               static_cast<double>(history.index));
  const double time_gap =
      std::abs(static_cast<double>(target.timestamp - history.timestamp));
  f[0] = position_gap;
  f[1] = std::log(1.0 + time_gap);
  f[2] = (!history.author.empty() && history.author == target.author) ? 1.0 : 0.0;
  f[3] = addresses(target.text, history.author) ? 1.0 : 0.0;
  f[4] = addresses(history.text, target.author) ? 1.0 : 0.0;
  f[5] = is_system_message(history) ? 1.0 : 0.0;
  f[6] = static_cast<double>(word_count(history.text));
  f[7] = static_cast<double>(civil_year(history.timestamp) - 2000);
  f[8] = frequency_bucket(conversation);
  return f;
}

}  // namespace convstruct
