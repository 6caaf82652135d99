#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "convstruct/tensor.hpp"
#include "json.hpp"

namespace convstruct::nn {

using tk::Matrix;
using tk::Tensor;

// Truncated at two standard deviations.
Matrix truncated_normal(std::size_t rows, std::size_t cols, double stddev,
                        Rng& rng);

struct NamedParameter {
  std::string name;
  Tensor tensor;
};

// Ordered parameter registry. Tensors share storage with the owning modules.
class ParameterSet {
 public:
  void add(std::string name, const Tensor& tensor);
  void append(const ParameterSet& other);

  const std::vector<NamedParameter>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  std::size_t scalar_count() const;
  const Tensor* find(const std::string& name) const;

  std::vector<Tensor> tensors() const;
  std::vector<Matrix> snapshot() const;
  void restore(const std::vector<Matrix>& values);
  void zero_grad();
  void set_requires_grad(bool on);

  // FNV-1a over the raw bytes of every value, in registration order.
  std::uint64_t checksum() const;

 private:
  std::vector<NamedParameter> items_;
};

struct Linear {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out

  Linear() = default;
  // stddev <= 0 selects fan-in scaling, 1/sqrt(in).
  Linear(std::size_t in, std::size_t out, Rng& rng, double stddev = 0.0);
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParameterSet& params) const;
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t dim);
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParameterSet& params) const;
};

// Post-norm transformer block with masked multi-head self-attention.
struct TransformerLayer {
  std::size_t heads = 1;
  double dropout = 0.0;
  Linear query, key, value, output;
  LayerNorm attention_norm;
  Linear intermediate, projection;
  LayerNorm output_norm;

  TransformerLayer() = default;
  TransformerLayer(std::size_t hidden, std::size_t inner, std::size_t heads,
                   double dropout, Rng& rng);
  Tensor forward(const Tensor& x, const AttentionMask& mask, bool train,
                 Rng* rng) const;
  void collect(const std::string& prefix, ParameterSet& params) const;
};

struct AdamState {
  long step = 0;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
};

// Bias-corrected Adam. Every parameter must carry a grad (MissingGrad);
// grads are zeroed afterwards.
void adam_step(std::span<Tensor> params, AdamState& state);

// Flat binary checkpoint: magic, u64 header length, JSON header
// {"meta", "tensors": [{"name", "shape", "offset"}]}, then little-endian
// float64 payload (offsets in bytes from the payload start).
void save_checkpoint(const std::filesystem::path& path,
                     const ParameterSet& params, const nlohmann::json& meta);
std::string serialize_checkpoint(const ParameterSet& params,
                                 const nlohmann::json& meta);

nlohmann::json read_checkpoint_meta(const std::filesystem::path& path);
// Loads values by name into `params`; shapes must match.
nlohmann::json load_checkpoint(const std::filesystem::path& path,
                               ParameterSet& params);
nlohmann::json deserialize_checkpoint(const std::string& bytes,
                                      ParameterSet* params);

}  // namespace convstruct::nn
