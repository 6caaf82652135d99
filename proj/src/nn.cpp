#include "convstruct/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "convstruct/error.hpp"
#include "convstruct/io.hpp"

namespace convstruct::nn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload assumes a little-endian host");

namespace {
constexpr char kMagic[8] = {'C', 'S', 'C', 'K', 'P', 'T', '0', '1'};
}

Matrix truncated_normal(std::size_t rows, std::size_t cols, double stddev,
                        Rng& rng) {
  Matrix m(static_cast<long>(rows), static_cast<long>(cols));
  for (long i = 0; i < m.size(); ++i) {
    double z;
    do {
      z = standard_normal(rng);
    } while (std::abs(z) > 2.0);
    m.data()[i] = z * stddev;
  }
  return m;
}

void ParameterSet::add(std::string name, const Tensor& tensor) {
  items_.push_back({std::move(name), tensor});
}

void ParameterSet::append(const ParameterSet& other) {
  for (const auto& p : other.items_) items_.push_back(p);
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p.tensor.numel();
  return n;
}

const Tensor* ParameterSet::find(const std::string& name) const {
  for (const auto& p : items_) {
    if (p.name == name) return &p.tensor;
  }
  return nullptr;
}

std::vector<Tensor> ParameterSet::tensors() const {
  std::vector<Tensor> out;
  out.reserve(items_.size());
  for (const auto& p : items_) out.push_back(p.tensor);
  return out;
}

std::vector<Matrix> ParameterSet::snapshot() const {
  std::vector<Matrix> out;
  out.reserve(items_.size());
  for (const auto& p : items_) out.push_back(p.tensor.value());
  return out;
}

void ParameterSet::restore(const std::vector<Matrix>& values) {
  if (values.size() != items_.size()) {
    throw Error(ErrorKind::kShapeError, "snapshot size mismatch");
  }
  for (std::size_t i = 0; i < items_.size(); ++i) {
    Tensor t = items_[i].tensor;
    t.mutable_value() = values[i];
  }
}

void ParameterSet::zero_grad() {
  for (auto& p : items_) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

void ParameterSet::set_requires_grad(bool on) {
  for (auto& p : items_) {
    Tensor t = p.tensor;
    t.set_requires_grad(on);
    if (!on) t.clear_grad();
  }
}

std::uint64_t ParameterSet::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& p : items_) {
    const auto* bytes =
        reinterpret_cast<const unsigned char*>(p.tensor.value().data());
    const std::size_t n = p.tensor.numel() * sizeof(double);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng, double stddev)
    : weight(truncated_normal(
                 in, out,
                 stddev > 0.0 ? stddev : 1.0 / std::sqrt(static_cast<double>(in)),
                 rng),
             true),
      bias(Matrix::Zero(1, static_cast<long>(out)), true) {}

Tensor Linear::forward(const Tensor& x) const {
  return tk::add(tk::matmul(x, weight), bias);
}

void Linear::collect(const std::string& prefix, ParameterSet& params) const {
  params.add(prefix + ".weight", weight);
  params.add(prefix + ".bias", bias);
}

LayerNorm::LayerNorm(std::size_t dim)
    : gamma(Matrix::Ones(1, static_cast<long>(dim)), true),
      beta(Matrix::Zero(1, static_cast<long>(dim)), true) {}

Tensor LayerNorm::forward(const Tensor& x) const {
  return tk::layer_norm(x, gamma, beta);
}

void LayerNorm::collect(const std::string& prefix, ParameterSet& params) const {
  params.add(prefix + ".gamma", gamma);
  params.add(prefix + ".beta", beta);
}

TransformerLayer::TransformerLayer(std::size_t hidden, std::size_t inner,
                                   std::size_t heads, double dropout, Rng& rng)
    : heads(heads),
      dropout(dropout),
      query(hidden, hidden, rng),
      key(hidden, hidden, rng),
      value(hidden, hidden, rng),
      output(hidden, hidden, rng),
      attention_norm(hidden),
      intermediate(hidden, inner, rng),
      projection(inner, hidden, rng),
      output_norm(hidden) {
  if (heads == 0 || hidden % heads != 0) {
    throw Error(ErrorKind::kInvalidConfig,
                "hidden size " + std::to_string(hidden) +
                    " not divisible by heads " + std::to_string(heads));
  }
}

Tensor TransformerLayer::forward(const Tensor& x, const AttentionMask& mask,
                                 bool train, Rng* rng) const {
  if (mask.size() != x.rows()) {
    throw Error(ErrorKind::kShapeError,
                "mask size " + std::to_string(mask.size()) + " vs " +
                    std::to_string(x.rows()) + " rows");
  }
  const Tensor q = query.forward(x);
  const Tensor k = key.forward(x);
  const Tensor v = value.forward(x);
  const std::size_t head_dim = x.cols() / heads;
  std::vector<Tensor> per_head;
  per_head.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t at = h * head_dim;
    per_head.push_back(tk::masked_attention(tk::slice_cols(q, at, head_dim),
                                            tk::slice_cols(k, at, head_dim),
                                            tk::slice_cols(v, at, head_dim),
                                            mask));
  }
  Tensor attended = heads == 1 ? per_head.front() : tk::concat_cols(per_head);
  attended = tk::dropout(output.forward(attended), dropout, train, rng);
  Tensor h = attention_norm.forward(tk::add(x, attended));
  Tensor ff = projection.forward(tk::gelu(intermediate.forward(h)));
  ff = tk::dropout(ff, dropout, train, rng);
  return output_norm.forward(tk::add(h, ff));
}

void TransformerLayer::collect(const std::string& prefix,
                               ParameterSet& params) const {
  query.collect(prefix + ".attention.query", params);
  key.collect(prefix + ".attention.key", params);
  value.collect(prefix + ".attention.value", params);
  output.collect(prefix + ".attention.output", params);
  attention_norm.collect(prefix + ".attention.norm", params);
  intermediate.collect(prefix + ".ffn.intermediate", params);
  projection.collect(prefix + ".ffn.output", params);
  output_norm.collect(prefix + ".ffn.norm", params);
}

void adam_step(std::span<Tensor> params, AdamState& state) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(Matrix::Zero(p.value().rows(), p.value().cols()));
      state.v.push_back(Matrix::Zero(p.value().rows(), p.value().cols()));
    }
  }
  if (state.m.size() != params.size()) {
    throw Error(ErrorKind::kShapeError, "Adam state tracks " +
                                            std::to_string(state.m.size()) +
                                            " params, got " +
                                            std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) {
      throw Error(ErrorKind::kMissingGrad,
                  "parameter " + std::to_string(i) + " has no gradient");
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    const Matrix& g = p.grad();
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] +
                 (1.0 - state.beta2) * g.cwiseProduct(g);
    const auto m_hat = state.m[i].array() / c1;
    const auto v_hat = state.v[i].array() / c2;
    p.mutable_value().array() -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
    p.zero_grad();
  }
}

std::string serialize_checkpoint(const ParameterSet& params,
                                 const nlohmann::json& meta) {
  nlohmann::json header;
  header["meta"] = meta;
  header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& p : params.items()) {
    header["tensors"].push_back({{"name", p.name},
                                 {"shape", p.tensor.shape()},
                                 {"offset", offset}});
    offset += p.tensor.numel() * sizeof(double);
  }
  const std::string text = header.dump();
  std::string out(kMagic, sizeof(kMagic));
  const std::uint64_t len = text.size();
  out.append(reinterpret_cast<const char*>(&len), sizeof(len));
  out += text;
  for (const auto& p : params.items()) {
    out.append(reinterpret_cast<const char*>(p.tensor.value().data()),
               p.tensor.numel() * sizeof(double));
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path,
                     const ParameterSet& params, const nlohmann::json& meta) {
  write_file_atomic(path, serialize_checkpoint(params, meta));
}

nlohmann::json deserialize_checkpoint(const std::string& bytes,
                                      ParameterSet* params) {
  if (bytes.size() < sizeof(kMagic) + 8 ||
      std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorKind::kParseError, "not a checkpoint file");
  }
  std::uint64_t len;
  std::memcpy(&len, bytes.data() + sizeof(kMagic), sizeof(len));
  const std::size_t header_at = sizeof(kMagic) + sizeof(len);
  if (bytes.size() < header_at + len) {
    throw Error(ErrorKind::kParseError, "truncated checkpoint header");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(header_at, len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParseError, std::string("checkpoint header: ") + e.what());
  }
  if (params == nullptr) return header.at("meta");
  const std::size_t payload = header_at + len;
  for (const auto& entry : header.at("tensors")) {
    const std::string name = entry.at("name");
    const Tensor* target = params->find(name);
    if (target == nullptr) {
      throw Error(ErrorKind::kMismatch, "checkpoint tensor '" + name +
                                            "' has no matching parameter");
    }
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    if (shape != target->shape()) {
      throw Error(ErrorKind::kShapeError, "checkpoint tensor '" + name +
                                              "' shape mismatch");
    }
    const std::size_t offset = entry.at("offset");
    const std::size_t n = target->numel() * sizeof(double);
    if (payload + offset + n > bytes.size()) {
      throw Error(ErrorKind::kParseError, "truncated checkpoint payload");
    }
    Tensor t = *target;
    std::memcpy(t.mutable_value().data(), bytes.data() + payload + offset, n);
  }
  if (header.at("tensors").size() != params->size()) {
    throw Error(ErrorKind::kMismatch, "checkpoint holds " +
                                          std::to_string(header.at("tensors").size()) +
                                          " tensors, model has " +
                                          std::to_string(params->size()));
  }
  return header.at("meta");
}

nlohmann::json read_checkpoint_meta(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_file(path), nullptr);
}

nlohmann::json load_checkpoint(const std::filesystem::path& path,
                               ParameterSet& params) {
  return deserialize_checkpoint(read_file(path), &params);
}

}  // namespace convstruct::nn
