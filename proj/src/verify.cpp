#include "convstruct/verify.hpp"

#include <optional>
#include <string>

#include "convstruct/random.hpp"
#include "convstruct/trainer.hpp"

namespace convstruct {

namespace {

using tk::Tensor;

Tensor random_tensor(long rows, long cols, Rng& rng) {
  tk::Matrix m(rows, cols);
  for (long i = 0; i < m.size(); ++i) m.data()[i] = standard_normal(rng);
  return Tensor(std::move(m), true);
}

nn::ParameterSet as_params(std::initializer_list<Tensor> tensors) {
  nn::ParameterSet set;
  std::size_t i = 0;
  for (const Tensor& t : tensors) set.add("input" + std::to_string(i++), t);
  return set;
}

// A fixed-size conversation with two threads, used as grad-check input.
LabeledConversation check_conversation(Mode mode) {
  const char* texts[] = {"how do i mount a usb drive", "try sudo mount /dev/sdb1",
                         "which kernel are you on", "it says permission denied",
                         "ubuntu 20.04 lts", "did you add sudo ?"};
  const std::vector<std::vector<Index>> parents = {{}, {0}, {0}, {1}, {2}, {3}};
  LabeledConversation item;
  item.conversation.conv_id = "check";
  item.conversation.mode = mode;
  item.graph = ReplyGraph(parents.size());
  for (Index i = 0; i < parents.size(); ++i) {
    Utterance u;
    u.id = "m" + std::to_string(i);
    u.index = i;
    u.author = i % 2 == 0 ? "alice" : "bob";
    u.timestamp = 1262304000 + static_cast<std::int64_t>(i) * 45;
    u.text = texts[i];
    item.conversation.utterances.push_back(u);
    if (mode == Mode::kIrcMultiParent && i == 0) {
      item.graph.set_parents(0, {0});
      item.conversation.utterances[0].is_context = true;
    } else {
      item.graph.set_parents(i, parents[i]);
    }
  }
  if (mode == Mode::kIrcMultiParent) item.graph.add_parent(5, 1);
  return item;
}

ModelConfig check_config(LossKind loss, Pooling pooling) {
  ModelConfig c = ModelConfig::desk();
  c.layers = 2;
  c.hidden = 8;
  c.intermediate = 12;
  c.heads = 2;
  c.dropout = 0.0;
  c.loss = loss;
  c.encoder.embed_dim = 8;
  c.encoder.num_layers = 1;
  c.encoder.num_heads = 2;
  c.encoder.intermediate_dim = 12;
  c.encoder.output_dim = 8;
  c.encoder.max_tokens = 10;
  c.encoder.pooling = pooling;
  c.encoder.dropout = 0.0;
  return c;
}

tk::GradCheckReport check_model(const std::string& name, ModelConfig config,
                                Mode mode, std::uint64_t seed,
                                const tk::GradCheckOptions& options) {
  const LabeledConversation item = check_conversation(mode);
  Corpus corpus{item};
  HierarchicalModel model(config, Vocabulary::build(corpus), seed);
  // Re-draw every parameter at unit scale so that no gradient sits near the
  // finite-difference noise floor.
  Rng rng(seed + 17);
  for (const auto& p : model.parameters().items()) {
    tk::Tensor t = p.tensor;
    auto& v = t.mutable_value();
    for (long i = 0; i < v.size(); ++i) v.data()[i] = 0.5 * standard_normal(rng);
  }
  const std::vector<Index> targets = annotated_targets(item);
  auto loss_fn = [&]() {
    std::optional<Tensor> total;
    for (Index target : targets) {
      const WindowView window = build_window(item, target, config.max_window);
      const Tensor rows = model.encode_window(item.conversation, window, false, nullptr);
      Tensor loss = sample_loss(model, item, target, rows, false, nullptr);
      total = total ? tk::add(*total, loss) : loss;
    }
    return *total;
  };
  return tk::grad_check(name, loss_fn, model.parameters(), options);
}

}  // namespace

std::vector<tk::GradCheckReport> verify_ops(std::uint64_t seed,
                                            const tk::GradCheckOptions& options) {
  Rng rng(seed);
  const Tensor a = random_tensor(4, 3, rng), b = random_tensor(3, 5, rng);
  const Tensor bt = random_tensor(5, 3, rng), c = random_tensor(4, 5, rng);
  const Tensor row = random_tensor(1, 5, rng), w = random_tensor(4, 5, rng);
  const Tensor gamma = random_tensor(1, 5, rng), beta = random_tensor(1, 5, rng);
  const Tensor q = random_tensor(4, 3, rng), k = random_tensor(4, 3, rng);
  const Tensor v = random_tensor(4, 5, rng), logits = random_tensor(5, 1, rng);
  const tk::Matrix weights = w.value();
  auto probe = [&weights](const Tensor& x) {
    return tk::sum(tk::mul(x, Tensor(weights.topLeftCorner(x.rows(), x.cols()))));
  };
  const AttentionMask mask =
      ancestor_mask(ReplyGraph(std::vector<std::vector<Index>>{{}, {0}, {1}, {}}), 4);
  const std::vector<std::size_t> ids{2, 0, 2, 3};
  const std::vector<double> labels{1, 0, 1, 0, 0};

  std::vector<tk::GradCheckReport> out;
  auto run = [&](const std::string& name, const std::function<Tensor()>& fn,
                 nn::ParameterSet params) {
    out.push_back(tk::grad_check(name, fn, params, options));
  };
  run("matmul", [&] { return probe(tk::matmul(a, b)); }, as_params({a, b}));
  run("matmul_nt", [&] { return probe(tk::matmul_nt(a, bt)); }, as_params({a, bt}));
  run("add_broadcast", [&] { return probe(tk::add(c, row)); }, as_params({c, row}));
  run("sub", [&] { return probe(tk::sub(c, w)); }, as_params({c, w}));
  run("mul", [&] { return probe(tk::mul(c, w)); }, as_params({c, w}));
  run("scale", [&] { return probe(tk::scale(c, -1.5)); }, as_params({c}));
  run("gelu", [&] { return probe(tk::gelu(c)); }, as_params({c}));
  run("tanh", [&] { return probe(tk::tanh(c)); }, as_params({c}));
  run("mean_rows", [&] { return probe(tk::mean_rows(c)); }, as_params({c}));
  run("softmax_rows", [&] { return probe(tk::softmax_rows(c)); }, as_params({c}));
  run("masked_softmax_rows",
      [&] { return probe(tk::masked_softmax_rows(tk::slice_cols(c, 0, 4), mask)); },
      as_params({c}));
  run("layer_norm", [&] { return probe(tk::layer_norm(c, gamma, beta)); },
      as_params({c, gamma, beta}));
  run("slice_concat_cols",
      [&] {
        const Tensor parts[] = {tk::slice_cols(c, 3, 2), a};
        return probe(tk::concat_cols(parts));
      },
      as_params({c, a}));
  run("concat_rows",
      [&] {
        const Tensor parts[] = {row, c};
        return tk::sum(tk::mul(tk::concat_rows(parts), tk::concat_rows(parts)));
      },
      as_params({row, c}));
  run("gather_rows", [&] { return probe(tk::gather_rows(c, ids)); }, as_params({c}));
  run("add_to_row", [&] { return probe(tk::add_to_row(c, 3, row)); }, as_params({c, row}));
  run("masked_attention", [&] { return probe(tk::masked_attention(q, k, v, mask)); },
      as_params({q, k, v}));
  run("softmax_cross_entropy",
      [&] { return tk::softmax_cross_entropy(logits, 4, 2); }, as_params({logits}));
  run("bce_with_logits", [&] { return tk::bce_with_logits(logits, labels); },
      as_params({logits}));
  return out;
}

std::vector<tk::GradCheckReport> verify_model(std::uint64_t seed,
                                              const tk::GradCheckOptions& options) {
  std::vector<tk::GradCheckReport> out;
  out.push_back(check_model("model/rank/transformer-encoder",
                            check_config(LossKind::kRank, Pooling::kTransformer),
                            Mode::kRedditTree, seed, options));
  ModelConfig positional = check_config(LossKind::kRank, Pooling::kMeanPool);
  positional.positional = true;
  out.push_back(check_model("model/rank/mean-pool+positions", positional,
                            Mode::kRedditTree, seed, options));
  ModelConfig features = check_config(LossKind::kBce, Pooling::kTransformer);
  features.feature_mode = true;
  out.push_back(check_model("model/bce/transformer-encoder+features", features,
                            Mode::kIrcMultiParent, seed, options));
  return out;
}

}  // namespace convstruct
