#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <sstream>

#include "convstruct/cli.hpp"
#include "convstruct/decode.hpp"
#include "convstruct/error.hpp"
#include "convstruct/mask.hpp"
#include "convstruct/metrics.hpp"
#include "convstruct/synth.hpp"
#include "convstruct/trainer.hpp"

namespace py = pybind11;
using namespace convstruct;

namespace {

using Grid = std::vector<std::vector<int>>;
using Parents = std::vector<std::vector<Index>>;

Grid to_grid(const AttentionMask& m) {
  Grid g(m.size(), std::vector<int>(m.size(), 0));
  for (Index i = 0; i < m.size(); ++i) {
    for (Index j = 0; j < m.size(); ++j) g[i][j] = m.allowed(i, j) ? 1 : 0;
  }
  return g;
}

Corpus corpus_from_text(const std::string& jsonl) {
  std::istringstream in(jsonl);
  return parse_conversations(in);
}

nlohmann::json parse_object(const std::string& text) {
  if (text.empty()) return nlohmann::json::object();
  return nlohmann::json::parse(text);
}

// Library errors surface in Python as ValueError subclasses carrying the kind.
void translate(std::exception_ptr p, PyObject* error_type) {
  try {
    if (p) std::rethrow_exception(p);
  } catch (const Error& e) {
    py::object exc = py::reinterpret_borrow<py::object>(error_type)(e.what());
    exc.attr("kind") = error_kind_name(e.kind());
    PyErr_SetObject(error_type, exc.ptr());
  }
}

}  // namespace

PYBIND11_MODULE(_convstruct, m) {
  m.doc() = "Bindings for the convstruct C++ core";

  // Kept alive for the lifetime of the process; the module owns a reference too.
  static PyObject* error_type =
      py::exception<Error>(m, "ConvstructError", PyExc_ValueError).inc_ref().ptr();
  py::register_exception_translator([](std::exception_ptr p) { translate(p, error_type); });

  m.def("ancestors", [](const Parents& parents, Index node) {
    return ancestors(ReplyGraph(parents), node);
  }, py::arg("parents"), py::arg("node"));

  m.def("ancestor_mask", [](const Parents& prefix, std::size_t size) {
    return to_grid(ancestor_mask(ReplyGraph(prefix), size));
  }, py::arg("prefix_parents"), py::arg("size"));
  m.def("depth_limited_mask", [](const Parents& prefix, std::size_t size, std::size_t depth) {
    return to_grid(depth_limited_mask(ReplyGraph(prefix), size, depth));
  }, py::arg("prefix_parents"), py::arg("size"), py::arg("depth"));
  m.def("temporal_mask", [](std::size_t size, std::size_t depth) {
    return to_grid(temporal_mask(size, depth));
  }, py::arg("size"), py::arg("depth"));
  m.def("full_mask", [](std::size_t size) { return to_grid(full_mask(size)); },
        py::arg("size"));

  m.def("rank_loss", [](const std::vector<double>& logits, const std::vector<int>& labels) {
    return rank_loss(logits, labels);
  }, py::arg("logits"), py::arg("labels"));
  m.def("bce_loss", [](const std::vector<double>& logits, const std::vector<int>& labels) {
    return bce_loss(logits, labels);
  }, py::arg("logits"), py::arg("labels"));

  m.def("graph_accuracy", [](const Parents& pred, const Parents& gold) {
    return graph_accuracy(ReplyGraph(pred), ReplyGraph(gold));
  }, py::arg("pred_parents"), py::arg("gold_parents"));
  m.def("scaled_vi", &scaled_vi, py::arg("pred"), py::arg("gold"), py::arg("n"));
  m.def("one_to_one", &one_to_one, py::arg("pred"), py::arg("gold"), py::arg("n"));

  const SynthConfig defaults;
  m.def("generate_corpus", [](std::size_t n_conversations, std::size_t n_utterances,
                              std::size_t n_topics, std::size_t vocab_size, double ambiguity,
                              std::uint64_t seed) {
    return to_jsonl(generate_corpus(n_conversations, n_utterances, n_topics, vocab_size,
                                    ambiguity, seed));
  }, py::arg("n_conversations") = defaults.n_conversations,
     py::arg("n_utterances") = defaults.n_utterances, py::arg("n_topics") = defaults.n_topics,
     py::arg("vocab_size") = defaults.vocab_size, py::arg("ambiguity") = defaults.ambiguity,
     py::arg("seed") = defaults.seed, "Synthetic corpus as canonical JSONL text.");

  m.def("evaluate_json", [](const std::string& pred, const std::string& gold) {
    return evaluate(corpus_from_text(pred), corpus_from_text(gold)).to_json().dump();
  }, py::arg("pred_jsonl"), py::arg("gold_jsonl"));

  py::class_<HierarchicalModel>(m, "Model")
      .def_static("load", [](const std::string& path) { return HierarchicalModel::load(path); },
                  py::arg("path"))
      .def("save", [](const HierarchicalModel& model, const std::string& path) {
        model.save(path);
      }, py::arg("path"))
      .def("config_json", [](const HierarchicalModel& model) {
        return model.config().to_json().dump();
      })
      .def("parameter_count", [](const HierarchicalModel& model) {
        return model.parameters().scalar_count();
      })
      .def("encoder_checksum", [](const HierarchicalModel& model) {
        return model.encoder_parameters().checksum();
      })
      .def("decode", [](const HierarchicalModel& model, const std::string& jsonl,
                        bool teacher_forcing) {
        DecodeOptions options;
        options.teacher_forcing = teacher_forcing;
        py::gil_scoped_release release;
        return to_jsonl(decode_corpus(model, corpus_from_text(jsonl), options));
      }, py::arg("jsonl"), py::arg("teacher_forcing") = false);

  m.def("train_json", [](const std::string& train, const std::string& dev,
                         const std::string& preset, const std::string& model_json,
                         const std::string& train_json) {
    ModelConfig model_cfg = ModelConfig::desk();
    TrainConfig train_cfg = TrainConfig::desk();
    if (preset == "reddit") {
      model_cfg = ModelConfig::reddit();
      train_cfg = TrainConfig::reddit();
    } else if (preset == "irc") {
      model_cfg = ModelConfig::irc();
      train_cfg = TrainConfig::irc();
    } else if (preset != "desk") {
      throw Error(ErrorKind::kInvalidConfig, "unknown preset '" + preset + "'");
    }
    model_cfg = ModelConfig::from_json(parse_object(model_json), model_cfg);
    train_cfg = TrainConfig::from_json(parse_object(train_json), train_cfg);
    const Corpus train_corpus = corpus_from_text(train);
    const Corpus dev_corpus = corpus_from_text(dev);
    std::optional<TrainResult> result;
    {
      py::gil_scoped_release release;
      result.emplace(train_two_stage(train_corpus, dev_corpus, model_cfg, train_cfg));
    }
    nlohmann::json info = {
        {"metrics_csv", metrics_csv(result->curve)},
        {"best_dev_graph_acc", result->best_dev_graph_acc},
        {"best_stage", result->best_stage},
        {"best_epoch", result->best_epoch},
        {"encoder_checksum_initial", result->encoder_checksum_initial},
        {"encoder_checksum_after_stage1", result->encoder_checksum_after_stage1},
        {"encoder_checksum_after_stage2", result->encoder_checksum_after_stage2},
    };
    return py::make_tuple(std::move(result->model), info.dump());
  }, py::arg("train_jsonl"), py::arg("dev_jsonl"), py::arg("preset"),
     py::arg("model_json"), py::arg("train_json"));

  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    int code;
    {
      py::gil_scoped_release release;
      code = run_cli(args, out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
  }, py::arg("args"), "Runs a convstruct subcommand; returns (exit_code, stdout, stderr).");
}
