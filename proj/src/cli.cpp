#include "convstruct/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "convstruct/decode.hpp"
#include "convstruct/error.hpp"
#include "convstruct/io.hpp"
#include "convstruct/metrics.hpp"
#include "convstruct/synth.hpp"
#include "convstruct/trainer.hpp"
#include "convstruct/verify.hpp"

namespace convstruct {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

json read_json_file(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kInvalidConfig, "config " + path + ": " + e.what());
  }
}

// Resolved settings plus where each one came from, printed at startup.
class Settings {
 public:
  void note(const std::string& key, const json& value, const std::string& source) {
    values_[key] = {value.dump(), source};
  }
  void print(std::ostream& err) const {
    err << "config (flag > file > default):\n";
    for (const auto& [key, entry] : values_) {
      err << "  " << key << " = " << entry.first << "  [" << entry.second << "]\n";
    }
  }

 private:
  std::map<std::string, std::pair<std::string, std::string>> values_;
};

void note_all(Settings& settings, const std::string& prefix, const json& resolved,
              const json& from_file, const std::string& default_source) {
  for (const auto& [key, value] : resolved.items()) {
    const bool in_file = from_file.is_object() && from_file.contains(key);
    if (value.is_object()) {
      note_all(settings, prefix + key + ".", value,
               in_file ? from_file.at(key) : json::object(), default_source);
    } else {
      settings.note(prefix + key, value, in_file ? "file" : default_source);
    }
  }
}

struct ResolvedConfig {
  ModelConfig model;
  TrainConfig train;
  Settings settings;
};

struct ConfigFlags {
  std::string config_path;
  std::string preset;
  std::string mask;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> stage1_epochs;
  std::optional<std::size_t> stage2_epochs;
  std::optional<double> stage1_lr;
  std::optional<double> stage2_lr;
  std::optional<std::size_t> patience;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config with 'preset', 'model', 'train'");
    cmd->add_option("--preset", preset, "reddit | irc | desk");
    cmd->add_option("--mask", mask, "ancestor | none | depthN | temporalN");
    cmd->add_option("--seed", seed, "training seed");
    cmd->add_option("--stage1-epochs", stage1_epochs);
    cmd->add_option("--stage2-epochs", stage2_epochs);
    cmd->add_option("--stage1-lr", stage1_lr);
    cmd->add_option("--stage2-lr", stage2_lr);
    cmd->add_option("--patience", patience, "early stopping patience in epochs");
  }

  ResolvedConfig resolve() const {
    json file = json::object();
    if (!config_path.empty()) file = read_json_file(config_path);
    std::string preset_name = "reddit";
    std::string preset_source = "default";
    if (file.contains("preset")) {
      preset_name = file.at("preset").get<std::string>();
      preset_source = "file";
    }
    if (!preset.empty()) {
      preset_name = preset;
      preset_source = "flag";
    }
    ResolvedConfig r;
    if (preset_name == "reddit") {
      r.model = ModelConfig::reddit();
      r.train = TrainConfig::reddit();
    } else if (preset_name == "irc") {
      r.model = ModelConfig::irc();
      r.train = TrainConfig::irc();
    } else if (preset_name == "desk") {
      r.model = ModelConfig::desk();
      r.train = TrainConfig::desk();
    } else {
      throw Error(ErrorKind::kInvalidConfig, "unknown preset '" + preset_name + "'");
    }
    const json model_file = file.value("model", json::object());
    const json train_file = file.value("train", json::object());
    r.model = ModelConfig::from_json(model_file, r.model);
    r.train = TrainConfig::from_json(train_file, r.train);

    const std::string base = "preset:" + preset_name;
    r.settings.note("preset", preset_name, preset_source);
    note_all(r.settings, "model.", r.model.to_json(), model_file, base);
    note_all(r.settings, "train.", r.train.to_json(), train_file, base);

    auto flag = [&](const std::string& key, const auto& value) {
      r.settings.note(key, value, "flag");
    };
    if (!mask.empty()) {
      r.model.mask = MaskSpec::parse(mask);
      flag("model.mask", r.model.mask.name());
    }
    if (seed) flag("train.seed", r.train.seed = *seed);
    if (stage1_epochs) flag("train.stage1_epochs", r.train.stage1_epochs = *stage1_epochs);
    if (stage2_epochs) flag("train.stage2_epochs", r.train.stage2_epochs = *stage2_epochs);
    if (stage1_lr) flag("train.stage1_lr", r.train.stage1_lr = *stage1_lr);
    if (stage2_lr) flag("train.stage2_lr", r.train.stage2_lr = *stage2_lr);
    if (patience) {
      flag("train.early_stopping_patience", r.train.early_stopping_patience = *patience);
    }
    r.model.validate();
    r.train.validate();
    return r;
  }
};

std::string format_percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f%%", 100.0 * v);
  return buf;
}

// --- subcommands -----------------------------------------------------------

struct BuildCorpusArgs {
  std::string input, out_dir, mode = "reddit";
  std::uint64_t seed = 0;
  bool filter_large = false;
  std::size_t max_chars = 128, min_depth = 6;
  std::size_t context = 0;
  std::size_t truncate = 0;
  std::string ratios = "0.8,0.1,0.1";
};

int cmd_build_corpus(const BuildCorpusArgs& a, std::ostream& out, std::ostream& err) {
  const Mode mode = parse_mode(a.mode);
  Corpus corpus = parse_conversations(a.input);
  for (const auto& item : corpus) {
    if (item.conversation.mode != mode) {
      throw Error(ErrorKind::kParseError, "conversation " + item.conversation.conv_id +
                                              " is not in " + a.mode + " mode");
    }
  }
  if (a.filter_large) {
    if (mode != Mode::kRedditTree) {
      throw Error(ErrorKind::kInvalidConfig, "--filter-large applies to reddit corpora");
    }
    corpus = filter_reddit_large(corpus, {a.max_chars, a.min_depth});
  }
  if (a.truncate > 0) corpus = truncate_conversations(corpus, a.truncate);
  if (a.context > 0) {
    std::vector<std::string> warnings;
    for (auto& item : corpus) item = mark_context_self_parents(item, a.context, &warnings);
    for (const auto& w : warnings) err << "warning: " << w << "\n";
  }
  const auto parts = split_list(a.ratios);
  if (parts.size() != 3) throw Error(ErrorKind::kInvalidConfig, "--ratios needs 3 values");
  std::array<double, 3> ratios{};
  for (std::size_t i = 0; i < 3; ++i) ratios[i] = std::stod(parts[i]);
  const CorpusSplit split = split_corpus(corpus, ratios, a.seed);
  fs::create_directories(a.out_dir);
  write_conversations(fs::path(a.out_dir) / "train.jsonl", split.train);
  write_conversations(fs::path(a.out_dir) / "dev.jsonl", split.dev);
  write_conversations(fs::path(a.out_dir) / "test.jsonl", split.test);
  out << "kept " << corpus.size() << " conversations: train " << split.train.size()
      << ", dev " << split.dev.size() << ", test " << split.test.size() << "\n";
  return kExitOk;
}

int cmd_stats(const std::string& input, std::ostream& out) {
  const Corpus corpus = parse_conversations(input);
  if (corpus.empty()) throw Error(ErrorKind::kEmptyCorpus, input + " holds no conversations");
  if (corpus.front().conversation.mode == Mode::kRedditTree) {
    const TreeStats s = tree_stats(corpus);
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "%-14s %10s %10s %10s\n%-14zu %10zu %10.2f %10zu\n", "conversations",
                  "comments", "avg depth", "max depth", s.count, s.comment_count,
                  s.average_depth, s.max_depth);
    out << buf;
    return kExitOk;
  }
  std::size_t messages = 0, annotated = 0, edges = 0, multi = 0, self = 0;
  for (const auto& item : corpus) {
    messages += item.conversation.size();
    for (Index i = 0; i < item.conversation.size(); ++i) {
      if (item.conversation.utterances[i].is_context) continue;
      ++annotated;
      const auto& p = item.graph.parents(i);
      edges += p.size();
      if (p.size() > 1) ++multi;
      if (std::find(p.begin(), p.end(), i) != p.end()) ++self;
    }
  }
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "%-14s %10s %10s %10s %12s %10s\n%-14zu %10zu %10zu %10zu %12zu %10zu\n",
                "conversations", "messages", "annotated", "edges", "multi-parent",
                "self-links", corpus.size(), messages, annotated, edges, multi, self);
  out << buf;
  return kExitOk;
}

int cmd_synth(const SynthConfig& config, const std::string& path, std::ostream& out) {
  const Corpus corpus = generate_corpus(config);
  write_conversations(path, corpus);
  const TreeStats s = tree_stats(corpus);
  out << "wrote " << corpus.size() << " conversations to " << path << " (max depth "
      << s.max_depth << ", average depth " << s.average_depth << ")\n";
  return kExitOk;
}

struct TrainArgs {
  ConfigFlags flags;
  std::string train, dev, out, metrics;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  ResolvedConfig cfg = a.flags.resolve();
  cfg.settings.print(err);
  const Corpus train = parse_conversations(a.train);
  const Corpus dev = a.dev.empty() ? Corpus{} : parse_conversations(a.dev);
  TrainResult result = train_two_stage(train, dev, cfg.model, cfg.train,
                                       [&err](const EpochRecord& r) {
                                         char buf[160];
                                         std::snprintf(buf, sizeof(buf),
                                                       "stage %d epoch %zu step %ld "
                                                       "loss %.6f dev graph acc %.4f\n",
                                                       r.stage, r.epoch, r.step,
                                                       r.train_loss, r.dev_graph_acc);
                                         err << buf;
                                       });
  result.model.save(a.out);
  result.model.vocab().save(fs::path(a.out).string() + ".vocab");
  if (!a.metrics.empty()) write_file_atomic(a.metrics, metrics_csv(result.curve));
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "encoder checksum: initial %016llx, after stage 1 %016llx, "
                "after stage 2 %016llx\n",
                static_cast<unsigned long long>(result.encoder_checksum_initial),
                static_cast<unsigned long long>(result.encoder_checksum_after_stage1),
                static_cast<unsigned long long>(result.encoder_checksum_after_stage2));
  out << buf;
  out << "best dev graph accuracy " << format_percent(result.best_dev_graph_acc)
      << " (stage " << result.best_stage << ", epoch " << result.best_epoch << ")\n";
  out << "checkpoint written to " << a.out << "\n";
  return kExitOk;
}

struct DecodeArgs {
  std::string checkpoint, input, out, sidecar;
  bool teacher_forcing = false, threshold = false, validate_masks = false;
};

int cmd_decode(const DecodeArgs& a, std::ostream& out) {
  const HierarchicalModel model = HierarchicalModel::load(a.checkpoint);
  const Corpus input = parse_conversations(a.input);
  DecodeOptions options;
  options.teacher_forcing = a.teacher_forcing;
  options.threshold_mode = a.threshold;
  options.validate_masks = a.validate_masks;
  std::vector<DecodedStructure> decoded;
  const Corpus predicted = decode_corpus(model, input, options, &decoded);
  write_conversations(a.out, predicted);
  if (!a.sidecar.empty()) write_file_atomic(a.sidecar, probability_sidecar_csv(input, decoded));
  std::size_t oversize = 0;
  for (const auto& d : decoded) oversize += d.oversize_targets.size();
  out << "decoded " << predicted.size() << " conversations to " << a.out;
  if (oversize > 0) out << " (" << oversize << " oversize windows)";
  out << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string pred, gold, mode, json_out, text_out;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const Corpus pred = parse_conversations(a.pred);
  const Corpus gold = parse_conversations(a.gold);
  if (!a.mode.empty() && !gold.empty()) {
    const Mode mode = parse_mode(a.mode);
    for (const auto& item : gold) {
      if (item.conversation.mode != mode) {
        throw Error(ErrorKind::kMismatch,
                    "gold conversation " + item.conversation.conv_id + " is not in " +
                        a.mode + " mode");
      }
    }
  }
  const MetricsReport report = evaluate(pred, gold);
  const std::string text = report.to_text();
  out << text;
  if (!a.json_out.empty()) write_file_atomic(a.json_out, report.to_json().dump(2) + "\n");
  if (!a.text_out.empty()) write_file_atomic(a.text_out, text);
  return kExitOk;
}

struct AblateArgs {
  ConfigFlags flags;
  std::string train, dev, test, out;
  std::string masks = "ancestor,none";
  std::string depths, temporal;
};

int cmd_ablate(const AblateArgs& a, std::ostream& out, std::ostream& err) {
  ResolvedConfig cfg = a.flags.resolve();
  cfg.settings.print(err);
  std::vector<MaskSpec> masks;
  for (const auto& m : split_list(a.masks)) masks.push_back(MaskSpec::parse(m));
  for (const auto& d : split_list(a.depths)) masks.push_back(MaskSpec::parse("depth" + d));
  for (const auto& t : split_list(a.temporal)) masks.push_back(MaskSpec::parse("temporal" + t));
  if (masks.empty()) throw Error(ErrorKind::kInvalidConfig, "no mask variants given");
  const Corpus train = parse_conversations(a.train);
  const Corpus dev = a.dev.empty() ? Corpus{} : parse_conversations(a.dev);
  const Corpus test = parse_conversations(a.test);
  const auto rows = run_ablation(train, dev, test, cfg.model, cfg.train, masks,
                                 [&err](const EpochRecord& r) {
                                   err << "  stage " << r.stage << " epoch " << r.epoch
                                       << " dev " << r.dev_graph_acc << "\n";
                                 });
  const std::string csv = ablation_csv(rows);
  if (!a.out.empty()) write_file_atomic(a.out, csv);
  out << csv;
  if (test.front().conversation.mode == Mode::kRedditTree) {
    Corpus baseline;
    for (const auto& item : test) {
      baseline.push_back({item.conversation, predict_first_baseline(item.conversation).graph});
    }
    out << "predict-first graph_acc " << evaluate(baseline, test).graph_acc << "\n";
  }
  return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed, double tolerance, bool skip_model, std::ostream& out) {
  tk::GradCheckOptions options;
  options.tolerance = tolerance;
  options.seed = seed;
  auto reports = verify_ops(seed, options);
  if (!skip_model) {
    tk::GradCheckOptions model_options = options;
    model_options.fourth_order = true;
    model_options.step = 1e-3;
    auto model = verify_model(seed, model_options);
    reports.insert(reports.end(), model.begin(), model.end());
  }
  bool all = true;
  for (const auto& r : reports) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-4s %-42s max rel err %.3e over %zu entries\n",
                  r.passed ? "PASS" : "FAIL", r.name.c_str(), r.max_relative_error,
                  r.entries_checked);
    out << buf;
    all = all && r.passed;
  }
  out << (all ? "gradcheck passed" : "gradcheck FAILED") << " (tolerance " << tolerance
      << ")\n";
  return all ? kExitOk : kExitData;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"convstruct: conversation structure modeling with masked hierarchical transformers",
               "convstruct"};
  app.require_subcommand(1, 1);

  BuildCorpusArgs build;
  auto* build_cmd = app.add_subcommand("build-corpus", "import, filter, prune and split a corpus");
  build_cmd->add_option("--input", build.input, "canonical JSONL input")->required();
  build_cmd->add_option("--out-dir", build.out_dir, "directory for train/dev/test.jsonl")->required();
  build_cmd->add_option("--mode", build.mode, "reddit | irc");
  build_cmd->add_option("--seed", build.seed, "split seed");
  build_cmd->add_flag("--filter-large", build.filter_large, "apply the large-corpus comment filters");
  build_cmd->add_option("--max-chars", build.max_chars);
  build_cmd->add_option("--min-depth", build.min_depth);
  build_cmd->add_option("--context", build.context, "IRC: leading messages marked as context");
  build_cmd->add_option("--truncate", build.truncate, "keep only the first N utterances");
  build_cmd->add_option("--ratios", build.ratios, "train,dev,test fractions");

  std::string stats_input;
  auto* stats_cmd = app.add_subcommand("stats", "print corpus statistics");
  stats_cmd->add_option("--input", stats_input)->required();

  SynthConfig synth;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic reply-tree corpus");
  synth_cmd->add_option("--out", synth_out)->required();
  synth_cmd->add_option("--conversations", synth.n_conversations);
  synth_cmd->add_option("--utterances", synth.n_utterances);
  synth_cmd->add_option("--topics", synth.n_topics);
  synth_cmd->add_option("--vocab", synth.vocab_size);
  synth_cmd->add_option("--ambiguity", synth.ambiguity);
  synth_cmd->add_option("--echo-distance", synth.echo_distance);
  synth_cmd->add_option("--echo-count", synth.echo_count);
  synth_cmd->add_option("--new-thread-prob", synth.new_thread_prob);
  synth_cmd->add_option("--recency", synth.recency_prob);
  synth_cmd->add_option("--seed", synth.seed);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "two-stage training");
  train.flags.attach(train_cmd);
  train_cmd->add_option("--train", train.train)->required();
  train_cmd->add_option("--dev", train.dev);
  train_cmd->add_option("--out", train.out, "checkpoint path")->required();
  train_cmd->add_option("--metrics", train.metrics, "per-epoch CSV");

  DecodeArgs decode;
  auto* decode_cmd = app.add_subcommand("decode", "greedy structure reconstruction");
  decode_cmd->add_option("--checkpoint", decode.checkpoint)->required();
  decode_cmd->add_option("--input", decode.input)->required();
  decode_cmd->add_option("--out", decode.out)->required();
  decode_cmd->add_option("--sidecar", decode.sidecar, "per-target probability CSV");
  decode_cmd->add_flag("--teacher-forcing", decode.teacher_forcing);
  decode_cmd->add_flag("--threshold", decode.threshold, "IRC: every parent with sigmoid > 0.5");
  decode_cmd->add_flag("--validate-masks", decode.validate_masks);

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "score predictions against gold");
  eval_cmd->add_option("--pred", eval.pred)->required();
  eval_cmd->add_option("--gold", eval.gold)->required();
  eval_cmd->add_option("--mode", eval.mode);
  eval_cmd->add_option("--json", eval.json_out);
  eval_cmd->add_option("--text", eval.text_out);

  AblateArgs ablate;
  auto* ablate_cmd = app.add_subcommand("ablate", "train and score mask variants");
  ablate.flags.attach(ablate_cmd);
  ablate_cmd->add_option("--train", ablate.train)->required();
  ablate_cmd->add_option("--dev", ablate.dev);
  ablate_cmd->add_option("--test", ablate.test)->required();
  ablate_cmd->add_option("--masks", ablate.masks, "comma list of mask variants");
  ablate_cmd->add_option("--depths", ablate.depths, "comma list of ancestor depths");
  ablate_cmd->add_option("--temporal", ablate.temporal, "comma list of temporal windows");
  ablate_cmd->add_option("--out", ablate.out, "CSV output");

  std::uint64_t gc_seed = 0;
  double gc_tol = 1e-4;
  bool gc_ops_only = false;
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  gc_cmd->add_option("--seed", gc_seed);
  gc_cmd->add_option("--tolerance", gc_tol);
  gc_cmd->add_flag("--ops-only", gc_ops_only);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*build_cmd) return cmd_build_corpus(build, out, err);
    if (*stats_cmd) return cmd_stats(stats_input, out);
    if (*synth_cmd) return cmd_synth(synth, synth_out, out);
    if (*train_cmd) return cmd_train(train, out, err);
    if (*decode_cmd) return cmd_decode(decode, out);
    if (*eval_cmd) return cmd_eval(eval, out);
    if (*ablate_cmd) return cmd_ablate(ablate, out, err);
    if (*gc_cmd) return cmd_gradcheck(gc_seed, gc_tol, gc_ops_only, out);
  } catch (const DivergedError& e) {
    err << "error: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const Error& e) {
    err << "error [" << error_kind_name(e.kind()) << "]: " << e.what() << "\n";
    return e.kind() == ErrorKind::kInvalidConfig ? kExitUsage : kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace convstruct
