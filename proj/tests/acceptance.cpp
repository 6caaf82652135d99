// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any fails. Pass criterion numbers as arguments to run a
// subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "convstruct/cli.hpp"
#include "convstruct/decode.hpp"
#include "convstruct/io.hpp"
#include "convstruct/mask.hpp"
#include "convstruct/metrics.hpp"
#include "convstruct/synth.hpp"
#include "convstruct/trainer.hpp"
#include "convstruct/verify.hpp"
#include "oracles.hpp"

using namespace convstruct;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), format, args...);
  return buf;
}

bool mask_equals_oracle(const AttentionMask& m,
                        const std::vector<std::vector<int>>& truth) {
  for (Index i = 0; i < m.size(); ++i) {
    for (Index j = 0; j < m.size(); ++j) {
      if (m.allowed(i, j) != (truth[i][j] != 0)) return false;
    }
  }
  return true;
}

// 1. Ancestor masks against the brute-force closure.
Outcome mask_oracle() {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::size_t> size(2, 20);
  const auto start = Clock::now();
  std::size_t bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t L = size(rng);
    const auto prefix = oracle::random_tree(L - 1, rng);
    if (!mask_equals_oracle(ancestor_mask(prefix, L), oracle::ancestor_mask(prefix, L))) {
      ++bad;
    }
  }
  const double t = seconds_since(start);
  return {bad == 0 && t < 5.0, fmt("1000 trees, %zu mismatches, %.3fs", bad, t)};
}

// 2. Structural properties of every mask family.
Outcome mask_properties() {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> size(1, 24);
  std::size_t bad = 0;
  std::string first;
  auto fail = [&](const std::string& why) {
    if (bad++ == 0) first = why;
  };
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t L = size(rng);
    const auto prefix = oracle::random_tree(L - 1, rng);
    const auto m = ancestor_mask(prefix, L);
    const Index last = L - 1;
    if (!m.satisfies_invariants()) fail("invariants");
    for (Index i = 0; i < L; ++i) {
      if (!m.allowed(i, i) || !m.allowed(i, last)) fail("diagonal/target column");
      for (Index j = 0; j < L; ++j) {
        if (i == last && j != last && m.allowed(i, j)) fail("target row not self-only");
        if (i != j && j != last && m.allowed(i, j) && j > i) fail("attends to a later row");
        // Closed under composition of history rows.
        if (i != last && j != last && i != j && m.allowed(i, j)) {
          for (Index k = 0; k < last; ++k) {
            if (k != j && m.allowed(j, k) && k != i && !m.allowed(i, k)) {
              fail("not transitive");
            }
          }
        }
      }
    }
    if (!validate_mask(m, prefix).empty()) fail("self-validation");
    const std::size_t depth = std::max<std::size_t>(1, trial % 6);
    const auto limited = depth_limited_mask(prefix, L, depth);
    for (Index i = 0; i < L; ++i) {
      for (Index j = 0; j < L; ++j) {
        if (limited.allowed(i, j) && !m.allowed(i, j)) fail("depth mask exceeds ancestors");
      }
    }
    if (!(depth_limited_mask(prefix, L, L + 1) == m)) fail("deep depth mask differs");
    const auto temporal = temporal_mask(L, trial % 5);
    if (!temporal.satisfies_invariants()) fail("temporal invariants");
  }
  return {bad == 0, fmt("10000 cases, %zu violations%s%s", bad, bad ? ", first: " : "",
                        first.c_str())};
}

ModelConfig flow_config(std::mt19937_64& rng) {
  ModelConfig c = ModelConfig::desk();
  c.hidden = 8 * (1 + rng() % 2);
  c.heads = 1 + rng() % 2;
  c.layers = 1 + rng() % 3;
  c.intermediate = 16;
  c.encoder.output_dim = 8;
  c.encoder.embed_dim = 8;
  c.encoder.num_heads = 2;
  c.encoder.intermediate_dim = 16;
  c.positional = rng() % 2 == 0;
  return c;
}

// 3. Perturbing a row outside a row's ancestor set leaves it bit-identical.
Outcome information_flow() {
  std::mt19937_64 rng(3);
  const Vocabulary vocab = Vocabulary::from_tokens({"a", "b"});
  std::size_t leaks = 0, blocked_checks = 0, full_configs_changed = 0;
  for (int config = 0; config < 100; ++config) {
    const ModelConfig cfg = flow_config(rng);
    HierarchicalModel model(cfg, vocab, config);
    const std::size_t L = 3 + rng() % 12;
    const auto prefix = oracle::random_tree(L - 1, rng);
    const auto anc_mask = ancestor_mask(prefix, L);
    const auto all = full_mask(L);
    tk::Matrix base(L, cfg.encoder.output_dim);
    std::normal_distribution<double> normal;
    for (Eigen::Index i = 0; i < base.size(); ++i) base.data()[i] = normal(rng);
    const auto ref_anc = model.contextualize(tk::Tensor(base), nullptr, anc_mask).value();
    const auto ref_full = model.contextualize(tk::Tensor(base), nullptr, all).value();
    bool changed = false;
    for (Index k = 0; k + 1 < L; ++k) {
      tk::Matrix moved = base;
      for (Eigen::Index c = 0; c < moved.cols(); ++c) moved(k, c) += normal(rng);
      const auto out_anc = model.contextualize(tk::Tensor(moved), nullptr, anc_mask).value();
      const auto out_full = model.contextualize(tk::Tensor(moved), nullptr, all).value();
      for (Index i = 0; i < L; ++i) {
        const bool visible = i == k || (i + 1 < L && oracle::ancestor_closure(prefix, i).count(k));
        if (visible) continue;
        ++blocked_checks;
        if ((out_anc.row(i) - ref_anc.row(i)).cwiseAbs().maxCoeff() != 0.0) ++leaks;
        if ((out_full.row(i) - ref_full.row(i)).cwiseAbs().maxCoeff() > 0.0) changed = true;
      }
    }
    if (changed) ++full_configs_changed;
  }
  return {leaks == 0 && full_configs_changed == 100,
          fmt("100 configs, %zu blocked cells checked, %zu changed (want 0); "
              "full mask changed output in %zu/100",
              blocked_checks, leaks, full_configs_changed)};
}

// 4. Whole-model finite-difference check.
Outcome model_gradcheck() {
  const auto start = Clock::now();
  tk::GradCheckOptions options;
  options.tolerance = 1e-4;
  options.fourth_order = true;
  options.step = 1e-3;
  double worst = 0.0;
  std::size_t entries = 0;
  bool all = true;
  std::string worst_name;
  for (const auto& r : verify_model(0, options)) {
    all = all && r.passed;
    entries += r.entries_checked;
    if (r.max_relative_error >= worst) {
      worst = r.max_relative_error;
      worst_name = r.name + " " + r.worst_parameter;
    }
  }
  const double t = seconds_since(start);
  return {all && worst <= 1e-4 && t < 300.0,
          fmt("%zu entries, max rel err %.2e (%s), %.1fs", entries, worst,
              worst_name.c_str(), t)};
}

// 5. Closed-form loss values.
Outcome loss_identities() {
  double worst = 0.0;
  for (std::size_t L = 2; L <= 16; ++L) {
    std::vector<double> zeros(L - 1, 0.0);
    std::vector<int> labels(L - 1, 0);
    labels[(L * 7) % (L - 1)] = 1;
    const double expected = std::log(static_cast<double>(L - 1));
    worst = std::max(worst, std::abs(rank_loss(zeros, labels) - expected));
    const tk::Tensor col(tk::Matrix::Zero(static_cast<Eigen::Index>(L), 1));
    worst = std::max(worst, std::abs(rank_loss(col, (L * 7) % (L - 1)).item() - expected));

    std::vector<double> bz(L, 0.0);
    std::vector<int> by(L, 0);
    std::vector<double> byd(L, 0.0);
    for (std::size_t i = 0; i < L; i += 2) by[i] = 1, byd[i] = 1.0;
    const double bce_expected = static_cast<double>(L) * std::log(2.0);
    worst = std::max(worst, std::abs(bce_loss(bz, by) - bce_expected));
    worst = std::max(worst, std::abs(bce_loss(col, byd).item() - bce_expected));
  }
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal(0.0, 5.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> logits(1 + trial % 20);
    for (double& v : logits) v = normal(rng);
    const auto p = parent_distribution(logits);
    double total = 0.0;
    for (double v : p) total += v;
    worst = std::max(worst, std::abs(total - 1.0));
    tk::Matrix row(1, static_cast<Eigen::Index>(logits.size()));
    for (std::size_t i = 0; i < logits.size(); ++i) row(0, i) = logits[i];
    worst = std::max(worst, std::abs(tk::softmax_rows(tk::Tensor(row)).value().sum() - 1.0));
  }
  return {worst <= 1e-12, fmt("max deviation %.3e", worst)};
}

// 6. Clustering metrics against exhaustive oracles, plus fixtures.
Outcome clustering_metrics() {
  double worst = 0.0;
  std::size_t pairs = 0;
  std::mt19937_64 rng(6);
  for (std::size_t n = 1; n <= 8; ++n) {
    const auto parts = oracle::all_partitions(n);
    std::vector<std::size_t> golds;
    if (n <= 6) {
      for (std::size_t g = 0; g < parts.size(); ++g) golds.push_back(g);
    } else {
      // Every partition as the prediction, against a seeded sample of gold
      // partitions plus the two extremes.
      golds = {0, parts.size() - 1};
      for (int s = 0; s < 40; ++s) golds.push_back(rng() % parts.size());
    }
    for (const auto& pred : parts) {
      for (std::size_t g : golds) {
        const auto& gold = parts[g];
        const double o2o_oracle = pred.size() <= 6 && gold.size() <= 6
                                      ? oracle::one_to_one(pred, gold, n)
                                      : oracle::one_to_one_dp(pred, gold, n);
        worst = std::max(worst, std::abs(scaled_vi(pred, gold, n) -
                                         oracle::scaled_vi(pred, gold, n)));
        worst = std::max(worst, std::abs(one_to_one(pred, gold, n) - o2o_oracle));
        worst = std::max(worst, std::abs(one_to_one(gold, pred, n) - o2o_oracle));
        ++pairs;
      }
    }
  }
  bool fixtures = true;
  auto near = [](double a, double b) { return std::abs(a - b) < 1e-9; };
  const auto c1 = cluster_exact_prf({{0, 1}, {2}, {3}}, {{0, 1}, {2, 3}});
  fixtures &= near(c1.precision, 1.0 / 3) && near(c1.recall, 0.5) && near(c1.f1, 0.4);
  const auto c2 = cluster_exact_prf({{0, 1, 2}}, {{0, 1}, {2}});
  fixtures &= c2.precision == 0.0 && c2.recall == 0.0 && c2.f1 == 0.0;
  const ReplyGraph gold({{}, {0}, {1, 0}});
  const auto e1 = edge_prf(ReplyGraph({{}, {}, {1}}), gold, {2});
  fixtures &= near(e1.precision, 1.0) && near(e1.recall, 0.5) && near(e1.f1, 2.0 / 3);
  const auto e2 = edge_prf(gold, gold);
  fixtures &= e2.f1 == 1.0;
  const auto e3 = edge_prf(ReplyGraph(3), gold);
  fixtures &= e3.precision == 0.0 && e3.precision_undefined;
  fixtures &= near(one_to_one({{0, 1}, {2, 3}}, {{0, 2}, {1, 3}}, 4), 50.0);
  fixtures &= near(scaled_vi({{0}, {1}, {2}, {3}}, {{0, 1, 2, 3}}, 4), 0.0);
  return {worst <= 1e-9 && fixtures,
          fmt("%zu partition pairs, max deviation %.3e, fixtures %s", pairs, worst,
              fixtures ? "ok" : "FAILED")};
}

// --- synthetic experiments (7, 8, 9) ---------------------------------------

struct SynthData {
  Corpus train, dev, test;
};

SynthData synth_data() {
  SynthConfig cfg;  // 12 utterances, ambiguity 0.6
  cfg.n_conversations = 200;
  cfg.seed = 101;
  SynthData d;
  d.train = generate_corpus(cfg);
  cfg.n_conversations = 40;
  cfg.seed = 202;
  d.dev = generate_corpus(cfg);
  cfg.seed = 303;
  d.test = generate_corpus(cfg);
  return d;
}

struct Variant {
  double test_acc = 0.0;
  double seconds = 0.0;
  std::uint64_t ck_initial = 0, ck_stage1 = 0, ck_stage2 = 0;
};

Variant train_variant(const SynthData& d, const MaskSpec& mask) {
  const auto start = Clock::now();
  ModelConfig model = ModelConfig::desk();
  model.mask = mask;
  const TrainConfig train = TrainConfig::desk();
  TrainResult r = train_two_stage(d.train, d.dev, model, train);
  Variant v;
  v.test_acc = evaluate(decode_corpus(r.model, d.test), d.test).graph_acc;
  v.seconds = seconds_since(start);
  v.ck_initial = r.encoder_checksum_initial;
  v.ck_stage1 = r.encoder_checksum_after_stage1;
  v.ck_stage2 = r.encoder_checksum_after_stage2;
  std::fprintf(stderr, "  [%s] test graph_acc %.4f (%.0fs)\n", mask.name().c_str(),
               v.test_acc, v.seconds);
  return v;
}

struct SynthResults {
  bool ran = false;
  SynthData data;
  Variant ancestor, none, depth1, depth_max;
  std::size_t max_depth = 0;
  double predict_first = 0.0;
  double seconds_7 = 0.0;
};

SynthResults& synth_results() {
  static SynthResults r;
  return r;
}

void run_ablation_7() {
  auto& r = synth_results();
  if (r.ran) return;
  r.ran = true;
  const auto start = Clock::now();
  r.data = synth_data();
  Corpus baseline;
  for (const auto& item : r.data.test) {
    baseline.push_back({item.conversation, predict_first_baseline(item.conversation).graph});
  }
  r.predict_first = evaluate(baseline, r.data.test).graph_acc;
  r.ancestor = train_variant(r.data, MaskSpec::parse("ancestor"));
  r.none = train_variant(r.data, MaskSpec::parse("none"));
  r.seconds_7 = seconds_since(start);
}

Outcome ancestor_vs_no_mask() {
  run_ablation_7();
  const auto& r = synth_results();
  const bool pass = r.ancestor.test_acc >= r.none.test_acc + 0.05 &&
                    r.ancestor.test_acc > r.predict_first && r.seconds_7 <= 1800.0;
  return {pass, fmt("ancestor %.4f, no-mask %.4f (need >= %.4f), predict-first %.4f, %.0fs",
                    r.ancestor.test_acc, r.none.test_acc, r.none.test_acc + 0.05,
                    r.predict_first, r.seconds_7)};
}

Outcome depth_ablation() {
  run_ablation_7();
  auto& r = synth_results();
  Corpus all = r.data.train;
  all.insert(all.end(), r.data.test.begin(), r.data.test.end());
  r.max_depth = tree_stats(all).max_depth;
  if (r.max_depth < 4) return {false, fmt("generated depth %zu < 4", r.max_depth)};
  // Depth counts nodes, so the deepest ancestor lies max_depth - 1 hops up.
  r.depth1 = train_variant(r.data, MaskSpec::parse("depth1"));
  r.depth_max = train_variant(r.data, MaskSpec::parse("depth" + std::to_string(r.max_depth - 1)));
  return {r.depth_max.test_acc >= r.depth1.test_acc,
          fmt("generation depth %zu; d=%zu %.4f, d=1 %.4f", r.max_depth, r.max_depth - 1,
              r.depth_max.test_acc, r.depth1.test_acc)};
}

Outcome encoder_freeze() {
  run_ablation_7();
  const auto& v = synth_results().ancestor;
  return {v.ck_initial == v.ck_stage1 && v.ck_stage2 != v.ck_stage1,
          fmt("initial %016llx, after stage 1 %016llx, after stage 2 %016llx",
              static_cast<unsigned long long>(v.ck_initial),
              static_cast<unsigned long long>(v.ck_stage1),
              static_cast<unsigned long long>(v.ck_stage2))};
}

// 10. Full CLI pipeline twice into separate directories.
Outcome pipeline_reproducible() {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "convstruct_acceptance_repro";
  fs::remove_all(root);
  const std::string config = (root / "cfg.json").string();
  fs::create_directories(root);
  write_file_atomic(config,
                    R"({"preset":"desk","train":{"stage1_epochs":2,"stage2_epochs":2}})");
  std::vector<std::string> files{"train.jsonl", "test.jsonl", "model.ckpt", "model.ckpt.vocab",
                                 "metrics.csv", "pred.jsonl", "probs.csv", "report.json",
                                 "report.txt"};
  auto run = [&](const fs::path& dir) {
    fs::create_directories(dir);
    auto p = [&](const std::string& f) { return (dir / f).string(); };
    std::ostringstream out, err;
    int code = 0;
    auto step = [&](std::vector<std::string> args) {
      if (code == 0) code = run_cli(args, out, err);
    };
    step({"synth", "--out", p("train.jsonl"), "--conversations", "30", "--seed", "7"});
    step({"synth", "--out", p("test.jsonl"), "--conversations", "10", "--seed", "8"});
    step({"train", "--config", config, "--train", p("train.jsonl"), "--dev", p("test.jsonl"),
          "--out", p("model.ckpt"), "--metrics", p("metrics.csv"), "--seed", "3"});
    step({"decode", "--checkpoint", p("model.ckpt"), "--input", p("test.jsonl"), "--out",
          p("pred.jsonl"), "--sidecar", p("probs.csv")});
    step({"eval", "--pred", p("pred.jsonl"), "--gold", p("test.jsonl"), "--mode", "reddit",
          "--json", p("report.json"), "--text", p("report.txt")});
    return code;
  };
  const int c1 = run(root / "a");
  const int c2 = run(root / "b");
  std::size_t differing = 0;
  for (const auto& f : files) {
    if (!fs::exists(root / "a" / f) || read_file(root / "a" / f) != read_file(root / "b" / f)) {
      ++differing;
    }
  }
  fs::remove_all(root);
  return {c1 == 0 && c2 == 0 && differing == 0,
          fmt("exit codes %d/%d, %zu of %zu artifacts differ", c1, c2, differing, files.size())};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"mask oracle vs brute force", mask_oracle},
      {"mask properties", mask_properties},
      {"information flow under masks", information_flow},
      {"full-model gradcheck", model_gradcheck},
      {"loss identities", loss_identities},
      {"clustering and edge metrics", clustering_metrics},
      {"ancestor mask beats no mask on synthetic data", ancestor_vs_no_mask},
      {"deep ancestor context beats parent-only", depth_ablation},
      {"encoder frozen in stage 1, trained in stage 2", encoder_freeze},
      {"synth-train-decode-eval reproducible", pipeline_reproducible},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));
  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int number = static_cast<int>(k + 1);
    if (!selected.empty() && !selected.count(number)) continue;
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", number, criteria[k].first,
                o.detail.c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
