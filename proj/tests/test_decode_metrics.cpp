#include <doctest.h>

#include <cmath>
#include <random>

#include "convstruct/decode.hpp"
#include "convstruct/error.hpp"
#include "convstruct/metrics.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace convstruct;
using testing_support::chain;
using testing_support::make_item;

namespace {

ModelConfig small_config() {
  ModelConfig c = ModelConfig::desk();
  c.hidden = 8;
  c.intermediate = 16;
  c.heads = 2;
  c.layers = 1;
  c.encoder.embed_dim = 8;
  c.encoder.output_dim = 8;
  c.encoder.intermediate_dim = 16;
  c.encoder.num_heads = 2;
  c.encoder.max_tokens = 8;
  return c;
}

}  // namespace

TEST_CASE("select_parents picks the argmax candidate") {
  const auto one = select_parents(std::vector<double>{-3.0, 9.0}, LossKind::kRank);
  CHECK(one.slots == std::vector<std::size_t>{0});
  CHECK(one.probabilities.size() == 1);
  const auto three =
      select_parents(std::vector<double>{0.1, 2.3, 0.4, 7.0}, LossKind::kRank);
  CHECK(three.slots == std::vector<std::size_t>{1});
  double total = 0.0;
  for (double p : three.probabilities) total += p;
  CHECK(total == doctest::Approx(1.0));

  const auto self =
      select_parents(std::vector<double>{-1.0, 0.0, 3.0}, LossKind::kBce);
  CHECK(self.slots == std::vector<std::size_t>{2});
  const auto multi = select_parents(std::vector<double>{1.0, -2.0, 2.0},
                                    LossKind::kBce, true);
  CHECK(multi.slots == std::vector<std::size_t>{0, 2});
  const auto fallback = select_parents(std::vector<double>{-1.0, -2.0, -3.0},
                                       LossKind::kBce, true);
  CHECK(fallback.slots == std::vector<std::size_t>{0});
  const auto tie = select_parents(std::vector<double>{0.5, 0.5, 0.0}, LossKind::kRank);
  CHECK(tie.slots == std::vector<std::size_t>{1});
}

TEST_CASE("reconstruct forced cases and determinism") {
  Vocabulary vocab = Vocabulary::from_tokens({"text", "0", "1", "2", "3", "4"});
  HierarchicalModel model(small_config(), vocab, 2);
  const auto two = make_item(chain(2));
  CHECK(reconstruct(model, two).graph.parents(1) == std::vector<Index>{0});

  auto item = make_item({{}, {0}, {1}, {0}, {3}, {2}});
  DecodeOptions check;
  check.validate_masks = true;
  const auto a = reconstruct(model, item, check);
  const auto b = reconstruct(model, item, check);
  CHECK(a.graph == b.graph);
  CHECK_NOTHROW(a.graph.validate(Mode::kRedditTree));
  CHECK(a.decisions.size() == 5);
  for (const auto& d : a.decisions) {
    CHECK(d.parents.size() == 1);
    CHECK(d.parents[0] < d.target);
  }

  DecodeOptions forced;
  forced.teacher_forcing = true;
  CHECK(reconstruct(model, item, forced).graph.size() == item.graph.size());
}

TEST_CASE("predict-first baseline") {
  auto star = make_item({{}, {0}, {0}, {0}});
  const auto s = predict_first_baseline(star.conversation);
  CHECK(graph_accuracy(s.graph, star.graph) == 1.0);
  auto c3 = make_item(chain(3));
  CHECK(graph_accuracy(predict_first_baseline(c3.conversation).graph, c3.graph) == 0.5);
}

TEST_CASE("graph and conversation accuracy") {
  ReplyGraph gold({{}, {0}, {1}, {1}, {2}});
  CHECK(graph_accuracy(gold, gold) == 1.0);
  ReplyGraph off({{}, {0}, {1}, {1}, {0}});
  CHECK(graph_accuracy(off, gold) == 0.75);
  std::vector<ReplyGraph> preds{gold, off}, golds{gold, gold};
  CHECK(conversation_accuracy(preds, golds) == 0.5);
  CHECK_THROWS_AS(graph_accuracy(ReplyGraph(3), gold), Error);
}

TEST_CASE("edge precision and recall") {
  ReplyGraph gold({{}, {0}, {1, 0}});
  const auto same = edge_prf(gold, gold);
  CHECK(same.f1 == 1.0);
  ReplyGraph pred({{}, {}, {1}});
  const std::vector<Index> only2{2};
  const auto partial = edge_prf(pred, gold, only2);
  CHECK(partial.precision == 1.0);
  CHECK(partial.recall == 0.5);
  CHECK(partial.f1 == doctest::Approx(2.0 / 3.0));
  const auto empty = edge_prf(ReplyGraph(3), gold);
  CHECK(empty.precision == 0.0);
  CHECK(empty.precision_undefined);
}

TEST_CASE("clustering metric examples") {
  const Partition one{{0, 1, 2, 3}};
  const Partition singles{{0}, {1}, {2}, {3}};
  CHECK(scaled_vi(one, one, 4) == doctest::Approx(100.0));
  CHECK(variation_of_information(singles, one, 4) == doctest::Approx(std::log(4.0)));
  CHECK(scaled_vi(singles, one, 4) == doctest::Approx(0.0).epsilon(1e-12));

  const Partition p{{0, 1}, {2, 3}}, g{{0, 2}, {1, 3}};
  CHECK(one_to_one(p, g, 4) == doctest::Approx(50.0));
  CHECK(one_to_one(p, p, 4) == doctest::Approx(100.0));

  CHECK(cluster_exact_prf(p, p).f1 == 1.0);
  const auto none = cluster_exact_prf(Partition{{0, 1, 2}}, Partition{{0, 1}, {2}});
  CHECK(none.precision == 0.0);
  CHECK(none.recall == 0.0);
  CHECK(none.f1 == 0.0);
  const auto some =
      cluster_exact_prf(Partition{{0, 1}, {2}, {3}}, Partition{{0, 1}, {2, 3}});
  CHECK(some.precision == doctest::Approx(1.0 / 3.0));
  CHECK(some.recall == doctest::Approx(0.5));
  CHECK(some.f1 == doctest::Approx(0.4));
}

TEST_CASE("clustering metrics match brute force for small n") {
  for (std::size_t n = 1; n <= 5; ++n) {
    const auto parts = oracle::all_partitions(n);
    for (const auto& a : parts) {
      for (const auto& b : parts) {
        CHECK(scaled_vi(a, b, n) == doctest::Approx(oracle::scaled_vi(a, b, n)).epsilon(1e-12));
        CHECK(std::abs(one_to_one(a, b, n) - oracle::one_to_one(a, b, n)) < 1e-9);
        CHECK(scaled_vi(a, b, n) == doctest::Approx(scaled_vi(b, a, n)));
      }
    }
  }
}

TEST_CASE("assignment solver on rectangular inputs") {
  const std::vector<std::vector<long long>> w{{1, 5, 3}, {4, 2, 6}};
  const auto m = max_weight_assignment(w);
  REQUIRE(m.size() == 2);
  CHECK(m[0] == 1);
  CHECK(m[1] == 2);
  const std::vector<std::vector<long long>> tall{{3}, {7}, {1}};
  const auto t = max_weight_assignment(tall);
  CHECK(t == std::vector<long>{-1, 0, -1});
}

TEST_CASE("evaluate aligns conversations and reports IRC metrics") {
  auto gold = make_item({{0}, {1}, {0}, {2}, {1}}, Mode::kIrcMultiParent, "x");
  gold.conversation.utterances[0].is_context = true;
  gold.conversation.utterances[1].is_context = true;
  gold.graph.set_parents(1, {1});
  auto pred = gold;
  const auto perfect = evaluate({pred}, {gold});
  CHECK(perfect.graph_acc == 1.0);
  CHECK(perfect.scaled_vi == doctest::Approx(100.0));
  CHECK(perfect.one_to_one == doctest::Approx(100.0));
  CHECK(perfect.scored_utterances == 3);

  pred.graph.set_parents(4, {4});
  const auto worse = evaluate({pred}, {gold});
  CHECK(worse.graph_acc == doctest::Approx(2.0 / 3.0));
  CHECK(worse.to_json().contains("vi_formula"));

  auto other = gold;
  other.conversation.conv_id = "y";
  CHECK_THROWS_AS(evaluate({other}, {gold}), Error);

  Corpus reddit{make_item(chain(4), Mode::kRedditTree, "r")};
  const auto r = evaluate(reddit, reddit);
  CHECK(r.graph_acc == 1.0);
  CHECK(r.conv_acc == 1.0);
  CHECK_FALSE(r.to_text().empty());
}
