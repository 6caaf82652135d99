#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "convstruct/corpus.hpp"
#include "convstruct/error.hpp"
#include "convstruct/graph.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace convstruct;
using testing_support::chain;
using testing_support::make_item;

namespace {

bool throws_kind(ErrorKind kind, const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind() == kind;
  }
  return false;
}

}  // namespace

TEST_CASE("ancestors follow parent links transitively") {
  ReplyGraph g({{}, {0}, {0}, {1}});
  CHECK(ancestors(g, 3) == std::vector<Index>{0, 1});
  CHECK(ancestors(g, 0).empty());
  ReplyGraph irc({{0}, {0}, {1}, {3}, {2}, {5}});
  CHECK(ancestors(irc, 5).empty());
}

TEST_CASE("ancestors agree with repeated parent following on random trees") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const auto g = oracle::random_tree(2 + trial % 25, rng);
    for (Index i = 0; i < g.size(); ++i) {
      const auto expected = oracle::ancestor_closure(g, i);
      CHECK(ancestors(g, i) ==
            std::vector<Index>(expected.begin(), expected.end()));
    }
  }
}

TEST_CASE("graph_distance counts upward hops") {
  ReplyGraph c(chain(4));
  CHECK(graph_distance(c, 3, 0) == 3u);
  CHECK(graph_distance(c, 2, 2) == 0u);
  ReplyGraph siblings({{}, {0}, {0}});
  CHECK_FALSE(graph_distance(siblings, 2, 1).has_value());

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto g = oracle::random_tree(2 + trial % 15, rng);
    for (Index i = 0; i < g.size(); ++i) {
      for (Index j = 0; j < g.size(); ++j) {
        const int d = oracle::distance(g, i, j);
        const auto got = graph_distance(g, i, j);
        if (d < 0) {
          CHECK_FALSE(got.has_value());
        } else {
          REQUIRE(got.has_value());
          CHECK(*got == static_cast<std::size_t>(d));
        }
      }
    }
  }
}

TEST_CASE("connected_components matches union-find") {
  ReplyGraph g({{}, {0}, {}, {2}});
  CHECK(connected_components(g, 4) == Partition{{0, 1}, {2, 3}});
  CHECK(connected_components(ReplyGraph(3), 3) == Partition{{0}, {1}, {2}});
  ReplyGraph self({{}, {1}});
  CHECK(connected_components(self, 2) == Partition{{0}, {1}});

  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + trial % 12;
    ReplyGraph r(n);
    std::uniform_int_distribution<int> coin(0, 2);
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j <= i; ++j) {
        if (coin(rng) == 0) r.add_parent(i, j);
      }
    }
    CHECK(connected_components(r, n) == oracle::components(r, n));
  }
}

TEST_CASE("tree statistics") {
  Corpus one{make_item(chain(4))};
  CHECK(tree_stats(one).average_depth == doctest::Approx(4.0));
  Corpus two{make_item(chain(3)), make_item(chain(5))};
  const auto s = tree_stats(two);
  CHECK(s.count == 2);
  CHECK(s.comment_count == 8);
  CHECK(s.average_depth == doctest::Approx(4.0));
  CHECK(s.max_depth == 5);
  Corpus star{make_item({{}, {0}, {0}, {0}})};
  CHECK(tree_stats(star).average_depth == doctest::Approx(2.0));
}

TEST_CASE("graph validation rejects malformed trees") {
  CHECK_NOTHROW(ReplyGraph(chain(3)).validate(Mode::kRedditTree));
  CHECK(throws_kind(ErrorKind::kInvalidGraph, [] {
    ReplyGraph({{}, {2}, {0}}).validate(Mode::kRedditTree);
  }));
  CHECK(throws_kind(ErrorKind::kInvalidGraph, [] {
    ReplyGraph({{0}, {0}}).validate(Mode::kRedditTree);
  }));
}

TEST_CASE("corpus JSONL round trip and parse errors") {
  auto item = make_item({{}, {0}, {1}});
  const std::string line = to_jsonl_line(item);
  const auto back = parse_conversation_line(line);
  CHECK(back.graph == item.graph);
  CHECK(back.conversation.size() == 3);
  CHECK(back.conversation.utterances[2].text == "text 2");

  std::istringstream one(line + "\n");
  CHECK(parse_conversations(one).size() == 1);
  std::istringstream empty("");
  CHECK(parse_conversations(empty).empty());

  const std::string dangling =
      R"({"conv_id":"x","mode":"reddit","utterances":[)"
      R"({"id":"a","author":"p","ts":0,"text":"t","parents":[]},)"
      R"({"id":"b","author":"q","ts":1,"text":"u","parents":["missing"]}]})";
  CHECK(throws_kind(ErrorKind::kInvalidGraph,
                    [&] { parse_conversation_line(dangling); }));
  CHECK(throws_kind(ErrorKind::kParseError,
                    [] { parse_conversation_line("{not json"); }));
}

TEST_CASE("filter_reddit_large cascades removals") {
  auto deep = make_item(chain(7));
  CHECK(filter_reddit_large({deep}).size() == 1);

  auto long_text = deep;
  long_text.conversation.utterances[2].text = std::string(129, 'x');
  CHECK(filter_reddit_large({long_text}).empty());

  auto accent = make_item(chain(8));
  accent.conversation.utterances[7].text = "h\xc3\xa9llo";
  const auto kept = filter_reddit_large({accent});
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].conversation.size() == 7);

  auto deleted = make_item(chain(8));
  deleted.conversation.utterances[7].text = "[deleted]";
  REQUIRE(filter_reddit_large({deleted}).size() == 1);
}

TEST_CASE("prune_to_window removes latest removable leaves") {
  auto star = make_item({{}, {0}, {0}, {0}, {0}});
  auto w = prune_to_window(star, 2, 3);
  CHECK(w.kept == std::vector<Index>{0, 1, 2});
  CHECK(w.target == 2);
  CHECK_FALSE(w.oversize);

  auto c4 = make_item(chain(4));
  CHECK(prune_to_window(c4, 3, 4).kept == std::vector<Index>{0, 1, 2, 3});

  auto c5 = make_item(chain(5));
  auto irreducible = prune_to_window(c5, 4, 3);
  CHECK(irreducible.kept == std::vector<Index>{0, 1, 2, 3, 4});
  CHECK(irreducible.oversize);

  CHECK(throws_kind(ErrorKind::kInvalidTarget, [&] { prune_to_window(c5, 0, 3); }));
}

TEST_CASE("prune_to_window always keeps root, target and its ancestors") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + trial % 30;
    auto item = make_item({});
    item = make_item(std::vector<std::vector<Index>>(n));
    item.graph = oracle::random_tree(n, rng);
    const Index target = 1 + trial % (n - 1);
    const std::size_t k = 2 + trial % 10;
    const auto w = prune_to_window(item, target, k);
    auto has = [&](Index x) {
      return std::find(w.kept.begin(), w.kept.end(), x) != w.kept.end();
    };
    CHECK(has(0));
    CHECK(has(target));
    for (Index a : oracle::ancestor_closure(item.graph, target)) CHECK(has(a));
    if (!w.oversize) CHECK(w.kept.size() == std::min(n, k));
    CHECK(std::is_sorted(w.kept.begin(), w.kept.end()));
  }
}

TEST_CASE("irc_window arithmetic") {
  auto item = make_item(std::vector<std::vector<Index>>(80), Mode::kIrcMultiParent);
  const auto w = irc_window(item.conversation, 73, 40);
  CHECK(w.first == 34);
  CHECK(w.last == 73);
  CHECK(irc_window(item.conversation, 5, 40).first == 0);
  const auto single = irc_window(item.conversation, 9, 1);
  CHECK(single.size() == 1);
  CHECK(single.first == 9);
}

TEST_CASE("mark_context_self_parents") {
  std::vector<std::vector<Index>> parents(1200);
  for (Index i = 1000; i < 1200; ++i) parents[i] = {i - 1};
  auto item = make_item(parents, Mode::kIrcMultiParent);
  const auto marked = mark_context_self_parents(item, 1000);
  for (Index i = 0; i < 1000; ++i) {
    CHECK(marked.graph.parents(i) == std::vector<Index>{i});
    CHECK(marked.conversation.utterances[i].is_context);
  }
  CHECK(marked.graph.parents(1000) == std::vector<Index>{999});

  CHECK(mark_context_self_parents(item, 0).graph == item.graph);

  auto annotated = make_item({{0}, {0}, {1}}, Mode::kIrcMultiParent);
  std::vector<std::string> warnings;
  const auto over = mark_context_self_parents(annotated, 2, &warnings);
  CHECK(over.graph.parents(1) == std::vector<Index>{1});
  CHECK(warnings.size() == 1);
}

TEST_CASE("split_corpus sizes and determinism") {
  Corpus corpus;
  for (int i = 0; i < 10; ++i) {
    corpus.push_back(make_item(chain(3), Mode::kRedditTree, "c" + std::to_string(i)));
  }
  const auto split = split_corpus(corpus, {0.8, 0.1, 0.1}, 1);
  CHECK(split.train.size() == 8);
  CHECK(split.dev.size() == 1);
  CHECK(split.test.size() == 1);
  const auto again = split_corpus(corpus, {0.8, 0.1, 0.1}, 1);
  for (std::size_t i = 0; i < split.train.size(); ++i) {
    CHECK(split.train[i].conversation.conv_id == again.train[i].conversation.conv_id);
  }
  const auto sizes = split_sizes(9483, {0.8, 0.1, 0.1});
  CHECK(sizes[0] + sizes[1] + sizes[2] == 9483);
  CHECK(std::abs(static_cast<long>(sizes[0]) - 7487) <= 100);
  CHECK(std::abs(static_cast<long>(sizes[1]) - 936) <= 20);
  CHECK(std::abs(static_cast<long>(sizes[2]) - 936) <= 20);
}

TEST_CASE("pair samples are balanced per target") {
  Corpus corpus{make_item({{}, {0}, {0}, {2}})};
  const auto pairs = pair_samples_downsampled(corpus, 0);
  std::size_t pos = 0, neg = 0, target1 = 0;
  for (const auto& p : pairs) {
    (p.is_parent ? pos : neg)++;
    if (p.target == 1) ++target1;
  }
  CHECK(pos == 3);
  CHECK(neg == 2);
  CHECK(target1 == 1);

  std::mt19937_64 rng(9);
  Corpus big;
  for (int i = 0; i < 30; ++i) {
    auto item = make_item(std::vector<std::vector<Index>>(12));
    item.graph = oracle::random_tree(12, rng);
    big.push_back(item);
  }
  std::size_t p = 0, n = 0;
  for (const auto& s : pair_samples_downsampled(big, 4)) (s.is_parent ? p : n)++;
  // Each target with at least two candidates contributes one of each.
  CHECK(p == 30 * 11);
  CHECK(n == 30 * 10);
}
