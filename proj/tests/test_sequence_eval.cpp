#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "picle/sequence_eval.hpp"
#include "support/oracle.hpp"

using namespace picle;

TEST_CASE("chunker handles the textbook cases") {
  using V = std::vector<std::string>;
  CHECK(extract_chunks(V{}) == std::vector<Chunk>{});
  CHECK(extract_chunks(V{"O", "O"}) == std::vector<Chunk>{});
  CHECK(extract_chunks(V{"B-X"}) == std::vector<Chunk>{{0, 0, "X"}});
  CHECK(extract_chunks(V{"B-X", "I-X", "I-X"}) == std::vector<Chunk>{{0, 2, "X"}});
  CHECK(extract_chunks(V{"B-X", "B-X"}) == std::vector<Chunk>{{0, 0, "X"}, {1, 1, "X"}});
  CHECK(extract_chunks(V{"B-X", "I-Y"}) == std::vector<Chunk>{{0, 0, "X"}, {1, 1, "Y"}});
  CHECK(extract_chunks(V{"O", "B-X", "I-X", "O", "B-Y"}) ==
        std::vector<Chunk>{{1, 2, "X"}, {4, 4, "Y"}});
}

TEST_CASE("lenient mode promotes orphan I- tags, strict mode rejects them") {
  const std::vector<std::string> orphan{"O", "I-X", "I-X", "O"};
  CHECK(extract_chunks(orphan, true) == std::vector<Chunk>{{1, 2, "X"}});
  CHECK_THROWS_AS(extract_chunks(orphan, false), SchemaError);

  const std::vector<std::string> type_switch{"B-X", "I-Y"};
  CHECK_THROWS_AS(extract_chunks(type_switch, false), SchemaError);
}

TEST_CASE("invalid tags are rejected in both modes") {
  CHECK_THROWS_AS(extract_chunks({"Q-X"}), SchemaError);
  CHECK_THROWS_AS(extract_chunks({"B"}), SchemaError);
  CHECK_THROWS_AS(extract_chunks({"BX"}), SchemaError);
}

TEST_CASE("chunker agrees with the candidate-enumeration oracle on random inputs") {
  std::mt19937 gen(20240814);
  std::uniform_int_distribution<std::size_t> len(0, 24);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto tags = oracle::random_tags(gen, len(gen), false);
    CAPTURE(tags);
    CHECK(extract_chunks(tags, true) == oracle::chunks_lenient(tags));
    if (oracle::has_strict_violation(tags)) {
      CHECK_THROWS_AS(extract_chunks(tags, false), SchemaError);
    } else {
      CHECK(extract_chunks(tags, false) == extract_chunks(tags, true));
    }
  }
}

TEST_CASE("tags_from_chunks inverts extract_chunks") {
  std::mt19937 gen(99);
  std::uniform_int_distribution<std::size_t> len(1, 20);
  for (int trial = 0; trial < 500; ++trial) {
    const auto tags = oracle::random_tags(gen, len(gen), true);
    const auto chunks = extract_chunks(tags, true);
    // Well-formed generator only emits B-started chunks, so the round trip
    // must reproduce the tags byte for byte.
    CHECK(tags_from_chunks(chunks, tags.size()) == tags);
  }
  CHECK_THROWS_AS(tags_from_chunks({{0, 3, "X"}}, 2), UsageError);
  CHECK_THROWS_AS(tags_from_chunks({{0, 1, "X"}, {1, 2, "X"}}, 5), UsageError);
}

TEST_CASE("alignment picks earliest unconsumed exact window") {
  const std::vector<std::string> tokens{"MK", "-", "801", "and", "MK", "-", "801", "."};

  SECTION("duplicate surfaces claim successive occurrences") {
    const auto r = align_predictions({"MK - 801", "MK - 801"}, tokens, "Chem");
    REQUIRE(r.aligned.size() == 2);
    CHECK(r.aligned[0].chunk == Chunk{0, 2, "Chem"});
    CHECK(r.aligned[1].chunk == Chunk{4, 6, "Chem"});
    CHECK(r.unmatched_predictions.empty());
  }

  SECTION("a third duplicate has nowhere to go") {
    const auto r = align_predictions({"MK - 801", "MK - 801", "MK - 801"}, tokens);
    CHECK(r.aligned.size() == 2);
    REQUIRE(r.unmatched_predictions.size() == 1);
    CHECK(r.unmatched_predictions[0] == "MK - 801");
  }

  SECTION("case matters") {
    const auto r = align_predictions({"mk - 801"}, tokens);
    CHECK(r.aligned.empty());
    CHECK(r.unmatched_predictions == std::vector<std::string>{"mk - 801"});
  }

  SECTION("whitespace in the prediction is normalized before matching") {
    const auto r = align_predictions({"  MK   -\t801 "}, tokens);
    REQUIRE(r.aligned.size() == 1);
    CHECK(r.aligned[0].chunk.start == 0);
    CHECK(r.aligned[0].chunk.end == 2);
  }

  SECTION("empty and whitespace-only predictions never match") {
    const auto r = align_predictions({"", "   "}, tokens);
    CHECK(r.aligned.empty());
    CHECK(r.unmatched_predictions.size() == 2);
  }
}

TEST_CASE("alignment agrees with the window-enumeration oracle on random inputs") {
  std::mt19937 gen(777);
  const std::vector<std::string> vocab{"a", "b", "c", "aspirin", "MK", "-", "801"};
  std::uniform_int_distribution<std::size_t> tok_len(1, 12), pick(0, vocab.size() - 1),
      pred_n(0, 6), pred_len(1, 3);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::string> tokens;
    for (std::size_t i = 0, n = tok_len(gen); i < n; ++i) tokens.push_back(vocab[pick(gen)]);
    std::vector<std::string> preds;
    for (std::size_t i = 0, n = pred_n(gen); i < n; ++i) {
      std::string p;
      for (std::size_t j = 0, m = pred_len(gen); j < m; ++j) {
        if (j) p += ' ';
        p += vocab[pick(gen)];
      }
      preds.push_back(p);
    }
    CAPTURE(tokens, preds);
    const auto got = align_predictions(preds, tokens, "T");
    const auto want = oracle::align(preds, tokens);
    std::size_t matched = 0;
    for (std::size_t pi = 0; pi < preds.size(); ++pi) {
      if (want.spans[pi]) {
        REQUIRE(matched < got.aligned.size());
        CHECK(got.aligned[matched].prediction_index == pi);
        CHECK(got.aligned[matched].chunk.start == want.spans[pi]->first);
        CHECK(got.aligned[matched].chunk.end == want.spans[pi]->second);
        ++matched;
      }
    }
    CHECK(got.aligned.size() == matched);
    CHECK(got.unmatched_predictions.size() == preds.size() - matched);
  }
}

TEST_CASE("micro scoring matches hand-computed counts") {
  // Sample 1: gold {X@[0,0], X@[2,3]}, predictions align at [0,0] and [1,1].
  // Sample 2: gold {X@[1,1]}, one unmatched prediction.
  std::vector<std::vector<Chunk>> gold{{{0, 0, "X"}, {2, 3, "X"}}, {{1, 1, "X"}}};
  std::vector<AlignmentResult> pred(2);
  pred[0].aligned = {{0, {0, 0, "X"}}, {1, {1, 1, "X"}}};
  pred[1].unmatched_predictions = {"ghost"};

  const MetricReport r = score_micro(gold, pred);
  CHECK(r.tp == 1);
  CHECK(r.fp == 2);
  CHECK(r.fn == 2);
  CHECK(r.precision == Catch::Approx(1.0 / 3.0));
  CHECK(r.recall == Catch::Approx(1.0 / 3.0));
  CHECK(r.f1 == Catch::Approx(1.0 / 3.0));
}

TEST_CASE("micro scoring respects multiset semantics for duplicate spans") {
  std::vector<std::vector<Chunk>> gold{{{0, 0, "X"}}};
  std::vector<AlignmentResult> pred(1);
  pred[0].aligned = {{0, {0, 0, "X"}}, {1, {0, 0, "X"}}};
  const MetricReport r = score_micro(gold, pred);
  CHECK(r.tp == 1);
  CHECK(r.fp == 1);
  CHECK(r.fn == 0);
}

TEST_CASE("micro scoring length mismatch is a usage error") {
  CHECK_THROWS_AS(score_micro({{}}, {}), UsageError);
}

TEST_CASE("end-to-end scoring agrees with the oracle pipeline on random instances") {
  std::mt19937 gen(31337);
  std::uniform_int_distribution<std::size_t> n_samples(1, 6), tok_len(1, 10), pred_n(0, 5);
  const std::vector<std::string> vocab{"x", "y", "z", "w"};
  std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1);
  std::uniform_int_distribution<int> coin(0, 1);

  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::vector<Chunk>> gold;
    std::vector<AlignmentResult> pred;
    std::vector<oracle::AlignedOracle> want_align;
    for (std::size_t s = 0, ns = n_samples(gen); s < ns; ++s) {
      std::vector<std::string> tokens;
      for (std::size_t i = 0, n = tok_len(gen); i < n; ++i) tokens.push_back(vocab[pick(gen)]);
      // Gold tags over a single type so alignment's stamped type matches.
      std::vector<std::string> tags;
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (coin(gen) && (tags.empty() || tags.back() == "O"))
          tags.push_back("B-T");
        else if (!tags.empty() && tags.back() != "O" && coin(gen))
          tags.push_back("I-T");
        else
          tags.push_back("O");
      }
      gold.push_back(extract_chunks(tags));
      std::vector<std::string> preds;
      for (std::size_t i = 0, n = pred_n(gen); i < n; ++i) {
        std::string p = vocab[pick(gen)];
        if (coin(gen)) p += " " + vocab[pick(gen)];
        preds.push_back(p);
      }
      pred.push_back(align_predictions(preds, tokens, "T"));
      want_align.push_back(oracle::align(preds, tokens));
    }
    const MetricReport got = score_micro(gold, pred);
    const oracle::Counts want = oracle::micro_counts(gold, want_align, "T");
    CHECK(got.tp == want.tp);
    CHECK(got.fp == want.fp);
    CHECK(got.fn == want.fn);
  }
}

TEST_CASE("demonstration-set scoring uses surface multisets") {
  const MetricReport r = score_demonstration_set({{"a", "a", "b"}, {}},
                                                 {{"a", "b", "b"}, {"c"}});
  CHECK(r.tp == 2);  // one "a", one "b"
  CHECK(r.fp == 1);  // extra "a"
  CHECK(r.fn == 2);  // missing "b", missing "c"
  CHECK_THROWS_AS(score_demonstration_set({{}}, {}), UsageError);
}

TEST_CASE("from_counts degenerate cases") {
  const MetricReport zero = MetricReport::from_counts(0, 0, 0);
  CHECK(zero.precision == 0.0);
  CHECK(zero.recall == 0.0);
  CHECK(zero.f1 == 0.0);
  const MetricReport perfect = MetricReport::from_counts(5, 0, 0);
  CHECK(perfect.f1 == 1.0);
}
