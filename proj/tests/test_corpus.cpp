#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "agentrank/corpus.hpp"
#include "agentrank/errors.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace agentrank;
using testsupport::TempDir;
using testsupport::spit;

namespace {

SyntheticConfig tiny_synth() {
  SyntheticConfig c;
  c.num_items = 40;
  c.num_users = 25;
  c.num_categories = 5;
  c.sessions_per_user = 3;
  return c;
}

}  // namespace

TEST_CASE("catalog ingestion round-trips through the JSONL writer") {
  TempDir dir("corpus_roundtrip");
  const SyntheticData data = generate_synthetic(tiny_synth(), 99);

  write_catalog_jsonl(data.catalog, dir.file("catalog.jsonl"));
  write_interactions_jsonl(data.stream, dir.file("interactions.jsonl"));

  const Catalog catalog = ingest_catalog(dir.file("catalog.jsonl"));
  const InteractionStream stream =
      ingest_interactions(dir.file("interactions.jsonl"), catalog);

  REQUIRE(catalog.size() == data.catalog.size());
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    const Item& a = data.catalog.items()[i];
    const Item& b = catalog.items()[i];
    CHECK(a.item_id == b.item_id);
    CHECK(a.title == b.title);
    CHECK(a.categories == b.categories);
    CHECK(a.price == b.price);
    CHECK(a.avg_rating == b.avg_rating);
    CHECK(a.review_count == b.review_count);
  }

  REQUIRE(stream.total_events() == data.stream.total_events());
  REQUIRE(stream.users().size() == data.stream.users().size());
  for (std::size_t u = 0; u < stream.users().size(); ++u) {
    const UserStream& a = data.stream.users()[u];
    const UserStream& b = stream.users()[u];
    CHECK(a.user_id == b.user_id);
    REQUIRE(a.events.size() == b.events.size());
    for (std::size_t e = 0; e < a.events.size(); ++e) {
      CHECK(a.events[e].item_id == b.events[e].item_id);
      CHECK(a.events[e].timestamp == b.events[e].timestamp);
      CHECK(a.events[e].rating == b.events[e].rating);
    }
  }
}

TEST_CASE("interaction count equals the number of JSONL lines written") {
  TempDir dir("corpus_linecount");
  const SyntheticData data = generate_synthetic(tiny_synth(), 7);
  write_interactions_jsonl(data.stream, dir.file("interactions.jsonl"));

  const std::string text = testsupport::slurp(dir.file("interactions.jsonl"));
  const std::size_t lines =
      static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
  CHECK(lines == data.stream.total_events());
}

TEST_CASE("malformed JSONL lines raise ParseError naming the line") {
  TempDir dir("corpus_malformed");
  spit(dir.file("bad.jsonl"),
       "{\"item_id\":\"I1\",\"title\":\"One\",\"categories\":[\"c\"]}\n"
       "{this is not json}\n");
  CHECK_THROWS_WITH_AS(ingest_catalog(dir.file("bad.jsonl")),
                       doctest::Contains("bad.jsonl:2"), ParseError);

  SUBCASE("missing required field also names the line and the field") {
    spit(dir.file("missing.jsonl"),
         "{\"item_id\":\"I1\",\"categories\":[\"c\"]}\n");
    CHECK_THROWS_WITH_AS(ingest_catalog(dir.file("missing.jsonl")),
                         doctest::Contains("missing.jsonl:1"), ParseError);
    CHECK_THROWS_WITH_AS(ingest_catalog(dir.file("missing.jsonl")),
                         doctest::Contains("title"), ParseError);
  }
}

TEST_CASE("interactions referencing unknown items raise DataError with the id") {
  TempDir dir("corpus_dangling");
  spit(dir.file("catalog.jsonl"),
       "{\"item_id\":\"I1\",\"title\":\"One\",\"categories\":[\"c\"]}\n");
  spit(dir.file("interactions.jsonl"),
       "{\"user_id\":\"U1\",\"item_id\":\"I1\",\"timestamp\":10}\n"
       "{\"user_id\":\"U1\",\"item_id\":\"X9\",\"timestamp\":20}\n");
  const Catalog catalog = ingest_catalog(dir.file("catalog.jsonl"));
  CHECK_THROWS_WITH_AS(
      ingest_interactions(dir.file("interactions.jsonl"), catalog),
      doctest::Contains("X9"), DataError);
}

TEST_CASE("user streams are grouped and time-sorted") {
  std::vector<Interaction> events = {
      {"U2", "I1", 50, {}},
      {"U1", "I2", 30, {}},
      {"U1", "I1", 10, 4.0},
      {"U2", "I2", 40, {}},
  };
  const InteractionStream stream(events);
  REQUIRE(stream.users().size() == 2);
  CHECK(stream.users()[0].user_id == "U1");  // lexicographic user order
  CHECK(stream.users()[1].user_id == "U2");
  CHECK(stream.users()[0].events[0].timestamp == 10);
  CHECK(stream.users()[0].events[1].timestamp == 30);
  CHECK(stream.users()[1].events[0].timestamp == 40);
  CHECK(stream.users()[1].events[1].timestamp == 50);
  CHECK(stream.total_events() == 4);

  SUBCASE("truncation keeps strictly earlier events") {
    const InteractionStream cut = stream.truncated_before(40);
    CHECK(cut.total_events() == 2);
    CHECK(cut.find_user("U2") == nullptr);
  }
}

TEST_CASE("chronological split orders targets and respects the ratios") {
  const SyntheticData data = generate_synthetic(tiny_synth(), 31);
  const RequestOptions opt{8, 6, 1};
  const DatasetSplit split =
      chronological_split(data.catalog, data.stream, SplitRatios{}, opt, 17);

  const std::size_t total =
      split.train.size() + split.val.size() + split.test.size();
  REQUIRE(total > 0);
  CHECK(split.train.size() ==
        static_cast<std::size_t>(
            std::floor(0.8 * static_cast<double>(total) + 1e-9)));

  // Every train target precedes every val target precedes every test target.
  auto max_ts = [](const std::vector<RecommendationRequest>& reqs) {
    std::int64_t m = INT64_MIN;
    for (const auto& r : reqs) m = std::max(m, r.target_timestamp);
    return m;
  };
  auto min_ts = [](const std::vector<RecommendationRequest>& reqs) {
    std::int64_t m = INT64_MAX;
    for (const auto& r : reqs) m = std::min(m, r.target_timestamp);
    return m;
  };
  if (!split.train.empty() && !split.val.empty()) {
    CHECK(max_ts(split.train) <= min_ts(split.val));
  }
  if (!split.val.empty() && !split.test.empty()) {
    CHECK(max_ts(split.val) <= min_ts(split.test));
  }
  CHECK(split.train_visible_end == min_ts(split.val));
  CHECK(max_ts(split.train) <= split.train_visible_end);

  // uids are unique across the whole dataset.
  std::set<std::uint64_t> uids;
  for (const auto* part : {&split.train, &split.val, &split.test}) {
    for (const auto& r : *part) uids.insert(r.uid);
  }
  CHECK(uids.size() == total);
}

TEST_CASE("requests satisfy the structural invariants") {
  const SyntheticData data = generate_synthetic(tiny_synth(), 5);
  const RequestOptions opt{8, 6, 2};  // min_history = 2
  const DatasetSplit split =
      chronological_split(data.catalog, data.stream, SplitRatios{}, opt, 3);

  auto check_request = [&](const RecommendationRequest& r) {
    REQUIRE(r.candidates.size() == 8);
    std::set<std::string> distinct(r.candidates.begin(), r.candidates.end());
    CHECK(distinct.size() == r.candidates.size());

    REQUIRE(r.positive_index >= 1);
    REQUIRE(r.positive_index <= 8);
    const std::string& positive = r.candidates[r.positive_index - 1];

    // The positive appears exactly once; it is the target event's item.
    CHECK(std::count(r.candidates.begin(), r.candidates.end(), positive) == 1);
    const UserStream& user = data.stream.user(r.user_id);
    CHECK(user.events[r.target_pos].item_id == positive);
    CHECK(user.events[r.target_pos].timestamp == r.target_timestamp);

    // History: most recent prior events, oldest first, capped at 6.
    CHECK(r.history.size() <= 6);
    CHECK(r.history.size() >= 2);  // min_history
    const int start = r.target_pos - static_cast<int>(r.history.size());
    for (std::size_t h = 0; h < r.history.size(); ++h) {
      CHECK(r.history[h] ==
            user.events[static_cast<std::size_t>(start) + h].item_id);
    }

    // Negatives avoid the history and the positive.
    for (const std::string& c : r.candidates) {
      if (c == positive) continue;
      CHECK(std::find(r.history.begin(), r.history.end(), c) ==
            r.history.end());
    }
  };

  std::size_t checked = 0;
  for (const auto* part : {&split.train, &split.val, &split.test}) {
    for (const auto& r : *part) {
      check_request(r);
      ++checked;
    }
  }
  CHECK(checked > 20);

  // min_history excludes early targets entirely.
  for (const auto* part : {&split.train, &split.val, &split.test}) {
    for (const auto& r : *part) CHECK(r.target_pos >= 2);
  }
}

TEST_CASE("the synthetic generator is deterministic in its seed") {
  const SyntheticData a = generate_synthetic(tiny_synth(), 11);
  const SyntheticData b = generate_synthetic(tiny_synth(), 11);
  const SyntheticData c = generate_synthetic(tiny_synth(), 12);

  TempDir dir("corpus_determinism");
  write_catalog_jsonl(a.catalog, dir.file("a_cat.jsonl"));
  write_catalog_jsonl(b.catalog, dir.file("b_cat.jsonl"));
  write_catalog_jsonl(c.catalog, dir.file("c_cat.jsonl"));
  write_interactions_jsonl(a.stream, dir.file("a_int.jsonl"));
  write_interactions_jsonl(b.stream, dir.file("b_int.jsonl"));
  write_interactions_jsonl(c.stream, dir.file("c_int.jsonl"));

  CHECK(testsupport::slurp(dir.file("a_cat.jsonl")) ==
        testsupport::slurp(dir.file("b_cat.jsonl")));
  CHECK(testsupport::slurp(dir.file("a_int.jsonl")) ==
        testsupport::slurp(dir.file("b_int.jsonl")));
  CHECK(testsupport::slurp(dir.file("a_int.jsonl")) !=
        testsupport::slurp(dir.file("c_int.jsonl")));
}

TEST_CASE("synthetic metadata documents the planted structure") {
  const SyntheticData data = generate_synthetic(tiny_synth(), 2);
  REQUIRE(data.metadata.is_object());
  CHECK(data.metadata.contains("user_preferred_categories"));
  CHECK(data.metadata.at("generator") == "planted-preference");
  CHECK(data.metadata.at("cooc_degree").get<int>() == tiny_synth().cooc_degree);
  CHECK(data.metadata.at("category_affinity").get<double>() ==
        tiny_synth().category_affinity);
  CHECK(data.catalog.size() == 40);
  CHECK(data.stream.users().size() == 25);

  // Ratings, when present, live in [0, 5].
  for (const UserStream& u : data.stream.users()) {
    for (const Interaction& e : u.events) {
      if (e.rating) {
        CHECK(*e.rating >= 0.0);
        CHECK(*e.rating <= 5.0);
      }
    }
  }
}

TEST_CASE("build_request is deterministic given the rng state") {
  const SyntheticData data = generate_synthetic(tiny_synth(), 21);
  const RequestOptions opt{8, 6, 1};
  const std::string user = data.stream.users()[3].user_id;

  Rng r1(77), r2(77);
  const RecommendationRequest a =
      build_request(data.catalog, data.stream, user, 2, opt, r1);
  const RecommendationRequest b =
      build_request(data.catalog, data.stream, user, 2, opt, r2);
  CHECK(a.candidates == b.candidates);
  CHECK(a.positive_index == b.positive_index);
  CHECK(a.history == b.history);
  CHECK(a.uid == b.uid);
}
