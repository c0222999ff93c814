#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "agentrank/config.hpp"
#include "agentrank/errors.hpp"
#include "agentrank/pipeline.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace agentrank;
using testsupport::TempDir;
using testsupport::slurp;
using testsupport::spit;

namespace {

/// Smallest complete experiment: a few dozen items, fast collab fit, one
/// quick training epoch.  Used by the pipeline round-trip tests.
json tiny_config(const std::filesystem::path& out) {
  return json{{"seed", 31},
              {"output_dir", out.generic_string()},
              {"synthetic_num_items", 36},
              {"synthetic_num_users", 20},
              {"synthetic_num_categories", 4},
              {"synthetic_sessions_per_user", 3},
              {"n_candidates", 6},
              {"max_history", 5},
              {"k", 3},
              {"t_max", 3},
              {"collab_dim", 6},
              {"collab_iterations", 6},
              {"stage1_group_size", 4},
              {"stage1_batch_size", 8},
              {"stage1_epochs", 1},
              {"stage1_learning_rate", 0.1},
              {"stage2_group_size", 4},
              {"stage2_batch_size", 8},
              {"stage2_epochs", 1},
              {"eval_ks", json::array({1, 3})},
              {"threads", 2},
              {"verify_groups", 300},
              {"verify_seeds", 1},
              {"verify_fd_cases", 3}};
}

RunConfig parse(const json& j) { return run_config_from_json(j); }

}  // namespace

TEST_CASE("a minimal config parses with documented defaults") {
  const RunConfig c = parse(json{{"seed", 7}, {"output_dir", "/tmp/x"}});
  CHECK(c.seed == 7);
  CHECK(c.output_dir == "/tmp/x");
  CHECK_FALSE(c.ingest_mode());
  CHECK(c.k == 10);
  CHECK(c.t_max == 10);
  CHECK(c.request.n_candidates == 20);
  CHECK(c.stage1.group_size == 8);
  CHECK(c.stage1.learning_rate == doctest::Approx(0.05));
  CHECK(c.stage1.batch_size == 64);
  CHECK(c.collab_enabled);
  CHECK(c.eval_ks == std::vector<int>{1, 5, 10});
  CHECK(c.loop_config().max_steps == 22);

  SUBCASE("threads propagate into both stages") {
    const RunConfig t =
        parse(json{{"seed", 7}, {"output_dir", "/tmp/x"}, {"threads", 5}});
    CHECK(t.stage1.threads == 5);
    CHECK(t.stage2.threads == 5);
  }
}

TEST_CASE("configs without a seed are rejected loudly") {
  CHECK_THROWS_WITH_AS(parse(json{{"output_dir", "/tmp/x"}}),
                       doctest::Contains("seed"), ConfigError);
  CHECK_THROWS_WITH_AS(parse(json{{"seed", 7}}),
                       doctest::Contains("output_dir"), ConfigError);
}

TEST_CASE("unknown and mistyped fields are named in the error") {
  CHECK_THROWS_WITH_AS(
      parse(json{{"seed", 1}, {"output_dir", "/tmp/x"}, {"sede", 2}}),
      doctest::Contains("sede"), ConfigError);
  CHECK_THROWS_WITH_AS(
      parse(json{{"seed", "not-a-number"}, {"output_dir", "/tmp/x"}}),
      doctest::Contains("seed"), ConfigError);
  CHECK_THROWS_WITH_AS(
      parse(json{{"seed", 1}, {"output_dir", "/tmp/x"}, {"k", "three"}}),
      doctest::Contains("k"), ConfigError);
}

TEST_CASE("cross-field validation catches inconsistent requests") {
  json base{{"seed", 1}, {"output_dir", "/tmp/x"}};

  SUBCASE("ratios must sum to one") {
    json j = base;
    j["split_train"] = 0.5;
    j["split_val"] = 0.1;
    j["split_test"] = 0.1;
    CHECK_THROWS_AS(parse(j), ConfigError);
  }
  SUBCASE("the ranking length cannot exceed the candidate count") {
    json j = base;
    j["n_candidates"] = 5;
    j["k"] = 6;
    CHECK_THROWS_AS(parse(j), ConfigError);
  }
  SUBCASE("ingest paths come in pairs") {
    json j = base;
    j["catalog_path"] = "/tmp/catalog.jsonl";
    CHECK_THROWS_AS(parse(j), ConfigError);
  }
  SUBCASE("counts must be positive") {
    json j = base;
    j["stage1_group_size"] = 0;
    CHECK_THROWS_AS(parse(j), ConfigError);
  }
}

TEST_CASE("path environment overrides apply to files, nothing else") {
  TempDir dir("config_env");
  spit(dir.file("run.json"),
       json{{"seed", 3}, {"output_dir", "/tmp/original"}}.dump());

  setenv("AGENTRANK_OUTPUT_DIR", "/tmp/overridden", 1);
  const RunConfig c = load_run_config(dir.file("run.json"));
  unsetenv("AGENTRANK_OUTPUT_DIR");
  CHECK(c.output_dir == "/tmp/overridden");
  CHECK(c.seed == 3);  // non-path fields are untouched

  const RunConfig plain = load_run_config(dir.file("run.json"));
  CHECK(plain.output_dir == "/tmp/original");
}

TEST_CASE("the config hash fingerprints every effective field") {
  const json base = tiny_config("/tmp/h");
  const std::string h1 = run_config_hash(parse(base));
  const std::string h2 = run_config_hash(parse(base));
  CHECK(h1 == h2);
  CHECK(h1.size() == 16);  // 64-bit hex

  json changed = base;
  changed["seed"] = 32;
  CHECK(run_config_hash(parse(changed)) != h1);
  changed = base;
  changed["stage1_learning_rate"] = 0.2;
  CHECK(run_config_hash(parse(changed)) != h1);

  // The canonical image covers each field exactly once.
  const json image = run_config_to_json(parse(base));
  CHECK(image.size() == 40);
  CHECK(image.at("seed").get<std::uint64_t>() == 31);
}

TEST_CASE("requests serialize losslessly for the split files") {
  RecommendationRequest r;
  r.user_id = "U7";
  r.history = {"I1", "I2"};
  r.candidates = {"I9", "I2", "I5"};
  r.positive_index = 3;
  r.split_tag = SplitTag::kVal;
  r.target_timestamp = 123456;
  r.target_pos = 4;
  r.uid = 987654321;

  const RecommendationRequest back = request_from_json(request_to_json(r));
  CHECK(back.user_id == r.user_id);
  CHECK(back.history == r.history);
  CHECK(back.candidates == r.candidates);
  CHECK(back.positive_index == r.positive_index);
  CHECK(back.split_tag == r.split_tag);
  CHECK(back.target_timestamp == r.target_timestamp);
  CHECK(back.target_pos == r.target_pos);
  CHECK(back.uid == r.uid);

  CHECK_THROWS_AS(request_from_json(json{{"user_id", "U7"}}), ParseError);
}

TEST_CASE("artifact paths follow the documented layout") {
  const ArtifactPaths paths("/data/run1");
  CHECK(paths.catalog == "/data/run1/catalog.jsonl");
  CHECK(paths.interactions == "/data/run1/interactions.jsonl");
  CHECK(paths.dataset == "/data/run1/dataset.json");
  CHECK(paths.collab == "/data/run1/collab.json");
  CHECK(paths.verification == "/data/run1/verification.json");
  CHECK(paths.requests("train") == "/data/run1/requests_train.jsonl");
  CHECK(paths.checkpoint(1) == "/data/run1/checkpoint_stage1.json");
  CHECK(paths.checkpoint(2) == "/data/run1/checkpoint_stage2.json");
  CHECK(paths.history(1) == "/data/run1/history_stage1.csv");
  CHECK(paths.eval_report("val") == "/data/run1/eval_val.json");
  CHECK(paths.eval_trajectories("test") ==
        "/data/run1/eval_test_trajectories.jsonl");
  CHECK(paths.manifest("gen_data") == "/data/run1/manifest_gen_data.json");
}

TEST_CASE("the data stage writes artifacts the later stages can reload") {
  TempDir dir("pipeline_gen");
  const RunConfig config = parse(tiny_config(dir.path() / "run"));

  const json manifest = run_gen_data(config);
  const ArtifactPaths paths(config.output_dir);
  CHECK(std::filesystem::exists(paths.catalog));
  CHECK(std::filesystem::exists(paths.interactions));
  CHECK(std::filesystem::exists(paths.dataset));
  CHECK(std::filesystem::exists(paths.requests("train")));
  CHECK(std::filesystem::exists(paths.requests("val")));
  CHECK(std::filesystem::exists(paths.requests("test")));
  CHECK(std::filesystem::exists(paths.manifest("gen_data")));
  CHECK(manifest.at("config_hash").get<std::string>() ==
        run_config_hash(config));

  const LoadedDataset data = load_dataset(config);
  CHECK(data.catalog.size() == 36);
  CHECK_FALSE(data.split.train.empty());
  CHECK_FALSE(data.split.val.empty());
  const json ds = json::parse(slurp(paths.dataset));
  CHECK(ds.at("n_train").get<std::size_t>() == data.split.train.size());
  CHECK(ds.at("split_seed").get<std::uint64_t>() == data.split.split_seed);
  CHECK(ds.at("train_visible_end").get<std::int64_t>() ==
        data.split.train_visible_end);

  // The visible stream really is truncated at the boundary.
  for (const UserStream& u : data.visible.users()) {
    for (const Interaction& e : u.events) {
      CHECK(e.timestamp < data.split.train_visible_end);
    }
  }

  SUBCASE("reruns are byte-identical, manifest included") {
    const std::string before = slurp(paths.requests("train"));
    const std::string manifest_before = slurp(paths.manifest("gen_data"));
    run_gen_data(config);
    CHECK(slurp(paths.requests("train")) == before);
    CHECK(slurp(paths.manifest("gen_data")) == manifest_before);
  }
}

TEST_CASE("missing artifacts name the stage that produces them") {
  TempDir dir("pipeline_missing");
  const RunConfig config = parse(tiny_config(dir.path() / "void"));

  CHECK_THROWS_WITH_AS(load_dataset(config), doctest::Contains("gen-data"),
                       DataError);
  CHECK_THROWS_WITH_AS(run_fit_collab(config), doctest::Contains("gen-data"),
                       DataError);

  // Stage 2 needs the stage-1 checkpoint.
  run_gen_data(config);
  run_fit_collab(config);
  CHECK_THROWS_WITH_AS(run_train(config, "2"),
                       doctest::Contains("train --stage 1"), DataError);
}

TEST_CASE("the full pipeline runs end to end in-process") {
  TempDir dir("pipeline_e2e");
  const RunConfig config = parse(tiny_config(dir.path() / "run"));
  const ArtifactPaths paths(config.output_dir);

  run_gen_data(config);
  run_fit_collab(config);
  CHECK(std::filesystem::exists(paths.collab));

  const json train_manifest = run_train(config, "both");
  CHECK(std::filesystem::exists(paths.checkpoint(1)));
  CHECK(std::filesystem::exists(paths.checkpoint(2)));
  CHECK(std::filesystem::exists(paths.history(1)));
  CHECK(std::filesystem::exists(paths.history(2)));
  CHECK(std::filesystem::exists(config.output_dir / "mined_pairs_stage2.jsonl"));
  CHECK(train_manifest.at("manifest").at("config_hash").get<std::string>() ==
        run_config_hash(config));

  // History CSVs have a header and one row per epoch.
  const std::string csv = slurp(paths.history(1));
  CHECK(csv.find("epoch") != std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);  // header + 1 epoch

  const json eval_report = run_eval(config, paths.checkpoint(1), "val");
  CHECK(std::filesystem::exists(paths.eval_report("val")));
  CHECK(std::filesystem::exists(paths.eval_trajectories("val")));
  CHECK(eval_report.at("report").contains("hit"));
  CHECK(eval_report.at("report").contains("ndcg"));
  CHECK(eval_report.contains("uniform_baseline"));

  // Checkpoints reload as valid policies.
  const PolicyParams p1 = load_policy(paths.checkpoint(1));
  const PolicyParams p2 = load_policy(paths.checkpoint(2));
  CHECK(p1.tool_names == p2.tool_names);
  CHECK_FALSE(p1.tool_names.empty());
}
