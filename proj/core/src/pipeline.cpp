#include "agentrank/pipeline.hpp"

#include <cstdint>
#include <optional>
#include <sstream>

#include "agentrank/errors.hpp"
#include "agentrank/json_io.hpp"

namespace agentrank {

namespace fs = std::filesystem;

// ---- artifact layout ---------------------------------------------------------

ArtifactPaths::ArtifactPaths(const fs::path& output_dir)
    : dir(output_dir),
      catalog(output_dir / "catalog.jsonl"),
      interactions(output_dir / "interactions.jsonl"),
      dataset(output_dir / "dataset.json"),
      collab(output_dir / "collab.json"),
      verification(output_dir / "verification.json") {}

fs::path ArtifactPaths::requests(const std::string& split) const {
  return dir / ("requests_" + split + ".jsonl");
}
fs::path ArtifactPaths::checkpoint(int stage) const {
  return dir / ("checkpoint_stage" + std::to_string(stage) + ".json");
}
fs::path ArtifactPaths::history(int stage) const {
  return dir / ("history_stage" + std::to_string(stage) + ".csv");
}
fs::path ArtifactPaths::eval_report(const std::string& split) const {
  return dir / ("eval_" + split + ".json");
}
fs::path ArtifactPaths::eval_trajectories(const std::string& split) const {
  return dir / ("eval_" + split + "_trajectories.jsonl");
}
fs::path ArtifactPaths::manifest(const std::string& subcommand) const {
  return dir / ("manifest_" + subcommand + ".json");
}

namespace {

void require_artifact(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path)) {
    throw DataError("missing artifact " + path.string() + "; run `" +
                    producer + "` first");
  }
}

void write_json_file(const fs::path& path, const json& j) {
  write_file(path, j.dump(2) + "\n");
}

json write_manifest(const ArtifactPaths& paths, const std::string& subcommand,
                    const RunConfig& config,
                    const std::vector<std::string>& outputs) {
  json m{{"subcommand", subcommand},
         {"config_hash", run_config_hash(config)},
         {"versions",
          {{"checkpoint", PolicyParams::kCheckpointVersion},
           {"feature", PolicyParams::kFeatureVersion}}},
         {"outputs", outputs}};
  write_json_file(paths.manifest(subcommand), m);
  return m;
}

SplitTag split_tag_from_name(const std::string& name) {
  if (name == "train") return SplitTag::kTrain;
  if (name == "val") return SplitTag::kVal;
  if (name == "test") return SplitTag::kTest;
  throw DataError("unknown split '" + name + "' (expected train|val|test)");
}

void write_requests_jsonl(const std::vector<RecommendationRequest>& requests,
                          const fs::path& path) {
  std::ostringstream out;
  for (const RecommendationRequest& r : requests) {
    out << request_to_json(r).dump() << "\n";
  }
  write_file(path, out.str());
}

std::vector<RecommendationRequest> read_requests_jsonl(const fs::path& path) {
  std::vector<RecommendationRequest> out;
  for_each_jsonl(path, [&](std::size_t, const json& j) {
    out.push_back(request_from_json(j));
  });
  return out;
}

/// Owning bundle behind a World (the World itself only borrows).
struct WorldBundle {
  explicit WorldBundle(const RunConfig& config, LoadedDataset dataset,
                       std::optional<CollabModel> collab_model)
      : data(std::move(dataset)), collab(std::move(collab_model)) {
    RegistryOptions reg_opts;
    reg_opts.collab_enabled = collab.has_value();
    registry = ToolRegistry(reg_opts);
    world.catalog = &data.catalog;
    world.full = &data.full;
    world.visible = &data.visible;
    world.collab = collab.has_value() ? &*collab : nullptr;
    world.registry = &registry;
    world.loop = config.loop_config();
  }

  const std::vector<RecommendationRequest>& requests(
      const std::string& split) const {
    if (split == "train") return data.split.train;
    if (split == "val") return data.split.val;
    if (split == "test") return data.split.test;
    throw DataError("unknown split '" + split +
                    "' (expected train|val|test)");
  }

  LoadedDataset data;
  std::optional<CollabModel> collab;
  ToolRegistry registry;
  World world;
};

WorldBundle make_world(const RunConfig& config, const ArtifactPaths& paths) {
  LoadedDataset dataset = load_dataset(config);
  std::optional<CollabModel> collab;
  if (config.collab_enabled) {
    require_artifact(paths.collab, "fit-collab");
    collab = CollabModel::load(paths.collab);
  }
  return WorldBundle(config, std::move(dataset), std::move(collab));
}

std::string stage1_history_csv(const TrainResult& result) {
  std::ostringstream out;
  out << "epoch,mean_reward,valid_fraction,kept_fraction,hit1,hit10,"
         "mean_n_tool,tool_rate_positive,mean_update_norm\n";
  for (const EpochStats& e : result.history) {
    const BatchStats& t = e.totals;
    const double update_norm =
        t.n_updates > 0 ? t.sum_update_norm / t.n_updates : 0.0;
    out << e.epoch << ',' << format_double(t.mean_reward()) << ','
        << format_double(t.valid_fraction()) << ','
        << format_double(t.kept_fraction()) << ','
        << format_double(t.hit1_fraction()) << ','
        << format_double(t.hit10_fraction()) << ','
        << format_double(t.mean_n_tool()) << ','
        << format_double(t.tool_rate_positive()) << ','
        << format_double(update_norm) << "\n";
  }
  return out.str();
}

std::string stage2_history_csv(const Stage2Result& result) {
  std::ostringstream out;
  out << "epoch,n_pairs,violation_rate_start,accuracy,mean_update_norm\n";
  for (const Stage2EpochStats& e : result.history) {
    const double update_norm = e.totals.n_updates > 0
                                   ? e.totals.sum_update_norm / e.totals.n_updates
                                   : 0.0;
    out << e.epoch << ',' << e.n_pairs << ','
        << format_double(e.violation_rate_start) << ','
        << format_double(e.totals.accuracy()) << ','
        << format_double(update_norm) << "\n";
  }
  return out.str();
}

json train_stage1_impl(const RunConfig& config, const ArtifactPaths& paths,
                       const WorldBundle& bundle) {
  const std::vector<std::unique_ptr<RequestEnv>> envs =
      build_envs(bundle.requests("train"), bundle.world);
  PolicyParams params = PolicyParams::zero(bundle.registry);
  const TrainResult result =
      train_stage1(params, envs, config.stage1, config.seed);
  save_policy(params, paths.checkpoint(1));
  write_file(paths.history(1), stage1_history_csv(result));
  json summary{{"stage", 1}, {"epochs", json::array()}};
  for (const EpochStats& e : result.history) {
    json row = e.totals.to_json();
    row["epoch"] = e.epoch;
    summary["epochs"].push_back(std::move(row));
  }
  return summary;
}

json train_stage2_impl(const RunConfig& config, const ArtifactPaths& paths,
                       const WorldBundle& bundle) {
  require_artifact(paths.checkpoint(1), "train --stage 1");
  const std::vector<std::unique_ptr<RequestEnv>> envs =
      build_envs(bundle.requests("train"), bundle.world);
  PolicyParams params = load_policy(paths.checkpoint(1));
  if (params.tool_names != bundle.registry.names()) {
    throw FormatError(
        "stage-1 checkpoint was trained against a different tool registry");
  }
  const Stage2Result result =
      train_stage2(params, envs, config.stage2, config.seed);
  save_policy(params, paths.checkpoint(2));
  write_file(paths.history(2), stage2_history_csv(result));
  std::ostringstream pair_log;
  for (const Stage2EpochStats& e : result.history) {
    for (const MinedPair& pair : e.mining.pairs) {
      json row = pair.to_json();
      row["epoch"] = e.epoch;
      pair_log << row.dump() << "\n";
    }
  }
  write_file(paths.dir / "mined_pairs_stage2.jsonl", pair_log.str());
  json summary{{"stage", 2},
               {"violation_rate_final", result.violation_rate_final},
               {"epochs", json::array()}};
  for (const Stage2EpochStats& e : result.history) {
    json row = e.totals.to_json();
    row["epoch"] = e.epoch;
    row["n_pairs"] = e.n_pairs;
    row["violation_rate_start"] = e.violation_rate_start;
    summary["epochs"].push_back(std::move(row));
  }
  return summary;
}

}  // namespace

// ---- request round-trip --------------------------------------------------------

json request_to_json(const RecommendationRequest& r) {
  return json{{"user_id", r.user_id},
              {"history", r.history},
              {"candidates", r.candidates},
              {"positive_index", r.positive_index},
              {"split_tag", split_tag_name(r.split_tag)},
              {"target_timestamp", r.target_timestamp},
              {"target_pos", r.target_pos},
              {"uid", r.uid}};
}

RecommendationRequest request_from_json(const json& j) {
  try {
    RecommendationRequest r;
    r.user_id = j.at("user_id").get<std::string>();
    r.history = j.at("history").get<std::vector<std::string>>();
    r.candidates = j.at("candidates").get<std::vector<std::string>>();
    r.positive_index = j.at("positive_index").get<int>();
    r.split_tag = split_tag_from_name(j.at("split_tag").get<std::string>());
    r.target_timestamp = j.at("target_timestamp").get<std::int64_t>();
    r.target_pos = j.at("target_pos").get<int>();
    r.uid = j.at("uid").get<std::uint64_t>();
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad request record: ") + e.what());
  }
}

// ---- subcommands ------------------------------------------------------------------

LoadedDataset load_dataset(const RunConfig& config) {
  const ArtifactPaths paths(config.output_dir);
  require_artifact(paths.catalog, "gen-data");
  require_artifact(paths.interactions, "gen-data");
  require_artifact(paths.dataset, "gen-data");

  LoadedDataset out;
  out.catalog = ingest_catalog(paths.catalog);
  out.full = ingest_interactions(paths.interactions, out.catalog);

  json meta;
  try {
    meta = json::parse(read_file(paths.dataset));
    out.split.split_seed = meta.at("split_seed").get<std::uint64_t>();
    out.split.train_visible_end =
        meta.at("train_visible_end").get<std::int64_t>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("corrupt dataset.json: ") + e.what());
  }
  for (const std::string split : {"train", "val", "test"}) {
    require_artifact(paths.requests(split), "gen-data");
  }
  out.split.train = read_requests_jsonl(paths.requests("train"));
  out.split.val = read_requests_jsonl(paths.requests("val"));
  out.split.test = read_requests_jsonl(paths.requests("test"));
  out.visible = out.full.truncated_before(out.split.train_visible_end);
  return out;
}

json run_gen_data(const RunConfig& config) {
  const ArtifactPaths paths(config.output_dir);
  fs::create_directories(paths.dir);

  Catalog catalog;
  InteractionStream stream;
  json generator_meta;
  if (config.ingest_mode()) {
    catalog = ingest_catalog(config.catalog_path);
    stream = ingest_interactions(config.interactions_path, catalog);
    generator_meta = json{{"mode", "ingest"},
                          {"catalog_path", config.catalog_path.generic_string()},
                          {"interactions_path",
                           config.interactions_path.generic_string()}};
  } else {
    SyntheticData data = generate_synthetic(
        config.synthetic, Rng::derive(config.seed, {seed_tag::kData}));
    catalog = std::move(data.catalog);
    stream = std::move(data.stream);
    generator_meta = std::move(data.metadata);
    generator_meta["mode"] = "synthetic";
  }

  const DatasetSplit split =
      chronological_split(catalog, stream, config.ratios, config.request,
                          Rng::derive(config.seed, {seed_tag::kSplit}));

  write_catalog_jsonl(catalog, paths.catalog);
  write_interactions_jsonl(stream, paths.interactions);
  write_requests_jsonl(split.train, paths.requests("train"));
  write_requests_jsonl(split.val, paths.requests("val"));
  write_requests_jsonl(split.test, paths.requests("test"));
  write_json_file(paths.dataset,
                  json{{"split_seed", split.split_seed},
                       {"train_visible_end", split.train_visible_end},
                       {"n_items", catalog.size()},
                       {"n_events", stream.total_events()},
                       {"n_train", split.train.size()},
                       {"n_val", split.val.size()},
                       {"n_test", split.test.size()},
                       {"generator", generator_meta}});

  return write_manifest(paths, "gen_data", config,
                        {"catalog.jsonl", "interactions.jsonl", "dataset.json",
                         "requests_train.jsonl", "requests_val.jsonl",
                         "requests_test.jsonl"});
}

json run_fit_collab(const RunConfig& config) {
  const ArtifactPaths paths(config.output_dir);
  const LoadedDataset dataset = load_dataset(config);
  const CollabModel model =
      CollabModel::fit(dataset.catalog, dataset.visible, config.collab,
                       Rng::derive(config.seed, {seed_tag::kCollab}));
  model.save(paths.collab);
  return write_manifest(paths, "fit_collab", config, {"collab.json"});
}

json run_train(const RunConfig& config, const std::string& stage) {
  if (stage != "1" && stage != "2" && stage != "both") {
    throw ConfigError("--stage must be one of 1|2|both");
  }
  const ArtifactPaths paths(config.output_dir);
  const WorldBundle bundle = make_world(config, paths);

  json summary{{"stages", json::array()}};
  std::vector<std::string> outputs;
  if (stage == "1" || stage == "both") {
    summary["stages"].push_back(train_stage1_impl(config, paths, bundle));
    outputs.push_back("checkpoint_stage1.json");
    outputs.push_back("history_stage1.csv");
  }
  if (stage == "2" || stage == "both") {
    summary["stages"].push_back(train_stage2_impl(config, paths, bundle));
    outputs.push_back("checkpoint_stage2.json");
    outputs.push_back("history_stage2.csv");
  }
  const json manifest =
      write_manifest(paths, "train_stage_" + stage, config, outputs);
  summary["manifest"] = manifest;
  return summary;
}

json run_eval(const RunConfig& config, const fs::path& checkpoint_path,
              const std::string& split) {
  const ArtifactPaths paths(config.output_dir);
  require_artifact(checkpoint_path, "train");
  const WorldBundle bundle = make_world(config, paths);
  const PolicyParams params = load_policy(checkpoint_path);
  if (params.tool_names != bundle.registry.names()) {
    throw FormatError(
        "checkpoint was trained against a different tool registry");
  }

  const std::vector<std::unique_ptr<RequestEnv>> envs =
      build_envs(bundle.requests(split), bundle.world);
  EvalOptions options;
  options.ks = config.eval_ks;
  options.threads = config.threads;
  std::vector<Trajectory> trajectories;
  const EvalReport report =
      evaluate(params, envs, split, options, &trajectories);
  std::vector<double> rewards;
  rewards.reserve(trajectories.size());
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    rewards.push_back(
        overall_reward(trajectories[i], envs[i]->request().positive_index)
            .total);
  }

  json uniform_hit = json::object();
  json uniform_ndcg = json::object();
  for (int k : options.ks) {
    const std::string key = std::to_string(k);
    uniform_hit[key] =
        uniform_policy_hit_at_k(config.request.n_candidates, k);
    uniform_ndcg[key] =
        uniform_policy_ndcg_at_k(config.request.n_candidates, k);
  }
  json out{{"report", report.to_json()},
           {"tool_usage", tool_usage_stats(trajectories, rewards)},
           {"uniform_baseline",
            {{"hit_at", uniform_hit}, {"ndcg_at", uniform_ndcg}}},
           {"checkpoint", checkpoint_path.filename().generic_string()},
           {"config_hash", run_config_hash(config)}};
  write_json_file(paths.eval_report(split), out);

  std::ostringstream lines;
  for (const Trajectory& t : trajectories) lines << t.to_json().dump() << "\n";
  write_file(paths.eval_trajectories(split), lines.str());

  write_manifest(paths, "eval_" + split, config,
                 {paths.eval_report(split).filename().generic_string(),
                  paths.eval_trajectories(split).filename().generic_string()});
  return out;
}

VerificationSummary run_verify(const RunConfig& config) {
  const ArtifactPaths paths(config.output_dir);
  fs::create_directories(paths.dir);

  VerificationOptions options;
  options.unbiasedness_groups = config.verify_groups;
  options.unbiasedness_seeds = config.verify_seeds;
  options.fd_cases = config.verify_fd_cases;
  options.seed = config.seed;
  options.threads = config.threads;
  const VerificationSummary summary = run_verification(options);

  json out = summary.to_json();
  out["config_hash"] = run_config_hash(config);
  write_json_file(paths.verification, out);
  write_manifest(paths, "verify", config, {"verification.json"});
  return summary;
}

}  // namespace agentrank
