#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "agentrank/config.hpp"
#include "agentrank/metrics.hpp"
#include "agentrank/verify.hpp"

namespace agentrank {

/// Canonical artifact locations under a run's output directory.
struct ArtifactPaths {
  explicit ArtifactPaths(const std::filesystem::path& output_dir);

  std::filesystem::path dir;
  std::filesystem::path catalog;        // catalog.jsonl
  std::filesystem::path interactions;   // interactions.jsonl
  std::filesystem::path dataset;        // dataset.json (split metadata)
  std::filesystem::path collab;         // collab.json
  std::filesystem::path verification;   // verification.json

  std::filesystem::path requests(const std::string& split) const;
  std::filesystem::path checkpoint(int stage) const;
  std::filesystem::path history(int stage) const;
  std::filesystem::path eval_report(const std::string& split) const;
  std::filesystem::path eval_trajectories(const std::string& split) const;
  std::filesystem::path manifest(const std::string& subcommand) const;
};

/// Everything the pipeline stages share, loaded back from artifacts.
struct LoadedDataset {
  Catalog catalog;
  InteractionStream full;
  InteractionStream visible;  // truncated at the train-visible boundary
  DatasetSplit split;
};

json request_to_json(const RecommendationRequest& request);
RecommendationRequest request_from_json(const json& j);

/// Rebuild the dataset from the gen-data artifacts.  Raises DataError
/// naming `gen-data` when any artifact is missing.
LoadedDataset load_dataset(const RunConfig& config);

/// Generate (or ingest) the corpus, split it, and write catalog /
/// interactions / per-split request files plus dataset.json.  Returns the
/// manifest that was written.
json run_gen_data(const RunConfig& config);

/// Fit the collaborative model on the train-visible stream; write collab.json.
json run_fit_collab(const RunConfig& config);

/// Train stage 1 (GRPO), stage 2 (preference refinement), or both.  Writes
/// one checkpoint and one plot-ready history CSV per stage.  `stage` is
/// "1", "2", or "both"; stage 2 starts from the stage-1 checkpoint.
json run_train(const RunConfig& config, const std::string& stage);

/// Greedy evaluation of a checkpoint on one split; writes the report JSON
/// and the decoded trajectories JSONL.  Returns the report JSON.
json run_eval(const RunConfig& config,
              const std::filesystem::path& checkpoint_path,
              const std::string& split);

/// Run the proposition suites with the config's seed/threads; writes
/// verification.json.  The caller decides the exit code from `.pass`.
VerificationSummary run_verify(const RunConfig& config);

}  // namespace agentrank
