#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "agentrank/agent_loop.hpp"
#include "agentrank/collab.hpp"
#include "agentrank/corpus.hpp"
#include "agentrank/grpo.hpp"
#include "agentrank/ppr.hpp"

namespace agentrank {

/**
 * One experiment, one file.  The config is a single flat JSON object; every
 * key maps to exactly one field below.  `seed` and `output_dir` are
 * mandatory — there are no wall-clock or otherwise environment-dependent
 * defaults, so identical files mean identical runs.  Paths (and only paths)
 * may be overridden through environment variables.
 */
struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;

  // Data source: when both file paths are set, ingest them; otherwise run
  // the planted synthetic generator.
  std::filesystem::path catalog_path;
  std::filesystem::path interactions_path;
  SyntheticConfig synthetic;

  SplitRatios ratios;
  RequestOptions request;
  int k = 10;      // ranking length
  int t_max = 10;  // tool budget

  bool collab_enabled = true;
  CollabConfig collab;

  GrpoConfig stage1;
  PprConfig stage2;

  std::vector<int> eval_ks = {1, 5, 10};
  int threads = 1;

  // Verification workload knobs (statistical defaults, not tolerances).
  int verify_groups = 100000;
  int verify_seeds = 3;
  int verify_fd_cases = 50;

  bool ingest_mode() const {
    return !catalog_path.empty() && !interactions_path.empty();
  }
  LoopConfig loop_config() const {
    LoopConfig loop;
    loop.k = k;
    loop.t_max = t_max;
    loop.max_steps = 2 * t_max + 2;
    return loop;
  }
};

/**
 * Parse and validate a config file.  Unknown keys, wrong types, missing
 * mandatory keys, and out-of-range values all raise ConfigError naming the
 * offending field; JSON syntax errors raise ParseError with the location.
 * Environment overrides (paths only) are applied afterwards:
 *   AGENTRANK_OUTPUT_DIR, AGENTRANK_CATALOG_PATH, AGENTRANK_INTERACTIONS_PATH.
 */
RunConfig load_run_config(const std::filesystem::path& path);

/// Parse from an already-loaded object (no environment overrides).
RunConfig run_config_from_json(const json& j);

/// Canonical JSON image of the effective config (every field, sorted keys).
json run_config_to_json(const RunConfig& config);

/// Fingerprint of the canonical image; recorded in every manifest.
std::string run_config_hash(const RunConfig& config);

}  // namespace agentrank
