#include "agentrank/config.hpp"

#include <cmath>
#include <cstdlib>
#include <set>

#include "agentrank/errors.hpp"
#include "agentrank/json_io.hpp"

namespace agentrank {

namespace {

/// Tracks which keys were consumed so leftovers can be reported as typos.
class FieldReader {
 public:
  explicit FieldReader(const json& j) : j_(j) {
    if (!j.is_object()) {
      throw ConfigError("config root must be a JSON object");
    }
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config field '" + key + "' has the wrong type");
    }
  }

  void read_path(const std::string& key, std::filesystem::path& out) {
    std::string s = out.string();
    read(key, s);
    out = s;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      (void)value;
      if (!seen_.count(key)) {
        throw ConfigError("unknown config field '" + key + "'");
      }
    }
  }

 private:
  const json& j_;
  std::set<std::string> seen_;
};

void require_positive(const char* key, double v) {
  if (!(v > 0.0)) {
    throw ConfigError(std::string("config field '") + key +
                      "' must be positive");
  }
}

void require_positive(const char* key, int v) {
  if (v <= 0) {
    throw ConfigError(std::string("config field '") + key +
                      "' must be positive");
  }
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  FieldReader r(j);

  if (!r.has("seed")) {
    throw ConfigError(
        "config field 'seed' is required; runs never default to wall-clock "
        "seeds");
  }
  r.read("seed", c.seed);
  if (!r.has("output_dir")) {
    throw ConfigError("config field 'output_dir' is required");
  }
  r.read_path("output_dir", c.output_dir);
  r.read_path("catalog_path", c.catalog_path);
  r.read_path("interactions_path", c.interactions_path);
  if (c.catalog_path.empty() != c.interactions_path.empty()) {
    throw ConfigError(
        "config fields 'catalog_path' and 'interactions_path' must be set "
        "together");
  }

  r.read("synthetic_num_items", c.synthetic.num_items);
  r.read("synthetic_num_users", c.synthetic.num_users);
  r.read("synthetic_num_categories", c.synthetic.num_categories);
  r.read("synthetic_sessions_per_user", c.synthetic.sessions_per_user);
  r.read("synthetic_session_len_min", c.synthetic.session_len_min);
  r.read("synthetic_session_len_max", c.synthetic.session_len_max);
  r.read("synthetic_category_affinity", c.synthetic.category_affinity);
  r.read("synthetic_cooc_strength", c.synthetic.cooc_strength);
  r.read("synthetic_cooc_degree", c.synthetic.cooc_degree);
  r.read("synthetic_rating_prob", c.synthetic.rating_prob);

  r.read("split_train", c.ratios.train);
  r.read("split_val", c.ratios.val);
  r.read("split_test", c.ratios.test);

  r.read("n_candidates", c.request.n_candidates);
  r.read("max_history", c.request.max_history);
  r.read("min_history", c.request.min_history);
  r.read("k", c.k);
  r.read("t_max", c.t_max);

  r.read("collab_enabled", c.collab_enabled);
  r.read("collab_dim", c.collab.dim);
  r.read("collab_iterations", c.collab.iterations);
  r.read("collab_shift", c.collab.shift);
  r.read("collab_reg", c.collab.reg);

  r.read("stage1_group_size", c.stage1.group_size);
  r.read("stage1_learning_rate", c.stage1.learning_rate);
  r.read("stage1_batch_size", c.stage1.batch_size);
  r.read("stage1_epochs", c.stage1.epochs);

  r.read("stage2_group_size", c.stage2.group_size);
  r.read("stage2_learning_rate", c.stage2.learning_rate);
  r.read("stage2_batch_size", c.stage2.batch_size);
  r.read("stage2_epochs", c.stage2.epochs);

  r.read("eval_ks", c.eval_ks);
  r.read("threads", c.threads);
  r.read("verify_groups", c.verify_groups);
  r.read("verify_seeds", c.verify_seeds);
  r.read("verify_fd_cases", c.verify_fd_cases);
  r.finish();

  require_positive("n_candidates", c.request.n_candidates);
  require_positive("k", c.k);
  require_positive("t_max", c.t_max);
  require_positive("max_history", c.request.max_history);
  require_positive("threads", c.threads);
  require_positive("stage1_group_size", c.stage1.group_size);
  require_positive("stage1_batch_size", c.stage1.batch_size);
  require_positive("stage1_learning_rate", c.stage1.learning_rate);
  require_positive("stage2_group_size", c.stage2.group_size);
  require_positive("stage2_batch_size", c.stage2.batch_size);
  require_positive("stage2_learning_rate", c.stage2.learning_rate);
  require_positive("collab_dim", c.collab.dim);
  if (c.k > c.request.n_candidates) {
    throw ConfigError("config field 'k' must not exceed 'n_candidates'");
  }
  if (c.eval_ks.empty()) {
    throw ConfigError("config field 'eval_ks' must not be empty");
  }
  for (int k : c.eval_ks) require_positive("eval_ks", k);
  const double ratio_sum = c.ratios.train + c.ratios.val + c.ratios.test;
  if (std::fabs(ratio_sum - 1.0) > 1e-9) {
    throw ConfigError("split ratios must sum to 1");
  }

  c.stage1.threads = c.threads;
  c.stage2.threads = c.threads;
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  const std::string body = read_file(path);
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    throw ParseError("config " + path.string() + ": " + e.what());
  }
  RunConfig c = run_config_from_json(j);

  if (const char* v = std::getenv("AGENTRANK_OUTPUT_DIR")) c.output_dir = v;
  if (const char* v = std::getenv("AGENTRANK_CATALOG_PATH")) c.catalog_path = v;
  if (const char* v = std::getenv("AGENTRANK_INTERACTIONS_PATH")) {
    c.interactions_path = v;
  }
  return c;
}

json run_config_to_json(const RunConfig& c) {
  return json{
      {"seed", c.seed},
      {"output_dir", c.output_dir.generic_string()},
      {"catalog_path", c.catalog_path.generic_string()},
      {"interactions_path", c.interactions_path.generic_string()},
      {"synthetic_num_items", c.synthetic.num_items},
      {"synthetic_num_users", c.synthetic.num_users},
      {"synthetic_num_categories", c.synthetic.num_categories},
      {"synthetic_sessions_per_user", c.synthetic.sessions_per_user},
      {"synthetic_session_len_min", c.synthetic.session_len_min},
      {"synthetic_session_len_max", c.synthetic.session_len_max},
      {"synthetic_category_affinity", c.synthetic.category_affinity},
      {"synthetic_cooc_strength", c.synthetic.cooc_strength},
      {"synthetic_cooc_degree", c.synthetic.cooc_degree},
      {"synthetic_rating_prob", c.synthetic.rating_prob},
      {"split_train", c.ratios.train},
      {"split_val", c.ratios.val},
      {"split_test", c.ratios.test},
      {"n_candidates", c.request.n_candidates},
      {"max_history", c.request.max_history},
      {"min_history", c.request.min_history},
      {"k", c.k},
      {"t_max", c.t_max},
      {"collab_enabled", c.collab_enabled},
      {"collab_dim", c.collab.dim},
      {"collab_iterations", c.collab.iterations},
      {"collab_shift", c.collab.shift},
      {"collab_reg", c.collab.reg},
      {"stage1_group_size", c.stage1.group_size},
      {"stage1_learning_rate", c.stage1.learning_rate},
      {"stage1_batch_size", c.stage1.batch_size},
      {"stage1_epochs", c.stage1.epochs},
      {"stage2_group_size", c.stage2.group_size},
      {"stage2_learning_rate", c.stage2.learning_rate},
      {"stage2_batch_size", c.stage2.batch_size},
      {"stage2_epochs", c.stage2.epochs},
      {"eval_ks", c.eval_ks},
      {"threads", c.threads},
      {"verify_groups", c.verify_groups},
      {"verify_seeds", c.verify_seeds},
      {"verify_fd_cases", c.verify_fd_cases},
  };
}

std::string run_config_hash(const RunConfig& config) {
  return hex64(json_fingerprint(run_config_to_json(config)));
}

}  // namespace agentrank
