#include "agentrank/policy.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <map>
#include <set>

#include "agentrank/errors.hpp"
#include "agentrank/json_io.hpp"
#include "agentrank/numerics.hpp"

namespace agentrank {

namespace {

const std::string& primary_cat(const Item& item) {
  return item.categories.front();
}

int tool_index_of(const std::vector<std::string>& names,
                  const std::string& name) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<int>(i);
  }
  return -1;
}

void check_same_shape(const ParamVector& a, const ParamVector& b) {
  if (a.action.size() != b.action.size() || a.score.size() != b.score.size() ||
      a.pair.size() != b.pair.size()) {
    throw ContractError("parameter vectors have mismatched shapes");
  }
}

/// Shared state features multiplying every action block.
void state_features(const PolicyContext& ctx, const EvidenceState& ev,
                    int n_tool_prior, double* g) {
  const int n_tools = static_cast<int>(ctx.registry->size());
  g[0] = 1.0;
  g[1] = n_tools > 0 ? static_cast<double>(ev.invoked_count()) / n_tools : 0.0;
  g[2] = ev.has_collab ? 1.0 : 0.0;
  g[3] = ctx.t_max > 0 ? static_cast<double>(n_tool_prior) / ctx.t_max : 0.0;
}

double action_block_score(const PolicyParams& params, int action,
                          const double* g) {
  double s = 0.0;
  for (int f = 0; f < kActionFeatureCount; ++f) {
    s += params.theta.action[static_cast<std::size_t>(action) *
                                 kActionFeatureCount +
                             f] *
         g[f];
  }
  return s;
}

int argmax_lowest_index(std::span<const double> xs) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(xs.size()); ++i) {
    if (xs[i] > xs[best]) best = i;
  }
  return best;
}

std::set<std::string> gather_categories(const json& entries) {
  std::set<std::string> out;
  if (!entries.is_array()) return out;
  for (const auto& entry : entries) {
    if (!entry.is_object() || !entry.contains("categories")) continue;
    const json& cats = entry["categories"];
    if (!cats.is_array()) continue;
    for (const auto& c : cats) {
      if (c.is_string()) out.insert(c.get<std::string>());
    }
  }
  return out;
}

}  // namespace

// ---- ParamVector -----------------------------------------------------------

void ParamVector::add_scaled(const ParamVector& other, double alpha) {
  check_same_shape(*this, other);
  axpy(alpha, other.action, action);
  axpy(alpha, other.score, score);
  axpy(alpha, other.pair, pair);
}

void ParamVector::scale(double alpha) {
  for (double& v : action) v *= alpha;
  for (double& v : score) v *= alpha;
  for (double& v : pair) v *= alpha;
}

double ParamVector::dot(const ParamVector& other) const {
  check_same_shape(*this, other);
  return agentrank::dot(action, other.action) +
         agentrank::dot(score, other.score) +
         agentrank::dot(pair, other.pair);
}

double ParamVector::norm() const { return std::sqrt(dot(*this)); }

std::vector<double> ParamVector::flatten() const {
  std::vector<double> out;
  out.reserve(size());
  out.insert(out.end(), action.begin(), action.end());
  out.insert(out.end(), score.begin(), score.end());
  out.insert(out.end(), pair.begin(), pair.end());
  return out;
}

// ---- PolicyParams ----------------------------------------------------------

PolicyParams PolicyParams::zero(const ToolRegistry& registry) {
  PolicyParams p;
  p.tool_names = registry.names();
  p.theta.action.assign((p.tool_names.size() + 1) * kActionFeatureCount, 0.0);
  p.theta.score.assign(kScoreFeatureCount, 0.0);
  p.theta.pair.assign(kScoreFeatureCount, 0.0);
  return p;
}

PolicyParams random_params(const ToolRegistry& registry, double scale,
                           Rng& rng) {
  PolicyParams p = PolicyParams::zero(registry);
  for (double& v : p.theta.action) v = rng.uniform(-scale, scale);
  for (double& v : p.theta.score) v = rng.uniform(-scale, scale);
  for (double& v : p.theta.pair) v = rng.uniform(-scale, scale);
  return p;
}

ParamVector mean_param_vectors(const ParamVector& shape,
                               const std::vector<std::vector<double>>& flats) {
  ParamVector out = shape;
  out.scale(0.0);
  if (flats.empty()) return out;
  const std::size_t na = out.action.size();
  const std::size_t ns = out.score.size();
  const std::size_t dim = out.size();
  std::vector<double> column(flats.size());
  const double inv = 1.0 / static_cast<double>(flats.size());
  for (std::size_t c = 0; c < dim; ++c) {
    for (std::size_t g = 0; g < flats.size(); ++g) {
      if (flats[g].size() != dim) {
        throw ContractError("mean_param_vectors: mismatched contribution size");
      }
      column[g] = flats[g][c];
    }
    const double v = stable_sum(column) * inv;
    if (c < na) {
      out.action[c] = v;
    } else if (c < na + ns) {
      out.score[c - na] = v;
    } else {
      out.pair[c - na - ns] = v;
    }
  }
  return out;
}

void save_policy(const PolicyParams& params,
                 const std::filesystem::path& path) {
  json j{{"format", "agentrank-policy"},
         {"version", PolicyParams::kCheckpointVersion},
         {"feature_version", PolicyParams::kFeatureVersion},
         {"tool_names", params.tool_names},
         {"theta_action", params.theta.action},
         {"theta_score", params.theta.score},
         {"theta_pair", params.theta.pair}};
  write_file(path, j.dump(2) + "\n");
}

PolicyParams load_policy(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw FormatError("policy checkpoint " + path.string() +
                      ": invalid JSON: " + e.what());
  }
  if (!j.is_object() || j.value("format", "") != "agentrank-policy") {
    throw FormatError("policy checkpoint " + path.string() +
                      ": not an agentrank-policy file");
  }
  if (j.value("version", -1) != PolicyParams::kCheckpointVersion) {
    throw FormatError("policy checkpoint " + path.string() +
                      ": unsupported checkpoint version");
  }
  if (j.value("feature_version", -1) != PolicyParams::kFeatureVersion) {
    throw FormatError("policy checkpoint " + path.string() +
                      ": feature extractor version mismatch");
  }
  PolicyParams p;
  try {
    p.tool_names = j.at("tool_names").get<std::vector<std::string>>();
    p.theta.action = j.at("theta_action").get<std::vector<double>>();
    p.theta.score = j.at("theta_score").get<std::vector<double>>();
    p.theta.pair = j.at("theta_pair").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw FormatError("policy checkpoint " + path.string() +
                      ": missing or mistyped field: " + e.what());
  }
  if (p.theta.action.size() !=
          (p.tool_names.size() + 1) * kActionFeatureCount ||
      p.theta.score.size() != kScoreFeatureCount ||
      p.theta.pair.size() != kScoreFeatureCount) {
    throw FormatError("policy checkpoint " + path.string() +
                      ": parameter sizes inconsistent with tool list");
  }
  return p;
}

// ---- features --------------------------------------------------------------

RequestFeatures analyze_request(const Catalog& catalog,
                                const RecommendationRequest& request) {
  RequestFeatures f;
  f.n = static_cast<int>(request.candidates.size());

  std::map<std::string, int> hist_counts;
  std::vector<double> hist_prices;
  for (const std::string& id : request.history) {
    const Item& item = catalog.lookup(id);
    hist_counts[primary_cat(item)]++;
    f.history_primary_cats.insert(primary_cat(item));
    if (item.price && *item.price > 0.0) hist_prices.push_back(*item.price);
  }
  double median_price = 0.0;
  if (!hist_prices.empty()) {
    std::sort(hist_prices.begin(), hist_prices.end());
    median_price = hist_prices.size() % 2 == 1
                       ? hist_prices[hist_prices.size() / 2]
                       : 0.5 * (hist_prices[hist_prices.size() / 2 - 1] +
                                hist_prices[hist_prices.size() / 2]);
  }
  const double hist_n =
      static_cast<double>(std::max<std::size_t>(1, request.history.size()));

  f.cat_overlap.reserve(f.n);
  f.price_match.reserve(f.n);
  f.rating_prior.reserve(f.n);
  f.popularity.reserve(f.n);
  f.primary_cat.reserve(f.n);
  for (const std::string& id : request.candidates) {
    const Item& item = catalog.lookup(id);
    const std::string& cat = primary_cat(item);
    f.primary_cat.push_back(cat);
    auto it = hist_counts.find(cat);
    f.cat_overlap.push_back(it == hist_counts.end() ? 0.0
                                                    : it->second / hist_n);
    if (item.price && *item.price > 0.0 && median_price > 0.0) {
      f.price_match.push_back(
          std::exp(-std::fabs(std::log(*item.price / median_price))));
    } else {
      f.price_match.push_back(0.0);
    }
    f.rating_prior.push_back(
        item.avg_rating
            ? std::clamp((*item.avg_rating - 3.0) / 2.0, -1.0, 1.0)
            : 0.0);
    f.popularity.push_back(
        item.review_count
            ? std::min(1.0, std::log1p(static_cast<double>(*item.review_count)) /
                                std::log(2001.0))
            : 0.0);
  }
  return f;
}

int EvidenceState::invoked_count() const { return std::popcount(invoked_mask); }

PolicyContext make_policy_context(const RecommendationRequest& request,
                                  const Catalog& catalog,
                                  const ToolRegistry& registry,
                                  const ToolContext& tool_ctx, int k,
                                  int t_max) {
  if (registry.size() >= 32) {
    throw ContractError("make_policy_context: too many tools for the mask");
  }
  PolicyContext ctx;
  ctx.request = &request;
  ctx.catalog = &catalog;
  ctx.registry = &registry;
  ctx.tool_ctx = &tool_ctx;
  ctx.features = analyze_request(catalog, request);
  ctx.k = k;
  ctx.t_max = t_max;
  if (ctx.k < 1 || ctx.k > ctx.features.n) {
    throw ContractError("make_policy_context: k outside [1, n_candidates]");
  }
  return ctx;
}

void candidate_features(const PolicyContext& ctx, const EvidenceState& ev,
                        int i, double* out) {
  const RequestFeatures& f = ctx.features;
  out[0] = f.cat_overlap[i];
  out[1] = f.price_match[i];
  out[2] = f.rating_prior[i];
  out[3] = ev.has_item_info ? f.popularity[i] : 0.0;
  double c = ev.has_collab ? ev.collab_scores[i] : 0.0;
  out[4] = c / (1.0 + std::fabs(c));
  out[5] = ev.has_analysis ? static_cast<double>(ev.analyzed_match[i]) : 0.0;
  out[6] = ev.has_profile ? static_cast<double>(ev.profile_match[i]) : 0.0;
  out[7] = ev.has_session ? static_cast<double>(ev.session_match[i]) : 0.0;
  out[8] = ev.has_rating ? static_cast<double>(ev.rating_match[i]) : 0.0;
}

std::vector<double> candidate_scores(const PolicyParams& params,
                                     const PolicyContext& ctx,
                                     const EvidenceState& ev) {
  std::vector<double> scores(ctx.features.n, 0.0);
  double psi[kScoreFeatureCount];
  for (int i = 0; i < ctx.features.n; ++i) {
    candidate_features(ctx, ev, i, psi);
    scores[i] = agentrank::dot(std::span<const double>(psi, kScoreFeatureCount),
                               params.theta.score);
  }
  return scores;
}

void absorb_observation(EvidenceState& ev, const PolicyContext& ctx,
                        const ToolCall& call, const Observation& obs) {
  int idx = tool_index_of(ctx.registry->names(), call.name);
  if (idx < 0) return;  // not a registered tool; nothing to absorb
  ev.invoked_mask |= (1u << idx);
  if (!obs.ok) return;

  const int n = ctx.features.n;
  const json& s = obs.structured;
  if (call.name == "get_user_profile") {
    std::set<std::string> cats;
    if (s.contains("top_categories") && s["top_categories"].is_array()) {
      for (const auto& entry : s["top_categories"]) {
        if (entry.is_array() && !entry.empty() && entry[0].is_string()) {
          cats.insert(entry[0].get<std::string>());
        }
      }
    }
    ev.profile_match.assign(n, 0);
    for (int i = 0; i < n; ++i) {
      if (cats.count(ctx.features.primary_cat[i])) ev.profile_match[i] = 1;
    }
    ev.has_profile = true;
  } else if (call.name == "item_info_search") {
    // Unlocks the popularity channel; the looked-up item itself is context.
    ev.has_item_info = true;
  } else if (call.name == "candidates_analyze") {
    ev.analyzed_match.assign(n, 0);
    for (int i = 0; i < n; ++i) {
      if (ctx.features.history_primary_cats.count(ctx.features.primary_cat[i])) {
        ev.analyzed_match[i] = 1;
      }
    }
    ev.has_analysis = true;
  } else if (call.name == "get_session_behavior") {
    std::set<std::string> cats;
    if (s.contains("sessions")) cats = gather_categories(s["sessions"]);
    ev.session_match.assign(n, 0);
    for (int i = 0; i < n; ++i) {
      if (cats.count(ctx.features.primary_cat[i])) ev.session_match[i] = 1;
    }
    ev.has_session = true;
  } else if (call.name == "get_rating_behavior") {
    std::set<std::string> loved, avoided;
    if (s.contains("five_star")) loved = gather_categories(s["five_star"]);
    if (s.contains("low")) avoided = gather_categories(s["low"]);
    ev.rating_match.assign(n, 0);
    for (int i = 0; i < n; ++i) {
      const bool up = loved.count(ctx.features.primary_cat[i]) > 0;
      const bool down = avoided.count(ctx.features.primary_cat[i]) > 0;
      if (up && !down) ev.rating_match[i] = 1;
      if (down && !up) ev.rating_match[i] = -1;
    }
    ev.has_rating = true;
  } else if (call.name == "get_similar_items" ||
             call.name == "get_similar_users") {
    if (s.contains("candidate_scores") && s["candidate_scores"].is_array() &&
        static_cast<int>(s["candidate_scores"].size()) == n) {
      ev.collab_scores = s["candidate_scores"].get<std::vector<double>>();
      ev.has_collab = true;
    }
  }
}

EvidenceState full_evidence(const PolicyContext& ctx) {
  EvidenceState ev;
  for (const std::string& name : ctx.registry->names()) {
    ToolCall call;
    call.name = name;
    if (name == "item_info_search") {
      call.arguments["item_name"] =
          ctx.catalog->lookup(ctx.request->candidates.front()).title;
    } else if (name == "get_similar_items") {
      const std::string& anchor = ctx.request->history.empty()
                                      ? ctx.request->candidates.front()
                                      : ctx.request->history.back();
      call.arguments["item_title"] = ctx.catalog->lookup(anchor).title;
    }
    absorb_observation(ev, ctx, call,
                       ctx.registry->invoke(call, *ctx.tool_ctx));
  }
  return ev;
}

// ---- action head -------------------------------------------------------------

std::vector<int> available_actions(const PolicyContext& ctx,
                                   const EvidenceState& ev) {
  std::vector<int> out{0};  // rank-now is always on the table
  for (int t = 0; t < static_cast<int>(ctx.registry->size()); ++t) {
    if (!ev.tool_invoked(t)) out.push_back(t + 1);
  }
  return out;
}

double action_logprob_grad(const PolicyParams& params, const PolicyContext& ctx,
                           const EvidenceState& ev, int n_tool_prior,
                           int action, ParamVector* grad) {
  const std::vector<int> avail = available_actions(ctx, ev);
  const auto it = std::find(avail.begin(), avail.end(), action);
  if (it == avail.end()) {
    throw ContractError("action_logprob_grad: action " +
                        std::to_string(action) + " is not available");
  }
  const std::size_t chosen_pos = static_cast<std::size_t>(it - avail.begin());

  double g[kActionFeatureCount];
  state_features(ctx, ev, n_tool_prior, g);
  std::vector<double> scores(avail.size());
  for (std::size_t j = 0; j < avail.size(); ++j) {
    scores[j] = action_block_score(params, avail[j], g);
  }
  const double lse = logsumexp(scores);
  const double lp = scores[chosen_pos] - lse;
  if (grad) {
    std::vector<double> probs = scores;
    softmax_inplace(probs);
    for (std::size_t j = 0; j < avail.size(); ++j) {
      const double coeff = (j == chosen_pos ? 1.0 : 0.0) - probs[j];
      for (int f = 0; f < kActionFeatureCount; ++f) {
        grad->action[static_cast<std::size_t>(avail[j]) * kActionFeatureCount +
                     f] += coeff * g[f];
      }
    }
  }
  return lp;
}

ActionChoice decide_action(const PolicyParams& params, const PolicyContext& ctx,
                           const EvidenceState& ev, int n_tool_prior,
                           Rng& rng) {
  const std::vector<int> avail = available_actions(ctx, ev);
  double g[kActionFeatureCount];
  state_features(ctx, ev, n_tool_prior, g);
  std::vector<double> probs(avail.size());
  for (std::size_t j = 0; j < avail.size(); ++j) {
    probs[j] = action_block_score(params, avail[j], g);
  }
  softmax_inplace(probs);
  const double u = rng.uniform();
  double cum = 0.0;
  std::size_t pick = avail.size() - 1;
  for (std::size_t j = 0; j < avail.size(); ++j) {
    cum += probs[j];
    if (u < cum) {
      pick = j;
      break;
    }
  }
  ActionChoice choice;
  choice.action = avail[pick];
  choice.logprob = action_logprob_grad(params, ctx, ev, n_tool_prior,
                                       choice.action, nullptr);
  return choice;
}

ActionChoice greedy_action(const PolicyParams& params, const PolicyContext& ctx,
                           const EvidenceState& ev, int n_tool_prior) {
  const std::vector<int> avail = available_actions(ctx, ev);
  double g[kActionFeatureCount];
  state_features(ctx, ev, n_tool_prior, g);
  std::vector<double> scores(avail.size());
  for (std::size_t j = 0; j < avail.size(); ++j) {
    scores[j] = action_block_score(params, avail[j], g);
  }
  ActionChoice choice;
  choice.action = avail[argmax_lowest_index(scores)];
  choice.logprob = action_logprob_grad(params, ctx, ev, n_tool_prior,
                                       choice.action, nullptr);
  return choice;
}

// ---- ranking head --------------------------------------------------------------

double ranking_logprob_grad(const PolicyParams& params,
                            const PolicyContext& ctx, const EvidenceState& ev,
                            const std::vector<int>& ranking,
                            ParamVector* grad) {
  const int n = ctx.features.n;
  if (static_cast<int>(ranking.size()) != ctx.k) {
    throw ContractError("ranking_logprob_grad: ranking length mismatch");
  }
  std::vector<double> scores = candidate_scores(params, ctx, ev);
  std::vector<std::array<double, kScoreFeatureCount>> psi;
  if (grad) {
    psi.resize(n);
    for (int i = 0; i < n; ++i) candidate_features(ctx, ev, i, psi[i].data());
  }

  std::vector<int> remaining(n);
  for (int i = 0; i < n; ++i) remaining[i] = i;
  double lp = 0.0;
  std::vector<double> sub, probs;
  for (int r : ranking) {
    if (r < 1 || r > n) {
      throw ContractError("ranking_logprob_grad: index out of range");
    }
    const int c = r - 1;
    const auto it = std::find(remaining.begin(), remaining.end(), c);
    if (it == remaining.end()) {
      throw ContractError("ranking_logprob_grad: repeated index");
    }
    sub.resize(remaining.size());
    for (std::size_t j = 0; j < remaining.size(); ++j) {
      sub[j] = scores[remaining[j]];
    }
    const double lse = logsumexp(sub);
    lp += scores[c] - lse;
    if (grad) {
      probs = sub;
      softmax_inplace(probs);
      for (std::size_t j = 0; j < remaining.size(); ++j) {
        const double coeff =
            (remaining[j] == c ? 1.0 : 0.0) - probs[j];
        axpy(coeff,
             std::span<const double>(psi[remaining[j]].data(),
                                     kScoreFeatureCount),
             grad->score);
      }
    }
    remaining.erase(it);
  }
  return lp;
}

RankSample sample_ranking(const PolicyParams& params, const PolicyContext& ctx,
                          const EvidenceState& ev, Rng& rng) {
  const int n = ctx.features.n;
  std::vector<double> scores = candidate_scores(params, ctx, ev);
  std::vector<int> remaining(n);
  for (int i = 0; i < n; ++i) remaining[i] = i;

  RankSample out;
  out.ranking.reserve(ctx.k);
  std::vector<double> probs;
  for (int slot = 0; slot < ctx.k; ++slot) {
    probs.resize(remaining.size());
    for (std::size_t j = 0; j < remaining.size(); ++j) {
      probs[j] = scores[remaining[j]];
    }
    softmax_inplace(probs);
    const double u = rng.uniform();
    double cum = 0.0;
    std::size_t pick = remaining.size() - 1;
    for (std::size_t j = 0; j < remaining.size(); ++j) {
      cum += probs[j];
      if (u < cum) {
        pick = j;
        break;
      }
    }
    out.ranking.push_back(remaining[pick] + 1);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  out.logprob = ranking_logprob_grad(params, ctx, ev, out.ranking, nullptr);
  return out;
}

RankSample greedy_ranking(const PolicyParams& params, const PolicyContext& ctx,
                          const EvidenceState& ev) {
  const int n = ctx.features.n;
  std::vector<double> scores = candidate_scores(params, ctx, ev);
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return scores[a] > scores[b];  // ties keep ascending candidate index
  });

  RankSample out;
  out.ranking.reserve(ctx.k);
  for (int slot = 0; slot < ctx.k; ++slot) out.ranking.push_back(order[slot] + 1);
  out.logprob = ranking_logprob_grad(params, ctx, ev, out.ranking, nullptr);
  return out;
}

// ---- pair head ------------------------------------------------------------------

namespace {

double pair_logprob_impl(const PolicyParams& params, const PolicyContext& ctx,
                         const EvidenceState& ev, const PairTask& task,
                         int chosen, ParamVector* grad, double* p_first) {
  const int n = ctx.features.n;
  if (task.item_a < 1 || task.item_a > n || task.item_b < 1 ||
      task.item_b > n || task.item_a == task.item_b) {
    throw ContractError("pair task: invalid candidate pair");
  }
  if (chosen != task.item_a && chosen != task.item_b) {
    throw ContractError("pair task: chosen option is not in the pair");
  }
  double psi_a[kScoreFeatureCount], psi_b[kScoreFeatureCount];
  candidate_features(ctx, ev, task.item_a - 1, psi_a);
  candidate_features(ctx, ev, task.item_b - 1, psi_b);
  double w[kScoreFeatureCount];
  for (int f = 0; f < kScoreFeatureCount; ++f) {
    w[f] = params.theta.score[f] + params.theta.pair[f];
  }
  const std::span<const double> wspan(w, kScoreFeatureCount);
  const double sign = task.direction == PairDirection::kMore ? 1.0 : -1.0;
  const double e_a =
      sign * agentrank::dot(std::span<const double>(psi_a, kScoreFeatureCount),
                            wspan);
  const double e_b =
      sign * agentrank::dot(std::span<const double>(psi_b, kScoreFeatureCount),
                            wspan);
  const double scores[2] = {e_a, e_b};
  const double lse = logsumexp(std::span<const double>(scores, 2));
  const bool chose_a = chosen == task.item_a;
  const double lp = (chose_a ? e_a : e_b) - lse;
  const double prob_a = std::exp(e_a - lse);
  if (p_first) *p_first = prob_a;
  if (grad) {
    const double prob_b = std::exp(e_b - lse);
    const double ca = sign * ((chose_a ? 1.0 : 0.0) - prob_a);
    const double cb = sign * ((chose_a ? 0.0 : 1.0) - prob_b);
    for (int f = 0; f < kScoreFeatureCount; ++f) {
      const double dw = ca * psi_a[f] + cb * psi_b[f];
      grad->score[f] += dw;
      grad->pair[f] += dw;
    }
  }
  return lp;
}

}  // namespace

PairChoiceResult pair_choice(const PolicyParams& params,
                             const PolicyContext& ctx, const EvidenceState& ev,
                             const PairTask& task, Rng& rng) {
  double prob_a = 0.0;
  // Evaluate with a dummy "chosen" to obtain P(option A); then draw.
  pair_logprob_impl(params, ctx, ev, task, task.item_a, nullptr, &prob_a);
  PairChoiceResult out;
  out.chosen = rng.uniform() < prob_a ? task.item_a : task.item_b;
  out.logprob =
      pair_logprob_impl(params, ctx, ev, task, out.chosen, nullptr, nullptr);
  return out;
}

double pair_logprob_grad(const PolicyParams& params, const PolicyContext& ctx,
                         const EvidenceState& ev, const PairTask& task,
                         int chosen, ParamVector* grad) {
  return pair_logprob_impl(params, ctx, ev, task, chosen, grad, nullptr);
}

// ---- trajectory replay ------------------------------------------------------------

double trajectory_logprob_and_grad(const PolicyParams& params,
                                   const PolicyContext& ctx,
                                   const Trajectory& trajectory,
                                   ParamVector* grad) {
  EvidenceState ev;
  int n_tool = 0;
  double lp = 0.0;
  for (const Step& step : trajectory.steps) {
    switch (step.kind) {
      case Step::Kind::kThink:
        break;  // placeholder note: log-probability zero by construction
      case Step::Kind::kObs:
        break;  // masked: replay reconstructs observations from the calls
      case Step::Kind::kAct: {
        const int idx = tool_index_of(ctx.registry->names(), step.call.name);
        if (idx < 0) {
          throw ContractError("trajectory replay: unknown tool " +
                              step.call.name);
        }
        lp += action_logprob_grad(params, ctx, ev, n_tool, idx + 1, grad);
        ++n_tool;
        // Re-run the tool: observations are pure functions of (call, context),
        // so this reproduces exactly what the agent saw, and whatever payload
        // the stored Obs step carries can never leak into the likelihood.
        absorb_observation(ev, ctx, step.call,
                           ctx.registry->invoke(step.call, *ctx.tool_ctx));
        break;
      }
      case Step::Kind::kRank: {
        lp += action_logprob_grad(params, ctx, ev, n_tool, 0, grad);
        lp += ranking_logprob_grad(params, ctx, ev, step.ranking, grad);
        break;
      }
    }
  }
  return lp;
}

// ---- reference agent ---------------------------------------------------------------

ReferenceAgent::ReferenceAgent(const PolicyParams& params,
                               const PolicyContext& ctx, Mode mode)
    : params_(params), ctx_(ctx), mode_(mode) {
  if (params.tool_names != ctx.registry->names()) {
    throw ContractError(
        "ReferenceAgent: checkpoint tool list does not match the registry");
  }
}

ToolCall default_tool_call(const PolicyParams& params, const PolicyContext& ctx,
                           const EvidenceState& ev, int tool_index) {
  ToolCall call;
  call.name = ctx.registry->names().at(static_cast<std::size_t>(tool_index));
  if (call.name == "item_info_search") {
    // Look up the currently best-scored candidate.
    std::vector<double> scores = candidate_scores(params, ctx, ev);
    const int best = argmax_lowest_index(scores);
    call.arguments["item_name"] =
        ctx.catalog->lookup(ctx.request->candidates[best]).title;
  } else if (call.name == "get_similar_items") {
    // Anchor on the most recent history item.
    const std::string& anchor = ctx.request->history.empty()
                                    ? ctx.request->candidates.front()
                                    : ctx.request->history.back();
    call.arguments["item_title"] = ctx.catalog->lookup(anchor).title;
  }
  return call;
}

AgentMove ReferenceAgent::next_move(Rng& rng) {
  AgentMove move;
  if (!think_emitted_) {
    think_emitted_ = true;
    move.kind = AgentMove::Kind::kThink;
    move.think_note =
        json{{"plan", "gather evidence with tools, then rank the candidates"}};
    move.logprob = 0.0;
    return move;
  }
  const ActionChoice choice =
      mode_ == Mode::kGreedy
          ? greedy_action(params_, ctx_, evidence_, n_tool_)
          : decide_action(params_, ctx_, evidence_, n_tool_, rng);
  if (choice.action == 0) {
    const RankSample rank = mode_ == Mode::kGreedy
                                ? greedy_ranking(params_, ctx_, evidence_)
                                : sample_ranking(params_, ctx_, evidence_, rng);
    move.kind = AgentMove::Kind::kRank;
    move.ranking = rank.ranking;
    move.logprob = choice.logprob + rank.logprob;
  } else {
    move.kind = AgentMove::Kind::kTool;
    move.call = default_tool_call(params_, ctx_, evidence_, choice.action - 1);
    move.logprob = choice.logprob;
    ++n_tool_;
  }
  return move;
}

void ReferenceAgent::observe(const ToolCall& call, const Observation& obs) {
  absorb_observation(evidence_, ctx_, call, obs);
}

}  // namespace agentrank
