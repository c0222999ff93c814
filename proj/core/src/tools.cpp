#include "agentrank/tools.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "agentrank/errors.hpp"

namespace agentrank {

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return std::string(buf);
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

const std::string& primary_category(const Item& item) {
  return item.categories.front();
}

Observation fail(std::string note) {
  Observation obs;
  obs.ok = false;
  obs.error_note = std::move(note);
  return obs;
}

Observation succeed(const std::string& tool, json structured) {
  Observation obs;
  obs.ok = true;
  obs.structured = std::move(structured);
  obs.text = render_tool_text(tool, obs.structured);
  return obs;
}

/// Exact title match first, then case-insensitive substring, both in catalog
/// order.  Returns matching indices.
std::vector<std::size_t> resolve_title(const Catalog& catalog,
                                       const std::string& query) {
  std::vector<std::size_t> exact;
  for (std::size_t i = 0; i < catalog.items().size(); ++i) {
    if (catalog.items()[i].title == query) exact.push_back(i);
  }
  if (!exact.empty()) return exact;
  std::vector<std::size_t> partial;
  std::string q = lower(query);
  for (std::size_t i = 0; i < catalog.items().size(); ++i) {
    if (lower(catalog.items()[i].title).find(q) != std::string::npos) {
      partial.push_back(i);
    }
  }
  return partial;
}

json item_summary(const Item& item) {
  json j{{"item_id", item.item_id},
         {"title", item.title},
         {"categories", item.categories}};
  if (item.price) j["price"] = *item.price;
  if (item.avg_rating) j["average_rating"] = *item.avg_rating;
  if (item.review_count) j["review_count"] = *item.review_count;
  return j;
}

/// Per-candidate preference scores that unlock the collaborative evidence
/// channel downstream.
json candidate_scores(const ToolContext& ctx) {
  json scores = json::array();
  for (const std::string& id : ctx.request->candidates) {
    scores.push_back(ctx.collab->score(ctx.request->user_id, id));
  }
  return scores;
}

// ---- individual tools ------------------------------------------------------

Observation tool_get_user_profile(const ToolContext& ctx) {
  json profile;
  if (ctx.profiles) {
    if (const json* cached = ctx.profiles->get(ctx.request->user_id)) {
      profile = *cached;
    }
  }
  if (profile.is_null() || profile.empty()) {
    profile = compute_profile(*ctx.catalog, ctx.user_prior, ctx.options);
  }
  return succeed("get_user_profile", std::move(profile));
}

Observation tool_item_info_search(const ToolContext& ctx, const json& args) {
  if (!args.contains("item_name") || !args["item_name"].is_string()) {
    return fail("missing required argument: item_name");
  }
  std::string query = args["item_name"].get<std::string>();
  std::vector<std::size_t> matches = resolve_title(*ctx.catalog, query);
  if (matches.empty()) return fail("item not found: " + query);
  json structured{{"query", query},
                  {"match_count", matches.size()},
                  {"item", item_summary(ctx.catalog->items()[matches[0]])}};
  return succeed("item_info_search", std::move(structured));
}

Observation tool_candidates_analyze(const ToolContext& ctx) {
  std::map<std::string, json> groups;  // category path -> item list
  for (std::size_t i = 0; i < ctx.request->candidates.size(); ++i) {
    const Item& item = ctx.catalog->lookup(ctx.request->candidates[i]);
    std::string path = join(item.categories, " > ");
    auto& arr = groups[path];
    if (arr.is_null()) arr = json::array();
    arr.push_back(json{{"index", i + 1}, {"title", item.title}});
  }
  json out_groups = json::array();
  for (auto& [path, items] : groups) {
    out_groups.push_back(json{{"path", path}, {"items", std::move(items)}});
  }
  return succeed("candidates_analyze", json{{"groups", std::move(out_groups)}});
}

Observation tool_get_session_behavior(const ToolContext& ctx) {
  // Split the prior events into sessions on timestamp gaps.
  std::vector<std::pair<std::size_t, std::size_t>> sessions;  // [begin, end)
  for (std::size_t i = 0; i < ctx.user_prior.size(); ++i) {
    if (i == 0 || ctx.user_prior[i].timestamp - ctx.user_prior[i - 1].timestamp >
                      ctx.options.session_gap) {
      sessions.emplace_back(i, i + 1);
    } else {
      sessions.back().second = i + 1;
    }
  }
  std::size_t take = std::min<std::size_t>(sessions.size(),
                                           static_cast<std::size_t>(
                                               ctx.options.max_sessions));
  json out = json::array();
  for (std::size_t s = sessions.size() - take; s < sessions.size(); ++s) {
    auto [begin, end] = sessions[s];
    std::map<std::string, int> counts;
    for (std::size_t i = begin; i < end; ++i) {
      counts[primary_category(ctx.catalog->lookup(ctx.user_prior[i].item_id))]++;
    }
    std::vector<std::pair<std::string, int>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    json cats = json::array();
    for (std::size_t i = 0; i < std::min<std::size_t>(2, ranked.size()); ++i) {
      cats.push_back(ranked[i].first);
    }
    double age_hours =
        static_cast<double>(ctx.request->target_timestamp -
                            ctx.user_prior[end - 1].timestamp) /
        3600.0;
    out.push_back(json{{"age_hours", age_hours},
                       {"categories", std::move(cats)},
                       {"size", end - begin}});
  }
  return succeed("get_session_behavior",
                 json{{"session_count_total", sessions.size()},
                      {"sessions", std::move(out)}});
}

Observation tool_get_rating_behavior(const ToolContext& ctx) {
  json five = json::array(), neutral = json::array(), low = json::array();
  int five_total = 0, neutral_total = 0, low_total = 0, rated = 0;
  std::set<std::string> seen;
  const int cap = ctx.options.rating_bucket_max;
  // Most recent first; each item listed once with its latest rating.
  for (std::size_t i = ctx.user_prior.size(); i-- > 0;) {
    const Interaction& ev = ctx.user_prior[i];
    if (!ev.rating) continue;
    ++rated;
    if (!seen.insert(ev.item_id).second) continue;
    const Item& item = ctx.catalog->lookup(ev.item_id);
    json entry{{"title", item.title}, {"categories", item.categories}};
    double r = *ev.rating;
    if (r == 5.0) {
      ++five_total;
      if (five.size() < static_cast<std::size_t>(cap)) five.push_back(entry);
    } else if (r >= 3.0) {
      ++neutral_total;
      if (neutral.size() < static_cast<std::size_t>(cap)) neutral.push_back(entry);
    } else {
      ++low_total;
      if (low.size() < static_cast<std::size_t>(cap)) low.push_back(entry);
    }
  }
  return succeed("get_rating_behavior",
                 json{{"rated_count", rated},
                      {"five_star", std::move(five)},
                      {"five_star_total", five_total},
                      {"neutral", std::move(neutral)},
                      {"neutral_total", neutral_total},
                      {"low", std::move(low)},
                      {"low_total", low_total}});
}

Observation tool_get_similar_items(const ToolContext& ctx, const json& args) {
  if (!ctx.collab) return fail("collaborative model unavailable");
  if (!args.contains("item_title") || !args["item_title"].is_string()) {
    return fail("missing required argument: item_title");
  }
  std::string query = args["item_title"].get<std::string>();
  std::vector<std::size_t> matches = resolve_title(*ctx.catalog, query);
  if (matches.empty()) return fail("item not found: " + query);
  const Item& anchor = ctx.catalog->items()[matches[0]];

  std::vector<Neighbor> nbrs;
  try {
    nbrs = ctx.collab->similar_items(
        anchor.item_id, static_cast<std::size_t>(ctx.options.similar_items_k));
  } catch (const DataError& e) {
    return fail(e.what());
  }
  json out = json::array();
  for (const Neighbor& nb : nbrs) {
    const Item* item = ctx.catalog->find(nb.id);
    out.push_back(json{{"item_id", nb.id},
                       {"title", item ? item->title : nb.id},
                       {"categories", item ? json(item->categories)
                                           : json::array()},
                       {"score", nb.score}});
  }
  return succeed("get_similar_items",
                 json{{"anchor", json{{"item_id", anchor.item_id},
                                      {"title", anchor.title}}},
                      {"neighbors", std::move(out)},
                      {"candidate_scores", candidate_scores(ctx)}});
}

Observation tool_get_similar_users(const ToolContext& ctx) {
  if (!ctx.collab) return fail("collaborative model unavailable");
  std::vector<Neighbor> nbrs;
  try {
    nbrs = ctx.collab->similar_users(
        ctx.request->user_id,
        static_cast<std::size_t>(ctx.options.similar_users_k));
  } catch (const DataError&) {
    return fail("user has no collaborative profile: " + ctx.request->user_id);
  }
  json out = json::array();
  for (const Neighbor& nb : nbrs) {
    json titles = json::array();
    if (const UserStream* u = ctx.visible->find_user(nb.id)) {
      std::size_t take = std::min<std::size_t>(
          u->events.size(),
          static_cast<std::size_t>(ctx.options.neighbor_recent_titles));
      for (std::size_t i = 0; i < take; ++i) {
        const Interaction& ev = u->events[u->events.size() - 1 - i];
        const Item* item = ctx.catalog->find(ev.item_id);
        titles.push_back(item ? item->title : ev.item_id);
      }
    }
    out.push_back(json{{"user_id", nb.id},
                       {"score", nb.score},
                       {"recent_titles", std::move(titles)}});
  }
  return succeed("get_similar_users",
                 json{{"neighbors", std::move(out)},
                      {"candidate_scores", candidate_scores(ctx)}});
}

}  // namespace

// ---- profile template -------------------------------------------------------

json compute_profile(const Catalog& catalog,
                     std::span<const Interaction> user_prior,
                     const ToolOptions& options) {
  json profile{{"total_events", user_prior.size()}};
  if (user_prior.empty()) {
    profile["top_categories"] = json::array();
    profile["price_band"] = "unknown";
    profile["rated_count"] = 0;
    return profile;
  }

  std::map<std::string, int> counts;
  std::vector<double> prices;
  int rated = 0;
  double rating_sum = 0.0;
  for (const Interaction& ev : user_prior) {
    const Item& item = catalog.lookup(ev.item_id);
    counts[primary_category(item)]++;
    if (item.price) prices.push_back(*item.price);
    if (ev.rating) {
      ++rated;
      rating_sum += *ev.rating;
    }
  }

  std::vector<std::pair<std::string, int>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  json top = json::array();
  for (std::size_t i = 0;
       i < std::min<std::size_t>(ranked.size(),
                                 static_cast<std::size_t>(
                                     options.profile_top_categories));
       ++i) {
    top.push_back(json::array({ranked[i].first, ranked[i].second}));
  }
  profile["top_categories"] = std::move(top);

  if (!prices.empty()) {
    std::sort(prices.begin(), prices.end());
    double median = prices.size() % 2 == 1
                        ? prices[prices.size() / 2]
                        : 0.5 * (prices[prices.size() / 2 - 1] +
                                 prices[prices.size() / 2]);
    profile["median_price"] = median;
    // Band thresholds come from the catalog's own price distribution.
    std::vector<double> all;
    for (const Item& item : catalog.items()) {
      if (item.price) all.push_back(*item.price);
    }
    std::sort(all.begin(), all.end());
    if (all.empty()) {
      profile["price_band"] = "unknown";
    } else {
      double t1 = all[all.size() / 3];
      double t2 = all[(2 * all.size()) / 3];
      profile["price_band"] = median <= t1 ? "low" : median <= t2 ? "mid" : "high";
    }
  } else {
    profile["price_band"] = "unknown";
  }

  profile["rated_count"] = rated;
  if (rated > 0) profile["avg_rating_given"] = rating_sum / rated;
  return profile;
}

// ---- rendering ---------------------------------------------------------------

std::string render_tool_text(const std::string& name, const json& s) {
  std::ostringstream out;
  if (name == "get_user_profile") {
    auto total = s.value("total_events", std::size_t{0});
    if (total == 0) return "User profile: no recorded history.";
    out << "User profile: " << total << " past purchases.";
    if (!s["top_categories"].empty()) {
      out << " Frequent categories: ";
      bool first = true;
      for (const auto& entry : s["top_categories"]) {
        if (!first) out << ", ";
        first = false;
        out << entry[0].get<std::string>() << " (" << entry[1].get<int>() << ")";
      }
      out << ".";
    }
    if (s.contains("median_price")) {
      out << " Typical price band: " << s["price_band"].get<std::string>()
          << " (median price $" << fmt("%.2f", s["median_price"].get<double>())
          << ").";
    }
    int rated = s.value("rated_count", 0);
    if (rated > 0) {
      out << " Ratings given: " << rated << " (average "
          << fmt("%.2f", s["avg_rating_given"].get<double>()) << ").";
    }
    return out.str();
  }

  if (name == "item_info_search") {
    const json& item = s["item"];
    auto count = s.value("match_count", std::size_t{1});
    if (count == 1) {
      out << "Found 1 item named \"" << item["title"].get<std::string>() << "\"";
    } else {
      out << "Found " << count << " items matching \""
          << s["query"].get<std::string>() << "\"; closest is \""
          << item["title"].get<std::string>() << "\"";
    }
    std::vector<std::string> cats =
        item["categories"].get<std::vector<std::string>>();
    out << " (Categories: " << join(cats, ", ") << " / Price: ";
    if (item.contains("price")) {
      out << "$" << fmt("%.2f", item["price"].get<double>());
    } else {
      out << "n/a";
    }
    out << "). Overall Rating: ";
    if (item.contains("average_rating")) {
      out << fmt("%.1f", item["average_rating"].get<double>()) << " / 5.0";
    } else {
      out << "n/a";
    }
    out << ". Popularity: ";
    if (item.contains("review_count")) {
      out << item["review_count"].get<std::int64_t>() << " reviews.";
    } else {
      out << "n/a.";
    }
    return out.str();
  }

  if (name == "candidates_analyze") {
    out << "Candidate Analysis by Category:";
    for (const auto& group : s["groups"]) {
      out << "\n- " << group["path"].get<std::string>() << ":";
      for (const auto& item : group["items"]) {
        out << "\n  -- Item " << item["index"].get<int>() << ": "
            << item["title"].get<std::string>();
      }
    }
    return out.str();
  }

  if (name == "get_session_behavior") {
    const json& sessions = s["sessions"];
    if (sessions.empty()) return "No recorded sessions.";
    out << "Below are the user's most recent " << sessions.size()
        << " session(s), listed from oldest to newest:";
    for (const auto& sess : sessions) {
      std::vector<std::string> cats =
          sess["categories"].get<std::vector<std::string>>();
      out << "\n- " << fmt("%.1f", sess["age_hours"].get<double>())
          << "h ago: interested in " << join(cats, ", ") << " ("
          << sess["size"].get<int>() << " items).";
    }
    return out.str();
  }

  if (name == "get_rating_behavior") {
    if (s.value("rated_count", 0) == 0) return "The user has no rated history.";
    auto bucket = [&](const char* label, const json& entries, int total) {
      out << "\n" << label << ": ";
      if (entries.empty()) {
        out << "none.";
        return;
      }
      bool first = true;
      for (const auto& e : entries) {
        if (!first) out << "; ";
        first = false;
        out << e["title"].get<std::string>();
      }
      int extra = total - static_cast<int>(entries.size());
      if (extra > 0) out << "; and " << extra << " more";
      out << ".";
    };
    out << "User's historical rating records are as follows:";
    bucket("Five-star items (=5)", s["five_star"], s["five_star_total"].get<int>());
    bucket("Neutral items (>=3)", s["neutral"], s["neutral_total"].get<int>());
    bucket("Low-rated items (<3)", s["low"], s["low_total"].get<int>());
    return out.str();
  }

  if (name == "get_similar_items") {
    out << "Users who enjoy \"" << s["anchor"]["title"].get<std::string>()
        << "\" are more likely to purchase:";
    int rank = 0;
    for (const auto& nb : s["neighbors"]) {
      std::vector<std::string> cats =
          nb["categories"].get<std::vector<std::string>>();
      out << "\n" << ++rank << ". " << nb["title"].get<std::string>()
          << " (Categories: " << join(cats, ", ") << "; similarity "
          << fmt("%.2f", nb["score"].get<double>()) << ")";
    }
    if (rank == 0) out << "\n(no co-purchase neighbours found)";
    return out.str();
  }

  if (name == "get_similar_users") {
    out << "The following users have similar preferences to the current user:";
    int rank = 0;
    for (const auto& nb : s["neighbors"]) {
      out << "\n" << ++rank << ". " << nb["user_id"].get<std::string>()
          << " (similarity " << fmt("%.2f", nb["score"].get<double>())
          << "); recent purchases: ";
      std::vector<std::string> titles =
          nb["recent_titles"].get<std::vector<std::string>>();
      out << (titles.empty() ? std::string("none") : join(titles, "; ")) << ".";
    }
    if (rank == 0) out << "\n(no comparable users found)";
    return out.str();
  }

  throw ContractError("render_tool_text: unknown tool: " + name);
}

// ---- context / registry -------------------------------------------------------

ToolContext make_tool_context(const RecommendationRequest& request,
                              const Catalog& catalog,
                              const InteractionStream& full,
                              const InteractionStream& visible,
                              const CollabModel* collab,
                              const ProfileStore* profiles,
                              const ToolOptions& options) {
  const UserStream& u = full.user(request.user_id);
  if (request.target_pos < 0 ||
      request.target_pos > static_cast<int>(u.events.size())) {
    throw ContractError("make_tool_context: target_pos outside user stream");
  }
  ToolContext ctx;
  ctx.request = &request;
  ctx.catalog = &catalog;
  ctx.visible = &visible;
  ctx.user_prior = std::span<const Interaction>(
      u.events.data(), static_cast<std::size_t>(request.target_pos));
  ctx.collab = collab;
  ctx.profiles = profiles;
  ctx.options = options;
  return ctx;
}

const json* ProfileStore::get(const std::string& user_id) const {
  auto it = profiles_.find(user_id);
  return it == profiles_.end() ? nullptr : &it->second;
}

void ProfileStore::update(const std::string& user_id, json profile) {
  profiles_[user_id] = std::move(profile);
}

ToolRegistry::ToolRegistry(RegistryOptions options) : options_(std::move(options)) {
  names_ = {"get_user_profile", "item_info_search", "candidates_analyze",
            "get_session_behavior", "get_rating_behavior"};
  if (options_.collab_enabled) {
    names_.push_back("get_similar_items");
    names_.push_back("get_similar_users");
  }
  if (!options_.allowlist.empty()) {
    std::vector<std::string> kept;
    for (const std::string& name : names_) {
      if (std::find(options_.allowlist.begin(), options_.allowlist.end(),
                    name) != options_.allowlist.end()) {
        kept.push_back(name);
      }
    }
    names_ = std::move(kept);
  }
}

bool ToolRegistry::has(const std::string& name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

std::vector<ToolSchema> ToolRegistry::list_schemas() const {
  json no_params{{"type", "object"},
                 {"properties", json::object()},
                 {"required", json::array()}};
  auto titled = [](const char* field, const char* desc) {
    return json{{"type", "object"},
                {"properties", json{{field, json{{"type", "string"},
                                                 {"description", desc}}}}},
                {"required", json::array({field})}};
  };
  std::vector<ToolSchema> schemas;
  for (const std::string& name : names_) {
    ToolSchema schema;
    schema.name = name;
    if (name == "get_user_profile") {
      schema.description =
          "Summarize the user's long-term preferences: frequent categories, "
          "typical price band, rating habits.";
      schema.parameters = no_params;
    } else if (name == "item_info_search") {
      schema.description =
          "Look up one item's details (categories, price, rating, popularity) "
          "by exact or partial title.";
      schema.parameters = titled("item_name", "title or title fragment");
    } else if (name == "candidates_analyze") {
      schema.description =
          "Group the current candidate list by category path.";
      schema.parameters = no_params;
    } else if (name == "get_session_behavior") {
      schema.description =
          "Summarize the user's most recent sessions and their dominant "
          "interests.";
      schema.parameters = no_params;
    } else if (name == "get_rating_behavior") {
      schema.description =
          "Bucket the user's rated history into five-star, neutral and "
          "low-rated items.";
      schema.parameters = no_params;
    } else if (name == "get_similar_items") {
      schema.description =
          "Collaborative item-to-item lookup: items co-purchased with a named "
          "item, plus preference scores for the current candidates.";
      schema.parameters = titled("item_title", "title or title fragment");
    } else if (name == "get_similar_users") {
      schema.description =
          "Collaborative user-to-user lookup: comparable users and their "
          "recent purchases, plus preference scores for the current "
          "candidates.";
      schema.parameters = no_params;
    }
    schemas.push_back(std::move(schema));
  }
  std::sort(schemas.begin(), schemas.end(),
            [](const ToolSchema& a, const ToolSchema& b) {
              return a.name < b.name;
            });
  return schemas;
}

Observation ToolRegistry::invoke(const ToolCall& call,
                                 const ToolContext& ctx) const {
  if (!ctx.request || !ctx.catalog || !ctx.visible) {
    throw ContractError("ToolRegistry::invoke: incomplete context");
  }
  if (!has(call.name)) return fail("unknown tool: " + call.name);

  if (call.name == "get_user_profile") return tool_get_user_profile(ctx);
  if (call.name == "item_info_search")
    return tool_item_info_search(ctx, call.arguments);
  if (call.name == "candidates_analyze") return tool_candidates_analyze(ctx);
  if (call.name == "get_session_behavior")
    return tool_get_session_behavior(ctx);
  if (call.name == "get_rating_behavior") return tool_get_rating_behavior(ctx);
  if (call.name == "get_similar_items")
    return tool_get_similar_items(ctx, call.arguments);
  if (call.name == "get_similar_users") return tool_get_similar_users(ctx);
  return fail("unknown tool: " + call.name);
}

// ---- serialization -------------------------------------------------------------

json ToolSchema::to_json() const {
  return json{{"name", name},
              {"description", description},
              {"parameters", parameters}};
}

ToolSchema ToolSchema::from_json(const json& j) {
  ToolSchema s;
  s.name = j.at("name").get<std::string>();
  s.description = j.at("description").get<std::string>();
  s.parameters = j.at("parameters");
  return s;
}

json ToolCall::to_json() const {
  return json{{"name", name}, {"arguments", arguments}};
}

ToolCall ToolCall::from_json(const json& j) {
  ToolCall c;
  c.name = j.at("name").get<std::string>();
  c.arguments = j.value("arguments", json::object());
  return c;
}

json Observation::to_json() const {
  return json{{"ok", ok},
              {"text", text},
              {"structured", structured},
              {"error_note", error_note}};
}

Observation Observation::from_json(const json& j) {
  Observation o;
  o.ok = j.at("ok").get<bool>();
  o.text = j.value("text", "");
  o.structured = j.value("structured", json::object());
  o.error_note = j.value("error_note", "");
  return o;
}

}  // namespace agentrank
