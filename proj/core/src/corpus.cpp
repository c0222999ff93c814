#include "agentrank/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>

#include "agentrank/errors.hpp"

namespace agentrank {

namespace {

std::string loc(const std::filesystem::path& path, std::size_t lineno) {
  return path.string() + ":" + std::to_string(lineno) + ": ";
}

double require_number(const json& j, const char* field,
                      const std::filesystem::path& path, std::size_t lineno) {
  if (!j.contains(field) || !j[field].is_number()) {
    throw ParseError(loc(path, lineno) + "missing or non-numeric field '" +
                     field + "'");
  }
  return j[field].get<double>();
}

std::string require_string(const json& j, const char* field,
                           const std::filesystem::path& path,
                           std::size_t lineno) {
  if (!j.contains(field) || !j[field].is_string()) {
    throw ParseError(loc(path, lineno) + "missing or non-string field '" +
                     field + "'");
  }
  return j[field].get<std::string>();
}

}  // namespace

// ---- Catalog --------------------------------------------------------------

Catalog::Catalog(std::vector<Item> items) : items_(std::move(items)) {
  index_.reserve(items_.size());
  for (std::size_t i = 0; i < items_.size(); ++i) {
    auto [it, inserted] = index_.emplace(items_[i].item_id, i);
    if (!inserted) {
      throw DataError("duplicate item_id in catalog: " + items_[i].item_id);
    }
  }
}

bool Catalog::contains(const std::string& item_id) const {
  return index_.count(item_id) != 0;
}

const Item* Catalog::find(const std::string& item_id) const {
  auto it = index_.find(item_id);
  return it == index_.end() ? nullptr : &items_[it->second];
}

const Item& Catalog::lookup(const std::string& item_id) const {
  const Item* item = find(item_id);
  if (!item) throw DataError("unknown item_id: " + item_id);
  return *item;
}

// ---- InteractionStream -----------------------------------------------------

InteractionStream::InteractionStream(std::vector<Interaction> events) {
  total_ = events.size();
  std::unordered_map<std::string, std::size_t> pos;
  for (auto& ev : events) {
    auto it = pos.find(ev.user_id);
    if (it == pos.end()) {
      pos.emplace(ev.user_id, users_.size());
      users_.push_back(UserStream{ev.user_id, {}});
      users_.back().events.push_back(std::move(ev));
    } else {
      users_[it->second].events.push_back(std::move(ev));
    }
  }
  std::sort(users_.begin(), users_.end(),
            [](const UserStream& a, const UserStream& b) {
              return a.user_id < b.user_id;
            });
  for (std::size_t i = 0; i < users_.size(); ++i) {
    // Stable: events with equal timestamps keep their file order.
    std::stable_sort(users_[i].events.begin(), users_[i].events.end(),
                     [](const Interaction& a, const Interaction& b) {
                       return a.timestamp < b.timestamp;
                     });
    index_[users_[i].user_id] = i;
  }
}

const UserStream* InteractionStream::find_user(
    const std::string& user_id) const {
  auto it = index_.find(user_id);
  return it == index_.end() ? nullptr : &users_[it->second];
}

const UserStream& InteractionStream::user(const std::string& user_id) const {
  const UserStream* u = find_user(user_id);
  if (!u) throw DataError("unknown user_id: " + user_id);
  return *u;
}

InteractionStream InteractionStream::truncated_before(
    std::int64_t cutoff) const {
  std::vector<Interaction> kept;
  for (const auto& u : users_) {
    for (const auto& ev : u.events) {
      if (ev.timestamp < cutoff) kept.push_back(ev);
    }
  }
  return InteractionStream(std::move(kept));
}

const char* split_tag_name(SplitTag tag) {
  switch (tag) {
    case SplitTag::kTrain: return "train";
    case SplitTag::kVal: return "val";
    case SplitTag::kTest: return "test";
  }
  return "unknown";
}

// ---- ingestion -------------------------------------------------------------

Catalog ingest_catalog(const std::filesystem::path& path) {
  std::vector<Item> items;
  for_each_jsonl(path, [&](std::size_t lineno, const json& j) {
    Item item;
    item.item_id = require_string(j, "item_id", path, lineno);
    item.title = require_string(j, "title", path, lineno);
    if (!j.contains("categories") || !j["categories"].is_array() ||
        j["categories"].empty()) {
      throw ParseError(loc(path, lineno) +
                       "field 'categories' must be a nonempty array");
    }
    for (const auto& c : j["categories"]) {
      if (!c.is_string()) {
        throw ParseError(loc(path, lineno) + "categories must be strings");
      }
      item.categories.push_back(c.get<std::string>());
    }
    if (j.contains("price") && !j["price"].is_null()) {
      double p = require_number(j, "price", path, lineno);
      if (p < 0.0) throw ParseError(loc(path, lineno) + "negative price");
      item.price = p;
    }
    if (j.contains("average_rating") && !j["average_rating"].is_null()) {
      double r = require_number(j, "average_rating", path, lineno);
      if (r < 0.0 || r > 5.0) {
        throw ParseError(loc(path, lineno) + "average_rating outside [0,5]");
      }
      item.avg_rating = r;
    }
    if (j.contains("review_count") && !j["review_count"].is_null()) {
      if (!j["review_count"].is_number_integer()) {
        throw ParseError(loc(path, lineno) + "review_count must be integer");
      }
      auto rc = j["review_count"].get<std::int64_t>();
      if (rc < 0) throw ParseError(loc(path, lineno) + "negative review_count");
      item.review_count = rc;
    }
    items.push_back(std::move(item));
  });
  return Catalog(std::move(items));
}

InteractionStream ingest_interactions(const std::filesystem::path& path,
                                      const Catalog& catalog) {
  std::vector<Interaction> events;
  for_each_jsonl(path, [&](std::size_t lineno, const json& j) {
    Interaction ev;
    ev.user_id = require_string(j, "user_id", path, lineno);
    ev.item_id = require_string(j, "item_id", path, lineno);
    if (!j.contains("timestamp") || !j["timestamp"].is_number_integer()) {
      throw ParseError(loc(path, lineno) +
                       "missing or non-integer field 'timestamp'");
    }
    ev.timestamp = j["timestamp"].get<std::int64_t>();
    if (j.contains("rating") && !j["rating"].is_null()) {
      double r = require_number(j, "rating", path, lineno);
      if (r < 0.0 || r > 5.0) {
        throw ParseError(loc(path, lineno) + "rating outside [0,5]");
      }
      ev.rating = r;
    }
    if (!catalog.contains(ev.item_id)) {
      throw DataError(loc(path, lineno) +
                      "interaction references unknown item_id: " + ev.item_id);
    }
    events.push_back(std::move(ev));
  });
  return InteractionStream(std::move(events));
}

// ---- request construction --------------------------------------------------

RecommendationRequest build_request(const Catalog& catalog,
                                    const InteractionStream& stream,
                                    const std::string& user_id, int target_pos,
                                    const RequestOptions& opt, Rng& rng) {
  const UserStream& u = stream.user(user_id);
  if (target_pos < 1 || target_pos >= static_cast<int>(u.events.size())) {
    throw ContractError(
        "build_request: target_pos must point past at least one prior event");
  }
  if (opt.n_candidates < 2) {
    throw ContractError("build_request: need at least 2 candidates");
  }

  RecommendationRequest req;
  req.user_id = user_id;
  req.target_pos = target_pos;
  req.target_timestamp = u.events[target_pos].timestamp;
  req.uid = Rng::derive(Rng::hash_str(user_id),
                        {static_cast<std::uint64_t>(target_pos)});

  int start = std::max(0, target_pos - opt.max_history);
  for (int i = start; i < target_pos; ++i) {
    req.history.push_back(u.events[i].item_id);
  }

  const std::string& target_id = u.events[target_pos].item_id;
  std::set<std::string> excluded(req.history.begin(), req.history.end());
  excluded.insert(target_id);

  // Eligible negatives in catalog order, then a uniform draw without
  // replacement; candidate order is randomized afterwards.
  std::vector<const std::string*> pool;
  pool.reserve(catalog.size());
  for (const Item& item : catalog.items()) {
    if (!excluded.count(item.item_id)) pool.push_back(&item.item_id);
  }
  std::size_t need = static_cast<std::size_t>(opt.n_candidates - 1);
  if (pool.size() < need) {
    throw DataError("build_request: catalog too small for " +
                    std::to_string(opt.n_candidates) +
                    " candidates after excluding history");
  }
  req.candidates.push_back(target_id);
  for (std::size_t k : rng.sample_without_replacement(pool.size(), need)) {
    req.candidates.push_back(*pool[k]);
  }
  rng.shuffle(req.candidates);

  auto it = std::find(req.candidates.begin(), req.candidates.end(), target_id);
  req.positive_index =
      static_cast<int>(std::distance(req.candidates.begin(), it)) + 1;
  return req;
}

DatasetSplit chronological_split(const Catalog& catalog,
                                 const InteractionStream& stream,
                                 const SplitRatios& ratios,
                                 const RequestOptions& opt,
                                 std::uint64_t seed) {
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be nonnegative and sum to 1");
  }

  struct Target {
    std::int64_t timestamp;
    const std::string* user_id;
    int pos;
  };
  std::vector<Target> targets;
  for (const UserStream& u : stream.users()) {
    for (int pos = opt.min_history;
         pos < static_cast<int>(u.events.size()); ++pos) {
      targets.push_back(Target{u.events[pos].timestamp, &u.user_id, pos});
    }
  }
  if (targets.empty()) {
    throw DataError(
        "chronological_split: no eligible targets (every user needs more "
        "than min_history interactions)");
  }
  std::sort(targets.begin(), targets.end(),
            [](const Target& a, const Target& b) {
              if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
              if (*a.user_id != *b.user_id) return *a.user_id < *b.user_id;
              return a.pos < b.pos;
            });

  std::size_t n = targets.size();
  auto cut = [n](double frac) {
    return static_cast<std::size_t>(
        std::floor(static_cast<double>(n) * frac + 1e-9));
  };
  std::size_t n_train = std::min(n, cut(ratios.train));
  std::size_t n_trainval = std::min(n, cut(ratios.train + ratios.val));
  if (n_trainval < n_train) n_trainval = n_train;

  DatasetSplit split;
  split.split_seed = seed;
  split.train_visible_end = std::numeric_limits<std::int64_t>::max();
  if (n_train < n) split.train_visible_end = targets[n_train].timestamp;

  for (std::size_t i = 0; i < n; ++i) {
    SplitTag tag = i < n_train          ? SplitTag::kTrain
                   : i < n_trainval     ? SplitTag::kVal
                                        : SplitTag::kTest;
    Rng rng(Rng::derive(seed, {static_cast<std::uint64_t>(i)}));
    RecommendationRequest req = build_request(catalog, stream,
                                              *targets[i].user_id,
                                              targets[i].pos, opt, rng);
    req.split_tag = tag;
    switch (tag) {
      case SplitTag::kTrain: split.train.push_back(std::move(req)); break;
      case SplitTag::kVal: split.val.push_back(std::move(req)); break;
      case SplitTag::kTest: split.test.push_back(std::move(req)); break;
    }
  }
  return split;
}

// ---- synthetic generator ---------------------------------------------------

namespace {

const char* kCategoryNames[] = {
    "Books",  "Games",  "Audio",  "Kitchen", "Garden",  "Sports",
    "Office", "Toys",   "Music",  "Tools",   "Crafts",  "Camera",
    "Travel", "Pets",   "Health", "Decor",   "Apparel", "Snacks",
};
const char* kNouns[] = {
    "Companion", "Classic", "Set",  "Kit",       "Edition",
    "Bundle",    "Pro",     "Mini", "Essential", "Deluxe",
};

std::string category_name(int c) {
  constexpr int kNames = static_cast<int>(std::size(kCategoryNames));
  std::string base = kCategoryNames[c % kNames];
  if (c >= kNames) base += " " + std::to_string(c / kNames + 1);
  return base;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticConfig& cfg,
                                 std::uint64_t seed) {
  if (cfg.num_items < cfg.num_categories || cfg.num_categories < 1 ||
      cfg.num_users < 1 || cfg.sessions_per_user < 1 ||
      cfg.session_len_min < 1 || cfg.session_len_max < cfg.session_len_min) {
    throw ConfigError("generate_synthetic: inconsistent generator config");
  }

  Rng item_rng(Rng::derive(seed, {1}));

  // Items are laid out in contiguous category blocks; an item's co-purchase
  // companions are its ring neighbours within the block.
  std::vector<int> cat_of(cfg.num_items);
  std::vector<std::vector<int>> block(cfg.num_categories);
  for (int i = 0; i < cfg.num_items; ++i) {
    int c = static_cast<int>(
        (static_cast<std::int64_t>(i) * cfg.num_categories) / cfg.num_items);
    cat_of[i] = c;
    block[c].push_back(i);
  }

  std::vector<Item> items;
  items.reserve(cfg.num_items);
  for (int i = 0; i < cfg.num_items; ++i) {
    Item item;
    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "I%05d", i);
    item.item_id = idbuf;
    std::string cat = category_name(cat_of[i]);
    item.title = cat + " " +
                 kNouns[item_rng.uniform_int(std::size(kNouns))] + " No. " +
                 std::to_string(i);
    item.categories.push_back(cat);
    if (item_rng.uniform() < 0.25) item.categories.push_back("Popular");
    double base = 8.0 + 7.0 * cat_of[i];
    double p = base * std::exp(item_rng.uniform(-0.3, 0.3));
    item.price = std::round(p * 100.0) / 100.0;
    item.avg_rating =
        std::round((3.2 + 1.6 * item_rng.uniform()) * 10.0) / 10.0;
    double u = item_rng.uniform();
    item.review_count = 1 + static_cast<std::int64_t>(1999.0 * u * u);
    items.push_back(std::move(item));
  }

  json user_prefs = json::object();
  std::vector<Interaction> events;

  for (int uidx = 0; uidx < cfg.num_users; ++uidx) {
    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "U%05d", uidx);
    std::string user_id = idbuf;
    Rng rng(Rng::derive(seed, {2, static_cast<std::uint64_t>(uidx)}));

    int n_pref = 1 + static_cast<int>(rng.uniform_int(3));
    n_pref = std::min(n_pref, cfg.num_categories);
    std::vector<std::size_t> prefs = rng.sample_without_replacement(
        static_cast<std::size_t>(cfg.num_categories),
        static_cast<std::size_t>(n_pref));
    json pref_names = json::array();
    for (std::size_t c : prefs) pref_names.push_back(category_name(
        static_cast<int>(c)));
    user_prefs[user_id] = pref_names;

    auto fresh_pick = [&]() -> int {
      if (rng.uniform() < cfg.category_affinity) {
        int c = static_cast<int>(prefs[rng.uniform_int(prefs.size())]);
        return block[c][rng.uniform_int(block[c].size())];
      }
      return static_cast<int>(rng.uniform_int(cfg.num_items));
    };
    auto companion_pick = [&](int prev) -> int {
      const std::vector<int>& b = block[cat_of[prev]];
      if (b.size() < 2) return prev;
      auto at = std::find(b.begin(), b.end(), prev) - b.begin();
      int degree = std::min<int>(cfg.cooc_degree,
                                 static_cast<int>(b.size()) - 1);
      std::size_t hop = 1 + rng.uniform_int(static_cast<std::uint64_t>(degree));
      return b[(at + hop) % b.size()];
    };

    std::int64_t t = 1'000'000 + static_cast<std::int64_t>(
                                     rng.uniform_int(500'000));
    for (int s = 0; s < cfg.sessions_per_user; ++s) {
      int len = cfg.session_len_min +
                static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(
                    cfg.session_len_max - cfg.session_len_min + 1)));
      int prev = -1;
      for (int k = 0; k < len; ++k) {
        int pick = (prev >= 0 && rng.uniform() < cfg.cooc_strength)
                       ? companion_pick(prev)
                       : fresh_pick();
        Interaction ev;
        ev.user_id = user_id;
        ev.item_id = items[pick].item_id;
        ev.timestamp = t;
        if (rng.uniform() < cfg.rating_prob) {
          bool preferred = std::find(prefs.begin(), prefs.end(),
                                     static_cast<std::size_t>(cat_of[pick])) !=
                           prefs.end();
          if (preferred) {
            ev.rating = rng.uniform() < 0.7 ? 5.0 : 4.0;
          } else {
            ev.rating = 2.0 + static_cast<double>(rng.uniform_int(3));
          }
        }
        events.push_back(std::move(ev));
        prev = pick;
        t += 60 + static_cast<std::int64_t>(rng.uniform_int(600));
      }
      // Jump well past the session-gap threshold before the next session.
      t += 86'400 + static_cast<std::int64_t>(rng.uniform_int(43'200));
    }
  }

  SyntheticData out;
  out.catalog = Catalog(std::move(items));
  out.stream = InteractionStream(std::move(events));
  out.metadata = json{
      {"generator", "planted-preference"},
      {"seed", seed},
      {"num_items", cfg.num_items},
      {"num_users", cfg.num_users},
      {"num_categories", cfg.num_categories},
      {"sessions_per_user", cfg.sessions_per_user},
      {"session_len_min", cfg.session_len_min},
      {"session_len_max", cfg.session_len_max},
      {"category_affinity", cfg.category_affinity},
      {"cooc_strength", cfg.cooc_strength},
      {"cooc_degree", cfg.cooc_degree},
      {"rating_prob", cfg.rating_prob},
      {"user_preferred_categories", std::move(user_prefs)},
  };
  return out;
}

// ---- serialization ---------------------------------------------------------

void write_catalog_jsonl(const Catalog& catalog,
                         const std::filesystem::path& path) {
  std::ostringstream out;
  for (const Item& item : catalog.items()) {
    json j{{"item_id", item.item_id},
           {"title", item.title},
           {"categories", item.categories}};
    if (item.price) j["price"] = *item.price;
    if (item.avg_rating) j["average_rating"] = *item.avg_rating;
    if (item.review_count) j["review_count"] = *item.review_count;
    out << j.dump() << '\n';
  }
  write_file(path, out.str());
}

void write_interactions_jsonl(const InteractionStream& stream,
                              const std::filesystem::path& path) {
  std::ostringstream out;
  for (const UserStream& u : stream.users()) {
    for (const Interaction& ev : u.events) {
      json j{{"user_id", ev.user_id},
             {"item_id", ev.item_id},
             {"timestamp", ev.timestamp}};
      if (ev.rating) j["rating"] = *ev.rating;
      out << j.dump() << '\n';
    }
  }
  write_file(path, out.str());
}

}  // namespace agentrank
