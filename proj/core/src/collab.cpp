#include "agentrank/collab.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "agentrank/errors.hpp"
#include "agentrank/json_io.hpp"

namespace agentrank {

namespace {

double cosine(const double* a, const double* b, int d) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (int i = 0; i < d; ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa <= 0.0 || bb <= 0.0) return 0.0;  // cold vectors carry no signal
  return ab / std::sqrt(aa * bb);
}

}  // namespace

void CollabModel::rebuild_indices() {
  item_index_.clear();
  user_index_.clear();
  for (std::size_t i = 0; i < item_ids_.size(); ++i) item_index_[item_ids_[i]] = i;
  for (std::size_t i = 0; i < user_ids_.size(); ++i) user_index_[user_ids_[i]] = i;
}

std::vector<double> CollabModel::item_vector(const std::string& item_id) const {
  std::vector<double> v(static_cast<std::size_t>(dim_), 0.0);
  auto it = item_index_.find(item_id);
  if (it != item_index_.end()) {
    const double* row = &item_rows_[it->second * dim_];
    v.assign(row, row + dim_);
  }
  return v;
}

std::vector<double> CollabModel::user_vector(const std::string& user_id) const {
  std::vector<double> v(static_cast<std::size_t>(dim_), 0.0);
  auto it = user_index_.find(user_id);
  if (it != user_index_.end()) {
    const double* row = &user_rows_[it->second * dim_];
    v.assign(row, row + dim_);
  }
  return v;
}

bool CollabModel::item_is_cold(const std::string& item_id) const {
  auto it = item_index_.find(item_id);
  if (it == item_index_.end()) return true;
  return item_cold_[it->second] != 0;
}

double CollabModel::score(const std::string& user_id,
                          const std::string& item_id) const {
  auto ui = user_index_.find(user_id);
  auto ii = item_index_.find(item_id);
  if (ui == user_index_.end() || ii == item_index_.end()) return 0.0;
  const double* u = &user_rows_[ui->second * dim_];
  const double* v = &item_rows_[ii->second * dim_];
  double s = 0.0;
  for (int k = 0; k < dim_; ++k) s += u[k] * v[k];
  return s;
}

std::vector<Neighbor> CollabModel::neighbors(
    const std::vector<std::string>& ids, const std::vector<double>& rows,
    std::size_t query, std::size_t k) const {
  std::vector<Neighbor> scored;
  scored.reserve(ids.size() - 1);
  const double* q = &rows[query * dim_];
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i == query) continue;
    scored.push_back(Neighbor{ids[i], cosine(q, &rows[i * dim_], dim_)});
  }
  std::sort(scored.begin(), scored.end(),
            [](const Neighbor& a, const Neighbor& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.id < b.id;
            });
  if (scored.size() > k) scored.resize(k);
  return scored;
}

std::vector<Neighbor> CollabModel::similar_items(const std::string& item_id,
                                                 std::size_t k) const {
  auto it = item_index_.find(item_id);
  if (it == item_index_.end()) {
    throw DataError("similar_items: unknown item_id: " + item_id);
  }
  return neighbors(item_ids_, item_rows_, it->second, k);
}

std::vector<Neighbor> CollabModel::similar_users(const std::string& user_id,
                                                 std::size_t k) const {
  auto it = user_index_.find(user_id);
  if (it == user_index_.end()) {
    throw DataError("similar_users: unknown user_id: " + user_id);
  }
  return neighbors(user_ids_, user_rows_, it->second, k);
}

CollabModel CollabModel::fit(const Catalog& catalog,
                             const InteractionStream& visible,
                             const CollabConfig& cfg, std::uint64_t seed) {
  if (cfg.dim < 1 || cfg.iterations < 1 || cfg.shift < 1.0 || cfg.reg <= 0.0) {
    throw ConfigError("CollabModel::fit: invalid config");
  }
  const int n = static_cast<int>(catalog.size());
  if (n == 0) throw DataError("CollabModel::fit: empty catalog");
  const int d = std::min(cfg.dim, n);

  CollabModel model;
  model.dim_ = d;
  model.training_seed_ = seed;
  model.item_ids_.reserve(catalog.size());
  for (const Item& item : catalog.items()) model.item_ids_.push_back(item.item_id);

  std::unordered_map<std::string, int> item_idx;
  for (int i = 0; i < n; ++i) item_idx[model.item_ids_[i]] = i;

  // Symmetric co-occurrence counts over each user's full visible history.
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(n, n);
  for (const UserStream& u : visible.users()) {
    for (std::size_t a = 0; a < u.events.size(); ++a) {
      int ia = item_idx.at(u.events[a].item_id);
      for (std::size_t b = a + 1; b < u.events.size(); ++b) {
        int ib = item_idx.at(u.events[b].item_id);
        if (ia == ib) continue;
        counts(ia, ib) += 1.0;
        counts(ib, ia) += 1.0;
      }
    }
  }

  Eigen::VectorXd marginals = counts.rowwise().sum();
  double total = marginals.sum();

  // Shifted PPMI: max(0, log(#(i,j) * D / (#i * #j)) - log(shift)).
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  if (total > 0.0) {
    double log_shift = std::log(cfg.shift);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        double c = counts(i, j);
        if (c <= 0.0) continue;
        double pmi = std::log(c * total / (marginals(i) * marginals(j)));
        double v = pmi - log_shift;
        if (v > 0.0) m(i, j) = v;
      }
    }
  }

  // Iterative ridge least squares with tied factors: each round solves
  // min_W' |M - W' W^T|^2 + reg |W'|^2 in closed form.  Fixed points are
  // W = U sqrt(max(Lambda - reg, 0)) for the top eigenpairs of M, i.e. the
  // regularized symmetric rank-d factorization; directions with negative
  // eigenvalues decay to zero under the iteration.
  Rng rng(Rng::derive(seed, {0x51}));
  Eigen::MatrixXd w(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) w(i, j) = rng.uniform(-0.1, 0.1);
  }
  for (int round = 0; round < cfg.iterations; ++round) {
    Eigen::MatrixXd gram = w.transpose() * w;
    gram.diagonal().array() += cfg.reg;
    // W <- M W (W^T W + reg I)^-1
    w = gram.ldlt().solve((m * w).transpose()).transpose();
  }

  model.item_rows_.assign(static_cast<std::size_t>(n) * d, 0.0);
  model.item_cold_.assign(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    bool cold = marginals(i) <= 0.0;
    model.item_cold_[i] = cold ? 1 : 0;
    if (cold) continue;  // cold rows stay exactly zero
    for (int j = 0; j < d; ++j) model.item_rows_[i * d + j] = w(i, j);
  }

  // User vectors: mean of the user's (visible) item vectors.
  for (const UserStream& u : visible.users()) {
    if (u.events.empty()) continue;
    model.user_ids_.push_back(u.user_id);
    std::vector<double> acc(static_cast<std::size_t>(d), 0.0);
    for (const Interaction& ev : u.events) {
      int idx = item_idx.at(ev.item_id);
      for (int j = 0; j < d; ++j) acc[j] += model.item_rows_[idx * d + j];
    }
    for (int j = 0; j < d; ++j) acc[j] /= static_cast<double>(u.events.size());
    model.user_rows_.insert(model.user_rows_.end(), acc.begin(), acc.end());
  }

  for (double v : model.item_rows_) {
    if (!std::isfinite(v)) {
      throw DataError("CollabModel::fit produced non-finite item vectors");
    }
  }
  model.rebuild_indices();
  return model;
}

void CollabModel::save(const std::filesystem::path& path) const {
  json j{
      {"format", "agentrank-collab"},
      {"version", kFormatVersion},
      {"dim", dim_},
      {"training_seed", training_seed_},
      {"item_ids", item_ids_},
      {"user_ids", user_ids_},
      {"item_rows", item_rows_},
      {"user_rows", user_rows_},
      {"item_cold", item_cold_},
  };
  write_file(path, j.dump(2) + "\n");
}

CollabModel CollabModel::load(const std::filesystem::path& path) {
  json j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) {
    throw FormatError("collab checkpoint is not valid JSON: " + path.string());
  }
  if (j.value("format", "") != "agentrank-collab") {
    throw FormatError("not a collab checkpoint: " + path.string());
  }
  if (j.value("version", -1) != kFormatVersion) {
    throw FormatError("unsupported collab checkpoint version in " +
                      path.string());
  }
  CollabModel m;
  m.dim_ = j.at("dim").get<int>();
  m.training_seed_ = j.at("training_seed").get<std::uint64_t>();
  m.item_ids_ = j.at("item_ids").get<std::vector<std::string>>();
  m.user_ids_ = j.at("user_ids").get<std::vector<std::string>>();
  m.item_rows_ = j.at("item_rows").get<std::vector<double>>();
  m.user_rows_ = j.at("user_rows").get<std::vector<double>>();
  m.item_cold_ = j.at("item_cold").get<std::vector<std::uint8_t>>();
  if (m.item_rows_.size() != m.item_ids_.size() * m.dim_ ||
      m.user_rows_.size() != m.user_ids_.size() * m.dim_ ||
      m.item_cold_.size() != m.item_ids_.size()) {
    throw FormatError("collab checkpoint has inconsistent array sizes");
  }
  m.rebuild_indices();
  return m;
}

}  // namespace agentrank
