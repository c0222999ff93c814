#pragma once

// Shared fixtures for the unit suites: a deterministic synthetic world small
// enough for fast tests, and scratch-directory plumbing.

#include <unistd.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "agentrank/collab.hpp"
#include "agentrank/corpus.hpp"
#include "agentrank/rollout.hpp"
#include "agentrank/tools.hpp"

namespace agentrank::testsupport {

/// Fresh scratch directory under the system temp root; removed on
/// destruction so reruns start clean.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    std::ostringstream name;
    name << "agentrank_" << tag << "_" << ::getpid() << "_" << counter++;
    path_ = std::filesystem::temp_directory_path() / name.str();
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path file(const std::string& name) const {
    return path_ / name;
  }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

inline void spit(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

struct SmallWorldOptions {
  SyntheticConfig synthetic = [] {
    SyntheticConfig c;
    c.num_items = 60;
    c.num_users = 40;
    c.num_categories = 6;
    c.sessions_per_user = 3;
    return c;
  }();
  RequestOptions request = {8, 6, 1};  // n=8 candidates, history cap 6
  SplitRatios ratios;
  CollabConfig collab = {8, 10, 1.0, 0.01};
  bool collab_enabled = true;
  int k = 4;
  int t_max = 4;
  std::uint64_t seed = 4242;
};

/// A complete in-memory experiment world: synthetic corpus, chronological
/// split, collaborative model on the visible stream, registry, envs.
/// Address-stable (no copies or moves) because World borrows everything.
class SmallWorld {
 public:
  explicit SmallWorld(const SmallWorldOptions& opt = {})
      : data_(generate_synthetic(opt.synthetic,
                                 Rng::derive(opt.seed, {seed_tag::kData}))),
        split_(chronological_split(data_.catalog, data_.stream, opt.ratios,
                                   opt.request,
                                   Rng::derive(opt.seed, {seed_tag::kSplit}))),
        visible_(data_.stream.truncated_before(split_.train_visible_end)),
        collab_(CollabModel::fit(data_.catalog, visible_, opt.collab,
                                 Rng::derive(opt.seed, {seed_tag::kCollab}))),
        registry_(RegistryOptions{opt.collab_enabled, {}}) {
    world_.catalog = &data_.catalog;
    world_.full = &data_.stream;
    world_.visible = &visible_;
    world_.collab = opt.collab_enabled ? &collab_ : nullptr;
    world_.profiles = nullptr;
    world_.registry = &registry_;
    world_.loop.k = opt.k;
    world_.loop.t_max = opt.t_max;
    world_.loop.max_steps = 2 * opt.t_max + 2;
    train_ = build_envs(split_.train, world_);
    val_ = build_envs(split_.val, world_);
    test_ = build_envs(split_.test, world_);
  }
  SmallWorld(const SmallWorld&) = delete;
  SmallWorld& operator=(const SmallWorld&) = delete;

  const SyntheticData& data() const { return data_; }
  const DatasetSplit& split() const { return split_; }
  const InteractionStream& visible() const { return visible_; }
  const CollabModel& collab() const { return collab_; }
  const ToolRegistry& registry() const { return registry_; }
  const World& world() const { return world_; }
  std::span<const std::unique_ptr<RequestEnv>> train() const { return train_; }
  std::span<const std::unique_ptr<RequestEnv>> val() const { return val_; }
  std::span<const std::unique_ptr<RequestEnv>> test() const { return test_; }

 private:
  SyntheticData data_;
  DatasetSplit split_;
  InteractionStream visible_;
  CollabModel collab_;
  ToolRegistry registry_;
  World world_;
  std::vector<std::unique_ptr<RequestEnv>> train_;
  std::vector<std::unique_ptr<RequestEnv>> val_;
  std::vector<std::unique_ptr<RequestEnv>> test_;
};

}  // namespace agentrank::testsupport
