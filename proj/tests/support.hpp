#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <unistd.h>

#include "genki/genki.hpp"

namespace gt {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("genki_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

  std::string write(const std::string& name, const std::string& content) const {
    std::ofstream out(file(name), std::ios::binary);
    out << content;
    return file(name);
  }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Scorer driven by a callback; generate returns a fixed text.
class FnScorer final : public genki::LmScorer {
 public:
  using Fn = std::function<double(const genki::TokenSeq&, const genki::TokenSeq&)>;
  explicit FnScorer(Fn fn, std::string gen = "x") : fn_(std::move(fn)), gen_(std::move(gen)) {}

  double logprob_cond(const genki::TokenSeq& c, const genki::TokenSeq& t) const override {
    return fn_(c, t);
  }
  genki::TokenSeq generate(const genki::TokenSeq&, std::size_t) const override {
    return {{}, gen_};
  }

 private:
  Fn fn_;
  std::string gen_;
};

/// Reward model returning a fixed score per answer text (0 otherwise).
class TableReward final : public genki::RewardModel {
 public:
  explicit TableReward(std::map<std::string, double> t) : t_(std::move(t)) {}
  double score(std::string_view a, const genki::FormatSpec&, std::string_view = {}) const override {
    auto it = t_.find(std::string(a));
    return it == t_.end() ? 0.0 : it->second;
  }

 private:
  std::map<std::string, double> t_;
};

inline genki::TokenSeq seq(std::vector<genki::TokenId> ids) { return {std::move(ids), {}}; }

/// Random id sequence over the non-special ids 3..v-1.
inline std::vector<genki::TokenId> random_ids(std::mt19937_64& rng, std::size_t v, std::size_t n) {
  std::vector<genki::TokenId> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<genki::TokenId>(3 + rng() % (v - 3)));
  return out;
}

inline genki::ToyLm random_model(std::size_t v, std::uint64_t seed, double scale = 1.0) {
  return genki::ToyLm::with_size(v, seed, scale);
}

}  // namespace gt
