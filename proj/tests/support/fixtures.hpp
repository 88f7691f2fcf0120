#pragma once

// Randomized fixtures shared by the unit and acceptance tests.

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <unistd.h>

#include "absteer/rng.hpp"
#include "absteer/store.hpp"
#include "absteer/types.hpp"

namespace fixtures {

using absteer::ActivationStore;
using absteer::Form;
using absteer::Plausibility;
using absteer::RowMatrixF;
using absteer::SplitMix64;
using absteer::SyllogismInstance;
using absteer::Validity;

struct StoreShape {
  std::size_t pairs = 10;       // content/abstract pairs
  std::size_t unpaired = 0;     // extra abstract instances without a pair
  int dim = 6;
  std::vector<int> layers{0, 1};
  int schemas = 4;
};

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("absteer_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
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
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Content instances first (ids c<i>), then abstract pairs (a<i>), then
// unpaired abstract instances (u<i>). Schema k is valid for even k.
inline ActivationStore random_store(const StoreShape& shape, SplitMix64& rng) {
  ActivationStore s;
  s.model_id = "fixture-" + std::to_string(rng.below(1000));
  s.hidden_dim = shape.dim;
  s.layers = shape.layers;
  std::vector<SyllogismInstance> content, abstract;
  for (std::size_t i = 0; i < shape.pairs; ++i) {
    const int schema = static_cast<int>(rng.below(static_cast<std::uint64_t>(shape.schemas)));
    SyllogismInstance c;
    c.id = "c" + std::to_string(i);
    c.schema_id = "S" + std::to_string(schema);
    c.validity = schema % 2 == 0 ? Validity::valid : Validity::invalid;
    c.plausibility = rng.below(2) ? Plausibility::plausible : Plausibility::implausible;
    c.form = Form::content;
    c.pair_id = "a" + std::to_string(i);
    c.text = "content text " + std::to_string(i);
    c.t_start = static_cast<int>(rng.below(5));
    c.seq_len = c.t_start + 1 + static_cast<int>(rng.below(20));
    SyllogismInstance a = c;
    a.id = "a" + std::to_string(i);
    a.plausibility = Plausibility::none;
    a.form = Form::abstract;
    a.pair_id = c.id;
    a.text = "abstract text " + std::to_string(i);
    content.push_back(c);
    abstract.push_back(a);
  }
  for (std::size_t i = 0; i < shape.unpaired; ++i) {
    const int schema = static_cast<int>(rng.below(static_cast<std::uint64_t>(shape.schemas)));
    SyllogismInstance a;
    a.id = "u" + std::to_string(i);
    a.schema_id = "S" + std::to_string(schema);
    a.validity = schema % 2 == 0 ? Validity::valid : Validity::invalid;
    a.plausibility = Plausibility::none;
    a.form = Form::abstract;
    a.text = "unpaired " + std::to_string(i);
    a.seq_len = 4;
    abstract.push_back(a);
  }
  s.instances = content;
  s.instances.insert(s.instances.end(), abstract.begin(), abstract.end());
  const auto n = static_cast<Eigen::Index>(s.instances.size());
  for (int l : shape.layers) {
    RowMatrixF m(n, shape.dim);
    for (Eigen::Index r = 0; r < n; ++r) {
      for (Eigen::Index c = 0; c < shape.dim; ++c) m(r, c) = static_cast<float>(rng.normal());
    }
    s.matrices.emplace(l, std::move(m));
  }
  return s;
}

}  // namespace fixtures
