#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "absteer/types.hpp"

namespace absteer {

using RowMatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kStoreVersion = 1;
inline constexpr double kZeroNormThreshold = 1e-12;

/// Last-token residual-stream activations for a set of instances. Row i of
/// every layer matrix belongs to instances[i].
struct ActivationStore {
  std::string model_id;
  int hidden_dim = 0;
  std::vector<int> layers;
  std::vector<SyllogismInstance> instances;
  std::map<int, RowMatrixF> matrices;

  std::size_t size() const { return instances.size(); }
  const RowMatrixF& layer(int l) const;
  std::span<const float> row(int l, std::size_t i) const;
  bool has_layer(int l) const { return matrices.count(l) != 0; }

  // Index of the instance with the given id, or npos.
  std::size_t index_of(const std::string& id) const;
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

// Throws ValidationError describing the first broken invariant.
void validate_store(const ActivationStore& store);

void save_store(const ActivationStore& store, const std::filesystem::path& dir);
ActivationStore load_store(const std::filesystem::path& dir);

// Instance list readers/writers shared by store and dataset files.
void write_instances_jsonl(const std::vector<SyllogismInstance>& instances,
                           const std::filesystem::path& path);
std::vector<SyllogismInstance> read_instances_jsonl(const std::filesystem::path& path);

// Raw little-endian f32 blob helpers.
void write_f32le(std::ostream& out, std::span<const float> values);
void read_f32le(std::istream& in, std::span<float> values);

}  // namespace absteer
