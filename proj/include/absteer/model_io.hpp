#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "absteer/abstractor.hpp"

namespace absteer {

struct ModelFile {
  AbstractorModel model;
  std::uint64_t seed = 0;
  std::string config_hash;
};

std::string model_file_name(int layer);  // abstractor_<layer>.bin

/// Layout: u64 little-endian header length, JSON header (params, layer,
/// seed, config_hash, tensors[{name, shape, offset}]), then the f32le
/// tensors concatenated in header order.
void save_model(const AbstractorModel& model, std::uint64_t seed, const std::string& config_hash,
                const std::filesystem::path& path);
ModelFile load_model(const std::filesystem::path& path);

}  // namespace absteer
