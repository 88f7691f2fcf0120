#include "absteer/store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "absteer/errors.hpp"

namespace absteer {
namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string layer_file_name(int layer) { return "layer_" + std::to_string(layer) + ".bin"; }

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("missing file " + path.string());
  }
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::uint32_t bswap32(std::uint32_t x) {
  return (x >> 24) | ((x >> 8) & 0xFF00U) | ((x << 8) & 0xFF0000U) | (x << 24);
}

}  // namespace

const RowMatrixF& ActivationStore::layer(int l) const {
  auto it = matrices.find(l);
  if (it == matrices.end()) {
    throw ValidationError("store has no layer " + std::to_string(l));
  }
  return it->second;
}

std::span<const float> ActivationStore::row(int l, std::size_t i) const {
  const auto& m = layer(l);
  return {m.data() + i * static_cast<std::size_t>(m.cols()), static_cast<std::size_t>(m.cols())};
}

std::size_t ActivationStore::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (instances[i].id == id) {
      return i;
    }
  }
  return npos;
}

void validate_store(const ActivationStore& store) {
  if (store.hidden_dim <= 0) {
    throw ValidationError("hidden_dim must be positive");
  }
  for (std::size_t i = 1; i < store.layers.size(); ++i) {
    if (store.layers[i] <= store.layers[i - 1]) {
      throw ValidationError("layer indices must be strictly increasing");
    }
  }
  if (store.matrices.size() != store.layers.size()) {
    throw ValidationError("matrix count does not match layer list");
  }
  std::set<std::string> ids;
  for (const auto& inst : store.instances) {
    check_instance(inst);
    if (!ids.insert(inst.id).second) {
      throw ValidationError("duplicate instance id '" + inst.id + "'");
    }
  }
  const auto n = static_cast<Eigen::Index>(store.instances.size());
  for (int l : store.layers) {
    auto it = store.matrices.find(l);
    if (it == store.matrices.end()) {
      throw ValidationError("missing matrix for layer " + std::to_string(l));
    }
    const auto& m = it->second;
    if (m.rows() != n || m.cols() != store.hidden_dim) {
      std::ostringstream msg;
      msg << "layer " << l << ": matrix is " << m.rows() << "x" << m.cols() << ", expected " << n
          << "x" << store.hidden_dim;
      throw ValidationError(msg.str());
    }
    for (Eigen::Index r = 0; r < n; ++r) {
      double sq = 0.0;
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const double v = m(r, c);
        if (!std::isfinite(v)) {
          throw ValidationError("layer " + std::to_string(l) + ": non-finite value in row " +
                                std::to_string(r));
        }
        sq += v * v;
      }
      if (std::sqrt(sq) < kZeroNormThreshold) {
        throw ValidationError("layer " + std::to_string(l) + ": zero activation row for '" +
                              store.instances[static_cast<std::size_t>(r)].id + "'");
      }
    }
  }
}

void write_f32le(std::ostream& out, std::span<const float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size_bytes()));
  } else {
    for (float v : values) {
      const std::uint32_t le = bswap32(std::bit_cast<std::uint32_t>(v));
      out.write(reinterpret_cast<const char*>(&le), sizeof(le));
    }
  }
}

void read_f32le(std::istream& in, std::span<float> values) {
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
  if (static_cast<std::size_t>(in.gcount()) != values.size_bytes()) {
    throw ValidationError("truncated f32 blob");
  }
  if constexpr (std::endian::native != std::endian::little) {
    for (float& v : values) {
      v = std::bit_cast<float>(bswap32(std::bit_cast<std::uint32_t>(v)));
    }
  }
}

void write_instances_jsonl(const std::vector<SyllogismInstance>& instances, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  for (const auto& inst : instances) {
    out << to_json(inst).dump() << '\n';
  }
  if (!out) {
    throw IoError("write failed: " + path.string());
  }
}

std::vector<SyllogismInstance> read_instances_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("missing file " + path.string());
  }
  std::vector<SyllogismInstance> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) {
      continue;
    }
    try {
      out.push_back(instance_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void save_store(const ActivationStore& store, const fs::path& dir) {
  validate_store(store);
  fs::create_directories(dir);

  ordered_json manifest;
  manifest["version"] = kStoreVersion;
  manifest["model_id"] = store.model_id;
  manifest["hidden_dim"] = store.hidden_dim;
  manifest["layers"] = store.layers;
  manifest["num_examples"] = store.instances.size();
  manifest["dtype"] = "f32le";
  ordered_json files = ordered_json::object();
  for (int l : store.layers) {
    files[std::to_string(l)] = layer_file_name(l);
  }
  manifest["layer_files"] = files;

  {
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    out << manifest.dump(2) << '\n';
    if (!out) {
      throw IoError("cannot write manifest in " + dir.string());
    }
  }
  write_instances_jsonl(store.instances, dir / "instances.jsonl");
  for (int l : store.layers) {
    std::ofstream out(dir / layer_file_name(l), std::ios::binary);
    const auto& m = store.matrices.at(l);
    write_f32le(out, {m.data(), static_cast<std::size_t>(m.size())});
    if (!out) {
      throw IoError("cannot write layer file for layer " + std::to_string(l));
    }
  }
}

ActivationStore load_store(const fs::path& dir) {
  const json manifest = read_json_file(dir / "manifest.json");
  ActivationStore store;
  std::map<std::string, std::string> files;
  std::size_t n = 0;
  try {
    const int version = manifest.at("version").get<int>();
    if (version != kStoreVersion) {
      throw ValidationError("unsupported store manifest version " + std::to_string(version));
    }
    if (manifest.at("dtype").get<std::string>() != "f32le") {
      throw ValidationError("unsupported dtype '" + manifest.at("dtype").get<std::string>() + "'");
    }
    store.model_id = manifest.at("model_id").get<std::string>();
    store.hidden_dim = manifest.at("hidden_dim").get<int>();
    store.layers = manifest.at("layers").get<std::vector<int>>();
    n = manifest.at("num_examples").get<std::size_t>();
    files = manifest.at("layer_files").get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    throw ValidationError("malformed store manifest: " + std::string(e.what()));
  }
  if (store.hidden_dim <= 0) {
    throw ValidationError("hidden_dim must be positive");
  }

  store.instances = read_instances_jsonl(dir / "instances.jsonl");
  if (store.instances.size() != n) {
    throw ValidationError("instances.jsonl has " + std::to_string(store.instances.size()) +
                          " records, manifest says " + std::to_string(n));
  }

  const auto d = static_cast<std::size_t>(store.hidden_dim);
  for (int l : store.layers) {
    auto it = files.find(std::to_string(l));
    if (it == files.end()) {
      throw ValidationError("manifest has no layer file for layer " + std::to_string(l));
    }
    const fs::path path = dir / it->second;
    if (!fs::exists(path)) {
      throw IoError("missing layer file " + path.string());
    }
    const auto expected = static_cast<std::uintmax_t>(n * d * sizeof(float));
    const auto actual = fs::file_size(path);
    if (actual != expected) {
      throw ValidationError("size mismatch for " + path.string() + ": " + std::to_string(actual) +
                            " bytes, expected " + std::to_string(expected));
    }
    RowMatrixF m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    std::ifstream in(path, std::ios::binary);
    read_f32le(in, {m.data(), static_cast<std::size_t>(m.size())});
    store.matrices.emplace(l, std::move(m));
  }
  validate_store(store);
  return store;
}

}  // namespace absteer
