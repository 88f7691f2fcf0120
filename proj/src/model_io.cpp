#include "absteer/model_io.hpp"

#include <array>
#include <fstream>

#include "absteer/errors.hpp"
#include "absteer/store.hpp"

namespace absteer {
namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

std::string model_file_name(int layer) { return "abstractor_" + std::to_string(layer) + ".bin"; }

void save_model(const AbstractorModel& model, std::uint64_t seed, const std::string& config_hash,
                const fs::path& path) {
  ordered_json header;
  header["format"] = "abstractor";
  header["version"] = 1;
  header["layer"] = model.layer();
  header["seed"] = seed;
  header["config_hash"] = config_hash;
  header["params"] = to_json(model.params());
  ordered_json tensors = ordered_json::array();
  for (const auto& t : model.tensors()) {
    tensors.push_back({{"name", t.name},
                       {"shape", {t.rows, t.cols}},
                       {"offset", t.offset * sizeof(float)}});
  }
  header["tensors"] = tensors;
  const std::string text = header.dump();

  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  std::array<unsigned char, 8> len{};
  for (int i = 0; i < 8; ++i) {
    len[static_cast<std::size_t>(i)] = static_cast<unsigned char>((text.size() >> (8 * i)) & 0xFF);
  }
  out.write(reinterpret_cast<const char*>(len.data()), 8);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  write_f32le(out, model.parameters());
  if (!out) {
    throw IoError("write failed: " + path.string());
  }
}

ModelFile load_model(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("missing model file " + path.string());
  }
  const auto file_size = fs::file_size(path);
  std::array<unsigned char, 8> len{};
  in.read(reinterpret_cast<char*>(len.data()), 8);
  if (in.gcount() != 8) {
    throw ValidationError(path.string() + ": truncated model header");
  }
  std::uint64_t header_len = 0;
  for (int i = 0; i < 8; ++i) {
    header_len |= static_cast<std::uint64_t>(len[static_cast<std::size_t>(i)]) << (8 * i);
  }
  if (header_len > file_size - 8) {
    throw ValidationError(path.string() + ": header length exceeds file size");
  }
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));

  json header;
  int layer = 0;
  ModelFile out{AbstractorModel(AbstractorParams{.input_dim = 1, .backbone = {1}, .direction_hidden = 1,
                                                 .magnitude_hidden = 1}),
                0, {}};
  try {
    header = json::parse(text);
    if (header.at("format").get<std::string>() != "abstractor" || header.at("version").get<int>() != 1) {
      throw ValidationError(path.string() + ": not a version-1 abstractor file");
    }
    layer = header.at("layer").get<int>();
    out.seed = header.at("seed").get<std::uint64_t>();
    out.config_hash = header.at("config_hash").get<std::string>();
    out.model = AbstractorModel(params_from_json(header.at("params")), layer);
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": malformed model header: " + e.what());
  }

  const auto& specs = out.model.tensors();
  const auto& listed = header.at("tensors");
  if (listed.size() != specs.size()) {
    throw ValidationError(path.string() + ": tensor count does not match the declared params");
  }
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& t = listed[i];
    const auto shape = t.at("shape").get<std::vector<int>>();
    if (t.at("name").get<std::string>() != specs[i].name || shape.size() != 2 ||
        shape[0] != specs[i].rows || shape[1] != specs[i].cols ||
        t.at("offset").get<std::size_t>() != specs[i].offset * sizeof(float)) {
      throw ValidationError(path.string() + ": shape mismatch for tensor '" + specs[i].name + "'");
    }
  }
  const std::uint64_t blob_bytes = out.model.parameter_count() * sizeof(float);
  if (file_size != 8 + header_len + blob_bytes) {
    throw ValidationError(path.string() + ": tensor blob is " + std::to_string(file_size - 8 - header_len) +
                          " bytes, expected " + std::to_string(blob_bytes));
  }
  read_f32le(in, out.model.parameters());
  return out;
}

}  // namespace absteer
