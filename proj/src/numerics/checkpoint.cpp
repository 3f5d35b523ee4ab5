#include "heterrec/numerics/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace heterrec::numerics {

namespace {

constexpr const char* kFormat = "heterrec-checkpoint";

std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
  return v;
}

}  // namespace

const CheckpointEntry& Checkpoint::at(const std::string& name) const {
  auto it = std::find_if(tensors.begin(), tensors.end(), [&](const auto& e) { return e.name == name; });
  if (it == tensors.end()) throw DataError("checkpoint has no tensor named " + name);
  return *it;
}

bool Checkpoint::contains(const std::string& name) const {
  return std::any_of(tensors.begin(), tensors.end(), [&](const auto& e) { return e.name == name; });
}

void write_checkpoint(const std::filesystem::path& manifest_path, std::vector<CheckpointEntry> tensors,
                      const nlohmann::json& meta) {
  std::sort(tensors.begin(), tensors.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  auto blob_path = manifest_path;
  blob_path.replace_extension(".bin");

  nlohmann::json manifest;
  manifest["format"] = kFormat;
  manifest["version"] = 1;
  manifest["dtype"] = "float32";
  manifest["byte_order"] = "little";
  manifest["blob"] = blob_path.filename().string();
  nlohmann::json entries = nlohmann::json::array();

  std::ofstream blob(blob_path, std::ios::binary | std::ios::trunc);
  if (!blob) throw DataError("cannot write " + blob_path.string());
  std::uint64_t offset = 0;
  for (const auto& t : tensors) {
    if (shape_numel(t.shape) != t.values.size()) {
      throw DimensionError("checkpoint tensor " + t.name + " has inconsistent shape");
    }
    for (float f : t.values) {
      std::uint32_t bits = to_little(std::bit_cast<std::uint32_t>(f));
      blob.write(reinterpret_cast<const char*>(&bits), sizeof(bits));
    }
    const std::uint64_t bytes = t.values.size() * sizeof(float);
    entries.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}, {"bytes", bytes}});
    offset += bytes;
  }
  if (!blob) throw DataError("failed writing " + blob_path.string());
  manifest["blob_bytes"] = offset;
  manifest["tensors"] = std::move(entries);
  manifest["meta"] = meta;

  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + manifest_path.string());
  out << manifest.dump(2) << '\n';
}

Checkpoint read_checkpoint(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw DataError("cannot open checkpoint manifest " + manifest_path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint manifest: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != kFormat || manifest.value("dtype", "") != "float32") {
    throw DataError("not a float32 heterrec checkpoint: " + manifest_path.string());
  }
  auto blob_path = manifest_path.parent_path() / manifest.at("blob").get<std::string>();
  std::ifstream blob(blob_path, std::ios::binary);
  if (!blob) throw DataError("cannot open checkpoint blob " + blob_path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(blob)), std::istreambuf_iterator<char>());
  if (bytes.size() != manifest.at("blob_bytes").get<std::uint64_t>()) {
    throw DataError("checkpoint blob size mismatch for " + blob_path.string());
  }

  Checkpoint ckpt;
  ckpt.meta = manifest.value("meta", nlohmann::json::object());
  for (const auto& e : manifest.at("tensors")) {
    CheckpointEntry entry;
    entry.name = e.at("name").get<std::string>();
    entry.shape = e.at("shape").get<Shape>();
    const auto offset = e.at("offset").get<std::uint64_t>();
    const auto nbytes = e.at("bytes").get<std::uint64_t>();
    if (offset + nbytes > bytes.size() || nbytes != shape_numel(entry.shape) * sizeof(float)) {
      throw DataError("checkpoint entry " + entry.name + " is out of bounds");
    }
    entry.values.resize(nbytes / sizeof(float));
    for (std::size_t i = 0; i < entry.values.size(); ++i) {
      std::uint32_t bits;
      std::memcpy(&bits, bytes.data() + offset + i * sizeof(float), sizeof(bits));
      entry.values[i] = std::bit_cast<float>(to_little(bits));
    }
    ckpt.tensors.push_back(std::move(entry));
  }
  return ckpt;
}

}  // namespace heterrec::numerics
