#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "lfaa/core/digest.hpp"
#include "lfaa/core/errors.hpp"
#include "lfaa/core/tensor.hpp"

namespace lfaa::nn {

/// On-disk layout:
///   "LFAACKPT" | u64 little-endian header length | JSON header | raw tensor bytes
/// The header lists every tensor (name, shape, dtype, byte offset) plus a
/// SHA-256 digest over the model description and all tensor bytes.
inline constexpr char kCheckpointMagic[8] = {'L', 'F', 'A', 'A', 'C', 'K', 'P', 'T'};

template <typename S>
constexpr const char* dtype_name() {
  static_assert(std::is_same_v<S, float> || std::is_same_v<S, double>, "float or double parameters only");
  return std::is_same_v<S, float> ? "f32" : "f64";
}

/// Digest of a parameter list: shapes and raw bytes, prefixed by a model description.
template <typename S>
std::string parameter_digest(const std::string& description, const std::vector<const Tensor<S>*>& params) {
  Sha256 sha;
  sha.update(description);
  sha.update(dtype_name<S>());
  for (const auto* p : params) {
    sha.update(p->shape.data(), sizeof(p->shape));
    sha.update(std::span<const S>(p->data));
  }
  return sha.hex();
}

/// Writes `meta` (model description, must not contain "tensors" / "digest") and the parameters.
template <typename S>
void write_checkpoint(const std::filesystem::path& path, nlohmann::json meta, const std::vector<const Tensor<S>*>& params) {
  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = *params[i];
    tensors.push_back({{"name", "param." + std::to_string(i)},
                       {"shape", p.shape},
                       {"dtype", dtype_name<S>()},
                       {"offset", offset},
                       {"count", p.size()}});
    offset += p.size() * sizeof(S);
  }
  const std::string description = meta.dump();
  meta["tensors"] = tensors;
  meta["digest"] = parameter_digest<S>(description, params);
  const std::string header = meta.dump(1);

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::uint64_t len = header.size();
  unsigned char len_bytes[8];
  for (int i = 0; i < 8; ++i) len_bytes[i] = static_cast<unsigned char>(len >> (8 * i));
  out.write(reinterpret_cast<const char*>(len_bytes), 8);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto* p : params)
    out.write(reinterpret_cast<const char*>(p->data.data()), static_cast<std::streamsize>(p->size() * sizeof(S)));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

/// Parsed checkpoint: metadata (without tensors/digest), verified digest and tensors.
template <typename S>
struct CheckpointContents {
  nlohmann::json meta;
  std::string digest;
  std::vector<Tensor<S>> tensors;
};

namespace detail {

template <typename FileS, typename S>
std::vector<Tensor<S>> read_tensors(std::istream& in, const nlohmann::json& specs, const std::string& description,
                                    const std::string& digest, const std::filesystem::path& path) {
  std::vector<Tensor<FileS>> raw;
  for (const auto& t : specs) {
    if (t.at("dtype").get<std::string>() != dtype_name<FileS>())
      throw FormatError("mixed tensor dtypes in " + path.string());
    Tensor<FileS> tensor(t.at("shape").get<typename Tensor<FileS>::Shape>());
    if (tensor.size() != t.at("count").get<std::size_t>()) throw FormatError("tensor shape/count mismatch in " + path.string());
    in.read(reinterpret_cast<char*>(tensor.data.data()), static_cast<std::streamsize>(tensor.size() * sizeof(FileS)));
    if (!in) throw FormatError("truncated tensor data in " + path.string());
    raw.push_back(std::move(tensor));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes in checkpoint " + path.string());
  std::vector<const Tensor<FileS>*> ptrs;
  for (const auto& t : raw) ptrs.push_back(&t);
  if (parameter_digest<FileS>(description, ptrs) != digest)
    throw FormatError("checkpoint digest mismatch (corrupt file?): " + path.string());
  std::vector<Tensor<S>> out;
  for (const auto& t : raw) out.push_back(t.template cast<S>());
  return out;
}

}  // namespace detail

/// Reads and verifies a checkpoint; parameters are converted to S if stored otherwise.
template <typename S>
CheckpointContents<S> read_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("checkpoint not found: " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  unsigned char len_bytes[8];
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(len_bytes), 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw FormatError("not a checkpoint file: " + path.string());
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(len_bytes[i]) << (8 * i);
  if (len > (1u << 26)) throw FormatError("corrupt checkpoint header length in " + path.string());
  std::string header(len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(len));
  if (!in) throw FormatError("truncated checkpoint header in " + path.string());

  CheckpointContents<S> out;
  try {
    nlohmann::json meta = nlohmann::json::parse(header);
    out.digest = meta.at("digest").get<std::string>();
    const nlohmann::json specs = meta.at("tensors");
    meta.erase("digest");
    meta.erase("tensors");
    const std::string description = meta.dump();
    out.meta = meta;
    const std::string dtype = specs.empty() ? dtype_name<S>() : specs.front().at("dtype").get<std::string>();
    if (dtype == "f32") {
      out.tensors = detail::read_tensors<float, S>(in, specs, description, out.digest, path);
    } else if (dtype == "f64") {
      out.tensors = detail::read_tensors<double, S>(in, specs, description, out.digest, path);
    } else {
      throw FormatError("unknown dtype '" + dtype + "' in " + path.string());
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("corrupt checkpoint header in " + path.string() + ": " + e.what());
  }
  return out;
}

}  // namespace lfaa::nn
