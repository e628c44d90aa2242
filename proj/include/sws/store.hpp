#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sws/tensor.hpp"

namespace sws {

// TensorFile layout (all integers little-endian):
//   "SWS1" | u32 version | u64 header length | JSON header | payload
// The header is {"format_version", "kind", "meta", "tensors": [{name, shape,
// offset, length}]} with sorted keys, padded with spaces so the payload
// starts 8-byte aligned. Offsets are relative to the payload; every tensor
// starts on an 8-byte boundary and holds float32 values. No checksum.

inline constexpr std::uint32_t kTensorFileVersion = 1;
inline constexpr char kTensorFileMagic[4] = {'S', 'W', 'S', '1'};

enum class ArtifactKind { kCheckpoint, kLearngene, kLogitCache };

std::string to_string(ArtifactKind kind);
ArtifactKind parse_kind(const std::string& text);

struct NamedTensor {
    std::string name;
    Shape shape;
    std::vector<float> values;
};

struct TensorFile {
    ArtifactKind kind = ArtifactKind::kCheckpoint;
    nlohmann::json meta = nlohmann::json::object();
    std::vector<NamedTensor> tensors;

    const NamedTensor& at(const std::string& name) const;
    bool contains(const std::string& name) const;
};

std::vector<unsigned char> encode_tensor_file(const TensorFile& file);
TensorFile decode_tensor_file(const std::vector<unsigned char>& bytes, ArtifactKind expected_kind);

/// Written to a temporary sibling and renamed into place.
void save_tensor_file(const std::string& path, const TensorFile& file);
TensorFile load_tensor_file(const std::string& path, ArtifactKind expected_kind);

void write_file_atomic(const std::string& path, const std::vector<unsigned char>& bytes);
void write_text_atomic(const std::string& path, const std::string& text);
std::vector<unsigned char> read_file_bytes(const std::string& path);

/// FNV-1a of a file's bytes, hex encoded.
std::string file_digest(const std::string& path);

}  // namespace sws
