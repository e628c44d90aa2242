#include "sws/store.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include <unistd.h>

#include "sws/error.hpp"
#include "sws/rng.hpp"

namespace sws {

namespace {

constexpr std::size_t kPrefix = 16;

std::size_t align8(std::size_t n) { return (n + 7) & ~std::size_t{7}; }

void put_le(std::vector<unsigned char>& out, std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

std::uint64_t get_le(const std::vector<unsigned char>& in, std::size_t offset, int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= std::uint64_t{in[offset + static_cast<std::size_t>(i)]} << (8 * i);
    return v;
}

}  // namespace

std::string to_string(ArtifactKind kind) {
    switch (kind) {
        case ArtifactKind::kCheckpoint: return "checkpoint";
        case ArtifactKind::kLearngene: return "learngene";
        case ArtifactKind::kLogitCache: return "logitcache";
    }
    return "?";
}

ArtifactKind parse_kind(const std::string& text) {
    if (text == "checkpoint") return ArtifactKind::kCheckpoint;
    if (text == "learngene") return ArtifactKind::kLearngene;
    if (text == "logitcache") return ArtifactKind::kLogitCache;
    throw KindError("unknown artifact kind '" + text + "'");
}

const NamedTensor& TensorFile::at(const std::string& name) const {
    for (const auto& t : tensors) {
        if (t.name == name) return t;
    }
    throw FormatError("tensor '" + name + "' missing from " + to_string(kind) + " file");
}

bool TensorFile::contains(const std::string& name) const {
    return std::any_of(tensors.begin(), tensors.end(), [&](const NamedTensor& t) { return t.name == name; });
}

std::vector<unsigned char> encode_tensor_file(const TensorFile& file) {
    std::set<std::string> names;
    nlohmann::json index = nlohmann::json::array();
    std::size_t offset = 0;
    for (const auto& t : file.tensors) {
        if (!names.insert(t.name).second) throw ValidationError("duplicate tensor name '" + t.name + "'");
        if (shape_numel(t.shape) != t.values.size()) {
            throw ValidationError("tensor '" + t.name + "' has " + std::to_string(t.values.size()) +
                                  " values for shape " + shape_str(t.shape));
        }
        for (float v : t.values) {
            if (!std::isfinite(v)) throw NumericError("tensor '" + t.name + "' has non-finite values");
        }
        const std::size_t length = t.values.size() * 4;
        index.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}, {"length", length}});
        offset += align8(length);
    }
    nlohmann::json header = {{"format_version", kTensorFileVersion},
                             {"kind", to_string(file.kind)},
                             {"meta", file.meta},
                             {"tensors", index}};
    std::string text = header.dump();
    text.append(align8(kPrefix + text.size()) - kPrefix - text.size(), ' ');

    std::vector<unsigned char> out;
    out.reserve(kPrefix + text.size() + offset);
    out.insert(out.end(), kTensorFileMagic, kTensorFileMagic + 4);
    put_le(out, kTensorFileVersion, 4);
    put_le(out, text.size(), 8);
    out.insert(out.end(), text.begin(), text.end());
    for (const auto& t : file.tensors) {
        for (float v : t.values) {
            std::uint32_t bits;
            std::memcpy(&bits, &v, 4);
            put_le(out, bits, 4);
        }
        out.resize(align8(out.size()), 0);
    }
    return out;
}

TensorFile decode_tensor_file(const std::vector<unsigned char>& bytes, ArtifactKind expected_kind) {
    if (bytes.size() < 4 || !std::equal(kTensorFileMagic, kTensorFileMagic + 4, bytes.begin())) {
        throw BadMagicError("not a TensorFile (bad magic)");
    }
    if (bytes.size() < kPrefix) throw TruncationError("TensorFile prefix truncated");
    const auto version = static_cast<std::uint32_t>(get_le(bytes, 4, 4));
    if (version != kTensorFileVersion) {
        throw VersionError("unsupported TensorFile version " + std::to_string(version));
    }
    const auto header_len = get_le(bytes, 8, 8);
    if (header_len > bytes.size() - kPrefix) throw TruncationError("TensorFile header truncated");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + kPrefix,
                                       bytes.begin() + static_cast<std::ptrdiff_t>(kPrefix + header_len));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("TensorFile header is not valid JSON: ") + e.what());
    }

    TensorFile file;
    try {
        if (header.at("format_version").get<std::uint32_t>() != version) {
            throw VersionError("TensorFile header version disagrees with prefix");
        }
        file.kind = parse_kind(header.at("kind").get<std::string>());
        if (file.kind != expected_kind) {
            throw KindError("expected a " + to_string(expected_kind) + " file, found " + to_string(file.kind));
        }
        file.meta = header.at("meta");

        const std::size_t payload_start = kPrefix + header_len;
        const std::size_t payload_size = bytes.size() - payload_start;
        struct Span {
            std::size_t offset, length;
            std::string name;
        };
        std::vector<Span> spans;
        std::set<std::string> names;
        for (const auto& entry : header.at("tensors")) {
            NamedTensor t;
            t.name = entry.at("name").get<std::string>();
            t.shape = entry.at("shape").get<Shape>();
            const auto offset = entry.at("offset").get<std::size_t>();
            const auto length = entry.at("length").get<std::size_t>();
            if (!names.insert(t.name).second) throw FormatError("duplicate tensor '" + t.name + "'");
            if (length != shape_numel(t.shape) * 4) {
                throw FormatError("tensor '" + t.name + "' length disagrees with its shape");
            }
            if (offset % 8) throw FormatError("tensor '" + t.name + "' is not 8-byte aligned");
            if (offset > payload_size || length > payload_size - offset) {
                throw TruncationError("tensor '" + t.name + "' extends past the end of the file");
            }
            spans.push_back({offset, length, t.name});
            t.values.resize(length / 4);
            for (std::size_t i = 0; i < t.values.size(); ++i) {
                const auto bits = static_cast<std::uint32_t>(get_le(bytes, payload_start + offset + 4 * i, 4));
                std::memcpy(&t.values[i], &bits, 4);
            }
            file.tensors.push_back(std::move(t));
        }
        std::sort(spans.begin(), spans.end(), [](const Span& a, const Span& b) { return a.offset < b.offset; });
        std::size_t end = 0;
        for (std::size_t i = 0; i < spans.size(); ++i) {
            if (i && spans[i].offset < spans[i - 1].offset + spans[i - 1].length) {
                throw OverlapError("tensors '" + spans[i - 1].name + "' and '" + spans[i].name + "' overlap");
            }
            end = std::max(end, align8(spans[i].offset + spans[i].length));
        }
        if (payload_size < end) throw TruncationError("TensorFile payload truncated");
        if (payload_size > end) throw FormatError("TensorFile has trailing bytes after the payload");
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed TensorFile header: ") + e.what());
    }
    return file;
}

void write_file_atomic(const std::string& path, const std::vector<unsigned char>& bytes) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(target.parent_path(), ec);
    }
    const std::string tmp = path + ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp);
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("write failed for " + tmp);
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("cannot publish " + path);
    }
}

void write_text_atomic(const std::string& path, const std::string& text) {
    write_file_atomic(path, std::vector<unsigned char>(text.begin(), text.end()));
}

std::vector<unsigned char> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void save_tensor_file(const std::string& path, const TensorFile& file) {
    write_file_atomic(path, encode_tensor_file(file));
}

TensorFile load_tensor_file(const std::string& path, ArtifactKind expected_kind) {
    return decode_tensor_file(read_file_bytes(path), expected_kind);
}

std::string file_digest(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    Fnv1a h;
    h.update(bytes.data(), bytes.size());
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h.digest()));
    return buf;
}

}  // namespace sws
