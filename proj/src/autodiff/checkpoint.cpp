// Copyright (c) 2026, The A2D Authors
// SPDX-License-Identifier: Apache-2.0

#include "a2d/autodiff/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace a2d::ad {

namespace {

constexpr char kMagic[8] = {'A', '2', 'D', 'C', 'K', 'P', 'T', '\0'};

template <typename U>
void put_uint(std::string& out, U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    template <typename U>
    U get_uint() {
        need(sizeof(U));
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) {
            v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += sizeof(U);
        return v;
    }

    std::string get_bytes(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool at_end() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint truncated");
    }
    const std::string& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

const NamedArray* Checkpoint::find(const std::string& path) const {
    for (const auto& e : entries) {
        if (e.path == path) return &e;
    }
    return nullptr;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
    std::string out(kMagic, sizeof(kMagic));
    put_uint<std::uint32_t>(out, kCheckpointVersion);
    put_uint<std::uint64_t>(out, ckpt.metadata.size());
    out += ckpt.metadata;
    put_uint<std::uint64_t>(out, ckpt.entries.size());
    for (const auto& e : ckpt.entries) {
        if (numel_of(e.shape) != e.data.size()) {
            throw CheckpointError("entry '" + e.path + "' has shape " + shape_str(e.shape) + " but " +
                                  std::to_string(e.data.size()) + " values");
        }
        put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(e.path.size()));
        out += e.path;
        put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(e.shape.size()));
        for (auto d : e.shape) put_uint<std::uint64_t>(out, d);
        for (double v : e.data) put_uint<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
    return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
    Reader r(bytes);
    if (r.get_bytes(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
        throw CheckpointError("not an A2D checkpoint (bad magic)");
    }
    const auto version = r.get_uint<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint ckpt;
    ckpt.metadata = r.get_bytes(r.get_uint<std::uint64_t>());
    const auto count = r.get_uint<std::uint64_t>();
    for (std::uint64_t k = 0; k < count; ++k) {
        NamedArray e;
        e.path = r.get_bytes(r.get_uint<std::uint32_t>());
        const auto rank = r.get_uint<std::uint32_t>();
        for (std::uint32_t i = 0; i < rank; ++i) e.shape.push_back(r.get_uint<std::uint64_t>());
        e.data.resize(numel_of(e.shape));
        for (double& v : e.data) v = std::bit_cast<double>(r.get_uint<std::uint64_t>());
        ckpt.entries.push_back(std::move(e));
    }
    if (!r.at_end()) throw CheckpointError("trailing bytes after checkpoint payload");
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& file, const Checkpoint& ckpt) {
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    std::ofstream os(file, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError("cannot open '" + file.string() + "' for writing");
    const std::string bytes = encode_checkpoint(ckpt);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw CheckpointError("write failed for '" + file.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
    std::ifstream is(file, std::ios::binary);
    if (!is) throw CheckpointError("cannot open checkpoint '" + file.string() + "'");
    std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

}  // namespace a2d::ad
