#include "hoi/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "hoi/error.hpp"

namespace hoi {

namespace {

constexpr char kMagic[4] = {'H', 'O', 'I', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& buf, std::uint32_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
    buf.push_back(static_cast<char>((v >> 16) & 0xff));
    buf.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f32(std::string& buf, float v) {
    put_u32(buf, std::bit_cast<std::uint32_t>(v));
}

class Reader {
public:
    Reader(std::string data, std::string path)
        : data_(std::move(data)), path_(std::move(path)) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i)
            v = (v << 8) | static_cast<std::uint8_t>(data_[pos_ + static_cast<std::size_t>(i)]);
        pos_ += 4;
        return v;
    }

    float f32() { return std::bit_cast<float>(u32()); }

    std::string bytes(std::size_t n) {
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }

    void need(std::size_t n) {
        if (data_.size() - pos_ < n) {
            throw format_error(path_ + ": truncated at offset " + std::to_string(pos_) +
                               " (need " + std::to_string(n) + " more bytes, have " +
                               std::to_string(data_.size() - pos_) + ")");
        }
    }

private:
    std::string data_;
    std::string path_;
    std::size_t pos_ = 0;
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open '" + path + "' for reading");
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return data;
}

}  // namespace

void write_checkpoint(const std::string& path, const Checkpoint& entries) {
    std::string buf;
    buf.append(kMagic, 4);
    put_u32(buf, kVersion);
    put_u32(buf, static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
        put_u32(buf, static_cast<std::uint32_t>(e.name.size()));
        buf += e.name;
        put_u32(buf, static_cast<std::uint32_t>(e.dims.size()));
        std::int64_t n = 1;
        for (int d : e.dims) {
            put_u32(buf, static_cast<std::uint32_t>(d));
            n *= d;
        }
        if (n != static_cast<std::int64_t>(e.data.size())) {
            throw shape_error("checkpoint entry '" + e.name + "': " +
                              std::to_string(e.data.size()) + " values for shape " +
                              shape_str(e.dims));
        }
        for (float v : e.data) put_f32(buf, v);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open '" + path + "' for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw io_error("short write to '" + path + "'");
}

Checkpoint read_checkpoint(const std::string& path) {
    Reader r(slurp(path), path);
    const std::string magic = r.bytes(4);
    if (std::memcmp(magic.data(), kMagic, 4) != 0) {
        throw format_error(path + ": bad magic at offset 0 (expected \"HOIT\")");
    }
    const std::uint32_t version = r.u32();
    if (version != kVersion) {
        throw format_error(path + ": unsupported version " + std::to_string(version) +
                           " at offset 4");
    }
    const std::uint32_t count = r.u32();
    Checkpoint entries;
    entries.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        CheckpointEntry e;
        const std::uint32_t name_len = r.u32();
        e.name = r.bytes(name_len);
        const std::uint32_t rank = r.u32();
        std::int64_t n = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            const std::uint32_t extent = r.u32();
            if (extent == 0) {
                throw format_error(path + ": zero extent in entry '" + e.name + "' at offset " +
                                   std::to_string(r.pos() - 4));
            }
            e.dims.push_back(static_cast<int>(extent));
            n *= extent;
        }
        r.need(static_cast<std::size_t>(n) * 4);
        e.data.resize(static_cast<std::size_t>(n));
        for (std::int64_t j = 0; j < n; ++j) e.data[static_cast<std::size_t>(j)] = r.f32();
        entries.push_back(std::move(e));
    }
    if (r.remaining() != 0) {
        throw format_error(path + ": " + std::to_string(r.remaining()) +
                           " trailing bytes at offset " + std::to_string(r.pos()));
    }
    return entries;
}

const CheckpointEntry* find_entry(const Checkpoint& ck, const std::string& name) {
    for (const auto& e : ck) {
        if (e.name == name) return &e;
    }
    return nullptr;
}

}  // namespace hoi
