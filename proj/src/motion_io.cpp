#include "hoi/motion_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "hoi/error.hpp"

namespace hoi {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void put_u32(std::string& buf, std::uint32_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
    buf.push_back(static_cast<char>((v >> 16) & 0xff));
    buf.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open '" + path + "' for reading");
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void spit(const std::string& path, const std::string& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open '" + path + "' for writing");
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw io_error("short write to '" + path + "'");
}

struct BinReader {
    std::string data;
    std::string path;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (data.size() - pos < n) {
            throw format_error(path + ": truncated at offset " + std::to_string(pos) + " (need " +
                               std::to_string(n) + " more bytes, have " +
                               std::to_string(data.size() - pos) + ")");
        }
    }

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i)
            v = (v << 8) | static_cast<std::uint8_t>(data[pos + static_cast<std::size_t>(i)]);
        pos += 4;
        return v;
    }

    float f32() { return std::bit_cast<float>(u32()); }

    void expect_magic(const char* magic) {
        need(4);
        if (std::memcmp(data.data(), magic, 4) != 0) {
            throw format_error(path + ": bad magic at offset 0 (expected \"" + magic + "\")");
        }
        pos += 4;
    }

    void expect_version(std::uint32_t v) {
        const std::uint32_t got = u32();
        if (got != v) {
            throw format_error(path + ": unsupported version " + std::to_string(got) +
                               " at offset 4");
        }
    }

    void expect_end() const {
        if (pos != data.size()) {
            throw format_error(path + ": " + std::to_string(data.size() - pos) +
                               " trailing bytes at offset " + std::to_string(pos));
        }
    }
};

}  // namespace

void write_motion(const std::string& path, const MotionSequence& motion) {
    if (motion.rank() != 2) {
        throw shape_error("motion must be rank-2 to serialize, got " + shape_str(motion.dims));
    }
    std::string buf;
    buf.append("HOIM", 4);
    put_u32(buf, 1);
    put_u32(buf, static_cast<std::uint32_t>(motion.dim(0)));
    put_u32(buf, static_cast<std::uint32_t>(motion.dim(1)));
    for (float v : motion.data) put_u32(buf, std::bit_cast<std::uint32_t>(v));
    spit(path, buf);
}

MotionSequence read_motion(const std::string& path) {
    BinReader r{slurp(path), path};
    r.expect_magic("HOIM");
    r.expect_version(1);
    const std::uint32_t l = r.u32();
    const std::uint32_t d = r.u32();
    if (l == 0 || d == 0) throw format_error(path + ": zero dimension in header");
    r.need(static_cast<std::size_t>(l) * d * 4);
    MotionSequence m({static_cast<int>(l), static_cast<int>(d)});
    for (auto& v : m.data) v = r.f32();
    r.expect_end();
    return m;
}

void write_pointcloud(const std::string& path, const ObjectPointCloud& cloud) {
    std::string buf;
    buf.append("HOIP", 4);
    put_u32(buf, 1);
    put_u32(buf, static_cast<std::uint32_t>(cloud.count()));
    for (float v : cloud.points.data) put_u32(buf, std::bit_cast<std::uint32_t>(v));
    spit(path, buf);
}

ObjectPointCloud read_pointcloud(const std::string& path) {
    BinReader r{slurp(path), path};
    r.expect_magic("HOIP");
    r.expect_version(1);
    const std::uint32_t n = r.u32();
    if (n == 0) throw format_error(path + ": zero point count in header");
    r.need(static_cast<std::size_t>(n) * 12);
    ObjectPointCloud cloud;
    cloud.points = Tensor<float>({static_cast<int>(n), 3});
    for (auto& v : cloud.points.data) v = r.f32();
    r.expect_end();
    return cloud;
}

void write_manifest(const std::string& path, const DatasetManifest& manifest) {
    json arr = json::array();
    for (const auto& e : manifest.entries) {
        arr.push_back({{"id", e.id},
                       {"caption", e.caption},
                       {"human_path", e.human_path},
                       {"object_path", e.object_path},
                       {"points_path", e.points_path}});
    }
    spit(path, arr.dump(2) + "\n");
}

DatasetManifest read_manifest(const std::string& path, Split split) {
    json arr;
    try {
        arr = json::parse(slurp(path));
    } catch (const json::exception& e) {
        throw format_error(path + ": invalid JSON (" + e.what() + ")");
    }
    if (!arr.is_array()) throw format_error(path + ": manifest must be a JSON array");
    DatasetManifest m;
    m.split = split;
    std::set<std::string> ids;
    for (const auto& item : arr) {
        ManifestEntry e;
        try {
            e.id = item.at("id").get<std::string>();
            e.caption = item.at("caption").get<std::string>();
            e.human_path = item.at("human_path").get<std::string>();
            e.object_path = item.at("object_path").get<std::string>();
            e.points_path = item.at("points_path").get<std::string>();
        } catch (const json::exception& ex) {
            throw format_error(path + ": bad manifest entry (" + ex.what() + ")");
        }
        if (!ids.insert(e.id).second) {
            throw format_error(path + ": duplicate sample id '" + e.id + "'");
        }
        m.entries.push_back(std::move(e));
    }
    return m;
}

std::vector<HOISample> load_samples(const std::string& manifest_path, Split split) {
    const DatasetManifest manifest = read_manifest(manifest_path, split);
    const fs::path base = fs::path(manifest_path).parent_path();
    std::vector<HOISample> samples;
    samples.reserve(manifest.entries.size());
    for (const auto& e : manifest.entries) {
        HOISample s;
        s.id = e.id;
        s.caption = e.caption;
        s.human.frames = read_motion((base / e.human_path).string());
        s.object.frames = read_motion((base / e.object_path).string());
        s.points = read_pointcloud((base / e.points_path).string());
        s.contact_mask.assign(static_cast<std::size_t>(s.human.length()), 0);
        samples.push_back(std::move(s));
    }
    return samples;
}

}  // namespace hoi
