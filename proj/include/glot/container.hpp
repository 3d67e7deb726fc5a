#pragma once

// Single-file binary channel container used for dataset records, checkpoints
// and trajectory exports. A text header names every channel with its dtype
// and shape; the payload is raw little-endian data appended in header order.
//
//   GLOTBIN 1
//   meta {"key": ...}            (optional, single JSON line)
//   channel <name> <f32|f64|i32> <rank> <d0> <d1> ...
//   ...
//   DATA
//   <raw payload>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "glot/core.hpp"

#include <json.hpp>

namespace glot {

struct Channel {
    std::string name;
    std::string dtype;  // "f32", "f64", "i32"
    std::vector<std::int64_t> shape;
    std::vector<double> f64;
    std::vector<float> f32;
    std::vector<std::int32_t> i32;

    std::size_t count() const {
        std::size_t n = 1;
        for (auto d : shape) n *= static_cast<std::size_t>(d);
        return n;
    }

    std::size_t byte_size() const {
        return count() * (dtype == "f64" ? 8 : 4);
    }
};

inline Channel make_f64_channel(std::string name, std::vector<std::int64_t> shape,
                                std::vector<double> data) {
    Channel c;
    c.name = std::move(name);
    c.dtype = "f64";
    c.shape = std::move(shape);
    c.f64 = std::move(data);
    if (c.f64.size() != c.count()) throw ShapeMismatch("channel " + c.name + ": data size");
    return c;
}

inline Channel make_f32_channel(std::string name, std::vector<std::int64_t> shape,
                                std::vector<float> data) {
    Channel c;
    c.name = std::move(name);
    c.dtype = "f32";
    c.shape = std::move(shape);
    c.f32 = std::move(data);
    if (c.f32.size() != c.count()) throw ShapeMismatch("channel " + c.name + ": data size");
    return c;
}

inline Channel make_i32_channel(std::string name, std::vector<std::int64_t> shape,
                                std::vector<std::int32_t> data) {
    Channel c;
    c.name = std::move(name);
    c.dtype = "i32";
    c.shape = std::move(shape);
    c.i32 = std::move(data);
    if (c.i32.size() != c.count()) throw ShapeMismatch("channel " + c.name + ": data size");
    return c;
}

class Container {
public:
    static constexpr int kVersion = 1;

    nlohmann::json meta;

    void add(Channel c) {
        for (const auto& existing : channels_)
            if (existing.name == c.name) throw Error("duplicate channel: " + c.name);
        channels_.push_back(std::move(c));
    }

    bool has(const std::string& name) const {
        for (const auto& c : channels_)
            if (c.name == name) return true;
        return false;
    }

    const Channel& get(const std::string& name) const {
        for (const auto& c : channels_)
            if (c.name == name) return c;
        throw CorruptFile("missing channel: " + name);
    }

    const std::vector<Channel>& channels() const { return channels_; }

    void write(const std::filesystem::path& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw IoError("cannot open for writing: " + path.string());
        f << "GLOTBIN " << kVersion << "\n";
        if (!meta.is_null()) f << "meta " << meta.dump() << "\n";
        for (const auto& c : channels_) {
            f << "channel " << c.name << " " << c.dtype << " " << c.shape.size();
            for (auto d : c.shape) f << " " << d;
            f << "\n";
        }
        f << "DATA\n";
        for (const auto& c : channels_) {
            if (c.dtype == "f64")
                f.write(reinterpret_cast<const char*>(c.f64.data()),
                        static_cast<std::streamsize>(c.f64.size() * sizeof(double)));
            else if (c.dtype == "f32")
                f.write(reinterpret_cast<const char*>(c.f32.data()),
                        static_cast<std::streamsize>(c.f32.size() * sizeof(float)));
            else
                f.write(reinterpret_cast<const char*>(c.i32.data()),
                        static_cast<std::streamsize>(c.i32.size() * sizeof(std::int32_t)));
        }
        if (!f) throw IoError("short write: " + path.string());
    }

    static Container read(const std::filesystem::path& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw IoError("cannot open for reading: " + path.string());
        Container out;
        std::string line;
        if (!std::getline(f, line)) throw CorruptFile(path.string() + ": empty file");
        {
            std::istringstream ss(line);
            std::string magic;
            int version = -1;
            ss >> magic >> version;
            if (magic != "GLOTBIN") throw CorruptFile(path.string() + ": bad magic");
            if (version != kVersion)
                throw VersionMismatch(path.string() + ": container version " + std::to_string(version));
        }
        while (std::getline(f, line)) {
            if (line == "DATA") break;
            std::istringstream ss(line);
            std::string kind;
            ss >> kind;
            if (kind == "meta") {
                std::string rest;
                std::getline(ss, rest);
                try {
                    out.meta = nlohmann::json::parse(rest);
                } catch (const nlohmann::json::exception&) {
                    throw CorruptFile(path.string() + ": bad meta line");
                }
            } else if (kind == "channel") {
                Channel c;
                std::size_t rank = 0;
                ss >> c.name >> c.dtype >> rank;
                if (!ss || (c.dtype != "f32" && c.dtype != "f64" && c.dtype != "i32"))
                    throw CorruptFile(path.string() + ": bad channel line: " + line);
                c.shape.resize(rank);
                for (std::size_t i = 0; i < rank; ++i) {
                    ss >> c.shape[i];
                    if (!ss || c.shape[i] < 0) throw CorruptFile(path.string() + ": bad channel shape");
                }
                out.channels_.push_back(std::move(c));
            } else {
                throw CorruptFile(path.string() + ": unexpected header line: " + line);
            }
        }
        if (line != "DATA") throw CorruptFile(path.string() + ": missing DATA marker");
        for (auto& c : out.channels_) {
            const std::size_t n = c.count();
            if (c.dtype == "f64") {
                c.f64.resize(n);
                f.read(reinterpret_cast<char*>(c.f64.data()), static_cast<std::streamsize>(n * 8));
            } else if (c.dtype == "f32") {
                c.f32.resize(n);
                f.read(reinterpret_cast<char*>(c.f32.data()), static_cast<std::streamsize>(n * 4));
            } else {
                c.i32.resize(n);
                f.read(reinterpret_cast<char*>(c.i32.data()), static_cast<std::streamsize>(n * 4));
            }
            if (static_cast<std::size_t>(f.gcount()) != c.byte_size())
                throw CorruptFile(path.string() + ": truncated payload for channel " + c.name);
        }
        return out;
    }

private:
    std::vector<Channel> channels_;
};

}  // namespace glot
