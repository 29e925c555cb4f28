#include "prospectr/nn.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "json.hpp"
#include "prospectr/errors.hpp"

namespace prospectr {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'P', 'C', 'K', 'P', 'T', '0', '0', '1'};

uint32_t crc_of(const void* p, size_t n) {
    return static_cast<uint32_t>(crc32(0L, static_cast<const Bytef*>(p), static_cast<uInt>(n)));
}

void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                          static_cast<unsigned char>((v >> 8) & 0xFF),
                          static_cast<unsigned char>((v >> 16) & 0xFF),
                          static_cast<unsigned char>((v >> 24) & 0xFF)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw DataError("truncated checkpoint");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

json read_manifest(std::istream& is, const std::string& path) {
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw DataError("not a checkpoint file: " + path);
    const uint32_t hlen = read_u32(is);
    std::string hs(hlen, '\0');
    is.read(hs.data(), hlen);
    if (!is) throw DataError("truncated checkpoint manifest: " + path);
    try {
        return json::parse(hs);
    } catch (const json::exception& e) {
        throw DataError(std::string("bad checkpoint manifest: ") + e.what());
    }
}

}  // namespace

void save_checkpoint(const std::string& path, const std::string& kind,
                     const std::string& arch_json, const nn::ParamList<float>& params,
                     const std::vector<nn::StateRef<float>>& state) {
    json manifest;
    manifest["schema"] = 1;
    manifest["kind"] = kind;
    manifest["arch"] = json::parse(arch_json);
    manifest["tensors"] = json::array();
    for (const auto& p : params) {
        manifest["tensors"].push_back(
            {{"name", p.name},
             {"shape", p.tensor.shape()},
             {"crc", crc_of(p.tensor.data().data(), p.tensor.data().size() * 4)}});
    }
    manifest["state"] = json::array();
    for (const auto& s : state) {
        manifest["state"].push_back(
            {{"name", s.name},
             {"size", s.vec->size()},
             {"crc", crc_of(s.vec->data(), s.vec->size() * 4)}});
    }

    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path);
    const std::string hs = manifest.dump();
    os.write(kMagic, 8);
    write_u32(os, static_cast<uint32_t>(hs.size()));
    os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& p : params)
        os.write(reinterpret_cast<const char*>(p.tensor.data().data()),
                 static_cast<std::streamsize>(p.tensor.data().size() * 4));
    for (const auto& s : state)
        os.write(reinterpret_cast<const char*>(s.vec->data()),
                 static_cast<std::streamsize>(s.vec->size() * 4));
    if (!os) throw DataError("write failed: " + path);
}

void load_checkpoint(const std::string& path, const std::string& kind,
                     const std::string& expected_arch_json, nn::ParamList<float>& params,
                     const std::vector<nn::StateRef<float>>& state) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint: " + path);
    json manifest = read_manifest(is, path);

    if (manifest.value("kind", "") != kind)
        throw ConfigError("checkpoint kind '" + manifest.value("kind", "") +
                          "' does not match expected '" + kind + "'");
    if (manifest.at("arch") != json::parse(expected_arch_json))
        throw ConfigError("checkpoint architecture does not match the configured model");

    const auto& tensors = manifest.at("tensors");
    if (tensors.size() != params.size())
        throw ConfigError("checkpoint tensor count mismatch");
    for (size_t i = 0; i < params.size(); ++i) {
        const auto& meta = tensors[i];
        if (meta.at("name").get<std::string>() != params[i].name)
            throw ConfigError("checkpoint tensor name mismatch at index " + std::to_string(i));
        if (meta.at("shape").get<Shape>() != params[i].tensor.shape())
            throw ConfigError("checkpoint tensor shape mismatch for " + params[i].name);
        auto& data = params[i].tensor.data();
        is.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(data.size() * 4));
        if (!is) throw DataError("truncated checkpoint tensor " + params[i].name);
        if (crc_of(data.data(), data.size() * 4) != meta.at("crc").get<uint32_t>())
            throw DataError("checksum mismatch in checkpoint tensor " + params[i].name);
    }
    const auto& st = manifest.at("state");
    if (st.size() != state.size()) throw ConfigError("checkpoint state count mismatch");
    for (size_t i = 0; i < state.size(); ++i) {
        const auto& meta = st[i];
        if (meta.at("name").get<std::string>() != state[i].name)
            throw ConfigError("checkpoint state name mismatch");
        if (meta.at("size").get<size_t>() != state[i].vec->size())
            throw ConfigError("checkpoint state size mismatch for " + state[i].name);
        is.read(reinterpret_cast<char*>(state[i].vec->data()),
                static_cast<std::streamsize>(state[i].vec->size() * 4));
        if (!is) throw DataError("truncated checkpoint state " + state[i].name);
        if (crc_of(state[i].vec->data(), state[i].vec->size() * 4) !=
            meta.at("crc").get<uint32_t>())
            throw DataError("checksum mismatch in checkpoint state " + state[i].name);
    }
}

std::string checkpoint_arch(const std::string& path, const std::string& kind) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint: " + path);
    json manifest = read_manifest(is, path);
    if (manifest.value("kind", "") != kind)
        throw ConfigError("checkpoint kind '" + manifest.value("kind", "") +
                          "' does not match expected '" + kind + "'");
    return manifest.at("arch").dump();
}

uint64_t params_fingerprint(const nn::ParamList<float>& params) {
    uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a over the raw bytes
    for (const auto& p : params) {
        const unsigned char* bytes =
            reinterpret_cast<const unsigned char*>(p.tensor.data().data());
        for (size_t i = 0; i < p.tensor.data().size() * 4; ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ull;
        }
    }
    return h;
}

}  // namespace prospectr
