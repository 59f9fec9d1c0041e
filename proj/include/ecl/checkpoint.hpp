#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ecl/network.hpp"
#include "ecl/proxy.hpp"

namespace ecl {

// Checkpoint file: 8-byte magic, little-endian u64 manifest length, JSON
// manifest (tensor names, shapes, byte offsets into the blob), then one blob
// of little-endian IEEE-754 doubles. Round-trips are bitwise exact.
inline constexpr char kCheckpointMagic[8] = {'E', 'C', 'L', 'C', 'K', 'P', 'T', '1'};

namespace detail {

inline void put_u64_le(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t get_u64_le(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

inline void append_doubles_le(std::string& out, const double* data, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i)
        put_u64_le(out, std::bit_cast<std::uint64_t>(data[i]));
}

struct LoadedTensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;
};

}  // namespace detail

inline std::string checkpoint_bytes(const NetworkParams& params, const ProxyBank& bank) {
    NetworkParams copy = params;
    auto refs = param_tensors(copy);

    nlohmann::ordered_json manifest;
    manifest["format"] = "ecl-checkpoint";
    manifest["version"] = 1;
    auto tensors = nlohmann::ordered_json::array();

    std::string blob;
    auto add = [&](const std::string& name, const double* data, std::size_t count,
                   std::vector<std::size_t> shape) {
        nlohmann::ordered_json t;
        t["name"] = name;
        t["shape"] = shape;
        t["offset"] = blob.size();
        tensors.push_back(std::move(t));
        detail::append_doubles_le(blob, data, count);
    };

    for (const auto& r : refs) add(r.name, r.data, r.size, r.shape);
    for (int c = 0; c < bank.num_classes(); ++c)
        for (std::size_t k = 0; k < bank.proxies[c].rows(); ++k)
            add("proxy/" + std::to_string(c) + "/" + std::to_string(k),
                bank.proxies[c].row(k).data(), bank.proxies[c].cols(), {bank.proxies[c].cols()});

    manifest["tensors"] = std::move(tensors);
    const std::string mtext = manifest.dump();

    std::string out;
    out.append(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::put_u64_le(out, mtext.size());
    out += mtext;
    out += blob;
    return out;
}

inline void save_checkpoint(const std::string& path, const NetworkParams& params,
                            const ProxyBank& bank) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    const std::string bytes = checkpoint_bytes(params, bank);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline std::pair<NetworkParams, ProxyBank> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
        throw std::runtime_error("'" + path + "' is not an ecl checkpoint");

    const auto* base = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::uint64_t mlen = detail::get_u64_le(base + 8);
    if (16 + mlen > bytes.size()) throw std::runtime_error("truncated checkpoint manifest");
    const nlohmann::json manifest = nlohmann::json::parse(bytes.substr(16, mlen));
    const std::size_t blob_start = 16 + mlen;

    std::map<std::string, detail::LoadedTensor> tensors;
    for (const auto& t : manifest.at("tensors")) {
        detail::LoadedTensor lt;
        lt.shape = t.at("shape").get<std::vector<std::size_t>>();
        std::size_t count = 1;
        for (std::size_t s : lt.shape) count *= s;
        const std::size_t off = blob_start + t.at("offset").get<std::size_t>();
        if (off + 8 * count > bytes.size()) throw std::runtime_error("truncated checkpoint blob");
        lt.data.resize(count);
        for (std::size_t i = 0; i < count; ++i)
            lt.data[i] = std::bit_cast<double>(detail::get_u64_le(base + off + 8 * i));
        tensors[t.at("name").get<std::string>()] = std::move(lt);
    }

    auto take_layer = [&tensors](const std::string& name) {
        auto wi = tensors.find(name + "/weight");
        auto bi = tensors.find(name + "/bias");
        if (wi == tensors.end() || bi == tensors.end())
            throw std::runtime_error("checkpoint missing tensor '" + name + "'");
        const auto& ws = wi->second.shape;
        if (ws.size() != 2) throw std::runtime_error("bad weight shape for '" + name + "'");
        DenseLayer l;
        l.weight = Matrix(ws[0], ws[1]);
        std::copy(wi->second.data.begin(), wi->second.data.end(), l.weight.data());
        l.bias = bi->second.data;
        if (l.bias.size() != ws[0]) throw std::runtime_error("bad bias shape for '" + name + "'");
        return l;
    };

    NetworkParams params;
    for (int i = 0;; ++i) {
        const std::string name = "encoder/" + std::to_string(i);
        if (!tensors.count(name + "/weight")) break;
        params.encoder.push_back(take_layer(name));
    }
    if (params.encoder.empty()) throw std::runtime_error("checkpoint has no encoder layers");
    params.proj_hidden = take_layer("proj/hidden");
    params.proj_out = take_layer("proj/out");
    params.classifier = take_layer("classifier");

    // proxy/<class>/<k> rows, contiguous in both indices
    int num_classes = 0;
    while (tensors.count("proxy/" + std::to_string(num_classes) + "/0")) ++num_classes;
    ProxyBank bank;
    const std::size_t d = params.proj_out.out_dim();
    for (int c = 0; c < num_classes; ++c) {
        int rows = 0;
        while (tensors.count("proxy/" + std::to_string(c) + "/" + std::to_string(rows))) ++rows;
        Matrix m(static_cast<std::size_t>(rows), d);
        for (int k = 0; k < rows; ++k) {
            const auto& lt = tensors.at("proxy/" + std::to_string(c) + "/" + std::to_string(k));
            if (lt.data.size() != d) throw std::runtime_error("proxy dim mismatch in checkpoint");
            std::copy(lt.data.begin(), lt.data.end(), m.row(static_cast<std::size_t>(k)).data());
        }
        bank.grad_accum.emplace_back(m.rows(), m.cols());
        bank.proxies.push_back(std::move(m));
    }
    return {std::move(params), std::move(bank)};
}

}  // namespace ecl
