#include "sted/serialize.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "sted/errors.hpp"

namespace sted::serialize {

void save_checkpoint(const std::string& base, const ParamMap& pm, const std::string& config_hash,
                     const std::map<std::string, std::string>& extra) {
    std::ofstream bin(base + ".bin", std::ios::binary);
    if (!bin) throw FormatError("cannot open for write: " + base + ".bin");
    nlohmann::json manifest;
    manifest["format"] = "sted-checkpoint-v1";
    manifest["config_hash"] = config_hash;
    for (const auto& [k, v] : extra) manifest["extra"][k] = v;
    nlohmann::json tensors = nlohmann::json::array();
    uint64_t offset = 0;
    for (const auto& [name, var] : pm.params) {
        const Tensor& t = var.val();
        nlohmann::json entry;
        entry["name"] = name;
        entry["shape"] = t.shape();
        entry["dtype"] = "float64";
        entry["offset"] = offset;
        tensors.push_back(entry);
        bin.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(t.numel() * sizeof(double)));
        offset += static_cast<uint64_t>(t.numel()) * sizeof(double);
    }
    manifest["tensors"] = tensors;
    std::ofstream js(base + ".json");
    if (!js) throw FormatError("cannot open for write: " + base + ".json");
    js << manifest.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& base) {
    std::ifstream js(base + ".json");
    if (!js) throw FormatError("missing checkpoint manifest: " + base + ".json");
    nlohmann::json manifest;
    try {
        js >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad checkpoint manifest: " + std::string(e.what()));
    }
    if (manifest.value("format", "") != "sted-checkpoint-v1")
        throw FormatError("unknown checkpoint format in " + base + ".json");
    std::ifstream bin(base + ".bin", std::ios::binary);
    if (!bin) throw FormatError("missing checkpoint payload: " + base + ".bin");
    std::string blob((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());

    Checkpoint ck;
    ck.config_hash = manifest.value("config_hash", "");
    if (manifest.contains("extra"))
        for (auto& [k, v] : manifest["extra"].items()) ck.extra[k] = v.get<std::string>();
    for (const auto& entry : manifest.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
        const std::string dtype = entry.value("dtype", "float64");
        const uint64_t offset = entry.at("offset").get<uint64_t>();
        Tensor t(shape);
        const size_t elem = dtype == "float64" ? sizeof(double)
                          : dtype == "float32" ? sizeof(float)
                                               : 0;
        if (elem == 0) throw FormatError("unsupported dtype " + dtype + " in checkpoint");
        const size_t bytes = static_cast<size_t>(t.numel()) * elem;
        if (offset + bytes > blob.size()) throw FormatError("checkpoint payload truncated");
        if (dtype == "float64") {
            std::memcpy(t.data(), blob.data() + offset, bytes);
        } else {
            const float* src = reinterpret_cast<const float*>(blob.data() + offset);
            for (int64_t i = 0; i < t.numel(); ++i) t[i] = src[i];
        }
        ck.tensors.emplace(name, std::move(t));
    }
    return ck;
}

void assign_params(ParamMap& pm, const Checkpoint& ck) {
    for (auto& [name, var] : pm.params) {
        auto it = ck.tensors.find(name);
        if (it == ck.tensors.end()) throw FormatError("checkpoint missing tensor: " + name);
        if (!(it->second.same_shape(var.val())))
            throw FormatError("checkpoint shape mismatch for " + name);
        var.val() = it->second;
    }
}

std::string fnv1a_hex(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace sted::serialize
