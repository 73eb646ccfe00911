#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "sted/nn.hpp"
#include "sted/tensor.hpp"

namespace sted::serialize {

// Checkpoint: one .bin blob of concatenated tensors plus a .json manifest
// listing name -> {shape, dtype, offset}. Tensors are written as float64 so
// a save/load round trip preserves parameters bit for bit; float32 payloads
// are accepted on read. `base` is the path without extension.
void save_checkpoint(const std::string& base, const ParamMap& pm,
                     const std::string& config_hash = {},
                     const std::map<std::string, std::string>& extra = {});

struct Checkpoint {
    std::map<std::string, Tensor> tensors;
    std::string config_hash;
    std::map<std::string, std::string> extra;
};

Checkpoint load_checkpoint(const std::string& base);

// Copy loaded tensors into an existing ParamMap (shapes must match).
void assign_params(ParamMap& pm, const Checkpoint& ck);

// FNV-1a hash of a canonical string, hex-encoded. Used as config hash.
std::string fnv1a_hex(const std::string& s);

}  // namespace sted::serialize
