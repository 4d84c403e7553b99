#pragma once

#include <string>
#include <vector>

#include "uniscale/nncore/tensor.hpp"

namespace uniscale::nncore {

struct NamedTensor {
    std::string name;
    Tensor value;
};

// Writes <path_prefix>.bin (concatenated float64 payloads, little-endian) and
// <path_prefix>.json (manifest: format version plus name/shape/offset per
// tensor, offsets counted in elements). Order in the vector is preserved.
void save_checkpoint(const std::string& path_prefix, const std::vector<NamedTensor>& tensors);

// Reads a checkpoint pair written by save_checkpoint. Throws std::runtime_error
// on missing files, version mismatch, or payload/manifest disagreement.
std::vector<NamedTensor> load_checkpoint(const std::string& path_prefix);

}  // namespace uniscale::nncore
