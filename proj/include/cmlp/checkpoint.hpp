#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cmlp/mlp.hpp"

namespace cmlp {

/// Everything needed to rebuild a network from its flat parameter file.
struct CheckpointMeta {
    std::vector<int> sizes;
    std::uint64_t seed = 0;
    std::string init_scheme = "uniform_fan_in";
    AdamConfig adam;
    long adam_step = 0;
    int epoch = 0;
};

/// Parameters as a flat little-endian float64 array in `flatten` order.
std::vector<std::uint8_t> params_to_bytes(const MlpParams& p);
MlpParams params_from_bytes(const std::vector<std::uint8_t>& bytes, const std::vector<int>& sizes);

/// Writes `path` (raw doubles) and `path` + ".json" (sidecar).
void save_checkpoint(const std::filesystem::path& path, const MlpParams& p, const CheckpointMeta& meta);

struct Checkpoint {
    MlpParams params;
    CheckpointMeta meta;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Dense matrix as raw little-endian float64 (row-major) plus a JSON sidecar.
void save_matrix(const std::filesystem::path& path, const Matrix& m);
Matrix load_matrix(const std::filesystem::path& path);

std::filesystem::path sidecar_path(const std::filesystem::path& path);

}  // namespace cmlp
