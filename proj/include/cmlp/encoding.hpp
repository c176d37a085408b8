#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cmlp/ndmath.hpp"
#include "cmlp/signal.hpp"

namespace cmlp {

enum class EncodingKind { identity, positional, degenerate };

std::string to_string(EncodingKind kind);
EncodingKind parse_encoding_kind(const std::string& text);

/// Coordinate -> network input map.
///
/// positional: for every coordinate component c and level l in 0..max_level,
/// append sin(2^l pi v_c) then cos(2^l pi v_c). Components are the outer loop.
/// degenerate: same layout, but every level uses degenerate_freq * pi.
struct EncodingConfig {
    EncodingKind kind = EncodingKind::identity;
    int max_level = 0;
    double degenerate_freq = 1.0;

    int output_dim(int input_dim = 2) const;
    void validate() const;

    /// Column of sin(freq_l * pi * v_component) in the encoded vector.
    int sin_index(int component, int level) const { return component * 2 * (max_level + 1) + 2 * level; }
};

template <typename Derived>
Vector encode(const Eigen::MatrixBase<Derived>& v, const EncodingConfig& cfg) {
    const int in_dim = static_cast<int>(v.size());
    if (cfg.kind == EncodingKind::identity) return v;
    Vector out(cfg.output_dim(in_dim));
    constexpr double kPi = 3.14159265358979323846;
    Eigen::Index k = 0;
    for (int c = 0; c < in_dim; ++c) {
        for (int level = 0; level <= cfg.max_level; ++level) {
            const double freq = cfg.kind == EncodingKind::positional
                                    ? std::ldexp(1.0, level)
                                    : cfg.degenerate_freq;
            const double arg = freq * kPi * v[c];
            out[k++] = std::sin(arg);
            out[k++] = std::cos(arg);
        }
    }
    return out;
}

/// Network-ready dataset. Row i of `inputs` is the encoded coordinate of raster
/// pixel i, row i of `targets` is that pixel's channels.
struct EncodedDataset {
    int width = 0;
    int height = 0;
    Matrix inputs;
    Matrix targets;

    std::size_t size() const { return static_cast<std::size_t>(inputs.rows()); }
    int input_dim() const { return static_cast<int>(inputs.cols()); }
    int output_dim() const { return static_cast<int>(targets.cols()); }
};

EncodedDataset encode_dataset(const CoordinateGrid& grid, const TargetSignal& signal,
                              const EncodingConfig& cfg);

struct DistanceMatrix {
    std::vector<std::size_t> indices;  // retained raster indices, ascending
    Matrix distances;
};

/// Pairwise Euclidean distances between encoded inputs of a seeded uniform subsample.
DistanceMatrix distance_matrix(const EncodedDataset& ds, std::size_t subsample, std::uint64_t seed);

}  // namespace cmlp
