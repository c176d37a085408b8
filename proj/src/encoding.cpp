#include "cmlp/encoding.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace cmlp {

std::string to_string(EncodingKind kind) {
    switch (kind) {
        case EncodingKind::identity: return "identity";
        case EncodingKind::positional: return "positional";
        case EncodingKind::degenerate: return "degenerate";
    }
    return "unknown";
}

EncodingKind parse_encoding_kind(const std::string& text) {
    if (text == "identity") return EncodingKind::identity;
    if (text == "positional") return EncodingKind::positional;
    if (text == "degenerate") return EncodingKind::degenerate;
    throw std::invalid_argument("unknown encoding kind '" + text + "'");
}

int EncodingConfig::output_dim(int input_dim) const {
    if (kind == EncodingKind::identity) return input_dim;
    return 2 * input_dim * (max_level + 1);
}

void EncodingConfig::validate() const {
    if (max_level < 0) throw std::invalid_argument("encoding: max_level must be >= 0");
    if (kind != EncodingKind::identity && max_level > 52) {
        throw std::invalid_argument("encoding: max_level above 52 aliases in double precision");
    }
    if (kind == EncodingKind::degenerate && !std::isfinite(degenerate_freq)) {
        throw std::invalid_argument("encoding: degenerate_freq must be finite");
    }
}

EncodedDataset encode_dataset(const CoordinateGrid& grid, const TargetSignal& signal,
                              const EncodingConfig& cfg) {
    cfg.validate();
    if (grid.width != signal.width || grid.height != signal.height) {
        throw std::invalid_argument("encode_dataset: grid is " + std::to_string(grid.width) + "x" +
                                    std::to_string(grid.height) + " but signal is " +
                                    std::to_string(signal.width) + "x" +
                                    std::to_string(signal.height));
    }
    EncodedDataset ds;
    ds.width = grid.width;
    ds.height = grid.height;
    ds.inputs.resize(grid.points.rows(), cfg.output_dim(2));
    for (Eigen::Index i = 0; i < grid.points.rows(); ++i) {
        ds.inputs.row(i) = encode(grid.points.row(i).transpose(), cfg).transpose();
    }
    ds.targets = signal.pixels;
    return ds;
}

DistanceMatrix distance_matrix(const EncodedDataset& ds, std::size_t subsample, std::uint64_t seed) {
    const std::size_t n = ds.size();
    if (subsample > n) throw std::invalid_argument("distance_matrix: subsample exceeds dataset");
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    Rng rng(seed);
    for (std::size_t i = 0; i < subsample; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(all[i], all[j]);
    }
    DistanceMatrix out;
    out.indices.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(subsample));
    std::sort(out.indices.begin(), out.indices.end());

    const auto m = static_cast<Eigen::Index>(subsample);
    out.distances = Matrix::Zero(m, m);
    for (Eigen::Index a = 0; a < m; ++a) {
        for (Eigen::Index b = a + 1; b < m; ++b) {
            const double d = (ds.inputs.row(static_cast<Eigen::Index>(out.indices[a])) -
                              ds.inputs.row(static_cast<Eigen::Index>(out.indices[b])))
                                 .norm();
            out.distances(a, b) = d;
            out.distances(b, a) = d;
        }
    }
    return out;
}

}  // namespace cmlp
