#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cmlp/encoding.hpp"
#include "cmlp/mlp.hpp"
#include "cmlp/ndmath.hpp"
#include "cmlp/signal.hpp"

namespace cmlp {

class DegenerateGeometryError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class EmptyReportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UnsupportedConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

using IndexPair = std::pair<std::size_t, std::size_t>;

// ---------------------------------------------------------------------------
// Activation patterns and regions

ActivationPattern pattern_of(const MlpParams& p, const Eigen::Ref<const Vector>& x);

/// Patterns of every dataset row, computed in one batched pass.
std::vector<ActivationPattern> patterns_of(const MlpParams& p, const Eigen::Ref<const Matrix>& inputs);

struct RegionCensus {
    int epoch = 0;
    std::size_t unique_pattern_count = 0;
    /// Member indices per pattern, for at most `member_cap` patterns.
    std::unordered_map<ActivationPattern, std::vector<std::size_t>, ActivationPatternHash> members;
    bool members_truncated = false;
};

RegionCensus region_census(const MlpParams& p, const EncodedDataset& ds,
                           std::size_t member_cap = 8192);

std::size_t hamming(const ActivationPattern& a, const ActivationPattern& b);

/// Mean Hamming distance over all unordered pairs inside each neighborhood,
/// averaged over neighborhoods. Empty when no neighborhood holds a pair.
std::optional<double> mean_hamming_local(const MlpParams& p, const EncodedDataset& ds,
                                         std::span<const Neighborhood> neighborhoods);

/// Uniform random pixel pairs with Chebyshev separation >= min_sep (and i != j).
std::vector<IndexPair> sample_distant_pairs(int width, int height, std::size_t count, int min_sep,
                                            std::uint64_t seed);

/// All unordered pairs inside each neighborhood, neighborhood by neighborhood.
std::vector<IndexPair> neighborhood_pairs(std::span<const Neighborhood> neighborhoods);

double mean_hamming_global(const MlpParams& p, const EncodedDataset& ds, std::size_t pairs,
                           int min_sep, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Gradient confusion

/// Flattened gradient (see `flatten`) of the single-example MSE at `index`.
Vector per_example_loss_grad(const MlpParams& p, const EncodedDataset& ds, std::size_t index);

/// Per-example loss gradients in factored form: for layer l the weight gradient
/// is outer(delta_l, input_l) and the bias gradient is delta_l, so
/// <g_i, g_j> = sum_l (delta_l,i . delta_l,j) * (input_l,i . input_l,j + 1).
/// Holds O(N * total width) numbers instead of O(N * parameter count).
class GradientFactors {
public:
    GradientFactors(const MlpParams& p, const EncodedDataset& ds);

    double inner(std::size_t i, std::size_t j) const;
    double squared_norm(std::size_t i) const { return norms_sq_[i]; }
    std::size_t size() const { return norms_sq_.size(); }

private:
    std::vector<Matrix> deltas_;
    std::vector<Matrix> layer_inputs_;
    std::vector<double> norms_sq_;
};

enum class ConfusionScope { local, global };
std::string to_string(ConfusionScope scope);

inline constexpr int kConfusionBins = 64;

struct ConfusionReport {
    int epoch = 0;
    ConfusionScope scope = ConfusionScope::local;
    /// Uniform bins on [-1, 1]; cosine 1 falls in the last bin.
    std::array<std::size_t, kConfusionBins> cosine_histogram{};
    double mean_cosine = 0.0;
    double min_inner_product = 0.0;
    double bound_eta = 0.0;  // max(0, -min_inner_product)
    double min_cosine = 0.0;
    double bound_eta_cosine = 0.0;  // max(0, -min_cosine), the scale-free reading
    std::size_t pair_count = 0;
    std::size_t skipped_zero_grad = 0;
    std::size_t skipped_self_pairs = 0;

    static double bin_edge(int k) { return -1.0 + 2.0 * k / kConfusionBins; }
};

ConfusionReport confusion_report(const GradientFactors& grads, ConfusionScope scope,
                                 std::span<const IndexPair> pairs);
ConfusionReport confusion_report(const MlpParams& p, const EncodedDataset& ds, ConfusionScope scope,
                                 std::span<const IndexPair> pairs);

// ---------------------------------------------------------------------------
// Hyperplane geometry

struct HyperplaneSimilarity {
    Matrix cosines;               // pairwise cosine of weight rows
    double mean_abs_offdiag = 0;  // mean |cosines(i, j)| over i != j
};

/// Zero rows have no direction; their entries are reported as 0.
HyperplaneSimilarity hyperplane_normal_similarity(const MlpParams& p, std::size_t layer);

enum class BoundaryMode {
    local_linear,  // every hidden neuron, gradient through the current linear piece
    first_layer,   // first-layer hyperplanes only
};

/// Distance from x to the nearest neuron boundary: min over hidden neurons of
/// |z(x)| / |grad_x z(x)|, skipping neurons whose input gradient is < 1e-12.
double boundary_distance(const MlpParams& p, const Eigen::Ref<const Vector>& x,
                         BoundaryMode mode = BoundaryMode::local_linear);

double mean_boundary_distance(const MlpParams& p, const EncodedDataset& ds,
                              BoundaryMode mode = BoundaryMode::local_linear);

// ---------------------------------------------------------------------------
// Norms and dead units

struct SpectralNormReport {
    std::vector<double> layer_norms;  // every layer including the output layer
    double product = 1.0;
};

SpectralNormReport spectral_norm_product(const MlpParams& p, const PowerIterationOptions& options = {});

/// Hidden neurons whose preactivation is <= 0 on every dataset input, per layer.
std::vector<std::size_t> dead_relu_per_layer(const MlpParams& p, const EncodedDataset& ds);
std::size_t dead_relu_count(const MlpParams& p, const EncodedDataset& ds);

// ---------------------------------------------------------------------------
// 2D renderings

enum class SlicePlane { low, high };
std::string to_string(SlicePlane plane);

struct LabelImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint32_t> labels;  // raster order, first-seen labelling
    std::size_t label_count = 0;
};

/// Region labels on a resolution x resolution lattice over [-extent, extent]^2
/// spanned by two encoded input axes (sin level 0 for "low", sin level L for
/// "high", one per coordinate); every other input dimension is 0.
LabelImage region_slice_2d(const MlpParams& p, const EncodingConfig& cfg, SlicePlane plane,
                           double extent, int resolution);

/// Relabel in raster first-seen order.
LabelImage canonical_labels(const LabelImage& image);

struct Bitmap {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> marked;  // raster order, 0 or 1

    std::size_t marked_count() const;
};

/// Marks grid pixels where some first-layer neuron changes sign relative to a
/// 4-neighbor, i.e. the first-layer hyperplane arrangement pulled back to
/// coordinate space.
Bitmap hyperplane_render_2d(const MlpParams& p, const CoordinateGrid& grid, const EncodingConfig& cfg);

// ---------------------------------------------------------------------------

struct HaninBound {
    double log_value = 0.0;  // natural log of (T N)^n_in / n_in!
    double value = 0.0;      // +inf when it overflows a double
};

HaninBound hanin_bound(std::size_t neurons, std::size_t input_dim, double t = 1.0);

}  // namespace cmlp
