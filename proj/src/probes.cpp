#include "cmlp/probes.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <unordered_set>

namespace cmlp {

namespace {

ActivationPattern pattern_from_row(const BatchTrace& trace, Eigen::Index row, std::size_t bits) {
    ActivationPattern pattern(bits);
    std::size_t bit = 0;
    for (const auto& z : trace.preactivations) {
        for (Eigen::Index i = 0; i < z.cols(); ++i) pattern.set(bit++, z(row, i) > 0.0);
    }
    return pattern;
}

}  // namespace

ActivationPattern pattern_of(const MlpParams& p, const Eigen::Ref<const Vector>& x) {
    return forward(p, x).pattern;
}

std::vector<ActivationPattern> patterns_of(const MlpParams& p, const Eigen::Ref<const Matrix>& inputs) {
    const BatchTrace trace = forward_batch(p, inputs);
    const auto bits = static_cast<std::size_t>(p.total_hidden());
    std::vector<ActivationPattern> out;
    out.reserve(static_cast<std::size_t>(inputs.rows()));
    for (Eigen::Index r = 0; r < inputs.rows(); ++r) out.push_back(pattern_from_row(trace, r, bits));
    return out;
}

RegionCensus region_census(const MlpParams& p, const EncodedDataset& ds, std::size_t member_cap) {
    RegionCensus census;
    const auto patterns = patterns_of(p, ds.inputs);
    std::unordered_set<ActivationPattern, ActivationPatternHash> seen;
    for (std::size_t i = 0; i < patterns.size(); ++i) {
        seen.insert(patterns[i]);
        auto it = census.members.find(patterns[i]);
        if (it != census.members.end()) {
            it->second.push_back(i);
        } else if (census.members.size() < member_cap) {
            census.members.emplace(patterns[i], std::vector<std::size_t>{i});
        } else {
            census.members_truncated = true;
        }
    }
    census.unique_pattern_count = seen.size();
    return census;
}

std::size_t hamming(const ActivationPattern& a, const ActivationPattern& b) {
    if (a.size() != b.size()) throw std::invalid_argument("hamming: pattern length mismatch");
    const auto wa = a.words();
    const auto wb = b.words();
    std::size_t d = 0;
    for (std::size_t i = 0; i < wa.size(); ++i) d += static_cast<std::size_t>(std::popcount(wa[i] ^ wb[i]));
    return d;
}

std::vector<IndexPair> neighborhood_pairs(std::span<const Neighborhood> neighborhoods) {
    std::vector<IndexPair> pairs;
    for (const auto& nb : neighborhoods) {
        for (std::size_t a = 0; a < nb.members.size(); ++a) {
            for (std::size_t b = a + 1; b < nb.members.size(); ++b) {
                pairs.emplace_back(nb.members[a], nb.members[b]);
            }
        }
    }
    return pairs;
}

std::optional<double> mean_hamming_local(const MlpParams& p, const EncodedDataset& ds,
                                         std::span<const Neighborhood> neighborhoods) {
    const auto patterns = patterns_of(p, ds.inputs);
    double total = 0.0;
    std::size_t used = 0;
    for (const auto& nb : neighborhoods) {
        if (nb.members.size() < 2) continue;
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t a = 0; a < nb.members.size(); ++a) {
            for (std::size_t b = a + 1; b < nb.members.size(); ++b) {
                sum += static_cast<double>(hamming(patterns.at(nb.members[a]), patterns.at(nb.members[b])));
                ++count;
            }
        }
        total += sum / static_cast<double>(count);
        ++used;
    }
    if (used == 0) return std::nullopt;
    return total / static_cast<double>(used);
}

std::vector<IndexPair> sample_distant_pairs(int width, int height, std::size_t count, int min_sep,
                                            std::uint64_t seed) {
    const auto n = static_cast<std::uint64_t>(width) * static_cast<std::uint64_t>(height);
    if (n < 2) throw std::invalid_argument("sample_distant_pairs: need at least two pixels");
    if (min_sep > std::max(width, height) - 1) {
        throw std::invalid_argument("sample_distant_pairs: min_sep exceeds the grid extent");
    }
    Rng rng(seed);
    std::vector<IndexPair> pairs;
    pairs.reserve(count);
    while (pairs.size() < count) {
        const auto i = static_cast<std::size_t>(rng.below(n));
        const auto j = static_cast<std::size_t>(rng.below(n));
        if (i == j || pixel_chebyshev(i, j, width) < min_sep) continue;
        pairs.emplace_back(i, j);
    }
    return pairs;
}

double mean_hamming_global(const MlpParams& p, const EncodedDataset& ds, std::size_t pairs,
                           int min_sep, std::uint64_t seed) {
    if (pairs == 0) throw std::invalid_argument("mean_hamming_global: pair count must be positive");
    const auto patterns = patterns_of(p, ds.inputs);
    const auto sampled = sample_distant_pairs(ds.width, ds.height, pairs, min_sep, seed);
    double sum = 0.0;
    for (const auto& [i, j] : sampled) sum += static_cast<double>(hamming(patterns[i], patterns[j]));
    return sum / static_cast<double>(sampled.size());
}

Vector per_example_loss_grad(const MlpParams& p, const EncodedDataset& ds, std::size_t index) {
    if (index >= ds.size()) throw std::out_of_range("per_example_loss_grad: index out of range");
    const auto row = static_cast<Eigen::Index>(index);
    const ForwardTrace trace = forward(p, ds.inputs.row(row).transpose());
    return flatten(backward(p, trace, ds.targets.row(row).transpose()));
}

GradientFactors::GradientFactors(const MlpParams& p, const EncodedDataset& ds) {
    const BatchTrace trace = forward_batch(p, ds.inputs);
    const double channels = ds.output_dim();
    const Matrix d_out = (trace.output - ds.targets) * (2.0 / channels);
    deltas_ = backprop_deltas(p, trace, d_out);
    layer_inputs_.reserve(p.layers.size());
    layer_inputs_.push_back(ds.inputs);
    for (std::size_t l = 0; l + 1 < p.layers.size(); ++l) layer_inputs_.push_back(trace.hidden[l]);
    norms_sq_.resize(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) norms_sq_[i] = inner(i, i);
}

double GradientFactors::inner(std::size_t i, std::size_t j) const {
    const auto a = static_cast<Eigen::Index>(i);
    const auto b = static_cast<Eigen::Index>(j);
    double total = 0.0;
    for (std::size_t l = 0; l < deltas_.size(); ++l) {
        const double dd = deltas_[l].row(a).dot(deltas_[l].row(b));
        if (dd == 0.0) continue;
        total += dd * (layer_inputs_[l].row(a).dot(layer_inputs_[l].row(b)) + 1.0);
    }
    return total;
}

std::string to_string(ConfusionScope scope) {
    return scope == ConfusionScope::local ? "local" : "global";
}

ConfusionReport confusion_report(const GradientFactors& grads, ConfusionScope scope,
                                 std::span<const IndexPair> pairs) {
    ConfusionReport report;
    report.scope = scope;
    report.min_inner_product = std::numeric_limits<double>::infinity();
    report.min_cosine = std::numeric_limits<double>::infinity();
    double cos_sum = 0.0;
    constexpr double kMinNormSq = kDegenerateNorm * kDegenerateNorm;
    for (const auto& [i, j] : pairs) {
        if (i == j) {
            ++report.skipped_self_pairs;
            continue;
        }
        const double ni = grads.squared_norm(i);
        const double nj = grads.squared_norm(j);
        if (ni < kMinNormSq || nj < kMinNormSq) {
            ++report.skipped_zero_grad;
            continue;
        }
        const double ip = grads.inner(i, j);
        const double c = std::clamp(ip / std::sqrt(ni * nj), -1.0, 1.0);
        const int bin = std::min(kConfusionBins - 1, static_cast<int>((c + 1.0) * 0.5 * kConfusionBins));
        ++report.cosine_histogram[static_cast<std::size_t>(bin)];
        cos_sum += c;
        report.min_inner_product = std::min(report.min_inner_product, ip);
        report.min_cosine = std::min(report.min_cosine, c);
        ++report.pair_count;
    }
    if (report.pair_count == 0) {
        throw EmptyReportError("confusion_report: no usable pairs (" +
                               std::to_string(report.skipped_zero_grad) + " zero-gradient, " +
                               std::to_string(report.skipped_self_pairs) + " self pairs)");
    }
    report.mean_cosine = cos_sum / static_cast<double>(report.pair_count);
    report.bound_eta = std::max(0.0, -report.min_inner_product);
    report.bound_eta_cosine = std::max(0.0, -report.min_cosine);
    return report;
}

ConfusionReport confusion_report(const MlpParams& p, const EncodedDataset& ds, ConfusionScope scope,
                                 std::span<const IndexPair> pairs) {
    return confusion_report(GradientFactors(p, ds), scope, pairs);
}

HyperplaneSimilarity hyperplane_normal_similarity(const MlpParams& p, std::size_t layer) {
    if (layer >= p.layers.size()) throw std::out_of_range("hyperplane_normal_similarity: bad layer");
    const Matrix& w = p.layers[layer].weights;
    Matrix unit = w;
    for (Eigen::Index r = 0; r < unit.rows(); ++r) {
        const double n = unit.row(r).norm();
        if (n < kDegenerateNorm) unit.row(r).setZero();
        else unit.row(r) /= n;
    }
    HyperplaneSimilarity out;
    out.cosines = (unit * unit.transpose()).cwiseMax(-1.0).cwiseMin(1.0);
    const auto n = out.cosines.rows();
    if (n > 1) {
        const double offdiag = out.cosines.cwiseAbs().sum() - out.cosines.diagonal().cwiseAbs().sum();
        out.mean_abs_offdiag = offdiag / static_cast<double>(n * (n - 1));
    }
    return out;
}

namespace {

// Walks the hidden layers keeping the Jacobian of the current layer's
// preactivations with respect to the network input.
double boundary_distance_impl(const MlpParams& p, const Eigen::Ref<const Vector>& x,
                              BoundaryMode mode, bool& any_neuron) {
    double best = std::numeric_limits<double>::infinity();
    Matrix jac = p.layers[0].weights;
    Vector a = x;
    const std::size_t hidden = mode == BoundaryMode::first_layer ? 1 : p.hidden_layer_count();
    for (std::size_t l = 0; l < hidden; ++l) {
        const Vector z = p.layers[l].weights * a + p.layers[l].bias;
        if (l > 0) jac = p.layers[l].weights * jac;
        for (Eigen::Index i = 0; i < z.size(); ++i) {
            const double g = jac.row(i).norm();
            if (g < kDegenerateNorm) continue;
            any_neuron = true;
            best = std::min(best, std::abs(z[i]) / g);
        }
        a = z.cwiseMax(0.0);
        for (Eigen::Index i = 0; i < z.size(); ++i) {
            if (!(z[i] > 0.0)) jac.row(i).setZero();
        }
    }
    return best;
}

}  // namespace

double boundary_distance(const MlpParams& p, const Eigen::Ref<const Vector>& x, BoundaryMode mode) {
    if (x.size() != p.input_dim()) throw std::invalid_argument("boundary_distance: dimension mismatch");
    bool any = false;
    const double d = boundary_distance_impl(p, x, mode, any);
    if (!any) throw DegenerateGeometryError("boundary_distance: every neuron has zero input gradient");
    return d;
}

double mean_boundary_distance(const MlpParams& p, const EncodedDataset& ds, BoundaryMode mode) {
    if (ds.size() == 0) throw std::invalid_argument("mean_boundary_distance: empty dataset");
    double sum = 0.0;
    for (Eigen::Index r = 0; r < ds.inputs.rows(); ++r) {
        sum += boundary_distance(p, ds.inputs.row(r).transpose(), mode);
    }
    return sum / static_cast<double>(ds.size());
}

SpectralNormReport spectral_norm_product(const MlpParams& p, const PowerIterationOptions& options) {
    SpectralNormReport report;
    for (const auto& layer : p.layers) {
        const double s = spectral_norm(layer.weights, options);
        report.layer_norms.push_back(s);
        report.product *= s;
    }
    return report;
}

std::vector<std::size_t> dead_relu_per_layer(const MlpParams& p, const EncodedDataset& ds) {
    const BatchTrace trace = forward_batch(p, ds.inputs);
    std::vector<std::size_t> dead;
    for (const auto& z : trace.preactivations) {
        std::size_t count = 0;
        for (Eigen::Index i = 0; i < z.cols(); ++i) {
            if (z.rows() == 0 || z.col(i).maxCoeff() <= 0.0) ++count;
        }
        dead.push_back(count);
    }
    return dead;
}

std::size_t dead_relu_count(const MlpParams& p, const EncodedDataset& ds) {
    std::size_t total = 0;
    for (auto n : dead_relu_per_layer(p, ds)) total += n;
    return total;
}

std::string to_string(SlicePlane plane) { return plane == SlicePlane::low ? "low" : "high"; }

LabelImage region_slice_2d(const MlpParams& p, const EncodingConfig& cfg, SlicePlane plane,
                           double extent, int resolution) {
    if (cfg.kind == EncodingKind::identity) {
        throw UnsupportedConfigError("region_slice_2d: requires an encoded (non-identity) input space");
    }
    if (resolution < 2) throw std::invalid_argument("region_slice_2d: resolution must be >= 2");
    if (!(extent > 0.0)) throw std::invalid_argument("region_slice_2d: extent must be positive");
    if (cfg.output_dim(2) != p.input_dim()) {
        throw std::invalid_argument("region_slice_2d: encoding does not match network input");
    }
    const int level = plane == SlicePlane::low ? 0 : cfg.max_level;
    const Eigen::Index ax = cfg.sin_index(0, level);
    const Eigen::Index ay = cfg.sin_index(1, level);
    const Eigen::Index n = static_cast<Eigen::Index>(resolution) * resolution;
    Matrix inputs = Matrix::Zero(n, p.input_dim());
    for (int r = 0; r < resolution; ++r) {
        for (int c = 0; c < resolution; ++c) {
            const Eigen::Index k = static_cast<Eigen::Index>(r) * resolution + c;
            inputs(k, ax) = -extent + 2.0 * extent * c / (resolution - 1);
            inputs(k, ay) = -extent + 2.0 * extent * r / (resolution - 1);
        }
    }
    const auto patterns = patterns_of(p, inputs);
    LabelImage image;
    image.width = resolution;
    image.height = resolution;
    image.labels.resize(static_cast<std::size_t>(n));
    std::unordered_map<ActivationPattern, std::uint32_t, ActivationPatternHash> ids;
    for (std::size_t k = 0; k < patterns.size(); ++k) {
        auto [it, inserted] = ids.emplace(patterns[k], static_cast<std::uint32_t>(ids.size()));
        image.labels[k] = it->second;
    }
    image.label_count = ids.size();
    return image;
}

LabelImage canonical_labels(const LabelImage& image) {
    LabelImage out = image;
    std::unordered_map<std::uint32_t, std::uint32_t> remap;
    for (auto& label : out.labels) {
        auto [it, inserted] = remap.emplace(label, static_cast<std::uint32_t>(remap.size()));
        label = it->second;
    }
    out.label_count = remap.size();
    return out;
}

std::size_t Bitmap::marked_count() const {
    return static_cast<std::size_t>(std::count(marked.begin(), marked.end(), std::uint8_t{1}));
}

Bitmap hyperplane_render_2d(const MlpParams& p, const CoordinateGrid& grid, const EncodingConfig& cfg) {
    if (cfg.output_dim(2) != p.input_dim()) {
        throw std::invalid_argument("hyperplane_render_2d: encoding does not match network input");
    }
    const auto& first = p.layers.front();
    Matrix inputs(grid.points.rows(), p.input_dim());
    for (Eigen::Index k = 0; k < grid.points.rows(); ++k) {
        inputs.row(k) = encode(grid.points.row(k).transpose(), cfg).transpose();
    }
    Matrix z = inputs * first.weights.transpose();
    z.rowwise() += first.bias.transpose();

    std::vector<ActivationPattern> signs;
    signs.reserve(static_cast<std::size_t>(z.rows()));
    for (Eigen::Index k = 0; k < z.rows(); ++k) {
        ActivationPattern s(static_cast<std::size_t>(z.cols()));
        for (Eigen::Index i = 0; i < z.cols(); ++i) s.set(static_cast<std::size_t>(i), z(k, i) > 0.0);
        signs.push_back(std::move(s));
    }
    Bitmap bmp;
    bmp.width = grid.width;
    bmp.height = grid.height;
    bmp.marked.assign(grid.size(), 0);
    const int w = grid.width;
    const int h = grid.height;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t k = static_cast<std::size_t>(y) * w + x;
            auto differs = [&](int nx, int ny) {
                if (nx < 0 || ny < 0 || nx >= w || ny >= h) return false;
                return !(signs[k] == signs[static_cast<std::size_t>(ny) * w + nx]);
            };
            if (differs(x - 1, y) || differs(x + 1, y) || differs(x, y - 1) || differs(x, y + 1)) {
                bmp.marked[k] = 1;
            }
        }
    }
    return bmp;
}

HaninBound hanin_bound(std::size_t neurons, std::size_t input_dim, double t) {
    if (neurons == 0 || input_dim == 0 || !(t > 0.0)) {
        throw std::invalid_argument("hanin_bound: neurons, input_dim and T must be positive");
    }
    const double tn = t * static_cast<double>(neurons);
    const double n = static_cast<double>(input_dim);
    HaninBound out;
    out.log_value = n * std::log(tn) - std::lgamma(n + 1.0);
    if (input_dim <= 20) {
        double v = 1.0;
        for (std::size_t k = 1; k <= input_dim; ++k) v *= tn / static_cast<double>(k);
        out.value = v;
    } else {
        out.value = std::exp(out.log_value);
    }
    return out;
}

}  // namespace cmlp
