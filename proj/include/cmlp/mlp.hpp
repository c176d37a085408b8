#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmlp/encoding.hpp"
#include "cmlp/ndmath.hpp"

namespace cmlp {

/// Affine map x -> weights * x + bias; weights is fan_out x fan_in.
struct DenseLayer {
    Matrix weights;
    Vector bias;

    int fan_in() const { return static_cast<int>(weights.cols()); }
    int fan_out() const { return static_cast<int>(weights.rows()); }
};

/// ReLU network. Every layer but the last is followed by ReLU; the last is affine.
/// The same shape also carries gradients and Adam moments.
struct MlpParams {
    std::vector<DenseLayer> layers;

    static MlpParams zeros(std::span<const int> sizes);

    int input_dim() const { return layers.front().fan_in(); }
    int output_dim() const { return layers.back().fan_out(); }
    std::size_t hidden_layer_count() const { return layers.size() - 1; }
    std::vector<int> sizes() const;
    std::vector<int> hidden_widths() const;
    int total_hidden() const;
    std::size_t parameter_count() const;
};

using MlpGradient = MlpParams;

/// Layer-major; within a layer the weights row-major, then the bias.
Vector flatten(const MlpParams& p);
MlpParams unflatten(const Vector& flat, std::span<const int> sizes);

enum class InitScheme {
    uniform_fan_in,  // U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases
    uniform_xavier,  // U(-sqrt(6/(fan_in+fan_out)), ...) weights, zero biases
};

std::string to_string(InitScheme scheme);
InitScheme parse_init_scheme(const std::string& text);

/// sizes = {input, hidden..., output}; requires at least one hidden layer.
MlpParams init_mlp(std::span<const int> sizes, std::uint64_t seed,
                   InitScheme scheme = InitScheme::uniform_fan_in);

/// One bit per hidden neuron, layer-major then neuron. Bit set iff preactivation > 0.
class ActivationPattern {
public:
    ActivationPattern() = default;
    explicit ActivationPattern(std::size_t bits) : bits_(bits), words_((bits + 63) / 64, 0) {}

    std::size_t size() const { return bits_; }
    bool operator[](std::size_t i) const { return (words_[i / 64] >> (i % 64)) & 1ULL; }
    void set(std::size_t i, bool on) {
        const std::uint64_t mask = 1ULL << (i % 64);
        if (on) words_[i / 64] |= mask;
        else words_[i / 64] &= ~mask;
    }
    std::span<const std::uint64_t> words() const { return words_; }
    std::size_t count() const;
    std::string to_string() const;

    bool operator==(const ActivationPattern& other) const = default;

private:
    std::size_t bits_ = 0;
    std::vector<std::uint64_t> words_;
};

struct ActivationPatternHash {
    std::size_t operator()(const ActivationPattern& p) const;
};

struct ForwardTrace {
    Vector input;
    std::vector<Vector> preactivations;  // z^l per hidden layer
    std::vector<Vector> hidden;          // relu(z^l)
    Vector output;
    ActivationPattern pattern;
};

ForwardTrace forward(const MlpParams& p, const Eigen::Ref<const Vector>& x);

/// Mean over output channels of the squared residual.
double loss_mse(const Eigen::Ref<const Vector>& pred, const Eigen::Ref<const Vector>& target);

/// Gradient of output_weights . f(x) with respect to every parameter.
MlpGradient backward_from_output(const MlpParams& p, const ForwardTrace& trace,
                                 const Eigen::Ref<const Vector>& output_weights);

/// Gradient of loss_mse(f(x), target); the ReLU derivative at 0 is taken as 0.
MlpGradient backward(const MlpParams& p, const ForwardTrace& trace,
                     const Eigen::Ref<const Vector>& target);

/// Batched evaluation; row b of every matrix belongs to example b.
struct BatchTrace {
    std::vector<Matrix> preactivations;
    std::vector<Matrix> hidden;
    Matrix output;
};

BatchTrace forward_batch(const MlpParams& p, const Eigen::Ref<const Matrix>& inputs);
Matrix predict(const MlpParams& p, const Eigen::Ref<const Matrix>& inputs);

/// Per-example backpropagated signals. deltas[l].row(b) is dLoss_b/dz for layer l
/// (the last entry belongs to the output layer).
std::vector<Matrix> backprop_deltas(const MlpParams& p, const BatchTrace& trace,
                                    const Eigen::Ref<const Matrix>& output_deltas);

/// Mean per-example loss over a dataset at fixed parameters.
double dataset_loss(const MlpParams& p, const EncodedDataset& ds);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    AdamConfig config;
    MlpParams first_moment;
    MlpParams second_moment;
    long step = 0;

    static AdamState for_params(const MlpParams& p, AdamConfig config = {});
};

void adam_step(MlpParams& p, AdamState& state, const MlpGradient& grad);

class DivergenceError : public std::runtime_error {
public:
    DivergenceError(int epoch, double loss)
        : std::runtime_error("training diverged at epoch " + std::to_string(epoch) +
                             " (loss " + std::to_string(loss) + ")"),
          epoch_(epoch) {}
    int epoch() const { return epoch_; }

private:
    int epoch_;
};

struct TrainConfig {
    int epochs = 0;
    int batch_size = 256;
    std::uint64_t shuffle_seed = 0;
    /// Epochs after which the hook fires; 0 means before the first update.
    std::vector<int> snapshot_epochs;
};

using SnapshotHook = std::function<void(int epoch, const MlpParams& snapshot)>;

struct TrainResult {
    MlpParams params;
    AdamState state;
    std::vector<double> loss_curve;  // epoch-mean training loss, one entry per epoch
};

/// Mini-batch Adam. Each epoch reshuffles the raster indices, splits them into
/// batches (the last may be short) and takes one step per batch on the mean
/// per-example gradient.
TrainResult train(const EncodedDataset& ds, MlpParams params, AdamState state,
                  const TrainConfig& config, const SnapshotHook& hook = {});

}  // namespace cmlp
