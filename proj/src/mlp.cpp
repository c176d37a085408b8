#include "cmlp/mlp.hpp"

#include <bit>
#include <cmath>
#include <numeric>

namespace cmlp {

MlpParams MlpParams::zeros(std::span<const int> sizes) {
    if (sizes.size() < 2) throw std::invalid_argument("MlpParams: need input and output sizes");
    MlpParams p;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        if (sizes[l] < 1 || sizes[l + 1] < 1) {
            throw std::invalid_argument("MlpParams: layer sizes must be positive");
        }
        p.layers.push_back({Matrix::Zero(sizes[l + 1], sizes[l]), Vector::Zero(sizes[l + 1])});
    }
    return p;
}

std::vector<int> MlpParams::sizes() const {
    std::vector<int> out{input_dim()};
    for (const auto& layer : layers) out.push_back(layer.fan_out());
    return out;
}

std::vector<int> MlpParams::hidden_widths() const {
    std::vector<int> out;
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) out.push_back(layers[l].fan_out());
    return out;
}

int MlpParams::total_hidden() const {
    const auto widths = hidden_widths();
    return std::accumulate(widths.begin(), widths.end(), 0);
}

std::size_t MlpParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers) {
        n += static_cast<std::size_t>(layer.weights.size() + layer.bias.size());
    }
    return n;
}

Vector flatten(const MlpParams& p) {
    Vector flat(static_cast<Eigen::Index>(p.parameter_count()));
    Eigen::Index k = 0;
    for (const auto& layer : p.layers) {
        const auto nw = layer.weights.size();
        flat.segment(k, nw) = Eigen::Map<const Vector>(layer.weights.data(), nw);
        k += nw;
        flat.segment(k, layer.bias.size()) = layer.bias;
        k += layer.bias.size();
    }
    return flat;
}

MlpParams unflatten(const Vector& flat, std::span<const int> sizes) {
    MlpParams p = MlpParams::zeros(sizes);
    if (static_cast<std::size_t>(flat.size()) != p.parameter_count()) {
        throw std::invalid_argument("unflatten: expected " + std::to_string(p.parameter_count()) +
                                    " values, got " + std::to_string(flat.size()));
    }
    Eigen::Index k = 0;
    for (auto& layer : p.layers) {
        const auto nw = layer.weights.size();
        Eigen::Map<Vector>(layer.weights.data(), nw) = flat.segment(k, nw);
        k += nw;
        layer.bias = flat.segment(k, layer.bias.size());
        k += layer.bias.size();
    }
    return p;
}

std::string to_string(InitScheme scheme) {
    return scheme == InitScheme::uniform_fan_in ? "uniform_fan_in" : "uniform_xavier";
}

InitScheme parse_init_scheme(const std::string& text) {
    if (text == "uniform_fan_in") return InitScheme::uniform_fan_in;
    if (text == "uniform_xavier") return InitScheme::uniform_xavier;
    throw std::invalid_argument("unknown init scheme '" + text + "'");
}

MlpParams init_mlp(std::span<const int> sizes, std::uint64_t seed, InitScheme scheme) {
    if (sizes.size() < 3) throw std::invalid_argument("init_mlp: at least one hidden layer required");
    MlpParams p = MlpParams::zeros(sizes);
    Rng rng(seed);
    for (auto& layer : p.layers) {
        const double fan_in = layer.fan_in();
        const double fan_out = layer.fan_out();
        const double wb = scheme == InitScheme::uniform_fan_in ? 1.0 / std::sqrt(fan_in)
                                                               : std::sqrt(6.0 / (fan_in + fan_out));
        for (Eigen::Index i = 0; i < layer.weights.size(); ++i) {
            layer.weights.data()[i] = rng.uniform(-wb, wb);
        }
        if (scheme == InitScheme::uniform_fan_in) {
            for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = rng.uniform(-wb, wb);
        }
    }
    return p;
}

std::size_t ActivationPattern::count() const {
    std::size_t n = 0;
    for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
    return n;
}

std::string ActivationPattern::to_string() const {
    std::string s(bits_, '0');
    for (std::size_t i = 0; i < bits_; ++i) {
        if ((*this)[i]) s[i] = '1';
    }
    return s;
}

std::size_t ActivationPatternHash::operator()(const ActivationPattern& p) const {
    std::uint64_t h = splitmix64(p.size());
    for (auto w : p.words()) h = splitmix64(h ^ w);
    return static_cast<std::size_t>(h);
}

ForwardTrace forward(const MlpParams& p, const Eigen::Ref<const Vector>& x) {
    if (x.size() != p.input_dim()) {
        throw std::invalid_argument("forward: input has dimension " + std::to_string(x.size()) +
                                    ", network expects " + std::to_string(p.input_dim()));
    }
    ForwardTrace t;
    t.input = x;
    t.pattern = ActivationPattern(static_cast<std::size_t>(p.total_hidden()));
    std::size_t bit = 0;
    Vector a = x;
    for (std::size_t l = 0; l + 1 < p.layers.size(); ++l) {
        Vector z = p.layers[l].weights * a + p.layers[l].bias;
        a = z.cwiseMax(0.0);
        for (Eigen::Index i = 0; i < z.size(); ++i) t.pattern.set(bit++, z[i] > 0.0);
        t.preactivations.push_back(std::move(z));
        t.hidden.push_back(a);
    }
    t.output = p.layers.back().weights * a + p.layers.back().bias;
    return t;
}

double loss_mse(const Eigen::Ref<const Vector>& pred, const Eigen::Ref<const Vector>& target) {
    if (pred.size() != target.size() || pred.size() == 0) {
        throw std::invalid_argument("loss_mse: dimension mismatch");
    }
    return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

MlpGradient backward_from_output(const MlpParams& p, const ForwardTrace& trace,
                                 const Eigen::Ref<const Vector>& output_weights) {
    if (output_weights.size() != p.output_dim()) {
        throw std::invalid_argument("backward: output weight dimension mismatch");
    }
    MlpGradient g = MlpParams::zeros(p.sizes());
    Vector delta = output_weights;
    for (std::size_t l = p.layers.size(); l-- > 0;) {
        const Vector& layer_input = l == 0 ? trace.input : trace.hidden[l - 1];
        g.layers[l].weights.noalias() = delta * layer_input.transpose();
        g.layers[l].bias = delta;
        if (l == 0) break;
        Vector up = p.layers[l].weights.transpose() * delta;
        const Vector& z = trace.preactivations[l - 1];
        for (Eigen::Index i = 0; i < up.size(); ++i) {
            if (!(z[i] > 0.0)) up[i] = 0.0;
        }
        delta = std::move(up);
    }
    return g;
}

MlpGradient backward(const MlpParams& p, const ForwardTrace& trace,
                     const Eigen::Ref<const Vector>& target) {
    if (target.size() != trace.output.size()) {
        throw std::invalid_argument("backward: target dimension mismatch");
    }
    const Vector d_out = (2.0 / static_cast<double>(target.size())) * (trace.output - target);
    return backward_from_output(p, trace, d_out);
}

BatchTrace forward_batch(const MlpParams& p, const Eigen::Ref<const Matrix>& inputs) {
    if (inputs.cols() != p.input_dim()) throw std::invalid_argument("forward_batch: dimension mismatch");
    BatchTrace t;
    const Matrix* a = nullptr;
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        const auto& layer = p.layers[l];
        Matrix z = (l == 0 ? inputs : Eigen::Ref<const Matrix>(*a)) * layer.weights.transpose();
        z.rowwise() += layer.bias.transpose();
        if (l + 1 == p.layers.size()) {
            t.output = std::move(z);
            break;
        }
        t.hidden.push_back(z.cwiseMax(0.0));
        t.preactivations.push_back(std::move(z));
        a = &t.hidden.back();
    }
    return t;
}

Matrix predict(const MlpParams& p, const Eigen::Ref<const Matrix>& inputs) {
    Matrix a = inputs;
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        Matrix z = a * p.layers[l].weights.transpose();
        z.rowwise() += p.layers[l].bias.transpose();
        a = l + 1 == p.layers.size() ? std::move(z) : Matrix(z.cwiseMax(0.0));
    }
    return a;
}

std::vector<Matrix> backprop_deltas(const MlpParams& p, const BatchTrace& trace,
                                    const Eigen::Ref<const Matrix>& output_deltas) {
    std::vector<Matrix> deltas(p.layers.size());
    deltas.back() = output_deltas;
    for (std::size_t l = p.layers.size() - 1; l > 0; --l) {
        Matrix up = deltas[l] * p.layers[l].weights;
        up.array() *= (trace.preactivations[l - 1].array() > 0.0).cast<double>();
        deltas[l - 1] = std::move(up);
    }
    return deltas;
}

double dataset_loss(const MlpParams& p, const EncodedDataset& ds) {
    const Matrix pred = predict(p, ds.inputs);
    return (pred - ds.targets).squaredNorm() / static_cast<double>(ds.targets.size());
}

AdamState AdamState::for_params(const MlpParams& p, AdamConfig config) {
    AdamState s;
    s.config = config;
    s.first_moment = MlpParams::zeros(p.sizes());
    s.second_moment = MlpParams::zeros(p.sizes());
    return s;
}

void adam_step(MlpParams& p, AdamState& state, const MlpGradient& grad) {
    if (grad.sizes() != p.sizes() || state.first_moment.sizes() != p.sizes() ||
        state.second_moment.sizes() != p.sizes()) {
        throw std::invalid_argument("adam_step: shape mismatch");
    }
    ++state.step;
    const auto& c = state.config;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
    auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
        m = c.beta1 * m + (1.0 - c.beta1) * g;
        v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
        param.array() -= c.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.eps);
    };
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        auto& m = state.first_moment.layers[l];
        auto& v = state.second_moment.layers[l];
        update(p.layers[l].weights, m.weights, v.weights, grad.layers[l].weights);
        update(p.layers[l].bias, m.bias, v.bias, grad.layers[l].bias);
    }
}

TrainResult train(const EncodedDataset& ds, MlpParams params, AdamState state,
                  const TrainConfig& config, const SnapshotHook& hook) {
    const auto n = static_cast<Eigen::Index>(ds.size());
    if (config.epochs < 0) throw std::invalid_argument("train: negative epoch count");
    if (config.batch_size < 1 || config.batch_size > n) {
        throw std::invalid_argument("train: batch size must lie in [1, dataset size]");
    }
    if (ds.input_dim() != params.input_dim() || ds.output_dim() != params.output_dim()) {
        throw std::invalid_argument("train: dataset and network dimensions differ");
    }
    auto is_snapshot = [&](int epoch) {
        return std::find(config.snapshot_epochs.begin(), config.snapshot_epochs.end(), epoch) !=
               config.snapshot_epochs.end();
    };
    if (hook && is_snapshot(0)) hook(0, params);

    TrainResult result;
    Rng rng(config.shuffle_seed);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    const double channels = ds.output_dim();
    const std::size_t depth = params.layers.size();

    // Buffers are sized for a full batch once and reused; only a short final
    // batch triggers a resize.
    Matrix batch_x, batch_y, residual;
    std::vector<Matrix> z(depth), a(depth - 1), delta(depth);
    MlpGradient grad = MlpParams::zeros(params.sizes());
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        shuffle(std::span<Eigen::Index>(order), rng);
        double loss_sum = 0.0;
        for (Eigen::Index start = 0; start < n; start += config.batch_size) {
            const Eigen::Index b = std::min<Eigen::Index>(config.batch_size, n - start);
            batch_x.resize(b, ds.input_dim());
            batch_y.resize(b, ds.output_dim());
            for (Eigen::Index r = 0; r < b; ++r) {
                batch_x.row(r) = ds.inputs.row(order[static_cast<std::size_t>(start + r)]);
                batch_y.row(r) = ds.targets.row(order[static_cast<std::size_t>(start + r)]);
            }
            for (std::size_t l = 0; l < depth; ++l) {
                const Matrix& in = l == 0 ? batch_x : a[l - 1];
                z[l].resize(b, params.layers[l].fan_out());
                z[l].noalias() = in * params.layers[l].weights.transpose();
                z[l].rowwise() += params.layers[l].bias.transpose();
                if (l + 1 < depth) {
                    a[l].resize(b, z[l].cols());
                    a[l] = z[l].cwiseMax(0.0);
                }
            }
            residual = z.back() - batch_y;
            loss_sum += residual.squaredNorm() / channels;
            delta.back() = residual * (2.0 / (channels * static_cast<double>(b)));
            for (std::size_t l = depth - 1; l > 0; --l) {
                delta[l - 1].resize(b, params.layers[l].fan_in());
                delta[l - 1].noalias() = delta[l] * params.layers[l].weights;
                delta[l - 1].array() *= (z[l - 1].array() > 0.0).cast<double>();
            }
            for (std::size_t l = 0; l < depth; ++l) {
                const Matrix& in = l == 0 ? batch_x : a[l - 1];
                grad.layers[l].weights.noalias() = delta[l].transpose() * in;
                grad.layers[l].bias = delta[l].colwise().sum().transpose();
            }
            adam_step(params, state, grad);
        }
        const double epoch_loss = loss_sum / static_cast<double>(n);
        bool finite = std::isfinite(epoch_loss);
        for (const auto& layer : params.layers) {
            finite = finite && layer.weights.allFinite() && layer.bias.allFinite();
        }
        if (!finite) throw DivergenceError(epoch, epoch_loss);
        result.loss_curve.push_back(epoch_loss);
        if (hook && is_snapshot(epoch)) hook(epoch, params);
    }
    result.params = std::move(params);
    result.state = std::move(state);
    return result;
}

}  // namespace cmlp
