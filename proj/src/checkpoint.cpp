#include "cmlp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "cmlp/signal.hpp"

namespace cmlp {

namespace {

using json = nlohmann::json;

void append_le(std::vector<std::uint8_t>& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
}

double read_le(const std::vector<std::uint8_t>& in, std::size_t at) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(in[at + b]) << (8 * b);
    return std::bit_cast<double>(bits);
}

void write_json(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return json::parse(in);
}

Vector doubles_from_bytes(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() % 8 != 0) throw std::runtime_error("raw float64 file has a partial value");
    Vector v(static_cast<Eigen::Index>(bytes.size() / 8));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = read_le(bytes, static_cast<std::size_t>(i) * 8);
    return v;
}

}  // namespace

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
    return std::filesystem::path(path.string() + ".json");
}

std::vector<std::uint8_t> params_to_bytes(const MlpParams& p) {
    const Vector flat = flatten(p);
    std::vector<std::uint8_t> out;
    out.reserve(static_cast<std::size_t>(flat.size()) * 8);
    for (double v : flat) append_le(out, v);
    return out;
}

MlpParams params_from_bytes(const std::vector<std::uint8_t>& bytes, const std::vector<int>& sizes) {
    return unflatten(doubles_from_bytes(bytes), sizes);
}

void save_checkpoint(const std::filesystem::path& path, const MlpParams& p, const CheckpointMeta& meta) {
    write_file_bytes(path, params_to_bytes(p));
    json j;
    j["format"] = "float64-le";
    j["layout"] = "per layer: weights row-major (fan_out x fan_in), then bias";
    j["sizes"] = meta.sizes;
    j["hidden_activation"] = "relu";
    j["output_activation"] = "affine";
    j["seed"] = meta.seed;
    j["init_scheme"] = meta.init_scheme;
    j["optimizer"] = {{"name", "adam"},
                      {"lr", meta.adam.lr},
                      {"beta1", meta.adam.beta1},
                      {"beta2", meta.adam.beta2},
                      {"eps", meta.adam.eps},
                      {"step", meta.adam_step}};
    j["epoch"] = meta.epoch;
    j["parameter_count"] = p.parameter_count();
    write_json(sidecar_path(path), j);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const json j = read_json(sidecar_path(path));
    Checkpoint cp;
    cp.meta.sizes = j.at("sizes").get<std::vector<int>>();
    cp.meta.seed = j.at("seed").get<std::uint64_t>();
    cp.meta.init_scheme = j.at("init_scheme").get<std::string>();
    const auto& opt = j.at("optimizer");
    cp.meta.adam = {opt.at("lr").get<double>(), opt.at("beta1").get<double>(),
                    opt.at("beta2").get<double>(), opt.at("eps").get<double>()};
    cp.meta.adam_step = opt.at("step").get<long>();
    cp.meta.epoch = j.at("epoch").get<int>();
    cp.params = params_from_bytes(read_file_bytes(path), cp.meta.sizes);
    return cp;
}

void save_matrix(const std::filesystem::path& path, const Matrix& m) {
    std::vector<std::uint8_t> out;
    out.reserve(static_cast<std::size_t>(m.size()) * 8);
    for (Eigen::Index i = 0; i < m.size(); ++i) append_le(out, m.data()[i]);
    write_file_bytes(path, out);
    write_json(sidecar_path(path), json{{"format", "float64-le"},
                                        {"layout", "row-major"},
                                        {"rows", m.rows()},
                                        {"cols", m.cols()}});
}

Matrix load_matrix(const std::filesystem::path& path) {
    const json j = read_json(sidecar_path(path));
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const Vector flat = doubles_from_bytes(read_file_bytes(path));
    if (flat.size() != rows * cols) throw std::runtime_error("matrix file size does not match sidecar");
    Matrix m(rows, cols);
    std::memcpy(m.data(), flat.data(), static_cast<std::size_t>(flat.size()) * sizeof(double));
    return m;
}

}  // namespace cmlp
