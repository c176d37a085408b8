#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "cmlp/rng.hpp"

namespace cmlp {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;

class DegenerateVectorError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

inline constexpr double kDegenerateNorm = 1e-12;

template <typename MatDerived, typename VecDerived>
VectorX<typename MatDerived::Scalar> mat_vec(const Eigen::MatrixBase<MatDerived>& m,
                                             const Eigen::MatrixBase<VecDerived>& v) {
    if (m.cols() != v.size()) {
        throw std::invalid_argument("mat_vec: matrix has " + std::to_string(m.cols()) +
                                    " columns but vector has length " +
                                    std::to_string(v.size()));
    }
    return m * v;
}

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine_similarity(const Eigen::MatrixBase<DerivedA>& a,
                                            const Eigen::MatrixBase<DerivedB>& b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("cosine_similarity: length mismatch");
    }
    const auto na = a.norm();
    const auto nb = b.norm();
    if (na < kDegenerateNorm || nb < kDegenerateNorm) {
        throw DegenerateVectorError("cosine_similarity: vector norm below 1e-12");
    }
    using Scalar = typename DerivedA::Scalar;
    const Scalar c = a.dot(b) / (na * nb);
    return std::clamp(c, Scalar(-1), Scalar(1));
}

struct PowerIterationOptions {
    double tolerance = 1e-9;
    int max_iterations = 1000;
    std::uint64_t seed = 0x5eed5eedULL;
};

/// Largest singular value by power iteration on m^T m.
///
/// The start vector comes from the given seed, so repeated calls agree bit for bit.
/// Iteration stops when successive estimates differ by less than
/// tolerance * max(1, estimate) or after max_iterations.
template <typename Derived>
typename Derived::Scalar spectral_norm(const Eigen::MatrixBase<Derived>& m,
                                       const PowerIterationOptions& options = {}) {
    using Scalar = typename Derived::Scalar;
    if (m.size() == 0) {
        throw std::invalid_argument("spectral_norm: empty matrix");
    }
    Rng rng(options.seed);
    VectorX<Scalar> v(m.cols());
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = Scalar(rng.uniform(-1.0, 1.0));
    v.normalize();

    Scalar estimate = (m * v).norm();
    for (int it = 0; it < options.max_iterations; ++it) {
        const VectorX<Scalar> u = m * v;
        const VectorX<Scalar> w = m.transpose() * u;
        const Scalar wn = w.norm();
        if (wn == Scalar(0)) break;
        v = w / wn;
        const Scalar next = (m * v).norm();
        const bool converged =
            std::abs(next - estimate) < Scalar(options.tolerance) * std::max(Scalar(1), next);
        estimate = next;
        if (converged) break;
    }
    return estimate;
}

}  // namespace cmlp
