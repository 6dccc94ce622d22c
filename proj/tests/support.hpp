#pragma once
// Test-side oracles and generators. Nothing here calls into the solver code
// under test except the RNG.

#include "hols/random.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace testing {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline MatrixXd gaussian_matrix(Eigen::Index n, Eigen::Index p, std::uint64_t seed) {
    hols::RandomStream rng(seed, 0);
    MatrixXd x(n, p);
    for (Eigen::Index j = 0; j < p; ++j)
        for (Eigen::Index i = 0; i < n; ++i) x(i, j) = rng.normal();
    return x;
}

inline VectorXd gaussian_vector(Eigen::Index n, std::uint64_t seed) {
    return gaussian_matrix(n, 1, seed).col(0);
}

inline MatrixXd centered(const MatrixXd& x) { return x.rowwise() - x.colwise().mean(); }
inline VectorXd centered_vec(const VectorXd& v) { return v.array() - v.mean(); }

/// (x'x)^{-1} x'y through an explicit inverse of the normal matrix.
inline VectorXd normal_equations(const MatrixXd& x, const VectorXd& y) {
    const MatrixXd g = x.transpose() * x;
    return g.inverse() * (x.transpose() * y);
}

/// FISTA on (1/2n)||y - x b||^2 + lambda sum_k d_k |b_k|.
inline VectorXd proximal_gradient(const MatrixXd& x, const VectorXd& y, double lambda, const VectorXd& d,
                                  int iterations = 200000) {
    const double n = double(x.rows());
    const MatrixXd g = x.transpose() * x / n;
    const double lip = Eigen::SelfAdjointEigenSolver<MatrixXd>(g).eigenvalues().maxCoeff();
    const double step = 1.0 / lip;
    const VectorXd c = x.transpose() * y / n;
    VectorXd b = VectorXd::Zero(x.cols()), prev = b, mom = b;
    double t = 1.0;
    for (int it = 0; it < iterations; ++it) {
        const VectorXd u = mom - step * (g * mom - c);
        prev = b;
        for (Eigen::Index k = 0; k < u.size(); ++k) {
            const double th = step * lambda * d(k);
            b(k) = u(k) > th ? u(k) - th : (u(k) < -th ? u(k) + th : 0.0);
        }
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        mom = b + ((t - 1.0) / t_next) * (b - prev);
        t = t_next;
    }
    return b;
}

inline double lasso_objective(const MatrixXd& x, const VectorXd& y, const VectorXd& b, double lambda,
                              const VectorXd& d) {
    return 0.5 * (y - x * b).squaredNorm() / double(x.rows()) + lambda * d.cwiseProduct(b).lpNorm<1>();
}

/// Kolmogorov-Smirnov distance of a sample from Uniform(0, 1).
inline double ks_uniform(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const double m = double(v.size());
    double d = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        d = std::max(d, std::abs(double(i + 1) / m - v[i]));
        d = std::max(d, std::abs(v[i] - double(i) / m));
    }
    return d;
}

/// Toeplitz AR(1) design with the given innovation sampler.
template <class Draw>
MatrixXd ar1_design(Eigen::Index n, Eigen::Index p, double r, Draw&& draw) {
    MatrixXd x(n, p);
    for (Eigen::Index i = 0; i < n; ++i) {
        x(i, 0) = draw();
        for (Eigen::Index j = 1; j < p; ++j) x(i, j) = r * x(i, j - 1) + std::sqrt(1 - r * r) * draw();
    }
    return x;
}

} // namespace testing
