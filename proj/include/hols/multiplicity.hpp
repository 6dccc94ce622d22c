#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace hols {

/// Standard normal CDF and upper tail, via erfc.
double normal_cdf(double x);
double normal_sf(double x);

/// Empirical law of max_k |S_k| for S ~ N(0, sigma^2 gram / n).
struct MaxNullSample {
    std::vector<double> sup_norms;  ///< ascending
    double sigma = 0.0;
    Eigen::MatrixXd gram;
    std::uint64_t seed = 0;
    double jitter = 0.0;            ///< diagonal jitter the factorization needed

    std::size_t size() const noexcept { return sup_norms.size(); }
    /// Fraction of draws with sup-norm >= t.
    double tail(double t) const;
};

/// Draw i uses Philox stream (seed, i), so the sample does not depend on how
/// draws are chunked across threads.
MaxNullSample simulate_max_null(const Eigen::MatrixXd& gram, double sigma, long n,
                                std::size_t n_sim, std::uint64_t seed);

struct RawPValue {
    double p = 1.0;
    bool degenerate = false;  ///< se == 0 with diff != 0
};

/// Two-sided normal tail 2(1 - Phi(|diff|/se)).
RawPValue raw_pvalue(double diff, double se);

std::vector<double> adjusted_pvalues(const std::vector<double>& diffs, const MaxNullSample& sample);

} // namespace hols
