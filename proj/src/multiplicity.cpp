#include "hols/multiplicity.hpp"

#include "hols/error.hpp"
#include "hols/parallel.hpp"
#include "hols/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace hols {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
double normal_sf(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

double MaxNullSample::tail(double t) const {
    if (sup_norms.empty()) throw InputError("empty max-null sample");
    const auto it = std::lower_bound(sup_norms.begin(), sup_norms.end(), t);
    return double(sup_norms.end() - it) / double(sup_norms.size());
}

namespace {

constexpr std::size_t kChunk = 256;

Eigen::MatrixXd jittered_factor(const Eigen::MatrixXd& cov, double& used) {
    const Eigen::Index p = cov.rows();
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() == Eigen::Success) {
        used = 0.0;
        return llt.matrixL();
    }
    const double scale = std::max(cov.trace() / double(p), 1e-300);
    for (double rel : {1e-12, 1e-10, 1e-8, 1e-6}) {
        Eigen::MatrixXd c = cov;
        c.diagonal().array() += rel * scale;
        llt.compute(c);
        if (llt.info() == Eigen::Success) {
            used = rel * scale;
            return llt.matrixL();
        }
    }
    throw CovarianceError("max-null covariance is not positive semidefinite after jitter up to 1e-6 * trace/p");
}

} // namespace

MaxNullSample simulate_max_null(const Eigen::MatrixXd& gram, double sigma, long n,
                                std::size_t n_sim, std::uint64_t seed) {
    const Eigen::Index p = gram.rows();
    if (gram.cols() != p || p == 0) throw InputError("gram must be a nonempty square matrix");
    if (!gram.allFinite()) throw InputError("gram has non-finite entries");
    if ((gram - gram.transpose()).cwiseAbs().maxCoeff() > 1e-8 * std::max(1.0, gram.cwiseAbs().maxCoeff())) {
        throw InputError("gram is not symmetric");
    }
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InputError("sigma must be nonnegative");
    if (n < 1) throw InputError("n must be positive");
    if (n_sim < 100) throw InputError("n_sim must be at least 100");

    MaxNullSample out;
    out.sigma = sigma;
    out.gram = gram;
    out.seed = seed;
    out.sup_norms.assign(n_sim, 0.0);
    if (sigma == 0.0 || gram.cwiseAbs().maxCoeff() == 0.0) return out;

    const Eigen::MatrixXd sym = 0.5 * (gram + gram.transpose());
    const Eigen::MatrixXd factor = jittered_factor(sym, out.jitter) * (sigma / std::sqrt(double(n)));

    const std::size_t chunks = (n_sim + kChunk - 1) / kChunk;
    parallel_for(chunks, [&](std::size_t c) {
        const std::size_t begin = c * kChunk;
        const std::size_t count = std::min(kChunk, n_sim - begin);
        Eigen::MatrixXd g(p, static_cast<Eigen::Index>(count));
        for (std::size_t i = 0; i < count; ++i) {
            RandomStream rng(seed, begin + i);
            for (Eigen::Index k = 0; k < p; ++k) g(k, static_cast<Eigen::Index>(i)) = rng.normal();
        }
        const Eigen::MatrixXd s = factor.triangularView<Eigen::Lower>() * g;
        for (std::size_t i = 0; i < count; ++i) {
            out.sup_norms[begin + i] = s.col(static_cast<Eigen::Index>(i)).cwiseAbs().maxCoeff();
        }
    });
    std::sort(out.sup_norms.begin(), out.sup_norms.end());
    return out;
}

RawPValue raw_pvalue(double diff, double se) {
    if (!(se >= 0.0)) throw InputError("standard error must be nonnegative");
    if (se == 0.0) return {1.0, diff != 0.0};
    const double t = std::abs(diff) / se;
    return {std::min(1.0, std::erfc(t / std::numbers::sqrt2)), false};
}

std::vector<double> adjusted_pvalues(const std::vector<double>& diffs, const MaxNullSample& sample) {
    std::vector<double> out(diffs.size());
    for (std::size_t j = 0; j < diffs.size(); ++j) out[j] = sample.tail(std::abs(diffs[j]));
    return out;
}

} // namespace hols
