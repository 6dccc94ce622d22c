#include "hols/recovery.hpp"

#include "hols/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace hols {

std::vector<Index> u_hat(const VectorXd& z, double tau) {
    if (!z.allFinite()) throw InputError("z-statistics must be finite");
    std::vector<Index> out;
    for (Index j = 0; j < z.size(); ++j)
        if (std::abs(z(j)) < tau) out.push_back(j);
    return out;
}

RecoveryCurves recovery_curves(const MatrixXd& z_table, const std::vector<Index>& u_true, const VectorXd& beta,
                               const VectorXd& beta_ols, const std::vector<double>& tau_grid) {
    const Index p = z_table.cols();
    if (beta.size() != p || beta_ols.size() != p) throw InputError("recovery_curves: beta length does not match z table");
    if (z_table.rows() == 0) throw InputError("recovery_curves: no replicates");
    if (tau_grid.empty()) throw InputError("recovery_curves: empty threshold grid");
    for (std::size_t i = 1; i < tau_grid.size(); ++i) {
        if (!(tau_grid[i] > tau_grid[i - 1])) throw InputError("threshold grid must be strictly ascending");
    }
    if (!(tau_grid.front() > 0.0)) throw InputError("thresholds must be positive");
    std::vector<char> in_u(static_cast<std::size_t>(p), 0);
    for (Index j : u_true) {
        if (j < 0 || j >= p) throw InputError("recovery_curves: index in U out of range");
        in_u[static_cast<std::size_t>(j)] = 1;
    }
    const auto u_size = static_cast<std::size_t>(std::count(in_u.begin(), in_u.end(), 1));
    const VectorXd bias = (beta_ols - beta).cwiseAbs();
    const double total_bias = bias.sum();

    RecoveryCurves out;
    out.thresholds = tau_grid;
    out.n_replicates = static_cast<std::size_t>(z_table.rows());
    const double reps = double(z_table.rows());
    for (double tau : tau_grid) {
        double perfect = 0.0, inter = 0.0, no_false = 0.0, remaining = 0.0;
        for (Index r = 0; r < z_table.rows(); ++r) {
            std::size_t hits = 0, false_in = 0;
            double kept_bias = 0.0;
            for (Index j = 0; j < p; ++j) {
                if (!(std::abs(z_table(r, j)) < tau)) continue;
                if (in_u[static_cast<std::size_t>(j)]) ++hits;
                else ++false_in;
                kept_bias += bias(j);
            }
            inter += double(hits);
            if (false_in == 0) no_false += 1.0;
            if (false_in == 0 && hits == u_size) perfect += 1.0;
            if (total_bias > 0.0) remaining += kept_bias / total_bias;
        }
        out.p_perfect.push_back(perfect / reps);
        out.mean_intersection.push_back(inter / reps);
        out.p_no_false.push_back(no_false / reps);
        if (total_bias > 0.0) out.remaining_fraction.push_back(remaining / reps);
    }
    return out;
}

VectorXd growth_summary(const MatrixXd& means, const std::vector<double>& n_grid) {
    const auto k = static_cast<Index>(n_grid.size());
    if (k < 3) throw InputError("growth_summary needs at least 3 sample sizes");
    if (means.rows() != k) throw InputError("growth_summary: one row of means per sample size");
    VectorXd lx(k);
    for (Index i = 0; i < k; ++i) {
        if (!(n_grid[static_cast<std::size_t>(i)] > 0.0)) throw InputError("sample sizes must be positive");
        lx(i) = std::log(n_grid[static_cast<std::size_t>(i)]);
    }
    const VectorXd cx = lx.array() - lx.mean();
    const double sxx = cx.squaredNorm();
    if (!(sxx > 0.0)) throw InputError("sample sizes must not all be equal");
    VectorXd slope(means.cols());
    for (Index j = 0; j < means.cols(); ++j) {
        if (!(means.col(j).minCoeff() > 0.0)) throw InputError("growth_summary: means must be positive");
        const VectorXd ly = means.col(j).array().log();
        slope(j) = cx.dot((ly.array() - ly.mean()).matrix()) / sxx;
    }
    return slope;
}

std::vector<double> default_tau_grid() { return parse_tau_grid("log:0.5:20:60"); }

std::vector<double> parse_tau_grid(const std::string& spec) {
    auto num = [&](const std::string& s) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(s, &used);
        } catch (const std::exception&) {
            throw InputError("bad number '" + s + "' in threshold grid");
        }
        if (used != s.size()) throw InputError("bad number '" + s + "' in threshold grid");
        return v;
    };
    std::vector<double> grid;
    if (spec.rfind("log:", 0) == 0) {
        std::vector<std::string> parts;
        std::stringstream ss(spec.substr(4));
        std::string part;
        while (std::getline(ss, part, ':')) parts.push_back(part);
        if (parts.size() != 3) throw InputError("threshold grid 'log:LO:HI:COUNT' needs three fields");
        const double lo = num(parts[0]);
        const double hi = num(parts[1]);
        const double count = num(parts[2]);
        if (!(lo > 0.0) || !(hi >= lo) || !(count >= 1.0) || count != std::floor(count)) {
            throw InputError("threshold grid needs 0 < LO <= HI and integer COUNT >= 1");
        }
        const auto c = static_cast<std::size_t>(count);
        if (c == 1) return {lo};
        if (hi == lo) throw InputError("threshold grid needs HI > LO when COUNT > 1");
        for (std::size_t i = 0; i < c; ++i) grid.push_back(lo * std::pow(hi / lo, double(i) / double(c - 1)));
        grid.back() = hi;
    } else {
        std::stringstream ss(spec);
        std::string part;
        while (std::getline(ss, part, ',')) grid.push_back(num(part));
    }
    if (grid.empty()) throw InputError("empty threshold grid");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!(grid[i] > 0.0) || !std::isfinite(grid[i])) throw InputError("thresholds must be positive and finite");
        if (i > 0 && !(grid[i] > grid[i - 1])) throw InputError("threshold grid must be strictly ascending");
    }
    return grid;
}

} // namespace hols
