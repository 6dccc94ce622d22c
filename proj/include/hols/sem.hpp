#pragma once

#include "hols/regress.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace hols {

class RandomStream;

/// Centered noise law. `a` is the variance (gaussian), the half-width
/// (uniform) or the mixture weight of the first component (mixture, with
/// component variances v1 and v2).
struct NoiseSpec {
    enum class Kind { gaussian, uniform, mixture };
    Kind kind = Kind::gaussian;
    double a = 1.0;
    double v1 = 0.0;
    double v2 = 0.0;

    static NoiseSpec gaussian(double variance);
    static NoiseSpec uniform_var(double variance);
    static NoiseSpec uniform_half(double half_width);
    static NoiseSpec mixture(double weight, double var1, double var2);

    double variance() const;
    double fourth_cumulant() const;
    /// Same law shape rescaled to the given variance.
    NoiseSpec with_variance(double variance) const;
    double sample(RandomStream& rng) const;

    std::string to_string() const;
    static NoiseSpec parse(const std::string& text);
};

struct Edge {
    Index from = 0;
    Index to = 0;
    double weight = 0.0;
};

/// Nodes whose base noises are mixed as factor * (independent node noises),
/// giving the group a correlated noise vector.
struct NoiseGroup {
    std::vector<Index> nodes;
    MatrixXd factor;   ///< lower triangular
};

struct SemScenario {
    std::string name;
    std::vector<std::string> nodes;
    std::vector<Edge> edges;
    std::vector<NoiseSpec> noise;       ///< one per node
    std::vector<NoiseGroup> groups;
    Index response = 0;
    std::vector<Index> hidden;

    Index node_count() const noexcept { return static_cast<Index>(nodes.size()); }
    Index node_index(const std::string& name) const;
    /// Nodes that are neither hidden nor the response, in node order.
    std::vector<Index> observed() const;
    /// Topological order; throws GraphError on a cycle.
    std::vector<Index> topological_order() const;
    /// Structural checks: indices in range, one noise per node, acyclic,
    /// response not hidden, groups disjoint and factors square.
    void validate() const;
};

/// Rescales the noise of every listed node so the node has unit variance.
/// Throws InputError when a node's parents already explain variance >= 1.
void solve_unit_variance(SemScenario& s, const std::vector<Index>& nodes);

struct SemSample {
    Dataset data;       ///< observed covariates and the response
    MatrixXd latent;    ///< n x node_count, every node
};

SemSample sample_sem(const SemScenario& scenario, Index n, std::uint64_t seed);

struct GlobalNullOptions {
    Index p = 30;
    double r = 0.6;
    std::vector<Index> active{1, 5, 10, 15, 20};   ///< 1-based
    double coef = 1.0;
    NoiseSpec noise = NoiseSpec::mixture(2.0 / 3.0, 0.5, 2.0);
};
SemScenario scenario_global_null(const GlobalNullOptions& options = {});

struct Fig2Options {
    double w12 = 0.6, w24 = 0.4, w34 = 0.5, w46 = 0.6, w56 = 0.6, w67 = 0.6;
    double w3y = 1.0;
    NoiseSpec hidden_noise = NoiseSpec::mixture(0.9, 0.5, 5.5);
    NoiseSpec observed_noise = NoiseSpec::uniform_var(1.0);
    double response_noise_var = 0.25;
};
SemScenario scenario_fig2(const Fig2Options& options = {});

struct HdChainOptions {
    double root_weight = 0.5;
    double chain_weight = 0.5;
};
/// 1 + 3 * (n / 2) nodes; the response is the middle node of the first chain.
SemScenario scenario_hd_chain(Index n, const HdChainOptions& options = {});

struct BlockOptions {
    MatrixXd block_cov;                      ///< empty: Toeplitz 1 / (1 + |i - j|), size 13
    std::vector<Index> confounded;           ///< 0-based within block 1; empty: {0, b / 2}
    std::vector<double> signs;               ///< empty: +1, -1
    NoiseSpec noise = NoiseSpec::uniform_var(1.0);
};
MatrixXd default_block_cov(Index b = 13);
SemScenario scenario_block(const BlockOptions& options = {});

/// Population quantities of a scenario. Index sets are positions in
/// `observed` (0-based).
struct PopulationOracle {
    std::vector<Index> observed;
    MatrixXd sigma_x;
    VectorXd beta;
    VectorXd beta_ols;
    VectorXd hols_moment;   ///< E[Z_j^3 (Y - X beta_ols)]
    VectorXd hols_diff;     ///< population beta_hols - beta_ols
    std::vector<Index> u_set;   ///< graph criterion
    std::vector<Index> v_set;   ///< |beta_ols - beta| below tolerance
    /// Partial-regression coefficients of Z_j and the residual on the
    /// independent sources, for Monte-Carlo checks.
    MatrixXd source_loadings;   ///< node_count x node_count, X = loadings * u
    VectorXd source_var;

    VectorXd bias() const { return beta_ols - beta; }
};

PopulationOracle population_oracle(const SemScenario& scenario, double tol = 1e-10);

/// Nodes of M that the graph criteria cannot certify as unconfounded.
std::vector<Index> graph_confounded(const SemScenario& scenario);

/// Plain-text scenario format; see README.
SemScenario parse_scenario(std::istream& in);
SemScenario load_scenario(const std::string& path);
std::string serialize_scenario(const SemScenario& scenario);

} // namespace hols
