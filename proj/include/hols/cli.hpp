#pragma once

#include "hols/hols.hpp"
#include "hols/hols_hd.hpp"
#include "hols/sem.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace hols::cli {

inline constexpr const char* kVersion = "0.1.0";

/// Numeric CSV: comma separated, header row, '.' decimal point. Blank lines
/// and lines starting with '#' are skipped; fields may be double-quoted.
struct Table {
    std::vector<std::string> header;
    MatrixXd values;
};

/// `source` names the input in error messages ("FILE line N: ...").
Table read_csv(std::istream& in, const std::string& source);
Table read_csv_file(const std::string& path);

/// Every column except `response` becomes a covariate.
Dataset dataset_from_table(const Table& table, const std::string& response);

/// Named scenario (global-null, fig2, hd-chain, block) or a scenario file.
/// hd-chain depends on the sample size.
SemScenario resolve_scenario(const std::string& spec, Index n);
bool is_named_scenario(const std::string& spec);

enum class Method { automatic, ols, hd };
Method parse_method(const std::string& s);
std::string to_string(Method m);

struct StudyConfig {
    std::string scenario = "fig2";
    std::vector<Index> n_list{1000};
    std::size_t replicates = 200;
    std::uint64_t seed = 1;
    double alpha = 0.05;
    std::size_t n_sim = kDefaultNSim;
    Method method = Method::automatic;
    HdConfig hd;
};

/// All replicates at one sample size. Matrices are replicates x covariates.
struct StudyCell {
    Index n = 0;
    SemScenario scenario;
    PopulationOracle oracle;
    Method method = Method::ols;
    MatrixXd z;
    MatrixXd p_raw;
    MatrixXd p_adj;
    VectorXd sigma_hat;
    std::vector<char> global_reject;
    std::vector<std::uint64_t> seeds;   ///< sampling seed per replicate
};

/// Seed used to sample replicate r at sample size n.
std::uint64_t replicate_seed(std::uint64_t seed, Index n, std::size_t r);

/// Samples and checks every replicate; replicates run in parallel and the
/// result does not depend on the thread count.
std::vector<StudyCell> run_study(const StudyConfig& config);

/// Kolmogorov-Smirnov distance of a sample from Uniform(0, 1).
double ks_uniform(std::vector<double> values);

/// Entry point of the `hols` executable. Returns the process exit code:
/// 0 success, 1 input error, 2 numerical degeneracy, 3 internal error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace hols::cli
