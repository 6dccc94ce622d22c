#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace hols {

// Errors fall into two families that the CLI maps onto exit codes:
// InputError (bad arguments, malformed files) and NumericalError
// (a well-formed problem that is degenerate for the method).

class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Design matrix is rank deficient. `columns` lists offending column ids.
class SingularDesignError : public NumericalError {
public:
    SingularDesignError(const std::string& what, std::vector<long> columns)
        : NumericalError(what), columns_(std::move(columns)) {}
    const std::vector<long>& columns() const noexcept { return columns_; }

private:
    std::vector<long> columns_;
};

/// A covariate is (numerically) explained by the others, or an estimator
/// denominator vanishes. Carries the covariate index, -1 if not applicable.
class DegenerateError : public NumericalError {
public:
    DegenerateError(const std::string& what, long covariate = -1)
        : NumericalError(what), covariate_(covariate) {}
    long covariate() const noexcept { return covariate_; }

private:
    long covariate_;
};

class CollinearityError : public DegenerateError {
public:
    using DegenerateError::DegenerateError;
};

/// v_j vanishes identically; the HOLS contrast carries no information.
class ZeroVarianceError : public DegenerateError {
public:
    using DegenerateError::DegenerateError;
};

class ConvergenceError : public NumericalError {
public:
    ConvergenceError(const std::string& what, double gap)
        : NumericalError(what), gap_(gap) {}
    double gap() const noexcept { return gap_; }

private:
    double gap_;
};

class CovarianceError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class GraphError : public InputError {
public:
    using InputError::InputError;
};

} // namespace hols
