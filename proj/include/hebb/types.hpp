#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace hebb {

/// Row-major so that rows are samples (or hidden units) and blobs serialize row by row.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input too small or constant for the requested statistic.
class DegenerateInputError : public Error {
public:
    using Error::Error;
};

/// Precondition of an operation was violated by the caller.
class ContractError : public Error {
public:
    using Error::Error;
};

class SingularFitError : public Error {
public:
    using Error::Error;
};

/// Malformed file on disk (dataset batch, checkpoint, config).
class FormatError : public Error {
public:
    using Error::Error;
};

class EmptySubsetError : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite value.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, int epoch) : Error(what), epoch_(epoch) {}
    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace hebb
