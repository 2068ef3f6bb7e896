#pragma once

#include "hebb/types.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace hebb {

/// Deterministic pseudo-random generator: xoshiro256** seeded through splitmix64.
///
/// Normals use the Box-Muller transform on two 53-bit uniforms and cache the
/// second variate, so a stream depends only on the seed and the call sequence.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0);

    std::uint64_t next_u64();
    /// Uniform on [0, 1) with 53 bits of resolution.
    double uniform();
    double normal();
    /// Uniform integer in [0, bound). bound must be positive.
    std::uint64_t below(std::uint64_t bound);

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    Vec normal_vector(Eigen::Index n);

private:
    std::array<std::uint64_t, 4> state_{};
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Independent generator for worker or item `index`, derived as seed + index.
inline Rng worker_rng(std::uint64_t seed, std::uint64_t index) { return Rng(seed + index); }

struct SymSpectrum {
    Vec eigenvalues;   // non-increasing
    Mat eigenvectors;  // column i pairs with eigenvalues[i]
};

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_stderr = 0.0;
};

/// Unbiased sample covariance of the rows of `data` (samples x features).
Mat covariance(const Mat& data);

/// Full eigendecomposition of a symmetric matrix, eigenvalues descending.
SymSpectrum sym_eig_descending(const Mat& c);
/// Eigenvalues only, non-increasing.
Vec sym_eigenvalues_descending(const Mat& c);

/// Ordinary least squares y = slope * x + intercept.
LineFit linear_fit(std::span<const double> xs, std::span<const double> ys);

}  // namespace hebb
