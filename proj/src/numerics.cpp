#include "hebb/numerics.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

namespace hebb {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& s : state_) s = splitmix64(sm);
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

std::uint64_t Rng::below(std::uint64_t bound) {
    if (bound == 0) throw ContractError("Rng::below: bound must be positive");
    // Rejection sampling removes modulo bias.
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % bound;
}

Vec Rng::normal_vector(Eigen::Index n) {
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
    return v;
}

Mat covariance(const Mat& data) {
    const auto n = data.rows();
    if (n < 2) throw DegenerateInputError("covariance: need at least 2 samples, got " + std::to_string(n));
    const Eigen::RowVectorXd mean = data.colwise().mean();
    const Mat centered = data.rowwise() - mean;
    Mat c(data.cols(), data.cols());
    c.setZero();
    c.selfadjointView<Eigen::Lower>().rankUpdate(centered.transpose(), 1.0 / static_cast<double>(n - 1));
    c.triangularView<Eigen::StrictlyUpper>() = c.transpose();
    return c;
}

namespace {

void check_symmetric(const Mat& c, const char* who) {
    if (c.rows() != c.cols()) throw ContractError(std::string(who) + ": matrix is not square");
    const double asym = (c - c.transpose()).cwiseAbs().maxCoeff();
    if (c.size() > 0 && asym > 1e-10)
        throw ContractError(std::string(who) + ": matrix is not symmetric (max deviation " + std::to_string(asym) + ")");
}

}  // namespace

SymSpectrum sym_eig_descending(const Mat& c) {
    check_symmetric(c, "sym_eig_descending");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(Eigen::MatrixXd(c), Eigen::ComputeEigenvectors);
    if (solver.info() != Eigen::Success) throw Error("sym_eig_descending: eigensolver did not converge");
    SymSpectrum out;
    out.eigenvalues = solver.eigenvalues().reverse();
    out.eigenvectors = solver.eigenvectors().rowwise().reverse();
    return out;
}

Vec sym_eigenvalues_descending(const Mat& c) {
    check_symmetric(c, "sym_eigenvalues_descending");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(Eigen::MatrixXd(c), Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) throw Error("sym_eigenvalues_descending: eigensolver did not converge");
    return solver.eigenvalues().reverse();
}

LineFit linear_fit(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw ContractError("linear_fit: xs and ys differ in length");
    const std::size_t n = xs.size();
    if (n < 3) throw SingularFitError("linear_fit: need at least 3 points, got " + std::to_string(n));
    const double nd = static_cast<double>(n);
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / nd;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / nd;
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    if (!(sxx > 0.0)) throw SingularFitError("linear_fit: all x values are equal");
    LineFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double ssr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = ys[i] - (fit.intercept + fit.slope * xs[i]);
        ssr += r * r;
    }
    fit.slope_stderr = std::sqrt(ssr / (nd - 2.0) / sxx);
    return fit;
}

}  // namespace hebb
