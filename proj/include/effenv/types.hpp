// types.hpp: numeric aliases, RNG, and the reduced two-level-system state

#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <random>

namespace effenv {

using Complex = std::complex<double>;
using MatrixXc = Eigen::MatrixXcd;
using VectorXc = Eigen::VectorXcd;
using Matrix2c = Eigen::Matrix2cd;

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent seeds from (master, index).
inline std::uint64_t mix_seed(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
    return mix_seed(mix_seed(master) ^ (index * 0xd1b54a32d192ed03ULL + 1));
}

// Reduced 2x2 density matrix of the two-level system. Level 0 is the ground
// state, level 1 the excited state; rho10 = <1|rho|0> and rho01 = conj(rho10).
struct QubitState {
    double rho00{1.0};
    double rho11{0.0};
    Complex rho10{0.0, 0.0};

    Complex rho01() const noexcept { return std::conj(rho10); }

    static QubitState ground() noexcept { return {1.0, 0.0, {0.0, 0.0}}; }
    static QubitState excited() noexcept { return {0.0, 1.0, {0.0, 0.0}}; }
    static QubitState make(double rho00, Complex rho10) noexcept {
        return {rho00, 1.0 - rho00, rho10};
    }

    // Takes the Hermitian part of m; throws if the trace is not ~1.
    static QubitState from_matrix(const Matrix2c& m, double tol = 1e-9);

    Matrix2c matrix() const;
    double trace() const noexcept { return rho00 + rho11; }
    double purity() const noexcept;

    // Trace one, coherence bounded by sqrt(rho00*rho11), populations >= -tol.
    bool is_valid(double tol = 1e-9) const noexcept;
    void validate(double tol = 1e-9) const;
};

}  // namespace effenv
