// model.hpp: physical parameters, banded spin environments, and the joint Hamiltonian
//
// Joint basis ordering: index = 2 * env_level + tls_level, with environment
// levels grouped contiguously by band (ascending k). A band k therefore
// occupies the contiguous joint range [2*offset(k), 2*(offset(k)+N_k)).

#pragma once

#include "effenv/types.hpp"

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace effenv {

// Energies in an arbitrary unit u with hbar = 1.
struct ModelParams {
    double deltaS{1.0};    // TLS splitting
    double detuning{0.0};  // deltaB - deltaS
    double lambda{0.05};   // coupling strength
    double dt{3.141592653589793};  // time between measurements
    double beta{0.0};      // environmental inverse temperature (analytic layer only)

    double deltaB() const noexcept { return deltaS + detuning; }
    void validate() const;
};

void to_json(nlohmann::json& j, const ModelParams& p);
// Rejects unknown keys; missing keys keep their defaults.
void from_json(const nlohmann::json& j, ModelParams& p);

enum class EnvironmentModel { random_band, sigma_x };

std::string to_string(EnvironmentModel m);
EnvironmentModel environment_model_from_string(const std::string& s);

struct BandRange {
    int lo{0};
    int hi{0};
    int count() const noexcept { return hi - lo + 1; }
    bool contains(int k) const noexcept { return k >= lo && k <= hi; }
};

// Serializable description of an environment; build_environment() turns it
// into a concrete BandedEnvironment.
struct EnvironmentSpec {
    EnvironmentModel model{EnvironmentModel::random_band};
    int n{7};
    double deltaB{1.0};
    std::uint64_t seed{42};
    double band_width{0.0};
    BandRange band_range{0, 7};

    void validate() const;
};

void to_json(nlohmann::json& j, const EnvironmentSpec& s);
void from_json(const nlohmann::json& j, EnvironmentSpec& s);

// Default truncation: full range for n <= 12, otherwise {k0-K .. k0+K} clipped to [0,n].
BandRange default_band_range(int n, int k0, int half_width = 3);

struct Band {
    int k{0};
    double energy{0.0};
    std::int64_t degeneracy{0};
    std::vector<double> offsets;  // intra-band level shifts in [-w/2, w/2]
};

// Bookkeeping shared by joint states: which bands are present and where.
struct BandLayout {
    std::vector<int> ks;
    std::vector<std::size_t> offsets;  // environment-level offsets
    std::vector<std::size_t> sizes;    // N_k

    std::size_t env_dim() const noexcept;
    std::size_t joint_dim() const noexcept { return 2 * env_dim(); }
    std::size_t index_of(int k) const;  // position of band k in ks; throws if absent
    bool contains(int k) const noexcept;
};

class BandedEnvironment {
public:
    BandedEnvironment(EnvironmentSpec spec, std::vector<Band> bands, std::vector<MatrixXc> couplings);

    const EnvironmentSpec& spec() const noexcept { return spec_; }
    int n() const noexcept { return spec_.n; }
    double deltaB() const noexcept { return spec_.deltaB; }
    const BandRange& range() const noexcept { return spec_.band_range; }

    const std::vector<Band>& bands() const noexcept { return bands_; }
    const Band& band(int k) const;
    const BandLayout& layout() const noexcept { return layout_; }
    std::size_t env_dim() const noexcept { return layout_.env_dim(); }
    std::size_t hilbert_dim() const noexcept { return layout_.joint_dim(); }
    std::size_t offset(int k) const { return layout_.offsets[layout_.index_of(k)]; }

    // Block <m_{k+1}| B |n_k>, shape N_{k+1} x N_k; the (k, k+1) block is its adjoint.
    const MatrixXc& coupling(int k) const;
    const std::vector<MatrixXc>& couplings() const noexcept { return couplings_; }

    // Environment Hamiltonian diagonal (band energy plus offset) per level.
    Eigen::VectorXd env_energies() const;
    // Dense Hermitian environment operator B.
    MatrixXc coupling_operator() const;

private:
    EnvironmentSpec spec_;
    std::vector<Band> bands_;
    std::vector<MatrixXc> couplings_;  // couplings_[i] connects bands_[i] -> bands_[i+1]
    BandLayout layout_;
};

// Exact binomial coefficient; requires 0 <= k <= n <= 62.
std::int64_t binomial_degeneracy(int n, int k);
// ln(n choose k) through lgamma; any n.
double log_binomial(double n, double k);

// Largest joint dimension the builders will allocate.
inline constexpr std::size_t kMaxHilbertDim = 4096;

BandedEnvironment build_band_environment(int n, double deltaB, std::uint64_t seed,
                                         double band_width, BandRange band_range);
BandedEnvironment build_band_environment(int n, double deltaB, std::uint64_t seed,
                                         double band_width = 0.0);

// sigma_x (x) sum_i g_i sigma_x^(i) with i.i.d. standard normal g_i, globally
// rescaled so that mean |B_{k+1,k}|^2 matches (N_{k+1} N_k)^{-1/2} in the
// geometric mean over adjacent band pairs.
BandedEnvironment build_spin_environment(int n, double deltaB, std::uint64_t seed);
BandedEnvironment build_spin_environment(const EnvironmentSpec& spec);

BandedEnvironment build_environment(const EnvironmentSpec& spec);

// Raw spin weights g_i before normalization, and the applied scale.
struct SpinWeights {
    std::vector<double> g;
    double scale{1.0};
};
SpinWeights spin_weights(int n, std::uint64_t seed);

// H = (deltaS/2) sigma_z (x) 1 + 1 (x) H_B + lambda sigma_x (x) B, with the
// ground level at -deltaS/2.
MatrixXc build_total_hamiltonian(const ModelParams& params, const BandedEnvironment& env);

enum class BetaMethod { log_approx, digamma };

double digamma(double x);
double beta_working_point(int n, int k0, double deltaB, BetaMethod method);
// ln(N_high/N_low) / ((k_high - k_low) deltaB)
double effective_beta(int n, int k_low, int k_high, double deltaB);

}  // namespace effenv
