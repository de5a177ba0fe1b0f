// dynamics.hpp: exact joint evolution with periodic band measurements
//
// Two engines share one propagator:
//   sampled       independent quantum trajectories with Born-rule outcomes
//   nonselective  the outcome-averaged map rho -> sum_k P_k rho P_k, i.e. the
//                 exact ensemble mean of the sampled engine
// Each runs with either the exact post-measurement environment state or the
// coarse reset rho_S (x) 1_k / N_k after every measurement.

#pragma once

#include "effenv/model.hpp"
#include "effenv/types.hpp"

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace effenv {

enum class ResetMode { exact, coarse };
enum class Engine { sampled, nonselective };

std::string to_string(ResetMode m);
std::string to_string(Engine e);
ResetMode reset_mode_from_string(const std::string& s);
Engine engine_from_string(const std::string& s);

// U = V exp(-i diag(E) dt) V^dagger from a cached Hermitian eigendecomposition.
class Propagator {
public:
    Propagator(const MatrixXc& hamiltonian, double dt);

    double dt() const noexcept { return dt_; }
    // Regenerates U for a new time step without re-diagonalizing.
    void set_dt(double dt);
    MatrixXc unitary_at(double dt) const;

    const MatrixXc& unitary() const noexcept { return unitary_; }
    const Eigen::VectorXd& eigenvalues() const noexcept { return eigenvalues_; }
    const MatrixXc& eigenvectors() const noexcept { return eigenvectors_; }
    Eigen::Index dim() const noexcept { return eigenvalues_.size(); }

private:
    Eigen::VectorXd eigenvalues_;
    MatrixXc eigenvectors_;
    MatrixXc unitary_;
    double dt_{0.0};
};

Propagator make_propagator(const MatrixXc& hamiltonian, double dt);

// Orthogonal projector 1_S (x) P_k; band k is a contiguous joint index range.
struct BandProjector {
    int k{0};
    std::size_t begin{0};
    std::size_t size{0};
    std::size_t dim{0};

    Eigen::MatrixXd dense() const;
};

BandProjector band_projector(const BandedEnvironment& env, int k);

// Joint TLS (x) environment state as a pure vector or a density matrix.
class TotalState {
public:
    enum class Representation { pure, mixed };

    static TotalState pure(VectorXc psi, BandLayout layout);
    static TotalState mixed(MatrixXc rho, BandLayout layout);
    // rho_S (x) rho_B for an arbitrary environment density matrix.
    static TotalState product(const QubitState& rho_s, const MatrixXc& rho_env, BandLayout layout);

    Representation representation() const noexcept;
    bool is_pure() const noexcept { return representation() == Representation::pure; }
    const VectorXc& vector() const;
    const MatrixXc& density() const;
    MatrixXc density_matrix() const;  // converts a pure vector to |psi><psi|

    const BandLayout& layout() const noexcept { return layout_; }
    std::size_t dim() const noexcept { return layout_.joint_dim(); }

    void evolve(const Propagator& prop);
    double trace() const;

    struct Diagnostics {
        double trace_error{0.0};
        double hermiticity_error{0.0};
        double min_eigenvalue{0.0};
    };
    Diagnostics diagnostics() const;

private:
    TotalState(std::variant<VectorXc, MatrixXc> data, BandLayout layout);

    std::variant<VectorXc, MatrixXc> data_;
    BandLayout layout_;
};

// Born weights Tr(P_k rho P_k) per band, in layout order.
std::vector<double> band_weights(const TotalState& state);

struct SelectiveOutcome {
    int k{0};
    TotalState collapsed;
    double probability{0.0};
};

SelectiveOutcome measure_band_selective(const TotalState& state, const BandedEnvironment& env, Rng& rng);
// Collapse onto a chosen band; throws if that band carries no weight.
SelectiveOutcome project_onto_band(const TotalState& state, int k);

TotalState measure_band_nonselective(const TotalState& state);
TotalState coarse_reset(const QubitState& rho_s, const BandedEnvironment& env, int k);

QubitState reduced_qubit_state(const TotalState& state);
MatrixXc environment_marginal(const TotalState& state);
// Frobenius norm of rho_tot - rho_S (x) rho_B.
double cojump_norm(const TotalState& state);

// Per-step record of one trajectory. Entry j = 0 holds the initial state.
struct TrajectoryPoint {
    int k{0};
    QubitState rho;
    double probability{1.0};
};

struct Trajectory {
    std::uint64_t seed{0};
    ResetMode reset{ResetMode::coarse};
    std::vector<TrajectoryPoint> points;
    // Largest single-step Born weight outside {k-1, k, k+1}; such outcomes are
    // excluded from sampling and the rest renormalized.
    double max_leak{0.0};
};

struct EnsemblePoint {
    QubitState mean;
    double stderr00{0.0};
    double stderr_re10{0.0};
    double stderr_im10{0.0};
};

struct EnsembleSeries {
    Engine engine{Engine::nonselective};
    ResetMode reset{ResetMode::coarse};
    int trajectories{0};  // 0 for the nonselective engine
    std::uint64_t master_seed{0};
    std::vector<EnsemblePoint> points;
    double max_leak{0.0};
};

// Mean of rho00 over the trailing fraction of the series (at least one point).
double plateau_rho00(const EnsembleSeries& series, double fraction = 0.2);
double plateau_rho00(const std::vector<double>& rho00, double fraction = 0.2);

std::uint64_t trajectory_seed(std::uint64_t master_seed, std::uint64_t index) noexcept;

// Holds the propagator and per-band blocks for one (params, environment) pair.
class Simulator {
public:
    Simulator(const ModelParams& params, BandedEnvironment env);

    const ModelParams& params() const noexcept { return params_; }
    const BandedEnvironment& environment() const noexcept { return env_; }
    const Propagator& propagator() const noexcept { return propagator_; }

    // Coarse-reset transfer map on vec(rho_S) = (rho00, rho01, rho10, rho11):
    // evolve rho_S (x) 1_from / N_from for dt, project on band `to`, trace out B.
    const Eigen::Matrix4cd& transfer(int to, int from) const;

    Trajectory run_trajectory(const QubitState& rho0, int k0, int steps, std::uint64_t seed,
                              ResetMode reset) const;

    EnsembleSeries run_ensemble(const QubitState& rho0, int k0, int steps, int trajectories,
                                std::uint64_t master_seed, ResetMode reset, Engine engine) const;

private:
    const MatrixXc& block(std::size_t to, std::size_t from) const;
    void run_sampled_into(const QubitState& rho0, int k0, int steps, std::uint64_t seed, ResetMode reset,
                          Trajectory& out) const;
    EnsembleSeries run_nonselective(const QubitState& rho0, int k0, int steps, ResetMode reset) const;

    ModelParams params_;
    BandedEnvironment env_;
    Propagator propagator_;
    std::size_t nbands_{0};
    std::vector<MatrixXc> blocks_;            // U restricted to (band to) x (band from)
    std::vector<Eigen::Matrix4cd> transfer_;  // coarse transfer maps, same indexing
};

Trajectory run_trajectory(const ModelParams& params, const BandedEnvironment& env, const QubitState& rho0,
                          int k0, int steps, std::uint64_t seed, ResetMode reset);

EnsembleSeries run_ensemble(const ModelParams& params, const BandedEnvironment& env, const QubitState& rho0,
                            int k0, int steps, int trajectories, std::uint64_t master_seed, ResetMode reset,
                            Engine engine);

}  // namespace effenv
