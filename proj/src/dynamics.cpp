#include "effenv/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace effenv {

std::string to_string(ResetMode m) { return m == ResetMode::exact ? "exact" : "coarse"; }
std::string to_string(Engine e) { return e == Engine::sampled ? "sampled" : "nonselective"; }

ResetMode reset_mode_from_string(const std::string& s) {
    if (s == "exact") return ResetMode::exact;
    if (s == "coarse") return ResetMode::coarse;
    throw std::invalid_argument("unknown reset mode '" + s + "' (expected exact|coarse)");
}

Engine engine_from_string(const std::string& s) {
    if (s == "sampled") return Engine::sampled;
    if (s == "nonselective") return Engine::nonselective;
    throw std::invalid_argument("unknown engine '" + s + "' (expected sampled|nonselective)");
}

// ----------------------------------------------------------------- propagator

Propagator::Propagator(const MatrixXc& hamiltonian, double dt) {
    if (hamiltonian.rows() != hamiltonian.cols() || hamiltonian.rows() == 0) {
        throw std::invalid_argument("Propagator: Hamiltonian must be square and non-empty");
    }
    const double scale = std::max(1.0, hamiltonian.cwiseAbs().maxCoeff());
    const double residual = (hamiltonian - hamiltonian.adjoint()).cwiseAbs().maxCoeff();
    if (residual > 1e-10 * scale) {
        std::ostringstream os;
        os << "Propagator: Hamiltonian is not Hermitian (residual " << residual << ")";
        throw std::invalid_argument(os.str());
    }
    Eigen::SelfAdjointEigenSolver<MatrixXc> solver(hamiltonian);
    if (solver.info() != Eigen::Success) {
        throw std::runtime_error("Propagator: eigendecomposition failed");
    }
    eigenvalues_ = solver.eigenvalues();
    eigenvectors_ = solver.eigenvectors();
    set_dt(dt);
}

void Propagator::set_dt(double dt) {
    if (!(dt >= 0.0) || !std::isfinite(dt)) throw std::invalid_argument("Propagator: dt must be finite and >= 0");
    dt_ = dt;
    unitary_ = unitary_at(dt);
}

MatrixXc Propagator::unitary_at(double dt) const {
    const auto d = eigenvalues_.size();
    if (dt == 0.0) return MatrixXc::Identity(d, d);
    VectorXc phases(d);
    for (Eigen::Index i = 0; i < d; ++i) {
        phases(i) = std::polar(1.0, -eigenvalues_(i) * dt);
    }
    return eigenvectors_ * phases.asDiagonal() * eigenvectors_.adjoint();
}

Propagator make_propagator(const MatrixXc& hamiltonian, double dt) { return Propagator(hamiltonian, dt); }

// ----------------------------------------------------------------- projectors

Eigen::MatrixXd BandProjector::dense() const {
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    for (std::size_t i = begin; i < begin + size; ++i) {
        P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = 1.0;
    }
    return P;
}

namespace {

BandProjector projector_from_layout(const BandLayout& layout, int k) {
    const std::size_t i = layout.index_of(k);
    return {k, 2 * layout.offsets[i], 2 * layout.sizes[i], layout.joint_dim()};
}

bool same_layout(const BandLayout& a, const BandLayout& b) {
    return a.ks == b.ks && a.sizes == b.sizes;
}

Eigen::Vector4cd vec(const Matrix2c& m) { return {m(0, 0), m(0, 1), m(1, 0), m(1, 1)}; }

Matrix2c unvec(const Eigen::Vector4cd& v) {
    Matrix2c m;
    m << v(0), v(1), v(2), v(3);
    return m;
}

double real_trace(const Eigen::Vector4cd& v) { return v(0).real() + v(3).real(); }

// Partial trace over the environment of a vector/matrix on a contiguous band block.
Matrix2c reduce_vector(const VectorXc& psi) {
    Matrix2c r = Matrix2c::Zero();
    const Eigen::Index levels = psi.size() / 2;
    for (Eigen::Index m = 0; m < levels; ++m) {
        const Complex a0 = psi(2 * m);
        const Complex a1 = psi(2 * m + 1);
        r(0, 0) += a0 * std::conj(a0);
        r(0, 1) += a0 * std::conj(a1);
        r(1, 0) += a1 * std::conj(a0);
        r(1, 1) += a1 * std::conj(a1);
    }
    return r;
}

Matrix2c reduce_matrix(const MatrixXc& rho) {
    Matrix2c r = Matrix2c::Zero();
    const Eigen::Index levels = rho.rows() / 2;
    for (Eigen::Index m = 0; m < levels; ++m) {
        r(0, 0) += rho(2 * m, 2 * m);
        r(0, 1) += rho(2 * m, 2 * m + 1);
        r(1, 0) += rho(2 * m + 1, 2 * m);
        r(1, 1) += rho(2 * m + 1, 2 * m + 1);
    }
    return r;
}

QubitState normalized_qubit(const Matrix2c& m) {
    const double tr = (m(0, 0) + m(1, 1)).real();
    return QubitState::from_matrix(m / tr, 1e-8);
}

// Index of the outcome whose cumulative weight first exceeds u * total.
std::size_t sample_index(const double* weights, std::size_t count, double total, Rng& rng) {
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const double target = uniform(rng) * total;
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < count; ++i) {
        if (weights[i] <= 0.0) continue;
        acc += weights[i];
        last_positive = i;
        if (target < acc) return i;
    }
    return last_positive;
}

constexpr double kMinTotalWeight = 1e-15;

}  // namespace

BandProjector band_projector(const BandedEnvironment& env, int k) {
    return projector_from_layout(env.layout(), k);
}

// ---------------------------------------------------------------- total state

TotalState::TotalState(std::variant<VectorXc, MatrixXc> data, BandLayout layout)
    : data_(std::move(data)), layout_(std::move(layout)) {}

TotalState TotalState::pure(VectorXc psi, BandLayout layout) {
    if (static_cast<std::size_t>(psi.size()) != layout.joint_dim()) {
        throw std::invalid_argument("TotalState: vector dimension does not match the band layout");
    }
    const double norm = psi.norm();
    if (std::abs(norm - 1.0) >= 1e-10) {
        std::ostringstream os;
        os << "TotalState: pure state norm " << norm << " differs from one";
        throw std::invalid_argument(os.str());
    }
    return TotalState(std::move(psi), std::move(layout));
}

TotalState TotalState::mixed(MatrixXc rho, BandLayout layout) {
    if (rho.rows() != rho.cols() || static_cast<std::size_t>(rho.rows()) != layout.joint_dim()) {
        throw std::invalid_argument("TotalState: density matrix dimension does not match the band layout");
    }
    const double tr = rho.trace().real();
    if (std::abs(tr - 1.0) >= 1e-9) {
        std::ostringstream os;
        os << "TotalState: density matrix trace " << tr << " differs from one";
        throw std::invalid_argument(os.str());
    }
    if ((rho - rho.adjoint()).cwiseAbs().maxCoeff() > 1e-9) {
        throw std::invalid_argument("TotalState: density matrix is not Hermitian");
    }
    // Full positivity costs an eigensolve; diagnostics() reports it on demand.
    if (rho.diagonal().real().minCoeff() < -1e-9) {
        throw std::invalid_argument("TotalState: density matrix has a negative population");
    }
    return TotalState(std::move(rho), std::move(layout));
}

TotalState TotalState::product(const QubitState& rho_s, const MatrixXc& rho_env, BandLayout layout) {
    const auto d = static_cast<Eigen::Index>(layout.env_dim());
    if (rho_env.rows() != d || rho_env.cols() != d) {
        throw std::invalid_argument("TotalState: environment state dimension mismatch");
    }
    const Matrix2c s = rho_s.matrix();
    MatrixXc rho(2 * d, 2 * d);
    for (Eigen::Index e = 0; e < d; ++e) {
        for (Eigen::Index f = 0; f < d; ++f) {
            rho.block<2, 2>(2 * e, 2 * f) = rho_env(e, f) * s;
        }
    }
    return mixed(std::move(rho), std::move(layout));
}

TotalState::Representation TotalState::representation() const noexcept {
    return std::holds_alternative<VectorXc>(data_) ? Representation::pure : Representation::mixed;
}

const VectorXc& TotalState::vector() const {
    if (!is_pure()) throw std::logic_error("TotalState: not a pure state");
    return std::get<VectorXc>(data_);
}

const MatrixXc& TotalState::density() const {
    if (is_pure()) throw std::logic_error("TotalState: not a density matrix");
    return std::get<MatrixXc>(data_);
}

MatrixXc TotalState::density_matrix() const {
    if (is_pure()) {
        const auto& psi = std::get<VectorXc>(data_);
        return psi * psi.adjoint();
    }
    return std::get<MatrixXc>(data_);
}

void TotalState::evolve(const Propagator& prop) {
    if (static_cast<std::size_t>(prop.dim()) != dim()) {
        throw std::invalid_argument("TotalState::evolve: propagator dimension mismatch");
    }
    const MatrixXc& U = prop.unitary();
    if (is_pure()) {
        auto& psi = std::get<VectorXc>(data_);
        psi = (U * psi).eval();
    } else {
        auto& rho = std::get<MatrixXc>(data_);
        rho = (U * rho * U.adjoint()).eval();
    }
}

double TotalState::trace() const {
    if (is_pure()) return std::get<VectorXc>(data_).squaredNorm();
    return std::get<MatrixXc>(data_).trace().real();
}

TotalState::Diagnostics TotalState::diagnostics() const {
    Diagnostics d;
    d.trace_error = std::abs(trace() - 1.0);
    if (is_pure()) return d;
    const auto& rho = std::get<MatrixXc>(data_);
    d.hermiticity_error = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
    const MatrixXc herm = 0.5 * (rho + rho.adjoint());
    Eigen::SelfAdjointEigenSolver<MatrixXc> solver(herm, Eigen::EigenvaluesOnly);
    d.min_eigenvalue = solver.eigenvalues().minCoeff();
    return d;
}

// --------------------------------------------------------------- measurements

std::vector<double> band_weights(const TotalState& state) {
    const auto& layout = state.layout();
    std::vector<double> w(layout.ks.size(), 0.0);
    for (std::size_t i = 0; i < layout.ks.size(); ++i) {
        const auto begin = static_cast<Eigen::Index>(2 * layout.offsets[i]);
        const auto size = static_cast<Eigen::Index>(2 * layout.sizes[i]);
        if (state.is_pure()) {
            w[i] = state.vector().segment(begin, size).squaredNorm();
        } else {
            w[i] = state.density().diagonal().segment(begin, size).real().sum();
        }
    }
    return w;
}

SelectiveOutcome project_onto_band(const TotalState& state, int k) {
    const auto P = projector_from_layout(state.layout(), k);
    const auto begin = static_cast<Eigen::Index>(P.begin);
    const auto size = static_cast<Eigen::Index>(P.size);
    const auto d = static_cast<Eigen::Index>(P.dim);
    if (state.is_pure()) {
        VectorXc psi = VectorXc::Zero(d);
        psi.segment(begin, size) = state.vector().segment(begin, size);
        const double w = psi.squaredNorm();
        if (w < kMinTotalWeight) throw std::runtime_error("project_onto_band: band carries no weight");
        psi /= std::sqrt(w);
        return {k, TotalState::pure(std::move(psi), state.layout()), w};
    }
    MatrixXc rho = MatrixXc::Zero(d, d);
    rho.block(begin, begin, size, size) = state.density().block(begin, begin, size, size);
    const double w = rho.trace().real();
    if (w < kMinTotalWeight) throw std::runtime_error("project_onto_band: band carries no weight");
    rho /= w;
    return {k, TotalState::mixed(std::move(rho), state.layout()), w};
}

SelectiveOutcome measure_band_selective(const TotalState& state, const BandedEnvironment& env, Rng& rng) {
    if (!same_layout(state.layout(), env.layout())) {
        throw std::invalid_argument("measure_band_selective: state and environment layouts differ");
    }
    const auto w = band_weights(state);
    double total = 0.0;
    for (double x : w) total += std::max(0.0, x);
    if (total < kMinTotalWeight) {
        throw std::runtime_error("measure_band_selective: all band weights vanish (normalization lost)");
    }
    const std::size_t i = sample_index(w.data(), w.size(), total, rng);
    return project_onto_band(state, state.layout().ks[i]);
}

TotalState measure_band_nonselective(const TotalState& state) {
    const MatrixXc rho = state.density_matrix();
    const auto& layout = state.layout();
    const auto d = rho.rows();
    MatrixXc out = MatrixXc::Zero(d, d);
    for (std::size_t i = 0; i < layout.ks.size(); ++i) {
        const auto b = static_cast<Eigen::Index>(2 * layout.offsets[i]);
        const auto s = static_cast<Eigen::Index>(2 * layout.sizes[i]);
        out.block(b, b, s, s) = rho.block(b, b, s, s);
    }
    return TotalState::mixed(std::move(out), layout);
}

TotalState coarse_reset(const QubitState& rho_s, const BandedEnvironment& env, int k) {
    rho_s.validate();
    const auto& layout = env.layout();
    const std::size_t i = layout.index_of(k);
    const auto d = static_cast<Eigen::Index>(layout.env_dim());
    MatrixXc rho_env = MatrixXc::Zero(d, d);
    const auto b = static_cast<Eigen::Index>(layout.offsets[i]);
    const auto n = static_cast<Eigen::Index>(layout.sizes[i]);
    for (Eigen::Index m = 0; m < n; ++m) rho_env(b + m, b + m) = 1.0 / static_cast<double>(n);
    return TotalState::product(rho_s, rho_env, layout);
}

QubitState reduced_qubit_state(const TotalState& state) {
    const Matrix2c r = state.is_pure() ? reduce_vector(state.vector()) : reduce_matrix(state.density());
    return QubitState::from_matrix(r, 1e-9);
}

MatrixXc environment_marginal(const TotalState& state) {
    const auto d = static_cast<Eigen::Index>(state.layout().env_dim());
    MatrixXc rb(d, d);
    if (state.is_pure()) {
        const auto& psi = state.vector();
        for (Eigen::Index e = 0; e < d; ++e) {
            for (Eigen::Index f = 0; f < d; ++f) {
                rb(e, f) = psi(2 * e) * std::conj(psi(2 * f)) + psi(2 * e + 1) * std::conj(psi(2 * f + 1));
            }
        }
    } else {
        const auto& rho = state.density();
        for (Eigen::Index e = 0; e < d; ++e) {
            for (Eigen::Index f = 0; f < d; ++f) {
                rb(e, f) = rho(2 * e, 2 * f) + rho(2 * e + 1, 2 * f + 1);
            }
        }
    }
    return rb;
}

double cojump_norm(const TotalState& state) {
    const MatrixXc rho = state.density_matrix();
    const Matrix2c s = reduced_qubit_state(state).matrix();
    const MatrixXc rb = environment_marginal(state);
    const auto d = rb.rows();
    double acc = 0.0;
    for (Eigen::Index e = 0; e < d; ++e) {
        for (Eigen::Index f = 0; f < d; ++f) {
            const Matrix2c diff = rho.block<2, 2>(2 * e, 2 * f) - rb(e, f) * s;
            acc += diff.squaredNorm();
        }
    }
    return std::sqrt(acc);
}

// ------------------------------------------------------------------- series

double plateau_rho00(const std::vector<double>& rho00, double fraction) {
    if (rho00.empty()) throw std::invalid_argument("plateau_rho00: empty series");
    const auto count = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(fraction * rho00.size())));
    double acc = 0.0;
    for (std::size_t i = rho00.size() - count; i < rho00.size(); ++i) acc += rho00[i];
    return acc / static_cast<double>(count);
}

double plateau_rho00(const EnsembleSeries& series, double fraction) {
    std::vector<double> v;
    v.reserve(series.points.size());
    for (const auto& p : series.points) v.push_back(p.mean.rho00);
    return plateau_rho00(v, fraction);
}

std::uint64_t trajectory_seed(std::uint64_t master_seed, std::uint64_t index) noexcept {
    return derive_seed(master_seed, index);
}

// ----------------------------------------------------------------- simulator

Simulator::Simulator(const ModelParams& params, BandedEnvironment env)
    : params_(params),
      env_(std::move(env)),
      propagator_(build_total_hamiltonian(params_, env_), params_.dt),
      nbands_(env_.layout().ks.size()) {
    const auto& layout = env_.layout();
    const MatrixXc& U = propagator_.unitary();
    blocks_.resize(nbands_ * nbands_);
    transfer_.resize(nbands_ * nbands_);
    for (std::size_t to = 0; to < nbands_; ++to) {
        for (std::size_t from = 0; from < nbands_; ++from) {
            const auto rt = static_cast<Eigen::Index>(2 * layout.offsets[to]);
            const auto rc = static_cast<Eigen::Index>(2 * layout.offsets[from]);
            const auto nt = static_cast<Eigen::Index>(layout.sizes[to]);
            const auto nf = static_cast<Eigen::Index>(layout.sizes[from]);
            MatrixXc blk = U.block(rt, rc, 2 * nt, 2 * nf);

            // Sub-blocks X[c][a](m, n) = <c, m| U |a, n> for TLS levels a, c.
            MatrixXc X[2][2];
            for (int c = 0; c < 2; ++c) {
                for (int a = 0; a < 2; ++a) {
                    X[c][a] = blk(Eigen::seqN(c, nt, 2), Eigen::seqN(a, nf, 2));
                }
            }
            Eigen::Matrix4cd S;
            for (int c = 0; c < 2; ++c) {
                for (int d = 0; d < 2; ++d) {
                    for (int a = 0; a < 2; ++a) {
                        for (int b = 0; b < 2; ++b) {
                            S(2 * c + d, 2 * a + b) =
                                X[c][a].cwiseProduct(X[d][b].conjugate()).sum() / static_cast<double>(nf);
                        }
                    }
                }
            }
            blocks_[to * nbands_ + from] = std::move(blk);
            transfer_[to * nbands_ + from] = S;
        }
    }
}

const MatrixXc& Simulator::block(std::size_t to, std::size_t from) const {
    return blocks_[to * nbands_ + from];
}

const Eigen::Matrix4cd& Simulator::transfer(int to, int from) const {
    const auto& layout = env_.layout();
    return transfer_[layout.index_of(to) * nbands_ + layout.index_of(from)];
}

void Simulator::run_sampled_into(const QubitState& rho0, int k0, int steps, std::uint64_t seed, ResetMode reset,
                                 Trajectory& out) const {
    if (steps < 1) throw std::invalid_argument("run_trajectory: steps must be >= 1");
    rho0.validate();
    const auto& layout = env_.layout();
    std::size_t cur = layout.index_of(k0);

    Rng rng(seed);
    out.seed = seed;
    out.reset = reset;
    out.max_leak = 0.0;
    out.points.clear();
    out.points.reserve(static_cast<std::size_t>(steps) + 1);
    out.points.push_back({k0, rho0, 1.0});

    double weights[3];
    std::size_t candidates[3];
    auto neighbours = [&](std::size_t i) {
        std::size_t count = 0;
        if (i > 0) candidates[count++] = i - 1;
        candidates[count++] = i;
        if (i + 1 < nbands_) candidates[count++] = i + 1;
        return count;
    };
    auto choose = [&](std::size_t count) {
        double total = 0.0;
        for (std::size_t c = 0; c < count; ++c) total += std::max(0.0, weights[c]);
        if (total < kMinTotalWeight) {
            throw std::runtime_error("run_trajectory: adjacent band weights vanish (normalization lost)");
        }
        out.max_leak = std::max(out.max_leak, 1.0 - total);
        return sample_index(weights, count, total, rng);
    };

    if (reset == ResetMode::coarse) {
        Eigen::Vector4cd state = vec(rho0.matrix());
        Eigen::Vector4cd next[3];
        for (int j = 1; j <= steps; ++j) {
            const std::size_t count = neighbours(cur);
            for (std::size_t c = 0; c < count; ++c) {
                next[c] = transfer_[candidates[c] * nbands_ + cur] * state;
                weights[c] = real_trace(next[c]);
            }
            const std::size_t pick = choose(count);
            cur = candidates[pick];
            state = next[pick] / weights[pick];
            out.points.push_back({layout.ks[cur], normalized_qubit(unvec(state)), weights[pick]});
        }
        return;
    }

    const auto n0 = static_cast<Eigen::Index>(layout.sizes[cur]);
    if (rho0.purity() > 1.0 - 1e-12) {
        // Pure TLS: unravel the band-k0 mixture into a uniformly drawn basis level.
        Eigen::SelfAdjointEigenSolver<Matrix2c> es(rho0.matrix());
        const Eigen::Vector2cd tls = es.eigenvectors().col(1);
        std::uniform_int_distribution<Eigen::Index> level(0, n0 - 1);
        const Eigen::Index m0 = level(rng);
        VectorXc psi = VectorXc::Zero(2 * n0);
        psi(2 * m0) = tls(0);
        psi(2 * m0 + 1) = tls(1);
        VectorXc next[3];
        for (int j = 1; j <= steps; ++j) {
            const std::size_t count = neighbours(cur);
            for (std::size_t c = 0; c < count; ++c) {
                next[c] = block(candidates[c], cur) * psi;
                weights[c] = next[c].squaredNorm();
            }
            const std::size_t pick = choose(count);
            cur = candidates[pick];
            psi = next[pick] / std::sqrt(weights[pick]);
            out.points.push_back({layout.ks[cur], normalized_qubit(reduce_vector(psi)), weights[pick]});
        }
        return;
    }

    MatrixXc rho = MatrixXc::Zero(2 * n0, 2 * n0);
    const Matrix2c s = rho0.matrix() / static_cast<double>(n0);
    for (Eigen::Index m = 0; m < n0; ++m) rho.block<2, 2>(2 * m, 2 * m) = s;
    MatrixXc next[3];
    for (int j = 1; j <= steps; ++j) {
        const std::size_t count = neighbours(cur);
        for (std::size_t c = 0; c < count; ++c) {
            const MatrixXc& B = block(candidates[c], cur);
            next[c] = B * rho * B.adjoint();
            weights[c] = next[c].trace().real();
        }
        const std::size_t pick = choose(count);
        cur = candidates[pick];
        rho = next[pick] / weights[pick];
        out.points.push_back({layout.ks[cur], normalized_qubit(reduce_matrix(rho)), weights[pick]});
    }
}

Trajectory Simulator::run_trajectory(const QubitState& rho0, int k0, int steps, std::uint64_t seed,
                                     ResetMode reset) const {
    Trajectory t;
    run_sampled_into(rho0, k0, steps, seed, reset, t);
    return t;
}

EnsembleSeries Simulator::run_nonselective(const QubitState& rho0, int k0, int steps, ResetMode reset) const {
    if (steps < 1) throw std::invalid_argument("run_ensemble: steps must be >= 1");
    rho0.validate();
    const auto& layout = env_.layout();
    const std::size_t start = layout.index_of(k0);

    EnsembleSeries series;
    series.engine = Engine::nonselective;
    series.reset = reset;
    series.trajectories = 0;
    series.points.reserve(static_cast<std::size_t>(steps) + 1);
    series.points.push_back({rho0, 0.0, 0.0, 0.0});

    auto record = [&](const Matrix2c& total) {
        series.points.push_back({normalized_qubit(total), 0.0, 0.0, 0.0});
    };

    if (reset == ResetMode::coarse) {
        std::vector<Eigen::Vector4cd> sigma(nbands_, Eigen::Vector4cd::Zero());
        std::vector<bool> occupied(nbands_, false);
        sigma[start] = vec(rho0.matrix());
        occupied[start] = true;
        std::vector<Eigen::Vector4cd> next(nbands_);
        for (int j = 1; j <= steps; ++j) {
            for (std::size_t to = 0; to < nbands_; ++to) {
                next[to].setZero();
                for (std::size_t from = 0; from < nbands_; ++from) {
                    if (occupied[from]) next[to] += transfer_[to * nbands_ + from] * sigma[from];
                }
            }
            Eigen::Vector4cd total = Eigen::Vector4cd::Zero();
            for (std::size_t i = 0; i < nbands_; ++i) {
                sigma[i] = next[i];
                occupied[i] = true;
                total += sigma[i];
            }
            record(unvec(total));
        }
        return series;
    }

    // Exact environment state: the post-measurement state is block diagonal in bands.
    std::vector<MatrixXc> rho(nbands_);
    std::vector<bool> occupied(nbands_, false);
    for (std::size_t i = 0; i < nbands_; ++i) {
        const auto n = static_cast<Eigen::Index>(2 * layout.sizes[i]);
        rho[i] = MatrixXc::Zero(n, n);
    }
    {
        const auto n0 = static_cast<Eigen::Index>(layout.sizes[start]);
        const Matrix2c s = rho0.matrix() / static_cast<double>(n0);
        for (Eigen::Index m = 0; m < n0; ++m) rho[start].block<2, 2>(2 * m, 2 * m) = s;
        occupied[start] = true;
    }
    std::vector<MatrixXc> next(nbands_);
    for (int j = 1; j <= steps; ++j) {
        for (std::size_t to = 0; to < nbands_; ++to) {
            next[to] = MatrixXc::Zero(rho[to].rows(), rho[to].cols());
            for (std::size_t from = 0; from < nbands_; ++from) {
                if (!occupied[from]) continue;
                const MatrixXc& B = block(to, from);
                next[to].noalias() += B * rho[from] * B.adjoint();
            }
        }
        Matrix2c total = Matrix2c::Zero();
        for (std::size_t i = 0; i < nbands_; ++i) {
            rho[i].swap(next[i]);
            occupied[i] = true;
            total += reduce_matrix(rho[i]);
        }
        record(total);
    }
    return series;
}

EnsembleSeries Simulator::run_ensemble(const QubitState& rho0, int k0, int steps, int trajectories,
                                       std::uint64_t master_seed, ResetMode reset, Engine engine) const {
    if (engine == Engine::nonselective) {
        auto series = run_nonselective(rho0, k0, steps, reset);
        series.master_seed = master_seed;
        return series;
    }
    if (trajectories < 1) throw std::invalid_argument("run_ensemble: need at least one trajectory");
    if (steps < 1) throw std::invalid_argument("run_ensemble: steps must be >= 1");

    const auto npoints = static_cast<std::size_t>(steps) + 1;
    struct Sums {
        std::vector<double> s00, q00, sre, qre, sim, qim;
        double leak{0.0};
    };
    // Fixed chunking keeps the summation order independent of the thread count.
    constexpr int kChunk = 32;
    const int nchunks = (trajectories + kChunk - 1) / kChunk;
    std::vector<Sums> partial(static_cast<std::size_t>(nchunks));

#pragma omp parallel for schedule(dynamic)
    for (int c = 0; c < nchunks; ++c) {
        Sums& acc = partial[static_cast<std::size_t>(c)];
        for (auto* v : {&acc.s00, &acc.q00, &acc.sre, &acc.qre, &acc.sim, &acc.qim}) v->assign(npoints, 0.0);
        Trajectory t;
        const int end = std::min(trajectories, (c + 1) * kChunk);
        for (int i = c * kChunk; i < end; ++i) {
            run_sampled_into(rho0, k0, steps, trajectory_seed(master_seed, static_cast<std::uint64_t>(i)), reset, t);
            acc.leak = std::max(acc.leak, t.max_leak);
            for (std::size_t j = 0; j < npoints; ++j) {
                const auto& r = t.points[j].rho;
                acc.s00[j] += r.rho00;
                acc.q00[j] += r.rho00 * r.rho00;
                acc.sre[j] += r.rho10.real();
                acc.qre[j] += r.rho10.real() * r.rho10.real();
                acc.sim[j] += r.rho10.imag();
                acc.qim[j] += r.rho10.imag() * r.rho10.imag();
            }
        }
    }

    Sums total;
    for (auto* v : {&total.s00, &total.q00, &total.sre, &total.qre, &total.sim, &total.qim}) v->assign(npoints, 0.0);
    for (const auto& p : partial) {
        total.leak = std::max(total.leak, p.leak);
        for (std::size_t j = 0; j < npoints; ++j) {
            total.s00[j] += p.s00[j];
            total.q00[j] += p.q00[j];
            total.sre[j] += p.sre[j];
            total.qre[j] += p.qre[j];
            total.sim[j] += p.sim[j];
            total.qim[j] += p.qim[j];
        }
    }

    const double m = trajectories;
    auto stderr_of = [m](double s, double q) {
        if (m < 2.0) return 0.0;
        const double var = std::max(0.0, (q - s * s / m) / (m - 1.0));
        return std::sqrt(var / m);
    };
    EnsembleSeries series;
    series.engine = Engine::sampled;
    series.reset = reset;
    series.trajectories = trajectories;
    series.master_seed = master_seed;
    series.max_leak = total.leak;
    series.points.reserve(npoints);
    for (std::size_t j = 0; j < npoints; ++j) {
        EnsemblePoint p;
        p.mean = QubitState::make(total.s00[j] / m, Complex(total.sre[j] / m, total.sim[j] / m));
        p.stderr00 = stderr_of(total.s00[j], total.q00[j]);
        p.stderr_re10 = stderr_of(total.sre[j], total.qre[j]);
        p.stderr_im10 = stderr_of(total.sim[j], total.qim[j]);
        series.points.push_back(p);
    }
    return series;
}

Trajectory run_trajectory(const ModelParams& params, const BandedEnvironment& env, const QubitState& rho0, int k0,
                          int steps, std::uint64_t seed, ResetMode reset) {
    return Simulator(params, env).run_trajectory(rho0, k0, steps, seed, reset);
}

EnsembleSeries run_ensemble(const ModelParams& params, const BandedEnvironment& env, const QubitState& rho0, int k0,
                            int steps, int trajectories, std::uint64_t master_seed, ResetMode reset, Engine engine) {
    return Simulator(params, env).run_ensemble(rho0, k0, steps, trajectories, master_seed, reset, engine);
}

}  // namespace effenv
