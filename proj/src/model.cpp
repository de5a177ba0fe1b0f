#include "effenv/model.hpp"

#include "json_util.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace effenv {

// ---------------------------------------------------------------- parameters

void ModelParams::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("ModelParams: " + what); };
    if (!std::isfinite(deltaS) || !std::isfinite(detuning) || !std::isfinite(lambda) ||
        !std::isfinite(dt) || !std::isfinite(beta)) {
        fail("non-finite value");
    }
    if (deltaS <= 0.0) fail("deltaS must be positive");
    if (deltaB() <= 0.0) fail("deltaS + detuning must be positive");
    if (lambda < 0.0) fail("lambda must be non-negative");
    if (dt < 0.0) fail("dt must be non-negative");
}

void to_json(nlohmann::json& j, const ModelParams& p) {
    j = nlohmann::json{{"deltaS", p.deltaS},
                       {"detuning", p.detuning},
                       {"lambda", p.lambda},
                       {"dt", p.dt},
                       {"beta", p.beta}};
}

void from_json(const nlohmann::json& j, ModelParams& p) {
    detail::require_object(j, "params");
    detail::reject_unknown_keys(j, {"deltaS", "detuning", "lambda", "dt", "beta"}, "params");
    detail::read_number(j, "deltaS", p.deltaS, "params");
    detail::read_number(j, "detuning", p.detuning, "params");
    detail::read_number(j, "lambda", p.lambda, "params");
    detail::read_number(j, "dt", p.dt, "params");
    detail::read_number(j, "beta", p.beta, "params");
}

// --------------------------------------------------------------- environment

std::string to_string(EnvironmentModel m) {
    return m == EnvironmentModel::random_band ? "random-band" : "sigma-x";
}

EnvironmentModel environment_model_from_string(const std::string& s) {
    if (s == "random-band") return EnvironmentModel::random_band;
    if (s == "sigma-x") return EnvironmentModel::sigma_x;
    throw std::invalid_argument("unknown environment model '" + s + "'");
}

void EnvironmentSpec::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("EnvironmentSpec: " + what); };
    if (n < 1) fail("n must be >= 1");
    if (n > 62) fail("n must be <= 62");
    if (!(deltaB > 0.0)) fail("deltaB must be positive");
    if (band_range.lo > band_range.hi) fail("empty band_range");
    if (band_range.lo < 0 || band_range.hi > n) fail("band_range outside [0, n]");
    if (!(band_width >= 0.0)) fail("band_width must be non-negative");
    if (band_width >= deltaB) fail("band_width must be smaller than deltaB");
}

void to_json(nlohmann::json& j, const EnvironmentSpec& s) {
    j = nlohmann::json{{"model", to_string(s.model)},
                       {"n", s.n},
                       {"deltaB", s.deltaB},
                       {"seed", s.seed},
                       {"band_width", s.band_width},
                       {"band_range", {s.band_range.lo, s.band_range.hi}}};
}

void from_json(const nlohmann::json& j, EnvironmentSpec& s) {
    detail::require_object(j, "environment");
    detail::reject_unknown_keys(j, {"model", "n", "deltaB", "seed", "band_width", "band_range"},
                                "environment");
    if (j.contains("model")) {
        if (!j.at("model").is_string()) throw detail::ConfigError("environment.model", "expected a string");
        try {
            s.model = environment_model_from_string(j.at("model").get<std::string>());
        } catch (const std::invalid_argument& e) {
            throw detail::ConfigError("environment.model", e.what());
        }
    }
    detail::read_int(j, "n", s.n, "environment");
    detail::read_number(j, "deltaB", s.deltaB, "environment");
    detail::read_uint(j, "seed", s.seed, "environment");
    detail::read_number(j, "band_width", s.band_width, "environment");
    if (j.contains("band_range")) {
        const auto& r = j.at("band_range");
        if (!r.is_array() || r.size() != 2 || !r[0].is_number_integer() || !r[1].is_number_integer()) {
            throw detail::ConfigError("environment.band_range", "expected [lo, hi] integers");
        }
        s.band_range = {r[0].get<int>(), r[1].get<int>()};
    } else {
        s.band_range = {0, s.n};
    }
}

BandRange default_band_range(int n, int k0, int half_width) {
    if (n <= 12) return {0, n};
    return {std::max(0, k0 - half_width), std::min(n, k0 + half_width)};
}

std::size_t BandLayout::env_dim() const noexcept {
    std::size_t total = 0;
    for (auto s : sizes) total += s;
    return total;
}

std::size_t BandLayout::index_of(int k) const {
    for (std::size_t i = 0; i < ks.size(); ++i) {
        if (ks[i] == k) return i;
    }
    std::ostringstream os;
    os << "band " << k << " is outside the environment's band range";
    throw std::out_of_range(os.str());
}

bool BandLayout::contains(int k) const noexcept {
    return std::find(ks.begin(), ks.end(), k) != ks.end();
}

BandedEnvironment::BandedEnvironment(EnvironmentSpec spec, std::vector<Band> bands,
                                     std::vector<MatrixXc> couplings)
    : spec_(std::move(spec)), bands_(std::move(bands)), couplings_(std::move(couplings)) {
    if (bands_.empty()) throw std::invalid_argument("BandedEnvironment: no bands");
    if (couplings_.size() + 1 != bands_.size()) {
        throw std::invalid_argument("BandedEnvironment: need one coupling block per adjacent band pair");
    }
    std::size_t offset = 0;
    for (std::size_t i = 0; i < bands_.size(); ++i) {
        const auto& b = bands_[i];
        if (i > 0 && b.k != bands_[i - 1].k + 1) {
            throw std::invalid_argument("BandedEnvironment: bands must be contiguous");
        }
        if (static_cast<std::int64_t>(b.offsets.size()) != b.degeneracy) {
            throw std::invalid_argument("BandedEnvironment: offsets size must equal degeneracy");
        }
        layout_.ks.push_back(b.k);
        layout_.offsets.push_back(offset);
        layout_.sizes.push_back(static_cast<std::size_t>(b.degeneracy));
        offset += static_cast<std::size_t>(b.degeneracy);
    }
    for (std::size_t i = 0; i < couplings_.size(); ++i) {
        if (couplings_[i].rows() != bands_[i + 1].degeneracy || couplings_[i].cols() != bands_[i].degeneracy) {
            throw std::invalid_argument("BandedEnvironment: coupling block shape mismatch");
        }
    }
}

const Band& BandedEnvironment::band(int k) const {
    return bands_[layout_.index_of(k)];
}

const MatrixXc& BandedEnvironment::coupling(int k) const {
    const std::size_t i = layout_.index_of(k);
    if (i + 1 >= bands_.size()) {
        std::ostringstream os;
        os << "no coupling block above band " << k << " within the band range";
        throw std::out_of_range(os.str());
    }
    return couplings_[i];
}

Eigen::VectorXd BandedEnvironment::env_energies() const {
    Eigen::VectorXd e(static_cast<Eigen::Index>(env_dim()));
    Eigen::Index idx = 0;
    for (const auto& b : bands_) {
        for (double w : b.offsets) e(idx++) = b.energy + w;
    }
    return e;
}

MatrixXc BandedEnvironment::coupling_operator() const {
    const auto d = static_cast<Eigen::Index>(env_dim());
    MatrixXc B = MatrixXc::Zero(d, d);
    for (std::size_t i = 0; i < couplings_.size(); ++i) {
        const auto lo = static_cast<Eigen::Index>(layout_.offsets[i]);
        const auto hi = static_cast<Eigen::Index>(layout_.offsets[i + 1]);
        const auto& C = couplings_[i];
        B.block(hi, lo, C.rows(), C.cols()) = C;
        B.block(lo, hi, C.cols(), C.rows()) = C.adjoint();
    }
    return B;
}

// --------------------------------------------------------------- degeneracy

std::int64_t binomial_degeneracy(int n, int k) {
    if (n < 0 || n > 62) throw std::out_of_range("binomial_degeneracy: n must lie in [0, 62]");
    if (k < 0 || k > n) throw std::out_of_range("binomial_degeneracy: k must lie in [0, n]");
    k = std::min(k, n - k);
    unsigned __int128 acc = 1;
    for (int i = 0; i < k; ++i) {
        acc = acc * static_cast<unsigned>(n - i) / static_cast<unsigned>(i + 1);
        if (acc > static_cast<unsigned __int128>(std::numeric_limits<std::int64_t>::max())) {
            throw std::overflow_error("binomial_degeneracy: result exceeds int64");
        }
    }
    return static_cast<std::int64_t>(acc);
}

double log_binomial(double n, double k) {
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

namespace {

void check_dimensions(const EnvironmentSpec& spec) {
    std::size_t total = 0;
    for (int k = spec.band_range.lo; k <= spec.band_range.hi; ++k) {
        total += static_cast<std::size_t>(binomial_degeneracy(spec.n, k));
        if (2 * total > kMaxHilbertDim) {
            std::ostringstream os;
            os << "environment: joint dimension exceeds " << kMaxHilbertDim
               << "; narrow band_range or reduce n";
            throw std::invalid_argument(os.str());
        }
    }
}

std::vector<Band> make_bands(const EnvironmentSpec& spec) {
    // Offsets come from their own stream so band_width does not perturb couplings.
    Rng offset_rng(derive_seed(spec.seed, 0x0ff5e75ULL));
    std::uniform_real_distribution<double> uniform(-0.5, 0.5);
    std::vector<Band> bands;
    for (int k = spec.band_range.lo; k <= spec.band_range.hi; ++k) {
        Band b;
        b.k = k;
        b.energy = k * spec.deltaB;
        b.degeneracy = binomial_degeneracy(spec.n, k);
        b.offsets.assign(static_cast<std::size_t>(b.degeneracy), 0.0);
        if (spec.band_width > 0.0) {
            for (auto& w : b.offsets) w = spec.band_width * uniform(offset_rng);
        }
        bands.push_back(std::move(b));
    }
    return bands;
}

// Basis of band k in the spin model: bit masks with k set bits, ascending.
std::vector<std::uint64_t> band_masks(int n, int k) {
    std::vector<std::uint64_t> masks;
    if (n > 24) throw std::invalid_argument("sigma-x environment: n too large to enumerate");
    for (std::uint64_t m = 0; m < (std::uint64_t{1} << n); ++m) {
        if (std::popcount(m) == k) masks.push_back(m);
    }
    return masks;
}

}  // namespace

BandedEnvironment build_band_environment(int n, double deltaB, std::uint64_t seed, double band_width,
                                         BandRange band_range) {
    EnvironmentSpec spec;
    spec.model = EnvironmentModel::random_band;
    spec.n = n;
    spec.deltaB = deltaB;
    spec.seed = seed;
    spec.band_width = band_width;
    spec.band_range = band_range;
    spec.validate();
    check_dimensions(spec);

    auto bands = make_bands(spec);
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<MatrixXc> couplings;
    for (std::size_t i = 0; i + 1 < bands.size(); ++i) {
        const auto rows = static_cast<Eigen::Index>(bands[i + 1].degeneracy);
        const auto cols = static_cast<Eigen::Index>(bands[i].degeneracy);
        // E|C|^2 = (N_{k+1} N_k)^{-1/2}, split evenly between real and imaginary parts.
        const double variance = 1.0 / std::sqrt(static_cast<double>(rows) * static_cast<double>(cols));
        const double sigma = std::sqrt(0.5 * variance);
        MatrixXc C(rows, cols);
        for (Eigen::Index c = 0; c < cols; ++c) {
            for (Eigen::Index r = 0; r < rows; ++r) {
                const double re = normal(rng);
                const double im = normal(rng);
                C(r, c) = Complex(sigma * re, sigma * im);
            }
        }
        couplings.push_back(std::move(C));
    }
    return BandedEnvironment(spec, std::move(bands), std::move(couplings));
}

BandedEnvironment build_band_environment(int n, double deltaB, std::uint64_t seed, double band_width) {
    return build_band_environment(n, deltaB, seed, band_width, BandRange{0, n});
}

SpinWeights spin_weights(int n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("spin_weights: n must be >= 1");
    SpinWeights w;
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    w.g.resize(static_cast<std::size_t>(n));
    for (auto& g : w.g) g = normal(rng);

    double sum_sq = 0.0;
    for (double g : w.g) sum_sq += g * g;
    // Mean |B|^2 over the (k+1,k) block is sum_sq * C(n-1,k) / (N_{k+1} N_k).
    double log_ratio = 0.0;
    for (int k = 0; k < n; ++k) {
        const double log_nk = log_binomial(n, k);
        const double log_nk1 = log_binomial(n, k + 1);
        const double log_target = -0.5 * (log_nk + log_nk1);
        const double log_raw = std::log(sum_sq) + log_binomial(n - 1, k) - (log_nk + log_nk1);
        log_ratio += log_target - log_raw;
    }
    w.scale = std::sqrt(std::exp(log_ratio / n));
    return w;
}

BandedEnvironment build_spin_environment(const EnvironmentSpec& spec_in) {
    EnvironmentSpec spec = spec_in;
    spec.model = EnvironmentModel::sigma_x;
    spec.validate();
    check_dimensions(spec);

    const auto weights = spin_weights(spec.n, spec.seed);
    auto bands = make_bands(spec);
    std::vector<MatrixXc> couplings;
    for (std::size_t i = 0; i + 1 < bands.size(); ++i) {
        const int k = bands[i].k;
        const auto lower = band_masks(spec.n, k);
        const auto upper = band_masks(spec.n, k + 1);
        MatrixXc C = MatrixXc::Zero(static_cast<Eigen::Index>(upper.size()),
                                    static_cast<Eigen::Index>(lower.size()));
        for (std::size_t c = 0; c < lower.size(); ++c) {
            for (int s = 0; s < spec.n; ++s) {
                const std::uint64_t bit = std::uint64_t{1} << s;
                if (lower[c] & bit) continue;
                const auto it = std::lower_bound(upper.begin(), upper.end(), lower[c] | bit);
                const auto r = static_cast<Eigen::Index>(it - upper.begin());
                C(r, static_cast<Eigen::Index>(c)) = weights.scale * weights.g[static_cast<std::size_t>(s)];
            }
        }
        couplings.push_back(std::move(C));
    }
    return BandedEnvironment(spec, std::move(bands), std::move(couplings));
}

BandedEnvironment build_spin_environment(int n, double deltaB, std::uint64_t seed) {
    EnvironmentSpec spec;
    spec.model = EnvironmentModel::sigma_x;
    spec.n = n;
    spec.deltaB = deltaB;
    spec.seed = seed;
    spec.band_range = {0, n};
    return build_spin_environment(spec);
}

BandedEnvironment build_environment(const EnvironmentSpec& spec) {
    if (spec.model == EnvironmentModel::sigma_x) return build_spin_environment(spec);
    return build_band_environment(spec.n, spec.deltaB, spec.seed, spec.band_width, spec.band_range);
}

// ---------------------------------------------------------------- Hamiltonian

MatrixXc build_total_hamiltonian(const ModelParams& params, const BandedEnvironment& env) {
    params.validate();
    if (std::abs(params.deltaB() - env.deltaB()) > 1e-12 * std::max(1.0, env.deltaB())) {
        std::ostringstream os;
        os << "build_total_hamiltonian: deltaS + detuning = " << params.deltaB()
           << " does not match the environment splitting " << env.deltaB();
        throw std::invalid_argument(os.str());
    }
    const Eigen::VectorXd energies = env.env_energies();
    const auto d = static_cast<Eigen::Index>(env.env_dim());
    MatrixXc H = MatrixXc::Zero(2 * d, 2 * d);
    for (Eigen::Index e = 0; e < d; ++e) {
        H(2 * e, 2 * e) = energies(e) - 0.5 * params.deltaS;
        H(2 * e + 1, 2 * e + 1) = energies(e) + 0.5 * params.deltaS;
    }
    if (params.lambda == 0.0) return H;

    // lambda * B (x) sigma_x in the (env, tls) ordering.
    const MatrixXc B = env.coupling_operator();
    for (Eigen::Index c = 0; c < d; ++c) {
        for (Eigen::Index r = 0; r < d; ++r) {
            const Complex v = params.lambda * B(r, c);
            if (v == Complex(0.0, 0.0)) continue;
            H(2 * r, 2 * c + 1) += v;
            H(2 * r + 1, 2 * c) += v;
        }
    }
    return H;
}

// ------------------------------------------------------------------- beta

double digamma(double x) {
    if (!(x > 0.0)) throw std::domain_error("digamma: argument must be positive");
    double result = 0.0;
    while (x < 10.0) {
        result -= 1.0 / x;
        x += 1.0;
    }
    // Asymptotic series with Bernoulli coefficients; truncation error < 1e-13 for x >= 10.
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    const double series =
        inv2 * (1.0 / 12.0 -
                inv2 * (1.0 / 120.0 -
                        inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0))))));
    return result + std::log(x) - 0.5 * inv - series;
}

double beta_working_point(int n, int k0, double deltaB, BetaMethod method) {
    if (!(deltaB > 0.0)) throw std::invalid_argument("beta_working_point: deltaB must be positive");
    if (k0 <= 0 || k0 >= n) throw std::invalid_argument("beta_working_point: need 0 < k0 < n");
    if (method == BetaMethod::log_approx) {
        return std::log(static_cast<double>(n) / k0 - 1.0) / deltaB;
    }
    return (digamma(n - k0 + 1.0) - digamma(k0 + 1.0)) / deltaB;
}

double effective_beta(int n, int k_low, int k_high, double deltaB) {
    if (!(k_low >= 0 && k_low < k_high && k_high <= n)) {
        throw std::invalid_argument("effective_beta: need 0 <= k_low < k_high <= n");
    }
    if (!(deltaB > 0.0)) throw std::invalid_argument("effective_beta: deltaB must be positive");
    const double log_ratio = log_binomial(n, k_high) - log_binomial(n, k_low);
    return log_ratio / ((k_high - k_low) * deltaB);
}

}  // namespace effenv
