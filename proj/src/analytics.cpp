#include "effenv/analytics.hpp"

#include <algorithm>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace effenv {

namespace {

constexpr double kPi = std::numbers::pi;

// (x - sin x)/x^2; the direct form cancels catastrophically below x ~ 0.1.
double sine_defect(double x) noexcept {
    if (std::abs(x) < 0.1) {
        const double x2 = x * x;
        return x * (1.0 / 6.0 - x2 * (1.0 / 120.0 - x2 * (1.0 / 5040.0 - x2 * (1.0 / 362880.0 - x2 / 39916800.0))));
    }
    return (x - std::sin(x)) / (x * x);
}

// Both sinc weights vanish relative to their dt^2/4 ceiling: no transitions at all.
bool transitions_vanish(const SincFactors& s, double dt) noexcept {
    const double ceiling = 0.25 * dt * dt;
    return ceiling == 0.0 || s.sinA + s.sinB <= 1e-24 * ceiling;
}

struct Boltzmann {
    double plus;   // e^{+beta dB/2}
    double minus;  // e^{-beta dB/2}
    double cosh;
};

Boltzmann boltzmann(const ModelParams& p, double beta) {
    const double h = 0.5 * beta * p.deltaB();
    return {std::exp(h), std::exp(-h), std::cosh(h)};
}

// 1/(1 + e^{-x}) without overflow for large |x|.
double logistic(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// (1 + e^{2i dS dt} - 2 e^{i dS dt} cos(dB dt))/(2 dS dd + dd^2), written as a product
// of two sinc factors so neither removable denominator appears.
Complex cross_term(const ModelParams& p) {
    const double dt = p.dt;
    const double xa = p.detuning * dt;
    const double xb = (2.0 * p.deltaS + p.detuning) * dt;
    return dt * dt * sinc(0.5 * xa) * sinc(0.5 * xb) * std::polar(1.0, p.deltaS * dt);
}

// (1 - e^{i w dt} + i w dt)/w^2 for w = dd and w = 2 dS + dd, summed.
Complex phase_integrals(const ModelParams& p) {
    const double dt = p.dt;
    Complex sum{0.0, 0.0};
    for (double w : {p.detuning, 2.0 * p.deltaS + p.detuning}) {
        const double x = w * dt;
        const double s = sinc(0.5 * x);
        sum += dt * dt * Complex(0.5 * s * s, sine_defect(x));
    }
    return sum;
}

}  // namespace

double sinc(double x) noexcept {
    if (std::abs(x) < 1e-4) {
        const double x2 = x * x;
        return 1.0 - x2 / 6.0 + x2 * x2 / 120.0;
    }
    return std::sin(x) / x;
}

SincFactors sinc_factors(const ModelParams& p) {
    const double q = 0.25 * p.dt * p.dt;
    const double a = sinc(0.5 * p.detuning * p.dt);
    const double b = sinc(0.5 * (2.0 * p.deltaS + p.detuning) * p.dt);
    return {q * a * a, q * b * b};
}

double coupling_load(const ModelParams& p, double beta) {
    const auto s = sinc_factors(p);
    return 4.0 * p.lambda * p.lambda * std::cosh(0.5 * beta * p.deltaB()) * (s.sinA + s.sinB);
}

std::string to_string(Outcome o) {
    switch (o) {
        case Outcome::same: return "same";
        case Outcome::up: return "up";
        case Outcome::down: return "down";
    }
    return "same";
}

Outcome outcome_from_string(const std::string& s) {
    if (s == "same") return Outcome::same;
    if (s == "up") return Outcome::up;
    if (s == "down") return Outcome::down;
    throw std::invalid_argument("unknown outcome '" + s + "' (expected same|up|down)");
}

ConditionalResult conditional_update(const QubitState& rho, Outcome outcome, const ModelParams& p, double beta) {
    p.validate();
    rho.validate();
    const auto s = sinc_factors(p);
    const auto b = boltzmann(p, beta);
    const double l2 = p.lambda * p.lambda;
    const double r00 = rho.rho00;
    const double r11 = rho.rho11;

    ConditionalResult out;
    out.weak_coupling_warning = coupling_load(p, beta) > kSecondOrderLimit;

    double n00 = r00;
    Complex n10 = rho.rho10;
    if (outcome == Outcome::same) {
        n00 = r00 * (1.0 - 4.0 * l2 * r11 * (b.minus - b.plus) * (s.sinA - s.sinB));
        const double diag = 4.0 * s.sinA * (b.minus * r00 + b.plus * r11) + 4.0 * s.sinB * (b.plus * r00 + b.minus * r11);
        n10 = rho.rho10 * (1.0 + l2 * (diag - (b.minus + b.plus) * phase_integrals(p)));
    } else {
        const bool up = outcome == Outcome::up;
        const double keep = up ? r11 * s.sinA : r11 * s.sinB;
        const double denom = keep + (up ? r00 * s.sinB : r00 * s.sinA);
        if (denom <= 1e-24 * 0.25 * p.dt * p.dt || denom == 0.0) {
            throw std::domain_error("conditional_update: outcome '" + to_string(outcome) +
                                    "' is impossible for this state and parameters");
        }
        n00 = keep / denom;
        n10 = rho.rho01() * cross_term(p) / (4.0 * denom);
    }
    out.rho = QubitState::make(n00, n10);
    return out;
}

OutcomeProbabilities outcome_probabilities(const QubitState& rho, const ModelParams& p, double beta) {
    p.validate();
    rho.validate();
    const auto s = sinc_factors(p);
    const auto b = boltzmann(p, beta);
    const double l2 = 4.0 * p.lambda * p.lambda;
    const double up = l2 * b.plus * (rho.rho11 * s.sinA + rho.rho00 * s.sinB);
    const double down = l2 * b.minus * (rho.rho00 * s.sinA + rho.rho11 * s.sinB);
    const double same = 1.0 - up - down;
    if (same < -0.01) {
        throw std::domain_error("outcome_probabilities: second-order expansion invalid (p_same = " +
                                std::to_string(same) + ")");
    }
    OutcomeProbabilities out;
    out.p_up = std::clamp(up, 0.0, 1.0);
    out.p_down = std::clamp(down, 0.0, 1.0);
    out.p_same = std::clamp(same, 0.0, 1.0);
    out.clamped = std::abs(out.p_up - up) > 1e-6 || std::abs(out.p_down - down) > 1e-6 ||
                  std::abs(out.p_same - same) > 1e-6;
    return out;
}

double ensemble_map(double rho00, const ModelParams& p, double beta) {
    const auto rd = relaxation_constants(p, beta);
    return (1.0 - rd.R) * rho00 + rd.d;
}

double weighted_ensemble_map(double rho00, const ModelParams& p, double beta) {
    const auto rho = QubitState::make(rho00, {0.0, 0.0});
    const auto prob = outcome_probabilities(rho, p, beta);
    double acc = prob.p_same * conditional_update(rho, Outcome::same, p, beta).rho.rho00;
    for (auto [o, w] : {std::pair{Outcome::up, prob.p_up}, std::pair{Outcome::down, prob.p_down}}) {
        if (w == 0.0) continue;
        try {
            acc += w * conditional_update(rho, o, p, beta).rho.rho00;
        } catch (const std::domain_error&) {
            // outcome carries negligible weight; its population lies in [0,1]
        }
    }
    return acc;
}

RelaxationPair relaxation_constants(const ModelParams& p, double beta) {
    p.validate();
    const auto s = sinc_factors(p);
    const auto b = boltzmann(p, beta);
    const double l2 = p.lambda * p.lambda;
    return {8.0 * l2 * b.cosh * (s.sinA + s.sinB), 4.0 * l2 * (b.plus * s.sinA + b.minus * s.sinB)};
}

double rho00_closed_form(double rho00_initial, double j, const ModelParams& p, double beta) {
    if (j < 0.0) throw std::invalid_argument("rho00_closed_form: j must be >= 0");
    const auto rd = relaxation_constants(p, beta);
    if (rd.R == 0.0) return rho00_initial;
    const double star = rd.d / rd.R;
    return (rho00_initial - star) * std::exp(-rd.R * j) + star;
}

EffectiveTemperature effective_temperature(double rho00, double deltaS) {
    if (!(rho00 >= 0.0 && rho00 <= 1.0)) {
        throw std::invalid_argument("effective_temperature: rho00 must lie in [0,1]");
    }
    if (rho00 == 1.0) return {TemperatureKind::zero, 0.0};
    if (rho00 == 0.0) return {TemperatureKind::zero, -0.0};
    const double ratio = std::log(rho00) - std::log1p(-rho00);
    if (std::abs(ratio) < 1e-15) return {TemperatureKind::infinite, std::numeric_limits<double>::infinity()};
    return {TemperatureKind::finite, deltaS / ratio};
}

std::optional<AttractorResult> attractor(const ModelParams& p, double beta) {
    p.validate();
    const auto s = sinc_factors(p);
    const auto rd = relaxation_constants(p, beta);
    if (p.lambda == 0.0 || rd.R == 0.0 || transitions_vanish(s, p.dt)) return std::nullopt;

    // Convex combination of the two thermal extremes weighted by sinA : sinB.
    const double x = beta * p.deltaB();
    const double w = s.sinA / (s.sinA + s.sinB);
    AttractorResult out;
    out.rho00_star = w * logistic(x) + (1.0 - w) * logistic(-x);
    out.R = rd.R;
    out.d = rd.d;
    out.T_eff = effective_temperature(out.rho00_star, p.deltaS);
    out.second_order_warning = rd.R > kSecondOrderLimit;
    return out;
}

double attractor_resonant(const ModelParams& p, double beta) {
    p.validate();
    const double x = beta * p.deltaS;
    const double u = sinc(p.deltaS * p.dt);
    const double u2 = u * u;
    return (std::exp(-0.5 * x) * u2 + std::exp(0.5 * x)) / (2.0 * std::cosh(0.5 * x) * (u2 + 1.0));
}

TemperatureBounds temperature_bounds(const ModelParams& p, double beta) {
    p.validate();
    if (beta == 0.0) throw std::invalid_argument("temperature_bounds: beta must be non-zero");
    const double ratio = p.deltaS / p.deltaB();
    TemperatureBounds out;
    out.T_min = ratio / beta;
    if (p.detuning != 0.0) out.T_max = -ratio / beta;
    const double x = beta * p.deltaB();
    out.rho00_max = logistic(x);
    out.rho00_min = logistic(-x);
    return out;
}

double coldest_dt(const ModelParams& p, int n) {
    if (n < 1) throw std::invalid_argument("coldest_dt: n must be >= 1");
    return n * kPi / (p.deltaS + 0.5 * p.detuning);
}

double inversion_dt(const ModelParams& p, int n) {
    if (n < 1) throw std::invalid_argument("inversion_dt: n must be >= 1");
    if (p.detuning == 0.0) throw std::invalid_argument("inversion_dt: inversion is unreachable without detuning");
    return 2.0 * n * kPi / std::abs(p.detuning);
}

FreezingMatch is_freezing_point(double dt, double detuning, double deltaS, double tol) {
    if (!(dt > 0.0) || !(deltaS > 0.0)) return {};
    const double nr = dt * deltaS / kPi;
    const double mr = detuning * dt / (2.0 * kPi);
    const double n = std::round(nr);
    const double m = std::round(mr);
    if (n < 1.0 || m < 1.0 || std::abs(nr - n) > tol || std::abs(mr - m) > tol) return {};
    return {true, static_cast<int>(n), static_cast<int>(m)};
}

OffdiagCoeffs offdiag_coeffs(const ModelParams& p, double beta) {
    p.validate();
    const double scale = 2.0 * p.lambda * p.lambda * std::cosh(0.5 * beta * p.deltaB());
    const Complex c12 = -scale * phase_integrals(p);
    const Complex c34 = scale * cross_term(p);
    OffdiagCoeffs c;
    c.c1 = c12.real();
    c.c2 = c12.imag();
    c.c3 = c34.real();
    c.c4 = c34.imag();
    const double g2 = c.gamma_squared();
    c.gamma = g2 >= 0.0 ? Complex(std::sqrt(g2), 0.0) : Complex(0.0, std::sqrt(-g2));
    return c;
}

Complex offdiag_step(Complex rho10, const OffdiagCoeffs& c) noexcept {
    return rho10 + Complex(c.c1, c.c2) * rho10 + Complex(c.c3, c.c4) * std::conj(rho10);
}

Complex offdiag_map(Complex rho10, const ModelParams& p, double beta) {
    return offdiag_step(rho10, offdiag_coeffs(p, beta));
}

OffdiagValue offdiag_closed_form(Complex rho10_initial, double j, const OffdiagCoeffs& c) {
    if (j < 0.0) throw std::invalid_argument("offdiag_closed_form: j must be >= 0");
    // exp(M j) = cosh(gamma j) 1 + sinh(gamma j)/gamma M with M^2 = gamma^2 1; both
    // factors are even in gamma, so real and imaginary gamma share one expression.
    const double g2 = c.gamma_squared();
    const double z = g2 * j * j;
    double ch = 0.0;  // e^{c1 j} cosh(gamma j)
    double sh = 0.0;  // e^{c1 j} sinh(gamma j)/gamma
    if (std::abs(z) < 1e-8) {
        const double decay = std::exp(c.c1 * j);
        ch = decay * (1.0 + z / 2.0 + z * z / 24.0);
        sh = decay * j * (1.0 + z / 6.0 + z * z / 120.0);
    } else if (g2 > 0.0) {
        // gamma <= |c3 + i c4| <= -c1, so both exponents are non-positive.
        const double g = std::sqrt(g2);
        const double fast = std::exp((c.c1 - g) * j);
        const double slow = std::exp((c.c1 + g) * j);
        ch = 0.5 * (slow + fast);
        sh = 0.5 * (slow - fast) / g;
    } else {
        const double g = std::sqrt(-g2);
        const double decay = std::exp(c.c1 * j);
        ch = decay * std::cos(g * j);
        sh = decay * std::sin(g * j) / g;
    }
    const double x0 = rho10_initial.real();
    const double y0 = rho10_initial.imag();
    const double x = (ch + c.c3 * sh) * x0 + (c.c4 - c.c2) * sh * y0;
    const double y = (c.c2 + c.c4) * sh * x0 + (ch - c.c3 * sh) * y0;
    return {Complex(x, y), std::hypot(x, y)};
}

}  // namespace effenv
