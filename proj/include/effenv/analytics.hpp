// analytics.hpp: second-order maps for a TLS under periodic band measurements
//
// beta is always an explicit argument; it is the environmental inverse
// temperature that enters through the ratio of adjacent band degeneracies.
// All functions are pure.

#pragma once

#include "effenv/model.hpp"
#include "effenv/types.hpp"

#include <cmath>
#include <optional>
#include <string>

namespace effenv {

// sinA = sin^2(dd dt/2)/dd^2, sinB = sin^2((dS + dd/2) dt)/(2 dS + dd)^2.
struct SincFactors {
    double sinA{0.0};
    double sinB{0.0};
};

SincFactors sinc_factors(const ModelParams& p);

// sin(x)/x with the removable point handled.
double sinc(double x) noexcept;

// Per-step weak-coupling indicator 4 lambda^2 cosh(beta dB/2)(sinA + sinB); the
// second-order maps are trusted while this stays below 0.1.
double coupling_load(const ModelParams& p, double beta);
inline constexpr double kSecondOrderLimit = 0.1;

enum class Outcome { same, up, down };
std::string to_string(Outcome o);
Outcome outcome_from_string(const std::string& s);

struct ConditionalResult {
    QubitState rho;
    bool weak_coupling_warning{false};
};

// Post-measurement TLS state given which band was found relative to the previous one.
ConditionalResult conditional_update(const QubitState& rho, Outcome outcome, const ModelParams& p, double beta);

struct OutcomeProbabilities {
    double p_up{0.0};
    double p_down{0.0};
    double p_same{1.0};
    bool clamped{false};  // some value moved by more than 1e-6 when clamping to [0,1]
};

OutcomeProbabilities outcome_probabilities(const QubitState& rho, const ModelParams& p, double beta);

// One step of the ensemble recursion for the ground-state population.
double ensemble_map(double rho00, const ModelParams& p, double beta);
// p_same * same + p_up * up + p_down * down for a diagonal input; equals
// ensemble_map up to O(lambda^4).
double weighted_ensemble_map(double rho00, const ModelParams& p, double beta);

struct RelaxationPair {
    double R{0.0};
    double d{0.0};
};

RelaxationPair relaxation_constants(const ModelParams& p, double beta);

// (rho00(0) - d/R) e^{-R j} + d/R; rho00(0) when R = 0.
double rho00_closed_form(double rho00_initial, double j, const ModelParams& p, double beta);

enum class TemperatureKind { finite, infinite, zero };

// Signed temperature dS / ln(rho00/rho11). zero carries the sign of the limit
// (+0 for the ground state, -0 for full inversion); infinite at rho00 = 1/2.
struct EffectiveTemperature {
    TemperatureKind kind{TemperatureKind::finite};
    double value{0.0};

    bool negative() const noexcept { return std::signbit(value) && kind != TemperatureKind::infinite; }
};

EffectiveTemperature effective_temperature(double rho00, double deltaS);

struct AttractorResult {
    double rho00_star{0.5};
    double R{0.0};
    double d{0.0};
    EffectiveTemperature T_eff;
    bool second_order_warning{false};
};

// nullopt where no attractor exists (R vanishes: freezing points, dt = 0, lambda = 0).
std::optional<AttractorResult> attractor(const ModelParams& p, double beta);
// Resonant closed form in terms of dS dt only; the detuning in p is ignored.
double attractor_resonant(const ModelParams& p, double beta);

struct TemperatureBounds {
    double T_min{0.0};
    std::optional<double> T_max;  // unattainable without detuning
    double rho00_max{1.0};
    double rho00_min{0.0};
};

TemperatureBounds temperature_bounds(const ModelParams& p, double beta);
// Measurement periods that reach the extremes: n pi/(dS + dd/2) and 2 n pi/|dd|.
double coldest_dt(const ModelParams& p, int n);
double inversion_dt(const ModelParams& p, int n);

struct FreezingMatch {
    bool freezing{false};
    int n{0};
    int m{0};
};

// dt = n pi/dS and dd = 2 m pi/dt for positive integers n, m, each within tol.
FreezingMatch is_freezing_point(double dt, double detuning, double deltaS, double tol = 1e-9);

// rho10' = rho10 + (c1 + i c2) rho10 + (c3 + i c4) conj(rho10).
struct OffdiagCoeffs {
    double c1{0.0};
    double c2{0.0};
    double c3{0.0};
    double c4{0.0};
    Complex gamma{0.0, 0.0};  // sqrt(-c2^2 + c3^2 + c4^2), on the non-negative real or imaginary axis

    double gamma_squared() const noexcept { return -c2 * c2 + c3 * c3 + c4 * c4; }
};

OffdiagCoeffs offdiag_coeffs(const ModelParams& p, double beta);
Complex offdiag_map(Complex rho10, const ModelParams& p, double beta);
Complex offdiag_step(Complex rho10, const OffdiagCoeffs& c) noexcept;

struct OffdiagValue {
    Complex rho10;
    double abs{0.0};
};

OffdiagValue offdiag_closed_form(Complex rho10_initial, double j, const OffdiagCoeffs& c);

}  // namespace effenv
