#include <doctest.h>

#include "effenv/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

using namespace effenv;

namespace {

constexpr double kPi = 3.141592653589793;

ModelParams params(double deltaS, double detuning, double lambda, double dt) {
    ModelParams p;
    p.deltaS = deltaS;
    p.detuning = detuning;
    p.lambda = lambda;
    p.dt = dt;
    return p;
}

// Reference forms written directly from the trigonometric expressions, in
// long double, valid away from the removable points.
struct Raw {
    long double dS, dd, lam, dt, beta;

    long double dB() const { return dS + dd; }
    long double cosh_() const { return std::cosh(beta * dB() / 2); }
    long double ep() const { return std::exp(beta * dB() / 2); }
    long double em() const { return std::exp(-beta * dB() / 2); }
    long double sinA() const {
        const long double s = std::sin(dd * dt / 2);
        return s * s / (dd * dd);
    }
    long double sinB() const {
        const long double s = std::sin((dS + dd / 2) * dt);
        return s * s / ((2 * dS + dd) * (2 * dS + dd));
    }
    long double R() const { return 8 * lam * lam * cosh_() * (sinA() + sinB()); }
    long double d() const { return 4 * lam * lam * (ep() * sinA() + em() * sinB()); }
    long double c1() const {
        const long double a = dd, b = 2 * dS + dd;
        return -2 * lam * lam * cosh_() * ((1 - std::cos(a * dt)) / (a * a) + (1 - std::cos(b * dt)) / (b * b));
    }
    long double c2() const {
        const long double a = dd, b = 2 * dS + dd;
        return -2 * lam * lam * cosh_() * ((a * dt - std::sin(a * dt)) / (a * a) + (b * dt - std::sin(b * dt)) / (b * b));
    }
    long double c3() const {
        return -4 * lam * lam * cosh_() *
               (std::cos(dS * dt) * std::cos((dS + dd) * dt) - std::cos(dS * dt) * std::cos(dS * dt)) /
               (2 * dS * dd + dd * dd);
    }
    long double c4() const {
        return -2 * lam * lam * cosh_() *
               (2 * std::sin(dS * dt) * std::cos((dS + dd) * dt) - std::sin(2 * dS * dt)) / (2 * dS * dd + dd * dd);
    }
};

Raw raw(const ModelParams& p, double beta) { return {p.deltaS, p.detuning, p.lambda, p.dt, beta}; }

struct Generator {
    Rng rng;
    explicit Generator(std::uint64_t seed) : rng(seed) {}
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

    // Generic point: away from removable singularities and freezing points.
    ModelParams point(double lambda_max = 0.05) {
        ModelParams p;
        p.deltaS = uniform(0.5, 2.0);
        p.detuning = uniform(-0.45, 2.5) * p.deltaS;
        if (std::abs(p.detuning) < 0.05) p.detuning = 0.3;
        p.lambda = uniform(0.005, lambda_max);
        p.dt = uniform(0.2, 10.0);
        return p;
    }
    QubitState state() {
        const double r00 = uniform(0.0, 1.0);
        const double bound = std::sqrt(r00 * (1.0 - r00));
        const double mag = uniform(0.0, bound);
        const double phi = uniform(0.0, 2.0 * kPi);
        return QubitState::make(r00, std::polar(mag, phi));
    }
};

bool close(double a, long double b, double rel, double abs_floor = 0.0) {
    return std::abs(a - static_cast<double>(b)) <= rel * std::abs(static_cast<double>(b)) + abs_floor;
}

}  // namespace

TEST_CASE("sinc factors: removable points and bounds") {
    CHECK(sinc(0.0) == 1.0);
    CHECK(sinc(1e-9) == doctest::Approx(1.0));
    CHECK(sinc(kPi) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(sinc(0.5) == doctest::Approx(std::sin(0.5) / 0.5).epsilon(1e-15));

    for (double dt : {0.0, 0.1, 1.0, kPi, 7.3}) {
        CHECK(sinc_factors(params(1.0, 0.0, 0.05, dt)).sinA == doctest::Approx(dt * dt / 4).epsilon(1e-14));
    }
    CHECK(sinc_factors(params(1.0, 0.0, 0.05, kPi)).sinB == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(std::abs(sinc_factors(params(1.0, 0.0, 0.05, kPi)).sinB) < 1e-30);
    CHECK(std::abs(sinc_factors(params(1.0, 0.7, 0.05, 2 * kPi / 0.7)).sinA) < 1e-28);

    Generator g(11);
    for (int i = 0; i < 500; ++i) {
        const auto p = g.point();
        const auto s = sinc_factors(p);
        const auto r = raw(p, 0.0);
        CHECK(close(s.sinA, r.sinA(), 1e-12, 1e-15));
        CHECK(close(s.sinB, r.sinB(), 1e-12, 1e-15));
        CHECK(s.sinA >= 0.0);
        CHECK(s.sinB >= 0.0);
        const double dd = p.detuning, b = 2 * p.deltaS + p.detuning;
        CHECK(s.sinA <= std::min(p.dt * p.dt / 4, 1.0 / (dd * dd)) * (1 + 1e-12));
        CHECK(s.sinB <= std::min(p.dt * p.dt / 4, 1.0 / (b * b)) * (1 + 1e-12));
    }
    // Continuity through the Taylor branch of the detuning factor.
    const auto near = sinc_factors(params(1.0, 1e-7, 0.05, 2.0));
    CHECK(near.sinA == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("relaxation constants against the trigonometric forms") {
    CHECK(relaxation_constants(params(1.0, 0.0, 0.05, 0.0), 0.75).R == 0.0);
    CHECK(relaxation_constants(params(1.0, 2.0, 0.05, kPi), 0.75).R < 1e-12);
    CHECK(relaxation_constants(params(1.0, 0.0, 0.01, kPi), 0.75).R ==
          doctest::Approx(8e-4 * std::cosh(0.375) * kPi * kPi / 4).epsilon(1e-12));
    CHECK(relaxation_constants(params(1.0, 0.0, 0.01, kPi), 0.75).R == doctest::Approx(2.115e-3).epsilon(1e-3));

    Generator g(12);
    for (int i = 0; i < 300; ++i) {
        const auto p = g.point();
        const double beta = g.uniform(-2.0, 3.0);
        const auto rd = relaxation_constants(p, beta);
        const auto r = raw(p, beta);
        CHECK(close(rd.R, r.R(), 1e-11, 1e-18));
        CHECK(close(rd.d, r.d(), 1e-11, 1e-18));
        CHECK(rd.R >= 0.0);
        CHECK(rd.d >= 0.0);
        CHECK(rd.d <= rd.R * (1 + 1e-12));
    }
}

TEST_CASE("outcome probabilities") {
    const auto p = params(1.0, 0.0, 0.05, kPi);
    const double beta = std::log(3.0);
    const auto g0 = outcome_probabilities(QubitState::ground(), p, beta);
    CHECK(g0.p_up == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(g0.p_down == doctest::Approx(4 * 0.0025 * std::exp(-beta / 2) * kPi * kPi / 4).epsilon(1e-12));
    CHECK(g0.p_down == doctest::Approx(0.01424).epsilon(1e-3));
    CHECK(g0.p_same == doctest::Approx(1.0 - g0.p_down));
    CHECK_FALSE(g0.clamped);

    const auto none = outcome_probabilities(QubitState::make(0.3, {0.1, 0.2}), params(1.0, 0.4, 0.0, 2.0), 0.7);
    CHECK(none.p_up == 0.0);
    CHECK(none.p_down == 0.0);
    CHECK(none.p_same == 1.0);

    Generator g(13);
    for (int i = 0; i < 300; ++i) {
        const auto q = g.point();
        const double beta = g.uniform(0.0, 2.0);
        const auto pr = outcome_probabilities(g.state(), q, beta);
        CHECK(pr.p_up + pr.p_down <= 8 * q.lambda * q.lambda * std::cosh(beta * q.deltaB() / 2) * q.dt * q.dt / 2);
        CHECK(pr.p_up + pr.p_down + pr.p_same == doctest::Approx(1.0));
    }
    CHECK_THROWS_AS(outcome_probabilities(QubitState::excited(), params(1.0, 0.0, 0.5, kPi), 3.0), std::domain_error);
}

TEST_CASE("conditional updates") {
    const auto p = params(1.0, 0.7, 0.05, 2.3);
    const double beta = 0.4;
    const auto s = sinc_factors(p);

    const auto up = conditional_update(QubitState::excited(), Outcome::up, p, beta);
    CHECK(up.rho.rho00 == doctest::Approx(1.0));
    const auto down = conditional_update(QubitState::ground(), Outcome::down, p, beta);
    CHECK(down.rho.rho00 == doctest::Approx(0.0));
    CHECK_FALSE(up.weak_coupling_warning);

    const auto q = QubitState::make(0.35, Complex(0.2, -0.3));
    const auto same0 = conditional_update(q, Outcome::same, params(1.0, 0.7, 0.0, 2.3), beta);
    CHECK(same0.rho.rho00 == q.rho00);
    CHECK(same0.rho.rho10 == q.rho10);

    // Direct transcription of the conditional maps.
    const Raw r = raw(p, beta);
    const double l2 = p.lambda * p.lambda;
    const auto same = conditional_update(q, Outcome::same, p, beta);
    const double e00 = q.rho00 * (1 - 4 * l2 * q.rho11 * double(r.em() - r.ep()) * (s.sinA - s.sinB));
    CHECK(same.rho.rho00 == doctest::Approx(e00).epsilon(1e-13));
    CHECK(same.rho.rho11 == doctest::Approx(1 - e00).epsilon(1e-13));
    const double dd = p.detuning, bb = 2 * p.deltaS + p.detuning, t = p.dt;
    const Complex I(0, 1);
    const Complex phase = (1.0 - std::exp(I * dd * t) + I * dd * t) / (dd * dd) +
                          (1.0 - std::exp(I * bb * t) + I * bb * t) / (bb * bb);
    const Complex e10 =
        q.rho10 * (1.0 + l2 * ((double(r.em()) * q.rho00 + double(r.ep()) * q.rho11) * 4 * s.sinA +
                               (double(r.ep()) * q.rho00 + double(r.em()) * q.rho11) * 4 * s.sinB -
                               double(r.em() + r.ep()) * phase));
    CHECK(std::abs(same.rho.rho10 - e10) < 1e-14);

    const Complex cross = 1.0 + std::exp(2.0 * I * p.deltaS * t) - 2.0 * std::exp(I * p.deltaS * t) * std::cos(p.deltaB() * t);
    const auto u = conditional_update(q, Outcome::up, p, beta);
    const double den_up = q.rho11 * s.sinA + q.rho00 * s.sinB;
    CHECK(u.rho.rho00 == doctest::Approx(q.rho11 * s.sinA / den_up).epsilon(1e-13));
    CHECK(std::abs(u.rho.rho10 - q.rho01() * cross / (4 * (2 * p.deltaS * dd + dd * dd) * den_up)) < 1e-12);
    const auto dn = conditional_update(q, Outcome::down, p, beta);
    const double den_dn = q.rho11 * s.sinB + q.rho00 * s.sinA;
    CHECK(dn.rho.rho00 == doctest::Approx(q.rho11 * s.sinB / den_dn).epsilon(1e-13));
    CHECK(std::abs(dn.rho.rho10 - q.rho01() * cross / (4 * (2 * p.deltaS * dd + dd * dd) * den_dn)) < 1e-12);
    CHECK(u.rho.is_valid(1e-9));
    CHECK(dn.rho.is_valid(1e-9));

    CHECK_THROWS_AS(conditional_update(q, Outcome::up, params(1.0, 0.0, 0.05, 0.0), beta), std::domain_error);
    CHECK(conditional_update(q, Outcome::same, params(1.0, 0.0, 0.5, kPi), 1.0).weak_coupling_warning);

    CHECK(outcome_from_string("up") == Outcome::up);
    CHECK(to_string(Outcome::down) == "down");
    CHECK_THROWS(outcome_from_string("sideways"));
}

TEST_CASE("the weighted combination differs from the ensemble map by exactly (p_up + p_down) Q (property)") {
    // Q = 4 lambda^2 rho00 rho11 (e^- - e^+)(sinA - sinB) is the second-order shift of the same-band map.
    Generator g(15);
    for (int i = 0; i < 300; ++i) {
        const auto p = g.point(0.02);
        const double beta = g.uniform(0.0, 2.0);
        const double r00 = g.uniform(0.0, 1.0);
        const auto q = QubitState::make(r00, 0.0);
        const auto pr = outcome_probabilities(q, p, beta);
        if (pr.p_same <= 0.0 || pr.clamped) continue;
        const auto s = sinc_factors(p);
        const double x = beta * p.deltaB() / 2;
        const double Q = 4 * p.lambda * p.lambda * r00 * (1 - r00) * (std::exp(-x) - std::exp(x)) * (s.sinA - s.sinB);
        const double diff = weighted_ensemble_map(r00, p, beta) - ensemble_map(r00, p, beta);
        CHECK(std::abs(diff - (pr.p_up + pr.p_down) * Q) < 1e-14);

        // Same combination assembled here from the public pieces.
        double acc = pr.p_same * conditional_update(q, Outcome::same, p, beta).rho.rho00;
        if (pr.p_up > 0) acc += pr.p_up * conditional_update(q, Outcome::up, p, beta).rho.rho00;
        if (pr.p_down > 0) acc += pr.p_down * conditional_update(q, Outcome::down, p, beta).rho.rho00;
        CHECK(acc == doctest::Approx(weighted_ensemble_map(r00, p, beta)).epsilon(1e-12));
    }
    CHECK(ensemble_map(0.37, params(1.0, 0.3, 0.0, 2.0), 0.5) == 0.37);
}

TEST_CASE("closed-form relaxation") {
    const auto p = params(1.0, 0.0, 0.05, kPi);
    const double beta = std::log(3.0);
    const auto rd = relaxation_constants(p, beta);
    CHECK(rho00_closed_form(0.9, 0.0, p, beta) == 0.9);
    CHECK(rho00_closed_form(0.9, 1e6, p, beta) == doctest::Approx(rd.d / rd.R).epsilon(1e-12));
    CHECK(ensemble_map(rd.d / rd.R, p, beta) == doctest::Approx(rd.d / rd.R).epsilon(1e-14));
    CHECK(rho00_closed_form(0.2, 50.0, params(1.0, 2.0, 0.05, kPi), 1.0) == doctest::Approx(0.2).epsilon(1e-9));

    Generator g(15);
    for (int i = 0; i < 20; ++i) {
        const auto q = g.point();
        const double b = g.uniform(0.0, 2.0);
        const double R = relaxation_constants(q, b).R;
        double x = g.uniform(0.0, 1.0);
        const double x0 = x;
        double gap = 0.0;
        for (int j = 1; j <= 1000; ++j) {
            x = ensemble_map(x, q, b);
            gap = std::max(gap, std::abs(x - rho00_closed_form(x0, j, q, b)));
        }
        CHECK(gap < R);
    }
}

TEST_CASE("attractor values") {
    const auto fig2 = attractor(params(1.0, 0.0, 0.05, kPi), std::log(3.0));
    REQUIRE(fig2);
    CHECK(std::abs(fig2->rho00_star - 0.75) < 1e-12);
    CHECK(fig2->T_eff.value == doctest::Approx(1.0 / std::log(3.0)));
    CHECK_FALSE(fig2->T_eff.negative());

    const auto fig3 = attractor(params(1.0, 0.7, 0.05, 2 * kPi / 0.7), std::log(5.0 / 3.0) / 1.7);
    REQUIRE(fig3);
    CHECK(std::abs(fig3->rho00_star - 0.375) < 1e-12);
    CHECK(fig3->T_eff.negative());

    const auto fast = attractor(params(1.0, 0.0, 0.05, 1e-5), 0.75);
    REQUIRE(fast);
    CHECK(std::abs(fast->rho00_star - 0.5) < 1e-9);

    CHECK_FALSE(attractor(params(1.0, 2.0, 0.05, kPi), 0.75));
    CHECK_FALSE(attractor(params(1.0, 0.4, 0.0, 2.0), 0.75));
    CHECK_FALSE(attractor(params(1.0, 0.4, 0.05, 0.0), 0.75));

    CHECK(attractor(params(1.0, 0.0, 0.5, kPi), 1.0)->second_order_warning);
}

TEST_CASE("resonant branch agrees with the general branch") {
    Generator g(16);
    for (int i = 0; i < 200; ++i) {
        const double dS = g.uniform(0.3, 2.0);
        const double dt = g.uniform(0.01, 12.0);
        const double beta = g.uniform(-1.0, 2.0);
        const auto p = params(dS, 0.0, 0.05, dt);
        const auto a = attractor(p, beta);
        REQUIRE(a);
        CHECK(std::abs(a->rho00_star - attractor_resonant(p, beta)) < 1e-12);
        // Direct transcription of the resonant expression.
        const double s2 = std::sin(dS * dt) * std::sin(dS * dt), x2 = dS * dS * dt * dt;
        const double ref = (std::exp(-beta * dS / 2) * s2 + std::exp(beta * dS / 2) * x2) /
                           (2 * std::cosh(beta * dS / 2) * (s2 + x2));
        CHECK(std::abs(a->rho00_star - ref) < 1e-12);
    }
}

TEST_CASE("attractor is a convex combination of the two extremes (property)") {
    Generator g(17);
    for (int i = 0; i < 2000; ++i) {
        const auto p = g.point();
        const double beta = g.uniform(-1.0, 3.0);
        const auto a = attractor(p, beta);
        if (!a) continue;
        const auto tb = temperature_bounds(p, beta == 0.0 ? 1e-3 : beta);
        const auto s = sinc_factors(p);
        const double w = s.sinA / (s.sinA + s.sinB);
        const double x = beta * p.deltaB() / 2;
        const double hi = std::exp(x) / (2 * std::cosh(x)), lo = std::exp(-x) / (2 * std::cosh(x));
        CHECK(a->rho00_star == doctest::Approx(w * hi + (1 - w) * lo).epsilon(1e-12));
        CHECK(a->rho00_star == doctest::Approx(a->d / a->R).epsilon(1e-12));
        if (beta != 0.0) {
            CHECK(a->rho00_star >= std::min(tb.rho00_min, tb.rho00_max) - 1e-12);
            CHECK(a->rho00_star <= std::max(tb.rho00_min, tb.rho00_max) + 1e-12);
        }
        const double sign = a->rho00_star - 0.5;
        if (std::abs(sign) > 1e-12) CHECK(a->T_eff.negative() == (sign < 0));
    }
}

TEST_CASE("effective temperature") {
    CHECK(effective_temperature(0.75, 1.0).value == doctest::Approx(1.0 / std::log(3.0)));
    const auto neg = effective_temperature(0.375, 1.0);
    CHECK(neg.kind == TemperatureKind::finite);
    CHECK(neg.value == doctest::Approx(-1.0 / std::log(5.0 / 3.0)));
    CHECK(neg.negative());
    const auto inf = effective_temperature(0.5, 1.0);
    CHECK(inf.kind == TemperatureKind::infinite);
    CHECK(std::isinf(inf.value));
    CHECK(effective_temperature(1.0, 1.0).kind == TemperatureKind::zero);
    CHECK_FALSE(effective_temperature(1.0, 1.0).negative());
    CHECK(effective_temperature(0.0, 1.0).kind == TemperatureKind::zero);
    CHECK(effective_temperature(0.0, 1.0).negative());
    CHECK(effective_temperature(0.9, 2.0).value == doctest::Approx(2.0 / std::log(9.0)));
}

TEST_CASE("temperature bounds") {
    const double beta = std::log(5.0 / 3.0) / 1.7;
    const auto tb = temperature_bounds(params(1.0, 0.7, 0.05, 1.0), beta);
    CHECK(tb.rho00_min == doctest::Approx(0.375).epsilon(1e-12));
    CHECK(tb.rho00_max == doctest::Approx(0.625).epsilon(1e-12));
    CHECK(std::abs(tb.rho00_max + tb.rho00_min - 1.0) < 1e-12);
    CHECK(tb.T_min == doctest::Approx(1.0 / 1.7 / beta));
    REQUIRE(tb.T_max);
    CHECK(*tb.T_max == doctest::Approx(-1.0 / 1.7 / beta));

    const auto res = temperature_bounds(params(1.0, 0.0, 0.05, 1.0), 0.75);
    CHECK(res.T_min == doctest::Approx(1.0 / 0.75));
    CHECK_FALSE(res.T_max);
    CHECK_THROWS(temperature_bounds(params(1.0, 0.0, 0.05, 1.0), 0.0));

    // The extremes are attained at the advertised periods.
    const auto p = params(1.0, 0.7, 0.05, 1.0);
    auto at = [&](double dt) {
        auto q = p;
        q.dt = dt;
        return attractor(q, beta)->rho00_star;
    };
    CHECK(at(coldest_dt(p, 1)) == doctest::Approx(tb.rho00_max).epsilon(1e-12));
    CHECK(at(inversion_dt(p, 1)) == doctest::Approx(tb.rho00_min).epsilon(1e-12));
    CHECK(coldest_dt(p, 2) == doctest::Approx(2 * kPi / 1.35));
    CHECK(inversion_dt(p, 1) == doctest::Approx(2 * kPi / 0.7));
}

TEST_CASE("freezing lattice") {
    auto m = is_freezing_point(kPi, 2.0, 1.0);
    CHECK(m.freezing);
    CHECK(m.n == 1);
    CHECK(m.m == 1);
    CHECK_FALSE(is_freezing_point(kPi, 0.7, 1.0).freezing);
    m = is_freezing_point(2 * kPi, 1.0, 1.0);
    CHECK(m.freezing);
    CHECK(m.n == 2);
    CHECK(m.m == 1);
    CHECK_FALSE(is_freezing_point(kPi, 0.0, 1.0).freezing);
    CHECK_FALSE(is_freezing_point(kPi, 1.9, 1.0).freezing);

    for (int n = 1; n <= 4; ++n) {
        for (int mm = 1; mm <= 4; ++mm) {
            const double dS = 0.8;
            const double dt = n * kPi / dS;
            const double dd = 2 * mm * kPi / dt;
            const auto f = is_freezing_point(dt, dd, dS);
            CHECK(f.freezing);
            CHECK(f.n == n);
            CHECK(f.m == mm);
            const auto p = params(dS, dd, 0.05, dt);
            CHECK(relaxation_constants(p, 0.6).R < 1e-12);
            const auto c = offdiag_coeffs(p, 0.6);
            CHECK(std::abs(c.c1) < 1e-12);
            CHECK(std::abs(c.c3) < 1e-12);
            CHECK(std::abs(c.c4) < 1e-12);
            const double expected =
                -p.lambda * p.lambda * std::cosh(0.6 * p.deltaB() / 2) * n * n * (2 * mm + n) * kPi / (mm * (mm + n) * dS * dS);
            CHECK(c.c2 == doctest::Approx(expected).epsilon(1e-12));
        }
    }
}

TEST_CASE("off-diagonal coefficients against the trigonometric forms") {
    auto zero = offdiag_coeffs(params(1.0, 0.4, 0.05, 0.0), 0.7);
    CHECK(zero.c1 == 0.0);
    CHECK(zero.c2 == 0.0);
    CHECK(zero.c3 == 0.0);
    CHECK(zero.c4 == 0.0);

    const auto f = offdiag_coeffs(params(1.0, 2.0, 0.01, kPi), 0.75);
    CHECK(f.c2 == doctest::Approx(-1e-4 * std::cosh(1.125) * 3 * kPi / 2).epsilon(1e-12));
    CHECK(f.c2 == doctest::Approx(-8.02e-4).epsilon(2e-3));

    Generator g(18);
    for (int i = 0; i < 300; ++i) {
        const auto p = g.point();
        const double beta = g.uniform(0.0, 2.0);
        const auto c = offdiag_coeffs(p, beta);
        const auto r = raw(p, beta);
        const double scale = p.lambda * p.lambda * std::cosh(beta * p.deltaB() / 2) * p.dt * p.dt;
        CHECK(close(c.c1, r.c1(), 1e-9, 1e-12 * scale));
        CHECK(close(c.c2, r.c2(), 1e-9, 1e-12 * scale));
        CHECK(close(c.c3, r.c3(), 1e-9, 1e-12 * scale));
        CHECK(close(c.c4, r.c4(), 1e-9, 1e-12 * scale));
        CHECK(c.c1 <= 0.0);
        const Complex g2 = c.gamma * c.gamma;
        CHECK(std::abs(g2.real() - c.gamma_squared()) <= 1e-12 * std::max(1e-300, std::abs(c.gamma_squared())));
        CHECK(std::abs(g2.imag()) == 0.0);
        CHECK((c.gamma.real() >= 0.0 && c.gamma.imag() >= 0.0));
        CHECK((c.gamma.real() == 0.0 || c.gamma.imag() == 0.0));
    }

    // Both sides of the series threshold of the small-argument branch.
    for (double dd : {0.05, 0.02, 1e-4, 1e-8}) {
        const auto p = params(1.0, dd, 0.05, 2.0);
        const auto c = offdiag_coeffs(p, 0.5);
        const auto r = raw(p, 0.5);
        if (dd >= 1e-4) CHECK(close(c.c2, r.c2(), 1e-9));
        CHECK(std::isfinite(c.c3));
        CHECK(std::isfinite(c.c4));
    }
    const auto a = offdiag_coeffs(params(1.0, 1e-9, 0.05, 2.0), 0.5);
    const auto b = offdiag_coeffs(params(1.0, 0.0, 0.05, 2.0), 0.5);
    CHECK(a.c3 == doctest::Approx(b.c3).epsilon(1e-7));
    CHECK(a.c4 == doctest::Approx(b.c4).epsilon(1e-7));
    CHECK(a.c2 == doctest::Approx(b.c2).epsilon(1e-7));
}

TEST_CASE("off-diagonal map and closed form") {
    CHECK(offdiag_map(Complex(0.2, 0.1), params(1.0, 0.5, 0.0, 2.0), 0.5) == Complex(0.2, 0.1));

    // Freezing point: pure phase rotation with |rho10| constant.
    const auto fp = params(1.0, 2.0, 0.05, kPi);
    const auto cf = offdiag_coeffs(fp, 0.75);
    const Complex z0(0.35, 0.0);
    CHECK(std::abs(offdiag_map(z0, fp, 0.75) - z0 * Complex(1.0, cf.c2)) < 1e-15);
    for (double j : {0.0, 10.0, 500.0, 12345.0}) {
        const auto v = offdiag_closed_form(z0, j, cf);
        CHECK(v.abs == doctest::Approx(0.35).epsilon(1e-12));
        CHECK(std::abs(v.rho10 - z0 * std::exp(Complex(0.0, cf.c2 * j))) < 1e-12);
    }

    const auto c0 = offdiag_closed_form(Complex(0.1, -0.2), 0.0, offdiag_coeffs(params(1.0, 0.3, 0.05, 2.0), 0.5));
    CHECK(std::abs(c0.rho10 - Complex(0.1, -0.2)) < 1e-15);

    Generator g(19);
    for (int i = 0; i < 30; ++i) {
        const auto p = g.point();
        const double beta = g.uniform(0.0, 2.0);
        const auto c = offdiag_coeffs(p, beta);
        const Complex z(g.uniform(-0.3, 0.3), g.uniform(-0.3, 0.3));

        // Oracle: the exponential form of the solution with a complex gamma.
        const Complex gm = std::sqrt(Complex(c.gamma_squared(), 0.0));
        const double x0 = z.real(), y0 = z.imag();
        for (double j : {1.0, 37.0, 400.0}) {
            const Complex e2 = std::exp(2.0 * gm * j), pre = std::exp((c.c1 - gm) * j) / (2.0 * gm);
            const Complex x = pre * ((c.c3 * (e2 - 1.0) + gm * (e2 + 1.0)) * x0 + (c.c4 - c.c2) * (e2 - 1.0) * y0);
            const Complex y = pre * ((c.c2 + c.c4) * (e2 - 1.0) * x0 + (-c.c3 * (e2 - 1.0) + gm * (e2 + 1.0)) * y0);
            const auto v = offdiag_closed_form(z, j, c);
            CHECK(std::abs(v.rho10.real() - x.real()) < 1e-10);
            CHECK(std::abs(v.rho10.imag() - y.real()) < 1e-10);
            CHECK(v.abs == doctest::Approx(std::abs(v.rho10)).epsilon(1e-12));
        }

        // Oracle: RK4 integration of the coupled equations for (Re, Im).
        auto rhs = [&](double x, double y) {
            return std::pair<double, double>{(c.c1 + c.c3) * x + (c.c4 - c.c2) * y, (c.c2 + c.c4) * x + (c.c1 - c.c3) * y};
        };
        double x = z.real(), y = z.imag();
        const double h = 0.02;
        for (int step = 1; step <= 10000; ++step) {
            const auto [k1x, k1y] = rhs(x, y);
            const auto [k2x, k2y] = rhs(x + h / 2 * k1x, y + h / 2 * k1y);
            const auto [k3x, k3y] = rhs(x + h / 2 * k2x, y + h / 2 * k2y);
            const auto [k4x, k4y] = rhs(x + h * k3x, y + h * k3y);
            x += h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x);
            y += h / 6 * (k1y + 2 * k2y + 2 * k3y + k4y);
            if (step % 2500 == 0) CHECK(std::abs(Complex(x, y) - offdiag_closed_form(z, step * h, c).rho10) < 1e-10);
        }
        CHECK(offdiag_closed_form(z, 1e7, c).abs < 1e-6);
        CHECK(offdiag_closed_form(z, 1e7, c).abs == offdiag_closed_form(z, 1e7, c).abs);
    }

    OffdiagCoeffs degenerate;
    degenerate.c1 = -1e-3;
    degenerate.c2 = 2e-3;
    degenerate.c3 = 2e-3;
    degenerate.c4 = 0.0;
    degenerate.gamma = 0.0;
    const auto v = offdiag_closed_form(Complex(0.2, 0.1), 100.0, degenerate);
    // gamma = 0: x' = (c1 + c3) x + (c4 - c2) y etc. solved by a nilpotent generator.
    const double x = 0.2, y = 0.1, j = 100.0;
    const double ex = std::exp(-1e-3 * j);
    CHECK(v.rho10.real() == doctest::Approx(ex * (x + j * (2e-3 * x - 2e-3 * y))).epsilon(1e-12));
    CHECK(v.rho10.imag() == doctest::Approx(ex * (y + j * (2e-3 * x - 2e-3 * y))).epsilon(1e-12));
}

TEST_CASE("coupling load indicator") {
    const auto p = params(1.0, 0.0, 0.05, kPi);
    CHECK(coupling_load(p, 0.75) == doctest::Approx(4 * 0.0025 * std::cosh(0.375) * kPi * kPi / 4));
    CHECK(coupling_load(p, 0.75) == doctest::Approx(relaxation_constants(p, 0.75).R / 2));
}
