#include "effenv/types.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace effenv {

QubitState QubitState::from_matrix(const Matrix2c& m, double tol) {
    const double tr = (m(0, 0) + m(1, 1)).real();
    if (std::abs(tr - 1.0) > tol) {
        std::ostringstream os;
        os << "QubitState: trace " << tr << " differs from one";
        throw std::invalid_argument(os.str());
    }
    QubitState s;
    s.rho00 = m(0, 0).real();
    s.rho11 = m(1, 1).real();
    s.rho10 = 0.5 * (m(1, 0) + std::conj(m(0, 1)));
    return s;
}

Matrix2c QubitState::matrix() const {
    Matrix2c m;
    m << Complex(rho00, 0.0), rho01(), rho10, Complex(rho11, 0.0);
    return m;
}

double QubitState::purity() const noexcept {
    return rho00 * rho00 + rho11 * rho11 + 2.0 * std::norm(rho10);
}

bool QubitState::is_valid(double tol) const noexcept {
    if (!std::isfinite(rho00) || !std::isfinite(rho11) || !std::isfinite(rho10.real()) ||
        !std::isfinite(rho10.imag())) {
        return false;
    }
    if (std::abs(rho00 + rho11 - 1.0) > tol) return false;
    if (rho00 < -tol || rho11 < -tol) return false;
    return std::norm(rho10) <= rho00 * rho11 + tol;
}

void QubitState::validate(double tol) const {
    if (!is_valid(tol)) {
        std::ostringstream os;
        os << "QubitState: invalid state (rho00=" << rho00 << ", rho11=" << rho11
           << ", |rho10|=" << std::abs(rho10) << ")";
        throw std::invalid_argument(os.str());
    }
}

}  // namespace effenv
