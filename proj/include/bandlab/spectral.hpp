#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>

namespace bandlab {

struct OutsideBulk : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Stieltjes transform of the semicircle law, the unique root of
// m^2 + z*m + 1 = 0 with positive imaginary part.  Cached scalars that
// recur in kernel formulas ride along.
struct SpectralPoint {
    std::complex<double> z;   // E + i*eta, eta >= 0
    std::complex<double> m;
    double E = 0;
    double eta = 0;
    double r = 0;             // sqrt(4 - E^2)/2 inside [-2, 2], NaN outside
    double abs_m2 = 0;        // |m|^2
    double theta_mass = 0;    // |m|^2 / (1 - |m|^2), +inf at eta = 0

    std::complex<double> m2() const { return m * m; }
    std::complex<double> mbar() const { return std::conj(m); }
};

// density scale sqrt(4 - E^2)/2 on the bulk interval
inline double r_of_E(double E) {
    if (std::abs(E) > 2.0) throw OutsideBulk("r_of_E: |E| > 2");
    return 0.5 * std::sqrt(4.0 - E * E);
}

inline SpectralPoint m_sc(std::complex<double> z) {
    SpectralPoint pt;
    pt.z = z;
    pt.E = z.real();
    pt.eta = z.imag();
    if (pt.eta < 0) throw std::invalid_argument("m_sc: negative spectral parameter");
    std::complex<double> m;
    if (pt.eta == 0.0) {
        if (std::abs(pt.E) >= 2.0) throw OutsideBulk("m_sc: boundary point outside the bulk");
        m = std::complex<double>(-pt.E / 2.0, std::sqrt(4.0 - pt.E * pt.E) / 2.0);
    } else {
        // product of the two roots is 1; form the larger root without
        // cancellation, invert for the smaller, then pick the one in the
        // upper half plane and polish with Newton steps.
        std::complex<double> s = std::sqrt(z - 2.0) * std::sqrt(z + 2.0);
        std::complex<double> big = (std::abs(-z + s) >= std::abs(-z - s)) ? (-z + s) / 2.0 : (-z - s) / 2.0;
        std::complex<double> small = 1.0 / big;
        m = (big.imag() > 0.0) ? big : small;
        for (int it = 0; it < 3; ++it) {
            std::complex<double> f = (m + z) * m + 1.0;
            std::complex<double> df = 2.0 * m + z;
            if (std::abs(df) < 1e-30) break;
            m -= f / df;
        }
        if (!(m.imag() > 0.0)) throw std::runtime_error("m_sc: root selection failed");
    }
    pt.m = m;
    pt.r = (std::abs(pt.E) <= 2.0) ? 0.5 * std::sqrt(std::max(0.0, 4.0 - pt.E * pt.E))
                                   : std::numeric_limits<double>::quiet_NaN();
    pt.abs_m2 = std::norm(m);
    pt.theta_mass = (pt.abs_m2 < 1.0) ? pt.abs_m2 / (1.0 - pt.abs_m2)
                                      : std::numeric_limits<double>::infinity();
    return pt;
}

// relative defect of |m|^2 / (1 - |m|^2) = Im m / eta, an exact identity
// for the self-consistent root at eta > 0
inline double mass_identity_residual(const SpectralPoint& pt) {
    if (!(pt.eta > 0.0)) throw std::invalid_argument("mass_identity_residual: needs eta > 0");
    double lhs = pt.theta_mass;
    double rhs = pt.m.imag() / pt.eta;
    return std::abs(lhs - rhs) / std::abs(rhs);
}

} // namespace bandlab
