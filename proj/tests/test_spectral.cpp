#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <functional>

#include "bandlab/spectral.hpp"

using namespace bandlab;
using std::complex;

namespace {

// Reference value computed straight from the defining integral
//   m(z) = integral of rho(t) / (t - z) over [-2, 2],
//   rho(t) = sqrt(4 - t^2) / (2 pi),
// by adaptive Simpson quadrature.  Substituting t = 2 sin(u) removes the
// square-root cusp at the endpoints, so the integrand is smooth.
complex<double> simpson_rec(double a, double b, complex<double> fa, complex<double> fm,
                            complex<double> fb, complex<double> whole, double tol, int depth,
                            const std::function<complex<double>(double)>& f) {
    double m1 = 0.5 * (a + b);
    double lm = 0.5 * (a + m1), rm = 0.5 * (m1 + b);
    complex<double> flm = f(lm), frm = f(rm);
    complex<double> left = (m1 - a) / 6.0 * (fa + 4.0 * flm + fm);
    complex<double> right = (b - m1) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
    return simpson_rec(a, m1, fa, flm, fm, left, tol / 2, depth - 1, f) +
           simpson_rec(m1, b, fm, frm, fb, right, tol / 2, depth - 1, f);
}

complex<double> stieltjes_semicircle(complex<double> z) {
    constexpr double pi = 3.14159265358979323846;
    auto f = [z](double u) -> complex<double> {
        double t = 2.0 * std::sin(u);
        double rho = std::sqrt(std::max(0.0, 4.0 - t * t)) / (2.0 * pi);
        return rho * 2.0 * std::cos(u) / (t - z);
    };
    double a = -pi / 2, b = pi / 2;
    complex<double> fa = f(a), fb = f(b), fm = f(0.0);
    complex<double> flq = f(-pi / 4), frq = f(pi / 4);
    complex<double> left = (0.0 - a) / 6.0 * (fa + 4.0 * flq + fm);
    complex<double> right = (b - 0.0) / 6.0 * (fm + 4.0 * frq + fb);
    return simpson_rec(a, 0.0, fa, flq, fm, left, 1e-12, 40, f) +
           simpson_rec(0.0, b, fm, frq, fb, right, 1e-12, 40, f);
}

} // namespace

TEST(Spectral, MatchesDefiningIntegral) {
    for (double E : {-1.9, -1.2, -0.5, 0.0, 0.4, 1.1, 1.8})
        for (double eta : {0.1, 0.5, 1.0, 3.0}) {
            complex<double> z(E, eta);
            auto pt = m_sc(z);
            auto ref = stieltjes_semicircle(z);
            EXPECT_NEAR(std::abs(pt.m - ref), 0.0, 1e-8)
                << "E=" << E << " eta=" << eta;
        }
}

TEST(Spectral, SatisfiesQuadraticFixedPoint) {
    for (double E : {-3.0, -2.0, -0.7, 0.0, 0.7, 2.0, 3.0})
        for (double eta : {1e-6, 1e-3, 0.2, 1.0, 10.0}) {
            complex<double> z(E, eta);
            auto pt = m_sc(z);
            EXPECT_GT(pt.m.imag(), 0.0);
            EXPECT_NEAR(std::abs(pt.m * pt.m + z * pt.m + 1.0), 0.0, 1e-12);
        }
}

TEST(Spectral, RealAxisClosedForm) {
    auto pt = m_sc(complex<double>(0.6, 0.0));
    EXPECT_NEAR(pt.m.real(), -0.3, 1e-14);
    EXPECT_NEAR(pt.m.imag(), std::sqrt(4.0 - 0.36) / 2.0, 1e-14);
    EXPECT_NEAR(std::abs(pt.m), 1.0, 1e-14); // on the real bulk m lies on the unit circle
    EXPECT_THROW(m_sc(complex<double>(2.0, 0.0)), OutsideBulk);
    EXPECT_THROW(m_sc(complex<double>(-2.5, 0.0)), OutsideBulk);
}

TEST(Spectral, MassIdentityHoldsToRounding) {
    for (double E : {-1.5, 0.0, 0.9})
        for (double eta : {0.05, 0.3, 1.0, 5.0}) {
            auto pt = m_sc(complex<double>(E, eta));
            EXPECT_LT(mass_identity_residual(pt), 1e-13);
            EXPECT_NEAR(pt.abs_m2, std::norm(pt.m), 0.0);
            EXPECT_NEAR(pt.theta_mass, pt.abs_m2 / (1.0 - pt.abs_m2), 1e-15);
        }
    EXPECT_THROW(mass_identity_residual(m_sc(complex<double>(0.0, 0.0))), std::invalid_argument);
}

TEST(Spectral, DensityScale) {
    EXPECT_DOUBLE_EQ(r_of_E(0.0), 1.0);
    EXPECT_DOUBLE_EQ(r_of_E(2.0), 0.0);
    EXPECT_DOUBLE_EQ(r_of_E(-2.0), 0.0);
    EXPECT_NEAR(r_of_E(1.0), std::sqrt(3.0) / 2.0, 1e-15);
    EXPECT_THROW(r_of_E(2.0001), OutsideBulk);
    auto pt = m_sc(complex<double>(1.0, 0.5));
    EXPECT_NEAR(pt.r, std::sqrt(3.0) / 2.0, 1e-15);
}

TEST(Spectral, RejectsLowerHalfPlane) {
    EXPECT_THROW(m_sc(complex<double>(0.0, -0.1)), std::invalid_argument);
}

TEST(Spectral, FarFieldDecay) {
    // for |z| large, m ~ -1/z
    auto pt = m_sc(complex<double>(50.0, 30.0));
    EXPECT_NEAR(std::abs(pt.m + 1.0 / pt.z), 0.0, 1e-3 * std::abs(1.0 / pt.z));
}
