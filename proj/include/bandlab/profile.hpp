#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "bandlab/dft.hpp"
#include "bandlab/torus.hpp"

namespace bandlab {

struct PositivityViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class ProfileFamily { gaussian, bump };

// momentum-space shape generating the variance profile.  gaussian:
// psi(q) = exp(-|q|^2 / (2 sigma^2)); bump: compactly supported
// exp(1 - 1/(1 - |q/a|^2)) inside |q| < a, zero outside.
struct ProfileSpec {
    ProfileFamily family = ProfileFamily::gaussian;
    double shape = 1.0;     // gaussian sigma or bump cutoff a
    double c_psi = 0.3;     // curvature constant for the shape condition
    int W = 1;

    std::string family_name() const {
        return family == ProfileFamily::gaussian ? "gaussian" : "bump";
    }
};

inline double psi_eval(const ProfileSpec& spec, const std::vector<double>& q) {
    double q2 = 0;
    for (double c : q) q2 += c * c;
    if (spec.family == ProfileFamily::gaussian) {
        double s2 = spec.shape * spec.shape;
        return std::exp(-q2 / (2.0 * s2));
    }
    double a2 = spec.shape * spec.shape;
    if (q2 >= a2) return 0.0;
    return std::exp(1.0 - 1.0 / (1.0 - q2 / a2));
}

inline double psi_eval(const ProfileSpec& spec, double q2_euclid) {
    if (spec.family == ProfileFamily::gaussian) {
        double s2 = spec.shape * spec.shape;
        return std::exp(-q2_euclid / (2.0 * s2));
    }
    double a2 = spec.shape * spec.shape;
    if (q2_euclid >= a2) return 0.0;
    return std::exp(1.0 - 1.0 / (1.0 - q2_euclid / a2));
}

// minimum over a radial grid of max{1 - c|q|^2, 1 - c} - psi(q); nonnegative
// (up to rounding) means the stored curvature constant is admissible
inline double psi_shape_margin(const ProfileSpec& spec, double q_max = 8.0, int n_grid = 4000) {
    double worst = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= n_grid; ++i) {
        double q = q_max * double(i) / double(n_grid);
        double cap = std::max(1.0 - spec.c_psi * q * q, 1.0 - spec.c_psi);
        worst = std::min(worst, cap - psi_eval(spec, q * q));
    }
    return worst;
}

// translation-invariant variance profile on the band torus.  f is the
// displacement field (row of the doubly stochastic variance matrix),
// symbol its forward transform; both real, even, with sum(f) = 1.
struct VarianceProfile {
    BandGeometry geom;
    ProfileSpec spec;
    std::vector<double> f;        // size N, strictly positive
    std::vector<double> symbol;   // size N, symbol(0) = 1

    const TorusLattice& lattice() const { return geom.lattice; }

    double s(int64_t x, int64_t y) const { return f[geom.lattice.diff(x, y)]; }
    double s0(int64_t v) const { return f[v]; }
    double symbol_at(int64_t p) const { return symbol[p]; }
};

// Fourier construction: sample psi(W p) on the momentum lattice, transform
// back, floor roundoff-scale negatives, and renormalize to unit mass.
inline VarianceProfile build_profile(const ProfileSpec& spec, const TorusLattice& lat) {
    VarianceProfile prof;
    prof.geom = BandGeometry(lat, spec.W);
    prof.spec = spec;

    cvec sym(lat.N);
    for (int64_t p = 0; p < lat.N; ++p) {
        double q2 = spec.W * double(spec.W) * lat.momentum_norm2(p);
        sym[p] = psi_eval(spec, q2);
    }
    cvec raw = dft_inverse(lat, sym);

    std::vector<double> f(lat.N);
    double peak = 0;
    for (int64_t x = 0; x < lat.N; ++x) {
        // symmetrize so evenness holds exactly, then drop the imaginary dust
        int64_t xn = lat.negate(x);
        double v = 0.5 * (raw[x].real() + raw[xn].real());
        f[x] = v;
        peak = std::max(peak, v);
    }
    if (!(peak > 0)) throw PositivityViolation("build_profile: vanishing profile");

    const double floor_tol = 1e-14 * peak;
    for (auto& v : f) {
        if (v <= 0) {
            if (-v > floor_tol)
                throw PositivityViolation("build_profile: profile negative beyond rounding, family "
                                          + spec.family_name());
            v = std::numeric_limits<double>::min();
        }
    }

    double total = std::accumulate(f.begin(), f.end(), 0.0);
    if (!(total > 0)) throw PositivityViolation("build_profile: nonpositive mass");
    for (auto& v : f) v /= total;

    cvec fc(lat.N);
    for (int64_t x = 0; x < lat.N; ++x) fc[x] = f[x];
    cvec fsym = dft_forward(lat, fc);
    prof.symbol.resize(lat.N);
    for (int64_t p = 0; p < lat.N; ++p) prof.symbol[p] = fsym[p].real();

    prof.f = std::move(f);
    return prof;
}

// decay certificate: max over x != 0 of f(x) * W^d * (dist(x,0)/W)^k;
// bounded uniformly in L when the profile has polynomial decay of order k
inline double decay_report(const VarianceProfile& prof, int k) {
    const TorusLattice& lat = prof.lattice();
    const double Wd = std::pow(double(prof.geom.W), lat.d);
    double worst = 0;
    for (int64_t x = 1; x < lat.N; ++x) {
        if (lat.dist0(x) == 0) continue;
        double ratio = double(lat.dist0(x)) / double(prof.geom.W);
        worst = std::max(worst, prof.f[x] * Wd * std::pow(ratio, k));
    }
    return worst;
}

} // namespace bandlab
