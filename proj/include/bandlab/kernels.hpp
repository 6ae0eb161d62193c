#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bandlab/dft.hpp"
#include "bandlab/profile.hpp"
#include "bandlab/spectral.hpp"
#include "bandlab/torus.hpp"

namespace bandlab {

struct NearSingularSymbol : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ContractionFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SumZeroViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SupportViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DimensionTooLow : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NonConvergence : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class KernelKind { S, Splus, Sminus, Theta, ThetaM, B, SelfEnergy, LabelledTheta, Custom };

inline const char* kernel_kind_name(KernelKind k) {
    switch (k) {
        case KernelKind::S: return "S";
        case KernelKind::Splus: return "Splus";
        case KernelKind::Sminus: return "Sminus";
        case KernelKind::Theta: return "Theta";
        case KernelKind::ThetaM: return "ThetaM";
        case KernelKind::B: return "B";
        case KernelKind::SelfEnergy: return "SelfEnergy";
        case KernelKind::LabelledTheta: return "LabelledTheta";
        case KernelKind::Custom: return "Custom";
    }
    return "?";
}

// translation-invariant kernel stored as a displacement field together with
// its momentum symbol; evenness K(x) = K(-x) holds exactly by construction
struct LatticeKernel {
    BandGeometry geom;
    KernelKind kind = KernelKind::Custom;
    cvec values;
    cvec symbol;
    std::optional<SpectralPoint> point;
    int label_order = 0;   // nonzero only for labelled diffusive edges

    const TorusLattice& lattice() const { return geom.lattice; }

    cplx at(int64_t x, int64_t y) const { return values[geom.lattice.diff(x, y)]; }
    cplx at0(int64_t v) const { return values[v]; }
    cplx row_sum() const { return symbol[0]; }
};

namespace detail {

// enforce evenness exactly by averaging v and -v
inline void symmetrize_even(const TorusLattice& lat, cvec& v) {
    for (int64_t x = 0; x < lat.N; ++x) {
        int64_t xn = lat.negate(x);
        if (xn > x) {
            cplx avg = 0.5 * (v[x] + v[xn]);
            v[x] = avg;
            v[xn] = avg;
        }
    }
}

inline LatticeKernel kernel_from_symbol(const BandGeometry& geom, KernelKind kind, cvec symbol,
                                        std::optional<SpectralPoint> pt = std::nullopt) {
    LatticeKernel k;
    k.geom = geom;
    k.kind = kind;
    k.point = pt;
    k.values = dft_inverse(geom.lattice, symbol);
    symmetrize_even(geom.lattice, k.values);
    k.symbol = std::move(symbol);
    return k;
}

// real nonnegative field from a real symbol; tiny negative rounding noise is
// floored, anything larger means the symbol is effectively singular
inline void realize_nonnegative(LatticeKernel& k, const char* who) {
    double peak = 0, worst_imag = 0;
    for (auto& v : k.values) {
        peak = std::max(peak, std::abs(v.real()));
        worst_imag = std::max(worst_imag, std::abs(v.imag()));
    }
    if (worst_imag > 1e-12 * std::max(peak, 1e-300))
        throw NearSingularSymbol(std::string(who) + ": imaginary residue beyond rounding");
    for (auto& v : k.values) {
        double re = v.real();
        if (re < 0) {
            if (-re > 1e-12 * peak)
                throw NearSingularSymbol(std::string(who) + ": negative entry beyond rounding");
            re = 0.0;
        }
        v = cplx(re, 0.0);
    }
}

} // namespace detail

inline LatticeKernel make_kernel_from_values(const BandGeometry& geom, KernelKind kind, cvec values) {
    LatticeKernel k;
    k.geom = geom;
    k.kind = kind;
    k.symbol = dft_forward(geom.lattice, values);
    k.values = std::move(values);
    return k;
}

inline LatticeKernel s_kernel(const VarianceProfile& prof) {
    LatticeKernel k;
    k.geom = prof.geom;
    k.kind = KernelKind::S;
    k.values.assign(prof.f.begin(), prof.f.end());
    k.symbol.assign(prof.symbol.begin(), prof.symbol.end());
    return k;
}

// S+ = m^2 S / (1 - m^2 S), diagonal in momentum space
inline LatticeKernel splus_kernel(const VarianceProfile& prof, const SpectralPoint& pt) {
    const TorusLattice& lat = prof.lattice();
    const cplx m2 = pt.m2();
    cvec sym(lat.N);
    double min_den = std::numeric_limits<double>::infinity();
    for (int64_t p = 0; p < lat.N; ++p) {
        cplx num = m2 * prof.symbol[p];
        cplx den = 1.0 - num;
        min_den = std::min(min_den, std::abs(den));
        sym[p] = num / den;
    }
    if (min_den < 1e-10) throw NearSingularSymbol("splus_kernel: 1 - m^2 S(p) nearly vanishes");
    return detail::kernel_from_symbol(prof.geom, KernelKind::Splus, std::move(sym), pt);
}

inline LatticeKernel sminus_kernel(const VarianceProfile& prof, const SpectralPoint& pt) {
    LatticeKernel k = splus_kernel(prof, pt);
    k.kind = KernelKind::Sminus;
    for (auto& v : k.values) v = std::conj(v);
    for (auto& v : k.symbol) v = std::conj(v);
    return k;
}

// Theta = |m|^2 S / (1 - |m|^2 S); real nonnegative superposition of walks
inline LatticeKernel theta_kernel(const VarianceProfile& prof, const SpectralPoint& pt) {
    if (!(pt.eta > 0)) throw std::invalid_argument("theta_kernel: needs eta > 0");
    const TorusLattice& lat = prof.lattice();
    cvec sym(lat.N);
    double min_den = std::numeric_limits<double>::infinity();
    for (int64_t p = 0; p < lat.N; ++p) {
        double num = pt.abs_m2 * prof.symbol[p];
        double den = 1.0 - num;
        min_den = std::min(min_den, std::abs(den));
        sym[p] = num / den;
    }
    if (min_den < 1e-10) throw NearSingularSymbol("theta_kernel: 1 - |m|^2 S(p) nearly vanishes");
    LatticeKernel k = detail::kernel_from_symbol(prof.geom, KernelKind::Theta, std::move(sym), pt);
    detail::realize_nonnegative(k, "theta_kernel");
    return k;
}

// decay comparison profile B(x) = W^{-2} <x>^{-(d-2)}
inline LatticeKernel b_field(const BandGeometry& geom) {
    const TorusLattice& lat = geom.lattice;
    cvec vals(lat.N);
    const double w2 = 1.0 / (double(geom.W) * double(geom.W));
    const double expo = double(lat.d - 2);
    for (int64_t x = 0; x < lat.N; ++x)
        vals[x] = w2 * std::pow(geom.bracket0(x), -expo);
    LatticeKernel k = make_kernel_from_values(geom, KernelKind::B, std::move(vals));
    return k;
}

// truncated random-walk sum: symbol a(1-a^K)/(1-a) with a = |m|^2 S(p)
inline LatticeKernel theta_via_walk(const VarianceProfile& prof, const SpectralPoint& pt, int K) {
    if (K < 1) throw std::invalid_argument("theta_via_walk: K >= 1 required");
    if (!(pt.eta > 0)) throw std::invalid_argument("theta_via_walk: needs eta > 0");
    const TorusLattice& lat = prof.lattice();
    cvec sym(lat.N);
    for (int64_t p = 0; p < lat.N; ++p) {
        double a = pt.abs_m2 * prof.symbol[p];
        double partial;
        if (K == 1) {
            partial = a;   // one step is the bare kernel, no series arithmetic
        } else if (std::abs(1.0 - a) < 1e-14) {
            partial = double(K) * a;
        } else {
            partial = a * (1.0 - std::pow(a, K)) / (1.0 - a);
        }
        sym[p] = partial;
    }
    LatticeKernel k = detail::kernel_from_symbol(prof.geom, KernelKind::Theta, std::move(sym), pt);
    detail::realize_nonnegative(k, "theta_via_walk");
    return k;
}

// deterministic self-energy: even symmetric two-point kernel with a declared
// order tag and a provenance note for reports
struct SelfEnergyKernel {
    LatticeKernel kernel;
    int order = 4;
    std::string provenance;

    double row_sum_abs() const { return std::abs(kernel.row_sum()); }
};

// propagator corrected by one self-energy insertion family:
// symbol |m|^2 S / (1 - |m|^2 S (1 + sigma))
inline LatticeKernel theta_renormalized(const VarianceProfile& prof, const SpectralPoint& pt,
                                        const SelfEnergyKernel& sigma, const std::string& label = "") {
    if (!(pt.eta > 0)) throw std::invalid_argument("theta_renormalized: needs eta > 0");
    if (!(sigma.kernel.geom == prof.geom))
        throw std::invalid_argument("theta_renormalized: geometry mismatch");
    const TorusLattice& lat = prof.lattice();
    cvec sym(lat.N);
    double min_den = std::numeric_limits<double>::infinity(), max_num = 0;
    for (int64_t p = 0; p < lat.N; ++p) {
        cplx corrected = pt.abs_m2 * prof.symbol[p] * (1.0 + sigma.kernel.symbol[p]);
        max_num = std::max(max_num, std::abs(corrected));
        cplx den = 1.0 - corrected;
        min_den = std::min(min_den, std::abs(den));
        sym[p] = pt.abs_m2 * prof.symbol[p] / den;
    }
    if (max_num >= 1.0)
        throw ContractionFailure("theta_renormalized: corrected symbol leaves the unit disk (" + label + ")");
    if (min_den < 1e-10)
        throw NearSingularSymbol("theta_renormalized: denominator nearly vanishes (" + label + ")");
    LatticeKernel k = detail::kernel_from_symbol(prof.geom, KernelKind::ThetaM, std::move(sym), pt);
    return k;
}

// chained insertion kernel Theta E_1 Theta ... E_l Theta; the order tag adds
// the insertion orders and discounts the shared propagators
inline LatticeKernel labelled_edge(const LatticeKernel& theta, const std::vector<SelfEnergyKernel>& energies) {
    const TorusLattice& lat = theta.lattice();
    cvec sym = theta.symbol;
    int order = 2;
    if (!energies.empty()) {
        order = 0;
        for (const auto& e : energies) {
            if (!(e.kernel.geom == theta.geom))
                throw std::invalid_argument("labelled_edge: geometry mismatch");
            for (int64_t p = 0; p < lat.N; ++p) sym[p] *= e.kernel.symbol[p] * theta.symbol[p];
            order += e.order;
        }
        order -= 2 * (int(energies.size()) - 1);
    }
    LatticeKernel k = detail::kernel_from_symbol(theta.geom, KernelKind::LabelledTheta, std::move(sym), theta.point);
    k.label_order = energies.empty() ? 0 : order;
    if (energies.empty()) k.kind = KernelKind::Theta;
    return k;
}

// second displacement moment of the profile scaled by the density factor:
// D_ij = (r(E)/2) sum_x (x_i x_j / W^2) f(x)
inline Eigen::MatrixXd diffusion_matrix(const VarianceProfile& prof, double E) {
    const TorusLattice& lat = prof.lattice();
    const double scale = r_of_E(E) / (2.0 * double(prof.geom.W) * double(prof.geom.W));
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(lat.d, lat.d);
    std::vector<int> c(lat.d);
    std::vector<double> w(lat.d);
    for (int64_t x = 0; x < lat.N; ++x) {
        lat.site(x, c.data());
        // at even L the class L/2 represents both signs at once, so its cross
        // moments average to zero; only the diagonal keeps the full square
        for (int i = 0; i < lat.d; ++i) w[i] = (2 * c[i] == lat.L) ? 0.0 : double(c[i]);
        for (int i = 0; i < lat.d; ++i)
            for (int j = 0; j < lat.d; ++j) {
                double m = (i == j) ? double(c[i]) * double(c[i]) : w[i] * w[j];
                D(i, j) += scale * m * prof.f[x];
            }
    }
    // clean the asymmetry dust so the PSD check is honest
    D = 0.5 * (D + D.transpose()).eval();
    return D;
}

// second-moment matrix C_ij = sum_x x_i x_j f(x) without the density factor
inline Eigen::MatrixXd second_moment_matrix(const VarianceProfile& prof) {
    const TorusLattice& lat = prof.lattice();
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(lat.d, lat.d);
    std::vector<int> c(lat.d);
    std::vector<double> w(lat.d);
    for (int64_t x = 0; x < lat.N; ++x) {
        lat.site(x, c.data());
        // same antipodal-class rule as diffusion_matrix
        for (int i = 0; i < lat.d; ++i) w[i] = (2 * c[i] == lat.L) ? 0.0 : double(c[i]);
        for (int i = 0; i < lat.d; ++i)
            for (int j = 0; j < lat.d; ++j) {
                double m = (i == j) ? double(c[i]) * double(c[i]) : w[i] * w[j];
                C(i, j) += m * prof.f[x];
            }
    }
    C = 0.5 * (C + C.transpose()).eval();
    return C;
}

struct KernelNorms {
    double weak = 0;
    double strong = 0;
};

// weak-(a,b): W^{ad/2} max|K| plus the worst dyadic-box average term;
// strong-(a,b): max (W/<x>)^b <x>^{ad/2} |K(x)|
inline KernelNorms kernel_norms(const LatticeKernel& k, double a, double b) {
    if (!(a > 0) || !(b > 0)) throw std::invalid_argument("kernel_norms: exponents must be positive");
    const TorusLattice& lat = k.lattice();
    const int W = k.geom.W;
    const double half_dim = 0.5 * a * double(lat.d);

    double max_abs = 0, strong = 0;
    std::vector<double> mag(lat.N);
    for (int64_t x = 0; x < lat.N; ++x) {
        double v = std::abs(k.values[x]);
        mag[x] = v;
        max_abs = std::max(max_abs, v);
        double br = k.geom.bracket0(x);
        strong = std::max(strong, std::pow(double(W) / br, b) * std::pow(br, half_dim) * v);
    }

    // both index orders of the box sum: |K(y-x)| + |K(x-y)|
    std::vector<double> two_sided(lat.N);
    for (int64_t x = 0; x < lat.N; ++x) two_sided[x] = mag[x] + mag[lat.negate(x)];

    double weak = std::pow(double(W), half_dim) * max_abs;
    for (int64_t K = W; 2 * K <= lat.L; K *= 2) {
        std::vector<double> box = box_filter(lat, two_sided, int(K));
        double worst = *std::max_element(box.begin(), box.end());
        double term = std::pow(double(W) / double(K), b) * std::pow(double(K), half_dim - lat.d) * worst;
        weak = std::max(weak, term);
    }
    return {weak, strong};
}

struct SmoothingReport {
    double value = 0;   // |sum_x Theta_{0x} g(x - x0)|
    double bound = 0;   // second-moment factor times the decay envelope
    double tau = 0.2;
    double big_d = 10.0;
};

// summation-by-parts gain for sum-zero bumps: testing a diffusive kernel
// against g centered far away only sees the second moment of g
inline SmoothingReport sum_zero_smoothing(const LatticeKernel& theta, const std::vector<double>& g,
                                          int64_t x0, double tau = 0.2, double big_d = 10.0) {
    const TorusLattice& lat = theta.lattice();
    if (int64_t(g.size()) != lat.N) throw std::invalid_argument("sum_zero_smoothing: field size mismatch");

    double total = 0, support_radius = 0;
    for (int64_t v = 0; v < lat.N; ++v) {
        if (g[v] != 0.0) {
            total += g[v];
            support_radius = std::max(support_radius, double(lat.dist0(v)));
            if (std::abs(g[v] - g[lat.negate(v)]) > 1e-12)
                throw SupportViolation("sum_zero_smoothing: g must be symmetric");
        }
    }
    if (std::abs(total) > 1e-12) throw SumZeroViolation("sum_zero_smoothing: g has nonzero mass");

    const double K = std::max(support_radius, double(theta.geom.W));
    const double dist_x0 = double(lat.dist0(x0));
    if (dist_x0 < std::pow(K, 1.1))
        throw SupportViolation("sum_zero_smoothing: test point inside the near field of g");

    cplx acc = 0;
    for (int64_t v = 0; v < lat.N; ++v) {
        if (g[v] == 0.0) continue;
        // x = x0 + v so that x - x0 = v
        int64_t x = lat.diff(x0, lat.negate(v));
        acc += theta.values[x] * g[v];
    }

    double moment = 0;
    for (int64_t v = 0; v < lat.N; ++v) {
        if (g[v] == 0.0) continue;
        double dv = double(lat.dist0(v));
        moment += (dv * dv) / (dist_x0 * dist_x0) * std::abs(g[v]);
    }
    const int W = theta.geom.W;
    const double eta = theta.point ? theta.point->eta : 0.0;
    const double b_at_x0 = std::pow(double(W), -2.0) * std::pow(dist_x0 + W, -double(lat.d - 2));
    double envelope = std::pow(dist_x0, -big_d);
    if (eta > 0 && dist_x0 <= std::pow(eta, -0.5) * std::pow(double(W), 1.0 + tau))
        envelope += std::pow(dist_x0, tau) * b_at_x0;

    SmoothingReport rep;
    rep.value = std::abs(acc);
    rep.bound = moment * envelope;
    rep.tau = tau;
    rep.big_d = big_d;
    return rep;
}

struct QuadratureOptions {
    double rel_tol = 1e-6;
    int max_rounds = 8;
    int base_points = 8;    // per-axis grid at the coarsest round, multiple of 4
    int base_levels = 8;    // dyadic shells at the coarsest round
};

namespace detail {

// 1 - psi(q) without cancellation; the walk symbol divides by this and the
// quadrature probes q^2 down to the denormal range near p = 0
inline double one_minus_psi(const ProfileSpec& spec, double q2) {
    if (spec.family == ProfileFamily::gaussian) {
        double s2 = spec.shape * spec.shape;
        return -std::expm1(-q2 / (2.0 * s2));
    }
    double a2 = spec.shape * spec.shape;
    if (q2 >= a2) return 1.0;
    double t = q2 / a2;
    return -std::expm1(-t / (1.0 - t));
}

inline cplx inf_symbol(KernelKind kind, const ProfileSpec& spec, double q2, cplx m) {
    double psi = psi_eval(spec, q2);
    if (kind == KernelKind::Splus) {
        cplx num = m * m * psi;
        return num / (1.0 - num);
    }
    if (kind == KernelKind::Sminus) {
        cplx num = std::conj(m) * std::conj(m) * psi;
        return num / (1.0 - num);
    }
    // boundary value |m| = 1 turns the walk symbol into psi/(1-psi)
    return cplx(psi / one_minus_psi(spec, q2), 0.0);
}

} // namespace detail

// infinite-lattice kernel entry at displacement x: the Brillouin integral
// (2pi)^{-d} int symbol(psi(Wp)) e^{ip.x} dp at the boundary energy E,
// via tensor midpoint rules over dyadic shells around p = 0
inline cplx kernel_infinite_limit(const ProfileSpec& spec, KernelKind kind, double E,
                                  const std::vector<int>& x, QuadratureOptions opt = {}) {
    const int d = int(x.size());
    if (d < 1) throw std::invalid_argument("kernel_infinite_limit: empty displacement");
    if (kind != KernelKind::Splus && kind != KernelKind::Sminus && kind != KernelKind::Theta)
        throw std::invalid_argument("kernel_infinite_limit: unsupported kernel kind");
    if (kind == KernelKind::Theta && d < 3)
        throw DimensionTooLow("kernel_infinite_limit: the walk kernel needs d >= 3 in infinite space");
    if (std::abs(E) >= 2.0) throw OutsideBulk("kernel_infinite_limit: boundary energy outside the bulk");
    const cplx m = m_sc(cplx(E, 0.0)).m;
    constexpr double pi = 3.14159265358979323846;

    cplx prev = 0, prev_extrap = 0;
    bool have_prev = false, have_extrap = false;
    for (int round = 0; round < opt.max_rounds; ++round) {
        const int n = opt.base_points << round;          // stays a multiple of 4
        const int levels = opt.base_levels + 4 * round;
        cplx total = 0;
        std::vector<double> t(n), t2(n);
        std::vector<cplx> phase_axis(size_t(d) * n);
        for (int lev = 0; lev < levels; ++lev) {
            const double h = pi * std::ldexp(1.0, -lev);
            const double cell = 2.0 * h / n;
            for (int i = 0; i < n; ++i) {
                t[i] = -h + cell * (i + 0.5);
                t2[i] = t[i] * t[i];
            }
            for (int k = 0; k < d; ++k)
                for (int i = 0; i < n; ++i)
                    phase_axis[size_t(k) * n + i] = cplx(std::cos(t[i] * x[k]), std::sin(t[i] * x[k]));
            const bool innermost = (lev == levels - 1);
            const double keep = h / 2.0;
            const double vol = std::pow(cell, d);
            // odometer over the tensor grid
            std::vector<int> idx(d, 0);
            cplx level_sum = 0;
            while (true) {
                double maxabs = 0, q2 = 0;
                cplx phase = 1.0;
                for (int k = 0; k < d; ++k) {
                    int i = idx[k];
                    maxabs = std::max(maxabs, std::abs(t[i]));
                    q2 += t2[i];
                    phase *= phase_axis[size_t(k) * n + i];
                }
                if (innermost || maxabs > keep)
                    level_sum += detail::inf_symbol(kind, spec, double(spec.W) * double(spec.W) * q2, m) * phase;
                int k = 0;
                while (k < d && ++idx[k] == n) idx[k++] = 0;
                if (k == d) break;
            }
            total += level_sum * vol;
        }
        total /= std::pow(2.0 * pi, d);
        if (have_prev) {
            // successive rounds halve the cells, so the midpoint error drops
            // 4:1 and the Richardson combination cancels the leading term
            cplx extrap = total + (total - prev) / 3.0;
            if (have_extrap) {
                double scale = std::max(std::abs(extrap), 1e-300);
                if (std::abs(extrap - prev_extrap) / scale < opt.rel_tol) return extrap;
            }
            prev_extrap = extrap;
            have_extrap = true;
        }
        prev = total;
        have_prev = true;
    }
    throw NonConvergence("kernel_infinite_limit: refinement budget exhausted");
}

} // namespace bandlab
