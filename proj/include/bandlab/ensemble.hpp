#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include "bandlab/dft.hpp"
#include "bandlab/kernels.hpp"
#include "bandlab/profile.hpp"
#include "bandlab/rng.hpp"
#include "bandlab/spectral.hpp"
#include "bandlab/torus.hpp"

namespace bandlab {

struct SizeCap : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SolveFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

constexpr int64_t kResolventSizeCap = 6000;
constexpr int64_t kEigenSizeCap = 3000;

// one draw of the Gaussian band ensemble; (seed, index) addresses the
// counter stream so samples of a run are independent and reproducible
struct BandMatrixSample {
    VarianceProfile profile;
    std::uint64_t seed = 0;
    std::uint64_t index = 0;
    Eigen::MatrixXcd H;

    const TorusLattice& lattice() const { return profile.geom.lattice; }
    const BandGeometry& geom() const { return profile.geom; }

    bool same_draw(const BandMatrixSample& o) const {
        return seed == o.seed && index == o.index && profile.geom == o.profile.geom;
    }
};

// off-diagonal entries have independent centered Gaussian real and imaginary
// parts of variance s_xy/2; the diagonal is real with variance s_xx
inline BandMatrixSample sample_h(const VarianceProfile& prof, std::uint64_t seed,
                                 std::uint64_t sample_index = 0, int64_t size_cap = kResolventSizeCap) {
    const TorusLattice& lat = prof.geom.lattice;
    const int64_t N = lat.N;
    if (N > size_cap) throw SizeCap("sample_h: lattice larger than the configured cap");

    BandMatrixSample smp;
    smp.profile = prof;
    smp.seed = seed;
    smp.index = sample_index;
    smp.H.resize(N, N);
    for (int64_t x = 0; x < N; ++x) {
        for (int64_t y = x; y < N; ++y) {
            double g0, g1;
            gaussian_pair(seed, sample_index, std::uint64_t(x) * std::uint64_t(N) + std::uint64_t(y), g0, g1);
            if (x == y) {
                smp.H(x, x) = cplx(g0 * std::sqrt(prof.f[0]), 0.0);
            } else {
                double sd = std::sqrt(0.5 * prof.s(x, y));
                cplx h(g0 * sd, g1 * sd);
                smp.H(x, y) = h;
                smp.H(y, x) = std::conj(h);
            }
        }
    }
    return smp;
}

struct ResolventFrame {
    const BandMatrixSample* sample = nullptr;
    cplx z;
    Eigen::MatrixXcd G;
    double residual = 0;

    double eta() const { return z.imag(); }
    const TorusLattice& lattice() const { return sample->lattice(); }
};

inline ResolventFrame resolvent(const BandMatrixSample& smp, cplx z) {
    if (!(z.imag() > 0)) throw std::invalid_argument("resolvent: needs eta > 0");
    const int64_t N = smp.lattice().N;
    Eigen::MatrixXcd A = smp.H - z * Eigen::MatrixXcd::Identity(N, N);
    ResolventFrame fr;
    fr.sample = &smp;
    fr.z = z;
    fr.G = A.partialPivLu().solve(Eigen::MatrixXcd::Identity(N, N));
    fr.residual = (A * fr.G - Eigen::MatrixXcd::Identity(N, N)).cwiseAbs().maxCoeff();
    if (fr.residual > 1e-8) throw SolveFailure("resolvent: residual above tolerance");
    return fr;
}

// single resolvent column G e_col, for estimators that never touch the rest
inline Eigen::VectorXcd resolvent_column(const BandMatrixSample& smp, cplx z, int64_t col) {
    if (!(z.imag() > 0)) throw std::invalid_argument("resolvent_column: needs eta > 0");
    const int64_t N = smp.lattice().N;
    Eigen::MatrixXcd A = smp.H - z * Eigen::MatrixXcd::Identity(N, N);
    Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(N);
    rhs(col) = 1.0;
    Eigen::VectorXcd g = A.partialPivLu().solve(rhs);
    double res = (A * g - rhs).cwiseAbs().maxCoeff();
    if (res > 1e-8) throw SolveFailure("resolvent_column: residual above tolerance");
    return g;
}

namespace detail {

inline void require_point_match(const ResolventFrame& fr, const SpectralPoint& pt, const char* who) {
    if (std::abs(fr.z - pt.z) > 1e-12 * std::max(1.0, std::abs(fr.z)))
        throw std::invalid_argument(std::string(who) + ": spectral point does not match the frame");
}

inline Eigen::MatrixXd dense_s_matrix(const VarianceProfile& prof) {
    const TorusLattice& lat = prof.geom.lattice;
    Eigen::MatrixXd S(lat.N, lat.N);
    for (int64_t x = 0; x < lat.N; ++x)
        for (int64_t y = 0; y < lat.N; ++y)
            S(x, y) = prof.s(x, y);
    return S;
}

} // namespace detail

// T_xy = |m|^2 sum_a s_xa |G_ay|^2, assembled from nonnegative terms so the
// sign invariant survives floating point
inline Eigen::MatrixXd t_matrix(const ResolventFrame& fr, const VarianceProfile& prof,
                                const SpectralPoint& pt) {
    detail::require_point_match(fr, pt, "t_matrix");
    Eigen::MatrixXd G2 = fr.G.cwiseAbs2();
    Eigen::MatrixXd S = detail::dense_s_matrix(prof);
    return pt.abs_m2 * (S * G2);
}

struct TPair {
    cplx first;    // T_{x, y1 y2}
    cplx second;   // T_{y1 y2, x}
};

inline TPair t_general(const ResolventFrame& fr, const VarianceProfile& prof, const SpectralPoint& pt,
                       int64_t x, int64_t y1, int64_t y2) {
    detail::require_point_match(fr, pt, "t_general");
    const int64_t N = fr.lattice().N;
    cplx acc1 = 0, acc2 = 0;
    for (int64_t a = 0; a < N; ++a) {
        double s = prof.s(x, a);
        acc1 += s * fr.G(a, y1) * std::conj(fr.G(a, y2));
        acc2 += s * fr.G(y1, a) * std::conj(fr.G(y2, a));
    }
    return {pt.abs_m2 * acc1, pt.abs_m2 * acc2};
}

struct WardReport {
    double residual = 0;   // worst absolute defect over both identity variants
    double scale = 0;      // max |(G - G*)/(2 i eta)|
    double relative() const { return residual / std::max(scale, 1e-300); }
};

// both spectral-decomposition identities: column sums G*G and row sums GG*
// each equal (G - G*)/(2 i eta)
inline WardReport ward_check(const ResolventFrame& fr) {
    const double eta = fr.eta();
    if (!(eta > 0)) throw std::invalid_argument("ward_check: needs eta > 0");
    Eigen::MatrixXcd imG = (fr.G - fr.G.adjoint()) / cplx(0, 2 * eta);
    WardReport rep;
    rep.scale = imG.cwiseAbs().maxCoeff();
    double r1 = (fr.G.adjoint() * fr.G - imG).cwiseAbs().maxCoeff();
    double r2 = (fr.G * fr.G.adjoint() - imG).cwiseAbs().maxCoeff();
    rep.residual = std::max(r1, r2);
    return rep;
}

// residual of G(z) - G(z') = i (eta - eta') G(z) G(z') on a shared sample
inline double interp_residual(const ResolventFrame& fa, const ResolventFrame& fb) {
    if (!fa.sample->same_draw(*fb.sample))
        throw std::invalid_argument("interp_residual: frames come from different draws");
    cplx dz(0.0, fa.eta() - fb.eta());
    return (fa.G - fb.G - dz * (fa.G * fb.G)).cwiseAbs().maxCoeff();
}

// three-term envelope Psi^2: floor W^{-Dcap}, dilated variance maximum, and
// window-averaged resolvent mass, windows of radius W^{1+tau}
inline Eigen::MatrixXd psi_matrix(const ResolventFrame& fr, double tau, double d_cap) {
    const TorusLattice& lat = fr.lattice();
    const VarianceProfile& prof = fr.sample->profile;
    const int W = prof.geom.W;
    const int R = int(std::floor(std::pow(double(W), 1.0 + tau)));
    const double floor_term = std::pow(double(W), -d_cap);
    const double mass_scale = std::pow(double(W), -(2.0 + 2.0 * tau) * lat.d);

    std::vector<double> dil = max_filter(lat, prof.f, 2 * R);

    // window sums of |G|^2 in both indices, separable by axis
    const int64_t N = lat.N;
    std::vector<double> col(N);
    Eigen::MatrixXd G2 = fr.G.cwiseAbs2();
    Eigen::MatrixXd win(N, N);
    for (int64_t y = 0; y < N; ++y) {
        for (int64_t x = 0; x < N; ++x) col[x] = G2(x, y);
        std::vector<double> out = box_filter(lat, col, R);
        for (int64_t x = 0; x < N; ++x) win(x, y) = out[x];
    }
    for (int64_t x = 0; x < N; ++x) {
        for (int64_t y = 0; y < N; ++y) col[y] = win(x, y);
        std::vector<double> out = box_filter(lat, col, R);
        for (int64_t y = 0; y < N; ++y) win(x, y) = out[y];
    }

    Eigen::MatrixXd psi2(N, N);
    for (int64_t x = 0; x < N; ++x)
        for (int64_t y = 0; y < N; ++y)
            psi2(x, y) = floor_term + dil[lat.diff(x, y)] + mass_scale * win(x, y);
    return psi2;
}

// Gram matrix of normalized resolvent columns, assembled through the exact
// spectral-decomposition identity instead of an N-fold inner product
inline Eigen::MatrixXcd overlap_matrix(const ResolventFrame& fr, const std::vector<int64_t>& sites) {
    const double eta = fr.eta();
    if (!(eta > 0)) throw std::invalid_argument("overlap_matrix: needs eta > 0");
    if (sites.empty()) throw std::invalid_argument("overlap_matrix: empty site set");
    const int n = int(sites.size());
    Eigen::MatrixXcd B(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            B(i, j) = (fr.G(sites[i], sites[j]) - std::conj(fr.G(sites[j], sites[i]))) / cplx(0, 2 * eta);
    Eigen::VectorXd norms(n);
    for (int i = 0; i < n; ++i) {
        double v = B(i, i).real();
        if (!(v > 0)) throw SolveFailure("overlap_matrix: column norm not positive");
        norms(i) = std::sqrt(v);
    }
    Eigen::MatrixXcd A(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            // on the diagonal the two normalization factors cancel exactly
            A(i, j) = i == j ? cplx(1, 0) : B(i, j) / (norms(i) * norms(j));
    return A;
}

struct EigenvectorReport {
    double lambda = 0;
    double sup_norm = 0;
    double ipr = 0;
    double weight_min = 0;   // minimized exponential-weight sum over centers
    bool localized = false;
};

// bulk eigenvector statistics: sup norm, participation, and the smallest
// exponentially weighted mass over candidate localization centers
inline std::vector<EigenvectorReport> eigen_metrics(const BandMatrixSample& smp, double kappa,
                                                    double ell, double gamma, double k_bound,
                                                    int64_t size_cap = kEigenSizeCap) {
    const TorusLattice& lat = smp.lattice();
    const int64_t N = lat.N;
    if (N > size_cap) throw SizeCap("eigen_metrics: lattice larger than the eigensolver cap");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(smp.H);
    if (es.info() != Eigen::Success) throw SolveFailure("eigen_metrics: eigensolver failed");

    // weights depend on displacement only through the torus distance
    std::vector<double> wtab(lat.L / 2 + 1);
    for (int r = 0; r <= lat.L / 2; ++r)
        wtab[r] = std::exp(std::pow(double(r) / ell, gamma));

    std::vector<EigenvectorReport> out;
    for (int64_t a = 0; a < N; ++a) {
        double lam = es.eigenvalues()(a);
        if (!(lam > -2 + kappa && lam < 2 - kappa)) continue;
        EigenvectorReport rep;
        rep.lambda = lam;
        Eigen::VectorXd u2 = es.eigenvectors().col(a).cwiseAbs2();
        rep.sup_norm = std::sqrt(u2.maxCoeff());
        rep.ipr = u2.cwiseProduct(u2).sum();
        double best = std::numeric_limits<double>::infinity();
        for (int64_t c = 0; c < N; ++c) {
            double acc = 0;
            for (int64_t x = 0; x < N; ++x) acc += u2(x) * wtab[lat.dist(x, c)];
            best = std::min(best, acc);
        }
        rep.weight_min = best;
        rep.localized = best <= k_bound;
        out.push_back(rep);
    }
    return out;
}

} // namespace bandlab
