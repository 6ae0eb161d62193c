#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <thread>
#include <utility>
#include <vector>

#include "bandlab/catalog.hpp"
#include "bandlab/ensemble.hpp"
#include "bandlab/graph.hpp"
#include "bandlab/kernels.hpp"
#include "bandlab/rng.hpp"

namespace bandlab {

struct FitDegenerate : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct WraparoundMass : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// streaming mean and variance, Welford update
struct RunningStat {
    int64_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void push(double x) {
        ++n;
        double d = x - mean;
        mean += d / double(n);
        m2 += d * (x - mean);
    }
    double variance() const { return n > 1 ? m2 / double(n - 1) : 0.0; }
    double stderr_of_mean() const { return n > 0 ? std::sqrt(variance() / double(n)) : 0.0; }
};

inline double quantile_inplace(std::vector<double>& v, double q) {
    if (v.empty()) return 0.0;
    size_t k = size_t(q * double(v.size() - 1) + 0.5);
    k = std::min(k, v.size() - 1);
    std::nth_element(v.begin(), v.begin() + k, v.end());
    return v[k];
}

// run fn(sample_index, frame) for every sample; with threads > 1 the index
// range is split into contiguous blocks, so fn must only touch per-index
// slots for the result to stay deterministic
template <class Fn>
inline void for_each_sample(const VarianceProfile& prof, cplx z, int n_samples,
                            std::uint64_t seed, int threads, Fn&& fn) {
    auto run = [&](int lo, int hi) {
        for (int i = lo; i < hi; ++i) {
            BandMatrixSample smp = sample_h(prof, seed, i);
            ResolventFrame fr = resolvent(smp, z);
            fn(i, fr);
        }
    };
    if (threads <= 1 || n_samples <= 1) {
        run(0, n_samples);
        return;
    }
    int nt = std::min<int>(threads, n_samples);
    int chunk = (n_samples + nt - 1) / nt;
    std::vector<std::thread> pool;
    for (int t = 0; t < nt; ++t) {
        int lo = t * chunk, hi = std::min(n_samples, lo + chunk);
        if (lo < hi) pool.emplace_back(run, lo, hi);
    }
    for (auto& th : pool) th.join();
}

// diagonal pairs are legitimate probes, so a == b is allowed
inline std::vector<std::pair<int64_t, int64_t>> draw_site_pairs(std::uint64_t seed, int n_pairs,
                                                                int64_t n_sites) {
    std::vector<std::pair<int64_t, int64_t>> out;
    std::uint64_t lo = 0;
    while (int(out.size()) < n_pairs) {
        int64_t a = int64_t(uniform_index(seed ^ 0x70616972u, 0xfeed, lo++, std::uint64_t(n_sites)));
        int64_t b = int64_t(uniform_index(seed ^ 0x70616972u, 0xfeed, lo++, std::uint64_t(n_sites)));
        out.emplace_back(a, b);
    }
    return out;
}

struct EstimatorStat {
    std::string name;
    double mean = 0.0;
    double se = 0.0;
};

struct EstimatorReport {
    int n_samples = 0;
    std::uint64_t seed = 0;
    std::vector<EstimatorStat> stats;
};

// generic sample-mean harness: fn maps a frame to one value per named
// statistic, the report carries mean and standard error for each
template <class Fn>
inline EstimatorReport mc_expect(const VarianceProfile& prof, cplx z, int n_samples,
                                 std::uint64_t seed, const std::vector<std::string>& names,
                                 Fn&& fn, int threads = 1) {
    if (n_samples < 2) throw std::invalid_argument("mc_expect: need at least two samples");
    std::vector<std::vector<double>> slots(n_samples);
    for_each_sample(prof, z, n_samples, seed, threads, [&](int i, const ResolventFrame& fr) {
        slots[i] = fn(fr);
        if (slots[i].size() != names.size())
            throw std::invalid_argument("mc_expect: estimator arity does not match names");
    });
    EstimatorReport rep;
    rep.n_samples = n_samples;
    rep.seed = seed;
    for (size_t k = 0; k < names.size(); ++k) {
        RunningStat st;
        for (int i = 0; i < n_samples; ++i) st.push(slots[i][k]);
        rep.stats.push_back({names[k], st.mean, st.stderr_of_mean()});
    }
    return rep;
}

struct ResidualPair {
    int64_t a = 0, b = 0;
    cplx mean{0, 0};
    double se_re = 0.0, se_im = 0.0;
    bool pass = false;
};

struct ResidualReport {
    int order = 2;
    int n_samples = 0;
    double sigma_bound = 4.0;
    std::vector<ResidualPair> pairs;
    bool pass = false;
};

// per-sample residual of the expansion of T_{ab} around its diffusive lead
// term plus the catalog remainder graphs; the fluctuation average should be
// consistent with zero at every probed pair
inline ResidualReport t_expansion_residual(const VarianceProfile& prof, cplx z, int order,
                                           int n_samples, int n_pairs, std::uint64_t seed,
                                           int threads = 1, double sigma_bound = 4.0,
                                           int budget_override = -1) {
    if (order != 2 && order != 3)
        throw std::invalid_argument("t_expansion_residual: order must be 2 or 3");
    SpectralPoint pt = m_sc(z);
    KernelSet ks = make_kernel_set(prof, pt);
    std::vector<AtomicGraph> graphs = catalog_a2();
    if (order == 3) {
        auto a3 = catalog_a3();
        graphs.insert(graphs.end(), a3.begin(), a3.end());
    }
    const int budget = budget_override > 0 ? budget_override : (order == 3 ? 4 : 3);
    auto pairs = draw_site_pairs(seed, n_pairs, prof.lattice().N);

    std::vector<std::vector<cplx>> xs(pairs.size(), std::vector<cplx>(n_samples));
    for_each_sample(prof, z, n_samples, seed, threads, [&](int i, const ResolventFrame& fr) {
        EvalContext ctx = ks.context(budget);
        ctx.frame = &fr;
        for (size_t k = 0; k < pairs.size(); ++k) {
            auto [a, b] = pairs[k];
            cplx t = t_general(fr, prof, pt, a, b, b).first;
            cplx lead = pt.m * ks.theta.at(a, b) * std::conj(fr.G(b, b));
            cplx rest = 0;
            ctx.external_sites = {{0, a}, {1, b}, {2, b}};
            for (const auto& g : graphs) rest += evaluate(g, ctx);
            xs[k][i] = t - lead - rest;
        }
    });

    ResidualReport rep;
    rep.order = order;
    rep.n_samples = n_samples;
    rep.sigma_bound = sigma_bound;
    rep.pass = true;
    for (size_t k = 0; k < pairs.size(); ++k) {
        RunningStat re, im;
        for (const cplx& x : xs[k]) {
            re.push(x.real());
            im.push(x.imag());
        }
        ResidualPair pr;
        pr.a = pairs[k].first;
        pr.b = pairs[k].second;
        pr.mean = cplx(re.mean, im.mean);
        pr.se_re = re.stderr_of_mean();
        pr.se_im = im.stderr_of_mean();
        pr.pass = std::abs(re.mean) <= sigma_bound * pr.se_re &&
                  std::abs(im.mean) <= sigma_bound * pr.se_im;
        rep.pass = rep.pass && pr.pass;
        rep.pairs.push_back(pr);
    }
    return rep;
}

namespace detail {

inline std::vector<int32_t> displacement_table(const TorusLattice& lat) {
    if (lat.N > 8192)
        throw SizeCap("displacement_table: lattice too large for a dense pair table");
    std::vector<int32_t> tab(size_t(lat.N) * size_t(lat.N));
    for (int64_t x = 0; x < lat.N; ++x)
        for (int64_t y = 0; y < lat.N; ++y) tab[size_t(x) * lat.N + y] = int32_t(lat.diff(y, x));
    return tab;
}

struct TwoParamFit {
    double a = 0.0, b = 0.0;
};

// weighted least squares of y(p) ~ a + b * u(p) restricted to the index set
inline TwoParamFit wls_two_param(const std::vector<double>& y, const std::vector<double>& u,
                                 const std::vector<double>& w, const std::vector<int64_t>& idx) {
    double sw = 0, su = 0, suu = 0, sy = 0, suy = 0;
    for (int64_t ip : idx) {
        double wi = w[ip];
        sw += wi;
        su += wi * u[ip];
        suu += wi * u[ip] * u[ip];
        sy += wi * y[ip];
        suy += wi * u[ip] * y[ip];
    }
    double det = sw * suu - su * su;
    if (!(det > 1e-14 * (std::abs(sw * suu) + su * su + 1e-300)))
        throw FitDegenerate("diffusion fit: design matrix is numerically singular");
    TwoParamFit f;
    f.b = (sw * suy - su * sy) / det;
    f.a = (suu * sy - su * suy) / det;
    return f;
}

} // namespace detail

struct DiffusionReport {
    int n_samples = 0;
    int n_momenta = 0;
    double a_hat = 0.0, b_hat = 0.0;
    double eta_hat = 0.0, eta_true = 0.0, eta_err = 0.0;
    Eigen::MatrixXd d_hat, d_ref;
    double d_err = 0.0;
    double mass_hat = 0.0, mass_ref = 0.0;
    std::vector<double> ghat;   // momentum profile the fit consumed
};

namespace detail {

// fit the reciprocal momentum profile against the exact one-step shape
// 1/g(p) = a + b (1 - shat(p)), which the diffusive family satisfies with
// a = (1-|m|^2)/|m|^2 and b = 1; small momenta only, profile-squared weights
inline DiffusionReport fit_momentum_profile(const VarianceProfile& prof, cplx z,
                                            const std::vector<double>& ghat) {
    const TorusLattice& lat = prof.lattice();
    const int d = lat.d;
    SpectralPoint pt = m_sc(z);

    const double cutoff = 3.14159265358979323846 / (2.0 * double(prof.geom.W));
    std::vector<int64_t> window;
    std::vector<double> p(d);
    for (int64_t ip = 0; ip < lat.N; ++ip) {
        lat.momentum(ip, p.data());
        double mx = 0;
        for (double c : p) mx = std::max(mx, std::abs(c));
        if (mx <= cutoff) window.push_back(ip);
    }
    const int need = 1 + d * (d + 1) / 2;
    if (int(window.size()) < need)
        throw FitDegenerate("diffusion fit: momentum window smaller than the model");

    std::vector<double> y(lat.N, 0.0), u(lat.N, 0.0), w(lat.N, 0.0);
    for (int64_t ip : window) {
        if (!(ghat[ip] > 0))
            throw FitDegenerate("diffusion fit: nonpositive momentum profile in window");
        y[ip] = 1.0 / ghat[ip];
        u[ip] = 1.0 - prof.symbol[ip];
        w[ip] = ghat[ip] * ghat[ip];
    }
    detail::TwoParamFit f = detail::wls_two_param(y, u, w, window);

    DiffusionReport rep;
    rep.ghat = ghat;
    rep.n_momenta = int(window.size());
    rep.a_hat = f.a;
    rep.b_hat = f.b;
    rep.eta_hat = f.a * pt.m.imag();
    rep.eta_true = z.imag();
    rep.eta_err = std::abs(rep.eta_hat - rep.eta_true) / rep.eta_true;
    rep.d_ref = diffusion_matrix(prof, z.real());
    rep.d_hat = f.b * rep.d_ref;
    rep.d_err = (rep.d_hat - rep.d_ref).norm() / rep.d_ref.norm();
    rep.mass_hat = ghat[0];
    rep.mass_ref = pt.m.imag() / z.imag();
    return rep;
}

} // namespace detail

// estimate the spectral broadening and the diffusion matrix from sampled
// two-point intensities, averaged over all rows by translation invariance
inline DiffusionReport diffusion_fit(const VarianceProfile& prof, cplx z, int n_samples,
                                     std::uint64_t seed, int threads = 1) {
    const TorusLattice& lat = prof.lattice();
    double thouless = double(prof.geom.W) * double(prof.geom.W) / (double(lat.L) * double(lat.L));
    if (!(z.imag() >= thouless))
        throw std::invalid_argument("diffusion_fit: eta below the Thouless window W^2/L^2");
    std::vector<int32_t> dtab = detail::displacement_table(lat);

    std::vector<std::vector<double>> slots(n_samples);
    for_each_sample(prof, z, n_samples, seed, threads, [&](int i, const ResolventFrame& fr) {
        std::vector<double> g(lat.N, 0.0);
        for (int64_t x = 0; x < lat.N; ++x) {
            const int32_t* row = dtab.data() + size_t(x) * lat.N;
            for (int64_t y = 0; y < lat.N; ++y) g[row[y]] += std::norm(fr.G(x, y));
        }
        slots[i] = std::move(g);
    });

    std::vector<double> mean(lat.N, 0.0);
    for (const auto& g : slots)
        for (int64_t v = 0; v < lat.N; ++v) mean[v] += g[v];
    double scale = 1.0 / (double(n_samples) * double(lat.N));
    cvec cval(lat.N);
    for (int64_t v = 0; v < lat.N; ++v) cval[v] = mean[v] * scale;
    detail::symmetrize_even(lat, cval);
    cvec sym = dft_forward(lat, cval);
    std::vector<double> ghat(lat.N);
    for (int64_t ip = 0; ip < lat.N; ++ip) ghat[ip] = sym[ip].real();

    DiffusionReport rep = detail::fit_momentum_profile(prof, z, ghat);
    rep.n_samples = n_samples;
    return rep;
}

// same fit applied to the exact diffusive family |m|^2 / (1 - |m|^2 shat);
// recovers the broadening and the moment-formula diffusion matrix without
// sampling noise, which pins down the estimator bias
inline DiffusionReport diffusion_calibration(const VarianceProfile& prof, cplx z) {
    const TorusLattice& lat = prof.lattice();
    SpectralPoint pt = m_sc(z);
    std::vector<double> ghat(lat.N);
    for (int64_t ip = 0; ip < lat.N; ++ip)
        ghat[ip] = pt.abs_m2 / (1.0 - pt.abs_m2 * prof.symbol[ip]);
    return detail::fit_momentum_profile(prof, z, ghat);
}

struct RwReport {
    int steps = 0;
    int window = 0;
    double sup_rel_err = 0.0;
    double tail_mass = 0.0;
};

namespace detail {

inline double pow_int(double x, int n) {
    double r = 1.0, b = x;
    for (int k = n; k > 0; k >>= 1) {
        if (k & 1) r *= b;
        b *= b;
    }
    return r;
}

} // namespace detail

// compare the n-step convolution power of the variance profile against the
// Gaussian density with matched covariance, inside a 3-sigma window
inline RwReport rw_gaussian(const VarianceProfile& prof, int steps, double tail_tol = 1e-8) {
    const TorusLattice& lat = prof.lattice();
    const int d = lat.d;
    Eigen::MatrixXd c = second_moment_matrix(prof);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
    double sig2_max = es.eigenvalues().maxCoeff();
    double half = double(lat.L) / 2.0;
    double tail = 2.0 * d * std::exp(-half * half / (2.0 * double(steps) * sig2_max));
    if (tail > tail_tol)
        throw WraparoundMass("rw_gaussian: torus too small for this many steps");

    cvec sym(lat.N);
    for (int64_t ip = 0; ip < lat.N; ++ip) sym[ip] = detail::pow_int(prof.symbol[ip], steps);
    cvec walk = dft_inverse(lat, sym);

    Eigen::MatrixXd cn = double(steps) * c;
    Eigen::MatrixXd cn_inv = cn.inverse();
    double det = cn.determinant();
    double norm = std::pow(2.0 * 3.14159265358979323846, -0.5 * d) / std::sqrt(det);

    int radius = int(std::floor(3.0 * std::sqrt(double(steps)) * double(prof.geom.W)));
    radius = std::min<int>(radius, lat.L / 2);

    RwReport rep;
    rep.steps = steps;
    rep.window = radius;
    rep.tail_mass = tail;

    std::vector<int> x(d, -radius);
    Eigen::VectorXd xv(d);
    while (true) {
        for (int i = 0; i < d; ++i) xv(i) = double(x[i]);
        double gauss = norm * std::exp(-0.5 * xv.dot(cn_inv * xv));
        double exact = walk[lat.index_of(x)].real();
        rep.sup_rel_err = std::max(rep.sup_rel_err, std::abs(exact - gauss) / gauss);
        int i = 0;
        while (i < d && ++x[i] > radius) x[i++] = -radius;
        if (i == d) break;
    }
    return rep;
}

struct OverlapReport {
    int n_sites = 0;
    double min_eigenvalue = 0.0;
    double max_diag_dev = 0.0;
    bool single_site_exact = false;
};

// Gram-type checks on the normalized spectral overlap restricted to a site set
inline OverlapReport overlap_scan(const ResolventFrame& fr, const std::vector<int64_t>& sites) {
    OverlapReport rep;
    rep.n_sites = int(sites.size());
    Eigen::MatrixXcd a = overlap_matrix(fr, sites);
    Eigen::MatrixXcd herm = 0.5 * (a + a.adjoint());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(herm);
    rep.min_eigenvalue = es.eigenvalues().minCoeff();
    for (int i = 0; i < a.rows(); ++i)
        rep.max_diag_dev = std::max(rep.max_diag_dev, std::abs(a(i, i) - cplx(1, 0)));
    Eigen::MatrixXcd one = overlap_matrix(fr, {sites.front()});
    rep.single_site_exact = one(0, 0) == cplx(1, 0);
    return rep;
}

struct OverlapNormScan {
    std::vector<int> radii;
    std::vector<double> mean_norm;     // averaged operator norm per radius
    std::vector<double> shape;         // K^4 / W^4 reference curve
};

// mean operator norm of the overlap matrix on balls of growing radius
inline OverlapNormScan overlap_norm_scan(const VarianceProfile& prof, cplx z,
                                         const std::vector<int>& radii, int n_samples,
                                         std::uint64_t seed, int threads = 1) {
    const TorusLattice& lat = prof.lattice();
    std::vector<std::vector<int64_t>> balls;
    for (int K : radii) {
        std::vector<int64_t> sites;
        for (int64_t v = 0; v < lat.N; ++v)
            if (lat.dist0(v) <= K) sites.push_back(v);
        balls.push_back(std::move(sites));
    }
    std::vector<std::vector<double>> slots(n_samples);
    for_each_sample(prof, z, n_samples, seed, threads, [&](int i, const ResolventFrame& fr) {
        std::vector<double> norms;
        for (const auto& sites : balls) {
            Eigen::MatrixXcd a = overlap_matrix(fr, sites);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (a + a.adjoint()));
            norms.push_back(es.eigenvalues().maxCoeff());
        }
        slots[i] = std::move(norms);
    });
    OverlapNormScan scan;
    scan.radii = radii;
    double w4 = std::pow(double(prof.geom.W), 4);
    for (size_t k = 0; k < radii.size(); ++k) {
        double acc = 0;
        for (int i = 0; i < n_samples; ++i) acc += slots[i][k];
        scan.mean_norm.push_back(acc / double(n_samples));
        scan.shape.push_back(std::pow(double(std::max(radii[k], 1)), 4) / w4);
    }
    return scan;
}

struct LocalLawStats {
    int n_samples = 0;
    double q50 = 0.0, q90 = 0.0, q99 = 0.0, qmax = 0.0;
    double diag_median = 0.0;
    std::vector<std::pair<double, double>> hist;   // log10 bin center, count
};

// distribution of |G_xy - m delta|^2 against the bracket field, pooled over
// entries and samples
inline LocalLawStats local_law_stats(const VarianceProfile& prof, cplx z, int n_samples,
                                     std::uint64_t seed, int threads = 1) {
    const TorusLattice& lat = prof.lattice();
    SpectralPoint pt = m_sc(z);
    LatticeKernel b = b_field(prof.geom);

    std::vector<std::vector<double>> ratio_slots(n_samples), diag_slots(n_samples);
    for_each_sample(prof, z, n_samples, seed, threads, [&](int i, const ResolventFrame& fr) {
        std::vector<double> ratios;
        ratios.reserve(size_t(lat.N) * lat.N);
        std::vector<double> diags;
        diags.reserve(lat.N);
        for (int64_t x = 0; x < lat.N; ++x)
            for (int64_t y = 0; y < lat.N; ++y) {
                cplx dev = fr.G(x, y);
                if (x == y) {
                    dev -= pt.m;
                    diags.push_back(std::abs(dev));
                }
                ratios.push_back(std::norm(dev) / b.at(x, y).real());
            }
        ratio_slots[i] = std::move(ratios);
        diag_slots[i] = std::move(diags);
    });

    std::vector<double> ratios, diags;
    for (int i = 0; i < n_samples; ++i) {
        ratios.insert(ratios.end(), ratio_slots[i].begin(), ratio_slots[i].end());
        diags.insert(diags.end(), diag_slots[i].begin(), diag_slots[i].end());
    }
    LocalLawStats st;
    st.n_samples = n_samples;
    st.qmax = *std::max_element(ratios.begin(), ratios.end());
    double lo = std::log10(*std::min_element(ratios.begin(), ratios.end()) + 1e-300);
    double hi = std::log10(st.qmax + 1e-300);
    if (hi <= lo) hi = lo + 1.0;
    const int nbins = 40;
    std::vector<double> counts(nbins, 0.0);
    for (double r : ratios) {
        int bin = int((std::log10(r + 1e-300) - lo) / (hi - lo) * nbins);
        counts[std::clamp(bin, 0, nbins - 1)] += 1.0;
    }
    for (int b = 0; b < nbins; ++b)
        st.hist.emplace_back(lo + (b + 0.5) * (hi - lo) / nbins, counts[b]);
    st.q50 = quantile_inplace(ratios, 0.50);
    st.q90 = quantile_inplace(ratios, 0.90);
    st.q99 = quantile_inplace(ratios, 0.99);
    st.diag_median = quantile_inplace(diags, 0.50);
    return st;
}

struct MonotoneReport {
    bool monotone = true;
    double min_step = 0.0;
};

// eta * Im G_{yy}(E + i eta) grows with eta for each fixed matrix; the spectral
// representation gives a nonnegative derivative term by term
inline MonotoneReport trace_monotonicity(const BandMatrixSample& smp, double E,
                                         const std::vector<double>& etas, int64_t site) {
    if (etas.size() < 2)
        throw std::invalid_argument("trace_monotonicity: need at least two eta values");
    std::vector<double> vals;
    for (double eta : etas) {
        Eigen::VectorXcd col = resolvent_column(smp, cplx(E, eta), site);
        vals.push_back(eta * col(site).imag());
    }
    MonotoneReport rep;
    rep.min_step = vals[1] - vals[0];
    for (size_t i = 1; i < vals.size(); ++i) {
        double step = vals[i] - vals[i - 1];
        rep.min_step = std::min(rep.min_step, step);
        if (step < 0) rep.monotone = false;
    }
    return rep;
}

} // namespace bandlab
