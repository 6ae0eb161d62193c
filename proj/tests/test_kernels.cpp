#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "bandlab/catalog.hpp"
#include "bandlab/kernels.hpp"
#include "bandlab/rng.hpp"

using namespace bandlab;

namespace {

ProfileSpec gspec(int W) {
    ProfileSpec s;
    s.family = ProfileFamily::gaussian;
    s.shape = 1.0;
    s.c_psi = 0.3;
    s.W = W;
    return s;
}

VarianceProfile gprof(int d, int L, int W) { return build_profile(gspec(W), TorusLattice(d, L)); }

} // namespace

TEST(Splus, SymbolAtZeroMomentum) {
    auto prof = gprof(1, 32, 4);
    auto pt = m_sc(cplx(0.3, 0.7));
    auto sp = splus_kernel(prof, pt);
    cplx expect = pt.m2() / (1.0 - pt.m2());
    EXPECT_NEAR(std::abs(sp.symbol[0] - expect), 0.0, 1e-12);
    EXPECT_NEAR(std::abs(sp.row_sum() - expect), 0.0, 1e-12);
}

TEST(Splus, MinusKernelIsEntrywiseConjugate) {
    auto prof = gprof(1, 32, 4);
    auto pt = m_sc(cplx(0.3, 0.7));
    auto sp = splus_kernel(prof, pt);
    auto sm = sminus_kernel(prof, pt);
    for (int64_t x = 0; x < prof.lattice().N; ++x) {
        EXPECT_EQ(sm.values[x], std::conj(sp.values[x]));
        EXPECT_EQ(sm.symbol[x], std::conj(sp.symbol[x]));
    }
}

TEST(Splus, BandScaleDecayProfile) {
    // near field sits at the W^{-d} scale; by three band widths the entries
    // have dropped two orders below that scale (measured 1.4e-4 against a
    // near-field cap of 1.25e-1; the margins below are ~3x)
    auto prof = gprof(1, 32, 4);
    auto pt = m_sc(cplx(0.0, 1.0));
    auto sp = splus_kernel(prof, pt);
    const double wd = std::pow(4.0, -1.0);
    const double near_edge = std::pow(4.0, 1.1);
    for (int64_t x = 0; x < 32; ++x) {
        double dist = prof.lattice().dist0(x);
        double v = std::abs(sp.values[x]);
        if (dist <= near_edge) EXPECT_LE(v, 0.5 * wd);
        if (dist >= 3.0 * near_edge) EXPECT_LE(v, 2e-3 * wd);
    }
}

TEST(Theta, NearSingularDetection) {
    auto prof = gprof(1, 32, 4);
    EXPECT_THROW(theta_kernel(prof, m_sc(cplx(0.0, 1e-12))), NearSingularSymbol);
}

TEST(Theta, RowSumIsTheMass) {
    for (double E : {-0.8, 0.0, 1.2})
        for (double eta : {0.2, 0.6, 1.0}) {
            auto prof = gprof(1, 32, 4);
            auto pt = m_sc(cplx(E, eta));
            auto th = theta_kernel(prof, pt);
            double total = 0;
            for (const auto& v : th.values) total += v.real();
            EXPECT_NEAR(total, pt.theta_mass, 1e-8 * pt.theta_mass);
            EXPECT_NEAR(std::abs(th.row_sum()) / pt.theta_mass, 1.0, 1e-8);
        }
}

TEST(Theta, RealNonnegativeEntries) {
    auto prof = gprof(2, 16, 4);
    auto th = theta_kernel(prof, m_sc(cplx(0.5, 0.4)));
    for (const auto& v : th.values) {
        EXPECT_EQ(v.imag(), 0.0);
        EXPECT_GE(v.real(), 0.0);
    }
}

TEST(Theta, DominatedByScaledComparisonField) {
    // d=3 grid, spectral parameter at the diffusive scale W^2/L^1.8;
    // measured peak ratio 0.17 against the sqrt(W) B envelope
    auto prof = gprof(3, 24, 4);
    double eta = 16.0 / std::pow(24.0, 1.8);
    auto th = theta_kernel(prof, m_sc(cplx(0.0, eta)));
    auto B = b_field(prof.geom);
    for (int64_t x = 0; x < prof.lattice().N; ++x)
        EXPECT_LE(th.values[x].real(), std::sqrt(4.0) * B.values[x].real());
}

TEST(BField, ClosedFormValues) {
    {
        BandGeometry geom(2, 12, 3);
        auto B = b_field(geom);
        for (const auto& v : B.values) EXPECT_DOUBLE_EQ(v.real(), 1.0 / 9.0);
    }
    {
        BandGeometry geom(3, 12, 2);
        auto B = b_field(geom);
        int64_t x = geom.lattice.index_of(std::vector<int>{2, 0, 0});
        EXPECT_DOUBLE_EQ(B.at0(x).real(), 1.0 / 16.0); // W^-2 (dist+W)^-1 = 1/4 * 1/4
        // nonincreasing in distance
        for (int64_t a = 0; a < geom.lattice.N; ++a)
            for (int64_t b : {int64_t(1), int64_t(7), int64_t(100)})
                if (geom.lattice.dist0(a) <= geom.lattice.dist0(b))
                    EXPECT_GE(B.at0(a).real(), B.at0(b).real());
    }
}

TEST(Walk, SingleStepIsBareKernel) {
    auto prof = gprof(1, 32, 4);
    auto pt = m_sc(cplx(0.2, 0.5));
    auto w1 = theta_via_walk(prof, pt, 1);
    for (int64_t x = 0; x < 32; ++x)
        EXPECT_NEAR(w1.values[x].real(), pt.abs_m2 * prof.f[x], 1e-14);
}

TEST(Walk, MonotoneInLengthAndBelowLimit) {
    auto prof = gprof(1, 32, 4);
    auto pt = m_sc(cplx(0.2, 0.5));
    auto th = theta_kernel(prof, pt);
    auto prev = theta_via_walk(prof, pt, 1);
    for (int K = 2; K <= 6; ++K) {
        auto cur = theta_via_walk(prof, pt, K);
        for (int64_t x = 0; x < 32; ++x) {
            EXPECT_GE(cur.values[x].real(), prev.values[x].real() - 1e-14);
            EXPECT_LE(cur.values[x].real(), th.values[x].real() + 1e-14);
        }
        prev = cur;
    }
}

TEST(Walk, TruncationErrorBoundedByGeometricTail) {
    auto prof = gprof(1, 32, 4);
    auto pt = m_sc(cplx(0.2, 0.5));
    const int K = int(std::ceil(std::pow(4.0, 0.2) / 0.5));
    auto wk = theta_via_walk(prof, pt, K);
    auto th = theta_kernel(prof, pt);
    double dev = 0;
    for (int64_t x = 0; x < 32; ++x)
        dev = std::max(dev, std::abs(th.values[x].real() - wk.values[x].real()));
    double tail = std::pow(pt.abs_m2, K) / (1.0 - pt.abs_m2);
    EXPECT_LE(dev, 1e-9 + tail);
}

TEST(ThetaRenormalized, ZeroInsertionRecoversBareKernel) {
    auto prof = gprof(1, 32, 4);
    auto pt = m_sc(cplx(0.0, 0.5));
    SelfEnergyKernel zero;
    zero.kernel = make_kernel_from_values(prof.geom, KernelKind::SelfEnergy, cvec(prof.lattice().N, cplx(0)));
    zero.order = 4;
    auto thm = theta_renormalized(prof, pt, zero);
    auto th = theta_kernel(prof, pt);
    for (int64_t x = 0; x < 32; ++x)
        EXPECT_NEAR(std::abs(thm.values[x] - th.values[x]), 0.0, 1e-12);
}

TEST(ThetaRenormalized, SumZeroInsertionKeepsTheMass) {
    auto prof = gprof(1, 32, 4);
    auto pt = m_sc(cplx(0.0, 0.5));
    auto ks = make_kernel_set(prof, pt);
    auto sigma = renormalize_self_energy(self_energy_from_graph(catalog_e6().front(), ks), prof);
    ASSERT_LE(sigma.row_sum_abs(), 1e-14);
    auto thm = theta_renormalized(prof, pt, sigma);
    EXPECT_NEAR(std::abs(thm.row_sum()) / pt.theta_mass, 1.0, 1e-8);
}

TEST(ThetaRenormalized, StaysWithinVolumeEnvelope) {
    // measured peak ratio 0.18 against the L^0.2 B envelope at this geometry
    auto prof = gprof(3, 24, 4);
    double eta = 16.0 / std::pow(24.0, 1.8);
    auto pt = m_sc(cplx(0.0, eta));
    auto ks = make_kernel_set(prof, pt);
    auto sigma = renormalize_self_energy(self_energy_from_graph(catalog_e6().front(), ks), prof);
    auto thm = theta_renormalized(prof, pt, sigma);
    auto B = b_field(prof.geom);
    const double envelope = std::pow(24.0, 0.2);
    for (int64_t x = 0; x < prof.lattice().N; ++x)
        EXPECT_LE(std::abs(thm.values[x]), envelope * B.values[x].real());
}

TEST(ThetaRenormalized, RejectsExpandingInsertion) {
    auto prof = gprof(1, 32, 4);
    auto pt = m_sc(cplx(0.0, 0.3));
    SelfEnergyKernel big;
    cvec vals(prof.lattice().N);
    for (int64_t x = 0; x < 32; ++x) vals[x] = 5.0 * prof.f[x];
    big.kernel = make_kernel_from_values(prof.geom, KernelKind::SelfEnergy, std::move(vals));
    EXPECT_THROW(theta_renormalized(prof, pt, big), ContractionFailure);
}

TEST(LabelledEdge, EmptyChainIsTheBareKernel) {
    auto prof = gprof(1, 32, 4);
    auto th = theta_kernel(prof, m_sc(cplx(0.0, 0.5)));
    auto led = labelled_edge(th, {});
    EXPECT_EQ(led.kind, KernelKind::Theta);
    EXPECT_EQ(led.label_order, 0);
    for (int64_t x = 0; x < 32; ++x)
        EXPECT_NEAR(std::abs(led.values[x] - th.values[x]), 0.0, 1e-13);
}

TEST(LabelledEdge, SumZeroInsertionKillsTheRowSum) {
    auto prof = gprof(1, 32, 4);
    auto pt = m_sc(cplx(0.0, 0.5));
    auto th = theta_kernel(prof, pt);
    auto ks = make_kernel_set(prof, pt);
    auto sigma = renormalize_self_energy(self_energy_from_graph(catalog_e6().front(), ks), prof);
    auto led = labelled_edge(th, {sigma});
    EXPECT_EQ(led.label_order, 6);
    EXPECT_LE(std::abs(led.row_sum()), 1e-10);
}

TEST(LabelledEdge, InsertionChainStaysWithinScaledEnvelope) {
    // structural decay check; the insertion uses unit bookkeeping scalars, so
    // only the envelope shape is meaningful (measured peak ratio 6e-5)
    auto prof = gprof(3, 24, 4);
    double eta = 16.0 / std::pow(24.0, 1.8);
    auto pt = m_sc(cplx(0.0, eta));
    auto th = theta_kernel(prof, pt);
    auto ks = make_kernel_set(prof, pt);
    auto sigma = renormalize_self_energy(self_energy_from_graph(catalog_e6().front(), ks), prof);
    auto led = labelled_edge(th, {sigma});
    auto B = b_field(prof.geom);
    const int k = led.label_order;
    ASSERT_EQ(k, 6);
    const double scale = std::sqrt(4.0) * std::pow(4.0, -(double(k) - 2.0) * 3.0 / 2.0);
    for (int64_t x = 0; x < prof.lattice().N; ++x)
        EXPECT_LE(std::abs(led.values[x]), scale * B.values[x].real());
}

TEST(DiffusionMatrix, MatchesExplicitMomentSum) {
    auto prof = gprof(1, 128, 8);
    auto D = diffusion_matrix(prof, 0.0);
    double acc = 0;
    for (int64_t x = 0; x < 128; ++x) {
        int c = prof.lattice().site(x)[0];
        acc += double(c) * double(c) * prof.f[x];
    }
    double expect = 0.5 * acc / 64.0;
    EXPECT_NEAR(D(0, 0), expect, 1e-12 * expect);
    EXPECT_NEAR(D(0, 0), 0.5, 0.03 * 0.5); // second moment of the built profile sits at W^2
    auto D2 = diffusion_matrix(gprof(1, 256, 8), 0.0);
    EXPECT_NEAR(D2(0, 0), D(0, 0), 0.01 * D(0, 0));
}

TEST(DiffusionMatrix, EdgeEnergyAndSymmetry) {
    auto prof = gprof(2, 16, 4);
    EXPECT_NEAR(diffusion_matrix(prof, 2.0).norm(), 0.0, 1e-15);
    EXPECT_NEAR(diffusion_matrix(prof, -2.0).norm(), 0.0, 1e-15);
    auto D = diffusion_matrix(prof, 0.7);
    EXPECT_NEAR(D(0, 1), 0.0, 1e-12);
    EXPECT_NEAR(D(1, 0), 0.0, 1e-12);
    EXPECT_GT(D(0, 0), 0.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(D);
    EXPECT_GE(es.eigenvalues().minCoeff(), 0.0);
    EXPECT_THROW(diffusion_matrix(prof, 2.5), OutsideBulk);
}

TEST(KernelNorms, ComparisonFieldNormsAreExactlyOne) {
    TorusLattice lat(3, 16);
    BandGeometry geom(lat, 2);
    auto B = b_field(geom);
    auto n22 = kernel_norms(B, 2.0, 2.0);
    EXPECT_NEAR(n22.strong, 1.0, 1e-12);
    cvec half(lat.N);
    for (int64_t x = 0; x < lat.N; ++x) half[x] = std::sqrt(B.values[x].real());
    auto n11 = kernel_norms(make_kernel_from_values(geom, KernelKind::Custom, std::move(half)), 1.0, 1.0);
    EXPECT_NEAR(n11.strong, 1.0, 1e-12);
}

TEST(KernelNorms, WeakControlledByStrong) {
    // counter-based random fields keep this measurement reproducible; the
    // constants 8 and 16 sit ~1.5x above the measured suprema
    for (int d : {1, 2}) {
        TorusLattice lat(d, d == 1 ? 64 : 24);
        BandGeometry geom(lat, 4);
        const double cap = d == 1 ? 8.0 : 16.0;
        for (uint32_t trial = 0; trial < 10; ++trial) {
            double a = 0.4 + 0.16 * double(trial % 10);
            double b = 0.5 + 0.13 * double((trial * 7) % 10);
            cvec vals(lat.N);
            for (int64_t x = 0; x < lat.N; ++x) {
                double g0 = 0, g1 = 0;
                gaussian_pair(99, trial, std::uint64_t(x), g0, g1);
                vals[x] = cplx(g0, g1);
            }
            auto n = kernel_norms(make_kernel_from_values(geom, KernelKind::Custom, std::move(vals)), a, b);
            EXPECT_LE(n.weak, cap * n.strong) << "d=" << d << " trial=" << trial;
        }
    }
    EXPECT_THROW(kernel_norms(b_field(BandGeometry(1, 16, 2)), 0.0, 1.0), std::invalid_argument);
}

TEST(Smoothing, ZeroFieldGivesZero) {
    auto prof = gprof(1, 64, 4);
    auto th = theta_kernel(prof, m_sc(cplx(0.0, 0.5)));
    std::vector<double> g(prof.lattice().N, 0.0);
    auto rep = sum_zero_smoothing(th, g, 20);
    EXPECT_EQ(rep.value, 0.0);
}

TEST(Smoothing, SecondDifferenceStaysUnderTheBound) {
    // measured value/bound ratio 0.16 at this geometry
    auto prof = gprof(3, 50, 3);
    double eta = 9.0 / std::pow(50.0, 1.8);
    auto th = theta_kernel(prof, m_sc(cplx(0.0, eta)));
    const TorusLattice& lat = prof.lattice();
    std::vector<double> g(lat.N, 0.0);
    int64_t a = lat.index_of(std::vector<int>{3, 0, 0});
    g[a] += 1.0;
    g[lat.negate(a)] += 1.0;
    g[0] -= 2.0;
    int64_t x0 = lat.index_of(std::vector<int>{24, 0, 0});
    auto rep = sum_zero_smoothing(th, g, x0);
    EXPECT_GT(rep.value, 0.0);
    EXPECT_LE(rep.value, rep.bound);
}

TEST(Smoothing, RejectsMassAndAsymmetry) {
    auto prof = gprof(1, 64, 4);
    auto th = theta_kernel(prof, m_sc(cplx(0.0, 0.5)));
    const TorusLattice& lat = prof.lattice();
    std::vector<double> mass(lat.N, 0.0);
    mass[0] = 1.0;
    EXPECT_THROW(sum_zero_smoothing(th, mass, 20), SumZeroViolation);
    std::vector<double> skew(lat.N, 0.0);
    skew[1] = 1.0;
    skew[0] = -1.0;
    EXPECT_THROW(sum_zero_smoothing(th, skew, 20), SupportViolation);
}

TEST(InfiniteLimit, MatchesLargeTorusAtBandSites) {
    // measured |difference| = 0.15 * eta W^-d at both volumes; C = 1 leaves
    // a 6x margin and the eta scaling is what shrinks under L -> 2L
    ProfileSpec sp = gspec(4);
    double prev_max = 0;
    for (int L : {64, 128}) {
        auto prof = build_profile(sp, TorusLattice(1, L));
        double eta = 16.0 / std::pow(double(L), 1.8);
        auto fin = splus_kernel(prof, m_sc(cplx(0.0, eta)));
        double maxdiff = 0;
        for (int x = 0; x <= 4; ++x) {
            cplx inf = kernel_infinite_limit(sp, KernelKind::Splus, 0.0, {x});
            maxdiff = std::max(maxdiff, std::abs(inf - fin.at0(x)));
        }
        EXPECT_LE(maxdiff, 1.0 * eta * 0.25 + 1e-8);
        if (prev_max > 0) EXPECT_LT(maxdiff, prev_max);
        prev_max = maxdiff;
    }
}

TEST(InfiniteLimit, WalkKernelComparisonShrinksWithVolume) {
    ProfileSpec sp = gspec(3);
    std::vector<double> diffs16, diffs32;
    for (int L : {16, 32}) {
        auto prof = build_profile(sp, TorusLattice(3, L));
        double eta = 9.0 / std::pow(double(L), 1.8);
        auto th = theta_kernel(prof, m_sc(cplx(0.0, eta)));
        for (int x : {2, 3, 4}) {
            std::vector<int> xx{x, 0, 0};
            cplx inf = kernel_infinite_limit(sp, KernelKind::Theta, 0.0, xx);
            double diff = std::abs(inf - th.at0(prof.lattice().index_of(xx)));
            // envelope eta W^-4 <x>, the d=3 instance of the finite-size shape
            EXPECT_LE(diff, 0.5 * eta * std::pow(3.0, -4.0) * (x + 3.0));
            (L == 16 ? diffs16 : diffs32).push_back(diff);
        }
    }
    for (size_t i = 0; i < diffs16.size(); ++i) EXPECT_LT(diffs32[i], diffs16[i]);
}

TEST(InfiniteLimit, LowDimensionWalkRejected) {
    EXPECT_THROW(kernel_infinite_limit(gspec(4), KernelKind::Theta, 0.0, {1, 2}), DimensionTooLow);
    EXPECT_THROW(kernel_infinite_limit(gspec(4), KernelKind::Splus, 2.0, {1}), OutsideBulk);
}

TEST(Kernels, PlancherelAndConvolutionConsistency) {
    auto prof = gprof(2, 12, 3);
    auto pt = m_sc(cplx(0.4, 0.6));
    const TorusLattice& lat = prof.lattice();
    for (const LatticeKernel& k :
         {s_kernel(prof), splus_kernel(prof, pt), theta_kernel(prof, pt), b_field(prof.geom)}) {
        double side = 0, spec = 0;
        for (const auto& v : k.values) side += std::norm(v);
        for (const auto& v : k.symbol) spec += std::norm(v);
        EXPECT_NEAR(side, spec / double(lat.N), 1e-10 * side);
    }
    // squared profile: direct convolution against squared symbol
    auto s = s_kernel(prof);
    cvec direct = convolve(lat, s.values, s.values);
    cvec sym2(lat.N);
    for (int64_t p = 0; p < lat.N; ++p) sym2[p] = s.symbol[p] * s.symbol[p];
    cvec via_symbol = dft_inverse(lat, sym2);
    double worst = 0;
    for (int64_t x = 0; x < lat.N; ++x) worst = std::max(worst, std::abs(direct[x] - via_symbol[x]));
    EXPECT_LE(worst, 1e-10);
}

TEST(Kernels, EvennessIsExact) {
    auto prof = gprof(2, 10, 2);
    auto pt = m_sc(cplx(0.1, 0.8));
    const TorusLattice& lat = prof.lattice();
    for (const LatticeKernel& k : {splus_kernel(prof, pt), sminus_kernel(prof, pt),
                                   theta_kernel(prof, pt), b_field(prof.geom)})
        for (int64_t x = 0; x < lat.N; ++x) EXPECT_EQ(k.values[x], k.values[lat.negate(x)]);
}
