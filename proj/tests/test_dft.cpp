#include <gtest/gtest.h>

#include <random>

#include "bandlab/dft.hpp"

using namespace bandlab;

namespace {

cvec random_field(const TorusLattice& lat, unsigned seed) {
    std::mt19937 gen(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    cvec f(lat.N);
    for (auto& v : f) v = cplx(u(gen), u(gen));
    return f;
}

} // namespace

TEST(Dft, DeltaTransformsToConstantOne) {
    TorusLattice lat(2, 6);
    cvec f(lat.N, cplx(0));
    f[0] = 1.0;
    auto sym = dft_forward(lat, f);
    for (const auto& v : sym) EXPECT_NEAR(std::abs(v - cplx(1.0)), 0.0, 1e-13);
}

TEST(Dft, ForwardInverseRoundTrip) {
    TorusLattice lat(3, 5);
    auto f = random_field(lat, 7);
    auto back = dft_inverse(lat, dft_forward(lat, f));
    for (int64_t i = 0; i < lat.N; ++i) EXPECT_NEAR(std::abs(back[i] - f[i]), 0.0, 1e-12);
}

TEST(Dft, PlancherelNormSquared) {
    TorusLattice lat(2, 8);
    auto f = random_field(lat, 11);
    auto sym = dft_forward(lat, f);
    double side = 0, spec = 0;
    for (const auto& v : f) side += std::norm(v);
    for (const auto& v : sym) spec += std::norm(v);
    EXPECT_NEAR(spec, double(lat.N) * side, 1e-9 * double(lat.N) * side);
}

TEST(Dft, ConvolutionMatchesDirectSum) {
    TorusLattice lat(2, 5);
    auto a = random_field(lat, 3);
    auto b = random_field(lat, 4);
    auto c = convolve(lat, a, b);
    for (int64_t x = 0; x < lat.N; x += 3) {
        cplx direct = 0;
        for (int64_t y = 0; y < lat.N; ++y) direct += a[y] * b[lat.diff(x, y)];
        EXPECT_NEAR(std::abs(c[x] - direct), 0.0, 1e-11);
    }
}

TEST(Dft, LargeLatticeUsesSameConvention) {
    // past the size cutoff the separable path takes over; pin agreement on a shift
    TorusLattice lat(1, 4099);
    cvec f(lat.N, cplx(0));
    f[1] = 1.0;
    auto sym = dft_forward(lat, f);
    auto p = lat.momentum(5);
    cplx expect(std::cos(p[0]), std::sin(p[0])); // exp(+i p . x) with x = 1
    EXPECT_NEAR(std::abs(sym[5] - expect), 0.0, 1e-11);
}

TEST(BoxFilter, MatchesBruteForceWindowSum) {
    TorusLattice lat(2, 9);
    std::vector<double> in(lat.N);
    std::mt19937 gen(19);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& v : in) v = u(gen);
    const int K = 2;
    auto out = box_filter(lat, in, K);
    for (int64_t x = 0; x < lat.N; ++x) {
        auto cx = lat.site(x);
        double acc = 0;
        std::vector<int> c(2);
        for (int u0 = -K; u0 <= K; ++u0)
            for (int u1 = -K; u1 <= K; ++u1) {
                c[0] = cx[0] + u0;
                c[1] = cx[1] + u1;
                acc += in[lat.index_of(c)];
            }
        EXPECT_NEAR(out[x], acc, 1e-12 * (1.0 + acc));
    }
}

TEST(BoxFilter, FullWrapWindowGivesGlobalSum) {
    TorusLattice lat(1, 7);
    std::vector<double> in{1, 2, 3, 4, 5, 6, 7};
    double total = 28;
    auto out = box_filter(lat, in, 10); // radius exceeds the torus, window saturates
    for (auto v : out) EXPECT_NEAR(v, total, 1e-12);
}

TEST(BoxFilter, RejectsBadArguments) {
    TorusLattice lat(1, 7);
    std::vector<double> in(7, 1.0);
    EXPECT_THROW(box_filter(lat, in, -1), std::invalid_argument);
    std::vector<double> wrong(6, 1.0);
    EXPECT_THROW(box_filter(lat, wrong, 1), std::invalid_argument);
}

TEST(MaxFilter, MatchesBruteForceWindowMax) {
    TorusLattice lat(2, 7);
    std::vector<double> in(lat.N);
    std::mt19937 gen(23);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto& v : in) v = u(gen);
    const int K = 1;
    auto out = max_filter(lat, in, K);
    for (int64_t x = 0; x < lat.N; ++x) {
        auto cx = lat.site(x);
        double m = -2;
        std::vector<int> c(2);
        for (int u0 = -K; u0 <= K; ++u0)
            for (int u1 = -K; u1 <= K; ++u1) {
                c[0] = cx[0] + u0;
                c[1] = cx[1] + u1;
                m = std::max(m, in[lat.index_of(c)]);
            }
        EXPECT_DOUBLE_EQ(out[x], m);
    }
}
