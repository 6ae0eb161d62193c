#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace bandlab {

using std::int64_t;

// d-dimensional discrete torus of side L.  Coordinates are represented in the
// centered window (-L/2, L/2]; sites are enumerated row-major with axis 0 the
// fastest-varying digit, so index = sum_k digit_k * L^k with digit_k in [0, L).
struct TorusLattice {
    int d = 1;
    int L = 1;
    int64_t N = 1;

    TorusLattice() = default;

    TorusLattice(int d_, int L_) : d(d_), L(L_) {
        if (d < 1 || d > 12) throw std::invalid_argument("torus: dimension out of range");
        if (L < 1) throw std::invalid_argument("torus: side must be positive");
        N = 1;
        for (int k = 0; k < d; ++k) {
            if (N > (int64_t(1) << 56) / L) throw std::invalid_argument("torus: site count overflow");
            N *= L;
        }
    }

    // reduce an integer to the centered representative in (-L/2, L/2]
    int wrap1(int64_t v) const {
        int64_t r = v % L;
        if (r < 0) r += L;            // now in [0, L)
        if (2 * r > L) r -= L;        // strictly above L/2 moves down
        return int(r);
    }

    // raw digit in [0, L) for the same residue class
    int digit1(int64_t v) const {
        int64_t r = v % L;
        if (r < 0) r += L;
        return int(r);
    }

    void site(int64_t idx, int* coord) const {
        for (int k = 0; k < d; ++k) {
            int c = int(idx % L);
            idx /= L;
            coord[k] = (2 * c > L) ? c - L : c;
        }
    }

    std::vector<int> site(int64_t idx) const {
        std::vector<int> c(d);
        site(idx, c.data());
        return c;
    }

    int64_t index_of(const int* coord) const {
        int64_t idx = 0;
        for (int k = d - 1; k >= 0; --k) idx = idx * L + digit1(coord[k]);
        return idx;
    }

    int64_t index_of(const std::vector<int>& coord) const {
        if (int(coord.size()) != d) throw std::invalid_argument("torus: coordinate arity mismatch");
        return index_of(coord.data());
    }

    // linear index of the componentwise difference x - y
    int64_t diff(int64_t x, int64_t y) const {
        int64_t idx = 0, mul = 1;
        for (int k = 0; k < d; ++k) {
            int cx = int(x % L), cy = int(y % L);
            x /= L; y /= L;
            int c = cx - cy;
            if (c < 0) c += L;
            idx += mul * c;
            mul *= L;
        }
        return idx;
    }

    int64_t negate(int64_t x) const {
        int64_t idx = 0, mul = 1;
        for (int k = 0; k < d; ++k) {
            int c = int(x % L);
            x /= L;
            if (c != 0) c = L - c;
            idx += mul * c;
            mul *= L;
        }
        return idx;
    }

    // periodic l-infinity distance between sites
    int dist(int64_t x, int64_t y) const {
        int m = 0;
        for (int k = 0; k < d; ++k) {
            int c = int(x % L) - int(y % L);
            x /= L; y /= L;
            if (c < 0) c += L;
            if (2 * c > L) c = L - c;
            if (c > m) m = c;
        }
        return m;
    }

    int dist0(int64_t x) const { return dist(x, 0); }

    // momentum 2*pi*n/L componentwise, n the centered representative of the index digits
    void momentum(int64_t idx, double* p) const {
        constexpr double two_pi = 6.283185307179586476925286766559;
        for (int k = 0; k < d; ++k) {
            int c = int(idx % L);
            idx /= L;
            if (2 * c > L) c -= L;
            p[k] = two_pi * double(c) / double(L);
        }
    }

    std::vector<double> momentum(int64_t idx) const {
        std::vector<double> p(d);
        momentum(idx, p.data());
        return p;
    }

    double momentum_norm2(int64_t idx) const {
        double s = 0;
        std::array<double, 12> p{};
        momentum(idx, p.data());
        for (int k = 0; k < d; ++k) s += p[k] * p[k];
        return s;
    }

    bool operator==(const TorusLattice& o) const { return d == o.d && L == o.L; }
    bool operator!=(const TorusLattice& o) const { return !(*this == o); }
};

// all L^d momentum vectors, component 2*pi*n/L with n in (-L/2, L/2]
inline std::vector<std::vector<double>> momenta(const TorusLattice& lat) {
    std::vector<std::vector<double>> out;
    out.reserve(size_t(lat.N));
    for (int64_t p = 0; p < lat.N; ++p) out.push_back(lat.momentum(p));
    return out;
}

// band geometry: torus plus band width W; distances enter kernel bounds
// through the shifted bracket <x-y> = dist(x,y) + W.
struct BandGeometry {
    TorusLattice lattice;
    int W = 1;

    BandGeometry() = default;

    BandGeometry(const TorusLattice& lat, int W_) : lattice(lat), W(W_) {
        if (W < 1 || W > lat.L) throw std::invalid_argument("band: width must satisfy 1 <= W <= L");
    }

    BandGeometry(int d, int L, int W_) : BandGeometry(TorusLattice(d, L), W_) {}

    double bracket(int64_t x, int64_t y) const { return double(lattice.dist(x, y) + W); }
    double bracket0(int64_t x) const { return double(lattice.dist0(x) + W); }

    bool operator==(const BandGeometry& o) const { return lattice == o.lattice && W == o.W; }
};

} // namespace bandlab
