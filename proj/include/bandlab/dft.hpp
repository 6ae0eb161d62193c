#pragma once

#include <complex>
#include <stdexcept>
#include <vector>

#include "bandlab/torus.hpp"

namespace bandlab {

using cplx = std::complex<double>;
using cvec = std::vector<cplx>;

namespace detail {

// L-th roots of unity, root[k] = exp(sign * 2*pi*i * k / L)
inline cvec root_table(int L, int sign) {
    constexpr double two_pi = 6.283185307179586476925286766559;
    cvec w(L);
    for (int k = 0; k < L; ++k) {
        double t = sign * two_pi * double(k) / double(L);
        w[k] = cplx(std::cos(t), std::sin(t));
    }
    return w;
}

// full O(N^2) transform, kept as the reference path for small lattices
inline cvec dft_direct(const TorusLattice& lat, const cvec& in, int sign) {
    const int L = lat.d > 0 ? lat.L : 1;
    cvec w = root_table(L, sign);
    cvec out(lat.N);
    std::vector<int> nx(lat.d), np(lat.d);
    for (int64_t ip = 0; ip < lat.N; ++ip) {
        // digits of the momentum index
        int64_t t = ip;
        for (int k = 0; k < lat.d; ++k) { np[k] = int(t % L); t /= L; }
        cplx acc = 0;
        for (int64_t ix = 0; ix < lat.N; ++ix) {
            t = ix;
            int64_t phase = 0;
            for (int k = 0; k < lat.d; ++k) { phase += int64_t(np[k]) * (t % L); t /= L; }
            acc += in[ix] * w[phase % L];
        }
        out[ip] = acc;
    }
    return out;
}

// separable transform, one dense pass per axis
inline cvec dft_axis_passes(const TorusLattice& lat, const cvec& in, int sign) {
    const int L = lat.L;
    cvec w = root_table(L, sign);
    cvec cur = in, next(lat.N);
    std::vector<cplx> line(L), lout(L);
    int64_t stride = 1;
    for (int k = 0; k < lat.d; ++k) {
        const int64_t block = stride * L;
        for (int64_t base = 0; base < lat.N; base += block) {
            for (int64_t off = 0; off < stride; ++off) {
                for (int j = 0; j < L; ++j) line[j] = cur[base + off + stride * j];
                for (int n = 0; n < L; ++n) {
                    cplx acc = 0;
                    int64_t ph = 0;
                    for (int j = 0; j < L; ++j) {
                        acc += line[j] * w[ph];
                        ph += n;
                        if (ph >= L) ph -= L;
                    }
                    lout[n] = acc;
                }
                for (int n = 0; n < L; ++n) next[base + off + stride * n] = lout[n];
            }
        }
        std::swap(cur, next);
        stride = block;
    }
    return cur;
}

inline cvec dft_apply(const TorusLattice& lat, const cvec& in, int sign) {
    if (int64_t(in.size()) != lat.N) throw std::invalid_argument("dft: field size mismatch");
    if (lat.N < 4096) return dft_direct(lat, in, sign);
    return dft_axis_passes(lat, in, sign);
}

} // namespace detail

// forward transform: symbol(p) = sum_x f(x) exp(+i p.x)
inline cvec dft_forward(const TorusLattice& lat, const cvec& values) {
    return detail::dft_apply(lat, values, +1);
}

// inverse transform: f(x) = N^{-1} sum_p symbol(p) exp(-i p.x)
inline cvec dft_inverse(const TorusLattice& lat, const cvec& symbol) {
    cvec out = detail::dft_apply(lat, symbol, -1);
    const double inv = 1.0 / double(lat.N);
    for (auto& v : out) v *= inv;
    return out;
}

// circular convolution (a * b)(x) = sum_y a(y) b(x - y), via symbol product
inline cvec convolve(const TorusLattice& lat, const cvec& a, const cvec& b) {
    cvec fa = dft_forward(lat, a), fb = dft_forward(lat, b);
    for (int64_t i = 0; i < lat.N; ++i) fa[i] *= fb[i];
    return dft_inverse(lat, fa);
}

// circular box filter: out(x) = sum over the l-infinity ball {|u| <= K} of in(x+u).
// separable running sums per axis, exact arithmetic apart from rounding.
template <typename T>
std::vector<T> box_filter(const TorusLattice& lat, const std::vector<T>& in, int K) {
    if (int64_t(in.size()) != lat.N) throw std::invalid_argument("box_filter: field size mismatch");
    if (K < 0) throw std::invalid_argument("box_filter: negative radius");
    const int L = lat.L;
    std::vector<T> cur = in, next(lat.N);
    std::vector<T> line(L);
    int64_t stride = 1;
    for (int k = 0; k < lat.d; ++k) {
        const int64_t block = stride * L;
        const int width = std::min(2 * K + 1, L);
        for (int64_t base = 0; base < lat.N; base += block) {
            for (int64_t off = 0; off < stride; ++off) {
                for (int j = 0; j < L; ++j) line[j] = cur[base + off + stride * j];
                T run{};
                for (int j = -K; j <= K && j - (-K) < width; ++j) {
                    int jj = ((j % L) + L) % L;
                    run += line[jj];
                }
                for (int c = 0; c < L; ++c) {
                    next[base + off + stride * c] = run;
                    if (width < L) {
                        int add = (c + 1 + K) % L;
                        int drop = ((c - K) % L + L) % L;
                        run += line[add];
                        run -= line[drop];
                    }
                }
            }
        }
        std::swap(cur, next);
        stride = block;
    }
    return cur;
}

// circular max filter over the same window, used for variance-profile dilation
inline std::vector<double> max_filter(const TorusLattice& lat, const std::vector<double>& in, int K) {
    if (int64_t(in.size()) != lat.N) throw std::invalid_argument("max_filter: field size mismatch");
    const int L = lat.L;
    std::vector<double> cur = in, next(lat.N);
    std::vector<double> line(L);
    int64_t stride = 1;
    const int width = std::min(2 * K + 1, L);
    for (int k = 0; k < lat.d; ++k) {
        const int64_t block = stride * L;
        for (int64_t base = 0; base < lat.N; base += block) {
            for (int64_t off = 0; off < stride; ++off) {
                for (int j = 0; j < L; ++j) line[j] = cur[base + off + stride * j];
                for (int c = 0; c < L; ++c) {
                    double m = line[c];
                    for (int j = 1; j <= width / 2; ++j) {
                        m = std::max(m, line[(c + j) % L]);
                        m = std::max(m, line[(c - j + L) % L]);
                    }
                    next[base + off + stride * c] = m;
                }
            }
        }
        std::swap(cur, next);
        stride = block;
    }
    return cur;
}

} // namespace bandlab
