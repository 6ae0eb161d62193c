#pragma once

#include <Eigen/Dense>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "bandlab/graph.hpp"
#include "bandlab/kernels.hpp"

namespace bandlab {

struct InsufficientMomenta : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class CatalogTag { A2, A3, E6 };

inline CatalogTag catalog_tag_from_string(const std::string& s) {
    if (s == "A2") return CatalogTag::A2;
    if (s == "A3") return CatalogTag::A3;
    if (s == "E6") return CatalogTag::E6;
    throw std::invalid_argument("catalog: unknown tag " + s);
}

namespace detail {

// shared atom ids: externals a=0 (source), b1=1 (plus target), b2=2 (minus
// target); internals x=10, y=11, alpha=12, beta=13
constexpr int A = 0, B1 = 1, B2 = 2, X = 10, Y = 11, AL = 12, BE = 13;

inline AtomicGraph base3(const std::string& name, std::vector<int> internals) {
    AtomicGraph g;
    g.name = name;
    g.atoms = {{A, true}, {B1, true}, {B2, true}};
    for (int id : internals) g.atoms.push_back({id, false});
    return g;
}

inline Coefficient coeff_m() {
    Coefficient c;
    c.pow_m = 1;
    return c;
}

inline Coefficient coeff_abs_m2() {
    Coefficient c;
    c.pow_m = 1;
    c.pow_mbar = 1;
    return c;
}

inline Coefficient coeff_mono(int pm, int pmb, bool placeholder) {
    Coefficient c;
    c.pow_m = pm;
    c.pow_mbar = pmb;
    c.placeholder = placeholder;
    return c;
}

} // namespace detail

// the two second-order remainder graphs: a diffusive propagator into a
// variance step with one light diagonal insertion on either end
inline std::vector<AtomicGraph> catalog_a2() {
    using namespace detail;
    std::vector<AtomicGraph> out;
    {
        AtomicGraph g = base3("A2-near", {X, Y});
        g.coeff = coeff_m();
        g.edges = {{A, X, EdgeKind::Theta}, {X, Y, EdgeKind::S},
                   {X, B1, EdgeKind::Gplus}, {X, B2, EdgeKind::Gminus}};
        g.weights = {{Y, +1, true}};
        out.push_back(g);
    }
    {
        AtomicGraph g = base3("A2-far", {X, Y});
        g.coeff = coeff_m();
        g.edges = {{A, X, EdgeKind::Theta}, {X, Y, EdgeKind::S},
                   {Y, B1, EdgeKind::Gplus}, {Y, B2, EdgeKind::Gminus}};
        g.weights = {{X, -1, true}};
        out.push_back(g);
    }
    return out;
}

// the nine third-order remainder graphs, letters a..i in display order
inline std::vector<AtomicGraph> catalog_a3() {
    using namespace detail;
    std::vector<AtomicGraph> out;
    {
        AtomicGraph g = base3("A3-a", {X, AL, BE});
        g.edges = {{A, X, EdgeKind::Theta}, {X, AL, EdgeKind::Splus}, {AL, BE, EdgeKind::S},
                   {X, B1, EdgeKind::Gplus}, {X, B2, EdgeKind::Gminus}};
        g.weights = {{AL, +1, true}, {BE, +1, true}};
        out.push_back(g);
    }
    {
        AtomicGraph g = base3("A3-b", {X, Y, BE});
        g.coeff = coeff_abs_m2();
        g.edges = {{A, X, EdgeKind::Theta}, {X, Y, EdgeKind::S}, {X, BE, EdgeKind::S},
                   {Y, B1, EdgeKind::Gplus}, {Y, B2, EdgeKind::Gminus}};
        g.weights = {{X, -1, true}, {BE, -1, true}};
        out.push_back(g);
    }
    {
        AtomicGraph g = base3("A3-c", {X, Y, AL, BE});
        g.coeff = coeff_abs_m2();
        g.edges = {{A, X, EdgeKind::Theta}, {X, Y, EdgeKind::S}, {X, AL, EdgeKind::Sminus},
                   {AL, BE, EdgeKind::S}, {Y, B1, EdgeKind::Gplus}, {Y, B2, EdgeKind::Gminus}};
        g.weights = {{AL, -1, true}, {BE, -1, true}};
        out.push_back(g);
    }
    {
        AtomicGraph g = base3("A3-d", {X, AL, BE});
        g.edges = {{A, X, EdgeKind::Theta}, {X, AL, EdgeKind::Splus}, {AL, BE, EdgeKind::S},
                   {BE, AL, EdgeKind::Gplus}, {X, BE, EdgeKind::Gplus},
                   {AL, B1, EdgeKind::Gplus}, {X, B2, EdgeKind::Gminus}};
        out.push_back(g);
    }
    {
        AtomicGraph g = base3("A3-e", {X, AL, BE});
        g.edges = {{A, X, EdgeKind::Theta}, {X, AL, EdgeKind::Splus}, {AL, BE, EdgeKind::S},
                   {BE, AL, EdgeKind::Gplus}, {X, B1, EdgeKind::Gplus},
                   {X, AL, EdgeKind::Gminus}, {BE, B2, EdgeKind::Gminus}};
        out.push_back(g);
    }
    {
        AtomicGraph g = base3("A3-f", {X, Y, BE});
        g.coeff = coeff_abs_m2();
        g.edges = {{A, X, EdgeKind::Theta}, {X, Y, EdgeKind::S}, {X, BE, EdgeKind::S},
                   {BE, X, EdgeKind::Gminus}, {Y, X, EdgeKind::Gplus},
                   {BE, B1, EdgeKind::Gplus}, {Y, B2, EdgeKind::Gminus}};
        out.push_back(g);
    }
    {
        AtomicGraph g = base3("A3-g", {X, Y, BE});
        g.coeff = coeff_abs_m2();
        g.edges = {{A, X, EdgeKind::Theta}, {X, Y, EdgeKind::S}, {X, BE, EdgeKind::S},
                   {BE, X, EdgeKind::Gminus}, {Y, B1, EdgeKind::Gplus},
                   {Y, BE, EdgeKind::Gminus}, {X, B2, EdgeKind::Gminus}};
        out.push_back(g);
    }
    {
        AtomicGraph g = base3("A3-h", {X, Y, AL, BE});
        g.coeff = coeff_abs_m2();
        g.edges = {{A, X, EdgeKind::Theta}, {X, Y, EdgeKind::S}, {X, AL, EdgeKind::Sminus},
                   {AL, BE, EdgeKind::S}, {BE, AL, EdgeKind::Gminus}, {Y, AL, EdgeKind::Gplus},
                   {BE, B1, EdgeKind::Gplus}, {Y, B2, EdgeKind::Gminus}};
        out.push_back(g);
    }
    {
        AtomicGraph g = base3("A3-i", {X, Y, AL, BE});
        g.coeff = coeff_abs_m2();
        g.edges = {{A, X, EdgeKind::Theta}, {X, Y, EdgeKind::S}, {X, AL, EdgeKind::Sminus},
                   {AL, BE, EdgeKind::S}, {BE, AL, EdgeKind::Gminus}, {Y, B1, EdgeKind::Gplus},
                   {Y, BE, EdgeKind::Gminus}, {AL, B2, EdgeKind::Gminus}};
        out.push_back(g);
    }
    return out;
}

// sixth-order self-energy example graphs as two-point kernels in the
// externals x=0, y=1.  The displayed equations omit numeric prefactors, so
// each coefficient keeps its m-monomial with a unit placeholder scalar.
inline std::vector<AtomicGraph> catalog_e6() {
    constexpr int EX = 0, EY = 1, G1 = 10, G2 = 11;
    std::vector<AtomicGraph> out;
    {
        AtomicGraph g;
        g.name = "E6-d-prime";
        g.atoms = {{EX, true}, {EY, true}};
        g.coeff = detail::coeff_mono(2, 0, true);
        g.edges = {{EX, EY, EdgeKind::Dotted}, {EX, EX, EdgeKind::S}, {EX, EX, EdgeKind::Splus}};
        out.push_back(g);
    }
    {
        AtomicGraph g;
        g.name = "E6-h-prime";
        g.atoms = {{EX, true}, {EY, true}};
        g.coeff = detail::coeff_mono(2, 2, true);
        g.edges = {{EY, EY, EdgeKind::S}, {EX, EY, EdgeKind::S}, {EX, EY, EdgeKind::Sminus}};
        out.push_back(g);
    }
    {
        AtomicGraph g;
        g.name = "E6-i4-prime";
        g.atoms = {{EX, true}, {EY, true}, {G1, false}};
        g.coeff = detail::coeff_mono(1, 1, true);
        g.edges = {{EX, EY, EdgeKind::Sminus}, {EY, G1, EdgeKind::S},
                   {EY, G1, EdgeKind::Sminus}, {EX, G1, EdgeKind::Theta}};
        out.push_back(g);
    }
    {
        AtomicGraph g;
        g.name = "E6-i5-prime";
        g.atoms = {{EX, true}, {EY, true}, {G1, false}, {G2, false}};
        g.coeff = detail::coeff_mono(1, 3, true);
        g.edges = {{EX, EY, EdgeKind::S}, {EX, G1, EdgeKind::Sminus}, {EY, G1, EdgeKind::Sminus},
                   {G1, G2, EdgeKind::Sminus}, {EY, G2, EdgeKind::S}};
        out.push_back(g);
    }
    {
        AtomicGraph g;
        g.name = "E6-f4-prime";
        g.atoms = {{EX, true}, {EY, true}};
        g.coeff = detail::coeff_mono(3, 1, true);
        g.edges = {{EX, EX, EdgeKind::Theta}, {EX, EY, EdgeKind::S}, {EX, EY, EdgeKind::S}};
        out.push_back(g);
    }
    {
        AtomicGraph g;
        g.name = "E6-f1.1-prime";
        g.atoms = {{EX, true}, {EY, true}};
        g.coeff = detail::coeff_mono(2, 2, true);
        g.edges = {{EX, EY, EdgeKind::S}, {EX, EY, EdgeKind::S}, {EX, EY, EdgeKind::Theta}};
        out.push_back(g);
    }
    return out;
}

inline std::vector<AtomicGraph> catalog(CatalogTag tag) {
    switch (tag) {
        case CatalogTag::A2: return catalog_a2();
        case CatalogTag::A3: return catalog_a3();
        case CatalogTag::E6: return catalog_e6();
    }
    throw std::invalid_argument("catalog: unknown tag");
}

// deterministic kernel bundle for graph evaluation contexts
struct KernelSet {
    LatticeKernel s, splus, sminus, theta;
    SpectralPoint point;

    EvalContext context(int budget = 3) const {
        EvalContext ctx;
        ctx.s = &s;
        ctx.splus = &splus;
        ctx.sminus = &sminus;
        ctx.theta = &theta;
        ctx.point = point;
        ctx.budget = budget;
        return ctx;
    }
};

inline KernelSet make_kernel_set(const VarianceProfile& prof, const SpectralPoint& pt) {
    KernelSet ks;
    ks.s = s_kernel(prof);
    ks.splus = splus_kernel(prof, pt);
    ks.sminus = sminus_kernel(prof, pt);
    ks.theta = theta_kernel(prof, pt);
    ks.point = pt;
    return ks;
}

// sweep the second external over every site to turn a deterministic
// two-point graph into a displacement kernel
inline SelfEnergyKernel self_energy_from_graph(const AtomicGraph& g, const KernelSet& ks,
                                               int order = 6, int budget = 3) {
    const TorusLattice& lat = ks.s.lattice();
    EvalContext ctx = ks.context(budget);
    cvec values(lat.N);
    for (int64_t v = 0; v < lat.N; ++v) {
        ctx.external_sites = {{0, 0}, {1, v}};
        values[v] = evaluate(g, ctx);
    }
    detail::symmetrize_even(lat, values);
    SelfEnergyKernel e;
    e.kernel = make_kernel_from_values(ks.s.geom, KernelKind::SelfEnergy, std::move(values));
    e.kernel.point = ks.point;
    e.order = order;
    e.provenance = g.name + (g.coeff.placeholder ? " (placeholder coefficient)" : "");
    return e;
}

// ring construction: subtract (total mass) * S so the row sum vanishes
inline SelfEnergyKernel renormalize_self_energy(const SelfEnergyKernel& e, const VarianceProfile& prof) {
    if (!(e.kernel.geom == prof.geom))
        throw std::invalid_argument("renormalize_self_energy: geometry mismatch");
    const TorusLattice& lat = prof.geom.lattice;
    cplx total = std::accumulate(e.kernel.values.begin(), e.kernel.values.end(), cplx(0));
    cvec values(lat.N);
    for (int64_t v = 0; v < lat.N; ++v) values[v] = e.kernel.values[v] - total * prof.f[v];
    SelfEnergyKernel out;
    out.kernel = make_kernel_from_values(e.kernel.geom, KernelKind::SelfEnergy, std::move(values));
    out.kernel.point = e.kernel.point;
    out.order = e.order;
    out.provenance = e.provenance + " (renormalized)";
    return out;
}

struct SymbolFit {
    cvec symbol;
    cplx intercept{0, 0};
    Eigen::MatrixXcd quad;   // symmetric quadratic coefficient matrix
    int n_momenta = 0;
};

// small-momentum quadratic model of the self-energy symbol:
// symbol(p) ~ intercept + p.Q p, least squares over |p|_inf <= pi/(4W)
inline SymbolFit self_energy_symbol(const SelfEnergyKernel& e) {
    const TorusLattice& lat = e.kernel.lattice();
    const int d = lat.d;
    SymbolFit fit;
    fit.symbol = e.kernel.symbol;

    const double cutoff = 3.14159265358979323846 / (4.0 * double(e.kernel.geom.W));
    std::vector<int64_t> window;
    std::vector<double> p(d);
    for (int64_t ip = 0; ip < lat.N; ++ip) {
        lat.momentum(ip, p.data());
        double mx = 0;
        for (double c : p) mx = std::max(mx, std::abs(c));
        if (mx <= cutoff) window.push_back(ip);
    }
    const int dof = 1 + d * (d + 1) / 2;
    fit.n_momenta = int(window.size());
    if (fit.n_momenta < dof)
        throw InsufficientMomenta("self_energy_symbol: fit window holds fewer momenta than parameters");

    Eigen::MatrixXcd design(window.size(), dof);
    Eigen::VectorXcd rhs(window.size());
    for (size_t row = 0; row < window.size(); ++row) {
        lat.momentum(window[row], p.data());
        int col = 0;
        design(row, col++) = 1.0;
        for (int i = 0; i < d; ++i)
            for (int j = i; j < d; ++j)
                design(row, col++) = (i == j) ? p[i] * p[i] : 2.0 * p[i] * p[j];
        rhs(row) = fit.symbol[window[row]];
    }
    Eigen::VectorXcd sol = design.colPivHouseholderQr().solve(rhs);
    fit.intercept = sol(0);
    fit.quad = Eigen::MatrixXcd::Zero(d, d);
    int col = 1;
    for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) {
            fit.quad(i, j) = sol(col);
            fit.quad(j, i) = sol(col);
            ++col;
        }
    return fit;
}

} // namespace bandlab
