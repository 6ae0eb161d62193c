#pragma once

#include <algorithm>
#include <complex>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bandlab/ensemble.hpp"
#include "bandlab/kernels.hpp"
#include "bandlab/spectral.hpp"

namespace bandlab {

struct BudgetExceeded : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MissingKernel : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct UnsupportedLabel : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class EdgeKind { Gplus, Gminus, S, Splus, Sminus, Theta, LabelledTheta, Dotted, CrossDotted };

inline const char* edge_kind_name(EdgeKind k) {
    switch (k) {
        case EdgeKind::Gplus: return "Gplus";
        case EdgeKind::Gminus: return "Gminus";
        case EdgeKind::S: return "S";
        case EdgeKind::Splus: return "Splus";
        case EdgeKind::Sminus: return "Sminus";
        case EdgeKind::Theta: return "Theta";
        case EdgeKind::LabelledTheta: return "LabelledTheta";
        case EdgeKind::Dotted: return "Dotted";
        case EdgeKind::CrossDotted: return "CrossDotted";
    }
    return "?";
}

inline bool is_waved(EdgeKind k) {
    return k == EdgeKind::S || k == EdgeKind::Splus || k == EdgeKind::Sminus;
}
inline bool is_diffusive(EdgeKind k) {
    return k == EdgeKind::Theta || k == EdgeKind::LabelledTheta;
}
inline bool is_resolvent(EdgeKind k) {
    return k == EdgeKind::Gplus || k == EdgeKind::Gminus;
}

struct Atom {
    int id = 0;
    bool external = false;
};

// orientation a -> b matters only for resolvent edges: Gplus contributes
// G_{ab}, Gminus contributes conj(G_{ab})
struct GraphEdge {
    int a = 0, b = 0;
    EdgeKind kind = EdgeKind::S;
    int label_order = 0;   // for LabelledTheta lookups
};

// vertex factor G_{xx} (charge +1) or conj(G_{xx}) (charge -1); the light
// variant subtracts the deterministic value m (resp. conj m)
struct GraphWeight {
    int atom = 0;
    int charge = +1;
    bool light = false;
};

// scalar prefactor: complex scale times a monomial in m, conj(m) and the
// three resummation reciprocals; m exponents may be negative
struct Coefficient {
    cplx scalar{1.0, 0.0};
    int pow_m = 0;
    int pow_mbar = 0;
    int inv_one_minus_m2 = 0;
    int inv_one_minus_mbar2 = 0;
    int inv_one_minus_abs2 = 0;
    bool placeholder = false;

    cplx eval(const SpectralPoint& pt) const {
        auto ipow = [](cplx base, int e) {
            cplx acc = 1.0;
            cplx b = (e < 0) ? 1.0 / base : base;
            for (int i = std::abs(e); i > 0; --i) acc *= b;
            return acc;
        };
        cplx m = pt.m, mb = std::conj(pt.m);
        cplx out = scalar;
        out *= ipow(m, pow_m);
        out *= ipow(mb, pow_mbar);
        out *= ipow(1.0 - m * m, -inv_one_minus_m2);
        out *= ipow(1.0 - mb * mb, -inv_one_minus_mbar2);
        out *= ipow(1.0 - m * mb, -inv_one_minus_abs2);
        return out;
    }
};

struct AtomicGraph {
    std::string name;
    std::vector<Atom> atoms;
    std::vector<GraphEdge> edges;
    std::vector<GraphWeight> weights;
    Coefficient coeff;

    const Atom* find_atom(int id) const {
        for (const auto& a : atoms)
            if (a.id == id) return &a;
        return nullptr;
    }
};

inline void validate_graph(const AtomicGraph& g) {
    std::map<int, int> seen;
    for (const auto& a : g.atoms) {
        if (seen.count(a.id)) throw std::invalid_argument("graph: duplicate atom id");
        seen[a.id] = 1;
    }
    std::map<std::pair<int, int>, int> dotted_pairs;
    for (const auto& e : g.edges) {
        if (!seen.count(e.a) || !seen.count(e.b)) throw std::invalid_argument("graph: edge references unknown atom");
        if (e.kind == EdgeKind::Dotted || e.kind == EdgeKind::CrossDotted) {
            auto key = std::minmax(e.a, e.b);
            if (dotted_pairs[{key.first, key.second}]++)
                throw std::invalid_argument("graph: more than one dotted-family edge on an atom pair");
        }
    }
    for (const auto& w : g.weights) {
        if (!seen.count(w.atom)) throw std::invalid_argument("graph: weight references unknown atom");
        if (w.charge != 1 && w.charge != -1) throw std::invalid_argument("graph: weight charge must be +-1");
    }
}

struct EvalContext {
    const LatticeKernel* s = nullptr;
    const LatticeKernel* splus = nullptr;
    const LatticeKernel* sminus = nullptr;
    const LatticeKernel* theta = nullptr;
    std::map<int, const LatticeKernel*> labelled;   // keyed by label order
    const ResolventFrame* frame = nullptr;
    SpectralPoint point;
    std::map<int, int64_t> external_sites;
    int budget = 3;

    const TorusLattice* lattice() const {
        if (s) return &s->lattice();
        if (theta) return &theta->lattice();
        if (splus) return &splus->lattice();
        if (sminus) return &sminus->lattice();
        if (frame) return &frame->lattice();
        return nullptr;
    }
};

namespace detail {

inline const LatticeKernel* kernel_for(const EvalContext& ctx, const GraphEdge& e) {
    switch (e.kind) {
        case EdgeKind::S: return ctx.s;
        case EdgeKind::Splus: return ctx.splus;
        case EdgeKind::Sminus: return ctx.sminus;
        case EdgeKind::Theta: return ctx.theta;
        case EdgeKind::LabelledTheta: {
            auto it = ctx.labelled.find(e.label_order);
            return it == ctx.labelled.end() ? nullptr : it->second;
        }
        default: return nullptr;
    }
}

inline cplx edge_value(const EvalContext& ctx, const GraphEdge& e, int64_t xa, int64_t xb) {
    switch (e.kind) {
        case EdgeKind::Gplus: return ctx.frame->G(xa, xb);
        case EdgeKind::Gminus: return std::conj(ctx.frame->G(xa, xb));
        case EdgeKind::Dotted: return xa == xb ? 1.0 : 0.0;
        case EdgeKind::CrossDotted: return xa == xb ? 0.0 : 1.0;
        default: {
            const LatticeKernel* k = kernel_for(ctx, e);
            return k->at(xa, xb);
        }
    }
}

inline cplx weight_value(const EvalContext& ctx, const GraphWeight& w, int64_t x) {
    cplx g = ctx.frame->G(x, x);
    if (w.charge < 0) g = std::conj(g);
    if (w.light) g -= (w.charge < 0) ? std::conj(ctx.point.m) : ctx.point.m;
    return g;
}

// dense factor over a sorted subset of internal variables; vars.size() is the
// arity, table in odometer order with vars[0] fastest
struct Factor {
    std::vector<int> vars;
    cvec table;
};

inline int64_t ipow64(int64_t b, int e) {
    int64_t r = 1;
    while (e-- > 0) r *= b;
    return r;
}

} // namespace detail

// value of a graph: coefficient times the sum over internal site assignments
// of the product of edge and weight factors.  Internally this contracts one
// variable at a time, which reproduces the defining nested sum exactly while
// keeping chain-shaped graphs polynomial instead of N^internal.
inline cplx evaluate(const AtomicGraph& g, const EvalContext& ctx) {
    validate_graph(g);
    const TorusLattice* latp = ctx.lattice();
    if (!latp) throw MissingKernel("evaluate: context carries no lattice");
    const TorusLattice& lat = *latp;
    const int64_t N = lat.N;

    // split atoms into fixed externals and internal variables
    std::map<int, int64_t> fixed;
    std::map<int, int> var_of;
    int n_internal = 0;
    for (const auto& a : g.atoms) {
        if (a.external) {
            auto it = ctx.external_sites.find(a.id);
            if (it == ctx.external_sites.end())
                throw std::invalid_argument("evaluate: external atom lacks a site assignment");
            if (it->second < 0 || it->second >= N) throw std::invalid_argument("evaluate: site out of range");
            fixed[a.id] = it->second;
        } else {
            var_of[a.id] = n_internal++;
        }
    }
    if (n_internal > ctx.budget)
        throw BudgetExceeded("evaluate: internal atom count exceeds the evaluation budget");

    for (const auto& e : g.edges) {
        if (is_resolvent(e.kind) && !ctx.frame)
            throw MissingKernel("evaluate: resolvent edge without a frame");
        if (is_waved(e.kind) || is_diffusive(e.kind)) {
            if (!detail::kernel_for(ctx, e))
                throw MissingKernel(std::string("evaluate: no kernel bound for ") + edge_kind_name(e.kind));
        }
    }
    if (!g.weights.empty() && !ctx.frame) throw MissingKernel("evaluate: weight without a frame");

    cplx scalar = g.coeff.eval(ctx.point);
    std::vector<detail::Factor> factors;

    auto push_unary = [&](int var, auto&& fn) {
        detail::Factor f;
        f.vars = {var};
        f.table.resize(N);
        for (int64_t v = 0; v < N; ++v) f.table[v] = fn(v);
        factors.push_back(std::move(f));
    };
    auto push_binary = [&](int va, int vb, auto&& fn) {
        // vars sorted ascending; table indexed value(vars[0]) + N*value(vars[1])
        detail::Factor f;
        if (va < vb) {
            f.vars = {va, vb};
            f.table.resize(N * N);
            for (int64_t j = 0; j < N; ++j)
                for (int64_t i = 0; i < N; ++i) f.table[j * N + i] = fn(i, j);
        } else {
            f.vars = {vb, va};
            f.table.resize(N * N);
            for (int64_t j = 0; j < N; ++j)
                for (int64_t i = 0; i < N; ++i) f.table[j * N + i] = fn(j, i);
        }
        factors.push_back(std::move(f));
    };

    for (const auto& e : g.edges) {
        bool a_fixed = fixed.count(e.a), b_fixed = fixed.count(e.b);
        if (a_fixed && b_fixed) {
            scalar *= detail::edge_value(ctx, e, fixed[e.a], fixed[e.b]);
        } else if (a_fixed) {
            int64_t xa = fixed[e.a];
            push_unary(var_of[e.b], [&](int64_t v) { return detail::edge_value(ctx, e, xa, v); });
        } else if (b_fixed) {
            int64_t xb = fixed[e.b];
            push_unary(var_of[e.a], [&](int64_t v) { return detail::edge_value(ctx, e, v, xb); });
        } else if (e.a == e.b) {
            push_unary(var_of[e.a], [&](int64_t v) { return detail::edge_value(ctx, e, v, v); });
        } else {
            push_binary(var_of[e.a], var_of[e.b],
                        [&](int64_t va, int64_t vb) { return detail::edge_value(ctx, e, va, vb); });
        }
    }
    for (const auto& w : g.weights) {
        if (fixed.count(w.atom)) {
            scalar *= detail::weight_value(ctx, w, fixed[w.atom]);
        } else {
            push_unary(var_of[w.atom], [&](int64_t v) { return detail::weight_value(ctx, w, v); });
        }
    }

    // contract internal variables, smallest neighborhood first
    std::vector<int> alive(n_internal);
    std::iota(alive.begin(), alive.end(), 0);
    while (!alive.empty()) {
        int best = -1;
        size_t best_nb = SIZE_MAX;
        for (int v : alive) {
            std::vector<int> nb;
            for (const auto& f : factors)
                if (std::count(f.vars.begin(), f.vars.end(), v))
                    for (int u : f.vars)
                        if (u != v && !std::count(nb.begin(), nb.end(), u)) nb.push_back(u);
            if (nb.size() < best_nb) {
                best_nb = nb.size();
                best = v;
            }
        }

        std::vector<detail::Factor> members, rest;
        std::vector<int> nb;
        for (auto& f : factors) {
            if (std::count(f.vars.begin(), f.vars.end(), best)) {
                for (int u : f.vars)
                    if (u != best && !std::count(nb.begin(), nb.end(), u)) nb.push_back(u);
                members.push_back(std::move(f));
            } else {
                rest.push_back(std::move(f));
            }
        }
        std::sort(nb.begin(), nb.end());
        if (nb.size() > 3 || detail::ipow64(N, int(nb.size())) > (int64_t(1) << 27))
            throw BudgetExceeded("evaluate: intermediate contraction table too large");

        // per member factor, strides of (neighbor digits..., eliminated var)
        struct Access {
            const detail::Factor* f;
            std::vector<int64_t> nb_stride;   // aligned with nb
            int64_t v_stride = 0;
        };
        std::vector<Access> acc;
        for (const auto& f : members) {
            Access a;
            a.f = &f;
            a.nb_stride.assign(nb.size(), 0);
            int64_t stride = 1;
            for (int u : f.vars) {
                if (u == best) {
                    a.v_stride = stride;
                } else {
                    auto pos = std::find(nb.begin(), nb.end(), u) - nb.begin();
                    a.nb_stride[pos] = stride;
                }
                stride *= N;
            }
            acc.push_back(std::move(a));
        }

        detail::Factor out;
        out.vars = nb;
        out.table.assign(size_t(detail::ipow64(N, int(nb.size()))), cplx(0));
        std::vector<int64_t> digit(nb.size(), 0);
        int64_t flat = 0;
        while (true) {
            std::vector<int64_t> base(acc.size(), 0);
            for (size_t fi = 0; fi < acc.size(); ++fi)
                for (size_t k = 0; k < nb.size(); ++k) base[fi] += acc[fi].nb_stride[k] * digit[k];
            cplx sum = 0;
            for (int64_t v = 0; v < N; ++v) {
                cplx prod = 1.0;
                for (size_t fi = 0; fi < acc.size(); ++fi)
                    prod *= acc[fi].f->table[base[fi] + acc[fi].v_stride * v];
                sum += prod;
            }
            out.table[flat] = sum;
            size_t k = 0;
            ++flat;
            while (k < nb.size() && ++digit[k] == N) digit[k++] = 0;
            if (k == nb.size() && !nb.empty()) break;
            if (nb.empty()) break;
        }
        rest.push_back(std::move(out));
        factors = std::move(rest);
        alive.erase(std::find(alive.begin(), alive.end(), best));
    }

    cplx result = scalar;
    for (const auto& f : factors) result *= f.table[0];
    return result;
}

// integer bookkeeping that predicts the W^{-order*d/2} size of a graph value
inline int scaling_order(const AtomicGraph& g, bool* normal_regular = nullptr) {
    int offdiag_g = 0, light = 0, waved = 0, diffusive = 0, labelled = 0, dotted = 0, internal = 0;
    for (const auto& a : g.atoms)
        if (!a.external) ++internal;
    for (const auto& e : g.edges) {
        if (is_resolvent(e.kind) && e.a != e.b) ++offdiag_g;
        if (is_waved(e.kind)) ++waved;
        if (e.kind == EdgeKind::Theta) ++diffusive;
        if (e.kind == EdgeKind::LabelledTheta) labelled += e.label_order;
        if (e.kind == EdgeKind::Dotted) ++dotted;
    }
    for (const auto& w : g.weights)
        if (w.light) ++light;
    if (normal_regular) {
        bool ok = true;
        auto has_kind = [&](int a, int b, auto&& pred) {
            for (const auto& e : g.edges) {
                auto mm = std::minmax(e.a, e.b);
                if (mm == std::minmax(a, b) && pred(e.kind)) return true;
            }
            return false;
        };
        for (const auto& e : g.edges) {
            if (is_resolvent(e.kind) && e.a != e.b &&
                !has_kind(e.a, e.b, [](EdgeKind k) { return k == EdgeKind::CrossDotted; }))
                ok = false;
            if (e.kind == EdgeKind::CrossDotted && !has_kind(e.a, e.b, is_resolvent)) ok = false;
        }
        *normal_regular = ok;
    }
    return offdiag_g + light + 2 * waved + 2 * diffusive + labelled - 2 * (internal - dotted);
}

// partition of the atoms under waved and dotted edges; every external atom
// stands alone regardless of its attachments
inline std::vector<std::vector<int>> molecules(const AtomicGraph& g) {
    std::map<int, int> pos;
    for (size_t i = 0; i < g.atoms.size(); ++i) pos[g.atoms[i].id] = int(i);
    std::vector<int> parent(g.atoms.size());
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); };
    for (const auto& e : g.edges) {
        if (!(is_waved(e.kind) || e.kind == EdgeKind::Dotted)) continue;
        int ia = pos[e.a], ib = pos[e.b];
        if (g.atoms[ia].external || g.atoms[ib].external) continue;
        parent[find(ia)] = find(ib);
    }
    std::map<int, std::vector<int>> groups;
    for (size_t i = 0; i < g.atoms.size(); ++i) groups[find(int(i))].push_back(g.atoms[i].id);
    std::vector<std::vector<int>> out;
    for (auto& [root, ids] : groups) {
        std::sort(ids.begin(), ids.end());
        out.push_back(ids);
    }
    std::sort(out.begin(), out.end());
    return out;
}

struct MolecularEdge {
    int a = 0, b = 0;        // molecule indices
    EdgeKind kind = EdgeKind::Theta;
    int orig_edge = -1;      // index into graph.edges
};

struct MolecularGraph {
    std::vector<std::vector<int>> vertices;   // molecule -> atom ids
    std::vector<bool> external;               // molecule contains an external atom
    std::vector<MolecularEdge> edges;         // solid/diffusive edges between distinct molecules
};

inline MolecularGraph molecular_graph(const AtomicGraph& g) {
    MolecularGraph mg;
    mg.vertices = molecules(g);
    std::map<int, int> mol_of;
    for (size_t mi = 0; mi < mg.vertices.size(); ++mi)
        for (int id : mg.vertices[mi]) mol_of[id] = int(mi);
    mg.external.assign(mg.vertices.size(), false);
    for (const auto& a : g.atoms)
        if (a.external) mg.external[mol_of[a.id]] = true;
    for (size_t ei = 0; ei < g.edges.size(); ++ei) {
        const auto& e = g.edges[ei];
        if (!(is_resolvent(e.kind) || is_diffusive(e.kind))) continue;
        int ma = mol_of[e.a], mb = mol_of[e.b];
        if (ma == mb) continue;
        mg.edges.push_back({ma, mb, e.kind, int(ei)});
    }
    return mg;
}

struct DoublyConnectedReport {
    bool ok = false;
    std::vector<int> black_edges;   // original edge indices of the diffusive net
    std::vector<int> blue_edges;    // original edge indices of the second net
};

// two edge-disjoint nets over the internal molecules: a diffusive-only black
// net and a blue net free to use plus-resolvent or diffusive edges, each
// containing a spanning tree.  External molecules are removed first.
inline DoublyConnectedReport doubly_connected(const AtomicGraph& g) {
    MolecularGraph mg = molecular_graph(g);
    std::vector<int> internal_index(mg.vertices.size(), -1);
    int m = 0;
    for (size_t i = 0; i < mg.vertices.size(); ++i)
        if (!mg.external[i]) internal_index[i] = m++;
    if (m > 12) throw BudgetExceeded("doubly_connected: too many internal molecules");

    struct Cand {
        int a, b, orig;
        bool diffusive;
    };
    std::vector<Cand> cand;
    for (const auto& e : mg.edges) {
        int ia = internal_index[e.a], ib = internal_index[e.b];
        if (ia < 0 || ib < 0) continue;                    // touches an external molecule
        if (e.kind == EdgeKind::Gminus) continue;          // only plus-resolvent edges are net-usable
        cand.push_back({ia, ib, e.orig_edge, is_diffusive(e.kind)});
    }
    if (int(cand.size()) > 24) throw BudgetExceeded("doubly_connected: too many candidate edges");

    DoublyConnectedReport rep;
    if (m <= 1) {
        rep.ok = true;
        return rep;
    }

    std::vector<int> black_pool;
    for (size_t i = 0; i < cand.size(); ++i)
        if (cand[i].diffusive) black_pool.push_back(int(i));
    if (int(black_pool.size()) < m - 1) return rep;

    auto spans = [&](const std::vector<char>& use_black, bool black_side,
                     std::vector<int>* tree_out) {
        std::vector<int> parent(m);
        std::iota(parent.begin(), parent.end(), 0);
        std::function<int(int)> find = [&](int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); };
        int joins = 0;
        for (size_t i = 0; i < cand.size(); ++i) {
            bool in_side = black_side ? bool(use_black[i]) : !use_black[i];
            if (!in_side) continue;
            if (black_side && !cand[i].diffusive) continue;
            int ra = find(cand[i].a), rb = find(cand[i].b);
            if (ra != rb) {
                parent[ra] = rb;
                ++joins;
                if (tree_out) tree_out->push_back(cand[i].orig);
            }
        }
        return joins == m - 1;
    };

    // choose m-1 diffusive edges as the black tree, leave the rest to blue
    const int k = m - 1;
    std::vector<int> pick(k);
    std::iota(pick.begin(), pick.end(), 0);
    const int npool = int(black_pool.size());
    while (true) {
        std::vector<char> use_black(cand.size(), 0);
        for (int i : pick) use_black[black_pool[i]] = 1;
        std::vector<int> black_tree, blue_tree;
        if (spans(use_black, true, &black_tree) && int(black_tree.size()) == k &&
            spans(use_black, false, &blue_tree)) {
            rep.ok = true;
            rep.black_edges = black_tree;
            rep.blue_edges = blue_tree;
            return rep;
        }
        // next combination
        int i = k - 1;
        while (i >= 0 && pick[i] == npool - k + i) --i;
        if (i < 0) break;
        ++pick[i];
        for (int j = i + 1; j < k; ++j) pick[j] = pick[j - 1] + 1;
    }
    return rep;
}

} // namespace bandlab
