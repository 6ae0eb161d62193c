// command line front end for the band matrix laboratory: deterministic
// kernels, invariant checks, Monte Carlo residuals, diffusion fits, and
// graph catalog dumps

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "bandlab/catalog.hpp"
#include "bandlab/ensemble.hpp"
#include "bandlab/experiments.hpp"
#include "bandlab/io.hpp"
#include "bandlab/kernels.hpp"

namespace {

using namespace bandlab;

struct CommonOpts {
    RunConfig flags;
    std::string config_path;
    CLI::Option *d = nullptr, *L = nullptr, *W = nullptr, *family = nullptr, *shape = nullptr,
                *c_psi = nullptr, *E = nullptr, *eta = nullptr, *seed = nullptr,
                *samples = nullptr, *threads = nullptr, *order = nullptr, *pairs = nullptr,
                *steps = nullptr, *tag = nullptr, *out = nullptr;
};

std::shared_ptr<CommonOpts> add_common(CLI::App* sub) {
    auto opts = std::make_shared<CommonOpts>();
    sub->add_option("--config", opts->config_path, "JSON run configuration file");
    opts->d = sub->add_option("--d", opts->flags.d, "lattice dimension");
    opts->L = sub->add_option("--L", opts->flags.L, "side length of the torus");
    opts->W = sub->add_option("--W", opts->flags.W, "band width");
    opts->family = sub->add_option("--family", opts->flags.family, "profile family (gaussian|bump)");
    opts->shape = sub->add_option("--shape", opts->flags.shape, "profile shape parameter");
    opts->c_psi = sub->add_option("--c-psi", opts->flags.c_psi, "lower envelope constant");
    opts->E = sub->add_option("--E", opts->flags.E, "real part of the spectral point");
    opts->eta = sub->add_option("--eta", opts->flags.eta, "imaginary part of the spectral point");
    opts->seed = sub->add_option("--seed", opts->flags.seed, "ensemble seed");
    opts->samples = sub->add_option("--samples", opts->flags.samples, "number of samples");
    opts->threads = sub->add_option("--threads", opts->flags.threads, "worker threads");
    opts->order = sub->add_option("--order", opts->flags.order, "expansion order (2 or 3)");
    opts->pairs = sub->add_option("--pairs", opts->flags.pairs, "number of probed site pairs");
    opts->steps = sub->add_option("--steps", opts->flags.steps, "random walk step count");
    opts->tag = sub->add_option("--tag", opts->flags.tag, "graph catalog tag (A2|A3|E6)");
    opts->out = sub->add_option("--out", opts->flags.out, "output directory");
    return opts;
}

RunConfig resolve(const CommonOpts& o) {
    RunConfig cfg;
    if (!o.config_path.empty()) cfg = load_run_config(o.config_path);
    if (o.d->count()) cfg.d = o.flags.d;
    if (o.L->count()) cfg.L = o.flags.L;
    if (o.W->count()) cfg.W = o.flags.W;
    if (o.family->count()) cfg.family = o.flags.family;
    if (o.shape->count()) cfg.shape = o.flags.shape;
    if (o.c_psi->count()) cfg.c_psi = o.flags.c_psi;
    if (o.E->count()) cfg.E = o.flags.E;
    if (o.eta->count()) cfg.eta = o.flags.eta;
    if (o.seed->count()) cfg.seed = o.flags.seed;
    if (o.samples->count()) cfg.samples = o.flags.samples;
    if (o.threads->count()) cfg.threads = o.flags.threads;
    if (o.order->count()) cfg.order = o.flags.order;
    if (o.pairs->count()) cfg.pairs = o.flags.pairs;
    if (o.steps->count()) cfg.steps = o.flags.steps;
    if (o.tag->count()) cfg.tag = o.flags.tag;
    if (o.out->count()) cfg.out = o.flags.out;
    if (cfg.out.empty()) {
        const char* env = std::getenv("BANDLAB_OUT");
        if (env && *env) cfg.out = env;
    }
    if (cfg.out.empty()) cfg.out = ".";
    if (cfg.family != "gaussian" && cfg.family != "bump")
        throw ConfigError("family must be 'gaussian' or 'bump'");
    if (cfg.d < 1 || cfg.L < 2 || cfg.W < 1 || cfg.W > cfg.L)
        throw ConfigError("need d >= 1, L >= 2, 1 <= W <= L");
    if (cfg.samples < 1 || cfg.threads < 1)
        throw ConfigError("need samples >= 1 and threads >= 1");
    std::filesystem::create_directories(cfg.out);
    return cfg;
}

json geometry_json(const RunConfig& cfg) {
    return {{"d", cfg.d}, {"L", cfg.L}, {"W", cfg.W},   {"family", cfg.family},
            {"E", cfg.E}, {"eta", cfg.eta}, {"seed", cfg.seed}};
}

std::string geometry_line(const RunConfig& cfg) {
    return "d=" + std::to_string(cfg.d) + " L=" + std::to_string(cfg.L) +
           " W=" + std::to_string(cfg.W) + " family=" + cfg.family + " E=" + format_g17(cfg.E) +
           " eta=" + format_g17(cfg.eta);
}

int run_kernels(const RunConfig& cfg) {
    TorusLattice lat = cfg.lattice();
    VarianceProfile prof = build_profile(cfg.profile_spec(), lat);
    SpectralPoint pt = m_sc(cfg.z());
    KernelSet ks = make_kernel_set(prof, pt);
    LatticeKernel b = b_field(prof.geom);

    std::vector<std::vector<double>> rows;
    for (int64_t v = 0; v < lat.N; ++v)
        rows.push_back({double(v), double(lat.dist0(v)), prof.f[v], ks.theta.values[v].real(),
                        ks.splus.values[v].real(), ks.splus.values[v].imag(), b.values[v].real()});
    write_csv(std::filesystem::path(cfg.out) / "kernels.csv",
              {"site", "dist", "f", "theta", "splus_re", "splus_im", "b"}, rows,
              geometry_line(cfg));

    std::vector<double> px(lat.N), py(lat.N);
    for (int64_t ip = 0; ip < lat.N; ++ip) {
        px[ip] = std::sqrt(lat.momentum_norm2(ip));
        py[ip] = ks.theta.symbol[ip].real();
    }
    write_plotdata(std::filesystem::path(cfg.out) / "theta_symbol.plotdata", px, py);

    KernelNorms bn = kernel_norms(b, 2.0, 2.0);
    json j = {{"geometry", geometry_json(cfg)},
              {"m_re", pt.m.real()},
              {"m_im", pt.m.imag()},
              {"abs_m2", pt.abs_m2},
              {"theta_mass", pt.theta_mass},
              {"theta_row_sum", ks.theta.row_sum().real()},
              {"splus_row_sum_re", ks.splus.row_sum().real()},
              {"splus_row_sum_im", ks.splus.row_sum().imag()},
              {"b_strong_norm_22", bn.strong},
              {"profile_decay_k4", decay_report(prof, 4.0)}};
    write_json(std::filesystem::path(cfg.out) / "kernels.json", j);
    std::printf("kernels: wrote %s/kernels.{csv,json}  theta mass %.6g\n", cfg.out.c_str(),
                pt.theta_mass);
    return 0;
}

void check(bool ok, const std::string& name, const std::string& detail) {
    if (!ok) throw std::runtime_error("invariant violated: " + name + " (" + detail + ")");
    std::printf("ok %-24s %s\n", name.c_str(), detail.c_str());
}

int run_verify(const RunConfig& cfg) {
    TorusLattice lat = cfg.lattice();
    VarianceProfile prof = build_profile(cfg.profile_spec(), lat);
    cplx z = cfg.z();
    SpectralPoint pt = m_sc(z);

    cplx fp = pt.m * pt.m + z * pt.m + cplx(1, 0);
    check(std::abs(fp) <= 1e-12, "self-consistent-root", "residual " + format_g17(std::abs(fp)));
    double mi = mass_identity_residual(pt);
    check(mi <= 1e-12, "mass-identity", "residual " + format_g17(mi));

    double fsum = 0, fmin = 0;
    for (double v : prof.f) {
        fsum += v;
        fmin = std::min(fmin, v);
    }
    check(std::abs(fsum - 1.0) <= 1e-12, "profile-normalization",
          "sum deviation " + format_g17(std::abs(fsum - 1.0)));
    check(fmin >= 0.0, "profile-positivity", "min " + format_g17(fmin));

    KernelSet ks = make_kernel_set(prof, pt);
    double mass_dev = std::abs(ks.theta.row_sum().real() - pt.theta_mass) / pt.theta_mass;
    check(mass_dev <= 1e-8, "theta-row-sum", "relative deviation " + format_g17(mass_dev));

    double fix_dev = 0;
    for (int64_t ip = 0; ip < lat.N; ++ip) {
        cplx shat = prof.symbol[ip];
        cplx sp = ks.splus.symbol[ip];
        fix_dev = std::max(fix_dev, std::abs(pt.m2() * shat * (cplx(1, 0) + sp) - sp));
    }
    check(fix_dev <= 1e-10, "splus-fixed-point", "max residual " + format_g17(fix_dev));

    int K = int(std::ceil(std::pow(double(cfg.W), 0.2) / cfg.eta));
    LatticeKernel walk = theta_via_walk(prof, pt, K);
    double tail = std::pow(pt.abs_m2, K) / (1.0 - pt.abs_m2);
    double walk_dev = 0;
    for (int64_t v = 0; v < lat.N; ++v)
        walk_dev = std::max(walk_dev, std::abs(walk.values[v] - ks.theta.values[v]));
    check(walk_dev <= 1e-9 + tail, "walk-truncation",
          "max deviation " + format_g17(walk_dev) + " bound " + format_g17(1e-9 + tail));

    BandMatrixSample smp = sample_h(prof, cfg.seed, 0);
    ResolventFrame fr = resolvent(smp, z);
    WardReport ward = ward_check(fr);
    check(ward.relative() <= 1e-10, "ward-identity", "relative " + format_g17(ward.relative()));

    ResolventFrame fr2 = resolvent(smp, cplx(cfg.E, cfg.eta * 2.0));
    double shift = interp_residual(fr, fr2);
    check(shift <= 1e-9, "resolvent-shift", "max residual " + format_g17(shift));

    MonotoneReport mono =
        trace_monotonicity(smp, cfg.E, {cfg.eta * 0.5, cfg.eta, cfg.eta * 2.0, cfg.eta * 4.0}, 0);
    check(mono.monotone, "trace-monotone", "min step " + format_g17(mono.min_step));

    std::vector<int64_t> sites;
    for (int k = 0; k < 4; ++k) sites.push_back(k * lat.N / 4);
    OverlapReport ov = overlap_scan(fr, sites);
    check(ov.min_eigenvalue >= -1e-10 && ov.max_diag_dev <= 1e-10 && ov.single_site_exact,
          "overlap-gram",
          "min eig " + format_g17(ov.min_eigenvalue) + " diag dev " + format_g17(ov.max_diag_dev));

    double even_dev = 0;
    for (int64_t v = 0; v < lat.N; ++v)
        even_dev = std::max(even_dev,
                            std::abs(ks.theta.values[v] - ks.theta.values[lat.negate(v)]));
    check(even_dev == 0.0, "kernel-evenness", "max deviation " + format_g17(even_dev));

    SelfEnergyKernel raw = self_energy_from_graph(catalog_e6().front(), ks);
    SelfEnergyKernel ren = renormalize_self_energy(raw, prof);
    double row = std::abs(ren.kernel.row_sum());
    check(row <= 1e-12, "self-energy-sum-zero", "row sum " + format_g17(row));

    std::printf("verify: all invariants hold\n");
    return 0;
}

int run_mc(const RunConfig& cfg) {
    TorusLattice lat = cfg.lattice();
    VarianceProfile prof = build_profile(cfg.profile_spec(), lat);
    ResidualReport rep = t_expansion_residual(prof, cfg.z(), cfg.order, cfg.samples, cfg.pairs,
                                              cfg.seed, cfg.threads);
    std::vector<std::vector<double>> rows;
    json jp = json::array();
    for (const ResidualPair& p : rep.pairs) {
        rows.push_back({double(p.a), double(p.b), p.mean.real(), p.mean.imag(), p.se_re, p.se_im,
                        p.pass ? 1.0 : 0.0});
        jp.push_back({{"a", p.a},
                      {"b", p.b},
                      {"mean_re", p.mean.real()},
                      {"mean_im", p.mean.imag()},
                      {"se_re", p.se_re},
                      {"se_im", p.se_im},
                      {"pass", p.pass}});
    }
    write_csv(std::filesystem::path(cfg.out) / "residual.csv",
              {"a", "b", "mean_re", "mean_im", "se_re", "se_im", "pass"}, rows);
    write_json(std::filesystem::path(cfg.out) / "residual.json",
               {{"geometry", geometry_json(cfg)},
                {"order", rep.order},
                {"samples", rep.n_samples},
                {"sigma_bound", rep.sigma_bound},
                {"pairs", jp},
                {"pass", rep.pass}});
    std::printf("mc: order %d, %d samples, %zu pairs, %s\n", rep.order, rep.n_samples,
                rep.pairs.size(), rep.pass ? "consistent with zero" : "NOT consistent with zero");
    return 0;
}

json diffusion_json(const DiffusionReport& rep) {
    json jd = json::array(), jr = json::array();
    for (int i = 0; i < rep.d_hat.rows(); ++i)
        for (int j = 0; j < rep.d_hat.cols(); ++j) {
            jd.push_back(rep.d_hat(i, j));
            jr.push_back(rep.d_ref(i, j));
        }
    return {{"samples", rep.n_samples}, {"momenta", rep.n_momenta},
            {"a_hat", rep.a_hat},       {"b_hat", rep.b_hat},
            {"eta_hat", rep.eta_hat},   {"eta_true", rep.eta_true},
            {"eta_err", rep.eta_err},   {"d_hat", jd},
            {"d_ref", jr},              {"d_err", rep.d_err},
            {"mass_hat", rep.mass_hat}, {"mass_ref", rep.mass_ref}};
}

int run_diffusion(const RunConfig& cfg) {
    TorusLattice lat = cfg.lattice();
    VarianceProfile prof = build_profile(cfg.profile_spec(), lat);
    DiffusionReport cal = diffusion_calibration(prof, cfg.z());
    DiffusionReport fit = diffusion_fit(prof, cfg.z(), cfg.samples, cfg.seed, cfg.threads);
    write_json(std::filesystem::path(cfg.out) / "diffusion.json",
               {{"geometry", geometry_json(cfg)},
                {"calibration", diffusion_json(cal)},
                {"fit", diffusion_json(fit)}});
    std::vector<double> px(lat.N);
    for (int64_t ip = 0; ip < lat.N; ++ip) px[ip] = std::sqrt(lat.momentum_norm2(ip));
    write_plotdata(std::filesystem::path(cfg.out) / "momentum_profile.plotdata", px, fit.ghat);
    std::printf("diffusion: eta %.4g (true %.4g, err %.2f%%), diffusion err %.2f%%\n", fit.eta_hat,
                fit.eta_true, 100.0 * fit.eta_err, 100.0 * fit.d_err);
    return 0;
}

int run_graphs(const RunConfig& cfg, const std::string& eval_path,
               const std::vector<int64_t>& sites, int budget) {
    if (!eval_path.empty()) {
        AtomicGraph g = graph_from_json(load_json(eval_path));
        std::vector<int> ext;
        for (const Atom& a : g.atoms)
            if (a.external) ext.push_back(a.id);
        std::sort(ext.begin(), ext.end());
        if (sites.size() != ext.size())
            throw ConfigError("graph has " + std::to_string(ext.size()) +
                              " external atoms, got " + std::to_string(sites.size()) + " sites");
        TorusLattice lat = cfg.lattice();
        VarianceProfile prof = build_profile(cfg.profile_spec(), lat);
        SpectralPoint pt = m_sc(cfg.z());
        KernelSet ks = make_kernel_set(prof, pt);
        BandMatrixSample smp = sample_h(prof, cfg.seed, 0);
        ResolventFrame fr = resolvent(smp, cfg.z());
        EvalContext ctx = ks.context(budget);
        ctx.frame = &fr;
        for (size_t i = 0; i < ext.size(); ++i) ctx.external_sites[ext[i]] = sites[i];
        cplx v = evaluate(g, ctx);
        DoublyConnectedReport dc = doubly_connected(g);
        std::printf("%s: value (%.17g, %.17g), scaling order %d, doubly connected %s\n",
                    g.name.c_str(), v.real(), v.imag(), scaling_order(g), dc.ok ? "yes" : "no");
        return 0;
    }
    std::vector<AtomicGraph> gs = catalog(catalog_tag_from_string(cfg.tag));
    json arr = json::array();
    for (const AtomicGraph& g : gs) {
        arr.push_back(graph_to_json(g));
        bool normal = false;
        int ord = scaling_order(g, &normal);
        DoublyConnectedReport dc = doubly_connected(g);
        std::printf("%-14s order %d  molecules %zu  normal %-3s  doubly connected %s\n",
                    g.name.c_str(), ord, molecules(g).size(), normal ? "yes" : "no",
                    dc.ok ? "yes" : "no");
    }
    std::filesystem::path out =
        std::filesystem::path(cfg.out) / ("catalog_" + cfg.tag + ".json");
    write_json(out, arr);
    std::printf("graphs: wrote %s\n", out.c_str());
    return 0;
}

int run_report(const RunConfig& cfg) {
    TorusLattice lat = cfg.lattice();
    VarianceProfile prof = build_profile(cfg.profile_spec(), lat);
    cplx z = cfg.z();
    SpectralPoint pt = m_sc(z);
    KernelSet ks = make_kernel_set(prof, pt);

    int n_small = std::min(cfg.samples, 5);
    LocalLawStats law = local_law_stats(prof, z, n_small, cfg.seed, cfg.threads);
    BandMatrixSample smp = sample_h(prof, cfg.seed, 0);
    ResolventFrame fr = resolvent(smp, z);
    std::vector<int64_t> sites;
    for (int k = 0; k < 4; ++k) sites.push_back(k * lat.N / 4);
    OverlapReport ov = overlap_scan(fr, sites);
    DiffusionReport cal = diffusion_calibration(prof, z);

    json j = {{"geometry", geometry_json(cfg)},
              {"m_re", pt.m.real()},
              {"m_im", pt.m.imag()},
              {"theta_mass", pt.theta_mass},
              {"theta_row_sum", ks.theta.row_sum().real()},
              {"local_law",
               {{"samples", law.n_samples},
                {"q50", law.q50},
                {"q90", law.q90},
                {"q99", law.q99},
                {"max", law.qmax},
                {"diag_median", law.diag_median}}},
              {"overlap",
               {{"min_eigenvalue", ov.min_eigenvalue},
                {"max_diag_dev", ov.max_diag_dev},
                {"single_site_exact", ov.single_site_exact}}},
              {"calibration", diffusion_json(cal)}};
    write_json(std::filesystem::path(cfg.out) / "report.json", j);
    std::vector<double> hx, hy;
    for (auto [center, count] : law.hist) {
        hx.push_back(center);
        hy.push_back(count);
    }
    write_plotdata(std::filesystem::path(cfg.out) / "ratio_hist.plotdata", hx, hy);
    std::printf("report: wrote %s/report.json\n", cfg.out.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"numerical laboratory for random band matrices"};
    app.require_subcommand(1);

    auto* sub_kernels = app.add_subcommand("kernels", "build deterministic kernels and dump them");
    auto ok_kernels = add_common(sub_kernels);
    sub_kernels->callback([ok_kernels] { run_kernels(resolve(*ok_kernels)); });

    auto* sub_verify = app.add_subcommand("verify", "check exact identities, fail on the first violation");
    auto ok_verify = add_common(sub_verify);
    sub_verify->callback([ok_verify] { run_verify(resolve(*ok_verify)); });

    auto* sub_mc = app.add_subcommand("mc", "Monte Carlo residual of the T-expansion");
    auto ok_mc = add_common(sub_mc);
    sub_mc->callback([ok_mc] { run_mc(resolve(*ok_mc)); });

    auto* sub_diff = app.add_subcommand("diffusion", "fit broadening and diffusion matrix");
    auto ok_diff = add_common(sub_diff);
    sub_diff->callback([ok_diff] { run_diffusion(resolve(*ok_diff)); });

    auto* sub_graphs = app.add_subcommand("graphs", "dump or evaluate catalog graphs");
    auto ok_graphs = add_common(sub_graphs);
    auto eval_path = std::make_shared<std::string>();
    auto sites = std::make_shared<std::vector<int64_t>>();
    auto budget = std::make_shared<int>(4);
    sub_graphs->add_option("--eval", *eval_path, "graph JSON file to evaluate");
    sub_graphs->add_option("--sites", *sites, "external sites in atom id order")->delimiter(',');
    sub_graphs->add_option("--budget", *budget, "internal summation budget");
    sub_graphs->callback([ok_graphs, eval_path, sites, budget] {
        run_graphs(resolve(*ok_graphs), *eval_path, *sites, *budget);
    });

    auto* sub_report = app.add_subcommand("report", "run a summary battery and write report.json");
    auto ok_report = add_common(sub_report);
    sub_report->callback([ok_report] { run_report(resolve(*ok_report)); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const bandlab::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
