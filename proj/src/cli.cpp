#include "prodspec/cli.hpp"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "prodspec/fit.hpp"
#include "prodspec/modelfile.hpp"
#include "prodspec/solver.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace prodspec {

std::uint64_t fnv1a64(const void* data, std::size_t size) {
    std::uint64_t h = 1469598103934665603ull;
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

std::uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::io_error, "cannot read back " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string bytes = ss.str();
    return fnv1a64(bytes.data(), bytes.size());
}

namespace {

std::string dstr(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string hex64(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "0x%016" PRIx64, v);
    return buf;
}

// One CSV output file: '#'-prefixed header block, column line, data rows.
class CsvFile {
public:
    CsvFile(const fs::path& dir, const std::string& name) : path_(dir / name), name_(name) {
        out_.open(path_, std::ios::binary);
        if (!out_) fail(Errc::io_error, "cannot write " + path_.string());
    }
    void header(const std::string& key, const std::string& value) {
        out_ << "# " << key << ": " << value << "\n";
    }
    void columns(const std::string& cols) { out_ << cols << "\n"; }
    void row(std::initializer_list<std::string> cells) {
        bool first = true;
        for (const auto& c : cells) {
            if (!first) out_ << ",";
            out_ << c;
            first = false;
        }
        out_ << "\n";
    }
    void close() { out_.close(); }
    const std::string& name() const { return name_; }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
    std::string name_;
    std::ofstream out_;
};

struct RunContext {
    const RunConfig& cfg;
    ValidatedModel model;
    fs::path dir;
    std::vector<std::string> outputs;

    CsvFile open_csv(const std::string& name) {
        CsvFile f(dir, name);
        outputs.push_back(name);
        f.header("artifact", std::string(kArtifactName) + " " + kArtifactVersion);
        f.header("command", cfg.command);
        f.header("model_hash", hex64(model.hash()));
        f.header("model_class", tag_name(model.classification().tag));
        f.header("seed", std::to_string(cfg.seed));
        return f;
    }
};

std::vector<double> parse_grid_spec(const std::string& spec) {
    // "lin:lo:hi:n" or "log:lo:hi:n", joined with '+'
    std::vector<double> grid;
    std::stringstream ss(spec);
    std::string part;
    while (std::getline(ss, part, '+')) {
        std::stringstream ps(part);
        std::string kind, lo_s, hi_s, n_s;
        if (!std::getline(ps, kind, ':') || !std::getline(ps, lo_s, ':') ||
            !std::getline(ps, hi_s, ':') || !std::getline(ps, n_s, ':'))
            fail(Errc::usage_error, "bad grid spec segment: " + part);
        double lo = std::stod(lo_s), hi = std::stod(hi_s);
        int n = std::stoi(n_s);
        if (n < 2 || !(hi > lo)) fail(Errc::usage_error, "bad grid spec segment: " + part);
        for (int i = 0; i < n; ++i) {
            double t = static_cast<double>(i) / (n - 1);
            if (kind == "lin")
                grid.push_back(lo + (hi - lo) * t);
            else if (kind == "log")
                grid.push_back(std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * t));
            else
                fail(Errc::usage_error, "grid kind must be lin or log: " + part);
        }
    }
    if (grid.empty()) fail(Errc::usage_error, "empty grid spec");
    std::sort(grid.begin(), grid.end());
    return grid;
}

std::string grid_policy_string(const RunConfig& cfg) {
    return cfg.grid_spec.empty() ? "default (512 log near 0 + 512 linear bulk)" : cfg.grid_spec;
}

void write_radial_curve(RunContext& ctx, const DensityCurve& curve, const std::string& name) {
    CsvFile f = ctx.open_csv(name);
    f.header("grid", grid_policy_string(ctx.cfg));
    f.header("alpha", dstr(curve.geometry.alpha));
    f.header("r_ext", dstr(curve.geometry.r_ext));
    f.header("r_int", dstr(curve.geometry.r_int));
    if (curve.geometry.d_eigen) f.header("divergence_d", std::to_string(*curve.geometry.d_eigen));
    f.columns("R,m_value,rho_rad");
    for (std::size_t i = 0; i < curve.grid.size(); ++i)
        f.row({dstr(curve.grid[i]), dstr(curve.m_values[i]), dstr(curve.values[i])});
    f.close();
}

void write_singular_curve(RunContext& ctx, const DensityCurve& curve, const std::string& name) {
    CsvFile f = ctx.open_csv(name);
    f.header("grid", grid_policy_string(ctx.cfg));
    f.header("eps_policy", "imag-offset 1e-9, Richardson extrapolation near edges");
    f.header("upper_edge", dstr(curve.upper_edge));
    f.header("lower_edge", dstr(curve.lower_edge));
    f.columns("x,re_M,im_M,rho");
    for (std::size_t i = 0; i < curve.grid.size(); ++i)
        f.row({dstr(curve.grid[i]), dstr(curve.m_complex[i].real()),
               dstr(curve.m_complex[i].imag()), dstr(curve.values[i])});
    f.close();
}

void write_histogram(RunContext& ctx, const EmpiricalCurve& hist, const std::string& name) {
    CsvFile f = ctx.open_csv(name);
    f.header("n", std::to_string(ctx.cfg.n_outer));
    f.header("samples", std::to_string(ctx.cfg.samples));
    f.header("entries", entry_dist_name(ctx.cfg.entries));
    f.header("alpha_hat", dstr(hist.alpha_hat));
    f.columns("bin_lo,bin_hi,density,stderr");
    for (std::size_t b = 0; b + 1 < hist.bin_edges.size(); ++b)
        f.row({dstr(hist.bin_edges[b]), dstr(hist.bin_edges[b + 1]), dstr(hist.density[b]),
               dstr(hist.stderr_[b])});
    f.close();
}

void write_compare(RunContext& ctx, const EmpiricalCurve& hist, const DensityCurve& theory,
                   const std::string& name) {
    CsvFile f = ctx.open_csv(name);
    f.header("n", std::to_string(ctx.cfg.n_outer));
    f.header("samples", std::to_string(ctx.cfg.samples));
    f.columns("bin_lo,bin_hi,density,stderr,theory,z");
    for (std::size_t b = 0; b + 1 < hist.bin_edges.size(); ++b) {
        double mid = 0.5 * (hist.bin_edges[b] + hist.bin_edges[b + 1]);
        double th = curve_value_at(theory, mid);
        double z = hist.stderr_[b] > 0.0 ? (hist.density[b] - th) / hist.stderr_[b] : 0.0;
        f.row({dstr(hist.bin_edges[b]), dstr(hist.bin_edges[b + 1]), dstr(hist.density[b]),
               dstr(hist.stderr_[b]), dstr(th), dstr(z)});
    }
    f.close();
}

void write_spectra_binary(RunContext& ctx, const std::vector<SpectrumSample>& samples,
                          SpectrumKind kind, const std::string& name) {
    fs::path path = ctx.dir / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(Errc::io_error, "cannot write " + path.string());
    ctx.outputs.push_back(name);
    auto put_u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
    auto put_u64 = [&](std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); };
    out.write("PRODSPEC", 8);
    put_u32(1);
    put_u32(kind == SpectrumKind::Eigenvalue ? 0u : 1u);
    put_u64(ctx.model.hash());
    put_u64(ctx.cfg.seed);
    put_u32(static_cast<std::uint32_t>(ctx.cfg.n_outer));
    put_u32(static_cast<std::uint32_t>(samples.size()));
    std::uint32_t per = samples.empty() ? 0u
                       : (kind == SpectrumKind::Eigenvalue
                              ? static_cast<std::uint32_t>(samples.front().eigen.size())
                              : static_cast<std::uint32_t>(samples.front().mu.size()));
    put_u32(per);
    put_u32(0);
    for (const auto& s : samples) {
        if (kind == SpectrumKind::Eigenvalue) {
            for (Cx z : s.eigen) {
                double re = z.real(), im = z.imag();
                out.write(reinterpret_cast<const char*>(&re), 8);
                out.write(reinterpret_cast<const char*>(&im), 8);
            }
        } else {
            for (double v : s.mu) out.write(reinterpret_cast<const char*>(&v), 8);
        }
    }
}

DensityCurve compute_radial(RunContext& ctx) {
    std::vector<double> grid = ctx.cfg.grid_spec.empty()
                                   ? default_radial_grid(ctx.model)
                                   : parse_grid_spec(ctx.cfg.grid_spec);
    return radial_density(ctx.model, grid);
}

DensityCurve compute_singular(RunContext& ctx) {
    std::vector<double> grid = ctx.cfg.grid_spec.empty()
                                   ? default_singular_grid(ctx.model)
                                   : parse_grid_spec(ctx.cfg.grid_spec);
    return singular_density(ctx.model, grid);
}

// Histogram ranges informed by the theory geometry so compare bins line up
// with the interesting region; the histogram widens itself for stragglers.
double radial_hist_hi(const RunContext& ctx) {
    DomainGeometry g = domain_geometry(ctx.model);
    return g.r_ext * (1.0 + 10.0 / std::sqrt(static_cast<double>(ctx.cfg.n_outer)));
}

struct MomentSummary {
    std::vector<MomentRow> rows;
};

MomentSummary moments_from_ensemble(const RunContext& ctx,
                                    const std::vector<SpectrumSample>& singular) {
    MomentSummary ms;
    auto theory = theory_moments(ctx.model, 4);
    int samples = static_cast<int>(singular.size());
    for (int n = 1; n <= 4; ++n) {
        std::vector<double> per(samples, 0.0);
        for (int k = 0; k < samples; ++k) {
            double acc = 0.0;
            for (double m : singular[k].mu) acc += std::pow(m, n);
            per[k] = acc / static_cast<double>(singular[k].mu.size());
        }
        double mean = 0.0;
        for (double v : per) mean += v;
        mean /= samples;
        double var = 0.0;
        for (double v : per) var += (v - mean) * (v - mean);
        var = samples > 1 ? var / (samples - 1) : 0.0;
        ms.rows.push_back({n, mean, std::sqrt(var / samples), theory[n - 1]});
    }
    return ms;
}

void cmd_theory(RunContext& ctx) {
    if (ctx.model.eigenvalue_capable())
        write_radial_curve(ctx, compute_radial(ctx), "theory_eigen.csv");
    write_singular_curve(ctx, compute_singular(ctx), "theory_singular.csv");
}

void cmd_oracle(RunContext& ctx) {
    const auto& cls = ctx.model.classification();
    const auto& factors = ctx.model.factors();

    // Bures parameter set: one two-term equal-weight CUE sum of unit total
    // weight, one unit-scale square Ginibre.
    bool bures = factors.size() == 2 && cls.tag == ModelTag::W;
    if (bures) {
        const auto* c = std::get_if<CueSumFactor>(&factors[0]);
        const auto* g = std::get_if<GinibreFactor>(&factors[1]);
        bures = c && g && c->weights.size() == 2 && all_weights_equal_abs(*c) &&
                std::abs(std::norm(c->weights[0]) + std::norm(c->weights[1]) - 1.0) < 1e-9 &&
                std::abs(g->sigma - 1.0) < 1e-12 && g->rows == Rational(1) &&
                g->cols == Rational(1);
    }
    if (bures) {
        std::vector<double> grid = ctx.cfg.grid_spec.empty()
                                       ? default_singular_grid(ctx.model)
                                       : parse_grid_spec(ctx.cfg.grid_spec);
        CsvFile f = ctx.open_csv("oracle.csv");
        f.header("oracle", "bures");
        f.columns("x,rho");
        for (double x : grid) f.row({dstr(x), dstr(bures_closed_form(x))});
        f.close();
        return;
    }

    // Equal-weight CUE product with a common length: explicit radial formula.
    bool t1 = !factors.empty() && (cls.tag == ModelTag::T || cls.tag == ModelTag::S);
    int common_l = 0;
    double w_abs = 1.0;
    if (t1) {
        for (const auto& fac : factors) {
            const auto& c = std::get<CueSumFactor>(fac);
            if (!all_weights_equal_abs(c)) { t1 = false; break; }
            int l = static_cast<int>(c.weights.size());
            if (common_l == 0) common_l = l;
            if (l != common_l || l < 2) { t1 = false; break; }
            double sum = 0.0;
            for (Cx w : c.weights) sum += std::norm(w);
            w_abs *= std::sqrt(sum);
        }
    }
    if (t1) {
        std::vector<double> grid = ctx.cfg.grid_spec.empty()
                                       ? default_radial_grid(ctx.model)
                                       : parse_grid_spec(ctx.cfg.grid_spec);
        CsvFile f = ctx.open_csv("oracle.csv");
        f.header("oracle", "cue-product-equal-weights");
        f.columns("R,rho");
        for (double r : grid)
            f.row({dstr(r), dstr(t_example1_closed_form(
                                r, static_cast<int>(factors.size()), common_l, w_abs))});
        f.close();
        return;
    }
    fail(Errc::usage_error, "no closed-form oracle covers this model");
}

void cmd_mc(RunContext& ctx, bool also_compare) {
    bool square = ctx.model.eigenvalue_capable();
    auto ens = run_ensemble(ctx.model, ctx.cfg.n_outer, ctx.cfg.samples, ctx.cfg.seed,
                            ctx.cfg.workers, ctx.cfg.entries, square, true);

    DensityCurve theory_r, theory_s;
    if (also_compare) {
        if (square) theory_r = compute_radial(ctx);
        theory_s = compute_singular(ctx);
        if (square) write_radial_curve(ctx, theory_r, "theory_eigen.csv");
        write_singular_curve(ctx, theory_s, "theory_singular.csv");
    }

    if (square) {
        auto hist = radial_histogram(ens.eigen, ctx.cfg.bins, 0.0, radial_hist_hi(ctx));
        write_histogram(ctx, hist, "mc_radial.csv");
        if (also_compare) write_compare(ctx, hist, theory_r, "compare_radial.csv");
    }
    {
        double hi = upper_support_edge(ctx.model) *
                    (1.0 + 10.0 / std::sqrt(static_cast<double>(ctx.cfg.n_outer)));
        auto hist = value_histogram(ens.singular, ctx.cfg.bins, 0.0, hi);
        write_histogram(ctx, hist, "mc_singular.csv");
        if (also_compare) write_compare(ctx, hist, theory_s, "compare_singular.csv");
    }

    // entropy of the normalized singular spectrum, sample mean and error
    {
        std::vector<double> ent(ens.singular.size());
        for (std::size_t k = 0; k < ens.singular.size(); ++k)
            ent[k] = von_neumann_entropy(ens.singular[k]);
        double mean = 0.0;
        for (double e : ent) mean += e;
        mean /= static_cast<double>(ent.size());
        double var = 0.0;
        for (double e : ent) var += (e - mean) * (e - mean);
        var = ent.size() > 1 ? var / (ent.size() - 1) : 0.0;
        CsvFile f = ctx.open_csv("mc_entropy.csv");
        f.columns("mean_entropy,stderr,samples,N");
        f.row({dstr(mean), dstr(std::sqrt(var / ent.size())),
               std::to_string(ctx.cfg.samples), std::to_string(ctx.cfg.n_outer)});
        f.close();
    }

    {
        MomentSummary ms = moments_from_ensemble(ctx, ens.singular);
        CsvFile f = ctx.open_csv("mc_moments.csv");
        f.columns("n,empirical,stderr,theory");
        for (const auto& row : ms.rows)
            f.row({std::to_string(row.n), dstr(row.empirical), dstr(row.stderr_),
                   dstr(row.theory)});
        f.close();
    }

    if (ctx.cfg.save_spectra) {
        if (square) write_spectra_binary(ctx, ens.eigen, SpectrumKind::Eigenvalue,
                                         "spectra_eigen.bin");
        write_spectra_binary(ctx, ens.singular, SpectrumKind::Singular, "spectra_singular.bin");
    }
}

void cmd_fit_erfc(RunContext& ctx) {
    if (!ctx.model.eigenvalue_capable())
        fail(Errc::usage_error, "fit-erfc needs a square model (eigenvalue borderlines)");
    DomainGeometry g = domain_geometry(ctx.model);
    DensityCurve theory = compute_radial(ctx);
    auto ens = run_ensemble(ctx.model, ctx.cfg.n_outer, ctx.cfg.samples, ctx.cfg.seed,
                            ctx.cfg.workers, ctx.cfg.entries, true, false);

    // fine bins: about half the borderline width each
    double hi = radial_hist_hi(ctx);
    int bins = static_cast<int>(std::ceil(hi * 2.0 * std::sqrt(ctx.cfg.n_outer)));
    auto hist = radial_histogram(ens.eigen, bins, 0.0, hi);

    CsvFile f = ctx.open_csv("erfc_fit.csv");
    f.columns("borderline,q_b,R_b,residual,N");
    {
        EdgeProfile prof = extract_edge_profile(hist, theory, g.r_ext, +1, ctx.cfg.n_outer);
        ErfcFitResult fit = fit_erfc(prof);
        f.row({"external", dstr(fit.q_b), dstr(fit.r_b), dstr(fit.residual),
               std::to_string(ctx.cfg.n_outer)});
    }
    if (g.r_int > 1e-9) {
        EdgeProfile prof = extract_edge_profile(hist, theory, g.r_int, -1, ctx.cfg.n_outer);
        ErfcFitResult fit = fit_erfc(prof);
        f.row({"internal", dstr(fit.q_b), dstr(fit.r_b), dstr(fit.residual),
               std::to_string(ctx.cfg.n_outer)});
    }
    f.close();
}

void write_manifest(RunContext& ctx) {
    ordered_json j;
    j["artifact"] = kArtifactName;
    j["version"] = kArtifactVersion;
    j["command"] = ctx.cfg.command;
    ordered_json cfg;
    cfg["model"] = ctx.cfg.model_path;
    cfg["out"] = ctx.cfg.out_dir;
    cfg["seed"] = ctx.cfg.seed;
    cfg["n"] = ctx.cfg.n_outer;
    cfg["samples"] = ctx.cfg.samples;
    cfg["workers"] = ctx.cfg.workers;
    cfg["bins"] = ctx.cfg.bins;
    cfg["grid"] = ctx.cfg.grid_spec;
    cfg["entries"] = entry_dist_name(ctx.cfg.entries);
    cfg["save_spectra"] = ctx.cfg.save_spectra;
    j["config"] = cfg;
    j["model_hash"] = hex64(ctx.model.hash());
    j["model_class"] = tag_name(ctx.model.classification().tag);
    ordered_json outs = ordered_json::array();
    for (const auto& name : ctx.outputs) {
        ordered_json o;
        o["file"] = name;
        o["fnv1a64"] = hex64(fnv1a64_file((ctx.dir / name).string()));
        outs.push_back(o);
    }
    j["outputs"] = outs;
    std::ofstream out(ctx.dir / "run_manifest.json", std::ios::binary);
    if (!out) fail(Errc::io_error, "cannot write manifest");
    out << j.dump(2) << "\n";
}

} // namespace

void run(const RunConfig& cfg) {
    if (cfg.command != "theory" && cfg.command != "mc" && cfg.command != "compare" &&
        cfg.command != "fit-erfc" && cfg.command != "oracle")
        fail(Errc::usage_error, "unknown command: " + cfg.command);
    if (cfg.model_path.empty()) fail(Errc::usage_error, "--model is required");
    if (cfg.out_dir.empty()) fail(Errc::usage_error, "--out is required");
    bool needs_samples = cfg.command == "mc" || cfg.command == "compare" ||
                         cfg.command == "fit-erfc";
    if (needs_samples && cfg.samples < 1)
        fail(Errc::usage_error, "this command needs --samples >= 1");
    if (cfg.n_outer < 1) fail(Errc::usage_error, "--n must be positive");

    RunContext ctx{cfg, load_model_file(cfg.model_path), fs::path(cfg.out_dir), {}};
    fs::create_directories(ctx.dir);

    if (cfg.command == "theory") cmd_theory(ctx);
    else if (cfg.command == "oracle") cmd_oracle(ctx);
    else if (cfg.command == "mc") cmd_mc(ctx, false);
    else if (cfg.command == "compare") cmd_mc(ctx, true);
    else cmd_fit_erfc(ctx);

    write_manifest(ctx);
}

int cli_main(int argc, char** argv) {
    CLI::App app{"Mean spectral densities of random matrix product chains: "
                 "analytic transforms cross-validated by Monte Carlo"};
    app.require_subcommand(1);

    RunConfig cfg;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--model", cfg.model_path, "model document path")->required();
        sub->add_option("--out", cfg.out_dir, "output directory")->required();
        sub->add_option("--seed", cfg.seed, "master seed (all randomness derives from it)");
        sub->add_option("--n", cfg.n_outer, "outer matrix dimension");
        sub->add_option("--samples", cfg.samples, "Monte Carlo sample count");
        sub->add_option("--grid", cfg.grid_spec, "grid spec lin:lo:hi:n or log:lo:hi:n, '+'-joined");
        sub->add_option("--workers", cfg.workers, "worker pool size (0 = all cores)");
        sub->add_option("--bins", cfg.bins, "histogram bin count");
        std::string entries = "gaussian";
        sub->add_option_function<std::string>(
               "--entries",
               [&cfg](const std::string& s) { cfg.entries = parse_entry_dist(s); },
               "ginibre entry law: gaussian|uniform|phase")
            ->default_str("gaussian");
        sub->add_flag("--save-spectra", cfg.save_spectra, "persist raw spectra (binary)");
    };
    for (const char* name : {"theory", "mc", "compare", "fit-erfc", "oracle"})
        add_common(app.add_subcommand(name));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    cfg.command = app.get_subcommands().front()->get_name();

    try {
        run(cfg);
    } catch (const Error& e) {
        ordered_json diag;
        diag["error"] = e.code_name();
        diag["message"] = e.what();
        std::cerr << diag.dump() << "\n";
        if (!cfg.out_dir.empty() && fs::exists(cfg.out_dir)) {
            std::ofstream out(fs::path(cfg.out_dir) / "diagnostics.json", std::ios::binary);
            if (out) out << diag.dump(2) << "\n";
        }
        return (e.code() == Errc::usage_error || e.code() == Errc::parse_error) ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "{\"error\":\"Internal\",\"message\":\"" << e.what() << "\"}\n";
        return 1;
    }
    return 0;
}

} // namespace prodspec
