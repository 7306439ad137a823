// tubecalc: reach certification, tube quadrature functionals, surface and
// domain PDE solves, and shape-sequence convergence experiments, driven by
// JSON shape descriptions.

#include <CLI11.hpp>

#include "tubecalc/runner.hpp"

namespace {

/// Reads --config <file> ahead of the full parse so explicit flags keep
/// precedence over file values over defaults.
std::string peek_config_path(int argc, char** argv) {
    for (int i = 1; i + 1 < argc; ++i)
        if (std::string(argv[i]) == "--config") return argv[i + 1];
    return {};
}

void add_common(CLI::App* sub, tubecalc::RunConfig& cfg) {
    sub->set_help_flag("--help", "print help");
    sub->add_option("--shape", cfg.shape_path, "shape description JSON file");
    sub->add_option("--out", cfg.out, "write the JSON report here as well");
    sub->add_option("--csv", cfg.csv, "write detail CSV here");
    sub->add_option("--threads", cfg.threads,
                    "worker threads (0: TUBECALC_THREADS env, then hardware)");
    sub->add_option("--seed", cfg.seed, "seed of the low-discrepancy samplers");
    sub->add_option("--n-samples", cfg.n_samples, "boundary sample count override");
    std::string ignored;
    sub->add_option("--config", ignored, "JSON file with defaults for any option");
}

}  // namespace

int main(int argc, char** argv) {
    tubecalc::RunConfig cfg;
    const std::string config_path = peek_config_path(argc, argv);
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) {
            std::cerr << "cannot open config file '" << config_path << "'\n";
            return 1;
        }
        nlohmann::json j;
        try {
            in >> j;
            cfg = tubecalc::RunConfig::from_json(j);
        } catch (const std::exception& e) {
            std::cerr << "bad config file: " << e.what() << "\n";
            return 1;
        }
    }

    CLI::App app{"signed-distance shape calculus on tubular neighborhoods"};
    app.require_subcommand(0, 1);
    // help stays on --help; -h is not registered so --h can carry the tube
    // half-width as documented
    app.set_help_flag("--help", "print help");

    auto* reach = app.add_subcommand("reach", "uniform-ball reach certification");
    add_common(reach, cfg);
    reach->add_option("--h", cfg.reach_h, "check this half-width (default: estimate reach)");
    reach->add_option("--tol-bisect", cfg.tol_bisect, "bisection tolerance");

    auto* functional = app.add_subcommand("functional", "geometric boundary functionals");
    add_common(functional, cfg);
    functional->add_option("--integrand", cfg.integrand,
                           "area | mean-curvature | willmore | normal-moment | "
                           "weighted-curvature | volume");
    functional->add_option("--h", cfg.h, "tube half-width (default: quarter reach)");
    functional->add_option("--spacing", cfg.spacing, "grid spacing (default: h/5)");

    auto* lb = app.add_subcommand("solve-lb", "Laplace-Beltrami solve on the boundary");
    add_common(lb, cfg);
    lb->add_option("--f", cfg.data_f, "surface data: zero | one | x | y | z | 3z2-1");
    lb->add_option("--h", cfg.h, "tube half-width");
    lb->add_option("--spacing", cfg.spacing, "grid spacing");
    lb->add_option("--eps-normal", cfg.eps_normal, "normal regularization weight");
    lb->add_option("--tol-cg", cfg.tol_cg, "relative solver tolerance");
    lb->add_option("--j2", cfg.j2, "reported functional of the solution");

    auto* poisson = app.add_subcommand("solve-poisson", "Dirichlet Poisson solve inside");
    add_common(poisson, cfg);
    poisson->add_option("--source", cfg.source, "right-hand side name");
    poisson->add_option("--dirichlet", cfg.dirichlet, "boundary data name");
    poisson->add_option("--spacing", cfg.spacing, "grid spacing (required)");
    poisson->add_option("--h", cfg.h, "tube half-width for boundary traces");
    poisson->add_option("--j3", cfg.j3, "trace functional");
    poisson->add_option("--trace-csv", cfg.trace_csv, "boundary trace CSV path");
    poisson->add_option("--tol-cg", cfg.tol_cg, "relative solver tolerance");

    auto* converge = app.add_subcommand("converge", "shape sequence convergence experiment");
    add_common(converge, cfg);
    converge->add_option("--family", cfg.family,
                         "ellipsoid_to_sphere | harmonic_decay | radius_ramp");
    converge->add_option("--n-first", cfg.n_first, "first sequence index");
    converge->add_option("--n-last", cfg.n_last, "last sequence index");
    converge->add_option("--h", cfg.h, "tube half-width");
    converge->add_option("--spacing", cfg.spacing, "grid spacing");
    converge->add_option("--integrand", cfg.integrand, "tracked geometric functional");
    converge->add_option("--f", cfg.data_f, "surface data of the tracked field functional");
    converge->add_option("--tol-lsc", cfg.tol_lsc, "semicontinuity slack for F1");
    converge->add_option("--tol-lsc-f2", cfg.tol_lsc_f2, "semicontinuity slack for F2");
    converge->add_option("--jac-threshold", cfg.jac_threshold, "final Jacobian deviation");
    converge->add_option("--cn-threshold", cfg.cn_threshold, "final correction norm");
    converge->add_option("--perim-threshold", cfg.perim_threshold,
                         "final perimeter gap (0: 1% of the limit)");
    converge->add_option("--vol-threshold", cfg.vol_threshold,
                         "final volume gap (0: 1% of the limit)");

    CLI11_PARSE(app, argc, argv);

    for (CLI::App* sub : {reach, functional, lb, poisson, converge})
        if (sub->parsed()) cfg.command = sub->get_name();
    if (cfg.command.empty()) {
        std::cerr << app.help();
        return 1;
    }
    return tubecalc::run(cfg, std::cout, std::cerr);
}
