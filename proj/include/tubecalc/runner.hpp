#pragma once

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "tubecalc/convergence.hpp"
#include "tubecalc/domain_pde.hpp"
#include "tubecalc/functionals.hpp"
#include "tubecalc/grid.hpp"
#include "tubecalc/reach.hpp"
#include "tubecalc/surface_pde.hpp"

namespace tubecalc {

/// Resolved configuration of one CLI run. Precedence: explicit flags over
/// config file over built-in defaults; resolution happens in the CLI layer,
/// run() takes the final values.
struct RunConfig {
    std::string command;
    std::string shape_path;
    double h = 0.0;
    double spacing = 0.0;
    double reach_h = 0.0;      // reach: check this h instead of estimating
    double tol_bisect = 0.01;
    std::string integrand = "area";
    std::string data_f = "z";
    std::string source = "one";
    std::string dirichlet = "zero";
    std::string j2 = "grad-energy";
    std::string j3 = "normal-flux-squared";
    std::string family = "ellipsoid_to_sphere";
    int n_first = 1;
    int n_last = 8;
    std::string out;       // JSON report path; always echoed to stdout
    std::string csv;       // detail CSV path (command dependent)
    std::string trace_csv; // solve-poisson: boundary trace CSV
    int threads = 0;       // 0: TUBECALC_THREADS env, then hardware
    std::uint64_t seed = 0;
    double eps_normal = 1.0;
    double tol_cg = 1e-8;
    double tol_lsc = 0.5;
    double tol_lsc_f2 = 0.05;
    double jac_threshold = 0.02;
    double cn_threshold = 0.05;
    double perim_threshold = 0.0;  // 0: 1% of the limit perimeter
    double vol_threshold = 0.0;
    int n_samples = 0;

    nlohmann::json to_json() const {
        // thread count is an execution detail with no effect on results and
        // is deliberately not part of the provenance record
        return {{"command", command},
                {"shape", shape_path},
                {"h", h},
                {"spacing", spacing},
                {"reach_h", reach_h},
                {"tol_bisect", tol_bisect},
                {"integrand", integrand},
                {"f", data_f},
                {"source", source},
                {"dirichlet", dirichlet},
                {"j2", j2},
                {"j3", j3},
                {"family", family},
                {"n_first", n_first},
                {"n_last", n_last},
                {"seed", seed},
                {"eps_normal", eps_normal},
                {"tol_cg", tol_cg},
                {"tol_lsc", tol_lsc},
                {"tol_lsc_f2", tol_lsc_f2},
                {"jac_threshold", jac_threshold},
                {"cn_threshold", cn_threshold},
                {"perim_threshold", perim_threshold},
                {"vol_threshold", vol_threshold},
                {"n_samples", n_samples}};
    }

    static RunConfig from_json(const nlohmann::json& j);
};

inline RunConfig RunConfig::from_json(const nlohmann::json& j) {
    RunConfig c;
    auto get = [&](const char* key, auto& slot) {
        if (j.contains(key)) slot = j.at(key).get<std::decay_t<decltype(slot)>>();
    };
    get("command", c.command);
    get("shape", c.shape_path);
    get("h", c.h);
    get("spacing", c.spacing);
    get("reach_h", c.reach_h);
    get("tol_bisect", c.tol_bisect);
    get("integrand", c.integrand);
    get("f", c.data_f);
    get("source", c.source);
    get("dirichlet", c.dirichlet);
    get("j2", c.j2);
    get("j3", c.j3);
    get("family", c.family);
    get("n_first", c.n_first);
    get("n_last", c.n_last);
    get("out", c.out);
    get("csv", c.csv);
    get("trace_csv", c.trace_csv);
    get("seed", c.seed);
    get("eps_normal", c.eps_normal);
    get("tol_cg", c.tol_cg);
    get("tol_lsc", c.tol_lsc);
    get("tol_lsc_f2", c.tol_lsc_f2);
    get("jac_threshold", c.jac_threshold);
    get("cn_threshold", c.cn_threshold);
    get("perim_threshold", c.perim_threshold);
    get("vol_threshold", c.vol_threshold);
    get("n_samples", c.n_samples);
    return c;
}

/// Named pointwise data usable for f, g and sources: zero, one, x, y, z
/// (last coordinate), 3z2-1.
template <int D>
ScalarFn<D> named_scalar(const std::string& name) {
    if (name == "zero") return [](const Vec<D>&) { return 0.0; };
    if (name == "one") return [](const Vec<D>&) { return 1.0; };
    if (name == "x") return [](const Vec<D>& x) { return x[0]; };
    if (name == "y") return [](const Vec<D>& x) { return x[1]; };
    if (name == "z") return [](const Vec<D>& x) { return x[D - 1]; };
    if (name == "3z2-1")
        return [](const Vec<D>& x) { return 3.0 * x[D - 1] * x[D - 1] - 1.0; };
    throw InvalidArgument("unknown data function '" + name +
                          "' (zero, one, x, y, z, 3z2-1)");
}

template <int D>
std::function<double(const Vec<D>&, const Vec<D>&, double, const Vec<D>&)> named_field_functional(
    const std::string& name) {
    if (name == "grad-energy")
        return [](const Vec<D>&, const Vec<D>&, double, const Vec<D>& g) {
            return g.squaredNorm();
        };
    if (name == "squared")
        return [](const Vec<D>&, const Vec<D>&, double v, const Vec<D>&) { return v * v; };
    if (name == "one")
        return [](const Vec<D>&, const Vec<D>&, double, const Vec<D>&) { return 1.0; };
    if (name == "normal-flux-squared")
        return [](const Vec<D>& x, const Vec<D>& nu, double, const Vec<D>& g) {
            (void)x;
            const double dn = g.dot(nu);
            return dn * dn;
        };
    throw InvalidArgument("unknown field functional '" + name +
                          "' (grad-energy, squared, one, normal-flux-squared)");
}

namespace detail {

inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("TUBECALC_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return hardware_threads();
}

inline ShapeSpec load_shape(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open shape file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ParseError(std::string("shape file is not valid JSON: ") + e.what());
    }
    return ShapeSpec::from_json(j);
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw Error("io", "cannot write '" + path + "'");
    out << text;
}

template <int D>
nlohmann::json vec_json(const Vec<D>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (int d = 0; d < D; ++d) a.push_back(v[d]);
    return a;
}

template <int D>
nlohmann::json run_reach(const ShapeSpec& shape, const RunConfig& cfg, int threads) {
    ReachOptions ro;
    ro.n_samples = cfg.n_samples;
    ro.seed = cfg.seed;
    ro.threads = threads;
    nlohmann::json results;
    if (cfg.reach_h > 0.0) {
        const auto cert = uniform_ball_check<D>(shape, cfg.reach_h, ro);
        results["h"] = cert.h_tested;
        results["passed"] = cert.passed;
        results["worst_margin"] = cert.worst_margin;
        results["worst_point"] = vec_json<D>(cert.worst_point);
        results["n_samples"] = cert.n_samples;
    } else {
        const double reach = estimate_reach<D>(shape, cfg.tol_bisect, ro);
        results["reach"] = reach;
        results["tol_bisect"] = cfg.tol_bisect;
        const auto cert = uniform_ball_check<D>(shape, std::max(reach, cfg.tol_bisect), ro);
        results["h"] = cert.h_tested;
        results["passed"] = cert.passed;
        results["worst_margin"] = cert.worst_margin;
        results["worst_point"] = vec_json<D>(cert.worst_point);
        results["n_samples"] = cert.n_samples;
    }
    return results;
}

template <int D>
nlohmann::json run_functional(const ShapeSpec& shape, const RunConfig& cfg, int threads) {
    QuadParams qp;
    qp.h = cfg.h;
    qp.spacing = cfg.spacing;
    qp.threads = threads;
    qp.seed = cfg.seed;
    nlohmann::json results;
    if (cfg.integrand == "volume") {
        const QuadParams rqp = resolve_quad_params<D>(shape, qp);
        VolumeOptions vo;
        vo.threads = threads;
        results["value"] = volume<D>(shape, rqp.spacing, vo);
        results["spacing"] = rqp.spacing;
        results["integrand"] = cfg.integrand;
        return results;
    }
    const QuadParams rqp = resolve_quad_params<D>(shape, qp);
    TubeOptions to;
    to.threads = threads;
    const auto tube = build_tube<D>(shape, rqp.h, rqp.spacing, to);
    const IntegrandSpec spec = IntegrandSpec::named(cfg.integrand, D);
    results["value"] = eval_F1<D>(tube, spec, threads);
    results["integrand"] = cfg.integrand;
    results["h"] = rqp.h;
    results["spacing"] = rqp.spacing;
    results["tube_nodes"] = tube.nodes.size();
    results["surface_measure"] = tube.surface_measure();
    if (!cfg.csv.empty()) {
        std::ostringstream os;
        os.precision(17);
        dump_tube_csv(tube, os);
        write_text(cfg.csv, os.str());
    }
    return results;
}

template <int D>
nlohmann::json run_solve_lb(const ShapeSpec& shape, const RunConfig& cfg, int threads) {
    QuadParams qp;
    qp.h = cfg.h;
    qp.spacing = cfg.spacing;
    qp.threads = threads;
    const QuadParams rqp = resolve_quad_params<D>(shape, qp);
    TubeOptions to;
    to.threads = threads;
    auto tube = std::make_shared<const TubeQuadrature<D>>(
        build_tube<D>(shape, rqp.h, rqp.spacing, to));
    LbParams lp;
    lp.eps_normal = cfg.eps_normal;
    lp.tol_cg = cfg.tol_cg;
    lp.threads = threads;
    const auto [field, rep] = solve_lb<D>(tube, named_scalar<D>(cfg.data_f), lp);
    nlohmann::json results;
    results["dirichlet"] = rep.dirichlet;
    results["load"] = rep.load;
    results["total"] = rep.total;
    results["normal_penalty"] = rep.normal_penalty;
    results["cg_iters"] = rep.cg_iters;
    results["residual"] = rep.residual;
    results["tube_nodes"] = tube->nodes.size();
    results["h"] = rqp.h;
    results["spacing"] = rqp.spacing;
    results["j2"] = cfg.j2;
    results["j2_value"] =
        eval_F2<D>(field, named_field_functional<D>(cfg.j2), cfg.eps_normal, threads);
    if (!cfg.csv.empty()) {
        std::ostringstream os;
        os.precision(17);
        for (int d = 0; d < D; ++d) os << "y" << d << ",";
        os << "t,";
        for (int d = 0; d < D; ++d) os << "x" << d << ",";
        os << "value\n";
        for (std::size_t i = 0; i < field.values.size(); ++i) {
            const auto& nd = tube->nodes[i];
            for (int d = 0; d < D; ++d) os << nd.y[d] << ",";
            os << nd.t << ",";
            for (int d = 0; d < D; ++d) os << nd.x[d] << ",";
            os << field.values[i] << "\n";
        }
        write_text(cfg.csv, os.str());
    }
    return results;
}

template <int D>
nlohmann::json run_solve_poisson(const ShapeSpec& shape, const RunConfig& cfg, int threads) {
    if (!(cfg.spacing > 0.0))
        throw InvalidArgument("solve-poisson requires --spacing");
    PoissonParams pp;
    pp.threads = threads;
    if (cfg.tol_cg > 0.0 && cfg.tol_cg < 1e-8) pp.tol_cg = cfg.tol_cg;
    const auto field = solve_poisson_dirichlet<D>(shape, named_scalar<D>(cfg.source),
                                                  named_scalar<D>(cfg.dirichlet), cfg.spacing,
                                                  pp);
    nlohmann::json results;
    results["interior_nodes"] = field.interior.size();
    results["cg_iters"] = field.cg_iters;
    results["residual"] = field.residual;
    results["spacing"] = cfg.spacing;
    double umin = std::numeric_limits<double>::max(), umax = -umin;
    for (double v : field.values) {
        umin = std::min(umin, v);
        umax = std::max(umax, v);
    }
    results["u_min"] = umin;
    results["u_max"] = umax;
    if (!cfg.csv.empty()) {
        std::ostringstream os;
        os.precision(17);
        for (int d = 0; d < D; ++d) os << "x" << d << ",";
        os << "value\n";
        for (std::size_t i = 0; i < field.interior.size(); ++i) {
            const Vec<D> x = field.grid.point(field.interior[i]);
            for (int d = 0; d < D; ++d) os << x[d] << ",";
            os << field.values[i] << "\n";
        }
        write_text(cfg.csv, os.str());
    }
    if (cfg.h > 0.0) {
        TubeOptions to;
        to.threads = threads;
        const double tube_spacing = cfg.spacing < 0.5 * cfg.h ? cfg.spacing : cfg.h / 4.0;
        const auto quad = build_tube<D>(shape, cfg.h, tube_spacing, to);
        const auto tr = boundary_trace<D>(field, quad, threads);
        std::vector<double> vals(quad.nodes.size());
        const auto j3 = named_field_functional<D>(cfg.j3);
        for (std::size_t i = 0; i < quad.nodes.size(); ++i)
            vals[i] = j3(quad.nodes[i].x, quad.nodes[i].nu, tr.u[i], tr.grad[i]);
        results["j3"] = cfg.j3;
        results["j3_value"] = surface_integral_values<D>(quad, vals);
        if (!cfg.trace_csv.empty()) {
            std::ostringstream os;
            os.precision(17);
            for (int d = 0; d < D; ++d) os << "x" << d << ",";
            os << "u,";
            for (int d = 0; d < D; ++d) os << "du" << d << (d + 1 < D ? "," : "\n");
            for (std::size_t i = 0; i < quad.nodes.size(); ++i) {
                for (int d = 0; d < D; ++d) os << quad.nodes[i].x[d] << ",";
                os << tr.u[i] << ",";
                for (int d = 0; d < D; ++d)
                    os << tr.grad[i][d] << (d + 1 < D ? "," : "\n");
            }
            write_text(cfg.trace_csv, os.str());
        }
    }
    return results;
}

inline nlohmann::json run_converge(const RunConfig& cfg, int threads,
                                   nlohmann::json& assertions, bool& any_failed) {
    const auto seq = make_sequence(sequence_family_from_string(cfg.family), cfg.n_first,
                                   cfg.n_last);
    QuadParams qp;
    qp.h = cfg.h;
    qp.spacing = cfg.spacing;
    qp.threads = threads;
    qp.seed = cfg.seed;
    SequenceConfig scfg;
    scfg.seed = cfg.seed;
    scfg.eps_normal = cfg.eps_normal;
    scfg.tol_cg = cfg.tol_cg;
    if (cfg.n_samples > 0) scfg.surface_samples = cfg.n_samples;
    scfg.f1 = IntegrandSpec::named(cfg.integrand == "area" ? "willmore" : cfg.integrand, 3);
    scfg.f2_data = named_scalar<3>(cfg.data_f);
    SequenceThresholds thr;
    thr.jac_dev = cfg.jac_threshold;
    thr.cn_norm = cfg.cn_threshold;
    thr.lsc_f1 = cfg.tol_lsc;
    thr.lsc_f2 = cfg.tol_lsc_f2;
    thr.perim_gap = cfg.perim_threshold;
    thr.vol_gap = cfg.vol_threshold;
    const auto rep = run_sequence_experiment<3>(seq, qp, scfg, thr);

    nlohmann::json results;
    results["family"] = cfg.family;
    results["r0"] = rep.r0;
    results["hessian_bound"] = rep.hess_bound;
    results["perimeter_limit"] = rep.perim_limit;
    results["volume_limit"] = rep.vol_limit;
    results["F1_limit"] = rep.F1_limit;
    results["F2_limit"] = rep.F2_limit;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : rep.rows) {
        rows.push_back({{"n", r.n},
                        {"sup_b", r.sup_b},
                        {"sup_gradb", r.sup_gradb},
                        {"hess_sup", r.hess_sup},
                        {"perim_gap", r.perim_gap},
                        {"vol_gap", r.vol_gap},
                        {"jac_tau_dev", r.jac_tau_dev},
                        {"cn_norm", r.cn_norm},
                        {"F1", r.F1},
                        {"F2", r.F2},
                        {"inside_components", r.inside_components}});
    }
    results["rows"] = rows;
    for (const auto& a : rep.assertions) {
        assertions.push_back({{"lemma", a.lemma},
                              {"passed", a.passed},
                              {"value", a.value},
                              {"threshold", a.threshold}});
        if (!a.passed) any_failed = true;
    }
    if (!cfg.csv.empty()) {
        std::ostringstream os;
        os.precision(17);
        os << "n,sup_b,sup_gradb,hess_sup,perim_gap,vol_gap,jac_tau_dev,cn_norm,F1,F2,"
              "inside_components\n";
        for (const auto& r : rep.rows)
            os << r.n << "," << r.sup_b << "," << r.sup_gradb << "," << r.hess_sup << ","
               << r.perim_gap << "," << r.vol_gap << "," << r.jac_tau_dev << "," << r.cn_norm
               << "," << r.F1 << "," << r.F2 << "," << r.inside_components << "\n";
        write_text(cfg.csv, os.str());
    }
    return results;
}

}  // namespace detail

/// Executes one configured pipeline and writes the JSON report. Returns the
/// process exit status: 0 success, 1 input or convergence error, 2 a
/// numerically checked property failed.
inline int run(const RunConfig& cfg, std::ostream& out, std::ostream& log) {
    nlohmann::json report;
    report["command"] = cfg.command;
    report["config"] = cfg.to_json();
    int status = 0;
    try {
        const int threads = detail::resolve_threads(cfg.threads);
        nlohmann::json assertions = nlohmann::json::array();
        bool any_failed = false;
        nlohmann::json results;
        if (cfg.command == "converge") {
            results = detail::run_converge(cfg, threads, assertions, any_failed);
        } else {
            const ShapeSpec shape = detail::load_shape(cfg.shape_path);
            auto dispatch = [&](auto dim_tag) {
                constexpr int D = decltype(dim_tag)::value;
                if (cfg.command == "reach") return detail::run_reach<D>(shape, cfg, threads);
                if (cfg.command == "functional")
                    return detail::run_functional<D>(shape, cfg, threads);
                if (cfg.command == "solve-lb")
                    return detail::run_solve_lb<D>(shape, cfg, threads);
                if (cfg.command == "solve-poisson")
                    return detail::run_solve_poisson<D>(shape, cfg, threads);
                throw InvalidArgument("unknown command '" + cfg.command + "'");
            };
            results = shape.dim == 2 ? dispatch(std::integral_constant<int, 2>{})
                                     : dispatch(std::integral_constant<int, 3>{});
        }
        report["results"] = results;
        report["assertions"] = assertions;
        if (any_failed) status = 2;
    } catch (const Error& e) {
        report["error"] = {{"code", e.code()}, {"message", e.what()}};
        status = e.code() == "assertion_failure" ? 2 : 1;
    } catch (const std::exception& e) {
        report["error"] = {{"code", "internal"}, {"message", e.what()}};
        status = 1;
    }
    const std::string text = report.dump(2) + "\n";
    out << text;
    if (!cfg.out.empty()) {
        try {
            detail::write_text(cfg.out, text);
        } catch (const Error& e) {
            log << "report write failed: " << e.what() << "\n";
            if (status == 0) status = 1;
        }
    }
    return status;
}

}  // namespace tubecalc
