#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "nlsys/config.hpp"
#include "nlsys/gnineq.hpp"
#include "nlsys/io.hpp"
#include "nlsys/scattering.hpp"

namespace nlsys {

enum ExitCode { exit_pass = 0, exit_check_failed = 1, exit_numerical = 2 };

/// One enabled invariant check: passed iff value <= limit (or the flag is true for boolean checks).
struct Check {
    std::string name;
    bool passed = false;
    double value = 0.0;
    double limit = 0.0;
    std::string detail;
};

struct RunOutcome {
    int exit_code = exit_pass;
    std::vector<Check> checks;
    json summary;
    std::vector<std::string> files;
    std::string message;

    const Check* find(const std::string& name) const {
        for (const auto& c : checks)
            if (c.name == name) return &c;
        return nullptr;
    }
};

namespace detail {

inline Check bound_check(std::string name, double value, double limit, std::string detail = {}) {
    return {std::move(name), value <= limit, value, limit, std::move(detail)};
}

inline Check flag_check(std::string name, bool ok, std::string detail = {}) {
    return {std::move(name), ok, ok ? 1.0 : 0.0, 1.0, std::move(detail)};
}

inline json checks_json(const std::vector<Check>& checks) {
    json a = json::array();
    for (const auto& c : checks) {
        json o = {{"name", c.name}, {"passed", c.passed}, {"value", c.value}, {"limit", c.limit}};
        if (!c.detail.empty()) o["detail"] = c.detail;
        a.push_back(o);
    }
    return a;
}

/// Non-finite values are stored as null so the summary stays valid JSON.
inline json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline bool supports_interaction(const MorawetzWeight& w, int d) {
    using K = MorawetzWeight::Kind;
    return w.kind == K::abs_distance || w.kind == K::constant || (w.kind == K::erf_smoothed && d == 1);
}

/// Per-snapshot observables of the simulate experiment; the column set depends only on the config.
class DiagnosticsRecorder {
public:
    DiagnosticsRecorder(const RunConfig& c)
        : weight_(c.make_weight()), interaction_(supports_interaction(weight_, c.grid.dim)), acc_(c.grid.dim),
          table_(columns(c)) {
        const auto pair = admissible_pair(c.coupling.exponent, c.grid.dim);
        if (pair.admissible) strichartz_.emplace(pair);
    }

    void record(const SystemState& s) {
        std::vector<double> row{s.time};
        for (int mu = 0; mu < s.components(); ++mu) row.push_back(mass(s, mu));
        const auto e = energy(s);
        row.insert(row.end(), {e.kinetic, e.potential, e.total, lq_norm(s, 4.0).aggregate,
                               lq_norm(s, std::numeric_limits<double>::infinity()).aggregate, sup_cube_mass(s),
                               h1_norm(s), virial_V(s, weight_), virial_Vdot(s, weight_)});
        if (interaction_) {
            const auto r = interaction_report(s, weight_);
            row.insert(row.end(), {r.I, r.Idot, r.N_term, r.rhs_lower});
        }
        acc_.add(s);
        for (const auto& en : acc_.entries()) row.push_back(en.total);
        if (strichartz_) {
            strichartz_->add(s);
            row.push_back(strichartz_->integral());
        }
        row.push_back(boundary_mass_fraction(s));
        table_.add_row(row);
    }

    const CsvTable& table() const { return table_; }
    const SpacetimeAccumulators& accumulators() const { return acc_; }
    const std::optional<StrichartzAccumulator>& strichartz() const { return strichartz_; }

    static std::vector<std::string> columns(const RunConfig& c) {
        std::vector<std::string> cols{"t"};
        for (int mu = 1; mu <= c.coupling.components; ++mu) cols.push_back("mass_" + std::to_string(mu));
        cols.insert(cols.end(), {"kinetic", "potential", "energy", "l4_norm", "linf_norm", "sup_cube_mass", "h1_norm",
                                 "V", "Vdot"});
        if (supports_interaction(c.make_weight(), c.grid.dim)) cols.insert(cols.end(), {"I", "Idot", "N_term", "rhs_lower"});
        const SpacetimeAccumulators acc(c.grid.dim);
        for (const auto& n : acc.entries()) cols.push_back("acc_" + n.name);
        if (admissible_pair(c.coupling.exponent, c.grid.dim).admissible) cols.push_back("strichartz");
        cols.push_back("boundary_fraction");
        return cols;
    }

private:
    MorawetzWeight weight_;
    bool interaction_;
    SpacetimeAccumulators acc_;
    std::optional<StrichartzAccumulator> strichartz_;
    CsvTable table_;
};

inline std::string path_in(const RunConfig& c, const std::string& name) {
    return (std::filesystem::path(c.out_dir) / name).string();
}

inline void finish(const RunConfig& c, RunOutcome& out, const CsvTable* table, double wall) {
    bool ok = true;
    std::string failing;
    for (const auto& ch : out.checks)
        if (!ch.passed) {
            ok = false;
            failing += (failing.empty() ? "" : ", ") + ch.name;
        }
    if (out.exit_code == exit_pass && !ok) {
        out.exit_code = exit_check_failed;
        out.message = "failed checks: " + failing + (out.message.empty() ? "" : "; " + out.message);
    }
    out.summary["config"] = c.effective;
    out.summary["checks"] = checks_json(out.checks);
    out.summary["exit_code"] = out.exit_code;
    if (!out.message.empty()) out.summary["message"] = out.message;
    out.summary["wall_time"] = wall;
    std::filesystem::create_directories(c.out_dir);
    if (table) {
        const auto p = path_in(c, "diagnostics.csv");
        table->write(p);
        out.files.push_back(p);
    }
    const auto sp = path_in(c, "summary.json");
    std::ofstream(sp) << out.summary.dump(2) << "\n";
    out.files.push_back(sp);
}

inline RunOutcome run_simulate(const RunConfig& c, std::ostream& log, CsvTable& table) {
    RunOutcome out;
    const auto grid = Grid::create(c.grid);
    const auto s0 = make_state(grid, c.coupling, c.data);
    DiagnosticsRecorder rec(c);
    std::vector<double> m0(static_cast<std::size_t>(c.coupling.components)), drift(m0.size(), 0.0);
    for (int mu = 0; mu < c.coupling.components; ++mu) m0[static_cast<std::size_t>(mu)] = mass(s0, mu);
    const double E0 = energy(s0).total;
    const double h10 = h1_norm(s0);
    // ||u||_{H^1}^2 = mass + kinetic <= mass + E since the potential is nonnegative.
    const double h1_cap = total_mass(s0) + E0;
    double energy_drift = 0.0, h1_sq_max = 0.0, h1_max = 0.0;
    const auto res = evolve(s0, c.step, [&](const SystemState& s, int) {
        rec.record(s);
        for (int mu = 0; mu < s.components(); ++mu) {
            const auto k = static_cast<std::size_t>(mu);
            drift[k] = std::max(drift[k], std::abs(mass(s, mu) - m0[k]) / std::max(m0[k], 1e-300));
        }
        energy_drift = std::max(energy_drift, std::abs(energy(s).total - E0) / std::max(std::abs(E0), 1e-300));
        double sq = 0.0;
        for (const auto& f : s.fields) sq += h1_norm_squared(f);
        h1_sq_max = std::max(h1_sq_max, sq);
        h1_max = std::max(h1_max, h1_norm(s));
    });
    out.checks.push_back(bound_check("mass_drift", *std::max_element(drift.begin(), drift.end()), c.mass_tol));
    out.checks.push_back(bound_check("energy_drift", energy_drift, c.energy_tol));
    out.checks.push_back(bound_check("h1_energy_bound", h1_sq_max, (1.0 + 1e-6) * h1_cap,
                                     "sum ||u(t)||_H1^2 <= sum mass + E(0)"));
    out.checks.push_back(flag_check("boundary_mass", res.valid, res.note));
    json totals;
    for (const auto& e : rec.accumulators().entries()) totals[e.name] = e.total;
    if (rec.strichartz()) {
        totals["strichartz_integral"] = rec.strichartz()->integral();
        totals["strichartz_norm"] = rec.strichartz()->norm();
    }
    out.summary["totals"] = totals;
    out.summary["diagnostics"] = {{"steps", res.steps},
                                  {"rows", rec.table().rows().size()},
                                  {"max_boundary_fraction", res.max_boundary_fraction},
                                  {"h1_growth", h1_max / h10},
                                  {"energy_initial", E0},
                                  {"energy_final", energy(res.final_state).total}};
    for (const auto& w : c.coupling.warnings()) out.summary["warnings"].push_back(w);
    log << "simulate: " << res.steps << " steps, " << rec.table().rows().size() << " rows\n";
    out.summary["experiment"] = "simulate";
    table = rec.table();
    return out;
}

struct IdentityRun {
    std::vector<IdentitySample> rows;
    EvolveResult result;
};

inline IdentityRun identity_trajectory(const SystemState& s0, const StepParams& step, const MorawetzWeight& virial,
                                       const MorawetzWeight& inter) {
    IdentityRun r;
    r.result = evolve(s0, step, [&](const SystemState& s, int) {
        IdentitySample x;
        x.t = s.time;
        x.V = virial_V(s, virial);
        x.Vdot = virial_Vdot(s, virial);
        x.Vddot = virial_Vddot(s, virial).total;
        const auto ir = interaction_report(s, inter);
        x.I = ir.I;
        x.Idot = ir.Idot;
        x.rhs_lower = ir.rhs_lower;
        x.N_term = ir.N_term;
        x.rhs_lower_alt = ir.rhs_lower_alt;
        r.rows.push_back(x);
    });
    return r;
}

inline RunOutcome run_verify(const RunConfig& c, std::ostream& log, CsvTable& table) {
    using K = MorawetzWeight::Kind;
    RunOutcome out;
    const auto w = c.make_weight();
    // The virial identities need a smooth weight, the interaction ones a supported one; fall back to x^2 and |x|.
    const auto virial = (w.kind == K::smooth_radial || w.kind == K::erf_smoothed) ? w : MorawetzWeight::quadratic();
    const auto inter = supports_interaction(w, c.grid.dim) ? w : MorawetzWeight::abs_distance();
    const auto grid = Grid::create(c.grid);
    const auto s0 = make_state(grid, c.coupling, c.data);
    const auto fine = identity_trajectory(s0, c.step, virial, inter);
    if (fine.rows.size() < 3) throw UsageError("verify-identities needs at least 3 snapshots; raise t_final");
    FdCalibration cal;
    if (c.calibrate) {
        StepParams coarse = c.step;
        coarse.dt = 2.0 * c.step.dt;
        const auto cr = identity_trajectory(s0, coarse, virial, inter);
        if (cr.rows.size() >= 3) cal = FdCalibration::from_coarse(identity_errors(cr.rows), coarse.dt);
    }
    const auto idc = check_identities(fine.rows, cal, c.step.dt);
    const auto ineq = interaction_inequality_check(fine.rows, cal.idot, c.step.dt);
    out.checks.push_back(bound_check("vdot_identity", idc.errors.vdot, idc.vdot_tol));
    out.checks.push_back(bound_check("vddot_identity", idc.errors.vddot, idc.vddot_tol));
    out.checks.push_back(bound_check("idot_identity", idc.errors.idot, idc.idot_tol));
    out.checks.push_back({"interaction_inequality", ineq.pointwise_ok, -ineq.min_margin, 0.0, "min margin Iddot_fd - rhs_lower + tol"});
    if (ineq.min_alt_margin)
        out.checks.push_back({"collapsed_inequality", ineq.alt_ok, -*ineq.min_alt_margin, 0.0, "delta-collapsed lower bound"});
    out.checks.push_back({"integrated_inequality", ineq.integrated_ok, ineq.rhs_integral - ineq.idot_increment,
                          ineq.integrated_tol, "int rhs_lower - [Idot]"});
    out.checks.push_back(flag_check("boundary_mass", fine.result.valid, fine.result.note));

    const bool alt = fine.rows.front().rhs_lower_alt.has_value();
    std::vector<std::string> cols{"t", "V", "Vdot", "Vddot", "I", "Idot", "N_term", "rhs_lower"};
    if (alt) cols.push_back("rhs_lower_alt");
    cols.push_back("Iddot_fd");
    table = CsvTable(cols);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t i = 0; i < fine.rows.size(); ++i) {
        const auto& r = fine.rows[i];
        std::vector<double> row{r.t, r.V, r.Vdot, r.Vddot, r.I, r.Idot, r.N_term, r.rhs_lower};
        if (alt) row.push_back(r.rhs_lower_alt.value_or(nan));
        row.push_back(i >= 1 && i < ineq.points.size() + 1 ? ineq.points[i - 1].Iddot_fd : nan);
        table.add_row(row);
    }
    out.summary["experiment"] = "verify-identities";
    out.summary["weights"] = {{"virial", virial.name()}, {"interaction", inter.name()}};
    out.summary["calibration"] = {{"vdot", cal.vdot}, {"vddot", cal.vddot}, {"idot", cal.idot}};
    out.summary["totals"] = {{"idot_increment", ineq.idot_increment}, {"rhs_integral", ineq.rhs_integral}};
    log << "verify-identities: " << fine.rows.size() << " snapshots, fd errors vdot " << idc.errors.vdot << " vddot "
        << idc.errors.vddot << " idot " << idc.errors.idot << "\n";
    return out;
}

inline RunOutcome run_scatter(const RunConfig& c, std::ostream& log, CsvTable& table) {
    RunOutcome out;
    const auto grid = Grid::create(c.grid);
    const auto s0 = make_state(grid, c.coupling, c.data);
    const double m0 = total_mass(s0);
    std::vector<SystemState> tail;
    std::optional<StrichartzAccumulator> acc;
    if (const auto pair = admissible_pair(c.coupling.exponent, c.grid.dim); pair.admissible) acc.emplace(pair);
    table = CsvTable(acc ? std::vector<std::string>{"t", "mass", "energy", "l4_norm", "strichartz"}
                         : std::vector<std::string>{"t", "mass", "energy", "l4_norm"});
    const auto res = evolve(s0, c.step, [&](const SystemState& s, int) {
        std::vector<double> row{s.time, total_mass(s), energy(s).total, lq_norm(s, 4.0).aggregate};
        if (acc) {
            acc->add(s);
            row.push_back(acc->integral());
        }
        table.add_row(row);
        if (s.time >= c.tail_start - 1e-9) tail.push_back(s);
    });
    if (tail.empty()) throw UsageError("scatter: no snapshots at or after tail_start");
    const auto sr = asymptotic_profile(tail, +1, c.tol);
    const double pm = [&] {
        double m = 0.0;
        for (const auto& f : sr.profile) m += physical_norm_squared(f);
        return m;
    }();
    const double mT = total_mass(res.final_state);
    out.checks.push_back(flag_check("profile_converged", sr.converged, sr.diagnostic));
    out.checks.push_back(bound_check("profile_mass", std::abs(pm - mT) / mT, 1e-6));
    out.checks.push_back(bound_check("mass_drift", std::abs(mT - m0) / m0, c.mass_tol));
    out.checks.push_back(flag_check("boundary_mass", res.valid, res.note));
    json resid = json::array();
    for (const auto& r : sr.cauchy_residuals) resid.push_back({{"t1", r.t1}, {"t2", r.t2}, {"residual", r.residual}});
    out.summary["experiment"] = "scatter";
    out.summary["cauchy_residuals"] = resid;
    out.summary["totals"] = {{"profile_mass", pm}, {"trajectory_mass", mT}};
    if (acc) {
        out.summary["totals"]["strichartz_integral"] = acc->integral();
        out.summary["totals"]["strichartz_norm"] = acc->norm();
    }
    for (const auto& w : c.coupling.warnings()) out.summary["warnings"].push_back(w);
    std::filesystem::create_directories(c.out_dir);
    const auto fp = path_in(c, "profile.fld");
    fieldfile::write(fp, sr.profile);
    out.files.push_back(fp);
    log << "scatter: " << tail.size() << " tail snapshots, converged " << sr.converged << "\n";
    return out;
}

inline RunOutcome run_wave_op(const RunConfig& c, std::ostream& log, CsvTable& table) {
    RunOutcome out;
    const auto grid = Grid::create(c.grid);
    const auto profile = make_state(grid, c.coupling, c.data);
    const auto wo = wave_operator(profile.fields, c.coupling, c.step.t_final, c.quadrature_nodes, c.tol, c.max_iter);
    table = CsvTable({"iteration", "residual"});
    for (std::size_t i = 0; i < wo.residuals.size(); ++i) table.add_row({static_cast<double>(i + 1), wo.residuals[i]});
    out.checks.push_back({"fixed_point_converged", wo.converged, wo.residuals.empty() ? 0.0 : wo.residuals.back(), c.tol,
                          wo.message});
    if (!wo.converged) out.message = wo.diverged ? "wave operator diverged: " + wo.message : wo.message;
    out.summary["experiment"] = "wave-op";
    for (const auto& w : c.coupling.warnings()) out.summary["warnings"].push_back(w);
    out.summary["convergence"] = {{"iterations", wo.iterations},
                                  {"converged", wo.converged},
                                  {"diverged", wo.diverged},
                                  {"contraction_rate", number(contraction_rate(wo.residuals))}};
    out.summary["totals"] = {{"profile_mass", total_mass(profile)}, {"state_mass", total_mass(wo.state)},
                             {"profile_distance_h1", h1_distance(wo.state.fields, profile.fields)}};
    std::filesystem::create_directories(c.out_dir);
    const auto fp = path_in(c, "profile.fld");
    fieldfile::write(fp, profile.fields);
    const auto sp = path_in(c, "state.fld");
    fieldfile::write(sp, wo.state.fields);
    out.files.push_back(fp);
    out.files.push_back(sp);
    log << "wave-op: " << wo.iterations << " iterations, converged " << wo.converged << "\n";
    return out;
}

/// Ratio of sample 0 under amplitude scaling and a periodic shift by whole cells; both should be exact symmetries.
struct GnInvariance {
    double scaling = 0.0;
    double translation = 0.0;
};

inline GnInvariance gn_invariance(const GridPtr& grid, CorpusGenerator gen, std::uint64_t seed, GNVariant v,
                                  int components) {
    const auto phi = corpus_sample(grid, gen, seed, 0, components);
    const double q = gn_ratio(phi, v);
    auto scaled = phi;
    for (auto& f : scaled)
        for (auto& z : f.values()) z *= 3.7;
    auto shifted = phi;
    const int shift = grid->points() / 8;
    for (auto& f : shifted) {
        ScalarField g(grid);
        for (std::size_t j = 0; j < g.size(); ++j) {
            auto idx = grid->unravel(j);
            for (int a = 0; a < grid->dim(); ++a) idx[static_cast<std::size_t>(a)] = (idx[static_cast<std::size_t>(a)] + shift) % grid->points();
            g[grid->ravel(idx)] = f[j];
        }
        f = g;
    }
    return {std::abs(gn_ratio(scaled, v) / q - 1.0), std::abs(gn_ratio(shifted, v) / q - 1.0)};
}

inline RunOutcome run_gn(const RunConfig& c, std::ostream& log, CsvTable& table) {
    RunOutcome out;
    const auto grid = Grid::create(c.grid);
    const auto rep = corpus_sup_ratio(grid, c.gn_generator, c.data.seed, c.gn_samples, c.gn_variant, c.gn_components);
    const auto inv = gn_invariance(grid, c.gn_generator, c.data.seed, c.gn_variant, c.gn_components);
    table = CsvTable({"index", "ratio"});
    for (std::size_t i = 0; i < rep.ratios.size(); ++i) table.add_row({static_cast<double>(i), rep.ratios[i]});
    out.checks.push_back(flag_check("ratios_finite", rep.all_finite));
    out.checks.push_back(bound_check("scaling_invariance", inv.scaling, 1e-8));
    out.checks.push_back(bound_check("translation_invariance", inv.translation, 1e-8));
    out.summary["experiment"] = "gn-check";
    out.summary["totals"] = {{"variant", variant_name(rep.variant)},
                             {"samples", rep.count()},
                             {"sup", rep.sup},
                             {"median", rep.median},
                             {"drift_alarm", rep.drift_alarm}};
    log << "gn-check: " << rep.count() << " samples, sup " << format_double(rep.sup) << "\n";
    return out;
}

} // namespace detail

/**
 * Runs one experiment and writes diagnostics.csv, summary.json and any field
 * files into cfg.out_dir. Exit code 0 iff every enabled check passes, 1 for a
 * failed check or non-convergence, 2 when the evolution produced non-finite values.
 */
inline RunOutcome run(const RunConfig& c, std::ostream& log) {
    const auto start = std::chrono::steady_clock::now();
    RunOutcome out;
    CsvTable table({"t"});
    const CsvTable* tp = &table;
    try {
        if (c.experiment == "simulate") out = detail::run_simulate(c, log, table);
        else if (c.experiment == "verify-identities") out = detail::run_verify(c, log, table);
        else if (c.experiment == "scatter") out = detail::run_scatter(c, log, table);
        else if (c.experiment == "wave-op") out = detail::run_wave_op(c, log, table);
        else if (c.experiment == "gn-check") out = detail::run_gn(c, log, table);
    } catch (const NumericalError& e) {
        out.exit_code = exit_numerical;
        out.message = std::string("numerical failure: ") + e.what();
        tp = nullptr;
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    detail::finish(c, out, tp, wall);
    return out;
}

} // namespace nlsys
