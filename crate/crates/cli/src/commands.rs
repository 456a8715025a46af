//! The five experiments behind the subcommands. Each one resolves its
//! inputs, runs the core solver, writes its artifacts plus a manifest into
//! the output directory, and returns the computed data for callers that
//! want to assert on it.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use coledg_core::diagnostics::{
    dispersion_approx, dispersion_exact_with_alpha, ConvergenceRow, ConvergenceSetup,
    DispersionSample, EnergySample,
};
use coledg_core::diagnostics::convergence_study;
use coledg_core::dgcore::project_initial_eh;
use coledg_core::oracle::{run_direct_simulation, DirectConfig};
use coledg_core::quadopt::{
    chi, gauss_jacobi_init, log_spaced_samples, max_chi_deviation, optimize_quadrature,
    DiffusiveQuadrature, FrequencyBand,
};
use coledg_core::scenarios::{standing_wave_e0, standing_wave_h0, ManufacturedSolution};
use coledg_core::stepper::{run_simulation, RunConfig, SimState, SourceSet};

use crate::config::{Experiment, QuadSource, Resolved, SourceKind, TauRule};
use crate::fileio::{self, TimingRow};

/// Fractional orders of the exact dispersion curves; `1` is the Debye
/// limit of the model.
pub const DISPERSION_EXACT_ALPHAS: [f64; 4] = [0.3, 0.5, 0.7, 1.0];

/// Fractional orders that also get a fitted-quadrature curve.
pub const DISPERSION_FITTED_ALPHAS: [f64; 3] = [0.3, 0.5, 0.7];

/// Points per dispersion curve and per fitted-rule error curve.
const DISPERSION_GRID_POINTS: usize = 200;
const CHI_GRID_POINTS: usize = 400;

/// Result of the optimize experiment.
pub struct OptimizeOutcome {
    pub quadrature: DiffusiveQuadrature,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub iterations: usize,
    /// `max |chi - 1|` over the calibration band.
    pub max_deviation: f64,
}

/// Result of the energy experiment.
pub struct EnergyOutcome {
    pub samples: Vec<EnergySample>,
    pub steps: usize,
    pub warnings: Vec<String>,
}

/// Result of the dispersion experiment: worst relative phase-velocity and
/// attenuation deviations of the fitted curve, per fitted order.
pub struct DispersionOutcome {
    pub velocity_deviation: Vec<(f64, f64)>,
    pub attenuation_deviation: Vec<(f64, f64)>,
}

/// Result of the timing experiment.
pub struct TimingOutcome {
    pub rows: Vec<TimingRow>,
    pub fast_slope: f64,
    pub direct_slope: f64,
}

/// Fits the relaxation quadrature, writes the rule and its error curve, and
/// reports the objective drop. If the optimizer itself fails, the
/// Gauss-Jacobi initializer is still written (flagged as such) before the
/// error propagates, so a downstream run can proceed with the fallback rule.
pub fn cmd_optimize(resolved: &Resolved) -> Result<OptimizeOutcome> {
    let started = Instant::now();
    let QuadSource::Fit {
        poles,
        omega_min,
        omega_max,
        samples,
    } = resolved.quadrature
    else {
        bail!("the optimize experiment needs fit parameters, not a quadrature file");
    };
    let band = FrequencyBand::new(omega_min, omega_max, samples)
        .context("invalid calibration band")?;
    let out_dir = prepare_out_dir(resolved)?;
    let rule_path = out_dir.join("quadrature.txt");

    let mut entries = base_entries(resolved);
    entries.push(("poles".to_string(), poles.to_string()));
    entries.push(("omega_min".to_string(), omega_min.to_string()));
    entries.push(("omega_max".to_string(), omega_max.to_string()));
    entries.push(("samples".to_string(), samples.to_string()));

    let init = gauss_jacobi_init(poles, resolved.alpha, &band)
        .context("cannot build the Gauss-Jacobi initializer")?;
    let report = match optimize_quadrature(resolved.alpha, poles, &band) {
        Ok(report) => report,
        Err(err) => {
            fileio::write_quadrature(
                &rule_path,
                &init,
                Some(&format!("unoptimized Gauss-Jacobi initializer ({err})")),
            )?;
            entries.push(("optimizer_failed".to_string(), err.to_string()));
            entries.push(("quadrature_file".to_string(), "quadrature.txt".to_string()));
            push_wall_time(&mut entries, started);
            fileio::write_manifest(&out_dir.join("manifest.txt"), &entries)?;
            return Err(err).context(format!(
                "optimizer failed; wrote the flagged initializer to {}",
                rule_path.display()
            ));
        }
    };

    fileio::write_quadrature(&rule_path, &report.quadrature, None)?;
    let chi_grid = log_spaced_samples(
        &FrequencyBand::new(omega_min / 2.0, 2.0 * omega_max, CHI_GRID_POINTS)
            .context("invalid error-curve grid")?,
    );
    let chi_points: Vec<(f64, f64)> = chi_grid
        .iter()
        .map(|&w| {
            let c = chi(w, &report.quadrature);
            (w, (c - 1.0).norm())
        })
        .collect();
    fileio::write_chi_deviation_csv(&out_dir.join("chi_deviation.csv"), &chi_points)?;

    let max_deviation = max_chi_deviation(&report.quadrature, omega_min, omega_max, 401);
    entries.push((
        "initial_objective".to_string(),
        report.initial_objective.to_string(),
    ));
    entries.push((
        "final_objective".to_string(),
        report.final_objective.to_string(),
    ));
    entries.push(("iterations".to_string(), report.iterations.to_string()));
    entries.push(("max_chi_deviation".to_string(), max_deviation.to_string()));
    entries.push(("quadrature_file".to_string(), "quadrature.txt".to_string()));
    push_wall_time(&mut entries, started);
    fileio::write_manifest(&out_dir.join("manifest.txt"), &entries)?;

    println!(
        "fitted L = {poles} poles for alpha = {} on [{omega_min}, {omega_max}]",
        resolved.alpha
    );
    println!(
        "objective {:.6e} -> {:.6e} in {} iterations; max |chi - 1| = {:.3e}",
        report.initial_objective, report.final_objective, report.iterations, max_deviation
    );
    println!("wrote {}", rule_path.display());

    Ok(OptimizeOutcome {
        quadrature: report.quadrature,
        initial_objective: report.initial_objective,
        final_objective: report.final_objective,
        iterations: report.iterations,
        max_deviation,
    })
}

/// Runs the manufactured-solution refinement study and writes the error
/// table.
pub fn cmd_convergence(resolved: &Resolved) -> Result<Vec<ConvergenceRow>> {
    let started = Instant::now();
    if resolved.tau != TauRule::CellWidthSquared {
        bail!("the convergence experiment uses tau = h^2 at every level");
    }
    if resolved.sources != SourceKind::Manufactured {
        bail!("the convergence experiment needs the manufactured forcing");
    }
    let out_dir = prepare_out_dir(resolved)?;
    let (quad, quad_entries) = resolved.quadrature.prepare(resolved.alpha)?;

    let setup = ConvergenceSetup {
        alpha: resolved.alpha,
        degree: resolved.degree,
        quad: &quad,
        t_final: resolved.t_final,
        tau_factor: 1.0,
    };
    let rows = convergence_study(&setup, &resolved.levels).context("refinement study failed")?;

    println!(
        "L2 errors at t = {} (alpha = {}, degree = {}):",
        resolved.t_final, resolved.alpha, resolved.degree
    );
    println!(
        "{:>8} {:>12} {:>6} {:>12} {:>6} {:>12} {:>6}",
        "cells", "errE", "ordE", "errH", "ordH", "errP", "ordP"
    );
    for r in &rows {
        println!(
            "{:>8} {:>12.4e} {:>6.3} {:>12.4e} {:>6.3} {:>12.4e} {:>6.3}",
            r.n_cells, r.err_e, r.ord_e, r.err_h, r.ord_h, r.err_p, r.ord_p
        );
    }

    fileio::write_convergence_csv(&out_dir.join("convergence.csv"), &rows)?;

    let mut entries = base_entries(resolved);
    entries.extend(quad_entries);
    entries.push((
        "levels".to_string(),
        resolved
            .levels
            .iter()
            .map(|m| m.to_string())
            .collect::<Vec<_>>()
            .join(" "),
    ));
    for m in &resolved.levels {
        let h = (resolved.x_plus - resolved.x_minus) / *m as f64;
        let steps = (resolved.t_final / (h * h)).round() as usize;
        entries.push((format!("steps_cells_{m}"), steps.to_string()));
    }
    push_wall_time(&mut entries, started);
    fileio::write_manifest(&out_dir.join("manifest.txt"), &entries)?;
    println!("wrote {}", out_dir.join("convergence.csv").display());

    Ok(rows)
}

/// Runs the source-free decay experiment (standing-wave pulse, zero
/// forcing) and writes the energy trace, the per-step differences, and the
/// final field snapshots.
pub fn cmd_energy(resolved: &Resolved) -> Result<EnergyOutcome> {
    let started = Instant::now();
    let out_dir = prepare_out_dir(resolved)?;
    let params = resolved.material_params()?;
    let mesh = resolved.mesh()?;
    let (quad, quad_entries) = resolved.quadrature.prepare(resolved.alpha)?;
    let tau = resolved.tau.resolve(mesh.h());

    let (initial, sources) = match resolved.sources {
        SourceKind::Zero => {
            let (e0, h0) = project_initial_eh(
                standing_wave_e0,
                standing_wave_h0,
                &params,
                mesh,
                resolved.degree,
            )?;
            (
                SimState::from_initial_eh(e0, h0, quad.len())?,
                SourceSet::zero(),
            )
        }
        SourceKind::Manufactured => {
            let case = ManufacturedSolution::new(resolved.alpha)?;
            (
                SimState::zeros(mesh, resolved.degree, quad.len())?,
                case.sources(),
            )
        }
    };

    let run = RunConfig {
        mesh,
        degree: resolved.degree,
        params,
        quad: &quad,
        tau,
        t_final: resolved.t_final,
        sample_every: resolved.sample_every,
        check_residuals: false,
    };
    let report = run_simulation(&run, initial, &sources).context("energy run failed")?;

    fileio::write_energy_trace(&out_dir.join("energy_trace.csv"), &report.samples)?;
    fileio::write_energy_differences(
        &out_dir.join("energy_differences.csv"),
        &report.samples,
    )?;
    fileio::write_field(&out_dir.join("field_e.csv"), &report.state.e)?;
    fileio::write_field(&out_dir.join("field_h.csv"), &report.state.h)?;

    let first = report.samples.first().context("run produced no samples")?;
    let last = report.samples.last().unwrap();
    let worst_rise = report
        .samples
        .windows(2)
        .map(|pair| pair[1].total - pair[0].total)
        .fold(f64::NEG_INFINITY, f64::max);
    println!(
        "{} steps at tau = {tau}: total energy {:.6} -> {:.6}",
        report.steps, first.total, last.total
    );
    println!(
        "largest per-step rise of the total: {worst_rise:.3e} (negative means monotone decay)"
    );

    let mut entries = base_entries(resolved);
    entries.extend(quad_entries);
    entries.push(("tau_resolved".to_string(), tau.to_string()));
    entries.push(("initial_data".to_string(), "standing_wave".to_string()));
    entries.push(("steps".to_string(), report.steps.to_string()));
    entries.push(("samples".to_string(), report.samples.len().to_string()));
    for (i, warning) in report.warnings.iter().enumerate() {
        entries.push((format!("warning_{}", i + 1), warning.clone()));
    }
    push_wall_time(&mut entries, started);
    fileio::write_manifest(&out_dir.join("manifest.txt"), &entries)?;
    println!("wrote {}", out_dir.join("energy_trace.csv").display());

    Ok(EnergyOutcome {
        samples: report.samples,
        steps: report.steps,
        warnings: report.warnings,
    })
}

/// Writes exact dispersion curves for the pinned fractional orders (the
/// Debye limit included) and fitted-quadrature curves beside them.
pub fn cmd_dispersion(resolved: &Resolved) -> Result<DispersionOutcome> {
    let started = Instant::now();
    let QuadSource::Fit {
        poles,
        omega_min,
        omega_max,
        samples,
    } = resolved.quadrature
    else {
        bail!("the dispersion experiment fits its own rule per order; drop quadrature.file");
    };
    let out_dir = prepare_out_dir(resolved)?;
    let grid = log_spaced_samples(
        &FrequencyBand::new(omega_min, omega_max, DISPERSION_GRID_POINTS)
            .context("invalid dispersion grid")?,
    );

    let mut entries = base_entries(resolved);
    entries.push(("poles".to_string(), poles.to_string()));
    entries.push(("omega_min".to_string(), omega_min.to_string()));
    entries.push(("omega_max".to_string(), omega_max.to_string()));
    entries.push(("grid_points".to_string(), DISPERSION_GRID_POINTS.to_string()));

    let mut exact_curves = Vec::new();
    for &alpha in &DISPERSION_EXACT_ALPHAS {
        // The material validator pins alpha to (0, 1); the Debye limit
        // enters through the explicit-order dispersion entry point, which
        // ignores the carrier's own order.
        let params = resolved
            .material
            .to_params(if alpha < 1.0 { alpha } else { 0.5 })?;
        let curve: Vec<DispersionSample> = grid
            .iter()
            .map(|&w| dispersion_exact_with_alpha(w, &params, alpha))
            .collect();
        let name = format!("dispersion_exact_alpha_{alpha}.csv");
        fileio::write_dispersion_csv(&out_dir.join(&name), &curve)?;
        entries.push((format!("exact_alpha_{alpha}"), name));
        exact_curves.push((alpha, curve));
    }

    let mut velocity_deviation = Vec::new();
    let mut attenuation_deviation = Vec::new();
    for &alpha in &DISPERSION_FITTED_ALPHAS {
        let params = resolved.material.to_params(alpha)?;
        let band = FrequencyBand::new(omega_min, omega_max, samples)
            .context("invalid calibration band")?;
        let report = optimize_quadrature(alpha, poles, &band)
            .context("quadrature calibration failed")?;
        let curve: Vec<DispersionSample> = grid
            .iter()
            .map(|&w| dispersion_approx(w, &params, &report.quadrature))
            .collect();
        let name = format!("dispersion_fitted_alpha_{alpha}.csv");
        fileio::write_dispersion_csv(&out_dir.join(&name), &curve)?;
        entries.push((format!("fitted_alpha_{alpha}"), name));

        let exact = &exact_curves
            .iter()
            .find(|(a, _)| *a == alpha)
            .expect("every fitted order has an exact curve")
            .1;
        let mut worst_c = 0.0f64;
        let mut worst_eta = 0.0f64;
        for (fit, ex) in curve.iter().zip(exact) {
            worst_c = worst_c.max((fit.phase_velocity - ex.phase_velocity).abs() / ex.phase_velocity);
            worst_eta =
                worst_eta.max((fit.attenuation - ex.attenuation).abs() / ex.attenuation.abs());
        }
        println!(
            "alpha = {alpha}: max |c_fit - c|/c = {worst_c:.3e}, max |eta_fit - eta|/|eta| = {worst_eta:.3e}"
        );
        entries.push((format!("velocity_deviation_alpha_{alpha}"), worst_c.to_string()));
        velocity_deviation.push((alpha, worst_c));
        attenuation_deviation.push((alpha, worst_eta));
    }

    push_wall_time(&mut entries, started);
    fileio::write_manifest(&out_dir.join("manifest.txt"), &entries)?;
    println!(
        "wrote {} exact and {} fitted curves to {}",
        DISPERSION_EXACT_ALPHAS.len(),
        DISPERSION_FITTED_ALPHAS.len(),
        out_dir.display()
    );

    Ok(DispersionOutcome {
        velocity_deviation,
        attenuation_deviation,
    })
}

/// Times the fast solver against the direct-history solver over a step-count
/// grid at a fixed small mesh, and fits log-log slopes.
pub fn cmd_timing(resolved: &Resolved) -> Result<TimingOutcome> {
    let started = Instant::now();
    let out_dir = prepare_out_dir(resolved)?;
    let params = resolved.material_params()?;
    let mesh = resolved.mesh()?;
    let (quad, quad_entries) = resolved.quadrature.prepare(resolved.alpha)?;

    let sources = match resolved.sources {
        SourceKind::Manufactured => ManufacturedSolution::new(resolved.alpha)?.sources(),
        SourceKind::Zero => SourceSet::zero(),
    };

    let mut rows = Vec::with_capacity(resolved.nt_grid.len());
    for &nt in &resolved.nt_grid {
        let tau = resolved.t_final / nt as f64;
        let mut fast_seconds = f64::INFINITY;
        let mut direct_seconds = f64::INFINITY;
        for _ in 0..2 {
            let initial = SimState::zeros(mesh, resolved.degree, quad.len())?;
            let run = RunConfig {
                mesh,
                degree: resolved.degree,
                params,
                quad: &quad,
                tau,
                t_final: resolved.t_final,
                sample_every: 0,
                check_residuals: false,
            };
            let clock = Instant::now();
            let report = run_simulation(&run, initial, &sources)?;
            fast_seconds = fast_seconds.min(clock.elapsed().as_secs_f64());
            if report.steps != nt {
                bail!("expected {nt} fast steps, ran {}", report.steps);
            }

            let initial = SimState::zeros(mesh, resolved.degree, 0)?;
            let direct = DirectConfig {
                mesh,
                degree: resolved.degree,
                params,
                tau,
                t_final: resolved.t_final,
            };
            let clock = Instant::now();
            let report = run_direct_simulation(&direct, initial, &sources)?;
            direct_seconds = direct_seconds.min(clock.elapsed().as_secs_f64());
            if report.steps != nt {
                bail!("expected {nt} direct steps, ran {}", report.steps);
            }
        }
        println!("Nt = {nt:>7}: fast {fast_seconds:>9.4}s, direct {direct_seconds:>9.4}s");
        rows.push(TimingRow {
            nt,
            fast_seconds,
            direct_seconds,
        });
    }

    let nts: Vec<f64> = rows.iter().map(|r| r.nt as f64).collect();
    let fast: Vec<f64> = rows.iter().map(|r| r.fast_seconds).collect();
    let direct: Vec<f64> = rows.iter().map(|r| r.direct_seconds).collect();
    let fast_slope = loglog_slope(&nts, &fast);
    let direct_slope = loglog_slope(&nts, &direct);
    println!("log-log slope: fast {fast_slope:.3}, direct {direct_slope:.3}");

    fileio::write_timing_csv(&out_dir.join("timing.csv"), &rows, fast_slope, direct_slope)?;

    let mut entries = base_entries(resolved);
    entries.extend(quad_entries);
    entries.push((
        "nt_grid".to_string(),
        resolved
            .nt_grid
            .iter()
            .map(|n| n.to_string())
            .collect::<Vec<_>>()
            .join(" "),
    ));
    entries.push(("repeats".to_string(), "2".to_string()));
    entries.push(("fast_slope".to_string(), fast_slope.to_string()));
    entries.push(("direct_slope".to_string(), direct_slope.to_string()));
    push_wall_time(&mut entries, started);
    fileio::write_manifest(&out_dir.join("manifest.txt"), &entries)?;
    println!("wrote {}", out_dir.join("timing.csv").display());

    Ok(TimingOutcome {
        rows,
        fast_slope,
        direct_slope,
    })
}

/// Least-squares slope of `ln(y)` against `ln(x)`.
fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let sum_x: f64 = lx.iter().sum();
    let sum_y: f64 = ly.iter().sum();
    let sum_xy: f64 = lx.iter().zip(&ly).map(|(x, y)| x * y).sum();
    let sum_xx: f64 = lx.iter().map(|x| x * x).sum();
    (n * sum_xy - sum_x * sum_y) / (n * sum_xx - sum_x * sum_x)
}

fn prepare_out_dir(resolved: &Resolved) -> Result<PathBuf> {
    std::fs::create_dir_all(&resolved.out_dir)
        .with_context(|| format!("cannot create {}", resolved.out_dir.display()))?;
    Ok(resolved.out_dir.clone())
}

/// Manifest entries shared by every experiment, in a fixed order.
fn base_entries(resolved: &Resolved) -> Vec<(String, String)> {
    let mut entries = vec![
        ("experiment".to_string(), resolved.experiment.to_string()),
        ("out_dir".to_string(), resolved.out_dir.display().to_string()),
        ("alpha".to_string(), resolved.alpha.to_string()),
        ("degree".to_string(), resolved.degree.to_string()),
        ("cells".to_string(), resolved.cells.to_string()),
        ("x_minus".to_string(), resolved.x_minus.to_string()),
        ("x_plus".to_string(), resolved.x_plus.to_string()),
        ("t_final".to_string(), resolved.t_final.to_string()),
        ("sample_every".to_string(), resolved.sample_every.to_string()),
        ("tau".to_string(), resolved.tau.to_string()),
        ("sources".to_string(), resolved.sources.to_string()),
        ("eps0".to_string(), resolved.material.eps0.to_string()),
        ("eps_inf".to_string(), resolved.material.eps_inf.to_string()),
        ("eps_s".to_string(), resolved.material.eps_s.to_string()),
        ("mu0".to_string(), resolved.material.mu0.to_string()),
        ("tau0".to_string(), resolved.material.tau0.to_string()),
        ("desk_scale".to_string(), resolved.desk_scale.to_string()),
    ];
    entries.retain(|(key, _)| {
        // The optimize and dispersion experiments never touch a mesh or a
        // clock; keep their manifests free of meaningless knobs.
        if matches!(
            resolved.experiment,
            Experiment::Optimize | Experiment::Dispersion
        ) {
            !matches!(
                key.as_str(),
                "cells" | "x_minus" | "x_plus" | "t_final" | "sample_every" | "tau" | "sources"
            )
        } else {
            true
        }
    });
    entries
}

fn push_wall_time(entries: &mut Vec<(String, String)>, started: Instant) {
    entries.push((
        "wall_seconds".to_string(),
        format!("{:.3}", started.elapsed().as_secs_f64()),
    ));
}

/// Convenience used by the binary: runs the experiment named in `resolved`.
pub fn dispatch(resolved: &Resolved) -> Result<()> {
    match resolved.experiment {
        Experiment::Optimize => cmd_optimize(resolved).map(drop),
        Experiment::Convergence => cmd_convergence(resolved).map(drop),
        Experiment::Energy => cmd_energy(resolved).map(drop),
        Experiment::Dispersion => cmd_dispersion(resolved).map(drop),
        Experiment::Timing => cmd_timing(resolved).map(drop),
    }
}
