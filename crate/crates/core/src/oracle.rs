//! Reference solver: the direct scheme that discretizes the Caputo
//! derivative with the classical L1 product quadrature over the full
//! polarization history.
//!
//! The spatial discretization, the BDF2 treatment of `H` and `E`, and the
//! bootstrap are identical to the fast solver; the only difference is the
//! fractional term, so timing comparisons isolate exactly the cost of the
//! memory integral: each step touches every stored level, giving O(n) work
//! per step and O(n^2) in total, against the fast solver's O(L) per step.

use crate::dgcore::{assemble_operators, DgField, Mesh1D};
use crate::material::MaterialParams;
use crate::math::gamma;
use crate::stepper::{
    assemble_field_solver, bdf2_coefficients, SimState, SourceSet, StepError,
};
use alloc::string::String;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

/// L1 quadrature coefficients
/// `a_m = tau^(-alpha)/Gamma(2-alpha) * ((m+1)^(1-alpha) - m^(1-alpha))`
/// for `m = 0 .. n-1`.
pub fn l1_coefficients(n: usize, alpha: f64, tau: f64) -> Result<Vec<f64>, StepError> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(StepError::BadTau { tau });
    }
    assert!(n >= 1, "need at least one coefficient");
    let scale = tau.powf(-alpha) / gamma(2.0 - alpha);
    let e = 1.0 - alpha;
    let mut out = Vec::with_capacity(n);
    for m in 0..n {
        out.push(scale * (((m + 1) as f64).powf(e) - (m as f64).powf(e)));
    }
    Ok(out)
}

/// Stored polarization history of the direct scheme plus the coefficient
/// table; memory grows linearly with the step count.
pub struct L1History {
    /// `a_0 .. a_{n_max-1}`.
    coeffs: Vec<f64>,
    /// Coefficient blocks of `P^1, P^2, ...` (`P^0 = 0` is implicit).
    past: Vec<Vec<f64>>,
}

impl L1History {
    /// Allocates the coefficient table for a run of at most `n_max` steps.
    pub fn new(n_max: usize, alpha: f64, tau: f64) -> Result<Self, StepError> {
        Ok(L1History {
            coeffs: l1_coefficients(n_max.max(1), alpha, tau)?,
            past: Vec::new(),
        })
    }

    /// Leading coefficient `a_0`, the implicit weight of the current level.
    pub fn a0(&self) -> f64 {
        self.coeffs[0]
    }

    /// Coefficient table.
    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    /// Number of stored past levels.
    pub fn len(&self) -> usize {
        self.past.len()
    }

    /// True before the first level is pushed.
    pub fn is_empty(&self) -> bool {
        self.past.is_empty()
    }

    /// Appends the polarization at the next time level.
    pub fn push(&mut self, p: &DgField) {
        self.past.push(p.coeffs().to_vec());
    }

    /// History part of the discrete Caputo derivative at level
    /// `n = len() + 1`: `sum_{m=1}^{n-1} (a_{n-m} - a_{n-m-1}) P^m`, written
    /// into `out`. The O(n) sweep over all stored levels is the direct
    /// scheme's cost signature.
    pub fn history_term(&self, out: &mut DgField) {
        let n = self.past.len() + 1;
        for c in out.coeffs_mut().iter_mut() {
            *c = 0.0;
        }
        for (m, block) in self.past.iter().enumerate() {
            // m is 0-based: block holds P^(m+1).
            let w = self.coeffs[n - m - 1] - self.coeffs[n - m - 2];
            for (o, &b) in out.coeffs_mut().iter_mut().zip(block) {
                *o += w * b;
            }
        }
    }
}

/// Discrete Caputo derivative at the level following the stored history:
/// `a_0 P^n + sum_{m=1}^{n-1} (a_{n-m} - a_{n-m-1}) P^m`.
pub fn l1_caputo_apply(history: &L1History, p_n: &DgField) -> Result<DgField, StepError> {
    let mut out = DgField::zeros(p_n.mesh(), p_n.degree())?;
    history.history_term(&mut out);
    let a0 = history.a0();
    for (o, &p) in out.coeffs_mut().iter_mut().zip(p_n.coeffs()) {
        *o += a0 * p;
    }
    Ok(out)
}

/// Run configuration for the direct solver; mirrors the fast solver's
/// configuration minus the quadrature.
pub struct DirectConfig {
    /// Spatial mesh.
    pub mesh: Mesh1D,
    /// Polynomial degree `k >= 1`.
    pub degree: usize,
    /// Material parameters.
    pub params: MaterialParams,
    /// Time step.
    pub tau: f64,
    /// Final time; rounded down to whole steps with a warning when needed.
    pub t_final: f64,
}

/// Outcome of a direct run. The final state reuses [`SimState`] with no
/// relaxation modes.
pub struct DirectRunReport {
    /// Steps taken.
    pub steps: usize,
    /// Final state (`psi` empty).
    pub state: SimState,
    /// Warnings (horizon rounding).
    pub warnings: Vec<String>,
}

/// Advances the direct scheme: forward-Euler bootstrap, then BDF2 for
/// `(H, E)` with the L1 sum supplying the fractional term.
pub fn run_direct_simulation(
    config: &DirectConfig,
    initial: SimState,
    sources: &SourceSet,
) -> Result<DirectRunReport, StepError> {
    let tau = config.tau;
    if !(tau.is_finite() && tau > 0.0) {
        return Err(StepError::BadTau { tau });
    }
    let mut warnings = Vec::new();
    let ratio = config.t_final / tau;
    let mut n_steps = ratio.floor() as usize;
    if (ratio - ratio.round()).abs() <= 1e-9 * ratio.abs().max(1.0) {
        n_steps = ratio.round() as usize;
    } else {
        warnings.push(alloc::format!(
            "final time {} is not an integer multiple of tau = {}; running {} steps to t = {}",
            config.t_final,
            tau,
            n_steps,
            n_steps as f64 * tau
        ));
    }
    if n_steps < 2 {
        return Err(StepError::TooFewSteps { steps: n_steps });
    }

    let params = config.params;
    let alpha = params.alpha();
    let t0a = params.tau0_pow_alpha();
    let mesh = config.mesh;
    let k = config.degree;
    let ops = assemble_operators(mesh, k, &params)?;
    let basis = ops.basis();
    let (c1, c2, c3, _) = bdf2_coefficients(tau, alpha)?;

    let mut history = L1History::new(n_steps, alpha, tau)?;
    let kappa = 1.0 + t0a * history.a0();
    let eps_eff = params.eps_inf_abs() + params.delta_eps_abs() / kappa;
    let solver = assemble_field_solver(&ops, params.mu0() * c1, eps_eff * c1)?;

    let project = |src: Option<&(dyn Fn(f64, f64) -> f64 + Send + Sync)>,
                   t: f64,
                   out: &mut DgField| match src {
        Some(f) => basis.project_into(|x| f(x, t), out),
        None => out.coeffs_mut().iter_mut().for_each(|c| *c = 0.0),
    };

    // Bootstrap: forward Euler for (H, E), then the L1 constraint at t = tau
    // (where the whole history is the single implicit level a_0 P^1).
    let state0 = initial;
    let mut h1 = DgField::zeros(mesh, k)?;
    ops.d_e(&state0.e, &state0.h, &mut h1);
    let mut pf = DgField::zeros(mesh, k)?;
    project(sources.f1(), state0.t, &mut pf);
    h1.add_scaled(1.0, &pf)?;
    for (c, &h0) in h1.coeffs_mut().iter_mut().zip(state0.h.coeffs()) {
        *c = h0 + tau / params.mu0() * *c;
    }
    let mut r = DgField::zeros(mesh, k)?;
    ops.d_h(&state0.h, &state0.e, &mut r);
    project(sources.f2(), state0.t, &mut pf);
    r.add_scaled(1.0, &pf)?;
    let eps_inf = params.eps_inf_abs();
    let delta = params.delta_eps_abs();
    for (i, c) in r.coeffs_mut().iter_mut().enumerate() {
        *c = eps_inf * state0.e.coeffs()[i] + state0.p.coeffs()[i] + tau * *c;
    }
    // kappa P^1 - delta E^1 = F3(tau) and eps_inf E^1 + P^1 = R.
    project(sources.f3(), tau, &mut pf);
    let denom = eps_inf * kappa + delta;
    let mut e1 = DgField::zeros(mesh, k)?;
    let mut p1 = DgField::zeros(mesh, k)?;
    for i in 0..e1.coeffs().len() {
        let (rv, gv) = (r.coeffs()[i], pf.coeffs()[i]);
        e1.coeffs_mut()[i] = (kappa * rv - gv) / denom;
        p1.coeffs_mut()[i] = (delta * rv + eps_inf * gv) / denom;
    }
    history.push(&p1);

    let mut prev = SimState {
        t: tau,
        h: h1,
        e: e1,
        p: p1,
        psi: Vec::new(),
    };
    let mut oldest = state0;
    let n = basis.n_modes();
    let m = 2 * n;
    let half_h = 0.5 * mesh.h();
    let mut rhs = alloc::vec![0.0; m * mesh.n_cells()];
    let mut hist_field = DgField::zeros(mesh, k)?;
    let (mut pf1, mut pf2, mut pf3) = (
        DgField::zeros(mesh, k)?,
        DgField::zeros(mesh, k)?,
        DgField::zeros(mesh, k)?,
    );
    let mut next = SimState::zeros(mesh, k, 0)?;

    for step in 2..=n_steps {
        let t_n = step as f64 * tau;
        project(sources.f1(), t_n, &mut pf1);
        project(sources.f2(), t_n, &mut pf2);
        project(sources.f3(), t_n, &mut pf3);
        // G = F3^n - tau0^a * (L1 history sum); P^n = (delta E^n + G)/kappa.
        history.history_term(&mut hist_field);
        let mu0 = params.mu0();
        for j in 0..mesh.n_cells() {
            let base = j * m;
            for i in 0..n {
                let idx = j * n + i;
                let h_hist = c2 * prev.h.coeffs()[idx] + c3 * oldest.h.coeffs()[idx];
                rhs[base + i] = half_h * (pf1.coeffs()[idx] - mu0 * h_hist);
                let g = pf3.coeffs()[idx] - t0a * hist_field.coeffs()[idx];
                let e_hist = c2 * prev.e.coeffs()[idx] + c3 * oldest.e.coeffs()[idx];
                let p_hist = c2 * prev.p.coeffs()[idx] + c3 * oldest.p.coeffs()[idx];
                rhs[base + n + i] =
                    half_h * (pf2.coeffs()[idx] - c1 * g / kappa - eps_inf * e_hist - p_hist);
            }
        }
        solver.solve(&mut rhs);
        for j in 0..mesh.n_cells() {
            let base = j * m;
            for i in 0..n {
                let idx = j * n + i;
                next.h.coeffs_mut()[idx] = rhs[base + i];
                next.e.coeffs_mut()[idx] = rhs[base + n + i];
            }
        }
        for (i, c) in next.p.coeffs_mut().iter_mut().enumerate() {
            let g = pf3.coeffs()[i] - t0a * hist_field.coeffs()[i];
            *c = (delta * next.e.coeffs()[i] + g) / kappa;
        }
        next.t = t_n;
        history.push(&next.p);
        core::mem::swap(&mut oldest, &mut prev);
        core::mem::swap(&mut prev, &mut next);
    }

    Ok(DirectRunReport {
        steps: n_steps,
        state: prev,
        warnings,
    })
}
