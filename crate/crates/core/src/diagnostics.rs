//! Energy functionals, dispersion relations, error norms, and observed
//! convergence orders.
//!
//! The two energies are
//!
//! ```text
//! E1      = 1/2 integral( eps0 eps_inf E^2 + mu0 H^2 + P^2/(eps0 (eps_s - eps_inf)) )
//! E2#     = pi/(2 sin(pi a)) integral( tau0^a sum_l zeta_l lambda_l^(1-a) psi_l^2 ) / (eps0 (eps_s - eps_inf))
//! ```
//!
//! and the total `E# = E1 + E2#` decays along source-free solutions of the
//! semi-discrete system at the rate returned by [`dissipation_rate`]: a
//! volume term from the relaxation modes plus one nonnegative upwind penalty
//! `M = (Z [H]^2 + Y [E]^2)/2` per mesh face. [`energy_rate`] evaluates the
//! chain-rule derivative of `E#` so tests can confirm the identity exactly.
//!
//! Dispersion samples solve `k^2 = (mu0 eps0 eps_inf
//! + mu0 eps0 (eps_s - eps_inf)/(1 + Q)) omega^2` for the principal root
//! with `Re(k) >= 0`, where `Q = (i omega tau0)^alpha` for the exact medium
//! and `Q# = tau0^alpha B(omega)` for the relaxation-mode approximation.

use crate::dgcore::DgField;
use crate::material::MaterialParams;
use crate::math::gauss_legendre;
use crate::quadopt::{b_transfer, DiffusiveQuadrature};
use crate::scenarios::ManufacturedSolution;
use crate::stepper::{
    run_simulation, RunConfig, SemiDiscreteRates, SimState, StepError,
};
use alloc::vec::Vec;
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

/// One row of an energy trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergySample {
    /// Sample time.
    pub t: f64,
    /// Classical energy `E1`.
    pub e1: f64,
    /// Relaxation-mode energy `E2#`.
    pub e2_sharp: f64,
    /// `e1 + e2_sharp`, stored so the invariant holds exactly.
    pub total: f64,
    /// Instantaneous decay rate of the total (nonpositive).
    pub dissipation: f64,
}

/// `(h/2) sum_i a_i b_i`, the L2 inner product of two fields on the same
/// mesh in the orthonormal modal basis.
fn l2_inner(a: &DgField, b: &DgField) -> f64 {
    let dot: f64 = a
        .coeffs()
        .iter()
        .zip(b.coeffs())
        .map(|(&x, &y)| x * y)
        .sum();
    0.5 * a.mesh().h() * dot
}

/// Classical energy `E1` of a state.
pub fn energy_classical(state: &SimState, params: &MaterialParams) -> f64 {
    let e = state.e.l2_norm();
    let h = state.h.l2_norm();
    let p = state.p.l2_norm();
    0.5 * (params.eps_inf_abs() * e * e + params.mu0() * h * h + p * p / params.delta_eps_abs())
}

/// Relaxation-mode energy `E2#`; zero exactly when every mode vanishes.
pub fn energy_diffusive_sharp(
    state: &SimState,
    params: &MaterialParams,
    quad: &DiffusiveQuadrature,
) -> f64 {
    let alpha = params.alpha();
    let weight = 0.5 / params.c_alpha() * params.tau0_pow_alpha() / params.delta_eps_abs();
    let mut sum = 0.0;
    for (li, (&zeta, &lam)) in quad.weights().iter().zip(quad.abscissae()).enumerate() {
        let n = state.psi[li].l2_norm();
        sum += zeta * lam.powf(1.0 - alpha) * n * n;
    }
    weight * sum
}

/// Instantaneous decay rate of the total energy: the (negated) mode volume
/// term plus the upwind face penalties. Nonpositive for every state.
pub fn dissipation_rate(
    state: &SimState,
    params: &MaterialParams,
    quad: &DiffusiveQuadrature,
) -> f64 {
    let alpha = params.alpha();
    let weight = params.tau0_pow_alpha() / (params.c_alpha() * params.delta_eps_abs());
    let mut volume = 0.0;
    for (li, (&zeta, &lam)) in quad.weights().iter().zip(quad.abscissae()).enumerate() {
        let n = state.psi[li].l2_norm();
        volume += zeta * lam.powf(2.0 - alpha) * n * n;
    }
    let z = params.impedance();
    let y = params.admittance();
    let mut faces = 0.0;
    for j in 0..state.h.mesh().n_cells() {
        let jh = state.h.face_jump(j);
        let je = state.e.face_jump(j);
        faces += 0.5 * (z * jh * jh + y * je * je);
    }
    -weight * volume - faces
}

/// Assembles a full energy sample for a state.
pub fn energy_sample(
    state: &SimState,
    params: &MaterialParams,
    quad: &DiffusiveQuadrature,
) -> EnergySample {
    let e1 = energy_classical(state, params);
    let e2_sharp = energy_diffusive_sharp(state, params, quad);
    EnergySample {
        t: state.t,
        e1,
        e2_sharp,
        total: e1 + e2_sharp,
        dissipation: dissipation_rate(state, params, quad),
    }
}

/// Chain-rule time derivative of the total energy `E# = E1 + E2#` given the
/// state and its semi-discrete rates. Along source-free solutions this
/// equals [`dissipation_rate`] exactly.
pub fn energy_rate(
    state: &SimState,
    rates: &SemiDiscreteRates,
    params: &MaterialParams,
    quad: &DiffusiveQuadrature,
) -> f64 {
    let mut de = params.eps_inf_abs() * l2_inner(&state.e, &rates.e_dot)
        + params.mu0() * l2_inner(&state.h, &rates.h_dot)
        + l2_inner(&state.p, &rates.p_dot) / params.delta_eps_abs();
    let alpha = params.alpha();
    let weight = params.tau0_pow_alpha() / (params.c_alpha() * params.delta_eps_abs());
    for (li, (&zeta, &lam)) in quad.weights().iter().zip(quad.abscissae()).enumerate() {
        de += weight * zeta * lam.powf(1.0 - alpha) * l2_inner(&state.psi[li], &rates.psi_dot[li]);
    }
    de
}

/// One dispersion-relation sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersionSample {
    /// Angular frequency.
    pub omega: f64,
    /// Complex wavenumber, principal branch with `Re(k) >= 0`.
    pub k: Complex64,
    /// Phase velocity `omega / Re(k)`.
    pub phase_velocity: f64,
    /// Attenuation `-Im(k)`.
    pub attenuation: f64,
}

/// Solves the plane-wave relation for a given relaxation factor `Q`.
fn dispersion_from_q(omega: f64, params: &MaterialParams, q: Complex64) -> DispersionSample {
    let base = params.mu0() * params.eps_inf_abs();
    let disp = params.mu0() * params.delta_eps_abs();
    let k2 = (Complex64::new(base, 0.0) + disp / (Complex64::new(1.0, 0.0) + q))
        * (omega * omega);
    let mut k = k2.sqrt();
    if k.re < 0.0 {
        k = -k;
    }
    DispersionSample {
        omega,
        k,
        phase_velocity: omega / k.re,
        attenuation: -k.im,
    }
}

/// Exact dispersion sample with an explicit fractional order in `(0, 1]`;
/// `alpha = 1` is the Debye limit (which the validated parameter set cannot
/// itself represent).
pub fn dispersion_exact_with_alpha(
    omega: f64,
    params: &MaterialParams,
    alpha: f64,
) -> DispersionSample {
    assert!(omega > 0.0, "dispersion needs omega > 0");
    assert!(
        alpha > 0.0 && alpha <= 1.0,
        "fractional order must lie in (0, 1]"
    );
    let wt = omega * params.tau0();
    // (i w tau0)^alpha = (w tau0)^alpha exp(i pi alpha / 2) for w tau0 > 0.
    let q = Complex64::from_polar(wt.powf(alpha), 0.5 * core::f64::consts::PI * alpha);
    dispersion_from_q(omega, params, q)
}

/// Exact dispersion sample at the material's own order.
pub fn dispersion_exact(omega: f64, params: &MaterialParams) -> DispersionSample {
    dispersion_exact_with_alpha(omega, params, params.alpha())
}

/// Debye-model dispersion sample, `Q = i omega tau0`.
pub fn dispersion_debye(omega: f64, params: &MaterialParams) -> DispersionSample {
    assert!(omega > 0.0, "dispersion needs omega > 0");
    dispersion_from_q(omega, params, Complex64::new(0.0, omega * params.tau0()))
}

/// Dispersion sample of the relaxation-mode approximation,
/// `Q# = tau0^alpha B(omega)`.
pub fn dispersion_approx(
    omega: f64,
    params: &MaterialParams,
    quad: &DiffusiveQuadrature,
) -> DispersionSample {
    assert!(omega > 0.0, "dispersion needs omega > 0");
    let q = params.tau0_pow_alpha() * b_transfer(omega, quad);
    dispersion_from_q(omega, params, q)
}

/// L2 distance between a DG field and an exact profile, by `(k+3)`-point
/// Gauss quadrature per cell (one point beyond what the energy integrals
/// need, so the error of a degree-`k` field against a smooth profile is
/// resolved rather than aliased).
pub fn l2_error(field: &DgField, exact: impl Fn(f64) -> f64) -> f64 {
    let mesh = field.mesh();
    let (nodes, weights) = gauss_legendre(field.degree() + 3);
    let half_h = 0.5 * mesh.h();
    let mut total = 0.0;
    for j in 0..mesh.n_cells() {
        let mut cell = 0.0;
        for (&xi, &w) in nodes.iter().zip(&weights) {
            let d = field.eval_ref(j, xi) - exact(mesh.to_physical(j, xi));
            cell += w * d * d;
        }
        total += half_h * cell;
    }
    total.sqrt()
}

/// One row of a convergence table.
#[derive(Debug, Clone, Copy)]
pub struct ConvergenceRow {
    /// Cells at this level.
    pub n_cells: usize,
    /// L2 error of `E` at the final time.
    pub err_e: f64,
    /// Observed order vs the previous row (`NaN` on the first row or at the
    /// round-off floor).
    pub ord_e: f64,
    /// L2 error of `H`.
    pub err_h: f64,
    /// Observed order of `H`.
    pub ord_h: f64,
    /// L2 error of `P`.
    pub err_p: f64,
    /// Observed order of `P`.
    pub ord_p: f64,
}

/// Observed orders `log2(err[i-1]/err[i])` for a refinement sequence; the
/// first entry is `NaN`, as is any ratio where either error sits at the
/// round-off floor (below `1e-14`) and the order would be meaningless.
pub fn observed_orders(errors: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(errors.len());
    for (i, &cur) in errors.iter().enumerate() {
        if i == 0 {
            out.push(f64::NAN);
        } else {
            let prev = errors[i - 1];
            if prev < 1e-14 || cur < 1e-14 {
                out.push(f64::NAN);
            } else {
                out.push((prev / cur).log2());
            }
        }
    }
    out
}

/// Setup for a manufactured-solution convergence study on `[0, 2]`.
pub struct ConvergenceSetup<'a> {
    /// Fractional order; also selects the manufactured forcing.
    pub alpha: f64,
    /// Polynomial degree `k >= 1`.
    pub degree: usize,
    /// Calibrated quadrature (shared by all levels).
    pub quad: &'a DiffusiveQuadrature,
    /// Final time (`2.0` for the reference tables).
    pub t_final: f64,
    /// Time step per level is `tau_factor * h^2` (the square keeps the
    /// second-order time error below every spatial order tested).
    pub tau_factor: f64,
}

/// Runs the manufactured problem across mesh levels and reports L2 errors of
/// `E`, `H`, `P` at the final time with observed orders.
pub fn convergence_study(
    setup: &ConvergenceSetup<'_>,
    levels: &[usize],
) -> Result<Vec<ConvergenceRow>, StepError> {
    let case = ManufacturedSolution::new(setup.alpha)?;
    let params = case.params();
    let (x_minus, x_plus) = case.domain();
    let mut errs_e = Vec::with_capacity(levels.len());
    let mut errs_h = Vec::with_capacity(levels.len());
    let mut errs_p = Vec::with_capacity(levels.len());
    for &m in levels {
        let mesh = crate::dgcore::Mesh1D::new(x_minus, x_plus, m)?;
        let tau = setup.tau_factor * mesh.h() * mesh.h();
        let config = RunConfig {
            mesh,
            degree: setup.degree,
            params,
            quad: setup.quad,
            tau,
            t_final: setup.t_final,
            sample_every: 0,
            check_residuals: false,
        };
        let initial = SimState::zeros(mesh, setup.degree, setup.quad.len())?;
        let report = run_simulation(&config, initial, &case.sources())?;
        let t_end = report.state.t;
        errs_e.push(l2_error(&report.state.e, |x| case.exact_e(x, t_end)));
        errs_h.push(l2_error(&report.state.h, |x| case.exact_h(x, t_end)));
        errs_p.push(l2_error(&report.state.p, |x| case.exact_p(x, t_end)));
    }
    let ords_e = observed_orders(&errs_e);
    let ords_h = observed_orders(&errs_h);
    let ords_p = observed_orders(&errs_p);
    Ok(levels
        .iter()
        .enumerate()
        .map(|(i, &m)| ConvergenceRow {
            n_cells: m,
            err_e: errs_e[i],
            ord_e: ords_e[i],
            err_h: errs_h[i],
            ord_h: ords_h[i],
            err_p: errs_p[i],
            ord_p: ords_p[i],
        })
        .collect())
}
