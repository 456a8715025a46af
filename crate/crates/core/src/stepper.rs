//! Fast fully discrete solver: BDF2 in time with closed-form elimination of
//! the relaxation modes and the polarization, and one factored global solve
//! for the `(H, E)` pair per step.
//!
//! Each step solves, in sequence:
//!
//! 1. a block cyclic tridiagonal system for the stacked modal coefficients of
//!    `H^n` and `E^n` (factored once, reused every step),
//! 2. the closed-form polarization update
//!    `P^n = (eps0 (eps_s - eps_inf) E^n + G) / kappa`, where `G` gathers the
//!    BDF2 history of `P` and the modes plus the projected third source,
//! 3. the per-mode recovery
//!    `psi_l^n = (c_alpha lambda_l^(alpha-1) (C1 P^n + C2 P^(n-1) + C3 P^(n-2))
//!    - C2 psi_l^(n-1) - C3 psi_l^(n-2)) / (C1 + lambda_l)`.
//!
//! The first level is produced by one forward-Euler step that respects the
//! algebraic constraint between `E`, `P`, and the modes. Correctness is
//! gated on the four discrete equations holding to `1e-10` relative after
//! every step ([`step_residuals`]).
//!
//! Histories are two levels deep for every unknown; no full time history is
//! ever stored — locality in time is the entire point of replacing the
//! memory integral with relaxation modes.

use crate::dgcore::{DgError, DgField, DgOperators, Mesh1D};
use crate::diagnostics::{energy_sample, EnergySample};
use crate::linalg::{BlockCyclicSolver, LinAlgError};
use crate::material::{MaterialError, MaterialParams};
use crate::quadopt::{DiffusiveQuadrature, QuadError};
use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

/// Errors from workspace construction or time stepping.
#[derive(Debug)]
pub enum StepError {
    /// Time step must be positive and finite.
    BadTau {
        /// Offending value.
        tau: f64,
    },
    /// The run must take at least two steps (one bootstrap, one multistep).
    TooFewSteps {
        /// Steps the requested horizon allows.
        steps: usize,
    },
    /// The quadrature was calibrated for a different fractional order.
    AlphaMismatch {
        /// Order in the material parameters.
        params_alpha: f64,
        /// Order the quadrature carries.
        quad_alpha: f64,
    },
    /// Fields or operators do not share a mesh/degree.
    MeshMismatch,
    /// A discrete-equation residual exceeded the gate after a step.
    ResidualExceeded {
        /// 1-based step index.
        step: usize,
        /// Worst relative residual over the four equations.
        worst: f64,
    },
    /// Spatial-discretization error.
    Dg(DgError),
    /// Linear-algebra failure (singular factorization).
    LinAlg(LinAlgError),
    /// Invalid quadrature input.
    Quad(QuadError),
    /// Invalid material parameters.
    Material(MaterialError),
}

impl core::fmt::Display for StepError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            StepError::BadTau { tau } => write!(f, "time step must be positive, got {tau}"),
            StepError::TooFewSteps { steps } => {
                write!(f, "horizon allows only {steps} step(s); at least 2 are needed")
            }
            StepError::AlphaMismatch {
                params_alpha,
                quad_alpha,
            } => write!(
                f,
                "material order {params_alpha} differs from quadrature order {quad_alpha}"
            ),
            StepError::MeshMismatch => write!(f, "states/operators do not share mesh and degree"),
            StepError::ResidualExceeded { step, worst } => write!(
                f,
                "discrete-equation residual {worst:.3e} exceeded 1e-10 at step {step}"
            ),
            StepError::Dg(e) => write!(f, "{e}"),
            StepError::LinAlg(e) => write!(f, "{e}"),
            StepError::Quad(e) => write!(f, "{e}"),
            StepError::Material(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for StepError {}

impl From<DgError> for StepError {
    fn from(e: DgError) -> Self {
        StepError::Dg(e)
    }
}

impl From<LinAlgError> for StepError {
    fn from(e: LinAlgError) -> Self {
        StepError::LinAlg(e)
    }
}

impl From<QuadError> for StepError {
    fn from(e: QuadError) -> Self {
        StepError::Quad(e)
    }
}

impl From<MaterialError> for StepError {
    fn from(e: MaterialError) -> Self {
        StepError::Material(e)
    }
}

/// Complete solver state at one time level.
#[derive(Debug, Clone)]
pub struct SimState {
    /// Time this state belongs to.
    pub t: f64,
    /// Magnetic field.
    pub h: DgField,
    /// Electric field.
    pub e: DgField,
    /// Polarization.
    pub p: DgField,
    /// Relaxation modes, one field per pole.
    pub psi: Vec<DgField>,
}

impl SimState {
    /// All-zero state at `t = 0` with `l` relaxation modes.
    pub fn zeros(mesh: Mesh1D, degree: usize, l: usize) -> Result<Self, DgError> {
        let zero = DgField::zeros(mesh, degree)?;
        Ok(SimState {
            t: 0.0,
            h: zero.clone(),
            e: zero.clone(),
            p: zero.clone(),
            psi: vec![zero; l],
        })
    }

    /// Initial state from projected `(E, H)` data; `P` and every mode start
    /// at zero as the model requires.
    pub fn from_initial_eh(e: DgField, h: DgField, l: usize) -> Result<Self, StepError> {
        if !e.compatible(&h) {
            return Err(StepError::MeshMismatch);
        }
        let zero = DgField::zeros(e.mesh(), e.degree())?;
        Ok(SimState {
            t: 0.0,
            h,
            e,
            p: zero.clone(),
            psi: vec![zero; l],
        })
    }

    /// True when every field (including all modes) shares mesh and degree.
    pub fn is_consistent(&self) -> bool {
        self.h.compatible(&self.e)
            && self.h.compatible(&self.p)
            && self.psi.iter().all(|m| self.h.compatible(m))
    }
}

/// Source functions `(x, t) -> value` for the three equations; `None` is the
/// zero source (its projection is skipped entirely).
pub struct SourceSet {
    f1: Option<Box<dyn Fn(f64, f64) -> f64 + Send + Sync>>,
    f2: Option<Box<dyn Fn(f64, f64) -> f64 + Send + Sync>>,
    f3: Option<Box<dyn Fn(f64, f64) -> f64 + Send + Sync>>,
}

impl SourceSet {
    /// All three sources identically zero.
    pub fn zero() -> Self {
        SourceSet {
            f1: None,
            f2: None,
            f3: None,
        }
    }

    /// Sources from explicit closures (`None` entries stay zero).
    #[allow(clippy::type_complexity)]
    pub fn new(
        f1: Option<Box<dyn Fn(f64, f64) -> f64 + Send + Sync>>,
        f2: Option<Box<dyn Fn(f64, f64) -> f64 + Send + Sync>>,
        f3: Option<Box<dyn Fn(f64, f64) -> f64 + Send + Sync>>,
    ) -> Self {
        SourceSet { f1, f2, f3 }
    }

    /// Magnetic-equation source, if any.
    pub fn f1(&self) -> Option<&(dyn Fn(f64, f64) -> f64 + Send + Sync)> {
        self.f1.as_deref()
    }

    /// Electric-equation source, if any.
    pub fn f2(&self) -> Option<&(dyn Fn(f64, f64) -> f64 + Send + Sync)> {
        self.f2.as_deref()
    }

    /// Polarization-equation source, if any.
    pub fn f3(&self) -> Option<&(dyn Fn(f64, f64) -> f64 + Send + Sync)> {
        self.f3.as_deref()
    }
}

/// BDF2 coefficients `(C1, C2, C3) = (3/(2 tau), -2/tau, 1/(2 tau))` plus the
/// kernel constant `c_alpha = sin(pi alpha)/pi`.
pub fn bdf2_coefficients(tau: f64, alpha: f64) -> Result<(f64, f64, f64, f64), StepError> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(StepError::BadTau { tau });
    }
    Ok((
        1.5 / tau,
        -2.0 / tau,
        0.5 / tau,
        crate::material::c_alpha(alpha),
    ))
}

/// Everything the per-step work needs: BDF2 constants, the eliminated-system
/// scalars, per-pole coefficients, the factored `(H, E)` solver, and scratch.
pub struct BdfWorkspace<'a> {
    ops: &'a DgOperators,
    quad: &'a DiffusiveQuadrature,
    params: MaterialParams,
    tau: f64,
    c1: f64,
    c2: f64,
    c3: f64,
    c_alpha: f64,
    /// `1 + tau0^alpha C1 c_alpha sum_l zeta_l lambda_l^(alpha-1)/(C1+lambda_l)`.
    kappa: f64,
    /// Per pole: `c_alpha lambda_l^(alpha-1) / (C1 + lambda_l)`.
    pole_gain: Vec<f64>,
    /// Per pole: `1 / (C1 + lambda_l)`.
    pole_hist: Vec<f64>,
    solver: BlockCyclicSolver,
    // Scratch (sized once): projected sources, history field, solve vector.
    pf1: DgField,
    pf2: DgField,
    pf3: DgField,
    g: DgField,
    rhs: Vec<f64>,
}

impl<'a> BdfWorkspace<'a> {
    /// Builds the workspace and factors the global `(H, E)` system for the
    /// given step size; the factorization is reused across all steps.
    pub fn new(
        ops: &'a DgOperators,
        quad: &'a DiffusiveQuadrature,
        params: MaterialParams,
        tau: f64,
    ) -> Result<Self, StepError> {
        let (c1, c2, c3, c_alpha) = bdf2_coefficients(tau, params.alpha())?;
        BdfWorkspace::with_coefficients(ops, quad, params, tau, c1, c2, c3, c_alpha)
    }

    /// Same machinery with backward-Euler coefficients `(1/tau, -1/tau, 0)`.
    /// Used for the startup step, where the one-step method must dissipate
    /// energy just like the main integrator.
    fn implicit_euler(
        ops: &'a DgOperators,
        quad: &'a DiffusiveQuadrature,
        params: MaterialParams,
        tau: f64,
    ) -> Result<Self, StepError> {
        let (_, _, _, c_alpha) = bdf2_coefficients(tau, params.alpha())?;
        BdfWorkspace::with_coefficients(ops, quad, params, tau, 1.0 / tau, -1.0 / tau, 0.0, c_alpha)
    }

    #[allow(clippy::too_many_arguments)]
    fn with_coefficients(
        ops: &'a DgOperators,
        quad: &'a DiffusiveQuadrature,
        params: MaterialParams,
        tau: f64,
        c1: f64,
        c2: f64,
        c3: f64,
        c_alpha: f64,
    ) -> Result<Self, StepError> {
        if quad.alpha() != params.alpha() {
            return Err(StepError::AlphaMismatch {
                params_alpha: params.alpha(),
                quad_alpha: quad.alpha(),
            });
        }
        let alpha = params.alpha();
        let t0a = params.tau0_pow_alpha();

        let l = quad.len();
        let mut pole_gain = Vec::with_capacity(l);
        let mut pole_hist = Vec::with_capacity(l);
        let mut kappa_sum = 0.0;
        for i in 0..l {
            let lam = quad.abscissae()[i];
            let zeta = quad.weights()[i];
            let gain = c_alpha * lam.powf(alpha - 1.0) / (c1 + lam);
            pole_gain.push(gain);
            pole_hist.push(1.0 / (c1 + lam));
            kappa_sum += zeta * gain;
        }
        let kappa = 1.0 + t0a * c1 * kappa_sum;
        debug_assert!(kappa > 1.0);
        // Effective permittivity after eliminating P from the E equation.
        let eps_eff = params.eps_inf_abs() + params.delta_eps_abs() / kappa;
        let solver = assemble_field_solver(ops, params.mu0() * c1, eps_eff * c1)?;

        let mesh = ops.mesh();
        let k = ops.basis().degree();
        let zero = DgField::zeros(mesh, k)?;
        let n_unknowns = 2 * mesh.n_cells() * (k + 1);
        Ok(BdfWorkspace {
            ops,
            quad,
            params,
            tau,
            c1,
            c2,
            c3,
            c_alpha,
            kappa,
            pole_gain,
            pole_hist,
            solver,
            pf1: zero.clone(),
            pf2: zero.clone(),
            pf3: zero.clone(),
            g: zero,
            rhs: vec![0.0; n_unknowns],
        })
    }

    /// Time step the factorization was built for.
    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Leading BDF2 coefficient `C1 = 3/(2 tau)`.
    pub fn c1(&self) -> f64 {
        self.c1
    }

    /// History coefficient `C2 = -2/tau`.
    pub fn c2(&self) -> f64 {
        self.c2
    }

    /// History coefficient `C3 = 1/(2 tau)`.
    pub fn c3(&self) -> f64 {
        self.c3
    }

    /// Kernel constant `sin(pi alpha)/pi`.
    pub fn c_alpha(&self) -> f64 {
        self.c_alpha
    }

    /// Elimination scalar `kappa`; always `> 1` for a feasible quadrature.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Material parameters the workspace was built with.
    pub fn params(&self) -> MaterialParams {
        self.params
    }

    /// Operators the workspace applies.
    pub fn ops(&self) -> &DgOperators {
        self.ops
    }

    /// Quadrature driving the relaxation modes.
    pub fn quad(&self) -> &DiffusiveQuadrature {
        self.quad
    }

    /// Projects one source at time `t` into `out` (zero source clears it).
    fn project_source(
        &self,
        src: Option<&(dyn Fn(f64, f64) -> f64 + Send + Sync)>,
        t: f64,
        out: &mut DgField,
    ) {
        match src {
            Some(f) => self.ops.basis().project_into(|x| f(x, t), out),
            None => out.coeffs_mut().iter_mut().for_each(|c| *c = 0.0),
        }
    }
}

/// Factors the global `(H, E)` block cyclic tridiagonal matrix.
///
/// Per cell the unknown is `[H_j; E_j]` (each `k+1` modes). `h_scale` and
/// `e_scale` are the coefficients multiplying `(h/2) H_j` and `(h/2) E_j` on
/// the diagonal — `mu0 C1` and `eps_eff C1` for the BDF2 scheme — while the
/// flux blocks are shared by every scheme that couples the pair implicitly.
pub(crate) fn assemble_field_solver(
    ops: &DgOperators,
    h_scale: f64,
    e_scale: f64,
) -> Result<BlockCyclicSolver, LinAlgError> {
    let n = ops.basis().n_modes();
    let m = 2 * n;
    let nb = ops.mesh().n_cells();
    let half_h = 0.5 * ops.mesh().h();
    let z = ops.impedance();
    let y = ops.admittance();
    let (d_c, u_c, l_c) = ops.central_blocks();
    let (d_j, u_j, l_j) = ops.jump_blocks();

    let mut a_diag = vec![0.0; m * m];
    let mut c_sup = vec![0.0; m * m];
    let mut b_sub = vec![0.0; m * m];
    for i in 0..n {
        for jj in 0..n {
            let idx = i * n + jj;
            // H row, H column (top-left) and E column (top-right).
            a_diag[i * m + jj] = -0.5 * z * d_j[idx];
            a_diag[i * m + n + jj] = -d_c[idx];
            // E row blocks (bottom-left, bottom-right).
            a_diag[(n + i) * m + jj] = -d_c[idx];
            a_diag[(n + i) * m + n + jj] = -0.5 * y * d_j[idx];

            c_sup[i * m + jj] = -0.5 * z * u_j[idx];
            c_sup[i * m + n + jj] = -u_c[idx];
            c_sup[(n + i) * m + jj] = -u_c[idx];
            c_sup[(n + i) * m + n + jj] = -0.5 * y * u_j[idx];

            b_sub[i * m + jj] = -0.5 * z * l_j[idx];
            b_sub[i * m + n + jj] = -l_c[idx];
            b_sub[(n + i) * m + jj] = -l_c[idx];
            b_sub[(n + i) * m + n + jj] = -0.5 * y * l_j[idx];
        }
        a_diag[i * m + i] += half_h * h_scale;
        a_diag[(n + i) * m + n + i] += half_h * e_scale;
    }
    BlockCyclicSolver::new(nb, m, &a_diag, &b_sub, &c_sup)
}

/// Closed-form mode recovery from the new and historical polarization:
/// `psi_l^n = (c_alpha lambda_l^(alpha-1) (C1 P^n + C2 P^(n-1) + C3 P^(n-2))
/// - C2 psi_l^(n-1) - C3 psi_l^(n-2)) / (C1 + lambda_l)`.
pub fn eliminate_psi(
    p_n: &DgField,
    p_nm1: &DgField,
    p_nm2: &DgField,
    psi_nm1: &[DgField],
    psi_nm2: &[DgField],
    ws: &BdfWorkspace<'_>,
) -> Result<Vec<DgField>, StepError> {
    let l = ws.quad.len();
    if psi_nm1.len() != l || psi_nm2.len() != l {
        return Err(StepError::MeshMismatch);
    }
    let (c1, c2, c3) = (ws.c1, ws.c2, ws.c3);
    let mut out = Vec::with_capacity(l);
    for li in 0..l {
        let gain = ws.pole_gain[li];
        let hist = ws.pole_hist[li];
        let mut f = DgField::zeros(p_n.mesh(), p_n.degree())?;
        for (i, c) in f.coeffs_mut().iter_mut().enumerate() {
            let p_comb = c1 * p_n.coeffs()[i] + c2 * p_nm1.coeffs()[i] + c3 * p_nm2.coeffs()[i];
            let psi_comb = c2 * psi_nm1[li].coeffs()[i] + c3 * psi_nm2[li].coeffs()[i];
            *c = gain * p_comb - hist * psi_comb;
        }
        out.push(f);
    }
    Ok(out)
}

/// Closed-form polarization update
/// `P^n = (eps0 (eps_s - eps_inf) E^n + G) / kappa`, where `G` collects the
/// projected source `F3` and the BDF2 histories of `P` and the modes.
pub fn polarization_solve(
    e_n: &DgField,
    p_nm1: &DgField,
    p_nm2: &DgField,
    psi_nm1: &[DgField],
    psi_nm2: &[DgField],
    f3_n: &DgField,
    ws: &BdfWorkspace<'_>,
) -> Result<DgField, StepError> {
    let mut g = f3_n.clone();
    accumulate_polarization_history(p_nm1, p_nm2, psi_nm1, psi_nm2, ws, &mut g)?;
    let delta = ws.params.delta_eps_abs();
    let mut p = DgField::zeros(e_n.mesh(), e_n.degree())?;
    for (i, c) in p.coeffs_mut().iter_mut().enumerate() {
        *c = (delta * e_n.coeffs()[i] + g.coeffs()[i]) / ws.kappa;
    }
    Ok(p)
}

/// Adds the polarization history term `G - F3` into `g` (which must already
/// hold the projected `F3`, or zero):
/// `-tau0^a c_a sum_l zeta_l lambda_l^(a-1)/(C1+lambda_l) (C2 P^(n-1) + C3 P^(n-2))
///  + tau0^a sum_l zeta_l/(C1+lambda_l) (C2 psi_l^(n-1) + C3 psi_l^(n-2))`.
fn accumulate_polarization_history(
    p_nm1: &DgField,
    p_nm2: &DgField,
    psi_nm1: &[DgField],
    psi_nm2: &[DgField],
    ws: &BdfWorkspace<'_>,
    g: &mut DgField,
) -> Result<(), StepError> {
    let l = ws.quad.len();
    if psi_nm1.len() != l || psi_nm2.len() != l {
        return Err(StepError::MeshMismatch);
    }
    let t0a = ws.params.tau0_pow_alpha();
    let (c2, c3) = (ws.c2, ws.c3);
    // Scalar multiplier of the P-history is identical for every coefficient.
    let p_factor: f64 = -t0a
        * ws.quad
            .weights()
            .iter()
            .zip(&ws.pole_gain)
            .map(|(&z, &gain)| z * gain)
            .sum::<f64>();
    for (i, gc) in g.coeffs_mut().iter_mut().enumerate() {
        let p_hist = c2 * p_nm1.coeffs()[i] + c3 * p_nm2.coeffs()[i];
        let mut psi_part = 0.0;
        for li in 0..l {
            let psi_hist = c2 * psi_nm1[li].coeffs()[i] + c3 * psi_nm2[li].coeffs()[i];
            psi_part += ws.quad.weights()[li] * ws.pole_hist[li] * psi_hist;
        }
        *gc += p_factor * p_hist + t0a * psi_part;
    }
    Ok(())
}

/// First step of a run: one implicit (backward) Euler step, honoring the
/// algebraic constraint between `E^1`, `P^1`, and the modes at `t = tau`.
///
/// The startup is implicit for the same reason the main integrator is: an
/// explicit Euler step adds `O(tau^2)` to the total energy, enough to break
/// its non-increase on the very first sample pair, while the backward step is
/// unconditionally dissipative at the same first-order local accuracy.
/// Concretely this is the two-history update with coefficients
/// `(1/tau, -1/tau, 0)` in place of the BDF2 triple, so the factored-solve and
/// elimination pipeline is shared.
pub fn bootstrap_first_step(
    state0: &SimState,
    ws: &mut BdfWorkspace<'_>,
    sources: &SourceSet,
) -> Result<SimState, StepError> {
    if !state0.is_consistent() || state0.psi.len() != ws.quad.len() {
        return Err(StepError::MeshMismatch);
    }
    let mut euler = BdfWorkspace::implicit_euler(ws.ops, ws.quad, ws.params, ws.tau)?;
    bdf2_step(state0, state0, &mut euler, sources, state0.t + ws.tau)
}

/// One BDF2 step to time `t_n`, given the two previous states.
pub fn bdf2_step(
    state_nm1: &SimState,
    state_nm2: &SimState,
    ws: &mut BdfWorkspace<'_>,
    sources: &SourceSet,
    t_n: f64,
) -> Result<SimState, StepError> {
    let mesh = ws.ops.mesh();
    let k = ws.ops.basis().degree();
    let mut out = SimState::zeros(mesh, k, ws.quad.len())?;
    bdf2_step_into(state_nm1, state_nm2, ws, sources, t_n, &mut out)?;
    Ok(out)
}

/// In-place BDF2 step; `out` supplies the storage for the new state.
pub fn bdf2_step_into(
    state_nm1: &SimState,
    state_nm2: &SimState,
    ws: &mut BdfWorkspace<'_>,
    sources: &SourceSet,
    t_n: f64,
    out: &mut SimState,
) -> Result<(), StepError> {
    let l = ws.quad.len();
    if !state_nm1.is_consistent()
        || !state_nm2.is_consistent()
        || state_nm1.psi.len() != l
        || state_nm2.psi.len() != l
        || out.psi.len() != l
    {
        return Err(StepError::MeshMismatch);
    }
    let mesh = ws.ops.mesh();
    let n = ws.ops.basis().n_modes();
    let m = 2 * n;
    let half_h = 0.5 * mesh.h();
    let params = ws.params;
    let (c1, c2, c3) = (ws.c1, ws.c2, ws.c3);

    // Projected sources at t_n.
    let (mut pf1, mut pf2, mut pf3) = (
        core::mem::replace(&mut ws.pf1, DgField::zeros(mesh, 1)?),
        core::mem::replace(&mut ws.pf2, DgField::zeros(mesh, 1)?),
        core::mem::replace(&mut ws.pf3, DgField::zeros(mesh, 1)?),
    );
    ws.project_source(sources.f1(), t_n, &mut pf1);
    ws.project_source(sources.f2(), t_n, &mut pf2);
    ws.project_source(sources.f3(), t_n, &mut pf3);

    // G = F3^n + polarization history.
    let mut g = core::mem::replace(&mut ws.g, DgField::zeros(mesh, 1)?);
    g.coeffs_mut().copy_from_slice(pf3.coeffs());
    accumulate_polarization_history(
        &state_nm1.p,
        &state_nm2.p,
        &state_nm1.psi,
        &state_nm2.psi,
        ws,
        &mut g,
    )?;

    // Right-hand side, interleaved [H_j; E_j] per cell and scaled by h/2.
    let mu0 = params.mu0();
    let eps_inf = params.eps_inf_abs();
    for j in 0..mesh.n_cells() {
        let base = j * m;
        for i in 0..n {
            let idx = j * n + i;
            let h_hist = c2 * state_nm1.h.coeffs()[idx] + c3 * state_nm2.h.coeffs()[idx];
            ws.rhs[base + i] = half_h * (pf1.coeffs()[idx] - mu0 * h_hist);
            let e_hist = c2 * state_nm1.e.coeffs()[idx] + c3 * state_nm2.e.coeffs()[idx];
            let p_hist = c2 * state_nm1.p.coeffs()[idx] + c3 * state_nm2.p.coeffs()[idx];
            ws.rhs[base + n + i] = half_h
                * (pf2.coeffs()[idx]
                    - c1 * g.coeffs()[idx] / ws.kappa
                    - eps_inf * e_hist
                    - p_hist);
        }
    }
    ws.solver.solve(&mut ws.rhs);

    for j in 0..mesh.n_cells() {
        let base = j * m;
        for i in 0..n {
            let idx = j * n + i;
            out.h.coeffs_mut()[idx] = ws.rhs[base + i];
            out.e.coeffs_mut()[idx] = ws.rhs[base + n + i];
        }
    }

    // P^n from the closed form, then the modes.
    let delta = params.delta_eps_abs();
    for (i, c) in out.p.coeffs_mut().iter_mut().enumerate() {
        *c = (delta * out.e.coeffs()[i] + g.coeffs()[i]) / ws.kappa;
    }
    for li in 0..l {
        let gain = ws.pole_gain[li];
        let hist = ws.pole_hist[li];
        for (i, c) in out.psi[li].coeffs_mut().iter_mut().enumerate() {
            let p_comb = c1 * out.p.coeffs()[i]
                + c2 * state_nm1.p.coeffs()[i]
                + c3 * state_nm2.p.coeffs()[i];
            let psi_comb =
                c2 * state_nm1.psi[li].coeffs()[i] + c3 * state_nm2.psi[li].coeffs()[i];
            *c = gain * p_comb - hist * psi_comb;
        }
    }
    out.t = t_n;

    // Return the scratch fields.
    ws.pf1 = pf1;
    ws.pf2 = pf2;
    ws.pf3 = pf3;
    ws.g = g;
    Ok(())
}

/// Relative L2 residuals of the four discrete equations after a BDF2 step:
/// magnetic, electric, polarization constraint, and (worst-over-poles) mode
/// equation. Each residual is normalized by the largest L2 norm among the
/// terms entering its equation.
pub fn step_residuals(
    state_n: &SimState,
    state_nm1: &SimState,
    state_nm2: &SimState,
    ws: &BdfWorkspace<'_>,
    sources: &SourceSet,
) -> Result<[f64; 4], StepError> {
    let mesh = ws.ops.mesh();
    let k = ws.ops.basis().degree();
    let (c1, c2, c3) = (ws.c1, ws.c2, ws.c3);
    let params = ws.params;
    let t_n = state_n.t;
    let l = ws.quad.len();

    let mut pf = DgField::zeros(mesh, k)?;
    let mut term = DgField::zeros(mesh, k)?;
    let combo = |a: &DgField, b: &DgField, c: &DgField, out: &mut DgField| {
        for (i, o) in out.coeffs_mut().iter_mut().enumerate() {
            *o = c1 * a.coeffs()[i] + c2 * b.coeffs()[i] + c3 * c.coeffs()[i];
        }
    };

    // Magnetic equation: mu0 (C1 H^n + ...) - D_E(E^n, H^n) - F1^n.
    let mut res = DgField::zeros(mesh, k)?;
    combo(&state_n.h, &state_nm1.h, &state_nm2.h, &mut res);
    for c in res.coeffs_mut() {
        *c *= params.mu0();
    }
    let mut scale = res.l2_norm();
    ws.ops.d_e(&state_n.e, &state_n.h, &mut term);
    scale = scale.max(term.l2_norm());
    res.add_scaled(-1.0, &term)?;
    ws.project_source(sources.f1(), t_n, &mut pf);
    scale = scale.max(pf.l2_norm());
    res.add_scaled(-1.0, &pf)?;
    let r1 = res.l2_norm() / scale.max(1e-300);

    // Electric equation.
    combo(&state_n.e, &state_nm1.e, &state_nm2.e, &mut res);
    for c in res.coeffs_mut() {
        *c *= params.eps_inf_abs();
    }
    let mut scale = res.l2_norm();
    combo(&state_n.p, &state_nm1.p, &state_nm2.p, &mut term);
    scale = scale.max(term.l2_norm());
    res.add_scaled(1.0, &term)?;
    ws.ops.d_h(&state_n.h, &state_n.e, &mut term);
    scale = scale.max(term.l2_norm());
    res.add_scaled(-1.0, &term)?;
    ws.project_source(sources.f2(), t_n, &mut pf);
    scale = scale.max(pf.l2_norm());
    res.add_scaled(-1.0, &pf)?;
    let r2 = res.l2_norm() / scale.max(1e-300);

    // Polarization constraint: tau0^a sum zeta psi^n + P^n
    // - eps0 (eps_s - eps_inf) E^n - F3^n.
    let t0a = params.tau0_pow_alpha();
    res.coeffs_mut().copy_from_slice(state_n.p.coeffs());
    let mut scale = res.l2_norm();
    term.coeffs_mut().iter_mut().for_each(|c| *c = 0.0);
    for li in 0..l {
        term.add_scaled(t0a * ws.quad.weights()[li], &state_n.psi[li])?;
    }
    scale = scale.max(term.l2_norm());
    res.add_scaled(1.0, &term)?;
    for (i, c) in term.coeffs_mut().iter_mut().enumerate() {
        *c = params.delta_eps_abs() * state_n.e.coeffs()[i];
    }
    scale = scale.max(term.l2_norm());
    res.add_scaled(-1.0, &term)?;
    ws.project_source(sources.f3(), t_n, &mut pf);
    scale = scale.max(pf.l2_norm());
    res.add_scaled(-1.0, &pf)?;
    let r3 = res.l2_norm() / scale.max(1e-300);

    // Mode equations, worst over poles:
    // (C1 + lambda) psi^n + C2 psi^(n-1) + C3 psi^(n-2)
    // - c_alpha lambda^(alpha-1) (C1 P^n + C2 P^(n-1) + C3 P^(n-2)).
    let mut r4: f64 = 0.0;
    let alpha = params.alpha();
    let mut p_comb = DgField::zeros(mesh, k)?;
    combo(&state_n.p, &state_nm1.p, &state_nm2.p, &mut p_comb);
    for li in 0..l {
        let lam = ws.quad.abscissae()[li];
        let gain = ws.c_alpha * lam.powf(alpha - 1.0);
        combo(
            &state_n.psi[li],
            &state_nm1.psi[li],
            &state_nm2.psi[li],
            &mut res,
        );
        let mut scale = res.l2_norm();
        for (i, c) in term.coeffs_mut().iter_mut().enumerate() {
            *c = lam * state_n.psi[li].coeffs()[i];
        }
        scale = scale.max(term.l2_norm());
        res.add_scaled(1.0, &term)?;
        for (i, c) in term.coeffs_mut().iter_mut().enumerate() {
            *c = gain * p_comb.coeffs()[i];
        }
        scale = scale.max(term.l2_norm());
        res.add_scaled(-1.0, &term)?;
        r4 = r4.max(res.l2_norm() / scale.max(1e-300));
    }

    Ok([r1, r2, r3, r4])
}

/// Time derivatives of the source-free semi-discrete system at one state,
/// assuming the state satisfies the algebraic polarization constraint.
///
/// Used to verify the continuous-in-time energy identity at the spatially
/// discrete level.
pub struct SemiDiscreteRates {
    /// `dH/dt`.
    pub h_dot: DgField,
    /// `dE/dt`.
    pub e_dot: DgField,
    /// `dP/dt`.
    pub p_dot: DgField,
    /// `dpsi_l/dt`, one per pole.
    pub psi_dot: Vec<DgField>,
}

/// Computes the rates. With `sigma = tau0^a c_a sum zeta lambda^(a-1)`,
/// `w = tau0^a sum zeta lambda psi`, and `R_E = D_H(H, E)`:
/// `dE/dt = ((1+sigma) R_E - w) / (eps_inf (1+sigma) + delta_eps)`,
/// `dP/dt = (delta_eps R_E + eps_inf w) / (same)`,
/// `dpsi/dt = -lambda psi + c_a lambda^(a-1) dP/dt`,
/// `dH/dt = D_E(E, H) / mu0`.
pub fn semi_discrete_rates(
    state: &SimState,
    ops: &DgOperators,
    params: &MaterialParams,
    quad: &DiffusiveQuadrature,
) -> Result<SemiDiscreteRates, StepError> {
    if !state.is_consistent() || state.psi.len() != quad.len() {
        return Err(StepError::MeshMismatch);
    }
    let mesh = state.h.mesh();
    let k = state.h.degree();
    let alpha = params.alpha();
    let t0a = params.tau0_pow_alpha();
    let ca = params.c_alpha();

    let mut h_dot = DgField::zeros(mesh, k)?;
    ops.d_e(&state.e, &state.h, &mut h_dot);
    for c in h_dot.coeffs_mut() {
        *c /= params.mu0();
    }

    let mut r_e = DgField::zeros(mesh, k)?;
    ops.d_h(&state.h, &state.e, &mut r_e);

    let mut sigma = 0.0;
    for (&z, &lam) in quad.weights().iter().zip(quad.abscissae()) {
        sigma += t0a * ca * z * lam.powf(alpha - 1.0);
    }
    let mut w = DgField::zeros(mesh, k)?;
    for (li, (&z, &lam)) in quad.weights().iter().zip(quad.abscissae()).enumerate() {
        w.add_scaled(t0a * z * lam, &state.psi[li])?;
    }

    let eps_inf = params.eps_inf_abs();
    let delta = params.delta_eps_abs();
    let denom = eps_inf * (1.0 + sigma) + delta;
    let mut e_dot = DgField::zeros(mesh, k)?;
    let mut p_dot = DgField::zeros(mesh, k)?;
    for i in 0..e_dot.coeffs().len() {
        let (rv, wv) = (r_e.coeffs()[i], w.coeffs()[i]);
        e_dot.coeffs_mut()[i] = ((1.0 + sigma) * rv - wv) / denom;
        p_dot.coeffs_mut()[i] = (delta * rv + eps_inf * wv) / denom;
    }

    let mut psi_dot = Vec::with_capacity(quad.len());
    for (li, (&_z, &lam)) in quad.weights().iter().zip(quad.abscissae()).enumerate() {
        let gain = ca * lam.powf(alpha - 1.0);
        let mut f = DgField::zeros(mesh, k)?;
        for (i, c) in f.coeffs_mut().iter_mut().enumerate() {
            *c = -lam * state.psi[li].coeffs()[i] + gain * p_dot.coeffs()[i];
        }
        psi_dot.push(f);
    }

    Ok(SemiDiscreteRates {
        h_dot,
        e_dot,
        p_dot,
        psi_dot,
    })
}

/// Polarization that satisfies the source-free algebraic constraint for the
/// given electric field and modes:
/// `P = eps0 (eps_s - eps_inf) E - tau0^a sum_l zeta_l psi_l`.
pub fn constraint_consistent_polarization(
    e: &DgField,
    psi: &[DgField],
    params: &MaterialParams,
    quad: &DiffusiveQuadrature,
) -> Result<DgField, StepError> {
    if psi.len() != quad.len() {
        return Err(StepError::MeshMismatch);
    }
    let mut p = e.clone();
    for c in p.coeffs_mut() {
        *c *= params.delta_eps_abs();
    }
    let t0a = params.tau0_pow_alpha();
    for (li, &z) in quad.weights().iter().enumerate() {
        p.add_scaled(-t0a * z, &psi[li])?;
    }
    Ok(p)
}

/// Run configuration for [`run_simulation`].
pub struct RunConfig<'a> {
    /// Spatial mesh.
    pub mesh: Mesh1D,
    /// Polynomial degree `k >= 1`.
    pub degree: usize,
    /// Material parameters.
    pub params: MaterialParams,
    /// Calibrated diffusive quadrature.
    pub quad: &'a DiffusiveQuadrature,
    /// Time step.
    pub tau: f64,
    /// Final time; rounded down to a whole number of steps with a warning
    /// when not an integer multiple of `tau`.
    pub t_final: f64,
    /// Emit an energy sample every this many steps (`0`: only initial and
    /// final states are sampled). The initial and final states are always
    /// included.
    pub sample_every: usize,
    /// When set, verify the four discrete-equation residuals after every
    /// BDF2 step and fail the run if any exceeds `1e-10`.
    pub check_residuals: bool,
}

/// Outcome of a completed run.
pub struct RunReport {
    /// Number of time steps taken (bootstrap included).
    pub steps: usize,
    /// Final state.
    pub state: SimState,
    /// Energy samples at the requested cadence.
    pub samples: Vec<EnergySample>,
    /// Human-readable warnings (horizon rounding and similar).
    pub warnings: Vec<String>,
}

/// Advances `initial` (which must sit at `t = 0` with zero polarization and
/// modes) to the final time with one bootstrap step plus BDF2, collecting
/// energy samples.
pub fn run_simulation(
    config: &RunConfig<'_>,
    initial: SimState,
    sources: &SourceSet,
) -> Result<RunReport, StepError> {
    let tau = config.tau;
    if !(tau.is_finite() && tau > 0.0) {
        return Err(StepError::BadTau { tau });
    }
    let mut warnings = Vec::new();
    let ratio = config.t_final / tau;
    let mut n_steps = ratio.floor() as usize;
    // Absorb representation noise: 2499.9999999 steps means 2500.
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

    let ops = crate::dgcore::assemble_operators(config.mesh, config.degree, &config.params)?;
    let mut ws = BdfWorkspace::new(&ops, config.quad, config.params, tau)?;

    let mut samples = Vec::new();
    let sample = |state: &SimState, samples: &mut Vec<EnergySample>| {
        samples.push(energy_sample(state, &config.params, config.quad));
    };

    sample(&initial, &mut samples);
    let state1 = bootstrap_first_step(&initial, &mut ws, sources)?;
    if config.sample_every > 0 && 1 % config.sample_every == 0 && n_steps > 1 {
        sample(&state1, &mut samples);
    }

    // Rotating storage: previous-previous, previous, next.
    let mut oldest = initial;
    let mut prev = state1;
    let mut next = SimState::zeros(config.mesh, config.degree, config.quad.len())?;
    for step in 2..=n_steps {
        let t_n = step as f64 * tau;
        bdf2_step_into(&prev, &oldest, &mut ws, sources, t_n, &mut next)?;
        if config.check_residuals {
            let res = step_residuals(&next, &prev, &oldest, &ws, sources)?;
            let worst = res.iter().fold(0.0f64, |m, &r| m.max(r));
            if worst > 1e-10 {
                return Err(StepError::ResidualExceeded { step, worst });
            }
        }
        // Rotate: oldest <- prev <- next <- (recycled oldest).
        core::mem::swap(&mut oldest, &mut prev);
        core::mem::swap(&mut prev, &mut next);
        let at_end = step == n_steps;
        if at_end || (config.sample_every > 0 && step % config.sample_every == 0) {
            sample(&prev, &mut samples);
        }
    }

    Ok(RunReport {
        steps: n_steps,
        state: prev,
        samples,
        warnings,
    })
}
