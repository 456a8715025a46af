//! Calibration of the discrete diffusive representation.
//!
//! The Caputo derivative of order `alpha` acting on the polarization is
//! replaced by `L` relaxation modes: `d^alpha P/dt^alpha ~ sum_l zeta_l psi_l`
//! where each `psi_l` relaxes at rate `lambda_l` and is driven by
//! `c_alpha lambda_l^(alpha-1) dP/dt`. Quality is judged in the frequency
//! domain through
//!
//! ```text
//! chi(omega) = B(omega) / (i omega)^alpha,
//! B(omega)   = c_alpha * (i omega) * sum_l zeta_l lambda_l^(alpha-1) / (i omega + lambda_l),
//! ```
//!
//! which should be 1 exactly. The weights and abscissae are fitted by
//! minimizing `sum_m |chi(omega_m) - 1|^2` over log-spaced samples of a target
//! band, starting from a modified Gauss-Jacobi rule and staying inside the
//! constraint box `zeta_l > 0`, `0 < lambda_l < 10 omega_max` by construction:
//! the optimizer works on `zeta_l = exp(u_l)`, `lambda_l = 10 omega_max *
//! sigmoid(v_l)` with a damped Gauss-Newton (Levenberg-Marquardt) iteration
//! built on the analytic Jacobian of the residuals.

use crate::linalg::{sym_tridiag_eigen, DenseQr, LinAlgError};
use crate::material::c_alpha;
use crate::math::gamma;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

/// Ratio of the constraint-box ceiling to the band's top frequency.
const LAMBDA_BOX_FACTOR: f64 = 10.0;

/// Errors from band construction, quadrature validation, or calibration.
#[derive(Debug, Clone)]
pub enum QuadError {
    /// Band edges must satisfy `0 < omega_min < omega_max`.
    BadBand {
        /// Lower edge.
        omega_min: f64,
        /// Upper edge.
        omega_max: f64,
    },
    /// At least two frequency samples are needed for a fit.
    TooFewSamples {
        /// Offending count.
        n_samples: usize,
    },
    /// A quadrature needs at least one pole.
    Empty,
    /// Weight/abscissa vectors disagree in length.
    LengthMismatch {
        /// Number of weights.
        weights: usize,
        /// Number of abscissae.
        abscissae: usize,
    },
    /// A pole violates the positivity/box constraints.
    InfeasiblePole {
        /// Index of the offending pole.
        index: usize,
        /// Its weight.
        zeta: f64,
        /// Its abscissa.
        lambda: f64,
    },
    /// `alpha` outside `(0, 1)`.
    AlphaOutOfRange {
        /// Offending order.
        alpha: f64,
    },
    /// The Golub-Welsch eigenproblem failed to converge.
    Eigen(LinAlgError),
    /// No feasible iterate improved on the initializer; the initializer itself
    /// is carried as a usable fallback.
    NoImprovement {
        /// The Gauss-Jacobi starting rule (feasible, usable as-is).
        fallback: DiffusiveQuadrature,
        /// Its objective value.
        objective: f64,
    },
}

impl core::fmt::Display for QuadError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            QuadError::BadBand {
                omega_min,
                omega_max,
            } => write!(f, "need 0 < omega_min < omega_max, got [{omega_min}, {omega_max}]"),
            QuadError::TooFewSamples { n_samples } => {
                write!(f, "need at least 2 frequency samples, got {n_samples}")
            }
            QuadError::Empty => write!(f, "quadrature must have at least one pole"),
            QuadError::LengthMismatch { weights, abscissae } => write!(
                f,
                "weights ({weights}) and abscissae ({abscissae}) differ in length"
            ),
            QuadError::InfeasiblePole {
                index,
                zeta,
                lambda,
            } => write!(
                f,
                "pole {index} violates constraints: zeta = {zeta}, lambda = {lambda}"
            ),
            QuadError::AlphaOutOfRange { alpha } => {
                write!(f, "fractional order alpha must lie in (0, 1), got {alpha}")
            }
            QuadError::Eigen(e) => write!(f, "Gauss-Jacobi eigenproblem failed: {e}"),
            QuadError::NoImprovement { objective, .. } => write!(
                f,
                "optimizer found no improving feasible iterate (initializer objective {objective})"
            ),
        }
    }
}

impl core::error::Error for QuadError {}

impl From<LinAlgError> for QuadError {
    fn from(e: LinAlgError) -> Self {
        QuadError::Eigen(e)
    }
}

/// Frequency band targeted by the calibration, with its sample count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyBand {
    omega_min: f64,
    omega_max: f64,
    n_samples: usize,
}

impl FrequencyBand {
    /// Validates `0 < omega_min < omega_max` and `n_samples >= 2`.
    pub fn new(omega_min: f64, omega_max: f64, n_samples: usize) -> Result<Self, QuadError> {
        if !(omega_min.is_finite() && omega_max.is_finite() && 0.0 < omega_min && omega_min < omega_max)
        {
            return Err(QuadError::BadBand {
                omega_min,
                omega_max,
            });
        }
        if n_samples < 2 {
            return Err(QuadError::TooFewSamples { n_samples });
        }
        Ok(FrequencyBand {
            omega_min,
            omega_max,
            n_samples,
        })
    }

    /// Band with the default sample count of twice the pole count.
    pub fn with_default_samples(
        omega_min: f64,
        omega_max: f64,
        n_poles: usize,
    ) -> Result<Self, QuadError> {
        FrequencyBand::new(omega_min, omega_max, (2 * n_poles).max(2))
    }

    /// Lower band edge.
    pub fn omega_min(&self) -> f64 {
        self.omega_min
    }

    /// Upper band edge.
    pub fn omega_max(&self) -> f64 {
        self.omega_max
    }

    /// Number of calibration samples.
    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Ceiling of the abscissa constraint box, `10 * omega_max`.
    pub fn lambda_ceiling(&self) -> f64 {
        LAMBDA_BOX_FACTOR * self.omega_max
    }
}

/// Logarithmically spaced calibration frequencies
/// `omega_m = omega_min (omega_max/omega_min)^((m-1)/(M-1))`, `m = 1..M`.
///
/// Both band edges are included exactly.
pub fn log_spaced_samples(band: &FrequencyBand) -> Vec<f64> {
    let m = band.n_samples;
    let ratio = band.omega_max / band.omega_min;
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let t = i as f64 / (m as f64 - 1.0);
        out.push(band.omega_min * ratio.powf(t));
    }
    // Guard the top edge against powf rounding; the bottom edge is exact.
    out[m - 1] = band.omega_max;
    out
}

/// A discrete diffusive representation: positive weights `zeta_l` and
/// abscissae `lambda_l` inside `(0, 10 omega_max)`, tied to the fractional
/// order and the band they were calibrated for.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusiveQuadrature {
    weights: Vec<f64>,
    abscissae: Vec<f64>,
    alpha: f64,
    band: FrequencyBand,
}

impl DiffusiveQuadrature {
    /// Validates positivity, the abscissa box, equal lengths, and `alpha`.
    pub fn new(
        weights: Vec<f64>,
        abscissae: Vec<f64>,
        alpha: f64,
        band: FrequencyBand,
    ) -> Result<Self, QuadError> {
        if weights.len() != abscissae.len() {
            return Err(QuadError::LengthMismatch {
                weights: weights.len(),
                abscissae: abscissae.len(),
            });
        }
        if weights.is_empty() {
            return Err(QuadError::Empty);
        }
        if !(alpha.is_finite() && alpha > 0.0 && alpha < 1.0) {
            return Err(QuadError::AlphaOutOfRange { alpha });
        }
        let ceiling = band.lambda_ceiling();
        for (i, (&z, &l)) in weights.iter().zip(abscissae.iter()).enumerate() {
            let ok = z.is_finite() && z > 0.0 && l.is_finite() && l > 0.0 && l < ceiling;
            if !ok {
                return Err(QuadError::InfeasiblePole {
                    index: i,
                    zeta: z,
                    lambda: l,
                });
            }
        }
        Ok(DiffusiveQuadrature {
            weights,
            abscissae,
            alpha,
            band,
        })
    }

    /// Number of poles `L`.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    /// True when there are no poles (never, by construction).
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Weights `zeta_l`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Abscissae `lambda_l`.
    pub fn abscissae(&self) -> &[f64] {
        &self.abscissae
    }

    /// Fractional order this rule was built for.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Calibration band.
    pub fn band(&self) -> &FrequencyBand {
        &self.band
    }
}

/// Modified Gauss-Jacobi starting rule for the calibration.
///
/// The half-line integral of the kernel density is mapped to `[-1, 1]` by
/// `lambda = ((1-x)/(1+x))^2`, turning it into a Gauss-Jacobi problem with
/// weight `(1+x)^(3-4 alpha) (1-x)^(4 alpha - 1)`. Nodes and weights of that
/// rule come from the symmetric tridiagonal Jacobi matrix (Golub-Welsch), and
/// are mapped back by
///
/// ```text
/// lambda_l = ((1 - x_l)/(1 + x_l))^2,
/// zeta_l   = 4 w_l / ((1 + x_l)^(4 - 4 alpha) (1 - x_l)^(4 alpha - 2)).
/// ```
///
/// Poles are returned sorted by ascending `lambda`. Mapped abscissae that land
/// above the optimizer's constraint box `lambda < 10 omega_max` (which happens
/// for larger `L`, since the map sends nodes near `x = -1` far out) are pulled
/// to just below the ceiling so the result is always a feasible starting point.
pub fn gauss_jacobi_init(
    l: usize,
    alpha: f64,
    band: &FrequencyBand,
) -> Result<DiffusiveQuadrature, QuadError> {
    if l == 0 {
        return Err(QuadError::Empty);
    }
    if !(alpha.is_finite() && alpha > 0.0 && alpha < 1.0) {
        return Err(QuadError::AlphaOutOfRange { alpha });
    }
    // Jacobi weight (1-x)^a (1+x)^b with a = 4 alpha - 1, b = 3 - 4 alpha.
    let a = 4.0 * alpha - 1.0;
    let b = 3.0 - 4.0 * alpha;
    let mut diag = vec![0.0; l];
    let mut off = vec![0.0; l.saturating_sub(1).max(1)];
    for k in 0..l {
        let kf = k as f64;
        let denom = (2.0 * kf + a + b) * (2.0 * kf + a + b + 2.0);
        diag[k] = (b * b - a * a) / denom;
    }
    for k in 1..l {
        let kf = k as f64;
        let s = 2.0 * kf + a + b;
        let num = 4.0 * kf * (kf + a) * (kf + b) * (kf + a + b);
        let den = s * s * (s + 1.0) * (s - 1.0);
        off[k - 1] = (num / den).sqrt();
    }
    // Total mass of the Jacobi weight: 2^(a+b+1) B(a+1, b+1).
    let mu0 = (a + b + 1.0).exp2() * gamma(a + 1.0) * gamma(b + 1.0) / gamma(a + b + 2.0);
    let mut z = vec![0.0; l];
    z[0] = 1.0;
    sym_tridiag_eigen(&mut diag, &mut off, &mut z)?;

    let ceiling = band.lambda_ceiling();
    let mut poles: Vec<(f64, f64)> = Vec::with_capacity(l);
    for i in 0..l {
        let x = diag[i];
        let w = mu0 * z[i] * z[i];
        let lam = ((1.0 - x) / (1.0 + x)).powi(2);
        let zeta = 4.0 * w / ((1.0 + x).powf(b + 3.0) * (1.0 - x).powf(a - 1.0));
        let lam = lam.min(0.999 * ceiling);
        poles.push((lam, zeta));
    }
    poles.sort_unstable_by(|p, q| p.0.total_cmp(&q.0));
    let abscissae: Vec<f64> = poles.iter().map(|p| p.0).collect();
    let weights: Vec<f64> = poles.iter().map(|p| p.1).collect();
    DiffusiveQuadrature::new(weights, abscissae, alpha, *band)
}

/// `(i omega)^p` on the principal branch for `omega > 0`.
fn i_omega_pow(omega: f64, p: f64) -> Complex64 {
    let phase = 0.5 * PI * p;
    omega.powf(p) * Complex64::new(phase.cos(), phase.sin())
}

/// Transfer function `B(omega)` of the pole system (the frequency response of
/// the approximated fractional derivative divided by `P`'s spectrum).
pub fn b_transfer(omega: f64, quad: &DiffusiveQuadrature) -> Complex64 {
    assert!(omega > 0.0, "transfer function sampled at omega <= 0");
    let iw = Complex64::new(0.0, omega);
    let mut sum = Complex64::new(0.0, 0.0);
    for (&zeta, &lam) in quad.weights.iter().zip(&quad.abscissae) {
        sum += zeta * lam.powf(quad.alpha - 1.0) / (iw + lam);
    }
    c_alpha(quad.alpha) * iw * sum
}

/// Relative frequency response `chi(omega) = B(omega) / (i omega)^alpha`.
///
/// A perfect representation has `chi == 1` for all `omega`.
pub fn chi(omega: f64, quad: &DiffusiveQuadrature) -> Complex64 {
    b_transfer(omega, quad) / i_omega_pow(omega, quad.alpha)
}

/// Least-squares calibration objective `sum_m |chi(omega_m) - 1|^2` over the
/// band's log-spaced samples.
pub fn objective(quad: &DiffusiveQuadrature) -> f64 {
    let samples = log_spaced_samples(&quad.band);
    samples
        .iter()
        .map(|&w| (chi(w, quad) - 1.0).norm_sqr())
        .sum()
}

/// Largest pointwise deviation `|chi(omega) - 1|` over an `n`-point log grid
/// on `[omega_lo, omega_hi]` (endpoints included).
pub fn max_chi_deviation(quad: &DiffusiveQuadrature, omega_lo: f64, omega_hi: f64, n: usize) -> f64 {
    assert!(n >= 2 && omega_lo > 0.0 && omega_hi > omega_lo);
    let ratio = omega_hi / omega_lo;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let t = i as f64 / (n as f64 - 1.0);
        let w = omega_lo * ratio.powf(t);
        worst = worst.max((chi(w, quad) - 1.0).norm());
    }
    worst
}

/// Outcome of a successful calibration.
#[derive(Debug, Clone)]
pub struct OptimizeReport {
    /// The fitted rule (feasible by construction).
    pub quadrature: DiffusiveQuadrature,
    /// Objective of the Gauss-Jacobi starting rule.
    pub initial_objective: f64,
    /// Objective of the returned rule.
    pub final_objective: f64,
    /// Number of accepted descent iterations taken.
    pub iterations: usize,
}

/// Working data for the objective in optimizer coordinates
/// `theta = (u_1..u_L, v_1..v_L)` with `zeta = exp(u)`,
/// `lambda = ceiling * sigmoid(v)`.
struct FitProblem {
    alpha: f64,
    ceiling: f64,
    samples: Vec<f64>,
    /// Per-sample constant `c_alpha (i omega)^(1-alpha)`.
    s_m: Vec<Complex64>,
}

impl FitProblem {
    fn new(alpha: f64, band: &FrequencyBand) -> Self {
        let samples = log_spaced_samples(band);
        let ca = c_alpha(alpha);
        let s_m = samples
            .iter()
            .map(|&w| ca * i_omega_pow(w, 1.0 - alpha))
            .collect();
        FitProblem {
            alpha,
            ceiling: band.lambda_ceiling(),
            samples,
            s_m,
        }
    }

    fn n_poles(&self, theta: &[f64]) -> usize {
        theta.len() / 2
    }

    /// Maps optimizer coordinates to (zeta, lambda) pairs, keeping lambda
    /// strictly inside the open box even when the sigmoid saturates in f64.
    fn poles(&self, theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let l = self.n_poles(theta);
        let mut zeta = Vec::with_capacity(l);
        let mut lam = Vec::with_capacity(l);
        for i in 0..l {
            // The floor keeps a decayed pole strictly positive when exp
            // underflows; such a pole contributes nothing to chi.
            zeta.push(theta[i].exp().max(1e-300));
            let sig = 1.0 / (1.0 + (-theta[l + i]).exp());
            let bounded = sig.clamp(1e-300, 1.0 - 1e-12);
            lam.push(self.ceiling * bounded);
        }
        (zeta, lam)
    }

    /// Residuals `r_m = chi(omega_m) - 1` only, for cheap trial-step
    /// evaluation. Returns the objective `sum_m |r_m|^2`, or infinity when
    /// the evaluation overflows.
    fn residuals(&self, theta: &[f64], res: &mut [Complex64]) -> f64 {
        let l = self.n_poles(theta);
        let (zeta, lam) = self.poles(theta);
        let am1 = self.alpha - 1.0;
        let mut f = 0.0;
        for (m, (&w, &s)) in self.samples.iter().zip(&self.s_m).enumerate() {
            let iw = Complex64::new(0.0, w);
            let mut chi_m = Complex64::new(0.0, 0.0);
            for i in 0..l {
                chi_m += s * zeta[i] * lam[i].powf(am1) / (iw + lam[i]);
            }
            let r = chi_m - 1.0;
            res[m] = r;
            f += r.norm_sqr();
        }
        if !f.is_finite() {
            return f64::INFINITY;
        }
        f
    }

    /// Residuals together with the complex Jacobian
    /// `jac[m * 2L + i] = d r_m / d theta_i` (row-major, one row per
    /// sample) in optimizer coordinates. Returns the objective as
    /// [`Self::residuals`] does.
    ///
    /// With `g_l = lambda_l^(alpha-1)/(i w + lambda_l)` the pole derivatives
    /// are `d r_m / d zeta_l = s_m g_l` and
    /// `d r_m / d lambda_l = s_m zeta_l dg_l/dlambda`; the chain rule for
    /// the exp/sigmoid reparameterization maps them onto `u_l`, `v_l`.
    fn residuals_jacobian(
        &self,
        theta: &[f64],
        res: &mut [Complex64],
        jac: &mut [Complex64],
    ) -> f64 {
        let l = self.n_poles(theta);
        let n = 2 * l;
        let (zeta, lam) = self.poles(theta);
        let am1 = self.alpha - 1.0;
        let mut f = 0.0;
        for (m, (&w, &s)) in self.samples.iter().zip(&self.s_m).enumerate() {
            let iw = Complex64::new(0.0, w);
            let mut chi_m = Complex64::new(0.0, 0.0);
            let row = &mut jac[m * n..(m + 1) * n];
            for i in 0..l {
                let denom = iw + lam[i];
                let g_i = lam[i].powf(am1) / denom;
                chi_m += s * zeta[i] * g_i;
                let dg = lam[i].powf(self.alpha - 2.0) * (am1 * denom - lam[i]) / (denom * denom);
                let frac = lam[i] / self.ceiling;
                row[i] = s * g_i * zeta[i];
                row[l + i] = s * zeta[i] * dg * self.ceiling * frac * (1.0 - frac);
            }
            let r = chi_m - 1.0;
            res[m] = r;
            f += r.norm_sqr();
        }
        if !f.is_finite() {
            return f64::INFINITY;
        }
        f
    }

    /// Objective value and gradient `grad_i = 2 sum_m Re(conj(J_mi) r_m)` in
    /// optimizer coordinates; the reference point for the finite-difference
    /// consistency check of the Jacobian.
    #[cfg(test)]
    fn value_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let n = theta.len();
        let mut res = vec![Complex64::new(0.0, 0.0); self.samples.len()];
        let mut jac = vec![Complex64::new(0.0, 0.0); self.samples.len() * n];
        let f = self.residuals_jacobian(theta, &mut res, &mut jac);
        grad.iter_mut().for_each(|g| *g = 0.0);
        if !f.is_finite() {
            return f;
        }
        for (m, &r) in res.iter().enumerate() {
            for i in 0..n {
                grad[i] += 2.0 * (jac[m * n + i].conj() * r).re;
            }
        }
        f
    }
}

/// Stops after this many accepted descent iterations regardless of progress.
const MAX_ITERATIONS: usize = 2000;
/// Relative objective decrease below which (sustained over
/// [`STALL_WINDOW`] iterations) the iteration is declared converged.
const RELATIVE_DECREASE_TOL: f64 = 1e-10;
/// Length of the stall window.
const STALL_WINDOW: usize = 5;
/// Starting Levenberg-Marquardt damping, relative to the curvature diagonal.
const INITIAL_DAMPING: f64 = 1e-3;
/// Damping growth factor after a rejected trial step.
const DAMPING_GROWTH: f64 = 4.0;
/// Damping shrink factor after an accepted step.
const DAMPING_SHRINK: f64 = 3.0;
/// Rejected trial steps tolerated within one iteration before giving up.
const MAX_REJECTS: usize = 60;
/// Fraction of the step length used to probe residual curvature for the
/// second-order (geodesic) correction.
const CURVATURE_PROBE: f64 = 0.1;
/// The second-order correction is only trusted while `2 |corr| / |step|`
/// stays below this bound; beyond it the plain step is used.
const CURVATURE_TRUST: f64 = 0.75;

/// Fits an `l`-pole rule for order `alpha` over `band` by a damped
/// Gauss-Newton (Levenberg-Marquardt) iteration on the reparameterized
/// least-squares objective, starting from [`gauss_jacobi_init`].
///
/// Each step solves the normal equations built from the analytic residual
/// Jacobian, with the damping scaled by the curvature diagonal and adapted
/// to trial-step acceptance. The returned rule is feasible by construction
/// and its objective never exceeds the initializer's. If not a single
/// improving step is found, the initializer is handed back inside
/// [`QuadError::NoImprovement`] so callers can still proceed with it
/// deliberately.
pub fn optimize_quadrature(
    alpha: f64,
    l: usize,
    band: &FrequencyBand,
) -> Result<OptimizeReport, QuadError> {
    let init = gauss_jacobi_init(l, alpha, band)?;
    let problem = FitProblem::new(alpha, band);
    let ceiling = band.lambda_ceiling();

    // Starting coordinates from the (feasible) initializer.
    let mut theta = vec![0.0; 2 * l];
    for i in 0..l {
        theta[i] = init.weights()[i].ln();
        let frac = (init.abscissae()[i] / ceiling).clamp(1e-300, 1.0 - 1e-12);
        theta[l + i] = (frac / (1.0 - frac)).ln();
    }

    let n = 2 * l;
    let n_samples = problem.samples.len();
    let mut res = vec![Complex64::new(0.0, 0.0); n_samples];
    let mut jac = vec![Complex64::new(0.0, 0.0); n_samples * n];
    let mut f = problem.residuals_jacobian(&theta, &mut res, &mut jac);
    let f_init = f;
    let mut best_theta = theta.clone();
    let mut best_f = f;

    let mut damping = INITIAL_DAMPING;
    let mut f_window: Vec<f64> = vec![f];
    let mut iterations = 0;
    let mut theta_trial = vec![0.0; n];
    let mut res_trial = vec![Complex64::new(0.0, 0.0); n_samples];
    let mut res_probe = vec![Complex64::new(0.0, 0.0); n_samples];
    // Augmented least-squares rows: Re/Im of each residual, then the
    // square-rooted damping block.
    let a_rows = 2 * n_samples + n;

    for _ in 0..MAX_ITERATIONS {
        // Gradient `2 g` with `g = Re(J^H r)`, and per-coordinate curvature
        // `colsq = diag Re(J^H J)` for the Marquardt scaling.
        let mut g = vec![0.0; n];
        let mut colsq = vec![0.0; n];
        for m in 0..n_samples {
            let row = &jac[m * n..(m + 1) * n];
            let r = res[m];
            for i in 0..n {
                g[i] += (row[i].conj() * r).re;
                colsq[i] += row[i].norm_sqr();
            }
        }
        let gnorm = g.iter().fold(0.0f64, |m, &x| m.max(2.0 * x.abs()));
        if gnorm < 1e-15 * f.max(1.0) {
            break;
        }

        // The damping acts relative to each coordinate's own curvature,
        // floored so a dead pole cannot zero out a pivot column.
        let max_diag = colsq.iter().fold(0.0f64, |m, &x| m.max(x));
        let diag_floor = 1e-12 * max_diag;
        let scale: Vec<f64> = colsq.iter().map(|&x| x.max(diag_floor)).collect();

        let mut accepted = false;
        for _ in 0..MAX_REJECTS {
            // Damped step from QR on the stacked system: solving in
            // least-squares form keeps the working precision at the
            // Jacobian's own conditioning instead of its square.
            let mut a = vec![0.0; a_rows * n];
            let mut rhs = vec![0.0; a_rows];
            for m in 0..n_samples {
                for j in 0..n {
                    a[(2 * m) * n + j] = jac[m * n + j].re;
                    a[(2 * m + 1) * n + j] = jac[m * n + j].im;
                }
                rhs[2 * m] = -res[m].re;
                rhs[2 * m + 1] = -res[m].im;
            }
            for i in 0..n {
                a[(2 * n_samples + i) * n + i] = (damping * scale[i]).sqrt();
            }
            let qr = match DenseQr::factor(a, a_rows, n) {
                Ok(qr) => qr,
                Err(_) => {
                    damping *= DAMPING_GROWTH;
                    continue;
                }
            };
            qr.lsq(&mut rhs);
            let step = &rhs[..n];

            // Second-order correction: probe the directional curvature of
            // the residuals along the step and re-solve against the same
            // damped factors. This is what lets the iteration track the
            // narrow curved valleys these pole fits funnel into.
            let probe = CURVATURE_PROBE;
            for i in 0..n {
                theta_trial[i] = theta[i] + probe * step[i];
            }
            let f_probe = problem.residuals(&theta_trial, &mut res_probe);
            let mut corr_rhs = vec![0.0; a_rows];
            let mut have_corr = false;
            if f_probe.is_finite() {
                for m in 0..n_samples {
                    let mut jd = Complex64::new(0.0, 0.0);
                    for j in 0..n {
                        jd += jac[m * n + j] * step[j];
                    }
                    let second = (res_probe[m] - res[m] - jd * probe)
                        * (2.0 / (probe * probe));
                    corr_rhs[2 * m] = -0.5 * second.re;
                    corr_rhs[2 * m + 1] = -0.5 * second.im;
                }
                qr.lsq(&mut corr_rhs);
                let step_norm = step.iter().map(|&x| x * x).sum::<f64>().sqrt();
                let corr_norm = corr_rhs[..n].iter().map(|&x| x * x).sum::<f64>().sqrt();
                have_corr = 2.0 * corr_norm <= CURVATURE_TRUST * step_norm;
            }

            // Prefer the corrected step; fall back to the plain one.
            let mut f_trial = f64::INFINITY;
            if have_corr {
                for i in 0..n {
                    theta_trial[i] = theta[i] + rhs[i] + corr_rhs[i];
                }
                f_trial = problem.residuals(&theta_trial, &mut res_trial);
            }
            if !(f_trial.is_finite() && f_trial < f) {
                for i in 0..n {
                    theta_trial[i] = theta[i] + rhs[i];
                }
                f_trial = problem.residuals(&theta_trial, &mut res_trial);
            }
            if f_trial.is_finite() && f_trial < f {
                theta.copy_from_slice(&theta_trial);
                damping = (damping / DAMPING_SHRINK).max(1e-14);
                accepted = true;
                break;
            }
            damping *= DAMPING_GROWTH;
        }
        if !accepted {
            break;
        }
        iterations += 1;

        f = problem.residuals_jacobian(&theta, &mut res, &mut jac);
        debug_assert!({
            let (zeta, lam) = problem.poles(&theta);
            zeta.iter().all(|&z| z > 0.0)
                && lam.iter().all(|&x| x > 0.0 && x < ceiling)
        });
        if f < best_f {
            best_f = f;
            best_theta.copy_from_slice(&theta);
        }

        // Sustained-stall stopping rule.
        f_window.push(f);
        if f_window.len() > STALL_WINDOW + 1 {
            f_window.remove(0);
        }
        if f_window.len() == STALL_WINDOW + 1 {
            let f_then = f_window[0];
            let rel = (f_then - f) / f_then.abs().max(1e-300);
            if rel < RELATIVE_DECREASE_TOL {
                break;
            }
        }
    }

    if !(best_f < f_init) {
        return Err(QuadError::NoImprovement {
            fallback: init,
            objective: f_init,
        });
    }
    let (zeta, lam) = problem.poles(&best_theta);
    // Re-sort by ascending abscissa for a canonical presentation.
    let mut poles: Vec<(f64, f64)> = lam.into_iter().zip(zeta).collect();
    poles.sort_unstable_by(|p, q| p.0.total_cmp(&q.0));
    let quadrature = DiffusiveQuadrature::new(
        poles.iter().map(|p| p.1).collect(),
        poles.iter().map(|p| p.0).collect(),
        alpha,
        *band,
    )?;
    Ok(OptimizeReport {
        quadrature,
        initial_objective: f_init,
        final_objective: best_f,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn band(lo: f64, hi: f64, m: usize) -> FrequencyBand {
        FrequencyBand::new(lo, hi, m).unwrap()
    }

    #[test]
    fn band_validation() {
        assert!(FrequencyBand::new(0.0, 5.0, 4).is_err());
        assert!(FrequencyBand::new(5.0, 0.5, 4).is_err());
        assert!(FrequencyBand::new(0.5, 5.0, 1).is_err());
        assert!(FrequencyBand::new(0.5, 5.0, 2).is_ok());
    }

    #[test]
    fn log_samples_three_point_midpoint() {
        let s = log_spaced_samples(&band(0.5, 5.0, 3));
        assert_eq!(s[0], 0.5);
        assert_relative_eq!(s[1], 1.5811388300841898, max_relative = 1e-15);
        assert_eq!(s[2], 5.0);
    }

    proptest! {
        #[test]
        fn log_samples_are_geometric(
            lo in 1e-3f64..1.0,
            ratio in 1.5f64..1e4,
            m in 2usize..40,
        ) {
            let b = band(lo, lo * ratio, m);
            let s = log_spaced_samples(&b);
            prop_assert_eq!(s.len(), m);
            prop_assert_eq!(s[0], lo);
            prop_assert!((s[m - 1] - lo * ratio).abs() <= 1e-12 * lo * ratio);
            for w in s.windows(2) {
                prop_assert!(w[1] > w[0]);
            }
            // Constant ratio between neighbours.
            if m > 2 {
                let r0 = s[1] / s[0];
                for w in s.windows(2) {
                    prop_assert!(((w[1] / w[0]) / r0 - 1.0).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn gauss_jacobi_single_pole_closed_form() {
        // L = 1, alpha = 1/2: Jacobi weight (1-x)(1+x); node 0, weight 4/3;
        // maps to lambda = 1, zeta = 16/3.
        let q = gauss_jacobi_init(1, 0.5, &band(0.5, 5.0, 4)).unwrap();
        assert_relative_eq!(q.abscissae()[0], 1.0, max_relative = 1e-13);
        assert_relative_eq!(q.weights()[0], 16.0 / 3.0, max_relative = 1e-13);
    }

    #[test]
    fn gauss_jacobi_two_poles_frozen_values() {
        // Values computed independently with 30-digit Golub-Welsch.
        let q = gauss_jacobi_init(2, 0.5, &band(0.5, 5.0, 4)).unwrap();
        assert_relative_eq!(q.abscissae()[0], 0.14589803375031546, max_relative = 1e-12);
        assert_relative_eq!(q.abscissae()[1], 6.8541019662496845, max_relative = 1e-12);
        assert_relative_eq!(q.weights()[0], 0.60790847395964773, max_relative = 1e-12);
        assert_relative_eq!(q.weights()[1], 28.558758192707019, max_relative = 1e-12);

        let q = gauss_jacobi_init(2, 0.3, &band(0.5, 5.0, 4)).unwrap();
        assert_relative_eq!(q.abscissae()[0], 0.031710372568792980, max_relative = 1e-12);
        assert_relative_eq!(q.abscissae()[1], 1.9414367810294884, max_relative = 1e-12);
        assert_relative_eq!(q.weights()[0], 0.16270359275682552, max_relative = 1e-12);
        assert_relative_eq!(q.weights()[1], 7.5807394608963061, max_relative = 1e-12);
    }

    #[test]
    fn gauss_jacobi_always_feasible_including_clamped_tails() {
        // For L = 20 on a low band the raw map exceeds the box and gets clamped.
        for &alpha in &[0.3, 0.5, 0.7] {
            for &l in &[1usize, 2, 5, 10, 20, 40] {
                let b = band(0.5, 5.0, (2 * l).max(2));
                let q = gauss_jacobi_init(l, alpha, &b).unwrap();
                assert_eq!(q.len(), l);
                let ceiling = b.lambda_ceiling();
                for i in 0..l {
                    assert!(q.weights()[i] > 0.0);
                    assert!(q.abscissae()[i] > 0.0 && q.abscissae()[i] < ceiling);
                }
            }
        }
    }

    #[test]
    fn chi_single_pole_reference_value() {
        // zeta = pi, lambda = 1, alpha = 1/2 at omega = 1:
        // B = i/(i+1), chi = B / sqrt(i) = 1/sqrt(2) exactly.
        let b = band(0.5, 5.0, 4);
        let q = DiffusiveQuadrature::new(vec![PI], vec![1.0], 0.5, b).unwrap();
        let c = chi(1.0, &q);
        assert_relative_eq!(c.re, 0.7071067811865476, max_relative = 1e-14);
        assert!(c.im.abs() < 1e-15);
    }

    #[test]
    fn quadrature_validation_errors() {
        let b = band(0.5, 5.0, 4);
        assert!(matches!(
            DiffusiveQuadrature::new(vec![], vec![], 0.5, b),
            Err(QuadError::Empty)
        ));
        assert!(matches!(
            DiffusiveQuadrature::new(vec![1.0], vec![1.0, 2.0], 0.5, b),
            Err(QuadError::LengthMismatch { .. })
        ));
        assert!(matches!(
            DiffusiveQuadrature::new(vec![-1.0], vec![1.0], 0.5, b),
            Err(QuadError::InfeasiblePole { .. })
        ));
        // Box ceiling is 10 * omega_max = 50.
        assert!(matches!(
            DiffusiveQuadrature::new(vec![1.0], vec![50.0], 0.5, b),
            Err(QuadError::InfeasiblePole { .. })
        ));
        assert!(DiffusiveQuadrature::new(vec![1.0], vec![49.9], 0.5, b).is_ok());
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let b = band(0.5, 5.0, 6);
        let problem = FitProblem::new(0.6, &b);
        // A modest, asymmetric starting point.
        let theta: Vec<f64> = vec![0.3, -0.5, 1.1, -2.0, 0.4, 1.7];
        let mut grad = vec![0.0; 6];
        let f0 = problem.value_grad(&theta, &mut grad);
        assert!(f0.is_finite());
        let mut scratch = vec![0.0; 6];
        for i in 0..theta.len() {
            let h = 1e-6 * theta[i].abs().max(1.0);
            let mut tp = theta.clone();
            tp[i] += h;
            let fp = problem.value_grad(&tp, &mut scratch);
            let mut tm = theta.clone();
            tm[i] -= h;
            let fm = problem.value_grad(&tm, &mut scratch);
            let fd = (fp - fm) / (2.0 * h);
            assert!(
                (grad[i] - fd).abs() <= 1e-6 * fd.abs().max(1e-3),
                "component {i}: analytic {} vs fd {fd}",
                grad[i]
            );
        }
    }

    #[test]
    fn optimizer_improves_and_stays_feasible() {
        let b = FrequencyBand::with_default_samples(0.5, 5.0, 5).unwrap();
        let report = optimize_quadrature(0.5, 5, &b).unwrap();
        assert!(report.final_objective < report.initial_objective);
        assert!(report.final_objective < 1e-4, "fit too loose: {}", report.final_objective);
        let q = &report.quadrature;
        for i in 0..q.len() {
            assert!(q.weights()[i] > 0.0);
            assert!(q.abscissae()[i] > 0.0 && q.abscissae()[i] < b.lambda_ceiling());
        }
        assert_relative_eq!(objective(q), report.final_objective, max_relative = 1e-12);
    }

    #[test]
    fn optimizer_beats_coarse_grid_search_on_single_pole() {
        // One pole on a narrow band: brute-force scan of (zeta, lambda) gives a
        // reference the optimizer must not lose to (modulo grid resolution).
        let b = band(1.0, 1.3, 2);
        let report = optimize_quadrature(0.5, 1, &b).unwrap();
        let mut grid_best = f64::INFINITY;
        for zi in 1..400 {
            for li in 1..400 {
                let zeta = 0.02 * zi as f64;
                let lam = 0.03 * li as f64;
                if lam >= b.lambda_ceiling() {
                    continue;
                }
                let q = DiffusiveQuadrature::new(vec![zeta], vec![lam], 0.5, b).unwrap();
                grid_best = grid_best.min(objective(&q));
            }
        }
        assert!(
            report.final_objective <= grid_best + 1e-6,
            "optimizer {} vs grid {grid_best}",
            report.final_objective
        );
        // And strictly below the trivial all-zero-response value |0 - 1|^2 * M.
        assert!(report.final_objective < b.n_samples() as f64);
    }

    #[test]
    fn more_poles_fit_far_better_than_one() {
        // A single pole cannot flatten chi over a decade; production-size
        // rules must, with a wide margin below the 1e-2 working tolerance.
        // (The sup-norm between samples is not exactly monotone in L, so the
        // comparison is against the single-pole baseline, not level-to-level.)
        let b1 = FrequencyBand::with_default_samples(0.5, 5.0, 1).unwrap();
        let dev1 = match optimize_quadrature(0.5, 1, &b1) {
            Ok(r) => max_chi_deviation(&r.quadrature, 0.5, 5.0, 200),
            Err(QuadError::NoImprovement { fallback, .. }) => {
                max_chi_deviation(&fallback, 0.5, 5.0, 200)
            }
            Err(e) => panic!("single-pole fit failed: {e}"),
        };
        assert!(dev1 > 1e-2, "one pole should not suffice, got {dev1}");
        for &l in &[5usize, 10, 20] {
            let b = FrequencyBand::with_default_samples(0.5, 5.0, l).unwrap();
            let report = optimize_quadrature(0.5, l, &b).unwrap();
            let dev = max_chi_deviation(&report.quadrature, 0.5, 5.0, 200);
            assert!(dev < 1e-3, "L = {l}: deviation {dev} too large");
            assert!(dev < dev1 / 10.0, "L = {l}: {dev} not far below single-pole {dev1}");
        }
    }
}
