//! Built-in experiment setups: the manufactured solution used for the
//! convergence tables and the standing-wave initial data for the energy
//! study. Both live on the domain `[0, 2]` with the normalized medium
//! (`eps0 = eps_inf = mu0 = tau0 = 1`, `eps_s = 2`).

use crate::material::{MaterialError, MaterialParams};
use crate::math::gamma;
use crate::stepper::SourceSet;
use alloc::boxed::Box;
#[allow(unused_imports)]
use num_traits::Float;

/// Manufactured exact solution with forcing terms.
///
/// The fields
///
/// ```text
/// P(x,t) = cos(pi x) t^2
/// E(x,t) = cos(pi x) (2 t^(2-a)/Gamma(3-a) + t^2)
/// H(x,t) = pi (2 cos(pi x) + sin(pi x)) t^2
/// ```
///
/// satisfy the polarization law exactly with `F3 = 0` (the `t^(2-a)` term in
/// `E` is precisely the Caputo derivative of `t^2`), and the two field
/// equations with the forcings `F1`, `F2` below. All fields vanish at
/// `t = 0`, matching the solver's required initial data.
#[derive(Debug, Clone, Copy)]
pub struct ManufacturedSolution {
    alpha: f64,
    /// `Gamma(3 - alpha)`, cached for the `t^(2-alpha)` coefficient.
    gamma_3ma: f64,
    /// `Gamma(2 - alpha)`, cached for the `t^(1-alpha)` coefficient in `F2`.
    gamma_2ma: f64,
}

impl ManufacturedSolution {
    /// Validates `alpha` (through the material constructor) and caches the
    /// Gamma factors.
    pub fn new(alpha: f64) -> Result<Self, MaterialError> {
        MaterialParams::normalized(alpha)?;
        Ok(ManufacturedSolution {
            alpha,
            gamma_3ma: gamma(3.0 - alpha),
            gamma_2ma: gamma(2.0 - alpha),
        })
    }

    /// Fractional order.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Normalized medium the solution is manufactured for.
    pub fn params(&self) -> MaterialParams {
        MaterialParams::normalized(self.alpha).expect("alpha validated at construction")
    }

    /// Spatial domain `[0, 2]`.
    pub fn domain(&self) -> (f64, f64) {
        (0.0, 2.0)
    }

    /// Horizon `T = 2` used in the convergence tables.
    pub fn t_final(&self) -> f64 {
        2.0
    }

    /// Time profile of `E`: `2 t^(2-a)/Gamma(3-a) + t^2`.
    fn e_profile(&self, t: f64) -> f64 {
        2.0 * t.powf(2.0 - self.alpha) / self.gamma_3ma + t * t
    }

    /// Exact electric field.
    pub fn exact_e(&self, x: f64, t: f64) -> f64 {
        (core::f64::consts::PI * x).cos() * self.e_profile(t)
    }

    /// Exact magnetic field.
    pub fn exact_h(&self, x: f64, t: f64) -> f64 {
        let px = core::f64::consts::PI * x;
        core::f64::consts::PI * (2.0 * px.cos() + px.sin()) * t * t
    }

    /// Exact polarization.
    pub fn exact_p(&self, x: f64, t: f64) -> f64 {
        (core::f64::consts::PI * x).cos() * t * t
    }

    /// Forcing of the magnetic equation, `mu0 H_t - E_x`.
    pub fn f1(&self, x: f64, t: f64) -> f64 {
        let pi = core::f64::consts::PI;
        let px = pi * x;
        pi * px.sin() * self.e_profile(t) + 2.0 * pi * (2.0 * px.cos() + px.sin()) * t
    }

    /// Forcing of the electric equation, `eps0 eps_inf E_t + P_t - H_x`.
    pub fn f2(&self, x: f64, t: f64) -> f64 {
        let pi = core::f64::consts::PI;
        let px = pi * x;
        px.cos() * (2.0 * t.powf(1.0 - self.alpha) / self.gamma_2ma + 4.0 * t)
            - pi * pi * (px.cos() - 2.0 * px.sin()) * t * t
    }

    /// Source set `(F1, F2, 0)` for the solver.
    pub fn sources(&self) -> SourceSet {
        let a = *self;
        let b = *self;
        SourceSet::new(
            Some(Box::new(move |x, t| a.f1(x, t))),
            Some(Box::new(move |x, t| b.f2(x, t))),
            None,
        )
    }
}

/// Standing-wave initial electric field `E0(x) = cos(pi x) sin(pi x)` of the
/// energy study.
pub fn standing_wave_e0(x: f64) -> f64 {
    let px = core::f64::consts::PI * x;
    px.cos() * px.sin()
}

/// Standing-wave initial magnetic field
/// `H0(x) = 2 pi cos(pi x) + pi sin(pi x)`.
pub fn standing_wave_h0(x: f64) -> f64 {
    let pi = core::f64::consts::PI;
    let px = pi * x;
    2.0 * pi * px.cos() + pi * px.sin()
}

/// Domain `[0, 2]` shared by the built-in experiments.
pub fn standard_domain() -> (f64, f64) {
    (0.0, 2.0)
}
