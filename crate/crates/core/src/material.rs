//! Cole-Cole material description and scalar fractional-calculus helpers.
//!
//! The medium is characterized by the relative permittivity
//! `eps_r(omega) = eps_inf + (eps_s - eps_inf) / (1 + (i omega tau0)^alpha)`
//! with `0 < alpha < 1`; `alpha -> 1` recovers the Debye model. In the time
//! domain the polarization obeys
//! `tau0^alpha * d^alpha P / dt^alpha + P = eps0 (eps_s - eps_inf) E`,
//! where the fractional derivative is of Caputo type.

#[allow(unused_imports)]
use num_traits::Float;

/// Invalid material parameters or out-of-domain scalar arguments.
#[derive(Debug, Clone, PartialEq)]
pub enum MaterialError {
    /// A quantity that must be strictly positive (and finite) is not.
    NonPositive {
        /// Which quantity failed.
        name: &'static str,
        /// Offending value.
        value: f64,
    },
    /// `eps_s` must strictly exceed `eps_inf` for a dispersive medium.
    PermittivityOrdering {
        /// Static relative permittivity.
        eps_s: f64,
        /// High-frequency relative permittivity.
        eps_inf: f64,
    },
    /// `alpha` must lie strictly inside `(0, 1)`.
    AlphaOutOfRange {
        /// Offending order.
        alpha: f64,
    },
}

impl core::fmt::Display for MaterialError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            MaterialError::NonPositive { name, value } => {
                write!(f, "{name} must be positive and finite, got {value}")
            }
            MaterialError::PermittivityOrdering { eps_s, eps_inf } => {
                write!(f, "eps_s ({eps_s}) must exceed eps_inf ({eps_inf})")
            }
            MaterialError::AlphaOutOfRange { alpha } => {
                write!(f, "fractional order alpha must lie in (0, 1), got {alpha}")
            }
        }
    }
}

impl core::error::Error for MaterialError {}

/// Validated Cole-Cole material constants.
///
/// Constructed once and then immutable, so downstream code can rely on the
/// positivity and ordering constraints without re-checking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialParams {
    eps0: f64,
    eps_inf: f64,
    eps_s: f64,
    mu0: f64,
    tau0: f64,
    alpha: f64,
}

impl MaterialParams {
    /// Validates and stores the material constants.
    ///
    /// Requires `eps0, eps_inf, eps_s, mu0, tau0 > 0` (finite),
    /// `eps_s > eps_inf`, and `alpha` strictly inside `(0, 1)`.
    pub fn new(
        eps0: f64,
        eps_inf: f64,
        eps_s: f64,
        mu0: f64,
        tau0: f64,
        alpha: f64,
    ) -> Result<Self, MaterialError> {
        for (name, value) in [
            ("eps0", eps0),
            ("eps_inf", eps_inf),
            ("eps_s", eps_s),
            ("mu0", mu0),
            ("tau0", tau0),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(MaterialError::NonPositive { name, value });
            }
        }
        if eps_s <= eps_inf {
            return Err(MaterialError::PermittivityOrdering { eps_s, eps_inf });
        }
        if !(alpha.is_finite() && alpha > 0.0 && alpha < 1.0) {
            return Err(MaterialError::AlphaOutOfRange { alpha });
        }
        Ok(MaterialParams {
            eps0,
            eps_inf,
            eps_s,
            mu0,
            tau0,
            alpha,
        })
    }

    /// Nondimensionalized medium used throughout the built-in experiments:
    /// `eps0 = eps_inf = mu0 = tau0 = 1`, `eps_s = 2`, so that both
    /// `eps0 * eps_inf` and `eps0 * (eps_s - eps_inf)` equal one.
    pub fn normalized(alpha: f64) -> Result<Self, MaterialError> {
        MaterialParams::new(1.0, 1.0, 2.0, 1.0, 1.0, alpha)
    }

    /// Vacuum permittivity scale `eps0`.
    pub fn eps0(&self) -> f64 {
        self.eps0
    }

    /// High-frequency relative permittivity `eps_inf`.
    pub fn eps_inf(&self) -> f64 {
        self.eps_inf
    }

    /// Static relative permittivity `eps_s`.
    pub fn eps_s(&self) -> f64 {
        self.eps_s
    }

    /// Permeability `mu0`.
    pub fn mu0(&self) -> f64 {
        self.mu0
    }

    /// Relaxation time `tau0`.
    pub fn tau0(&self) -> f64 {
        self.tau0
    }

    /// Fractional order `alpha`.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Absolute high-frequency permittivity `eps0 * eps_inf`.
    pub fn eps_inf_abs(&self) -> f64 {
        self.eps0 * self.eps_inf
    }

    /// Absolute permittivity increment `eps0 * (eps_s - eps_inf)`, the factor
    /// in front of `E` in the polarization law.
    pub fn delta_eps_abs(&self) -> f64 {
        self.eps0 * (self.eps_s - self.eps_inf)
    }

    /// Wave impedance of the high-frequency medium, `sqrt(mu0 / (eps0 eps_inf))`.
    pub fn impedance(&self) -> f64 {
        (self.mu0 / self.eps_inf_abs()).sqrt()
    }

    /// Wave admittance, the reciprocal impedance.
    pub fn admittance(&self) -> f64 {
        1.0 / self.impedance()
    }

    /// Normalization constant `sin(pi alpha) / pi` of the diffusive kernel.
    pub fn c_alpha(&self) -> f64 {
        c_alpha(self.alpha)
    }

    /// `tau0^alpha`, the factor multiplying the fractional term.
    pub fn tau0_pow_alpha(&self) -> f64 {
        self.tau0.powf(self.alpha)
    }
}

/// `sin(pi alpha) / pi` for `alpha` in `(0, 1)`.
pub fn c_alpha(alpha: f64) -> f64 {
    (core::f64::consts::PI * alpha).sin() / core::f64::consts::PI
}

/// Density `mu_alpha(lambda) = sin(pi alpha)/pi * lambda^(alpha - 1)` of the
/// diffusive representation: integrating `mu_alpha(lambda) e^(-lambda t)` over
/// `lambda in (0, inf)` reproduces the power-law kernel `t^(-alpha)/Gamma(1-alpha)`.
pub fn kernel_density(lambda: f64, alpha: f64) -> Result<f64, MaterialError> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(MaterialError::NonPositive {
            name: "lambda",
            value: lambda,
        });
    }
    check_alpha(alpha)?;
    Ok(c_alpha(alpha) * lambda.powf(alpha - 1.0))
}

/// Caputo derivative of order `alpha` of the power `t^p` for `p > 0`:
/// `Gamma(p+1) / Gamma(p+1-alpha) * t^(p-alpha)`.
///
/// For `p < alpha` the result is singular at `t = 0` (returns infinity there);
/// for `p > alpha` it vanishes at `t = 0`.
pub fn caputo_power(p: f64, alpha: f64, t: f64) -> Result<f64, MaterialError> {
    if !(p.is_finite() && p > 0.0) {
        return Err(MaterialError::NonPositive { name: "p", value: p });
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(MaterialError::NonPositive { name: "t", value: t });
    }
    check_alpha(alpha)?;
    let factor = crate::math::gamma(p + 1.0) / crate::math::gamma(p + 1.0 - alpha);
    Ok(factor * t.powf(p - alpha))
}

fn check_alpha(alpha: f64) -> Result<(), MaterialError> {
    if !(alpha.is_finite() && alpha > 0.0 && alpha < 1.0) {
        return Err(MaterialError::AlphaOutOfRange { alpha });
    }
    Ok(())
}
