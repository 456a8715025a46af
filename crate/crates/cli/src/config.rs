//! Run configuration: the TOML file schema, command-line overrides, and the
//! resolved per-experiment parameter set that every manifest echoes.
//!
//! Resolution order is flag > config file > experiment default, so a config
//! file fully describes a run and a flag tweaks one knob without editing it.

use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use coledg_core::dgcore::Mesh1D;
use coledg_core::material::MaterialParams;
use coledg_core::quadopt::{optimize_quadrature, DiffusiveQuadrature, FrequencyBand};
use serde::Deserialize;

use crate::fileio;

/// Default pole count for the fitted relaxation quadrature.
pub const DEFAULT_POLES: usize = 20;

/// Default calibration band `[omega_min, omega_max]`.
pub const DEFAULT_BAND: (f64, f64) = (0.5, 5.0);

/// Pole count of the fit drawn by the dispersion experiment.
pub const DISPERSION_POLES: usize = 6;

/// Band of the dispersion experiment, two decades above the default band.
pub const DISPERSION_BAND: (f64, f64) = (20.0 * PI, 200.0 * PI);

/// Experiment named by the subcommand. A config file may pin one too; the
/// two must agree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    /// Fit the relaxation quadrature and report its accuracy.
    Optimize,
    /// Manufactured-solution mesh refinement study.
    Convergence,
    /// Source-free decay run tracking the discrete energies.
    Energy,
    /// Exact versus fitted dispersion curves.
    Dispersion,
    /// Wall-time scaling of the fast and direct solvers.
    Timing,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Experiment::Optimize => "optimize",
            Experiment::Convergence => "convergence",
            Experiment::Energy => "energy",
            Experiment::Dispersion => "dispersion",
            Experiment::Timing => "timing",
        };
        f.write_str(name)
    }
}

/// Time-step rule: a fixed value, the cell width, or its square.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(try_from = "TauRepr")]
pub enum TauRule {
    /// `tau = <value>` independent of the mesh.
    Fixed(f64),
    /// `tau = h`.
    CellWidth,
    /// `tau = h^2`.
    CellWidthSquared,
}

impl TauRule {
    /// Concrete step for a mesh of cell width `h`.
    pub fn resolve(&self, h: f64) -> f64 {
        match self {
            TauRule::Fixed(value) => *value,
            TauRule::CellWidth => h,
            TauRule::CellWidthSquared => h * h,
        }
    }
}

impl fmt::Display for TauRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TauRule::Fixed(value) => write!(f, "{value}"),
            TauRule::CellWidth => f.write_str("h"),
            TauRule::CellWidthSquared => f.write_str("h^2"),
        }
    }
}

/// TOML surface of [`TauRule`]: a number is a fixed step, a string names a
/// mesh-derived rule.
#[derive(Deserialize)]
#[serde(untagged)]
enum TauRepr {
    Number(f64),
    Name(String),
}

impl TryFrom<TauRepr> for TauRule {
    type Error = String;

    fn try_from(repr: TauRepr) -> Result<Self, Self::Error> {
        match repr {
            TauRepr::Number(value) => {
                if value.is_finite() && value > 0.0 {
                    Ok(TauRule::Fixed(value))
                } else {
                    Err(format!("tau must be positive and finite, got {value}"))
                }
            }
            TauRepr::Name(name) => match name.as_str() {
                "h" => Ok(TauRule::CellWidth),
                "h2" | "h^2" => Ok(TauRule::CellWidthSquared),
                other => Err(format!(
                    "tau rule must be a number, \"h\", or \"h^2\", got \"{other}\""
                )),
            },
        }
    }
}

/// Forcing selector for the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    /// No forcing; the energy run pairs this with the standing-wave pulse.
    Zero,
    /// Manufactured forcing with a known exact solution (starts from rest).
    Manufactured,
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SourceKind::Zero => "zero",
            SourceKind::Manufactured => "manufactured",
        })
    }
}

/// `[material]` table; omitted entries fall back to the normalized medium.
#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialTable {
    pub eps0: Option<f64>,
    pub eps_inf: Option<f64>,
    pub eps_s: Option<f64>,
    pub mu0: Option<f64>,
    pub tau0: Option<f64>,
}

/// Fully resolved material constants (fractional order supplied separately).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialSpec {
    pub eps0: f64,
    pub eps_inf: f64,
    pub eps_s: f64,
    pub mu0: f64,
    pub tau0: f64,
}

impl MaterialSpec {
    fn from_table(table: Option<&MaterialTable>) -> MaterialSpec {
        let table = table.copied().unwrap_or_default();
        MaterialSpec {
            eps0: table.eps0.unwrap_or(1.0),
            eps_inf: table.eps_inf.unwrap_or(1.0),
            eps_s: table.eps_s.unwrap_or(2.0),
            mu0: table.mu0.unwrap_or(1.0),
            tau0: table.tau0.unwrap_or(1.0),
        }
    }

    /// True when every constant matches the normalized medium.
    pub fn is_normalized(&self) -> bool {
        self.eps0 == 1.0
            && self.eps_inf == 1.0
            && self.eps_s == 2.0
            && self.mu0 == 1.0
            && self.tau0 == 1.0
    }

    /// Validated solver parameters for the given fractional order.
    pub fn to_params(&self, alpha: f64) -> Result<MaterialParams> {
        MaterialParams::new(
            self.eps0,
            self.eps_inf,
            self.eps_s,
            self.mu0,
            self.tau0,
            alpha,
        )
        .context("invalid material parameters")
    }
}

/// `[quadrature]` table: either a file produced by the optimize experiment
/// or the fit parameters for an in-run calibration.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureTable {
    pub file: Option<PathBuf>,
    pub poles: Option<usize>,
    pub omega_min: Option<f64>,
    pub omega_max: Option<f64>,
    pub samples: Option<usize>,
}

/// Where a run's relaxation quadrature comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum QuadSource {
    /// Load a rule written by the optimize experiment.
    File(PathBuf),
    /// Fit `poles` poles to `[omega_min, omega_max]` with `samples`
    /// objective samples before the run.
    Fit {
        poles: usize,
        omega_min: f64,
        omega_max: f64,
        samples: usize,
    },
}

impl QuadSource {
    /// Loads or fits the rule and returns it with manifest entries recording
    /// its provenance.
    pub fn prepare(&self, alpha: f64) -> Result<(DiffusiveQuadrature, Vec<(String, String)>)> {
        match self {
            QuadSource::File(path) => {
                let quad = fileio::read_quadrature(path)?;
                if quad.alpha() != alpha {
                    bail!(
                        "quadrature file {} was fitted for alpha = {} but the run uses alpha = {}",
                        path.display(),
                        quad.alpha(),
                        alpha
                    );
                }
                let entries = vec![
                    ("quadrature_source".to_string(), path.display().to_string()),
                    ("quadrature_poles".to_string(), quad.len().to_string()),
                    (
                        "quadrature_omega_min".to_string(),
                        quad.band().omega_min().to_string(),
                    ),
                    (
                        "quadrature_omega_max".to_string(),
                        quad.band().omega_max().to_string(),
                    ),
                ];
                Ok((quad, entries))
            }
            QuadSource::Fit {
                poles,
                omega_min,
                omega_max,
                samples,
            } => {
                let band = FrequencyBand::new(*omega_min, *omega_max, *samples)
                    .context("invalid calibration band")?;
                let report = optimize_quadrature(alpha, *poles, &band)
                    .context("quadrature calibration failed")?;
                let entries = vec![
                    ("quadrature_source".to_string(), "fit".to_string()),
                    ("quadrature_poles".to_string(), poles.to_string()),
                    ("quadrature_omega_min".to_string(), omega_min.to_string()),
                    ("quadrature_omega_max".to_string(), omega_max.to_string()),
                    ("quadrature_samples".to_string(), samples.to_string()),
                    (
                        "quadrature_initial_objective".to_string(),
                        report.initial_objective.to_string(),
                    ),
                    (
                        "quadrature_final_objective".to_string(),
                        report.final_objective.to_string(),
                    ),
                    (
                        "quadrature_iterations".to_string(),
                        report.iterations.to_string(),
                    ),
                ];
                Ok((report.quadrature, entries))
            }
        }
    }
}

/// Schema of the TOML config file. Every field is optional; unknown keys
/// are rejected so typos fail loudly instead of silently using a default.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub experiment: Option<Experiment>,
    pub out_dir: Option<PathBuf>,
    pub alpha: Option<f64>,
    pub degree: Option<usize>,
    pub cells: Option<usize>,
    pub x_minus: Option<f64>,
    pub x_plus: Option<f64>,
    pub t_final: Option<f64>,
    pub sample_every: Option<usize>,
    pub tau: Option<TauRule>,
    pub sources: Option<SourceKind>,
    pub material: Option<MaterialTable>,
    pub quadrature: Option<QuadratureTable>,
    pub levels: Option<Vec<usize>>,
    pub nt_grid: Option<Vec<usize>>,
    pub desk_scale: Option<bool>,
}

impl ConfigFile {
    /// Parses a TOML string, rejecting unknown keys.
    pub fn from_toml(text: &str) -> Result<ConfigFile> {
        toml::from_str(text).context("invalid config file")
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub alpha: Option<f64>,
    pub degree: Option<usize>,
    pub cells: Option<usize>,
    pub desk_scale: bool,
}

/// Every parameter of a run, concrete. Echoed into the manifest so the run
/// is reproducible from that file alone.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub experiment: Experiment,
    pub out_dir: PathBuf,
    pub alpha: f64,
    pub degree: usize,
    pub cells: usize,
    pub x_minus: f64,
    pub x_plus: f64,
    pub t_final: f64,
    pub sample_every: usize,
    pub tau: TauRule,
    pub sources: SourceKind,
    pub material: MaterialSpec,
    pub quadrature: QuadSource,
    pub levels: Vec<usize>,
    pub nt_grid: Vec<usize>,
    pub desk_scale: bool,
}

impl Resolved {
    /// Merges flags over the config file over per-experiment defaults and
    /// validates the result.
    pub fn resolve(
        experiment: Experiment,
        file: &ConfigFile,
        flags: &Overrides,
    ) -> Result<Resolved> {
        if let Some(pinned) = file.experiment {
            if pinned != experiment {
                bail!(
                    "config file pins experiment \"{pinned}\" but the subcommand is \"{experiment}\""
                );
            }
        }

        let desk_scale = flags.desk_scale || file.desk_scale.unwrap_or(false);
        let alpha = flags.alpha.or(file.alpha).unwrap_or(0.5);
        if experiment != Experiment::Dispersion && !(alpha.is_finite() && 0.0 < alpha && alpha < 1.0)
        {
            bail!("alpha must lie in (0, 1), got {alpha}");
        }

        let degree = flags.degree.or(file.degree).unwrap_or(1);
        if degree == 0 {
            bail!("degree must be at least 1");
        }

        let default_cells = match experiment {
            Experiment::Energy => {
                if desk_scale {
                    200
                } else {
                    800
                }
            }
            Experiment::Timing => 10,
            _ => 40,
        };
        let cells = flags.cells.or(file.cells).unwrap_or(default_cells);

        let x_minus = file.x_minus.unwrap_or(0.0);
        let x_plus = file.x_plus.unwrap_or(2.0);
        if !(x_minus.is_finite() && x_plus.is_finite() && x_minus < x_plus) {
            bail!("domain must satisfy x_minus < x_plus, got [{x_minus}, {x_plus}]");
        }

        let t_final = file.t_final.unwrap_or(match experiment {
            Experiment::Energy => 2.5,
            _ => 2.0,
        });
        let needs_horizon = matches!(
            experiment,
            Experiment::Convergence | Experiment::Energy | Experiment::Timing
        );
        if needs_horizon && !(t_final.is_finite() && t_final > 0.0) {
            bail!("t_final must be positive, got {t_final}");
        }

        let tau = file.tau.unwrap_or(match experiment {
            Experiment::Convergence => TauRule::CellWidthSquared,
            _ => TauRule::CellWidth,
        });

        let sources = file.sources.unwrap_or(match experiment {
            Experiment::Convergence | Experiment::Timing => SourceKind::Manufactured,
            _ => SourceKind::Zero,
        });

        let sample_every = file.sample_every.unwrap_or(match experiment {
            Experiment::Energy => 1,
            _ => 0,
        });

        let material = MaterialSpec::from_table(file.material.as_ref());
        if sources == SourceKind::Manufactured {
            if (x_minus, x_plus) != (0.0, 2.0) {
                bail!("manufactured forcing is defined on the domain [0, 2]");
            }
            if !material.is_normalized() {
                bail!(
                    "manufactured forcing pins the normalized material \
                     (eps0 = eps_inf = mu0 = tau0 = 1, eps_s = 2)"
                );
            }
        }

        let (default_poles, default_band) = match experiment {
            Experiment::Dispersion => (DISPERSION_POLES, DISPERSION_BAND),
            _ => (DEFAULT_POLES, DEFAULT_BAND),
        };
        let quadrature = match file.quadrature.as_ref() {
            Some(table) if table.file.is_some() => {
                if table.poles.is_some()
                    || table.omega_min.is_some()
                    || table.omega_max.is_some()
                    || table.samples.is_some()
                {
                    bail!("quadrature.file excludes the fit parameters (poles, band, samples)");
                }
                QuadSource::File(table.file.clone().unwrap())
            }
            table => {
                let table = table.cloned().unwrap_or_default();
                let poles = table.poles.unwrap_or(default_poles);
                if poles == 0 {
                    bail!("quadrature.poles must be at least 1");
                }
                QuadSource::Fit {
                    poles,
                    omega_min: table.omega_min.unwrap_or(default_band.0),
                    omega_max: table.omega_max.unwrap_or(default_band.1),
                    samples: table.samples.unwrap_or((2 * poles).max(2)),
                }
            }
        };

        let levels = file.levels.clone().unwrap_or(vec![10, 20, 40, 80]);
        if levels.is_empty() || levels.windows(2).any(|w| w[0] >= w[1]) {
            bail!("levels must be a strictly increasing list of cell counts");
        }

        let nt_grid = file.nt_grid.clone().unwrap_or(if desk_scale {
            vec![2000, 4000, 8000, 16000, 32000]
        } else {
            vec![10_000, 20_000, 40_000, 80_000, 160_000]
        });
        if nt_grid.is_empty() || nt_grid.iter().any(|&n| n == 0) {
            bail!("nt_grid must be a nonempty list of positive step counts");
        }

        let out_dir = flags
            .out
            .clone()
            .or(file.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from(format!("runs/{experiment}")));

        Ok(Resolved {
            experiment,
            out_dir,
            alpha,
            degree,
            cells,
            x_minus,
            x_plus,
            t_final,
            sample_every,
            tau,
            sources,
            material,
            quadrature,
            levels,
            nt_grid,
            desk_scale,
        })
    }

    /// Validated mesh for the resolved domain and cell count.
    pub fn mesh(&self) -> Result<Mesh1D> {
        Mesh1D::new(self.x_minus, self.x_plus, self.cells).context("invalid mesh")
    }

    /// Validated material parameters at the resolved fractional order.
    pub fn material_params(&self) -> Result<MaterialParams> {
        self.material.to_params(self.alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_an_empty_energy_config() {
        let resolved =
            Resolved::resolve(Experiment::Energy, &ConfigFile::default(), &Overrides::default())
                .unwrap();
        assert_eq!(resolved.cells, 800);
        assert_eq!(resolved.t_final, 2.5);
        assert_eq!(resolved.tau, TauRule::CellWidth);
        assert_eq!(resolved.sources, SourceKind::Zero);
        assert_eq!(resolved.sample_every, 1);
        match resolved.quadrature {
            QuadSource::Fit {
                poles,
                omega_min,
                omega_max,
                samples,
            } => {
                assert_eq!(poles, 20);
                assert_eq!((omega_min, omega_max), DEFAULT_BAND);
                assert_eq!(samples, 40);
            }
            other => panic!("expected a fit, got {other:?}"),
        }
    }

    #[test]
    fn desk_scale_shrinks_the_energy_mesh_and_timing_grid() {
        let flags = Overrides {
            desk_scale: true,
            ..Overrides::default()
        };
        let energy = Resolved::resolve(Experiment::Energy, &ConfigFile::default(), &flags).unwrap();
        assert_eq!(energy.cells, 200);
        let timing = Resolved::resolve(Experiment::Timing, &ConfigFile::default(), &flags).unwrap();
        assert_eq!(timing.nt_grid, vec![2000, 4000, 8000, 16000, 32000]);
    }

    #[test]
    fn flags_override_the_config_file() {
        let file = ConfigFile {
            alpha: Some(0.3),
            cells: Some(100),
            ..ConfigFile::default()
        };
        let flags = Overrides {
            alpha: Some(0.7),
            ..Overrides::default()
        };
        let resolved = Resolved::resolve(Experiment::Energy, &file, &flags).unwrap();
        assert_eq!(resolved.alpha, 0.7);
        assert_eq!(resolved.cells, 100);
    }

    #[test]
    fn tau_accepts_numbers_and_rule_names() {
        let cfg = ConfigFile::from_toml("tau = 0.001").unwrap();
        assert_eq!(cfg.tau, Some(TauRule::Fixed(0.001)));
        let cfg = ConfigFile::from_toml("tau = \"h\"").unwrap();
        assert_eq!(cfg.tau, Some(TauRule::CellWidth));
        let cfg = ConfigFile::from_toml("tau = \"h^2\"").unwrap();
        assert_eq!(cfg.tau, Some(TauRule::CellWidthSquared));
        assert!(ConfigFile::from_toml("tau = \"weekly\"").is_err());
        assert!(ConfigFile::from_toml("tau = -0.5").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ConfigFile::from_toml("alpa = 0.5").is_err());
        assert!(ConfigFile::from_toml("[quadrature]\npole_count = 4").is_err());
    }

    #[test]
    fn experiment_mismatch_is_an_error() {
        let cfg = ConfigFile::from_toml("experiment = \"energy\"").unwrap();
        let err = Resolved::resolve(Experiment::Timing, &cfg, &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("energy"));
    }

    #[test]
    fn manufactured_forcing_rejects_a_custom_domain_or_material() {
        let cfg = ConfigFile::from_toml("sources = \"manufactured\"\nx_plus = 4.0").unwrap();
        assert!(Resolved::resolve(Experiment::Energy, &cfg, &Overrides::default()).is_err());
        let cfg =
            ConfigFile::from_toml("sources = \"manufactured\"\n[material]\neps_s = 3.0").unwrap();
        assert!(Resolved::resolve(Experiment::Energy, &cfg, &Overrides::default()).is_err());
    }

    #[test]
    fn quadrature_file_excludes_fit_parameters() {
        let cfg = ConfigFile::from_toml("[quadrature]\nfile = \"q.txt\"\npoles = 8").unwrap();
        assert!(Resolved::resolve(Experiment::Energy, &cfg, &Overrides::default()).is_err());
    }
}
