//! Readers and writers for the on-disk artifacts: quadrature rules, field
//! snapshots, the experiment CSV files, and the run manifest.
//!
//! Floating-point values are written with Rust's shortest round-trip
//! formatting, so reading a file back reproduces the original bits and two
//! runs of the same config produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use coledg_core::dgcore::{DgField, Mesh1D};
use coledg_core::diagnostics::{ConvergenceRow, DispersionSample, EnergySample};
use coledg_core::quadopt::{DiffusiveQuadrature, FrequencyBand};

/// Writes a quadrature rule: a `# alpha=.. L=.. omega_min=.. omega_max=..`
/// header, an optional extra comment line, then one `zeta lambda` pair per
/// pole in full precision.
pub fn write_quadrature(
    path: &Path,
    quad: &DiffusiveQuadrature,
    note: Option<&str>,
) -> Result<()> {
    let mut text = format!(
        "# alpha={} L={} omega_min={} omega_max={}\n",
        quad.alpha(),
        quad.len(),
        quad.band().omega_min(),
        quad.band().omega_max()
    );
    if let Some(note) = note {
        writeln!(text, "# {note}").unwrap();
    }
    for (zeta, lambda) in quad.weights().iter().zip(quad.abscissae()) {
        writeln!(text, "{zeta} {lambda}").unwrap();
    }
    write_text(path, &text)
}

/// Reads a quadrature rule written by [`write_quadrature`]. Comment lines
/// after the header are skipped; the weights must round-trip the original
/// bits, which Rust's default float formatting guarantees.
pub fn read_quadrature(path: &Path) -> Result<DiffusiveQuadrature> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read quadrature file {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .with_context(|| format!("quadrature file {} is empty", path.display()))?;
    let header = header
        .strip_prefix('#')
        .with_context(|| format!("quadrature file {} lacks the # header", path.display()))?;

    let mut alpha = None;
    let mut poles = None;
    let mut omega_min = None;
    let mut omega_max = None;
    for token in header.split_whitespace() {
        let (key, value) = token
            .split_once('=')
            .with_context(|| format!("malformed header token \"{token}\""))?;
        match key {
            "alpha" => alpha = Some(value.parse::<f64>()?),
            "L" => poles = Some(value.parse::<usize>()?),
            "omega_min" => omega_min = Some(value.parse::<f64>()?),
            "omega_max" => omega_max = Some(value.parse::<f64>()?),
            other => bail!("unknown header key \"{other}\""),
        }
    }
    let (Some(alpha), Some(poles), Some(omega_min), Some(omega_max)) =
        (alpha, poles, omega_min, omega_max)
    else {
        bail!("quadrature header must carry alpha, L, omega_min, and omega_max");
    };

    let mut weights = Vec::with_capacity(poles);
    let mut abscissae = Vec::with_capacity(poles);
    for line in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(zeta), Some(lambda), None) = (parts.next(), parts.next(), parts.next()) else {
            bail!("expected \"zeta lambda\" per line, got \"{line}\"");
        };
        weights.push(zeta.parse::<f64>()?);
        abscissae.push(lambda.parse::<f64>()?);
    }
    if weights.len() != poles {
        bail!(
            "quadrature header promises {poles} poles but the file holds {}",
            weights.len()
        );
    }

    let band = FrequencyBand::with_default_samples(omega_min, omega_max, poles)
        .context("quadrature header carries an invalid band")?;
    DiffusiveQuadrature::new(weights, abscissae, alpha, band)
        .with_context(|| format!("quadrature file {} is infeasible", path.display()))
}

/// Writes a field snapshot: an `M k x_minus x_plus` header, then the
/// `M * (k + 1)` modal coefficients one per line, cell by cell.
pub fn write_field(path: &Path, field: &DgField) -> Result<()> {
    let mesh = field.mesh();
    let mut text = format!(
        "{} {} {} {}\n",
        mesh.n_cells(),
        field.degree(),
        mesh.x_minus(),
        mesh.x_plus()
    );
    for value in field.coeffs() {
        writeln!(text, "{value}").unwrap();
    }
    write_text(path, &text)
}

/// Reads a field snapshot written by [`write_field`].
pub fn read_field(path: &Path) -> Result<DgField> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read field snapshot {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .with_context(|| format!("field snapshot {} is empty", path.display()))?;
    let mut parts = header.split_whitespace();
    let (Some(m), Some(k), Some(x_minus), Some(x_plus), None) = (
        parts.next(),
        parts.next(),
        parts.next(),
        parts.next(),
        parts.next(),
    ) else {
        bail!("field header must be \"M k x_minus x_plus\", got \"{header}\"");
    };
    let m = m.parse::<usize>()?;
    let k = k.parse::<usize>()?;
    let mesh = Mesh1D::new(x_minus.parse()?, x_plus.parse()?, m)
        .context("field header carries an invalid mesh")?;
    let mut field = DgField::zeros(mesh, k).context("field header carries an invalid degree")?;

    let coeffs = field.coeffs_mut();
    let mut count = 0;
    for line in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if count == coeffs.len() {
            bail!("field snapshot holds more than M * (k + 1) coefficients");
        }
        coeffs[count] = line.parse::<f64>()?;
        count += 1;
    }
    if count != coeffs.len() {
        bail!(
            "field snapshot holds {count} coefficients, expected {}",
            coeffs.len()
        );
    }
    Ok(field)
}

/// Writes the energy trace with the header `t,e1,e2_sharp,total,dissipation`.
pub fn write_energy_trace(path: &Path, samples: &[EnergySample]) -> Result<()> {
    let mut text = String::from("t,e1,e2_sharp,total,dissipation\n");
    for s in samples {
        writeln!(
            text,
            "{},{},{},{},{}",
            s.t, s.e1, s.e2_sharp, s.total, s.dissipation
        )
        .unwrap();
    }
    write_text(path, &text)
}

/// Writes per-step energy differences `F(t_n) - F(t_{n+1})` for the total
/// and the classical energy, one row per consecutive sample pair.
pub fn write_energy_differences(path: &Path, samples: &[EnergySample]) -> Result<()> {
    let mut text = String::from("t,e_sharp_diff,e1_diff\n");
    for pair in samples.windows(2) {
        writeln!(
            text,
            "{},{},{}",
            pair[0].t,
            pair[0].total - pair[1].total,
            pair[0].e1 - pair[1].e1
        )
        .unwrap();
    }
    write_text(path, &text)
}

/// Writes a convergence table with the header
/// `n_cells,errE,ordE,errH,ordH,errP,ordP`.
pub fn write_convergence_csv(path: &Path, rows: &[ConvergenceRow]) -> Result<()> {
    let mut text = String::from("n_cells,errE,ordE,errH,ordH,errP,ordP\n");
    for r in rows {
        writeln!(
            text,
            "{},{},{},{},{},{},{}",
            r.n_cells, r.err_e, r.ord_e, r.err_h, r.ord_h, r.err_p, r.ord_p
        )
        .unwrap();
    }
    write_text(path, &text)
}

/// Writes a dispersion curve with the header `omega,re_k,im_k,c,eta`.
pub fn write_dispersion_csv(path: &Path, samples: &[DispersionSample]) -> Result<()> {
    let mut text = String::from("omega,re_k,im_k,c,eta\n");
    for s in samples {
        writeln!(
            text,
            "{},{},{},{},{}",
            s.omega, s.k.re, s.k.im, s.phase_velocity, s.attenuation
        )
        .unwrap();
    }
    write_text(path, &text)
}

/// Writes the fitted-rule error curve `|chi(omega) - 1|` with the header
/// `omega,chi_deviation`.
pub fn write_chi_deviation_csv(path: &Path, points: &[(f64, f64)]) -> Result<()> {
    let mut text = String::from("omega,chi_deviation\n");
    for (omega, deviation) in points {
        writeln!(text, "{omega},{deviation}").unwrap();
    }
    write_text(path, &text)
}

/// One row of the timing table.
#[derive(Debug, Clone, Copy)]
pub struct TimingRow {
    pub nt: usize,
    pub fast_seconds: f64,
    pub direct_seconds: f64,
}

/// Writes the timing table `nt,fast_seconds,direct_seconds` with the fitted
/// log-log slopes appended as comment lines.
pub fn write_timing_csv(
    path: &Path,
    rows: &[TimingRow],
    fast_slope: f64,
    direct_slope: f64,
) -> Result<()> {
    let mut text = String::from("nt,fast_seconds,direct_seconds\n");
    for r in rows {
        writeln!(text, "{},{},{}", r.nt, r.fast_seconds, r.direct_seconds).unwrap();
    }
    writeln!(text, "# fast_slope = {fast_slope}").unwrap();
    writeln!(text, "# direct_slope = {direct_slope}").unwrap();
    write_text(path, &text)
}

/// Writes the manifest: one `key = value` line per resolved parameter, in
/// the order the entries were collected.
pub fn write_manifest(path: &Path, entries: &[(String, String)]) -> Result<()> {
    let mut text = String::new();
    for (key, value) in entries {
        writeln!(text, "{key} = {value}").unwrap();
    }
    write_text(path, &text)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use coledg_core::quadopt::gauss_jacobi_init;
    use std::path::PathBuf;

    fn scratch(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join("coledg-fileio-tests");
        fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn quadrature_files_round_trip_bit_for_bit() {
        let band = FrequencyBand::with_default_samples(0.5, 5.0, 7).unwrap();
        let quad = gauss_jacobi_init(7, 0.35, &band).unwrap();
        let first = scratch("roundtrip-a.txt");
        let second = scratch("roundtrip-b.txt");
        write_quadrature(&first, &quad, None).unwrap();
        let back = read_quadrature(&first).unwrap();
        assert_eq!(back.weights(), quad.weights());
        assert_eq!(back.abscissae(), quad.abscissae());
        assert_eq!(back.alpha(), quad.alpha());
        write_quadrature(&second, &back, None).unwrap();
        assert_eq!(
            fs::read(&first).unwrap(),
            fs::read(&second).unwrap(),
            "write-read-write must reproduce the file"
        );
    }

    #[test]
    fn quadrature_reader_skips_extra_comments_and_checks_counts() {
        let band = FrequencyBand::with_default_samples(0.5, 5.0, 3).unwrap();
        let quad = gauss_jacobi_init(3, 0.5, &band).unwrap();
        let path = scratch("flagged.txt");
        write_quadrature(&path, &quad, Some("unoptimized initializer")).unwrap();
        let back = read_quadrature(&path).unwrap();
        assert_eq!(back.weights(), quad.weights());

        let truncated = scratch("truncated.txt");
        let text = fs::read_to_string(&path).unwrap();
        let shorter: Vec<&str> = text.lines().take(4).collect();
        fs::write(&truncated, shorter.join("\n")).unwrap();
        assert!(read_quadrature(&truncated).is_err());
    }

    #[test]
    fn field_snapshots_round_trip_bit_for_bit() {
        let mesh = Mesh1D::new(0.0, 2.0, 5).unwrap();
        let mut field = DgField::zeros(mesh, 2).unwrap();
        for (i, c) in field.coeffs_mut().iter_mut().enumerate() {
            *c = (i as f64 + 0.25).sin() * 1e3;
        }
        let path = scratch("field.csv");
        write_field(&path, &field).unwrap();
        let back = read_field(&path).unwrap();
        assert_eq!(back.coeffs(), field.coeffs());
        assert_eq!(back.degree(), 2);
        assert_eq!(back.mesh().n_cells(), 5);
    }

    #[test]
    fn csv_headers_match_the_documented_formats() {
        let path = scratch("trace.csv");
        write_energy_trace(&path, &[]).unwrap();
        assert_eq!(
            fs::read_to_string(&path).unwrap(),
            "t,e1,e2_sharp,total,dissipation\n"
        );
        let path = scratch("diffs.csv");
        write_energy_differences(&path, &[]).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "t,e_sharp_diff,e1_diff\n");
        let path = scratch("conv.csv");
        write_convergence_csv(&path, &[]).unwrap();
        assert_eq!(
            fs::read_to_string(&path).unwrap(),
            "n_cells,errE,ordE,errH,ordH,errP,ordP\n"
        );
        let path = scratch("disp.csv");
        write_dispersion_csv(&path, &[]).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "omega,re_k,im_k,c,eta\n");
    }
}
