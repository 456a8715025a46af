//! Spatial discretization: uniform 1D mesh, modal piecewise-polynomial
//! fields, L2 and Gauss-Radau projections, and the upwind-flux
//! discontinuous Galerkin operators.
//!
//! Each cell carries an orthonormal Legendre basis
//! `phi_i(xi) = sqrt((2i+1)/2) P_i(xi)` on the reference element `[-1, 1]`,
//! so the local mass matrix is `(h/2) I` and mass inversion is a scaling.
//! Volume integrals use a fixed `(k+2)`-point Gauss-Legendre rule (exact for
//! every polynomial integrand in the scheme); face traces use the closed-form
//! endpoint values `phi_i(+-1) = (+-1)^i sqrt((2i+1)/2)`.
//!
//! The two flux-coupled spatial operators are, in weak (unscaled) form,
//!
//! ```text
//! (Wc u)_j = -S u_j + avg-flux terms     (central / average part)
//! (Wj u)_j = jump terms                  (upwind dissipation part)
//! ```
//!
//! and the semi-discrete right-hand sides are
//! `D_E(E, H) = (2/h) (Wc E + (Z/2) Wj H)` for the magnetic equation and
//! `D_H(H, E) = (2/h) (Wc H + (Y/2) Wj E)` for the electric one, with
//! `Z = sqrt(mu0 / (eps0 eps_inf))` and `Y = 1/Z`. Two exact algebraic facts
//! make the scheme stable and are pinned by tests: `u^T Wc u = 0` and
//! `u^T Wj u = -sum_faces [u]^2`.

use crate::linalg::{mat_vec_acc, DenseLu, LinAlgError};
use crate::material::MaterialParams;
use crate::math::{gauss_legendre, legendre_all, legendre_prime_all};
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

/// Errors from mesh construction, basis setup, or mixing incompatible fields.
#[derive(Debug, Clone, PartialEq)]
pub enum DgError {
    /// Mesh needs `x_plus > x_minus` and at least two cells.
    BadMesh {
        /// Left endpoint.
        x_minus: f64,
        /// Right endpoint.
        x_plus: f64,
        /// Cell count.
        n_cells: usize,
    },
    /// Polynomial degree must be at least 1.
    BadDegree {
        /// Offending degree.
        degree: usize,
    },
    /// Two fields do not share a mesh and degree.
    MeshMismatch,
    /// A projection system could not be factored.
    LinAlg(LinAlgError),
}

impl core::fmt::Display for DgError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            DgError::BadMesh {
                x_minus,
                x_plus,
                n_cells,
            } => write!(
                f,
                "mesh needs x_plus > x_minus and at least 2 cells, got [{x_minus}, {x_plus}] with {n_cells}"
            ),
            DgError::BadDegree { degree } => {
                write!(f, "polynomial degree must be >= 1, got {degree}")
            }
            DgError::MeshMismatch => write!(f, "fields do not share a mesh and degree"),
            DgError::LinAlg(e) => write!(f, "projection solve failed: {e}"),
        }
    }
}

impl core::error::Error for DgError {}

impl From<LinAlgError> for DgError {
    fn from(e: LinAlgError) -> Self {
        DgError::LinAlg(e)
    }
}

/// Uniform periodic mesh of `[x_minus, x_plus]` with `n_cells` cells.
///
/// Cell `j` (0-based) spans `[x_minus + j h, x_minus + (j+1) h]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mesh1D {
    x_minus: f64,
    x_plus: f64,
    n_cells: usize,
    h: f64,
}

impl Mesh1D {
    /// Validates `x_plus > x_minus` (finite) and `n_cells >= 2`.
    pub fn new(x_minus: f64, x_plus: f64, n_cells: usize) -> Result<Self, DgError> {
        if !(x_minus.is_finite() && x_plus.is_finite() && x_plus > x_minus) || n_cells < 2 {
            return Err(DgError::BadMesh {
                x_minus,
                x_plus,
                n_cells,
            });
        }
        let h = (x_plus - x_minus) / n_cells as f64;
        Ok(Mesh1D {
            x_minus,
            x_plus,
            n_cells,
            h,
        })
    }

    /// Left domain endpoint.
    pub fn x_minus(&self) -> f64 {
        self.x_minus
    }

    /// Right domain endpoint.
    pub fn x_plus(&self) -> f64 {
        self.x_plus
    }

    /// Number of cells `M`.
    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    /// Uniform cell width.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Physical coordinate of reference point `xi` in cell `j`.
    pub fn to_physical(&self, j: usize, xi: f64) -> f64 {
        self.x_minus + (j as f64 + 0.5 * (xi + 1.0)) * self.h
    }
}

/// Piecewise-polynomial field: modal coefficients per cell in the orthonormal
/// Legendre basis, row-major `[cell][mode]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DgField {
    mesh: Mesh1D,
    degree: usize,
    coeffs: Vec<f64>,
}

impl DgField {
    /// The zero field of degree `k >= 1` on `mesh`.
    pub fn zeros(mesh: Mesh1D, degree: usize) -> Result<Self, DgError> {
        if degree < 1 {
            return Err(DgError::BadDegree { degree });
        }
        Ok(DgField {
            mesh,
            degree,
            coeffs: vec![0.0; mesh.n_cells() * (degree + 1)],
        })
    }

    /// Mesh the field lives on.
    pub fn mesh(&self) -> Mesh1D {
        self.mesh
    }

    /// Polynomial degree `k`.
    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Modes per cell, `k + 1`.
    pub fn n_modes(&self) -> usize {
        self.degree + 1
    }

    /// All coefficients, row-major by cell.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Mutable view of all coefficients.
    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    /// Coefficients of cell `j`.
    pub fn cell(&self, j: usize) -> &[f64] {
        let n = self.n_modes();
        &self.coeffs[j * n..(j + 1) * n]
    }

    /// Mutable coefficients of cell `j`.
    pub fn cell_mut(&mut self, j: usize) -> &mut [f64] {
        let n = self.n_modes();
        &mut self.coeffs[j * n..(j + 1) * n]
    }

    /// True when the other field shares this mesh and degree (addable).
    pub fn compatible(&self, other: &DgField) -> bool {
        self.mesh == other.mesh && self.degree == other.degree
    }

    /// `self += a * other`; errors on mesh/degree mismatch.
    pub fn add_scaled(&mut self, a: f64, other: &DgField) -> Result<(), DgError> {
        if !self.compatible(other) {
            return Err(DgError::MeshMismatch);
        }
        for (s, &o) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *s += a * o;
        }
        Ok(())
    }

    /// Value at reference point `xi` in cell `j`.
    pub fn eval_ref(&self, j: usize, xi: f64) -> f64 {
        let n = self.n_modes();
        let mut p = vec![0.0; n];
        legendre_all(xi, &mut p);
        self.cell(j)
            .iter()
            .enumerate()
            .map(|(i, &c)| c * (i as f64 + 0.5).sqrt() * p[i])
            .sum()
    }

    /// Trace at the left edge of cell `j` (reference `xi = -1`).
    pub fn trace_left(&self, j: usize) -> f64 {
        self.cell(j)
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                c * sign * (i as f64 + 0.5).sqrt()
            })
            .sum()
    }

    /// Trace at the right edge of cell `j` (reference `xi = +1`).
    pub fn trace_right(&self, j: usize) -> f64 {
        self.cell(j)
            .iter()
            .enumerate()
            .map(|(i, &c)| c * (i as f64 + 0.5).sqrt())
            .sum()
    }

    /// Jump `[u] = u^+ - u^-` at face `j + 1/2` (periodic wrap).
    pub fn face_jump(&self, j: usize) -> f64 {
        let next = (j + 1) % self.mesh.n_cells();
        self.trace_left(next) - self.trace_right(j)
    }

    /// L2 norm over the domain, `sqrt((h/2) sum c^2)` by orthonormality.
    pub fn l2_norm(&self) -> f64 {
        (0.5 * self.mesh.h() * self.coeffs.iter().map(|&c| c * c).sum::<f64>()).sqrt()
    }
}

/// Reference-element tables: quadrature rule, basis values/derivatives at the
/// nodes, endpoint values, and the stiffness matrix `S[i][m] = ∫ phi_m phi_i'`.
#[derive(Debug, Clone)]
pub struct Basis {
    degree: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// `phi[q * (k+1) + i] = phi_i(node_q)`.
    phi: Vec<f64>,
    phi_left: Vec<f64>,
    phi_right: Vec<f64>,
    stiffness: Vec<f64>,
}

impl Basis {
    /// Tables for degree `k >= 1`, with the `(k+2)`-point volume rule.
    pub fn new(degree: usize) -> Result<Self, DgError> {
        if degree < 1 {
            return Err(DgError::BadDegree { degree });
        }
        let n = degree + 1;
        let nq = degree + 2;
        let (nodes, weights) = gauss_legendre(nq);
        let mut phi = vec![0.0; nq * n];
        // Derivative values are only needed here, to assemble the stiffness.
        let mut dphi = vec![0.0; nq * n];
        let mut p = vec![0.0; n];
        let mut dp = vec![0.0; n];
        for (q, &x) in nodes.iter().enumerate() {
            legendre_all(x, &mut p);
            legendre_prime_all(&p, &mut dp);
            for i in 0..n {
                let scale = (i as f64 + 0.5).sqrt();
                phi[q * n + i] = scale * p[i];
                dphi[q * n + i] = scale * dp[i];
            }
        }
        let mut phi_left = vec![0.0; n];
        let mut phi_right = vec![0.0; n];
        for i in 0..n {
            let scale = (i as f64 + 0.5).sqrt();
            phi_right[i] = scale;
            phi_left[i] = if i % 2 == 0 { scale } else { -scale };
        }
        // S[i][m] = ∫ phi_m phi_i' dxi by the volume rule (exact here).
        let mut stiffness = vec![0.0; n * n];
        for i in 0..n {
            for m in 0..n {
                let mut s = 0.0;
                for q in 0..nq {
                    s += weights[q] * phi[q * n + m] * dphi[q * n + i];
                }
                stiffness[i * n + m] = s;
            }
        }
        Ok(Basis {
            degree,
            nodes,
            weights,
            phi,
            phi_left,
            phi_right,
            stiffness,
        })
    }

    /// Polynomial degree `k`.
    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Modes per cell, `k + 1`.
    pub fn n_modes(&self) -> usize {
        self.degree + 1
    }

    /// Quadrature nodes on `[-1, 1]`.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Quadrature weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Basis values at node `q`.
    pub fn phi_at(&self, q: usize) -> &[f64] {
        let n = self.n_modes();
        &self.phi[q * n..(q + 1) * n]
    }

    /// Endpoint values `phi_i(-1)`.
    pub fn phi_left(&self) -> &[f64] {
        &self.phi_left
    }

    /// Endpoint values `phi_i(+1)`.
    pub fn phi_right(&self) -> &[f64] {
        &self.phi_right
    }

    /// Stiffness matrix `S[i][m] = ∫ phi_m phi_i' dxi`, row-major.
    pub fn stiffness(&self) -> &[f64] {
        &self.stiffness
    }

    /// L2-projects `f` into `out`'s space (same quadrature as all volume
    /// integrals); `out` must match this basis's degree.
    pub fn project_into(&self, f: impl Fn(f64) -> f64, out: &mut DgField) {
        let n = self.n_modes();
        debug_assert_eq!(out.n_modes(), n);
        let mesh = out.mesh();
        for j in 0..mesh.n_cells() {
            let cell = out.cell_mut(j);
            cell.iter_mut().for_each(|c| *c = 0.0);
            for (q, (&xi, &w)) in self.nodes.iter().zip(&self.weights).enumerate() {
                let fx = f(mesh.to_physical(j, xi));
                let phi_q = &self.phi[q * n..(q + 1) * n];
                for i in 0..n {
                    cell[i] += w * fx * phi_q[i];
                }
            }
        }
    }
}

/// Standard L2 projection of `f` onto the degree-`k` space over `mesh`.
///
/// Coefficients are `c_i = ∫ f(x(xi)) phi_i(xi) dxi` by orthonormality,
/// evaluated with the `(k+2)`-point rule.
pub fn l2_project(
    f: impl Fn(f64) -> f64,
    mesh: Mesh1D,
    k: usize,
) -> Result<DgField, DgError> {
    let basis = Basis::new(k)?;
    let mut out = DgField::zeros(mesh, k)?;
    basis.project_into(f, &mut out);
    Ok(out)
}

/// Which endpoint a Gauss-Radau projection interpolates exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadauSide {
    /// Match the value at the left face of each cell (trace from inside).
    Plus,
    /// Match the value at the right face of each cell (trace from inside).
    Minus,
}

/// Gauss-Radau projection: `k` moment conditions against degrees `0..k-1`
/// plus one endpoint interpolation condition per cell.
///
/// Realized per cell as a `(k+1) x (k+1)` linear system (`k` moment rows and
/// one endpoint row), factored once and reused across cells.
pub fn gauss_radau_project(
    f: impl Fn(f64) -> f64,
    mesh: Mesh1D,
    k: usize,
    side: RadauSide,
) -> Result<DgField, DgError> {
    let basis = Basis::new(k)?;
    let n = k + 1;
    // Moment rows: ∫ phi_i phi_m dxi (identity by orthonormality, assembled
    // by quadrature); last row: endpoint values.
    let mut a = vec![0.0; n * n];
    for m in 0..k {
        for i in 0..n {
            let mut s = 0.0;
            for q in 0..basis.nodes.len() {
                s += basis.weights[q] * basis.phi[q * n + i] * basis.phi[q * n + m];
            }
            a[m * n + i] = s;
        }
    }
    let endpoint = match side {
        RadauSide::Plus => basis.phi_left(),
        RadauSide::Minus => basis.phi_right(),
    };
    a[k * n..(k + 1) * n].copy_from_slice(endpoint);
    let lu = DenseLu::factor(a, n)?;

    let mut out = DgField::zeros(mesh, k)?;
    let mut rhs = vec![0.0; n];
    for j in 0..mesh.n_cells() {
        rhs.iter_mut().for_each(|r| *r = 0.0);
        for (q, (&xi, &w)) in basis.nodes.iter().zip(&basis.weights).enumerate() {
            let fx = f(mesh.to_physical(j, xi));
            for m in 0..k {
                rhs[m] += w * fx * basis.phi[q * n + m];
            }
        }
        rhs[k] = match side {
            RadauSide::Plus => f(mesh.to_physical(j, -1.0)),
            RadauSide::Minus => f(mesh.to_physical(j, 1.0)),
        };
        lu.solve(&mut rhs);
        out.cell_mut(j).copy_from_slice(&rhs);
    }
    Ok(out)
}

/// Combined characteristic projections of the initial pair `(E0, H0)`.
///
/// With `Z` the medium impedance and `Y = 1/Z`:
///
/// ```text
/// P_E(E0, H0) = 1/2 P+ (E0 + Z H0) + 1/2 P- (E0 - Z H0)
/// P_H(H0, E0) = 1/2 P+ (H0 + Y E0) + 1/2 P- (H0 - Y E0)
/// ```
///
/// Returns `(P_E, P_H)`.
pub fn project_initial_eh(
    e0: impl Fn(f64) -> f64 + Copy,
    h0: impl Fn(f64) -> f64 + Copy,
    params: &MaterialParams,
    mesh: Mesh1D,
    k: usize,
) -> Result<(DgField, DgField), DgError> {
    let z = params.impedance();
    let y = params.admittance();
    let mut e_proj = gauss_radau_project(|x| e0(x) + z * h0(x), mesh, k, RadauSide::Plus)?;
    let e_minus = gauss_radau_project(|x| e0(x) - z * h0(x), mesh, k, RadauSide::Minus)?;
    for (a, &b) in e_proj.coeffs_mut().iter_mut().zip(e_minus.coeffs()) {
        *a = 0.5 * (*a + b);
    }
    let mut h_proj = gauss_radau_project(|x| h0(x) + y * e0(x), mesh, k, RadauSide::Plus)?;
    let h_minus = gauss_radau_project(|x| h0(x) - y * e0(x), mesh, k, RadauSide::Minus)?;
    for (a, &b) in h_proj.coeffs_mut().iter_mut().zip(h_minus.coeffs()) {
        *a = 0.5 * (*a + b);
    }
    Ok((e_proj, h_proj))
}

/// Upwind numerical fluxes at the `M` periodic faces.
///
/// Face `j` sits between cells `j` and `j+1 (mod M)`; with the jump
/// `[v] = v^+ - v^-` and average `{v} = (v^+ + v^-)/2`,
/// `E_hat = {E} + (Z/2)[H]` and `H_hat = {H} + (Y/2)[E]`.
pub fn upwind_face_values(
    e_h: &DgField,
    h_h: &DgField,
    params: &MaterialParams,
) -> Result<Vec<(f64, f64)>, DgError> {
    if !e_h.compatible(h_h) {
        return Err(DgError::MeshMismatch);
    }
    let m = e_h.mesh().n_cells();
    let z = params.impedance();
    let y = params.admittance();
    let mut out = Vec::with_capacity(m);
    for j in 0..m {
        let next = (j + 1) % m;
        let (e_minus, e_plus) = (e_h.trace_right(j), e_h.trace_left(next));
        let (h_minus, h_plus) = (h_h.trace_right(j), h_h.trace_left(next));
        let e_hat = 0.5 * (e_plus + e_minus) + 0.5 * z * (h_plus - h_minus);
        let h_hat = 0.5 * (h_plus + h_minus) + 0.5 * y * (e_plus - e_minus);
        out.push((e_hat, h_hat));
    }
    Ok(out)
}

/// Assembled flux-coupled DG operators on a uniform periodic mesh.
///
/// The per-cell blocks (all `(k+1) x (k+1)`, row-major) combine into block
/// circulant operators: for the central part
/// `(Wc u)_j = Dc u_j + Uc u_{j+1} + Lc u_{j-1}` and likewise `Wj` with the
/// jump blocks.
#[derive(Debug, Clone)]
pub struct DgOperators {
    mesh: Mesh1D,
    basis: Basis,
    z_imp: f64,
    y_adm: f64,
    d_c: Vec<f64>,
    u_c: Vec<f64>,
    l_c: Vec<f64>,
    d_j: Vec<f64>,
    u_j: Vec<f64>,
    l_j: Vec<f64>,
}

/// Builds the operators for degree `k >= 1` with the medium's impedance.
pub fn assemble_operators(
    mesh: Mesh1D,
    k: usize,
    params: &MaterialParams,
) -> Result<DgOperators, DgError> {
    let basis = Basis::new(k)?;
    let n = k + 1;
    let (phi_l, phi_r) = (basis.phi_left().to_vec(), basis.phi_right().to_vec());
    let s = basis.stiffness().to_vec();
    let mut d_c = vec![0.0; n * n];
    let mut u_c = vec![0.0; n * n];
    let mut l_c = vec![0.0; n * n];
    let mut d_j = vec![0.0; n * n];
    let mut u_j = vec![0.0; n * n];
    let mut l_j = vec![0.0; n * n];
    for i in 0..n {
        for m in 0..n {
            let rr = phi_r[i] * phi_r[m];
            let ll = phi_l[i] * phi_l[m];
            let rl = phi_r[i] * phi_l[m];
            let lr = phi_l[i] * phi_r[m];
            d_c[i * n + m] = -s[i * n + m] + 0.5 * rr - 0.5 * ll;
            u_c[i * n + m] = 0.5 * rl;
            l_c[i * n + m] = -0.5 * lr;
            d_j[i * n + m] = -rr - ll;
            u_j[i * n + m] = rl;
            l_j[i * n + m] = lr;
        }
    }
    Ok(DgOperators {
        mesh,
        basis,
        z_imp: params.impedance(),
        y_adm: params.admittance(),
        d_c,
        u_c,
        l_c,
        d_j,
        u_j,
        l_j,
    })
}

impl DgOperators {
    /// Mesh the operators were assembled on.
    pub fn mesh(&self) -> Mesh1D {
        self.mesh
    }

    /// Reference-element tables.
    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    /// Medium impedance `Z` baked into the upwind terms.
    pub fn impedance(&self) -> f64 {
        self.z_imp
    }

    /// Medium admittance `Y = 1/Z`.
    pub fn admittance(&self) -> f64 {
        self.y_adm
    }

    /// Central blocks `(Dc, Uc, Lc)`.
    pub fn central_blocks(&self) -> (&[f64], &[f64], &[f64]) {
        (&self.d_c, &self.u_c, &self.l_c)
    }

    /// Jump blocks `(Dj, Uj, Lj)`.
    pub fn jump_blocks(&self) -> (&[f64], &[f64], &[f64]) {
        (&self.d_j, &self.u_j, &self.l_j)
    }

    fn apply_blocks(
        &self,
        d: &[f64],
        u_blk: &[f64],
        l_blk: &[f64],
        field: &DgField,
        out: &mut DgField,
    ) {
        let m = self.mesh.n_cells();
        let n = self.basis.n_modes();
        out.coeffs_mut().iter_mut().for_each(|c| *c = 0.0);
        for j in 0..m {
            let up = (j + 1) % m;
            let lo = (j + m - 1) % m;
            // Split borrow: output cell j against input cells.
            let (uj, uup, ulo) = (field.cell(j), field.cell(up), field.cell(lo));
            let out_j = out.cell_mut(j);
            mat_vec_acc(n, d, uj, out_j);
            mat_vec_acc(n, u_blk, uup, out_j);
            mat_vec_acc(n, l_blk, ulo, out_j);
        }
    }

    /// Weak-form central (average-flux) operator `Wc u`, unscaled.
    pub fn apply_central(&self, field: &DgField, out: &mut DgField) {
        self.apply_blocks(&self.d_c, &self.u_c, &self.l_c, field, out);
    }

    /// Weak-form jump operator `Wj u`, unscaled.
    pub fn apply_jump(&self, field: &DgField, out: &mut DgField) {
        self.apply_blocks(&self.d_j, &self.u_j, &self.l_j, field, out);
    }

    /// Magnetic-equation right-hand side `D_E(E, H) = (2/h)(Wc E + (Z/2) Wj H)`
    /// in coefficient space, so that `mu0 dH/dt = D_E(E, H) + proj(F1)`.
    pub fn d_e(&self, e_h: &DgField, h_h: &DgField, out: &mut DgField) {
        self.flux_combine(e_h, h_h, 0.5 * self.z_imp, out);
    }

    /// Electric-equation right-hand side `D_H(H, E) = (2/h)(Wc H + (Y/2) Wj E)`.
    pub fn d_h(&self, h_h: &DgField, e_h: &DgField, out: &mut DgField) {
        self.flux_combine(h_h, e_h, 0.5 * self.y_adm, out);
    }

    fn flux_combine(&self, central: &DgField, jump: &DgField, jump_scale: f64, out: &mut DgField) {
        let m = self.mesh.n_cells();
        let n = self.basis.n_modes();
        let inv_jac = 2.0 / self.mesh.h();
        let mut tmp = vec![0.0; n];
        out.coeffs_mut().iter_mut().for_each(|c| *c = 0.0);
        for j in 0..m {
            let up = (j + 1) % m;
            let lo = (j + m - 1) % m;
            {
                let out_j = out.cell_mut(j);
                mat_vec_acc(n, &self.d_c, central.cell(j), out_j);
                mat_vec_acc(n, &self.u_c, central.cell(up), out_j);
                mat_vec_acc(n, &self.l_c, central.cell(lo), out_j);
            }
            tmp.iter_mut().for_each(|t| *t = 0.0);
            mat_vec_acc(n, &self.d_j, jump.cell(j), &mut tmp);
            mat_vec_acc(n, &self.u_j, jump.cell(up), &mut tmp);
            mat_vec_acc(n, &self.l_j, jump.cell(lo), &mut tmp);
            let out_j = out.cell_mut(j);
            for i in 0..n {
                out_j[i] = inv_jac * (out_j[i] + jump_scale * tmp[i]);
            }
        }
    }

    /// Mass-matrix action: multiply coefficients by `h/2`.
    pub fn mass_apply(&self, field: &mut DgField) {
        let jac = 0.5 * self.mesh.h();
        field.coeffs_mut().iter_mut().for_each(|c| *c *= jac);
    }

    /// Inverse mass action: multiply coefficients by `2/h`.
    pub fn mass_inverse_apply(&self, field: &mut DgField) {
        let inv = 2.0 / self.mesh.h();
        field.coeffs_mut().iter_mut().for_each(|c| *c *= inv);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_params() -> MaterialParams {
        MaterialParams::normalized(0.5).unwrap()
    }

    fn random_field(mesh: Mesh1D, k: usize, rng: &mut ChaCha8Rng) -> DgField {
        let mut f = DgField::zeros(mesh, k).unwrap();
        for c in f.coeffs_mut() {
            *c = rng.gen_range(-1.0..1.0);
        }
        f
    }

    #[test]
    fn mesh_and_degree_validation() {
        assert!(Mesh1D::new(0.0, 2.0, 1).is_err());
        assert!(Mesh1D::new(2.0, 0.0, 4).is_err());
        assert!(Mesh1D::new(0.0, f64::INFINITY, 4).is_err());
        let mesh = Mesh1D::new(0.0, 2.0, 8).unwrap();
        assert_relative_eq!(mesh.h(), 0.25);
        assert_relative_eq!(mesh.to_physical(0, -1.0), 0.0);
        assert_relative_eq!(mesh.to_physical(7, 1.0), 2.0);
        assert_relative_eq!(mesh.to_physical(3, 0.0), 0.875);
        assert!(DgField::zeros(mesh, 0).is_err());
        assert!(Basis::new(0).is_err());
        assert!(assemble_operators(mesh, 0, &unit_params()).is_err());
    }

    #[test]
    fn stiffness_matches_closed_form() {
        // S[i][m] = sqrt((2i+1)(2m+1)) when i > m with i-m odd, else 0.
        for k in 1..=6 {
            let basis = Basis::new(k).unwrap();
            let n = k + 1;
            for i in 0..n {
                for m in 0..n {
                    let expected = if i > m && (i - m) % 2 == 1 {
                        ((2 * i + 1) as f64 * (2 * m + 1) as f64).sqrt()
                    } else {
                        0.0
                    };
                    assert!(
                        (basis.stiffness()[i * n + m] - expected).abs() < 1e-12,
                        "k={k} S[{i}][{m}]"
                    );
                }
            }
        }
    }

    #[test]
    fn endpoint_values_closed_form() {
        let basis = Basis::new(4).unwrap();
        for i in 0..5 {
            let scale = (i as f64 + 0.5).sqrt();
            assert_relative_eq!(basis.phi_right()[i], scale, max_relative = 1e-15);
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            assert_relative_eq!(basis.phi_left()[i], sign * scale, max_relative = 1e-15);
        }
    }

    #[test]
    fn l2_projection_reproduces_polynomials() {
        let mesh = Mesh1D::new(-1.0, 3.0, 5).unwrap();
        for k in 1..=3 {
            // A global polynomial of degree k is in V_h.
            let f = |x: f64| (0..=k).map(|d| 0.3 * (d as f64 + 1.0) * x.powi(d as i32)).sum::<f64>();
            let proj = l2_project(f, mesh, k).unwrap();
            for j in 0..mesh.n_cells() {
                for &xi in &[-1.0, -0.4, 0.3, 1.0] {
                    let x = mesh.to_physical(j, xi);
                    assert!(
                        (proj.eval_ref(j, xi) - f(x)).abs() < 1e-12,
                        "k={k} cell {j} xi {xi}"
                    );
                }
            }
        }
    }

    #[test]
    fn l2_projection_of_zero_is_zero() {
        let mesh = Mesh1D::new(0.0, 2.0, 4).unwrap();
        let proj = l2_project(|_| 0.0, mesh, 2).unwrap();
        assert!(proj.coeffs().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn l2_projection_converges_at_k_plus_one() {
        // cos(pi x), k = 1: halving h cuts the L2 error by about 2^(k+1) = 4.
        let err = |cells: usize| {
            let mesh = Mesh1D::new(0.0, 2.0, cells).unwrap();
            let proj = l2_project(|x| (core::f64::consts::PI * x).cos(), mesh, 1).unwrap();
            // Fine-quadrature error norm.
            let (nodes, weights) = gauss_legendre(6);
            let mut acc = 0.0;
            for j in 0..cells {
                for (&xi, &w) in nodes.iter().zip(&weights) {
                    let x = mesh.to_physical(j, xi);
                    let d = proj.eval_ref(j, xi) - (core::f64::consts::PI * x).cos();
                    acc += 0.5 * mesh.h() * w * d * d;
                }
            }
            acc.sqrt()
        };
        let (e1, e2, e3) = (err(10), err(20), err(40));
        let r1 = e1 / e2;
        let r2 = e2 / e3;
        assert!((3.5..4.5).contains(&r1), "ratio {r1}");
        assert!((3.7..4.3).contains(&r2), "ratio {r2}");
    }

    #[test]
    fn projection_moment_conditions_hold_for_random_functions() {
        // 200 random polynomial-plus-sinusoid functions; the defining moment
        // conditions (w.r.t. the volume quadrature rule) hold to 1e-11.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mesh = Mesh1D::new(0.0, 2.0, 3).unwrap();
        for trial in 0..200 {
            let k = 1 + trial % 3;
            let basis = Basis::new(k).unwrap();
            let n = k + 1;
            let coef: Vec<f64> = (0..=k).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (b, c, d) = (
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.5..4.0),
                rng.gen_range(-3.0..3.0),
            );
            let f = |x: f64| {
                coef.iter()
                    .enumerate()
                    .map(|(p, &a)| a * x.powi(p as i32))
                    .sum::<f64>()
                    + b * (c * x + d).sin()
            };

            let pl2 = l2_project(f, mesh, k).unwrap();
            let pp = gauss_radau_project(f, mesh, k, RadauSide::Plus).unwrap();
            let pm = gauss_radau_project(f, mesh, k, RadauSide::Minus).unwrap();
            for j in 0..mesh.n_cells() {
                for m in 0..n {
                    // Residual moment of the L2 projection (all modes).
                    let mut r = 0.0;
                    for (q, (&xi, &w)) in basis.nodes().iter().zip(basis.weights()).enumerate() {
                        let x = mesh.to_physical(j, xi);
                        r += w * (pl2.eval_ref(j, xi) - f(x)) * basis.phi_at(q)[m];
                        let _ = q;
                    }
                    assert!(r.abs() < 1e-11, "L2 moment {m} cell {j} trial {trial}: {r}");
                }
                for m in 0..k {
                    // Moment conditions of both Gauss-Radau projections.
                    for proj in [&pp, &pm] {
                        let mut r = 0.0;
                        for (q, (&xi, &w)) in
                            basis.nodes().iter().zip(basis.weights()).enumerate()
                        {
                            let x = mesh.to_physical(j, xi);
                            r += w * (proj.eval_ref(j, xi) - f(x)) * basis.phi_at(q)[m];
                            let _ = q;
                        }
                        assert!(r.abs() < 1e-11, "GR moment {m} cell {j} trial {trial}: {r}");
                    }
                }
                // Endpoint interpolation conditions.
                let left = f(mesh.to_physical(j, -1.0));
                let right = f(mesh.to_physical(j, 1.0));
                assert!((pp.eval_ref(j, -1.0) - left).abs() < 1e-11);
                assert!((pm.eval_ref(j, 1.0) - right).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn gauss_radau_identity_on_vh_and_endpoint_exactness() {
        let mesh = Mesh1D::new(0.0, 2.0, 4).unwrap();
        let k = 2;
        let f = |x: f64| 1.0 - 0.7 * x + 0.25 * x * x;
        for side in [RadauSide::Plus, RadauSide::Minus] {
            let p = gauss_radau_project(f, mesh, k, side).unwrap();
            for j in 0..4 {
                for &xi in &[-1.0, 0.2, 1.0] {
                    let x = mesh.to_physical(j, xi);
                    assert!((p.eval_ref(j, xi) - f(x)).abs() < 1e-12);
                }
            }
        }
        // x^(k+1) is not in V_h but the imposed endpoint still matches exactly.
        let g = |x: f64| x.powi(3);
        let pp = gauss_radau_project(g, mesh, k, RadauSide::Plus).unwrap();
        let pm = gauss_radau_project(g, mesh, k, RadauSide::Minus).unwrap();
        for j in 0..4 {
            assert!((pp.eval_ref(j, -1.0) - g(mesh.to_physical(j, -1.0))).abs() < 1e-12);
            assert!((pm.eval_ref(j, 1.0) - g(mesh.to_physical(j, 1.0))).abs() < 1e-12);
        }
    }

    #[test]
    fn gauss_radau_converges_at_k_plus_one() {
        // cos(pi x), k = 1, P-minus: order about 2 under refinement.
        let err = |cells: usize| {
            let mesh = Mesh1D::new(0.0, 2.0, cells).unwrap();
            let p = gauss_radau_project(
                |x| (core::f64::consts::PI * x).cos(),
                mesh,
                1,
                RadauSide::Minus,
            )
            .unwrap();
            let (nodes, weights) = gauss_legendre(6);
            let mut acc = 0.0;
            for j in 0..cells {
                for (&xi, &w) in nodes.iter().zip(&weights) {
                    let x = mesh.to_physical(j, xi);
                    let d = p.eval_ref(j, xi) - (core::f64::consts::PI * x).cos();
                    acc += 0.5 * mesh.h() * w * d * d;
                }
            }
            acc.sqrt()
        };
        let order = (err(20) / err(40)).log2();
        assert!((order - 2.0).abs() < 0.1, "order {order}");
    }

    #[test]
    fn initial_projection_formulas_and_reductions() {
        let mesh = Mesh1D::new(0.0, 2.0, 6).unwrap();
        let params = unit_params();
        let pi = core::f64::consts::PI;
        let k = 2;

        // With H0 = 0 the E output reduces to the average of both
        // Gauss-Radau projections of E0.
        let e0 = |x: f64| (pi * x).cos() * (pi * x).sin();
        let (pe, _) = project_initial_eh(e0, |_| 0.0, &params, mesh, k).unwrap();
        let pp = gauss_radau_project(e0, mesh, k, RadauSide::Plus).unwrap();
        let pm = gauss_radau_project(e0, mesh, k, RadauSide::Minus).unwrap();
        for (i, &c) in pe.coeffs().iter().enumerate() {
            let avg = 0.5 * (pp.coeffs()[i] + pm.coeffs()[i]);
            assert!((c - avg).abs() < 1e-12, "coeff {i}");
        }

        // Polynomial inputs of degree <= k are reproduced exactly.
        let ep = |x: f64| 0.5 - 0.2 * x + 0.1 * x * x;
        let hp = |x: f64| 1.0 + 0.4 * x;
        let (pe, ph) = project_initial_eh(ep, hp, &params, mesh, k).unwrap();
        for j in 0..mesh.n_cells() {
            for &xi in &[-1.0, 0.1, 1.0] {
                let x = mesh.to_physical(j, xi);
                assert!((pe.eval_ref(j, xi) - ep(x)).abs() < 1e-12);
                assert!((ph.eval_ref(j, xi) - hp(x)).abs() < 1e-12);
            }
        }

        // Standing-wave initial data: outputs equal the displayed
        // characteristic combinations, whose endpoint conditions hold exactly.
        let e0 = |x: f64| (pi * x).cos() * (pi * x).sin();
        let h0 = |x: f64| 2.0 * pi * (pi * x).cos() + pi * (pi * x).sin();
        let z = params.impedance();
        let y = params.admittance();
        let (pe, ph) = project_initial_eh(e0, h0, &params, mesh, k).unwrap();
        let a = gauss_radau_project(|x| e0(x) + z * h0(x), mesh, k, RadauSide::Plus).unwrap();
        let b = gauss_radau_project(|x| e0(x) - z * h0(x), mesh, k, RadauSide::Minus).unwrap();
        let c = gauss_radau_project(|x| h0(x) + y * e0(x), mesh, k, RadauSide::Plus).unwrap();
        let d = gauss_radau_project(|x| h0(x) - y * e0(x), mesh, k, RadauSide::Minus).unwrap();
        for i in 0..pe.coeffs().len() {
            assert!((pe.coeffs()[i] - 0.5 * (a.coeffs()[i] + b.coeffs()[i])).abs() < 1e-12);
            assert!((ph.coeffs()[i] - 0.5 * (c.coeffs()[i] + d.coeffs()[i])).abs() < 1e-12);
        }
        for j in 0..mesh.n_cells() {
            let xl = mesh.to_physical(j, -1.0);
            let xr = mesh.to_physical(j, 1.0);
            assert!((a.eval_ref(j, -1.0) - (e0(xl) + z * h0(xl))).abs() < 1e-12);
            assert!((b.eval_ref(j, 1.0) - (e0(xr) - z * h0(xr))).abs() < 1e-12);
            assert!((c.eval_ref(j, -1.0) - (h0(xl) + y * e0(xl))).abs() < 1e-12);
            assert!((d.eval_ref(j, 1.0) - (h0(xr) - y * e0(xr))).abs() < 1e-12);
        }
    }

    #[test]
    fn upwind_fluxes_match_formulas() {
        let mesh = Mesh1D::new(0.0, 2.0, 4).unwrap();
        let params = unit_params();
        // Continuous (global polynomial) fields: hats equal point values.
        let e = l2_project(|x| 1.0 + 0.5 * x, mesh, 1).unwrap();
        let h = l2_project(|x| 2.0 - x, mesh, 1).unwrap();
        let faces = upwind_face_values(&e, &h, &params).unwrap();
        for (j, &(e_hat, h_hat)) in faces.iter().enumerate() {
            // Face j is the right edge of cell j; the last face wraps and the
            // linear fields jump there, so skip it.
            if j + 1 == mesh.n_cells() {
                continue;
            }
            let x = mesh.to_physical(j, 1.0);
            assert_relative_eq!(e_hat, 1.0 + 0.5 * x, max_relative = 1e-13);
            assert_relative_eq!(h_hat, 2.0 - x, max_relative = 1e-13);
        }

        // Unit H jump at one face with E = 0 and unit impedance: E_hat = 1/2.
        let e0 = DgField::zeros(mesh, 1).unwrap();
        let mut h1 = DgField::zeros(mesh, 1).unwrap();
        // Constant 1 on cell 1: only mode 0, with phi_0 = 1/sqrt(2).
        h1.cell_mut(1)[0] = core::f64::consts::SQRT_2;
        assert_relative_eq!(h1.eval_ref(1, 0.3), 1.0, max_relative = 1e-14);
        let faces = upwind_face_values(&e0, &h1, &params).unwrap();
        // Face 0 (cells 0|1): [H] = +1, {H} = 1/2.
        assert_relative_eq!(faces[0].0, 0.5, max_relative = 1e-14);
        assert_relative_eq!(faces[0].1, 0.5, max_relative = 1e-14);
        // Face 1 (cells 1|2): [H] = -1, {H} = 1/2.
        assert_relative_eq!(faces[1].0, -0.5, max_relative = 1e-14);
        assert_relative_eq!(faces[1].1, 0.5, max_relative = 1e-14);
        // Remaining faces see nothing.
        assert!(faces[2].0.abs() < 1e-15 && faces[3].0.abs() < 1e-15);

        // Mismatched fields are rejected.
        let other = DgField::zeros(Mesh1D::new(0.0, 2.0, 5).unwrap(), 1).unwrap();
        assert!(upwind_face_values(&e0, &other, &params).is_err());
    }

    #[test]
    fn operators_annihilate_constants() {
        let mesh = Mesh1D::new(0.0, 2.0, 5).unwrap();
        let params = unit_params();
        let ops = assemble_operators(mesh, 2, &params).unwrap();
        let e = l2_project(|_| 3.25, mesh, 2).unwrap();
        let h = l2_project(|_| -1.5, mesh, 2).unwrap();
        let mut out = DgField::zeros(mesh, 2).unwrap();
        ops.d_e(&e, &h, &mut out);
        assert!(out.coeffs().iter().all(|&c| c.abs() < 1e-13));
        ops.d_h(&h, &e, &mut out);
        assert!(out.coeffs().iter().all(|&c| c.abs() < 1e-13));
    }

    #[test]
    fn central_operator_matches_direct_quadrature_oracle() {
        // A field supported on one cell; compare against the weak form
        // computed directly: -∫ u phi_i' dxi plus average-flux terms.
        let mesh = Mesh1D::new(0.0, 2.0, 4).unwrap();
        let k = 2;
        let n = k + 1;
        let params = unit_params();
        let ops = assemble_operators(mesh, k, &params).unwrap();
        let basis = Basis::new(k).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut u = DgField::zeros(mesh, k).unwrap();
        for c in u.cell_mut(2) {
            *c = rng.gen_range(-1.0..1.0);
        }
        let mut got = DgField::zeros(mesh, k).unwrap();
        ops.apply_central(&u, &mut got);

        let m = mesh.n_cells();
        for j in 0..m {
            for i in 0..n {
                // Volume term.
                let mut vol = 0.0;
                for (q, (&xi, &w)) in basis.nodes().iter().zip(basis.weights()).enumerate() {
                    let dphi_i = {
                        // phi_i' at node q from the tables.
                        let mut p = vec![0.0; n];
                        let mut dp = vec![0.0; n];
                        legendre_all(xi, &mut p);
                        legendre_prime_all(&p, &mut dp);
                        (i as f64 + 0.5).sqrt() * dp[i]
                    };
                    vol += w * u.eval_ref(j, xi) * dphi_i;
                    let _ = q;
                }
                // Average fluxes at the two faces of cell j.
                let up = (j + 1) % m;
                let lo = (j + m - 1) % m;
                let right_avg = 0.5 * (u.trace_right(j) + u.trace_left(up));
                let left_avg = 0.5 * (u.trace_right(lo) + u.trace_left(j));
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                let scale = (i as f64 + 0.5).sqrt();
                let expected = -vol + right_avg * scale - left_avg * sign * scale;
                assert!(
                    (got.cell(j)[i] - expected).abs() < 1e-12,
                    "cell {j} mode {i}"
                );
            }
        }
    }

    #[test]
    fn quadratic_identities_of_the_weak_operators() {
        // u^T Wc u = 0 and u^T Wj u = -sum of squared jumps, exactly.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params = unit_params();
        for &(m, k) in &[(2usize, 1usize), (3, 1), (4, 2), (7, 3)] {
            let mesh = Mesh1D::new(-1.0, 1.5, m).unwrap();
            let ops = assemble_operators(mesh, k, &params).unwrap();
            for _ in 0..20 {
                let u = random_field(mesh, k, &mut rng);
                let v = random_field(mesh, k, &mut rng);
                let mut wu = DgField::zeros(mesh, k).unwrap();
                let mut wv = DgField::zeros(mesh, k).unwrap();
                ops.apply_central(&u, &mut wu);
                ops.apply_central(&v, &mut wv);
                let quad: f64 = u.coeffs().iter().zip(wu.coeffs()).map(|(&a, &b)| a * b).sum();
                assert!(quad.abs() < 1e-12, "central quadratic form {quad}");
                // Skew-symmetry via polarization.
                let cross1: f64 = v.coeffs().iter().zip(wu.coeffs()).map(|(&a, &b)| a * b).sum();
                let cross2: f64 = u.coeffs().iter().zip(wv.coeffs()).map(|(&a, &b)| a * b).sum();
                assert!((cross1 + cross2).abs() < 1e-12);

                let mut ju = DgField::zeros(mesh, k).unwrap();
                ops.apply_jump(&u, &mut ju);
                let quad_j: f64 = u.coeffs().iter().zip(ju.coeffs()).map(|(&a, &b)| a * b).sum();
                let jumps: f64 = (0..m).map(|f| u.face_jump(f).powi(2)).sum();
                assert!((quad_j + jumps).abs() < 1e-12, "jump form {quad_j} vs {jumps}");
            }
        }
    }

    #[test]
    fn operators_are_translation_equivariant() {
        let mesh = Mesh1D::new(0.0, 2.0, 6).unwrap();
        let k = 2;
        let params = unit_params();
        let ops = assemble_operators(mesh, k, &params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_field(mesh, k, &mut rng);
        let n = k + 1;
        // Shift by one cell.
        let mut shifted = DgField::zeros(mesh, k).unwrap();
        for j in 0..6 {
            let src = u.cell(j).to_vec();
            shifted.cell_mut((j + 1) % 6).copy_from_slice(&src);
        }
        let mut out = DgField::zeros(mesh, k).unwrap();
        let mut out_shifted = DgField::zeros(mesh, k).unwrap();
        ops.apply_central(&u, &mut out);
        ops.apply_central(&shifted, &mut out_shifted);
        for j in 0..6 {
            for i in 0..n {
                assert_eq!(out.cell(j)[i], out_shifted.cell((j + 1) % 6)[i]);
            }
        }
    }

    #[test]
    fn mass_roundtrip_is_identity() {
        let mesh = Mesh1D::new(0.0, 2.0, 4).unwrap();
        let params = unit_params();
        let ops = assemble_operators(mesh, 1, &params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = random_field(mesh, 1, &mut rng);
        let mut v = u.clone();
        ops.mass_apply(&mut v);
        ops.mass_inverse_apply(&mut v);
        for (a, b) in u.coeffs().iter().zip(v.coeffs()) {
            assert_relative_eq!(a, b, max_relative = 1e-15);
        }
    }

    proptest! {
        #[test]
        fn flux_identity_average_jump(
            am in -5.0f64..5.0, ap in -5.0f64..5.0,
            bm in -5.0f64..5.0, bp in -5.0f64..5.0,
        ) {
            // {a}[b] + {b}[a] = [ab] for arbitrary traces.
            let avg_a = 0.5 * (ap + am);
            let avg_b = 0.5 * (bp + bm);
            let jump_a = ap - am;
            let jump_b = bp - bm;
            let lhs = avg_a * jump_b + avg_b * jump_a;
            let rhs = ap * bp - am * bm;
            prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + rhs.abs()));
        }

        #[test]
        fn operators_are_linear(seed in 0u64..1000) {
            let mesh = Mesh1D::new(0.0, 2.0, 3).unwrap();
            let params = MaterialParams::normalized(0.5).unwrap();
            let ops = assemble_operators(mesh, 1, &params).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let e1 = {
                let mut f = DgField::zeros(mesh, 1).unwrap();
                for c in f.coeffs_mut() { *c = rng.gen_range(-1.0..1.0); }
                f
            };
            let e2 = {
                let mut f = DgField::zeros(mesh, 1).unwrap();
                for c in f.coeffs_mut() { *c = rng.gen_range(-1.0..1.0); }
                f
            };
            let h0 = {
                let mut f = DgField::zeros(mesh, 1).unwrap();
                for c in f.coeffs_mut() { *c = rng.gen_range(-1.0..1.0); }
                f
            };
            let (a, b) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let mut combo = e1.clone();
            for c in combo.coeffs_mut() { *c *= a; }
            combo.add_scaled(b, &e2).unwrap();
            let mut out_combo = DgField::zeros(mesh, 1).unwrap();
            ops.d_e(&combo, &h0, &mut out_combo);
            let mut out1 = DgField::zeros(mesh, 1).unwrap();
            let mut out2 = DgField::zeros(mesh, 1).unwrap();
            let zero = DgField::zeros(mesh, 1).unwrap();
            ops.d_e(&e1, &zero, &mut out1);
            ops.d_e(&e2, &zero, &mut out2);
            let mut outh = DgField::zeros(mesh, 1).unwrap();
            ops.d_e(&zero, &h0, &mut outh);
            for j in 0..3 {
                for i in 0..2 {
                    let lin = a * out1.cell(j)[i] + b * out2.cell(j)[i] + outh.cell(j)[i];
                    prop_assert!((out_combo.cell(j)[i] - lin).abs() < 1e-11);
                }
            }
        }
    }
}
