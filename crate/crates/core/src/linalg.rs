//! Small dense and structured linear algebra sized for per-cell blocks.
//!
//! Everything here is deliberately modest: dense LU with partial pivoting for
//! systems up to a few hundred unknowns, a QL eigensolver for symmetric
//! tridiagonal matrices (the Golub-Welsch backend), and a solver for the
//! block cyclic-tridiagonal systems produced by the implicit time stepper on a
//! periodic mesh (block Thomas factorization plus a rank-`2m` Woodbury
//! correction for the wrap-around corners).

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

/// Linear-algebra failure modes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LinAlgError {
    /// A pivot fell below the singularity threshold during factorization.
    SingularMatrix,
    /// The QL iteration failed to deflate an eigenvalue within the sweep budget.
    EigenNoConvergence,
}

impl core::fmt::Display for LinAlgError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            LinAlgError::SingularMatrix => write!(f, "matrix is singular to working precision"),
            LinAlgError::EigenNoConvergence => {
                write!(f, "symmetric tridiagonal QL iteration did not converge")
            }
        }
    }
}

impl core::error::Error for LinAlgError {}

/// Dense LU factorization with partial pivoting (row-major storage).
#[derive(Debug, Clone)]
pub struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    piv: Vec<usize>,
}

impl DenseLu {
    /// Factors the `n x n` row-major matrix `a`.
    pub fn factor(mut a: Vec<f64>, n: usize) -> Result<Self, LinAlgError> {
        assert_eq!(a.len(), n * n, "matrix storage does not match dimension");
        let mut piv = vec![0usize; n];
        for col in 0..n {
            // Partial pivot: largest magnitude on or below the diagonal.
            let mut best = col;
            let mut best_val = a[col * n + col].abs();
            for row in col + 1..n {
                let v = a[row * n + col].abs();
                if v > best_val {
                    best = row;
                    best_val = v;
                }
            }
            if best_val < f64::MIN_POSITIVE.sqrt() {
                return Err(LinAlgError::SingularMatrix);
            }
            piv[col] = best;
            if best != col {
                for k in 0..n {
                    a.swap(col * n + k, best * n + k);
                }
            }
            let inv_pivot = 1.0 / a[col * n + col];
            for row in col + 1..n {
                let factor = a[row * n + col] * inv_pivot;
                a[row * n + col] = factor;
                for k in col + 1..n {
                    a[row * n + k] -= factor * a[col * n + k];
                }
            }
        }
        Ok(DenseLu { n, lu: a, piv })
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        // The factorization swapped whole rows (multipliers included), so the
        // entire permutation must hit the right-hand side before either
        // triangular sweep; interleaving swaps with the forward pass would
        // pair multipliers with entries of the wrong original rows.
        for col in 0..n {
            b.swap(col, self.piv[col]);
        }
        for col in 0..n {
            let bc = b[col];
            for row in col + 1..n {
                b[row] -= self.lu[row * n + col] * bc;
            }
        }
        for col in (0..n).rev() {
            b[col] /= self.lu[col * n + col];
            let bc = b[col];
            for row in 0..col {
                b[row] -= self.lu[row * n + col] * bc;
            }
        }
    }

    /// Solves `A X = B` for a row-major `n x k` right-hand side, in place.
    pub fn solve_many(&self, b: &mut [f64], k: usize) {
        assert_eq!(b.len(), self.n * k);
        let mut col = vec![0.0; self.n];
        for j in 0..k {
            for i in 0..self.n {
                col[i] = b[i * k + j];
            }
            self.solve(&mut col);
            for i in 0..self.n {
                b[i * k + j] = col[i];
            }
        }
    }

    /// Matrix dimension.
    pub fn dim(&self) -> usize {
        self.n
    }
}

/// Householder QR factorization of a dense row-major `rows x cols` matrix
/// with `rows >= cols`, for least-squares solves `min ||A x - b||_2`.
///
/// Unlike forming the normal equations, the factorization works at the
/// condition number of `A` itself rather than its square, which matters for
/// the badly scaled Jacobians of pole-fitting problems.
#[derive(Debug, Clone)]
pub struct DenseQr {
    rows: usize,
    cols: usize,
    /// `R` in the upper triangle; Householder vectors (unit leading entry
    /// implicit) below it.
    qr: Vec<f64>,
    /// Scalar of each reflector `I - beta v v^T`.
    beta: Vec<f64>,
}

impl DenseQr {
    /// Factors the `rows x cols` row-major matrix `a`.
    ///
    /// Fails only when a pivot column collapses to zero at machine scale;
    /// near-dependence merely conditions the solve, as usual for plain QR.
    pub fn factor(mut a: Vec<f64>, rows: usize, cols: usize) -> Result<Self, LinAlgError> {
        assert_eq!(a.len(), rows * cols, "matrix storage does not match dimensions");
        assert!(rows >= cols, "least-squares factorization needs rows >= cols");
        let mut beta = vec![0.0; cols];
        for k in 0..cols {
            // Reflector annihilating column k below the diagonal.
            let mut sigma = 0.0;
            for i in k + 1..rows {
                sigma += a[i * cols + k] * a[i * cols + k];
            }
            let akk = a[k * cols + k];
            let mu = (akk * akk + sigma).sqrt();
            if mu < f64::MIN_POSITIVE.sqrt() {
                return Err(LinAlgError::SingularMatrix);
            }
            if sigma == 0.0 {
                // Column already triangular; identity reflector.
                beta[k] = 0.0;
                continue;
            }
            // Leading entry `akk - mu`, written to dodge cancellation when
            // `akk > 0`; either way the reflected diagonal becomes `+mu`.
            let v0 = if akk <= 0.0 { akk - mu } else { -sigma / (akk + mu) };
            beta[k] = 2.0 * v0 * v0 / (sigma + v0 * v0);
            // Normalize so the stored vector has an implicit unit lead.
            let inv_v0 = 1.0 / v0;
            for i in k + 1..rows {
                a[i * cols + k] *= inv_v0;
            }
            a[k * cols + k] = mu;
            // Apply `I - beta v v^T` to the trailing columns.
            for j in k + 1..cols {
                let mut w = a[k * cols + j];
                for i in k + 1..rows {
                    w += a[i * cols + k] * a[i * cols + j];
                }
                w *= beta[k];
                a[k * cols + j] -= w;
                for i in k + 1..rows {
                    a[i * cols + j] -= w * a[i * cols + k];
                }
            }
        }
        Ok(DenseQr { rows, cols, qr: a, beta })
    }

    /// Least-squares solve: overwrites `b` (length `rows`) with `Q^T b` and
    /// back-substitutes, leaving the minimizer in `b[..cols]`.
    pub fn lsq(&self, b: &mut [f64]) {
        let (rows, cols) = (self.rows, self.cols);
        assert_eq!(b.len(), rows);
        for k in 0..cols {
            if self.beta[k] == 0.0 {
                continue;
            }
            let mut w = b[k];
            for i in k + 1..rows {
                w += self.qr[i * cols + k] * b[i];
            }
            w *= self.beta[k];
            b[k] -= w;
            for i in k + 1..rows {
                b[i] -= w * self.qr[i * cols + k];
            }
        }
        for k in (0..cols).rev() {
            let mut s = b[k];
            for j in k + 1..cols {
                s -= self.qr[k * cols + j] * b[j];
            }
            b[k] = s / self.qr[k * cols + k];
        }
    }
}

/// `c = a * b` for row-major `m x m` blocks, overwriting `c`.
pub fn mat_mul(m: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    for i in 0..m {
        for j in 0..m {
            let mut s = 0.0;
            for k in 0..m {
                s += a[i * m + k] * b[k * m + j];
            }
            c[i * m + j] = s;
        }
    }
}

/// `y += a * x` for a row-major `m x m` block.
pub fn mat_vec_acc(m: usize, a: &[f64], x: &[f64], y: &mut [f64]) {
    for i in 0..m {
        let mut s = 0.0;
        for k in 0..m {
            s += a[i * m + k] * x[k];
        }
        y[i] += s;
    }
}

/// Eigenvalues of a symmetric tridiagonal matrix together with the first row of
/// the orthonormal eigenvector matrix, via QL iteration with implicit shifts.
///
/// `d` holds the diagonal (overwritten with eigenvalues, unsorted on exit of
/// the sweep but sorted ascending before returning), `e` the subdiagonal in
/// `e[0..n-1]` (destroyed), and `z` a caller-supplied vector rotated along —
/// seed it with `(1, 0, .., 0)` to read off first eigenvector components, as
/// Golub-Welsch quadrature construction requires.
pub fn sym_tridiag_eigen(d: &mut [f64], e: &mut [f64], z: &mut [f64]) -> Result<(), LinAlgError> {
    let n = d.len();
    assert!(e.len() >= n.saturating_sub(1));
    assert_eq!(z.len(), n);
    if n == 0 {
        return Ok(());
    }
    // Sentinel slot keeps the rotation loop uniform.
    let mut e = {
        let mut tmp = vec![0.0; n];
        tmp[..n - 1].copy_from_slice(&e[..n - 1]);
        tmp
    };
    for l in 0..n {
        let mut iter = 0;
        loop {
            // Look for a negligible subdiagonal element to split the matrix.
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 64 {
                return Err(LinAlgError::EigenNoConvergence);
            }
            // Implicit shift from the 2x2 block at l.
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            // Shift by the eigenvalue of the leading 2x2 closest to d[l].
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                f = z[i + 1];
                z[i + 1] = s * z[i] + c * f;
                z[i] = c * z[i] - s * f;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    // Sort ascending, carrying z along.
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_unstable_by(|&a, &b| d[a].total_cmp(&d[b]));
    let d_old = d.to_vec();
    let z_old = z.to_vec();
    for (k, &i) in idx.iter().enumerate() {
        d[k] = d_old[i];
        z[k] = z_old[i];
    }
    Ok(())
}

/// Solver for block cyclic-tridiagonal systems with constant blocks:
/// diagonal block `A`, subdiagonal `B` (coupling to the left neighbour),
/// superdiagonal `C` (right neighbour), and periodic corners `B` at `(0, nb-1)`
/// and `C` at `(nb-1, 0)`.
///
/// The periodic corners are handled as a rank-`2m` Woodbury update of the open
/// block-tridiagonal matrix, which is factored once by block Thomas
/// elimination. Solves afterwards cost O(nb * m^2).
#[derive(Debug, Clone)]
pub struct BlockCyclicSolver {
    m: usize,
    nb: usize,
    /// LU factors of the Thomas pivot blocks `D_j`.
    pivots: Vec<DenseLu>,
    /// Forward-elimination multipliers `L_j = B * D_{j-1}^{-1}`, for `j = 1..nb-1`.
    mults: Vec<Vec<f64>>,
    /// Constant off-diagonal blocks.
    sup: Vec<f64>,
    /// `X = T0^{-1} U` where `U` carries the corner blocks (row-major, `n x 2m`).
    corr: Vec<f64>,
    /// LU of the Woodbury capacitance matrix `I + V^T X`.
    cap: DenseLu,
}

impl BlockCyclicSolver {
    /// Factors the system defined by the three `m x m` row-major blocks for a
    /// periodic chain of `nb >= 2` block rows.
    pub fn new(
        nb: usize,
        m: usize,
        a_diag: &[f64],
        b_sub: &[f64],
        c_sup: &[f64],
    ) -> Result<Self, LinAlgError> {
        assert!(nb >= 2, "periodic chain needs at least two block rows");
        assert_eq!(a_diag.len(), m * m);
        assert_eq!(b_sub.len(), m * m);
        assert_eq!(c_sup.len(), m * m);

        // Block Thomas factorization of the open tridiagonal part T0.
        let mut pivots: Vec<DenseLu> = Vec::with_capacity(nb);
        let mut mults: Vec<Vec<f64>> = Vec::with_capacity(nb - 1);
        let mut d_prev_inv = vec![0.0; m * m];
        let mut d_cur = a_diag.to_vec();
        pivots.push(DenseLu::factor(d_cur.clone(), m)?);
        for _ in 1..nb {
            // d_prev_inv = D_{j-1}^{-1} (columns solved against identity).
            for i in 0..m {
                for j in 0..m {
                    d_prev_inv[i * m + j] = if i == j { 1.0 } else { 0.0 };
                }
            }
            pivots.last().expect("pivot exists").solve_many(&mut d_prev_inv, m);
            let mut l_j = vec![0.0; m * m];
            mat_mul(m, b_sub, &d_prev_inv, &mut l_j);
            // D_j = A - L_j * C
            let mut lc = vec![0.0; m * m];
            mat_mul(m, &l_j, c_sup, &mut lc);
            for (dst, (&a, &x)) in d_cur.iter_mut().zip(a_diag.iter().zip(lc.iter())) {
                *dst = a - x;
            }
            pivots.push(DenseLu::factor(d_cur.clone(), m)?);
            mults.push(l_j);
        }

        let mut solver = BlockCyclicSolver {
            m,
            nb,
            pivots,
            mults,
            sup: c_sup.to_vec(),
            corr: Vec::new(),
            cap: DenseLu::factor(vec![1.0], 1)?, // placeholder, replaced below
        };

        // Woodbury data: U places B in block row 0 and C in block row nb-1.
        let n = nb * m;
        let w = 2 * m;
        let mut x = vec![0.0; n * w];
        let mut col = vec![0.0; n];
        for j in 0..w {
            col.iter_mut().for_each(|v| *v = 0.0);
            if j < m {
                // Column j of E_0 * B.
                for i in 0..m {
                    col[i] = b_sub[i * m + j];
                }
            } else {
                // Column j - m of E_{nb-1} * C.
                for i in 0..m {
                    col[(nb - 1) * m + i] = c_sup[i * m + (j - m)];
                }
            }
            solver.thomas_solve(&mut col);
            for i in 0..n {
                x[i * w + j] = col[i];
            }
        }
        // Capacitance K = I + V^T X with V^T = [E_{nb-1}^T ; E_0^T].
        let mut k = vec![0.0; w * w];
        for i in 0..m {
            for j in 0..w {
                k[i * w + j] = x[((nb - 1) * m + i) * w + j];
                k[(m + i) * w + j] = x[i * w + j];
            }
        }
        for i in 0..w {
            k[i * w + i] += 1.0;
        }
        solver.corr = x;
        solver.cap = DenseLu::factor(k, w)?;
        Ok(solver)
    }

    /// Thomas solve against the open tridiagonal part only.
    fn thomas_solve(&self, b: &mut [f64]) {
        let m = self.m;
        let nb = self.nb;
        let mut tmp = vec![0.0; m];
        // Forward elimination: b_j -= L_j b_{j-1}.
        for j in 1..nb {
            tmp.iter_mut().for_each(|v| *v = 0.0);
            let (prev, cur) = b.split_at_mut(j * m);
            mat_vec_acc(m, &self.mults[j - 1], &prev[(j - 1) * m..], &mut tmp);
            for i in 0..m {
                cur[i] -= tmp[i];
            }
        }
        // Back substitution: x_{nb-1} = D^{-1} y, then x_j = D_j^{-1}(y_j - C x_{j+1}).
        self.pivots[nb - 1].solve(&mut b[(nb - 1) * m..nb * m]);
        for j in (0..nb - 1).rev() {
            tmp.iter_mut().for_each(|v| *v = 0.0);
            let (cur, next) = b.split_at_mut((j + 1) * m);
            mat_vec_acc(m, &self.sup, &next[..m], &mut tmp);
            for i in 0..m {
                cur[j * m + i] -= tmp[i];
            }
            self.pivots[j].solve(&mut cur[j * m..(j + 1) * m]);
        }
    }

    /// Solves the periodic system in place.
    pub fn solve(&self, b: &mut [f64]) {
        let m = self.m;
        let nb = self.nb;
        let w = 2 * m;
        assert_eq!(b.len(), nb * m);
        self.thomas_solve(b);
        // Correction: x -= X (I + V^T X)^{-1} V^T t.
        let mut s = vec![0.0; w];
        for i in 0..m {
            s[i] = b[(nb - 1) * m + i];
            s[m + i] = b[i];
        }
        self.cap.solve(&mut s);
        for i in 0..nb * m {
            let mut acc = 0.0;
            for j in 0..w {
                acc += self.corr[i * w + j] * s[j];
            }
            b[i] -= acc;
        }
    }

    /// Block dimension `m`.
    pub fn block_dim(&self) -> usize {
        self.m
    }

    /// Number of block rows.
    pub fn n_blocks(&self) -> usize {
        self.nb
    }
}
