//! Dense numeric kernel used by the observability tests and observer synthesis.
//!
//! Everything here is a pure function over `nalgebra` matrices. Rank decisions go
//! through [`rank_tolerance`] so that structural statements checked on random
//! realizations share one threshold rule.

use nalgebra::{ComplexField, DMatrix, DVector, Dyn, Schur, LU, SVD};
use num_complex::Complex64;
use thiserror::Error;

pub type DenseMatrix = DMatrix<f64>;

/// Safety factor applied over machine epsilon by the automatic rank tolerance.
pub const RANK_TOL_FACTOR: f64 = 64.0;

const SVD_MAX_ITER: usize = 100_000;
const SCHUR_MAX_ITER: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("numeric failure: {0}")]
    NumericFailure(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("no stabilizing Riccati solution: {0}")]
    NoStabilizingSolution(String),
    #[error("Riccati residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    Residual { residual: f64, tolerance: f64 },
}

pub type Result<T> = std::result::Result<T, LinalgError>;

pub fn ensure_finite(m: &DenseMatrix, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(LinalgError::NonFinite(what))
    }
}

/// `max(rows, cols) * sigma_max * eps * 64`.
pub fn rank_tolerance(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * sigma_max * f64::EPSILON * RANK_TOL_FACTOR
}

fn singular_values<T>(m: &DMatrix<T>) -> Result<DVector<T::RealField>>
where
    T: ComplexField<RealField = f64>,
{
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(DVector::zeros(0));
    }
    SVD::try_new(m.clone(), false, false, f64::EPSILON, SVD_MAX_ITER)
        .map(|svd| svd.singular_values)
        .ok_or_else(|| LinalgError::NumericFailure("SVD did not converge".into()))
}

fn count_above(sv: &DVector<f64>, rows: usize, cols: usize, tol: Option<f64>) -> usize {
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let tol = tol.unwrap_or_else(|| rank_tolerance(rows, cols, smax));
    sv.iter().filter(|&&s| s > tol).count()
}

/// Number of singular values strictly above `tol` (automatic rule when `None`).
pub fn numeric_rank(m: &DenseMatrix, tol: Option<f64>) -> Result<usize> {
    ensure_finite(m, "rank input")?;
    let sv = singular_values(m)?;
    Ok(count_above(&sv, m.nrows(), m.ncols(), tol))
}

/// Complex counterpart of [`numeric_rank`], used by the PBH-style eigenvalue tests.
pub fn numeric_rank_complex(m: &DMatrix<Complex64>, tol: Option<f64>) -> Result<usize> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(LinalgError::NonFinite("complex rank input"));
    }
    let sv = singular_values(m)?;
    Ok(count_above(&sv, m.nrows(), m.ncols(), tol))
}

/// Moore–Penrose inverse through the SVD, truncated with the automatic rank tolerance.
pub fn pseudoinverse(m: &DenseMatrix) -> Result<DenseMatrix> {
    ensure_finite(m, "pseudoinverse input")?;
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok(DenseMatrix::zeros(cols, rows));
    }
    let svd = SVD::try_new(m.clone(), true, true, f64::EPSILON, SVD_MAX_ITER)
        .ok_or_else(|| LinalgError::NumericFailure("SVD did not converge".into()))?;
    let smax = svd.singular_values.max();
    let tol = rank_tolerance(rows, cols, smax);
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let mut out = DenseMatrix::zeros(cols, rows);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > tol {
            out += (vt.row(k).transpose() / s) * u.column(k).transpose();
        }
    }
    Ok(out)
}

/// Orthonormal basis of `{v : M v = 0}`, one basis vector per column.
pub fn kernel_basis(m: &DenseMatrix) -> Result<DenseMatrix> {
    ensure_finite(m, "kernel input")?;
    let (rows, cols) = m.shape();
    if cols == 0 {
        return Ok(DenseMatrix::zeros(0, 0));
    }
    if rows == 0 {
        return Ok(DenseMatrix::identity(cols, cols));
    }
    // Zero-padding to at least `cols` rows makes the thin SVD return the full V.
    let padded = if rows < cols {
        let mut p = DenseMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = SVD::try_new(padded, false, true, f64::EPSILON, SVD_MAX_ITER)
        .ok_or_else(|| LinalgError::NumericFailure("SVD did not converge".into()))?;
    let sv = &svd.singular_values;
    let rank = count_above(sv, rows, cols, None);
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let mut basis = DenseMatrix::zeros(cols, cols - rank);
    // Singular values come back sorted in decreasing order.
    for (c, k) in (rank..cols).enumerate() {
        basis.set_column(c, &vt.row(k).transpose());
    }
    Ok(basis)
}

/// Orthonormal basis of the column space.
pub fn range_basis(m: &DenseMatrix, tol: Option<f64>) -> Result<DenseMatrix> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok(DenseMatrix::zeros(rows, 0));
    }
    let svd = SVD::try_new(m.clone(), true, false, f64::EPSILON, SVD_MAX_ITER)
        .ok_or_else(|| LinalgError::NumericFailure("SVD did not converge".into()))?;
    let rank = count_above(&svd.singular_values, rows, cols, tol);
    let u = svd.u.expect("u requested");
    Ok(u.columns(0, rank).into_owned())
}

/// All eigenvalues with multiplicity, in no particular order.
pub fn eigenvalues(m: &DenseMatrix) -> Result<Vec<Complex64>> {
    ensure_finite(m, "eigenvalue input")?;
    if m.nrows() != m.ncols() {
        return Err(LinalgError::Dimension(format!(
            "eigenvalues of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_ITER)
        .ok_or_else(|| LinalgError::NumericFailure("Schur iteration did not converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Largest real part of the spectrum (`-inf` for an empty matrix).
pub fn spectral_abscissa(m: &DenseMatrix) -> Result<f64> {
    Ok(eigenvalues(m)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

pub fn is_hurwitz(m: &DenseMatrix, margin: f64) -> Result<bool> {
    Ok(spectral_abscissa(m)? < -margin)
}

fn log_abs_det(lu: &LU<f64, Dyn, Dyn>) -> f64 {
    lu.u().diagonal().iter().map(|d| d.abs().ln()).sum()
}

/// Matrix sign function by the scaled Newton iteration.
///
/// Fails when an iterate becomes singular, which happens when the argument has
/// eigenvalues on (or numerically close to) the imaginary axis.
pub fn matrix_sign(m: &DenseMatrix) -> Result<DenseMatrix> {
    let n = m.nrows();
    let mut z = m.clone();
    let mut scaling = true;
    for _ in 0..200 {
        let lu = LU::new(z.clone());
        let ld = log_abs_det(&lu);
        let zinv = lu
            .try_inverse()
            .ok_or_else(|| LinalgError::NumericFailure("singular iterate in sign function".into()))?;
        let c = if scaling && ld.is_finite() {
            (-ld / n as f64).exp()
        } else {
            1.0
        };
        let next = (&z * c + zinv / c) * 0.5;
        ensure_finite(&next, "sign iterate")?;
        let delta = (&next - &z).norm();
        let size = next.norm();
        z = next;
        if delta <= 1e-13 * size {
            return Ok(z);
        }
        if delta <= 1e-2 * size {
            scaling = false;
        }
    }
    // Accept a stalled iterate if it squares to the identity.
    let check = (&z * &z - DenseMatrix::identity(n, n)).norm();
    if check <= 1e-8 * n as f64 {
        Ok(z)
    } else {
        Err(LinalgError::NumericFailure(
            "sign iteration did not converge".into(),
        ))
    }
}

/// Solves `A' X + X A + C = 0` for a Hurwitz `A`.
pub fn solve_lyapunov(a: &DenseMatrix, c: &DenseMatrix) -> Result<DenseMatrix> {
    let n = a.nrows();
    if a.ncols() != n || c.shape() != (n, n) {
        return Err(LinalgError::Dimension("Lyapunov operands".into()));
    }
    if n == 0 {
        return Ok(DenseMatrix::zeros(0, 0));
    }
    // sign([[A', C], [0, -A]]) = [[-I, 2X], [0, I]]
    let mut h = DenseMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&a.transpose());
    h.view_mut((0, n), (n, n)).copy_from(c);
    h.view_mut((n, n), (n, n)).copy_from(&(-a));
    let s = matrix_sign(&h)?;
    let x = s.view((0, n), (n, n)) * 0.5;
    Ok((&x + x.transpose()) * 0.5)
}

/// `X' P + P X - P Y R^-1 Y' P + Q`.
pub fn care_residual(
    x: &DenseMatrix,
    y: &DenseMatrix,
    q: &DenseMatrix,
    r: &DenseMatrix,
    p: &DenseMatrix,
) -> Result<DenseMatrix> {
    let rinv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| LinalgError::NumericFailure("R is singular".into()))?;
    let g = y * rinv * y.transpose();
    Ok(x.transpose() * p + p * x - p * g * p + q)
}

/// Stabilizing solution of `X' P + P X - P Y R^-1 Y' P + Q = 0`.
///
/// The stable invariant subspace of the Hamiltonian is extracted through the
/// matrix sign function; one Newton (Kleinman) step is taken when the residual
/// is above `1e-8 (1 + |P|_F)`.
pub fn solve_care(
    x: &DenseMatrix,
    y: &DenseMatrix,
    q: &DenseMatrix,
    r: &DenseMatrix,
) -> Result<DenseMatrix> {
    let n = x.nrows();
    let m = y.ncols();
    if x.ncols() != n || y.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(LinalgError::Dimension(format!(
            "CARE operands X {:?}, Y {:?}, Q {:?}, R {:?}",
            x.shape(),
            y.shape(),
            q.shape(),
            r.shape()
        )));
    }
    for (mat, what) in [(x, "X"), (y, "Y"), (q, "Q"), (r, "R")] {
        ensure_finite(mat, what)?;
    }
    if n == 0 {
        return Ok(DenseMatrix::zeros(0, 0));
    }
    let rinv = r
        .clone()
        .cholesky()
        .ok_or_else(|| LinalgError::NumericFailure("R is not positive definite".into()))?
        .inverse();
    let g = y * &rinv * y.transpose();

    let mut h = DenseMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(x);
    h.view_mut((0, n), (n, n)).copy_from(&(-&g));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-x.transpose()));

    let w = matrix_sign(&h).map_err(|e| {
        LinalgError::NoStabilizingSolution(format!(
            "Hamiltonian has eigenvalues on or near the imaginary axis ({e})"
        ))
    })?;
    // (W + I) [I; P] = 0
    let mut lhs = DenseMatrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n))
        .copy_from(&(w.view((n, n), (n, n)) + DenseMatrix::identity(n, n)));
    let mut rhs = DenseMatrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n))
        .copy_from(&(-(w.view((0, 0), (n, n)) + DenseMatrix::identity(n, n))));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-w.view((n, 0), (n, n))));
    let svd = SVD::try_new(lhs, true, true, f64::EPSILON, SVD_MAX_ITER)
        .ok_or_else(|| LinalgError::NumericFailure("SVD did not converge".into()))?;
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    // Heavily shifted problems legitimately give P with condition numbers near
    // 1e12, so only outright rank loss is rejected here; the residual and
    // closed-loop checks below decide the rest.
    if smin <= 1e-15 * smax.max(1.0) {
        return Err(LinalgError::NoStabilizingSolution(
            "stable invariant subspace is not a graph over the state coordinates".into(),
        ));
    }
    let mut p = svd
        .solve(&rhs, 0.0)
        .map_err(|e| LinalgError::NumericFailure(e.to_string()))?;
    p = (&p + p.transpose()) * 0.5;

    let tolerance = |p: &DenseMatrix| 1e-8 * (1.0 + p.norm());
    let mut res = x.transpose() * &p + &p * x - &p * &g * &p + q;
    if res.norm() > tolerance(&p) {
        let acl = x - &g * &p;
        let delta = solve_lyapunov(&acl, &res)?;
        p += delta;
        p = (&p + p.transpose()) * 0.5;
        res = x.transpose() * &p + &p * x - &p * &g * &p + q;
    }
    ensure_finite(&p, "Riccati solution")?;
    let residual = res.norm();
    let tol = tolerance(&p);
    if residual > tol {
        return Err(LinalgError::Residual {
            residual,
            tolerance: tol,
        });
    }
    let acl = x - &g * &p;
    if !is_hurwitz(&acl, 0.0)? {
        return Err(LinalgError::NoStabilizingSolution(
            "closed loop X - Y R^-1 Y' P is not Hurwitz".into(),
        ));
    }
    Ok(p)
}

/// Orthonormal basis of the controllable subspace of `(A, B)`, built by the
/// orthogonal staircase recursion.
pub fn controllable_basis(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    let n = a.nrows();
    let scale = a.norm().max(b.norm()).max(1.0);
    let tol = 1e-10 * scale;
    let mut basis = range_basis(b, Some(tol))?;
    let mut frontier = basis.clone();
    while basis.ncols() < n && frontier.ncols() > 0 {
        let image = a * &frontier;
        let projected = &image - &basis * (basis.transpose() * &image);
        let fresh = range_basis(&projected, Some(tol))?;
        if fresh.ncols() == 0 {
            break;
        }
        // Re-orthogonalize once to keep the accumulated basis orthonormal.
        let fresh = {
            let again = &fresh - &basis * (basis.transpose() * &fresh);
            range_basis(&again, Some(1e-12))?
        };
        let mut grown = DenseMatrix::zeros(n, basis.ncols() + fresh.ncols());
        grown.view_mut((0, 0), (n, basis.ncols())).copy_from(&basis);
        grown
            .view_mut((0, basis.ncols()), (n, fresh.ncols()))
            .copy_from(&fresh);
        basis = grown;
        frontier = fresh;
    }
    Ok(basis)
}

/// Completes an orthonormal column set to an orthonormal basis of R^n.
pub fn orthogonal_complement(basis: &DenseMatrix) -> Result<DenseMatrix> {
    let n = basis.nrows();
    if basis.ncols() == 0 {
        return Ok(DenseMatrix::identity(n, n));
    }
    kernel_basis(&basis.transpose())
}

/// Matrix exponential (Padé approximation with scaling and squaring).
pub fn expm(m: &DenseMatrix) -> Result<DenseMatrix> {
    ensure_finite(m, "expm input")?;
    if m.nrows() != m.ncols() {
        return Err(LinalgError::Dimension("expm of a non-square matrix".into()));
    }
    if m.nrows() == 0 {
        return Ok(m.clone());
    }
    let e = m.exp();
    ensure_finite(&e, "expm output")?;
    Ok(e)
}

/// Compressed-row sparse matrix for plant dynamics and structural patterns
/// that are too large to hold densely.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Duplicate entries are summed; explicit zeros are kept as structural entries.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in sorted {
            assert!(i < rows && j < cols, "triplet ({i},{j}) out of range");
            if last == Some((i, j)) {
                *values.last_mut().expect("previous entry") += v;
                continue;
            }
            last = Some((i, j));
            row_ptr[i + 1] += 1;
            col_idx.push(j);
            values.push(v);
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn from_dense(m: &DenseMatrix) -> Self {
        let mut t = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)] != 0.0 {
                    t.push((i, j, m[(i, j)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), &t)
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[span.clone()].binary_search(&j) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.rows)
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v)))
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<_> = self.triplets().into_iter().map(|(i, j, v)| (j, i, v)).collect();
        Self::from_triplets(self.cols, self.rows, &t)
    }

    /// `out = self * x`
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        for (i, o) in out.iter_mut().enumerate().take(self.rows) {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *o = acc;
        }
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.rows);
        self.mul_vec_into(x.as_slice(), out.as_mut_slice());
        out
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.rows, self.cols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_pcg::Pcg64;

    fn random_matrix(rows: usize, cols: usize, rng: &mut Pcg64) -> DenseMatrix {
        DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    /// Exact rank over the rationals for small integer matrices (fraction-free elimination).
    fn exact_rank(m: &[Vec<i64>]) -> usize {
        let mut a: Vec<Vec<i128>> = m
            .iter()
            .map(|r| r.iter().map(|&v| v as i128).collect())
            .collect();
        let rows = a.len();
        let cols = if rows == 0 { 0 } else { a[0].len() };
        let mut rank = 0;
        for c in 0..cols {
            let Some(p) = (rank..rows).find(|&r| a[r][c] != 0) else {
                continue;
            };
            a.swap(rank, p);
            for r in 0..rows {
                if r != rank && a[r][c] != 0 {
                    let (f, g) = (a[r][c], a[rank][c]);
                    for k in 0..cols {
                        a[r][k] = a[r][k] * g - a[rank][k] * f;
                    }
                    let gcd = a[r].iter().fold(0i128, |acc, &v| gcd(acc, v.abs()));
                    if gcd > 1 {
                        a[r].iter_mut().for_each(|v| *v /= gcd);
                    }
                }
            }
            rank += 1;
        }
        rank
    }

    fn gcd(a: i128, b: i128) -> i128 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }

    #[test]
    fn rank_of_identity() {
        assert_eq!(numeric_rank(&DenseMatrix::identity(3, 3), None).unwrap(), 3);
    }

    #[test]
    fn rank_with_duplicated_row_matches_exact_rank() {
        let mut rng = Pcg64::seed_from_u64(11);
        for _ in 0..20 {
            let mut rows: Vec<Vec<i64>> = (0..8)
                .map(|_| (0..8).map(|_| rng.random_range(-9..=9)).collect())
                .collect();
            let src = rng.random_range(0..8);
            let dst = (src + 1 + rng.random_range(0..7)) % 8;
            rows[dst] = rows[src].clone();
            let m = DenseMatrix::from_fn(8, 8, |i, j| rows[i][j] as f64);
            let expected = exact_rank(&rows);
            assert_eq!(numeric_rank(&m, None).unwrap(), expected);
            assert!(expected <= 7);
        }
    }

    #[test]
    fn rank_is_transpose_invariant() {
        let mut rng = Pcg64::seed_from_u64(5);
        for _ in 0..30 {
            let a = random_matrix(6, 3, &mut rng);
            let b = random_matrix(3, 7, &mut rng);
            let m = &a * &b;
            assert_eq!(
                numeric_rank(&m, None).unwrap(),
                numeric_rank(&m.transpose(), None).unwrap()
            );
        }
    }

    #[test]
    fn pseudoinverse_examples() {
        let m = DenseMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let p = pseudoinverse(&m).unwrap();
        let expected = DenseMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.25]);
        assert!((p - expected).norm() < 1e-14);

        let row = DenseMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
        let p = pseudoinverse(&row).unwrap();
        assert_eq!(p.shape(), (3, 1));
        assert!((p - row.transpose()).norm() < 1e-14);
    }

    #[test]
    fn pseudoinverse_penrose_identities() {
        let mut rng = Pcg64::seed_from_u64(7);
        for (r, c) in [(5, 3), (3, 5), (4, 4)] {
            let m = random_matrix(r, c, &mut rng);
            let p = pseudoinverse(&m).unwrap();
            let scale = m.norm() * p.norm();
            assert!((&m * &p * &m - &m).norm() <= 1e-8 * scale);
            assert!((&p * &m * &p - &p).norm() <= 1e-8 * scale);
            let mp = &m * &p;
            let pm = &p * &m;
            assert!((&mp - mp.transpose()).norm() <= 1e-8 * scale);
            assert!((&pm - pm.transpose()).norm() <= 1e-8 * scale);
            if r >= c {
                assert!((pm - DenseMatrix::identity(c, c)).norm() <= 1e-8);
            }
        }
    }

    #[test]
    fn kernel_examples() {
        let c = DenseMatrix::from_row_slice(1, 4, &[0.0, 0.0, 0.0, 1.0]);
        let k = kernel_basis(&c).unwrap();
        assert_eq!(k.shape(), (4, 3));
        assert!((&c * &k).norm() < 1e-14);
        assert!((k.transpose() * &k - DenseMatrix::identity(3, 3)).norm() < 1e-12);

        let full = DenseMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(kernel_basis(&full).unwrap().ncols(), 0);

        let mut rng = Pcg64::seed_from_u64(3);
        let m = random_matrix(3, 6, &mut rng);
        let k = kernel_basis(&m).unwrap();
        assert_eq!(k.shape(), (6, 3));
        assert!((&m * &k).norm() <= 1e-10);
        assert!((k.transpose() * &k - DenseMatrix::identity(3, 3)).norm() <= 1e-10);
    }

    #[test]
    fn eigenvalue_examples() {
        let d = DenseMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0]));
        let mut ev: Vec<f64> = eigenvalues(&d).unwrap().iter().map(|z| z.re).collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((ev[0] - 1.0).abs() < 1e-12 && (ev[2] - 3.0).abs() < 1e-12);

        let rot = DenseMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let ev = eigenvalues(&rot).unwrap();
        assert!(ev.iter().all(|z| z.re.abs() < 1e-12 && (z.im.abs() - 1.0).abs() < 1e-12));

        let mut g4 = DenseMatrix::zeros(4, 4);
        g4[(2, 0)] = 1.0;
        g4[(2, 1)] = 1.0;
        g4[(3, 2)] = 1.0;
        // Nilpotent: Jordan blocks perturb the zero eigenvalue by O(sqrt(eps)).
        let ev = eigenvalues(&g4).unwrap();
        assert!(ev.iter().all(|z| z.norm() < 1e-6), "{ev:?}");
    }

    #[test]
    fn eigenvalues_are_similarity_invariant() {
        let mut rng = Pcg64::seed_from_u64(19);
        for n in [3usize, 6, 10] {
            let m = random_matrix(n, n, &mut rng);
            let s = random_matrix(n, n, &mut rng) + DenseMatrix::identity(n, n) * 3.0;
            let sinv = s.clone().try_inverse().unwrap();
            let a = eigenvalues(&m).unwrap();
            let b = eigenvalues(&(&s * &m * sinv)).unwrap();
            for z in &a {
                let closest = b.iter().map(|w| (w - z).norm()).fold(f64::MAX, f64::min);
                assert!(closest < 1e-6, "eigenvalue {z} not matched");
            }
        }
    }

    #[test]
    fn hurwitz_examples() {
        assert!(is_hurwitz(&(-DenseMatrix::identity(3, 3)), 0.0).unwrap());
        let nil = DenseMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(!is_hurwitz(&nil, 0.0).unwrap());
    }

    #[test]
    fn scalar_care() {
        let one = DenseMatrix::from_element(1, 1, 1.0);
        let p = solve_care(&DenseMatrix::from_element(1, 1, -1.0), &one, &one, &one).unwrap();
        assert!((p[(0, 0)] - (2f64.sqrt() - 1.0)).abs() < 1e-12);
        let p = solve_care(&DenseMatrix::zeros(1, 1), &one, &one, &one).unwrap();
        assert!((p[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn care_on_stable_random_systems() {
        let mut rng = Pcg64::seed_from_u64(23);
        for _ in 0..10 {
            let x = random_matrix(4, 4, &mut rng) - DenseMatrix::identity(4, 4) * 3.0;
            let i = DenseMatrix::identity(4, 4);
            let p = solve_care(&x, &i, &i, &i).unwrap();
            let res = care_residual(&x, &i, &i, &i, &p).unwrap().norm();
            assert!(res <= 1e-8 * (1.0 + p.norm()));
        }
    }

    #[test]
    fn care_without_stabilizing_solution_is_an_error() {
        // Unstable mode not reachable from the input.
        let x = DenseMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let y = DenseMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let i2 = DenseMatrix::identity(2, 2);
        let r = DenseMatrix::identity(1, 1);
        assert!(solve_care(&x, &y, &i2, &r).is_err());
    }

    #[test]
    fn lyapunov_solution() {
        let mut rng = Pcg64::seed_from_u64(29);
        let a = random_matrix(5, 5, &mut rng) - DenseMatrix::identity(5, 5) * 4.0;
        let c = DenseMatrix::identity(5, 5);
        let x = solve_lyapunov(&a, &c).unwrap();
        assert!((a.transpose() * &x + &x * &a + c).norm() < 1e-9);
    }

    #[test]
    fn controllable_subspace_of_partially_actuated_pair() {
        let a = DenseMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 3.0]);
        let b = DenseMatrix::from_row_slice(3, 1, &[1.0, 0.0, 0.0]);
        let v = controllable_basis(&a, &b).unwrap();
        assert_eq!(v.ncols(), 2);
        // Third coordinate is unreachable.
        assert!(v.row(2).norm() < 1e-12);
    }

    #[test]
    fn sparse_matches_dense() {
        let t = [(0, 1, 2.0), (1, 0, -1.0), (1, 0, 0.5), (2, 2, 3.0)];
        let s = SparseMatrix::from_triplets(3, 3, &t);
        assert_eq!(s.nnz(), 3);
        let d = s.to_dense();
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!((s.mul_vec(&x) - &d * &x).norm() < 1e-15);
        assert_eq!(s.get(1, 0), -0.5);
        assert_eq!(s.transpose().to_dense(), d.transpose());
    }
}
