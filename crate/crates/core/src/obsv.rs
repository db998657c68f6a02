//! Observability predicates: numeric rank tests, eigenvalue (PBH) tests,
//! structural tests on the inference graph, and a Gramian reconstruction oracle.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::RngExt;
use thiserror::Error;

use crate::graph::{dilation_free_targets, GraphError, InferenceGraph};
use crate::linalg::{
    self, eigenvalues, expm, numeric_rank, numeric_rank_complex, pseudoinverse, DenseMatrix,
    LinalgError,
};

/// Largest `n` for which dense observability matrices are built.
pub const DEFAULT_OBSV_CAP: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObsvError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("n = {n} exceeds the dense observability cap {cap}; use the structural tests")]
    CapExceeded { n: usize, cap: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("row {row} of {matrix} must have exactly one nonzero entry")]
    NotUnitRow { matrix: &'static str, row: usize },
    #[error("target functional is not reconstructible from the measurements")]
    NotFunctionallyObservable,
}

pub type Result<T> = std::result::Result<T, ObsvError>;

/// `(A, B, C, F)` with measurement and target rows that each pick one state.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericSystem {
    pub a: DenseMatrix,
    pub b: DenseMatrix,
    pub c: DenseMatrix,
    pub f: DenseMatrix,
}

/// Rows `e_k` for each index, in order.
pub fn unit_rows(indices: &[usize], n: usize) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(indices.len(), n);
    for (row, &k) in indices.iter().enumerate() {
        m[(row, k)] = 1.0;
    }
    m
}

fn check_unit_rows(m: &DenseMatrix, matrix: &'static str) -> Result<()> {
    for row in 0..m.nrows() {
        if m.row(row).iter().filter(|&&v| v != 0.0).count() != 1 {
            return Err(ObsvError::NotUnitRow { matrix, row });
        }
    }
    Ok(())
}

impl NumericSystem {
    /// `b = None` gives a single all-ones input column.
    pub fn new(
        a: DenseMatrix,
        b: Option<DenseMatrix>,
        c: DenseMatrix,
        f: DenseMatrix,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(ObsvError::Dimension(format!("A is {}x{}", n, a.ncols())));
        }
        let b = b.unwrap_or_else(|| DenseMatrix::from_element(n, 1, 1.0));
        if b.nrows() != n || c.ncols() != n || f.ncols() != n {
            return Err(ObsvError::Dimension(format!(
                "A is {n}x{n}, B has {} rows, C has {} columns, F has {} columns",
                b.nrows(),
                c.ncols(),
                f.ncols()
            )));
        }
        for (m, what) in [(&a, "A"), (&b, "B"), (&c, "C"), (&f, "F")] {
            linalg::ensure_finite(m, what)?;
        }
        check_unit_rows(&c, "C")?;
        check_unit_rows(&f, "F")?;
        Ok(Self { a, b, c, f })
    }

    /// Random realization of a graph: every edge weight drawn from U[0.5, 1.5].
    pub fn realize<R: rand::Rng + ?Sized>(g: &InferenceGraph, rng: &mut R) -> Self {
        let n = g.n();
        let mut a = DenseMatrix::zeros(n, n);
        for (from, to) in g.edges() {
            a[(to, from)] = rng.random_range(0.5..1.5);
        }
        Self::new(a, None, unit_rows(g.sensors(), n), unit_rows(g.targets(), n))
            .expect("realization is consistent by construction")
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericOptions {
    pub cap: usize,
    /// Rank tolerance; `None` selects the automatic rule.
    pub tol: Option<f64>,
}

impl Default for NumericOptions {
    fn default() -> Self {
        Self {
            cap: DEFAULT_OBSV_CAP,
            tol: None,
        }
    }
}

fn check_cap(n: usize, cap: usize) -> Result<()> {
    if n > cap {
        Err(ObsvError::CapExceeded { n, cap })
    } else {
        Ok(())
    }
}

fn vstack(blocks: &[&DenseMatrix]) -> DenseMatrix {
    let cols = blocks.iter().map(|b| b.ncols()).max().unwrap_or(0);
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DenseMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.view_mut((at, 0), b.shape()).copy_from(*b);
        at += b.nrows();
    }
    out
}

/// `[C; CA; ...; CA^(n-1)]`.
pub fn observability_matrix(a: &DenseMatrix, c: &DenseMatrix, cap: usize) -> Result<DenseMatrix> {
    let n = a.nrows();
    check_cap(n, cap)?;
    let q = c.nrows();
    let mut o = DenseMatrix::zeros(n * q, n);
    let mut block = c.clone();
    for k in 0..n {
        o.view_mut((k * q, 0), (q, n)).copy_from(&block);
        block = &block * a;
    }
    Ok(o)
}

/// Orthonormal rows spanning the row space of the observability matrix.
///
/// Built by block Krylov iteration with reorthogonalization, which keeps the
/// basis well conditioned where the raw powers `CA^k` would not be.
pub fn observable_subspace(a: &DenseMatrix, c: &DenseMatrix) -> DenseMatrix {
    let n = a.nrows();
    let scale = a.norm().max(1.0);
    let drop_tol = 1e-10 * scale;
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut frontier: Vec<DVector<f64>> = Vec::new();

    let absorb = |v: DVector<f64>, basis: &mut Vec<DVector<f64>>, tol: f64| {
        let mut w = v;
        for _ in 0..2 {
            for b in basis.iter() {
                let p = b.dot(&w);
                w.axpy(-p, b, 1.0);
            }
        }
        let norm = w.norm();
        (norm > tol).then(|| {
            let unit = w / norm;
            basis.push(unit.clone());
            unit
        })
    };

    for row in c.row_iter() {
        if let Some(u) = absorb(row.transpose(), &mut basis, 1e-12) {
            frontier.push(u);
        }
    }
    while !frontier.is_empty() && basis.len() < n {
        let mut next = Vec::new();
        for v in &frontier {
            // row vector times A, kept as a column
            let w = a.tr_mul(v);
            if let Some(u) = absorb(w, &mut basis, drop_tol) {
                next.push(u);
            }
        }
        frontier = next;
    }
    let mut out = DenseMatrix::zeros(basis.len(), n);
    for (i, b) in basis.iter().enumerate() {
        out.set_row(i, &b.transpose());
    }
    out
}

/// Whether every row of `F` lies in the observable row space: `rank[O; F] = rank O`.
pub fn is_functionally_observable_numeric(sys: &NumericSystem, opts: NumericOptions) -> Result<bool> {
    check_cap(sys.n(), opts.cap)?;
    let v = observable_subspace(&sys.a, &sys.c);
    let stacked = vstack(&[&v, &sys.f]);
    Ok(numeric_rank(&stacked, opts.tol)? == numeric_rank(&v, opts.tol)?)
}

pub fn is_observable_numeric(sys: &NumericSystem, opts: NumericOptions) -> Result<bool> {
    check_cap(sys.n(), opts.cap)?;
    Ok(numeric_rank(&observable_subspace(&sys.a, &sys.c), opts.tol)? == sys.n())
}

/// Eigenvalues merged into clusters; a defective eigenvalue comes back from the
/// QR iteration as a small ring of nearby values whose mean is accurate.
pub fn distinct_eigenvalues(a: &DenseMatrix) -> Result<Vec<Complex64>> {
    let mut eigs = eigenvalues(a)?;
    eigs.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    let radius = 1e-4 * a.norm().max(1.0);
    let mut clusters: Vec<Vec<Complex64>> = Vec::new();
    for z in eigs {
        match clusters
            .iter_mut()
            .find(|c| c.iter().any(|w| (w - z).norm() <= radius))
        {
            Some(c) => c.push(z),
            None => clusters.push(vec![z]),
        }
    }
    Ok(clusters
        .into_iter()
        .map(|c| {
            let mean = c.iter().sum::<Complex64>() / c.len() as f64;
            // snap conjugate-symmetric clusters back onto the real axis
            if mean.im.abs() <= radius {
                Complex64::new(mean.re, 0.0)
            } else {
                mean
            }
        })
        .collect())
}

fn to_complex(m: &DenseMatrix) -> DMatrix<Complex64> {
    m.map(|v| Complex64::new(v, 0.0))
}

fn complex_vstack(blocks: &[DMatrix<Complex64>]) -> DMatrix<Complex64> {
    let cols = blocks.iter().map(|b| b.ncols()).max().unwrap_or(0);
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.view_mut((at, 0), b.shape()).copy_from(b);
        at += b.nrows();
    }
    out
}

/// Eigenvalue tests use a looser relative threshold than pure rank checks because
/// the evaluation point itself carries eigensolver error.
fn pbh_tolerance(m: &DMatrix<Complex64>, user: Option<f64>) -> f64 {
    user.unwrap_or_else(|| {
        let scale = m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(1.0);
        1e-9 * scale * m.nrows().max(m.ncols()) as f64
    })
}

/// `rank[A - λI; C; F] = rank[A - λI; C]` at every eigenvalue of `A`.
pub fn pbh_functional_check(sys: &NumericSystem, opts: NumericOptions) -> Result<bool> {
    let n = sys.n();
    check_cap(n, opts.cap)?;
    let a = to_complex(&sys.a);
    let c = to_complex(&sys.c);
    let f = to_complex(&sys.f);
    for lambda in distinct_eigenvalues(&sys.a)? {
        let shifted = &a - DMatrix::<Complex64>::identity(n, n) * lambda;
        let base = complex_vstack(&[shifted.clone(), c.clone()]);
        let full = complex_vstack(&[shifted, c.clone(), f.clone()]);
        let tol = pbh_tolerance(&full, opts.tol);
        if numeric_rank_complex(&full, Some(tol))? != numeric_rank_complex(&base, Some(tol))? {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenvalueScope {
    All,
    #[default]
    NonnegativeRealPart,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DarouachReport {
    pub cond4: bool,
    pub cond5: bool,
    pub failing_eigenvalues: Vec<Complex64>,
}

/// Existence conditions for a functional observer of order `rows(F0)`:
///
/// * `rank[C; CA; F0; F0 A] = rank[C; CA; F0]`
/// * `rank[λF0 - F0 A; CA; C] = rank[CA; C; F0]` for each eigenvalue in `scope`
pub fn check_darouach(
    a: &DenseMatrix,
    c: &DenseMatrix,
    f0: &DenseMatrix,
    opts: NumericOptions,
    scope: EigenvalueScope,
) -> Result<DarouachReport> {
    let n = a.nrows();
    check_cap(n, opts.cap)?;
    let ca = c * a;
    let f0a = f0 * a;
    let lhs4 = vstack(&[c, &ca, f0, &f0a]);
    let rhs = vstack(&[c, &ca, f0]);
    let tol4 = opts.tol.or_else(|| {
        Some(1e-9 * lhs4.norm().max(1.0) * lhs4.nrows().max(n) as f64)
    });
    let rank_rhs = numeric_rank(&rhs, tol4)?;
    let cond4 = numeric_rank(&lhs4, tol4)? == rank_rhs;

    let (f0c, f0ac) = (to_complex(f0), to_complex(&f0a));
    let (cac, cc) = (to_complex(&ca), to_complex(c));
    let rhs_c = to_complex(&rhs);
    let scale = a.norm().max(1.0);
    let mut failing = Vec::new();
    for lambda in distinct_eigenvalues(a)? {
        if scope == EigenvalueScope::NonnegativeRealPart && lambda.re < -1e-9 * scale {
            continue;
        }
        let pencil = &f0c * lambda - &f0ac;
        let lhs5 = complex_vstack(&[pencil, cac.clone(), cc.clone()]);
        let tol = pbh_tolerance(&lhs5, opts.tol);
        let rank_rhs5 = numeric_rank_complex(&rhs_c, Some(tol))?;
        if numeric_rank_complex(&lhs5, Some(tol))? != rank_rhs5 {
            failing.push(lambda);
        }
    }
    Ok(DarouachReport {
        cond4,
        cond5: failing.is_empty(),
        failing_eigenvalues: failing,
    })
}

/// Which targets fail which structural condition.
#[derive(Debug, Clone, PartialEq, Eq, Default, serde::Serialize)]
pub struct StructuralReport {
    /// Targets with no influence path to any sensor.
    pub unreachable_targets: Vec<usize>,
    /// Targets that belong to some minimal dilation set.
    pub dilated_targets: Vec<usize>,
}

impl StructuralReport {
    pub fn holds(&self) -> bool {
        self.unreachable_targets.is_empty() && self.dilated_targets.is_empty()
    }
}

fn structural_report_for(g: &InferenceGraph, targets: &[usize]) -> StructuralReport {
    // Nodes that reach a sensor: reverse search from all sensors at once.
    let mut reaches = vec![false; g.n()];
    let mut stack: Vec<usize> = g.sensors().to_vec();
    for &s in g.sensors() {
        reaches[s] = true;
    }
    while let Some(v) = stack.pop() {
        for &u in g.influencers(v) {
            if !reaches[u] {
                reaches[u] = true;
                stack.push(u);
            }
        }
    }
    // Nodes that cannot reach a sensor form an unobservable block whose equations
    // carry no information, so the dilation test runs on the reaching subgraph.
    let kept: Vec<usize> = (0..g.n()).filter(|&v| reaches[v]).collect();
    let mut local = vec![usize::MAX; g.n()];
    for (i, &v) in kept.iter().enumerate() {
        local[v] = i;
    }
    let sub = InferenceGraph::new(
        kept.len(),
        g.edges()
            .filter(|&(from, to)| reaches[from] && reaches[to])
            .map(|(from, to)| (local[from], local[to])),
    )
    .and_then(|sub| sub.with_sensors(g.sensors().iter().map(|&s| local[s]).collect()))
    .expect("subgraph indices are valid");
    let free: Vec<usize> = dilation_free_targets(&sub)
        .into_iter()
        .map(|i| kept[i])
        .collect();
    StructuralReport {
        unreachable_targets: targets.iter().copied().filter(|&t| !reaches[t]).collect(),
        dilated_targets: targets
            .iter()
            .copied()
            .filter(|&t| reaches[t] && free.binary_search(&t).is_err())
            .collect(),
    }
}

pub fn structural_report(g: &InferenceGraph) -> StructuralReport {
    structural_report_for(g, g.targets())
}

/// Every target reaches a sensor and no target lies in a minimal dilation set.
pub fn is_structurally_functionally_observable(g: &InferenceGraph) -> bool {
    structural_report(g).holds()
}

/// The same test with every node treated as a target.
pub fn is_structurally_observable(g: &InferenceGraph) -> bool {
    let all: Vec<usize> = (0..g.n()).collect();
    structural_report_for(g, &all).holds()
}

/// Reconstructs `F x(0)` from an output record `y(k dt)`, `k = 0..=m`, with `u = 0`.
///
/// Uses the finite-horizon Gramian `W = ∫ e^{Aᵀτ} CᵀC e^{Aτ} dτ` and a gain `K`
/// with `K W = F`; the estimate is `K ∫ e^{Aᵀτ} Cᵀ y(τ) dτ`.
pub fn gramian_target_reconstruction(
    sys: &NumericSystem,
    y_trace: &[DVector<f64>],
    dt: f64,
) -> Result<DVector<f64>> {
    let n = sys.n();
    let q = sys.c.nrows();
    if y_trace.len() < 2 || dt <= 0.0 {
        return Err(ObsvError::Dimension("need at least two samples and dt > 0".into()));
    }
    if let Some(bad) = y_trace.iter().find(|y| y.len() != q) {
        return Err(ObsvError::Dimension(format!(
            "output sample of length {} for {q} sensors",
            bad.len()
        )));
    }
    let m = y_trace.len() - 1;
    let step = expm(&(&sys.a * dt))?;
    let mut phi = DenseMatrix::identity(n, n);
    let mut gram = DenseMatrix::zeros(n, n);
    let mut moment = DVector::zeros(n);
    for (k, y) in y_trace.iter().enumerate() {
        let w = quadrature_weight(k, m) * dt;
        let c_phi = &sys.c * &phi;
        gram += c_phi.tr_mul(&c_phi) * w;
        moment += c_phi.tr_mul(y) * w;
        phi = &phi * &step;
    }
    let gain = &sys.f * pseudoinverse(&gram)?;
    let residual = (&gain * &gram - &sys.f).norm();
    if residual > 1e-6 * sys.f.norm().max(1.0) {
        return Err(ObsvError::NotFunctionallyObservable);
    }
    Ok(gain * moment)
}

/// Composite Simpson weights; an odd interval count closes with one trapezoid.
fn quadrature_weight(k: usize, m: usize) -> f64 {
    let simpson_end = if m % 2 == 0 { m } else { m - 1 };
    let mut w = 0.0;
    if simpson_end > 0 && k <= simpson_end {
        w += if k == 0 || k == simpson_end {
            1.0 / 3.0
        } else if k % 2 == 1 {
            4.0 / 3.0
        } else {
            2.0 / 3.0
        };
    }
    if simpson_end != m && (k == m - 1 || k == m) {
        w += 0.5;
    }
    w
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllabilityContrast {
    pub rank_oft: usize,
    pub r: usize,
    pub functional_obsv: bool,
}

/// `rank(O Fᵀ)` next to the functional observability verdict.
pub fn target_controllability_contrast(
    sys: &NumericSystem,
    opts: NumericOptions,
) -> Result<ControllabilityContrast> {
    let o = observability_matrix(&sys.a, &sys.c, opts.cap)?;
    Ok(ControllabilityContrast {
        rank_oft: numeric_rank(&(o * sys.f.transpose()), opts.tol)?,
        r: sys.f.nrows(),
        functional_obsv: is_functionally_observable_numeric(sys, opts)?,
    })
}
