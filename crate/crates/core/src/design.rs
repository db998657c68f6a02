//! Minimum-order functional observers: the structural choice of `F0` and the
//! numeric synthesis of `(N, J, H, D, E)`, plus the reduced-order Luenberger
//! observer used as a baseline.
//!
//! Observer form: `ẇ = N w + J y + H u`, `ẑ = D w + E y`.

use std::collections::HashSet;

use nalgebra::DVector;
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{BipartiteGraph, GraphError, GrowingMatching, InferenceGraph};
use crate::linalg::{
    controllable_basis, pseudoinverse, solve_care, spectral_abscissa, DenseMatrix, LinalgError,
    SparseMatrix,
};
use crate::obsv::{
    self, check_darouach, structural_report, EigenvalueScope, NumericOptions, NumericSystem,
    ObsvError, StructuralReport, DEFAULT_OBSV_CAP,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Obsv(#[from] ObsvError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(
        "not structurally functionally observable: unreachable targets {:?}, dilated targets {:?}",
        .0.unreachable_targets,
        .0.dilated_targets
    )]
    NotStructurallyObservable(StructuralReport),
    #[error("invalid F0: {0}")]
    InvalidF0(String),
    #[error("existence conditions fail: cond4 = {cond4}, failing eigenvalues {failing:?}")]
    Darouach { cond4: bool, failing: Vec<(f64, f64)> },
    #[error("observer equations are inconsistent (relative residual {0:.3e})")]
    Inconsistent(f64),
    #[error("observer matrix N is not Hurwitz (spectral abscissa {0})")]
    NotHurwitz(f64),
    #[error("the measured pair (A, C) is not observable")]
    Unobservable,
}

pub type Result<T> = std::result::Result<T, DesignError>;

/// How Algorithm-style augmentation picks the next row when several qualify.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "seed")]
pub enum CandidateRule {
    #[default]
    LowestIndex,
    Seeded(u64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct F0Pattern {
    /// Targets first, in order, then the added nodes in the order they were added.
    pub nodes: Vec<usize>,
    /// Targets without a self-link, for which minimality is not guaranteed.
    pub targets_without_self_link: Vec<usize>,
}

impl F0Pattern {
    pub fn r0(&self) -> usize {
        self.nodes.len()
    }
}

pub fn minimal_f0(g: &InferenceGraph) -> Result<F0Pattern> {
    minimal_f0_with(g, CandidateRule::LowestIndex)
}

/// Grows `F0` from `F` until every influencer of an `F0` node lies in the generic
/// row space of `[C; CA; F0]`.
pub fn minimal_f0_with(g: &InferenceGraph, rule: CandidateRule) -> Result<F0Pattern> {
    let report = structural_report(g);
    if !report.holds() {
        return Err(DesignError::NotStructurallyObservable(report));
    }
    let n = g.n();
    let mut rows: Vec<Vec<usize>> = g.sensors().iter().map(|&s| vec![s]).collect();
    rows.extend(g.sensors().iter().map(|&s| g.influencers(s).to_vec()));
    rows.extend(g.targets().iter().map(|&t| vec![t]));
    let mut matching = GrowingMatching::new(&BipartiteGraph::from_rows(n, rows)?);

    let mut nodes = g.targets().to_vec();
    let mut in_m2 = vec![false; n];
    let mut m2: Vec<usize> = Vec::new();
    let note_influencers = |v: usize, in_m2: &mut Vec<bool>, m2: &mut Vec<usize>| {
        for &k in g.influencers(v) {
            if !std::mem::replace(&mut in_m2[k], true) {
                m2.push(k);
            }
        }
    };
    for &t in g.targets() {
        note_influencers(t, &mut in_m2, &mut m2);
    }
    let mut rng = match rule {
        CandidateRule::Seeded(seed) => Some(Pcg64::seed_from_u64(seed)),
        CandidateRule::LowestIndex => None,
    };
    loop {
        let covered = matching.essential_columns();
        let next = match rng.as_mut() {
            None => m2.iter().copied().filter(|&k| !covered[k]).min(),
            Some(rng) => {
                let mut open: Vec<usize> = m2.iter().copied().filter(|&k| !covered[k]).collect();
                open.sort_unstable();
                open.choose(rng).copied()
            }
        };
        let Some(k) = next else { break };
        matching.push_row(vec![k])?;
        nodes.push(k);
        note_influencers(k, &mut in_m2, &mut m2);
    }
    Ok(F0Pattern {
        nodes,
        targets_without_self_link: g
            .targets()
            .iter()
            .copied()
            .filter(|&t| !g.has_self_link(t))
            .collect(),
    })
}

/// LQR weights and the pole shift: the closed loop is pushed left of `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoleParams {
    pub alpha: f64,
    pub q_scale: f64,
    pub r_scale: f64,
}

impl Default for PoleParams {
    fn default() -> Self {
        Self {
            alpha: -100.0,
            q_scale: 1e-3,
            r_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolePlacement {
    /// `G = (R⁻¹ Yᵀ P)ᵀ`; the closed loop is `X - Y Gᵀ`.
    pub gain: DenseMatrix,
    pub closed_loop_abscissa: f64,
    /// Dimension of the part of `(X - αI, Y)` that feedback cannot move.
    pub uncontrollable_dim: usize,
    /// Shift actually used; closer to zero than the requested one when the
    /// requested shift made the Riccati equation numerically unsolvable.
    pub alpha_used: f64,
}

/// Halvings of the shift tried before giving up on a weakly controllable pair.
pub const MAX_SHIFT_HALVINGS: usize = 16;

/// State-feedback gain for `(X, Y)` from the Riccati equation of the shifted pair
/// `(X - αI, Y)` with `Q = q_scale I`, `R = r_scale I`.
///
/// Only the controllable part of the shifted pair enters the Riccati equation;
/// modes outside it keep their position and are counted in `uncontrollable_dim`.
/// Moving a mode that is reached only through a long input chain by `|α|` needs
/// gains that grow like `|α|` to the chain length, so when the equation cannot
/// be solved the shift is halved (down to zero) and the shift used is reported.
pub fn place_poles_lqr(
    x: &DenseMatrix,
    y: &DenseMatrix,
    params: PoleParams,
) -> Result<PolePlacement> {
    let n = x.nrows();
    if x.ncols() != n || y.nrows() != n {
        return Err(LinalgError::Dimension(format!(
            "pole placement for X {:?}, Y {:?}",
            x.shape(),
            y.shape()
        ))
        .into());
    }
    let mut alpha = params.alpha;
    let mut attempt = 0;
    loop {
        match lqr_with_shift(x, y, params, alpha) {
            Err(DesignError::Linalg(
                LinalgError::NoStabilizingSolution(_)
                | LinalgError::Residual { .. }
                | LinalgError::NumericFailure(_),
            )) if alpha != 0.0 => {
                attempt += 1;
                alpha = if attempt > MAX_SHIFT_HALVINGS { 0.0 } else { alpha / 2.0 };
            }
            other => return other,
        }
    }
}

fn lqr_with_shift(x: &DenseMatrix, y: &DenseMatrix, params: PoleParams, alpha: f64) -> Result<PolePlacement> {
    let n = x.nrows();
    let m = y.ncols();
    let shifted = x - DenseMatrix::identity(n, n) * alpha;
    let basis = controllable_basis(&shifted, y)?;
    let k = basis.ncols();
    let gain = if k == 0 {
        DenseMatrix::zeros(n, m)
    } else {
        let xc = basis.transpose() * &shifted * &basis;
        let yc = basis.transpose() * y;
        let p = solve_care(
            &xc,
            &yc,
            &(DenseMatrix::identity(k, k) * params.q_scale),
            &(DenseMatrix::identity(m, m) * params.r_scale),
        )?;
        // K = R⁻¹ Ycᵀ Pc Vcᵀ
        let feedback = yc.transpose() * p * basis.transpose() / params.r_scale;
        feedback.transpose()
    };
    let closed = x - y * gain.transpose();
    Ok(PolePlacement {
        closed_loop_abscissa: spectral_abscissa(&closed)?,
        gain,
        uncontrollable_dim: n - k,
        alpha_used: alpha,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObserverKind {
    Functional,
    Luenberger,
}

/// A linear plant `ẋ = A x + B u`, `y = C x`, `z = F x` with one state per
/// measurement and per target.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPlant {
    pub a: SparseMatrix,
    pub b: DenseMatrix,
    pub sensors: Vec<usize>,
    /// `y_i = sensor_gains[i] * x[sensors[i]]`.
    pub sensor_gains: Vec<f64>,
    pub targets: Vec<usize>,
    pub target_gains: Vec<f64>,
}

fn unit_row_entries(m: &DenseMatrix) -> Vec<(usize, f64)> {
    m.row_iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .find(|(_, v)| **v != 0.0)
                .map(|(j, v)| (j, *v))
                .expect("unit rows are validated by NumericSystem")
        })
        .collect()
}

impl LinearPlant {
    pub fn new(a: SparseMatrix, b: DenseMatrix, sensors: Vec<usize>, targets: Vec<usize>) -> Self {
        let (q, r) = (sensors.len(), targets.len());
        Self {
            a,
            b,
            sensors,
            sensor_gains: vec![1.0; q],
            targets,
            target_gains: vec![1.0; r],
        }
    }

    pub fn from_numeric(sys: &NumericSystem) -> Self {
        let (sensors, sensor_gains) = unit_row_entries(&sys.c).into_iter().unzip();
        let (targets, target_gains) = unit_row_entries(&sys.f).into_iter().unzip();
        Self {
            a: SparseMatrix::from_dense(&sys.a),
            b: sys.b.clone(),
            sensors,
            sensor_gains,
            targets,
            target_gains,
        }
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn measure(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.sensors.len(),
            self.sensors.iter().zip(&self.sensor_gains).map(|(&s, &c)| c * x[s]),
        )
    }

    pub fn target_values(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.targets.len(),
            self.targets.iter().zip(&self.target_gains).map(|(&t, &f)| f * x[t]),
        )
    }

    pub fn c_dense(&self) -> DenseMatrix {
        let mut c = DenseMatrix::zeros(self.sensors.len(), self.n());
        for (i, (&s, &g)) in self.sensors.iter().zip(&self.sensor_gains).enumerate() {
            c[(i, s)] = g;
        }
        c
    }

    pub fn inference_graph(&self) -> InferenceGraph {
        InferenceGraph::from_sparse(&self.a)
            .with_sensors(self.sensors.clone())
            .and_then(|g| g.with_targets(self.targets.clone()))
            .expect("plant indices are validated")
    }
}

/// The designed observer together with what is needed to run and check it.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverRealization {
    pub kind: ObserverKind,
    pub alpha: f64,
    pub f0_nodes: Vec<usize>,
    pub n_mat: DenseMatrix,
    pub j: DenseMatrix,
    pub h: DenseMatrix,
    pub d: DenseMatrix,
    pub e: DenseMatrix,
    /// `T` with `w → T x`; rows are in the original state coordinates.
    pub transform: DenseMatrix,
    /// Maps `[y; ẑ]` to the target estimate.
    pub output_map: DenseMatrix,
    pub uncontrollable_dim: usize,
    /// Pole shift reached by the gain design (see [`PolePlacement::alpha_used`]).
    pub alpha_used: f64,
    pub spectral_abscissa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    /// Row-major entries.
    pub data: Vec<f64>,
}

impl From<&DenseMatrix> for MatrixJson {
    fn from(m: &DenseMatrix) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.transpose().iter().copied().collect(),
        }
    }
}

impl MatrixJson {
    pub fn to_dense(&self) -> std::result::Result<DenseMatrix, String> {
        if self.data.len() != self.rows * self.cols {
            return Err(format!(
                "{}x{} matrix with {} entries",
                self.rows,
                self.cols,
                self.data.len()
            ));
        }
        Ok(DenseMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

/// Serialized observer document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserverJson {
    pub kind: ObserverKind,
    pub r0: usize,
    pub alpha: f64,
    #[serde(rename = "F0_nodes")]
    pub f0_nodes: Vec<usize>,
    #[serde(rename = "N")]
    pub n: MatrixJson,
    #[serde(rename = "J")]
    pub j: MatrixJson,
    #[serde(rename = "H")]
    pub h: MatrixJson,
    #[serde(rename = "D")]
    pub d: MatrixJson,
    #[serde(rename = "E")]
    pub e: MatrixJson,
}

impl ObserverRealization {
    pub fn r0(&self) -> usize {
        self.n_mat.nrows()
    }

    pub fn to_json(&self) -> ObserverJson {
        ObserverJson {
            kind: self.kind,
            r0: self.r0(),
            alpha: self.alpha,
            f0_nodes: self.f0_nodes.clone(),
            n: (&self.n_mat).into(),
            j: (&self.j).into(),
            h: (&self.h).into(),
            d: (&self.d).into(),
            e: (&self.e).into(),
        }
    }

    /// `ẑ = D w + E y`.
    pub fn functional_estimate(&self, w: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        &self.d * w + &self.e * y
    }

    /// Target estimate from the observer state and the measurements.
    pub fn target_estimate(&self, w: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let zhat = self.functional_estimate(w, y);
        let q = y.len();
        self.output_map.columns(0, q) * y + self.output_map.columns(q, zhat.len()) * zhat
    }

    /// Observer state that makes the estimation error zero for the plant state `x`.
    pub fn consistent_state(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.transform * x
    }
}

/// Dense copy of `A[rows, cols]`.
pub(crate) fn dense_block(a: &SparseMatrix, rows: &[usize], cols: &[usize]) -> DenseMatrix {
    let mut pos = vec![usize::MAX; a.ncols()];
    for (j, &c) in cols.iter().enumerate() {
        pos[c] = j;
    }
    let mut out = DenseMatrix::zeros(rows.len(), cols.len());
    for (i, &r) in rows.iter().enumerate() {
        for (c, v) in a.row(r) {
            if pos[c] != usize::MAX {
                out[(i, pos[c])] = v;
            }
        }
    }
    out
}

fn dense_rows(b: &DenseMatrix, rows: &[usize]) -> DenseMatrix {
    DenseMatrix::from_fn(rows.len(), b.ncols(), |i, j| b[(rows[i], j)])
}

/// Inputs of the functional-observer construction, all in measured coordinates
/// (`y` replaced by the measured states themselves).
pub(crate) struct CoreBlocks {
    /// `Ω`, `q × m`.
    pub omega: DenseMatrix,
    /// `Φ`, `r0 × m`.
    pub phi: DenseMatrix,
    /// `A12 F2⁺`, `q × r0`.
    pub a12_f2p: DenseMatrix,
    /// `F2 A22 F2⁺`, `r0 × r0`.
    pub f2_a22_f2p: DenseMatrix,
}

pub(crate) struct CoreSolution {
    pub n_mat: DenseMatrix,
    pub t1: DenseMatrix,
    pub placement: PolePlacement,
}

/// Solves `T1 Ω = Φ` in the general form `T1 = ΦΩ⁺ + Z(I - ΩΩ⁺)` and picks `Z`
/// so that `N = N1 - Z N2` is stable.
pub(crate) fn functional_core(blocks: &CoreBlocks, params: PoleParams) -> Result<CoreSolution> {
    let q = blocks.omega.nrows();
    let omega_pinv = pseudoinverse(&blocks.omega)?;
    let phi_op = &blocks.phi * &omega_pinv;
    let consistency = (&phi_op * &blocks.omega - &blocks.phi).norm();
    let scale = 1.0 + blocks.phi.norm();
    if consistency > 1e-7 * scale {
        return Err(DesignError::Darouach {
            cond4: false,
            failing: Vec::new(),
        });
    }
    let projector = &blocks.omega * &omega_pinv;
    let complement = DenseMatrix::identity(q, q) - &projector;
    let n1 = &phi_op * &blocks.a12_f2p + &blocks.f2_a22_f2p;
    let n2 = -(&complement * &blocks.a12_f2p);
    let placement = place_poles_lqr(&n1.transpose(), &n2.transpose(), params)?;
    let z = &placement.gain;
    let n_mat = &n1 - z * &n2;
    let t1 = phi_op + z * complement;
    Ok(CoreSolution {
        n_mat,
        t1,
        placement,
    })
}

fn validate_indices(plant: &LinearPlant, f0_nodes: &[usize]) -> Result<()> {
    let n = plant.n();
    let bad = |msg: String| Err(DesignError::InvalidF0(msg));
    if plant.b.nrows() != n || plant.a.ncols() != n {
        return bad(format!("plant matrices do not match n = {n}"));
    }
    let mut seen = HashSet::new();
    for &v in plant.sensors.iter().chain(f0_nodes) {
        if v >= n {
            return bad(format!("node {v} out of range"));
        }
        if !seen.insert(v) {
            return bad(format!("node {v} is both measured and in F0, or repeated"));
        }
    }
    if !f0_nodes.starts_with(&plant.targets) {
        return bad("F0 must start with the target nodes".into());
    }
    Ok(())
}

fn check_consistency(
    plant: &LinearPlant,
    f0_nodes: &[usize],
    obs: &ObserverRealization,
) -> Result<()> {
    // T A - N T - J C = 0 and D T + E C = F0, in measured coordinates.
    let t = &obs.transform;
    let at = plant.a.transpose();
    let mut ta = DenseMatrix::zeros(t.nrows(), t.ncols());
    let mut buf = vec![0.0; t.ncols()];
    for i in 0..t.nrows() {
        let row: Vec<f64> = t.row(i).iter().copied().collect();
        at.mul_vec_into(&row, &mut buf);
        ta.set_row(i, &DVector::from_column_slice(&buf).transpose());
    }
    let c = plant.c_dense();
    let dyn_res = (ta - &obs.n_mat * t - &obs.j * &c).norm();
    let f0 = obsv::unit_rows(f0_nodes, plant.n());
    let out_res = (&obs.d * t + &obs.e * &c - f0).norm();
    let scale = 1.0 + obs.n_mat.norm() * t.norm() + obs.j.norm();
    let rel = dyn_res.max(out_res) / scale;
    if rel > 1e-7 {
        return Err(DesignError::Inconsistent(rel));
    }
    Ok(())
}

fn sensor_scaling(plant: &LinearPlant) -> DenseMatrix {
    DenseMatrix::from_diagonal(&DVector::from_iterator(
        plant.sensors.len(),
        plant.sensor_gains.iter().map(|g| 1.0 / g),
    ))
}

/// Functional observer of order `|F0|` for `z0 = F0 x`.
pub fn design_functional_observer(
    plant: &LinearPlant,
    f0_nodes: &[usize],
    params: PoleParams,
) -> Result<ObserverRealization> {
    validate_indices(plant, f0_nodes)?;
    let n = plant.n();
    if n <= DEFAULT_OBSV_CAP {
        let a = plant.a.to_dense();
        let rep = check_darouach(
            &a,
            &plant.c_dense(),
            &obsv::unit_rows(f0_nodes, n),
            NumericOptions::default(),
            EigenvalueScope::NonnegativeRealPart,
        )?;
        if !rep.cond4 || !rep.cond5 {
            return Err(DesignError::Darouach {
                cond4: rep.cond4,
                failing: rep.failing_eigenvalues.iter().map(|z| (z.re, z.im)).collect(),
            });
        }
    }
    let s = &plant.sensors;
    let f0 = f0_nodes;
    let mut excluded = vec![false; n];
    for &v in s.iter().chain(f0) {
        excluded[v] = true;
    }
    let rest: Vec<usize> = (0..n).filter(|&v| !excluded[v]).collect();

    let blocks = CoreBlocks {
        omega: dense_block(&plant.a, s, &rest),
        phi: -dense_block(&plant.a, f0, &rest),
        a12_f2p: dense_block(&plant.a, s, f0),
        f2_a22_f2p: dense_block(&plant.a, f0, f0),
    };
    let core = functional_core(&blocks, params)?;
    let t1 = &core.t1;
    let n_mat = core.n_mat;
    let j = t1 * dense_block(&plant.a, s, s) + dense_block(&plant.a, f0, s) - &n_mat * t1;
    let h = t1 * dense_rows(&plant.b, s) + dense_rows(&plant.b, f0);
    let r0 = f0.len();
    let q = s.len();

    let mut transform = DenseMatrix::zeros(r0, n);
    for (col, &sv) in s.iter().enumerate() {
        transform.set_column(sv, &t1.column(col));
    }
    for (row, &fv) in f0.iter().enumerate() {
        transform[(row, fv)] += 1.0;
    }
    let r = plant.targets.len();
    let mut output_map = DenseMatrix::zeros(r, q + r0);
    for (i, &g) in plant.target_gains.iter().enumerate() {
        output_map[(i, q + i)] = g;
    }
    let scaling = sensor_scaling(plant);
    let obs = ObserverRealization {
        kind: ObserverKind::Functional,
        alpha: params.alpha,
        f0_nodes: f0.to_vec(),
        spectral_abscissa: spectral_abscissa(&n_mat)?,
        j: j * &scaling,
        e: -t1 * &scaling,
        n_mat,
        h,
        d: DenseMatrix::identity(r0, r0),
        transform,
        output_map,
        uncontrollable_dim: core.placement.uncontrollable_dim,
        alpha_used: core.placement.alpha_used,
    };
    check_consistency(plant, f0, &obs)?;
    if obs.spectral_abscissa >= 0.0 {
        return Err(DesignError::NotHurwitz(obs.spectral_abscissa));
    }
    Ok(obs)
}

/// Reduced-order observer of every unmeasured state, with target estimates
/// read off the reconstructed state.
pub fn design_luenberger(plant: &LinearPlant, params: PoleParams) -> Result<ObserverRealization> {
    let n = plant.n();
    let observable = if n <= DEFAULT_OBSV_CAP {
        let sys = NumericSystem::new(
            plant.a.to_dense(),
            Some(plant.b.clone()),
            plant.c_dense(),
            DenseMatrix::zeros(0, n),
        )?;
        obsv::is_observable_numeric(&sys, NumericOptions::default())?
    } else {
        obsv::is_structurally_observable(&plant.inference_graph())
    };
    if !observable {
        return Err(DesignError::Unobservable);
    }
    validate_indices(
        &LinearPlant {
            targets: Vec::new(),
            ..plant.clone()
        },
        &[],
    )?;
    let s = &plant.sensors;
    let mut measured = vec![false; n];
    for &v in s {
        measured[v] = true;
    }
    let u: Vec<usize> = (0..n).filter(|&v| !measured[v]).collect();
    let a11 = dense_block(&plant.a, s, s);
    let a12 = dense_block(&plant.a, s, &u);
    let a21 = dense_block(&plant.a, &u, s);
    let a22 = dense_block(&plant.a, &u, &u);
    let placement = place_poles_lqr(&a22.transpose(), &a12.transpose(), params)?;
    let e = placement.gain.clone();
    let n_mat = &a22 - &e * &a12;
    let j = &a21 - &e * &a11 + &n_mat * &e;
    let h = dense_rows(&plant.b, &u) - &e * dense_rows(&plant.b, s);
    let (q, m) = (s.len(), u.len());

    // w → x_U - E x_S
    let mut transform = DenseMatrix::zeros(m, n);
    for (row, &uv) in u.iter().enumerate() {
        transform[(row, uv)] = 1.0;
    }
    for (col, &sv) in s.iter().enumerate() {
        transform.set_column(sv, &(-e.column(col)));
    }
    let r = plant.targets.len();
    let mut output_map = DenseMatrix::zeros(r, q + m);
    for (i, (&t, &g)) in plant.targets.iter().zip(&plant.target_gains).enumerate() {
        match s.iter().position(|&sv| sv == t) {
            Some(k) => output_map[(i, k)] = g / plant.sensor_gains[k],
            None => {
                let k = u.binary_search(&t).expect("unmeasured");
                output_map[(i, q + k)] = g;
            }
        }
    }
    let scaling = sensor_scaling(plant);
    let obs = ObserverRealization {
        kind: ObserverKind::Luenberger,
        alpha: params.alpha,
        f0_nodes: u.clone(),
        spectral_abscissa: spectral_abscissa(&n_mat)?,
        j: j * &scaling,
        e: e * &scaling,
        n_mat,
        h,
        d: DenseMatrix::identity(m, m),
        transform,
        output_map,
        uncontrollable_dim: placement.uncontrollable_dim,
        alpha_used: placement.alpha_used,
    };
    check_consistency(plant, &u, &obs)?;
    if obs.spectral_abscissa >= 0.0 {
        return Err(DesignError::NotHurwitz(obs.spectral_abscissa));
    }
    Ok(obs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::tests::{chain5, g4, random_graph};
    use crate::obsv::unit_rows;
    use rand::RngExt;

    fn pair2() -> InferenceGraph {
        InferenceGraph::new(2, [(0, 1), (0, 0), (1, 1)])
            .unwrap()
            .with_sensors(vec![1])
            .unwrap()
            .with_targets(vec![0])
            .unwrap()
    }

    pub(crate) fn chain5_plant() -> LinearPlant {
        let mut a = DenseMatrix::zeros(5, 5);
        for i in 0..5 {
            a[(i, i)] = -1.0;
            if i > 0 {
                a[(i, i - 1)] = 1.0;
            }
        }
        LinearPlant::new(
            SparseMatrix::from_dense(&a),
            DenseMatrix::from_element(5, 1, 1.0),
            vec![4],
            vec![0],
        )
    }

    #[test]
    fn minimal_f0_examples() {
        assert_eq!(minimal_f0(&chain5()).unwrap().nodes, vec![0]);
        assert_eq!(minimal_f0(&pair2()).unwrap().nodes, vec![0]);
        assert!(matches!(
            minimal_f0(&g4()),
            Err(DesignError::NotStructurallyObservable(_))
        ));
    }

    #[test]
    fn minimal_f0_flags_missing_self_links() {
        let g = InferenceGraph::new(3, [(0, 1), (1, 2), (2, 2), (1, 1)])
            .unwrap()
            .with_sensors(vec![2])
            .unwrap()
            .with_targets(vec![0])
            .unwrap();
        let f0 = minimal_f0(&g).unwrap();
        assert_eq!(f0.targets_without_self_link, vec![0]);
    }

    fn random_sfo_graph(rng: &mut Pcg64, max_n: usize) -> InferenceGraph {
        loop {
            let n = rng.random_range(3..=max_n);
            let base = random_graph(n, rng.random_range(0.1..0.35), rng);
            let mut edges: Vec<_> = base.edges().collect();
            let targets: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.25)).collect();
            if targets.is_empty() {
                continue;
            }
            edges.extend(targets.iter().map(|&t| (t, t)));
            let sensors: Vec<usize> = (0..n)
                .filter(|v| !targets.contains(v) && rng.random_bool(0.3))
                .collect();
            let g = InferenceGraph::new(n, edges)
                .unwrap()
                .with_sensors(sensors)
                .unwrap()
                .with_targets(targets)
                .unwrap();
            if obsv::is_structurally_functionally_observable(&g) {
                return g;
            }
        }
    }

    fn cond4_generic(g: &InferenceGraph, f0: &[usize], rng: &mut Pcg64) -> bool {
        let votes = (0..3)
            .filter(|_| {
                let sys = NumericSystem::realize(g, rng);
                check_darouach(
                    &sys.a,
                    &sys.c,
                    &unit_rows(f0, g.n()),
                    NumericOptions::default(),
                    EigenvalueScope::All,
                )
                .unwrap()
                .cond4
            })
            .count();
        votes >= 2
    }

    #[test]
    fn minimal_f0_satisfies_cond4_and_is_idempotent() {
        let mut rng = Pcg64::seed_from_u64(20);
        for _ in 0..50 {
            let g = random_sfo_graph(&mut rng, 12);
            let f0 = minimal_f0(&g).unwrap();
            for _ in 0..3 {
                let sys = NumericSystem::realize(&g, &mut rng);
                let rep = check_darouach(
                    &sys.a,
                    &sys.c,
                    &unit_rows(&f0.nodes, g.n()),
                    NumericOptions::default(),
                    EigenvalueScope::All,
                )
                .unwrap();
                assert!(rep.cond4, "{g:?} {f0:?}");
            }
            let again = g.clone().with_targets(f0.nodes.clone()).unwrap();
            assert_eq!(minimal_f0(&again).unwrap().nodes, f0.nodes);
            assert!(f0.nodes.iter().all(|v| !g.sensors().contains(v)));
        }
    }

    #[test]
    fn minimal_f0_matches_brute_force_minimum() {
        let mut rng = Pcg64::seed_from_u64(21);
        for _ in 0..40 {
            let g = random_sfo_graph(&mut rng, 9);
            let r0 = minimal_f0(&g).unwrap().r0();
            let free: Vec<usize> = (0..g.n())
                .filter(|v| !g.targets().contains(v) && !g.sensors().contains(v))
                .collect();
            let best = (0u32..1 << free.len())
                .filter(|mask| (mask.count_ones() as usize) < r0 - g.targets().len())
                .find(|mask| {
                    let mut f0 = g.targets().to_vec();
                    f0.extend(free.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &v)| v));
                    cond4_generic(&g, &f0, &mut rng)
                });
            assert!(best.is_none(), "smaller F0 exists for {g:?}");
        }
    }

    #[test]
    fn seeded_rule_is_reproducible() {
        let mut rng = Pcg64::seed_from_u64(22);
        let g = random_sfo_graph(&mut rng, 12);
        let a = minimal_f0_with(&g, CandidateRule::Seeded(5)).unwrap();
        let b = minimal_f0_with(&g, CandidateRule::Seeded(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scalar_pole_placement() {
        let x = DenseMatrix::from_element(1, 1, 0.0);
        let y = DenseMatrix::from_element(1, 1, 1.0);
        let p = place_poles_lqr(&x, &y, PoleParams::default()).unwrap();
        // P solves 200 P - P² + 1e-3 = 0
        let expected = 100.0 + (100.0f64.powi(2) + 1e-3).sqrt();
        assert!((p.gain[(0, 0)] - expected).abs() < 1e-8);
        assert!(p.closed_loop_abscissa <= -100.0 + 0.1);
        assert_eq!(p.uncontrollable_dim, 0);
    }

    #[test]
    fn fast_modes_need_almost_no_gain() {
        let x = DenseMatrix::from_diagonal(&DVector::from_vec(vec![-300.0, -250.0]));
        let y = DenseMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let p = place_poles_lqr(&x, &y, PoleParams::default()).unwrap();
        assert!(p.gain.norm() < 1e-4, "{}", p.gain);
        assert!((p.closed_loop_abscissa + 250.0).abs() < 1e-3);
    }

    #[test]
    fn random_pole_placement_bound() {
        let mut rng = Pcg64::seed_from_u64(23);
        for _ in 0..50 {
            let x = DenseMatrix::from_fn(5, 5, |_, _| rng.random_range(-3.0..3.0));
            let y = DenseMatrix::from_fn(5, 2, |_, _| rng.random_range(-1.0..1.0));
            let params = PoleParams::default();
            let p = place_poles_lqr(&x, &y, params).unwrap();
            assert!(p.closed_loop_abscissa <= params.alpha + 1e-3 * params.alpha.abs());
        }
    }

    #[test]
    fn uncontrollable_modes_stay() {
        let x = DenseMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0]));
        let y = DenseMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let p = place_poles_lqr(&x, &y, PoleParams::default()).unwrap();
        assert_eq!(p.uncontrollable_dim, 1);
        assert!((p.closed_loop_abscissa + 2.0).abs() < 1e-9);
    }

    #[test]
    fn chain_observer_is_consistent_and_stable() {
        let plant = chain5_plant();
        let obs = design_functional_observer(&plant, &[0], PoleParams::default()).unwrap();
        assert_eq!(obs.r0(), 1);
        assert!(obs.spectral_abscissa < 0.0);
        let json = serde_json::to_value(obs.to_json()).unwrap();
        for key in ["kind", "r0", "alpha", "F0_nodes", "N", "J", "H", "D", "E"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        let back: ObserverJson = serde_json::from_value(json).unwrap();
        assert_eq!(back.n.to_dense().unwrap(), obs.n_mat);
    }

    #[test]
    fn luenberger_examples() {
        let a = DenseMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 1.0, -1.0]);
        let plant = LinearPlant::new(
            SparseMatrix::from_dense(&a),
            DenseMatrix::from_element(2, 1, 1.0),
            vec![1],
            vec![0],
        );
        let obs = design_luenberger(&plant, PoleParams::default()).unwrap();
        assert_eq!(obs.r0(), 1);
        assert!(obs.spectral_abscissa <= -99.9);

        let g4_a = {
            let mut a = DenseMatrix::zeros(4, 4);
            a[(2, 0)] = 1.0;
            a[(2, 1)] = 1.0;
            a[(3, 2)] = 1.0;
            a
        };
        let plant = LinearPlant::new(
            SparseMatrix::from_dense(&g4_a),
            DenseMatrix::from_element(4, 1, 1.0),
            vec![3],
            vec![1],
        );
        assert_eq!(
            design_luenberger(&plant, PoleParams::default()),
            Err(DesignError::Unobservable)
        );
    }

    #[test]
    fn full_f0_functional_observer_equals_luenberger() {
        let mut rng = Pcg64::seed_from_u64(24);
        let n = 6;
        let a = DenseMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let plant = LinearPlant::new(
            SparseMatrix::from_dense(&a),
            DenseMatrix::from_element(n, 1, 1.0),
            vec![0, 3],
            vec![1],
        );
        let lu = design_luenberger(&plant, PoleParams::default()).unwrap();
        let f0: Vec<usize> = vec![1, 2, 4, 5];
        let fo = design_functional_observer(&plant, &f0, PoleParams::default()).unwrap();
        assert!((&lu.n_mat - &fo.n_mat).norm() < 1e-6 * lu.n_mat.norm());
        assert!((&lu.e - &fo.e).norm() < 1e-6 * (1.0 + lu.e.norm()));
    }

    #[test]
    fn rejects_f0_overlapping_sensors() {
        let plant = chain5_plant();
        assert!(matches!(
            design_functional_observer(&plant, &[0, 4], PoleParams::default()),
            Err(DesignError::InvalidF0(_))
        ));
    }

    #[test]
    fn sensor_gains_are_folded_into_j_and_e() {
        let mut plant = chain5_plant();
        let unit = design_functional_observer(&plant, &[0, 1], PoleParams::default()).unwrap();
        plant.sensor_gains = vec![2.0];
        let scaled = design_functional_observer(&plant, &[0, 1], PoleParams::default()).unwrap();
        assert!((&unit.j - &scaled.j * 2.0).norm() < 1e-9);
        assert!((&unit.e - &scaled.e * 2.0).norm() < 1e-9);
    }
}
