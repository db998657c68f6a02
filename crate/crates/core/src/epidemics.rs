//! SIRD metapopulation model on a travel network, its inference graph, the
//! nonlinear functional observer that reads only death counts, and the
//! epidemic-peak prediction experiment.
//!
//! State layout for `N` groups: `[S_0..S_N, I_0..I_N, R_0..R_N, D_0..D_N]`.

use std::io::Write;
use std::path::Path;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::RngExt;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::{dense_block, functional_core, minimal_f0, CoreBlocks, DesignError, PoleParams};
use crate::graph::{GraphError, InferenceGraph};
use crate::linalg::{spectral_abscissa, DenseMatrix, SparseMatrix};
use crate::placement::{greedy_sensor_placement, PlacementError};
use crate::rng;
use crate::sim::{parallel_indexed, rk4_integrate_sampled, SimError, Trajectory};

#[derive(Debug, Error)]
pub enum EpidemicError {
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("state {node} went negative ({value}) at t = {t}; retry with a step below {dt}")]
    Negative { t: f64, node: usize, value: f64, dt: f64 },
    #[error("observer does not converge: abscissa of N is {0}")]
    Unstable(f64),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EpidemicError>;

/// SIRD dynamics with per-group contact rates and daily travel `K[i][j]` from
/// group `j` to group `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SirdModel {
    pub beta: Vec<f64>,
    pub gamma: f64,
    pub eta: f64,
    pub k: SparseMatrix,
    pub p0: Vec<f64>,
    /// `Σ_j K[j][i]`, daily departures from group `i`.
    outflow: Vec<f64>,
}

impl SirdModel {
    pub fn new(beta: Vec<f64>, gamma: f64, eta: f64, k: SparseMatrix, p0: Vec<f64>) -> Result<Self> {
        let n = beta.len();
        let bad = |m: String| Err(EpidemicError::Invalid(m));
        if n == 0 {
            return bad("no groups".into());
        }
        if p0.len() != n || k.nrows() != n || k.ncols() != n {
            return bad(format!("{n} contact rates, {} populations, K {}x{}", p0.len(), k.nrows(), k.ncols()));
        }
        if let Some(b) = beta.iter().find(|b| !(**b > 0.0) || !b.is_finite()) {
            return bad(format!("contact rate {b} is not positive"));
        }
        if !(gamma > 0.0) || !gamma.is_finite() {
            return bad(format!("recovery rate {gamma} is not positive"));
        }
        if !(0.0..=1.0).contains(&eta) {
            return bad(format!("fatality fraction {eta} outside [0, 1]"));
        }
        if let Some(p) = p0.iter().find(|p| !(**p > 0.0) || !p.is_finite()) {
            return bad(format!("population {p} is not positive"));
        }
        let mut outflow = vec![0.0; n];
        for (i, j, v) in k.triplets() {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("K[{i}][{j}] = {v} is negative"));
            }
            if i == j && v != 0.0 {
                return bad(format!("K[{i}][{i}] = {v} on the diagonal"));
            }
            outflow[j] += v;
        }
        Ok(Self { beta, gamma, eta, k, p0, outflow })
    }

    pub fn groups(&self) -> usize {
        self.beta.len()
    }

    pub fn n(&self) -> usize {
        4 * self.groups()
    }

    pub fn s(&self, g: usize) -> usize {
        g
    }

    pub fn i(&self, g: usize) -> usize {
        self.groups() + g
    }

    pub fn r(&self, g: usize) -> usize {
        2 * self.groups() + g
    }

    pub fn d(&self, g: usize) -> usize {
        3 * self.groups() + g
    }

    pub fn total_population(&self, state: &[f64]) -> f64 {
        state.iter().sum()
    }

    /// Disease-free state with `size` infected individuals in `group`.
    pub fn outbreak_state(&self, group: usize, size: f64) -> Vec<f64> {
        let mut x = vec![0.0; self.n()];
        x[..self.groups()].copy_from_slice(&self.p0);
        x[self.s(group)] -= size;
        x[self.i(group)] = size;
        x
    }

    fn rhs_into(&self, x: &[f64], dx: &mut [f64]) {
        let n = self.groups();
        let (s, rest) = x.split_at(n);
        let (inf, rest) = rest.split_at(n);
        let (r, d) = rest.split_at(n);
        let pop: Vec<f64> = (0..n).map(|g| s[g] + inf[g] + r[g] + d[g]).collect();
        for g in 0..n {
            let contact = self.beta[g] * s[g] * inf[g] / pop[g];
            dx[g] = -contact - self.outflow[g] * s[g] / pop[g];
            dx[n + g] = contact - self.gamma * inf[g] - self.outflow[g] * inf[g] / pop[g];
            dx[2 * n + g] = (1.0 - self.eta) * self.gamma * inf[g];
            dx[3 * n + g] = self.eta * self.gamma * inf[g];
        }
        for g in 0..n {
            for (j, v) in self.k.row(g) {
                dx[g] += v * s[j] / pop[j];
                dx[n + g] += v * inf[j] / pop[j];
            }
        }
    }

    /// Linear part of the dynamics with every population frozen at `P0`.
    pub fn linear_part(&self) -> SparseMatrix {
        let n = self.groups();
        let mut t = Vec::new();
        for g in 0..n {
            let leave = self.outflow[g] / self.p0[g];
            if leave != 0.0 {
                t.push((self.s(g), self.s(g), -leave));
            }
            t.push((self.i(g), self.i(g), -self.gamma - leave));
            t.push((self.r(g), self.i(g), (1.0 - self.eta) * self.gamma));
            t.push((self.d(g), self.i(g), self.eta * self.gamma));
            for (j, v) in self.k.row(g) {
                t.push((self.s(g), self.s(j), v / self.p0[j]));
                t.push((self.i(g), self.i(j), v / self.p0[j]));
            }
        }
        t.retain(|e| e.2 != 0.0);
        SparseMatrix::from_triplets(self.n(), self.n(), &t)
    }
}

/// Derivative of the SIRD state, with `P_i = S_i + I_i + R_i + D_i`.
pub fn sird_rhs(model: &SirdModel, state: &[f64]) -> Result<Vec<f64>> {
    if state.len() != model.n() {
        return Err(EpidemicError::Invalid(format!("state of length {} for {} groups", state.len(), model.groups())));
    }
    if state.iter().any(|v| !v.is_finite()) {
        return Err(EpidemicError::NonFinite("state"));
    }
    let mut dx = vec![0.0; state.len()];
    model.rhs_into(state, &mut dx);
    if dx.iter().any(|v| !v.is_finite()) {
        return Err(EpidemicError::NonFinite("derivative"));
    }
    Ok(dx)
}

/// RK4 solution sampled every `record_every` steps. Fails when a compartment
/// goes negative beyond round-off, which signals a step that is too long.
pub fn simulate_sird(model: &SirdModel, x0: &[f64], tf: f64, dt: f64, record_every: usize) -> Result<Trajectory> {
    sird_rhs(model, x0)?;
    if let Some((node, &value)) = x0.iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(EpidemicError::Invalid(format!("initial state {node} is negative ({value})")));
    }
    let mut guard = NegativityGuard::new(dt);
    let traj = rk4_integrate_sampled(
        |t, x, dx| {
            guard.inspect(t, x);
            model.rhs_into(x, dx);
        },
        x0,
        0.0,
        tf,
        dt,
        record_every,
    );
    guard.finish(traj)
}

/// Remembers the first negative compartment any RK4 stage was evaluated at, so a
/// step that is too long is reported as such even when the run later overflows.
struct NegativityGuard {
    dt: f64,
    first: Option<(f64, usize, f64)>,
}

impl NegativityGuard {
    fn new(dt: f64) -> Self {
        Self { dt, first: None }
    }

    fn inspect(&mut self, t: f64, x: &[f64]) {
        if self.first.is_some() {
            return;
        }
        let floor = -1e-9 * x.iter().map(|v| v.abs()).fold(1.0, f64::max);
        if let Some((node, &value)) = x.iter().enumerate().find(|(_, v)| **v < floor) {
            self.first = Some((t, node, value));
        }
    }

    fn finish<T>(self, outcome: std::result::Result<T, SimError>) -> Result<T> {
        match self.first {
            Some((t, node, value)) => Err(EpidemicError::Negative { t, node, value, dt: self.dt }),
            None => Ok(outcome?),
        }
    }
}

/// Influence graph of the SIRD state nodes. Populations count as parameters, so
/// `R` and `D` influence nothing.
pub fn sird_inference_graph(model: &SirdModel) -> InferenceGraph {
    let mut edges = Vec::new();
    for g in 0..model.groups() {
        let (s, i) = (model.s(g), model.i(g));
        edges.extend([(s, s), (i, s), (s, i), (i, i), (i, model.r(g)), (i, model.d(g))]);
        for (j, _) in model.k.row(g) {
            edges.push((model.s(j), s));
            edges.push((model.i(j), i));
        }
    }
    InferenceGraph::new(model.n(), edges).expect("indices are in range")
}

/// Split of the contact terms `f = f1(z0) + W f2(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    /// Groups whose contact term is a function of `z0` and goes to `f1`.
    pub routed: Vec<usize>,
    /// Groups whose contact term is an unknown input through `W`.
    pub unrouted: Vec<usize>,
    /// `n × |unrouted|`, column `c` is `-e_S + e_I` of group `unrouted[c]`.
    pub w: DenseMatrix,
    /// Lipschitz constant of `f1` on the feasible set, `max β_i`.
    pub kappa: f64,
}

pub fn decompose_nonlinearity(model: &SirdModel, f0_nodes: &[usize]) -> Decomposition {
    let mut selected = vec![false; model.n()];
    for &v in f0_nodes {
        selected[v] = true;
    }
    let (routed, unrouted): (Vec<usize>, Vec<usize>) =
        (0..model.groups()).partition(|&g| selected[model.s(g)] && selected[model.i(g)]);
    let mut w = DenseMatrix::zeros(model.n(), unrouted.len());
    for (c, &g) in unrouted.iter().enumerate() {
        w[(model.s(g), c)] = -1.0;
        w[(model.i(g), c)] = 1.0;
    }
    Decomposition {
        routed,
        unrouted,
        w,
        kappa: model.beta.iter().copied().fold(0.0, f64::max),
    }
}

/// `ẇ = N w + J y + L f1(ẑ)`, `ẑ = w + E y`, with `y` the death counts of the
/// sensor groups.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearObserver {
    pub sensor_nodes: Vec<usize>,
    pub target_nodes: Vec<usize>,
    pub f0_nodes: Vec<usize>,
    pub decomposition: Decomposition,
    pub n_mat: DenseMatrix,
    pub j: DenseMatrix,
    /// `r0 × n`; equals `T`, so `L f1` is `f1` read on the `F0` rows.
    pub l: DenseMatrix,
    pub e: DenseMatrix,
    pub transform: DenseMatrix,
    pub spectral_abscissa: f64,
    pub alpha_used: f64,
    pub uncontrollable_dim: usize,
    /// `(β_g / P0_g, P0_g, position of S_g in F0, position of I_g in F0)` per routed group.
    contact: Vec<(f64, f64, usize, usize)>,
}

impl NonlinearObserver {
    pub fn r0(&self) -> usize {
        self.f0_nodes.len()
    }

    /// `ẑ`, the estimate of `F0 x`.
    pub fn estimate(&self, w: &[f64], y: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(w) + &self.e * DVector::from_column_slice(y)
    }

    /// Observer state that reproduces `F0 x` exactly.
    pub fn consistent_state(&self, x: &[f64]) -> DVector<f64> {
        &self.transform * DVector::from_column_slice(x)
    }

    pub fn rhs(&self, w: &[f64], y: &[f64], dw: &mut [f64]) {
        let zhat = self.estimate(w, y);
        let mut out = &self.n_mat * DVector::from_column_slice(w) + &self.j * DVector::from_column_slice(y);
        // f1 is Lipschitz with constant max β only on 0 ≤ S, I ≤ P; the
        // estimates are read through that box.
        for &(rate, pop, s, i) in &self.contact {
            let c = rate * zhat[s].clamp(0.0, pop) * zhat[i].clamp(0.0, pop);
            out[s] -= c;
            out[i] += c;
        }
        dw.copy_from_slice(out.as_slice());
    }
}

/// Grows the minimal `F0` until the contact terms and the linear couplings of
/// its rows are all accounted for: a group enters with both `S` and `I` or not
/// at all, and no `F0` row may depend on an unselected node no sensor sees.
fn closed_f0(model: &SirdModel, a: &SparseMatrix, graph: &InferenceGraph) -> Result<Vec<usize>> {
    let n = model.n();
    let mut f0 = minimal_f0(graph)?.nodes;
    let mut member = vec![false; n];
    for &v in &f0 {
        member[v] = true;
    }
    let mut sensed = vec![false; n];
    for &s in graph.sensors() {
        for (c, v) in a.row(s) {
            sensed[c] |= v != 0.0;
        }
    }
    let mut sensor = vec![false; n];
    for &s in graph.sensors() {
        sensor[s] = true;
    }
    loop {
        let before = f0.len();
        for g in 0..model.groups() {
            let (s, i) = (model.s(g), model.i(g));
            if member[s] != member[i] {
                let missing = if member[s] { i } else { s };
                member[missing] = true;
                f0.push(missing);
            }
        }
        for idx in 0..f0.len() {
            for (c, v) in a.row(f0[idx]) {
                if v != 0.0 && !member[c] && !sensor[c] && !sensed[c] {
                    member[c] = true;
                    f0.push(c);
                }
            }
        }
        if f0.len() == before {
            return Ok(f0);
        }
    }
}

/// Functional observer for the infected counts of `targets`, driven by the
/// death counts of `sensors` (both given as group ids).
pub fn design_nonlinear_functional_observer(
    model: &SirdModel,
    sensors: &[usize],
    targets: &[usize],
    params: PoleParams,
) -> Result<NonlinearObserver> {
    let groups = model.groups();
    if let Some(g) = sensors.iter().chain(targets).find(|&&g| g >= groups) {
        return Err(EpidemicError::Invalid(format!("group {g} out of range")));
    }
    let sensor_nodes: Vec<usize> = sensors.iter().map(|&g| model.d(g)).collect();
    let target_nodes: Vec<usize> = targets.iter().map(|&g| model.i(g)).collect();
    let graph = sird_inference_graph(model)
        .with_sensors(sensor_nodes.clone())?
        .with_targets(target_nodes.clone())?;
    let a = model.linear_part();
    let f0 = closed_f0(model, &a, &graph)?;
    let dec = decompose_nonlinearity(model, &f0);

    let n = model.n();
    let mut excluded = vec![false; n];
    for &v in sensor_nodes.iter().chain(&f0) {
        excluded[v] = true;
    }
    let rest: Vec<usize> = (0..n).filter(|&v| !excluded[v]).collect();
    let w_rows = |rows: &[usize]| DenseMatrix::from_fn(rows.len(), dec.w.ncols(), |i, c| dec.w[(rows[i], c)]);
    let hcat = |x: DenseMatrix, y: DenseMatrix| {
        let mut m = DenseMatrix::zeros(x.nrows(), x.ncols() + y.ncols());
        m.columns_mut(0, x.ncols()).copy_from(&x);
        m.columns_mut(x.ncols(), y.ncols()).copy_from(&y);
        m
    };
    let blocks = CoreBlocks {
        omega: hcat(dense_block(&a, &sensor_nodes, &rest), w_rows(&sensor_nodes)),
        phi: -hcat(dense_block(&a, &f0, &rest), w_rows(&f0)),
        a12_f2p: dense_block(&a, &sensor_nodes, &f0),
        f2_a22_f2p: dense_block(&a, &f0, &f0),
    };
    let core = functional_core(&blocks, params)?;
    let t1 = core.t1;
    let n_mat = core.n_mat;
    let j = &t1 * dense_block(&a, &sensor_nodes, &sensor_nodes) + dense_block(&a, &f0, &sensor_nodes)
        - &n_mat * &t1;
    let r0 = f0.len();
    let mut transform = DenseMatrix::zeros(r0, n);
    for (col, &sv) in sensor_nodes.iter().enumerate() {
        transform.set_column(sv, &t1.column(col));
    }
    for (row, &fv) in f0.iter().enumerate() {
        transform[(row, fv)] += 1.0;
    }
    let pos = |v: usize| f0.iter().position(|&u| u == v).expect("routed groups lie in F0");
    let contact = dec
        .routed
        .iter()
        .map(|&g| (model.beta[g] / model.p0[g], model.p0[g], pos(model.s(g)), pos(model.i(g))))
        .collect();
    let abscissa = spectral_abscissa(&n_mat).map_err(DesignError::from)?;
    if abscissa > 1e-9 * (1.0 + n_mat.norm()) {
        return Err(EpidemicError::Unstable(abscissa));
    }
    Ok(NonlinearObserver {
        sensor_nodes,
        target_nodes,
        f0_nodes: f0,
        decomposition: dec,
        e: -&t1,
        l: transform.clone(),
        transform,
        n_mat,
        j,
        spectral_abscissa: abscissa,
        alpha_used: core.placement.alpha_used,
        uncontrollable_dim: core.placement.uncontrollable_dim,
        contact,
    })
}

/// Plant and observer on the same RK4 grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverRun {
    pub times: Vec<f64>,
    /// Plant infected counts of the observer's targets.
    pub targets: Vec<Vec<f64>>,
    /// Their estimates.
    pub estimates: Vec<Vec<f64>>,
}

pub fn run_observer(
    model: &SirdModel,
    obs: &NonlinearObserver,
    x0: &[f64],
    w0: &[f64],
    tf: f64,
    dt: f64,
    record_every: usize,
) -> Result<ObserverRun> {
    let n = model.n();
    sird_rhs(model, x0)?;
    if w0.len() != obs.r0() {
        return Err(EpidemicError::Invalid(format!("observer state of length {} for r0 = {}", w0.len(), obs.r0())));
    }
    let mut s0 = x0.to_vec();
    s0.extend_from_slice(w0);
    let mut y = vec![0.0; obs.sensor_nodes.len()];
    let mut guard = NegativityGuard::new(dt);
    let rhs = |t: f64, s: &[f64], ds: &mut [f64]| {
        let (x, w) = s.split_at(n);
        guard.inspect(t, x);
        let (dx, dw) = ds.split_at_mut(n);
        model.rhs_into(x, dx);
        for (yi, &v) in y.iter_mut().zip(&obs.sensor_nodes) {
            *yi = x[v];
        }
        obs.rhs(w, &y, dw);
    };
    let traj = rk4_integrate_sampled(rhs, &s0, 0.0, tf, dt, record_every);
    let traj = guard.finish(traj)?;
    let target_pos: Vec<usize> = obs
        .target_nodes
        .iter()
        .map(|&t| obs.f0_nodes.iter().position(|&u| u == t).expect("targets lead F0"))
        .collect();
    let mut run = ObserverRun {
        times: traj.times,
        targets: Vec::with_capacity(traj.states.len()),
        estimates: Vec::with_capacity(traj.states.len()),
    };
    for s in &traj.states {
        let (x, w) = s.split_at(n);
        let y: Vec<f64> = obs.sensor_nodes.iter().map(|&v| x[v]).collect();
        let zhat = obs.estimate(w, &y);
        run.targets.push(obs.target_nodes.iter().map(|&t| x[t]).collect());
        run.estimates.push(target_pos.iter().map(|&p| zhat[p]).collect());
    }
    Ok(run)
}

/// Time of the largest sample of each column; `None` when the maximum sits on
/// the last sample, that is, no peak was reached within the horizon.
pub fn peak_times(times: &[f64], series: &[Vec<f64>]) -> Vec<Option<f64>> {
    let cols = series.first().map_or(0, Vec::len);
    (0..cols)
        .map(|c| {
            let mut best = 0;
            for (k, row) in series.iter().enumerate() {
                if row[c] > series[best][c] {
                    best = k;
                }
            }
            (best + 1 < times.len()).then(|| times[best])
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outbreak {
    pub group: usize,
    pub size: f64,
}

/// A model with the groups to monitor, the groups whose deaths are reported,
/// and the true initial outbreak.
#[derive(Debug, Clone, PartialEq)]
pub struct EpidemicScenario {
    pub model: SirdModel,
    pub sensors: Vec<usize>,
    pub targets: Vec<usize>,
    pub outbreak: Outbreak,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioJson {
    pub beta: Vec<f64>,
    pub gamma: f64,
    pub eta: f64,
    #[serde(rename = "K")]
    pub k: Vec<(usize, usize, f64)>,
    #[serde(rename = "P0")]
    pub p0: Vec<f64>,
    pub sensors: Vec<usize>,
    pub targets: Vec<usize>,
    pub outbreak: Outbreak,
}

const BUNDLED_CITIES30: &str = include_str!("../data/cities30.json");

impl EpidemicScenario {
    pub fn from_json(doc: &ScenarioJson) -> Result<Self> {
        let n = doc.beta.len();
        let mut seen = std::collections::HashSet::new();
        for &(i, j, _) in &doc.k {
            if i >= n || j >= n {
                return Err(EpidemicError::Invalid(format!("travel entry ({i}, {j}) out of range")));
            }
            if !seen.insert((i, j)) {
                return Err(EpidemicError::Invalid(format!("travel entry ({i}, {j}) repeated")));
            }
        }
        let k = SparseMatrix::from_triplets(n, n, &doc.k);
        let model = SirdModel::new(doc.beta.clone(), doc.gamma, doc.eta, k, doc.p0.clone())?;
        if let Some(g) = doc.sensors.iter().chain(&doc.targets).find(|&&g| g >= n) {
            return Err(EpidemicError::Invalid(format!("group {g} out of range")));
        }
        let o = doc.outbreak;
        if o.group >= n || !(o.size > 0.0) || o.size > model.p0[o.group] {
            return Err(EpidemicError::Invalid(format!("outbreak of {} in group {}", o.size, o.group)));
        }
        Ok(Self {
            model,
            sensors: doc.sensors.clone(),
            targets: doc.targets.clone(),
            outbreak: o,
        })
    }

    pub fn to_json(&self) -> ScenarioJson {
        ScenarioJson {
            beta: self.model.beta.clone(),
            gamma: self.model.gamma,
            eta: self.model.eta,
            k: self.model.k.triplets(),
            p0: self.model.p0.clone(),
            sensors: self.sensors.clone(),
            targets: self.targets.clone(),
            outbreak: self.outbreak,
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Self::from_json(&serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// The bundled 30-city scenario.
    pub fn synthetic_30() -> Self {
        Self::from_json_str(BUNDLED_CITIES30).expect("bundled scenario is valid")
    }

    pub fn true_initial_state(&self) -> Vec<f64> {
        self.model.outbreak_state(self.outbreak.group, self.outbreak.size)
    }
}

/// Knobs of the gravity-model air network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AirNetworkParams {
    pub cities: usize,
    /// Strongest gravity partners each city is linked to (links are symmetric).
    pub partners: usize,
    /// Mean share of a city's population flying out per day.
    pub daily_travel: f64,
    pub population_range: (f64, f64),
    pub beta: f64,
    /// Standard deviation of the per-city contact rate.
    pub beta_sd: f64,
    pub gamma: f64,
    pub eta: f64,
}

impl Default for AirNetworkParams {
    fn default() -> Self {
        Self {
            cities: 30,
            partners: 4,
            daily_travel: 2e-2,
            population_range: (5e5, 1e7),
            beta: 0.4,
            beta_sd: 0.01,
            gamma: 0.16,
            eta: 0.01,
        }
    }
}

/// Cities at uniform positions on a 4000 km × 2000 km map with log-uniform
/// populations. Each city flies to its strongest partners under the gravity
/// weight `P_i P_j / max(d_ij, 100 km)²`, flows are symmetric, and the overall
/// scale makes the mean daily departure share equal `daily_travel`.
pub fn synthetic_air_network(params: &AirNetworkParams, seed: u64) -> Result<SirdModel> {
    let n = params.cities;
    let (lo, hi) = params.population_range;
    if n < 2 || params.partners == 0 || !(lo > 0.0 && hi >= lo) || !(params.daily_travel > 0.0) {
        return Err(EpidemicError::Invalid(format!("air network parameters {params:?}")));
    }
    let mut rng = rng::stream(seed, "air_network");
    let pos: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.random_range(0.0..4000.0), rng.random_range(0.0..2000.0)))
        .collect();
    let p0: Vec<f64> = (0..n)
        .map(|_| (rng.random_range(lo.ln()..=hi.ln())).exp().round())
        .collect();
    let contact = Normal::new(params.beta, params.beta_sd)
        .map_err(|e| EpidemicError::Invalid(e.to_string()))?;
    let beta: Vec<f64> = (0..n).map(|_| contact.sample(&mut rng)).collect();
    let gravity = |i: usize, j: usize| {
        let d = ((pos[i].0 - pos[j].0).powi(2) + (pos[i].1 - pos[j].1).powi(2)).sqrt();
        p0[i] * p0[j] / d.max(100.0).powi(2)
    };
    let mut linked = vec![vec![false; n]; n];
    for i in 0..n {
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| gravity(i, b).total_cmp(&gravity(i, a)).then(a.cmp(&b)));
        for &j in order.iter().take(params.partners) {
            linked[i][j] = true;
            linked[j][i] = true;
        }
    }
    let mut raw = Vec::new();
    let mut share = 0.0;
    for i in 0..n {
        for j in 0..n {
            if linked[i][j] {
                let v = gravity(i, j);
                raw.push((i, j, v));
                share += v / p0[j];
            }
        }
    }
    let scale = params.daily_travel * n as f64 / share;
    let k: Vec<(usize, usize, f64)> = raw.into_iter().map(|(i, j, v)| (i, j, (v * scale).round().max(1.0))).collect();
    SirdModel::new(beta, params.gamma, params.eta, SparseMatrix::from_triplets(n, n, &k), p0)
}

/// Random targets, an outbreak outside them, and sensors from the greedy
/// minimum placement over the death counts of every city, topped up with
/// randomly drawn cities to `n_sensors`.
pub fn synthetic_scenario(
    params: &AirNetworkParams,
    n_targets: usize,
    n_sensors: usize,
    outbreak_size: f64,
    seed: u64,
) -> Result<EpidemicScenario> {
    let model = synthetic_air_network(params, seed)?;
    let n = model.groups();
    if n_targets == 0 || n_targets >= n || n_sensors > n {
        return Err(EpidemicError::Invalid(format!("{n_targets} targets and {n_sensors} sensors among {n} cities")));
    }
    let mut rng = rng::stream(seed, "epidemic_roles");
    let mut cities: Vec<usize> = (0..n).collect();
    cities.shuffle(&mut rng);
    let mut targets = cities[..n_targets].to_vec();
    targets.sort_unstable();
    let outbreak = Outbreak { group: cities[n_targets], size: outbreak_size };
    let graph = sird_inference_graph(&model).with_targets(targets.iter().map(|&g| model.i(g)).collect())?;
    let candidates: Vec<usize> = (0..n).map(|g| model.d(g)).collect();
    let placement = greedy_sensor_placement(&graph, &candidates)?;
    let mut sensors: Vec<usize> = placement.sensors.iter().map(|&v| v - 3 * n).collect();
    let mut pool: Vec<usize> = (0..n).filter(|g| !sensors.contains(g)).collect();
    pool.shuffle(&mut rng);
    let missing = n_sensors.saturating_sub(sensors.len());
    sensors.extend(pool.into_iter().take(missing));
    sensors.sort_unstable();
    Ok(EpidemicScenario { model, sensors, targets, outbreak })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeakConfig {
    pub n_trials: usize,
    /// Horizon in days.
    pub tf: f64,
    pub dt: f64,
    /// Spacing of the samples the peaks are read from; a multiple of `dt`.
    pub output_step: f64,
    /// Infected count of the false initial guess.
    pub guess_size: f64,
    /// Pole placement for the observer; `None` uses [`default_pole_params`].
    pub pole: Option<PoleParams>,
    pub seed: u64,
    pub threads: usize,
}

impl Default for PeakConfig {
    fn default() -> Self {
        Self {
            n_trials: 100,
            tf: 365.0,
            dt: 0.05,
            output_step: 0.1,
            guess_size: 1.0,
            pole: None,
            seed: 0,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeakMethod {
    Freerun,
    Observer,
}

impl PeakMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Freerun => "freerun",
            Self::Observer => "observer",
        }
    }
}

/// Peak-time errors `t̂_p - t_p` in days, indexed `[target][trial]`; `None`
/// where either peak fell outside the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakReport {
    pub targets: Vec<usize>,
    pub sensors: Vec<usize>,
    pub true_peaks: Vec<Option<f64>>,
    pub guesses: Vec<usize>,
    pub freerun: Vec<Vec<Option<f64>>>,
    pub observer: Vec<Vec<Option<f64>>>,
    pub r0: usize,
}

impl PeakReport {
    pub fn errors(&self, method: PeakMethod) -> &[Vec<Option<f64>>] {
        match method {
            PeakMethod::Freerun => &self.freerun,
            PeakMethod::Observer => &self.observer,
        }
    }

    /// Interquartile range of the available errors of target `k`.
    pub fn iqr(&self, method: PeakMethod, k: usize) -> Option<f64> {
        let sample: Vec<f64> = self.errors(method)[k].iter().flatten().copied().collect();
        (!sample.is_empty()).then(|| crate::powergrid::quantile(&sample, 0.75) - crate::powergrid::quantile(&sample, 0.25))
    }

    /// `target,trial,method,peak_error_days`; missing peaks are written as `nan`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "target,trial,method,peak_error_days")?;
        for (k, &target) in self.targets.iter().enumerate() {
            for method in [PeakMethod::Freerun, PeakMethod::Observer] {
                for (trial, e) in self.errors(method)[k].iter().enumerate() {
                    match e {
                        Some(v) => writeln!(out, "{target},{trial},{},{v}", method.as_str())?,
                        None => writeln!(out, "{target},{trial},{},nan", method.as_str())?,
                    }
                }
            }
        }
        Ok(())
    }
}

/// One trial: free run and observer from `guess`, plant from the true state.
fn trial_peaks(
    scenario: &EpidemicScenario,
    obs: &NonlinearObserver,
    guess: &[f64],
    cfg: &PeakConfig,
    every: usize,
) -> Result<(Vec<Option<f64>>, Vec<Option<f64>>)> {
    let model = &scenario.model;
    let free = simulate_sird(model, guess, cfg.tf, cfg.dt, every)?;
    let free_i: Vec<Vec<f64>> = free
        .states
        .iter()
        .map(|x| scenario.targets.iter().map(|&g| x[model.i(g)]).collect())
        .collect();
    let w0 = obs.consistent_state(guess);
    let run = run_observer(model, obs, &scenario.true_initial_state(), w0.as_slice(), cfg.tf, cfg.dt, every)?;
    Ok((peak_times(&free.times, &free_i), peak_times(&run.times, &run.estimates)))
}

fn sampling_stride(cfg: &PeakConfig) -> Result<usize> {
    let every = (cfg.output_step / cfg.dt).round();
    if !(every >= 1.0) || ((every * cfg.dt - cfg.output_step).abs() > 1e-9 * cfg.output_step) {
        return Err(EpidemicError::Invalid(format!(
            "output step {} is not a multiple of dt = {}",
            cfg.output_step, cfg.dt
        )));
    }
    Ok(every as usize)
}

/// No shift, with the input weight scaled by the squared death-count gain
/// `(ηγ)²` so the design sees the infected counts behind the measurements at
/// unit gain, and a state weight that puts the observed modes near `-10`, far
/// left of the contact-rate Lipschitz constant. Modes that the deaths barely
/// reach stay where the travel dynamics put them instead of blocking the design.
pub fn default_pole_params(model: &SirdModel) -> PoleParams {
    let gain = model.eta * model.gamma;
    PoleParams {
        alpha: 0.0,
        q_scale: 100.0,
        r_scale: if gain > 0.0 { gain * gain } else { 1.0 },
    }
}

/// Reference run from the true outbreak, then `n_trials` runs whose initial
/// guess places `guess_size` infected in a uniformly drawn city.
pub fn peak_prediction_experiment(scenario: &EpidemicScenario, cfg: &PeakConfig) -> Result<PeakReport> {
    let model = &scenario.model;
    let every = sampling_stride(cfg)?;
    let pole = cfg.pole.unwrap_or_else(|| default_pole_params(model));
    let obs = design_nonlinear_functional_observer(model, &scenario.sensors, &scenario.targets, pole)?;
    let reference = simulate_sird(model, &scenario.true_initial_state(), cfg.tf, cfg.dt, every)?;
    let ref_i: Vec<Vec<f64>> = reference
        .states
        .iter()
        .map(|x| scenario.targets.iter().map(|&g| x[model.i(g)]).collect())
        .collect();
    let true_peaks = peak_times(&reference.times, &ref_i);

    let mut rng = rng::stream(cfg.seed, "epidemic_guesses");
    let guesses: Vec<usize> = (0..cfg.n_trials).map(|_| rng.random_range(0..model.groups())).collect();
    let trials = parallel_indexed(cfg.n_trials, cfg.threads, |t| {
        trial_peaks(scenario, &obs, &model.outbreak_state(guesses[t], cfg.guess_size), cfg, every)
    });
    let r = scenario.targets.len();
    let mut freerun = vec![Vec::with_capacity(cfg.n_trials); r];
    let mut observer = vec![Vec::with_capacity(cfg.n_trials); r];
    for trial in trials {
        let (free, est) = trial?;
        for k in 0..r {
            let err = |p: Option<f64>| p.zip(true_peaks[k]).map(|(a, b)| a - b);
            freerun[k].push(err(free[k]));
            observer[k].push(err(est[k]));
        }
    }
    Ok(PeakReport {
        targets: scenario.targets.clone(),
        sensors: scenario.sensors.clone(),
        true_peaks,
        guesses,
        freerun,
        observer,
        r0: obs.r0(),
    })
}


/// Seed the bundled scenario was generated with.
pub const BUNDLED_SCENARIO_SEED: u64 = 2020;
