//! Structure-preserving grid model of coupled first- and second-order phase
//! oscillators, its equilibrium and linearization, and deception-attack
//! detection with an ensemble of functional observers.
//!
//! Oscillators `0..n_g` are generators, the rest are generator terminals and
//! loads. The state is `(φ_0 .. φ_{N-1}, φ̇_0 .. φ̇_{n_g-1})`.

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::DVector;
use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::{design_functional_observer, minimal_f0, LinearPlant, ObserverRealization, PoleParams};
use crate::linalg::{DenseMatrix, SparseMatrix};
use crate::rng;
use crate::sim::{self, rk4_integrate_sampled, SimError};

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    Invalid(String),
    #[error("state is not finite")]
    NonFinite,
    #[error("Newton iteration did not converge in {iterations} steps (residual {residual:.3e})")]
    NoEquilibrium { iterations: usize, residual: f64 },
    #[error("only {found} of {wanted} sensor subsets admit an observer after {attempts} draws")]
    InfeasibleSubsets { found: usize, wanted: usize, attempts: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GridError>;

/// On-disk grid description; `K` lists each coupled pair once as `[i, j, K_ij]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridJson {
    pub n_g: usize,
    pub n_l: usize,
    #[serde(rename = "K")]
    pub k: Vec<(usize, usize, f64)>,
    #[serde(rename = "P")]
    pub p: Vec<f64>,
    #[serde(rename = "H")]
    pub h: Vec<f64>,
    #[serde(rename = "D")]
    pub d: Vec<f64>,
    #[serde(rename = "omega_R", default = "nominal_frequency")]
    pub omega_r: f64,
}

fn nominal_frequency() -> f64 {
    2.0 * std::f64::consts::PI * 60.0
}

const BUNDLED_GRID30: &str = include_str!("../data/grid30.json");

#[derive(Debug, Clone, PartialEq)]
pub struct GridModel {
    pub n_g: usize,
    pub n_l: usize,
    /// Symmetric couplings with zero diagonal.
    pub k: SparseMatrix,
    pub p: Vec<f64>,
    /// Inertias of the generators.
    pub h: Vec<f64>,
    /// Dampings of all oscillators.
    pub d: Vec<f64>,
    pub omega_r: f64,
}

impl GridModel {
    pub fn from_json(doc: &GridJson) -> Result<Self> {
        let n = 2 * doc.n_g + doc.n_l;
        let bad = |m: String| Err(GridError::Invalid(m));
        if doc.p.len() != n || doc.d.len() != n || doc.h.len() != doc.n_g {
            return bad(format!(
                "expected {n} injections and dampings and {} inertias",
                doc.n_g
            ));
        }
        if doc.h.iter().any(|&h| !(h > 0.0)) || doc.d.iter().any(|&d| !(d > 0.0)) {
            return bad("inertias and dampings must be positive".into());
        }
        if !(doc.omega_r > 0.0) {
            return bad("reference frequency must be positive".into());
        }
        let mut seen = BTreeSet::new();
        let mut triplets = Vec::with_capacity(2 * doc.k.len());
        for &(i, j, v) in &doc.k {
            if i >= n || j >= n || i == j {
                return bad(format!("coupling ({i}, {j}) is out of range or a self-coupling"));
            }
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("coupling ({i}, {j}) = {v} must be finite and nonnegative"));
            }
            if !seen.insert((i.min(j), i.max(j))) {
                return bad(format!("coupling ({i}, {j}) listed twice"));
            }
            triplets.push((i, j, v));
            triplets.push((j, i, v));
        }
        Ok(Self {
            n_g: doc.n_g,
            n_l: doc.n_l,
            k: SparseMatrix::from_triplets(n, n, &triplets),
            p: doc.p.clone(),
            h: doc.h.clone(),
            d: doc.d.clone(),
            omega_r: doc.omega_r,
        })
    }

    pub fn to_json(&self) -> GridJson {
        GridJson {
            n_g: self.n_g,
            n_l: self.n_l,
            k: self.k.triplets().into_iter().filter(|&(i, j, _)| i < j).collect(),
            p: self.p.clone(),
            h: self.h.clone(),
            d: self.d.clone(),
            omega_r: self.omega_r,
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Self::from_json(&serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Synthetic grid shipped with the crate: 6 generators, their terminals and 18 loads.
    pub fn synthetic_30() -> Self {
        Self::from_json_str(BUNDLED_GRID30).expect("bundled grid is valid")
    }

    /// Number of oscillators `N = 2 n_g + n_l`.
    pub fn oscillators(&self) -> usize {
        2 * self.n_g + self.n_l
    }

    /// State dimension `N + n_g`.
    pub fn n(&self) -> usize {
        self.oscillators() + self.n_g
    }

    pub fn is_generator(&self, i: usize) -> bool {
        i < self.n_g
    }

    /// `P_i + Σ_j K_ij sin(φ_j − φ_i)`.
    fn net_power(&self, phases: &[f64], i: usize) -> f64 {
        self.p[i]
            + self
                .k
                .row(i)
                .map(|(j, kij)| kij * (phases[j] - phases[i]).sin())
                .sum::<f64>()
    }

    /// Right-hand side of the oscillator equations.
    pub fn swing_rhs(&self, state: &[f64], out: &mut [f64]) -> Result<()> {
        let big_n = self.oscillators();
        let (phases, freqs) = state.split_at(big_n);
        for i in 0..big_n {
            let power = self.net_power(phases, i);
            if self.is_generator(i) {
                out[i] = freqs[i];
                out[big_n + i] = (self.omega_r * power - self.d[i] * freqs[i]) / (2.0 * self.h[i]);
            } else {
                out[i] = self.omega_r * power / self.d[i];
            }
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(GridError::NonFinite);
        }
        Ok(())
    }

    /// `∂/∂φ` of the net powers: `K_ij cos(φ_j − φ_i)` off the diagonal, minus the row sum on it.
    fn power_jacobian(&self, phases: &[f64]) -> DenseMatrix {
        let big_n = self.oscillators();
        let mut jac = DenseMatrix::zeros(big_n, big_n);
        for i in 0..big_n {
            for (j, kij) in self.k.row(i) {
                let c = kij * (phases[j] - phases[i]).cos();
                jac[(i, j)] += c;
                jac[(i, i)] -= c;
            }
        }
        jac
    }

    /// Synchronous state with `φ_0 = 0` and zero frequencies by Newton's method on
    /// the net powers. Unbalanced injections are first shifted to sum to zero.
    pub fn solve_equilibrium(&self, initial_guess: Option<&[f64]>) -> Result<Vec<f64>> {
        const MAX_ITER: usize = 100;
        let big_n = self.oscillators();
        let mut model = self.clone();
        let imbalance = model.p.iter().sum::<f64>() / big_n as f64;
        for p in &mut model.p {
            *p -= imbalance;
        }
        let mut phases: Vec<f64> = match initial_guess {
            Some(g) if g.len() >= big_n => g[..big_n].to_vec(),
            Some(_) => return Err(GridError::Invalid("initial guess is too short".into())),
            None => vec![0.0; big_n],
        };
        let pin = phases[0];
        for v in &mut phases {
            *v -= pin;
        }
        let residual = |ph: &[f64]| -> DVector<f64> {
            DVector::from_iterator(big_n - 1, (1..big_n).map(|i| model.net_power(ph, i)))
        };
        let mut res = residual(&phases);
        let mut iterations = 0;
        while res.amax() > 1e-10 {
            if iterations == MAX_ITER || !res.iter().all(|v| v.is_finite()) {
                return Err(GridError::NoEquilibrium {
                    iterations,
                    residual: res.amax(),
                });
            }
            let jac = model.power_jacobian(&phases).view((1, 1), (big_n - 1, big_n - 1)).into_owned();
            let step = jac.lu().solve(&(-&res)).ok_or(GridError::NoEquilibrium {
                iterations,
                residual: res.amax(),
            })?;
            for i in 1..big_n {
                phases[i] += step[i - 1];
            }
            res = residual(&phases);
            iterations += 1;
        }
        let mut state = phases;
        state.resize(self.n(), 0.0);
        Ok(state)
    }

    /// Jacobian of [`Self::swing_rhs`] at `state`.
    pub fn linearize(&self, state: &[f64]) -> DenseMatrix {
        let big_n = self.oscillators();
        let n = self.n();
        let jp = self.power_jacobian(&state[..big_n]);
        let mut a = DenseMatrix::zeros(n, n);
        for i in 0..big_n {
            if self.is_generator(i) {
                a[(i, big_n + i)] = 1.0;
                let row = big_n + i;
                let scale = self.omega_r / (2.0 * self.h[i]);
                for j in 0..big_n {
                    a[(row, j)] = scale * jp[(i, j)];
                }
                a[(row, row)] = -self.d[i] / (2.0 * self.h[i]);
            } else {
                let scale = self.omega_r / self.d[i];
                for j in 0..big_n {
                    a[(i, j)] = scale * jp[(i, j)];
                }
            }
        }
        a
    }

    /// Phases relative to generator 0, followed by the generator frequencies.
    /// Removes the rotational mode: every other quantity depends only on phase differences.
    pub fn grounded(&self, state: &[f64]) -> Vec<f64> {
        let big_n = self.oscillators();
        let mut out: Vec<f64> = (1..big_n).map(|i| state[i] - state[0]).collect();
        out.extend_from_slice(&state[big_n..]);
        out
    }

    /// Index of oscillator `i ≠ 0` in grounded coordinates.
    pub fn grounded_index(&self, i: usize) -> usize {
        assert!(i > 0 && i < self.oscillators(), "oscillator 0 is the phase reference");
        i - 1
    }

    /// Linearization in grounded coordinates, `R J L` with `L` inserting `φ_0 = 0`.
    pub fn grounded_linearization(&self, state: &[f64]) -> DenseMatrix {
        let big_n = self.oscillators();
        let n = self.n();
        let jac = self.linearize(state);
        let mut l = DenseMatrix::zeros(n, n - 1);
        for r in 0..n - 1 {
            l[(r + 1, r)] = 1.0;
        }
        let mut rmat = DenseMatrix::zeros(n - 1, n);
        for r in 0..big_n - 1 {
            rmat[(r, r + 1)] = 1.0;
            rmat[(r, 0)] = -1.0;
        }
        for g in 0..self.n_g {
            rmat[(big_n - 1 + g, big_n + g)] = 1.0;
        }
        rmat * jac * l
    }
}

/// What the control center receives from the attacked PMU after the perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Attack {
    None,
    /// The phase measured at a coupled neighbour; `None` picks one at random.
    NeighborCopy { neighbor: Option<usize> },
    ConstantOffset { offset: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub pmu_buses: Vec<usize>,
    pub attacked_bus: usize,
    pub ensemble_size: usize,
    pub subset_size: usize,
    pub t_d_grid: Vec<f64>,
    pub attack: Attack,
    /// Standard deviation of the phase kick given to every generator at `t = 1 s`.
    pub perturbation_sd: f64,
    pub dt: f64,
    pub params: PoleParams,
    pub seed: u64,
}

impl AttackConfig {
    pub fn new(pmu_buses: Vec<usize>, attacked_bus: usize, seed: u64) -> Self {
        let subset_size = (pmu_buses.len() / 2).max(1);
        Self {
            pmu_buses,
            attacked_bus,
            ensemble_size: 100,
            subset_size,
            t_d_grid: vec![0.25, 0.5, 1.0],
            attack: Attack::NeighborCopy { neighbor: None },
            perturbation_sd: 0.1,
            dt: 1e-3,
            params: PoleParams::default(),
            seed,
        }
    }
}

/// `count` distinct non-generator buses drawn from the `pmus` stream; the
/// first one is the attacked bus.
pub fn sample_pmu_buses(grid: &GridModel, count: usize, seed: u64) -> Result<Vec<usize>> {
    let mut buses: Vec<usize> = (grid.n_g..grid.oscillators()).collect();
    if count < 2 || count > buses.len() {
        return Err(GridError::Invalid(format!(
            "need 2 <= PMU count <= {} non-generator buses, got {count}",
            buses.len()
        )));
    }
    buses.shuffle(&mut rng::stream(seed, "pmus"));
    buses.truncate(count);
    Ok(buses)
}

/// Maximum subset draws per requested observer.
pub const SUBSET_DRAWS_PER_OBSERVER: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionReport {
    pub t_d: Vec<f64>,
    /// PMU buses used by each ensemble member.
    pub subsets: Vec<Vec<usize>>,
    pub orders: Vec<usize>,
    /// `[t_d index][observer]`.
    pub clean: Vec<Vec<f64>>,
    pub attacked: Vec<Vec<f64>>,
    /// `median(attacked) − p95(clean)` per `t_d`.
    pub separation: Vec<f64>,
    pub neighbor: Option<usize>,
}

impl DetectionReport {
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t_d,observer_id,scenario,rmse")?;
        for (k, t_d) in self.t_d.iter().enumerate() {
            for (scenario, rows) in [("clean", &self.clean), ("attacked", &self.attacked)] {
                for (id, v) in rows[k].iter().enumerate() {
                    writeln!(out, "{t_d},{id},{scenario},{v}")?;
                }
            }
        }
        Ok(())
    }
}

/// Linear-interpolation quantile of an unsorted sample, `p ∈ [0, 1]`.
pub fn quantile(sample: &[f64], p: f64) -> f64 {
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Kicks the generators' phases at `t = 1 s` from steady state, runs an ensemble
/// of functional observers for `φ_a` built on random halves of the other PMUs,
/// and scores the transmitted `φ_a` stream against each estimate.
pub fn run_attack_experiment(grid: &GridModel, cfg: &AttackConfig) -> Result<DetectionReport> {
    let big_n = grid.oscillators();
    let a = cfg.attacked_bus;
    if cfg.pmu_buses.iter().any(|&b| b < grid.n_g || b >= big_n) {
        return Err(GridError::Invalid("PMUs sit on terminal and load buses only".into()));
    }
    if !cfg.pmu_buses.contains(&a) {
        return Err(GridError::Invalid(format!("attacked bus {a} carries no PMU")));
    }
    let t_max = cfg.t_d_grid.iter().copied().fold(0.0, f64::max);
    if cfg.t_d_grid.is_empty() || cfg.t_d_grid.iter().any(|&t| !(t > 0.0)) {
        return Err(GridError::Invalid("detection windows must be positive".into()));
    }
    let others: Vec<usize> = cfg.pmu_buses.iter().copied().filter(|&b| b != a).collect();
    if cfg.subset_size == 0 || cfg.subset_size > others.len() {
        return Err(GridError::Invalid(format!(
            "subset size {} with {} usable PMUs",
            cfg.subset_size,
            others.len()
        )));
    }

    let eq = grid.solve_equilibrium(None)?;
    let eq_g = grid.grounded(&eq);
    let a_red = grid.grounded_linearization(&eq);
    let a_sparse = SparseMatrix::from_dense(&a_red);
    let nr = a_red.nrows();

    let neighbor = match cfg.attack {
        Attack::NeighborCopy { neighbor: Some(j) } => Some(j),
        Attack::NeighborCopy { neighbor: None } => {
            let candidates: Vec<usize> = grid.k.row(a).filter(|&(_, v)| v > 0.0).map(|(j, _)| j).collect();
            let mut r = rng::stream(cfg.seed, "grid_neighbor");
            Some(*candidates.choose(&mut r).ok_or_else(|| {
                GridError::Invalid(format!("bus {a} has no coupled neighbour"))
            })?)
        }
        _ => None,
    };

    let mut x1 = eq.clone();
    let mut prng = rng::stream(cfg.seed, "grid_perturbation");
    let kick = sim::gaussian_vector(&mut prng, grid.n_g, 0.0, cfg.perturbation_sd);
    for (g, v) in kick.into_iter().enumerate() {
        x1[g] += v;
    }

    let mut srng = rng::stream(cfg.seed, "grid_subsets");
    let mut tried: BTreeSet<Vec<usize>> = BTreeSet::new();
    let mut ensemble: Vec<(Vec<usize>, ObserverRealization)> = Vec::new();
    let max_attempts = SUBSET_DRAWS_PER_OBSERVER * cfg.ensemble_size;
    let mut attempts = 0;
    let mut pool = others.clone();
    while ensemble.len() < cfg.ensemble_size && attempts < max_attempts {
        attempts += 1;
        pool.shuffle(&mut srng);
        let mut subset = pool[..cfg.subset_size].to_vec();
        subset.sort_unstable();
        if !tried.insert(subset.clone()) {
            continue;
        }
        let plant = LinearPlant::new(
            a_sparse.clone(),
            DenseMatrix::zeros(nr, 1),
            subset.iter().map(|&b| grid.grounded_index(b)).collect(),
            vec![grid.grounded_index(a)],
        );
        let Ok(f0) = minimal_f0(&plant.inference_graph()) else { continue };
        if let Ok(obs) = design_functional_observer(&plant, &f0.nodes, cfg.params) {
            ensemble.push((subset, obs));
        }
    }
    if ensemble.len() < cfg.ensemble_size {
        return Err(GridError::InfeasibleSubsets {
            found: ensemble.len(),
            wanted: cfg.ensemble_size,
            attempts,
        });
    }

    let ga = grid.grounded_index(a);
    let mut clean = vec![Vec::new(); cfg.t_d_grid.len()];
    let mut attacked = vec![Vec::new(); cfg.t_d_grid.len()];
    let n = grid.n();
    for (subset, obs) in &ensemble {
        let sensors: Vec<usize> = subset.iter().map(|&b| grid.grounded_index(b)).collect();
        let plant = LinearPlant::new(a_sparse.clone(), DenseMatrix::zeros(nr, 1), sensors.clone(), vec![ga]);
        let mut z0 = x1.clone();
        z0.extend(std::iter::repeat_n(0.0, obs.r0()));
        let deviation = |x: &[f64]| -> Vec<f64> {
            grid.grounded(x).iter().zip(&eq_g).map(|(v, e)| v - e).collect()
        };
        let mut failure = None;
        let rhs = |_t: f64, s: &[f64], ds: &mut [f64]| {
            let (x, w) = s.split_at(n);
            if let Err(e) = grid.swing_rhs(x, &mut ds[..n]) {
                failure = Some(e);
            }
            let y = plant.measure(&deviation(x));
            let dw = &obs.n_mat * DVector::from_column_slice(w) + &obs.j * y;
            ds[n..].copy_from_slice(dw.as_slice());
        };
        let traj = rk4_integrate_sampled(rhs, &z0, 1.0, 1.0 + t_max, cfg.dt, 1)?;
        if let Some(e) = failure {
            return Err(e);
        }
        let mut estimate = Vec::with_capacity(traj.times.len());
        let mut truth = Vec::with_capacity(traj.times.len());
        let mut sent = Vec::with_capacity(traj.times.len());
        for s in &traj.states {
            let (x, w) = s.split_at(n);
            let dev = deviation(x);
            let y = plant.measure(&dev);
            estimate.push(vec![obs.target_estimate(&DVector::from_column_slice(w), &y)[0]]);
            truth.push(vec![dev[ga]]);
            sent.push(vec![match cfg.attack {
                Attack::None => dev[ga],
                Attack::NeighborCopy { .. } => {
                    let j = neighbor.expect("set for neighbour copies");
                    (x[j] - x[0]) - eq_g[ga]
                }
                Attack::ConstantOffset { offset } => dev[ga] + offset,
            }]);
        }
        for (k, &t_d) in cfg.t_d_grid.iter().enumerate() {
            clean[k].push(sim::rmse_window(&traj.times, &truth, &estimate, 1.0, t_d)?);
            attacked[k].push(sim::rmse_window(&traj.times, &sent, &estimate, 1.0, t_d)?);
        }
    }
    let separation = clean
        .iter()
        .zip(&attacked)
        .map(|(c, a)| quantile(a, 0.5) - quantile(c, 0.95))
        .collect();
    Ok(DetectionReport {
        t_d: cfg.t_d_grid.clone(),
        subsets: ensemble.iter().map(|(s, _)| s.clone()).collect(),
        orders: ensemble.iter().map(|(_, o)| o.r0()).collect(),
        clean,
        attacked,
        separation,
        neighbor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eigenvalues;

    fn two_node(k: f64, p: f64) -> GridModel {
        GridModel::from_json(&GridJson {
            n_g: 1,
            n_l: 0,
            k: vec![(0, 1, k)],
            p: vec![p, -p],
            h: vec![4.0],
            d: vec![2.0, 50.0],
            omega_r: 10.0,
        })
        .unwrap()
    }

    #[test]
    fn synchronous_manifold() {
        let mut grid = GridModel::synthetic_30();
        grid.p.iter_mut().for_each(|p| *p = 0.0);
        let n = grid.n();
        let mut x = vec![0.7; n];
        x[grid.oscillators()..].iter_mut().for_each(|w| *w = 0.0);
        let mut out = vec![1.0; n];
        grid.swing_rhs(&x, &mut out).unwrap();
        assert!(out.iter().all(|&v| v.abs() < 1e-12));
        // Frequencies alone decay through damping.
        let big_n = grid.oscillators();
        x[big_n] = 0.5;
        grid.swing_rhs(&x, &mut out).unwrap();
        assert!((out[big_n] + grid.d[0] * 0.5 / (2.0 * grid.h[0])).abs() < 1e-12);
        assert_eq!(out[0], 0.5);
    }

    #[test]
    fn two_node_hand_evaluation() {
        let grid = two_node(3.0, 1.0);
        let x = [0.2, -0.1, 0.4];
        let mut out = [0.0; 3];
        grid.swing_rhs(&x, &mut out).unwrap();
        let s = (-0.1f64 - 0.2).sin();
        assert!((out[0] - 0.4).abs() < 1e-15);
        assert!((out[2] - (10.0 * (1.0 + 3.0 * s) - 2.0 * 0.4) / 8.0).abs() < 1e-14);
        assert!((out[1] - 10.0 * (-1.0 - 3.0 * s) / 50.0).abs() < 1e-14);
    }

    #[test]
    fn equilibria() {
        let eq = two_node(3.0, 1.0).solve_equilibrium(None).unwrap();
        assert!(((eq[0] - eq[1]) - (1.0f64 / 3.0).asin()).abs() < 1e-10);
        assert_eq!(eq[2], 0.0);

        let mut flat = GridModel::synthetic_30();
        flat.p.iter_mut().for_each(|p| *p = 0.0);
        assert!(flat.solve_equilibrium(None).unwrap().iter().all(|v| v.abs() < 1e-12));

        let grid = GridModel::synthetic_30();
        let eq = grid.solve_equilibrium(None).unwrap();
        let mut out = vec![0.0; grid.n()];
        grid.swing_rhs(&eq, &mut out).unwrap();
        assert!(out.iter().all(|v| v.abs() <= 1e-9 * grid.omega_r));
        let big_n = grid.oscillators();
        for i in 0..big_n {
            assert!(grid.net_power(&eq, i).abs() <= 1e-10);
        }

        assert!(matches!(
            two_node(1.0, 2.0).solve_equilibrium(None),
            Err(GridError::NoEquilibrium { .. })
        ));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let grid = GridModel::synthetic_30();
        let mut x = grid.solve_equilibrium(None).unwrap();
        for (i, v) in x.iter_mut().enumerate() {
            *v += 0.05 * ((i as f64) * 1.3).sin();
        }
        let jac = grid.linearize(&x);
        let n = grid.n();
        let h = 1e-6;
        let (mut fp, mut fm) = (vec![0.0; n], vec![0.0; n]);
        for j in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            grid.swing_rhs(&xp, &mut fp).unwrap();
            grid.swing_rhs(&xm, &mut fm).unwrap();
            for i in 0..n {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                assert!((fd - jac[(i, j)]).abs() <= 1e-6 * (1.0 + jac[(i, j)].abs()), "({i},{j})");
            }
        }
    }

    #[test]
    fn uncoupled_jacobian_is_block_diagonal() {
        let mut grid = two_node(3.0, 0.0);
        grid.k = SparseMatrix::from_triplets(2, 2, &[]);
        let jac = grid.linearize(&[0.0, 0.0, 0.0]);
        assert_eq!(jac[(0, 1)], 0.0);
        assert_eq!(jac[(1, 0)], 0.0);
        assert_eq!(jac[(2, 1)], 0.0);
        assert_eq!(jac[(0, 2)], 1.0);
    }

    #[test]
    fn phase_block_rows_sum_to_zero_and_grounded_model_is_stable() {
        let grid = GridModel::synthetic_30();
        let eq = grid.solve_equilibrium(None).unwrap();
        let jac = grid.linearize(&eq);
        let big_n = grid.oscillators();
        for i in 0..grid.n() {
            let s: f64 = (0..big_n).map(|j| jac[(i, j)]).sum();
            assert!(s.abs() <= 1e-9 * (1.0 + jac.row(i).amax()));
        }
        let ev = eigenvalues(&jac).unwrap();
        let zero = ev.iter().filter(|e| e.norm() < 1e-6).count();
        assert_eq!(zero, 1);
        assert!(ev.iter().all(|e| e.re <= 1e-9));
        let red = eigenvalues(&grid.grounded_linearization(&eq)).unwrap();
        assert!(red.iter().all(|e| e.re < -1e-6));
    }

    #[test]
    fn json_round_trip_and_validation() {
        let grid = GridModel::synthetic_30();
        assert_eq!(grid.oscillators(), 30);
        assert_eq!(grid.n(), 36);
        let back = GridModel::from_json_str(&serde_json::to_string(&grid.to_json()).unwrap()).unwrap();
        assert_eq!(back, grid);
        let mut doc = grid.to_json();
        doc.k.push(doc.k[0]);
        assert!(GridModel::from_json(&doc).is_err());
        assert!(GridModel::from_json_str(r#"{"n_g":1}"#).is_err());
    }

    fn small_config(attack: Attack) -> AttackConfig {
        let grid = GridModel::synthetic_30();
        let pmus: Vec<usize> = (grid.n_g..grid.oscillators()).step_by(2).collect();
        let mut cfg = AttackConfig::new(pmus.clone(), pmus[3], 11);
        cfg.ensemble_size = 5;
        cfg.t_d_grid = vec![0.25, 0.5];
        cfg.attack = attack;
        cfg
    }

    #[test]
    fn disabled_attack_changes_nothing() {
        let grid = GridModel::synthetic_30();
        let report = run_attack_experiment(&grid, &small_config(Attack::None)).unwrap();
        assert_eq!(report.clean, report.attacked);
        assert_eq!(report.subsets.len(), 5);
        let distinct: BTreeSet<_> = report.subsets.iter().collect();
        assert_eq!(distinct.len(), 5);
    }

    #[test]
    fn constant_offset_lower_bound() {
        let grid = GridModel::synthetic_30();
        let mut last = 0.0;
        for c in [0.01, 0.1, 1.0] {
            let report =
                run_attack_experiment(&grid, &small_config(Attack::ConstantOffset { offset: c })).unwrap();
            for k in 0..report.t_d.len() {
                for (a, e) in report.attacked[k].iter().zip(&report.clean[k]) {
                    // Minkowski: ‖s + c − ẑ‖ ≥ |c| − ‖s − ẑ‖ on the window.
                    assert!(*a >= c - e - 1e-12);
                }
            }
            let med = quantile(&report.attacked[1], 0.5);
            assert!(med > last);
            last = med;
        }
    }

    #[test]
    fn quantiles() {
        let v = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
    }

    #[test]
    fn csv_layout() {
        let grid = GridModel::synthetic_30();
        let report = run_attack_experiment(&grid, &small_config(Attack::NeighborCopy { neighbor: None })).unwrap();
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t_d,observer_id,scenario,rmse\n"));
        assert_eq!(text.lines().count(), 1 + 2 * 2 * 5);
    }
}
