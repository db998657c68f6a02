//! Fixed-step RK4, plant and observer co-simulation, and error metrics.

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use nalgebra::DVector;
use rand::{Rng, RngExt};
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::design::{LinearPlant, ObserverRealization};
use crate::linalg::SparseMatrix;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("state became non-finite at step {step} (t = {t})")]
    Divergence { step: usize, t: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid step or horizon: {0}")]
    Grid(String),
    #[error("averaging window holds fewer than two samples")]
    EmptyWindow,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;

/// Sampled solution of an initial value problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

/// Classical RK4 from `t0` to `tf`. The last step is shortened to land on `tf`;
/// every `record_every`-th step is stored along with both end points.
pub fn rk4_integrate_sampled<F>(
    mut rhs: F,
    x0: &[f64],
    t0: f64,
    tf: f64,
    dt: f64,
    record_every: usize,
) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if !(dt > 0.0) || !dt.is_finite() || !(tf >= t0) || record_every == 0 {
        return Err(SimError::Grid(format!(
            "dt = {dt}, t0 = {t0}, tf = {tf}, record_every = {record_every}"
        )));
    }
    let n = x0.len();
    let steps = ((tf - t0) / dt * (1.0 - 1e-12)).ceil() as usize;
    let mut x = x0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut times = vec![t0];
    let mut states = vec![x.clone()];
    for step in 0..steps {
        let t = t0 + step as f64 * dt;
        let h = if step + 1 == steps { tf - t } else { dt };
        rhs(t, &x, &mut k1);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        rhs(t + 0.5 * h, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        rhs(t + 0.5 * h, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = x[i] + h * k3[i];
        }
        rhs(t + h, &tmp, &mut k4);
        for i in 0..n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SimError::Divergence { step: step + 1, t: t + h });
        }
        if (step + 1) % record_every == 0 || step + 1 == steps {
            times.push(if step + 1 == steps { tf } else { t + h });
            states.push(x.clone());
        }
    }
    Ok(Trajectory { times, states })
}

pub fn rk4_integrate<F>(rhs: F, x0: &[f64], t0: f64, tf: f64, dt: f64) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    rk4_integrate_sampled(rhs, x0, t0, tf, dt, 1)
}

/// Plant states, target estimates and estimation error norms on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub estimates: Vec<Vec<f64>>,
    /// `‖z − ẑ′‖` per sample.
    pub error_norms: Vec<f64>,
}

impl SimTrace {
    /// Header `t,x0..,zhat0..,err_norm`, one row per sample.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let n = self.states.first().map_or(0, Vec::len);
        let r = self.estimates.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|i| format!("x{i}")));
        header.extend((0..r).map(|i| format!("zhat{i}")));
        header.push("err_norm".into());
        writeln!(out, "{}", header.join(","))?;
        for k in 0..self.times.len() {
            let mut row = vec![self.times[k].to_string()];
            row.extend(self.states[k].iter().map(f64::to_string));
            row.extend(self.estimates[k].iter().map(f64::to_string));
            row.push(self.error_norms[k].to_string());
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn final_error(&self) -> f64 {
        *self.error_norms.last().expect("traces hold at least the initial sample")
    }

    pub fn initial_error(&self) -> f64 {
        self.error_norms[0]
    }

    /// Target values recomputed from the stored plant states.
    pub fn targets(&self, plant: &LinearPlant) -> Vec<Vec<f64>> {
        self.states.iter().map(|x| plant.target_values(x).as_slice().to_vec()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub dt: f64,
    pub tf: f64,
    pub record_every: usize,
}

impl Default for SimOptions {
    /// `dt = 0.01` integrates the plant well, but poles near `-100` need
    /// `dt ≲ 0.027` for RK4 stability; `1e-3` leaves a wide margin.
    fn default() -> Self {
        Self {
            dt: 0.01,
            tf: 4.0,
            record_every: 1,
        }
    }
}

/// Evaluates `f(0..count)` on up to `threads` workers; results come back in
/// index order whatever the completion order.
pub fn parallel_indexed<T, F>(count: usize, threads: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = threads.clamp(1, count.max(1));
    if workers == 1 {
        return (0..count).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..count).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= count {
                    break;
                }
                let value = f(i);
                slots.lock().expect("worker panicked")[i] = Some(value);
            });
        }
    });
    slots
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|v| v.expect("every index evaluated"))
        .collect()
}

/// Constant input `level` on every one of `m` channels from `t = 0`.
pub fn step_input(level: f64, m: usize) -> impl Fn(f64) -> DVector<f64> {
    move |_| DVector::from_element(m, level)
}

/// Integrates `ẋ = A x + B u`, `ẇ = N w + J y + H u` together and reports the
/// target estimate and its error against `z = F x`.
pub fn cosimulate(
    plant: &LinearPlant,
    obs: &ObserverRealization,
    u: &dyn Fn(f64) -> DVector<f64>,
    x0: &[f64],
    w0: &[f64],
    opts: SimOptions,
) -> Result<SimTrace> {
    let n = plant.n();
    let r0 = obs.r0();
    let m = plant.b.ncols();
    let q = plant.sensors.len();
    if x0.len() != n || w0.len() != r0 || obs.j.ncols() != q || obs.h.ncols() != m || obs.h.nrows() != r0 {
        return Err(SimError::Dimension(format!(
            "plant n = {n}, m = {m}, q = {q}; observer r0 = {r0}, J {:?}, H {:?}; x0 {}, w0 {}",
            obs.j.shape(),
            obs.h.shape(),
            x0.len(),
            w0.len()
        )));
    }
    let mut z0 = x0.to_vec();
    z0.extend_from_slice(w0);
    let mut ax = vec![0.0; n];
    let rhs = |t: f64, s: &[f64], ds: &mut [f64]| {
        let (x, w) = s.split_at(n);
        let input = u(t);
        plant.a.mul_vec_into(x, &mut ax);
        let bu = &plant.b * &input;
        for i in 0..n {
            ds[i] = ax[i] + bu[i];
        }
        let y = plant.measure(x);
        let wv = DVector::from_column_slice(w);
        let dw = &obs.n_mat * wv + &obs.j * y + &obs.h * input;
        ds[n..].copy_from_slice(dw.as_slice());
    };
    let traj = rk4_integrate_sampled(rhs, &z0, 0.0, opts.tf, opts.dt, opts.record_every)?;
    let mut trace = SimTrace {
        times: traj.times,
        states: Vec::with_capacity(traj.states.len()),
        estimates: Vec::with_capacity(traj.states.len()),
        error_norms: Vec::with_capacity(traj.states.len()),
    };
    for s in traj.states {
        let (x, w) = s.split_at(n);
        let y = plant.measure(x);
        let zhat = obs.target_estimate(&DVector::from_column_slice(w), &y);
        let z = plant.target_values(x);
        trace.error_norms.push((&z - &zhat).norm());
        trace.estimates.push(zhat.as_slice().to_vec());
        trace.states.push(x.to_vec());
    }
    Ok(trace)
}

/// `sqrt((1/t_d) ∫ ‖a − b‖² dt)` over `[t_start, t_start + t_d]` by the trapezoid
/// rule on the samples inside the window.
pub fn rmse_window(
    times: &[f64],
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    t_start: f64,
    t_d: f64,
) -> Result<f64> {
    if a.len() != times.len() || b.len() != times.len() {
        return Err(SimError::Dimension(format!(
            "{} times, {} and {} samples",
            times.len(),
            a.len(),
            b.len()
        )));
    }
    if !(t_d > 0.0) {
        return Err(SimError::Grid(format!("window length {t_d}")));
    }
    let slack = 1e-9 * (1.0 + t_start.abs() + t_d);
    let inside: Vec<usize> = (0..times.len())
        .filter(|&k| times[k] >= t_start - slack && times[k] <= t_start + t_d + slack)
        .collect();
    if inside.len() < 2 {
        return Err(SimError::EmptyWindow);
    }
    let sq = |k: usize| -> f64 { a[k].iter().zip(&b[k]).map(|(x, y)| (x - y).powi(2)).sum() };
    let integral: f64 = inside
        .windows(2)
        .map(|p| 0.5 * (times[p[1]] - times[p[0]]) * (sq(p[0]) + sq(p[1])))
        .sum();
    Ok((integral / t_d).sqrt())
}

/// Independent Gaussian draws.
pub fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, len: usize, mean: f64, sd: f64) -> Vec<f64> {
    let dist = Normal::new(mean, sd).expect("finite, nonnegative standard deviation");
    (0..len).map(|_| dist.sample(rng)).collect()
}

/// Scales every stored entry by an independent factor from `U[1 − σ/2, 1 + σ/2]`.
pub fn perturb_entries<R: Rng + ?Sized>(a: &SparseMatrix, sigma: f64, rng: &mut R) -> SparseMatrix {
    let triplets: Vec<(usize, usize, f64)> = a
        .triplets()
        .into_iter()
        .map(|(i, j, v)| {
            let factor = if sigma > 0.0 {
                rng.random_range(1.0 - sigma / 2.0..=1.0 + sigma / 2.0)
            } else {
                1.0
            };
            (i, j, v * factor)
        })
        .collect();
    SparseMatrix::from_triplets(a.nrows(), a.ncols(), &triplets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{design_functional_observer, PoleParams};
    use crate::linalg::{expm, DenseMatrix};
    use rand::SeedableRng;
    use rand_pcg::Pcg64;

    #[test]
    fn constant_and_exponential() {
        let t = rk4_integrate(|_, _, dx| dx.fill(0.0), &[1.0, -2.0], 0.0, 1.0, 0.1).unwrap();
        assert!(t.states.iter().all(|x| x == &vec![1.0, -2.0]));
        assert!((t.times.last().unwrap() - 1.0).abs() < 1e-15);

        let t = rk4_integrate(|_, x, dx| dx[0] = -x[0], &[1.0], 0.0, 1.0, 1e-3).unwrap();
        assert!((t.states.last().unwrap()[0] - (-1.0f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn final_step_is_shortened() {
        let t = rk4_integrate(|_, _, dx| dx[0] = 1.0, &[0.0], 0.0, 1.05, 0.1).unwrap();
        assert_eq!(t.times.len(), 12);
        assert!((t.times[11] - 1.05).abs() < 1e-15);
        assert!((t.states[11][0] - 1.05).abs() < 1e-12);
    }

    #[test]
    fn divergence_is_reported() {
        let err = rk4_integrate(|_, x, dx| dx[0] = x[0] * x[0], &[1.0], 0.0, 10.0, 0.1).unwrap_err();
        assert!(matches!(err, SimError::Divergence { .. }), "{err}");
        assert!(rk4_integrate(|_, _, _| {}, &[0.0], 0.0, 1.0, 0.0).is_err());
    }

    pub(crate) fn linear_test_problem() -> (DenseMatrix, Vec<f64>) {
        let a = DenseMatrix::from_row_slice(
            4,
            4,
            &[-1.0, 2.0, 0.0, 0.0, -2.0, -1.0, 0.5, 0.0, 0.0, 0.0, -0.5, 1.0, 0.3, 0.0, 0.0, -2.0],
        );
        (a, vec![1.0, 0.0, -1.0, 0.5])
    }

    /// Observed order from the errors at dt and dt/2.
    pub(crate) fn observed_order(a: &DenseMatrix, x0: &[f64], dt: f64) -> f64 {
        let exact = expm(a).unwrap() * DVector::from_column_slice(x0);
        let err = |h: f64| {
            let t = rk4_integrate(
                |_, x, dx| {
                    let v = a * DVector::from_column_slice(x);
                    dx.copy_from_slice(v.as_slice());
                },
                x0,
                0.0,
                1.0,
                h,
            )
            .unwrap();
            (DVector::from_column_slice(t.states.last().unwrap()) - &exact).norm()
        };
        (err(dt) / err(dt / 2.0)).log2()
    }

    #[test]
    fn fourth_order_convergence() {
        let (a, x0) = linear_test_problem();
        let order = observed_order(&a, &x0, 0.05);
        assert!(order >= 3.9, "{order}");
    }

    #[test]
    fn rmse_examples() {
        let times: Vec<f64> = (0..=1000).map(|k| k as f64 * 1e-3).collect();
        let a: Vec<Vec<f64>> = times.iter().map(|&t| vec![(2.0 * std::f64::consts::PI * t).sin()]).collect();
        let zero = vec![vec![0.0]; times.len()];
        assert_eq!(rmse_window(&times, &a, &a, 0.0, 1.0).unwrap(), 0.0);
        let c: Vec<Vec<f64>> = a.iter().map(|v| vec![v[0] - 3.0]).collect();
        assert!((rmse_window(&times, &a, &c, 0.2, 0.5).unwrap() - 3.0).abs() < 1e-12);
        let v = rmse_window(&times, &a, &zero, 0.0, 1.0).unwrap();
        assert!((v - 0.5f64.sqrt()).abs() < 1e-3);
        assert!(matches!(rmse_window(&times, &a, &zero, 5.0, 1.0), Err(SimError::EmptyWindow)));
    }

    fn chain5_setup() -> (LinearPlant, ObserverRealization) {
        let mut t = vec![];
        for i in 0..5 {
            t.push((i, i, -1.0));
        }
        for i in 0..4 {
            t.push((i + 1, i, 1.0));
        }
        let plant = LinearPlant::new(
            SparseMatrix::from_triplets(5, 5, &t),
            DenseMatrix::from_element(5, 1, 1.0),
            vec![4],
            vec![0],
        );
        let obs = design_functional_observer(&plant, &[0], PoleParams::default()).unwrap();
        (plant, obs)
    }

    #[test]
    fn consistent_start_has_no_error() {
        let (plant, obs) = chain5_setup();
        let x0 = [0.3, -1.0, 2.0, 0.5, -0.2];
        let w0 = obs.consistent_state(&DVector::from_column_slice(&x0));
        let opts = SimOptions { dt: 1e-3, ..Default::default() };
        let trace = cosimulate(&plant, &obs, &step_input(10.0, 1), &x0, w0.as_slice(), opts).unwrap();
        assert!(trace.error_norms.iter().all(|&e| e <= 1e-10));
    }

    #[test]
    fn chain_error_follows_the_observer_pole() {
        // The scalar observer pole of this chain is pinned at -1, so the error is e^{-t} e(0).
        let (plant, obs) = chain5_setup();
        let x0 = [0.3, -1.0, 2.0, 0.5, -0.2];
        let opts = SimOptions { dt: 1e-3, ..Default::default() };
        let trace = cosimulate(&plant, &obs, &step_input(10.0, 1), &x0, &[10.0], opts).unwrap();
        let expected = trace.initial_error() * (-4.0f64).exp();
        assert!((trace.final_error() - expected).abs() <= 1e-8 * trace.initial_error());
    }

    #[test]
    fn input_rotation_leaves_the_error_unchanged() {
        let (plant, obs) = chain5_setup();
        let x0 = [0.3, -1.0, 2.0, 0.5, -0.2];
        let opts = SimOptions { dt: 1e-2, tf: 1.0, record_every: 1 };
        let base = cosimulate(&plant, &obs, &step_input(10.0, 1), &x0, &[10.0], opts).unwrap();
        // Two input channels rotated by an orthogonal Q: B -> [b 0] Q, H -> [h 0] Q, u -> Qᵀ u.
        let (c, s) = (0.6, 0.8);
        let q = DenseMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let mut wide = plant.clone();
        let mut b2 = DenseMatrix::zeros(5, 2);
        b2.set_column(0, &plant.b.column(0));
        wide.b = &b2 * &q;
        let mut obs2 = obs.clone();
        let mut h2 = DenseMatrix::zeros(1, 2);
        h2.set_column(0, &obs.h.column(0));
        obs2.h = &h2 * &q;
        let qt = q.transpose();
        let u = move |_: f64| &qt * DVector::from_column_slice(&[10.0, 0.0]);
        let rotated = cosimulate(&wide, &obs2, &u, &x0, &[10.0], opts).unwrap();
        for (a, b) in base.error_norms.iter().zip(&rotated.error_norms) {
            assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn csv_layout() {
        let (plant, obs) = chain5_setup();
        let opts = SimOptions { dt: 0.5, tf: 1.0, record_every: 1 };
        let trace = cosimulate(&plant, &obs, &step_input(1.0, 1), &[0.0; 5], &[0.0], opts).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x0,x1,x2,x3,x4,zhat0,err_norm");
        assert_eq!(lines.len(), 4);
        assert!(lines[1..].iter().all(|l| l.split(',').count() == 8));
    }

    #[test]
    fn perturbation_bounds() {
        let mut rng = Pcg64::seed_from_u64(5);
        let a = SparseMatrix::from_triplets(3, 3, &[(0, 0, -2.0), (1, 0, 1.0), (2, 1, 4.0)]);
        assert_eq!(perturb_entries(&a, 0.0, &mut rng), a);
        for _ in 0..50 {
            let p = perturb_entries(&a, 0.5, &mut rng);
            for ((_, _, v), (_, _, w)) in a.triplets().into_iter().zip(p.triplets()) {
                let ratio = w / v;
                assert!((0.75..=1.25).contains(&ratio));
            }
        }
    }

    #[test]
    fn parallel_results_keep_index_order() {
        let serial: Vec<usize> = (0..37).map(|i| i * i).collect();
        assert_eq!(parallel_indexed(37, 4, |i| i * i), serial);
        assert_eq!(parallel_indexed(37, 1, |i| i * i), serial);
        assert!(parallel_indexed(0, 3, |i| i).is_empty());
    }
}
