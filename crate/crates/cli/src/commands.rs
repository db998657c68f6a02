use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, ValueEnum};
use nalgebra::DVector;
use netobserve::design::{self, LinearPlant, PoleParams};
use netobserve::epidemics::{self, EpidemicScenario, PeakConfig, PeakMethod};
use netobserve::graph::InferenceGraph;
use netobserve::netgen;
use netobserve::obsv::{self, NumericSystem};
use netobserve::placement;
use netobserve::powergrid::{self, Attack, AttackConfig, GridModel};
use netobserve::rng;
use netobserve::scenario::{self, SwParams};
use netobserve::sim::{self, SimOptions};
use serde::Serialize;
use serde_json::json;

use crate::config::{emit, emit_json, input_digest, require_path, worker_threads, Header, PoleFlags, RunConfig};
use crate::error::{CliError, Result};
use crate::inputs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    /// Newman-Watts small world.
    Sw,
    /// Barabasi-Albert scale free.
    Sf,
}

#[derive(Debug, Args, Serialize)]
pub struct NetgenArgs {
    #[arg(long, value_enum)]
    pub model: Model,
    /// Number of vertices.
    #[arg(long)]
    pub n: usize,
    /// Shortcut probability per ring edge (sw).
    #[arg(long, default_value_t = 0.0)]
    pub p: f64,
    /// Links added per new vertex (sf).
    #[arg(long)]
    pub m: Option<usize>,
    /// Ring degree, even (sw).
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    /// Orient every edge at random.
    #[arg(long)]
    pub directed: bool,
    #[arg(long)]
    #[serde(skip)]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

pub fn netgen(cfg: &RunConfig, a: &NetgenArgs) -> Result<()> {
    let seed = cfg.seed(a.seed);
    let net = match a.model {
        Model::Sw => netgen::newman_watts(a.n, a.k, a.p, seed)?,
        Model::Sf => {
            let m = a.m.ok_or_else(|| CliError::Usage("--model sf needs --m".into()))?;
            netgen::barabasi_albert(a.n, m, seed)?
        }
    };
    let net = if a.directed { netgen::orient_randomly(&net, seed)? } else { net };
    let header = Header::new("netgen", seed, a);
    let mut text = header.comment_block();
    text.push_str(&netgen::format_edge_list(&net));
    emit(a.out.as_deref().or(cfg.paths.out.as_deref()), text.as_bytes())
}

#[derive(Debug, Args, Serialize)]
pub struct GraphInputs {
    /// Directed edge list `src dst [weight]`; `src` influences `dst`.
    #[arg(long)]
    #[serde(skip)]
    pub graph: Option<PathBuf>,
    /// Node count when trailing nodes have no edges.
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    #[serde(skip)]
    pub sensors: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub targets: Option<PathBuf>,
}

impl GraphInputs {
    fn network(&self, cfg: &RunConfig) -> Result<netgen::NetworkModel> {
        inputs::read_network(&require_path(&self.graph, &cfg.paths.graph, "graph")?, self.nodes)
    }

    fn sensors(&self, cfg: &RunConfig) -> Result<Vec<usize>> {
        match self.sensors.as_ref().or(cfg.paths.sensors.as_ref()) {
            Some(p) => inputs::read_index_list(p),
            None => Ok(Vec::new()),
        }
    }

    fn targets(&self, cfg: &RunConfig) -> Result<Vec<usize>> {
        inputs::read_index_list(&require_path(&self.targets, &cfg.paths.targets, "targets")?)
    }

    /// Input files in a fixed order, for the artifact digest.
    fn paths(&self, cfg: &RunConfig) -> Vec<PathBuf> {
        [
            self.graph.as_ref().or(cfg.paths.graph.as_ref()),
            self.sensors.as_ref().or(cfg.paths.sensors.as_ref()),
            self.targets.as_ref().or(cfg.paths.targets.as_ref()),
        ]
        .into_iter()
        .flatten()
        .cloned()
        .collect()
    }

    fn graph(&self, cfg: &RunConfig) -> Result<InferenceGraph> {
        let g = inputs::inference_graph(&self.network(cfg)?)?;
        Ok(g.with_sensors(self.sensors(cfg)?)?.with_targets(self.targets(cfg)?)?)
    }
}

#[derive(Debug, Args, Serialize)]
pub struct CheckArgs {
    #[command(flatten)]
    pub inputs: GraphInputs,
    /// Also run the rank test on random realizations (majority of three).
    #[arg(long)]
    pub numeric: bool,
    #[arg(long)]
    #[serde(skip)]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

/// Realizations voted on by `check --numeric`.
const NUMERIC_VOTES: u64 = 3;

pub fn check(cfg: &RunConfig, a: &CheckArgs) -> Result<()> {
    let seed = cfg.seed(a.seed);
    let g = a.inputs.graph(cfg)?;
    let report = obsv::structural_report(&g);
    let mut uncovered: Vec<usize> = report
        .unreachable_targets
        .iter()
        .chain(&report.dilated_targets)
        .copied()
        .collect();
    uncovered.sort_unstable();
    uncovered.dedup();
    let opts = cfg.numeric_options();
    let numeric = if a.numeric {
        let mut yes = 0;
        for i in 0..NUMERIC_VOTES {
            let sys = NumericSystem::realize(&g, &mut rng::replicate(seed, "check", i));
            yes += u64::from(obsv::is_functionally_observable_numeric(&sys, opts)?);
        }
        Some(2 * yes > NUMERIC_VOTES)
    } else {
        None
    };
    let header = Header::new(
        "check",
        seed,
        &json!({
            "args": a,
            "inputs": input_digest(&a.inputs.paths(cfg))?,
            "numeric_options": { "cap": opts.cap, "tol": opts.tol },
        }),
    );
    let doc = header.wrap(json!({
        "structural": report.holds(),
        "numeric": numeric,
        "uncovered_targets": uncovered,
    }))?;
    emit_json(a.out.as_deref().or(cfg.paths.out.as_deref()), &doc)
}

#[derive(Debug, Args, Serialize)]
pub struct PlaceArgs {
    #[command(flatten)]
    pub inputs: GraphInputs,
    /// Allowed sensor nodes; all nodes when omitted.
    #[arg(long)]
    #[serde(skip)]
    pub candidates: Option<PathBuf>,
    /// Exhaustive minimum instead of the greedy cover.
    #[arg(long)]
    pub exact: bool,
    #[arg(long)]
    #[serde(skip)]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

pub fn place(cfg: &RunConfig, a: &PlaceArgs) -> Result<()> {
    let seed = cfg.seed(a.seed);
    let g = a.inputs.graph(cfg)?;
    let candidates = match a.candidates.as_ref().or(cfg.paths.candidates.as_ref()) {
        Some(p) => inputs::read_index_list(p)?,
        None => (0..g.n()).collect(),
    };
    let (sensors, gains) = if a.exact {
        (placement::min_sensors_exact(&g, &candidates)?, None)
    } else {
        let greedy = placement::greedy_sensor_placement(&g, &candidates)?;
        (greedy.sensors, Some(greedy.gains))
    };
    let f0 = design::minimal_f0(&g.clone().with_sensors(sensors.clone())?)?;
    let mut files = a.inputs.paths(cfg);
    files.extend(a.candidates.as_ref().or(cfg.paths.candidates.as_ref()).cloned());
    let header = Header::new("place", seed, &json!({ "args": a, "inputs": input_digest(&files)? }));
    let doc = header.wrap(json!({
        "method": if a.exact { "exact" } else { "greedy" },
        "sensors": sensors,
        "gains": gains,
        "r0": f0.r0(),
    }))?;
    emit_json(a.out.as_deref().or(cfg.paths.out.as_deref()), &doc)
}

#[derive(Debug, Args, Serialize)]
pub struct PlantInputs {
    /// Plant bundle JSON; alternatively give `--graph` with weighted edges.
    #[arg(long, conflicts_with = "graph")]
    #[serde(skip)]
    pub plant: Option<PathBuf>,
    #[command(flatten)]
    pub graph: GraphInputs,
    /// Rows of `F0`; the minimal set is computed when omitted.
    #[arg(long)]
    #[serde(skip)]
    pub f0: Option<PathBuf>,
    /// Design a reduced-order Luenberger observer instead.
    #[arg(long)]
    pub luenberger: bool,
    #[command(flatten)]
    pub poles: PoleFlags,
}

impl PlantInputs {
    fn plant(&self, cfg: &RunConfig) -> Result<LinearPlant> {
        match self.plant.as_ref().or(cfg.paths.plant.as_ref()) {
            Some(p) if self.graph.graph.is_none() => inputs::read_plant(p),
            _ => {
                let net = self.graph.network(cfg)?;
                inputs::plant_from_network(&net, self.graph.sensors(cfg)?, self.graph.targets(cfg)?)
            }
        }
    }

    fn paths(&self, cfg: &RunConfig) -> Vec<PathBuf> {
        let mut files = match self.plant.as_ref().or(cfg.paths.plant.as_ref()) {
            Some(p) if self.graph.graph.is_none() => vec![p.clone()],
            _ => self.graph.paths(cfg),
        };
        files.extend(self.f0.as_ref().or(cfg.paths.f0.as_ref()).cloned());
        files
    }

    fn observer(&self, cfg: &RunConfig, plant: &LinearPlant) -> Result<(design::ObserverRealization, PoleParams)> {
        let params = cfg.pole_params(&self.poles, PoleParams::default());
        if self.luenberger {
            return Ok((design::design_luenberger(plant, params)?, params));
        }
        let f0 = match self.f0.as_ref().or(cfg.paths.f0.as_ref()) {
            Some(p) => inputs::read_index_list(p)?,
            None => design::minimal_f0(&plant.inference_graph())?.nodes,
        };
        Ok((design::design_functional_observer(plant, &f0, params)?, params))
    }
}

#[derive(Debug, Args, Serialize)]
pub struct DesignArgs {
    #[command(flatten)]
    pub plant: PlantInputs,
    #[arg(long)]
    #[serde(skip)]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

pub fn design(cfg: &RunConfig, a: &DesignArgs) -> Result<()> {
    let seed = cfg.seed(a.seed);
    let plant = a.plant.plant(cfg)?;
    let (obs, params) = a.plant.observer(cfg, &plant)?;
    let header = Header::new(
        "design",
        seed,
        &json!({ "args": a, "inputs": input_digest(&a.plant.paths(cfg))?, "params": params }),
    );
    let mut doc = header.wrap(obs.to_json())?;
    doc["diagnostics"] = json!({
        "spectral_abscissa": obs.spectral_abscissa,
        "alpha_used": obs.alpha_used,
        "uncontrollable_dim": obs.uncontrollable_dim,
    });
    emit_json(a.out.as_deref().or(cfg.paths.out.as_deref()), &doc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ObserverStart {
    /// `w0 = T x0`: zero estimation error from the start.
    Consistent,
    Zero,
    /// Standard normal entries.
    Random,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub plant: PlantInputs,
    #[arg(long, value_enum, default_value_t = ObserverStart::Random)]
    pub w0: ObserverStart,
    /// Constant level on every input channel.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub input_level: f64,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub tf: Option<f64>,
    /// Write one row every this many steps.
    #[arg(long, default_value_t = 10)]
    pub record_every: usize,
    #[arg(long)]
    #[serde(skip)]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

pub fn simulate(cfg: &RunConfig, a: &SimulateArgs) -> Result<()> {
    let seed = cfg.seed(a.seed);
    let opts = SimOptions {
        dt: cfg.dt(a.dt, 1e-3),
        tf: cfg.tf(a.tf, 4.0),
        record_every: a.record_every,
    };
    if !(opts.dt > 0.0 && opts.tf > 0.0) || opts.record_every == 0 {
        return Err(CliError::Usage("dt, tf and --record-every must be positive".into()));
    }
    let plant = a.plant.plant(cfg)?;
    let (obs, params) = a.plant.observer(cfg, &plant)?;
    let x0 = sim::gaussian_vector(&mut rng::stream(seed, "sim_x0"), plant.n(), 0.0, 1.0);
    let w0 = match a.w0 {
        ObserverStart::Consistent => obs.consistent_state(&DVector::from_column_slice(&x0)).as_slice().to_vec(),
        ObserverStart::Zero => vec![0.0; obs.r0()],
        ObserverStart::Random => sim::gaussian_vector(&mut rng::stream(seed, "sim_w0"), obs.r0(), 0.0, 1.0),
    };
    let input = sim::step_input(a.input_level, plant.b.ncols());
    let trace = sim::cosimulate(&plant, &obs, &input, &x0, &w0, opts)?;
    let header = Header::new(
        "simulate",
        seed,
        &json!({
            "args": a,
            "inputs": input_digest(&a.plant.paths(cfg))?,
            "params": params,
            "dt": opts.dt,
            "tf": opts.tf,
        }),
    );
    let mut bytes = header.comment_block().into_bytes();
    trace.write_csv(&mut bytes)?;
    emit(a.out.as_deref().or(cfg.paths.out.as_deref()), &bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    None,
    /// Transmit the phase measured at a coupled neighbour.
    Neighbor,
    /// Add a constant offset to the transmitted phase.
    Offset,
}

#[derive(Debug, Args, Serialize)]
pub struct PowergridArgs {
    /// Grid JSON; the bundled synthetic 30-bus grid when omitted.
    #[arg(long)]
    #[serde(skip)]
    pub grid: Option<PathBuf>,
    /// Number of PMU buses drawn among the non-generator buses.
    #[arg(long, default_value_t = 12)]
    pub pmus: usize,
    /// Explicit PMU buses; the first one is attacked.
    #[arg(long, value_delimiter = ',', conflicts_with = "pmus")]
    pub pmu_buses: Option<Vec<usize>>,
    #[arg(long, default_value_t = 100)]
    pub ensemble: usize,
    #[arg(long, value_enum, default_value_t = AttackKind::Neighbor)]
    pub attack: AttackKind,
    /// Copied neighbour; random when omitted.
    #[arg(long)]
    pub neighbor: Option<usize>,
    #[arg(long, default_value_t = 0.1, allow_hyphen_values = true)]
    pub offset: f64,
    /// Detection windows in seconds.
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,1.0")]
    pub t_d: Vec<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[command(flatten)]
    pub poles: PoleFlags,
    #[arg(long)]
    #[serde(skip)]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

pub fn powergrid(cfg: &RunConfig, a: &PowergridArgs) -> Result<()> {
    let seed = cfg.seed(a.seed);
    let grid = match a.grid.as_ref().or(cfg.paths.grid.as_ref()) {
        Some(p) => GridModel::load(p)?,
        None => GridModel::synthetic_30(),
    };
    let pmus = match &a.pmu_buses {
        Some(list) => list.clone(),
        None => powergrid::sample_pmu_buses(&grid, a.pmus, seed)?,
    };
    let attacked = *pmus.first().ok_or_else(|| CliError::Usage("--pmu-buses is empty".into()))?;
    let mut ac = AttackConfig::new(pmus, attacked, seed);
    ac.ensemble_size = a.ensemble;
    ac.t_d_grid = a.t_d.clone();
    ac.attack = match a.attack {
        AttackKind::None => Attack::None,
        AttackKind::Neighbor => Attack::NeighborCopy { neighbor: a.neighbor },
        AttackKind::Offset => Attack::ConstantOffset { offset: a.offset },
    };
    ac.dt = cfg.dt(a.dt, ac.dt);
    ac.params = cfg.pole_params(&a.poles, ac.params);
    let report = powergrid::run_attack_experiment(&grid, &ac)?;
    for (k, t_d) in report.t_d.iter().enumerate() {
        eprintln!(
            "t_d = {t_d}: median attacked {:.4e}, p95 clean {:.4e}, separation {:.4e}",
            powergrid::quantile(&report.attacked[k], 0.5),
            powergrid::quantile(&report.clean[k], 0.95),
            report.separation[k]
        );
    }
    let header = Header::new(
        "powergrid",
        seed,
        &json!({ "args": a, "grid": grid.to_json(), "attacked": attacked, "dt": ac.dt, "params": ac.params }),
    );
    let mut bytes = header.comment_block().into_bytes();
    report.write_csv(&mut bytes)?;
    emit(a.out.as_deref().or(cfg.paths.out.as_deref()), &bytes)
}

#[derive(Debug, Args, Serialize)]
pub struct EpidemicArgs {
    /// Scenario JSON; the bundled synthetic 30-city scenario when omitted.
    #[arg(long)]
    #[serde(skip)]
    pub scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// Horizon in days.
    #[arg(long)]
    pub tf: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Spacing in days of the samples peaks are read from.
    #[arg(long, default_value_t = 0.1)]
    pub output_step: f64,
    /// Infected count of the false initial outbreak.
    #[arg(long, default_value_t = 1.0)]
    pub guess_size: f64,
    #[command(flatten)]
    pub poles: PoleFlags,
    #[arg(long)]
    #[serde(skip)]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

pub fn epidemic(cfg: &RunConfig, a: &EpidemicArgs) -> Result<()> {
    let seed = cfg.seed(a.seed);
    let scenario = match a.scenario.as_ref().or(cfg.paths.scenario.as_ref()) {
        Some(p) => EpidemicScenario::load(p)?,
        None => EpidemicScenario::synthetic_30(),
    };
    let defaults = PeakConfig::default();
    let pc = PeakConfig {
        n_trials: a.trials,
        tf: cfg.tf(a.tf, defaults.tf),
        dt: cfg.dt(a.dt, defaults.dt),
        output_step: a.output_step,
        guess_size: a.guess_size,
        pole: Some(cfg.pole_params(&a.poles, epidemics::default_pole_params(&scenario.model))),
        seed,
        threads: worker_threads()?,
    };
    let report = epidemics::peak_prediction_experiment(&scenario, &pc)?;
    let improved = (0..report.targets.len())
        .filter(|&k| match (report.iqr(PeakMethod::Observer, k), report.iqr(PeakMethod::Freerun, k)) {
            (Some(o), Some(f)) => o < f,
            _ => false,
        })
        .count();
    eprintln!(
        "observer order {}; observer IQR below free-run IQR for {improved} of {} targets",
        report.r0,
        report.targets.len()
    );
    let header = Header::new(
        "epidemic",
        seed,
        &json!({
            "args": a,
            "scenario": scenario.to_json(),
            "tf": pc.tf,
            "dt": pc.dt,
            "pole": pc.pole,
        }),
    );
    let mut bytes = header.comment_block().into_bytes();
    report.write_csv(&mut bytes)?;
    emit(a.out.as_deref().or(cfg.paths.out.as_deref()), &bytes)
}

#[derive(Debug, Args, Serialize)]
pub struct BenchArgs {
    /// State dimensions: `lo..hi` (log-spaced, see --points) or a comma list.
    #[arg(long, default_value = "3e3..3e4")]
    pub sizes: String,
    #[arg(long, default_value_t = 5)]
    pub points: usize,
    /// Timed repetitions per size; the fastest is reported.
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    /// Shortcut probability of the directed small world.
    #[arg(long, default_value_t = 0.2)]
    pub p: f64,
    #[arg(long)]
    #[serde(skip)]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

fn parse_size(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite() && *v >= 3.0)
        .ok_or_else(|| CliError::Usage(format!("invalid size {s:?}")))
}

/// State dimensions (multiples of three, one vertex per three states).
pub fn parse_sizes(text: &str, points: usize) -> Result<Vec<usize>> {
    let raw: Vec<f64> = if let Some((lo, hi)) = text.split_once("..") {
        let (lo, hi) = (parse_size(lo)?, parse_size(hi)?);
        if hi < lo || points < 2 {
            return Err(CliError::Usage(format!("need lo <= hi and --points >= 2 for {text:?}")));
        }
        (0..points)
            .map(|i| lo * (hi / lo).powf(i as f64 / (points - 1) as f64))
            .collect()
    } else {
        text.split(',').map(parse_size).collect::<Result<_>>()?
    };
    let mut sizes: Vec<usize> = raw.iter().map(|&v| 3 * ((v / 3.0).round() as usize).max(1)).collect();
    sizes.dedup();
    Ok(sizes)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

pub fn bench(cfg: &RunConfig, a: &BenchArgs) -> Result<()> {
    let seed = cfg.seed(a.seed);
    let sizes = parse_sizes(&a.sizes, a.points)?;
    if a.reps == 0 {
        return Err(CliError::Usage("--reps must be positive".into()));
    }
    let header = Header::new("bench", seed, a);
    let mut text = header.comment_block();
    text.push_str("n,seconds,r0\n");
    let mut points = Vec::new();
    for &n in &sizes {
        let params = SwParams {
            p: a.p,
            ..SwParams::standard(n / 3)
        };
        let plant = scenario::directed_sw(params, seed)?;
        let g = plant.inference_graph();
        let mut best = f64::INFINITY;
        let mut r0 = 0;
        for _ in 0..a.reps {
            let start = Instant::now();
            let f0 = design::minimal_f0(&g)?;
            best = best.min(start.elapsed().as_secs_f64());
            r0 = f0.r0();
        }
        eprintln!("n = {n}: {best:.4} s, r0 = {r0}");
        text.push_str(&format!("{n},{best},{r0}\n"));
        points.push((n as f64, best));
    }
    if points.len() >= 2 {
        eprintln!("log-log slope: {:.3}", loglog_slope(&points));
    }
    emit(a.out.as_deref().or(cfg.paths.out.as_deref()), text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_ranges_are_log_spaced_multiples_of_three() {
        assert_eq!(parse_sizes("3e3..3e4", 2).unwrap(), vec![3000, 30000]);
        let s = parse_sizes("3e3..3e4", 5).unwrap();
        assert_eq!(s.len(), 5);
        assert!(s.iter().all(|n| n % 3 == 0));
        assert!(s.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(parse_sizes("30,61", 0).unwrap(), vec![30, 60]);
        assert!(parse_sizes("1e4..1e3", 3).is_err());
        assert!(parse_sizes("abc", 3).is_err());
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [1.0, 2.0, 4.0, 8.0].iter().map(|&x| (x, 3.0 * x * x)).collect();
        assert!((loglog_slope(&pts) - 2.0).abs() < 1e-12);
    }
}
