//! Randomized network instances: an expanded directed small-world plant with
//! targets and sensors drawn among the first coordinates of the vertices.

use rand::seq::SliceRandom;

use crate::design::LinearPlant;
use crate::linalg::DenseMatrix;
use crate::netgen::{self, NetgenError};
use crate::placement::{self, PlacementError};
use crate::rng;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Netgen(#[from] NetgenError),
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error("{0}")]
    Parameters(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwParams {
    pub vertices: usize,
    pub p: f64,
    pub q: usize,
    pub r: usize,
    pub lambda_range: (f64, f64),
}

impl SwParams {
    /// `q = 0.3 N`, `r = 0.1 N`, `p = 0.2`, `λ ~ U[2, 5]`.
    pub fn standard(vertices: usize) -> Self {
        Self {
            vertices,
            p: 0.2,
            q: (3 * vertices).div_ceil(10),
            r: vertices.div_ceil(10),
            lambda_range: (2.0, 5.0),
        }
    }
}

/// Target draws that leave some target unable to reach a non-target first
/// coordinate are discarded and redrawn, at most this many times.
pub const MAX_TARGET_DRAWS: usize = 1000;

/// Targets are `r` random first coordinates of vertices with an outgoing link
/// (a sink vertex reaches no other vertex, so no sensor could cover it).
/// Sensors start from a greedy minimum cover over the remaining first
/// coordinates and are topped up with random ones until there are `q` (the
/// cover is kept even if larger than `q`).
pub fn directed_sw(params: SwParams, seed: u64) -> Result<LinearPlant, ScenarioError> {
    let SwParams { vertices, p, q, r, lambda_range } = params;
    if r == 0 || r + q > vertices {
        return Err(ScenarioError::Parameters(format!(
            "need 0 < r and r + q <= N (N = {vertices}, q = {q}, r = {r})"
        )));
    }
    let net = netgen::orient_randomly(&netgen::newman_watts(vertices, 2, p, seed)?, seed)?;
    let sys = netgen::expand_subsystems(&net, lambda_range, seed);
    let n = sys.a.nrows();
    let mut rng = rng::stream(seed, "sw_selection");
    let b = DenseMatrix::from_element(n, 1, 1.0);
    let mut has_out = vec![false; vertices];
    for &(u, v) in &net.edges {
        has_out[u] = true;
        if !net.directed {
            has_out[v] = true;
        }
    }
    let eligible: Vec<usize> = (0..vertices)
        .filter(|&v| has_out[v])
        .map(|v| sys.first_coordinates[v])
        .collect();
    if eligible.len() < r {
        return Err(ScenarioError::Parameters(format!(
            "only {} vertices have an outgoing link, need r = {r}",
            eligible.len()
        )));
    }
    let mut last_err = None;
    for _ in 0..MAX_TARGET_DRAWS {
        let mut drawn = eligible.clone();
        drawn.shuffle(&mut rng);
        let targets = drawn[..r].to_vec();
        let mut pool: Vec<usize> = sys
            .first_coordinates
            .iter()
            .copied()
            .filter(|f| !targets.contains(f))
            .collect();
        let probe = LinearPlant::new(sys.a.clone(), b.clone(), vec![], targets.clone());
        let mut sensors = match placement::greedy_sensor_placement(&probe.inference_graph(), &pool) {
            Ok(cover) => cover.sensors,
            Err(e @ PlacementError::Uncoverable(_)) => {
                last_err = Some(e);
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        pool.retain(|c| !sensors.contains(c));
        pool.shuffle(&mut rng);
        let missing = q.saturating_sub(sensors.len());
        sensors.extend(pool.into_iter().take(missing));
        return Ok(LinearPlant::new(sys.a, b, sensors, targets));
    }
    Err(last_err.expect("at least one draw").into())
}
