//! Sensor selection: reachability coverage with greedy set cover, an exhaustive
//! oracle for small instances, and greedy placement that shrinks the observer order.

use std::collections::VecDeque;

use thiserror::Error;

use crate::design::{minimal_f0, DesignError};
use crate::graph::{GraphError, InferenceGraph};
use crate::obsv::is_structurally_functionally_observable;

pub const EXACT_CANDIDATE_CAP: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlacementError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error("targets {0:?} reach no candidate sensor")]
    Uncoverable(Vec<usize>),
    #[error("{n} candidates exceed the exhaustive-search cap of {cap}")]
    CapExceeded { n: usize, cap: usize },
    #[error("base sensors do not make the targets structurally functionally observable")]
    InfeasibleBase,
    #[error("q_total = {q_total} is below the {base} base sensors")]
    BelowBase { q_total: usize, base: usize },
}

pub type Result<T> = std::result::Result<T, PlacementError>;

/// For each candidate `x_i`, the targets with a path to `x_i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageTable {
    pub candidates: Vec<usize>,
    /// Sorted target lists, parallel to `candidates`.
    pub sets: Vec<Vec<usize>>,
}

impl CoverageTable {
    pub fn covers(&self, chosen: &[usize], targets: &[usize]) -> bool {
        let mut hit = vec![false; targets.len()];
        for &c in chosen {
            if let Some(i) = self.candidates.iter().position(|&x| x == c) {
                for t in &self.sets[i] {
                    if let Some(k) = targets.iter().position(|x| x == t) {
                        hit[k] = true;
                    }
                }
            }
        }
        hit.into_iter().all(|h| h)
    }
}

fn check_candidates(g: &InferenceGraph, candidates: &[usize]) -> Result<()> {
    for &c in candidates {
        if c >= g.n() {
            return Err(GraphError::IndexOutOfRange { index: c, n: g.n() }.into());
        }
    }
    Ok(())
}

/// One forward search per target; candidate `x_i` collects every target reaching it.
pub fn coverage_sets(g: &InferenceGraph, candidates: &[usize]) -> Result<CoverageTable> {
    check_candidates(g, candidates)?;
    let n = g.n();
    let mut slot = vec![usize::MAX; n];
    for (i, &c) in candidates.iter().enumerate() {
        slot[c] = i;
    }
    let mut sets = vec![Vec::new(); candidates.len()];
    let mut stamp = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    let mut targets = g.targets().to_vec();
    targets.sort_unstable();
    for (ti, &t) in targets.iter().enumerate() {
        stamp[t] = ti;
        queue.push_back(t);
        while let Some(v) = queue.pop_front() {
            if slot[v] != usize::MAX {
                sets[slot[v]].push(t);
            }
            for &w in g.influenced(v) {
                if stamp[w] != ti {
                    stamp[w] = ti;
                    queue.push_back(w);
                }
            }
        }
    }
    Ok(CoverageTable {
        candidates: candidates.to_vec(),
        sets,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GreedyPlacement {
    pub sensors: Vec<usize>,
    /// Newly covered targets at each step; non-increasing.
    pub gains: Vec<usize>,
}

fn uncoverable(g: &InferenceGraph, table: &CoverageTable) -> Vec<usize> {
    let mut covered = vec![false; g.n()];
    for set in &table.sets {
        for &t in set {
            covered[t] = true;
        }
    }
    let mut missing: Vec<usize> = g.targets().iter().copied().filter(|&t| !covered[t]).collect();
    missing.sort_unstable();
    missing
}

/// Repeatedly adds the candidate covering the most uncovered targets, lowest index on ties.
pub fn greedy_sensor_placement(g: &InferenceGraph, candidates: &[usize]) -> Result<GreedyPlacement> {
    let table = coverage_sets(g, candidates)?;
    let missing = uncoverable(g, &table);
    if !missing.is_empty() {
        return Err(PlacementError::Uncoverable(missing));
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by_key(|&i| candidates[i]);
    order.dedup_by_key(|i| candidates[*i]);

    let mut covered = vec![false; g.n()];
    let mut remaining = g.targets().len();
    let mut sensors = Vec::new();
    let mut gains = Vec::new();
    while remaining > 0 {
        let mut best: Option<(usize, usize)> = None;
        for &i in &order {
            let gain = table.sets[i].iter().filter(|&&t| !covered[t]).count();
            if gain > best.map_or(0, |b| b.1) {
                best = Some((i, gain));
            }
        }
        let (i, gain) = best.expect("every target is coverable");
        for &t in &table.sets[i] {
            covered[t] = true;
        }
        remaining -= gain;
        sensors.push(candidates[i]);
        gains.push(gain);
    }
    debug_assert!(table.covers(&sensors, g.targets()));
    Ok(GreedyPlacement { sensors, gains })
}

/// Smallest cover by enumerating subsets in increasing size, lexicographic within a size.
pub fn min_sensors_exact(g: &InferenceGraph, candidates: &[usize]) -> Result<Vec<usize>> {
    let mut cands = candidates.to_vec();
    cands.sort_unstable();
    cands.dedup();
    if cands.len() > EXACT_CANDIDATE_CAP {
        return Err(PlacementError::CapExceeded {
            n: cands.len(),
            cap: EXACT_CANDIDATE_CAP,
        });
    }
    let table = coverage_sets(g, &cands)?;
    let missing = uncoverable(g, &table);
    if !missing.is_empty() {
        return Err(PlacementError::Uncoverable(missing));
    }
    let mut targets = g.targets().to_vec();
    targets.sort_unstable();
    if targets.len() > 64 {
        // More targets than mask bits: fall back to the table check.
        return exact_by_table(&table, &cands, &targets);
    }
    let masks: Vec<u64> = table
        .sets
        .iter()
        .map(|set| {
            set.iter()
                .map(|t| 1u64 << targets.binary_search(t).expect("is a target"))
                .fold(0, |a, b| a | b)
        })
        .collect();
    let full: u64 = if targets.len() == 64 { u64::MAX } else { (1u64 << targets.len()) - 1 };
    for size in 0..=cands.len() {
        let mut pick: Vec<usize> = (0..size).collect();
        loop {
            if pick.iter().fold(0u64, |a, &i| a | masks[i]) == full {
                return Ok(pick.iter().map(|&i| cands[i]).collect());
            }
            if !next_combination(&mut pick, cands.len()) {
                break;
            }
        }
    }
    unreachable!("the full candidate set covers every target")
}

fn exact_by_table(table: &CoverageTable, cands: &[usize], targets: &[usize]) -> Result<Vec<usize>> {
    for size in 0..=cands.len() {
        let mut pick: Vec<usize> = (0..size).collect();
        loop {
            let chosen: Vec<usize> = pick.iter().map(|&i| cands[i]).collect();
            if table.covers(&chosen, targets) {
                return Ok(chosen);
            }
            if !next_combination(&mut pick, cands.len()) {
                break;
            }
        }
    }
    unreachable!("the full candidate set covers every target")
}

/// Advances `pick` to the next `k`-combination of `0..n` in lexicographic order.
fn next_combination(pick: &mut [usize], n: usize) -> bool {
    let k = pick.len();
    for i in (0..k).rev() {
        if pick[i] < n - k + i {
            pick[i] += 1;
            for j in i + 1..k {
                pick[j] = pick[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Adds sensors one by one, each time the candidate giving the smallest observer
/// order (lowest index on ties), until `q_total` sensors are placed. Targets and
/// current sensors are never candidates.
pub fn order_minimizing_placement(
    g: &InferenceGraph,
    base_sensors: &[usize],
    candidates: &[usize],
    q_total: usize,
) -> Result<Vec<usize>> {
    check_candidates(g, candidates)?;
    if q_total < base_sensors.len() {
        return Err(PlacementError::BelowBase {
            q_total,
            base: base_sensors.len(),
        });
    }
    let with = |sensors: &[usize]| g.clone().with_sensors(sensors.to_vec());
    if !is_structurally_functionally_observable(&with(base_sensors)?) {
        return Err(PlacementError::InfeasibleBase);
    }
    let mut sensors = base_sensors.to_vec();
    let mut pool: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|c| !g.targets().contains(c))
        .collect();
    pool.sort_unstable();
    pool.dedup();
    while sensors.len() < q_total {
        let mut best: Option<(usize, usize)> = None;
        for &c in &pool {
            if sensors.contains(&c) {
                continue;
            }
            sensors.push(c);
            let r0 = minimal_f0(&with(&sensors)?)?.r0();
            sensors.pop();
            if best.is_none_or(|b| r0 < b.1) {
                best = Some((c, r0));
            }
        }
        match best {
            Some((c, _)) => sensors.push(c),
            None => break,
        }
    }
    Ok(sensors)
}
