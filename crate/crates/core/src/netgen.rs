//! Network generators, random orientation, expansion of vertices into
//! three-state subsystems, generalized clustering and edge-list files.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::RngExt;
use thiserror::Error;

use crate::linalg::SparseMatrix;
use crate::rng;

#[derive(Debug, Error)]
pub enum NetgenError {
    #[error("invalid parameters: {0}")]
    Parameters(String),
    #[error("network is already directed")]
    AlreadyDirected,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("node index {index} exceeds the supported range")]
    IndexOverflow { index: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NetgenError>;

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub n: usize,
    /// For undirected networks each edge is stored once with `u < v`.
    pub edges: Vec<(usize, usize)>,
    pub weights: Option<Vec<f64>>,
    pub directed: bool,
}

impl NetworkModel {
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn weight(&self, e: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[e])
    }

    pub fn mean_degree(&self) -> f64 {
        2.0 * self.edges.len() as f64 / self.n as f64
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for &(u, v) in &self.edges {
            d[u] += 1;
            d[v] += 1;
        }
        d
    }

    /// Edges sorted, with undirected pairs as `(min, max)`.
    pub fn normalized(&self) -> Self {
        let mut pairs: Vec<((usize, usize), f64)> = self
            .edges
            .iter()
            .enumerate()
            .map(|(e, &(u, v))| {
                let key = if self.directed { (u, v) } else { (u.min(v), u.max(v)) };
                (key, self.weight(e))
            })
            .collect();
        pairs.sort_by(|a, b| a.0.cmp(&b.0));
        Self {
            n: self.n,
            edges: pairs.iter().map(|p| p.0).collect(),
            weights: self.weights.as_ref().map(|_| pairs.iter().map(|p| p.1).collect()),
            directed: self.directed,
        }
    }
}

fn undirected_key(u: usize, v: usize) -> (usize, usize) {
    (u.min(v), u.max(v))
}

/// Ring where every vertex links to its `k/2` nearest neighbours on each side,
/// plus shortcuts: for each ring edge `(u, v)`, with probability `p`, a new edge
/// from `u` to a uniformly chosen vertex it is not yet linked to.
pub fn newman_watts(n: usize, k: usize, p: f64, seed: u64) -> Result<NetworkModel> {
    if k == 0 || k % 2 == 1 || n <= k {
        return Err(NetgenError::Parameters(format!(
            "need an even k >= 2 with n > k (n = {n}, k = {k})"
        )));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(NetgenError::Parameters(format!("p = {p} outside [0, 1]")));
    }
    let mut rng = rng::stream(seed, "newman_watts");
    let mut present: HashSet<(usize, usize)> = HashSet::new();
    let mut degree = vec![0usize; n];
    let mut edges = Vec::new();
    let mut add = |u: usize, v: usize, edges: &mut Vec<(usize, usize)>, degree: &mut Vec<usize>| {
        if u != v && present.insert(undirected_key(u, v)) {
            edges.push(undirected_key(u, v));
            degree[u] += 1;
            degree[v] += 1;
            true
        } else {
            false
        }
    };
    for u in 0..n {
        for j in 1..=k / 2 {
            add(u, (u + j) % n, &mut edges, &mut degree);
        }
    }
    let ring: Vec<(usize, usize)> = (0..n)
        .flat_map(|u| (1..=k / 2).map(move |j| (u, (u + j) % n)))
        .collect();
    for (u, _) in ring {
        if !rng.random_bool(p) {
            continue;
        }
        if degree[u] >= n - 1 {
            continue;
        }
        loop {
            let w = rng.random_range(0..n);
            if add(u, w, &mut edges, &mut degree) {
                break;
            }
        }
    }
    Ok(NetworkModel {
        n,
        edges,
        weights: None,
        directed: false,
    })
}

/// Preferential attachment starting from a star on `m + 1` vertices.
pub fn barabasi_albert(n: usize, m: usize, seed: u64) -> Result<NetworkModel> {
    if m == 0 || n <= m {
        return Err(NetgenError::Parameters(format!(
            "need n > m >= 1 (n = {n}, m = {m})"
        )));
    }
    let mut rng = rng::stream(seed, "barabasi_albert");
    let mut edges: Vec<(usize, usize)> = (1..=m).map(|leaf| (0, leaf)).collect();
    // Each vertex appears once per incident edge.
    let mut repeated: Vec<usize> = Vec::with_capacity(2 * m * n);
    for &(u, v) in &edges {
        repeated.push(u);
        repeated.push(v);
    }
    for source in m + 1..n {
        let mut chosen: Vec<usize> = Vec::with_capacity(m);
        while chosen.len() < m {
            let t = *repeated.choose(&mut rng).expect("non-empty");
            if !chosen.contains(&t) {
                chosen.push(t);
            }
        }
        chosen.sort_unstable();
        for t in chosen {
            edges.push((t, source));
            repeated.push(t);
            repeated.push(source);
        }
    }
    Ok(NetworkModel {
        n,
        edges,
        weights: None,
        directed: false,
    })
}

/// Gives every undirected edge one direction by a fair coin.
pub fn orient_randomly(net: &NetworkModel, seed: u64) -> Result<NetworkModel> {
    if net.directed {
        return Err(NetgenError::AlreadyDirected);
    }
    let mut rng = rng::stream(seed, "orient_randomly");
    let edges = net
        .edges
        .iter()
        .map(|&(u, v)| if rng.random_bool(0.5) { (u, v) } else { (v, u) })
        .collect();
    Ok(NetworkModel {
        n: net.n,
        edges,
        weights: net.weights.clone(),
        directed: true,
    })
}

/// Vertex dynamics shared by every subsystem before scaling by `λ_i`.
pub const SUBSYSTEM: [[f64; 3]; 3] = [[-1.0, -1.0, 0.0], [1.0, -1.0, 0.0], [1.0, 0.0, -1.0]];

#[derive(Debug, Clone, PartialEq)]
pub struct ExpandedSystem {
    pub a: SparseMatrix,
    pub lambdas: Vec<f64>,
    /// State index of the first coordinate of each vertex.
    pub first_coordinates: Vec<usize>,
}

/// `A = diag(λ) ⊗ A_v - L ⊗ M`, where `M` selects the second coordinate and
/// `L = D - W` with `W_vu` the weight of edge `u → v` (so `u` drives `v`, both
/// ways for undirected networks) and `D` the row sums of `W`.
pub fn expand_with_lambdas(net: &NetworkModel, lambdas: &[f64]) -> ExpandedSystem {
    assert_eq!(lambdas.len(), net.n, "one λ per vertex");
    let mut triplets = Vec::with_capacity(7 * net.n + 4 * net.edges.len());
    for (v, &lambda) in lambdas.iter().enumerate() {
        for (i, row) in SUBSYSTEM.iter().enumerate() {
            for (j, &val) in row.iter().enumerate() {
                if val != 0.0 {
                    triplets.push((3 * v + i, 3 * v + j, lambda * val));
                }
            }
        }
    }
    let mut couple = |i: usize, j: usize, w: f64| {
        // -L_ii = -w, -L_ij = +w on the second coordinates
        triplets.push((3 * i + 1, 3 * i + 1, -w));
        triplets.push((3 * i + 1, 3 * j + 1, w));
    };
    for (e, &(u, v)) in net.edges.iter().enumerate() {
        let w = net.weight(e);
        couple(v, u, w);
        if !net.directed {
            couple(u, v, w);
        }
    }
    ExpandedSystem {
        a: SparseMatrix::from_triplets(3 * net.n, 3 * net.n, &triplets),
        lambdas: lambdas.to_vec(),
        first_coordinates: (0..net.n).map(|v| 3 * v).collect(),
    }
}

/// [`expand_with_lambdas`] with `λ_i ~ U[lo, hi]`.
pub fn expand_subsystems(net: &NetworkModel, lambda_range: (f64, f64), seed: u64) -> ExpandedSystem {
    let mut rng = rng::stream(seed, "expand_subsystems");
    let (lo, hi) = lambda_range;
    let lambdas: Vec<f64> = (0..net.n)
        .map(|_| if hi > lo { rng.random_range(lo..=hi) } else { lo })
        .collect();
    expand_with_lambdas(net, &lambdas)
}

/// `(1/n) Σ_i (A'^3)_ii / k_i²` with `A' = (A + Aᵀ)/2` and `k_i` the number of
/// nonzeros in row `i` of `A'`, self-entry included.
pub fn generalized_clustering(a: &SparseMatrix) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    let sym = {
        let mut t = a.triplets();
        t.extend(a.transpose().triplets());
        for e in &mut t {
            e.2 *= 0.5;
        }
        SparseMatrix::from_triplets(n, n, &t)
    };
    let mut total = 0.0;
    for i in 0..n {
        let k = sym.row(i).filter(|&(_, v)| v != 0.0).count();
        if k == 0 {
            continue;
        }
        let mut closed = 0.0;
        for (j, aij) in sym.row(i) {
            for (l, ajl) in sym.row(j) {
                let ali = sym.get(l, i);
                if ali != 0.0 {
                    closed += aij * ajl * ali;
                }
            }
        }
        total += closed / (k * k) as f64;
    }
    total / n as f64
}

/// Parses `src dst [weight]` lines; `#` starts a comment.
pub fn parse_edge_list(text: &str, directed: bool) -> Result<NetworkModel> {
    let mut edges = Vec::new();
    let mut weights = Vec::new();
    let mut any_weight = false;
    let mut n = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| NetgenError::Parse {
            line: lineno + 1,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(parse_err(format!("expected 2 or 3 fields, found {}", fields.len())));
        }
        let mut index = |s: &str| -> Result<usize> {
            let v: u64 = s
                .parse()
                .map_err(|_| parse_err(format!("invalid node index {s:?}")))?;
            let v = usize::try_from(v)
                .ok()
                .filter(|&v| v < u32::MAX as usize)
                .ok_or(NetgenError::IndexOverflow { index: v })?;
            n = n.max(v + 1);
            Ok(v)
        };
        let u = index(fields[0])?;
        let v = index(fields[1])?;
        let w = match fields.get(2) {
            Some(s) => {
                any_weight = true;
                s.parse::<f64>()
                    .ok()
                    .filter(|w| w.is_finite())
                    .ok_or_else(|| parse_err(format!("invalid weight {s:?}")))?
            }
            None => 1.0,
        };
        edges.push((u, v));
        weights.push(w);
    }
    Ok(NetworkModel {
        n,
        edges,
        weights: any_weight.then_some(weights),
        directed,
    }
    .normalized())
}

pub fn load_edge_list(path: &Path, directed: bool) -> Result<NetworkModel> {
    parse_edge_list(&std::fs::read_to_string(path)?, directed)
}

pub fn format_edge_list(net: &NetworkModel) -> String {
    let norm = net.normalized();
    let mut out = String::new();
    for (e, &(u, v)) in norm.edges.iter().enumerate() {
        match &norm.weights {
            Some(w) => writeln!(out, "{u} {v} {}", w[e]),
            None => writeln!(out, "{u} {v}"),
        }
        .expect("writing to a String");
    }
    out
}

pub fn save_edge_list(net: &NetworkModel, path: &Path) -> Result<()> {
    std::fs::write(path, format_edge_list(net))?;
    Ok(())
}
