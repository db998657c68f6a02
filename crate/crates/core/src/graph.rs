//! Inference graphs, bipartite matching and the structural rank machinery.
//!
//! Edge convention: a stored edge `j -> i` means that `x_j` appears in the
//! right-hand side of `x_i` (the entry `A[i][j]` is a structural nonzero).

use std::collections::VecDeque;

use thiserror::Error;

use crate::linalg::{DenseMatrix, SparseMatrix};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("node index {index} out of range for {n} nodes")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("node {0} listed twice")]
    Duplicate(usize),
}

fn check_index(index: usize, n: usize) -> Result<(), GraphError> {
    if index < n {
        Ok(())
    } else {
        Err(GraphError::IndexOutOfRange { index, n })
    }
}

fn check_node_set(nodes: &[usize], n: usize) -> Result<(), GraphError> {
    let mut seen = vec![false; n];
    for &v in nodes {
        check_index(v, n)?;
        if std::mem::replace(&mut seen[v], true) {
            return Err(GraphError::Duplicate(v));
        }
    }
    Ok(())
}

/// Structural pattern of `(A, C, F)`: who influences whom, which nodes are measured,
/// and which nodes are to be estimated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InferenceGraph {
    n: usize,
    influencers: Vec<Vec<usize>>,
    influenced: Vec<Vec<usize>>,
    sensors: Vec<usize>,
    targets: Vec<usize>,
}

impl InferenceGraph {
    /// Builds the graph from `(from, to)` influence edges; duplicates are merged.
    pub fn new(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GraphError> {
        let mut influencers = vec![Vec::new(); n];
        let mut influenced = vec![Vec::new(); n];
        for (from, to) in edges {
            check_index(from, n)?;
            check_index(to, n)?;
            influencers[to].push(from);
            influenced[from].push(to);
        }
        for list in influencers.iter_mut().chain(influenced.iter_mut()) {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self {
            n,
            influencers,
            influenced,
            sensors: Vec::new(),
            targets: Vec::new(),
        })
    }

    /// Pattern of a square system matrix: nonzero `A[i][j]` gives the edge `j -> i`.
    pub fn from_sparse(a: &SparseMatrix) -> Self {
        assert_eq!(a.nrows(), a.ncols(), "system matrix must be square");
        let edges = a
            .triplets()
            .into_iter()
            .filter(|&(_, _, v)| v != 0.0)
            .map(|(i, j, _)| (j, i));
        Self::new(a.nrows(), edges).expect("indices come from the matrix")
    }

    pub fn from_dense(a: &DenseMatrix) -> Self {
        Self::from_sparse(&SparseMatrix::from_dense(a))
    }

    pub fn with_sensors(mut self, sensors: Vec<usize>) -> Result<Self, GraphError> {
        check_node_set(&sensors, self.n)?;
        self.sensors = sensors;
        Ok(self)
    }

    pub fn with_targets(mut self, targets: Vec<usize>) -> Result<Self, GraphError> {
        check_node_set(&targets, self.n)?;
        self.targets = targets;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sensors(&self) -> &[usize] {
        &self.sensors
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    /// Nodes `j` with an edge `j -> i`, sorted.
    pub fn influencers(&self, i: usize) -> &[usize] {
        &self.influencers[i]
    }

    /// Nodes `k` with an edge `i -> k`, sorted.
    pub fn influenced(&self, i: usize) -> &[usize] {
        &self.influenced[i]
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.influencers[to].binary_search(&from).is_ok()
    }

    pub fn has_self_link(&self, i: usize) -> bool {
        self.has_edge(i, i)
    }

    pub fn edge_count(&self) -> usize {
        self.influencers.iter().map(Vec::len).sum()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.influenced
            .iter()
            .enumerate()
            .flat_map(|(from, outs)| outs.iter().map(move |&to| (from, to)))
    }

    /// Every node reachable from `start` along influence edges, `start` included, sorted.
    pub fn reachable_from(&self, start: usize) -> Result<Vec<usize>, GraphError> {
        check_index(start, self.n)?;
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(v) = queue.pop_front() {
            for &w in &self.influenced[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        Ok((0..self.n).filter(|&v| seen[v]).collect())
    }

    /// Row pattern of `[A; C]`: one row per state equation, then one row per sensor.
    pub fn state_and_sensor_rows(&self) -> Vec<Vec<usize>> {
        let mut rows: Vec<Vec<usize>> = self.influencers.clone();
        rows.extend(self.sensors.iter().map(|&s| vec![s]));
        rows
    }
}

/// Rows (left) against columns (right); adjacency is stored per row, sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteGraph {
    n_left: usize,
    n_right: usize,
    adj: Vec<Vec<usize>>,
}

impl BipartiteGraph {
    pub fn new(
        n_left: usize,
        n_right: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GraphError> {
        let mut adj = vec![Vec::new(); n_left];
        for (l, r) in edges {
            check_index(l, n_left)?;
            check_index(r, n_right)?;
            adj[l].push(r);
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self {
            n_left,
            n_right,
            adj,
        })
    }

    /// One row per entry of `rows`, listing the columns where that row is nonzero.
    pub fn from_rows(n_right: usize, rows: Vec<Vec<usize>>) -> Result<Self, GraphError> {
        let n_left = rows.len();
        let edges: Vec<(usize, usize)> = rows
            .iter()
            .enumerate()
            .flat_map(|(l, cols)| cols.iter().map(move |&c| (l, c)))
            .collect();
        Self::new(n_left, n_right, edges)
    }

    pub fn from_dense_pattern(m: &DenseMatrix) -> Self {
        let rows = (0..m.nrows())
            .map(|i| (0..m.ncols()).filter(|&j| m[(i, j)] != 0.0).collect())
            .collect();
        Self::from_rows(m.ncols(), rows).expect("indices come from the matrix")
    }

    pub fn n_left(&self) -> usize {
        self.n_left
    }

    pub fn n_right(&self) -> usize {
        self.n_right
    }

    pub fn neighbors(&self, left: usize) -> &[usize] {
        &self.adj[left]
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum()
    }

    fn column_adjacency(&self) -> Vec<Vec<usize>> {
        let mut cols = vec![Vec::new(); self.n_right];
        for (l, list) in self.adj.iter().enumerate() {
            for &r in list {
                cols[r].push(l);
            }
        }
        cols
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matching {
    left: Vec<Option<usize>>,
    right: Vec<Option<usize>>,
}

impl Matching {
    fn empty(n_left: usize, n_right: usize) -> Self {
        Self {
            left: vec![None; n_left],
            right: vec![None; n_right],
        }
    }

    pub fn partner_of_left(&self, l: usize) -> Option<usize> {
        self.left[l]
    }

    pub fn partner_of_right(&self, r: usize) -> Option<usize> {
        self.right[r]
    }

    pub fn size(&self) -> usize {
        self.left.iter().filter(|p| p.is_some()).count()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.left
            .iter()
            .enumerate()
            .filter_map(|(l, r)| r.map(|r| (l, r)))
    }
}

const UNREACHED: usize = usize::MAX;

/// Hopcroft–Karp. Rows are scanned in index order and adjacency lists are sorted,
/// so identical input always yields the identical matching.
pub fn maximum_matching(b: &BipartiteGraph) -> Matching {
    let mut m = Matching::empty(b.n_left, b.n_right);
    let mut dist = vec![UNREACHED; b.n_left];
    let mut cursor = vec![0usize; b.n_left];
    let mut queue = VecDeque::new();
    loop {
        // Layering from free rows.
        queue.clear();
        for l in 0..b.n_left {
            if m.left[l].is_none() {
                dist[l] = 0;
                queue.push_back(l);
            } else {
                dist[l] = UNREACHED;
            }
        }
        let mut found = false;
        while let Some(l) = queue.pop_front() {
            for &r in &b.adj[l] {
                match m.right[r] {
                    None => found = true,
                    Some(next) if dist[next] == UNREACHED => {
                        dist[next] = dist[l] + 1;
                        queue.push_back(next);
                    }
                    Some(_) => {}
                }
            }
        }
        if !found {
            return m;
        }
        cursor.iter_mut().for_each(|c| *c = 0);
        for root in 0..b.n_left {
            if m.left[root].is_none() {
                augment_layered(b, &mut m, &mut dist, &mut cursor, root);
            }
        }
    }
}

/// Iterative DFS along the BFS layers; flips one shortest augmenting path if found.
fn augment_layered(
    b: &BipartiteGraph,
    m: &mut Matching,
    dist: &mut [usize],
    cursor: &mut [usize],
    root: usize,
) -> bool {
    let mut stack: Vec<(usize, usize)> = vec![(root, UNREACHED)];
    while let Some(&(l, _)) = stack.last() {
        if cursor[l] >= b.adj[l].len() {
            dist[l] = UNREACHED;
            stack.pop();
            continue;
        }
        let r = b.adj[l][cursor[l]];
        cursor[l] += 1;
        match m.right[r] {
            None => {
                stack.last_mut().expect("non-empty").1 = r;
                for &(pl, pr) in &stack {
                    m.left[pl] = Some(pr);
                    m.right[pr] = Some(pl);
                }
                return true;
            }
            Some(next) if dist[next] == dist[l] + 1 => {
                stack.last_mut().expect("non-empty").1 = r;
                stack.push((next, UNREACHED));
            }
            Some(_) => {}
        }
    }
    false
}

/// Size of a maximum matching, i.e. the generic rank of the pattern.
pub fn structural_rank(b: &BipartiteGraph) -> usize {
    maximum_matching(b).size()
}

/// Columns that are reachable from an exposed column by an alternating path
/// (non-matching edge to a row, then that row's matching edge), exposed ones included.
fn columns_escaping(
    m: &Matching,
    col_adj: &[Vec<usize>],
    n_right: usize,
) -> Vec<bool> {
    let mut reached = vec![false; n_right];
    let mut queue = VecDeque::new();
    for c in 0..n_right {
        if m.right[c].is_none() {
            reached[c] = true;
            queue.push_back(c);
        }
    }
    while let Some(c) = queue.pop_front() {
        for &row in &col_adj[c] {
            if m.right[c] == Some(row) {
                continue;
            }
            if let Some(next) = m.left[row] {
                if !reached[next] {
                    reached[next] = true;
                    queue.push_back(next);
                }
            }
        }
    }
    reached
}

/// Columns covered by every maximum matching, sorted.
///
/// Equivalently, the columns `k` whose unit row `e_k` lies in the generic row
/// space of the pattern.
pub fn columns_covered_by_all_max_matchings(b: &BipartiteGraph) -> Vec<usize> {
    let m = maximum_matching(b);
    let reached = columns_escaping(&m, &b.column_adjacency(), b.n_right);
    (0..b.n_right).filter(|&c| !reached[c]).collect()
}

/// Nodes that belong to no minimal dilation set of `G(A, C)`, sorted.
pub fn dilation_free_targets(g: &InferenceGraph) -> Vec<usize> {
    let b = BipartiteGraph::from_rows(g.n(), g.state_and_sensor_rows())
        .expect("graph indices are valid");
    columns_covered_by_all_max_matchings(&b)
}

/// A maximum matching that grows one row at a time.
///
/// Adding a row costs one alternating search instead of a full Hopcroft–Karp
/// run, which keeps repeated augmentation of a pattern near linear per step.
#[derive(Debug, Clone)]
pub struct GrowingMatching {
    n_right: usize,
    rows: Vec<Vec<usize>>,
    col_adj: Vec<Vec<usize>>,
    matching: Matching,
}

impl GrowingMatching {
    pub fn new(b: &BipartiteGraph) -> Self {
        Self {
            n_right: b.n_right,
            rows: b.adj.clone(),
            col_adj: b.column_adjacency(),
            matching: maximum_matching(b),
        }
    }

    pub fn size(&self) -> usize {
        self.matching.size()
    }

    pub fn matching(&self) -> &Matching {
        &self.matching
    }

    /// Appends a row and restores maximality. Returns whether the matching grew.
    pub fn push_row(&mut self, mut cols: Vec<usize>) -> Result<bool, GraphError> {
        for &c in &cols {
            check_index(c, self.n_right)?;
        }
        cols.sort_unstable();
        cols.dedup();
        let row = self.rows.len();
        for &c in &cols {
            self.col_adj[c].push(row);
        }
        self.rows.push(cols);
        self.matching.left.push(None);

        // BFS over rows for an augmenting path starting at the new row.
        let mut via_row: Vec<usize> = vec![UNREACHED; self.n_right];
        let mut visited_row = vec![false; self.rows.len()];
        visited_row[row] = true;
        let mut queue = VecDeque::from([row]);
        while let Some(l) = queue.pop_front() {
            for &c in &self.rows[l] {
                if via_row[c] != UNREACHED {
                    continue;
                }
                via_row[c] = l;
                match self.matching.right[c] {
                    None => {
                        // Flip the path back to the new row.
                        let mut col = c;
                        loop {
                            let l = via_row[col];
                            let prev = self.matching.left[l];
                            self.matching.left[l] = Some(col);
                            self.matching.right[col] = Some(l);
                            if l == row {
                                return Ok(true);
                            }
                            col = prev.expect("interior rows are matched");
                        }
                    }
                    Some(next) if !visited_row[next] => {
                        visited_row[next] = true;
                        queue.push_back(next);
                    }
                    Some(_) => {}
                }
            }
        }
        Ok(false)
    }

    /// Columns covered by every maximum matching of the current pattern.
    pub fn essential_columns(&self) -> Vec<bool> {
        let reached = columns_escaping(&self.matching, &self.col_adj, self.n_right);
        reached.into_iter().map(|r| !r).collect()
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_pcg::Pcg64;

    /// x1 -> x3, x2 -> x3, x3 -> x4 (0-based: 0->2, 1->2, 2->3), sensor x4.
    pub(crate) fn g4() -> InferenceGraph {
        InferenceGraph::new(4, [(0, 2), (1, 2), (2, 3)])
            .unwrap()
            .with_sensors(vec![3])
            .unwrap()
            .with_targets(vec![1])
            .unwrap()
    }

    pub(crate) fn chain5() -> InferenceGraph {
        let mut edges: Vec<(usize, usize)> = (0..4).map(|i| (i, i + 1)).collect();
        edges.extend((0..5).map(|i| (i, i)));
        InferenceGraph::new(5, edges)
            .unwrap()
            .with_sensors(vec![4])
            .unwrap()
            .with_targets(vec![0])
            .unwrap()
    }

    pub(crate) fn random_graph(n: usize, density: f64, rng: &mut Pcg64) -> InferenceGraph {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if rng.random_bool(density) {
                    edges.push((j, i));
                }
            }
        }
        InferenceGraph::new(n, edges).unwrap()
    }

    fn brute_force_matching(adj: &[Vec<usize>], n_right: usize) -> usize {
        fn go(l: usize, adj: &[Vec<usize>], used: &mut Vec<bool>) -> usize {
            if l == adj.len() {
                return 0;
            }
            let mut best = go(l + 1, adj, used);
            for &r in &adj[l] {
                if !used[r] {
                    used[r] = true;
                    best = best.max(1 + go(l + 1, adj, used));
                    used[r] = false;
                }
            }
            best
        }
        go(0, adj, &mut vec![false; n_right])
    }

    fn random_bipartite(rng: &mut Pcg64, max_side: usize) -> BipartiteGraph {
        let nl = rng.random_range(1..=max_side);
        let nr = rng.random_range(1..=max_side);
        let p = rng.random_range(0.05..0.6);
        let mut edges = Vec::new();
        for l in 0..nl {
            for r in 0..nr {
                if rng.random_bool(p) {
                    edges.push((l, r));
                }
            }
        }
        BipartiteGraph::new(nl, nr, edges).unwrap()
    }

    fn is_valid_matching(b: &BipartiteGraph, m: &Matching) -> bool {
        m.pairs().all(|(l, r)| {
            b.neighbors(l).contains(&r) && m.partner_of_right(r) == Some(l)
        }) && (0..b.n_right()).all(|r| match m.partner_of_right(r) {
            Some(l) => m.partner_of_left(l) == Some(r),
            None => true,
        })
    }

    #[test]
    fn reachability_examples() {
        let pair2 = InferenceGraph::new(2, [(0, 1), (0, 0), (1, 1)]).unwrap();
        assert_eq!(pair2.reachable_from(0).unwrap(), vec![0, 1]);
        assert_eq!(g4().reachable_from(1).unwrap(), vec![1, 2, 3]);
        assert!(g4().reachable_from(9).is_err());
    }

    #[test]
    fn reachability_matches_transitive_closure() {
        let mut rng = Pcg64::seed_from_u64(1);
        let n = 50;
        let g = random_graph(n, 0.03, &mut rng);
        // Boolean closure by repeated squaring of (I + adjacency).
        let mut reach = vec![vec![false; n]; n];
        for (i, row) in reach.iter_mut().enumerate() {
            row[i] = true;
            for &k in g.influenced(i) {
                row[k] = true;
            }
        }
        for _ in 0..6 {
            let prev = reach.clone();
            for i in 0..n {
                for j in 0..n {
                    if !reach[i][j] {
                        reach[i][j] = (0..n).any(|k| prev[i][k] && prev[k][j]);
                    }
                }
            }
        }
        for s in 0..n {
            let expected: Vec<usize> = (0..n).filter(|&j| reach[s][j]).collect();
            assert_eq!(g.reachable_from(s).unwrap(), expected);
        }
    }

    #[test]
    fn matching_examples() {
        let id = BipartiteGraph::new(3, 3, [(0, 0), (1, 1), (2, 2)]).unwrap();
        assert_eq!(structural_rank(&id), 3);
        let dil = BipartiteGraph::new(2, 1, [(0, 0), (1, 0)]).unwrap();
        assert_eq!(structural_rank(&dil), 1);
    }

    #[test]
    fn matching_matches_brute_force() {
        let mut rng = Pcg64::seed_from_u64(2);
        for _ in 0..200 {
            let b = random_bipartite(&mut rng, 9);
            let m = maximum_matching(&b);
            assert!(is_valid_matching(&b, &m));
            assert_eq!(m.size(), brute_force_matching(&b.adj, b.n_right()));
            assert_eq!(m, maximum_matching(&b), "deterministic");
        }
    }

    #[test]
    fn covered_columns_examples() {
        let id = BipartiteGraph::new(3, 3, [(0, 0), (1, 1), (2, 2)]).unwrap();
        assert_eq!(columns_covered_by_all_max_matchings(&id), vec![0, 1, 2]);
        // rows e1 and e1 + e2
        let forced = BipartiteGraph::new(2, 2, [(0, 0), (1, 0), (1, 1)]).unwrap();
        assert_eq!(columns_covered_by_all_max_matchings(&forced), vec![0, 1]);
        let dil = BipartiteGraph::new(1, 2, [(0, 0), (0, 1)]).unwrap();
        assert!(columns_covered_by_all_max_matchings(&dil).is_empty());
    }

    #[test]
    fn dilation_free_examples() {
        assert_eq!(dilation_free_targets(&g4()), vec![2, 3]);
        assert_eq!(dilation_free_targets(&chain5()), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn structural_rank_of_g4_state_and_sensor_rows() {
        let g = g4();
        let b = BipartiteGraph::from_rows(4, g.state_and_sensor_rows()).unwrap();
        assert_eq!(structural_rank(&b), 3);
    }

    #[test]
    fn growing_matching_tracks_full_recomputation() {
        let mut rng = Pcg64::seed_from_u64(3);
        for _ in 0..100 {
            let b = random_bipartite(&mut rng, 8);
            let mut grow = GrowingMatching::new(&b);
            let mut rows = b.adj.clone();
            for _ in 0..4 {
                let k = rng.random_range(0..b.n_right());
                let new_row = vec![k];
                grow.push_row(new_row.clone()).unwrap();
                rows.push(new_row);
                let full = BipartiteGraph::from_rows(b.n_right(), rows.clone()).unwrap();
                assert_eq!(grow.size(), structural_rank(&full));
                let essential: Vec<usize> = grow
                    .essential_columns()
                    .iter()
                    .enumerate()
                    .filter_map(|(c, &e)| e.then_some(c))
                    .collect();
                assert_eq!(essential, columns_covered_by_all_max_matchings(&full));
            }
        }
    }

    /// Columns used by every maximum matching, found by enumerating all of them.
    fn covered_by_enumeration(b: &BipartiteGraph) -> Vec<usize> {
        fn go(
            l: usize,
            adj: &[Vec<usize>],
            used: &mut Vec<bool>,
            size: usize,
            target: usize,
            acc: &mut Vec<bool>,
        ) {
            if l == adj.len() {
                if size == target {
                    for (a, &u) in acc.iter_mut().zip(used.iter()) {
                        *a &= u;
                    }
                }
                return;
            }
            go(l + 1, adj, used, size, target, acc);
            for &r in &adj[l] {
                if !used[r] {
                    used[r] = true;
                    go(l + 1, adj, used, size + 1, target, acc);
                    used[r] = false;
                }
            }
        }
        let target = brute_force_matching(&b.adj, b.n_right());
        let mut acc = vec![true; b.n_right()];
        go(0, &b.adj, &mut vec![false; b.n_right()], 0, target, &mut acc);
        (0..b.n_right()).filter(|&c| acc[c]).collect()
    }

    #[test]
    fn covered_columns_match_enumeration() {
        let mut rng = Pcg64::seed_from_u64(4);
        for _ in 0..200 {
            let b = random_bipartite(&mut rng, 7);
            assert_eq!(
                columns_covered_by_all_max_matchings(&b),
                covered_by_enumeration(&b)
            );
        }
    }

    /// Union of the minimal node sets `V'` whose out-neighbourhood in `X ∪ S`
    /// is strictly smaller than `V'`.
    fn dilation_union(g: &InferenceGraph) -> Vec<usize> {
        let n = g.n();
        let out_size = |mask: u32| -> usize {
            let mut hit = vec![false; n + g.sensors().len()];
            for v in (0..n).filter(|&v| mask >> v & 1 == 1) {
                for &k in g.influenced(v) {
                    hit[k] = true;
                }
                for (si, &s) in g.sensors().iter().enumerate() {
                    if s == v {
                        hit[n + si] = true;
                    }
                }
            }
            hit.iter().filter(|&&h| h).count()
        };
        let dilated: Vec<bool> = (0..1u32 << n)
            .map(|mask| mask != 0 && out_size(mask) < mask.count_ones() as usize)
            .collect();
        let mut union = 0u32;
        for mask in 1..1u32 << n {
            if !dilated[mask as usize] {
                continue;
            }
            // minimal: no proper non-empty subset is a dilation
            let mut sub = (mask - 1) & mask;
            let mut minimal = true;
            while sub != 0 {
                if dilated[sub as usize] {
                    minimal = false;
                    break;
                }
                sub = (sub - 1) & mask;
            }
            if minimal {
                union |= mask;
            }
        }
        (0..n).filter(|&v| union >> v & 1 == 1).collect()
    }

    #[test]
    fn dilation_free_matches_subset_enumeration() {
        let mut rng = Pcg64::seed_from_u64(5);
        for _ in 0..300 {
            let n = rng.random_range(1..=8);
            let density = rng.random_range(0.05..0.4);
            let sensors: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.25)).collect();
            let g = random_graph(n, density, &mut rng).with_sensors(sensors).unwrap();
            let in_dilation = dilation_union(&g);
            let expected: Vec<usize> = (0..n).filter(|v| !in_dilation.contains(v)).collect();
            assert_eq!(dilation_free_targets(&g), expected, "{g:?}");
        }
    }

    #[test]
    fn rejects_bad_indices() {
        assert!(InferenceGraph::new(2, [(0, 2)]).is_err());
        assert!(g4().with_sensors(vec![1, 1]).is_err());
        assert!(BipartiteGraph::new(1, 1, [(0, 1)]).is_err());
    }
}
