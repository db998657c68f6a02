use std::path::Path;

use netobserve::design::{LinearPlant, MatrixJson};
use netobserve::graph::InferenceGraph;
use netobserve::linalg::{DenseMatrix, SparseMatrix};
use netobserve::netgen::{self, NetworkModel};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Whitespace-separated node indices; `#` starts a comment.
pub fn parse_index_list(text: &str) -> std::result::Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        for tok in line.split_whitespace() {
            out.push(
                tok.parse()
                    .map_err(|_| format!("line {}: invalid node index {tok:?}", lineno + 1))?,
            );
        }
    }
    Ok(out)
}

pub fn read_index_list(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path.display(), e))?;
    parse_index_list(&text).map_err(|e| CliError::input(path.display(), e))
}

/// Directed edge list `src dst [weight]`: `src` influences `dst`.
pub fn read_network(path: &Path, nodes: Option<usize>) -> Result<NetworkModel> {
    let mut net = netgen::load_edge_list(path, true).map_err(|e| CliError::input(path.display(), e))?;
    if let Some(n) = nodes {
        if n < net.n {
            return Err(CliError::input(
                path.display(),
                format!("edge list uses node {} but --nodes is {n}", net.n - 1),
            ));
        }
        net.n = n;
    }
    Ok(net)
}

pub fn inference_graph(net: &NetworkModel) -> Result<InferenceGraph> {
    Ok(InferenceGraph::new(net.n, net.edges.iter().copied())?)
}

/// Plant bundle: `A` as `[row, col, value]` triplets, optional dense `B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantJson {
    pub n: usize,
    #[serde(rename = "A")]
    pub a: Vec<(usize, usize, f64)>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<MatrixJson>,
    pub sensors: Vec<usize>,
    pub targets: Vec<usize>,
}

impl PlantJson {
    pub fn to_plant(&self) -> std::result::Result<LinearPlant, String> {
        let n = self.n;
        if n == 0 {
            return Err("n must be positive".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for &(i, j, v) in &self.a {
            if i >= n || j >= n {
                return Err(format!("A entry ({i}, {j}) outside {n}x{n}"));
            }
            if !v.is_finite() {
                return Err(format!("A entry ({i}, {j}) is not finite"));
            }
            if !seen.insert((i, j)) {
                return Err(format!("duplicate A entry ({i}, {j})"));
            }
        }
        for (what, list) in [("sensor", &self.sensors), ("target", &self.targets)] {
            if let Some(&bad) = list.iter().find(|&&v| v >= n) {
                return Err(format!("{what} {bad} out of range for n = {n}"));
            }
        }
        if self.targets.is_empty() {
            return Err("at least one target is required".into());
        }
        let b = match &self.b {
            Some(m) => {
                let b = m.to_dense()?;
                if b.nrows() != n || b.iter().any(|v| !v.is_finite()) {
                    return Err(format!("B must be a finite {n}-row matrix, got {}x{}", b.nrows(), b.ncols()));
                }
                b
            }
            None => DenseMatrix::zeros(n, 0),
        };
        Ok(LinearPlant::new(
            SparseMatrix::from_triplets(n, n, &self.a),
            b,
            self.sensors.clone(),
            self.targets.clone(),
        ))
    }
}

pub fn read_plant(path: &Path) -> Result<LinearPlant> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path.display(), e))?;
    let doc: PlantJson = serde_json::from_str(&text).map_err(|e| CliError::input(path.display(), e))?;
    doc.to_plant().map_err(|e| CliError::input(path.display(), e))
}

/// Plant whose `A[dst][src]` is the edge weight (1 when absent); no inputs.
pub fn plant_from_network(net: &NetworkModel, sensors: Vec<usize>, targets: Vec<usize>) -> Result<LinearPlant> {
    let triplets: Vec<(usize, usize, f64)> = net
        .edges
        .iter()
        .enumerate()
        .map(|(e, &(src, dst))| (dst, src, net.weight(e)))
        .collect();
    let doc = PlantJson {
        n: net.n,
        a: triplets,
        b: None,
        sensors,
        targets,
    };
    doc.to_plant().map_err(CliError::Input)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_lists_skip_comments_and_blank_lines() {
        assert_eq!(parse_index_list("# sensors\n3 4\n\n5 # last\n").unwrap(), vec![3, 4, 5]);
        assert!(parse_index_list("1 x").is_err());
        assert!(parse_index_list("-1").is_err());
    }

    #[test]
    fn plant_bundle_validation() {
        let ok = PlantJson {
            n: 2,
            a: vec![(0, 0, -1.0), (1, 0, 1.0), (1, 1, -1.0)],
            b: None,
            sensors: vec![1],
            targets: vec![0],
        };
        let plant = ok.to_plant().unwrap();
        assert_eq!(plant.n(), 2);
        assert_eq!(plant.b.ncols(), 0);
        let mut dup = ok.clone();
        dup.a.push((1, 0, 2.0));
        assert!(dup.to_plant().unwrap_err().contains("duplicate"));
        let mut far = ok.clone();
        far.sensors = vec![2];
        assert!(far.to_plant().is_err());
        let mut bad_b = ok;
        bad_b.b = Some(MatrixJson {
            rows: 3,
            cols: 1,
            data: vec![0.0; 3],
        });
        assert!(bad_b.to_plant().is_err());
        assert!(serde_json::from_str::<PlantJson>(r#"{"n":1,"A":[],"sensors":[],"targets":[0],"C":1}"#).is_err());
    }

    #[test]
    fn edge_weights_become_entries_of_a() {
        let net = netgen::parse_edge_list("0 0 -1\n0 1 2.5\n1 1 -1\n", true).unwrap();
        let plant = plant_from_network(&net, vec![1], vec![0]).unwrap();
        assert_eq!(plant.a.get(1, 0), 2.5);
        assert_eq!(plant.a.get(0, 1), 0.0);
    }
}
