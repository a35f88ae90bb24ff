//! Loader for the TU graph-kernel benchmark text format.
//!
//! For a dataset named `DS` the directory holds
//! `DS_A.txt` (1-based `i, j` edge pairs), `DS_graph_indicator.txt`
//! (graph id of every node), `DS_graph_labels.txt`, and optionally
//! `DS_node_labels.txt` and `DS_node_attributes.txt`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::{Graph, Labels};

#[derive(Debug, Clone)]
pub struct MultiGraphDataset {
    graphs: Vec<Graph>,
    num_classes: usize,
    /// Number of one-hot columns contributed by discrete node labels.
    node_label_width: usize,
    /// Number of continuous attribute columns appended after the one-hot block.
    attribute_width: usize,
}

impl MultiGraphDataset {
    /// Every graph must carry a graph label and share one feature width.
    pub fn new(graphs: Vec<Graph>) -> Result<Self> {
        let mut num_classes = 0;
        let width = graphs.first().map_or(0, Graph::feature_width);
        for (i, g) in graphs.iter().enumerate() {
            match g.labels() {
                Some(Labels::Graph(c)) => num_classes = num_classes.max(c + 1),
                _ => return Err(Error::Dataset(format!("graph {i} has no graph label"))),
            }
            if g.feature_width() != width {
                return Err(Error::Dataset(format!(
                    "graph {i} has feature width {}, expected {width}",
                    g.feature_width()
                )));
            }
        }
        Ok(MultiGraphDataset { graphs, num_classes, node_label_width: 0, attribute_width: 0 })
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn label(&self, i: usize) -> usize {
        match self.graphs[i].labels() {
            Some(Labels::Graph(c)) => *c,
            _ => unreachable!("validated at construction"),
        }
    }

    pub fn labels(&self) -> Vec<usize> {
        (0..self.len()).map(|i| self.label(i)).collect()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_width(&self) -> usize {
        self.graphs.first().map_or(0, Graph::feature_width)
    }

    pub fn node_label_width(&self) -> usize {
        self.node_label_width
    }

    pub fn attribute_width(&self) -> usize {
        self.attribute_width
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path)?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_owned).collect())
}

fn parse_int(s: &str, what: &str) -> Result<i64> {
    s.trim()
        .parse::<i64>()
        .map_err(|_| Error::Dataset(format!("{what}: `{s}` is not an integer")))
}

/// Maps sorted distinct values onto `0..k`.
fn dense_codes(values: &[i64]) -> BTreeMap<i64, usize> {
    let mut codes = BTreeMap::new();
    for &v in values {
        codes.entry(v).or_insert(0);
    }
    for (i, slot) in codes.values_mut().enumerate() {
        *slot = i;
    }
    codes
}

/// Loads a TU dataset. `name` defaults to the directory's file name.
/// Discrete node labels become one-hot features; continuous attributes are
/// appended only when `use_attributes` is set. Graphs without either get a
/// single constant feature. Self-loops in the edge file are dropped.
pub fn load_tu_dataset(dir: &Path, name: Option<&str>, use_attributes: bool) -> Result<MultiGraphDataset> {
    let name = match name {
        Some(n) => n.to_owned(),
        None => dir
            .file_name()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::Dataset(format!("cannot infer dataset name from {}", dir.display())))?
            .to_owned(),
    };
    let file = |suffix: &str| dir.join(format!("{name}_{suffix}.txt"));

    let indicator: Vec<usize> = read_lines(&file("graph_indicator"))?
        .iter()
        .map(|l| {
            let v = parse_int(l, "graph_indicator")?;
            if v < 1 {
                return Err(Error::Dataset(format!("graph_indicator: graph id {v} < 1")));
            }
            Ok(v as usize - 1)
        })
        .collect::<Result<_>>()?;
    let total_nodes = indicator.len();
    if indicator.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Dataset("graph_indicator is not sorted by graph".into()));
    }

    let raw_graph_labels: Vec<i64> = read_lines(&file("graph_labels"))?
        .iter()
        .map(|l| parse_int(l, "graph_labels"))
        .collect::<Result<_>>()?;
    let num_graphs = raw_graph_labels.len();
    if indicator.last().is_some_and(|&g| g >= num_graphs) {
        return Err(Error::Dataset(format!(
            "graph_indicator references graph {} but only {num_graphs} labels exist",
            indicator.last().unwrap() + 1
        )));
    }
    let graph_codes = dense_codes(&raw_graph_labels);

    // node ranges per graph
    let mut offsets = vec![usize::MAX; num_graphs];
    let mut sizes = vec![0usize; num_graphs];
    for (node, &g) in indicator.iter().enumerate() {
        if offsets[g] == usize::MAX {
            offsets[g] = node;
        }
        sizes[g] += 1;
    }
    if let Some(g) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::Dataset(format!("graph {} has no nodes", g + 1)));
    }

    let node_labels = if file("node_labels").exists() {
        let raw: Vec<i64> = read_lines(&file("node_labels"))?
            .iter()
            .map(|l| parse_int(l.split(',').next().unwrap_or(l), "node_labels"))
            .collect::<Result<_>>()?;
        if raw.len() != total_nodes {
            return Err(Error::Dataset(format!("node_labels has {} rows, expected {total_nodes}", raw.len())));
        }
        Some(raw)
    } else {
        None
    };
    let node_codes = node_labels.as_deref().map(dense_codes);
    let label_width = node_codes.as_ref().map_or(0, BTreeMap::len);

    let attributes = if use_attributes {
        let lines = read_lines(&file("node_attributes"))?;
        if lines.len() != total_nodes {
            return Err(Error::Dataset(format!("node_attributes has {} rows, expected {total_nodes}", lines.len())));
        }
        let rows = lines
            .iter()
            .map(|l| {
                l.split(',')
                    .map(|f| {
                        f.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::Dataset(format!("node_attributes: `{f}` is not a number")))
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::Dataset("node_attributes rows have different widths".into()));
        }
        Some((rows, width))
    } else {
        None
    };
    let attribute_width = attributes.as_ref().map_or(0, |(_, w)| *w);

    let mut adjacencies: Vec<DMatrix<f64>> = sizes.iter().map(|&s| DMatrix::zeros(s, s)).collect();
    let mut self_loops = 0usize;
    for (row, line) in read_lines(&file("A"))?.iter().enumerate() {
        let mut parts = line.split(',');
        let (a, b) = match (parts.next(), parts.next()) {
            (Some(a), Some(b)) => (parse_int(a, "A")?, parse_int(b, "A")?),
            _ => return Err(Error::Dataset(format!("A: row {} is not an edge pair", row + 1))),
        };
        if a < 1 || b < 1 || a as usize > total_nodes || b as usize > total_nodes {
            return Err(Error::Dataset(format!("A: row {}: node out of range", row + 1)));
        }
        let (a, b) = (a as usize - 1, b as usize - 1);
        if indicator[a] != indicator[b] {
            return Err(Error::Dataset(format!(
                "A: row {}: edge joins graphs {} and {}",
                row + 1,
                indicator[a] + 1,
                indicator[b] + 1
            )));
        }
        if a == b {
            self_loops += 1;
            continue;
        }
        let g = indicator[a];
        let (i, j) = (a - offsets[g], b - offsets[g]);
        adjacencies[g][(i, j)] = 1.0;
        adjacencies[g][(j, i)] = 1.0;
    }
    if self_loops > 0 {
        log::warn!("{name}: dropped {self_loops} self-loop rows");
    }

    let width = (label_width + attribute_width).max(1);
    let mut graphs = Vec::with_capacity(num_graphs);
    for (g, adjacency) in adjacencies.into_iter().enumerate() {
        let n = sizes[g];
        let offset = offsets[g];
        let mut features = DMatrix::zeros(n, width);
        if label_width + attribute_width == 0 {
            features.fill(1.0);
        }
        for i in 0..n {
            let node = offset + i;
            if let (Some(raw), Some(codes)) = (&node_labels, &node_codes) {
                features[(i, codes[&raw[node]])] = 1.0;
            }
            if let Some((rows, _)) = &attributes {
                for (k, v) in rows[node].iter().enumerate() {
                    features[(i, label_width + k)] = *v;
                }
            }
        }
        let label = graph_codes[&raw_graph_labels[g]];
        graphs.push(Graph::new(adjacency, features)?.with_labels(Labels::Graph(label))?);
    }
    let mut ds = MultiGraphDataset::new(graphs)?;
    ds.node_label_width = label_width;
    ds.attribute_width = attribute_width;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(dir: &Path) {
        let w = |suffix: &str, body: &str| fs::write(dir.join(format!("TOY_{suffix}.txt")), body).unwrap();
        // graph 1: path 1-2-3, graph 2: edge 4-5, graph 3: triangle 6-7-8
        w("A", "1, 2\n2, 1\n2, 3\n3, 2\n4, 5\n5, 4\n6, 7\n7, 8\n8, 6\n7, 6\n8, 7\n6, 8\n");
        w("graph_indicator", "1\n1\n1\n2\n2\n3\n3\n3\n");
        w("graph_labels", "-1\n1\n1\n");
        w("node_labels", "0\n2\n0\n2\n2\n5\n0\n2\n");
        w("node_attributes", "0.5, 1.0\n0.1, 0.2\n0.3, 0.4\n1,1\n2,2\n3,3\n4,4\n5,5\n");
    }

    #[test]
    fn reconstructs_fixture() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path());
        let ds = load_tu_dataset(dir.path(), Some("TOY"), false).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.labels(), vec![0, 1, 1]);
        assert_eq!(ds.num_classes(), 2);
        assert_eq!(ds.feature_width(), 3);

        let path = nalgebra::dmatrix![0.0, 1.0, 0.0; 1.0, 0.0, 1.0; 0.0, 1.0, 0.0];
        assert_eq!(ds.graphs()[0].adjacency(), &path);
        assert_eq!(ds.graphs()[1].adjacency(), &nalgebra::dmatrix![0.0, 1.0; 1.0, 0.0]);
        let tri = DMatrix::from_fn(3, 3, |i, j| if i == j { 0.0 } else { 1.0 });
        assert_eq!(ds.graphs()[2].adjacency(), &tri);

        // node label 5 is the third distinct value
        assert_eq!(ds.graphs()[2].features().row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn appends_attributes() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path());
        let ds = load_tu_dataset(dir.path(), Some("TOY"), true).unwrap();
        assert_eq!(ds.feature_width(), 5);
        assert_eq!(ds.attribute_width(), 2);
        assert_eq!(ds.graphs()[0].features()[(0, 3)], 0.5);
        assert_eq!(ds.graphs()[0].features()[(0, 4)], 1.0);
    }

    #[test]
    fn rejects_cross_graph_edges() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path());
        fs::write(dir.path().join("TOY_A.txt"), "1, 4\n").unwrap();
        assert!(matches!(load_tu_dataset(dir.path(), Some("TOY"), false), Err(Error::Dataset(_))));
    }
}
