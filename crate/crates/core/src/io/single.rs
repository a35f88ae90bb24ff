//! Single-graph (transductive) dataset directory layout:
//!
//! ```text
//! edges.csv     source,target[,weight]   0-based node ids, undirected
//! features.csv  one headed row per node
//! labels.csv    node,label
//! split.csv     node,role                role in {train, val, test}
//! ```

use std::path::Path;

use super::read_matrix_csv;
use crate::error::{Error, Result};
use crate::graph::{Graph, Labels, Splits};

#[derive(Debug, Clone)]
pub struct SingleGraphDataset {
    graph: Graph,
    num_classes: usize,
}

impl SingleGraphDataset {
    /// `graph` must carry node labels and splits; every training node must be labeled.
    pub fn new(graph: Graph) -> Result<Self> {
        let labels = match graph.labels() {
            Some(Labels::Nodes(l)) => l,
            _ => return Err(Error::Dataset("single-graph dataset needs node labels".into())),
        };
        let splits = graph
            .splits()
            .ok_or_else(|| Error::Dataset("single-graph dataset needs splits".into()))?;
        for (i, &train) in splits.train.iter().enumerate() {
            if train && labels[i].is_none() {
                return Err(Error::Dataset(format!("training node {i} has no label")));
            }
        }
        let num_classes = labels.iter().flatten().max().map_or(0, |&m| m + 1);
        Ok(SingleGraphDataset { graph, num_classes })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn labels(&self) -> &[Option<usize>] {
        match self.graph.labels() {
            Some(Labels::Nodes(l)) => l,
            _ => unreachable!("validated at construction"),
        }
    }

    pub fn splits(&self) -> &Splits {
        self.graph.splits().expect("validated at construction")
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }
}

fn parse_index(field: &str, file: &str, row: usize) -> Result<usize> {
    field
        .trim()
        .parse::<usize>()
        .map_err(|_| Error::Dataset(format!("{file}: row {row}: `{field}` is not a node index")))
}

pub fn load_single_graph(dir: &Path) -> Result<SingleGraphDataset> {
    let features = read_matrix_csv(&dir.join("features.csv"))?;
    let n = features.nrows();

    let mut edges = Vec::new();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(dir.join("edges.csv"))?;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        if rec.len() < 2 {
            return Err(Error::Dataset(format!("edges.csv: row {row} has fewer than two columns")));
        }
        let a = parse_index(&rec[0], "edges.csv", row)?;
        let b = parse_index(&rec[1], "edges.csv", row)?;
        let w = match rec.get(2) {
            Some(f) if !f.is_empty() => f
                .parse::<f64>()
                .map_err(|_| Error::Dataset(format!("edges.csv: row {row}: bad weight `{f}`")))?,
            _ => 1.0,
        };
        if a == b {
            return Err(Error::Dataset(format!("edges.csv: row {row} is a self-loop on node {a}")));
        }
        if a >= n || b >= n {
            return Err(Error::Dataset(format!("edges.csv: row {row}: node out of range (n = {n})")));
        }
        edges.push((a, b, w));
    }

    let mut labels = vec![None; n];
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(dir.join("labels.csv"))?;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let node = parse_index(&rec[0], "labels.csv", i + 1)?;
        let label = parse_index(&rec[1], "labels.csv", i + 1)?;
        if node >= n {
            return Err(Error::Dataset(format!("labels.csv: node {node} out of range (n = {n})")));
        }
        labels[node] = Some(label);
    }

    let split_path = dir.join("split.csv");
    let splits = if split_path.exists() {
        let mut splits = Splits { train: vec![false; n], val: vec![false; n], test: vec![false; n] };
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(&split_path)?;
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            let node = parse_index(&rec[0], "split.csv", i + 1)?;
            if node >= n {
                return Err(Error::Dataset(format!("split.csv: node {node} out of range (n = {n})")));
            }
            let mask = match &rec[1] {
                "train" => &mut splits.train,
                "val" | "validation" => &mut splits.val,
                "test" => &mut splits.test,
                other => return Err(Error::Dataset(format!("split.csv: unknown role `{other}`"))),
            };
            mask[node] = true;
        }
        splits
    } else {
        log::warn!("{}: no split.csv, every labeled node is used for training", dir.display());
        Splits {
            train: labels.iter().map(Option::is_some).collect(),
            val: vec![false; n],
            test: vec![false; n],
        }
    };

    let graph = Graph::from_edges(n, &edges, features)?
        .with_labels(Labels::Nodes(labels))?
        .with_splits(splits)?;
    SingleGraphDataset::new(graph)
}

/// Writes a dataset in the layout read by [`load_single_graph`].
pub fn write_single_graph(dir: &Path, dataset: &SingleGraphDataset) -> Result<()> {
    use std::fmt::Write as _;
    std::fs::create_dir_all(dir)?;
    let g = dataset.graph();
    super::write_matrix_csv(&dir.join("features.csv"), g.features())?;
    let a = g.adjacency();
    let mut edges = String::from("source,target,weight\n");
    for i in 0..g.n() {
        for j in i + 1..g.n() {
            if a[(i, j)] != 0.0 {
                let _ = writeln!(edges, "{i},{j},{}", super::fmt_real(a[(i, j)]));
            }
        }
    }
    std::fs::write(dir.join("edges.csv"), edges)?;
    let mut labels = String::from("node,label\n");
    for (i, l) in dataset.labels().iter().enumerate() {
        if let Some(l) = l {
            let _ = writeln!(labels, "{i},{l}");
        }
    }
    std::fs::write(dir.join("labels.csv"), labels)?;
    let s = dataset.splits();
    let mut split = String::from("node,role\n");
    for i in 0..g.n() {
        let role = if s.train[i] {
            "train"
        } else if s.val[i] {
            "val"
        } else if s.test[i] {
            "test"
        } else {
            continue;
        };
        let _ = writeln!(split, "{i},{role}");
    }
    std::fs::write(dir.join("split.csv"), split)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) {
        std::fs::write(dir.join(name), body).unwrap();
    }

    fn toy(dir: &Path) {
        write(dir, "features.csv", "f0,f1\n1,0\n0,1\n");
        write(dir, "edges.csv", "source,target\n0,1\n1,0\n");
        write(dir, "labels.csv", "node,label\n0,0\n1,1\n");
        write(dir, "split.csv", "node,role\n0,train\n1,test\n");
    }

    #[test]
    fn loads_two_node_toy() {
        let dir = tempfile::tempdir().unwrap();
        toy(dir.path());
        let ds = load_single_graph(dir.path()).unwrap();
        assert_eq!(ds.graph().n(), 2);
        assert_eq!(ds.graph().edge_count(), 1);
        assert_eq!(ds.num_classes(), 2);
        assert_eq!(ds.splits().train, vec![true, false]);
        assert_eq!(ds.splits().test, vec![false, true]);
    }

    #[test]
    fn missing_split_defaults_to_all_train() {
        let dir = tempfile::tempdir().unwrap();
        toy(dir.path());
        std::fs::remove_file(dir.path().join("split.csv")).unwrap();
        let ds = load_single_graph(dir.path()).unwrap();
        assert_eq!(ds.splits().train, vec![true, true]);
    }

    #[test]
    fn rejects_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        toy(dir.path());
        write(dir.path(), "edges.csv", "source,target\n1,1\n");
        assert!(load_single_graph(dir.path()).is_err());

        toy(dir.path());
        write(dir.path(), "edges.csv", "source,target\n0,5\n");
        assert!(load_single_graph(dir.path()).is_err());

        toy(dir.path());
        write(dir.path(), "split.csv", "node,role\n0,train\n0,test\n");
        assert!(load_single_graph(dir.path()).is_err());
    }

    #[test]
    fn write_then_load_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        toy(dir.path());
        let ds = load_single_graph(dir.path()).unwrap();
        let out = dir.path().join("copy");
        write_single_graph(&out, &ds).unwrap();
        let back = load_single_graph(&out).unwrap();
        assert_eq!(back.graph(), ds.graph());
    }
}
