//! Undirected weighted graphs, degrees and Laplacians.
//!
//! A [`Graph`] is validated once at construction and immutable afterwards:
//! the adjacency is square, symmetric to exact equality, nonnegative, has a
//! zero diagonal, and the feature matrix has one row per node.

mod generators;

pub use generators::{erdos_renyi, make_ring, make_star, near_regular, random_regular, ring_with_chords};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which graph Laplacian a spectral basis is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaplacianKind {
    /// `D - A`
    Combinatorial,
    /// `I - D^{-1/2} A D^{-1/2}`; every node needs a positive degree.
    SymmetricNormalized,
}

impl std::fmt::Display for LaplacianKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LaplacianKind::Combinatorial => f.write_str("combinatorial"),
            LaplacianKind::SymmetricNormalized => f.write_str("symmetric_normalized"),
        }
    }
}

impl std::str::FromStr for LaplacianKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "combinatorial" | "unnormalized" => Ok(LaplacianKind::Combinatorial),
            "symmetric_normalized" | "normalized" | "sym" => Ok(LaplacianKind::SymmetricNormalized),
            other => Err(Error::InvalidParameter(format!("unknown laplacian kind `{other}`"))),
        }
    }
}

/// Per-node class indices (`None` for unlabeled nodes) or a single graph label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Labels {
    Nodes(Vec<Option<usize>>),
    Graph(usize),
}

/// Boolean node masks for transductive learning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
}

impl Splits {
    /// Every node in the training role.
    pub fn all_train(n: usize) -> Self {
        Splits {
            train: vec![true; n],
            val: vec![false; n],
            test: vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.train.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train.is_empty()
    }

    fn validate(&self, n: usize) -> Result<()> {
        for (what, mask) in [("train mask", &self.train), ("val mask", &self.val), ("test mask", &self.test)] {
            if mask.len() != n {
                return Err(Error::DimensionMismatch { what, expected: n, actual: mask.len() });
            }
        }
        for i in 0..n {
            let roles = self.train[i] as u8 + self.val[i] as u8 + self.test[i] as u8;
            if roles > 1 {
                return Err(Error::Dataset(format!("node {i} belongs to more than one split")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    adjacency: DMatrix<f64>,
    features: DMatrix<f64>,
    labels: Option<Labels>,
    splits: Option<Splits>,
}

impl Graph {
    /// Validates and wraps an adjacency matrix and a node feature matrix.
    pub fn new(adjacency: DMatrix<f64>, features: DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = adjacency.shape();
        if rows != cols {
            return Err(Error::NotSquare { rows, cols });
        }
        for i in 0..rows {
            if adjacency[(i, i)] != 0.0 {
                return Err(Error::SelfLoop(i));
            }
            for j in 0..cols {
                let w = adjacency[(i, j)];
                if !w.is_finite() {
                    return Err(Error::NonFinite("adjacency"));
                }
                if w < 0.0 {
                    return Err(Error::NegativeWeight { row: i, col: j, weight: w });
                }
                if j > i && w != adjacency[(j, i)] {
                    return Err(Error::AsymmetricAdjacency(i, j));
                }
            }
        }
        if features.nrows() != rows {
            return Err(Error::DimensionMismatch {
                what: "feature rows",
                expected: rows,
                actual: features.nrows(),
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
        Ok(Graph { adjacency, features, labels: None, splits: None })
    }

    /// Graph with a single constant feature per node.
    pub fn from_adjacency(adjacency: DMatrix<f64>) -> Result<Self> {
        let n = adjacency.nrows();
        Self::new(adjacency, DMatrix::from_element(n, 1, 1.0))
    }

    /// Builds a graph from an undirected edge list. Reciprocal and duplicate
    /// edges collapse onto one entry; the last weight seen wins.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)], features: DMatrix<f64>) -> Result<Self> {
        let mut adjacency = DMatrix::zeros(n, n);
        for &(a, b, w) in edges {
            if a >= n || b >= n {
                return Err(Error::Dataset(format!("edge ({a}, {b}) out of range for {n} nodes")));
            }
            if a == b {
                return Err(Error::SelfLoop(a));
            }
            adjacency[(a, b)] = w;
            adjacency[(b, a)] = w;
        }
        Self::new(adjacency, features)
    }

    pub fn with_features(self, features: DMatrix<f64>) -> Result<Self> {
        let mut g = Self::new(self.adjacency, features)?;
        g.labels = self.labels;
        g.splits = self.splits;
        Ok(g)
    }

    pub fn with_labels(mut self, labels: Labels) -> Result<Self> {
        if let Labels::Nodes(l) = &labels {
            if l.len() != self.n() {
                return Err(Error::DimensionMismatch { what: "node labels", expected: self.n(), actual: l.len() });
            }
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_splits(mut self, splits: Splits) -> Result<Self> {
        splits.validate(self.n())?;
        self.splits = Some(splits);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn feature_width(&self) -> usize {
        self.features.ncols()
    }

    pub fn labels(&self) -> Option<&Labels> {
        self.labels.as_ref()
    }

    pub fn splits(&self) -> Option<&Splits> {
        self.splits.as_ref()
    }

    /// Column sums of the adjacency, `D_ii = sum_j A_ji`.
    pub fn degrees(&self) -> DVector<f64> {
        let n = self.n();
        DVector::from_fn(n, |i, _| self.adjacency.column(i).sum())
    }

    pub fn edge_count(&self) -> usize {
        let n = self.n();
        (0..n).map(|i| (i + 1..n).filter(|&j| self.adjacency[(i, j)] != 0.0).count()).sum()
    }

    /// Neighbors of `i` (nonzero adjacency entries), ascending.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n()).filter(move |&j| self.adjacency[(i, j)] != 0.0)
    }
}

/// `D - A` or `I - D^{-1/2} A D^{-1/2}`.
pub fn build_laplacian(g: &Graph, kind: LaplacianKind) -> Result<DMatrix<f64>> {
    let n = g.n();
    let deg = g.degrees();
    let a = g.adjacency();
    match kind {
        LaplacianKind::Combinatorial => {
            let mut l = -a.clone();
            for i in 0..n {
                l[(i, i)] = deg[i];
            }
            Ok(l)
        }
        LaplacianKind::SymmetricNormalized => {
            if let Some(i) = deg.iter().position(|&d| d <= 0.0) {
                return Err(Error::ZeroDegree(i));
            }
            let mut l = DMatrix::from_fn(n, n, |i, j| -a[(i, j)] / (deg[i] * deg[j]).sqrt());
            // mirror the upper triangle so the result is exactly symmetric
            // regardless of how the products above round
            for i in 0..n {
                for j in 0..i {
                    l[(i, j)] = l[(j, i)];
                }
                l[(i, i)] = 1.0;
            }
            Ok(l)
        }
    }
}

/// Mean node degree `(1/n) sum_k d_k`.
pub fn average_degree(g: &Graph) -> f64 {
    if g.n() == 0 {
        return 0.0;
    }
    g.degrees().sum() / g.n() as f64
}
