//! Small synthetic graphs used by the analyses and the test suites.
//! All generated graphs carry one constant feature per node.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use super::Graph;
use crate::error::{Error, Result};

/// Cycle graph on `n >= 3` nodes.
pub fn make_ring(n: usize) -> Result<Graph> {
    if n < 3 {
        return Err(Error::InvalidParameter(format!("a ring needs at least 3 nodes, got {n}")));
    }
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        let j = (i + 1) % n;
        a[(i, j)] = 1.0;
        a[(j, i)] = 1.0;
    }
    Graph::from_adjacency(a)
}

/// Star with node 0 at the center.
pub fn make_star(leaves: usize) -> Result<Graph> {
    let n = leaves + 1;
    let mut a = DMatrix::zeros(n, n);
    for leaf in 1..n {
        a[(0, leaf)] = 1.0;
        a[(leaf, 0)] = 1.0;
    }
    Graph::from_adjacency(a)
}

/// G(n, p) with every node of positive degree (redrawn until it is).
pub fn erdos_renyi<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<Graph> {
    if !(0.0..=1.0).contains(&p) || p == 0.0 || n < 2 {
        return Err(Error::InvalidParameter(format!("erdos_renyi(n={n}, p={p})")));
    }
    loop {
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                if rng.random::<f64>() < p {
                    a[(i, j)] = 1.0;
                    a[(j, i)] = 1.0;
                }
            }
        }
        if a.column_iter().all(|c| c.sum() > 0.0) {
            return Graph::from_adjacency(a);
        }
    }
}

/// Ring on `n` nodes plus `chords` distinct random shortcut edges.
pub fn ring_with_chords<R: Rng + ?Sized>(n: usize, chords: usize, rng: &mut R) -> Result<Graph> {
    let ring = make_ring(n)?;
    let max_chords = n * (n - 1) / 2 - n;
    if chords > max_chords {
        return Err(Error::InvalidParameter(format!("{chords} chords do not fit in a {n}-ring")));
    }
    let mut a = ring.adjacency().clone();
    let mut added = 0;
    while added < chords {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i != j && a[(i, j)] == 0.0 {
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
            added += 1;
        }
    }
    Graph::from_adjacency(a)
}

/// Random graph whose degrees are all 3 or 4: a random 3-regular pairing
/// plus a random matching over half of the nodes. `n` must be even.
pub fn near_regular<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Graph> {
    if n < 8 || n % 2 != 0 {
        return Err(Error::InvalidParameter(format!("near_regular needs an even n >= 8, got {n}")));
    }
    let mut a = pairing(n, 3, rng);
    let mut nodes: Vec<usize> = (0..n).collect();
    nodes.shuffle(rng);
    for pair in nodes[..n / 2].chunks(2) {
        if let [u, v] = *pair {
            if a[(u, v)] == 0.0 {
                a[(u, v)] = 1.0;
                a[(v, u)] = 1.0;
            }
        }
    }
    Graph::from_adjacency(a)
}

/// Uniform random simple `d`-regular graph on `n` nodes by rejection
/// sampling of stub pairings. `n d` must be even and `d < n`.
pub fn random_regular<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Result<Graph> {
    if d == 0 || d >= n || (n * d) % 2 != 0 {
        return Err(Error::InvalidParameter(format!("no simple {d}-regular graph on {n} nodes")));
    }
    Graph::from_adjacency(pairing(n, d, rng))
}

fn pairing<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    let mut stubs: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat_n(i, d)).collect();
    'attempt: loop {
        a.fill(0.0);
        stubs.shuffle(rng);
        for pair in stubs.chunks(2) {
            let (u, v) = (pair[0], pair[1]);
            if u == v || a[(u, v)] != 0.0 {
                continue 'attempt;
            }
            a[(u, v)] = 1.0;
            a[(v, u)] = 1.0;
        }
        return a;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rings() {
        assert!(make_ring(2).is_err());
        let tri = make_ring(3).unwrap();
        assert_eq!(tri.edge_count(), 3);
        let g = make_ring(64).unwrap();
        assert!(g.degrees().iter().all(|&d| d == 2.0));
        assert_eq!(make_ring(1001).unwrap().n(), 1001);
    }

    #[test]
    fn near_regular_degrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = near_regular(64, &mut rng).unwrap();
        let deg = g.degrees();
        assert!(deg.iter().all(|&d| d == 3.0 || d == 4.0));
        assert!(deg.iter().any(|&d| d == 4.0));
    }

    #[test]
    fn regular_degrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = random_regular(30, 4, &mut rng).unwrap();
        assert!(g.degrees().iter().all(|&d| d == 4.0));
        assert!(random_regular(7, 3, &mut rng).is_err());
        assert!(random_regular(4, 4, &mut rng).is_err());
    }

    #[test]
    fn chords_are_added() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = ring_with_chords(32, 5, &mut rng).unwrap();
        assert_eq!(g.edge_count(), 37);
    }

    #[test]
    fn erdos_renyi_has_no_isolated_nodes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = erdos_renyi(30, 0.1, &mut rng).unwrap();
        assert!(g.degrees().iter().all(|&d| d > 0.0));
    }
}
