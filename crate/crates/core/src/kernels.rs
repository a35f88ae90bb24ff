//! Spatial convolution supports `C^(s)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{BMatrix, FilterDesign};
use crate::graph::Graph;
use crate::spectral::{max_asymmetry, SpectralBasis};

/// Asymmetry tolerated in a designed support.
pub const DESIGNED_SYMMETRY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelTag {
    Designed { design: FilterDesign },
    Chebyshev { k: usize },
    Gcn,
    GatSample { seed: u64, head: usize },
}

impl std::fmt::Display for KernelTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KernelTag::Designed { design } => write!(f, "design:{design}"),
            KernelTag::Chebyshev { k } => write!(f, "cheb:{k}"),
            KernelTag::Gcn => f.write_str("gcn"),
            KernelTag::GatSample { seed, head } => write!(f, "gat:{seed}:{head}"),
        }
    }
}

/// Ordered supports of one graph.
#[derive(Debug, Clone)]
pub struct KernelSet {
    supports: Vec<DMatrix<f64>>,
    tags: Vec<KernelTag>,
    basis: Option<Arc<SpectralBasis>>,
}

impl KernelSet {
    pub fn new(supports: Vec<DMatrix<f64>>, tags: Vec<KernelTag>) -> Result<Self> {
        let first = supports
            .first()
            .ok_or_else(|| Error::InvalidParameter("a kernel set needs at least one support".into()))?;
        let n = first.nrows();
        if tags.len() != supports.len() {
            return Err(Error::DimensionMismatch { what: "kernel tags", expected: supports.len(), actual: tags.len() });
        }
        for (c, tag) in supports.iter().zip(&tags) {
            if c.nrows() != n || c.ncols() != n {
                return Err(Error::DimensionMismatch { what: "support size", expected: n, actual: c.ncols().max(c.nrows()) });
            }
            if matches!(tag, KernelTag::Designed { .. }) {
                let asym = max_asymmetry(c);
                if asym > DESIGNED_SYMMETRY_TOL {
                    return Err(Error::NotSymmetric(asym));
                }
            }
        }
        Ok(KernelSet { supports, tags, basis: None })
    }

    pub fn with_basis(mut self, basis: Arc<SpectralBasis>) -> Result<Self> {
        if basis.n() != self.n() {
            return Err(Error::DimensionMismatch { what: "basis size", expected: self.n(), actual: basis.n() });
        }
        self.basis = Some(basis);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.supports[0].nrows()
    }

    /// Number of supports `S`.
    pub fn len(&self) -> usize {
        self.supports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.supports.is_empty()
    }

    pub fn supports(&self) -> &[DMatrix<f64>] {
        &self.supports
    }

    pub fn support(&self, s: usize) -> &DMatrix<f64> {
        &self.supports[s]
    }

    pub fn tags(&self) -> &[KernelTag] {
        &self.tags
    }

    pub fn basis(&self) -> Option<&Arc<SpectralBasis>> {
        self.basis.as_ref()
    }
}

/// `U diag(F(λ)) U^T`.
pub fn design_kernel(basis: &SpectralBasis, design: &FilterDesign) -> Result<DMatrix<f64>> {
    let response = design.evaluate(basis)?;
    Ok(basis.synthesize(response.as_slice()))
}

/// One designed support per design, in order.
pub fn designed_kernels(basis: Arc<SpectralBasis>, designs: &[FilterDesign]) -> Result<KernelSet> {
    let supports = designs.iter().map(|d| design_kernel(&basis, d)).collect::<Result<Vec<_>>>()?;
    let tags = designs.iter().map(|d| KernelTag::Designed { design: d.clone() }).collect();
    KernelSet::new(supports, tags)?.with_basis(basis)
}

/// One support per column of `b`.
pub fn bmatrix_kernels(basis: Arc<SpectralBasis>, b: &BMatrix) -> Result<KernelSet> {
    if b.matrix().nrows() != basis.n() {
        return Err(Error::DimensionMismatch { what: "B matrix rows", expected: basis.n(), actual: b.matrix().nrows() });
    }
    let designs: Vec<FilterDesign> = (0..b.supports())
        .map(|s| FilterDesign::Tabulated { values: b.column(s).as_slice().to_vec() })
        .collect();
    designed_kernels(basis, &designs)
}

/// `B = I`: support `s` is the rank-one projector `U_s U_s^T`.
pub fn nonparametric_kernels(basis: Arc<SpectralBasis>) -> Result<KernelSet> {
    let n = basis.n();
    bmatrix_kernels(basis, &BMatrix::new(DMatrix::identity(n, n))?)
}

/// `C1 = I`, `C2 = 2L/λmax - I`, `Ck = 2 C2 C(k-1) - C(k-2)`.
pub fn cheb_kernels(laplacian: &DMatrix<f64>, lambda_max: f64, supports: usize) -> Result<KernelSet> {
    if !(lambda_max > 0.0) {
        return Err(Error::ZeroLambdaMax);
    }
    if supports == 0 {
        return Err(Error::InvalidParameter("at least one Chebyshev support is required".into()));
    }
    let n = laplacian.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let c2 = laplacian * (2.0 / lambda_max) - &eye;
    let mut out = vec![eye];
    if supports > 1 {
        out.push(c2.clone());
    }
    for k in 2..supports {
        let next = (&c2 * &out[k - 1]) * 2.0 - &out[k - 2];
        out.push(next);
    }
    let tags = (1..=supports).map(|k| KernelTag::Chebyshev { k }).collect();
    KernelSet::new(out, tags)
}

/// Renormalized GCN support `D̃^{-1/2} (A + I) D̃^{-1/2}`.
pub fn gcn_kernel(g: &Graph) -> DMatrix<f64> {
    let n = g.n();
    let a = g.adjacency();
    let d: Vec<f64> = g.degrees().iter().map(|d| d + 1.0).collect();
    let mut c = DMatrix::from_fn(n, n, |i, j| {
        let aij = if i == j { 1.0 } else { a[(i, j)] };
        aij / (d[i] * d[j]).sqrt()
    });
    crate::spectral::symmetrize(&mut c);
    c
}

/// Random-parameter attention supports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GatSampler {
    /// Width of the projected features `W h`.
    pub hidden: usize,
    /// Standard deviation of the normal draws of `W` and `a`.
    pub scale: f64,
    pub negative_slope: f64,
}

impl Default for GatSampler {
    fn default() -> Self {
        GatSampler { hidden: 8, scale: 1.0, negative_slope: 0.2 }
    }
}

impl GatSampler {
    /// Row-stochastic supports, one per head. Head parameters are drawn in
    /// order from a stream seeded by `seed`.
    pub fn sample(&self, g: &Graph, heads: usize, seed: u64) -> Result<Vec<DMatrix<f64>>> {
        let h = g.features();
        if h.ncols() == 0 || h.nrows() == 0 {
            return Err(Error::InvalidParameter("attention needs a nonempty feature matrix".into()));
        }
        if self.hidden == 0 {
            return Err(Error::InvalidParameter("attention width must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |rows, cols| {
            DMatrix::from_fn(rows, cols, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                self.scale * z
            })
        };
        let n = g.n();
        let mut out = Vec::with_capacity(heads);
        for _ in 0..heads {
            let w = draw(h.ncols(), self.hidden);
            let a: DVector<f64> = draw(2 * self.hidden, 1).column(0).clone_owned();
            let z = h * &w;
            let src: DVector<f64> = &z * a.rows(0, self.hidden);
            let dst: DVector<f64> = &z * a.rows(self.hidden, self.hidden);
            let mut c = DMatrix::zeros(n, n);
            for i in 0..n {
                let support: Vec<usize> = std::iter::once(i).chain(g.neighbors(i)).collect();
                let scores: Vec<f64> = support
                    .iter()
                    .map(|&j| {
                        let e = src[i] + dst[j];
                        if e >= 0.0 {
                            e
                        } else {
                            self.negative_slope * e
                        }
                    })
                    .collect();
                let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
                let total: f64 = exps.iter().sum();
                for (&j, e) in support.iter().zip(exps) {
                    c[(i, j)] = e / total;
                }
            }
            out.push(c);
        }
        Ok(out)
    }
}

/// [`GatSampler::sample`] with default settings.
pub fn gat_sample_kernel(g: &Graph, heads: usize, seed: u64) -> Result<Vec<DMatrix<f64>>> {
    GatSampler::default().sample(g, heads, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_laplacian, make_ring, LaplacianKind};
    use crate::spectral::decompose;
    use nalgebra::dmatrix;

    fn ring_basis(n: usize) -> Arc<SpectralBasis> {
        let g = make_ring(n).unwrap();
        let l = build_laplacian(&g, LaplacianKind::SymmetricNormalized).unwrap();
        Arc::new(decompose(&l, LaplacianKind::SymmetricNormalized).unwrap())
    }

    #[test]
    fn allpass_is_identity() {
        let basis = ring_basis(8);
        let c = design_kernel(&basis, &FilterDesign::AllPass).unwrap();
        assert!((c - DMatrix::<f64>::identity(8, 8)).amax() < 1e-12);
    }

    #[test]
    fn eigenvalue_response_rebuilds_laplacian() {
        let g = make_ring(9).unwrap();
        let l = build_laplacian(&g, LaplacianKind::SymmetricNormalized).unwrap();
        let basis = decompose(&l, LaplacianKind::SymmetricNormalized).unwrap();
        let values = basis.eigenvalues().as_slice().to_vec();
        let c = design_kernel(&basis, &FilterDesign::Tabulated { values }).unwrap();
        assert!((c - l).amax() < 1e-10);
    }

    #[test]
    fn gcn_single_edge() {
        let g = Graph::from_adjacency(dmatrix![0.0, 1.0; 1.0, 0.0]).unwrap();
        assert_eq!(gcn_kernel(&g), dmatrix![0.5, 0.5; 0.5, 0.5]);
    }

    #[test]
    fn gcn_matches_two_term_decomposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = crate::graph::erdos_renyi(15, 0.3, &mut rng).unwrap();
        let d = g.degrees().map(|x| x + 1.0);
        let inv = DMatrix::from_diagonal(&d.map(|x| 1.0 / x));
        let inv_sqrt = DMatrix::from_diagonal(&d.map(|x| 1.0 / x.sqrt()));
        let oracle = inv + &inv_sqrt * g.adjacency() * &inv_sqrt;
        assert!((gcn_kernel(&g) - oracle).amax() < 1e-12);
    }

    #[test]
    fn chebyshev_first_supports() {
        let basis = ring_basis(8);
        let g = make_ring(8).unwrap();
        let l = build_laplacian(&g, LaplacianKind::SymmetricNormalized).unwrap();
        let set = cheb_kernels(&l, basis.lambda_max(), 1).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.support(0), &DMatrix::<f64>::identity(8, 8));
        assert!(cheb_kernels(&l, 0.0, 3).is_err());
    }

    #[test]
    fn nonparametric_supports_are_projectors() {
        let basis = ring_basis(6);
        let set = nonparametric_kernels(basis.clone()).unwrap();
        assert_eq!(set.len(), 6);
        for s in 0..6 {
            let u = basis.eigenvectors().column(s);
            assert!((set.support(s) - u * u.transpose()).amax() < 1e-12);
        }
    }

    #[test]
    fn attention_rows_are_stochastic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = crate::graph::erdos_renyi(12, 0.3, &mut rng).unwrap();
        let feats = DMatrix::from_fn(12, 5, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let g = g.with_features(feats).unwrap();
        for c in gat_sample_kernel(&g, 3, 1).unwrap() {
            for i in 0..12 {
                assert!((c.row(i).sum() - 1.0).abs() < 1e-10);
                for j in 0..12 {
                    if i != j && g.adjacency()[(i, j)] == 0.0 {
                        assert_eq!(c[(i, j)], 0.0);
                    }
                }
            }
        }
        assert_eq!(gat_sample_kernel(&g, 2, 5).unwrap(), gat_sample_kernel(&g, 2, 5).unwrap());
    }

    #[test]
    fn lone_node_attends_to_itself() {
        let g = Graph::new(DMatrix::zeros(3, 3), DMatrix::from_element(3, 2, 1.0)).unwrap();
        let c = &gat_sample_kernel(&g, 1, 0).unwrap()[0];
        assert_eq!(c, &DMatrix::<f64>::identity(3, 3));
    }

    #[test]
    fn designed_set_rejects_asymmetric_support() {
        let tags = vec![KernelTag::Designed { design: FilterDesign::AllPass }];
        assert!(KernelSet::new(vec![dmatrix![1.0, 0.1; 0.0, 1.0]], tags).is_err());
        assert!(KernelSet::new(vec![dmatrix![1.0, 0.1; 0.0, 1.0]], vec![KernelTag::Gcn]).is_ok());
    }
}
