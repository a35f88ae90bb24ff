//! Graph sources, kernel choices and basis construction shared by the
//! subcommands.

use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use specgconv::filter::{cayley_bmatrix, FilterDesign};
use specgconv::graph::{build_laplacian, make_ring, make_star, Graph, LaplacianKind};
use specgconv::io::{load_single_graph, load_tu_dataset};
use specgconv::kernels::{bmatrix_kernels, cheb_kernels, designed_kernels, gcn_kernel, KernelSet, KernelTag};
use specgconv::spectral::{decompose, BasisCache, SpectralBasis};

use crate::{CliError, CliResult};

/// Environment variable naming the on-disk eigendecomposition cache.
pub const CACHE_ENV: &str = "SPECGCONV_CACHE";

#[derive(Debug, Clone, PartialEq)]
pub enum KernelChoice {
    Gcn,
    /// Chebyshev supports `k = 1..=K`.
    Cheb(usize),
    Cayley { h: f64, r: usize },
    Designs(Vec<FilterDesign>),
    /// One sampled attention head per trial, starting at this seed.
    Gat { seed: u64 },
}

impl KernelChoice {
    /// `gcn`, `cheb:K`, `cayley:H:R`, `gat:SEED` or `design:EXPR[;EXPR...]`.
    pub fn parse(text: &str, base: Option<&Path>) -> CliResult<Self> {
        let bad = |why: &str| CliError::Config(format!("kernel `{text}`: {why}"));
        let (head, rest) = text.split_once(':').unwrap_or((text, ""));
        match head.trim() {
            "gcn" if rest.is_empty() => Ok(KernelChoice::Gcn),
            "cheb" => match rest.trim().parse::<usize>() {
                Ok(k) if k >= 1 => Ok(KernelChoice::Cheb(k)),
                _ => Err(bad("expected cheb:K with K >= 1")),
            },
            "cayley" => {
                let (h, r) = rest.split_once(':').ok_or_else(|| bad("expected cayley:H:R"))?;
                let h: f64 = h.trim().parse().map_err(|_| bad("bad zoom H"))?;
                let r: usize = r.trim().parse().map_err(|_| bad("bad order R"))?;
                if !(h > 0.0 && h.is_finite()) || r == 0 {
                    return Err(bad("need H > 0 and R >= 1"));
                }
                Ok(KernelChoice::Cayley { h, r })
            }
            "gat" => {
                let seed = if rest.is_empty() { 0 } else { rest.trim().parse().map_err(|_| bad("bad seed"))? };
                Ok(KernelChoice::Gat { seed })
            }
            "design" => {
                let designs = parse_designs(rest.split(';'), base)?;
                if designs.is_empty() {
                    return Err(bad("no design expressions"));
                }
                Ok(KernelChoice::Designs(designs))
            }
            _ => Err(bad("expected gcn, cheb:K, cayley:H:R, gat:SEED or design:EXPR")),
        }
    }
}

pub fn parse_designs<'a>(texts: impl IntoIterator<Item = &'a str>, base: Option<&Path>) -> CliResult<Vec<FilterDesign>> {
    texts
        .into_iter()
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            let d = FilterDesign::parse_with_base(t, base)?;
            d.validate()?;
            Ok(d)
        })
        .collect()
}

/// `ring<N>`, `star<LEAVES>`, a single-graph dataset directory (with
/// `edges.csv`) or a TU dataset directory, from which graph `index` is taken.
pub fn load_graph(source: &str, index: usize) -> CliResult<Graph> {
    let synthetic = |prefix: &str| -> Option<CliResult<usize>> {
        let digits = source.strip_prefix(prefix)?;
        Some(digits.parse().map_err(|_| CliError::Config(format!("bad graph size in `{source}`"))))
    };
    if let Some(n) = synthetic("ring") {
        return Ok(make_ring(n?)?);
    }
    if let Some(n) = synthetic("star") {
        return Ok(make_star(n?)?);
    }
    let dir = Path::new(source);
    if !dir.is_dir() {
        return Err(CliError::Config(format!("graph source `{source}` is neither ring<N>, star<N> nor a directory")));
    }
    if dir.join("edges.csv").exists() {
        return Ok(load_single_graph(dir)?.graph().clone());
    }
    let set = load_tu_dataset(dir, None, false)?;
    set.graphs()
        .get(index)
        .cloned()
        .ok_or_else(|| CliError::Config(format!("graph index {index} out of range ({} graphs)", set.len())))
}

/// Replaces the features with `dim` unit-norm Gaussian columns per node.
pub fn random_unit_features(g: Graph, dim: usize, seed: u64) -> CliResult<Graph> {
    if dim == 0 {
        return Err(CliError::Config("feature width must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::from_fn(g.n(), dim, |_, _| StandardNormal.sample(&mut rng));
    for mut row in x.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
    Ok(g.with_features(x)?)
}

/// Decomposes `laplacian`, through the cache named by `SPECGCONV_CACHE` when set.
pub fn basis(laplacian: &DMatrix<f64>, kind: LaplacianKind) -> CliResult<SpectralBasis> {
    Ok(match std::env::var_os(CACHE_ENV) {
        Some(dir) if !dir.is_empty() => BasisCache::new(dir).get_or_decompose(laplacian, kind)?,
        _ => decompose(laplacian, kind)?,
    })
}

pub struct Built {
    pub kernels: KernelSet,
    pub basis: Option<Arc<SpectralBasis>>,
}

pub fn build_kernels(g: &Graph, kind: LaplacianKind, choice: &KernelChoice) -> CliResult<Built> {
    if let KernelChoice::Gcn = choice {
        let kernels = KernelSet::new(vec![gcn_kernel(g)], vec![KernelTag::Gcn])?;
        return Ok(Built { kernels, basis: None });
    }
    let laplacian = build_laplacian(g, kind)?;
    let b = Arc::new(basis(&laplacian, kind)?);
    let kernels = match choice {
        KernelChoice::Gcn => unreachable!(),
        KernelChoice::Cheb(k) => cheb_kernels(&laplacian, b.lambda_max(), *k)?,
        KernelChoice::Cayley { h, r } => bmatrix_kernels(b.clone(), &cayley_bmatrix(&b, *h, *r)?)?,
        KernelChoice::Designs(designs) => designed_kernels(b.clone(), designs)?,
        KernelChoice::Gat { .. } => {
            return Err(CliError::Config("attention supports are sampled by `analyze` only".into()));
        }
    };
    Ok(Built { kernels, basis: Some(b) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_choices_parse() {
        assert_eq!(KernelChoice::parse("gcn", None).unwrap(), KernelChoice::Gcn);
        assert_eq!(KernelChoice::parse("cheb:3", None).unwrap(), KernelChoice::Cheb(3));
        assert_eq!(KernelChoice::parse("cayley:0.5:2", None).unwrap(), KernelChoice::Cayley { h: 0.5, r: 2 });
        assert_eq!(KernelChoice::parse("gat:7", None).unwrap(), KernelChoice::Gat { seed: 7 });
        match KernelChoice::parse("design:lowpass(eta=2); bandpass(c=0.5,gamma=1)", None).unwrap() {
            KernelChoice::Designs(d) => assert_eq!(d.len(), 2),
            other => panic!("{other:?}"),
        }
        for bad in ["cheb:0", "cheb", "gcn:1", "cayley:1", "design:", "design:lowpass(eta=-1)", "spline"] {
            assert!(KernelChoice::parse(bad, None).is_err(), "{bad}");
        }
    }

    #[test]
    fn synthetic_sources() {
        assert_eq!(load_graph("ring12", 0).unwrap().n(), 12);
        assert_eq!(load_graph("star5", 0).unwrap().n(), 6);
        assert!(load_graph("ringx", 0).is_err());
        let g = random_unit_features(make_ring(5).unwrap(), 4, 1).unwrap();
        for row in g.features().row_iter() {
            assert!((row.norm() - 1.0).abs() < 1e-12);
        }
    }
}
