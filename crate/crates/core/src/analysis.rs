//! Frequency profiles of arbitrary supports.
//!
//! The full profile of a support `C` is `U^T C U`; its diagonal, aligned to
//! the ascending eigenvalues, is the standard profile.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::io;
use crate::kernels::{GatSampler, KernelTag};
use crate::spectral::SpectralBasis;

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyProfile {
    pub lambda: DVector<f64>,
    pub standard: DVector<f64>,
    pub full: DMatrix<f64>,
    pub tag: Option<KernelTag>,
}

impl FrequencyProfile {
    /// Largest off-diagonal magnitude of the full profile.
    pub fn off_diagonal_max(&self) -> f64 {
        let n = self.full.nrows();
        let mut worst = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                if i != j {
                    worst = worst.max(self.full[(i, j)].abs());
                }
            }
        }
        worst
    }

    /// Groups eigenvalues closer than `tol` into eigenspaces and returns
    /// `(mean eigenvalue, multiplicity, trace of the full profile on the
    /// eigenspace)`. Unlike the standard profile these traces do not depend
    /// on the basis chosen inside a repeated eigenspace.
    pub fn eigenspace_traces(&self, tol: f64) -> Vec<(f64, usize, f64)> {
        let mut out: Vec<(f64, usize, f64)> = Vec::new();
        let mut start = 0;
        let n = self.lambda.len();
        for i in 1..=n {
            if i == n || self.lambda[i] - self.lambda[i - 1] > tol {
                let m = i - start;
                let mean = self.lambda.rows(start, m).sum() / m as f64;
                let trace = (start..i).map(|k| self.full[(k, k)]).sum();
                out.push((mean, m, trace));
                start = i;
            }
        }
        out
    }
}

/// Back-calculates `U^T C U` and its diagonal.
pub fn profile(c: &DMatrix<f64>, basis: &SpectralBasis) -> Result<FrequencyProfile> {
    let n = basis.n();
    if c.shape() != (n, n) {
        return Err(Error::DimensionMismatch { what: "support size", expected: n, actual: c.nrows() });
    }
    let u = basis.eigenvectors();
    let full = u.tr_mul(&(c * u));
    let standard = full.diagonal();
    Ok(FrequencyProfile { lambda: basis.eigenvalues().clone(), standard, full, tag: None })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Deviation {
    pub max_abs: f64,
    pub rms: f64,
}

pub fn profile_deviation(p: &FrequencyProfile, oracle: &[f64]) -> Result<Deviation> {
    let n = p.standard.len();
    if oracle.len() != n {
        return Err(Error::DimensionMismatch { what: "oracle length", expected: n, actual: oracle.len() });
    }
    if n == 0 {
        return Ok(Deviation { max_abs: 0.0, rms: 0.0 });
    }
    let (mut max_abs, mut sq) = (0.0f64, 0.0);
    for (a, b) in p.standard.iter().zip(oracle) {
        let d = (a - b).abs();
        max_abs = max_abs.max(d);
        sq += d * d;
    }
    Ok(Deviation { max_abs, rms: (sq / n as f64).sqrt() })
}

/// Elementwise mean and population standard deviation of sampled
/// attention profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct GatProfileStats {
    pub trials: usize,
    pub lambda: DVector<f64>,
    pub mean_standard: DVector<f64>,
    pub std_standard: DVector<f64>,
    pub mean_full: DMatrix<f64>,
    pub std_full: DMatrix<f64>,
}

/// Trial `t` draws one attention head with seed `seed + t`.
pub fn gat_profile_stats(
    g: &Graph,
    basis: &SpectralBasis,
    sampler: &GatSampler,
    trials: usize,
    seed: u64,
) -> Result<GatProfileStats> {
    if trials == 0 {
        return Err(Error::InvalidParameter("at least one trial is required".into()));
    }
    let n = basis.n();
    let mut mean = DMatrix::<f64>::zeros(n, n);
    let mut m2 = DMatrix::<f64>::zeros(n, n);
    for t in 0..trials {
        let c = sampler.sample(g, 1, seed.wrapping_add(t as u64))?.remove(0);
        let full = profile(&c, basis)?.full;
        // Welford update
        let k = (t + 1) as f64;
        let delta = &full - &mean;
        mean += &delta / k;
        m2 += delta.component_mul(&(&full - &mean));
    }
    let var = m2 / trials as f64;
    let std_full = var.map(|v| v.max(0.0).sqrt());
    Ok(GatProfileStats {
        trials,
        lambda: basis.eigenvalues().clone(),
        mean_standard: mean.diagonal(),
        std_standard: std_full.diagonal(),
        mean_full: mean,
        std_full,
    })
}

/// Writes `lambda,standard` rows to `path` and, if given, the full profile
/// matrix to `full_path`. `abs` stores magnitudes instead of signed values.
pub fn export_profile(p: &FrequencyProfile, path: &Path, full_path: Option<&Path>, abs: bool) -> Result<()> {
    let standard: Vec<f64> = if abs {
        p.standard.iter().map(|v| v.abs()).collect()
    } else {
        p.standard.as_slice().to_vec()
    };
    io::write_columns_csv(path, &["lambda", "standard"], &[p.lambda.as_slice(), &standard])?;
    if let Some(fp) = full_path {
        let full = if abs { p.full.abs() } else { p.full.clone() };
        io::write_matrix_csv(fp, &full)?;
    }
    Ok(())
}

/// Reads back the `(lambda, standard)` columns written by [`export_profile`].
pub fn import_profile(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    Ok((io::read_column_csv(path, "lambda")?, io::read_column_csv(path, "standard")?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_laplacian, make_ring, LaplacianKind};
    use crate::kernels::gcn_kernel;
    use crate::spectral::decompose;
    use rand::SeedableRng;

    fn basis_of(g: &Graph) -> SpectralBasis {
        let l = build_laplacian(g, LaplacianKind::SymmetricNormalized).unwrap();
        decompose(&l, LaplacianKind::SymmetricNormalized).unwrap()
    }

    #[test]
    fn identity_profile() {
        let g = make_ring(7).unwrap();
        let b = basis_of(&g);
        let p = profile(&DMatrix::identity(7, 7), &b).unwrap();
        assert!(p.standard.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(p.off_diagonal_max() < 1e-12);
        assert!(profile(&DMatrix::identity(3, 3), &b).is_err());
    }

    #[test]
    fn standard_is_exact_diagonal() {
        let g = make_ring(10).unwrap();
        let b = basis_of(&g);
        let p = profile(&gcn_kernel(&g), &b).unwrap();
        for i in 0..10 {
            assert_eq!(p.standard[i].to_bits(), p.full[(i, i)].to_bits());
        }
    }

    #[test]
    fn irregular_gcn_leaks_off_diagonal() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let g = crate::graph::erdos_renyi(20, 0.2, &mut rng).unwrap();
        let p = profile(&gcn_kernel(&g), &basis_of(&g)).unwrap();
        assert!(p.off_diagonal_max() > 1e-3);
    }

    #[test]
    fn deviation_of_identical_vectors() {
        let g = make_ring(5).unwrap();
        let p = profile(&DMatrix::identity(5, 5), &basis_of(&g)).unwrap();
        let same = p.standard.as_slice().to_vec();
        let d = profile_deviation(&p, &same).unwrap();
        assert_eq!((d.max_abs, d.rms), (0.0, 0.0));
        assert!(profile_deviation(&p, &[1.0; 4]).is_err());
    }

    #[test]
    fn eigenspace_traces_are_basis_free() {
        // ring spectra are doubly degenerate; the trace of GCN's full profile
        // over each eigenspace is the response times the multiplicity
        let g = make_ring(12).unwrap();
        let p = profile(&gcn_kernel(&g), &basis_of(&g)).unwrap();
        let traces = p.eigenspace_traces(1e-9);
        assert_eq!(traces.iter().map(|t| t.1).sum::<usize>(), 12);
        assert_eq!(traces.len(), 7);
        for (l, m, tr) in traces {
            assert!((tr - m as f64 * (1.0 - 2.0 * l / 3.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn single_trial_has_zero_spread() {
        let g = make_ring(6).unwrap().with_features(DMatrix::from_fn(6, 2, |i, j| (i + j) as f64)).unwrap();
        let b = basis_of(&g);
        let s = gat_profile_stats(&g, &b, &GatSampler::default(), 1, 3).unwrap();
        assert!(s.std_full.iter().all(|&v| v == 0.0));
        assert!(gat_profile_stats(&g, &b, &GatSampler::default(), 0, 3).is_err());
    }

    #[test]
    fn export_roundtrip_and_abs() {
        let g = make_ring(5).unwrap();
        let b = basis_of(&g);
        let p = profile(&gcn_kernel(&g), &b).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let full = dir.path().join("full.csv");
        export_profile(&p, &path, Some(&full), false).unwrap();
        let (l, s) = import_profile(&path).unwrap();
        assert_eq!(l, p.lambda.as_slice());
        assert_eq!(s, p.standard.as_slice());
        assert_eq!(io::read_matrix_csv(&full).unwrap(), p.full);
        export_profile(&p, &path, None, true).unwrap();
        let (_, s) = import_profile(&path).unwrap();
        assert!(s.iter().all(|v| *v >= 0.0));
    }
}
