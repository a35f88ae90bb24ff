//! Deterministic symmetric eigendecomposition of a graph Laplacian.
//!
//! Eigenvalues are sorted ascending (stable on ties) and every eigenvector
//! column is oriented so that its entry of largest magnitude (smallest index
//! on ties) is nonnegative. Two decompositions of the same matrix are
//! therefore bit-identical.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::LaplacianKind;
use crate::io;

/// Symmetry tolerance accepted on input.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Orthonormality and reconstruction tolerance of a valid basis.
pub const BASIS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    kind: LaplacianKind,
}

impl SpectralBasis {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// Eigenvector `s` is column `s`.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn kind(&self) -> LaplacianKind {
        self.kind
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues.as_slice().last().copied().unwrap_or(0.0)
    }

    /// Graph Fourier transform `U^T x`.
    pub fn fourier(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(x.len())?;
        Ok(self.eigenvectors.tr_mul(x))
    }

    /// Inverse transform `U x_ft`.
    pub fn inverse_fourier(&self, x_ft: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(x_ft.len())?;
        Ok(&self.eigenvectors * x_ft)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n() {
            return Err(Error::DimensionMismatch { what: "signal length", expected: self.n(), actual: len });
        }
        Ok(())
    }

    /// Checks orthonormality, reconstruction of `laplacian` and the
    /// eigenvalue range of the basis kind.
    pub fn validate(&self, laplacian: &DMatrix<f64>) -> Result<()> {
        let n = self.n();
        if self.eigenvectors.shape() != (n, n) || laplacian.shape() != (n, n) {
            return Err(Error::InvalidBasis("shape mismatch".into()));
        }
        if self.eigenvalues.iter().zip(self.eigenvalues.iter().skip(1)).any(|(a, b)| a > b) {
            return Err(Error::InvalidBasis("eigenvalues are not ascending".into()));
        }
        let gram = self.eigenvectors.tr_mul(&self.eigenvectors);
        let ortho = (gram - DMatrix::<f64>::identity(n, n)).amax();
        if !(ortho <= BASIS_TOL) {
            return Err(Error::InvalidBasis(format!("orthonormality deviation {ortho:e}")));
        }
        let recon = (self.synthesize(self.eigenvalues.as_slice()) - laplacian).amax();
        if !(recon <= BASIS_TOL) {
            return Err(Error::InvalidBasis(format!("reconstruction deviation {recon:e}")));
        }
        let lo = self.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if n > 0 && lo < -BASIS_TOL {
            return Err(Error::InvalidBasis(format!("negative eigenvalue {lo:e}")));
        }
        if self.kind == LaplacianKind::SymmetricNormalized && self.lambda_max() > 2.0 + BASIS_TOL {
            return Err(Error::InvalidBasis(format!("lambda_max {} exceeds 2", self.lambda_max())));
        }
        Ok(())
    }

    /// `U diag(response) U^T`, mirrored to exact symmetry.
    pub fn synthesize(&self, response: &[f64]) -> DMatrix<f64> {
        let u = &self.eigenvectors;
        let mut scaled = u.clone();
        for (mut col, &f) in scaled.column_iter_mut().zip(response) {
            col *= f;
        }
        let mut c = scaled * u.transpose();
        symmetrize(&mut c);
        c
    }
}

pub(crate) fn symmetrize(c: &mut DMatrix<f64>) {
    let n = c.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
}

pub(crate) fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Eigendecomposes a symmetric Laplacian into a validated [`SpectralBasis`].
pub fn decompose(laplacian: &DMatrix<f64>, kind: LaplacianKind) -> Result<SpectralBasis> {
    let (rows, cols) = laplacian.shape();
    if rows != cols {
        return Err(Error::NotSquare { rows, cols });
    }
    if laplacian.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("laplacian"));
    }
    let asym = max_asymmetry(laplacian);
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    let n = rows;
    let max_iter = 1000 * n.max(1);
    let eig = SymmetricEigen::try_new(laplacian.clone(), f64::EPSILON, max_iter).ok_or(Error::NoConvergence)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).clone_owned();
        orient(col.as_mut_slice());
        eigenvectors.set_column(dst, &col);
    }

    let basis = SpectralBasis { eigenvalues, eigenvectors, kind };
    basis.validate(laplacian)?;
    Ok(basis)
}

/// Flips `v` so that its largest-magnitude entry (first on ties) is >= 0.
fn orient(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// On-disk cache of decompositions keyed by a content hash of the Laplacian.
///
/// Entries are two CSV matrices (`<key>.eigenvalues.csv`, `<key>.eigenvectors.csv`).
/// A cached basis that fails validation against the requested Laplacian is
/// deleted and recomputed.
#[derive(Debug, Clone)]
pub struct BasisCache {
    dir: PathBuf,
}

impl BasisCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        BasisCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key(laplacian: &DMatrix<f64>, kind: LaplacianKind) -> String {
        let mut hasher = Sha256::new();
        hasher.update(kind.to_string().as_bytes());
        hasher.update((laplacian.nrows() as u64).to_le_bytes());
        for v in laplacian.iter() {
            hasher.update(v.to_le_bytes());
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn paths(&self, key: &str) -> (PathBuf, PathBuf) {
        (
            self.dir.join(format!("{key}.eigenvalues.csv")),
            self.dir.join(format!("{key}.eigenvectors.csv")),
        )
    }

    /// Returns the cached basis if present and valid, otherwise decomposes
    /// and stores the result.
    pub fn get_or_decompose(&self, laplacian: &DMatrix<f64>, kind: LaplacianKind) -> Result<SpectralBasis> {
        let key = Self::key(laplacian, kind);
        let (values_path, vectors_path) = self.paths(&key);
        if values_path.exists() && vectors_path.exists() {
            match self.load(&values_path, &vectors_path, laplacian, kind) {
                Ok(basis) => return Ok(basis),
                Err(e) => {
                    log::warn!("discarding cached basis {key}: {e}");
                    let _ = std::fs::remove_file(&values_path);
                    let _ = std::fs::remove_file(&vectors_path);
                }
            }
        }
        let basis = decompose(laplacian, kind)?;
        std::fs::create_dir_all(&self.dir)?;
        let values = DMatrix::from_column_slice(basis.n(), 1, basis.eigenvalues.as_slice());
        io::write_matrix_csv(&values_path, &values)?;
        io::write_matrix_csv(&vectors_path, &basis.eigenvectors)?;
        Ok(basis)
    }

    fn load(
        &self,
        values_path: &Path,
        vectors_path: &Path,
        laplacian: &DMatrix<f64>,
        kind: LaplacianKind,
    ) -> Result<SpectralBasis> {
        let values = io::read_matrix_csv(values_path)?;
        let vectors = io::read_matrix_csv(vectors_path)?;
        if values.ncols() != 1 {
            return Err(Error::InvalidBasis("eigenvalue file must have one column".into()));
        }
        let basis = SpectralBasis {
            eigenvalues: values.column(0).clone_owned(),
            eigenvectors: vectors,
            kind,
        };
        basis.validate(laplacian)?;
        Ok(basis)
    }
}
