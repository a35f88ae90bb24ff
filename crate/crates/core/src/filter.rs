//! Spectral responses `F(λ)` evaluated on the eigenvalues of a basis.
//!
//! Every design has a canonical textual form used by configuration files:
//!
//! ```text
//! lowpass(eta=5)             (1 - λ/λmax)^eta
//! highpass                   λ/λmax
//! bandpass(c=0.5,gamma=0.25) exp(-gamma (c λmax - λ)^2)
//! allpass                    1
//! explowpass(tau=10)         exp(-λ/tau)
//! oneminusratio              1 - λ/λmax
//! cheb(k=3)                  k-th Chebyshev response, F_1 = 1, F_2 = 2λ/λmax - 1
//! cayley(s=4,h=1,r=3)        s-th column of the CayleyNet real-coefficient basis
//! tabulated(file=resp.csv)   one value per ascending eigenvalue
//! ```

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::SpectralBasis;

/// Grid size of the spectrum-coverage diagnostic.
pub const COVERAGE_GRID: usize = 256;
/// Coverage below this value triggers a warning in the CLI.
pub const COVERAGE_WARN: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FilterDesign {
    LowPass { eta: f64 },
    HighPass,
    /// `center` is a fraction of λmax.
    BandPass { center: f64, gamma: f64 },
    AllPass,
    ExpLowPass { tau: f64 },
    OneMinusRatio,
    ChebBasis { k: usize },
    CayleyBasis { s: usize, h: f64, r: usize },
    Tabulated { values: Vec<f64> },
}

impl FilterDesign {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match *self {
            FilterDesign::LowPass { eta } if !(eta > 0.0 && eta.is_finite()) => bad(format!("lowpass eta={eta}")),
            FilterDesign::BandPass { center, gamma }
                if !((0.0..=1.0).contains(&center) && gamma > 0.0 && gamma.is_finite()) =>
            {
                bad(format!("bandpass c={center}, gamma={gamma}"))
            }
            FilterDesign::ExpLowPass { tau } if !(tau > 0.0 && tau.is_finite()) => bad(format!("explowpass tau={tau}")),
            FilterDesign::ChebBasis { k } if k == 0 => bad("cheb k must be >= 1".into()),
            FilterDesign::CayleyBasis { s, h, r } if !(h > 0.0 && h.is_finite() && r >= 1 && s >= 1 && s <= 2 * r + 1) => {
                bad(format!("cayley s={s}, h={h}, r={r}"))
            }
            FilterDesign::Tabulated { ref values } if values.iter().any(|v| !v.is_finite()) => {
                bad("tabulated response has non-finite values".into())
            }
            _ => Ok(()),
        }
    }

    fn uses_lambda_max(&self) -> bool {
        matches!(
            self,
            FilterDesign::LowPass { .. }
                | FilterDesign::HighPass
                | FilterDesign::BandPass { .. }
                | FilterDesign::OneMinusRatio
                | FilterDesign::ChebBasis { .. }
        )
    }

    /// Evaluates the response at arbitrary `lambdas`.
    pub fn evaluate_at(&self, lambdas: &[f64], lambda_max: f64) -> Result<Vec<f64>> {
        self.validate()?;
        if self.uses_lambda_max() && lambda_max == 0.0 {
            return Err(Error::ZeroLambdaMax);
        }
        let map = |f: &dyn Fn(f64) -> f64| lambdas.iter().map(|&l| f(l)).collect::<Vec<f64>>();
        Ok(match *self {
            FilterDesign::LowPass { eta } => map(&|l| (1.0 - l / lambda_max).powf(eta)),
            FilterDesign::HighPass => map(&|l| l / lambda_max),
            FilterDesign::BandPass { center, gamma } => map(&|l| (-gamma * (center * lambda_max - l).powi(2)).exp()),
            FilterDesign::AllPass => vec![1.0; lambdas.len()],
            FilterDesign::ExpLowPass { tau } => map(&|l| (-l / tau).exp()),
            FilterDesign::OneMinusRatio => map(&|l| 1.0 - l / lambda_max),
            FilterDesign::ChebBasis { k } => map(&|l| chebyshev_response(k, l, lambda_max)),
            FilterDesign::CayleyBasis { s, h, .. } => map(&|l| cayley_column(s, h * l)),
            FilterDesign::Tabulated { ref values } => {
                if values.len() != lambdas.len() {
                    return Err(Error::DimensionMismatch {
                        what: "tabulated response length",
                        expected: lambdas.len(),
                        actual: values.len(),
                    });
                }
                values.clone()
            }
        })
    }

    /// Evaluates the response on the ascending eigenvalues of `basis`.
    pub fn evaluate(&self, basis: &SpectralBasis) -> Result<DVector<f64>> {
        let values = self.evaluate_at(basis.eigenvalues().as_slice(), basis.lambda_max())?;
        Ok(DVector::from_vec(values))
    }

    /// Parses the textual form. `tabulated(file=...)` reads the file,
    /// resolving relative paths against `base_dir`.
    pub fn parse_with_base(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let err = |reason: &str| Error::DesignParse { text: text.to_owned(), reason: reason.to_owned() };
        let text_trim = text.trim();
        let (name, args) = match text_trim.find('(') {
            Some(open) => {
                if !text_trim.ends_with(')') {
                    return Err(err("missing closing parenthesis"));
                }
                (&text_trim[..open], &text_trim[open + 1..text_trim.len() - 1])
            }
            None => (text_trim, ""),
        };
        let mut pairs: Vec<(String, String)> = Vec::new();
        for part in args.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(|| err("arguments must be key=value"))?;
            pairs.push((k.trim().to_ascii_lowercase(), v.trim().to_owned()));
        }
        let take = |keys: &[&str]| -> Option<&str> {
            pairs.iter().find(|(k, _)| keys.contains(&k.as_str())).map(|(_, v)| v.as_str())
        };
        let real = |keys: &[&str]| -> Result<f64> {
            let v = take(keys).ok_or_else(|| err(&format!("missing `{}`", keys[0])))?;
            v.parse::<f64>().map_err(|_| err(&format!("`{v}` is not a number")))
        };
        let count = |keys: &[&str]| -> Result<usize> {
            let v = take(keys).ok_or_else(|| err(&format!("missing `{}`", keys[0])))?;
            v.parse::<usize>().map_err(|_| err(&format!("`{v}` is not a count")))
        };
        let known: &[&str] = match name.to_ascii_lowercase().as_str() {
            "lowpass" => &["eta"],
            "bandpass" => &["c", "center", "gamma"],
            "explowpass" => &["tau"],
            "cheb" => &["k"],
            "cayley" => &["s", "h", "r"],
            "tabulated" => &["file"],
            _ => &[],
        };
        if let Some((k, _)) = pairs.iter().find(|(k, _)| !known.contains(&k.as_str())) {
            return Err(err(&format!("unexpected argument `{k}`")));
        }
        let design = match name.to_ascii_lowercase().as_str() {
            "lowpass" => FilterDesign::LowPass { eta: real(&["eta"])? },
            "highpass" => FilterDesign::HighPass,
            "bandpass" => FilterDesign::BandPass { center: real(&["c", "center"])?, gamma: real(&["gamma"])? },
            "allpass" => FilterDesign::AllPass,
            "explowpass" => FilterDesign::ExpLowPass { tau: real(&["tau"])? },
            "oneminusratio" => FilterDesign::OneMinusRatio,
            "cheb" => FilterDesign::ChebBasis { k: count(&["k"])? },
            "cayley" => FilterDesign::CayleyBasis { s: count(&["s"])?, h: real(&["h"])?, r: count(&["r"])? },
            "tabulated" => {
                let file = take(&["file"]).ok_or_else(|| err("missing `file`"))?;
                let path = match base_dir {
                    Some(base) if Path::new(file).is_relative() => base.join(file),
                    _ => Path::new(file).to_path_buf(),
                };
                FilterDesign::Tabulated { values: read_tabulated(&path)? }
            }
            _ => return Err(err("unknown filter family")),
        };
        design.validate().map_err(|e| err(&e.to_string()))?;
        Ok(design)
    }
}

/// Reads a response column named `value` or `standard` (the profile export
/// format), falling back to the first column.
fn read_tabulated(path: &Path) -> Result<Vec<f64>> {
    let (header, rows) = crate::io::read_numeric_csv(path)?;
    let idx = header
        .iter()
        .position(|h| h == "value")
        .or_else(|| header.iter().position(|h| h == "standard"))
        .unwrap_or(0);
    rows.iter()
        .map(|r| r.get(idx).copied().ok_or_else(|| Error::Dataset(format!("{}: short row", path.display()))))
        .collect()
}

impl std::str::FromStr for FilterDesign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse_with_base(s, None)
    }
}

impl fmt::Display for FilterDesign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterDesign::LowPass { eta } => write!(f, "lowpass(eta={eta})"),
            FilterDesign::HighPass => f.write_str("highpass"),
            FilterDesign::BandPass { center, gamma } => write!(f, "bandpass(c={center},gamma={gamma})"),
            FilterDesign::AllPass => f.write_str("allpass"),
            FilterDesign::ExpLowPass { tau } => write!(f, "explowpass(tau={tau})"),
            FilterDesign::OneMinusRatio => f.write_str("oneminusratio"),
            FilterDesign::ChebBasis { k } => write!(f, "cheb(k={k})"),
            FilterDesign::CayleyBasis { s, h, r } => write!(f, "cayley(s={s},h={h},r={r})"),
            FilterDesign::Tabulated { values } => write!(f, "tabulated(len={})", values.len()),
        }
    }
}

/// `F_k(λ)` via `F_k = 2 F_2 F_{k-1} - F_{k-2}`.
fn chebyshev_response(k: usize, lambda: f64, lambda_max: f64) -> f64 {
    let x = 2.0 * lambda / lambda_max - 1.0;
    let (mut prev, mut cur) = (1.0, x);
    match k {
        1 => 1.0,
        2 => x,
        _ => {
            for _ in 3..=k {
                let next = 2.0 * x * cur - prev;
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// `θ(x) = atan2(-1, x) - atan2(1, x)`, valued in `(-2π, 0)`.
pub fn cayley_theta(x: f64) -> f64 {
    (-1.0f64).atan2(x) - 1.0f64.atan2(x)
}

/// Column `s` (1-based) of the CayleyNet basis at scaled eigenvalue `x = hλ`.
fn cayley_column(s: usize, x: f64) -> f64 {
    if s == 1 {
        1.0
    } else if s % 2 == 0 {
        ((s / 2) as f64 * cayley_theta(x)).cos()
    } else {
        -(((s - 1) / 2) as f64 * cayley_theta(x)).sin()
    }
}

/// `n × S` matrix whose column `s` is `F_s(λ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BMatrix(DMatrix<f64>);

impl BMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.ncols() == 0 {
            return Err(Error::InvalidParameter("a B matrix needs at least one column".into()));
        }
        Ok(BMatrix(matrix))
    }

    pub fn from_designs(designs: &[FilterDesign], basis: &SpectralBasis) -> Result<Self> {
        let columns = designs.iter().map(|d| d.evaluate(basis)).collect::<Result<Vec<_>>>()?;
        if columns.is_empty() {
            return Err(Error::InvalidParameter("a B matrix needs at least one column".into()));
        }
        Ok(BMatrix(DMatrix::from_columns(&columns)))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn supports(&self) -> usize {
        self.0.ncols()
    }

    pub fn column(&self, s: usize) -> DVector<f64> {
        self.0.column(s).clone_owned()
    }
}

/// CayleyNet basis with `2r + 1` columns: ones, then alternating
/// `cos(k θ(hλ))` and `-sin(k θ(hλ))` for `k = 1..r`.
pub fn cayley_bmatrix(basis: &SpectralBasis, h: f64, r: usize) -> Result<BMatrix> {
    let designs: Vec<FilterDesign> = (1..=2 * r + 1).map(|s| FilterDesign::CayleyBasis { s, h, r }).collect();
    if r == 0 {
        return Err(Error::InvalidParameter("cayley order r must be >= 1".into()));
    }
    BMatrix::from_designs(&designs, basis)
}

/// Regular-graph GCN response with the degree replaced by the average
/// degree: `1 - λ d̄/(d̄+1)`.
pub fn gcn_theoretical_profile(d_bar: f64, lambdas: &[f64]) -> Result<Vec<f64>> {
    if !(d_bar > 0.0) {
        return Err(Error::InvalidParameter(format!("average degree {d_bar} must be positive")));
    }
    Ok(lambdas.iter().map(|&l| 1.0 - l * d_bar / (d_bar + 1.0)).collect())
}

/// Zero crossing of [`gcn_theoretical_profile`]: `(d̄+1)/d̄`.
pub fn gcn_cutoff(d_bar: f64) -> Result<f64> {
    if !(d_bar > 0.0) {
        return Err(Error::InvalidParameter(format!("average degree {d_bar} must be positive")));
    }
    Ok((d_bar + 1.0) / d_bar)
}

/// Minimum of `Σ_s F_s(λ)` over a uniform grid of [`COVERAGE_GRID`] points on `[0, λmax]`.
pub fn coverage(designs: &[FilterDesign], lambda_max: f64) -> Result<f64> {
    let grid: Vec<f64> = (0..COVERAGE_GRID)
        .map(|i| lambda_max * i as f64 / (COVERAGE_GRID - 1) as f64)
        .collect();
    let mut total = vec![0.0; COVERAGE_GRID];
    for d in designs {
        if matches!(d, FilterDesign::Tabulated { .. }) {
            return Err(Error::InvalidParameter("coverage is undefined for tabulated responses".into()));
        }
        for (t, v) in total.iter_mut().zip(d.evaluate_at(&grid, lambda_max)?) {
            *t += v;
        }
    }
    Ok(total.into_iter().fold(f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    /// `c0 + 2 Re(Σ c_k ((hλ - i)/(hλ + i))^k)` with `c_k = (a_k + i b_k)/2`.
    fn complex_g(lambda: f64, h: f64, c0: f64, a: &[f64], b: &[f64]) -> f64 {
        let z = Complex64::new(h * lambda, -1.0) / Complex64::new(h * lambda, 1.0);
        let sum: Complex64 = (0..a.len())
            .map(|k| Complex64::new(a[k] / 2.0, b[k] / 2.0) * z.powu(k as u32 + 1))
            .sum();
        c0 + 2.0 * sum.re
    }

    #[test]
    fn lowpass_vanishes_at_lambda_max() {
        let v = FilterDesign::LowPass { eta: 1.0 }.evaluate_at(&[0.0, 2.0], 2.0).unwrap();
        assert_eq!(v, vec![1.0, 0.0]);
    }

    #[test]
    fn second_chebyshev_response() {
        let v = FilterDesign::ChebBasis { k: 2 }.evaluate_at(&[0.0, 1.0, 2.0], 2.0).unwrap();
        assert_eq!(v, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn third_chebyshev_response_follows_recursion() {
        // 2(λ-1)^2 - 1 = 2λ^2 - 4λ + 1 for λmax = 2
        let l = [0.0, 0.3, 1.0, 1.7, 2.0];
        let v = FilterDesign::ChebBasis { k: 3 }.evaluate_at(&l, 2.0).unwrap();
        for (x, y) in l.iter().zip(v) {
            assert!((y - (2.0 * x * x - 4.0 * x + 1.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn chebyshev_matches_trigonometric_identity() {
        for k in 1..=8 {
            for i in 0..=50 {
                let lambda = 2.0 * i as f64 / 50.0;
                let x: f64 = lambda - 1.0;
                let oracle = ((k - 1) as f64 * x.acos()).cos();
                let v = FilterDesign::ChebBasis { k }.evaluate_at(&[lambda], 2.0).unwrap()[0];
                assert!((v - oracle).abs() < 1e-9, "k={k} λ={lambda}");
            }
        }
    }

    #[test]
    fn bandpass_peaks_at_center() {
        let v = FilterDesign::BandPass { center: 0.5, gamma: 0.25 }.evaluate_at(&[1.0], 2.0).unwrap();
        assert_eq!(v, vec![1.0]);
    }

    #[test]
    fn ratio_designs_need_positive_lambda_max() {
        assert!(matches!(FilterDesign::HighPass.evaluate_at(&[0.0], 0.0), Err(Error::ZeroLambdaMax)));
        assert!(FilterDesign::ExpLowPass { tau: 10.0 }.evaluate_at(&[0.0], 0.0).is_ok());
        assert!(FilterDesign::AllPass.evaluate_at(&[0.0], 0.0).is_ok());
    }

    #[test]
    fn theta_special_values() {
        assert!((cayley_theta(0.0) + PI).abs() < 1e-15);
        assert!((cayley_theta(1.0) + PI / 2.0).abs() < 1e-15);
        let big = cayley_theta(1e9);
        assert!(big < 0.0 && (big + 2e-9).abs() < 1e-15);
        for x in [-1e6, -3.0, -0.1, 0.0, 0.1, 3.0, 1e6] {
            let t = cayley_theta(x);
            assert!(t > -2.0 * PI && t < 0.0);
        }
    }

    #[test]
    fn cayley_reassembly_matches_complex_form() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let r = rng.random_range(1..=5);
            let h = rng.random_range(0.1..3.0);
            let lambda = rng.random_range(0.0..2.0);
            let c0 = rng.random_range(-1.0..1.0);
            let a: Vec<f64> = (0..r).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..r).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut coeffs = vec![c0];
            for k in 0..r {
                coeffs.push(a[k]);
                coeffs.push(b[k]);
            }
            let reassembled: f64 = (1..=2 * r + 1)
                .map(|s| coeffs[s - 1] * FilterDesign::CayleyBasis { s, h, r }.evaluate_at(&[lambda], 2.0).unwrap()[0])
                .sum();
            assert!((reassembled - complex_g(lambda, h, c0, &a, &b)).abs() < 1e-10);
        }
    }

    #[test]
    fn gcn_profile_and_cutoff() {
        assert_eq!(gcn_cutoff(2.0).unwrap(), 1.5);
        assert_eq!(gcn_theoretical_profile(2.0, &[1.5]).unwrap(), vec![0.0]);
        assert!((gcn_cutoff(2.77).unwrap() - 1.361).abs() < 1e-3);
        assert_eq!(gcn_theoretical_profile(5.0, &[0.0]).unwrap(), vec![1.0]);
        assert!(gcn_cutoff(0.0).is_err());
    }

    #[test]
    fn textual_forms_roundtrip() {
        for text in [
            "lowpass(eta=5)",
            "bandpass(c=0.5,gamma=0.25)",
            "cheb(k=3)",
            "cayley(s=4,h=1,r=3)",
            "allpass",
            "highpass",
            "explowpass(tau=10)",
            "oneminusratio",
        ] {
            let d: FilterDesign = text.parse().unwrap();
            assert_eq!(d.to_string(), text);
        }
        assert!("bandpass(c=1.5,gamma=1)".parse::<FilterDesign>().is_err());
        assert!("lowpass".parse::<FilterDesign>().is_err());
        assert!("lowpass(eta=1,beta=2)".parse::<FilterDesign>().is_err());
        assert!("wobble".parse::<FilterDesign>().is_err());
        assert!("cayley(s=8,h=1,r=3)".parse::<FilterDesign>().is_err());
    }

    #[test]
    fn tabulated_reads_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("r.csv"), "lambda,standard\n0,1\n1,0.5\n").unwrap();
        let d = FilterDesign::parse_with_base("tabulated(file=r.csv)", Some(dir.path())).unwrap();
        assert_eq!(d, FilterDesign::Tabulated { values: vec![1.0, 0.5] });
        assert!(d.evaluate_at(&[0.0], 1.0).is_err());
    }

    #[test]
    fn coverage_diagnostic() {
        let lows = [FilterDesign::LowPass { eta: 5.0 }];
        assert!(coverage(&lows, 2.0).unwrap() < COVERAGE_WARN);
        let full = [FilterDesign::OneMinusRatio, FilterDesign::HighPass];
        assert!((coverage(&full, 2.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn designs_are_finite_on_the_spectrum() {
        let designs: Vec<FilterDesign> = [
            "lowpass(eta=0.5)",
            "lowpass(eta=20)",
            "highpass",
            "bandpass(c=0,gamma=1)",
            "bandpass(c=1,gamma=4)",
            "explowpass(tau=0.1)",
            "cheb(k=7)",
            "cayley(s=7,h=1.5,r=3)",
        ]
        .iter()
        .map(|t| t.parse().unwrap())
        .collect();
        let grid: Vec<f64> = (0..=100).map(|i| 2.0 * i as f64 / 100.0).collect();
        for d in designs {
            assert!(d.evaluate_at(&grid, 2.0).unwrap().iter().all(|v| v.is_finite()), "{d}");
        }
    }
}
