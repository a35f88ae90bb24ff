use serde::{Deserialize, Serialize};

use super::model::ModelSpec;
use super::train::{train_inductive, GraphSample, TrainConfig};
use crate::error::{Error, Result};
use crate::io::make_folds;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRepeat {
    pub seed: u64,
    /// 1-based epoch maximizing the fold-averaged validation metric.
    pub best_epoch: usize,
    pub accuracy: f64,
    pub mean_val_curve: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub mean: f64,
    /// Sample standard deviation over repeats; 0 with `std_defined = false`
    /// for a single repeat.
    pub std: f64,
    pub std_defined: bool,
    pub repeats: Vec<CvRepeat>,
}

/// k-fold cross-validation with a fixed epoch budget. For each repeat the
/// per-fold validation curves are averaged and the single best epoch of the
/// average is reported. Repeat `r` uses seed `cfg.seed + r` for both the
/// folds and the training runs.
pub fn crossvalidate(
    spec: &ModelSpec,
    samples: &[GraphSample],
    labels: &[usize],
    cfg: &TrainConfig,
    folds: usize,
    repeats: usize,
) -> Result<CvResult> {
    if labels.len() != samples.len() {
        return Err(Error::DimensionMismatch { what: "graph labels", expected: samples.len(), actual: labels.len() });
    }
    if samples.len() < folds {
        return Err(Error::Dataset(format!("{} graphs cannot fill {folds} folds", samples.len())));
    }
    if repeats == 0 || cfg.epochs == 0 {
        return Err(Error::InvalidParameter("cross-validation needs at least one repeat and one epoch".into()));
    }
    let mut out = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let seed = cfg.seed.wrapping_add(r as u64);
        let assignment = make_folds(labels, folds, seed)?;
        let mut curve = vec![0.0; cfg.epochs];
        for f in 0..folds {
            let train: Vec<usize> = (0..samples.len()).filter(|&i| assignment[i] != f).collect();
            let val: Vec<usize> = (0..samples.len()).filter(|&i| assignment[i] == f).collect();
            let fold_cfg = TrainConfig { seed: seed ^ ((f as u64 + 1) << 40), ..cfg.clone() };
            let run = train_inductive(spec, samples, &train, &val, &fold_cfg, None)?;
            for (c, m) in curve.iter_mut().zip(&run.history) {
                *c += m.val_acc;
            }
            log::info!("repeat {r} fold {f}: final val {:.4}", run.history.last().map_or(f64::NAN, |m| m.val_acc));
        }
        curve.iter_mut().for_each(|c| *c /= folds as f64);
        let (best, &accuracy) = curve
            .iter()
            .enumerate()
            .fold((0, &f64::NEG_INFINITY), |acc, (i, v)| if *v > *acc.1 { (i, v) } else { acc });
        out.push(CvRepeat { seed, best_epoch: best + 1, accuracy, mean_val_curve: curve });
    }
    let n = out.len() as f64;
    let mean = out.iter().map(|r| r.accuracy).sum::<f64>() / n;
    let (std, std_defined) = if out.len() > 1 {
        let var = out.iter().map(|r| (r.accuracy - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var.sqrt(), true)
    } else {
        (0.0, false)
    };
    Ok(CvResult { mean, std, std_defined, repeats: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{KernelSet, KernelTag};
    use crate::nn::loss::Targets;
    use crate::nn::model::ArchitectureOptions;
    use nalgebra::DMatrix;

    fn tiny_graph(label: usize) -> GraphSample {
        let k = KernelSet::new(vec![DMatrix::identity(3, 3)], vec![KernelTag::Gcn]).unwrap();
        GraphSample {
            features: DMatrix::from_element(3, 1, 1.0),
            kernels: Some(k),
            targets: Targets::Classes(vec![Some(label)]),
        }
    }

    #[test]
    fn single_class_is_trivial() {
        let samples: Vec<GraphSample> = (0..10).map(|_| tiny_graph(0)).collect();
        let spec = ModelSpec::parse("G2-meanmax-D2", 1, ArchitectureOptions::default()).unwrap();
        let cfg = TrainConfig { epochs: 30, learning_rate: 0.1, ..Default::default() };
        let r = crossvalidate(&spec, &samples, &[0; 10], &cfg, 10, 1).unwrap();
        assert_eq!(r.mean, 1.0);
        assert!(!r.std_defined);
        assert_eq!(r.std, 0.0);
        assert!(crossvalidate(&spec, &samples[..5], &[0; 5], &cfg, 10, 1).is_err());
    }
}
