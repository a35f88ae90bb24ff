use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{LayerSpec, ModelSpec};
use crate::error::{Error, Result};

/// Regularization group of a parameter tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Weight,
    Depthwise,
    Bias,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    /// One `f_in × f_out` matrix per support for multi-support layers,
    /// exactly one otherwise, none for the readout.
    pub weights: Vec<DMatrix<f64>>,
    /// `S × f_in`, row `s` is `w^(s)`.
    pub depthwise: Option<DMatrix<f64>>,
    /// `1 × f_out`.
    pub bias: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub layers: Vec<LayerParams>,
}

fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-limit..=limit))
}

impl Parameters {
    /// Glorot-uniform weights, zero biases, depthwise rows `w^(1) = 1` and
    /// `w^(s) = 0` for `s > 1`.
    pub fn init<R: Rng + ?Sized>(spec: &ModelSpec, supports: usize, rng: &mut R) -> Result<Self> {
        if spec.has_conv() && supports == 0 {
            return Err(Error::Architecture("convolution layers need at least one support".into()));
        }
        let widths = spec.widths();
        let layers = spec
            .layers
            .iter()
            .enumerate()
            .map(|(i, layer)| {
                let (fi, fo) = (widths[i], widths[i + 1]);
                let bias = |b: bool| b.then(|| DMatrix::zeros(1, fo));
                match *layer {
                    LayerSpec::MultiSupportConv { use_bias, .. } => LayerParams {
                        weights: (0..supports).map(|_| glorot(fi, fo, rng)).collect(),
                        depthwise: None,
                        bias: bias(use_bias),
                    },
                    LayerSpec::DepthwiseSeparableConv { use_bias, .. } => {
                        let mut w = DMatrix::zeros(supports, fi);
                        w.row_mut(0).fill(1.0);
                        LayerParams { weights: vec![glorot(fi, fo, rng)], depthwise: Some(w), bias: bias(use_bias) }
                    }
                    LayerSpec::Dense { use_bias, .. } => {
                        LayerParams { weights: vec![glorot(fi, fo, rng)], depthwise: None, bias: bias(use_bias) }
                    }
                    LayerSpec::ReadoutMeanMax => LayerParams { weights: vec![], depthwise: None, bias: None },
                }
            })
            .collect();
        Ok(Parameters { layers })
    }

    /// Checks that every tensor has the shape implied by `spec` and `supports`.
    pub fn check(&self, spec: &ModelSpec, supports: usize) -> Result<()> {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let reference = Parameters::init(spec, supports, &mut rng)?;
        let shapes = |p: &Parameters| p.tensors().iter().map(|(g, t)| (*g, t.shape())).collect::<Vec<_>>();
        if shapes(self) != shapes(&reference) {
            return Err(Error::Architecture("parameter shapes do not match the model".into()));
        }
        Ok(())
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    pub fn tensors(&self) -> Vec<(ParamGroup, &DMatrix<f64>)> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.weights.iter().map(|w| (ParamGroup::Weight, w)));
            out.extend(l.depthwise.iter().map(|w| (ParamGroup::Depthwise, w)));
            out.extend(l.bias.iter().map(|b| (ParamGroup::Bias, b)));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(ParamGroup, &mut DMatrix<f64>)> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.extend(l.weights.iter_mut().map(|w| (ParamGroup::Weight, w)));
            out.extend(l.depthwise.iter_mut().map(|w| (ParamGroup::Depthwise, w)));
            out.extend(l.bias.iter_mut().map(|b| (ParamGroup::Bias, b)));
        }
        out
    }

    /// Number of stored scalars excluding biases.
    pub fn weight_count(&self) -> usize {
        self.tensors().iter().filter(|(g, _)| *g != ParamGroup::Bias).map(|(_, t)| t.len()).sum()
    }

    pub fn total_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// `self += alpha * other`, tensor by tensor.
    pub fn axpy(&mut self, alpha: f64, other: &Parameters) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            *a += b * alpha;
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|(_, t)| t.iter().copied()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

/// `wd/2 Σ W² + dwd/2 Σ w²`; biases are not regularized.
pub fn weight_penalty(params: &Parameters, weight_decay: f64, depthwise_decay: f64) -> f64 {
    params
        .tensors()
        .iter()
        .map(|(g, t)| match g {
            ParamGroup::Weight => 0.5 * weight_decay * t.norm_squared(),
            ParamGroup::Depthwise => 0.5 * depthwise_decay * t.norm_squared(),
            ParamGroup::Bias => 0.0,
        })
        .sum()
}

/// Adds the gradient of [`weight_penalty`] to `grads`.
pub fn add_weight_penalty_grad(params: &Parameters, grads: &mut Parameters, weight_decay: f64, depthwise_decay: f64) {
    for ((g, p), (_, d)) in params.tensors().into_iter().zip(grads.tensors_mut()) {
        let coeff = match g {
            ParamGroup::Weight => weight_decay,
            ParamGroup::Depthwise => depthwise_decay,
            ParamGroup::Bias => 0.0,
        };
        if coeff != 0.0 {
            *d += p * coeff;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::{param_count, ArchitectureOptions};
    use rand::SeedableRng;

    #[test]
    fn depthwise_initialization() {
        let spec = ModelSpec::parse("DSG4-DSG2", 3, ArchitectureOptions::default()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let p = Parameters::init(&spec, 3, &mut rng).unwrap();
        let w = p.layers[0].depthwise.as_ref().unwrap();
        assert_eq!(w.shape(), (3, 3));
        assert!(w.row(0).iter().all(|&v| v == 1.0));
        assert!(w.rows(1, 2).iter().all(|&v| v == 0.0));
        assert_eq!(p.weight_count(), param_count(&spec, 3));
        assert_eq!(p.total_count(), param_count(&spec, 3) + 4 + 2);
        p.check(&spec, 3).unwrap();
        assert!(p.check(&spec, 2).is_err());
    }

    #[test]
    fn penalty_skips_biases() {
        let spec = ModelSpec::parse("DSG2", 2, ArchitectureOptions::default()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut p = Parameters::init(&spec, 2, &mut rng).unwrap();
        for (_, t) in p.tensors_mut() {
            t.fill(1.0);
        }
        // 4 weights, 4 depthwise entries, 2 biases
        assert_eq!(weight_penalty(&p, 2.0, 4.0), 0.5 * 2.0 * 4.0 + 0.5 * 4.0 * 4.0);
        let mut g = p.zeros_like();
        add_weight_penalty_grad(&p, &mut g, 2.0, 4.0);
        assert_eq!(g.layers[0].bias.as_ref().unwrap().sum(), 0.0);
        assert_eq!(g.layers[0].weights[0].sum(), 8.0);
    }
}
