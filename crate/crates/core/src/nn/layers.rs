//! Forward and reverse passes.
//!
//! Dropout masks are functions of `(plan seed, layer, slot)` so the backward
//! pass regenerates the masked supports instead of storing them.

use std::borrow::Cow;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{Activation, LayerSpec, ModelSpec};
use super::params::{LayerParams, Parameters};
use crate::error::{Error, Result};
use crate::kernels::KernelSet;

/// Training-time dropout of layer inputs and support entries, with
/// inverted scaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropoutPlan {
    pub input_rate: f64,
    pub kernel_rate: f64,
    pub seed: u64,
}

impl DropoutPlan {
    fn rng(&self, layer: usize, slot: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((layer as u64) << 32) | slot as u64);
        rng
    }

    fn input_mask(&self, layer: usize, rows: usize, cols: usize) -> Option<DMatrix<f64>> {
        if self.input_rate <= 0.0 {
            return None;
        }
        let mut rng = self.rng(layer, 0);
        let keep = 1.0 / (1.0 - self.input_rate);
        Some(DMatrix::from_fn(rows, cols, |_, _| if rng.random::<f64>() < self.input_rate { 0.0 } else { keep }))
    }

    /// Masks the nonzero entries of support `s`.
    fn support<'a>(&self, c: &'a DMatrix<f64>, layer: usize, s: usize) -> Cow<'a, DMatrix<f64>> {
        if self.kernel_rate <= 0.0 {
            return Cow::Borrowed(c);
        }
        let mut rng = self.rng(layer, s + 1);
        let keep = 1.0 / (1.0 - self.kernel_rate);
        Cow::Owned(c.map(|v| {
            if v == 0.0 {
                0.0
            } else if rng.random::<f64>() < self.kernel_rate {
                0.0
            } else {
                v * keep
            }
        }))
    }
}

fn support<'a>(kernels: &'a KernelSet, plan: Option<&DropoutPlan>, layer: usize, s: usize) -> Cow<'a, DMatrix<f64>> {
    match plan {
        Some(p) => p.support(kernels.support(s), layer, s),
        None => Cow::Borrowed(kernels.support(s)),
    }
}

#[derive(Debug, Clone)]
enum LayerCache {
    Weighted { x: DMatrix<f64>, mask: Option<DMatrix<f64>>, z: DMatrix<f64> },
    Readout { rows: usize, argmax: Vec<usize> },
}

/// Intermediate values needed by [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    layers: Vec<LayerCache>,
}

fn add_bias(z: &mut DMatrix<f64>, bias: &Option<DMatrix<f64>>) {
    if let Some(b) = bias {
        for mut row in z.row_iter_mut() {
            row += b;
        }
    }
}

fn need_kernels<'a>(kernels: Option<&'a KernelSet>, rows: usize, supports: usize) -> Result<&'a KernelSet> {
    let k = kernels.ok_or_else(|| Error::Architecture("graph convolution without supports".into()))?;
    if k.n() != rows {
        return Err(Error::DimensionMismatch { what: "support size vs node count", expected: rows, actual: k.n() });
    }
    if k.len() != supports {
        return Err(Error::DimensionMismatch { what: "number of supports", expected: supports, actual: k.len() });
    }
    Ok(k)
}

/// `Σ_s C_s (X W_s)`.
fn multisupport_pre(x: &DMatrix<f64>, p: &LayerParams, kernels: &KernelSet, plan: Option<&DropoutPlan>, li: usize) -> DMatrix<f64> {
    let mut z = DMatrix::zeros(x.nrows(), p.weights[0].ncols());
    for (s, w) in p.weights.iter().enumerate() {
        let c = support(kernels, plan, li, s);
        z += c.as_ref() * (x * w);
    }
    z
}

/// `Σ_s C_s (X diag(w_s) W)`, equal to `(Σ_s w_s ⊙ (C_s X)) W`.
fn depthwise_pre(x: &DMatrix<f64>, p: &LayerParams, kernels: &KernelSet, plan: Option<&DropoutPlan>, li: usize) -> DMatrix<f64> {
    let w = &p.weights[0];
    let dw = p.depthwise.as_ref().expect("depthwise layer without depthwise weights");
    let mut z = DMatrix::zeros(x.nrows(), w.ncols());
    for s in 0..dw.nrows() {
        let m = scale_rows(w, dw.row(s).iter());
        let c = support(kernels, plan, li, s);
        z += c.as_ref() * (x * m);
    }
    z
}

fn scale_rows<'a>(w: &DMatrix<f64>, factors: impl Iterator<Item = &'a f64>) -> DMatrix<f64> {
    let mut m = w.clone();
    for (mut row, &f) in m.row_iter_mut().zip(factors) {
        row *= f;
    }
    m
}

fn activation_of(layer: &LayerSpec) -> Activation {
    match *layer {
        LayerSpec::MultiSupportConv { activation, .. }
        | LayerSpec::DepthwiseSeparableConv { activation, .. }
        | LayerSpec::Dense { activation, .. } => activation,
        LayerSpec::ReadoutMeanMax => Activation::Linear,
    }
}

/// Runs the model on one graph. `kernels` may be `None` only for models
/// without graph convolutions.
pub fn forward(
    spec: &ModelSpec,
    params: &Parameters,
    x: &DMatrix<f64>,
    kernels: Option<&KernelSet>,
    plan: Option<&DropoutPlan>,
) -> Result<(DMatrix<f64>, ForwardCache)> {
    if x.ncols() != spec.input {
        return Err(Error::DimensionMismatch { what: "input feature width", expected: spec.input, actual: x.ncols() });
    }
    if params.layers.len() != spec.layers.len() {
        return Err(Error::DimensionMismatch {
            what: "parameter layers",
            expected: spec.layers.len(),
            actual: params.layers.len(),
        });
    }
    let mut h = x.clone();
    let mut caches = Vec::with_capacity(spec.layers.len());
    for (li, (layer, p)) in spec.layers.iter().zip(&params.layers).enumerate() {
        if let LayerSpec::ReadoutMeanMax = layer {
            let (rows, cols) = h.shape();
            if rows == 0 {
                return Err(Error::InvalidParameter("readout over an empty graph".into()));
            }
            let mut out = DMatrix::zeros(1, 2 * cols);
            let mut argmax = Vec::with_capacity(cols);
            for j in 0..cols {
                let col = h.column(j);
                out[(0, j)] = col.mean();
                let (mut best, mut arg) = (f64::NEG_INFINITY, 0);
                for (i, &v) in col.iter().enumerate() {
                    if v > best {
                        best = v;
                        arg = i;
                    }
                }
                out[(0, cols + j)] = best;
                argmax.push(arg);
            }
            caches.push(LayerCache::Readout { rows, argmax });
            h = out;
            continue;
        }
        let mask = plan.and_then(|pl| pl.input_mask(li, h.nrows(), h.ncols()));
        let xin = match &mask {
            Some(m) => h.component_mul(m),
            None => h,
        };
        let mut z = match layer {
            LayerSpec::MultiSupportConv { .. } => {
                let k = need_kernels(kernels, xin.nrows(), p.weights.len())?;
                multisupport_pre(&xin, p, k, plan, li)
            }
            LayerSpec::DepthwiseSeparableConv { .. } => {
                let k = need_kernels(kernels, xin.nrows(), p.depthwise.as_ref().map_or(0, |d| d.nrows()))?;
                depthwise_pre(&xin, p, k, plan, li)
            }
            _ => &xin * &p.weights[0],
        };
        add_bias(&mut z, &p.bias);
        h = activation_of(layer).apply(&z);
        caches.push(LayerCache::Weighted { x: xin, mask, z });
    }
    Ok((h, ForwardCache { layers: caches }))
}

/// Gradient of a scalar objective with respect to every parameter, given
/// `grad_out = ∂objective/∂output`. `kernels` and `plan` must be the ones
/// passed to [`forward`].
pub fn backward(
    spec: &ModelSpec,
    params: &Parameters,
    kernels: Option<&KernelSet>,
    plan: Option<&DropoutPlan>,
    cache: &ForwardCache,
    grad_out: &DMatrix<f64>,
) -> Result<Parameters> {
    let mut grads = params.zeros_like();
    let mut g = grad_out.clone();
    for li in (0..spec.layers.len()).rev() {
        let layer = &spec.layers[li];
        let p = &params.layers[li];
        let gp = &mut grads.layers[li];
        match (&cache.layers[li], layer) {
            (LayerCache::Readout { rows, argmax }, _) => {
                let cols = argmax.len();
                let mut dx = DMatrix::zeros(*rows, cols);
                for j in 0..cols {
                    let mean_g = g[(0, j)] / *rows as f64;
                    dx.column_mut(j).fill(mean_g);
                    dx[(argmax[j], j)] += g[(0, cols + j)];
                }
                g = dx;
            }
            (LayerCache::Weighted { x, mask, z }, _) => {
                let dz = activation_of(layer).backprop(z, &g);
                if let Some(b) = gp.bias.as_mut() {
                    *b = DMatrix::from_iterator(1, dz.ncols(), dz.row_sum().iter().copied());
                }
                let need_dx = li > 0;
                let mut dx = DMatrix::zeros(x.nrows(), if need_dx { x.ncols() } else { 0 });
                match layer {
                    LayerSpec::MultiSupportConv { .. } => {
                        let k = need_kernels(kernels, x.nrows(), p.weights.len())?;
                        for (s, w) in p.weights.iter().enumerate() {
                            let c = support(k, plan, li, s);
                            let r = c.tr_mul(&dz);
                            gp.weights[s] = x.tr_mul(&r);
                            if need_dx {
                                dx += r * w.transpose();
                            }
                        }
                    }
                    LayerSpec::DepthwiseSeparableConv { .. } => {
                        let dw = p.depthwise.as_ref().expect("depthwise layer without depthwise weights");
                        let k = need_kernels(kernels, x.nrows(), dw.nrows())?;
                        let w = &p.weights[0];
                        let mut d_w = DMatrix::zeros(w.nrows(), w.ncols());
                        let mut d_dw = DMatrix::zeros(dw.nrows(), dw.ncols());
                        for s in 0..dw.nrows() {
                            let c = support(k, plan, li, s);
                            let r = c.tr_mul(&dz);
                            let pr = x.tr_mul(&r);
                            for i in 0..w.nrows() {
                                d_dw[(s, i)] = pr.row(i).dot(&w.row(i));
                            }
                            d_w += scale_rows(&pr, dw.row(s).iter());
                            if need_dx {
                                dx += r * scale_rows(w, dw.row(s).iter()).transpose();
                            }
                        }
                        gp.weights[0] = d_w;
                        gp.depthwise = Some(d_dw);
                    }
                    LayerSpec::Dense { .. } => {
                        gp.weights[0] = x.tr_mul(&dz);
                        if need_dx {
                            dx = dz * p.weights[0].transpose();
                        }
                    }
                    LayerSpec::ReadoutMeanMax => unreachable!(),
                }
                if let Some(m) = mask {
                    if need_dx {
                        dx.component_mul_assign(m);
                    }
                }
                g = dx;
            }
        }
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelTag;
    use crate::nn::model::ArchitectureOptions;

    fn random_kernels(n: usize, s: usize, rng: &mut ChaCha8Rng) -> KernelSet {
        let supports = (0..s).map(|_| DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0))).collect();
        KernelSet::new(supports, vec![KernelTag::Gcn; s]).unwrap()
    }

    #[test]
    fn identity_support_and_weights_pass_features_through() {
        let spec = ModelSpec::parse(
            "G3",
            3,
            ArchitectureOptions { output_bias: false, ..Default::default() },
        )
        .unwrap();
        let params = Parameters {
            layers: vec![LayerParams { weights: vec![DMatrix::identity(3, 3)], depthwise: None, bias: None }],
        };
        let k = KernelSet::new(vec![DMatrix::identity(4, 4)], vec![KernelTag::Gcn]).unwrap();
        let x = DMatrix::from_fn(4, 3, |i, j| (i * 3 + j) as f64);
        let (y, _) = forward(&spec, &params, &x, Some(&k), None).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn depthwise_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (n, fi, fo, s) = (7, 4, 3, 3);
        let k = random_kernels(n, s, &mut rng);
        let spec = ModelSpec::parse("DSG3", fi, ArchitectureOptions { output_bias: false, ..Default::default() }).unwrap();
        let mut params = Parameters::init(&spec, s, &mut rng).unwrap();
        params.layers[0].depthwise = Some(DMatrix::from_fn(s, fi, |_, _| rng.random_range(-1.0..1.0)));
        let x = DMatrix::from_fn(n, fi, |_, _| rng.random_range(-1.0..1.0));
        let (y, _) = forward(&spec, &params, &x, Some(&k), None).unwrap();

        let w = &params.layers[0].weights[0];
        let dw = params.layers[0].depthwise.as_ref().unwrap();
        let mut mixed = DMatrix::<f64>::zeros(n, fi);
        for si in 0..s {
            let cx = k.support(si) * &x;
            for a in 0..n {
                for i in 0..fi {
                    mixed[(a, i)] += dw[(si, i)] * cx[(a, i)];
                }
            }
        }
        let mut oracle = DMatrix::<f64>::zeros(n, fo);
        for a in 0..n {
            for o in 0..fo {
                for i in 0..fi {
                    oracle[(a, o)] += mixed[(a, i)] * w[(i, o)];
                }
            }
        }
        assert!((y - oracle).amax() < 1e-12);
    }

    #[test]
    fn fresh_depthwise_layer_ignores_extra_supports() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let k = random_kernels(6, 3, &mut rng);
        let other = KernelSet::new(
            vec![k.support(0).clone(), DMatrix::from_element(6, 6, 9.0), DMatrix::from_element(6, 6, -4.0)],
            vec![KernelTag::Gcn; 3],
        )
        .unwrap();
        let spec = ModelSpec::parse("DSG4-DSG2", 3, ArchitectureOptions::default()).unwrap();
        let params = Parameters::init(&spec, 3, &mut rng).unwrap();
        let x = DMatrix::from_fn(6, 3, |_, _| rng.random_range(-1.0..1.0));
        let (a, _) = forward(&spec, &params, &x, Some(&k), None).unwrap();
        let (b, _) = forward(&spec, &params, &x, Some(&other), None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dropout_masks_are_reproducible() {
        let plan = DropoutPlan { input_rate: 0.5, kernel_rate: 0.5, seed: 3 };
        let c = DMatrix::from_element(5, 5, 1.0);
        let a = plan.support(&c, 1, 2).into_owned();
        assert_eq!(a, plan.support(&c, 1, 2).into_owned());
        assert_ne!(a, plan.support(&c, 1, 3).into_owned());
        assert!(a.iter().all(|&v| v == 0.0 || v == 2.0));
        let sparse = DMatrix::<f64>::identity(5, 5);
        let masked = plan.support(&sparse, 0, 0);
        assert!((0..5).all(|i| (0..5).all(|j| i == j || masked[(i, j)] == 0.0)));
    }

    #[test]
    fn readout_width_and_values() {
        let spec = ModelSpec::parse("D2-meanmax-D1", 2, ArchitectureOptions::default()).unwrap();
        assert_eq!(spec.widths(), vec![2, 2, 4, 1]);
        let params = Parameters {
            layers: vec![
                LayerParams { weights: vec![DMatrix::identity(2, 2)], depthwise: None, bias: Some(DMatrix::zeros(1, 2)) },
                LayerParams { weights: vec![], depthwise: None, bias: None },
                LayerParams {
                    weights: vec![DMatrix::from_column_slice(4, 1, &[1.0, 10.0, 100.0, 1000.0])],
                    depthwise: None,
                    bias: Some(DMatrix::zeros(1, 1)),
                },
            ],
        };
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 3.0, 2.0, 2.0, 1.0]);
        let (y, _) = forward(&spec, &params, &x, None, None).unwrap();
        // ReLU keeps all values; mean (2, 1), max (3, 2)
        assert_eq!(y[(0, 0)], 2.0 + 10.0 + 300.0 + 2000.0);
    }
}
