use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, z: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Activation::Linear => z.clone(),
            Activation::Relu => z.map(|v| v.max(0.0)),
            Activation::Tanh => z.map(f64::tanh),
            Activation::Sigmoid => z.map(sigmoid),
        }
    }

    /// `grad ⊙ σ'(z)`.
    pub fn backprop(self, z: &DMatrix<f64>, grad: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Activation::Linear => grad.clone(),
            Activation::Relu => grad.zip_map(z, |g, v| if v > 0.0 { g } else { 0.0 }),
            Activation::Tanh => grad.zip_map(z, |g, v| {
                let t = v.tanh();
                g * (1.0 - t * t)
            }),
            Activation::Sigmoid => grad.zip_map(z, |g, v| {
                let s = sigmoid(v);
                g * s * (1.0 - s)
            }),
        }
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" | "identity" | "none" => Ok(Activation::Linear),
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            _ => Err(Error::InvalidParameter(format!("unknown activation `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "layer", rename_all = "snake_case")]
pub enum LayerSpec {
    MultiSupportConv { out: usize, use_bias: bool, activation: Activation },
    DepthwiseSeparableConv { out: usize, use_bias: bool, activation: Activation },
    Dense { out: usize, use_bias: bool, activation: Activation },
    ReadoutMeanMax,
}

impl LayerSpec {
    pub fn output_width(&self, input: usize) -> usize {
        match *self {
            LayerSpec::MultiSupportConv { out, .. }
            | LayerSpec::DepthwiseSeparableConv { out, .. }
            | LayerSpec::Dense { out, .. } => out,
            LayerSpec::ReadoutMeanMax => 2 * input,
        }
    }

    pub fn is_conv(&self) -> bool {
        matches!(self, LayerSpec::MultiSupportConv { .. } | LayerSpec::DepthwiseSeparableConv { .. })
    }

    fn set_head(&mut self, bias: bool, act: Activation) {
        match self {
            LayerSpec::MultiSupportConv { use_bias, activation, .. }
            | LayerSpec::DepthwiseSeparableConv { use_bias, activation, .. }
            | LayerSpec::Dense { use_bias, activation, .. } => {
                *use_bias = bias;
                *activation = act;
            }
            LayerSpec::ReadoutMeanMax => {}
        }
    }
}

/// Options applied when expanding an architecture string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchitectureOptions {
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    pub hidden_bias: bool,
    pub output_bias: bool,
}

impl Default for ArchitectureOptions {
    fn default() -> Self {
        ArchitectureOptions {
            hidden_activation: Activation::Relu,
            output_activation: Activation::Linear,
            hidden_bias: true,
            output_bias: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input: usize,
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    pub fn new(input: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        let spec = ModelSpec { input, layers };
        spec.validate()?;
        Ok(spec)
    }

    /// Expands dash-separated tokens `DSG<k>`, `G<k>`, `D<k>` and `meanmax`,
    /// e.g. `DSG160-DSG7` or `G200-G200-meanmax-D100-D2`. The last layer
    /// with weights gets the output activation and bias setting.
    pub fn parse(arch: &str, input: usize, opts: ArchitectureOptions) -> Result<Self> {
        let mut layers = Vec::new();
        for token in arch.split('-').map(str::trim) {
            let width = |prefix: &str| -> Result<usize> {
                token[prefix.len()..]
                    .parse::<usize>()
                    .map_err(|_| Error::Architecture(format!("bad token `{token}` in `{arch}`")))
            };
            let (use_bias, activation) = (opts.hidden_bias, opts.hidden_activation);
            let layer = if token.eq_ignore_ascii_case("meanmax") {
                LayerSpec::ReadoutMeanMax
            } else if token.starts_with("DSG") {
                LayerSpec::DepthwiseSeparableConv { out: width("DSG")?, use_bias, activation }
            } else if token.starts_with('G') {
                LayerSpec::MultiSupportConv { out: width("G")?, use_bias, activation }
            } else if token.starts_with('D') {
                LayerSpec::Dense { out: width("D")?, use_bias, activation }
            } else {
                return Err(Error::Architecture(format!("unknown token `{token}` in `{arch}`")));
            };
            layers.push(layer);
        }
        if let Some(last) = layers.iter_mut().rev().find(|l| !matches!(l, LayerSpec::ReadoutMeanMax)) {
            last.set_head(opts.output_bias, opts.output_activation);
        }
        ModelSpec::new(input, layers)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input == 0 {
            return Err(Error::Architecture("input width must be positive".into()));
        }
        if self.layers.is_empty() {
            return Err(Error::Architecture("a model needs at least one layer".into()));
        }
        let mut pooled = false;
        for layer in &self.layers {
            match layer {
                LayerSpec::ReadoutMeanMax if pooled => return Err(Error::Architecture("more than one readout".into())),
                LayerSpec::ReadoutMeanMax => pooled = true,
                l if l.is_conv() && pooled => {
                    return Err(Error::Architecture("graph convolution after readout".into()))
                }
                l if l.output_width(1) == 0 => return Err(Error::Architecture("layer width must be positive".into())),
                _ => {}
            }
        }
        if matches!(self.layers.last(), Some(LayerSpec::ReadoutMeanMax)) {
            return Err(Error::Architecture("readout cannot be the last layer".into()));
        }
        Ok(())
    }

    /// Input width of every layer followed by the output width.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input];
        for layer in &self.layers {
            let next = layer.output_width(*w.last().unwrap());
            w.push(next);
        }
        w
    }

    pub fn output_width(&self) -> usize {
        *self.widths().last().unwrap()
    }

    /// Graph-level models pool node features into one row.
    pub fn is_graph_level(&self) -> bool {
        self.layers.iter().any(|l| matches!(l, LayerSpec::ReadoutMeanMax))
    }

    pub fn has_conv(&self) -> bool {
        self.layers.iter().any(LayerSpec::is_conv)
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tokens: Vec<String> = self
            .layers
            .iter()
            .map(|l| match l {
                LayerSpec::MultiSupportConv { out, .. } => format!("G{out}"),
                LayerSpec::DepthwiseSeparableConv { out, .. } => format!("DSG{out}"),
                LayerSpec::Dense { out, .. } => format!("D{out}"),
                LayerSpec::ReadoutMeanMax => "meanmax".into(),
            })
            .collect();
        f.write_str(&tokens.join("-"))
    }
}

/// Trainable weights excluding biases: `S f_i f_{i+1}` per multi-support
/// layer, `S f_i + f_i f_{i+1}` per depthwise separable layer and
/// `f_i f_{i+1}` per dense layer.
pub fn param_count(model: &ModelSpec, supports: usize) -> usize {
    let widths = model.widths();
    model
        .layers
        .iter()
        .enumerate()
        .map(|(i, layer)| {
            let (fi, fo) = (widths[i], widths[i + 1]);
            match layer {
                LayerSpec::MultiSupportConv { .. } => supports * fi * fo,
                LayerSpec::DepthwiseSeparableConv { .. } => supports * fi + fi * fo,
                LayerSpec::Dense { .. } => fi * fo,
                LayerSpec::ReadoutMeanMax => 0,
            }
        })
        .sum()
}
