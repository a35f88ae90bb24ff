//! Central finite-difference checks of the analytic gradient of the full
//! training objective, over every layer kind, activation and loss.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::layers::DropoutPlan;
use super::loss::{LossKind, Targets};
use super::model::{Activation, ArchitectureOptions, ModelSpec};
use super::params::Parameters;
use super::train::{objective, objective_grad, GraphSample, TrainConfig};
use crate::error::Result;
use crate::kernels::{KernelSet, KernelTag};

/// Largest accepted relative error.
pub const GRADCHECK_TOL: f64 = 1e-5;
/// Central-difference step.
pub const FD_STEP: f64 = 1e-6;
/// Denominator floor of the relative error. Central differences with step
/// `FD_STEP` carry rounding noise near `ε|f|/h ≈ 1e-10`, so gradients
/// smaller than the floor are judged by absolute error `GRADCHECK_TOL * REL_FLOOR`.
pub const REL_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckCase {
    pub name: String,
    pub arch: String,
    pub hidden: Activation,
    pub output: Activation,
    pub loss: LossKind,
    pub nodes: usize,
    pub input: usize,
    pub supports: usize,
    pub weight_decay: f64,
    pub depthwise_decay: f64,
    pub input_dropout: f64,
    pub kernel_dropout: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub name: String,
    pub params: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

/// Every layer kind with every activation under both losses, plus
/// graph-level models and runs with both dropouts active.
pub fn default_cases() -> Vec<GradCheckCase> {
    let acts = [Activation::Linear, Activation::Relu, Activation::Tanh, Activation::Sigmoid];
    let losses = [LossKind::SoftmaxCrossEntropy, LossKind::BinaryCrossEntropyTansig];
    let base = GradCheckCase {
        name: String::new(),
        arch: String::new(),
        hidden: Activation::Relu,
        output: Activation::Linear,
        loss: LossKind::SoftmaxCrossEntropy,
        nodes: 6,
        input: 4,
        supports: 3,
        weight_decay: 1e-2,
        depthwise_decay: 3e-2,
        input_dropout: 0.0,
        kernel_dropout: 0.0,
    };
    let mut cases = Vec::new();
    for kind in ["G", "DSG", "D"] {
        for act in acts {
            for loss in losses {
                let arch = format!("{kind}5-{kind}3");
                cases.push(GradCheckCase {
                    name: format!("{arch} {act:?} {loss:?}"),
                    arch,
                    hidden: act,
                    output: act,
                    loss,
                    ..base.clone()
                });
            }
        }
    }
    for (arch, loss) in [
        ("G4-meanmax-D3", LossKind::SoftmaxCrossEntropy),
        ("DSG4-DSG3-meanmax-D4-D2", LossKind::SoftmaxCrossEntropy),
        ("DSG4-meanmax-D3", LossKind::BinaryCrossEntropyTansig),
        ("D3-meanmax-D2", LossKind::SoftmaxCrossEntropy),
    ] {
        cases.push(GradCheckCase { name: format!("{arch} {loss:?}"), arch: arch.into(), loss, ..base.clone() });
    }
    for arch in ["DSG5-DSG3", "G5-G3"] {
        cases.push(GradCheckCase {
            name: format!("{arch} dropout"),
            arch: arch.into(),
            input_dropout: 0.3,
            kernel_dropout: 0.4,
            ..base.clone()
        });
    }
    cases
}

/// A random model, parameters and graph for one case.
pub struct Instance {
    pub spec: ModelSpec,
    pub params: Parameters,
    pub sample: GraphSample,
    pub mask: Option<Vec<bool>>,
    pub plan: Option<DropoutPlan>,
    pub cfg: TrainConfig,
}

impl Instance {
    pub fn new(case: &GradCheckCase, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let opts = ArchitectureOptions {
            hidden_activation: case.hidden,
            output_activation: case.output,
            hidden_bias: true,
            output_bias: true,
        };
        let spec = ModelSpec::parse(&case.arch, case.input, opts)?;
        let mut params = Parameters::init(&spec, case.supports, &mut rng)?;
        for (_, t) in params.tensors_mut() {
            for v in t.iter_mut() {
                *v = rng.random_range(-0.8..0.8);
            }
        }
        let n = case.nodes;
        let supports = (0..case.supports)
            .map(|_| {
                DMatrix::from_fn(n, n, |_, _| {
                    if rng.random::<f64>() < 0.3 {
                        0.0
                    } else {
                        rng.random_range(-1.0..1.0)
                    }
                })
            })
            .collect();
        let kernels = KernelSet::new(supports, vec![KernelTag::Gcn; case.supports])?;
        let features = DMatrix::from_fn(n, case.input, |_, _| rng.random_range(-1.0..1.0));
        let out = spec.output_width();
        let rows = if spec.is_graph_level() { 1 } else { n };
        let mask = (!spec.is_graph_level()).then(|| {
            let mut m: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.7).collect();
            m[0] = true;
            m
        });
        let targets = match case.loss {
            LossKind::SoftmaxCrossEntropy => Targets::Classes(
                (0..rows)
                    .map(|i| {
                        let labeled = mask.as_ref().is_none_or(|m| m[i]);
                        labeled.then(|| rng.random_range(0..out))
                    })
                    .collect(),
            ),
            LossKind::BinaryCrossEntropyTansig => {
                Targets::MultiLabel(DMatrix::from_fn(rows, out, |_, _| f64::from(rng.random::<bool>())))
            }
        };
        let plan = (case.input_dropout > 0.0 || case.kernel_dropout > 0.0).then(|| DropoutPlan {
            input_rate: case.input_dropout,
            kernel_rate: case.kernel_dropout,
            seed: rng.random(),
        });
        let cfg = TrainConfig {
            weight_decay: case.weight_decay,
            depthwise_weight_decay: case.depthwise_decay,
            loss: case.loss,
            ..Default::default()
        };
        Ok(Instance { spec, params, sample: GraphSample { features, kernels: Some(kernels), targets }, mask, plan, cfg })
    }

    pub fn objective(&self, params: &Parameters) -> Result<f64> {
        objective(&self.spec, params, &self.sample, self.mask.as_deref(), self.plan.as_ref(), &self.cfg)
    }

    pub fn gradient(&self) -> Result<Parameters> {
        objective_grad(&self.spec, &self.params, &self.sample, self.mask.as_deref(), self.plan.as_ref(), &self.cfg)
    }

    /// Central differences of [`Instance::objective`], flattened in
    /// [`Parameters::to_vec`] order.
    pub fn numeric_gradient(&self) -> Result<Vec<f64>> {
        let total = self.params.total_count();
        let mut out = Vec::with_capacity(total);
        for k in 0..total {
            let shifted = |delta: f64| {
                let mut p = self.params.clone();
                nudge(&mut p, k, delta);
                self.objective(&p)
            };
            out.push((shifted(FD_STEP)? - shifted(-FD_STEP)?) / (2.0 * FD_STEP));
        }
        Ok(out)
    }
}

fn nudge(p: &mut Parameters, mut k: usize, delta: f64) {
    for (_, t) in p.tensors_mut() {
        if k < t.len() {
            t[k] += delta;
            return;
        }
        k -= t.len();
    }
    panic!("parameter index out of range");
}

/// Largest `|a - n| / max(|a|, |n|, REL_FLOOR)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR))
        .fold(0.0, f64::max)
}

/// Checks one case. `tamper` may alter the analytic gradient before the
/// comparison; it exists to prove that the check can fail.
pub fn run_case(case: &GradCheckCase, seed: u64, tamper: Option<&dyn Fn(&mut Parameters)>) -> Result<GradCheckReport> {
    let inst = Instance::new(case, seed)?;
    let mut analytic = inst.gradient()?;
    if let Some(f) = tamper {
        f(&mut analytic);
    }
    let numeric = inst.numeric_gradient()?;
    let err = max_relative_error(&analytic.to_vec(), &numeric);
    Ok(GradCheckReport {
        name: case.name.clone(),
        params: inst.params.total_count(),
        max_rel_error: err,
        passed: err < GRADCHECK_TOL,
    })
}

pub fn run_suite(seed: u64, tamper: Option<&dyn Fn(&mut Parameters)>) -> Result<Vec<GradCheckReport>> {
    default_cases()
        .iter()
        .enumerate()
        .map(|(i, c)| run_case(c, seed.wrapping_add(i as u64), tamper))
        .collect()
}

/// Sign flip of every depthwise gradient, a stand-in for a broken backward.
pub fn flip_depthwise_sign(g: &mut Parameters) {
    for layer in &mut g.layers {
        if let Some(d) = layer.depthwise.as_mut() {
            *d *= -1.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::LayerParams;
    use crate::nn::train::objective_grad;

    #[test]
    fn cases_fit_the_parameter_budget() {
        for c in default_cases() {
            let inst = Instance::new(&c, 0).unwrap();
            assert!(inst.params.total_count() <= 500, "{}", c.name);
        }
    }

    #[test]
    fn depthwise_case_detects_sign_flip() {
        let case = default_cases().into_iter().find(|c| c.arch.starts_with("DSG")).unwrap();
        assert!(run_case(&case, 1, None).unwrap().passed);
        assert!(!run_case(&case, 1, Some(&flip_depthwise_sign)).unwrap().passed);
    }

    #[test]
    fn balanced_constant_problem_has_zero_gradient() {
        let spec = ModelSpec::parse("D2", 1, ArchitectureOptions::default()).unwrap();
        let params = Parameters {
            layers: vec![LayerParams {
                weights: vec![DMatrix::zeros(1, 2)],
                depthwise: None,
                bias: Some(DMatrix::zeros(1, 2)),
            }],
        };
        let sample = GraphSample {
            features: DMatrix::from_element(4, 1, 1.0),
            kernels: None,
            targets: Targets::Classes(vec![Some(0), Some(1), Some(0), Some(1)]),
        };
        let g = objective_grad(&spec, &params, &sample, None, None, &TrainConfig::default()).unwrap();
        assert!(g.to_vec().iter().all(|&v| v == 0.0));
    }
}
