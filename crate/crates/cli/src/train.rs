use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use specgconv::filter::{coverage, FilterDesign, COVERAGE_WARN};
use specgconv::graph::{average_degree, Graph, LaplacianKind};
use specgconv::io::{load_single_graph, load_tu_dataset, write_columns_csv};
use specgconv::kernels::KernelTag;
use specgconv::nn::{
    crossvalidate, evaluate, train_inductive, train_transductive, ArchitectureOptions, CvResult, EpochMetrics,
    GraphSample, ModelSpec, Parameters, Targets, TrainConfig,
};
use specgconv::Error;

use crate::setup::{build_kernels, parse_designs, KernelChoice};
use crate::{CliError, CliResult};

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` of the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Independent runs (single graph) or cross-validation repeats (TU).
    #[arg(long)]
    runs: Option<usize>,
    /// Comma-separated low-pass orders; trains once per value and keeps the
    /// one with the smallest final validation loss.
    #[arg(long, value_delimiter = ',')]
    eta_sweep: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Directory with `features.csv`, `edges.csv`, `labels.csv`, `split.csv`.
    SingleGraph { path: PathBuf },
    /// TU benchmark directory.
    Tu {
        path: PathBuf,
        #[serde(default)]
        name: Option<String>,
        #[serde(default)]
        use_attributes: bool,
    },
}

fn default_laplacian() -> LaplacianKind {
    LaplacianKind::SymmetricNormalized
}

fn one() -> usize {
    1
}

fn ten() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    #[serde(default = "default_laplacian")]
    pub laplacian: LaplacianKind,
    /// Graphs with an isolated node use the combinatorial Laplacian instead
    /// of failing under the normalized one.
    #[serde(default)]
    pub zero_degree_fallback: bool,
    /// `gcn`, `cheb:K` or `cayley:H:R`; when absent the supports come from `designs`.
    #[serde(default)]
    pub kernel: Option<String>,
    #[serde(default)]
    pub designs: Vec<String>,
    pub architecture: String,
    #[serde(default)]
    pub model: ArchitectureOptions,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "one")]
    pub runs: usize,
    #[serde(default = "ten")]
    pub folds: usize,
    #[serde(default)]
    pub eta_sweep: Vec<f64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    fn kernel_choice(&self, base: Option<&Path>) -> CliResult<KernelChoice> {
        match (&self.kernel, self.designs.is_empty()) {
            (Some(_), false) => Err(CliError::Config("set either `kernel` or `designs`, not both".into())),
            (Some(k), true) => KernelChoice::parse(k, base),
            (None, false) => Ok(KernelChoice::Designs(parse_designs(self.designs.iter().map(String::as_str), base)?)),
            (None, true) => Err(CliError::Config("no supports: set `kernel` or `designs`".into())),
        }
    }
}

#[derive(Serialize)]
struct GraphStats {
    graphs: usize,
    lambda_max_min: Option<f64>,
    lambda_max_max: Option<f64>,
    average_degree_mean: f64,
    coverage_min: Option<f64>,
    zero_degree_fallbacks: usize,
}

#[derive(Serialize)]
struct Provenance<'a> {
    config: &'a ExperimentConfig,
    config_path: String,
    seeds: Vec<u64>,
    version: &'static str,
    adam: specgconv::nn::AdamConstants,
    strict_repro: bool,
    basis_cache: Option<String>,
    graph: GraphStats,
}

#[derive(Serialize, Deserialize)]
pub struct Checkpoint {
    pub model: ModelSpec,
    pub supports: Vec<KernelTag>,
    pub params: Parameters,
}

#[derive(Serialize)]
struct RunSummary {
    seed: u64,
    epochs: usize,
    final_train_loss: f64,
    final_val_loss: f64,
    final_val_acc: f64,
    test_acc: f64,
}

#[derive(Serialize)]
struct TransductiveResult {
    mode: &'static str,
    runs: Vec<RunSummary>,
    mean_val_loss: f64,
    mean_val_acc: f64,
    mean_test_acc: f64,
    /// Sample standard deviation; absent for a single run.
    std_test_acc: Option<f64>,
}

#[derive(Serialize)]
struct InductiveResult<'a> {
    mode: &'static str,
    folds: usize,
    cv: &'a CvResult,
    /// Epochs used for the checkpoint model trained on every graph.
    final_epochs: usize,
}

struct Prepared {
    samples: Vec<GraphSample>,
    /// Graph labels for TU datasets; `None` for a single graph.
    labels: Option<Vec<usize>>,
    splits: Option<specgconv::graph::Splits>,
    tags: Vec<KernelTag>,
    stats: GraphStats,
}

fn prepare(cfg: &ExperimentConfig, base: Option<&Path>) -> CliResult<Prepared> {
    let resolve = |p: &Path| match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p.to_path_buf(),
    };
    let choice = cfg.kernel_choice(base)?;
    let (graphs, labels, splits): (Vec<Graph>, Option<Vec<usize>>, _) = match &cfg.dataset {
        DatasetConfig::SingleGraph { path } => {
            let d = load_single_graph(&resolve(path))?;
            (vec![d.graph().clone()], None, Some(d.splits().clone()))
        }
        DatasetConfig::Tu { path, name, use_attributes } => {
            let d = load_tu_dataset(&resolve(path), name.as_deref(), *use_attributes)?;
            let labels = d.labels();
            (d.graphs().to_vec(), Some(labels), None)
        }
    };
    let mut samples = Vec::with_capacity(graphs.len());
    let mut lmax: Vec<f64> = Vec::new();
    let mut coverages: Vec<f64> = Vec::new();
    let mut fallbacks = 0;
    let mut tags = Vec::new();
    for (i, g) in graphs.iter().enumerate() {
        let built = match build_kernels(g, cfg.laplacian, &choice) {
            Err(CliError::Core(Error::ZeroDegree(_))) if cfg.zero_degree_fallback => {
                fallbacks += 1;
                build_kernels(g, LaplacianKind::Combinatorial, &choice)?
            }
            other => other?,
        };
        if let Some(b) = &built.basis {
            lmax.push(b.lambda_max());
            if let KernelChoice::Designs(designs) = &choice {
                if designs.iter().all(|d| !matches!(d, FilterDesign::Tabulated { .. })) {
                    coverages.push(coverage(designs, b.lambda_max())?);
                }
            }
        }
        if i == 0 {
            tags = built.kernels.tags().to_vec();
        }
        let targets = match &labels {
            Some(l) => Targets::Classes(vec![Some(l[i])]),
            None => match g.labels() {
                Some(specgconv::graph::Labels::Nodes(l)) => Targets::Classes(l.clone()),
                _ => return Err(CliError::Config("single-graph dataset without node labels".into())),
            },
        };
        samples.push(GraphSample { features: g.features().clone(), kernels: Some(built.kernels), targets });
    }
    if fallbacks > 0 {
        log::warn!("{fallbacks} graphs with isolated nodes use the combinatorial Laplacian");
    }
    let coverage_min = coverages.iter().copied().reduce(f64::min);
    if let Some(c) = coverage_min {
        if c < COVERAGE_WARN {
            log::warn!("designs leave part of the spectrum uncovered (min total response {c:.3e})");
        }
    }
    let stats = GraphStats {
        graphs: graphs.len(),
        lambda_max_min: lmax.iter().copied().reduce(f64::min),
        lambda_max_max: lmax.iter().copied().reduce(f64::max),
        average_degree_mean: graphs.iter().map(average_degree).sum::<f64>() / graphs.len().max(1) as f64,
        coverage_min,
        zero_degree_fallbacks: fallbacks,
    };
    Ok(Prepared { samples, labels, splits, tags, stats })
}

fn write_metrics(path: &Path, history: &[EpochMetrics]) -> CliResult<()> {
    let col = |f: fn(&EpochMetrics) -> f64| history.iter().map(f).collect::<Vec<f64>>();
    let epoch = col(|m| m.epoch as f64);
    let (tl, ta, vl, va) = (col(|m| m.train_loss), col(|m| m.train_acc), col(|m| m.val_loss), col(|m| m.val_acc));
    write_columns_csv(path, &["epoch", "train_loss", "train_acc", "val_loss", "val_acc"], &[&epoch, &tl, &ta, &vl, &va])?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn sample_std(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    Some((xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt())
}

fn nan_mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

/// Trains one config into `out` and returns the mean final validation loss.
fn run_one(cfg: &ExperimentConfig, base: Option<&Path>, out: &Path, config_path: &Path, strict: bool) -> CliResult<f64> {
    std::fs::create_dir_all(out)?;
    if cfg.runs == 0 {
        return Err(CliError::Config("runs must be at least 1".into()));
    }
    cfg.train.validate()?;
    let prepared = prepare(cfg, base)?;
    let input = prepared.samples[0].features.ncols();
    let spec = ModelSpec::parse(&cfg.architecture, input, cfg.model)?;
    let seeds: Vec<u64> = (0..cfg.runs as u64).map(|r| cfg.train.seed.wrapping_add(r)).collect();

    write_json(
        &out.join("provenance.json"),
        &Provenance {
            config: cfg,
            config_path: config_path.display().to_string(),
            seeds: seeds.clone(),
            version: env!("CARGO_PKG_VERSION"),
            adam: cfg.train.adam,
            strict_repro: strict,
            basis_cache: std::env::var(crate::setup::CACHE_ENV).ok(),
            graph: prepared.stats,
        },
    )?;

    let checkpoint = |params: Parameters| -> CliResult<()> {
        write_json(&out.join("checkpoint.json"), &Checkpoint { model: spec.clone(), supports: prepared.tags.clone(), params })
    };

    match (&prepared.labels, &prepared.splits) {
        (None, Some(splits)) => {
            let sample = &prepared.samples[0];
            let mut runs = Vec::new();
            for (r, &seed) in seeds.iter().enumerate() {
                let tc = TrainConfig { seed, ..cfg.train.clone() };
                let result = train_transductive(&spec, sample, splits, &tc, None)?;
                let name = if cfg.runs == 1 { "metrics.csv".to_string() } else { format!("metrics_run{r}.csv") };
                write_metrics(&out.join(name), &result.history)?;
                let test_acc = if splits.test.iter().any(|&t| t) {
                    evaluate(&spec, &result.params, sample, Some(&splits.test), tc.loss)?.counts.value(tc.loss)
                } else {
                    f64::NAN
                };
                let last = result.history.last();
                runs.push(RunSummary {
                    seed,
                    epochs: result.history.len(),
                    final_train_loss: last.map_or(f64::NAN, |m| m.train_loss),
                    final_val_loss: last.map_or(f64::NAN, |m| m.val_loss),
                    final_val_acc: last.map_or(f64::NAN, |m| m.val_acc),
                    test_acc,
                });
                println!("run {r} seed {seed}: test accuracy {test_acc:.4}");
                if r == 0 {
                    checkpoint(result.params)?;
                }
            }
            let tests: Vec<f64> = runs.iter().map(|r| r.test_acc).collect();
            let res = TransductiveResult {
                mode: "transductive",
                mean_val_loss: nan_mean(runs.iter().map(|r| r.final_val_loss)),
                mean_val_acc: nan_mean(runs.iter().map(|r| r.final_val_acc)),
                mean_test_acc: nan_mean(tests.iter().copied()),
                std_test_acc: sample_std(&tests),
                runs,
            };
            println!("mean test accuracy {:.4}", res.mean_test_acc);
            write_json(&out.join("result.json"), &res)?;
            Ok(res.mean_val_loss)
        }
        (Some(labels), _) => {
            let cv = crossvalidate(&spec, &prepared.samples, labels, &cfg.train, cfg.folds, cfg.runs)?;
            let epochs: Vec<f64> = (1..=cfg.train.epochs).map(|e| e as f64).collect();
            let mut names = vec!["epoch".to_string()];
            names.extend((0..cv.repeats.len()).map(|r| format!("repeat{r}")));
            let mut columns: Vec<&[f64]> = vec![&epochs];
            columns.extend(cv.repeats.iter().map(|r| r.mean_val_curve.as_slice()));
            let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
            write_columns_csv(&out.join("cv_curves.csv"), &name_refs, &columns)?;

            // final model on every graph for the first repeat's selected epoch count
            let final_epochs = cv.repeats[0].best_epoch;
            let all: Vec<usize> = (0..prepared.samples.len()).collect();
            let tc = TrainConfig { epochs: final_epochs, ..cfg.train.clone() };
            let result = train_inductive(&spec, &prepared.samples, &all, &[], &tc, None)?;
            write_metrics(&out.join("metrics.csv"), &result.history)?;
            checkpoint(result.params)?;

            println!("cross-validated accuracy {:.4} (std {:.4}, {} repeats)", cv.mean, cv.std, cv.repeats.len());
            write_json(&out.join("result.json"), &InductiveResult { mode: "inductive", folds: cfg.folds, cv: &cv, final_epochs })?;
            Ok(f64::NAN)
        }
        _ => unreachable!("a dataset yields labels or splits"),
    }
}

/// Copy of `cfg` with every low-pass order set to `eta`.
fn with_eta(cfg: &ExperimentConfig, eta: f64, base: Option<&Path>) -> CliResult<ExperimentConfig> {
    let mut out = cfg.clone();
    let mut touched = false;
    for text in &mut out.designs {
        if let FilterDesign::LowPass { .. } = FilterDesign::parse_with_base(text, base)? {
            *text = FilterDesign::LowPass { eta }.to_string();
            touched = true;
        }
    }
    if !touched {
        return Err(CliError::Config("an eta sweep needs at least one lowpass design".into()));
    }
    out.eta_sweep.clear();
    Ok(out)
}

#[derive(Serialize)]
struct SweepResult {
    mode: &'static str,
    etas: Vec<f64>,
    val_losses: Vec<f64>,
    selected_eta: f64,
}

pub fn run(args: &TrainArgs, strict: bool) -> CliResult<()> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let mut cfg: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    if let Some(s) = args.seed {
        cfg.train.seed = s;
    }
    if let Some(e) = args.epochs {
        cfg.train.epochs = e;
    }
    if let Some(lr) = args.lr {
        cfg.train.learning_rate = lr;
    }
    if let Some(r) = args.runs {
        cfg.runs = r;
    }
    if let Some(etas) = &args.eta_sweep {
        cfg.eta_sweep = etas.clone();
    }
    let base = args.config.parent().filter(|p| !p.as_os_str().is_empty());
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(|d| base.map_or(d.clone(), |b| b.join(d))))
        .unwrap_or_else(|| PathBuf::from("run"));

    if cfg.eta_sweep.is_empty() {
        run_one(&cfg, base, &out, &args.config, strict)?;
        return Ok(());
    }
    let etas = cfg.eta_sweep.clone();
    let mut losses = Vec::with_capacity(etas.len());
    for &eta in &etas {
        let sub = with_eta(&cfg, eta, base)?;
        let loss = run_one(&sub, base, &out.join(format!("eta_{eta}")), &args.config, strict)?;
        println!("eta {eta}: mean final validation loss {loss:.6}");
        losses.push(loss);
    }
    let best = losses
        .iter()
        .enumerate()
        .filter(|(_, l)| l.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .ok_or_else(|| CliError::Config("no finite validation loss; the sweep needs a validation split".into()))?;
    std::fs::create_dir_all(&out)?;
    write_columns_csv(&out.join("eta_sweep.csv"), &["eta", "val_loss"], &[&etas, &losses])?;
    write_json(
        &out.join("result.json"),
        &SweepResult { mode: "eta_sweep", etas: etas.clone(), val_losses: losses, selected_eta: etas[best] },
    )?;
    println!("selected eta {}", etas[best]);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{"dataset": {"kind": "single_graph", "path": "d"}, "kernel": "gcn", "architecture": "G4-G2",
                "model": {"hidden_bias": false}, "train": {"epochs": 3}}"#,
        )
        .unwrap();
        assert_eq!(cfg.laplacian, LaplacianKind::SymmetricNormalized);
        assert!(!cfg.model.hidden_bias && cfg.model.output_bias);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.learning_rate, TrainConfig::default().learning_rate);
        assert_eq!((cfg.runs, cfg.folds), (1, 10));
    }

    #[test]
    fn unknown_fields_and_double_supports_are_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(
            r#"{"dataset": {"kind": "single_graph", "path": "d"}, "architecture": "G2", "epochz": 3}"#
        )
        .is_err());
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{"dataset": {"kind": "single_graph", "path": "d"}, "kernel": "gcn", "designs": ["allpass"], "architecture": "G2"}"#,
        )
        .unwrap();
        assert!(cfg.kernel_choice(None).is_err());
    }

    #[test]
    fn eta_substitution_touches_lowpass_only() {
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{"dataset": {"kind": "single_graph", "path": "d"}, "designs": ["lowpass(eta=5)", "highpass"], "architecture": "DSG2"}"#,
        )
        .unwrap();
        let swept = with_eta(&cfg, 2.0, None).unwrap();
        assert_eq!(FilterDesign::parse_with_base(&swept.designs[0], None).unwrap(), FilterDesign::LowPass { eta: 2.0 });
        assert_eq!(swept.designs[1], "highpass");
        let no_lowpass = ExperimentConfig { designs: vec!["allpass".into()], ..cfg };
        assert!(with_eta(&no_lowpass, 2.0, None).is_err());
    }

    #[test]
    fn sample_std_needs_two_values() {
        assert_eq!(sample_std(&[1.0]), None);
        assert!((sample_std(&[1.0, 3.0]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }
}
