use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;
use specgconv::analysis::{export_profile, gat_profile_stats, profile, profile_deviation, Deviation};
use specgconv::filter::{coverage, gcn_cutoff, gcn_theoretical_profile, FilterDesign, COVERAGE_WARN};
use specgconv::graph::{average_degree, build_laplacian, LaplacianKind};
use specgconv::io::write_columns_csv;
use specgconv::io::write_matrix_csv;
use specgconv::kernels::{GatSampler, KernelTag};

use crate::setup::{basis, build_kernels, load_graph, random_unit_features, KernelChoice};
use crate::{CliError, CliResult};

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// `ring<N>`, `star<LEAVES>`, a single-graph dataset directory or a TU directory.
    #[arg(long)]
    graph: String,
    /// Graph to take from a TU dataset.
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// `gcn`, `cheb:K`, `cayley:H:R`, `gat:SEED` or `design:EXPR[;EXPR...]`.
    #[arg(long)]
    kernel: String,
    #[arg(long, default_value = "symmetric_normalized")]
    laplacian: String,
    #[arg(long, default_value = "analysis")]
    out: PathBuf,
    /// Store magnitudes of the profiles.
    #[arg(long)]
    abs: bool,
    /// Skip the n x n full-profile matrices.
    #[arg(long)]
    no_full: bool,
    /// Replace node features by this many unit-norm Gaussian columns.
    #[arg(long)]
    random_features: Option<usize>,
    #[arg(long, default_value_t = 0)]
    feature_seed: u64,
    /// Sampled heads for `gat`.
    #[arg(long, default_value_t = 250)]
    trials: usize,
}

#[derive(Serialize)]
struct SupportSummary {
    support: usize,
    tag: String,
    standard_file: String,
    full_file: Option<String>,
    off_diagonal_max: f64,
    /// Deviation of the standard profile from the analytic response.
    oracle: Option<Deviation>,
}

#[derive(Serialize)]
struct Summary {
    graph: String,
    nodes: usize,
    edges: usize,
    laplacian: LaplacianKind,
    kernel: String,
    lambda_max: f64,
    average_degree: f64,
    /// Zero crossing of the regular-graph GCN response at the average degree.
    gcn_cutoff: Option<f64>,
    coverage: Option<f64>,
    supports: Vec<SupportSummary>,
    gat_trials: Option<usize>,
    version: &'static str,
}

fn name(out: &Path, file: &str) -> String {
    out.join(file).display().to_string()
}

fn analytic(tag: &KernelTag, lambdas: &[f64], lambda_max: f64, d_bar: f64) -> CliResult<Option<Vec<f64>>> {
    Ok(match tag {
        KernelTag::Designed { design } => Some(design.evaluate_at(lambdas, lambda_max)?),
        KernelTag::Chebyshev { k } => Some(FilterDesign::ChebBasis { k: *k }.evaluate_at(lambdas, lambda_max)?),
        KernelTag::Gcn if d_bar > 0.0 => Some(gcn_theoretical_profile(d_bar, lambdas)?),
        _ => None,
    })
}

pub fn run(args: &AnalyzeArgs) -> CliResult<()> {
    let kind: LaplacianKind = args.laplacian.parse()?;
    let choice = KernelChoice::parse(&args.kernel, None)?;
    let mut g = load_graph(&args.graph, args.index)?;
    if let Some(dim) = args.random_features {
        g = random_unit_features(g, dim, args.feature_seed)?;
    }
    std::fs::create_dir_all(&args.out)?;
    let laplacian = build_laplacian(&g, kind)?;
    let b = basis(&laplacian, kind)?;
    let lambdas = b.eigenvalues().as_slice().to_vec();
    let d_bar = average_degree(&g);
    let cutoff = if d_bar > 0.0 { Some(gcn_cutoff(d_bar)?) } else { None };

    let mut cov = None;
    if let KernelChoice::Designs(designs) = &choice {
        if designs.iter().all(|d| !matches!(d, FilterDesign::Tabulated { .. })) {
            let c = coverage(designs, b.lambda_max())?;
            if c < COVERAGE_WARN {
                log::warn!("designs leave part of the spectrum uncovered (min total response {c:.3e})");
            }
            cov = Some(c);
        }
    }

    let mut supports = Vec::new();
    let mut gat_trials = None;
    if let KernelChoice::Gat { seed } = choice {
        let stats = gat_profile_stats(&g, &b, &GatSampler::default(), args.trials, seed)?;
        let mean: Vec<f64> =
            stats.mean_standard.iter().map(|v| if args.abs { v.abs() } else { *v }).collect();
        let std = stats.std_standard.as_slice();
        write_columns_csv(&args.out.join("gat_profile.csv"), &["lambda", "mean", "std"], &[&lambdas, &mean, std])?;
        let full_file = if args.no_full {
            None
        } else {
            let mean_full = if args.abs { stats.mean_full.abs() } else { stats.mean_full.clone() };
            write_matrix_csv(&args.out.join("gat_full_mean.csv"), &mean_full)?;
            write_matrix_csv(&args.out.join("gat_full_std.csv"), &stats.std_full)?;
            Some(name(&args.out, "gat_full_mean.csv"))
        };
        let off = (0..b.n())
            .flat_map(|i| (0..b.n()).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| stats.mean_full[(i, j)].abs())
            .fold(0.0, f64::max);
        supports.push(SupportSummary {
            support: 1,
            tag: format!("gat:{seed}"),
            standard_file: name(&args.out, "gat_profile.csv"),
            full_file,
            off_diagonal_max: off,
            oracle: None,
        });
        gat_trials = Some(stats.trials);
    } else {
        let built = build_kernels(&g, kind, &choice)?;
        for (s, (c, tag)) in built.kernels.supports().iter().zip(built.kernels.tags()).enumerate() {
            let p = profile(c, &b)?;
            let standard_file = format!("profile_{}.csv", s + 1);
            let full_file = format!("profile_{}_full.csv", s + 1);
            let full_path = (!args.no_full).then(|| args.out.join(&full_file));
            export_profile(&p, &args.out.join(&standard_file), full_path.as_deref(), args.abs)?;
            let oracle = match analytic(tag, &lambdas, b.lambda_max(), d_bar)? {
                Some(o) => Some(profile_deviation(&p, &o)?),
                None => None,
            };
            supports.push(SupportSummary {
                support: s + 1,
                tag: tag.to_string(),
                standard_file: name(&args.out, &standard_file),
                full_file: full_path.map(|p| p.display().to_string()),
                off_diagonal_max: p.off_diagonal_max(),
                oracle,
            });
        }
    }

    let summary = Summary {
        graph: args.graph.clone(),
        nodes: g.n(),
        edges: g.edge_count(),
        laplacian: kind,
        kernel: args.kernel.clone(),
        lambda_max: b.lambda_max(),
        average_degree: d_bar,
        gcn_cutoff: cutoff,
        coverage: cov,
        supports,
        gat_trials,
        version: env!("CARGO_PKG_VERSION"),
    };
    let text = serde_json::to_string_pretty(&summary)?;
    std::fs::write(args.out.join("summary.json"), &text)?;
    println!(
        "n={} lambda_max={:.6} average_degree={:.6} gcn_cutoff={}",
        summary.nodes,
        summary.lambda_max,
        summary.average_degree,
        cutoff.map_or("n/a".into(), |c| format!("{c:.6}"))
    );
    for s in &summary.supports {
        match &s.oracle {
            Some(d) => println!("support {} {}: max |profile - analytic| = {:.3e}", s.support, s.tag, d.max_abs),
            None => println!("support {} {}", s.support, s.tag),
        }
    }
    if summary.supports.is_empty() {
        return Err(CliError::Config("kernel produced no supports".into()));
    }
    Ok(())
}
