use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use std::fs;
use std::path::PathBuf;

use kernelcount::counting::{build_ground_truth, CountTable};
use kernelcount::dataset_io::{parse_counts, parse_dataset, serialize_counts, serialize_dataset};
use kernelcount::gram::{build_joint_gram, read_gram, write_gram};
use kernelcount::pipeline::{
    baseline_rows, emit_plot_data, evaluate_trained, featurize_corpus, generate_dataset,
    parse_patterns, read_features, run_cell, run_pipeline, serialize_patterns, write_features,
    DatasetSource, RunConfig, TrainedCell,
};
use kernelcount::regression::{
    CellStatus, DatasetSummary, EvalReport, GridRanges, ReportCell,
};
use kernelcount::{FeatureKind, Pattern, Skeleton};

#[derive(Parser)]
#[command(
    name = "kernelcount",
    version,
    about = "Approximate subgraph isomorphism counting with graph kernels"
)]
struct Cli {
    /// Random seed (default 2023).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Primary output path: a file, or the run directory for `run`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run configuration file (JSON), used by `run`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset file with train/valid/test splits.
    Generate {
        /// er | regular
        #[arg(long, default_value = "er")]
        family: String,
        #[arg(long, default_value_t = 20)]
        train: usize,
        #[arg(long, default_value_t = 10)]
        valid: usize,
        #[arg(long, default_value_t = 10)]
        test: usize,
        /// Vertex count (er).
        #[arg(long, default_value_t = 10)]
        n: usize,
        /// Edge probability (er).
        #[arg(long, default_value_t = 0.3)]
        p: f64,
        /// Smallest vertex count (regular).
        #[arg(long, default_value_t = 10)]
        n_min: usize,
        /// Largest vertex count (regular).
        #[arg(long, default_value_t = 30)]
        n_max: usize,
        /// Degree (regular).
        #[arg(long, default_value_t = 3)]
        degree: usize,
    },
    /// Build ground-truth patterns and exact counts for a dataset.
    Count {
        #[arg(long)]
        dataset: PathBuf,
        /// Comma-separated skeletons (default: all four).
        #[arg(long, value_delimiter = ',')]
        skeletons: Vec<String>,
        #[arg(long)]
        patterns_out: PathBuf,
        #[arg(long)]
        counts_out: PathBuf,
    },
    /// Featurize patterns and graphs into a JSON-lines sidecar.
    Featurize {
        #[arg(long)]
        dataset: PathBuf,
        /// Pattern file; when present, patterns come first in the sidecar.
        #[arg(long)]
        patterns: Option<PathBuf>,
        /// wl | nie-wl | 2-wl | 3-wl | sp | gr3
        #[arg(long)]
        kind: String,
        #[arg(long, default_value_t = 3)]
        iterations: u32,
        #[arg(long, default_value_t = 2_000_000)]
        tuple_budget: u64,
    },
    /// Assemble the joint Gram matrix from a feature sidecar.
    Gram {
        #[arg(long)]
        features: PathBuf,
    },
    /// Grid-search one ridge model per pattern on a Gram matrix.
    Train {
        #[arg(long)]
        gram: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        patterns: PathBuf,
        #[arg(long)]
        counts: PathBuf,
        /// linear | poly | rbf
        #[arg(long, default_value = "linear")]
        trick: String,
        #[arg(long)]
        normalized: bool,
    },
    /// Evaluate saved models on a split and write an evaluation report.
    Evaluate {
        #[arg(long)]
        gram: PathBuf,
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        counts: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Also write the flat per-pattern CSV here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run the full pipeline described by --config.
    Run,
    /// Convert a report to plot-ready CSV (failed cells become zero).
    PlotData {
        #[arg(long)]
        report: PathBuf,
    },
}

const DEFAULT_SEED: u64 = 2023;

fn parse_skeletons(raw: &[String]) -> anyhow::Result<Vec<Skeleton>> {
    if raw.is_empty() {
        return Ok(Skeleton::ALL.to_vec());
    }
    raw.iter()
        .map(|s| s.parse::<Skeleton>().map_err(anyhow::Error::msg))
        .collect()
}

fn require_out(out: &Option<PathBuf>) -> anyhow::Result<&PathBuf> {
    out.as_ref().context("--out is required for this command")
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .ok();
    }
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    match &cli.command {
        Command::Generate {
            family,
            train,
            valid,
            test,
            n,
            p,
            n_min,
            n_max,
            degree,
        } => {
            let source = match family.as_str() {
                "er" => DatasetSource::ErdosRenyi {
                    train: *train,
                    valid: *valid,
                    test: *test,
                    n: *n,
                    p: *p,
                },
                "regular" => DatasetSource::Regular {
                    train: *train,
                    valid: *valid,
                    test: *test,
                    n_min: *n_min,
                    n_max: *n_max,
                    degree: *degree,
                },
                other => bail!("unknown family {other:?} (er or regular)"),
            };
            let dataset = generate_dataset(&source, seed)?;
            fs::write(require_out(&cli.out)?, serialize_dataset(&dataset))?;
        }
        Command::Count {
            dataset,
            skeletons,
            patterns_out,
            counts_out,
        } => {
            let dataset = parse_dataset(&fs::read_to_string(dataset)?)?;
            let skeletons = parse_skeletons(skeletons)?;
            let truth = build_ground_truth(&dataset, &skeletons);
            fs::write(patterns_out, serialize_patterns(&truth.patterns))?;
            fs::write(counts_out, serialize_counts(&truth.table.records()))?;
            eprintln!(
                "[kernelcount] retained {} patterns over {} graphs",
                truth.patterns.len(),
                dataset.len()
            );
        }
        Command::Featurize {
            dataset,
            patterns,
            kind,
            iterations,
            tuple_budget,
        } => {
            let kind: FeatureKind = kind.parse().map_err(anyhow::Error::msg)?;
            let dataset = parse_dataset(&fs::read_to_string(dataset)?)?;
            let patterns: Vec<Pattern> = match patterns {
                Some(path) => parse_patterns(&fs::read_to_string(path)?)?,
                None => Vec::new(),
            };
            let items =
                featurize_corpus(kind, &patterns, dataset.graphs(), *iterations, *tuple_budget)?;
            write_features(
                require_out(&cli.out)?,
                kind,
                *iterations,
                patterns.len(),
                *tuple_budget,
                &items,
            )?;
        }
        Command::Gram { features } => {
            let file = read_features(features)?;
            let gram = build_joint_gram(&file.items, file.q)?;
            write_gram(require_out(&cli.out)?, &gram)?;
        }
        Command::Train {
            gram,
            dataset,
            patterns,
            counts,
            trick,
            normalized,
        } => {
            if !matches!(trick.as_str(), "linear" | "poly" | "rbf") {
                bail!("unknown trick {trick:?} (linear, poly or rbf)");
            }
            let base = read_gram(gram)?;
            let dataset = parse_dataset(&fs::read_to_string(dataset)?)?;
            let patterns = parse_patterns(&fs::read_to_string(patterns)?)?;
            let table = CountTable::from_records(&parse_counts(&fs::read_to_string(counts)?)?);
            let grids = GridRanges::default();
            let result = run_cell(
                &base,
                *normalized,
                trick,
                &grids,
                &patterns,
                &table,
                &dataset,
                "valid",
            )?;
            for outcome in &result.outcomes {
                if outcome.status != CellStatus::Ok {
                    eprintln!(
                        "[kernelcount] pattern {} failed: {}",
                        outcome.pattern,
                        outcome.detail.as_deref().unwrap_or("unknown")
                    );
                }
            }
            let (kernel, nie) = match base.meta().kind.as_str() {
                "nie-wl" => ("wl".to_string(), true),
                other => (other.to_string(), false),
            };
            let cell = TrainedCell {
                kernel,
                nie,
                trick_family: trick.clone(),
                normalized: *normalized,
                models: result.models.into_iter().flatten().collect(),
            };
            fs::write(
                require_out(&cli.out)?,
                serde_json::to_string_pretty(&cell)? + "\n",
            )?;
        }
        Command::Evaluate {
            gram,
            models,
            dataset,
            counts,
            split,
            csv,
        } => {
            let base = read_gram(gram)?;
            let trained: TrainedCell = serde_json::from_str(&fs::read_to_string(models)?)?;
            let dataset = parse_dataset(&fs::read_to_string(dataset)?)?;
            let table = CountTable::from_records(&parse_counts(&fs::read_to_string(counts)?)?);
            let (outcomes, aggregate) = evaluate_trained(
                &base,
                trained.normalized,
                &trained.models,
                &table,
                &dataset,
                split,
            )?;
            let pattern_ids: Vec<String> = outcomes.iter().map(|o| o.pattern.clone()).collect();
            let baselines = baseline_rows(&pattern_ids, &table, &dataset, split)?;
            let cell = ReportCell {
                kernel: trained.kernel.clone(),
                trick: trained.trick_family.clone(),
                nie: trained.nie,
                normalized: trained.normalized,
                status: CellStatus::Ok,
                rmse: aggregate.map(|m| m.rmse),
                mae: aggregate.map(|m| m.mae),
                patterns: outcomes,
                detail: None,
            };
            let report = EvalReport {
                seed,
                split: split.clone(),
                dataset: DatasetSummary {
                    graphs: dataset.len(),
                    train: dataset.split("train").map_or(0, <[String]>::len),
                    valid: dataset.split("valid").map_or(0, <[String]>::len),
                    test: dataset.split("test").map_or(0, <[String]>::len),
                },
                patterns: pattern_ids,
                cells: vec![cell],
                baselines,
            };
            let json = serde_json::to_string_pretty(&report)? + "\n";
            fs::write(require_out(&cli.out)?, json)?;
            if let Some(csv_path) = csv {
                fs::write(csv_path, report.to_csv())?;
            }
        }
        Command::Run => {
            let config_path = cli
                .config
                .as_ref()
                .context("--config is required for run")?;
            let mut cfg: RunConfig = serde_json::from_str(&fs::read_to_string(config_path)?)
                .with_context(|| format!("parsing {}", config_path.display()))?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if let Some(out) = &cli.out {
                cfg.out_dir = out.clone();
            }
            let report = run_pipeline(&cfg)?;
            let failed = report
                .cells
                .iter()
                .filter(|c| c.status != CellStatus::Ok)
                .count();
            eprintln!(
                "[kernelcount] {} cells evaluated, {} failed (see report.json)",
                report.cells.len(),
                failed
            );
        }
        Command::PlotData { report } => {
            let report: EvalReport = serde_json::from_str(&fs::read_to_string(report)?)?;
            fs::write(require_out(&cli.out)?, emit_plot_data(&report))?;
        }
    }
    Ok(())
}
