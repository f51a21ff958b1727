use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use spikegraph::bench::{predict, run_bench, save_bench, train_metric};
use spikegraph::config::RunConfig;
use spikegraph::ingest::{
    load_features, load_labels, load_metric, split_balanced, synth_generate, write_features, write_labels,
    write_metric, FeatureTable, GroupLabels, Label,
};
use spikegraph::interpret::{emit_report, importance_report, SiftIndexMap, DEFAULT_TOP_PAIRS};
use spikegraph::{Error, Features};

#[derive(Parser)]
#[command(name = "spikegraph", version, about = "Graph metric learning for binary spike prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a metric on a balanced sample of labeled bins.
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        data: DataArgs,
        /// Output directory for M.csv, diagnostics.json and the split.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Infer labels of unlabeled bins with a trained metric.
    Predict {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        metric: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Known labels; these bins are the training nodes.
        #[arg(long)]
        labels: PathBuf,
        /// Ground truth for the bins to predict. Without it every feature
        /// bin missing from --labels is predicted.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Feature-importance report from the diagonal of a trained metric.
    Report {
        #[arg(long)]
        metric: PathBuf,
        /// Fraction of the largest diagonal entry that counts as dominant.
        #[arg(long, default_value_t = 0.3)]
        threshold: f64,
        #[arg(long, default_value_t = DEFAULT_TOP_PAIRS)]
        top_pairs: usize,
        /// Decode indices as SIFT descriptor positions.
        #[arg(long, value_enum)]
        sift_map: Option<SiftLayout>,
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
    },
    /// Randomized P_t x P_v trials over the configured settings.
    Bench {
        #[command(flatten)]
        run: RunArgs,
        /// Dataset; the synthetic source from the config is used when absent.
        #[arg(long, requires = "labels")]
        features: Option<PathBuf>,
        #[arg(long, requires = "features")]
        labels: Option<PathBuf>,
        #[arg(long, value_enum)]
        baseline: Option<Baseline>,
        /// Neighbours for the kNN baseline.
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Write a planted synthetic dataset.
    Synth {
        #[arg(long, default_value_t = 20)]
        k: usize,
        #[arg(long, default_value_t = 400)]
        points: usize,
        #[arg(long, default_value_t = 4)]
        informative: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SiftLayout {
    /// 64 subregions x 12 directions
    Full,
    /// 64 subregions x 6 directions
    Subsampled,
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    Knn,
}

/// Run configuration: a `key = value` file plus flag overrides.
#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    objective: Option<String>,
    #[arg(long)]
    topology: Option<String>,
    #[arg(long)]
    dt: Option<usize>,
    #[arg(long)]
    dv: Option<usize>,
    #[arg(long)]
    dvt: Option<usize>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_val: Option<usize>,
    /// Extra `key=value` settings, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, Error> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let overrides: [(&str, Option<String>); 11] = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("objective", self.objective.clone()),
            ("topology", self.topology.clone()),
            ("dt", self.dt.map(|v| v.to_string())),
            ("dv", self.dv.map(|v| v.to_string())),
            ("dvt", self.dvt.map(|v| v.to_string())),
            ("mu", self.mu.map(|v| v.to_string())),
            ("rho", self.rho.map(|v| v.to_string())),
            ("gamma", self.gamma.map(|v| v.to_string())),
            ("n_train", self.n_train.map(|v| v.to_string())),
            ("n_val", self.n_val.map(|v| v.to_string())),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                c.set(key, &v)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Validation(format!("--set expects KEY=VALUE, got '{kv}'")))?;
            c.set(k, v)?;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    labels: PathBuf,
}

/// Outcome of a command that ran to completion.
enum Done {
    Ok,
    /// Results were written but an iterative solver hit its limit.
    NotConverged,
    /// Results were written but some bench trials failed.
    PartialFailure,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NumericalBreakdown(_)
        | Error::ConvergenceFailure(_)
        | Error::BothInfeasible(_)
        | Error::ZeroScale(_)
        | Error::SingularSystem(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(Done::Ok) => ExitCode::SUCCESS,
        Ok(Done::NotConverged) => {
            eprintln!("warning: solver did not converge; results were written");
            ExitCode::from(1)
        }
        Ok(Done::PartialFailure) => {
            eprintln!("error: some trials failed; partial results were written");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(command: Command) -> Result<Done, Error> {
    match command {
        Command::Train { run, data, out } => cmd_train(&run.resolve()?, &data, &out),
        Command::Predict {
            run,
            metric,
            features,
            labels,
            truth,
            out,
        } => cmd_predict(&run.resolve()?, &metric, &features, &labels, truth.as_deref(), &out),
        Command::Report {
            metric,
            threshold,
            top_pairs,
            sift_map,
            out,
        } => cmd_report(&metric, threshold, top_pairs, sift_map, &out),
        Command::Bench {
            run,
            features,
            labels,
            baseline,
            k,
            out,
        } => {
            let mut config = run.resolve()?;
            if baseline.is_some() {
                config.knn_k = Some(k);
                config.validate()?;
            }
            cmd_bench(&config, features.as_deref().zip(labels.as_deref()), &out)
        }
        Command::Synth {
            k,
            points,
            informative,
            noise,
            seed,
            out,
        } => cmd_synth(k, points, informative, noise, seed, &out),
    }
}

/// Feature rows that carry a label, in bin order, with aligned labels.
fn labeled_rows(features: &Features, labels: &[(usize, Label)]) -> Result<(Features, GroupLabels), Error> {
    let mut pairs = Vec::with_capacity(labels.len());
    for &(bin, label) in labels {
        let row = features
            .row_of_bin(bin)
            .ok_or_else(|| Error::Validation(format!("label for bin {bin} has no feature row")))?;
        pairs.push((row, label));
    }
    pairs.sort_unstable_by_key(|p| p.0);
    pairs.dedup_by_key(|p| p.0);
    let rows: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let bins = rows.iter().map(|&r| features.bins[r]).collect();
    let table = FeatureTable::new(features.gather(&rows), bins)?;
    Ok((table, GroupLabels(pairs.into_iter().map(|p| p.1).collect())))
}

#[derive(Serialize)]
struct TrainDiagnostics<'a> {
    objective_name: &'a str,
    topology: String,
    objective: &'a [f64],
    lp_count: Option<usize>,
    converged: bool,
    wall_ms: f64,
    n_train: usize,
    seed: u64,
}

fn cmd_train(config: &RunConfig, data: &DataArgs, out: &Path) -> Result<Done, Error> {
    let features: Features = load_features(&data.features)?;
    let labels = load_labels(&data.labels)?;
    let (table, group) = labeled_rows(&features, &labels)?;
    let (train_ids, val_ids) = split_balanced(&group, config.n_train, config.n_val, config.seed)?;
    let train = table.gather(&train_ids);
    let times: Vec<usize> = train_ids.iter().map(|&i| table.bins[i]).collect();
    let train_labels: Vec<Label> = train_ids.iter().map(|&i| group.0[i]).collect();

    let trained = train_metric(config, config.objective, config.topology, &train, &times, &train_labels)?;

    fs::create_dir_all(out)?;
    write_metric(out.join("M.csv"), &trained.metric)?;
    let pick = |ids: &[usize]| -> Vec<(usize, Label)> { ids.iter().map(|&i| (table.bins[i], group.0[i])).collect() };
    write_labels(out.join("train_labels.csv"), &pick(&train_ids))?;
    write_labels(out.join("val_labels.csv"), &pick(&val_ids))?;
    let diag = TrainDiagnostics {
        objective_name: config.objective.as_str(),
        topology: config.topology.to_string(),
        objective: &trained.objective,
        lp_count: trained.lp_count,
        converged: trained.converged,
        wall_ms: trained.wall_ms,
        n_train: config.n_train,
        seed: config.seed,
    };
    fs::write(out.join("diagnostics.json"), serde_json::to_string_pretty(&diag)?)?;
    println!(
        "trained {} on {} bins: objective {:.6} -> {:.6}",
        config.objective,
        train_ids.len(),
        trained.objective.first().copied().unwrap_or(f64::NAN),
        trained.objective.last().copied().unwrap_or(f64::NAN)
    );
    Ok(if trained.converged { Done::Ok } else { Done::NotConverged })
}

fn cmd_predict(
    config: &RunConfig,
    metric: &Path,
    features: &Path,
    labels: &Path,
    truth: Option<&Path>,
    out: &Path,
) -> Result<Done, Error> {
    let features: Features = load_features(features)?;
    let metric = load_metric(metric)?;
    let (train, train_group) = labeled_rows(&features, &load_labels(labels)?)?;
    let train_bins: HashSet<usize> = train.bins.iter().copied().collect();

    let (val, val_truth) = match truth {
        Some(p) => {
            let t = load_labels(p)?;
            if let Some(&(b, _)) = t.iter().find(|(b, _)| train_bins.contains(b)) {
                return Err(Error::Validation(format!("bin {b} is both a training and a target bin")));
            }
            let (v, g) = labeled_rows(&features, &t)?;
            (v, Some(g.0))
        }
        None => {
            let rows: Vec<usize> = (0..features.n_rows())
                .filter(|&r| !train_bins.contains(&features.bins[r]))
                .collect();
            let bins = rows.iter().map(|&r| features.bins[r]).collect();
            (FeatureTable::new(features.gather(&rows), bins)?, None)
        }
    };
    if val.n_rows() == 0 {
        return Err(Error::Validation("no bins to predict".into()));
    }

    let result = predict(
        config,
        config.topology,
        &metric,
        &train.vectors,
        &train.bins,
        &train_group.0,
        &val.vectors,
        &val.bins,
        val_truth.as_deref(),
    )?;
    fs::create_dir_all(out)?;
    let rows: Vec<(usize, Label)> = val.bins.iter().copied().zip(result.y_hat.iter().copied()).collect();
    write_labels(out.join("predictions.csv"), &rows)?;
    println!("predicted {} bins", rows.len());
    if let Some(acc) = result.accuracy {
        println!("accuracy {acc:.6}");
    }
    Ok(Done::Ok)
}

fn cmd_report(
    metric: &Path,
    threshold: f64,
    top_pairs: usize,
    sift_map: Option<SiftLayout>,
    out: &Path,
) -> Result<Done, Error> {
    let m = load_metric::<f64>(metric)?;
    let report = importance_report(&m, threshold, top_pairs)?;
    let map = sift_map.map(|l| match l {
        SiftLayout::Full => SiftIndexMap::FULL,
        SiftLayout::Subsampled => SiftIndexMap::SUBSAMPLED,
    });
    emit_report(&report, map.as_ref(), out)?;
    if report.is_degenerate() {
        println!("metric diagonal is all zero; no dominant features");
    } else {
        println!("{} dominant features: {:?}", report.dominant.len(), report.dominant);
    }
    Ok(Done::Ok)
}

fn cmd_bench(config: &RunConfig, data: Option<(&Path, &Path)>, out: &Path) -> Result<Done, Error> {
    let (features, labels) = match data {
        Some((f, l)) => labeled_rows(&load_features(f)?, &load_labels(l)?)?,
        None => {
            let s = synth_generate::<f64>(&config.synth)?;
            (s.features, s.labels)
        }
    };
    let report = run_bench(config, &features, &labels)?;
    fs::create_dir_all(out)?;
    save_bench(&report, out.join("bench.csv"), out.join("bench_summary.json"))?;
    for s in &report.summaries {
        let acc = s.accuracy.as_ref().map_or(String::from("-"), |a| format!("{:.4} ± {:.4}", a.mean, a.std));
        println!("{:<28} accuracy {acc}  failures {}/{}", s.setting, s.failures, s.trials);
    }
    Ok(if report.failures() > 0 { Done::PartialFailure } else { Done::Ok })
}

fn cmd_synth(k: usize, points: usize, informative: usize, noise: f64, seed: u64, out: &Path) -> Result<Done, Error> {
    let spec = spikegraph::ingest::SynthSpec {
        k,
        n_points: points,
        n_informative: informative,
        noise_rate: noise,
        seed,
    };
    let s = synth_generate::<f64>(&spec)?;
    fs::create_dir_all(out)?;
    write_features(out.join("features.csv"), &s.features)?;
    let labels: Vec<(usize, Label)> = s.features.bins.iter().copied().zip(s.labels.0.iter().copied()).collect();
    write_labels(out.join("labels.csv"), &labels)?;
    fs::write(out.join("truth.json"), serde_json::to_string_pretty(&s.truth)?)?;
    println!("wrote {} points with K = {k}", points);
    Ok(Done::Ok)
}
