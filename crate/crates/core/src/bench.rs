//! End-to-end train/predict pipeline and the randomized trial harness.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Objective, RunConfig};
use crate::error::{Error, Result};
use crate::gdpa::train_gdpa;
use crate::glmnn::GlmnnProblem;
use crate::glr::{train_glr, GlrProblem};
use crate::graph::{assemble_laplacian, build_expanded_topology, build_train_topology, MetricMatrix, TopologyMode};
use crate::infer::{accuracy, infer, InferenceResult};
use crate::ingest::{sample_balanced, FeatureTable, GroupLabels, Label};
use crate::linalg::Matrix;
use crate::oracle::{knn_baseline, sdp_reference_solve, OracleOptions};
use crate::scalar::Scalar;

pub const BENCH_HEADER: &str = "setting,trial_t,trial_v,objective,n_train,accuracy,wall_ms,lp_count";

#[derive(Clone, Debug)]
pub struct TrainedMetric<T> {
    pub metric: MetricMatrix<T>,
    /// Objective value after each accepted iterate (first entry: start point).
    pub objective: Vec<f64>,
    pub lp_count: Option<usize>,
    pub converged: bool,
    pub wall_ms: f64,
}

/// Trains a metric on the training nodes (`features` rows in time order).
pub fn train_metric<T: Scalar>(
    config: &RunConfig,
    objective: Objective,
    mode: TopologyMode,
    features: &Matrix<T>,
    times: &[usize],
    labels: &[Label],
) -> Result<TrainedMetric<T>> {
    let topology = build_train_topology(times, mode, config.d_t)?;
    match objective {
        Objective::Glr => {
            let problem = GlrProblem::new(&topology, features, labels)?;
            let out = train_glr(&problem, &config.glr())?;
            Ok(TrainedMetric {
                metric: out.metric,
                objective: out.diagnostics.objective,
                lp_count: None,
                converged: out.converged,
                wall_ms: out.diagnostics.wall_ms,
            })
        }
        Objective::GlmnnGdpa => {
            let problem = GlmnnProblem::new(features, &topology, labels, config.glmnn())?;
            let out = train_gdpa(&problem, &config.gdpa())?;
            Ok(TrainedMetric {
                metric: out.metric,
                objective: out.diagnostics.objective,
                lp_count: Some(out.diagnostics.lp_count),
                converged: out.converged,
                wall_ms: out.diagnostics.wall_ms,
            })
        }
        Objective::GlmnnOracle => {
            let start = Instant::now();
            let problem = GlmnnProblem::new(features, &topology, labels, config.glmnn())?;
            let out = sdp_reference_solve(&problem, &OracleOptions::default())?;
            Ok(TrainedMetric {
                objective: vec![out.objective.to_f64_lossy()],
                metric: out.metric,
                lp_count: Some(out.iterations),
                converged: out.certified,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            })
        }
    }
}

/// Builds the expanded graph under `metric` and runs harmonic inference.
#[allow(clippy::too_many_arguments)]
pub fn predict<T: Scalar>(
    config: &RunConfig,
    mode: TopologyMode,
    metric: &MetricMatrix<T>,
    train: &Matrix<T>,
    train_times: &[usize],
    train_labels: &[Label],
    val: &Matrix<T>,
    val_times: &[usize],
    truth: Option<&[Label]>,
) -> Result<InferenceResult<T>> {
    if metric.dim() != train.cols() {
        return Err(Error::DimensionMismatch {
            expected: train.cols(),
            got: metric.dim(),
        });
    }
    if val.cols() != train.cols() {
        return Err(Error::DimensionMismatch {
            expected: train.cols(),
            got: val.cols(),
        });
    }
    let tt = build_train_topology(train_times, mode, config.d_t)?;
    let topology = build_expanded_topology(&tt, train_labels, val_times, config.d_v, config.d_vt)?;
    let k = train.cols();
    let nodes = Matrix::from_fn(train.rows() + val.rows(), k, |i, j| {
        if i < train.rows() {
            train[(i, j)]
        } else {
            val[(i - train.rows(), j)]
        }
    });
    let graph = assemble_laplacian(&topology, &nodes, metric)?;
    infer(&graph, train_labels, truth)
}

/// One point of the bench grid. `objective = None` is the kNN baseline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Setting {
    pub objective: Option<Objective>,
    pub n_train: usize,
    pub topology: TopologyMode,
}

impl Setting {
    pub fn method(&self, knn_k: Option<usize>) -> String {
        match self.objective {
            Some(o) => o.to_string(),
            None => format!("knn{}", knn_k.unwrap_or(0)),
        }
    }

    pub fn name(&self, knn_k: Option<usize>) -> String {
        format!("{}-{}-n{}", self.method(knn_k), self.topology, self.n_train)
    }
}

/// Cartesian product of the configured sweeps, plus one kNN setting per
/// training size when a baseline is requested.
pub fn settings(config: &RunConfig) -> Vec<Setting> {
    let mut out = Vec::new();
    for n_train in config.train_sizes() {
        for &objective in &config.objectives() {
            for topology in config.topologies() {
                out.push(Setting {
                    objective: Some(objective),
                    n_train,
                    topology,
                });
            }
        }
        if config.knn_k.is_some() {
            out.push(Setting {
                objective: None,
                n_train,
                topology: config.topology,
            });
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub accuracy: f64,
    /// Training wall time.
    pub wall_ms: f64,
    pub lp_count: Option<usize>,
    pub objective_final: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrialRow {
    pub setting: Setting,
    pub trial_t: usize,
    pub trial_v: usize,
    pub result: std::result::Result<TrialResult, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    /// Population statistics; `None` for an empty sample.
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Some(Self { mean, std: var.sqrt() })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettingSummary {
    pub setting: String,
    pub objective: String,
    pub topology: TopologyMode,
    pub n_train: usize,
    pub trials: usize,
    pub failures: usize,
    pub accuracy: Option<Stat>,
    pub wall_ms: Option<Stat>,
    pub lp_count: Option<Stat>,
    pub objective_final: Option<Stat>,
}

#[derive(Clone, Debug)]
pub struct BenchReport {
    pub knn_k: Option<usize>,
    /// Sorted by setting, then trial ids.
    pub rows: Vec<TrialRow>,
    pub summaries: Vec<SettingSummary>,
}

impl BenchReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.result.is_err()).count()
    }

    pub fn summary(&self, setting: &Setting) -> Option<&SettingSummary> {
        let name = setting.name(self.knn_k);
        self.summaries.iter().find(|s| s.setting == name)
    }
}

/// SplitMix64 finaliser over a sequence of words; derives per-trial seeds.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut z = base;
    for &p in parts {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(p);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}

fn gather_split<T: Scalar>(features: &FeatureTable<T>, labels: &GroupLabels, ids: &[usize]) -> (Matrix<T>, Vec<usize>, Vec<Label>) {
    (
        features.gather(ids),
        ids.iter().map(|&i| features.bins[i]).collect(),
        ids.iter().map(|&i| labels.0[i]).collect(),
    )
}

fn run_train_set<T: Scalar>(
    config: &RunConfig,
    features: &FeatureTable<T>,
    labels: &GroupLabels,
    setting: Setting,
    t: usize,
) -> Vec<TrialRow> {
    let fail = |msg: String| -> Vec<TrialRow> {
        (0..config.p_v)
            .map(|v| TrialRow {
                setting,
                trial_t: t,
                trial_v: v,
                result: Err(msg.clone()),
            })
            .collect()
    };
    let n = setting.n_train as u64;
    let train_ids = match sample_balanced(labels, setting.n_train, &[], derive_seed(config.seed, &[n, t as u64])) {
        Ok(ids) => ids,
        Err(e) => return fail(e.to_string()),
    };
    let (train, train_times, train_labels) = gather_split(features, labels, &train_ids);

    let trained = match setting.objective {
        Some(objective) => match train_metric(config, objective, setting.topology, &train, &train_times, &train_labels) {
            Ok(m) => Some(m),
            Err(e) => return fail(e.to_string()),
        },
        None => None,
    };

    (0..config.p_v)
        .map(|v| {
            let result = (|| -> Result<TrialResult> {
                let seed = derive_seed(config.seed, &[n, t as u64, v as u64 + 1]);
                let val_ids = sample_balanced(labels, config.n_val, &train_ids, seed)?;
                let (val, val_times, val_truth) = gather_split(features, labels, &val_ids);
                match &trained {
                    Some(m) => {
                        let r = predict(
                            config,
                            setting.topology,
                            &m.metric,
                            &train,
                            &train_times,
                            &train_labels,
                            &val,
                            &val_times,
                            Some(&val_truth),
                        )?;
                        Ok(TrialResult {
                            accuracy: r.accuracy.unwrap_or(0.0),
                            wall_ms: m.wall_ms,
                            lp_count: m.lp_count,
                            objective_final: m.objective.last().copied(),
                        })
                    }
                    None => {
                        let k = config.knn_k.unwrap_or(5);
                        let start = Instant::now();
                        let y = knn_baseline(&train, &train_labels, &val, k, None)?;
                        Ok(TrialResult {
                            accuracy: accuracy(&y, &val_truth)?,
                            wall_ms: start.elapsed().as_secs_f64() * 1e3,
                            lp_count: None,
                            objective_final: None,
                        })
                    }
                }
            })();
            TrialRow {
                setting,
                trial_t: t,
                trial_v: v,
                result: result.map_err(|e| e.to_string()),
            }
        })
        .collect()
}

fn summarize(setting: &Setting, knn_k: Option<usize>, rows: &[TrialRow]) -> SettingSummary {
    let ok: Vec<&TrialResult> = rows.iter().filter_map(|r| r.result.as_ref().ok()).collect();
    let col = |f: &dyn Fn(&TrialResult) -> Option<f64>| Stat::of(&ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
    SettingSummary {
        setting: setting.name(knn_k),
        objective: setting.method(knn_k),
        topology: setting.topology,
        n_train: setting.n_train,
        trials: rows.len(),
        failures: rows.len() - ok.len(),
        accuracy: col(&|r| Some(r.accuracy)),
        wall_ms: col(&|r| Some(r.wall_ms)),
        lp_count: col(&|r| r.lp_count.map(|c| c as f64)),
        objective_final: col(&|r| r.objective_final),
    }
}

/// Runs `P_t × P_v` trials for every setting. A failing trial is recorded
/// in its row and does not abort the run.
pub fn run_bench<T: Scalar>(config: &RunConfig, features: &FeatureTable<T>, labels: &GroupLabels) -> Result<BenchReport> {
    config.validate()?;
    if labels.len() != features.n_rows() {
        return Err(Error::DimensionMismatch {
            expected: features.n_rows(),
            got: labels.len(),
        });
    }
    let grid = settings(config);
    let jobs: Vec<(Setting, usize)> = grid.iter().flat_map(|&s| (0..config.p_t).map(move |t| (s, t))).collect();
    let mut rows: Vec<TrialRow> = jobs
        .par_iter()
        .flat_map_iter(|&(s, t)| run_train_set(config, features, labels, s, t))
        .collect();
    rows.sort_by(|a, b| (a.setting, a.trial_t, a.trial_v).cmp(&(b.setting, b.trial_t, b.trial_v)));
    for r in &rows {
        if let Err(e) = &r.result {
            log::warn!("trial {}/{}/{} failed: {e}", r.setting.name(config.knn_k), r.trial_t, r.trial_v);
        }
    }
    let summaries = grid
        .iter()
        .map(|s| {
            let mine: Vec<TrialRow> = rows.iter().filter(|r| r.setting == *s).cloned().collect();
            summarize(s, config.knn_k, &mine)
        })
        .collect();
    Ok(BenchReport {
        knn_k: config.knn_k,
        rows,
        summaries,
    })
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v}")).unwrap_or_default()
}

/// Per-trial rows followed by one `mean` row per setting.
pub fn write_bench_csv(report: &BenchReport, mut out: impl Write) -> Result<()> {
    writeln!(out, "{BENCH_HEADER}")?;
    for r in &report.rows {
        let (acc, wall, lp) = match &r.result {
            Ok(t) => (format!("{}", t.accuracy), format!("{:.3}", t.wall_ms), opt(t.lp_count.map(|c| c as f64))),
            Err(_) => (String::new(), String::new(), String::new()),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.setting.name(report.knn_k),
            r.trial_t,
            r.trial_v,
            r.setting.method(report.knn_k),
            r.setting.n_train,
            acc,
            wall,
            lp
        )?;
    }
    for s in &report.summaries {
        writeln!(
            out,
            "{},mean,,{},{},{},{},{}",
            s.setting,
            s.objective,
            s.n_train,
            opt(s.accuracy.as_ref().map(|a| a.mean)),
            s.wall_ms.as_ref().map(|w| format!("{:.3}", w.mean)).unwrap_or_default(),
            opt(s.lp_count.as_ref().map(|l| l.mean)),
        )?;
    }
    Ok(())
}

pub fn save_bench(report: &BenchReport, csv_path: impl AsRef<Path>, summary_path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(csv_path)?);
    write_bench_csv(report, &mut f)?;
    f.flush()?;
    let s = std::io::BufWriter::new(std::fs::File::create(summary_path)?);
    serde_json::to_writer_pretty(s, &report.summaries)?;
    Ok(())
}
