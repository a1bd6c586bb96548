//! Experiment grids: every (algorithm, cost, M fraction, noise, repeat)
//! cell runs one learner over its own permutation of a dataset and writes a
//! cost-trace CSV; a summary JSON aggregates the repeats.

use crate::costs::CostKind;
use crate::eval::{
    expected_regret, reference_from_log, regret_csv, trace_csv, CostTrace, MeanStdErr,
};
use crate::learners::{Algorithm, LabelOrderChoice, Learner, LearnerConfig, LearnerError};
use crate::online_pca::LearningRate;
use crate::regressor::Engine;
use crate::stream::{
    parse_dataset, parse_label_list, prepare_stream, DataFormat, Dataset, StreamConfig, StreamError,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Environment variable holding the worker-pool size.
pub const WORKERS_ENV: &str = "DPP_WORKERS";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment spec: {0}")]
    Spec(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Data {
        path: PathBuf,
        #[source]
        source: StreamError,
    },
    #[error("cell {cell}: {source}")]
    Learner {
        cell: String,
        #[source]
        source: LearnerError,
    },
    #[error("cell {cell}: {message}")]
    Eval { cell: String, message: String },
}

impl ExperimentError {
    /// Whether the error stems from the request rather than from running it.
    pub fn is_usage(&self) -> bool {
        matches!(self, ExperimentError::Spec(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelOrderKind {
    Native,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub dataset: PathBuf,
    pub format: DataFormat,
    /// Label attribute names, required for ARFF.
    pub label_file: Option<PathBuf>,
    pub algorithms: Vec<Algorithm>,
    pub costs: Vec<CostKind>,
    pub m_fracs: Vec<f64>,
    pub noise_ps: Vec<f64>,
    pub repeats: usize,
    /// Repeat `r` uses seed `seed + r`.
    pub seed: u64,
    pub output: PathBuf,
    pub engine: Engine,
    pub eta: LearningRate,
    pub label_order: LabelOrderKind,
    pub order_seed: u64,
    pub limit: Option<usize>,
    pub normalize_features: bool,
    /// Log regret snapshots every this many steps for PBC learners.
    pub regret_stride: Option<u64>,
    pub skip_condition_check: bool,
}

impl ExperimentSpec {
    pub fn new(dataset: impl Into<PathBuf>, output: impl Into<PathBuf>) -> Self {
        ExperimentSpec {
            dataset: dataset.into(),
            format: DataFormat::SparseLabels,
            label_file: None,
            algorithms: vec![Algorithm::DppPbt],
            costs: vec![CostKind::Hamming],
            m_fracs: vec![0.25],
            noise_ps: vec![0.0],
            repeats: 1,
            seed: 0,
            output: output.into(),
            engine: Engine::default(),
            eta: LearningRate::Default,
            label_order: LabelOrderKind::Native,
            order_seed: 0,
            limit: None,
            normalize_features: true,
            regret_stride: None,
            skip_condition_check: false,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Spec(m));
        if self.repeats == 0 {
            return bad("repeats must be at least 1".into());
        }
        if self.algorithms.is_empty() || self.costs.is_empty() {
            return bad("at least one algorithm and one cost are required".into());
        }
        if self.m_fracs.is_empty() || self.noise_ps.is_empty() {
            return bad("at least one M fraction and one noise level are required".into());
        }
        if let Some(f) = self.m_fracs.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return bad(format!("M fraction {f} outside (0, 1]"));
        }
        if let Some(p) = self.noise_ps.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return bad(format!("noise probability {p} outside [0, 1]"));
        }
        match self.engine {
            Engine::Ridge { lambda } if !(lambda > 0.0 && lambda.is_finite()) => {
                return bad(format!("lambda must be positive, got {lambda}"));
            }
            Engine::Sgd { scale } if !(scale >= 0.0 && scale.is_finite()) => {
                return bad(format!(
                    "gradient step scale must be non-negative, got {scale}"
                ));
            }
            _ => {}
        }
        match self.eta {
            LearningRate::Constant { eta } if !(eta >= 0.0 && eta.is_finite()) => {
                return bad(format!("eta must be non-negative, got {eta}"));
            }
            LearningRate::InvSqrt { scale } if !(scale >= 0.0 && scale.is_finite()) => {
                return bad(format!("eta scale must be non-negative, got {scale}"));
            }
            _ => {}
        }
        if self.format == DataFormat::Arff && self.label_file.is_none() {
            return bad("ARFF datasets need a label file".into());
        }
        if self.limit == Some(0) {
            return bad("limit must be positive".into());
        }
        if self.regret_stride == Some(0) {
            return bad("regret stride must be positive".into());
        }
        Ok(())
    }

    fn label_order_choice(&self) -> LabelOrderChoice {
        match self.label_order {
            LabelOrderKind::Native => LabelOrderChoice::Native,
            LabelOrderKind::Random => LabelOrderChoice::Random {
                seed: self.order_seed,
            },
        }
    }

    /// Every cell in grid order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &algorithm in &self.algorithms {
            for &cost in &self.costs {
                for &m_frac in &self.m_fracs {
                    for &noise_p in &self.noise_ps {
                        for repeat in 0..self.repeats {
                            cells.push(Cell {
                                algorithm,
                                cost,
                                m_frac,
                                noise_p,
                                repeat,
                            });
                        }
                    }
                }
            }
        }
        cells
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cell {
    pub algorithm: Algorithm,
    pub cost: CostKind,
    pub m_frac: f64,
    pub noise_p: f64,
    pub repeat: usize,
}

impl Cell {
    pub fn seed(&self, base: u64) -> u64 {
        base.wrapping_add(self.repeat as u64)
    }

    /// `M = round(m_frac * K)`, at least 1.
    pub fn code_dim(&self, k: usize) -> usize {
        ((self.m_frac * k as f64).round() as usize).clamp(1, k)
    }

    fn group_stem(&self) -> String {
        format!(
            "{}__{}__m{}__p{}",
            self.algorithm, self.cost, self.m_frac, self.noise_p
        )
    }

    pub fn file_stem(&self) -> String {
        format!("{}__r{}", self.group_stem(), self.repeat)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub cell: Cell,
    pub seed: u64,
    pub code_dim: usize,
    pub final_avg_cost: f64,
    pub csv: PathBuf,
    pub regret_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub algorithm: Algorithm,
    pub cost: CostKind,
    pub m_frac: f64,
    pub noise_p: f64,
    pub final_avg_cost: MeanStdErr,
    pub per_repeat: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub spec: ExperimentSpec,
    pub num_features: usize,
    pub num_labels: usize,
    pub num_instances: usize,
    pub groups: Vec<GroupSummary>,
    pub cells: Vec<CellResult>,
}

/// Reads and parses the spec's dataset.
pub fn load_dataset(spec: &ExperimentSpec) -> Result<Dataset, ExperimentError> {
    let read = |p: &Path| {
        fs::read_to_string(p).map_err(|source| ExperimentError::Io {
            path: p.to_path_buf(),
            source,
        })
    };
    let text = read(&spec.dataset)?;
    let labels = match &spec.label_file {
        Some(p) => Some(parse_label_list(&read(p)?)),
        None => None,
    };
    let ds = parse_dataset(&text, spec.format, labels.as_deref()).map_err(|source| {
        ExperimentError::Data {
            path: spec.dataset.clone(),
            source,
        }
    })?;
    ds.validate().map_err(|source| ExperimentError::Data {
        path: spec.dataset.clone(),
        source,
    })?;
    if ds.is_empty() {
        return Err(ExperimentError::Data {
            path: spec.dataset.clone(),
            source: StreamError::Config("dataset has no instances".into()),
        });
    }
    Ok(ds)
}

/// Writes `contents` to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), ExperimentError> {
    let io_err = |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    };
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.{}.tmp", std::process::id()));
    fs::write(&tmp, contents).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io_err(e)
    })
}

fn header(
    spec: &ExperimentSpec,
    ds: &Dataset,
    cell: &Cell,
    seed: u64,
    m: usize,
    t: usize,
) -> Vec<(String, String)> {
    let json = |v: &dyn erased::Json| v.to_json();
    vec![
        ("dataset".into(), spec.dataset.display().to_string()),
        ("format".into(), json(&spec.format)),
        ("algorithm".into(), cell.algorithm.to_string()),
        ("cost".into(), cell.cost.to_string()),
        ("m_frac".into(), cell.m_frac.to_string()),
        ("code_dim".into(), m.to_string()),
        ("num_labels".into(), ds.num_labels.to_string()),
        ("num_features".into(), ds.num_features.to_string()),
        ("iterations".into(), t.to_string()),
        ("noise_p".into(), cell.noise_p.to_string()),
        ("repeat".into(), cell.repeat.to_string()),
        ("seed".into(), seed.to_string()),
        ("engine".into(), json(&spec.engine)),
        ("eta".into(), json(&spec.eta)),
        ("label_order".into(), json(&spec.label_order_choice())),
        ("limit".into(), json(&spec.limit)),
        (
            "normalize_features".into(),
            spec.normalize_features.to_string(),
        ),
        (
            "skip_condition_check".into(),
            spec.skip_condition_check.to_string(),
        ),
        ("version".into(), env!("CARGO_PKG_VERSION").into()),
    ]
}

mod erased {
    pub trait Json {
        fn to_json(&self) -> String;
    }

    impl<T: serde::Serialize> Json for T {
        fn to_json(&self) -> String {
            serde_json::to_string(self).expect("value serializes")
        }
    }
}

/// Runs one cell and writes its CSV files.
pub fn run_cell(
    spec: &ExperimentSpec,
    ds: &Dataset,
    cell: &Cell,
) -> Result<CellResult, ExperimentError> {
    let seed = cell.seed(spec.seed);
    let name = cell.file_stem();
    let stream = prepare_stream(
        ds,
        &StreamConfig {
            seed,
            noise_p: cell.noise_p,
            limit: spec.limit,
            normalize_features: spec.normalize_features,
        },
    )
    .map_err(|source| ExperimentError::Data {
        path: spec.dataset.clone(),
        source,
    })?;

    let m = cell.code_dim(ds.num_labels);
    let config = LearnerConfig {
        algorithm: cell.algorithm,
        code_dim: m,
        engine: spec.engine,
        eta: spec.eta,
        cost: cell.cost,
        label_order: spec.label_order_choice(),
        seed,
        skip_condition_check: spec.skip_condition_check,
    };
    let learner_err = |source| ExperimentError::Learner {
        cell: name.clone(),
        source,
    };
    let mut learner = Learner::new(config, ds.num_features, ds.num_labels).map_err(learner_err)?;
    if let Some(stride) = spec.regret_stride {
        learner = learner.with_regret_log(stride);
    }

    let mut trace = CostTrace::new();
    for inst in &stream {
        let record = learner
            .step(&inst.features, &inst.labels)
            .map_err(learner_err)?;
        trace
            .track(record.incurred_cost)
            .map_err(|e| ExperimentError::Eval {
                cell: name.clone(),
                message: e.to_string(),
            })?;
    }

    let head = header(spec, ds, cell, seed, m, stream.len());
    let csv = spec.output.join(format!("{name}.csv"));
    write_atomic(&csv, &trace_csv(&head, &trace))?;

    let log = learner.take_regret_log();
    let regret = if log.is_empty() {
        None
    } else {
        let eval_err = |e: crate::eval::EvalError| ExperimentError::Eval {
            cell: name.clone(),
            message: e.to_string(),
        };
        let reference = reference_from_log(&log, m).map_err(eval_err)?;
        let report = expected_regret(&log, &reference).map_err(eval_err)?;
        let path = spec.output.join(format!("{name}.regret.csv"));
        write_atomic(&path, &regret_csv(&head, &report))?;
        Some(path)
    };

    Ok(CellResult {
        cell: *cell,
        seed,
        code_dim: m,
        final_avg_cost: trace.final_average().unwrap_or(0.0),
        csv,
        regret_csv: regret,
    })
}

fn worker_pool() -> Result<rayon::ThreadPool, ExperimentError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| ExperimentError::Spec(format!("{WORKERS_ENV}='{v}' is not a count")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| ExperimentError::Spec(format!("worker pool: {e}")))
}

/// Runs the whole grid and writes `summary.json` next to the cell CSVs.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunSummary, ExperimentError> {
    spec.validate()?;
    let ds = load_dataset(spec)?;
    fs::create_dir_all(&spec.output).map_err(|source| ExperimentError::Io {
        path: spec.output.clone(),
        source,
    })?;

    let cells = spec.cells();
    let pool = worker_pool()?;
    let results: Vec<CellResult> = pool.install(|| {
        cells
            .par_iter()
            .map(|c| run_cell(spec, &ds, c))
            .collect::<Result<_, _>>()
    })?;

    let mut groups: Vec<GroupSummary> = Vec::new();
    for chunk in results.chunks(spec.repeats) {
        let c = chunk[0].cell;
        let per_repeat: Vec<f64> = chunk.iter().map(|r| r.final_avg_cost).collect();
        groups.push(GroupSummary {
            algorithm: c.algorithm,
            cost: c.cost,
            m_frac: c.m_frac,
            noise_p: c.noise_p,
            final_avg_cost: MeanStdErr::from_samples(&per_repeat),
            per_repeat,
        });
    }

    let summary = RunSummary {
        spec: spec.clone(),
        num_features: ds.num_features,
        num_labels: ds.num_labels,
        num_instances: ds.len(),
        groups,
        cells: results,
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_atomic(&spec.output.join("summary.json"), &format!("{json}\n"))?;
    Ok(summary)
}
