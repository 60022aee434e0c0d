//! Experiment pipeline behind the command-line driver: configuration,
//! per-replication runs of the local and global calibrators on a shared
//! model, decay diagnostics, and CSV output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use log::{info, warn};
use rand::RngCore;
use rayon::prelude::*;

use crate::conformal::{calibrate_global, calibrate_local, predict_intervals, PredictionInterval};
use crate::data::{load_csv, split, DataSplit, Dataset, SplitSpec};
use crate::diagnostics::{
    average_curves, decay_curves, fit_exponential, quantile_reference_points, DecayCurve, DecayFit,
};
use crate::error::{Error, Result};
use crate::gbm::{fit, BoostConfig, BoostedEnsemble};
use crate::metrics::{relative_metrics, EvaluationReport};
use crate::partition::{compute_tree_weights, PartitionModel, WeightScheme};
use crate::rng::{fnv1a64, RngStream};
use crate::synth::{oracle_interval, sample, segment_label, DgpSpec, Segment, Setting};

/// Probabilities of the default diagnostic reference points.
pub const DEFAULT_REFERENCE_PROBS: [f64; 4] = [0.2, 0.4, 0.6, 0.8];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    RunCsv,
    Diagnose,
    PartitionDump,
    /// Writes one synthetic sample to `data.csv`.
    Generate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::RunCsv => "run-csv",
            Command::Diagnose => "diagnose",
            Command::PartitionDump => "partition-dump",
            Command::Generate => "generate",
        }
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "simulate" => Command::Simulate,
            "run-csv" => Command::RunCsv,
            "diagnose" => Command::Diagnose,
            "partition-dump" => Command::PartitionDump,
            "generate" => Command::Generate,
            other => return Err(Error::Config(format!("unknown command `{other}`"))),
        })
    }
}

pub fn parse_weight_scheme(s: &str) -> Result<WeightScheme> {
    let s = s.trim();
    match s {
        "variance" => Ok(WeightScheme::Variance),
        "uniform" => Ok(WeightScheme::Uniform),
        _ => {
            let rho = s
                .strip_prefix("exp:")
                .and_then(|r| r.parse::<f64>().ok())
                .ok_or_else(|| Error::Config(format!("unknown weight scheme `{s}`")))?;
            if !(rho > 0.0 && rho < 1.0) {
                return Err(Error::Config(format!(
                    "exp:RHO needs 0 < RHO < 1, got {rho}"
                )));
            }
            Ok(WeightScheme::Exponential(rho))
        }
    }
}

fn weight_scheme_name(w: WeightScheme) -> String {
    match w {
        WeightScheme::Variance => "variance".into(),
        WeightScheme::Uniform => "uniform".into(),
        WeightScheme::Exponential(rho) => format!("exp:{rho}"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: Command,
    pub dgp: Option<Setting>,
    pub csv: Option<PathBuf>,
    pub target: Option<String>,
    /// Sample size per replication for synthetic data.
    pub n: usize,
    pub alpha: f64,
    pub boost: BoostConfig,
    pub m_part: usize,
    pub m_merge: usize,
    pub weights: WeightScheme,
    pub replications: usize,
    pub seed: u64,
    pub out: PathBuf,
    /// Prefix depth of the decay diagnostic.
    pub k: usize,
    /// Explicit one-dimensional reference points; empty means quantile-spaced.
    pub ref_points: Vec<f64>,
    pub split: SplitSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            command: Command::Simulate,
            dgp: None,
            csv: None,
            target: None,
            n: 3000,
            alpha: 0.1,
            boost: BoostConfig::default(),
            m_part: 200,
            m_merge: 200,
            weights: WeightScheme::Variance,
            replications: 50,
            seed: 0,
            out: PathBuf::from("out"),
            k: crate::diagnostics::DEFAULT_DEPTH,
            ref_points: Vec::new(),
            split: SplitSpec::default(),
        }
    }
}

fn parse_num<N: FromStr>(key: &str, value: &str) -> Result<N> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

impl ExperimentConfig {
    /// Sets one option by name. Names match the long command-line flags,
    /// with `_` accepted in place of `-`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('_', "-");
        let v = value.trim();
        match key.as_str() {
            "command" => self.command = v.parse()?,
            "dgp" => self.dgp = Some(v.parse()?),
            "csv" => self.csv = Some(PathBuf::from(v)),
            "target" => self.target = Some(v.to_string()),
            "n" => self.n = parse_num(&key, v)?,
            "alpha" => self.alpha = parse_num(&key, v)?,
            "reps" | "replications" => self.replications = parse_num(&key, v)?,
            "seed" => self.seed = parse_num(&key, v)?,
            "m-part" => self.m_part = parse_num(&key, v)?,
            "m-merge" => self.m_merge = parse_num(&key, v)?,
            "weights" => self.weights = parse_weight_scheme(v)?,
            "trees" | "n-estimators" => self.boost.n_estimators = parse_num(&key, v)?,
            "lr" | "learning-rate" => self.boost.learning_rate = parse_num(&key, v)?,
            "depth" | "max-depth" => self.boost.max_depth = parse_num(&key, v)?,
            "min-leaf" => self.boost.min_samples_leaf = parse_num(&key, v)?,
            "subsample" => self.boost.subsample = parse_num(&key, v)?,
            "validation-fraction" => self.boost.validation_fraction = parse_num(&key, v)?,
            "n-iter-no-change" => self.boost.n_iter_no_change = parse_num(&key, v)?,
            "out" => self.out = PathBuf::from(v),
            "k" => self.k = parse_num(&key, v)?,
            "ref-points" => {
                self.ref_points = v
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| parse_num(&key, s))
                    .collect::<Result<_>>()?
            }
            "train-frac" => self.split.train_frac = parse_num(&key, v)?,
            "cal-frac" => self.split.cal_frac = parse_num(&key, v)?,
            "test-frac" => self.split.test_frac = parse_num(&key, v)?,
            "cal-transfer" => self.split.native_cal_transfer = parse_num(&key, v)?,
            _ => return Err(Error::Config(format!("unknown option `{key}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_file_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.m_part == 0 || self.m_merge == 0 {
            return Err(Error::Config("m-part and m-merge must be positive".into()));
        }
        if self.n < 10 {
            return Err(Error::Config("n must be at least 10".into()));
        }
        self.boost.validate()?;
        self.split.validate()?;
        if let WeightScheme::Exponential(rho) = self.weights {
            if !(rho > 0.0 && rho < 1.0) {
                return Err(Error::Config("exp:RHO needs 0 < RHO < 1".into()));
            }
        }
        match self.command {
            Command::Simulate | Command::Generate if self.dgp.is_none() => Err(Error::Config(
                format!("{} needs --dgp", self.command.name()),
            )),
            Command::RunCsv if self.csv.is_none() => {
                Err(Error::Config("run-csv needs --csv".into()))
            }
            Command::Diagnose | Command::PartitionDump
                if self.dgp.is_none() && self.csv.is_none() =>
            {
                Err(Error::Config(format!(
                    "{} needs --dgp or --csv",
                    self.command.name()
                )))
            }
            _ => Ok(()),
        }
    }

    /// Every setting that influences results, in a fixed order.
    pub fn canonical(&self) -> String {
        let b = &self.boost;
        let s = &self.split;
        let refs: Vec<String> = self.ref_points.iter().map(|v| v.to_string()).collect();
        format!(
            "command={};dgp={};csv={};target={};n={};alpha={};trees={};lr={};depth={};min_leaf={};\
             subsample={};validation_fraction={};n_iter_no_change={};m_part={};m_merge={};weights={};\
             reps={};seed={};k={};ref_points={};split={},{},{},{}",
            self.command.name(),
            self.dgp.map(|d| d.to_string()).unwrap_or_default(),
            self.csv.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            self.target.clone().unwrap_or_default(),
            self.n,
            self.alpha,
            b.n_estimators,
            b.learning_rate,
            b.max_depth,
            b.min_samples_leaf,
            b.subsample,
            b.validation_fraction,
            b.n_iter_no_change,
            self.m_part,
            self.m_merge,
            weight_scheme_name(self.weights),
            self.replications,
            self.seed,
            self.k,
            refs.join(","),
            s.train_frac,
            s.cal_frac,
            s.test_frac,
            s.native_cal_transfer,
        )
    }

    pub fn config_hash(&self) -> String {
        format!("{:016x}", fnv1a64(self.canonical().as_bytes()))
    }

    /// Seed of replication `rep`, drawn from the `"rep:{rep}"` stream.
    pub fn replication_seed(&self, rep: usize) -> u64 {
        RngStream::new(self.seed)
            .derive(&format!("rep:{rep}"))
            .generator()
            .next_u64()
    }
}

/// Where replication data comes from.
#[derive(Debug, Clone)]
pub enum DataSource {
    Synthetic(Setting),
    Table(Dataset<f64>),
}

impl DataSource {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        match (&cfg.csv, cfg.dgp) {
            (Some(path), _)
                if cfg.command != Command::Simulate && cfg.command != Command::Generate =>
            {
                Ok(DataSource::Table(load_csv(path, cfg.target.as_deref())?))
            }
            (_, Some(setting)) => Ok(DataSource::Synthetic(setting)),
            _ => Err(Error::Config("no data source configured".into())),
        }
    }

    fn replication_split(&self, cfg: &ExperimentConfig, seed: u64) -> Result<DataSplit<f64>> {
        let spec = SplitSpec { seed, ..cfg.split };
        match self {
            DataSource::Synthetic(setting) => {
                let data = sample(&DgpSpec {
                    setting: *setting,
                    n: cfg.n,
                    seed,
                })?;
                split(&data, &spec, true)
            }
            DataSource::Table(data) => split(data, &spec, true),
        }
    }
}

/// Per-method metrics of one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodResult {
    pub method: &'static str,
    pub report: EvaluationReport,
    pub n_regions_pre: Option<usize>,
    pub n_regions_post: Option<usize>,
    pub n_merged: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentResult {
    pub method: &'static str,
    pub segment: Segment,
    pub n: usize,
    pub coverage: f64,
    pub mean_length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationResult {
    pub replication: usize,
    pub n_calibration: usize,
    /// Calibration rows held by the merged partition's regions.
    pub n_partitioned: usize,
    pub methods: Vec<MethodResult>,
    pub segments: Vec<SegmentResult>,
}

impl ReplicationResult {
    pub fn method(&self, name: &str) -> Option<&MethodResult> {
        self.methods.iter().find(|m| m.method == name)
    }
}

pub const METHOD_LOBOOST: &str = "loboost";
pub const METHOD_ICP: &str = "icp";
pub const METHOD_ORACLE: &str = "oracle";

/// Fits, partitions and calibrates on one split and evaluates on its test
/// block. Both calibrators share the fitted ensemble.
pub fn run_replication(
    cfg: &ExperimentConfig,
    source: &DataSource,
    rep: usize,
) -> Result<ReplicationResult> {
    let seed = cfg.replication_seed(rep);
    let parts = source.replication_split(cfg, seed)?;
    let boost = BoostConfig {
        seed,
        ..cfg.boost.clone()
    };
    let model = fit(&parts.train, &boost)?;
    let y = parts.test.targets();

    let started = Instant::now();
    let paths = model.leaf_paths(&parts.cal)?;
    let weights = compute_tree_weights(&model, &parts.cal, cfg.weights)?;
    let partition = PartitionModel::build(&paths, cfg.m_part)?.merge(cfg.m_merge, &weights)?;
    let local = calibrate_local(&model, &partition, &parts.cal, cfg.alpha)?;
    let local_secs = started.elapsed().as_secs_f64();

    let started = Instant::now();
    let global = calibrate_global(&model, &parts.cal, cfg.alpha)?;
    let global_secs = started.elapsed().as_secs_f64();

    let local_iv = predict_intervals(&local, &model, &parts.test)?;
    let global_iv = predict_intervals(&global, &model, &parts.test)?;

    let mut methods = vec![
        MethodResult {
            method: METHOD_LOBOOST,
            report: EvaluationReport::evaluate(&local_iv, y, cfg.alpha, local_secs)?,
            n_regions_pre: Some(partition.num_base_regions()),
            n_regions_post: Some(partition.num_regions()),
            n_merged: Some(partition.num_merged()),
        },
        MethodResult {
            method: METHOD_ICP,
            report: EvaluationReport::evaluate(&global_iv, y, cfg.alpha, global_secs)?,
            n_regions_pre: Some(1),
            n_regions_post: Some(1),
            n_merged: Some(0),
        },
    ];
    let mut segments = Vec::new();

    if let DataSource::Synthetic(setting) = source {
        let xs = parts.test.column(0);
        let oracle_iv = xs
            .iter()
            .map(|&x| oracle_interval(*setting, x, cfg.alpha))
            .collect::<Result<Vec<_>>>()?;
        let labels = xs
            .iter()
            .map(|&x| segment_label(*setting, x))
            .collect::<Result<Vec<_>>>()?;
        methods.push(MethodResult {
            method: METHOD_ORACLE,
            report: EvaluationReport::evaluate(&oracle_iv, y, cfg.alpha, 0.0)?,
            n_regions_pre: None,
            n_regions_post: None,
            n_merged: None,
        });
        for (method, ivs) in [
            (METHOD_LOBOOST, &local_iv),
            (METHOD_ICP, &global_iv),
            (METHOD_ORACLE, &oracle_iv),
        ] {
            for &segment in setting.segments() {
                segments.push(segment_summary(method, segment, ivs, y, &labels));
            }
        }
        for m in &mut methods {
            let ivs = match m.method {
                METHOD_LOBOOST => &local_iv,
                METHOD_ICP => &global_iv,
                _ => &oracle_iv,
            };
            m.report = m.report.clone().with_groups(ivs, y, &labels)?;
        }
    }
    Ok(ReplicationResult {
        replication: rep,
        n_calibration: parts.cal.n_rows(),
        n_partitioned: partition.regions().iter().map(|r| r.len()).sum(),
        methods,
        segments,
    })
}

fn segment_summary(
    method: &'static str,
    segment: Segment,
    ivs: &[PredictionInterval<f64>],
    y: &[f64],
    labels: &[Segment],
) -> SegmentResult {
    let (mut n, mut hit, mut len) = (0usize, 0usize, 0.0);
    for ((iv, &yi), &l) in ivs.iter().zip(y).zip(labels) {
        if l == segment {
            n += 1;
            hit += usize::from(iv.contains(yi));
            len += iv.length();
        }
    }
    let (coverage, mean_length) = if n == 0 {
        (f64::NAN, f64::NAN)
    } else {
        (hit as f64 / n as f64, len / n as f64)
    };
    SegmentResult {
        method,
        segment,
        n,
        coverage,
        mean_length,
    }
}

/// Runs every replication in parallel. Results come back in replication
/// order; a failed replication is reported in place.
pub fn run_replications(
    cfg: &ExperimentConfig,
    source: &DataSource,
) -> Vec<Result<ReplicationResult>> {
    (0..cfg.replications)
        .into_par_iter()
        .map(|rep| run_replication(cfg, source, rep))
        .collect()
}

/// Outcome of a command: how many units of work failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunStatus {
    pub attempted: usize,
    pub failed: usize,
}

impl RunStatus {
    pub fn exit_code(&self) -> i32 {
        if self.failed == 0 {
            0
        } else {
            1
        }
    }
}

fn create_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn writer(dir: &Path, name: &str) -> Result<csv::Writer<fs::File>> {
    let path = dir.join(name);
    let file = fs::File::create(&path).map_err(|source| Error::Io { path, source })?;
    Ok(csv::Writer::from_writer(file))
}

fn opt(v: Option<usize>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Columns identifying a run on every output row.
fn id_columns(cfg: &ExperimentConfig, hash: &str, rep: Option<usize>) -> Vec<String> {
    vec![
        cfg.command.name().to_string(),
        cfg.seed.to_string(),
        rep.map(|r| r.to_string()).unwrap_or_default(),
        hash.to_string(),
    ]
}

const ID_HEADER: [&str; 4] = ["command", "seed", "replication", "config_hash"];

fn header(extra: &[&str]) -> Vec<String> {
    ID_HEADER
        .iter()
        .chain(extra)
        .map(|s| s.to_string())
        .collect()
}

/// `simulate` and `run-csv`: writes `runs.csv`, `segments.csv` (synthetic
/// data only), `timing.csv` and `summary.csv`.
pub fn run_evaluation(cfg: &ExperimentConfig) -> Result<RunStatus> {
    cfg.validate()?;
    let source = DataSource::from_config(cfg)?;
    create_out_dir(&cfg.out)?;
    let results = run_replications(cfg, &source);
    let hash = cfg.config_hash();

    let mut ok = Vec::new();
    let mut failed = 0;
    for (rep, r) in results.into_iter().enumerate() {
        match r {
            Ok(r) => ok.push(r),
            Err(e) => {
                warn!("replication {rep} failed: {e}");
                failed += 1;
            }
        }
    }
    write_runs(cfg, &hash, &ok)?;
    write_timing(cfg, &hash, &ok)?;
    if matches!(source, DataSource::Synthetic(_)) {
        write_segments(cfg, &hash, &ok)?;
    }
    write_summary(cfg, &hash, &ok)?;
    info!(
        "{} of {} replications succeeded",
        ok.len(),
        cfg.replications
    );
    Ok(RunStatus {
        attempted: cfg.replications,
        failed,
    })
}

fn write_runs(cfg: &ExperimentConfig, hash: &str, results: &[ReplicationResult]) -> Result<()> {
    let mut w = writer(&cfg.out, "runs.csv")?;
    w.write_record(header(&[
        "method",
        "amc",
        "il",
        "smis",
        "mse",
        "n_regions_pre",
        "n_regions_post",
        "n_merged",
        "n_infinite",
    ]))?;
    for r in results {
        for m in &r.methods {
            let mut row = id_columns(cfg, hash, Some(r.replication));
            row.extend([
                m.method.to_string(),
                m.report.amc.to_string(),
                m.report.mean_interval_length.to_string(),
                m.report.smis.to_string(),
                m.report.mse.to_string(),
                opt(m.n_regions_pre),
                opt(m.n_regions_post),
                opt(m.n_merged),
                m.report.n_infinite.to_string(),
            ]);
            w.write_record(row)?;
        }
    }
    w.flush().map_err(|source| Error::Io {
        path: cfg.out.join("runs.csv"),
        source,
    })
}

fn write_timing(cfg: &ExperimentConfig, hash: &str, results: &[ReplicationResult]) -> Result<()> {
    let mut w = writer(&cfg.out, "timing.csv")?;
    w.write_record(header(&["method", "calibration_seconds"]))?;
    for r in results {
        for m in r.methods.iter().filter(|m| m.method != METHOD_ORACLE) {
            let mut row = id_columns(cfg, hash, Some(r.replication));
            row.extend([
                m.method.to_string(),
                m.report.calibration_seconds.to_string(),
            ]);
            w.write_record(row)?;
        }
    }
    w.flush().map_err(|source| Error::Io {
        path: cfg.out.join("timing.csv"),
        source,
    })
}

fn write_segments(cfg: &ExperimentConfig, hash: &str, results: &[ReplicationResult]) -> Result<()> {
    let mut w = writer(&cfg.out, "segments.csv")?;
    w.write_record(header(&[
        "method",
        "segment",
        "n",
        "coverage",
        "mean_length",
    ]))?;
    for r in results {
        for s in &r.segments {
            let mut row = id_columns(cfg, hash, Some(r.replication));
            row.extend([
                s.method.to_string(),
                s.segment.to_string(),
                s.n.to_string(),
                s.coverage.to_string(),
                s.mean_length.to_string(),
            ]);
            w.write_record(row)?;
        }
    }
    w.flush().map_err(|source| Error::Io {
        path: cfg.out.join("segments.csv"),
        source,
    })
}

/// Mean and 95% normal-approximation half-width `1.96 * sd / sqrt(n)`.
pub fn mean_half_width(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, 1.96 * (var / n as f64).sqrt())
}

/// Per-method metric means across replications, keyed by (method, metric).
pub fn summarize(results: &[ReplicationResult]) -> BTreeMap<(String, String), Vec<f64>> {
    let mut acc: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    let mut push = |method: &str, metric: String, v: f64| {
        acc.entry((method.to_string(), metric)).or_default().push(v);
    };
    for r in results {
        for m in &r.methods {
            push(m.method, "amc".into(), m.report.amc);
            push(m.method, "il".into(), m.report.mean_interval_length);
            push(m.method, "smis".into(), m.report.smis);
            push(m.method, "mse".into(), m.report.mse);
            push(m.method, "n_infinite".into(), m.report.n_infinite as f64);
            if m.method != METHOD_ORACLE {
                push(
                    m.method,
                    "calibration_seconds".into(),
                    m.report.calibration_seconds,
                );
            }
            if let (Some(pre), Some(post), Some(merged)) =
                (m.n_regions_pre, m.n_regions_post, m.n_merged)
            {
                push(m.method, "n_regions_pre".into(), pre as f64);
                push(m.method, "n_regions_post".into(), post as f64);
                push(m.method, "n_merged".into(), merged as f64);
            }
        }
        for s in r.segments.iter().filter(|s| s.n > 0) {
            push(s.method, format!("coverage_{}", s.segment), s.coverage);
        }
        if let (Some(ours), Some(icp)) = (r.method(METHOD_LOBOOST), r.method(METHOD_ICP)) {
            if let Ok(rel) = relative_metrics(&ours.report, &icp.report) {
                push(
                    "loboost_vs_icp",
                    "smis_efficiency".into(),
                    rel.smis_efficiency,
                );
            }
        }
    }
    acc
}

fn write_summary(cfg: &ExperimentConfig, hash: &str, results: &[ReplicationResult]) -> Result<()> {
    let mut w = writer(&cfg.out, "summary.csv")?;
    w.write_record(header(&[
        "method",
        "metric",
        "mean",
        "half_width_95",
        "n_reps",
    ]))?;
    for ((method, metric), values) in summarize(results) {
        let (mean, hw) = mean_half_width(&values);
        let mut row = id_columns(cfg, hash, None);
        row.extend([
            method,
            metric,
            mean.to_string(),
            hw.to_string(),
            values.len().to_string(),
        ]);
        w.write_record(row)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: cfg.out.join("summary.csv"),
        source,
    })
}

/// Fits the model of replication `rep` and returns it with its split.
fn replication_model(
    cfg: &ExperimentConfig,
    source: &DataSource,
    rep: usize,
) -> Result<(BoostedEnsemble<f64>, DataSplit<f64>)> {
    let seed = cfg.replication_seed(rep);
    let parts = source.replication_split(cfg, seed)?;
    let model = fit(
        &parts.train,
        &BoostConfig {
            seed,
            ..cfg.boost.clone()
        },
    )?;
    Ok((model, parts))
}

/// Decay curves and fits for each reference point. Reference points come
/// from the configuration or from the test block of replication 0, and stay
/// fixed while each replication refits the model; the curves of all
/// replications are averaged before fitting.
pub fn run_diagnostics(cfg: &ExperimentConfig) -> Result<Vec<Result<(DecayCurve, DecayFit)>>> {
    cfg.validate()?;
    let source = DataSource::from_config(cfg)?;
    let points = match reference_points_for(cfg, &source)? {
        Some(p) => p,
        None => {
            let parts = source.replication_split(cfg, cfg.replication_seed(0))?;
            quantile_reference_points(&parts.test, 0, &DEFAULT_REFERENCE_PROBS)?
        }
    };
    let per_rep = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| {
            let (model, parts) = replication_model(cfg, &source, rep)?;
            if cfg.k > model.n_trees() {
                return Err(Error::Config(format!(
                    "k = {} exceeds the {} fitted trees",
                    cfg.k,
                    model.n_trees()
                )));
            }
            Ok(decay_curves(&model, &parts.test, &points, cfg.k))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok((0..points.len())
        .map(|i| {
            let curves: Vec<DecayCurve> = per_rep
                .iter()
                .enumerate()
                .filter_map(|(rep, curves)| match &curves[i] {
                    Ok(c) => Some(c.clone()),
                    Err(e) => {
                        warn!("reference point {i}, replication {rep}: {e}");
                        None
                    }
                })
                .collect();
            let curve = average_curves(&curves)?;
            let fit = fit_exponential(&curve)?;
            Ok((curve, fit))
        })
        .collect())
}

fn reference_points_for(
    cfg: &ExperimentConfig,
    source: &DataSource,
) -> Result<Option<Vec<Vec<f64>>>> {
    if cfg.ref_points.is_empty() {
        return Ok(None);
    }
    match source {
        DataSource::Synthetic(setting) => {
            for &x in &cfg.ref_points {
                if !setting.in_support(x) {
                    return Err(Error::Support { x });
                }
            }
        }
        DataSource::Table(d) if d.n_features() != 1 => {
            return Err(Error::Config(
                "explicit reference points need a single feature".into(),
            ));
        }
        DataSource::Table(_) => {}
    }
    Ok(Some(cfg.ref_points.iter().map(|&x| vec![x]).collect()))
}

/// `diagnose`: one `decay_{i}.csv` per reference point plus `decay_fits.csv`.
/// Rows carry an empty replication id since curves pool all replications.
pub fn run_diagnose(cfg: &ExperimentConfig) -> Result<RunStatus> {
    let fits = run_diagnostics(cfg)?;
    create_out_dir(&cfg.out)?;
    let hash = cfg.config_hash();
    let mut summary = writer(&cfg.out, "decay_fits.csv")?;
    summary.write_record(header(&[
        "point",
        "x",
        "k",
        "n_region",
        "n_curves",
        "c",
        "rho",
        "r_squared",
        "n_points_used",
        "n_zero_excluded",
        "decaying",
    ]))?;
    let mut failed = 0;
    for (i, r) in fits.iter().enumerate() {
        let (curve, fit) = match r {
            Ok(v) => v,
            Err(e) => {
                warn!("reference point {i}: {e}");
                failed += 1;
                continue;
            }
        };
        let xs: Vec<String> = curve.reference_x.iter().map(|v| v.to_string()).collect();
        let mut row = id_columns(cfg, &hash, None);
        row.extend([
            i.to_string(),
            xs.join(" "),
            curve.k.to_string(),
            curve.n_region.to_string(),
            curve.n_curves.to_string(),
            fit.c.to_string(),
            fit.rho.to_string(),
            fit.r_squared.to_string(),
            fit.n_points_used.to_string(),
            fit.n_zero_excluded.to_string(),
            fit.is_decaying().to_string(),
        ]);
        summary.write_record(row)?;

        let mut w = writer(&cfg.out, &format!("decay_{i}.csv"))?;
        w.write_record(header(&["point", "t", "v", "fitted"]))?;
        for (&t, &v) in curve.t_values.iter().zip(&curve.v_values) {
            let mut row = id_columns(cfg, &hash, None);
            row.extend([
                i.to_string(),
                t.to_string(),
                v.to_string(),
                fit.fitted(t).to_string(),
            ]);
            w.write_record(row)?;
        }
        w.flush().map_err(|source| Error::Io {
            path: cfg.out.clone(),
            source,
        })?;
    }
    summary.flush().map_err(|source| Error::Io {
        path: cfg.out.clone(),
        source,
    })?;
    Ok(RunStatus {
        attempted: fits.len(),
        failed,
    })
}

/// `partition-dump`: the merged partition of replication 0 as `partition.txt`.
pub fn run_partition_dump(cfg: &ExperimentConfig) -> Result<RunStatus> {
    cfg.validate()?;
    let source = DataSource::from_config(cfg)?;
    let (model, parts) = replication_model(cfg, &source, 0)?;
    let paths = model.leaf_paths(&parts.cal)?;
    let weights = compute_tree_weights(&model, &parts.cal, cfg.weights)?;
    let partition = PartitionModel::build(&paths, cfg.m_part)?.merge(cfg.m_merge, &weights)?;
    create_out_dir(&cfg.out)?;
    let mut text = String::new();
    let _ = writeln!(
        text,
        "# command={} seed={} replication=0 config_hash={}",
        cfg.command.name(),
        cfg.seed,
        cfg.config_hash()
    );
    text.push_str(&partition.dump());
    let path = cfg.out.join("partition.txt");
    fs::write(&path, text).map_err(|source| Error::Io { path, source })?;
    Ok(RunStatus {
        attempted: 1,
        failed: 0,
    })
}

/// `generate`: `cfg.n` draws of the configured setting as `data.csv`.
pub fn run_generate(cfg: &ExperimentConfig) -> Result<RunStatus> {
    cfg.validate()?;
    let setting = cfg
        .dgp
        .ok_or_else(|| Error::Config("generate needs --dgp".into()))?;
    let data: Dataset<f64> = sample(&DgpSpec {
        setting,
        n: cfg.n,
        seed: cfg.seed,
    })?;
    create_out_dir(&cfg.out)?;
    let path = cfg.out.join("data.csv");
    let file = fs::File::create(&path).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    data.write_csv(file, "y")?;
    Ok(RunStatus {
        attempted: 1,
        failed: 0,
    })
}

/// Dispatches on `cfg.command`.
pub fn run(cfg: &ExperimentConfig) -> Result<RunStatus> {
    match cfg.command {
        Command::Simulate | Command::RunCsv => run_evaluation(cfg),
        Command::Diagnose => run_diagnose(cfg),
        Command::PartitionDump => run_partition_dump(cfg),
        Command::Generate => run_generate(cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_and_overrides() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_file_text(
            "# comment\ndgp = setting2\nalpha=0.2 # trailing\n\nm_part = 50\nweights = exp:0.9\n",
        )
        .unwrap();
        cfg.set("alpha", "0.05").unwrap();
        assert_eq!(cfg.dgp, Some(Setting::GapSupport2));
        assert_eq!(cfg.alpha, 0.05);
        assert_eq!(cfg.m_part, 50);
        assert_eq!(cfg.weights, WeightScheme::Exponential(0.9));
        assert!(cfg.apply_file_text("nonsense").is_err());
        assert!(cfg.set("bogus", "1").is_err());
        assert!(cfg.set("alpha", "x").is_err());
    }

    #[test]
    fn validation() {
        let mut cfg = ExperimentConfig {
            dgp: Some(Setting::Heteroscedastic1),
            ..Default::default()
        };
        assert!(cfg.validate().is_ok());
        cfg.alpha = 0.0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.alpha = 0.1;
        cfg.replications = 0;
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig {
            command: Command::RunCsv,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        assert!(parse_weight_scheme("exp:1.5").is_err());
        assert!(parse_weight_scheme("exp:").is_err());
    }

    #[test]
    fn hash_tracks_settings_but_not_output_dir() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig {
            out: PathBuf::from("elsewhere"),
            ..a.clone()
        };
        let c = ExperimentConfig {
            seed: 1,
            ..a.clone()
        };
        assert_eq!(a.config_hash(), b.config_hash());
        assert_ne!(a.config_hash(), c.config_hash());
        assert_eq!(a.config_hash().len(), 16);
    }

    #[test]
    fn half_width() {
        assert_eq!(mean_half_width(&[2.0]), (2.0, 0.0));
        let (m, h) = mean_half_width(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((h - 1.96 * (2.0f64 / 2.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn small_replication_runs() {
        let mut cfg = ExperimentConfig {
            dgp: Some(Setting::GapSupport2),
            n: 600,
            m_part: 50,
            m_merge: 50,
            replications: 2,
            ..Default::default()
        };
        cfg.boost.n_estimators = 40;
        let src = DataSource::from_config(&cfg).unwrap();
        let untimed = |mut r: ReplicationResult| {
            r.methods
                .iter_mut()
                .for_each(|m| m.report.calibration_seconds = 0.0);
            r
        };
        let r = untimed(run_replication(&cfg, &src, 0).unwrap());
        assert_eq!(r, untimed(run_replication(&cfg, &src, 0).unwrap()));
        assert_eq!(r.methods.len(), 3);
        assert_eq!(r.segments.len(), 6);
        let lo = r.method(METHOD_LOBOOST).unwrap();
        assert!(lo.n_regions_pre.unwrap() >= lo.n_regions_post.unwrap());
        let n: usize = r
            .segments
            .iter()
            .filter(|s| s.method == METHOD_ICP)
            .map(|s| s.n)
            .sum();
        assert_eq!(n, 120);
    }
}
