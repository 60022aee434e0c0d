//! Command-line front end: flag parsing, config-file merging and exit codes.
//!
//! Exit code 0 means every replication succeeded, 1 a partial failure, and
//! 2 a configuration or input error.

use std::path::PathBuf;

use clap::Parser;

use crate::error::{Error, Result};
use crate::experiment::{run, ExperimentConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARTIAL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "loboost",
    version,
    about = "Local conformal intervals for boosted trees"
)]
pub struct Args {
    /// simulate | run-csv | diagnose | partition-dump | generate
    #[arg(long)]
    pub command: Option<String>,
    /// Synthetic setting: setting1 | setting2
    #[arg(long)]
    pub dgp: Option<String>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Target column name (default: last column)
    #[arg(long)]
    pub target: Option<String>,
    /// Sample size per replication for synthetic data
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "m-part")]
    pub m_part: Option<usize>,
    #[arg(long = "m-merge")]
    pub m_merge: Option<usize>,
    /// variance | uniform | exp:RHO
    #[arg(long)]
    pub weights: Option<String>,
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long = "min-leaf")]
    pub min_leaf: Option<usize>,
    #[arg(long)]
    pub subsample: Option<f64>,
    /// Trees without validation improvement before stopping (0 disables)
    #[arg(long = "n-iter-no-change")]
    pub n_iter_no_change: Option<usize>,
    /// Prefix depth for diagnose
    #[arg(long)]
    pub k: Option<usize>,
    /// Comma-separated reference points for diagnose
    #[arg(long = "ref-points")]
    pub ref_points: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// File of `key = value` lines; flags take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl Args {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut kv = Vec::new();
        let mut put = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                kv.push((k, v));
            }
        };
        put("command", self.command.clone());
        put("dgp", self.dgp.clone());
        put("csv", self.csv.as_ref().map(|p| p.display().to_string()));
        put("target", self.target.clone());
        put("n", self.n.map(|v| v.to_string()));
        put("alpha", self.alpha.map(|v| v.to_string()));
        put("reps", self.reps.map(|v| v.to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        put("m-part", self.m_part.map(|v| v.to_string()));
        put("m-merge", self.m_merge.map(|v| v.to_string()));
        put("weights", self.weights.clone());
        put("trees", self.trees.map(|v| v.to_string()));
        put("lr", self.lr.map(|v| v.to_string()));
        put("depth", self.depth.map(|v| v.to_string()));
        put("min-leaf", self.min_leaf.map(|v| v.to_string()));
        put("subsample", self.subsample.map(|v| v.to_string()));
        put(
            "n-iter-no-change",
            self.n_iter_no_change.map(|v| v.to_string()),
        );
        put("k", self.k.map(|v| v.to_string()));
        put("ref-points", self.ref_points.clone());
        put("out", self.out.as_ref().map(|p| p.display().to_string()));
        kv
    }

    /// Defaults, then the config file, then explicit flags.
    pub fn to_config(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            cfg.apply_file_text(&text)?;
        }
        for (k, v) in self.overrides() {
            cfg.set(k, &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn exit_code_for(e: &Error) -> i32 {
    if e.is_input_error() {
        EXIT_INPUT
    } else {
        EXIT_PARTIAL
    }
}

/// Runs the parsed command and maps the outcome to an exit code.
pub fn execute(args: &Args) -> i32 {
    let cfg = match args.to_config() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code_for(&e);
        }
    };
    match run(&cfg) {
        Ok(status) => status.exit_code(),
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}
