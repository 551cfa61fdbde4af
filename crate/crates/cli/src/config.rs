//! Run configuration: a flat `key = value` file, overridden by flags.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use bmlp::{Gamma, Hyperparams};

use crate::error::{CliError, Result};

/// Environment variable naming the directory that holds `mnist/` and `fashion/`.
pub const DATA_DIR_ENV: &str = "BMLP_DATA_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetKind {
    Mnist,
    Fashion,
    /// Precomputed real-valued features in the BMF1/BML1 format.
    Features,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::Fashion => "fashion",
            DatasetKind::Features => "features",
        }
    }
}

impl FromStr for DatasetKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mnist" => Ok(DatasetKind::Mnist),
            "fashion" => Ok(DatasetKind::Fashion),
            "features" => Ok(DatasetKind::Features),
            other => Err(CliError::Config(format!("unknown dataset {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetKind,
    /// Directory with the four IDX files; defaults to `$BMLP_DATA_DIR/<dataset>`.
    pub data_dir: Option<PathBuf>,
    pub train_features: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_features: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    /// `[K0, K1, .., KL]`.
    pub dims: Vec<usize>,
    /// Number of classes; defaults to what the training set declares.
    pub classes: Option<usize>,
    pub hyper: Hyperparams,
    pub checkpoint: Option<PathBuf>,
    pub metrics: Option<PathBuf>,
    /// Evaluate on the test set after every epoch rather than only the last.
    pub eval_every: bool,
    /// Record wall-clock time in the metrics file; off gives reproducible files.
    pub timing: bool,
    /// Continue training from this checkpoint.
    pub resume: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetKind::Mnist,
            data_dir: None,
            train_features: None,
            train_labels: None,
            test_features: None,
            test_labels: None,
            dims: vec![784, 1035, 1035],
            classes: None,
            hyper: Hyperparams::default(),
            checkpoint: None,
            metrics: None,
            eval_every: true,
            timing: true,
            resume: None,
        }
    }
}

/// Every key accepted in a config file (and, with a `--` prefix, as a flag).
pub const KEYS: &[&str] = &[
    "dataset",
    "data-dir",
    "train-features",
    "train-labels",
    "test-features",
    "test-labels",
    "dims",
    "classes",
    "epochs",
    "batch-size",
    "pr",
    "robustness",
    "gamma",
    "seed",
    "clamp-bits",
    "share-classifier",
    "checkpoint",
    "metrics",
    "eval-every",
    "timing",
    "resume",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| CliError::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(CliError::Config(format!("invalid boolean {value:?} for {key}"))),
    }
}

pub fn parse_dims(value: &str) -> Result<Vec<usize>> {
    let dims = value.split(',').map(|d| parse::<usize>("dims", d.trim())).collect::<Result<Vec<_>>>()?;
    if dims.len() < 2 || dims.contains(&0) {
        return Err(CliError::Config(format!(
            "dims must list the input size and at least one positive layer size, got {value:?}"
        )));
    }
    Ok(dims)
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let h = &mut self.hyper;
        match key {
            "dataset" => self.dataset = value.parse()?,
            "data-dir" => self.data_dir = Some(value.into()),
            "train-features" => self.train_features = Some(value.into()),
            "train-labels" => self.train_labels = Some(value.into()),
            "test-features" => self.test_features = Some(value.into()),
            "test-labels" => self.test_labels = Some(value.into()),
            "dims" => self.dims = parse_dims(value)?,
            "classes" => {
                let c: usize = parse(key, value)?;
                if c < 2 {
                    return Err(CliError::Config("at least two classes are required".into()));
                }
                self.classes = Some(c);
            }
            "epochs" => h.epochs = parse(key, value)?,
            "batch-size" => h.batch_size = parse(key, value)?,
            "pr" => h.p_r0 = parse(key, value)?,
            "robustness" => h.robustness = value.parse()?,
            "gamma" => h.gamma = value.parse::<Gamma>()?,
            "seed" => h.seed = parse(key, value)?,
            "clamp-bits" => {
                h.clamp_bits = match value {
                    "off" | "none" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "share-classifier" => h.share_classifier = parse_bool(key, value)?,
            "checkpoint" => self.checkpoint = Some(value.into()),
            "metrics" => self.metrics = Some(value.into()),
            "eval-every" => self.eval_every = parse_bool(key, value)?,
            "timing" => self.timing = parse_bool(key, value)?,
            "resume" => self.resume = Some(value.into()),
            other => return Err(CliError::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(key.trim(), value).map_err(|e| CliError::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Canonical config text; feeding it back through `apply_text` yields `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let h = &self.hyper;
        let dims: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        let _ = writeln!(s, "dataset = {}", self.dataset.name());
        let paths = [
            ("data-dir", &self.data_dir),
            ("train-features", &self.train_features),
            ("train-labels", &self.train_labels),
            ("test-features", &self.test_features),
            ("test-labels", &self.test_labels),
        ];
        for (k, p) in paths {
            if let Some(p) = p {
                let _ = writeln!(s, "{k} = {}", p.display());
            }
        }
        let _ = writeln!(s, "dims = {}", dims.join(","));
        if let Some(c) = self.classes {
            let _ = writeln!(s, "classes = {c}");
        }
        let _ = writeln!(s, "epochs = {}", h.epochs);
        let _ = writeln!(s, "batch-size = {}", h.batch_size);
        let _ = writeln!(s, "pr = {}", h.p_r0);
        let _ = writeln!(s, "robustness = {}", h.robustness);
        let _ = writeln!(s, "gamma = {}", h.gamma);
        let _ = writeln!(s, "seed = {}", h.seed);
        match h.clamp_bits {
            Some(b) => {
                let _ = writeln!(s, "clamp-bits = {b}");
            }
            None => s.push_str("clamp-bits = off\n"),
        }
        let _ = writeln!(s, "share-classifier = {}", h.share_classifier);
        for (k, p) in [("checkpoint", &self.checkpoint), ("metrics", &self.metrics), ("resume", &self.resume)] {
            if let Some(p) = p {
                let _ = writeln!(s, "{k} = {}", p.display());
            }
        }
        let _ = writeln!(s, "eval-every = {}", self.eval_every);
        let _ = writeln!(s, "timing = {}", self.timing);
        s
    }

    /// Directory holding the IDX files for `mnist` or `fashion`.
    pub fn idx_dir(&self) -> PathBuf {
        if let Some(d) = &self.data_dir {
            return d.clone();
        }
        let root = std::env::var_os(DATA_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| "data".into());
        root.join(self.dataset.name())
    }
}
