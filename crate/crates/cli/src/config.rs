//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rcfgan_core::{Activation, Preset, TrainConfig};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: bad value {value:?} for `{key}`: {reason}")]
    Value {
        line: usize,
        key: String,
        value: String,
        reason: String,
    },
    #[error("{0}")]
    Invalid(String),
}

/// Where training data comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetChoice {
    Preset(Preset),
    /// IDX image/label pair, optionally filtered to one digit.
    Idx,
}

impl FromStr for DatasetChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "idx" {
            return Ok(DatasetChoice::Idx);
        }
        s.parse::<Preset>()
            .map(DatasetChoice::Preset)
            .map_err(|_| format!("expected one of ring8, grid25, two_moons, bimodal1d, idx; got {s:?}"))
    }
}

impl std::fmt::Display for DatasetChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DatasetChoice::Preset(p) => write!(f, "{p}"),
            DatasetChoice::Idx => f.write_str("idx"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub dataset: DatasetChoice,
    pub idx_images: Option<PathBuf>,
    pub idx_labels: Option<PathBuf>,
    pub idx_digit: Option<u8>,
    pub out: PathBuf,
    /// Generated samples scored after training.
    pub eval_samples: usize,

    pub suite_trials: usize,
    pub suite_samples: usize,
    pub suite_freqs: usize,
    pub analytic_samples: usize,

    pub swap_digits: (u8, u8),
    pub swap_samples: usize,

    pub alphas: Vec<f64>,
    pub sweep_iterations: usize,
    pub sweep_lr: f64,

    pub two_sample_n: usize,
    pub two_sample_shift: f64,
    pub two_sample_trials: usize,
    pub two_sample_perms: usize,
    pub two_sample_freqs: usize,
    pub two_sample_level: f64,

    pub grad_trials: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            dataset: DatasetChoice::Preset(Preset::Ring8),
            idx_images: None,
            idx_labels: None,
            idx_digit: None,
            out: PathBuf::from("runs"),
            eval_samples: 2000,
            suite_trials: 500,
            suite_samples: 512,
            suite_freqs: 64,
            analytic_samples: 100_000,
            swap_digits: (1, 2),
            swap_samples: 1000,
            alphas: vec![0.001, 0.5, 0.999],
            sweep_iterations: 2000,
            sweep_lr: 2e-3,
            two_sample_n: 256,
            two_sample_shift: 1.0,
            two_sample_trials: 200,
            two_sample_perms: 200,
            two_sample_freqs: 16,
            two_sample_level: 0.05,
            grad_trials: 5,
        }
    }
}

fn parse_list<T: FromStr>(v: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    v.split(',')
        .map(|s| s.trim().parse::<T>().map_err(|e| e.to_string()))
        .collect()
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err("expected true or false".into()),
    }
}

fn num<T: FromStr>(v: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| e.to_string())
}

fn join<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn opt_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

/// Every recognised key, in the order `render` writes them.
pub const KEYS: &[&str] = &[
    "dataset",
    "idx_images",
    "idx_labels",
    "idx_digit",
    "out",
    "seed",
    "iterations",
    "checkpoint_interval",
    "b_d",
    "b_g",
    "b_t",
    "b_sigma",
    "lr",
    "beta1",
    "beta2",
    "lambda",
    "alpha",
    "latent_dim",
    "z_variance",
    "t_variance",
    "use_tnet",
    "use_anchor",
    "use_reciprocal",
    "hidden",
    "generator_output",
    "eval_samples",
    "suite_trials",
    "suite_samples",
    "suite_freqs",
    "analytic_samples",
    "swap_digits",
    "swap_samples",
    "alphas",
    "sweep_iterations",
    "sweep_lr",
    "two_sample_n",
    "two_sample_shift",
    "two_sample_trials",
    "two_sample_perms",
    "two_sample_freqs",
    "two_sample_level",
    "grad_trials",
];

impl RunConfig {
    /// Sets one key; the error string is the reason only.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        let t = &mut self.train;
        match key {
            "dataset" => self.dataset = v.parse()?,
            "idx_images" => self.idx_images = opt_path(v),
            "idx_labels" => self.idx_labels = opt_path(v),
            "idx_digit" => self.idx_digit = if v.is_empty() { None } else { Some(num(v)?) },
            "out" => self.out = PathBuf::from(v),
            "seed" => t.seed = num(v)?,
            "iterations" => t.iterations = num(v)?,
            "checkpoint_interval" => t.checkpoint_interval = num(v)?,
            "b_d" => t.batch_data = num(v)?,
            "b_g" => t.batch_gen = num(v)?,
            "b_t" => t.batch_freq = num(v)?,
            "b_sigma" => t.batch_sigma = num(v)?,
            "lr" => t.lr = num(v)?,
            "beta1" => t.beta1 = num(v)?,
            "beta2" => t.beta2 = num(v)?,
            "lambda" => t.lambda = num(v)?,
            "alpha" => t.alpha = num(v)?,
            "latent_dim" => t.latent_dim = num(v)?,
            "z_variance" => t.z_variance = num(v)?,
            "t_variance" => t.t_variance = num(v)?,
            "use_tnet" => t.use_tnet = parse_bool(v)?,
            "use_anchor" => t.use_anchor = parse_bool(v)?,
            "use_reciprocal" => t.use_reciprocal = parse_bool(v)?,
            "hidden" => t.hidden = parse_list(v)?,
            "generator_output" => t.generator_output = v.parse::<Activation>().map_err(|e| e.to_string())?,
            "eval_samples" => self.eval_samples = num(v)?,
            "suite_trials" => self.suite_trials = num(v)?,
            "suite_samples" => self.suite_samples = num(v)?,
            "suite_freqs" => self.suite_freqs = num(v)?,
            "analytic_samples" => self.analytic_samples = num(v)?,
            "swap_digits" => {
                let d: Vec<u8> = parse_list(v)?;
                match d[..] {
                    [a, b] if a != b && a <= 9 && b <= 9 => self.swap_digits = (a, b),
                    _ => return Err("expected two distinct digits, e.g. 1,2".into()),
                }
            }
            "swap_samples" => self.swap_samples = num(v)?,
            "alphas" => self.alphas = parse_list(v)?,
            "sweep_iterations" => self.sweep_iterations = num(v)?,
            "sweep_lr" => self.sweep_lr = num(v)?,
            "two_sample_n" => self.two_sample_n = num(v)?,
            "two_sample_shift" => self.two_sample_shift = num(v)?,
            "two_sample_trials" => self.two_sample_trials = num(v)?,
            "two_sample_perms" => self.two_sample_perms = num(v)?,
            "two_sample_freqs" => self.two_sample_freqs = num(v)?,
            "two_sample_level" => self.two_sample_level = num(v)?,
            "grad_trials" => self.grad_trials = num(v)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((k, v)) = body.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line,
                    text: raw.to_string(),
                });
            };
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(ConfigError::UnknownKey { line, key: k.into() });
            }
            if !seen.insert(k.to_string()) {
                return Err(ConfigError::Duplicate { line, key: k.into() });
            }
            cfg.set(k, v).map_err(|reason| ConfigError::Value {
                line,
                key: k.into(),
                value: v.into(),
                reason,
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Invalid(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn value(&self, key: &str) -> String {
        let t = &self.train;
        let path = |p: &Option<PathBuf>| p.as_ref().map_or(String::new(), |p| p.display().to_string());
        match key {
            "dataset" => self.dataset.to_string(),
            "idx_images" => path(&self.idx_images),
            "idx_labels" => path(&self.idx_labels),
            "idx_digit" => self.idx_digit.map_or(String::new(), |d| d.to_string()),
            "out" => self.out.display().to_string(),
            "seed" => t.seed.to_string(),
            "iterations" => t.iterations.to_string(),
            "checkpoint_interval" => t.checkpoint_interval.to_string(),
            "b_d" => t.batch_data.to_string(),
            "b_g" => t.batch_gen.to_string(),
            "b_t" => t.batch_freq.to_string(),
            "b_sigma" => t.batch_sigma.to_string(),
            "lr" => t.lr.to_string(),
            "beta1" => t.beta1.to_string(),
            "beta2" => t.beta2.to_string(),
            "lambda" => t.lambda.to_string(),
            "alpha" => t.alpha.to_string(),
            "latent_dim" => t.latent_dim.to_string(),
            "z_variance" => t.z_variance.to_string(),
            "t_variance" => t.t_variance.to_string(),
            "use_tnet" => t.use_tnet.to_string(),
            "use_anchor" => t.use_anchor.to_string(),
            "use_reciprocal" => t.use_reciprocal.to_string(),
            "hidden" => join(&t.hidden),
            "generator_output" => t.generator_output.to_string(),
            "eval_samples" => self.eval_samples.to_string(),
            "suite_trials" => self.suite_trials.to_string(),
            "suite_samples" => self.suite_samples.to_string(),
            "suite_freqs" => self.suite_freqs.to_string(),
            "analytic_samples" => self.analytic_samples.to_string(),
            "swap_digits" => format!("{},{}", self.swap_digits.0, self.swap_digits.1),
            "swap_samples" => self.swap_samples.to_string(),
            "alphas" => join(&self.alphas),
            "sweep_iterations" => self.sweep_iterations.to_string(),
            "sweep_lr" => self.sweep_lr.to_string(),
            "two_sample_n" => self.two_sample_n.to_string(),
            "two_sample_shift" => self.two_sample_shift.to_string(),
            "two_sample_trials" => self.two_sample_trials.to_string(),
            "two_sample_perms" => self.two_sample_perms.to_string(),
            "two_sample_freqs" => self.two_sample_freqs.to_string(),
            "two_sample_level" => self.two_sample_level.to_string(),
            "grad_trials" => self.grad_trials.to_string(),
            _ => unreachable!("key table and renderer out of sync: {key}"),
        }
    }

    /// Fully resolved config; parsing the output gives back `self`.
    pub fn render(&self) -> String {
        let mut out = String::from("# resolved run configuration\n");
        for k in KEYS {
            let _ = writeln!(out, "{k} = {}", self.value(k));
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.train.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.dataset == DatasetChoice::Idx && (self.idx_images.is_none() || self.idx_labels.is_none()) {
            return Err(ConfigError::Invalid(
                "dataset = idx needs both idx_images and idx_labels".into(),
            ));
        }
        if self.alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(ConfigError::Invalid("alphas must lie in [0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.two_sample_level) || self.two_sample_level == 0.0 {
            return Err(ConfigError::Invalid("two_sample_level must lie in (0, 1)".into()));
        }
        Ok(())
    }
}
