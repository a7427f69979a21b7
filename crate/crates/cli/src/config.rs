//! Training flags, the flat `key = value` config file, and their resolution
//! into a [`TrainConfig`]. Precedence: flags, then file, then defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;

use cfloss::loss::LossKind;
use cfloss::optim::OptimizerKind;
use cfloss::TrainConfig;

/// Negatives used by SSM and SimCE when nothing else is given.
pub const DEFAULT_NEGATIVES: usize = 64;

/// Invalid flag or config combination; reported as a usage error.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage<T>(msg: impl Into<String>) -> Result<T, UsageError> {
    Err(UsageError(msg.into()))
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    /// bpr, ssm or simce
    #[arg(long)]
    pub loss: Option<LossKind>,
    /// Negatives per positive (bpr uses exactly one)
    #[arg(long)]
    pub negatives: Option<usize>,
    /// SimCE margin
    #[arg(long, allow_hyphen_values = true)]
    pub margin: Option<f64>,
    /// Propagation layers; 0 is plain matrix factorization
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Maximum number of epochs
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Evaluations without improvement before stopping
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// adam or sgd
    #[arg(long)]
    pub optimizer: Option<OptimizerKind>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Standard deviation of the Gaussian initialization
    #[arg(long)]
    pub init_scale: Option<f64>,
    /// Propagate once per epoch (approximate gradients)
    #[arg(long)]
    pub cache_propagation: bool,
    /// Flat `key = value` file; flags take precedence over it
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Keys accepted in a config file, matching the config echo.
pub const CONFIG_KEYS: [&str; 15] = [
    "loss",
    "negatives",
    "margin",
    "dim",
    "layers",
    "lr",
    "batch",
    "epochs",
    "patience",
    "weight_decay",
    "seed",
    "optimizer",
    "eval_every",
    "init_scale",
    "cache_propagation",
];

/// Parse flat `key = value` text. Blank lines and `#` comments are skipped.
pub fn parse_config(text: &str, origin: &Path) -> Result<BTreeMap<String, String>, UsageError> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return usage(format!("{}:{}: expected `key = value`", origin.display(), n + 1));
        };
        let key = key.trim();
        if !CONFIG_KEYS.contains(&key) {
            return usage(format!("{}:{}: unknown key `{key}`", origin.display(), n + 1));
        }
        if out.insert(key.to_string(), value.trim().to_string()).is_some() {
            return usage(format!("{}:{}: duplicate key `{key}`", origin.display(), n + 1));
        }
    }
    Ok(out)
}

fn from_file<T: FromStr>(file: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, UsageError>
where
    T::Err: fmt::Display,
{
    match file.get(key) {
        None => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|e| UsageError(format!("config key `{key}`: {e}"))),
    }
}

impl TrainArgs {
    /// Resolve flags over an optional config file over defaults.
    pub fn resolve(&self) -> Result<TrainConfig, UsageError> {
        let file = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| UsageError(format!("cannot read {}: {e}", path.display())))?;
                parse_config(&text, path)?
            }
            None => BTreeMap::new(),
        };
        self.resolve_with(&file)
    }

    pub fn resolve_with(&self, file: &BTreeMap<String, String>) -> Result<TrainConfig, UsageError> {
        let d = TrainConfig::default();
        macro_rules! pick {
            ($field:ident, $key:literal) => {
                match self.$field {
                    Some(v) => Some(v),
                    None => from_file(file, $key)?,
                }
            };
        }
        let loss: LossKind = pick!(loss, "loss").unwrap_or(d.loss);
        let negatives: Option<usize> = pick!(negatives, "negatives");
        let negatives = match (loss, negatives) {
            (LossKind::Bpr, Some(n)) if n != 1 => {
                return usage(format!("bpr is defined with one negative per positive, got --negatives {n}"))
            }
            (LossKind::Bpr, _) => 1,
            (_, Some(n)) => n,
            (_, None) => DEFAULT_NEGATIVES,
        };
        let cache_file: Option<bool> = from_file(file, "cache_propagation")?;
        let cfg = TrainConfig {
            loss,
            negatives,
            margin: pick!(margin, "margin").unwrap_or(d.margin),
            dim: pick!(dim, "dim").unwrap_or(d.dim),
            layers: pick!(layers, "layers").unwrap_or(d.layers),
            lr: pick!(lr, "lr").unwrap_or(d.lr),
            batch_size: pick!(batch, "batch").unwrap_or(d.batch_size),
            max_epochs: pick!(epochs, "epochs").unwrap_or(d.max_epochs),
            patience: pick!(patience, "patience").unwrap_or(d.patience),
            weight_decay: pick!(weight_decay, "weight_decay").unwrap_or(d.weight_decay),
            seed: pick!(seed, "seed").unwrap_or(d.seed),
            optimizer: pick!(optimizer, "optimizer").unwrap_or(d.optimizer),
            eval_every: pick!(eval_every, "eval_every").unwrap_or(d.eval_every),
            init_scale: pick!(init_scale, "init_scale").unwrap_or(d.init_scale),
            cache_propagation: self.cache_propagation || cache_file.unwrap_or(d.cache_propagation),
        };
        cfg.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(text: &str) -> BTreeMap<String, String> {
        parse_config(text, Path::new("cfg")).unwrap()
    }

    #[test]
    fn defaults() {
        let cfg = TrainArgs::default().resolve_with(&BTreeMap::new()).unwrap();
        assert_eq!(cfg.loss, LossKind::SimCe);
        assert_eq!(cfg.negatives, DEFAULT_NEGATIVES);
        assert_eq!(cfg.margin, 5.0);
        assert_eq!(cfg.layers, 2);
    }

    #[test]
    fn bpr_negatives() {
        let args = TrainArgs { loss: Some(LossKind::Bpr), ..Default::default() };
        assert_eq!(args.resolve_with(&BTreeMap::new()).unwrap().negatives, 1);
        let args = TrainArgs { negatives: Some(8), ..args };
        assert!(args.resolve_with(&BTreeMap::new()).is_err());
        let args = TrainArgs { loss: Some(LossKind::Bpr), ..Default::default() };
        assert!(args.resolve_with(&file("negatives = 8")).is_err());
    }

    #[test]
    fn flags_override_file() {
        let f = file("# run\nloss = ssm\nlr = 0.01\n\ndim = 8\ncache_propagation = true\n");
        let args = TrainArgs { dim: Some(16), ..Default::default() };
        let cfg = args.resolve_with(&f).unwrap();
        assert_eq!(cfg.loss, LossKind::Ssm);
        assert_eq!(cfg.lr, 0.01);
        assert_eq!(cfg.dim, 16);
        assert!(cfg.cache_propagation);
    }

    #[test]
    fn echo_round_trips() {
        let args = TrainArgs {
            loss: Some(LossKind::Ssm),
            negatives: Some(7),
            margin: Some(0.1 + 0.2),
            lr: Some(3e-5),
            seed: Some(u64::MAX),
            optimizer: Some(OptimizerKind::Sgd),
            ..Default::default()
        };
        let cfg = args.resolve_with(&BTreeMap::new()).unwrap();
        let again = TrainArgs::default().resolve_with(&file(&cfg.echo())).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn malformed_files_rejected() {
        let p = Path::new("cfg");
        assert!(parse_config("lr 0.1", p).is_err());
        assert!(parse_config("learning_rate = 0.1", p).is_err());
        assert!(parse_config("lr = 0.1\nlr = 0.2", p).is_err());
        let bad = file("lr = fast");
        assert!(TrainArgs::default().resolve_with(&bad).is_err());
    }
}
