//! Run configuration: a flat `key = value` file, overridden by flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use evoprune::mnist::SplitSpec;
use evoprune::nn::TrainConfig;
use evoprune::{FitnessWeights, GaConfig};

use crate::error::{io_error, CliError, CliResult};

pub const KEYS: &[&str] = &[
    "data",
    "out",
    "seed",
    "preset",
    "lambda1",
    "lambda2",
    "lambda3",
    "baseline",
    "checkpoint",
    "population",
    "selected",
    "crossover_rate",
    "conv_mutation_rate",
    "fc_mutation_rate",
    "retrain_interval",
    "generations",
    "convergence_window",
    "convergence_epsilon",
    "validation_size",
    "pretrain_epochs",
    "retrain_epochs",
    "final_retrain_epochs",
    "batch_size",
    "learning_rate",
    "momentum",
];

/// Ordered key/value pairs; later insertions win.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings(BTreeMap<String, String>);

impl Settings {
    pub fn parse(text: &str, origin: &str) -> CliResult<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::Config(format!(
                    "{origin}:{}: expected key = value, got {raw:?}",
                    i + 1
                )));
            };
            let key = k.trim();
            check_key(key).map_err(|e| CliError::Config(format!("{origin}:{}: {e}", i + 1)))?;
            map.insert(key.to_string(), v.trim().to_string());
        }
        Ok(Self(map))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> CliResult<()> {
        check_key(key).map_err(CliError::Config)?;
        self.0.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn parsed<T: FromStr>(&self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::Config(format!("{key} = {v:?}: {e}")))
            })
            .transpose()
    }
}

fn check_key(key: &str) -> Result<(), String> {
    if KEYS.contains(&key) {
        Ok(())
    } else {
        Err(format!("unknown setting {key:?}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: PathBuf,
    pub out: PathBuf,
    /// `None` when no weighting was given.
    pub weights: Option<FitnessWeights>,
    pub baseline: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub split: SplitSpec,
    pub pretrain: TrainConfig,
    pub ga: GaConfig,
}

impl RunConfig {
    /// Builds and validates the whole configuration; nothing is computed
    /// from a config that fails here.
    pub fn from_settings(s: &Settings) -> CliResult<Self> {
        let data = s
            .get("data")
            .map_or_else(|| PathBuf::from("data/mnist"), PathBuf::from);
        let out = s
            .get("out")
            .map_or_else(|| PathBuf::from("runs"), PathBuf::from);
        let seed = s.parsed::<u64>("seed")?.unwrap_or(0);
        let baseline = s
            .get("baseline")
            .map_or_else(|| out.join("baseline.ckpt"), PathBuf::from);

        let mut train = TrainConfig::with_epochs(1);
        if let Some(b) = s.parsed("batch_size")? {
            train.batch_size = b;
        }
        if let Some(lr) = s.parsed("learning_rate")? {
            train.learning_rate = lr;
        }
        if let Some(m) = s.parsed("momentum")? {
            train.momentum = m;
        }
        let epochs = |key: &str, default: TrainConfig| -> CliResult<TrainConfig> {
            Ok(TrainConfig {
                epochs: s.parsed(key)?.unwrap_or(default.epochs),
                ..train
            })
        };

        let defaults = GaConfig::default();
        let ga = GaConfig {
            population: s.parsed("population")?.unwrap_or(defaults.population),
            selected: s.parsed("selected")?.unwrap_or(defaults.selected),
            crossover_rate: s
                .parsed("crossover_rate")?
                .unwrap_or(defaults.crossover_rate),
            conv_mutation_rate: s
                .parsed("conv_mutation_rate")?
                .unwrap_or(defaults.conv_mutation_rate),
            fc_mutation_rate: s
                .parsed("fc_mutation_rate")?
                .unwrap_or(defaults.fc_mutation_rate),
            retrain_interval: s
                .parsed("retrain_interval")?
                .unwrap_or(defaults.retrain_interval),
            max_generations: s.parsed("generations")?.unwrap_or(defaults.max_generations),
            convergence_window: s
                .parsed("convergence_window")?
                .unwrap_or(defaults.convergence_window),
            convergence_epsilon: s
                .parsed("convergence_epsilon")?
                .unwrap_or(defaults.convergence_epsilon),
            retrain: epochs("retrain_epochs", TrainConfig::retrain())?,
            final_retrain: epochs("final_retrain_epochs", TrainConfig::final_retrain())?,
            seed,
        };
        ga.validate()?;
        let pretrain = epochs("pretrain_epochs", TrainConfig::pretrain())?;
        pretrain.validate()?;

        let split = SplitSpec {
            validation_size: s
                .parsed("validation_size")?
                .unwrap_or(SplitSpec::default().validation_size),
            seed,
        };
        if split.validation_size == 0 {
            return Err(CliError::Config("validation_size must be positive".into()));
        }

        Ok(Self {
            data,
            out,
            weights: weights(s)?,
            baseline,
            checkpoint: s.get("checkpoint").map(PathBuf::from),
            split,
            pretrain,
            ga,
        })
    }
}

fn weights(s: &Settings) -> CliResult<Option<FitnessWeights>> {
    let lambdas: Vec<Option<f64>> = ["lambda1", "lambda2", "lambda3"]
        .iter()
        .map(|k| s.parsed(k))
        .collect::<CliResult<_>>()?;
    let preset = match s.get("preset") {
        Some(name) => Some(FitnessWeights::preset(name).ok_or_else(|| {
            let names: Vec<_> = FitnessWeights::presets().iter().map(|(n, _)| *n).collect();
            CliError::Config(format!(
                "unknown preset {name:?} (known: {})",
                names.join(", ")
            ))
        })?),
        None => None,
    };
    match (lambdas.as_slice(), preset) {
        ([None, None, None], p) => Ok(p),
        ([Some(a), Some(b), Some(c)], _) => Ok(Some(FitnessWeights::new(*a, *b, *c)?)),
        _ => Err(CliError::Config(
            "lambda1, lambda2 and lambda3 must be given together".into(),
        )),
    }
}
