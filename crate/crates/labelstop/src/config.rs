//! Experiment configuration: a single TOML file, strictly validated.
//!
//! Unknown keys are rejected, every sub-config is checked before any work
//! starts, and seeds are mandatory (no wall-clock seeding). Command-line
//! flags override config keys.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::GridConfig;
use crate::datasets::CsvSchema;
use crate::eval::{default_gamma_grid, RunOptions};
use crate::learners::{LearnerConfig, LearnerKind};
use crate::sampling::SamplingStrategy;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: String, message: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config error at {path}: {message}")]
    Invalid { path: String, message: String },
}

fn invalid(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        path: path.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic,
    Csv,
}

/// Where the data comes from. Synthetic fields and CSV fields are both
/// optional here; validation requires exactly the set matching `source`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub source: DatasetSource,
    #[serde(default)]
    pub name: Option<String>,
    /// Per-feature min-max scaling onto [0, 1].
    #[serde(default)]
    pub normalize: bool,

    // synthetic
    #[serde(default)]
    pub num_classes: Option<usize>,
    #[serde(default)]
    pub feature_dim: Option<usize>,
    #[serde(default)]
    pub class_separation: Option<f64>,
    #[serde(default)]
    pub count_per_class: Option<usize>,

    // csv
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub label_column: Option<usize>,
    #[serde(default)]
    pub ignore_columns: Option<Vec<usize>>,
    #[serde(default)]
    pub classes: Option<Vec<String>>,
    #[serde(default)]
    pub has_header: Option<bool>,
}

impl DatasetSection {
    fn validate(&self) -> Result<(), ConfigError> {
        match self.source {
            DatasetSource::Synthetic => {
                for (key, missing) in [
                    ("num_classes", self.num_classes.is_none()),
                    ("feature_dim", self.feature_dim.is_none()),
                    ("class_separation", self.class_separation.is_none()),
                    ("count_per_class", self.count_per_class.is_none()),
                ] {
                    if missing {
                        return Err(invalid(
                            &format!("dataset.{key}"),
                            "required for source = \"synthetic\"",
                        ));
                    }
                }
                if self.path.is_some() || self.classes.is_some() || self.label_column.is_some() {
                    return Err(invalid("dataset", "csv keys set for a synthetic source"));
                }
                if self.num_classes.unwrap() < 2 {
                    return Err(invalid("dataset.num_classes", "need at least 2 classes"));
                }
                if self.feature_dim.unwrap() == 0 || self.count_per_class.unwrap() == 0 {
                    return Err(invalid("dataset", "feature_dim and count_per_class must be positive"));
                }
                let sep = self.class_separation.unwrap();
                if !sep.is_finite() || sep < 0.0 {
                    return Err(invalid("dataset.class_separation", "must be finite and >= 0"));
                }
            }
            DatasetSource::Csv => {
                for (key, missing) in [
                    ("path", self.path.is_none()),
                    ("label_column", self.label_column.is_none()),
                    ("classes", self.classes.is_none()),
                ] {
                    if missing {
                        return Err(invalid(
                            &format!("dataset.{key}"),
                            "required for source = \"csv\"",
                        ));
                    }
                }
                if self.num_classes.is_some() || self.class_separation.is_some() {
                    return Err(invalid("dataset", "synthetic keys set for a csv source"));
                }
                if self.classes.as_ref().unwrap().len() < 2 {
                    return Err(invalid("dataset.classes", "need at least 2 class names"));
                }
            }
        }
        Ok(())
    }

    pub fn csv_schema(&self) -> CsvSchema {
        CsvSchema {
            label_column: self.label_column.unwrap_or(0),
            ignore_columns: self.ignore_columns.clone().unwrap_or_default(),
            classes: self.classes.clone().unwrap_or_default(),
            has_header: self.has_header.unwrap_or(false),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerSection {
    pub kind: LearnerKind,
    #[serde(default = "default_boost_rounds")]
    pub boost_rounds: usize,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
}

fn default_boost_rounds() -> usize {
    100
}

fn default_temperature() -> f64 {
    1.0
}

impl Default for LearnerSection {
    fn default() -> Self {
        Self {
            kind: LearnerKind::NearestCentroid,
            boost_rounds: default_boost_rounds(),
            temperature: default_temperature(),
        }
    }
}

impl LearnerSection {
    fn validate(&self) -> Result<(), ConfigError> {
        if self.boost_rounds == 0 {
            return Err(invalid("learner.boost_rounds", "must be positive"));
        }
        if !self.temperature.is_finite() || self.temperature <= 0.0 {
            return Err(invalid("learner.temperature", "must be finite and > 0"));
        }
        Ok(())
    }

    pub fn to_learner_config(&self) -> LearnerConfig<f64> {
        LearnerConfig {
            kind: self.kind,
            boost_rounds: self.boost_rounds,
            temperature: self.temperature,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSection {
    #[serde(default = "default_strategy")]
    pub strategy: SamplingStrategy,
    /// Fraction of the pool routed to active queries under `mixed`.
    #[serde(default = "default_active_share")]
    pub active_share: f64,
}

fn default_strategy() -> SamplingStrategy {
    SamplingStrategy::RandomOnly
}

fn default_active_share() -> f64 {
    0.5
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self {
            strategy: default_strategy(),
            active_share: default_active_share(),
        }
    }
}

impl SamplingSection {
    fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.active_share) || self.active_share.is_nan() {
            return Err(invalid("sampling.active_share", "must be in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct BeliefSection {
    /// Constants for the inverse-square-root family.
    #[serde(default)]
    pub kappa_grid: Option<Vec<f64>>,
    /// Constants for the inverse family.
    #[serde(default)]
    pub lambda_grid: Option<Vec<f64>>,
    /// Bases for the exponential family.
    #[serde(default)]
    pub beta_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub r_inf_points: Option<usize>,
}

impl BeliefSection {
    fn validate(&self) -> Result<(), ConfigError> {
        for (key, grid) in [
            ("belief.kappa_grid", &self.kappa_grid),
            ("belief.lambda_grid", &self.lambda_grid),
            ("belief.beta_grid", &self.beta_grid),
        ] {
            if let Some(g) = grid {
                if g.is_empty() {
                    return Err(invalid(key, "grid cannot be empty"));
                }
            }
        }
        if self.r_inf_points == Some(0) {
            return Err(invalid("belief.r_inf_points", "must be positive"));
        }
        Ok(())
    }

    pub fn to_grid_config(&self) -> GridConfig<f64> {
        let defaults = GridConfig::default();
        GridConfig {
            kappa: self.kappa_grid.clone().unwrap_or(defaults.kappa),
            lambda: self.lambda_grid.clone().unwrap_or(defaults.lambda),
            beta: self.beta_grid.clone().unwrap_or(defaults.beta),
            r_inf_points: self.r_inf_points.unwrap_or(defaults.r_inf_points),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoppingSection {
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Sweep grid; omitted means the standard 64-value grid.
    #[serde(default)]
    pub gamma_grid: Option<Vec<f64>>,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
}

fn default_horizon() -> usize {
    1
}

impl Default for StoppingSection {
    fn default() -> Self {
        Self {
            gamma: None,
            gamma_grid: None,
            horizon: default_horizon(),
        }
    }
}

impl StoppingSection {
    fn validate(&self) -> Result<(), ConfigError> {
        if let Some(g) = self.gamma {
            if !g.is_finite() || g < 0.0 {
                return Err(invalid("stopping.gamma", "must be finite and >= 0"));
            }
        }
        if let Some(grid) = &self.gamma_grid {
            if grid.is_empty() {
                return Err(invalid("stopping.gamma_grid", "grid cannot be empty"));
            }
            if !grid.windows(2).all(|w| w[0] >= w[1]) {
                return Err(invalid("stopping.gamma_grid", "must be sorted descending"));
            }
            if grid.iter().any(|g| !g.is_finite() || *g < 0.0) {
                return Err(invalid("stopping.gamma_grid", "entries must be finite and >= 0"));
            }
        }
        if self.horizon == 0 || self.horizon > crate::stopping::MAX_HORIZON {
            return Err(invalid(
                "stopping.horizon",
                format!("must be in [1, {}]", crate::stopping::MAX_HORIZON),
            ));
        }
        Ok(())
    }

    pub fn grid_or_default(&self) -> Vec<f64> {
        self.gamma_grid
            .clone()
            .unwrap_or_else(default_gamma_grid::<f64>)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvSection {
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    /// Master seed; every run seed derives from it.
    pub seed: u64,
}

fn default_folds() -> usize {
    3
}

fn default_repetitions() -> usize {
    1
}

impl CvSection {
    fn validate(&self) -> Result<(), ConfigError> {
        if self.folds < 2 {
            return Err(invalid("cv.folds", "need at least 2 folds"));
        }
        if self.repetitions == 0 {
            return Err(invalid("cv.repetitions", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default = "default_parallel")]
    pub parallel: usize,
    #[serde(default = "default_stride")]
    pub test_stride: usize,
    #[serde(default)]
    pub max_labels: Option<usize>,
    /// Keep measuring past the first rule fire. Evaluation commands force
    /// this on (the oracle needs the full curve); `simulate` defaults to
    /// off so its trace ends where the rule fires.
    #[serde(default)]
    pub continue_after_stop: Option<bool>,
    #[serde(default)]
    pub belief_snapshot_every: usize,
    #[serde(default)]
    pub trim_order: usize,
}

fn default_parallel() -> usize {
    1
}

fn default_stride() -> usize {
    1
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            out_dir: None,
            parallel: default_parallel(),
            test_stride: default_stride(),
            max_labels: None,
            continue_after_stop: None,
            belief_snapshot_every: 0,
            trim_order: 0,
        }
    }
}

impl RunSection {
    fn validate(&self) -> Result<(), ConfigError> {
        if self.parallel == 0 {
            return Err(invalid("run.parallel", "must be positive"));
        }
        if self.test_stride == 0 {
            return Err(invalid("run.test_stride", "must be positive"));
        }
        Ok(())
    }

    pub fn to_run_options(&self, default_continue: bool) -> RunOptions {
        RunOptions {
            continue_after_stop: self.continue_after_stop.unwrap_or(default_continue),
            test_stride: self.test_stride,
            max_labels: self.max_labels,
            belief_snapshot_every: self.belief_snapshot_every,
            trim_order: self.trim_order,
        }
    }
}

/// The whole experiment file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    #[serde(default)]
    pub learner: LearnerSection,
    #[serde(default)]
    pub sampling: SamplingSection,
    #[serde(default)]
    pub belief: BeliefSection,
    #[serde(default)]
    pub stopping: StoppingSection,
    pub cv: CvSection,
    #[serde(default)]
    pub run: RunSection,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.dataset.validate()?;
        self.learner.validate()?;
        self.sampling.validate()?;
        self.belief.validate()?;
        self.stopping.validate()?;
        self.cv.validate()?;
        self.run.validate()?;
        Ok(())
    }
}

/// Flag overrides; a set flag wins over the config key.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub parallel: Option<usize>,
    pub gamma: Option<f64>,
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let config: ExperimentConfig =
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut config = parse_config(&text)?;
    if let Some(seed) = overrides.seed {
        config.cv.seed = seed;
    }
    if let Some(parallel) = overrides.parallel {
        config.run.parallel = parallel;
    }
    if let Some(gamma) = overrides.gamma {
        config.stopping.gamma = Some(gamma);
    }
    if let Some(out) = &overrides.out {
        config.run.out_dir = Some(out.clone());
    }
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SYNTH: &str = r#"
        [dataset]
        source = "synthetic"
        num_classes = 10
        feature_dim = 8
        class_separation = 3.0
        count_per_class = 100

        [stopping]
        gamma = 0.001

        [cv]
        seed = 42
    "#;

    #[test]
    fn parses_a_minimal_synthetic_config() {
        let cfg = parse_config(SYNTH).unwrap();
        assert_eq!(cfg.dataset.num_classes, Some(10));
        assert_eq!(cfg.learner.kind, LearnerKind::NearestCentroid);
        assert_eq!(cfg.cv.folds, 3);
        assert_eq!(cfg.stopping.grid_or_default().len(), 64);
        assert!(cfg.run.to_run_options(true).continue_after_stop);
        assert!(!cfg.run.to_run_options(false).continue_after_stop);
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = format!("{SYNTH}\n[extra]\nfoo = 1\n");
        let err = parse_config(&text).unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)), "{err}");
        let text = SYNTH.replace("gamma = 0.001", "gamma = 0.001\nbogus_key = 3");
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn missing_seed_is_a_parse_error() {
        let text = SYNTH.replace("seed = 42", "");
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn field_paths_in_validation_errors() {
        let text = SYNTH.replace("gamma = 0.001", "gamma = -0.5");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("stopping.gamma"), "{err}");

        let text = SYNTH.replace("num_classes = 10", "num_classes = 1");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("dataset.num_classes"), "{err}");

        let text = SYNTH.replace(
            "[stopping]\n        gamma = 0.001",
            "[stopping]\n        gamma_grid = [0.1, 0.5]",
        );
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("gamma_grid"), "{err}");
    }

    #[test]
    fn csv_source_requires_its_keys() {
        let text = r#"
            [dataset]
            source = "csv"
            classes = ["a", "b"]

            [cv]
            seed = 1
        "#;
        let err = parse_config(text).unwrap_err();
        assert!(err.to_string().contains("dataset.path"), "{err}");
    }

    #[test]
    fn mixing_source_keys_is_rejected() {
        let text = SYNTH.replace("source = \"synthetic\"", "source = \"synthetic\"\npath = \"x.csv\"");
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn overrides_win() {
        let mut cfg = parse_config(SYNTH).unwrap();
        assert_eq!(cfg.cv.seed, 42);
        // emulate load_config's override application
        let ov = Overrides {
            seed: Some(7),
            gamma: Some(0.25),
            parallel: Some(4),
            out: Some(PathBuf::from("/tmp/x")),
        };
        if let Some(seed) = ov.seed {
            cfg.cv.seed = seed;
        }
        if let Some(g) = ov.gamma {
            cfg.stopping.gamma = Some(g);
        }
        assert_eq!(cfg.cv.seed, 7);
        assert_eq!(cfg.stopping.gamma, Some(0.25));
    }
}
