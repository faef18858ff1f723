//! Declarative pipeline configuration, loaded from a single JSON file.
//! Relative paths are resolved against the config file's directory so a run
//! is reproducible from any working directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use calibet_core::backtest::{Money, StakeRule};
use calibet_core::calibration::MetricSpec;
use calibet_core::data::{StatDef, StatSchema};
use calibet_core::learners::LrHyper;
use calibet_core::selection::HyperGrid;
use serde::{Deserialize, Serialize};

use crate::pipeline::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Accuracy,
    Calibration,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Accuracy => "accuracy",
            Branch::Calibration => "calibration",
        }
    }

    pub fn parse(s: &str) -> Option<Branch> {
        match s {
            "accuracy" => Some(Branch::Accuracy),
            "calibration" => Some(Branch::Calibration),
            _ => None,
        }
    }
}

/// Chronological season roles. Every listed season must exist in the data;
/// the roles must be disjoint and in data order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Splits {
    pub initial_train: Vec<String>,
    pub validation: String,
    pub test: String,
    pub simulation: String,
}

impl Splits {
    /// Extended training span: initial training plus validation seasons.
    pub fn extended_train(&self) -> Vec<String> {
        let mut seasons = self.initial_train.clone();
        seasons.push(self.validation.clone());
        seasons
    }

    /// Final training span: extended training plus the test season.
    pub fn final_train(&self) -> Vec<String> {
        let mut seasons = self.extended_train();
        seasons.push(self.test.clone());
        seasons
    }

    fn all(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.initial_train.iter().map(|s| s.as_str()).collect();
        v.push(&self.validation);
        v.push(&self.test);
        v.push(&self.simulation);
        v
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StakeRuleConfig {
    Fixed { amount: f64 },
    FractionalKelly { fraction: f64 },
}

impl StakeRuleConfig {
    pub fn to_rule(&self) -> StakeRule {
        match self {
            StakeRuleConfig::Fixed { amount } => StakeRule::Fixed {
                amount: Money::from_dollars(*amount),
            },
            StakeRuleConfig::FractionalKelly { fraction } => StakeRule::FractionalKelly {
                fraction: *fraction,
            },
        }
    }
}

fn default_stake_rules() -> BTreeMap<String, StakeRuleConfig> {
    let mut rules = BTreeMap::new();
    rules.insert("fixed".to_string(), StakeRuleConfig::Fixed { amount: 100.0 });
    rules.insert(
        "kelly8".to_string(),
        StakeRuleConfig::FractionalKelly { fraction: 0.125 },
    );
    rules
}

/// Logistic-regression settings: the declared search grid plus the fixed
/// optimizer parameters, and the defaults SFS runs with.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LrConfig {
    #[serde(default = "default_grid_l2")]
    pub grid_l2_lambda: Vec<f64>,
    #[serde(default = "default_grid_rate")]
    pub grid_learning_rate: Vec<f64>,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_sfs_l2")]
    pub sfs_l2_lambda: f64,
    #[serde(default = "default_sfs_rate")]
    pub sfs_learning_rate: f64,
}

fn default_grid_l2() -> Vec<f64> {
    vec![0.001, 0.01, 0.1, 1.0, 10.0]
}

fn default_grid_rate() -> Vec<f64> {
    vec![0.1, 0.01]
}

fn default_max_iters() -> usize {
    5000
}

fn default_tolerance() -> f64 {
    1e-6
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

fn default_sfs_l2() -> f64 {
    0.01
}

fn default_sfs_rate() -> f64 {
    0.1
}

impl Default for LrConfig {
    fn default() -> Self {
        LrConfig {
            grid_l2_lambda: default_grid_l2(),
            grid_learning_rate: default_grid_rate(),
            max_iters: default_max_iters(),
            tolerance: default_tolerance(),
            seeds: default_seeds(),
            sfs_l2_lambda: default_sfs_l2(),
            sfs_learning_rate: default_sfs_rate(),
        }
    }
}

impl LrConfig {
    pub fn sfs_hyper(&self) -> LrHyper {
        LrHyper {
            l2_lambda: self.sfs_l2_lambda,
            learning_rate: self.sfs_learning_rate,
            max_iters: self.max_iters,
            tolerance: self.tolerance,
            seed: 0,
        }
    }

    pub fn grid(&self) -> HyperGrid {
        HyperGrid {
            dims: vec![
                ("l2_lambda".to_string(), self.grid_l2_lambda.clone()),
                ("learning_rate".to_string(), self.grid_learning_rate.clone()),
            ],
            seeds: self.seeds.clone(),
        }
    }

    /// Hyperparameters for a concrete grid point.
    pub fn hyper_from_point(&self, point: &BTreeMap<String, f64>, seed: u64) -> LrHyper {
        LrHyper {
            l2_lambda: point.get("l2_lambda").copied().unwrap_or(self.sfs_l2_lambda),
            learning_rate: point
                .get("learning_rate")
                .copied()
                .unwrap_or(self.sfs_learning_rate),
            max_iters: self.max_iters,
            tolerance: self.tolerance,
            seed,
        }
    }
}

fn default_branches() -> Vec<Branch> {
    vec![Branch::Accuracy, Branch::Calibration]
}

fn default_bins() -> usize {
    20
}

fn default_min_occupancy() -> f64 {
    0.8
}

fn default_ks_alpha() -> f64 {
    0.01
}

fn default_spearman_threshold() -> f64 {
    0.7
}

fn default_initial_bankroll() -> f64 {
    10_000.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub games_csv: PathBuf,
    pub odds_csv: PathBuf,
    pub out_dir: PathBuf,
    pub stat_schema: Vec<StatDef>,
    pub splits: Splits,
    #[serde(default = "default_branches")]
    pub branches: Vec<Branch>,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_min_occupancy")]
    pub min_occupancy: f64,
    #[serde(default = "default_ks_alpha")]
    pub ks_alpha: f64,
    #[serde(default = "default_spearman_threshold")]
    pub spearman_threshold: f64,
    #[serde(default = "default_initial_bankroll")]
    pub initial_bankroll: f64,
    #[serde(default = "default_stake_rules")]
    pub stake_rules: BTreeMap<String, StakeRuleConfig>,
    #[serde(default)]
    pub lr: LrConfig,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<PipelineConfig, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            PipelineError::Usage(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut config: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| PipelineError::Usage(format!("invalid config JSON: {e}")))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        config.games_csv = resolve(base, &config.games_csv);
        config.odds_csv = resolve(base, &config.odds_csv);
        config.out_dir = resolve(base, &config.out_dir);
        config.validate()?;
        Ok(config)
    }

    pub fn schema(&self) -> StatSchema {
        StatSchema(self.stat_schema.clone())
    }

    pub fn metric_for(&self, branch: Branch) -> MetricSpec {
        match branch {
            Branch::Accuracy => MetricSpec::accuracy(),
            Branch::Calibration => MetricSpec::classwise_ece(self.bins, self.min_occupancy),
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let usage = |msg: String| Err(PipelineError::Usage(msg));
        if self.stat_schema.is_empty() {
            return usage("stat_schema must declare at least one stat".into());
        }
        let mut names: Vec<&str> = self.stat_schema.iter().map(|d| d.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.stat_schema.len() {
            return usage("stat_schema contains duplicate stat names".into());
        }
        if self.bins < 2 {
            return usage(format!("bins must be at least 2, got {}", self.bins));
        }
        if !(self.min_occupancy > 0.0 && self.min_occupancy <= 1.0) {
            return usage(format!(
                "min_occupancy must lie in (0, 1], got {}",
                self.min_occupancy
            ));
        }
        if !(self.ks_alpha > 0.0 && self.ks_alpha < 1.0) {
            return usage(format!("ks_alpha must lie in (0, 1), got {}", self.ks_alpha));
        }
        if !(0.0..=1.0).contains(&self.spearman_threshold) {
            return usage(format!(
                "spearman_threshold must lie in [0, 1], got {}",
                self.spearman_threshold
            ));
        }
        if self.initial_bankroll <= 0.0 || self.initial_bankroll.is_nan() {
            return usage(format!(
                "initial_bankroll must be positive, got {}",
                self.initial_bankroll
            ));
        }
        if self.branches.is_empty() {
            return usage("branches must not be empty".into());
        }
        if self.splits.initial_train.is_empty() {
            return usage("splits.initial_train must list at least one season".into());
        }
        let all = self.splits.all();
        let mut dedup = all.clone();
        dedup.sort_unstable();
        dedup.dedup();
        if dedup.len() != all.len() {
            return usage("season splits must be disjoint".into());
        }
        for (name, rule) in &self.stake_rules {
            if !rule.to_rule().is_valid() {
                return usage(format!("stake rule '{name}' has invalid parameters"));
            }
        }
        if self.lr.grid_l2_lambda.is_empty()
            || self.lr.grid_learning_rate.is_empty()
            || self.lr.seeds.is_empty()
        {
            return usage("lr grid lists and seeds must not be empty".into());
        }
        if self.lr.max_iters == 0 || self.lr.tolerance <= 0.0 || self.lr.tolerance.is_nan() {
            return usage("lr.max_iters must be positive and lr.tolerance > 0".into());
        }
        Ok(())
    }
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}
