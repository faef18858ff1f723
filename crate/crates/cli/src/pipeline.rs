//! Pipeline stages behind the CLI subcommands. Each stage reads the previous
//! stage's artifacts from the configured output directory and writes its own;
//! everything is deterministic for fixed inputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use calibet_core::backtest::{simulate, Money, StakeRule};
use calibet_core::calibration::{aggregate_bins, reliability_table};
use calibet_core::data::{
    join_games_odds, season_standings, GameRecord, JoinReport, MatchedGame,
};
use calibet_core::features::{
    apply_standardizer, build_feature_matrix, fit_standardizer, shift_screen, FeatureError,
    FeatureSet,
};
use calibet_core::learners::{
    lr_fit, lr_predict_proba, LabeledData, LearnError, LogisticRegression, LrHyper, LrModel,
    Matrix,
};
use calibet_core::selection::{
    correlation_filter, grid_hpo, select_model, sfs, SelectError, SelectionOutcome,
};
use serde::{Deserialize, Serialize};

use crate::config::{Branch, PipelineConfig};
use crate::csvio::{self, DataError};

pub const MATCHED_GAMES: &str = "matched_games.csv";
pub const JOIN_REPORT: &str = "join_report.json";
pub const FEATURES: &str = "features.csv";
pub const SHIFT_REPORT: &str = "shift_report.csv";
pub const STANDARDIZER: &str = "standardizer.json";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    /// Bad invocation, configuration, or missing input file. Exit code 2.
    #[error("{0}")]
    Usage(String),
    /// The data failed validation or is too degenerate to proceed. Exit 3.
    #[error("{0}")]
    Data(String),
    /// An internal invariant broke; this is a bug, not a data problem. Exit 4.
    #[error("internal error: {0}")]
    Internal(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> u8 {
        match self {
            PipelineError::Usage(_) => 2,
            PipelineError::Data(_) => 3,
            PipelineError::Internal(_) => 4,
        }
    }
}

impl From<DataError> for PipelineError {
    fn from(e: DataError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<FeatureError> for PipelineError {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::ZeroVarianceFeature(_)
            | FeatureError::SampleTooSmall
            | FeatureError::EmptyInput => PipelineError::Data(e.to_string()),
            other => PipelineError::Internal(other.to_string()),
        }
    }
}

impl From<LearnError> for PipelineError {
    fn from(e: LearnError) -> Self {
        match e {
            LearnError::SingleClassTraining | LearnError::NonFiniteLoss => {
                PipelineError::Data(e.to_string())
            }
            other => PipelineError::Internal(other.to_string()),
        }
    }
}

impl From<SelectError> for PipelineError {
    fn from(e: SelectError) -> Self {
        match e {
            SelectError::DegenerateSample | SelectError::EmptyCandidates => {
                PipelineError::Data(e.to_string())
            }
            SelectError::EmptyGrid => PipelineError::Usage(e.to_string()),
            SelectError::Learn(inner) => inner.into(),
            other => PipelineError::Internal(other.to_string()),
        }
    }
}

fn require_file(path: &Path) -> Result<(), PipelineError> {
    if !path.is_file() {
        return Err(PipelineError::Usage(format!(
            "input file not found: {}",
            path.display()
        )));
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| PipelineError::Internal(format!("JSON serialization failed: {e}")))?;
    bytes.push(b'\n');
    std::fs::write(path, bytes)
        .map_err(|e| PipelineError::Data(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|_| {
        PipelineError::Usage(format!(
            "artifact not found: {} (run the earlier pipeline stages first)",
            path.display()
        ))
    })?;
    serde_json::from_str(&text)
        .map_err(|e| PipelineError::Data(format!("cannot parse {}: {e}", path.display())))
}

/// Seasons in chronological first-appearance order (games are date-sorted).
fn season_order(games: &[GameRecord]) -> Vec<String> {
    let mut order = Vec::new();
    for g in games {
        if !order.contains(&g.season) {
            order.push(g.season.clone());
        }
    }
    order
}

/// Every split season must exist, and the roles must appear in chronological
/// order: initial training < validation < test < simulation.
fn validate_splits(order: &[String], config: &PipelineConfig) -> Result<(), PipelineError> {
    let pos = |season: &str| -> Result<usize, PipelineError> {
        order.iter().position(|s| s == season).ok_or_else(|| {
            PipelineError::Usage(format!("split season '{season}' is not present in the data"))
        })
    };
    let splits = &config.splits;
    let mut max_train = 0usize;
    for season in &splits.initial_train {
        max_train = max_train.max(pos(season)?);
    }
    let validation = pos(&splits.validation)?;
    let test = pos(&splits.test)?;
    let simulation = pos(&splits.simulation)?;
    if !(max_train < validation && validation < test && test < simulation) {
        return Err(PipelineError::Usage(
            "season splits must be chronologically ordered: initial_train < validation < test < simulation".into(),
        ));
    }
    Ok(())
}

/// Games joined with their feature rows (same sort order), plus season order.
struct DataContext {
    games: Vec<GameRecord>,
    set: FeatureSet,
    seasons: Vec<String>,
}

impl DataContext {
    fn load(config: &PipelineConfig) -> Result<DataContext, PipelineError> {
        require_file(&config.games_csv)?;
        let games = csvio::load_games(&config.games_csv, &config.schema())?;
        let features_path = config.out_dir.join(FEATURES);
        if !features_path.is_file() {
            return Err(PipelineError::Usage(format!(
                "artifact not found: {} (run `features` first)",
                features_path.display()
            )));
        }
        let set = csvio::read_features(&features_path)?;
        if set.rows.len() != games.len()
            || set
                .rows
                .iter()
                .zip(&games)
                .any(|(row, game)| row.game_id != game.game_id)
        {
            return Err(PipelineError::Internal(
                "features.csv does not align with games.csv; rerun `features`".into(),
            ));
        }
        let seasons = season_order(&games);
        validate_splits(&seasons, config)?;
        Ok(DataContext { games, set, seasons })
    }

    /// Feature rows of the given seasons, in chronological order.
    fn subset(&self, seasons: &[String]) -> FeatureSet {
        let rows = self
            .set
            .rows
            .iter()
            .zip(&self.games)
            .filter(|(_, g)| seasons.contains(&g.season))
            .map(|(r, _)| r.clone())
            .collect();
        FeatureSet {
            feature_names: self.set.feature_names.clone(),
            rows,
        }
    }

    fn seasons_strictly_before(&self, season: &str) -> Vec<String> {
        self.seasons
            .iter()
            .take_while(|s| s.as_str() != season)
            .cloned()
            .collect()
    }

    /// Training span standardized by its own distribution; the evaluation
    /// season standardized by the distribution of all prior seasons.
    fn standardized_pair(
        &self,
        train_seasons: &[String],
        eval_season: &str,
    ) -> Result<(LabeledData, LabeledData), PipelineError> {
        let train_raw = self.subset(train_seasons);
        let train_params = fit_standardizer(&train_raw)?;
        let train = apply_standardizer(&train_params, &train_raw)?;

        let prior = self.seasons_strictly_before(eval_season);
        let prior_params = fit_standardizer(&self.subset(&prior))?;
        let eval_raw = self.subset(&[eval_season.to_string()]);
        let eval = apply_standardizer(&prior_params, &eval_raw)?;

        Ok((labeled_eligible(&train)?, labeled_eligible(&eval)?))
    }
}

/// Eligible rows of a feature set as a learner-ready matrix.
fn labeled_eligible(set: &FeatureSet) -> Result<LabeledData, PipelineError> {
    let rows: Vec<Vec<f64>> = set
        .eligible_rows()
        .map(|r| r.x.as_ref().unwrap().clone())
        .collect();
    if rows.is_empty() {
        return Err(PipelineError::Data(
            "a pipeline split contains no eligible feature rows".into(),
        ));
    }
    let y: Vec<bool> = set.eligible_rows().map(|r| r.y).collect();
    let x = Matrix::from_rows(rows).map_err(|e| PipelineError::Internal(e.to_string()))?;
    LabeledData::new(set.feature_names.clone(), x, y)
        .map_err(|e| PipelineError::Internal(e.to_string()))
}

fn ensure_out_dir(config: &PipelineConfig) -> Result<(), PipelineError> {
    std::fs::create_dir_all(&config.out_dir).map_err(|e| {
        PipelineError::Usage(format!(
            "cannot create output directory {}: {e}",
            config.out_dir.display()
        ))
    })
}

/// `ingest`: join games with odds and persist the matched-game table.
pub fn run_ingest(config: &PipelineConfig) -> Result<JoinReport, PipelineError> {
    require_file(&config.games_csv)?;
    require_file(&config.odds_csv)?;
    let games = csvio::load_games(&config.games_csv, &config.schema())?;
    let odds = csvio::load_odds(&config.odds_csv)?;
    let (matched, report) = join_games_odds(&games, &odds);

    ensure_out_dir(config)?;
    csvio::write_matched_games(&config.out_dir.join(MATCHED_GAMES), &matched, &config.schema())?;
    write_json(&config.out_dir.join(JOIN_REPORT), &report)?;

    if report.unmatched_games > 0 {
        eprintln!(
            "warning: {} game(s) without a market line were excluded",
            report.unmatched_games
        );
    }
    if report.orphan_lines > 0 {
        eprintln!(
            "warning: {} market line(s) had no matching game",
            report.orphan_lines
        );
    }
    if report.empty_join {
        eprintln!("warning: empty join — no game matched any market line");
    }
    println!(
        "ingest: matched {} of {} games ({} lines)",
        report.matched, report.games_in, report.lines_in
    );
    Ok(report)
}

/// `features`: build the feature matrix, screen for covariate shift against
/// the validation season, and persist the surviving features.
pub fn run_features(config: &PipelineConfig) -> Result<(), PipelineError> {
    require_file(&config.games_csv)?;
    let schema = config.schema();
    let games = csvio::load_games(&config.games_csv, &schema)?;
    let seasons = season_order(&games);
    validate_splits(&seasons, config)?;

    let mut standings = BTreeMap::new();
    for season in &seasons {
        let table = season_standings(&games, season)
            .map_err(|e| PipelineError::Internal(e.to_string()))?;
        standings.insert(season.clone(), table);
    }
    let set = build_feature_matrix(&games, &standings, &schema)?;

    let by_season = |list: &[String]| -> FeatureSet {
        let rows = set
            .rows
            .iter()
            .zip(&games)
            .filter(|(_, g)| list.contains(&g.season))
            .map(|(r, _)| r.clone())
            .collect();
        FeatureSet {
            feature_names: set.feature_names.clone(),
            rows,
        }
    };
    let train = by_season(&config.splits.initial_train);
    let validation = by_season(std::slice::from_ref(&config.splits.validation));
    let screen = shift_screen(&train, &validation, config.ks_alpha)?;

    ensure_out_dir(config)?;
    csvio::write_shift_report(&config.out_dir.join(SHIFT_REPORT), &screen.tests)?;
    if screen.kept.is_empty() {
        eprintln!("warning: covariate-shift screen dropped every feature");
        return Err(PipelineError::Data(
            "no features survived the covariate-shift screen".into(),
        ));
    }

    let retained = set.retain_features(&screen.kept)?;
    csvio::write_features(&config.out_dir.join(FEATURES), &retained)?;

    let train_retained = train.retain_features(&screen.kept)?;
    let params = fit_standardizer(&train_retained)?;
    write_json(&config.out_dir.join(STANDARDIZER), &params)?;

    println!(
        "features: kept {} of {} features; {} rows ({} eligible)",
        screen.kept.len(),
        set.feature_names.len(),
        retained.rows.len(),
        retained.eligible_rows().count()
    );
    Ok(())
}

pub fn selection_path(config: &PipelineConfig, branch: Branch) -> PathBuf {
    config
        .out_dir
        .join(format!("selection_{}.json", branch.as_str()))
}

/// `select`: run filter -> SFS -> grid search -> test scoring per branch and
/// persist each branch's selection artifact.
pub fn run_select(config: &PipelineConfig) -> Result<(), PipelineError> {
    let ctx = DataContext::load(config)?;
    let splits = &config.splits;
    let (train, validation) =
        ctx.standardized_pair(&splits.initial_train, &splits.validation)?;

    // The redundancy filter is metric-free preprocessing shared by branches.
    let subset_a = correlation_filter(&train, config.spearman_threshold)?;

    for &branch in &config.branches {
        let spec = config.metric_for(branch);
        let sfs_learner = LogisticRegression::new(config.lr.sfs_hyper());
        let sfs_out = sfs(&sfs_learner, &spec, &subset_a, &train, &validation)?;

        let lr_config = config.lr.clone();
        let factory = move |point: &BTreeMap<String, f64>,
                            seed: u64|
              -> Box<dyn calibet_core::learners::Learner> {
            Box::new(LogisticRegression::new(
                lr_config.hyper_from_point(point, seed),
            ))
        };
        let grid_out = grid_hpo(
            &factory,
            &config.lr.grid(),
            &spec,
            &sfs_out.subset,
            &train,
            &validation,
        )?;
        if grid_out.failed_points > 0 {
            eprintln!(
                "warning: {} grid point(s) diverged and were scored worst-possible",
                grid_out.failed_points
            );
        }

        let (extended, test) = ctx.standardized_pair(&splits.extended_train(), &splits.test)?;
        let ext = extended.project(&sfs_out.subset)?;
        let tst = test.project(&sfs_out.subset)?;
        let hyper = config
            .lr
            .hyper_from_point(&grid_out.hyper, *config.lr.seeds.first().unwrap());
        let model = lr_fit(&ext.x, &ext.y, &hyper)?;
        let preds = lr_predict_proba(&model, &tst.x)?;
        let test_score = spec
            .score(&preds, &tst.y)
            .map_err(|e| PipelineError::Data(e.to_string()))?;

        let mut candidates = BTreeMap::new();
        candidates.insert(LogisticRegression::ID.to_string(), test_score);
        let winner = select_model(&candidates, &spec)?;

        let outcome = SelectionOutcome {
            branch: branch.as_str().to_string(),
            learner: winner,
            features: sfs_out.subset.clone(),
            hyper: grid_out.hyper.clone(),
            val_score: grid_out.score,
            test_score,
            evaluations_count: sfs_out.evaluations + grid_out.evaluations,
        };
        write_json(&selection_path(config, branch), &outcome)?;
        println!(
            "select[{}]: {} features {:?}, val={:.4}, test={:.4}",
            branch.as_str(),
            outcome.learner,
            outcome.features,
            outcome.val_score,
            outcome.test_score
        );
    }
    Ok(())
}

/// Audit artifact: the fitted weights with their hyperparameters and column
/// names, enough to replay any prediction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub beta: Vec<f64>,
    pub hyper: LrHyper,
    pub feature_names: Vec<String>,
}

fn fit_final_model(
    config: &PipelineConfig,
    ctx: &DataContext,
    selection: &SelectionOutcome,
) -> Result<(LrModel, Vec<String>), PipelineError> {
    let final_raw = ctx.subset(&config.splits.final_train());
    let params = fit_standardizer(&final_raw)?;
    let final_train = labeled_eligible(&apply_standardizer(&params, &final_raw)?)?;
    let train = final_train.project(&selection.features)?;
    let hyper = config
        .lr
        .hyper_from_point(&selection.hyper, *config.lr.seeds.first().unwrap());
    let model = lr_fit(&train.x, &train.y, &hyper)?;
    Ok((model, selection.features.clone()))
}

/// Forecast map for the simulation season: eligible rows only.
fn simulation_forecasts(
    config: &PipelineConfig,
    ctx: &DataContext,
    model: &LrModel,
    features: &[String],
) -> Result<BTreeMap<String, f64>, PipelineError> {
    let splits = &config.splits;
    let prior = ctx.seasons_strictly_before(&splits.simulation);
    let params = fit_standardizer(&ctx.subset(&prior))?;
    let sim_raw = ctx.subset(std::slice::from_ref(&splits.simulation));
    let sim_std = apply_standardizer(&params, &sim_raw)?;
    let eligible: Vec<_> = sim_std.eligible_rows().collect();
    if eligible.is_empty() {
        return Ok(BTreeMap::new());
    }
    let idx: Vec<usize> = features
        .iter()
        .map(|name| {
            sim_std
                .feature_names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| PipelineError::Internal(format!("feature '{name}' missing")))
        })
        .collect::<Result<_, _>>()?;
    let rows: Vec<Vec<f64>> = eligible
        .iter()
        .map(|r| {
            let x = r.x.as_ref().unwrap();
            idx.iter().map(|&i| x[i]).collect()
        })
        .collect();
    let x = Matrix::from_rows(rows).map_err(|e| PipelineError::Internal(e.to_string()))?;
    let preds = lr_predict_proba(model, &x).map_err(|e| PipelineError::Internal(e.to_string()))?;
    Ok(eligible
        .iter()
        .zip(preds)
        .map(|(r, p)| (r.game_id.clone(), p))
        .collect())
}

pub fn backtest_dir(config: &PipelineConfig, branch: Branch, rule: &str) -> PathBuf {
    config
        .out_dir
        .join(format!("backtest_{}_{}", branch.as_str(), rule))
}

/// `backtest`: fit the selected model on the final training span, predict the
/// simulation season, run the bankroll simulation, and emit all artifacts.
pub fn run_backtest(
    config: &PipelineConfig,
    branch_filter: Option<Branch>,
    rule_filter: Option<String>,
    bankroll_override: Option<f64>,
) -> Result<(), PipelineError> {
    let branches: Vec<Branch> = match branch_filter {
        Some(b) => vec![b],
        None => config.branches.clone(),
    };
    let rules: Vec<(String, StakeRule)> = match &rule_filter {
        Some(name) => {
            let rule = config
                .stake_rules
                .get(name)
                .ok_or_else(|| {
                    PipelineError::Usage(format!(
                        "unknown stake rule '{name}'; configured rules: {}",
                        config
                            .stake_rules
                            .keys()
                            .cloned()
                            .collect::<Vec<_>>()
                            .join(", ")
                    ))
                })?
                .to_rule();
            vec![(name.clone(), rule)]
        }
        None => config
            .stake_rules
            .iter()
            .map(|(name, rule)| (name.clone(), rule.to_rule()))
            .collect(),
    };
    let bankroll = Money::from_dollars(bankroll_override.unwrap_or(config.initial_bankroll));
    if !bankroll.is_positive() {
        return Err(PipelineError::Usage("bankroll must be positive".into()));
    }

    let ctx = DataContext::load(config)?;
    let matched_path = config.out_dir.join(MATCHED_GAMES);
    if !matched_path.is_file() {
        return Err(PipelineError::Usage(format!(
            "artifact not found: {} (run `ingest` first)",
            matched_path.display()
        )));
    }
    let matched = csvio::read_matched_games(&matched_path, &config.schema())?;
    let sim_games: Vec<MatchedGame> = matched
        .into_iter()
        .filter(|m| m.game.season == config.splits.simulation)
        .collect();
    if sim_games.is_empty() {
        return Err(PipelineError::Data(format!(
            "no matched games in simulation season '{}'",
            config.splits.simulation
        )));
    }

    for branch in branches {
        let selection: SelectionOutcome = read_json(&selection_path(config, branch))?;
        let (model, features) = fit_final_model(config, &ctx, &selection)?;
        let forecasts_by_id = simulation_forecasts(config, &ctx, &model, &features)?;
        let forecasts: Vec<Option<f64>> = sim_games
            .iter()
            .map(|m| forecasts_by_id.get(&m.game.game_id).copied())
            .collect();
        let dates: Vec<_> = sim_games.iter().map(|m| m.game.date).collect();

        for (rule_name, rule) in &rules {
            let (ledger, report) =
                simulate(&sim_games, &forecasts, rule, bankroll, false, config.bins)
                    .map_err(|e| PipelineError::Internal(e.to_string()))?;

            let dir = backtest_dir(config, branch, rule_name);
            std::fs::create_dir_all(&dir)
                .map_err(|e| PipelineError::Data(format!("cannot create {}: {e}", dir.display())))?;
            csvio::write_ledger(&dir.join("ledger.csv"), &ledger, &dates)?;
            write_json(&dir.join("report.json"), &report)?;
            csvio::write_bankroll(&dir.join("bankroll.csv"), &ledger)?;
            csvio::write_scatter(&dir.join("scatter.csv"), &ledger)?;

            let (preds, labels): (Vec<f64>, Vec<bool>) = sim_games
                .iter()
                .zip(&forecasts)
                .filter_map(|(g, f)| f.map(|p| (p, g.game.home_won)))
                .unzip();
            if !preds.is_empty() {
                let bins = aggregate_bins(&preds, &labels, config.bins)
                    .map_err(|e| PipelineError::Internal(e.to_string()))?;
                csvio::write_reliability(&dir.join("reliability.csv"), &reliability_table(&bins))?;
            }
            write_json(
                &dir.join("model.json"),
                &ModelArtifact {
                    beta: model.beta.clone(),
                    hyper: model.hyper,
                    feature_names: features.clone(),
                },
            )?;
            println!(
                "backtest[{}/{}]: roi={:.2}%, bet on {}/{} games, final={:.2}",
                branch.as_str(),
                rule_name,
                report.roi,
                report.games_bet,
                report.games_total,
                report.final_bankroll
            );
        }
    }
    Ok(())
}

/// `report`: print a comparison table across all completed backtests.
pub fn run_report(config: &PipelineConfig) -> Result<(), PipelineError> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(&config.out_dir)
        .map_err(|e| {
            PipelineError::Usage(format!(
                "cannot read output directory {}: {e}",
                config.out_dir.display()
            ))
        })?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("backtest_"))
        })
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(PipelineError::Usage(format!(
            "no backtest artifacts under {} (run `backtest` first)",
            config.out_dir.display()
        )));
    }

    let fmt_opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"));
    println!(
        "{:<32} {:>9} {:>12} {:>11} {:>9} {:>8} {:>12}",
        "system", "roi%", "%games_bet", "%bets_won", "acc%", "ece%", "final"
    );
    for dir in dirs {
        let report: calibet_core::backtest::BacktestReport = read_json(&dir.join("report.json"))?;
        let name = dir.file_name().unwrap().to_string_lossy().to_string();
        println!(
            "{:<32} {:>9.2} {:>12} {:>11} {:>9} {:>8} {:>12.2}",
            name,
            report.roi,
            fmt_opt(report.pct_games_bet),
            fmt_opt(report.pct_bets_won),
            fmt_opt(report.accuracy.map(|a| a * 100.0)),
            fmt_opt(report.classwise_ece.map(|e| e * 100.0)),
            report.final_bankroll
        );
    }
    Ok(())
}
