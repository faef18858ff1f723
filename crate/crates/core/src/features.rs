//! Feature engineering over chronologically ordered games: season-to-date
//! average out-performance differentials, the previous-season winning
//! percentage differential, eligibility flagging, standardization, and the
//! two-sample Kolmogorov-Smirnov covariate-shift screen.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use serde::{Deserialize, Serialize};

use crate::data::{BoxStats, GameRecord, StatSchema};

/// Name of the engineered previous-season winning-percentage differential,
/// appended after the per-stat features.
pub const PREV_SEASON_FEATURE: &str = "prev_season_win_pct";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FeatureError {
    SeasonMismatch,
    SchemaMismatch,
    NoPriorGames,
    MissingPreviousSeason,
    /// A feature with zero variance cannot be standardized; carries the name.
    ZeroVarianceFeature(String),
    /// Standardization params do not cover this feature.
    UnknownFeature(String),
    /// KS screening needs at least 20 points per sample.
    SampleTooSmall,
    EmptyInput,
}

impl fmt::Display for FeatureError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureError::SeasonMismatch => write!(f, "game season does not match rolling state"),
            FeatureError::SchemaMismatch => write!(f, "stat vector does not match the schema"),
            FeatureError::NoPriorGames => write!(f, "team has no prior games this season"),
            FeatureError::MissingPreviousSeason => {
                write!(f, "team has no previous-season record")
            }
            FeatureError::ZeroVarianceFeature(name) => {
                write!(f, "feature '{name}' has zero variance")
            }
            FeatureError::UnknownFeature(name) => {
                write!(f, "feature '{name}' missing from standardization params")
            }
            FeatureError::SampleTooSmall => write!(f, "KS samples need at least 20 points"),
            FeatureError::EmptyInput => write!(f, "empty row set"),
        }
    }
}

/// One team's season-to-date accumulation of (own stat - opponent stat).
#[derive(Debug, Clone, PartialEq)]
pub struct TeamRollingState {
    pub team: String,
    pub season: String,
    pub games_played: u32,
    /// Aligned to the stat schema, like `BoxStats`.
    pub cumulative_diff: Vec<f64>,
}

impl TeamRollingState {
    pub fn new(team: &str, season: &str, schema: &StatSchema) -> Self {
        TeamRollingState {
            team: team.to_owned(),
            season: season.to_owned(),
            games_played: 0,
            cumulative_diff: alloc::vec![0.0; schema.len()],
        }
    }
}

/// Fold one game into a team's rolling state. The game must belong to the
/// state's season and the stat vectors to the state's schema.
pub fn update_rolling(
    state: &mut TeamRollingState,
    season: &str,
    own: &BoxStats,
    opp: &BoxStats,
) -> Result<(), FeatureError> {
    if season != state.season {
        return Err(FeatureError::SeasonMismatch);
    }
    if own.0.len() != state.cumulative_diff.len() || opp.0.len() != state.cumulative_diff.len() {
        return Err(FeatureError::SchemaMismatch);
    }
    for (acc, (o, p)) in state.cumulative_diff.iter_mut().zip(own.0.iter().zip(&opp.0)) {
        *acc += o - p;
    }
    state.games_played += 1;
    Ok(())
}

/// Home-minus-away difference of the two teams' average out-performance
/// values, one entry per stat.
pub fn outperformance_features(
    home: &TeamRollingState,
    away: &TeamRollingState,
) -> Result<Vec<f64>, FeatureError> {
    if home.games_played == 0 || away.games_played == 0 {
        return Err(FeatureError::NoPriorGames);
    }
    let hn = home.games_played as f64;
    let an = away.games_played as f64;
    Ok(home
        .cumulative_diff
        .iter()
        .zip(&away.cumulative_diff)
        .map(|(h, a)| h / hn - a / an)
        .collect())
}

/// Home-minus-away previous-season winning percentage.
pub fn prev_season_feature(
    prev_standings: &BTreeMap<String, f64>,
    home: &str,
    away: &str,
) -> Result<f64, FeatureError> {
    let h = prev_standings
        .get(home)
        .ok_or(FeatureError::MissingPreviousSeason)?;
    let a = prev_standings
        .get(away)
        .ok_or(FeatureError::MissingPreviousSeason)?;
    Ok(h - a)
}

/// One game's feature vector and label.
///
/// `x` is `None` when the features are undefined (a team with no prior games
/// this season, or no previous-season record). `eligible` additionally
/// requires both teams to have at least ten prior games this season; rows
/// stay in the output either way so downstream stages can count the skips.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub game_id: String,
    pub x: Option<Vec<f64>>,
    pub y: bool,
    pub eligible: bool,
}

/// A feature matrix with its column names.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub feature_names: Vec<String>,
    pub rows: Vec<FeatureRow>,
}

impl FeatureSet {
    /// Rows usable for fitting: eligible with a defined feature vector.
    pub fn eligible_rows(&self) -> impl Iterator<Item = &FeatureRow> {
        self.rows.iter().filter(|r| r.eligible && r.x.is_some())
    }

    /// Values of one feature column over the eligible rows.
    pub fn eligible_column(&self, feature: &str) -> Option<Vec<f64>> {
        let idx = self.feature_names.iter().position(|n| n == feature)?;
        Some(
            self.eligible_rows()
                .map(|r| r.x.as_ref().unwrap()[idx])
                .collect(),
        )
    }

    /// Project onto a subset of features (in the given order). Rows keep
    /// their eligibility and labels.
    pub fn retain_features(&self, keep: &[String]) -> Result<FeatureSet, FeatureError> {
        let idx: Vec<usize> = keep
            .iter()
            .map(|name| {
                self.feature_names
                    .iter()
                    .position(|n| n == name)
                    .ok_or_else(|| FeatureError::UnknownFeature(name.clone()))
            })
            .collect::<Result<_, _>>()?;
        let rows = self
            .rows
            .iter()
            .map(|r| FeatureRow {
                game_id: r.game_id.clone(),
                x: r
                    .x
                    .as_ref()
                    .map(|x| idx.iter().map(|&i| x[i]).collect::<Vec<f64>>()),
                y: r.y,
                eligible: r.eligible,
            })
            .collect();
        Ok(FeatureSet {
            feature_names: keep.to_vec(),
            rows,
        })
    }
}

/// Number of prior season games both teams need before a row is eligible.
pub const MIN_PRIOR_GAMES: u32 = 10;

/// Build the feature matrix in one chronological pass.
///
/// Each game's features are computed from strictly earlier games only: the
/// rolling states update *after* the row is emitted, so there is no target
/// leakage. Ineligible games still update state. `standings` maps each season
/// label to that season's final table; a season's "previous season" is the one
/// preceding it in first-appearance order of the (sorted) game list.
pub fn build_feature_matrix(
    games: &[GameRecord],
    standings: &BTreeMap<String, BTreeMap<String, f64>>,
    schema: &StatSchema,
) -> Result<FeatureSet, FeatureError> {
    let mut feature_names: Vec<String> = schema.names().map(|s| s.to_owned()).collect();
    feature_names.push(PREV_SEASON_FEATURE.to_owned());

    let mut season_order: Vec<&str> = Vec::new();
    for g in games {
        if !season_order.contains(&g.season.as_str()) {
            season_order.push(&g.season);
        }
    }
    let prev_of = |season: &str| -> Option<&str> {
        let pos = season_order.iter().position(|s| *s == season)?;
        if pos == 0 {
            None
        } else {
            Some(season_order[pos - 1])
        }
    };

    let mut states: BTreeMap<String, TeamRollingState> = BTreeMap::new();
    let mut rows = Vec::with_capacity(games.len());
    let mut last_date = None;
    for g in games {
        debug_assert!(
            last_date.is_none_or(|d| d <= g.date),
            "games must be chronologically sorted"
        );
        last_date = Some(g.date);

        for team in [&g.home_team, &g.away_team] {
            let stale = states
                .get(team.as_str())
                .is_none_or(|s| s.season != g.season);
            if stale {
                states.insert(team.clone(), TeamRollingState::new(team, &g.season, schema));
            }
        }

        let prev = prev_of(&g.season).and_then(|s| standings.get(s));
        let home_state = &states[g.home_team.as_str()];
        let away_state = &states[g.away_team.as_str()];

        let x = match prev {
            Some(table)
                if home_state.games_played > 0
                    && away_state.games_played > 0
                    && table.contains_key(&g.home_team)
                    && table.contains_key(&g.away_team) =>
            {
                let mut v = outperformance_features(home_state, away_state)?;
                v.push(prev_season_feature(table, &g.home_team, &g.away_team)?);
                Some(v)
            }
            _ => None,
        };
        let eligible = x.is_some()
            && home_state.games_played >= MIN_PRIOR_GAMES
            && away_state.games_played >= MIN_PRIOR_GAMES;

        rows.push(FeatureRow {
            game_id: g.game_id.clone(),
            x,
            y: g.home_won,
            eligible,
        });

        let home = states.get_mut(g.home_team.as_str()).unwrap();
        update_rolling(home, &g.season, &g.home_stats, &g.away_stats)?;
        let away = states.get_mut(g.away_team.as_str()).unwrap();
        update_rolling(away, &g.season, &g.away_stats, &g.home_stats)?;
    }

    Ok(FeatureSet {
        feature_names,
        rows,
    })
}

/// Per-feature mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub feature_names: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Fit standardization parameters on the eligible rows of a feature set.
pub fn fit_standardizer(set: &FeatureSet) -> Result<StandardizationParams, FeatureError> {
    let xs: Vec<&Vec<f64>> = set.eligible_rows().map(|r| r.x.as_ref().unwrap()).collect();
    if xs.len() < 2 {
        return Err(FeatureError::EmptyInput);
    }
    let n = xs.len() as f64;
    let d = set.feature_names.len();
    let mut mean = alloc::vec![0.0; d];
    let mut std = alloc::vec![0.0; d];
    for j in 0..d {
        let sum: f64 = xs.iter().map(|x| x[j]).sum();
        mean[j] = sum / n;
        let ss: f64 = xs.iter().map(|x| (x[j] - mean[j]) * (x[j] - mean[j])).sum();
        std[j] = libm::sqrt(ss / n);
        if std[j] <= 0.0 || std[j].is_nan() {
            return Err(FeatureError::ZeroVarianceFeature(
                set.feature_names[j].clone(),
            ));
        }
    }
    Ok(StandardizationParams {
        feature_names: set.feature_names.clone(),
        mean,
        std,
    })
}

/// Scale every defined feature vector as `(x - mean) / std`. Params must
/// cover all of the set's features (they may cover more).
pub fn apply_standardizer(
    params: &StandardizationParams,
    set: &FeatureSet,
) -> Result<FeatureSet, FeatureError> {
    let idx: Vec<usize> = set
        .feature_names
        .iter()
        .map(|name| {
            params
                .feature_names
                .iter()
                .position(|p| p == name)
                .ok_or_else(|| FeatureError::UnknownFeature(name.clone()))
        })
        .collect::<Result<_, _>>()?;
    let rows = set
        .rows
        .iter()
        .map(|r| FeatureRow {
            game_id: r.game_id.clone(),
            x: r.x.as_ref().map(|x| {
                x.iter()
                    .zip(&idx)
                    .map(|(v, &i)| (v - params.mean[i]) / params.std[i])
                    .collect()
            }),
            y: r.y,
            eligible: r.eligible,
        })
        .collect();
    Ok(FeatureSet {
        feature_names: set.feature_names.clone(),
        rows,
    })
}

/// Outcome of one two-sample KS test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub critical: f64,
    pub drop: bool,
}

/// Asymptotic two-sample KS coefficient `c(alpha)`. Standard tabulated values
/// for the common levels; `sqrt(-ln(alpha/2)/2)` otherwise.
pub fn ks_coefficient(alpha: f64) -> f64 {
    assert!(alpha > 0.0 && alpha < 1.0, "alpha must be in (0, 1)");
    const TABLE: [(f64, f64); 6] = [
        (0.10, 1.224),
        (0.05, 1.358),
        (0.025, 1.48),
        (0.01, 1.628),
        (0.005, 1.731),
        (0.001, 1.949),
    ];
    for (a, c) in TABLE {
        if alpha == a {
            return c;
        }
    }
    libm::sqrt(-libm::log(alpha / 2.0) / 2.0)
}

/// Two-sample Kolmogorov-Smirnov test at significance `alpha`.
///
/// `D` is the supremum of |F_a - F_b| over the pooled sample points; the
/// decision is drop iff `D` exceeds `c(alpha) * sqrt((n+m)/(n*m))`.
pub fn ks_two_sample(a: &[f64], b: &[f64], alpha: f64) -> Result<KsResult, FeatureError> {
    if a.len() < 20 || b.len() < 20 {
        return Err(FeatureError::SampleTooSmall);
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_unstable_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_unstable_by(|p, q| p.partial_cmp(q).unwrap());

    let n = xs.len() as f64;
    let m = ys.len() as f64;
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xs.len() || j < ys.len() {
        let v = match (xs.get(i), ys.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => break,
        };
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        let gap = libm::fabs(i as f64 / n - j as f64 / m);
        if gap > d {
            d = gap;
        }
    }

    let critical = ks_coefficient(alpha) * libm::sqrt((n + m) / (n * m));
    Ok(KsResult {
        statistic: d,
        critical,
        drop: d > critical,
    })
}

/// Per-feature KS screen verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureShift {
    pub feature: String,
    pub statistic: f64,
    pub critical: f64,
    pub drop: bool,
}

/// Screen result: surviving feature list plus every per-feature test.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftScreen {
    pub kept: Vec<String>,
    pub tests: Vec<FeatureShift>,
}

/// Test every feature's training distribution against its validation
/// distribution; features showing shift at `alpha` are dropped.
pub fn shift_screen(
    train: &FeatureSet,
    val: &FeatureSet,
    alpha: f64,
) -> Result<ShiftScreen, FeatureError> {
    if train.feature_names != val.feature_names {
        return Err(FeatureError::SchemaMismatch);
    }
    if train.eligible_rows().next().is_none() || val.eligible_rows().next().is_none() {
        return Err(FeatureError::EmptyInput);
    }
    let mut kept = Vec::new();
    let mut tests = Vec::new();
    for name in &train.feature_names {
        let a = train.eligible_column(name).unwrap();
        let b = val.eligible_column(name).unwrap();
        let res = ks_two_sample(&a, &b, alpha)?;
        if !res.drop {
            kept.push(name.clone());
        }
        tests.push(FeatureShift {
            feature: name.clone(),
            statistic: res.statistic,
            critical: res.critical,
            drop: res.drop,
        });
    }
    Ok(ShiftScreen { kept, tests })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Date, StatDef, StatKind};
    use alloc::vec;

    fn schema2() -> StatSchema {
        StatSchema(vec![
            StatDef {
                name: "REB".to_owned(),
                kind: StatKind::Count,
            },
            StatDef {
                name: "AST".to_owned(),
                kind: StatKind::Count,
            },
        ])
    }

    fn game(
        id: &str,
        day: u8,
        season: &str,
        home: (&str, [f64; 2]),
        away: (&str, [f64; 2]),
        home_won: bool,
    ) -> GameRecord {
        GameRecord {
            game_id: id.to_owned(),
            date: Date::new(2016, 11, day).unwrap(),
            season: season.to_owned(),
            home_team: home.0.to_owned(),
            away_team: away.0.to_owned(),
            home_stats: BoxStats(home.1.to_vec()),
            away_stats: BoxStats(away.1.to_vec()),
            home_won,
        }
    }

    // Tiny deterministic generator for property-style tests.
    fn xorshift(state: &mut u64) -> u64 {
        let mut x = *state;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        *state = x;
        x
    }

    fn uniform(state: &mut u64) -> f64 {
        (xorshift(state) >> 11) as f64 / (1u64 << 53) as f64
    }

    fn normal(state: &mut u64) -> f64 {
        // Box-Muller.
        let u1 = uniform(state).max(1e-12);
        let u2 = uniform(state);
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
    }

    #[test]
    fn rolling_update_accumulates_differentials() {
        let schema = schema2();
        let mut state = TeamRollingState::new("AAA", "2016-17", &schema);
        update_rolling(
            &mut state,
            "2016-17",
            &BoxStats(vec![50.0, 20.0]),
            &BoxStats(vec![40.0, 22.0]),
        )
        .unwrap();
        assert_eq!(state.games_played, 1);
        assert_eq!(state.cumulative_diff, vec![10.0, -2.0]);

        update_rolling(
            &mut state,
            "2016-17",
            &BoxStats(vec![41.0, 25.0]),
            &BoxStats(vec![45.0, 25.0]),
        )
        .unwrap();
        assert_eq!(state.cumulative_diff, vec![6.0, -2.0]);
        assert_eq!(state.games_played, 2);
    }

    #[test]
    fn rolling_update_guards_season_and_schema() {
        let schema = schema2();
        let mut state = TeamRollingState::new("AAA", "2016-17", &schema);
        assert_eq!(
            update_rolling(
                &mut state,
                "2017-18",
                &BoxStats(vec![1.0, 2.0]),
                &BoxStats(vec![1.0, 2.0])
            ),
            Err(FeatureError::SeasonMismatch)
        );
        assert_eq!(
            update_rolling(
                &mut state,
                "2016-17",
                &BoxStats(vec![1.0]),
                &BoxStats(vec![1.0, 2.0])
            ),
            Err(FeatureError::SchemaMismatch)
        );
    }

    #[test]
    fn zero_differential_game_leaves_state_unchanged() {
        let schema = schema2();
        let mut state = TeamRollingState::new("AAA", "2016-17", &schema);
        update_rolling(
            &mut state,
            "2016-17",
            &BoxStats(vec![33.0, 11.0]),
            &BoxStats(vec![33.0, 11.0]),
        )
        .unwrap();
        assert_eq!(state.cumulative_diff, vec![0.0, 0.0]);
        assert_eq!(state.games_played, 1);
    }

    #[test]
    fn outperformance_is_home_minus_away_average() {
        let schema = schema2();
        let mut home = TeamRollingState::new("AAA", "s", &schema);
        home.games_played = 2;
        home.cumulative_diff = vec![6.0, 2.0];
        let mut away = TeamRollingState::new("BBB", "s", &schema);
        away.games_played = 1;
        away.cumulative_diff = vec![-1.0, 4.0];
        let f = outperformance_features(&home, &away).unwrap();
        assert_eq!(f, vec![3.0 - (-1.0), 1.0 - 4.0]);
    }

    #[test]
    fn outperformance_requires_prior_games() {
        let schema = schema2();
        let mut home = TeamRollingState::new("AAA", "s", &schema);
        home.games_played = 1;
        let away = TeamRollingState::new("BBB", "s", &schema);
        assert_eq!(
            outperformance_features(&home, &away),
            Err(FeatureError::NoPriorGames)
        );
    }

    #[test]
    fn outperformance_antisymmetry() {
        let schema = schema2();
        let mut a = TeamRollingState::new("AAA", "s", &schema);
        a.games_played = 3;
        a.cumulative_diff = vec![7.5, -2.25];
        let mut b = TeamRollingState::new("BBB", "s", &schema);
        b.games_played = 4;
        b.cumulative_diff = vec![-3.0, 9.0];
        let fwd = outperformance_features(&a, &b).unwrap();
        let rev = outperformance_features(&b, &a).unwrap();
        for (x, y) in fwd.iter().zip(&rev) {
            assert_eq!(*x, -*y);
        }
    }

    #[test]
    fn prev_season_differential() {
        let mut table = BTreeMap::new();
        table.insert("AAA".to_owned(), 0.70);
        table.insert("BBB".to_owned(), 0.45);
        let f = prev_season_feature(&table, "AAA", "BBB").unwrap();
        assert!((f - 0.25).abs() < 1e-12);
        assert_eq!(prev_season_feature(&table, "AAA", "AAA").unwrap(), 0.0);
        assert_eq!(
            prev_season_feature(&table, "AAA", "ZZZ"),
            Err(FeatureError::MissingPreviousSeason)
        );
    }

    fn mini_standings() -> BTreeMap<String, BTreeMap<String, f64>> {
        let mut prev = BTreeMap::new();
        prev.insert("AAA".to_owned(), 0.7);
        prev.insert("BBB".to_owned(), 0.5);
        prev.insert("CCC".to_owned(), 0.3);
        let mut standings = BTreeMap::new();
        standings.insert("2015-16".to_owned(), prev);
        standings
    }

    #[test]
    fn feature_matrix_matches_hand_computed_table() {
        // Three teams, four games; g3 and g4 rows verified by hand.
        let schema = schema2();
        let games = vec![
            game("g0", 1, "2015-16", ("AAA", [1.0, 1.0]), ("BBB", [1.0, 1.0]), true),
            game("g1", 3, "2016-17", ("AAA", [50.0, 10.0]), ("BBB", [40.0, 12.0]), true),
            game("g2", 4, "2016-17", ("BBB", [44.0, 9.0]), ("CCC", [46.0, 11.0]), false),
            game("g3", 5, "2016-17", ("CCC", [48.0, 7.0]), ("AAA", [42.0, 13.0]), false),
            game("g4", 6, "2016-17", ("AAA", [51.0, 8.0]), ("CCC", [47.0, 10.0]), true),
        ];
        let set = build_feature_matrix(&games, &mini_standings(), &schema).unwrap();
        assert_eq!(
            set.feature_names,
            vec!["REB".to_owned(), "AST".to_owned(), PREV_SEASON_FEATURE.to_owned()]
        );
        // 2015-16 has no previous season; first games of 2016-17 lack history.
        assert_eq!(set.rows[0].x, None);
        assert_eq!(set.rows[1].x, None);
        assert_eq!(set.rows[2].x, None);

        let g3 = set.rows[3].x.as_ref().unwrap();
        assert_eq!(&g3[..2], &[-8.0, 4.0]);
        assert!((g3[2] - (0.3 - 0.7)).abs() < 1e-12);
        assert!(!set.rows[3].eligible);

        let g4 = set.rows[4].x.as_ref().unwrap();
        assert_eq!(&g4[..2], &[-2.0, 4.0]);
        assert!((g4[2] - 0.4).abs() < 1e-12);
        assert!(set.rows[4].y);
    }

    #[test]
    fn eligibility_starts_at_the_eleventh_game() {
        let schema = schema2();
        let mut games = vec![game(
            "p1",
            1,
            "2015-16",
            ("AAA", [1.0, 1.0]),
            ("BBB", [1.0, 1.0]),
            true,
        )];
        for k in 0..12u8 {
            games.push(game(
                &alloc::format!("g{k:02}"),
                k + 2,
                "2016-17",
                ("AAA", [50.0, 20.0]),
                ("BBB", [45.0, 22.0]),
                k % 2 == 0,
            ));
        }
        let mut standings = mini_standings();
        standings
            .get_mut("2015-16")
            .unwrap()
            .insert("BBB".to_owned(), 0.5);
        let set = build_feature_matrix(&games, &standings, &schema).unwrap();
        // Row k (0-based within season) has k prior games per team.
        let season_rows = &set.rows[1..];
        assert!(!season_rows[9].eligible, "10th game must be ineligible");
        assert!(season_rows[9].x.is_some());
        assert!(season_rows[10].eligible, "11th game must be eligible");
    }

    #[test]
    fn features_use_only_strictly_earlier_games() {
        // Truncating the game list after any prefix leaves earlier rows
        // unchanged: no leakage from later games.
        let schema = schema2();
        let mut state = 7u64;
        let teams = ["AAA", "BBB", "CCC"];
        let mut games = vec![game(
            "p0",
            1,
            "2015-16",
            ("AAA", [1.0, 1.0]),
            ("BBB", [2.0, 2.0]),
            true,
        )];
        for k in 0..20u64 {
            let h = teams[(xorshift(&mut state) % 3) as usize];
            let mut a = teams[(xorshift(&mut state) % 3) as usize];
            if a == h {
                a = teams[(teams.iter().position(|t| *t == h).unwrap() + 1) % 3];
            }
            games.push(game(
                &alloc::format!("g{k:02}"),
                (k + 2) as u8,
                "2016-17",
                (h, [40.0 + uniform(&mut state) * 10.0, uniform(&mut state) * 5.0]),
                (a, [40.0 + uniform(&mut state) * 10.0, uniform(&mut state) * 5.0]),
                xorshift(&mut state).is_multiple_of(2),
            ));
        }
        let full = build_feature_matrix(&games, &mini_standings(), &schema).unwrap();
        for cut in [5usize, 12, 18] {
            let part = build_feature_matrix(&games[..cut], &mini_standings(), &schema).unwrap();
            for i in 0..cut {
                assert_eq!(full.rows[i], part.rows[i], "row {i} changed at cut {cut}");
            }
        }
    }

    #[test]
    fn rolling_average_matches_bruteforce_recomputation() {
        let schema = schema2();
        let mut state = 99u64;
        let teams = ["AAA", "BBB", "CCC"];
        let mut games = vec![game(
            "p0",
            1,
            "2015-16",
            ("AAA", [1.0, 1.0]),
            ("BBB", [2.0, 2.0]),
            true,
        )];
        for k in 0..24u64 {
            let h = teams[(xorshift(&mut state) % 3) as usize];
            let mut a = teams[(xorshift(&mut state) % 3) as usize];
            if a == h {
                a = teams[(teams.iter().position(|t| *t == h).unwrap() + 1) % 3];
            }
            games.push(game(
                &alloc::format!("g{k:02}"),
                (k + 2) as u8,
                "2016-17",
                (h, [uniform(&mut state) * 100.0, uniform(&mut state) * 30.0]),
                (a, [uniform(&mut state) * 100.0, uniform(&mut state) * 30.0]),
                xorshift(&mut state).is_multiple_of(2),
            ));
        }
        let set = build_feature_matrix(&games, &mini_standings(), &schema).unwrap();

        // Brute force: recompute each team's average differential from the
        // raw game list, in the same chronological order.
        let avg_before = |team: &str, upto: usize, stat: usize| -> Option<f64> {
            let mut sum = 0.0;
            let mut count = 0u32;
            for g in &games[..upto] {
                if g.season != "2016-17" {
                    continue;
                }
                if g.home_team == team {
                    sum += g.home_stats.0[stat] - g.away_stats.0[stat];
                    count += 1;
                } else if g.away_team == team {
                    sum += g.away_stats.0[stat] - g.home_stats.0[stat];
                    count += 1;
                }
            }
            (count > 0).then(|| sum / count as f64)
        };
        for (i, g) in games.iter().enumerate() {
            if let Some(x) = &set.rows[i].x {
                for (stat, &value) in x.iter().take(2).enumerate() {
                    let expect = avg_before(&g.home_team, i, stat).unwrap()
                        - avg_before(&g.away_team, i, stat).unwrap();
                    assert_eq!(value, expect, "game {i} stat {stat}");
                }
            }
        }
    }

    fn toy_set(values: &[(&str, [f64; 2], bool)]) -> FeatureSet {
        FeatureSet {
            feature_names: vec!["f1".to_owned(), "f2".to_owned()],
            rows: values
                .iter()
                .map(|(id, x, y)| FeatureRow {
                    game_id: (*id).to_owned(),
                    x: Some(x.to_vec()),
                    y: *y,
                    eligible: true,
                })
                .collect(),
        }
    }

    #[test]
    fn standardizer_hand_case() {
        let set = toy_set(&[("a", [1.0, 5.0], true), ("b", [3.0, 9.0], false)]);
        let params = fit_standardizer(&set).unwrap();
        assert_eq!(params.mean, vec![2.0, 7.0]);
        assert_eq!(params.std, vec![1.0, 2.0]);

        let out = apply_standardizer(&params, &set).unwrap();
        assert_eq!(out.rows[0].x.as_ref().unwrap(), &vec![-1.0, -1.0]);
        assert_eq!(out.rows[1].x.as_ref().unwrap(), &vec![1.0, 1.0]);
    }

    #[test]
    fn standardizer_rejects_constant_features() {
        let set = toy_set(&[("a", [1.0, 4.0], true), ("b", [1.0, 5.0], false)]);
        match fit_standardizer(&set) {
            Err(FeatureError::ZeroVarianceFeature(name)) => assert_eq!(name, "f1"),
            other => panic!("expected zero-variance error, got {other:?}"),
        }
    }

    #[test]
    fn standardize_fixed_point_and_roundtrip() {
        let mut state = 3u64;
        let rows: Vec<(String, Vec<f64>)> = (0..40)
            .map(|i| {
                (
                    alloc::format!("g{i}"),
                    vec![normal(&mut state) * 3.0 + 1.0, normal(&mut state) * 0.2 - 5.0],
                )
            })
            .collect();
        let set = FeatureSet {
            feature_names: vec!["f1".to_owned(), "f2".to_owned()],
            rows: rows
                .iter()
                .map(|(id, x)| FeatureRow {
                    game_id: id.clone(),
                    x: Some(x.clone()),
                    y: true,
                    eligible: true,
                })
                .collect(),
        };
        let params = fit_standardizer(&set).unwrap();
        let out = apply_standardizer(&params, &set).unwrap();
        let refit = fit_standardizer(&out).unwrap();
        for j in 0..2 {
            assert!(refit.mean[j].abs() < 1e-9);
            assert!((refit.std[j] - 1.0).abs() < 1e-9);
        }
        // Inverse transform recovers the inputs.
        for (row, (_, original)) in out.rows.iter().zip(&rows) {
            for (j, v) in row.x.as_ref().unwrap().iter().enumerate() {
                assert!((v * params.std[j] + params.mean[j] - original[j]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn standardizer_unknown_feature_errors() {
        let set = toy_set(&[("a", [1.0, 5.0], true), ("b", [3.0, 9.0], false)]);
        let params = StandardizationParams {
            feature_names: vec!["f1".to_owned()],
            mean: vec![0.0],
            std: vec![1.0],
        };
        assert_eq!(
            apply_standardizer(&params, &set),
            Err(FeatureError::UnknownFeature("f2".to_owned()))
        );
    }

    #[test]
    fn ks_identical_samples_keep() {
        let a: Vec<f64> = (0..50).map(|i| i as f64 * 0.3).collect();
        let res = ks_two_sample(&a, &a, 0.01).unwrap();
        assert_eq!(res.statistic, 0.0);
        assert!(!res.drop);
    }

    #[test]
    fn ks_interleaved_halves_keep() {
        let mut state = 11u64;
        let mut pool: Vec<f64> = (0..80).map(|_| normal(&mut state)).collect();
        pool.sort_unstable_by(|p, q| p.partial_cmp(q).unwrap());
        let a: Vec<f64> = pool.iter().step_by(2).copied().collect();
        let b: Vec<f64> = pool.iter().skip(1).step_by(2).copied().collect();
        let res = ks_two_sample(&a, &b, 0.01).unwrap();
        assert!(!res.drop, "D={} critical={}", res.statistic, res.critical);
    }

    #[test]
    fn ks_three_sigma_shift_drops() {
        let mut state = 42u64;
        let a: Vec<f64> = (0..200).map(|_| normal(&mut state)).collect();
        let b: Vec<f64> = a.iter().map(|v| v + 3.0).collect();
        let res = ks_two_sample(&a, &b, 0.01).unwrap();

        // Independent brute-force ECDF sweep.
        let mut brute: f64 = 0.0;
        for v in a.iter().chain(&b) {
            let fa = a.iter().filter(|x| **x <= *v).count() as f64 / a.len() as f64;
            let fb = b.iter().filter(|x| **x <= *v).count() as f64 / b.len() as f64;
            brute = brute.max((fa - fb).abs());
        }
        assert_eq!(res.statistic, brute);
        assert!((res.critical - 1.628 * libm::sqrt(2.0 / 200.0)).abs() < 1e-12);
        assert!(res.drop);
    }

    #[test]
    fn ks_small_samples_rejected() {
        let a = vec![0.0; 19];
        let b = vec![0.0; 25];
        assert_eq!(ks_two_sample(&a, &b, 0.01), Err(FeatureError::SampleTooSmall));
    }

    fn screen_sets(shift: &[f64]) -> (FeatureSet, FeatureSet) {
        let mut state = 5u64;
        let names: Vec<String> = (0..shift.len()).map(|i| alloc::format!("f{i}")).collect();
        let mk = |state: &mut u64, offsets: &[f64]| -> FeatureSet {
            FeatureSet {
                feature_names: names.clone(),
                rows: (0..60)
                    .map(|i| FeatureRow {
                        game_id: alloc::format!("g{i}"),
                        x: Some(offsets.iter().map(|o| normal(state) + o).collect()),
                        y: i % 2 == 0,
                        eligible: true,
                    })
                    .collect(),
            }
        };
        let zeros = vec![0.0; shift.len()];
        let train = mk(&mut state, &zeros);
        let val = mk(&mut state, shift);
        (train, val)
    }

    #[test]
    fn shift_screen_keeps_stable_features() {
        let (train, val) = screen_sets(&[0.0, 0.0, 0.0]);
        let screen = shift_screen(&train, &val, 0.01).unwrap();
        assert_eq!(screen.kept.len(), 3);
    }

    #[test]
    fn shift_screen_drops_exactly_the_shifted_feature() {
        let (train, val) = screen_sets(&[0.0, 3.0, 0.0]);
        let screen = shift_screen(&train, &val, 0.01).unwrap();
        assert_eq!(screen.kept, vec!["f0".to_owned(), "f2".to_owned()]);
        assert!(screen.tests[1].drop);
    }

    #[test]
    fn shift_screen_can_drop_everything() {
        let (train, val) = screen_sets(&[4.0, 4.0]);
        let screen = shift_screen(&train, &val, 0.01).unwrap();
        assert!(screen.kept.is_empty());
        assert_eq!(screen.tests.len(), 2);
    }
}
