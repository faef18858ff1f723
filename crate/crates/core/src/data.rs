//! Domain records for matched game/odds data: box-score schemas, game rows,
//! market lines, the game/odds join, and season standings.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use serde::{Deserialize, Serialize};

/// Calendar date with field-wise ordering. Parsing/formatting of the
/// `YYYY-MM-DD` wire form lives here so ledgers can be written from core
/// types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Date {
    pub year: i32,
    pub month: u8,
    pub day: u8,
}

impl Date {
    pub fn new(year: i32, month: u8, day: u8) -> Option<Self> {
        if !(1..=12).contains(&month) || day == 0 || day > days_in_month(year, month) {
            return None;
        }
        Some(Date { year, month, day })
    }
}

fn days_in_month(year: i32, month: u8) -> u8 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 => {
            let leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
            if leap {
                29
            } else {
                28
            }
        }
        _ => 0,
    }
}

impl fmt::Display for Date {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}-{:02}", self.year, self.month, self.day)
    }
}

impl core::str::FromStr for Date {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        let mut parts = s.split('-');
        let year = parts.next().ok_or(())?.parse::<i32>().map_err(|_| ())?;
        let month = parts.next().ok_or(())?.parse::<u8>().map_err(|_| ())?;
        let day = parts.next().ok_or(())?.parse::<u8>().map_err(|_| ())?;
        if parts.next().is_some() {
            return Err(());
        }
        Date::new(year, month, day).ok_or(())
    }
}

/// How a box-score stat is ranged, for validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatKind {
    /// Per-game team total (points, rebounds, ...); any finite value.
    Count,
    /// Percentage expressed in [0, 1].
    PercentUnit,
    /// Percentage expressed in [0, 100].
    PercentHundred,
}

impl StatKind {
    pub fn validate(self, value: f64) -> bool {
        match self {
            StatKind::Count => value.is_finite(),
            StatKind::PercentUnit => (0.0..=1.0).contains(&value),
            StatKind::PercentHundred => (0.0..=100.0).contains(&value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatDef {
    pub name: String,
    pub kind: StatKind,
}

/// The configured box-score stat list. Column order in files and feature
/// vectors follows declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatSchema(pub Vec<StatDef>);

impl StatSchema {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(|d| d.name.as_str())
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.0.iter().position(|d| d.name == name)
    }
}

/// One team's box-score totals for one game, aligned to the schema order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats(pub Vec<f64>);

impl BoxStats {
    pub fn get(&self, schema: &StatSchema, name: &str) -> Option<f64> {
        schema.position(name).map(|i| self.0[i])
    }
}

/// A single game: identity, participants, box scores, and outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameRecord {
    pub game_id: String,
    pub date: Date,
    pub season: String,
    pub home_team: String,
    pub away_team: String,
    pub home_stats: BoxStats,
    pub away_stats: BoxStats,
    pub home_won: bool,
}

/// Closing moneyline prices for one game, decimal format, both > 1.0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketLine {
    pub game_id: String,
    pub home_odds: f64,
    pub away_odds: f64,
}

/// A game joined with its market line.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedGame {
    pub game: GameRecord,
    pub line: MarketLine,
}

/// Join outcome counters; non-fatal issues surface here rather than erroring.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinReport {
    pub games_in: usize,
    pub lines_in: usize,
    pub matched: usize,
    pub unmatched_games: usize,
    pub orphan_lines: usize,
    pub empty_join: bool,
}

/// Match games to their market lines on `game_id`.
///
/// Games without a line are dropped (and counted); lines without a game are
/// counted as orphans. Output order is chronological: ascending date, ties
/// broken by `game_id`.
pub fn join_games_odds(games: &[GameRecord], odds: &[MarketLine]) -> (Vec<MatchedGame>, JoinReport) {
    let mut by_id: BTreeMap<&str, &MarketLine> = BTreeMap::new();
    for line in odds {
        by_id.insert(line.game_id.as_str(), line);
    }
    let mut matched = Vec::new();
    let mut unmatched_games = 0usize;
    for game in games {
        match by_id.remove(game.game_id.as_str()) {
            Some(line) => matched.push(MatchedGame {
                game: game.clone(),
                line: line.clone(),
            }),
            None => unmatched_games += 1,
        }
    }
    matched.sort_by(|a, b| {
        a.game
            .date
            .cmp(&b.game.date)
            .then_with(|| a.game.game_id.cmp(&b.game.game_id))
    });
    let report = JoinReport {
        games_in: games.len(),
        lines_in: odds.len(),
        matched: matched.len(),
        unmatched_games,
        orphan_lines: by_id.len(),
        empty_join: matched.is_empty(),
    };
    (matched, report)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StandingsError {
    /// No games carry the requested season label.
    UnknownSeason,
}

impl fmt::Display for StandingsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StandingsError::UnknownSeason => write!(f, "season not present in the data"),
        }
    }
}

/// Winning percentage per team over one season: wins / games played.
pub fn season_standings(
    games: &[GameRecord],
    season: &str,
) -> Result<BTreeMap<String, f64>, StandingsError> {
    let mut played: BTreeMap<&str, (u32, u32)> = BTreeMap::new();
    let mut seen = false;
    for g in games.iter().filter(|g| g.season == season) {
        seen = true;
        let home = played.entry(g.home_team.as_str()).or_insert((0, 0));
        home.1 += 1;
        if g.home_won {
            home.0 += 1;
        }
        let away = played.entry(g.away_team.as_str()).or_insert((0, 0));
        away.1 += 1;
        if !g.home_won {
            away.0 += 1;
        }
    }
    if !seen {
        return Err(StandingsError::UnknownSeason);
    }
    Ok(played
        .into_iter()
        .map(|(team, (wins, total))| (String::from(team), wins as f64 / total as f64))
        .collect())
}
