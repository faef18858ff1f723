//! CSV ingestion and artifact emission. All tables are UTF-8,
//! comma-delimited, header row mandatory. Floats are written in shortest
//! round-trip form so artifact bytes are identical across runs and platforms.

use std::collections::BTreeMap;
use std::path::Path;

use calibet_core::backtest::Ledger;
use calibet_core::calibration::ReliabilityRow;
use calibet_core::data::{
    BoxStats, Date, GameRecord, MarketLine, MatchedGame, StatSchema,
};
use calibet_core::features::{FeatureRow, FeatureSet, FeatureShift};
use calibet_core::market::implied_probability;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: missing column '{column}'")]
    MissingColumn { path: String, column: String },
    #[error("{path}: row {row}, column '{column}': {detail}")]
    UnparseableValue {
        path: String,
        row: usize,
        column: String,
        detail: String,
    },
    #[error("{path}: duplicate game_id '{id}'")]
    DuplicateGameId { path: String, id: String },
    #[error("{path}: row {row}, column '{column}': odds must be decimal and > 1.0")]
    OddsNotAboveOne {
        path: String,
        row: usize,
        column: String,
    },
    #[error("seasons '{0}' and '{1}' interleave in time")]
    SeasonsInterleaved(String, String),
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

struct Columns {
    index: BTreeMap<String, usize>,
    path: String,
}

impl Columns {
    fn new(path: &Path, headers: &csv::StringRecord) -> Columns {
        let mut index = BTreeMap::new();
        for (i, name) in headers.iter().enumerate() {
            index.entry(name.to_string()).or_insert(i);
        }
        Columns {
            index,
            path: path.display().to_string(),
        }
    }

    fn get(&self, name: &str) -> Result<usize, DataError> {
        self.index.get(name).copied().ok_or(DataError::MissingColumn {
            path: self.path.clone(),
            column: name.to_string(),
        })
    }

    fn field<'r>(
        &self,
        record: &'r csv::StringRecord,
        row: usize,
        name: &str,
    ) -> Result<&'r str, DataError> {
        let idx = self.get(name)?;
        record.get(idx).ok_or(DataError::UnparseableValue {
            path: self.path.clone(),
            row,
            column: name.to_string(),
            detail: "missing field".into(),
        })
    }

    fn unparseable(&self, row: usize, column: &str, detail: &str) -> DataError {
        DataError::UnparseableValue {
            path: self.path.clone(),
            row,
            column: column.to_string(),
            detail: detail.to_string(),
        }
    }
}

/// Load and validate the games file. Rows come back sorted by (date,
/// game_id); every stat passes its schema range check and the seasons'
/// date windows must not interleave. Row numbers in errors are 1-based data
/// rows (the header is row 0).
pub fn load_games(path: &Path, schema: &StatSchema) -> Result<Vec<GameRecord>, DataError> {
    let mut reader = csv::Reader::from_path(path)?;
    let columns = Columns::new(path, reader.headers()?);
    for required in ["game_id", "date", "season", "home_team", "away_team", "home_won"] {
        columns.get(required)?;
    }
    for stat in schema.names() {
        columns.get(&format!("home_{stat}"))?;
        columns.get(&format!("away_{stat}"))?;
    }

    let mut games = Vec::new();
    let mut seen = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let game_id = columns.field(&record, row, "game_id")?.to_string();
        if seen.insert(game_id.clone(), row).is_some() {
            return Err(DataError::DuplicateGameId {
                path: path.display().to_string(),
                id: game_id,
            });
        }
        let date: Date = columns
            .field(&record, row, "date")?
            .parse()
            .map_err(|()| columns.unparseable(row, "date", "expected YYYY-MM-DD"))?;
        let season = columns.field(&record, row, "season")?.to_string();
        let home_team = columns.field(&record, row, "home_team")?.to_string();
        let away_team = columns.field(&record, row, "away_team")?.to_string();
        if home_team == away_team {
            return Err(columns.unparseable(row, "away_team", "equals home_team"));
        }
        let home_won = match columns.field(&record, row, "home_won")? {
            "0" => false,
            "1" => true,
            other => {
                return Err(columns.unparseable(
                    row,
                    "home_won",
                    &format!("expected 0 or 1, got '{other}'"),
                ))
            }
        };
        let parse_stats = |prefix: &str| -> Result<BoxStats, DataError> {
            let mut values = Vec::with_capacity(schema.len());
            for def in &schema.0 {
                let column = format!("{prefix}_{}", def.name);
                let raw = columns.field(&record, row, &column)?;
                let value: f64 = raw
                    .parse()
                    .map_err(|_| columns.unparseable(row, &column, "expected a number"))?;
                if !def.kind.validate(value) {
                    return Err(columns.unparseable(row, &column, "value out of range"));
                }
                values.push(value);
            }
            Ok(BoxStats(values))
        };
        let home_stats = parse_stats("home")?;
        let away_stats = parse_stats("away")?;
        games.push(GameRecord {
            game_id,
            date,
            season,
            home_team,
            away_team,
            home_stats,
            away_stats,
            home_won,
        });
    }

    games.sort_by(|a, b| a.date.cmp(&b.date).then_with(|| a.game_id.cmp(&b.game_id)));
    check_season_windows(&games)?;
    Ok(games)
}

/// Distinct seasons must occupy disjoint date ranges, otherwise chronological
/// splitting by season label is meaningless.
fn check_season_windows(games: &[GameRecord]) -> Result<(), DataError> {
    let mut windows: BTreeMap<&str, (Date, Date)> = BTreeMap::new();
    for g in games {
        let w = windows.entry(&g.season).or_insert((g.date, g.date));
        w.0 = w.0.min(g.date);
        w.1 = w.1.max(g.date);
    }
    let mut ordered: Vec<(&str, (Date, Date))> = windows.into_iter().collect();
    ordered.sort_by_key(|(_, w)| w.0);
    for pair in ordered.windows(2) {
        if pair[1].1 .0 <= pair[0].1 .1 {
            return Err(DataError::SeasonsInterleaved(
                pair[0].0.to_string(),
                pair[1].0.to_string(),
            ));
        }
    }
    Ok(())
}

/// Load market lines: game_id, home_odds, away_odds in decimal format.
/// Input order is preserved.
pub fn load_odds(path: &Path) -> Result<Vec<MarketLine>, DataError> {
    let mut reader = csv::Reader::from_path(path)?;
    let columns = Columns::new(path, reader.headers()?);
    for required in ["game_id", "home_odds", "away_odds"] {
        columns.get(required)?;
    }
    let mut lines = Vec::new();
    let mut seen = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let game_id = columns.field(&record, row, "game_id")?.to_string();
        if seen.insert(game_id.clone(), row).is_some() {
            return Err(DataError::DuplicateGameId {
                path: path.display().to_string(),
                id: game_id,
            });
        }
        let parse_odds = |column: &str| -> Result<f64, DataError> {
            let raw = columns.field(&record, row, column)?;
            let value: f64 = raw
                .parse()
                .map_err(|_| columns.unparseable(row, column, "expected a number"))?;
            if implied_probability(value).is_err() {
                return Err(DataError::OddsNotAboveOne {
                    path: path.display().to_string(),
                    row,
                    column: column.to_string(),
                });
            }
            Ok(value)
        };
        let home_odds = parse_odds("home_odds")?;
        let away_odds = parse_odds("away_odds")?;
        lines.push(MarketLine {
            game_id,
            home_odds,
            away_odds,
        });
    }
    Ok(lines)
}

pub fn write_matched_games(
    path: &Path,
    matched: &[MatchedGame],
    schema: &StatSchema,
) -> Result<(), DataError> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec![
        "game_id".to_string(),
        "date".to_string(),
        "season".to_string(),
        "home_team".to_string(),
        "away_team".to_string(),
        "home_won".to_string(),
    ];
    for stat in schema.names() {
        header.push(format!("home_{stat}"));
    }
    for stat in schema.names() {
        header.push(format!("away_{stat}"));
    }
    header.push("home_odds".to_string());
    header.push("away_odds".to_string());
    writer.write_record(&header)?;
    for m in matched {
        let g = &m.game;
        let mut record = vec![
            g.game_id.clone(),
            g.date.to_string(),
            g.season.clone(),
            g.home_team.clone(),
            g.away_team.clone(),
            if g.home_won { "1" } else { "0" }.to_string(),
        ];
        record.extend(g.home_stats.0.iter().map(|v| fmt_f64(*v)));
        record.extend(g.away_stats.0.iter().map(|v| fmt_f64(*v)));
        record.push(fmt_f64(m.line.home_odds));
        record.push(fmt_f64(m.line.away_odds));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Read the ingest artifact back (games plus odds in one table).
pub fn read_matched_games(
    path: &Path,
    schema: &StatSchema,
) -> Result<Vec<MatchedGame>, DataError> {
    let mut reader = csv::Reader::from_path(path)?;
    let columns = Columns::new(path, reader.headers()?);
    let mut matched = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let game_id = columns.field(&record, row, "game_id")?.to_string();
        let date: Date = columns
            .field(&record, row, "date")?
            .parse()
            .map_err(|()| columns.unparseable(row, "date", "expected YYYY-MM-DD"))?;
        let parse_f64 = |col: &str| -> Result<f64, DataError> {
            columns
                .field(&record, row, col)?
                .parse()
                .map_err(|_| columns.unparseable(row, col, "expected a number"))
        };
        let stats = |prefix: &str| -> Result<BoxStats, DataError> {
            let mut values = Vec::with_capacity(schema.len());
            for def in &schema.0 {
                values.push(parse_f64(&format!("{prefix}_{}", def.name))?);
            }
            Ok(BoxStats(values))
        };
        let home_stats = stats("home")?;
        let away_stats = stats("away")?;
        matched.push(MatchedGame {
            game: GameRecord {
                game_id: game_id.clone(),
                date,
                season: columns.field(&record, row, "season")?.to_string(),
                home_team: columns.field(&record, row, "home_team")?.to_string(),
                away_team: columns.field(&record, row, "away_team")?.to_string(),
                home_stats,
                away_stats,
                home_won: columns.field(&record, row, "home_won")? == "1",
            },
            line: MarketLine {
                game_id,
                home_odds: parse_f64("home_odds")?,
                away_odds: parse_f64("away_odds")?,
            },
        });
    }
    Ok(matched)
}

pub fn write_features(path: &Path, set: &FeatureSet) -> Result<(), DataError> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["game_id".to_string(), "eligible".to_string(), "y".to_string()];
    header.extend(set.feature_names.iter().cloned());
    writer.write_record(&header)?;
    for row in &set.rows {
        let mut record = vec![
            row.game_id.clone(),
            if row.eligible { "1" } else { "0" }.to_string(),
            if row.y { "1" } else { "0" }.to_string(),
        ];
        match &row.x {
            Some(x) => record.extend(x.iter().map(|v| fmt_f64(*v))),
            None => record.extend(std::iter::repeat_n(String::new(), set.feature_names.len())),
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<FeatureSet, DataError> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let columns = Columns::new(path, &headers);
    for required in ["game_id", "eligible", "y"] {
        columns.get(required)?;
    }
    let feature_names: Vec<String> = headers
        .iter()
        .filter(|h| !matches!(*h, "game_id" | "eligible" | "y"))
        .map(|h| h.to_string())
        .collect();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let game_id = columns.field(&record, row, "game_id")?.to_string();
        let eligible = columns.field(&record, row, "eligible")? == "1";
        let y = columns.field(&record, row, "y")? == "1";
        let raw: Vec<&str> = feature_names
            .iter()
            .map(|name| columns.field(&record, row, name))
            .collect::<Result<_, _>>()?;
        let x = if raw.iter().all(|v| v.is_empty()) {
            None
        } else {
            let mut values = Vec::with_capacity(raw.len());
            for (value, name) in raw.iter().zip(&feature_names) {
                values.push(
                    value
                        .parse()
                        .map_err(|_| columns.unparseable(row, name, "expected a number"))?,
                );
            }
            Some(values)
        };
        rows.push(FeatureRow {
            game_id,
            x,
            y,
            eligible,
        });
    }
    Ok(FeatureSet {
        feature_names,
        rows,
    })
}

pub fn write_shift_report(path: &Path, tests: &[FeatureShift]) -> Result<(), DataError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["feature", "D", "critical", "decision"])?;
    for t in tests {
        writer.write_record([
            t.feature.as_str(),
            &fmt_f64(t.statistic),
            &fmt_f64(t.critical),
            if t.drop { "drop" } else { "keep" },
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_ledger(path: &Path, ledger: &Ledger, dates: &[Date]) -> Result<(), DataError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record([
        "game_id",
        "date",
        "side",
        "p",
        "odds",
        "stake",
        "won",
        "bankroll_after",
        "skip_reason",
    ])?;
    for (entry, date) in ledger.entries.iter().zip(dates) {
        writer.write_record([
            entry.game_id.as_str(),
            &date.to_string(),
            entry.side.map_or("", |s| s.as_str()),
            &if entry.p.is_nan() { String::new() } else { fmt_f64(entry.p) },
            &fmt_f64(entry.odds),
            &format!("{:.2}", entry.stake.report_dollars()),
            match entry.won {
                Some(true) => "1",
                Some(false) => "0",
                None => "",
            },
            &format!("{:.2}", entry.bankroll_after.report_dollars()),
            entry.skip_reason.map_or("", |r| r.as_str()),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Bankroll trajectory: row 0 is the initial bankroll, then one row per game.
pub fn write_bankroll(path: &Path, ledger: &Ledger) -> Result<(), DataError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["game_index", "bankroll"])?;
    writer.write_record(["0", &format!("{:.2}", ledger.initial.report_dollars())])?;
    for (i, entry) in ledger.entries.iter().enumerate() {
        writer.write_record([
            &(i + 1).to_string(),
            &format!("{:.2}", entry.bankroll_after.report_dollars()),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Scatter data for the placed bets: implied probability of the taken side
/// versus the model's probability for that side.
pub fn write_scatter(path: &Path, ledger: &Ledger) -> Result<(), DataError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["game_id", "implied_prob", "predicted_prob"])?;
    for entry in ledger.entries.iter().filter(|e| e.side.is_some()) {
        writer.write_record([
            entry.game_id.as_str(),
            &fmt_f64(1.0 / entry.odds),
            &fmt_f64(entry.p),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_reliability(path: &Path, rows: &[ReliabilityRow]) -> Result<(), DataError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["class", "bin_lo", "bin_hi", "count", "mean_pred", "emp_rate"])?;
    for row in rows {
        writer.write_record([
            &row.class.to_string(),
            &fmt_f64(row.bin_lo),
            &fmt_f64(row.bin_hi),
            &row.count.to_string(),
            &row.mean_pred.map_or(String::new(), fmt_f64),
            &row.emp_rate.map_or(String::new(), fmt_f64),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
