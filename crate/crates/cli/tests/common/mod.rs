//! Shared test support: a deterministic RNG and the synthetic six-team
//! mini-league generator behind the bundled demo fixtures.

// Each integration-test target compiles this module separately and uses a
// different slice of it.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::PathBuf;

pub struct Rng(pub u64);

impl Rng {
    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform().max(1e-12);
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

const TEAMS: [&str; 6] = ["ATL", "BOS", "CHI", "DEN", "LAL", "NYK"];
const BASE_STRENGTH: [f64; 6] = [1.2, 0.7, 0.25, -0.25, -0.7, -1.2];
const ROUNDS: usize = 8;

fn add_days(year: i32, month: u8, day: u8, offset: u32) -> (i32, u8, u8) {
    let days_in = |y: i32, m: u8| -> u8 {
        match m {
            1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
            4 | 6 | 9 | 11 => 30,
            2 => {
                if (y % 4 == 0 && y % 100 != 0) || y % 400 == 0 {
                    29
                } else {
                    28
                }
            }
            _ => unreachable!(),
        }
    };
    let (mut y, mut m, mut d) = (year, month, day as u32 + offset);
    loop {
        let len = days_in(y, m) as u32;
        if d <= len {
            return (y, m, d as u8);
        }
        d -= len;
        m += 1;
        if m > 12 {
            m = 1;
            y += 1;
        }
    }
}

/// Generate the five-season, six-team league as (games.csv, odds.csv) text.
/// Fully deterministic; a handful of validation-season games deliberately
/// lack odds so the join has something to warn about.
pub fn league_csvs() -> (String, String) {
    let mut rng = Rng(0x00C0FFEE);
    let mut games = String::from(
        "game_id,date,season,home_team,away_team,home_won,\
         home_REB,home_AST,home_STL,home_TOV,\
         away_REB,away_AST,away_STL,away_TOV\n",
    );
    let mut odds = String::from("game_id,home_odds,away_odds\n");

    let pairs: Vec<(usize, usize)> = (0..6)
        .flat_map(|i| ((i + 1)..6).map(move |j| (i, j)))
        .collect();
    let round1 = |v: f64| (v * 10.0).round() / 10.0;

    for (season_idx, start_year) in (2014..2019).enumerate() {
        let season = format!("{start_year}-{:02}", (start_year + 1) % 100);
        let strengths: Vec<f64> = BASE_STRENGTH
            .iter()
            .map(|s| s + rng.normal() * 0.15)
            .collect();
        let mut game_no = 0usize;
        for round in 0..ROUNDS {
            for &(i, j) in &pairs {
                let (home, away) = if (round + i + j) % 2 == 0 { (i, j) } else { (j, i) };
                let p_home =
                    sigmoid(0.30 + strengths[home] - strengths[away]).clamp(0.08, 0.92);
                let home_won = rng.uniform() < p_home;

                let home_perf =
                    strengths[home] + if home_won { 0.5 } else { -0.5 } + rng.normal() * 0.5;
                let away_perf =
                    strengths[away] + if home_won { -0.5 } else { 0.5 } + rng.normal() * 0.5;
                let stats = |perf: f64, rng: &mut Rng| -> [f64; 4] {
                    [
                        round1(44.0 + 2.4 * perf + rng.normal() * 1.2),
                        round1(24.5 + 2.8 * perf + rng.normal() * 1.4),
                        round1((7.6 + 0.8 * perf + rng.normal() * 0.8).max(0.0)),
                        round1((13.8 - 1.5 * perf + rng.normal() * 1.0).max(0.0)),
                    ]
                };
                let hs = stats(home_perf, &mut rng);
                let as_ = stats(away_perf, &mut rng);

                let (y, m, d) = add_days(start_year, 10, 20, (game_no / 2) as u32);
                let game_id = format!("{start_year}{game_no:04}");
                writeln!(
                    games,
                    "{game_id},{y:04}-{m:02}-{d:02},{season},{},{},{},\
                     {},{},{},{},{},{},{},{}",
                    TEAMS[home],
                    TEAMS[away],
                    u8::from(home_won),
                    hs[0],
                    hs[1],
                    hs[2],
                    hs[3],
                    as_[0],
                    as_[1],
                    as_[2],
                    as_[3],
                )
                .unwrap();

                // Book prices: noisy true probability plus a 4.5% margin.
                let p_book = (p_home + rng.normal() * 0.02).clamp(0.06, 0.94);
                let home_odds = (100.0 / (p_book * 1.045)).round() / 100.0;
                let away_odds = (100.0 / ((1.0 - p_book) * 1.045)).round() / 100.0;
                let missing_line = season_idx == 2 && [7, 23, 41].contains(&game_no);
                if !missing_line {
                    writeln!(odds, "{game_id},{home_odds},{away_odds}").unwrap();
                }
                game_no += 1;
            }
        }
    }
    (games, odds)
}

/// Directory with the committed demo fixtures.
pub fn demo_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../demo")
}

/// A league engineered so that *every* feature shifts between the training
/// seasons and the validation season.
///
/// Training seasons: balanced standings (previous-season differentials all
/// zero) and stats barely tied to team identity. From the validation season
/// on, standings spread wide and stats depend strongly on team strength, so
/// both the out-performance differentials and the previous-season feature
/// change distribution.
pub fn shifted_league_csvs() -> (String, String) {
    let mut rng = Rng(0xBADC0DE);
    let mut games = String::from(
        "game_id,date,season,home_team,away_team,home_won,\
         home_REB,home_AST,home_STL,home_TOV,\
         away_REB,away_AST,away_STL,away_TOV\n",
    );
    let mut odds = String::from("game_id,home_odds,away_odds\n");
    let base = [44.0, 24.5, 7.6, 13.8];
    let strengths = [2.5, 1.5, 0.5, -0.5, -1.5, -2.5];
    let pairs: Vec<(usize, usize)> = (0..6)
        .flat_map(|i| ((i + 1)..6).map(move |j| (i, j)))
        .collect();
    let round1 = |v: f64| (v * 10.0).round() / 10.0;

    for (season_idx, start_year) in (2014..2019).enumerate() {
        let season = format!("{start_year}-{:02}", (start_year + 1) % 100);
        let strength_coef = if season_idx < 2 { 0.5 } else { 8.0 };
        let mut game_no = 0usize;
        for round in 0..6 {
            for &(i, j) in &pairs {
                let (home, away) = if (round + i + j) % 2 == 0 { (i, j) } else { (j, i) };
                // Season 1: split every pairing 3-3 so standings are all 0.5.
                // Later seasons: the lower index always wins.
                let winner = if season_idx == 0 {
                    if round % 2 == 0 {
                        i.min(j)
                    } else {
                        i.max(j)
                    }
                } else {
                    i.min(j)
                };
                let stats = |team: usize, rng: &mut Rng| -> [f64; 4] {
                    [
                        round1(base[0] + strengths[team] * strength_coef + rng.normal() * 1.5),
                        round1(base[1] + strengths[team] * strength_coef + rng.normal() * 1.5),
                        round1(
                            (base[2] + strengths[team] * strength_coef * 0.3
                                + rng.normal() * 0.8)
                                .max(0.0),
                        ),
                        round1(
                            (base[3] - strengths[team] * strength_coef * 0.4
                                + rng.normal() * 1.0)
                                .max(0.0),
                        ),
                    ]
                };
                let hs = stats(home, &mut rng);
                let as_ = stats(away, &mut rng);
                let (y, m, d) = add_days(start_year, 10, 20, (game_no / 2) as u32);
                let game_id = format!("{start_year}{game_no:04}");
                writeln!(
                    games,
                    "{game_id},{y:04}-{m:02}-{d:02},{season},{},{},{},\
                     {},{},{},{},{},{},{},{}",
                    TEAMS[home],
                    TEAMS[away],
                    u8::from(winner == home),
                    hs[0],
                    hs[1],
                    hs[2],
                    hs[3],
                    as_[0],
                    as_[1],
                    as_[2],
                    as_[3],
                )
                .unwrap();
                writeln!(odds, "{game_id},1.9,1.9").unwrap();
                game_no += 1;
            }
        }
    }
    (games, odds)
}
