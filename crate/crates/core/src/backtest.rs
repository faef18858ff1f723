//! Staking rules (fixed and fractional Kelly) and the chronological bankroll
//! simulation, producing a per-bet ledger and a season report.
//!
//! Currency is held in integer micro-dollars so ledger accumulation is exact;
//! two-decimal rounding happens only when figures leave for a report.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Add, AddAssign, Neg, Sub, SubAssign};
use serde::{Deserialize, Serialize};

use crate::calibration::{accuracy, aggregate_bins, classwise_ece};
use crate::data::MatchedGame;
use crate::market::is_value_bet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BacktestError {
    OddsNotAboveOne,
    NotAValueBet,
    /// Games passed to the simulation were not in chronological order.
    ChronologyViolation,
    /// A game had no forecast and skipping was disabled.
    ForecastMissing,
    /// Games and forecasts differ in length.
    InputMismatch,
    NonPositiveInitial,
}

impl fmt::Display for BacktestError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BacktestError::OddsNotAboveOne => write!(f, "decimal odds must be > 1.0"),
            BacktestError::NotAValueBet => write!(f, "stake requested for a non-value bet"),
            BacktestError::ChronologyViolation => {
                write!(f, "simulation games must be chronologically sorted")
            }
            BacktestError::ForecastMissing => write!(f, "game has no forecast"),
            BacktestError::InputMismatch => {
                write!(f, "games and forecasts have different lengths")
            }
            BacktestError::NonPositiveInitial => write!(f, "initial bankroll must be positive"),
        }
    }
}

const MICROS_PER_DOLLAR: f64 = 1_000_000.0;

/// Currency in integer micro-dollars. Sums of `Money` are exact, so the
/// ledger conservation identity holds without tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct Money(i128);

impl Money {
    pub const ZERO: Money = Money(0);

    pub fn from_micros(micros: i128) -> Money {
        Money(micros)
    }

    pub fn from_dollars(dollars: f64) -> Money {
        Money(libm::round(dollars * MICROS_PER_DOLLAR) as i128)
    }

    pub fn micros(self) -> i128 {
        self.0
    }

    pub fn to_dollars(self) -> f64 {
        self.0 as f64 / MICROS_PER_DOLLAR
    }

    /// Dollars rounded to two decimals, for report output.
    pub fn report_dollars(self) -> f64 {
        libm::round(self.0 as f64 / 10_000.0) / 100.0
    }

    /// Scale by a non-negative factor, rounding to the nearest micro.
    pub fn scale(self, factor: f64) -> Money {
        Money(libm::round(self.0 as f64 * factor) as i128)
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

impl SubAssign for Money {
    fn sub_assign(&mut self, rhs: Money) {
        self.0 -= rhs.0;
    }
}

impl Neg for Money {
    type Output = Money;
    fn neg(self) -> Money {
        Money(-self.0)
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2}", self.report_dollars())
    }
}

/// How much to put on a bet once the strategy has said yes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StakeRule {
    /// Same stake every bet; skipped when the bankroll cannot cover it.
    Fixed { amount: Money },
    /// Stake `fraction * kelly * bankroll`; `fraction` in (0, 1].
    FractionalKelly { fraction: f64 },
}

impl StakeRule {
    pub fn eighth_kelly() -> StakeRule {
        StakeRule::FractionalKelly { fraction: 0.125 }
    }

    pub fn is_valid(&self) -> bool {
        match self {
            StakeRule::Fixed { amount } => amount.is_positive(),
            StakeRule::FractionalKelly { fraction } => *fraction > 0.0 && *fraction <= 1.0,
        }
    }
}

/// Kelly criterion: with `b = odds - 1` and `q = 1 - p`, the optimal bankroll
/// fraction is `(p*b - q) / b`. May be negative; a non-positive value means
/// no edge and callers must not bet.
///
/// The numerator `p*b - q` simplifies to `p*odds - 1` and is computed that
/// way: subtracting 1 never flips the sign of the product in floating point,
/// so `kelly_fraction > 0` holds exactly when `is_value_bet` does.
pub fn kelly_fraction(p: f64, odds: f64) -> Result<f64, BacktestError> {
    if odds <= 1.0 || !odds.is_finite() {
        return Err(BacktestError::OddsNotAboveOne);
    }
    debug_assert!((0.0..=1.0).contains(&p), "forecast probability out of range");
    Ok((p * odds - 1.0) / (odds - 1.0))
}

/// Why a game produced no bet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    /// No eligible forecast for this game.
    MissingForecast,
    /// Neither side offered a value bet.
    NoValueBet,
    /// Fixed rule: bankroll below the fixed amount; no borrowing.
    InsufficientBankroll,
    /// Kelly stake rounded to zero micro-dollars.
    ZeroStake,
}

impl SkipReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            SkipReason::MissingForecast => "missing_forecast",
            SkipReason::NoValueBet => "no_value_bet",
            SkipReason::InsufficientBankroll => "insufficient_bankroll",
            SkipReason::ZeroStake => "zero_stake",
        }
    }
}

/// Outcome of sizing one prospective bet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StakeDecision {
    Bet(Money),
    Skip(SkipReason),
}

/// Size a stake for a bet the strategy has already accepted
/// (`is_value_bet(p, odds)` must hold).
pub fn stake_for(
    rule: &StakeRule,
    p: f64,
    odds: f64,
    bankroll: Money,
) -> Result<StakeDecision, BacktestError> {
    if !is_value_bet(p, odds) {
        if odds <= 1.0 || odds.is_nan() {
            return Err(BacktestError::OddsNotAboveOne);
        }
        return Err(BacktestError::NotAValueBet);
    }
    match rule {
        StakeRule::Fixed { amount } => {
            if bankroll < *amount {
                Ok(StakeDecision::Skip(SkipReason::InsufficientBankroll))
            } else {
                Ok(StakeDecision::Bet(*amount))
            }
        }
        StakeRule::FractionalKelly { fraction } => {
            let k = kelly_fraction(p, odds)?;
            let stake = bankroll.scale(fraction * k);
            if stake.is_positive() {
                Ok(StakeDecision::Bet(stake))
            } else {
                Ok(StakeDecision::Skip(SkipReason::ZeroStake))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetSide {
    Home,
    Away,
}

impl BetSide {
    pub fn as_str(&self) -> &'static str {
        match self {
            BetSide::Home => "home",
            BetSide::Away => "away",
        }
    }
}

/// One game's row in the ledger. For non-bet rows (`side == None`) the
/// recorded probability and odds refer to the home side, the first side the
/// strategy probes.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerEntry {
    pub game_id: String,
    pub side: Option<BetSide>,
    pub p: f64,
    pub odds: f64,
    pub stake: Money,
    pub won: Option<bool>,
    pub bankroll_after: Money,
    pub skip_reason: Option<SkipReason>,
}

/// Full betting record of one simulated season.
#[derive(Debug, Clone, PartialEq)]
pub struct Ledger {
    pub initial: Money,
    pub entries: Vec<LedgerEntry>,
}

impl Ledger {
    pub fn final_bankroll(&self) -> Money {
        self.entries.last().map_or(self.initial, |e| e.bankroll_after)
    }
}

/// Season-level summary mirroring the comparison-table fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub initial_bankroll: f64,
    pub final_bankroll: f64,
    /// Percentage change of the initial bankroll.
    pub roi: f64,
    pub games_total: usize,
    pub games_with_forecast: usize,
    pub skipped_no_forecast: usize,
    pub games_bet: usize,
    /// 100 * bets placed / games with forecasts; null when no game had one.
    pub pct_games_bet: Option<f64>,
    pub bets_won: usize,
    /// 100 * bets won / bets placed; null when no bet was placed.
    pub pct_bets_won: Option<f64>,
    pub accuracy: Option<f64>,
    pub classwise_ece: Option<f64>,
}

/// Percentage change from `initial` to `final`.
pub fn roi(initial: Money, final_bankroll: Money) -> Result<f64, BacktestError> {
    if !initial.is_positive() {
        return Err(BacktestError::NonPositiveInitial);
    }
    Ok(100.0 * (final_bankroll.micros() - initial.micros()) as f64 / initial.micros() as f64)
}

/// Run the betting simulation over a chronologically ordered season.
///
/// Per game: probe the home side first; only if home is not a value bet,
/// probe away (at most one bet per game). The stake is subtracted up front;
/// a win returns `stake * odds`. Games without a forecast are skipped and
/// counted unless `strict_forecasts` turns them into an error. The away
/// forecast is the complement of the home forecast.
pub fn simulate(
    games: &[MatchedGame],
    forecasts: &[Option<f64>],
    rule: &StakeRule,
    initial_bankroll: Money,
    strict_forecasts: bool,
    report_bins: usize,
) -> Result<(Ledger, BacktestReport), BacktestError> {
    if games.len() != forecasts.len() {
        return Err(BacktestError::InputMismatch);
    }
    if !initial_bankroll.is_positive() {
        return Err(BacktestError::NonPositiveInitial);
    }
    let mut last_date = None;
    let mut bankroll = initial_bankroll;
    let mut entries = Vec::with_capacity(games.len());

    for (matched, forecast) in games.iter().zip(forecasts) {
        let game = &matched.game;
        if last_date.is_some_and(|d| game.date < d) {
            return Err(BacktestError::ChronologyViolation);
        }
        last_date = Some(game.date);

        let p_home = match forecast {
            Some(p) => *p,
            None => {
                if strict_forecasts {
                    return Err(BacktestError::ForecastMissing);
                }
                entries.push(LedgerEntry {
                    game_id: game.game_id.clone(),
                    side: None,
                    p: f64::NAN,
                    odds: matched.line.home_odds,
                    stake: Money::ZERO,
                    won: None,
                    bankroll_after: bankroll,
                    skip_reason: Some(SkipReason::MissingForecast),
                });
                continue;
            }
        };
        let p_away = 1.0 - p_home;

        let probe = if is_value_bet(p_home, matched.line.home_odds) {
            Some((BetSide::Home, p_home, matched.line.home_odds, game.home_won))
        } else if is_value_bet(p_away, matched.line.away_odds) {
            Some((BetSide::Away, p_away, matched.line.away_odds, !game.home_won))
        } else {
            None
        };

        let entry = match probe {
            None => LedgerEntry {
                game_id: game.game_id.clone(),
                side: None,
                p: p_home,
                odds: matched.line.home_odds,
                stake: Money::ZERO,
                won: None,
                bankroll_after: bankroll,
                skip_reason: Some(SkipReason::NoValueBet),
            },
            Some((side, p, odds, won)) => match stake_for(rule, p, odds, bankroll)? {
                StakeDecision::Skip(reason) => LedgerEntry {
                    game_id: game.game_id.clone(),
                    side: None,
                    p,
                    odds,
                    stake: Money::ZERO,
                    won: None,
                    bankroll_after: bankroll,
                    skip_reason: Some(reason),
                },
                StakeDecision::Bet(stake) => {
                    bankroll -= stake;
                    if won {
                        // stake + winnings, where winnings = stake*odds - stake
                        bankroll += stake.scale(odds);
                    }
                    LedgerEntry {
                        game_id: game.game_id.clone(),
                        side: Some(side),
                        p,
                        odds,
                        stake,
                        won: Some(won),
                        bankroll_after: bankroll,
                        skip_reason: None,
                    }
                }
            },
        };
        entries.push(entry);
    }

    let ledger = Ledger {
        initial: initial_bankroll,
        entries,
    };
    let (preds, labels): (Vec<f64>, Vec<bool>) = games
        .iter()
        .zip(forecasts)
        .filter_map(|(g, f)| f.map(|p| (p, g.game.home_won)))
        .unzip();
    let report = summarize(&ledger, &preds, &labels, report_bins)?;
    Ok((ledger, report))
}

/// Assemble the season report from a completed ledger plus the simulation-set
/// forecasts and labels (used for the accuracy and calibration columns).
pub fn summarize(
    ledger: &Ledger,
    forecasts: &[f64],
    labels: &[bool],
    bins: usize,
) -> Result<BacktestReport, BacktestError> {
    let games_total = ledger.entries.len();
    let skipped_no_forecast = ledger
        .entries
        .iter()
        .filter(|e| e.skip_reason == Some(SkipReason::MissingForecast))
        .count();
    let games_with_forecast = games_total - skipped_no_forecast;
    let games_bet = ledger.entries.iter().filter(|e| e.side.is_some()).count();
    let bets_won = ledger
        .entries
        .iter()
        .filter(|e| e.won == Some(true))
        .count();

    let pct_games_bet = (games_with_forecast > 0)
        .then(|| 100.0 * games_bet as f64 / games_with_forecast as f64);
    let pct_bets_won = (games_bet > 0).then(|| 100.0 * bets_won as f64 / games_bet as f64);

    let (acc, ece) = if forecasts.is_empty() {
        (None, None)
    } else {
        let bins_agg =
            aggregate_bins(forecasts, labels, bins).map_err(|_| BacktestError::InputMismatch)?;
        (
            Some(accuracy(forecasts, labels).map_err(|_| BacktestError::InputMismatch)?),
            Some(classwise_ece(&bins_agg)),
        )
    };

    Ok(BacktestReport {
        initial_bankroll: ledger.initial.report_dollars(),
        final_bankroll: ledger.final_bankroll().report_dollars(),
        roi: roi(ledger.initial, ledger.final_bankroll())?,
        games_total,
        games_with_forecast,
        skipped_no_forecast,
        games_bet,
        pct_games_bet,
        bets_won,
        pct_bets_won,
        accuracy: acc,
        classwise_ece: ece,
    })
}
