//! Decimal-odds arithmetic: implied probability, bookmaker margin, and the
//! value-bet predicate.

use core::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarketError {
    /// Decimal odds must be strictly greater than 1.0. Odds at or below 1.0
    /// usually mean an invalid line or an American-format feed.
    OddsNotAboveOne,
}

impl fmt::Display for MarketError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MarketError::OddsNotAboveOne => write!(f, "decimal odds must be > 1.0"),
        }
    }
}

/// Probability implied by a decimal price, `1/odds`. Always in (0, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpliedProbability(f64);

impl ImpliedProbability {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Invert decimal odds into the bookmaker's implied probability.
pub fn implied_probability(odds: f64) -> Result<ImpliedProbability, MarketError> {
    if odds <= 1.0 || !odds.is_finite() {
        return Err(MarketError::OddsNotAboveOne);
    }
    Ok(ImpliedProbability(1.0 / odds))
}

/// Bookmaker margin (overround): |1/home_odds + 1/away_odds - 1|.
///
/// Fair two-way odds have implied probabilities summing to exactly 1; the
/// deviation is the commission baked into the prices.
pub fn bookmaker_margin(home_odds: f64, away_odds: f64) -> Result<f64, MarketError> {
    let h = implied_probability(home_odds)?.value();
    let a = implied_probability(away_odds)?.value();
    Ok(libm::fabs(h + a - 1.0))
}

/// A value bet is a strict edge: the forecast probability must exceed the
/// implied probability. `p == 1/odds` is zero expected value and not a bet.
///
/// Evaluated as `p * odds > 1`, the product form of `p > 1/odds`. The Kelly
/// fraction's sign is decided by the same product, so "value bet" and
/// "positive Kelly stake" agree exactly, with no reciprocal-rounding sliver
/// between them.
pub fn is_value_bet(p: f64, odds: f64) -> bool {
    odds > 1.0 && p * odds > 1.0
}
