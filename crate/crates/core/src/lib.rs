//! Core algorithms for calibration-driven sports-betting evaluation.
//!
//! Everything in this crate is pure computation over owned data: decimal-odds
//! arithmetic, binning-based calibration metrics, rolling out-performance
//! features, a from-scratch logistic regression, wrapper/filter feature
//! selection, and the chronological bankroll simulation. File formats, CSV/JSON
//! parsing, and the CLI live in the companion `calibet` crate.
//!
//! The crate is `no_std` (with `alloc`) so the numeric core stays portable and
//! free of incidental platform dependence; all transcendental math goes through
//! `libm` for bit-identical results across targets.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod backtest;
pub mod calibration;
pub mod data;
pub mod features;
pub mod learners;
pub mod market;
pub mod selection;
