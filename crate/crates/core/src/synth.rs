//! Synthetic price panels with a planted bubble.
//!
//! All stocks follow independent geometric random walks. A subset of bubble
//! stocks receives an extra drift over `[onset, peak)` that lifts each one's
//! log-price by its own amount, then gives the whole gain back over
//! `crash_days` trading days.

use chrono::{Datelike, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::panel::PricePanel;
use crate::Date;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleScenario {
    pub n_stocks: usize,
    pub n_bubble: usize,
    pub n_days: usize,
    /// Trading-day index where the extra drift starts.
    pub onset: usize,
    /// Trading-day index of the bubble top; the crash starts here.
    pub peak: usize,
    pub crash_days: usize,
    pub daily_vol: f64,
    pub daily_drift: f64,
    /// Largest log-price gain of a bubble stock at the top.
    pub max_log_gain: f64,
    /// Smallest gain as a fraction of `max_log_gain`.
    pub min_gain_fraction: f64,
    pub start: Date,
}

impl Default for BubbleScenario {
    fn default() -> Self {
        Self {
            n_stocks: 500,
            n_bubble: 100,
            n_days: 400,
            onset: 150,
            peak: 250,
            crash_days: 20,
            daily_vol: 0.02,
            daily_drift: 0.0,
            max_log_gain: 1.5,
            min_gain_fraction: 0.3,
            start: Date::from_ymd_opt(2000, 1, 3).expect("valid date"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticPanel {
    pub panel: PricePanel,
    /// Column indices of the bubble stocks.
    pub bubble_stocks: Vec<usize>,
    pub onset: usize,
    pub peak: usize,
}

impl BubbleScenario {
    pub fn generate(&self, seed: u64) -> SyntheticPanel {
        assert!(
            self.n_bubble <= self.n_stocks,
            "more bubble stocks than stocks"
        );
        assert!(
            self.onset < self.peak && self.peak + self.crash_days <= self.n_days,
            "bubble window must fit inside the panel"
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let gains: Vec<f64> = (0..self.n_stocks)
            .map(|i| {
                if i < self.n_bubble {
                    let u: f64 = rng.random_range(self.min_gain_fraction..=1.0);
                    self.max_log_gain * u
                } else {
                    0.0
                }
            })
            .collect();
        let mut log_prices: Vec<f64> = (0..self.n_stocks)
            .map(|_| rng.random_range(10.0f64..100.0).ln())
            .collect();

        let rise_days = (self.peak - self.onset) as f64;
        let crash_days = self.crash_days.max(1) as f64;
        let mut prices = Vec::with_capacity(self.n_days);
        for day in 0..self.n_days {
            if day > 0 {
                for (i, lp) in log_prices.iter_mut().enumerate() {
                    let eps: f64 = rng.sample(StandardNormal);
                    let mut drift = self.daily_drift;
                    if day > self.onset && day <= self.peak {
                        drift += gains[i] / rise_days;
                    } else if day > self.peak && day <= self.peak + self.crash_days {
                        drift -= gains[i] / crash_days;
                    }
                    *lp += drift + self.daily_vol * eps;
                }
            }
            prices.push(log_prices.iter().map(|lp| Some(lp.exp())).collect());
        }

        let dates = business_days(self.start, self.n_days);
        let tickers = (0..self.n_stocks).map(|i| format!("S{i:04}")).collect();
        let panel = PricePanel::new(dates, tickers, prices).expect("generated panel is valid");
        SyntheticPanel {
            panel,
            bubble_stocks: (0..self.n_bubble).collect(),
            onset: self.onset,
            peak: self.peak,
        }
    }
}

/// `count` consecutive weekdays starting at `start` (or the next weekday).
pub fn business_days(start: Date, count: usize) -> Vec<Date> {
    start
        .iter_days()
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .take(count)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_determinism() {
        let scenario = BubbleScenario {
            n_stocks: 20,
            n_bubble: 5,
            n_days: 60,
            onset: 10,
            peak: 30,
            crash_days: 10,
            ..Default::default()
        };
        let a = scenario.generate(1);
        let b = scenario.generate(1);
        assert_eq!(a.panel, b.panel);
        assert_eq!(a.panel.n_dates(), 60);
        assert_eq!(a.panel.n_tickers(), 20);
        assert_ne!(a.panel, scenario.generate(2).panel);
    }

    #[test]
    fn weekdays_only() {
        let days = business_days(Date::from_ymd_opt(2024, 1, 5).unwrap(), 3);
        let s: Vec<String> = days.iter().map(|d| d.to_string()).collect();
        assert_eq!(s, ["2024-01-05", "2024-01-08", "2024-01-09"]);
    }
}
