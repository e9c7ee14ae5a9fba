//! Price panels, reference-date normalization, the spatial survival function
//! and cross-sectional moments.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::Date;

/// Smallest cross-section on which a variance is reported.
pub const MIN_CROSS_SECTION: usize = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PanelError {
    #[error("dates are not strictly increasing at row {index} ({date})")]
    UnsortedDates { index: usize, date: Date },
    #[error("duplicate ticker `{0}`")]
    DuplicateTicker(String),
    #[error("non-positive price {value} for `{ticker}` on {date}")]
    NonPositivePrice {
        date: Date,
        ticker: String,
        value: f64,
    },
    #[error("shape mismatch: expected {expected} values, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("reference date {0} is not in the panel")]
    RefDateAbsent(Date),
    #[error("too few stocks: {found} available, at least {required} required")]
    TooFewStocks { found: usize, required: usize },
    #[error("empty cross-section")]
    EmptyCrossSection,
    #[error("non-finite performance value {0}")]
    NonFiniteValue(f64),
}

/// Daily close prices, dates in rows and tickers in columns.
///
/// `None` marks a missing observation. Every present price is finite and
/// strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    dates: Vec<Date>,
    tickers: Vec<String>,
    prices: Vec<Vec<Option<f64>>>,
}

impl PricePanel {
    pub fn new(
        dates: Vec<Date>,
        tickers: Vec<String>,
        prices: Vec<Vec<Option<f64>>>,
    ) -> Result<Self, PanelError> {
        if prices.len() != dates.len() {
            return Err(PanelError::ShapeMismatch {
                expected: dates.len(),
                found: prices.len(),
            });
        }
        for (index, pair) in dates.windows(2).enumerate() {
            if pair[1] <= pair[0] {
                return Err(PanelError::UnsortedDates {
                    index: index + 1,
                    date: pair[1],
                });
            }
        }
        let mut seen = HashSet::with_capacity(tickers.len());
        for t in &tickers {
            if !seen.insert(t.as_str()) {
                return Err(PanelError::DuplicateTicker(t.clone()));
            }
        }
        for (date, row) in dates.iter().zip(&prices) {
            if row.len() != tickers.len() {
                return Err(PanelError::ShapeMismatch {
                    expected: tickers.len(),
                    found: row.len(),
                });
            }
            for (ticker, p) in tickers.iter().zip(row) {
                if let Some(v) = *p {
                    if !(v > 0.0 && v.is_finite()) {
                        return Err(PanelError::NonPositivePrice {
                            date: *date,
                            ticker: ticker.clone(),
                            value: v,
                        });
                    }
                }
            }
        }
        Ok(Self {
            dates,
            tickers,
            prices,
        })
    }

    pub fn dates(&self) -> &[Date] {
        &self.dates
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    /// Row-major price matrix (`dates × tickers`).
    pub fn prices(&self) -> &[Vec<Option<f64>>] {
        &self.prices
    }

    pub fn date_index(&self, date: Date) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn n_tickers(&self) -> usize {
        self.tickers.len()
    }
}

/// How stocks with gaps are treated when normalizing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MissingDataPolicy {
    /// Exclude stocks without a price at the reference date. A stock missing
    /// a price at a later date is left out of that date's cross-section only.
    #[default]
    DropAtRef,
    /// Exclude any stock missing a price anywhere on or after the reference date.
    CompleteCase,
}

impl fmt::Display for MissingDataPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DropAtRef => f.write_str("drop-at-ref"),
            Self::CompleteCase => f.write_str("complete-case"),
        }
    }
}

impl FromStr for MissingDataPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "drop-at-ref" => Ok(Self::DropAtRef),
            "complete-case" => Ok(Self::CompleteCase),
            other => Err(format!(
                "unknown missing-data policy `{other}` (expected drop-at-ref or complete-case)"
            )),
        }
    }
}

/// Performances `X_i(t_ref, t) = S_i(t) / S_i(t_ref)` for dates `t >= t_ref`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformancePanel {
    t_ref: Date,
    dates: Vec<Date>,
    tickers: Vec<String>,
    values: Vec<Vec<Option<f64>>>,
}

impl PerformancePanel {
    pub fn t_ref(&self) -> Date {
        self.t_ref
    }

    pub fn dates(&self) -> &[Date] {
        &self.dates
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn values(&self) -> &[Vec<Option<f64>>] {
        &self.values
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Performances present on row `row`, in ticker order.
    pub fn cross_section(&self, row: usize) -> Vec<f64> {
        self.values[row].iter().flatten().copied().collect()
    }

    pub fn cross_section_at(&self, date: Date) -> Option<Vec<f64>> {
        let row = self.dates.binary_search(&date).ok()?;
        Some(self.cross_section(row))
    }

    /// Performance series of one stock, `None` where its price is missing.
    pub fn column(&self, ticker: &str) -> Option<Vec<Option<f64>>> {
        let col = self.tickers.iter().position(|t| t == ticker)?;
        Some(self.values.iter().map(|row| row[col]).collect())
    }
}

/// Normalizes `panel` against `t_ref`, requiring at least two surviving stocks.
pub fn normalize_panel(
    panel: &PricePanel,
    t_ref: Date,
    policy: MissingDataPolicy,
) -> Result<PerformancePanel, PanelError> {
    normalize_panel_with_min(panel, t_ref, policy, MIN_CROSS_SECTION)
}

/// Like [`normalize_panel`] with a caller-chosen minimum number of stocks.
pub fn normalize_panel_with_min(
    panel: &PricePanel,
    t_ref: Date,
    policy: MissingDataPolicy,
    min_stocks: usize,
) -> Result<PerformancePanel, PanelError> {
    let start = panel
        .date_index(t_ref)
        .ok_or(PanelError::RefDateAbsent(t_ref))?;
    let rows = &panel.prices[start..];
    let base = &rows[0];

    let included: Vec<usize> = (0..panel.n_tickers())
        .filter(|&col| match base[col] {
            None => false,
            Some(_) => match policy {
                MissingDataPolicy::DropAtRef => true,
                MissingDataPolicy::CompleteCase => rows.iter().all(|r| r[col].is_some()),
            },
        })
        .collect();

    if included.len() < min_stocks {
        return Err(PanelError::TooFewStocks {
            found: included.len(),
            required: min_stocks,
        });
    }

    let values = rows
        .iter()
        .map(|row| {
            included
                .iter()
                .map(|&col| {
                    let reference = base[col].expect("included stocks have a reference price");
                    row[col].map(|p| p / reference)
                })
                .collect()
        })
        .collect();

    Ok(PerformancePanel {
        t_ref,
        dates: panel.dates[start..].to_vec(),
        tickers: included.iter().map(|&c| panel.tickers[c].clone()).collect(),
        values,
    })
}

/// Fraction of values strictly greater than `z`.
pub fn survival_value(x: &[f64], z: f64) -> Result<f64, PanelError> {
    if x.is_empty() {
        return Err(PanelError::EmptyCrossSection);
    }
    let above = x.iter().filter(|&&v| v > z).count();
    Ok(above as f64 / x.len() as f64)
}

/// Empirical survival function of one cross-section.
///
/// A right-continuous step function dropping by `m/N` at every sample value
/// of multiplicity `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    sorted_values: Vec<f64>,
    n: usize,
}

impl SurvivalCurve {
    pub fn sorted_values(&self) -> &[f64] {
        &self.sorted_values
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `S_N(z)`, the fraction of sample values strictly above `z`.
    pub fn eval(&self, z: f64) -> f64 {
        let at_or_below = self.sorted_values.partition_point(|&v| v <= z);
        (self.n - at_or_below) as f64 / self.n as f64
    }

    /// `(z, S_N(z))` evaluated at each distinct sample value, ascending in `z`.
    pub fn step_points(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < self.n {
            let z = self.sorted_values[i];
            let mut j = i;
            while j < self.n && self.sorted_values[j] == z {
                j += 1;
            }
            out.push((z, (self.n - j) as f64 / self.n as f64));
            i = j;
        }
        out
    }

    /// Sample median (mean of the two central values for even `n`).
    pub fn median(&self) -> f64 {
        let mid = self.n / 2;
        if self.n % 2 == 1 {
            self.sorted_values[mid]
        } else {
            0.5 * (self.sorted_values[mid - 1] + self.sorted_values[mid])
        }
    }
}

pub fn survival_curve(x: &[f64]) -> Result<SurvivalCurve, PanelError> {
    if x.is_empty() {
        return Err(PanelError::EmptyCrossSection);
    }
    if let Some(&bad) = x.iter().find(|v| !v.is_finite()) {
        return Err(PanelError::NonFiniteValue(bad));
    }
    let mut sorted_values = x.to_vec();
    sorted_values.sort_by(f64::total_cmp);
    Ok(SurvivalCurve {
        n: sorted_values.len(),
        sorted_values,
    })
}

/// Cross-sectional mean and population variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
}

/// Mean and `1/N` variance of `x`.
///
/// Deviations are accumulated relative to `x[0]`, so a constant vector gives
/// a variance of exactly zero.
pub fn cross_sectional_moments(x: &[f64]) -> Result<Moments, PanelError> {
    if x.len() < MIN_CROSS_SECTION {
        return Err(PanelError::TooFewStocks {
            found: x.len(),
            required: MIN_CROSS_SECTION,
        });
    }
    let n = x.len() as f64;
    let shift = x[0];
    let shifted_mean = x.iter().map(|&v| v - shift).sum::<f64>() / n;
    let variance = x
        .iter()
        .map(|&v| {
            let d = v - shift - shifted_mean;
            d * d
        })
        .sum::<f64>()
        / n;
    Ok(Moments {
        mean: shift + shifted_mean,
        variance,
    })
}

/// `V_N` as half the mean squared pairwise difference, `(1/2N²) Σ_ij (x_i - x_j)²`.
///
/// Quadratic in `N`; use [`cross_sectional_moments`] for large cross-sections.
pub fn pairwise_dispersion(x: &[f64]) -> Result<f64, PanelError> {
    if x.len() < MIN_CROSS_SECTION {
        return Err(PanelError::TooFewStocks {
            found: x.len(),
            required: MIN_CROSS_SECTION,
        });
    }
    let mut upper = 0.0;
    for (i, &xi) in x.iter().enumerate() {
        for &xj in &x[i + 1..] {
            let d = xi - xj;
            upper += d * d;
        }
    }
    // Σ_{i,j} = 2 Σ_{i<j}; the factor 2 cancels the 1/2.
    let n = x.len() as f64;
    Ok(upper / (n * n))
}

/// Per-date cross-sectional mean and dispersion.
///
/// `mean` is `None` on dates with no stock present and `variance` is `None`
/// on dates with fewer than two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionSeries {
    pub dates: Vec<Date>,
    pub mean: Vec<Option<f64>>,
    pub variance: Vec<Option<f64>>,
    pub count: Vec<usize>,
}

impl DispersionSeries {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}

pub fn dispersion_series(perf: &PerformancePanel) -> DispersionSeries {
    let rows: Vec<(usize, Option<f64>, Option<f64>)> = (0..perf.dates.len())
        .into_par_iter()
        .map(|row| {
            let xs = perf.cross_section(row);
            match xs.len() {
                0 => (0, None, None),
                1 => (1, Some(xs[0]), None),
                n => {
                    let m = cross_sectional_moments(&xs).expect("n >= 2");
                    (n, Some(m.mean), Some(m.variance))
                }
            }
        })
        .collect();

    let mut out = DispersionSeries {
        dates: perf.dates.clone(),
        mean: Vec::with_capacity(rows.len()),
        variance: Vec::with_capacity(rows.len()),
        count: Vec::with_capacity(rows.len()),
    };
    for (count, mean, variance) in rows {
        out.count.push(count);
        out.mean.push(mean);
        out.variance.push(variance);
    }
    out
}
