//! Cross-sectional dispersion statistics for stock price panels.
//!
//! Prices are normalized against a fixed reference date, giving each stock a
//! performance `X_i(t_ref, t) = S_i(t) / S_i(t_ref)`. On every date the
//! cross-section of performances is summarized by:
//!
//! * its empirical survival function `S_N(z)` ([`panel::survival_curve`]),
//! * its population variance `V_N`, the dispersion ([`panel::dispersion_series`]),
//! * the Pareto exponent of its upper tail ([`tail::hill_estimator`]).
//!
//! [`theory`] relates the expected dispersion to the mean, variance and
//! correlation structure of the stocks, and [`sim`] checks that relation with a
//! seeded correlated-Gaussian Monte Carlo engine.
//!
//! Variances are population (`1/N`) variances throughout, not sample
//! (`1/(N-1)`) variances.

pub mod io;
pub mod panel;
pub mod sim;
pub mod synth;
pub mod tail;
pub mod theory;

pub use io::{
    load_price_panel, tref_sweep, write_report, CsvFormat, IoError, Report, ReportFormat,
    SweepEntry, SweepResult,
};
pub use panel::{
    cross_sectional_moments, dispersion_series, normalize_panel, pairwise_dispersion,
    survival_curve, survival_value, DispersionSeries, MissingDataPolicy, Moments, PanelError,
    PerformancePanel, PricePanel, SurvivalCurve,
};
pub use sim::{
    simulate_dispersion, validate_feasibility, variance_decay_study, Feasibility, GaussianSampler,
    SimConfig, SimError, SimResult,
};
pub use tail::{
    detect_extremes, hill_estimator, loglog_tail_fit, pareto_variance, tail_series, ExtremeEvent,
    ExtremeKind, KPolicy, TailError, TailEstimate, TailMethod, TailSeries,
};
pub use theory::{
    dispersion_bounds, equicorrelation_expected_dispersion, expected_dispersion, limit_dispersion,
    CorrelationSpec, CorrelationStructure, LimitFamily, TheoryError,
};

/// Calendar date type used for panel rows.
pub type Date = chrono::NaiveDate;
