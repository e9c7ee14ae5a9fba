//! Expected dispersion as a function of means, volatilities and correlations.
//!
//! For performances with means `m_i`, standard deviations `σ_i` and
//! correlations `ρ_ij`,
//!
//! ```text
//! E(V_N) = (1/N) Σ σ_i² − (1/N²) Σ_ij ρ_ij σ_i σ_j + (1/N) Σ m_i² − ((1/N) Σ m_i)²
//! ```
//!
//! The expression is pure algebra and is evaluated for any symmetric
//! correlation matrix, including ones that no joint distribution realizes
//! (e.g. equicorrelation `ρ = −1` with `N > 2`). Realizability is reported
//! separately by [`crate::sim::validate_feasibility`].

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{validate_feasibility, Feasibility};

const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TheoryError {
    #[error("dimension mismatch: {what} has length {found}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("universe size {0} is too small (need at least {1})")]
    TooSmall(usize, usize),
    #[error("standard deviation {0} must be positive and finite")]
    InvalidSigma(f64),
    #[error("invalid correlation: {0}")]
    InvalidCorrelation(String),
    #[error("no limit available: {0}")]
    NoLimit(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum CorrelationStructure {
    /// Common off-diagonal correlation `ρ ∈ [−1, 1]`.
    Equicorrelation(f64),
    /// Symmetric, unit-diagonal matrix with entries in `[−1, 1]`.
    FullMatrix(DMatrix<f64>),
}

/// Means, standard deviations and correlations of `n` performances.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSpec {
    means: Vec<f64>,
    sigmas: Vec<f64>,
    structure: CorrelationStructure,
}

impl CorrelationSpec {
    pub fn new(
        means: Vec<f64>,
        sigmas: Vec<f64>,
        structure: CorrelationStructure,
    ) -> Result<Self, TheoryError> {
        let n = sigmas.len();
        if n == 0 {
            return Err(TheoryError::TooSmall(0, 1));
        }
        if means.len() != n {
            return Err(TheoryError::DimensionMismatch {
                what: "means",
                expected: n,
                found: means.len(),
            });
        }
        if let Some(&s) = sigmas.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(TheoryError::InvalidSigma(s));
        }
        match &structure {
            CorrelationStructure::Equicorrelation(rho) => check_rho(*rho)?,
            CorrelationStructure::FullMatrix(m) => {
                if m.nrows() != n || m.ncols() != n {
                    return Err(TheoryError::DimensionMismatch {
                        what: "correlation matrix",
                        expected: n,
                        found: if m.nrows() != n { m.nrows() } else { m.ncols() },
                    });
                }
                for i in 0..n {
                    if m[(i, i)] != 1.0 {
                        return Err(TheoryError::InvalidCorrelation(format!(
                            "diagonal entry ({i},{i}) is {}, expected 1",
                            m[(i, i)]
                        )));
                    }
                    for j in 0..i {
                        check_rho(m[(i, j)])?;
                        if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL {
                            return Err(TheoryError::InvalidCorrelation(format!(
                                "matrix is not symmetric at ({i},{j})"
                            )));
                        }
                    }
                }
            }
        }
        Ok(Self {
            means,
            sigmas,
            structure,
        })
    }

    /// `n` centered performances with common `sigma` and correlation `rho`.
    pub fn equicorrelated(n: usize, rho: f64, sigma: f64) -> Result<Self, TheoryError> {
        Self::new(
            vec![0.0; n],
            vec![sigma; n],
            CorrelationStructure::Equicorrelation(rho),
        )
    }

    pub fn n(&self) -> usize {
        self.sigmas.len()
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn structure(&self) -> &CorrelationStructure {
        &self.structure
    }

    pub fn rho(&self, i: usize, j: usize) -> f64 {
        match &self.structure {
            _ if i == j => 1.0,
            CorrelationStructure::Equicorrelation(rho) => *rho,
            CorrelationStructure::FullMatrix(m) => m[(i, j)],
        }
    }

    pub fn correlation_matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| self.rho(i, j))
    }

    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| {
            self.rho(i, j) * self.sigmas[i] * self.sigmas[j]
        })
    }

    /// Same spec with every standard deviation multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, TheoryError> {
        Self::new(
            self.means.clone(),
            self.sigmas.iter().map(|s| s * factor).collect(),
            self.structure.clone(),
        )
    }

    pub fn feasibility(&self) -> Feasibility {
        validate_feasibility(self)
    }
}

fn check_rho(rho: f64) -> Result<(), TheoryError> {
    if (-1.0..=1.0).contains(&rho) {
        Ok(())
    } else {
        Err(TheoryError::InvalidCorrelation(format!(
            "correlation {rho} outside [-1, 1]"
        )))
    }
}

/// `E(V_N)` for the given spec.
pub fn expected_dispersion(spec: &CorrelationSpec) -> f64 {
    let n = spec.n() as f64;
    let sigmas = spec.sigmas();

    let mean_var = sigmas.iter().map(|s| s * s).sum::<f64>() / n;
    let cross = match spec.structure() {
        CorrelationStructure::Equicorrelation(rho) => {
            // Σ_ij ρ_ij σ_i σ_j = (1 − ρ) Σ σ_i² + ρ (Σ σ_i)²
            let sum_sq = sigmas.iter().map(|s| s * s).sum::<f64>();
            let sum = sigmas.iter().sum::<f64>();
            (1.0 - rho) * sum_sq + rho * sum * sum
        }
        CorrelationStructure::FullMatrix(m) => {
            let mut total = 0.0;
            for i in 0..sigmas.len() {
                for j in 0..sigmas.len() {
                    total += m[(i, j)] * sigmas[i] * sigmas[j];
                }
            }
            total
        }
    } / (n * n);

    // (1/N) Σ m_i² − ((1/N) Σ m_i)², taken as the spread of the means.
    let means = spec.means();
    let m_bar = means.iter().sum::<f64>() / n;
    let mean_spread = means.iter().map(|m| (m - m_bar) * (m - m_bar)).sum::<f64>() / n;

    mean_var - cross + mean_spread
}

/// `E(V_N) = (1 − 1/n)(1 − ρ) σ²` for centered, equicorrelated performances.
pub fn equicorrelation_expected_dispersion(
    n: usize,
    rho: f64,
    sigma: f64,
) -> Result<f64, TheoryError> {
    if n < 2 {
        return Err(TheoryError::TooSmall(n, 2));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(TheoryError::InvalidSigma(sigma));
    }
    check_rho(rho)?;
    Ok((1.0 - 1.0 / n as f64) * (1.0 - rho) * sigma * sigma)
}

/// A family of specs indexed by `N`, described by the limits of its averages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LimitFamily {
    /// Common `ρ`, common `σ`, common mean.
    Equicorrelation { rho: f64, sigma: f64 },
    /// Cesàro limits of the four averages; `None` marks a limit that is not known.
    TermLimits {
        /// `lim (1/N) Σ σ_i²`
        mean_variance: Option<f64>,
        /// `lim (1/N²) Σ_ij ρ_ij σ_i σ_j`
        mean_covariance: Option<f64>,
        /// `lim (1/N) Σ m_i²`
        mean_square_mean: Option<f64>,
        /// `lim (1/N) Σ m_i`
        mean_mean: Option<f64>,
    },
}

/// Large-`N` limit of `E(V_N)`, which is also the probability limit of `V_N`
/// whenever `Var(V_N) → 0`.
pub fn limit_dispersion(family: &LimitFamily) -> Result<f64, TheoryError> {
    match *family {
        LimitFamily::Equicorrelation { rho, sigma } => {
            check_rho(rho)?;
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(TheoryError::InvalidSigma(sigma));
            }
            Ok((1.0 - rho) * sigma * sigma)
        }
        LimitFamily::TermLimits {
            mean_variance,
            mean_covariance,
            mean_square_mean,
            mean_mean,
        } => {
            let term = |v: Option<f64>, name: &str| {
                v.filter(|x| x.is_finite())
                    .ok_or_else(|| TheoryError::NoLimit(format!("limit of {name} not provided")))
            };
            let a = term(mean_variance, "(1/N) Σ σ_i²")?;
            let b = term(mean_covariance, "(1/N²) Σ ρ_ij σ_i σ_j")?;
            let c = term(mean_square_mean, "(1/N) Σ m_i²")?;
            let d = term(mean_mean, "(1/N) Σ m_i")?;
            Ok(a - b + c - d * d)
        }
    }
}

/// `(0, 2 − 2/n)`: range of `E(V_N)` over correlation structures for centered,
/// unit-variance performances, attained at `ρ ≡ 1` and `ρ ≡ −1`.
pub fn dispersion_bounds(n: usize) -> Result<(f64, f64), TheoryError> {
    if n < 2 {
        return Err(TheoryError::TooSmall(n, 2));
    }
    Ok((0.0, 2.0 - 2.0 / n as f64))
}

/// Limit of [`dispersion_bounds`] as `n → ∞`.
pub const ASYMPTOTIC_DISPERSION_BOUNDS: (f64, f64) = (0.0, 2.0);
