//! Seeded Monte Carlo for the dispersion of correlated Gaussian vectors.
//!
//! Replication `r` draws from its own ChaCha8 stream `r` under the run seed,
//! so results do not depend on how replications are scheduled across threads.
//! Per-replication values are reduced in replication order.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::panel::cross_sectional_moments;
use crate::theory::{expected_dispersion, CorrelationSpec, CorrelationStructure, TheoryError};

/// Eigenvalues at or above `-PSD_TOL` are accepted; those below `PSD_TOL` are
/// treated as zero when factorizing.
pub const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("correlation structure is not positive semidefinite (smallest eigenvalue {min_eigenvalue:.6e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("replication count must be at least 1")]
    ZeroReps,
    #[error("dispersion needs at least 2 components, spec has {0}")]
    TooSmall(usize),
    #[error(transparent)]
    Theory(#[from] TheoryError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub feasible: bool,
    /// Smallest eigenvalue of the correlation matrix.
    pub min_eigenvalue: f64,
    pub diagnostic: String,
}

/// Whether the spec's correlation structure is positive semidefinite.
pub fn validate_feasibility(spec: &CorrelationSpec) -> Feasibility {
    let n = spec.n();
    match spec.structure() {
        CorrelationStructure::Equicorrelation(rho) => {
            // Eigenvalues: 1 − ρ (multiplicity n − 1) and 1 + (n − 1)ρ.
            let min_eigenvalue = if n == 1 {
                1.0
            } else {
                (1.0 - rho).min(1.0 + (n - 1) as f64 * rho)
            };
            let feasible = min_eigenvalue >= -PSD_TOL;
            let diagnostic = if feasible {
                format!("equicorrelation rho={rho} is realizable for n={n}")
            } else {
                format!(
                    "equicorrelation rho={rho} is below -1/(n-1) = {:.6e} for n={n}; no joint distribution exists",
                    -1.0 / (n - 1) as f64
                )
            };
            Feasibility {
                feasible,
                min_eigenvalue,
                diagnostic,
            }
        }
        CorrelationStructure::FullMatrix(m) => {
            let eig = SymmetricEigen::new(m.clone());
            let min_eigenvalue = eig.eigenvalues.min();
            let feasible = min_eigenvalue >= -PSD_TOL;
            let diagnostic = if feasible {
                "correlation matrix is positive semidefinite".to_owned()
            } else {
                format!("correlation matrix has negative eigenvalue {min_eigenvalue:.6e}")
            };
            Feasibility {
                feasible,
                min_eigenvalue,
                diagnostic,
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Factor {
    /// `X_i = m_i + σ_i (√ρ Z + √(1−ρ) ε_i)`, valid for `ρ >= 0`.
    OneFactor { common: f64, idiosyncratic: f64 },
    /// Correlation square root `F` with `F Fᵀ = R`.
    Dense(DMatrix<f64>),
}

/// Draws vectors with mean `m_i` and covariance `ρ_ij σ_i σ_j`.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    means: Vec<f64>,
    sigmas: Vec<f64>,
    factor: Factor,
}

impl GaussianSampler {
    pub fn new(spec: &CorrelationSpec) -> Result<Self, SimError> {
        let feas = validate_feasibility(spec);
        if !feas.feasible {
            return Err(SimError::NotPsd {
                min_eigenvalue: feas.min_eigenvalue,
            });
        }
        let factor = match spec.structure() {
            CorrelationStructure::Equicorrelation(rho) if *rho >= 0.0 => Factor::OneFactor {
                common: rho.sqrt(),
                idiosyncratic: (1.0 - rho).sqrt(),
            },
            _ => Factor::Dense(correlation_root(spec.correlation_matrix())),
        };
        Ok(Self {
            means: spec.means().to_vec(),
            sigmas: spec.sigmas().to_vec(),
            factor,
        })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    /// Fills `out` with one draw.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        assert_eq!(out.len(), self.dim());
        match &self.factor {
            Factor::OneFactor {
                common,
                idiosyncratic,
            } => {
                let z: f64 = rng.sample(StandardNormal);
                for (i, x) in out.iter_mut().enumerate() {
                    let eps: f64 = rng.sample(StandardNormal);
                    *x = self.means[i] + self.sigmas[i] * (common * z + idiosyncratic * eps);
                }
            }
            Factor::Dense(f) => {
                let n = self.dim();
                let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                for (i, x) in out.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (j, zj) in z.iter().enumerate() {
                        acc += f[(i, j)] * zj;
                    }
                    *x = self.means[i] + self.sigmas[i] * acc;
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.sample_into(rng, &mut out);
        out
    }
}

fn correlation_root(r: DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(r);
    let roots = eig
        .eigenvalues
        .map(|l| if l < PSD_TOL { 0.0 } else { l.sqrt() });
    let mut f = eig.eigenvectors;
    for (j, mut col) in f.column_iter_mut().enumerate() {
        col *= roots[j];
    }
    f
}

/// One Gaussian draw for `spec` from `rng`.
pub fn sample_gaussian_vector<R: Rng + ?Sized>(
    spec: &CorrelationSpec,
    rng: &mut R,
) -> Result<Vec<f64>, SimError> {
    Ok(GaussianSampler::new(spec)?.sample(rng))
}

/// Random stream for replication `rep` under `seed`.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub spec: CorrelationSpec,
    pub reps: usize,
    pub seed: u64,
    /// Keep every replication's `V_N` in the result.
    pub keep_per_rep: bool,
}

impl SimConfig {
    pub fn new(spec: CorrelationSpec, reps: usize, seed: u64) -> Self {
        Self {
            spec,
            reps,
            seed,
            keep_per_rep: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub mean_vn: f64,
    /// Standard error of `mean_vn`, `sqrt(var_vn / reps)`.
    pub se_vn: f64,
    /// Sample (`1/(M−1)`) variance of `V_N` across replications; 0 when `M = 1`.
    pub var_vn: f64,
    pub per_rep: Option<Vec<f64>>,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
}

pub fn simulate_dispersion(config: &SimConfig) -> Result<SimResult, SimError> {
    if config.reps == 0 {
        return Err(SimError::ZeroReps);
    }
    let n = config.spec.n();
    if n < 2 {
        return Err(SimError::TooSmall(n));
    }
    let sampler = GaussianSampler::new(&config.spec)?;
    let seed = config.seed;

    let values: Vec<f64> = (0..config.reps)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |buf, rep| {
                let mut rng = replication_rng(seed, rep as u64);
                sampler.sample_into(&mut rng, buf);
                cross_sectional_moments(buf).expect("n >= 2").variance
            },
        )
        .collect();

    let m = values.len() as f64;
    let mean_vn = values.iter().sum::<f64>() / m;
    let var_vn = if values.len() > 1 {
        values
            .iter()
            .map(|v| (v - mean_vn) * (v - mean_vn))
            .sum::<f64>()
            / (m - 1.0)
    } else {
        0.0
    };
    Ok(SimResult {
        mean_vn,
        se_vn: (var_vn / m).sqrt(),
        var_vn,
        per_rep: config.keep_per_rep.then_some(values),
        n,
        reps: config.reps,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayPoint {
    pub n: usize,
    pub mean_vn: f64,
    /// Estimated `Var(V_N)`.
    pub var_vn: f64,
    /// Standard error of `var_vn` under a normal approximation, `var_vn · sqrt(2/(M−1))`.
    pub se_var: f64,
}

/// Estimates `Var(V_N)` for centered equicorrelated vectors at each `n`.
pub fn variance_decay_study(
    rho: f64,
    sigma: f64,
    n_list: &[usize],
    reps: usize,
    seed: u64,
) -> Result<Vec<DecayPoint>, SimError> {
    n_list
        .iter()
        .map(|&n| {
            let spec = CorrelationSpec::equicorrelated(n, rho, sigma)?;
            let res = simulate_dispersion(&SimConfig::new(spec, reps, seed))?;
            let se_var = if reps > 1 {
                res.var_vn * (2.0 / (reps - 1) as f64).sqrt()
            } else {
                f64::NAN
            };
            Ok(DecayPoint {
                n,
                mean_vn: res.mean_vn,
                var_vn: res.var_vn,
                se_var,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowSource {
    Simulated,
    Analytic,
}

/// One row of a correlation or volatility sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub rho: f64,
    pub sigma: f64,
    /// Closed-form `E(V_N)`.
    pub analytic: f64,
    pub feasible: bool,
    pub source: RowSource,
    pub simulated: Option<SimResult>,
}

/// Simulates every feasible `(rho, sigma)` pair and falls back to the
/// analytic value for infeasible ones.
pub fn dispersion_table(
    n: usize,
    params: &[(f64, f64)],
    reps: usize,
    seed: u64,
) -> Result<Vec<SweepRow>, SimError> {
    params
        .iter()
        .map(|&(rho, sigma)| {
            let spec = CorrelationSpec::equicorrelated(n, rho, sigma)?;
            let analytic = expected_dispersion(&spec);
            let feasible = validate_feasibility(&spec).feasible;
            let simulated = if feasible {
                Some(simulate_dispersion(&SimConfig::new(spec, reps, seed))?)
            } else {
                None
            };
            Ok(SweepRow {
                n,
                rho,
                sigma,
                analytic,
                feasible,
                source: if feasible {
                    RowSource::Simulated
                } else {
                    RowSource::Analytic
                },
                simulated,
            })
        })
        .collect()
}

/// `ρ ∈ {−1, −0.8, …, 1}`.
pub fn rho_grid() -> Vec<f64> {
    (-5..=5).map(|i| i as f64 / 5.0).collect()
}

/// `σ ∈ {0.1, 0.3, …, 1.9}`.
pub fn sigma_grid() -> Vec<f64> {
    (0..10).map(|i| (2 * i + 1) as f64 / 10.0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feasibility_examples() {
        let f =
            |n, rho| validate_feasibility(&CorrelationSpec::equicorrelated(n, rho, 1.0).unwrap());
        assert!(!f(1000, -0.2).feasible);
        assert!(f(1000, 0.0).feasible);
        assert!(f(2, -1.0).feasible);
        assert!(f(1000, -1.0 / 999.0).feasible);
        assert!(!f(3, -0.6).feasible);

        let bad = DMatrix::from_row_slice(3, 3, &[1.0, 0.9, -0.9, 0.9, 1.0, 0.9, -0.9, 0.9, 1.0]);
        let spec = CorrelationSpec::new(
            vec![0.0; 3],
            vec![1.0; 3],
            CorrelationStructure::FullMatrix(bad),
        )
        .unwrap();
        let rep = validate_feasibility(&spec);
        assert!(!rep.feasible);
        assert!(rep.min_eigenvalue < 0.0);
        assert!(matches!(
            GaussianSampler::new(&spec),
            Err(SimError::NotPsd { .. })
        ));
    }

    #[test]
    fn perfectly_correlated_components_coincide() {
        let spec = CorrelationSpec::equicorrelated(50, 1.0, 1.0).unwrap();
        let mut rng = replication_rng(7, 0);
        let x = sample_gaussian_vector(&spec, &mut rng).unwrap();
        assert!(x.iter().all(|v| (v - x[0]).abs() <= 1e-12));
    }

    #[test]
    fn antithetic_pair_sums_to_twice_mean() {
        let spec = CorrelationSpec::new(
            vec![0.7, 0.7],
            vec![1.0, 1.0],
            CorrelationStructure::Equicorrelation(-1.0),
        )
        .unwrap();
        let sampler = GaussianSampler::new(&spec).unwrap();
        let mut rng = replication_rng(3, 0);
        for _ in 0..1000 {
            let x = sampler.sample(&mut rng);
            assert!((x[0] + x[1] - 1.4).abs() <= 1e-12, "{x:?}");
        }
    }

    #[test]
    fn independent_draws_have_identity_covariance() {
        let n = 3;
        let draws = 100_000;
        let spec = CorrelationSpec::equicorrelated(n, 0.0, 1.0).unwrap();
        let sampler = GaussianSampler::new(&spec).unwrap();
        let mut rng = replication_rng(11, 0);
        let mut cov = [[0.0; 3]; 3];
        for _ in 0..draws {
            let x = sampler.sample(&mut rng);
            for i in 0..n {
                for j in 0..n {
                    cov[i][j] += x[i] * x[j];
                }
            }
        }
        // Standard error of a sample (co)variance of unit normals: sqrt(2/M) on
        // the diagonal, sqrt(1/M) off it.
        for i in 0..n {
            for j in 0..n {
                let c = cov[i][j] / draws as f64;
                let (target, se) = if i == j {
                    (1.0, (2.0 / draws as f64).sqrt())
                } else {
                    (0.0, (1.0 / draws as f64).sqrt())
                };
                assert!((c - target).abs() <= 4.0 * se, "cov[{i}][{j}] = {c}");
            }
        }
    }

    #[test]
    fn dense_and_one_factor_agree_in_distribution() {
        let n = 4;
        let rho = 0.3;
        let dense = CorrelationSpec::new(
            vec![0.0; n],
            vec![1.0; n],
            CorrelationStructure::FullMatrix(DMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    1.0
                } else {
                    rho
                }
            })),
        )
        .unwrap();
        let res = simulate_dispersion(&SimConfig::new(dense.clone(), 200_000, 5)).unwrap();
        let expected = expected_dispersion(&dense);
        assert!((res.mean_vn - expected).abs() <= 4.0 * res.se_vn);
    }

    #[test]
    fn simulation_errors() {
        let spec = CorrelationSpec::equicorrelated(10, 0.0, 1.0).unwrap();
        assert_eq!(
            simulate_dispersion(&SimConfig::new(spec, 0, 1)).unwrap_err(),
            SimError::ZeroReps
        );
        let spec = CorrelationSpec::equicorrelated(1000, -0.2, 1.0).unwrap();
        assert!(matches!(
            simulate_dispersion(&SimConfig::new(spec, 10, 1)),
            Err(SimError::NotPsd { .. })
        ));
        let spec = CorrelationSpec::equicorrelated(1, 0.0, 1.0).unwrap();
        assert_eq!(
            simulate_dispersion(&SimConfig::new(spec, 10, 1)).unwrap_err(),
            SimError::TooSmall(1)
        );
    }

    #[test]
    fn result_invariants_and_determinism() {
        let spec = CorrelationSpec::equicorrelated(20, 0.25, 1.5).unwrap();
        let mut cfg = SimConfig::new(spec, 500, 99);
        cfg.keep_per_rep = true;
        let a = simulate_dispersion(&cfg).unwrap();
        let b = simulate_dispersion(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.se_vn, (a.var_vn / 500.0).sqrt());
        assert!(a.mean_vn >= 0.0);
        assert_eq!(a.per_rep.as_ref().unwrap().len(), 500);

        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let c = single.install(|| simulate_dispersion(&cfg).unwrap());
        assert_eq!(a, c);
    }

    #[test]
    fn sigma_scaling_is_quadratic() {
        let spec = CorrelationSpec::equicorrelated(30, 0.5, 1.0).unwrap();
        let base = simulate_dispersion(&SimConfig::new(spec.clone(), 2000, 4)).unwrap();
        let scaled =
            simulate_dispersion(&SimConfig::new(spec.scaled(3.0).unwrap(), 2000, 4)).unwrap();
        assert!((scaled.mean_vn - 9.0 * base.mean_vn).abs() <= 1e-12 * scaled.mean_vn);
    }

    #[test]
    fn antithetic_pair_dispersion() {
        let spec = CorrelationSpec::equicorrelated(2, -1.0, 1.0).unwrap();
        let mut cfg = SimConfig::new(spec, 20_000, 8);
        cfg.keep_per_rep = true;
        let res = simulate_dispersion(&cfg).unwrap();
        assert!((res.mean_vn - 1.0).abs() <= 4.0 * res.se_vn);
    }

    #[test]
    fn decay_study_degenerate_at_full_correlation() {
        let pts = variance_decay_study(1.0, 1.0, &[10, 100], 200, 1).unwrap();
        assert!(pts.iter().all(|p| p.var_vn == 0.0 && p.mean_vn == 0.0));
    }

    #[test]
    fn grids() {
        assert_eq!(
            rho_grid(),
            vec![-1.0, -0.8, -0.6, -0.4, -0.2, 0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
        );
        assert_eq!(
            sigma_grid(),
            vec![0.1, 0.3, 0.5, 0.7, 0.9, 1.1, 1.3, 1.5, 1.7, 1.9]
        );
    }

    #[test]
    fn table_marks_infeasible_rows() {
        let rows = dispersion_table(100, &[(-0.5, 1.0), (0.5, 1.0)], 50, 2).unwrap();
        assert_eq!(rows[0].source, RowSource::Analytic);
        assert!(rows[0].simulated.is_none());
        assert_eq!(rows[1].source, RowSource::Simulated);
        assert!((rows[0].analytic - 0.99 * 1.5).abs() < 1e-12);
    }
}
