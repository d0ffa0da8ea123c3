//! Statistical accuracy of the identified parameters under gauge noise.
//!
//! Raw gauge readings carry zero-mean i.i.d. Gaussian noise. Because every
//! deviation subtracts the shared Zero reading of its gauge, the twelve
//! measurement errors are correlated in 4x4 blocks
//!
//! ```text
//! G = [2 0 1 0; 0 2 0 1; 1 0 2 0; 0 1 0 2]   (units of sigma^2)
//! ```
//!
//! and the parameter covariance follows from the pseudoinverse sandwich
//! `V = A+ Sigma (A+)^T`. A Monte Carlo driver validates the analytic
//! result empirically by running full simulate -> solve cycles.

use nalgebra::{DMatrix, DVector, SMatrix};
use thiserror::Error;

use crate::identification::{build_system, CalibrationSystem, ParameterSubset, RANK_TOL};
use crate::kinematics::{GeometryConfig, ParameterSet};
use crate::measurement::{simulate_readings, MeasurementError, MeasurementSet, Provenance};

#[derive(Debug, Error)]
pub enum AccuracyError {
    #[error("rank-deficient system: singular values {singular_values:?}")]
    RankDeficient { singular_values: Vec<f64> },
    #[error("monte-carlo trial with seed {seed} failed: {source}")]
    TrialFailed {
        seed: u64,
        #[source]
        source: MeasurementError,
    },
}

/// Gauge noise description: per-reading standard deviation and how many
/// repeated readings are averaged per posture.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NoiseModel {
    pub sigma_mm: f64,
    pub repeats: u32,
}

impl NoiseModel {
    pub fn new(sigma_mm: f64, repeats: u32) -> Self {
        assert!(sigma_mm >= 0.0 && repeats >= 1);
        NoiseModel { sigma_mm, repeats }
    }

    /// Variance of one averaged raw reading.
    fn reading_variance(&self) -> f64 {
        self.sigma_mm * self.sigma_mm / self.repeats as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AccuracySource {
    Analytic,
    MonteCarlo { trials: usize },
}

/// Covariance report for the six stacked parameters `(drho | dL)`.
/// Rows/columns outside the analysed subset are zero.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AccuracyReport {
    pub source: AccuracySource,
    pub subset: ParameterSubset,
    pub noise: NoiseModel,
    pub covariance_mm2: [[f64; 6]; 6],
    pub std_devs_mm: [f64; 6],
    /// Analytic-only companion computed with the correlation structure
    /// ignored (plain 2 sigma^2 I), so its effect stays visible.
    pub std_devs_uncorrelated_mm: Option<[f64; 6]>,
    pub correlation: [[f64; 6]; 6],
}

fn report_from_covariance(
    cov: [[f64; 6]; 6],
    source: AccuracySource,
    subset: ParameterSubset,
    noise: NoiseModel,
    uncorrelated: Option<[f64; 6]>,
) -> AccuracyReport {
    let mut std_devs = [0.0; 6];
    for i in 0..6 {
        std_devs[i] = cov[i][i].max(0.0).sqrt();
    }
    let mut correlation = [[0.0; 6]; 6];
    for i in 0..6 {
        for j in 0..6 {
            let denom = std_devs[i] * std_devs[j];
            correlation[i][j] = if denom > 0.0 { cov[i][j] / denom } else { 0.0 };
        }
    }
    AccuracyReport {
        source,
        subset,
        noise,
        covariance_mm2: cov,
        std_devs_mm: std_devs,
        std_devs_uncorrelated_mm: uncorrelated,
        correlation,
    }
}

/// Covariance of the twelve measurement errors in canonical order:
/// `sigma^2 / repeats * blockdiag(G, G, G)`.
pub fn correlated_noise_matrix(noise: &NoiseModel) -> SMatrix<f64, 12, 12> {
    let v = noise.reading_variance();
    let g = [
        [2.0, 0.0, 1.0, 0.0],
        [0.0, 2.0, 0.0, 1.0],
        [1.0, 0.0, 2.0, 0.0],
        [0.0, 1.0, 0.0, 2.0],
    ];
    let mut out = SMatrix::<f64, 12, 12>::zeros();
    for block in 0..3 {
        for r in 0..4 {
            for c in 0..4 {
                out[(4 * block + r, 4 * block + c)] = v * g[r][c];
            }
        }
    }
    out
}

fn pseudoinverse(
    system: &CalibrationSystem,
    subset: ParameterSubset,
) -> Result<DMatrix<f64>, AccuracyError> {
    let a_sel = system.selected_columns(subset);
    let svd = a_sel.svd(true, true);
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let max_sv = sv.iter().cloned().fold(0.0, f64::max);
    if max_sv == 0.0 || sv.iter().any(|&s| s <= RANK_TOL * max_sv) {
        return Err(AccuracyError::RankDeficient { singular_values: sv });
    }
    Ok(svd.pseudo_inverse(0.0).expect("svd with u/v computed"))
}

fn embed_covariance(subset: ParameterSubset, small: &DMatrix<f64>) -> [[f64; 6]; 6] {
    let cols = subset.columns();
    let mut out = [[0.0; 6]; 6];
    for (i, &ci) in cols.iter().enumerate() {
        for (j, &cj) in cols.iter().enumerate() {
            out[ci][cj] = small[(i, j)];
        }
    }
    out
}

/// Analytic covariance of the full six-parameter estimate.
pub fn analytic_covariance(
    system: &CalibrationSystem,
    noise: &NoiseModel,
) -> Result<AccuracyReport, AccuracyError> {
    analytic_covariance_for(system, noise, ParameterSubset::Full)
}

/// Analytic covariance restricted to a parameter subset.
pub fn analytic_covariance_for(
    system: &CalibrationSystem,
    noise: &NoiseModel,
    subset: ParameterSubset,
) -> Result<AccuracyReport, AccuracyError> {
    let pinv = pseudoinverse(system, subset)?;
    let sigma12 = correlated_noise_matrix(noise);
    let sigma_dyn = DMatrix::from_fn(12, 12, |r, c| sigma12[(r, c)]);
    let cov_small = &pinv * sigma_dyn * pinv.transpose();

    // same sandwich with correlations dropped: 2 sigma^2 / repeats * I
    let unc_scale = 2.0 * noise.reading_variance();
    let cov_unc = &pinv * pinv.transpose() * unc_scale;
    let mut unc = [0.0; 6];
    for (i, &ci) in subset.columns().iter().enumerate() {
        unc[ci] = cov_unc[(i, i)].max(0.0).sqrt();
    }

    Ok(report_from_covariance(
        embed_covariance(subset, &cov_small),
        AccuracySource::Analytic,
        subset,
        *noise,
        Some(unc),
    ))
}

/// Compensated (Kahan) accumulator; keeps the trial aggregation independent
/// of harmless reorderings.
#[derive(Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    fn add(&mut self, value: f64) {
        let y = value - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }
}

/// Empirical covariance of identified-minus-true parameters over repeated
/// simulate -> linear-solve cycles.
///
/// Trial `i` uses seed `seed ^ i`. The sample covariance is centred on the
/// known true parameters (truth is available in simulation), not on the
/// sample mean. Any failed trial aborts with its seed for reproduction.
pub fn monte_carlo_covariance(
    true_params: &ParameterSet,
    config: &GeometryConfig,
    noise: &NoiseModel,
    n_trials: usize,
    seed: u64,
    subset: ParameterSubset,
) -> Result<AccuracyReport, AccuracyError> {
    assert!(n_trials >= 100, "need at least 100 trials");
    // the system matrix does not depend on the data: factor once
    let probe = MeasurementSet::from_values(Provenance::Predicted, [0.0; 12]);
    let system = build_system(&probe, config);
    let a_sel = system.selected_columns(subset);
    let svd = a_sel.svd(true, true);
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let max_sv = sv.iter().cloned().fold(0.0, f64::max);
    if max_sv == 0.0 || sv.iter().any(|&s| s <= RANK_TOL * max_sv) {
        return Err(AccuracyError::RankDeficient { singular_values: sv });
    }

    let truth = true_params.to_deltas(config).stacked();
    let cols = subset.columns();
    let mut acc = [[Kahan::default(); 6]; 6];
    for trial in 0..n_trials {
        let trial_seed = seed ^ trial as u64;
        let meas =
            simulate_readings(true_params, config, noise.sigma_mm, trial_seed, noise.repeats)
                .map_err(|source| AccuracyError::TrialFailed { seed: trial_seed, source })?;
        let rhs = DVector::from_column_slice(&meas.values());
        let theta_sel = svd.solve(&rhs, 0.0).expect("svd with u/v computed");
        let mut delta = [0.0; 6];
        for (i, &c) in cols.iter().enumerate() {
            delta[c] = theta_sel[i] - truth[c];
        }
        // parameters outside the subset stay at zero: their deviation from
        // truth is systematic, not stochastic; keep it out of the covariance
        for &c in cols {
            for &d in cols {
                acc[c][d].add(delta[c] * delta[d]);
            }
        }
    }
    let mut cov = [[0.0; 6]; 6];
    for r in 0..6 {
        for c in 0..6 {
            cov[r][c] = acc[r][c].sum / n_trials as f64;
        }
    }
    Ok(report_from_covariance(
        cov,
        AccuracySource::MonteCarlo { trials: n_trials },
        subset,
        *noise,
        None,
    ))
}
