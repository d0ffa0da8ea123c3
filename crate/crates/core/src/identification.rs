//! Assembly and solution of the twelve-equation calibration system.
//!
//! The system matrix is derived programmatically from the linearised
//! deviation formulas under cyclic axis symmetry (the same rows the
//! measurement module uses), so the matrix and the simulator can never
//! drift apart. Linear solves go through a rank-revealing SVD — the system
//! is moderately ill-conditioned because only the offset/length differences
//! are strongly observable — and the nonlinear refinement is a damped
//! least-squares iteration against the exact measurement model.

use nalgebra::{DMatrix, DVector, SMatrix, SVector, Vector3};
use thiserror::Error;

use crate::axis::Axis;
use crate::kinematics::{GeometryConfig, ParameterSet};
use crate::measurement::{
    canonical_index, deviation_coefficients, predict_deviations_exact, MeasurementError,
    MeasurementSet, PostureSign, CANONICAL_ORDER,
};

/// Relative singular-value threshold below which the selected columns are
/// treated as rank deficient.
pub const RANK_TOL: f64 = 1e-10;
/// Nonlinear solver termination: step norm below this is converged (mm).
pub const STEP_TOL_MM: f64 = 1e-9;
/// Nonlinear solver iteration cap.
pub const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Error)]
pub enum IdentificationError {
    #[error("rank-deficient system: singular values {singular_values:?}")]
    RankDeficient { singular_values: Vec<f64> },
    #[error(
        "nonlinear solve did not converge after {iterations} iterations \
         (last step norm {last_step_norm:.3e} mm)"
    )]
    DidNotConverge {
        iterations: usize,
        last_step_norm: f64,
        best: Box<CalibrationResult>,
    },
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
}

/// The six coefficients of the linearised system and the angles they were
/// evaluated at (`1` for Max postures, `2` for Min postures).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemCoefficients {
    pub alpha1: f64,
    pub alpha2: f64,
    pub a1: f64,
    pub b1: f64,
    pub c1: f64,
    pub a2: f64,
    pub b2: f64,
    pub c2: f64,
}

impl SystemCoefficients {
    pub fn from_config(config: &GeometryConfig) -> Self {
        let coeff = |alpha: f64| {
            let a = alpha.sin();
            let b = (0.5 + a) * alpha.tan();
            let c = (0.5 + a) / alpha.cos() - 0.5;
            (a, b, c)
        };
        let alpha1 = config.alpha_max();
        let alpha2 = config.alpha_min();
        let (a1, b1, c1) = coeff(alpha1);
        let (a2, b2, c2) = coeff(alpha2);
        SystemCoefficients { alpha1, alpha2, a1, b1, c1, a2, b2, c2 }
    }
}

/// Which of the six parameters a solve is allowed to adjust.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParameterSubset {
    Full,
    OffsetsOnly,
    LengthsOnly,
}

impl ParameterSubset {
    /// Stacked-parameter columns retained by this subset.
    pub fn columns(self) -> &'static [usize] {
        match self {
            ParameterSubset::Full => &[0, 1, 2, 3, 4, 5],
            ParameterSubset::OffsetsOnly => &[0, 1, 2],
            ParameterSubset::LengthsOnly => &[3, 4, 5],
        }
    }

    /// Scatter selected values into a stacked 6-vector, zeros elsewhere.
    pub fn embed(self, selected: &[f64]) -> [f64; 6] {
        let mut full = [0.0; 6];
        for (&col, &v) in self.columns().iter().zip(selected) {
            full[col] = v;
        }
        full
    }
}

impl std::fmt::Display for ParameterSubset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParameterSubset::Full => write!(f, "full"),
            ParameterSubset::OffsetsOnly => write!(f, "offsets"),
            ParameterSubset::LengthsOnly => write!(f, "lengths"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Linear,
    Nonlinear,
}

impl std::fmt::Display for SolveMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SolveMethod::Linear => write!(f, "linear"),
            SolveMethod::Nonlinear => write!(f, "nonlinear"),
        }
    }
}

/// The 12x6 linear calibration system `A theta = rhs` in canonical row order.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSystem {
    pub matrix: SMatrix<f64, 12, 6>,
    pub rhs: SVector<f64, 12>,
    pub coefficients: SystemCoefficients,
    pub nominal_leg_length: f64,
}

impl CalibrationSystem {
    /// Singular values of the column-restricted matrix, descending.
    pub fn singular_values(&self, subset: ParameterSubset) -> Vec<f64> {
        let a = self.selected_columns(subset);
        a.svd(false, false).singular_values.iter().copied().collect()
    }

    pub(crate) fn selected_columns(&self, subset: ParameterSubset) -> DMatrix<f64> {
        let cols = subset.columns();
        DMatrix::from_fn(12, cols.len(), |r, c| self.matrix[(r, cols[c])])
    }
}

/// Assemble the linear system from a complete measurement set.
pub fn build_system(measurements: &MeasurementSet, config: &GeometryConfig) -> CalibrationSystem {
    let mut matrix = SMatrix::<f64, 12, 6>::zeros();
    for (row, &(leg, dir, sign)) in CANONICAL_ORDER.iter().enumerate() {
        let coeffs = deviation_coefficients(leg, dir, sign, config);
        for (col, &v) in coeffs.iter().enumerate() {
            matrix[(row, col)] = v;
        }
    }
    CalibrationSystem {
        matrix,
        rhs: SVector::from(measurements.values()),
        coefficients: SystemCoefficients::from_config(config),
        nominal_leg_length: config.leg_length,
    }
}

/// Identified parameters plus residual bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    /// Identified parameter set; parameters outside the fitted subset stay
    /// at their nominal values.
    pub identified: ParameterSet,
    /// Measured deviations (residuals of the nominal model), canonical order.
    pub residuals_before: SVector<f64, 12>,
    /// Residuals after compensating with the identified parameters.
    pub residuals_after: SVector<f64, 12>,
    pub rms_before_mm: f64,
    pub rms_after_mm: f64,
    pub method: SolveMethod,
    pub subset: ParameterSubset,
    /// Accepted iterations (0 for the direct linear solve).
    pub iterations: usize,
    pub nominal_leg_length: f64,
}

impl CalibrationResult {
    /// The identified deltas stacked `(drho | dL)`.
    pub fn stacked_deltas(&self) -> [f64; 6] {
        let mut out = [0.0; 6];
        for i in 0..3 {
            out[i] = self.identified.joint_offsets[i];
            out[i + 3] = self.identified.leg_lengths[i] - self.nominal_leg_length;
        }
        out
    }
}

fn parameter_set_from_stacked(theta: [f64; 6], nominal_leg_length: f64) -> ParameterSet {
    ParameterSet {
        joint_offsets: Vector3::new(theta[0], theta[1], theta[2]),
        leg_lengths: Vector3::new(
            nominal_leg_length + theta[3],
            nominal_leg_length + theta[4],
            nominal_leg_length + theta[5],
        ),
    }
}

fn rms(v: &SVector<f64, 12>) -> f64 {
    (v.norm_squared() / 12.0).sqrt()
}

/// Minimum-norm least squares on the selected columns via SVD.
pub fn solve_linear(
    system: &CalibrationSystem,
    subset: ParameterSubset,
) -> Result<CalibrationResult, IdentificationError> {
    let a_sel = system.selected_columns(subset);
    let svd = a_sel.clone().svd(true, true);
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let max_sv = sv.iter().cloned().fold(0.0, f64::max);
    if sv.iter().any(|&s| s <= RANK_TOL * max_sv) || max_sv == 0.0 {
        return Err(IdentificationError::RankDeficient { singular_values: sv });
    }
    let rhs = DVector::from_column_slice(system.rhs.as_slice());
    let theta_sel = svd.solve(&rhs, 0.0).expect("SVD solve with computed u/v");

    let theta = subset.embed(theta_sel.as_slice());
    let predicted = system.matrix * SVector::<f64, 6>::from(theta);
    let residuals_after = system.rhs - predicted;
    let identified = parameter_set_from_stacked(theta, system.nominal_leg_length);
    Ok(CalibrationResult {
        identified,
        residuals_before: system.rhs,
        residuals_after,
        rms_before_mm: rms(&system.rhs),
        rms_after_mm: rms(&residuals_after),
        method: SolveMethod::Linear,
        subset,
        iterations: 0,
        nominal_leg_length: system.nominal_leg_length,
    })
}

/// Damped nonlinear least squares against the exact measurement model.
///
/// The Jacobian comes from central finite differences of
/// [`predict_deviations_exact`]; steps solve the damped normal equations
/// with the damping multiplied by 10 on rejection and divided by 10 on
/// acceptance, so the objective never increases across accepted steps.
/// Parameters outside `subset` are pinned at zero delta.
pub fn solve_nonlinear(
    measurements: &MeasurementSet,
    config: &GeometryConfig,
    subset: ParameterSubset,
    initial: &ParameterSet,
) -> Result<CalibrationResult, IdentificationError> {
    const FD_STEP: f64 = 1e-6;
    const DAMPING_INIT: f64 = 1e-3;
    const DAMPING_MAX: f64 = 1e12;

    let rhs = SVector::<f64, 12>::from(measurements.values());
    let cols = subset.columns();
    let n = cols.len();

    let residual = |x: &[f64]| -> Result<SVector<f64, 12>, MeasurementError> {
        let params = parameter_set_from_stacked(subset.embed(x), config.leg_length);
        let predicted = predict_deviations_exact(&params, config)?;
        Ok(rhs - SVector::<f64, 12>::from(predicted.values()))
    };

    let initial_deltas = initial.to_deltas(config).stacked();
    let mut x: Vec<f64> = cols.iter().map(|&c| initial_deltas[c]).collect();
    let mut r = residual(&x)?;
    let mut cost = r.norm_squared();
    let mut damping = DAMPING_INIT;
    let mut iterations = 0;
    let mut last_step_norm = f64::INFINITY;
    let mut converged = false;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        // central-difference Jacobian of the residual at the current iterate
        let mut jac = DMatrix::<f64>::zeros(12, n);
        for c in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += FD_STEP;
            xm[c] -= FD_STEP;
            let rp = residual(&xp)?;
            let rm = residual(&xm)?;
            for row in 0..12 {
                jac[(row, c)] = (rp[row] - rm[row]) / (2.0 * FD_STEP);
            }
        }
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * DVector::from_column_slice(r.as_slice());

        let mut accepted = false;
        while damping <= DAMPING_MAX {
            let mut damped = jtj.clone();
            for i in 0..n {
                damped[(i, i)] += damping;
            }
            let step = match damped.lu().solve(&(-&g)) {
                Some(s) => s,
                None => {
                    damping *= 10.0;
                    continue;
                }
            };
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(xi, si)| xi + si).collect();
            match residual(&trial) {
                Ok(rt) if rt.norm_squared().is_finite() && rt.norm_squared() <= cost => {
                    x = trial;
                    r = rt;
                    cost = r.norm_squared();
                    damping = (damping / 10.0).max(1e-12);
                    last_step_norm = step.norm();
                    accepted = true;
                    break;
                }
                // trial outside the reachable region or worse: reject, damp harder
                _ => damping *= 10.0,
            }
        }
        if accepted && last_step_norm < STEP_TOL_MM {
            converged = true;
            break;
        }
        if !accepted {
            break;
        }
    }

    let identified = parameter_set_from_stacked(subset.embed(&x), config.leg_length);
    let result = CalibrationResult {
        identified,
        residuals_before: rhs,
        residuals_after: r,
        rms_before_mm: rms(&rhs),
        rms_after_mm: rms(&r),
        method: SolveMethod::Nonlinear,
        subset,
        iterations,
        nominal_leg_length: config.leg_length,
    };
    if converged {
        Ok(result)
    } else {
        Err(IdentificationError::DidNotConverge {
            iterations,
            last_step_norm,
            best: Box::new(result),
        })
    }
}

/// One aggregated deviation `d<dir>_<leg> = (+) - (-)`, before and after
/// compensation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ImprovementRow {
    pub dir: Axis,
    pub leg: Axis,
    pub before_mm: f64,
    pub after_mm: f64,
}

/// The six aggregated deviations with their r.m.s. before/after compensation.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ImprovementTable {
    pub rows: [ImprovementRow; 6],
    pub rms_before_mm: f64,
    pub rms_after_mm: f64,
}

/// Aggregated `(dir, leg)` report order: dx_y, dx_z, dy_x, dy_z, dz_x, dz_y.
pub const AGGREGATE_ORDER: [(Axis, Axis); 6] = [
    (Axis::X, Axis::Y),
    (Axis::X, Axis::Z),
    (Axis::Y, Axis::X),
    (Axis::Y, Axis::Z),
    (Axis::Z, Axis::X),
    (Axis::Z, Axis::Y),
];

/// Aggregate the paired deviations of `measurements` and of the residuals
/// left by `result`, reporting both per pair and as r.m.s. values.
pub fn expected_improvement(
    measurements: &MeasurementSet,
    result: &CalibrationResult,
) -> ImprovementTable {
    let mut rows = [ImprovementRow {
        dir: Axis::X,
        leg: Axis::X,
        before_mm: 0.0,
        after_mm: 0.0,
    }; 6];
    let mut ss_before = 0.0;
    let mut ss_after = 0.0;
    for (i, &(dir, leg)) in AGGREGATE_ORDER.iter().enumerate() {
        let plus = canonical_index(leg, dir, PostureSign::Plus).expect("canonical");
        let minus = canonical_index(leg, dir, PostureSign::Minus).expect("canonical");
        let values = measurements.values();
        let before = values[plus] - values[minus];
        let after = result.residuals_after[plus] - result.residuals_after[minus];
        rows[i] = ImprovementRow { dir, leg, before_mm: before, after_mm: after };
        ss_before += before * before;
        ss_after += after * after;
    }
    ImprovementTable {
        rows,
        rms_before_mm: (ss_before / 6.0).sqrt(),
        rms_after_mm: (ss_after / 6.0).sqrt(),
    }
}
