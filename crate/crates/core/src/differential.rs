//! Analytic Jacobians of TCP position with respect to the six calibration
//! parameters.
//!
//! Differentiating the sphere constraints at fixed encoder readings gives a
//! linear system per parameter block,
//!
//! ```text
//! M dp = diag(p_i - q_i) d(drho) + diag(L_i) dL
//! ```
//!
//! with `M` the 3x3 matrix whose i-th row is the constraint gradient
//! `(p - q_i e_i)` arranged by axis. The 3x6 parameter Jacobian
//! `J = [J_rho | J_L]` follows by solving the two right-hand-side blocks;
//! the system is solved rather than inverting `M` outright.

use nalgebra::{Matrix3, SMatrix, Vector3};
use thiserror::Error;

use crate::axis::Axis;
use crate::kinematics::{
    inverse_kinematics, CartesianPoint, ConfigurationIndices, GeometryConfig, JointVector,
    KinematicsError, ParameterSet,
};

/// Determinant threshold on the row-normalised constraint matrix.
/// Calibration postures sit far from singularities, so tripping this guard
/// indicates bad input rather than a marginal pose.
pub const SINGULARITY_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum DifferentialError {
    #[error("kinematically singular posture: normalised determinant {det:.3e}")]
    SingularPosture { det: f64 },
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

/// One of the seven calibration postures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Posture {
    /// Mechanical zero / isotropic posture, TCP at the origin.
    Zero,
    /// Maximum TCP displacement along the given axis.
    Max(Axis),
    /// Minimum (most negative) TCP displacement along the given axis.
    Min(Axis),
}

impl Posture {
    pub const ALL: [Posture; 7] = [
        Posture::Zero,
        Posture::Max(Axis::X),
        Posture::Max(Axis::Y),
        Posture::Max(Axis::Z),
        Posture::Min(Axis::X),
        Posture::Min(Axis::Y),
        Posture::Min(Axis::Z),
    ];

    pub fn axis(&self) -> Option<Axis> {
        match self {
            Posture::Zero => None,
            Posture::Max(a) | Posture::Min(a) => Some(*a),
        }
    }

    /// The commanded joint travel at this posture (`rho_max` or `rho_min`).
    pub fn joint_travel(&self, config: &GeometryConfig) -> f64 {
        match self {
            Posture::Zero => 0.0,
            Posture::Max(_) => config.joint_max,
            Posture::Min(_) => config.joint_min,
        }
    }

    /// Leg tilt angle at this posture: `asin(travel / L)`, zero at Zero.
    pub fn alpha(&self, config: &GeometryConfig) -> f64 {
        (self.joint_travel(config) / config.leg_length).asin()
    }

    /// Nominal Cartesian target of this posture.
    pub fn nominal_target(&self, config: &GeometryConfig) -> CartesianPoint {
        let mut p = Vector3::zeros();
        if let Some(axis) = self.axis() {
            p[axis.index()] = self.joint_travel(config);
        }
        CartesianPoint(p)
    }

    /// Nominal `(p, rho)` evaluation point of this posture.
    pub fn nominal_point(&self, config: &GeometryConfig) -> (CartesianPoint, JointVector) {
        let p = self.nominal_target(config);
        let rho = inverse_kinematics(
            &p,
            &ParameterSet::nominal(config),
            &ConfigurationIndices::default(),
        )
        .expect("nominal posture targets are always reachable for a valid config");
        (p, rho)
    }
}

impl std::fmt::Display for Posture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Posture::Zero => write!(f, "Zero"),
            Posture::Max(a) => write!(f, "{}Max", a.to_string().to_uppercase()),
            Posture::Min(a) => write!(f, "{}Min", a.to_string().to_uppercase()),
        }
    }
}

/// 3x6 sensitivity of TCP position to `(drho_x, drho_y, drho_z, dL_x, dL_y, dL_z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterJacobian {
    pub matrix: SMatrix<f64, 3, 6>,
    /// Evaluation point.
    pub point: (CartesianPoint, JointVector),
}

impl ParameterJacobian {
    /// The offset block `J_rho` (first three columns).
    pub fn offsets_block(&self) -> Matrix3<f64> {
        self.matrix.fixed_view::<3, 3>(0, 0).into_owned()
    }

    /// The leg-length block `J_L` (last three columns).
    pub fn lengths_block(&self) -> Matrix3<f64> {
        self.matrix.fixed_view::<3, 3>(0, 3).into_owned()
    }

    /// Row-major nested array, handy for JSON dumps.
    pub fn rows(&self) -> [[f64; 6]; 3] {
        let mut out = [[0.0; 6]; 3];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = self.matrix[(r, c)];
            }
        }
        out
    }
}

/// Parameter Jacobian at an arbitrary consistent `(p, rho)` pair.
pub fn jacobian_at(
    p: &CartesianPoint,
    rho: &JointVector,
    params: &ParameterSet,
) -> Result<ParameterJacobian, DifferentialError> {
    let q = rho.0 + params.joint_offsets;
    let mut m = Matrix3::zeros();
    for axis in Axis::ALL {
        let i = axis.index();
        for c in 0..3 {
            m[(i, c)] = if c == i { p.0[c] - q[i] } else { p.0[c] };
        }
    }

    // scale-invariant singularity guard
    let mut normalised = m;
    for i in 0..3 {
        let norm = m.row(i).norm();
        if norm == 0.0 {
            return Err(DifferentialError::SingularPosture { det: 0.0 });
        }
        for c in 0..3 {
            normalised[(i, c)] /= norm;
        }
    }
    let det = normalised.determinant();
    if det.abs() < SINGULARITY_TOL {
        return Err(DifferentialError::SingularPosture { det });
    }

    let rhs_rho = Matrix3::from_diagonal(&Vector3::new(
        p.0[0] - q[0],
        p.0[1] - q[1],
        p.0[2] - q[2],
    ));
    let rhs_len = Matrix3::from_diagonal(&params.leg_lengths);
    let lu = m.lu();
    let j_rho = lu
        .solve(&rhs_rho)
        .ok_or(DifferentialError::SingularPosture { det })?;
    let j_len = lu
        .solve(&rhs_len)
        .ok_or(DifferentialError::SingularPosture { det })?;

    let mut matrix = SMatrix::<f64, 3, 6>::zeros();
    matrix.fixed_view_mut::<3, 3>(0, 0).copy_from(&j_rho);
    matrix.fixed_view_mut::<3, 3>(0, 3).copy_from(&j_len);
    Ok(ParameterJacobian {
        matrix,
        point: (*p, *rho),
    })
}

/// Closed-form Jacobian at the nominal point of a calibration posture.
///
/// At Zero the matrix is `[I | -I]` (TCP displacement `drho - dL` per axis).
/// At Max/Min of axis i, with `T = tan(alpha)` and `C = cos(alpha)`:
/// the i-th row stays `(1 | -1)` on axis i, and each transverse row j picks
/// up `T` on `drho_i`, `1` on `drho_j`, `-T` on `dL_i` and `-1/C` on `dL_j`.
pub fn posture_jacobian(posture: Posture, config: &GeometryConfig) -> ParameterJacobian {
    let mut matrix = SMatrix::<f64, 3, 6>::zeros();
    match posture {
        Posture::Zero => {
            for i in 0..3 {
                matrix[(i, i)] = 1.0;
                matrix[(i, i + 3)] = -1.0;
            }
        }
        Posture::Max(axis) | Posture::Min(axis) => {
            let alpha = posture.alpha(config);
            let t = alpha.tan();
            let inv_c = 1.0 / alpha.cos();
            let i = axis.index();
            matrix[(i, i)] = 1.0;
            matrix[(i, i + 3)] = -1.0;
            for other in Axis::ALL {
                let j = other.index();
                if j == i {
                    continue;
                }
                matrix[(j, i)] = t;
                matrix[(j, j)] = 1.0;
                matrix[(j, i + 3)] = -t;
                matrix[(j, j + 3)] = -inv_c;
            }
        }
    }
    let point = posture.nominal_point(config);
    ParameterJacobian { matrix, point }
}
