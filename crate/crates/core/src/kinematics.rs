//! Exact forward and inverse kinematics of the simplified three-leg PSS model.
//!
//! After shifting the Cartesian frame to absorb the tool offset, each leg i
//! imposes one sphere constraint on the TCP position `p`:
//!
//! ```text
//! (p_i - (rho_i + drho_i))^2 + p_j^2 + p_k^2 = L_i^2
//! ```
//!
//! where `rho_i` is the encoder reading of the prismatic joint, `drho_i` the
//! encoder offset and `L_i` the leg length. Joint coordinates are stored in
//! absolute machine form: the nominal Zero posture is `rho = (L, L, L)`,
//! `p = (0, 0, 0)`. Controller-relative readings (software limits -100..+60 mm
//! on the prototype) convert through [`JointVector::from_relative`] /
//! [`JointVector::to_relative`].

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::axis::Axis;

/// Consistency tolerance for exact-arithmetic checks, in mm^2.
pub const CONSISTENCY_TOL_MM2: f64 = 1e-9;
/// Round-trip tolerance limited by the conditioning of the direct-kinematics
/// quadratic, in mm.
pub const ROUNDTRIP_TOL_MM: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum KinematicsError {
    #[error("invalid geometry config: {0}")]
    InvalidConfig(String),
    #[error("target out of reach: negative radicand for leg(s) {legs:?}")]
    OutOfReach { legs: Vec<Axis> },
    #[error("singular joint coordinate on axis {axis}: rho + drho = 0")]
    SingularJoint { axis: Axis },
    #[error("no real direct-kinematics solution (discriminant {discriminant:.6e})")]
    NoRealSolution { discriminant: f64 },
    #[error("inconsistent (p, rho) pair: max constraint residual {residual_mm2:.3e} mm^2")]
    Inconsistent { residual_mm2: f64 },
}

/// Nominal machine geometry.
///
/// `r` and `d` (tool offset and parallelogram width) are carried for
/// reporting only; the simplified bar-link model eliminates both.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    /// Nominal leg length L.
    #[serde(rename = "L_mm")]
    pub leg_length: f64,
    /// Distance from the leg attachment points to the TCP.
    #[serde(rename = "r_mm")]
    pub tool_offset: f64,
    /// Parallelogram width.
    #[serde(rename = "d_mm")]
    pub parallelogram_width: f64,
    /// Lower software joint limit, relative to the Zero reading (negative).
    #[serde(rename = "rho_min_mm")]
    pub joint_min: f64,
    /// Upper software joint limit, relative to the Zero reading (positive).
    #[serde(rename = "rho_max_mm")]
    pub joint_max: f64,
}

impl GeometryConfig {
    /// The small-scale prototype this toolkit was validated against.
    pub fn prototype() -> Self {
        GeometryConfig {
            leg_length: 310.25,
            tool_offset: 31.0,
            parallelogram_width: 80.0,
            joint_min: -100.0,
            joint_max: 60.0,
        }
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        if self.leg_length.is_nan() || self.leg_length <= 0.0 {
            return Err(KinematicsError::InvalidConfig(format!(
                "L_mm must be positive, got {}",
                self.leg_length
            )));
        }
        if self.joint_min.is_nan()
            || self.joint_max.is_nan()
            || self.joint_min >= 0.0
            || self.joint_max <= 0.0
        {
            return Err(KinematicsError::InvalidConfig(format!(
                "limits must satisfy rho_min < 0 < rho_max, got [{}, {}]",
                self.joint_min, self.joint_max
            )));
        }
        if self.joint_min.abs() >= self.leg_length || self.joint_max.abs() >= self.leg_length {
            return Err(KinematicsError::InvalidConfig(
                "|joint limit| must stay below L so asin(rho/L) is defined".into(),
            ));
        }
        Ok(())
    }

    /// Leg tilt angle at the Max travel posture, `asin(rho_max / L)` (> 0).
    pub fn alpha_max(&self) -> f64 {
        (self.joint_max / self.leg_length).asin()
    }

    /// Leg tilt angle at the Min travel posture, `asin(rho_min / L)` (< 0).
    pub fn alpha_min(&self) -> f64 {
        (self.joint_min / self.leg_length).asin()
    }
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self::prototype()
    }
}

/// The six calibration unknowns: encoder offsets and absolute leg lengths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParameterSet {
    /// Encoder offsets drho, mm, indexed x/y/z.
    pub joint_offsets: Vector3<f64>,
    /// Absolute leg lengths L_i, mm, indexed x/y/z.
    pub leg_lengths: Vector3<f64>,
}

impl ParameterSet {
    /// The nominal set: zero offsets, every leg at the nominal length.
    pub fn nominal(config: &GeometryConfig) -> Self {
        ParameterSet {
            joint_offsets: Vector3::zeros(),
            leg_lengths: Vector3::repeat(config.leg_length),
        }
    }

    /// Build from the six deltas `(drho, dL)` relative to the nominal length.
    pub fn from_deltas(config: &GeometryConfig, drho: Vector3<f64>, dl: Vector3<f64>) -> Self {
        ParameterSet {
            joint_offsets: drho,
            leg_lengths: Vector3::repeat(config.leg_length) + dl,
        }
    }

    /// Leg-length deltas `dL_i = L_i - L` relative to the nominal length.
    pub fn leg_length_deltas(&self, config: &GeometryConfig) -> Vector3<f64> {
        self.leg_lengths - Vector3::repeat(config.leg_length)
    }

    /// The six deltas as the wire-format carrier.
    pub fn to_deltas(&self, config: &GeometryConfig) -> ParameterDeltas {
        ParameterDeltas {
            joint_offsets_mm: self.joint_offsets.into(),
            leg_length_deltas_mm: self.leg_length_deltas(config).into(),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.leg_lengths.iter().all(|&l| l > 0.0)
    }
}

/// JSON carrier for a [`ParameterSet`]: the six deltas in mm.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ParameterDeltas {
    #[serde(rename = "drho_mm")]
    pub joint_offsets_mm: [f64; 3],
    #[serde(rename = "dL_mm")]
    pub leg_length_deltas_mm: [f64; 3],
}

impl ParameterDeltas {
    pub fn into_parameter_set(self, config: &GeometryConfig) -> ParameterSet {
        ParameterSet::from_deltas(
            config,
            Vector3::from(self.joint_offsets_mm),
            Vector3::from(self.leg_length_deltas_mm),
        )
    }

    /// The deltas stacked as `(drho_x, drho_y, drho_z, dL_x, dL_y, dL_z)`.
    pub fn stacked(&self) -> [f64; 6] {
        [
            self.joint_offsets_mm[0],
            self.joint_offsets_mm[1],
            self.joint_offsets_mm[2],
            self.leg_length_deltas_mm[0],
            self.leg_length_deltas_mm[1],
            self.leg_length_deltas_mm[2],
        ]
    }
}

/// Encoder readings of the three prismatic joints, absolute coordinates (mm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointVector(pub Vector3<f64>);

impl JointVector {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        JointVector(Vector3::new(x, y, z))
    }

    /// Convert controller-relative readings (Zero at 0) to absolute form.
    pub fn from_relative(config: &GeometryConfig, relative: Vector3<f64>) -> Self {
        JointVector(relative.add_scalar(config.leg_length))
    }

    /// Controller-relative readings (Zero at 0).
    pub fn to_relative(&self, config: &GeometryConfig) -> Vector3<f64> {
        self.0.add_scalar(-config.leg_length)
    }

    /// Whether every joint lies within the software limits (inclusive, with
    /// a 1e-9 mm slack so commanded limit postures count as reachable).
    pub fn within_limits(&self, config: &GeometryConfig) -> bool {
        let lo = config.leg_length + config.joint_min - 1e-9;
        let hi = config.leg_length + config.joint_max + 1e-9;
        self.0.iter().all(|&r| r >= lo && r <= hi)
    }

    pub fn get(&self, axis: Axis) -> f64 {
        self.0[axis.index()]
    }
}

/// TCP position in the shifted frame (tool offset eliminated), mm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartesianPoint(pub Vector3<f64>);

impl CartesianPoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        CartesianPoint(Vector3::new(x, y, z))
    }

    pub fn origin() -> Self {
        CartesianPoint(Vector3::zeros())
    }

    pub fn get(&self, axis: Axis) -> f64 {
        self.0[axis.index()]
    }
}

/// Branch signs of the inverse kinematics, one per leg.
///
/// The prototype assembling mode and joint limits single out `(+1, +1, +1)`;
/// the other branches remain selectable for testing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfigurationIndices(pub [f64; 3]);

impl ConfigurationIndices {
    pub fn new(sx: i8, sy: i8, sz: i8) -> Self {
        debug_assert!([sx, sy, sz].iter().all(|s| s.abs() == 1));
        ConfigurationIndices([sx as f64, sy as f64, sz as f64])
    }
}

impl Default for ConfigurationIndices {
    fn default() -> Self {
        ConfigurationIndices([1.0, 1.0, 1.0])
    }
}

/// True joint-centre coordinates `q_i = rho_i + drho_i`.
fn joint_centres(rho: &JointVector, params: &ParameterSet) -> Vector3<f64> {
    rho.0 + params.joint_offsets
}

/// Inverse kinematics: `rho_i = p_i + s_i * sqrt(L_i^2 - p_j^2 - p_k^2) - drho_i`.
///
/// Fails with [`KinematicsError::OutOfReach`] listing every leg whose
/// radicand is negative. Joint limits are not checked here (the limits live
/// in [`GeometryConfig`]); use [`JointVector::within_limits`].
pub fn inverse_kinematics(
    p: &CartesianPoint,
    params: &ParameterSet,
    s: &ConfigurationIndices,
) -> Result<JointVector, KinematicsError> {
    let mut rho = Vector3::zeros();
    let mut bad = Vec::new();
    for axis in Axis::ALL {
        let i = axis.index();
        let (j, k) = axis.others();
        let li = params.leg_lengths[i];
        let radicand = li * li - p.0[j.index()].powi(2) - p.0[k.index()].powi(2);
        if radicand < 0.0 {
            bad.push(axis);
            continue;
        }
        rho[i] = p.0[i] + s.0[i] * radicand.sqrt() - params.joint_offsets[i];
    }
    if !bad.is_empty() {
        return Err(KinematicsError::OutOfReach { legs: bad });
    }
    Ok(JointVector(rho))
}

/// Per-leg residual of the sphere constraints, `LHS - L_i^2`, in mm^2.
///
/// All three residuals vanish (within [`CONSISTENCY_TOL_MM2`]) exactly when
/// `(p, rho)` is a kinematically consistent pair.
pub fn constraint_residuals(
    p: &CartesianPoint,
    rho: &JointVector,
    params: &ParameterSet,
) -> Vector3<f64> {
    let q = joint_centres(rho, params);
    let mut res = Vector3::zeros();
    for axis in Axis::ALL {
        let i = axis.index();
        let (j, k) = axis.others();
        let li = params.leg_lengths[i];
        res[i] = (p.0[i] - q[i]).powi(2) + p.0[j.index()].powi(2) + p.0[k.index()].powi(2)
            - li * li;
    }
    res
}

/// Direct kinematics for the `(+1, +1, +1)` assembly mode.
///
/// Subtracting the sphere constraints pairwise yields the parametric form
/// `p_i = q_i/2 + (t - L_i^2/2)/q_i` with `t = |p|^2/2`, and substituting
/// back reduces the problem to the quadratic `A t^2 + B t + C = 0` with
///
/// ```text
/// A = sum_{i<j} q_i^2 q_j^2
/// B = prod q_i^2 - sum_i L_i^2 q_j^2 q_k^2
/// C = (1/4) sum_i (q_i^2 - L_i^2)^2 q_j^2 q_k^2
/// ```
///
/// The selected assembly mode corresponds to the smaller root (`t = 0` at
/// the nominal Zero posture). `C` is assembled as a sum of non-negative
/// terms and the root is taken via the product form when `B < 0`, so the
/// nominal postures come out exact instead of losing half the mantissa to
/// cancellation.
pub fn direct_kinematics(
    rho: &JointVector,
    params: &ParameterSet,
) -> Result<CartesianPoint, KinematicsError> {
    let q = joint_centres(rho, params);
    for axis in Axis::ALL {
        if q[axis.index()] == 0.0 {
            return Err(KinematicsError::SingularJoint { axis });
        }
    }
    let l = &params.leg_lengths;
    let q2 = Vector3::new(q[0] * q[0], q[1] * q[1], q[2] * q[2]);
    let l2 = Vector3::new(l[0] * l[0], l[1] * l[1], l[2] * l[2]);
    // m_i = q_i^2 - L_i^2, in factored form for accuracy near the nominal posture
    let m = Vector3::new(
        (q[0] - l[0]) * (q[0] + l[0]),
        (q[1] - l[1]) * (q[1] + l[1]),
        (q[2] - l[2]) * (q[2] + l[2]),
    );
    // complementary products q_j^2 q_k^2 for each i
    let w = Vector3::new(q2[1] * q2[2], q2[2] * q2[0], q2[0] * q2[1]);

    let a = w[0] + w[1] + w[2];
    // B = (1/3) sum_i w_i (q_i^2 - 3 L_i^2): every term is negative in the
    // operating region, so this grouping avoids cancellation
    let b = (w[0] * (q2[0] - 3.0 * l2[0])
        + w[1] * (q2[1] - 3.0 * l2[1])
        + w[2] * (q2[2] - 3.0 * l2[2]))
        / 3.0;
    let c = 0.25 * (w[0] * m[0] * m[0] + w[1] * m[1] * m[1] + w[2] * m[2] * m[2]);

    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Err(KinematicsError::NoRealSolution { discriminant: disc });
    }
    let sq = disc.sqrt();
    // smaller root = near assembly mode; stable branch selection
    let t = if b < 0.0 {
        2.0 * c / (-b + sq)
    } else {
        (-b - sq) / (2.0 * a)
    };

    let p = Vector3::new(
        0.5 * q[0] + (t - 0.5 * l2[0]) / q[0],
        0.5 * q[1] + (t - 0.5 * l2[1]) / q[1],
        0.5 * q[2] + (t - 0.5 * l2[2]) / q[2],
    );
    Ok(CartesianPoint(p))
}

/// Orientation angles of one leg: `theta` in the plane spanned by the leg
/// axis and its cyclic-next axis, `beta` out of that plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegAngles {
    pub theta: f64,
    pub beta: f64,
}

/// Recover the internal parallelogram orientation angles of each leg.
///
/// The leg vector from the joint centre to the TCP is parametrised as
///
/// ```text
/// w_i = -L cos(theta) cos(beta)    (axial)
/// w_j =  L sin(theta) cos(beta)    (cyclic-next transverse)
/// w_k = -L sin(beta)               (remaining transverse)
/// ```
///
/// so both angles vanish at the nominal Zero posture. Fails with
/// [`KinematicsError::Inconsistent`] if `(p, rho)` violates the sphere
/// constraints by more than 1e-6 mm^2.
pub fn leg_angles(
    p: &CartesianPoint,
    rho: &JointVector,
    params: &ParameterSet,
) -> Result<[LegAngles; 3], KinematicsError> {
    let res = constraint_residuals(p, rho, params);
    let worst = res.iter().fold(0.0f64, |acc, r| acc.max(r.abs()));
    if worst > 1e-6 {
        return Err(KinematicsError::Inconsistent { residual_mm2: worst });
    }
    let q = joint_centres(rho, params);
    let mut out = [LegAngles { theta: 0.0, beta: 0.0 }; 3];
    for axis in Axis::ALL {
        let i = axis.index();
        let (j, k) = axis.others();
        let li = params.leg_lengths[i];
        let w_axial = p.0[i] - q[i];
        let w_j = p.0[j.index()];
        let w_k = p.0[k.index()];
        out[i] = LegAngles {
            theta: w_j.atan2(-w_axial),
            beta: (-w_k / li).asin(),
        };
    }
    Ok(out)
}

/// Rebuild the TCP position from the leg angles of leg `axis` (the inverse
/// of [`leg_angles`] for one leg); used to check the angle parametrisation.
pub fn tcp_from_leg_angles(
    axis: Axis,
    angles: &LegAngles,
    rho: &JointVector,
    params: &ParameterSet,
) -> CartesianPoint {
    let i = axis.index();
    let (j, k) = axis.others();
    let q_i = rho.0[i] + params.joint_offsets[i];
    let li = params.leg_lengths[i];
    let (st, ct) = angles.theta.sin_cos();
    let (sb, cb) = angles.beta.sin_cos();
    let mut p = Vector3::zeros();
    p[i] = q_i - li * ct * cb;
    p[j.index()] = li * st * cb;
    p[k.index()] = -li * sb;
    CartesianPoint(p)
}
