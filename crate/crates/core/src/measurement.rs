//! The gauge-measurement model.
//!
//! Two dial indicators per leg sit at the leg's axial midpoint at the Zero
//! posture, touching the leg transversely along the two axes orthogonal to
//! it. The machine then visits the Max and Min travel postures of that leg
//! and the indicator differences (posture reading minus Zero reading) form
//! the twelve calibration observables.
//!
//! Everything the controller commands goes through the NOMINAL model: the
//! controller does not know the true parameters, which is precisely why the
//! deviations carry information about them.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::axis::Axis;
use crate::differential::Posture;
use crate::kinematics::{
    direct_kinematics, inverse_kinematics, ConfigurationIndices, GeometryConfig, JointVector,
    KinematicsError, ParameterSet,
};

#[derive(Debug, Error)]
pub enum MeasurementError {
    #[error("posture {posture} unreachable: {source}")]
    Unreachable {
        posture: Posture,
        #[source]
        source: KinematicsError,
    },
    #[error("gauge miss: {leg}-leg line no longer covers its station at posture {posture}")]
    GaugeMiss { leg: Axis, posture: Posture },
    #[error("measurement direction must differ from the leg axis (got {leg} twice)")]
    DirectionEqualsLeg { leg: Axis },
    #[error("incomplete measurement set; missing {missing:?}")]
    Incomplete { missing: Vec<String> },
    #[error("duplicate measurement entry {label}")]
    Duplicate { label: String },
}

/// Which extreme posture of the measured leg a deviation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PostureSign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl PostureSign {
    pub const BOTH: [PostureSign; 2] = [PostureSign::Plus, PostureSign::Minus];

    /// The posture this sign selects for measurements of `leg`.
    pub fn posture(self, leg: Axis) -> Posture {
        match self {
            PostureSign::Plus => Posture::Max(leg),
            PostureSign::Minus => Posture::Min(leg),
        }
    }

    pub fn symbol(self) -> char {
        match self {
            PostureSign::Plus => '+',
            PostureSign::Minus => '-',
        }
    }
}

/// One gauge deviation: the change of the `dir` coordinate of the `leg`
/// centre line at the fixed gauge station, between posture `sign` and Zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub leg: Axis,
    pub dir: Axis,
    pub sign: PostureSign,
    pub value_mm: f64,
}

impl Measurement {
    /// Math-style label, e.g. `dy_x+` for the y-deviation of the x-leg at Max.
    pub fn label(&self) -> String {
        format!("d{}_{}{}", self.dir, self.leg, self.sign.symbol())
    }
}

fn label_of(leg: Axis, dir: Axis, sign: PostureSign) -> String {
    format!("d{}_{}{}", dir, leg, sign.symbol())
}

/// Canonical `(leg, dir, sign)` order of the twelve deviations. This is the
/// row order of the linear calibration system, grouped in quadruples that
/// share Zero readings pairwise ((1,3) and (2,4) within each block).
pub const CANONICAL_ORDER: [(Axis, Axis, PostureSign); 12] = [
    (Axis::Y, Axis::X, PostureSign::Plus),
    (Axis::X, Axis::Y, PostureSign::Plus),
    (Axis::Y, Axis::X, PostureSign::Minus),
    (Axis::X, Axis::Y, PostureSign::Minus),
    (Axis::Z, Axis::Y, PostureSign::Plus),
    (Axis::Y, Axis::Z, PostureSign::Plus),
    (Axis::Z, Axis::Y, PostureSign::Minus),
    (Axis::Y, Axis::Z, PostureSign::Minus),
    (Axis::Z, Axis::X, PostureSign::Plus),
    (Axis::X, Axis::Z, PostureSign::Plus),
    (Axis::Z, Axis::X, PostureSign::Minus),
    (Axis::X, Axis::Z, PostureSign::Minus),
];

/// Position of a `(leg, dir, sign)` combination in the canonical order.
pub fn canonical_index(leg: Axis, dir: Axis, sign: PostureSign) -> Option<usize> {
    CANONICAL_ORDER
        .iter()
        .position(|&(l, d, s)| l == leg && d == dir && s == sign)
}

/// Where a measurement set came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    /// Noise-free model prediction.
    Predicted,
    /// Seeded Monte Carlo simulation of the gauging procedure.
    Simulated { seed: u64, sigma_mm: f64, repeats: u32 },
    /// Transcribed physical measurements.
    Experimental { label: String },
}

/// The twelve labelled gauge deviations, always in canonical order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasurementSet")]
pub struct MeasurementSet {
    pub provenance: Provenance,
    entries: Vec<Measurement>,
}

#[derive(Deserialize)]
struct RawMeasurementSet {
    provenance: Provenance,
    entries: Vec<Measurement>,
}

impl TryFrom<RawMeasurementSet> for MeasurementSet {
    type Error = MeasurementError;
    fn try_from(raw: RawMeasurementSet) -> Result<Self, Self::Error> {
        MeasurementSet::from_entries(raw.provenance, raw.entries)
    }
}

impl MeasurementSet {
    /// Validate completeness (all 12 combinations exactly once) and store in
    /// canonical order.
    pub fn from_entries(
        provenance: Provenance,
        entries: Vec<Measurement>,
    ) -> Result<Self, MeasurementError> {
        let mut slots: [Option<Measurement>; 12] = [None; 12];
        for m in entries {
            if m.dir == m.leg {
                return Err(MeasurementError::DirectionEqualsLeg { leg: m.leg });
            }
            let idx = canonical_index(m.leg, m.dir, m.sign)
                .expect("dir != leg implies a canonical slot exists");
            if slots[idx].is_some() {
                return Err(MeasurementError::Duplicate { label: m.label() });
            }
            slots[idx] = Some(m);
        }
        let missing: Vec<String> = CANONICAL_ORDER
            .iter()
            .zip(&slots)
            .filter(|(_, s)| s.is_none())
            .map(|(&(l, d, s), _)| label_of(l, d, s))
            .collect();
        if !missing.is_empty() {
            return Err(MeasurementError::Incomplete { missing });
        }
        Ok(MeasurementSet {
            provenance,
            entries: slots.into_iter().map(Option::unwrap).collect(),
        })
    }

    /// Build from a canonical-order value vector.
    pub fn from_values(provenance: Provenance, values: [f64; 12]) -> Self {
        let entries = CANONICAL_ORDER
            .iter()
            .zip(values)
            .map(|(&(leg, dir, sign), value_mm)| Measurement { leg, dir, sign, value_mm })
            .collect();
        MeasurementSet { provenance, entries }
    }

    pub fn entries(&self) -> &[Measurement] {
        &self.entries
    }

    /// Values in canonical order.
    pub fn values(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        for (i, m) in self.entries.iter().enumerate() {
            out[i] = m.value_mm;
        }
        out
    }

    pub fn value(&self, leg: Axis, dir: Axis, sign: PostureSign) -> f64 {
        self.entries[canonical_index(leg, dir, sign).expect("valid combination")].value_mm
    }
}

/// How the controller drives the machine to the Max/Min postures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostureCommandMode {
    /// Command the nominal Cartesian target through the nominal inverse
    /// kinematics (all three joints move).
    #[default]
    CartesianNominalIk,
    /// Drive only the posture's own joint to its limit, leaving the other
    /// two at their Zero readings. Breaks nominal leg parallelism; kept for
    /// comparison.
    DirectJoint,
}

/// Encoder readings the controller commands for a posture. Zero commands
/// relative `(0, 0, 0)` in both modes.
pub fn commanded_joints(
    posture: Posture,
    config: &GeometryConfig,
    mode: PostureCommandMode,
) -> JointVector {
    let nominal_zero = Vector3::repeat(config.leg_length);
    match posture {
        Posture::Zero => JointVector(nominal_zero),
        Posture::Max(axis) | Posture::Min(axis) => match mode {
            PostureCommandMode::CartesianNominalIk => inverse_kinematics(
                &posture.nominal_target(config),
                &ParameterSet::nominal(config),
                &ConfigurationIndices::default(),
            )
            .expect("nominal posture targets are reachable for a valid config"),
            PostureCommandMode::DirectJoint => {
                let mut rho = nominal_zero;
                rho[axis.index()] += posture.joint_travel(config);
                JointVector(rho)
            }
        },
    }
}

/// One dial-indicator pair: fixed axial station on a leg, set up at Zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaugeStation {
    pub leg: Axis,
    /// Coordinate along the leg's own axis at which the gauges contact it.
    /// Set once at the Zero posture and never moved.
    pub axial_mm: f64,
    /// Transverse readings at Zero, indexed in `leg.others()` order.
    pub zero_readings_mm: [f64; 2],
}

impl GaugeStation {
    pub fn zero_reading(&self, dir: Axis) -> f64 {
        let (j, _) = self.leg.others();
        if dir == j {
            self.zero_readings_mm[0]
        } else {
            self.zero_readings_mm[1]
        }
    }
}

/// Spatial line of one leg at one posture: from the prismatic joint centre
/// to the TCP, `s(mu) = mu * tcp + (1 - mu) * joint_centre`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegLine {
    pub leg: Axis,
    /// Joint centre `r_i` (on the leg's axis at the true joint coordinate).
    pub joint_centre: Vector3<f64>,
    /// Actual TCP position.
    pub tcp: Vector3<f64>,
}

impl LegLine {
    pub fn point_at(&self, mu: f64) -> Vector3<f64> {
        mu * self.tcp + (1.0 - mu) * self.joint_centre
    }

    /// Line parameter at a given axial coordinate, or `None` when the leg is
    /// exactly orthogonal to its axis (degenerate).
    pub fn param_at_axial(&self, axial: f64) -> Option<f64> {
        let i = self.leg.index();
        let span = self.joint_centre[i] - self.tcp[i];
        if span == 0.0 {
            return None;
        }
        Some((self.joint_centre[i] - axial) / span)
    }

    /// Whether the segment between TCP and joint centre covers an axial
    /// coordinate (i.e. `mu` falls in `[0, 1]`, with a small slack).
    pub fn covers_axial(&self, axial: f64) -> bool {
        match self.param_at_axial(axial) {
            Some(mu) => (-1e-9..=1.0 + 1e-9).contains(&mu),
            None => false,
        }
    }

    /// Transverse coordinates of the line at an axial station, in
    /// `leg.others()` order.
    pub fn transverse_at_axial(&self, axial: f64) -> Option<[f64; 2]> {
        let mu = self.param_at_axial(axial)?;
        let p = self.point_at(mu);
        let (j, k) = self.leg.others();
        Some([p[j.index()], p[k.index()]])
    }
}

/// Actual spatial line of `leg` when the controller commands `posture`.
pub fn leg_line(
    posture: Posture,
    leg: Axis,
    params: &ParameterSet,
    config: &GeometryConfig,
) -> Result<LegLine, MeasurementError> {
    leg_line_with(posture, leg, params, config, PostureCommandMode::default())
}

pub fn leg_line_with(
    posture: Posture,
    leg: Axis,
    params: &ParameterSet,
    config: &GeometryConfig,
    mode: PostureCommandMode,
) -> Result<LegLine, MeasurementError> {
    let cmd = commanded_joints(posture, config, mode);
    let tcp = direct_kinematics(&cmd, params)
        .map_err(|source| MeasurementError::Unreachable { posture, source })?;
    let i = leg.index();
    let mut joint_centre = Vector3::zeros();
    joint_centre[i] = cmd.0[i] + params.joint_offsets[i];
    Ok(LegLine {
        leg,
        joint_centre,
        tcp: tcp.0,
    })
}

/// Place the three gauge stations at the Zero posture of the actual machine.
pub fn gauge_stations(
    params: &ParameterSet,
    config: &GeometryConfig,
) -> Result<[GaugeStation; 3], MeasurementError> {
    gauge_stations_with(params, config, PostureCommandMode::default())
}

pub fn gauge_stations_with(
    params: &ParameterSet,
    config: &GeometryConfig,
    mode: PostureCommandMode,
) -> Result<[GaugeStation; 3], MeasurementError> {
    let mut out = [GaugeStation {
        leg: Axis::X,
        axial_mm: 0.0,
        zero_readings_mm: [0.0; 2],
    }; 3];
    for leg in Axis::ALL {
        let line = leg_line_with(Posture::Zero, leg, params, config, mode)?;
        let i = leg.index();
        let axial = 0.5 * (line.tcp[i] + line.joint_centre[i]);
        let readings = line
            .transverse_at_axial(axial)
            .expect("zero-posture leg line spans its axis");
        out[i] = GaugeStation {
            leg,
            axial_mm: axial,
            zero_readings_mm: readings,
        };
    }
    Ok(out)
}

/// Linearised coefficient row of one deviation w.r.t. the stacked deltas
/// `(drho_x, drho_y, drho_z, dL_x, dL_y, dL_z)`.
///
/// With `a = sin(alpha)`, `b = (0.5 + sin(alpha)) tan(alpha)` and
/// `c = (0.5 + sin(alpha))/cos(alpha) - 0.5` evaluated at the tilt angle of
/// the signed posture, the deviation of leg `j` along direction `i` is
/// `b drho_j + a drho_i - b dL_j - c dL_i`.
pub fn deviation_coefficients(
    leg: Axis,
    dir: Axis,
    sign: PostureSign,
    config: &GeometryConfig,
) -> [f64; 6] {
    let alpha = match sign {
        PostureSign::Plus => config.alpha_max(),
        PostureSign::Minus => config.alpha_min(),
    };
    let a = alpha.sin();
    let b = (0.5 + a) * alpha.tan();
    let c = (0.5 + a) / alpha.cos() - 0.5;
    let mut row = [0.0; 6];
    row[dir.index()] += a;
    row[leg.index()] += b;
    row[3 + dir.index()] -= c;
    row[3 + leg.index()] -= b;
    row
}

/// First-order prediction of the twelve deviations.
pub fn predict_deviations_linear(
    params: &ParameterSet,
    config: &GeometryConfig,
) -> MeasurementSet {
    let theta = params.to_deltas(config).stacked();
    let mut values = [0.0; 12];
    for (idx, &(leg, dir, sign)) in CANONICAL_ORDER.iter().enumerate() {
        let row = deviation_coefficients(leg, dir, sign, config);
        values[idx] = row.iter().zip(theta).map(|(r, t)| r * t).sum();
    }
    MeasurementSet::from_values(Provenance::Predicted, values)
}

/// What the two dial indicators of a station read against a leg line.
///
/// Fails with [`MeasurementError::GaugeMiss`] when the line's axial extent
/// no longer covers the station (the indicator tip would hang in the air).
pub fn gauge_reading(
    line: &LegLine,
    station: &GaugeStation,
    posture: Posture,
) -> Result<[f64; 2], MeasurementError> {
    if !line.covers_axial(station.axial_mm) {
        return Err(MeasurementError::GaugeMiss { leg: line.leg, posture });
    }
    Ok(line
        .transverse_at_axial(station.axial_mm)
        .expect("covered station has a line parameter"))
}

/// Raw transverse readings of every gauge at every posture it is used in:
/// `readings[leg][0 = Zero, 1 = Max, 2 = Min][dir in leg.others() order]`.
fn raw_readings(
    params: &ParameterSet,
    config: &GeometryConfig,
    mode: PostureCommandMode,
) -> Result<[[[f64; 2]; 3]; 3], MeasurementError> {
    let stations = gauge_stations_with(params, config, mode)?;
    let mut readings = [[[0.0; 2]; 3]; 3];
    for leg in Axis::ALL {
        let i = leg.index();
        let station = &stations[i];
        readings[i][0] = station.zero_readings_mm;
        for (slot, sign) in [(1usize, PostureSign::Plus), (2usize, PostureSign::Minus)] {
            let posture = sign.posture(leg);
            let line = leg_line_with(posture, leg, params, config, mode)?;
            readings[i][slot] = gauge_reading(&line, station, posture)?;
        }
    }
    Ok(readings)
}

fn deviations_from_readings(readings: &[[[f64; 2]; 3]; 3]) -> [f64; 12] {
    let mut values = [0.0; 12];
    for leg in Axis::ALL {
        let i = leg.index();
        let (j, k) = leg.others();
        for (slot, sign) in [(1usize, PostureSign::Plus), (2usize, PostureSign::Minus)] {
            for (t, dir) in [(0usize, j), (1usize, k)] {
                let idx = canonical_index(leg, dir, sign).expect("canonical combination");
                values[idx] = readings[i][slot][t] - readings[i][0][t];
            }
        }
    }
    values
}

/// Fully nonlinear prediction of the twelve deviations.
///
/// The controller commands every posture through the nominal model; the
/// machine executes them with the true `params`; the gauges read the leg
/// lines at their fixed stations. Agrees with
/// [`predict_deviations_linear`] to first order in the parameter deltas.
pub fn predict_deviations_exact(
    params: &ParameterSet,
    config: &GeometryConfig,
) -> Result<MeasurementSet, MeasurementError> {
    predict_deviations_exact_with(params, config, PostureCommandMode::default())
}

pub fn predict_deviations_exact_with(
    params: &ParameterSet,
    config: &GeometryConfig,
    mode: PostureCommandMode,
) -> Result<MeasurementSet, MeasurementError> {
    let readings = raw_readings(params, config, mode)?;
    Ok(MeasurementSet::from_values(
        Provenance::Predicted,
        deviations_from_readings(&readings),
    ))
}

/// Extra knobs for the simulator beyond the spec'd baseline.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimulationOptions {
    pub command_mode: PostureCommandMode,
    /// Dial resolution; each raw draw is rounded to the nearest multiple.
    /// Off by default: the identification math assumes continuous noise.
    pub quantization_mm: Option<f64>,
}

/// Simulate one full gauging procedure.
///
/// Zero-mean i.i.d. Gaussian noise of standard deviation `sigma_mm` is added
/// to each RAW reading (Zero, Max and Min independently) before differencing,
/// which reproduces the correlation between the `+` and `-` deviations of a
/// leg/direction pair that share a Zero reading. With `repeats = n` each raw
/// reading is the average of `n` independent draws. Deterministic in `seed`.
pub fn simulate_readings(
    params: &ParameterSet,
    config: &GeometryConfig,
    sigma_mm: f64,
    seed: u64,
    repeats: u32,
) -> Result<MeasurementSet, MeasurementError> {
    simulate_readings_with(params, config, sigma_mm, seed, repeats, SimulationOptions::default())
}

pub fn simulate_readings_with(
    params: &ParameterSet,
    config: &GeometryConfig,
    sigma_mm: f64,
    seed: u64,
    repeats: u32,
    options: SimulationOptions,
) -> Result<MeasurementSet, MeasurementError> {
    assert!(sigma_mm >= 0.0, "sigma must be non-negative");
    assert!(repeats >= 1, "at least one reading per posture");
    let mut readings = raw_readings(params, config, options.command_mode)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma_mm).expect("valid normal distribution");
    // fixed draw order: leg-major, posture, transverse direction, repeat
    for leg_readings in readings.iter_mut() {
        for posture_readings in leg_readings.iter_mut() {
            for reading in posture_readings.iter_mut() {
                let truth = *reading;
                let mut acc = 0.0;
                for _ in 0..repeats {
                    let mut sample = truth + noise.sample(&mut rng);
                    if let Some(res) = options.quantization_mm {
                        sample = (sample / res).round() * res;
                    }
                    acc += sample;
                }
                *reading = acc / repeats as f64;
            }
        }
    }
    Ok(MeasurementSet::from_values(
        Provenance::Simulated { seed, sigma_mm, repeats },
        deviations_from_readings(&readings),
    ))
}
