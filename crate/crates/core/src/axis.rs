//! Cartesian axis labels shared by every module.

use serde::{Deserialize, Serialize};
use std::fmt;

/// One of the three actuated directions of the machine.
///
/// The legs, the prismatic joints and the gauge directions are all named by
/// the axis they are aligned with at the nominal Zero posture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    #[serde(rename = "x")]
    X,
    #[serde(rename = "y")]
    Y,
    #[serde(rename = "z")]
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    /// Index into 3-vectors (x = 0, y = 1, z = 2).
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn from_index(i: usize) -> Axis {
        Self::ALL[i]
    }

    /// Next axis in cyclic order x -> y -> z -> x.
    pub fn next(self) -> Axis {
        match self {
            Axis::X => Axis::Y,
            Axis::Y => Axis::Z,
            Axis::Z => Axis::X,
        }
    }

    /// The two axes transverse to `self`, in cyclic order `(next, next.next)`.
    ///
    /// This is the order in which the leg parametrisation lists its
    /// transverse components: for the x-leg the pair is (y, z), for the
    /// y-leg (z, x), for the z-leg (x, y).
    pub fn others(self) -> (Axis, Axis) {
        (self.next(), self.next().next())
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Axis::X => write!(f, "x"),
            Axis::Y => write!(f, "y"),
            Axis::Z => write!(f, "z"),
        }
    }
}
