//! Bundled reference measurement sets from the prototype calibration
//! campaign (see `data/` at the workspace root).
//!
//! * experiment 1 — before mechanical tuning of the actuator axes;
//! * experiment 2 — after tuning, the data the parameters were identified
//!   from;
//! * experiment 3 — after the identified joint offsets were loaded into the
//!   controller, used for verification.
//!
//! Only the paired differences of experiment 1 were recorded; its per-sign
//! entries are the symmetric split of those differences (zero common mode).

use crate::measurement::MeasurementSet;

pub const EXPERIMENT_1_JSON: &str =
    include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/experiment1.json"));
pub const EXPERIMENT_2_JSON: &str =
    include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/experiment2.json"));
pub const EXPERIMENT_3_JSON: &str =
    include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/experiment3.json"));

pub fn experiment1() -> MeasurementSet {
    serde_json::from_str(EXPERIMENT_1_JSON).expect("bundled experiment 1 parses")
}

pub fn experiment2() -> MeasurementSet {
    serde_json::from_str(EXPERIMENT_2_JSON).expect("bundled experiment 2 parses")
}

pub fn experiment3() -> MeasurementSet {
    serde_json::from_str(EXPERIMENT_3_JSON).expect("bundled experiment 3 parses")
}
