//! Acceptance suite: one test per criterion, each printing a pass/fail line.
//!
//! Criteria 1 and 2 carry sub-checks that are not reproducible from the
//! two-decimal reference data (see the FAIL diagnostics they print); they
//! are asserted as specified anyway and fail honestly rather than being
//! loosened to pass.

use std::time::Instant;

use nalgebra::{SVector, Vector3};
use orthocal::accuracy::{
    analytic_covariance, analytic_covariance_for, monte_carlo_covariance, NoiseModel,
};
use orthocal::datasets;
use orthocal::differential::{jacobian_at, posture_jacobian, Posture};
use orthocal::identification::{
    build_system, expected_improvement, solve_linear, solve_nonlinear, ParameterSubset,
};
use orthocal::kinematics::{
    direct_kinematics, inverse_kinematics, CartesianPoint, ConfigurationIndices, GeometryConfig,
    ParameterSet,
};
use orthocal::measurement::{
    canonical_index, predict_deviations_linear, simulate_readings, PostureSign, CANONICAL_ORDER,
};
use orthocal::Axis;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Collects sub-check outcomes so one criterion reports every failure at once.
struct Checks {
    name: &'static str,
    failures: Vec<String>,
    passes: usize,
}

impl Checks {
    fn new(name: &'static str) -> Self {
        Checks { name, failures: Vec::new(), passes: 0 }
    }

    fn check(&mut self, label: &str, ok: bool, detail: String) {
        if ok {
            self.passes += 1;
            println!("  [ok]   {label}: {detail}");
        } else {
            println!("  [FAIL] {label}: {detail}");
            self.failures.push(format!("{label}: {detail}"));
        }
    }

    fn within(&mut self, label: &str, got: f64, expected: f64, tol: f64) {
        self.check(
            label,
            (got - expected).abs() <= tol,
            format!("{got:.4} vs {expected:.4} (tol {tol})"),
        );
    }

    fn finish(self) {
        if self.failures.is_empty() {
            println!("{}: PASS ({} sub-checks)", self.name, self.passes);
        } else {
            println!("{}: FAIL ({} of {} sub-checks failed)", self.name, self.failures.len(), self.passes + self.failures.len());
            panic!("{} failed sub-checks:\n  {}", self.name, self.failures.join("\n  "));
        }
    }
}

fn config() -> GeometryConfig {
    GeometryConfig::prototype()
}

#[test]
fn criterion_1_reference_identification() {
    let start = Instant::now();
    let mut c = Checks::new("acceptance criterion 1 (reference-data identification)");
    let cfg = config();
    let system = build_system(&datasets::experiment2(), &cfg);

    let full = solve_linear(&system, ParameterSubset::Full).unwrap();
    let got = full.stacked_deltas();
    let reference = [4.66, -5.36, 1.46, 5.20, -5.96, 3.16];
    let names = ["drho_x", "drho_y", "drho_z", "dL_x", "dL_y", "dL_z"];
    for i in 0..6 {
        c.within(&format!("full-set {}", names[i]), got[i], reference[i], 0.15);
    }
    // diagnostic context for the expected full-set failures: the weakly
    // observable offset+length direction amplifies the two-decimal rounding
    // of the reference data by 1/sigma_min ~ 60, so only the difference
    // combination is reproducible from the published values
    for i in 0..3 {
        let diff_got = got[i] - got[i + 3];
        let diff_ref = reference[i] - reference[i + 3];
        c.within(
            &format!("full-set observable combination drho-dL ({})", names[i]),
            diff_got,
            diff_ref,
            0.15,
        );
    }

    let rho = solve_linear(&system, ParameterSubset::OffsetsOnly).unwrap();
    let rho_got = rho.stacked_deltas();
    for (i, expected) in [-0.48, 0.49, -1.67].iter().enumerate() {
        c.within(&format!("offsets-only {}", names[i]), rho_got[i], *expected, 0.05);
    }
    let len = solve_linear(&system, ParameterSubset::LengthsOnly).unwrap();
    let len_got = len.stacked_deltas();
    for (i, expected) in [0.50, -0.52, 1.69].iter().enumerate() {
        c.within(&format!("lengths-only {}", names[i + 3]), len_got[i + 3], *expected, 0.05);
    }

    c.within("full-set residual rms", full.rms_after_mm, 0.12, 0.03);
    c.within("offsets-only residual rms", rho.rms_after_mm, 0.14, 0.03);
    c.within("lengths-only residual rms", len.rms_after_mm, 0.14, 0.03);

    let elapsed = start.elapsed();
    c.check(
        "runtime < 1 s",
        elapsed.as_secs_f64() < 1.0,
        format!("{:.3} s", elapsed.as_secs_f64()),
    );
    c.finish();
}

#[test]
fn criterion_2_noise_propagation() {
    let start = Instant::now();
    let mut c = Checks::new("acceptance criterion 2 (noise propagation to parameters)");
    let cfg = config();
    let system = build_system(&datasets::experiment2(), &cfg);
    let noise = NoiseModel::new(0.01, 1);

    let analytic = analytic_covariance(&system, &noise).unwrap();
    for (i, s) in analytic.std_devs_mm.iter().enumerate() {
        c.check(
            &format!("analytic std dev parameter {i} in [0.05, 0.09] mm"),
            (0.05..=0.09).contains(s),
            format!("{s:.4} mm"),
        );
    }
    // diagnostic: the quoted ~0.07 mm level is what this covariance yields at
    // sigma = 1e-3 mm; at sigma = 1e-2 the weakly observable directions give
    // ~0.73 mm (see decisions ledger)
    let at_1um = analytic_covariance(&system, &NoiseModel::new(0.001, 1)).unwrap();
    println!(
        "  [info] same covariance at sigma = 0.001 mm: std devs {:.4} / {:.4} mm",
        at_1um.std_devs_mm[0], at_1um.std_devs_mm[3]
    );

    let mc = monte_carlo_covariance(
        &ParameterSet::nominal(&cfg),
        &cfg,
        &noise,
        10_000,
        2024,
        ParameterSubset::Full,
    )
    .unwrap();
    let mut worst_diag: f64 = 0.0;
    let mut worst_off: f64 = 0.0;
    for i in 0..6 {
        for j in 0..6 {
            let a = analytic.covariance_mm2[i][j];
            let m = mc.covariance_mm2[i][j];
            if i == j {
                worst_diag = worst_diag.max((m - a).abs() / a);
            } else {
                // off-diagonal scale: geometric mean of the variances
                let scale = (analytic.covariance_mm2[i][i] * analytic.covariance_mm2[j][j]).sqrt();
                worst_off = worst_off.max((m - a).abs() / scale);
            }
        }
    }
    c.check(
        "monte-carlo variances within 10% of analytic",
        worst_diag < 0.10,
        format!("worst relative deviation {worst_diag:.3}"),
    );
    c.check(
        "monte-carlo covariances within 10% of analytic (scale-relative)",
        worst_off < 0.10,
        format!("worst scaled deviation {worst_off:.3}"),
    );

    let elapsed = start.elapsed();
    c.check(
        "runtime < 30 s",
        elapsed.as_secs_f64() < 30.0,
        format!("{:.1} s", elapsed.as_secs_f64()),
    );
    c.finish();
}

#[test]
fn criterion_3_improvement_statistics() {
    let mut c = Checks::new("acceptance criterion 3 (aggregated improvement statistics)");
    let cfg = config();

    let exp1 = datasets::experiment1();
    let sys1 = build_system(&exp1, &cfg);
    let res1 = solve_linear(&sys1, ParameterSubset::Full).unwrap();
    let table1 = expected_improvement(&exp1, &res1);
    c.within("experiment 1 rms before", table1.rms_before_mm, 1.19, 0.03);
    c.within("experiment 1 rms after", table1.rms_after_mm, 0.74, 0.03);

    let exp2 = datasets::experiment2();
    let sys2 = build_system(&exp2, &cfg);
    let res2 = solve_linear(&sys2, ParameterSubset::Full).unwrap();
    let table2 = expected_improvement(&exp2, &res2);
    c.within("experiment 2 rms before", table2.rms_before_mm, 0.62, 0.03);
    c.within("experiment 2 rms after", table2.rms_after_mm, 0.20, 0.03);

    c.finish();
}

#[test]
fn criterion_4_verification_experiment() {
    let mut c = Checks::new("acceptance criterion 4 (verification against experiment 3)");
    let cfg = config();

    // identify offsets from experiment 2, then confront the deviations
    // measured after those offsets were loaded into the controller
    let sys2 = build_system(&datasets::experiment2(), &cfg);
    let rho = solve_linear(&sys2, ParameterSubset::OffsetsOnly).unwrap();
    let measured = SVector::<f64, 12>::from(datasets::experiment3().values());

    let rms = (measured.norm_squared() / 12.0).sqrt();
    let max = measured.amax();
    c.within("measured post-calibration rms", rms, 0.15, 0.03);
    c.check(
        "measured post-calibration max in 0.24..0.27 mm",
        (0.24 - 1e-9..=0.27 + 1e-9).contains(&max),
        format!("{max:.4} mm"),
    );
    c.within(
        "pre-calibration rms the residual dropped from",
        rho.rms_before_mm,
        0.32,
        0.03,
    );
    c.check(
        "predicted residual rms in 0.12..0.15 mm",
        (0.12..=0.15).contains(&rho.rms_after_mm),
        format!("{:.4} mm", rho.rms_after_mm),
    );
    let agreement = measured - rho.residuals_after;
    println!(
        "  [info] measured-vs-predicted agreement rms {:.4} mm",
        (agreement.norm_squared() / 12.0).sqrt()
    );
    c.finish();
}

#[test]
fn criterion_5_property_suite() {
    let start = Instant::now();
    let mut c = Checks::new("acceptance criterion 5 (structural property suite)");
    let cfg = config();
    let s_default = ConfigurationIndices::default();

    // (a) IK/FK round-trip over 1000 randomized reachable poses
    let mut rng = ChaCha8Rng::seed_from_u64(501);
    let mut worst_roundtrip: f64 = 0.0;
    for _ in 0..1000 {
        let params = ParameterSet::from_deltas(
            &cfg,
            Vector3::from_fn(|_, _| rng.gen_range(-5.0..5.0)),
            Vector3::from_fn(|_, _| rng.gen_range(-5.0..5.0)),
        );
        let p = CartesianPoint::new(
            rng.gen_range(-80.0..80.0),
            rng.gen_range(-80.0..80.0),
            rng.gen_range(-80.0..80.0),
        );
        let rho = inverse_kinematics(&p, &params, &s_default).unwrap();
        let back = direct_kinematics(&rho, &params).unwrap();
        worst_roundtrip = worst_roundtrip.max((back.0 - p.0).amax());
    }
    c.check(
        "(a) IK/FK round-trip < 1e-6 mm over 1000 poses",
        worst_roundtrip < 1e-6,
        format!("worst {worst_roundtrip:.2e} mm"),
    );

    // (b) Jacobian columns vs central finite differences, relative < 1e-5
    let mut worst_fd: f64 = 0.0;
    for _ in 0..40 {
        let params = ParameterSet::from_deltas(
            &cfg,
            Vector3::from_fn(|_, _| rng.gen_range(-3.0..3.0)),
            Vector3::from_fn(|_, _| rng.gen_range(-3.0..3.0)),
        );
        let p = CartesianPoint::new(
            rng.gen_range(-60.0..60.0),
            rng.gen_range(-60.0..60.0),
            rng.gen_range(-60.0..60.0),
        );
        let rho = inverse_kinematics(&p, &params, &s_default).unwrap();
        let jac = jacobian_at(&p, &rho, &params).unwrap();
        for col in 0..6 {
            let h = 1e-6;
            let eval = |sign: f64| {
                let mut q = params;
                if col < 3 {
                    q.joint_offsets[col] += sign * h;
                } else {
                    q.leg_lengths[col - 3] += sign * h;
                }
                direct_kinematics(&rho, &q).unwrap().0
            };
            let fd = (eval(1.0) - eval(-1.0)) / (2.0 * h);
            let jc = jac.matrix.column(col).into_owned();
            worst_fd = worst_fd.max((jc - fd).norm() / fd.norm());
        }
    }
    c.check(
        "(b) Jacobian columns vs finite differences < 1e-5 relative",
        worst_fd < 1e-5,
        format!("worst {worst_fd:.2e}"),
    );

    // (c) closed-form posture Jacobians match the printed structures exactly
    let zero = posture_jacobian(Posture::Zero, &cfg);
    let mut c_exact = true;
    for r in 0..3 {
        for col in 0..3 {
            let expect = if r == col { 1.0 } else { 0.0 };
            c_exact &= zero.matrix[(r, col)] == expect && zero.matrix[(r, col + 3)] == -expect;
        }
    }
    let alpha = (cfg.joint_max / cfg.leg_length).asin();
    let (t, inv_c) = (alpha.tan(), 1.0 / alpha.cos());
    let xmax_expected = [
        [1.0, 0.0, 0.0, -1.0, 0.0, 0.0],
        [t, 1.0, 0.0, -t, -inv_c, 0.0],
        [t, 0.0, 1.0, -t, 0.0, -inv_c],
    ];
    let xmax = posture_jacobian(Posture::Max(Axis::X), &cfg);
    for r in 0..3 {
        for col in 0..6 {
            c_exact &= xmax.matrix[(r, col)] == xmax_expected[r][col];
        }
    }
    c.check(
        "(c) Zero and XMax closed-form Jacobian structures exact",
        c_exact,
        "entrywise equality".into(),
    );

    // (d) noise-free simulate -> nonlinear calibrate recovers the generator
    let mut worst_recovery: f64 = 0.0;
    for trial in 0..5 {
        let truth: [f64; 6] = std::array::from_fn(|_| rng.gen_range(-3.0..3.0));
        let params = ParameterSet::from_deltas(
            &cfg,
            Vector3::new(truth[0], truth[1], truth[2]),
            Vector3::new(truth[3], truth[4], truth[5]),
        );
        let meas = simulate_readings(&params, &cfg, 0.0, trial, 1).unwrap();
        let init = solve_linear(&build_system(&meas, &cfg), ParameterSubset::Full)
            .unwrap()
            .identified;
        let fit = solve_nonlinear(&meas, &cfg, ParameterSubset::Full, &init).unwrap();
        let got = fit.stacked_deltas();
        for i in 0..6 {
            worst_recovery = worst_recovery.max((got[i] - truth[i]).abs());
        }
    }
    c.check(
        "(d) nonlinear recovery of injected parameters < 1e-6 mm",
        worst_recovery < 1e-6,
        format!("worst {worst_recovery:.2e} mm"),
    );

    // (e) linear and nonlinear deviation models agree to first order
    let theta = [0.8, -0.5, 0.3, -0.7, 0.4, 0.9];
    let lin = predict_deviations_linear(
        &ParameterSet::from_deltas(
            &cfg,
            Vector3::new(theta[0], theta[1], theta[2]),
            Vector3::new(theta[3], theta[4], theta[5]),
        ),
        &cfg,
    )
    .values();
    let mut orders: Vec<f64> = Vec::new();
    let mut previous: Option<f64> = None;
    for eps in [1e-1, 1e-2, 1e-3] {
        let scaled = ParameterSet::from_deltas(
            &cfg,
            Vector3::new(theta[0] * eps, theta[1] * eps, theta[2] * eps),
            Vector3::new(theta[3] * eps, theta[4] * eps, theta[5] * eps),
        );
        let exact = orthocal::measurement::predict_deviations_exact(&scaled, &cfg)
            .unwrap()
            .values();
        let err: f64 = exact
            .iter()
            .zip(lin)
            .map(|(e, l)| (e - l * eps).powi(2))
            .sum::<f64>()
            .sqrt();
        if let Some(prev) = previous {
            orders.push((prev / err).log10());
        }
        previous = Some(err);
    }
    let min_order = orders.iter().cloned().fold(f64::INFINITY, f64::min);
    c.check(
        "(e) linear/nonlinear agreement with convergence order >= 1.9",
        min_order >= 1.9,
        format!("observed orders {orders:.2?}"),
    );

    // (f) empirical measurement covariance reproduces the block structure
    let sigma = 0.01;
    let n = 10_000usize;
    let nominal = ParameterSet::nominal(&cfg);
    let mut acc = [[0.0f64; 12]; 12];
    for seed in 0..n {
        let v = simulate_readings(&nominal, &cfg, sigma, 600_000 + seed as u64, 1)
            .unwrap()
            .values();
        for r in 0..12 {
            for col in r..12 {
                acc[r][col] += v[r] * v[col];
            }
        }
    }
    let expected = orthocal::accuracy::correlated_noise_matrix(&NoiseModel::new(sigma, 1));
    let scale = 2.0 * sigma * sigma;
    let mut worst_cov: f64 = 0.0;
    for r in 0..12 {
        for col in r..12 {
            let emp = acc[r][col] / n as f64;
            worst_cov = worst_cov.max((emp - expected[(r, col)]).abs() / scale);
        }
    }
    c.check(
        "(f) empirical deviation covariance matches block structure within 5%",
        worst_cov < 0.05,
        format!("worst scaled deviation {worst_cov:.3}"),
    );

    let elapsed = start.elapsed();
    c.check(
        "total suite runtime < 2 min",
        elapsed.as_secs_f64() < 120.0,
        format!("{:.1} s", elapsed.as_secs_f64()),
    );
    c.finish();
}

#[test]
fn criterion_6_system_cross_check() {
    let mut c = Checks::new("acceptance criterion 6 (coefficient and matrix cross-check)");
    let cfg = config();
    let system = build_system(&datasets::experiment2(), &cfg);
    let k = system.coefficients;

    // independent trigonometric evaluation of the six coefficients
    let a1f = (60.0f64 / 310.25).asin();
    let a2f = (-100.0f64 / 310.25).asin();
    let trig = |alpha: f64| {
        (
            alpha.sin(),
            (0.5 + alpha.sin()) * alpha.tan(),
            (0.5 + alpha.sin()) / alpha.cos() - 0.5,
        )
    };
    let (a1, b1, c1) = trig(a1f);
    let (a2, b2, c2) = trig(a2f);
    for (label, got, expected) in [
        ("a1", k.a1, a1),
        ("b1", k.b1, b1),
        ("c1", k.c1, c1),
        ("a2", k.a2, a2),
        ("b2", k.b2, b2),
        ("c2", k.c2, c2),
    ] {
        c.check(
            &format!("coefficient {label} vs independent trig"),
            (got - expected).abs() <= 1e-9,
            format!("{got:.9} vs {expected:.9}"),
        );
    }
    // published five-decimal anchors (b1 = 0.1366771 is quoted as 0.13669)
    for (label, got, anchor) in [
        ("a1", k.a1, 0.19339),
        ("b1", k.b1, 0.13669),
        ("c1", k.c1, 0.20673),
        ("a2", k.a2, -0.32232),
        ("b2", k.b2, -0.06050),
        ("c2", k.c2, -0.31230),
    ] {
        c.check(
            &format!("coefficient {label} vs published anchor"),
            (got - anchor).abs() <= 2e-5,
            format!("{got:.6} vs {anchor}"),
        );
    }

    // the printed twelve-row matrix, block by block: within each posture
    // block the first row carries (a on dir, b on leg | -c, -b) and the
    // second swaps them; blocks pair (y,x), (z,y), (z,x) legs
    let printed: [[f64; 6]; 12] = [
        [a1, b1, 0.0, -c1, -b1, 0.0],
        [b1, a1, 0.0, -b1, -c1, 0.0],
        [a2, b2, 0.0, -c2, -b2, 0.0],
        [b2, a2, 0.0, -b2, -c2, 0.0],
        [0.0, a1, b1, 0.0, -c1, -b1],
        [0.0, b1, a1, 0.0, -b1, -c1],
        [0.0, a2, b2, 0.0, -c2, -b2],
        [0.0, b2, a2, 0.0, -b2, -c2],
        [a1, 0.0, b1, -c1, 0.0, -b1],
        [b1, 0.0, a1, -b1, 0.0, -c1],
        [a2, 0.0, b2, -c2, 0.0, -b2],
        [b2, 0.0, a2, -b2, 0.0, -c2],
    ];
    let mut worst: f64 = 0.0;
    for r in 0..12 {
        for col in 0..6 {
            worst = worst.max((system.matrix[(r, col)] - printed[r][col]).abs());
        }
    }
    c.check(
        "printed matrix rows match derived rows",
        worst <= 1e-15,
        format!("max abs difference {worst:.2e}"),
    );

    // the derived rows and the canonical row labels stay in lockstep
    let second_row = canonical_index(Axis::X, Axis::Y, PostureSign::Plus).unwrap();
    c.check(
        "canonical row 2 is the (leg x, dir y, +) deviation",
        second_row == 1 && CANONICAL_ORDER[1] == (Axis::X, Axis::Y, PostureSign::Plus),
        "row labelling".into(),
    );

    // documented ill-conditioning: the spectrum splits into two triples
    let sv = system.singular_values(ParameterSubset::Full);
    c.check(
        "singular value gap between top and bottom triples > 5",
        sv[2] / sv[3] > 5.0,
        format!("{:.1}", sv[2] / sv[3]),
    );

    // reduced-subset covariance levels for the record
    let noise = NoiseModel::new(0.01, 1);
    let rho = analytic_covariance_for(&system, &noise, ParameterSubset::OffsetsOnly).unwrap();
    println!(
        "  [info] offsets-only std devs at sigma=0.01: {:.4} mm",
        rho.std_devs_mm[0]
    );
    c.finish();
}
