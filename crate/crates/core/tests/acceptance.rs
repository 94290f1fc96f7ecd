//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line to
//! the real stdout (uncaptured) and fails its test when the criterion fails.
//! The criteria run one at a time so their runtime limits are measured
//! without interference.

use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use linefusion::angle::angle_diff;
use linefusion::ekf::{
    predict, predict_measurements, update, EstimatorMode, MeasurementBundle, NoiseConfig, StateEstimate,
};
use linefusion::geometry::{line_to_robot_frame, Association, LineNF, LinePair};
use linefusion::harness::{
    compare_modes, reference_path, run_estimator, run_experiment, wall_follow_scenario, HarnessConfig,
};
use linefusion::kinematics::{jacobian_noise, jacobian_state, motion_model, wheel_to_body};
use linefusion::sim::{
    beam_bearings, raycast, run_scenario, seeded_rng, simulate_compass, simulate_encoders, simulate_scan, LrfConfig,
    World,
};
use linefusion::{Pose, RobotGeometry, WheelRates};
use nalgebra::{DMatrix, DVector, Matrix3, Point2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

static SERIAL: Mutex<()> = Mutex::new(());

fn report(id: u32, name: &str, ok: bool, detail: &str) {
    let line = format!(
        "acceptance {id} {name}: {} ({detail})\n",
        if ok { "PASS" } else { "FAIL" }
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(ok, "criterion {id} failed: {detail}");
}

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn rel_err(a: &DMatrix<f64>, fd: &DMatrix<f64>) -> f64 {
    (a - fd).norm() / fd.norm()
}

fn pose_diff(a: &Pose, b: &Pose) -> [f64; 3] {
    [a.x - b.x, a.y - b.y, angle_diff(a.theta, b.theta)]
}

fn single_line_bundle_map(pose: &Pose, line: &LineNF) -> Vec<f64> {
    let p = line_to_robot_frame(line, pose).unwrap();
    vec![p.r_hat, p.psi_hat, pose.theta]
}

#[test]
fn criterion_1_jacobians_match_finite_differences() {
    let _g = serial();
    let start = Instant::now();
    let geom = RobotGeometry::default();
    let dt = 0.1;
    let h = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_a, mut worst_w, mut worst_h) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let pose = Pose::new(
            rng.random_range(-10.0..10.0),
            rng.random_range(-10.0..10.0),
            rng.random_range(-PI..PI),
        );
        let rates = WheelRates::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
        let odo = wheel_to_body(rates, &geom, dt);

        let a = jacobian_state(&pose, odo);
        let mut fd = DMatrix::zeros(3, 3);
        for c in 0..3 {
            let (mut p, mut m) = (pose.to_vector(), pose.to_vector());
            p[c] += h;
            m[c] -= h;
            let d = pose_diff(
                &motion_model(
                    &Pose {
                        x: p[0],
                        y: p[1],
                        theta: p[2],
                    },
                    rates,
                    &geom,
                    dt,
                ),
                &motion_model(
                    &Pose {
                        x: m[0],
                        y: m[1],
                        theta: m[2],
                    },
                    rates,
                    &geom,
                    dt,
                ),
            );
            for r in 0..3 {
                fd[(r, c)] = d[r] / (2.0 * h);
            }
        }
        worst_a = worst_a.max(rel_err(&DMatrix::from_column_slice(3, 3, a.as_slice()), &fd));

        let w = jacobian_noise(&pose, odo, &geom, dt);
        let mut fd = DMatrix::zeros(3, 2);
        for c in 0..2 {
            let bump = |s: f64| {
                let mut q = rates;
                if c == 0 {
                    q.omega_r += s
                } else {
                    q.omega_l += s
                }
                motion_model(&pose, q, &geom, dt)
            };
            let d = pose_diff(&bump(h), &bump(-h));
            for r in 0..3 {
                fd[(r, c)] = d[r] / (2.0 * h);
            }
        }
        worst_w = worst_w.max(rel_err(&DMatrix::from_column_slice(3, 2, w.as_slice()), &fd));

        // A random line kept well away from the pose.
        let line = loop {
            let rho = rng.random_range(0.0..15.0);
            let beta = rng.random_range(-PI..PI);
            let l = LineNF::from_params_snapped(rho, beta, Point2::origin(), Point2::new(1.0, 0.0)).unwrap();
            if line_to_robot_frame(&l, &pose).unwrap().r_hat > 0.1 {
                break l;
            }
        };
        let assoc = Association {
            pairs: vec![LinePair {
                local: 0,
                global: 0,
                mahalanobis_sq: 0.0,
            }],
        };
        let (_, hm) = predict_measurements(&StateEstimate::certain(pose), &[line], &assoc).unwrap();
        let mut fd = DMatrix::zeros(3, 3);
        for c in 0..3 {
            let (mut p, mut m) = (pose.to_vector(), pose.to_vector());
            p[c] += h;
            m[c] -= h;
            let zp = single_line_bundle_map(
                &Pose {
                    x: p[0],
                    y: p[1],
                    theta: p[2],
                },
                &line,
            );
            let zm = single_line_bundle_map(
                &Pose {
                    x: m[0],
                    y: m[1],
                    theta: m[2],
                },
                &line,
            );
            fd[(0, c)] = (zp[0] - zm[0]) / (2.0 * h);
            fd[(1, c)] = angle_diff(zp[1], zm[1]) / (2.0 * h);
            fd[(2, c)] = angle_diff(zp[2], zm[2]) / (2.0 * h);
        }
        worst_h = worst_h.max(rel_err(&hm, &fd));
    }
    let elapsed = start.elapsed();
    let ok = worst_a <= 1e-6 && worst_w <= 1e-6 && worst_h <= 1e-6 && elapsed < Duration::from_secs(5);
    report(
        1,
        "jacobians",
        ok,
        &format!(
            "max rel err A {worst_a:.1e}, W {worst_w:.1e}, H {worst_h:.1e}; {:.2} s",
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_2_zero_noise_consistency() {
    let _g = serial();
    let mut cfg = HarnessConfig::default();
    cfg.sim.noise = NoiseConfig::zero();
    cfg.sim.duration = 600;
    let world = World::default();
    let path = reference_path(&cfg.experiment, &world, &cfg.sim).unwrap();
    let log = run_scenario(&cfg.sim, &world, &path).unwrap();
    let filter = linefusion::ekf::FilterConfig::with_mode(EstimatorMode::EkfFull);
    let run = run_estimator(
        &log,
        &world.walls,
        &cfg.sim,
        &filter,
        StateEstimate::certain(cfg.sim.initial_pose),
    );
    let worst = log
        .steps
        .iter()
        .zip(&run.estimates)
        .map(|(s, e)| pose_diff(e, &s.true_pose).iter().fold(0.0f64, |m, v| m.max(v.abs())))
        .fold(0.0f64, f64::max);
    let ok = log.len() == 600 && !log.truncated && worst <= 1e-9;
    report(
        2,
        "zero-noise consistency",
        ok,
        &format!("{} steps, max error {worst:.1e}", log.len()),
    );
}

#[test]
fn criterion_3_covariance_health() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let geom = RobotGeometry::default();
    let map = World::default().walls;
    let mut state = StateEstimate::new(
        Pose::new(4.0, 3.0, 0.0),
        Matrix3::from_diagonal(&[0.01, 0.01, 0.001].into()),
    );
    let (mut worst_asym, mut worst_eig, mut trace_violations, mut accepted) = (0.0f64, f64::INFINITY, 0, 0);
    let mut check = |s: &StateEstimate| {
        worst_asym = worst_asym.max(s.asymmetry());
        worst_eig = worst_eig.min(s.min_eigenvalue());
    };
    for _ in 0..10_000 {
        // Keep the mean inside the room; the covariance carries over.
        state.mean = Pose::new(
            rng.random_range(0.5..7.5),
            rng.random_range(0.5..5.5),
            rng.random_range(-PI..PI),
        );
        let rates = WheelRates::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
        state = predict(&state, rates, &geom, 0.1, 0.01);
        check(&state);

        let n_lines = rng.random_range(0..=4usize);
        let mut globals: Vec<usize> = (0..4).collect();
        for i in (1..4).rev() {
            globals.swap(i, rng.random_range(0..=i));
        }
        let assoc = Association {
            pairs: globals[..n_lines]
                .iter()
                .enumerate()
                .map(|(local, &global)| LinePair {
                    local,
                    global,
                    mahalanobis_sq: 0.0,
                })
                .collect(),
        };
        let (z_hat, hm) = predict_measurements(&state, &map, &assoc).unwrap();
        let m = z_hat.len();
        let r_diag: Vec<f64> = (0..m).map(|_| 10f64.powf(rng.random_range(-7.0..-2.0))).collect();
        let z = DVector::from_iterator(
            m,
            (0..m).map(|i| {
                let n: f64 = StandardNormal.sample(&mut rng);
                z_hat[i] + r_diag[i].sqrt() * n
            }),
        );
        let bundle = MeasurementBundle::new(
            z,
            z_hat,
            hm,
            DMatrix::from_diagonal(&DVector::from_vec(r_diag)),
            n_lines,
            true,
        )
        .unwrap();
        let bundle = if rng.random_bool(0.5) && n_lines > 0 {
            bundle.without_compass().unwrap()
        } else {
            bundle
        };
        if let Ok(post) = update(&state, &bundle) {
            accepted += 1;
            if post.trace() > state.trace() {
                trace_violations += 1;
            }
            check(&post);
            state = post;
        }
    }
    let ok = worst_asym <= 1e-9 && worst_eig >= -1e-12 && trace_violations == 0 && accepted > 9000;
    report(
        3,
        "covariance health",
        ok,
        &format!(
            "max asymmetry {worst_asym:.1e}, min eigenvalue {worst_eig:.1e}, trace increases {trace_violations}, {accepted} updates accepted"
        ),
    );
}

#[test]
fn criterion_4_fusion_ordering() {
    let _g = serial();
    let start = Instant::now();
    let mut cfg = HarnessConfig::default();
    cfg.experiment.monte_carlo_runs = 100;
    let world = World::default();
    let path = reference_path(&cfg.experiment, &world, &cfg.sim).unwrap();
    let cmp = compare_modes(&cfg, &world, &path).unwrap();
    let elapsed = start.elapsed();
    use EstimatorMode::*;
    let full_lrf = cmp.wins(EkfFull, EkfLrf);
    let full_compass = cmp.wins(EkfFull, EkfCompass);
    let compass_odom = cmp.wins(EkfCompass, Odometry);
    let means_ok = cmp.mean(EkfFull) < cmp.mean(EkfLrf)
        && cmp.mean(EkfFull) < cmp.mean(EkfCompass)
        && cmp.mean(EkfCompass) < cmp.mean(Odometry);
    let ok =
        means_ok && full_lrf >= 90 && full_compass >= 90 && compass_odom >= 90 && elapsed < Duration::from_secs(60);
    report(
        4,
        "fusion ordering",
        ok,
        &format!(
            "mean final error odom {:.4}, compass {:.4}, lrf {:.5}, full {:.5}; wins full<lrf {full_lrf}/100, full<compass {full_compass}/100, compass<odom {compass_odom}/100; {:.1} s",
            cmp.mean(Odometry),
            cmp.mean(EkfCompass),
            cmp.mean(EkfLrf),
            cmp.mean(EkfFull),
            elapsed.as_secs_f64()
        ),
    );
}

fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
}

#[test]
fn criterion_5_simulator_calibration() {
    let _g = serial();
    let n = 100_000;
    let noise = NoiseConfig::default();
    let world = World::default();

    let mut rng = seeded_rng(51);
    let enc: Vec<f64> = (0..n)
        .map(|_| simulate_encoders(WheelRates::new(2.0, 2.0), noise.delta, &mut rng).omega_l)
        .collect();
    let enc_ratio = variance(&enc) / (noise.delta * 4.0);

    let comp: Vec<f64> = (0..n)
        .map(|_| simulate_compass(1.0, noise.compass_var, &mut rng) - 1.0)
        .collect();
    let comp_ratio = variance(&comp) / noise.compass_var;

    let beam = LrfConfig {
        fov: 1e-3,
        angular_step: 1.0,
        ..LrfConfig::default()
    };
    assert_eq!(beam_bearings(&beam).len(), 1);
    let range_only = NoiseConfig {
        lrf_bearing_sigma: 0.0,
        ..noise
    };
    let pose = Pose::new(4.0, 3.0, 0.0);
    let rng_err: Vec<f64> = (0..n)
        .map(|_| {
            simulate_scan(&world, &pose, &beam, &range_only, &mut rng)
                .unwrap()
                .range(0)
                .unwrap()
                - 4.0
        })
        .collect();
    let range_ratio = variance(&rng_err) / noise.lrf_range_sigma.powi(2);

    // Bearing jitter seen through the range slope of an oblique wall.
    let bearing_only = NoiseConfig {
        lrf_range_sigma: 0.0,
        ..noise
    };
    let th: f64 = 0.5;
    let oblique = Pose::new(4.0, 3.0, th);
    let slope = 4.0 * th.sin() / th.cos().powi(2);
    let b: Vec<f64> = (0..n)
        .map(|_| {
            simulate_scan(&world, &oblique, &beam, &bearing_only, &mut rng)
                .unwrap()
                .range(0)
                .unwrap()
                / slope
        })
        .collect();
    let bearing_ratio = variance(&b) / noise.lrf_bearing_sigma.powi(2);

    let mut worst_ray = 0.0f64;
    let lrf = LrfConfig::default();
    for _ in 0..200 {
        let (x, y, t) = (
            rng.random_range(0.05..7.95),
            rng.random_range(0.05..5.95),
            rng.random_range(-PI..PI),
        );
        let pose = Pose::new(x, y, t);
        let scan = raycast(&world, &pose, &lrf).unwrap();
        for (i, bearing) in scan.bearings().iter().enumerate() {
            let (s, c) = (t + bearing).sin_cos();
            let mut d = f64::INFINITY;
            if c > 0.0 {
                d = d.min((8.0 - x) / c)
            } else if c < 0.0 {
                d = d.min(-x / c)
            }
            if s > 0.0 {
                d = d.min((6.0 - y) / s)
            } else if s < 0.0 {
                d = d.min(-y / s)
            }
            worst_ray = worst_ray.max((scan.range(i).unwrap() - d).abs());
        }
    }

    let within = |r: f64| (r - 1.0).abs() <= 0.05;
    let ok =
        within(enc_ratio) && within(comp_ratio) && within(range_ratio) && within(bearing_ratio) && worst_ray <= 1e-9;
    report(
        5,
        "simulator calibration",
        ok,
        &format!(
            "variance ratios encoder {enc_ratio:.4}, compass {comp_ratio:.4}, range {range_ratio:.4}, bearing {bearing_ratio:.4}; raycast max error {worst_ray:.1e}"
        ),
    );
}

#[test]
fn criterion_6_wall_follow_round_trip() {
    let _g = serial();
    let cfg = HarnessConfig::default();
    let world = World::default();
    let rep = wall_follow_scenario(&cfg, &world, None).unwrap();
    // Every true wall is recovered by exactly one first-scan line within 3 sigma.
    let mut recovered = 0;
    let mut worst = 0.0f64;
    for w in &world.walls {
        let t = line_to_robot_frame(w, &rep.start).unwrap();
        let hits: Vec<f64> = rep
            .first_scan_lines
            .iter()
            .map(|l| {
                let zr = (l.r - t.r_hat).abs() / l.cov[(0, 0)].sqrt();
                let zp = angle_diff(l.psi, t.psi_hat).abs() / l.cov[(1, 1)].sqrt();
                zr.max(zp)
            })
            .filter(|z| *z <= 3.0)
            .collect();
        if hits.len() == 1 {
            recovered += 1;
            worst = worst.max(hits[0]);
        }
    }
    let ok = rep.map.len() == 4
        && recovered == 4
        && rep.feedback == EstimatorMode::EkfFull
        && rep.completed
        && rep.final_distance <= 0.3;
    report(
        6,
        "wall-follow round trip",
        ok,
        &format!(
            "{} map lines, {recovered}/4 walls within 3 sigma (worst {worst:.2}), feedback {}, completed {} after {} steps, final-to-start {:.3} m",
            rep.map.len(),
            rep.feedback,
            rep.completed,
            rep.truth.len(),
            rep.final_distance
        ),
    );
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn criterion_7_determinism() {
    let _g = serial();
    let mut cfg = HarnessConfig::default();
    cfg.experiment.monte_carlo_runs = 4;
    cfg.experiment.seed = 1234;
    cfg.experiment.write_logs = true;
    let world = World::default();
    let path = reference_path(&cfg.experiment, &world, &cfg.sim).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let mut trees = Vec::new();
    for name in ["first", "second"] {
        let root = tmp.path().join(name);
        for mode in EstimatorMode::ALL {
            let mut c = cfg.clone();
            c.experiment.mode = mode;
            run_experiment(&c, &world, &path, Some(&root.join(mode.as_str()))).unwrap();
        }
        wall_follow_scenario(&cfg, &world, Some(&root.join("wallfollow"))).unwrap();
        trees.push(root);
    }
    let names = files_under(&trees[0]);
    let same_names = names == files_under(&trees[1]);
    let differing: Vec<_> = names
        .iter()
        .filter(|f| std::fs::read(trees[0].join(f)).ok() != std::fs::read(trees[1].join(f)).ok())
        .collect();
    let ok = same_names && differing.is_empty() && names.len() > 20;
    report(
        7,
        "determinism",
        ok,
        &format!("{} files compared, {} differ", names.len(), differing.len()),
    );
}
