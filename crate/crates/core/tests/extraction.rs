use linefusion::angle::angle_diff;
use linefusion::ekf::NoiseConfig;
use linefusion::geometry::{extract_lines, line_to_robot_frame, ExtractionParams};
use linefusion::sim::{seeded_rng, simulate_scan, LrfConfig, World};
use linefusion::Pose;

/// Mean squared normalized error `(estimate - truth)^2 / reported variance`
/// of `r` and `psi` for every wall seen from `pose`. A calibrated fit
/// covariance gives 1.
fn normalized_errors(pose: Pose, runs: usize) -> Vec<(usize, f64, f64)> {
    let world = World::default();
    let noise = NoiseConfig::default();
    let params = ExtractionParams::for_noise(noise.lrf_range_sigma, noise.lrf_bearing_sigma);
    let mut rng = seeded_rng(77);
    let truth: Vec<_> = world
        .walls
        .iter()
        .map(|w| line_to_robot_frame(w, &pose).unwrap())
        .collect();
    let mut acc = vec![(0usize, 0.0, 0.0); truth.len()];
    for _ in 0..runs {
        let scan = simulate_scan(&world, &pose, &LrfConfig::default(), &noise, &mut rng).unwrap();
        for l in extract_lines(&scan, &params) {
            if l.support_count < 30 {
                continue;
            }
            let Some(j) = truth
                .iter()
                .position(|t| (t.r_hat - l.r).abs() < 0.1 && angle_diff(t.psi_hat, l.psi).abs() < 0.05)
            else {
                continue;
            };
            acc[j].0 += 1;
            acc[j].1 += (l.r - truth[j].r_hat).powi(2) / l.cov[(0, 0)];
            acc[j].2 += angle_diff(l.psi, truth[j].psi_hat).powi(2) / l.cov[(1, 1)];
        }
    }
    acc.into_iter()
        .filter(|a| a.0 > runs / 2)
        .map(|(n, r, p)| (n, r / n as f64, p / n as f64))
        .collect()
}

#[test]
fn fit_covariance_matches_monte_carlo_spread() {
    for pose in [Pose::new(4.0, 3.0, 0.0), Pose::new(2.0, 1.5, 0.7)] {
        let stats = normalized_errors(pose, 1000);
        assert!(stats.len() >= 2, "{stats:?}");
        for (n, r, p) in stats {
            // Each mean has a sampling sd of about sqrt(2 / n) ~ 0.045.
            assert!((0.8..1.25).contains(&r), "r: {r} over {n} lines at {pose:?}");
            assert!((0.8..1.25).contains(&p), "psi: {p} over {n} lines at {pose:?}");
        }
    }
}
