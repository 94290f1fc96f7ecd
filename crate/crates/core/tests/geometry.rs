use std::f64::consts::{FRAC_PI_2, PI};

use linefusion::angle::{angle_diff, wrap_angle};
use linefusion::geometry::{
    extract_lines, format_map, line_to_robot_frame, match_lines, normalize_line, parse_map, robot_line_to_global,
    ExtractionParams, LineNF, LocalLine, PredictedLine,
};
use linefusion::sim::{raycast, LrfConfig, World};
use linefusion::Pose;
use nalgebra::{Matrix2, Point2};
use proptest::prelude::*;

fn line_strategy() -> impl Strategy<Value = (f64, f64)> {
    (0.0..20.0f64, -PI..PI)
}

proptest! {
    #[test]
    fn normalize_is_idempotent(rho in -20.0..20.0f64, beta in -10.0..10.0f64) {
        let (r1, b1) = normalize_line(rho, beta).unwrap();
        prop_assert!(r1 >= 0.0 && b1 > -PI && b1 <= PI);
        let (r2, b2) = normalize_line(r1, b1).unwrap();
        prop_assert_eq!((r1, b1), (r2, b2));
        // Same set of points: any point on the input line lies on the output.
        let p = (rho * beta.cos(), rho * beta.sin());
        prop_assert!((p.0 * b1.cos() + p.1 * b1.sin() - r1).abs() < 1e-9);
    }

    #[test]
    fn robot_frame_round_trip((rho, beta) in line_strategy(), x in -5.0..5.0f64, y in -5.0..5.0f64, th in -PI..PI) {
        let line = LineNF::from_params_snapped(rho, beta, Point2::origin(), Point2::new(1.0, 1.0)).unwrap();
        let pose = Pose::new(x, y, th);
        let Ok(pred) = line_to_robot_frame(&line, &pose) else {
            return Ok(());
        };
        prop_assume!(pred.r_hat > 1e-6);
        let (r2, b2) = robot_line_to_global(pred.r_hat, pred.psi_hat, &pose).unwrap();
        prop_assert!((r2 - line.rho).abs() < 1e-9, "rho {} vs {}", r2, line.rho);
        // At rho = 0 the direction of the normal is ambiguous up to pi.
        let db = angle_diff(b2, line.beta);
        prop_assert!(db.abs() < 1e-9 || (line.rho < 1e-9 && (db.abs() - PI).abs() < 1e-9));
    }

    #[test]
    fn matching_ignores_input_order(shift in 0usize..4, seed_r in 0.0..0.02f64) {
        let preds: Vec<PredictedLine> = (0..4)
            .map(|j| PredictedLine {
                global_index: j,
                r_hat: 1.0 + j as f64,
                psi_hat: wrap_angle(j as f64 * FRAC_PI_2),
                cov: Matrix2::from_diagonal(&[1e-4, 1e-4].into()),
            })
            .collect();
        let locals: Vec<LocalLine> = (0..4)
            .map(|j| LocalLine::from_params(1.0 + j as f64 + seed_r, wrap_angle(j as f64 * FRAC_PI_2), Matrix2::from_diagonal(&[1e-4, 1e-4].into())))
            .collect();
        let a = match_lines(&locals, &preds, 9.21);
        let mut rotated = preds.clone();
        rotated.rotate_left(shift);
        let b = match_lines(&locals, &rotated, 9.21);
        prop_assert_eq!(a.by_global_index(), b.by_global_index());
        prop_assert_eq!(a.len(), 4);
    }

    #[test]
    fn noiseless_room_scan_recovers_walls(x in 1.0..7.0f64, y in 1.0..5.0f64, th in -PI..PI) {
        let world = World::default();
        let pose = Pose::new(x, y, th);
        let scan = raycast(&world, &pose, &LrfConfig::default()).unwrap();
        let lines = extract_lines(&scan, &ExtractionParams::default());
        prop_assert!(!lines.is_empty());
        for l in &lines {
            // Every extracted line is one of the walls as seen from the pose.
            let hit = world.walls.iter().any(|w| {
                let p = line_to_robot_frame(w, &pose).unwrap();
                (p.r_hat - l.r).abs() < 1e-6 && angle_diff(p.psi_hat, l.psi).abs() < 1e-6
            });
            prop_assert!(hit, "line r={} psi={} at {:?}", l.r, l.psi, pose);
        }
    }
}

#[test]
fn map_text_round_trip_is_exact() {
    let world = World::rectangle(8.0, 6.0).unwrap();
    let mut walls = world.walls.clone();
    walls.push(LineNF::from_segment(Point2::new(1.0, 1.0), Point2::new(2.5, 3.7)).unwrap());
    let text = format_map(&walls);
    let back = parse_map(&text, "mem".as_ref()).unwrap();
    assert_eq!(back, walls);
    assert_eq!(format_map(&back), text);
}

#[test]
fn map_parse_reports_the_line() {
    let err = parse_map("# header\n1 0 1 0 1 5\n2 0 5 0\n", "m.txt".as_ref()).unwrap_err();
    assert!(err.to_string().contains("m.txt:3"), "{err}");
}
