use nalgebra::Vector3;
use proptest::prelude::*;
use std::path::Path;
use stcalib::geometry::Rotation;
use stcalib::init::SpatiotemporalParams;
use stcalib::io::{detection_files, DetectionFile};
use stcalib::simulator::{evaluate, generate, DropoutModel, ScenarioSpec};
use stcalib::solver::HuberLoss;
use stcalib::spline::{cumulative_basis, PositionSpline, RotationSpline};

fn vec3() -> impl Strategy<Value = Vector3<f64>> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

fn rotation(scale: f64) -> impl Strategy<Value = Rotation> {
    (-scale..scale, -scale..scale, -scale..scale).prop_map(|(x, y, z)| Rotation::exp(&Vector3::new(x, y, z)))
}

proptest! {
    #[test]
    fn cumulative_weights_are_monotone_in_unit_interval(u in 0.0f64..1.0) {
        let [a, b, c] = cumulative_basis(u).unwrap();
        prop_assert!((0.0..=1.0).contains(&c) && c <= b && b <= a && a <= 1.0);
    }

    #[test]
    fn constant_position_spline_is_constant(p in vec3(), frac in 0.0f64..1.0, dt in 0.01f64..1.0) {
        let s = PositionSpline::new(0.0, dt, vec![p; 6]).unwrap();
        let (t0, t1) = s.valid_interval();
        let t = t0 + frac * (t1 - t0) * 0.999;
        prop_assert!((s.eval(t).unwrap() - p).amax() < 1e-14);
        prop_assert!(s.velocity(t).unwrap().amax() < 1e-12 / dt);
    }

    #[test]
    fn position_spline_is_affine_invariant(pts in prop::collection::vec(vec3(), 4..9), shift in vec3(), frac in 0.0f64..1.0) {
        let a = PositionSpline::new(1.0, 0.1, pts.clone()).unwrap();
        let b = PositionSpline::new(1.0, 0.1, pts.iter().map(|p| p + shift).collect()).unwrap();
        let (t0, t1) = a.valid_interval();
        let t = t0 + frac * (t1 - t0) * 0.999;
        prop_assert!((b.eval(t).unwrap() - a.eval(t).unwrap() - shift).amax() < 1e-13);
    }

    #[test]
    fn rotation_spline_is_left_invariant(
        rots in prop::collection::vec(rotation(0.6), 4..9),
        g in rotation(3.0),
        frac in 0.0f64..1.0,
    ) {
        let chained: Vec<Rotation> = rots.iter().scan(Rotation::identity(), |acc, r| {
            *acc = acc.compose(r);
            Some(*acc)
        }).collect();
        let a = RotationSpline::new(0.0, 0.05, chained.clone()).unwrap();
        let b = RotationSpline::new(0.0, 0.05, chained.iter().map(|r| g.compose(r)).collect()).unwrap();
        let (t0, t1) = a.valid_interval();
        let t = t0 + frac * (t1 - t0) * 0.999;
        prop_assert!(b.eval(t).unwrap().angle_to(&g.compose(&a.eval(t).unwrap())) < 1e-12);
        // Body-frame angular velocity is unaffected by a left factor.
        let wa = a.angular_velocity(t).unwrap();
        prop_assert!((b.angular_velocity(t).unwrap() - wa).norm() < 1e-9 * wa.norm().max(1.0));
    }

    #[test]
    fn huber_is_continuous_and_sub_quadratic(delta in 0.01f64..10.0, s in 0.0f64..1000.0) {
        let h = HuberLoss::new(delta).unwrap();
        let (rho, d) = h.evaluate(s);
        prop_assert!(rho <= s * (1.0 + 1e-15) && d > 0.0 && d <= 1.0);
        let eps = 1e-9 * delta * delta;
        let below = h.evaluate(delta * delta - eps).0;
        let above = h.evaluate(delta * delta + eps).0;
        prop_assert!((above - below).abs() < 4.0 * eps);
    }

    #[test]
    fn evaluating_truth_against_itself_is_zero(euler in prop::array::uniform3(-10.0f64..10.0), t in vec3(), dt in -0.1f64..0.1) {
        let p = SpatiotemporalParams {
            rotation: Rotation::from_euler_xyz(euler[0].to_radians(), euler[1].to_radians(), euler[2].to_radians()),
            translation: t,
            time_offset: dt,
        };
        let m = evaluate(&p, &p);
        prop_assert!(m.rotation_deg < 1e-6 && m.offset_ms == 0.0);
        prop_assert!(m.translation_cm.iter().all(|v| *v == 0.0));
        let back = p.inverse().inverse();
        prop_assert!(back.rotation.angle_to(&p.rotation) < 1e-12 && (back.translation - t).amax() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn detection_files_round_trip_bit_exactly(seed in 0u64..1000, rate in 0.0f64..0.3, spurious in 0usize..3) {
        let spec = ScenarioSpec {
            duration: 0.5,
            seed,
            dropout: DropoutModel { rate, spurious_per_frame: spurious, ..Default::default() },
            ..Default::default()
        };
        let bundle = generate(&spec).unwrap();
        for file in detection_files(&bundle) {
            let text = file.to_ndjson();
            let parsed = DetectionFile::parse(&text, Path::new("mem.ndjson")).unwrap();
            prop_assert_eq!(&parsed, &file);
            prop_assert_eq!(parsed.to_ndjson(), text);
        }
    }
}
